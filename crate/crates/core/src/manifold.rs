//! Riemannian gradient descent for `min c̃ᵀB̃c̃ + vᵀc̃` over the unit sphere.
//!
//! This is the coefficient subproblem of the harmonic synthesis model once the
//! isotropic coefficient is pinned by the ρ-split.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CMat, CVec, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SphereOptions {
    pub max_iters: usize,
    /// Stop once `‖grad‖ ≤ tol · (2‖B̃‖_F + ‖v‖)`.
    pub tol: f64,
    /// Number of starts; the first is the warm start, the rest are random.
    pub restarts: usize,
    pub armijo_c1: f64,
    pub contraction: f64,
    pub max_backtracks: usize,
    pub seed: u64,
}

impl Default for SphereOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-4,
            restarts: 1,
            armijo_c1: 1e-4,
            contraction: 0.5,
            max_backtracks: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereProblem {
    b: DMatrix<f64>,
    v: DVector<f64>,
    x0: DVector<f64>,
}

impl SphereProblem {
    pub fn new(b: DMatrix<f64>, v: DVector<f64>, x0: DVector<f64>) -> Result<Self> {
        let n = x0.len();
        if b.shape() != (n, n) || v.len() != n {
            return Err(Error::Config(format!(
                "sphere problem dimensions: B {:?}, v {}, x0 {}",
                b.shape(),
                v.len(),
                n
            )));
        }
        if n == 0 || (x0.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("initial point must have unit norm".into()));
        }
        Ok(Self { b, v, x0 })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.b * x)) + self.v.dot(x)
    }
}

/// Reduced real problem for the non-isotropic coefficients.
///
/// With `c = [2√(ρπ), 2√((1−ρ)π) c̃]` and `f` fixed, the per-antenna objective
/// `‖f‖² cᵀBc + 2Re(fᴴ R c)` (with `R = Q − D`) equals
/// `c̃ᵀB̃c̃ + (v₁ + v₂)ᵀc̃` plus a constant.
pub fn build_reduced_problem(
    b: &CMat,
    r: &CMat,
    f: &CVec,
    rho: f64,
    x0: DVector<f64>,
) -> Result<SphereProblem> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("ρ = {rho} outside (0, 1)")));
    }
    let t = b.nrows();
    if t < 2 || b.ncols() != t || r.ncols() != t || r.nrows() != f.len() {
        return Err(Error::Config("reduced problem dimension mismatch".into()));
    }
    let pi = std::f64::consts::PI;
    let f2 = f.norm_squared();
    let m = t - 1;
    let bt = DMatrix::from_fn(m, m, |i, j| 4.0 * pi * (1.0 - rho) * f2 * b[(i + 1, j + 1)].re);
    let fr = f.adjoint() * r;
    let k1 = 4.0 * ((1.0 - rho) * pi).sqrt();
    let k2 = 8.0 * pi * (rho * (1.0 - rho)).sqrt() * f2;
    let v = DVector::from_fn(m, |i, _| k1 * fr[i + 1].re + k2 * b[(i + 1, 0)].re);
    SphereProblem::new(bt, v, x0)
}

/// Euclidean gradient projected onto the tangent space at `x`.
pub fn riemannian_gradient(x: &DVector<f64>, b: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let ge = b * x + b.tr_mul(x) + v;
    let radial = x.dot(&ge);
    ge - x * radial
}

/// `(x − εg)/‖x − εg‖`, or `None` when the step lands on the origin.
pub fn retract_step(x: &DVector<f64>, g: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let y = x - g * eps;
    let n = y.norm();
    (n > 0.0 && n.is_finite()).then(|| y / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn descend(p: &SphereProblem, start: DVector<f64>, opts: &SphereOptions) -> SphereSolution {
    let scale = 2.0 * p.b.norm() + p.v.norm();
    let eps0 = 1.0 / (p.b.norm() + p.v.norm() + 1.0);
    let mut x = start;
    let mut fx = p.objective(&x);
    for it in 0..opts.max_iters {
        let g = riemannian_gradient(&x, &p.b, &p.v);
        let g2 = g.norm_squared();
        if g2.sqrt() <= opts.tol * scale {
            return SphereSolution {
                x,
                objective: fx,
                iterations: it,
                converged: true,
            };
        }
        let mut eps = eps0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            if let Some(y) = retract_step(&x, &g, eps) {
                let fy = p.objective(&y);
                if fy <= fx - opts.armijo_c1 * eps * g2 {
                    accepted = Some((y, fy));
                    break;
                }
            }
            eps *= opts.contraction;
        }
        match accepted {
            Some((y, fy)) => {
                x = y;
                fx = fy;
            }
            None => {
                return SphereSolution {
                    x,
                    objective: fx,
                    iterations: it,
                    converged: false,
                }
            }
        }
    }
    let g = riemannian_gradient(&x, &p.b, &p.v);
    SphereSolution {
        converged: g.norm() <= opts.tol * scale,
        x,
        objective: fx,
        iterations: opts.max_iters,
    }
}

/// Armijo gradient descent from the warm start plus `restarts − 1` random
/// starts; returns the best final iterate.
pub fn solve_sphere(p: &SphereProblem, opts: &SphereOptions) -> SphereSolution {
    let mut best = descend(p, p.x0.clone(), opts);
    if opts.restarts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 1..opts.restarts {
            let start = loop {
                let z = DVector::from_fn(p.dim(), |_, _| StandardNormal.sample(&mut rng));
                let n: f64 = z.norm();
                if n > 1e-12 {
                    break z / n;
                }
            };
            let sol = descend(p, start, opts);
            if sol.objective < best.objective {
                best = sol;
            }
        }
    }
    best
}
