//! Real spherical harmonics, quadrature on the sphere, and pattern
//! synthesis/decomposition in the truncated harmonic basis.
//!
//! Harmonics are indexed either by `(degree u, order q)` with `|q| <= u` or by
//! the 1-based flat index `t = u^2 + u + q + 1`. A truncation degree `U` keeps
//! `T = (U + 1)^2` coefficients.
//!
//! The associated Legendre functions carry no Condon–Shortley phase. The real
//! basis is
//!
//! ```text
//! Y_u^q  = sqrt(2) N_u^q  P_u^q(cos θ) cos(q φ)      q > 0
//! Y_u^q  = sqrt(2) N_u^|q| P_u^|q|(cos θ) sin(|q| φ)  q < 0
//! Y_u^0  = N_u^0 P_u^0(cos θ)
//! N_u^q  = sqrt((2u + 1) / 4π · (u - q)! / (u + q)!)
//! ```
//!
//! and is orthonormal under `∮ · sinθ dθ dφ`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DVector;

use crate::{Error, Result};

/// `(degree, order)` pair of a real spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    pub degree: usize,
    pub order: i64,
}

impl ShIndex {
    pub fn new(degree: usize, order: i64) -> Result<Self> {
        if order.unsigned_abs() as usize > degree {
            return Err(Error::Domain(format!(
                "order {order} exceeds degree {degree}"
            )));
        }
        Ok(Self { degree, order })
    }

    /// 1-based flat index `u^2 + u + q + 1`.
    pub fn flat(self) -> usize {
        let u = self.degree as i64;
        (u * u + u + self.order + 1) as usize
    }

    pub fn from_flat(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Domain("flat harmonic index starts at 1".into()));
        }
        let mut u = ((t - 1) as f64).sqrt() as usize;
        // Guard the float sqrt against off-by-one at perfect squares.
        while u * u > t - 1 {
            u -= 1;
        }
        while (u + 1) * (u + 1) <= t - 1 {
            u += 1;
        }
        let order = (t - 1) as i64 - (u * u + u) as i64;
        Ok(Self { degree: u, order })
    }
}

/// Number of coefficients `T = (U + 1)^2` kept at truncation degree `U`.
pub fn coefficient_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Truncation degree for a coefficient count, if the count is a perfect square.
pub fn degree_for_count(count: usize) -> Option<usize> {
    let root = (count as f64).sqrt().round() as usize;
    (root >= 1 && root * root == count).then(|| root - 1)
}

/// Unnormalized associated Legendre function `P_u^q(x)` for `0 <= q <= u`,
/// without the Condon–Shortley phase.
pub fn assoc_legendre(degree: usize, order: usize, x: f64) -> Result<f64> {
    if order > degree {
        return Err(Error::Domain(format!(
            "associated Legendre order {order} exceeds degree {degree}"
        )));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "associated Legendre argument {x} outside [-1, 1]"
        )));
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    // P_q^q = (2q - 1)!! s^q
    let mut pqq = 1.0;
    for i in 0..order {
        pqq *= (2 * i + 1) as f64 * s;
    }
    if degree == order {
        return Ok(pqq);
    }
    let mut prev = pqq;
    let mut cur = x * (2 * order + 1) as f64 * pqq;
    for l in (order + 2)..=degree {
        let next =
            ((2 * l - 1) as f64 * x * cur - (l + order - 1) as f64 * prev) / (l - order) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

#[inline]
fn tri(u: usize, q: usize) -> usize {
    u * (u + 1) / 2 + q
}

/// Fills `out[tri(u, q)] = N_u^q P_u^q(x)` for all `0 <= q <= u <= degree`.
fn normalized_legendre_table(degree: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(tri(degree, degree) + 1, 0.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    out[0] = 0.5 / PI.sqrt();
    for q in 1..=degree {
        let qf = q as f64;
        out[tri(q, q)] = ((2.0 * qf + 1.0) / (2.0 * qf)).sqrt() * s * out[tri(q - 1, q - 1)];
    }
    for q in 0..degree {
        out[tri(q + 1, q)] = (2.0 * q as f64 + 3.0).sqrt() * x * out[tri(q, q)];
    }
    for q in 0..=degree {
        let qf = q as f64;
        for u in (q + 2)..=degree {
            let uf = u as f64;
            let a = ((4.0 * uf * uf - 1.0) / (uf * uf - qf * qf)).sqrt();
            let um = uf - 1.0;
            let b = ((um * um - qf * qf) / (4.0 * um * um - 1.0)).sqrt();
            out[tri(u, q)] = a * (x * out[tri(u - 1, q)] - b * out[tri(u - 2, q)]);
        }
    }
}

/// Writes the real harmonics of all degrees `<= degree` at `(θ, φ)` in flat order.
fn fill_basis(degree: usize, theta: f64, phi: f64, table: &mut Vec<f64>, out: &mut [f64]) {
    normalized_legendre_table(degree, theta.cos(), table);
    let sqrt2 = std::f64::consts::SQRT_2;
    for u in 0..=degree {
        let centre = u * u + u; // zero-based index of q = 0
        out[centre] = table[tri(u, 0)];
        for q in 1..=u {
            let p = sqrt2 * table[tri(u, q)];
            let (sin, cos) = (q as f64 * phi).sin_cos();
            out[centre + q] = p * cos;
            out[centre - q] = p * sin;
        }
    }
}

/// Real spherical harmonic `Y_u^q(θ, φ)`.
pub fn real_sh(degree: usize, order: i64, theta: f64, phi: f64) -> Result<f64> {
    let idx = ShIndex::new(degree, order)?;
    let mut table = Vec::new();
    normalized_legendre_table(degree, theta.cos(), &mut table);
    let q = order.unsigned_abs() as usize;
    let p = table[tri(idx.degree, q)];
    Ok(match order {
        0 => p,
        o if o > 0 => std::f64::consts::SQRT_2 * p * (q as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * p * (q as f64 * phi).sin(),
    })
}

/// Spherical basis vector `γ(θ, φ)` of length `(U + 1)^2`, entry `t - 1` holding
/// the harmonic with flat index `t`.
pub fn basis_vector(theta: f64, phi: f64, degree: usize) -> DVector<f64> {
    let mut out = DVector::zeros(coefficient_count(degree));
    let mut table = Vec::new();
    fill_basis(degree, theta, phi, &mut table, out.as_mut_slice());
    out
}

/// Reusable evaluator that avoids reallocating scratch space when many basis
/// vectors of the same degree are needed.
#[derive(Debug, Clone)]
pub struct BasisEvaluator {
    degree: usize,
    table: Vec<f64>,
}

impl BasisEvaluator {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            table: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        coefficient_count(self.degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval_into(&mut self, theta: f64, phi: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.len(), "basis buffer length");
        fill_basis(self.degree, theta, phi, &mut self.table, out);
    }
}

/// Product quadrature on the sphere: Gauss–Legendre in `cos θ` times a uniform
/// periodic rule in `φ`.
///
/// [`SphereGrid::integrate`] approximates `∮ f(θ, φ) sinθ dθ dφ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    thetas: Vec<f64>,
    theta_weights: Vec<f64>,
    phis: Vec<f64>,
}

impl SphereGrid {
    pub const DEFAULT_THETA_NODES: usize = 64;
    pub const DEFAULT_PHI_NODES: usize = 128;

    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        let n_theta_nz = NonZeroUsize::new(n_theta)
            .ok_or_else(|| Error::Domain("sphere grid needs at least one θ node".into()))?;
        if n_phi == 0 {
            return Err(Error::Domain("sphere grid needs at least one φ node".into()));
        }
        let rule = GaussLegendre::new(n_theta_nz);
        // Order by increasing θ, i.e. decreasing cos θ.
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let thetas = pairs.iter().map(|&(x, _)| x.clamp(-1.0, 1.0).acos()).collect();
        let theta_weights = pairs.iter().map(|&(_, w)| w).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let phis = (0..n_phi).map(|j| j as f64 * dphi).collect();
        Ok(Self {
            thetas,
            theta_weights,
            phis,
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn n_theta(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phis.len()
    }

    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature nodes `(θ, φ, weight)` in θ-major order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let dphi = 2.0 * PI / self.n_phi() as f64;
        self.thetas
            .iter()
            .zip(&self.theta_weights)
            .flat_map(move |(&t, &w)| self.phis.iter().map(move |&p| (t, p, w * dphi)))
    }

    /// `∮ f(θ, φ) sinθ dθ dφ`.
    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.points().map(|(t, p, w)| w * f(t, p)).sum()
    }

    /// Samples `f` at every node, θ-major.
    pub fn sample(&self, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        self.points().map(|(t, p, _)| f(t, p)).collect()
    }

    /// Highest degree `U` this grid can decompose without aliasing:
    /// needs `n_θ >= 2(U + 1)` and `n_φ >= 4(U + 1)`.
    pub fn max_degree(&self) -> Option<usize> {
        let by_theta = self.n_theta() / 2;
        let by_phi = self.n_phi() / 4;
        by_theta.min(by_phi).checked_sub(1)
    }

    pub fn check_resolution(&self, degree: usize) -> Result<()> {
        if self.n_theta() < 2 * (degree + 1) || self.n_phi() < 4 * (degree + 1) {
            return Err(Error::Resolution(format!(
                "degree {degree} needs at least {} θ nodes and {} φ nodes, grid has {}×{}",
                2 * (degree + 1),
                4 * (degree + 1),
                self.n_theta(),
                self.n_phi()
            )));
        }
        Ok(())
    }
}

impl Default for SphereGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_THETA_NODES, Self::DEFAULT_PHI_NODES)
            .expect("default grid dimensions are nonzero")
    }
}

/// Coefficient vector of a truncated harmonic expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    coeffs: DVector<f64>,
    degree: usize,
}

impl ShCoefficients {
    /// Energy `‖c‖²` of a normalized radiation pattern.
    pub const UNIT_ENERGY: f64 = 4.0 * PI;

    pub fn new(coeffs: DVector<f64>) -> Result<Self> {
        let degree = degree_for_count(coeffs.len()).ok_or_else(|| {
            Error::Domain(format!(
                "coefficient count {} is not a perfect square",
                coeffs.len()
            ))
        })?;
        Ok(Self { coeffs, degree })
    }

    pub fn zeros(degree: usize) -> Self {
        Self {
            coeffs: DVector::zeros(coefficient_count(degree)),
            degree,
        }
    }

    /// Isotropic unit-energy pattern: `c = [2√π, 0, …, 0]`, i.e. gain 1 everywhere.
    pub fn isotropic(degree: usize) -> Self {
        let mut c = Self::zeros(degree);
        c.coeffs[0] = 2.0 * PI.sqrt();
        c
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.norm_squared()
    }

    /// Rescales to `‖c‖² = 4π`.
    pub fn normalized(&self) -> Result<Self> {
        let e = self.energy();
        if e <= 0.0 || !e.is_finite() {
            return Err(Error::Domain("cannot normalize a zero-energy expansion".into()));
        }
        Ok(Self {
            coeffs: &self.coeffs * (Self::UNIT_ENERGY / e).sqrt(),
            degree: self.degree,
        })
    }
}

/// `γ(θ, φ)ᵀ c`. Positivity is not enforced here.
pub fn synthesize_gain(c: &ShCoefficients, theta: f64, phi: f64) -> f64 {
    basis_vector(theta, phi, c.degree).dot(&c.coeffs)
}

/// Projects grid samples (θ-major, as produced by [`SphereGrid::sample`]) onto
/// the harmonics up to `degree`.
pub fn decompose_pattern(grid: &SphereGrid, samples: &[f64], degree: usize) -> Result<ShCoefficients> {
    grid.check_resolution(degree)?;
    if samples.len() != grid.len() {
        return Err(Error::Domain(format!(
            "expected {} grid samples, got {}",
            grid.len(),
            samples.len()
        )));
    }
    let mut eval = BasisEvaluator::new(degree);
    let mut gamma = vec![0.0; eval.len()];
    let mut acc = DVector::<f64>::zeros(eval.len());
    for ((t, p, w), &g) in grid.points().zip(samples) {
        eval.eval_into(t, p, &mut gamma);
        let wg = w * g;
        for (a, y) in acc.iter_mut().zip(&gamma) {
            *a += wg * y;
        }
    }
    Ok(ShCoefficients { coeffs: acc, degree })
}

/// [`decompose_pattern`] of a function sampled on `grid`.
pub fn decompose_fn(
    grid: &SphereGrid,
    degree: usize,
    f: impl FnMut(f64, f64) -> f64,
) -> Result<ShCoefficients> {
    decompose_pattern(grid, &grid.sample(f), degree)
}

/// `∮ G² sinθ dθ dφ` by quadrature.
pub fn pattern_energy(grid: &SphereGrid, mut gain: impl FnMut(f64, f64) -> f64) -> f64 {
    grid.integrate(|t, p| {
        let g = gain(t, p);
        g * g
    })
}

/// Writes a coefficient file: a `U <degree>` line then one `t c_t` row per coefficient.
pub fn write_coefficients(mut w: impl Write, c: &ShCoefficients) -> Result<()> {
    writeln!(w, "U {}", c.degree)?;
    for (i, v) in c.coeffs.iter().enumerate() {
        writeln!(w, "{} {:e}", i + 1, v)?;
    }
    Ok(())
}

pub fn read_coefficients(r: impl BufRead) -> Result<ShCoefficients> {
    let mut degree = None;
    let mut values: Vec<Option<f64>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        let tail = parts.next().ok_or_else(|| Error::parse(lineno, "expected two fields"))?;
        if parts.next().is_some() {
            return Err(Error::parse(lineno, "expected two fields"));
        }
        match degree {
            None => {
                if head != "U" {
                    return Err(Error::parse(lineno, "first line must be `U <degree>`"));
                }
                let u: usize = tail
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("bad degree: {e}")))?;
                degree = Some(u);
                values = vec![None; coefficient_count(u)];
            }
            Some(_) => {
                let t: usize = head
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("bad index: {e}")))?;
                let v: f64 = tail
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("bad coefficient: {e}")))?;
                let slot = t
                    .checked_sub(1)
                    .and_then(|k| values.get_mut(k))
                    .ok_or_else(|| Error::parse(lineno, format!("index {t} out of range")))?;
                if slot.replace(v).is_some() {
                    return Err(Error::parse(lineno, format!("duplicate index {t}")));
                }
            }
        }
    }
    let degree = degree.ok_or_else(|| Error::parse(0, "missing `U <degree>` line"))?;
    let coeffs = values
        .iter()
        .enumerate()
        .map(|(k, v)| v.ok_or_else(|| Error::parse(0, format!("missing coefficient {}", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShCoefficients {
        coeffs: DVector::from_vec(coeffs),
        degree,
    })
}

/// Writes a pattern table: header `theta phi gain`, then one sample per row (radians).
pub fn write_pattern_table(
    mut w: impl Write,
    rows: impl IntoIterator<Item = (f64, f64, f64)>,
) -> Result<()> {
    writeln!(w, "theta phi gain")?;
    for (t, p, g) in rows {
        writeln!(w, "{t:e} {p:e} {g:e}")?;
    }
    Ok(())
}

pub fn read_pattern_table(r: impl BufRead) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols != ["theta", "phi", "gain"] {
                return Err(Error::parse(lineno, "expected header `theta phi gain`"));
            }
            saw_header = true;
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        match vals[..] {
            [t, p, g] => rows.push((t, p, g)),
            _ => return Err(Error::parse(lineno, "expected three columns")),
        }
    }
    if !saw_header {
        return Err(Error::parse(0, "empty pattern table"));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_2_SQRT_PI: f64 = 0.282_094_791_773_878_14;

    #[test]
    fn flat_index_examples() {
        assert_eq!(ShIndex::new(0, 0).unwrap().flat(), 1);
        assert_eq!(ShIndex::new(1, -1).unwrap().flat(), 2);
        assert_eq!(ShIndex::new(2, 1).unwrap().flat(), 8);
        assert_eq!(ShIndex::from_flat(9).unwrap(), ShIndex { degree: 2, order: 2 });
        assert!(ShIndex::new(1, 2).is_err());
        assert!(ShIndex::from_flat(0).is_err());
    }

    #[test]
    fn flat_index_roundtrip_to_ten_thousand() {
        for t in 1..=10_000 {
            let idx = ShIndex::from_flat(t).unwrap();
            assert!(idx.order.unsigned_abs() as usize <= idx.degree);
            assert_eq!(idx.flat(), t);
        }
    }

    #[test]
    fn legendre_trivial_values() {
        assert_eq!(assoc_legendre(0, 0, 0.3).unwrap(), 1.0);
        assert_eq!(assoc_legendre(1, 0, 1.0).unwrap(), 1.0);
        assert!(assoc_legendre(1, 2, 0.0).is_err());
        assert!(assoc_legendre(2, 1, 1.5).is_err());
    }

    #[test]
    fn legendre_closed_form() {
        // P_3^2(x) = 15 x (1 - x^2) without the Condon–Shortley sign.
        assert!((assoc_legendre(3, 2, 0.5).unwrap() - 5.625).abs() < 1e-14);
    }

    #[test]
    fn real_sh_constants() {
        assert!((real_sh(0, 0, 1.1, -0.4).unwrap() - INV_2_SQRT_PI).abs() < 1e-15);
        assert!((real_sh(1, 0, 0.0, 2.0).unwrap() - 0.488_602_511_902_919_9).abs() < 1e-15);
        assert!(real_sh(1, 2, 0.0, 0.0).is_err());
    }

    #[test]
    fn basis_vector_examples() {
        let b = basis_vector(0.7, 0.1, 0);
        assert_eq!(b.len(), 1);
        assert!((b[0] - INV_2_SQRT_PI).abs() < 1e-15);

        let b = basis_vector(0.0, 0.0, 1);
        let expect = [INV_2_SQRT_PI, 0.0, (3.0 / (4.0 * PI)).sqrt(), 0.0];
        for (x, y) in b.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn basis_matches_factorial_normalization() {
        // Independent route: N_u^q from factorials times the unnormalized recurrence.
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let (theta, phi) = (1.234, -2.1);
        let b = basis_vector(theta, phi, 8);
        for t in 1..=b.len() {
            let ShIndex { degree: u, order: q } = ShIndex::from_flat(t).unwrap();
            let qa = q.unsigned_abs() as usize;
            let n = ((2 * u + 1) as f64 / (4.0 * PI) * fact(u - qa) / fact(u + qa)).sqrt();
            let p = assoc_legendre(u, qa, theta.cos()).unwrap();
            let y = match q {
                0 => n * p,
                q if q > 0 => 2f64.sqrt() * n * p * (qa as f64 * phi).cos(),
                _ => 2f64.sqrt() * n * p * (qa as f64 * phi).sin(),
            };
            assert!((b[t - 1] - y).abs() < 1e-12, "t={t}: {} vs {y}", b[t - 1]);
        }
    }

    #[test]
    fn grid_integrates_constant() {
        let g = SphereGrid::default();
        assert!((g.integrate(|_, _| 1.0) - 4.0 * PI).abs() < 1e-10);
        assert_eq!(g.len(), 64 * 128);
    }

    #[test]
    fn synthesize_examples() {
        let c = ShCoefficients::isotropic(3);
        for &(t, p) in &[(0.0, 0.0), (1.0, 2.0), (PI, -1.0)] {
            assert!((synthesize_gain(&c, t, p) - 1.0).abs() < 1e-14);
        }
        assert_eq!(synthesize_gain(&ShCoefficients::zeros(2), 0.3, 0.3), 0.0);
        assert!((c.energy() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn decompose_examples() {
        let grid = SphereGrid::default();
        let c = decompose_fn(&grid, 4, |_, _| 1.0).unwrap();
        assert!((c.as_vector()[0] - 2.0 * PI.sqrt()).abs() < 1e-8);
        assert!(c.as_vector().iter().skip(1).all(|v| v.abs() < 1e-8));

        let c = decompose_fn(&grid, 3, |t, p| real_sh(2, 1, t, p).unwrap()).unwrap();
        for (k, v) in c.as_vector().iter().enumerate() {
            let want = if k + 1 == 8 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-8, "t={}: {v}", k + 1);
        }
    }

    #[test]
    fn decompose_rejects_coarse_grid() {
        let grid = SphereGrid::new(6, 40).unwrap();
        assert!(matches!(
            decompose_fn(&grid, 3, |_, _| 1.0),
            Err(Error::Resolution(_))
        ));
        assert_eq!(grid.max_degree(), Some(2));
    }

    #[test]
    fn energy_of_constant() {
        let grid = SphereGrid::default();
        assert!((pattern_energy(&grid, |_, _| 1.0) - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn coefficient_file_roundtrip_and_errors() {
        let c = ShCoefficients::new(DVector::from_fn(9, |i, _| i as f64 * 0.25 - 1.0)).unwrap();
        let mut buf = Vec::new();
        write_coefficients(&mut buf, &c).unwrap();
        let back = read_coefficients(buf.as_slice()).unwrap();
        assert_eq!(back, c);

        assert!(read_coefficients("U 1\n1 1\n2 0\n3 0\n".as_bytes()).is_err());
        assert!(read_coefficients("1 0.5\n".as_bytes()).is_err());
        assert!(read_coefficients("U 0\n1 1\n1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn pattern_table_parse() {
        let rows = read_pattern_table("theta phi gain\n0.1 0.2 1.5\n\n1 2 3\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![(0.1, 0.2, 1.5), (1.0, 2.0, 3.0)]);
        assert!(read_pattern_table("t p g\n".as_bytes()).is_err());
        assert!(read_pattern_table("theta phi gain\n1 2\n".as_bytes()).is_err());
    }
}
