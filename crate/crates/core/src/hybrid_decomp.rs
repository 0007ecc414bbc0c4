//! Factorization of a fully digital precoder into a constant-modulus analog
//! stage and a digital baseband stage, followed by per-antenna power scaling.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub f_rf: CMat,
    pub f_bb: CMat,
    /// `‖F_D − F_RF F_BB‖_F / ‖F_D‖_F` before power scaling.
    pub residual: f64,
    /// Relative residual after each alternation.
    pub residual_history: Vec<f64>,
    /// Factor applied to `F_BB` so every antenna meets its budget.
    pub scale: f64,
}

/// Row powers `[F F^H]_nn`.
pub fn antenna_powers(f: &CMat) -> Vec<f64> {
    f.row_iter().map(|r| r.norm_squared()).collect()
}

/// `min_n min(1, sqrt(P_n / [F Fᴴ]_nn))`.
pub fn per_antenna_scale(f: &CMat, power: &[f64]) -> f64 {
    antenna_powers(f)
        .iter()
        .zip(power)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &budget)| (budget / p).sqrt())
        .fold(1.0, f64::min)
}

/// Scales `F_BB` so `F_RF F_BB` meets every per-antenna budget.
pub fn per_antenna_rescale(f_rf: &CMat, f_bb: &CMat, power: &[f64]) -> (CMat, f64) {
    let s = per_antenna_scale(&(f_rf * f_bb), power);
    (f_bb * C64::from(s), s)
}

fn least_squares(f_rf: &CMat, f_d: &CMat) -> Result<CMat> {
    f_rf.clone()
        .svd(true, true)
        .solve(f_d, 1e-12)
        .map_err(|e| Error::Numerical(format!("baseband least squares: {e}")))
}

fn relative_residual(f_d: &CMat, f_rf: &CMat, f_bb: &CMat, denom: f64) -> f64 {
    if denom == 0.0 {
        return (f_rf * f_bb).norm();
    }
    (f_d - f_rf * f_bb).norm() / denom
}

/// Alternates an exact least-squares baseband update with an element-wise
/// exact phase update of the analog stage, then scales for the per-antenna
/// budgets.
///
/// The analog stage is warm-started from the phases of the leading columns of
/// `F_D`; extra RF chains get seeded random phases.
pub fn decompose(
    f_d: &CMat,
    n_rf: usize,
    power: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<DecompositionResult> {
    let (n, d) = f_d.shape();
    if n_rf > n || n_rf == 0 {
        return Err(Error::Config(format!("N_RF = {n_rf} must lie in 1..={n}")));
    }
    if power.len() != n {
        return Err(Error::Config("one power budget per antenna required".into()));
    }
    let amp = 1.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f_rf = CMat::from_fn(n, n_rf, |_, _| C64::from(0.0));
    for j in 0..n_rf {
        for i in 0..n {
            let phase = if j < d {
                f_d[(i, j)].arg()
            } else {
                rng.random_range(0.0..std::f64::consts::TAU)
            };
            f_rf[(i, j)] = C64::from_polar(amp, phase);
        }
    }
    let denom = f_d.norm();
    let mut f_bb = least_squares(&f_rf, f_d)?;
    let mut history = vec![relative_residual(f_d, &f_rf, &f_bb, denom)];
    for _ in 0..iterations {
        let mut resid = f_d - &f_rf * &f_bb;
        for i in 0..n {
            for j in 0..n_rf {
                let old = f_rf[(i, j)];
                let mut acc = C64::from(0.0);
                for c in 0..d {
                    let e = resid[(i, c)] + old * f_bb[(j, c)];
                    acc += e * f_bb[(j, c)].conj();
                }
                if acc.norm() == 0.0 {
                    continue;
                }
                let new = C64::from_polar(amp, acc.arg());
                for c in 0..d {
                    resid[(i, c)] += (old - new) * f_bb[(j, c)];
                }
                f_rf[(i, j)] = new;
            }
        }
        f_bb = least_squares(&f_rf, f_d)?;
        history.push(relative_residual(f_d, &f_rf, &f_bb, denom));
    }
    let residual = *history.last().unwrap();
    let (f_bb, scale) = per_antenna_rescale(&f_rf, &f_bb, power);
    Ok(DecompositionResult {
        f_rf,
        f_bb,
        residual,
        residual_history: history,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_examples() {
        let f = CMat::from_column_slice(2, 1, &[C64::from(0.5), C64::from(0.1)]);
        assert_eq!(per_antenna_scale(&f, &[1.0, 1.0]), 1.0);
        let f = CMat::from_column_slice(2, 1, &[C64::from(2.0), C64::from(0.1)]);
        assert!((per_antenna_scale(&f, &[1.0, 1.0]) - 0.5).abs() < 1e-15);
        let (bb, s) = per_antenna_rescale(&CMat::identity(2, 2), &f, &[1.0, 1.0]);
        assert!((s - 0.5).abs() < 1e-15);
        assert!((bb[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_constant_modulus_is_exact() {
        let n = 8;
        let col = CMat::from_fn(n, 1, |i, _| C64::from_polar(1.0 / (n as f64).sqrt(), 0.3 * i as f64));
        let row = CMat::from_row_slice(1, 2, &[C64::new(0.5, 0.2), C64::new(-0.1, 0.7)]);
        let f_d = &col * &row;
        let r = decompose(&f_d, 1, &vec![1.0; n], 5, 1).unwrap();
        assert!(r.residual < 1e-12);
        for z in r.f_rf.iter() {
            assert!((z.norm_sqr() * n as f64 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn too_many_rf_chains_rejected() {
        assert!(decompose(&CMat::zeros(2, 1), 3, &[1.0, 1.0], 1, 0).is_err());
    }
}
