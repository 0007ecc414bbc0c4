//! Comparison precoders with fixed antenna patterns.

use crate::channel::{effective_channel_sel, EffectiveChannel, PathGeometry};
use crate::hybrid_decomp::per_antenna_scale;
use crate::patterns::{CandidateSet, RadiationPattern};
use crate::wmmse::{algorithm1, InitialPrecoder, Solution, SolverOptions, SystemConfig};
use crate::{CMat, Error, Result, C64};

/// Single-candidate lifted channels, i.e. the physical channels of an array
/// whose antennas all use `pattern`.
pub fn fixed_pattern_channels(
    geoms: &[PathGeometry],
    pattern: &RadiationPattern,
    rx: &RadiationPattern,
) -> Result<Vec<EffectiveChannel>> {
    let set = CandidateSet::single(pattern.clone())?;
    Ok(geoms.iter().map(|g| effective_channel_sel(g, &set, rx)).collect())
}

/// Hybrid WMMSE with reconfigurability disabled: the selection solver on a
/// one-candidate set.
pub fn fixed_pattern_wmmse(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    init: &InitialPrecoder,
) -> Result<Solution> {
    if channels.iter().any(|c| c.block != 1) {
        return Err(Error::Config("fixed-pattern channels must have one state per antenna".into()));
    }
    algorithm1(channels, system, opts, init)
}

/// Block-diagonalization zero forcing.
///
/// Each user's precoder lies in the null space of every other user's channel
/// and takes the `D_k` strongest right singular directions of the projected
/// channel. Streams get equal power `ΣP_n / D`, then the whole precoder is
/// scaled down until every antenna meets its budget.
pub fn zf_precoder(h: &[CMat], system: &SystemConfig) -> Result<CMat> {
    let n = system.n_antennas();
    let d = system.total_streams();
    if h.len() != system.users() || h.iter().any(|hk| hk.ncols() != n) {
        return Err(Error::Config("channel dimensions disagree with the system".into()));
    }
    if d > n {
        return Err(Error::Config(format!("{d} streams exceed {n} antennas")));
    }
    let mut f = CMat::zeros(n, d);
    for k in 0..h.len() {
        let other_rows: usize = (0..h.len()).filter(|&i| i != k).map(|i| h[i].nrows()).sum();
        let mut proj = CMat::identity(n, n);
        if other_rows > 0 {
            if other_rows >= n {
                return Err(Error::Config(format!(
                    "user {k}: {other_rows} interfering receive antennas leave no null space in {n} antennas"
                )));
            }
            let mut stacked = CMat::zeros(other_rows, n);
            let mut r = 0;
            for (i, hi) in h.iter().enumerate() {
                if i != k {
                    stacked.rows_mut(r, hi.nrows()).copy_from(hi);
                    r += hi.nrows();
                }
            }
            let svd = stacked.svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let smax = svd.singular_values.max();
            for (j, &s) in svd.singular_values.iter().enumerate() {
                if s > smax * 1e-12 {
                    let v = vt.row(j).adjoint();
                    proj -= &v * v.adjoint();
                }
            }
        }
        let projected = &h[k] * &proj;
        let svd = projected.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let dk = system.streams[k];
        let smax = svd.singular_values.max();
        if order.len() < dk || svd.singular_values[order[dk - 1]] <= smax * 1e-12 {
            return Err(Error::Config(format!(
                "user {k}: projected channel cannot carry {dk} streams"
            )));
        }
        let cols = system.stream_range(k);
        for (j, &o) in order.iter().take(dk).enumerate() {
            f.set_column(cols.start + j, &vt.row(o).adjoint());
        }
    }
    let total: f64 = system.power.iter().sum();
    f *= C64::from((total / d as f64).sqrt());
    let s = per_antenna_scale(&f, &system.power);
    Ok(f * C64::from(s))
}

/// Worst `‖H_k F_i‖_F / (‖H_k‖_F ‖F_i‖_F)` over user pairs `i ≠ k`.
pub fn interference_leakage(h: &[CMat], f: &CMat, system: &SystemConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, hk) in h.iter().enumerate() {
        for i in 0..system.users() {
            if i == k {
                continue;
            }
            let fi = f.columns_range(system.stream_range(i));
            let denom = hk.norm() * fi.norm();
            if denom > 0.0 {
                worst = worst.max((hk * fi).norm() / denom);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_takes_principal_direction() {
        let mut h = CMat::zeros(1, 3);
        h[(0, 1)] = C64::new(0.0, 2.0);
        let sys = SystemConfig::uniform(1, 1, 3, 1.0, 1.0, 1);
        let f = zf_precoder(&[h], &sys).unwrap();
        assert!((f[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(f[(0, 0)].norm() < 1e-12 && f[(2, 0)].norm() < 1e-12);
    }

    #[test]
    fn orthogonal_users_need_no_projection() {
        let mut h1 = CMat::zeros(1, 4);
        let mut h2 = CMat::zeros(1, 4);
        h1[(0, 0)] = C64::from(1.0);
        h2[(0, 3)] = C64::from(1.0);
        let sys = SystemConfig::uniform(2, 1, 4, 1.0, 1.0, 2);
        let f = zf_precoder(&[h1.clone(), h2.clone()], &sys).unwrap();
        assert!((f[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((f[(3, 1)].norm() - 1.0).abs() < 1e-12);
        assert!(interference_leakage(&[h1, h2], &f, &sys) < 1e-15);
    }

    #[test]
    fn infeasible_dimensions_rejected() {
        let h = CMat::from_element(2, 2, C64::from(1.0));
        let sys = SystemConfig::uniform(2, 1, 2, 1.0, 1.0, 2);
        assert!(zf_precoder(&[h.clone(), h], &sys).is_err());
    }
}
