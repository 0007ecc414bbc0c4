//! Array beampatterns and constraint audits.

use std::io::Write;

use crate::channel::{AntennaPrecoder, ArrayLayout};
use crate::hybrid_decomp::antenna_powers;
use crate::patterns::{direction, CandidateSet, RadiationPattern};
use crate::sph_harmonics::SphereGrid;
use crate::wmmse::{antenna_norm_deviation, PrecoderState};
use crate::{CMat, CVec, Result, C64};

/// Weighted steering vector `r_n = G_n(θ,φ) e^{j(2π/λ) p_nᵀu(θ,φ)}`.
pub fn steering(
    layout: &ArrayLayout,
    patterns: &[RadiationPattern],
    theta: f64,
    phi: f64,
    wavelength: f64,
) -> CVec {
    let u = direction(theta, phi);
    let k = 2.0 * std::f64::consts::PI / wavelength;
    CVec::from_iterator(
        layout.len(),
        layout.positions().iter().zip(patterns).map(|(p, g)| {
            let proj = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
            C64::from_polar(g.gain(theta, phi), k * proj)
        }),
    )
}

/// `E(θ,φ) = ‖rᵀ(θ,φ) F‖₂` for a user's composite precoder `F = F_RF F_BB,k`.
pub fn beampattern(
    layout: &ArrayLayout,
    patterns: &[RadiationPattern],
    precoder: &CMat,
    theta: f64,
    phi: f64,
    wavelength: f64,
) -> f64 {
    let r = steering(layout, patterns, theta, phi, wavelength);
    (r.transpose() * precoder).norm()
}

/// Maximum of `field` over the `θ` grid.
pub fn beampattern_envelope(thetas: &[f64], field: impl Fn(f64) -> f64) -> f64 {
    thetas.iter().map(|&t| field(t)).fold(f64::NEG_INFINITY, f64::max)
}

/// Inclusive grid `[lo, hi]` in steps of `step` (all degrees), in radians.
pub fn degree_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| (lo + i as f64 * step).to_radians()).collect()
}

/// One line of the beampattern CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub phi_deg: f64,
    pub user: usize,
    pub envelope_db_normalized: f64,
}

/// Azimuth envelopes of every user, in dB relative to that user's peak.
pub fn envelope_rows(
    layout: &ArrayLayout,
    patterns: &[RadiationPattern],
    user_precoders: &[CMat],
    thetas: &[f64],
    phis: &[f64],
    wavelength: f64,
) -> Vec<EnvelopeRow> {
    let mut rows = Vec::new();
    for (k, f) in user_precoders.iter().enumerate() {
        let env: Vec<f64> = phis
            .iter()
            .map(|&phi| {
                beampattern_envelope(thetas, |t| beampattern(layout, patterns, f, t, phi, wavelength))
            })
            .collect();
        let peak = env.iter().cloned().fold(0.0, f64::max);
        for (&phi, &e) in phis.iter().zip(&env) {
            let db = if peak > 0.0 { 20.0 * (e / peak).log10() } else { f64::NEG_INFINITY };
            rows.push(EnvelopeRow {
                phi_deg: phi.to_degrees(),
                user: k,
                envelope_db_normalized: db,
            });
        }
    }
    rows
}

pub fn write_envelope_csv(mut w: impl Write, rows: &[EnvelopeRow]) -> Result<()> {
    writeln!(w, "phi_deg,user,envelope_db_normalized")?;
    for r in rows {
        writeln!(w, "{:.1},{},{:.6}", r.phi_deg, r.user, r.envelope_db_normalized)?;
    }
    Ok(())
}

/// Signed constraint margins; non-negative means satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    /// `min_n (P_n − [F_D F_Dᴴ]_nn) / P_n`.
    pub digital_power_margin: f64,
    /// Same for the factorized precoder `F_RF F_BB`, when present.
    pub hybrid_power_margin: Option<f64>,
    /// `−max |N |x|² − 1|` over the analog stage, when present.
    pub constant_modulus_margin: Option<f64>,
    /// `−` deviation from one-hot or `‖c‖² = 4π`.
    pub antenna_margin: f64,
    /// Smallest realized pattern gain over the audit grid.
    pub min_pattern_gain: f64,
}

impl AuditReport {
    /// Hard constraints only; pattern positivity is informational.
    pub fn feasible(&self, tol: f64) -> bool {
        self.digital_power_margin >= -tol
            && self.hybrid_power_margin.is_none_or(|m| m >= -tol)
            && self.constant_modulus_margin.is_none_or(|m| m >= -tol)
            && self.antenna_margin >= -tol
    }
}

fn power_margin(f: &CMat, power: &[f64]) -> f64 {
    antenna_powers(f)
        .iter()
        .zip(power)
        .map(|(&p, &b)| (b - p) / b)
        .fold(f64::INFINITY, f64::min)
}

/// Audits a solver state against its constraint set.
pub fn audit_constraints(
    state: &PrecoderState,
    hybrid: Option<(&CMat, &CMat)>,
    power: &[f64],
    block: usize,
    candidates: Option<&CandidateSet>,
    grid: &SphereGrid,
) -> Result<AuditReport> {
    let (hybrid_power_margin, constant_modulus_margin) = match hybrid {
        Some((f_rf, f_bb)) => {
            let n = f_rf.nrows() as f64;
            let dev = f_rf
                .iter()
                .map(|z| (n * z.norm_sqr() - 1.0).abs())
                .fold(0.0, f64::max);
            (Some(power_margin(&(f_rf * f_bb), power)), Some(0.0 - dev))
        }
        None => (None, None),
    };
    let patterns = state.antenna.patterns(candidates)?;
    let min_pattern_gain = match &state.antenna {
        AntennaPrecoder::Selection(_) => patterns
            .iter()
            .map(|p| p.min_gain(grid))
            .fold(f64::INFINITY, f64::min),
        AntennaPrecoder::Coefficients(c) => {
            let mut seen: Vec<&nalgebra::DVector<f64>> = Vec::new();
            let mut m = f64::INFINITY;
            for (v, p) in c.iter().zip(&patterns) {
                if seen.contains(&v) {
                    continue;
                }
                seen.push(v);
                m = m.min(p.min_gain(grid));
            }
            m
        }
    };
    Ok(AuditReport {
        digital_power_margin: power_margin(&state.f_d, power),
        hybrid_power_margin,
        constant_modulus_margin,
        antenna_margin: 0.0 - antenna_norm_deviation(&state.antenna, block),
        min_pattern_gain,
    })
}
