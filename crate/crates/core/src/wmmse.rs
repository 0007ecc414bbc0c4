//! Weighted MMSE reformulation and per-antenna block coordinate descent.
//!
//! Row `n` of the fully digital precoder `F_D` (transposed) is written `f_n`.
//! With the MMSE receivers `U_k` and weights `W_k` fixed, the objective
//! restricted to antenna `n` is
//!
//! ```text
//! J(f_n, v_n) = ‖f_n‖² v_nᵀ B_nn v_n + 2 Re(f_nᴴ (Q_n − D_n) v_n) + const
//! ```
//!
//! where `v_n` is the one-hot selection vector (selection model) or the
//! harmonic coefficient vector (synthesis model).

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{Cholesky, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{AntennaPrecoder, ChannelMode, EffectiveChannel};
use crate::hybrid_decomp::{self, DecompositionResult};
use crate::manifold::{self, SphereOptions};
use crate::sph_harmonics::ShCoefficients;
use crate::{CMat, CVec, Error, Result, C64};

/// Threshold on `vᵀBv` below which the power-boundary branch is taken.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// Per-system quantities shared by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Streams `D_k` per user.
    pub streams: Vec<usize>,
    /// Rate weights `β_k`.
    pub weights: Vec<f64>,
    /// Noise powers `σ_k²` in mW.
    pub noise: Vec<f64>,
    /// Per-antenna budgets `P_n` in mW.
    pub power: Vec<f64>,
    pub n_rf: usize,
}

impl SystemConfig {
    /// Equal weights `1/K`, identical streams, noise and budgets.
    pub fn uniform(
        users: usize,
        streams_per_user: usize,
        n_antennas: usize,
        power_mw: f64,
        noise_mw: f64,
        n_rf: usize,
    ) -> Self {
        Self {
            streams: vec![streams_per_user; users],
            weights: vec![1.0 / users as f64; users],
            noise: vec![noise_mw; users],
            power: vec![power_mw; n_antennas],
            n_rf,
        }
    }

    pub fn users(&self) -> usize {
        self.streams.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.power.len()
    }

    pub fn total_streams(&self) -> usize {
        self.streams.iter().sum()
    }

    /// Columns of `F_D` that belong to user `k`.
    pub fn stream_range(&self, k: usize) -> Range<usize> {
        let start: usize = self.streams[..k].iter().sum();
        start..start + self.streams[k]
    }

    pub fn validate(&self, channels: &[EffectiveChannel]) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::Config("no users".into()));
        }
        if self.weights.len() != k || self.noise.len() != k || channels.len() != k {
            return Err(Error::Config(format!(
                "per-user lengths disagree: streams {}, weights {}, noise {}, channels {}",
                k,
                self.weights.len(),
                self.noise.len(),
                channels.len()
            )));
        }
        if self.noise.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise powers must be positive".into()));
        }
        if self.power.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("per-antenna budgets must be positive".into()));
        }
        if self.weights.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        if self.streams.iter().any(|&d| d == 0) {
            return Err(Error::Config("every user needs at least one stream".into()));
        }
        let n = self.n_antennas();
        if self.n_rf == 0 || self.n_rf > n {
            return Err(Error::Config(format!("N_RF = {} must lie in 1..={n}", self.n_rf)));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.n_antennas != n || ch.matrix.ncols() != n * ch.block {
                return Err(Error::Config(format!(
                    "channel {i} has {} antennas, system has {n}",
                    ch.n_antennas
                )));
            }
        }
        Ok(())
    }
}

/// Shared starting point: random-phase analog stage and Gaussian baseband,
/// scaled so the tightest antenna sits exactly at its budget.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPrecoder {
    pub f_rf: CMat,
    pub f_bb: CMat,
    pub f_d: CMat,
}

pub fn initial_precoder(system: &SystemConfig, seed: u64) -> Result<InitialPrecoder> {
    let n = system.n_antennas();
    let d = system.total_streams();
    if system.n_rf == 0 || system.n_rf > n {
        return Err(Error::Config(format!("N_RF = {} must lie in 1..={n}", system.n_rf)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 1.0 / (n as f64).sqrt();
    let f_rf = CMat::from_fn(n, system.n_rf, |_, _| {
        C64::from_polar(amp, rng.random_range(0.0..2.0 * PI))
    });
    let mut f_bb = CMat::from_fn(system.n_rf, d, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im) / 2f64.sqrt()
    });
    let f_d = &f_rf * &f_bb;
    let s = hybrid_decomp::antenna_powers(&f_d)
        .iter()
        .zip(&system.power)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &budget)| (budget / p).sqrt())
        .fold(f64::INFINITY, f64::min);
    if !s.is_finite() {
        return Err(Error::Numerical("initial precoder is identically zero".into()));
    }
    f_bb *= C64::from(s);
    let f_d = &f_rf * &f_bb;
    Ok(InitialPrecoder { f_rf, f_bb, f_d })
}

/// `ln det` of a Hermitian positive definite matrix.
pub fn ln_det_hpd(m: &CMat) -> Option<f64> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let mut l = CMat::zeros(n, n);
    let mut ld = 0.0;
    for j in 0..n {
        let mut pivot = m[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return None;
        }
        let djj = pivot.sqrt();
        l[(j, j)] = C64::from(djj);
        ld += 2.0 * djj.ln();
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(ld)
}

fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::from(0.5)
}

fn noise_identity(m: usize, sigma2: f64) -> CMat {
    CMat::identity(m, m) * C64::from(sigma2)
}

/// Weighted sum rate `Σ β_k R_k` (bps/Hz) and the per-user rates `R_k` for
/// physical channels `H_k` and a fully digital (or composite) precoder `F`.
pub fn sum_rate(h: &[CMat], f: &CMat, system: &SystemConfig) -> Result<(f64, Vec<f64>)> {
    let mut rates = Vec::with_capacity(h.len());
    for (k, hk) in h.iter().enumerate() {
        let g = hk * f;
        let mut interference = noise_identity(hk.nrows(), system.noise[k]);
        for i in 0..system.users() {
            if i != k {
                let gi = g.columns_range(system.stream_range(i));
                interference += &gi * gi.adjoint();
            }
        }
        let gk = g.columns_range(system.stream_range(k));
        let total = &interference + &gk * gk.adjoint();
        let (a, b) = ln_det_hpd(&hermitian_part(&total))
            .zip(ln_det_hpd(&hermitian_part(&interference)))
            .ok_or_else(|| Error::Numerical(format!("covariance of user {k} not positive definite")))?;
        rates.push((a - b) / std::f64::consts::LN_2);
    }
    let total = rates.iter().zip(&system.weights).map(|(r, b)| r * b).sum();
    Ok((total, rates))
}

/// MSE matrix of user `k` with receiver `U_k`:
/// `(I − UᴴHF_k)(I − UᴴHF_k)ᴴ + Σ_{i≠k} UᴴHF_iF_iᴴHᴴU + σ²UᴴU`.
pub fn mse_matrix(h: &CMat, f: &CMat, streams: Range<usize>, u: &CMat, sigma2: f64) -> CMat {
    let g = h * f;
    let uh_g = u.adjoint() * &g;
    let dk = streams.len();
    let mut e = uh_g.columns_range(streams.clone()).into_owned();
    e = CMat::identity(dk, dk) - &e - e.adjoint();
    e += &uh_g * uh_g.adjoint();
    e += u.adjoint() * u * C64::from(sigma2);
    hermitian_part(&e)
}

/// MMSE receivers `U_k = (Σ_i H_k F_i F_iᴴ H_kᴴ + σ_k² I)⁻¹ H_k F_k`.
pub fn update_u(h: &[CMat], f: &CMat, system: &SystemConfig) -> Result<Vec<CMat>> {
    h.iter()
        .enumerate()
        .map(|(k, hk)| {
            let g = hk * f;
            let cov = hermitian_part(&(&g * g.adjoint() + noise_identity(hk.nrows(), system.noise[k])));
            let ch = Cholesky::new(cov)
                .ok_or_else(|| Error::Numerical(format!("receive covariance of user {k} singular")))?;
            Ok(ch.solve(&g.columns_range(system.stream_range(k)).into_owned()))
        })
        .collect()
}

/// `W_k = (I − U_kᴴ H_k F_k)⁻¹`, symmetrized.
pub fn update_w(u: &CMat, h: &CMat, f_k: &CMat) -> Result<CMat> {
    let d = f_k.ncols();
    let m = CMat::identity(d, d) - u.adjoint() * h * f_k;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I − UᴴHF is singular".into()))?;
    Ok(hermitian_part(&inv))
}

/// `Σ β_k (Tr(W_k E_k) − ln det W_k)`.
pub fn wmmse_objective(w: &[CMat], e: &[CMat], beta: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for ((wk, ek), &b) in w.iter().zip(e).zip(beta) {
        let ld = ln_det_hpd(wk).ok_or_else(|| Error::Domain("W is not positive definite".into()))?;
        total += b * ((wk * ek).trace().re - ld);
    }
    Ok(total)
}

/// Objective with the MSE matrices computed from the current state.
pub fn objective_for(
    h: &[CMat],
    f: &CMat,
    u: &[CMat],
    w: &[CMat],
    system: &SystemConfig,
) -> Result<f64> {
    let e: Vec<CMat> = (0..system.users())
        .map(|k| mse_matrix(&h[k], f, system.stream_range(k), &u[k], system.noise[k]))
        .collect();
    wmmse_objective(w, &e, &system.weights)
}

/// `B_nn` (block × block), `Q_n` and `D_n` (D × block) for one antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct PerAntennaTerms {
    pub b: CMat,
    pub q: CMat,
    pub d: CMat,
}

impl PerAntennaTerms {
    /// `Q_n − D_n`.
    pub fn linear(&self) -> CMat {
        &self.q - &self.d
    }

    /// `vᵀ B v`, exactly real for real `v`.
    pub fn curvature(&self, v: &DVector<f64>) -> f64 {
        let mut a = 0.0;
        for i in 0..v.len() {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..v.len() {
                a += v[i] * self.b[(i, j)].re * v[j];
            }
        }
        a
    }

    fn linear_times(&self, v: &DVector<f64>) -> CVec {
        let mut r = CVec::zeros(self.q.nrows());
        for (j, &w) in v.iter().enumerate() {
            if w != 0.0 {
                for i in 0..r.len() {
                    r[i] += (self.q[(i, j)] - self.d[(i, j)]) * w;
                }
            }
        }
        r
    }

    /// `‖f‖² vᵀBv + 2Re(fᴴ(Q − D)v)`.
    pub fn objective(&self, f: &CVec, v: &DVector<f64>) -> f64 {
        self.curvature(v) * f.norm_squared() + 2.0 * f.dotc(&self.linear_times(v)).re
    }
}

fn row_as_vector(f: &CMat, n: usize) -> CVec {
    f.row(n).transpose()
}

fn receive_weights(u: &[CMat], w: &[CMat]) -> Vec<CMat> {
    u.iter().zip(w).map(|(uk, wk)| uk * wk * uk.adjoint()).collect()
}

/// Direct evaluation of the per-antenna terms from the pairwise blocks
/// `B_qp = Σ_k β_k H_(q),kᴴ U_k W_k U_kᴴ H_(p),k`. Cost is linear in `N` per
/// antenna; the solvers use an incremental equivalent.
pub fn per_antenna_terms(
    n: usize,
    channels: &[EffectiveChannel],
    f: &CMat,
    antenna: &AntennaPrecoder,
    u: &[CMat],
    w: &[CMat],
    system: &SystemConfig,
) -> PerAntennaTerms {
    let block = channels[0].block;
    let d_total = f.ncols();
    let y = receive_weights(u, w);
    let mut b = CMat::zeros(block, block);
    let mut q = CMat::zeros(d_total, block);
    let mut d = CMat::zeros(d_total, block);
    for (k, ch) in channels.iter().enumerate() {
        let beta = C64::from(system.weights[k]);
        let ln = ch.antenna_block(n);
        let yl = &y[k] * ln;
        b += ln.adjoint() * &yl * beta;
        for p in 0..ch.n_antennas {
            if p == n {
                continue;
            }
            let vp = antenna.vector(p, block);
            let lp_v = ch.antenna_column(p, &vp);
            // (B_np v_p)ᵀ = (L_nᴴ Y L_p v_p)ᵀ
            let bnp_v = yl.adjoint() * &lp_v * beta;
            q += row_as_vector(f, p) * bnp_v.transpose();
        }
        let dk = (&w[k] * u[k].adjoint() * ln * beta).map(|z| z.conj());
        d.rows_range_mut(system.stream_range(k)).copy_from(&dk);
    }
    PerAntennaTerms { b, q, d }
}

/// Minimizer of `a‖f‖² + 2Re(fᴴ r)` over `‖f‖² ≤ P`: `f = −x r` with
/// `x = min(1/a, √P/‖r‖)`.
pub fn closed_form_step(a: f64, r: &CVec, power: f64) -> CVec {
    let rn = r.norm();
    if rn == 0.0 {
        return CVec::zeros(r.len());
    }
    let boundary = power.sqrt() / rn;
    let x = if a <= CURVATURE_FLOOR {
        boundary
    } else {
        (1.0 / a).min(boundary)
    };
    r * C64::from(-x)
}

pub fn solve_f_closed_form(terms: &PerAntennaTerms, v: &DVector<f64>, power: f64) -> CVec {
    closed_form_step(terms.curvature(v), &terms.linear_times(v), power)
}

/// Exhaustive search over the candidate states with the closed-form `f` for
/// each; ties go to the lowest index.
pub fn model1_antenna_update(terms: &PerAntennaTerms, power: f64) -> (usize, CVec, f64) {
    let r = terms.linear();
    let mut best: Option<(usize, CVec, f64)> = None;
    for s in 0..terms.b.ncols() {
        let a = terms.b[(s, s)].re;
        let rs = r.column(s).into_owned();
        let f = closed_form_step(a, &rs, power);
        let val = a * f.norm_squared() + 2.0 * f.dotc(&rs).re;
        if best.as_ref().is_none_or(|b| val < b.2) {
            best = Some((s, f, val));
        }
    }
    best.expect("at least one candidate state")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model2Update {
    pub c: DVector<f64>,
    pub f: CVec,
    pub objective: f64,
    /// `false` when the sphere solver stopped before its gradient tolerance.
    pub converged: bool,
}

/// Isotropic coefficient fixed by the ρ-split.
pub fn isotropic_coefficient(rho: f64) -> f64 {
    2.0 * (rho * PI).sqrt()
}

/// Initial coefficients: the ρ-split with the remaining energy along the
/// first-degree harmonic pointing at broadside.
pub fn initial_coefficients(len: usize, rho: f64) -> DVector<f64> {
    let mut c = DVector::zeros(len);
    if len == 1 || rho >= 1.0 {
        c[0] = isotropic_coefficient(1.0);
        return c;
    }
    c[0] = isotropic_coefficient(rho);
    // Flat index 4 is Y_1^1 ∝ sinθ cosφ.
    c[3] = 2.0 * ((1.0 - rho) * PI).sqrt();
    c
}

/// One `f` update with `c` fixed, then one `c` update on the sphere with `f`
/// fixed. With `ρ = 1` (or a single coefficient) only `f` moves.
pub fn model2_antenna_update(
    terms: &PerAntennaTerms,
    c: &DVector<f64>,
    power: f64,
    rho: f64,
    opts: &SphereOptions,
) -> Result<Model2Update> {
    let f = solve_f_closed_form(terms, c, power);
    if rho >= 1.0 || c.len() == 1 {
        return Ok(Model2Update {
            objective: terms.objective(&f, c),
            c: c.clone(),
            f,
            converged: true,
        });
    }
    let alpha = 2.0 * ((1.0 - rho) * PI).sqrt();
    let tail = c.rows(1, c.len() - 1).into_owned();
    let x0 = &tail / tail.norm();
    let problem = manifold::build_reduced_problem(&terms.b, &terms.linear(), &f, rho, x0)?;
    let sol = manifold::solve_sphere(&problem, opts);
    let mut c_new = DVector::zeros(c.len());
    c_new[0] = isotropic_coefficient(rho);
    c_new.rows_mut(1, c.len() - 1).copy_from(&(sol.x * alpha));
    Ok(Model2Update {
        objective: terms.objective(&f, &c_new),
        c: c_new,
        f,
        converged: sol.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop when the relative objective decrease over an outer iteration
    /// falls below this.
    pub tol: f64,
    pub rho: f64,
    pub sphere: SphereOptions,
    pub decomposition_iters: usize,
    /// Recompute the full objective after every block update and record the
    /// worst relative increase. Expensive; meant for verification.
    pub audit_blocks: bool,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            rho: 0.7,
            sphere: SphereOptions::default(),
            decomposition_iters: 30,
            audit_blocks: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub sum_rate: f64,
    /// `max_n max(0, ‖f_n‖² − P_n) / P_n`.
    pub max_power_violation: f64,
    /// Deviation of the antenna precoder from its constraint set.
    pub norm_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderState {
    pub f_d: CMat,
    pub antenna: AntennaPrecoder,
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: PrecoderState,
    pub trace: Vec<TraceEntry>,
    pub decomposition: DecompositionResult,
    /// Rate of the fully digital precoder (last trace entry).
    pub digital_rate: f64,
    /// Rate after the analog/digital factorization.
    pub hybrid_rate: f64,
    /// Physical channels realized by the final antenna precoder.
    pub channels: Vec<CMat>,
    pub sphere_warnings: usize,
    /// Worst relative objective increase over all block updates (when audited).
    pub worst_block_increase: Option<f64>,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |t| t.iter)
    }

    pub fn hybrid_precoder(&self) -> CMat {
        &self.decomposition.f_rf * &self.decomposition.f_bb
    }
}

#[derive(Clone, Copy)]
enum Model {
    Selection,
    Synthesis,
}

fn power_violation(f: &CMat, power: &[f64]) -> f64 {
    hybrid_decomp::antenna_powers(f)
        .iter()
        .zip(power)
        .map(|(&p, &b)| ((p - b) / b).max(0.0))
        .fold(0.0, f64::max)
}

/// Deviation of an antenna precoder from one-hot / 4π-norm feasibility.
pub fn antenna_norm_deviation(antenna: &AntennaPrecoder, block: usize) -> f64 {
    match antenna {
        AntennaPrecoder::Selection(s) => {
            if s.iter().all(|&i| i < block) {
                0.0
            } else {
                1.0
            }
        }
        AntennaPrecoder::Coefficients(c) => c
            .iter()
            .map(|v| (v.norm_squared() - ShCoefficients::UNIT_ENERGY).abs())
            .fold(0.0, f64::max),
    }
}

struct Bcd<'a> {
    channels: &'a [EffectiveChannel],
    system: &'a SystemConfig,
    opts: &'a SolverOptions,
    model: Model,
    f: CMat,
    antenna: AntennaPrecoder,
    h: Vec<CMat>,
    g: Vec<CMat>,
    u: Vec<CMat>,
    w: Vec<CMat>,
    sphere_warnings: usize,
    worst_increase: Option<f64>,
}

impl<'a> Bcd<'a> {
    fn refresh(&mut self) {
        self.h = self.channels.iter().map(|c| c.apply(&self.antenna)).collect();
        self.g = self.h.iter().map(|hk| hk * &self.f).collect();
    }

    fn objective(&self) -> Result<f64> {
        objective_for(&self.h, &self.f, &self.u, &self.w, self.system)
    }

    fn audit(&mut self, before: f64) -> Result<f64> {
        let h: Vec<CMat> = self.channels.iter().map(|c| c.apply(&self.antenna)).collect();
        let after = objective_for(&h, &self.f, &self.u, &self.w, self.system)?;
        let inc = (after - before) / before.abs().max(f64::MIN_POSITIVE);
        let worst = self.worst_increase.get_or_insert(f64::NEG_INFINITY);
        *worst = worst.max(inc);
        Ok(after)
    }

    fn update_uw(&mut self) -> Result<()> {
        let mut before = if self.opts.audit_blocks && !self.u.is_empty() {
            Some(self.objective()?)
        } else {
            None
        };
        self.u = update_u(&self.h, &self.f, self.system)?;
        if let Some(b) = before {
            before = Some(self.audit(b)?);
        }
        self.w = (0..self.system.users())
            .map(|k| {
                let fk = self.f.columns_range(self.system.stream_range(k)).into_owned();
                update_w(&self.u[k], &self.h[k], &fk)
            })
            .collect::<Result<_>>()?;
        if let Some(b) = before {
            self.audit(b)?;
        }
        Ok(())
    }

    fn terms(&self, n: usize, y: &[CMat], uw: &[CMat]) -> PerAntennaTerms {
        let block = self.channels[0].block;
        let dt = self.f.ncols();
        let mut b = CMat::zeros(block, block);
        let mut q = CMat::zeros(dt, block);
        let mut d = CMat::zeros(dt, block);
        let fn_ = row_as_vector(&self.f, n);
        for (k, ch) in self.channels.iter().enumerate() {
            let beta = C64::from(self.system.weights[k]);
            let ln = ch.antenna_block(n);
            let p = &y[k] * ln;
            b += ln.adjoint() * &p * beta;
            // X_k = G_kᵀ − f_n h_nkᵀ, the interference from all other antennas.
            let x = self.g[k].transpose() - &fn_ * self.h[k].column(n).transpose();
            q += x * p.map(|z| z.conj()) * beta;
            let dk = (&uw[k] * ln).map(|z| z.conj());
            d.rows_range_mut(self.system.stream_range(k)).copy_from(&dk);
        }
        PerAntennaTerms { b, q, d }
    }

    fn sweep(&mut self) -> Result<()> {
        let y = receive_weights(&self.u, &self.w);
        let uw: Vec<CMat> = (0..self.system.users())
            .map(|k| &self.w[k] * self.u[k].adjoint() * C64::from(self.system.weights[k]))
            .collect();
        let block = self.channels[0].block;
        for n in 0..self.system.n_antennas() {
            let before = if self.opts.audit_blocks {
                Some(self.objective()?)
            } else {
                None
            };
            let terms = self.terms(n, &y, &uw);
            let p = self.system.power[n];
            let (v_new, f_new) = match (self.model, &mut self.antenna) {
                (Model::Selection, AntennaPrecoder::Selection(sel)) => {
                    let (s, f, _) = model1_antenna_update(&terms, p);
                    sel[n] = s;
                    let mut v = DVector::zeros(block);
                    v[s] = 1.0;
                    (v, f)
                }
                (Model::Synthesis, AntennaPrecoder::Coefficients(coefs)) => {
                    let mut sphere = self.opts.sphere.clone();
                    sphere.seed = sphere.seed.wrapping_add(n as u64);
                    let upd = model2_antenna_update(&terms, &coefs[n], p, self.opts.rho, &sphere)?;
                    if !upd.converged {
                        self.sphere_warnings += 1;
                    }
                    coefs[n] = upd.c.clone();
                    (upd.c, upd.f)
                }
                _ => return Err(Error::Config("antenna precoder does not match the model".into())),
            };
            let f_old = row_as_vector(&self.f, n);
            for (k, ch) in self.channels.iter().enumerate() {
                let h_new = ch.antenna_column(n, &v_new);
                let h_old = self.h[k].column(n).into_owned();
                self.g[k] += &h_new * f_new.transpose() - h_old * f_old.transpose();
                self.h[k].set_column(n, &h_new);
            }
            self.f.set_row(n, &f_new.transpose());
            if let Some(b) = before {
                self.audit(b)?;
            }
        }
        Ok(())
    }

    fn entry(&self, iter: usize, objective: f64) -> Result<TraceEntry> {
        Ok(TraceEntry {
            iter,
            objective,
            sum_rate: sum_rate(&self.h, &self.f, self.system)?.0,
            max_power_violation: power_violation(&self.f, &self.system.power),
            norm_deviation: antenna_norm_deviation(&self.antenna, self.channels[0].block),
        })
    }

    fn run(mut self) -> Result<Solution> {
        self.refresh();
        self.update_uw()?;
        let mut trace = vec![self.entry(0, self.objective()?)?];
        for it in 1..=self.opts.max_iters {
            self.sweep()?;
            self.refresh();
            let obj = self.objective()?;
            trace.push(self.entry(it, obj)?);
            let prev = trace[trace.len() - 2].objective;
            if (prev - obj) / prev.abs().max(f64::MIN_POSITIVE) < self.opts.tol {
                break;
            }
            if it < self.opts.max_iters {
                self.update_uw()?;
            }
        }
        let decomposition = hybrid_decomp::decompose(
            &self.f,
            self.system.n_rf,
            &self.system.power,
            self.opts.decomposition_iters,
            self.opts.seed,
        )?;
        let hybrid = &decomposition.f_rf * &decomposition.f_bb;
        let hybrid_rate = sum_rate(&self.h, &hybrid, self.system)?.0;
        Ok(Solution {
            digital_rate: trace.last().unwrap().sum_rate,
            hybrid_rate,
            decomposition,
            trace,
            channels: self.h,
            sphere_warnings: self.sphere_warnings,
            worst_block_increase: self.worst_increase,
            state: PrecoderState {
                f_d: self.f,
                antenna: self.antenna,
                u: self.u,
                w: self.w,
            },
        })
    }
}

fn run_model(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    f_d: &CMat,
    model: Model,
    antenna: AntennaPrecoder,
) -> Result<Solution> {
    system.validate(channels)?;
    let block = channels[0].block;
    if channels.iter().any(|c| c.block != block || c.mode != channels[0].mode) {
        return Err(Error::Config("users' lifted channels disagree in mode or width".into()));
    }
    if f_d.shape() != (system.n_antennas(), system.total_streams()) {
        return Err(Error::Config(format!(
            "initial precoder is {:?}, expected {}×{}",
            f_d.shape(),
            system.n_antennas(),
            system.total_streams()
        )));
    }
    Bcd {
        channels,
        system,
        opts,
        model,
        f: f_d.clone(),
        antenna,
        h: Vec::new(),
        g: Vec::new(),
        u: Vec::new(),
        w: (0..system.users())
            .map(|k| CMat::identity(system.streams[k], system.streams[k]))
            .collect(),
        sphere_warnings: 0,
        worst_increase: None,
    }
    .run()
}

/// Pattern-selection precoding: every antenna starts at candidate 0.
pub fn algorithm1(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    init: &InitialPrecoder,
) -> Result<Solution> {
    algorithm1_from(channels, system, opts, &init.f_d, vec![0; system.n_antennas()])
}

/// Selection precoding from an explicit starting point, e.g. the output of
/// another solver on the same channels.
pub fn algorithm1_from(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    f_d: &CMat,
    selection: Vec<usize>,
) -> Result<Solution> {
    if channels
        .iter()
        .any(|c| !matches!(c.mode, ChannelMode::Selection | ChannelMode::Plain))
    {
        return Err(Error::Config("selection precoding needs selection channels".into()));
    }
    if selection.len() != system.n_antennas() || selection.iter().any(|&s| s >= channels[0].block) {
        return Err(Error::Config("starting selection out of range".into()));
    }
    run_model(channels, system, opts, f_d, Model::Selection, AntennaPrecoder::Selection(selection))
}

/// Pattern-synthesis precoding over harmonic coefficients.
pub fn algorithm2(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    init: &InitialPrecoder,
) -> Result<Solution> {
    let t = channels.first().map_or(1, |c| c.block);
    let c0 = initial_coefficients(t, opts.rho);
    algorithm2_from(channels, system, opts, &init.f_d, vec![c0; system.n_antennas()])
}

/// Synthesis precoding from explicit starting coefficients; each must carry
/// the ρ-split isotropic entry and total energy 4π.
pub fn algorithm2_from(
    channels: &[EffectiveChannel],
    system: &SystemConfig,
    opts: &SolverOptions,
    f_d: &CMat,
    coefficients: Vec<DVector<f64>>,
) -> Result<Solution> {
    if channels.iter().any(|c| c.mode != ChannelMode::Coefficients) {
        return Err(Error::Config("synthesis precoding needs coefficient channels".into()));
    }
    if !(opts.rho > 0.0 && opts.rho <= 1.0) {
        return Err(Error::Config(format!("ρ = {} outside (0, 1]", opts.rho)));
    }
    let t = channels.first().map_or(1, |c| c.block);
    let c00 = isotropic_coefficient(if t == 1 { 1.0 } else { opts.rho });
    let ok = coefficients.len() == system.n_antennas()
        && coefficients.iter().all(|c| {
            c.len() == t
                && (c[0] - c00).abs() < 1e-9
                && (c.norm_squared() - ShCoefficients::UNIT_ENERGY).abs() < 1e-9
        });
    if !ok {
        return Err(Error::Config("starting coefficients violate the ρ-split or energy".into()));
    }
    let antenna = AntennaPrecoder::Coefficients(coefficients);
    run_model(channels, system, opts, f_d, Model::Synthesis, antenna)
}
