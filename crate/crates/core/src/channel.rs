//! Synthetic multipath geometry and channel assembly.
//!
//! Every per-antenna link `(m, n)` of every path gets its own propagation
//! distance, departure and arrival angles, so the channel is valid in the near
//! field as well. Given those, the channel for user `k` is
//!
//! ```text
//! H = sqrt(N M / L) Σ_ℓ C_ℓ ⊙ A_ℓ ⊙ G_ℓ^UE ⊙ G_ℓ^BS
//! [C_ℓ]_mn = (λ / 4π d_mn)^(ζ/2) e^{jψ_ℓ}
//! [A_ℓ]_mn = e^{-j 2π/λ (d_mn - d_ref)} / sqrt(N M)
//! ```
//!
//! The lifted channels replace the single gain `G_(n)^BS` by the vector of all
//! candidate gains (selection model) or by the spherical basis vector
//! (synthesis model), so that `H = H_lift · blkdiag(v_1, …, v_N)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::patterns::{CandidateSet, RadiationPattern};
use crate::sph_harmonics::{coefficient_count, BasisEvaluator, ShCoefficients};
use crate::{CMat, CVec, Error, Result, C64};

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn rotate_z(v: Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Inclination and azimuth of a (nonzero) vector.
pub fn spherical_angles(v: Vec3) -> (f64, f64) {
    let r = norm(v);
    ((v[2] / r).clamp(-1.0, 1.0).acos(), v[1].atan2(v[0]))
}

/// Uniform planar array in its body frame: elements in the `y–z` plane, so
/// broadside is `+x` (`θ = π/2, φ = 0`). Element `n = h·N_v + v` sits at
/// `(0, h·d, v·d)` relative to element 0; stored positions are centered on the
/// array centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    n_h: usize,
    n_v: usize,
    spacing: f64,
    positions: Vec<Vec3>,
}

impl ArrayLayout {
    pub fn upa(n_h: usize, n_v: usize, spacing: f64) -> Result<Self> {
        if n_h == 0 || n_v == 0 {
            return Err(Error::Config("array dimensions must be positive".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::Config("array spacing must be positive".into()));
        }
        let cy = (n_h - 1) as f64 * spacing / 2.0;
        let cz = (n_v - 1) as f64 * spacing / 2.0;
        let positions = (0..n_h)
            .flat_map(|h| {
                (0..n_v).map(move |v| [0.0, h as f64 * spacing - cy, v as f64 * spacing - cz])
            })
            .collect();
        Ok(Self {
            n_h,
            n_v,
            spacing,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Element positions relative to the centroid, body frame.
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
}

/// Far-field UPA response `(1/√N) e^{-j2π ϖ_h k(N_h)} ⊗ e^{-j2π ϖ_v k(N_v)}`
/// with `ϖ_h = d sinφ sinθ / λ` and `ϖ_v = d cosθ / λ`.
pub fn upa_arv(theta: f64, phi: f64, n_h: usize, n_v: usize, spacing: f64, wavelength: f64) -> CVec {
    let wh = spacing * phi.sin() * theta.sin() / wavelength;
    let wv = spacing * theta.cos() / wavelength;
    let scale = 1.0 / ((n_h * n_v) as f64).sqrt();
    CVec::from_iterator(
        n_h * n_v,
        (0..n_h).flat_map(|h| {
            (0..n_v).map(move |v| {
                C64::from_polar(scale, -2.0 * PI * (wh * h as f64 + wv * v as f64))
            })
        }),
    )
}

/// One propagation path of one user, resolved per antenna pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Centroid-to-centroid propagation distance along this path.
    pub reference_distance: f64,
    /// Random phase shared by every antenna pair of the path.
    pub phase: f64,
    /// Scatterer position, `None` for the line-of-sight path.
    pub scatterer: Option<Vec3>,
    /// Per-pair distance, index `m·N + n`.
    pub distance: Vec<f64>,
    /// Per-pair departure angles `(θ, φ)` in the BS body frame.
    pub aod: Vec<(f64, f64)>,
    /// Per-pair arrival angles `(ϑ, ϕ)` in the UE body frame.
    pub aoa: Vec<(f64, f64)>,
}

/// Everything needed to assemble one user's channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub wavelength: f64,
    pub path_loss_exponent: f64,
    pub paths: Vec<PathRecord>,
}

impl PathGeometry {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// `sqrt(NM/L) · C ⊙ A ⊙ G^UE` for every path and pair, index `[ℓ][m·N + n]`.
    fn common_factors(&self, rx: &RadiationPattern) -> Vec<Vec<C64>> {
        let nm = (self.n_tx * self.n_rx) as f64;
        let prefactor = (nm / self.paths.len() as f64).sqrt();
        let k = 2.0 * PI / self.wavelength;
        self.paths
            .iter()
            .map(|path| {
                path.distance
                    .iter()
                    .zip(&path.aoa)
                    .map(|(&d, &(ta, pa))| {
                        let amp = (self.wavelength / (4.0 * PI * d)).powf(self.path_loss_exponent / 2.0);
                        let c = C64::from_polar(amp, path.phase);
                        let a = C64::from_polar(1.0 / nm.sqrt(), -k * (d - path.reference_distance));
                        c * a * (prefactor * rx.gain(ta, pa))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub min: Vec3,
    pub max: Vec3,
}

impl Box3 {
    fn sample(&self, rng: &mut impl RngExt) -> Vec3 {
        let mut p = [0.0; 3];
        for i in 0..3 {
            p[i] = if self.max[i] > self.min[i] {
                rng.random_range(self.min[i]..self.max[i])
            } else {
                self.min[i]
            };
        }
        p
    }
}

/// Planar array dimensions with spacing in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaSpec {
    pub n_h: usize,
    pub n_v: usize,
    pub spacing_wavelengths: f64,
}

impl UpaSpec {
    pub fn count(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn layout(&self, wavelength: f64) -> Result<ArrayLayout> {
        ArrayLayout::upa(self.n_h, self.n_v, self.spacing_wavelengths * wavelength)
    }
}

/// Parameters of the synthetic geometric scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub carrier_hz: f64,
    pub bs: UpaSpec,
    /// BS array centroid; the BS body frame is the global frame.
    pub bs_position: Vec3,
    pub ue: UpaSpec,
    pub users: usize,
    /// Explicit user centroids; drawn from `user_box` when `None`.
    pub user_positions: Option<Vec<Vec3>>,
    pub user_box: Box3,
    /// Paths per user including the line-of-sight path.
    pub paths_per_user: usize,
    pub scatterer_box: Box3,
    pub path_loss_exponent: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 30e9,
            bs: UpaSpec {
                n_h: 10,
                n_v: 10,
                spacing_wavelengths: 0.5,
            },
            bs_position: [0.0, 0.0, 10.0],
            ue: UpaSpec {
                n_h: 2,
                n_v: 2,
                spacing_wavelengths: 0.5,
            },
            users: 3,
            user_positions: None,
            user_box: Box3 {
                min: [80.0, -50.0, 1.5],
                max: [160.0, 50.0, 1.5],
            },
            paths_per_user: 5,
            scatterer_box: Box3 {
                min: [10.0, -80.0, 0.0],
                max: [170.0, 80.0, 30.0],
            },
            path_loss_exponent: 2.0,
        }
    }
}

/// Generated scenario: the BS array plus per-user geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub wavelength: f64,
    pub bs_layout: ArrayLayout,
    pub ue_layout: ArrayLayout,
    pub bs_position: Vec3,
    pub user_positions: Vec<Vec3>,
    /// Yaw of each UE body frame; the UE broadside faces the BS horizontally.
    pub user_yaws: Vec<f64>,
    pub users: Vec<PathGeometry>,
}

impl Scenario {
    pub fn n_tx(&self) -> usize {
        self.bs_layout.len()
    }

    pub fn selection_channels(&self, set: &CandidateSet, rx: &RadiationPattern) -> Vec<EffectiveChannel> {
        self.users.iter().map(|g| effective_channel_sel(g, set, rx)).collect()
    }

    pub fn coefficient_channels(&self, degree: usize, rx: &RadiationPattern) -> Vec<EffectiveChannel> {
        self.users.iter().map(|g| effective_channel_cof(g, degree, rx)).collect()
    }
}

/// Places the arrays, draws scatterers and phases, and resolves every
/// per-antenna path exactly from the geometry (single bounce).
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    if cfg.users == 0 || cfg.paths_per_user == 0 {
        return Err(Error::Config("need at least one user and one path".into()));
    }
    if !(cfg.carrier_hz > 0.0) {
        return Err(Error::Config("carrier frequency must be positive".into()));
    }
    let wavelength = crate::units::wavelength(cfg.carrier_hz);
    let bs_layout = cfg.bs.layout(wavelength)?;
    let ue_layout = cfg.ue.layout(wavelength)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let user_positions = match &cfg.user_positions {
        Some(p) if p.len() == cfg.users => p.clone(),
        Some(p) => {
            return Err(Error::Config(format!(
                "{} user positions given for {} users",
                p.len(),
                cfg.users
            )))
        }
        None => (0..cfg.users).map(|_| cfg.user_box.sample(&mut rng)).collect(),
    };

    let bs_elems: Vec<Vec3> = bs_layout
        .positions()
        .iter()
        .map(|&p| add(cfg.bs_position, p))
        .collect();

    let mut users = Vec::with_capacity(cfg.users);
    let mut yaws = Vec::with_capacity(cfg.users);
    for &centroid in &user_positions {
        let to_bs = sub(cfg.bs_position, centroid);
        if norm(to_bs) < 1e-9 {
            return Err(Error::Generation("user coincides with the BS".into()));
        }
        let yaw = to_bs[1].atan2(to_bs[0]);
        let ue_elems: Vec<Vec3> = ue_layout
            .positions()
            .iter()
            .map(|&q| add(centroid, rotate_z(q, yaw)))
            .collect();

        let mut paths = Vec::with_capacity(cfg.paths_per_user);
        for l in 0..cfg.paths_per_user {
            let scatterer = (l > 0).then(|| cfg.scatterer_box.sample(&mut rng));
            let phase = rng.random_range(0.0..2.0 * PI);
            paths.push(resolve_path(
                &bs_elems,
                &ue_elems,
                cfg.bs_position,
                centroid,
                yaw,
                scatterer,
                phase,
            )?);
        }
        yaws.push(yaw);
        users.push(PathGeometry {
            n_tx: bs_elems.len(),
            n_rx: ue_elems.len(),
            wavelength,
            path_loss_exponent: cfg.path_loss_exponent,
            paths,
        });
    }

    Ok(Scenario {
        wavelength,
        bs_layout,
        ue_layout,
        bs_position: cfg.bs_position,
        user_positions,
        user_yaws: yaws,
        users,
    })
}

fn resolve_path(
    bs_elems: &[Vec3],
    ue_elems: &[Vec3],
    bs_centroid: Vec3,
    ue_centroid: Vec3,
    ue_yaw: f64,
    scatterer: Option<Vec3>,
    phase: f64,
) -> Result<PathRecord> {
    let leg = |a: Vec3, b: Vec3| -> Result<f64> {
        let d = norm(sub(b, a));
        if d < 1e-9 {
            Err(Error::Generation("degenerate zero-length path leg".into()))
        } else {
            Ok(d)
        }
    };
    let reference_distance = match scatterer {
        None => leg(bs_centroid, ue_centroid)?,
        Some(s) => leg(bs_centroid, s)? + leg(s, ue_centroid)?,
    };
    let n_pairs = bs_elems.len() * ue_elems.len();
    let mut distance = Vec::with_capacity(n_pairs);
    let mut aod = Vec::with_capacity(n_pairs);
    let mut aoa = Vec::with_capacity(n_pairs);
    for &r in ue_elems {
        for &p in bs_elems {
            let (first_hop, d) = match scatterer {
                None => (r, leg(p, r)?),
                Some(s) => (s, leg(p, s)? + leg(s, r)?),
            };
            distance.push(d);
            aod.push(spherical_angles(sub(first_hop, p)));
            let back = match scatterer {
                None => sub(p, r),
                Some(s) => sub(s, r),
            };
            aoa.push(spherical_angles(rotate_z(back, -ue_yaw)));
        }
    }
    Ok(PathRecord {
        reference_distance,
        phase,
        scatterer,
        distance,
        aod,
        aoa,
    })
}

/// Channel with one pattern per BS antenna (`M × N`).
pub fn assemble_channel(
    geom: &PathGeometry,
    tx_patterns: &[RadiationPattern],
    rx_pattern: &RadiationPattern,
) -> Result<CMat> {
    if tx_patterns.len() != geom.n_tx {
        return Err(Error::Config(format!(
            "{} transmit patterns for {} antennas",
            tx_patterns.len(),
            geom.n_tx
        )));
    }
    let n = geom.n_tx;
    let factors = geom.common_factors(rx_pattern);
    let mut h = CMat::zeros(geom.n_rx, n);
    for (path, z) in geom.paths.iter().zip(&factors) {
        for m in 0..geom.n_rx {
            for (ni, pat) in tx_patterns.iter().enumerate() {
                let (t, p) = path.aod[m * n + ni];
                h[(m, ni)] += z[m * n + ni] * pat.gain(t, p);
            }
        }
    }
    Ok(h)
}

/// One path of the far-field model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldPath {
    pub gain: C64,
    pub aod: (f64, f64),
    pub aoa: (f64, f64),
    pub bs_gain: f64,
    pub ue_gain: f64,
}

/// `sqrt(NM/L) Σ_ℓ C_ℓ G^UE G^BS a_UE a_BSᴴ` with UPA responses on both sides.
pub fn far_field_channel(
    paths: &[FarFieldPath],
    bs: &ArrayLayout,
    ue: &ArrayLayout,
    wavelength: f64,
) -> CMat {
    let (n, m) = (bs.len(), ue.len());
    let prefactor = ((n * m) as f64 / paths.len().max(1) as f64).sqrt();
    let mut h = CMat::zeros(m, n);
    for p in paths {
        let a_bs = upa_arv(p.aod.0, p.aod.1, bs.n_h(), bs.n_v(), bs.spacing(), wavelength);
        let a_ue = upa_arv(p.aoa.0, p.aoa.1, ue.n_h(), ue.n_v(), ue.spacing(), wavelength);
        let g = p.gain * (prefactor * p.bs_gain * p.ue_gain);
        h += (a_ue * a_bs.adjoint()) * g;
    }
    h
}

/// Which lifted representation a channel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    Plain,
    Selection,
    Coefficients,
}

impl ChannelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Plain => "plain",
            ChannelMode::Selection => "sel",
            ChannelMode::Coefficients => "cof",
        }
    }
}

/// Antenna-domain precoder: the right factor that turns a lifted channel into
/// the physical one.
#[derive(Debug, Clone, PartialEq)]
pub enum AntennaPrecoder {
    /// Chosen candidate index per antenna (the one-hot `b_(n)`).
    Selection(Vec<usize>),
    /// Harmonic coefficients per antenna (`c_(n)`).
    Coefficients(Vec<DVector<f64>>),
}

impl AntennaPrecoder {
    pub fn n_antennas(&self) -> usize {
        match self {
            AntennaPrecoder::Selection(s) => s.len(),
            AntennaPrecoder::Coefficients(c) => c.len(),
        }
    }

    /// Dense `b_(n)` or `c_(n)` for antenna `n` with the given block width.
    pub fn vector(&self, n: usize, width: usize) -> DVector<f64> {
        match self {
            AntennaPrecoder::Selection(s) => {
                let mut b = DVector::zeros(width);
                b[s[n]] = 1.0;
                b
            }
            AntennaPrecoder::Coefficients(c) => c[n].clone(),
        }
    }

    /// Block-diagonal `F_sel` / `F_cof` of size `N·width × N`.
    pub fn block_diagonal(&self, width: usize) -> DMatrix<f64> {
        let n = self.n_antennas();
        let mut f = DMatrix::zeros(n * width, n);
        for i in 0..n {
            f.view_mut((i * width, i), (width, 1))
                .copy_from(&self.vector(i, width));
        }
        f
    }

    /// Per-antenna patterns this precoder realizes.
    pub fn patterns(&self, candidates: Option<&CandidateSet>) -> Result<Vec<RadiationPattern>> {
        match self {
            AntennaPrecoder::Selection(s) => {
                let set = candidates
                    .ok_or_else(|| Error::Config("selection precoder needs a candidate set".into()))?;
                Ok(s.iter().map(|&i| set.get(i).clone()).collect())
            }
            AntennaPrecoder::Coefficients(c) => c
                .iter()
                .map(|v| Ok(RadiationPattern::from_harmonics(ShCoefficients::new(v.clone())?)))
                .collect(),
        }
    }
}

/// A user's channel, possibly lifted: `M × N·block` where column block `n`
/// belongs to antenna `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub mode: ChannelMode,
    pub n_antennas: usize,
    pub block: usize,
    pub matrix: CMat,
}

impl EffectiveChannel {
    pub fn plain(h: CMat) -> Self {
        Self {
            mode: ChannelMode::Plain,
            n_antennas: h.ncols(),
            block: 1,
            matrix: h,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.matrix.nrows()
    }

    /// `H_(n)`, the `M × block` slice of antenna `n`.
    pub fn antenna_block(&self, n: usize) -> nalgebra::DMatrixView<'_, C64> {
        self.matrix.columns(n * self.block, self.block)
    }

    /// `H_(n) v` for a real per-antenna vector.
    pub fn antenna_column(&self, n: usize, v: &DVector<f64>) -> CVec {
        let blk = self.antenna_block(n);
        let mut out = CVec::zeros(blk.nrows());
        for (j, &w) in v.iter().enumerate() {
            if w != 0.0 {
                out.axpy(C64::from(w), &blk.column(j), C64::from(1.0));
            }
        }
        out
    }

    /// Physical channel `H_lift · F_ant`.
    pub fn apply(&self, antenna: &AntennaPrecoder) -> CMat {
        match (self.mode, antenna) {
            (ChannelMode::Plain, _) => self.matrix.clone(),
            _ => {
                let mut h = CMat::zeros(self.n_rx(), self.n_antennas);
                for n in 0..self.n_antennas {
                    let v = antenna.vector(n, self.block);
                    h.set_column(n, &self.antenna_column(n, &v));
                }
                h
            }
        }
    }
}

/// Lifted channel of the selection model (`M × N·S`).
pub fn effective_channel_sel(
    geom: &PathGeometry,
    set: &CandidateSet,
    rx_pattern: &RadiationPattern,
) -> EffectiveChannel {
    let (n, s) = (geom.n_tx, set.len());
    let factors = geom.common_factors(rx_pattern);
    let mut h = CMat::zeros(geom.n_rx, n * s);
    for (path, z) in geom.paths.iter().zip(&factors) {
        for m in 0..geom.n_rx {
            for ni in 0..n {
                let (t, p) = path.aod[m * n + ni];
                let zm = z[m * n + ni];
                for (si, pat) in set.patterns().iter().enumerate() {
                    h[(m, ni * s + si)] += zm * pat.gain(t, p);
                }
            }
        }
    }
    EffectiveChannel {
        mode: ChannelMode::Selection,
        n_antennas: n,
        block: s,
        matrix: h,
    }
}

/// Lifted channel of the harmonic synthesis model (`M × N·T`).
pub fn effective_channel_cof(
    geom: &PathGeometry,
    degree: usize,
    rx_pattern: &RadiationPattern,
) -> EffectiveChannel {
    let (n, t_len) = (geom.n_tx, coefficient_count(degree));
    let factors = geom.common_factors(rx_pattern);
    let mut eval = BasisEvaluator::new(degree);
    let mut gamma = vec![0.0; t_len];
    let mut h = CMat::zeros(geom.n_rx, n * t_len);
    for (path, z) in geom.paths.iter().zip(&factors) {
        for m in 0..geom.n_rx {
            for ni in 0..n {
                let (t, p) = path.aod[m * n + ni];
                eval.eval_into(t, p, &mut gamma);
                let zm = z[m * n + ni];
                for (ti, &y) in gamma.iter().enumerate() {
                    h[(m, ni * t_len + ti)] += zm * y;
                }
            }
        }
    }
    EffectiveChannel {
        mode: ChannelMode::Coefficients,
        n_antennas: n,
        block: t_len,
        matrix: h,
    }
}

/// Writes a channel dump: header `M N mode block`, then `M` rows of
/// `N·block` entries written as `re im` pairs.
pub fn write_channel(mut w: impl Write, ch: &EffectiveChannel) -> Result<()> {
    writeln!(
        w,
        "{} {} {} {}",
        ch.n_rx(),
        ch.n_antennas,
        ch.mode.as_str(),
        ch.block
    )?;
    for row in ch.matrix.row_iter() {
        let line: Vec<String> = row.iter().map(|z| format!("{:e} {:e}", z.re, z.im)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_channel(r: impl BufRead) -> Result<EffectiveChannel> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty channel file"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [m, n, mode, block] = fields[..] else {
        return Err(Error::parse(1, "expected header `M N mode block`"));
    };
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(1, e.to_string()));
    let (m, n, block) = (int(m)?, int(n)?, int(block)?);
    let mode = match mode {
        "plain" => ChannelMode::Plain,
        "sel" => ChannelMode::Selection,
        "cof" => ChannelMode::Coefficients,
        other => return Err(Error::parse(1, format!("unknown mode `{other}`"))),
    };
    let cols = n * block;
    let mut matrix = CMat::zeros(m, cols);
    for row in 0..m {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::parse(row + 2, "missing matrix row"))?;
        let line = line?;
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if vals.len() != 2 * cols {
            return Err(Error::parse(i + 1, format!("expected {} numbers", 2 * cols)));
        }
        for c in 0..cols {
            matrix[(row, c)] = C64::new(vals[2 * c], vals[2 * c + 1]);
        }
    }
    Ok(EffectiveChannel {
        mode,
        n_antennas: n,
        block,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pair(distance: f64, phase: f64) -> PathGeometry {
        PathGeometry {
            n_tx: 1,
            n_rx: 1,
            wavelength: 0.01,
            path_loss_exponent: 2.0,
            paths: vec![PathRecord {
                reference_distance: distance - 0.002,
                phase,
                scatterer: None,
                distance: vec![distance],
                aod: vec![(1.0, 0.0)],
                aoa: vec![(1.0, 0.0)],
            }],
        }
    }

    #[test]
    fn arv_broadside_and_phase() {
        let a = upa_arv(PI / 2.0, 0.0, 4, 4, 0.005, 0.01);
        for z in a.iter() {
            assert!((z - C64::from(0.25)).norm() < 1e-15);
        }
        // ϖ_h = 0.25: d/λ = 0.5, sinφ sinθ = 0.5.
        let a = upa_arv(PI / 2.0, PI / 6.0, 2, 1, 0.005, 0.01);
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - C64::from(s)).norm() < 1e-15);
        assert!((a[1] - C64::new(0.0, -s)).norm() < 1e-15);
        let a = upa_arv(0.7, -2.2, 4, 4, 0.005, 0.01);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_channel_closed_form() {
        let g = single_pair(50.0, 0.0);
        let iso = RadiationPattern::isotropic();
        let h = assemble_channel(&g, &[iso.clone()], &iso).unwrap();
        let lambda = 0.01;
        let amp = lambda / (4.0 * PI * 50.0);
        let want = C64::from_polar(amp, -2.0 * PI / lambda * 0.002);
        assert!((h[(0, 0)] - want).norm() < 1e-15);
    }

    #[test]
    fn layout_is_centered_grid() {
        let l = ArrayLayout::upa(3, 2, 0.5).unwrap();
        assert_eq!(l.len(), 6);
        assert_eq!(l.positions()[0], [0.0, -0.5, -0.25]);
        assert_eq!(l.positions()[1], [0.0, -0.5, 0.25]);
        assert_eq!(l.positions()[5], [0.0, 0.5, 0.25]);
        assert!(ArrayLayout::upa(0, 2, 0.5).is_err());
    }

    #[test]
    fn antenna_precoder_block_diagonal() {
        let sel = AntennaPrecoder::Selection(vec![1, 0]);
        let f = sel.block_diagonal(3);
        assert_eq!(f.shape(), (6, 2));
        assert_eq!(f[(1, 0)], 1.0);
        assert_eq!(f[(3, 1)], 1.0);
        assert_eq!(f.sum(), 2.0);
    }

    #[test]
    fn channel_dump_roundtrip() {
        let h = CMat::from_fn(2, 6, |i, j| C64::new(i as f64 - 0.5, j as f64 * 1e-7));
        let ch = EffectiveChannel {
            mode: ChannelMode::Selection,
            n_antennas: 3,
            block: 2,
            matrix: h,
        };
        let mut buf = Vec::new();
        write_channel(&mut buf, &ch).unwrap();
        assert_eq!(read_channel(buf.as_slice()).unwrap(), ch);
        assert!(read_channel("1 1 foo 1\n0 0\n".as_bytes()).is_err());
        assert!(read_channel("1 1 plain 1\n0\n".as_bytes()).is_err());
    }
}
