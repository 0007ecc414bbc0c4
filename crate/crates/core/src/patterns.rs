//! Radiation patterns and candidate sets for pattern selection.
//!
//! A pattern is a magnitude (field) gain `G(θ, φ)`; its power gain is `G²`.
//! A normalized pattern radiates the same total power as an isotropic
//! antenna: `∮ G² sinθ dθ dφ = 4π`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::sph_harmonics::{self, ShCoefficients, SphereGrid};
use crate::{Error, Result};

/// Unit direction vector for inclination `θ` and azimuth `φ`.
pub fn direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Great-circle angle between two directions.
pub fn angular_distance(theta_a: f64, phi_a: f64, theta_b: f64, phi_b: f64) -> f64 {
    let a = direction(theta_a, phi_a);
    let b = direction(theta_b, phi_b);
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos()
}

/// Pattern sampled on a regular `θ × φ` grid, bilinearly interpolated and
/// periodic in `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPattern {
    thetas: Vec<f64>,
    phis: Vec<f64>,
    values: Vec<f64>,
    source: Option<PathBuf>,
}

impl TabulatedPattern {
    /// Builds from `(θ, φ, gain)` rows that cover a full tensor grid.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        let mut thetas: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut phis: Vec<f64> = rows.iter().map(|r| r.1.rem_euclid(2.0 * PI)).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        phis.sort_by(f64::total_cmp);
        phis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if thetas.len() * phis.len() != rows.len() {
            return Err(Error::Domain(format!(
                "{} samples do not form a {}×{} tensor grid",
                rows.len(),
                thetas.len(),
                phis.len()
            )));
        }
        let mut values = vec![f64::NAN; rows.len()];
        let find = |xs: &[f64], x: f64| xs.iter().position(|&v| (v - x).abs() < 1e-12);
        for &(t, p, g) in rows {
            let i = find(&thetas, t).expect("θ was collected from rows");
            let j = find(&phis, p.rem_euclid(2.0 * PI)).expect("φ was collected from rows");
            values[i * phis.len() + j] = g;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("duplicate samples in pattern table".into()));
        }
        Ok(Self {
            thetas,
            phis,
            values,
            source: None,
        })
    }

    /// Samples taken on `grid` in its θ-major order.
    pub fn from_grid(grid: &SphereGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            thetas: grid.thetas().to_vec(),
            phis: grid.phis().to_vec(),
            values,
            source: None,
        })
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source = Some(path.into());
        self
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn gain(&self, theta: f64, phi: f64) -> f64 {
        let (i0, i1, wt) = bracket(&self.thetas, theta);
        let phi = phi.rem_euclid(2.0 * PI);
        let np = self.phis.len();
        // Periodic bracket in φ.
        let (j0, j1, wp) = if np == 1 {
            (0, 0, 0.0)
        } else {
            match self.phis.iter().position(|&p| p > phi) {
                Some(0) | None => {
                    let last = self.phis[np - 1];
                    let span = self.phis[0] + 2.0 * PI - last;
                    let off = (phi - last).rem_euclid(2.0 * PI);
                    (np - 1, 0, off / span)
                }
                Some(j) => {
                    let span = self.phis[j] - self.phis[j - 1];
                    (j - 1, j, (phi - self.phis[j - 1]) / span)
                }
            }
        };
        let v = |i: usize, j: usize| self.values[i * np + j];
        let a = v(i0, j0) * (1.0 - wp) + v(i0, j1) * wp;
        let b = v(i1, j0) * (1.0 - wp) + v(i1, j1) * wp;
        a * (1.0 - wt) + b * wt
    }
}

/// Linear bracket with clamping at both ends.
fn bracket(xs: &[f64], x: f64) -> (usize, usize, f64) {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return (0, 0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let j = xs.partition_point(|&v| v <= x);
    (j - 1, j, (x - xs[j - 1]) / (xs[j] - xs[j - 1]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternShape {
    /// Same gain in every direction.
    Constant(f64),
    /// `exp(-(ln2 / 2) (2Δ / bw)²) + floor`, with `Δ` the great-circle angle
    /// to the beam center. The power pattern drops by 3 dB at `Δ = bw / 2`.
    GaussianBeam {
        theta0: f64,
        phi0: f64,
        bw3db: f64,
        floor: f64,
    },
    Tabulated(TabulatedPattern),
    Harmonics(ShCoefficients),
}

/// Magnitude gain pattern with an overall scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationPattern {
    shape: PatternShape,
    scale: f64,
    normalized: bool,
}

impl RadiationPattern {
    pub fn new(shape: PatternShape) -> Self {
        Self {
            shape,
            scale: 1.0,
            normalized: false,
        }
    }

    /// The isotropic radiator, `G ≡ 1`.
    pub fn isotropic() -> Self {
        Self {
            shape: PatternShape::Constant(1.0),
            scale: 1.0,
            normalized: true,
        }
    }

    pub fn constant(gain: f64) -> Self {
        Self::new(PatternShape::Constant(gain))
    }

    /// Pattern synthesized from harmonic coefficients. Flagged normalized when
    /// `‖c‖² = 4π` within 1e-9.
    pub fn from_harmonics(c: ShCoefficients) -> Self {
        let normalized = (c.energy() - ShCoefficients::UNIT_ENERGY).abs() < 1e-9;
        Self {
            shape: PatternShape::Harmonics(c),
            scale: 1.0,
            normalized,
        }
    }

    pub fn shape(&self) -> &PatternShape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            scale: self.scale * alpha,
            normalized: false,
        }
    }

    pub fn gain(&self, theta: f64, phi: f64) -> f64 {
        let g = match &self.shape {
            PatternShape::Constant(g) => *g,
            PatternShape::GaussianBeam {
                theta0,
                phi0,
                bw3db,
                floor,
            } => {
                let delta = angular_distance(theta, phi, *theta0, *phi0);
                let r = 2.0 * delta / bw3db;
                (-0.5 * std::f64::consts::LN_2 * r * r).exp() + floor
            }
            PatternShape::Tabulated(t) => t.gain(theta, phi),
            PatternShape::Harmonics(c) => sph_harmonics::synthesize_gain(c, theta, phi),
        };
        self.scale * g
    }

    pub fn energy(&self, grid: &SphereGrid) -> f64 {
        sph_harmonics::pattern_energy(grid, |t, p| self.gain(t, p))
    }

    /// Smallest gain over the grid nodes.
    pub fn min_gain(&self, grid: &SphereGrid) -> f64 {
        grid.points()
            .map(|(t, p, _)| self.gain(t, p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Unnormalized Gaussian beam centered on `(θ₀, φ₀)`.
pub fn gaussian_beam(theta0: f64, phi0: f64, bw3db: f64, floor: f64) -> Result<RadiationPattern> {
    if !(bw3db > 0.0 && bw3db < PI) {
        return Err(Error::Domain(format!(
            "3 dB beamwidth {bw3db} rad outside (0, π)"
        )));
    }
    if !(floor >= 0.0) {
        return Err(Error::Domain(format!("beam floor {floor} must be nonnegative")));
    }
    Ok(RadiationPattern::new(PatternShape::GaussianBeam {
        theta0,
        phi0,
        bw3db,
        floor,
    }))
}

/// Rescales `p` so that `∮ G² sinθ dθ dφ = 4π` on `grid`.
pub fn normalize_pattern(p: &RadiationPattern, grid: &SphereGrid) -> Result<RadiationPattern> {
    let energy = p.energy(grid);
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Domain(format!(
            "cannot normalize a pattern with energy {energy}"
        )));
    }
    Ok(RadiationPattern {
        shape: p.shape.clone(),
        scale: p.scale * (ShCoefficients::UNIT_ENERGY / energy).sqrt(),
        normalized: true,
    })
}

/// Ordered set of normalized candidate patterns. Entry 0 is the fixed baseline
/// pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    patterns: Vec<RadiationPattern>,
}

impl CandidateSet {
    pub fn new(patterns: Vec<RadiationPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Config("candidate set must not be empty".into()));
        }
        if let Some(i) = patterns.iter().position(|p| !p.is_normalized()) {
            return Err(Error::Config(format!("candidate {i} is not normalized")));
        }
        Ok(Self { patterns })
    }

    pub fn single(pattern: RadiationPattern) -> Result<Self> {
        Self::new(vec![pattern])
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[RadiationPattern] {
        &self.patterns
    }

    pub fn get(&self, s: usize) -> &RadiationPattern {
        &self.patterns[s]
    }

    /// The fixed-antenna baseline pattern.
    pub fn baseline(&self) -> &RadiationPattern {
        &self.patterns[0]
    }

    /// Smallest gain of any candidate over the grid.
    pub fn min_gain(&self, grid: &SphereGrid) -> f64 {
        self.patterns
            .iter()
            .map(|p| p.min_gain(grid))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `ḡ(θ, φ)`: every candidate's gain in one direction.
pub fn candidate_gain_vector(set: &CandidateSet, theta: f64, phi: f64) -> DVector<f64> {
    DVector::from_iterator(set.len(), set.patterns.iter().map(|p| p.gain(theta, phi)))
}

/// Parameters of the synthetic Gaussian-beam candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSetParams {
    pub count: usize,
    pub theta_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub bw3db: f64,
    pub floor: f64,
}

impl Default for BeamSetParams {
    fn default() -> Self {
        Self {
            count: 64,
            theta_range: (FRAC_PI_2, PI),
            phi_range: (-FRAC_PI_2, FRAC_PI_2),
            bw3db: 85f64.to_radians(),
            floor: 1e-3,
        }
    }
}

/// Most-square factorization `count = rows × cols` with `rows <= cols`.
pub fn grid_factors(count: usize) -> Result<(usize, usize)> {
    if count == 0 {
        return Err(Error::Config("candidate count must be positive".into()));
    }
    let mut rows = (count as f64).sqrt() as usize;
    while rows > 1 && count % rows != 0 {
        rows -= 1;
    }
    Ok((rows.max(1), count / rows.max(1)))
}

/// Beam centers on the midpoints of a uniform `S_θ × S_φ` tensor grid, θ-major.
pub fn beam_centers(params: &BeamSetParams) -> Result<Vec<(f64, f64)>> {
    let (n_theta, n_phi) = grid_factors(params.count)?;
    let (t0, t1) = params.theta_range;
    let (p0, p1) = params.phi_range;
    let mut centers = Vec::with_capacity(params.count);
    for i in 0..n_theta {
        let theta = t0 + (i as f64 + 0.5) * (t1 - t0) / n_theta as f64;
        for j in 0..n_phi {
            let phi = p0 + (j as f64 + 0.5) * (p1 - p0) / n_phi as f64;
            centers.push((theta, phi));
        }
    }
    Ok(centers)
}

/// Normalized Gaussian beams steered over the configured angular box. The
/// beam closest to broadside (`θ = π/2, φ = 0`) is moved to index 0 so it can
/// serve as the fixed baseline; the others keep their grid order.
pub fn fictitious_candidate_set(params: &BeamSetParams, grid: &SphereGrid) -> Result<CandidateSet> {
    let centers = beam_centers(params)?;
    let broadside = centers
        .iter()
        .enumerate()
        .map(|(i, &(t, p))| (i, angular_distance(t, p, FRAC_PI_2, 0.0)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    let mut order: Vec<usize> = vec![broadside];
    order.extend((0..centers.len()).filter(|&i| i != broadside));
    let patterns = order
        .into_iter()
        .map(|i| {
            let (t, p) = centers[i];
            normalize_pattern(&gaussian_beam(t, p, params.bw3db, params.floor)?, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    CandidateSet::new(patterns)
}

/// Writes a manifest: `S <count>` then `s theta0 phi0 bw3dB floor` for beams
/// or `s tabulated <path>` for tables (with a recorded source path).
pub fn write_manifest(mut w: impl Write, set: &CandidateSet) -> Result<()> {
    writeln!(w, "S {}", set.len())?;
    for (s, p) in set.patterns.iter().enumerate() {
        match p.shape() {
            PatternShape::GaussianBeam {
                theta0,
                phi0,
                bw3db,
                floor,
            } => writeln!(w, "{} {theta0:e} {phi0:e} {bw3db:e} {floor:e}", s + 1)?,
            PatternShape::Tabulated(t) => match t.source() {
                Some(path) => writeln!(w, "{} tabulated {}", s + 1, path.display())?,
                None => {
                    return Err(Error::Config(format!(
                        "candidate {} has no source table path",
                        s + 1
                    )))
                }
            },
            _ => {
                return Err(Error::Config(format!(
                    "candidate {} cannot be written to a manifest",
                    s + 1
                )))
            }
        }
    }
    Ok(())
}

/// Reads a manifest. Relative table paths resolve against `base_dir`; every
/// entry is normalized on `grid`.
pub fn read_manifest(r: impl BufRead, base_dir: &Path, grid: &SphereGrid) -> Result<CandidateSet> {
    let mut count = None;
    let mut patterns = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if count.is_none() {
            match fields[..] {
                ["S", n] => {
                    count = Some(
                        n.parse::<usize>()
                            .map_err(|e| Error::parse(lineno, format!("bad count: {e}")))?,
                    )
                }
                _ => return Err(Error::parse(lineno, "first line must be `S <count>`")),
            }
            continue;
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad pattern index: {e}")))?;
        if index != patterns.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!("expected pattern index {}, found {index}", patterns.len() + 1),
            ));
        }
        let pattern = match fields[1..] {
            ["tabulated", path] => {
                let path = base_dir.join(path);
                let file = std::fs::File::open(&path)?;
                let rows = sph_harmonics::read_pattern_table(std::io::BufReader::new(file))?;
                RadiationPattern::new(PatternShape::Tabulated(
                    TabulatedPattern::from_rows(&rows)?.with_source(path),
                ))
            }
            [t, p, bw, fl] => {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::parse(lineno, format!("bad number `{s}`: {e}")))
                };
                gaussian_beam(num(t)?, num(p)?, num(bw)?, num(fl)?)?
            }
            _ => return Err(Error::parse(lineno, "unrecognized pattern line")),
        };
        patterns.push(normalize_pattern(&pattern, grid)?);
    }
    let count = count.ok_or_else(|| Error::parse(0, "missing `S <count>` line"))?;
    if count != patterns.len() {
        return Err(Error::parse(
            0,
            format!("header declares {count} patterns, found {}", patterns.len()),
        ));
    }
    CandidateSet::new(patterns)
}
