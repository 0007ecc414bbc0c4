//! Experiment configuration: a TOML file with `[scenario]`, `[solver]` and
//! `[sweep]` tables. Every key is optional; see `configs/default.toml` for the
//! full schema with defaults.

use std::path::Path;

use serde::Deserialize;
use trihybrid::channel::{Box3, ScenarioConfig, UpaSpec};
use trihybrid::manifold::SphereOptions;
use trihybrid::patterns::BeamSetParams;
use trihybrid::wmmse::SolverOptions;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub carrier_ghz: f64,
    pub bs_n_h: usize,
    pub bs_n_v: usize,
    pub bs_spacing: f64,
    pub bs_position: [f64; 3],
    pub ue_n_h: usize,
    pub ue_n_v: usize,
    pub ue_spacing: f64,
    pub users: usize,
    pub streams_per_user: usize,
    pub paths: usize,
    pub user_box_min: [f64; 3],
    pub user_box_max: [f64; 3],
    pub scatterer_box_min: [f64; 3],
    pub scatterer_box_max: [f64; 3],
    pub path_loss_exponent: f64,
    pub noise_dbm: f64,
    pub candidates: usize,
    pub beamwidth_deg: f64,
    pub beam_floor: f64,
    pub sh_degree: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        let b = BeamSetParams::default();
        Self {
            carrier_ghz: s.carrier_hz / 1e9,
            bs_n_h: s.bs.n_h,
            bs_n_v: s.bs.n_v,
            bs_spacing: s.bs.spacing_wavelengths,
            bs_position: s.bs_position,
            ue_n_h: s.ue.n_h,
            ue_n_v: s.ue.n_v,
            ue_spacing: s.ue.spacing_wavelengths,
            users: s.users,
            streams_per_user: 2,
            paths: s.paths_per_user,
            user_box_min: s.user_box.min,
            user_box_max: s.user_box.max,
            scatterer_box_min: s.scatterer_box.min,
            scatterer_box_max: s.scatterer_box.max,
            path_loss_exponent: s.path_loss_exponent,
            noise_dbm: -90.0,
            candidates: b.count,
            beamwidth_deg: b.bw3db.to_degrees(),
            beam_floor: b.floor,
            sh_degree: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStart {
    /// Start the reconfigurable models from the fixed-pattern WMMSE solution.
    Fixed,
    /// Start every method from the shared random precoder.
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iters: usize,
    pub tol: f64,
    pub rho: f64,
    pub sphere_iters: usize,
    pub sphere_tol: f64,
    pub sphere_restarts: usize,
    pub decomposition_iters: usize,
    pub warm_start: WarmStart,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            max_iters: o.max_iters,
            tol: o.tol,
            rho: o.rho,
            sphere_iters: o.sphere.max_iters,
            sphere_tol: o.sphere.tol,
            sphere_restarts: o.sphere.restarts,
            decomposition_iters: o.decomposition_iters,
            warm_start: WarmStart::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Model1,
    Model2,
    WmmseFixed,
    Zf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Model1, Method::Model2, Method::WmmseFixed, Method::Zf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Model1 => "model1",
            Method::Model2 => "model2",
            Method::WmmseFixed => "wmmse_fixed",
            Method::Zf => "zf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub power_dbm: Vec<f64>,
    /// RF chains as offsets from the total stream count.
    pub n_rf_offset: Vec<usize>,
    /// Square BS array sides; empty keeps `bs_n_h × bs_n_v`.
    pub bs_side: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            power_dbm: vec![0.0],
            n_rf_offset: vec![3],
            bs_side: Vec::new(),
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub power_dbm: f64,
    pub n_rf_offset: usize,
    pub bs_n_h: usize,
    pub bs_n_v: usize,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self, text: &str) -> Result<(), CliError> {
        let s = &self.scenario;
        let v = &self.solver;
        let w = &self.sweep;
        let checks: [(&str, &str, bool, &str); 22] = [
            ("scenario", "carrier_ghz", s.carrier_ghz > 0.0, "must be positive"),
            ("scenario", "bs_n_h", s.bs_n_h > 0, "must be positive"),
            ("scenario", "bs_n_v", s.bs_n_v > 0, "must be positive"),
            ("scenario", "bs_spacing", s.bs_spacing > 0.0, "must be positive"),
            ("scenario", "ue_n_h", s.ue_n_h > 0, "must be positive"),
            ("scenario", "ue_n_v", s.ue_n_v > 0, "must be positive"),
            ("scenario", "users", s.users > 0, "must be positive"),
            ("scenario", "streams_per_user", s.streams_per_user > 0, "must be positive"),
            (
                "scenario",
                "streams_per_user",
                s.streams_per_user <= s.ue_n_h * s.ue_n_v,
                "exceeds the UE antenna count",
            ),
            ("scenario", "paths", s.paths > 0, "must be positive"),
            ("scenario", "path_loss_exponent", s.path_loss_exponent > 0.0, "must be positive"),
            ("scenario", "candidates", s.candidates > 0, "must be positive"),
            (
                "scenario",
                "beamwidth_deg",
                s.beamwidth_deg > 0.0 && s.beamwidth_deg <= 360.0,
                "must lie in (0, 360]",
            ),
            ("scenario", "beam_floor", s.beam_floor >= 0.0, "must be non-negative"),
            ("solver", "max_iters", v.max_iters > 0, "must be positive"),
            ("solver", "tol", v.tol >= 0.0, "must be non-negative"),
            ("solver", "rho", v.rho > 0.0 && v.rho <= 1.0, "must lie in (0, 1]"),
            ("solver", "sphere_restarts", v.sphere_restarts > 0, "must be positive"),
            ("sweep", "power_dbm", !w.power_dbm.is_empty(), "must not be empty"),
            ("sweep", "n_rf_offset", !w.n_rf_offset.is_empty(), "must not be empty"),
            ("sweep", "seeds", !w.seeds.is_empty(), "must not be empty"),
            ("sweep", "methods", !w.methods.is_empty(), "must not be empty"),
        ];
        for (section, key, ok, msg) in checks {
            if !ok {
                return Err(key_error(text, section, key, msg));
            }
        }
        if w.power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(key_error(text, "sweep", "power_dbm", "entries must be finite"));
        }
        if w.bs_side.contains(&0) {
            return Err(key_error(text, "sweep", "bs_side", "entries must be positive"));
        }
        let d = s.users * s.streams_per_user;
        for p in self.points() {
            let n = p.bs_n_h * p.bs_n_v;
            if d + p.n_rf_offset > n {
                return Err(key_error(
                    text,
                    "sweep",
                    "n_rf_offset",
                    &format!("D + {} RF chains exceed the {n} BS antennas", p.n_rf_offset),
                ));
            }
        }
        Ok(())
    }

    /// Sweep grid in row-major order over (array size, RF chains, power).
    pub fn points(&self) -> Vec<SweepPoint> {
        let shapes: Vec<(usize, usize)> = if self.sweep.bs_side.is_empty() {
            vec![(self.scenario.bs_n_h, self.scenario.bs_n_v)]
        } else {
            self.sweep.bs_side.iter().map(|&a| (a, a)).collect()
        };
        let mut out = Vec::new();
        for &(bs_n_h, bs_n_v) in &shapes {
            for &n_rf_offset in &self.sweep.n_rf_offset {
                for &power_dbm in &self.sweep.power_dbm {
                    out.push(SweepPoint {
                        index: out.len(),
                        power_dbm,
                        n_rf_offset,
                        bs_n_h,
                        bs_n_v,
                    });
                }
            }
        }
        out
    }

    pub fn total_streams(&self) -> usize {
        self.scenario.users * self.scenario.streams_per_user
    }

    pub fn scenario_config(&self, point: &SweepPoint) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            carrier_hz: s.carrier_ghz * 1e9,
            bs: UpaSpec {
                n_h: point.bs_n_h,
                n_v: point.bs_n_v,
                spacing_wavelengths: s.bs_spacing,
            },
            bs_position: s.bs_position,
            ue: UpaSpec {
                n_h: s.ue_n_h,
                n_v: s.ue_n_v,
                spacing_wavelengths: s.ue_spacing,
            },
            users: s.users,
            user_positions: None,
            user_box: Box3 {
                min: s.user_box_min,
                max: s.user_box_max,
            },
            paths_per_user: s.paths,
            scatterer_box: Box3 {
                min: s.scatterer_box_min,
                max: s.scatterer_box_max,
            },
            path_loss_exponent: s.path_loss_exponent,
        }
    }

    pub fn beam_params(&self) -> BeamSetParams {
        BeamSetParams {
            count: self.scenario.candidates,
            bw3db: self.scenario.beamwidth_deg.to_radians(),
            floor: self.scenario.beam_floor,
            ..BeamSetParams::default()
        }
    }

    pub fn solver_options(&self, seed: u64) -> SolverOptions {
        let v = &self.solver;
        SolverOptions {
            max_iters: v.max_iters,
            tol: v.tol,
            rho: v.rho,
            sphere: SphereOptions {
                max_iters: v.sphere_iters,
                tol: v.sphere_tol,
                restarts: v.sphere_restarts,
                seed,
                ..SphereOptions::default()
            },
            decomposition_iters: v.decomposition_iters,
            audit_blocks: false,
            seed,
        }
    }
}

/// Names the offending key and, when it appears in the file, its line.
fn key_error(text: &str, section: &str, key: &str, msg: &str) -> CliError {
    match key_line(text, section, key) {
        Some(line) => CliError::Config(format!("line {line}: [{section}] {key}: {msg}")),
        None => CliError::Config(format!("[{section}] {key} (default): {msg}")),
    }
}

fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.points().len(), 1);
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let err = Config::parse("[solver]\nmax_iters = 3\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn invalid_value_names_key_and_line() {
        let err = Config::parse("[sweep]\nseeds = [0]\n\n[solver]\nrho = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 5") && msg.contains("rho"), "{msg}");
    }

    #[test]
    fn too_many_rf_chains_rejected() {
        let text = "[scenario]\nbs_n_h = 2\nbs_n_v = 2\nusers = 2\nstreams_per_user = 1\n[sweep]\nn_rf_offset = [3]\n";
        assert!(Config::parse(text).is_err());
    }

    #[test]
    fn sweep_grid_order() {
        let c = Config::parse("[sweep]\npower_dbm = [0, 5]\nn_rf_offset = [0, 1]\nbs_side = [4, 6]\n").unwrap();
        let p = c.points();
        assert_eq!(p.len(), 8);
        assert_eq!((p[1].power_dbm, p[1].n_rf_offset, p[1].bs_n_h), (5.0, 0, 4));
        assert_eq!((p[2].power_dbm, p[2].n_rf_offset), (0.0, 1));
        assert_eq!(p[7].bs_n_v, 6);
        assert!(p.iter().enumerate().all(|(i, q)| q.index == i));
    }
}
