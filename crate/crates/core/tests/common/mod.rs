#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trihybrid::channel::{generate_scenario, Box3, Scenario, ScenarioConfig, UpaSpec};
use trihybrid::{CMat, CVec, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> C64 {
    // Box-Muller keeps the oracles independent of the distribution crate.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    let r = (-u1.ln()).sqrt();
    C64::from_polar(r, std::f64::consts::TAU * u2)
}

pub fn random_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| cgauss(rng))
}

pub fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cgauss(rng))
}

/// Small near-field scenario: `n_h × n_v` BS, `users` 2×1 UEs, `paths` paths each.
pub fn small_scenario(n_h: usize, n_v: usize, users: usize, paths: usize, seed: u64) -> Scenario {
    let cfg = ScenarioConfig {
        bs: UpaSpec {
            n_h,
            n_v,
            spacing_wavelengths: 0.5,
        },
        ue: UpaSpec {
            n_h: 2,
            n_v: 1,
            spacing_wavelengths: 0.5,
        },
        users,
        paths_per_user: paths,
        user_box: Box3 {
            min: [30.0, -30.0, 1.5],
            max: [90.0, 30.0, 1.5],
        },
        ..ScenarioConfig::default()
    };
    generate_scenario(&cfg, seed).unwrap()
}
