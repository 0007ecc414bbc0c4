mod common;

use std::f64::consts::{PI, TAU};

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::RngExt;
use trihybrid::baselines::{interference_leakage, zf_precoder};
use trihybrid::channel::ArrayLayout;
use trihybrid::hybrid_decomp::{antenna_powers, decompose};
use trihybrid::manifold::{solve_sphere, SphereOptions, SphereProblem};
use trihybrid::metrics::{beampattern, steering};
use trihybrid::patterns::RadiationPattern;
use trihybrid::wmmse::{closed_form_step, model1_antenna_update, PerAntennaTerms, SystemConfig};
use trihybrid::{CMat, CVec, C64};

fn cost(a: f64, r: &CVec, f: &CVec) -> f64 {
    a * f.norm_squared() + 2.0 * f.dotc(r).re
}

fn circle_problem(seed: u64, x0: DVector<f64>) -> SphereProblem {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0));
    let v = DVector::from_fn(2, |_, _| r.random_range(-1.0..1.0));
    SphereProblem::new(a.transpose() * &a, v, x0).unwrap()
}

fn at_angle(p: &SphereProblem, t: f64) -> f64 {
    p.objective(&DVector::from_vec(vec![t.cos(), t.sin()]))
}

fn tight() -> SphereOptions {
    SphereOptions {
        tol: 1e-9,
        max_iters: 20_000,
        ..SphereOptions::default()
    }
}

/// Global minimizer on the unit circle by dense sampling plus golden-section polish.
fn circle_minimum(p: &SphereProblem) -> (f64, f64) {
    let n = 20_000;
    let h = TAU / n as f64;
    let best = (0..n)
        .map(|i| h * i as f64)
        .min_by(|&a, &b| at_angle(p, a).total_cmp(&at_angle(p, b)))
        .unwrap();
    let (mut lo, mut hi) = (best - h, best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if at_angle(p, x1) < at_angle(p, x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, at_angle(p, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_step_is_feasible_and_optimal(seed in 0u64..10_000, a in -1.0f64..5.0, power in 0.01f64..4.0) {
        let mut r = rng(seed);
        let rv = random_cvec(&mut r, 3);
        let f = closed_form_step(a, &rv, power);
        prop_assert!(f.norm_squared() <= power * (1.0 + 1e-12));
        let best = cost(a, &rv, &f);
        for _ in 0..200 {
            let g = random_cvec(&mut r, 3);
            let radius = power.sqrt() * r.random_range(0.0..1.0f64).sqrt();
            let g = &g * C64::from(radius / g.norm());
            prop_assert!(best <= cost(a, &rv, &g) + 1e-12);
        }
    }

    #[test]
    fn model1_update_is_the_exhaustive_minimum(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let block = 4;
        let h = random_cmat(&mut r, 6, block);
        let terms = PerAntennaTerms { b: h.adjoint() * &h, q: random_cmat(&mut r, 2, block), d: random_cmat(&mut r, 2, block) };
        let (s, f, val) = model1_antenna_update(&terms, 0.5);
        let mut unit = DVector::zeros(block);
        unit[s] = 1.0;
        prop_assert!((terms.objective(&f, &unit) - val).abs() < 1e-9 * val.abs().max(1.0));
        for other in 0..block {
            let mut e = DVector::zeros(block);
            e[other] = 1.0;
            let rr = terms.linear().column(other).into_owned();
            let g = closed_form_step(terms.b[(other, other)].re, &rr, 0.5);
            prop_assert!(val <= terms.objective(&g, &e) + 1e-12);
        }
    }

    #[test]
    fn sphere_solver_stops_at_a_local_minimum(seed in 0u64..10_000) {
        let p = circle_problem(seed, DVector::from_vec(vec![1.0, 0.0]));
        let sol = solve_sphere(&p, &tight());
        prop_assert!((sol.x.norm() - 1.0).abs() < 1e-12);
        prop_assert!(sol.objective <= p.objective(p.x0()) + 1e-12);
        let t = sol.x[1].atan2(sol.x[0]);
        for d in [-1e-3, 1e-3] {
            prop_assert!(sol.objective <= at_angle(&p, t + d) + 1e-12);
        }
    }

    #[test]
    fn sphere_solver_reaches_circle_minimum_from_its_basin(seed in 0u64..10_000) {
        let (t, exact) = circle_minimum(&circle_problem(seed, DVector::from_vec(vec![1.0, 0.0])));
        let start = DVector::from_vec(vec![(t + 0.05).cos(), (t + 0.05).sin()]);
        let sol = solve_sphere(&circle_problem(seed, start), &tight());
        prop_assert!(sol.objective - exact < 1e-9, "{} vs {}", sol.objective, exact);
    }

    #[test]
    fn zf_cancels_interference(seed in 0u64..10_000, users in 2usize..4) {
        let mut r = rng(seed);
        let sys = SystemConfig::uniform(users, 2, 9, 1.0, 1e-3, 9);
        let h: Vec<CMat> = (0..users).map(|_| random_cmat(&mut r, 2, 9)).collect();
        let f = zf_precoder(&h, &sys).unwrap();
        prop_assert!(interference_leakage(&h, &f, &sys) < 1e-10);
        prop_assert!(antenna_powers(&f).iter().all(|&p| p <= 1.0 + 1e-12));
    }

    #[test]
    fn decomposition_meets_constraints(seed in 0u64..10_000, extra in 0usize..4) {
        let mut r = rng(seed);
        let f_d = random_cmat(&mut r, 8, 3);
        let power = vec![0.25; 8];
        let d = decompose(&f_d, 3 + extra, &power, 20, seed).unwrap();
        for w in d.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", d.residual_history);
        }
        prop_assert!(d.f_rf.iter().all(|z| (8.0 * z.norm_sqr() - 1.0).abs() < 1e-12));
        let h = &d.f_rf * &d.f_bb;
        prop_assert!(antenna_powers(&h).iter().all(|&p| p <= 0.25 * (1.0 + 1e-12)));
    }

    #[test]
    fn beampattern_ignores_common_phase(seed in 0u64..10_000, alpha in -PI..PI, theta in 0.0..PI, phi in -PI..PI) {
        let mut r = rng(seed);
        let layout = ArrayLayout::upa(3, 3, 0.005).unwrap();
        let pats = vec![RadiationPattern::isotropic(); 9];
        let f = random_cmat(&mut r, 9, 2);
        let rot = &f * C64::from_polar(1.0, alpha);
        let a = beampattern(&layout, &pats, &f, theta, phi, 0.01);
        let b = beampattern(&layout, &pats, &rot, theta, phi, 0.01);
        prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }
}

#[test]
fn decomposition_is_exact_with_full_rf_chains() {
    let mut r = rng(3);
    let f_d = random_cmat(&mut r, 6, 2);
    let d = decompose(&f_d, 6, &[100.0; 6], 5, 0).unwrap();
    assert!(d.residual < 1e-10, "{}", d.residual);
    assert_eq!(d.scale, 1.0);
}

#[test]
fn matched_precoder_peaks_at_its_direction() {
    let layout = ArrayLayout::upa(4, 4, 0.005).unwrap();
    let pats = vec![RadiationPattern::isotropic(); 16];
    let (t0, p0) = (PI / 2.0 - 0.2, 0.3);
    let f = steering(&layout, &pats, t0, p0, 0.01).map(|z| z.conj() / 4.0);
    let f = CMat::from_column_slice(16, 1, f.as_slice());
    let peak = beampattern(&layout, &pats, &f, t0, p0, 0.01);
    assert!((peak - 4.0).abs() < 1e-12);
    for i in 0..90 {
        for j in 0..90 {
            let (t, p) = (PI * i as f64 / 90.0, TAU * j as f64 / 90.0 - PI);
            assert!(beampattern(&layout, &pats, &f, t, p, 0.01) <= peak + 1e-12);
        }
    }
}

