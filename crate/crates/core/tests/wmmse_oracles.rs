mod common;

use common::*;
use trihybrid::channel::AntennaPrecoder;
use trihybrid::patterns::{fictitious_candidate_set, BeamSetParams, RadiationPattern};
use trihybrid::sph_harmonics::SphereGrid;
use trihybrid::units::dbm_to_mw;
use trihybrid::wmmse::*;
use trihybrid::{CMat, C64};

fn selection_setup(seed: u64) -> (Vec<trihybrid::channel::EffectiveChannel>, SystemConfig) {
    let sc = small_scenario(2, 2, 2, 3, seed);
    let params = BeamSetParams {
        count: 4,
        ..BeamSetParams::default()
    };
    let set = fictitious_candidate_set(&params, &SphereGrid::default()).unwrap();
    let ch = sc.selection_channels(&set, &RadiationPattern::isotropic());
    let sys = SystemConfig::uniform(2, 1, 4, dbm_to_mw(0.0), dbm_to_mw(-90.0), 2);
    (ch, sys)
}

#[test]
fn per_antenna_objective_tracks_full_objective() {
    for seed in 0..5 {
        let (ch, sys) = selection_setup(seed);
        let mut r = rng(100 + seed);
        let antenna = AntennaPrecoder::Selection(vec![1, 0, 3, 2]);
        let h: Vec<CMat> = ch.iter().map(|c| c.apply(&antenna)).collect();
        let f = random_cmat(&mut r, 4, 2) * C64::from(0.3);
        let u = update_u(&h, &f, &sys).unwrap();
        let w: Vec<CMat> = (0..2)
            .map(|k| update_w(&u[k], &h[k], &f.columns_range(sys.stream_range(k)).into_owned()).unwrap())
            .collect();
        for n in 0..4 {
            let terms = per_antenna_terms(n, &ch, &f, &antenna, &u, &w, &sys);
            let v = antenna.vector(n, 4);
            let mut offsets = Vec::new();
            for _ in 0..10 {
                let fn_ = random_cvec(&mut r, 2);
                let mut f2 = f.clone();
                f2.set_row(n, &fn_.transpose());
                let full = objective_for(&h, &f2, &u, &w, &sys).unwrap();
                offsets.push(full - terms.objective(&fn_, &v));
            }
            let spread = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - offsets.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-8 * offsets[0].abs().max(1.0), "seed {seed} n {n}: {offsets:?}");
        }
    }
}

#[test]
fn mmse_receiver_is_stationary() {
    let (ch, sys) = selection_setup(3);
    let antenna = AntennaPrecoder::Selection(vec![0, 1, 2, 3]);
    let h: Vec<CMat> = ch.iter().map(|c| c.apply(&antenna)).collect();
    let mut r = rng(5);
    let f = random_cmat(&mut r, 4, 2) * C64::from(0.5);
    let u = update_u(&h, &f, &sys).unwrap();
    for k in 0..2 {
        let tr = |uk: &CMat| mse_matrix(&h[k], &f, sys.stream_range(k), uk, sys.noise[k]).trace().re;
        let base = tr(&u[k]);
        let scale = u[k].norm();
        for i in 0..u[k].len() {
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let step = 1e-6 * scale;
                let mut up = u[k].clone();
                up[i] += dir * step;
                let mut dn = u[k].clone();
                dn[i] -= dir * step;
                let grad = (tr(&up) - tr(&dn)) / (2.0 * step);
                assert!(grad.abs() * scale < 1e-6 * base.max(1e-12) + 1e-9, "grad {grad}");
                assert!(tr(&up) >= base - 1e-12 * base);
            }
        }
    }
}

#[test]
fn weight_matrix_inverts_mse() {
    let (ch, sys) = selection_setup(4);
    let antenna = AntennaPrecoder::Selection(vec![3, 3, 1, 0]);
    let h: Vec<CMat> = ch.iter().map(|c| c.apply(&antenna)).collect();
    let f = random_cmat(&mut rng(6), 4, 2) * C64::from(0.5);
    let u = update_u(&h, &f, &sys).unwrap();
    for k in 0..2 {
        let fk = f.columns_range(sys.stream_range(k)).into_owned();
        let w = update_w(&u[k], &h[k], &fk).unwrap();
        let e = mse_matrix(&h[k], &f, sys.stream_range(k), &u[k], sys.noise[k]);
        let prod = &w * &e;
        assert!((prod - CMat::identity(1, 1)).norm() < 1e-9);
        let eig = nalgebra::SymmetricEigen::new(w.clone()).eigenvalues;
        assert!(eig.iter().all(|&l| l >= 1.0 - 1e-9));
    }
}

#[test]
fn optimal_objective_equals_rate_identity() {
    let (ch, sys) = selection_setup(7);
    let antenna = AntennaPrecoder::Selection(vec![0, 2, 1, 3]);
    let h: Vec<CMat> = ch.iter().map(|c| c.apply(&antenna)).collect();
    let f = random_cmat(&mut rng(8), 4, 2) * C64::from(0.2);
    let u = update_u(&h, &f, &sys).unwrap();
    let w: Vec<CMat> = (0..2)
        .map(|k| update_w(&u[k], &h[k], &f.columns_range(sys.stream_range(k)).into_owned()).unwrap())
        .collect();
    let obj = objective_for(&h, &f, &u, &w, &sys).unwrap();
    let (rate, _) = sum_rate(&h, &f, &sys).unwrap();
    let want = 1.0 - std::f64::consts::LN_2 * rate;
    assert!((obj - want).abs() < 1e-8 * want.abs().max(1.0), "{obj} vs {want}");
}

#[test]
fn sum_rate_matches_eigenvalue_evaluation() {
    let mut r = rng(9);
    let sys = SystemConfig::uniform(2, 2, 6, 1.0, 0.3, 4);
    let h = vec![random_cmat(&mut r, 3, 6), random_cmat(&mut r, 3, 6)];
    let f = random_cmat(&mut r, 6, 4);
    let (total, rates) = sum_rate(&h, &f, &sys).unwrap();
    for k in 0..2 {
        let g = &h[k] * &f;
        let mut j = CMat::identity(3, 3) * C64::from(0.3);
        for i in 0..2 {
            if i != k {
                let gi = g.columns_range(sys.stream_range(i));
                j += &gi * gi.adjoint();
            }
        }
        let gk = g.columns_range(sys.stream_range(k));
        let s = &j + &gk * gk.adjoint();
        let ld = |m: &CMat| -> f64 {
            nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|l| l.log2()).sum()
        };
        assert!((rates[k] - (ld(&s) - ld(&j))).abs() < 1e-10);
    }
    assert!((total - 0.5 * (rates[0] + rates[1])).abs() < 1e-12);
}

#[test]
fn blocks_never_increase_objective() {
    for seed in 0..3 {
        let (ch, sys) = selection_setup(seed);
        let init = initial_precoder(&sys, seed).unwrap();
        let opts = SolverOptions {
            max_iters: 15,
            audit_blocks: true,
            ..SolverOptions::default()
        };
        let sol = algorithm1(&ch, &sys, &opts, &init).unwrap();
        let worst = sol.worst_block_increase.unwrap();
        assert!(worst <= 1e-9, "seed {seed}: {worst}");
    }
}

#[test]
fn model2_update_never_increases_per_antenna_objective() {
    let mut r = rng(11);
    for _ in 0..20 {
        let a = random_cmat(&mut r, 6, 4);
        let b = a.adjoint() * &a;
        let terms = PerAntennaTerms {
            b,
            q: random_cmat(&mut r, 2, 4),
            d: random_cmat(&mut r, 2, 4),
        };
        let c = initial_coefficients(4, 0.7);
        let f0 = solve_f_closed_form(&terms, &c, 1.0);
        let before = terms.objective(&f0, &c);
        let upd = model2_antenna_update(&terms, &c, 1.0, 0.7, &Default::default()).unwrap();
        assert!(upd.objective <= before + 1e-9 * before.abs().max(1.0));
        assert!((upd.c.norm_squared() - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!((upd.c[0] - 2.0 * (0.7 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!(upd.f.norm_squared() <= 1.0 + 1e-12);
    }
}
