mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use robustdrift_core::*;

const REFERENCE_N_ROW: [f64; 4] = [1.6179, 1.5996, 2.0196, 2.0426];

fn diffusion() -> StudyConfig {
    StudyConfig {
        expert_scaling: ExpertScaling::Diffusion,
        ..StudyConfig::default()
    }
}

#[test]
fn uninformed_row_is_deterministic() {
    let p = two_asset_pipeline(0.5, diffusion());
    let rep = run_study(&p, &[FiltrationKind::N], 25, 3, EvalMode::PlugIn).unwrap();
    let row = rep.row(FiltrationKind::N).unwrap();
    assert_eq!(row.n, 25);
    for (c, expected) in REFERENCE_N_ROW.iter().enumerate() {
        assert!(
            (row.mean[c] - expected).abs() < 0.01,
            "column {c}: {}",
            row.mean[c]
        );
        assert!(row.std[c] <= 1e-8);
    }
}

#[test]
fn uninformed_row_converges_in_step_size() {
    let coarse = two_asset_pipeline(0.5, diffusion());
    let fine = two_asset_pipeline(
        0.5,
        StudyConfig {
            n_steps: 500,
            ..diffusion()
        },
    );
    let a = run_study(&coarse, &[FiltrationKind::N], 1, 0, EvalMode::PlugIn).unwrap();
    let b = run_study(&fine, &[FiltrationKind::N], 1, 0, EvalMode::PlugIn).unwrap();
    for c in 0..4 {
        assert!((a.rows[0].mean[c] - b.rows[0].mean[c]).abs() < 1e-3);
    }
}

#[test]
fn realized_solutions_match_isolated_solves() {
    let p = two_asset_pipeline(0.5, diffusion());
    let s = p.simulate_scenario(21, 0);
    for kind in FiltrationKind::ALL {
        let path = p.realize(kind, &s).unwrap();
        for i in (0..=250).step_by(17) {
            let k = p.ellipsoid(&path.realized.filter[i]).unwrap();
            assert_eq!(k, path.realized.k_path[i]);
            let sol = worst_case_drift(&k, p.geometry(), p.market()).unwrap();
            assert_eq!(sol.mu_star, path.realized.mu_star[i]);
            assert_eq!(sol.pi_star.pi, path.realized.pi_star[i]);
            assert!((k.radius_ratio(&sol.mu_star) - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn frozen_set_gives_constant_solution() {
    let p = two_asset_pipeline(0.5, diffusion());
    let k0 = p.ellipsoid(&FilterState::initial(p.model())).unwrap();
    let one_shot = worst_case_drift(&k0, p.geometry(), p.market()).unwrap();
    let s = p.simulate_scenario(4, 0);
    for kind in FiltrationKind::ALL {
        let path = p.realize_frozen(kind, &s, &k0).unwrap();
        for i in 0..=250 {
            assert!((&path.realized.mu_star[i] - &one_shot.mu_star).amax() <= 1e-10);
            assert!((&path.realized.pi_star[i] - &one_shot.pi_star.pi).amax() <= 1e-10);
        }
        let eval = p.evaluate(&path, EvalMode::PlugIn, 0).unwrap();
        assert!((eval.values[0] - one_shot.value).abs() <= 1e-10 * one_shot.value.abs());
    }
}

#[test]
fn channels_are_isolated() {
    let p = two_asset_pipeline(0.5, diffusion());
    let s = p.simulate_scenario(8, 2);
    let r = p.realize(FiltrationKind::R, &s).unwrap();
    let c = p.realize(FiltrationKind::C, &s).unwrap();
    let first = p.expert_indices()[0];
    assert_eq!(r.scenario, c.scenario);
    for i in 0..first {
        assert_eq!(r.realized.filter[i], c.realized.filter[i]);
        assert_eq!(r.realized.mu_star[i], c.realized.mu_star[i]);
        assert_eq!(r.realized.pi_star[i], c.realized.pi_star[i]);
    }
    for i in first..=250 {
        assert_ne!(r.realized.filter[i].q, c.realized.filter[i].q);
        assert_ne!(r.realized.pi_star[i], c.realized.pi_star[i]);
    }
}

#[test]
fn nearly_deterministic_drift() {
    let (market, model) = two_asset_market(0.5);
    let mut params = model.into_params();
    params.beta = DMatrix::identity(2, 2) * 1e-12;
    params.sigma0 = DMatrix::zeros(2, 2);
    let model = validate_drift_model(params).unwrap();
    let p = Pipeline::new(market, model, diffusion()).unwrap();
    let s = p.simulate_scenario(5, 0);
    for mu in &s.mu_true {
        assert!((mu - DVector::from_column_slice(&[0.02, 0.03])).amax() < 1e-10);
    }
    let path = p.realize(FiltrationKind::N, &s).unwrap();
    for st in &path.realized.filter {
        assert_eq!(st.m_hat, DVector::from_column_slice(&[0.02, 0.03]));
        // bounded by β²/(2 min α)
        assert!(st.q.amax() < 1e-24);
    }
}

#[test]
fn information_reduces_terminal_variance() {
    let p = two_asset_pipeline(0.5, diffusion());
    for idx in 0..5 {
        let s = p.simulate_scenario(99, idx);
        let tr = |k| p.filter(k, &s).unwrap()[250].q.trace();
        let (n, r, e, c) = (
            tr(FiltrationKind::N),
            tr(FiltrationKind::R),
            tr(FiltrationKind::E),
            tr(FiltrationKind::C),
        );
        assert!(c <= r && r <= n && c <= e && e <= n);
    }
}

#[test]
fn robust_beats_naive_under_worst_case() {
    let p = two_asset_pipeline(0.5, diffusion());
    let rep = run_study(&p, &FiltrationKind::ALL, 40, 17, EvalMode::PlugIn).unwrap();
    for row in &rep.rows {
        for s in &row.samples {
            assert!(s[0] >= s[1] - 1e-12 * s[0].abs());
        }
    }
}

#[test]
fn log_utility_plug_in_matches_wealth_simulation() {
    let p = two_asset_pipeline(0.0, diffusion());
    let s = p.simulate_scenario(12, 0);
    for kind in [FiltrationKind::R, FiltrationKind::C] {
        let path = p.realize(kind, &s).unwrap();
        let exact = p.evaluate(&path, EvalMode::PlugIn, 0).unwrap();
        let mc = p
            .evaluate(
                &path,
                EvalMode::SdeMc {
                    inner_paths: 400,
                    feedback: false,
                },
                77,
            )
            .unwrap();
        for c in 0..4 {
            assert!(
                (exact.values[c] - mc.values[c]).abs() < 3.0 * mc.std_errors[c],
                "{kind} column {c}"
            );
        }
    }
}

#[test]
fn study_independent_of_thread_count() {
    let p = two_asset_pipeline(0.5, diffusion());
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_study(&p, &FiltrationKind::ALL, 12, 5, EvalMode::PlugIn).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let mc = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_study(
                    &p,
                    &[FiltrationKind::R],
                    2,
                    5,
                    EvalMode::SdeMc {
                        inner_paths: 8,
                        feedback: true,
                    },
                )
                .unwrap()
            })
    };
    assert_eq!(mc(1), mc(3));
}

#[test]
fn standard_error_shrinks_with_sample_size() {
    let p = two_asset_pipeline(0.5, diffusion());
    let se = |n| {
        run_study(&p, &[FiltrationKind::R], n, 2024, EvalMode::PlugIn)
            .unwrap()
            .rows[0]
            .std_error(0)
    };
    let (a, b, c) = (se(500), se(2000), se(8000));
    for ratio in [a / b, b / c] {
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
    }
}
