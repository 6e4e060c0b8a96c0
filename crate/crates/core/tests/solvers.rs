use declip_core::experiment::{run_plan, ExperimentPlan};
use declip_core::fixtures::Fixture;
use declip_core::solvers::ContinuationConfig;
use declip_core::{
    build_masks, declip_with_masks, delta_sdr_clipped, hard_clip, threshold_for_input_sdr, DeclipConfig,
    SampleMasks, ShrinkageKind, SolverKind, TransformParams, Weighting,
};

fn small_config(solver: SolverKind, shrinkage: ShrinkageKind) -> DeclipConfig {
    DeclipConfig {
        solver,
        shrinkage,
        transform: TransformParams {
            win_len: 512,
            hop: 128,
            n_channels: 1024,
        },
        continuation: ContinuationConfig {
            n_outer: 5,
            n_inner: 40,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn every_combination_improves_clipped_samples() {
    let x = Fixture::ThreeSines.signal_with_len(8192);
    let theta = threshold_for_input_sdr(&x, 7.0, 0.01).unwrap();
    let y = hard_clip(&x, theta);
    let masks = build_masks(&y, theta);
    for solver in [SolverKind::Fista, SolverKind::Lv] {
        for kind in ShrinkageKind::ALL {
            for weighting in [Weighting::None, Weighting::Parabolic] {
                let cfg = DeclipConfig {
                    weighting,
                    ..small_config(solver, kind)
                };
                let (out, run) = declip_with_masks(&y, &masks, theta, &cfg, Some(&x)).unwrap();
                let delta = delta_sdr_clipped(&x, &y, &out, &masks).unwrap();
                assert!(delta > 0.1, "{solver} {kind} {weighting:?}: {delta}");
                assert_eq!(run.trace.last().unwrap().delta_sdr_clipped_db, Some(delta));
            }
        }
    }
}

#[test]
fn clipping_constraint_violation_shrinks_over_stages() {
    for fixture in Fixture::ALL {
        let x = fixture.signal_with_len(8192);
        let theta = threshold_for_input_sdr(&x, 5.0, 0.01).unwrap();
        let y = hard_clip(&x, theta);
        let masks = build_masks(&y, theta);
        for solver in [SolverKind::Fista, SolverKind::Lv] {
            for kind in ShrinkageKind::ALL {
                let (_, run) = declip_with_masks(&y, &masks, theta, &small_config(solver, kind), None).unwrap();
                let hinge: Vec<f64> = run.trace.iter().map(|s| s.data_high + s.data_low).collect();
                assert!(
                    hinge.windows(2).all(|w| w[1] <= w[0] + 1e-9),
                    "{fixture} {solver} {kind}: {hinge:?}"
                );
                let lambdas: Vec<f64> = run.trace.iter().map(|s| s.lambda).collect();
                assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let x = Fixture::FilteredNoise.signal_with_len(6000);
    let theta = threshold_for_input_sdr(&x, 10.0, 0.01).unwrap();
    let y = hard_clip(&x, theta);
    let masks = build_masks(&y, theta);
    for solver in [SolverKind::Fista, SolverKind::Lv] {
        let cfg = small_config(solver, ShrinkageKind::Pew);
        let (a, ra) = declip_with_masks(&y, &masks, theta, &cfg, Some(&x)).unwrap();
        let (b, rb) = declip_with_masks(&y, &masks, theta, &cfg, Some(&x)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.trace, rb.trace);
    }
}

#[test]
fn lv_tracks_observation_as_lambda_vanishes() {
    let x = Fixture::ThreeSines.signal_with_len(4096);
    let masks = SampleMasks::all_reliable(x.len());
    let theta = declip_core::ClipThreshold::new(x.peak()).unwrap();
    let err = |lambda: f64| {
        let mut cfg = small_config(SolverKind::Lv, ShrinkageKind::L);
        cfg.continuation = ContinuationConfig {
            lambda_start: lambda,
            lambda_end: lambda,
            n_outer: 1,
            n_inner: 200,
            epsilon: 0.0,
        };
        let (out, _) = declip_with_masks(&x, &masks, theta, &cfg, None).unwrap();
        out.samples().iter().zip(x.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let errs: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5].into_iter().map(err).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[4] < 1e-3, "{errs:?}");
}

#[test]
fn plan_results_do_not_depend_on_worker_count() {
    let mut plan = ExperimentPlan::new(vec!["synth:three-sines".into(), "synth:chirp".into()]);
    plan.input_sdrs_db = vec![3.0, 10.0];
    plan.solvers = vec![SolverKind::Lv];
    plan.shrinkages = vec![ShrinkageKind::Ew];
    plan.transform = TransformParams {
        win_len: 256,
        hop: 64,
        n_channels: 512,
    };
    plan.continuation = ContinuationConfig {
        n_outer: 2,
        n_inner: 4,
        ..Default::default()
    };
    let strip = |mut v: Vec<declip_core::experiment::ResultRecord>| {
        v.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        v
    };
    let a = strip(run_plan(&plan, Some(1)).unwrap());
    let b = strip(run_plan(&plan, Some(3)).unwrap());
    assert_eq!(a.len(), 8);
    assert_eq!(a, b);
}
