use pt_core::equivalence::{run_verifications, DEFAULT_TRIALS};
use pt_core::experiment::{aggregate, run_benchmark, run_noise_sweep, BenchSettings};
use pt_core::noise::{generate_sbm, NoiseKind, SbmSpec};
use pt_core::{Dataset, TrainConfig, TrainMode};

fn small_graph() -> Dataset {
    generate_sbm(&SbmSpec {
        n: 240,
        num_classes: 3,
        p_intra: 0.06,
        p_inter: 0.006,
        feature_dim: 12,
        class_separation: 1.2,
        seed: 21,
    })
    .unwrap()
    .with_name("sbm-small")
}

fn quick_settings(deterministic: bool) -> BenchSettings {
    BenchSettings {
        train: TrainConfig {
            max_epochs: 60,
            patience: 20,
            ..TrainConfig::default()
        },
        hidden: 16,
        per_class: 10,
        early_stop_size: 50,
        bootstrap_resamples: 200,
        deterministic,
        ..BenchSettings::default()
    }
}

#[test]
fn verifications_pass() {
    let reports = run_verifications(7, DEFAULT_TRIALS, None);
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert!(r.passed, "{r:?}");
        assert_eq!(r.instances, DEFAULT_TRIALS);
    }
}

#[test]
fn parallel_and_serial_runs_agree() {
    let ds = small_graph();
    let modes = [TrainMode::Pta, TrainMode::Dgcn, TrainMode::Mlp];
    let serial = run_benchmark(&ds, &modes, 3, 100, &quick_settings(true)).unwrap();
    let parallel = run_benchmark(&ds, &modes, 3, 100, &quick_settings(false)).unwrap();
    assert_eq!(serial.runs.len(), 9);
    let strip = |rs: &[pt_core::experiment::RunResult]| rs.iter().map(|r| r.without_timings()).collect::<Vec<_>>();
    assert_eq!(strip(&serial.runs), strip(&parallel.runs));
    for r in &serial.runs {
        assert!(r.ok(), "{r:?}");
        assert_eq!(r.split_seed, 100 + r.run as u64);
        assert!(r.per_epoch_ms > 0.0 && r.total_s > 0.0);
        assert!((0.0..=1.0).contains(&r.test_accuracy));
    }
    assert_eq!(serial.summary.aggregates.len(), 3);
    assert_eq!(serial.summary.comparisons.len(), 2);
}

#[test]
fn aggregate_is_a_function_of_records() {
    let ds = small_graph();
    let out = run_benchmark(&ds, &[TrainMode::Pts], 4, 0, &quick_settings(true)).unwrap();
    let agg = aggregate(&out.runs, 200, 0);
    assert_eq!(agg, out.summary.aggregates[0].aggregate);
    let mean = out.runs.iter().map(|r| r.test_accuracy).sum::<f64>() / 4.0;
    assert!((agg.mean_accuracy - mean).abs() < 1e-15);
    assert!(agg.ci95_low <= agg.mean_accuracy && agg.mean_accuracy <= agg.ci95_high);
    assert_eq!(agg.n_runs, 4);
}

#[test]
fn sweeps_report_each_rate() {
    let ds = small_graph();
    let s = quick_settings(true);
    let out = run_noise_sweep(&ds, NoiseKind::Structure, &[0.1, 0.5], &[TrainMode::Pts], 2, 3, &s).unwrap();
    assert_eq!(out.summary.points.len(), 2);
    for (p, target) in out.summary.points.iter().zip([0.1, 0.5]) {
        let measured = p.measured_rate.unwrap();
        assert!((measured - target).abs() < 0.01, "{measured} vs {target}");
    }
    assert!(out.runs.iter().all(|r| r.k == 2));

    let out = run_noise_sweep(&ds, NoiseKind::Label, &[0.0, 0.4], &[TrainMode::Mlp], 2, 3, &s).unwrap();
    assert!(out.summary.points.iter().all(|p| p.measured_rate.is_none()));
    assert!(run_noise_sweep(&ds, NoiseKind::Label, &[0.4, 0.1], &[TrainMode::Mlp], 1, 0, &s).is_err());
}
