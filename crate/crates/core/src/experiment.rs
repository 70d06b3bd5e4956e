//! Multi-seed experiment orchestration.
//!
//! Run `r` of an experiment uses split seed `base_seed + r` and predictor
//! seed `base_seed + r`, so runs of different modes are paired by seed.
//! Aggregates are pure functions of the emitted [`RunResult`]s.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{labelset_from_split, make_split, normalize_adjacency, Dataset};
use crate::noise::{inject_label_noise, inject_structure_noise, measure_structure_noise, NoiseKind, NoiseSpec};
use crate::predictor::MlpConfig;
use crate::stats::{bootstrap_ci, mean, paired_t_test, PairedTTest, DEFAULT_RESAMPLES};
use crate::training::{accuracy, train_with_labels, TrainConfig, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    /// Template for every run; `mode` and `seed` are overwritten per run.
    pub train: TrainConfig,
    pub hidden: usize,
    /// Dropout of the PT family, MLP and the uniform-pseudo-label variant.
    pub dropout: f64,
    /// Dropout of the decoupled-GCN trainers.
    pub dgcn_dropout: f64,
    pub per_class: usize,
    pub early_stop_size: usize,
    pub bootstrap_resamples: usize,
    /// Run serially. Output is identical either way apart from timings.
    pub deterministic: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: 64,
            dropout: 0.0,
            dgcn_dropout: 0.5,
            per_class: 20,
            early_stop_size: 500,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            deterministic: false,
        }
    }
}

impl BenchSettings {
    pub fn dropout_for(&self, mode: TrainMode) -> f64 {
        if mode.propagates_in_loop() {
            self.dgcn_dropout
        } else {
            self.dropout
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: TrainMode,
    pub dataset: String,
    pub run: usize,
    pub seed: u64,
    pub split_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_kind: Option<NoiseKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_rate: Option<f64>,
    /// Structure noise measured on the graph actually trained on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measured_structure_noise: Option<f64>,
    pub test_accuracy: f64,
    pub early_stop_accuracy: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub alpha: f64,
    pub k: usize,
    pub per_epoch_ms: f64,
    pub preprocess_s: f64,
    pub total_s: f64,
    /// Set when the run diverged; such runs are excluded from aggregates.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl RunResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// The record with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            per_epoch_ms: 0.0,
            preprocess_s: 0.0,
            total_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean_accuracy: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n_runs: usize,
    pub n_failed: usize,
    pub bootstrap_resamples: usize,
    pub mean_per_epoch_ms: f64,
    pub mean_total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub mode: TrainMode,
    #[serde(flatten)]
    pub aggregate: AggregateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: TrainMode,
    pub b: TrainMode,
    #[serde(flatten)]
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub dataset: String,
    pub n_runs: usize,
    pub base_seed: u64,
    pub settings: BenchSettings,
    pub aggregates: Vec<ModeAggregate>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub summary: BenchmarkSummary,
    pub runs: Vec<RunResult>,
}

/// Aggregates the successful runs in `runs` (all assumed to share a mode).
pub fn aggregate(runs: &[RunResult], resamples: usize, seed: u64) -> AggregateResult {
    let good: Vec<&RunResult> = runs.iter().filter(|r| r.ok()).collect();
    let accs: Vec<f64> = good.iter().map(|r| r.test_accuracy).collect();
    let (lo, hi) = if accs.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        bootstrap_ci(&accs, resamples, seed).expect("non-empty input")
    };
    AggregateResult {
        mean_accuracy: mean(&accs),
        ci95_low: lo,
        ci95_high: hi,
        n_runs: good.len(),
        n_failed: runs.len() - good.len(),
        bootstrap_resamples: resamples,
        mean_per_epoch_ms: mean(&good.iter().map(|r| r.per_epoch_ms).collect::<Vec<_>>()),
        mean_total_s: mean(&good.iter().map(|r| r.total_s).collect::<Vec<_>>()),
    }
}

/// Per-mode aggregates in the order `modes` lists them.
pub fn aggregate_by_mode(runs: &[RunResult], modes: &[TrainMode], resamples: usize, seed: u64) -> Vec<ModeAggregate> {
    modes
        .iter()
        .map(|&mode| {
            let mine: Vec<RunResult> = runs.iter().filter(|r| r.mode == mode).cloned().collect();
            ModeAggregate {
                mode,
                aggregate: aggregate(&mine, resamples, seed),
            }
        })
        .collect()
}

/// Paired t-tests of PTA against every other mode present, pairing runs
/// that both succeeded under the same seed.
pub fn compare_modes(runs: &[RunResult], modes: &[TrainMode]) -> Vec<Comparison> {
    let reference = if modes.contains(&TrainMode::Pta) {
        TrainMode::Pta
    } else {
        match modes.first() {
            Some(&m) => m,
            None => return Vec::new(),
        }
    };
    let acc_by_seed = |mode: TrainMode| -> Vec<(u64, f64)> {
        runs.iter()
            .filter(|r| r.mode == mode && r.ok())
            .map(|r| (r.seed, r.test_accuracy))
            .collect()
    };
    let base = acc_by_seed(reference);
    modes
        .iter()
        .filter(|&&m| m != reference)
        .filter_map(|&other| {
            let theirs = acc_by_seed(other);
            let (a, b): (Vec<f64>, Vec<f64>) = base
                .iter()
                .filter_map(|&(s, x)| theirs.iter().find(|(t, _)| *t == s).map(|&(_, y)| (x, y)))
                .unzip();
            paired_t_test(&a, &b).ok().map(|test| Comparison {
                a: reference,
                b: other,
                test,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Job {
    run: usize,
    mode: TrainMode,
}

fn run_jobs<F>(jobs: Vec<Job>, deterministic: bool, f: F) -> Vec<RunResult>
where
    F: Fn(Job) -> RunResult + Sync + Send,
{
    if deterministic {
        jobs.into_iter().map(f).collect()
    } else {
        jobs.into_par_iter().map(f).collect()
    }
}

fn jobs(n_runs: usize, modes: &[TrainMode]) -> Vec<Job> {
    (0..n_runs)
        .flat_map(|run| modes.iter().map(move |&mode| Job { run, mode }))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Corruption {
    kind: NoiseKind,
    rate: f64,
}

fn single_run(
    ds: &Dataset,
    job: Job,
    base_seed: u64,
    settings: &BenchSettings,
    noise: Option<Corruption>,
) -> RunResult {
    let seed = base_seed + job.run as u64;
    let mut cfg = settings.train;
    cfg.mode = job.mode;
    cfg.seed = seed;
    let mut record = RunResult {
        mode: job.mode,
        dataset: ds.name().to_string(),
        run: job.run,
        seed,
        split_seed: seed,
        noise_kind: noise.map(|c| c.kind),
        noise_rate: noise.map(|c| c.rate),
        measured_structure_noise: None,
        test_accuracy: 0.0,
        early_stop_accuracy: 0.0,
        epochs: 0,
        best_epoch: 0,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        alpha: cfg.prop.alpha,
        k: cfg.prop.k,
        per_epoch_ms: 0.0,
        preprocess_s: 0.0,
        total_s: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let corrupted;
        let graph = match noise {
            Some(Corruption {
                kind: NoiseKind::Structure,
                rate,
            }) => {
                corrupted = inject_structure_noise(ds, &NoiseSpec::structure(rate, seed))?;
                record.measured_structure_noise = Some(measure_structure_noise(&corrupted)?);
                &corrupted
            }
            _ => ds,
        };
        let split = make_split(graph, settings.per_class, settings.early_stop_size, seed)?;
        let mut labels = labelset_from_split(graph, &split)?;
        if let Some(Corruption {
            kind: NoiseKind::Label,
            rate,
        }) = noise
        {
            labels = inject_label_noise(&labels, graph, &NoiseSpec::label(rate, seed))?;
        }
        let mlp = MlpConfig {
            in_dim: graph.num_features(),
            hidden: settings.hidden,
            out_dim: graph.num_classes(),
            dropout: settings.dropout_for(job.mode),
            init_seed: seed,
        };
        let model = train_with_labels(graph, &split, &labels, mlp, &cfg)?;
        let a_hat = normalize_adjacency(graph.adjacency(), cfg.normalization)?;
        let pred = model.predict(&a_hat, &graph.features().view())?;
        record.test_accuracy = accuracy(&pred, graph.labels(), &split.test);
        record.early_stop_accuracy = model.best_early_stop_accuracy;
        record.epochs = model.epochs_run;
        record.best_epoch = model.best_epoch;
        record.per_epoch_ms = model.wall_time_per_epoch * 1e3;
        record.preprocess_s = model.preprocess_s;
        record.total_s = model.wall_time_total;
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }
    record
}

/// Trains every mode on `n_runs` seeded splits of `ds`.
pub fn run_benchmark(
    ds: &Dataset,
    modes: &[TrainMode],
    n_runs: usize,
    base_seed: u64,
    settings: &BenchSettings,
) -> Result<BenchmarkOutput> {
    validate(modes, n_runs, settings)?;
    let runs = run_jobs(jobs(n_runs, modes), settings.deterministic, |job| {
        single_run(ds, job, base_seed, settings, None)
    });
    Ok(BenchmarkOutput {
        summary: BenchmarkSummary {
            dataset: ds.name().to_string(),
            n_runs,
            base_seed,
            settings: *settings,
            aggregates: aggregate_by_mode(&runs, modes, settings.bootstrap_resamples, base_seed),
            comparisons: compare_modes(&runs, modes),
        },
        runs,
    })
}

fn validate(modes: &[TrainMode], n_runs: usize, settings: &BenchSettings) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::InvalidConfig("no modes selected".into()));
    }
    if n_runs == 0 {
        return Err(Error::InvalidConfig("at least one run is required".into()));
    }
    settings.train.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rate: f64,
    /// Mean measured structure noise over runs (structure sweeps only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measured_rate: Option<f64>,
    pub aggregates: Vec<ModeAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepSummary {
    pub dataset: String,
    pub kind: NoiseKind,
    pub n_runs: usize,
    pub base_seed: u64,
    pub settings: BenchSettings,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweepOutput {
    pub summary: NoiseSweepSummary,
    pub runs: Vec<RunResult>,
}

/// Propagation depth used by structure-noise sweeps.
pub const STRUCTURE_SWEEP_K: usize = 2;

/// For each rate (ascending), corrupts the graph or the training labels per
/// run and benchmarks every mode. Structure sweeps propagate with
/// [`STRUCTURE_SWEEP_K`] steps.
pub fn run_noise_sweep(
    ds: &Dataset,
    kind: NoiseKind,
    rates: &[f64],
    modes: &[TrainMode],
    n_runs: usize,
    base_seed: u64,
    settings: &BenchSettings,
) -> Result<NoiseSweepOutput> {
    validate(modes, n_runs, settings)?;
    if rates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("noise rates must be sorted ascending".into()));
    }
    let mut settings = *settings;
    if kind == NoiseKind::Structure {
        settings.train.prop.k = STRUCTURE_SWEEP_K;
    }
    let mut points = Vec::with_capacity(rates.len());
    let mut all_runs = Vec::new();
    for &rate in rates {
        let corruption = Corruption { kind, rate };
        let runs = run_jobs(jobs(n_runs, modes), settings.deterministic, |job| {
            single_run(ds, job, base_seed, &settings, Some(corruption))
        });
        if let Some(err) = runs.iter().find_map(|r| r.error.as_ref()) {
            // injection failures affect every run alike; surface them instead of aggregating nothing
            if runs.iter().all(|r| !r.ok()) {
                return Err(Error::InvalidConfig(format!("noise rate {rate}: {err}")));
            }
        }
        let measured: Vec<f64> = runs.iter().filter_map(|r| r.measured_structure_noise).collect();
        points.push(SweepPoint {
            rate,
            measured_rate: (!measured.is_empty()).then(|| mean(&measured)),
            aggregates: aggregate_by_mode(&runs, modes, settings.bootstrap_resamples, base_seed),
        });
        all_runs.extend(runs);
    }
    Ok(NoiseSweepOutput {
        summary: NoiseSweepSummary {
            dataset: ds.name().to_string(),
            kind,
            n_runs,
            base_seed,
            settings,
            points,
        },
        runs: all_runs,
    })
}
