use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pt_core::equivalence::{
    run_verifications, verify_appnp_unroll, verify_lemma1, verify_matrix_loss, verify_predictor_gradients,
    verify_softmax_decomposition, VerificationReport, DEFAULT_TRIALS, GRADIENT_TOLERANCE, IDENTITY_TOLERANCE,
    LEMMA1_TOLERANCE,
};
use pt_core::experiment::{run_benchmark, run_noise_sweep, BenchSettings};
use pt_core::graph::{load_dataset, save_dataset};
use pt_core::noise::{generate_sbm, inject_structure_noise, measure_structure_noise, NoiseKind, NoiseSpec, SbmSpec};
use pt_core::{Dataset, NormalizationStrategy, PropagationConfig, TrainConfig, TrainMode};

mod output;

#[derive(Parser)]
#[command(name = "ptrain", version, about = "Propagation-then-training node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Numerical checks of the decoupled-GCN / weighted-PT identities.
    Verify(VerifyArgs),
    /// One training run of a single mode.
    Train(RunArgs),
    /// Multi-seed benchmark of one or more modes.
    Bench(RunArgs),
    /// Accuracy under increasing structure or label noise.
    Noise(NoiseArgs),
    /// Write a stochastic-block-model dataset bundle.
    Sbm(SbmCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    All,
    Lemma1,
    Unroll,
    Softmax,
    MatrixLoss,
    Gradients,
}

#[derive(Args)]
struct VerifyArgs {
    /// Checks to run; `all` is the four identity checks.
    #[arg(value_enum, default_values_t = [Check::All])]
    checks: Vec<Check>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Replace every check's tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SbmArgs {
    #[arg(long = "sbm-n", default_value_t = 1000)]
    n: usize,
    #[arg(long = "sbm-classes", default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 0.05)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.002)]
    p_inter: f64,
    #[arg(long, default_value_t = SBM_FEATURE_DIM)]
    feature_dim: usize,
    #[arg(long, default_value_t = SBM_SEPARATION)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    sbm_seed: u64,
}

pub const SBM_FEATURE_DIM: usize = 32;
pub const SBM_SEPARATION: f64 = 2.25;

impl SbmArgs {
    fn spec(&self) -> SbmSpec {
        SbmSpec {
            n: self.n,
            num_classes: self.classes,
            p_intra: self.p_intra,
            p_inter: self.p_inter,
            feature_dim: self.feature_dim,
            class_separation: self.separation,
            seed: self.sbm_seed,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Dataset bundle directory. Without it a stochastic block model is generated.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    sbm: SbmArgs,
    /// Trainer(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<TrainMode>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 100.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.005)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Dropout of PT trainers and the MLP.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Dropout of the decoupled-GCN trainers.
    #[arg(long, default_value_t = 0.5)]
    dgcn_dropout: f64,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 500)]
    early_stop_size: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, default_value_t = NormalizationStrategy::SymSelfloop)]
    normalization: NormalizationStrategy,
    /// Keep labelled rows free during label propagation.
    #[arg(long)]
    no_clamp: bool,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Line-delimited RunResults; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Serial execution for reproducible output.
    #[arg(long)]
    deterministic: bool,
    /// Parallel worker count (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn settings(&self) -> Result<BenchSettings> {
        let prop = PropagationConfig::new(self.alpha, self.k)?.with_clamp(!self.no_clamp);
        let train = TrainConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lr: self.lr,
            epsilon: self.epsilon,
            max_epochs: self.max_epochs,
            patience: self.patience,
            prop,
            normalization: self.normalization,
            ..TrainConfig::default()
        };
        train.validate()?;
        Ok(BenchSettings {
            train,
            hidden: self.hidden,
            dropout: self.dropout,
            dgcn_dropout: self.dgcn_dropout,
            per_class: self.per_class,
            early_stop_size: self.early_stop_size,
            deterministic: self.deterministic,
            ..BenchSettings::default()
        })
    }

    fn dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(dir) => load_dataset(dir).with_context(|| format!("loading {}", dir.display())),
            None => {
                let spec = self.sbm.spec();
                Ok(generate_sbm(&spec)?.with_name(format!("sbm-n{}-c{}-s{}", spec.n, spec.num_classes, spec.seed)))
            }
        }
    }

    fn modes(&self, default: &[TrainMode]) -> Vec<TrainMode> {
        if self.mode.is_empty() {
            default.to_vec()
        } else {
            self.mode.clone()
        }
    }

    fn configure_threads(&self) -> Result<()> {
        if let Some(w) = self.workers {
            rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Structure,
    Label,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Structure)]
    kind: KindArg,
    /// Noise rates, ascending and comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6, 0.8])]
    rates: Vec<f64>,
}

#[derive(Args)]
struct SbmCommand {
    #[command(flatten)]
    sbm: SbmArgs,
    /// Rewire the generated graph to this structure-noise rate.
    #[arg(long)]
    structure_noise: Option<f64>,
    /// Bundle directory to write.
    #[arg(long)]
    out: PathBuf,
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let tol = |default: f64| args.tolerance.unwrap_or(default);
    let mut reports: Vec<VerificationReport> = Vec::new();
    for check in &args.checks {
        let (seed, trials) = (args.seed, args.trials);
        match check {
            Check::All => reports.extend(run_verifications(seed, trials, args.tolerance)),
            Check::Lemma1 => reports.push(verify_lemma1(trials, seed, tol(LEMMA1_TOLERANCE))),
            Check::Unroll => reports.push(verify_appnp_unroll(trials, seed, tol(IDENTITY_TOLERANCE))),
            Check::Softmax => reports.push(verify_softmax_decomposition(trials, seed, tol(IDENTITY_TOLERANCE))),
            Check::MatrixLoss => reports.push(verify_matrix_loss(trials, seed, tol(IDENTITY_TOLERANCE))),
            Check::Gradients => reports.push(verify_predictor_gradients(trials, seed, tol(GRADIENT_TOLERANCE))),
        }
    }
    let mut sink = output::Sink::open(args.out.as_deref())?;
    for r in &reports {
        sink.record(r)?;
        eprintln!(
            "{:<24} {} (max rel {:.3e}, max abs {:.3e}, tol {:.0e}, {} instances)",
            r.check_name,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.max_abs_error,
            r.tolerance,
            r.instances
        );
    }
    sink.finish()?;
    Ok(reports.iter().all(|r| r.passed))
}

fn bench(args: &RunArgs, single: bool) -> Result<bool> {
    args.configure_threads()?;
    let ds = args.dataset()?;
    let modes = args.modes(if single { &[TrainMode::Pta] } else { &TrainMode::ALL });
    if single && modes.len() != 1 {
        bail!("`train` takes exactly one mode");
    }
    let runs = if single { 1 } else { args.runs };
    let out = run_benchmark(&ds, &modes, runs, args.seed, &args.settings()?)?;
    output::write_results(args.out.as_deref(), args.csv.as_deref(), &out.runs, &out.summary)?;
    for agg in &out.summary.aggregates {
        let a = &agg.aggregate;
        eprintln!(
            "{:<13} acc {:.4} [{:.4}, {:.4}]  runs {} failed {}  {:.2} ms/epoch  {:.2} s total",
            agg.mode.as_str(),
            a.mean_accuracy,
            a.ci95_low,
            a.ci95_high,
            a.n_runs,
            a.n_failed,
            a.mean_per_epoch_ms,
            a.mean_total_s
        );
    }
    Ok(out.runs.iter().all(|r| r.ok()))
}

fn noise(args: &NoiseArgs) -> Result<bool> {
    let run = &args.run;
    run.configure_threads()?;
    let ds = run.dataset()?;
    let kind = match args.kind {
        KindArg::Structure => NoiseKind::Structure,
        KindArg::Label => NoiseKind::Label,
    };
    let modes = run.modes(&[TrainMode::Pta, TrainMode::Pts, TrainMode::Dgcn, TrainMode::Mlp]);
    let out = run_noise_sweep(&ds, kind, &args.rates, &modes, run.runs, run.seed, &run.settings()?)?;
    output::write_results(run.out.as_deref(), run.csv.as_deref(), &out.runs, &out.summary)?;
    for p in &out.summary.points {
        let cells: Vec<String> = p
            .aggregates
            .iter()
            .map(|a| format!("{} {:.4}", a.mode.as_str(), a.aggregate.mean_accuracy))
            .collect();
        eprintln!("rate {:.2}: {}", p.rate, cells.join("  "));
    }
    Ok(out.runs.iter().all(|r| r.ok()))
}

fn sbm(args: &SbmCommand) -> Result<()> {
    let mut ds = generate_sbm(&args.sbm.spec())?;
    if let Some(rate) = args.structure_noise {
        ds = inject_structure_noise(&ds, &NoiseSpec::structure(rate, args.sbm.sbm_seed))?;
    }
    save_dataset(&ds, &args.out)?;
    eprintln!(
        "wrote {} nodes, {} edges, structure noise {:.4} to {}",
        ds.num_nodes(),
        ds.num_edges(),
        measure_structure_noise(&ds)?,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Train(a) => bench(a, true),
        Command::Bench(a) => bench(a, false),
        Command::Noise(a) => noise(a),
        Command::Sbm(a) => sbm(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
