use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pt_core::experiment::RunResult;
use serde::Serialize;

/// JSON lines to a file, or to stdout when no path is given.
pub struct Sink {
    inner: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        Ok(Self { inner })
    }

    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, value)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// `results.jsonl` -> `results.summary.json`
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.json"))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mode: &'a str,
    dataset: &'a str,
    run: usize,
    seed: u64,
    split_seed: u64,
    noise_kind: Option<&'a str>,
    noise_rate: Option<f64>,
    measured_structure_noise: Option<f64>,
    test_accuracy: f64,
    early_stop_accuracy: f64,
    epochs: usize,
    best_epoch: usize,
    per_epoch_ms: f64,
    preprocess_s: f64,
    total_s: f64,
    error: Option<&'a str>,
}

fn write_csv(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in runs {
        w.serialize(CsvRow {
            mode: r.mode.as_str(),
            dataset: &r.dataset,
            run: r.run,
            seed: r.seed,
            split_seed: r.split_seed,
            noise_kind: r.noise_kind.map(|k| match k {
                pt_core::noise::NoiseKind::Structure => "structure",
                pt_core::noise::NoiseKind::Label => "label",
            }),
            noise_rate: r.noise_rate,
            measured_structure_noise: r.measured_structure_noise,
            test_accuracy: r.test_accuracy,
            early_stop_accuracy: r.early_stop_accuracy,
            epochs: r.epochs,
            best_epoch: r.best_epoch,
            per_epoch_ms: r.per_epoch_ms,
            preprocess_s: r.preprocess_s,
            total_s: r.total_s,
            error: r.error.as_deref(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Records go to `out` (or stdout); the summary goes next to `out` (or to
/// stderr when printing records to stdout).
pub fn write_results<S: Serialize>(
    out: Option<&Path>,
    csv: Option<&Path>,
    runs: &[RunResult],
    summary: &S,
) -> Result<()> {
    let mut sink = Sink::open(out)?;
    for r in runs {
        sink.record(r)?;
    }
    sink.finish()?;
    let pretty = serde_json::to_string_pretty(summary)?;
    match out {
        Some(p) => std::fs::write(summary_path(p), pretty + "\n")?,
        None => eprintln!("{pretty}"),
    }
    if let Some(p) = csv {
        write_csv(p, runs)?;
    }
    Ok(())
}
