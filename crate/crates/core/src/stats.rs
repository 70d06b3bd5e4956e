//! Summary statistics for multi-run experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// 95% percentile-bootstrap interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("bootstrap needs at least one value".into()));
    }
    if resamples == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one resample".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], values[0]));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    Ok((quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub mean_difference: f64,
    /// Two-sided.
    pub p_value: f64,
    /// The differences had zero variance; `p_value` is 1 for identical
    /// inputs and 0 for a constant nonzero shift.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidConfig("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&diffs);
    let var = diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        let (t, p) = if md == 0.0 {
            (0.0, 1.0)
        } else {
            (md.signum() * f64::INFINITY, 0.0)
        };
        return Ok(PairedTTest {
            t_statistic: t,
            degrees_of_freedom: df,
            mean_difference: md,
            p_value: p,
            degenerate: true,
        });
    }
    let t = md / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(PairedTTest {
        t_statistic: t,
        degrees_of_freedom: df,
        mean_difference: md,
        p_value: p.clamp(0.0, 1.0),
        degenerate: false,
    })
}
