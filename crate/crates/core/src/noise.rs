//! Structure and label corruption, and a stochastic block model generator
//! for experiments that do not need the real benchmark graphs.

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, LabelSet};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Structure,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub target_rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn structure(target_rate: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Structure,
            target_rate,
            seed,
        }
    }

    pub fn label(target_rate: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Label,
            target_rate,
            seed,
        }
    }

    fn validate(&self, kind: NoiseKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "expected a {kind:?} noise spec, got {:?}",
                self.kind
            )));
        }
        if !(0.0..=1.0).contains(&self.target_rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate must lie in [0, 1], got {}",
                self.target_rate
            )));
        }
        Ok(())
    }
}

/// Fraction of undirected edges joining nodes of different classes.
pub fn measure_structure_noise(ds: &Dataset) -> Result<f64> {
    let (inter, total) = count_inter(ds);
    if total == 0 {
        return Err(Error::NoEdges);
    }
    Ok(inter as f64 / total as f64)
}

fn count_inter(ds: &Dataset) -> (usize, usize) {
    let labels = ds.labels();
    let mut inter = 0;
    let mut total = 0;
    for (u, v) in ds.edges() {
        total += 1;
        if labels[u] != labels[v] {
            inter += 1;
        }
    }
    (inter, total)
}

/// Above this many nodes candidate pairs are drawn by rejection sampling
/// instead of enumerated.
const ENUMERATE_LIMIT: usize = 4000;

/// Draws `count` distinct non-adjacent pairs `u < v` whose endpoints are in
/// different classes (`want_inter`) or the same class.
fn sample_new_pairs(
    ds: &Dataset,
    existing: &HashSet<(usize, usize)>,
    want_inter: bool,
    count: usize,
    available: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = ds.num_nodes();
    let labels = ds.labels();
    let fits = |u: usize, v: usize| (labels[u] != labels[v]) == want_inter && !existing.contains(&(u, v));
    if n <= ENUMERATE_LIMIT || count * 4 > available {
        let mut cands: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| fits(u, v))
            .collect();
        let (picked, _) = cands.partial_shuffle(rng, count);
        return picked.to_vec();
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if fits(pair.0, pair.1) && chosen.insert(pair) {
            out.push(pair);
        }
    }
    out
}

/// Rewires edges (delete one, add one) until the inter-class edge fraction
/// is within one edge of `spec.target_rate`. Edge count, symmetry and the
/// empty diagonal are preserved.
pub fn inject_structure_noise(ds: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    spec.validate(NoiseKind::Structure)?;
    let labels = ds.labels();
    let (inter, total) = count_inter(ds);
    if total == 0 {
        return Err(Error::NoEdges);
    }
    let intra = total - inter;
    let target_inter = (spec.target_rate * total as f64).round() as usize;
    if target_inter == inter {
        return Ok(ds.clone());
    }

    let n = ds.num_nodes();
    let class_sizes = ds.nodes_by_class().iter().map(Vec::len).collect::<Vec<_>>();
    let intra_pairs: usize = class_sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let inter_pairs = n * n.saturating_sub(1) / 2 - intra_pairs;
    let free_inter = inter_pairs - inter;
    let free_intra = intra_pairs - intra;
    let min_inter = inter - inter.min(free_intra);
    let max_inter = inter + intra.min(free_inter);
    if target_inter < min_inter || target_inter > max_inter {
        return Err(Error::UnreachableNoise {
            target: spec.target_rate,
            min: min_inter as f64 / total as f64,
            max: max_inter as f64 / total as f64,
        });
    }

    let raising = target_inter > inter;
    let moves = target_inter.abs_diff(inter);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let existing: HashSet<(usize, usize)> = ds.edges().collect();
    // edges whose class relation is the one being removed
    let mut removable: Vec<(usize, usize)> = ds
        .edges()
        .filter(|&(u, v)| (labels[u] == labels[v]) == raising)
        .collect();
    let (dropped, _) = removable.partial_shuffle(&mut rng, moves);
    let dropped: HashSet<(usize, usize)> = dropped.iter().copied().collect();
    let available = if raising { free_inter } else { free_intra };
    let added = sample_new_pairs(ds, &existing, raising, moves, available, &mut rng);

    let kept = ds
        .adjacency()
        .iter()
        .filter(|&(u, v, _)| !dropped.contains(&(u.min(v), u.max(v))));
    let new = added.iter().flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)]);
    let adj = SparseMatrix::from_triplets(n, n, kept.chain(new))?;
    ds.with_adjacency(adj)
}

/// Flips `⌊rate · count⌋` training labels per class to a uniformly chosen
/// different class. Evaluation labels in `ds` are untouched.
pub fn inject_label_noise(labels: &LabelSet, ds: &Dataset, spec: &NoiseSpec) -> Result<LabelSet> {
    spec.validate(NoiseKind::Label)?;
    let classes = ds.num_classes();
    if classes < 2 {
        return Err(Error::InvalidConfig("label noise needs at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = labels.pairs();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (idx, &(_, c)) in pairs.iter().enumerate() {
        by_class[c].push(idx);
    }
    for (class, mut members) in by_class.into_iter().enumerate() {
        let flips = (spec.target_rate * members.len() as f64).floor() as usize;
        let (picked, _) = members.partial_shuffle(&mut rng, flips);
        for &idx in picked.iter() {
            let r = rng.random_range(0..classes - 1);
            pairs[idx].1 = if r >= class { r + 1 } else { r };
        }
    }
    LabelSet::new(ds.num_nodes(), classes, &pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    /// Norm of each class's mean feature vector; noise is unit Gaussian.
    pub class_separation: f64,
    pub seed: u64,
}

impl SbmSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig("SBM sizes must be positive".into()));
        }
        if self.num_classes > self.n {
            return Err(Error::InvalidConfig("more classes than nodes".into()));
        }
        if !(0.0 <= self.p_inter && self.p_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= p_inter < p_intra <= 1, got p_inter = {}, p_intra = {}",
                self.p_inter, self.p_intra
            )));
        }
        Ok(())
    }

    /// Class of node `i`: classes occupy contiguous, near-equal blocks.
    pub fn class_of(&self, i: usize) -> usize {
        i * self.num_classes / self.n
    }

    fn block_start(&self, c: usize) -> usize {
        (c * self.n).div_ceil(self.num_classes)
    }
}

/// Samples Bernoulli(p) successes among `lo..hi` by geometric skipping.
fn bernoulli_run(lo: usize, hi: usize, p: f64, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
    if p <= 0.0 || lo >= hi {
        return;
    }
    if p >= 1.0 {
        out.extend(lo..hi);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = lo;
    loop {
        let u: f64 = rng.random::<f64>();
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (hi - pos) as f64 {
            return;
        }
        pos += skip as usize;
        out.push(pos);
        pos += 1;
        if pos >= hi {
            return;
        }
    }
}

/// Stochastic block model with Gaussian class-conditional features.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|i| spec.class_of(i)).collect();

    let mut triplets = Vec::new();
    let mut hits = Vec::new();
    for u in 0..n {
        let cu = labels[u];
        for c in 0..spec.num_classes {
            let lo = spec.block_start(c).max(u + 1);
            let hi = spec.block_start(c + 1);
            let p = if c == cu { spec.p_intra } else { spec.p_inter };
            hits.clear();
            bernoulli_run(lo, hi, p, &mut rng, &mut hits);
            for &v in &hits {
                triplets.push((u, v, 1.0));
                triplets.push((v, u, 1.0));
            }
        }
    }
    if triplets.is_empty() {
        return Err(Error::NoEdges);
    }
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;

    let means: Vec<Array1<f64>> = (0..spec.num_classes)
        .map(|_| {
            let dir: Array1<f64> = Array1::from_shape_simple_fn(spec.feature_dim, || StandardNormal.sample(&mut rng));
            let norm = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
            dir * (spec.class_separation / norm)
        })
        .collect();
    let mut features = Array2::<f64>::zeros((n, spec.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let mean = &means[labels[i]];
        for (x, &m) in row.iter_mut().zip(mean) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = m + z;
        }
    }
    Dataset::new("sbm", adjacency, features, labels, spec.num_classes)
}
