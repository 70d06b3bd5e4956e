//! Trainers for the propagation-then-training family and the decoupled-GCN
//! baseline.
//!
//! All PT variants share one objective,
//!
//! ```text
//! L(θ) = -Σ_{i,k} Y_soft[i,k] · F[i,k]^γ · log F[i,k]
//! ```
//!
//! where `F = f_θ(X)`, `Y_soft` comes from label propagation once before
//! training, and `F^γ` is held constant during differentiation. `γ = 0`
//! gives PTS, `γ = 1` gives PTD and `γ = ln(1 + e/ε)` (epoch `e`) gives PTA.
//!
//! The decoupled GCN instead propagates predictions every epoch:
//! `L = -Σ_{j ∈ V_l} log (Ā F)[j, h(j)]`, differentiated through the
//! propagation with [`ppr_adjoint`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{labelset_from_split, normalize_adjacency, Dataset, LabelSet, NormalizationStrategy, Split};
use crate::predictor::{Gradients, MlpConfig, Mode, Params, PredictorState};
use crate::propagation::{label_propagate, ppr_adjoint, ppr_propagate, PropagationConfig};
use crate::sparse::SparseMatrix;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Static weights `ā_ji`.
    Pts,
    /// Dynamic weights `ā_ji · f_{i,h(j)}`.
    Ptd,
    /// Adaptive weights `ā_ji · f_{i,h(j)}^γ`, ensemble early stopping.
    Pta,
    /// PTA with early stopping on raw predictions.
    PtaFast,
    /// Decoupled GCN (APPNP-style), propagation inside the training loop.
    Dgcn,
    /// Decoupled GCN trained as usual, predictions not propagated at inference.
    DgcnNoe,
    /// Pseudo-labels spread uniformly over each labelled node's propagation
    /// support, no graph or model weighting.
    DgcnUniform,
    /// Labelled nodes only, no propagation anywhere.
    Mlp,
}

impl TrainMode {
    pub const ALL: [TrainMode; 8] = [
        Self::Pts,
        Self::Ptd,
        Self::Pta,
        Self::PtaFast,
        Self::Dgcn,
        Self::DgcnNoe,
        Self::DgcnUniform,
        Self::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pts => "pts",
            Self::Ptd => "ptd",
            Self::Pta => "pta",
            Self::PtaFast => "pta-fast",
            Self::Dgcn => "dgcn",
            Self::DgcnNoe => "dgcn-noe",
            Self::DgcnUniform => "dgcn-uniform",
            Self::Mlp => "mlp",
        }
    }

    /// Modes whose training loop propagates predictions every epoch.
    pub fn propagates_in_loop(self) -> bool {
        matches!(self, Self::Dgcn | Self::DgcnNoe)
    }

    /// Whether predictions are propagated at inference time.
    pub fn ensemble_inference(self) -> bool {
        !matches!(self, Self::DgcnNoe | Self::Mlp)
    }

    /// Whether the per-epoch early-stopping metric uses propagated predictions.
    pub fn ensemble_early_stop(self) -> bool {
        !matches!(self, Self::PtaFast | Self::DgcnNoe | Self::Mlp)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Weight of the data loss.
    pub lambda1: f64,
    /// Weight of `‖W1‖²`.
    pub lambda2: f64,
    pub lr: f64,
    /// Temperature of the adaptive exponent.
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub prop: PropagationConfig,
    pub normalization: NormalizationStrategy,
    /// Seeds the per-epoch dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pta,
            lambda1: 0.05,
            lambda2: 0.005,
            lr: 0.1,
            epsilon: 100.0,
            max_epochs: 1000,
            patience: 100,
            prop: PropagationConfig::default(),
            normalization: NormalizationStrategy::SymSelfloop,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_mode(mut self, mode: TrainMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.prop.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig("lambda1 and lambda2 must be nonnegative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// The exponent on `F` used at `epoch` (1-based).
    pub fn gamma_at(&self, epoch: usize) -> f64 {
        match self.mode {
            TrainMode::Ptd => 1.0,
            TrainMode::Pta | TrainMode::PtaFast => compute_gamma(epoch, self.epsilon),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub early_stop_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub predictor: PredictorState,
    pub mode: TrainMode,
    pub prop: PropagationConfig,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_early_stop_accuracy: f64,
    pub epochs_run: usize,
    /// Label propagation / pseudo-label construction time, seconds.
    pub preprocess_s: f64,
    /// Whole run including preprocessing and early-stopping evaluation, seconds.
    pub wall_time_total: f64,
    /// Median optimization-step time after a warmup, seconds. Excludes the
    /// early-stopping evaluation.
    pub wall_time_per_epoch: f64,
}

impl TrainedModel {
    /// Class predictions for every node using the mode's inference rule.
    pub fn predict(&self, a_hat: &SparseMatrix, x: &ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if self.mode.ensemble_inference() {
            ensemble_predict(&self.predictor, a_hat, x, &self.prop)
        } else {
            let fwd = self.predictor.forward(x, Mode::Eval)?;
            Ok(argmax_rows(&fwd.probs.view()))
        }
    }
}

/// `γ = ln(1 + epoch / epsilon)`.
pub fn compute_gamma(epoch: usize, epsilon: f64) -> f64 {
    (epoch as f64 / epsilon).ln_1p()
}

fn pta_terms(
    y_soft: &ArrayView2<'_, f64>,
    probs: &ArrayView2<'_, f64>,
    log_probs: &ArrayView2<'_, f64>,
    gamma: f64,
) -> Result<(f64, Matrix)> {
    if y_soft.dim() != probs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "soft labels {:?} vs predictions {:?}",
            y_soft.dim(),
            probs.dim()
        )));
    }
    let mut coeffs = Array2::zeros(probs.dim());
    let mut loss = 0.0;
    Zip::from(&mut coeffs)
        .and(y_soft)
        .and(probs)
        .and(log_probs)
        .for_each(|c, &y, &f, &lf| {
            if y != 0.0 {
                *c = y * f.powf(gamma);
                loss -= *c * lf;
            }
        });
    if !loss.is_finite() || coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PT loss".into()));
    }
    Ok((loss, coeffs))
}

/// Matrix-form PT loss and the coefficients `c = Y_soft ⊗ F^γ` that
/// [`PredictorState::backward`] consumes.
pub fn pta_loss(y_soft: &ArrayView2<'_, f64>, probs: &ArrayView2<'_, f64>, gamma: f64) -> Result<(f64, Matrix)> {
    if probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::NonFinite("predictions must be positive probabilities".into()));
    }
    let log_probs = probs.mapv(f64::ln);
    pta_terms(y_soft, probs, &log_probs.view(), gamma)
}

/// Decoupled-GCN loss `-Σ_{j∈V_l} log Ŷ[j,h(j)]` with `Ŷ = Ā F`. Returns
/// the loss and `Ŷ`.
pub fn dgcn_loss(
    a_hat: &SparseMatrix,
    probs: &ArrayView2<'_, f64>,
    labels: &LabelSet,
    prop: &PropagationConfig,
) -> Result<(f64, Matrix)> {
    let yhat = ppr_propagate(a_hat, probs, &prop.with_clamp(false))?;
    let mut loss = 0.0;
    for (j, class) in labels.pairs() {
        let v = yhat[[j, class]];
        if !(v > 0.0) {
            return Err(Error::NonFinite(format!(
                "propagated prediction at node {j} is {v}; its log is undefined"
            )));
        }
        loss -= v.ln();
    }
    Ok((loss, yhat))
}

/// `dL/dF` of [`dgcn_loss`], via the adjoint recurrence.
pub fn dgcn_prob_grad(
    a_hat_t: &SparseMatrix,
    yhat: &ArrayView2<'_, f64>,
    labels: &LabelSet,
    prop: &PropagationConfig,
) -> Result<Matrix> {
    let mut seed = Array2::zeros(yhat.dim());
    for (j, class) in labels.pairs() {
        seed[[j, class]] = -1.0 / yhat[[j, class]];
    }
    ppr_adjoint(a_hat_t, &seed.view(), &prop.with_clamp(false))
}

/// Pseudo-label weights under which weighted PT reproduces decoupled-GCN
/// gradients: `w[i, j] = ā_ji f_{i,h(j)} / Σ_q ā_jq f_{q,h(j)}`. Column `jj`
/// corresponds to `labels.labeled_nodes()[jj]`.
pub fn dgcn_pt_weights(a_bar: &ArrayView2<'_, f64>, probs: &ArrayView2<'_, f64>, labels: &LabelSet) -> Result<Matrix> {
    let n = probs.nrows();
    if a_bar.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Ā is {:?}, predictions have {n} rows",
            a_bar.dim()
        )));
    }
    let pairs = labels.pairs();
    let mut w = Array2::zeros((n, pairs.len()));
    for (jj, &(j, class)) in pairs.iter().enumerate() {
        let num: Vec<f64> = (0..n).map(|i| a_bar[[j, i]] * probs[[i, class]]).collect();
        let denom: f64 = num.iter().sum();
        if !(denom > 0.0) {
            return Err(Error::NonFinite(format!(
                "zero weight normalizer for labelled node {j}"
            )));
        }
        for (i, v) in num.into_iter().enumerate() {
            w[[i, jj]] = v / denom;
        }
    }
    Ok(w)
}

/// Turns per-pair weights `w[i, j]` into per-class coefficients
/// `c[i, k] = Σ_j w[i, j] · y_jk`, so that `-Σ c log F` equals
/// `Σ_{i,j} w_ij CE(f_i, y_j)`.
pub fn pair_weights_to_coefficients(w: &ArrayView2<'_, f64>, labels: &LabelSet) -> Matrix {
    let mut c = Array2::zeros((w.nrows(), labels.num_classes()));
    for (jj, (_, class)) in labels.pairs().into_iter().enumerate() {
        let mut col = c.column_mut(class);
        col += &w.column(jj);
    }
    c
}

/// Gradients of the decoupled-GCN loss, propagated through `Ā` by the adjoint
/// recurrence. Dropout-free.
pub fn dgcn_gradients(
    state: &PredictorState,
    x: &ArrayView2<'_, f64>,
    a_hat: &SparseMatrix,
    labels: &LabelSet,
    prop: &PropagationConfig,
) -> Result<(f64, Gradients)> {
    let fwd = state.forward(x, Mode::Eval)?;
    let (loss, yhat) = dgcn_loss(a_hat, &fwd.probs.view(), labels, prop)?;
    let a_hat_t = transpose_if_needed(a_hat);
    let dprobs = dgcn_prob_grad(&a_hat_t, &yhat.view(), labels, prop)?;
    let grads = state.backward_from_prob_grad(x, &fwd, &dprobs.view())?;
    Ok((loss, grads))
}

fn transpose_if_needed(a_hat: &SparseMatrix) -> SparseMatrix {
    if a_hat.is_symmetric() {
        a_hat.clone()
    } else {
        a_hat.transpose()
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(m: &ArrayView2<'_, f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Final prediction `argmax(Ā f_θ(X))`.
pub fn ensemble_predict(
    state: &PredictorState,
    a_hat: &SparseMatrix,
    x: &ArrayView2<'_, f64>,
    prop: &PropagationConfig,
) -> Result<Vec<usize>> {
    let fwd = state.forward(x, Mode::Eval)?;
    let yhat = ppr_propagate(a_hat, &fwd.probs.view(), &prop.with_clamp(false))?;
    Ok(argmax_rows(&yhat.view()))
}

pub fn accuracy(pred: &[usize], truth: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&i| pred[i] == truth[i]).count();
    hits as f64 / nodes.len() as f64
}

/// Nodes within `hops` steps of `source`, including `source`.
fn ball(adj: &SparseMatrix, source: usize, hops: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.n_rows()];
    dist[source] = 0;
    let mut out = vec![source];
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in adj.row(u).0 {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out
}

/// Soft labels in which every labelled node spreads unit mass uniformly over
/// the support of its `Ā` row, i.e. the ball of radius `K` (just itself when
/// `alpha = 1`).
pub fn uniform_pseudo_labels(adj: &SparseMatrix, labels: &LabelSet, prop: &PropagationConfig) -> Matrix {
    let radius = if prop.alpha >= 1.0 { 0 } else { prop.k };
    let mut y = Array2::zeros((labels.num_nodes(), labels.num_classes()));
    for (j, class) in labels.pairs() {
        let support = ball(adj, j, radius);
        let share = 1.0 / support.len() as f64;
        for i in support {
            y[[i, class]] += share;
        }
    }
    y
}

fn dropout_seed(base: u64, epoch: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

const TIMING_WARMUP: usize = 5;

/// Trains on the split's training labels.
pub fn train(ds: &Dataset, split: &Split, mlp: MlpConfig, cfg: &TrainConfig) -> Result<TrainedModel> {
    let labels = labelset_from_split(ds, split)?;
    train_with_labels(ds, split, &labels, mlp, cfg)
}

/// Trains on an explicit label set (e.g. one with injected label noise).
/// Early stopping still scores against the dataset's ground truth.
pub fn train_with_labels(
    ds: &Dataset,
    split: &Split,
    labels: &LabelSet,
    mlp: MlpConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let started = Instant::now();
    cfg.validate()?;
    mlp.validate()?;
    if mlp.in_dim != ds.num_features() || mlp.out_dim != ds.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "predictor is {}->{}, dataset has {} features and {} classes",
            mlp.in_dim,
            mlp.out_dim,
            ds.num_features(),
            ds.num_classes()
        )));
    }
    if labels.num_nodes() != ds.num_nodes() || labels.num_classes() != ds.num_classes() {
        return Err(Error::DimensionMismatch("label set does not match dataset".into()));
    }

    let a_hat = normalize_adjacency(ds.adjacency(), cfg.normalization)?;
    let a_hat_t = transpose_if_needed(&a_hat);
    let x = ds.features().view();
    let prop = cfg.prop;

    let pre_start = Instant::now();
    let y_soft = match cfg.mode {
        TrainMode::Pts | TrainMode::Ptd | TrainMode::Pta | TrainMode::PtaFast => {
            Some(label_propagate(&a_hat, labels, &prop)?)
        }
        TrainMode::DgcnUniform => Some(uniform_pseudo_labels(&a_hat, labels, &prop)),
        TrainMode::Mlp => Some(labels.onehot().clone()),
        TrainMode::Dgcn | TrainMode::DgcnNoe => None,
    };
    let preprocess_s = pre_start.elapsed().as_secs_f64();

    let mut state = PredictorState::init(mlp)?;
    let mut history = Vec::new();
    let mut step_times = Vec::new();
    let mut best: Option<(Params, usize, f64, f64)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let step_start = Instant::now();
        let mode = Mode::Train {
            dropout_seed: dropout_seed(cfg.seed, epoch),
        };
        let fwd = state.forward(&x, mode)?;
        let (data_loss, grads) = match &y_soft {
            Some(y_soft) => {
                let gamma = cfg.gamma_at(epoch);
                let (loss, mut coeffs) = pta_terms(&y_soft.view(), &fwd.probs.view(), &fwd.log_probs.view(), gamma)?;
                coeffs.mapv_inplace(|c| c * cfg.lambda1);
                (loss, state.backward(&x, &fwd, &coeffs.view())?)
            }
            None => {
                let (loss, yhat) = dgcn_loss(&a_hat, &fwd.probs.view(), labels, &prop)?;
                let mut dprobs = dgcn_prob_grad(&a_hat_t, &yhat.view(), labels, &prop)?;
                dprobs.mapv_inplace(|g| g * cfg.lambda1);
                (loss, state.backward_from_prob_grad(&x, &fwd, &dprobs.view())?)
            }
        };
        let train_loss = cfg.lambda1 * data_loss + cfg.lambda2 * state.l2_penalty();
        if !train_loss.is_finite() || !grads.all_finite() {
            return Err(Error::Diverged {
                epoch,
                msg: format!("loss = {train_loss}"),
            });
        }
        let step_elapsed = step_start.elapsed();

        // Score the parameters that produced this epoch's loss, before updating them.
        let eval_probs = if mlp.dropout == 0.0 {
            fwd.probs
        } else {
            state.forward(&x, Mode::Eval)?.probs
        };
        let pred = if cfg.mode.ensemble_early_stop() {
            let yhat = ppr_propagate(&a_hat, &eval_probs.view(), &prop.with_clamp(false))?;
            argmax_rows(&yhat.view())
        } else {
            argmax_rows(&eval_probs.view())
        };
        let es_acc = accuracy(&pred, ds.labels(), &split.early_stop);
        history.push(EpochRecord {
            train_loss,
            early_stop_accuracy: es_acc,
        });

        let improved = match &best {
            None => true,
            Some((_, _, acc, loss)) => es_acc > *acc || (es_acc == *acc && train_loss < *loss),
        };
        if improved {
            best = Some((state.params.clone(), epoch, es_acc, train_loss));
            since_best = 0;
        } else {
            since_best += 1;
        }

        let update_start = Instant::now();
        state.adam_step(&grads, cfg.lr, cfg.lambda2)?;
        step_times.push((step_elapsed + update_start.elapsed()).as_secs_f64());

        if since_best >= cfg.patience {
            break;
        }
    }

    let epochs_run = history.len();
    let (best_params, best_epoch, best_acc) = match best {
        Some((p, e, acc, _)) => (p, e, acc),
        None => (state.params.clone(), 0, 0.0),
    };
    state.params = best_params;

    let timed = if step_times.len() > TIMING_WARMUP {
        &mut step_times[TIMING_WARMUP..]
    } else {
        &mut step_times[..]
    };
    let wall_time_per_epoch = median(timed);

    Ok(TrainedModel {
        predictor: state,
        mode: cfg.mode,
        prop,
        history,
        best_epoch,
        best_early_stop_accuracy: best_acc,
        epochs_run,
        preprocess_s,
        wall_time_total: started.elapsed().as_secs_f64(),
        wall_time_per_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gamma_values() {
        assert_eq!(compute_gamma(0, 100.0), 0.0);
        assert!((compute_gamma(100, 100.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let mut prev = -1.0;
        for e in 0..2000 {
            let g = compute_gamma(e, 100.0);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn pta_loss_cases() {
        let f = Array2::from_elem((3, 4), 0.25);
        let mut y = Array2::zeros((3, 4));
        y[[1, 2]] = 1.0;
        let (loss, _) = pta_loss(&y.view(), &f.view(), 0.0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);

        let (loss, c) = pta_loss(&Array2::zeros((3, 4)).view(), &f.view(), 0.7).unwrap();
        assert_eq!(loss, 0.0);
        assert!(c.iter().all(|&v| v == 0.0));
        assert!(pta_loss(&y.view(), &Array2::zeros((3, 4)).view(), 0.0).is_err());
    }

    #[test]
    fn dgcn_loss_uniform_single_label() {
        let a = SparseMatrix::from_dense(array![[0.5, 0.5], [0.5, 0.5]].view());
        let f = Array2::from_elem((2, 3), 1.0 / 3.0);
        let labels = LabelSet::new(2, 3, &[(1, 2)]).unwrap();
        let (loss, _) = dgcn_loss(&a, &f.view(), &labels, &PropagationConfig::default()).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dgcn_loss_identity_limit() {
        let a = SparseMatrix::from_dense(array![[0.5, 0.5], [0.5, 0.5]].view());
        let f = array![[0.999999, 0.000001], [0.000001, 0.999999]];
        let labels = LabelSet::new(2, 2, &[(0, 0), (1, 1)]).unwrap();
        let (loss, _) = dgcn_loss(&a, &f.view(), &labels, &PropagationConfig::new(1.0, 10).unwrap()).unwrap();
        assert!(loss < 1e-5);
    }

    #[test]
    fn weights_identity_and_symmetric_cases() {
        let f = array![[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]];
        let labels = LabelSet::new(3, 2, &[(0, 1), (2, 0)]).unwrap();
        let w = dgcn_pt_weights(&Array2::<f64>::eye(3).view(), &f.view(), &labels).unwrap();
        assert_eq!(w.column(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(w.column(1).to_vec(), vec![0.0, 0.0, 1.0]);

        let abar = array![[0.5, 0.5], [0.5, 0.5]];
        let same = array![[0.2, 0.8], [0.2, 0.8]];
        let labels = LabelSet::new(2, 2, &[(0, 1)]).unwrap();
        let w = dgcn_pt_weights(&abar.view(), &same.view(), &labels).unwrap();
        assert_eq!(w.column(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn ensemble_two_node_by_hand() {
        let a = SparseMatrix::from_dense(array![[0.5, 0.5], [0.5, 0.5]].view());
        let f = array![[0.9, 0.1], [0.4, 0.6]];
        let yhat = ppr_propagate(&a, &f.view(), &PropagationConfig::new(0.1, 1).unwrap()).unwrap();
        assert!((yhat[[1, 0]] - 0.625).abs() < 1e-15);
        assert!((yhat[[1, 1]] - 0.375).abs() < 1e-15);
        assert_eq!(argmax_rows(&yhat.view()), vec![0, 0]);
        assert_eq!(argmax_rows(&f.view()), vec![0, 1]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&array![[0.5, 0.5], [0.2, 0.2]].view()), vec![0, 0]);
    }

    #[test]
    fn mode_round_trip() {
        for m in TrainMode::ALL {
            assert_eq!(m.as_str().parse::<TrainMode>().unwrap(), m);
        }
        assert_eq!("PTA_FAST".parse::<TrainMode>().unwrap(), TrainMode::PtaFast);
        assert!("gcn".parse::<TrainMode>().is_err());
    }

    #[test]
    fn uniform_labels_cover_ball() {
        // path 0-1-2-3, label at node 0, K = 2 reaches {0, 1, 2}
        let adj = SparseMatrix::from_triplets(
            4,
            4,
            [
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 3, 1.0),
                (3, 2, 1.0),
            ],
        )
        .unwrap();
        let labels = LabelSet::new(4, 2, &[(0, 1)]).unwrap();
        let y = uniform_pseudo_labels(&adj, &labels, &PropagationConfig::new(0.1, 2).unwrap());
        assert_eq!(y.column(1).to_vec(), vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
        let y = uniform_pseudo_labels(&adj, &labels, &PropagationConfig::new(1.0, 2).unwrap());
        assert_eq!(y.column(1).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.patience = 2000;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            epsilon: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
