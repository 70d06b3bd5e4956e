//! Numerical checks of the identities behind the PT family.
//!
//! Each check draws small random instances (connected Erdős–Rényi graphs,
//! random features, labels and predictor) and compares two independent
//! routes to the same quantity:
//!
//! * `lemma1`: decoupled-GCN gradients through the propagation adjoint vs.
//!   weighted pseudo-label gradients with weights from the dense `Ā`.
//! * `appnp_unroll`: the iterative PPR recurrence vs. the closed-form `Ā`.
//! * `softmax_decomposition`: the unnormalized decoupled-GCN loss vs. cross
//!   entropy on the row-normalized prediction plus `log Σ_j ā_ij`.
//! * `matrix_loss`: the matrix-form PT loss vs. the explicit pairwise sum.
//!
//! Everything runs single-threaded in double precision without dropout.

use ndarray::{Array2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{normalize_adjacency, LabelSet, NormalizationStrategy};
use crate::predictor::{MlpConfig, Mode, PredictorState};
use crate::propagation::{closed_form_abar, label_propagate, ppr_propagate, PropagationConfig};
use crate::sparse::SparseMatrix;
use crate::training::{dgcn_gradients, dgcn_loss, dgcn_pt_weights, pair_weights_to_coefficients, pta_loss};
use crate::Matrix;

pub const DEFAULT_TRIALS: usize = 50;
pub const LEMMA1_TOLERANCE: f64 = 1e-8;
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

const MAX_DENSE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub instances: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
}

/// A random verification-scale problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub adjacency: SparseMatrix,
    pub a_hat: SparseMatrix,
    pub strategy: NormalizationStrategy,
    pub prop: PropagationConfig,
    pub features: Matrix,
    pub labels: LabelSet,
    pub predictor: PredictorState,
}

/// Symmetric Erdős–Rényi graph with edge probability `2 ln(n) / n`,
/// resampled until connected.
pub fn random_connected_graph(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let p = (2.0 * (n as f64).ln() / n as f64).min(1.0);
    loop {
        let mut trip = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    trip.push((u, v, 1.0));
                    trip.push((v, u, 1.0));
                }
            }
        }
        let adj = SparseMatrix::from_triplets(n, n, trip).expect("valid triplets");
        if is_connected(&adj) {
            return adj;
        }
    }
}

fn is_connected(adj: &SparseMatrix) -> bool {
    let n = adj.n_rows();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in adj.row(u).0 {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Draws an instance with `n ∈ [5, 30]`, `C ∈ [2, 4]`, at least one label
/// per class, and a predictor with randomized biases so outputs are far
/// from uniform.
pub fn random_instance(rng: &mut ChaCha8Rng, symmetric_only: bool) -> Instance {
    let n = rng.random_range(5..=30);
    let classes = rng.random_range(2..=4);
    let f = rng.random_range(3..=8);
    let hidden = rng.random_range(3..=8);
    let adjacency = random_connected_graph(n, rng);
    let strategies: &[NormalizationStrategy] = if symmetric_only {
        &[NormalizationStrategy::SymSelfloop, NormalizationStrategy::Sym]
    } else {
        &[
            NormalizationStrategy::SymSelfloop,
            NormalizationStrategy::Sym,
            NormalizationStrategy::Row,
        ]
    };
    let strategy = *strategies.choose(rng).unwrap();
    let a_hat = normalize_adjacency(&adjacency, strategy).expect("connected graph normalizes");
    let prop = PropagationConfig::new(rng.random_range(0.05..0.95), rng.random_range(1..=10))
        .unwrap()
        .with_clamp(false);

    let features = Array2::from_shape_simple_fn((n, f), || rng.random_range(-1.0..1.0));

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let n_labeled = rng.random_range(classes..=n);
    let pairs: Vec<(usize, usize)> = nodes[..n_labeled]
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, if k < classes { k } else { rng.random_range(0..classes) }))
        .collect();
    let labels = LabelSet::new(n, classes, &pairs).unwrap();

    let mut predictor = PredictorState::init(MlpConfig {
        in_dim: f,
        hidden,
        out_dim: classes,
        dropout: 0.0,
        init_seed: rng.random(),
    })
    .unwrap();
    predictor.params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    predictor.params.b2.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    predictor.params.w2.mapv_inplace(|w| w * 2.0);

    Instance {
        adjacency,
        a_hat,
        strategy,
        prop,
        features,
        labels,
        predictor,
    }
}

/// Elementwise relative difference. Entries where both sides are below
/// `floor` are compared on the absolute scale of `floor`.
fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

struct Lemma1Trial {
    max_abs: f64,
    max_rel: f64,
    weight_sum_error: f64,
}

fn lemma1_trial(rng: &mut ChaCha8Rng) -> Lemma1Trial {
    let inst = random_instance(rng, false);
    let x = inst.features.view();
    let state = &inst.predictor;

    let (_, adjoint) = dgcn_gradients(state, &x, &inst.a_hat, &inst.labels, &inst.prop).unwrap();

    let abar = closed_form_abar(&inst.a_hat, &inst.prop, MAX_DENSE).unwrap();
    let fwd = state.forward(&x, Mode::Eval).unwrap();
    let w = dgcn_pt_weights(&abar.view(), &fwd.probs.view(), &inst.labels).unwrap();
    let coeffs = pair_weights_to_coefficients(&w.view(), &inst.labels);
    let weighted = state.backward(&x, &fwd, &coeffs.view()).unwrap();

    let a = adjoint.flatten();
    let b = weighted.flatten();
    let scale = a.iter().chain(&b).fold(0.0f64, |m, v| m.max(v.abs()));
    // Gradients that vanish up to rounding (dead ReLU units) are compared
    // relative to the largest gradient entry.
    let floor = 1e-6 * scale.max(f64::MIN_POSITIVE);
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        max_abs = max_abs.max((x - y).abs());
        max_rel = max_rel.max(rel_diff(*x, *y, floor));
    }
    let weight_sum_error = w.sum_axis(Axis(0)).iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
    Lemma1Trial {
        max_abs,
        max_rel,
        weight_sum_error,
    }
}

/// Decoupled-GCN gradients equal weighted-PT gradients under the dynamic
/// weights. Also requires every weight column to sum to one.
pub fn verify_lemma1(trials: usize, seed: u64, tol: f64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut abs, mut rel, mut wsum) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let t = lemma1_trial(&mut rng);
        abs = abs.max(t.max_abs);
        rel = rel.max(t.max_rel);
        wsum = wsum.max(t.weight_sum_error);
    }
    VerificationReport {
        check_name: "lemma1".into(),
        instances: trials,
        max_abs_error: abs,
        max_rel_error: rel,
        tolerance: tol,
        passed: rel <= tol && wsum <= WEIGHT_SUM_TOLERANCE,
        seed,
    }
}

/// Largest `|Σ_i w_ij - 1|` over the same trials [`verify_lemma1`] draws.
pub fn lemma1_weight_sum_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| lemma1_trial(&mut rng).weight_sum_error)
        .fold(0.0, f64::max)
}

fn inf_norm(m: &Matrix) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Iterative PPR of the identity equals the closed-form `Ā` (∞-norm).
pub fn verify_appnp_unroll(trials: usize, seed: u64, tol: f64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut abs, mut rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let inst = random_instance(&mut rng, false);
        let n = inst.a_hat.n_rows();
        let eye = Array2::<f64>::eye(n);
        let iterative = ppr_propagate(&inst.a_hat, &eye.view(), &inst.prop).unwrap();
        let closed = closed_form_abar(&inst.a_hat, &inst.prop, MAX_DENSE).unwrap();
        let err = inf_norm(&(&iterative - &closed));
        abs = abs.max(err);
        rel = rel.max(err / inf_norm(&closed).max(f64::MIN_POSITIVE));
    }
    VerificationReport {
        check_name: "appnp_unroll".into(),
        instances: trials,
        max_abs_error: abs,
        max_rel_error: rel,
        tolerance: tol,
        passed: abs <= tol,
        seed,
    }
}

/// Per labelled node: `-log (Ā F)[i,h(i)]` equals the cross entropy of the
/// row-normalized prediction plus `-log Σ_j ā_ij`.
pub fn verify_softmax_decomposition(trials: usize, seed: u64, tol: f64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut abs, mut rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let inst = random_instance(&mut rng, false);
        let x = inst.features.view();
        let fwd = inst.predictor.forward(&x, Mode::Eval).unwrap();
        let (_, yhat) = dgcn_loss(&inst.a_hat, &fwd.probs.view(), &inst.labels, &inst.prop).unwrap();
        let abar = closed_form_abar(&inst.a_hat, &inst.prop, MAX_DENSE).unwrap();
        for (i, class) in inst.labels.pairs() {
            let lhs = -yhat[[i, class]].ln();
            let row_mass: f64 = abar.row(i).sum();
            let normalized: f64 = abar
                .row(i)
                .iter()
                .zip(fwd.probs.column(class))
                .map(|(a, f)| (a / row_mass) * f)
                .sum();
            let rhs = -normalized.ln() - row_mass.ln();
            let err = (lhs - rhs).abs();
            abs = abs.max(err);
            rel = rel.max(err / lhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    VerificationReport {
        check_name: "softmax_decomposition".into(),
        instances: trials,
        max_abs_error: abs,
        max_rel_error: rel,
        tolerance: tol,
        passed: abs <= tol,
        seed,
    }
}

/// Explicit pairwise PT loss `Σ_{i, j∈V_l} ā_ji f_{i,h(j)}^γ CE(f_i, y_j)`.
pub fn pairwise_pt_loss(abar: &Matrix, probs: &Matrix, labels: &LabelSet, gamma: f64) -> f64 {
    let mut total = 0.0;
    for (j, class) in labels.pairs() {
        for i in 0..probs.nrows() {
            let f = probs[[i, class]];
            total += abar[[j, i]] * f.powf(gamma) * -f.ln();
        }
    }
    total
}

pub const MATRIX_LOSS_GAMMAS: [f64; 3] = [0.0, 1.0, std::f64::consts::LN_2];

/// Matrix-form PT loss with `Y_soft = Ā Y` equals the pairwise double sum,
/// for `γ ∈ {0, 1, ln 2}`. Uses symmetric normalizations, where `ā_ij = ā_ji`.
pub fn verify_matrix_loss(trials: usize, seed: u64, tol: f64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut abs, mut rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let inst = random_instance(&mut rng, true);
        let fwd = inst.predictor.forward(&inst.features.view(), Mode::Eval).unwrap();
        let y_soft = label_propagate(&inst.a_hat, &inst.labels, &inst.prop).unwrap();
        let abar = closed_form_abar(&inst.a_hat, &inst.prop, MAX_DENSE).unwrap();
        for gamma in MATRIX_LOSS_GAMMAS {
            let (matrix, _) = pta_loss(&y_soft.view(), &fwd.probs.view(), gamma).unwrap();
            let pairwise = pairwise_pt_loss(&abar, &fwd.probs, &inst.labels, gamma);
            let err = (matrix - pairwise).abs();
            abs = abs.max(err);
            rel = rel.max(err / pairwise.abs().max(f64::MIN_POSITIVE));
        }
    }
    VerificationReport {
        check_name: "matrix_loss".into(),
        instances: trials,
        max_abs_error: abs,
        max_rel_error: rel,
        tolerance: tol,
        passed: abs <= tol,
        seed,
    }
}

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;

fn central_differences(state: &PredictorState, loss: impl Fn(&PredictorState) -> f64) -> Vec<f64> {
    let mut probe = state.clone();
    let mut out = Vec::new();
    for t in 0..4 {
        for i in 0..state.params.tensors()[t].len() {
            let orig = state.params.tensors()[t][i];
            probe.params.tensors_mut()[t][i] = orig + FD_STEP;
            let up = loss(&probe);
            probe.params.tensors_mut()[t][i] = orig - FD_STEP;
            let down = loss(&probe);
            probe.params.tensors_mut()[t][i] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

/// Analytic predictor gradients of the PT loss (fixed `F^γ` factor) and of
/// the decoupled-GCN loss against central differences, on tiny instances
/// (`n = 6`, 5 features, 4 hidden units, 3 classes).
pub fn verify_predictor_gradients(trials: usize, seed: u64, tol: f64) -> VerificationReport {
    const N: usize = 6;
    const C: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut abs, mut rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let x = Array2::from_shape_simple_fn((N, 5), || rng.random_range(-1.0..1.0));
        let mut state = PredictorState::init(MlpConfig {
            in_dim: 5,
            hidden: 4,
            out_dim: C,
            dropout: 0.0,
            init_seed: rng.random(),
        })
        .unwrap();
        state.params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        state.params.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let a_hat =
            normalize_adjacency(&random_connected_graph(N, &mut rng), NormalizationStrategy::SymSelfloop).unwrap();
        let prop = PropagationConfig::new(rng.random_range(0.05..0.95), rng.random_range(1..=10))
            .unwrap()
            .with_clamp(false);
        let labels = LabelSet::new(N, C, &[(0, 0), (2, 1), (3, 2), (5, 1)]).unwrap();
        let y_soft = Array2::from_shape_simple_fn((N, C), || rng.random_range(0.0..1.0));
        let gamma = rng.random_range(0.0..1.5);

        let fwd = state.forward(&x.view(), Mode::Eval).unwrap();
        let (_, coeffs) = pta_loss(&y_soft.view(), &fwd.probs.view(), gamma).unwrap();
        let pt = state.backward(&x.view(), &fwd, &coeffs.view()).unwrap().flatten();
        let pt_fd = central_differences(&state, |s| {
            -(&coeffs * &s.forward(&x.view(), Mode::Eval).unwrap().log_probs).sum()
        });
        let (_, dgcn) = dgcn_gradients(&state, &x.view(), &a_hat, &labels, &prop).unwrap();
        let dgcn_fd = central_differences(&state, |s| {
            let f = s.forward(&x.view(), Mode::Eval).unwrap();
            dgcn_loss(&a_hat, &f.probs.view(), &labels, &prop).unwrap().0
        });
        for (analytic, numeric) in [(pt, pt_fd), (dgcn.flatten(), dgcn_fd)] {
            for (a, n) in analytic.iter().zip(&numeric) {
                abs = abs.max((a - n).abs());
                rel = rel.max(rel_diff(*a, *n, 1e-7));
            }
        }
    }
    VerificationReport {
        check_name: "predictor_gradients".into(),
        instances: trials,
        max_abs_error: abs,
        max_rel_error: rel,
        tolerance: tol,
        passed: rel <= tol,
        seed,
    }
}

/// Runs all four checks with their default tolerances. `tolerance_override`
/// replaces every tolerance (used to force the failure path).
pub fn run_verifications(seed: u64, trials: usize, tolerance_override: Option<f64>) -> Vec<VerificationReport> {
    let tol = |default: f64| tolerance_override.unwrap_or(default);
    vec![
        verify_lemma1(trials, seed, tol(LEMMA1_TOLERANCE)),
        verify_appnp_unroll(trials, seed, tol(IDENTITY_TOLERANCE)),
        verify_softmax_decomposition(trials, seed, tol(IDENTITY_TOLERANCE)),
        verify_matrix_loss(trials, seed, tol(IDENTITY_TOLERANCE)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_pass_vacuously() {
        for r in run_verifications(1, 0, None) {
            assert!(r.passed);
            assert_eq!(r.max_abs_error, 0.0);
            assert_eq!(r.max_rel_error, 0.0);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        assert_eq!(run_verifications(7, 5, None), run_verifications(7, 5, None));
    }

    #[test]
    fn generator_produces_connected_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, false);
            assert!(is_connected(&inst.adjacency));
            assert!(inst.adjacency.is_symmetric());
            assert!(inst.labels.class_counts().iter().all(|&c| c >= 1));
        }
    }

    #[test]
    fn row_stochastic_base_has_zero_constant_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let adj = random_connected_graph(12, &mut rng);
        let a_hat = normalize_adjacency(&adj, NormalizationStrategy::Row).unwrap();
        let abar = closed_form_abar(&a_hat, &PropagationConfig::new(0.3, 5).unwrap(), 64).unwrap();
        for row in abar.rows() {
            assert!(row.sum().ln().abs() < 1e-14);
        }
    }

    #[test]
    fn single_node_decomposition() {
        // one isolated node with a self-loop: Ā = [1], both sides are -log f
        let a_hat = normalize_adjacency(
            &SparseMatrix::from_triplets(1, 1, []).unwrap(),
            NormalizationStrategy::SymSelfloop,
        )
        .unwrap();
        let probs = ndarray::array![[0.3, 0.7]];
        let labels = LabelSet::new(1, 2, &[(0, 1)]).unwrap();
        let prop = PropagationConfig::new(0.2, 4).unwrap();
        let (loss, _) = dgcn_loss(&a_hat, &probs.view(), &labels, &prop).unwrap();
        assert!((loss + 0.7f64.ln()).abs() < 1e-15);
        let abar = closed_form_abar(&a_hat, &prop, 4).unwrap();
        assert!((abar[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_label_set_matrix_loss_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, true);
        let empty = LabelSet::new(inst.labels.num_nodes(), inst.labels.num_classes(), &[]).unwrap();
        let fwd = inst.predictor.forward(&inst.features.view(), Mode::Eval).unwrap();
        let y_soft = label_propagate(&inst.a_hat, &empty, &inst.prop).unwrap();
        let abar = closed_form_abar(&inst.a_hat, &inst.prop, 64).unwrap();
        assert_eq!(pta_loss(&y_soft.view(), &fwd.probs.view(), 1.0).unwrap().0, 0.0);
        assert_eq!(pairwise_pt_loss(&abar, &fwd.probs, &empty, 1.0), 0.0);
    }

    #[test]
    fn k1_unroll_is_exact_up_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let adj = random_connected_graph(15, &mut rng);
        let a_hat = normalize_adjacency(&adj, NormalizationStrategy::SymSelfloop).unwrap();
        let cfg = PropagationConfig::new(0.1, 1).unwrap();
        let it = ppr_propagate(&a_hat, &Array2::<f64>::eye(15).view(), &cfg).unwrap();
        let cf = closed_form_abar(&a_hat, &cfg, 64).unwrap();
        assert!(inf_norm(&(&it - &cf)) < 1e-15);
        let one = PropagationConfig::new(1.0, 6).unwrap();
        let it = ppr_propagate(&a_hat, &Array2::<f64>::eye(15).view(), &one).unwrap();
        assert_eq!(it, Array2::<f64>::eye(15));
        assert_eq!(closed_form_abar(&a_hat, &one, 64).unwrap(), Array2::<f64>::eye(15));
    }
}
