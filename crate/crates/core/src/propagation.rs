//! Personalized-PageRank propagation.
//!
//! Every propagation in the crate runs the recurrence
//!
//! ```text
//! H(0) = H0
//! H(k) = (1 - alpha) * Â * H(k-1) + alpha * H0
//! ```
//!
//! for `K` steps. Unrolled, `H(K) = Ā H0` with
//! `Ā = (1-alpha)^K Â^K + alpha * sum_{k<K} (1-alpha)^k Â^k`. The dense `Ā`
//! is only ever formed by [`closed_form_abar`] at verification scale.
//!
//! Some write-ups of label propagation drop the `alpha` on the restart term.
//! That variant does not keep the coefficients summing to one, so the
//! `alpha`-weighted form is used everywhere, including label propagation.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabelSet;
use crate::sparse::SparseMatrix;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Teleport (restart) probability in `(0, 1]`.
    pub alpha: f64,
    /// Number of propagation steps.
    pub k: usize,
    /// Reset labelled rows to their one-hot value after every step. Only
    /// consulted by [`label_propagate`].
    pub clamp_labeled: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k: 10,
            clamp_labeled: true,
        }
    }
}

impl PropagationConfig {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        let cfg = Self {
            alpha,
            k,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_labeled = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Weights `beta_0..=beta_K` of `Ā = sum_k beta_k Â^k`.
    pub fn coefficients(&self) -> Vec<f64> {
        let keep = 1.0 - self.alpha;
        let mut out: Vec<f64> = (0..self.k).map(|k| self.alpha * keep.powi(k as i32)).collect();
        out.push(keep.powi(self.k as i32));
        out
    }
}

fn check_operator(a_hat: &SparseMatrix, rows: usize) -> Result<()> {
    if !a_hat.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "propagation operator is {}x{}",
            a_hat.n_rows(),
            a_hat.n_cols()
        )));
    }
    if a_hat.n_rows() != rows {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} nodes, signal has {rows} rows",
            a_hat.n_rows()
        )));
    }
    Ok(())
}

/// Runs the recurrence with `H(0) = h0` and returns `H(K)`. Labelled rows
/// are never clamped here.
pub fn ppr_propagate(a_hat: &SparseMatrix, h0: &ArrayView2<'_, f64>, cfg: &PropagationConfig) -> Result<Matrix> {
    cfg.validate()?;
    check_operator(a_hat, h0.nrows())?;
    let mut h = h0.to_owned();
    let mut next = Array2::zeros(h0.dim());
    let keep = 1.0 - cfg.alpha;
    for _ in 0..cfg.k {
        a_hat.matmul_into(&h.view(), &mut next)?;
        ndarray::Zip::from(&mut next)
            .and(h0)
            .for_each(|n, &x| *n = keep * *n + cfg.alpha * x);
        std::mem::swap(&mut h, &mut next);
    }
    Ok(h)
}

/// Gradient of a loss through [`ppr_propagate`]: given `dL/dH(K)`, returns
/// `dL/dH0 = Āᵀ · dL/dH(K)`, computed by walking the recurrence backwards.
/// `a_hat_t` must be the transpose of the forward operator (for the
/// symmetric normalizations it is the operator itself).
pub fn ppr_adjoint(a_hat_t: &SparseMatrix, grad_out: &ArrayView2<'_, f64>, cfg: &PropagationConfig) -> Result<Matrix> {
    cfg.validate()?;
    check_operator(a_hat_t, grad_out.nrows())?;
    let keep = 1.0 - cfg.alpha;
    let mut g = grad_out.to_owned();
    let mut restart = Array2::zeros(grad_out.dim());
    let mut next = Array2::zeros(grad_out.dim());
    for _ in 0..cfg.k {
        restart.scaled_add(cfg.alpha, &g);
        a_hat_t.matmul_into(&g.view(), &mut next)?;
        next.mapv_inplace(|v| keep * v);
        std::mem::swap(&mut g, &mut next);
    }
    g += &restart;
    Ok(g)
}

/// Diffuses the one-hot training labels into the soft-label matrix
/// `Y_soft`.
pub fn label_propagate(a_hat: &SparseMatrix, labels: &LabelSet, cfg: &PropagationConfig) -> Result<Matrix> {
    cfg.validate()?;
    check_operator(a_hat, labels.num_nodes())?;
    let y0 = labels.onehot();
    let mut y = y0.clone();
    let mut next = Array2::zeros(y0.dim());
    let keep = 1.0 - cfg.alpha;
    for _ in 0..cfg.k {
        a_hat.matmul_into(&y.view(), &mut next)?;
        ndarray::Zip::from(&mut next)
            .and(y0)
            .for_each(|n, &x| *n = keep * *n + cfg.alpha * x);
        if cfg.clamp_labeled {
            for &i in labels.labeled_nodes() {
                next.row_mut(i).assign(&y0.row(i));
            }
        }
        std::mem::swap(&mut y, &mut next);
    }
    Ok(y)
}

/// Dense `Ā` by explicit matrix powers. Refuses graphs with more than
/// `max_n` nodes.
pub fn closed_form_abar(a_hat: &SparseMatrix, cfg: &PropagationConfig, max_n: usize) -> Result<Matrix> {
    cfg.validate()?;
    let n = a_hat.n_rows();
    check_operator(a_hat, n)?;
    if n > max_n {
        return Err(Error::TooLargeForDense { n, max_n });
    }
    let dense = a_hat.to_dense();
    let mut power = Array2::<f64>::eye(n);
    let mut out = Array2::<f64>::zeros((n, n));
    let coeffs = cfg.coefficients();
    for (k, &beta) in coeffs.iter().enumerate() {
        if k > 0 {
            power = dense.dot(&power);
        }
        out.scaled_add(beta, &power);
    }
    Ok(out)
}
