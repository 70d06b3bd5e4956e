//! The node-wise predictor: a two-layer ReLU MLP whose output is already a
//! softmax distribution, trained with analytic gradients and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// Inverted-dropout rate applied to the input and hidden layer in
    /// training mode.
    pub dropout: f64,
    pub init_seed: u64,
}

impl MlpConfig {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden: 64,
            out_dim,
            dropout: 0.0,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidConfig("MLP dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// The four parameter tensors. Gradients and Adam moments reuse the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Matrix,
    pub b1: Array1<f64>,
    pub w2: Matrix,
    pub b2: Array1<f64>,
}

impl Params {
    pub fn zeros(cfg: &MlpConfig) -> Self {
        Self {
            w1: Array2::zeros((cfg.in_dim, cfg.hidden)),
            b1: Array1::zeros(cfg.hidden),
            w2: Array2::zeros((cfg.hidden, cfg.out_dim)),
            b2: Array1::zeros(cfg.out_dim),
        }
    }

    /// Tensors in a fixed order: `w1, b1, w2, b2`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    /// All entries concatenated in [`Params::tensors`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &Params) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }
}

pub type Gradients = Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Eval,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Row-wise softmax output `F`.
    pub probs: Matrix,
    /// `log F` via log-sum-exp.
    pub log_probs: Matrix,
    dropped_input: Option<Matrix>,
    pre_hidden: Matrix,
    hidden: Matrix,
    hidden_mask: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub config: MlpConfig,
    pub params: Params,
    pub adam_m: Params,
    pub adam_v: Params,
    pub step: u64,
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn((rows, cols), || if rng.random_bool(keep) { scale } else { 0.0 })
}

impl PredictorState {
    /// Glorot-uniform weights, zero biases, zero Adam moments.
    pub fn init(cfg: MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
        };
        let w1 = glorot(cfg.in_dim, cfg.hidden);
        let w2 = glorot(cfg.hidden, cfg.out_dim);
        let params = Params {
            w1,
            b1: Array1::zeros(cfg.hidden),
            w2,
            b2: Array1::zeros(cfg.out_dim),
        };
        Ok(Self {
            config: cfg,
            params,
            adam_m: Params::zeros(&cfg),
            adam_v: Params::zeros(&cfg),
            step: 0,
        })
    }

    /// `‖W1‖²`
    pub fn l2_penalty(&self) -> f64 {
        self.params.w1.iter().map(|v| v * v).sum()
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>, mode: Mode) -> Result<Forward> {
        if x.ncols() != self.config.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, predictor expects {}",
                x.ncols(),
                self.config.in_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictor input".into()));
        }
        let rate = self.config.dropout;
        let mut rng = match mode {
            Mode::Train { dropout_seed } if rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
            _ => None,
        };
        let p = &self.params;

        let dropped_input = rng.as_mut().map(|rng| {
            let mask = dropout_mask(x.nrows(), x.ncols(), rate, rng);
            &mask * x
        });
        let mut pre_hidden = match &dropped_input {
            Some(d) => d.dot(&p.w1),
            None => x.dot(&p.w1),
        };
        pre_hidden += &p.b1;
        let mut hidden = pre_hidden.mapv(|v| v.max(0.0));
        let hidden_mask = rng
            .as_mut()
            .map(|rng| dropout_mask(hidden.nrows(), hidden.ncols(), rate, rng));
        if let Some(mask) = &hidden_mask {
            hidden *= mask;
        }
        let mut logits = hidden.dot(&p.w2);
        logits += &p.b2;

        let mut log_probs = logits;
        for mut row in log_probs.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        if log_probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictor output".into()));
        }
        // floor keeps every probability strictly positive even when exp underflows
        let probs = log_probs.mapv(|v| v.exp().max(f64::MIN_POSITIVE));
        Ok(Forward {
            probs,
            log_probs,
            dropped_input,
            pre_hidden,
            hidden,
            hidden_mask,
        })
    }

    /// Gradients of `L = -Σ c_ik log F_ik` for nonnegative coefficients `c`.
    pub fn backward(&self, x: &ArrayView2<'_, f64>, fwd: &Forward, coeffs: &ArrayView2<'_, f64>) -> Result<Gradients> {
        if coeffs.dim() != fwd.probs.dim() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients are {:?}, predictions are {:?}",
                coeffs.dim(),
                fwd.probs.dim()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss coefficients".into()));
        }
        // d/dz of -Σ_k c_k log softmax(z)_k = (Σ_k c_k) softmax(z) - c
        let mass = coeffs.sum_axis(Axis(1));
        let mut dlogits = fwd.probs.clone();
        Zip::from(dlogits.rows_mut())
            .and(coeffs.rows())
            .and(&mass)
            .for_each(|mut d, c, &s| {
                Zip::from(&mut d).and(&c).for_each(|d, &c| *d = s * *d - c);
            });
        self.backward_logits(x, fwd, dlogits)
    }

    /// Gradients of an arbitrary loss given `dL/dF`, through the softmax Jacobian.
    pub fn backward_from_prob_grad(
        &self,
        x: &ArrayView2<'_, f64>,
        fwd: &Forward,
        grad_probs: &ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        if grad_probs.dim() != fwd.probs.dim() {
            return Err(Error::DimensionMismatch(format!(
                "probability gradient is {:?}, predictions are {:?}",
                grad_probs.dim(),
                fwd.probs.dim()
            )));
        }
        // dz_k = f_k (g_k - Σ_m f_m g_m)
        let mut dlogits = Array2::zeros(fwd.probs.dim());
        Zip::from(dlogits.rows_mut())
            .and(fwd.probs.rows())
            .and(grad_probs.rows())
            .for_each(|mut d, f, g| {
                let inner = f.dot(&g);
                Zip::from(&mut d)
                    .and(&f)
                    .and(&g)
                    .for_each(|d, &f, &g| *d = f * (g - inner));
            });
        self.backward_logits(x, fwd, dlogits)
    }

    fn backward_logits(&self, x: &ArrayView2<'_, f64>, fwd: &Forward, dlogits: Matrix) -> Result<Gradients> {
        if x.nrows() != dlogits.nrows() || x.ncols() != self.config.in_dim {
            return Err(Error::DimensionMismatch("input does not match the forward pass".into()));
        }
        let p = &self.params;
        let w2 = fwd.hidden.t().dot(&dlogits);
        let b2 = dlogits.sum_axis(Axis(0));
        let mut dhidden = dlogits.dot(&p.w2.t());
        if let Some(mask) = &fwd.hidden_mask {
            dhidden *= mask;
        }
        Zip::from(&mut dhidden).and(&fwd.pre_hidden).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let w1 = match &fwd.dropped_input {
            Some(d) => d.t().dot(&dhidden),
            None => x.t().dot(&dhidden),
        };
        let b1 = dhidden.sum_axis(Axis(0));
        Ok(Gradients { w1, b1, w2, b2 })
    }

    /// One Adam update. `weight_decay_w1` adds `λ‖W1‖²` to the objective,
    /// i.e. `2λ W1` to the W1 gradient.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, weight_decay_w1: f64) -> Result<()> {
        if !self.params.same_shape(grads) {
            return Err(Error::DimensionMismatch(
                "gradient shapes do not match parameters".into(),
            ));
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradients".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);

        let decay = 2.0 * weight_decay_w1;
        let params = self.params.tensors_mut();
        let ms = self.adam_m.tensors_mut();
        let vs = self.adam_v.tensors_mut();
        let gs = grads.tensors();
        for (idx, (((p, m), v), g)) in params.into_iter().zip(ms).zip(vs).zip(gs).enumerate() {
            let is_w1 = idx == 0;
            for i in 0..p.len() {
                let grad = if is_w1 { g[i] + decay * p[i] } else { g[i] };
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad * grad;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}
