//! Propagation-then-training (PT) node classifiers.
//!
//! The crate covers the full pipeline for semi-supervised node
//! classification on an undirected graph:
//!
//! * [`sparse`] and [`graph`]: CSR adjacency, normalization, dataset bundles
//!   and train / early-stop / test splits.
//! * [`propagation`]: personalized-PageRank propagation of node signals and
//!   label propagation producing soft labels.
//! * [`predictor`]: a two-layer MLP with analytic gradients and Adam.
//! * [`training`]: the PTS / PTD / PTA trainers and the decoupled-GCN
//!   baseline together with its ablations.
//! * [`equivalence`]: numerical checks of the identities tying the decoupled
//!   GCN to weighted pseudo-label training.
//! * [`noise`]: structure / label corruption and a stochastic block model.
//! * [`stats`] and [`experiment`]: multi-seed orchestration, bootstrap
//!   intervals and paired t-tests.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod equivalence;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod noise;
pub mod predictor;
pub mod propagation;
pub mod sparse;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Dataset, LabelSet, NormalizationStrategy, Split};
pub use predictor::{MlpConfig, PredictorState};
pub use propagation::PropagationConfig;
pub use sparse::SparseMatrix;
pub use training::{TrainConfig, TrainMode, TrainedModel};

/// Dense row-major matrix used for features, predictions and soft labels.
pub type Matrix = ndarray::Array2<f64>;
