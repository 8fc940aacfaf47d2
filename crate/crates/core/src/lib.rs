//! Sampling-based training criteria for neural language models.
//!
//! The crate implements full-softmax cross entropy, binary cross entropy,
//! noise contrastive estimation, importance sampling and three
//! self-normalized importance sampling variants (`Mode1`, `Mode2`, `Mode3`)
//! together with everything needed to check them on desk-scale problems
//! whose true posteriors are known:
//!
//! * [`corpus`]: vocabularies, synthetic ground-truth tasks, corpora and batches.
//! * [`sampling`]: noise distributions, samplers and expected counts.
//! * [`criteria`]: loss values and analytic score gradients.
//! * [`model`]: a log-bilinear language model with hand-written gradients.
//! * [`train`] and [`eval`]: the training loop and the evaluation battery.
//! * [`config`] and [`metrics`]: flat-file experiment configs and metric CSVs.

// Validity checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod criteria;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod train;

pub use config::TrainConfig;
pub use corpus::{Batch, Corpus, SyntheticTask, Vocabulary};
pub use criteria::{Criterion, CriterionKind, Link, LossResult};
pub use error::{Error, Result};
pub use metrics::MetricsRow;
pub use model::{ModelParams, ParamGrads};
pub use sampling::{NoiseDistribution, SampleSet};
