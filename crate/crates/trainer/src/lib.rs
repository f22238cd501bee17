//! Online training of the reduced two-layer model and linear probing of
//! first-layer representations.
//!
//! The model keeps full softmax attention in both layers; gradients of its six
//! scalar parameters are computed by hand-written reverse mode. Training can
//! run stage I (first-layer slope only), stage II (second layer only), both
//! jointly, or the two stages in sequence.
//!
//! ```
//! use indhead_trainer::{sgd_train, Stage, TrainConfig};
//!
//! let cfg = TrainConfig { steps: 200, batch: 250, len: 12, stage: Stage::II, ..TrainConfig::default() };
//! let run = sgd_train(&cfg).unwrap();
//! let (first, last) = (run.batch_losses[0], *run.batch_losses.last().unwrap());
//! assert!(last.0 < first.0);
//! ```

mod config;
mod error;
mod model;
mod probe;
mod train;

pub use config::{Optimizer, Stage, SwitchRule, TrainConfig};
pub use error::TrainError;
pub use model::{batch_objective, first_layer_outputs, BatchEval, MixedTarget, ReducedParams, N_PARAMS, PARAM_NAMES};
pub use probe::{probe_first_layer, random_first_layer, ProbeReport, PROBE_RIDGE};
pub use train::{initial_params, sample_batch, sgd_train, TrainRecord, TrainTrajectory, TRAIN_COLUMNS};

pub type Result<T> = std::result::Result<T, TrainError>;
