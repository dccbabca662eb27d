//! Full-batch training: Adam with decoupled weight decay, early stopping on
//! validation accuracy, classification metrics, and the whole-model gradient
//! check.

mod adam;
mod early_stop;
mod gradcheck;
mod metrics;
mod train;

pub use adam::{adam_step, AdamState, OptimHyper};
pub use early_stop::{EarlyStopping, Verdict};
pub use gradcheck::{grad_check_model, gradcheck_setup, GRADCHECK_STEP};
pub use metrics::{compute_metrics, predict, ClassMetrics, Metrics};
pub use train::{evaluate, targets_for, train, train_model, train_with_relations, EpochRecord, TrainOutcome, TrainRun};
