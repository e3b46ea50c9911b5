//! Loss, optimizer, learning-rate schedule, early stopping, the training
//! loop and grid search.

mod adam;
mod early_stop;
mod fit;
mod grid;
mod loss;
mod schedule;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use early_stop::{EarlyStopping, DEFAULT_PATIENCE};
pub use fit::{describe, evaluate, fit, training_weights, EpochRecord, Evaluation, TrainOptions, TrainReport};
pub use grid::{grid_search, rank_best, run_grid_point, select_best, GridOutcome, GridPoint, GridResult, GridSpec};
pub use loss::{class_weights, weighted_multitask_loss, LossAccumulator, TaskWeights, PROB_CEIL, PROB_FLOOR};
pub use schedule::LrSchedule;
