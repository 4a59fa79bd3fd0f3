//! Deep-supervision objective, SGD with momentum and weight decay, the epoch
//! loop, and finite-difference gradient verification.

mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use loss::{image_loss, image_loss_with_grad, pixel_bce, GroundTruth};
pub use optim::{sgd_step, OptimizerConfig, OptimizerState};
pub use trainer::{train, StepRecord, TrainOptions, TrainingLog};
