//! Objective, optimizer, learning-rate control and the training loop.

mod infer;
mod loss;
mod optim;
mod trainer;

pub use infer::{generate_review, predict_rating_value, GenerateOptions};
pub use loss::{
    batch_loss_rating, generation_targets, loss_context, loss_generation, loss_rating, total_loss,
    LossComponents, LossWeights,
};
pub use optim::{lr_schedule_step, sgd_step, DecayRule, LrScheduleConfig, LrState, Signal};
pub use trainer::{
    batch_gradients, evaluate_loss, record_layout, record_losses, train, EpochLog, RecordLosses,
    TrainConfig, TrainExample, TrainOutcome,
};
