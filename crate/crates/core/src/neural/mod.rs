//! From-scratch multi-task meta-MLP: forward and analytic backward passes,
//! AdamW, and the early-stopping trainer.

pub mod adamw;
pub mod mlp;
pub mod train;

pub use adamw::{AdamWConfig, OptimizerState};
pub use mlp::{
    aspect_losses, cross_entropy, joint_loss, softmax, DropoutMask, ForwardCache, HeadLogits, MlpModel, MlpParams,
    Parameters, Targets,
};
pub use train::{
    batches_per_epoch, epoch_batches, retrain_fixed_epochs, train_early_stopped, train_with_monitor, EarlyStopOutcome,
    EarlyStopping, FixedRun, Progress, TrainConfig,
};

use crate::data::{LabelTriplet, NUM_ASPECTS};

/// Class-index targets for a label list.
pub fn targets_of(labels: &[LabelTriplet]) -> Vec<Targets> {
    labels
        .iter()
        .map(|l| std::array::from_fn::<usize, NUM_ASPECTS, _>(|a| l.labels[a].index()))
        .collect()
}
