//! Losses, sampling and the two-phase training loop.

mod engine;
mod losses;
mod sampler;

pub use engine::{
    adversarial_epoch, ce_pretrain_epoch, run_loss_ablation, validate, AblationRun, AdversarialLosses, Batch,
    EncodedSample, EpochRecord, LossMode, Phase, RunOutputs, TrainConfig, TrainState, Trainer, TrainingData,
    ValidationRecord,
};

pub use losses::{relativistic_loss_graph, rsgan_losses, seq_mean, seq_var, seqloss, seqloss_graph};
pub use sampler::{
    argmax_one_hot, gumbel_noise, gumbel_softmax_graph, gumbel_softmax_st, gumbel_softmax_with_noise,
    temperature_schedule, TemperatureConvention,
};
