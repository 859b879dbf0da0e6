//! Loss, optimiser, schedule and the training loop.

pub mod ablation;
pub mod loss;
pub mod optim;
pub mod predict;
pub mod trainer;

pub use loss::{dice_ce_loss, LossParts, LossWeights, DICE_SMOOTH};
pub use optim::{adamw_step, cosine_lr, AdamHyper, AdamState, CosineSchedule};
pub use predict::{argmax_labels, foreground_dsc, predict_sample, predict_volume, split_samples, volume_samples, Sample};
pub use trainer::{EpochLog, TrainConfig, TrainOutcome, TrainProgress, TrainState, Trainer, BEST, LAST, LOG_FILE};
pub use ablation::{mean_of, run_ablation, train_and_evaluate, AblationReport, AblationRow, AblationRun, AblationSummary};
