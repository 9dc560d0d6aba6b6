//! Initialization, optimization and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod init;
pub mod loss;
pub mod run;
pub mod schedule;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, vocab_fingerprint, Checkpoint};
pub use init::init_parameters;
pub use loss::{multilingual_loss, token_accuracy};
pub use run::{
    evaluate_dev, train, train_step, DevReport, DevSentence, StepStats, StopReason, TrainConfig,
    TrainOutcome, BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE,
};
pub use schedule::lr_at;
