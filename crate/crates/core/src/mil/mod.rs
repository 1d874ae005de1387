//! Multiple-instance learning: frame scorer, max-pooling, loss, gradients and training.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{
    backward, bag_loss, clip_loss, forward_frame_scores, hidden_weights, max_pool_clip,
    output_weights, FrameScorer, Gradient, EPS,
};
pub use train::{
    predict, predict_parallel, train, train_with_selection, EpochRecord, NesterovSgd,
    PlateauScheduler, TrainConfig, TrainHistory,
};
