//! The trainable keystroke decoder.

pub mod checkpoint;
pub mod model;
pub mod tape;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{Batch, DecoderConfig, DecoderModel, Sentence};
pub use train::{fit, TrainConfig, TrainLog};
