//! Keystroke decoding from synthetic M/EEG recordings.
//!
//! The crate covers the whole offline pipeline: a forward model that
//! synthesises keystroke-evoked recordings, the preprocessing chain,
//! leakage-resistant sentence splits, a convolutional + transformer
//! keystroke classifier trained with hand-written reverse-mode gradients, a
//! backoff character n-gram model, beam-search fusion, and the evaluation
//! and analysis routines. The `keydecode` binary chains the stages through
//! files; `examples/` shows each capability on its own.

pub mod charlm;
pub mod baselines;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod keyboard;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod signal;
pub mod splitter;
pub mod textalign;

pub use error::{Error, Result};
pub use keyboard::{classify_key, Hand, KeyClass, KeyboardLayout, N_CLASSES};
