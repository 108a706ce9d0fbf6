//! Text-classification pipeline for short social-media posts: normalization,
//! corpus handling, a bidirectional transformer encoder with swappable
//! classification heads, training, and evaluation reporting.

pub mod archive;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod heads;
pub mod error;
pub mod eval_report;
pub mod tensor;
pub mod text_prep;
pub mod trainer;

pub use error::{PipelineError, Result};
