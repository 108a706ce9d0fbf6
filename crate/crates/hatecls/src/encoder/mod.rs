//! Bidirectional transformer encoder: WordPiece tokenization plus the
//! forward/backward passes that expose per-layer states to the heads.

pub mod transformer;
pub mod wordpiece;

pub use transformer::{
    expected_param_count, forward_batch, load_pretrained, EncoderCache, EncoderConfig,
    EncoderStates, Precision, Transformer,
};
pub use wordpiece::{tokenize, TokenSequence, Vocabulary};
