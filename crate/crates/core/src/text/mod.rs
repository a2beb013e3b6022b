//! Tokenisation, the input and candidate text encoders, and masked
//! language-model corruption.

mod encoder;
mod mlm;
mod tokenize;
mod vocab;

pub use encoder::{encode_candidate, encode_candidates, encode_text, TextEncoderParams, TextEncoderShape};
pub use mlm::{apply_mlm_mask, MaskAction, MaskingConfig, MaskingPlan};
pub use tokenize::{tokenize, TokenSequence};
pub use vocab::{build_vocab, split_words, Vocab, CLS, MASK, PAD, SEP, SPECIALS, UNK};
