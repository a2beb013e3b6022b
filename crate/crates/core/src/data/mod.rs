//! Clip segmentation, candidate sampling, next-step examples, input
//! truncation, the synthetic benchmark and the JSON Lines file formats.

mod io;
mod sample;
mod segment;
mod synth;

pub use io::{read_jsonl, resolve_relative, write_jsonl, CandidateRecord};
pub use sample::{sample_candidates, subsample_eval};
pub use segment::{
    context_tokens, make_nsp_examples, segment_clips, truncate_inputs, FupExample, NspExample, SegmentOptions,
    StepAnnotation, TimedSentence, Transcript,
};
pub use synth::{
    synth_generate, topic_prototypes, topic_utterance, topic_word, SyntheticDataset, SyntheticExample, SyntheticFiles,
    SyntheticSpec,
};
