//! Benchmark fixtures shared by the criterion targets.

use comvt::data::synth_generate;
use comvt::harness::{input_tokens, Dataset, RunConfig};
use comvt::heads::{build_model, Model, Variant};
use comvt::text::{build_vocab, TokenSequence, Vocab};
use comvt::SeededRng;

pub struct Fixture {
    pub config: RunConfig,
    pub model: Model,
    pub vocab: Vocab,
    pub data: Dataset,
    pub tokens: Vec<TokenSequence>,
}

/// A small synthetic setup with `depth` co-attention blocks.
pub fn fixture(variant: Variant, depth: usize, examples: usize) -> Fixture {
    let mut config = RunConfig::default();
    config.model.variant = variant;
    config.model.dim = 32;
    config.model.ffn_dim = 64;
    config.model.text_layers = 1;
    config.model.max_text_len = 16;
    config.model.max_frames = 8;
    config.model.slots = 2;
    config.model.scene_dim = 16;
    config.model.object_dim = 16;
    config.model.fusion_depth = depth;
    config.synthetic.frames_per_clip = 8;
    let data = synth_generate(&config.synthetic, examples, &SeededRng::new(0)).expect("valid spec");
    let data = Dataset::from_synthetic(&data);
    let vocab = build_vocab(&data.corpus(), 1).expect("non-empty corpus");
    let model = build_model(&config.model, vocab.len(), 0).expect("valid config");
    let tokens = input_tokens(&model, &vocab, &data).expect("tokenizes");
    Fixture {
        config,
        model,
        vocab,
        data,
        tokens,
    }
}
