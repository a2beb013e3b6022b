use std::path::Path;

use super::config::RunConfig;
use super::dataset::Dataset;
use crate::data::{read_jsonl, sample_candidates, segment_clips, synth_generate, CandidateRecord, FupExample, SyntheticDataset, Transcript};
use crate::error::Result;
use crate::numerics::SeededRng;
use crate::text::Vocab;

/// Training and evaluation splits of the synthetic benchmark. Both share
/// the topic prototypes; their examples come from disjoint streams.
pub fn synthetic_splits(config: &RunConfig) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let root = SeededRng::new(config.seed);
    let train = synth_generate(&config.synthetic, config.synth_train, &root.fork(1))?;
    let eval = synth_generate(&config.synthetic, config.synth_eval, &root.fork(2))?;
    Ok((train, eval))
}

/// Segments every transcript in `path` and samples one candidate pool of
/// `config.candidates` utterances per example. Negatives come from the
/// future utterances of all examples.
pub fn segment_file(config: &RunConfig, path: &Path) -> Result<(Vec<FupExample>, Vec<CandidateRecord>)> {
    let transcripts: Vec<Transcript> = read_jsonl(path)?;
    let mut examples = Vec::new();
    for t in &transcripts {
        t.validate()?;
        examples.extend(segment_clips(t, config.segment));
    }
    let pool: Vec<&str> = examples.iter().map(|e| e.future.as_str()).collect();
    let mut rng = SeededRng::new(config.seed).fork(3);
    let mut records = Vec::with_capacity(examples.len());
    for ex in &examples {
        let set = sample_candidates(&ex.future, &pool, config.candidates, &mut rng)?;
        records.push(CandidateRecord {
            clip_id: ex.clip_id.clone(),
            candidates: set.utterances,
            true_index: set.true_index,
        });
    }
    Ok((examples, records))
}

/// Training and evaluation data named by the config, or the synthetic
/// splits when no training examples are configured.
pub fn load_run_data(config: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    config.check_paths()?;
    let paths = &config.data;
    let Some(train) = &paths.train_examples else {
        let (train, eval) = synthetic_splits(config)?;
        return Ok((Dataset::from_synthetic(&train), Some(Dataset::from_synthetic(&eval))));
    };
    let train = Dataset::load(train, None, &config.model)?;
    let eval = match &paths.eval_examples {
        Some(e) => Some(Dataset::load(e, paths.eval_candidates.as_deref(), &config.model)?),
        None => None,
    };
    Ok((train, eval))
}

/// Evaluation data named by the config, or the synthetic evaluation split.
pub fn load_eval_data(config: &RunConfig) -> Result<Dataset> {
    config.check_paths()?;
    match &config.data.eval_examples {
        Some(e) => Dataset::load(e, config.data.eval_candidates.as_deref(), &config.model),
        None => Ok(Dataset::from_synthetic(&synthetic_splits(config)?.1)),
    }
}

/// The vocabulary file named by the config, if any.
pub fn configured_vocab(config: &RunConfig) -> Result<Option<Vocab>> {
    config.data.vocab.as_deref().map(Vocab::read).transpose()
}
