use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{write_jsonl, CandidateRecord};
use super::sample::sample_candidates;
use super::segment::{FupExample, TimedSentence};
use crate::error::{Error, Result};
use crate::heads::CandidateSet;
use crate::numerics::SeededRng;
use crate::visual::{BoundingBox, ClipFeatures, ObjectFeature, SceneFeature};

const TOPIC_WORDS: [&str; 20] = [
    "knife", "whisk", "pan", "oven", "bowl", "spoon", "drill", "saw", "brush", "glue", "hammer", "ladder", "sponge",
    "kettle", "grater", "wrench", "needle", "bucket", "scissors", "blender",
];

const FILLER: [&str; 24] = [
    "so", "now", "we", "are", "going", "to", "take", "this", "and", "put", "it", "here", "then", "just", "make",
    "sure", "that", "looks", "good", "okay", "right", "let", "me", "show",
];

/// Parameters of the vision-dependent synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// `K`.
    pub topics: usize,
    /// `M`.
    pub candidates: usize,
    /// Noise scale `σ`.
    pub sigma: f64,
    pub frames_per_clip: usize,
    /// `L`.
    pub slots: usize,
    pub scene_dim: usize,
    pub object_dim: usize,
    /// Whether the transcript names the topic.
    pub leak: bool,
    pub context_sentences: usize,
    /// Seed of the topic prototypes, shared by every split of a benchmark.
    pub prototype_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            topics: 10,
            candidates: 10,
            sigma: 0.1,
            frames_per_clip: 4,
            slots: 2,
            scene_dim: 16,
            object_dim: 16,
            leak: false,
            context_sentences: 2,
            prototype_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::Config("synthetic benchmark needs at least 2 topics".into()));
        }
        if self.candidates == 0 || self.candidates > self.topics {
            return Err(Error::Config(format!(
                "candidate count {} outside 1..={}",
                self.candidates, self.topics
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma {} must be non-negative", self.sigma)));
        }
        let sizes = [
            ("frames_per_clip", self.frames_per_clip),
            ("slots", self.slots),
            ("scene_dim", self.scene_dim),
            ("object_dim", self.object_dim),
            ("context_sentences", self.context_sentences),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        Ok(())
    }
}

pub fn topic_word(topic: usize) -> String {
    TOPIC_WORDS
        .get(topic)
        .map_or_else(|| format!("tool{topic}"), |w| w.to_string())
}

/// The true future utterance of every example on `topic`.
pub fn topic_utterance(topic: usize) -> String {
    format!("next we use the {}", topic_word(topic))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticExample {
    pub example: FupExample,
    pub clip: ClipFeatures,
    pub candidates: CandidateSet,
    pub topic: usize,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub examples: Vec<SyntheticExample>,
}

/// `K` directions of norm `√dim`, mutually orthogonal when `K ≤ dim`.
pub fn topic_prototypes(topics: usize, dim: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(topics);
    for _ in 0..topics {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if out.len() < dim {
            for u in &out {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / dim as f64;
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= p * b;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = (dim as f64).sqrt() / norm;
        out.push(v.into_iter().map(|a| a * scale).collect());
    }
    out
}

fn filler_sentence(rng: &mut SeededRng) -> String {
    let n = 4 + rng.below(4);
    let words: Vec<&str> = (0..n).map(|_| FILLER[rng.below(FILLER.len())]).collect();
    words.join(" ")
}

fn noisy(mean: &[f64], sigma: f64, rng: &mut SeededRng) -> Vec<f64> {
    mean.iter().map(|m| m + sigma * rng.normal()).collect()
}

/// Draws `n` examples. Topics, transcripts, features and candidates come
/// from separate streams of `rng`, so transcripts never depend on topics
/// unless `leak` is set.
pub fn synth_generate(spec: &SyntheticSpec, n: usize, rng: &SeededRng) -> Result<SyntheticDataset> {
    spec.validate()?;
    let proto = SeededRng::new(spec.prototype_seed);
    let scene_mu = topic_prototypes(spec.topics, spec.scene_dim, &mut proto.fork(0));
    let object_mu = topic_prototypes(spec.topics, spec.object_dim, &mut proto.fork(1));
    let utterances: Vec<String> = (0..spec.topics).map(topic_utterance).collect();
    let mut topic_rng = rng.fork(10);
    let mut text_rng = rng.fork(11);
    let mut feat_rng = rng.fork(12);
    let mut cand_rng = rng.fork(13);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let topic = topic_rng.below(spec.topics);
        let mut context: Vec<TimedSentence> = (0..spec.context_sentences)
            .map(|k| TimedSentence::new(filler_sentence(&mut text_rng), 3.0 * k as f64, 3.0 * (k + 1) as f64))
            .collect();
        if spec.leak {
            let k = context.len() as f64;
            context.push(TimedSentence::new(
                format!("we will need the {}", topic_word(topic)),
                3.0 * k,
                3.0 * (k + 1.0),
            ));
        }
        let k = context.len();
        let clip_id = format!("synth{i}_{k}");
        let end_s = context[k - 1].end_s;
        let example = FupExample {
            clip_id: clip_id.clone(),
            context,
            future: utterances[topic].clone(),
            start_s: 0.0,
            end_s,
            features: None,
        };
        let mut scenes = Vec::with_capacity(spec.frames_per_clip);
        let mut objects = Vec::with_capacity(spec.frames_per_clip);
        for f in 1..=spec.frames_per_clip {
            scenes.push(SceneFeature {
                frame: f,
                vector: noisy(&scene_mu[topic], spec.sigma, &mut feat_rng),
            });
            let row = (1..=spec.slots)
                .map(|slot| {
                    let x0 = feat_rng.uniform() * 0.5;
                    let y0 = feat_rng.uniform() * 0.5;
                    let bbox = BoundingBox::new(x0, y0, x0 + 0.5, y0 + 0.5)?;
                    Ok(ObjectFeature {
                        frame: f,
                        slot,
                        vector: noisy(&object_mu[topic], spec.sigma, &mut feat_rng),
                        bbox,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            objects.push(row);
        }
        let clip = ClipFeatures {
            clip_id,
            scenes,
            objects,
        };
        let candidates = sample_candidates(&utterances[topic], &utterances, spec.candidates, &mut cand_rng)?;
        examples.push(SyntheticExample {
            example,
            clip,
            candidates,
            topic,
        });
    }
    Ok(SyntheticDataset {
        spec: spec.clone(),
        examples,
    })
}

/// Files written by [`SyntheticDataset::write`].
#[derive(Clone, Debug)]
pub struct SyntheticFiles {
    pub examples: PathBuf,
    pub candidates: PathBuf,
}

impl SyntheticDataset {
    /// Writes `{stem}_examples.jsonl`, `{stem}_candidates.jsonl` and one
    /// features file per clip under `features/`, all inside `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<SyntheticFiles> {
        let feat_dir = dir.join("features");
        std::fs::create_dir_all(&feat_dir)?;
        let mut examples = Vec::with_capacity(self.examples.len());
        let mut candidates = Vec::with_capacity(self.examples.len());
        for ex in &self.examples {
            let rel = PathBuf::from("features").join(format!("{}.jsonl", ex.clip.clip_id));
            ex.clip.write(&dir.join(&rel))?;
            let mut e = ex.example.clone();
            e.features = Some(rel);
            examples.push(e);
            candidates.push(CandidateRecord {
                clip_id: ex.example.clip_id.clone(),
                candidates: ex.candidates.utterances.clone(),
                true_index: ex.candidates.true_index,
            });
        }
        let files = SyntheticFiles {
            examples: dir.join(format!("{stem}_examples.jsonl")),
            candidates: dir.join(format!("{stem}_candidates.jsonl")),
        };
        write_jsonl(&files.examples, &examples)?;
        write_jsonl(&files.candidates, &candidates)?;
        Ok(files)
    }
}
