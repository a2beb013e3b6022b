use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{TokenSequence, Vocab};
use crate::visual::ClipFeatures;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedSentence {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl TimedSentence {
    pub fn new(text: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            text: text.into(),
            start_s,
            end_s,
        }
    }
}

/// One line of a transcript file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    pub video_id: String,
    pub sentences: Vec<TimedSentence>,
}

impl Transcript {
    /// Positive durations, time order, no overlap.
    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.sentences.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite() && s.end_s > s.start_s) {
                return Err(Error::Contract(format!(
                    "video `{}` sentence {k}: end {} not after start {}",
                    self.video_id, s.end_s, s.start_s
                )));
            }
            if k > 0 && s.start_s < self.sentences[k - 1].end_s {
                return Err(Error::Contract(format!(
                    "video `{}` sentence {k} starts before sentence {} ends",
                    self.video_id,
                    k - 1
                )));
            }
        }
        Ok(())
    }
}

/// A future-utterance example: whole context sentences and the sentence
/// that follows them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FupExample {
    pub clip_id: String,
    pub context: Vec<TimedSentence>,
    pub future: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Clip-features file, relative to the examples file when relative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

impl FupExample {
    pub fn context_text(&self) -> String {
        let parts: Vec<&str> = self.context.iter().map(|s| s.text.as_str()).collect();
        parts.join(" ")
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentOptions {
    /// The context span must strictly exceed this many seconds.
    pub min_duration: f64,
    /// Keep examples whose whole prefix is still too short.
    pub keep_short_prefix: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            min_duration: 5.0,
            keep_short_prefix: false,
        }
    }
}

/// Start index of the context ending at sentence `last`, grown backwards
/// until the span exceeds `min_duration`. The flag reports success.
fn expand_back(sentences: &[TimedSentence], last: usize, end: f64, min_duration: f64) -> (usize, bool) {
    let mut first = last;
    loop {
        if end - sentences[first].start_s > min_duration {
            return (first, true);
        }
        if first == 0 {
            return (0, false);
        }
        first -= 1;
    }
}

/// One example per sentence `k ≥ 1` (0-based) as the future utterance,
/// with context grown backwards from sentence `k-1`. Clip ids are
/// `{video_id}_{k}`.
pub fn segment_clips(transcript: &Transcript, options: SegmentOptions) -> Vec<FupExample> {
    let s = &transcript.sentences;
    let mut out = Vec::new();
    for k in 1..s.len() {
        let end = s[k - 1].end_s;
        let (first, long_enough) = expand_back(s, k - 1, end, options.min_duration);
        if !long_enough && !options.keep_short_prefix {
            continue;
        }
        out.push(FupExample {
            clip_id: format!("{}_{k}", transcript.video_id),
            context: s[first..k].to_vec(),
            future: s[k].text.clone(),
            start_s: s[first].start_s,
            end_s: end,
            features: None,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepAnnotation {
    pub class: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NspExample {
    pub class: usize,
    pub context: Vec<TimedSentence>,
    pub start_s: f64,
    pub end_s: f64,
}

/// One example per step with at least one whole sentence ending by the
/// step's start; the context grows backwards from the last such sentence
/// by the segmentation rule, and is kept even if it stays short.
pub fn make_nsp_examples(
    transcript: &Transcript,
    steps: &[StepAnnotation],
    options: SegmentOptions,
) -> Vec<NspExample> {
    let s = &transcript.sentences;
    steps
        .iter()
        .filter_map(|step| {
            let n = s.iter().take_while(|x| x.end_s <= step.start_s).count();
            if n == 0 {
                return None;
            }
            let end = s[n - 1].end_s;
            let (first, _) = expand_back(s, n - 1, end, options.min_duration);
            Some(NspExample {
                class: step.class,
                context: s[first..n].to_vec(),
                start_s: s[first].start_s,
                end_s: end,
            })
        })
        .collect()
}

/// Frames body ids to at most `max_tokens` (specials included) and keeps
/// the last `max_frames` frames; both drop from the front.
pub fn truncate_inputs(
    body: &[usize],
    clip: Option<&mut ClipFeatures>,
    max_tokens: usize,
    max_frames: usize,
) -> Result<TokenSequence> {
    if max_frames == 0 {
        return Err(Error::Contract("max_frames must be at least 1".into()));
    }
    if let Some(c) = clip {
        c.truncate_front(max_frames);
    }
    TokenSequence::from_body(body, max_tokens)
}

/// Tokenised context of an example.
pub fn context_tokens(example: &FupExample, vocab: &Vocab, max_tokens: usize) -> Result<TokenSequence> {
    crate::text::tokenize(&example.context_text(), vocab, max_tokens)
}
