use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::text::{encode_candidates, TextEncoderParams, Vocab};

/// Deduplicated answers, in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerPool {
    answers: Vec<String>,
}

impl AnswerPool {
    pub fn new<S: AsRef<str>>(answers: &[S]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let answers: Vec<String> = answers
            .iter()
            .map(|a| a.as_ref())
            .filter(|a| seen.insert(*a))
            .map(str::to_string)
            .collect();
        if answers.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(Self { answers })
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

/// Single text input for QA: the question appended to the transcript, or
/// the question alone when there is no speech.
pub fn qa_input_text(transcript: Option<&str>, question: &str) -> String {
    match transcript.map(str::trim) {
        Some(t) if !t.is_empty() => format!("{t} {question}"),
        _ => question.to_string(),
    }
}

/// Indices sorted by descending score; ties keep the lower index first.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedAnswer {
    pub index: usize,
    pub answer: String,
    pub score: f64,
}

/// Scores every pool answer by its dot product with `pooled` and returns
/// them best first.
pub fn qa_rank(
    tape: &mut Tape<'_>,
    vocab: &Vocab,
    pooled: Var,
    pool: &AnswerPool,
    cand_params: &TextEncoderParams,
) -> Result<Vec<RankedAnswer>> {
    let emb = encode_candidates(tape, vocab, pool.answers(), cand_params)?;
    let logits = super::nup_logits(tape, pooled, emb)?;
    let scores = tape.value(logits).data().to_vec();
    Ok(rank_order(&scores)
        .into_iter()
        .map(|i| RankedAnswer {
            index: i,
            answer: pool.answers[i].clone(),
            score: scores[i],
        })
        .collect())
}
