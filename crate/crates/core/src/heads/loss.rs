use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mlm::batch_mlm_loss;
use super::model::Model;
use super::nup::nup_logits;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::text::{MaskingPlan, TokenSequence, Vocab};
use crate::visual::ClipFeatures;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub nup: f64,
    pub mlm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { nup: 1.0, mlm: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBundle {
    pub nup: f64,
    pub mlm: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// Rows whose true-candidate probability underflowed and was clamped.
    pub clamped: usize,
}

/// One training example after masking.
#[derive(Clone, Debug)]
pub struct PreparedExample<'a> {
    /// Model input, possibly corrupted.
    pub tokens: TokenSequence,
    pub plan: MaskingPlan,
    pub clip: Option<&'a ClipFeatures>,
    pub future: &'a str,
}

/// NUP over a shared candidate pool: row `b` of `pooled [B×d]` must pick
/// row `targets[b]` of `candidates [U×d]`.
pub fn pool_nup_loss(tape: &mut Tape<'_>, pooled: Var, candidates: Var, targets: &[usize]) -> Result<Var> {
    if targets.len() != tape.value(pooled).rows() {
        return Err(Error::Shape(format!(
            "{} targets for {} pooled rows",
            targets.len(),
            tape.value(pooled).rows()
        )));
    }
    let u = tape.value(candidates).rows();
    if let Some(&t) = targets.iter().find(|&&t| t >= u) {
        return Err(Error::Contract(format!("target {t} outside {u} candidates")));
    }
    let logits = nup_logits(tape, pooled, candidates)?;
    Ok(tape.cross_entropy(logits, targets))
}

/// Weighted NUP + MLM loss of a batch. The candidate pool is the set of
/// distinct future utterances in the batch, so an example never competes
/// against a copy of its own answer.
pub fn batch_loss(
    tape: &mut Tape<'_>,
    model: &Model,
    vocab: &Vocab,
    batch: &[PreparedExample<'_>],
    weights: LossWeights,
) -> Result<(Var, LossBundle)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let clamped_before = tape.clamped_rows();
    let mut pooled = Vec::with_capacity(batch.len());
    let mut texts = Vec::with_capacity(batch.len());
    for ex in batch {
        let out = model.forward(tape, &ex.tokens, ex.clip)?;
        pooled.push(out.pooled);
        texts.push(out.text);
    }
    let mut unique: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let targets: Vec<usize> = batch
        .iter()
        .map(|ex| {
            *index.entry(ex.future).or_insert_with(|| {
                unique.push(ex.future);
                unique.len() - 1
            })
        })
        .collect();
    let cands = model.encode_candidates(tape, vocab, &unique)?;
    let pooled = tape.concat_rows(&pooled);
    let nup = pool_nup_loss(tape, pooled, cands, &targets)?;
    let pairs: Vec<(Var, &MaskingPlan)> = texts.iter().copied().zip(batch.iter().map(|ex| &ex.plan)).collect();
    let mlm = batch_mlm_loss(tape, &pairs, &model.mlm_head)?;
    let a = tape.scale(nup, weights.nup);
    let b = tape.scale(mlm, weights.mlm);
    let total = tape.add(a, b);
    let bundle = LossBundle {
        nup: tape.value(nup).item(),
        mlm: tape.value(mlm).item(),
        total: tape.value(total).item(),
        weights,
        clamped: tape.clamped_rows() - clamped_before,
    };
    Ok((total, bundle))
}
