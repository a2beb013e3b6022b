use crate::error::{Error, Result};
use crate::numerics::{Linear, Tape, Tensor, Var};
use crate::text::MaskingPlan;

/// Mean cross-entropy of the vocabulary projection at every planned
/// position. Returns a constant zero for an empty plan.
pub fn mlm_loss(tape: &mut Tape<'_>, text_out: Var, plan: &MaskingPlan, head: &Linear) -> Result<Var> {
    if plan.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let rows = tape.value(text_out).rows();
    let positions: Vec<usize> = plan.targets.iter().map(|&(p, _)| p).collect();
    if let Some(&bad) = positions.iter().find(|&&p| p >= rows) {
        return Err(Error::Contract(format!("masked position {bad} beyond {rows} outputs")));
    }
    let targets: Vec<usize> = plan.targets.iter().map(|&(_, id)| id).collect();
    let picked = tape.gather_rows(text_out, &positions);
    let logits = head.forward(tape, picked);
    let vocab = tape.value(logits).cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
        return Err(Error::Contract(format!("target id {bad} outside vocabulary of {vocab}")));
    }
    Ok(tape.cross_entropy(logits, &targets))
}

/// Gathers the rows and targets of several examples' plans so one
/// cross-entropy covers the whole batch. `outputs[i]` pairs with `plans[i]`.
pub fn batch_mlm_loss(tape: &mut Tape<'_>, outputs: &[(Var, &MaskingPlan)], head: &Linear) -> Result<Var> {
    let mut picked = Vec::new();
    let mut targets = Vec::new();
    for &(out, plan) in outputs {
        if plan.is_empty() {
            continue;
        }
        let positions: Vec<usize> = plan.targets.iter().map(|&(p, _)| p).collect();
        picked.push(tape.gather_rows(out, &positions));
        targets.extend(plan.targets.iter().map(|&(_, id)| id));
    }
    if picked.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let rows = tape.concat_rows(&picked);
    let logits = head.forward(tape, rows);
    Ok(tape.cross_entropy(logits, &targets))
}
