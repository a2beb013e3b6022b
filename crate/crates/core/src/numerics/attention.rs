use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `softmax(Q·Kᵀ/√d)·V` on the tape, where `d` is the query width.
///
/// `key_mask[j] == false` removes key/value row `j` from every query's
/// distribution.
pub fn attend(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    let (qd, kd) = (tape.value(q).cols(), tape.value(k).cols());
    if qd != kd {
        return Err(Error::Shape(format!("query width {qd} vs key width {kd}")));
    }
    let krows = tape.value(k).rows();
    if tape.value(v).rows() != krows {
        return Err(Error::Shape(format!(
            "{krows} keys but {} values",
            tape.value(v).rows()
        )));
    }
    if let Some(mask) = key_mask {
        if mask.len() != krows {
            return Err(Error::Shape(format!("key mask of {} for {krows} keys", mask.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyKeySet);
        }
    }
    let scores = tape.matmul_bt(q, k);
    let scores = tape.scale(scores, 1.0 / (qd as f64).sqrt());
    let weights = tape.softmax_rows(scores, key_mask);
    Ok(tape.matmul(weights, v))
}

/// Attention weights `softmax(Q·Kᵀ/√d)` without the value product.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    if q.cols() != k.cols() {
        return Err(Error::Shape(format!(
            "query width {} vs key width {}",
            q.cols(),
            k.cols()
        )));
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let (qv, kv) = (tape.constant(q.clone()), tape.constant(k.clone()));
    let scores = tape.matmul_bt(qv, kv);
    let scores = tape.scale(scores, 1.0 / (q.cols() as f64).sqrt());
    let w = tape.softmax_rows(scores, None);
    Ok(tape.value(w).clone())
}

/// Scaled dot-product attention on plain tensors: `Q[q×d]`, `K[k×d]`, `V[k×e]`.
///
/// Keys are given as row slices so an empty key set is representable; it
/// is rejected with [`Error::EmptyKeySet`].
pub fn scaled_dot_attention(q: &Tensor, keys: &[Vec<f64>], values: &[Vec<f64>]) -> Result<Tensor> {
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    if !(q.is_finite()
        && keys.iter().flatten().all(|v| v.is_finite())
        && values.iter().flatten().all(|v| v.is_finite()))
    {
        return Err(Error::NonFinite("attention input".into()));
    }
    let k = Tensor::from_rows(keys)?;
    let v = Tensor::from_rows(values)?;
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let (qv, kv, vv) = (
        tape.constant(q.clone()),
        tape.constant(k),
        tape.constant(v),
    );
    let out = attend(&mut tape, qv, kv, vv, None)?;
    Ok(tape.value(out).clone())
}

/// Row-wise layer normalisation on a plain tensor.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    if gain.len() != x.cols() || bias.len() != x.cols() {
        return Err(Error::Shape(format!(
            "gain/bias of {}/{} for rows of {}",
            gain.len(),
            bias.len(),
            x.cols()
        )));
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let (xv, g, b) = (
        tape.constant(x.clone()),
        tape.constant(gain.clone()),
        tape.constant(bias.clone()),
    );
    let y = tape.layer_norm(xv, g, b, eps);
    Ok(tape.value(y).clone())
}
