use crate::error::{Error, Result};
use crate::numerics::{dot, Tape, Tensor, Var};
use crate::text::{encode_candidates, TextEncoderParams, Vocab};

/// Ordered candidate utterances with the index of the true one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub utterances: Vec<String>,
    /// 0-based position of the true next utterance.
    pub true_index: usize,
}

impl CandidateSet {
    pub fn new(utterances: Vec<String>, true_index: usize) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if true_index >= utterances.len() {
            return Err(Error::Contract(format!(
                "true index {true_index} outside {} candidates",
                utterances.len()
            )));
        }
        let truth = &utterances[true_index];
        if utterances.iter().enumerate().any(|(i, u)| i != true_index && u == truth) {
            return Err(Error::Contract(format!("negative duplicates the true utterance `{truth}`")));
        }
        Ok(Self {
            utterances,
            true_index,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn truth(&self) -> &str {
        &self.utterances[self.true_index]
    }
}

/// Unscaled dot products `pooled · g_cand(u_i)` as a `[1 × M]` node.
pub fn nup_logits(tape: &mut Tape<'_>, pooled: Var, candidates: Var) -> Result<Var> {
    if tape.value(pooled).cols() != tape.value(candidates).cols() {
        return Err(Error::Shape(format!(
            "pooled width {} vs candidate width {}",
            tape.value(pooled).cols(),
            tape.value(candidates).cols()
        )));
    }
    Ok(tape.matmul_bt(pooled, candidates))
}

/// `P(u_i | e, U)`: softmax over the candidate dot products, `[1 × M]`.
pub fn nup_scores(
    tape: &mut Tape<'_>,
    vocab: &Vocab,
    pooled: Var,
    candidates: &CandidateSet,
    cand_params: &TextEncoderParams,
) -> Result<Var> {
    let emb = encode_candidates(tape, vocab, &candidates.utterances, cand_params)?;
    let logits = nup_logits(tape, pooled, emb)?;
    Ok(tape.softmax_rows(logits, None))
}

/// `-log P(u_T)` from a `[1 × M]` logit row.
pub fn nup_loss(tape: &mut Tape<'_>, logits: Var, true_index: usize) -> Result<Var> {
    let m = tape.value(logits).cols();
    if true_index >= m {
        return Err(Error::Contract(format!("true index {true_index} outside {m} candidates")));
    }
    Ok(tape.cross_entropy(logits, &[true_index]))
}

/// In-batch objective: row `b` of `pooled [B×d]` must pick row `b` of
/// `candidates [B×d]`; the loss is the mean diagonal NLL of the `B×B`
/// softmax.
pub fn in_batch_nup_loss(tape: &mut Tape<'_>, pooled: Var, candidates: Var) -> Result<Var> {
    let b = tape.value(pooled).rows();
    if tape.value(candidates).rows() != b {
        return Err(Error::Shape(format!(
            "{b} pooled rows vs {} candidates",
            tape.value(candidates).rows()
        )));
    }
    let logits = nup_logits(tape, pooled, candidates)?;
    let targets: Vec<usize> = (0..b).collect();
    Ok(tape.cross_entropy(logits, &targets))
}

/// Probability vector from plain embeddings.
pub fn nup_probabilities(pooled: &[f64], candidate_embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    if candidate_embeddings.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let dots: Vec<f64> = candidate_embeddings
        .iter()
        .map(|c| {
            if c.len() != pooled.len() {
                Err(Error::Shape(format!("candidate width {} vs pooled {}", c.len(), pooled.len())))
            } else {
                Ok(dot(pooled, c))
            }
        })
        .collect::<Result<_>>()?;
    Ok(Tensor::vector(dots).softmax(0)?.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamStore;

    #[test]
    fn candidate_set_validation() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(CandidateSet::new(s(&["a", "b"]), 1).is_ok());
        assert!(matches!(CandidateSet::new(vec![], 0), Err(Error::EmptyCandidates)));
        assert!(CandidateSet::new(s(&["a"]), 1).is_err());
        assert!(CandidateSet::new(s(&["a", "b", "a"]), 0).is_err());
        assert!(CandidateSet::new(s(&["a", "b", "b"]), 0).is_ok());
    }

    #[test]
    fn single_candidate_is_certain() {
        let p = nup_probabilities(&[0.3, -2.0], &[vec![5.0, 1.0]]).unwrap();
        assert_eq!(p, [1.0]);
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let pooled = tape.constant(Tensor::from_rows(&[vec![0.3, -2.0]]).unwrap());
        let c = tape.constant(Tensor::from_rows(&[vec![5.0, 1.0]]).unwrap());
        let l = nup_logits(&mut tape, pooled, c).unwrap();
        let loss = nup_loss(&mut tape, l, 0).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn identical_candidates_are_uniform() {
        let p = nup_probabilities(&[1.0, 2.0], &vec![vec![0.5, -0.5]; 4]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn log_weight_dots() {
        // pooled = [1, 0] so the dots are the first coordinates.
        let cands = vec![vec![0.0, 9.0], vec![2f64.ln(), -1.0], vec![3f64.ln(), 4.0]];
        let p = nup_probabilities(&[1.0, 0.0], &cands).unwrap();
        for (x, e) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_four_way_loss_is_ln4() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let logits = tape.constant(Tensor::zeros(&[1, 4]));
        let loss = nup_loss(&mut tape, logits, 2).unwrap();
        assert!((tape.value(loss).item() - 4f64.ln()).abs() < 1e-15);
        assert!(nup_loss(&mut tape, logits, 4).is_err());
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(matches!(nup_probabilities(&[1.0], &[]), Err(Error::EmptyCandidates)));
    }
}
