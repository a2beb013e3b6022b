use crate::numerics::{Mlp, ParamStore, SeededRng, Tape, Var};

/// Step classes in the COIN next-step task.
pub const COIN_NSP_CLASSES: usize = 735;
/// Target classes in the CrossTask next-step task.
pub const CROSSTASK_NSP_CLASSES: usize = 105;

/// Two-layer softmax classifier over next-step classes. Always freshly
/// initialised; it has no counterpart in a future-utterance checkpoint.
#[derive(Clone, Debug)]
pub struct NspHead {
    pub mlp: Mlp,
    pub classes: usize,
}

impl NspHead {
    pub fn new(store: &mut ParamStore, dim: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Self {
        Self {
            mlp: Mlp::new(store, "nsp", dim, hidden, classes, rng),
            classes,
        }
    }
}

/// `[1 × C]` class logits from the pooled embedding.
pub fn nsp_logits(tape: &mut Tape<'_>, pooled: Var, head: &NspHead) -> Var {
    head.mlp.forward(tape, pooled)
}

/// Softmax cross-entropy against the annotated step class.
pub fn nsp_loss(tape: &mut Tape<'_>, logits: Var, class: usize) -> Var {
    tape.cross_entropy(logits, &[class])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn zero_weights_give_uniform_classes() {
        let mut store = ParamStore::new();
        let head = NspHead::new(&mut store, 8, 16, COIN_NSP_CLASSES, &mut SeededRng::new(0));
        for id in head.mlp.params() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&store);
        let pooled = tape.constant(Tensor::full(&[1, 8], 0.3));
        let logits = nsp_logits(&mut tape, pooled, &head);
        assert_eq!(tape.shape(logits), &[1, 735]);
        assert!(tape.value(logits).data().iter().all(|&v| v == 0.0));
        let loss = nsp_loss(&mut tape, logits, 17);
        assert!((tape.value(loss).item() - 735f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn crosstask_head_width() {
        let mut store = ParamStore::new();
        let head = NspHead::new(&mut store, 4, 8, CROSSTASK_NSP_CLASSES, &mut SeededRng::new(0));
        let mut tape = Tape::new(&store);
        let pooled = tape.constant(Tensor::full(&[1, 4], 1.0));
        let logits = nsp_logits(&mut tape, pooled, &head);
        assert_eq!(tape.shape(logits), &[1, 105]);
    }
}
