use super::tokenize::TokenSequence;
use super::vocab::{Vocab, MASK, SPECIALS};
use crate::numerics::SeededRng;

/// What happened to one position under masked-language-model corruption.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAction {
    Keep,
    Mask,
    Random,
    /// Selected for prediction but left as-is.
    Unchanged,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskingPlan {
    pub actions: Vec<MaskAction>,
    /// `(position, original id)` for every selected position, ascending.
    pub targets: Vec<(usize, usize)>,
}

impl MaskingPlan {
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Selection probability and the split among mask / random / unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskingConfig {
    pub select_p: f64,
    pub mask_p: f64,
    pub random_p: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            select_p: 0.15,
            mask_p: 0.8,
            random_p: 0.1,
        }
    }
}

impl MaskingConfig {
    pub fn with_select_p(select_p: f64) -> Self {
        Self {
            select_p,
            ..Self::default()
        }
    }
}

/// Selects each real non-special token independently with `select_p` and
/// rewrites it per the mask/random/unchanged split. Random replacements
/// are drawn from the non-special part of the vocabulary.
pub fn apply_mlm_mask(
    seq: &TokenSequence,
    vocab: &Vocab,
    rng: &mut SeededRng,
    config: MaskingConfig,
) -> (TokenSequence, MaskingPlan) {
    let mut out = seq.clone();
    let mut actions = vec![MaskAction::Keep; seq.len()];
    let mut targets = Vec::new();
    let regular = vocab.len().saturating_sub(SPECIALS.len());
    for (pos, (&id, &real)) in seq.ids.iter().zip(&seq.mask).enumerate() {
        if !real || Vocab::is_special(id) {
            continue;
        }
        if rng.uniform() >= config.select_p {
            continue;
        }
        targets.push((pos, id));
        let branch = rng.uniform();
        actions[pos] = if branch < config.mask_p || regular == 0 {
            out.ids[pos] = MASK;
            MaskAction::Mask
        } else if branch < config.mask_p + config.random_p {
            out.ids[pos] = SPECIALS.len() + rng.below(regular);
            MaskAction::Random
        } else {
            MaskAction::Unchanged
        };
    }
    (out, MaskingPlan { actions, targets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{build_vocab, tokenize, CLS, PAD, SEP};

    fn seq() -> (Vocab, TokenSequence) {
        let v = build_vocab(&["a b c d e f g h"], 1).unwrap();
        let s = tokenize("a b c d e f g h", &v, 14).unwrap();
        (v, s)
    }

    #[test]
    fn zero_probability_is_identity() {
        let (v, s) = seq();
        let (m, plan) = apply_mlm_mask(&s, &v, &mut SeededRng::new(1), MaskingConfig::with_select_p(0.0));
        assert_eq!(m, s);
        assert!(plan.is_empty());
    }

    #[test]
    fn forced_mask_branch_masks_the_body() {
        let (v, s) = seq();
        let cfg = MaskingConfig {
            select_p: 1.0,
            mask_p: 1.0,
            random_p: 0.0,
        };
        let (m, plan) = apply_mlm_mask(&s, &v, &mut SeededRng::new(1), cfg);
        assert_eq!(m.ids[0], CLS);
        assert_eq!(m.ids[9], SEP);
        assert!(m.ids[1..9].iter().all(|&i| i == MASK));
        assert!(m.ids[10..].iter().all(|&i| i == PAD));
        assert_eq!(plan.targets.len(), 8);
        assert_eq!(plan.targets[0], (1, s.ids[1]));
    }
}
