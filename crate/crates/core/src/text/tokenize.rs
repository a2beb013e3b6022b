use super::vocab::{split_words, Vocab, CLS, PAD, SEP};
use crate::error::{Error, Result};

/// Token ids framed as `[CLS] body [SEP]` and padded to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// `true` for real tokens, `false` for padding.
    pub mask: Vec<bool>,
}

impl TokenSequence {
    /// Frames already-mapped body ids, keeping the last `max_len - 2` of
    /// them.
    pub fn from_body(body: &[usize], max_len: usize) -> Result<Self> {
        if max_len < 3 {
            return Err(Error::Contract(format!("max_len {max_len} leaves no room for a token")));
        }
        let keep = body.len().min(max_len - 2);
        let tail = &body[body.len() - keep..];
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS);
        ids.extend_from_slice(tail);
        ids.push(SEP);
        let real = ids.len();
        ids.resize(max_len, PAD);
        let mask = (0..max_len).map(|i| i < real).collect();
        Ok(Self { ids, mask })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Count of non-padding positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Ids at non-padding positions, in order.
    pub fn real_ids(&self) -> Vec<usize> {
        self.ids
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// Lowercases, splits, maps through `vocab` and frames the result. Bodies
/// longer than `max_len - 2` lose tokens from the front.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> Result<TokenSequence> {
    let body: Vec<usize> = split_words(text).iter().map(|w| vocab.id(w)).collect();
    TokenSequence::from_body(&body, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    #[test]
    fn empty_text_is_cls_sep() {
        let v = build_vocab(&["x"], 1).unwrap();
        let s = tokenize("", &v, 5).unwrap();
        assert_eq!(s.ids, [CLS, SEP, PAD, PAD, PAD]);
        assert_eq!(s.mask, [true, true, false, false, false]);
    }

    #[test]
    fn frames_words() {
        let v = build_vocab(&["mix the flour"], 1).unwrap();
        let s = tokenize("Mix the flour", &v, 8).unwrap();
        let words: Vec<&str> = s.real_ids().iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(words, ["[CLS]", "mix", "the", "flour", "[SEP]"]);
    }

    #[test]
    fn truncation_keeps_the_last_body_tokens() {
        let text = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let v = build_vocab(&[text], 1).unwrap();
        let s = tokenize(text, &v, 7).unwrap();
        let words: Vec<&str> = s.ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(words, ["[CLS]", "t5", "t6", "t7", "t8", "t9", "[SEP]"]);
        assert!(s.mask.iter().all(|&m| m));
    }

    #[test]
    fn rejects_tiny_max_len() {
        let v = build_vocab(&["x"], 1).unwrap();
        assert!(tokenize("x", &v, 2).is_err());
    }
}
