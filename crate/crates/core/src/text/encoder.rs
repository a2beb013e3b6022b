use super::tokenize::{tokenize, TokenSequence};
use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::fusion::{trm, TrmParams};
use crate::numerics::{ParamId, ParamStore, SeededRng, Tape, Var};

/// Self-attention text encoder with learned token and position embeddings.
#[derive(Clone, Debug)]
pub struct TextEncoderParams {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<TrmParams>,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TextEncoderShape {
    pub vocab_size: usize,
    pub max_len: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
}

impl TextEncoderParams {
    pub fn new(store: &mut ParamStore, name: &str, shape: TextEncoderShape, rng: &mut SeededRng) -> Self {
        Self::build(store, name, shape, true, rng)
    }

    /// Encoder for `g_cand`. The last layer has no feed-forward output
    /// bias: it would shift every candidate embedding by the same vector,
    /// which cancels in the candidate softmax.
    pub fn for_candidates(store: &mut ParamStore, name: &str, shape: TextEncoderShape, rng: &mut SeededRng) -> Self {
        Self::build(store, name, shape, false, rng)
    }

    fn build(
        store: &mut ParamStore,
        name: &str,
        shape: TextEncoderShape,
        last_output_bias: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let std = 1.0 / (shape.dim as f64).sqrt();
        let token_embedding = store.normal(format!("{name}.tok_emb"), &[shape.vocab_size, shape.dim], std, rng);
        let position_embedding = store.normal(format!("{name}.pos_emb"), &[shape.max_len, shape.dim], std, rng);
        let layers = (0..shape.layers)
            .map(|l| {
                let bias = last_output_bias || l + 1 < shape.layers;
                let name = format!("{name}.layer{l}");
                TrmParams::with_ffn_bias(store, &name, shape.dim, shape.heads, shape.ffn_dim, false, bias, rng)
            })
            .collect();
        Self {
            token_embedding,
            position_embedding,
            layers,
            vocab_size: shape.vocab_size,
            max_len: shape.max_len,
            dim: shape.dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.token_embedding, self.position_embedding];
        for l in &self.layers {
            p.extend(l.params());
        }
        p
    }
}

/// Contextualised embeddings, one row per non-padding position.
///
/// Padding positions are dropped before the first layer, so they can
/// neither attend nor be attended to.
pub fn encode_text(tape: &mut Tape<'_>, seq: &TokenSequence, params: &TextEncoderParams) -> Result<Var> {
    if seq.ids.len() != seq.mask.len() {
        return Err(Error::Contract("token ids and mask differ in length".into()));
    }
    let mut ids = Vec::with_capacity(seq.len());
    let mut positions = Vec::with_capacity(seq.len());
    for (pos, (&id, &real)) in seq.ids.iter().zip(&seq.mask).enumerate() {
        if !real {
            continue;
        }
        if id >= params.vocab_size {
            return Err(Error::Contract(format!(
                "token id {id} outside vocabulary of {}",
                params.vocab_size
            )));
        }
        if pos >= params.max_len {
            return Err(Error::Contract(format!(
                "position {pos} beyond encoder length {}",
                params.max_len
            )));
        }
        ids.push(id);
        positions.push(pos);
    }
    if ids.is_empty() {
        return Err(Error::Contract("sequence has no real tokens".into()));
    }
    let table = tape.param(params.token_embedding);
    let pos_table = tape.param(params.position_embedding);
    let tok = tape.gather_rows(table, &ids);
    let pos = tape.gather_rows(pos_table, &positions);
    let mut x = tape.add(tok, pos);
    for layer in &params.layers {
        x = trm(tape, x, x, layer, None)?;
    }
    Ok(x)
}

/// `g_cand(u)`: the `[CLS]` row of the candidate encoder applied to
/// `[CLS] u [SEP]`. Returns a `[1 × d]` node.
pub fn encode_candidate(
    tape: &mut Tape<'_>,
    vocab: &Vocab,
    utterance: &str,
    params: &TextEncoderParams,
) -> Result<Var> {
    let seq = tokenize(utterance, vocab, params.max_len)?;
    let out = encode_text(tape, &seq, params)?;
    Ok(tape.gather_rows(out, &[0]))
}

/// Stacks `g_cand` of each utterance into an `[M × d]` node, in order.
pub fn encode_candidates<S: AsRef<str>>(
    tape: &mut Tape<'_>,
    vocab: &Vocab,
    utterances: &[S],
    params: &TextEncoderParams,
) -> Result<Var> {
    if utterances.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let rows = utterances
        .iter()
        .map(|u| encode_candidate(tape, vocab, u.as_ref(), params))
        .collect::<Result<Vec<_>>>()?;
    Ok(tape.concat_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::text::{build_vocab, PAD};

    fn setup(layers: usize) -> (ParamStore, Vocab, TextEncoderParams, TextEncoderParams) {
        let vocab = build_vocab(&["mix the flour then bake it"], 1).unwrap();
        let shape = TextEncoderShape {
            vocab_size: vocab.len(),
            max_len: 10,
            dim: 8,
            heads: 2,
            layers,
            ffn_dim: 16,
        };
        let mut rng = SeededRng::new(5);
        let mut store = ParamStore::new();
        let text = TextEncoderParams::new(&mut store, "text", shape, &mut rng);
        let cand = TextEncoderParams::new(&mut store, "cand", shape, &mut rng);
        (store, vocab, text, cand)
    }

    #[test]
    fn zero_layers_is_embedding_sum() {
        let (store, vocab, text, _) = setup(0);
        let seq = tokenize("mix flour", &vocab, 10).unwrap();
        let mut tape = Tape::new(&store);
        let out = encode_text(&mut tape, &seq, &text).unwrap();
        let tok = store.get(text.token_embedding);
        let pos = store.get(text.position_embedding);
        let got = tape.value(out);
        assert_eq!(got.shape(), &[4, 8]);
        for (r, id) in seq.real_ids().into_iter().enumerate() {
            for c in 0..8 {
                assert_eq!(got.at(r, c), tok.at(id, c) + pos.at(r, c));
            }
        }
    }

    #[test]
    fn padding_content_is_ignored() {
        let (store, vocab, text, _) = setup(2);
        let seq = tokenize("mix the flour", &vocab, 10).unwrap();
        let mut junk = seq.clone();
        for (id, &m) in junk.ids.iter_mut().zip(&seq.mask) {
            if !m {
                *id = 7;
            }
        }
        assert_ne!(junk.ids, seq.ids);
        let mut tape = Tape::new(&store);
        let a = encode_text(&mut tape, &seq, &text).unwrap();
        let b = encode_text(&mut tape, &junk, &text).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        assert_eq!(seq.ids[9], PAD);
    }

    #[test]
    fn one_layer_matches_manual_block() {
        let (store, vocab, text, _) = setup(1);
        let seq = tokenize("mix", &vocab, 10).unwrap();
        let mut tape = Tape::new(&store);
        let out = encode_text(&mut tape, &seq, &text).unwrap();

        // Recompute the block by hand: 3 tokens, 2 heads of width 4.
        let ids = seq.real_ids();
        let tok = store.get(text.token_embedding);
        let pos = store.get(text.position_embedding);
        let x: Vec<Vec<f64>> = (0..3).map(|r| (0..8).map(|c| tok.at(ids[r], c) + pos.at(r, c)).collect()).collect();
        let layer = &text.layers[0];
        let ln = |rows: &[Vec<f64>], g: ParamId, b: ParamId| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| {
                    let mean = r.iter().sum::<f64>() / 8.0;
                    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
                    r.iter()
                        .enumerate()
                        .map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * store.get(g).data()[j] + store.get(b).data()[j])
                        .collect()
                })
                .collect()
        };
        let lin = |rows: &[Vec<f64>], l: &crate::numerics::Linear| -> Vec<Vec<f64>> {
            let w = store.get(l.weight);
            let (i, o) = (w.shape()[0], w.shape()[1]);
            rows.iter()
                .map(|r| {
                    (0..o)
                        .map(|c| {
                            let b = l.bias.map_or(0.0, |b| store.get(b).data()[c]);
                            (0..i).map(|k| r[k] * w.at(k, c)).sum::<f64>() + b
                        })
                        .collect()
                })
                .collect()
        };
        let h = ln(&x, layer.norm_query.gain, layer.norm_query.bias);
        let (q, k, v) = (lin(&h, &layer.query), lin(&h, &layer.key), lin(&h, &layer.value));
        let mut merged = vec![vec![0.0; 8]; 3];
        for head in 0..2 {
            let cols = head * 4..head * 4 + 4;
            for i in 0..3 {
                let scores: Vec<f64> = (0..3)
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / 2.0)
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    merged[i][c] = (0..3).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        let att = lin(&merged, &layer.output);
        let r1: Vec<Vec<f64>> = x.iter().zip(&att).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
        let f = ln(&r1, layer.norm_ffn.gain, layer.norm_ffn.bias);
        let f = lin(&f, &layer.ffn.first);
        let f: Vec<Vec<f64>> = f
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| 0.5 * x * (1.0 + (0.7978845608028654 * (x + 0.044715 * x.powi(3))).tanh()))
                    .collect()
            })
            .collect();
        let f = lin(&f, &layer.ffn.second);
        let got = tape.value(out);
        for i in 0..3 {
            for c in 0..8 {
                assert!((got.at(i, c) - (r1[i][c] + f[i][c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn candidate_encoder_is_deterministic_and_ordered() {
        let (store, vocab, _, cand) = setup(1);
        let mut tape = Tape::new(&store);
        let a = encode_candidate(&mut tape, &vocab, "bake it", &cand).unwrap();
        let b = encode_candidate(&mut tape, &vocab, "bake it", &cand).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        let many = encode_candidates(&mut tape, &vocab, &["mix", "bake it", "the flour"], &cand).unwrap();
        assert_eq!(tape.shape(many), &[3, 8]);
        assert_eq!(tape.value(many).row(1), tape.value(a).row(0));
        let empty: [&str; 0] = [];
        assert!(matches!(encode_candidates(&mut tape, &vocab, &empty, &cand), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn candidate_params_are_disjoint_from_input_params() {
        let (mut store, vocab, text, cand) = setup(1);
        let before_cand = {
            let mut tape = Tape::new(&store);
            let v = encode_candidate(&mut tape, &vocab, "mix it", &cand).unwrap();
            tape.value(v).clone()
        };
        let before_text = {
            let mut tape = Tape::new(&store);
            let s = tokenize("mix it", &vocab, 10).unwrap();
            let v = encode_text(&mut tape, &s, &text).unwrap();
            tape.value(v).clone()
        };
        for id in cand.params() {
            let t = store.get_mut(id);
            let bumped: Vec<f64> = t.data().iter().map(|v| v + 0.1).collect();
            t.data_mut().copy_from_slice(&bumped);
        }
        let mut tape = Tape::new(&store);
        let v = encode_candidate(&mut tape, &vocab, "mix it", &cand).unwrap();
        assert!(tape.value(v).max_abs_diff(&before_cand) > 1e-3);
        let s = tokenize("mix it", &vocab, 10).unwrap();
        let w = encode_text(&mut tape, &s, &text).unwrap();
        assert_eq!(tape.value(w), &before_text);
        let shared: Vec<_> = text.params().into_iter().filter(|p| cand.params().contains(p)).collect();
        assert!(shared.is_empty());
    }

    #[test]
    fn out_of_vocab_id_is_a_contract_error() {
        let (store, _, text, _) = setup(0);
        let seq = TokenSequence { ids: vec![2, 999, 3], mask: vec![true; 3] };
        let mut tape = Tape::new(&store);
        assert!(matches!(encode_text(&mut tape, &seq, &text), Err(Error::Contract(_))));
        let _ = Tensor::scalar(0.0);
    }
}
