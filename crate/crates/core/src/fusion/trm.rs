use crate::error::{Error, Result};
use crate::numerics::{attend, LayerNorm, Linear, Mlp, ParamId, ParamStore, SeededRng, Tape, Var};

/// One pre-norm transformer block: multi-head attention of a query set
/// over a key/value set, then a position-wise feed-forward network.
#[derive(Clone, Debug)]
pub struct TrmParams {
    pub norm_query: LayerNorm,
    /// Present only for blocks whose key/value set differs from the query set.
    pub norm_kv: Option<LayerNorm>,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm_ffn: LayerNorm,
    pub ffn: Mlp,
    pub heads: usize,
}

impl TrmParams {
    /// `cross` selects a separate normalisation for the key/value set.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        cross: bool,
        rng: &mut SeededRng,
    ) -> Self {
        Self::with_ffn_bias(store, name, dim, heads, ffn_dim, cross, true, rng)
    }

    /// As [`TrmParams::new`], optionally without the feed-forward output
    /// bias.
    #[allow(clippy::too_many_arguments)]
    pub fn with_ffn_bias(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        cross: bool,
        ffn_output_bias: bool,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "{heads} heads do not divide dim {dim}");
        Self {
            norm_query: LayerNorm::new(store, &format!("{name}.ln_q"), dim),
            norm_kv: cross.then(|| LayerNorm::new(store, &format!("{name}.ln_kv"), dim)),
            query: Linear::new(store, &format!("{name}.attn.q"), dim, dim, true, rng),
            // A key bias adds the same score to every key and cancels in the softmax.
            key: Linear::new(store, &format!("{name}.attn.k"), dim, dim, false, rng),
            value: Linear::new(store, &format!("{name}.attn.v"), dim, dim, true, rng),
            output: Linear::new(store, &format!("{name}.attn.o"), dim, dim, true, rng),
            norm_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), dim),
            ffn: Mlp::with_output_bias(store, &format!("{name}.ffn"), dim, ffn_dim, dim, ffn_output_bias, rng),
            heads,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.norm_query.params();
        if let Some(n) = &self.norm_kv {
            p.extend(n.params());
        }
        for l in [&self.query, &self.key, &self.value, &self.output] {
            p.extend(l.params());
        }
        p.extend(self.norm_ffn.params());
        p.extend(self.ffn.params());
        p
    }
}

/// `TRM(Q, KV)`: `Q + MHA(norm(Q), norm(KV))`, then `+ FFN(norm(·))`.
///
/// `kv_mask[j] == false` hides key/value row `j`. Output has one row per
/// query row.
pub fn trm(
    tape: &mut Tape<'_>,
    queries: Var,
    kv: Var,
    params: &TrmParams,
    kv_mask: Option<&[bool]>,
) -> Result<Var> {
    if tape.value(queries).cols() != tape.value(kv).cols() {
        return Err(Error::Shape(format!(
            "query width {} vs key/value width {}",
            tape.value(queries).cols(),
            tape.value(kv).cols()
        )));
    }
    let q_in = params.norm_query.forward(tape, queries);
    let kv_in = match &params.norm_kv {
        Some(norm) => norm.forward(tape, kv),
        None if kv == queries => q_in,
        None => params.norm_query.forward(tape, kv),
    };
    let attended = multi_head(tape, q_in, kv_in, params, kv_mask)?;
    let h = tape.add(queries, attended);
    let f = params.norm_ffn.forward(tape, h);
    let f = params.ffn.forward(tape, f);
    Ok(tape.add(h, f))
}

/// The block with its attention term removed: `Q + FFN(norm(Q))`.
/// Equivalent to [`trm`] when the attention output projection is zero.
pub fn trm_without_attention(tape: &mut Tape<'_>, queries: Var, params: &TrmParams) -> Var {
    let f = params.norm_ffn.forward(tape, queries);
    let f = params.ffn.forward(tape, f);
    tape.add(queries, f)
}

fn multi_head(
    tape: &mut Tape<'_>,
    q_in: Var,
    kv_in: Var,
    params: &TrmParams,
    kv_mask: Option<&[bool]>,
) -> Result<Var> {
    let q = params.query.forward(tape, q_in);
    let k = params.key.forward(tape, kv_in);
    let v = params.value.forward(tape, kv_in);
    let dim = tape.value(q).cols();
    let head_dim = dim / params.heads;
    let merged = if params.heads == 1 {
        attend(tape, q, k, v, kv_mask)?
    } else {
        let mut outs = Vec::with_capacity(params.heads);
        for h in 0..params.heads {
            let start = h * head_dim;
            let qh = tape.slice_cols(q, start, head_dim);
            let kh = tape.slice_cols(k, start, head_dim);
            let vh = tape.slice_cols(v, start, head_dim);
            outs.push(attend(tape, qh, kh, vh, kv_mask)?);
        }
        tape.concat_cols(&outs)
    };
    Ok(params.output.forward(tape, merged))
}
