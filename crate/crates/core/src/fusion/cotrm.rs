use super::trm::{trm, trm_without_attention, TrmParams};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, SeededRng, Tape, Var};

/// Four TRMs: each stream attends across modalities, then within itself.
#[derive(Clone, Debug)]
pub struct CoTrmBlock {
    pub visual_cross: TrmParams,
    pub visual_self: TrmParams,
    pub text_cross: TrmParams,
    pub text_self: TrmParams,
}

impl CoTrmBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ffn_dim: usize, rng: &mut SeededRng) -> Self {
        let mut make = |part: &str, cross: bool| {
            TrmParams::new(store, &format!("{name}.{part}"), dim, heads, ffn_dim, cross, rng)
        };
        Self {
            visual_cross: make("visual_cross", true),
            visual_self: make("visual_self", false),
            text_cross: make("text_cross", true),
            text_self: make("text_self", false),
        }
    }

    pub fn trms(&self) -> [&TrmParams; 4] {
        [&self.visual_cross, &self.visual_self, &self.text_cross, &self.text_self]
    }
}

/// `S` co-attentional blocks with distinct parameters.
#[derive(Clone, Debug)]
pub struct CoTrmParams {
    pub blocks: Vec<CoTrmBlock>,
}

impl CoTrmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let blocks = (0..depth)
            .map(|s| CoTrmBlock::new(store, &format!("{name}.block{s}"), dim, heads, ffn_dim, rng))
            .collect();
        Self { blocks }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn trm_count(&self) -> usize {
        4 * self.blocks.len()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.blocks
            .iter()
            .flat_map(|b| b.trms().into_iter().flat_map(TrmParams::params))
            .collect()
    }
}

/// Optional padding masks for the two sets (`true` = real element).
#[derive(Clone, Copy, Debug, Default)]
pub struct FusionMasks<'a> {
    pub visual: Option<&'a [bool]>,
    pub text: Option<&'a [bool]>,
}

/// One block:
/// `V̂ = TRM(V, E)`, `V' = TRM(V̂, V̂)`, `Ê = TRM(E, V)`, `E' = TRM(Ê, Ê)`.
/// Both cross steps read this block's input sets.
pub fn cotrm_block(
    tape: &mut Tape<'_>,
    visual: Var,
    text: Var,
    block: &CoTrmBlock,
    masks: FusionMasks<'_>,
) -> Result<(Var, Var)> {
    let v_hat = trm(tape, visual, text, &block.visual_cross, masks.text)?;
    let v_next = trm(tape, v_hat, v_hat, &block.visual_self, masks.visual)?;
    let e_hat = trm(tape, text, visual, &block.text_cross, masks.visual)?;
    let e_next = trm(tape, e_hat, e_hat, &block.text_self, masks.text)?;
    Ok((v_next, e_next))
}

#[derive(Clone, Copy, Debug)]
pub struct FusionOutput {
    pub visual: Var,
    pub text: Var,
    /// `e^(S)_1`, the contextualised `[CLS]` row, `[1 × d]`.
    pub pooled: Var,
}

/// Runs every block in order starting from `V^(0)` and `E^(0)`.
pub fn cotrm_stack(
    tape: &mut Tape<'_>,
    visual: Var,
    text: Var,
    params: &CoTrmParams,
    masks: FusionMasks<'_>,
) -> Result<FusionOutput> {
    if tape.value(visual).cols() != tape.value(text).cols() {
        return Err(Error::Shape(format!(
            "visual width {} vs text width {}",
            tape.value(visual).cols(),
            tape.value(text).cols()
        )));
    }
    let (mut v, mut e) = (visual, text);
    for block in &params.blocks {
        (v, e) = cotrm_block(tape, v, e, block, masks)?;
    }
    let pooled = tape.gather_rows(e, &[0]);
    Ok(FusionOutput {
        visual: v,
        text: e,
        pooled,
    })
}

/// The text stream of the stack with every cross-attention term removed.
pub fn text_stream_only(tape: &mut Tape<'_>, text: Var, params: &CoTrmParams, mask: Option<&[bool]>) -> Result<Var> {
    let mut e = text;
    for block in &params.blocks {
        let e_hat = trm_without_attention(tape, e, &block.text_cross);
        e = trm(tape, e_hat, e_hat, &block.text_self, mask)?;
    }
    Ok(e)
}
