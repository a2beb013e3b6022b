use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{cotrm_stack, trm, CoTrmParams, FusionMasks, TrmParams};
use crate::numerics::{Linear, ParamId, ParamStore, SeededRng, Tape, Var};
use crate::text::{encode_candidates, encode_text, TextEncoderParams, TextEncoderShape, TokenSequence, Vocab, CLS, SEP};
use crate::visual::{combine_clip, compact_extract, scene_tokens, AnchorPolicy, ClipFeatures, VisualParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Comvt,
    ComvtSceneOnly,
    TextOnly,
    VisionOnly,
    SingleStream,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Comvt,
        Variant::ComvtSceneOnly,
        Variant::TextOnly,
        Variant::VisionOnly,
        Variant::SingleStream,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Comvt => "comvt",
            Variant::ComvtSceneOnly => "comvt-scene-only",
            Variant::TextOnly => "text-only",
            Variant::VisionOnly => "vision-only",
            Variant::SingleStream => "single-stream",
        }
    }

    /// Whether the variant reads clip features at all.
    pub fn uses_visual(self) -> bool {
        self != Variant::TextOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dim: usize,
    pub heads: usize,
    pub text_layers: usize,
    pub ffn_dim: usize,
    /// `N_w`, including `[CLS]` and `[SEP]`.
    pub max_text_len: usize,
    /// `N_f'`.
    pub max_frames: usize,
    /// `L`, objects per frame.
    pub slots: usize,
    pub scene_dim: usize,
    pub object_dim: usize,
    /// `S`, co-attentional blocks.
    pub fusion_depth: usize,
    pub anchor: AnchorPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Comvt,
            dim: 64,
            heads: 4,
            text_layers: 2,
            ffn_dim: 256,
            max_text_len: 128,
            max_frames: 30,
            slots: 4,
            scene_dim: 32,
            object_dim: 32,
            fusion_depth: 2,
            anchor: AnchorPolicy::Last,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("max_frames", self.max_frames),
            ("slots", self.slots),
            ("scene_dim", self.scene_dim),
            ("object_dim", self.object_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{} heads do not divide dim {}", self.heads, self.dim)));
        }
        if self.max_text_len < 3 {
            return Err(Error::Config("max_text_len must be at least 3".into()));
        }
        if let AnchorPolicy::Index(t) = self.anchor {
            if t == 0 || t > self.max_frames {
                return Err(Error::Config(format!("anchor index {t} outside 1..={}", self.max_frames)));
            }
        }
        Ok(())
    }

    fn encoder_shape(&self, vocab_size: usize) -> TextEncoderShape {
        TextEncoderShape {
            vocab_size,
            max_len: self.max_text_len,
            dim: self.dim,
            heads: self.heads,
            layers: self.text_layers,
            ffn_dim: self.ffn_dim,
        }
    }
}

/// Self-attention stack over concatenated text and visual tokens.
#[derive(Clone, Debug)]
pub struct SingleStreamParams {
    pub text_type: ParamId,
    pub visual_type: ParamId,
    pub layers: Vec<TrmParams>,
}

/// An assembled model: parameters plus the handles each variant needs.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub params: ParamStore,
    pub text: TextEncoderParams,
    /// `g_cand`, parameter-disjoint from `text`.
    pub candidate: TextEncoderParams,
    pub visual: Option<VisualParams>,
    pub scene_proj: Option<Linear>,
    pub fusion: Option<CoTrmParams>,
    pub single: Option<SingleStreamParams>,
    pub mlm_head: Linear,
}

/// Context representation of one example.
#[derive(Clone, Copy, Debug)]
pub struct ContextOutput {
    /// `[1 × d]`.
    pub pooled: Var,
    /// One row per real input token.
    pub text: Var,
    /// Compact-extraction attention weights, when computed.
    pub compact_weights: Option<Var>,
}

/// Builds every parameter group of `config.variant`. Each group draws from
/// its own stream of `seed`, so adding a group never perturbs another.
pub fn build_model(config: &ModelConfig, vocab_size: usize, seed: u64) -> Result<Model> {
    config.validate()?;
    if vocab_size == 0 {
        return Err(Error::Config("empty vocabulary".into()));
    }
    let root = SeededRng::new(seed);
    let mut store = ParamStore::new();
    let shape = config.encoder_shape(vocab_size);
    let d = config.dim;
    let text = TextEncoderParams::new(&mut store, "text", shape, &mut root.fork(0));
    let candidate = TextEncoderParams::for_candidates(&mut store, "cand", shape, &mut root.fork(1));
    let mlm_head = Linear::new(&mut store, "mlm", d, vocab_size, true, &mut root.fork(2));
    let mut model = Model {
        config: config.clone(),
        vocab_size,
        params: ParamStore::new(),
        text,
        candidate,
        visual: None,
        scene_proj: None,
        fusion: None,
        single: None,
        mlm_head,
    };
    let fusion = |store: &mut ParamStore| {
        CoTrmParams::new(store, "fusion", config.fusion_depth, d, config.heads, config.ffn_dim, &mut root.fork(3))
    };
    let visual = |store: &mut ParamStore| {
        VisualParams::new(store, "visual", config.object_dim, config.scene_dim, d, &mut root.fork(4))
    };
    match config.variant {
        Variant::Comvt | Variant::VisionOnly => {
            model.visual = Some(visual(&mut store));
            model.fusion = Some(fusion(&mut store));
        }
        Variant::ComvtSceneOnly => {
            model.scene_proj = Some(Linear::new(&mut store, "scene", config.scene_dim, d, true, &mut root.fork(5)));
            model.fusion = Some(fusion(&mut store));
        }
        Variant::TextOnly => {}
        Variant::SingleStream => {
            model.visual = Some(visual(&mut store));
            let mut rng = root.fork(6);
            let std = 1.0 / (d as f64).sqrt();
            let text_type = store.normal("single.type_text", &[d], std, &mut rng);
            let visual_type = store.normal("single.type_visual", &[d], std, &mut rng);
            let layers = (0..2 * config.fusion_depth)
                .map(|l| {
                    TrmParams::new(&mut store, &format!("single.layer{l}"), d, config.heads, config.ffn_dim, false, &mut rng)
                })
                .collect();
            model.single = Some(SingleStreamParams {
                text_type,
                visual_type,
                layers,
            });
        }
    }
    model.params = store;
    Ok(model)
}

impl Model {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// TRM blocks in the fusion stage: `4S` for co-attentional variants,
    /// `2S` for the single stream, none for text-only.
    pub fn fusion_trm_count(&self) -> usize {
        match (&self.fusion, &self.single) {
            (Some(f), _) => f.trm_count(),
            (_, Some(s)) => s.layers.len(),
            _ => 0,
        }
    }

    /// Text the model actually reads: the transcript tokens, or `[CLS][SEP]`
    /// for the vision-only variant.
    pub fn input_tokens(&self, tokens: &TokenSequence) -> Result<TokenSequence> {
        if self.variant() == Variant::VisionOnly {
            Ok(TokenSequence {
                ids: vec![CLS, SEP],
                mask: vec![true, true],
            })
        } else {
            Ok(tokens.clone())
        }
    }

    /// Encodes one example's context. `tokens` should already have passed
    /// through [`Model::input_tokens`]; `clip` is ignored by text-only.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        tokens: &TokenSequence,
        clip: Option<&ClipFeatures>,
    ) -> Result<ContextOutput> {
        let dummy;
        let tokens = if self.variant() == Variant::VisionOnly && tokens.real_len() != 2 {
            dummy = self.input_tokens(tokens)?;
            &dummy
        } else {
            tokens
        };
        let text = encode_text(tape, tokens, &self.text)?;
        if self.variant() == Variant::TextOnly {
            let pooled = tape.gather_rows(text, &[0]);
            return Ok(ContextOutput {
                pooled,
                text,
                compact_weights: None,
            });
        }
        let clip = clip.ok_or_else(|| Error::Contract(format!("variant {} needs clip features", self.variant())))?;
        let truncated;
        let clip = if clip.frames() > self.config.max_frames {
            let mut c = clip.clone();
            c.truncate_front(self.config.max_frames);
            truncated = c;
            &truncated
        } else {
            clip
        };
        let (visual, compact_weights) = if let Some(proj) = &self.scene_proj {
            (scene_tokens(tape, clip, proj)?, None)
        } else {
            let vp = self.visual.as_ref().expect("visual parameters for visual variant");
            let grid = combine_clip(tape, clip, vp)?;
            let anchor = self.config.anchor.resolve(clip.frames());
            let set = compact_extract(tape, grid, clip.frames(), clip.slots(), anchor, vp)?;
            (set.features, set.weights)
        };
        if let Some(single) = &self.single {
            let n_text = tape.value(text).rows();
            let tt = tape.param(single.text_type);
            let vt = tape.param(single.visual_type);
            let e = tape.add_row(text, tt);
            let v = tape.add_row(visual, vt);
            let mut x = tape.concat_rows(&[e, v]);
            for layer in &single.layers {
                x = trm(tape, x, x, layer, None)?;
            }
            let rows: Vec<usize> = (0..n_text).collect();
            let text = tape.gather_rows(x, &rows);
            let pooled = tape.gather_rows(x, &[0]);
            return Ok(ContextOutput {
                pooled,
                text,
                compact_weights,
            });
        }
        let fusion = self.fusion.as_ref().expect("fusion parameters for co-attentional variant");
        let out = cotrm_stack(tape, visual, text, fusion, FusionMasks::default())?;
        Ok(ContextOutput {
            pooled: out.pooled,
            text: out.text,
            compact_weights,
        })
    }

    /// `g_cand` of each utterance stacked into `[M × d]`.
    pub fn encode_candidates<S: AsRef<str>>(&self, tape: &mut Tape<'_>, vocab: &Vocab, utterances: &[S]) -> Result<Var> {
        encode_candidates(tape, vocab, utterances, &self.candidate)
    }

    /// Parameter ids grouped by top-level component name.
    pub fn groups(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut groups: Vec<(String, Vec<ParamId>)> = Vec::new();
        for (id, name, _) in self.params.iter() {
            let head = name.split('.').next().unwrap_or(name);
            match groups.last_mut() {
                Some((g, ids)) if g == head => ids.push(id),
                _ => groups.push((head.to_string(), vec![id])),
            }
        }
        groups
    }
}
