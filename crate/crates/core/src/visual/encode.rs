use serde::{Deserialize, Serialize};

use super::features::{BoundingBox, ClipFeatures, ObjectFeature, SceneFeature};
use crate::error::{Error, Result};
use crate::numerics::{Linear, Mlp, ParamId, ParamStore, SeededRng, Tape, Tensor, Var};

/// Learnable maps of the visual stream.
#[derive(Clone, Debug)]
pub struct VisualParams {
    /// `g_comb`: `[o; m]` → d.
    pub combine: Mlp,
    pub box_proj: Linear,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    /// `g_proj`.
    pub project: Mlp,
    pub dim: usize,
    pub scene_dim: usize,
    pub object_dim: usize,
}

impl VisualParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        object_dim: usize,
        scene_dim: usize,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            combine: Mlp::new(store, &format!("{name}.comb"), object_dim + scene_dim, dim, dim, rng),
            box_proj: Linear::new(store, &format!("{name}.box"), 4, dim, true, rng),
            query: Linear::new(store, &format!("{name}.query"), dim, dim, true, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, false, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, true, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, true, rng),
            project: Mlp::new(store, &format!("{name}.proj"), dim, dim, dim, rng),
            dim,
            scene_dim,
            object_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.combine.params();
        p.extend(self.box_proj.params());
        for l in [&self.query, &self.key, &self.value, &self.output] {
            p.extend(l.params());
        }
        p.extend(self.project.params());
        p
    }
}

/// Which frame supplies the compact-set queries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    First,
    #[default]
    Last,
    /// 1-based frame position within the (truncated) clip.
    Index(usize),
}

impl AnchorPolicy {
    pub fn resolve(self, frames: usize) -> usize {
        match self {
            AnchorPolicy::First => 1,
            AnchorPolicy::Last => frames,
            AnchorPolicy::Index(t) => t,
        }
    }
}

/// Transformer sinusoid at `position`: `sin` on even, `cos` on odd
/// dimensions with wavelengths scaled by 10000.
pub fn sinusoid(position: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let pair = (k / 2) as f64;
            let angle = position / 10000f64.powf(2.0 * pair / dim as f64);
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// `pos(o_ij)`: sinusoid of the frame index plus a linear map of the box.
pub fn positional_encoding(
    store: &ParamStore,
    params: &VisualParams,
    frame: usize,
    bbox: BoundingBox,
) -> Result<Tensor> {
    bbox.validate()?;
    if frame == 0 {
        return Err(Error::Contract("frame indices start at 1".into()));
    }
    let mut tape = Tape::new(store);
    let b = tape.constant(Tensor::from_rows(&[bbox.to_array().to_vec()])?);
    let pe = positional_rows(&mut tape, params, &[frame], b);
    Ok(tape.value(pe).clone())
}

fn positional_rows(tape: &mut Tape<'_>, params: &VisualParams, frames: &[usize], boxes: Var) -> Var {
    let rows: Vec<Vec<f64>> = frames.iter().map(|&i| sinusoid(i as f64, params.dim)).collect();
    let sin = tape.constant(Tensor::from_rows(&rows).expect("non-empty frame list"));
    let b = params.box_proj.forward(tape, boxes);
    tape.add(sin, b)
}

/// `v^st = g_comb([o; m]) + pos(o)` for one aligned pair, as a `[1 × d]` node.
pub fn combine_features(
    tape: &mut Tape<'_>,
    object: &ObjectFeature,
    scene: &SceneFeature,
    params: &VisualParams,
) -> Result<Var> {
    if object.frame != scene.frame {
        return Err(Error::Alignment {
            object: object.frame,
            scene: scene.frame,
        });
    }
    combine_rows(tape, &[(object, scene)], params)
}

fn combine_rows(
    tape: &mut Tape<'_>,
    pairs: &[(&ObjectFeature, &SceneFeature)],
    params: &VisualParams,
) -> Result<Var> {
    let mut concat = Vec::with_capacity(pairs.len());
    let mut boxes = Vec::with_capacity(pairs.len());
    let mut frames = Vec::with_capacity(pairs.len());
    for (o, m) in pairs {
        if o.vector.len() != params.object_dim || m.vector.len() != params.scene_dim {
            return Err(Error::Shape(format!(
                "object/scene widths {}/{} expected {}/{}",
                o.vector.len(),
                m.vector.len(),
                params.object_dim,
                params.scene_dim
            )));
        }
        o.bbox.validate()?;
        concat.push([o.vector.as_slice(), m.vector.as_slice()].concat());
        boxes.push(o.bbox.to_array().to_vec());
        frames.push(o.frame);
    }
    let x = tape.constant(Tensor::from_rows(&concat)?);
    let comb = params.combine.forward(tape, x);
    let b = tape.constant(Tensor::from_rows(&boxes)?);
    let pe = positional_rows(tape, params, &frames, b);
    Ok(tape.add(comb, pe))
}

/// Combined features for every object in the clip, frame-major: row
/// `(i-1)·L + (j-1)` holds `v^st_ij`.
pub fn combine_clip(tape: &mut Tape<'_>, clip: &ClipFeatures, params: &VisualParams) -> Result<Var> {
    if clip.frames() == 0 || clip.slots() == 0 {
        return Err(Error::Contract(format!("clip `{}` has no objects", clip.clip_id)));
    }
    let mut pairs = Vec::with_capacity(clip.frames() * clip.slots());
    for (scene, objects) in clip.scenes.iter().zip(&clip.objects) {
        if objects.len() != clip.slots() {
            return Err(Error::Contract(format!(
                "clip `{}` frame {} has {} objects, expected {}",
                clip.clip_id,
                scene.frame,
                objects.len(),
                clip.slots()
            )));
        }
        for o in objects {
            if o.frame != scene.frame {
                return Err(Error::Alignment {
                    object: o.frame,
                    scene: scene.frame,
                });
            }
            pairs.push((o, scene));
        }
    }
    combine_rows(tape, &pairs, params)
}

/// Output of [`compact_extract`].
#[derive(Clone, Copy, Debug)]
pub struct CompactSet {
    /// `[L × d]`, one row per anchor slot.
    pub features: Var,
    /// `[L × (F-1)·L]` attention weights over the non-anchor features, or
    /// `None` for single-frame clips.
    pub weights: Option<Var>,
    pub anchor: usize,
}

/// Aggregates a frame-major `[F·L × d]` grid into `L` features anchored at
/// frame `anchor` (1-based).
///
/// Each anchor object queries every feature from the other frames via
/// softmax-normalised scaled dot products; the attended value passes
/// through `g_output`, is added to the anchor feature, and goes through
/// `g_proj`. With a single frame the attended term is absent.
pub fn compact_extract(
    tape: &mut Tape<'_>,
    grid: Var,
    frames: usize,
    slots: usize,
    anchor: usize,
    params: &VisualParams,
) -> Result<CompactSet> {
    if anchor == 0 || anchor > frames {
        return Err(Error::Contract(format!("anchor {anchor} outside 1..={frames}")));
    }
    if tape.value(grid).rows() != frames * slots {
        return Err(Error::Shape(format!(
            "grid has {} rows, expected {frames}×{slots}",
            tape.value(grid).rows()
        )));
    }
    let anchor_rows: Vec<usize> = ((anchor - 1) * slots..anchor * slots).collect();
    let anchors = tape.gather_rows(grid, &anchor_rows);
    if frames == 1 {
        let features = params.project.forward(tape, anchors);
        return Ok(CompactSet {
            features,
            weights: None,
            anchor,
        });
    }
    let target_rows: Vec<usize> = (0..frames * slots)
        .filter(|r| r / slots != anchor - 1)
        .collect();
    let targets = tape.gather_rows(grid, &target_rows);
    let q = params.query.forward(tape, anchors);
    let k = params.key.forward(tape, targets);
    let v = params.value.forward(tape, targets);
    let scores = tape.matmul_bt(q, k);
    let scores = tape.scale(scores, 1.0 / (params.dim as f64).sqrt());
    let weights = tape.softmax_rows(scores, None);
    let attended = tape.matmul(weights, v);
    let out = params.output.forward(tape, attended);
    let summed = tape.add(anchors, out);
    let features = params.project.forward(tape, summed);
    Ok(CompactSet {
        features,
        weights: Some(weights),
        anchor,
    })
}

/// Scene-only visual tokens: each per-second scene feature projected to
/// `d` plus the sinusoid of its frame index. Returns `[F × d]`.
pub fn scene_tokens(tape: &mut Tape<'_>, clip: &ClipFeatures, proj: &Linear) -> Result<Var> {
    if clip.frames() == 0 {
        return Err(Error::Contract(format!("clip `{}` has no frames", clip.clip_id)));
    }
    let rows: Vec<Vec<f64>> = clip.scenes.iter().map(|s| s.vector.clone()).collect();
    let x = tape.constant(Tensor::from_rows(&rows)?);
    let y = proj.forward(tape, x);
    let dim = tape.value(y).cols();
    let sin: Vec<Vec<f64>> = clip.scenes.iter().map(|s| sinusoid(s.frame as f64, dim)).collect();
    let sin = tape.constant(Tensor::from_rows(&sin)?);
    Ok(tape.add(y, sin))
}
