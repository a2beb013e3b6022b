use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Normalised `(x0, y0, x1, y1)` corners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !ok(self.x0, self.x1) {
            return Err(Error::Contract(format!(
                "box x-range ({}, {}) not ordered within [0, 1]",
                self.x0, self.x1
            )));
        }
        if !ok(self.y0, self.y1) {
            return Err(Error::Contract(format!(
                "box y-range ({}, {}) not ordered within [0, 1]",
                self.y0, self.y1
            )));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Per-second scene-level feature `m_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFeature {
    /// 1-based temporal index.
    pub frame: usize,
    pub vector: Vec<f64>,
}

/// Per-frame object feature `o_ij` with its box.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectFeature {
    pub frame: usize,
    /// 1-based object slot within the frame.
    pub slot: usize,
    pub vector: Vec<f64>,
    pub bbox: BoundingBox,
}

/// Scene and object features of one clip, frames in temporal order, with
/// exactly `L` objects per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub scenes: Vec<SceneFeature>,
    pub objects: Vec<Vec<ObjectFeature>>,
}

impl ClipFeatures {
    pub fn frames(&self) -> usize {
        self.scenes.len()
    }

    pub fn slots(&self) -> usize {
        self.objects.first().map_or(0, Vec::len)
    }

    /// Keeps the last `max_frames` frames.
    pub fn truncate_front(&mut self, max_frames: usize) {
        let n = self.scenes.len();
        if n > max_frames {
            self.scenes.drain(..n - max_frames);
            self.objects.drain(..n - max_frames);
        }
    }

    /// Writes the JSON Lines clip-features format, one frame per line.
    /// Values are written with 17 significant digits so they round-trip.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (scene, objects) in self.scenes.iter().zip(&self.objects) {
            write!(
                out,
                "{{\"clip_id\":{},\"frame\":{},\"scene\":{},\"objects\":[",
                serde_json::to_string(&self.clip_id)?,
                scene.frame,
                number_list(&scene.vector)
            )
            .unwrap();
            for (j, o) in objects.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(
                    out,
                    "{{\"box\":{},\"feat\":{}}}",
                    number_list(&o.bbox.to_array()),
                    number_list(&o.vector)
                )
                .unwrap();
            }
            out.push_str("]}\n");
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn number_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    format!("[{}]", parts.join(","))
}

/// Expected widths and limits for [`load_features`].
#[derive(Clone, Copy, Debug)]
pub struct FeatureLimits {
    pub max_frames: usize,
    pub slots: usize,
    pub scene_dim: usize,
    pub object_dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    clip_id: String,
    frame: usize,
    scene: Vec<f64>,
    objects: Vec<ObjectRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    feat: Vec<f64>,
}

/// Parses a clip-features file, keeping the last `max_frames` frames.
pub fn load_features(path: &Path, limits: FeatureLimits) -> Result<ClipFeatures> {
    let text = fs::read_to_string(path)?;
    parse_features(&text, path, limits)
}

pub(crate) fn parse_features(text: &str, path: &Path, limits: FeatureLimits) -> Result<ClipFeatures> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut clip_id: Option<String> = None;
    let mut scenes = Vec::new();
    let mut objects = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
        match &clip_id {
            None => clip_id = Some(rec.clip_id.clone()),
            Some(id) if *id != rec.clip_id => {
                return Err(err(line, format!("clip_id `{}` differs from `{id}`", rec.clip_id)));
            }
            Some(_) => {}
        }
        if rec.frame == 0 {
            return Err(err(line, "field `frame`: frame indices start at 1".into()));
        }
        if let Some(prev) = scenes.last().map(|s: &SceneFeature| s.frame) {
            if rec.frame != prev + 1 {
                return Err(err(line, format!("field `frame`: {} does not follow {prev}", rec.frame)));
            }
        }
        if rec.scene.len() != limits.scene_dim {
            return Err(err(
                line,
                format!("field `scene`: width {} expected {}", rec.scene.len(), limits.scene_dim),
            ));
        }
        if rec.objects.len() != limits.slots {
            return Err(err(
                line,
                format!("field `objects`: {} objects expected {}", rec.objects.len(), limits.slots),
            ));
        }
        let mut frame_objects = Vec::with_capacity(limits.slots);
        for (j, o) in rec.objects.into_iter().enumerate() {
            if o.feat.len() != limits.object_dim {
                return Err(err(
                    line,
                    format!("field `objects[{j}].feat`: width {} expected {}", o.feat.len(), limits.object_dim),
                ));
            }
            let [x0, y0, x1, y1] = o.bbox;
            let bbox = BoundingBox::new(x0, y0, x1, y1)
                .map_err(|e| err(line, format!("field `objects[{j}].box`: {e}")))?;
            frame_objects.push(ObjectFeature {
                frame: rec.frame,
                slot: j + 1,
                vector: o.feat,
                bbox,
            });
        }
        scenes.push(SceneFeature {
            frame: rec.frame,
            vector: rec.scene,
        });
        objects.push(frame_objects);
    }
    let Some(clip_id) = clip_id else {
        return Err(err(0, "no frames".into()));
    };
    let mut clip = ClipFeatures {
        clip_id,
        scenes,
        objects,
    };
    clip.truncate_front(limits.max_frames);
    Ok(clip)
}
