use std::collections::HashMap;
use std::path::Path;

use crate::data::{read_jsonl, resolve_relative, CandidateRecord, FupExample, SyntheticDataset};
use crate::error::{Error, Result};
use crate::heads::{CandidateSet, ModelConfig};
use crate::visual::{load_features, ClipFeatures, FeatureLimits};

/// One example as the harness consumes it.
#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub clip_id: String,
    pub context: String,
    pub future: String,
    pub clip: Option<ClipFeatures>,
    pub candidates: Option<CandidateSet>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<DataItem>,
}

impl Dataset {
    pub fn from_synthetic(data: &SyntheticDataset) -> Self {
        let items = data
            .examples
            .iter()
            .map(|ex| DataItem {
                clip_id: ex.example.clip_id.clone(),
                context: ex.example.context_text(),
                future: ex.example.future.clone(),
                clip: Some(ex.clip.clone()),
                candidates: Some(ex.candidates.clone()),
            })
            .collect();
        Self { items }
    }

    /// Reads an examples file and, optionally, the matching candidates
    /// file. Feature files are opened only when the variant uses them.
    pub fn load(examples: &Path, candidates: Option<&Path>, model: &ModelConfig) -> Result<Self> {
        let records: Vec<FupExample> = read_jsonl(examples)?;
        let mut pools: HashMap<String, CandidateSet> = HashMap::new();
        if let Some(path) = candidates {
            let recs: Vec<CandidateRecord> = read_jsonl(path)?;
            for (i, r) in recs.into_iter().enumerate() {
                let set = CandidateSet::new(r.candidates, r.true_index).map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                pools.insert(r.clip_id, set);
            }
        }
        let limits = FeatureLimits {
            max_frames: model.max_frames,
            slots: model.slots,
            scene_dim: model.scene_dim,
            object_dim: model.object_dim,
        };
        let mut items = Vec::with_capacity(records.len());
        for (i, ex) in records.into_iter().enumerate() {
            let clip = if model.variant.uses_visual() {
                let Some(rel) = &ex.features else {
                    return Err(Error::Parse {
                        path: examples.to_owned(),
                        line: i + 1,
                        msg: format!("field `features`: variant {} needs clip features", model.variant),
                    });
                };
                Some(load_features(&resolve_relative(examples, rel), limits)?)
            } else {
                None
            };
            let candidates = match (candidates, pools.remove(&ex.clip_id)) {
                (Some(path), None) => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line: 0,
                        msg: format!("no candidates for clip `{}`", ex.clip_id),
                    })
                }
                (_, set) => set,
            };
            items.push(DataItem {
                clip_id: ex.clip_id.clone(),
                context: ex.context_text(),
                future: ex.future,
                clip,
                candidates,
            });
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Contexts and future utterances, for vocabulary construction.
    pub fn corpus(&self) -> Vec<&str> {
        self.items
            .iter()
            .flat_map(|it| [it.context.as_str(), it.future.as_str()])
            .collect()
    }
}
