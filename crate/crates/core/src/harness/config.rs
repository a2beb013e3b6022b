use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SegmentOptions, SyntheticSpec};
use crate::error::{Error, Result};
use crate::heads::{LossWeights, ModelConfig};
use crate::numerics::{AdamConfig, LrSchedule};

/// Input files of a run. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub transcripts: Option<PathBuf>,
    pub train_examples: Option<PathBuf>,
    pub eval_examples: Option<PathBuf>,
    pub eval_candidates: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
}

impl DataPaths {
    fn all(&self) -> [(&'static str, &Option<PathBuf>); 6] {
        [
            ("transcripts", &self.transcripts),
            ("train_examples", &self.train_examples),
            ("eval_examples", &self.eval_examples),
            ("eval_candidates", &self.eval_candidates),
            ("checkpoint", &self.checkpoint),
            ("vocab", &self.vocab),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub batch_size: usize,
    pub coords: usize,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            coords: 200,
            step: 3e-3,
        }
    }
}

/// Everything a run needs, as read from the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub steps: u64,
    /// Evaluate every this many steps; 0 evaluates only at the end.
    pub eval_every: u64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub mlm_select_p: f64,
    /// Candidates per example when `segment` samples evaluation pools.
    pub candidates: usize,
    pub vocab_min_count: usize,
    pub segment: SegmentOptions,
    pub synthetic: SyntheticSpec,
    pub synth_train: usize,
    pub synth_eval: usize,
    pub gradcheck: GradCheckConfig,
    pub data: DataPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 32,
            steps: 2000,
            eval_every: 0,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            mlm_select_p: 0.15,
            candidates: 100,
            vocab_min_count: 1,
            segment: SegmentOptions::default(),
            synthetic: SyntheticSpec::default(),
            synth_train: 2000,
            synth_eval: 500,
            gradcheck: GradCheckConfig::default(),
            data: DataPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mlm_select_p) {
            return Err(Error::Config(format!("mlm_select_p {} outside [0, 1]", self.mlm_select_p)));
        }
        let w = self.loss_weights;
        if !(w.nup.is_finite() && w.mlm.is_finite() && w.nup >= 0.0 && w.mlm >= 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.candidates == 0 {
            return Err(Error::Config("candidates must be positive".into()));
        }
        if self.gradcheck.batch_size == 0 || !(self.gradcheck.step > 0.0) {
            return Err(Error::Config("gradcheck needs a positive batch size and step".into()));
        }
        Ok(())
    }

    /// Fails with a data error naming the first configured path that is
    /// missing.
    pub fn check_paths(&self) -> Result<()> {
        for (name, path) in self.data.all() {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{name} file {} does not exist", p.display()),
                    )));
                }
            }
        }
        Ok(())
    }

    /// Toy configuration used by gradient checks.
    pub fn gradcheck_toy() -> Self {
        let mut c = RunConfig::default();
        c.model.dim = 16;
        c.model.heads = 2;
        c.model.text_layers = 1;
        c.model.ffn_dim = 32;
        c.model.max_text_len = 12;
        c.model.max_frames = 3;
        c.model.slots = 2;
        c.model.scene_dim = 6;
        c.model.object_dim = 5;
        c.model.fusion_depth = 2;
        c.synthetic.frames_per_clip = 3;
        c.synthetic.slots = 2;
        c.synthetic.scene_dim = 6;
        c.synthetic.object_dim = 5;
        c.synthetic.sigma = 0.5;
        c.mlm_select_p = 0.3;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::gradcheck_toy();
        c.data.vocab = Some("v.txt".into());
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 7, "model": {"fusion_depth": 4}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.fusion_depth, 4);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.schedule.warmup_steps, 50);
    }

    #[test]
    fn bad_fields_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"sed": 7}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"batch_size": 0}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"model": {"variant": "bimodal"}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_paths_are_reported() {
        let mut c = RunConfig::default();
        c.data.eval_examples = Some("/nonexistent/e.jsonl".into());
        let err = c.check_paths().unwrap_err();
        assert!(err.to_string().contains("eval_examples"));
        assert_eq!(err.kind(), crate::ErrorKind::Data);
    }
}
