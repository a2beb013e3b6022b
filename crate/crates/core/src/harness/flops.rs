use serde::{Deserialize, Serialize};

use crate::heads::ModelConfig;

/// Multiply-accumulates of one TRM block with `q` queries over `k` keys.
pub fn trm_macs(q: u64, k: u64, d: u64, f: u64) -> u64 {
    (q + 2 * k + q) * d * d + 2 * q * k * d + 2 * q * d * f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub visual_tokens: u64,
    pub text_encoder: u64,
    pub visual_combine: u64,
    pub compact_extraction: u64,
    pub fusion: u64,
    pub total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub with_compact: FlopBreakdown,
    pub without_compact: FlopBreakdown,
    /// `1 - with / without`.
    pub reduction: f64,
}

fn breakdown(c: &ModelConfig, compact: bool) -> FlopBreakdown {
    let d = c.dim as u64;
    let f = c.ffn_dim as u64;
    let w = c.max_text_len as u64;
    let frames = c.max_frames as u64;
    let l = c.slots as u64;
    let objects = frames * l;
    let text_encoder = c.text_layers as u64 * trm_macs(w, w, d, f);
    let visual_combine = objects * ((c.object_dim + c.scene_dim) as u64 * d + d * d + 4 * d);
    let (visual_tokens, compact_extraction) = if compact {
        let cost = if frames == 1 {
            2 * l * d * d
        } else {
            trm_macs(l, (frames - 1) * l, d, d)
        };
        (l, cost)
    } else {
        (objects, 0)
    };
    let v = visual_tokens;
    let block = trm_macs(v, w, d, f) + trm_macs(v, v, d, f) + trm_macs(w, v, d, f) + trm_macs(w, w, d, f);
    let fusion = c.fusion_depth as u64 * block;
    FlopBreakdown {
        visual_tokens,
        text_encoder,
        visual_combine,
        compact_extraction,
        fusion,
        total: text_encoder + visual_combine + compact_extraction + fusion,
    }
}

/// Analytic per-example MAC counts of the co-attentional model with and
/// without compact feature extraction.
pub fn estimate_flops(config: &ModelConfig) -> FlopsReport {
    let with_compact = breakdown(config, true);
    let without_compact = breakdown(config, false);
    FlopsReport {
        with_compact,
        without_compact,
        reduction: 1.0 - with_compact.total as f64 / without_compact.total as f64,
    }
}
