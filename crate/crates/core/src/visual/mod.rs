//! Precomputed scene/object feature ingestion, combined spatiotemporal
//! features, and compact feature-set extraction.

mod encode;
mod features;

pub use encode::{
    combine_clip, combine_features, compact_extract, positional_encoding, scene_tokens, sinusoid, AnchorPolicy,
    CompactSet, VisualParams,
};
pub use features::{load_features, BoundingBox, ClipFeatures, FeatureLimits, ObjectFeature, SceneFeature};
