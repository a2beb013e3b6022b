//! Transformer blocks and the two-stream co-attentional stack.

mod cotrm;
mod trm;

pub use cotrm::{cotrm_block, cotrm_stack, text_stream_only, CoTrmBlock, CoTrmParams, FusionMasks, FusionOutput};
pub use trm::{trm, trm_without_attention, TrmParams};
