//! Task heads, losses and the model-variant registry.

mod loss;
mod mlm;
mod model;
mod nsp;
mod nup;
mod qa;

pub use loss::{batch_loss, pool_nup_loss, LossBundle, LossWeights, PreparedExample};
pub use mlm::{batch_mlm_loss, mlm_loss};
pub use model::{build_model, ContextOutput, Model, ModelConfig, SingleStreamParams, Variant};
pub use nsp::{nsp_logits, nsp_loss, NspHead, COIN_NSP_CLASSES, CROSSTASK_NSP_CLASSES};
pub use nup::{in_batch_nup_loss, nup_logits, nup_loss, nup_probabilities, nup_scores, CandidateSet};
pub use qa::{qa_input_text, qa_rank, rank_order, AnswerPool, RankedAnswer};
