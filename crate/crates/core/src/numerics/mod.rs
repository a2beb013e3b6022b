//! Dense tensors, reverse-mode differentiation, optimisation and seeded
//! randomness.

mod attention;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod rng;
mod schedule;
mod tape;
mod tensor;

pub use attention::{attend, attention_weights, layer_norm, scaled_dot_attention};
pub use gradcheck::{finite_diff_check, relative_error, sample_coords, GradCheckReport, WorstCoord};
pub use layers::{LayerNorm, Linear, Mlp, LN_EPS};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use rng::SeededRng;
pub use schedule::LrSchedule;
pub use tape::{Gradients, Tape, Var, PROB_FLOOR};
pub use tensor::{dot, Tensor};
