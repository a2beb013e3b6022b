//! Run configuration, training and evaluation loops, recall metrics,
//! analytic cost estimates, gradient checks and the parameter file format.

mod checkpoint;
mod config;
mod corpus;
mod dataset;
mod flops;
mod gradcheck;
mod metrics;
mod train;

pub use checkpoint::{decode_params, encode_params, load_params, restore_params, save_params, FORMAT_VERSION};
pub use config::{DataPaths, GradCheckConfig, RunConfig};
pub use corpus::{configured_vocab, load_eval_data, load_run_data, segment_file, synthetic_splits};
pub use dataset::{DataItem, Dataset};
pub use flops::{estimate_flops, trm_macs, FlopBreakdown, FlopsReport};
pub use gradcheck::run_gradcheck;
pub use metrics::{rank_of, recall_at_k, EvalPoint, EvalReport, LossPoint, MetricReport};
pub use train::{
    evaluate, input_tokens, load_trained, loss_and_grads, prepare_batch, train, TrainOutcome, CHECKPOINT_FILE,
    CONFIG_FILE, REPORT_FILE, VOCAB_FILE,
};
