use super::config::RunConfig;
use super::dataset::Dataset;
use super::train::{input_tokens, loss_and_grads, prepare_batch};
use crate::data::synth_generate;
use crate::error::{Error, Result};
use crate::heads::{batch_loss, build_model};
use crate::numerics::{finite_diff_check, sample_coords, GradCheckReport, ParamStore, SeededRng, Tape};
use crate::text::{build_vocab, MaskingConfig};

/// Central-difference check of the full training loss on a small
/// synthetic batch, over sampled coordinates covering every parameter
/// tensor.
pub fn run_gradcheck(config: &RunConfig) -> Result<GradCheckReport> {
    config.validate()?;
    let gc = &config.gradcheck;
    let mut spec = config.synthetic.clone();
    spec.frames_per_clip = config.model.max_frames;
    spec.slots = config.model.slots;
    spec.scene_dim = config.model.scene_dim;
    spec.object_dim = config.model.object_dim;
    spec.candidates = spec.candidates.min(spec.topics);
    let root = SeededRng::new(config.seed);
    let data = Dataset::from_synthetic(&synth_generate(&spec, gc.batch_size, &root.fork(200))?);
    let vocab = build_vocab(&data.corpus(), 1)?;
    let model = build_model(&config.model, vocab.len(), config.seed)?;
    let tokens = input_tokens(&model, &vocab, &data)?;
    let batch: Vec<usize> = (0..data.len()).collect();
    let masking = MaskingConfig::with_select_p(config.mlm_select_p);
    let mut mask_rng = root.fork(201);
    let mut prepared = prepare_batch(&data, &tokens, &batch, &vocab, masking, &mut mask_rng);
    // Redraw until some position is masked so the MLM head is exercised.
    for _ in 0..100 {
        if config.mlm_select_p == 0.0 || prepared.iter().any(|p| !p.plan.is_empty()) {
            break;
        }
        prepared = prepare_batch(&data, &tokens, &batch, &vocab, masking, &mut mask_rng);
    }
    let (_, analytic) = loss_and_grads(&model, &vocab, &prepared, config)?;
    let loss = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(p);
        let (_, b) = batch_loss(&mut tape, &model, &vocab, &prepared, config.loss_weights)?;
        tape.check_finite()?;
        Ok(b.total)
    };
    let coords = sample_coords(&model.params, gc.coords, &mut root.fork(202));
    let report = finite_diff_check(loss, &model.params, &analytic, &coords, gc.step)?;
    if !report.max_rel_error.is_finite() {
        return Err(Error::NonFinite("gradient check".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_model_passes() {
        let r = run_gradcheck(&RunConfig::gradcheck_toy()).unwrap();
        assert!(r.coords_checked >= 200);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
