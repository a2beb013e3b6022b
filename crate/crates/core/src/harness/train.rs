use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::checkpoint::{load_params, save_params};
use super::config::RunConfig;
use super::dataset::Dataset;
use super::flops::estimate_flops;
use super::metrics::{rank_of, EvalPoint, EvalReport, LossPoint, MetricReport};
use crate::error::{Error, Result};
use crate::heads::{batch_loss, build_model, LossBundle, Model, PreparedExample};
use crate::numerics::{adam_step, dot, OptimizerState, ParamGrads, SeededRng, Tape};
use crate::text::{apply_mlm_mask, build_vocab, encode_candidate, tokenize, MaskingConfig, TokenSequence, Vocab};

pub const CHECKPOINT_FILE: &str = "checkpoint.cmvt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";

pub struct TrainOutcome {
    pub model: Model,
    pub vocab: Vocab,
    pub report: MetricReport,
    pub final_eval: Option<EvalReport>,
}

/// Model input tokens of every item.
pub fn input_tokens(model: &Model, vocab: &Vocab, data: &Dataset) -> Result<Vec<TokenSequence>> {
    data.items
        .iter()
        .map(|it| model.input_tokens(&tokenize(&it.context, vocab, model.config.max_text_len)?))
        .collect()
}

/// Masks each item of `batch` with `rng`.
pub fn prepare_batch<'a>(
    data: &'a Dataset,
    tokens: &[TokenSequence],
    batch: &[usize],
    vocab: &Vocab,
    masking: MaskingConfig,
    rng: &mut SeededRng,
) -> Vec<PreparedExample<'a>> {
    batch
        .iter()
        .map(|&i| {
            let (tokens, plan) = apply_mlm_mask(&tokens[i], vocab, rng, masking);
            let item = &data.items[i];
            PreparedExample {
                tokens,
                plan,
                clip: item.clip.as_ref(),
                future: &item.future,
            }
        })
        .collect()
}

/// Loss and parameter gradients of one prepared batch.
pub fn loss_and_grads(
    model: &Model,
    vocab: &Vocab,
    batch: &[PreparedExample<'_>],
    config: &RunConfig,
) -> Result<(LossBundle, ParamGrads)> {
    let mut tape = Tape::new(&model.params);
    let (total, bundle) = batch_loss(&mut tape, model, vocab, batch, config.loss_weights)?;
    tape.check_finite()?;
    let grads = tape.backward(total)?.param_grads(&model.params);
    Ok((bundle, grads))
}

fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

fn nonfinite_group(model: &Model, grads: &ParamGrads) -> Option<String> {
    grads
        .iter()
        .find(|(_, g)| !g.is_finite())
        .map(|(id, _)| model.params.name(id).to_string())
}

/// Seeded training loop with periodic evaluation. Writes the checkpoint,
/// vocabulary, config and report into `out` when given.
pub fn train(
    config: &RunConfig,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    vocab: Option<Vocab>,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() && config.steps > 0 {
        return Err(Error::EmptyCorpus);
    }
    let vocab = match vocab {
        Some(v) => v,
        None => build_vocab(&train_set.corpus(), config.vocab_min_count)?,
    };
    let mut model = build_model(&config.model, vocab.len(), config.seed)?;
    if let Some(path) = &config.data.checkpoint {
        load_params(&mut model.params, path)?;
    }
    let tokens = input_tokens(&model, &vocab, train_set)?;
    let root = SeededRng::new(config.seed);
    let mut order_rng = root.fork(100);
    let mut mask_rng = root.fork(101);
    let masking = MaskingConfig::with_select_p(config.mlm_select_p);
    let mut optimizer = OptimizerState::new(&model.params, config.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.steps as usize);
    let mut checkpoints = Vec::new();
    let mut clamped_rows = 0;
    let mut final_eval = None;
    let run_eval = |model: &Model, step: u64, checkpoints: &mut Vec<EvalPoint>| -> Result<Option<EvalReport>> {
        match eval_set {
            Some(e) => {
                let r = evaluate(model, &vocab, e)?;
                checkpoints.push(EvalPoint {
                    step,
                    r_at_1: r.r_at_1,
                    r_at_5: r.r_at_5,
                });
                Ok(Some(r))
            }
            None => Ok(None),
        }
    };

    let started = Instant::now();
    for step in 1..=config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(order.len()) {
            if cursor == order.len() {
                order_rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let prepared = prepare_batch(train_set, &tokens, &batch, &vocab, masking, &mut mask_rng);
        let (bundle, grads) = loss_and_grads(&model, &vocab, &prepared, config).map_err(|e| match e {
            Error::NonFinite(op) => Error::Diverged {
                step: step as usize,
                detail: format!("non-finite value in forward pass ({op})"),
            },
            other => other,
        })?;
        if !bundle.total.is_finite() {
            return Err(Error::Diverged {
                step: step as usize,
                detail: format!("loss is {} (nup {}, mlm {})", bundle.total, bundle.nup, bundle.mlm),
            });
        }
        if let Some(name) = nonfinite_group(&model, &grads) {
            return Err(Error::Diverged {
                step: step as usize,
                detail: format!("non-finite gradient in group `{}` (parameter `{name}`)", group_of(&name)),
            });
        }
        clamped_rows += bundle.clamped;
        losses.push(LossPoint {
            step,
            nup: bundle.nup,
            mlm: bundle.mlm,
            total: bundle.total,
        });
        adam_step(&mut model.params, &grads, &mut optimizer, config.schedule.lr_at_step(step))?;
        if config.eval_every > 0 && step % config.eval_every == 0 && step != config.steps {
            run_eval(&model, step, &mut checkpoints)?;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(r) = run_eval(&model, config.steps, &mut checkpoints)? {
        final_eval = Some(r);
    }
    let report = MetricReport {
        variant: config.model.variant.to_string(),
        checkpoints,
        losses,
        steps_per_second: if elapsed > 0.0 { config.steps as f64 / elapsed } else { 0.0 },
        flops: estimate_flops(&config.model),
        clamped_rows,
        config: config.clone(),
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        save_params(&model.params, &dir.join(CHECKPOINT_FILE))?;
        vocab.write(&dir.join(VOCAB_FILE))?;
        fs::write(dir.join(CONFIG_FILE), config.to_json())?;
        fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(TrainOutcome {
        model,
        vocab,
        report,
        final_eval,
    })
}

/// Pooled context embedding of one item.
fn pooled(model: &Model, tokens: &TokenSequence, item: &super::dataset::DataItem) -> Result<Vec<f64>> {
    let mut tape = Tape::new(&model.params);
    let out = model.forward(&mut tape, tokens, item.clip.as_ref())?;
    tape.check_finite()?;
    Ok(tape.value(out.pooled).data().to_vec())
}

/// R@1 and R@5 over every item's candidate set. Each distinct candidate
/// string is embedded once.
pub fn evaluate(model: &Model, vocab: &Vocab, data: &Dataset) -> Result<EvalReport> {
    let tokens = input_tokens(model, vocab, data)?;
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut ranks = Vec::with_capacity(data.len());
    for (item, seq) in data.items.iter().zip(&tokens) {
        let cands = item
            .candidates
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("clip `{}` has no candidate set", item.clip_id)))?;
        for u in &cands.utterances {
            if !cache.contains_key(u.as_str()) {
                let mut tape = Tape::new(&model.params);
                let v = encode_candidate(&mut tape, vocab, u, &model.candidate)?;
                tape.check_finite()?;
                cache.insert(u, tape.value(v).data().to_vec());
            }
        }
        let p = pooled(model, seq, item)?;
        let scores: Vec<f64> = cands.utterances.iter().map(|u| dot(&p, &cache[u.as_str()])).collect();
        ranks.push(rank_of(&scores, cands.true_index)?);
    }
    Ok(EvalReport::from_ranks(ranks))
}

/// Restores a model written by [`train`] from `dir`.
pub fn load_trained(config: &RunConfig, dir: &Path) -> Result<(Model, Vocab)> {
    let vocab = Vocab::read(&dir.join(VOCAB_FILE))?;
    let mut model = build_model(&config.model, vocab.len(), config.seed)?;
    load_params(&mut model.params, &dir.join(CHECKPOINT_FILE))?;
    Ok((model, vocab))
}
