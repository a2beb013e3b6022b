//! End-to-end acceptance checks. Runs as a plain binary so every
//! criterion prints one PASS/FAIL line; pass criterion ids (`A1`, `A4`, ...)
//! as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use comvt::data::{segment_clips, synth_generate, SegmentOptions, TimedSentence, Transcript};
use comvt::harness::{
    estimate_flops, evaluate, load_trained, recall_at_k, run_gradcheck, synthetic_splits, train, Dataset, RunConfig,
};
use comvt::heads::{build_model, in_batch_nup_loss, pool_nup_loss, qa_input_text, qa_rank, AnswerPool, Variant};
use comvt::text::{apply_mlm_mask, build_vocab, tokenize, MaskAction, MaskingConfig, Vocab, CLS, SEP};
use comvt::visual::{combine_clip, compact_extract};
use comvt::{SeededRng, Tape, Tensor};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn a1_vision_beats_text() -> Check {
    let started = Instant::now();
    let mut config = RunConfig::default();
    config.model.dim = 32;
    config.model.heads = 4;
    config.model.text_layers = 1;
    config.model.ffn_dim = 64;
    config.model.max_text_len = 16;
    config.model.max_frames = 4;
    config.model.slots = 2;
    config.model.scene_dim = 16;
    config.model.object_dim = 16;
    config.model.fusion_depth = 2;
    config.synthetic.topics = 10;
    config.synthetic.candidates = 10;
    config.synthetic.sigma = 0.1;
    config.synthetic.leak = false;
    config.synthetic.frames_per_clip = 4;
    config.synthetic.slots = 2;
    config.synthetic.scene_dim = 16;
    config.synthetic.object_dim = 16;
    config.synth_train = 2000;
    config.synth_eval = 500;
    config.batch_size = 32;
    config.steps = 800;
    config.seed = 11;
    let (train_split, eval_split) = synthetic_splits(&config).map_err(|e| e.to_string())?;
    let train_set = Dataset::from_synthetic(&train_split);
    let eval_set = Dataset::from_synthetic(&eval_split);

    let mut r1 = Vec::new();
    for variant in [Variant::TextOnly, Variant::Comvt] {
        let mut c = config.clone();
        c.model.variant = variant;
        let out = train(&c, &train_set, Some(&eval_set), None, None).map_err(|e| e.to_string())?;
        r1.push(out.final_eval.expect("eval set given").r_at_1);
    }
    let secs = started.elapsed().as_secs_f64();
    let detail = format!(
        "text-only R@1 {:.3}, comvt R@1 {:.3} after {} steps, {:.0} s",
        r1[0], r1[1], config.steps, secs
    );
    ensure((0.05..=0.20).contains(&r1[0]), || format!("text-only out of range: {detail}"))?;
    ensure(r1[1] >= 0.90, || format!("comvt below 0.90: {detail}"))?;
    ensure(secs <= 600.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn a2_gradient_fidelity() -> Check {
    let started = Instant::now();
    let config = RunConfig::gradcheck_toy();
    let m = &config.model;
    ensure(
        m.variant == Variant::Comvt
            && (m.dim, m.slots, m.max_frames, m.max_text_len, m.fusion_depth) == (16, 2, 3, 12, 2)
            && config.gradcheck.batch_size == 2,
        || "toy configuration drifted".into(),
    )?;
    let report = run_gradcheck(&config).map_err(|e| e.to_string())?;
    let groups = build_model(m, 40, 0).map_err(|e| e.to_string())?.params.len();
    let secs = started.elapsed().as_secs_f64();
    let detail = format!(
        "max rel error {:.2e} over {} coords in {}/{} tensors, {:.1} s",
        report.max_rel_error, report.coords_checked, report.groups_checked, groups, secs
    );
    ensure(report.max_rel_error < 1e-4, || detail.clone())?;
    ensure(report.coords_checked >= 200, || detail.clone())?;
    ensure(report.groups_checked == groups, || detail.clone())?;
    ensure(secs <= 120.0, || detail.clone())?;
    Ok(detail)
}

fn a3_compact_is_cheaper() -> Check {
    let mut reductions = Vec::new();
    for s in [1, 2, 4] {
        let mut c = RunConfig::default().model;
        c.fusion_depth = s;
        let f = estimate_flops(&c);
        ensure(f.with_compact.total < f.without_compact.total, || {
            format!("S={s}: {} >= {}", f.with_compact.total, f.without_compact.total)
        })?;
        reductions.push(f.reduction);
    }
    ensure(reductions[2] > reductions[1], || format!("reductions {reductions:?}"))?;
    Ok(format!(
        "reduction S=1 {:.1}%, S=2 {:.1}%, S=4 {:.1}%",
        100.0 * reductions[0],
        100.0 * reductions[1],
        100.0 * reductions[2]
    ))
}

fn a4_ranking_oracle() -> Check {
    let mut rng = SeededRng::new(4);
    let mut tied = 0;
    let mut checks = 0u64;
    for n in 0..10_000 {
        let m = 1 + rng.below(100);
        let scores: Vec<f64> = if n % 2 == 0 {
            (0..m).map(|_| rng.below(5) as f64).collect()
        } else {
            (0..m).map(|_| rng.normal()).collect()
        };
        let t = rng.below(m);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let rank = order.iter().position(|&i| i == t).unwrap() + 1;
        if scores.iter().enumerate().any(|(i, &s)| i != t && s == scores[t]) {
            tied += 1;
        }
        for k in 1..=m {
            let got = recall_at_k(&scores, t, k).map_err(|e| e.to_string())?;
            ensure(got == (rank <= k), || format!("vector {n}: k={k} rank {rank} got {got}"))?;
            checks += 1;
        }
    }
    ensure(tied > 1000, || format!("only {tied} vectors with a tied truth"))?;
    Ok(format!("10000 vectors, {checks} (vector, k) pairs, {tied} with ties at the truth"))
}

fn a5_in_batch_equivalence() -> Check {
    let mut rng = SeededRng::new(5);
    let mut worst: f64 = 0.0;
    for b in [2, 4, 8] {
        for trial in 0..50 {
            let d = 3 + trial % 7;
            let scale = if trial % 5 == 0 { 3.0 } else { 1.0 };
            let pooled: Vec<Vec<f64>> = (0..b).map(|_| (0..d).map(|_| scale * rng.normal()).collect()).collect();
            let cands: Vec<Vec<f64>> = (0..b).map(|_| (0..d).map(|_| scale * rng.normal()).collect()).collect();

            let mut oracle = 0.0;
            for i in 0..b {
                let row: Vec<f64> = cands
                    .iter()
                    .map(|c| pooled[i].iter().zip(c).map(|(x, y)| x * y).sum())
                    .collect();
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                oracle += lse - row[i];
            }
            oracle /= b as f64;

            let store = comvt::ParamStore::new();
            let mut tape = Tape::new(&store);
            let p = tape.constant(Tensor::from_rows(&pooled).unwrap());
            let c = tape.constant(Tensor::from_rows(&cands).unwrap());
            let loss = in_batch_nup_loss(&mut tape, p, c).map_err(|e| e.to_string())?;
            let targets: Vec<usize> = (0..b).collect();
            let pool = pool_nup_loss(&mut tape, p, c, &targets).map_err(|e| e.to_string())?;
            ensure(tape.clamped_rows() == 0, || format!("B={b} trial {trial}: probability floor hit"))?;
            for v in [tape.value(loss).item(), tape.value(pool).item()] {
                let err = (v - oracle).abs();
                worst = worst.max(err);
                ensure(err <= 1e-10, || format!("B={b} trial {trial}: {v} vs oracle {oracle}"))?;
            }
        }
    }
    Ok(format!("B in {{2,4,8}}, 150 batches, max abs diff {worst:.1e}"))
}

fn sentence(text: &str, start: f64, end: f64) -> TimedSentence {
    TimedSentence::new(text, start, end)
}

fn a6_segmentation() -> Check {
    let t = Transcript {
        video_id: "v".into(),
        sentences: vec![
            sentence("a", 0.0, 3.0),
            sentence("b", 3.0, 6.0),
            sentence("c", 6.0, 12.0),
            sentence("d", 12.0, 13.0),
        ],
    };
    let got = segment_clips(&t, SegmentOptions::default());
    let shape: Vec<(Vec<&str>, &str, f64, f64)> = got
        .iter()
        .map(|e| {
            let ctx = e.context.iter().map(|s| s.text.as_str()).collect();
            (ctx, e.future.as_str(), e.start_s, e.end_s)
        })
        .collect();
    let want = vec![(vec!["a", "b"], "c", 0.0, 6.0), (vec!["c"], "d", 6.0, 12.0)];
    ensure(shape == want, || format!("hand trace mismatch: {shape:?}"))?;

    let mut rng = SeededRng::new(6);
    let mut emitted = 0;
    for n in 0..1000 {
        let count = rng.below(12);
        let mut clock = 0.0;
        let sentences: Vec<TimedSentence> = (0..count)
            .map(|i| {
                clock += if rng.below(3) == 0 { 0.0 } else { rng.uniform() * 2.0 };
                let start = clock;
                clock += 0.2 + rng.uniform() * 6.0;
                sentence(&format!("s{i}"), start, clock)
            })
            .collect();
        let t = Transcript {
            video_id: format!("t{n}"),
            sentences,
        };
        let s = &t.sentences;
        // Independent oracle: shortest backward window whose span exceeds 5 s.
        let mut want = Vec::new();
        for k in 1..s.len() {
            let end = s[k - 1].end_s;
            if let Some(first) = (0..k).rev().find(|&j| end - s[j].start_s > 5.0) {
                want.push((first, k));
            }
        }
        let got = segment_clips(&t, SegmentOptions::default());
        ensure(got.len() == want.len(), || format!("transcript {n}: {} vs {}", got.len(), want.len()))?;
        for (e, &(first, k)) in got.iter().zip(&want) {
            ensure(e.duration() > 5.0, || format!("transcript {n}: span {}", e.duration()))?;
            ensure(e.future == s[k].text, || format!("transcript {n}: future {}", e.future))?;
            ensure(e.context.as_slice() == &s[first..k], || format!("transcript {n}: context of future {k}"))?;
        }
        emitted += got.len();
    }
    Ok(format!("hand trace exact; 1000 random transcripts, {emitted} examples checked"))
}

fn a7_mlm_statistics() -> Check {
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let vocab = build_vocab(&words.iter().map(String::as_str).collect::<Vec<_>>(), 1).map_err(|e| e.to_string())?;
    let mut rng = SeededRng::new(7);
    let mut mask_rng = SeededRng::new(70);
    let (mut eligible, mut selected) = (0usize, 0usize);
    let (mut masked, mut random, mut unchanged) = (0usize, 0usize, 0usize);
    while selected < 10_000 {
        let len = rng.below(30);
        let text: Vec<String> = (0..len)
            .map(|_| {
                if rng.below(10) == 0 {
                    "oov".to_string()
                } else {
                    words[rng.below(words.len())].clone()
                }
            })
            .collect();
        let seq = tokenize(&text.join(" "), &vocab, 32).map_err(|e| e.to_string())?;
        let (out, plan) = apply_mlm_mask(&seq, &vocab, &mut mask_rng, MaskingConfig::default());
        for (pos, (&id, &real)) in seq.ids.iter().zip(&seq.mask).enumerate() {
            let special = Vocab::is_special(id);
            if real && !special {
                eligible += 1;
            }
            let action = plan.actions[pos];
            if action != MaskAction::Keep {
                ensure(real && !special, || format!("selected special or padding id {id} at {pos}"))?;
            } else {
                ensure(out.ids[pos] == id, || format!("kept position {pos} changed"))?;
            }
            match action {
                MaskAction::Keep => {}
                MaskAction::Mask => masked += 1,
                MaskAction::Random => random += 1,
                MaskAction::Unchanged => unchanged += 1,
            }
        }
        selected += plan.targets.len();
    }
    let frac = selected as f64 / eligible as f64;
    let split = [masked, random, unchanged].map(|c| c as f64 / selected as f64);
    let detail = format!(
        "{selected} selected of {eligible}: fraction {frac:.4}, split {:.3}/{:.3}/{:.3}",
        split[0], split[1], split[2]
    );
    ensure((frac - 0.15).abs() <= 0.01, || detail.clone())?;
    ensure(
        (split[0] - 0.8).abs() <= 0.02 && (split[1] - 0.1).abs() <= 0.02 && (split[2] - 0.1).abs() <= 0.02,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn small_config() -> RunConfig {
    let mut c = RunConfig::gradcheck_toy();
    c.synthetic.topics = 5;
    c.synthetic.candidates = 5;
    c.synth_train = 40;
    c.synth_eval = 20;
    c.batch_size = 8;
    c.steps = 10;
    c.seed = 8;
    c
}

fn a8_determinism() -> Check {
    let config = small_config();
    let (tr, ev) = synthetic_splits(&config).map_err(|e| e.to_string())?;
    let (tr, ev) = (Dataset::from_synthetic(&tr), Dataset::from_synthetic(&ev));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = train(&config, &tr, Some(&ev), None, Some(dir.path())).map_err(|e| e.to_string())?;
    let second = train(&config, &tr, Some(&ev), None, None).map_err(|e| e.to_string())?;
    let bits = |o: &comvt::harness::TrainOutcome| -> Vec<u64> {
        o.report.losses.iter().take(10).map(|l| l.total.to_bits()).collect()
    };
    ensure(bits(&first).len() == 10, || "fewer than 10 losses".into())?;
    ensure(bits(&first) == bits(&second), || "loss sequences differ".into())?;

    let before = evaluate(&first.model, &first.vocab, &ev).map_err(|e| e.to_string())?;
    let (model, vocab) = load_trained(&config, dir.path()).map_err(|e| e.to_string())?;
    let after = evaluate(&model, &vocab, &ev).map_err(|e| e.to_string())?;
    ensure(
        before.ranks == after.ranks
            && before.r_at_1.to_bits() == after.r_at_1.to_bits()
            && before.r_at_5.to_bits() == after.r_at_5.to_bits(),
        || format!("eval reports differ: {before:?} vs {after:?}"),
    )?;
    let same_params = first
        .model
        .params
        .iter()
        .zip(model.params.iter())
        .all(|((_, _, a), (_, _, b))| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    ensure(same_params, || "restored parameters differ".into())?;
    Ok(format!(
        "10 losses bitwise equal; reloaded eval R@1 {} R@5 {} identical",
        after.r_at_1, after.r_at_5
    ))
}

fn a9_degenerate_paths() -> Check {
    // Single-frame clips: no attention targets, compact set is g_proj(anchor).
    let mut c = small_config();
    c.model.max_frames = 1;
    c.synthetic.frames_per_clip = 1;
    let data = synth_generate(&c.synthetic, 3, &SeededRng::new(9)).map_err(|e| e.to_string())?;
    let data = Dataset::from_synthetic(&data);
    let vocab = build_vocab(&data.corpus(), 1).map_err(|e| e.to_string())?;
    let model = build_model(&c.model, vocab.len(), 9).map_err(|e| e.to_string())?;
    let item = &data.items[0];
    let clip = item.clip.as_ref().unwrap();
    let seq = tokenize(&item.context, &vocab, c.model.max_text_len).map_err(|e| e.to_string())?;
    let mut tape = Tape::new(&model.params);
    let out = model.forward(&mut tape, &seq, Some(clip)).map_err(|e| e.to_string())?;
    ensure(out.compact_weights.is_none(), || "single frame produced attention weights".into())?;
    ensure(tape.value(out.pooled).is_finite(), || "non-finite pooled output".into())?;
    let visual = model.visual.as_ref().unwrap();
    let grid = combine_clip(&mut tape, clip, visual).map_err(|e| e.to_string())?;
    let compact = compact_extract(&mut tape, grid, 1, c.model.slots, 1, visual).map_err(|e| e.to_string())?;
    let direct = visual.project.forward(&mut tape, grid);
    ensure(tape.shape(compact.features) == [c.model.slots, c.model.dim], || "compact set shape".into())?;
    ensure(tape.value(compact.features) == tape.value(direct), || "compact set is not g_proj(anchor)".into())?;

    // QA with no speech: the question alone is the text input.
    let c = small_config();
    let data = synth_generate(&c.synthetic, 3, &SeededRng::new(10)).map_err(|e| e.to_string())?;
    let data = Dataset::from_synthetic(&data);
    let question = "what do we use next";
    let mut corpus = data.corpus();
    corpus.push(question);
    let vocab = build_vocab(&corpus, 1).map_err(|e| e.to_string())?;
    let model = build_model(&c.model, vocab.len(), 10).map_err(|e| e.to_string())?;
    let text = qa_input_text(Some(""), question);
    ensure(text == question, || format!("question-only input was `{text}`"))?;
    let seq = tokenize(&text, &vocab, c.model.max_text_len).map_err(|e| e.to_string())?;
    ensure(seq.real_len() == question.split(' ').count() + 2, || "question tokens".into())?;
    let answers: Vec<&str> = data.items.iter().map(|it| it.future.as_str()).collect();
    let pool = AnswerPool::new(&answers).map_err(|e| e.to_string())?;
    let mut tape = Tape::new(&model.params);
    let out = model.forward(&mut tape, &seq, data.items[0].clip.as_ref()).map_err(|e| e.to_string())?;
    let ranked = qa_rank(&mut tape, &vocab, out.pooled, &pool, &model.candidate).map_err(|e| e.to_string())?;
    ensure(ranked.len() == pool.len(), || "ranking dropped answers".into())?;
    ensure(ranked.windows(2).all(|w| w[0].score >= w[1].score), || "ranking not descending".into())?;
    ensure(ranked.iter().all(|r| r.score.is_finite()), || "non-finite answer score".into())?;

    // Vision-only: exactly [CLS][SEP], independent of the transcript.
    let mut c = small_config();
    c.model.variant = Variant::VisionOnly;
    let model = build_model(&c.model, vocab.len(), 11).map_err(|e| e.to_string())?;
    let mut pooled = Vec::new();
    for context in ["", "completely different words here"] {
        let seq = model
            .input_tokens(&tokenize(context, &vocab, c.model.max_text_len).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(seq.ids == [CLS, SEP] && seq.mask == [true, true], || format!("input {:?}", seq.ids))?;
        let mut tape = Tape::new(&model.params);
        let out = model.forward(&mut tape, &seq, data.items[0].clip.as_ref()).map_err(|e| e.to_string())?;
        ensure(tape.shape(out.text)[0] == 2, || "text stream is not 2 tokens".into())?;
        pooled.push(tape.value(out.pooled).clone());
    }
    ensure(pooled[0] == pooled[1], || "vision-only output depends on the transcript".into())?;
    ensure(pooled[0].is_finite(), || "non-finite vision-only output".into())?;
    Ok(format!(
        "single-frame compact [{}x{}], question-only QA ranked {} answers, vision-only [CLS][SEP]",
        c.model.slots,
        c.model.dim,
        ranked.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("A1", a1_vision_beats_text),
        ("A2", a2_gradient_fidelity),
        ("A3", a3_compact_is_cheaper),
        ("A4", a4_ranking_oracle),
        ("A5", a5_in_batch_equivalence),
        ("A6", a6_segmentation),
        ("A7", a7_mlm_statistics),
        ("A8", a8_determinism),
        ("A9", a9_degenerate_paths),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, check) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("{id} PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL  {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
