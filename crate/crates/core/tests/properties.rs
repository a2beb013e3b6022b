use comvt::data::{sample_candidates, segment_clips, SegmentOptions, TimedSentence, Transcript};
use comvt::harness::{decode_params, encode_params, rank_of, recall_at_k};
use comvt::heads::{nup_probabilities, rank_order};
use comvt::numerics::LrSchedule;
use comvt::text::{apply_mlm_mask, build_vocab, MaskAction, MaskingConfig, TokenSequence, Vocab, CLS, SEP};
use comvt::visual::VisualParams;
use comvt::{ParamStore, SeededRng, Tape, Tensor};
use proptest::prelude::*;

fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..max)
}

proptest! {
    #[test]
    fn nup_probabilities_form_a_distribution(
        pooled in prop::collection::vec(-3.0f64..3.0, 4),
        cands in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..12),
    ) {
        let p = nup_probabilities(&pooled, &cands).unwrap();
        prop_assert_eq!(p.len(), cands.len());
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let dots: Vec<f64> = cands.iter().map(|c| c.iter().zip(&pooled).map(|(a, b)| a * b).sum()).collect();
        let best = rank_order(&dots)[0];
        prop_assert!(p.iter().all(|&x| x <= p[best]));
    }

    #[test]
    fn recall_is_monotone_in_k(s in scores(60), t in 0usize..60) {
        let t = t % s.len();
        let rank = rank_of(&s, t).unwrap();
        prop_assert!((1..=s.len()).contains(&rank));
        let mut prev = false;
        for k in 1..=s.len() {
            let hit = recall_at_k(&s, t, k).unwrap();
            prop_assert!(hit || !prev);
            prop_assert_eq!(hit, rank <= k);
            prev = hit;
        }
        prop_assert!(recall_at_k(&s, t, s.len()).unwrap());
    }

    #[test]
    fn rank_is_shift_and_scale_invariant(s in scores(40), t in 0usize..40, shift in -10.0f64..10.0) {
        let t = t % s.len();
        let moved: Vec<f64> = s.iter().map(|x| 2.0 * x + shift).collect();
        prop_assert_eq!(rank_of(&s, t).unwrap(), rank_of(&moved, t).unwrap());
    }

    #[test]
    fn truncation_keeps_the_suffix(body in prop::collection::vec(5usize..100, 0..40), max_len in 3usize..20) {
        let seq = TokenSequence::from_body(&body, max_len).unwrap();
        prop_assert_eq!(seq.ids.len(), max_len);
        let real = seq.real_ids();
        prop_assert_eq!(real[0], CLS);
        prop_assert_eq!(*real.last().unwrap(), SEP);
        let kept = &real[1..real.len() - 1];
        prop_assert_eq!(kept.len(), body.len().min(max_len - 2));
        prop_assert_eq!(kept, &body[body.len() - kept.len()..]);
    }

    #[test]
    fn masking_touches_only_regular_tokens(
        body in prop::collection::vec(0usize..30, 0..25),
        seed in any::<u64>(),
        select_p in 0.0f64..1.0,
    ) {
        let words: Vec<String> = (0..25).map(|i| format!("w{i}")).collect();
        let vocab = build_vocab(&words.iter().map(String::as_str).collect::<Vec<_>>(), 1).unwrap();
        let body: Vec<usize> = body.into_iter().map(|i| i % vocab.len()).collect();
        let seq = TokenSequence::from_body(&body, 32).unwrap();
        let mut rng = SeededRng::new(seed);
        let (out, plan) = apply_mlm_mask(&seq, &vocab, &mut rng, MaskingConfig::with_select_p(select_p));
        prop_assert_eq!(out.mask, seq.mask.clone());
        prop_assert!(plan.targets.windows(2).all(|w| w[0].0 < w[1].0));
        for &(pos, id) in &plan.targets {
            prop_assert!(seq.mask[pos] && !Vocab::is_special(id));
            prop_assert_eq!(seq.ids[pos], id);
            prop_assert_ne!(plan.actions[pos], MaskAction::Keep);
        }
        for (pos, a) in plan.actions.iter().enumerate() {
            if *a == MaskAction::Keep || *a == MaskAction::Unchanged {
                prop_assert_eq!(out.ids[pos], seq.ids[pos]);
            }
            if *a == MaskAction::Random {
                prop_assert!(!Vocab::is_special(out.ids[pos]));
            }
        }
    }

    #[test]
    fn segmentation_is_deterministic_and_long_enough(
        gaps in prop::collection::vec((0.0f64..2.0, 0.1f64..7.0), 0..15),
        min_duration in 1.0f64..10.0,
    ) {
        let mut clock = 0.0;
        let sentences: Vec<TimedSentence> = gaps
            .iter()
            .enumerate()
            .map(|(i, &(gap, len))| {
                let start = clock + gap;
                clock = start + len;
                TimedSentence::new(format!("s{i}"), start, clock)
            })
            .collect();
        let t = Transcript { video_id: "v".into(), sentences };
        let opts = SegmentOptions { min_duration, keep_short_prefix: false };
        let a = segment_clips(&t, opts);
        prop_assert_eq!(&a, &segment_clips(&t, opts));
        for e in &a {
            prop_assert!(e.duration() > min_duration);
            let last = t.sentences.iter().position(|s| *s == *e.context.last().unwrap()).unwrap();
            prop_assert_eq!(&e.future, &t.sentences[last + 1].text);
        }
        let kept = segment_clips(&t, SegmentOptions { min_duration, keep_short_prefix: true });
        prop_assert_eq!(kept.len(), t.sentences.len().saturating_sub(1));
    }

    #[test]
    fn candidate_sets_hold_one_truth(pool_size in 1usize..30, m in 1usize..30, seed in any::<u64>()) {
        let pool: Vec<String> = (0..pool_size).map(|i| format!("u{}", i % 20)).collect();
        let distinct = pool.iter().filter(|u| *u != "u0").collect::<std::collections::HashSet<_>>().len();
        let got = sample_candidates("u0", &pool, m, &mut SeededRng::new(seed));
        if distinct < m - 1 {
            prop_assert!(got.is_err());
        } else {
            let set = got.unwrap();
            prop_assert_eq!(set.len(), m);
            prop_assert_eq!(set.truth(), "u0");
            let unique: std::collections::HashSet<_> = set.utterances.iter().collect();
            prop_assert_eq!(unique.len(), m);
        }
    }

    #[test]
    fn parameter_files_round_trip(
        tensors in prop::collection::vec(prop::collection::vec(any::<f64>(), 1..20), 0..6),
    ) {
        let mut store = ParamStore::new();
        for (i, t) in tensors.iter().enumerate() {
            store.add(format!("p{i}.w"), Tensor::new(vec![1, t.len()], t.clone()).unwrap());
        }
        let back = decode_params(&encode_params(&store)).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for ((name, t), (i, orig)) in back.iter().zip(tensors.iter().enumerate()) {
            prop_assert_eq!(name, &format!("p{i}.w"));
            let same = t.data().iter().zip(orig).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn schedule_warms_up_then_decays(step in 0u64..10_000) {
        let s = LrSchedule::default();
        let lr = s.lr_at_step(step);
        prop_assert!(lr >= 0.0 && lr <= s.base_lr);
        if step < s.warmup_steps {
            prop_assert!(s.lr_at_step(step + 1) > lr);
        } else {
            prop_assert!(s.lr_at_step(step + 1) <= lr);
        }
    }

    #[test]
    fn compact_extraction_treats_targets_as_a_set(
        seed in any::<u64>(),
        frames in 2usize..5,
        slots in 1usize..4,
        perm_seed in any::<u64>(),
    ) {
        let d = 8;
        let mut store = ParamStore::new();
        let params = VisualParams::new(&mut store, "visual", 3, 3, d, &mut SeededRng::new(seed));
        let mut rng = SeededRng::new(seed ^ 1);
        let rows: Vec<Vec<f64>> = (0..frames * slots).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let anchor = frames;
        let mut shuffled = rows.clone();
        let mut targets: Vec<usize> = (0..(frames - 1) * slots).collect();
        SeededRng::new(perm_seed).shuffle(&mut targets);
        for (dst, &src) in targets.iter().enumerate() {
            shuffled[dst] = rows[src].clone();
        }
        let run = |grid: &[Vec<f64>]| {
            let mut tape = Tape::new(&store);
            let g = tape.constant(Tensor::from_rows(grid).unwrap());
            let c = comvt::visual::compact_extract(&mut tape, g, frames, slots, anchor, &params).unwrap();
            let w = tape.value(c.weights.unwrap()).clone();
            (tape.value(c.features).clone(), w)
        };
        let (a, w) = run(&rows);
        let (b, _) = run(&shuffled);
        prop_assert_eq!(a.shape(), &[slots, d][..]);
        for r in 0..slots {
            let row = w.row(r);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
