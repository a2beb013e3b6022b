use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::heads::CandidateSet;
use crate::numerics::SeededRng;

/// The truth at a uniformly random position among `m - 1` distinct
/// negatives drawn without replacement from `pool`. Pool entries equal to
/// the truth, and repeats, are ignored.
pub fn sample_candidates<S: AsRef<str>>(
    truth: &str,
    pool: &[S],
    m: usize,
    rng: &mut SeededRng,
) -> Result<CandidateSet> {
    if m == 0 {
        return Err(Error::EmptyCandidates);
    }
    let mut seen = HashSet::new();
    let mut negatives: Vec<&str> = pool
        .iter()
        .map(AsRef::as_ref)
        .filter(|u| *u != truth && seen.insert(*u))
        .collect();
    if negatives.len() < m - 1 {
        return Err(Error::InsufficientPool {
            needed: m - 1,
            available: negatives.len(),
        });
    }
    // Partial Fisher-Yates: the first m-1 slots become the sample.
    for i in 0..m - 1 {
        let j = i + rng.below(negatives.len() - i);
        negatives.swap(i, j);
    }
    negatives.truncate(m - 1);
    let true_index = rng.below(m);
    let mut utterances: Vec<String> = negatives.into_iter().map(str::to_string).collect();
    utterances.insert(true_index, truth.to_string());
    CandidateSet::new(utterances, true_index)
}

/// `round(fraction · N)` items drawn uniformly without replacement,
/// returned in their original order.
pub fn subsample_eval<T: Clone>(items: &[T], fraction: f64, rng: &mut SeededRng) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let k = (fraction * items.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    for i in 0..k {
        let j = i + rng.below(items.len() - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_is_the_truth() {
        let c = sample_candidates::<&str>("t", &[], 1, &mut SeededRng::new(0)).unwrap();
        assert_eq!(c.utterances, ["t"]);
        assert_eq!(c.true_index, 0);
    }

    #[test]
    fn small_pool_is_exhausted() {
        let c = sample_candidates("t", &["x", "t", "y", "x", "z"], 4, &mut SeededRng::new(3)).unwrap();
        let mut u = c.utterances.clone();
        u.sort();
        assert_eq!(u, ["t", "x", "y", "z"]);
        assert_eq!(c.truth(), "t");
    }

    #[test]
    fn shortfall_is_reported() {
        let err = sample_candidates("t", &["a", "t", "a"], 4, &mut SeededRng::new(0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPool { needed: 3, available: 1 }));
    }

    #[test]
    fn true_index_is_spread_uniformly() {
        let pool: Vec<String> = (0..200).map(|i| format!("n{i}")).collect();
        let mut rng = SeededRng::new(11);
        let mut counts = [0usize; 10];
        for _ in 0..5000 {
            let c = sample_candidates("t", &pool, 10, &mut rng).unwrap();
            counts[c.true_index] += 1;
            assert_eq!(c.utterances.iter().collect::<HashSet<_>>().len(), 10);
        }
        assert!(counts.iter().all(|&n| (400..=600).contains(&n)), "{counts:?}");
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let items: Vec<usize> = (0..100).collect();
        let a = subsample_eval(&items, 0.06, &mut SeededRng::new(1)).unwrap();
        let b = subsample_eval(&items, 0.06, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_eval(&items, 1.0, &mut SeededRng::new(2)).unwrap(), items);
        assert!(subsample_eval(&items, 0.0, &mut SeededRng::new(2)).is_err());
    }
}
