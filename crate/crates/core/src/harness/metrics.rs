use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based rank of `true_index` under descending scores, ties going to
/// the lower index.
pub fn rank_of(scores: &[f64], true_index: usize) -> Result<usize> {
    if true_index >= scores.len() {
        return Err(Error::Contract(format!(
            "true index {true_index} outside {} scores",
            scores.len()
        )));
    }
    let t = scores[true_index];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < true_index))
        .count();
    Ok(ahead + 1)
}

/// Whether the true candidate ranks within the top `k`.
pub fn recall_at_k(scores: &[f64], true_index: usize, k: usize) -> Result<bool> {
    if k == 0 || k > scores.len() {
        return Err(Error::Contract(format!("k = {k} outside 1..={}", scores.len())));
    }
    Ok(rank_of(scores, true_index)? <= k)
}

/// Recall of an evaluation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub r_at_1: f64,
    pub r_at_5: f64,
    /// 1-based rank of the truth per example.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranks: Vec<usize>,
}

impl EvalReport {
    /// Aggregates 1-based ranks. `R@5` counts rank ≤ 5 even for pools
    /// smaller than five, where it is 1.
    pub fn from_ranks(ranks: Vec<usize>) -> Self {
        let n = ranks.len();
        let frac = |k: usize| {
            if n == 0 {
                0.0
            } else {
                ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64
            }
        };
        Self {
            examples: n,
            r_at_1: frac(1),
            r_at_5: frac(5),
            ranks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub r_at_1: f64,
    pub r_at_5: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub nup: f64,
    pub mlm: f64,
    pub total: f64,
}

/// Output of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: String,
    pub checkpoints: Vec<EvalPoint>,
    pub losses: Vec<LossPoint>,
    pub steps_per_second: f64,
    pub flops: super::flops::FlopsReport,
    /// Cross-entropy rows floored at the probability floor.
    pub clamped_rows: usize,
    pub config: super::config::RunConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_sorted_examples() {
        assert!(recall_at_k(&[3.0], 0, 1).unwrap());
        assert!(recall_at_k(&[0.2, 0.9, 0.5], 1, 1).unwrap());
        assert!(!recall_at_k(&[0.9, 0.2, 0.5], 1, 1).unwrap());
        assert_eq!(rank_of(&[0.9, 0.2, 0.5], 1).unwrap(), 3);
        assert!(recall_at_k(&[0.9, 0.2, 0.5], 1, 3).unwrap());
    }

    #[test]
    fn ties_favour_lower_index() {
        assert_eq!(rank_of(&[1.0, 1.0, 1.0], 0).unwrap(), 1);
        assert_eq!(rank_of(&[1.0, 1.0, 1.0], 2).unwrap(), 3);
    }

    #[test]
    fn invalid_arguments() {
        assert!(rank_of(&[1.0], 1).is_err());
        assert!(recall_at_k(&[1.0, 2.0], 0, 0).is_err());
        assert!(recall_at_k(&[1.0, 2.0], 0, 3).is_err());
    }

    #[test]
    fn report_recalls_are_monotone() {
        let r = EvalReport::from_ranks(vec![1, 3, 6, 1, 10]);
        assert_eq!(r.r_at_1, 0.4);
        assert_eq!(r.r_at_5, 0.6);
        assert!(r.r_at_1 <= r.r_at_5);
    }
}
