//! Scores reports against ground truth.
//!
//! Per bug: Precision@1, Reciprocal Rank, and Average Precision over the
//! ranked list. Across bugs: acc@k with the ordinal tiebreaker (the input
//! list order IS the rank order) and Spearman rank correlation between
//! confidence and the per-bug metrics, with a permutation test for p-values.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::signature::MethodSignature;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// One bug's report scored against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BugResult {
    pub bug_id: String,
    pub confidence: f64,
    /// 1-based ranks at which ground-truth methods appear, ascending.
    pub truth_ranks: Vec<usize>,
    pub list_len: usize,
    pub p_at_1: f64,
    pub rr: f64,
    pub ap: f64,
}

impl BugResult {
    /// Scores one ranked list. Returns `None` when the ground truth is empty
    /// (omission bugs cannot be ranked and are excluded with a warning at
    /// the call site).
    pub fn evaluate(
        bug_id: &str,
        ranked: &[MethodSignature],
        confidence: f64,
        truth: &BTreeSet<MethodSignature>,
    ) -> Option<Self> {
        if truth.is_empty() {
            return None;
        }
        let truth_ranks: Vec<usize> = ranked
            .iter()
            .enumerate()
            .filter(|(_, sig)| truth.contains(sig))
            .map(|(i, _)| i + 1)
            .collect();
        let (p_at_1, rr, ap) = metrics_from_ranks(&truth_ranks);
        Some(Self {
            bug_id: bug_id.to_string(),
            confidence,
            truth_ranks,
            list_len: ranked.len(),
            p_at_1,
            rr,
            ap,
        })
    }
}

/// (Precision@1, Reciprocal Rank, Average Precision) for one bug.
///
/// P@1 is 1 iff the top-ranked method is faulty. RR is the reciprocal rank
/// of the highest-ranked faulty method (0 if none is ranked). AP averages
/// the precision at each rank holding a faulty method, over the faulty
/// methods that appear in the list (0 if none do).
pub fn per_bug_metrics(
    ranked: &[MethodSignature],
    truth: &BTreeSet<MethodSignature>,
) -> (f64, f64, f64) {
    let truth_ranks: Vec<usize> = ranked
        .iter()
        .enumerate()
        .filter(|(_, sig)| truth.contains(sig))
        .map(|(i, _)| i + 1)
        .collect();
    metrics_from_ranks(&truth_ranks)
}

fn metrics_from_ranks(truth_ranks: &[usize]) -> (f64, f64, f64) {
    let p_at_1 = if truth_ranks.first() == Some(&1) { 1.0 } else { 0.0 };
    let rr = truth_ranks.first().map_or(0.0, |r| 1.0 / *r as f64);
    let ap = if truth_ranks.is_empty() {
        0.0
    } else {
        truth_ranks
            .iter()
            .enumerate()
            .map(|(j, rank)| (j + 1) as f64 / *rank as f64)
            .sum::<f64>()
            / truth_ranks.len() as f64
    };
    (p_at_1, rr, ap)
}

/// Number of bugs with at least one ground-truth method ranked in the top
/// `k`. Bugs without ground truth never make it into `results`, so every
/// entry is countable.
pub fn acc_at_k(results: &[BugResult], k: usize) -> usize {
    results
        .iter()
        .filter(|r| r.truth_ranks.first().is_some_and(|rank| *rank <= k))
        .count()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpearmanError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("a rank vector has zero variance; the coefficient is undefined")]
    ZeroVariance,
}

/// Spearman rank correlation with average ranks for ties: rank both series,
/// then take the Pearson correlation of the rank vectors.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, SpearmanError> {
    if xs.len() != ys.len() {
        return Err(SpearmanError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(SpearmanError::TooFewSamples(xs.len()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

/// Mid-ranks: tied values share the mean of the ranks they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("values are never NaN"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, SpearmanError> {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(SpearmanError::ZeroVariance);
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Spearman coefficient plus a two-sided permutation p-value: the fraction
/// of label shufflings whose |rho| is at least the observed |rho|, with the
/// +1 correction on both sides.
pub fn spearman_with_pvalue(
    xs: &[f64],
    ys: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<(f64, f64), SpearmanError> {
    let rho = spearman(xs, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<f64> = ys.to_vec();
    let mut at_least = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        // Rank variance is permutation-invariant, so this cannot fail once
        // the observed coefficient exists.
        let perm_rho = spearman(xs, &shuffled)?;
        if perm_rho.abs() >= rho.abs() - 1e-12 {
            at_least += 1;
        }
    }
    let p = (at_least + 1) as f64 / (permutations + 1) as f64;
    Ok((rho, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigs(names: &[&str]) -> Vec<MethodSignature> {
        names
            .iter()
            .map(|n| MethodSignature::new("C", *n, vec![]))
            .collect()
    }

    fn truth(names: &[&str]) -> BTreeSet<MethodSignature> {
        sigs(names).into_iter().collect()
    }

    #[test]
    fn metrics_top_hit() {
        let (p, rr, ap) = per_bug_metrics(&sigs(&["b", "d", "a"]), &truth(&["b"]));
        assert_eq!((p, rr, ap), (1.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_rank_two() {
        let (p, rr, ap) = per_bug_metrics(&sigs(&["b", "d", "a"]), &truth(&["d"]));
        assert_eq!((p, rr, ap), (0.0, 0.5, 0.5));
    }

    #[test]
    fn metrics_two_truths() {
        let (p, rr, ap) = per_bug_metrics(&sigs(&["b", "d", "a"]), &truth(&["a", "d"]));
        assert_eq!(p, 0.0);
        assert_eq!(rr, 0.5);
        assert!((ap - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_missing_truth() {
        let (p, rr, ap) = per_bug_metrics(&sigs(&["b", "d"]), &truth(&["z"]));
        assert_eq!((p, rr, ap), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rr_equals_ap_for_single_truth() {
        let ranked = sigs(&["a", "b", "c", "d"]);
        for name in ["a", "b", "c", "d", "x"] {
            let (_, rr, ap) = per_bug_metrics(&ranked, &truth(&[name]));
            assert_eq!(rr, ap);
        }
    }

    #[test]
    fn evaluate_skips_empty_truth() {
        assert!(BugResult::evaluate("bug", &sigs(&["a"]), 0.5, &truth(&[])).is_none());
    }

    #[test]
    fn acc_at_k_counts_hits() {
        let results = vec![
            BugResult::evaluate("one", &sigs(&["b", "d", "a", "c", "e"]), 0.6, &truth(&["b"]))
                .unwrap(),
            BugResult::evaluate("two", &sigs(&["b", "d", "a", "c", "e"]), 0.3, &truth(&["c"]))
                .unwrap(),
        ];
        assert_eq!(acc_at_k(&results, 1), 1);
        assert_eq!(acc_at_k(&results, 3), 1);
        assert_eq!(acc_at_k(&results, 4), 2);
        assert_eq!(acc_at_k(&results, 5), 2);
    }

    #[test]
    fn spearman_identical_orderings() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [10.0, 20.0, 30.0, 40.0];
        assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_reversed() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_computed_case() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 3.0, 2.0, 4.0];
        assert!((spearman(&xs, &ys).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_undefined_cases() {
        assert_eq!(
            spearman(&[1.0], &[2.0]),
            Err(SpearmanError::TooFewSamples(1))
        );
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(SpearmanError::ZeroVariance)
        );
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    #[test]
    fn spearman_invariant_under_monotone_transform() {
        let xs = [0.3, 0.1, 0.9, 0.5, 0.7];
        let ys = [2.0, 1.0, 4.0, 5.0, 3.0];
        let base = spearman(&xs, &ys).unwrap();
        let squashed: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * 100.0 + 7.0).collect();
        assert!((spearman(&squashed, &scaled).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn permutation_test_is_deterministic_per_seed() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [1.1, 2.2, 2.9, 4.4, 5.0, 6.3];
        let a = spearman_with_pvalue(&xs, &ys, 500, 42).unwrap();
        let b = spearman_with_pvalue(&xs, &ys, 500, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.1 < 0.05);
    }
}
