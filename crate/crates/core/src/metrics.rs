//! Evaluation statistics over per-input score lists.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ComplexityProfile;
use crate::verifier::Verdict;

pub const SOLVED_THRESHOLD: f64 = 0.9;
pub const EXACT_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("input {input_id} has {available} samples, fewer than k={k}")]
    InsufficientSamples {
        input_id: String,
        k: usize,
        available: usize,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("score matrix has no inputs")]
    NoInputs,
    #[error("input sets differ between matrices")]
    InputMismatch,
    #[error("no complexity profile for input {0}")]
    MissingProfile(String),
    #[error("score {0} outside [0, 1]")]
    ScoreRange(f64),
}

/// Per-input ordered scores with failures as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub label: String,
    pub input_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ScoreMatrix {
    pub fn new(label: &str, input_ids: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        assert_eq!(input_ids.len(), scores.len(), "one score list per input");
        for &s in scores.iter().flatten() {
            if !(0.0..=1.0).contains(&s) {
                return Err(MetricsError::ScoreRange(s));
            }
        }
        Ok(ScoreMatrix {
            label: label.to_string(),
            input_ids,
            scores,
            metadata: BTreeMap::new(),
        })
    }

    /// Verdicts grouped by input in first-appearance order, candidates in id order.
    pub fn from_verdicts(label: &str, verdicts: &[Verdict]) -> ScoreMatrix {
        let mut ids: Vec<String> = Vec::new();
        let mut rows: HashMap<&str, Vec<(usize, f64)>> = HashMap::new();
        for v in verdicts {
            if !rows.contains_key(v.input_id.as_str()) {
                ids.push(v.input_id.clone());
            }
            rows.entry(&v.input_id)
                .or_default()
                .push((v.candidate_id, v.score.unwrap_or(0.0)));
        }
        let scores = ids
            .iter()
            .map(|id| {
                let mut r = rows[id.as_str()].clone();
                r.sort_by_key(|(k, _)| *k);
                r.into_iter().map(|(_, s)| s).collect()
            })
            .collect();
        ScoreMatrix {
            label: label.to_string(),
            input_ids: ids,
            scores,
            metadata: BTreeMap::new(),
        }
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.scores.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Estimator {
    /// Max of the first k samples in generation order.
    #[default]
    FirstK,
    /// Expected max over a uniformly random k-subset.
    SubsetExact,
}

/// `C(n, k)` exactly, for `n` small enough not to overflow.
fn binom_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c·(n-i) is divisible by i+1; split the division to avoid overflow.
        let (num, den) = ((n - i) as u128, (i + 1) as u128);
        let g = gcd(c, den);
        c = (c / g) * (num / (den / g));
    }
    c
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Largest n for which the exact binomial path is used.
const EXACT_BINOMIAL_MAX_N: usize = 128;

/// Expected max of a uniformly random k-subset of `scores`.
///
/// With scores sorted ascending, the i-th smallest (1-based) is the max of
/// exactly `C(i-1, k-1)` of the `C(n, k)` subsets.
pub fn expected_max_of_subset(scores: &[f64], k: usize) -> f64 {
    let n = scores.len();
    assert!(k >= 1 && k <= n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if n <= EXACT_BINOMIAL_MAX_N {
        let total = binom_u128(n, k) as f64;
        let numerator: f64 = (k..=n).map(|i| sorted[i - 1] * binom_u128(i - 1, k - 1) as f64).sum();
        return numerator / total;
    }
    // Weight of index i is C(i-1,k-1)/C(n,k); walk down from i = n using
    // w(i-1) = w(i)·(i-k)/(i-1).
    let mut w = k as f64 / n as f64;
    let mut acc = 0.0;
    let mut i = n;
    while i >= k {
        acc += sorted[i - 1] * w;
        if i == k {
            break;
        }
        w *= (i - k) as f64 / (i - 1) as f64;
        i -= 1;
    }
    acc
}

fn per_input_max(scores: &[f64], k: usize, est: Estimator) -> f64 {
    match est {
        Estimator::FirstK => scores[..k].iter().copied().fold(0.0, f64::max),
        Estimator::SubsetExact => expected_max_of_subset(scores, k),
    }
}

pub fn pass_at_k(m: &ScoreMatrix, k: usize, est: Estimator) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if m.scores.is_empty() {
        return Err(MetricsError::NoInputs);
    }
    let mut total = 0.0;
    for (id, s) in m.input_ids.iter().zip(&m.scores) {
        if s.len() < k {
            return Err(MetricsError::InsufficientSamples {
                input_id: id.clone(),
                k,
                available: s.len(),
            });
        }
        total += per_input_max(s, k, est);
    }
    Ok(total / m.scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizationGap {
    pub pass1: f64,
    pub passk: f64,
    pub gap_percent: f64,
}

pub fn gap_percent(pass1: f64, passk: f64) -> f64 {
    100.0 * (passk - pass1) / pass1
}

pub fn amortization_gap(m: &ScoreMatrix, k: usize, est: Estimator) -> Result<AmortizationGap, MetricsError> {
    let pass1 = pass_at_k(m, 1, est)?;
    let passk = pass_at_k(m, k, est)?;
    Ok(AmortizationGap {
        pass1,
        passk,
        gap_percent: gap_percent(pass1, passk),
    })
}

/// Relative improvement of `a` over baseline `b` at `k`, in percent.
pub fn delta_vs_baseline(a: &ScoreMatrix, b: &ScoreMatrix, k: usize, est: Estimator) -> Result<f64, MetricsError> {
    if a.input_ids != b.input_ids {
        return Err(MetricsError::InputMismatch);
    }
    let (pa, pb) = (pass_at_k(a, k, est)?, pass_at_k(b, k, est)?);
    Ok(100.0 * (pa - pb) / pb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    /// Mean of the pooled per-input top-10% (ceiling) scores; `None` if empty.
    pub top10_mean: Option<f64>,
    /// Mean of per-input best scores over inputs with any eligible score.
    pub top1_mean: Option<f64>,
    pub top10_count: usize,
    pub top1_count: usize,
}

/// Top-10% and top-1 selection means. With `include_exact` false, scores at or
/// above 0.99 are removed before selection.
pub fn selection_stats(m: &ScoreMatrix, include_exact: bool) -> SelectionStats {
    let mut pool = Vec::new();
    let mut tops = Vec::new();
    for s in &m.scores {
        let mut eligible: Vec<f64> = s
            .iter()
            .copied()
            .filter(|&x| include_exact || x < EXACT_THRESHOLD)
            .collect();
        if eligible.is_empty() {
            continue;
        }
        eligible.sort_by(|a, b| b.total_cmp(a));
        tops.push(eligible[0]);
        pool.extend_from_slice(&eligible[..eligible.len().div_ceil(10)]);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    SelectionStats {
        top10_mean: mean(&pool),
        top1_mean: mean(&tops),
        top10_count: pool.len(),
        top1_count: tops.len(),
    }
}

/// Empirical CDF evaluated at each distinct sample value, ascending.
pub fn ecdf(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

/// Fraction of samples strictly below `x`.
pub fn fraction_below(scores: &[f64], x: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s < x).count() as f64 / scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityAxis {
    #[default]
    Tokens,
    Ops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive lower edge; `None` is unbounded.
    pub lo: Option<usize>,
    /// Exclusive upper edge; `None` is unbounded.
    pub hi: Option<usize>,
    pub inputs: usize,
    /// Absent for empty buckets.
    pub mean_iou: Option<f64>,
    pub solved_ratio: Option<f64>,
}

/// Groups inputs by complexity: edges `e0 < e1 < ...` give buckets
/// `(-inf, e0), [e0, e1), ..., [e_last, inf)`. Mean IoU averages every score
/// of the bucket's inputs; an input is solved when any score reaches 0.9.
pub fn complexity_buckets(
    m: &ScoreMatrix,
    profiles: &HashMap<String, ComplexityProfile>,
    edges: &[usize],
    axis: ComplexityAxis,
) -> Result<Vec<Bucket>, MetricsError> {
    let mut sums = vec![(0usize, 0.0f64, 0usize, 0usize); edges.len() + 1];
    for (id, s) in m.input_ids.iter().zip(&m.scores) {
        let p = profiles.get(id).ok_or_else(|| MetricsError::MissingProfile(id.clone()))?;
        let x = match axis {
            ComplexityAxis::Tokens => p.token_count,
            ComplexityAxis::Ops => p.op_count,
        };
        let b = edges.iter().take_while(|&&e| x >= e).count();
        let e = &mut sums[b];
        e.0 += 1;
        e.1 += s.iter().sum::<f64>();
        e.2 += s.len();
        e.3 += usize::from(s.iter().any(|&v| v >= SOLVED_THRESHOLD));
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(b, (inputs, total, n, solved))| Bucket {
            lo: b.checked_sub(1).map(|i| edges[i]),
            hi: edges.get(b).copied(),
            inputs,
            mean_iou: (n > 0).then(|| total / n as f64),
            solved_ratio: (inputs > 0).then(|| solved as f64 / inputs as f64),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    /// Failures count as 0.
    pub mean_iou: f64,
    pub median_iou: f64,
    /// Percent of samples with a positive score.
    pub valid_rate: f64,
}

/// Mean and median over every sample including zeros. `valid` is the number
/// of samples that produced a score.
pub fn summarize(m: &ScoreMatrix, valid: usize) -> Summary {
    let mut all: Vec<f64> = m.scores.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => all[n / 2],
        _ => 0.5 * (all[n / 2 - 1] + all[n / 2]),
    };
    Summary {
        samples: n,
        mean_iou: if n == 0 { 0.0 } else { all.iter().sum::<f64>() / n as f64 },
        median_iou: median,
        valid_rate: if n == 0 { 0.0 } else { 100.0 * valid as f64 / n as f64 },
    }
}

/// A printed pass@k curve as a one-input matrix whose first-k running max
/// reproduces it: sample j is the curve value at k = j + 1.
pub fn matrix_from_curve(label: &str, curve: &[f64]) -> Result<ScoreMatrix, MetricsError> {
    ScoreMatrix::new(label, vec!["curve".to_string()], vec![curve.to_vec()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(scores: &[f64]) -> ScoreMatrix {
        ScoreMatrix::new("t", vec!["a".into()], vec![scores.to_vec()]).unwrap()
    }

    #[test]
    fn first_k_definition() {
        let m = one(&[0.5, 0.9, 0.7]);
        assert_eq!(pass_at_k(&m, 1, Estimator::FirstK).unwrap(), 0.5);
        assert_eq!(pass_at_k(&m, 2, Estimator::FirstK).unwrap(), 0.9);
        assert!(matches!(
            pass_at_k(&m, 4, Estimator::FirstK),
            Err(MetricsError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn subset_exact_small() {
        let m = one(&[0.0, 1.0]);
        assert_eq!(pass_at_k(&m, 1, Estimator::SubsetExact).unwrap(), 0.5);
        assert_eq!(pass_at_k(&m, 2, Estimator::SubsetExact).unwrap(), 1.0);
        assert_eq!(pass_at_k(&m, 2, Estimator::FirstK).unwrap(), 1.0);
    }

    #[test]
    fn large_n_recurrence_agrees() {
        let s: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let small = &s[..128];
        // the exact path at n = 128 vs the recurrence on the same data
        for k in [1, 5, 64, 128] {
            let exact = expected_max_of_subset(small, k);
            let mut sorted = small.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut w = k as f64 / 128.0;
            let mut acc = 0.0;
            for i in (k..=128).rev() {
                acc += sorted[i - 1] * w;
                if i > k {
                    w *= (i - k) as f64 / (i - 1) as f64;
                }
            }
            assert!((exact - acc).abs() < 1e-12);
        }
        assert!((expected_max_of_subset(&s, 200) - 1.0).abs() < 1e-12);
        assert!((expected_max_of_subset(&s, 1) - s.iter().sum::<f64>() / 200.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_and_deltas() {
        let g = amortization_gap(&one(&[0.6, 0.6, 0.6]), 3, Estimator::FirstK).unwrap();
        assert_eq!(g.gap_percent, 0.0);
        let a = one(&[0.5]);
        let b = ScoreMatrix::new("b", vec!["z".into()], vec![vec![0.5]]).unwrap();
        assert_eq!(delta_vs_baseline(&a, &b, 1, Estimator::FirstK), Err(MetricsError::InputMismatch));
        assert_eq!(delta_vs_baseline(&a, &a, 1, Estimator::FirstK).unwrap(), 0.0);
    }

    #[test]
    fn selection() {
        let m = ScoreMatrix::new(
            "t",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.995, 0.8], vec![0.3]],
        )
        .unwrap();
        let all = selection_stats(&m, true);
        assert_eq!(all.top1_count, 2);
        assert_eq!(all.top1_mean, Some(0.65));
        let no_exact = selection_stats(&m, false);
        assert_eq!(no_exact.top1_mean, Some(0.55));
        let exact_only = one(&[1.0, 0.999]);
        let s = selection_stats(&exact_only, false);
        assert_eq!((s.top10_mean, s.top1_mean, s.top10_count), (None, None, 0));
        let single = one(&[0.4]);
        let s = selection_stats(&single, true);
        assert_eq!(s.top10_mean, s.top1_mean);
    }

    #[test]
    fn ecdf_steps() {
        assert_eq!(ecdf(&[0.5, 0.5, 1.0]), vec![(0.5, 2.0 / 3.0), (1.0, 1.0)]);
        assert_eq!(ecdf(&[0.3]), vec![(0.3, 1.0)]);
    }

    #[test]
    fn buckets() {
        let m = ScoreMatrix::new(
            "t",
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0], vec![0.6], vec![0.2]],
        )
        .unwrap();
        let profiles: HashMap<String, ComplexityProfile> = [("a", 8), ("b", 20), ("c", 40)]
            .into_iter()
            .map(|(id, t)| {
                (
                    id.to_string(),
                    ComplexityProfile {
                        token_count: t,
                        op_count: 1,
                    },
                )
            })
            .collect();
        let b = complexity_buckets(&m, &profiles, &[10, 30, 100], ComplexityAxis::Tokens).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b[0].mean_iou, Some(1.0));
        assert_eq!(b[1].mean_iou, Some(0.6));
        assert_eq!(b[2].mean_iou, Some(0.2));
        assert_eq!(b[3].mean_iou, None);
        assert_eq!(b[3].solved_ratio, None);
        assert_eq!((b[1].lo, b[1].hi), (Some(10), Some(30)));
        let mut missing = profiles.clone();
        missing.remove("b");
        assert_eq!(
            complexity_buckets(&m, &missing, &[10], ComplexityAxis::Tokens),
            Err(MetricsError::MissingProfile("b".into()))
        );
    }

    #[test]
    fn summary_counts_zeros() {
        let m = one(&[0.0, 1.0, 0.8, 0.0]);
        let s = summarize(&m, 2);
        assert_eq!(s.mean_iou, 0.45);
        assert_eq!(s.median_iou, 0.4);
        assert_eq!(s.valid_rate, 50.0);
    }
}
