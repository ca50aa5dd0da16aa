use std::collections::HashMap;

use giftforge::dsl::ComplexityProfile;
use giftforge::fixtures::{golden_dir, oracles, OracleCase};
use giftforge::metrics::{
    amortization_gap, complexity_buckets, delta_vs_baseline, ecdf, gap_percent, matrix_from_curve, pass_at_k,
    selection_stats, summarize, ComplexityAxis, Estimator, ScoreMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, inputs: usize, n: usize) -> ScoreMatrix {
    let scores: Vec<Vec<f64>> = (0..inputs)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random() })
                .collect()
        })
        .collect();
    ScoreMatrix::new("r", (0..inputs).map(|i| format!("i{i}")).collect(), scores).unwrap()
}

#[test]
fn subset_exact_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let inputs = rng.random_range(1..4);
        let m = random_matrix(&mut rng, inputs, n);
        for k in 1..=n {
            let want =
                m.scores.iter().map(|s| oracles::subset_expected_max(s, k)).sum::<f64>() / m.scores.len() as f64;
            let got = pass_at_k(&m, k, Estimator::SubsetExact).unwrap();
            assert!((got - want).abs() <= 1e-12, "{:?} k={k}: {got} vs {want}", m.scores);
        }
        let full_first = pass_at_k(&m, n, Estimator::FirstK).unwrap();
        let full_exact = pass_at_k(&m, n, Estimator::SubsetExact).unwrap();
        assert!((full_first - full_exact).abs() <= 1e-12);
    }
}

#[test]
fn pass_at_k_monotone_and_gap_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..300 {
        let n = rng.random_range(1..=40);
        let m = random_matrix(&mut rng, 5, n);
        for est in [Estimator::FirstK, Estimator::SubsetExact] {
            let curve: Vec<f64> = (1..=n).map(|k| pass_at_k(&m, k, est).unwrap()).collect();
            for w in curve.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{est:?} {curve:?}");
            }
            if curve[0] > 0.0 {
                assert!(amortization_gap(&m, n, est).unwrap().gap_percent >= -1e-9);
            }
        }
    }
}

#[test]
fn golden_subset_curve() {
    let g: OracleCase = giftforge::dataset::read_json(&golden_dir().join("pass_at_k_subsets.json")).unwrap();
    let rows: Vec<Vec<f64>> = serde_json::from_value(g.inputs["scores"].clone()).unwrap();
    let want: Vec<Vec<f64>> = serde_json::from_value(g.expected["by_k"].clone()).unwrap();
    for (scores, curve) in rows.iter().zip(&want) {
        let m = ScoreMatrix::new("g", vec!["a".into()], vec![scores.clone()]).unwrap();
        for (k, w) in curve.iter().enumerate() {
            let got = pass_at_k(&m, k + 1, Estimator::SubsetExact).unwrap();
            assert!((got - w).abs() <= 1e-8, "{scores:?} k={}: {got} vs {w}", k + 1);
        }
    }
}

#[test]
fn reported_gaps_and_delta() {
    let round1 = |x: f64| (x * 10.0).round() / 10.0;
    assert_eq!(round1(gap_percent(0.732, 0.812)), 10.9);
    assert_eq!(round1(gap_percent(0.761, 0.806)), 5.9);
    let a = matrix_from_curve("gift", &[0.779]).unwrap();
    let b = matrix_from_curve("base", &[0.698]).unwrap();
    let d = delta_vs_baseline(&a, &b, 1, Estimator::FirstK).unwrap();
    assert_eq!((d * 100.0).round() / 100.0, 11.60);
    let a = matrix_from_curve("gift", &[0.819]).unwrap();
    let b = matrix_from_curve("base", &[0.807]).unwrap();
    let d = delta_vs_baseline(&a, &b, 1, Estimator::FirstK).unwrap();
    assert_eq!((d * 100.0).round() / 100.0, 1.49);
    let c = matrix_from_curve("flat", &[0.6, 0.6, 0.6]).unwrap();
    assert_eq!(amortization_gap(&c, 3, Estimator::FirstK).unwrap().gap_percent, 0.0);
}

#[test]
fn selection_top1_above_top10() {
    // each input: one strong candidate and many weak ones
    let scores: Vec<Vec<f64>> = (0..6)
        .map(|i| {
            let mut s = vec![0.6; 20];
            s[i] = 0.9;
            s
        })
        .collect();
    let m = ScoreMatrix::new("s", (0..6).map(|i| format!("i{i}")).collect(), scores).unwrap();
    let st = selection_stats(&m, true);
    assert!((st.top1_mean.unwrap() - 0.9).abs() < 1e-12);
    assert!((st.top10_mean.unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(st.top10_count, 12);

    let exact = ScoreMatrix::new("e", vec!["a".into()], vec![vec![1.0, 0.995]]).unwrap();
    let st = selection_stats(&exact, false);
    assert_eq!((st.top1_mean, st.top10_mean, st.top1_count), (None, None, 0));
    let single = ScoreMatrix::new("o", vec!["a".into()], vec![vec![0.7]]).unwrap();
    let st = selection_stats(&single, true);
    assert_eq!(st.top1_mean, st.top10_mean);
}

#[test]
fn ecdf_steps() {
    assert_eq!(ecdf(&[0.5, 0.5, 1.0]), vec![(0.5, 2.0 / 3.0), (1.0, 1.0)]);
    assert_eq!(ecdf(&[0.3]), vec![(0.3, 1.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs: Vec<f64> = (0..500).map(|_| (rng.random::<f64>() * 20.0).floor() / 20.0).collect();
    let e = ecdf(&xs);
    for w in e.windows(2) {
        assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
    }
    for &(x, f) in &e {
        let at_or_below = xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
        assert!((f - at_or_below).abs() < 1e-12);
    }
}

#[test]
fn complexity_buckets_follow_difficulty() {
    let tokens = [10, 20, 40, 60, 80];
    let scores: Vec<Vec<f64>> = tokens.iter().map(|&t| vec![1.0 - t as f64 / 100.0; 4]).collect();
    let ids: Vec<String> = (0..5).map(|i| format!("i{i}")).collect();
    let m = ScoreMatrix::new("c", ids.clone(), scores).unwrap();
    let profiles: HashMap<String, ComplexityProfile> = ids
        .iter()
        .zip(tokens)
        .map(|(id, t)| {
            (
                id.clone(),
                ComplexityProfile {
                    token_count: t,
                    op_count: 1,
                },
            )
        })
        .collect();
    let b = complexity_buckets(&m, &profiles, &[16, 32, 48, 100], ComplexityAxis::Tokens).unwrap();
    let means: Vec<f64> = b.iter().filter_map(|b| b.mean_iou).collect();
    assert_eq!(means.len(), 4);
    for w in means.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(b[4].mean_iou.is_none() && b[4].solved_ratio.is_none());
    assert_eq!(b[0].solved_ratio, Some(1.0));
    assert_eq!(b[3].solved_ratio, Some(0.0));
}

#[test]
fn summary_counts_failures_as_zero() {
    let m = ScoreMatrix::new("s", vec!["a".into()], vec![vec![0.0, 0.0, 0.9, 1.0]]).unwrap();
    let s = summarize(&m, 2);
    assert!((s.mean_iou - 0.475).abs() < 1e-12);
    assert!((s.median_iou - 0.45).abs() < 1e-12);
    assert_eq!(s.valid_rate, 50.0);
}
