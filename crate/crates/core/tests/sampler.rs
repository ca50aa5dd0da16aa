mod common;

use giftforge::dsl::{parse, serialize};
use giftforge::sampler::{perturb, plan_default, sample_mock, MockParams, PlanEntry, SamplerConfig, SamplingPlan};
use giftforge::verifier::{verify, Band, ErrorKind, VerifyConfig};

fn entry(n: usize) -> PlanEntry {
    plan_default().entries.into_iter().find(|e| e.budget_n == n).unwrap()
}

#[test]
fn mock_sampling_is_deterministic() {
    let gt = parse(common::SUITE[3]).unwrap();
    let p = MockParams::default();
    let a = sample_mock("x", &gt, &entry(16), &p, 42);
    let b = sample_mock("x", &gt, &entry(16), &p, 42);
    assert_eq!(a, b);
    assert_eq!(a.candidates.len(), 16);
    let c = sample_mock("x", &gt, &entry(16), &p, 43);
    assert_ne!(a, c);
}

#[test]
fn zero_noise_copies_ground_truth() {
    let p = MockParams {
        sigma: 0.0,
        p_jitter: 0.5,
        p_drop: 0.0,
        p_syntax: 0.0,
    };
    let cfg = VerifyConfig {
        resolution: 32,
        ..VerifyConfig::default()
    };
    for text in common::SUITE {
        let gt = parse(text).unwrap();
        let set = sample_mock("x", &gt, &entry(8), &p, 1);
        for c in &set.candidates {
            assert_eq!(c.text, serialize(&gt));
            let a = verify(&c.text, &gt, &cfg).unwrap();
            assert_eq!(a.band, Band::Match, "{text}");
        }
    }
}

#[test]
fn certain_syntax_errors_fail_generation() {
    let p = MockParams {
        p_syntax: 1.0,
        ..MockParams::default()
    };
    let gt = parse(common::SUITE[0]).unwrap();
    let set = sample_mock("x", &gt, &entry(32), &p, 3);
    for c in &set.candidates {
        let a = verify(&c.text, &gt, &VerifyConfig::default()).unwrap();
        assert_eq!(a.error, Some(ErrorKind::FailedGen), "{:?}", c.text);
    }
}

#[test]
fn mean_iou_non_increasing_in_sigma() {
    let gt = parse(common::SUITE[4]).unwrap();
    let cfg = VerifyConfig {
        resolution: 32,
        ..VerifyConfig::default()
    };
    let mut means = Vec::new();
    for sigma in [0.0, 0.05, 0.1, 0.2] {
        let p = MockParams {
            sigma,
            ..MockParams::default()
        };
        let seeds = 0..24u64;
        let total: f64 = seeds
            .clone()
            .map(|s| {
                let text = perturb(&gt, &p, 0.4, s);
                verify(&text, &gt, &cfg).unwrap().score.unwrap_or(0.0)
            })
            .sum();
        means.push(total / seeds.count() as f64);
    }
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

#[test]
fn default_plan_matches_budget_table() {
    let plan = plan_default();
    let counts: Vec<(usize, usize)> = plan.entries.iter().map(|e| (e.budget_n, e.configs.len())).collect();
    assert_eq!(counts, vec![(8, 11), (16, 7), (32, 6), (64, 3), (128, 2)]);
    let per_t = |n: usize| {
        let mut m: Vec<(String, usize)> = Vec::new();
        for c in &entry(n).configs {
            let t = format!("{}", c.temperature);
            match m.iter_mut().find(|(k, _)| *k == t) {
                Some((_, v)) => *v += 1,
                None => m.push((t, 1)),
            }
        }
        m.into_iter().map(|(_, v)| v).collect::<Vec<_>>()
    };
    assert_eq!(per_t(8), vec![4, 4, 3]);
    assert_eq!(per_t(16), vec![4, 3]);
    assert_eq!(per_t(32), vec![4, 2]);
    assert_eq!(per_t(64), vec![3]);
    assert_eq!(per_t(128), vec![2]);
    assert!(entry(128).configs.iter().all(|c| c.temperature == 0.2));
    assert!(plan.validate().unwrap().is_empty());
    for e in &plan.entries {
        assert_eq!(e.allocation().iter().sum::<usize>(), e.budget_n);
    }
}

#[test]
fn non_standard_budget_warns() {
    let plan = SamplingPlan {
        entries: vec![PlanEntry {
            budget_n: 3,
            configs: vec![SamplerConfig {
                temperature: 0.4,
                top_p: 0.9,
            }],
            inputs_per_budget: 2,
        }],
    };
    let warnings = plan.validate().unwrap();
    assert_eq!(warnings.len(), 1, "{warnings:?}");
    let empty = SamplingPlan {
        entries: vec![PlanEntry {
            budget_n: 8,
            configs: vec![],
            inputs_per_budget: 1,
        }],
    };
    assert!(empty.validate().is_err());
}
