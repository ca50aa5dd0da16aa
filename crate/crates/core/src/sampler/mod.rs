//! Candidate programs per input under a sampling plan.
//!
//! Three sources share one layout: every input gets the `N` of its plan entry,
//! split across that entry's configs, ordered by `(config, k)`. Each slot has
//! a seed derived from the run seed, so partial re-runs reproduce.

pub mod http;
pub mod mock;
pub mod plan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::CadProgram;
use crate::pool::ordered_map;
pub use http::{GenerateRequest, HttpSampler};
pub use mock::{perturb, MockParams};
pub use plan::{plan_default, PlanEntry, SamplerConfig, SamplingPlan};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub input_id: String,
    pub candidate_id: usize,
    pub text: String,
    pub config_id: String,
    pub seed: u64,
    pub budget_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub input_id: String,
    pub budget_n: usize,
    pub candidates: Vec<Candidate>,
}

/// What a sampler needs to know about one input.
#[derive(Debug, Clone)]
pub struct SampleInput<'a> {
    pub input_id: &'a str,
    pub program: &'a CadProgram,
    pub image_ref: &'a str,
}

/// First 8 bytes (LE) of sha256 over the run seed, input id, config id and k.
pub fn candidate_seed(run_seed: u64, input_id: &str, config_id: &str, k: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(input_id.as_bytes());
    h.update([0u8]);
    h.update(config_id.as_bytes());
    h.update([0u8]);
    h.update((k as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone)]
struct Slot {
    candidate_id: usize,
    config: SamplerConfig,
    config_id: String,
    seed: u64,
}

fn layout(input_id: &str, entry: &PlanEntry, run_seed: u64) -> Vec<Slot> {
    let mut slots = Vec::with_capacity(entry.budget_n);
    for (config, count) in entry.configs.iter().zip(entry.allocation()) {
        let config_id = config.id();
        for k in 0..count {
            slots.push(Slot {
                candidate_id: slots.len(),
                config: *config,
                seed: candidate_seed(run_seed, input_id, &config_id, k),
                config_id: config_id.clone(),
            });
        }
    }
    slots
}

fn fill(input_id: &str, entry: &PlanEntry, slots: Vec<Slot>, texts: Vec<String>) -> CandidateSet {
    CandidateSet {
        input_id: input_id.to_string(),
        budget_n: entry.budget_n,
        candidates: slots
            .into_iter()
            .zip(texts)
            .map(|(s, text)| Candidate {
                input_id: input_id.to_string(),
                candidate_id: s.candidate_id,
                text,
                config_id: s.config_id,
                seed: s.seed,
                budget_n: entry.budget_n,
            })
            .collect(),
    }
}

/// Mock candidates for one input under one plan entry.
pub fn sample_mock(
    input_id: &str,
    gt: &CadProgram,
    entry: &PlanEntry,
    params: &MockParams,
    run_seed: u64,
) -> CandidateSet {
    let slots = layout(input_id, entry, run_seed);
    let texts = slots
        .iter()
        .map(|s| perturb(gt, params, s.config.temperature, s.seed))
        .collect();
    fill(input_id, entry, slots, texts)
}

pub fn sample_plan_mock(
    inputs: &[SampleInput<'_>],
    plan: &SamplingPlan,
    params: &MockParams,
    run_seed: u64,
    workers: usize,
) -> Vec<CandidateSet> {
    let assigned = plan.assign(inputs.len());
    let jobs: Vec<(&SampleInput<'_>, &PlanEntry)> = inputs
        .iter()
        .zip(&assigned)
        .map(|(i, &e)| (i, &plan.entries[e]))
        .collect();
    ordered_map(workers, &jobs, |(input, entry)| {
        sample_mock(input.input_id, input.program, entry, params, run_seed)
    })
}

/// One request per (input, config) with at least one slot.
pub fn sample_plan_http(
    inputs: &[SampleInput<'_>],
    plan: &SamplingPlan,
    sampler: &HttpSampler,
    run_seed: u64,
) -> Result<Vec<CandidateSet>, SampleError> {
    let assigned = plan.assign(inputs.len());
    let mut layouts = Vec::new();
    let mut requests = Vec::new();
    for (input, &e) in inputs.iter().zip(&assigned) {
        let entry = &plan.entries[e];
        let slots = layout(input.input_id, entry, run_seed);
        for (config, count) in entry.configs.iter().zip(entry.allocation()) {
            if count == 0 {
                continue;
            }
            requests.push(GenerateRequest {
                image_ref: input.image_ref,
                prompt: &sampler.prompt,
                temperature: config.temperature,
                top_p: config.top_p,
                n: count,
                seed: candidate_seed(run_seed, input.input_id, &config.id(), 0),
            });
        }
        layouts.push((input.input_id, entry, slots));
    }
    let mut responses = sampler.generate_all(&requests).into_iter();
    let mut sets = Vec::with_capacity(layouts.len());
    for (input_id, entry, slots) in layouts {
        let mut texts = Vec::with_capacity(slots.len());
        for count in entry.allocation() {
            if count > 0 {
                texts.extend(responses.next().expect("one response per request")?);
            }
        }
        sets.push(fill(input_id, entry, slots, texts));
    }
    Ok(sets)
}

/// A line of a pre-generated candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub input_id: String,
    pub text: String,
    pub config_id: String,
}

/// Groups file records by input. Each input gets exactly its plan budget:
/// surplus records are dropped with a warning and missing ones become empty
/// texts, which verify as generation failures. Without a plan the budget is
/// the record count. Records for unknown inputs are ignored.
pub fn sample_file(
    records: &[FileRecord],
    input_ids: &[&str],
    plan: Option<&SamplingPlan>,
    run_seed: u64,
) -> Vec<CandidateSet> {
    let mut by_input: BTreeMap<&str, Vec<&FileRecord>> = BTreeMap::new();
    for r in records {
        by_input.entry(r.input_id.as_str()).or_default().push(r);
    }
    let assigned = plan.map(|p| p.assign(input_ids.len()));
    input_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let recs = by_input.get(id).cloned().unwrap_or_default();
            let budget_n = match (&assigned, plan) {
                (Some(a), Some(p)) => p.entries[a[i]].budget_n,
                _ => recs.len(),
            };
            if recs.len() > budget_n {
                log::warn!("{id}: {} file candidates for budget {budget_n}, truncating", recs.len());
            }
            let mut per_config: BTreeMap<&str, usize> = BTreeMap::new();
            let candidates = (0..budget_n)
                .map(|k| {
                    let (text, config_id) = match recs.get(k) {
                        Some(r) => (r.text.as_str(), r.config_id.as_str()),
                        None => ("", "missing"),
                    };
                    let nth = per_config.entry(config_id).or_default();
                    let seed = candidate_seed(run_seed, id, config_id, *nth);
                    *nth += 1;
                    Candidate {
                        input_id: id.to_string(),
                        candidate_id: k,
                        text: text.to_string(),
                        config_id: config_id.to_string(),
                        seed,
                        budget_n,
                    }
                })
                .collect();
            CandidateSet {
                input_id: id.to_string(),
                budget_n,
                candidates,
            }
        })
        .collect()
}

/// Regroups flat candidate records (as stored in `candidates.jsonl`) by input,
/// in first-appearance order.
pub fn group_candidates(flat: Vec<Candidate>) -> Vec<CandidateSet> {
    let mut sets: Vec<CandidateSet> = Vec::new();
    for c in flat {
        match sets.last_mut() {
            Some(s) if s.input_id == c.input_id => s.candidates.push(c),
            _ => sets.push(CandidateSet {
                input_id: c.input_id.clone(),
                budget_n: c.budget_n,
                candidates: vec![c],
            }),
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    #[test]
    fn layout_orders_by_config_then_k() {
        let plan = plan_default();
        let entry = &plan.entries[1];
        let slots = layout("x", entry, 1);
        assert_eq!(slots.len(), 16);
        assert_eq!(slots[0].config_id, "T0.2_p0.7");
        assert_eq!(slots[2].config_id, "T0.2_p0.7");
        assert_eq!(slots[3].config_id, "T0.2_p0.8");
        assert_eq!(slots.last().unwrap().config_id, "T0.4_p1");
        assert!(slots.iter().enumerate().all(|(i, s)| s.candidate_id == i));
        assert_ne!(slots[0].seed, slots[1].seed);
        assert_eq!(layout("x", entry, 1)[5].seed, slots[5].seed);
        assert_ne!(layout("y", entry, 1)[5].seed, slots[5].seed);
    }

    #[test]
    fn mock_set_has_budget_count() {
        let gt = parse("rect 1 1\nextrude 1").unwrap();
        let plan = plan_default();
        for e in &plan.entries {
            let set = sample_mock("a", &gt, e, &MockParams::default(), 9);
            assert_eq!(set.candidates.len(), e.budget_n);
        }
    }

    #[test]
    fn file_source_pads_short_inputs() {
        let recs = vec![
            FileRecord {
                input_id: "a".into(),
                text: "rect 1 1\nextrude 1".into(),
                config_id: "c".into(),
            },
            FileRecord {
                input_id: "a".into(),
                text: "rect 1 2\nextrude 1".into(),
                config_id: "c".into(),
            },
        ];
        let plan = plan_default().restrict_to_budget(8).unwrap();
        let sets = sample_file(&recs, &["a", "b"], Some(&plan), 0);
        assert_eq!(sets[0].candidates.len(), 8);
        assert_eq!(sets[0].candidates[1].text, "rect 1 2\nextrude 1");
        assert_eq!(sets[0].candidates[2].text, "");
        assert_eq!(sets[1].candidates.len(), 8);
        let free = sample_file(&recs, &["a", "b"], None, 0);
        assert_eq!(free[0].candidates.len(), 2);
        assert!(free[1].candidates.is_empty());
        let flat: Vec<Candidate> = sets.iter().flat_map(|s| s.candidates.clone()).collect();
        assert_eq!(group_candidates(flat), sets);
    }
}
