//! Candidate scoring against ground truth and band classification.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{canonical_text, parse, CadProgram};
use crate::executor::{execute, ExecError, VoxelSolid, DEFAULT_RESOLUTION};
use crate::geometry::{iou_best_posed, GeometryError, Orientations, Posed};
use crate::pool::ordered_map;
use crate::sampler::CandidateSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_low: f64,
    pub tau_valid: f64,
    pub tau_match: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_low: 0.5,
            tau_valid: 0.9,
            tau_match: 0.99,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        let ok = 0.0 < self.tau_low
            && self.tau_low < self.tau_valid
            && self.tau_valid < self.tau_match
            && self.tau_match <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "thresholds must satisfy 0 < tau_low < tau_valid < tau_match <= 1, got {} / {} / {}",
                self.tau_low, self.tau_valid, self.tau_match
            ))
        }
    }

    pub fn band(&self, score: f64) -> Band {
        if score >= self.tau_match {
            Band::Match
        } else if score >= self.tau_valid {
            Band::Srs
        } else if score >= self.tau_low {
            Band::Fda
        } else {
            Band::Reject
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Band {
    Match,
    Srs,
    Fda,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    /// Text did not parse.
    FailedGen,
    /// Parsed but the geometry was degenerate.
    FailedExec,
    /// Executed to an empty or degenerate solid.
    NotSolid,
}

/// Band from an optional score; errors and missing scores are REJECT.
pub fn classify(score: Option<f64>, t: &Thresholds) -> Band {
    match score {
        Some(s) if s.is_finite() => t.band(s),
        _ => Band::Reject,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub input_id: String,
    pub candidate_id: usize,
    pub score: Option<f64>,
    pub band: Band,
    pub error: Option<ErrorKind>,
    pub budget_n: usize,
    pub config_id: String,
    pub exact_text_match: bool,
}

/// Score and classification of one candidate, before identifiers are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub score: Option<f64>,
    pub band: Band,
    pub error: Option<ErrorKind>,
    pub exact_text_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub thresholds: Thresholds,
    pub resolution: usize,
    pub orientations: Orientations,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            thresholds: Thresholds::default(),
            resolution: DEFAULT_RESOLUTION,
            orientations: Orientations::Proper24,
        }
    }
}

#[derive(Debug, Error)]
pub enum GtError {
    #[error("ground truth {input_id} does not execute: {source}")]
    Exec { input_id: String, source: ExecError },
    #[error("ground truth {input_id} is degenerate: {source}")]
    Geometry {
        input_id: String,
        source: GeometryError,
    },
    #[error("ground-truth cache entry {input_id} is stale")]
    Stale { input_id: String },
    #[error("no ground truth for input {0}")]
    Missing(String),
}

/// An executed ground truth, ready for repeated comparison.
#[derive(Debug, Clone)]
pub struct GtSolid {
    pub canonical: String,
    pub posed: Posed,
}

impl GtSolid {
    pub fn prepare(input_id: &str, program: &CadProgram, resolution: usize) -> Result<GtSolid, GtError> {
        let solid = execute(program, resolution).map_err(|source| GtError::Exec {
            input_id: input_id.to_string(),
            source,
        })?;
        let posed = Posed::new(solid).map_err(|source| GtError::Geometry {
            input_id: input_id.to_string(),
            source,
        })?;
        Ok(GtSolid {
            canonical: program.serialize(),
            posed,
        })
    }

    pub fn solid(&self) -> &VoxelSolid {
        self.posed.solid()
    }
}

/// Executed ground truths keyed by a hash of canonical text and resolution.
#[derive(Debug, Default)]
pub struct GtCache {
    entries: HashMap<[u8; 32], Arc<GtSolid>>,
    by_input: BTreeMap<String, [u8; 32]>,
    programs: BTreeMap<String, CadProgram>,
}

pub fn gt_key(canonical: &str, resolution: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update((resolution as u64).to_le_bytes());
    h.finalize().into()
}

impl GtCache {
    pub fn new() -> Self {
        GtCache::default()
    }

    /// Executes each distinct ground truth once; equal programs share an entry.
    pub fn build<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a CadProgram)>,
        resolution: usize,
        workers: usize,
    ) -> Result<GtCache, GtError> {
        let items: Vec<(&str, &CadProgram)> = items.into_iter().collect();
        let mut cache = GtCache::new();
        let mut pending: Vec<([u8; 32], &str, &CadProgram)> = Vec::new();
        for &(id, program) in &items {
            let key = gt_key(&program.serialize(), resolution);
            cache.by_input.insert(id.to_string(), key);
            cache.programs.insert(id.to_string(), program.clone());
            if !pending.iter().any(|(k, _, _)| *k == key) {
                pending.push((key, id, program));
            }
        }
        let solids = ordered_map(workers, &pending, |(_, id, p)| GtSolid::prepare(id, p, resolution));
        for ((key, _, _), solid) in pending.iter().zip(solids) {
            cache.entries.insert(*key, Arc::new(solid?));
        }
        Ok(cache)
    }

    pub fn get(&self, input_id: &str) -> Option<&Arc<GtSolid>> {
        self.by_input.get(input_id).and_then(|k| self.entries.get(k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Re-executes one entry chosen by `seed` and checks it still matches.
    pub fn check_stale(&self, seed: u64, resolution: usize) -> Result<(), GtError> {
        if self.by_input.is_empty() {
            return Ok(());
        }
        let pick = ChaCha8Rng::seed_from_u64(seed).random_range(0..self.by_input.len());
        let (id, key) = self.by_input.iter().nth(pick).expect("index in range");
        let fresh = GtSolid::prepare(id, &self.programs[id], resolution)?;
        let cached = &self.entries[key];
        if fresh.solid() != cached.solid() || fresh.canonical != cached.canonical {
            return Err(GtError::Stale {
                input_id: id.clone(),
            });
        }
        Ok(())
    }

    #[cfg(test)]
    fn corrupt(&mut self, input_id: &str, solid: VoxelSolid) {
        let key = self.by_input[input_id];
        let canonical = self.entries[&key].canonical.clone();
        let posed = Posed::new(solid).unwrap();
        self.entries.insert(key, Arc::new(GtSolid { canonical, posed }));
    }
}

/// parse → execute → IoU-best against a prepared ground truth. Never fails;
/// problems are reported in the assessment.
pub fn assess(candidate_text: &str, gt: &GtSolid, cfg: &VerifyConfig) -> Assessment {
    let reject = |error| Assessment {
        score: None,
        band: Band::Reject,
        error: Some(error),
        exact_text_match: false,
    };
    let program = match parse(candidate_text) {
        Ok(p) => p,
        Err(_) => return reject(ErrorKind::FailedGen),
    };
    let exact_text_match = program.serialize() == gt.canonical;
    let solid = match execute(&program, cfg.resolution) {
        Ok(s) => s,
        Err(ExecError::NotSolid) => return reject(ErrorKind::NotSolid),
        Err(_) => return reject(ErrorKind::FailedExec),
    };
    let score = Posed::new(solid)
        .and_then(|p| iou_best_posed(&p, &gt.posed, cfg.resolution, cfg.orientations));
    match score {
        Ok(best) => Assessment {
            score: Some(best.score),
            band: cfg.thresholds.band(best.score),
            error: None,
            exact_text_match,
        },
        Err(_) => Assessment {
            exact_text_match,
            ..reject(ErrorKind::NotSolid)
        },
    }
}

/// Single-candidate verification, executing the ground truth on the fly.
pub fn verify(candidate_text: &str, gt: &CadProgram, cfg: &VerifyConfig) -> Result<Assessment, GtError> {
    let gt = GtSolid::prepare("gt", gt, cfg.resolution)?;
    Ok(assess(candidate_text, &gt, cfg))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCounts {
    #[serde(rename = "FailedGen")]
    pub failed_gen: usize,
    #[serde(rename = "FailedExec")]
    pub failed_exec: usize,
    #[serde(rename = "NotSolid")]
    pub not_solid: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    #[serde(rename = "FailedGen")]
    pub failed_gen: f64,
    #[serde(rename = "FailedExec")]
    pub failed_exec: f64,
    #[serde(rename = "NotSolid")]
    pub not_solid: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub inputs: usize,
    pub candidates: usize,
    pub valid: usize,
    /// Percent of candidates that produced a score.
    pub valid_rate: f64,
    pub errors: ErrorCounts,
    /// Percent of candidates per error kind.
    pub error_rates: ErrorRates,
    pub bands: BTreeMap<Band, usize>,
    /// Inputs with at least one candidate at or above `tau_valid`.
    pub solved_inputs: usize,
    pub unsolved_inputs: usize,
    /// Mean score with failures counted as 0.
    pub mean_iou: f64,
}

impl RunStats {
    pub fn from_verdicts(input_ids: &[String], verdicts: &[Verdict], t: &Thresholds) -> RunStats {
        let mut s = RunStats {
            inputs: input_ids.len(),
            candidates: verdicts.len(),
            ..RunStats::default()
        };
        for b in [Band::Match, Band::Srs, Band::Fda, Band::Reject] {
            s.bands.insert(b, 0);
        }
        let mut total = 0.0;
        for v in verdicts {
            *s.bands.entry(v.band).or_default() += 1;
            match v.error {
                None => s.valid += 1,
                Some(ErrorKind::FailedGen) => s.errors.failed_gen += 1,
                Some(ErrorKind::FailedExec) => s.errors.failed_exec += 1,
                Some(ErrorKind::NotSolid) => s.errors.not_solid += 1,
            }
            total += v.score.unwrap_or(0.0);
        }
        let pct = |n: usize| {
            if verdicts.is_empty() {
                0.0
            } else {
                100.0 * n as f64 / verdicts.len() as f64
            }
        };
        s.valid_rate = pct(s.valid);
        s.error_rates = ErrorRates {
            failed_gen: pct(s.errors.failed_gen),
            failed_exec: pct(s.errors.failed_exec),
            not_solid: pct(s.errors.not_solid),
        };
        s.mean_iou = if verdicts.is_empty() {
            0.0
        } else {
            total / verdicts.len() as f64
        };
        let solved: std::collections::HashSet<&str> = verdicts
            .iter()
            .filter(|v| v.score.is_some_and(|x| x >= t.tau_valid))
            .map(|v| v.input_id.as_str())
            .collect();
        s.solved_inputs = input_ids.iter().filter(|id| solved.contains(id.as_str())).count();
        s.unsolved_inputs = s.inputs - s.solved_inputs;
        s
    }
}

/// Verifies every candidate of every input on `workers` threads. Verdicts are
/// ordered by input, then candidate, whatever the schedule.
pub fn verify_batch(
    sets: &[CandidateSet],
    gt: &GtCache,
    cfg: &VerifyConfig,
    workers: usize,
) -> Result<(Vec<Verdict>, RunStats), GtError> {
    let mut jobs = Vec::new();
    for set in sets {
        let solid = gt
            .get(&set.input_id)
            .ok_or_else(|| GtError::Missing(set.input_id.clone()))?;
        for c in &set.candidates {
            jobs.push((c, Arc::clone(solid)));
        }
    }
    let verdicts = ordered_map(workers, &jobs, |(c, solid)| {
        let a = assess(&c.text, solid, cfg);
        Verdict {
            input_id: c.input_id.clone(),
            candidate_id: c.candidate_id,
            score: a.score,
            band: a.band,
            error: a.error,
            budget_n: c.budget_n,
            config_id: c.config_id.clone(),
            exact_text_match: a.exact_text_match,
        }
    });
    let ids: Vec<String> = sets.iter().map(|s| s.input_id.clone()).collect();
    let stats = RunStats::from_verdicts(&ids, &verdicts, &cfg.thresholds);
    Ok((verdicts, stats))
}

/// True when `a` and `b` are the same program up to formatting.
pub fn same_program(a: &str, b: &str) -> bool {
    matches!((canonical_text(a), canonical_text(b)), (Some(x), Some(y)) if x == y)
}
