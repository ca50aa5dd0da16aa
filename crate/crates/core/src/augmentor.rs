//! Training-set construction from verdicts: SRS output augmentation, FDA
//! input augmentation, the FULL/FAIL/SRS selection splits and score-histogram
//! balancing.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::canonical_text;
use crate::sampler::Candidate;
use crate::verifier::{Band, Thresholds, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    SFT,
    SRS,
    FDA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub image_ref: String,
    pub program: String,
    pub split: Split,
    pub input_id: String,
    /// `None` for the ground-truth pair.
    pub candidate_id: Option<usize>,
    pub score: Option<f64>,
}

/// Ground truth as the augmentor sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub input_id: String,
    pub text: String,
    pub image_ref: String,
}

/// Rendered image reference per `(input_id, candidate_id)`, or why it failed.
pub type RenderMap = BTreeMap<(String, usize), Result<String, String>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<AugmentedPair>,
    pub counts: BTreeMap<Split, usize>,
    pub duplicates_dropped: usize,
    pub missing_renders: usize,
}

fn candidate_index(candidates: &[Candidate]) -> HashMap<(&str, usize), &Candidate> {
    candidates
        .iter()
        .map(|c| ((c.input_id.as_str(), c.candidate_id), c))
        .collect()
}

fn verdicts_by_input(verdicts: &[Verdict]) -> HashMap<&str, Vec<&Verdict>> {
    let mut m: HashMap<&str, Vec<&Verdict>> = HashMap::new();
    for v in verdicts {
        m.entry(v.input_id.as_str()).or_default().push(v);
    }
    for vs in m.values_mut() {
        vs.sort_by_key(|v| v.candidate_id);
    }
    m
}

/// One SFT pair per input, one SRS pair per distinct SRS-band candidate and
/// one FDA pair per distinct rendered FDA-band candidate.
///
/// Candidates are deduplicated per input by canonical text, keeping the lowest
/// candidate id. SRS candidates identical to the ground truth are skipped.
/// FDA candidates without a render are counted in `missing_renders`.
pub fn build_gift(
    verdicts: &[Verdict],
    candidates: &[Candidate],
    gt: &[GtRecord],
    renders: &RenderMap,
    t: &Thresholds,
) -> Manifest {
    let cands = candidate_index(candidates);
    let by_input = verdicts_by_input(verdicts);
    let mut m = Manifest::default();
    for g in gt {
        m.pairs.push(AugmentedPair {
            image_ref: g.image_ref.clone(),
            program: g.text.clone(),
            split: Split::SFT,
            input_id: g.input_id.clone(),
            candidate_id: None,
            score: None,
        });
        let gt_canonical = canonical_text(&g.text);
        let mut seen: HashSet<String> = HashSet::new();
        let mut srs_ids: HashSet<usize> = HashSet::new();
        for v in by_input.get(g.input_id.as_str()).into_iter().flatten() {
            let (Some(score), band @ (Band::Srs | Band::Fda)) = (v.score, v.band) else {
                continue;
            };
            debug_assert_eq!(t.band(score), band, "band disagrees with score");
            let Some(c) = cands.get(&(g.input_id.as_str(), v.candidate_id)) else {
                continue;
            };
            let canonical = canonical_text(&c.text).unwrap_or_else(|| c.text.clone());
            if !seen.insert(canonical.clone()) {
                m.duplicates_dropped += 1;
                continue;
            }
            match band {
                Band::Srs => {
                    if Some(&canonical) == gt_canonical.as_ref() {
                        m.duplicates_dropped += 1;
                        continue;
                    }
                    srs_ids.insert(v.candidate_id);
                    m.pairs.push(AugmentedPair {
                        image_ref: g.image_ref.clone(),
                        program: c.text.clone(),
                        split: Split::SRS,
                        input_id: g.input_id.clone(),
                        candidate_id: Some(v.candidate_id),
                        score: Some(score),
                    });
                }
                _ => {
                    assert!(!srs_ids.contains(&v.candidate_id), "candidate in both SRS and FDA");
                    match renders.get(&(g.input_id.clone(), v.candidate_id)) {
                        Some(Ok(image_ref)) => m.pairs.push(AugmentedPair {
                            image_ref: image_ref.clone(),
                            program: g.text.clone(),
                            split: Split::FDA,
                            input_id: g.input_id.clone(),
                            candidate_id: Some(v.candidate_id),
                            score: Some(score),
                        }),
                        other => {
                            let why = match other {
                                Some(Err(e)) => e.as_str(),
                                _ => "no render",
                            };
                            log::warn!("{} candidate {}: skipping FDA pair: {why}", g.input_id, v.candidate_id);
                            m.missing_renders += 1;
                        }
                    }
                }
            }
        }
    }
    m.counts = count_splits(&m.pairs);
    m
}

fn count_splits(pairs: &[AugmentedPair]) -> BTreeMap<Split, usize> {
    let mut counts: BTreeMap<Split, usize> = [Split::SFT, Split::SRS, Split::FDA].map(|s| (s, 0)).into();
    for p in pairs {
        *counts.entry(p.split).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectionSplit {
    FULL,
    FAIL,
    SRS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub split: SelectionSplit,
    pub input_id: String,
    pub candidate_id: Option<usize>,
    pub score: Option<f64>,
    pub image_ref: String,
    pub program: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub full: Vec<SplitRecord>,
    pub fail: Vec<SplitRecord>,
    pub srs: Vec<SplitRecord>,
}

/// Scored verdicts of one input, best first; ties go to the lower id.
fn ranked<'a>(vs: &[&'a Verdict]) -> Vec<(&'a Verdict, f64)> {
    let mut r: Vec<(&Verdict, f64)> = vs.iter().filter_map(|v| v.score.map(|s| (*v, s))).collect();
    r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.candidate_id.cmp(&b.0.candidate_id)));
    r
}

/// Number kept by the FULL split for an input with `k` candidates.
pub fn full_quota(k: usize) -> usize {
    k.div_ceil(10)
}

/// Selection splits per input:
/// * FULL: the best `ceil(K/10)` candidates among those scoring above
///   `tau_low`, paired with the original image.
/// * FAIL: when the best score is below `tau_valid`, the best candidate's
///   render paired with the ground-truth program.
/// * SRS: the ground-truth pair, plus the best candidate when it scores
///   strictly between `tau_valid` and `tau_match` and is not the ground truth.
pub fn build_splits(
    verdicts: &[Verdict],
    candidates: &[Candidate],
    gt: &[GtRecord],
    renders: &RenderMap,
    t: &Thresholds,
) -> Splits {
    let cands = candidate_index(candidates);
    let by_input = verdicts_by_input(verdicts);
    let mut out = Splits::default();
    for g in gt {
        let vs = by_input.get(g.input_id.as_str()).cloned().unwrap_or_default();
        let ranked = ranked(&vs);
        let text_of = |v: &Verdict| {
            cands
                .get(&(g.input_id.as_str(), v.candidate_id))
                .map(|c| c.text.clone())
                .unwrap_or_default()
        };
        let record = |split, v: Option<(&Verdict, f64)>, image_ref: &str, program: String| SplitRecord {
            split,
            input_id: g.input_id.clone(),
            candidate_id: v.map(|(v, _)| v.candidate_id),
            score: v.map(|(_, s)| s),
            image_ref: image_ref.to_string(),
            program,
        };
        for &(v, s) in ranked.iter().take(full_quota(vs.len())) {
            if s > t.tau_low {
                out.full.push(record(SelectionSplit::FULL, Some((v, s)), &g.image_ref, text_of(v)));
            }
        }
        if let Some(&(v, s)) = ranked.first() {
            if s < t.tau_valid {
                match renders.get(&(g.input_id.clone(), v.candidate_id)) {
                    Some(Ok(image)) => {
                        out.fail.push(record(SelectionSplit::FAIL, Some((v, s)), image, g.text.clone()))
                    }
                    _ => log::warn!("{} candidate {}: no render for FAIL split", g.input_id, v.candidate_id),
                }
            }
        }
        out.srs.push(record(SelectionSplit::SRS, None, &g.image_ref, g.text.clone()));
        if let Some(&(v, s)) = ranked.first() {
            let text = text_of(v);
            let duplicate = canonical_text(&text).is_some() && canonical_text(&text) == canonical_text(&g.text);
            if s > t.tau_valid && s < t.tau_match && !duplicate {
                out.srs.push(record(SelectionSplit::SRS, Some((v, s)), &g.image_ref, text));
            }
        }
    }
    out
}

/// Candidates whose image must be rendered for `build_gift` and
/// `build_splits`: every FDA-band candidate and each failing input's best.
pub fn render_requests(verdicts: &[Verdict], t: &Thresholds) -> Vec<(String, usize)> {
    let mut want: Vec<(String, usize)> = verdicts
        .iter()
        .filter(|v| v.band == Band::Fda)
        .map(|v| (v.input_id.clone(), v.candidate_id))
        .collect();
    let mut order: Vec<&str> = Vec::new();
    let by_input = verdicts_by_input(verdicts);
    for v in verdicts {
        if !order.contains(&v.input_id.as_str()) {
            order.push(&v.input_id);
        }
    }
    for id in order {
        if let Some(&(v, s)) = ranked(&by_input[id]).first() {
            if s < t.tau_valid {
                want.push((id.to_string(), v.candidate_id));
            }
        }
    }
    want.sort();
    want.dedup();
    want
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub lo: f64,
    pub hi: f64,
    pub before: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub bin_width: f64,
    pub cap: usize,
    pub bins: Vec<BinReport>,
    pub total_dropped: usize,
}

/// How the per-bin cap is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapRule {
    /// Median of the nonzero bin counts; for an even number of bins, the
    /// floor of the two middle counts' mean.
    #[default]
    MedianNonzero,
    Fixed(usize),
}

pub const BALANCE_LO: f64 = 0.5;
pub const BALANCE_HI: f64 = 1.0;

pub fn bin_of(score: f64, width: f64, bins: usize) -> Option<usize> {
    if !(BALANCE_LO..=BALANCE_HI).contains(&score) {
        return None;
    }
    Some((((score - BALANCE_LO) / width + 1e-9).floor() as usize).min(bins - 1))
}

/// Deterministic pseudo-random key for downsampling.
pub fn stable_hash(input_id: &str, candidate_id: Option<usize>) -> u64 {
    let mut h = Sha256::new();
    h.update(input_id.as_bytes());
    h.update([0u8]);
    match candidate_id {
        Some(c) => h.update((c as u64).to_le_bytes()),
        None => h.update(b"gt"),
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest is 32 bytes"))
}

pub fn median_cap(counts: &[usize]) -> usize {
    let mut nz: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if nz.is_empty() {
        return 0;
    }
    nz.sort_unstable();
    let n = nz.len();
    if n % 2 == 1 {
        nz[n / 2]
    } else {
        (nz[n / 2 - 1] + nz[n / 2]) / 2
    }
}

/// Flattens the score histogram over `[0.5, 1.0]`: bins above the cap keep
/// the pairs with the lowest [`stable_hash`]. Unscored pairs and scores
/// outside the range pass through. Order of kept pairs is preserved.
pub fn balance(pairs: &[AugmentedPair], bin_width: f64, rule: CapRule) -> (Vec<AugmentedPair>, BalanceReport) {
    assert!(bin_width > 0.0 && bin_width <= BALANCE_HI - BALANCE_LO);
    let nbins = ((BALANCE_HI - BALANCE_LO) / bin_width - 1e-9).ceil() as usize;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nbins];
    for (i, p) in pairs.iter().enumerate() {
        if let Some(b) = p.score.and_then(|s| bin_of(s, bin_width, nbins)) {
            members[b].push(i);
        }
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let cap = match rule {
        CapRule::MedianNonzero => median_cap(&counts),
        CapRule::Fixed(c) => c,
    };
    let mut drop = vec![false; pairs.len()];
    let mut report = BalanceReport {
        bin_width,
        cap,
        bins: Vec::with_capacity(nbins),
        total_dropped: 0,
    };
    for (b, idx) in members.iter().enumerate() {
        let mut order = idx.clone();
        order.sort_by_key(|&i| (stable_hash(&pairs[i].input_id, pairs[i].candidate_id), i));
        let dropped = order.len().saturating_sub(cap);
        for &i in order.iter().skip(cap) {
            drop[i] = true;
        }
        report.total_dropped += dropped;
        report.bins.push(BinReport {
            lo: BALANCE_LO + b as f64 * bin_width,
            hi: (BALANCE_LO + (b + 1) as f64 * bin_width).min(BALANCE_HI),
            before: idx.len(),
            kept: idx.len() - dropped,
            dropped,
        });
    }
    if pairs.is_empty() {
        report.bins.clear();
    }
    let kept = pairs
        .iter()
        .zip(&drop)
        .filter(|(_, d)| !**d)
        .map(|(p, _)| p.clone())
        .collect();
    (kept, report)
}

pub fn recount(pairs: &[AugmentedPair]) -> BTreeMap<Split, usize> {
    count_splits(pairs)
}
