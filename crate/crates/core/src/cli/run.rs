//! Stage functions over a run directory. `cmd_pipeline` chains them in
//! memory; the stage subcommands reload the previous stage's files, so both
//! paths write identical artifacts.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentor::{
    balance, build_gift, build_splits, recount, render_requests, AugmentedPair, BalanceReport, CapRule, GtRecord,
    RenderMap, Split, SplitRecord,
};
use crate::dataset::{self, DatasetError, GtItem};
use crate::dsl::parse;
use crate::executor::execute;
use crate::metrics::{
    amortization_gap, complexity_buckets, fraction_below, pass_at_k, selection_stats, summarize, AmortizationGap,
    Bucket, ComplexityAxis, Estimator, ScoreMatrix, SelectionStats, Summary,
};
use crate::pool::ordered_map;
use crate::renderer::render;
use crate::sampler::{
    group_candidates, sample_file, sample_plan_http, sample_plan_mock, Candidate, CandidateSet, FileRecord,
    HttpSampler, SampleInput, SamplingPlan,
};
use crate::verifier::{verify_batch, GtCache, RunStats, Verdict};

use super::config::{RunConfig, SamplerSource};
use super::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const RENDERS_FILE: &str = "renders.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const BALANCED_FILE: &str = "manifest_balanced.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const PASS_AT_K_FILE: &str = "pass_at_k.csv";

/// Token-count bucket edges for the complexity breakdown.
pub const TOKEN_EDGES: [usize; 3] = [16, 32, 48];
pub const OP_EDGES: [usize; 2] = [2, 4];

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub input_id: String,
    pub sha256: String,
}

/// What `config.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub config: RunConfig,
    pub plan: SamplingPlan,
    pub inputs: Vec<InputHash>,
}

/// Everything a stage needs besides the previous stage's output.
pub struct Context {
    pub cfg: RunConfig,
    pub run_dir: PathBuf,
    pub workers: usize,
    pub gt: Vec<GtItem>,
    pub plan: SamplingPlan,
}

/// Loads the ground truth and plan, then writes `config.json`.
pub fn prepare(cfg: RunConfig, run_dir: &Path) -> Result<Context, CliError> {
    if !cfg.gt_dir.is_dir() {
        return Err(CliError::Io(format!("{}: ground-truth directory not found", cfg.gt_dir.display())));
    }
    let gt = dataset::load_gt_dir(&cfg.gt_dir)?;
    let plan = cfg.load_plan()?;
    let inputs = gt
        .iter()
        .map(|g| InputHash {
            input_id: g.input_id.clone(),
            sha256: hex::encode(Sha256::digest(g.text.as_bytes())),
        })
        .collect();
    std::fs::create_dir_all(run_dir).map_err(|e| CliError::Io(format!("{}: {e}", run_dir.display())))?;
    let echo = ConfigEcho {
        config: cfg.clone(),
        plan: plan.clone(),
        inputs,
    };
    dataset::write_json(&run_dir.join(CONFIG_FILE), &echo)?;
    Ok(Context {
        workers: cfg.effective_workers(),
        cfg,
        run_dir: run_dir.to_path_buf(),
        gt,
        plan,
    })
}

fn flatten(sets: Vec<CandidateSet>) -> Vec<Candidate> {
    sets.into_iter().flat_map(|s| s.candidates).collect()
}

pub fn stage_sample(ctx: &Context) -> Result<Vec<Candidate>, CliError> {
    let placeholder = String::new();
    let inputs: Vec<SampleInput<'_>> = ctx
        .gt
        .iter()
        .map(|g| SampleInput {
            input_id: &g.input_id,
            program: &g.program,
            image_ref: g.image_ref.as_ref().unwrap_or(&placeholder),
        })
        .collect();
    let seed = ctx.cfg.seed;
    let sets = match ctx.cfg.sampler {
        SamplerSource::Mock => sample_plan_mock(&inputs, &ctx.plan, &ctx.cfg.mock, seed, ctx.workers),
        SamplerSource::Http => {
            let endpoint = ctx.cfg.endpoint.as_deref().expect("validated");
            let sampler = HttpSampler::new(endpoint);
            sample_plan_http(&inputs, &ctx.plan, &sampler, seed).map_err(|e| CliError::Transport(e.to_string()))?
        }
        SamplerSource::File => {
            let path = ctx.cfg.candidates_file.as_deref().expect("validated");
            let records: Vec<FileRecord> = dataset::read_jsonl(path)?;
            let ids: Vec<&str> = ctx.gt.iter().map(|g| g.input_id.as_str()).collect();
            sample_file(&records, &ids, Some(&ctx.plan), seed)
        }
    };
    let flat = flatten(sets);
    log::info!("sampled {} candidates for {} inputs", flat.len(), ctx.gt.len());
    dataset::write_jsonl(&ctx.run_dir.join(CANDIDATES_FILE), &flat)?;
    Ok(flat)
}

pub fn stage_verify(ctx: &Context, candidates: &[Candidate]) -> Result<(Vec<Verdict>, RunStats), CliError> {
    let cfg = ctx.cfg.verify_config();
    let cache = GtCache::build(
        ctx.gt.iter().map(|g| (g.input_id.as_str(), &g.program)),
        cfg.resolution,
        ctx.workers,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    cache
        .check_stale(ctx.cfg.seed, cfg.resolution)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sets = group_candidates(candidates.to_vec());
    let (verdicts, _) = verify_batch(&sets, &cache, &cfg, ctx.workers).map_err(|e| CliError::Config(e.to_string()))?;
    // Counted over all inputs, so ones without candidates show as unsolved.
    let ids: Vec<String> = ctx.gt.iter().map(|g| g.input_id.clone()).collect();
    let stats = RunStats::from_verdicts(&ids, &verdicts, &cfg.thresholds);
    log::info!(
        "verified {} candidates: {} valid, bands {:?}",
        stats.candidates,
        stats.valid,
        stats.bands
    );
    dataset::write_jsonl(&ctx.run_dir.join(VERDICTS_FILE), &verdicts)?;
    dataset::write_json(&ctx.run_dir.join(STATS_FILE), &stats)?;
    Ok((verdicts, stats))
}

/// One line of `renders.jsonl`. `candidate_id` is absent for ground-truth images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecord {
    pub input_id: String,
    pub candidate_id: Option<usize>,
    pub image_ref: Option<String>,
    pub error: Option<String>,
}

pub fn gt_image_path(input_id: &str) -> String {
    format!("images/gt/{input_id}.png")
}

pub fn candidate_image_path(input_id: &str, candidate_id: usize) -> String {
    format!("images/fda/{input_id}__{candidate_id}.png")
}

fn render_program(text: &str, ctx: &Context) -> Result<Vec<u8>, String> {
    let program = parse(text).map_err(|e| e.to_string())?;
    let solid = execute(&program, ctx.cfg.resolution).map_err(|e| e.to_string())?;
    let img = render(&solid, &ctx.cfg.render).map_err(|e| e.to_string())?;
    Ok(img.to_png())
}

/// Renders ground truths lacking an image and the requested candidates.
/// Per-item failures are recorded, not raised.
pub fn stage_render(
    ctx: &Context,
    candidates: &[Candidate],
    requests: &[(String, usize)],
) -> Result<Vec<RenderRecord>, CliError> {
    enum Job<'a> {
        Gt(&'a GtItem),
        Cand(&'a str, usize, Option<&'a Candidate>),
    }
    let index: HashMap<(&str, usize), &Candidate> = candidates
        .iter()
        .map(|c| ((c.input_id.as_str(), c.candidate_id), c))
        .collect();
    let mut jobs: Vec<Job<'_>> = ctx.gt.iter().filter(|g| g.image_ref.is_none()).map(Job::Gt).collect();
    jobs.extend(
        requests
            .iter()
            .map(|(id, k)| Job::Cand(id.as_str(), *k, index.get(&(id.as_str(), *k)).copied())),
    );
    let rendered = ordered_map(ctx.workers, &jobs, |job| match job {
        Job::Gt(g) => (g.input_id.clone(), None, gt_image_path(&g.input_id), render_program(&g.text, ctx)),
        Job::Cand(id, k, c) => {
            let bytes = match c {
                Some(c) => render_program(&c.text, ctx),
                None => Err(format!("no candidate {id}:{k}")),
            };
            (id.to_string(), Some(*k), candidate_image_path(id, *k), bytes)
        }
    });
    let mut records = Vec::with_capacity(rendered.len());
    for (input_id, candidate_id, rel, bytes) in rendered {
        let record = match bytes {
            Ok(b) => {
                dataset::write_file(&ctx.run_dir.join(&rel), &b)?;
                RenderRecord {
                    input_id,
                    candidate_id,
                    image_ref: Some(rel),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("render {input_id}:{candidate_id:?} failed: {e}");
                RenderRecord {
                    input_id,
                    candidate_id,
                    image_ref: None,
                    error: Some(e),
                }
            }
        };
        records.push(record);
    }
    dataset::write_jsonl(&ctx.run_dir.join(RENDERS_FILE), &records)?;
    Ok(records)
}

/// Ground-truth image references: the dataset's own image, else the render.
pub fn gt_records(ctx: &Context, renders: &[RenderRecord]) -> Vec<GtRecord> {
    let rendered: HashMap<&str, &RenderRecord> = renders
        .iter()
        .filter(|r| r.candidate_id.is_none())
        .map(|r| (r.input_id.as_str(), r))
        .collect();
    ctx.gt
        .iter()
        .map(|g| GtRecord {
            input_id: g.input_id.clone(),
            text: g.text.clone(),
            image_ref: g
                .image_ref
                .clone()
                .or_else(|| rendered.get(g.input_id.as_str()).and_then(|r| r.image_ref.clone()))
                .unwrap_or_else(|| gt_image_path(&g.input_id)),
        })
        .collect()
}

pub fn render_map(renders: &[RenderRecord]) -> RenderMap {
    renders
        .iter()
        .filter_map(|r| {
            let k = r.candidate_id?;
            let v = match (&r.image_ref, &r.error) {
                (Some(img), _) => Ok(img.clone()),
                (None, e) => Err(e.clone().unwrap_or_default()),
            };
            Some(((r.input_id.clone(), k), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub config: RunConfig,
    pub stats: RunStats,
    pub counts: BTreeMap<Split, usize>,
    pub counts_balanced: BTreeMap<Split, usize>,
    pub duplicates_dropped: usize,
    pub missing_renders: usize,
    pub balance: BalanceReport,
    pub split_sizes: BTreeMap<String, usize>,
}

pub struct AugmentOutput {
    pub pairs: Vec<AugmentedPair>,
    pub balanced: Vec<AugmentedPair>,
    pub full: Vec<SplitRecord>,
    pub fail: Vec<SplitRecord>,
    pub srs: Vec<SplitRecord>,
    pub summary: AugmentSummary,
}

pub fn stage_augment(
    ctx: &Context,
    verdicts: &[Verdict],
    candidates: &[Candidate],
    renders: &[RenderRecord],
) -> Result<AugmentOutput, CliError> {
    let t = &ctx.cfg.thresholds;
    let gt = gt_records(ctx, renders);
    let map = render_map(renders);
    let manifest = build_gift(verdicts, candidates, &gt, &map, t);
    let splits = build_splits(verdicts, candidates, &gt, &map, t);
    let (balanced, report) = balance(&manifest.pairs, ctx.cfg.bin_width, CapRule::MedianNonzero);
    let ids: Vec<String> = ctx.gt.iter().map(|g| g.input_id.clone()).collect();
    let summary = AugmentSummary {
        config: ctx.cfg.clone(),
        stats: RunStats::from_verdicts(&ids, verdicts, t),
        counts: manifest.counts.clone(),
        counts_balanced: recount(&balanced),
        duplicates_dropped: manifest.duplicates_dropped,
        missing_renders: manifest.missing_renders,
        balance: report,
        split_sizes: [
            ("FULL".to_string(), splits.full.len()),
            ("FAIL".to_string(), splits.fail.len()),
            ("SRS".to_string(), splits.srs.len()),
        ]
        .into_iter()
        .collect(),
    };
    let dir = &ctx.run_dir;
    dataset::write_jsonl(&dir.join(MANIFEST_FILE), &manifest.pairs)?;
    dataset::write_jsonl(&dir.join(BALANCED_FILE), &balanced)?;
    dataset::write_jsonl(&dir.join("splits/full.jsonl"), &splits.full)?;
    dataset::write_jsonl(&dir.join("splits/fail.jsonl"), &splits.fail)?;
    dataset::write_jsonl(&dir.join("splits/srs.jsonl"), &splits.srs)?;
    dataset::write_json(&dir.join(SUMMARY_FILE), &summary)?;
    log::info!("manifest counts {:?}, balanced {:?}", summary.counts, summary.counts_balanced);
    Ok(AugmentOutput {
        pairs: manifest.pairs,
        balanced,
        full: splits.full,
        fail: splits.fail,
        srs: splits.srs,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: usize,
    pub first_k: f64,
    pub subset_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub k: usize,
    pub first_k: AmortizationGap,
    pub subset_exact: AmortizationGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub inputs: usize,
    pub summary: Summary,
    pub pass_at_k: Vec<PassAtK>,
    pub amortization_gap: Option<GapReport>,
    pub per_budget: BTreeMap<usize, Vec<PassAtK>>,
    pub selection_with_exact: SelectionStats,
    pub selection_without_exact: SelectionStats,
    pub fraction_below_tau_low: f64,
    /// Ten equal-width bins over [0, 1]; failures land in the first.
    pub histogram: Vec<usize>,
    pub complexity_tokens: Vec<Bucket>,
    pub complexity_ops: Vec<Bucket>,
}

fn curve(m: &ScoreMatrix, max_k: usize) -> Result<Vec<PassAtK>, CliError> {
    let kmax = m.lengths().into_iter().min().unwrap_or(0).min(max_k);
    (1..=kmax)
        .map(|k| {
            let f = |est| pass_at_k(m, k, est).map_err(|e| CliError::Config(e.to_string()));
            Ok(PassAtK {
                k,
                first_k: f(Estimator::FirstK)?,
                subset_exact: f(Estimator::SubsetExact)?,
            })
        })
        .collect()
}

pub fn histogram(scores: &[f64]) -> Vec<usize> {
    let mut h = vec![0usize; 10];
    for &s in scores {
        h[((s * 10.0).floor() as usize).min(9)] += 1;
    }
    h
}

/// Metrics over a verdict set. `gt` supplies complexity profiles; the
/// complexity breakdown is left empty when some input has none.
pub fn build_report(label: &str, verdicts: &[Verdict], gt: &[GtItem], cfg: &RunConfig) -> Result<Report, CliError> {
    let m = ScoreMatrix::from_verdicts(label, verdicts);
    let valid = verdicts.iter().filter(|v| v.score.is_some()).count();
    let pass = curve(&m, cfg.max_k)?;
    let gap = match pass.last() {
        Some(last) if last.k > 1 => {
            let g = |est| amortization_gap(&m, last.k, est).map_err(|e| CliError::Config(e.to_string()));
            Some(GapReport {
                k: last.k,
                first_k: g(Estimator::FirstK)?,
                subset_exact: g(Estimator::SubsetExact)?,
            })
        }
        _ => None,
    };
    let mut by_budget: BTreeMap<usize, Vec<Verdict>> = BTreeMap::new();
    for v in verdicts {
        by_budget.entry(v.budget_n).or_default().push(v.clone());
    }
    let mut per_budget = BTreeMap::new();
    for (n, vs) in by_budget {
        per_budget.insert(n, curve(&ScoreMatrix::from_verdicts(label, &vs), cfg.max_k)?);
    }
    let profiles: HashMap<String, _> = gt.iter().map(|g| (g.input_id.clone(), g.program.complexity())).collect();
    let complete = m.input_ids.iter().all(|id| profiles.contains_key(id));
    let bucket = |edges: &[usize], axis| -> Result<Vec<Bucket>, CliError> {
        if !complete {
            return Ok(Vec::new());
        }
        complexity_buckets(&m, &profiles, edges, axis).map_err(|e| CliError::Config(e.to_string()))
    };
    let all: Vec<f64> = m.scores.iter().flatten().copied().collect();
    Ok(Report {
        label: label.to_string(),
        inputs: m.input_ids.len(),
        summary: summarize(&m, valid),
        pass_at_k: pass,
        amortization_gap: gap,
        per_budget,
        selection_with_exact: selection_stats(&m, true),
        selection_without_exact: selection_stats(&m, false),
        fraction_below_tau_low: fraction_below(&all, cfg.thresholds.tau_low),
        histogram: histogram(&all),
        complexity_tokens: bucket(&TOKEN_EDGES, ComplexityAxis::Tokens)?,
        complexity_ops: bucket(&OP_EDGES, ComplexityAxis::Ops)?,
    })
}

pub fn pass_at_k_csv(rows: &[PassAtK]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "first_k", "subset_exact"])
        .and_then(|_| {
            for r in rows {
                w.write_record([r.k.to_string(), r.first_k.to_string(), r.subset_exact.to_string()])?;
            }
            Ok(())
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn stage_metrics(ctx: &Context, verdicts: &[Verdict]) -> Result<Report, CliError> {
    let report = build_report("run", verdicts, &ctx.gt, &ctx.cfg)?;
    dataset::write_json(&ctx.run_dir.join(REPORT_FILE), &report)?;
    dataset::write_file(&ctx.run_dir.join(PASS_AT_K_FILE), &pass_at_k_csv(&report.pass_at_k)?)?;
    Ok(report)
}

pub struct PipelineOutcome {
    pub candidates: Vec<Candidate>,
    pub verdicts: Vec<Verdict>,
    pub stats: RunStats,
    pub renders: Vec<RenderRecord>,
    pub augment: AugmentOutput,
    pub report: Report,
}

/// sample → verify → render → augment → metrics.
pub fn run_pipeline(ctx: &Context) -> Result<PipelineOutcome, CliError> {
    let candidates = stage_sample(ctx)?;
    let (verdicts, stats) = stage_verify(ctx, &candidates)?;
    let requests = render_requests(&verdicts, &ctx.cfg.thresholds);
    let renders = stage_render(ctx, &candidates, &requests)?;
    let augment = stage_augment(ctx, &verdicts, &candidates, &renders)?;
    let report = stage_metrics(ctx, &verdicts)?;
    Ok(PipelineOutcome {
        candidates,
        verdicts,
        stats,
        renders,
        augment,
        report,
    })
}

pub fn load_candidates(run_dir: &Path) -> Result<Vec<Candidate>, CliError> {
    Ok(dataset::read_jsonl(&run_dir.join(CANDIDATES_FILE))?)
}

pub fn load_verdicts(run_dir: &Path) -> Result<Vec<Verdict>, CliError> {
    Ok(dataset::read_jsonl(&run_dir.join(VERDICTS_FILE))?)
}

pub fn load_renders(run_dir: &Path) -> Result<Vec<RenderRecord>, CliError> {
    Ok(dataset::read_jsonl(&run_dir.join(RENDERS_FILE))?)
}
