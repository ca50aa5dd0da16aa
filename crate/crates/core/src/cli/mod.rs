//! `giftforge` command line. Exit codes: 0 success, 1 golden check failed,
//! 2 configuration or I/O error, 3 sampler transport error. Errors are
//! printed to stderr as one JSON object.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::augmentor::render_requests;
use crate::dataset;
use crate::fixtures;
use crate::metrics::{delta_vs_baseline, gap_percent, matrix_from_curve, pass_at_k, Estimator, ScoreMatrix};
use crate::sampler::{plan_default, SamplingPlan};
use config::{Overrides, RunConfig, WORKERS_ENV};
use run::Context;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Transport(_) => "transport",
            CliError::Check(_) => "check",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code()})
    }
}

#[derive(Debug, Parser)]
#[command(name = "giftforge", version, about = "Verifier-guided data curation for image-to-CAD programs")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// sample → verify → render → augment → metrics in one run directory.
    Pipeline {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Draw candidates into `candidates.jsonl`.
    Sample {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Score `candidates.jsonl` into `verdicts.jsonl` and `stats.json`.
    Verify {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Render ground truths and the candidates the augmentor needs.
    Render {
        #[arg(long)]
        run_dir: PathBuf,
        /// Render only these `input_id:candidate_id` pairs.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Build the augmented manifest, selection splits and balanced manifest.
    Augment {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// pass@k and friends, from a run, a verdicts file, or printed curves.
    Metrics {
        #[arg(long, conflicts_with_all = ["verdicts", "curves"])]
        run_dir: Option<PathBuf>,
        #[arg(long, conflicts_with = "curves")]
        verdicts: Option<PathBuf>,
        /// CSV rows `label,v1,...,vk` of pass@1..k values.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Baseline row label for deltas; defaults to the first row.
        #[arg(long, requires = "curves")]
        baseline: Option<String>,
        /// Where to write the JSON report or the curves CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the sampling plan and per-input allocation.
    Plan {
        /// Number of inputs to spread over the plan entries.
        #[arg(long)]
        inputs: Option<usize>,
        /// Write the plan JSON here.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Regenerate or check the golden oracle files.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum FixturesAction {
    Regen {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    Check {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn new_run_dir(cfg: &RunConfig) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    cfg.output_dir.join(format!("{stamp}-{}", cfg.seed))
}

/// Config for a command: an existing run's `config.json` replaces the
/// defaults as the bottom layer.
fn resolve(o: &Overrides, run_dir: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut base = RunConfig::default();
    if let Some(dir) = run_dir {
        let echo = dir.join(run::CONFIG_FILE);
        if echo.is_file() {
            let e: run::ConfigEcho = dataset::read_json(&echo)?;
            base = e.config;
        }
    }
    RunConfig::resolve(base, o, std::env::var(WORKERS_ENV).ok())
}

fn context(o: &Overrides, run_dir: Option<&Path>) -> Result<Context, CliError> {
    let cfg = resolve(o, run_dir)?;
    let dir = run_dir.map(Path::to_path_buf).unwrap_or_else(|| new_run_dir(&cfg));
    run::prepare(cfg, &dir)
}

fn emit(v: serde_json::Value) {
    use std::io::Write;
    // A closed pipe downstream is not our failure.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&v).expect("json value serializes"));
}

fn parse_pair(s: &str) -> Result<(String, usize), CliError> {
    let (id, k) = s
        .rsplit_once(':')
        .ok_or_else(|| CliError::Config(format!("expected input_id:candidate_id, got {s:?}")))?;
    let k = k
        .parse()
        .map_err(|_| CliError::Config(format!("bad candidate id in {s:?}")))?;
    Ok((id.to_string(), k))
}

pub fn cmd_pipeline(o: &Overrides, run_dir: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let ctx = context(o, run_dir)?;
    let out = run::run_pipeline(&ctx)?;
    Ok(json!({
        "run_dir": ctx.run_dir,
        "candidates": out.candidates.len(),
        "stats": out.stats,
        "renders": out.renders.len(),
        "counts": out.augment.summary.counts,
        "counts_balanced": out.augment.summary.counts_balanced,
        "splits": out.augment.summary.split_sizes,
        "pass_at_k": out.report.pass_at_k,
    }))
}

pub fn cmd_sample(o: &Overrides, run_dir: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let ctx = context(o, run_dir)?;
    let c = run::stage_sample(&ctx)?;
    Ok(json!({"run_dir": ctx.run_dir, "candidates": c.len()}))
}

pub fn cmd_verify(o: &Overrides, run_dir: &Path) -> Result<serde_json::Value, CliError> {
    let ctx = context(o, Some(run_dir))?;
    let candidates = run::load_candidates(run_dir)?;
    let (_, stats) = run::stage_verify(&ctx, &candidates)?;
    Ok(json!({"run_dir": ctx.run_dir, "stats": stats}))
}

pub fn cmd_render(o: &Overrides, run_dir: &Path, only: &[String]) -> Result<serde_json::Value, CliError> {
    let ctx = context(o, Some(run_dir))?;
    let candidates = run::load_candidates(run_dir)?;
    let requests = if only.is_empty() {
        render_requests(&run::load_verdicts(run_dir)?, &ctx.cfg.thresholds)
    } else {
        only.iter().map(|s| parse_pair(s)).collect::<Result<_, _>>()?
    };
    let records = run::stage_render(&ctx, &candidates, &requests)?;
    let failed: Vec<_> = records.iter().filter(|r| r.error.is_some()).collect();
    Ok(json!({"run_dir": ctx.run_dir, "rendered": records.len() - failed.len(), "errors": failed}))
}

pub fn cmd_augment(o: &Overrides, run_dir: &Path) -> Result<serde_json::Value, CliError> {
    let ctx = context(o, Some(run_dir))?;
    let verdicts = run::load_verdicts(run_dir)?;
    let candidates = run::load_candidates(run_dir)?;
    let renders = run::load_renders(run_dir)?;
    let out = run::stage_augment(&ctx, &verdicts, &candidates, &renders)?;
    Ok(json!({
        "run_dir": ctx.run_dir,
        "counts": out.summary.counts,
        "counts_balanced": out.summary.counts_balanced,
        "splits": out.summary.split_sizes,
    }))
}

/// One output row of curve mode.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurveRow {
    pub label: String,
    pub k: usize,
    pub pass_at_k: f64,
    /// Relative change over the baseline at the same k, percent.
    pub delta_vs_baseline_pct: f64,
    /// Relative change over this row's own pass@1, percent.
    pub gap_vs_pass1_pct: f64,
}

/// Parses `label,v1,...,vk` rows. A row labelled `label` or whose second
/// field is not numeric is a header and skipped.
pub fn read_curves(path: &Path) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let Some(label) = rec.get(0) else { continue };
        if label.eq_ignore_ascii_case("label") || rec.get(1).is_none_or(|v| v.parse::<f64>().is_err()) {
            continue;
        }
        let values = rec
            .iter()
            .skip(1)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: row {label}: {e}", path.display())))?;
        rows.push((label.to_string(), values));
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no curve rows", path.display())));
    }
    Ok(rows)
}

pub fn curve_rows(curves: &[(String, Vec<f64>)], baseline: Option<&str>) -> Result<Vec<CurveRow>, CliError> {
    let mcfg = |e: crate::metrics::MetricsError| CliError::Config(e.to_string());
    let matrices: Vec<ScoreMatrix> = curves
        .iter()
        .map(|(l, v)| matrix_from_curve(l, v))
        .collect::<Result<_, _>>()
        .map_err(mcfg)?;
    let base = match baseline {
        Some(b) => matrices
            .iter()
            .find(|m| m.label == b)
            .ok_or_else(|| CliError::Config(format!("no curve labelled {b}")))?,
        None => &matrices[0],
    };
    let mut rows = Vec::new();
    for m in &matrices {
        let kmax = m.scores[0].len().min(base.scores[0].len());
        let p1 = pass_at_k(m, 1, Estimator::FirstK).map_err(mcfg)?;
        for k in 1..=kmax {
            let pk = pass_at_k(m, k, Estimator::FirstK).map_err(mcfg)?;
            rows.push(CurveRow {
                label: m.label.clone(),
                k,
                pass_at_k: pk,
                delta_vs_baseline_pct: delta_vs_baseline(m, base, k, Estimator::FirstK).map_err(mcfg)?,
                gap_vs_pass1_pct: gap_percent(p1, pk),
            });
        }
    }
    Ok(rows)
}

pub fn curve_rows_csv(rows: &[CurveRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_metrics(
    o: &Overrides,
    run_dir: Option<&Path>,
    verdicts: Option<&Path>,
    curves: Option<&Path>,
    baseline: Option<&str>,
    out: Option<&Path>,
) -> Result<serde_json::Value, CliError> {
    if let Some(path) = curves {
        let rows = curve_rows(&read_curves(path)?, baseline)?;
        let target = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("results.csv"));
        dataset::write_file(&target, &curve_rows_csv(&rows)?)?;
        return Ok(json!({"results": target, "rows": rows}));
    }
    match (run_dir, verdicts) {
        (Some(dir), _) => {
            let ctx = context(o, Some(dir))?;
            let v = run::load_verdicts(dir)?;
            let report = run::stage_metrics(&ctx, &v)?;
            Ok(json!({"run_dir": dir, "report": report}))
        }
        (None, Some(path)) => {
            let cfg = resolve(o, None)?;
            let v: Vec<crate::verifier::Verdict> = dataset::read_jsonl(path)?;
            let gt = if cfg.gt_dir.is_dir() {
                dataset::load_gt_dir(&cfg.gt_dir)?
            } else {
                Vec::new()
            };
            let report = run::build_report("verdicts", &v, &gt, &cfg)?;
            if let Some(target) = out {
                dataset::write_json(target, &report)?;
            }
            Ok(json!({"report": report}))
        }
        (None, None) => Err(CliError::Config("metrics needs --run-dir, --verdicts or --curves".into())),
    }
}

#[derive(Debug, serde::Serialize)]
struct PlanRow {
    budget_n: usize,
    configs: Vec<String>,
    allocation: Vec<usize>,
    inputs_per_budget: usize,
    /// Candidates kept by FULL selection at this budget: inputs × ceil(N/10).
    full_selected: usize,
    assigned_inputs: Option<usize>,
}

pub fn cmd_plan(o: &Overrides, inputs: Option<usize>, write: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let cfg = resolve(o, None)?;
    let plan: SamplingPlan = if cfg.plan.is_some() || cfg.budget.is_some() {
        cfg.load_plan()?
    } else {
        plan_default()
    };
    let warnings = plan.validate().map_err(CliError::Config)?;
    let assigned = inputs.map(|n| plan.assign(n));
    let rows: Vec<PlanRow> = plan
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| PlanRow {
            budget_n: e.budget_n,
            configs: e.configs.iter().map(|c| c.id()).collect(),
            allocation: e.allocation(),
            inputs_per_budget: e.inputs_per_budget,
            full_selected: e.inputs_per_budget * crate::augmentor::full_quota(e.budget_n),
            assigned_inputs: assigned.as_ref().map(|a| a.iter().filter(|&&x| x == i).count()),
        })
        .collect();
    if let Some(path) = write {
        dataset::write_json(path, &plan)?;
    }
    Ok(json!({"entries": rows, "warnings": warnings}))
}

pub fn cmd_fixtures(action: &FixturesAction) -> Result<serde_json::Value, CliError> {
    match action {
        FixturesAction::Regen { dir } => {
            let dir = dir.clone().unwrap_or_else(fixtures::golden_dir);
            let written = fixtures::regen(&dir).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(json!({"written": written}))
        }
        FixturesAction::Check { dir } => {
            let dir = dir.clone().unwrap_or_else(fixtures::golden_dir);
            match fixtures::check(&dir) {
                Ok(n) => Ok(json!({"checked": n})),
                Err(fixtures::FixtureError::Dataset(e)) => Err(e.into()),
                Err(e) => Err(CliError::Check(e.to_string())),
            }
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let o = &cli.overrides;
    match &cli.command {
        Command::Pipeline { run_dir } => cmd_pipeline(o, run_dir.as_deref()),
        Command::Sample { run_dir } => cmd_sample(o, run_dir.as_deref()),
        Command::Verify { run_dir } => cmd_verify(o, run_dir),
        Command::Render { run_dir, only } => cmd_render(o, run_dir, only),
        Command::Augment { run_dir } => cmd_augment(o, run_dir),
        Command::Metrics {
            run_dir,
            verdicts,
            curves,
            baseline,
            out,
        } => cmd_metrics(
            o,
            run_dir.as_deref(),
            verdicts.as_deref(),
            curves.as_deref(),
            baseline.as_deref(),
            out.as_deref(),
        ),
        Command::Plan { inputs, write } => cmd_plan(o, *inputs, write.as_deref()),
        Command::Fixtures { action } => cmd_fixtures(action),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(v) => {
            emit(v);
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
