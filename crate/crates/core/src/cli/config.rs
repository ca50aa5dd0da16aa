//! Run configuration: defaults < run-dir echo < config file < environment < flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset;
use crate::executor::{check_resolution, DEFAULT_RESOLUTION};
use crate::geometry::Orientations;
use crate::renderer::RenderSpec;
use crate::sampler::{plan_default, MockParams, SamplingPlan};
use crate::verifier::{Thresholds, VerifyConfig};

use super::CliError;

pub const WORKERS_ENV: &str = "GIFTFORGE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerSource {
    #[default]
    Mock,
    Http,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gt_dir: PathBuf,
    pub resolution: usize,
    pub thresholds: Thresholds,
    /// Sampling plan JSON; the built-in mix when absent.
    pub plan: Option<PathBuf>,
    /// Restrict the plan to the entry with this budget.
    pub budget: Option<usize>,
    pub sampler: SamplerSource,
    pub endpoint: Option<String>,
    pub candidates_file: Option<PathBuf>,
    pub mock: MockParams,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// 0 picks the machine's parallelism.
    pub workers: usize,
    pub orientations: usize,
    pub render: RenderSpec,
    pub bin_width: f64,
    /// Largest k reported by the metrics stage.
    pub max_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gt_dir: PathBuf::from("data/gt"),
            resolution: DEFAULT_RESOLUTION,
            thresholds: Thresholds::default(),
            plan: None,
            budget: None,
            sampler: SamplerSource::Mock,
            endpoint: None,
            candidates_file: None,
            mock: MockParams::default(),
            output_dir: PathBuf::from("runs"),
            seed: 0,
            workers: 0,
            orientations: 24,
            render: RenderSpec::default(),
            bin_width: 0.05,
            max_k: 10,
        }
    }
}

/// Flag values; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory of ground-truth `.gcad` programs.
    #[arg(long, global = true)]
    pub gt_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[arg(long, global = true)]
    pub tau_low: Option<f64>,
    #[arg(long, global = true)]
    pub tau_valid: Option<f64>,
    #[arg(long, global = true)]
    pub tau_match: Option<f64>,
    /// Sampling plan JSON.
    #[arg(long, global = true)]
    pub plan: Option<PathBuf>,
    /// Only sample the plan entry with this budget N.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub sampler: Option<SamplerSource>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// JSONL of pre-generated candidates for `--sampler file`.
    #[arg(long, global = true)]
    pub candidates_file: Option<PathBuf>,
    /// Mock policy jitter scale.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Orientation set size for IoU search: 24 or 48.
    #[arg(long, global = true)]
    pub orientations: Option<usize>,
    #[arg(long, global = true)]
    pub max_k: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    /// Layers a config file, the worker env var and flags over `base`.
    pub fn resolve(base: RunConfig, o: &Overrides, env_workers: Option<String>) -> Result<RunConfig, CliError> {
        let mut c = match &o.config {
            Some(path) => merge_file(base, path)?,
            None => base,
        };
        if let Some(w) = env_workers {
            c.workers = w
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={w:?} is not a worker count")))?;
        }
        set(&mut c.gt_dir, o.gt_dir.clone());
        set(&mut c.resolution, o.resolution);
        set(&mut c.thresholds.tau_low, o.tau_low);
        set(&mut c.thresholds.tau_valid, o.tau_valid);
        set(&mut c.thresholds.tau_match, o.tau_match);
        if o.plan.is_some() {
            c.plan = o.plan.clone();
        }
        if o.budget.is_some() {
            c.budget = o.budget;
        }
        set(&mut c.sampler, o.sampler);
        if o.endpoint.is_some() {
            c.endpoint = o.endpoint.clone();
        }
        if o.candidates_file.is_some() {
            c.candidates_file = o.candidates_file.clone();
        }
        set(&mut c.mock.sigma, o.sigma);
        set(&mut c.output_dir, o.output_dir.clone());
        set(&mut c.seed, o.seed);
        set(&mut c.workers, o.workers);
        set(&mut c.orientations, o.orientations);
        set(&mut c.max_k, o.max_k);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if check_resolution(self.resolution).is_err() {
            return bad(format!("resolution {} must be a power of two >= 8", self.resolution));
        }
        self.thresholds.validate().map_err(CliError::Config)?;
        self.mock.validate().map_err(CliError::Config)?;
        self.render
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if Orientations::from_count(self.orientations).is_none() {
            return bad(format!("orientations must be 24 or 48, got {}", self.orientations));
        }
        if !(self.bin_width > 0.0 && self.bin_width <= 0.5) {
            return bad(format!("bin_width {} outside (0, 0.5]", self.bin_width));
        }
        if self.max_k == 0 {
            return bad("max_k must be positive".into());
        }
        match self.sampler {
            SamplerSource::Http if self.endpoint.is_none() => bad("http sampler needs an endpoint".into()),
            SamplerSource::File if self.candidates_file.is_none() => {
                bad("file sampler needs candidates_file".into())
            }
            _ => Ok(()),
        }
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            thresholds: self.thresholds,
            resolution: self.resolution,
            orientations: Orientations::from_count(self.orientations).expect("validated"),
        }
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            crate::pool::default_workers()
        } else {
            self.workers
        }
    }

    /// The configured plan, restricted to `budget` when set.
    pub fn load_plan(&self) -> Result<SamplingPlan, CliError> {
        let plan = match &self.plan {
            Some(p) => dataset::read_json(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => plan_default(),
        };
        let warnings = plan.validate().map_err(CliError::Config)?;
        for w in warnings {
            log::warn!("{w}");
        }
        match self.budget {
            Some(n) => plan
                .restrict_to_budget(n)
                .ok_or_else(|| CliError::Config(format!("plan has no entry with budget {n}"))),
            None => Ok(plan),
        }
    }
}

/// Overlays the keys present in a JSON file onto `base`.
fn merge_file(base: RunConfig, path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let overlay: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut merged = serde_json::to_value(&base).expect("config serializes");
    merge_json(&mut merged, overlay);
    serde_json::from_value(merged).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn merge_json(dst: &mut serde_json::Value, src: serde_json::Value) {
    match (dst, src) {
        (serde_json::Value::Object(d), serde_json::Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_env_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "workers": 2, "thresholds": {"tau_low": 0.4}}"#).unwrap();
        let mut o = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(RunConfig::default(), &o, None).unwrap();
        assert_eq!((c.seed, c.workers, c.thresholds.tau_low, c.thresholds.tau_valid), (5, 2, 0.4, 0.9));
        let c = RunConfig::resolve(RunConfig::default(), &o, Some("3".into())).unwrap();
        assert_eq!(c.workers, 3);
        o.workers = Some(7);
        o.seed = Some(9);
        let c = RunConfig::resolve(RunConfig::default(), &o, Some("3".into())).unwrap();
        assert_eq!((c.seed, c.workers), (9, 7));
    }

    #[test]
    fn rejects_bad_values() {
        let o = |f: fn(&mut Overrides)| {
            let mut o = Overrides::default();
            f(&mut o);
            RunConfig::resolve(RunConfig::default(), &o, None)
        };
        assert!(o(|o| o.resolution = Some(48)).is_err());
        assert!(o(|o| o.orientations = Some(12)).is_err());
        assert!(o(|o| o.tau_low = Some(0.95)).is_err());
        assert!(o(|o| o.sampler = Some(SamplerSource::Http)).is_err());
        assert!(RunConfig::resolve(RunConfig::default(), &Overrides::default(), Some("x".into())).is_err());
    }
}
