//! Budget mix and sampling hyperparameters.

use serde::{Deserialize, Serialize};

use crate::dsl::format_number;

/// Budgets used by the reference bootstrapping mix.
pub const STANDARD_BUDGETS: [usize; 5] = [8, 16, 32, 64, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_p: f64,
}

impl SamplerConfig {
    pub fn id(&self) -> String {
        format!("T{}_p{}", format_number(self.temperature), format_number(self.top_p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub budget_n: usize,
    pub configs: Vec<SamplerConfig>,
    pub inputs_per_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub entries: Vec<PlanEntry>,
}

fn grid(temperature: f64, top_ps: &[f64]) -> impl Iterator<Item = SamplerConfig> + '_ {
    top_ps.iter().map(move |&top_p| SamplerConfig { temperature, top_p })
}

/// The reference budget mix: lower budgets spread over wider temperature ranges.
pub fn plan_default() -> SamplingPlan {
    let p4 = [0.7, 0.8, 0.9, 1.0];
    let entry = |budget_n, configs: Vec<SamplerConfig>, inputs_per_budget| PlanEntry {
        budget_n,
        configs,
        inputs_per_budget,
    };
    SamplingPlan {
        entries: vec![
            entry(
                8,
                grid(0.2, &p4)
                    .chain(grid(0.4, &p4))
                    .chain(grid(0.6, &[0.8, 0.9, 1.0]))
                    .collect(),
                10_000,
            ),
            entry(
                16,
                grid(0.2, &p4).chain(grid(0.4, &[0.8, 0.9, 1.0])).collect(),
                10_000,
            ),
            entry(32, grid(0.2, &p4).chain(grid(0.4, &[0.9, 1.0])).collect(), 40_000),
            entry(64, grid(0.2, &[0.8, 0.9, 1.0]).collect(), 10_000),
            entry(128, grid(0.2, &[0.9, 1.0]).collect(), 10_000),
        ],
    }
}

impl SamplingPlan {
    /// Checks structural validity; returns warnings for non-standard budgets.
    pub fn validate(&self) -> Result<Vec<String>, String> {
        if self.entries.is_empty() {
            return Err("plan has no entries".into());
        }
        let mut warnings = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.budget_n == 0 {
                return Err(format!("entry {i}: budget_n must be positive"));
            }
            if e.configs.is_empty() {
                return Err(format!("entry {i}: no sampler configs"));
            }
            if e.inputs_per_budget == 0 {
                return Err(format!("entry {i}: inputs_per_budget must be positive"));
            }
            for c in &e.configs {
                if !(c.temperature.is_finite() && c.temperature >= 0.0) {
                    return Err(format!("entry {i}: bad temperature {}", c.temperature));
                }
                if !(c.top_p > 0.0 && c.top_p <= 1.0) {
                    return Err(format!("entry {i}: top_p {} outside (0, 1]", c.top_p));
                }
            }
            if !STANDARD_BUDGETS.contains(&e.budget_n) {
                warnings.push(format!("entry {i}: non-standard budget N={}", e.budget_n));
            }
        }
        Ok(warnings)
    }

    /// Keeps only the entry with budget `n`.
    pub fn restrict_to_budget(&self, n: usize) -> Option<SamplingPlan> {
        let e = self.entries.iter().find(|e| e.budget_n == n)?;
        Some(SamplingPlan {
            entries: vec![e.clone()],
        })
    }

    /// Spreads `n_inputs` over entries in proportion to `inputs_per_budget`,
    /// contiguously in entry order. Returns the entry index per input.
    pub fn assign(&self, n_inputs: usize) -> Vec<usize> {
        let total: usize = self.entries.iter().map(|e| e.inputs_per_budget).sum();
        (0..n_inputs)
            .map(|i| {
                let x = (i as f64 + 0.5) / n_inputs as f64 * total as f64;
                let mut acc = 0usize;
                for (j, e) in self.entries.iter().enumerate() {
                    acc += e.inputs_per_budget;
                    if x < acc as f64 {
                        return j;
                    }
                }
                self.entries.len() - 1
            })
            .collect()
    }
}

impl PlanEntry {
    /// Candidates per config: `N / C` each, the first `N % C` configs one more.
    pub fn allocation(&self) -> Vec<usize> {
        let c = self.configs.len();
        (0..c)
            .map(|i| self.budget_n / c + usize::from(i < self.budget_n % c))
            .collect()
    }
}
