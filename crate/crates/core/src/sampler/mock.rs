//! Synthetic candidate policy: noisy copies of the ground-truth program.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsl::{count_tokens, CadProgram, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockParams {
    /// Log-scale jitter per unit temperature.
    pub sigma: f64,
    pub p_jitter: f64,
    pub p_drop: f64,
    pub p_syntax: f64,
}

impl Default for MockParams {
    fn default() -> Self {
        MockParams {
            sigma: 0.1,
            p_jitter: 0.5,
            p_drop: 0.1,
            p_syntax: 0.05,
        }
    }
}

impl MockParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(format!("mock sigma must be non-negative, got {}", self.sigma));
        }
        for (name, p) in [
            ("p_jitter", self.p_jitter),
            ("p_drop", self.p_drop),
            ("p_syntax", self.p_syntax),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("mock {name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// For each statement, the index of the first statement of the stack item it
/// leaves on top. Used to find the operand spans of booleans.
fn item_starts(statements: &[Statement]) -> Vec<Option<usize>> {
    let mut stack: Vec<usize> = Vec::new();
    let mut right_start = vec![None; statements.len()];
    for (i, s) in statements.iter().enumerate() {
        match s {
            Statement::Rect { .. } | Statement::Circle { .. } | Statement::Poly { .. } => stack.push(i),
            Statement::Boolean(_) => {
                let right = stack.pop().expect("stack-checked program");
                right_start[i] = Some(right);
            }
            Statement::Extrude { .. } | Statement::Plane { .. } | Statement::Translate { .. } => {}
        }
    }
    right_start
}

/// Removes the boolean at `at` together with the sketch, extrude and boolean
/// statements of its right operand. Workplane statements stay.
fn drop_boolean(statements: &[Statement], at: usize) -> Vec<Statement> {
    let start = item_starts(statements)[at].expect("index of a boolean");
    statements
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            let in_span = (start..=at).contains(i);
            !(in_span && !matches!(s, Statement::Plane { .. } | Statement::Translate { .. }))
        })
        .map(|(_, s)| s.clone())
        .collect()
}

/// One noisy copy of `gt`, fully determined by `seed`.
///
/// Random numbers are drawn in a fixed order whatever the parameters, so runs
/// that differ only in `sigma` perturb the same literals in the same
/// direction.
pub fn perturb(gt: &CadProgram, params: &MockParams, temperature: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut statements = gt.statements().to_vec();
    let scale = params.sigma * temperature;
    for s in statements.iter_mut() {
        for v in s.numeric_args_mut() {
            let u: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            if u < params.p_jitter {
                *v *= (scale * z).exp();
            }
        }
    }

    let u: f64 = rng.random();
    let raw: u64 = rng.random();
    if u < params.p_drop {
        let booleans: Vec<usize> = statements
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Statement::Boolean(_)))
            .map(|(i, _)| i)
            .collect();
        if !booleans.is_empty() {
            let at = booleans[(raw % booleans.len() as u64) as usize];
            statements = drop_boolean(&statements, at);
        }
    }
    let mut text = String::new();
    for s in &statements {
        text.push_str(&s.to_string());
        text.push('\n');
    }

    let u: f64 = rng.random();
    let raw: u64 = rng.random();
    if u < params.p_syntax {
        text = corrupt_token(&text, (raw % count_tokens(&text) as u64) as usize);
    }
    text
}

/// Appends `?` to the `index`-th whitespace token. No token of the language
/// can end in `?`, so the result never parses.
fn corrupt_token(text: &str, index: usize) -> String {
    let mut seen = 0;
    let mut out = String::with_capacity(text.len() + 1);
    for line in text.lines() {
        let words: Vec<String> = line
            .split_whitespace()
            .map(|w| {
                let w = if seen == index { format!("{w}?") } else { w.to_string() };
                seen += 1;
                w
            })
            .collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}
