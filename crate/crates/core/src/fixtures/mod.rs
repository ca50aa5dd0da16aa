//! Bundled ground-truth corpus and golden oracle values.
//!
//! `fixtures/corpus/*.gcad` holds hand-written programs of 1, 3 and 5
//! solid-producing operations. `fixtures/golden/*.json` holds [`OracleCase`]s
//! whose `expected` values come from [`oracles`], never from the code under
//! test. `regen` rewrites the goldens; `check` recomputes and diffs them.

pub mod oracles;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::{self, DatasetError, GtItem};
use oracles::Lattice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OracleKind {
    Analytic,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub name: String,
    pub inputs: Value,
    pub expected: Value,
    pub oracle_kind: OracleKind,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("golden {name} diverged:\n{diff}")]
    Diverged { name: String, diff: String },
    #[error("golden {0} missing")]
    Missing(String),
    #[error("unexpected golden file {0}")]
    Orphan(String),
}

pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures_root().join("corpus")
}

pub fn golden_dir() -> PathBuf {
    fixtures_root().join("golden")
}

pub fn load_corpus() -> Result<Vec<GtItem>, DatasetError> {
    dataset::load_gt_dir(&corpus_dir())
}

/// Rounds to 9 significant digits so goldens serialize identically everywhere.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json!(round_sig(n.as_f64().unwrap())),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn case(name: &str, kind: OracleKind, inputs: Value, expected: Value) -> OracleCase {
    OracleCase {
        name: name.to_string(),
        inputs,
        expected: round_value(expected),
        oracle_kind: kind,
    }
}

pub const UNIT_CUBE: &str = "plane XY 0\nrect 1 1\nextrude 1\n";
pub const OFFSET_CUBE: &str = "plane XY 0\ntranslate 0.5 0 0\nrect 1 1\nextrude 1\n";
pub const UNDERFLOW: &str = "plane XY 0\nrect 1 1\nextrude 1\nunion\n";

/// Three arms of lengths 4, 2 and 1 from a corner cell; no proper rotation
/// maps it onto its mirror image.
pub fn tripod_cells(r: usize) -> Vec<[usize; 3]> {
    let o = r / 2 - 2;
    let mut cells = vec![[o, o, o]];
    cells.extend((1..=4).map(|d| [o + d, o, o]));
    cells.extend((1..=2).map(|d| [o, o + d, o]));
    cells.push([o, o, o + 1]);
    cells
}

/// An L in the xy plane, two cells thick.
pub fn l_cells(r: usize) -> Vec<[usize; 3]> {
    let o = r / 2 - 3;
    let mut cells = Vec::new();
    for z in 0..2 {
        for x in 0..6 {
            for y in 0..2 {
                cells.push([o + x, o + y, o + z]);
            }
        }
        for y in 2..4 {
            for x in 0..2 {
                cells.push([o + x, o + y, o + z]);
            }
        }
    }
    cells
}

pub fn mirror_x(cells: &[[usize; 3]], r: usize) -> Vec<[usize; 3]> {
    cells.iter().map(|c| [r - 1 - c[0], c[1], c[2]]).collect()
}

/// Quarter turn about z through the lattice center: (x, y) → (r−1−y, x).
pub fn quarter_turn_z(cells: &[[usize; 3]], r: usize) -> Vec<[usize; 3]> {
    cells.iter().map(|c| [r - 1 - c[1], c[0], c[2]]).collect()
}

/// Score vectors for the subset-enumeration cases, including ties and
/// all-zero rows.
fn subset_fixtures() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = vec![vec![0.0, 1.0], vec![0.0; 4], vec![0.9, 0.9, 0.1]];
    for n in 1..=8 {
        out.push((0..n).map(|_| round_sig(rng.random::<f64>())).collect());
        out.push((0..n).map(|_| f64::from(rng.random_range(0..4u8)) / 4.0).collect());
    }
    out
}

/// Recomputes every golden case from its oracle.
pub fn oracle_cases() -> Vec<OracleCase> {
    let mut cases = Vec::new();

    let d = oracles::solid_cube_inertia(1.0);
    cases.push(case(
        "unit_cube_inertia",
        OracleKind::Analytic,
        json!({"program": UNIT_CUBE, "resolution": 64, "rel_tol": 0.01}),
        json!({"diag": [d, d, d], "trace": 3.0 * d}),
    ));

    let (n, h) = ([12usize, 6, 4], 0.25);
    cases.push(case(
        "box_lattice_inertia",
        OracleKind::Analytic,
        json!({"cells": n, "spacing": h, "resolution": 16}),
        json!({"eigenvalues": oracles::box_inertia_discrete(n, h)}),
    ));

    // Continuous 2×1×1 box: moments (b²+c²)/12 etc.
    let mut moments = [2.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0];
    moments.sort_by(f64::total_cmp);
    cases.push(case(
        "box_2x1x1_axes",
        OracleKind::Analytic,
        json!({"program": "plane XY 0\nrect 2 1\nextrude 1\n", "resolution": 64, "rel_tol": 0.02}),
        json!({"eigenvalues": moments, "long_axis": 0}),
    ));

    let lattice = Lattice {
        origin: [-0.75, -1.0, -0.5],
        h: 2.0 / 128.0,
        r: 128,
    };
    let a = ([-0.5, -0.5, 0.0], [0.5, 0.5, 1.0]);
    let b = ([0.0, -0.5, 0.0], [1.0, 0.5, 1.0]);
    let [ca, cb, inter, union] = oracles::two_box_counts(&lattice, a, b);
    let cell_volume = lattice.h.powi(3);
    cases.push(case(
        "offset_cube_iou",
        OracleKind::Exhaustive,
        json!({
            "a": UNIT_CUBE,
            "b": OFFSET_CUBE,
            "grid": {"resolution": lattice.r, "origin": lattice.origin, "cell_size": lattice.h},
            "tol": 0.02,
        }),
        json!({
            "cells_a": ca,
            "cells_b": cb,
            "intersection": inter,
            "union": union,
            "iou": inter as f64 / union as f64,
            "analytic_iou": 0.5 / 1.5,
            "union_volume": union as f64 * cell_volume,
            "analytic_union_volume": 1.5,
        }),
    ));

    cases.push(case(
        "unit_cube_volume",
        OracleKind::Analytic,
        json!({"program": UNIT_CUBE, "resolution": 64, "rel_tol": 0.05}),
        json!({"volume": 1.0}),
    ));

    let fixtures = subset_fixtures();
    let values: Vec<Vec<f64>> = fixtures
        .iter()
        .map(|s| (1..=s.len()).map(|k| oracles::subset_expected_max(s, k)).collect())
        .collect();
    cases.push(case(
        "pass_at_k_subsets",
        OracleKind::Exhaustive,
        json!({"scores": fixtures}),
        json!({"by_k": values}),
    ));

    let r = 16;
    let tripod = tripod_cells(r);
    let mirror = mirror_x(&tripod, r);
    cases.push(case(
        "tripod_chirality",
        OracleKind::Exhaustive,
        json!({"resolution": r, "cells": tripod, "mirror": mirror}),
        json!({
            "best_proper": oracles::best_lattice_iou(&tripod, &mirror, r, true),
            "best_all": oracles::best_lattice_iou(&tripod, &mirror, r, false),
        }),
    ));

    let l = l_cells(r);
    let turned = quarter_turn_z(&l, r);
    cases.push(case(
        "l_shape_quarter_turn",
        OracleKind::Exhaustive,
        json!({"resolution": r, "cells": l, "turned": turned}),
        json!({"best_proper": oracles::best_lattice_iou(&l, &turned, r, true)}),
    ));

    cases.push(case(
        "isometric_cube_area",
        OracleKind::Analytic,
        json!({"side": 1.0}),
        json!({"area": oracles::projected_cube_area(1.0)}),
    ));

    cases.push(case(
        "minimal_program_profile",
        OracleKind::Analytic,
        json!({"program": UNIT_CUBE}),
        json!({
            "token_count": oracles::hand_token_count(UNIT_CUBE),
            "op_count": oracles::hand_op_count(UNIT_CUBE),
        }),
    ));

    cases.push(case(
        "union_underflow",
        OracleKind::Exhaustive,
        json!({"program": UNDERFLOW}),
        json!({"underflow_statement": oracles::stack_simulation(UNDERFLOW).err()}),
    ));

    cases
}

fn golden_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

/// Writes every case to `dir/<name>.json`.
pub fn regen(dir: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    let mut written = Vec::new();
    for c in oracle_cases() {
        let path = golden_path(dir, &c.name);
        dataset::write_json(&path, &c)?;
        written.push(path);
    }
    Ok(written)
}

/// Recomputes every case and diffs it against the committed file.
pub fn check(dir: &Path) -> Result<usize, FixtureError> {
    let cases = oracle_cases();
    for c in &cases {
        let path = golden_path(dir, &c.name);
        if !path.exists() {
            return Err(FixtureError::Missing(c.name.clone()));
        }
        let committed: OracleCase = dataset::read_json(&path)?;
        let mut diff = String::new();
        diff_values("", &serde_json::to_value(&committed).unwrap(), &serde_json::to_value(c).unwrap(), &mut diff);
        if !diff.is_empty() {
            return Err(FixtureError::Diverged {
                name: c.name.clone(),
                diff,
            });
        }
    }
    let entries = std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
    for e in entries {
        let e = e.map_err(|e| DatasetError::io(dir, e))?;
        let name = e.file_name().to_string_lossy().to_string();
        if let Some(stem) = name.strip_suffix(".json") {
            if !cases.iter().any(|c| c.name == stem) {
                return Err(FixtureError::Orphan(name));
            }
        }
    }
    Ok(cases.len())
}

/// Appends `path: committed -> regenerated` lines for every leaf that differs.
pub fn diff_values(path: &str, old: &Value, new: &Value, out: &mut String) {
    match (old, new) {
        (Value::Object(a), Value::Object(b)) => {
            let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let p = format!("{path}/{k}");
                match (a.get(k), b.get(k)) {
                    (Some(x), Some(y)) => diff_values(&p, x, y, out),
                    (x, y) => {
                        let _ = writeln!(out, "{p}: {} -> {}", show(x), show(y));
                    }
                }
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                diff_values(&format!("{path}/{i}"), x, y, out);
            }
        }
        _ if old != new => {
            let _ = writeln!(out, "{path}: {old} -> {new}");
        }
        _ => {}
    }
}

fn show(v: Option<&Value>) -> String {
    v.map_or_else(|| "(absent)".to_string(), Value::to_string)
}
