use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use giftforge::cli::main_with_args;
use giftforge::fixtures::corpus_dir;
use serde_json::Value;

const INPUTS: [&str; 6] = [
    "01_block_2x1x1",
    "16_plate_hole",
    "21_tee_union",
    "35_plate_two_holes",
    "50_sleeve",
    "11_t_profile",
];

fn gt_dir(root: &Path) -> PathBuf {
    let dir = root.join("gt");
    fs::create_dir_all(&dir).unwrap();
    for id in INPUTS {
        let name = format!("{id}.gcad");
        fs::copy(corpus_dir().join(&name), dir.join(&name)).unwrap();
    }
    dir
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("giftforge").chain(args.iter().copied()))
}

/// Relative path -> bytes for every file under `dir`.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn common_flags(gt: &Path) -> Vec<String> {
    ["--gt-dir", gt.to_str().unwrap(), "--budget", "8", "--seed", "3", "--workers", "2", "--resolution", "32"]
        .map(String::from)
        .to_vec()
}

fn with<'a>(base: &'a [String], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().map(String::as_str).chain(extra.iter().copied()).collect()
}

#[test]
fn pipeline_is_deterministic_and_matches_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = gt_dir(tmp.path());
    let flags = common_flags(&gt);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(run(&with(&flags, &["pipeline", "--run-dir", a.to_str().unwrap()])), 0);
    assert_eq!(run(&with(&flags, &["pipeline", "--run-dir", b.to_str().unwrap()])), 0);
    let ta = tree(&a);
    assert!(ta.contains_key("manifest.jsonl") && ta.contains_key("report.json"));
    assert_eq!(ta, tree(&b));

    let cs = c.to_str().unwrap();
    assert_eq!(run(&with(&flags, &["sample", "--run-dir", cs])), 0);
    for stage in ["verify", "render", "augment", "metrics"] {
        assert_eq!(run(&with(&flags, &[stage, "--run-dir", cs])), 0, "{stage}");
    }
    assert_eq!(ta, tree(&c));
}

#[test]
fn missing_gt_dir_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let run_dir = tmp.path().join("r");
    let code = run(&[
        "--gt-dir",
        missing.to_str().unwrap(),
        "pipeline",
        "--run-dir",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert_eq!(run(&["--resolution", "48", "plan"]), 2);
    assert_eq!(run(&["no-such-command"]), 2);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = gt_dir(tmp.path());
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    let run_dir = tmp.path().join("r");
    let flags = common_flags(&gt);
    let code = run(&with(
        &flags,
        &["--sampler", "http", "--endpoint", &endpoint, "sample", "--run-dir", run_dir.to_str().unwrap()],
    ));
    assert_eq!(code, 3);
}

#[test]
fn file_candidates_get_expected_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = gt_dir(tmp.path());
    let block = fs::read_to_string(gt.join("01_block_2x1x1.gcad")).unwrap();
    let lines = [
        serde_json::json!({"input_id": "01_block_2x1x1", "text": block, "config_id": "T0.2_p0.9"}),
        serde_json::json!({"input_id": "01_block_2x1x1", "text": "extrude", "config_id": "T0.2_p0.9"}),
        serde_json::json!({"input_id": "01_block_2x1x1", "text": "plane XY 0\nrect 1 1\nextrude 1\nrect 1 1\nextrude 1\ncut\n", "config_id": "T0.2_p0.9"}),
    ];
    let file = tmp.path().join("cands.jsonl");
    fs::write(&file, lines.iter().map(|l| l.to_string() + "\n").collect::<String>()).unwrap();
    let run_dir = tmp.path().join("r");
    let rd = run_dir.to_str().unwrap();
    let base = [
        "--gt-dir",
        gt.to_str().unwrap(),
        "--sampler",
        "file",
        "--candidates-file",
        file.to_str().unwrap(),
        "--resolution",
        "32",
        "--budget",
        "8",
    ];
    assert_eq!(run(&[&base[..], &["sample", "--run-dir", rd]].concat()), 0);
    assert_eq!(run(&["verify", "--run-dir", rd]), 0);
    let verdicts: Vec<Value> = fs::read_to_string(run_dir.join("verdicts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let block: Vec<&Value> = verdicts.iter().filter(|v| v["input_id"] == "01_block_2x1x1").collect();
    assert_eq!(block.len(), 8);
    assert!(block[0]["score"].as_f64().unwrap() >= 0.98);
    assert_eq!(block[0]["band"], "MATCH");
    assert_eq!(block[0]["exact_text_match"], true);
    assert_eq!(block[1]["error"], "FailedGen");
    assert_eq!(block[2]["error"], "NotSolid");
    // short files are padded to the budget with generation failures
    assert!(block[3..].iter().all(|v| v["error"] == "FailedGen"));
    assert_eq!(verdicts.len(), 8 * INPUTS.len());
    assert!(verdicts.iter().filter(|v| v["input_id"] != "01_block_2x1x1").all(|v| v["error"] == "FailedGen"));

    assert_eq!(run(&["render", "--run-dir", rd, "--only", "01_block_2x1x1:2,ghost:0"]), 0);
    let renders = fs::read_to_string(run_dir.join("renders.jsonl")).unwrap();
    let records: Vec<Value> = renders.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let find = |id: &str, k: u64| {
        records
            .iter()
            .find(|r| r["input_id"] == id && r["candidate_id"] == k)
            .unwrap_or_else(|| panic!("{id}:{k} missing from {renders}"))
    };
    assert!(find("01_block_2x1x1", 2)["error"].is_string());
    assert!(find("ghost", 0)["error"].is_string());
}

#[test]
fn metrics_from_printed_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let curves = tmp.path().join("curves.csv");
    fs::write(&curves, "label,1,10\nbaseline,0.698,0.807\ngift,0.779,0.819\n").unwrap();
    let out = tmp.path().join("out.csv");
    let code = run(&[
        "metrics",
        "--curves",
        curves.to_str().unwrap(),
        "--baseline",
        "baseline",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let gift_k1 = rows.iter().find(|r| &r[col("label")] == "gift" && &r[col("k")] == "1").unwrap();
    let delta: f64 = gift_k1[col("delta_vs_baseline_pct")].parse().unwrap();
    assert!((delta - 11.60).abs() < 0.005, "{delta}");
}

#[test]
fn committed_fixtures_check_clean() {
    assert_eq!(run(&["fixtures", "check"]), 0);
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(run(&["fixtures", "regen", "--dir", dir]), 0);
    let path = tmp.path().join("unit_cube_volume.json");
    let text = fs::read_to_string(&path).unwrap().replace("1.0", "1.5");
    fs::write(&path, text).unwrap();
    assert_eq!(run(&["fixtures", "check", "--dir", dir]), 1);
}
