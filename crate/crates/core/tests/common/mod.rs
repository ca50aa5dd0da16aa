#![allow(dead_code)]

use giftforge::dsl::{parse, CadProgram};
use proptest::prelude::*;

/// A regular polygon with `n` vertices, as `poly` arguments.
pub fn ngon(n: usize, r: f64, cx: f64, cy: f64) -> String {
    let mut s = String::from("poly");
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        s.push_str(&format!(" {} {}", cx + r * a.cos(), cy + r * a.sin()));
    }
    s
}

fn dim() -> impl Strategy<Value = f64> {
    0.2f64..4.0
}

fn offset() -> impl Strategy<Value = f64> {
    -2.0f64..2.0
}

fn sketch() -> impl Strategy<Value = String> {
    prop_oneof![
        (dim(), dim()).prop_map(|(w, h)| format!("rect {w} {h}")),
        dim().prop_map(|r| format!("circle {r}")),
        (3usize..9, dim(), offset(), offset()).prop_map(|(n, r, x, y)| ngon(n, r, x, y)),
    ]
}

fn solid_block() -> impl Strategy<Value = Vec<String>> {
    (
        prop::option::of((prop::sample::select(vec!["XY", "YZ", "XZ"]), offset())),
        prop::option::of((offset(), offset(), offset())),
        sketch(),
        dim(),
    )
        .prop_map(|(plane, tr, sk, d)| {
            let mut lines = Vec::new();
            if let Some((p, o)) = plane {
                lines.push(format!("plane {p} {o}"));
            }
            if let Some((x, y, z)) = tr {
                lines.push(format!("translate {x} {y} {z}"));
            }
            lines.push(sk);
            lines.push(format!("extrude {d}"));
            lines
        })
}

/// Stack-valid program text with 1 to 4 extrusions combined left-deep.
pub fn program_text() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(solid_block(), 1..=4),
        prop::collection::vec(prop::sample::select(vec!["union", "cut", "intersect"]), 3),
    )
        .prop_map(|(blocks, ops)| {
            let mut lines = Vec::new();
            for (i, b) in blocks.into_iter().enumerate() {
                lines.extend(b);
                if i > 0 {
                    lines.push(ops[i - 1].to_string());
                }
            }
            lines.join("\n") + "\n"
        })
}

pub fn program() -> impl Strategy<Value = CadProgram> {
    program_text().prop_map(|t| parse(&t).expect("generated program is valid"))
}

/// Ten programs covering every sketch kind, plane and boolean.
pub const SUITE: [&str; 10] = [
    "plane XY 0\nrect 2 1\nextrude 1\n",
    "plane XZ 0\ncircle 0.8\nextrude 2\n",
    "plane XY 0\npoly 0 0 3 0 3 1 1 1 1 2.5 0 2.5\nextrude 0.8\n",
    "plane XY 0\nrect 4 2\nextrude 0.5\ntranslate 0.8 0 0\ncircle 0.4\nextrude 0.5\ncut\n",
    "plane XY 0\nrect 3 2\nextrude 1\ntranslate 0.5 0.3 1\ncircle 0.5\nextrude 1.5\nunion\n",
    "plane XY 0\nrect 2 2\nextrude 2\ntranslate 0.3 0 0\ncircle 1.2\nextrude 2\nintersect\n",
    "plane YZ 0\nrect 2.5 1.5\nextrude 0.7\n",
    "plane XY 0\nrect 4 3\nextrude 0.4\ntranslate 0 -1.3 0.4\nrect 4 0.4\nextrude 1.2\nunion\ntranslate 0 2.6 0\nrect 4 0.4\nextrude 0.8\nunion\n",
    "plane XY 0\ncircle 1.5\nextrude 0.4\ntranslate 0.5 0.2 0\ncircle 0.5\nextrude 0.4\ncut\n",
    "plane XY 0\nrect 3 1.5\nextrude 0.5\ntranslate 0.5 0 0.5\nrect 2 1.5\nextrude 0.5\nunion\ntranslate 0.5 0 0.5\nrect 1 1.5\nextrude 0.5\nunion\n",
];
