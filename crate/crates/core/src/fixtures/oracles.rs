//! Reference computations for golden files. Nothing here calls into the
//! executor, geometry or metrics code it is used to check.

/// Per-axis second moment of a solid cube of side `a` about its center, as an
/// inertia diagonal entry (unit mass): `a²/6`.
pub fn solid_cube_inertia(a: f64) -> f64 {
    a * a / 6.0
}

/// Principal moments (ascending) of an `n[0]×n[1]×n[2]` block of point masses
/// on a lattice of spacing `h`, unit total mass. Uses the discrete variance
/// `h²(n²−1)/12 = (h²n²/12)(1 − 1/n²)` per axis.
pub fn box_inertia_discrete(n: [usize; 3], h: f64) -> [f64; 3] {
    let var: Vec<f64> = n
        .iter()
        .map(|&k| {
            let k = k as f64;
            h * h * k * k / 12.0 * (1.0 - 1.0 / (k * k))
        })
        .collect();
    let mut moments = [var[1] + var[2], var[0] + var[2], var[0] + var[1]];
    moments.sort_by(f64::total_cmp);
    moments
}

/// An axis-aligned lattice: `r` cells per axis of size `h`, low corner `origin`.
#[derive(Debug, Clone, Copy)]
pub struct Lattice {
    pub origin: [f64; 3],
    pub h: f64,
    pub r: usize,
}

impl Lattice {
    fn center(&self, c: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (c[a] as f64 + 0.5) * self.h)
    }
}

fn inside(p: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> bool {
    (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
}

/// Visits every cell of the lattice and counts centers in box A, box B, both,
/// and either.
pub fn two_box_counts(l: &Lattice, a: ([f64; 3], [f64; 3]), b: ([f64; 3], [f64; 3])) -> [usize; 4] {
    let mut out = [0usize; 4];
    for k in 0..l.r {
        for j in 0..l.r {
            for i in 0..l.r {
                let p = l.center([i, j, k]);
                let (ia, ib) = (inside(p, a.0, a.1), inside(p, b.0, b.1));
                out[0] += ia as usize;
                out[1] += ib as usize;
                out[2] += (ia && ib) as usize;
                out[3] += (ia || ib) as usize;
            }
        }
    }
    out
}

/// Mean of the maximum over every `k`-subset of `scores`, by enumeration.
pub fn subset_expected_max(scores: &[f64], k: usize) -> f64 {
    let n = scores.len();
    assert!(n <= 20 && k >= 1 && k <= n);
    let (mut total, mut count) = (0.0, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let best = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
        count += 1;
    }
    total / count as f64
}

pub type IMat = [[i32; 3]; 3];

fn imat_det(m: &IMat) -> i32 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// All orthogonal matrices with entries in {−1, 0, 1}, found by scanning the
/// 3⁹ candidates. There are 48; 24 have determinant +1.
pub fn cube_group() -> Vec<IMat> {
    let mut out = Vec::new();
    for code in 0..3i32.pow(9) {
        let mut c = code;
        let mut m = [[0i32; 3]; 3];
        for row in m.iter_mut() {
            for x in row.iter_mut() {
                *x = c % 3 - 1;
                c /= 3;
            }
        }
        let orthogonal = (0..3).all(|i| {
            (0..3).all(|j| {
                let d: i32 = (0..3).map(|t| m[i][t] * m[j][t]).sum();
                d == i32::from(i == j)
            })
        });
        if orthogonal {
            out.push(m);
        }
    }
    out
}

/// Best cell IoU between `a` and `b` over the cube group acting on `a` about
/// the lattice center. Coordinates are doubled so the center is integral.
pub fn best_lattice_iou(a: &[[usize; 3]], b: &[[usize; 3]], r: usize, proper_only: bool) -> f64 {
    use std::collections::BTreeSet;
    let bset: BTreeSet<[usize; 3]> = b.iter().copied().collect();
    let r2 = r as i64 - 1;
    let mut best = 0.0f64;
    for m in cube_group() {
        if proper_only && imat_det(&m) != 1 {
            continue;
        }
        let moved: BTreeSet<[usize; 3]> = a
            .iter()
            .map(|c| {
                let d: [i64; 3] = std::array::from_fn(|t| 2 * c[t] as i64 - r2);
                std::array::from_fn(|row| {
                    let x: i64 = (0..3).map(|t| m[row][t] as i64 * d[t]).sum();
                    ((x + r2) / 2) as usize
                })
            })
            .collect();
        let inter = moved.intersection(&bset).count();
        let union = moved.len() + bset.len() - inter;
        best = best.max(inter as f64 / union as f64);
    }
    best
}

/// Area of the convex hull of a unit cube's eight corners projected along the
/// `(1,1,1)` diagonal, scaled to side `a`.
pub fn projected_cube_area(a: f64) -> f64 {
    let inv = 1.0 / 3f64.sqrt();
    let n = [inv, inv, inv];
    // Any orthonormal pair spanning the plane works for an area.
    let u = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let v = [
        n[1] * u[2] - n[2] * u[1],
        n[2] * u[0] - n[0] * u[2],
        n[0] * u[1] - n[1] * u[0],
    ];
    let mut pts: Vec<(f64, f64)> = (0..8)
        .map(|c| {
            let p: [f64; 3] = std::array::from_fn(|t| if c & (1 << t) != 0 { a } else { 0.0 });
            (
                p[0] * u[0] + p[1] * u[1] + p[2] * u[2],
                p[0] * v[0] + p[1] * v[1] + p[2] * v[2],
            )
        })
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    // Monotone chain.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let mut area = 0.0;
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        area += p.0 * q.1 - q.0 * p.1;
    }
    area.abs() / 2.0
}

/// Whitespace tokens of a program, ignoring `#` comments.
pub fn hand_token_count(text: &str) -> usize {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .map(|l| l.split_whitespace().count())
        .sum()
}

/// Lines that produce a solid: extrusions and booleans.
pub fn hand_op_count(text: &str) -> usize {
    text.lines()
        .filter_map(|l| l.split('#').next().unwrap_or("").split_whitespace().next())
        .filter(|op| matches!(*op, "extrude" | "union" | "cut" | "intersect"))
        .count()
}

/// Replays a statement list as a stack of sketches (`S`) and solids (`B`),
/// returning the final stack or the 1-based statement that underflowed.
pub fn stack_simulation(text: &str) -> Result<Vec<char>, usize> {
    let mut stack = Vec::new();
    let mut n = 0;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        let Some(op) = line.split_whitespace().next() else {
            continue;
        };
        n += 1;
        match op {
            "rect" | "circle" | "poly" => stack.push('S'),
            "extrude" => {
                if stack.pop() != Some('S') {
                    return Err(n);
                }
                stack.push('B');
            }
            "union" | "cut" | "intersect" => {
                if stack.pop() != Some('B') || stack.pop() != Some('B') {
                    return Err(n);
                }
                stack.push('B');
            }
            _ => {}
        }
    }
    Ok(stack)
}
