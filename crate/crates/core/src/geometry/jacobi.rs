//! Cyclic Jacobi eigen-decomposition for symmetric 3×3 matrices.

pub type Mat3 = [[f64; 3]; 3];

pub const MAX_SWEEPS: usize = 64;
pub const OFF_TOLERANCE: f64 = 1e-10;

pub fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn off_norm(m: &Mat3) -> f64 {
    (2.0 * (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2])).sqrt()
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn transpose(a: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

pub fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Returns `(eigenvalues, V)` with eigenvalues ascending and the columns of `V`
/// the matching unit eigenvectors. Each column is signed so its
/// largest-magnitude component is positive (lowest index on ties), then the
/// third column is negated if needed to make `det V = +1`.
pub fn symmetric_eigen(m: &Mat3) -> ([f64; 3], Mat3) {
    let mut a = *m;
    let mut v = IDENTITY;
    let scale = frobenius(m);
    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            if off_norm(&a) < OFF_TOLERANCE * scale {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J
                for k in 0..3 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]).then(i.cmp(&j)));
    let values = order.map(|i| a[i][i]);
    let mut vecs: Mat3 = std::array::from_fn(|r| order.map(|c| v[r][c]));
    for c in 0..3 {
        let mut best = 0;
        for r in 1..3 {
            if vecs[r][c].abs() > vecs[best][c].abs() {
                best = r;
            }
        }
        if vecs[best][c] < 0.0 {
            (0..3).for_each(|r| vecs[r][c] = -vecs[r][c]);
        }
    }
    if det(&vecs) < 0.0 {
        (0..3).for_each(|r| vecs[r][2] = -vecs[r][2]);
    }
    (values, vecs)
}
