//! Pose normalization and orientation-searched voxel IoU.
//!
//! Both solids are centred on their centroid, scaled so the inertia trace is
//! [`TARGET_TRACE`], rotated onto their principal axes and resampled on a
//! shared centred lattice. The best IoU over a set of cube rotations is the
//! score.

pub mod jacobi;
pub mod rotation;

use thiserror::Error;

use crate::executor::{GridSpec, Occupancy, VoxelSolid};
use jacobi::{mat_vec, symmetric_eigen, transpose, Mat3};
pub use rotation::{orientation_set, Orientations, Rotation};

pub const TARGET_TRACE: f64 = 3.0;
pub const DEGENERACY_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("solid has no occupied cells")]
    EmptyInput,
    #[error("degenerate shape: principal moment ratio {ratio:e}")]
    DegenerateShape { ratio: f64 },
    #[error("solids are on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaSummary {
    pub centroid: [f64; 3],
    /// Unit-mass inertia tensor about the centroid, mm².
    pub tensor: Mat3,
    pub trace: f64,
    /// Ascending.
    pub eigenvalues: [f64; 3],
    /// Columns are the principal axes; right-handed.
    pub eigenvectors: Mat3,
}

/// Inertia of unit mass spread evenly over the occupied cell centers.
pub fn inertia(s: &VoxelSolid) -> Result<InertiaSummary, GeometryError> {
    let n = s.occupied_cells();
    if n == 0 {
        return Err(GeometryError::EmptyInput);
    }
    // Work in cell-index units for accuracy, scale at the end.
    let mut mean = [0.0f64; 3];
    for c in s.occupied_coords() {
        for a in 0..3 {
            mean[a] += c[a] as f64;
        }
    }
    mean = mean.map(|m| m / n as f64);
    let mut cov = [[0.0f64; 3]; 3];
    for c in s.occupied_coords() {
        let d: [f64; 3] = std::array::from_fn(|a| c[a] as f64 - mean[a]);
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let h = s.cell_size();
    let h2 = h * h / n as f64;
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] *= h2;
            cov[j][i] = cov[i][j];
        }
    }
    let tr_cov = cov[0][0] + cov[1][1] + cov[2][2];
    let mut tensor: Mat3 =
        std::array::from_fn(|i| std::array::from_fn(|j| if i == j { tr_cov } else { 0.0 } - cov[i][j]));
    // Symmetric occupancies leave rounding noise off the diagonal; drop it so
    // the principal frame stays axis-aligned.
    let norm = jacobi::frobenius(&tensor);
    for i in 0..3 {
        for j in 0..3 {
            if i != j && tensor[i][j].abs() <= 1e-12 * norm {
                tensor[i][j] = 0.0;
            }
        }
    }
    let (eigenvalues, eigenvectors) = symmetric_eigen(&tensor);
    let lmax = eigenvalues[2];
    // A linear occupancy has a vanishing principal moment; a planar one has a
    // vanishing second moment lmax_cov = trace/2 - lmax.
    let thickness = 0.5 * (eigenvalues[0] + eigenvalues[1] + eigenvalues[2]) - lmax;
    let smallest = eigenvalues[0].min(thickness);
    if lmax.is_nan() || lmax <= 0.0 || smallest < DEGENERACY_RATIO * lmax {
        return Err(GeometryError::DegenerateShape {
            ratio: if lmax > 0.0 { smallest / lmax } else { 0.0 },
        });
    }
    let o = s.origin();
    Ok(InertiaSummary {
        centroid: std::array::from_fn(|a| o[a] + (mean[a] + 0.5) * h),
        tensor,
        trace: tensor[0][0] + tensor[1][1] + tensor[2][2],
        eigenvalues,
        eigenvectors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSolid {
    pub grid: VoxelSolid,
    pub applied_scale: f64,
    /// Maps world offsets from the centroid into the normalized frame.
    pub applied_rotation: Mat3,
}

/// World-to-normalized similarity transform of a solid.
#[derive(Debug, Clone)]
struct Frame {
    centroid: [f64; 3],
    rotation: Mat3,
    scale: f64,
    /// Largest |coordinate| reached by the solid in the normalized frame.
    half_extent: f64,
}

impl Frame {
    fn of(s: &VoxelSolid) -> Result<Frame, GeometryError> {
        let inertia = inertia(s)?;
        let scale = (TARGET_TRACE / inertia.trace).sqrt();
        let rotation = transpose(&canonical_axes(inertia.eigenvalues, &inertia.eigenvectors));
        let grid = s.grid();
        let mut reach = 0.0f64;
        for c in s.occupied_coords() {
            let p = grid.cell_center(c);
            let d = std::array::from_fn(|a| p[a] - inertia.centroid[a]);
            let q = mat_vec(&rotation, d);
            reach = reach.max(q.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        let half_extent = scale * (reach + grid.cell_size * 3f64.sqrt() / 2.0);
        Ok(Frame {
            centroid: inertia.centroid,
            rotation,
            scale,
            half_extent,
        })
    }

    fn resample(&self, s: &VoxelSolid, resolution: usize, half_extent: f64) -> NormalizedSolid {
        self.resample_shifted(s, resolution, half_extent, [0.0; 3])
    }

    /// Samples the solid displaced by `-shift` in the normalized frame.
    fn resample_shifted(
        &self,
        s: &VoxelSolid,
        resolution: usize,
        half_extent: f64,
        shift: [f64; 3],
    ) -> NormalizedSolid {
        // One margin cell per side.
        let half = half_extent * resolution as f64 / (resolution - 2) as f64;
        let target = GridSpec {
            resolution,
            origin: [-half; 3],
            cell_size: 2.0 * half / resolution as f64,
        };
        let inverse = transpose(&self.rotation);
        let mut occ = Occupancy::new(target.cell_count());
        if let Some((lo, hi)) = target.center_range(0, -half_extent, half_extent) {
            let src = s.grid();
            for k in lo..=hi {
                for j in lo..=hi {
                    for i in lo..=hi {
                        let t = target.cell_center([i, j, k]);
                        let q: [f64; 3] = std::array::from_fn(|a| (t[a] + shift[a]) / self.scale);
                        let d = mat_vec(&inverse, q);
                        let p = std::array::from_fn(|a| self.centroid[a] + d[a]);
                        if let Some(c) = src.locate(p) {
                            if s.is_occupied(c) {
                                occ.set(target.index(i, j, k));
                            }
                        }
                    }
                }
            }
        }
        NormalizedSolid {
            grid: VoxelSolid::new(target, occ),
            applied_scale: self.scale,
            applied_rotation: self.rotation,
        }
    }
}

/// Principal moments closer than this (relative to the largest) are treated
/// as tied; the eigenbasis of a tied pair is otherwise arbitrary.
pub const NEAR_TIE: f64 = 5e-3;

/// Eigenvector columns with any near-tied subspace snapped toward the
/// coordinate axes, so re-normalizing an axis-aligned solid leaves it in place.
fn canonical_axes(ev: [f64; 3], v: &Mat3) -> Mat3 {
    let tie = |a: usize, b: usize| ev[b] - ev[a] <= NEAR_TIE * ev[2];
    let (first, second, other) = match (tie(0, 1), tie(1, 2)) {
        (true, true) => return jacobi::IDENTITY,
        (true, false) => (0, 1, 2),
        (false, true) => (1, 2, 0),
        (false, false) => return *v,
    };
    let w: [f64; 3] = std::array::from_fn(|r| v[r][other]);
    // coordinate axis with the largest projection onto the tied plane
    let a = (0..3)
        .min_by(|&x, &y| w[x].abs().total_cmp(&w[y].abs()))
        .expect("three axes");
    let mut u: [f64; 3] = std::array::from_fn(|r| if r == a { 1.0 } else { 0.0 } - w[a] * w[r]);
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= n);
    let u2 = [
        w[1] * u[2] - w[2] * u[1],
        w[2] * u[0] - w[0] * u[2],
        w[0] * u[1] - w[1] * u[0],
    ];
    let mut out = *v;
    for r in 0..3 {
        out[r][first] = u[r];
        out[r][second] = u2[r];
    }
    out
}

const RECENTER_ROUNDS: usize = 4;

/// Whether `s` already satisfies what [`normalize`] produces: a lattice
/// centred on the origin, unit-trace scale, principal axes on the coordinate
/// axes and the centroid within half a cell of the origin.
fn is_normal_form(s: &VoxelSolid, frame: &Frame) -> bool {
    let g = s.grid();
    let half = g.cell_size * g.resolution as f64 / 2.0;
    let centred = g.origin.iter().all(|o| (o + half).abs() <= 1e-9 * half);
    centred
        && (frame.scale - 1.0).abs() <= 1e-9
        && frame.rotation == jacobi::IDENTITY
        && frame.centroid.iter().all(|c| c.abs() <= 0.5 * g.cell_size)
}

/// Normalizes `s` onto a lattice of its own resolution sized to fit it.
///
/// Nearest-cell resampling moves each face by up to half a cell. The sampling
/// phase is re-centred a few times on the measured centroid, keeping the best
/// round, and the lattice is then rescaled exactly so the trace hits
/// [`TARGET_TRACE`].
pub fn normalize(s: &VoxelSolid) -> Result<NormalizedSolid, GeometryError> {
    let frame = Frame::of(s)?;
    if is_normal_form(s, &frame) {
        return Ok(NormalizedSolid {
            grid: s.clone(),
            applied_scale: 1.0,
            applied_rotation: jacobi::IDENTITY,
        });
    }
    let r = s.resolution();
    // Leave room for the shift so the solid keeps its margin.
    let half = frame.half_extent + frame.scale * s.cell_size();
    let mut shift = [0.0; 3];
    let mut best: Option<(f64, NormalizedSolid)> = None;
    for _ in 0..RECENTER_ROUNDS {
        let n = frame.resample_shifted(s, r, half, shift);
        let Ok(c) = inertia(&n.grid).map(|i| i.centroid) else {
            break;
        };
        let err = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, n));
        }
        if err < 0.05 * s.cell_size() * frame.scale {
            break;
        }
        (0..3).for_each(|a| shift[a] += c[a]);
    }
    let Some((_, mut n)) = best else {
        return Ok(frame.resample(s, r, half));
    };
    if let Ok(i) = inertia(&n.grid) {
        let fix = (TARGET_TRACE / i.trace).sqrt();
        n.grid = n.grid.scaled(fix);
        n.applied_scale *= fix;
    }
    Ok(n)
}

/// Like [`normalize`] with the normalized lattice's half-width (before margin)
/// fixed by the caller, so two solids land on identical grids.
pub fn normalize_with_extent(
    s: &VoxelSolid,
    resolution: usize,
    half_extent: f64,
) -> Result<NormalizedSolid, GeometryError> {
    Ok(Frame::of(s)?.resample(s, resolution, half_extent))
}

/// Intersection over union of two solids on the same grid.
pub fn voxel_iou(a: &VoxelSolid, b: &VoxelSolid) -> Result<f64, GeometryError> {
    if !a.grid().matches(b.grid()) {
        return Err(GeometryError::GridMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let inter = a.occupancy().and_count(b.occupancy());
    let union = a.occupancy().or_count(b.occupancy());
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouBest {
    pub score: f64,
    /// Index into [`orientation_set`] of the winning rotation.
    pub rotation_index: usize,
}

/// Best IoU over the 24 proper rotations at `a`'s resolution.
pub fn iou_best(a: &VoxelSolid, b: &VoxelSolid) -> Result<f64, GeometryError> {
    Ok(iou_best_with(a, b, a.resolution(), Orientations::Proper24)?.score)
}

pub fn iou_best_with(
    a: &VoxelSolid,
    b: &VoxelSolid,
    resolution: usize,
    orientations: Orientations,
) -> Result<IouBest, GeometryError> {
    iou_best_posed(&Posed::new(a.clone())?, &Posed::new(b.clone())?, resolution, orientations)
}

/// A solid with its normalizing transform precomputed, for reuse across
/// many comparisons against the same reference.
#[derive(Debug, Clone)]
pub struct Posed {
    solid: VoxelSolid,
    frame: Frame,
}

impl Posed {
    pub fn new(solid: VoxelSolid) -> Result<Posed, GeometryError> {
        let frame = Frame::of(&solid)?;
        Ok(Posed { solid, frame })
    }

    pub fn solid(&self) -> &VoxelSolid {
        &self.solid
    }
}

pub fn iou_best_posed(
    a: &Posed,
    b: &Posed,
    resolution: usize,
    orientations: Orientations,
) -> Result<IouBest, GeometryError> {
    let half = a.frame.half_extent.max(b.frame.half_extent);
    let na = a.frame.resample(&a.solid, resolution, half).grid;
    let nb = b.frame.resample(&b.solid, resolution, half).grid;
    best_rotation(&na, &nb, orientations)
}

/// Searches rotations of `a` about the shared grid center against `b`.
pub fn best_rotation(
    a: &VoxelSolid,
    b: &VoxelSolid,
    orientations: Orientations,
) -> Result<IouBest, GeometryError> {
    if !a.grid().matches(b.grid()) {
        return Err(GeometryError::GridMismatch);
    }
    let (na, nb) = (a.occupied_cells(), b.occupied_cells());
    if na == 0 || nb == 0 {
        return Err(GeometryError::EmptyInput);
    }
    let grid = b.grid();
    let r = grid.resolution;
    let cells: Vec<[usize; 3]> = a.occupied_coords().collect();
    let mut best = IouBest {
        score: -1.0,
        rotation_index: 0,
    };
    for (idx, rot) in orientation_set(orientations).iter().enumerate() {
        let inter = cells
            .iter()
            .filter(|&&c| b.is_occupied(rot.apply_index(c, r)))
            .count();
        let score = inter as f64 / (na + nb - inter) as f64;
        if score > best.score {
            best = IouBest {
                score,
                rotation_index: idx,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::executor::execute;

    fn solid(src: &str, r: usize) -> VoxelSolid {
        execute(&parse(src).unwrap(), r).unwrap()
    }

    #[test]
    fn cube_inertia() {
        let s = solid("rect 1 1\nextrude 1", 64);
        let i = inertia(&s).unwrap();
        for a in 0..3 {
            assert!((i.tensor[a][a] - 1.0 / 6.0).abs() < 0.01 / 6.0);
        }
        assert!((i.trace - 0.5).abs() < 0.01);
        assert!((i.centroid[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn box_long_axis_has_smallest_moment() {
        let s = solid("rect 2 1\nextrude 1", 64);
        let i = inertia(&s).unwrap();
        assert!(i.eigenvalues[0] < i.eigenvalues[1]);
        let v0 = [i.eigenvectors[0][0], i.eigenvectors[1][0], i.eigenvectors[2][0]];
        assert!((v0[0] - 1.0).abs() < 1e-9, "{v0:?}");
    }

    #[test]
    fn flat_and_thin_are_degenerate() {
        let g = GridSpec {
            resolution: 8,
            origin: [0.0; 3],
            cell_size: 1.0,
        };
        let (mut lo, mut po) = (Occupancy::new(512), Occupancy::new(512));
        for i in 1..7 {
            lo.set(g.index(i, 3, 3));
            for j in 1..7 {
                po.set(g.index(i, j, 3));
            }
        }
        let line = VoxelSolid::new(g, lo);
        let plane = VoxelSolid::new(g, po);
        assert!(matches!(inertia(&line), Err(GeometryError::DegenerateShape { .. })));
        assert!(matches!(inertia(&plane), Err(GeometryError::DegenerateShape { .. })));
        assert_eq!(inertia(&VoxelSolid::empty(g)), Err(GeometryError::EmptyInput));
    }

    #[test]
    fn normalized_trace_and_centroid() {
        let s = solid("rect 3 1\nextrude 0.5\ncircle 0.3\nextrude 2\nunion", 64);
        let n = normalize(&s).unwrap();
        let i = inertia(&n.grid).unwrap();
        assert!((i.trace - TARGET_TRACE).abs() < 0.02 * TARGET_TRACE, "{}", i.trace);
        for a in 0..3 {
            assert!(i.centroid[a].abs() < 0.5 * n.grid.cell_size());
        }
    }

    #[test]
    fn voxel_iou_basics() {
        let a = solid("rect 1 1\nextrude 1", 16);
        assert_eq!(voxel_iou(&a, &a).unwrap(), 1.0);
        let other = solid("rect 2 1\nextrude 1", 16);
        assert_eq!(voxel_iou(&a, &other), Err(GeometryError::GridMismatch));
        assert_eq!(
            voxel_iou(&a, &VoxelSolid::empty(*a.grid())),
            Err(GeometryError::EmptyInput)
        );
    }
}
