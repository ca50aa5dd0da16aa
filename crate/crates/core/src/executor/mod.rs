//! Deterministic execution of a [`CadProgram`] into a voxel occupancy solid.
//!
//! The program is first lowered to an implicit CSG tree of extruded prisms.
//! Every cell is occupied iff its center lies inside the implicit solid, and
//! booleans are exact set operations on the per-primitive occupancies. The
//! lattice is fitted to the final solid's bounding cube with a one-cell margin.

pub mod rle;
mod voxel;

use thiserror::Error;

use crate::dsl::{BoolOp, CadProgram, Plane, Statement};

pub use voxel::{GridSpec, Occupancy, VoxelSolid};

pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("statement {statement}: {reason}")]
    Degenerate { statement: usize, reason: String },
    #[error("resolution must be a power of two >= 8, got {0}")]
    Resolution(usize),
    #[error("grids differ and cannot be combined")]
    GridMismatch,
    #[error("result has no occupied cells")]
    NotSolid,
}

impl ExecError {
    pub fn is_not_solid(&self) -> bool {
        matches!(self, ExecError::NotSolid)
    }
}

pub fn check_resolution(resolution: usize) -> Result<(), ExecError> {
    if resolution >= 8 && resolution.is_power_of_two() {
        Ok(())
    } else {
        Err(ExecError::Resolution(resolution))
    }
}

#[derive(Debug, Clone)]
enum Profile {
    Rect { half_w: f64, half_h: f64 },
    Circle { radius: f64 },
    Poly { points: Vec<[f64; 2]> },
}

impl Profile {
    fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Profile::Rect { half_w, half_h } => u.abs() <= *half_w && v.abs() <= *half_h,
            Profile::Circle { radius } => u * u + v * v <= radius * radius,
            Profile::Poly { points } => point_in_polygon(points, u, v),
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Profile::Rect { half_w, half_h } => ([-half_w, -half_h], [*half_w, *half_h]),
            Profile::Circle { radius } => ([-radius, -radius], [*radius, *radius]),
            Profile::Poly { points } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for p in points {
                    for a in 0..2 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// Even-odd rule.
fn point_in_polygon(points: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = points.len() - 1;
    for i in 0..points.len() {
        let [xi, yi] = points[i];
        let [xj, yj] = points[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2], eps: f64) -> bool {
    orient(a, b, p).abs() <= eps
        && p[0] >= a[0].min(b[0]) - eps
        && p[0] <= a[0].max(b[0]) + eps
        && p[1] >= a[1].min(b[1]) - eps
        && p[1] <= a[1].max(b[1]) + eps
}

fn segments_touch(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2], eps: f64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    on_segment(q1, q2, p1, eps)
        || on_segment(q1, q2, p2, eps)
        || on_segment(p1, p2, q1, eps)
        || on_segment(p1, p2, q2, eps)
}

/// Rejects zero-length edges, zero area, folded-back adjacent edges and
/// crossings between non-adjacent edges.
fn validate_polygon(points: &[[f64; 2]]) -> Result<(), String> {
    let n = points.len();
    let (lo, hi) = Profile::Poly {
        points: points.to_vec(),
    }
    .bounds();
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if scale <= 0.0 {
        return Err("polygon has zero extent".into());
    }
    let eps = 1e-12 * scale * scale;
    let edge = |i: usize| (points[i], points[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return Err(format!("polygon edge {i} has zero length"));
        }
    }
    let twice_area: f64 = (0..n)
        .map(|i| {
            let (a, b) = edge(i);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    if twice_area.abs() <= eps {
        return Err("polygon has zero area".into());
    }
    for i in 0..n {
        // adjacent edges fold back onto each other
        let (a, b) = edge(i);
        let (_, c) = edge((i + 1) % n);
        let dot = (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]);
        if orient(a, b, c).abs() <= eps && dot < 0.0 {
            return Err(format!("polygon folds back at vertex {}", (i + 1) % n));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (q1, q2) = edge(j);
            if segments_touch(a, b, q1, q2, eps) {
                return Err(format!("polygon edges {i} and {j} intersect"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Prism {
    plane: Plane,
    base: f64,
    depth: f64,
    translation: [f64; 3],
    profile: Profile,
}

impl Prism {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        let q = [
            p[0] - self.translation[0],
            p[1] - self.translation[1],
            p[2] - self.translation[2],
        ];
        let [u, v, w] = self.plane.to_local(q);
        w >= self.base && w <= self.base + self.depth && self.profile.contains(u, v)
    }

    fn bounds(&self) -> Bounds {
        let (lo, hi) = self.profile.bounds();
        let mut b = Bounds::EMPTY;
        for u in [lo[0], hi[0]] {
            for v in [lo[1], hi[1]] {
                for w in [self.base, self.base + self.depth] {
                    let p = self.plane.to_world(u, v, w);
                    b.include([
                        p[0] + self.translation[0],
                        p[1] + self.translation[1],
                        p[2] + self.translation[2],
                    ]);
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    min: [f64; 3],
    max: [f64; 3],
}

impl Bounds {
    const EMPTY: Bounds = Bounds {
        min: [f64::INFINITY; 3],
        max: [f64::NEG_INFINITY; 3],
    };

    fn include(&mut self, p: [f64; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    fn hull(&self, o: &Bounds) -> Bounds {
        let mut b = *self;
        for a in 0..3 {
            b.min[a] = b.min[a].min(o.min[a]);
            b.max[a] = b.max[a].max(o.max[a]);
        }
        b
    }

    fn intersect(&self, o: &Bounds) -> Bounds {
        let mut b = *self;
        for a in 0..3 {
            b.min[a] = b.min[a].max(o.min[a]);
            b.max[a] = b.max[a].min(o.max[a]);
        }
        b
    }
}

#[derive(Debug, Clone)]
enum Csg {
    Prism(Prism),
    Boolean(BoolOp, Box<Csg>, Box<Csg>),
}

impl Csg {
    fn bounds(&self) -> Bounds {
        match self {
            Csg::Prism(p) => p.bounds(),
            Csg::Boolean(BoolOp::Union, a, b) => a.bounds().hull(&b.bounds()),
            Csg::Boolean(BoolOp::Intersect, a, b) => a.bounds().intersect(&b.bounds()),
            Csg::Boolean(BoolOp::Cut, a, _) => a.bounds(),
        }
    }

    fn voxelize(&self, grid: &GridSpec) -> VoxelSolid {
        match self {
            Csg::Prism(p) => voxelize_prism(p, grid),
            Csg::Boolean(op, a, b) => combine(&a.voxelize(grid), &b.voxelize(grid), *op),
        }
    }
}

fn voxelize_prism(prism: &Prism, grid: &GridSpec) -> VoxelSolid {
    let mut occ = Occupancy::new(grid.cell_count());
    let b = prism.bounds();
    let ranges: Option<Vec<(usize, usize)>> = (0..3)
        .map(|a| grid.center_range(a, b.min[a], b.max[a]))
        .collect();
    if let Some(r) = ranges {
        for k in r[2].0..=r[2].1 {
            for j in r[1].0..=r[1].1 {
                for i in r[0].0..=r[0].1 {
                    if prism.contains(grid.cell_center([i, j, k])) {
                        occ.set(grid.index(i, j, k));
                    }
                }
            }
        }
    }
    VoxelSolid::new(*grid, occ)
}

/// Cellwise boolean on a shared grid; may return an empty solid.
fn combine(a: &VoxelSolid, b: &VoxelSolid, op: BoolOp) -> VoxelSolid {
    debug_assert!(a.grid().matches(b.grid()));
    let (oa, ob) = (a.occupancy(), b.occupancy());
    let occ = match op {
        BoolOp::Union => oa.or(ob),
        BoolOp::Intersect => oa.and(ob),
        BoolOp::Cut => oa.and_not(ob),
    };
    #[cfg(debug_assertions)]
    {
        let (na, nb) = (oa.count_ones(), ob.count_ones());
        let (union, inter) = (oa.or_count(ob), oa.and_count(ob));
        debug_assert_eq!(union + inter, na + nb, "inclusion-exclusion violated");
    }
    VoxelSolid::new(*a.grid(), occ)
}

/// Boolean of two solids. `b` is resampled onto `a`'s grid by cell-center
/// lookup when the lattices differ.
pub fn boolean(a: &VoxelSolid, b: &VoxelSolid, op: BoolOp) -> Result<VoxelSolid, ExecError> {
    let b = if a.grid().matches(b.grid()) {
        b.clone()
    } else {
        b.resample_onto(a.grid())
    };
    let out = combine(a, &b, op);
    if out.is_empty() {
        Err(ExecError::NotSolid)
    } else {
        Ok(out)
    }
}

enum Slot {
    Sketch(Profile, usize),
    Solid(Csg),
}

/// Lowers statements to a CSG tree, validating sketch geometry.
fn lower(program: &CadProgram) -> Result<Csg, ExecError> {
    let mut plane = Plane::XY;
    let mut offset = 0.0;
    let mut translation = [0.0; 3];
    let mut stack: Vec<Slot> = Vec::new();
    let degenerate = |statement: usize, reason: String| ExecError::Degenerate {
        statement: statement + 1,
        reason,
    };

    for (i, stmt) in program.statements().iter().enumerate() {
        match stmt {
            Statement::Plane { plane: p, offset: o } => {
                plane = *p;
                offset = *o;
            }
            Statement::Translate { offset: t } => {
                for a in 0..3 {
                    translation[a] += t[a];
                }
            }
            Statement::Rect { width, height } => {
                if *width <= 0.0 || *height <= 0.0 {
                    return Err(degenerate(i, "rect dimensions must be positive".into()));
                }
                stack.push(Slot::Sketch(
                    Profile::Rect {
                        half_w: width / 2.0,
                        half_h: height / 2.0,
                    },
                    i,
                ));
            }
            Statement::Circle { radius } => {
                if *radius <= 0.0 {
                    return Err(degenerate(i, "circle radius must be positive".into()));
                }
                stack.push(Slot::Sketch(Profile::Circle { radius: *radius }, i));
            }
            Statement::Poly { points } => {
                validate_polygon(points).map_err(|r| degenerate(i, r))?;
                stack.push(Slot::Sketch(
                    Profile::Poly {
                        points: points.clone(),
                    },
                    i,
                ));
            }
            Statement::Extrude { distance } => {
                let Some(Slot::Sketch(profile, _)) = stack.pop() else {
                    unreachable!("stack discipline is checked at parse time");
                };
                stack.push(Slot::Solid(Csg::Prism(Prism {
                    plane,
                    base: offset,
                    depth: *distance,
                    translation,
                    profile,
                })));
            }
            Statement::Boolean(op) => {
                let (Some(Slot::Solid(b)), Some(Slot::Solid(a))) = (stack.pop(), stack.pop())
                else {
                    unreachable!("stack discipline is checked at parse time");
                };
                stack.push(Slot::Solid(Csg::Boolean(*op, Box::new(a), Box::new(b))));
            }
        }
    }
    match stack.pop() {
        Some(Slot::Solid(csg)) if stack.is_empty() => Ok(csg),
        Some(Slot::Sketch(_, i)) => Err(degenerate(i, "sketch was never extruded".into())),
        _ => unreachable!("stack discipline is checked at parse time"),
    }
}

/// Cubic lattice of `resolution` cells whose longest axis spans `b` with one
/// margin cell per side. Other axes are centred, snapped to whole cells.
fn grid_for_bounds(b: &Bounds, resolution: usize) -> Option<GridSpec> {
    if b.is_empty() {
        return None;
    }
    let extent = (0..3).map(|a| b.max[a] - b.min[a]).fold(0.0, f64::max);
    if !(extent > 0.0 && extent.is_finite()) {
        return None;
    }
    let cell_size = extent / (resolution - 2) as f64;
    let mut origin = [0.0; 3];
    for a in 0..3 {
        let span_cells = (b.max[a] - b.min[a]) / cell_size;
        let margin = ((resolution as f64 - span_cells) / 2.0 + 1e-9).floor().max(1.0);
        origin[a] = b.min[a] - margin * cell_size;
    }
    Some(GridSpec {
        resolution,
        origin,
        cell_size,
    })
}

/// Executes `program` to a solid of `resolution`³ cells.
pub fn execute(program: &CadProgram, resolution: usize) -> Result<VoxelSolid, ExecError> {
    check_resolution(resolution)?;
    let csg = lower(program)?;
    let bounds = csg.bounds();
    let grid = grid_for_bounds(&bounds, resolution).ok_or(ExecError::NotSolid)?;
    let coarse = csg.voxelize(&grid);
    let (lo, hi) = coarse.occupied_bounds().ok_or(ExecError::NotSolid)?;

    // Booleans like CUT and INTERSECT can leave the conservative bounds much
    // larger than the solid; refit the lattice to the occupied region.
    let h = grid.cell_size;
    let mut tight = Bounds::EMPTY;
    tight.include(std::array::from_fn(|a| grid.origin[a] + (lo[a] as f64 - 1.0) * h));
    tight.include(std::array::from_fn(|a| grid.origin[a] + (hi[a] as f64 + 2.0) * h));
    let tight = tight.intersect(&bounds);
    if let Some(refit) = grid_for_bounds(&tight, resolution) {
        if refit.cell_size < grid.cell_size * (1.0 - 1e-9) {
            let fine = csg.voxelize(&refit);
            if !fine.is_empty() && fine.has_margin() {
                return Ok(fine);
            }
        }
    }
    Ok(coarse)
}

/// Executes `program` on a caller-supplied lattice (no refitting).
pub fn execute_on_grid(program: &CadProgram, grid: &GridSpec) -> Result<VoxelSolid, ExecError> {
    let solid = lower(program)?.voxelize(grid);
    if solid.is_empty() {
        Err(ExecError::NotSolid)
    } else {
        Ok(solid)
    }
}

/// The lattice `execute` would choose before any refit, from the program's
/// conservative bounds.
pub fn grid_for_program(program: &CadProgram, resolution: usize) -> Result<GridSpec, ExecError> {
    check_resolution(resolution)?;
    grid_for_bounds(&lower(program)?.bounds(), resolution).ok_or(ExecError::NotSolid)
}
