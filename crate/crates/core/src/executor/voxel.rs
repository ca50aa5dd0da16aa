use std::fmt;

/// Fixed-length bitset over grid cells, x-fastest index order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Occupancy {
    len: usize,
    words: Vec<u64>,
}

impl fmt::Debug for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Occupancy({}/{} set)", self.count_ones(), self.len)
    }
}

impl Occupancy {
    pub fn new(len: usize) -> Self {
        Occupancy {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i >> 6] & (1u64 << (i & 63)) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] |= 1u64 << (i & 63);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.len, other.len, "occupancy length mismatch");
        Occupancy {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn and_not(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn and_count(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "occupancy length mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn or_count(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "occupancy length mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }
}

/// Placement of a cubic lattice: `resolution` cells per axis of edge
/// `cell_size`, with the low corner of cell (0,0,0) at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub origin: [f64; 3],
    pub cell_size: f64,
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.resolution.pow(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let r = self.resolution;
        [idx % r, (idx / r) % r, idx / (r * r)]
    }

    #[inline]
    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        let h = self.cell_size;
        [
            self.origin[0] + (c[0] as f64 + 0.5) * h,
            self.origin[1] + (c[1] as f64 + 0.5) * h,
            self.origin[2] + (c[2] as f64 + 0.5) * h,
        ]
    }

    /// Cell containing world point `p`, if inside the grid.
    #[inline]
    pub fn locate(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let t = ((p[a] - self.origin[a]) / self.cell_size).floor();
            if !(t >= 0.0 && t < self.resolution as f64) {
                return None;
            }
            out[a] = t as usize;
        }
        Some(out)
    }

    pub fn center(&self) -> [f64; 3] {
        let half = 0.5 * self.cell_size * self.resolution as f64;
        [
            self.origin[0] + half,
            self.origin[1] + half,
            self.origin[2] + half,
        ]
    }

    /// Same lattice up to floating-point noise.
    pub fn matches(&self, other: &GridSpec) -> bool {
        let tol = 1e-9 * self.cell_size.max(other.cell_size);
        self.resolution == other.resolution
            && (self.cell_size - other.cell_size).abs() <= tol
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= tol)
    }

    /// Inclusive range of cell indices along `axis` whose centers lie in `[lo, hi]`.
    pub fn center_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let h = self.cell_size;
        let first = ((lo - self.origin[axis]) / h - 0.5).ceil().max(0.0);
        let last = ((hi - self.origin[axis]) / h - 0.5)
            .floor()
            .min(self.resolution as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    }
}

/// An occupancy grid with physical placement; the executed form of a program.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSolid {
    grid: GridSpec,
    occupancy: Occupancy,
}

impl VoxelSolid {
    pub fn new(grid: GridSpec, occupancy: Occupancy) -> Self {
        assert_eq!(grid.cell_count(), occupancy.len(), "grid/occupancy size mismatch");
        VoxelSolid { grid, occupancy }
    }

    pub fn empty(grid: GridSpec) -> Self {
        VoxelSolid::new(grid, Occupancy::new(grid.cell_count()))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn resolution(&self) -> usize {
        self.grid.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.grid.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.grid.cell_size
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occupancy
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupancy.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    /// Occupied cells times cell volume, mm³.
    pub fn volume(&self) -> f64 {
        self.occupied_cells() as f64 * self.grid.cell_size.powi(3)
    }

    #[inline]
    pub fn is_occupied(&self, c: [usize; 3]) -> bool {
        self.occupancy.get(self.grid.index(c[0], c[1], c[2]))
    }

    pub fn occupied_coords(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.occupancy.iter_ones().map(|i| self.grid.coords(i))
    }

    /// Inclusive index bounds of occupied cells.
    pub fn occupied_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for c in self.occupied_coords() {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        any.then_some((lo, hi))
    }

    /// True when no occupied cell touches the outermost layer of the grid.
    pub fn has_margin(&self) -> bool {
        match self.occupied_bounds() {
            None => true,
            Some((lo, hi)) => {
                let last = self.grid.resolution - 1;
                lo.iter().all(|&l| l >= 1) && hi.iter().all(|&h| h < last)
            }
        }
    }

    /// Uniform scaling about the world origin. Exact: only placement changes.
    pub fn scaled(&self, factor: f64) -> VoxelSolid {
        assert!(factor > 0.0);
        let mut grid = self.grid;
        grid.cell_size *= factor;
        for o in &mut grid.origin {
            *o *= factor;
        }
        VoxelSolid::new(grid, self.occupancy.clone())
    }

    pub fn translated(&self, offset: [f64; 3]) -> VoxelSolid {
        let mut grid = self.grid;
        for a in 0..3 {
            grid.origin[a] += offset[a];
        }
        VoxelSolid::new(grid, self.occupancy.clone())
    }

    /// Resamples onto `target` by cell-center lookup.
    pub fn resample_onto(&self, target: &GridSpec) -> VoxelSolid {
        if self.grid.matches(target) {
            return VoxelSolid::new(*target, self.occupancy.clone());
        }
        let mut occ = Occupancy::new(target.cell_count());
        let r = target.resolution;
        for k in 0..r {
            for j in 0..r {
                for i in 0..r {
                    let p = target.cell_center([i, j, k]);
                    if let Some(c) = self.grid.locate(p) {
                        if self.is_occupied(c) {
                            occ.set(target.index(i, j, k));
                        }
                    }
                }
            }
        }
        VoxelSolid::new(*target, occ)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitset_ops() {
        let mut a = Occupancy::new(130);
        let mut b = Occupancy::new(130);
        for i in [0, 5, 64, 129] {
            a.set(i);
        }
        for i in [5, 64, 100] {
            b.set(i);
        }
        assert_eq!(a.count_ones(), 4);
        assert_eq!(a.and(&b).iter_ones().collect::<Vec<_>>(), vec![5, 64]);
        assert_eq!(a.or(&b).count_ones(), 5);
        assert_eq!(a.and_not(&b).iter_ones().collect::<Vec<_>>(), vec![0, 129]);
        assert_eq!(a.and_count(&b), 2);
        assert_eq!(a.or_count(&b), 5);
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec {
            resolution: 8,
            origin: [0.0; 3],
            cell_size: 1.0,
        };
        for idx in [0, 7, 8, 63, 64, 511] {
            let c = g.coords(idx);
            assert_eq!(g.index(c[0], c[1], c[2]), idx);
        }
        assert_eq!(g.locate([7.5, 0.2, 3.0]), Some([7, 0, 3]));
        assert_eq!(g.locate([8.0, 0.0, 0.0]), None);
        assert_eq!(g.center_range(0, 0.5, 2.5), Some((0, 2)));
        assert_eq!(g.center_range(0, 0.6, 1.4), None);
    }
}
