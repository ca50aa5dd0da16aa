//! The cube symmetry group as signed axis permutations.

use super::jacobi::{det, Mat3};
use crate::executor::{Occupancy, VoxelSolid};

/// Output axis `a` takes input axis `perm[a]`, negated when `neg[a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rotation {
    pub perm: [usize; 3],
    pub neg: [bool; 3],
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        perm: [0, 1, 2],
        neg: [false; 3],
    };

    pub fn matrix(&self) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            m[a][self.perm[a]] = if self.neg[a] { -1.0 } else { 1.0 };
        }
        m
    }

    pub fn is_proper(&self) -> bool {
        det(&self.matrix()) > 0.0
    }

    /// Maps a cell index on an `r`-cell axis lattice about the lattice center.
    #[inline]
    pub fn apply_index(&self, c: [usize; 3], r: usize) -> [usize; 3] {
        std::array::from_fn(|a| {
            let x = c[self.perm[a]];
            if self.neg[a] {
                r - 1 - x
            } else {
                x
            }
        })
    }

    /// Rotates a solid about its grid center; the result stays on the same grid.
    pub fn apply_to_solid(&self, s: &VoxelSolid) -> VoxelSolid {
        let grid = *s.grid();
        let mut occ = Occupancy::new(grid.cell_count());
        for c in s.occupied_coords() {
            let d = self.apply_index(c, grid.resolution);
            occ.set(grid.index(d[0], d[1], d[2]));
        }
        VoxelSolid::new(grid, occ)
    }
}

/// Which orientation set the IoU search ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientations {
    /// The 24 proper rotations; mirror images are not matched.
    #[default]
    Proper24,
    /// All 48 signed permutations, including reflections.
    Full48,
}

impl Orientations {
    pub fn from_count(n: usize) -> Option<Self> {
        match n {
            24 => Some(Orientations::Proper24),
            48 => Some(Orientations::Full48),
            _ => None,
        }
    }

    pub fn count(self) -> usize {
        match self {
            Orientations::Proper24 => 24,
            Orientations::Full48 => 48,
        }
    }
}

/// Permutations in lexicographic order times sign patterns in binary order
/// (bit `a` negates axis `a`); proper rotations first, identity at index 0.
pub fn orientation_set(which: Orientations) -> Vec<Rotation> {
    let mut all = Vec::with_capacity(48);
    for perm in PERMS {
        for bits in 0..8u8 {
            all.push(Rotation {
                perm,
                neg: std::array::from_fn(|a| bits & (1 << a) != 0),
            });
        }
    }
    let (proper, improper): (Vec<_>, Vec<_>) = all.into_iter().partition(Rotation::is_proper);
    match which {
        Orientations::Proper24 => proper,
        Orientations::Full48 => proper.into_iter().chain(improper).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn group_sizes() {
        let p = orientation_set(Orientations::Proper24);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], Rotation::IDENTITY);
        assert!(p.iter().all(Rotation::is_proper));
        let f = orientation_set(Orientations::Full48);
        assert_eq!(f.len(), 48);
        assert_eq!(f.iter().collect::<HashSet<_>>().len(), 48);
        assert_eq!(&f[..24], &p[..]);
    }

    #[test]
    fn index_map_matches_matrix() {
        let r = 8;
        for rot in orientation_set(Orientations::Full48) {
            let m = rot.matrix();
            let c = [1usize, 2, 6];
            let centered = c.map(|x| x as f64 + 0.5 - r as f64 / 2.0);
            let d = rot.apply_index(c, r);
            for a in 0..3 {
                let want: f64 = (0..3).map(|b| m[a][b] * centered[b]).sum();
                assert_eq!(d[a] as f64 + 0.5 - r as f64 / 2.0, want);
            }
        }
    }
}
