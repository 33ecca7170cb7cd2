//! Nested uniform quadrilateral meshes of the unit square.
//!
//! Level `l` has `n0 * 2^l` cells per side. Nodes are numbered row-major with
//! x fastest: `k = j * nodes_per_side + i` sits at `(i * h_l, j * h_l)`.
//! A patch is one coarse (level 0) cell together with the level-`l` nodes it
//! covers.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshHierarchy {
    n0: usize,
    levels: usize,
}

/// A coarse cell `(ci, cj)` viewed as a subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Patch {
    pub ci: usize,
    pub cj: usize,
}

impl Patch {
    pub fn new(ci: usize, cj: usize) -> Self {
        Self { ci, cj }
    }
}

impl MeshHierarchy {
    /// `n0` coarse cells per side refined uniformly `levels` times.
    pub fn new(n0: usize, levels: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::InvalidMesh("n0 must be at least 1".into()));
        }
        if levels == 0 {
            return Err(Error::InvalidMesh("levels must be at least 1".into()));
        }
        if n0.checked_shl(levels as u32 + 1).is_none() || levels > 24 {
            return Err(Error::InvalidMesh(format!(
                "hierarchy n0={n0}, levels={levels} is too large"
            )));
        }
        Ok(Self { n0, levels })
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Number of refinements L; valid levels are `0..=L`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn finest(&self) -> usize {
        self.levels
    }

    pub fn cells_per_side(&self, level: usize) -> usize {
        self.n0 << level
    }

    pub fn nodes_per_side(&self, level: usize) -> usize {
        self.cells_per_side(level) + 1
    }

    pub fn node_count(&self, level: usize) -> usize {
        let s = self.nodes_per_side(level);
        s * s
    }

    /// Mesh width at `level`.
    pub fn h(&self, level: usize) -> f64 {
        1.0 / self.cells_per_side(level) as f64
    }

    /// Coarse mesh width H.
    pub fn coarse_h(&self) -> f64 {
        self.h(0)
    }

    /// Finest mesh width h = H / 2^L.
    pub fn fine_h(&self) -> f64 {
        self.h(self.levels)
    }

    pub fn patch_count(&self) -> usize {
        self.n0 * self.n0
    }

    /// All patches, ordered row-major by coarse cell.
    pub fn patches(&self) -> impl Iterator<Item = Patch> + '_ {
        (0..self.n0).flat_map(move |cj| (0..self.n0).map(move |ci| Patch { ci, cj }))
    }

    /// Patch-major index of `p` (matches [`MeshHierarchy::patches`]).
    pub fn patch_index(&self, p: Patch) -> usize {
        p.cj * self.n0 + p.ci
    }

    /// Number of level-`l` nodes in one patch, `(2^l + 1)^2`.
    pub fn patch_node_count(&self, level: usize) -> usize {
        let s = (1usize << level) + 1;
        s * s
    }

    /// Levels above the finest are accepted: callers may build reference
    /// solutions one level beyond the hierarchy by constructing a deeper one.
    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.levels {
            return Err(Error::OutOfRange {
                what: "level",
                index: level,
                limit: self.levels,
            });
        }
        Ok(())
    }

    fn check_node(&self, level: usize, k: usize) -> Result<()> {
        self.check_level(level)?;
        let count = self.node_count(level);
        if k >= count {
            return Err(Error::OutOfRange {
                what: "node",
                index: k,
                limit: count,
            });
        }
        Ok(())
    }

    fn check_patch(&self, p: Patch) -> Result<()> {
        for (what, index) in [("patch ci", p.ci), ("patch cj", p.cj)] {
            if index >= self.n0 {
                return Err(Error::OutOfRange {
                    what,
                    index,
                    limit: self.n0,
                });
            }
        }
        Ok(())
    }

    /// Grid position `(i, j)` of node `k`.
    pub fn node_ij(&self, level: usize, k: usize) -> (usize, usize) {
        let s = self.nodes_per_side(level);
        (k % s, k / s)
    }

    pub fn node_index(&self, level: usize, i: usize, j: usize) -> usize {
        j * self.nodes_per_side(level) + i
    }

    pub fn node_coords(&self, level: usize, k: usize) -> Result<(f64, f64)> {
        self.check_node(level, k)?;
        let (i, j) = self.node_ij(level, k);
        let h = self.h(level);
        Ok((i as f64 * h, j as f64 * h))
    }

    pub fn is_boundary(&self, level: usize, k: usize) -> bool {
        let last = self.cells_per_side(level);
        let (i, j) = self.node_ij(level, k);
        i == 0 || j == 0 || i == last || j == last
    }

    /// Level-`l` node indices covering patch `p`, row-major within the patch.
    pub fn patch_fine_nodes(&self, p: Patch, level: usize) -> Result<Vec<usize>> {
        self.check_patch(p)?;
        self.check_level(level)?;
        Ok(self.patch_nodes_unchecked(p, level))
    }

    pub(crate) fn patch_nodes_unchecked(&self, p: Patch, level: usize) -> Vec<usize> {
        let per = 1usize << level;
        let s = self.nodes_per_side(level);
        let (i0, j0) = (p.ci * per, p.cj * per);
        let mut out = Vec::with_capacity((per + 1) * (per + 1));
        for j in j0..=j0 + per {
            for i in i0..=i0 + per {
                out.push(j * s + i);
            }
        }
        out
    }

    /// Number of patches whose closure contains level-`l` node `k`.
    pub fn node_patch_count(&self, level: usize, k: usize) -> Result<usize> {
        self.check_node(level, k)?;
        let (i, j) = self.node_ij(level, k);
        Ok(self.axis_patch_count(level, i) * self.axis_patch_count(level, j))
    }

    /// Patches along one axis containing grid line `i`.
    fn axis_patch_count(&self, level: usize, i: usize) -> usize {
        let per = 1usize << level;
        if !i.is_multiple_of(per) {
            return 1;
        }
        let c = i / per;
        usize::from(c > 0) + usize::from(c < self.n0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(MeshHierarchy::new(0, 1).is_err());
        assert!(MeshHierarchy::new(1, 0).is_err());
    }

    #[test]
    fn smallest_hierarchy() {
        let m = MeshHierarchy::new(1, 1).unwrap();
        assert_eq!(m.node_count(0), 4);
        assert_eq!(m.node_count(1), 9);
    }

    #[test]
    fn finest_ratio_one_eighth() {
        let m = MeshHierarchy::new(8, 3).unwrap();
        assert_eq!(m.fine_h() * 8.0, m.coarse_h());
    }

    #[test]
    fn node_count_formula() {
        let m = MeshHierarchy::new(4, 2).unwrap();
        assert_eq!(m.node_count(2), 289);
    }

    #[test]
    fn coordinates() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        assert_eq!(m.node_coords(0, 0).unwrap(), (0.0, 0.0));
        assert_eq!(m.node_coords(0, 4).unwrap(), (0.5, 0.5));
        assert_eq!(m.node_coords(1, 24).unwrap(), (1.0, 1.0));
        assert!(m.node_coords(1, 25).is_err());
        assert!(m.node_coords(2, 0).is_err());
    }

    #[test]
    fn single_patch_covers_everything() {
        let m = MeshHierarchy::new(1, 1).unwrap();
        let nodes = m.patch_fine_nodes(Patch::new(0, 0), 1).unwrap();
        assert_eq!(nodes, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn lower_left_patch_nodes() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        let nodes = m.patch_fine_nodes(Patch::new(0, 0), 1).unwrap();
        let expected: Vec<usize> = (0..25)
            .filter(|&k| {
                let (x, y) = m.node_coords(1, k).unwrap();
                x <= 0.5 && y <= 0.5
            })
            .collect();
        assert_eq!(nodes, expected);
    }

    #[test]
    fn center_node_shared_by_four_patches() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        let center = m.node_index(1, 2, 2);
        for (ci, cj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!(m.patch_fine_nodes(Patch::new(ci, cj), 1).unwrap().contains(&center));
        }
        assert_eq!(m.node_patch_count(1, center).unwrap(), 4);
    }

    #[test]
    fn patch_counts_on_edges_and_interiors() {
        let m = MeshHierarchy::new(2, 2).unwrap();
        // (0.5, 0.25) on level 1: i = 2, j = 1
        assert_eq!(m.node_patch_count(1, m.node_index(1, 2, 1)).unwrap(), 2);
        assert_eq!(m.node_patch_count(2, m.node_index(2, 4, 2)).unwrap(), 2);
        // strictly inside patch (0,0)
        assert_eq!(m.node_patch_count(2, m.node_index(2, 1, 1)).unwrap(), 1);
        // domain corner and boundary midpoint between two patches
        assert_eq!(m.node_patch_count(2, 0).unwrap(), 1);
        assert_eq!(m.node_patch_count(2, m.node_index(2, 4, 0)).unwrap(), 2);
    }

    #[test]
    fn patch_out_of_range() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        assert!(m.patch_fine_nodes(Patch::new(2, 0), 1).is_err());
        assert!(m.patch_fine_nodes(Patch::new(0, 5), 1).is_err());
    }

    #[test]
    fn partition_count_matches_exhaustive_scan() {
        for (n0, levels) in [(1, 1), (2, 1), (3, 2), (4, 2)] {
            let m = MeshHierarchy::new(n0, levels).unwrap();
            for l in 0..=levels {
                let mut hits = vec![0usize; m.node_count(l)];
                for p in m.patches() {
                    for k in m.patch_fine_nodes(p, l).unwrap() {
                        hits[k] += 1;
                    }
                }
                for (k, &h) in hits.iter().enumerate() {
                    assert_eq!(m.node_patch_count(l, k).unwrap(), h, "n0={n0} l={l} k={k}");
                }
            }
        }
    }

    #[test]
    fn levels_are_nested() {
        let m = MeshHierarchy::new(3, 3).unwrap();
        for l in 0..m.levels() {
            for k in 0..m.node_count(l) {
                let (i, j) = m.node_ij(l, k);
                let fine = m.node_index(l + 1, 2 * i, 2 * j);
                assert_eq!(m.node_coords(l, k).unwrap(), m.node_coords(l + 1, fine).unwrap());
            }
        }
    }
}
