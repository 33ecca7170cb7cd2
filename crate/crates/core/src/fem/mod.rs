//! Bilinear (Q1) Galerkin discretisation of `-Δu = f` with homogeneous
//! Dirichlet data on the unit square.

mod norms;
mod sparse;

pub use norms::{grid_norm_l2, grid_seminorm_h1, l2_error_against, norm_l2, norm_l2_nodal, seminorm_h1};
pub use sparse::{solve_cg, CgSolution, CsrMatrix};

use serde::{Deserialize, Serialize};

use crate::mesh::MeshHierarchy;
use crate::transfer::interpolate_up;
use crate::{Error, Result};

/// Default relative residual tolerance of [`fe_solve`].
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Q1 element stiffness on a square, local order SW, SE, NE, NW. In 2D it
/// does not depend on the cell size.
pub const ELEMENT_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Two-point Gauss abscissae on [0, 1].
pub(crate) fn gauss_points() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

/// Bilinear shape functions at reference point `(xi, eta)` in SW, SE, NE, NW
/// order.
pub(crate) fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// Global indices of the corners of cell `(ci, cj)` on a grid with `side`
/// nodes per side, in SW, SE, NE, NW order.
pub(crate) fn cell_nodes(side: usize, ci: usize, cj: usize) -> [usize; 4] {
    let sw = cj * side + ci;
    [sw, sw + 1, sw + side + 1, sw + side]
}

/// Nodal coefficients of a Q1 function on one level of a hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeFunction {
    n0: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(m: &MeshHierarchy, level: usize) -> Self {
        Self {
            n0: m.n0(),
            level,
            coeffs: vec![0.0; m.node_count(level)],
        }
    }

    /// Validates length and the zero boundary trace.
    pub fn from_coeffs(n0: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        let side = (n0 << level) + 1;
        if coeffs.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients for n0={n0}, level={level}, got {}",
                side * side,
                coeffs.len()
            )));
        }
        let f = Self { n0, level, coeffs };
        if let Some(k) = f.boundary_nodes().find(|&k| f.coeffs[k] != 0.0) {
            return Err(Error::Invariant(format!(
                "boundary coefficient {k} is {} (must be 0)",
                f.coeffs[k]
            )));
        }
        Ok(f)
    }

    /// Skips the boundary check; callers guarantee the invariant.
    pub(crate) fn from_raw(n0: usize, level: usize, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), ((n0 << level) + 1).pow(2));
        Self { n0, level, coeffs }
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn nodes_per_side(&self) -> usize {
        (self.n0 << self.level) + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n0 << self.level) as f64
    }

    fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let s = self.nodes_per_side();
        (0..s * s).filter(move |&k| {
            let (i, j) = (k % s, k / s);
            i == 0 || j == 0 || i == s - 1 || j == s - 1
        })
    }

    /// `self - other`; both must live on the same level of the same family
    /// of meshes.
    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        self.check_same_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.n0, self.level, coeffs))
    }

    pub fn scaled(&self, c: f64) -> FeFunction {
        Self::from_raw(self.n0, self.level, self.coeffs.iter().map(|v| c * v).collect())
    }

    pub(crate) fn check_same_space(&self, other: &FeFunction) -> Result<()> {
        if self.n0 != other.n0 || self.level != other.level {
            return Err(Error::HierarchyMismatch(format!(
                "(n0={}, level={}) vs (n0={}, level={})",
                self.n0, self.level, other.n0, other.level
            )));
        }
        Ok(())
    }
}

/// Stiffness matrix of level `level` before Dirichlet elimination.
pub fn assemble_stiffness(m: &MeshHierarchy, level: usize) -> CsrMatrix {
    let side = m.nodes_per_side(level);
    let n = side * side;
    let pattern: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            let (i, j) = (k % side, k / side);
            let mut cols = Vec::with_capacity(9);
            for jj in j.saturating_sub(1)..=(j + 1).min(side - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(side - 1) {
                    cols.push(jj * side + ii);
                }
            }
            cols
        })
        .collect();
    let mut a = CsrMatrix::from_pattern(&pattern);
    let cells = side - 1;
    for cj in 0..cells {
        for ci in 0..cells {
            let nodes = cell_nodes(side, ci, cj);
            for (r, &gr) in nodes.iter().enumerate() {
                for (c, &gc) in nodes.iter().enumerate() {
                    a.add(gr, gc, ELEMENT_STIFFNESS[r][c]);
                }
            }
        }
    }
    a
}

/// Load vector `(f, φ_k)` by 2x2 Gauss quadrature per cell; boundary entries
/// are zeroed.
pub fn assemble_load<F>(m: &MeshHierarchy, level: usize, f: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let side = m.nodes_per_side(level);
    let h = m.h(level);
    let gp = gauss_points();
    let w = h * h / 4.0;
    let mut b = vec![0.0; side * side];
    for cj in 0..side - 1 {
        for ci in 0..side - 1 {
            let nodes = cell_nodes(side, ci, cj);
            for &eta in &gp {
                for &xi in &gp {
                    let fx = f((ci as f64 + xi) * h, (cj as f64 + eta) * h);
                    for (node, phi) in nodes.iter().zip(shape(xi, eta)) {
                        b[*node] += w * fx * phi;
                    }
                }
            }
        }
    }
    for (k, v) in b.iter_mut().enumerate() {
        if m.is_boundary(level, k) {
            *v = 0.0;
        }
    }
    b
}

fn grid_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side < 2 || side * side != dim {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {dim} is not a square grid"
        )));
    }
    Ok(side)
}

/// Replaces boundary rows by identity rows, zeroes boundary columns in the
/// remaining rows and zeroes the boundary entries of `b`. With homogeneous
/// data no lifting is required.
pub fn apply_dirichlet(mut a: CsrMatrix, mut b: Vec<f64>) -> Result<(CsrMatrix, Vec<f64>)> {
    if a.dim() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {} vs right-hand side length {}",
            a.dim(),
            b.len()
        )));
    }
    let side = grid_side(a.dim())?;
    let on_boundary = |k: usize| {
        let (i, j) = (k % side, k / side);
        i == 0 || j == 0 || i == side - 1 || j == side - 1
    };
    for (r, br) in b.iter_mut().enumerate() {
        let row_boundary = on_boundary(r);
        let (cols, vals) = a.row_mut(r);
        for (c, v) in cols.iter().zip(vals.iter_mut()) {
            if row_boundary {
                *v = if *c == r { 1.0 } else { 0.0 };
            } else if on_boundary(*c) {
                *v = 0.0;
            }
        }
        if row_boundary {
            *br = 0.0;
        }
    }
    Ok((a, b))
}

/// Galerkin solution on `level` with relative tolerance `rel_tol`.
pub fn fe_solve_with_tol<F>(m: &MeshHierarchy, level: usize, f: F, rel_tol: f64) -> Result<FeFunction>
where
    F: Fn(f64, f64) -> f64,
{
    let a = assemble_stiffness(m, level);
    let b = assemble_load(m, level, f);
    let (a, b) = apply_dirichlet(a, b)?;
    let interior = (m.nodes_per_side(level) - 2).pow(2);
    let sol = solve_cg(&a, &b, rel_tol, 10 * interior.max(1))?;
    let mut x = sol.x;
    // Identity rows with zero data already give zeros; make it exact.
    for (k, v) in x.iter_mut().enumerate() {
        if m.is_boundary(level, k) {
            *v = 0.0;
        }
    }
    Ok(FeFunction::from_raw(m.n0(), level, x))
}

/// Galerkin solution on `level` with the default tolerance.
pub fn fe_solve<F>(m: &MeshHierarchy, level: usize, f: F) -> Result<FeFunction>
where
    F: Fn(f64, f64) -> f64,
{
    fe_solve_with_tol(m, level, f, DEFAULT_REL_TOL)
}

/// L2 distance between `u` and a finer reference solution after
/// interpolating `u` onto the reference level.
pub fn error_vs_reference(u: &FeFunction, reference: &FeFunction) -> Result<f64> {
    if u.n0() != reference.n0() {
        return Err(Error::HierarchyMismatch(format!(
            "n0 {} vs reference n0 {}",
            u.n0(),
            reference.n0()
        )));
    }
    if reference.level() < u.level() {
        return Err(Error::HierarchyMismatch(format!(
            "reference level {} is coarser than level {}",
            reference.level(),
            u.level()
        )));
    }
    let lifted = if reference.level() == u.level() {
        u.clone()
    } else {
        interpolate_up(u, reference.level())?
    };
    Ok(norm_l2(&lifted.sub(reference)?))
}
