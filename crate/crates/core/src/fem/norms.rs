//! Norms of Q1 functions. Integrals use 2x2 Gauss quadrature per cell, which
//! is exact for `u^2` and `|∇u|^2` of bilinear `u`.

use super::{cell_nodes, gauss_points, shape, FeFunction};

fn cell_count(side: usize) -> usize {
    assert!(side >= 2, "grid needs at least 2 nodes per side");
    side - 1
}

/// `(∫ u^2)^{1/2}` of the bilinear interpolant of `values` on a uniform grid
/// of the unit square with `side` nodes per side. No boundary constraint.
pub fn grid_norm_l2(values: &[f64], side: usize) -> f64 {
    assert_eq!(values.len(), side * side);
    let cells = cell_count(side);
    let h = 1.0 / cells as f64;
    let gp = gauss_points();
    let mut acc = 0.0;
    for cj in 0..cells {
        for ci in 0..cells {
            let nodes = cell_nodes(side, ci, cj);
            for &eta in &gp {
                for &xi in &gp {
                    let u: f64 = nodes.iter().zip(shape(xi, eta)).map(|(&k, phi)| values[k] * phi).sum();
                    acc += u * u;
                }
            }
        }
    }
    (acc * h * h / 4.0).sqrt()
}

/// `(∫ |∇u|^2)^{1/2}` of the bilinear interpolant of `values`.
pub fn grid_seminorm_h1(values: &[f64], side: usize) -> f64 {
    assert_eq!(values.len(), side * side);
    let cells = cell_count(side);
    let gp = gauss_points();
    let mut acc = 0.0;
    for cj in 0..cells {
        for ci in 0..cells {
            let [sw, se, ne, nw] = cell_nodes(side, ci, cj).map(|k| values[k]);
            for &eta in &gp {
                for &xi in &gp {
                    // Gradient scaled by h; the h factors cancel against the
                    // cell area.
                    let dx = (se - sw) * (1.0 - eta) + (ne - nw) * eta;
                    let dy = (nw - sw) * (1.0 - xi) + (ne - se) * xi;
                    acc += dx * dx + dy * dy;
                }
            }
        }
    }
    (acc / 4.0).sqrt()
}

pub fn norm_l2(u: &FeFunction) -> f64 {
    grid_norm_l2(u.coeffs(), u.nodes_per_side())
}

pub fn seminorm_h1(u: &FeFunction) -> f64 {
    grid_seminorm_h1(u.coeffs(), u.nodes_per_side())
}

/// Nodal l2 norm `(Σ v(x)^2)^{1/2}` over patch-local values.
pub fn norm_l2_nodal(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||u - exact||_{L2}` with 3x3 Gauss quadrature per cell. Used for
/// convergence studies against closed-form solutions.
pub fn l2_error_against<E>(u: &FeFunction, exact: E) -> f64
where
    E: Fn(f64, f64) -> f64,
{
    let side = u.nodes_per_side();
    let cells = side - 1;
    let h = u.h();
    let r = 0.5 * 0.6f64.sqrt();
    let pts = [0.5 - r, 0.5, 0.5 + r];
    let wts = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let vals = u.coeffs();
    let mut acc = 0.0;
    for cj in 0..cells {
        for ci in 0..cells {
            let nodes = cell_nodes(side, ci, cj);
            for (a, &eta) in pts.iter().enumerate() {
                for (b, &xi) in pts.iter().enumerate() {
                    let uh: f64 = nodes.iter().zip(shape(xi, eta)).map(|(&k, phi)| vals[k] * phi).sum();
                    let e = uh - exact((ci as f64 + xi) * h, (cj as f64 + eta) * h);
                    acc += wts[a] * wts[b] * e * e;
                }
            }
        }
    }
    (acc * h * h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn zero_function() {
        let z = vec![0.0; 25];
        assert_eq!(grid_norm_l2(&z, 5), 0.0);
        assert_eq!(grid_seminorm_h1(&z, 5), 0.0);
    }

    #[test]
    fn gradient_of_x_has_unit_seminorm() {
        let side = 9;
        let vals: Vec<f64> = (0..side * side)
            .map(|k| (k % side) as f64 / (side - 1) as f64)
            .collect();
        assert!((grid_seminorm_h1(&vals, side) - 1.0).abs() < 1e-14);
        // ∫ x^2 = 1/3 is reproduced exactly as well.
        assert!((grid_norm_l2(&vals, side).powi(2) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn homogeneity_and_triangle_inequality() {
        let mut rng = SplitMix64::new(5);
        let side = 7;
        for _ in 0..50 {
            let u: Vec<f64> = (0..side * side).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let w: Vec<f64> = (0..side * side).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let c = rng.uniform(-3.0, 3.0);
            let cu: Vec<f64> = u.iter().map(|v| c * v).collect();
            let sum: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
            for norm in [grid_norm_l2, grid_seminorm_h1] {
                let nu = norm(&u, side);
                assert!((norm(&cu, side) - c.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
                assert!(norm(&sum, side) <= nu + norm(&w, side) + 1e-12);
            }
        }
    }

    #[test]
    fn nodal_norm() {
        assert_eq!(norm_l2_nodal(&[0.0; 9]), 0.0);
        assert_eq!(norm_l2_nodal(&[2.0; 9]), 6.0);
        assert_eq!(norm_l2_nodal(&[0.0, -3.5, 0.0]), 3.5);
    }
}
