//! Grid transfer between levels and between global vectors and patches.

use crate::fem::FeFunction;
use crate::mesh::{MeshHierarchy, Patch};
use crate::{Error, Result};

/// One uniform refinement of a nodal grid with `side` nodes per side.
fn refine_once(coarse: &[f64], side: usize) -> Vec<f64> {
    let fine_side = 2 * side - 1;
    let mut fine = vec![0.0; fine_side * fine_side];
    for j in 0..side {
        for i in 0..side {
            fine[2 * j * fine_side + 2 * i] = coarse[j * side + i];
        }
    }
    // edge midpoints on coarse rows
    for j in (0..fine_side).step_by(2) {
        for i in (1..fine_side).step_by(2) {
            let row = j * fine_side;
            fine[row + i] = 0.5 * (fine[row + i - 1] + fine[row + i + 1]);
        }
    }
    // odd rows: vertical midpoints and cell centres
    for j in (1..fine_side).step_by(2) {
        for i in 0..fine_side {
            let below = fine[(j - 1) * fine_side + i];
            let above = fine[(j + 1) * fine_side + i];
            fine[j * fine_side + i] = if i % 2 == 0 {
                0.5 * (below + above)
            } else {
                let bl = fine[(j - 1) * fine_side + i - 1];
                let br = fine[(j - 1) * fine_side + i + 1];
                let tl = fine[(j + 1) * fine_side + i - 1];
                let tr = fine[(j + 1) * fine_side + i + 1];
                0.25 * (bl + br + tl + tr)
            };
        }
    }
    fine
}

/// Represents `u` exactly on the finer level `target`.
pub fn interpolate_up(u: &FeFunction, target: usize) -> Result<FeFunction> {
    if target <= u.level() {
        return Err(Error::HierarchyMismatch(format!(
            "target level {target} must exceed source level {}",
            u.level()
        )));
    }
    let mut side = u.nodes_per_side();
    let mut values = u.coeffs().to_vec();
    for _ in u.level()..target {
        values = refine_once(&values, side);
        side = 2 * side - 1;
    }
    Ok(FeFunction::from_raw(u.n0(), target, values))
}

fn check_function_on(m: &MeshHierarchy, u: &FeFunction) -> Result<()> {
    if u.n0() != m.n0() {
        return Err(Error::HierarchyMismatch(format!(
            "function has n0={}, mesh has n0={}",
            u.n0(),
            m.n0()
        )));
    }
    Ok(())
}

/// Nodal values of `u` on the patch nodes at `u`'s level, patch-local
/// row-major.
pub fn restrict_patch(m: &MeshHierarchy, u: &FeFunction, p: Patch) -> Result<Vec<f64>> {
    check_function_on(m, u)?;
    let deep;
    let mesh = if u.level() > m.levels() {
        deep = MeshHierarchy::new(m.n0(), u.level())?;
        &deep
    } else {
        m
    };
    let nodes = mesh.patch_fine_nodes(p, u.level())?;
    Ok(nodes.iter().map(|&k| u.coeffs()[k]).collect())
}

/// Per-node weight `1/n` of the patch nodes (`n` = patches containing the
/// node), zero on the domain boundary. Indexed like
/// [`MeshHierarchy::patch_fine_nodes`].
pub fn prolongation_weights(m: &MeshHierarchy, p: Patch, level: usize) -> Result<Vec<f64>> {
    let nodes = m.patch_fine_nodes(p, level)?;
    nodes
        .iter()
        .map(|&k| {
            if m.is_boundary(level, k) {
                Ok(0.0)
            } else {
                Ok(1.0 / m.node_patch_count(level, k)? as f64)
            }
        })
        .collect()
}

/// Adds `P_P v` into a global level-`level` coefficient vector.
pub fn prolongate_patch_add(m: &MeshHierarchy, p: Patch, level: usize, v: &[f64], global: &mut [f64]) -> Result<()> {
    let expected = m.patch_node_count(level);
    if v.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "patch vector has length {}, expected {expected}",
            v.len()
        )));
    }
    if global.len() != m.node_count(level) {
        return Err(Error::DimensionMismatch(format!(
            "global vector has length {}, expected {}",
            global.len(),
            m.node_count(level)
        )));
    }
    let nodes = m.patch_fine_nodes(p, level)?;
    let weights = prolongation_weights(m, p, level)?;
    for ((&k, &w), &val) in nodes.iter().zip(&weights).zip(v) {
        if w != 0.0 {
            global[k] += w * val;
        }
    }
    Ok(())
}

/// `P_P v` as a global coefficient vector: `v / n` on the patch nodes, zero
/// elsewhere and on the domain boundary.
pub fn prolongate_patch(m: &MeshHierarchy, p: Patch, level: usize, v: &[f64]) -> Result<Vec<f64>> {
    let mut global = vec![0.0; m.node_count(level)];
    prolongate_patch_add(m, p, level, v, &mut global)?;
    Ok(global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::norm_l2;
    use crate::rng::SplitMix64;

    fn random_zero_boundary(m: &MeshHierarchy, l: usize, rng: &mut SplitMix64) -> FeFunction {
        let coeffs = (0..m.node_count(l))
            .map(|k| {
                if m.is_boundary(l, k) {
                    0.0
                } else {
                    rng.uniform(-1.0, 1.0)
                }
            })
            .collect();
        FeFunction::from_coeffs(m.n0(), l, coeffs).unwrap()
    }

    #[test]
    fn interpolation_of_single_cell_center() {
        // Dirichlet-free grid values to exercise the averaging rules.
        let fine = refine_once(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(fine[4], 2.5);
        assert_eq!(fine[1], 1.5);
        assert_eq!(fine[3], 2.0);
    }

    #[test]
    fn interpolation_keeps_constant_interior() {
        let m = MeshHierarchy::new(3, 2).unwrap();
        let coeffs = (0..m.node_count(0))
            .map(|k| if m.is_boundary(0, k) { 0.0 } else { 1.5 })
            .collect();
        let u = FeFunction::from_coeffs(3, 0, coeffs).unwrap();
        let up = interpolate_up(&u, 2).unwrap();
        // fine nodes inside the coarse interior block [1/3, 2/3]^2
        for k in 0..m.node_count(2) {
            let (i, j) = m.node_ij(2, k);
            if (4..=8).contains(&i) && (4..=8).contains(&j) {
                assert_eq!(up.coeffs()[k], 1.5);
            }
        }
    }

    #[test]
    fn interpolation_preserves_l2_norm() {
        let m = MeshHierarchy::new(2, 3).unwrap();
        let mut rng = SplitMix64::new(1);
        let u = random_zero_boundary(&m, 1, &mut rng);
        let up = interpolate_up(&u, 3).unwrap();
        assert!((norm_l2(&u) - norm_l2(&up)).abs() < 1e-14);
        assert!(interpolate_up(&u, 1).is_err());
    }

    #[test]
    fn restriction_gathers_shared_values() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        let mut rng = SplitMix64::new(2);
        let u = random_zero_boundary(&m, 1, &mut rng);
        let a = restrict_patch(&m, &u, Patch::new(0, 0)).unwrap();
        let b = restrict_patch(&m, &u, Patch::new(1, 0)).unwrap();
        // right column of (0,0) equals left column of (1,0)
        for r in 0..3 {
            assert_eq!(a[r * 3 + 2], b[r * 3]);
        }
        let zero = FeFunction::zeros(&m, 1);
        assert!(restrict_patch(&m, &zero, Patch::new(1, 1))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn prolongation_weights_by_position() {
        let m = MeshHierarchy::new(2, 2).unwrap();
        let p = Patch::new(0, 0);
        let nodes = m.patch_fine_nodes(p, 2).unwrap();
        let w = prolongation_weights(&m, p, 2).unwrap();
        let at = |i: usize, j: usize| w[nodes.iter().position(|&k| k == m.node_index(2, i, j)).unwrap()];
        assert_eq!(at(1, 1), 1.0);
        assert_eq!(at(4, 4), 0.25);
        assert_eq!(at(4, 2), 0.5);
        assert_eq!(at(0, 2), 0.0);
        assert!(prolongate_patch(&m, p, 2, &[0.0; 3]).is_err());
    }

    #[test]
    fn prolongation_support_is_patch() {
        let m = MeshHierarchy::new(3, 1).unwrap();
        let p = Patch::new(1, 2);
        let g = prolongate_patch(&m, p, 1, &[1.0; 9]).unwrap();
        let nodes = m.patch_fine_nodes(p, 1).unwrap();
        for (k, &v) in g.iter().enumerate() {
            if !nodes.contains(&k) {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = SplitMix64::new(3);
        for (n0, l) in [(2, 1), (4, 2), (3, 3)] {
            let m = MeshHierarchy::new(n0, l).unwrap();
            for _ in 0..10 {
                let u = random_zero_boundary(&m, l, &mut rng);
                let mut sum = vec![0.0; m.node_count(l)];
                for p in m.patches() {
                    let v = restrict_patch(&m, &u, p).unwrap();
                    prolongate_patch_add(&m, p, l, &v, &mut sum).unwrap();
                }
                assert_eq!(sum, u.coeffs());
            }
        }
    }

    #[test]
    fn operators_are_linear() {
        let m = MeshHierarchy::new(2, 2).unwrap();
        let mut rng = SplitMix64::new(4);
        let u = random_zero_boundary(&m, 1, &mut rng);
        let w = random_zero_boundary(&m, 1, &mut rng);
        let (a, b) = (0.7, -1.3);
        let comb = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| a * p + b * q).collect() };
        let uw = FeFunction::from_coeffs(2, 1, comb(u.coeffs(), w.coeffs())).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-14);

        let iu = interpolate_up(&u, 2).unwrap();
        let iw = interpolate_up(&w, 2).unwrap();
        assert!(close(
            interpolate_up(&uw, 2).unwrap().coeffs(),
            &comb(iu.coeffs(), iw.coeffs())
        ));

        let p = Patch::new(1, 0);
        let ru = restrict_patch(&m, &u, p).unwrap();
        let rw = restrict_patch(&m, &w, p).unwrap();
        assert!(close(&restrict_patch(&m, &uw, p).unwrap(), &comb(&ru, &rw)));

        let pu = prolongate_patch(&m, p, 1, &ru).unwrap();
        let pw = prolongate_patch(&m, p, 1, &rw).unwrap();
        let pc = prolongate_patch(&m, p, 1, &comb(&ru, &rw)).unwrap();
        assert!(close(&pc, &comb(&pu, &pw)));
    }
}
