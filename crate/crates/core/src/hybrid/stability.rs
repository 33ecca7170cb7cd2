//! Empirical check of the network Lipschitz bound on family inputs.
//!
//! For tanh networks `||N(y) - N(y')||_2 <= c_W ||y - y'||_2` with
//! `c_W = Π ||W_j||_2`. The check samples pairs of patch inputs generated
//! from random family members and reports the worst observed ratio.

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::data::{Family, Source, SourceParams};
use crate::fem::{fe_solve, grid_seminorm_h1};
use crate::mesh::MeshHierarchy;
use crate::nn::{lipschitz_constant, Mlp};
use crate::rng::SplitMix64;
use crate::transfer::prolongate_patch;
use crate::Result;

/// Relative slack on `ratio <= c_W`.
pub const STABILITY_REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pairs: usize,
    /// Pairs with `y == y'`, which carry no information.
    pub skipped: usize,
    /// `max ||N(y) - N(y')||_2 / ||y - y'||_2`
    pub max_ratio: f64,
    /// `c_W`
    pub lipschitz_bound: f64,
    /// Largest `||∇ P_P (N(y) - N(y'))|| / ||y - y'||_2`. Reported only;
    /// the constants needed to bound it are not computable.
    pub max_h1_ratio: f64,
    pub mean_h1_ratio: f64,
    pub pass: bool,
}

/// `||N(y) - N(y')||_2 / ||y - y'||_2`, or `None` when `y == y'`.
pub fn pair_ratio(net: &Mlp, y: &[f64], y2: &[f64]) -> Result<Option<f64>> {
    let dy = y.iter().zip(y2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dy == 0.0 {
        return Ok(None);
    }
    let a = net.forward(y)?;
    let b = net.forward(y2)?;
    let dn = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    Ok(Some(dn / dy))
}

/// Samples `n_pairs` pairs `(y, y')` of network inputs for one random patch
/// and two random family members, and compares the observed ratios with
/// `c_W`. Inputs are those the network actually sees (after
/// standardisation, if the model has one).
pub fn stability_check(model: &Model, n_pairs: usize, seed: u64, family: Family) -> Result<StabilityReport> {
    let layout = model.layout()?;
    let mesh = *layout.mesh();
    let coarse_mesh = MeshHierarchy::new(mesh.n0(), 1)?;
    let patches: Vec<_> = mesh.patches().collect();
    let l = layout.level();
    let c_w = lipschitz_constant(&model.net);
    let mut rng = SplitMix64::new(seed);
    let mut max_ratio = 0.0f64;
    let mut max_h1 = 0.0f64;
    let mut sum_h1 = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    let side = mesh.nodes_per_side(l);
    for _ in 0..n_pairs {
        let pa = SourceParams::sample(&mut rng);
        let pb = SourceParams::sample(&mut rng);
        let p = patches[rng.below(patches.len())];
        let input = |params: SourceParams| -> Result<Vec<f64>> {
            let src = Source::new(params, family);
            let f = |x, y| src.eval(x, y);
            let coarse = fe_solve(&coarse_mesh, 0, f)?;
            Ok(model.net_input(&layout.patch_input(&coarse, &f, p)?))
        };
        let (ya, yb) = (input(pa)?, input(pb)?);
        let Some(ratio) = pair_ratio(&model.net, &ya, &yb)? else {
            skipped += 1;
            continue;
        };
        used += 1;
        max_ratio = max_ratio.max(ratio);

        let dy = ya.iter().zip(&yb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let na = model.net.forward(&ya)?;
        let nb = model.net.forward(&yb)?;
        let mut diff: Vec<f64> = na.iter().zip(&nb).map(|(a, b)| a - b).collect();
        if let Some(s) = &model.standardizer {
            diff.iter_mut().zip(&s.output_scale).for_each(|(d, c)| *d *= c);
        }
        let global = prolongate_patch(&mesh, p, l, &diff)?;
        let h1 = grid_seminorm_h1(&global, side) / dy;
        max_h1 = max_h1.max(h1);
        sum_h1 += h1;
    }
    Ok(StabilityReport {
        pairs: used,
        skipped,
        max_ratio,
        lipschitz_bound: c_w,
        max_h1_ratio: max_h1,
        mean_h1_ratio: if used > 0 { sum_h1 / used as f64 } else { 0.0 },
        pass: max_ratio <= c_w * (1.0 + STABILITY_REL_SLACK),
    })
}
