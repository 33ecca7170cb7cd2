//! Patch-local network corrections of coarse solutions.
//!
//! On every patch the network sees the coarse solution (the four patch
//! corner values by default) followed by the source sampled at the patch's
//! fine nodes, and predicts the fine-node fluctuation `u_h - u_H` there.
//! The hybrid solution is
//!
//! ```text
//! U_N = U_Hh + Σ_P P_P N(y_P)
//! ```
//!
//! where `U_Hh` is the coarse solution interpolated to the fine level and
//! `P_P` is the 1/n-weighted patch prolongation.

mod budget;
mod eval;
mod model;
mod stability;
mod train;

pub use budget::{error_budget, BudgetReport};
pub use budget::{ErrorBudget, BUDGET_SLACK};
pub use eval::{eval_csv, evaluate, write_eval_csv, EvalRow, Split};
pub use model::{Model, Stamp, Standardizer};
pub use stability::{pair_ratio, stability_check, StabilityReport, STABILITY_REL_SLACK};
pub use train::{loss, train, write_loss_csv, LossRecord, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::fem::FeFunction;
use crate::mesh::{MeshHierarchy, Patch};
use crate::transfer::{interpolate_up, prolongate_patch_add, restrict_patch};
use crate::{Error, Result};

/// What part of the coarse solution enters a patch's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseInput {
    /// The four corner values of the patch (`R_P u_H`).
    #[default]
    Patch,
    /// The whole coarse coefficient vector.
    Global,
}

impl std::str::FromStr for CoarseInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch" => Ok(CoarseInput::Patch),
            "global" => Ok(CoarseInput::Global),
            other => Err(Error::Config(format!("unknown coarse input '{other}' (patch|global)"))),
        }
    }
}

/// Input/output layout of the patch network for one mesh configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    mesh: MeshHierarchy,
    coarse_input: CoarseInput,
}

impl PatchLayout {
    /// Targets live on the finest level of `mesh`.
    pub fn new(mesh: MeshHierarchy, coarse_input: CoarseInput) -> Self {
        Self { mesh, coarse_input }
    }

    pub fn mesh(&self) -> &MeshHierarchy {
        &self.mesh
    }

    pub fn level(&self) -> usize {
        self.mesh.levels()
    }

    pub fn coarse_input(&self) -> CoarseInput {
        self.coarse_input
    }

    pub fn coarse_len(&self) -> usize {
        match self.coarse_input {
            CoarseInput::Patch => 4,
            CoarseInput::Global => self.mesh.node_count(0),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.coarse_len() + self.output_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mesh.patch_node_count(self.level())
    }

    fn check_coarse(&self, coarse: &FeFunction) -> Result<()> {
        if coarse.n0() != self.mesh.n0() || coarse.level() != 0 {
            return Err(Error::HierarchyMismatch(format!(
                "coarse solution on (n0={}, level={}), expected (n0={}, level=0)",
                coarse.n0(),
                coarse.level(),
                self.mesh.n0()
            )));
        }
        Ok(())
    }

    /// `y = (coarse part, f at the patch's fine nodes)`.
    pub fn patch_input(&self, coarse: &FeFunction, f: &dyn Fn(f64, f64) -> f64, p: Patch) -> Result<Vec<f64>> {
        self.check_coarse(coarse)?;
        let l = self.level();
        let nodes = self.mesh.patch_fine_nodes(p, l)?;
        let mut y = Vec::with_capacity(self.input_dim());
        match self.coarse_input {
            CoarseInput::Patch => y.extend(restrict_patch(&self.mesh, coarse, p)?),
            CoarseInput::Global => y.extend_from_slice(coarse.coeffs()),
        }
        for k in nodes {
            let (i, j) = self.mesh.node_ij(l, k);
            let h = self.mesh.h(l);
            y.push(f(i as f64 * h, j as f64 * h));
        }
        Ok(y)
    }

    /// `R_P(u_h - U_Hh)` for every patch, in [`MeshHierarchy::patches`] order.
    pub fn patch_targets(&self, fine: &FeFunction, coarse: &FeFunction) -> Result<Vec<Vec<f64>>> {
        self.check_coarse(coarse)?;
        let l = self.level();
        if fine.n0() != self.mesh.n0() || fine.level() != l {
            return Err(Error::HierarchyMismatch(format!(
                "fine solution on (n0={}, level={}), expected level {l}",
                fine.n0(),
                fine.level()
            )));
        }
        let fluctuation = fine.sub(&interpolate_up(coarse, l)?)?;
        self.mesh
            .patches()
            .map(|p| restrict_patch(&self.mesh, &fluctuation, p))
            .collect()
    }

    pub fn patch_target(&self, fine: &FeFunction, coarse: &FeFunction, p: Patch) -> Result<Vec<f64>> {
        let idx = self.mesh.patch_index(p);
        Ok(self.patch_targets(fine, coarse)?.swap_remove(idx))
    }

    fn check_predictor<P: PatchPredictor + ?Sized>(&self, predictor: &P) -> Result<()> {
        if let Some((i, o)) = predictor.dims() {
            if i != self.input_dim() || o != self.output_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "predictor maps {i} -> {o}, mesh configuration needs {} -> {}",
                    self.input_dim(),
                    self.output_dim()
                )));
            }
        }
        Ok(())
    }

    /// `Σ_P P_P N(y_P)` as a fine-level coefficient vector.
    pub fn correction<P: PatchPredictor + ?Sized>(
        &self,
        predictor: &P,
        coarse: &FeFunction,
        f: &dyn Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        self.check_predictor(predictor)?;
        let l = self.level();
        let mut w = vec![0.0; self.mesh.node_count(l)];
        for p in self.mesh.patches() {
            let y = self.patch_input(coarse, f, p)?;
            let out = predictor.predict(self.mesh.patch_index(p), &y);
            prolongate_patch_add(&self.mesh, p, l, &out, &mut w)?;
        }
        Ok(w)
    }

    /// `U_N = U_Hh + Σ_P P_P N(y_P)`; boundary coefficients are exactly 0.
    pub fn hybrid_solution<P: PatchPredictor + ?Sized>(
        &self,
        predictor: &P,
        coarse: &FeFunction,
        f: &dyn Fn(f64, f64) -> f64,
    ) -> Result<FeFunction> {
        let w = self.correction(predictor, coarse, f)?;
        let base = interpolate_up(coarse, self.level())?;
        let coeffs = base.coeffs().iter().zip(&w).map(|(a, b)| a + b).collect();
        FeFunction::from_coeffs(self.mesh.n0(), self.level(), coeffs)
    }
}

/// Anything that maps a patch input vector to patch-node corrections.
pub trait PatchPredictor: Sync {
    /// `patch` is the index in [`MeshHierarchy::patches`] order.
    fn predict(&self, patch: usize, input: &[f64]) -> Vec<f64>;

    /// `(input, output)` sizes if fixed.
    fn dims(&self) -> Option<(usize, usize)> {
        None
    }
}

impl PatchPredictor for crate::nn::Mlp {
    fn predict(&self, _patch: usize, input: &[f64]) -> Vec<f64> {
        self.forward(input).expect("input length checked by layout")
    }

    fn dims(&self) -> Option<(usize, usize)> {
        Some((self.input_dim(), self.output_dim()))
    }
}
