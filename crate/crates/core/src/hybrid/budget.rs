//! Triangle-inequality error budget of a hybrid solution against the
//! closest training sample.
//!
//! For a source `f` and training sample `f_i`:
//!
//! ```text
//! ||u - u_N|| <= ||u - u_h|| + ||u_h - u_h^i|| + ||u_h^i - u_N^i|| + ||u_N^i - u_N||
//! ```
//!
//! `u` is replaced by the Galerkin solution one level finer than `u_h`.
//! All norms are L2.

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::data::{Dataset, Source, SourceParams};
use crate::exec::Exec;
use crate::fem::{error_vs_reference, fe_solve, norm_l2, seminorm_h1, FeFunction};
use crate::mesh::MeshHierarchy;
use crate::transfer::interpolate_up;
use crate::Result;

/// Additive slack on the inequality check, covering rounding in the norms.
pub const BUDGET_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// Index of the minimising training sample (lowest index on ties).
    pub selected_index: usize,
    #[serde(rename = "selected_C")]
    pub selected_params: [f64; 4],
    /// `||u_ref - u_h||`
    pub fe_error: f64,
    /// `||u_h - u_h^i||`
    pub data_error: f64,
    /// `||u_h^i - u_N^i||`
    pub network_error: f64,
    /// `||u_N^i - u_N||`
    pub generalization_error: f64,
    pub sum: f64,
    /// `||u_ref - u_N||`
    pub actual: f64,
    /// `||∇(N(f) - N(f_i))||`, the H1 seminorm of the difference of the
    /// prolongated network corrections.
    pub correction_gradient_difference: f64,
    pub holds: bool,
}

/// Training-set quantities shared by all budget queries.
pub struct ErrorBudget<'a> {
    model: &'a Model,
    dataset: &'a Dataset,
    reference_mesh: MeshHierarchy,
    /// `u_N^i` and `N(f_i)` (the correction alone) per training sample.
    hybrids: Vec<(FeFunction, FeFunction)>,
    /// `||u_h^i - u_N^i||`
    network_errors: Vec<f64>,
    exec: Exec,
}

impl<'a> ErrorBudget<'a> {
    pub fn new(model: &'a Model, dataset: &'a Dataset, exec: Exec) -> Result<Self> {
        model.check_dataset(dataset)?;
        if dataset.is_empty() {
            return Err(crate::Error::Config("error budget needs a nonempty dataset".into()));
        }
        let layout = model.layout()?;
        let l = dataset.levels;
        let hybrids = exec
            .map_indexed(dataset.len(), |i| -> Result<(FeFunction, FeFunction)> {
                let s = &dataset.samples[i];
                let src = dataset.source(i);
                let u_n = layout.hybrid_solution(model, &s.coarse, &|x, y| src.eval(x, y))?;
                let correction = u_n.sub(&interpolate_up(&s.coarse, l)?)?;
                Ok((u_n, correction))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let network_errors = hybrids
            .iter()
            .zip(&dataset.samples)
            .map(|((u_n, _), s)| Ok(norm_l2(&s.fine.sub(u_n)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            dataset,
            reference_mesh: MeshHierarchy::new(dataset.n0, l + 1)?,
            hybrids,
            network_errors,
            exec,
        })
    }

    pub fn report(&self, params: SourceParams) -> Result<BudgetReport> {
        let d = self.dataset;
        let l = d.levels;
        let src = Source::new(params, d.family);
        let f = |x, y| src.eval(x, y);
        let layout = self.model.layout()?;
        let reference = fe_solve(&self.reference_mesh, l + 1, f)?;
        let u_h = fe_solve(&self.reference_mesh, l, f)?;
        let u_coarse = fe_solve(&self.reference_mesh, 0, f)?;
        let u_n = layout.hybrid_solution(self.model, &u_coarse, &f)?;
        let correction = u_n.sub(&interpolate_up(&u_coarse, l)?)?;
        let fe_error = error_vs_reference(&u_h, &reference)?;
        let actual = error_vs_reference(&u_n, &reference)?;

        let terms = self
            .exec
            .map_indexed(d.len(), |i| -> Result<[f64; 3]> {
                Ok([
                    norm_l2(&u_h.sub(&d.samples[i].fine)?),
                    self.network_errors[i],
                    norm_l2(&self.hybrids[i].0.sub(&u_n)?),
                ])
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        let mut best_sum = f64::INFINITY;
        for (i, t) in terms.iter().enumerate() {
            let s = fe_error + t[0] + t[1] + t[2];
            if s < best_sum {
                best = i;
                best_sum = s;
            }
        }
        let [data_error, network_error, generalization_error] = terms[best];
        Ok(BudgetReport {
            selected_index: best,
            selected_params: d.samples[best].params.0,
            fe_error,
            data_error,
            network_error,
            generalization_error,
            sum: best_sum,
            actual,
            correction_gradient_difference: seminorm_h1(&correction.sub(&self.hybrids[best].1)?),
            holds: actual <= best_sum + BUDGET_SLACK,
        })
    }
}

/// One-shot [`ErrorBudget`] query.
pub fn error_budget(model: &Model, dataset: &Dataset, params: SourceParams, exec: Exec) -> Result<BudgetReport> {
    ErrorBudget::new(model, dataset, exec)?.report(params)
}
