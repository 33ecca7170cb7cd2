use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::data::Dataset;
use crate::exec::Exec;
use crate::fem::{error_vs_reference, fe_solve};
use crate::mesh::MeshHierarchy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Mean L2 errors against a reference solve one level finer than the fine
/// level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub h: f64,
    pub split: Split,
    pub n_train: usize,
    pub err_coarse: f64,
    pub err_fine: f64,
    pub err_hybrid: f64,
}

/// Per-sample errors `(coarse, fine, hybrid)` of one dataset.
pub(crate) fn sample_errors(model: &Model, d: &Dataset, exec: Exec) -> Result<Vec<[f64; 3]>> {
    model.check_dataset(d)?;
    let layout = model.layout()?;
    let reference_mesh = MeshHierarchy::new(d.n0, d.levels + 1)?;
    let errs = exec.map_indexed(d.len(), |i| -> Result<[f64; 3]> {
        let s = &d.samples[i];
        let src = d.source(i);
        let f = |x, y| src.eval(x, y);
        let reference = fe_solve(&reference_mesh, d.levels + 1, f)?;
        let hybrid = layout.hybrid_solution(model, &s.coarse, &f)?;
        Ok([
            error_vs_reference(&s.coarse, &reference)?,
            error_vs_reference(&s.fine, &reference)?,
            error_vs_reference(&hybrid, &reference)?,
        ])
    });
    errs.into_iter().collect()
}

fn row(model: &Model, d: &Dataset, split: Split, n_train: usize, exec: Exec) -> Result<EvalRow> {
    if d.is_empty() {
        return Err(Error::Config(format!("{} set is empty", split.as_str())));
    }
    let errs = sample_errors(model, d, exec)?;
    let n = errs.len() as f64;
    let mean = |c: usize| errs.iter().map(|e| e[c]).sum::<f64>() / n;
    Ok(EvalRow {
        h: d.mesh()?.fine_h(),
        split,
        n_train,
        err_coarse: mean(0),
        err_fine: mean(1),
        err_hybrid: mean(2),
    })
}

/// One row per split: mean errors of `u_H`, `u_h` and `u_N`.
pub fn evaluate(model: &Model, train_set: &Dataset, test_set: &Dataset, exec: Exec) -> Result<Vec<EvalRow>> {
    let n_train = train_set.len();
    Ok(vec![
        row(model, train_set, Split::Train, n_train, exec)?,
        row(model, test_set, Split::Test, n_train, exec)?,
    ])
}

/// `h,split,n_train,err_coarse,err_fine,err_hybrid`.
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("h,split,n_train,err_coarse,err_fine,err_hybrid\n");
    for r in rows {
        writeln!(
            s,
            "{:e},{},{},{:e},{:e},{:e}",
            r.h,
            r.split.as_str(),
            r.n_train,
            r.err_coarse,
            r.err_fine,
            r.err_hybrid
        )
        .unwrap();
    }
    s
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    std::fs::write(path, eval_csv(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, Family};
    use crate::hybrid::{CoarseInput, Stamp};

    #[test]
    fn zero_model_reproduces_coarse_errors() {
        let m = MeshHierarchy::new(2, 1).unwrap();
        let train = generate_dataset(&m, 3, 1, Family::Verbatim, Exec::Sequential).unwrap();
        let test = generate_dataset(&m, 2, 2, Family::Verbatim, Exec::Sequential).unwrap();
        let stamp = Stamp {
            n0: 2,
            level: 1,
            coarse_input: CoarseInput::Patch,
        };
        let model = Model::zeros(stamp, &[4]).unwrap();
        let rows = evaluate(&model, &train, &test, Exec::Parallel).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].split, Split::Train);
        assert_eq!(rows[1].split, Split::Test);
        for r in &rows {
            assert_eq!(r.err_hybrid, r.err_coarse);
            assert!(r.err_fine < r.err_coarse);
            assert_eq!(r.h, 0.25);
            assert_eq!(r.n_train, 3);
        }
        let csv = eval_csv(&rows);
        assert!(csv.starts_with("h,split,n_train,err_coarse,err_fine,err_hybrid\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn stamp_mismatch_is_refused() {
        let m = MeshHierarchy::new(2, 2).unwrap();
        let d = generate_dataset(&m, 1, 1, Family::Verbatim, Exec::Sequential).unwrap();
        let model = Model::zeros(
            Stamp {
                n0: 2,
                level: 1,
                coarse_input: CoarseInput::Patch,
            },
            &[4],
        )
        .unwrap();
        assert!(evaluate(&model, &d, &d, Exec::Sequential).is_err());
    }
}
