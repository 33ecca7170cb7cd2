//! The parametrised source family and datasets of coarse/fine solution pairs.
//!
//! A source is
//!
//! ```text
//! f(x, y) = Σ_{i=1..4} α_i sin(β_i π (x + C_i))
//! α = (1/2, 1/2, 1/10, 1/10), β = (2, 2, 4, 4),
//! C_1, C_2 ∈ [0, 1], C_3, C_4 ∈ [0, 1/2].
//! ```
//!
//! [`Family::Verbatim`] evaluates the formula as written (x only).
//! [`Family::Xy`] substitutes y for x in the second and fourth terms.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::fem::{fe_solve, FeFunction};
use crate::io::{self, FORMAT_VERSION};
use crate::mesh::MeshHierarchy;
use crate::rng::SplitMix64;
use crate::{Error, Result};

pub const ALPHA: [f64; 4] = [0.5, 0.5, 0.1, 0.1];
pub const BETA: [f64; 4] = [2.0, 2.0, 4.0, 4.0];
/// Upper end of the sampling interval of each phase `C_i` (lower end is 0).
pub const C_MAX: [f64; 4] = [1.0, 1.0, 0.5, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Verbatim,
    Xy,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(Family::Verbatim),
            "xy" => Ok(Family::Xy),
            other => Err(Error::Config(format!("unknown family '{other}' (verbatim|xy)"))),
        }
    }
}

/// Phases `C_1..C_4` of one family member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams(pub [f64; 4]);

impl SourceParams {
    pub fn new(c: [f64; 4]) -> Result<Self> {
        let p = Self(c);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (&c, &hi)) in self.0.iter().zip(&C_MAX).enumerate() {
            if !(0.0..=hi).contains(&c) {
                return Err(Error::Config(format!("C{} = {c} outside [0, {hi}]", i + 1)));
            }
        }
        Ok(())
    }

    /// `C1, C2 ~ U[0,1)`, `C3, C4 ~ U[0,1/2)`, drawn in that order.
    pub fn sample(rng: &mut SplitMix64) -> Self {
        Self(C_MAX.map(|hi| rng.uniform(0.0, hi)))
    }
}

pub fn eval_source(p: &SourceParams, family: Family, x: f64, y: f64) -> f64 {
    (0..4)
        .map(|i| {
            let arg = match family {
                Family::Xy if i % 2 == 1 => y,
                _ => x,
            };
            ALPHA[i] * (BETA[i] * PI * (arg + p.0[i])).sin()
        })
        .sum()
}

/// A family member bound to its evaluation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub params: SourceParams,
    pub family: Family,
}

impl Source {
    pub fn new(params: SourceParams, family: Family) -> Self {
        Self { params, family }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        eval_source(&self.params, self.family, x, y)
    }
}

/// One training/test example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub params: SourceParams,
    /// Galerkin solution on level 0.
    pub coarse: FeFunction,
    /// Galerkin solution on the finest level.
    pub fine: FeFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n0: usize,
    pub levels: usize,
    pub seed: u64,
    pub family: Family,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn mesh(&self) -> Result<MeshHierarchy> {
        MeshHierarchy::new(self.n0, self.levels)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source(&self, i: usize) -> Source {
        Source::new(self.samples[i].params, self.family)
    }

    /// Checks every documented invariant, naming the offending sample.
    pub fn validate(&self) -> Result<()> {
        self.mesh()?;
        for (i, s) in self.samples.iter().enumerate() {
            let wrap = |e: Error| Error::Invariant(format!("sample {i}: {e}"));
            s.params.validate().map_err(wrap)?;
            for (name, f, level) in [("uH", &s.coarse, 0), ("uh", &s.fine, self.levels)] {
                if f.n0() != self.n0 || f.level() != level {
                    return Err(wrap(Error::HierarchyMismatch(format!("{name} is on the wrong level"))));
                }
                FeFunction::from_coeffs(self.n0, level, f.coeffs().to_vec())
                    .map_err(|e| Error::Invariant(format!("sample {i}: {name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &DatasetFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DatasetFile = io::read_json(path)?;
        file.into_dataset()
    }
}

/// `count` samples on `m`, with sources drawn from one SplitMix64 stream
/// seeded by `seed`. Solves run per sample under `exec`; output order is by
/// sample index.
pub fn generate_dataset(m: &MeshHierarchy, count: usize, seed: u64, family: Family, exec: Exec) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Config("dataset needs at least one sample".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let params: Vec<SourceParams> = (0..count).map(|_| SourceParams::sample(&mut rng)).collect();
    let samples = exec.map_indexed(count, |i| -> Result<Sample> {
        let src = Source::new(params[i], family);
        let f = |x, y| src.eval(x, y);
        let wrap = |e| Error::Sample {
            index: i,
            source: Box::new(e),
        };
        Ok(Sample {
            params: params[i],
            coarse: fe_solve(m, 0, f).map_err(wrap)?,
            fine: fe_solve(m, m.levels(), f).map_err(wrap)?,
        })
    });
    Ok(Dataset {
        n0: m.n0(),
        levels: m.levels(),
        seed,
        family,
        samples: samples.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    #[serde(rename = "C")]
    c: [f64; 4],
    #[serde(rename = "uH")]
    coarse: Vec<f64>,
    #[serde(rename = "uh")]
    fine: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format_version: u64,
    n0: usize,
    levels: usize,
    seed: u64,
    #[serde(default)]
    family: Family,
    samples: Vec<SampleFile>,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n0: d.n0,
            levels: d.levels,
            seed: d.seed,
            family: d.family,
            samples: d
                .samples
                .iter()
                .map(|s| SampleFile {
                    c: s.params.0,
                    coarse: s.coarse.coeffs().to_vec(),
                    fine: s.fine.coeffs().to_vec(),
                })
                .collect(),
        }
    }
}

impl DatasetFile {
    fn into_dataset(self) -> Result<Dataset> {
        io::check_version(self.format_version)?;
        MeshHierarchy::new(self.n0, self.levels)?;
        let samples = self
            .samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let wrap = |name: &str, e: Error| Error::Invariant(format!("sample {i}: {name}: {e}"));
                Ok(Sample {
                    params: SourceParams::new(s.c).map_err(|e| wrap("C", e))?,
                    coarse: FeFunction::from_coeffs(self.n0, 0, s.coarse).map_err(|e| wrap("uH", e))?,
                    fine: FeFunction::from_coeffs(self.n0, self.levels, s.fine).map_err(|e| wrap("uh", e))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = Dataset {
            n0: self.n0,
            levels: self.levels,
            seed: self.seed,
            family: self.family,
            samples,
        };
        d.validate()?;
        Ok(d)
    }
}
