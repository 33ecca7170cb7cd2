use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CoarseInput, PatchLayout, PatchPredictor};
use crate::data::Dataset;
use crate::io::{self, FORMAT_VERSION};
use crate::mesh::MeshHierarchy;
use crate::nn::Mlp;
use crate::{Error, Result};

/// Mesh configuration a model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub n0: usize,
    pub level: usize,
    #[serde(default)]
    pub coarse_input: CoarseInput,
}

impl Stamp {
    pub fn layout(&self) -> Result<PatchLayout> {
        Ok(PatchLayout::new(
            MeshHierarchy::new(self.n0, self.level)?,
            self.coarse_input,
        ))
    }
}

/// Affine rescaling around the network: the network sees
/// `(y - input_mean) / input_scale` and its output is multiplied by
/// `output_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Standardizer {
    /// Per-feature mean and standard deviation of the inputs and per-output
    /// root mean square of the targets. Constant features get scale 1.
    pub fn fit(inputs: &[f64], input_dim: usize, targets: &[f64], output_dim: usize) -> Self {
        let n = (inputs.len() / input_dim).max(1) as f64;
        let mut mean = vec![0.0; input_dim];
        for row in inputs.chunks_exact(input_dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; input_dim];
        for row in inputs.chunks_exact(input_dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let fix = |s: f64| if s > 1e-24 { s } else { 1.0 };
        let input_scale = var.iter().map(|s| fix((s / n).sqrt())).collect();
        let mut sq = vec![0.0; output_dim];
        for row in targets.chunks_exact(output_dim) {
            sq.iter_mut().zip(row).for_each(|(s, v)| *s += v * v);
        }
        let output_scale = sq.iter().map(|s| fix((s / n).sqrt())).collect();
        Self {
            input_mean: mean,
            input_scale,
            output_scale,
        }
    }

    pub fn apply_input(&self, y: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(y).zip(&self.input_mean).zip(&self.input_scale) {
            *o = (v - m) / s;
        }
    }
}

/// A trained patch network together with its mesh stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Mlp,
    pub stamp: Stamp,
    pub standardizer: Option<Standardizer>,
}

impl Model {
    pub fn new(net: Mlp, stamp: Stamp) -> Result<Self> {
        let m = Self {
            net,
            stamp,
            standardizer: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// An all-zero network of the given hidden widths; its hybrid solution
    /// is the interpolated coarse solution.
    pub fn zeros(stamp: Stamp, hidden: &[usize]) -> Result<Self> {
        let lay = stamp.layout()?;
        let mut dims = vec![lay.input_dim()];
        dims.extend_from_slice(hidden);
        dims.push(lay.output_dim());
        Self::new(Mlp::zeros(&dims)?, stamp)
    }

    pub fn layout(&self) -> Result<PatchLayout> {
        self.stamp.layout()
    }

    fn validate(&self) -> Result<()> {
        let lay = self.layout()?;
        if self.net.input_dim() != lay.input_dim() || self.net.output_dim() != lay.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "network maps {} -> {} but (n0={}, level={}) patches need {} -> {}",
                self.net.input_dim(),
                self.net.output_dim(),
                self.stamp.n0,
                self.stamp.level,
                lay.input_dim(),
                lay.output_dim()
            )));
        }
        if let Some(s) = &self.standardizer {
            let ok = s.input_mean.len() == lay.input_dim()
                && s.input_scale.len() == lay.input_dim()
                && s.output_scale.len() == lay.output_dim()
                && s.input_scale
                    .iter()
                    .chain(&s.output_scale)
                    .all(|v| v.is_finite() && *v > 0.0);
            if !ok {
                return Err(Error::Invariant("standardizer does not match the network".into()));
            }
        }
        Ok(())
    }

    /// Refuses datasets built on a different mesh configuration.
    pub fn check_dataset(&self, d: &Dataset) -> Result<()> {
        if d.n0 != self.stamp.n0 || d.levels != self.stamp.level {
            return Err(Error::HierarchyMismatch(format!(
                "model is stamped (n0={}, level={}), dataset has (n0={}, levels={})",
                self.stamp.n0, self.stamp.level, d.n0, d.levels
            )));
        }
        Ok(())
    }

    /// The input actually fed to the network for patch input `y`.
    pub fn net_input(&self, y: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => {
                let mut out = vec![0.0; y.len()];
                s.apply_input(y, &mut out);
                out
            }
            None => y.to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &ModelFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = io::read_json(path)?;
        file.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        io::to_json_string(&ModelFile::from(self))
    }
}

impl PatchPredictor for Model {
    fn predict(&self, _patch: usize, input: &[f64]) -> Vec<f64> {
        let mut out = self
            .net
            .forward(&self.net_input(input))
            .expect("input length checked by layout");
        if let Some(s) = &self.standardizer {
            out.iter_mut().zip(&s.output_scale).for_each(|(o, c)| *o *= c);
        }
        out
    }

    fn dims(&self) -> Option<(usize, usize)> {
        Some((self.net.input_dim(), self.net.output_dim()))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    dims: Vec<usize>,
    activation: String,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    stamp: Stamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standardizer: Option<Standardizer>,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: m.net.dims().to_vec(),
            activation: "tanh".into(),
            weights: m.net.weights().to_vec(),
            biases: m.net.biases().to_vec(),
            stamp: m.stamp,
            standardizer: m.standardizer.clone(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<Model> {
        io::check_version(self.format_version)?;
        if self.activation != "tanh" {
            return Err(Error::Invariant(format!(
                "unsupported activation '{}' (only tanh)",
                self.activation
            )));
        }
        let net = Mlp::from_parts(self.dims, self.weights, self.biases)?;
        let m = Model {
            net,
            stamp: self.stamp,
            standardizer: self.standardizer,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp {
            n0: 2,
            level: 1,
            coarse_input: CoarseInput::Patch,
        }
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = Model::new(Mlp::init(&[13, 6, 9], 3).unwrap(), stamp()).unwrap();
        m.standardizer = Some(Standardizer {
            input_mean: vec![0.1; 13],
            input_scale: vec![2.0; 13],
            output_scale: vec![1e-3; 9],
        });
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, m);
        m.save(&dir.path().join("again.json")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("again.json")).unwrap()
        );
    }

    #[test]
    fn rejects_wrong_shapes_and_versions() {
        assert!(Model::new(Mlp::zeros(&[12, 9]).unwrap(), stamp()).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = Model::zeros(stamp(), &[4]).unwrap();
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["activation"] = "relu".into();
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(Model::load(&path).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["weights"][0].as_array_mut().unwrap().pop();
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(Model::load(&path), Err(Error::DimensionMismatch(_))));
        std::fs::write(&path, &text[..20]).unwrap();
        assert!(matches!(Model::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn standardizer_fit() {
        let inputs = [1.0, 5.0, 3.0, 5.0];
        let targets = [3.0, -4.0];
        let s = Standardizer::fit(&inputs, 2, &targets, 1);
        assert_eq!(s.input_mean, vec![2.0, 5.0]);
        assert_eq!(s.input_scale, vec![1.0, 1.0]);
        assert!((s.output_scale[0] - 12.5f64.sqrt()).abs() < 1e-15);
    }
}
