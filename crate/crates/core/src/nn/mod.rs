//! Dense multilayer perceptron with tanh hidden layers and an affine output
//! layer, its reverse-mode gradients, Adam, and spectral-norm Lipschitz
//! bounds.

mod adam;
mod spectral;

pub use adam::AdamState;
pub use spectral::{lipschitz_constant, spectral_norm, DEFAULT_SPECTRAL_TOL};

use crate::rng::SplitMix64;
use crate::{Error, Result};

/// `N(y) = W_n (l_{n-1} ∘ … ∘ l_1)(y) + b_n` with `l_i(x) = tanh(W_i x + b_i)`.
///
/// `weights[i]` is row-major with shape `dims[i+1] × dims[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Parameter-shaped storage, used for gradients and optimiser moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "a perceptron needs at least input and output sizes, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {dims:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; fully determined by `seed`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = SplitMix64::new(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                (0..w[0] * w[1]).map(|_| rng.uniform(-bound, bound)).collect()
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases: dims[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: dims[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn from_parts(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_dims(&dims)?;
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::DimensionMismatch(format!(
                "{layers} layers need {layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for i in 0..layers {
            if weights[i].len() != dims[i] * dims[i + 1] {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} weights have {} entries, expected {}x{}",
                    weights[i].len(),
                    dims[i + 1],
                    dims[i]
                )));
            }
            if biases[i].len() != dims[i + 1] {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} bias has {} entries, expected {}",
                    biases[i].len(),
                    dims[i + 1]
                )));
            }
        }
        if let Some(bad) = weights.iter().chain(&biases).flatten().find(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite parameter {bad}")));
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    fn check_input(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has length {}, network expects {}",
                y.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.dims.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: self.dims.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_input(y)?;
        let mut ws = self.workspace();
        Ok(self.forward_ws(y, &mut ws).to_vec())
    }

    /// Forward pass keeping every layer's activation in `ws` for a
    /// subsequent [`Mlp::backward_ws`]. Panics on a wrong input length.
    pub fn forward_ws<'w>(&self, y: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        assert_eq!(y.len(), self.input_dim());
        ws.acts[0].copy_from_slice(y);
        let last = self.layer_count() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (prev, next) = ws.acts.split_at_mut(i + 1);
            let input = &prev[i];
            let out = &mut next[0];
            let n_in = input.len();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &w[r * n_in..(r + 1) * n_in];
                let z = b[r] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                *o = if i == last { z } else { z.tanh() };
            }
        }
        &ws.acts[self.dims.len() - 1]
    }

    /// Accumulates into `grads` the parameter gradient of `<grad_out, N(y)>`
    /// for the input last passed to [`Mlp::forward_ws`] with this `ws`.
    pub fn backward_ws(&self, ws: &mut Workspace, grad_out: &[f64], grads: &mut Gradients) {
        let layers = self.layer_count();
        ws.deltas[layers].copy_from_slice(grad_out);
        for i in (0..layers).rev() {
            let n_in = self.dims[i];
            let (lo, hi) = ws.deltas.split_at_mut(i + 1);
            let delta = &hi[0];
            let a_prev = &ws.acts[i];
            let gw = &mut grads.weights[i];
            for (r, &d) in delta.iter().enumerate() {
                grads.biases[i][r] += d;
                if d != 0.0 {
                    for (g, &a) in gw[r * n_in..(r + 1) * n_in].iter_mut().zip(a_prev) {
                        *g += d * a;
                    }
                }
            }
            if i > 0 {
                let prev = &mut lo[i];
                prev.iter_mut().for_each(|v| *v = 0.0);
                let w = &self.weights[i];
                for (r, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (p, &a) in prev.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                            *p += d * a;
                        }
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2
                for (p, &a) in prev.iter_mut().zip(a_prev) {
                    *p *= 1.0 - a * a;
                }
            }
        }
    }

    /// Reverse-mode gradient of `<residual, N(y)>`, where `residual` is the
    /// derivative of the caller's loss with respect to the network output.
    pub fn gradients(&self, y: &[f64], residual: &[f64]) -> Result<Gradients> {
        self.check_input(y)?;
        if residual.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "residual has length {}, network output is {}",
                residual.len(),
                self.output_dim()
            )));
        }
        let mut ws = self.workspace();
        let mut grads = Gradients::zeros_like(self);
        self.forward_ws(y, &mut ws);
        self.backward_ws(&mut ws, residual, &mut grads);
        Ok(grads)
    }
}

/// Per-thread scratch buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .for_each(|v| v.fill(0.0));
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.slices_mut().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.slices_mut().for_each(|s| s.iter_mut().for_each(|v| *v *= c));
    }

    /// Weight matrices then bias vectors, layer by layer.
    pub fn slices(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.weights.iter().chain(&self.biases)
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}
