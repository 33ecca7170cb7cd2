//! Hybrid finite element / neural network solver for the Poisson problem on
//! the unit square.
//!
//! A coarse Q1 Galerkin solve is enriched with fine-scale fluctuations that a
//! globally trained multilayer perceptron predicts patch by patch, where each
//! patch is one coarse cell. The crate provides:
//!
//! - [`mesh`]: nested uniform quadrilateral hierarchies and patch indexing,
//! - [`fem`]: Q1 assembly, Dirichlet elimination, CG solves and norms,
//! - [`transfer`]: coarse-to-fine interpolation, patch restriction and
//!   1/n-weighted patch prolongation,
//! - [`nn`]: dense tanh perceptron, backpropagation, Adam, spectral norms,
//! - [`data`]: the parametrised source family and dataset generation,
//! - [`hybrid`]: patch inputs/targets, training, hybrid assembly, evaluation,
//!   error budgets and Lipschitz stability reports.
//!
//! Data-parallel loops (per sample, per patch chunk) run on rayon when the
//! `parallel` feature is enabled and [`Exec::Parallel`] is selected; the
//! sequential path produces bit-identical results.

pub mod data;
mod error;
pub mod exec;
pub mod fem;
pub mod hybrid;
pub mod io;
pub mod mesh;
pub mod nn;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
pub use exec::Exec;
pub use fem::FeFunction;
pub use mesh::{MeshHierarchy, Patch};
pub use nn::Mlp;
