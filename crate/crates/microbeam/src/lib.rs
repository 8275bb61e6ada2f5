//! Static equilibrium of one-dimensional generalized-continuum beam models.
//!
//! Three nested kinematic regimes share one quadratic internal energy family:
//! the non-holonomic regime carries independent displacement,
//! micro-distortion and micro-curvature fields, the semi-holonomic regime
//! constrains the micro-curvature to the micro-distortion gradient, and the
//! holonomic regime further constrains the micro-distortion to the
//! displacement gradient. The crate assembles the Euler-Lagrange systems,
//! solves them as banded two-point boundary-value problems, measures
//! dislocation/disclination densities of the solutions, and verifies the
//! penalty limits connecting the regimes (including the classical Timoshenko
//! and Euler-Bernoulli recoveries).

pub mod assembly;
pub mod banded;
pub mod defects;
pub mod energy;
mod error;
pub mod fd;
pub mod model;
pub mod output;
pub mod solver;
pub mod structure;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    reconstruct_3d, validate_config, BeamConfig, BoundarySpec, End, FieldId, FieldState, Grid,
    LoadFn, LoadSet, Regime, ValidationReport,
};

pub(crate) mod parallel {
    /// Map over independent work items, in parallel when the `parallel`
    /// feature is enabled.
    #[cfg(feature = "parallel")]
    pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        F: Fn(T) -> U,
    {
        items.into_iter().map(f).collect()
    }

    /// Always-sequential twin of [`par_map`], kept for benchmarking the
    /// parallel speedup inside one build.
    pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        F: Fn(T) -> U,
    {
        items.into_iter().map(f).collect()
    }
}
