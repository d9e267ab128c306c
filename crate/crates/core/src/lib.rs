//! First-order variance-based sensitivity indices for models with
//! (possibly) correlated inputs.
//!
//! For each input `X_i` the index `S_i = Var(E(Y|X_i)) / Var(Y)` is
//! estimated two ways from a sample `(X, Y)` plus an input-only sample
//! `X̃` that needs no model runs:
//!
//! * `Ŝ⁽¹⁾ = T̂₁ / σ̂²_Y`, with `T̂₁` the empirical variance of the fitted
//!   conditional mean `m̂(X̃_i)`;
//! * `Ŝ⁽²⁾ = 1 − T̂₂ / σ̂²_Y`, with `T̂₂` the average fitted conditional
//!   variance `σ̂²(X̃_i)` from a residual-based local polynomial fit.
//!
//! Module map:
//!
//! | module | role |
//! |---|---|
//! | [`kernel`] | kernel densities and moments |
//! | [`locfit`] | local polynomial regression |
//! | [`condvar`] | residual-based conditional variance |
//! | [`bandwidth`] | LOOCV and empirical-bias bandwidth selection |
//! | [`indices`] | `T̂₁`, `T̂₂`, `Ŝ⁽¹⁾`, `Ŝ⁽²⁾`, bootstrap, SSB/SST baseline |
//! | [`sampling`] | seeded Gaussian / uniform / LHS inputs |
//! | [`models`] | analytic test models |
//! | [`theory`] | asymptotic bias constants and Monte-Carlo checks |
//!
//! With the default `parallel` feature, per-point fits, per-input estimates,
//! bootstrap replicates and Monte-Carlo replications run on rayon's pool.
//! All results are bit-identical to the sequential build.

// `!(x > 0.0)` style checks deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod condvar;
pub mod error;
pub mod indices;
pub mod kernel;
pub mod locfit;
pub mod models;
pub mod par;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod theory;

pub use bandwidth::{BandwidthGrid, BandwidthPolicy, GridSpec};
pub use condvar::{VarianceFitConfig, VarianceFitResult};
pub use error::{Result, SensiError};
pub use indices::{EstimationOptions, InputIndex, JointSample, SensitivityReport, TildeSample};
pub use kernel::Kernel;
pub use locfit::{LocalFitConfig, LocalFitResult, LocalPolynomial, RegressionSample};
pub use models::{AnalyticIndices, InputLaw, Marginal, ModelFunction};
pub use sampling::{ConditionalSampler, GaussianSpec};
