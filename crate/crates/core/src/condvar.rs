//! Residual-based conditional variance.
//!
//! Squared residuals `r̂_i² = (y_i − m̂(x_i))²` from the in-sample mean fit are
//! smoothed on `x` by a second local polynomial fit; its intercept is
//! `σ̂²(x)`. Fitted values below zero are clamped to zero when requested, and
//! the unclamped values are kept alongside.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthPolicy};
use crate::error::{Result, SensiError};
use crate::kernel::Kernel;
use crate::locfit::{LocalFitConfig, LocalPolynomial, RegressionSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFitConfig {
    /// Polynomial order `q` (0 to 2).
    pub order: usize,
    pub kernel: Kernel,
    pub bandwidth: BandwidthPolicy,
    pub clamp_negative: bool,
    pub ridge_epsilon: f64,
}

impl Default for VarianceFitConfig {
    fn default() -> Self {
        Self {
            order: 1,
            kernel: Kernel::Gaussian,
            bandwidth: BandwidthPolicy::default(),
            clamp_negative: true,
            ridge_epsilon: 1e-8,
        }
    }
}

impl VarianceFitConfig {
    pub fn fixed(order: usize, kernel: Kernel, h: f64) -> Self {
        Self {
            order,
            kernel,
            bandwidth: BandwidthPolicy::fixed(h),
            ..Self::default()
        }
    }

    /// The equivalent mean-smoother configuration.
    pub fn as_local_fit(&self) -> LocalFitConfig {
        LocalFitConfig {
            order: self.order,
            kernel: self.kernel,
            bandwidth: self.bandwidth.clone(),
            ridge_epsilon: self.ridge_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > 2 {
            return Err(SensiError::invalid(format!(
                "variance polynomial order {} not supported (0..=2)",
                self.order
            )));
        }
        self.as_local_fit().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFitResult {
    pub sigma2: Vec<f64>,
    /// Fitted values before clamping.
    pub raw: Vec<f64>,
    pub clamped_count: usize,
    pub h2_used: f64,
}

/// `(y_i − m̂_i)²`.
pub fn squared_residuals(sample: &RegressionSample, mhat_at_x: &[f64]) -> Result<Vec<f64>> {
    if mhat_at_x.len() != sample.len() {
        return Err(SensiError::LengthMismatch {
            expected: sample.len(),
            got: mhat_at_x.len(),
        });
    }
    Ok(sample
        .y()
        .iter()
        .zip(mhat_at_x)
        .map(|(y, m)| (y - m).powi(2))
        .collect())
}

fn residual_sample(sample_x: &[f64], r2: &[f64]) -> Result<RegressionSample> {
    if let Some(i) = r2.iter().position(|v| !(*v >= 0.0)) {
        return Err(SensiError::invalid(format!(
            "squared residual {i} is negative or NaN: {}",
            r2[i]
        )));
    }
    RegressionSample::new(sample_x.to_vec(), r2.to_vec())
}

/// Local polynomial regression of `r2` on `sample_x`, evaluated at `xs`, with
/// the bandwidth picked by `config.bandwidth`.
pub fn fit_variance(
    sample_x: &[f64],
    r2: &[f64],
    config: &VarianceFitConfig,
    xs: &[f64],
) -> Result<VarianceFitResult> {
    config.validate()?;
    let sample = residual_sample(sample_x, r2)?;
    let h = bandwidth::resolve(
        &config.bandwidth,
        &sample,
        config.order,
        config.kernel,
        config.ridge_epsilon,
    )?;
    fit_variance_sample(&sample, config, xs, h)
}

/// [`fit_variance`] at a given bandwidth.
pub fn fit_variance_with_bandwidth(
    sample_x: &[f64],
    r2: &[f64],
    config: &VarianceFitConfig,
    xs: &[f64],
    h: f64,
) -> Result<VarianceFitResult> {
    config.validate()?;
    let sample = residual_sample(sample_x, r2)?;
    fit_variance_sample(&sample, config, xs, h)
}

pub(crate) fn fit_variance_sample(
    sample: &RegressionSample,
    config: &VarianceFitConfig,
    xs: &[f64],
    h: f64,
) -> Result<VarianceFitResult> {
    let engine = LocalPolynomial::new(sample, config.order, config.kernel, config.ridge_epsilon);
    let raw = engine.predict(xs, h)?;
    Ok(clamp(raw, config.clamp_negative, h))
}

pub(crate) fn clamp(raw: Vec<f64>, clamp_negative: bool, h: f64) -> VarianceFitResult {
    let mut clamped_count = 0;
    let sigma2 = raw
        .iter()
        .map(|&v| {
            if clamp_negative && v < 0.0 {
                clamped_count += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    VarianceFitResult {
        sigma2,
        raw,
        clamped_count,
        h2_used: h,
    }
}
