//! Analytic test models with known first-order indices.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SensiError};
use crate::par;
use crate::rng::{self, SensiRng};
use crate::sampling::{ConditionalSampler, GaussianSpec};
pub use crate::sampling::{InputLaw, Marginal};

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A deterministic model `Y = f(X)` together with the law of `X`.
#[derive(Clone)]
pub struct ModelFunction {
    name: String,
    law: InputLaw,
    eval: EvalFn,
}

impl fmt::Debug for ModelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelFunction")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .finish_non_exhaustive()
    }
}

impl ModelFunction {
    pub fn new(
        name: impl Into<String>,
        law: InputLaw,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            law,
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn law(&self) -> &InputLaw {
        &self.law
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Evaluates every row of `x`.
    pub fn eval_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(SensiError::LengthMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        let d = self.dim();
        Ok(par::map_range(x.nrows(), |r| {
            let row: Vec<f64> = (0..d).map(|c| x[(r, c)]).collect();
            self.eval(&row)
        }))
    }
}

/// True first-order indices of a model, plus any named extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticIndices {
    pub s: Vec<f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

/// `2 + σ² + 2ρσ`, the output variance of the additive model.
fn additive_denominator(rho: f64, sigma: f64) -> f64 {
    2.0 + sigma * sigma + 2.0 * rho * sigma
}

/// `Y = X₁ + X₂ + X₃` with `X ~ N(0, Γ)`, where `X₁` is independent of the
/// pair and `Var(X₃) = σ²`, `Cov(X₂, X₃) = ρσ`.
pub fn additive_gaussian(rho: f64, sigma: f64) -> Result<(ModelFunction, AnalyticIndices)> {
    if !(rho.abs() <= 1.0) {
        return Err(SensiError::invalid(format!(
            "correlation {rho} outside [-1, 1]"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SensiError::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let d = additive_denominator(rho, sigma);
    if !(d > 0.0) {
        return Err(SensiError::NonPositiveDenominator(d));
    }
    let spec = GaussianSpec::from_rows(
        &[0.0, 0.0, 0.0],
        &[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, rho * sigma],
            vec![0.0, rho * sigma, sigma * sigma],
        ],
    )?;
    let model = ModelFunction::new(
        format!("additive({rho},{sigma})"),
        InputLaw::Gaussian { spec },
        |x: &[f64]| x[0] + x[1] + x[2],
    );
    let indices = AnalyticIndices {
        s: vec![
            1.0 / d,
            (1.0 + rho * sigma).powi(2) / d,
            (sigma + rho).powi(2) / d,
        ],
        extra: BTreeMap::from([(
            "S23".to_string(),
            (1.0 + sigma * sigma + 2.0 * rho * sigma) / d,
        )]),
    };
    Ok((model, indices))
}

fn peak_valley_x1(x1: f64) -> f64 {
    0.2 * (x1 - 3.0).exp() - 0.5 * x1.powi(4)
        + 2.5 * x1 * x1
        + 0.7 * x1.powi(3)
        + (5.0 * x1).sin() * (3.0 * x1 * x1).cos()
}

fn peak_valley_x2(x2: f64) -> f64 {
    2.2 * x2.abs() + 1.3 * x2.powi(6) - 2.0 * x2 * x2 - 0.5 * x2.powi(4)
}

/// The peak-and-valley function of two independent `U[−1,1]` inputs.
pub fn peak_valley_eval(x1: f64, x2: f64) -> f64 {
    let bump = 3.0 / ((8.0 * x1 - 2.0).powi(2) + (5.0 * x2 - 3.0).powi(2) + 1.0);
    peak_valley_x1(x1) + peak_valley_x2(x2) + bump
}

/// Peak-and-valley model on `U[−1,1]²`.
///
/// `s` holds the indices of this function under the stated law, obtained by
/// high-order tensor quadrature: `(0.893735, 0.059492)`. The commonly quoted
/// pair `(0.9375, 0.0625)` equals these rescaled to sum to one; it is kept in
/// `extra` as `reported_s1` / `reported_s2`.
pub fn peak_valley() -> (ModelFunction, AnalyticIndices) {
    let law = InputLaw::Independent {
        marginals: vec![
            Marginal::Uniform {
                low: -1.0,
                high: 1.0
            };
            2
        ],
    };
    let model = ModelFunction::new("peakvalley", law, |x: &[f64]| peak_valley_eval(x[0], x[1]));
    let indices = AnalyticIndices {
        s: vec![0.893_735_015_883, 0.059_491_604_862],
        extra: BTreeMap::from([
            ("reported_s1".to_string(), 0.9375),
            ("reported_s2".to_string(), 0.0625),
            ("mean".to_string(), 1.467_097_551_613),
            ("variance".to_string(), 1.222_473_831_388),
        ]),
    };
    (model, indices)
}

/// Noise multiplier `E((ε² − 1)²)` for Gaussian `ε`.
pub const HETERO_SINE_LAMBDA2: f64 = 2.0;

/// `m(x) = sin(2πx)`.
pub fn hetero_sine_mean(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

/// `σ²(x) = (0.2 + 0.1x)²`.
pub fn hetero_sine_variance(x: f64) -> f64 {
    (0.2 + 0.1 * x).powi(2)
}

/// `Y = sin(2πX₁) + (0.2 + 0.1X₁)·X₂` with `X₁ ~ U[0,1]`, `X₂ ~ N(0,1)`.
///
/// Seen as a regression on `X₁` alone, `X₂` is the noise: mean
/// [`hetero_sine_mean`], variance [`hetero_sine_variance`].
pub fn hetero_sine() -> (ModelFunction, AnalyticIndices) {
    let law = InputLaw::Independent {
        marginals: vec![
            Marginal::Uniform {
                low: 0.0,
                high: 1.0,
            },
            Marginal::Normal { mean: 0.0, sd: 1.0 },
        ],
    };
    let model = ModelFunction::new("heterosine", law, |x: &[f64]| {
        hetero_sine_mean(x[0]) + (0.2 + 0.1 * x[0]) * x[1]
    });
    // Var(m) = 1/2, E σ² = 0.04 + 0.02 + 0.01/3, Var(E(Y|X₂)) = (E(0.2 + 0.1X₁))²
    let mean_var = 0.04 + 0.02 + 0.01 / 3.0;
    let total = 0.5 + mean_var;
    let indices = AnalyticIndices {
        s: vec![0.5 / total, 0.0625 / total],
        extra: BTreeMap::from([
            ("var_conditional_mean".to_string(), 0.5),
            ("mean_conditional_variance".to_string(), mean_var),
        ]),
    };
    (model, indices)
}

fn marginal_quantile(law: &InputLaw, i: usize, u: f64) -> f64 {
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    match law {
        InputLaw::Gaussian { spec } => {
            spec.mean()[i] + spec.cov()[(i, i)].sqrt() * std_normal.inverse_cdf(u)
        }
        InputLaw::Independent { marginals } => match marginals[i] {
            Marginal::Uniform { low, high } => low + (high - low) * u,
            Marginal::Normal { mean, sd } => mean + sd * std_normal.inverse_cdf(u),
        },
    }
}

enum Completion {
    Gaussian(Box<ConditionalSampler>),
    Independent(Vec<Marginal>),
}

impl Completion {
    fn new(law: &InputLaw, i: usize) -> Result<Self> {
        Ok(match law {
            InputLaw::Gaussian { spec } => {
                Completion::Gaussian(Box::new(ConditionalSampler::new(spec.clone(), i)?))
            }
            InputLaw::Independent { marginals } => Completion::Independent(marginals.clone()),
        })
    }

    /// Two antithetic completions of `x_i = xi`.
    fn pair(&self, i: usize, xi: f64, rng: &mut SensiRng, a: &mut [f64], b: &mut [f64]) {
        match self {
            Completion::Gaussian(s) => s.complete_pair(xi, rng, a, b),
            Completion::Independent(marginals) => {
                for (j, m) in marginals.iter().enumerate() {
                    if j == i {
                        a[j] = xi;
                        b[j] = xi;
                        continue;
                    }
                    let (v, w) = match *m {
                        Marginal::Uniform { low, high } => {
                            let v = low + (high - low) * rng.gen::<f64>();
                            (v, low + high - v)
                        }
                        Marginal::Normal { mean, sd } => {
                            let z: f64 = rng.sample(StandardNormal);
                            (mean + sd * z, mean - sd * z)
                        }
                    };
                    a[j] = v;
                    b[j] = w;
                }
            }
        }
    }
}

/// Monte-Carlo `Var(E(Y|X_i)) / Var(Y)` by exact conditional sampling.
///
/// Used to validate analytic fixtures. `X_i` is placed at the `n` marginal
/// quantile midpoints, each is completed `r` times (in antithetic pairs) from
/// the conditional law of the other inputs, and the between-group variance is
/// corrected for the noise of the group means. `r` must be even.
pub fn monte_carlo_index(
    model: &ModelFunction,
    i: usize,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<f64> {
    let d = model.dim();
    if i >= d {
        return Err(SensiError::invalid(format!(
            "input index {i} out of range for d = {d}"
        )));
    }
    if n < 2 || r < 2 || !r.is_multiple_of(2) {
        return Err(SensiError::invalid("need n >= 2 and an even r >= 2"));
    }
    let completion = Completion::new(model.law(), i)?;
    // per group: (mean, within sum of squares, variance of the group mean)
    let groups = par::map_range(n, |k| {
        let xi = marginal_quantile(model.law(), i, (k as f64 + 0.5) / n as f64);
        let mut rng = rng::child(seed, k as u64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut values = Vec::with_capacity(r);
        let mut pair_means = Vec::with_capacity(r / 2);
        for _ in 0..r / 2 {
            completion.pair(i, xi, &mut rng, &mut a, &mut b);
            let (ya, yb) = (model.eval(&a), model.eval(&b));
            values.push(ya);
            values.push(yb);
            pair_means.push(0.5 * (ya + yb));
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let pairs = pair_means.len() as f64;
        let pair_var =
            pair_means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pairs - 1.0).max(1.0);
        (mean, ss, pair_var / pairs)
    });
    let grand = groups.iter().map(|g| g.0).sum::<f64>() / n as f64;
    let between_ss = groups.iter().map(|g| (g.0 - grand).powi(2)).sum::<f64>();
    let within_ss = groups.iter().map(|g| g.1).sum::<f64>();
    let total = (within_ss + r as f64 * between_ss) / (n * r - 1) as f64;
    if !(total > 0.0) {
        return Err(SensiError::DegenerateOutput);
    }
    let noise = groups.iter().map(|g| g.2).sum::<f64>() / n as f64;
    let between = between_ss / (n - 1) as f64 - noise;
    Ok(between / total)
}
