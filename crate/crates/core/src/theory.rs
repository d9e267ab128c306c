//! Asymptotic bias and variance constants of `T̂₁`, `T̂₂` and a Monte-Carlo
//! harness that compares them with measured behaviour.
//!
//! With local linear smoothers at bandwidths `h₁` (mean) and `h₂` (variance):
//!
//! * `E T̂₁ ≈ Var(m(X)) + M₁h₁² + M₂/(nh₁)`
//! * `E T̂₂ ≈ E σ²(X) + V₁h₂²`
//! * `n′ Var T̂₂ ≈ E σ⁴(X) + V₂h₂² + V₃h₁² + V₄/(nh₂)`
//!
//! The expansions are conditional on the design; the harness averages over
//! fresh designs instead, which matches them only asymptotically.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SensiError};
use crate::indices::{estimate_t1, estimate_t2};
use crate::kernel::Kernel;
use crate::locfit::{LocalPolynomial, RegressionSample};
use crate::models::{hetero_sine_mean, hetero_sine_variance, HETERO_SINE_LAMBDA2};
use crate::rng::{self, SensiRng};
use crate::{condvar, par, quad};

type Curve = fn(f64) -> f64;

/// Regression model `Y = m(X) + σ(X)ε` with `X` uniform on `support` and
/// standard normal `ε`.
#[derive(Debug, Clone, Copy)]
pub struct TheoryFixture {
    pub name: &'static str,
    pub support: (f64, f64),
    pub mean: Curve,
    pub mean_dd: Option<Curve>,
    pub variance: Curve,
    pub variance_dd: Option<Curve>,
    pub lambda2: Curve,
}

fn gaussian_lambda2(_: f64) -> f64 {
    HETERO_SINE_LAMBDA2
}

fn hetero_variance_dd(_: f64) -> f64 {
    0.02
}

impl TheoryFixture {
    /// `m(x) = sin(2πx)`, `σ²(x) = (0.2 + 0.1x)²` on `[0,1]`.
    pub fn hetero_sine() -> Self {
        Self {
            name: "heterosine",
            support: (0.0, 1.0),
            mean: hetero_sine_mean,
            mean_dd: Some(|x| -4.0 * std::f64::consts::PI.powi(2) * hetero_sine_mean(x)),
            variance: hetero_sine_variance,
            variance_dd: Some(hetero_variance_dd),
            lambda2: gaussian_lambda2,
        }
    }

    /// Linear mean `1 + 2x` with the heteroskedastic noise above.
    pub fn linear_mean() -> Self {
        Self {
            name: "linear",
            mean: |x| 1.0 + 2.0 * x,
            mean_dd: Some(|_| 0.0),
            ..Self::hetero_sine()
        }
    }

    /// `m(x) = sin(2πx)` observed without noise.
    pub fn zero_noise() -> Self {
        Self {
            name: "zeronoise",
            variance: |_| 0.0,
            variance_dd: Some(|_| 0.0),
            ..Self::hetero_sine()
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if (a..=b).contains(&x) {
            1.0 / (b - a)
        } else {
            0.0
        }
    }

    fn integrate(&self, f: impl Fn(f64) -> f64, rel_tol: f64) -> f64 {
        quad::integrate(f, self.support.0, self.support.1, rel_tol, 1e-15)
    }

    /// `Var(m(X))`.
    pub fn var_conditional_mean(&self) -> f64 {
        let m1 = self.integrate(|x| (self.mean)(x) * self.density(x), 1e-12);
        let m2 = self.integrate(|x| (self.mean)(x).powi(2) * self.density(x), 1e-12);
        m2 - m1 * m1
    }

    /// `E σ²(X)`.
    pub fn mean_conditional_variance(&self) -> f64 {
        self.integrate(|x| (self.variance)(x) * self.density(x), 1e-12)
    }

    /// `E σ⁴(X)`.
    pub fn mean_squared_conditional_variance(&self) -> f64 {
        self.integrate(|x| (self.variance)(x).powi(2) * self.density(x), 1e-12)
    }

    fn draw_x(&self, n: usize, rng: &mut SensiRng) -> Vec<f64> {
        let (a, b) = self.support;
        (0..n).map(|_| a + (b - a) * rng.gen::<f64>()).collect()
    }

    /// `n` draws of `(X, Y)`.
    pub fn sample(&self, n: usize, rng: &mut SensiRng) -> (Vec<f64>, Vec<f64>) {
        let x = self.draw_x(n, rng);
        let y = x
            .iter()
            .map(|&v| {
                let e: f64 = rng.sample(StandardNormal);
                (self.mean)(v) + (self.variance)(v).sqrt() * e
            })
            .collect();
        (x, y)
    }
}

/// Names of the bundled fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    HeteroSine,
    Linear,
    ZeroNoise,
}

impl FixtureKind {
    pub fn fixture(self) -> TheoryFixture {
        match self {
            FixtureKind::HeteroSine => TheoryFixture::hetero_sine(),
            FixtureKind::Linear => TheoryFixture::linear_mean(),
            FixtureKind::ZeroNoise => TheoryFixture::zero_noise(),
        }
    }
}

impl FromStr for FixtureKind {
    type Err = SensiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heterosine" | "hetero_sine" => Ok(FixtureKind::HeteroSine),
            "linear" => Ok(FixtureKind::Linear),
            "zeronoise" | "zero_noise" => Ok(FixtureKind::ZeroNoise),
            other => Err(SensiError::invalid(format!(
                "unknown theory fixture '{other}' (heterosine, linear, zeronoise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub kernel: Kernel,
}

/// Evaluates the six constants by adaptive quadrature to `rel_tol`.
pub fn compute_constants_with_tolerance(
    fixture: &TheoryFixture,
    kernel: Kernel,
    rel_tol: f64,
) -> Result<TheoremConstants> {
    let missing =
        |what: &str| SensiError::invalid(format!("fixture '{}' lacks {what}", fixture.name));
    let m_dd = fixture
        .mean_dd
        .ok_or_else(|| missing("the second derivative of m"))?;
    let s_dd = fixture
        .variance_dd
        .ok_or_else(|| missing("the second derivative of sigma^2"))?;
    let mu2 = kernel.moment_mu(2)?;
    let nu0 = kernel.moment_nu(0)?;
    let f = |x: f64| fixture.density(x);
    let m = fixture.mean;
    let s2 = fixture.variance;
    let int = |g: &dyn Fn(f64) -> f64| fixture.integrate(g, rel_tol);

    let m1 =
        mu2 * (int(&|x| m(x) * m_dd(x) * f(x)) - int(&|x| m(x) * f(x)) * int(&|x| m_dd(x) * f(x)));
    let m2 = nu0 * int(&|x| s2(x));
    let sdd_f = int(&|x| s_dd(x) * f(x));
    let v1 = 0.5 * mu2 * sdd_f;
    let v2 = mu2 * int(&|x| s2(x) * s_dd(x) * f(x));
    let v3 = -mu2 * sdd_f * int(&|x| s2(x) * f(x));
    let v4 = nu0 * int(&|x| s2(x).powi(2) * (fixture.lambda2)(x));
    Ok(TheoremConstants {
        m1,
        m2,
        v1,
        v2,
        v3,
        v4,
        kernel,
    })
}

pub fn compute_constants(fixture: &TheoryFixture, kernel: Kernel) -> Result<TheoremConstants> {
    compute_constants_with_tolerance(fixture, kernel, 1e-10)
}

/// Acceptance bands for the expansion check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t1_bias_ratio: [f64; 2],
    pub t2_bias_ratio: [f64; 2],
    pub coefficient_tolerance: f64,
    pub zero_noise_t2_bias: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        serde_json::from_str(include_str!("../fixtures/theory_thresholds.json"))
            .expect("bundled thresholds parse")
    }
}

/// Settings of [`empirical_expansion_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub kernel: Kernel,
    pub n_list: Vec<usize>,
    /// Used for both `h₁` and `h₂`.
    pub h_list: Vec<f64>,
    pub n_prime: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    T1Bias,
    T2Bias,
    T2ScaledVariance,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::T1Bias => "t1_bias",
            Quantity::T2Bias => "t2_bias",
            Quantity::T2ScaledVariance => "t2_scaled_variance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub quantity: Quantity,
    pub n: usize,
    pub h: f64,
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
    /// Monte-Carlo standard error of `measured`.
    pub std_error: f64,
}

/// Least-squares coefficients of the measured `T̂₁` bias on `(h², 1/(nh))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasFit {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub fixture: String,
    pub constants: TheoremConstants,
    pub rows: Vec<ExpansionRow>,
    pub fit: Option<BiasFit>,
}

impl ExpansionReport {
    pub fn row(&self, quantity: Quantity, n: usize, h: f64) -> Option<&ExpansionRow> {
        self.rows
            .iter()
            .find(|r| r.quantity == quantity && r.n == n && r.h == h)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,n,h,measured,predicted,ratio,std_error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.quantity.name(),
                r.n,
                r.h,
                r.measured,
                r.predicted,
                r.ratio,
                r.std_error
            );
        }
        out
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt(), var)
}

/// `(T̂₁, T̂₂)` for one fresh design.
fn one_replicate(
    fixture: &TheoryFixture,
    kernel: Kernel,
    n: usize,
    n_prime: usize,
    h: f64,
    rng: &mut SensiRng,
) -> Result<(f64, f64)> {
    let (x, y) = fixture.sample(n, rng);
    let tilde = fixture.draw_x(n_prime, rng);
    let sample = RegressionSample::new(x, y)?;
    let engine = LocalPolynomial::new(&sample, 1, kernel, 1e-8);
    let t1 = estimate_t1(&engine.predict(&tilde, h)?)?;
    let mhat = engine.predict(sample.x(), h)?;
    let r2 = condvar::squared_residuals(&sample, &mhat)?;
    let var_cfg = condvar::VarianceFitConfig::fixed(1, kernel, h);
    let sigma2 = condvar::fit_variance_sample(&sample.with_response(r2)?, &var_cfg, &tilde, h)?;
    Ok((t1, estimate_t2(&sigma2.sigma2)?))
}

/// Measures `T̂₁`/`T̂₂` bias and the scaled `T̂₂` variance on every `(n, h)`
/// cell and sets them against the expansions. Replicates run in parallel on
/// per-replicate child streams, so results do not depend on thread count.
pub fn empirical_expansion_check(
    fixture: &TheoryFixture,
    cfg: &ExpansionConfig,
) -> Result<ExpansionReport> {
    if cfg.reps < 2 {
        return Err(SensiError::invalid(
            "expansion check needs at least 2 replicates",
        ));
    }
    if cfg.n_list.is_empty() || cfg.h_list.is_empty() {
        return Err(SensiError::invalid(
            "expansion check needs at least one n and one h",
        ));
    }
    if let Some(h) = cfg.h_list.iter().find(|h| !(**h > 0.0)) {
        return Err(SensiError::invalid(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let constants = compute_constants(fixture, cfg.kernel)?;
    let var_m = fixture.var_conditional_mean();
    let mean_s2 = fixture.mean_conditional_variance();
    let mean_s4 = fixture.mean_squared_conditional_variance();

    let mut rows = Vec::new();
    let mut design = Vec::new();
    for (a, &n) in cfg.n_list.iter().enumerate() {
        for (b, &h) in cfg.h_list.iter().enumerate() {
            let cell_seed = rng::derive_seed(cfg.seed, (a * cfg.h_list.len() + b) as u64);
            let draws = par::try_map_range(cfg.reps, |k| {
                let mut rng = rng::child(cell_seed, k as u64);
                one_replicate(fixture, cfg.kernel, n, cfg.n_prime, h, &mut rng)
            })?;
            let t1: Vec<f64> = draws.iter().map(|d| d.0).collect();
            let t2: Vec<f64> = draws.iter().map(|d| d.1).collect();
            let (t1_mean, t1_se, _) = mean_and_se(&t1);
            let (t2_mean, t2_se, t2_var) = mean_and_se(&t2);
            let nh = n as f64 * h;
            let mut push = |quantity, measured: f64, predicted: f64, std_error| {
                rows.push(ExpansionRow {
                    quantity,
                    n,
                    h,
                    measured,
                    predicted,
                    ratio: measured / predicted,
                    std_error,
                })
            };
            push(
                Quantity::T1Bias,
                t1_mean - var_m,
                constants.m1 * h * h + constants.m2 / nh,
                t1_se,
            );
            push(
                Quantity::T2Bias,
                t2_mean - mean_s2,
                constants.v1 * h * h,
                t2_se,
            );
            push(
                Quantity::T2ScaledVariance,
                cfg.n_prime as f64 * t2_var,
                mean_s4 + (constants.v2 + constants.v3) * h * h + constants.v4 / nh,
                f64::NAN,
            );
            design.push((h * h, 1.0 / nh, t1_mean - var_m));
        }
    }
    for r in rows
        .iter_mut()
        .filter(|r| r.quantity == Quantity::T2ScaledVariance)
    {
        // the variance of a sample variance is not tracked
        r.std_error = 0.0;
    }
    Ok(ExpansionReport {
        fixture: fixture.name.to_string(),
        constants,
        rows,
        fit: fit_bias(&design),
    })
}

/// No-intercept least squares of `bias` on `(h², 1/(nh))`.
fn fit_bias(design: &[(f64, f64, f64)]) -> Option<BiasFit> {
    if design.len() < 2 {
        return None;
    }
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, y) in design {
        aa += a * a;
        ab += a * b;
        bb += b * b;
        ay += a * y;
        by += b * y;
    }
    let det = aa * bb - ab * ab;
    if det.abs() <= 1e-12 * aa * bb {
        return None;
    }
    Some(BiasFit {
        m1: (ay * bb - by * ab) / det,
        m2: (aa * by - ab * ay) / det,
    })
}
