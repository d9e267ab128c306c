//! Local polynomial regression.
//!
//! At an evaluation point `x0` the fit minimises
//! `Σ_i (y_i − Σ_j β_j (x_i − x0)^j)² K((x_i − x0)/h)` and reports
//! `m̂(x0) = β_0`. The weighted design is orthogonalised column by column
//! (modified Gram–Schmidt on `√w · u^j` with `u = (x − x0)/h`); a design that
//! is numerically rank deficient falls back to a ridge-regularised normal
//! equation solve and raises `condition_flag`.
//!
//! Evaluation points outside `[min x, max x]` are accepted. Fits there are
//! extrapolations and carry the usual boundary bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthPolicy};
use crate::error::{Result, SensiError};
use crate::kernel::{Kernel, WEIGHT_FLOOR};
use crate::par;

/// Relative column-norm threshold below which the local design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Paired predictor/response observations.
///
/// Construction checks equal lengths, `n ≥ 2` and finiteness. The
/// two-distinct-x requirement is checked by the estimation entry points
/// ([`RegressionSample::require_distinct_x`]) so degenerate designs can still
/// be fitted directly.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RegressionSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(SensiError::LengthMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(SensiError::invalid(format!(
                "regression sample needs at least 2 points, got {}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(SensiError::invalid(format!(
                "non-finite value at position {}",
                i % x.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same design, new response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    pub fn distinct_x(&self) -> usize {
        let mut xs = self.x.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    pub fn require_distinct_x(&self) -> Result<()> {
        if self.distinct_x() < 2 {
            Err(SensiError::invalid(
                "predictor takes a single value; conditional moments are undefined",
            ))
        } else {
            Ok(())
        }
    }

    pub fn x_range(&self) -> f64 {
        let (lo, hi) = self
            .x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }
}

/// Hyperparameters of the conditional-mean smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFitConfig {
    /// Polynomial order `p` (0 to 3).
    pub order: usize,
    pub kernel: Kernel,
    pub bandwidth: BandwidthPolicy,
    /// Ridge added on rank deficiency, relative to the trace of the local normal matrix.
    pub ridge_epsilon: f64,
}

impl Default for LocalFitConfig {
    fn default() -> Self {
        Self {
            order: 1,
            kernel: Kernel::Gaussian,
            bandwidth: BandwidthPolicy::default(),
            ridge_epsilon: 1e-8,
        }
    }
}

impl LocalFitConfig {
    pub fn with_bandwidth(mut self, bandwidth: BandwidthPolicy) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn fixed(order: usize, kernel: Kernel, h: f64) -> Self {
        Self {
            order,
            kernel,
            bandwidth: BandwidthPolicy::fixed(h),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > 3 {
            return Err(SensiError::invalid(format!(
                "polynomial order {} not supported (0..=3)",
                self.order
            )));
        }
        if !(self.ridge_epsilon >= 0.0) {
            return Err(SensiError::invalid("ridge_epsilon must be >= 0"));
        }
        self.bandwidth.validate()
    }
}

/// Local coefficients at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFitResult {
    /// `β_j` in the original x scale.
    pub beta: Vec<f64>,
    pub mhat: f64,
    /// Points carrying nonzero kernel weight.
    pub effective_points: usize,
    /// Set when the ridge fallback was used.
    pub condition_flag: bool,
}

impl LocalFitResult {
    /// Estimate of the `nu`-th derivative, `nu! β_nu`.
    pub fn derivative(&self, nu: usize) -> Option<f64> {
        let fact: f64 = (1..=nu).map(|k| k as f64).product();
        self.beta.get(nu).map(|b| fact * b)
    }
}

struct Solution {
    beta_scaled: Vec<f64>,
    effective: usize,
    ridge: bool,
    /// (sorted index, weight) pairs; only filled on request
    weights: Vec<(usize, f64)>,
}

/// A sample prepared for repeated local fits: sorted by x so each fit scans
/// only the kernel's support window.
#[derive(Debug, Clone)]
pub struct LocalPolynomial {
    xs: Vec<f64>,
    ys: Vec<f64>,
    perm: Vec<usize>,
    order: usize,
    kernel: Kernel,
    ridge: f64,
}

impl LocalPolynomial {
    pub fn new(
        sample: &RegressionSample,
        order: usize,
        kernel: Kernel,
        ridge_epsilon: f64,
    ) -> Self {
        let mut perm: Vec<usize> = (0..sample.len()).collect();
        perm.sort_by(|&a, &b| sample.x[a].total_cmp(&sample.x[b]).then(a.cmp(&b)));
        Self {
            xs: perm.iter().map(|&i| sample.x[i]).collect(),
            ys: perm.iter().map(|&i| sample.y[i]).collect(),
            perm,
            order,
            kernel,
            ridge: ridge_epsilon,
        }
    }

    pub fn from_config(sample: &RegressionSample, config: &LocalFitConfig) -> Self {
        Self::new(sample, config.order, config.kernel, config.ridge_epsilon)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub(crate) fn sorted_x(&self) -> &[f64] {
        &self.xs
    }

    pub(crate) fn sorted_y(&self) -> &[f64] {
        &self.ys
    }

    /// Squared scaled distance from `x0` to the closest sample point other
    /// than `skip`.
    fn nearest_u2(&self, x0: f64, h: f64, skip: Option<usize>) -> f64 {
        let p = self.xs.partition_point(|&v| v < x0);
        let mut best = f64::INFINITY;
        let mut consider = |k: usize| {
            if Some(k) != skip {
                best = best.min(((self.xs[k] - x0) / h).powi(2));
            }
        };
        // the skipped point can hide at most one neighbour on each side
        for k in p.saturating_sub(2)..(p + 2).min(self.xs.len()) {
            consider(k);
        }
        best
    }

    /// Index range of points that can carry weight, and the Gaussian shift.
    ///
    /// Gaussian weights are taken relative to the closest point,
    /// `K(0)·exp(−(u² − u₀²)/2)`. Scaling all weights by one constant leaves
    /// the fit unchanged, and far-away evaluation points no longer underflow.
    fn window(&self, x0: f64, h: f64, skip: Option<usize>) -> (usize, usize, f64) {
        let radius = self.kernel.support_radius();
        let (reach, shift) = match self.kernel {
            Kernel::Gaussian => {
                let u0 = self.nearest_u2(x0, h, skip);
                ((u0 + radius * radius).sqrt() * h, u0)
            }
            _ => (radius * h, 0.0),
        };
        let lo = self.xs.partition_point(|&v| v < x0 - reach);
        let hi = self.xs.partition_point(|&v| v <= x0 + reach);
        (lo, hi.max(lo), shift)
    }

    fn weight(&self, u: f64, shift: f64) -> f64 {
        match self.kernel {
            Kernel::Gaussian => {
                let w = self.kernel.eval(0.0) * (-0.5 * (u * u - shift)).exp();
                if w < WEIGHT_FLOOR {
                    0.0
                } else {
                    w
                }
            }
            k => k.weight(u),
        }
    }

    fn solve(&self, x0: f64, h: f64, skip: Option<usize>, want_weights: bool) -> Result<Solution> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(SensiError::invalid(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        if !x0.is_finite() {
            return Err(SensiError::invalid(format!(
                "evaluation point must be finite, got {x0}"
            )));
        }
        let m = self.order + 1;
        let (lo, hi, shift) = self.window(x0, h, skip);
        let mut rows: Vec<usize> = Vec::with_capacity(hi - lo);
        let mut sw: Vec<f64> = Vec::with_capacity(hi - lo);
        let mut us: Vec<f64> = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            if Some(k) == skip {
                continue;
            }
            let u = (self.xs[k] - x0) / h;
            let w = self.weight(u, shift);
            if w > 0.0 {
                rows.push(k);
                sw.push(w.sqrt());
                us.push(u);
            }
        }
        let r = rows.len();
        if r == 0 {
            return Err(SensiError::NoLocalData { x0, h });
        }

        // columns of the weighted design
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        cols.push(sw.clone());
        for j in 1..m {
            let prev = &cols[j - 1];
            let next: Vec<f64> = prev.iter().zip(&us).map(|(a, u)| a * u).collect();
            cols.push(next);
        }
        let b: Vec<f64> = rows.iter().zip(&sw).map(|(&k, s)| s * self.ys[k]).collect();

        match mgs(&cols) {
            Some((q, rmat)) => {
                let c: Vec<f64> = q.iter().map(|qj| dot(qj, &b)).collect();
                let beta_scaled = back_substitute(&rmat, &c);
                let weights = if want_weights {
                    // l = √W Q R⁻ᵀ e₀
                    let mut z = vec![0.0; m];
                    for j in 0..m {
                        let mut acc = if j == 0 { 1.0 } else { 0.0 };
                        for k in 0..j {
                            acc -= rmat[k][j] * z[k];
                        }
                        z[j] = acc / rmat[j][j];
                    }
                    (0..r)
                        .map(|t| {
                            let v: f64 = (0..m).map(|j| q[j][t] * z[j]).sum();
                            (rows[t], sw[t] * v)
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                Ok(Solution {
                    beta_scaled,
                    effective: r,
                    ridge: false,
                    weights,
                })
            }
            None => {
                let gram = DMatrix::from_fn(m, m, |i, j| dot(&cols[i], &cols[j]));
                let rhs = DVector::from_fn(m, |i, _| dot(&cols[i], &b));
                let eps = self.ridge * gram.trace();
                let regularised = &gram + DMatrix::identity(m, m) * eps;
                let chol = regularised.cholesky().ok_or_else(|| {
                    SensiError::invalid(format!(
                        "rank-deficient local design at x0 = {x0} with ridge disabled"
                    ))
                })?;
                let beta = chol.solve(&rhs);
                let weights = if want_weights {
                    let mut e0 = DVector::zeros(m);
                    e0[0] = 1.0;
                    let t = chol.solve(&e0);
                    (0..r)
                        .map(|row| {
                            let v: f64 = (0..m).map(|j| cols[j][row] * t[j]).sum();
                            (rows[row], sw[row] * v)
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                Ok(Solution {
                    beta_scaled: beta.iter().copied().collect(),
                    effective: r,
                    ridge: true,
                    weights,
                })
            }
        }
    }

    /// Full local fit at `x0`.
    pub fn fit_at(&self, x0: f64, h: f64) -> Result<LocalFitResult> {
        let sol = self.solve(x0, h, None, false)?;
        let beta: Vec<f64> = sol
            .beta_scaled
            .iter()
            .enumerate()
            .map(|(j, b)| b / h.powi(j as i32))
            .collect();
        Ok(LocalFitResult {
            mhat: beta[0],
            beta,
            effective_points: sol.effective,
            condition_flag: sol.ridge,
        })
    }

    /// `m̂(x0)` only.
    #[inline]
    pub fn mhat(&self, x0: f64, h: f64) -> Result<f64> {
        Ok(self.solve(x0, h, None, false)?.beta_scaled[0])
    }

    /// `m̂(x0)` with sorted point `skip` left out of the fit.
    pub(crate) fn mhat_without(&self, x0: f64, h: f64, skip: usize) -> Result<f64> {
        Ok(self.solve(x0, h, Some(skip), false)?.beta_scaled[0])
    }

    /// Linear-smoother weights `l` with `m̂(x0) = Σ l_i y_i`, in the sample's
    /// original order.
    pub fn weights(&self, x0: f64, h: f64) -> Result<Vec<f64>> {
        let sol = self.solve(x0, h, None, true)?;
        let mut out = vec![0.0; self.xs.len()];
        for (k, w) in sol.weights {
            out[self.perm[k]] = w;
        }
        Ok(out)
    }

    /// `(m̂(x0), Σ l_i²)` where `l` are the smoother weights.
    pub(crate) fn mhat_and_weight_norm(&self, x0: f64, h: f64) -> Result<(f64, f64)> {
        let sol = self.solve(x0, h, None, true)?;
        let norm = sol.weights.iter().map(|(_, w)| w * w).sum();
        Ok((sol.beta_scaled[0], norm))
    }

    /// `(m̂(x_k), l_kk, Σ_i l_i²)` at sorted sample point `k`.
    pub(crate) fn fit_at_sample_point(&self, k: usize, h: f64) -> Result<(f64, f64, f64)> {
        let sol = self.solve(self.xs[k], h, None, true)?;
        let mut lkk = 0.0;
        let mut norm = 0.0;
        for (idx, w) in &sol.weights {
            norm += w * w;
            if *idx == k {
                lkk = *w;
            }
        }
        Ok((sol.beta_scaled[0], lkk, norm))
    }

    /// `m̂` at every point of `xs`, in order.
    pub fn predict(&self, xs: &[f64], h: f64) -> Result<Vec<f64>> {
        par::try_map_range(xs.len(), |k| self.mhat(xs[k], h))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram–Schmidt. Returns `None` when a column is numerically
/// dependent on the previous ones.
#[allow(clippy::type_complexity)]
fn mgs(cols: &[Vec<f64>]) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let m = cols.len();
    let r = cols[0].len();
    if r < m {
        return None;
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rmat = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut v = cols[j].clone();
        let original = dot(&v, &v).sqrt();
        for k in 0..j {
            let rk = dot(&q[k], &v);
            rmat[k][j] = rk;
            for (vi, qi) in v.iter_mut().zip(&q[k]) {
                *vi -= rk * qi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > RANK_TOL * original) || norm == 0.0 {
            return None;
        }
        rmat[j][j] = norm;
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        q.push(v);
    }
    Some((q, rmat))
}

fn back_substitute(rmat: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let m = c.len();
    let mut beta = vec![0.0; m];
    for j in (0..m).rev() {
        let mut acc = c[j];
        for k in j + 1..m {
            acc -= rmat[j][k] * beta[k];
        }
        beta[j] = acc / rmat[j][j];
    }
    beta
}

/// Local polynomial fit of `sample` at `x0` with bandwidth `h`.
pub fn fit_at(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    x0: f64,
    h: f64,
) -> Result<LocalFitResult> {
    config.validate()?;
    LocalPolynomial::from_config(sample, config).fit_at(x0, h)
}

/// Smoother weights at `x0`, indexed like the sample.
pub fn smoother_weights(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    x0: f64,
    h: f64,
) -> Result<Vec<f64>> {
    config.validate()?;
    LocalPolynomial::from_config(sample, config).weights(x0, h)
}

/// Predictions at `xs` using a bandwidth chosen by `config.bandwidth`.
///
/// Data-driven policies average their selection criterion over `xs` where
/// they need evaluation points.
pub fn predict(sample: &RegressionSample, config: &LocalFitConfig, xs: &[f64]) -> Result<Vec<f64>> {
    config.validate()?;
    let h = bandwidth::resolve(
        &config.bandwidth,
        sample,
        config.order,
        config.kernel,
        config.ridge_epsilon,
    )?;
    predict_with_bandwidth(sample, config, xs, h)
}

/// Predictions at `xs` with a given bandwidth.
pub fn predict_with_bandwidth(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    xs: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    config.validate()?;
    LocalPolynomial::from_config(sample, config).predict(xs, h)
}
