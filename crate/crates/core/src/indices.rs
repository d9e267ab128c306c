//! First-order index estimators.
//!
//! For each input `i`: fit `m̂` on `(X_i, Y)`, evaluate it on the tilde
//! sample (`T̂₁` is its empirical variance), smooth the squared in-sample
//! residuals on `X_i` to get `σ̂²` and average it over the tilde sample
//! (`T̂₂`). With `σ̂²_Y` the unbiased output variance,
//! `Ŝ⁽¹⁾ = T̂₁/σ̂²_Y` and `Ŝ⁽²⁾ = 1 − T̂₂/σ̂²_Y`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandwidth;
use crate::condvar::{self, VarianceFitConfig};
use crate::error::{Result, SensiError};
use crate::locfit::{LocalFitConfig, LocalPolynomial, RegressionSample};
use crate::models::ModelFunction;
use crate::par;
use crate::rng;
use crate::sampling::ConditionalSampler;

/// Version of the serialised report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Inputs and model outputs used to fit the conditional moments.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl JointSample {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SensiError::LengthMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(SensiError::invalid("joint sample has no input columns"));
        }
        if y.len() < 10 {
            return Err(SensiError::invalid(format!(
                "joint sample needs at least 10 rows, got {}",
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(SensiError::invalid(
                "joint sample contains non-finite values",
            ));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.x.column(i).iter().copied().collect()
    }

    /// Rows picked by `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    /// Same inputs, `Y` replaced by `c·Y + b`.
    pub fn affine_response(&self, c: f64, b: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| c * v + b).collect(),
        }
    }
}

/// Input-only sample over which the fitted moments are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeSample {
    x: DMatrix<f64>,
}

impl TildeSample {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(SensiError::invalid("tilde sample needs at least 2 rows"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SensiError::invalid(
                "tilde sample contains non-finite values",
            ));
        }
        if x.nrows() < 100 {
            log::warn!(
                "tilde sample has only {} rows; a few thousand are advisable",
                x.nrows()
            );
        }
        Ok(Self { x })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.x.column(i).iter().copied().collect()
    }
}

/// Empirical variance (divisor `n′ − 1`) of the fitted means.
pub fn estimate_t1(mhat_tilde: &[f64]) -> Result<f64> {
    let n = mhat_tilde.len();
    if n < 2 {
        return Err(SensiError::invalid("T1 needs at least 2 fitted values"));
    }
    let mean = mhat_tilde.iter().sum::<f64>() / n as f64;
    Ok(mhat_tilde.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
}

/// Mean of the fitted conditional variances.
pub fn estimate_t2(sigma2_tilde: &[f64]) -> Result<f64> {
    if sigma2_tilde.is_empty() {
        return Err(SensiError::invalid("T2 needs at least 1 fitted value"));
    }
    Ok(sigma2_tilde.iter().sum::<f64>() / sigma2_tilde.len() as f64)
}

/// Unbiased sample variance.
pub fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Everything that steers [`estimate_indices`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    pub mean: LocalFitConfig,
    pub variance: VarianceFitConfig,
    pub bootstrap_reps: usize,
    pub ci_level: f64,
    pub seed: u64,
    /// Reuse the full-sample bandwidths inside bootstrap replicates.
    pub freeze_bandwidths: bool,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            mean: LocalFitConfig::default(),
            variance: VarianceFitConfig::default(),
            bootstrap_reps: 0,
            ci_level: 0.95,
            seed: 0,
            freeze_bandwidths: false,
        }
    }
}

impl EstimationOptions {
    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        self.variance.validate()?;
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(SensiError::invalid(format!(
                "confidence level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Estimates for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputIndex {
    pub input: usize,
    pub s1_raw: f64,
    pub s2_raw: f64,
    pub s1_clipped: f64,
    pub s2_clipped: f64,
    pub s1_ci: Option<Interval>,
    pub s2_ci: Option<Interval>,
    pub h1: f64,
    pub h2: f64,
    pub t1: f64,
    pub t2: f64,
    /// Tilde points where `σ̂²` was clamped to zero.
    pub clamped_count: usize,
}

/// Raw indices of one bootstrap replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReplicate {
    pub replicate: usize,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub schema: u32,
    pub indices: Vec<InputIndex>,
    pub var_y: f64,
    pub n: usize,
    pub n_prime: usize,
    pub bootstrap_reps: usize,
    /// Replicates dropped because a refit failed.
    pub bootstrap_failures: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub options: EstimationOptions,
    pub bootstrap: Vec<BootstrapReplicate>,
}

impl SensitivityReport {
    pub fn s1(&self) -> Vec<f64> {
        self.indices.iter().map(|i| i.s1_raw).collect()
    }

    pub fn s2(&self) -> Vec<f64> {
        self.indices.iter().map(|i| i.s2_raw).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SensiError::invalid(format!("report JSON: {e}")))
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
struct InputFit {
    h1: f64,
    h2: f64,
    t1: f64,
    t2: f64,
    clamped: usize,
}

fn fit_input(
    xi: Vec<f64>,
    y: &[f64],
    tilde: &[f64],
    opts: &EstimationOptions,
    frozen: Option<(f64, f64)>,
) -> Result<InputFit> {
    let sample = RegressionSample::new(xi, y.to_vec())?;
    sample.require_distinct_x()?;
    let mean_cfg = &opts.mean;
    let h1 = match frozen {
        Some((h1, _)) => h1,
        None => bandwidth::resolve(
            &mean_cfg.bandwidth,
            &sample,
            mean_cfg.order,
            mean_cfg.kernel,
            mean_cfg.ridge_epsilon,
        )?,
    };
    let engine = LocalPolynomial::from_config(&sample, mean_cfg);
    let mhat_tilde = engine.predict(tilde, h1)?;
    let mhat_x = engine.predict(sample.x(), h1)?;
    let r2 = condvar::squared_residuals(&sample, &mhat_x)?;
    let var_sample = sample.with_response(r2)?;
    let var_cfg = &opts.variance;
    let h2 = match frozen {
        Some((_, h2)) => h2,
        None => bandwidth::resolve(
            &var_cfg.bandwidth,
            &var_sample,
            var_cfg.order,
            var_cfg.kernel,
            var_cfg.ridge_epsilon,
        )?,
    };
    let sigma2 = condvar::fit_variance_sample(&var_sample, var_cfg, tilde, h2)?;
    Ok(InputFit {
        h1,
        h2,
        t1: estimate_t1(&mhat_tilde)?,
        t2: estimate_t2(&sigma2.sigma2)?,
        clamped: sigma2.clamped_count,
    })
}

fn fit_all(
    joint: &JointSample,
    tilde_cols: &[Vec<f64>],
    opts: &EstimationOptions,
    frozen: Option<&[(f64, f64)]>,
) -> Result<Vec<InputFit>> {
    par::try_map_range(joint.dim(), |i| {
        fit_input(
            joint.column(i),
            joint.y(),
            &tilde_cols[i],
            opts,
            frozen.map(|f| f[i]),
        )
        .map_err(|e| e.in_input(i))
    })
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Equal-tailed percentile interval at `level`, linearly interpolated.
/// `None` with fewer than two values.
pub fn percentile_interval(values: impl Iterator<Item = f64>, level: f64) -> Option<Interval> {
    let mut v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Some(Interval {
        low: quantile(&v, alpha / 2.0),
        high: quantile(&v, 1.0 - alpha / 2.0),
    })
}

/// Runs the full procedure for every input, plus the bootstrap when
/// `opts.bootstrap_reps > 0`. Deterministic given `opts.seed`.
pub fn estimate_indices(
    joint: &JointSample,
    tilde: &TildeSample,
    opts: &EstimationOptions,
) -> Result<SensitivityReport> {
    opts.validate()?;
    if joint.dim() != tilde.dim() {
        return Err(SensiError::invalid(format!(
            "joint sample has {} inputs but tilde sample has {}",
            joint.dim(),
            tilde.dim()
        )));
    }
    let var_y = sample_variance(joint.y());
    if !(var_y > 0.0) {
        return Err(SensiError::DegenerateOutput);
    }
    let tilde_cols: Vec<Vec<f64>> = (0..tilde.dim()).map(|i| tilde.column(i)).collect();
    let fits = fit_all(joint, &tilde_cols, opts, None)?;

    let reps = opts.bootstrap_reps;
    let frozen: Vec<(f64, f64)> = fits.iter().map(|f| (f.h1, f.h2)).collect();
    let outcomes = par::map_range(reps, |b| {
        let mut rng = rng::child(opts.seed, b as u64);
        let n = joint.len();
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let resampled = joint.select_rows(&rows);
        let var_b = sample_variance(resampled.y());
        if !(var_b > 0.0) {
            return Err(SensiError::DegenerateOutput);
        }
        let frozen = opts.freeze_bandwidths.then_some(frozen.as_slice());
        let fits = fit_all(&resampled, &tilde_cols, opts, frozen)?;
        Ok(BootstrapReplicate {
            replicate: b,
            s1: fits.iter().map(|f| f.t1 / var_b).collect(),
            s2: fits.iter().map(|f| 1.0 - f.t2 / var_b).collect(),
        })
    });
    let mut bootstrap = Vec::with_capacity(reps);
    let mut failures = 0;
    for (b, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => bootstrap.push(rep),
            Err(e) => {
                log::warn!("bootstrap replicate {b} skipped: {e}");
                failures += 1;
            }
        }
    }

    let indices = fits
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let s1 = f.t1 / var_y;
            let s2 = 1.0 - f.t2 / var_y;
            InputIndex {
                input: i,
                s1_raw: s1,
                s2_raw: s2,
                s1_clipped: clip(s1),
                s2_clipped: clip(s2),
                s1_ci: percentile_interval(bootstrap.iter().map(|r| r.s1[i]), opts.ci_level),
                s2_ci: percentile_interval(bootstrap.iter().map(|r| r.s2[i]), opts.ci_level),
                h1: f.h1,
                h2: f.h2,
                t1: f.t1,
                t2: f.t2,
                clamped_count: f.clamped,
            }
        })
        .collect();
    Ok(SensitivityReport {
        schema: REPORT_SCHEMA,
        indices,
        var_y,
        n: joint.len(),
        n_prime: tilde.len(),
        bootstrap_reps: reps,
        bootstrap_failures: failures,
        ci_level: opts.ci_level,
        seed: opts.seed,
        options: opts.clone(),
        bootstrap,
    })
}

/// Between-group over total sum of squares from `n` values of `X_i`, each
/// completed `r` times from the conditional law of the other inputs.
pub fn ratto_index(
    sampler: &ConditionalSampler,
    model: &ModelFunction,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<f64> {
    if n < 2 || r < 2 {
        return Err(SensiError::invalid("SSB/SST needs n >= 2 and r >= 2"));
    }
    let d = sampler.dim();
    if model.dim() != d {
        return Err(SensiError::LengthMismatch {
            expected: model.dim(),
            got: d,
        });
    }
    let groups: Vec<Vec<f64>> = par::map_range(n, |j| {
        let mut rng = rng::child(seed, j as u64);
        let xi = sampler.draw_marginal(&mut rng);
        let mut x = vec![0.0; d];
        (0..r)
            .map(|_| {
                sampler.complete(xi, &mut rng, &mut x);
                model.eval(&x)
            })
            .collect()
    });
    let grand = groups.iter().flatten().sum::<f64>() / (n * r) as f64;
    let ssb = r as f64
        * groups
            .iter()
            .map(|g| (g.iter().sum::<f64>() / r as f64 - grand).powi(2))
            .sum::<f64>();
    let sst = groups
        .iter()
        .flatten()
        .map(|v| (v - grand).powi(2))
        .sum::<f64>();
    if !(sst > 0.0) {
        return Err(SensiError::DegenerateOutput);
    }
    Ok(ssb / sst)
}

/// Closed-form index of the pair `(X₂, X₃)` in the additive Gaussian model.
pub fn jacques_index_analytic(rho: f64, sigma: f64) -> Result<f64> {
    let d = 2.0 + sigma * sigma + 2.0 * rho * sigma;
    if !(d > 0.0) {
        return Err(SensiError::NonPositiveDenominator(d));
    }
    Ok((1.0 + sigma * sigma + 2.0 * rho * sigma) / d)
}

/// One replication of a model study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub report: SensitivityReport,
}

/// Repeats the estimation on fresh draws from `model`'s input law:
/// replicate `k` draws its joint sample from seed `derive(seed, 2k)` and its
/// tilde sample from `derive(seed, 2k+1)`. Returns the replicates and the
/// number of model evaluations made.
pub fn model_study(
    model: &ModelFunction,
    n: usize,
    n_prime: usize,
    reps: usize,
    opts: &EstimationOptions,
    seed: u64,
) -> Result<(Vec<StudyReplicate>, usize)> {
    let runs = par::try_map_range(reps, |k| {
        let joint_seed = rng::derive_seed(seed, 2 * k as u64);
        let tilde_seed = rng::derive_seed(seed, 2 * k as u64 + 1);
        let x = model.law().sample(n, joint_seed)?;
        let y = model.eval_rows(&x)?;
        let joint = JointSample::new(x, y)?;
        let tilde = TildeSample::new(model.law().sample(n_prime, tilde_seed)?)?;
        let opts = EstimationOptions {
            seed: rng::derive_seed(joint_seed, u64::MAX),
            ..opts.clone()
        };
        Ok(StudyReplicate {
            replicate: k,
            seed: joint_seed,
            report: estimate_indices(&joint, &tilde, &opts)?,
        })
    })?;
    Ok((runs, reps * n))
}

/// Column means of per-replicate index vectors.
pub fn mean_indices<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut total: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for row in rows {
        if total.is_empty() {
            total = vec![0.0; row.len()];
        }
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
        count += 1;
    }
    total.iter().map(|t| t / count.max(1) as f64).collect()
}
