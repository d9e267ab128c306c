//! Data-driven bandwidth selection.
//!
//! Two selectors over a geometric grid:
//!
//! * leave-one-out cross-validation, minimising `Σ (y_i − m̂₋ᵢ(x_i))²`;
//! * an empirical-bias selector (EBBS). For each evaluation point the fitted
//!   value is tracked across neighbouring bandwidths of a refined grid and
//!   regressed on `h²` (and `h³` when `bias_order = 2`); the slope terms give the squared
//!   bias, the smoother weights times a pilot residual variance give the
//!   variance. The averaged squared bias is made nondecreasing in `h`, and
//!   the grid value with the smallest average estimated MSE wins.
//!
//! Both selectors break near-ties toward the larger bandwidth.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SensiError};
use crate::kernel::Kernel;
use crate::locfit::{LocalFitConfig, LocalPolynomial, RegressionSample};
use crate::par;

pub const DEFAULT_GRID_SIZE: usize = 12;
pub const DEFAULT_EBBS_WINDOW: usize = 5;
pub const DEFAULT_BIAS_ORDER: usize = 1;

/// Upper bound on the number of evaluation points EBBS averages over when the
/// caller does not supply them.
pub const EBBS_EVAL_POINTS: usize = 50;

/// The bias curve is traced on a grid this many times finer than the
/// selection grid, so window neighbours are close in `h`.
pub const EBBS_REFINE: usize = 3;

// relative slack for treating two criterion values as tied
const TIE_REL: f64 = 1e-10;
const TIE_ABS: f64 = 1e-12;

/// Strictly increasing, positive candidate bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid(Vec<f64>);

impl BandwidthGrid {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SensiError::EmptyGrid);
        }
        if values.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(SensiError::InvalidGrid(
                "bandwidths must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SensiError::InvalidGrid(
                "bandwidths must be strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// `count` geometrically spaced values from `min` to `max`.
    pub fn geometric(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(SensiError::EmptyGrid);
        }
        if !(min > 0.0) || !(max >= min) || !max.is_finite() {
            return Err(SensiError::InvalidGrid(format!(
                "need 0 < min <= max, got {min}, {max}"
            )));
        }
        if count == 1 {
            return Self::from_values(vec![max]);
        }
        let ratio = (max / min).ln() / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|k| min * (ratio * k as f64).exp()).collect();
        values[count - 1] = max;
        Self::from_values(values)
    }

    /// Default grid for a predictor sample: the narrowest bandwidth covers
    /// `order + 2` distinct points around the median, the widest equals the
    /// range of x.
    pub fn for_sample(x: &[f64], order: usize, count: usize) -> Result<Self> {
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        let median = median_sorted(&distinct);
        let range = distinct[distinct.len() - 1] - distinct[0];
        distinct.dedup();
        let needed = order + 2;
        if distinct.len() < needed {
            return Err(SensiError::InvalidGrid(format!(
                "need at least {needed} distinct predictor values, got {}",
                distinct.len()
            )));
        }
        let mut dist: Vec<f64> = distinct.iter().map(|v| (v - median).abs()).collect();
        dist.sort_by(f64::total_cmp);
        let mut h_min = 1.05 * dist[needed - 1];
        if !(h_min > 0.0) {
            h_min = range * 1e-3;
        }
        h_min = h_min.min(0.5 * range);
        Self::geometric(h_min, range, count)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_values(self.0.iter().map(|h| h * c).collect())
    }
}

/// How a grid is built for a given sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Auto { count: usize },
    Geometric { min: f64, max: f64, count: usize },
    Values { values: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            count: DEFAULT_GRID_SIZE,
        }
    }
}

impl GridSpec {
    pub fn build(&self, x: &[f64], order: usize) -> Result<BandwidthGrid> {
        match self {
            GridSpec::Auto { count } => BandwidthGrid::for_sample(x, order, *count),
            GridSpec::Geometric { min, max, count } => BandwidthGrid::geometric(*min, *max, *count),
            GridSpec::Values { values } => BandwidthGrid::from_values(values.clone()),
        }
    }
}

/// Bandwidth choice for one smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BandwidthPolicy {
    Fixed {
        h: f64,
    },
    Loocv {
        grid: GridSpec,
    },
    Ebbs {
        grid: GridSpec,
        bias_order: usize,
        window: usize,
    },
}

impl BandwidthPolicy {
    pub fn fixed(h: f64) -> Self {
        BandwidthPolicy::Fixed { h }
    }

    pub fn loocv() -> Self {
        BandwidthPolicy::Loocv {
            grid: GridSpec::default(),
        }
    }

    pub fn ebbs() -> Self {
        BandwidthPolicy::Ebbs {
            grid: GridSpec::default(),
            bias_order: DEFAULT_BIAS_ORDER,
            window: DEFAULT_EBBS_WINDOW,
        }
    }

    /// Replaces the grid of a data-driven policy; fixed bandwidths are unchanged.
    pub fn with_grid(self, spec: GridSpec) -> Self {
        match self {
            BandwidthPolicy::Fixed { h } => BandwidthPolicy::Fixed { h },
            BandwidthPolicy::Loocv { .. } => BandwidthPolicy::Loocv { grid: spec },
            BandwidthPolicy::Ebbs {
                bias_order, window, ..
            } => BandwidthPolicy::Ebbs {
                grid: spec,
                bias_order,
                window,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BandwidthPolicy::Fixed { h } if !(*h > 0.0) || !h.is_finite() => Err(
                SensiError::invalid(format!("fixed bandwidth must be positive, got {h}")),
            ),
            BandwidthPolicy::Ebbs {
                bias_order, window, ..
            } => {
                if !(1..=2).contains(bias_order) {
                    return Err(SensiError::invalid("EBBS bias_order must be 1 or 2"));
                }
                if *window < bias_order + 2 {
                    return Err(SensiError::invalid(
                        "EBBS window too small for the bias model",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        Self::loocv()
    }
}

impl fmt::Display for BandwidthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthPolicy::Fixed { h } => write!(f, "fixed:{h}"),
            BandwidthPolicy::Loocv { .. } => f.write_str("loocv"),
            BandwidthPolicy::Ebbs { .. } => f.write_str("ebbs"),
        }
    }
}

impl FromStr for BandwidthPolicy {
    type Err = SensiError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "loocv" => return Ok(Self::loocv()),
            "ebbs" => return Ok(Self::ebbs()),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let h: f64 = v
                .trim()
                .parse()
                .map_err(|_| SensiError::invalid(format!("bad fixed bandwidth '{v}'")))?;
            let policy = Self::fixed(h);
            policy.validate()?;
            return Ok(policy);
        }
        Err(SensiError::invalid(format!(
            "unknown bandwidth policy '{s}' (expected loocv, ebbs or fixed:<h>)"
        )))
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Empirical quantiles of `x` used as EBBS evaluation points.
pub fn evaluation_points(x: &[f64], max_points: usize) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() <= max_points {
        return sorted;
    }
    let n = sorted.len();
    (0..max_points)
        .map(|k| {
            let pos = (k as f64 + 0.5) / max_points as f64 * (n - 1) as f64;
            sorted[pos.round() as usize]
        })
        .collect()
}

/// Index of the smallest finite criterion value, preferring the larger
/// bandwidth among values within the tie tolerance.
fn pick(scores: &[f64], scale: f64) -> Option<usize> {
    let best = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let slack = best.abs() * TIE_REL + TIE_ABS * scale;
    scores
        .iter()
        .rposition(|s| s.is_finite() && *s <= best + slack)
}

fn centered_ss(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Leave-one-out cross-validation score for every grid bandwidth.
///
/// Returns the score vector (`+∞` where some held-out point had no local
/// data) and the last such failure.
fn loocv_scores(engine: &LocalPolynomial, grid: &BandwidthGrid) -> (Vec<f64>, Option<(f64, f64)>) {
    let xs = engine.sorted_x();
    let ys = engine.sorted_y();
    let results: Vec<std::result::Result<f64, (f64, f64)>> = par::map_slice(grid.values(), |&h| {
        let mut total = 0.0;
        for k in 0..xs.len() {
            match engine.mhat_without(xs[k], h, k) {
                Ok(m) => total += (ys[k] - m).powi(2),
                Err(_) => return Err((h, xs[k])),
            }
        }
        Ok(total)
    });
    let mut failure = None;
    let scores = results
        .into_iter()
        .map(|r| match r {
            Ok(v) => v,
            Err(f) => {
                failure = Some(f);
                f64::INFINITY
            }
        })
        .collect();
    (scores, failure)
}

pub(crate) fn loocv_with_engine(engine: &LocalPolynomial, grid: &BandwidthGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(SensiError::EmptyGrid);
    }
    let (scores, failure) = loocv_scores(engine, grid);
    let scale = centered_ss(engine.sorted_y()) + f64::MIN_POSITIVE;
    match pick(&scores, scale) {
        Some(k) => Ok(grid.values()[k]),
        None => {
            let (h, x0) = failure.unwrap_or((f64::NAN, f64::NAN));
            Err(SensiError::NoFeasibleBandwidth { h, x0 })
        }
    }
}

/// Leave-one-out cross-validated bandwidth.
pub fn select_loocv(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    grid: &BandwidthGrid,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(SensiError::EmptyGrid);
    }
    config.validate()?;
    if sample.len() < config.order + 3 {
        return Err(SensiError::invalid(format!(
            "LOOCV needs n >= p + 3 = {}, got {}",
            config.order + 3,
            sample.len()
        )));
    }
    loocv_with_engine(&LocalPolynomial::from_config(sample, config), grid)
}

/// Tuning of the empirical-bias selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbbsParams {
    pub bias_order: usize,
    pub window: usize,
}

impl Default for EbbsParams {
    fn default() -> Self {
        Self {
            bias_order: DEFAULT_BIAS_ORDER,
            window: DEFAULT_EBBS_WINDOW,
        }
    }
}

impl EbbsParams {
    fn from_policy(policy: &BandwidthPolicy) -> Self {
        match policy {
            BandwidthPolicy::Ebbs {
                bias_order, window, ..
            } => Self {
                bias_order: *bias_order,
                window: *window,
            },
            _ => Self::default(),
        }
    }
}

/// Residual variance from a fit at bandwidth `h`, normalised by
/// `n − 2 tr(L) + tr(LᵀL)`.
fn pilot_variance(engine: &LocalPolynomial, h: f64) -> Result<f64> {
    let n = engine.len();
    let ys = engine.sorted_y();
    let parts = par::try_map_range(n, |k| engine.fit_at_sample_point(k, h))?;
    let mut rss = 0.0;
    let mut trace = 0.0;
    let mut trace_sq = 0.0;
    for (k, (m, lkk, norm)) in parts.into_iter().enumerate() {
        rss += (ys[k] - m).powi(2);
        trace += lkk;
        trace_sq += norm;
    }
    let df = n as f64 - 2.0 * trace + trace_sq;
    Ok(if df > 0.5 { rss / df } else { rss / n as f64 })
}

/// Estimated bias at grid position `k` from the fitted values at the
/// neighbouring bandwidths.
fn empirical_bias(fits: &[f64], grid: &[f64], k: usize, params: EbbsParams) -> Option<f64> {
    let len = grid.len();
    let width = params.window.min(len);
    let start = k.saturating_sub(width / 2).min(len - width);
    let hk = grid[k];
    let cols = params.bias_order + 1;
    let mut design = Vec::with_capacity(width * cols);
    let mut rhs = Vec::with_capacity(width);
    for j in start..start + width {
        if !fits[j].is_finite() {
            continue;
        }
        let t = grid[j] / hk;
        design.push(1.0);
        design.push(t * t);
        if params.bias_order == 2 {
            design.push(t * t * t);
        }
        rhs.push(fits[j]);
    }
    let rows = rhs.len();
    if rows < params.bias_order + 2 {
        return None;
    }
    let a = DMatrix::from_row_slice(rows, cols, &design);
    let b = DVector::from_vec(rhs);
    let coef = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some(coef.iter().skip(1).sum())
}

/// Empirical-bias bandwidth over `grid`, averaging the estimated MSE over `xs`.
pub fn select_ebbs(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    grid: &BandwidthGrid,
    xs: &[f64],
) -> Result<f64> {
    select_ebbs_with(
        sample,
        config,
        grid,
        xs,
        EbbsParams::from_policy(&config.bandwidth),
    )
}

pub fn select_ebbs_with(
    sample: &RegressionSample,
    config: &LocalFitConfig,
    grid: &BandwidthGrid,
    xs: &[f64],
    params: EbbsParams,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(SensiError::EmptyGrid);
    }
    config.validate()?;
    if grid.len() < params.bias_order + 2 {
        return Err(SensiError::InvalidGrid(format!(
            "EBBS needs at least {} grid values, got {}",
            params.bias_order + 2,
            grid.len()
        )));
    }
    if xs.is_empty() {
        return Err(SensiError::invalid(
            "EBBS needs at least one evaluation point",
        ));
    }
    let engine = LocalPolynomial::from_config(sample, config);
    ebbs_with_engine(&engine, grid, xs, params)
}

/// Geometric subdivision of `hs` with `steps` intervals between neighbours.
fn refine(hs: &[f64], steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((hs.len() - 1) * steps + 1);
    for pair in hs.windows(2) {
        let ratio = (pair[1] / pair[0]).powf(1.0 / steps as f64);
        out.extend((0..steps).map(|j| pair[0] * ratio.powi(j as i32)));
    }
    out.push(hs[hs.len() - 1]);
    out
}

pub(crate) fn ebbs_with_engine(
    engine: &LocalPolynomial,
    grid: &BandwidthGrid,
    xs: &[f64],
    params: EbbsParams,
) -> Result<f64> {
    let hs = grid.values();
    let pilot_h = loocv_with_engine(engine, grid).unwrap_or(hs[hs.len() - 1]);
    let pilot = pilot_variance(engine, pilot_h)?;

    let fine = refine(hs, EBBS_REFINE);
    // per evaluation point: fitted value and Σl² at every refined bandwidth
    let per_point: Vec<Vec<(f64, f64)>> = par::map_slice(xs, |&x0| {
        fine.iter()
            .map(|&h| {
                engine
                    .mhat_and_weight_norm(x0, h)
                    .unwrap_or((f64::NAN, f64::NAN))
            })
            .collect()
    });

    let mut bias2 = vec![0.0f64; hs.len()];
    let mut variance = vec![0.0f64; hs.len()];
    let mut failure = None;
    for (x0, row) in xs.iter().zip(&per_point) {
        let fits: Vec<f64> = row.iter().map(|p| p.0).collect();
        for k in 0..hs.len() {
            if !bias2[k].is_finite() {
                continue;
            }
            let (fit, norm) = row[k * EBBS_REFINE];
            let bias = if fit.is_finite() {
                empirical_bias(&fits, &fine, k * EBBS_REFINE, params)
            } else {
                None
            };
            match bias {
                Some(b) => {
                    bias2[k] += b * b;
                    variance[k] += pilot * norm;
                }
                None => {
                    bias2[k] = f64::INFINITY;
                    failure = Some((hs[k], *x0));
                }
            }
        }
    }
    // Once the fit saturates toward a global polynomial the neighbouring
    // fits stop moving and the local slope reads as zero bias. Integrated
    // squared bias only grows with h, so carry the running maximum.
    let mut floor = 0.0f64;
    let scores: Vec<f64> = bias2
        .iter()
        .zip(&variance)
        .map(|(&b, &v)| {
            if b.is_finite() {
                floor = floor.max(b);
                floor + v
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let ys = engine.sorted_y();
    let scale = ys.iter().map(|v| v * v).sum::<f64>() / ys.len() as f64 * xs.len() as f64
        + f64::MIN_POSITIVE;
    match pick(&scores, scale) {
        Some(k) => Ok(hs[k]),
        None => {
            let (h, x0) = failure.unwrap_or((f64::NAN, f64::NAN));
            Err(SensiError::NoFeasibleBandwidth { h, x0 })
        }
    }
}

/// Turns a policy into a bandwidth for `sample`.
pub fn resolve(
    policy: &BandwidthPolicy,
    sample: &RegressionSample,
    order: usize,
    kernel: Kernel,
    ridge_epsilon: f64,
) -> Result<f64> {
    policy.validate()?;
    match policy {
        BandwidthPolicy::Fixed { h } => Ok(*h),
        BandwidthPolicy::Loocv { grid } => {
            let grid = grid.build(sample.x(), order)?;
            let engine = LocalPolynomial::new(sample, order, kernel, ridge_epsilon);
            loocv_with_engine(&engine, &grid)
        }
        BandwidthPolicy::Ebbs { grid, .. } => {
            let params = EbbsParams::from_policy(policy);
            let grid = grid.build(sample.x(), order)?;
            if grid.len() < params.bias_order + 2 {
                return Err(SensiError::InvalidGrid("EBBS grid too short".into()));
            }
            let xs = evaluation_points(sample.x(), EBBS_EVAL_POINTS);
            let engine = LocalPolynomial::new(sample, order, kernel, ridge_epsilon);
            ebbs_with_engine(&engine, &grid, &xs, params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn config(order: usize) -> LocalFitConfig {
        LocalFitConfig {
            order,
            ..LocalFitConfig::default()
        }
    }

    fn uniform_x(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::master(seed);
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn grid_construction() {
        let g = BandwidthGrid::geometric(0.1, 1.0, 3).unwrap();
        assert!((g.values()[1] - 0.1f64.sqrt() * 1.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(g.values()[2], 1.0);
        assert_eq!(
            BandwidthGrid::from_values(vec![]),
            Err(SensiError::EmptyGrid)
        );
        assert!(BandwidthGrid::from_values(vec![0.2, 0.1]).is_err());
        assert!(BandwidthGrid::from_values(vec![-0.2, 0.1]).is_err());
        assert!(BandwidthGrid::geometric(1.0, 0.5, 4).is_err());
    }

    #[test]
    fn auto_grid_covers_enough_points() {
        let x = uniform_x(200, 1);
        for order in 0..=3 {
            let g = BandwidthGrid::for_sample(&x, order, 12).unwrap();
            assert_eq!(g.len(), 12);
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            let med = median_sorted(&sorted);
            let h0 = g.values()[0];
            let covered = x.iter().filter(|v| (*v - med).abs() < h0).count();
            assert!(covered >= order + 2);
            let range = sorted[199] - sorted[0];
            assert!((g.values()[11] - range).abs() < 1e-12);
        }
        assert!(BandwidthGrid::for_sample(&[1.0, 1.0, 2.0], 1, 12).is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "loocv".parse::<BandwidthPolicy>().unwrap(),
            BandwidthPolicy::loocv()
        );
        assert_eq!(
            "EBBS".parse::<BandwidthPolicy>().unwrap(),
            BandwidthPolicy::ebbs()
        );
        assert_eq!(
            "fixed:0.25".parse::<BandwidthPolicy>().unwrap(),
            BandwidthPolicy::fixed(0.25)
        );
        assert!("fixed:-1".parse::<BandwidthPolicy>().is_err());
        assert!("silverman".parse::<BandwidthPolicy>().is_err());
    }

    #[test]
    fn loocv_flat_on_linear_data_picks_largest() {
        let x = uniform_x(40, 2);
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let s = RegressionSample::new(x.clone(), y).unwrap();
        let grid = BandwidthGrid::for_sample(&x, 1, 12).unwrap();
        let h = select_loocv(&s, &config(1), &grid).unwrap();
        assert_eq!(h, *grid.values().last().unwrap());
    }

    #[test]
    fn loocv_rejects_empty_grid_and_small_samples() {
        let s = RegressionSample::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0]).unwrap();
        let empty = BandwidthGrid(vec![]);
        assert_eq!(
            select_loocv(&s, &config(1), &empty),
            Err(SensiError::EmptyGrid)
        );
        let grid = BandwidthGrid::geometric(0.5, 2.0, 4).unwrap();
        assert!(select_loocv(&s, &config(1), &grid).is_err());
    }

    #[test]
    fn loocv_reports_infeasible_grid() {
        // two clusters far apart; an Epanechnikov window this narrow leaves
        // the held-out boundary points with nobody nearby
        let x = vec![0.0, 0.01, 0.02, 0.03, 10.0];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let s = RegressionSample::new(x, y).unwrap();
        let cfg = LocalFitConfig {
            order: 0,
            kernel: Kernel::Epanechnikov,
            ..LocalFitConfig::default()
        };
        let grid = BandwidthGrid::geometric(0.05, 0.2, 4).unwrap();
        let err = select_loocv(&s, &cfg, &grid).unwrap_err();
        assert!(matches!(err, SensiError::NoFeasibleBandwidth { x0, .. } if x0 == 10.0));
    }

    #[test]
    fn ebbs_reproduction_and_constant_response_pick_largest() {
        let x = uniform_x(60, 3);
        let quad: Vec<f64> = x.iter().map(|v| 1.0 + v - 4.0 * v * v).collect();
        let s = RegressionSample::new(x.clone(), quad).unwrap();
        let grid = BandwidthGrid::for_sample(&x, 2, 12).unwrap();
        let xs = evaluation_points(&x, 20);
        let h = select_ebbs(&s, &config(2), &grid, &xs).unwrap();
        assert_eq!(h, *grid.values().last().unwrap());

        let flat = RegressionSample::new(x.clone(), vec![2.5; 60]).unwrap();
        let grid1 = BandwidthGrid::for_sample(&x, 1, 12).unwrap();
        let h = select_ebbs(&flat, &config(1), &grid1, &xs).unwrap();
        assert_eq!(h, *grid1.values().last().unwrap());
    }

    #[test]
    fn ebbs_needs_enough_grid_points() {
        let x = uniform_x(30, 4);
        let s = RegressionSample::new(x.clone(), x.clone()).unwrap();
        let short = BandwidthGrid::geometric(0.1, 1.0, 2).unwrap();
        assert!(matches!(
            select_ebbs(&s, &config(1), &short, &x),
            Err(SensiError::InvalidGrid(_))
        ));
    }

    fn noisy_sine(n: usize, seed: u64) -> RegressionSample {
        let mut rng = crate::rng::master(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y = x
            .iter()
            .map(|&t| {
                let e: f64 = rng.sample(StandardNormal);
                (2.0 * std::f64::consts::PI * t).sin() + (0.2 + 0.1 * t) * e
            })
            .collect();
        RegressionSample::new(x, y).unwrap()
    }

    #[test]
    fn selections_are_grid_members_and_deterministic() {
        let s = noisy_sine(120, 5);
        let grid = BandwidthGrid::for_sample(s.x(), 1, 12).unwrap();
        let a = select_loocv(&s, &config(1), &grid).unwrap();
        let b = select_loocv(&s, &config(1), &grid).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(grid.values().contains(&a));
        let xs = evaluation_points(s.x(), 30);
        let e1 = select_ebbs(&s, &config(1), &grid, &xs).unwrap();
        let e2 = select_ebbs(&s, &config(1), &grid, &xs).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
        assert!(grid.values().contains(&e1));
    }

    #[test]
    fn scale_equivariance() {
        let s = noisy_sine(100, 6);
        let grid = BandwidthGrid::for_sample(s.x(), 1, 12).unwrap();
        let idx = |g: &BandwidthGrid, h: f64| g.values().iter().position(|v| *v == h).unwrap();
        for c in [2.0, 0.25, 3.7] {
            let scaled =
                RegressionSample::new(s.x().iter().map(|v| v * c).collect(), s.y().to_vec())
                    .unwrap();
            let sgrid = grid.scaled(c).unwrap();
            let a = idx(&grid, select_loocv(&s, &config(1), &grid).unwrap());
            let b = idx(&sgrid, select_loocv(&scaled, &config(1), &sgrid).unwrap());
            assert_eq!(a, b, "loocv index drift at c = {c}");

            let xs = evaluation_points(s.x(), 25);
            let sxs: Vec<f64> = xs.iter().map(|v| v * c).collect();
            let a = idx(&grid, select_ebbs(&s, &config(1), &grid, &xs).unwrap());
            let b = idx(
                &sgrid,
                select_ebbs(&scaled, &config(1), &sgrid, &sxs).unwrap(),
            );
            assert!(
                a.abs_diff(b) <= 1,
                "ebbs index drift at c = {c}: {a} vs {b}"
            );
        }
    }
}
