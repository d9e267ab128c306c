//! Input generation.
//!
//! All draws come from [`crate::rng::SensiRng`] (ChaCha8) seeded with
//! `seed_from_u64`, and standard normals from `rand_distr::StandardNormal`,
//! so a seed reproduces the same sample on every platform. Matrices are
//! `n × d` with one draw per row; rows are generated in order.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SensiError};
use crate::rng::{self, SensiRng};

/// Largest tolerated negative eigenvalue before a covariance is rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGaussianSpec {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

/// Multivariate normal law with a precomputed square-root factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussianSpec", into = "RawGaussianSpec")]
pub struct GaussianSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    projected: bool,
}

impl TryFrom<RawGaussianSpec> for GaussianSpec {
    type Error = SensiError;

    fn try_from(raw: RawGaussianSpec) -> Result<Self> {
        let d = raw.mean.len();
        if raw.cov.len() != d || raw.cov.iter().any(|row| row.len() != d) {
            return Err(SensiError::invalid(format!(
                "covariance must be {d}x{d} to match the mean vector"
            )));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| raw.cov[i][j]);
        GaussianSpec::new(DVector::from_vec(raw.mean), cov)
    }
}

impl From<GaussianSpec> for RawGaussianSpec {
    fn from(spec: GaussianSpec) -> Self {
        let d = spec.dim();
        RawGaussianSpec {
            mean: spec.mean.iter().copied().collect(),
            cov: (0..d)
                .map(|i| (0..d).map(|j| spec.cov[(i, j)]).collect())
                .collect(),
        }
    }
}

impl GaussianSpec {
    /// Validates symmetry and positive semi-definiteness. Eigenvalues in
    /// `[−1e-10, 0)` are zeroed and the matrix rebuilt (logged).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(SensiError::invalid(format!("covariance must be {d}x{d}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(SensiError::invalid("non-finite mean or covariance entry"));
        }
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(SensiError::invalid(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut cov = (&cov + cov.transpose()) * 0.5;
        if d == 0 {
            return Ok(Self {
                mean,
                factor: cov.clone(),
                cov,
                projected: false,
            });
        }
        let eig = SymmetricEigen::new(cov.clone());
        let min_eig = eig.eigenvalues.min();
        if min_eig < -PSD_TOLERANCE {
            return Err(SensiError::InvalidCovariance {
                min_eigenvalue: min_eig,
            });
        }
        let mut projected = false;
        if min_eig < 0.0 {
            log::info!("projecting covariance onto the PSD cone (smallest eigenvalue {min_eig:e})");
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            let rebuilt =
                &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            cov = (&rebuilt + rebuilt.transpose()) * 0.5;
            projected = true;
        }
        let factor = match cov.clone().cholesky() {
            Some(ch) => ch.unpack(),
            None => {
                // singular but PSD: symmetric square root via the eigenbasis
                let eig = SymmetricEigen::new(cov.clone());
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        Ok(Self {
            mean,
            cov,
            factor,
            projected,
        })
    }

    pub fn from_rows(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        RawGaussianSpec {
            mean: mean.to_vec(),
            cov: cov.to_vec(),
        }
        .try_into()
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d))
            .expect("identity is a valid covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `L` with `L Lᵀ = cov` (lower-triangular unless cov is singular).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Whether near-PSD projection was applied at construction.
    pub fn was_projected(&self) -> bool {
        self.projected
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| SensiError::invalid(format!("gaussian spec JSON: {e}")))
    }

    /// CSV layout: a header row of input names, one row with the mean, then
    /// `d` covariance rows.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = rows
            .next()
            .ok_or_else(|| SensiError::invalid("gaussian spec CSV is empty"))?;
        let d = header.split(',').count();
        let parse = |line: &str, lineno: usize| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                SensiError::invalid(format!("gaussian spec CSV line {lineno}: {e}"))
            })?;
            if vals.len() != d {
                return Err(SensiError::invalid(format!(
                    "gaussian spec CSV line {lineno}: expected {d} values, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let mean = parse(
            rows.next()
                .ok_or_else(|| SensiError::invalid("missing mean row"))?,
            2,
        )?;
        let cov: Vec<Vec<f64>> = rows
            .enumerate()
            .map(|(k, l)| parse(l, k + 3))
            .collect::<Result<_>>()?;
        Self::from_rows(&mean, &cov)
    }

    /// Loads `.json` or `.csv` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SensiError::invalid(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::from_csv_str(&text),
            _ => Self::from_json_str(&text),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Draws one vector into `out`.
    pub fn draw_into(&self, rng: &mut SensiRng, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for (i, slot) in out.iter_mut().enumerate().take(d) {
            *slot = self.mean[i] + (0..d).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>();
        }
    }
}

/// `n` draws from `spec`, one per row.
pub fn mvn_sample(spec: &GaussianSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(SensiError::invalid("sample size must be at least 1"));
    }
    let mut rng = rng::master(seed);
    Ok(mvn_sample_rng(spec, n, &mut rng))
}

pub(crate) fn mvn_sample_rng(spec: &GaussianSpec, n: usize, rng: &mut SensiRng) -> DMatrix<f64> {
    let d = spec.dim();
    let mut out = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for r in 0..n {
        spec.draw_into(rng, &mut row);
        for c in 0..d {
            out[(r, c)] = row[c];
        }
    }
    out
}

/// Law of `X₋ᵢ` given `Xᵢ = xi`.
pub fn conditional_mvn(spec: &GaussianSpec, i: usize, xi: f64) -> Result<GaussianSpec> {
    ConditionalSampler::new(spec.clone(), i)?.conditional(xi)
}

/// Draws from the Gaussian conditional law of the other inputs given input `i`.
///
/// The regression coefficients and the Schur-complement factor do not depend
/// on the conditioning value, so they are computed once.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    spec: GaussianSpec,
    index: usize,
    coef: DVector<f64>,
    schur: GaussianSpec,
}

impl ConditionalSampler {
    pub fn new(spec: GaussianSpec, index: usize) -> Result<Self> {
        let d = spec.dim();
        if index >= d {
            return Err(SensiError::invalid(format!(
                "input index {index} out of range for d = {d}"
            )));
        }
        let var_i = spec.cov[(index, index)];
        if !(var_i > 0.0) {
            return Err(SensiError::invalid(format!(
                "input {index} has degenerate variance {var_i}; cannot condition on it"
            )));
        }
        let others: Vec<usize> = (0..d).filter(|&j| j != index).collect();
        let coef = DVector::from_iterator(
            others.len(),
            others.iter().map(|&j| spec.cov[(j, index)] / var_i),
        );
        let schur_cov = DMatrix::from_fn(others.len(), others.len(), |a, b| {
            let (ja, jb) = (others[a], others[b]);
            spec.cov[(ja, jb)] - spec.cov[(ja, index)] * spec.cov[(index, jb)] / var_i
        });
        let schur_cov = (&schur_cov + schur_cov.transpose()) * 0.5;
        let schur = GaussianSpec::new(DVector::zeros(others.len()), schur_cov)?;
        Ok(Self {
            spec,
            index,
            coef,
            schur,
        })
    }

    pub fn spec(&self) -> &GaussianSpec {
        &self.spec
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn conditional_mean(&self, xi: f64) -> DVector<f64> {
        let d = self.spec.dim();
        let shift = xi - self.spec.mean[self.index];
        let mut out = DVector::zeros(d - 1);
        for (k, j) in (0..d).filter(|&j| j != self.index).enumerate() {
            out[k] = self.spec.mean[j] + self.coef[k] * shift;
        }
        out
    }

    /// Conditional law as a `(d − 1)`-dimensional spec.
    pub fn conditional(&self, xi: f64) -> Result<GaussianSpec> {
        GaussianSpec::new(self.conditional_mean(xi), self.schur.cov.clone())
    }

    /// One draw of the conditioned input from its marginal.
    pub fn draw_marginal(&self, rng: &mut SensiRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.spec.mean[self.index] + self.spec.cov[(self.index, self.index)].sqrt() * z
    }

    /// Full input vector with `X_i = xi` and the rest drawn conditionally.
    pub fn complete(&self, xi: f64, rng: &mut SensiRng, out: &mut [f64]) {
        let mean = self.conditional_mean(xi);
        let mut rest = vec![0.0; mean.len()];
        self.schur.draw_into(rng, &mut rest);
        let mut k = 0;
        for (j, slot) in out.iter_mut().enumerate() {
            if j == self.index {
                *slot = xi;
            } else {
                *slot = mean[k] + rest[k];
                k += 1;
            }
        }
    }

    /// As [`ConditionalSampler::complete`] with the standard-normal draw
    /// negated; pairs with it as an antithetic draw when fed the same state.
    pub(crate) fn complete_pair(&self, xi: f64, rng: &mut SensiRng, a: &mut [f64], b: &mut [f64]) {
        let mean = self.conditional_mean(xi);
        let m = mean.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let f = self.schur.factor();
        let mut k = 0;
        for j in 0..a.len() {
            if j == self.index {
                a[j] = xi;
                b[j] = xi;
            } else {
                let noise: f64 = (0..m).map(|c| f[(k, c)] * z[c]).sum();
                a[j] = mean[k] + noise;
                b[j] = mean[k] - noise;
                k += 1;
            }
        }
    }
}

/// One-dimensional input marginal for independent-input laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Marginal {
    fn draw(&self, rng: &mut SensiRng) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            Marginal::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    /// Maps `u ∈ [0,1]` through the quantile function (uniform only).
    fn uniform_quantile(&self, u: f64) -> Option<f64> {
        match *self {
            Marginal::Uniform { low, high } => Some(low + (high - low) * u),
            Marginal::Normal { .. } => None,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Marginal::Normal { sd, .. } => sd * sd,
        }
    }
}

/// Joint law of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputLaw {
    Gaussian { spec: GaussianSpec },
    Independent { marginals: Vec<Marginal> },
}

impl InputLaw {
    pub fn dim(&self) -> usize {
        match self {
            InputLaw::Gaussian { spec } => spec.dim(),
            InputLaw::Independent { marginals } => marginals.len(),
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.sample_rng(n, &mut rng::master(seed))
    }

    pub fn sample_rng(&self, n: usize, rng: &mut SensiRng) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(SensiError::invalid("sample size must be at least 1"));
        }
        Ok(match self {
            InputLaw::Gaussian { spec } => mvn_sample_rng(spec, n, rng),
            InputLaw::Independent { marginals } => {
                let mut out = DMatrix::zeros(n, marginals.len());
                for r in 0..n {
                    for (c, m) in marginals.iter().enumerate() {
                        out[(r, c)] = m.draw(rng);
                    }
                }
                out
            }
        })
    }

    /// Latin-hypercube draws; only defined for independent uniform marginals.
    pub fn sample_lhs(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self {
            InputLaw::Independent { marginals } => {
                let mut rng = rng::master(seed);
                let unit = lhs_unit(n, marginals.len(), &mut rng)?;
                let mut out = unit.clone();
                for (c, m) in marginals.iter().enumerate() {
                    for r in 0..n {
                        out[(r, c)] = m.uniform_quantile(unit[(r, c)]).ok_or_else(|| {
                            SensiError::invalid("Latin hypercube sampling needs uniform marginals")
                        })?;
                    }
                }
                Ok(out)
            }
            InputLaw::Gaussian { .. } => Err(SensiError::invalid(
                "Latin hypercube sampling needs independent uniform marginals",
            )),
        }
    }
}

fn lhs_unit(n: usize, d: usize, rng: &mut SensiRng) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(SensiError::invalid("sample size must be at least 1"));
    }
    let mut out = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for c in 0..d {
        strata.shuffle(rng);
        for r in 0..n {
            out[(r, c)] = (strata[r] as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    Ok(out)
}

/// Independent uniform draws on the box `[low, high]`, i.i.d. or
/// Latin-hypercube stratified.
pub fn uniform_sample(
    low: &[f64],
    high: &[f64],
    n: usize,
    seed: u64,
    lhs: bool,
) -> Result<DMatrix<f64>> {
    if low.len() != high.len() {
        return Err(SensiError::LengthMismatch {
            expected: low.len(),
            got: high.len(),
        });
    }
    if let Some(i) =
        (0..low.len()).find(|&i| !(low[i] < high[i]) || !high[i].is_finite() || !low[i].is_finite())
    {
        return Err(SensiError::invalid(format!(
            "invalid bounds for input {i}: [{}, {}]",
            low[i], high[i]
        )));
    }
    let law = InputLaw::Independent {
        marginals: low
            .iter()
            .zip(high)
            .map(|(&low, &high)| Marginal::Uniform { low, high })
            .collect(),
    };
    if lhs {
        law.sample_lhs(n, seed)
    } else {
        law.sample(n, seed)
    }
}

/// Full tensor grid with `points` equally spaced values per axis, corners
/// included. The first input varies slowest.
pub fn regular_grid(low: &[f64], high: &[f64], points: usize) -> Result<DMatrix<f64>> {
    if low.len() != high.len() {
        return Err(SensiError::LengthMismatch {
            expected: low.len(),
            got: high.len(),
        });
    }
    if points < 2 {
        return Err(SensiError::invalid(
            "a regular grid needs at least 2 points per axis",
        ));
    }
    let d = low.len();
    let total = points.pow(d as u32);
    let mut out = DMatrix::zeros(total, d);
    for r in 0..total {
        let mut rem = r;
        for c in (0..d).rev() {
            let k = rem % points;
            rem /= points;
            out[(r, c)] = low[c] + (high[c] - low[c]) * k as f64 / (points - 1) as f64;
        }
    }
    Ok(out)
}

/// Pearson correlation matrix of the columns of `x`.
pub fn sample_correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let means: Vec<f64> = (0..d).map(|c| x.column(c).sum() / n as f64).collect();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let s: f64 = (0..n)
                .map(|r| (x[(r, a)] - means[a]) * (x[(r, b)] - means[b]))
                .sum();
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    DMatrix::from_fn(d, d, |a, b| {
        cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()
    })
}

/// Bundled fixture: the 8×8 correlation matrix of the kinetic-parameter
/// example, with zero mean.
pub fn isomerization_gamma() -> GaussianSpec {
    GaussianSpec::from_json_str(include_str!("../fixtures/isomerization_gamma.json"))
        .expect("bundled fixture is valid")
}
