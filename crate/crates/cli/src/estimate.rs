use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sensi::bandwidth::GridSpec;
use sensi::indices::{estimate_indices, mean_indices, model_study, percentile_interval, Interval};
use sensi::models::{additive_gaussian, hetero_sine, peak_valley};
use sensi::sampling::{regular_grid, GaussianSpec};
use sensi::{
    rng, AnalyticIndices, EstimationOptions, InputLaw, JointSample, LocalFitConfig, Marginal,
    ModelFunction, SensiError, SensitivityReport, TildeSample, VarianceFitConfig,
};

use crate::args::{Builtin, Design, EstimateArgs};
use crate::error::{CliError, CliResult};
use crate::table::Table;

const DEFAULT_N: usize = 100;
const DEFAULT_NPRIME: usize = 1000;

/// Output of a built-in model run: one report per replicate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: u32,
    pub model: String,
    pub design: String,
    pub n: usize,
    pub n_prime: usize,
    pub reps: usize,
    pub seed: u64,
    /// Calls made to the model function. Tilde samples never call it.
    pub model_evaluations: usize,
    pub analytic: Vec<f64>,
    pub mean_s1: Vec<f64>,
    pub mean_s2: Vec<f64>,
    pub replicates: Vec<SensitivityReport>,
}

type Estimator = fn(&sensi::InputIndex) -> f64;

fn options(args: &EstimateArgs, bootstrap_reps: usize) -> EstimationOptions {
    let policy = match args.h_grid {
        Some((min, max, count)) => {
            args.bandwidth
                .clone()
                .with_grid(GridSpec::Geometric { min, max, count })
        }
        None => args.bandwidth.clone(),
    };
    EstimationOptions {
        mean: LocalFitConfig {
            order: args.order_p,
            kernel: args.kernel1,
            bandwidth: policy.clone(),
            ..LocalFitConfig::default()
        },
        variance: VarianceFitConfig {
            order: args.order_q,
            kernel: args.kernel2,
            bandwidth: policy,
            ..VarianceFitConfig::default()
        },
        bootstrap_reps,
        ci_level: args.ci,
        seed: args.seed,
        freeze_bandwidths: false,
    }
}

pub fn run(args: &EstimateArgs) -> CliResult<()> {
    if !(args.ci > 0.0 && args.ci < 1.0) {
        return Err(CliError::malformed(format!(
            "--ci must lie in (0, 1), got {}",
            args.ci
        )));
    }
    if let Some((min, max, count)) = args.h_grid {
        GridSpec::Geometric { min, max, count }.build(&[0.0, 1.0], args.order_p)?;
    }
    match (&args.model, &args.input) {
        (Some(model), None) => run_model(args, *model),
        (None, Some(input)) => run_data(args, input),
        (None, None) => Err(CliError::malformed(
            "pass either --input <csv> or --model builtin:<name>",
        )),
        (Some(_), Some(_)) => Err(CliError::malformed(
            "--input and --model are mutually exclusive",
        )),
    }
}

fn run_data(args: &EstimateArgs, input: &Path) -> CliResult<()> {
    if args.n.is_some() || args.design != Design::Random {
        return Err(CliError::malformed(
            "--n and --design apply to built-in models only",
        ));
    }
    let table = Table::read(input)?;
    let y_col = match &args.y_col {
        Some(key) => table.resolve(key)?,
        None => table.headers().len() - 1,
    };
    let x_cols = match &args.x_cols {
        Some(spec) => table.resolve_list(spec)?,
        None => (0..table.headers().len()).filter(|&c| c != y_col).collect(),
    };
    if x_cols.contains(&y_col) {
        return Err(CliError::malformed(format!(
            "column '{}' selected as both input and output",
            table.headers()[y_col]
        )));
    }
    if x_cols.is_empty() {
        return Err(CliError::malformed(format!(
            "{}: no input columns",
            input.display()
        )));
    }
    let names: Vec<String> = x_cols.iter().map(|&c| table.headers()[c].clone()).collect();
    let joint = JointSample::new(table.matrix(&x_cols)?, table.numeric_column(y_col)?)?;

    let tilde_x = if let Some(path) = &args.tilde {
        let tilde = Table::read(path)?;
        let cols = match names
            .iter()
            .map(|n| tilde.resolve(n))
            .collect::<CliResult<Vec<_>>>()
        {
            Ok(cols) => cols,
            Err(_) if tilde.headers().len() == names.len() => (0..names.len()).collect(),
            Err(e) => return Err(e),
        };
        tilde.matrix(&cols)?
    } else if let Some(path) = &args.gaussian {
        let spec = GaussianSpec::load(path)?;
        if spec.dim() != names.len() {
            return Err(CliError::malformed(format!(
                "{}: law has dimension {}, joint sample has {} inputs",
                path.display(),
                spec.dim(),
                names.len()
            )));
        }
        InputLaw::Gaussian { spec }.sample(
            args.nprime.unwrap_or(DEFAULT_NPRIME),
            rng::derive_seed(args.seed, 1),
        )?
    } else {
        return Err(CliError::malformed(
            "no tilde sample: pass --tilde <csv> or --gaussian <spec>",
        ));
    };
    let tilde = TildeSample::new(tilde_x)?;
    let opts = options(args, args.reps.unwrap_or(0));
    let report = estimate_indices(&joint, &tilde, &opts).map_err(|e| named(e, &names))?;
    log::info!(
        "estimated {} inputs from n = {}, n' = {}",
        names.len(),
        joint.len(),
        tilde.len()
    );

    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("report.json"), report.to_json())?;
    write_indices(&args.out_dir, &names, &report_rows(&report))?;
    if !report.bootstrap.is_empty() {
        let rows = report
            .bootstrap
            .iter()
            .flat_map(|b| (0..names.len()).map(move |i| (b.replicate, i, b.s1[i], b.s2[i])));
        write_replicates(&args.out_dir, &names, rows)?;
    }
    Ok(())
}

/// Replaces the positional input in an error with its column name.
fn named(e: SensiError, names: &[String]) -> CliError {
    match &e {
        SensiError::InInput { input, source } => {
            let msg = format!("input '{}': {source}", names[*input]);
            CliError::from(e.clone()).with_message(msg)
        }
        _ => e.into(),
    }
}

fn builtin(model: Builtin) -> CliResult<(ModelFunction, AnalyticIndices)> {
    Ok(match model {
        Builtin::Additive { rho, sigma } => additive_gaussian(rho, sigma)?,
        Builtin::PeakValley => peak_valley(),
        Builtin::HeteroSine => hetero_sine(),
    })
}

/// Wraps `model` so every evaluation bumps `counter`.
fn counted(model: &ModelFunction, counter: &Arc<AtomicUsize>) -> ModelFunction {
    let inner = model.clone();
    let counter = Arc::clone(counter);
    ModelFunction::new(model.name(), model.law().clone(), move |x: &[f64]| {
        counter.fetch_add(1, Ordering::Relaxed);
        inner.eval(x)
    })
}

fn uniform_box(law: &InputLaw) -> Option<(Vec<f64>, Vec<f64>)> {
    match law {
        InputLaw::Independent { marginals } => marginals
            .iter()
            .map(|m| match *m {
                Marginal::Uniform { low, high } => Some((low, high)),
                Marginal::Normal { .. } => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|b| b.into_iter().unzip()),
        InputLaw::Gaussian { .. } => None,
    }
}

fn run_model(args: &EstimateArgs, which: Builtin) -> CliResult<()> {
    if args.tilde.is_some() || args.x_cols.is_some() || args.y_col.is_some() {
        return Err(CliError::malformed(
            "--tilde, --x-cols and --y-col apply to CSV input only",
        ));
    }
    let (base, analytic) = builtin(which)?;
    let counter = Arc::new(AtomicUsize::new(0));
    let model = counted(&base, &counter);
    let reps = args.reps.unwrap_or(1).max(1);
    let n_prime = args.nprime.unwrap_or(DEFAULT_NPRIME);
    let opts = options(args, 0);

    let (design, n, reports) = match args.design {
        Design::Random => {
            let n = args.n.unwrap_or(DEFAULT_N);
            let (runs, _) = model_study(&model, n, n_prime, reps, &opts, args.seed)?;
            (
                "random".to_string(),
                n,
                runs.into_iter().map(|r| r.report).collect::<Vec<_>>(),
            )
        }
        Design::Grid(points) => {
            if args.n.is_some() {
                return Err(CliError::malformed(
                    "--n is implied by --design grid:<points>",
                ));
            }
            let (low, high) = uniform_box(model.law()).ok_or_else(|| {
                CliError::malformed(format!(
                    "grid design needs independent uniform inputs; {} has others",
                    model.name()
                ))
            })?;
            let x = regular_grid(&low, &high, points)?;
            let joint = JointSample::new(x.clone(), model.eval_rows(&x)?)?;
            let reports = (0..reps)
                .map(|k| {
                    let tilde_seed = rng::derive_seed(args.seed, 2 * k as u64 + 1);
                    let tilde = TildeSample::new(model.law().sample(n_prime, tilde_seed)?)?;
                    let opts = EstimationOptions {
                        seed: rng::derive_seed(tilde_seed, u64::MAX),
                        ..opts.clone()
                    };
                    estimate_indices(&joint, &tilde, &opts)
                })
                .collect::<sensi::Result<Vec<_>>>()?;
            (format!("grid:{points}"), joint.len(), reports)
        }
    };
    let evaluations = counter.load(Ordering::Relaxed);
    log::info!("{} model evaluations for {reps} replicate(s)", evaluations);

    let s1: Vec<Vec<f64>> = reports.iter().map(SensitivityReport::s1).collect();
    let s2: Vec<Vec<f64>> = reports.iter().map(SensitivityReport::s2).collect();
    let study = StudyReport {
        schema: sensi::indices::REPORT_SCHEMA,
        model: model.name().to_string(),
        design,
        n,
        n_prime,
        reps,
        seed: args.seed,
        model_evaluations: evaluations,
        analytic: analytic.s.clone(),
        mean_s1: mean_indices(s1.iter().map(Vec::as_slice)),
        mean_s2: mean_indices(s2.iter().map(Vec::as_slice)),
        replicates: reports,
    };
    let names: Vec<String> = (1..=model.dim()).map(|i| format!("x{i}")).collect();

    fs::create_dir_all(&args.out_dir)?;
    let json = serde_json::to_string_pretty(&study).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(args.out_dir.join("report.json"), json)?;
    write_indices(&args.out_dir, &names, &study_rows(&study, args.ci))?;
    let rows = study.replicates.iter().enumerate().flat_map(|(k, r)| {
        r.indices
            .iter()
            .enumerate()
            .map(move |(i, idx)| (k, i, idx.s1_raw, idx.s2_raw))
    });
    write_replicates(&args.out_dir, &names, rows)?;
    Ok(())
}

/// One line of indices.csv.
struct IndexRow {
    input: usize,
    estimator: &'static str,
    value: f64,
    ci: Option<Interval>,
}

fn clip_interval(ci: Option<Interval>) -> Option<Interval> {
    ci.map(|c| Interval {
        low: c.low.clamp(0.0, 1.0),
        high: c.high.clamp(0.0, 1.0),
    })
}

fn report_rows(report: &SensitivityReport) -> Vec<IndexRow> {
    report
        .indices
        .iter()
        .enumerate()
        .flat_map(|(i, idx)| {
            [
                IndexRow {
                    input: i,
                    estimator: "S1",
                    value: idx.s1_raw,
                    ci: idx.s1_ci,
                },
                IndexRow {
                    input: i,
                    estimator: "S2",
                    value: idx.s2_raw,
                    ci: idx.s2_ci,
                },
                IndexRow {
                    input: i,
                    estimator: "S1_clipped",
                    value: idx.s1_clipped,
                    ci: clip_interval(idx.s1_ci),
                },
                IndexRow {
                    input: i,
                    estimator: "S2_clipped",
                    value: idx.s2_clipped,
                    ci: clip_interval(idx.s2_ci),
                },
            ]
        })
        .collect()
}

/// Replicate means with percentile intervals across replicates.
fn study_rows(study: &StudyReport, level: f64) -> Vec<IndexRow> {
    let column = |i: usize, f: fn(&sensi::InputIndex) -> f64| -> (f64, Option<Interval>) {
        let values: Vec<f64> = study.replicates.iter().map(|r| f(&r.indices[i])).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (mean, percentile_interval(values.into_iter(), level))
    };
    let mut rows = Vec::new();
    for i in 0..study.analytic.len() {
        let estimators: [(&str, Estimator); 4] = [
            ("S1", |x| x.s1_raw),
            ("S2", |x| x.s2_raw),
            ("S1_clipped", |x| x.s1_clipped),
            ("S2_clipped", |x| x.s2_clipped),
        ];
        for (estimator, f) in estimators {
            let (value, ci) = column(i, f);
            rows.push(IndexRow {
                input: i,
                estimator,
                value,
                ci,
            });
        }
        rows.push(IndexRow {
            input: i,
            estimator: "analytic",
            value: study.analytic[i],
            ci: None,
        });
    }
    rows
}

fn write_indices(dir: &Path, names: &[String], rows: &[IndexRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("indices.csv"))
        .map_err(|e| CliError::Other(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let result = (|| {
        w.write_record(["input", "estimator", "value", "ci_low", "ci_high"])?;
        for r in rows {
            w.write_record([
                names[r.input].clone(),
                r.estimator.to_string(),
                r.value.to_string(),
                opt(r.ci.map(|c| c.low)),
                opt(r.ci.map(|c| c.high)),
            ])?;
        }
        w.flush()?;
        Ok::<(), std::io::Error>(())
    })();
    result.map_err(CliError::from)
}

fn write_replicates(
    dir: &Path,
    names: &[String],
    rows: impl Iterator<Item = (usize, usize, f64, f64)>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))
        .map_err(|e| CliError::Other(e.to_string()))?;
    let result = (|| {
        w.write_record(["replicate", "input", "S1", "S2"])?;
        for (k, i, s1, s2) in rows {
            w.write_record([
                k.to_string(),
                names[i].clone(),
                s1.to_string(),
                s2.to_string(),
            ])?;
        }
        w.flush()?;
        Ok::<(), std::io::Error>(())
    })();
    result.map_err(CliError::from)
}
