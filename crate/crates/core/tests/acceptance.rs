//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//! `SENSI_ACCEPTANCE=2,5` restricts the run; with `SENSI_ACCEPTANCE_STRICT`
//! set, any failure makes the process exit non-zero.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use sensi::bandwidth::BandwidthPolicy;
use sensi::indices::{estimate_indices, mean_indices, model_study, ratto_index};
use sensi::locfit::{predict_with_bandwidth, smoother_weights};
use sensi::models::{additive_gaussian, hetero_sine, peak_valley};
use sensi::sampling::{
    isomerization_gamma, mvn_sample, regular_grid, sample_correlation, InputLaw,
};
use sensi::theory::{
    empirical_expansion_check, ExpansionConfig, Quantity, TheoryFixture, Thresholds,
};
use sensi::{
    condvar, rng, ConditionalSampler, EstimationOptions, GridSpec, JointSample, Kernel,
    LocalFitConfig, RegressionSample, TildeSample, VarianceFitConfig,
};

/// Seed used for the documented model-2 run.
const PEAK_VALLEY_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ebbs_options() -> EstimationOptions {
    EstimationOptions {
        mean: LocalFitConfig::default().with_bandwidth(BandwidthPolicy::ebbs()),
        variance: VarianceFitConfig {
            bandwidth: BandwidthPolicy::ebbs(),
            ..VarianceFitConfig::default()
        },
        ..EstimationOptions::default()
    }
}

fn within(values: &[f64], targets: &[f64], tol: f64) -> bool {
    values
        .iter()
        .zip(targets)
        .all(|(v, t)| (v - t).abs() <= tol)
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn criterion_1() -> Outcome {
    let (_, a) = additive_gaussian(-0.8, 1.2).unwrap();
    let (_, b) = additive_gaussian(0.0, 1.2).unwrap();
    let pass = within(&a.s, &[0.6579, 0.0011, 0.1053], 5e-5)
        && within(&b.s, &[0.2907, 0.2907, 0.4186], 5e-5);
    Outcome {
        pass,
        detail: format!("rho=-0.8: {}  rho=0: {}", fmt(&a.s), fmt(&b.s)),
    }
}

fn criterion_2() -> Outcome {
    let (model, _) = additive_gaussian(-0.2, 0.4).unwrap();
    let (runs, _) = model_study(&model, 50, 1000, 100, &ebbs_options(), 42).unwrap();
    let s1: Vec<Vec<f64>> = runs.iter().map(|r| r.report.s1()).collect();
    let s2: Vec<Vec<f64>> = runs.iter().map(|r| r.report.s2()).collect();
    let m1 = mean_indices(s1.iter().map(Vec::as_slice));
    let m2 = mean_indices(s2.iter().map(Vec::as_slice));
    let pass = within(&m1, &[0.4895, 0.4250, 0.0234], 0.04)
        && within(&m2, &[0.5081, 0.4368, 0.0361], 0.04);
    Outcome {
        pass,
        detail: format!("mean S1 {}  mean S2 {}", fmt(&m1), fmt(&m2)),
    }
}

/// The 6×6 design replicates each x value six times, so the automatic grid
/// floor (sized for scattered designs) sits above the 0.4 design spacing.
/// The grid here runs from an eighth of the spacing to the range.
fn peak_valley_run(seed: u64) -> Vec<f64> {
    let (model, _) = peak_valley();
    let x = regular_grid(&[-1.0, -1.0], &[1.0, 1.0], 6).unwrap();
    let y = model.eval_rows(&x).unwrap();
    let joint = JointSample::new(x, y).unwrap();
    let tilde = TildeSample::new(model.law().sample(5000, seed).unwrap()).unwrap();
    let policy = BandwidthPolicy::ebbs().with_grid(GridSpec::Geometric {
        min: 0.05,
        max: 2.0,
        count: 12,
    });
    let opts = EstimationOptions {
        mean: LocalFitConfig::default().with_bandwidth(policy.clone()),
        variance: VarianceFitConfig {
            bandwidth: policy,
            ..VarianceFitConfig::default()
        },
        ..EstimationOptions::default()
    };
    estimate_indices(&joint, &tilde, &opts).unwrap().s2()
}

fn criterion_3() -> Outcome {
    let s2 = peak_valley_run(PEAK_VALLEY_SEED);
    let truth = within(&s2, &[0.9375, 0.0625], 0.06);
    let reported = within(&s2, &[0.9127, 0.0452], 0.05);
    Outcome {
        pass: truth && reported,
        detail: format!("seed {PEAK_VALLEY_SEED}: S2 {}", fmt(&s2)),
    }
}

fn criterion_4() -> Outcome {
    let (model, analytic) = additive_gaussian(-0.2, 0.4).unwrap();
    let spec = match model.law() {
        InputLaw::Gaussian { spec } => spec.clone(),
        InputLaw::Independent { .. } => unreachable!("additive model is Gaussian"),
    };
    let ratto: Vec<f64> = (0..3)
        .map(|i| {
            let sampler = ConditionalSampler::new(spec.clone(), i).unwrap();
            ratto_index(&sampler, &model, 200, 100, 500 + i as u64).unwrap()
        })
        .collect();
    let (runs, _) = model_study(&model, 1000, 2000, 1, &ebbs_options(), 4).unwrap();
    let report = &runs[0].report;
    let (s1, s2) = (report.s1(), report.s2());
    let pass =
        within(&ratto, &analytic.s, 0.05) && within(&ratto, &s1, 0.07) && within(&ratto, &s2, 0.07);
    Outcome {
        pass,
        detail: format!("SSB/SST {}  S1 {}  S2 {}", fmt(&ratto), fmt(&s1), fmt(&s2)),
    }
}

fn criterion_5() -> Outcome {
    let mut failures: Vec<&str> = Vec::new();
    let mut rng = rng::master(55);
    for trial in 0..40 {
        let n = rng.gen_range(20..80);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let coef: [f64; 4] = [
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen(),
            rng.gen(),
        ];
        let order = trial % 4;
        let poly = |t: f64| (0..=order).map(|j| coef[j] * t.powi(j as i32)).sum::<f64>();
        let y: Vec<f64> = x.iter().map(|&t| poly(t)).collect();
        let sample = RegressionSample::new(x.clone(), y.clone()).unwrap();
        let kernel = Kernel::ALL[trial % 3];
        let h = rng.gen_range(0.8..3.0);
        let cfg = LocalFitConfig::fixed(order, kernel, h);
        let x0 = rng.gen_range(-1.0..1.0);
        let fit = sensi::locfit::fit_at(&sample, &cfg, x0, h).unwrap();
        if (fit.mhat - poly(x0)).abs() > 1e-8 * (1.0 + poly(x0).abs()) {
            failures.push("polynomial reproduction");
        }
        let w = smoother_weights(&sample, &cfg, x0, h).unwrap();
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            failures.push("weights sum to one");
        }
        // p = 0 against the kernel-weighted mean
        let noisy: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        let s0 = RegressionSample::new(x.clone(), noisy.clone()).unwrap();
        let nw = sensi::locfit::fit_at(
            &s0,
            &LocalFitConfig::fixed(0, Kernel::Epanechnikov, 5.0),
            x0,
            5.0,
        )
        .unwrap();
        let k: Vec<f64> = x
            .iter()
            .map(|xi| Kernel::Epanechnikov.eval((xi - x0) / 5.0))
            .collect();
        let closed = k.iter().zip(&noisy).map(|(a, b)| a * b).sum::<f64>() / k.iter().sum::<f64>();
        if (nw.mhat - closed).abs() > 1e-12 * (1.0 + closed.abs()) {
            failures.push("Nadaraya-Watson equivalence");
        }
        // translation equivariance
        let c = rng.gen_range(-20.0..20.0);
        let shifted =
            RegressionSample::new(x.iter().map(|v| v + c).collect(), noisy.clone()).unwrap();
        let a =
            predict_with_bandwidth(&s0, &LocalFitConfig::fixed(1, kernel, h), &[x0], h).unwrap()[0];
        let b =
            predict_with_bandwidth(&shifted, &LocalFitConfig::fixed(1, kernel, h), &[x0 + c], h)
                .unwrap()[0];
        if (a - b).abs() > 1e-8 * (1.0 + a.abs()) {
            failures.push("translation equivariance");
        }
        // variance fits stay nonnegative
        let r2: Vec<f64> = noisy.iter().map(|v| v * v).collect();
        let grid: Vec<f64> = (0..25).map(|k| -2.5 + 0.2 * k as f64).collect();
        let var = condvar::fit_variance_with_bandwidth(
            &x,
            &r2,
            &VarianceFitConfig::fixed(1, kernel, h),
            &grid,
            h,
        )
        .unwrap();
        if var.sigma2.iter().any(|v| *v < 0.0) {
            failures.push("variance nonnegativity");
        }
    }
    let (model, _) = additive_gaussian(-0.2, 0.4).unwrap();
    let opts = EstimationOptions {
        bootstrap_reps: 10,
        ..EstimationOptions::default()
    };
    let (a, _) = model_study(&model, 60, 400, 5, &opts, 8).unwrap();
    let (b, _) = model_study(&model, 60, 400, 5, &opts, 8).unwrap();
    if a != b
        || a.iter()
            .zip(&b)
            .any(|(p, q)| p.report.to_json() != q.report.to_json())
    {
        failures.push("seed determinism");
    }
    for run in &a {
        for idx in &run.report.indices {
            if idx.s1_raw < 0.0 {
                failures.push("S1 raw nonnegative");
            }
            if idx.s1_clipped != idx.s1_raw.clamp(0.0, 1.0)
                || idx.s2_clipped != idx.s2_raw.clamp(0.0, 1.0)
            {
                failures.push("clipping bounds");
            }
        }
    }
    failures.dedup();
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "all properties hold".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    }
}

fn criterion_6() -> Outcome {
    let thresholds = Thresholds::default();
    let cfg = ExpansionConfig {
        kernel: Kernel::Gaussian,
        n_list: vec![4000],
        h_list: vec![0.08],
        n_prime: 1000,
        reps: 500,
        seed: 6,
    };
    let report = empirical_expansion_check(&TheoryFixture::hetero_sine(), &cfg).unwrap();
    let t1 = report.row(Quantity::T1Bias, 4000, 0.08).unwrap();
    let t2 = report.row(Quantity::T2Bias, 4000, 0.08).unwrap();
    let in_band = |r: f64, band: [f64; 2]| r >= band[0] && r <= band[1];
    let t1_ok = in_band(t1.ratio, thresholds.t1_bias_ratio);
    let t2_ok = in_band(t2.ratio, thresholds.t2_bias_ratio);

    let (model, truth) = hetero_sine();
    let mut mses = Vec::new();
    for n in [50, 100, 200, 400] {
        let (runs, _) = model_study(&model, n, 2000, 50, &ebbs_options(), 600 + n as u64).unwrap();
        let mse = runs
            .iter()
            .map(|r| (r.report.indices[0].s1_raw - truth.s[0]).powi(2))
            .sum::<f64>()
            / runs.len() as f64;
        mses.push(mse);
    }
    let mse_ok = mses.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: t1_ok && t2_ok && mse_ok,
        detail: format!(
            "T1 bias {:.5} vs {:.5} (ratio {:.3}, {}); T2 bias {:.6} vs {:.6} (ratio {:.2}, {}); S1 MSE {} ({})",
            t1.measured,
            t1.predicted,
            t1.ratio,
            if t1_ok { "ok" } else { "out" },
            t2.measured,
            t2.predicted,
            t2.ratio,
            if t2_ok { "ok" } else { "out" },
            mses.iter().map(|m| format!("{m:.5}")).collect::<Vec<_>>().join(" > "),
            if mse_ok { "ok" } else { "out" }
        ),
    }
}

fn criterion_7() -> Outcome {
    let spec = isomerization_gamma();
    let x: DMatrix<f64> = mvn_sample(&spec, 5000, 7).unwrap();
    let r = sample_correlation(&x);
    let worst = r
        .iter()
        .zip(spec.cov().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Outcome {
        pass: worst <= 0.05,
        detail: format!(
            "projected: {}, max |corr - Gamma| = {worst:.4}",
            spec.was_projected()
        ),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("SENSI_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [Criterion; 7] = [
        (1, "analytic fixture exactness", criterion_1),
        (2, "additive model reproduction", criterion_2),
        (3, "peak/valley reproduction", criterion_3),
        (4, "SSB/SST cross-check", criterion_4),
        (5, "property suite", criterion_5),
        (6, "theorem diagnostics", criterion_6),
        (7, "sampling fidelity", criterion_7),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{name}]: {verdict} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var_os("SENSI_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
