use std::fs;

use sensi::theory::{empirical_expansion_check, ExpansionConfig};

use crate::args::TheoryArgs;
use crate::error::{CliError, CliResult};

pub fn run(args: &TheoryArgs) -> CliResult<()> {
    if args.reps < 2 {
        return Err(CliError::malformed("--reps must be at least 2"));
    }
    if args.n.is_empty() || args.h.is_empty() {
        return Err(CliError::malformed(
            "--n and --h need at least one value each",
        ));
    }
    let cfg = ExpansionConfig {
        kernel: args.kernel,
        n_list: args.n.clone(),
        h_list: args.h.clone(),
        n_prime: args.nprime,
        reps: args.reps,
        seed: args.seed,
    };
    let report = empirical_expansion_check(&args.model.fixture(), &cfg)?;
    let c = &report.constants;
    log::info!(
        "{}: M1 = {:.6}, M2 = {:.6}, V1 = {:.6}, V2 = {:.6}, V3 = {:.6}, V4 = {:.6}",
        report.fixture,
        c.m1,
        c.m2,
        c.v1,
        c.v2,
        c.v3,
        c.v4
    );
    let csv = report.to_csv();
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
