use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use sensi::bandwidth::BandwidthPolicy;
use sensi::theory::FixtureKind;
use sensi::Kernel;

#[derive(Debug, Parser)]
#[command(
    name = "sensi",
    version,
    about = "First-order sensitivity indices for models with correlated inputs",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    #[command(flatten)]
    pub estimate: EstimateArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate indices from CSV samples or a built-in model (the default).
    Estimate(Box<EstimateArgs>),
    /// Compare measured T1/T2 bias against the asymptotic expansions.
    TheoryCheck(TheoryArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Joint sample CSV: input columns plus the output column, header row required.
    #[arg(long, conflicts_with = "model")]
    pub input: Option<PathBuf>,

    /// Input-only CSV with the same input columns (no model runs needed).
    #[arg(long, conflicts_with = "model")]
    pub tilde: Option<PathBuf>,

    /// Gaussian input law (JSON or CSV) used to draw the tilde sample.
    #[arg(long, conflicts_with_all = ["tilde", "model"])]
    pub gaussian: Option<PathBuf>,

    /// Input columns: 1-based indices, ranges such as 1-8, or header names.
    #[arg(long)]
    pub x_cols: Option<String>,

    /// Output column, by header name or 1-based index (default: last column).
    #[arg(long)]
    pub y_col: Option<String>,

    /// builtin:additive(rho,sigma) | builtin:peakvalley | builtin:heterosine
    #[arg(long, value_parser = parse_builtin)]
    pub model: Option<Builtin>,

    /// Joint design for built-in models: random or grid:<points per axis>.
    #[arg(long, default_value = "random", value_parser = parse_design)]
    pub design: Design,

    /// Joint sample size for built-in models.
    #[arg(long)]
    pub n: Option<usize>,

    /// Size of the generated tilde sample.
    #[arg(long)]
    pub nprime: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub order_p: usize,

    #[arg(long, default_value_t = 1)]
    pub order_q: usize,

    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel1: Kernel,

    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel2: Kernel,

    /// loocv | ebbs | fixed:<h>, for both smoothers.
    #[arg(long, default_value = "loocv", value_parser = parse_policy)]
    pub bandwidth: BandwidthPolicy,

    /// Bandwidth grid as min,max,count (geometric).
    #[arg(long, value_parser = parse_grid)]
    pub h_grid: Option<(f64, f64, usize)>,

    /// Replicate studies for built-in models; bootstrap resamples for CSV input.
    #[arg(long)]
    pub reps: Option<usize>,

    /// Level of percentile intervals.
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "sensi-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TheoryArgs {
    /// heterosine | linear | zeronoise
    #[arg(long, default_value = "heterosine", value_parser = parse_fixture)]
    pub model: FixtureKind,

    /// Sample sizes, comma separated.
    #[arg(long, default_value = "2000", value_delimiter = ',')]
    pub n: Vec<usize>,

    /// Bandwidths (used for both smoothers), comma separated.
    #[arg(long, default_value = "0.04,0.08,0.16", value_delimiter = ',')]
    pub h: Vec<f64>,

    #[arg(long, default_value_t = 1000)]
    pub nprime: usize,

    #[arg(long, default_value_t = 200)]
    pub reps: usize,

    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: Kernel,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Additive { rho: f64, sigma: f64 },
    PeakValley,
    HeteroSine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Random,
    Grid(usize),
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    Kernel::from_str(s).map_err(|e| e.to_string())
}

fn parse_policy(s: &str) -> Result<BandwidthPolicy, String> {
    BandwidthPolicy::from_str(s).map_err(|e| e.to_string())
}

fn parse_fixture(s: &str) -> Result<FixtureKind, String> {
    FixtureKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || format!("expected min,max,count, got '{s}'");
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].parse().map_err(|_| bad())?;
    let max: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    Ok((min, max, count))
}

fn parse_design(s: &str) -> Result<Design, String> {
    match s.trim() {
        "random" => Ok(Design::Random),
        other => other
            .strip_prefix("grid:")
            .and_then(|k| k.trim().parse().ok())
            .filter(|k: &usize| *k >= 2)
            .map(Design::Grid)
            .ok_or_else(|| format!("expected random or grid:<points ≥ 2>, got '{s}'")),
    }
}

fn parse_builtin(s: &str) -> Result<Builtin, String> {
    let body = s
        .trim()
        .strip_prefix("builtin:")
        .ok_or_else(|| format!("expected builtin:<name>, got '{s}'"))?;
    let (name, params) = match body.split_once('(') {
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("unclosed parameter list in '{s}'"))?;
            let values = inner
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| format!("non-numeric parameter in '{s}'"))?;
            (name.trim(), values)
        }
        None => (body.trim(), Vec::new()),
    };
    match (name.to_ascii_lowercase().as_str(), params.as_slice()) {
        ("additive", [rho, sigma]) => Ok(Builtin::Additive {
            rho: *rho,
            sigma: *sigma,
        }),
        ("additive", _) => Err("additive takes two parameters: additive(rho,sigma)".into()),
        ("peakvalley", []) => Ok(Builtin::PeakValley),
        ("heterosine", []) => Ok(Builtin::HeteroSine),
        ("peakvalley" | "heterosine", _) => Err(format!("{name} takes no parameters")),
        _ => Err(format!(
            "unknown model '{name}' (additive, peakvalley, heterosine)"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parsing() {
        assert_eq!(
            parse_builtin("builtin:additive(-0.2, 0.4)").unwrap(),
            Builtin::Additive {
                rho: -0.2,
                sigma: 0.4
            }
        );
        assert_eq!(
            parse_builtin("builtin:peakvalley").unwrap(),
            Builtin::PeakValley
        );
        assert!(parse_builtin("additive(1,2)").is_err());
        assert!(parse_builtin("builtin:additive(1)").is_err());
        assert!(parse_builtin("builtin:heterosine(3)").is_err());
    }

    #[test]
    fn design_and_grid() {
        assert_eq!(parse_design("grid:6").unwrap(), Design::Grid(6));
        assert!(parse_design("grid:1").is_err());
        assert_eq!(parse_grid("0.05, 2, 12").unwrap(), (0.05, 2.0, 12));
        assert!(parse_grid("0.05,2").is_err());
    }

    #[test]
    fn flags_parse_without_subcommand() {
        let cli = Cli::try_parse_from([
            "sensi",
            "--model",
            "builtin:additive(-0.2,0.4)",
            "--n",
            "50",
            "--bandwidth",
            "fixed:0.3",
        ])
        .unwrap();
        assert!(cli.command.is_none());
        assert_eq!(cli.estimate.bandwidth, BandwidthPolicy::fixed(0.3));
        let cli =
            Cli::try_parse_from(["sensi", "theory-check", "--n", "100,200", "--h", "0.1"]).unwrap();
        match cli.command {
            Some(Command::TheoryCheck(t)) => assert_eq!(t.n, vec![100, 200]),
            _ => panic!("expected theory-check"),
        }
    }
}
