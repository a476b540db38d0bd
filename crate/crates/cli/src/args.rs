//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "amvp",
    version,
    about = "L^p medians and mean-value expansions on Carnot groups"
)]
pub struct Cli {
    /// Worker threads (default: hardware count). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the run manifest here instead of stderr.
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Print version, models and subcommands as JSON.
    Info,
    /// Closed-form mean-value constant for a group and exponent.
    Constants(ConstantsArgs),
    /// L^p median of values read from stdin as `value` or `value,weight`.
    Median(MedianArgs),
    /// Monte-Carlo oracle against a closed form.
    Oracle(OracleArgs),
    /// Expansion sweep for a quadratic model.
    Sweep(SweepArgs),
    /// p-harmonic Dirichlet problem by mean-value iteration.
    Solve(SolveArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Info => "info",
            Command::Constants(_) => "constants",
            Command::Median(_) => "median",
            Command::Oracle(_) => "oracle",
            Command::Sweep(_) => "sweep",
            Command::Solve(_) => "solve",
        }
    }

    /// The explicit seed, if the subcommand is randomized.
    pub fn seed_slot(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::Oracle(a) => Some(&mut a.seed),
            Command::Sweep(a) => Some(&mut a.seed),
            _ => None,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GroupArgs {
    /// euclidean, heisenberg, step2, graded, or a full spec like "group=heisenberg n=1".
    #[arg(long, default_value = "heisenberg")]
    pub group: String,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of vertical coordinates of a step-2 group.
    #[arg(long)]
    pub k: Option<usize>,
    /// Step-2 tensor as rows "a,b;c,d"; repeat once per vertical coordinate.
    #[arg(long = "b", value_name = "MATRIX")]
    pub b: Vec<String>,
    /// Layer dimensions of a graded model, e.g. "1,1,1".
    #[arg(long)]
    pub layers: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    /// Exponent in (1, inf]; spell infinity as "inf".
    #[arg(long)]
    pub p: String,
}

#[derive(Args, Debug, Serialize)]
pub struct MedianArgs {
    /// Exponent in [1, inf].
    #[arg(long)]
    pub p: String,
    /// Bisection tolerance relative to the data range.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Dirichlet,
    #[value(name = "momentI", alias = "moment-i")]
    #[serde(rename = "momentI")]
    MomentI,
    Gamma0,
    Volume,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pseudo,
    Qmc,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[command(flatten)]
    pub group: GroupArgs,
    /// Exponent for momentI and gamma0.
    #[arg(long, default_value = "2")]
    pub p: String,
    /// Dirichlet exponents, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub alphas: Option<String>,
    /// Horizontal matrix C for gamma0 as rows "a,b;c,d" (default: identity).
    #[arg(long = "C", allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Second-layer vector for gamma0 (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    /// Ball radius for the volume target.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "pseudo")]
    pub method: Method,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    #[arg(long)]
    pub p: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub q0: f64,
    /// Horizontal gradient, comma separated (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<String>,
    /// Second-layer gradient (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    /// Symmetric horizontal Hessian as rows "a,b;c,d" (default: zero).
    #[arg(long = "A", allow_hyphen_values = true)]
    pub a: Option<String>,
    /// Base point (default: identity).
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, default_value_t = 0.4)]
    pub eps0: f64,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub out: TableFormat,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub eps: f64,
    /// Grid spacing, one value or one per coordinate.
    #[arg(long)]
    pub h: String,
    /// Lower grid corner, one value or one per coordinate.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub lower: String,
    /// Upper grid corner, one value or one per coordinate.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub upper: String,
    /// Boundary data: saddle, linear or constant:<c>.
    #[arg(long, default_value = "saddle")]
    pub bc: String,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
}
