//! Command-line front end for the `lzscatter` library.
//!
//! Exit codes: 0 success, 1 a computed result failed validation, 2 bad
//! input (unknown family, unsupported method, unwritable path, ...).

// `!(x > 0.0)` is deliberate: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lzscatter::Error;

pub mod commands;
pub mod ledger;
pub mod params;

use params::ModelArgs;

#[derive(Parser, Debug)]
#[command(name = "lzscatter", version, about = "Scattering matrices of multistate Landau-Zener models")]
pub struct Cli {
    /// JSON-lines run ledger (falls back to $LZSCATTER_LEDGER, then ./lzscatter-ledger.jsonl).
    #[arg(long, global = true)]
    pub ledger: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Model matrices.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Scattering matrix by one method.
    Smatrix {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        method: Option<Method>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between methods.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        /// Two or more methods, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        method: Vec<Method>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corrupt the last method's matrix (exercises the failure path).
        #[arg(long, hide = true)]
        inject_corruption: bool,
    },
    /// Adiabatic eigenvalue curves as CSV.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Time range start:stop.
        #[arg(long, allow_hyphen_values = true, default_value = "-10:10")]
        grid: String,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-curvature check of the model and its partner.
    ZeroCurvature {
        #[command(flatten)]
        model: ModelArgs,
        /// Time range start:stop for the grid (default: a fixed 5-point grid).
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Selected entries against one parameter given as start:stop:step.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        method: Option<Method>,
        /// 1-based entries as i,j; repeatable (default 1,1).
        #[arg(long = "entry")]
        entries: Vec<String>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ModelAction {
    /// A(eps), B and the partner parts as JSON.
    Show {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct OracleArgs {
    /// Oracle horizon; the family default when omitted.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Algebraic,
    Crossings,
    Numeric,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Algebraic => "algebraic",
            Method::Crossings => "crossings",
            Method::Numeric => "numeric",
        }
    }
}

/// Error carrying its exit code.
#[derive(Debug, Clone)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } | Error::NotHermitian { .. } | Error::SpectrumMismatch(_) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    commands::run(cli, args)
}
