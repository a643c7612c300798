// SPDX-License-Identifier: Apache-2.0

//! `dicke-lab`: command-line front end for dicke-core.

pub mod commands;
pub mod error;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{LabError, LabResult};
use crate::plot::PlotStyle;

pub const THREADS_ENV: &str = "DICKE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "dicke-lab",
    version,
    about = "Open Dicke model simulation and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by the subcommands that write files.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file (TOML; physical keys at top level plus optional
    /// [synth], [sweep], [analysis] and [fit] tables).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, where noted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (capped by DICKE_LAB_THREADS).
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Also write an SVG plot next to every CSV: lin, logx, logy or loglog.
    #[arg(long, num_args = 0..=1, default_missing_value = "lin")]
    pub plot: Option<PlotStyle>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean-field steady states over a coupling sweep.
    Meanfield {
        /// x0:x1:n
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value_t = 0.0)]
        zeta: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Model g¹(τ) and g²(τ) at one coupling.
    Spectrum {
        #[arg(long)]
        x: f64,
        /// Atomic damping γ/2π (Hz).
        #[arg(long = "gamma-hz")]
        gamma_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        zeta: f64,
        /// Background photon number; defaults to r_b/2κη.
        #[arg(long)]
        nb: Option<f64>,
        /// Largest lag (s).
        #[arg(long = "tau-max", default_value_t = 1e-3)]
        tau_max: f64,
        #[arg(long, default_value_t = 501)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-system ground-state fluctuations over a coupling sweep.
    Closed {
        /// x0:x1:n
        #[arg(long)]
        sweep: String,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize click traces of coupling sweeps.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Trace format: bin or csv.
        #[arg(long, default_value = "bin")]
        format: String,
        #[command(flatten)]
        common: Common,
    },
    /// Transition time, photon number and g² per coupling bin from traces.
    Analyze {
        /// Trace file; repeat to average several runs.
        #[arg(long, required = true)]
        trace: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit γ per coupling bin and the global ζ to g² files.
    Fit {
        /// Directory with g2_x*.csv files.
        #[arg(long)]
        g2dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Density fluctuations from n̄(x) and their critical exponent.
    Exponent {
        /// nbar_vs_x.csv
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        zeta: f64,
        #[arg(long = "zeta-err", default_value_t = 0.0)]
        zeta_err: f64,
        /// a:b
        #[arg(long)]
        range: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesis, analysis, fit and exponent over many sweeps.
    Pipeline {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a CSV file as an SVG line plot.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        /// lin, logx, logy or loglog.
        #[arg(long, default_value = "lin")]
        style: PlotStyle,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Worker count from `--parallel` and the environment cap.
pub fn thread_count(requested: Option<usize>) -> LabResult<usize> {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(avail);
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let cap: usize = v
            .trim()
            .parse()
            .map_err(|_| LabError::usage(format!("{THREADS_ENV} must be a positive integer")))?;
        if cap == 0 {
            return Err(LabError::usage(format!("{THREADS_ENV} must be >= 1")));
        }
        n = n.min(cap);
    }
    if n == 0 {
        return Err(LabError::usage("--parallel must be >= 1"));
    }
    Ok(n)
}

/// Parses `argv`, executes the command and returns the exit code. Errors are
/// reported as a single `error kind=... code=... message=...` line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::execute(cli.command, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}
