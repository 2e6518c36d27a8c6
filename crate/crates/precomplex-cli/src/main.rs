//! `precomplex`: batch verification and solves for elliptic pre-complexes.
//!
//! Exit status: 0 when every check passes, 1 when some check fails,
//! 2 for malformed input, 3 for failures while running.

mod commands;
mod config;
mod error;
mod fields;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use precomplex::discrete_geometry::{ChartKind, MetricKind};
use serde::de::DeserializeOwned;

use config::{
    parse_bidegree, parse_list, IntList, parse_sweep, parse_tolerance, BoundaryName, ChainName, FileConfig, Restriction, RunConfig,
    SystemName,
};
use error::CliError;
use report::{Clock, Report};

#[derive(Parser, Debug)]
#[command(name = "precomplex", version, about = "Elliptic pre-complex verification and correction engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Randomized fiber-algebra identities and projector formulas.
    AlgebraCheck,
    /// Overdetermined-ellipticity verdicts from principal and boundary symbols.
    SymbolCheck,
    /// Assemble discrete operators and optionally export them.
    Assemble,
    /// Green-formula residuals under grid refinement.
    GreensCheck,
    /// Correct a discretized chain into a complex.
    Correct,
    /// Harmonic dimensions of a corrected chain.
    Cohomology,
    /// Overdetermined boundary-value solve on one level.
    SolveBvp,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::AlgebraCheck => "algebra-check",
            Command::SymbolCheck => "symbol-check",
            Command::Assemble => "assemble",
            Command::GreensCheck => "greens-check",
            Command::Correct => "correct",
            Command::Cohomology => "cohomology",
            Command::SolveBvp => "solve-bvp",
        }
    }
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Flags override the matching config-file keys.
#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML or JSON config file (by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ambient dimension.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Cells per axis.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// box | annulus
    #[arg(long, global = true, value_parser = serde_enum::<ChartKind>)]
    chart: Option<ChartKind>,
    /// flat | polar | conformal | diagonal
    #[arg(long, global = true, value_parser = serde_enum::<MetricKind>)]
    metric: Option<MetricKind>,
    /// Conformal factor expression in x1, x2, x3.
    #[arg(long, global = true)]
    phi: Option<String>,
    /// Strength of the constant so(3) connection of the twisted chain.
    #[arg(long, global = true)]
    twist: Option<f64>,
    #[arg(long, global = true, value_enum)]
    chain: Option<ChainName>,
    /// Vector degree of the Bianchi chain.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    level: Option<usize>,
    /// Operator name, e.g. d, d_G, H, B_G_star.
    #[arg(long, global = true)]
    operator: Option<String>,
    /// Source bidegree `k,m`.
    #[arg(long, global = true, value_parser = parse_bidegree)]
    source: Option<(usize, usize)>,
    /// Restrict the source to Bianchi forms.
    #[arg(long, global = true)]
    restricted: bool,
    #[arg(long, global = true, value_enum)]
    system: Option<SystemName>,
    #[arg(long, global = true, value_enum)]
    boundary: Option<BoundaryName>,
    /// Use B_G (false) or B_G* (true) for the Bianchi Dirac system.
    #[arg(long, global = true)]
    dual: Option<bool>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    metric_points: Option<usize>,
    /// Resolution sweep, e.g. `n=8,16,24`.
    #[arg(long, global = true, value_parser = parse_sweep)]
    sweep: Option<IntList>,
    /// Expected leading harmonic dimensions, e.g. `1,1,0`.
    #[arg(long, global = true, value_parser = parse_list)]
    expect: Option<IntList>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_parser = parse_tolerance)]
    tolerances: Vec<(String, f64)>,
    /// JSON report path; stdout when absent.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// CSV table for sweeps.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Write the assembled operators as Matrix Market files into this directory.
    #[arg(long, global = true)]
    export_ops: Option<PathBuf>,
    /// Persist the corrected chain into this directory.
    #[arg(long, global = true)]
    save: Option<PathBuf>,
    /// Leave wall-clock timings out of the report.
    #[arg(long, global = true)]
    no_timings: bool,
    #[arg(long, global = true)]
    chi: Option<PathBuf>,
    #[arg(long, global = true)]
    xi: Option<PathBuf>,
    /// Boundary datum field file.
    #[arg(long = "phi-data", global = true)]
    phi_data: Option<PathBuf>,
    #[arg(long, global = true)]
    harmonic_seed: Option<PathBuf>,
    /// Where to write the solution field.
    #[arg(long, global = true)]
    solution: Option<PathBuf>,
    /// Solve for a seeded smooth field and report the recovery error.
    #[arg(long, global = true)]
    manufactured: bool,
}

impl Flags {
    fn into_config(self) -> FileConfig {
        let mut c = FileConfig { seed: self.seed, d: self.d, samples: self.samples, level: self.level, sweep: self.sweep.map(|s| s.0), ..Default::default() };
        c.expect_dims = self.expect.map(|s| s.0);
        c.domain.chart = self.chart;
        c.domain.n = self.n;
        c.domain.metric = self.metric;
        c.domain.phi_expression = self.phi;
        c.domain.twist_strength = self.twist;
        c.chain.kind = self.chain;
        c.chain.m = self.m;
        c.operator.name = self.operator;
        c.operator.k = self.source.map(|s| s.0);
        c.operator.m = self.source.map(|s| s.1);
        c.operator.restriction = self.restricted.then_some(Restriction::Bianchi);
        c.symbol.system = self.system;
        c.symbol.boundary = self.boundary;
        c.symbol.dual = self.dual;
        c.symbol.metric_points = self.metric_points;
        c.tolerances = self.tolerances.into_iter().collect();
        c.bvp.chi = self.chi;
        c.bvp.xi = self.xi;
        c.bvp.phi = self.phi_data;
        c.bvp.harmonic_seed = self.harmonic_seed;
        c.bvp.solution = self.solution;
        c.bvp.manufactured = self.manufactured.then_some(true);
        c.output.report = self.report;
        c.output.csv = self.csv;
        c.output.export_ops = self.export_ops;
        c.output.save_chain = self.save;
        c.output.timings = self.no_timings.then_some(false);
        c
    }
}

fn run(cli: Cli) -> Result<Report, CliError> {
    let file = match &cli.flags.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let config = RunConfig::new(cli.flags.into_config().or(file))?;
    let mut clock = Clock::start();
    let (checks, results) = match cli.command {
        Command::AlgebraCheck => commands::algebra_check(&config, &mut clock),
        Command::SymbolCheck => commands::symbol_check(&config, &mut clock),
        Command::Assemble => commands::assemble_cmd(&config, &mut clock),
        Command::GreensCheck => commands::greens_check(&config, &mut clock),
        Command::Correct => commands::correct(&config, &mut clock),
        Command::Cohomology => commands::cohomology(&config, &mut clock),
        Command::SolveBvp => commands::solve_bvp_cmd(&config, &mut clock),
    }?;
    let report = Report::new(cli.command.name(), &config, checks, results, clock.finish());
    report.write(config.raw.output.report.as_deref())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for c in &report.checks {
                eprintln!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
