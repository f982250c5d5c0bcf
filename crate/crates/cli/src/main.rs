//! `hocbf`: run ACC/SACC simulations, penalty sweeps and invariance checks.

mod config;
mod records;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hocbf::acc::{simulate, ScenarioKind};
use hocbf::{SimError, TrajectoryRecord};
use rayon::prelude::*;

use config::{parse_sweep, ConfigError, Origin, RunConfig};
use records::{read_trajectory, write_sweep, write_trajectory, RunSummary, SweepRow};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INVARIANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "hocbf", version, about = "HOCBF adaptive cruise control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its trajectory as CSV.
    Simulate(RunArgs),
    /// Run one simulation per value of a parameter and write a summary row each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Parameter and values, e.g. `p=1,0.5,0.2`.
        #[arg(long, value_name = "FIELD=V1,V2,...")]
        sweep: String,
    },
    /// Check a trajectory CSV for b >= -tol and psi1 >= -tol.
    Verify {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
        tol: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// acc or sacc.
    #[arg(long, default_value = "acc")]
    scenario: String,
    /// Parameter preset; only table1 exists.
    #[arg(long)]
    preset: Option<String>,
    /// File of `key = value` lines applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Io(String),
}

impl RunArgs {
    fn load(&self) -> Result<(ScenarioKind, RunConfig), CliError> {
        let kind: ScenarioKind = self.scenario.parse().map_err(|e: hocbf::acc::ParamError| ConfigError::Key {
            origin: Origin::Flag,
            key: "scenario".into(),
            message: e.0,
        })?;
        let mut cfg = RunConfig::preset(self.preset.as_deref())?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for pair in &self.set {
            cfg.apply(pair, &Origin::Flag)?;
        }
        cfg.validate()?;
        Ok((kind, cfg))
    }

    fn sink(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.output {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn run_one(kind: ScenarioKind, cfg: &RunConfig) -> Result<TrajectoryRecord, CliError> {
    simulate(kind, &cfg.params, &cfg.sim_config()).map_err(|e| match e {
        SimError::InitialMembership { barrier, report } => {
            CliError::Run(format!("initial state outside the safe set of barrier {barrier}: {report}"))
        }
        other => CliError::Run(other.to_string()),
    })
}

fn cmd_simulate(args: &RunArgs) -> Result<u8, CliError> {
    let (kind, cfg) = args.load()?;
    let rec = run_one(kind, &cfg)?;
    write_trajectory(args.sink()?, &rec).map_err(|e| CliError::Io(e.to_string()))?;
    let s = RunSummary::of(&rec);
    let line = format!("min_u={} min_b={:e} min_psi1={:e} terminal_v={}", s.min_u, s.min_b, s.min_psi1, s.terminal_v);
    // Keep stdout clean when it carries the CSV.
    if args.output.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    match s.infeasible_at {
        Some(t) => {
            eprintln!("QP infeasible at t={t}");
            Ok(EXIT_INFEASIBLE)
        }
        None => Ok(EXIT_OK),
    }
}

fn cmd_sweep(args: &RunArgs, sweep: &str) -> Result<u8, CliError> {
    let (kind, base) = args.load()?;
    let (field, values) = parse_sweep(sweep)?;
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(&field, &v.to_string(), &Origin::Flag)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let rows = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| {
            let rec = run_one(kind, cfg)?;
            Ok(SweepRow {
                value: *v,
                summary: RunSummary::of(&rec),
                v_d: cfg.params.v_d,
                brake_limit: cfg.params.brake_limit(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_sweep(args.sink()?, &rows).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(EXIT_OK)
}

fn cmd_verify(path: &PathBuf, tol: f64) -> Result<u8, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_trajectory(file).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let min_b = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let min_psi1 = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    println!("min_b={min_b:e} min_psi1={min_psi1:e} tol={tol:e}");
    // NaN counts as a failure.
    let below = |x: f64| x.is_nan() || x < -tol;
    match rows.iter().find(|r| below(r.2) || below(r.3)) {
        None => {
            println!("PASS");
            Ok(EXIT_OK)
        }
        Some((row, t, b, psi1)) => {
            println!("FAIL at row {row} (t={t}): b={b:e} psi1={psi1:e}");
            Ok(EXIT_INVARIANCE)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep { run, sweep } => cmd_sweep(run, sweep),
        Command::Verify { path, tol } => cmd_verify(path, *tol),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
