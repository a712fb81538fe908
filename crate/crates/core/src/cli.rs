//! Command-line front end: `classify`, `run`, `sweep` and `presets`.
//!
//! Exit codes: 0 success; 2 malformed input or configuration; 3 `classify`
//! found no boundedness guarantee; 4 a run grew or blew up; 5 a run failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::load_config;
use crate::harness::{
    compare_theory, persist_sweep, run_sweep, write_run_artifacts, ModelOverrides, Preset,
    ScenarioError,
};
use crate::model::{classify, ModelSpec, RegimeReport, TaxisSign, VDynamics};
use crate::stepper::{run, RunVerdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_GUARANTEE: i32 = 3;
pub const EXIT_UNBOUNDED: i32 = 4;
pub const EXIT_FAILED: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "lvadvect",
    version,
    about = "Competition with taxis: boundedness classifier, solver and sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the boundedness conditions for a parameter set.
    Classify(ClassifyArgs),
    /// Integrate one scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sweep section of a config and compare with the classifier.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; LVADVECT_THREADS takes precedence.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the presets and the model each realizes.
    Presets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DynamicsArg {
    Parabolic,
    Elliptic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaxisArg {
    Repulsion,
    Attraction,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Take the model from a scenario config instead of the flags.
    #[arg(long, conflicts_with_all = ["m1", "m2", "alpha", "v_dynamics", "taxis", "b1_large"])]
    pub config: Option<PathBuf>,
    /// Growth exponent of the diffusion.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub m1: f64,
    /// Growth exponent of the sensitivity.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub m2: f64,
    /// Exponent of the logistic damping.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Space dimension; defaults to 2, or the grid's dimension with --config.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value = "parabolic")]
    pub v_dynamics: DynamicsArg,
    #[arg(long, value_enum, default_value = "repulsion")]
    pub taxis: TaxisArg,
    /// Treat b1 as large enough for the conditional attraction branch.
    #[arg(long)]
    pub b1_large: bool,
    /// Print the reports as JSON.
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let out = std::io::stdout();
    let mut out = out.lock();
    let result = match cli.command {
        Command::Classify(a) => cmd_classify(&a, &mut out),
        Command::Run { config, out: dir } => cmd_run(&config, &dir, &mut out),
        Command::Sweep {
            config,
            out: dir,
            workers,
        } => match threads_from_env() {
            Ok(env) => cmd_sweep(&config, &dir, env.or(workers), &mut out),
            Err(e) => Err(e),
        },
        Command::Presets => cmd_presets(&mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub const THREADS_ENV: &str = "LVADVECT_THREADS";

fn threads_from_env() -> Result<Option<usize>, ScenarioError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ScenarioError::Invalid {
                field: THREADS_ENV.into(),
                reason: format!("expected a positive integer, got {v:?}"),
            }),
        },
        _ => Ok(None),
    }
}

fn inline_spec(a: &ClassifyArgs) -> Result<ModelSpec, ScenarioError> {
    let overrides = ModelOverrides {
        m1: Some(a.m1),
        m2: Some(a.m2),
        alpha: Some(a.alpha),
        v_dynamics: Some(match a.v_dynamics {
            DynamicsArg::Parabolic => VDynamics::Parabolic,
            DynamicsArg::Elliptic => VDynamics::Elliptic,
        }),
        taxis_sign: Some(match a.taxis {
            TaxisArg::Repulsion => TaxisSign::Repulsion,
            TaxisArg::Attraction => TaxisSign::Attraction,
        }),
        assume_b1_large: Some(a.b1_large),
        ..ModelOverrides::default()
    };
    crate::harness::build_spec(Preset::Custom, &overrides)
}

/// Reports for the classify command.
pub fn classify_reports(a: &ClassifyArgs) -> Result<Vec<RegimeReport>, ScenarioError> {
    if a.n == Some(0) {
        return Err(ScenarioError::Invalid {
            field: "N".into(),
            reason: "must be at least 1".into(),
        });
    }
    match &a.config {
        Some(path) => Ok(load_config(path)?.scenario.classify(a.n)),
        None => Ok(classify(&inline_spec(a)?, a.n.unwrap_or(2))),
    }
}

pub fn cmd_classify(a: &ClassifyArgs, out: &mut dyn Write) -> Result<i32, ScenarioError> {
    let reports = classify_reports(a)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    } else {
        for r in &reports {
            writeln!(out, "{r}")?;
        }
    }
    Ok(
        if reports.iter().any(|r| r.verdict.guarantees_boundedness()) {
            EXIT_OK
        } else {
            EXIT_NO_GUARANTEE
        },
    )
}

pub fn exit_code(verdict: RunVerdict) -> i32 {
    match verdict {
        RunVerdict::Bounded | RunVerdict::ConvergedToSteadyState => EXIT_OK,
        RunVerdict::Growing | RunVerdict::BlowUpSuspected => EXIT_UNBOUNDED,
        RunVerdict::Failed => EXIT_FAILED,
    }
}

pub fn cmd_run(
    config: &std::path::Path,
    dir: &std::path::Path,
    out: &mut dyn Write,
) -> Result<i32, ScenarioError> {
    let scenario = load_config(config)?.scenario;
    let summary = run(&scenario)?;
    write_run_artifacts(dir, &scenario, &summary)?;
    writeln!(
        out,
        "{}: {} at t = {} after {} steps (max |u| = {:.6e})",
        scenario.name,
        summary.verdict.as_str(),
        summary.t_final,
        summary.steps,
        summary.max_linf_u
    )?;
    if let Some(m) = &summary.message {
        writeln!(out, "  {m}")?;
    }
    Ok(exit_code(summary.verdict))
}

pub fn cmd_sweep(
    config: &std::path::Path,
    dir: &std::path::Path,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32, ScenarioError> {
    let loaded = load_config(config)?;
    let plan = loaded.plan()?;
    let workers = workers
        .or(loaded.sweep.as_ref().and_then(|s| s.workers))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_sweep(&plan, workers)?;
    let table = compare_theory(&result);
    persist_sweep(dir, &plan, &result, &table)?;
    writeln!(
        out,
        "{} runs on {workers} workers -> {}",
        result.rows.len(),
        dir.display()
    )?;
    write!(out, "{table}")?;
    Ok(EXIT_OK)
}

pub fn cmd_presets(out: &mut dyn Write) -> Result<i32, ScenarioError> {
    for p in Preset::ALL {
        writeln!(
            out,
            "{:<12} ({:<12}) {}",
            p.as_str(),
            p.config_key(),
            p.model_form()
        )?;
    }
    Ok(EXIT_OK)
}
