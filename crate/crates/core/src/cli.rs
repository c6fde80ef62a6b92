//! Experiment orchestration behind the `oscnet` binary: one config file
//! drives training, reference integration and the activation benchmark.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::config::{ConfigError, ReferenceMethod, ReferenceSection, RunConfig};
use crate::exec::{map_items, Execution};
use crate::integrators::{
    integrate_ab4, integrate_dopri45, integrate_rk4, resample_hermite, IntegratorError,
    SolutionTrace,
};
use crate::network::to_checkpoint;
use crate::problem::{equispaced, OscillatorProblem};
use crate::report::{bar_chart_svg, compare, write_comparison, write_loss_history, ReportError};
use crate::training::{evaluate_on_grid, train, TrainError, TrainRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Short machine-readable category for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Train(_) => "train",
            CliError::Integrator(_) => "integrator",
            CliError::Report(_) => "report",
            CliError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Reference solution on `grid`, resampled with cubic Hermite interpolation.
///
/// Fixed-step methods use the largest step not exceeding `h` that divides the
/// domain evenly.
pub fn reference_trace(
    problem: &OscillatorProblem,
    reference: &ReferenceSection,
    grid: &[f64],
) -> Result<SolutionTrace, IntegratorError> {
    let span = problem.t_end() - problem.t0();
    let raw = match reference.method {
        ReferenceMethod::Dopri45 => {
            integrate_dopri45(problem, reference.rtol, reference.atol, problem.t_end())?
        }
        ReferenceMethod::Rk4 | ReferenceMethod::Ab4 => {
            let n = ((span / reference.h).ceil() as usize).max(4);
            let h = span / n as f64;
            let mut trace = if reference.method == ReferenceMethod::Rk4 {
                integrate_rk4(problem, h, n)?
            } else {
                integrate_ab4(problem, h, n)?
            };
            // pin the final time against accumulated rounding in t0 + n·h
            *trace.times.last_mut().expect("non-empty") = problem.t_end();
            trace
        }
    };
    resample_hermite(&raw, grid)
}

/// Outcome of one training run together with its reference comparison.
pub struct RunOutcome {
    pub record: TrainRecord,
    pub max_abs_error_vs_ref: f64,
}

#[derive(Serialize)]
struct MetaResult {
    activation: String,
    epochs_run: usize,
    converged: bool,
    wall_time_seconds: f64,
    final_train_loss: f64,
    max_abs_error_vs_ref: f64,
}

#[derive(Serialize)]
struct Meta<'a> {
    result: MetaResult,
    config: &'a RunConfig,
}

fn train_and_write(
    cfg: &RunConfig,
    activation: ActivationKind,
    execution: Execution,
    dir: &Path,
) -> Result<RunOutcome, CliError> {
    let mut tc = cfg.train_config(activation);
    tc.execution = execution;
    let record = train(&tc)?;

    let problem = &tc.problem;
    let grid = equispaced(cfg.output.n_grid, problem.t0(), problem.t_end());
    let dnn = evaluate_on_grid(&record.final_params, problem, tc.transform, cfg.output.n_grid)
        .expect("validated grid size");
    let reference = reference_trace(problem, &cfg.reference, &grid)?;
    let report = compare(&dnn, &reference)?;

    create_dir(dir)?;
    write_loss_history(&record, dir)?;
    write_file(&dir.join("checkpoint"), to_checkpoint(&record.final_params))?;
    let mut solution = Vec::new();
    dnn.write_csv(&mut solution).expect("in-memory write");
    write_file(&dir.join("solution.csv"), solution)?;
    write_comparison(&report, dir, "comparison")?;

    let mut echo = cfg.clone();
    echo.network.activation = activation;
    echo.output.directory = dir.to_path_buf();
    let meta = Meta {
        result: MetaResult {
            activation: activation.to_string(),
            epochs_run: record.epochs_run,
            converged: record.converged,
            wall_time_seconds: record.wall_time_seconds,
            final_train_loss: record.final_train_loss(),
            max_abs_error_vs_ref: report.max_abs_error,
        },
        config: &echo,
    };
    write_file(&dir.join("meta"), toml::to_string(&meta).expect("meta serializes"))?;

    Ok(RunOutcome {
        max_abs_error_vs_ref: report.max_abs_error,
        record,
    })
}

fn out_dir(cfg: &RunConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir.map_or_else(|| cfg.output.directory.clone(), Path::to_path_buf)
}

/// Train with the configured activation and write `history.csv`,
/// `checkpoint`, `meta`, `solution.csv` and `comparison.csv` (plus SVGs).
pub fn cmd_train(config: &Path, override_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(config)?;
    let dir = out_dir(&cfg, override_dir);
    train_and_write(&cfg, cfg.network.activation, Execution::default(), &dir)?;
    Ok(dir)
}

/// Reference-only run; writes `trace.csv` (`t,u,v`) on the output grid.
pub fn cmd_integrate(config: &Path, override_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(config)?;
    let dir = out_dir(&cfg, override_dir);
    let problem = cfg.problem().expect("validated config");
    let grid = equispaced(cfg.output.n_grid, problem.t0(), problem.t_end());
    let trace = reference_trace(&problem, &cfg.reference, &grid)?;
    create_dir(&dir)?;
    let path = dir.join("trace.csv");
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("in-memory write");
    write_file(&path, buf)?;
    Ok(path)
}

/// One benchmark row.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub activation: ActivationKind,
    pub epochs_to_threshold: Option<usize>,
    pub wall_time_seconds: f64,
    pub final_train_loss: f64,
    pub max_abs_error_vs_ref: f64,
}

pub const BENCH_HEADER: &str =
    "activation,epochs_to_threshold,wall_time_seconds,final_train_loss,max_abs_error_vs_ref";

impl BenchRow {
    fn failed(activation: ActivationKind) -> Self {
        Self {
            activation,
            epochs_to_threshold: None,
            wall_time_seconds: f64::NAN,
            final_train_loss: f64::NAN,
            max_abs_error_vs_ref: f64::NAN,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let epochs = self
            .epochs_to_threshold
            .map_or_else(|| "not reached".to_string(), |e| e.to_string());
        format!(
            "{},{},{:.3},{:.6e},{:.6e}",
            self.activation,
            epochs,
            self.wall_time_seconds,
            self.final_train_loss,
            self.max_abs_error_vs_ref
        )
    }
}

/// Train every activation with identical settings. Runs in `execution`
/// (one run per activation), each writing into `<dir>/<activation>/`.
/// Rows come back in the fixed [`ActivationKind::ALL`] order.
pub fn run_bench(cfg: &RunConfig, dir: &Path, execution: Execution) -> Vec<BenchRow> {
    map_items(&ActivationKind::ALL, execution, |&act| {
        match train_and_write(cfg, act, Execution::Sequential, &dir.join(act.name())) {
            Ok(out) => BenchRow {
                activation: act,
                epochs_to_threshold: out.record.epochs_to_threshold(),
                wall_time_seconds: out.record.wall_time_seconds,
                final_train_loss: out.record.final_train_loss(),
                max_abs_error_vs_ref: out.max_abs_error_vs_ref,
            },
            Err(_) => BenchRow::failed(act),
        }
    })
}

/// Rows ordered by epochs to threshold; unreached last, ties in fixed order.
pub fn sort_rows(rows: &mut [BenchRow]) {
    rows.sort_by_key(|r| r.epochs_to_threshold.unwrap_or(usize::MAX));
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{BENCH_HEADER}").unwrap();
    for r in rows {
        writeln!(out, "{}", r.to_csv_line()).unwrap();
    }
    out
}

/// Benchmark all five activations; writes `bench.csv` and `bench.svg`.
pub fn cmd_bench(config: &Path, override_dir: Option<&Path>) -> Result<(PathBuf, Vec<BenchRow>), CliError> {
    let cfg = RunConfig::load(config)?;
    let dir = out_dir(&cfg, override_dir);
    create_dir(&dir)?;
    let mut rows = run_bench(&cfg, &dir, Execution::default());
    sort_rows(&mut rows);
    let path = dir.join("bench.csv");
    write_file(&path, bench_csv(&rows))?;
    let bars: Vec<(String, f64)> = rows
        .iter()
        .map(|r| (r.activation.to_string(), r.wall_time_seconds))
        .collect();
    write_file(&dir.join("bench.svg"), bar_chart_svg("Training wall time", "s", &bars))?;
    Ok((path, rows))
}
