use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::error::{Error, Result};

use super::experiments::Experiment;
use super::stats::{mean_std, success_rate};

/// Version stamped into every JSON report and CSV row.
pub const SCHEMA_VERSION: u32 = 1;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const RESIDUAL_FILE: &str = "residuals.csv";
pub const CHECK_FILE: &str = "checks.csv";
pub const AGGREGATE_FILE: &str = "aggregates.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Admm,
    Ilqr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub solver: Solver,
    pub initial_condition: Vec<f64>,
    /// Empty when the run failed.
    pub terminal_state: Vec<f64>,
    pub terminal_distance: Option<f64>,
    pub success: bool,
    pub total_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub solver: Solver,
    pub trials: usize,
    pub success_rate: f64,
    pub iterations_mean: f64,
    pub iterations_std: f64,
}

impl Aggregate {
    pub fn from_records(solver: Solver, records: &[TrialRecord]) -> Result<Self> {
        let own: Vec<&TrialRecord> = records.iter().filter(|r| r.solver == solver).collect();
        let distances: Vec<Option<f64>> = own.iter().map(|r| r.terminal_distance).collect();
        let iterations: Vec<f64> = own.iter().map(|r| r.total_iterations as f64).collect();
        let (iterations_mean, iterations_std) = mean_std(&iterations);
        Ok(Self {
            solver,
            trials: own.len(),
            success_rate: success_rate(&distances)?,
            iterations_mean,
            iterations_std,
        })
    }
}

pub fn aggregates(records: &[TrialRecord]) -> Result<Vec<Aggregate>> {
    [Solver::Admm, Solver::Ilqr]
        .into_iter()
        .map(|s| Aggregate::from_records(s, records))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub trial: usize,
    pub outer: usize,
    pub rho: f64,
    pub primal: f64,
    pub dual: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Series {
    State,
    Reference,
    Input,
    Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub trial: usize,
    pub solver: Solver,
    pub series: Series,
    pub t: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub horizon: usize,
    pub seed: u64,
    pub config: AdmmConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub residuals: Vec<ResidualRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn aggregate(&self, solver: Solver) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.solver == solver)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|source| io_error(path, source))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| io_error(path, source))?;
        Self::from_json(&text)
    }

    /// Writes one CSV file per table into `dir`, creating it if needed.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| io_error(dir, source))?;
        let exp = self.experiment.name();
        let v = SCHEMA_VERSION;
        write_rows(&dir.join(SUMMARY_FILE), self.records.iter().map(|r| SummaryRow::from_record(v, exp, r)))?;
        write_rows(
            &dir.join(TRAJECTORY_FILE),
            self.trajectories.iter().map(|r| TrajectoryCsv {
                schema_version: v,
                experiment: exp.to_owned(),
                trial: r.trial,
                solver: r.solver,
                series: r.series,
                t: r.t,
                values: join(&r.values),
            }),
        )?;
        write_rows(
            &dir.join(RESIDUAL_FILE),
            self.residuals.iter().map(|r| ResidualCsv {
                schema_version: v,
                experiment: exp.to_owned(),
                trial: r.trial,
                outer: r.outer,
                rho: r.rho,
                primal: r.primal,
                dual: r.dual,
                inner_iterations: r.inner_iterations,
            }),
        )?;
        write_rows(&dir.join(CHECK_FILE), self.checks.iter().cloned())?;
        write_rows(&dir.join(AGGREGATE_FILE), self.aggregates.iter().cloned())
    }
}

/// Tables read back from a CSV report directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTables {
    pub experiment: Experiment,
    pub records: Vec<TrialRecord>,
    pub residuals: Vec<ResidualRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub checks: Vec<Check>,
}

impl CsvTables {
    pub fn read(dir: &Path) -> Result<Self> {
        let summary: Vec<SummaryRow> = read_rows(&dir.join(SUMMARY_FILE))?;
        let first = summary.first().ok_or_else(|| Error::Format("summary table is empty".into()))?;
        let experiment: Experiment = first.experiment.parse()?;
        if summary.iter().any(|r| r.schema_version != SCHEMA_VERSION) {
            return Err(Error::Format(format!("summary rows must carry schema version {SCHEMA_VERSION}")));
        }
        let records = summary.into_iter().map(SummaryRow::into_record).collect::<Result<_>>()?;
        let trajectories = read_rows::<TrajectoryCsv>(&dir.join(TRAJECTORY_FILE))?
            .into_iter()
            .map(|r| {
                Ok(TrajectoryRow {
                    trial: r.trial,
                    solver: r.solver,
                    series: r.series,
                    t: r.t,
                    values: split(&r.values)?,
                })
            })
            .collect::<Result<_>>()?;
        let residuals = read_rows::<ResidualCsv>(&dir.join(RESIDUAL_FILE))?
            .into_iter()
            .map(|r| ResidualRow {
                trial: r.trial,
                outer: r.outer,
                rho: r.rho,
                primal: r.primal,
                dual: r.dual,
                inner_iterations: r.inner_iterations,
            })
            .collect();
        let checks = read_rows(&dir.join(CHECK_FILE))?;
        Ok(Self {
            experiment,
            records,
            residuals,
            trajectories,
            checks,
        })
    }

    pub fn aggregates(&self) -> Result<Vec<Aggregate>> {
        aggregates(&self.records)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    schema_version: u32,
    experiment: String,
    trial: usize,
    solver: Solver,
    initial_condition: String,
    terminal_state: String,
    terminal_distance: Option<f64>,
    success: bool,
    total_iterations: usize,
    outer_iterations: usize,
    converged: bool,
    error: Option<String>,
}

impl SummaryRow {
    fn from_record(schema_version: u32, experiment: &str, r: &TrialRecord) -> Self {
        Self {
            schema_version,
            experiment: experiment.to_owned(),
            trial: r.trial,
            solver: r.solver,
            initial_condition: join(&r.initial_condition),
            terminal_state: join(&r.terminal_state),
            terminal_distance: r.terminal_distance,
            success: r.success,
            total_iterations: r.total_iterations,
            outer_iterations: r.outer_iterations,
            converged: r.converged,
            error: r.error.clone(),
        }
    }

    fn into_record(self) -> Result<TrialRecord> {
        Ok(TrialRecord {
            trial: self.trial,
            solver: self.solver,
            initial_condition: split(&self.initial_condition)?,
            terminal_state: split(&self.terminal_state)?,
            terminal_distance: self.terminal_distance,
            success: self.success,
            total_iterations: self.total_iterations,
            outer_iterations: self.outer_iterations,
            converged: self.converged,
            error: self.error.filter(|e| !e.is_empty()),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryCsv {
    schema_version: u32,
    experiment: String,
    trial: usize,
    solver: Solver,
    series: Series,
    t: usize,
    values: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResidualCsv {
    schema_version: u32,
    experiment: String,
    trial: usize,
    outer: usize,
    rho: f64,
    primal: f64,
    dual: f64,
    inner_iterations: usize,
}

/// Vector cells are `;`-separated; Rust's float formatting round-trips exactly.
fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn split(cell: &str) -> Result<Vec<f64>> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';')
        .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number '{s}': {e}"))))
        .collect()
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from(path),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| io_error(path, source))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}
