//! Batch front end for `nhic-core`: TOML experiment configs, task dispatch,
//! and JSON/CSV/SVG artifacts.

pub mod catalog;
pub mod config;
pub mod plot;
pub mod table;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

pub use catalog::{list_tasks, render_catalog, CatalogEntry, PlotKind, TaskKind};
pub use config::ExperimentConfig;
pub use table::Table;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {origin}: {message}")]
    Config { origin: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(Box<dyn std::error::Error + Send + Sync>),
}

macro_rules! core_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for LabError {
            fn from(e: $t) -> Self {
                LabError::Core(Box::new(e))
            }
        })*
    };
}

core_errors!(
    nhic_core::fourier::FourierError,
    nhic_core::system::SystemError,
    nhic_core::flow::FlowError,
    nhic_core::orbit_min::OrbitError,
    nhic_core::periodic::ShootingError,
    nhic_core::cylinder::CylinderError,
    nhic_core::normal_form::NormalFormError,
    nhic_core::high_energy::HighEnergyError,
    nhic_core::resonance::ResonanceError
);

/// A named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
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

/// What a task hands back before anything is written.
#[derive(Debug, Default)]
pub struct TaskOutput {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub figures: Vec<(PlotKind, plot::Figure)>,
    pub summary: Map<String, Value>,
}

impl TaskOutput {
    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.to_owned(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableFile {
    pub name: String,
    pub path: PathBuf,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub seed: u64,
    /// Normalized config; it parses back to itself.
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub summary: Map<String, Value>,
    pub tables: Vec<TableFile>,
    pub plots: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub data: Vec<Table>,
}

impl RunReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.data.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// Runs `cfg` and writes `report.json`, one CSV per table and one SVG per
/// requested plot into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, LabError> {
    let started = Instant::now();
    let cfg = cfg.normalized();
    std::fs::create_dir_all(out).map_err(|source| LabError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let result = tasks::execute(&cfg)?;

    let mut tables = Vec::with_capacity(result.tables.len());
    for t in &result.tables {
        let path = out.join(format!("{}.csv", t.name));
        t.write_csv(&path)?;
        tables.push(TableFile {
            name: t.name.clone(),
            path,
            rows: t.len(),
        });
    }
    let wanted = cfg.plots();
    let mut plots = Vec::new();
    for (kind, fig) in &result.figures {
        if !wanted.contains(kind) {
            continue;
        }
        let path = out.join(format!("{}.svg", kind.file_stem()));
        write(&path, fig.render())?;
        plots.push(path);
    }

    let report = RunReport {
        task: cfg.task,
        seed: cfg.seed,
        passed: result.checks.iter().all(|c| c.passed),
        checks: result.checks,
        summary: result.summary,
        tables,
        plots,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        data: result.tables,
        config: cfg,
    };
    write(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

/// Loads a config file, applies overrides and runs it on a pool of
/// `jobs` workers (all cores when absent).
pub fn run_config(path: &Path, out: &Path, opts: RunOptions) -> Result<RunReport, LabError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j);
    }
    pool.build()?.install(|| run(&cfg, out))
}

fn write(path: &Path, contents: String) -> Result<(), LabError> {
    std::fs::write(path, contents).map_err(|source| LabError::Write {
        path: path.to_path_buf(),
        source,
    })
}
