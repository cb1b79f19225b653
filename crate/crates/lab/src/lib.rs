//! Reproducible scenario runner for the toy restoration experiments.
//!
//! Each scenario writes `report.json`, `samples_<label>.csv` and
//! `scatter_<label>.svg` into its output directory. Reports are byte-identical across
//! runs with the same scenario, settings and seed, except for `generated_at`.

use std::path::{Path, PathBuf};

pub mod config;
pub mod report;
mod scenarios;
pub mod svg;

pub use config::{load_config, parse_config, Scenario, Settings};
pub use report::{strip_timestamp, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("config error{}: {message}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Config { path: Option<PathBuf>, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] restoration_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::UnknownScenario(_) | Self::Config { .. } => 2,
            _ => 1,
        }
    }
}

/// Worker count from `LAB_THREADS`, else the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `scenario` and writes its files under `out` (created if missing).
pub fn run_scenario(
    scenario: Scenario,
    settings: &Settings,
    out: &Path,
    seed: u64,
) -> Result<RunReport, LabError> {
    std::fs::create_dir_all(out).map_err(|source| LabError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let ctx = scenarios::Ctx {
        out,
        seed,
        settings,
        threads: threads_from_env(),
    };
    let outcome = match scenario {
        Scenario::AnalyticDemo => scenarios::analytic_demo(&ctx),
        Scenario::EllipseDemo => scenarios::ellipse_demo(&ctx),
        Scenario::ZigzagSweep => scenarios::zigzag_sweep(&ctx),
        Scenario::BoundCheck => scenarios::bound_check(&ctx),
        Scenario::PosteriorCheck => scenarios::posterior_check(&ctx),
        Scenario::ToyGan => scenarios::toy_gan(&ctx),
    }?;
    let config = serde_json::to_value(settings)?;
    let report = RunReport {
        scenario: scenario.name().into(),
        seed,
        provenance: report::Provenance::new(scenario.name(), seed, &config),
        generated_at: report::now_rfc3339(),
        config,
        estimators: outcome.estimators,
        checks: outcome.checks,
        notes: outcome.notes,
    };
    report.write(&out.join("report.json"))?;
    Ok(report)
}
