//! Command-line orchestration: run configurations, evaluation matrices and
//! the report files they leave behind.

mod bench;
mod build;
mod config;
mod dataset;
mod report;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{bench_command, probe_prompt, render_bench, BenchReport};
pub use build::{build_dataset, BuildConfig, BuildSummary, QuestionStage};
pub use config::{parse_config, ConfigError, DatasetConfig, MatrixConfig, OutputConfig, RunConfig};
pub use dataset::{DatasetError, GoldRow, Item, LoadedDataset, ResponseRow};
pub use report::{render_csv, render_markdown, render_report, ReportFormat};
pub use run::{
    run_suite, write_bundle, ErrorRow, JudgeTally, MetricsDoc, ReportBundle, RunManifest, ERRORS_FILE, JUDGMENTS_FILE,
    MANIFEST_FILE, METRICS_CSV, METRICS_JSON, METRICS_MD,
};

/// Share of requests a judge may give up on before a run counts as failed.
pub const MAX_EXHAUSTED_RATE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Build(crate::databuilder::BuildError),
    #[error("{}: {1}", .0.display())]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}")]
    Bundle(String),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for input data
    /// problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Dataset(_) | RunError::Build(_) => 3,
            RunError::Io(..) | RunError::Bundle(_) => 1,
        }
    }
}
