//! Config-driven runs over the whole toolkit: validate, align, decouple,
//! retrieve and evaluate, plus the feature ablation grid.

mod ablate;
mod config;
mod run;
mod validate;

use std::fmt;
use std::path::{Path, PathBuf};

pub use ablate::{ablation_table_tsv, run_ablation, AblationOutcome, AblationRow, ABLATION_JSON, ABLATION_TSV};
pub use config::{ContentMode, DecoupleConfig, Overrides, RelevanceConfig, RunConfig, CONFIG_VERSION};
pub use run::{
    query_styles, run_pipeline, run_until, PipelineOutcome, StageStatus, ALPHA_FILE, HEAD_FILE, LOSS_CURVE_FILE,
    PURE_STYLE_FILE, RANKINGS_FILE, REPORT_JSON, REPORT_TSV,
};
pub use validate::{validate, Diagnostics, Inputs, Issue};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Validate,
    Align,
    Decouple,
    Retrieve,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validate => "validate",
            Stage::Align => "align",
            Stage::Decouple => "decouple",
            Stage::Retrieve => "retrieve",
            Stage::Eval => "eval",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation failed:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Issue>),
    #[error("output directory is in use by another run ({0} exists)")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Artifacts from earlier stages stay on disk.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: BoxError,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn stage<E: Into<BoxError>>(stage: Stage) -> impl Fn(E) -> Self {
        move |e| Self::Stage { stage, source: e.into() }
    }

    /// 2 for config and validation problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation(_) => 2,
            _ => 3,
        }
    }
}
