use serde::Serialize;

use super::config::{ContentMode, RunConfig};
use super::run::{
    align_stage, checked_inputs, decouple_in_memory, evaluate, read_stamps, retrieve, OutputLock, StageStatus,
};
use super::PipelineError;
use crate::eval::MetricsReport;
use crate::store::codec::write_atomic;

pub const ABLATION_TSV: &str = "ablation.tsv";
pub const ABLATION_JSON: &str = "ablation.json";

/// One feature combination. The multi-modal image feature is always on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub use_text: bool,
    pub content: ContentMode,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    /// The alignment head came from an earlier run.
    pub head_reused: bool,
}

const GRID: [(&str, bool, ContentMode); 5] = [
    ("img", false, ContentMode::Off),
    ("img+txt", true, ContentMode::Off),
    ("img+content_trained", false, ContentMode::Trained),
    ("img+txt+content_raw", true, ContentMode::Raw),
    ("img+txt+content_trained", true, ContentMode::Trained),
];

/// Config for one grid cell; identical to a pipeline run with the same
/// decouple settings, so the reports can be compared directly.
fn cell_config(base: &RunConfig, use_text: bool, content: ContentMode) -> RunConfig {
    let mut cfg = base.clone();
    cfg.decouple.use_text = use_text;
    cfg.decouple.content = content;
    cfg
}

/// Runs the five-row feature ablation and writes `ablation.tsv` and
/// `ablation.json` to the output directory.
///
/// Needs every role bound. The trained head is shared by the rows that use
/// it and cached like the pipeline's alignment stage.
pub fn run_ablation(base: &RunConfig, force: bool) -> Result<AblationOutcome, PipelineError> {
    let mut full = base.clone();
    full.decouple.use_text = true;
    full.decouple.content = ContentMode::Trained;
    let inputs = checked_inputs(&full)?;
    for role in crate::store::FeatureRole::ALL {
        if !inputs.sets.contains_key(&role) {
            return Err(PipelineError::Validation(vec![super::Issue::MissingRole(role)]));
        }
    }
    let _lock = OutputLock::acquire(&base.output_dir)?;
    let mut stamps = read_stamps(&base.output_dir);
    let (head, status) = align_stage(&full, &inputs, force, &mut stamps)?;
    let head_reused = status == StageStatus::Reused;

    let mut rows = Vec::with_capacity(GRID.len());
    for (name, use_text, content) in GRID {
        let cfg = cell_config(base, use_text, content);
        let head = (content == ContentMode::Trained).then_some(&head);
        let (pure, _) = decouple_in_memory(&cfg, &inputs, head)?;
        let (index, lists) = retrieve(&cfg, &inputs.manifest, &pure)?;
        let report = evaluate(&cfg, &inputs.manifest, &pure, &index, &lists)?;
        log::info!("ablation {name}: mAP@1 = {:?}", report.get("mAP@1"));
        rows.push(AblationRow { name: name.to_string(), use_text, content, report });
    }
    let outcome = AblationOutcome { rows, head_reused };
    let write = |file: &str, text: String| {
        let path = base.output_dir.join(file);
        write_atomic(&path, text.as_bytes()).map_err(|e| PipelineError::io(&path, e))
    };
    write(ABLATION_TSV, ablation_table_tsv(&outcome.rows))?;
    write(ABLATION_JSON, serde_json::to_string_pretty(&outcome).expect("serializes") + "\n")?;
    Ok(outcome)
}

/// Feature columns marked `x`, then mAP@1, mAP@10 and R@10 as percentages.
pub fn ablation_table_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("img\ttxt\tcontent_raw\tcontent_trained\tmAP@1\tmAP@10\tR@10\n");
    let mark = |on: bool| if on { "x" } else { "-" };
    for row in rows {
        let cells = [
            mark(true),
            mark(row.use_text),
            mark(row.content == ContentMode::Raw),
            mark(row.content == ContentMode::Trained),
        ];
        out.push_str(&cells.join("\t"));
        for key in ["mAP@1", "mAP@10", "R@10"] {
            match row.report.get(key) {
                Some(v) => out.push_str(&format!("\t{:.1}", 100.0 * v)),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}
