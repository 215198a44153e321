use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Retrieval columns of the summary table, in order.
pub const TABLE_COLUMNS: [&str; 5] = ["mAP@1", "mAP@10", "mAP@100", "R@10", "R@100"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub metrics: BTreeMap<String, f64>,
    pub meta: ReportMeta,
}

/// Metric key for the mAP@1 of queries whose style equals `style`.
pub fn filter_key(style: &str) -> String {
    format!("mAP@1[style={style}]")
}

impl MetricsReport {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into(), ..Default::default() }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Checks finiteness and the natural range of every known metric.
    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, &v) in &self.metrics {
            let range = if name == "ARI" || name == "spearman_rho" {
                (-1.0, 1.0)
            } else if name.starts_with("mAP@") || name.starts_with("R@") || name == "ACC" {
                (0.0, 1.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            if !v.is_finite() || v < range.0 || v > range.1 {
                return Err(EvalError::InvalidMetric { name: name.clone(), value: v });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// One row per report; retrieval metrics as percentages with one decimal.
pub fn retrieval_table_tsv(reports: &[MetricsReport], style_columns: &[String]) -> String {
    let mut out = String::from("model");
    for c in TABLE_COLUMNS {
        write!(out, "\t{c}").unwrap();
    }
    for s in style_columns {
        write!(out, "\t{s}").unwrap();
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.model);
        for c in TABLE_COLUMNS {
            write!(out, "\t{}", percent(r.get(c))).unwrap();
        }
        for s in style_columns {
            write!(out, "\t{}", percent(r.get(&filter_key(s)))).unwrap();
        }
        out.push('\n');
    }
    out
}
