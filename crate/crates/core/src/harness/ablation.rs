//! Ablation drivers: node-choice and spectral-filter-placement comparisons
//! over a fixed seeded suite.

use std::str::FromStr;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::harness::metrics::BenchmarkSummary;
use crate::harness::pipeline::{eval_suite, NodeStrategy, PipelineOptions, SuiteSpec};
use crate::patch_matching::SmPlacement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AblationMode {
    NodeChoice,
    SmPlacement,
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-choice" => Ok(AblationMode::NodeChoice),
            "sm-placement" => Ok(AblationMode::SmPlacement),
            other => Err(Error::InvalidParameter {
                name: "mode",
                reason: format!("unknown ablation mode `{other}` (node-choice, sm-placement)"),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationEntry {
    pub name: String,
    pub summary: BenchmarkSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub suite: SuiteSpec,
    pub entries: Vec<AblationEntry>,
}

pub fn node_choice_variants() -> Vec<(&'static str, PipelineOptions)> {
    let sm = SmPlacement::default();
    vec![
        (
            "grid-superpoint",
            PipelineOptions {
                strategy: NodeStrategy::Superpoint,
                sm,
            },
        ),
        (
            "non-salient-only",
            PipelineOptions {
                strategy: NodeStrategy::NonSalientOnly,
                sm,
            },
        ),
        (
            "salient-only",
            PipelineOptions {
                strategy: NodeStrategy::SalientOnly,
                sm,
            },
        ),
        (
            "hybrid",
            PipelineOptions {
                strategy: NodeStrategy::Hybrid,
                sm,
            },
        ),
        (
            "hybrid+dual-matching",
            PipelineOptions {
                strategy: NodeStrategy::HybridDual,
                sm,
            },
        ),
    ]
}

pub fn sm_placement_variants() -> Vec<(&'static str, PipelineOptions)> {
    let mk = |salient, non_salient| PipelineOptions {
        strategy: NodeStrategy::HybridDual,
        sm: SmPlacement {
            salient,
            non_salient,
        },
    };
    vec![
        ("sm-neither", mk(false, false)),
        ("sm-salient-only", mk(true, false)),
        ("sm-both", mk(true, true)),
        ("sm-non-salient-only", mk(false, true)),
    ]
}

/// Runs every configuration of the chosen mode over one fixed suite of
/// pairs, so comparisons are paired.
pub fn ablation_suite(
    mode: AblationMode,
    suite: SuiteSpec,
    cfg: &PipelineConfig,
) -> Result<AblationReport> {
    let pairs = suite.generate()?;
    let variants = match mode {
        AblationMode::NodeChoice => node_choice_variants(),
        AblationMode::SmPlacement => sm_placement_variants(),
    };
    let mut entries = Vec::new();
    for (name, opts) in variants {
        let (summary, _) = eval_suite(&pairs, cfg, &opts)?;
        entries.push(AblationEntry {
            name: name.to_string(),
            summary,
        });
    }
    Ok(AblationReport {
        mode,
        suite,
        entries,
    })
}

/// Plain-text summary table, one row per configuration.
pub fn format_report_table(report: &AblationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>7} {:>7} {:>8} {:>10} {:>9}\n",
        "config", "RR", "FMR", "mean IR", "med RRE°", "med RTE"
    ));
    for e in &report.entries {
        let s = &e.summary;
        out.push_str(&format!(
            "{:<22} {:>7.3} {:>7.3} {:>8.3} {:>10} {:>9}\n",
            e.name,
            s.rr,
            s.fmr,
            s.mean_ir,
            s.median_rre_deg
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
            s.median_rte
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}
