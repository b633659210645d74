//! Output files. Schemas are described in the README.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use hedged_core::audit::AuditCheck;
use hedged_core::experiment::{ConfigResult, ExperimentConfig, Summary};
use hedged_core::metrics::improvement_ratio;
use serde::Serialize;

const RUNS_HEADER: &str = "label,seed,config_hash,hyper,m,el_per,el_fpr,el_fnr,best_ll_per,avg_ll_per,\
worst_ll_per,explore_fraction,explore_per,exploit_per,ensemble_regret,hedge_bound";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn runs_csv(results: &[ConfigResult]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in results {
        for rec in &r.records {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{},{},{:.6}",
                r.label,
                rec.seed,
                r.summary.config_hash,
                rec.hyper,
                rec.m,
                cell(rec.ensemble.per()),
                cell(rec.ensemble.fpr()),
                cell(rec.ensemble.fnr()),
                cell(rec.best_learner_per()),
                cell(rec.average_learner_per()),
                cell(rec.worst_learner_per()),
                cell(rec.explore_fraction()),
                cell(rec.explore.per()),
                cell(rec.exploit.per()),
                rec.ensemble_regret,
                rec.hedge_bound,
            );
        }
    }
    out
}

pub fn write_runs_csv(path: &Path, results: &[ConfigResult]) -> Result<()> {
    std::fs::write(path, runs_csv(results)).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    /// Relative PER gain of the ensemble over the best learner.
    improvement_vs_best_learner: Option<f64>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    mode: String,
    config_hash: String,
    notes: Vec<&'static str>,
    results: Vec<SummaryEntry<'a>>,
}

pub fn write_summary(path: &Path, cfg: &ExperimentConfig, results: &[ConfigResult]) -> Result<()> {
    let file = SummaryFile {
        mode: cfg.mode.to_string(),
        config_hash: cfg.hash(),
        notes: vec![
            "feature scaling statistics are computed over the full dataset, including held-out rows",
            "rates are fractions in [0,1]; undefined rates are excluded from means",
        ],
        results: results
            .iter()
            .map(|r| SummaryEntry {
                summary: &r.summary,
                improvement_vs_best_learner: improvement_ratio(r.summary.best_learner_per.mean, r.summary.ensemble_per.mean).ok(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

/// FNR constraint per tuned configuration.
pub fn dataset_checks(cfg: &ExperimentConfig, results: &[ConfigResult]) -> Vec<AuditCheck> {
    results
        .iter()
        .filter(|r| r.config.tune)
        .map(|r| {
            let fnr = r.summary.ensemble_fnr.mean;
            let ok = fnr <= cfg.fnr_target;
            AuditCheck {
                name: format!("fnr constraint [{}]", r.label),
                cases: r.summary.runs as u64,
                violations: u64::from(!ok),
                worst_ratio: fnr / cfg.fnr_target,
                passed: ok,
                detail: format!("mean FNR {fnr:.5} vs target {}", cfg.fnr_target),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct AuditFile<'a> {
    passed: bool,
    checks: &'a [AuditCheck],
}

/// Writes the report and returns whether every check passed.
pub fn write_audit(path: &Path, checks: &[AuditCheck]) -> Result<bool> {
    let passed = checks.iter().all(|c| c.passed);
    let json = serde_json::to_string_pretty(&AuditFile { passed, checks })?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(passed)
}
