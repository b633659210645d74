//! Dataset experiments: one configuration, many seeded runs, optional
//! threshold tuning, and parameter sweeps.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::AuditPlan;
use crate::ensemble::{audit_ch_bound, audit_hedge_bound, CounterTiming, Ensemble, EnsembleConfig, Fusion};
use crate::environment::{DatasetWorld, LabelCorruption};
use crate::ingest::{assign_features, bundled_wdbc, load_wdbc_with, resample_stream, ContextSource, Dataset, Normalization};
use crate::local_learner::{FeedbackMode, Iup, IupConfig};
use crate::metrics::{mean_std, tune_fnr_threshold, ClassificationMetrics, TuningOutcome};
use crate::partition::{partitioning_parameter, Partition};
use crate::{stream_rng, Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Table1,
    ElSweep,
    LlsSweep,
    HorizonSweep,
    ActiveEl,
    Corruption,
    CelSweep,
    AlphaTable,
    SyntheticAudit,
}

impl Mode {
    pub const ALL: [Mode; 9] = [
        Mode::Table1,
        Mode::ElSweep,
        Mode::LlsSweep,
        Mode::HorizonSweep,
        Mode::ActiveEl,
        Mode::Corruption,
        Mode::CelSweep,
        Mode::AlphaTable,
        Mode::SyntheticAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Table1 => "table1",
            Mode::ElSweep => "el-sweep",
            Mode::LlsSweep => "lls-sweep",
            Mode::HorizonSweep => "horizon-sweep",
            Mode::ActiveEl => "active-el",
            Mode::Corruption => "corruption",
            Mode::CelSweep => "cel-sweep",
            Mode::AlphaTable => "alpha-table",
            Mode::SyntheticAudit => "synthetic-audit",
        }
    }

    /// Sweeps a mode runs when the config names none.
    pub fn default_sweeps(self) -> Vec<Sweep> {
        let sweep = |axis: &str, values: &[&str]| Sweep {
            axis: axis.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        };
        match self {
            Mode::Table1 | Mode::SyntheticAudit => vec![],
            Mode::ElSweep => vec![sweep("ensemble", &["ah", "wm"])],
            Mode::LlsSweep => vec![sweep("learners", &["2", "3", "5", "6", "10", "15", "30"])],
            Mode::HorizonSweep => vec![sweep("horizon", &["1000", "2000", "5000", "10000", "20000"])],
            Mode::ActiveEl => vec![sweep("active", &["false", "true"])],
            Mode::Corruption => vec![
                sweep("missing-rate", &["0", "0.1", "0.2", "0.3", "0.4", "0.5"]),
                sweep("flip-rate", &["0", "0.02", "0.04", "0.06", "0.08", "0.1"]),
            ],
            Mode::CelSweep => vec![sweep("context-dim", &["0", "1", "2", "3", "4", "5", "6"])],
            Mode::AlphaTable => vec![sweep("alpha", &["1", "1.5", "1.6", "1.65", "2", "3"])],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Ah,
    #[default]
    Wm,
    ChAh,
    ChWm,
}

impl EnsembleKind {
    pub fn fusion(self) -> Fusion {
        match self {
            EnsembleKind::Ah | EnsembleKind::ChAh => Fusion::Hedge,
            EnsembleKind::Wm | EnsembleKind::ChWm => Fusion::WeightedMajority,
        }
    }

    pub fn contextual(self) -> bool {
        matches!(self, EnsembleKind::ChAh | EnsembleKind::ChWm)
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ah" => Ok(EnsembleKind::Ah),
            "wm" => Ok(EnsembleKind::Wm),
            "ch-ah" | "ch+ah" => Ok(EnsembleKind::ChAh),
            "ch-wm" | "ch+wm" => Ok(EnsembleKind::ChWm),
            _ => Err(Error::Config(format!("unknown ensemble {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: String,
    pub values: Vec<String>,
}

pub const SWEEP_AXES: [&str; 17] = [
    "learners",
    "features-per-learner",
    "context-dim",
    "context-m",
    "horizon",
    "alpha",
    "hoelder-l",
    "m",
    "hyper",
    "tune",
    "ensemble",
    "active",
    "missing-rate",
    "flip-rate",
    "holdout",
    "feedback",
    "normalization",
];

/// Everything one experiment needs. Defaults reproduce the main table setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Number of local learners.
    pub learners: usize,
    pub features_per_learner: usize,
    /// Context features seen by the ensemble; 0 means none.
    pub context_dim: usize,
    /// Cells per context axis for the contextual ensembles.
    pub context_m: u64,
    pub context_source: ContextSource,
    pub horizon: u64,
    pub runs: usize,
    /// First seed; runs use `seed .. seed + runs` unless `seeds` is set.
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub hoelder_l: f64,
    /// Overrides the partitioning parameter derived from `horizon`/`alpha`.
    pub m: Option<u64>,
    pub hyper: f64,
    /// Tune `hyper` for the FNR target instead of using it as given.
    pub tune: bool,
    pub fnr_target: f64,
    pub ensemble: EnsembleKind,
    pub active: bool,
    pub timing: CounterTiming,
    pub missing_rate: f64,
    pub flip_rate: f64,
    /// Fraction of rows held out of the sampling pool; 0 samples from all.
    pub holdout: f64,
    pub normalization: Normalization,
    pub feedback: FeedbackMode,
    /// WDBC file; the bundled copy when absent.
    pub data: Option<PathBuf>,
    pub sweeps: Vec<Sweep>,
    /// Sizes of the synthetic audits.
    pub audit: AuditPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Table1,
            learners: 3,
            features_per_learner: 10,
            context_dim: 0,
            context_m: 2,
            context_source: ContextSource::Overlap,
            horizon: 10_000,
            runs: 50,
            seed: 0,
            seeds: Vec::new(),
            alpha: 2.0,
            hoelder_l: 1.0,
            m: None,
            hyper: 1.0,
            tune: true,
            fnr_target: 0.03,
            ensemble: EnsembleKind::Wm,
            active: false,
            timing: CounterTiming::IncludeCurrent,
            missing_rate: 0.0,
            flip_rate: 0.0,
            holdout: 0.5,
            normalization: Normalization::Standardized,
            feedback: FeedbackMode::Full,
            data: None,
            sweeps: Vec::new(),
            audit: AuditPlan::default(),
        }
    }
}

fn parse_value<T: FromStr>(axis: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {axis}")))
}

fn parse_kebab<T: for<'de> Deserialize<'de>>(axis: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_string()))
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {axis}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if self.runs == 0 && self.seeds.is_empty() {
            return fail("runs", "must be at least 1");
        }
        if self.learners == 0 {
            return fail("learners", "must be at least 1");
        }
        if self.features_per_learner == 0 {
            return fail("features_per_learner", "must be at least 1");
        }
        if self.context_m == 0 {
            return fail("context_m", "must be at least 1");
        }
        if self.horizon == 0 {
            return fail("horizon", "must be at least 1");
        }
        if !(self.alpha > 0.0) {
            return fail("alpha", "must be positive");
        }
        if !(self.hoelder_l >= 0.0) {
            return fail("hoelder_l", "must be non-negative");
        }
        if self.m == Some(0) {
            return fail("m", "must be at least 1");
        }
        if !(self.hyper > 0.0) {
            return fail("hyper", "must be positive");
        }
        if !(self.fnr_target > 0.0 && self.fnr_target < 1.0) {
            return fail("fnr_target", "must lie in (0,1)");
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return fail("holdout", "must lie in [0,1)");
        }
        LabelCorruption::new(self.missing_rate, self.flip_rate)
            .map_err(|e| Error::Config(format!("missing_rate/flip_rate: {e}")))?;
        for s in &self.sweeps {
            if !SWEEP_AXES.contains(&s.axis.as_str()) {
                return fail("sweeps", &format!("unknown axis {:?}", s.axis));
            }
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (self.seed..self.seed + self.runs as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Partitioning parameter for the local learners.
    pub fn resolved_m(&self) -> Result<u64> {
        match self.m {
            Some(m) => Ok(m),
            None => partitioning_parameter(self.horizon, self.alpha, self.features_per_learner, None),
        }
    }

    pub fn ensemble_config(&self) -> Result<EnsembleConfig> {
        let context = if self.ensemble.contextual() && self.context_dim > 0 {
            Some(Partition::new(self.context_dim, self.context_m)?)
        } else {
            None
        };
        Ok(EnsembleConfig { fusion: self.ensemble.fusion(), context, active: self.active, timing: self.timing })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    /// Seeds enter as the explicit list, however they were written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds = self.seed_list();
        canonical.runs = canonical.seeds.len();
        canonical.seed = 0;
        let json = serde_json::to_string(&canonical).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Sets one sweepable field from its textual value. `learners` also
    /// splits the 30 features evenly, so `features_per_learner = 30 / M`.
    pub fn apply_axis(&mut self, axis: &str, value: &str) -> Result<()> {
        match axis {
            "learners" => {
                let m: usize = parse_value(axis, value)?;
                if m == 0 || m > crate::ingest::WDBC_FEATURES {
                    return Err(Error::Config(format!("learners must be in 1..=30, got {m}")));
                }
                self.learners = m;
                self.features_per_learner = crate::ingest::WDBC_FEATURES / m;
            }
            "features-per-learner" => self.features_per_learner = parse_value(axis, value)?,
            "context-dim" => self.context_dim = parse_value(axis, value)?,
            "context-m" => self.context_m = parse_value(axis, value)?,
            "horizon" => self.horizon = parse_value(axis, value)?,
            "alpha" => self.alpha = parse_value(axis, value)?,
            "hoelder-l" => self.hoelder_l = parse_value(axis, value)?,
            "m" => self.m = Some(parse_value(axis, value)?),
            "hyper" => {
                self.hyper = parse_value(axis, value)?;
                self.tune = false;
            }
            "tune" => self.tune = parse_value(axis, value)?,
            "ensemble" => self.ensemble = value.parse()?,
            "active" => self.active = parse_value(axis, value)?,
            "missing-rate" => self.missing_rate = parse_value(axis, value)?,
            "flip-rate" => self.flip_rate = parse_value(axis, value)?,
            "holdout" => self.holdout = parse_value(axis, value)?,
            "feedback" => self.feedback = parse_kebab(axis, value)?,
            "normalization" => self.normalization = parse_kebab(axis, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown axis {axis:?}; expected one of {}",
                    SWEEP_AXES.join(", ")
                )))
            }
        }
        self.validate()
    }

    /// The dataset named by `data`, or the bundled table.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            Some(path) => load_wdbc_with(path, self.normalization),
            None => Ok(bundled_wdbc(self.normalization)),
        }
    }
}

/// Counts from one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub hyper: f64,
    pub m: u64,
    pub ensemble: ClassificationMetrics,
    pub learners: Vec<ClassificationMetrics>,
    /// Local-learner predictions made while exploring, pooled over learners.
    pub explore: ClassificationMetrics,
    pub exploit: ClassificationMetrics,
    /// Correct predictions of the best learner minus those of the ensemble.
    pub ensemble_regret: i64,
    /// Exponential-weights bound for the same horizon and learner count.
    pub hedge_bound: f64,
}

impl RunRecord {
    pub fn learner_pers(&self) -> Vec<f64> {
        self.learners.iter().filter_map(ClassificationMetrics::per).collect()
    }

    pub fn best_learner_per(&self) -> Option<f64> {
        self.learner_pers().into_iter().reduce(f64::min)
    }

    pub fn worst_learner_per(&self) -> Option<f64> {
        self.learner_pers().into_iter().reduce(f64::max)
    }

    pub fn average_learner_per(&self) -> Option<f64> {
        let p = self.learner_pers();
        (!p.is_empty()).then(|| p.iter().sum::<f64>() / p.len() as f64)
    }

    pub fn explore_fraction(&self) -> Option<f64> {
        let total = self.explore.total() + self.exploit.total();
        (total > 0).then(|| self.explore.total() as f64 / total as f64)
    }
}

/// One seeded run of the full system on the dataset with a fixed `hyper`.
pub fn run_dataset(dataset: &Dataset, cfg: &ExperimentConfig, seed: u64, hyper: f64) -> Result<RunRecord> {
    cfg.validate()?;
    let assignment = assign_features(
        dataset,
        cfg.learners,
        cfg.features_per_learner,
        cfg.context_dim,
        cfg.context_source,
        &mut stream_rng(seed, 1),
    )?;
    let holdout = (cfg.holdout > 0.0).then_some(cfg.holdout);
    let stream = resample_stream(dataset, cfg.horizon as usize, &mut stream_rng(seed, 2), holdout)?;
    let mut play = stream_rng(seed, 3);
    let mut noise = stream_rng(seed, 4);
    let corruption = LabelCorruption::new(cfg.missing_rate, cfg.flip_rate)?;

    let m = cfg.resolved_m()?;
    let ll_config = IupConfig::new(2, cfg.features_per_learner, cfg.horizon, cfg.alpha, cfg.hoelder_l)?
        .with_m(m)
        .with_hyper(hyper)
        .with_feedback(cfg.feedback);
    let mut lls = (0..cfg.learners).map(|_| Iup::new(ll_config)).collect::<Result<Vec<_>>>()?;
    let ens_config = cfg.ensemble_config()?;
    let hedge_bound = match ens_config.context {
        Some(p) => audit_ch_bound(cfg.horizon, cfg.learners, p.m(), p.dim()),
        None => audit_hedge_bound(cfg.horizon, cfg.learners),
    };
    let mut el = Ensemble::new(ens_config, cfg.learners)?;
    let world = DatasetWorld::new(dataset, assignment);

    let mut record = RunRecord {
        seed,
        hyper,
        m,
        ensemble: ClassificationMetrics::default(),
        learners: vec![ClassificationMetrics::default(); cfg.learners],
        explore: ClassificationMetrics::default(),
        exploit: ClassificationMetrics::default(),
        ensemble_regret: 0,
        hedge_bound,
    };
    let mut correct = vec![0i64; cfg.learners];
    let mut el_correct = 0i64;

    for &row in &stream.rows {
        let round = world.round_for(row);
        let selections = lls
            .iter()
            .zip(&round.instances)
            .map(|(ll, x)| ll.select_binary(x))
            .collect::<Result<Vec<_>>>()?;
        let predictions: Vec<Label> = selections.iter().map(|s| s.label).collect();
        let flags: Vec<bool> = selections.iter().map(|s| s.exploit).collect();
        let decision = el.decide(&predictions, &flags, &round.el_context, &mut play)?;

        record.ensemble.record(decision.label, round.label);
        el_correct += i64::from(decision.label == round.label);
        for (i, s) in selections.iter().enumerate() {
            record.learners[i].record(s.label, round.label);
            correct[i] += i64::from(s.label == round.label);
            let bucket = if s.exploit { &mut record.exploit } else { &mut record.explore };
            bucket.record(s.label, round.label);
        }

        if let Some(feedback) = corruption.feedback(round.label, &mut noise) {
            for (i, (ll, s)) in lls.iter_mut().zip(&selections).enumerate() {
                ll.observe(&s.cell, s.rule, &round.rewards_against(i, feedback))?;
            }
            let losses: Vec<u8> = predictions.iter().map(|&p| u8::from(p != feedback)).collect();
            el.update(&decision, &losses)?;
        }
    }
    record.ensemble_regret = correct.into_iter().max().unwrap_or(0) - el_correct;
    Ok(record)
}

/// Runs every seed in parallel; output order follows `seeds`.
pub fn run_seeds(dataset: &Dataset, cfg: &ExperimentConfig, seeds: &[u64], hyper: f64) -> Result<Vec<RunRecord>> {
    seeds.par_iter().map(|&s| run_dataset(dataset, cfg, s, hyper)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Runs for which the rate was defined.
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let (mean, std) = mean_std(&v);
        Self { mean, std, n: v.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub config_hash: String,
    pub runs: usize,
    pub hyper: f64,
    pub m: u64,
    pub tuning: Option<TuningOutcome>,
    pub ensemble_per: Stat,
    pub ensemble_fpr: Stat,
    pub ensemble_fnr: Stat,
    pub best_learner_per: Stat,
    pub average_learner_per: Stat,
    pub worst_learner_per: Stat,
    pub explore_fraction: Stat,
    pub explore_per: Stat,
    pub exploit_per: Stat,
    pub ensemble_regret: Stat,
}

impl Summary {
    pub fn from_records(label: &str, cfg: &ExperimentConfig, records: &[RunRecord], tuning: Option<TuningOutcome>) -> Self {
        let first = records.first();
        Self {
            label: label.to_string(),
            config_hash: cfg.hash(),
            runs: records.len(),
            hyper: first.map_or(cfg.hyper, |r| r.hyper),
            m: first.map_or(0, |r| r.m),
            tuning,
            ensemble_per: Stat::of(records.iter().map(|r| r.ensemble.per())),
            ensemble_fpr: Stat::of(records.iter().map(|r| r.ensemble.fpr())),
            ensemble_fnr: Stat::of(records.iter().map(|r| r.ensemble.fnr())),
            best_learner_per: Stat::of(records.iter().map(RunRecord::best_learner_per)),
            average_learner_per: Stat::of(records.iter().map(RunRecord::average_learner_per)),
            worst_learner_per: Stat::of(records.iter().map(RunRecord::worst_learner_per)),
            explore_fraction: Stat::of(records.iter().map(RunRecord::explore_fraction)),
            explore_per: Stat::of(records.iter().map(|r| r.explore.per())),
            exploit_per: Stat::of(records.iter().map(|r| r.exploit.per())),
            ensemble_regret: Stat::of(records.iter().map(|r| Some(r.ensemble_regret as f64))),
        }
    }
}

/// A configuration's runs and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub label: String,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub records: Vec<RunRecord>,
}

fn mean_fnr(records: &[RunRecord]) -> f64 {
    Stat::of(records.iter().map(|r| r.ensemble.fnr())).mean
}

/// Runs one configuration over its seeds, tuning `hyper` first when asked.
pub fn run_config(dataset: &Dataset, cfg: &ExperimentConfig, label: &str) -> Result<ConfigResult> {
    cfg.validate()?;
    let seeds = cfg.seed_list();
    let (records, tuning) = if cfg.tune {
        let mut evaluated: Vec<(f64, Vec<RunRecord>)> = Vec::new();
        let outcome = tune_fnr_threshold(
            |h| {
                let recs = run_seeds(dataset, cfg, &seeds, h)?;
                let f = mean_fnr(&recs);
                evaluated.push((h, recs));
                Ok(f)
            },
            cfg.fnr_target,
        )?;
        let records = evaluated
            .into_iter()
            .find(|(h, _)| *h == outcome.hyper)
            .map(|(_, r)| r)
            .expect("tuned value was evaluated");
        (records, Some(outcome))
    } else {
        (run_seeds(dataset, cfg, &seeds, cfg.hyper)?, None)
    };
    let summary = Summary::from_records(label, cfg, &records, tuning);
    Ok(ConfigResult { label: label.to_string(), config: cfg.clone(), summary, records })
}

/// One result per value of `axis`.
pub fn sweep(dataset: &Dataset, cfg: &ExperimentConfig, axis: &str, values: &[String]) -> Result<Vec<ConfigResult>> {
    values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.sweeps.clear();
            c.apply_axis(axis, v)?;
            run_config(dataset, &c, &format!("{axis}={v}"))
        })
        .collect()
}

/// Results for the configured mode: a single configuration for the main
/// table, otherwise the configured (or the mode's default) sweeps. The
/// synthetic audit has no dataset results.
pub fn run_mode(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<ConfigResult>> {
    cfg.validate()?;
    if cfg.mode == Mode::SyntheticAudit {
        return Ok(Vec::new());
    }
    let sweeps = if cfg.sweeps.is_empty() { cfg.mode.default_sweeps() } else { cfg.sweeps.clone() };
    if sweeps.is_empty() {
        return Ok(vec![run_config(dataset, cfg, cfg.mode.name())?]);
    }
    let mut out = Vec::new();
    for s in &sweeps {
        out.extend(sweep(dataset, cfg, &s.axis, &s.values)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig { horizon: 500, runs: 3, tune: false, ..ExperimentConfig::default() }
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.resolved_m().unwrap(), 2);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml("mode = \"cel-sweep\"\nruns = 4\n").unwrap();
        assert_eq!(partial.mode, Mode::CelSweep);
        assert_eq!(partial.runs, 4);
        assert_eq!(partial.learners, 3);
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let err = ExperimentConfig::from_toml("runs = 0").unwrap_err();
        assert!(err.to_string().contains("runs"));
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        let err = ExperimentConfig::from_toml("missing_rate = 0.7\nflip_rate = 0.7").unwrap_err();
        assert!(err.to_string().contains("missing_rate"));
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_axis("nope", "1").is_err());
        assert!(cfg.apply_axis("alpha", "x").is_err());
    }

    #[test]
    fn axes_apply() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_axis("learners", "6").unwrap();
        assert_eq!((cfg.learners, cfg.features_per_learner), (6, 5));
        cfg.apply_axis("ensemble", "ch-wm").unwrap();
        assert!(cfg.ensemble.contextual());
        cfg.apply_axis("feedback", "bandit").unwrap();
        assert_eq!(cfg.feedback, FeedbackMode::Bandit);
        cfg.apply_axis("hyper", "1.5").unwrap();
        assert!(!cfg.tune);
        cfg.apply_axis("learners", "3").unwrap();
        cfg.apply_axis("alpha", "1").unwrap();
        assert_eq!(cfg.resolved_m().unwrap(), 3);
        for mode in Mode::ALL {
            assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
            for s in mode.default_sweeps() {
                let mut c = ExperimentConfig::default();
                for v in &s.values {
                    c.apply_axis(&s.axis, v).unwrap();
                }
            }
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds = (0..50).collect();
        assert_eq!(a.hash(), b.hash());
        b.horizon = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn runs_are_deterministic_and_consistent() {
        let ds = bundled_wdbc(Normalization::Standardized);
        let cfg = small();
        let a = run_dataset(&ds, &cfg, 7, 1.0).unwrap();
        let b = run_dataset(&ds, &cfg, 7, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ensemble.total(), 500);
        assert_eq!(a.explore.total() + a.exploit.total(), 1500);
        assert!(a.learners.iter().all(|l| l.total() == 500));
        let many = run_seeds(&ds, &cfg, &[7, 8], 1.0).unwrap();
        assert_eq!(many[0], a);
    }

    #[test]
    fn fully_missing_feedback_freezes_learners() {
        let ds = bundled_wdbc(Normalization::Standardized);
        let cfg = ExperimentConfig { missing_rate: 1.0, ..small() };
        let r = run_dataset(&ds, &cfg, 1, 1.0).unwrap();
        // Fresh learners flag every case malignant: no false negatives.
        assert_eq!(r.ensemble.malignant_errors, 0);
        assert_eq!(r.ensemble.fpr(), Some(1.0));
        assert_eq!(r.exploit.total(), 0);
    }

    #[test]
    fn contextual_and_active_variants_run() {
        let ds = bundled_wdbc(Normalization::Standardized);
        for kind in ["ah", "wm", "ch-ah", "ch-wm"] {
            let mut cfg = small();
            cfg.context_dim = 2;
            cfg.apply_axis("ensemble", kind).unwrap();
            cfg.active = true;
            let r = run_dataset(&ds, &cfg, 2, 1.0).unwrap();
            assert_eq!(r.ensemble.total(), 500);
        }
    }

    #[test]
    fn sweep_and_tuning() {
        let ds = bundled_wdbc(Normalization::Standardized);
        let cfg = ExperimentConfig { runs: 2, horizon: 300, ..small() };
        let out = sweep(&ds, &cfg, "missing-rate", &["0".into(), "0.5".into()]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].label, "missing-rate=0.5");
        assert_ne!(out[0].summary.config_hash, out[1].summary.config_hash);

        let tuned = ExperimentConfig { tune: true, ..cfg };
        let res = run_config(&ds, &tuned, "t").unwrap();
        let t = res.summary.tuning.unwrap();
        assert!(t.fnr <= 0.03);
        assert_eq!(res.summary.hyper, t.hyper);
    }
}
