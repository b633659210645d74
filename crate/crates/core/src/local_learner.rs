//! Per-cell UCB learner for a single local learner.
//!
//! The instance space `[0,1]^d` is split into `m^d` hypercubes. For every
//! visited cell and every prediction rule the learner keeps a play count and
//! a success count; the rule with the largest optimistic index
//!
//! ```text
//! g = mean + sqrt( (2 / N) * (1 + 2 ln(2 |F| m^d T^(3/2))) )
//! ```
//!
//! is played, with `g = +inf` for rules never played in the cell. Only
//! visited cells are materialised.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::partition::{partitioning_parameter, doubling_schedule, CellId, Partition, Phase};
use crate::{Error, Label, Result, Rng};

/// Rule 0 always predicts malignant, rule 1 always predicts benign.
pub const MALIGNANT_RULE: usize = 0;
pub const BENIGN_RULE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    /// Only the played rule's statistics are updated.
    #[default]
    Bandit,
    /// Every rule's reward is observed and all statistics in the cell move.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IupConfig {
    pub rule_count: usize,
    pub dim: usize,
    pub horizon: u64,
    pub m: u64,
    pub alpha: f64,
    pub hoelder_l: f64,
    /// Weight on the malignant rule's index in the two-rule decision.
    pub hyper: f64,
    pub feedback: FeedbackMode,
}

impl IupConfig {
    /// Config with `m = ceil(T^(1/(2 alpha + d)))`, `hyper = 1`, bandit feedback.
    pub fn new(rule_count: usize, dim: usize, horizon: u64, alpha: f64, hoelder_l: f64) -> Result<Self> {
        let m = partitioning_parameter(horizon, alpha, dim, None)?;
        let config = Self {
            rule_count,
            dim,
            horizon,
            m,
            alpha,
            hoelder_l,
            hyper: 1.0,
            feedback: FeedbackMode::Bandit,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_m(mut self, m: u64) -> Self {
        self.m = m;
        self
    }

    pub fn with_hyper(mut self, hyper: f64) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn with_feedback(mut self, feedback: FeedbackMode) -> Self {
        self.feedback = feedback;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule_count == 0 {
            return Err(Error::Config("at least one prediction rule is required".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("partitioning parameter must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.hoelder_l >= 0.0) {
            return Err(Error::Config(format!("L must be non-negative, got {}", self.hoelder_l)));
        }
        if !(self.hyper > 0.0) {
            return Err(Error::Config(format!("h_IUP must be positive, got {}", self.hyper)));
        }
        Ok(())
    }

    /// `1 + 2 ln(2 |F| m^d T^(3/2))`, evaluated in log space.
    pub fn log_term(&self) -> f64 {
        let ln_inner = std::f64::consts::LN_2
            + (self.rule_count as f64).ln()
            + self.dim as f64 * (self.m as f64).ln()
            + 1.5 * (self.horizon as f64).ln();
        1.0 + 2.0 * ln_inner
    }

    /// `2 L d^(alpha/2) T^(-alpha/(2 alpha + d))`.
    pub fn approximation_term(&self) -> f64 {
        let d = self.dim as f64;
        2.0 * self.hoelder_l
            * d.powf(self.alpha / 2.0)
            * (self.horizon as f64).powf(-self.alpha / (2.0 * self.alpha + d))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    pub count: u64,
    pub successes: u64,
}

impl RuleStats {
    /// Sample mean accuracy; 0 before the first observation.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.successes as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub visits: u64,
    pub rules: Vec<RuleStats>,
}

impl CellStats {
    fn new(rule_count: usize) -> Self {
        Self { visits: 0, rules: vec![RuleStats::default(); rule_count] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub cell: CellId,
    pub rule: usize,
    /// The played rule also maximises the sample mean in the cell.
    pub exploit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySelection {
    pub cell: CellId,
    pub label: Label,
    pub rule: usize,
    pub exploit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub epsilon: f64,
    pub coverage_level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    pub value: f64,
    /// The bound exceeds the horizon and says nothing.
    pub vacuous: bool,
}

#[derive(Debug, Clone)]
pub struct Iup {
    config: IupConfig,
    partition: Partition,
    log_term: f64,
    cells: BTreeMap<u64, CellStats>,
}

impl Iup {
    pub fn new(config: IupConfig) -> Result<Self> {
        config.validate()?;
        let partition = Partition::new(config.dim, config.m)?;
        Ok(Self { log_term: config.log_term(), config, partition, cells: BTreeMap::new() })
    }

    pub fn config(&self) -> &IupConfig {
        &self.config
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn cells(&self) -> &BTreeMap<u64, CellStats> {
        &self.cells
    }

    pub fn cell_stats(&self, cell: &CellId) -> Option<&CellStats> {
        self.cells.get(&cell.flat)
    }

    pub fn rule_stats(&self, cell: &CellId, rule: usize) -> RuleStats {
        self.cells
            .get(&cell.flat)
            .and_then(|c| c.rules.get(rule).copied())
            .unwrap_or_default()
    }

    pub fn locate(&self, x: &[f64]) -> Result<CellId> {
        self.partition.cell_of(x)
    }

    pub fn index(&self, cell: &CellId, rule: usize) -> f64 {
        let stats = self.rule_stats(cell, rule);
        ucb_index(stats.mean(), stats.count, self.log_term)
    }

    pub fn indices(&self, cell: &CellId) -> Vec<f64> {
        (0..self.config.rule_count).map(|f| self.index(cell, f)).collect()
    }

    fn is_exploit(&self, cell: &CellId, rule: usize) -> bool {
        let Some(stats) = self.cells.get(&cell.flat) else {
            return false;
        };
        if stats.rules.iter().all(|r| r.count == 0) {
            return false;
        }
        let best = stats.rules.iter().map(RuleStats::mean).fold(f64::NEG_INFINITY, f64::max);
        stats.rules[rule].mean() == best
    }

    /// Plays a maximiser of the index in the cell of `x`; ties are broken
    /// uniformly at random.
    pub fn select(&self, x: &[f64], rng: &mut Rng) -> Result<Selection> {
        let cell = self.locate(x)?;
        let g = self.indices(&cell);
        let best = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..g.len()).filter(|&f| g[f] == best).collect();
        let rule = if ties.len() == 1 { ties[0] } else { ties[rng.gen_range(0..ties.len())] };
        let exploit = self.is_exploit(&cell, rule);
        Ok(Selection { cell, rule, exploit })
    }

    /// Two-rule decision: malignant iff `hyper * g_malignant >= g_benign`.
    pub fn select_binary(&self, x: &[f64]) -> Result<BinarySelection> {
        if self.config.rule_count != 2 {
            return Err(Error::Config(format!(
                "binary selection needs exactly 2 rules, learner has {}",
                self.config.rule_count
            )));
        }
        let cell = self.locate(x)?;
        let g_mal = self.index(&cell, MALIGNANT_RULE);
        let g_ben = self.index(&cell, BENIGN_RULE);
        let (label, rule) = if self.config.hyper * g_mal >= g_ben {
            (Label::Malignant, MALIGNANT_RULE)
        } else {
            (Label::Benign, BENIGN_RULE)
        };
        let exploit = self.is_exploit(&cell, rule);
        Ok(BinarySelection { cell, label, rule, exploit })
    }

    fn check_reward(reward: u8) -> Result<()> {
        if reward > 1 {
            return Err(Error::Domain(format!("reward must be 0 or 1, got {reward}")));
        }
        Ok(())
    }

    fn check_rule(&self, rule: usize) -> Result<()> {
        if rule >= self.config.rule_count {
            return Err(Error::Domain(format!(
                "rule {rule} out of range for {} rules",
                self.config.rule_count
            )));
        }
        Ok(())
    }

    /// Bandit update: only the played rule's statistics change.
    pub fn update(&mut self, cell: &CellId, rule: usize, reward: u8) -> Result<()> {
        Self::check_reward(reward)?;
        self.check_rule(rule)?;
        let stats = self
            .cells
            .entry(cell.flat)
            .or_insert_with(|| CellStats::new(self.config.rule_count));
        stats.visits += 1;
        let r = &mut stats.rules[rule];
        r.count += 1;
        r.successes += u64::from(reward);
        Ok(())
    }

    /// Full-information update: every rule's reward is observed.
    pub fn update_all(&mut self, cell: &CellId, rewards: &[u8]) -> Result<()> {
        if rewards.len() != self.config.rule_count {
            return Err(Error::Input(format!(
                "{} rewards for {} rules",
                rewards.len(),
                self.config.rule_count
            )));
        }
        for &r in rewards {
            Self::check_reward(r)?;
        }
        let stats = self
            .cells
            .entry(cell.flat)
            .or_insert_with(|| CellStats::new(self.config.rule_count));
        stats.visits += 1;
        for (s, &r) in stats.rules.iter_mut().zip(rewards) {
            s.count += 1;
            s.successes += u64::from(r);
        }
        Ok(())
    }

    /// Applies the update the configured feedback mode calls for.
    pub fn observe(&mut self, cell: &CellId, played: usize, rewards: &[u8]) -> Result<()> {
        match self.config.feedback {
            FeedbackMode::Bandit => {
                let r = *rewards.get(played).ok_or_else(|| {
                    Error::Input(format!("no reward for played rule {played}"))
                })?;
                self.update(cell, played, r)
            }
            FeedbackMode::Full => self.update_all(cell, rewards),
        }
    }

    /// Radius such that the played rule is within `epsilon` of the best rule
    /// at the instance with probability at least `1 - 1/T`.
    pub fn confidence_epsilon(&self, cell: &CellId, rule: usize) -> Result<ConfidenceReport> {
        let n = self.rule_stats(cell, rule).count;
        if n == 0 {
            return Err(Error::UndefinedConfidence { cell: cell.flat, rule });
        }
        let estimation = (8.0 / n as f64 * self.log_term).sqrt();
        Ok(ConfidenceReport {
            epsilon: estimation + self.config.approximation_term(),
            coverage_level: 1.0 - 1.0 / self.config.horizon as f64,
        })
    }

    pub fn snapshot(&self) -> IupSnapshot {
        IupSnapshot {
            config: self.config,
            cells: self
                .cells
                .iter()
                .map(|(&flat, stats)| CellSnapshot {
                    flat,
                    indices: self
                        .partition
                        .cell_from_flat(flat)
                        .map(|c| c.indices)
                        .unwrap_or_default(),
                    visits: stats.visits,
                    rules: stats.rules.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: &IupSnapshot) -> Result<Self> {
        let mut iup = Self::new(snapshot.config)?;
        for cell in &snapshot.cells {
            if cell.flat >= iup.partition.cell_count() {
                return Err(Error::Input(format!("cell {} outside partition", cell.flat)));
            }
            if cell.rules.len() != snapshot.config.rule_count {
                return Err(Error::Input(format!("cell {} has wrong rule count", cell.flat)));
            }
            if cell.rules.iter().any(|r| r.successes > r.count) {
                return Err(Error::Input(format!("cell {} has successes > count", cell.flat)));
            }
            iup.cells.insert(
                cell.flat,
                CellStats { visits: cell.visits, rules: cell.rules.clone() },
            );
        }
        Ok(iup)
    }
}

/// `+inf` for an unplayed rule, otherwise mean plus the inflation radius.
pub fn ucb_index(mean: f64, count: u64, log_term: f64) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        mean + (2.0 / count as f64 * log_term).sqrt()
    }
}

/// Right-hand side of the conditional regret bound at the balanced
/// partitioning parameter:
/// `T^((a+d)/(2a+d)) C + T^(d/(2a+d)) 2^d |F| + 1`.
pub fn audit_regret_bound(config: &IupConfig) -> Result<RegretBound> {
    config.validate()?;
    let expected_m = partitioning_parameter(config.horizon, config.alpha, config.dim, None)?;
    if config.m != expected_m {
        return Err(Error::Config(format!(
            "balanced bound needs m = {expected_m}, config has m = {}",
            config.m
        )));
    }
    let t = config.horizon as f64;
    let d = config.dim as f64;
    let a = config.alpha;
    let f = config.rule_count as f64;
    let a_m = 2.0 * (2.0 * config.log_term()).sqrt();
    let c = 2.0 * a_m * f.sqrt() * 2f64.powf(d / 2.0) + 2.0 * config.hoelder_l * d.powf(a / 2.0);
    let value = t.powf((a + d) / (2.0 * a + d)) * c + t.powf(d / (2.0 * a + d)) * 2f64.powf(d) * f + 1.0;
    Ok(RegretBound { value, vacuous: value > t })
}

/// Bound for an arbitrary partitioning parameter (e.g. a memory cap):
/// `1 + 2 L d^(a/2) m^(-a) T + |F| m^d + 2 A_m sqrt(|F| m^d T)`.
pub fn regret_bound_for_m(config: &IupConfig) -> Result<RegretBound> {
    config.validate()?;
    let t = config.horizon as f64;
    let d = config.dim as f64;
    let cells = (config.m as f64).powf(d);
    let f = config.rule_count as f64;
    let a_m = 2.0 * (2.0 * config.log_term()).sqrt();
    let value = 1.0
        + 2.0 * config.hoelder_l * d.powf(config.alpha / 2.0) * (config.m as f64).powf(-config.alpha) * t
        + f * cells
        + 2.0 * a_m * (f * cells * t).sqrt();
    Ok(RegretBound { value, vacuous: value > t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IupSnapshot {
    pub config: IupConfig,
    pub cells: Vec<CellSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub flat: u64,
    pub indices: Vec<u64>,
    pub visits: u64,
    pub rules: Vec<RuleStats>,
}

/// Horizon-free wrapper: restarts a fresh learner at the start of every
/// doubling phase, with `m` recomputed from the phase length.
#[derive(Debug, Clone)]
pub struct DoublingIup {
    base: IupConfig,
    first_phase: u64,
    cap: Option<u64>,
    t: u64,
    phase: Option<Phase>,
    inner: Iup,
}

impl DoublingIup {
    pub fn new(base: IupConfig, first_phase: u64, cap: Option<u64>) -> Result<Self> {
        let mut first = base;
        first.horizon = first_phase.max(1);
        first.m = partitioning_parameter(first.horizon, base.alpha, base.dim, cap)?;
        Ok(Self { base, first_phase, cap, t: 0, phase: None, inner: Iup::new(first)? })
    }

    /// Moves to the next global step, restarting the learner on a phase change.
    pub fn begin_round(&mut self) -> Result<Phase> {
        self.t += 1;
        let phase = doubling_schedule(self.first_phase, self.t)?;
        if self.phase.map(|p| p.index) != Some(phase.index) {
            let mut config = self.base;
            config.horizon = phase.horizon;
            config.m = partitioning_parameter(phase.horizon, self.base.alpha, self.base.dim, self.cap)?;
            self.inner = Iup::new(config)?;
        }
        self.phase = Some(phase);
        Ok(phase)
    }

    pub fn learner(&self) -> &Iup {
        &self.inner
    }

    pub fn learner_mut(&mut self) -> &mut Iup {
        &mut self.inner
    }
}
