//! Regret, classification rates and hyper-parameter tuning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environment::{DatasetWorld, SyntheticWorld};
use crate::partition::Partition;
use crate::{Error, Label, Result};

/// Anything that can report true rule accuracies for a learner.
pub trait AccuracyOracle {
    /// Best rule at `x` and its accuracy.
    fn local_oracle(&self, learner: usize, x: &[f64]) -> Result<(usize, f64)>;
    fn rule_accuracy(&self, learner: usize, rule: usize, x: &[f64]) -> Result<f64>;
}

impl AccuracyOracle for SyntheticWorld {
    fn local_oracle(&self, learner: usize, x: &[f64]) -> Result<(usize, f64)> {
        SyntheticWorld::local_oracle(self, learner, x)
    }

    fn rule_accuracy(&self, learner: usize, rule: usize, x: &[f64]) -> Result<f64> {
        let ll = self
            .learners
            .get(learner)
            .ok_or_else(|| Error::Input(format!("no learner {learner}")))?;
        let f = ll.rules.get(rule).ok_or_else(|| Error::Input(format!("no rule {rule}")))?;
        Ok(f.eval(x))
    }
}

impl AccuracyOracle for DatasetWorld<'_> {
    fn local_oracle(&self, learner: usize, x: &[f64]) -> Result<(usize, f64)> {
        DatasetWorld::local_oracle(self, learner, x)
    }

    fn rule_accuracy(&self, _learner: usize, _rule: usize, _x: &[f64]) -> Result<f64> {
        Err(Error::UnsupportedOracle("dataset worlds have no known accuracy functions".into()))
    }
}

/// One local-learner step: the instance seen and the rule played.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub instance: Vec<f64>,
    pub rule: usize,
}

/// Cumulative `sum_t pi*(x_t) - pi_{a_t}(x_t)` for one learner.
pub fn conditional_regret<W: AccuracyOracle>(world: &W, learner: usize, trace: &[Step]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    trace
        .iter()
        .map(|s| {
            let (_, best) = world.local_oracle(learner, &s.instance)?;
            acc += best - world.rule_accuracy(learner, s.rule, &s.instance)?;
            Ok(acc)
        })
        .collect()
}

/// Cumulative realised regret `sum_t r_oracle(t) - r_played(t)`.
pub fn realized_regret(oracle_rewards: &[u8], played_rewards: &[u8]) -> Result<Vec<i64>> {
    if oracle_rewards.len() != played_rewards.len() {
        return Err(Error::Input("reward sequences differ in length".into()));
    }
    let mut acc = 0i64;
    Ok(oracle_rewards
        .iter()
        .zip(played_rewards)
        .map(|(&o, &p)| {
            acc += i64::from(o) - i64::from(p);
            acc
        })
        .collect())
}

fn check_shapes(rewards: &[Vec<u8>], q: &[Vec<f64>]) -> Result<usize> {
    if rewards.len() != q.len() {
        return Err(Error::Input(format!("{} reward rows but {} distributions", rewards.len(), q.len())));
    }
    let m = rewards.first().map_or(0, Vec::len);
    if rewards.iter().any(|r| r.len() != m) || q.iter().any(|r| r.len() != m) {
        return Err(Error::Input("ragged reward or distribution rows".into()));
    }
    Ok(m)
}

/// `max_i sum_t v_i(t) - sum_t <q(t), v(t)>`.
pub fn exact_pseudo_regret(rewards: &[Vec<u8>], q: &[Vec<f64>]) -> Result<f64> {
    let m = check_shapes(rewards, q)?;
    let mut totals = vec![0u64; m];
    let mut expected = 0.0;
    for (v, qt) in rewards.iter().zip(q) {
        for i in 0..m {
            totals[i] += u64::from(v[i]);
            expected += qt[i] * f64::from(v[i]);
        }
    }
    Ok(totals.into_iter().max().unwrap_or(0) as f64 - expected)
}

/// Contextual pseudo-regret and its per-cell terms, each cell compared with
/// its own best learner.
pub fn contextual_pseudo_regret(
    rewards: &[Vec<u8>],
    q: &[Vec<f64>],
    cells: &[u64],
) -> Result<(f64, BTreeMap<u64, f64>)> {
    check_shapes(rewards, q)?;
    if cells.len() != rewards.len() {
        return Err(Error::Input("one cell per round is required".into()));
    }
    type Rows = (Vec<Vec<u8>>, Vec<Vec<f64>>);
    let mut groups: BTreeMap<u64, Rows> = BTreeMap::new();
    for ((v, qt), &c) in rewards.iter().zip(q).zip(cells) {
        let g = groups.entry(c).or_default();
        g.0.push(v.clone());
        g.1.push(qt.clone());
    }
    let mut per_cell = BTreeMap::new();
    for (c, (v, qt)) in groups {
        per_cell.insert(c, exact_pseudo_regret(&v, &qt)?);
    }
    Ok((per_cell.values().sum(), per_cell))
}

/// `sum_p max_i sum_{t in p} v_i(t)`: total reward of the per-cell best
/// learners.
pub fn cell_benchmark(rewards: &[Vec<u8>], cells: &[u64]) -> Result<u64> {
    if cells.len() != rewards.len() {
        return Err(Error::Input("one cell per round is required".into()));
    }
    let m = rewards.first().map_or(0, Vec::len);
    let mut totals: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (v, &c) in rewards.iter().zip(cells) {
        let t = totals.entry(c).or_insert_with(|| vec![0; m]);
        for (a, &r) in t.iter_mut().zip(v) {
            *a += u64::from(r);
        }
    }
    Ok(totals.values().map(|t| t.iter().copied().max().unwrap_or(0)).sum())
}

/// The per-cell benchmark for contexts under `partition`.
pub fn partition_benchmark(rewards: &[Vec<u8>], contexts: &[Vec<f64>], partition: &Partition) -> Result<u64> {
    let cells = contexts
        .iter()
        .map(|x| partition.cell_of(x).map(|c| c.flat))
        .collect::<Result<Vec<_>>>()?;
    cell_benchmark(rewards, &cells)
}

/// Error counts for a binary classifier, kept as integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub benign: u64,
    pub benign_errors: u64,
    pub malignant: u64,
    pub malignant_errors: u64,
}

impl ClassificationMetrics {
    pub fn record(&mut self, predicted: Label, truth: Label) {
        let wrong = u64::from(predicted != truth);
        match truth {
            Label::Benign => {
                self.benign += 1;
                self.benign_errors += wrong;
            }
            Label::Malignant => {
                self.malignant += 1;
                self.malignant_errors += wrong;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.benign += other.benign;
        self.benign_errors += other.benign_errors;
        self.malignant += other.malignant;
        self.malignant_errors += other.malignant_errors;
    }

    pub fn total(&self) -> u64 {
        self.benign + self.malignant
    }

    pub fn errors(&self) -> u64 {
        self.benign_errors + self.malignant_errors
    }

    /// Overall error rate; `None` with no samples.
    pub fn per(&self) -> Option<f64> {
        ratio(self.errors(), self.total())
    }

    /// Error rate on benign cases.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.benign_errors, self.benign)
    }

    /// Error rate on malignant cases.
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.malignant_errors, self.malignant)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(predicted: &[Label], truth: &[Label]) -> Result<ClassificationMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Input("prediction and label sequences differ in length".into()));
    }
    let mut m = ClassificationMetrics::default();
    for (&p, &y) in predicted.iter().zip(truth) {
        m.record(p, y);
    }
    Ok(m)
}

/// `(PM(B) - PM(A)) / PM(B)`: relative gain of `A` over `B`.
pub fn improvement_ratio(pm_b: f64, pm_a: f64) -> Result<f64> {
    if !(pm_b > 0.0) {
        return Err(Error::Domain(format!("reference measure must be positive, got {pm_b}")));
    }
    Ok((pm_b - pm_a) / pm_b)
}

/// Mean and sample standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub hyper: f64,
    pub fnr: f64,
    pub evaluations: u32,
}

pub const TUNE_LOW: f64 = 0.5;
pub const TUNE_HIGH: f64 = 4.0;
pub const TUNE_WINDOW: f64 = 0.002;
pub const TUNE_MAX_ITERATIONS: u32 = 20;

/// Bisection on `h` in `[0.5, 4]` for a mean FNR inside
/// `(target - 0.002, target]`. `fnr_at` must be non-increasing in `h`.
/// Returns the last feasible `h` when the window is not hit.
pub fn tune_fnr_threshold<F>(mut fnr_at: F, target: f64) -> Result<TuningOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let in_window = |f: f64| f <= target && f > target - TUNE_WINDOW;
    let mut evaluations = 1;
    let f_hi = fnr_at(TUNE_HIGH)?;
    if f_hi > target {
        return Err(Error::Tuning(format!(
            "FNR {f_hi:.4} at h = {TUNE_HIGH} still exceeds the target {target}"
        )));
    }
    let mut best = TuningOutcome { hyper: TUNE_HIGH, fnr: f_hi, evaluations };
    if in_window(f_hi) {
        return Ok(best);
    }
    evaluations += 1;
    let f_lo = fnr_at(TUNE_LOW)?;
    if f_lo <= target {
        // Already feasible at the least aggressive setting.
        return Ok(TuningOutcome { hyper: TUNE_LOW, fnr: f_lo, evaluations });
    }
    let (mut lo, mut hi) = (TUNE_LOW, TUNE_HIGH);
    for _ in 0..TUNE_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        let f = fnr_at(mid)?;
        if f <= target {
            hi = mid;
            best = TuningOutcome { hyper: mid, fnr: f, evaluations };
            if in_window(f) {
                break;
            }
        } else {
            lo = mid;
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}
