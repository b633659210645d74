//! Round generators.
//!
//! A [`Round`] carries one instance per local learner, the ensemble's
//! context, the true label and the prediction every rule would make. Rewards
//! are derived from predictions against whichever label is revealed, which
//! keeps label corruption a pure transform on the feedback.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ingest::{Assignment, Dataset};
use crate::{Error, Label, Result, Rng};

/// Accuracy of a stochastic rule as a function of the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AccuracyFn {
    Constant { value: f64 },
    /// `intercept + slope * mean(x)`.
    MeanAffine { intercept: f64, slope: f64 },
    /// `intercept + <weights, x>`.
    Affine { intercept: f64, weights: Vec<f64> },
}

impl AccuracyFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            AccuracyFn::Constant { value } => *value,
            AccuracyFn::MeanAffine { intercept, slope } => {
                let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
                intercept + slope * mean
            }
            AccuracyFn::Affine { intercept, weights } => {
                intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
        }
    }

    /// Range of the function over the unit cube.
    fn range(&self) -> (f64, f64) {
        match self {
            AccuracyFn::Constant { value } => (*value, *value),
            AccuracyFn::MeanAffine { intercept, slope } => {
                let end = intercept + slope;
                (intercept.min(end), intercept.max(end))
            }
            AccuracyFn::Affine { intercept, weights } => {
                let lo = intercept + weights.iter().map(|w| w.min(0.0)).sum::<f64>();
                let hi = intercept + weights.iter().map(|w| w.max(0.0)).sum::<f64>();
                (lo, hi)
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let AccuracyFn::Affine { weights, .. } = self {
            if weights.len() != dim {
                return Err(Error::Config(format!(
                    "affine accuracy has {} weights for dimension {dim}",
                    weights.len()
                )));
            }
        }
        let (lo, hi) = self.range();
        if !(lo >= 0.0 && hi <= 1.0) {
            return Err(Error::Config(format!("accuracy range [{lo}, {hi}] leaves [0,1]")));
        }
        Ok(())
    }

    /// Euclidean Lipschitz constant over `[0,1]^dim`.
    pub fn lipschitz(&self, dim: usize) -> f64 {
        match self {
            AccuracyFn::Constant { .. } => 0.0,
            AccuracyFn::MeanAffine { slope, .. } => slope.abs() / (dim.max(1) as f64).sqrt(),
            AccuracyFn::Affine { weights, .. } => weights.iter().map(|w| w * w).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleKind {
    ConstantLabel { label: Label },
    Stochastic { accuracy: AccuracyFn },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRule {
    pub id: usize,
    pub kind: RuleKind,
}

impl PredictionRule {
    /// The two rules used on the diagnosis data: always malignant, always benign.
    pub fn constant_pair() -> Vec<PredictionRule> {
        vec![
            PredictionRule { id: 0, kind: RuleKind::ConstantLabel { label: Label::Malignant } },
            PredictionRule { id: 1, kind: RuleKind::ConstantLabel { label: Label::Benign } },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub instances: Vec<Vec<f64>>,
    pub el_context: Vec<f64>,
    pub label: Label,
    /// `predictions[i][f]`: what rule `f` of learner `i` predicts.
    pub predictions: Vec<Vec<Label>>,
}

impl Round {
    /// Rewards of learner `i`'s rules against `label`.
    pub fn rewards_against(&self, learner: usize, label: Label) -> Vec<u8> {
        self.predictions[learner].iter().map(|&p| u8::from(p == label)).collect()
    }

    pub fn reward(&self, learner: usize, rule: usize) -> u8 {
        u8::from(self.predictions[learner][rule] == self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWorld {
    pub dim: usize,
    pub rules: Vec<AccuracyFn>,
}

/// World with known accuracy functions. Instances are uniform on the unit
/// cube; each learner draws one uniform per round and rule `f` is correct
/// iff that uniform falls below `pi_f(x)`, so rewards are ordered like the
/// accuracies within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub learners: Vec<LocalWorld>,
    pub hoelder_l: f64,
    pub alpha: f64,
    #[serde(default)]
    pub el_dim: usize,
    /// Probability that the true label is malignant.
    #[serde(default = "half")]
    pub malignant_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl SyntheticWorld {
    /// `pi_1 = 0.5 + 0.4 mean(x)`, `pi_2 = 0.9 - 0.4 mean(x)`; the two cross
    /// at `mean(x) = 0.5`. `L = 0.4` with `alpha = 1` holds for every `dim`.
    pub fn default_suite(learners: usize, dim: usize) -> Self {
        let local = LocalWorld {
            dim,
            rules: vec![
                AccuracyFn::MeanAffine { intercept: 0.5, slope: 0.4 },
                AccuracyFn::MeanAffine { intercept: 0.9, slope: -0.4 },
            ],
        };
        Self {
            learners: vec![local; learners],
            hoelder_l: 0.4,
            alpha: 1.0,
            el_dim: 0,
            malignant_rate: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::Config("synthetic world needs at least one learner".into()));
        }
        if !(self.alpha > 0.0) || !(self.hoelder_l >= 0.0) {
            return Err(Error::Config("alpha must be positive and L non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.malignant_rate) {
            return Err(Error::Config("malignant_rate must lie in [0,1]".into()));
        }
        for (i, ll) in self.learners.iter().enumerate() {
            if ll.dim == 0 || ll.rules.is_empty() {
                return Err(Error::Config(format!("learner {i} needs dim >= 1 and a rule")));
            }
            for rule in &ll.rules {
                rule.validate(ll.dim)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let world: Self = serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))?;
        world.validate()?;
        Ok(world)
    }

    pub fn accuracy(&self, learner: usize, rule: usize, x: &[f64]) -> f64 {
        self.learners[learner].rules[rule].eval(x)
    }

    pub fn draw_round(&self, rng: &mut Rng) -> Round {
        let label = if rng.gen_bool(self.malignant_rate) { Label::Malignant } else { Label::Benign };
        let mut instances = Vec::with_capacity(self.learners.len());
        let mut predictions = Vec::with_capacity(self.learners.len());
        for ll in &self.learners {
            let x: Vec<f64> = (0..ll.dim).map(|_| rng.gen::<f64>()).collect();
            let u: f64 = rng.gen();
            predictions.push(
                ll.rules
                    .iter()
                    .map(|r| if u < r.eval(&x) { label } else { label.flipped() })
                    .collect(),
            );
            instances.push(x);
        }
        let el_context = (0..self.el_dim).map(|_| rng.gen::<f64>()).collect();
        Round { instances, el_context, label, predictions }
    }

    /// Best rule at `x` and its accuracy; lowest id wins ties.
    pub fn local_oracle(&self, learner: usize, x: &[f64]) -> Result<(usize, f64)> {
        let ll = self
            .learners
            .get(learner)
            .ok_or_else(|| Error::Input(format!("no learner {learner}")))?;
        let mut best = (0, f64::NEG_INFINITY);
        for (f, rule) in ll.rules.iter().enumerate() {
            let v = rule.eval(x);
            if v > best.1 {
                best = (f, v);
            }
        }
        Ok(best)
    }

    /// Checks `|pi(x) - pi(x')| <= L |x - x'|^alpha` on random pairs.
    pub fn certify_hoelder(&self, pairs: usize, rng: &mut Rng) -> Result<()> {
        for (i, ll) in self.learners.iter().enumerate() {
            for (f, rule) in ll.rules.iter().enumerate() {
                for _ in 0..pairs {
                    let x: Vec<f64> = (0..ll.dim).map(|_| rng.gen::<f64>()).collect();
                    let y: Vec<f64> = (0..ll.dim).map(|_| rng.gen::<f64>()).collect();
                    let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let gap = (rule.eval(&x) - rule.eval(&y)).abs();
                    if gap > self.hoelder_l * dist.powf(self.alpha) + 1e-12 {
                        return Err(Error::Config(format!(
                            "learner {i} rule {f} violates the Hölder condition: gap {gap} at distance {dist}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// World over dataset rows. Every learner sees its assigned features and
/// owns the constant rule pair.
#[derive(Debug, Clone)]
pub struct DatasetWorld<'a> {
    pub dataset: &'a Dataset,
    pub assignment: Assignment,
}

impl<'a> DatasetWorld<'a> {
    pub fn new(dataset: &'a Dataset, assignment: Assignment) -> Self {
        Self { dataset, assignment }
    }

    pub fn round_for(&self, row: usize) -> Round {
        let rec = &self.dataset.rows[row];
        let instances = self
            .assignment
            .learners
            .iter()
            .map(|feats| feats.iter().map(|&k| rec.features[k]).collect())
            .collect();
        let el_context = self.assignment.context.iter().map(|&k| rec.features[k]).collect();
        let predictions = vec![vec![Label::Malignant, Label::Benign]; self.assignment.learners.len()];
        Round { instances, el_context, label: rec.label, predictions }
    }

    pub fn draw_round(&self, pool: &[usize], rng: &mut Rng) -> Round {
        self.round_for(pool[rng.gen_range(0..pool.len())])
    }

    /// Accuracy functions are unknown for real data.
    pub fn local_oracle(&self, _learner: usize, _x: &[f64]) -> Result<(usize, f64)> {
        Err(Error::UnsupportedOracle("dataset worlds have no known accuracy functions".into()))
    }
}

/// Feedback corruption: the revealed label is missing with probability
/// `missing_rate`, flipped with probability `flip_rate`, clean otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelCorruption {
    pub missing_rate: f64,
    pub flip_rate: f64,
}

impl LabelCorruption {
    pub fn new(missing_rate: f64, flip_rate: f64) -> Result<Self> {
        let c = Self { missing_rate, flip_rate };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.missing_rate)
            && (0.0..=1.0).contains(&self.flip_rate)
            && self.missing_rate + self.flip_rate <= 1.0 + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "corruption rates ({}, {}) must be in [0,1] and sum to at most 1",
                self.missing_rate, self.flip_rate
            )))
        }
    }

    /// One uniform draw per call, whatever the rates.
    pub fn feedback(&self, label: Label, rng: &mut Rng) -> Option<Label> {
        let u: f64 = rng.gen();
        if u < self.missing_rate {
            None
        } else if u < self.missing_rate + self.flip_rate {
            Some(label.flipped())
        } else {
            Some(label)
        }
    }
}

/// Pairs each round with the feedback label learners will see.
pub fn corrupt_labels<'r, I>(
    rounds: I,
    corruption: LabelCorruption,
    rng: &'r mut Rng,
) -> impl Iterator<Item = (Round, Option<Label>)> + 'r
where
    I: IntoIterator<Item = Round>,
    I::IntoIter: 'r,
{
    rounds.into_iter().map(move |r| {
        let fb = corruption.feedback(r.label, rng);
        (r, fb)
    })
}
