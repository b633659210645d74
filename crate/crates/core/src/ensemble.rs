//! Ensemble learners over local-learner predictions.
//!
//! All of them share the anytime exponential-weights distribution
//! `q_i ∝ exp(-eta(n) L_i)` with `eta(n) = sqrt(ln M / n)`, where `n` is the
//! current round and `L_i` the cumulative loss of learner `i` before it.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::partition::{CellId, Partition};
use crate::{Error, Label, Result, Rng};

/// `sqrt(ln M / n)`; non-increasing in `n`.
pub fn learning_rate(round: u64, experts: usize) -> f64 {
    ((experts as f64).ln() / round.max(1) as f64).sqrt()
}

/// Exponential weights at round `round` for the given cumulative losses.
/// Weights are shifted by the minimum loss before exponentiation.
pub fn hedge_distribution(losses: &[u64], round: u64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::Config("ensemble needs at least one learner".into()));
    }
    let eta = learning_rate(round, losses.len());
    let min = *losses.iter().min().unwrap_or(&0);
    let w: Vec<f64> = losses.iter().map(|&l| (-eta * (l - min) as f64).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Draws an index from `q` with a single uniform draw.
pub fn sample_index(q: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in q.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HedgeState {
    pub losses: Vec<u64>,
    /// Rounds with feedback so far.
    pub t: u64,
}

impl HedgeState {
    pub fn new(experts: usize) -> Result<Self> {
        if experts == 0 {
            return Err(Error::Config("ensemble needs at least one learner".into()));
        }
        Ok(Self { losses: vec![0; experts], t: 0 })
    }

    pub fn experts(&self) -> usize {
        self.losses.len()
    }

    /// Distribution for the upcoming round `t + 1`.
    pub fn distribution(&self) -> Vec<f64> {
        distribution_at(&self.losses, self.t + 1, None)
    }

    pub fn update(&mut self, losses: &[u8]) -> Result<()> {
        self.update_masked(losses, None)
    }

    /// Accumulates losses only for `subset` (all learners when `None`).
    pub fn update_masked(&mut self, losses: &[u8], subset: Option<&[usize]>) -> Result<()> {
        if losses.len() != self.losses.len() {
            return Err(Error::Input(format!(
                "{} losses for {} learners",
                losses.len(),
                self.losses.len()
            )));
        }
        if losses.iter().any(|&l| l > 1) {
            return Err(Error::Domain("losses must be 0 or 1".into()));
        }
        match subset {
            None => self.losses.iter_mut().zip(losses).for_each(|(acc, &l)| *acc += u64::from(l)),
            Some(s) => {
                for &i in s {
                    self.losses[i] += u64::from(losses[i]);
                }
            }
        }
        self.t += 1;
        Ok(())
    }
}

/// Hedge weights at `round`, optionally restricted (and renormalised) to a
/// subset of learners. Entries outside the subset are zero.
fn distribution_at(losses: &[u64], round: u64, subset: Option<&[usize]>) -> Vec<f64> {
    match subset {
        None => hedge_distribution(losses, round).expect("non-empty losses"),
        Some(s) => {
            let eta = learning_rate(round, losses.len());
            let min = s.iter().map(|&i| losses[i]).min().unwrap_or(0);
            let mut q = vec![0.0; losses.len()];
            for &i in s {
                q[i] = (-eta * (losses[i] - min) as f64).exp();
            }
            let total: f64 = q.iter().sum();
            if total > 0.0 {
                q.iter_mut().for_each(|x| *x /= total);
            }
            q
        }
    }
}

/// Follows one learner sampled from the hedge distribution.
pub fn ah_choose(state: &HedgeState, predictions: &[Label], rng: &mut Rng) -> Result<(Label, usize)> {
    if predictions.len() != state.experts() {
        return Err(Error::Input(format!(
            "{} predictions for {} learners",
            predictions.len(),
            state.experts()
        )));
    }
    let i = sample_index(&state.distribution(), rng);
    Ok((predictions[i], i))
}

/// Weighted-majority vote: the label with the largest total weight.
/// Exact ties are broken uniformly at random.
pub fn wm_fuse<L: Copy + PartialEq>(q: &[f64], predictions: &[L], rng: &mut Rng) -> Result<L> {
    if q.len() != predictions.len() || q.is_empty() {
        return Err(Error::Input(format!(
            "{} weights for {} predictions",
            q.len(),
            predictions.len()
        )));
    }
    let mut weights: Vec<(L, f64)> = Vec::new();
    for (&label, &w) in predictions.iter().zip(q) {
        match weights.iter_mut().find(|(l, _)| *l == label) {
            Some((_, acc)) => *acc += w,
            None => weights.push((label, w)),
        }
    }
    let best = weights.iter().map(|(_, w)| *w).fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<L> = weights.iter().filter(|(_, w)| *w == best).map(|(l, _)| *l).collect();
    Ok(if top.len() == 1 { top[0] } else { top[rng.gen_range(0..top.len())] })
}

/// Learners that exploit this round; a uniformly random singleton when
/// none do.
pub fn active_filter(exploit_flags: &[bool], rng: &mut Rng) -> Vec<usize> {
    let active: Vec<usize> = exploit_flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i)
        .collect();
    if active.is_empty() && !exploit_flags.is_empty() {
        vec![rng.gen_range(0..exploit_flags.len())]
    } else {
        active
    }
}

/// `2 sqrt(T ln M)`.
pub fn audit_hedge_bound(horizon: u64, experts: usize) -> f64 {
    2.0 * (horizon as f64 * (experts as f64).ln()).sqrt()
}

/// `2 sqrt(T m^d ln M)`.
pub fn audit_ch_bound(horizon: u64, experts: usize, m: u64, dim: usize) -> f64 {
    let cells = (m as f64).powi(dim as i32);
    2.0 * (horizon as f64 * cells * (experts as f64).ln()).sqrt()
}

/// Hedge distributions over a full loss matrix (rows are rounds). Anytime
/// Hedge observes every learner's loss, so the trajectory is a function of
/// the losses alone.
pub fn hedge_trajectory(losses: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
    let experts = losses.first().map_or(0, Vec::len);
    let mut state = HedgeState::new(experts)?;
    let mut out = Vec::with_capacity(losses.len());
    for row in losses {
        out.push(state.distribution());
        state.update(row)?;
    }
    Ok(out)
}

/// Whether the per-cell counter used in `eta` includes the current arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CounterTiming {
    /// Count is incremented before the distribution is computed.
    #[default]
    IncludeCurrent,
    /// Distribution uses the count of prior arrivals (at least 1).
    PriorOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellHedge {
    pub hedge: HedgeState,
    pub arrivals: u64,
}

/// One Anytime Hedge instance per cell of a context partition; cells are
/// created on first arrival.
#[derive(Debug, Clone)]
pub struct ContextualHedge {
    partition: Partition,
    experts: usize,
    timing: CounterTiming,
    cells: BTreeMap<u64, CellHedge>,
}

impl ContextualHedge {
    pub fn new(partition: Partition, experts: usize, timing: CounterTiming) -> Result<Self> {
        if experts == 0 {
            return Err(Error::Config("ensemble needs at least one learner".into()));
        }
        Ok(Self { partition, experts, timing, cells: BTreeMap::new() })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn locate(&self, context: &[f64]) -> Result<CellId> {
        self.partition.cell_of(context)
    }

    pub fn cell(&self, cell: &CellId) -> Option<&CellHedge> {
        self.cells.get(&cell.flat)
    }

    pub fn cells(&self) -> &BTreeMap<u64, CellHedge> {
        &self.cells
    }

    fn round_for(&self, arrivals: u64) -> u64 {
        match self.timing {
            CounterTiming::IncludeCurrent => arrivals + 1,
            CounterTiming::PriorOnly => arrivals.max(1),
        }
    }

    pub fn distribution(&self, cell: &CellId) -> Vec<f64> {
        self.distribution_over(cell, None)
    }

    pub fn distribution_over(&self, cell: &CellId, subset: Option<&[usize]>) -> Vec<f64> {
        match self.cells.get(&cell.flat) {
            Some(c) => distribution_at(&c.hedge.losses, self.round_for(c.arrivals), subset),
            None => distribution_at(&vec![0; self.experts], self.round_for(0), subset),
        }
    }

    pub fn update(&mut self, cell: &CellId, losses: &[u8]) -> Result<()> {
        self.update_masked(cell, losses, None)
    }

    pub fn update_masked(&mut self, cell: &CellId, losses: &[u8], subset: Option<&[usize]>) -> Result<()> {
        if cell.flat >= self.partition.cell_count() {
            return Err(Error::Domain(format!("cell {} outside partition", cell.flat)));
        }
        let experts = self.experts;
        let entry = self.cells.entry(cell.flat).or_insert_with(|| CellHedge {
            hedge: HedgeState::new(experts).expect("experts > 0"),
            arrivals: 0,
        });
        entry.hedge.update_masked(losses, subset)?;
        entry.arrivals += 1;
        Ok(())
    }

    /// One full round: locate the context, follow a sampled learner, then
    /// charge every learner's loss to the matched cell only.
    pub fn ch_step(
        &mut self,
        context: &[f64],
        predictions: &[Label],
        truth: Label,
        rng: &mut Rng,
    ) -> Result<(Label, usize)> {
        if predictions.len() != self.experts {
            return Err(Error::Input(format!(
                "{} predictions for {} learners",
                predictions.len(),
                self.experts
            )));
        }
        let cell = self.locate(context)?;
        let q = self.distribution(&cell);
        let i = sample_index(&q, rng);
        let losses: Vec<u8> = predictions.iter().map(|&p| u8::from(p != truth)).collect();
        self.update(&cell, &losses)?;
        Ok((predictions[i], i))
    }
}

/// Per-cell Hedge distributions over a loss matrix with contexts.
pub fn contextual_trajectory(
    losses: &[Vec<u8>],
    contexts: &[Vec<f64>],
    partition: Partition,
) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    if losses.len() != contexts.len() {
        return Err(Error::Input("losses and contexts differ in length".into()));
    }
    let experts = losses.first().map_or(0, Vec::len);
    let mut ch = ContextualHedge::new(partition, experts, CounterTiming::IncludeCurrent)?;
    let mut qs = Vec::with_capacity(losses.len());
    let mut cells = Vec::with_capacity(losses.len());
    for (row, ctx) in losses.iter().zip(contexts) {
        let cell = ch.locate(ctx)?;
        qs.push(ch.distribution(&cell));
        ch.update(&cell, row)?;
        cells.push(cell.flat);
    }
    Ok((qs, cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// Follow one learner sampled from `q` (Anytime Hedge).
    Hedge,
    /// Weighted-majority vote with weights `q`.
    WeightedMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub fusion: Fusion,
    /// Context partition for the contextual variant.
    pub context: Option<Partition>,
    pub active: bool,
    pub timing: CounterTiming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub label: Label,
    /// Learner followed by hedge fusion.
    pub followed: Option<usize>,
    /// Learners taking part this round.
    pub subset: Vec<usize>,
    pub q: Vec<f64>,
    pub cell: Option<CellId>,
}

/// Ensemble learner wiring fusion, the optional context partition and the
/// optional active filter together.
#[derive(Debug, Clone)]
pub struct Ensemble {
    config: EnsembleConfig,
    global: HedgeState,
    contextual: Option<ContextualHedge>,
}

impl Ensemble {
    pub fn new(config: EnsembleConfig, experts: usize) -> Result<Self> {
        let contextual = config
            .context
            .map(|p| ContextualHedge::new(p, experts, config.timing))
            .transpose()?;
        Ok(Self { config, global: HedgeState::new(experts)?, contextual })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn global(&self) -> &HedgeState {
        &self.global
    }

    pub fn contextual(&self) -> Option<&ContextualHedge> {
        self.contextual.as_ref()
    }

    pub fn decide(
        &self,
        predictions: &[Label],
        exploit_flags: &[bool],
        context: &[f64],
        rng: &mut Rng,
    ) -> Result<Decision> {
        let experts = self.global.experts();
        if predictions.len() != experts || exploit_flags.len() != experts {
            return Err(Error::Input(format!(
                "expected {experts} predictions and exploit flags"
            )));
        }
        let subset: Vec<usize> = if self.config.active {
            active_filter(exploit_flags, rng)
        } else {
            (0..experts).collect()
        };
        let mask = self.config.active.then_some(subset.as_slice());
        let (q, cell) = match &self.contextual {
            Some(ch) => {
                let cell = ch.locate(context)?;
                (ch.distribution_over(&cell, mask), Some(cell))
            }
            None => (distribution_at(&self.global.losses, self.global.t + 1, mask), None),
        };
        let (label, followed) = match self.config.fusion {
            Fusion::Hedge => {
                let i = sample_index(&q, rng);
                (predictions[i], Some(i))
            }
            Fusion::WeightedMajority => (wm_fuse(&q, predictions, rng)?, None),
        };
        Ok(Decision { label, followed, subset, q, cell })
    }

    pub fn update(&mut self, decision: &Decision, losses: &[u8]) -> Result<()> {
        let mask = self.config.active.then_some(decision.subset.as_slice());
        match (&mut self.contextual, &decision.cell) {
            (Some(ch), Some(cell)) => ch.update_masked(cell, losses, mask)?,
            (Some(_), None) => return Err(Error::Input("contextual update without a cell".into())),
            _ => {}
        }
        self.global.update_masked(losses, mask)
    }
}
