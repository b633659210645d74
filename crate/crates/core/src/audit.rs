//! Synthetic audits: measured regret against the bound formulas, benchmark
//! monotonicity under refinement, and confidence-radius coverage.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{audit_ch_bound, audit_hedge_bound, contextual_trajectory, hedge_trajectory};
use crate::environment::SyntheticWorld;
use crate::local_learner::{audit_regret_bound, Iup, IupConfig};
use crate::metrics::{conditional_regret, contextual_pseudo_regret, exact_pseudo_regret, partition_benchmark, Step};
use crate::partition::Partition;
use crate::{seeded_rng, stream_rng, Error, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub cases: u64,
    pub violations: u64,
    /// Largest measured / bound ratio seen.
    pub worst_ratio: f64,
    pub passed: bool,
    pub detail: String,
}

impl AuditCheck {
    fn new(name: &str, cases: u64, violations: u64, worst_ratio: f64, detail: String) -> Self {
        Self { name: name.to_string(), cases, violations, worst_ratio, passed: violations == 0, detail }
    }
}

fn rewards_of(losses: &[Vec<u8>]) -> Vec<Vec<u8>> {
    losses.iter().map(|r| r.iter().map(|v| 1 - v).collect()).collect()
}

/// Loss matrix with per-learner error rates that change at up to three
/// random breakpoints, or per-context-cell rates when `cells` is given.
fn random_losses(rng: &mut Rng, experts: usize, horizon: usize, cell_of_round: Option<&[usize]>) -> Vec<Vec<u8>> {
    let segments = rng.gen_range(1..=4);
    let groups = cell_of_round.map_or(segments, |c| c.iter().copied().max().unwrap_or(0) + 1);
    let rates: Vec<Vec<f64>> = (0..groups).map(|_| (0..experts).map(|_| rng.gen::<f64>()).collect()).collect();
    (0..horizon)
        .map(|t| {
            let g = match cell_of_round {
                Some(c) => c[t],
                None => t * segments / horizon,
            };
            rates[g].iter().map(|&p| u8::from(rng.gen_bool(p))).collect()
        })
        .collect()
}

/// Exact pseudo-regret of Anytime Hedge on random loss matrices with
/// `M` in 2..=10 and `T` in 100..=5000.
pub fn hedge_bound_audit(cases: usize, seed: u64) -> Result<AuditCheck> {
    let results: Vec<(f64, f64)> = (0..cases)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let experts = rng.gen_range(2..=10);
            let horizon = rng.gen_range(100..=5000);
            let losses = random_losses(&mut rng, experts, horizon, None);
            let q = hedge_trajectory(&losses)?;
            let regret = exact_pseudo_regret(&rewards_of(&losses), &q)?;
            Ok((regret, audit_hedge_bound(horizon as u64, experts)))
        })
        .collect::<Result<_>>()?;
    Ok(summarise("hedge pseudo-regret", &results))
}

/// Contextual pseudo-regret of per-cell Hedge with one-dimensional uniform
/// contexts, `cases` matrices for each `m`.
pub fn contextual_bound_audit(cases: usize, seed: u64, m_values: &[u64]) -> Result<AuditCheck> {
    let jobs: Vec<(u64, usize)> = m_values.iter().flat_map(|&m| (0..cases).map(move |c| (m, c))).collect();
    let results: Vec<(f64, f64)> = jobs
        .into_par_iter()
        .map(|(m, c)| {
            let mut rng = stream_rng(seed.wrapping_add(m), c as u64);
            let experts = rng.gen_range(2..=10);
            let horizon = rng.gen_range(100..=5000);
            let contexts: Vec<Vec<f64>> = (0..horizon).map(|_| vec![rng.gen::<f64>()]).collect();
            let partition = Partition::new(1, m)?;
            let cells: Vec<usize> = contexts
                .iter()
                .map(|x| partition.cell_of(x).map(|c| c.flat as usize))
                .collect::<Result<_>>()?;
            let losses = random_losses(&mut rng, experts, horizon, Some(&cells));
            let (q, flat) = contextual_trajectory(&losses, &contexts, partition)?;
            let (regret, _) = contextual_pseudo_regret(&rewards_of(&losses), &q, &flat)?;
            Ok((regret, audit_ch_bound(horizon as u64, experts, m, 1)))
        })
        .collect::<Result<_>>()?;
    Ok(summarise("contextual pseudo-regret", &results))
}

fn summarise(name: &str, results: &[(f64, f64)]) -> AuditCheck {
    let violations = results.iter().filter(|(r, b)| r > b).count() as u64;
    let worst = results.iter().map(|(r, b)| r / b).fold(f64::NEG_INFINITY, f64::max);
    AuditCheck::new(
        name,
        results.len() as u64,
        violations,
        worst,
        format!("{violations} of {} cases above the bound", results.len()),
    )
}

/// Fixed context sequences on the grid `{(k + 0.5) / 8}`: in order, and
/// in a scrambled order.
fn grid_contexts(horizon: usize) -> [Vec<Vec<f64>>; 2] {
    let ordered = (0..horizon).map(|t| vec![((t % 8) as f64 + 0.5) / 8.0]).collect();
    let scrambled = (0..horizon).map(|t| vec![((5 * t + 3) % 8) as f64 / 8.0 + 1.0 / 16.0]).collect();
    [ordered, scrambled]
}

/// Enumerates every 0/1 reward matrix with two learners and up to
/// `max_horizon` rounds and checks that the per-cell benchmark never drops
/// when the partition is refined along `m_values` (sorted ascending).
pub fn benchmark_monotonicity_audit(max_horizon: usize, m_values: &[u64]) -> Result<AuditCheck> {
    if max_horizon > 12 {
        return Err(Error::Config("exhaustive enumeration is limited to 12 rounds".into()));
    }
    let partitions = m_values.iter().map(|&m| Partition::new(1, m)).collect::<Result<Vec<_>>>()?;
    let mut cases = 0u64;
    let mut violations = 0u64;
    for horizon in 1..=max_horizon {
        let grids = grid_contexts(horizon);
        for mask in 0u64..(1u64 << (2 * horizon)) {
            let rewards: Vec<Vec<u8>> = (0..horizon)
                .map(|t| vec![((mask >> (2 * t)) & 1) as u8, ((mask >> (2 * t + 1)) & 1) as u8])
                .collect();
            for contexts in &grids {
                let bench = partitions
                    .iter()
                    .map(|p| partition_benchmark(&rewards, contexts, p))
                    .collect::<Result<Vec<_>>>()?;
                cases += 1;
                if bench.windows(2).any(|w| w[1] < w[0]) {
                    violations += 1;
                }
            }
        }
    }
    Ok(AuditCheck::new(
        "refined benchmark monotonicity",
        cases,
        violations,
        0.0,
        format!("m in {m_values:?}, horizons 1..={max_horizon}"),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRegret {
    pub horizon: u64,
    pub m: u64,
    pub bound: f64,
    pub bound_vacuous: bool,
    pub regrets: Vec<f64>,
    pub mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IupRegretReport {
    pub check: AuditCheck,
    pub horizons: Vec<HorizonRegret>,
    /// Mean `Reg/T` decreases along the horizons.
    pub sublinear: bool,
}

/// One learner, one dimension, the default rule pair.
pub fn default_world() -> SyntheticWorld {
    SyntheticWorld::default_suite(1, 1)
}

/// Runs one learner for `horizon` rounds and returns its conditional regret.
pub fn iup_run(world: &SyntheticWorld, config: IupConfig, seed: u64) -> Result<f64> {
    let mut iup = Iup::new(config)?;
    let mut rng = seeded_rng(seed);
    let mut trace = Vec::with_capacity(config.horizon as usize);
    for _ in 0..config.horizon {
        let round = world.draw_round(&mut rng);
        let x = &round.instances[0];
        let sel = iup.select(x, &mut rng)?;
        iup.update(&sel.cell, sel.rule, round.reward(0, sel.rule))?;
        trace.push(Step { instance: x.clone(), rule: sel.rule });
    }
    Ok(*conditional_regret(world, 0, &trace)?.last().unwrap_or(&0.0))
}

pub fn iup_regret_audit(horizons: &[u64], seeds: &[u64]) -> Result<IupRegretReport> {
    let world = default_world();
    world.certify_hoelder(10_000, &mut seeded_rng(0))?;
    let mut rows = Vec::new();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for &horizon in horizons {
        let config = IupConfig::new(2, 1, horizon, world.alpha, world.hoelder_l)?;
        let bound = audit_regret_bound(&config)?;
        let regrets: Vec<f64> = seeds
            .par_iter()
            .map(|&s| iup_run(&world, config, s.wrapping_mul(1_000_003).wrapping_add(horizon)))
            .collect::<Result<_>>()?;
        violations += regrets.iter().filter(|&&r| r > bound.value).count() as u64;
        worst = regrets.iter().map(|r| r / bound.value).fold(worst, f64::max);
        let mean_rate = regrets.iter().sum::<f64>() / regrets.len() as f64 / horizon as f64;
        rows.push(HorizonRegret { horizon, m: config.m, bound: bound.value, bound_vacuous: bound.vacuous, regrets, mean_rate });
    }
    let sublinear = rows.windows(2).all(|w| w[1].mean_rate < w[0].mean_rate);
    let detail = rows
        .iter()
        .map(|r| format!("T={} m={} Reg/T={:.4} bound={:.1}", r.horizon, r.m, r.mean_rate, r.bound))
        .collect::<Vec<_>>()
        .join("; ");
    let mut check = AuditCheck::new(
        "local learner regret",
        (horizons.len() * seeds.len()) as u64,
        violations,
        worst,
        detail,
    );
    check.passed &= sublinear;
    Ok(IupRegretReport { check, horizons: rows, sublinear })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub check: AuditCheck,
    pub misses: u64,
    /// Final-round plays of a rule never observed in its cell.
    pub unplayed: u64,
    pub frequency: f64,
    pub threshold: f64,
}

/// At the last round of each run, is the played rule within `epsilon` of
/// the best rule at the instance? A rule with no observations in its cell
/// has no finite radius and counts as covered.
pub fn coverage_audit(horizon: u64, seeds: &[u64]) -> Result<CoverageReport> {
    let world = default_world();
    let config = IupConfig::new(2, 1, horizon, world.alpha, world.hoelder_l)?;
    let outcomes: Vec<(bool, bool)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut iup = Iup::new(config)?;
            let mut rng = seeded_rng(seed);
            for _ in 1..horizon {
                let round = world.draw_round(&mut rng);
                let sel = iup.select(&round.instances[0], &mut rng)?;
                iup.update(&sel.cell, sel.rule, round.reward(0, sel.rule))?;
            }
            let round = world.draw_round(&mut rng);
            let x = &round.instances[0];
            let sel = iup.select(x, &mut rng)?;
            match iup.confidence_epsilon(&sel.cell, sel.rule) {
                Ok(report) => {
                    let (_, best) = world.local_oracle(0, x)?;
                    Ok((world.accuracy(0, sel.rule, x) < best - report.epsilon, false))
                }
                Err(Error::UndefinedConfidence { .. }) => Ok((false, true)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let n = seeds.len() as f64;
    let misses = outcomes.iter().filter(|o| o.0).count() as u64;
    let unplayed = outcomes.iter().filter(|o| o.1).count() as u64;
    let p = 1.0 / horizon as f64;
    let threshold = p + 3.0 * (p * (1.0 - p) / n).sqrt();
    let frequency = misses as f64 / n;
    let mut check = AuditCheck::new(
        "confidence coverage",
        seeds.len() as u64,
        u64::from(frequency > threshold),
        frequency / threshold,
        format!("miss frequency {frequency:.5} vs threshold {threshold:.5}; {unplayed} unplayed"),
    );
    check.passed = frequency <= threshold;
    Ok(CoverageReport { check, misses, unplayed, frequency, threshold })
}

/// Sizes for [`run_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditPlan {
    pub matrices: usize,
    pub context_m: Vec<u64>,
    pub enumeration_horizon: usize,
    pub regret_horizons: Vec<u64>,
    pub regret_seeds: usize,
    pub coverage_horizon: u64,
    pub coverage_seeds: usize,
    pub seed: u64,
}

impl Default for AuditPlan {
    fn default() -> Self {
        Self {
            matrices: 1000,
            context_m: vec![1, 2, 4],
            enumeration_horizon: 8,
            regret_horizons: vec![1_000, 10_000],
            regret_seeds: 20,
            coverage_horizon: 200,
            coverage_seeds: 2000,
            seed: 0,
        }
    }
}

pub fn run_all(plan: &AuditPlan) -> Result<Vec<AuditCheck>> {
    let seeds = |n: usize| (plan.seed..plan.seed + n as u64).collect::<Vec<_>>();
    Ok(vec![
        hedge_bound_audit(plan.matrices, plan.seed)?,
        contextual_bound_audit(plan.matrices, plan.seed, &plan.context_m)?,
        benchmark_monotonicity_audit(plan.enumeration_horizon, &plan.context_m)?,
        iup_regret_audit(&plan.regret_horizons, &seeds(plan.regret_seeds))?.check,
        coverage_audit(plan.coverage_horizon, &seeds(plan.coverage_seeds))?.check,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_audits_pass() {
        assert!(hedge_bound_audit(20, 1).unwrap().passed);
        let ch = contextual_bound_audit(5, 1, &[1, 2, 4]).unwrap();
        assert_eq!(ch.cases, 15);
        assert!(ch.passed);
        let lemma = benchmark_monotonicity_audit(4, &[1, 2, 4]).unwrap();
        assert_eq!(lemma.cases, 2 * (4 + 16 + 64 + 256));
        assert!(lemma.passed);
        assert!(benchmark_monotonicity_audit(13, &[1]).is_err());
    }

    #[test]
    fn coarsening_can_lose_but_refining_cannot() {
        // Reversed order must find drops somewhere.
        let rev = benchmark_monotonicity_audit(4, &[4, 2, 1]).unwrap();
        assert!(rev.violations > 0);
    }

    #[test]
    fn regret_and_coverage_small() {
        let r = iup_regret_audit(&[200, 2000], &[0, 1, 2]).unwrap();
        assert_eq!(r.horizons.len(), 2);
        assert!(r.horizons.iter().all(|h| h.regrets.iter().all(|&x| x >= 0.0 && x <= h.bound)));
        let c = coverage_audit(50, &(0..50).collect::<Vec<_>>()).unwrap();
        assert!(c.frequency <= c.threshold);
    }

    #[test]
    fn oracle_policy_has_zero_regret_bandit_run_is_deterministic() {
        let world = default_world();
        let cfg = IupConfig::new(2, 1, 300, 1.0, 0.4).unwrap();
        assert_eq!(iup_run(&world, cfg, 5).unwrap(), iup_run(&world, cfg, 5).unwrap());
    }
}
