//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p hedged-core --test acceptance -- 6 9`.

use std::cell::OnceCell;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hedged_core::audit::{
    benchmark_monotonicity_audit, contextual_bound_audit, coverage_audit, hedge_bound_audit, iup_regret_audit,
};
use hedged_core::experiment::{run_config, ConfigResult, ExperimentConfig};
use hedged_core::ingest::{bundled_wdbc, Dataset, Normalization};

struct Verdict {
    passed: bool,
    detail: String,
}

struct Context {
    dataset: Dataset,
    table: OnceCell<ConfigResult>,
}

impl Context {
    fn run(&self, label: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> ConfigResult {
        let mut cfg = ExperimentConfig::default();
        edit(&mut cfg);
        run_config(&self.dataset, &cfg, label).expect("experiment runs")
    }

    /// Default configuration: 3 learners x 10 features, weighted majority,
    /// 50 runs, tuned threshold.
    fn table(&self) -> &ConfigResult {
        self.table.get_or_init(|| self.run("hb-wm", |_| {}))
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn hedge_bound(_: &Context) -> Verdict {
    let a = hedge_bound_audit(1000, 0).unwrap();
    Verdict {
        passed: a.passed,
        detail: format!("{} violations in {} matrices, worst regret/bound {:.3}", a.violations, a.cases, a.worst_ratio),
    }
}

fn contextual_bound(_: &Context) -> Verdict {
    let a = contextual_bound_audit(1000, 0, &[1, 2, 4]).unwrap();
    Verdict {
        passed: a.passed,
        detail: format!("{} violations in {} matrices, worst regret/bound {:.3}", a.violations, a.cases, a.worst_ratio),
    }
}

fn benchmark_monotonicity(_: &Context) -> Verdict {
    let a = benchmark_monotonicity_audit(8, &[1, 2, 4]).unwrap();
    Verdict { passed: a.passed, detail: format!("{} drops in {} enumerated cases", a.violations, a.cases) }
}

fn local_regret(_: &Context) -> Verdict {
    let seeds: Vec<u64> = (0..20).collect();
    let r = iup_regret_audit(&[1_000, 10_000], &seeds).unwrap();
    let rows: Vec<String> = r
        .horizons
        .iter()
        .map(|h| {
            let below = h.regrets.iter().filter(|&&x| x <= h.bound).count();
            format!("T={}: {}/{} below {:.0}, Reg/T {:.4}", h.horizon, below, h.regrets.len(), h.bound, h.mean_rate)
        })
        .collect();
    Verdict { passed: r.check.passed, detail: format!("{}; decreasing rate: {}", rows.join("; "), r.sublinear) }
}

fn coverage(_: &Context) -> Verdict {
    let seeds: Vec<u64> = (0..2000).collect();
    let c = coverage_audit(200, &seeds).unwrap();
    Verdict {
        passed: c.frequency <= c.threshold,
        detail: format!(
            "miss frequency {:.5} <= {:.5} ({} misses, {} final plays without observations)",
            c.frequency, c.threshold, c.misses, c.unplayed
        ),
    }
}

fn table_one(ctx: &Context) -> Verdict {
    let s = &ctx.table().summary;
    let per = s.ensemble_per.mean;
    let ordered = per <= s.best_learner_per.mean
        && s.best_learner_per.mean <= s.average_learner_per.mean
        && s.average_learner_per.mean <= s.worst_learner_per.mean;
    let within = (per - 0.0296).abs() <= 0.015;
    let fnr_ok = s.ensemble_fnr.mean <= 0.031;
    Verdict {
        passed: within && fnr_ok && ordered,
        detail: format!(
            "ensemble PER {} (target 2.96% +- 1.5 pp), FPR {}, FNR {} (h={:.4}); best/avg/worst learner {}/{}/{}",
            pct(per),
            pct(s.ensemble_fpr.mean),
            pct(s.ensemble_fnr.mean),
            s.hyper,
            pct(s.best_learner_per.mean),
            pct(s.average_learner_per.mean),
            pct(s.worst_learner_per.mean)
        ),
    }
}

fn active_ensemble(ctx: &Context) -> Verdict {
    let plain = &ctx.table().summary;
    let active = ctx.run("active", |c| c.active = true).summary;
    let passed = plain.explore_per.mean >= 0.35
        && plain.exploit_per.mean <= 0.10
        && active.ensemble_per.mean <= plain.ensemble_per.mean;
    Verdict {
        passed,
        detail: format!(
            "explore PER {} on {} of steps, exploit PER {}; active PER {} vs plain {}",
            pct(plain.explore_per.mean),
            pct(plain.explore_fraction.mean),
            pct(plain.exploit_per.mean),
            pct(active.ensemble_per.mean),
            pct(plain.ensemble_per.mean)
        ),
    }
}

fn corruption(ctx: &Context) -> Verdict {
    let base = ctx.table().summary.ensemble_per.mean;
    let missing = ctx.run("missing", |c| c.missing_rate = 0.5).summary.ensemble_per.mean;
    let flipped = ctx.run("flipped", |c| c.flip_rate = 0.1).summary.ensemble_per.mean;
    Verdict {
        passed: missing - base <= 0.025 && flipped - base <= 0.03,
        detail: format!(
            "clean {}; 50% missing {} (+{:.2} pp); 10% flipped {} (+{:.2} pp)",
            pct(base),
            pct(missing),
            100.0 * (missing - base),
            pct(flipped),
            100.0 * (flipped - base)
        ),
    }
}

fn contextual_ensemble(ctx: &Context) -> Verdict {
    let base = ctx.table().summary.ensemble_per.mean;
    let cel = ctx
        .run("cel-wm", |c| {
            c.apply_axis("ensemble", "ch-wm").unwrap();
            c.context_dim = 3;
        })
        .summary;
    Verdict {
        passed: cel.ensemble_per.mean < base,
        detail: format!(
            "contextual WM (3 context features, {} cells per axis) {} vs plain WM {}",
            ExperimentConfig::default().context_m,
            pct(cel.ensemble_per.mean),
            pct(base)
        ),
    }
}

fn partition_size(ctx: &Context) -> Verdict {
    let two = &ctx.table().summary;
    let three = ctx.run("m3", |c| c.m = Some(3)).summary;
    Verdict {
        passed: two.m == 2 && three.m == 3 && two.ensemble_per.mean < three.ensemble_per.mean,
        detail: format!("m=2 PER {} vs m=3 PER {}", pct(two.ensemble_per.mean), pct(three.ensemble_per.mean)),
    }
}

type Check = fn(&Context) -> Verdict;

fn main() -> ExitCode {
    let criteria: [(u8, &str, Check, u64); 10] = [
        (1, "hedge pseudo-regret bound", hedge_bound, 60),
        (2, "contextual hedge bound", contextual_bound, 60),
        (3, "benchmark monotonicity under refinement", benchmark_monotonicity, 60),
        (4, "local learner regret bound and sublinearity", local_regret, 120),
        (5, "confidence radius coverage", coverage, 120),
        (6, "main table reproduction", table_one, 300),
        (7, "active ensemble", active_ensemble, 300),
        (8, "label corruption robustness", corruption, 300),
        (9, "contextual ensemble improvement", contextual_ensemble, 300),
        (10, "m = 2 beats m = 3", partition_size, 300),
    ];
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ctx = Context { dataset: bundled_wdbc(Normalization::Standardized), table: OnceCell::new() };

    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check(&ctx);
        let took = start.elapsed();
        let in_time = took < Duration::from_secs(limit);
        let passed = v.passed && in_time;
        failed += usize::from(!passed);
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s{}]",
            if passed { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            if in_time { String::new() } else { format!(" exceeds {limit}s") }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all selected criteria passed");
        ExitCode::SUCCESS
    }
}
