//! `hedged`: runs the dataset experiments and the synthetic bound audits.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use hedged_core::audit;
use hedged_core::experiment::{run_mode, ExperimentConfig, Mode, Sweep};

#[derive(Debug, Parser)]
#[command(name = "hedged", version, about = "Bandit ensemble experiments and regret audits")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the config's mode.
    #[arg(long)]
    mode: Option<String>,

    /// Seeds as a list (`1,2,5`) or half-open range (`0..50`).
    #[arg(long)]
    seeds: Option<String>,

    /// Overrides the number of runs.
    #[arg(long)]
    runs: Option<usize>,

    /// Output directory for runs.csv, summary.json and audit.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Run only the synthetic audits.
    #[arg(long)]
    audit_only: bool,

    /// Sweep one axis over `--values` instead of the mode's default sweeps.
    #[arg(long, requires = "values")]
    sweep: Option<String>,

    /// Comma-separated values for `--sweep`.
    #[arg(long, requires = "sweep")]
    values: Option<String>,

    /// Also write the normalised dataset to dataset.csv.
    #[arg(long)]
    dump_data: bool,

    /// Worker threads for parallel runs.
    #[arg(long, env = "HEDGED_WORKERS")]
    workers: Option<usize>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b <= a {
            bail!("empty seed range {text:?}");
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = &cli.mode {
        cfg.mode = mode.parse::<Mode>()?;
    }
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
        cfg.seeds.clear();
    }
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = parse_seeds(seeds)?;
        cfg.runs = cfg.seeds.len();
    }
    if let (Some(axis), Some(values)) = (&cli.sweep, &cli.values) {
        cfg.sweeps = vec![Sweep {
            axis: axis.clone(),
            values: values.split(',').map(|v| v.trim().to_string()).collect(),
        }];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<bool> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let audits_only = cli.audit_only || cfg.mode == Mode::SyntheticAudit;

    let mut checks = Vec::new();
    if audits_only {
        checks = audit::run_all(&cfg.audit)?;
    } else {
        let dataset = cfg.load_dataset()?;
        if cli.dump_data {
            let file = std::fs::File::create(cli.out.join("dataset.csv"))?;
            dataset.write_normalized_csv(std::io::BufWriter::new(file))?;
        }
        let results = run_mode(&dataset, cfg)?;
        output::write_runs_csv(&cli.out.join("runs.csv"), &results)?;
        output::write_summary(&cli.out.join("summary.json"), cfg, &results)?;
        checks.extend(output::dataset_checks(cfg, &results));
        for r in &results {
            let s = &r.summary;
            eprintln!(
                "{:<24} PER {:6.2}%  FPR {:6.2}%  FNR {:6.2}%  best LL {:6.2}%  h={:.4}",
                s.label,
                100.0 * s.ensemble_per.mean,
                100.0 * s.ensemble_fpr.mean,
                100.0 * s.ensemble_fnr.mean,
                100.0 * s.best_learner_per.mean,
                s.hyper
            );
        }
    }
    let passed = output::write_audit(&cli.out.join("audit.json"), &checks)?;
    for c in &checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        eprintln!("[{tag}] {}: {}", c.name, c.detail);
    }
    if passed {
        eprintln!("all bounds hold");
    } else {
        let names: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        eprintln!("violated: {}", names.join(", "));
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: worker pool not configured: {e}");
        }
    }
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("audit failed; see {}", cli.out.join("audit.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("3,1, 2").unwrap(), vec![3, 1, 2]);
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3]);
        assert!(parse_seeds("4..4").is_err());
        assert!(parse_seeds("a").is_err());
    }
}
