//! `clref`: run, sweep and verify continual-learning experiments.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use clref_core::harness::persist::{persist_results, RunRecord, SummaryWriter};
use clref_core::harness::{mean_std, run_sequence, RunConfig};
use clref_core::theory::{
    preset_gradient_check, verify_theorem, FisherSource, InstanceKind, TheoryOptions,
    TheorySummary,
};

#[derive(Parser)]
#[command(name = "clref", version, about = "Continual-learning lab runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train through a task stream for every configured seed.
    Run(RunArgs),
    /// Grid over unlearning rate and unlearning steps.
    Sweep(SweepArgs),
    /// Check analytic gradients of every objective preset against central
    /// finite differences.
    Gradcheck(GradcheckArgs),
    /// Numerical consistency check between the refresh update and the
    /// preconditioned gradient-norm penalty.
    Theory(TheoryArgs),
    /// Wall-clock comparison of a method with and without the refresh
    /// plug-in.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated unlearning rates, e.g. 0.02,0.03,0.04
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.03,0.04")]
    gamma: Vec<f64>,
    /// Comma-separated unlearning step counts, e.g. 1,2,3
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    steps: Vec<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0xBEEF)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct TheoryArgs {
    /// Optional JSON file with {"instances", "seed", "s", "fisher_source"}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TheorySettings {
    #[serde(default = "default_instances")]
    instances: usize,
    #[serde(default = "default_theory_seed")]
    seed: u64,
    #[serde(default = "default_s")]
    s: f64,
    #[serde(default = "default_source")]
    fisher_source: String,
}

fn default_instances() -> usize {
    24
}
fn default_theory_seed() -> u64 {
    0xC0FFEE
}
fn default_s() -> f64 {
    1e-3
}
fn default_source() -> String {
    "estimated".into()
}

impl Default for TheorySettings {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            seed: default_theory_seed(),
            s: default_s(),
            fisher_source: default_source(),
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Theory(args) => theory(args),
        Command::Bench(args) => bench(args),
    }
}

fn seeds_for(config: &RunConfig, only: Option<u64>) -> Vec<u64> {
    match only {
        Some(seed) => vec![seed],
        None => config.seeds.clone(),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = RunConfig::from_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let seeds = seeds_for(&config, args.seed);
    let outcomes = seeds
        .par_iter()
        .map(|&seed| run_sequence(&config, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut accs = Vec::new();
    let mut bwts = Vec::new();
    for outcome in outcomes {
        println!(
            "seed {:>3}: ACC {:.4}  BWT {}  ({:.1}s)",
            outcome.seed,
            outcome.metrics.acc,
            outcome
                .metrics
                .bwt
                .map(|b| format!("{b:+.4}"))
                .unwrap_or_else(|| "n/a".into()),
            outcome.timings.total_seconds,
        );
        accs.push(outcome.metrics.acc);
        if let Some(b) = outcome.metrics.bwt {
            bwts.push(b);
        }
        persist_results(&args.out, &config, outcome)?;
    }
    let (acc_mean, acc_std) = mean_std(&accs);
    print!(
        "{} ({} seeds): ACC {:.4} ± {:.4}",
        config.objective.method.name(),
        accs.len(),
        acc_mean,
        acc_std
    );
    if !bwts.is_empty() {
        let (bwt_mean, bwt_std) = mean_std(&bwts);
        print!("  BWT {bwt_mean:+.4} ± {bwt_std:.4}");
    }
    println!();
    println!("records and summary.csv under {}", args.out.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = RunConfig::from_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let writer = SummaryWriter::new(args.out.join("summary.csv"));
    fs::create_dir_all(&args.out)?;

    let mut cells = Vec::new();
    for &gamma in &args.gamma {
        for &steps in &args.steps {
            cells.push((gamma, steps));
        }
    }
    println!("sweeping {} cells x {} seeds", cells.len(), base.seeds.len());
    let results: Vec<(f64, usize, Vec<RunRecord>)> = cells
        .par_iter()
        .map(|&(gamma, steps)| {
            let mut config = base.clone();
            config.refresh.enabled = true;
            config.refresh.gamma = gamma;
            config.refresh.steps = steps;
            let records = config
                .seeds
                .par_iter()
                .map(|&seed| {
                    run_sequence(&config, seed).map(|o| RunRecord::new(&config, o))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok::<_, clref_core::Error>((gamma, steps, records))
        })
        .collect::<Result<Vec<_>, _>>()?;

    println!("{:>8} {:>6} {:>16} {:>16}", "gamma", "steps", "ACC", "BWT");
    for (gamma, steps, records) in results {
        let accs: Vec<f64> = records.iter().map(|r| r.outcome.metrics.acc).collect();
        let bwts: Vec<f64> = records
            .iter()
            .filter_map(|r| r.outcome.metrics.bwt)
            .collect();
        let (am, asd) = mean_std(&accs);
        let (bm, bsd) = mean_std(&bwts);
        println!("{gamma:>8} {steps:>6} {am:>8.4} ± {asd:.4} {bm:>+8.4} ± {bsd:.4}");
        for record in records {
            writer.append(&record.summary_row())?;
        }
    }
    println!("rows appended to {}", writer.path().display());
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let reports = preset_gradient_check(args.instances, args.seed)?;
    let mut failed = false;
    for report in &reports {
        let ok = report.max_relative_error < args.tolerance;
        failed |= !ok;
        println!(
            "{:>9}: max relative error {:.3e} over {} instances .. {}",
            report.preset,
            report.max_relative_error,
            report.instances,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed {
        bail!("gradient check failed at tolerance {}", args.tolerance);
    }
    Ok(())
}

fn theory(args: TheoryArgs) -> Result<()> {
    let settings: TheorySettings = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .with_context(|| format!("loading {}", path.display()))?,
        None => TheorySettings::default(),
    };
    let source = match settings.fisher_source.as_str() {
        "identity" => FisherSource::Identity,
        "estimated" => FisherSource::Estimated,
        "random_positive" => FisherSource::RandomPositive,
        other => bail!("unknown fisher_source {other}"),
    };

    let mut quad = TheoryOptions::<f64>::new(InstanceKind::Quadratic, FisherSource::Identity);
    quad.instances = settings.instances;
    quad.seed = settings.seed;
    quad.s = settings.s;
    let mut mlp = TheoryOptions::<f64>::new(InstanceKind::TinyMlp, source);
    mlp.instances = settings.instances;
    mlp.seed = settings.seed;
    mlp.s = settings.s;

    let summaries: Vec<TheorySummary> =
        vec![verify_theorem(&quad)?, verify_theorem(&mlp)?];
    for summary in &summaries {
        println!(
            "-- {:?} instances, {:?} preconditioner --",
            summary.kind, summary.fisher_source
        );
        println!("{:>4} {:>10} {:>12} {:>12}  descriptor", "id", "s", "cosine", "gap");
        for r in &summary.reports {
            println!(
                "{:>4} {:>10.1e} {:>12.8} {:>12.3e}  {}",
                r.instance, r.s, r.cosine, r.relative_norm_gap, r.descriptor
            );
        }
        println!(
            "mean cosine {:.6}, min cosine {:.6}, mean gap {:.3e}, skipped {}",
            summary.mean_cosine,
            summary.min_cosine,
            summary.mean_relative_norm_gap,
            summary.degenerate_skipped
        );
    }
    fs::create_dir_all(&args.out)?;
    let json_path = args.out.join("theory.json");
    fs::write(&json_path, serde_json::to_string_pretty(&summaries)?)?;
    println!("report written to {}", json_path.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let base = RunConfig::from_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let mut with_refresh = base.clone();
    with_refresh.refresh.enabled = true;
    let mut without = base.clone();
    without.refresh.enabled = false;

    let time_runs = |config: &RunConfig| -> Result<(f64, f64)> {
        let outcomes = config
            .seeds
            .iter()
            .map(|&seed| run_sequence(config, seed))
            .collect::<Result<Vec<_>, _>>()?;
        let total: f64 = outcomes.iter().map(|o| o.timings.total_seconds).sum();
        let accs: Vec<f64> = outcomes.iter().map(|o| o.metrics.acc).collect();
        for outcome in outcomes {
            persist_results(&args.out, config, outcome)?;
        }
        Ok((total, mean_std(&accs).0))
    };

    // runs are timed one at a time so the comparison is not skewed by
    // scheduling
    let (base_secs, base_acc) = time_runs(&without)?;
    let (refresh_secs, refresh_acc) = time_runs(&with_refresh)?;
    println!(
        "base:    {:.2}s over {} seeds, ACC {:.4}",
        base_secs,
        base.seeds.len(),
        base_acc
    );
    println!(
        "refresh: {:.2}s over {} seeds, ACC {:.4}",
        refresh_secs,
        base.seeds.len(),
        refresh_acc
    );
    println!("overhead ratio: {:.2}x", refresh_secs / base_secs);
    Ok(())
}
