//! `coperc`: runs the cooperative perception experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coperception::evaluation::format_metric;
use coperception::experiment::{self, MetricsRecord};
use coperception::scenario::{ScenarioConfig, BUILTIN_SCENES};

#[derive(Parser)]
#[command(name = "coperc", version, about = "Delay-aware cooperative perception experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-node clustering and camera fusion metrics (proposed vs DBSCAN).
    LocalEval(Common),
    /// Center-node fusion metrics over the latency grid (delay-aware vs baseline).
    DelayEval(Common),
    /// Clustering runtime benchmark.
    Bench(Common),
    /// Dump ground truth and raw per-node frames as JSONL.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the filtered LiDAR returns.
        #[arg(long)]
        with_scans: bool,
    },
    /// Print the default scenario file for a built-in scene.
    ShowConfig {
        #[arg(long, default_value = "nine_pedestrians")]
        scenario: String,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML files. Without any, every built-in scene is used.
    #[arg(long = "config", short = 'c')]
    configs: Vec<PathBuf>,
    /// Built-in scenes to run instead of config files.
    #[arg(long = "scenario", short = 's', conflicts_with = "configs")]
    scenarios: Vec<String>,
    /// Override the seed of every scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the scenario's own.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Vec<ScenarioConfig>> {
        let mut cfgs = Vec::new();
        for path in &self.configs {
            cfgs.push(ScenarioConfig::load(path).map_err(anyhow::Error::msg).with_context(|| format!("loading {}", path.display()))?);
        }
        let names: Vec<String> = if self.configs.is_empty() && self.scenarios.is_empty() {
            BUILTIN_SCENES.iter().map(|s| s.to_string()).collect()
        } else {
            self.scenarios.clone()
        };
        for name in names {
            match ScenarioConfig::builtin(&name, self.seed.unwrap_or(1)) {
                Some(c) => cfgs.push(c),
                None => bail!("unknown scenario {name:?}; built-ins are {}", BUILTIN_SCENES.join(", ")),
            }
        }
        for c in &mut cfgs {
            if let Some(seed) = self.seed {
                c.seed = seed;
            }
            c.validate().map_err(anyhow::Error::msg).with_context(|| format!("scenario {}", c.name))?;
        }
        Ok(cfgs)
    }

    fn out_dir(&self, cfgs: &[ScenarioConfig]) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfgs[0].output_dir.clone())
    }
}

fn print_records(records: &[MetricsRecord]) {
    println!("{:<24} {:<8} {:<12} {:>8} {:>10} {:>10} {:>10}", "scenario", "node", "method", "delay", "precision", "recall", "avg_de");
    for r in records {
        let delay = r.delay_ms.map_or("-".to_string(), |d| format!("{d}"));
        println!(
            "{:<24} {:<8} {:<12} {:>8} {:>10} {:>10} {:>10}",
            r.scenario,
            r.node,
            r.method,
            delay,
            format_metric(r.metrics.precision),
            format_metric(r.metrics.recall),
            format_metric(r.metrics.avg_de)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LocalEval(common) => {
            let cfgs = common.load()?;
            let out = common.out_dir(&cfgs);
            let recs = experiment::run_local_eval(&cfgs, Some(&out))?;
            print_records(&recs);
            println!("wrote {}", out.join("local_metrics.csv").display());
        }
        Command::DelayEval(common) => {
            let cfgs = common.load()?;
            let out = common.out_dir(&cfgs);
            let recs = experiment::run_delay_eval(&cfgs, Some(&out))?;
            print_records(&recs);
            println!("wrote {}", out.join("delay_metrics.csv").display());
        }
        Command::Bench(common) => {
            let cfgs = common.load()?;
            let out = common.out_dir(&cfgs);
            let rows = experiment::run_bench(&cfgs[0], Some(&out))?;
            println!("{:>10} {:<14} {:>10} {:>10} {:>10}", "points", "method", "mean_ms", "median_ms", "p95_ms");
            for r in rows {
                println!("{:>10} {:<14} {:>10.3} {:>10.3} {:>10.3}", r.point_count, r.method, r.mean_ms, r.median_ms, r.p95_ms);
            }
            println!("wrote {}", out.join("bench.csv").display());
        }
        Command::Simulate { common, with_scans } => {
            let cfgs = common.load()?;
            let out = common.out_dir(&cfgs);
            for c in &cfgs {
                let n = experiment::run_simulate(c, &out, with_scans)?;
                println!("{}: {n} frames written to {}", c.name, out.display());
            }
        }
        Command::ShowConfig { scenario } => {
            let Some(c) = ScenarioConfig::builtin(&scenario, 1) else {
                bail!("unknown scenario {scenario:?}; built-ins are {}", BUILTIN_SCENES.join(", "));
            };
            print!("{}", c.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

