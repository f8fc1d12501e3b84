use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tidemark::classifier::{train_cart, TrainParams};
use tidemark_bench::config::{resolve, Overrides};
use tidemark_bench::harness::{write_latency, write_run, write_summary};
use tidemark_bench::{generate_workload, run, training, BenchConfig, BenchError, ConfigError};

#[derive(Parser)]
#[command(name = "tidemark-bench", version, about = "Index tuning benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with configuration keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Write the generated query sequence as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "workload.csv")]
        out: PathBuf,
    },
    /// Run one configuration and write its CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run every combination of the varied keys and write one summary.
    Compare {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`; repeatable.
        #[arg(long, required = true)]
        vary: Vec<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train a classifier tree on generated snapshots and print it.
    Train {
        #[command(flatten)]
        common: Common,
        /// Snapshots per mixture.
        #[arg(long, default_value_t = 150)]
        snapshots: usize,
    },
}

/// Marks failures that should exit with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn config(common: &Common) -> Result<BenchConfig> {
    resolve(common.config.as_deref(), &common.flags).map_err(|e| Usage(e.to_string()).into())
}

fn lift(e: BenchError) -> anyhow::Error {
    match e {
        BenchError::Config(c) => Usage(c.to_string()).into(),
        other => other.into(),
    }
}

/// Expands `--vary` arguments into every combination of configurations.
fn variants(base: &BenchConfig, vary: &[String]) -> Result<Vec<BenchConfig>> {
    let mut out = vec![base.clone()];
    for v in vary {
        let Some((key, values)) = v.split_once('=') else {
            return Err(Usage(format!("--vary expects key=v1,v2, got `{v}`")).into());
        };
        let mut next = Vec::new();
        for cfg in &out {
            for value in split_values(values) {
                let mut c = cfg.clone();
                c.set(key.trim(), value.trim()).map_err(|e| Usage(e.to_string()))?;
                c.validate().map_err(|e: ConfigError| Usage(e.to_string()))?;
                next.push(c);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Splits on commas outside brackets so list values survive.
fn split_values(s: &str) -> Vec<&str> {
    let (mut depth, mut start, mut out) = (0i32, 0, Vec::new());
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn generate(cfg: &BenchConfig, out: &PathBuf) -> Result<()> {
    let w = generate_workload(cfg);
    let mut wr = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    wr.write_record(["query_idx", "phase", "template", "noise", "tables", "predicate", "sets", "rows"])?;
    for (i, item) in w.items.iter().enumerate() {
        let q = &item.query;
        let tables: Vec<&str> = q.tables.iter().map(|t| t.table.as_str()).collect();
        let preds: Vec<String> = q
            .tables
            .iter()
            .flat_map(|t| t.predicate.conjuncts.iter().map(move |c| format!("{}.a{}:[{},{}]", t.table, c.attr, c.lo, c.hi)))
            .collect();
        let sets: Vec<String> = q.sets.iter().map(|s| format!("a{}", s.attr)).collect();
        wr.write_record([
            i.to_string(),
            item.phase.to_string(),
            q.template.to_string(),
            item.noise.to_string(),
            tables.join(" "),
            preds.join(" "),
            sets.join(" "),
            q.rows.len().to_string(),
        ])?;
    }
    wr.flush()?;
    println!("{} queries in {} phases -> {}", w.len(), w.phases.len(), out.display());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => generate(&config(&common)?, &out),
        Command::Run { common, out_dir } => {
            let cfg = config(&common)?;
            let m = run(&cfg).map_err(lift)?;
            write_run(&out_dir, &cfg, &m)?;
            std::fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
            println!("{} queries, cumulative {:.0} us -> {}", m.latencies.len(), m.cumulative_us, out_dir.display());
            Ok(())
        }
        Command::Compare { common, vary, out_dir } => {
            let base = config(&common)?;
            let cfgs = variants(&base, &vary)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut results = Vec::new();
            for cfg in &cfgs {
                let m = run(cfg).map_err(lift)?;
                write_latency(&out_dir.join(format!("latency-{}.csv", cfg.hash())), &m)?;
                println!("{} {:>14.0} us", cfg.hash(), m.cumulative_us);
                results.push(m);
            }
            write_summary(&out_dir.join("summary.csv"), cfgs.iter().zip(&results))?;
            Ok(())
        }
        Command::Train { common, snapshots } => {
            let cfg = config(&common)?;
            if snapshots == 0 {
                bail!(Usage("--snapshots must be positive".into()));
            }
            let samples = training::labeled_snapshots(&cfg, snapshots).map_err(lift)?;
            let tree = train_cart(&samples, TrainParams::default())?;
            println!("{tree}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
