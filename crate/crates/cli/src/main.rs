use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hytm::harness::{
    emit_csv, run_experiment, stress, tune_generation, ExperimentSpec, KernelSelect, StressSpec,
    TuneSpec,
};
use hytm::policy::{PolicyConfig, PolicyKind, RetrySpec, TuneMetric};
use hytm::workload::{rmat_edges, write_edges, RmatParams};
use hytm::HtmConfig;

#[derive(Parser)]
#[command(
    name = "hytm",
    version,
    about = "Hybrid transactional memory policy laboratory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the graph kernels under one policy.
    Run(RunArgs),
    /// Sweep retry ranges and pick a fixed budget for StAdHyTM.
    Tune(TuneArgs),
    /// Concurrent counter-increment correctness check.
    Stress(StressArgs),
    /// Write an R-MAT edge list as `src dst weight` lines.
    DumpEdges(DumpArgs),
}

#[derive(Args)]
struct HtmArgs {
    /// Read-set capacity in cachelines.
    #[arg(long, default_value_t = 512)]
    rcap: usize,
    /// Write-set capacity in cachelines.
    #[arg(long, default_value_t = 64)]
    wcap: usize,
    /// Probability that a hardware transaction aborts spuriously.
    #[arg(long, default_value_t = 0.0)]
    spurious: f64,
}

impl HtmArgs {
    fn config(&self, seed: u64) -> HtmConfig {
        HtmConfig {
            read_capacity: self.rcap,
            write_capacity: self.wcap,
            spurious_abort_probability: self.spurious,
            rng_seed: seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    policy: String,
    /// Fixed hardware retry budget.
    #[arg(long, conflicts_with = "retry_range")]
    retries: Option<u32>,
    /// Uniform retry range LO:HI, drawn per critical section.
    #[arg(long)]
    retry_range: Option<String>,
    #[arg(long, default_value_t = 10)]
    scale: u32,
    #[arg(long, default_value_t = 8)]
    edgefactor: u32,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    htm: HtmArgs,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    runs: u32,
    #[arg(long, default_value = "both")]
    kernel: KernelSelect,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Adjacency slots per vertex before edges spill to the overflow bucket.
    #[arg(long)]
    slots: Option<usize>,
    /// Check kernel outputs against a sequential build.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, default_value = "1:20,20:50,50:100")]
    ranges: String,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    scale: u32,
    #[arg(long, default_value_t = 8)]
    edgefactor: u32,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    htm: HtmArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    slots: Option<usize>,
    /// Rank ranges by wall-clock time instead of attempt count.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct StressArgs {
    /// Comma-separated thread counts.
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    increments: u64,
    /// Number of seeds; seeds 0..N are used.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    /// Comma-separated policies; all nine by default.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    #[command(flatten)]
    htm: HtmArgs,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    scale: u32,
    #[arg(long, default_value_t = 8)]
    edgefactor: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn retry_spec(kind: PolicyKind, retries: Option<u32>, range: Option<&str>) -> Result<RetrySpec> {
    Ok(match (kind, retries, range) {
        (_, None, None) => kind.default_retries(),
        (PolicyKind::StAdHyTm, Some(n), None) => RetrySpec::Tuned(n),
        (_, Some(n), None) => RetrySpec::Fixed(n),
        (_, None, Some(r)) => RetrySpec::parse_range(r)?,
        (_, Some(_), Some(_)) => bail!("--retries and --retry-range are mutually exclusive"),
    })
}

fn parse_ranges(s: &str) -> Result<Vec<(u32, u32)>> {
    s.split(',')
        .map(|r| match RetrySpec::parse_range(r)? {
            RetrySpec::UniformRange { lo, hi } => Ok((lo, hi)),
            _ => unreachable!(),
        })
        .collect()
}

fn run(a: RunArgs) -> Result<()> {
    let kind: PolicyKind = a.policy.parse()?;
    let retries = retry_spec(kind, a.retries, a.retry_range.as_deref())?;
    let cfg = PolicyConfig::new(kind)
        .with_retries(retries)
        .with_htm(a.htm.config(0));
    cfg.validate()?;
    let mut spec = ExperimentSpec::new(cfg, a.scale, a.threads);
    spec.edgefactor = a.edgefactor;
    spec.seeds = a.seed;
    spec.runs = a.runs;
    spec.kernels = a.kernel;
    spec.slots_per_vertex = a.slots;
    spec.verify = a.verify;
    let res = run_experiment(&spec)?;
    for m in &res.means {
        println!(
            "{} {}: mean over {} runs: {:.3} ms, htm begins {:.1}, commits {:.1}, retries {:.1}, stm commits {:.1}, lock commits {:.1}",
            kind,
            m.kernel,
            m.runs,
            m.duration.as_secs_f64() * 1e3,
            m.htm_begins,
            m.htm_commits,
            m.htm_retries,
            m.stm_commits,
            m.lock_commits,
        );
    }
    if let Some(path) = a.csv {
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        emit_csv([&res], BufWriter::new(f))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let mut spec = TuneSpec::new(parse_ranges(&a.ranges)?);
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.scale = a.scale;
    spec.edgefactor = a.edgefactor;
    spec.threads = a.threads;
    spec.htm = a.htm.config(a.seed);
    spec.slots_per_vertex = a.slots;
    spec.metric = if a.wall_clock {
        TuneMetric::WallClock
    } else {
        TuneMetric::Attempts
    };
    let r = tune_generation(&spec)?;
    for ((lo, hi), mean) in &r.means {
        println!("range {lo}:{hi} mean {mean:.3}");
    }
    let n = match r.chosen {
        RetrySpec::Tuned(n) => n,
        other => unreachable!("tuning returned {other}"),
    };
    println!("best range {}:{}", r.best_range.0, r.best_range.1);
    println!("Tuned({n})");
    Ok(())
}

fn stress_cmd(a: StressArgs) -> Result<()> {
    let kinds: Vec<PolicyKind> = if a.policy.is_empty() {
        PolicyKind::ALL.to_vec()
    } else {
        a.policy
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_, _>>()?
    };
    if a.threads.contains(&0) {
        bail!("thread counts must be at least 1");
    }
    let htm = a.htm.config(0);
    htm.validate()?;
    let spec = StressSpec {
        policies: kinds
            .iter()
            .map(|&k| PolicyConfig::new(k).with_htm(htm.clone()))
            .collect(),
        threads: a.threads,
        increments: a.increments,
        seeds: (0..a.seeds).collect(),
    };
    let report = stress(&spec);
    let mut out = std::io::stdout().lock();
    for kind in &kinds {
        let mine: Vec<_> = report
            .outcomes
            .iter()
            .filter(|o| o.policy == *kind)
            .collect();
        let bad = mine.iter().filter(|o| o.problem.is_some()).count();
        writeln!(
            out,
            "{kind}: {}/{} runs correct",
            mine.len() - bad,
            mine.len()
        )?;
    }
    for f in report.failures() {
        writeln!(
            out,
            "FAIL {} threads={} seed={}: {}",
            f.policy,
            f.threads,
            f.seed,
            f.problem.as_deref().unwrap_or("")
        )?;
    }
    writeln!(out, "elapsed {:.2} s", report.duration.as_secs_f64())?;
    if !report.ok() {
        bail!("{} stress runs failed", report.failures().count());
    }
    Ok(())
}

fn dump(a: DumpArgs) -> Result<()> {
    let edges = rmat_edges(&RmatParams::new(a.scale, a.seed).with_edgefactor(a.edgefactor))?;
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_edges(BufWriter::new(f), &edges)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} edges to {}", edges.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Tune(a) => tune(a),
        Cmd::Stress(a) => stress_cmd(a),
        Cmd::DumpEdges(a) => dump(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
