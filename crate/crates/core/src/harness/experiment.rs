use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::access::DirectAccess;
use crate::policy::{PolicyConfig, PolicyError, SectionTrace};
use crate::stats::ThreadStats;
use crate::workload::{
    computation_kernel, generation_kernel, rmat_edges, Edge, GraphError, GraphLayout,
    GraphSnapshot, KernelOpts, KernelReport, RmatError, RmatParams,
};

/// Default ceiling on heap plus edge-list memory for one run.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

const HTM_SEED_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("runs must be at least 1")]
    ZeroRuns,
    #[error("threads must be at least 1")]
    ZeroThreads,
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("run needs {need} bytes but the memory budget is {budget}")]
    OverBudget { need: usize, budget: usize },
    #[error("invariant violated (seed {seed}, run {run}, {kernel}): {what}")]
    Invariant {
        seed: u64,
        run: u32,
        kernel: Kernel,
        what: String,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Rmat(#[from] RmatError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Generate,
    Compute,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Generate => "generate",
            Kernel::Compute => "compute",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generate" => Ok(Kernel::Generate),
            "compute" => Ok(Kernel::Compute),
            _ => Err(format!("unknown kernel `{s}`")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum KernelSelect {
    Generate,
    Compute,
    Both,
}

impl KernelSelect {
    pub fn kernels(self) -> &'static [Kernel] {
        match self {
            KernelSelect::Generate => &[Kernel::Generate],
            KernelSelect::Compute => &[Kernel::Compute],
            KernelSelect::Both => &[Kernel::Generate, Kernel::Compute],
        }
    }
}

impl FromStr for KernelSelect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generate" => Ok(KernelSelect::Generate),
            "compute" => Ok(KernelSelect::Compute),
            "both" => Ok(KernelSelect::Both),
            _ => Err(format!(
                "unknown kernel selection `{s}` (expected generate, compute or both)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub policy: PolicyConfig,
    pub scale: u32,
    pub edgefactor: u32,
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub runs: u32,
    pub kernels: KernelSelect,
    /// Defaults to `4 * edgefactor`.
    pub slots_per_vertex: Option<usize>,
    pub words_per_line: usize,
    pub memory_budget: usize,
    /// Compare every kernel's output with a sequential build.
    pub verify: bool,
    /// Keep per-section traces in the result.
    pub trace: bool,
}

impl ExperimentSpec {
    pub fn new(policy: PolicyConfig, scale: u32, threads: usize) -> Self {
        ExperimentSpec {
            policy,
            scale,
            edgefactor: 8,
            threads,
            seeds: vec![0],
            runs: 1,
            kernels: KernelSelect::Both,
            slots_per_vertex: None,
            words_per_line: crate::memory::DEFAULT_WORDS_PER_LINE,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            verify: false,
            trace: false,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots_per_vertex
            .unwrap_or(4 * self.edgefactor as usize)
    }

    pub fn rmat(&self, seed: u64) -> RmatParams {
        RmatParams::new(self.scale, seed).with_edgefactor(self.edgefactor)
    }

    pub fn layout(&self) -> Result<GraphLayout, ExperimentError> {
        let p = self.rmat(0);
        p.validate()?;
        Ok(GraphLayout::new(
            p.vertices(),
            p.edge_count()?,
            self.slots(),
            self.words_per_line,
        )?)
    }

    /// Bytes one run needs: the heap plus the edge list.
    pub fn footprint(&self) -> Result<usize, ExperimentError> {
        let layout = self.layout()?;
        let edges = self.rmat(0).edge_count()?;
        Ok(layout
            .heap_bytes()
            .saturating_add(edges.saturating_mul(std::mem::size_of::<Edge>())))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs == 0 {
            return Err(ExperimentError::ZeroRuns);
        }
        if self.threads == 0 {
            return Err(ExperimentError::ZeroThreads);
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::NoSeeds);
        }
        self.policy.validate()?;
        let need = self.footprint()?;
        if need > self.memory_budget {
            return Err(ExperimentError::OverBudget {
                need,
                budget: self.memory_budget,
            });
        }
        Ok(())
    }

    fn seeded_policy(&self, seed: u64) -> PolicyConfig {
        let mut cfg = self.policy.clone();
        cfg.rng_seed ^= seed;
        cfg.htm.rng_seed ^= seed ^ HTM_SEED_SALT;
        cfg
    }
}

/// One kernel execution.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub run: u32,
    pub kernel: Kernel,
    pub threads: Vec<ThreadStats>,
    pub duration: Duration,
    pub sections: u64,
    pub traces: Vec<Vec<SectionTrace>>,
}

impl RunRecord {
    pub fn total(&self) -> ThreadStats {
        self.threads.iter().sum()
    }
}

/// Mean of one kernel's counters over every run and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub kernel: Kernel,
    pub runs: usize,
    pub duration: Duration,
    pub htm_begins: f64,
    pub htm_commits: f64,
    pub htm_retries: f64,
    pub stm_begins: f64,
    pub stm_commits: f64,
    pub lock_commits: f64,
    pub fallback_episodes: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub policy: PolicyConfig,
    pub scale: u32,
    pub edgefactor: u32,
    pub threads: usize,
    pub records: Vec<RunRecord>,
    pub means: Vec<MeanRow>,
}

impl ExperimentResult {
    pub fn total(&self) -> ThreadStats {
        self.records
            .iter()
            .map(RunRecord::total)
            .sum::<ThreadStats>()
    }
}

/// Inserts every edge in order with no concurrency control.
pub fn build_sequential(sys: &crate::TmSystem, layout: &GraphLayout, edges: &[Edge]) {
    let mut access = DirectAccess::new(sys.heap());
    for &e in edges {
        layout
            .insert(&mut access, e)
            .expect("direct access never aborts");
    }
}

/// Every edge of the maximum weight, in list order.
pub fn max_weight_edges(edges: &[Edge]) -> Vec<Edge> {
    let Some(max) = edges.iter().map(|e| e.weight).max() else {
        return Vec::new();
    };
    edges.iter().copied().filter(|e| e.weight == max).collect()
}

fn sorted(mut v: Vec<Edge>) -> Vec<Edge> {
    v.sort_unstable();
    v
}

fn audit_kernel(
    sys: &crate::TmSystem,
    report: &KernelReport,
    expected_sections: u64,
) -> Result<(), String> {
    for (t, s) in report.threads.iter().enumerate() {
        s.check_identities()
            .map_err(|e| format!("thread {t}: {e}"))?;
    }
    let committed: u64 = report
        .threads
        .iter()
        .map(ThreadStats::committed_sections)
        .sum();
    if report.sections != expected_sections || committed != expected_sections {
        return Err(format!(
            "{expected_sections} sections expected, {} run and {committed} committed",
            report.sections
        ));
    }
    let lock = sys.global_lock().value();
    if lock != 0 {
        return Err(format!("global lock counter is {lock} after the kernel"));
    }
    if !sys.heap().is_quiescent() {
        return Err("heap still has owned or subscribed lines".into());
    }
    Ok(())
}

fn means(records: &[RunRecord]) -> Vec<MeanRow> {
    let mut by_kernel: HashMap<Kernel, Vec<&RunRecord>> = HashMap::new();
    for r in records {
        by_kernel.entry(r.kernel).or_default().push(r);
    }
    let mut rows: Vec<MeanRow> = by_kernel
        .into_iter()
        .map(|(kernel, rs)| {
            let n = rs.len() as f64;
            let tot: ThreadStats = rs.iter().map(|r| r.total()).sum();
            let dur: Duration = rs.iter().map(|r| r.duration).sum();
            MeanRow {
                kernel,
                runs: rs.len(),
                duration: dur / rs.len() as u32,
                htm_begins: tot.htm_begins as f64 / n,
                htm_commits: tot.htm_commits as f64 / n,
                htm_retries: tot.htm_retries as f64 / n,
                stm_begins: tot.stm_begins as f64 / n,
                stm_commits: tot.stm_commits as f64 / n,
                lock_commits: tot.lock_commits as f64 / n,
                fallback_episodes: tot.fallback_episodes as f64 / n,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.kernel);
    rows
}

/// Runs `runs` repetitions for each seed. The budget check happens before
/// any allocation; per-run invariants stop the experiment on failure.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let layout = spec.layout()?;
    let mut records = Vec::new();
    for &seed in &spec.seeds {
        let edges = rmat_edges(&spec.rmat(seed))?;
        let cfg = spec.seeded_policy(seed);
        for run in 0..spec.runs {
            let fail = |kernel, what: String| ExperimentError::Invariant {
                seed,
                run,
                kernel,
                what,
            };
            let mut opts = KernelOpts::new(spec.threads).run(run);
            opts.trace = spec.trace;
            let sys = layout.system()?;
            let wants = spec.kernels.kernels();
            if wants.contains(&Kernel::Generate) {
                let rep = generation_kernel(&sys, &layout, &edges, &cfg, opts)?;
                audit_kernel(&sys, &rep, edges.len() as u64)
                    .map_err(|w| fail(Kernel::Generate, w))?;
                if spec.verify {
                    let got = layout.snapshot(sys.heap())?.edges();
                    if sorted(got) != sorted(edges.clone()) {
                        return Err(fail(
                            Kernel::Generate,
                            "graph differs from the input edge multiset".into(),
                        ));
                    }
                }
                records.push(record(seed, run, Kernel::Generate, rep));
            } else {
                build_sequential(&sys, &layout, &edges);
            }
            if wants.contains(&Kernel::Compute) {
                let graph = layout.snapshot(sys.heap())?;
                let expected = compute_sections(&graph);
                let (got, rep) = computation_kernel(&sys, &layout, &graph, &cfg, opts)?;
                audit_kernel(&sys, &rep, expected).map_err(|w| fail(Kernel::Compute, w))?;
                if spec.verify && sorted(got) != sorted(max_weight_edges(&edges)) {
                    return Err(fail(
                        Kernel::Compute,
                        "selected edges differ from the sequential result".into(),
                    ));
                }
                records.push(record(seed, run, Kernel::Compute, rep));
            }
        }
    }
    Ok(ExperimentResult {
        policy: spec.policy.clone(),
        scale: spec.scale,
        edgefactor: spec.edgefactor,
        threads: spec.threads,
        means: means(&records),
        records,
    })
}

/// Critical sections the computation kernel runs on `graph`.
pub fn compute_sections(graph: &GraphSnapshot) -> u64 {
    let edges = graph.edges();
    let nonempty = graph.adjacency.iter().filter(|l| !l.is_empty()).count();
    (nonempty + max_weight_edges(&edges).len()) as u64
}

fn record(seed: u64, run: u32, kernel: Kernel, rep: KernelReport) -> RunRecord {
    RunRecord {
        seed,
        run,
        kernel,
        sections: rep.sections,
        duration: rep.duration,
        threads: rep.threads,
        traces: rep.traces,
    }
}
