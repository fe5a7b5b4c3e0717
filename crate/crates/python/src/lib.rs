//! Python bindings: the heap, R-MAT generation, experiments, counter
//! stress and StAdHyTM tuning.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hytm::harness::{self, ExperimentSpec, KernelSelect, StressSpec, TuneSpec, CSV_COLUMNS};
use hytm::policy::{PolicyConfig, PolicyKind, RetrySpec};
use hytm::workload::{self, RmatParams};
use hytm::{HtmConfig, ThreadStats};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Word-addressed heap partitioned into cachelines.
#[pyclass(name = "TmHeap", module = "hytm_py")]
struct PyHeap {
    inner: hytm::TmHeap,
}

#[pymethods]
impl PyHeap {
    #[new]
    #[pyo3(signature = (n_words, words_per_line = 8))]
    fn new(n_words: usize, words_per_line: usize) -> PyResult<Self> {
        Ok(PyHeap {
            inner: hytm::TmHeap::new(n_words, words_per_line).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn words_per_line(&self) -> usize {
        self.inner.words_per_line()
    }

    #[getter]
    fn line_count(&self) -> usize {
        self.inner.line_count()
    }

    fn line_of(&self, addr: usize) -> PyResult<usize> {
        self.inner.line_of(addr).map_err(err)
    }

    /// Non-transactional read; only meaningful while no transaction runs.
    fn read(&self, addr: usize) -> PyResult<u64> {
        self.inner.raw_read(addr).map_err(err)
    }

    fn write(&self, addr: usize, value: u64) -> PyResult<()> {
        self.inner.raw_write(addr, value).map_err(err)
    }

    /// `(version, writer, readers)` of a cacheline.
    fn record(&self, line: usize) -> PyResult<(u64, Option<u64>, Vec<u64>)> {
        let r = self.inner.record(line).map_err(err)?;
        Ok((
            r.version,
            r.writer.map(|t| t.0),
            r.readers.iter().map(|t| t.0).collect(),
        ))
    }

    fn clock(&self) -> u64 {
        self.inner.clock()
    }

    fn is_quiescent(&self) -> bool {
        self.inner.is_quiescent()
    }
}

fn stats_dict<'py>(py: Python<'py>, s: &ThreadStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("htm_begins", s.htm_begins)?;
    d.set_item("htm_commits", s.htm_commits)?;
    d.set_item("aborts_conflict", s.htm_aborts_conflict)?;
    d.set_item("aborts_capacity", s.htm_aborts_capacity)?;
    d.set_item("aborts_lock", s.htm_aborts_lock_subscription)?;
    d.set_item("aborts_explicit", s.htm_aborts_explicit)?;
    d.set_item("aborts_spurious", s.htm_aborts_spurious)?;
    d.set_item("htm_retries", s.htm_retries)?;
    d.set_item("stm_begins", s.stm_begins)?;
    d.set_item("stm_commits", s.stm_commits)?;
    d.set_item("stm_aborts", s.stm_aborts)?;
    d.set_item("lock_commits", s.lock_commits)?;
    d.set_item("fallback_episodes", s.fallback_episodes)?;
    d.set_item("sections", s.sections)?;
    Ok(d)
}

/// Names accepted wherever a policy is expected.
#[pyfunction]
fn policies() -> Vec<&'static str> {
    PolicyKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
#[pyo3(signature = (scale, seed = 0, edgefactor = 8))]
fn rmat_edges(
    py: Python<'_>,
    scale: u32,
    seed: u64,
    edgefactor: u32,
) -> PyResult<Vec<(u32, u32, u32)>> {
    let p = RmatParams::new(scale, seed).with_edgefactor(edgefactor);
    let edges = py.detach(|| workload::rmat_edges(&p)).map_err(err)?;
    Ok(edges
        .into_iter()
        .map(|e| (e.src, e.dst, e.weight))
        .collect())
}

fn policy_config(
    policy: &str,
    retries: Option<u32>,
    retry_range: Option<(u32, u32)>,
    rcap: usize,
    wcap: usize,
    spurious: f64,
) -> PyResult<PolicyConfig> {
    let kind: PolicyKind = policy.parse().map_err(err)?;
    let spec = match (retries, retry_range) {
        (Some(_), Some(_)) => return Err(err("give retries or retry_range, not both")),
        (Some(n), None) if kind == PolicyKind::StAdHyTm => RetrySpec::Tuned(n),
        (Some(n), None) => RetrySpec::Fixed(n),
        (None, Some((lo, hi))) => RetrySpec::range(lo, hi).map_err(err)?,
        (None, None) => kind.default_retries(),
    };
    let cfg = PolicyConfig::new(kind)
        .with_retries(spec)
        .with_htm(HtmConfig {
            read_capacity: rcap,
            write_capacity: wcap,
            spurious_abort_probability: spurious,
            rng_seed: 0,
        });
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Runs the kernels and returns the CSV rows as dicts keyed by column.
#[pyfunction]
#[pyo3(signature = (
    policy, scale = 10, threads = 1, retries = None, retry_range = None, seeds = vec![0], runs = 1,
    kernel = "both", rcap = 512, wcap = 64, spurious = 0.0, verify = false,
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    policy: &str,
    scale: u32,
    threads: usize,
    retries: Option<u32>,
    retry_range: Option<(u32, u32)>,
    seeds: Vec<u64>,
    runs: u32,
    kernel: &str,
    rcap: usize,
    wcap: usize,
    spurious: f64,
    verify: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = policy_config(policy, retries, retry_range, rcap, wcap, spurious)?;
    let mut spec = ExperimentSpec::new(cfg, scale, threads);
    spec.seeds = seeds;
    spec.runs = runs;
    spec.kernels = kernel.parse::<KernelSelect>().map_err(err)?;
    spec.verify = verify;
    let res = py.detach(|| harness::run_experiment(&spec)).map_err(err)?;
    let mut buf = Vec::new();
    harness::emit_csv([&res], &mut buf).map_err(err)?;
    let mut out = Vec::new();
    let mut reader = csv_rows(&buf);
    for row in &mut reader {
        let d = PyDict::new(py);
        for (col, val) in CSV_COLUMNS.iter().zip(row) {
            match val.parse::<u128>() {
                Ok(n) => d.set_item(col, n)?,
                Err(_) => d.set_item(col, val)?,
            }
        }
        out.push(d);
    }
    Ok(out)
}

fn csv_rows(buf: &[u8]) -> impl Iterator<Item = Vec<String>> + '_ {
    std::str::from_utf8(buf)
        .unwrap_or("")
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
}

/// Shared-counter stress; returns one dict per (policy, threads, seed).
#[pyfunction]
#[pyo3(signature = (policies = None, threads = vec![1, 2], increments = 1000, seeds = 2, spurious = 0.0))]
fn stress<'py>(
    py: Python<'py>,
    policies: Option<Vec<String>>,
    threads: Vec<usize>,
    increments: u64,
    seeds: u64,
    spurious: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kinds: Vec<PolicyKind> = match policies {
        Some(p) => p
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(err)?,
        None => PolicyKind::ALL.to_vec(),
    };
    let htm = HtmConfig {
        spurious_abort_probability: spurious,
        ..HtmConfig::default()
    };
    htm.validate().map_err(err)?;
    let spec = StressSpec {
        policies: kinds
            .iter()
            .map(|&k| PolicyConfig::new(k).with_htm(htm.clone()))
            .collect(),
        threads,
        increments,
        seeds: (0..seeds).collect(),
    };
    let report = py.detach(|| harness::stress(&spec));
    report
        .outcomes
        .iter()
        .map(|o| {
            let d = stats_dict(py, &o.stats)?;
            d.set_item("policy", o.policy.name())?;
            d.set_item("threads", o.threads)?;
            d.set_item("seed", o.seed)?;
            d.set_item("expected", o.expected)?;
            d.set_item("observed", o.observed)?;
            d.set_item("problem", o.problem.clone())?;
            Ok(d)
        })
        .collect()
}

type RangeMeans = Vec<((u32, u32), f64)>;

/// Sweeps the ranges and returns `(n, [((lo, hi), mean attempts), ...])`.
#[pyfunction]
#[pyo3(signature = (ranges, trials = 3, scale = 10, seed = 0, wcap = 64, slots = None))]
fn tune(
    py: Python<'_>,
    ranges: Vec<(u32, u32)>,
    trials: usize,
    scale: u32,
    seed: u64,
    wcap: usize,
    slots: Option<usize>,
) -> PyResult<(u32, RangeMeans)> {
    let mut spec = TuneSpec::new(ranges);
    spec.trials = trials;
    spec.scale = scale;
    spec.seed = seed;
    spec.htm.write_capacity = wcap;
    spec.slots_per_vertex = slots;
    let r = py.detach(|| harness::tune_generation(&spec)).map_err(err)?;
    match r.chosen {
        RetrySpec::Tuned(n) => Ok((n, r.means)),
        other => Err(err(format!("unexpected tuning result {other}"))),
    }
}

#[pymodule]
fn hytm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHeap>()?;
    m.add_function(wrap_pyfunction!(policies, m)?)?;
    m.add_function(wrap_pyfunction!(rmat_edges, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(stress, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    Ok(())
}
