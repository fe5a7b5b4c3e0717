//! Experiment runner, CSV output and audit, counter stress, and the
//! StAdHyTM tuning workload.

mod experiment;
mod report;
mod stress;
mod tune;

pub use experiment::{
    build_sequential, compute_sections, max_weight_edges, run_experiment, ExperimentError,
    ExperimentResult, ExperimentSpec, Kernel, KernelSelect, MeanRow, RunRecord,
    DEFAULT_MEMORY_BUDGET,
};
pub use report::{
    audit_rows, emit_csv, parse_csv, AuditReport, CsvError, CsvRow, AGGREGATE_THREAD, CSV_COLUMNS,
};
pub use stress::{stress, stress_once, StressOutcome, StressReport, StressSpec};
pub use tune::{tune_generation, TuneSpec};
