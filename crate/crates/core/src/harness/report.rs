//! CSV emission and the conservation audit over emitted rows.

use std::io::{Read, Write};

use super::experiment::ExperimentResult;
use crate::stats::ThreadStats;

pub const CSV_COLUMNS: [&str; 25] = [
    "policy",
    "scale",
    "edgefactor",
    "threads",
    "thread_id",
    "seed",
    "run",
    "kernel",
    "duration_ns",
    "htm_begins",
    "htm_commits",
    "aborts_conflict",
    "aborts_capacity",
    "aborts_lock",
    "aborts_explicit",
    "aborts_spurious",
    "htm_retries",
    "stm_begins",
    "stm_commits",
    "stm_aborts",
    "lock_commits",
    "fallback_episodes",
    "r_cap",
    "w_cap",
    "retry_spec",
];

/// `thread_id` value of per-run aggregate rows.
pub const AGGREGATE_THREAD: &str = "all";

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("writing CSV: {0}")]
    Write(#[source] csv::Error),
    #[error("reading CSV: {0}")]
    Read(#[source] csv::Error),
    #[error("CSV header does not match the expected columns")]
    Header,
    #[error("row {row}: column `{column}` is not a valid value: `{value}`")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

fn counters(s: &ThreadStats) -> [u64; 13] {
    [
        s.htm_begins,
        s.htm_commits,
        s.htm_aborts_conflict,
        s.htm_aborts_capacity,
        s.htm_aborts_lock_subscription,
        s.htm_aborts_explicit,
        s.htm_aborts_spurious,
        s.htm_retries,
        s.stm_begins,
        s.stm_commits,
        s.stm_aborts,
        s.lock_commits,
        s.fallback_episodes,
    ]
}

/// Writes the header, then for every run one row per thread followed by
/// the run's aggregate row.
pub fn emit_csv<'a>(
    results: impl IntoIterator<Item = &'a ExperimentResult>,
    sink: impl Write,
) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_COLUMNS).map_err(CsvError::Write)?;
    for res in results {
        let cfg = &res.policy;
        let fixed_pre = [
            cfg.kind.name().to_string(),
            res.scale.to_string(),
            res.edgefactor.to_string(),
            res.threads.to_string(),
        ];
        let fixed_post = [
            cfg.htm.read_capacity.to_string(),
            cfg.htm.write_capacity.to_string(),
            cfg.retry_label(),
        ];
        for rec in &res.records {
            let total = rec.total();
            let rows = rec
                .threads
                .iter()
                .enumerate()
                .map(|(t, s)| (t.to_string(), s))
                .chain(std::iter::once((AGGREGATE_THREAD.to_string(), &total)));
            for (tid, s) in rows {
                let mut row: Vec<String> = fixed_pre.to_vec();
                row.extend([
                    tid,
                    rec.seed.to_string(),
                    rec.run.to_string(),
                    rec.kernel.to_string(),
                    rec.duration.as_nanos().to_string(),
                ]);
                row.extend(counters(s).iter().map(u64::to_string));
                row.extend(fixed_post.iter().cloned());
                w.write_record(&row).map_err(CsvError::Write)?;
            }
        }
    }
    w.flush().map_err(|e| CsvError::Write(e.into()))
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvRow {
    pub policy: String,
    pub scale: u32,
    pub edgefactor: u32,
    pub threads: usize,
    /// `None` on aggregate rows.
    pub thread_id: Option<usize>,
    pub seed: u64,
    pub run: u32,
    pub kernel: String,
    pub duration_ns: u128,
    pub stats: ThreadStats,
    pub r_cap: usize,
    pub w_cap: usize,
    pub retry_spec: String,
}

impl CsvRow {
    /// Everything that identifies the kernel execution a row belongs to.
    pub fn run_key(&self) -> (&str, u32, u32, usize, u64, u32, &str, usize, usize, &str) {
        (
            &self.policy,
            self.scale,
            self.edgefactor,
            self.threads,
            self.seed,
            self.run,
            &self.kernel,
            self.r_cap,
            self.w_cap,
            &self.retry_spec,
        )
    }
}

pub fn parse_csv(input: impl Read) -> Result<Vec<CsvRow>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(CsvError::Read)?;
    if !header.iter().eq(CSV_COLUMNS.iter().copied()) {
        return Err(CsvError::Header);
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(CsvError::Read)?;
        let row = i + 1;
        let get = |c: usize| rec.get(c).unwrap_or("");
        macro_rules! num {
            ($c:expr) => {
                get($c).parse().map_err(|_| CsvError::Field {
                    row,
                    column: CSV_COLUMNS[$c],
                    value: get($c).to_string(),
                })?
            };
        }
        let thread_id = match get(4) {
            AGGREGATE_THREAD => None,
            _ => Some(num!(4)),
        };
        let stats = ThreadStats {
            htm_begins: num!(9),
            htm_commits: num!(10),
            htm_aborts_conflict: num!(11),
            htm_aborts_capacity: num!(12),
            htm_aborts_lock_subscription: num!(13),
            htm_aborts_explicit: num!(14),
            htm_aborts_spurious: num!(15),
            htm_retries: num!(16),
            stm_begins: num!(17),
            stm_commits: num!(18),
            stm_aborts: num!(19),
            lock_commits: num!(20),
            fallback_episodes: num!(21),
            ..ThreadStats::default()
        };
        rows.push(CsvRow {
            policy: get(0).to_string(),
            scale: num!(1),
            edgefactor: num!(2),
            threads: num!(3),
            thread_id,
            seed: num!(5),
            run: num!(6),
            kernel: get(7).to_string(),
            duration_ns: num!(8),
            stats,
            r_cap: num!(22),
            w_cap: num!(23),
            retry_spec: get(24).to_string(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub rows: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every row's conservation identities and that each aggregate
/// row is the sum of the thread rows emitted just before it.
/// `expected_sections` supplies the number of critical sections a row's
/// kernel execution ran, when known; the aggregate row's commits across
/// all paths must equal it.
pub fn audit_rows(
    rows: &[CsvRow],
    expected_sections: impl Fn(&CsvRow) -> Option<u64>,
) -> AuditReport {
    let mut violations = Vec::new();
    let mut group: Vec<&CsvRow> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let n = i + 1;
        let s = &r.stats;
        if s.htm_begins != s.htm_commits + s.htm_aborts() {
            violations.push(format!("row {n}: htm_begins != htm_commits + aborts"));
        }
        if s.stm_begins != s.stm_commits + s.stm_aborts {
            violations.push(format!("row {n}: stm_begins != stm_commits + stm_aborts"));
        }
        if s.htm_retries > s.htm_begins {
            violations.push(format!("row {n}: more retries than hardware begins"));
        }
        if r.thread_id.is_some() {
            group.push(r);
            continue;
        }
        if group.is_empty() {
            violations.push(format!("row {n}: aggregate without thread rows"));
        } else if group.iter().any(|g| g.run_key() != r.run_key()) {
            violations.push(format!(
                "row {n}: aggregate follows thread rows of another run"
            ));
        } else {
            let sum: ThreadStats = group.iter().map(|g| &g.stats).sum();
            if counters(&sum) != counters(s) {
                violations.push(format!(
                    "row {n}: aggregate differs from the sum of its thread rows"
                ));
            }
            if group.len() != r.threads {
                violations.push(format!(
                    "row {n}: {} thread rows for {} threads",
                    group.len(),
                    r.threads
                ));
            }
        }
        group.clear();
        if let Some(want) = expected_sections(r) {
            let got = s.htm_commits + s.stm_commits + s.lock_commits;
            if got != want {
                violations.push(format!(
                    "row {n}: {got} commits for {want} critical sections"
                ));
            }
        }
    }
    if !group.is_empty() {
        violations.push(format!(
            "{} trailing thread rows without an aggregate",
            group.len()
        ));
    }
    AuditReport {
        rows: rows.len(),
        violations,
    }
}
