//! Shared-counter increment stress across policies.

use std::time::{Duration, Instant};

use crate::context::ThreadCtx;
use crate::policy::{run_section, PolicyConfig, PolicyKind, TmSystem};
use crate::stats::ThreadStats;

#[derive(Clone, Debug, PartialEq)]
pub struct StressSpec {
    pub policies: Vec<PolicyConfig>,
    pub threads: Vec<usize>,
    pub increments: u64,
    pub seeds: Vec<u64>,
}

impl StressSpec {
    /// Every policy with its default retry spec.
    pub fn all_policies(threads: Vec<usize>, increments: u64, seeds: Vec<u64>) -> Self {
        StressSpec {
            policies: PolicyKind::ALL
                .iter()
                .map(|&k| PolicyConfig::new(k))
                .collect(),
            threads,
            increments,
            seeds,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressOutcome {
    pub policy: PolicyKind,
    pub threads: usize,
    pub seed: u64,
    pub expected: u64,
    pub observed: u64,
    pub stats: ThreadStats,
    /// First invariant that failed, if any.
    pub problem: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct StressReport {
    pub outcomes: Vec<StressOutcome>,
    pub duration: Duration,
}

impl StressReport {
    pub fn failures(&self) -> impl Iterator<Item = &StressOutcome> {
        self.outcomes.iter().filter(|o| o.problem.is_some())
    }

    pub fn ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// `threads` workers each increment one shared word `increments` times.
pub fn stress_once(
    cfg: &PolicyConfig,
    threads: usize,
    increments: u64,
    seed: u64,
) -> StressOutcome {
    let sys = TmSystem::with_data_words(1, crate::memory::DEFAULT_WORDS_PER_LINE)
        .expect("non-empty heap");
    let addr = sys.data_base();
    let mut cfg = cfg.clone();
    cfg.rng_seed ^= seed;
    cfg.htm.rng_seed ^= seed.rotate_left(17);
    let mut ctxs: Vec<ThreadCtx> = (0..threads.max(1))
        .map(|t| ThreadCtx::new(t, 0, cfg.rng_seed, cfg.htm.rng_seed))
        .collect();
    std::thread::scope(|s| {
        for ctx in ctxs.iter_mut() {
            let (sys, cfg) = (&sys, &cfg);
            s.spawn(move || {
                for _ in 0..increments {
                    run_section(sys, cfg, ctx, |tx| {
                        let v = tx.read(addr)?;
                        tx.write(addr, v + 1)
                    });
                }
            });
        }
    });
    let expected = threads.max(1) as u64 * increments;
    let observed = sys.heap().raw_read(addr).expect("counter in bounds");
    let stats: ThreadStats = ctxs.iter().map(|c| &c.stats).sum();
    let allowed = cfg.kind.allowed_paths();
    let problem = if observed != expected {
        Some(format!("counter is {observed}, expected {expected}"))
    } else if let Some(e) = ctxs.iter().find_map(|c| c.stats.check_identities().err()) {
        Some(e)
    } else if stats.committed_sections() != expected {
        Some(format!(
            "{} commits for {expected} sections",
            stats.committed_sections()
        ))
    } else if sys.global_lock().value() != 0 {
        Some(format!(
            "global lock counter left at {}",
            sys.global_lock().value()
        ))
    } else if !sys.heap().is_quiescent() {
        Some("heap not quiescent".to_string())
    } else if (stats.htm_commits > 0 && !allowed.contains(&crate::PathKind::Hardware))
        || (stats.stm_commits > 0 && !allowed.contains(&crate::PathKind::Software))
        || (stats.lock_commits > 0 && !allowed.contains(&crate::PathKind::Lock))
    {
        Some("commit on a path the policy does not allow".to_string())
    } else {
        None
    };
    StressOutcome {
        policy: cfg.kind,
        threads,
        seed,
        expected,
        observed,
        stats,
        problem,
    }
}

pub fn stress(spec: &StressSpec) -> StressReport {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for cfg in &spec.policies {
        for &t in &spec.threads {
            for &seed in &spec.seeds {
                outcomes.push(stress_once(cfg, t, spec.increments, seed));
            }
        }
    }
    StressReport {
        outcomes,
        duration: start.elapsed(),
    }
}
