use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::policy::SectionTrace;
use crate::stats::ThreadStats;

/// Thread-private state a worker carries through its critical sections.
pub struct ThreadCtx {
    pub thread_id: usize,
    /// Retry-budget draws.
    pub policy_rng: ChaCha8Rng,
    /// Spurious-abort draws.
    pub htm_rng: ChaCha8Rng,
    pub stats: ThreadStats,
    /// Per-section attempt log, recorded only when enabled.
    pub trace: Option<Vec<SectionTrace>>,
}

/// Stream keyed by (seed, thread, run): changing the thread count or run
/// index never perturbs another thread's draws.
pub fn split_stream(seed: u64, thread_id: usize, run: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((thread_id as u64) << 32) | u64::from(run));
    rng
}

impl ThreadCtx {
    pub fn new(thread_id: usize, run: u32, policy_seed: u64, htm_seed: u64) -> Self {
        ThreadCtx {
            thread_id,
            policy_rng: split_stream(policy_seed, thread_id, run),
            htm_rng: split_stream(htm_seed, thread_id, run),
            stats: ThreadStats::default(),
            trace: None,
        }
    }

    pub fn traced(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }
}
