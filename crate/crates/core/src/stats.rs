//! Per-thread transaction counters.

use std::ops::AddAssign;
use std::time::Duration;

use crate::htm::AbortCause;

/// Counters one worker thread accumulates. Workers own their sheet
/// exclusively; sheets are merged after the threads join.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ThreadStats {
    pub htm_begins: u64,
    pub htm_commits: u64,
    pub htm_aborts_conflict: u64,
    pub htm_aborts_capacity: u64,
    pub htm_aborts_lock_subscription: u64,
    pub htm_aborts_explicit: u64,
    pub htm_aborts_spurious: u64,
    pub htm_retries: u64,
    pub stm_begins: u64,
    pub stm_commits: u64,
    pub stm_aborts: u64,
    pub lock_commits: u64,
    pub fallback_episodes: u64,
    /// Critical sections completed, on any path.
    pub sections: u64,
    /// Critical sections whose first attempt was a hardware transaction.
    pub hw_first_attempts: u64,
}

impl ThreadStats {
    pub fn record_abort(&mut self, cause: AbortCause) {
        match cause {
            AbortCause::Conflict => self.htm_aborts_conflict += 1,
            AbortCause::Capacity => self.htm_aborts_capacity += 1,
            AbortCause::LockSubscription => self.htm_aborts_lock_subscription += 1,
            AbortCause::Explicit => self.htm_aborts_explicit += 1,
            AbortCause::Spurious => self.htm_aborts_spurious += 1,
        }
    }

    pub fn htm_aborts(&self) -> u64 {
        self.htm_aborts_conflict
            + self.htm_aborts_capacity
            + self.htm_aborts_lock_subscription
            + self.htm_aborts_explicit
            + self.htm_aborts_spurious
    }

    pub fn committed_sections(&self) -> u64 {
        self.htm_commits + self.stm_commits + self.lock_commits
    }

    /// Checks the counter conservation identities, returning a description
    /// of the first one that fails.
    pub fn check_identities(&self) -> Result<(), String> {
        if self.htm_begins != self.htm_commits + self.htm_aborts() {
            return Err(format!(
                "htm_begins {} != htm_commits {} + aborts {}",
                self.htm_begins,
                self.htm_commits,
                self.htm_aborts()
            ));
        }
        if self.sections != self.committed_sections() {
            return Err(format!(
                "sections {} != htm {} + stm {} + lock {}",
                self.sections, self.htm_commits, self.stm_commits, self.lock_commits
            ));
        }
        if self.htm_retries + self.hw_first_attempts != self.htm_begins {
            return Err(format!(
                "htm_retries {} != htm_begins {} - first attempts {}",
                self.htm_retries, self.htm_begins, self.hw_first_attempts
            ));
        }
        if self.stm_begins != self.stm_commits + self.stm_aborts {
            return Err(format!(
                "stm_begins {} != stm_commits {} + stm_aborts {}",
                self.stm_begins, self.stm_commits, self.stm_aborts
            ));
        }
        Ok(())
    }
}

impl AddAssign<&ThreadStats> for ThreadStats {
    fn add_assign(&mut self, o: &ThreadStats) {
        self.htm_begins += o.htm_begins;
        self.htm_commits += o.htm_commits;
        self.htm_aborts_conflict += o.htm_aborts_conflict;
        self.htm_aborts_capacity += o.htm_aborts_capacity;
        self.htm_aborts_lock_subscription += o.htm_aborts_lock_subscription;
        self.htm_aborts_explicit += o.htm_aborts_explicit;
        self.htm_aborts_spurious += o.htm_aborts_spurious;
        self.htm_retries += o.htm_retries;
        self.stm_begins += o.stm_begins;
        self.stm_commits += o.stm_commits;
        self.stm_aborts += o.stm_aborts;
        self.lock_commits += o.lock_commits;
        self.fallback_episodes += o.fallback_episodes;
        self.sections += o.sections;
        self.hw_first_attempts += o.hw_first_attempts;
    }
}

impl<'a> std::iter::Sum<&'a ThreadStats> for ThreadStats {
    fn sum<I: Iterator<Item = &'a ThreadStats>>(iter: I) -> Self {
        let mut acc = ThreadStats::default();
        for s in iter {
            acc += s;
        }
        acc
    }
}

impl std::iter::Sum for ThreadStats {
    fn sum<I: Iterator<Item = ThreadStats>>(iter: I) -> Self {
        iter.fold(ThreadStats::default(), |mut acc, s| {
            acc += &s;
            acc
        })
    }
}

/// Per-thread counters of one kernel execution plus its wall-clock time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StatsSheet {
    pub threads: Vec<ThreadStats>,
    pub duration: Duration,
}

impl StatsSheet {
    pub fn total(&self) -> ThreadStats {
        self.threads.iter().sum()
    }
}
