//! The nine synchronization policies.
//!
//! Every policy runs a critical section given as a body over [`TxAccess`]
//! and reports which mechanism finally committed it:
//!
//! | policy            | first try            | after the retry budget          |
//! |-------------------|----------------------|---------------------------------|
//! | coarse lock       | global mutex         | n/a                             |
//! | STM only          | software transaction | n/a                             |
//! | HTM + atomic lock | hardware, `n+1` times| counter lock, direct execution  |
//! | HTM + spin lock   | hardware, `n+1` times| spin lock, direct execution     |
//! | HLE               | hardware, once       | lock, direct execution          |
//! | RND/Fx/StAd HyTM  | hardware, `n+1` times| STM episode under the counter   |
//! | DyAd HyTM         | as Fx, but a capacity abort leaves one last hardware try |
//!
//! The retry budget follows decrement-then-test semantics: after a failed
//! attempt `tries` is decremented and hardware is retried while it is still
//! non-negative, so `Fixed(n)` allows `n + 1` hardware attempts.

mod tune;

use std::fmt;
use std::str::FromStr;

use parking_lot::Mutex;
use rand::Rng;

use crate::access::{DirectAccess, TxAccess, TxResult};
use crate::context::ThreadCtx;
use crate::htm::{AbortCause, HtmConfig, HtmConfigError, HwTx};
use crate::memory::TmHeap;
use crate::stm::{GlobalLock, SwTx, GLOBAL_LOCK_ADDR};

pub use tune::{tune_stad, TrialCost, TuneMetric, TuneReport};

/// Default hardware retry budget when none is given.
pub const DEFAULT_RETRIES: u32 = 10;

/// Retry range RNDHyTM draws from by default.
pub const DEFAULT_RND_RANGE: (u32, u32) = (1, 50);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy `{0}` (expected one of: lock, stm, htm-alock, htm-spin, hle, rnd, fx, stad, dyad)")]
    UnknownPolicy(String),
    #[error("retry range {lo}:{hi} must satisfy 1 <= lo <= hi")]
    BadRange { lo: u32, hi: u32 },
    #[error("malformed retry range `{0}` (expected LO:HI)")]
    MalformedRange(String),
    #[error("policy {kind} cannot use retry spec {spec}")]
    RetryMismatch { kind: PolicyKind, spec: RetrySpec },
    #[error("tuning needs at least one retry range")]
    EmptyRanges,
    #[error("tuning needs at least one trial")]
    ZeroTrials,
    #[error(transparent)]
    Htm(#[from] HtmConfigError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    CoarseLock,
    StmOnly,
    HtmAtomicLock,
    HtmSpinLock,
    Hle,
    RndHyTm,
    FxHyTm,
    StAdHyTm,
    DyAdHyTm,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::CoarseLock,
        PolicyKind::StmOnly,
        PolicyKind::HtmAtomicLock,
        PolicyKind::HtmSpinLock,
        PolicyKind::Hle,
        PolicyKind::RndHyTm,
        PolicyKind::FxHyTm,
        PolicyKind::StAdHyTm,
        PolicyKind::DyAdHyTm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::CoarseLock => "lock",
            PolicyKind::StmOnly => "stm",
            PolicyKind::HtmAtomicLock => "htm-alock",
            PolicyKind::HtmSpinLock => "htm-spin",
            PolicyKind::Hle => "hle",
            PolicyKind::RndHyTm => "rnd",
            PolicyKind::FxHyTm => "fx",
            PolicyKind::StAdHyTm => "stad",
            PolicyKind::DyAdHyTm => "dyad",
        }
    }

    /// Commit paths a section may finish on under this policy.
    pub fn allowed_paths(self) -> &'static [PathKind] {
        match self {
            PolicyKind::CoarseLock => &[PathKind::Lock],
            PolicyKind::StmOnly => &[PathKind::Software],
            PolicyKind::HtmAtomicLock | PolicyKind::HtmSpinLock | PolicyKind::Hle => {
                &[PathKind::Hardware, PathKind::Lock]
            }
            PolicyKind::RndHyTm
            | PolicyKind::FxHyTm
            | PolicyKind::StAdHyTm
            | PolicyKind::DyAdHyTm => &[PathKind::Hardware, PathKind::Software],
        }
    }

    /// Whether the retry spec affects this policy at all.
    pub fn uses_retries(self) -> bool {
        !matches!(
            self,
            PolicyKind::CoarseLock | PolicyKind::StmOnly | PolicyKind::Hle
        )
    }

    pub fn default_retries(self) -> RetrySpec {
        match self {
            PolicyKind::RndHyTm => RetrySpec::UniformRange {
                lo: DEFAULT_RND_RANGE.0,
                hi: DEFAULT_RND_RANGE.1,
            },
            PolicyKind::StAdHyTm => RetrySpec::Tuned(DEFAULT_RETRIES),
            _ => RetrySpec::Fixed(DEFAULT_RETRIES),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "lock" | "coarse" | "coarse-lock" => PolicyKind::CoarseLock,
            "stm" | "stm-only" => PolicyKind::StmOnly,
            "htm-alock" | "htmalock" | "htm-atomic" => PolicyKind::HtmAtomicLock,
            "htm-spin" | "htmslock" | "htm-spinlock" => PolicyKind::HtmSpinLock,
            "hle" => PolicyKind::Hle,
            "rnd" | "rndhytm" => PolicyKind::RndHyTm,
            "fx" | "fxhytm" => PolicyKind::FxHyTm,
            "stad" | "stadhytm" => PolicyKind::StAdHyTm,
            "dyad" | "dyadhytm" => PolicyKind::DyAdHyTm,
            _ => return Err(PolicyError::UnknownPolicy(s.to_string())),
        };
        Ok(kind)
    }
}

/// How many hardware retries a critical section gets.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RetrySpec {
    Fixed(u32),
    /// A fresh uniform draw from `lo..=hi` per critical section.
    UniformRange {
        lo: u32,
        hi: u32,
    },
    /// A fixed budget chosen by [`tune_stad`].
    Tuned(u32),
}

impl RetrySpec {
    pub fn range(lo: u32, hi: u32) -> Result<Self, PolicyError> {
        let spec = RetrySpec::UniformRange { lo, hi };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses `LO:HI`.
    pub fn parse_range(s: &str) -> Result<Self, PolicyError> {
        let (lo, hi) = parse_range_pair(s)?;
        RetrySpec::range(lo, hi)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            RetrySpec::UniformRange { lo, hi } if lo == 0 || lo > hi => {
                Err(PolicyError::BadRange { lo, hi })
            }
            _ => Ok(()),
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u32 {
        match *self {
            RetrySpec::Fixed(n) | RetrySpec::Tuned(n) => n,
            RetrySpec::UniformRange { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

pub(crate) fn parse_range_pair(s: &str) -> Result<(u32, u32), PolicyError> {
    let bad = || PolicyError::MalformedRange(s.to_string());
    let (lo, hi) = s.trim().split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(PolicyError::BadRange { lo, hi });
    }
    Ok((lo, hi))
}

impl fmt::Display for RetrySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrySpec::Fixed(n) => write!(f, "fixed:{n}"),
            RetrySpec::UniformRange { lo, hi } => write!(f, "range:{lo}:{hi}"),
            RetrySpec::Tuned(n) => write!(f, "tuned:{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub retries: RetrySpec,
    pub htm: HtmConfig,
    pub rng_seed: u64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            retries: kind.default_retries(),
            htm: HtmConfig::default(),
            rng_seed: 0,
        }
    }

    pub fn with_retries(mut self, retries: RetrySpec) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_htm(mut self, htm: HtmConfig) -> Self {
        self.htm = htm;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.htm.validate()?;
        self.retries.validate()?;
        let ok = match (self.kind, self.retries) {
            (k, _) if !k.uses_retries() => true,
            (PolicyKind::RndHyTm, RetrySpec::UniformRange { .. }) => true,
            (PolicyKind::StAdHyTm, RetrySpec::Tuned(_)) => true,
            (
                PolicyKind::FxHyTm
                | PolicyKind::DyAdHyTm
                | PolicyKind::HtmAtomicLock
                | PolicyKind::HtmSpinLock,
                RetrySpec::Fixed(_),
            ) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(PolicyError::RetryMismatch {
                kind: self.kind,
                spec: self.retries,
            })
        }
    }

    /// Retry spec as reported in result rows.
    pub fn retry_label(&self) -> String {
        if self.kind.uses_retries() {
            self.retries.to_string()
        } else {
            "none".to_string()
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum PathKind {
    Hardware,
    Software,
    Lock,
}

/// Which mechanism completed a critical section.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct CommitPath {
    pub path: PathKind,
    /// Hardware attempts beyond the first.
    pub retries_used: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AttemptKind {
    Hardware,
    Software,
}

/// One transactional attempt; `abort` is `None` for the committing one.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Attempt {
    pub kind: AttemptKind,
    pub abort: Option<AbortCause>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionTrace {
    pub policy: PolicyKind,
    /// The retry budget drawn at entry, for policies that have one.
    pub tries_drawn: Option<u32>,
    pub attempts: Vec<Attempt>,
    pub path: PathKind,
}

impl SectionTrace {
    pub fn hw_attempts(&self) -> usize {
        self.attempts
            .iter()
            .filter(|a| a.kind == AttemptKind::Hardware)
            .count()
    }
}

/// Flavor of the lock behind HTM-with-lock.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LockFlavor {
    /// Hardware attempts check the lock only through their subscription.
    AtomicCounter,
    /// Hardware attempts spin until the lock looks free before beginning.
    Spin,
}

/// Shared state every policy runs against: the heap, whose line 0 holds the
/// global lock word, and the mutex behind the coarse-lock baseline.
pub struct TmSystem {
    heap: TmHeap,
    coarse: Mutex<()>,
}

impl TmSystem {
    pub fn new(heap: TmHeap) -> Self {
        TmSystem {
            heap,
            coarse: Mutex::new(()),
        }
    }

    /// A heap with `data_words` usable words starting at [`Self::data_base`].
    pub fn with_data_words(
        data_words: usize,
        words_per_line: usize,
    ) -> Result<Self, crate::MemoryError> {
        Ok(TmSystem::new(TmHeap::new(
            data_words + words_per_line,
            words_per_line,
        )?))
    }

    pub fn heap(&self) -> &TmHeap {
        &self.heap
    }

    /// First address outside the reserved lock line.
    pub fn data_base(&self) -> usize {
        self.heap.words_per_line()
    }

    pub fn global_lock(&self) -> GlobalLock<'_> {
        GlobalLock::global(&self.heap)
    }
}

struct Recorder {
    attempts: Option<Vec<Attempt>>,
}

impl Recorder {
    fn new(ctx: &ThreadCtx) -> Self {
        Recorder {
            attempts: ctx.trace.as_ref().map(|_| Vec::new()),
        }
    }

    fn push(&mut self, kind: AttemptKind, abort: Option<AbortCause>) {
        if let Some(a) = &mut self.attempts {
            a.push(Attempt { kind, abort });
        }
    }

    fn finish(
        self,
        ctx: &mut ThreadCtx,
        policy: PolicyKind,
        tries_drawn: Option<u32>,
        path: PathKind,
    ) {
        ctx.stats.sections += 1;
        if let (Some(trace), Some(attempts)) = (&mut ctx.trace, self.attempts) {
            trace.push(SectionTrace {
                policy,
                tries_drawn,
                attempts,
                path,
            });
        }
    }
}

fn hw_attempt<R>(
    sys: &TmSystem,
    htm: &HtmConfig,
    ctx: &mut ThreadCtx,
    body: &mut impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> TxResult<R> {
    let mut tx = HwTx::begin(&sys.heap, htm, &mut ctx.stats, &mut ctx.htm_rng);
    match tx
        .subscribe_lock(GLOBAL_LOCK_ADDR)
        .and_then(|_| body(&mut tx))
    {
        Ok(v) => tx.commit().map(|_| v),
        Err(c) => Err(tx.abort(c)),
    }
}

fn stm_episode<R>(
    sys: &TmSystem,
    ctx: &mut ThreadCtx,
    rec: &mut Recorder,
    body: &mut impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> R {
    ctx.stats.fallback_episodes += 1;
    let lock = sys.global_lock();
    lock.enter();
    let value = loop {
        let mut tx = SwTx::begin(&lock, &mut ctx.stats).expect("episode holds the global lock");
        let res = match body(&mut tx) {
            Ok(v) => tx.commit().map(|_| v),
            Err(c) => {
                tx.abort();
                Err(c)
            }
        };
        match res {
            Ok(v) => {
                rec.push(AttemptKind::Software, None);
                break v;
            }
            Err(c) => {
                rec.push(AttemptKind::Software, Some(c));
                std::thread::yield_now();
            }
        }
    };
    lock.exit().expect("episode entered the global lock");
    value
}

fn run_direct<R>(sys: &TmSystem, body: &mut impl FnMut(&mut dyn TxAccess) -> TxResult<R>) -> R {
    match body(&mut DirectAccess::new(&sys.heap)) {
        Ok(v) => v,
        Err(c) => panic!("critical section aborted ({c}) on a non-speculative path"),
    }
}

fn acquire_lock_word(heap: &TmHeap) {
    loop {
        if heap.peek(GLOBAL_LOCK_ADDR) == Ok(0)
            && heap
                .update(GLOBAL_LOCK_ADDR, |v| (v == 0).then_some(1))
                .expect("lock word in bounds")
                .is_some()
        {
            return;
        }
        std::thread::yield_now();
    }
}

fn release_lock_word(heap: &TmHeap, flavor: LockFlavor) {
    let f = match flavor {
        LockFlavor::AtomicCounter => |v: u64| v.checked_sub(1),
        LockFlavor::Spin => |v: u64| (v != 0).then_some(0),
    };
    heap.update(GLOBAL_LOCK_ADDR, f)
        .expect("lock word in bounds")
        .expect("lock released while free");
}

/// Runs `body` under whichever policy `cfg` names.
pub fn run_section<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    match cfg.kind {
        PolicyKind::CoarseLock => run_coarse_lock(sys, ctx, body),
        PolicyKind::StmOnly => run_stm_only(sys, ctx, body),
        PolicyKind::HtmAtomicLock => run_htm_lock(sys, cfg, ctx, LockFlavor::AtomicCounter, body),
        PolicyKind::HtmSpinLock => run_htm_lock(sys, cfg, ctx, LockFlavor::Spin, body),
        PolicyKind::Hle => run_hle(sys, cfg, ctx, body),
        PolicyKind::RndHyTm | PolicyKind::FxHyTm | PolicyKind::StAdHyTm => {
            run_hytm(sys, cfg, ctx, body)
        }
        PolicyKind::DyAdHyTm => run_dyad(sys, cfg, ctx, body),
    }
}

pub fn run_coarse_lock<R>(
    sys: &TmSystem,
    ctx: &mut ThreadCtx,
    mut body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let rec = Recorder::new(ctx);
    let value = {
        let _guard = sys.coarse.lock();
        run_direct(sys, &mut body)
    };
    ctx.stats.lock_commits += 1;
    rec.finish(ctx, PolicyKind::CoarseLock, None, PathKind::Lock);
    (
        CommitPath {
            path: PathKind::Lock,
            retries_used: 0,
        },
        value,
    )
}

pub fn run_stm_only<R>(
    sys: &TmSystem,
    ctx: &mut ThreadCtx,
    mut body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let mut rec = Recorder::new(ctx);
    let value = stm_episode(sys, ctx, &mut rec, &mut body);
    rec.finish(ctx, PolicyKind::StmOnly, None, PathKind::Software);
    (
        CommitPath {
            path: PathKind::Software,
            retries_used: 0,
        },
        value,
    )
}

pub fn run_htm_lock<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    flavor: LockFlavor,
    mut body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let kind = match flavor {
        LockFlavor::AtomicCounter => PolicyKind::HtmAtomicLock,
        LockFlavor::Spin => PolicyKind::HtmSpinLock,
    };
    let mut rec = Recorder::new(ctx);
    let drawn = cfg.retries.draw(&mut ctx.policy_rng);
    let mut tries = i64::from(drawn);
    let mut attempts = 0u32;
    ctx.stats.hw_first_attempts += 1;
    loop {
        if flavor == LockFlavor::Spin {
            while sys.heap.peek(GLOBAL_LOCK_ADDR) != Ok(0) {
                std::thread::yield_now();
            }
        }
        if attempts > 0 {
            ctx.stats.htm_retries += 1;
        }
        attempts += 1;
        match hw_attempt(sys, &cfg.htm, ctx, &mut body) {
            Ok(v) => {
                rec.push(AttemptKind::Hardware, None);
                rec.finish(ctx, kind, Some(drawn), PathKind::Hardware);
                return (
                    CommitPath {
                        path: PathKind::Hardware,
                        retries_used: attempts - 1,
                    },
                    v,
                );
            }
            Err(c) => {
                rec.push(AttemptKind::Hardware, Some(c));
                tries -= 1;
                if tries < 0 {
                    break;
                }
                std::thread::yield_now();
            }
        }
    }
    acquire_lock_word(&sys.heap);
    let value = run_direct(sys, &mut body);
    release_lock_word(&sys.heap, flavor);
    ctx.stats.lock_commits += 1;
    rec.finish(ctx, kind, Some(drawn), PathKind::Lock);
    (
        CommitPath {
            path: PathKind::Lock,
            retries_used: attempts - 1,
        },
        value,
    )
}

pub fn run_hle<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    mut body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let mut rec = Recorder::new(ctx);
    ctx.stats.hw_first_attempts += 1;
    match hw_attempt(sys, &cfg.htm, ctx, &mut body) {
        Ok(v) => {
            rec.push(AttemptKind::Hardware, None);
            rec.finish(ctx, PolicyKind::Hle, None, PathKind::Hardware);
            (
                CommitPath {
                    path: PathKind::Hardware,
                    retries_used: 0,
                },
                v,
            )
        }
        Err(c) => {
            rec.push(AttemptKind::Hardware, Some(c));
            // Taking the lock for real writes the lock line, which dooms
            // every concurrent speculative execution.
            acquire_lock_word(&sys.heap);
            let value = run_direct(sys, &mut body);
            release_lock_word(&sys.heap, LockFlavor::Spin);
            ctx.stats.lock_commits += 1;
            rec.finish(ctx, PolicyKind::Hle, None, PathKind::Lock);
            (
                CommitPath {
                    path: PathKind::Lock,
                    retries_used: 0,
                },
                value,
            )
        }
    }
}

fn hybrid<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    kind: PolicyKind,
    capacity_rule: bool,
    mut body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let mut rec = Recorder::new(ctx);
    let drawn = cfg.retries.draw(&mut ctx.policy_rng);
    let mut tries = i64::from(drawn);
    let mut attempts = 0u32;
    ctx.stats.hw_first_attempts += 1;
    loop {
        if attempts > 0 {
            ctx.stats.htm_retries += 1;
        }
        attempts += 1;
        match hw_attempt(sys, &cfg.htm, ctx, &mut body) {
            Ok(v) => {
                rec.push(AttemptKind::Hardware, None);
                rec.finish(ctx, kind, Some(drawn), PathKind::Hardware);
                return (
                    CommitPath {
                        path: PathKind::Hardware,
                        retries_used: attempts - 1,
                    },
                    v,
                );
            }
            Err(c) => {
                rec.push(AttemptKind::Hardware, Some(c));
                tries = if capacity_rule && c == AbortCause::Capacity {
                    // One last hardware try, unless that was it already.
                    (tries - 1).min(0)
                } else {
                    tries - 1
                };
                if tries < 0 {
                    break;
                }
                std::thread::yield_now();
            }
        }
    }
    let value = stm_episode(sys, ctx, &mut rec, &mut body);
    rec.finish(ctx, kind, Some(drawn), PathKind::Software);
    (
        CommitPath {
            path: PathKind::Software,
            retries_used: attempts - 1,
        },
        value,
    )
}

/// RNDHyTM, FxHyTM and StAdHyTM: they differ only in `cfg.retries`.
pub fn run_hytm<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    let kind = match cfg.kind {
        k @ (PolicyKind::RndHyTm | PolicyKind::FxHyTm | PolicyKind::StAdHyTm) => k,
        _ => match cfg.retries {
            RetrySpec::UniformRange { .. } => PolicyKind::RndHyTm,
            RetrySpec::Fixed(_) => PolicyKind::FxHyTm,
            RetrySpec::Tuned(_) => PolicyKind::StAdHyTm,
        },
    };
    hybrid(sys, cfg, ctx, kind, false, body)
}

/// DyAdHyTM: a capacity abort forces the remaining budget to zero.
pub fn run_dyad<R>(
    sys: &TmSystem,
    cfg: &PolicyConfig,
    ctx: &mut ThreadCtx,
    body: impl FnMut(&mut dyn TxAccess) -> TxResult<R>,
) -> (CommitPath, R) {
    hybrid(sys, cfg, ctx, PolicyKind::DyAdHyTm, true, body)
}
