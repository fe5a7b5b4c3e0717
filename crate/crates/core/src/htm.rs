//! Best-effort hardware transactional memory, emulated in software.
//!
//! Read and write sets are tracked at cacheline granularity and bounded by
//! [`HtmConfig`] capacities. Conflicts are detected eagerly through the
//! heap's ownership records:
//!
//! * a read of a line another transaction owns aborts the reader,
//! * a write claim on a line another transaction owns aborts the claimer,
//! * a successful write claim dooms every other hardware reader of the line.
//!
//! Writes are buffered and only published by [`HwTx::commit`]. A doomed
//! transaction notices at its next operation or at commit.

use std::sync::atomic::{AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;

use crate::access::{TxAccess, TxResult};
use crate::memory::{Addr, LineId, TmHeap, TxId, Writer};
use crate::stats::ThreadStats;

/// Why a hardware transaction aborted.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AbortCause {
    Conflict = 0,
    Capacity = 1,
    LockSubscription = 2,
    Explicit = 3,
    Spurious = 4,
}

impl AbortCause {
    pub const ALL: [AbortCause; 5] = [
        AbortCause::Conflict,
        AbortCause::Capacity,
        AbortCause::LockSubscription,
        AbortCause::Explicit,
        AbortCause::Spurious,
    ];

    fn from_code(c: u8) -> AbortCause {
        Self::ALL[c as usize]
    }
}

impl std::fmt::Display for AbortCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AbortCause::Conflict => "conflict",
            AbortCause::Capacity => "capacity",
            AbortCause::LockSubscription => "lock-subscription",
            AbortCause::Explicit => "explicit",
            AbortCause::Spurious => "spurious",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HtmConfigError {
    #[error("read capacity must be at least one line")]
    ZeroReadCapacity,
    #[error("write capacity must be at least one line")]
    ZeroWriteCapacity,
    #[error("spurious abort probability {0} outside [0, 1]")]
    Probability(f64),
}

/// Capacity limits and abort injection for the emulator.
#[derive(Clone, Debug, PartialEq)]
pub struct HtmConfig {
    /// Maximum distinct lines in the read set (written lines included).
    pub read_capacity: usize,
    /// Maximum distinct written lines.
    pub write_capacity: usize,
    pub spurious_abort_probability: f64,
    /// Seeds the per-thread streams that decide spurious aborts.
    pub rng_seed: u64,
}

impl Default for HtmConfig {
    fn default() -> Self {
        HtmConfig {
            read_capacity: 512,
            write_capacity: 64,
            spurious_abort_probability: 0.0,
            rng_seed: 0,
        }
    }
}

impl HtmConfig {
    pub fn with_caps(read_capacity: usize, write_capacity: usize) -> Self {
        HtmConfig {
            read_capacity,
            write_capacity,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), HtmConfigError> {
        if self.read_capacity == 0 {
            return Err(HtmConfigError::ZeroReadCapacity);
        }
        if self.write_capacity == 0 {
            return Err(HtmConfigError::ZeroWriteCapacity);
        }
        let p = self.spurious_abort_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(HtmConfigError::Probability(p));
        }
        Ok(())
    }
}

const ACTIVE: u8 = 0;
const COMMITTING: u8 = 1;
const DONE: u8 = 2;
const DOOMED: u8 = 8;
const NO_LINE: usize = usize::MAX;

/// The part of a hardware transaction other threads can see: its id and a
/// status word they can flip to doomed.
pub(crate) struct HwCell {
    id: TxId,
    state: AtomicU8,
    lock_line: AtomicUsize,
}

impl HwCell {
    fn new(id: TxId) -> Self {
        HwCell {
            id,
            state: AtomicU8::new(ACTIVE),
            lock_line: AtomicUsize::new(NO_LINE),
        }
    }

    pub fn id(&self) -> TxId {
        self.id
    }

    /// Line holding the lock word this transaction subscribed to, if any.
    pub fn lock_line(&self) -> Option<LineId> {
        match self.lock_line.load(Ordering::Acquire) {
            NO_LINE => None,
            l => Some(l),
        }
    }

    /// Marks an active transaction doomed. Has no effect once the
    /// transaction is committing, finished, or already doomed.
    pub fn doom(&self, cause: AbortCause) -> bool {
        self.state
            .compare_exchange(
                ACTIVE,
                DOOMED + cause as u8,
                Ordering::AcqRel,
                Ordering::Acquire,
            )
            .is_ok()
    }

    fn doomed(&self) -> Option<AbortCause> {
        let s = self.state.load(Ordering::Acquire);
        (s >= DOOMED).then(|| AbortCause::from_code(s - DOOMED))
    }

    fn try_begin_commit(&self) -> Result<(), AbortCause> {
        match self
            .state
            .compare_exchange(ACTIVE, COMMITTING, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => Ok(()),
            Err(s) if s >= DOOMED => Err(AbortCause::from_code(s - DOOMED)),
            Err(s) => unreachable!("commit from state {s}"),
        }
    }

    fn finish(&self) {
        self.state.store(DONE, Ordering::Release);
    }
}

/// Observable status of a hardware transaction.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum HwStatus {
    Active,
    Doomed(AbortCause),
    Committed,
    Aborted(AbortCause),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Outcome {
    Running,
    Committed,
    Aborted(AbortCause),
}

/// An emulated hardware transaction.
pub struct HwTx<'a> {
    heap: &'a TmHeap,
    cfg: &'a HtmConfig,
    stats: &'a mut ThreadStats,
    cell: Arc<HwCell>,
    read_lines: SmallVec<[LineId; 8]>,
    write_lines: SmallVec<[LineId; 4]>,
    write_buf: SmallVec<[(Addr, u64); 8]>,
    outcome: Outcome,
}

impl<'a> HwTx<'a> {
    /// Starts a transaction. Begin itself never fails; when a spurious
    /// abort is drawn the transaction starts doomed and fails at its first
    /// operation or at commit.
    pub fn begin(
        heap: &'a TmHeap,
        cfg: &'a HtmConfig,
        stats: &'a mut ThreadStats,
        rng: &mut impl Rng,
    ) -> HwTx<'a> {
        stats.htm_begins += 1;
        let cell = Arc::new(HwCell::new(heap.next_tx_id()));
        let p = cfg.spurious_abort_probability;
        if p > 0.0 && rng.random_bool(p) {
            cell.doom(AbortCause::Spurious);
        }
        HwTx {
            heap,
            cfg,
            stats,
            cell,
            read_lines: SmallVec::new(),
            write_lines: SmallVec::new(),
            write_buf: SmallVec::new(),
            outcome: Outcome::Running,
        }
    }

    pub fn id(&self) -> TxId {
        self.cell.id
    }

    pub fn status(&self) -> HwStatus {
        match self.outcome {
            Outcome::Committed => HwStatus::Committed,
            Outcome::Aborted(c) => HwStatus::Aborted(c),
            Outcome::Running => match self.cell.doomed() {
                Some(c) => HwStatus::Doomed(c),
                None => HwStatus::Active,
            },
        }
    }

    pub fn abort_cause(&self) -> Option<AbortCause> {
        match self.outcome {
            Outcome::Aborted(c) => Some(c),
            _ => None,
        }
    }

    pub fn read_set_len(&self) -> usize {
        self.read_lines.len()
    }

    pub fn write_set_len(&self) -> usize {
        self.write_lines.len()
    }

    /// Fails with the recorded or pending abort cause, rolling back first
    /// if a doom is pending.
    fn ensure_live(&mut self) -> TxResult<()> {
        match self.outcome {
            Outcome::Aborted(c) => Err(c),
            Outcome::Committed => panic!("operation on a committed hardware transaction"),
            Outcome::Running => match self.cell.doomed() {
                Some(c) => Err(self.rollback(c)),
                None => Ok(()),
            },
        }
    }

    fn check_addr(&self, addr: Addr) -> LineId {
        assert!(
            addr < self.heap.len(),
            "transactional access to address {addr} outside heap of {} words",
            self.heap.len()
        );
        self.heap.line_unchecked(addr)
    }

    fn buffered(&self, addr: Addr) -> Option<u64> {
        self.write_buf
            .iter()
            .rev()
            .find(|(a, _)| *a == addr)
            .map(|(_, v)| *v)
    }

    pub fn read(&mut self, addr: Addr) -> TxResult<u64> {
        self.ensure_live()?;
        let line = self.check_addr(addr);
        if let Some(v) = self.buffered(addr) {
            return Ok(v);
        }
        let new_line = !self.read_lines.contains(&line);
        if new_line && self.read_lines.len() >= self.cfg.read_capacity {
            return Err(self.rollback(AbortCause::Capacity));
        }
        let value = {
            let mut st = self.heap.orec(line);
            if st.owned_by_other(self.cell.id) {
                drop(st);
                return Err(self.rollback(AbortCause::Conflict));
            }
            if new_line {
                st.readers.push(self.cell.clone());
            }
            self.heap.word(addr).load(Ordering::Acquire)
        };
        if new_line {
            self.read_lines.push(line);
        }
        // A writer that published anything this read could observe doomed
        // us before publishing.
        if let Some(c) = self.cell.doomed() {
            return Err(self.rollback(c));
        }
        Ok(value)
    }

    pub fn write(&mut self, addr: Addr, value: u64) -> TxResult<()> {
        self.ensure_live()?;
        let line = self.check_addr(addr);
        if !self.write_lines.contains(&line) {
            if self.write_lines.len() >= self.cfg.write_capacity {
                return Err(self.rollback(AbortCause::Capacity));
            }
            let new_read = !self.read_lines.contains(&line);
            if new_read && self.read_lines.len() >= self.cfg.read_capacity {
                return Err(self.rollback(AbortCause::Capacity));
            }
            {
                let mut st = self.heap.orec(line);
                if st.owned_by_other(self.cell.id) {
                    drop(st);
                    return Err(self.rollback(AbortCause::Conflict));
                }
                st.writer = Some(Writer {
                    id: self.cell.id,
                    hw: Some(self.cell.clone()),
                });
                st.doom_readers(line, Some(self.cell.id));
                if new_read {
                    st.readers.push(self.cell.clone());
                }
            }
            self.write_lines.push(line);
            if new_read {
                self.read_lines.push(line);
            }
        }
        match self.write_buf.iter_mut().find(|(a, _)| *a == addr) {
            Some(slot) => slot.1 = value,
            None => self.write_buf.push((addr, value)),
        }
        Ok(())
    }

    /// Reads the lock word into the read set and aborts if it is held.
    /// Any later non-speculative write to the lock line dooms this
    /// transaction with [`AbortCause::LockSubscription`].
    pub fn subscribe_lock(&mut self, lock_addr: Addr) -> TxResult<()> {
        self.ensure_live()?;
        let line = self.check_addr(lock_addr);
        self.cell.lock_line.store(line, Ordering::Release);
        if self.read(lock_addr)? != 0 {
            return Err(self.rollback(AbortCause::LockSubscription));
        }
        Ok(())
    }

    /// Publishes the write buffer. A doomed transaction aborts with its
    /// doom cause instead.
    pub fn commit(mut self) -> TxResult<()> {
        match self.outcome {
            Outcome::Aborted(c) => return Err(c),
            Outcome::Committed => return Ok(()),
            Outcome::Running => {}
        }
        if let Err(c) = self.cell.try_begin_commit() {
            return Err(self.rollback(c));
        }
        let id = self.cell.id;
        let stamp = if self.write_buf.is_empty() {
            0
        } else {
            self.heap.tick_clock()
        };
        for &line in &self.write_lines {
            let mut st = self.heap.orec(line);
            for &(addr, v) in &self.write_buf {
                if self.heap.line_unchecked(addr) == line {
                    self.heap.word(addr).store(v, Ordering::Release);
                }
            }
            st.version += 1;
            st.stamp = stamp;
            st.release_writer(id);
            st.remove_reader(id);
        }
        for &line in &self.read_lines {
            if !self.write_lines.contains(&line) {
                self.heap.orec(line).remove_reader(id);
            }
        }
        self.cell.finish();
        self.outcome = Outcome::Committed;
        self.stats.htm_commits += 1;
        Ok(())
    }

    /// Aborts the transaction. A doomed transaction aborts with its doom
    /// cause, and one that already aborted keeps its original cause.
    pub fn abort(mut self, cause: AbortCause) -> AbortCause {
        match self.outcome {
            Outcome::Aborted(c) => c,
            Outcome::Committed => panic!("abort of a committed hardware transaction"),
            Outcome::Running => {
                let cause = self.cell.doomed().unwrap_or(cause);
                self.rollback(cause)
            }
        }
    }

    fn rollback(&mut self, cause: AbortCause) -> AbortCause {
        debug_assert_eq!(self.outcome, Outcome::Running);
        let id = self.cell.id;
        for &line in &self.read_lines {
            let mut st = self.heap.orec(line);
            st.release_writer(id);
            st.remove_reader(id);
        }
        self.read_lines.clear();
        self.write_lines.clear();
        self.write_buf.clear();
        self.cell.finish();
        self.outcome = Outcome::Aborted(cause);
        self.stats.record_abort(cause);
        cause
    }
}

impl Drop for HwTx<'_> {
    fn drop(&mut self) {
        if self.outcome == Outcome::Running {
            self.rollback(AbortCause::Explicit);
        }
    }
}

impl TxAccess for HwTx<'_> {
    fn read(&mut self, addr: Addr) -> TxResult<u64> {
        HwTx::read(self, addr)
    }

    fn write(&mut self, addr: Addr, value: u64) -> TxResult<()> {
        HwTx::write(self, addr, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn begin_is_active_and_empty() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let (mut s1, mut s2) = (ThreadStats::default(), ThreadStats::default());
        let mut r = rng();
        let a = HwTx::begin(&heap, &cfg, &mut s1, &mut r);
        let b = HwTx::begin(&heap, &cfg, &mut s2, &mut r);
        assert_eq!(a.status(), HwStatus::Active);
        assert_eq!(a.read_set_len(), 0);
        assert_ne!(a.id(), b.id());
        drop((a, b));
        assert_eq!(s1.htm_begins, 1);
    }

    #[test]
    fn forced_spurious_abort() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig {
            spurious_abort_probability: 1.0,
            ..Default::default()
        };
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        assert_eq!(tx.read(3), Err(AbortCause::Spurious));
        assert_eq!(tx.write(3, 1), Err(AbortCause::Spurious));
        assert_eq!(tx.commit(), Err(AbortCause::Spurious));
        assert_eq!(s.htm_aborts_spurious, 1);
    }

    #[test]
    fn read_your_write_is_private() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.write(9, 5).unwrap();
        assert_eq!(tx.read(9), Ok(5));
        assert_eq!(heap.raw_read(9), Ok(0));
        assert_eq!(tx.read_set_len(), 1);
        tx.commit().unwrap();
        assert_eq!(heap.raw_read(9), Ok(5));
        assert_eq!(heap.record(1).unwrap().version, 1);
        assert!(heap.is_quiescent());
    }

    #[test]
    fn empty_commit_leaves_heap_alone() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let mut s = ThreadStats::default();
        let tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.commit().unwrap();
        assert_eq!(heap.clock(), 0);
        assert_eq!(s.htm_commits, 1);
    }

    #[test]
    fn abort_rolls_back() {
        let heap = TmHeap::new(64, 8).unwrap();
        heap.raw_write(4, 11).unwrap();
        let cfg = HtmConfig::default();
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.write(4, 5).unwrap();
        assert_eq!(tx.abort(AbortCause::Explicit), AbortCause::Explicit);
        assert_eq!(heap.raw_read(4), Ok(11));
        assert_eq!(heap.record(0).unwrap().version, 0);
        assert!(heap.is_quiescent());
        assert_eq!(s.htm_aborts_explicit, 1);
    }

    #[test]
    fn read_capacity_is_exact() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::with_caps(2, 64);
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.read(0).unwrap();
        tx.read(8).unwrap();
        tx.read(9).unwrap();
        assert_eq!(tx.read(16), Err(AbortCause::Capacity));
        assert_eq!(tx.status(), HwStatus::Aborted(AbortCause::Capacity));
    }

    #[test]
    fn write_capacity_is_exact() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::with_caps(512, 1);
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.write(0, 1).unwrap();
        tx.write(7, 1).unwrap();
        assert_eq!(tx.write(8, 1), Err(AbortCause::Capacity));
        assert!(heap.is_quiescent());
    }

    #[test]
    fn reader_of_owned_line_loses() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let (mut s1, mut s2) = (ThreadStats::default(), ThreadStats::default());
        let mut r = rng();
        let mut a = HwTx::begin(&heap, &cfg, &mut s1, &mut r);
        let mut b = HwTx::begin(&heap, &cfg, &mut s2, &mut r);
        a.write(8, 1).unwrap();
        assert_eq!(b.read(9), Err(AbortCause::Conflict));
        a.commit().unwrap();
    }

    #[test]
    fn writer_dooms_readers() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let (mut s1, mut s2) = (ThreadStats::default(), ThreadStats::default());
        let mut r = rng();
        let mut a = HwTx::begin(&heap, &cfg, &mut s1, &mut r);
        let mut b = HwTx::begin(&heap, &cfg, &mut s2, &mut r);
        b.read(8).unwrap();
        a.write(8, 1).unwrap();
        assert_eq!(b.status(), HwStatus::Doomed(AbortCause::Conflict));
        // The doom cause wins over the caller's.
        assert_eq!(b.abort(AbortCause::Explicit), AbortCause::Conflict);
        a.commit().unwrap();
        assert_eq!(s2.htm_aborts_conflict, 1);
    }

    #[test]
    fn lock_subscription() {
        let heap = TmHeap::new(64, 8).unwrap();
        let cfg = HtmConfig::default();
        let mut s = ThreadStats::default();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        tx.subscribe_lock(0).unwrap();
        assert_eq!(tx.status(), HwStatus::Active);
        heap.update(0, |v| Some(v + 1)).unwrap();
        assert_eq!(tx.status(), HwStatus::Doomed(AbortCause::LockSubscription));
        assert_eq!(tx.commit(), Err(AbortCause::LockSubscription));

        heap.raw_write(0, 2).unwrap();
        let mut tx = HwTx::begin(&heap, &cfg, &mut s, &mut rng());
        assert_eq!(tx.subscribe_lock(0), Err(AbortCause::LockSubscription));
        drop(tx);
        assert_eq!(s.htm_aborts_lock_subscription, 2);
        assert!(heap.is_quiescent());
    }

    #[test]
    fn config_validation() {
        assert!(HtmConfig::default().validate().is_ok());
        assert_eq!(
            HtmConfig::with_caps(0, 1).validate(),
            Err(HtmConfigError::ZeroReadCapacity)
        );
        assert_eq!(
            HtmConfig::with_caps(1, 0).validate(),
            Err(HtmConfigError::ZeroWriteCapacity)
        );
        let cfg = HtmConfig {
            spurious_abort_probability: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
