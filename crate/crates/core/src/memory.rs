//! Shared word-addressed heap with per-cacheline ownership records.
//!
//! Every transactional system in the crate (the emulated HTM, the STM and
//! the non-speculative lock paths) goes through the records kept here, so
//! conflicts between them are detected in one place. An ownership record is
//! guarded by its own small mutex; no code path ever holds two of them at
//! once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard};
use smallvec::SmallVec;

use crate::htm::{AbortCause, HwCell};

/// Word address inside a [`TmHeap`].
pub type Addr = usize;

/// Cacheline index inside a [`TmHeap`].
pub type LineId = usize;

/// 64-byte lines of 8-byte words.
pub const DEFAULT_WORDS_PER_LINE: usize = 8;

/// Identifier shared by hardware and software transactions.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("heap must hold at least one word")]
    EmptyHeap,
    #[error("words per line must be at least 1")]
    ZeroLineWidth,
    #[error("address {addr} out of bounds for heap of {len} words")]
    OutOfBounds { addr: Addr, len: usize },
    #[error("line {line} out of bounds for heap of {lines} lines")]
    LineOutOfBounds { line: LineId, lines: usize },
}

/// Exclusive owner of a line.
#[derive(Clone)]
pub(crate) struct Writer {
    pub id: TxId,
    /// Present when the owner is a hardware transaction; lets non-speculative
    /// writers doom it instead of waiting forever on a stalled speculation.
    pub hw: Option<Arc<HwCell>>,
}

pub(crate) struct OrecState {
    pub version: u64,
    /// Global-clock value of the last commit that wrote this line.
    pub stamp: u64,
    pub writer: Option<Writer>,
    pub readers: SmallVec<[Arc<HwCell>; 4]>,
}

impl OrecState {
    fn new() -> Self {
        OrecState {
            version: 0,
            stamp: 0,
            writer: None,
            readers: SmallVec::new(),
        }
    }

    pub fn owned_by_other(&self, id: TxId) -> bool {
        matches!(&self.writer, Some(w) if w.id != id)
    }

    pub fn remove_reader(&mut self, id: TxId) {
        if let Some(pos) = self.readers.iter().position(|r| r.id() == id) {
            self.readers.swap_remove(pos);
        }
    }

    pub fn release_writer(&mut self, id: TxId) {
        if matches!(&self.writer, Some(w) if w.id == id) {
            self.writer = None;
        }
    }

    /// Dooms every subscribed hardware reader except `except`.
    pub fn doom_readers(&self, line: LineId, except: Option<TxId>) {
        for r in &self.readers {
            if Some(r.id()) != except {
                let cause = if r.lock_line() == Some(line) {
                    AbortCause::LockSubscription
                } else {
                    AbortCause::Conflict
                };
                r.doom(cause);
            }
        }
    }
}

/// Point-in-time copy of a line's ownership record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnershipRecord {
    pub version: u64,
    pub writer: Option<TxId>,
    pub readers: Vec<TxId>,
}

/// The shared heap all transactions operate on.
pub struct TmHeap {
    words: Box<[AtomicU64]>,
    words_per_line: usize,
    orecs: Box<[Mutex<OrecState>]>,
    clock: AtomicU64,
    next_tx: AtomicU64,
}

impl std::fmt::Debug for TmHeap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TmHeap")
            .field("len", &self.len())
            .field("words_per_line", &self.words_per_line)
            .field("lines", &self.line_count())
            .finish()
    }
}

impl TmHeap {
    pub fn new(n_words: usize, words_per_line: usize) -> Result<Self, MemoryError> {
        if n_words == 0 {
            return Err(MemoryError::EmptyHeap);
        }
        if words_per_line == 0 {
            return Err(MemoryError::ZeroLineWidth);
        }
        let lines = n_words.div_ceil(words_per_line);
        Ok(TmHeap {
            words: (0..n_words).map(|_| AtomicU64::new(0)).collect(),
            words_per_line,
            orecs: (0..lines).map(|_| Mutex::new(OrecState::new())).collect(),
            clock: AtomicU64::new(0),
            next_tx: AtomicU64::new(1),
        })
    }

    /// Bytes a heap of this shape occupies, ownership records included.
    pub fn footprint_bytes(n_words: usize, words_per_line: usize) -> usize {
        let lines = n_words.div_ceil(words_per_line.max(1));
        n_words * std::mem::size_of::<AtomicU64>() + lines * std::mem::size_of::<Mutex<OrecState>>()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words_per_line(&self) -> usize {
        self.words_per_line
    }

    pub fn line_count(&self) -> usize {
        self.orecs.len()
    }

    fn check(&self, addr: Addr) -> Result<(), MemoryError> {
        if addr < self.words.len() {
            Ok(())
        } else {
            Err(MemoryError::OutOfBounds {
                addr,
                len: self.words.len(),
            })
        }
    }

    pub fn line_of(&self, addr: Addr) -> Result<LineId, MemoryError> {
        self.check(addr)?;
        Ok(addr / self.words_per_line)
    }

    /// Line of an address already known to be in bounds.
    #[inline]
    pub(crate) fn line_unchecked(&self, addr: Addr) -> LineId {
        addr / self.words_per_line
    }

    /// Reads the committed value. Only meaningful while no transaction is
    /// running on the heap.
    pub fn raw_read(&self, addr: Addr) -> Result<u64, MemoryError> {
        self.check(addr)?;
        Ok(self.words[addr].load(Ordering::Acquire))
    }

    /// Stores a value without touching versions or ownership. Setup only:
    /// the caller guarantees no transaction is running.
    pub fn raw_write(&self, addr: Addr, value: u64) -> Result<(), MemoryError> {
        self.check(addr)?;
        self.words[addr].store(value, Ordering::Release);
        Ok(())
    }

    /// Racy non-transactional load, used to spin on lock words.
    pub fn peek(&self, addr: Addr) -> Result<u64, MemoryError> {
        self.raw_read(addr)
    }

    pub fn record(&self, line: LineId) -> Result<OwnershipRecord, MemoryError> {
        let orec = self.orecs.get(line).ok_or(MemoryError::LineOutOfBounds {
            line,
            lines: self.orecs.len(),
        })?;
        let st = orec.lock();
        Ok(OwnershipRecord {
            version: st.version,
            writer: st.writer.as_ref().map(|w| w.id),
            readers: st.readers.iter().map(|r| r.id()).collect(),
        })
    }

    /// True when no line has an owner or a subscribed reader.
    pub fn is_quiescent(&self) -> bool {
        self.orecs.iter().all(|o| {
            let st = o.lock();
            st.writer.is_none() && st.readers.is_empty()
        })
    }

    /// Current global clock value.
    pub fn clock(&self) -> u64 {
        self.clock.load(Ordering::Acquire)
    }

    pub(crate) fn tick_clock(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::AcqRel) + 1
    }

    pub(crate) fn next_tx_id(&self) -> TxId {
        TxId(self.next_tx.fetch_add(1, Ordering::Relaxed))
    }

    #[inline]
    pub(crate) fn orec(&self, line: LineId) -> MutexGuard<'_, OrecState> {
        self.orecs[line].lock()
    }

    #[inline]
    pub(crate) fn word(&self, addr: Addr) -> &AtomicU64 {
        &self.words[addr]
    }

    /// Locks the record of `line` once no transaction owns it. An active
    /// hardware owner is doomed first; software owners are only ever held
    /// for the duration of a commit, so waiting on them is bounded.
    fn lock_unowned(&self, line: LineId) -> MutexGuard<'_, OrecState> {
        loop {
            let st = self.orec(line);
            match &st.writer {
                None => return st,
                Some(w) => {
                    if let Some(hw) = &w.hw {
                        hw.doom(AbortCause::Conflict);
                    }
                }
            }
            drop(st);
            std::thread::yield_now();
        }
    }

    /// Non-speculative read that waits out any in-flight commit on the line.
    pub fn direct_read(&self, addr: Addr) -> Result<u64, MemoryError> {
        self.check(addr)?;
        let _st = self.lock_unowned(self.line_unchecked(addr));
        Ok(self.words[addr].load(Ordering::Acquire))
    }

    /// Non-speculative single-word commit: dooms subscribed hardware readers,
    /// publishes the value and bumps the line version.
    pub fn direct_write(&self, addr: Addr, value: u64) -> Result<(), MemoryError> {
        self.update(addr, |_| Some(value)).map(|_| ())
    }

    /// Conflict-aware read-modify-write of one word. `f` sees the current
    /// value and returns the new one, or `None` to leave the word alone.
    /// Returns the `(old, new)` pair when a write happened.
    pub fn update(
        &self,
        addr: Addr,
        mut f: impl FnMut(u64) -> Option<u64>,
    ) -> Result<Option<(u64, u64)>, MemoryError> {
        self.check(addr)?;
        let line = self.line_unchecked(addr);
        let mut st = self.lock_unowned(line);
        let old = self.words[addr].load(Ordering::Acquire);
        let Some(new) = f(old) else {
            return Ok(None);
        };
        st.doom_readers(line, None);
        self.words[addr].store(new, Ordering::Release);
        st.version += 1;
        st.stamp = self.tick_clock();
        Ok(Some((old, new)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_counts_round_up() {
        assert_eq!(TmHeap::new(16, 8).unwrap().line_count(), 2);
        assert_eq!(TmHeap::new(17, 8).unwrap().line_count(), 3);
        let h = TmHeap::new(1, 1).unwrap();
        assert_eq!((h.len(), h.line_count()), (1, 1));
        assert_eq!(h.raw_read(0), Ok(0));
    }

    #[test]
    fn zero_sizes_rejected() {
        assert_eq!(TmHeap::new(0, 8).unwrap_err(), MemoryError::EmptyHeap);
        assert_eq!(TmHeap::new(8, 0).unwrap_err(), MemoryError::ZeroLineWidth);
    }

    #[test]
    fn raw_access() {
        let h = TmHeap::new(16, 8).unwrap();
        assert_eq!(h.raw_read(3), Ok(0));
        h.raw_write(3, 5).unwrap();
        assert_eq!(h.raw_read(3), Ok(5));
        h.raw_write(3, 7).unwrap();
        assert_eq!(h.raw_read(3), Ok(7));
        assert_eq!(h.record(0).unwrap().version, 0);
        assert!(matches!(
            h.raw_read(16),
            Err(MemoryError::OutOfBounds { addr: 16, len: 16 })
        ));
        assert!(h.raw_write(99, 1).is_err());
    }

    #[test]
    fn line_mapping() {
        let h = TmHeap::new(16, 8).unwrap();
        assert_eq!(h.line_of(0), Ok(0));
        assert_eq!(h.line_of(7), Ok(0));
        assert_eq!(h.line_of(8), Ok(1));
        assert!(h.line_of(16).is_err());
    }

    #[test]
    fn fresh_records_are_empty() {
        let h = TmHeap::new(17, 8).unwrap();
        for line in 0..h.line_count() {
            let r = h.record(line).unwrap();
            assert_eq!(
                r,
                OwnershipRecord {
                    version: 0,
                    writer: None,
                    readers: vec![]
                }
            );
        }
        assert!(h.record(3).is_err());
        assert!(h.is_quiescent());
    }

    #[test]
    fn update_bumps_version_and_clock() {
        let h = TmHeap::new(16, 8).unwrap();
        assert_eq!(h.update(9, |v| Some(v + 1)).unwrap(), Some((0, 1)));
        assert_eq!(h.update(9, |_| None).unwrap(), None);
        assert_eq!(h.raw_read(9), Ok(1));
        assert_eq!(h.record(1).unwrap().version, 1);
        assert_eq!(h.record(0).unwrap().version, 0);
        assert_eq!(h.clock(), 1);
        h.direct_write(10, 4).unwrap();
        assert_eq!(h.direct_read(10), Ok(4));
        assert_eq!(h.record(1).unwrap().version, 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lines_partition_the_heap(n in 1usize..300, wpl in 1usize..20) {
                let h = TmHeap::new(n, wpl).unwrap();
                prop_assert_eq!(h.line_count(), n.div_ceil(wpl));
                let mut prev = 0;
                for addr in 0..n {
                    let line = h.line_of(addr).unwrap();
                    prop_assert!(line == prev || line == prev + 1);
                    prop_assert!(line < h.line_count());
                    prop_assert!(addr >= line * wpl && addr < (line + 1) * wpl);
                    prev = line;
                }
                prop_assert_eq!(prev, h.line_count() - 1);
            }
        }
    }
}
