//! Word-based software TM and the global lock counter.
//!
//! The STM is a lazy write-back design: reads are logged with the version
//! of their line, writes are buffered, and commit claims the written lines,
//! revalidates the read log against a single version space shared with the
//! hardware path, then publishes. A global clock lets reads skip validation
//! until some line newer than the transaction's snapshot is seen.
//!
//! Software transactions only run inside a fallback episode, bracketed by
//! [`GlobalLock::enter`] and [`GlobalLock::exit`]. The counter lives in the
//! heap, so each increment dooms every hardware transaction subscribed to it.

use std::sync::atomic::Ordering;

use smallvec::SmallVec;

use crate::access::{TxAccess, TxResult};
use crate::htm::AbortCause;
use crate::memory::{Addr, LineId, MemoryError, TmHeap, TxId, Writer};
use crate::stats::ThreadStats;

/// The lock counter occupies line 0; data layouts start at line 1.
pub const GLOBAL_LOCK_ADDR: Addr = 0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StmError {
    #[error("global lock released more times than it was taken")]
    LockUnderflow,
    #[error("software transaction started outside a fallback episode")]
    LockNotHeld,
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Counter of in-progress fallback episodes.
#[derive(Clone, Copy, Debug)]
pub struct GlobalLock<'h> {
    heap: &'h TmHeap,
    addr: Addr,
}

impl<'h> GlobalLock<'h> {
    pub fn new(heap: &'h TmHeap, addr: Addr) -> Result<Self, StmError> {
        heap.line_of(addr)?;
        Ok(GlobalLock { heap, addr })
    }

    /// The lock at [`GLOBAL_LOCK_ADDR`].
    pub fn global(heap: &'h TmHeap) -> Self {
        GlobalLock::new(heap, GLOBAL_LOCK_ADDR).expect("heap has at least one word")
    }

    pub fn heap(&self) -> &'h TmHeap {
        self.heap
    }

    pub fn addr(&self) -> Addr {
        self.addr
    }

    pub fn value(&self) -> u64 {
        self.heap
            .peek(self.addr)
            .expect("lock address checked at construction")
    }

    /// Starts an episode. Returns the counter value after the increment.
    pub fn enter(&self) -> u64 {
        let (_, new) = self
            .heap
            .update(self.addr, |v| Some(v + 1))
            .expect("lock address checked at construction")
            .expect("increment always writes");
        new
    }

    /// Ends an episode. Fails without touching the counter if no episode is
    /// in progress.
    pub fn exit(&self) -> Result<u64, StmError> {
        match self.heap.update(self.addr, |v| v.checked_sub(1))? {
            Some((_, new)) => Ok(new),
            None => Err(StmError::LockUnderflow),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SwStatus {
    Active,
    Committed,
    Aborted,
}

/// A software transaction.
pub struct SwTx<'a> {
    heap: &'a TmHeap,
    stats: &'a mut ThreadStats,
    id: TxId,
    status: SwStatus,
    start_stamp: u64,
    read_log: Vec<(Addr, u64)>,
    write_log: SmallVec<[(Addr, u64); 8]>,
}

impl<'a> SwTx<'a> {
    pub fn begin(lock: &GlobalLock<'a>, stats: &'a mut ThreadStats) -> Result<SwTx<'a>, StmError> {
        if lock.value() == 0 {
            return Err(StmError::LockNotHeld);
        }
        let heap = lock.heap();
        stats.stm_begins += 1;
        Ok(SwTx {
            heap,
            stats,
            id: heap.next_tx_id(),
            status: SwStatus::Active,
            start_stamp: heap.clock(),
            read_log: Vec::new(),
            write_log: SmallVec::new(),
        })
    }

    pub fn id(&self) -> TxId {
        self.id
    }

    pub fn status(&self) -> SwStatus {
        self.status
    }

    pub fn start_stamp(&self) -> u64 {
        self.start_stamp
    }

    pub fn read_log_len(&self) -> usize {
        self.read_log.len()
    }

    fn ensure_active(&self) -> TxResult<()> {
        match self.status {
            SwStatus::Active => Ok(()),
            SwStatus::Aborted => Err(AbortCause::Conflict),
            SwStatus::Committed => panic!("operation on a committed software transaction"),
        }
    }

    fn fail(&mut self) -> AbortCause {
        self.status = SwStatus::Aborted;
        self.stats.stm_aborts += 1;
        AbortCause::Conflict
    }

    fn line(&self, addr: Addr) -> LineId {
        assert!(
            addr < self.heap.len(),
            "transactional access to address {addr} outside heap of {} words",
            self.heap.len()
        );
        self.heap.line_unchecked(addr)
    }

    fn validate(&self) -> bool {
        self.read_log.iter().all(|&(addr, version)| {
            let st = self.heap.orec(self.heap.line_unchecked(addr));
            st.version == version && !st.owned_by_other(self.id)
        })
    }

    pub fn read(&mut self, addr: Addr) -> TxResult<u64> {
        self.ensure_active()?;
        if let Some(&(_, v)) = self.write_log.iter().find(|(a, _)| *a == addr) {
            return Ok(v);
        }
        let line = self.line(addr);
        let (value, version, stamp) = {
            let st = self.heap.orec(line);
            if st.owned_by_other(self.id) {
                drop(st);
                return Err(self.fail());
            }
            (
                self.heap.word(addr).load(Ordering::Acquire),
                st.version,
                st.stamp,
            )
        };
        self.read_log.push((addr, version));
        if stamp > self.start_stamp {
            let now = self.heap.clock();
            if !self.validate() {
                return Err(self.fail());
            }
            self.start_stamp = now;
        }
        Ok(value)
    }

    pub fn write(&mut self, addr: Addr, value: u64) -> TxResult<()> {
        self.ensure_active()?;
        self.line(addr);
        match self.write_log.iter_mut().find(|(a, _)| *a == addr) {
            Some(slot) => slot.1 = value,
            None => self.write_log.push((addr, value)),
        }
        Ok(())
    }

    fn release(&self, lines: &[LineId]) {
        for &line in lines {
            self.heap.orec(line).release_writer(self.id);
        }
    }

    pub fn commit(mut self) -> TxResult<()> {
        self.ensure_active()?;
        if self.write_log.is_empty() {
            self.status = SwStatus::Committed;
            self.stats.stm_commits += 1;
            return Ok(());
        }
        let mut lines: SmallVec<[LineId; 8]> = self
            .write_log
            .iter()
            .map(|&(a, _)| self.heap.line_unchecked(a))
            .collect();
        lines.sort_unstable();
        lines.dedup();

        for (i, &line) in lines.iter().enumerate() {
            let mut st = self.heap.orec(line);
            if st.owned_by_other(self.id) {
                drop(st);
                self.release(&lines[..i]);
                return Err(self.fail());
            }
            st.writer = Some(Writer {
                id: self.id,
                hw: None,
            });
            st.doom_readers(line, None);
        }
        if !self.validate() {
            self.release(&lines);
            return Err(self.fail());
        }
        let stamp = self.heap.tick_clock();
        for &line in &lines {
            let mut st = self.heap.orec(line);
            for &(addr, v) in &self.write_log {
                if self.heap.line_unchecked(addr) == line {
                    self.heap.word(addr).store(v, Ordering::Release);
                }
            }
            st.version += 1;
            st.stamp = stamp;
            st.release_writer(self.id);
        }
        self.status = SwStatus::Committed;
        self.stats.stm_commits += 1;
        Ok(())
    }

    pub fn abort(mut self) {
        if self.status == SwStatus::Active {
            self.fail();
        }
    }
}

impl Drop for SwTx<'_> {
    fn drop(&mut self) {
        if self.status == SwStatus::Active {
            self.fail();
        }
    }
}

impl TxAccess for SwTx<'_> {
    fn read(&mut self, addr: Addr) -> TxResult<u64> {
        SwTx::read(self, addr)
    }

    fn write(&mut self, addr: Addr, value: u64) -> TxResult<()> {
        SwTx::write(self, addr, value)
    }
}
