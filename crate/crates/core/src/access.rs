//! The handle critical-section bodies use to touch the heap.

use crate::htm::AbortCause;
use crate::memory::{Addr, TmHeap};

pub type TxResult<T> = Result<T, AbortCause>;

/// Word-level access to the shared heap. Implemented by hardware and
/// software transactions and by the non-speculative lock path, so a body
/// runs unmodified on any of them.
///
/// Bodies must propagate errors with `?` and have no side effects outside
/// the handle; an aborted attempt is rerun from the start.
pub trait TxAccess {
    fn read(&mut self, addr: Addr) -> TxResult<u64>;
    fn write(&mut self, addr: Addr, value: u64) -> TxResult<()>;
}

/// Non-speculative access used under an exclusive lock. Never aborts.
pub struct DirectAccess<'h> {
    heap: &'h TmHeap,
}

impl<'h> DirectAccess<'h> {
    pub fn new(heap: &'h TmHeap) -> Self {
        DirectAccess { heap }
    }
}

impl TxAccess for DirectAccess<'_> {
    fn read(&mut self, addr: Addr) -> TxResult<u64> {
        Ok(self
            .heap
            .direct_read(addr)
            .expect("direct read out of bounds"))
    }

    fn write(&mut self, addr: Addr, value: u64) -> TxResult<()> {
        self.heap
            .direct_write(addr, value)
            .expect("direct write out of bounds");
        Ok(())
    }
}
