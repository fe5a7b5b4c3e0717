//! Emulated best-effort hardware transactional memory, a cooperating
//! software TM, the hybrid fallback policies built on them, and SSCA-2-style
//! graph kernels to drive them.

pub mod access;
pub mod context;
pub mod harness;
pub mod htm;
pub mod memory;
pub mod policy;
pub mod stats;
pub mod stm;
pub mod workload;

pub use access::{DirectAccess, TxAccess, TxResult};
pub use context::ThreadCtx;
pub use htm::{AbortCause, HtmConfig, HwTx};
pub use memory::{MemoryError, OwnershipRecord, TmHeap, TxId};
pub use policy::{
    run_section, CommitPath, PathKind, PolicyConfig, PolicyKind, RetrySpec, TmSystem,
};
pub use stats::{StatsSheet, ThreadStats};
pub use stm::{GlobalLock, SwTx, GLOBAL_LOCK_ADDR};
