//! SSCA-2-style driver: R-MAT edge generation plus the graph construction
//! and max-weight extraction kernels.

mod edgelist;
mod graph;
mod rmat;

pub use edgelist::{read_edges, write_edges, EdgeListError};
pub use graph::{
    computation_kernel, generation_kernel, pack, unpack, GraphError, GraphLayout, GraphSnapshot,
    KernelOpts, KernelReport,
};
pub use rmat::{rmat_edges, Edge, RmatError, RmatParams, MAX_SCALE};
