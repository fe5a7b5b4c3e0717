//! Fixed-layout weighted multigraph stored in the transactional heap, and
//! the two kernels that build and query it.
//!
//! Heap layout, each region starting on a fresh cacheline after the
//! reserved lock line:
//!
//! ```text
//! degree[v]                 one word per vertex
//! adjacency[v][slot]        slots_per_vertex packed edges per vertex
//! overflow_count            own line
//! overflow[k] = (src, edge) two words per entry
//! max_weight                own line
//! result_len                own line
//! result[k] = (src, edge)   two words per entry
//! ```
//!
//! A packed edge is `(weight << 32) | dst`.

use std::time::{Duration, Instant};

use crate::access::TxAccess;
use crate::context::ThreadCtx;
use crate::memory::{Addr, MemoryError, TmHeap};
use crate::policy::{run_section, PolicyConfig, SectionTrace, TmSystem};
use crate::stats::ThreadStats;

use super::Edge;

const COMPUTE_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn pack(dst: u32, weight: u32) -> u64 {
    (u64::from(weight) << 32) | u64::from(dst)
}

pub fn unpack(word: u64) -> (u32, u32) {
    (word as u32, (word >> 32) as u32)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("slots_per_vertex must be at least 1")]
    ZeroSlots,
    #[error("graph layout needs {0} words, which overflows")]
    TooLarge(u128),
    #[error("heap of {have} words is smaller than the {need} the layout needs")]
    HeapTooSmall { have: usize, need: usize },
    #[error("edge {0:?} has an endpoint outside the vertex range")]
    VertexOutOfRange(Edge),
    #[error("edge list of {got} exceeds the layout's {cap} edges")]
    TooManyEdges { got: usize, cap: usize },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct GraphLayout {
    pub vertices: usize,
    pub max_edges: usize,
    pub slots_per_vertex: usize,
    pub words_per_line: usize,
    degree: Addr,
    adjacency: Addr,
    overflow_count: Addr,
    overflow: Addr,
    max_weight: Addr,
    result_len: Addr,
    result: Addr,
    end: Addr,
}

impl GraphLayout {
    /// Layout for up to `max_edges` edges over `vertices` vertices. The
    /// overflow bucket and the result list are sized for the worst case.
    pub fn new(
        vertices: usize,
        max_edges: usize,
        slots_per_vertex: usize,
        words_per_line: usize,
    ) -> Result<Self, GraphError> {
        if slots_per_vertex == 0 {
            return Err(GraphError::ZeroSlots);
        }
        let wpl = words_per_line.max(1) as u128;
        let align = |x: u128| x.div_ceil(wpl) * wpl;
        let (n, m) = (vertices as u128, max_edges as u128);
        let degree = wpl;
        let adjacency = align(degree + n);
        let overflow_count = align(adjacency + n * slots_per_vertex as u128);
        let overflow = overflow_count + wpl;
        let max_weight = align(overflow + 2 * m);
        let result_len = max_weight + wpl;
        let result = result_len + wpl;
        let end = align(result + 2 * m);
        if end > usize::MAX as u128 / 16 {
            return Err(GraphError::TooLarge(end));
        }
        Ok(GraphLayout {
            vertices,
            max_edges,
            slots_per_vertex,
            words_per_line,
            degree: degree as usize,
            adjacency: adjacency as usize,
            overflow_count: overflow_count as usize,
            overflow: overflow as usize,
            max_weight: max_weight as usize,
            result_len: result_len as usize,
            result: result as usize,
            end: end as usize,
        })
    }

    /// Total heap words, including the reserved lock line.
    pub fn heap_words(&self) -> usize {
        self.end
    }

    pub fn heap_bytes(&self) -> usize {
        TmHeap::footprint_bytes(self.end, self.words_per_line)
    }

    pub fn degree_addr(&self, v: u32) -> Addr {
        self.degree + v as usize
    }

    pub fn slot_addr(&self, v: u32, slot: usize) -> Addr {
        self.adjacency + v as usize * self.slots_per_vertex + slot
    }

    pub fn overflow_count_addr(&self) -> Addr {
        self.overflow_count
    }

    pub fn overflow_addr(&self, k: usize) -> Addr {
        self.overflow + 2 * k
    }

    pub fn max_weight_addr(&self) -> Addr {
        self.max_weight
    }

    pub fn result_len_addr(&self) -> Addr {
        self.result_len
    }

    pub fn result_addr(&self, k: usize) -> Addr {
        self.result + 2 * k
    }

    pub fn system(&self) -> Result<TmSystem, GraphError> {
        Ok(TmSystem::new(TmHeap::new(self.end, self.words_per_line)?))
    }

    fn check_heap(&self, heap: &TmHeap) -> Result<(), GraphError> {
        if heap.len() < self.end {
            return Err(GraphError::HeapTooSmall {
                have: heap.len(),
                need: self.end,
            });
        }
        Ok(())
    }

    /// The insertion critical section.
    pub fn insert(&self, tx: &mut dyn TxAccess, e: Edge) -> crate::TxResult<()> {
        let deg_addr = self.degree_addr(e.src);
        let deg = tx.read(deg_addr)? as usize;
        let packed = pack(e.dst, e.weight);
        if deg < self.slots_per_vertex {
            tx.write(self.slot_addr(e.src, deg), packed)?;
        } else {
            let k = tx.read(self.overflow_count)? as usize;
            tx.write(self.overflow_addr(k), u64::from(e.src))?;
            tx.write(self.overflow_addr(k) + 1, packed)?;
            tx.write(self.overflow_count, k as u64 + 1)?;
        }
        tx.write(deg_addr, deg as u64 + 1)
    }

    /// Reads the graph back from a quiescent heap. Per vertex, edges appear
    /// in slot order followed by that vertex's overflow entries.
    pub fn snapshot(&self, heap: &TmHeap) -> Result<GraphSnapshot, GraphError> {
        self.check_heap(heap)?;
        let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.vertices];
        for (v, list) in adj.iter_mut().enumerate() {
            let deg = heap.raw_read(self.degree_addr(v as u32))? as usize;
            for s in 0..deg.min(self.slots_per_vertex) {
                list.push(unpack(heap.raw_read(self.slot_addr(v as u32, s))?));
            }
        }
        let k = heap.raw_read(self.overflow_count)? as usize;
        for i in 0..k {
            let src = heap.raw_read(self.overflow_addr(i))? as usize;
            adj[src].push(unpack(heap.raw_read(self.overflow_addr(i) + 1)?));
        }
        Ok(GraphSnapshot {
            adjacency: adj,
            overflowed: k,
        })
    }

    pub fn max_weight(&self, heap: &TmHeap) -> Result<u32, GraphError> {
        Ok(heap.raw_read(self.max_weight)? as u32)
    }

    pub fn results(&self, heap: &TmHeap) -> Result<Vec<Edge>, GraphError> {
        let n = heap.raw_read(self.result_len)? as usize;
        (0..n)
            .map(|k| {
                let src = heap.raw_read(self.result_addr(k))? as u32;
                let (dst, weight) = unpack(heap.raw_read(self.result_addr(k) + 1)?);
                Ok(Edge { src, dst, weight })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSnapshot {
    /// `(dst, weight)` per vertex.
    pub adjacency: Vec<Vec<(u32, u32)>>,
    /// Edges that went to the overflow bucket.
    pub overflowed: usize,
}

impl GraphSnapshot {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(v, l)| {
                l.iter().map(move |&(dst, weight)| Edge {
                    src: v as u32,
                    dst,
                    weight,
                })
            })
            .collect()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct KernelOpts {
    pub threads: usize,
    pub run: u32,
    /// Record a [`SectionTrace`] for every critical section.
    pub trace: bool,
}

impl KernelOpts {
    pub fn new(threads: usize) -> Self {
        KernelOpts {
            threads: threads.max(1),
            run: 0,
            trace: false,
        }
    }

    pub fn run(mut self, run: u32) -> Self {
        self.run = run;
        self
    }

    pub fn traced(mut self) -> Self {
        self.trace = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct KernelReport {
    pub threads: Vec<ThreadStats>,
    pub duration: Duration,
    /// Per thread, empty unless tracing was requested.
    pub traces: Vec<Vec<SectionTrace>>,
    pub sections: u64,
}

impl KernelReport {
    fn from_ctxs(ctxs: Vec<ThreadCtx>, duration: Duration) -> Self {
        let threads: Vec<ThreadStats> = ctxs.iter().map(|c| c.stats).collect();
        let sections = threads.iter().map(|s| s.sections).sum();
        KernelReport {
            threads,
            duration,
            traces: ctxs
                .into_iter()
                .map(|c| c.trace.unwrap_or_default())
                .collect(),
            sections,
        }
    }

    pub fn total(&self) -> ThreadStats {
        self.threads.iter().sum()
    }
}

fn contexts(cfg: &PolicyConfig, opts: KernelOpts, salt: u64) -> Vec<ThreadCtx> {
    (0..opts.threads)
        .map(|t| {
            let c = ThreadCtx::new(t, opts.run, cfg.rng_seed ^ salt, cfg.htm.rng_seed ^ salt);
            if opts.trace {
                c.traced()
            } else {
                c
            }
        })
        .collect()
}

fn chunk(len: usize, parts: usize, i: usize) -> std::ops::Range<usize> {
    (i * len / parts)..((i + 1) * len / parts)
}

fn parallel(ctxs: &mut [ThreadCtx], f: impl Fn(usize, &mut ThreadCtx) + Sync) {
    if ctxs.len() == 1 {
        f(0, &mut ctxs[0]);
        return;
    }
    std::thread::scope(|s| {
        for (t, ctx) in ctxs.iter_mut().enumerate() {
            let f = &f;
            s.spawn(move || f(t, ctx));
        }
    });
}

/// Inserts `edges` with one critical section per edge; thread `t` takes
/// the `t`-th contiguous slice of the list.
pub fn generation_kernel(
    sys: &TmSystem,
    layout: &GraphLayout,
    edges: &[Edge],
    cfg: &PolicyConfig,
    opts: KernelOpts,
) -> Result<KernelReport, GraphError> {
    layout.check_heap(sys.heap())?;
    if edges.len() > layout.max_edges {
        return Err(GraphError::TooManyEdges {
            got: edges.len(),
            cap: layout.max_edges,
        });
    }
    if let Some(e) = edges
        .iter()
        .find(|e| e.src as usize >= layout.vertices || e.dst as usize >= layout.vertices)
    {
        return Err(GraphError::VertexOutOfRange(*e));
    }
    let mut ctxs = contexts(cfg, opts, 0);
    let n = ctxs.len();
    let start = Instant::now();
    parallel(&mut ctxs, |t, ctx| {
        for &e in &edges[chunk(edges.len(), n, t)] {
            run_section(sys, cfg, ctx, |tx| layout.insert(tx, e));
        }
    });
    Ok(KernelReport::from_ctxs(ctxs, start.elapsed()))
}

/// Extracts every edge of maximum weight. Phase one folds each non-empty
/// vertex's heaviest edge into the shared maximum; after all threads join,
/// phase two appends each edge of that weight to the shared result list.
/// Vertices are split into contiguous per-thread ranges.
pub fn computation_kernel(
    sys: &TmSystem,
    layout: &GraphLayout,
    graph: &GraphSnapshot,
    cfg: &PolicyConfig,
    opts: KernelOpts,
) -> Result<(Vec<Edge>, KernelReport), GraphError> {
    layout.check_heap(sys.heap())?;
    let mut ctxs = contexts(cfg, opts, COMPUTE_STREAM_SALT);
    let n = ctxs.len();
    let verts = graph.adjacency.len();
    let max_addr = layout.max_weight_addr();
    let len_addr = layout.result_len_addr();
    let start = Instant::now();
    parallel(&mut ctxs, |t, ctx| {
        for v in chunk(verts, n, t) {
            let Some(local) = graph.adjacency[v].iter().map(|e| e.1).max() else {
                continue;
            };
            run_section(sys, cfg, ctx, |tx| {
                if tx.read(max_addr)? < u64::from(local) {
                    tx.write(max_addr, u64::from(local))?;
                }
                Ok(())
            });
        }
    });
    let max = layout.max_weight(sys.heap())?;
    parallel(&mut ctxs, |t, ctx| {
        for v in chunk(verts, n, t) {
            for &(dst, w) in &graph.adjacency[v] {
                if w != max {
                    continue;
                }
                run_section(sys, cfg, ctx, |tx| {
                    let k = tx.read(len_addr)? as usize;
                    tx.write(layout.result_addr(k), v as u64)?;
                    tx.write(layout.result_addr(k) + 1, pack(dst, w))?;
                    tx.write(len_addr, k as u64 + 1)
                });
            }
        }
    });
    let duration = start.elapsed();
    Ok((
        layout.results(sys.heap())?,
        KernelReport::from_ctxs(ctxs, duration),
    ))
}
