#![allow(dead_code)]

use std::collections::HashMap;

use hytm::context::split_stream;
use hytm::workload::Edge;
use hytm::{GlobalLock, HtmConfig, HwTx, SwTx, ThreadStats, TmHeap};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Kind {
    Hw,
    Sw,
}

/// `Write(addr, c)` stores `c + sum of the values read so far`, so writes
/// depend on what the transaction observed.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Read(usize),
    Write(usize, u64),
}

#[derive(Clone, Debug)]
pub struct Prog {
    pub kind: Kind,
    pub ops: Vec<Op>,
}

impl Prog {
    pub fn new(kind: Kind, ops: &[Op]) -> Self {
        Prog {
            kind,
            ops: ops.to_vec(),
        }
    }

    fn steps(&self) -> usize {
        self.ops.len() + 1
    }
}

/// Addresses used by the programs: A and B share a line, C and D have
/// their own.
pub const A: usize = 8;
pub const B: usize = 9;
pub const C: usize = 16;
pub const D: usize = 24;
pub const CELLS: [usize; 4] = [A, B, C, D];
const INIT: [u64; 4] = [100, 200, 300, 400];

enum Slot<'a> {
    Idle(&'a mut ThreadStats),
    Hw(HwTx<'a>, Vec<u64>),
    Sw(SwTx<'a>, Vec<u64>),
    Committed,
    Aborted,
}

pub struct Execution {
    /// `(program index, values read)` for every committed transaction.
    pub committed: Vec<(usize, Vec<u64>)>,
    pub finals: Vec<u64>,
}

/// Runs the programs step-wise in `schedule` order on one OS thread. Step
/// `k < ops.len()` of a program performs its `k`-th op (beginning the
/// transaction first if needed); the last step commits.
pub fn execute(progs: &[Prog], schedule: &[usize]) -> Execution {
    let heap = TmHeap::new(32, 8).unwrap();
    for (a, v) in CELLS.iter().zip(INIT) {
        heap.raw_write(*a, v).unwrap();
    }
    let cfg = HtmConfig::default();
    let lock = GlobalLock::global(&heap);
    lock.enter();
    let mut stats = vec![ThreadStats::default(); progs.len()];
    let mut slots: Vec<Slot> = stats.iter_mut().map(Slot::Idle).collect();
    let mut pc = vec![0usize; progs.len()];
    let mut committed = Vec::new();
    let mut rng = split_stream(0, 0, 0);
    for &t in schedule {
        let step = pc[t];
        pc[t] += 1;
        if let Slot::Idle(_) = slots[t] {
            let Slot::Idle(s) = std::mem::replace(&mut slots[t], Slot::Aborted) else {
                unreachable!()
            };
            slots[t] = match progs[t].kind {
                Kind::Hw => Slot::Hw(HwTx::begin(&heap, &cfg, s, &mut rng), Vec::new()),
                Kind::Sw => Slot::Sw(SwTx::begin(&lock, s).unwrap(), Vec::new()),
            };
        }
        if step == progs[t].ops.len() {
            let (ok, reads) = match std::mem::replace(&mut slots[t], Slot::Aborted) {
                Slot::Hw(tx, r) => (tx.commit().is_ok(), r),
                Slot::Sw(tx, r) => (tx.commit().is_ok(), r),
                _ => (false, Vec::new()),
            };
            if ok {
                committed.push((t, reads));
                slots[t] = Slot::Committed;
            }
            continue;
        }
        let op = progs[t].ops[step];
        let res = match &mut slots[t] {
            Slot::Hw(tx, reads) => apply(op, reads, |o| match o {
                Op::Read(a) => tx.read(a),
                Op::Write(a, v) => tx.write(a, v).map(|_| 0),
            }),
            Slot::Sw(tx, reads) => apply(op, reads, |o| match o {
                Op::Read(a) => tx.read(a),
                Op::Write(a, v) => tx.write(a, v).map(|_| 0),
            }),
            _ => Ok(()),
        };
        if res.is_err() {
            slots[t] = Slot::Aborted;
        }
    }
    drop(slots);
    lock.exit().unwrap();
    assert!(heap.is_quiescent());
    Execution {
        committed,
        finals: CELLS.iter().map(|&a| heap.raw_read(a).unwrap()).collect(),
    }
}

fn apply(
    op: Op,
    reads: &mut Vec<u64>,
    mut f: impl FnMut(Op) -> Result<u64, hytm::AbortCause>,
) -> Result<(), hytm::AbortCause> {
    match op {
        Op::Read(a) => reads.push(f(Op::Read(a))?),
        Op::Write(a, c) => {
            f(Op::Write(a, c + reads.iter().sum::<u64>()))?;
        }
    }
    Ok(())
}

fn replay(progs: &[Prog], order: &[&(usize, Vec<u64>)]) -> Option<Vec<u64>> {
    let mut mem: HashMap<usize, u64> = CELLS.iter().copied().zip(INIT).collect();
    for (t, observed) in order {
        let mut reads = Vec::new();
        for op in &progs[*t].ops {
            match *op {
                Op::Read(a) => reads.push(mem[&a]),
                Op::Write(a, c) => {
                    mem.insert(a, c + reads.iter().sum::<u64>());
                }
            }
        }
        if &reads != observed {
            return None;
        }
    }
    Some(CELLS.iter().map(|a| mem[a]).collect())
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// True when some serial order of the committed transactions reproduces
/// every value they read and the final memory.
pub fn serializable(progs: &[Prog], exec: &Execution) -> bool {
    let refs: Vec<&(usize, Vec<u64>)> = exec.committed.iter().collect();
    permutations(&refs)
        .iter()
        .any(|order| replay(progs, order).as_deref() == Some(&exec.finals[..]))
}

/// Calls `f` with every interleaving of the given per-thread step counts.
pub fn interleavings(steps: &[usize], f: &mut impl FnMut(&[usize])) {
    fn go(left: &mut [usize], cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if left.iter().all(|&n| n == 0) {
            f(cur);
            return;
        }
        for t in 0..left.len() {
            if left[t] > 0 {
                left[t] -= 1;
                cur.push(t);
                go(left, cur, f);
                cur.pop();
                left[t] += 1;
            }
        }
    }
    go(&mut steps.to_vec(), &mut Vec::new(), f);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct EnumStats {
    pub executions: u64,
    pub violations: u64,
    pub commits: u64,
}

pub fn check_all(progs: &[Prog]) -> EnumStats {
    let steps: Vec<usize> = progs.iter().map(Prog::steps).collect();
    let mut st = EnumStats::default();
    interleavings(&steps, &mut |sched| {
        let e = execute(progs, sched);
        st.executions += 1;
        st.commits += e.committed.len() as u64;
        if !serializable(progs, &e) {
            st.violations += 1;
        }
    });
    st
}

use Op::{Read as R, Write as W};

/// Programs of up to four operations for two-thread enumeration.
pub fn catalog4() -> Vec<Vec<Op>> {
    vec![
        vec![R(A), W(A, 1)],
        vec![R(A), R(C), W(C, 2), W(A, 3)],
        vec![R(A), R(C)],
        vec![W(A, 4), W(C, 5)],
        vec![R(B), W(B, 6)],
        vec![R(C), W(A, 7), R(D), W(D, 8)],
    ]
}

/// Two-operation programs for three-thread enumeration.
pub fn catalog2() -> Vec<Vec<Op>> {
    vec![
        vec![R(A), W(A, 1)],
        vec![R(C), W(A, 2)],
        vec![R(A), R(C)],
        vec![W(C, 3), W(A, 4)],
        vec![R(B), W(B, 5)],
    ]
}

pub fn with_kinds(ops: &[Vec<Op>]) -> Vec<Prog> {
    ops.iter()
        .flat_map(|o| [Prog::new(Kind::Hw, o), Prog::new(Kind::Sw, o)])
        .collect()
}

pub fn enumerate_two_threads() -> EnumStats {
    let progs = with_kinds(&catalog4());
    let mut total = EnumStats::default();
    for p in &progs {
        for q in &progs {
            add(&mut total, check_all(&[p.clone(), q.clone()]));
        }
    }
    total
}

pub fn enumerate_three_threads() -> EnumStats {
    let progs = with_kinds(&catalog2());
    let mut total = EnumStats::default();
    for p in &progs {
        for q in &progs {
            for r in &progs {
                add(&mut total, check_all(&[p.clone(), q.clone(), r.clone()]));
            }
        }
    }
    // A few full-length three-way mixes.
    let long = catalog4();
    for kinds in [
        [Kind::Hw, Kind::Hw, Kind::Sw],
        [Kind::Sw, Kind::Hw, Kind::Sw],
    ] {
        let progs = [
            Prog::new(kinds[0], &long[1]),
            Prog::new(kinds[1], &long[5]),
            Prog::new(kinds[2], &long[3]),
        ];
        add(&mut total, check_all(&progs));
    }
    total
}

fn add(total: &mut EnumStats, s: EnumStats) {
    total.executions += s.executions;
    total.violations += s.violations;
    total.commits += s.commits;
}

/// Multiset of edges as counts.
pub fn multiset(edges: impl IntoIterator<Item = Edge>) -> HashMap<Edge, usize> {
    let mut m = HashMap::new();
    for e in edges {
        *m.entry(e).or_insert(0) += 1;
    }
    m
}

/// Per-source adjacency in insertion order, built with no heap involved.
pub fn sequential_adjacency(vertices: usize, edges: &[Edge]) -> Vec<Vec<(u32, u32)>> {
    let mut adj = vec![Vec::new(); vertices];
    for e in edges {
        adj[e.src as usize].push((e.dst, e.weight));
    }
    adj
}

/// Edges whose weight equals the largest weight present.
pub fn heaviest(edges: &[Edge]) -> Vec<Edge> {
    let mut best = 0;
    let mut out = Vec::new();
    for &e in edges {
        if e.weight > best {
            best = e.weight;
            out.clear();
        }
        if e.weight == best {
            out.push(e);
        }
    }
    out
}
