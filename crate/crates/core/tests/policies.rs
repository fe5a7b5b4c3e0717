use hytm::context::{split_stream, ThreadCtx};
use hytm::policy::{
    AttemptKind, PathKind, PolicyConfig, PolicyKind, RetrySpec, SectionTrace, TmSystem,
};
use hytm::{
    run_section, AbortCause, GlobalLock, HtmConfig, HwTx, SwTx, ThreadStats, TxAccess, TxResult,
};
use proptest::prelude::*;

/// Each of `threads` workers runs `sections` sections that add one to
/// `width` words on distinct lines starting at a per-section offset.
fn traced_run(
    cfg: &PolicyConfig,
    threads: usize,
    sections: usize,
    width: usize,
) -> (TmSystem, Vec<ThreadCtx>) {
    let sys = TmSystem::with_data_words(8 * 16, 8).unwrap();
    let base = sys.data_base();
    let mut ctxs: Vec<ThreadCtx> = (0..threads)
        .map(|t| ThreadCtx::new(t, 0, cfg.rng_seed, cfg.htm.rng_seed).traced())
        .collect();
    std::thread::scope(|s| {
        for ctx in ctxs.iter_mut() {
            let sys = &sys;
            s.spawn(move || {
                for i in 0..sections {
                    run_section(sys, cfg, ctx, |tx| {
                        for k in 0..width {
                            let a = base + 8 * ((i + k) % 16);
                            let v = tx.read(a)?;
                            tx.write(a, v + 1)?;
                        }
                        Ok(())
                    });
                }
            });
        }
    });
    (sys, ctxs)
}

fn traces(ctxs: &[ThreadCtx]) -> impl Iterator<Item = &SectionTrace> {
    ctxs.iter().flat_map(|c| c.trace.as_ref().unwrap())
}

fn any_policy() -> impl Strategy<Value = PolicyConfig> {
    (
        0usize..9,
        0u32..6,
        1u32..8,
        0u32..8,
        1usize..6,
        0.0f64..0.6,
        any::<u64>(),
    )
        .prop_map(|(k, n, lo, span, wcap, p, seed)| {
            let kind = PolicyKind::ALL[k];
            let retries = match kind {
                PolicyKind::RndHyTm => RetrySpec::UniformRange { lo, hi: lo + span },
                PolicyKind::StAdHyTm => RetrySpec::Tuned(n),
                _ => RetrySpec::Fixed(n),
            };
            PolicyConfig::new(kind)
                .with_retries(retries)
                .with_htm(HtmConfig {
                    write_capacity: wcap,
                    spurious_abort_probability: p,
                    rng_seed: seed,
                    ..HtmConfig::default()
                })
                .with_seed(seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sections_commit_once_on_an_allowed_path(
        cfg in any_policy(), threads in 1usize..4, width in 1usize..5,
    ) {
        let sections = 40;
        let (sys, ctxs) = traced_run(&cfg, threads, sections, width);
        let total: u64 = (0..16).map(|i| sys.heap().raw_read(sys.data_base() + 8 * i).unwrap()).sum();
        prop_assert_eq!(total, (threads * sections * width) as u64);
        prop_assert_eq!(sys.global_lock().value(), 0);
        for t in traces(&ctxs) {
            prop_assert!(cfg.kind.allowed_paths().contains(&t.path));
            // Exactly one committing attempt, and it is the last one, unless
            // the lock path finished the section.
            let commits = t.attempts.iter().filter(|a| a.abort.is_none()).count();
            match t.path {
                PathKind::Lock => prop_assert_eq!(commits, 0),
                _ => {
                    prop_assert_eq!(commits, 1);
                    prop_assert!(t.attempts.last().unwrap().abort.is_none());
                }
            }
            let hw = t.hw_attempts();
            match (cfg.kind, cfg.retries) {
                (PolicyKind::Hle, _) => prop_assert!(hw <= 1),
                (PolicyKind::CoarseLock | PolicyKind::StmOnly, _) => prop_assert_eq!(hw, 0),
                (_, RetrySpec::Fixed(n) | RetrySpec::Tuned(n)) => prop_assert!(hw <= n as usize + 1),
                (_, RetrySpec::UniformRange { lo, hi }) => {
                    let d = t.tries_drawn.unwrap();
                    prop_assert!((lo..=hi).contains(&d));
                    prop_assert!(hw <= d as usize + 1);
                }
            }
            if cfg.kind == PolicyKind::DyAdHyTm {
                let hw: Vec<_> = t.attempts.iter().filter(|a| a.kind == AttemptKind::Hardware).collect();
                if let Some(i) = hw.iter().position(|a| a.abort == Some(AbortCause::Capacity)) {
                    prop_assert!(hw.len() - i - 1 <= 1);
                }
            }
        }
        let stats: ThreadStats = ctxs.iter().map(|c| &c.stats).sum();
        prop_assert_eq!(stats.sections, (threads * sections) as u64);
        prop_assert_eq!(stats.committed_sections(), stats.sections);
        for c in &ctxs {
            prop_assert_eq!(c.stats.check_identities(), Ok(()));
        }
    }

    #[test]
    fn aborted_attempts_leave_memory_bit_identical(
        init in proptest::collection::vec(any::<u64>(), 64),
        ops in proptest::collection::vec((0usize..56, any::<u64>(), any::<bool>()), 1..12),
        hw in any::<bool>(),
        force in 0u8..3,
    ) {
        let sys = TmSystem::with_data_words(56, 8).unwrap();
        let h = sys.heap();
        for (a, v) in init.iter().enumerate() {
            if a >= 8 {
                h.raw_write(a, *v).unwrap();
            }
        }
        let words: Vec<u64> = (0..h.len()).map(|a| h.raw_read(a).unwrap()).collect();
        // Line 0 holds the lock counter, which episodes legitimately write.
        let versions: Vec<u64> = (1..h.line_count()).map(|l| h.record(l).unwrap().version).collect();
        let body = |tx: &mut dyn TxAccess| -> TxResult<()> {
            for &(a, v, is_write) in &ops {
                if is_write {
                    tx.write(8 + a, v)?;
                } else {
                    tx.read(8 + a)?;
                }
            }
            Ok(())
        };
        let mut stats = ThreadStats::default();
        if hw {
            let cfg = match force {
                0 => HtmConfig { spurious_abort_probability: 1.0, ..HtmConfig::default() },
                1 => HtmConfig::with_caps(1, 1),
                _ => HtmConfig::default(),
            };
            let mut tx = HwTx::begin(h, &cfg, &mut stats, &mut split_stream(0, 0, 0));
            let r = body(&mut tx);
            match r {
                Ok(()) => { tx.abort(AbortCause::Explicit); }
                Err(_) => drop(tx),
            }
        } else {
            let lock = GlobalLock::global(h);
            lock.enter();
            let mut tx = SwTx::begin(&lock, &mut stats).unwrap();
            body(&mut tx).unwrap();
            if force == 0 {
                // A concurrent commit to a touched line; if that fails our
                // commit, nothing of ours may show.
                let v = h.raw_read(8 + ops[0].0).unwrap();
                let mut other = ThreadStats::default();
                let mut w = SwTx::begin(&lock, &mut other).unwrap();
                w.write(8 + ops[0].0, v).unwrap();
                w.commit().unwrap();
                let words_now: Vec<u64> = (0..h.len()).map(|a| h.raw_read(a).unwrap()).collect();
                if tx.commit().is_err() {
                    prop_assert_eq!((0..h.len()).map(|a| h.raw_read(a).unwrap()).collect::<Vec<_>>(), words_now);
                }
                lock.exit().unwrap();
                return Ok(());
            }
            tx.abort();
            lock.exit().unwrap();
        }
        prop_assert_eq!((0..h.len()).map(|a| h.raw_read(a).unwrap()).collect::<Vec<_>>(), words);
        prop_assert_eq!((1..h.line_count()).map(|l| h.record(l).unwrap().version).collect::<Vec<_>>(), versions);
        prop_assert!(h.is_quiescent());
    }
}

#[test]
fn episode_entry_dooms_every_subscriber() {
    let sys = TmSystem::with_data_words(64, 8).unwrap();
    let h = sys.heap();
    let cfg = HtmConfig::default();
    let mut stats: Vec<ThreadStats> = vec![ThreadStats::default(); 4];
    let mut txs: Vec<HwTx> = stats
        .iter_mut()
        .enumerate()
        .map(|(i, s)| {
            let mut tx = HwTx::begin(h, &cfg, s, &mut split_stream(1, i, 0));
            tx.subscribe_lock(hytm::GLOBAL_LOCK_ADDR).unwrap();
            tx.write(8 + 8 * i, 1).unwrap();
            tx
        })
        .collect();
    let mut late_stats = ThreadStats::default();
    let lock = sys.global_lock();
    assert_eq!(lock.enter(), 1);
    for tx in &txs {
        assert_eq!(tx.abort_cause(), None);
        assert_eq!(
            tx.status(),
            hytm::htm::HwStatus::Doomed(AbortCause::LockSubscription)
        );
    }
    // Subscribing while an episode is running fails at once.
    let mut late = HwTx::begin(h, &cfg, &mut late_stats, &mut split_stream(1, 9, 0));
    assert_eq!(
        late.subscribe_lock(hytm::GLOBAL_LOCK_ADDR),
        Err(AbortCause::LockSubscription)
    );
    drop(late);
    for tx in txs.drain(..) {
        assert_eq!(tx.commit(), Err(AbortCause::LockSubscription));
    }
    // A second overlapping episode keeps the counter up until both leave.
    assert_eq!(lock.enter(), 2);
    assert_eq!(lock.exit().unwrap(), 1);
    assert_eq!(lock.exit().unwrap(), 0);
    assert!(lock.exit().is_err());
    assert_eq!(lock.value(), 0);
    assert!((1..8).all(|l| h.record(l).unwrap().version == 0));
    drop(txs);
    assert!(stats.iter().all(|s| s.htm_aborts_lock_subscription == 1));
}

#[test]
fn dyad_uses_fewer_retries_than_rnd_on_capacity_heavy_work() {
    let htm = HtmConfig::with_caps(512, 2);
    let dyad = PolicyConfig::new(PolicyKind::DyAdHyTm)
        .with_retries(RetrySpec::Fixed(10))
        .with_htm(htm.clone());
    let rnd = PolicyConfig::new(PolicyKind::RndHyTm).with_htm(htm);
    let (_, a) = traced_run(&dyad, 2, 200, 3);
    let (_, b) = traced_run(&rnd, 2, 200, 3);
    let retries = |c: &[ThreadCtx]| c.iter().map(|c| c.stats.htm_retries).sum::<u64>();
    assert!(
        retries(&a) < retries(&b),
        "{} vs {}",
        retries(&a),
        retries(&b)
    );
}

#[test]
fn hle_never_speculates_twice() {
    let cfg = PolicyConfig::new(PolicyKind::Hle).with_htm(HtmConfig {
        spurious_abort_probability: 0.5,
        write_capacity: 2,
        ..HtmConfig::default()
    });
    let (_, ctxs) = traced_run(&cfg, 3, 200, 2);
    let t: Vec<_> = traces(&ctxs).collect();
    assert_eq!(t.len(), 600);
    assert!(t.iter().all(|t| t.hw_attempts() <= 1));
    assert!(t.iter().any(|t| t.path == PathKind::Lock));
}

#[test]
fn single_thread_counters_are_reproducible() {
    let cfg = PolicyConfig::new(PolicyKind::RndHyTm).with_htm(HtmConfig {
        spurious_abort_probability: 0.3,
        write_capacity: 2,
        rng_seed: 5,
        ..HtmConfig::default()
    });
    let (_, a) = traced_run(&cfg, 1, 300, 3);
    let (_, b) = traced_run(&cfg, 1, 300, 3);
    assert_eq!(a[0].stats, b[0].stats);
    assert_eq!(a[0].trace, b[0].trace);
}
