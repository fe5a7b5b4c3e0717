//! The workload StAdHyTM is tuned on: the generation kernel under
//! RNDHyTM with each candidate range.

use crate::htm::HtmConfig;
use crate::policy::{tune_stad, PolicyConfig, PolicyKind, TrialCost, TuneMetric, TuneReport};
use crate::workload::{generation_kernel, rmat_edges, GraphLayout, KernelOpts, RmatParams};

use super::experiment::ExperimentError;

#[derive(Clone, Debug, PartialEq)]
pub struct TuneSpec {
    pub ranges: Vec<(u32, u32)>,
    pub trials: usize,
    pub seed: u64,
    pub scale: u32,
    pub edgefactor: u32,
    /// With one thread the attempt metric is reproducible.
    pub threads: usize,
    pub htm: HtmConfig,
    pub slots_per_vertex: Option<usize>,
    pub metric: TuneMetric,
}

impl TuneSpec {
    pub fn new(ranges: Vec<(u32, u32)>) -> Self {
        TuneSpec {
            ranges,
            trials: 3,
            seed: 0,
            scale: 10,
            edgefactor: 8,
            threads: 1,
            htm: HtmConfig::default(),
            slots_per_vertex: None,
            metric: TuneMetric::Attempts,
        }
    }
}

pub fn tune_generation(spec: &TuneSpec) -> Result<TuneReport, ExperimentError> {
    spec.htm
        .validate()
        .map_err(crate::policy::PolicyError::from)?;
    let base = RmatParams::new(spec.scale, 0).with_edgefactor(spec.edgefactor);
    base.validate()?;
    let slots = spec
        .slots_per_vertex
        .unwrap_or(4 * spec.edgefactor as usize);
    let layout = GraphLayout::new(
        base.vertices(),
        base.edge_count()?,
        slots,
        crate::memory::DEFAULT_WORDS_PER_LINE,
    )?;
    let mut failure = None;
    let report = tune_stad(
        &spec.ranges,
        spec.trials,
        spec.seed,
        spec.metric,
        |retries, seed| {
            let run = || -> Result<TrialCost, ExperimentError> {
                let edges = rmat_edges(&RmatParams { seed, ..base })?;
                let sys = layout.system()?;
                let cfg = PolicyConfig::new(PolicyKind::RndHyTm)
                    .with_retries(retries)
                    .with_htm(HtmConfig {
                        rng_seed: seed,
                        ..spec.htm.clone()
                    })
                    .with_seed(seed);
                let rep =
                    generation_kernel(&sys, &layout, &edges, &cfg, KernelOpts::new(spec.threads))?;
                let t = rep.total();
                Ok(TrialCost {
                    attempts: t.htm_begins + t.stm_begins + t.lock_commits,
                    elapsed: rep.duration,
                })
            };
            run().unwrap_or_else(|e| {
                failure.get_or_insert(e);
                TrialCost::default()
            })
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
