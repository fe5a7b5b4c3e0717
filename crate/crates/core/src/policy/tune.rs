//! Offline design-space sweep that fixes the StAdHyTM retry budget.

use std::time::Duration;

use rand::RngCore;

use super::{PolicyError, RetrySpec};
use crate::context::split_stream;

/// What one tuning trial cost.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialCost {
    /// Hardware attempts + software attempts + lock acquisitions.
    pub attempts: u64,
    pub elapsed: Duration,
}

/// How trials are ranked. `Attempts` is schedule-independent on a single
/// thread and therefore reproducible; `WallClock` is the literal completion
/// time and is not.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum TuneMetric {
    #[default]
    Attempts,
    WallClock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneReport {
    pub chosen: RetrySpec,
    pub best_range: (u32, u32),
    /// Mean metric per range, in input order.
    pub means: Vec<((u32, u32), f64)>,
}

impl TrialCost {
    fn score(&self, metric: TuneMetric) -> f64 {
        match metric {
            TuneMetric::Attempts => self.attempts as f64,
            TuneMetric::WallClock => self.elapsed.as_secs_f64(),
        }
    }
}

/// Runs `trials` trials of the tuning workload under each range and returns
/// `Tuned(midpoint)` of the range with the lowest mean. Ties go to the
/// earlier range. `run_trial` receives the range as a
/// [`RetrySpec::UniformRange`] and a trial seed; the same seeds are used for
/// every range.
pub fn tune_stad(
    ranges: &[(u32, u32)],
    trials: usize,
    seed: u64,
    metric: TuneMetric,
    mut run_trial: impl FnMut(RetrySpec, u64) -> TrialCost,
) -> Result<TuneReport, PolicyError> {
    if ranges.is_empty() {
        return Err(PolicyError::EmptyRanges);
    }
    if trials == 0 {
        return Err(PolicyError::ZeroTrials);
    }
    let specs = ranges
        .iter()
        .map(|&(lo, hi)| RetrySpec::range(lo, hi))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = split_stream(seed, 0, 0);
    let seeds: Vec<u64> = (0..trials).map(|_| rng.next_u64()).collect();

    let mut means = Vec::with_capacity(ranges.len());
    for (&range, &spec) in ranges.iter().zip(&specs) {
        let total: f64 = seeds
            .iter()
            .map(|&s| run_trial(spec, s).score(metric))
            .sum();
        means.push((range, total / trials as f64));
    }
    let mut best = 0;
    for (i, m) in means.iter().enumerate() {
        if m.1 < means[best].1 {
            best = i;
        }
    }
    let (lo, hi) = means[best].0;
    Ok(TuneReport {
        chosen: RetrySpec::Tuned((lo + hi) / 2),
        best_range: (lo, hi),
        means,
    })
}
