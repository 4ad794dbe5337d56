//! Monte Carlo estimate: run many independent episodes in parallel and fold
//! them into per-area resilience scores plus running convergence traces.

use super::episode::{run_episode, Episode, EpisodeContext};
use super::metrics::RunningAggregate;
use super::store::StoreError;
use rayon::prelude::*;
use thiserror::Error;

/// Episodes are simulated in fixed-size batches so memory stays bounded on
/// long runs and results fold in index order regardless of thread count.
const BATCH: u64 = 128;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Final score for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaEstimate {
    pub area: u32,
    /// Gust-weighted aggregate resilience.
    pub r: f64,
    /// Episodes in which this area saw at least one gust hour.
    pub n_gust: u64,
    pub n_episodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    pub areas: Vec<AreaEstimate>,
    /// `convergence[area][k]` is the aggregate after episodes `0..=k`.
    pub convergence: Vec<Vec<f64>>,
}

/// Run `n_episodes` episodes and aggregate them. `on_episode` sees every
/// episode in index order (the store writer hooks in here); episode `i` is a
/// pure function of `(ctx.master_seed, i)`, so the outcome is byte-identical
/// across thread counts.
pub fn run_estimate(
    ctx: &EpisodeContext,
    n_episodes: u64,
    mut on_episode: impl FnMut(&Episode) -> Result<(), SimError>,
) -> Result<EstimateOutcome, SimError> {
    assert!(n_episodes >= 1, "need at least one episode");
    let n_areas = ctx.graph.n_areas();
    let lambda = ctx.sim.lambda;
    let mut running = vec![RunningAggregate::default(); n_areas];
    let mut convergence = vec![Vec::with_capacity(n_episodes as usize); n_areas];

    let mut start = 0u64;
    while start < n_episodes {
        let end = (start + BATCH).min(n_episodes);
        let batch: Vec<Episode> = (start..end)
            .into_par_iter()
            .map(|i| run_episode(ctx, i))
            .collect();
        for ep in &batch {
            let scores = ep.area_resilience();
            for a in 0..n_areas {
                running[a].push(scores[a], ep.gust_areas[a]);
                convergence[a].push(running[a].value(lambda));
            }
            on_episode(ep)?;
        }
        start = end;
    }

    let areas = running
        .iter()
        .enumerate()
        .map(|(a, agg)| AreaEstimate {
            area: a as u32,
            r: agg.value(lambda),
            n_gust: agg.n_gust(),
            n_episodes: agg.n_episodes(),
        })
        .collect();
    Ok(EstimateOutcome { areas, convergence })
}
