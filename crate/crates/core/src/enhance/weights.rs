//! Candidate-location sampling weights: how often a node lost power during
//! the recorded episodes, scaled by its degree and normalized into a
//! probability distribution over non-substation nodes.

use super::{DegreeWeighting, GaConfig};
use crate::network::{NetworkGraph, NodeKind};
use crate::simulation::connectivity::{find, union};
use crate::simulation::Episode;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rayon::prelude::*;

/// Every candidate keeps at least this much pre-normalization mass so the
/// support covers all non-substation nodes.
const EPSILON_FLOOR: f64 = 1e-6;

/// Per-episode outage counts: how many episodes each node spent disconnected
/// from its own area's substation. Damage only accumulates while the storm
/// runs, so a node lost power at some point iff it is unserved in the
/// storm-end damage state.
pub fn outage_counts(graph: &NetworkGraph, episodes: &[Episode]) -> Vec<u32> {
    let n = graph.n_nodes();
    episodes
        .par_iter()
        .fold(
            || vec![0u32; n],
            |mut counts, ep| {
                let mut parent: Vec<u32> = (0..n as u32).collect();
                let mut rank = vec![0u8; n];
                let failed: Vec<bool> = {
                    let mut f = vec![false; graph.n_edges()];
                    for &(_, e) in &ep.failures {
                        f[e as usize] = true;
                    }
                    f
                };
                for (eid, e) in graph.edges.iter().enumerate() {
                    if !failed[eid] {
                        union(&mut parent, &mut rank, e.a, e.b);
                    }
                }
                let sub_roots: Vec<u32> = graph
                    .substations
                    .iter()
                    .map(|&s| find(&mut parent, s))
                    .collect();
                for (id, count) in counts.iter_mut().enumerate() {
                    let Some(a) = graph.nodes[id].area else { continue };
                    if find(&mut parent, id as u32) != sub_roots[a as usize] {
                        *count += 1;
                    }
                }
                counts
            },
        )
        .reduce(
            || vec![0u32; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// A normalized distribution over candidate nodes, ready to sample from.
pub struct SamplingWeights {
    /// Normalized probability per node; exactly zero for substations.
    pub probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl SamplingWeights {
    /// Wrap explicit per-node weights (normalizing them); the episode-driven
    /// path is [`sampling_weights`].
    pub fn from_probs(mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        assert!(total > 0.0, "weights must have positive mass");
        for p in probs.iter_mut() {
            *p /= total;
        }
        let dist = WeightedIndex::new(&probs).expect("positive mass");
        Self { probs, dist }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        self.dist.sample(rng) as u32
    }
}

/// Build sampling weights from recorded episodes: weight = outage episode
/// count scaled by node degree (direction per config), floored at a small
/// epsilon for every candidate, normalized to sum to one. Substations get
/// exactly zero. All-zero raw weights fall back to uniform over candidates.
pub fn sampling_weights(
    graph: &NetworkGraph,
    episodes: &[Episode],
    cfg: &GaConfig,
) -> SamplingWeights {
    let counts = outage_counts(graph, episodes);
    let mut raw: Vec<f64> = (0..graph.n_nodes())
        .map(|id| {
            if graph.nodes[id].kind == NodeKind::Substation {
                return 0.0;
            }
            let deg = graph.degree(id as u32).max(1) as f64;
            match cfg.degree_weighting {
                DegreeWeighting::Multiply => counts[id] as f64 * deg,
                DegreeWeighting::Divide => counts[id] as f64 / deg,
            }
        })
        .collect();
    let candidate = |id: usize| graph.nodes[id].kind != NodeKind::Substation;
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        for w in raw.iter_mut() {
            *w /= total;
        }
    } else {
        // nothing ever lost power: uniform over candidates
        let n_cand = (0..graph.n_nodes()).filter(|&id| candidate(id)).count();
        for (id, w) in raw.iter_mut().enumerate() {
            if candidate(id) {
                *w = 1.0 / n_cand as f64;
            }
        }
    }
    for (id, w) in raw.iter_mut().enumerate() {
        if candidate(id) && *w < EPSILON_FLOOR {
            *w = EPSILON_FLOOR;
        }
    }
    let total: f64 = raw.iter().sum();
    for w in raw.iter_mut() {
        *w /= total;
    }
    let dist = WeightedIndex::new(&raw).expect("weights are positive on candidates");
    SamplingWeights { probs: raw, dist }
}
