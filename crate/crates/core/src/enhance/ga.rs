//! The genetic algorithm itself: weighted location proposal with proximity
//! rejection, global tournament selection over the current generation plus
//! the archive of all previous generation bests, placement-level crossover,
//! and per-placement mutation.

use super::replay::fitness;
use super::weights::{sampling_weights, SamplingWeights};
use super::{DerKind, DerPlacement, DerPlan, GaConfig};
use crate::network::NetworkGraph;
use crate::rng::{stream, StreamPurpose};
use crate::simulation::{Episode, SimConfig};
use rand::Rng;
use rayon::prelude::*;
use std::collections::HashSet;

/// Proposals farther than this many hops from every selected node are always
/// accepted; the rejection probability 1/K is below 4% there anyway.
const BFS_HOP_CAP: u32 = 32;
/// Proximity rejections are retried this many times before the last draw is
/// accepted as-is.
const MAX_ATTEMPTS: u32 = 100;

/// The proximity coin: reject a candidate `k` hops from the nearest selected
/// location with probability `1/k`. `k = 1` always rejects.
pub fn proximity_rejects(k: u32, rng: &mut impl Rng) -> bool {
    debug_assert!(k >= 1);
    rng.gen_bool(1.0 / k as f64)
}

/// Hop distance from `from` to the nearest node in `selected`, or `None` if
/// none lies within `cap` hops.
fn hop_distance(graph: &NetworkGraph, from: u32, selected: &[u32], cap: u32) -> Option<u32> {
    if selected.is_empty() {
        return None;
    }
    if selected.contains(&from) {
        return Some(0);
    }
    let mut visited: HashSet<u32> = HashSet::from([from]);
    let mut frontier = vec![from];
    for depth in 1..=cap {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(_, v) in graph.neighbors(u) {
                if visited.insert(v) {
                    if selected.contains(&v) {
                        return Some(depth);
                    }
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
    }
    None
}

/// Draw a new location from the sampling weights, rejecting draws that land
/// within `K` hops of an already-selected node with probability `1/K`.
/// Already-selected nodes are redrawn outright (a node hosts one placement).
/// After [`MAX_ATTEMPTS`] proximity rejections the last draw is accepted.
/// Returns `None` only when every positive-weight candidate is already
/// selected.
pub fn propose_location(
    w: &SamplingWeights,
    selected: &[u32],
    graph: &NetworkGraph,
    rng: &mut impl Rng,
) -> Option<u32> {
    let mut attempts = 0;
    // Draws landing on selected nodes don't count as attempts; bound them
    // separately so degenerate weights can't spin forever.
    let mut draws = 0;
    while draws < 10 * MAX_ATTEMPTS {
        let node = w.sample(rng);
        draws += 1;
        if selected.contains(&node) {
            continue;
        }
        attempts += 1;
        match hop_distance(graph, node, selected, BFS_HOP_CAP) {
            Some(k) if attempts < MAX_ATTEMPTS && proximity_rejects(k, rng) => continue,
            _ => return Some(node),
        }
    }
    (0..graph.n_nodes() as u32).find(|id| w.probs[*id as usize] > 0.0 && !selected.contains(id))
}

fn random_plan(
    graph: &NetworkGraph,
    w: &SamplingWeights,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) -> DerPlan {
    let n = rng.gen_range(1..=cfg.max_placements);
    let mut placements = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let Some(node) = propose_location(w, &nodes, graph, rng) else { break };
        nodes.push(node);
        placements.push(DerPlacement {
            node_id: node,
            kind: if rng.gen_bool(0.5) { DerKind::Solar } else { DerKind::Battery },
            capacity_kw: rng.gen_range(cfg.cap_min_kw..=cfg.cap_max_kw),
        });
    }
    DerPlan { placements }
}

/// Uniform placement-level crossover: each parental placement is inherited
/// with probability 1/2, subject to the same proximity rejection as fresh
/// proposals. An empty child falls back to a copy of the first parent.
fn crossover(
    graph: &NetworkGraph,
    a: &DerPlan,
    b: &DerPlan,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) -> DerPlan {
    let mut placements: Vec<DerPlacement> = Vec::new();
    let mut nodes: Vec<u32> = Vec::new();
    for p in a.placements.iter().chain(b.placements.iter()) {
        if placements.len() == cfg.max_placements {
            break;
        }
        if !rng.gen_bool(0.5) {
            continue;
        }
        if nodes.contains(&p.node_id) {
            continue;
        }
        if let Some(k) = hop_distance(graph, p.node_id, &nodes, BFS_HOP_CAP) {
            if proximity_rejects(k, rng) {
                continue;
            }
        }
        nodes.push(p.node_id);
        placements.push(p.clone());
    }
    if placements.is_empty() {
        return a.clone();
    }
    DerPlan { placements }
}

fn mutate(
    graph: &NetworkGraph,
    plan: &mut DerPlan,
    w: &SamplingWeights,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) {
    for i in 0..plan.placements.len() {
        if rng.gen_bool(cfg.p_relocate) {
            let others: Vec<u32> = plan
                .placements
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p.node_id)
                .collect();
            if let Some(node) = propose_location(w, &others, graph, rng) {
                plan.placements[i].node_id = node;
            }
        }
        if rng.gen_bool(cfg.p_capacity) {
            let scale = rng.gen_range(0.8..=1.2);
            let c = &mut plan.placements[i].capacity_kw;
            *c = (*c * scale).clamp(cfg.cap_min_kw, cfg.cap_max_kw);
        }
        if rng.gen_bool(cfg.p_kind) {
            let k = &mut plan.placements[i].kind;
            *k = match k {
                DerKind::Solar => DerKind::Battery,
                DerKind::Battery => DerKind::Solar,
            };
        }
    }
}

/// Tournament of `k` uniform draws over the combined pool; the best fitness
/// wins, first drawn on ties.
fn tournament<'p>(pool: &[(&'p DerPlan, f64)], k: usize, rng: &mut impl Rng) -> &'p DerPlan {
    let mut best: Option<(f64, &DerPlan)> = None;
    for _ in 0..k {
        let (p, f) = pool[rng.gen_range(0..pool.len())];
        if best.is_none_or(|(bf, _)| f > bf) {
            best = Some((f, p));
        }
    }
    best.expect("k >= 1").1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: u32,
    /// Best fitness seen so far (archive best), non-decreasing by
    /// construction.
    pub best_fitness: f64,
    /// Mean fitness of the current generation.
    pub mean_fitness: f64,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub best: DerPlan,
    pub best_fitness: f64,
    /// Fitness of the empty plan over the same episodes and areas.
    pub baseline_fitness: f64,
    pub history: Vec<GenerationStats>,
}

/// Run the GA. Fitness evaluations within a generation run in parallel; the
/// breeding loop itself is sequential on one seeded stream, so the outcome is
/// a pure function of `(graph, episodes, cfg, master_seed)` regardless of
/// thread count.
pub fn evolve(
    graph: &NetworkGraph,
    episodes: &[Episode],
    cfg: &GaConfig,
    sim: &SimConfig,
    area_filter: Option<&[u32]>,
    master_seed: u64,
) -> EvolveOutcome {
    assert!(!episodes.is_empty(), "need recorded episodes to replay");
    assert!(cfg.population >= 2 && cfg.tournament_k >= 1 && cfg.generations >= 1);
    assert!(cfg.max_placements >= 1 && cfg.cap_min_kw > 0.0 && cfg.cap_min_kw <= cfg.cap_max_kw);
    let weights = sampling_weights(graph, episodes, cfg);
    let mut rng = stream(master_seed, StreamPurpose::Evolve, 0);
    let baseline_fitness = fitness(graph, episodes, &DerPlan::default(), cfg, sim, area_filter);

    let mut population: Vec<DerPlan> = (0..cfg.population)
        .map(|_| random_plan(graph, &weights, cfg, &mut rng))
        .collect();
    // best individual of every generation so far, in generation order
    let mut archive: Vec<(DerPlan, f64)> = Vec::new();
    let mut history = Vec::with_capacity(cfg.generations as usize);
    let mut best_so_far = f64::NEG_INFINITY;

    for generation in 1..=cfg.generations {
        debug_assert!(population.iter().all(|p| {
            p.placements.len() <= cfg.max_placements
                && p.placements
                    .iter()
                    .all(|pl| (cfg.cap_min_kw..=cfg.cap_max_kw).contains(&pl.capacity_kw))
        }));
        let fits: Vec<f64> = population
            .par_iter()
            .map(|p| fitness(graph, episodes, p, cfg, sim, area_filter))
            .collect();
        let mut gen_best = 0;
        for i in 1..fits.len() {
            if fits[i] > fits[gen_best] {
                gen_best = i;
            }
        }
        archive.push((population[gen_best].clone(), fits[gen_best]));
        best_so_far = best_so_far.max(fits[gen_best]);
        history.push(GenerationStats {
            generation,
            best_fitness: best_so_far,
            mean_fitness: fits.iter().sum::<f64>() / fits.len() as f64,
        });
        if generation == cfg.generations {
            break;
        }

        let mut next = Vec::with_capacity(cfg.population);
        {
            // selection pool: current generation plus every archived best
            let pool: Vec<(&DerPlan, f64)> = population
                .iter()
                .zip(fits.iter().copied())
                .chain(archive.iter().map(|(p, f)| (p, *f)))
                .collect();
            let elite = archive
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("fitness comparable"))
                .expect("archive non-empty");
            next.push(elite.0.clone());
            while next.len() < cfg.population {
                let pa = tournament(&pool, cfg.tournament_k, &mut rng);
                let pb = tournament(&pool, cfg.tournament_k, &mut rng);
                let mut child = crossover(graph, pa, pb, cfg, &mut rng);
                mutate(graph, &mut child, &weights, cfg, &mut rng);
                next.push(child);
            }
        }
        population = next;
    }

    // non-decreasing by construction; promise it to callers anyway
    debug_assert!(history.windows(2).all(|w| w[1].best_fitness >= w[0].best_fitness));
    let (best, best_fitness) = archive
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("fitness comparable"))
        .expect("at least one generation ran");
    EvolveOutcome { best, best_fitness, baseline_fitness, history }
}
