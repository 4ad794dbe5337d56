//! One Monte Carlo episode: sample a storm, break lines hour by hour, then
//! restore them with a fixed crew fleet in criticality order, recording the
//! served-fraction curve of every area from hour 0 to the horizon.

use super::connectivity::{served_counts, ConnectivityTracker};
use super::metrics::trapezoid_resilience;
use crate::fragility::{sample_failures, FragilityModel};
use crate::network::NetworkGraph;
use crate::rng::{stream, StreamPurpose};
use crate::weather::{sample_storm, scenario_fields, StormConfig, WindDistribution};
use rand::Rng;
use serde::Deserialize;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Curve length in hours; resilience integrates served fraction over
    /// `0..=horizon_h`.
    pub horizon_h: u32,
    /// Weight of gust episodes in the aggregate score.
    pub lambda: f64,
    /// Average household draw used when islanded generation serves customers.
    pub demand_kw_per_customer: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon_h: 168,
            lambda: 0.8,
            demand_kw_per_customer: 1.2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrewConfig {
    pub n_crews: u32,
    /// Repair duration is uniform over `repair_min_h..=repair_max_h` hours.
    pub repair_min_h: u32,
    pub repair_max_h: u32,
}

impl Default for CrewConfig {
    fn default() -> Self {
        Self {
            n_crews: 24,
            repair_min_h: 2,
            repair_max_h: 6,
        }
    }
}

/// Everything an episode needs, shared read-only across workers.
#[derive(Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub graph: &'a NetworkGraph,
    pub wind: &'a WindDistribution,
    pub storm: &'a StormConfig,
    pub fragility: &'a FragilityModel,
    pub sim: &'a SimConfig,
    pub crews: &'a CrewConfig,
    pub master_seed: u64,
}

/// The full record of one episode: what broke when, what was repaired when,
/// whether each area saw gusts, and the resulting service curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub index: u64,
    pub duration_h: u32,
    pub gust_areas: Vec<bool>,
    /// `(hour, edge)` failures, ascending hour then edge id.
    pub failures: Vec<(u32, u32)>,
    /// `(hour, edge)` completed repairs in completion order.
    pub repairs: Vec<(u32, u32)>,
    /// `curves[area][t]` served fraction at hour `t` in `0..=horizon`.
    pub curves: Vec<Vec<f64>>,
}

impl Episode {
    /// Trapezoid resilience per area.
    pub fn area_resilience(&self) -> Vec<f64> {
        self.curves.iter().map(|c| trapezoid_resilience(c)).collect()
    }
}

#[inline]
fn fraction(served: u64, total: u64) -> f64 {
    if total == 0 {
        1.0
    } else {
        served as f64 / total as f64
    }
}

/// Restoration outcome for a given damage state.
pub struct RestorationResult {
    /// `(hour, edge)` completion events.
    pub repairs: Vec<(u32, u32)>,
    /// Served-fraction rows for hours `start_h+1 ..= horizon_h`.
    pub curve_tail: Vec<Vec<f64>>,
    /// `(start, finish, crew, edge)` for every claim, for auditing crew
    /// concurrency; not persisted.
    pub claims: Vec<(u32, u32, u32, u32)>,
}

struct Restoration<'a> {
    graph: &'a NetworkGraph,
    tracker: ConnectivityTracker,
    /// Failed edges, ascending id; the claim scan walks this order so
    /// criticality ties resolve to the lowest edge id.
    pool: Vec<u32>,
    claimed: Vec<bool>,
    unclaimed: usize,
    /// In-flight repairs keyed `(finish_hour, crew, edge)`.
    events: BinaryHeap<Reverse<(u32, u32, u32)>>,
    claims: Vec<(u32, u32, u32, u32)>,
}

impl Restoration<'_> {
    /// Give `crew` the unclaimed failed edge with the highest criticality.
    /// Crews idle once nothing is unclaimed or nobody is left unserved.
    fn claim(&mut self, t: u32, crew: u32, cfg: &CrewConfig, rng: &mut impl Rng) {
        if self.unclaimed == 0 || self.tracker.total_unserved() == 0 {
            return;
        }
        let mut best_i = usize::MAX;
        let mut best_c = 0u64;
        for i in 0..self.pool.len() {
            if self.claimed[i] {
                continue;
            }
            let c = self.tracker.criticality(self.graph, self.pool[i]);
            if best_i == usize::MAX || c > best_c {
                best_i = i;
                best_c = c;
            }
        }
        self.claimed[best_i] = true;
        self.unclaimed -= 1;
        let repair_h = rng.gen_range(cfg.repair_min_h..=cfg.repair_max_h);
        let edge = self.pool[best_i];
        self.events.push(Reverse((t + repair_h, crew, edge)));
        self.claims.push((t, t + repair_h, crew, edge));
    }
}

/// Run the crew phase on a damage state: `intact` marks surviving edges, the
/// crews start claiming at `start_h`, and curves are recorded through
/// `horizon_h`. Completions within one hour apply in crew order before any
/// crew claims its next edge, and the hour's curve row is recorded after the
/// dust settles.
pub fn restore(
    graph: &NetworkGraph,
    intact: &[bool],
    start_h: u32,
    horizon_h: u32,
    crews: &CrewConfig,
    rng: &mut impl Rng,
) -> RestorationResult {
    assert!(crews.n_crews >= 1);
    assert!(crews.repair_min_h >= 1 && crews.repair_min_h <= crews.repair_max_h);
    assert!(start_h < horizon_h);
    let totals = graph.area_customers().to_vec();
    let n_areas = graph.n_areas();
    let pool: Vec<u32> = (0..graph.n_edges() as u32)
        .filter(|&e| !intact[e as usize])
        .collect();
    let n_failed = pool.len();
    let mut rest = Restoration {
        graph,
        tracker: ConnectivityTracker::build(graph, intact),
        claimed: vec![false; n_failed],
        unclaimed: n_failed,
        pool,
        events: BinaryHeap::new(),
        claims: Vec::new(),
    };
    let mut repairs = Vec::new();
    let mut curve_tail: Vec<Vec<f64>> = vec![Vec::new(); n_areas];

    for crew in 0..crews.n_crews {
        rest.claim(start_h, crew, crews, rng);
    }
    for t in start_h + 1..=horizon_h {
        let mut finished_crews = Vec::new();
        while let Some(&Reverse((finish, crew, edge))) = rest.events.peek() {
            if finish != t {
                break;
            }
            rest.events.pop();
            rest.tracker.union_edge(graph, edge);
            repairs.push((t, edge));
            finished_crews.push(crew);
        }
        for crew in finished_crews {
            rest.claim(t, crew, crews, rng);
        }
        for a in 0..n_areas {
            curve_tail[a].push(fraction(rest.tracker.served()[a], totals[a]));
        }
        if rest.tracker.total_unserved() == 0 && rest.events.is_empty() {
            // Steady state: service is full (or nothing left can change it);
            // pad the remaining hours with the settled values.
            for row in curve_tail.iter_mut() {
                let v = *row.last().expect("at least one hour recorded");
                row.resize((horizon_h - start_h) as usize, v);
            }
            break;
        }
    }
    RestorationResult {
        repairs,
        curve_tail,
        claims: rest.claims,
    }
}

/// Simulate episode `index`. Pure in `(master_seed, index)`: every random
/// draw comes from the episode's own stream in a pinned order (storm, then
/// hourly failures, then repair durations in claim order), so results are
/// identical no matter how episodes are scheduled across threads.
pub fn run_episode(ctx: &EpisodeContext, index: u64) -> Episode {
    let g = ctx.graph;
    let n_areas = g.n_areas();
    let horizon = ctx.sim.horizon_h;
    assert!(
        horizon > ctx.storm.max_duration_h,
        "horizon must extend past the longest storm"
    );
    let mut rng = stream(ctx.master_seed, StreamPurpose::Episode, index);
    let scenario = sample_storm(g, ctx.wind, ctx.storm, &mut rng);
    let fields = scenario_fields(&scenario, &g.patch_grid)
        .expect("storm observation points sit inside the patch grid");

    let totals = g.area_customers();
    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon as usize + 1); n_areas];
    for row in curves.iter_mut() {
        row.push(1.0); // hour 0: pre-storm, every assigned load is connected
    }

    let mut intact = vec![true; g.n_edges()];
    let mut failures: Vec<(u32, u32)> = Vec::new();
    for h in 1..=scenario.duration_h {
        let broken = sample_failures(
            g,
            ctx.fragility,
            &fields[(h - 1) as usize],
            &intact,
            &mut rng,
        );
        for &e in &broken {
            intact[e as usize] = false;
            failures.push((h, e));
        }
        let served = served_counts(g, &intact);
        for a in 0..n_areas {
            curves[a].push(fraction(served[a], totals[a]));
        }
    }

    let restoration = restore(g, &intact, scenario.duration_h, horizon, ctx.crews, &mut rng);
    for (a, row) in curves.iter_mut().enumerate() {
        row.extend_from_slice(&restoration.curve_tail[a]);
        debug_assert_eq!(row.len(), horizon as usize + 1);
    }

    Episode {
        index,
        duration_h: scenario.duration_h,
        gust_areas: (0..n_areas as u32).map(|a| scenario.area_had_gust(a)).collect(),
        failures,
        repairs: restoration.repairs,
        curves,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragility::FragilityCurve;
    use crate::geo::{GeoPoint, PatchGrid, PlanarPoint};
    use crate::network::{
        generate_testbed, synthesize, Edge, NetworkInputs, Node, NodeKind, SynthConfig,
        TestbedSpec,
    };
    use crate::weather::LogNormalParams;

    /// S(0) --e0-- L(1, 5 customers) --e1-- L(2, 3 customers)
    fn chain_graph() -> NetworkGraph {
        let node = |kind, x: f64, customers| Node {
            kind,
            pos: PlanarPoint::new(x, 0.0),
            customers,
            area: Some(0),
        };
        let edge = |id: u32| Edge {
            a: id,
            b: id + 1,
            length: 30.0,
            tree_cover: 0.0,
            patch: 0,
        };
        NetworkGraph::new(
            vec![
                node(NodeKind::Substation, 0.0, 0),
                node(NodeKind::Load, 30.0, 5),
                node(NodeKind::Load, 60.0, 3),
            ],
            vec![edge(0), edge(1)],
            vec![0],
            vec!["SUB1".into()],
            GeoPoint::new(42.0, -83.0).unwrap(),
            PatchGrid::new(PlanarPoint::new(0.0, 0.0), 500.0, 1, 1),
        )
    }

    #[test]
    fn single_crew_restores_in_criticality_order_with_exact_timing() {
        let g = chain_graph();
        let crews = CrewConfig {
            n_crews: 1,
            repair_min_h: 2,
            repair_max_h: 2, // degenerate uniform: exactly 2 h per repair
        };
        let mut rng = stream(1, StreamPurpose::Episode, 0);
        let got = restore(&g, &[false, false], 4, 12, &crews, &mut rng);
        // t=4 claim e0 (criticality 5 beats 0), done t=6; claim e1, done t=8.
        assert_eq!(got.repairs, vec![(6, 0), (8, 1)]);
        // Hours 5..=12 for the single area: dark, dark+e0, flat, full...
        assert_eq!(
            got.curve_tail[0],
            vec![0.0, 5.0 / 8.0, 5.0 / 8.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(got.claims, vec![(4, 6, 0, 0), (6, 8, 0, 1)]);
    }

    #[test]
    fn two_crews_work_in_parallel() {
        let g = chain_graph();
        let crews = CrewConfig {
            n_crews: 2,
            repair_min_h: 2,
            repair_max_h: 2,
        };
        let mut rng = stream(1, StreamPurpose::Episode, 0);
        let got = restore(&g, &[false, false], 4, 12, &crews, &mut rng);
        // Crew 0 takes e0, crew 1 takes e1 (zero criticality now, but the
        // fleet never idles while edges remain); both land at t=6.
        assert_eq!(got.repairs, vec![(6, 0), (6, 1)]);
        assert_eq!(got.curve_tail[0][0], 0.0);
        assert_eq!(got.curve_tail[0][1], 1.0);
    }

    fn testbed_graph() -> NetworkGraph {
        let spec = TestbedSpec {
            rows: 8,
            cols: 8,
            n_buildings: 250,
            n_substations: 3,
            ..TestbedSpec::default()
        };
        let data = generate_testbed(&spec, 99);
        synthesize(
            &NetworkInputs {
                substations: data.substations,
                roads: data.roads,
                buildings: data.buildings,
                tree: data.tree,
            },
            &SynthConfig::default(),
        )
        .unwrap()
        .0
    }

    fn test_ctx(graph: &NetworkGraph) -> EpisodeContext<'_> {
        static WIND: WindDistribution = WindDistribution {
            gust: LogNormalParams { mu: 3.0, sigma: 0.35 },
            sustained: LogNormalParams { mu: 2.08, sigma: 0.3 },
        };
        static STORM: StormConfig = StormConfig {
            min_duration_h: 4,
            max_duration_h: 12,
            gust_fraction: 0.25,
        };
        static FR: FragilityModel = FragilityModel {
            wind: FragilityCurve::DEFAULT_WIND,
            tree: FragilityCurve::DEFAULT_TREE,
            alpha: 1.0,
        };
        static SIM: SimConfig = SimConfig {
            horizon_h: 72,
            lambda: 0.8,
            demand_kw_per_customer: 1.2,
        };
        static CREWS: CrewConfig = CrewConfig {
            n_crews: 4,
            repair_min_h: 2,
            repair_max_h: 6,
        };
        EpisodeContext {
            graph,
            wind: &WIND,
            storm: &STORM,
            fragility: &FR,
            sim: &SIM,
            crews: &CREWS,
            master_seed: 7,
        }
    }

    #[test]
    fn episodes_are_deterministic_in_seed_and_index() {
        let g = testbed_graph();
        let ctx = test_ctx(&g);
        let a = run_episode(&ctx, 3);
        let b = run_episode(&ctx, 3);
        assert_eq!(a, b);
        let c = run_episode(&ctx, 4);
        assert_ne!(a.curves, c.curves);
    }

    #[test]
    fn curves_are_well_formed_and_recover_monotonically() {
        let g = testbed_graph();
        let ctx = test_ctx(&g);
        for index in 0..12 {
            let ep = run_episode(&ctx, index);
            assert_eq!(ep.curves.len(), g.n_areas());
            for curve in &ep.curves {
                assert_eq!(curve.len(), 73);
                assert_eq!(curve[0], 1.0, "pre-storm service is full");
                for &p in curve {
                    assert!((0.0..=1.0).contains(&p));
                }
                // after the storm ends the curve never decreases
                for w in curve[ep.duration_h as usize..].windows(2) {
                    assert!(w[1] >= w[0] - 1e-15, "service dipped during restoration");
                }
            }
            // failures are unique and stamped within the storm
            let mut seen = std::collections::HashSet::new();
            for &(h, e) in &ep.failures {
                assert!((1..=ep.duration_h).contains(&h));
                assert!(seen.insert(e), "edge {e} failed twice");
            }
            for &(h, _) in &ep.repairs {
                assert!(h > ep.duration_h && h <= 72);
            }
        }
    }

    #[test]
    fn crew_concurrency_never_exceeds_the_fleet() {
        let g = testbed_graph();
        let crews = CrewConfig {
            n_crews: 3,
            repair_min_h: 1,
            repair_max_h: 5,
        };
        let mut rng = stream(5, StreamPurpose::Episode, 1);
        // Heavy damage: fail a third of all edges.
        use rand::Rng as _;
        let intact: Vec<bool> = (0..g.n_edges()).map(|_| rng.gen_bool(0.67)).collect();
        let got = restore(&g, &intact, 6, 168, &crews, &mut rng);
        for t in 6..168u32 {
            let busy = got
                .claims
                .iter()
                .filter(|&&(s, f, _, _)| s <= t && t < f)
                .count();
            assert!(busy <= 3, "{busy} crews busy at hour {t}");
        }
        // Every claim belongs to a real crew, and exactly the claims whose
        // finish lands inside the horizon show up as completed repairs.
        assert!(got.claims.iter().all(|&(_, _, c, _)| c < 3));
        let finished = got.claims.iter().filter(|&&(_, f, _, _)| f <= 168).count();
        assert_eq!(finished, got.repairs.len());
        assert!(got.repairs.len() <= got.claims.len());
    }

    #[test]
    fn repairs_prefer_higher_criticality_at_claim_time() {
        // Star: substation with two branches, one serving 10 customers behind
        // e_big, one serving 1 customer behind e_small. One crew must take
        // e_big first.
        let node = |kind, x: f64, customers| Node {
            kind,
            pos: PlanarPoint::new(x, 0.0),
            customers,
            area: Some(0),
        };
        let g = NetworkGraph::new(
            vec![
                node(NodeKind::Substation, 0.0, 0),
                node(NodeKind::Load, -30.0, 10),
                node(NodeKind::Load, 30.0, 1),
            ],
            vec![
                Edge { a: 0, b: 1, length: 30.0, tree_cover: 0.0, patch: 0 },
                Edge { a: 0, b: 2, length: 30.0, tree_cover: 0.0, patch: 0 },
            ],
            vec![0],
            vec!["SUB1".into()],
            GeoPoint::new(42.0, -83.0).unwrap(),
            PatchGrid::new(PlanarPoint::new(0.0, 0.0), 500.0, 1, 1),
        );
        let crews = CrewConfig { n_crews: 1, repair_min_h: 1, repair_max_h: 1 };
        let mut rng = stream(2, StreamPurpose::Episode, 0);
        let got = restore(&g, &[false, false], 2, 10, &crews, &mut rng);
        assert_eq!(got.repairs, vec![(3, 0), (4, 1)]);
    }
}
