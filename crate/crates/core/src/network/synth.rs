//! Network synthesis: turn road polylines, building footprints, substation
//! sites, and a canopy raster into a distribution graph.
//!
//! The pipeline runs five steps in order: densify roads into pole chains,
//! estimate customers per building, connect buildings and substations to
//! their nearest pole, assign every node to its closest substation, and
//! merge same-pole same-side buildings into aggregate loads.

use super::ingest::{BuildingRec, NetworkInputs, TreeRaster};
use super::{Edge, GraphError, NetworkGraph, Node, NodeKind};
use crate::geo::{project, unproject, GeoError, GeoPoint, GridIndex, PatchGrid, PlanarPoint};
use serde::Deserialize;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use thiserror::Error;

/// Segments shorter than this are treated as degenerate input noise.
const MIN_SEGMENT_M: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no usable road geometry; cannot build a network")]
    NoRoads,
    #[error("graph invariant violated after synthesis: {0}")]
    Invalid(#[from] GraphError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Floor-area-to-customer conversion factors.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomerModel {
    pub res_m2_per_customer: f64,
    pub nonres_m2_per_customer: f64,
}

impl Default for CustomerModel {
    fn default() -> Self {
        Self {
            res_m2_per_customer: 150.0,
            nonres_m2_per_customer: 500.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Maximum pole-to-pole span; longer road segments are subdivided.
    pub max_span_m: f64,
    /// Wind-field patch size.
    pub patch_size_m: f64,
    /// Shortest admissible edge; zero-length drops clamp up to this.
    pub min_edge_m: f64,
    pub customers: CustomerModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            max_span_m: 40.0,
            patch_size_m: 500.0,
            min_edge_m: 0.1,
            customers: CustomerModel::default(),
        }
    }
}

/// One road polyline after pole insertion.
#[derive(Debug, Clone)]
pub struct DensifiedRoad {
    /// Points in walk order: input vertices plus inserted poles.
    pub points: Vec<PlanarPoint>,
    /// Parallel to `points`; true where the point is an input vertex
    /// (vertices are shared between polylines, inserted poles are not).
    pub is_vertex: Vec<bool>,
    /// `(from, to, length)` index pairs into `points`.
    pub segments: Vec<(u32, u32, f64)>,
    /// Degenerate input segments dropped.
    pub skipped: usize,
}

/// Subdivide a polyline so no segment exceeds `max_span`. Inserted poles are
/// evenly spaced, so a segment of length `L` becomes `ceil(L / max_span)`
/// pieces of `L / k` each.
pub fn densify_road(polyline: &[PlanarPoint], max_span: f64) -> DensifiedRoad {
    assert!(max_span > 0.0, "max_span must be positive");
    let mut out = DensifiedRoad {
        points: Vec::new(),
        is_vertex: Vec::new(),
        segments: Vec::new(),
        skipped: 0,
    };
    if polyline.is_empty() {
        return out;
    }
    out.points.push(polyline[0]);
    out.is_vertex.push(true);
    for w in polyline.windows(2) {
        let (p, q) = (w[0], w[1]);
        let len = p.dist(&q);
        if len < MIN_SEGMENT_M {
            out.skipped += 1;
            continue;
        }
        let mut k = (len / max_span).ceil() as u32;
        // ceil can land exactly on k while len/k rounds a hair above max_span;
        // one extra pole keeps the span bound airtight.
        if len / k as f64 > max_span {
            k += 1;
        }
        let sub = len / k as f64;
        let start = out.points.len() as u32 - 1;
        for i in 1..k {
            let t = i as f64 / k as f64;
            out.points
                .push(PlanarPoint::new(p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t));
            out.is_vertex.push(false);
        }
        out.points.push(q);
        out.is_vertex.push(true);
        for i in 0..k {
            out.segments.push((start + i, start + i + 1, sub));
        }
    }
    out
}

/// Customers served by one building: `ceil(floor_area / m2_per_customer)`,
/// never below one — every building houses at least one customer.
pub fn estimate_customers(b: &BuildingRec, model: &CustomerModel) -> u32 {
    let per = if b.residential {
        model.res_m2_per_customer
    } else {
        model.nonres_m2_per_customer
    };
    ((b.floor_area_m2 / per).ceil() as u32).max(1)
}

#[derive(Debug, Clone)]
pub struct AreaAssignment {
    /// Area per node; `None` where no substation is reachable.
    pub areas: Vec<Option<u32>>,
    /// Shortest path length to the assigned substation.
    pub dist: Vec<f64>,
    pub unreachable_loads: usize,
}

/// Assign every node to its nearest substation by shortest path length over
/// the line graph. Distance ties break toward the lower area index, so the
/// result is independent of edge iteration order.
pub fn assign_substations(nodes: &[Node], edges: &[Edge], substations: &[u32]) -> AreaAssignment {
    let n = nodes.len();
    let mut adj_starts = vec![0u32; n + 1];
    for e in edges {
        adj_starts[e.a as usize + 1] += 1;
        adj_starts[e.b as usize + 1] += 1;
    }
    for i in 0..n {
        adj_starts[i + 1] += adj_starts[i];
    }
    let mut fill = adj_starts.clone();
    let mut adj = vec![(0u32, 0u32); edges.len() * 2];
    for (eid, e) in edges.iter().enumerate() {
        adj[fill[e.a as usize] as usize] = (eid as u32, e.b);
        fill[e.a as usize] += 1;
        adj[fill[e.b as usize] as usize] = (eid as u32, e.a);
        fill[e.b as usize] += 1;
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut area = vec![u32::MAX; n];
    // Keys are (dist bits, area, node): non-negative f64 bit patterns order
    // like the values, which gives the lexicographic (distance, area) metric
    // directly in the heap.
    let mut heap: BinaryHeap<Reverse<(u64, u32, u32)>> = BinaryHeap::new();
    for (a, &s) in substations.iter().enumerate() {
        dist[s as usize] = 0.0;
        area[s as usize] = a as u32;
        heap.push(Reverse((0.0f64.to_bits(), a as u32, s)));
    }
    while let Some(Reverse((dbits, a, u))) = heap.pop() {
        if dbits != dist[u as usize].to_bits() || a != area[u as usize] {
            continue; // stale entry
        }
        for &(eid, v) in &adj[adj_starts[u as usize] as usize..adj_starts[u as usize + 1] as usize]
        {
            let nd = dist[u as usize] + edges[eid as usize].length;
            let better = nd < dist[v as usize]
                || (nd == dist[v as usize] && a < area[v as usize]);
            if better {
                dist[v as usize] = nd;
                area[v as usize] = a;
                heap.push(Reverse((nd.to_bits(), a, v)));
            }
        }
    }

    let mut unreachable_loads = 0;
    let areas = nodes
        .iter()
        .zip(&area)
        .map(|(node, &a)| {
            if a == u32::MAX {
                if node.kind == NodeKind::Load {
                    unreachable_loads += 1;
                }
                None
            } else {
                Some(a)
            }
        })
        .collect();
    AreaAssignment {
        areas,
        dist,
        unreachable_loads,
    }
}

/// Merge loads that hang off the same pole on the same side of its road into
/// one aggregate load. Customers add, the position is the member centroid,
/// and the new drop edge takes the mean length of the replaced drops. Ids are
/// re-densified, so this must run before anything captures node ids.
pub fn merge_buildings(g: &NetworkGraph) -> NetworkGraph {
    // (pole, side) -> member load ids, in load id order.
    let mut groups: HashMap<(u32, bool), Vec<u32>> = HashMap::new();
    for id in 0..g.nodes.len() as u32 {
        if g.nodes[id as usize].kind != NodeKind::Load || g.degree(id) != 1 {
            continue;
        }
        let (_, pole) = g.neighbors(id)[0];
        if g.nodes[pole as usize].kind != NodeKind::Pole {
            continue;
        }
        groups
            .entry((pole, side_of_road(g, pole, id)))
            .or_default()
            .push(id);
    }
    let mut merge_groups: Vec<((u32, bool), Vec<u32>)> = groups
        .into_iter()
        .filter(|(_, members)| members.len() > 1)
        .collect();
    merge_groups.sort_unstable_by_key(|&((pole, side), _)| (pole, side));

    let mut removed = vec![false; g.nodes.len()];
    let mut removed_edge = vec![false; g.edges.len()];
    for (_, members) in &merge_groups {
        for &m in members {
            removed[m as usize] = true;
            removed_edge[g.neighbors(m)[0].0 as usize] = true;
        }
    }

    // Surviving nodes keep their relative order; merged loads append after.
    let mut node_map = vec![u32::MAX; g.nodes.len()];
    let mut nodes: Vec<Node> = Vec::with_capacity(g.nodes.len());
    for (id, node) in g.nodes.iter().enumerate() {
        if !removed[id] {
            node_map[id] = nodes.len() as u32;
            nodes.push(node.clone());
        }
    }
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(eid, _)| !removed_edge[*eid])
        .map(|(_, e)| Edge {
            a: node_map[e.a as usize],
            b: node_map[e.b as usize],
            ..e.clone()
        })
        .collect();

    for ((pole, _), members) in &merge_groups {
        let mut customers: u64 = 0;
        let (mut cx, mut cy) = (0.0, 0.0);
        let mut drop_len = 0.0;
        let mut tree = 0.0;
        let area = g.nodes[members[0] as usize].area;
        for &m in members {
            let node = &g.nodes[m as usize];
            debug_assert_eq!(node.area, area, "loads on one pole share its area");
            customers += node.customers as u64;
            cx += node.pos.x;
            cy += node.pos.y;
            let (eid, _) = g.neighbors(m)[0];
            drop_len += g.edges[eid as usize].length;
            tree += g.edges[eid as usize].tree_cover as f64;
        }
        let k = members.len() as f64;
        let pos = PlanarPoint::new(cx / k, cy / k);
        let merged_id = nodes.len() as u32;
        nodes.push(Node {
            kind: NodeKind::Load,
            pos,
            customers: u32::try_from(customers).expect("merged customer count fits u32"),
            area,
        });
        let new_pole = node_map[*pole as usize];
        let mid = PlanarPoint::new(
            (pos.x + nodes[new_pole as usize].pos.x) / 2.0,
            (pos.y + nodes[new_pole as usize].pos.y) / 2.0,
        );
        edges.push(Edge {
            a: new_pole,
            b: merged_id,
            length: drop_len / k,
            tree_cover: (tree / k) as f32,
            patch: g
                .patch_grid
                .patch_of(mid)
                .expect("merged load midpoint stays inside the patch grid"),
        });
    }

    let substations = g
        .substations
        .iter()
        .map(|&s| node_map[s as usize])
        .collect();
    NetworkGraph::new(
        nodes,
        edges,
        substations,
        g.area_names.clone(),
        g.origin,
        g.patch_grid.clone(),
    )
}

/// Which side of the pole's road a load sits on, by the cross product of the
/// road direction with the pole-to-load offset. The reference road segment is
/// the lowest-id pole-to-pole edge at the pole; a pole with no road edge puts
/// everything on one side.
fn side_of_road(g: &NetworkGraph, pole: u32, load: u32) -> bool {
    let road = g
        .neighbors(pole)
        .iter()
        .filter(|&&(_, v)| g.nodes[v as usize].kind == NodeKind::Pole)
        .map(|&(eid, _)| eid)
        .min();
    let Some(eid) = road else {
        return true;
    };
    let e = &g.edges[eid as usize];
    let (pa, pb) = (g.nodes[e.a as usize].pos, g.nodes[e.b as usize].pos);
    let dir = PlanarPoint::new(pb.x - pa.x, pb.y - pa.y);
    let v = PlanarPoint::new(
        g.nodes[load as usize].pos.x - g.nodes[pole as usize].pos.x,
        g.nodes[load as usize].pos.y - g.nodes[pole as usize].pos.y,
    );
    dir.x * v.y - dir.y * v.x >= 0.0
}

#[derive(Debug, Clone, Default)]
pub struct SynthStats {
    pub n_substations: usize,
    pub n_poles: usize,
    pub n_loads: usize,
    pub n_edges: usize,
    pub total_customers: u64,
    pub unreachable_loads: usize,
    pub merged_loads: usize,
    pub skipped_road_segments: usize,
    pub duplicate_road_edges: usize,
    pub n_patches: usize,
}

impl std::fmt::Display for SynthStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "nodes: {} substations, {} poles, {} loads ({} customers)",
            self.n_substations, self.n_poles, self.n_loads, self.total_customers
        )?;
        writeln!(
            f,
            "edges: {} ({} skipped degenerate road segments, {} duplicates dropped)",
            self.n_edges, self.skipped_road_segments, self.duplicate_road_edges
        )?;
        write!(
            f,
            "loads merged away: {}, unreachable loads: {}, wind patches: {}",
            self.merged_loads, self.unreachable_loads, self.n_patches
        )
    }
}

/// Build the full network from ingested inputs. Node ids in the result are
/// dense and final; every artifact downstream refers to them.
pub fn synthesize(
    inputs: &NetworkInputs,
    cfg: &SynthConfig,
) -> Result<(NetworkGraph, SynthStats), SynthError> {
    let mut stats = SynthStats::default();

    // Projection origin: center of the road bounding box.
    let (mut min_lat, mut max_lat) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_lon, mut max_lon) = (f64::INFINITY, f64::NEG_INFINITY);
    for road in &inputs.roads {
        for p in &road.points {
            min_lat = min_lat.min(p.lat);
            max_lat = max_lat.max(p.lat);
            min_lon = min_lon.min(p.lon);
            max_lon = max_lon.max(p.lon);
        }
    }
    if !min_lat.is_finite() {
        return Err(SynthError::NoRoads);
    }
    let origin = GeoPoint::new((min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0)
        .expect("midpoint of valid coordinates is valid");

    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();

    // Step 1: densify roads. Input vertices deduplicate on a 1 cm grid so
    // touching polylines share intersection nodes; inserted poles are unique
    // to their segment.
    let quantize = |p: PlanarPoint| ((p.x * 100.0).round() as i64, (p.y * 100.0).round() as i64);
    let mut vertex_ids: HashMap<(i64, i64), u32> = HashMap::new();
    let mut seen_edges: HashSet<(u32, u32)> = HashSet::new();
    for road in &inputs.roads {
        let planar: Vec<PlanarPoint> = road.points.iter().map(|&p| project(p, origin)).collect();
        let dense = densify_road(&planar, cfg.max_span_m);
        stats.skipped_road_segments += dense.skipped;
        let mut local: Vec<u32> = Vec::with_capacity(dense.points.len());
        for (i, &pos) in dense.points.iter().enumerate() {
            let id = if dense.is_vertex[i] {
                *vertex_ids.entry(quantize(pos)).or_insert_with(|| {
                    nodes.push(Node {
                        kind: NodeKind::Pole,
                        pos,
                        customers: 0,
                        area: None,
                    });
                    nodes.len() as u32 - 1
                })
            } else {
                nodes.push(Node {
                    kind: NodeKind::Pole,
                    pos,
                    customers: 0,
                    area: None,
                });
                nodes.len() as u32 - 1
            };
            local.push(id);
        }
        for &(i, j, length) in &dense.segments {
            let (a, b) = (local[i as usize], local[j as usize]);
            if a == b {
                // Distinct input vertices that quantized to one node.
                stats.skipped_road_segments += 1;
                continue;
            }
            if !seen_edges.insert((a.min(b), a.max(b))) {
                stats.duplicate_road_edges += 1;
                continue;
            }
            edges.push(Edge {
                a,
                b,
                length,
                tree_cover: 0.0,
                patch: 0,
            });
        }
    }
    if nodes.is_empty() || edges.is_empty() {
        return Err(SynthError::NoRoads);
    }
    stats.n_poles = nodes.len();

    let pole_positions: Vec<PlanarPoint> = nodes.iter().map(|n| n.pos).collect();
    let pole_index = GridIndex::build(&pole_positions);
    let connect = |nodes: &mut Vec<Node>,
                       edges: &mut Vec<Edge>,
                       kind: NodeKind,
                       pos: PlanarPoint,
                       customers: u32|
     -> Result<(), GeoError> {
        let pole = pole_index.nearest(pos)?;
        let id = nodes.len() as u32;
        nodes.push(Node {
            kind,
            pos,
            customers,
            area: None,
        });
        edges.push(Edge {
            a: pole,
            b: id,
            length: nodes[pole as usize].pos.dist(&pos).max(cfg.min_edge_m),
            tree_cover: 0.0,
            patch: 0,
        });
        Ok(())
    };

    // Step 2: substations tie into the road network at their nearest pole.
    let mut substations = Vec::with_capacity(inputs.substations.len());
    let mut area_names = Vec::with_capacity(inputs.substations.len());
    for sub in &inputs.substations {
        substations.push(nodes.len() as u32);
        area_names.push(sub.name.clone());
        connect(
            &mut nodes,
            &mut edges,
            NodeKind::Substation,
            project(sub.pos, origin),
            0,
        )?;
    }

    // Step 3: buildings become load nodes on their nearest pole.
    for b in &inputs.buildings {
        connect(
            &mut nodes,
            &mut edges,
            NodeKind::Load,
            project(b.pos, origin),
            estimate_customers(b, &cfg.customers),
        )?;
    }

    // Step 4: wind patches and canopy cover per edge (midpoint rule).
    let patch_grid = PatchGrid::covering(nodes.iter().map(|n| n.pos), cfg.patch_size_m);
    for e in &mut edges {
        let mid = e.midpoint(&nodes);
        e.patch = patch_grid.patch_of(mid)?;
        e.tree_cover = tree_cover_at(&inputs.tree, mid, origin);
    }

    // Step 5: service areas, then same-pole load merging.
    let assignment = assign_substations(&nodes, &edges, &substations);
    stats.unreachable_loads = assignment.unreachable_loads;
    for (node, area) in nodes.iter_mut().zip(assignment.areas) {
        node.area = area;
    }
    let graph = NetworkGraph::new(nodes, edges, substations, area_names, origin, patch_grid);
    let n_loads_before = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Load)
        .count();
    let graph = merge_buildings(&graph);
    graph.validate()?;

    stats.n_substations = graph.substations.len();
    stats.n_loads = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Load)
        .count();
    stats.merged_loads = n_loads_before - stats.n_loads;
    stats.n_edges = graph.edges.len();
    stats.total_customers = graph.total_customers();
    stats.n_patches = graph.patch_grid.n_patches();
    Ok((graph, stats))
}

fn tree_cover_at(raster: &TreeRaster, planar: PlanarPoint, origin: GeoPoint) -> f32 {
    let geo = unproject(planar, origin);
    raster.cover_at(geo).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamPurpose};
    use rand::Rng;

    fn pt(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    #[test]
    fn short_segment_gets_no_extra_poles() {
        let d = densify_road(&[pt(0.0, 0.0), pt(35.0, 0.0)], 40.0);
        assert_eq!(d.points.len(), 2);
        assert_eq!(d.segments, vec![(0, 1, 35.0)]);
    }

    #[test]
    fn hundred_meter_segment_splits_into_three() {
        let d = densify_road(&[pt(0.0, 0.0), pt(100.0, 0.0)], 40.0);
        assert_eq!(d.points.len(), 4, "two interior poles inserted");
        assert_eq!(d.segments.len(), 3);
        for &(_, _, len) in &d.segments {
            assert!((len - 100.0 / 3.0).abs() < 1e-12);
        }
        assert!(d.points[1].dist(&pt(100.0 / 3.0, 0.0)) < 1e-9);
        assert!(d.points[2].dist(&pt(200.0 / 3.0, 0.0)) < 1e-9);
        assert_eq!(d.is_vertex, vec![true, false, false, true]);
    }

    #[test]
    fn exact_multiple_splits_evenly() {
        let d = densify_road(&[pt(0.0, 0.0), pt(80.0, 0.0)], 40.0);
        assert_eq!(d.segments.len(), 2);
        assert_eq!(d.segments[0].2, 40.0);
    }

    #[test]
    fn degenerate_segments_are_skipped() {
        let d = densify_road(&[pt(0.0, 0.0), pt(0.0, 0.0), pt(30.0, 0.0)], 40.0);
        assert_eq!(d.skipped, 1);
        assert_eq!(d.segments.len(), 1);
        assert!((d.segments[0].2 - 30.0).abs() < 1e-12);
    }

    #[test]
    fn densify_never_exceeds_max_span_and_preserves_length() {
        let mut rng = stream(99, StreamPurpose::Testbed, 7);
        for _ in 0..200 {
            let n = rng.gen_range(2..8);
            let polyline: Vec<PlanarPoint> = (0..n)
                .map(|_| pt(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)))
                .collect();
            let total: f64 = polyline.windows(2).map(|w| w[0].dist(&w[1])).sum();
            let d = densify_road(&polyline, 40.0);
            let sum: f64 = d.segments.iter().map(|&(_, _, l)| l).sum();
            assert!((sum - total).abs() < 1e-9 * total.max(1.0));
            for &(i, j, len) in &d.segments {
                assert!(len <= 40.0, "segment of {len} m exceeds the span limit");
                let geom = d.points[i as usize].dist(&d.points[j as usize]);
                assert!((geom - len).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn customer_estimates_round_up_with_floor_of_one() {
        let model = CustomerModel::default();
        let building = |area: f64, residential: bool| BuildingRec {
            pos: GeoPoint::new(42.0, -83.0).unwrap(),
            floor_area_m2: area,
            residential,
        };
        assert_eq!(estimate_customers(&building(150.0, true), &model), 1);
        assert_eq!(estimate_customers(&building(151.0, true), &model), 2);
        assert_eq!(estimate_customers(&building(10.0, true), &model), 1);
        assert_eq!(estimate_customers(&building(450.0, true), &model), 3);
        assert_eq!(estimate_customers(&building(500.0, false), &model), 1);
        assert_eq!(estimate_customers(&building(501.0, false), &model), 2);
        assert_eq!(estimate_customers(&building(100.0, false), &model), 1);
    }

    fn bare_node(kind: NodeKind, x: f64, y: f64) -> Node {
        Node {
            kind,
            pos: pt(x, y),
            customers: 0,
            area: None,
        }
    }

    fn line_edge(a: u32, b: u32, length: f64) -> Edge {
        Edge {
            a,
            b,
            length,
            tree_cover: 0.0,
            patch: 0,
        }
    }

    #[test]
    fn equidistant_load_takes_lower_area_index() {
        // S0 - p1 - p2 - p3 - S1, unit spans: p2 is equidistant.
        let nodes: Vec<Node> = (0..5)
            .map(|i| {
                bare_node(
                    if i == 0 || i == 4 {
                        NodeKind::Substation
                    } else {
                        NodeKind::Pole
                    },
                    i as f64,
                    0.0,
                )
            })
            .collect();
        let edges: Vec<Edge> = (0..4).map(|i| line_edge(i, i + 1, 1.0)).collect();
        let got = assign_substations(&nodes, &edges, &[0, 4]);
        assert_eq!(got.areas, vec![Some(0), Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(got.dist[2], 2.0);
    }

    #[test]
    fn unreachable_nodes_stay_unassigned() {
        let nodes = vec![
            bare_node(NodeKind::Substation, 0.0, 0.0),
            bare_node(NodeKind::Pole, 1.0, 0.0),
            bare_node(NodeKind::Load, 9.0, 9.0), // no edges at all
        ];
        let edges = vec![line_edge(0, 1, 1.0)];
        let got = assign_substations(&nodes, &edges, &[0]);
        assert_eq!(got.areas[2], None);
        assert_eq!(got.unreachable_loads, 1);
    }

    /// Oracle: one plain single-source Dijkstra per substation, then argmin
    /// over (distance, area index) per node.
    fn oracle_assign(nodes: &[Node], edges: &[Edge], substations: &[u32]) -> Vec<Option<u32>> {
        let n = nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (eid, e) in edges.iter().enumerate() {
            adj[e.a as usize].push((eid, e.b as usize));
            adj[e.b as usize].push((eid, e.a as usize));
        }
        let mut best: Vec<(f64, u32)> = vec![(f64::INFINITY, u32::MAX); n];
        for (a, &s) in substations.iter().enumerate() {
            let mut dist = vec![f64::INFINITY; n];
            dist[s as usize] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0u64, s as usize)));
            while let Some(Reverse((dbits, u))) = heap.pop() {
                if dbits != dist[u].to_bits() {
                    continue;
                }
                for &(eid, v) in &adj[u] {
                    let nd = dist[u] + edges[eid].length;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Reverse((nd.to_bits(), v)));
                    }
                }
            }
            for v in 0..n {
                if dist[v] < best[v].0 {
                    best[v] = (dist[v], a as u32);
                }
            }
        }
        best.iter()
            .map(|&(d, a)| if d.is_finite() { Some(a) } else { None })
            .collect()
    }

    #[test]
    fn area_assignment_matches_per_source_dijkstra_oracle() {
        let mut rng = stream(4242, StreamPurpose::Testbed, 11);
        for round in 0..20 {
            let n = rng.gen_range(30..80);
            let mut nodes: Vec<Node> = (0..n)
                .map(|_| {
                    bare_node(
                        NodeKind::Pole,
                        rng.gen_range(-1000.0..1000.0),
                        rng.gen_range(-1000.0..1000.0),
                    )
                })
                .collect();
            let mut edges = Vec::new();
            for i in 0..n as u32 {
                for _ in 0..rng.gen_range(1..4) {
                    let j = rng.gen_range(0..n as u32);
                    if j != i {
                        let len = nodes[i as usize].pos.dist(&nodes[j as usize].pos).max(0.1);
                        edges.push(line_edge(i, j, len));
                    }
                }
            }
            let mut subs = Vec::new();
            while subs.len() < 3 {
                let s = rng.gen_range(0..n as u32);
                if !subs.contains(&s) {
                    subs.push(s);
                    nodes[s as usize].kind = NodeKind::Substation;
                }
            }
            let got = assign_substations(&nodes, &edges, &subs);
            let want = oracle_assign(&nodes, &edges, &subs);
            assert_eq!(got.areas, want, "round {round} diverged from the oracle");
        }
    }

    fn merge_fixture() -> NetworkGraph {
        // Horizontal road a(0,0)-b(40,0); loads above and below pole a.
        let nodes = vec![
            bare_node(NodeKind::Pole, 0.0, 0.0),
            bare_node(NodeKind::Pole, 40.0, 0.0),
            bare_node(NodeKind::Substation, 40.0, 10.0),
            Node {
                kind: NodeKind::Load,
                pos: pt(-5.0, 10.0),
                customers: 2,
                area: Some(0),
            },
            Node {
                kind: NodeKind::Load,
                pos: pt(5.0, 14.0),
                customers: 3,
                area: Some(0),
            },
            Node {
                kind: NodeKind::Load,
                pos: pt(0.0, -8.0),
                customers: 5,
                area: Some(0),
            },
        ];
        let mut nodes = nodes;
        nodes[0].area = Some(0);
        nodes[1].area = Some(0);
        nodes[2].area = Some(0);
        let edges = vec![
            line_edge(0, 1, 40.0),
            line_edge(1, 2, 10.0),
            line_edge(0, 3, 11.18),
            line_edge(0, 4, 14.87),
            line_edge(0, 5, 8.0),
        ];
        let grid = PatchGrid::covering(nodes.iter().map(|n| n.pos), 500.0);
        NetworkGraph::new(
            nodes,
            edges,
            vec![2],
            vec!["SUB1".into()],
            GeoPoint::new(42.0, -83.0).unwrap(),
            grid,
        )
    }

    #[test]
    fn merge_combines_same_side_loads_only() {
        let g = merge_fixture();
        let merged = merge_buildings(&g);
        let loads: Vec<&Node> = merged
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Load)
            .collect();
        assert_eq!(loads.len(), 2, "two north loads merge, the south one stays");
        assert_eq!(merged.total_customers(), 10, "customers are conserved");

        let combined = loads.iter().find(|n| n.customers == 5 && n.pos.y > 0.0);
        let combined = combined.expect("merged north load present");
        assert_eq!(combined.pos, pt(0.0, 12.0), "position is the member centroid");

        // The merged drop edge takes the mean of the replaced drop lengths.
        let drop = merged
            .edges
            .iter()
            .find(|e| {
                merged.nodes[e.b as usize].kind == NodeKind::Load
                    && merged.nodes[e.b as usize].customers == 5
                    && merged.nodes[e.b as usize].pos.y > 0.0
            })
            .expect("drop edge for merged load");
        assert!((drop.length - (11.18 + 14.87) / 2.0).abs() < 1e-12);
        merged.validate().unwrap();
    }

    #[test]
    fn merge_is_identity_when_loads_are_alone() {
        let g = merge_fixture();
        let merged = merge_buildings(&g);
        let again = merge_buildings(&merged);
        assert_eq!(again.nodes, merged.nodes);
        assert_eq!(again.edges, merged.edges);
    }

    fn tiny_inputs() -> NetworkInputs {
        let origin = GeoPoint::new(42.33, -83.04).unwrap();
        let gp = |x: f64, y: f64| unproject(pt(x, y), origin);
        NetworkInputs {
            substations: vec![
                super::super::SubstationRec {
                    id: 1,
                    name: "SUB1".into(),
                    pos: gp(10.0, 90.0),
                },
                super::super::SubstationRec {
                    id: 2,
                    name: "SUB2".into(),
                    pos: gp(470.0, 90.0),
                },
            ],
            roads: vec![
                // Polylines split at intersections, as road data conventionally is:
                // the crossing point appears as a vertex in both lines.
                super::super::RoadPolyline {
                    points: vec![gp(0.0, 0.0), gp(240.0, 0.0), gp(480.0, 0.0)],
                },
                super::super::RoadPolyline {
                    points: vec![gp(240.0, 0.0), gp(240.0, 300.0)],
                },
            ],
            buildings: vec![
                super::super::BuildingRec {
                    pos: gp(30.0, 18.0),
                    floor_area_m2: 160.0,
                    residential: true,
                },
                super::super::BuildingRec {
                    pos: gp(34.0, 22.0),
                    floor_area_m2: 300.0,
                    residential: true,
                },
                super::super::BuildingRec {
                    pos: gp(30.0, -15.0),
                    floor_area_m2: 900.0,
                    residential: false,
                },
                super::super::BuildingRec {
                    pos: gp(250.0, 200.0),
                    floor_area_m2: 120.0,
                    residential: true,
                },
            ],
            tree: TreeRaster {
                origin: gp(-300.0, -300.0),
                cell_m: 200.0,
                rows: 6,
                cols: 6,
                values: vec![0.3; 36],
            },
        }
    }

    #[test]
    fn synthesize_builds_a_valid_graph() {
        let (g, stats) = synthesize(&tiny_inputs(), &SynthConfig::default()).unwrap();
        g.validate().unwrap();
        assert_eq!(g.n_areas(), 2);
        assert_eq!(g.area_names, vec!["SUB1".to_string(), "SUB2".to_string()]);

        // Pole spans: every pole-to-pole edge obeys the 40 m cap.
        for e in &g.edges {
            let (ka, kb) = (g.nodes[e.a as usize].kind, g.nodes[e.b as usize].kind);
            if ka == NodeKind::Pole && kb == NodeKind::Pole {
                assert!(e.length <= 40.0 + 1e-9);
            }
        }

        // ceil(160/150)=2, ceil(300/150)=2, ceil(900/500)=2, ceil(120/150)=1
        assert_eq!(stats.total_customers, 7);
        assert_eq!(g.total_customers(), 7);
        assert_eq!(stats.unreachable_loads, 0);

        // The two same-side neighbors merged into one load.
        assert_eq!(stats.merged_loads, 1);
        assert_eq!(stats.n_loads, 3);

        // Every load is assigned, and tree cover came from the raster.
        for n in &g.nodes {
            if n.kind == NodeKind::Load {
                assert!(n.area.is_some());
            }
        }
        assert!(g.edges.iter().all(|e| (e.tree_cover - 0.3).abs() < 1e-6));
    }

    #[test]
    fn synthesize_is_deterministic() {
        let inputs = tiny_inputs();
        let (g1, _) = synthesize(&inputs, &SynthConfig::default()).unwrap();
        let (g2, _) = synthesize(&inputs, &SynthConfig::default()).unwrap();
        assert_eq!(g1.nodes, g2.nodes);
        assert_eq!(g1.edges, g2.edges);
        assert_eq!(g1.substations, g2.substations);
    }

    #[test]
    fn shared_intersections_merge_into_one_node() {
        let inputs = tiny_inputs();
        let (g, _) = synthesize(&inputs, &SynthConfig::default()).unwrap();
        // The vertical road starts exactly on the horizontal one; the
        // intersection vertex must be shared, making the graph connected.
        let assignment = assign_substations(&g.nodes, &g.edges, &g.substations);
        assert_eq!(assignment.unreachable_loads, 0);
    }
}
