//! The synthetic distribution network: node/edge model, graph construction
//! from ingested road/building/substation data, a procedural desk-scale
//! testbed generator, and binary/GeoJSON serialization.

mod ingest;
pub(crate) mod io;
mod synth;
mod testbed;

pub use ingest::{
    load_buildings, load_inputs, load_roads, load_substations, load_tree_raster,
    load_wind_samples, write_buildings_csv, write_roads_jsonl, write_substations_csv,
    write_tree_raster, write_wind_samples_csv, BuildingRec, IngestError, NetworkInputs,
    RoadPolyline, SubstationRec, TreeRaster, WindSampleRec,
};
pub use io::{read_graph, write_graph, write_network_geojson, GraphIoError};
pub use synth::{
    assign_substations, densify_road, estimate_customers, merge_buildings, synthesize,
    AreaAssignment, CustomerModel, DensifiedRoad, SynthConfig, SynthError, SynthStats,
};
pub use testbed::{generate_testbed, TestbedData, TestbedSpec};

use crate::geo::{GeoPoint, PatchGrid, PlanarPoint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Substation,
    Pole,
    Load,
}

/// A graph node. Its id is its index in [`NetworkGraph::nodes`]; ids are
/// dense `0..n` after synthesis so hot loops index arrays directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub pos: PlanarPoint,
    /// Customer count; non-zero only for `Load` nodes.
    pub customers: u32,
    /// Substation service area (index into [`NetworkGraph::substations`]).
    /// `None` marks a node with no path to any substation.
    pub area: Option<u32>,
}

/// A distribution line segment. Id is the index in [`NetworkGraph::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub length: f64,
    /// Tree canopy fraction over the segment, sampled at its midpoint.
    pub tree_cover: f32,
    /// Patch of the wind field this edge reads its speed from (midpoint rule).
    pub patch: u32,
}

impl Edge {
    pub fn other(&self, node: u32) -> u32 {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }

    pub fn midpoint(&self, nodes: &[Node]) -> PlanarPoint {
        let pa = nodes[self.a as usize].pos;
        let pb = nodes[self.b as usize].pos;
        PlanarPoint::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge {0} is a self-loop on node {1}")]
    SelfLoop(u32, u32),
    #[error("edge {0} connects two substations ({1}, {2})")]
    SubstationLink(u32, u32, u32),
    #[error("edge {edge} has non-positive length {length}")]
    BadLength { edge: u32, length: f64 },
    #[error("edge {edge} has tree cover {tree_cover} outside [0, 1]")]
    BadTreeCover { edge: u32, tree_cover: f32 },
    #[error("{kind:?} node {node} carries {customers} customers")]
    CustomersOnNonLoad {
        node: u32,
        kind: NodeKind,
        customers: u32,
    },
    #[error("load {node} assigned to area {area} but not connected to its substation")]
    AreaNotConnected { node: u32, area: u32 },
    #[error("load {node} reachable from a substation but left unassigned")]
    ReachableUnassigned { node: u32 },
}

/// The shared distribution network. Immutable after construction; episode
/// workers read it concurrently.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Node ids of the substations; the index in this list is the area id.
    pub substations: Vec<u32>,
    /// Human-readable substation names, parallel to `substations`.
    pub area_names: Vec<String>,
    /// Projection origin used to map planar coordinates back to WGS84.
    pub origin: GeoPoint,
    pub patch_grid: PatchGrid,
    adj_starts: Vec<u32>,
    adj_entries: Vec<(u32, u32)>,
    area_customers: Vec<u64>,
    area_loads: Vec<Vec<u32>>,
}

impl NetworkGraph {
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        substations: Vec<u32>,
        area_names: Vec<String>,
        origin: GeoPoint,
        patch_grid: PatchGrid,
    ) -> Self {
        assert_eq!(substations.len(), area_names.len());
        let n = nodes.len();
        let mut degree = vec![0u32; n + 1];
        for e in &edges {
            degree[e.a as usize + 1] += 1;
            degree[e.b as usize + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let adj_starts = degree.clone();
        let mut fill = degree;
        let mut adj_entries = vec![(0u32, 0u32); edges.len() * 2];
        for (eid, e) in edges.iter().enumerate() {
            adj_entries[fill[e.a as usize] as usize] = (eid as u32, e.b);
            fill[e.a as usize] += 1;
            adj_entries[fill[e.b as usize] as usize] = (eid as u32, e.a);
            fill[e.b as usize] += 1;
        }

        let mut area_customers = vec![0u64; substations.len()];
        let mut area_loads = vec![Vec::new(); substations.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.kind == NodeKind::Load {
                if let Some(a) = node.area {
                    area_customers[a as usize] += node.customers as u64;
                    area_loads[a as usize].push(id as u32);
                }
            }
        }

        Self {
            nodes,
            edges,
            substations,
            area_names,
            origin,
            patch_grid,
            adj_starts,
            adj_entries,
            area_customers,
            area_loads,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_areas(&self) -> usize {
        self.substations.len()
    }

    /// `(edge id, neighbor node id)` pairs incident to `node`.
    pub fn neighbors(&self, node: u32) -> &[(u32, u32)] {
        &self.adj_entries[self.adj_starts[node as usize] as usize
            ..self.adj_starts[node as usize + 1] as usize]
    }

    pub fn degree(&self, node: u32) -> u32 {
        self.adj_starts[node as usize + 1] - self.adj_starts[node as usize]
    }

    /// Total customers per area. Loads that reach no substation are excluded
    /// from every denominator.
    pub fn area_customers(&self) -> &[u64] {
        &self.area_customers
    }

    /// Load node ids per area.
    pub fn area_loads(&self, area: u32) -> &[u32] {
        &self.area_loads[area as usize]
    }

    pub fn total_customers(&self) -> u64 {
        self.nodes.iter().map(|n| n.customers as u64).sum()
    }

    /// Structural invariant check plus a full-connectivity audit: with every
    /// edge intact, each assigned load must reach its own substation, and no
    /// reachable load may be unassigned.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (eid, e) in self.edges.iter().enumerate() {
            let eid = eid as u32;
            if e.a == e.b {
                return Err(GraphError::SelfLoop(eid, e.a));
            }
            let (ka, kb) = (self.nodes[e.a as usize].kind, self.nodes[e.b as usize].kind);
            if ka == NodeKind::Substation && kb == NodeKind::Substation {
                return Err(GraphError::SubstationLink(eid, e.a, e.b));
            }
            if e.length <= 0.0 || e.length.is_nan() {
                return Err(GraphError::BadLength {
                    edge: eid,
                    length: e.length,
                });
            }
            if !(0.0..=1.0).contains(&e.tree_cover) {
                return Err(GraphError::BadTreeCover {
                    edge: eid,
                    tree_cover: e.tree_cover,
                });
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.kind != NodeKind::Load && node.customers != 0 {
                return Err(GraphError::CustomersOnNonLoad {
                    node: id as u32,
                    kind: node.kind,
                    customers: node.customers,
                });
            }
        }

        // Connectivity audit via multi-source BFS labelled by component.
        let mut comp = vec![u32::MAX; self.nodes.len()];
        let mut next = 0u32;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.nodes.len() as u32 {
            if comp[start as usize] != u32::MAX {
                continue;
            }
            comp[start as usize] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(_, v) in self.neighbors(u) {
                    if comp[v as usize] == u32::MAX {
                        comp[v as usize] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.kind != NodeKind::Load {
                continue;
            }
            match node.area {
                Some(a) => {
                    let sub = self.substations[a as usize];
                    if comp[id] != comp[sub as usize] {
                        return Err(GraphError::AreaNotConnected {
                            node: id as u32,
                            area: a,
                        });
                    }
                }
                None => {
                    let reachable = self
                        .substations
                        .iter()
                        .any(|&s| comp[s as usize] == comp[id]);
                    if reachable {
                        return Err(GraphError::ReachableUnassigned { node: id as u32 });
                    }
                }
            }
        }
        Ok(())
    }
}
