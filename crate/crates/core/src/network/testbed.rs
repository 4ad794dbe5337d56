//! Procedural desk-scale test city: a Manhattan street grid with buildings,
//! substations, a canopy raster, and recorded wind samples. Output goes
//! through the same ingest formats as real data, so the whole pipeline is
//! exercised end to end.

use super::ingest::{BuildingRec, RoadPolyline, SubstationRec, TreeRaster, WindSampleRec};
use crate::geo::{unproject, GeoPoint, PlanarPoint};
use crate::rng::{stream, StreamPurpose};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestbedSpec {
    /// Horizontal streets (count of east-west lines).
    pub rows: u32,
    /// Vertical streets.
    pub cols: u32,
    /// Block edge length in meters.
    pub block_m: f64,
    pub n_buildings: u32,
    pub n_substations: u32,
    /// WGS84 position of the south-west street corner.
    pub origin: GeoPoint,
    pub tree_cell_m: f64,
    /// Recorded wind observations to emit (half gusts, half sustained).
    pub n_wind_samples: u32,
}

impl Default for TestbedSpec {
    fn default() -> Self {
        Self {
            rows: 12,
            cols: 12,
            block_m: 160.0,
            n_buildings: 800,
            n_substations: 3,
            origin: GeoPoint { lat: 42.3314, lon: -83.0458 },
            tree_cell_m: 200.0,
            n_wind_samples: 800,
        }
    }
}

#[derive(Debug)]
pub struct TestbedData {
    pub substations: Vec<SubstationRec>,
    pub roads: Vec<RoadPolyline>,
    pub buildings: Vec<BuildingRec>,
    pub tree: TreeRaster,
    pub wind_samples: Vec<WindSampleRec>,
}

/// Generate a deterministic test city. Every street intersection appears as a
/// vertex in both crossing polylines, matching the convention of road data
/// split at intersections. Buildings sit 8-22 m off a street, so no service
/// drop exceeds a pole span.
pub fn generate_testbed(spec: &TestbedSpec, seed: u64) -> TestbedData {
    assert!(spec.rows >= 2 && spec.cols >= 2, "grid needs at least 2x2 streets");
    assert!(spec.block_m > 0.0);
    let mut rng = stream(seed, StreamPurpose::Testbed, 0);
    let geo = |p: PlanarPoint| unproject(p, spec.origin);
    let width = (spec.cols - 1) as f64 * spec.block_m;
    let height = (spec.rows - 1) as f64 * spec.block_m;

    let mut roads = Vec::with_capacity((spec.rows + spec.cols) as usize);
    for j in 0..spec.rows {
        let y = j as f64 * spec.block_m;
        roads.push(RoadPolyline {
            points: (0..spec.cols)
                .map(|i| geo(PlanarPoint::new(i as f64 * spec.block_m, y)))
                .collect(),
        });
    }
    for i in 0..spec.cols {
        let x = i as f64 * spec.block_m;
        roads.push(RoadPolyline {
            points: (0..spec.rows)
                .map(|j| geo(PlanarPoint::new(x, j as f64 * spec.block_m)))
                .collect(),
        });
    }

    // Substations spread over a super-grid of intersections, nudged off the
    // corner so they hang from a short drop rather than sitting on a pole.
    let k = spec.n_substations;
    let gx = (k as f64).sqrt().ceil() as u32;
    let gy = k.div_ceil(gx);
    assert!(
        spec.cols >= 2 * gx && spec.rows >= 2 * gy,
        "grid too small to spread {k} substations"
    );
    let mut substations = Vec::with_capacity(k as usize);
    for i in 0..k {
        let (cx, cy) = (i % gx, i / gx);
        let col = (((cx as f64 + 0.5) / gx as f64) * (spec.cols - 1) as f64).round();
        let row = (((cy as f64 + 0.5) / gy as f64) * (spec.rows - 1) as f64).round();
        substations.push(SubstationRec {
            id: i + 1,
            name: format!("SUB{}", i + 1),
            pos: geo(PlanarPoint::new(
                col * spec.block_m + 12.0,
                row * spec.block_m + 9.0,
            )),
        });
    }

    let mut buildings = Vec::with_capacity(spec.n_buildings as usize);
    for _ in 0..spec.n_buildings {
        let along_horizontal = rng.gen_bool(0.5);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let offset = side * rng.gen_range(8.0..22.0);
        let pos = if along_horizontal {
            let y = rng.gen_range(0..spec.rows) as f64 * spec.block_m;
            PlanarPoint::new(rng.gen_range(0.0..width), y + offset)
        } else {
            let x = rng.gen_range(0..spec.cols) as f64 * spec.block_m;
            PlanarPoint::new(x + offset, rng.gen_range(0.0..height))
        };
        let residential = rng.gen_bool(0.85);
        let floor_area_m2 = if residential {
            rng.gen_range(80.0..380.0)
        } else {
            rng.gen_range(250.0..4000.0)
        };
        buildings.push(BuildingRec {
            pos: geo(pos),
            floor_area_m2,
            residential,
        });
    }

    let margin = 300.0;
    let cells = |extent: f64| (((extent + 2.0 * margin) / spec.tree_cell_m).ceil() as u32).max(1);
    let (t_rows, t_cols) = (cells(height), cells(width));
    let values = (0..t_rows * t_cols)
        .map(|_| rng.gen_range(0.05..0.75))
        .collect();
    let tree = TreeRaster {
        origin: geo(PlanarPoint::new(-margin, -margin)),
        cell_m: spec.tree_cell_m,
        rows: t_rows,
        cols: t_cols,
        values,
    };

    // Recorded wind: log-normal gusts around 20 m/s and sustained winds
    // around 8 m/s, wide enough to straddle the fragility band.
    let gust_dist = LogNormal::new(20.0f64.ln(), 0.35).unwrap();
    let sustained_dist = LogNormal::new(8.0f64.ln(), 0.30).unwrap();
    let n_gust = spec.n_wind_samples / 2;
    let mut wind_samples = Vec::with_capacity(spec.n_wind_samples as usize);
    for i in 0..spec.n_wind_samples {
        let is_gust = i < n_gust;
        let dist = if is_gust { &gust_dist } else { &sustained_dist };
        wind_samples.push(WindSampleRec {
            speed_mps: dist.sample(&mut rng),
            is_gust,
        });
    }

    TestbedData {
        substations,
        roads,
        buildings,
        tree,
        wind_samples,
    }
}
