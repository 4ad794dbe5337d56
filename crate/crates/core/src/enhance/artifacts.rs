//! On-disk artifacts of an enhancement run: the plan itself as JSON, its
//! placements as a GeoJSON point layer, and the per-generation fitness
//! history as CSV. All deterministic byte-for-byte given equal inputs.

use super::ga::GenerationStats;
use super::DerPlan;
use crate::geo::unproject;
use crate::network::NetworkGraph;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn wrap(path: &Path) -> impl Fn(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

/// The plan as a JSON list of `{node_id, kind, capacity_kw}`.
pub fn write_plan_json(path: &Path, plan: &DerPlan) -> Result<(), ArtifactError> {
    let e = wrap(path);
    let mut w = BufWriter::new(File::create(path).map_err(&e)?);
    let text = serde_json::to_string_pretty(plan).expect("plans always serialize");
    w.write_all(text.as_bytes()).map_err(&e)?;
    writeln!(w).map_err(&e)?;
    w.flush().map_err(&e)
}

pub fn read_plan_json(path: &Path) -> Result<DerPlan, ArtifactError> {
    let e = wrap(path);
    let text = std::fs::read_to_string(path).map_err(&e)?;
    serde_json::from_str(&text).map_err(|err| ArtifactError::Io {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, err),
    })
}

/// `generation,best_fitness,mean_fitness`, one row per generation.
pub fn write_ga_history_csv(path: &Path, history: &[GenerationStats]) -> Result<(), ArtifactError> {
    let e = wrap(path);
    let mut w = BufWriter::new(File::create(path).map_err(&e)?);
    writeln!(w, "generation,best_fitness,mean_fitness").map_err(&e)?;
    for g in history {
        writeln!(w, "{},{},{}", g.generation, g.best_fitness, g.mean_fitness).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// One GeoJSON Point per placement with kind and capacity properties.
pub fn write_plan_geojson(
    path: &Path,
    graph: &NetworkGraph,
    plan: &DerPlan,
) -> Result<(), ArtifactError> {
    let e = wrap(path);
    let mut w = BufWriter::new(File::create(path).map_err(&e)?);
    write!(w, "{{\"type\":\"FeatureCollection\",\"features\":[").map_err(&e)?;
    for (i, p) in plan.placements.iter().enumerate() {
        let geo = unproject(graph.nodes[p.node_id as usize].pos, graph.origin);
        let kind = serde_json::to_string(&p.kind).expect("kind serializes");
        if i > 0 {
            write!(w, ",").map_err(&e)?;
        }
        write!(
            w,
            "{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\
             \"properties\":{{\"node_id\":{},\"kind\":{},\"capacity_kw\":{}}}}}",
            geo.lon, geo.lat, p.node_id, kind, p.capacity_kw
        )
        .map_err(&e)?;
    }
    writeln!(w, "]}}").map_err(&e)?;
    w.flush().map_err(&e)
}
