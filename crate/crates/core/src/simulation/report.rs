//! Human-readable outputs of an estimate: per-area scores as CSV, the
//! convergence trace as CSV, and a GeoJSON layer with one scored point per
//! substation. All writers format deterministically so reruns are
//! byte-identical.

use super::estimate::{AreaEstimate, EstimateOutcome};
use crate::geo::unproject;
use crate::network::NetworkGraph;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn open(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

fn wrap(path: &Path) -> impl Fn(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// `area_id,R_i,N_gust,episodes`, one row per area, named by substation.
pub fn write_resilience_csv(
    path: &Path,
    graph: &NetworkGraph,
    areas: &[AreaEstimate],
) -> Result<(), ReportError> {
    let mut w = open(path)?;
    let e = wrap(path);
    writeln!(w, "area_id,R_i,N_gust,episodes").map_err(&e)?;
    for est in areas {
        let name = &graph.area_names[est.area as usize];
        writeln!(w, "{},{},{},{}", name, est.r, est.n_gust, est.n_episodes).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// `area_id,episode,running_R` with 1-based episode numbers, one row every
/// `stride` episodes (`stride = 1` records all of them).
pub fn write_convergence_csv(
    path: &Path,
    graph: &NetworkGraph,
    outcome: &EstimateOutcome,
    stride: u64,
) -> Result<(), ReportError> {
    assert!(stride >= 1);
    let mut w = open(path)?;
    let e = wrap(path);
    writeln!(w, "area_id,episode,running_R").map_err(&e)?;
    for (a, trace) in outcome.convergence.iter().enumerate() {
        let name = &graph.area_names[a];
        for (k, r) in trace.iter().enumerate() {
            let episode = k as u64 + 1;
            if episode.is_multiple_of(stride) {
                writeln!(w, "{},{},{}", name, episode, r).map_err(&e)?;
            }
        }
    }
    w.flush().map_err(&e)
}

/// One GeoJSON Point per area at its substation, carrying the score.
pub fn write_resilience_geojson(
    path: &Path,
    graph: &NetworkGraph,
    areas: &[AreaEstimate],
) -> Result<(), ReportError> {
    let mut w = open(path)?;
    let e = wrap(path);
    write!(w, "{{\"type\":\"FeatureCollection\",\"features\":[").map_err(&e)?;
    for (i, est) in areas.iter().enumerate() {
        let sub = graph.substations[est.area as usize];
        let geo = unproject(graph.nodes[sub as usize].pos, graph.origin);
        let name = serde_json::to_string(&graph.area_names[est.area as usize])
            .expect("strings always serialize");
        if i > 0 {
            write!(w, ",").map_err(&e)?;
        }
        write!(
            w,
            "{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\
             \"properties\":{{\"area_id\":{},\"R_i\":{},\"n_gust\":{},\"episodes\":{}}}}}",
            geo.lon, geo.lat, name, est.r, est.n_gust, est.n_episodes
        )
        .map_err(&e)?;
    }
    writeln!(w, "]}}").map_err(&e)?;
    w.flush().map_err(&e)
}
