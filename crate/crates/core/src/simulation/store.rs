//! Episode store: an append-only, versioned little-endian file holding every
//! simulated episode, so enhancement runs can replay the exact storms the
//! estimate saw without re-simulating them.
//!
//! Layout: a fixed header (magic, version, master seed, area/horizon/graph
//! shape, episode count) followed by one variable-length record per episode.
//! The count is written as zero on create and patched in on [`EpisodeWriter::finish`],
//! so a crashed run leaves a readable file with zero committed episodes.

use super::episode::Episode;
use crate::network::io::{Reader, Writer};
use crate::network::NetworkGraph;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read as _, Seek, SeekFrom, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: [u8; 4] = *b"RSEP";
const VERSION: u32 = 1;
/// Byte offset of the episode count in the header: magic(4) + version(4) +
/// seed(8) + areas(4) + horizon(4) + nodes(8) + edges(8).
const COUNT_OFFSET: u64 = 40;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: not an episode store (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported episode store version {found} (expected {VERSION})")]
    UnsupportedVersion { path: PathBuf, found: u32 },
    #[error("{path}: corrupt episode store: {what}")]
    Corrupt { path: PathBuf, what: String },
    #[error("episode store does not match the network: {what}")]
    GraphMismatch { what: String },
}

/// Header fields that bind a store to the run that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreMeta {
    pub master_seed: u64,
    pub n_areas: u32,
    pub horizon_h: u32,
    pub n_nodes: u64,
    pub n_edges: u64,
}

impl StoreMeta {
    pub fn for_run(graph: &NetworkGraph, master_seed: u64, horizon_h: u32) -> Self {
        Self {
            master_seed,
            n_areas: graph.n_areas() as u32,
            horizon_h,
            n_nodes: graph.nodes.len() as u64,
            n_edges: graph.n_edges() as u64,
        }
    }

    /// Refuse to replay episodes against a different graph than they were
    /// simulated on.
    pub fn check_graph(&self, graph: &NetworkGraph) -> Result<(), StoreError> {
        let mismatch = |what: String| Err(StoreError::GraphMismatch { what });
        if self.n_nodes != graph.nodes.len() as u64 {
            return mismatch(format!(
                "store has {} nodes, network has {}",
                self.n_nodes,
                graph.nodes.len()
            ));
        }
        if self.n_edges != graph.n_edges() as u64 {
            return mismatch(format!(
                "store has {} edges, network has {}",
                self.n_edges,
                graph.n_edges()
            ));
        }
        if self.n_areas != graph.n_areas() as u32 {
            return mismatch(format!(
                "store has {} areas, network has {}",
                self.n_areas,
                graph.n_areas()
            ));
        }
        Ok(())
    }
}

pub struct EpisodeWriter {
    w: Writer<BufWriter<File>>,
    path: PathBuf,
    meta: StoreMeta,
    written: u64,
}

impl EpisodeWriter {
    pub fn create(path: &Path, meta: StoreMeta) -> Result<Self, StoreError> {
        let wrap = |source| StoreError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(wrap)?;
        let mut w = Writer { inner: BufWriter::new(file) };
        (|| {
            w.inner.write_all(&MAGIC)?;
            w.u32(VERSION)?;
            w.u64(meta.master_seed)?;
            w.u32(meta.n_areas)?;
            w.u32(meta.horizon_h)?;
            w.u64(meta.n_nodes)?;
            w.u64(meta.n_edges)?;
            w.u64(0) // episode count, patched by finish()
        })()
        .map_err(wrap)?;
        Ok(Self { w, path: path.to_path_buf(), meta, written: 0 })
    }

    pub fn append(&mut self, ep: &Episode) -> Result<(), StoreError> {
        let meta = self.meta;
        assert_eq!(ep.gust_areas.len(), meta.n_areas as usize);
        assert_eq!(ep.curves.len(), meta.n_areas as usize);
        for c in &ep.curves {
            assert_eq!(c.len(), meta.horizon_h as usize + 1);
        }
        let w = &mut self.w;
        (|| {
            w.u64(ep.index)?;
            w.u32(ep.duration_h)?;
            w.u32(ep.failures.len() as u32)?;
            w.u32(ep.repairs.len() as u32)?;
            let mut bitmap = vec![0u8; (meta.n_areas as usize).div_ceil(8)];
            for (a, &g) in ep.gust_areas.iter().enumerate() {
                if g {
                    bitmap[a / 8] |= 1 << (a % 8);
                }
            }
            w.inner.write_all(&bitmap)?;
            for &(h, e) in ep.failures.iter().chain(&ep.repairs) {
                w.u32(h)?;
                w.u32(e)?;
            }
            for curve in &ep.curves {
                for &p in curve {
                    w.f64(p)?;
                }
            }
            Ok(())
        })()
        .map_err(|source| StoreError::Io { path: self.path.clone(), source })?;
        self.written += 1;
        Ok(())
    }

    /// Flush, patch the episode count into the header, and return the count.
    pub fn finish(self) -> Result<u64, StoreError> {
        let wrap = |source| StoreError::Io { path: self.path.clone(), source };
        let mut file = self.w.inner.into_inner().map_err(|e| wrap(e.into_error()))?;
        file.seek(SeekFrom::Start(COUNT_OFFSET)).map_err(wrap)?;
        file.write_all(&self.written.to_le_bytes()).map_err(wrap)?;
        file.sync_all().map_err(wrap)?;
        Ok(self.written)
    }
}

pub struct EpisodeReader {
    r: Reader<BufReader<File>>,
    path: PathBuf,
    meta: StoreMeta,
    n_episodes: u64,
    read: u64,
}

impl EpisodeReader {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let wrap = |source| StoreError::Io { path: path.to_path_buf(), source };
        let file = File::open(path).map_err(wrap)?;
        let mut r = Reader { inner: BufReader::new(file) };
        let mut magic = [0u8; 4];
        r.inner.read_exact(&mut magic).map_err(wrap)?;
        if magic != MAGIC {
            return Err(StoreError::BadMagic { path: path.to_path_buf() });
        }
        let version = r.u32().map_err(wrap)?;
        if version != VERSION {
            return Err(StoreError::UnsupportedVersion { path: path.to_path_buf(), found: version });
        }
        let meta = StoreMeta {
            master_seed: r.u64().map_err(wrap)?,
            n_areas: r.u32().map_err(wrap)?,
            horizon_h: r.u32().map_err(wrap)?,
            n_nodes: r.u64().map_err(wrap)?,
            n_edges: r.u64().map_err(wrap)?,
        };
        let n_episodes = r.u64().map_err(wrap)?;
        Ok(Self { r, path: path.to_path_buf(), meta, n_episodes, read: 0 })
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn n_episodes(&self) -> u64 {
        self.n_episodes
    }

    fn corrupt(&self, what: impl Into<String>) -> StoreError {
        StoreError::Corrupt { path: self.path.clone(), what: what.into() }
    }

    /// Read the next committed episode, or `None` past the end.
    pub fn next_episode(&mut self) -> Result<Option<Episode>, StoreError> {
        if self.read == self.n_episodes {
            return Ok(None);
        }
        let meta = self.meta;
        let path = self.path.clone();
        let wrap = move |source| StoreError::Io { path: path.clone(), source };
        let r = &mut self.r;
        let index = r.u64().map_err(&wrap)?;
        let duration_h = r.u32().map_err(&wrap)?;
        let n_failures = r.u32().map_err(&wrap)?;
        let n_repairs = r.u32().map_err(&wrap)?;
        if duration_h >= meta.horizon_h {
            return Err(self.corrupt(format!("episode {index}: duration {duration_h} >= horizon")));
        }
        let max_events = meta.n_edges as u32;
        if n_failures > max_events || n_repairs > n_failures {
            return Err(self.corrupt(format!(
                "episode {index}: {n_failures} failures / {n_repairs} repairs on {max_events} edges"
            )));
        }
        let r = &mut self.r;
        let mut bitmap = vec![0u8; (meta.n_areas as usize).div_ceil(8)];
        r.inner.read_exact(&mut bitmap).map_err(&wrap)?;
        let gust_areas = (0..meta.n_areas as usize)
            .map(|a| bitmap[a / 8] >> (a % 8) & 1 == 1)
            .collect();
        let mut events = |n: u32, max_h: u32| -> Result<Vec<(u32, u32)>, StoreError> {
            let r = &mut self.r;
            let mut out = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let h = r.u32().map_err(&wrap)?;
                let e = r.u32().map_err(&wrap)?;
                if h > max_h || e >= meta.n_edges as u32 {
                    return Err(StoreError::Corrupt {
                        path: self.path.clone(),
                        what: format!("episode {index}: event ({h}, {e}) out of range"),
                    });
                }
                out.push((h, e));
            }
            Ok(out)
        };
        let failures = events(n_failures, duration_h)?;
        let repairs = events(n_repairs, meta.horizon_h)?;
        let mut curves = Vec::with_capacity(meta.n_areas as usize);
        for _ in 0..meta.n_areas {
            let mut curve = Vec::with_capacity(meta.horizon_h as usize + 1);
            for _ in 0..=meta.horizon_h {
                let p = self.r.f64().map_err(&wrap)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(self.corrupt(format!("episode {index}: served fraction {p}")));
                }
                curve.push(p);
            }
            curves.push(curve);
        }
        self.read += 1;
        Ok(Some(Episode { index, duration_h, gust_areas, failures, repairs, curves }))
    }

    /// Read up to `limit` episodes (all committed episodes when `None`).
    pub fn read_all(&mut self, limit: Option<u64>) -> Result<Vec<Episode>, StoreError> {
        let want = limit.unwrap_or(u64::MAX).min(self.n_episodes - self.read);
        let mut out = Vec::with_capacity(want as usize);
        for _ in 0..want {
            match self.next_episode()? {
                Some(ep) => out.push(ep),
                None => break,
            }
        }
        Ok(out)
    }
}
