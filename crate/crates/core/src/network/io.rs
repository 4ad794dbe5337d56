//! Network persistence: a versioned little-endian binary file for fast
//! reload, and a GeoJSON export for maps.

use super::{Edge, NetworkGraph, Node, NodeKind};
use crate::geo::{unproject, GeoPoint, PatchGrid, PlanarPoint};
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: [u8; 4] = *b"RSNG";
const VERSION: u32 = 1;
/// Area sentinel for nodes with no substation.
const NO_AREA: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: io::Error,
    },
    #[error("{path}: not a network file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported network file version {found} (expected {VERSION})")]
    UnsupportedVersion { path: PathBuf, found: u32 },
    #[error("{path}: corrupt network file: {what}")]
    Corrupt { path: PathBuf, what: String },
}

pub(crate) struct Writer<W: Write> {
    pub(crate) inner: W,
}

impl<W: Write> Writer<W> {
    pub(crate) fn u8(&mut self, v: u8) -> io::Result<()> {
        self.inner.write_all(&[v])
    }
    pub(crate) fn u16(&mut self, v: u16) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    pub(crate) fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    pub(crate) fn u64(&mut self, v: u64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    pub(crate) fn f32(&mut self, v: f32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    pub(crate) fn f64(&mut self, v: f64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
}

pub(crate) struct Reader<R: Read> {
    pub(crate) inner: R,
}

impl<R: Read> Reader<R> {
    pub(crate) fn u8(&mut self) -> io::Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }
    pub(crate) fn u16(&mut self) -> io::Result<u16> {
        let mut b = [0u8; 2];
        self.inner.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }
    pub(crate) fn u32(&mut self) -> io::Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    pub(crate) fn u64(&mut self) -> io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    pub(crate) fn f32(&mut self) -> io::Result<f32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
    pub(crate) fn f64(&mut self) -> io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

fn kind_byte(kind: NodeKind) -> u8 {
    match kind {
        NodeKind::Substation => 0,
        NodeKind::Pole => 1,
        NodeKind::Load => 2,
    }
}

pub fn write_graph(path: &Path, g: &NetworkGraph) -> Result<(), GraphIoError> {
    let io_err = |source| GraphIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = Writer {
        inner: BufWriter::new(file),
    };
    (|| -> io::Result<()> {
        w.inner.write_all(&MAGIC)?;
        w.u32(VERSION)?;
        w.f64(g.origin.lat)?;
        w.f64(g.origin.lon)?;
        w.f64(g.patch_grid.origin.x)?;
        w.f64(g.patch_grid.origin.y)?;
        w.f64(g.patch_grid.cell_size)?;
        w.u32(g.patch_grid.n_rows)?;
        w.u32(g.patch_grid.n_cols)?;
        w.u64(g.nodes.len() as u64)?;
        w.u64(g.edges.len() as u64)?;
        w.u32(g.substations.len() as u32)?;
        for node in &g.nodes {
            w.u8(kind_byte(node.kind))?;
            w.f64(node.pos.x)?;
            w.f64(node.pos.y)?;
            w.u32(node.customers)?;
            w.u32(node.area.unwrap_or(NO_AREA))?;
        }
        for e in &g.edges {
            w.u32(e.a)?;
            w.u32(e.b)?;
            w.f64(e.length)?;
            w.f32(e.tree_cover)?;
            w.u32(e.patch)?;
        }
        for &s in &g.substations {
            w.u32(s)?;
        }
        for name in &g.area_names {
            let bytes = name.as_bytes();
            w.u16(u16::try_from(bytes.len()).expect("area name under 64 KiB"))?;
            w.inner.write_all(bytes)?;
        }
        w.inner.flush()
    })()
    .map_err(io_err)
}

pub fn read_graph(path: &Path) -> Result<NetworkGraph, GraphIoError> {
    let io_err = |source| GraphIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let corrupt = |what: &str| GraphIoError::Corrupt {
        path: path.to_path_buf(),
        what: what.to_string(),
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };

    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic).map_err(io_err)?;
    if magic != MAGIC {
        return Err(GraphIoError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = r.u32().map_err(io_err)?;
    if version != VERSION {
        return Err(GraphIoError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }

    let parse = |r: &mut Reader<BufReader<fs::File>>| -> io::Result<NetworkGraph> {
        let origin = GeoPoint {
            lat: r.f64()?,
            lon: r.f64()?,
        };
        let patch_origin = PlanarPoint::new(r.f64()?, r.f64()?);
        let cell_size = r.f64()?;
        let (n_rows, n_cols) = (r.u32()?, r.u32()?);
        let patch_grid = PatchGrid::new(patch_origin, cell_size, n_rows, n_cols);
        let n_nodes = r.u64()? as usize;
        let n_edges = r.u64()? as usize;
        let n_subs = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let kind = r.u8()?;
            let pos = PlanarPoint::new(r.f64()?, r.f64()?);
            let customers = r.u32()?;
            let area = r.u32()?;
            nodes.push((kind, pos, customers, area));
        }
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            edges.push(Edge {
                a: r.u32()?,
                b: r.u32()?,
                length: r.f64()?,
                tree_cover: r.f32()?,
                patch: r.u32()?,
            });
        }
        let mut substations = Vec::with_capacity(n_subs);
        for _ in 0..n_subs {
            substations.push(r.u32()?);
        }
        let mut area_names = Vec::with_capacity(n_subs);
        for _ in 0..n_subs {
            let len = r.u16()? as usize;
            let mut buf = vec![0u8; len];
            r.inner.read_exact(&mut buf)?;
            let name = String::from_utf8(buf)
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "area name not UTF-8"))?;
            area_names.push(name);
        }

        let nodes: Vec<Node> = nodes
            .into_iter()
            .map(|(kind, pos, customers, area)| {
                let kind = match kind {
                    0 => NodeKind::Substation,
                    1 => NodeKind::Pole,
                    2 => NodeKind::Load,
                    other => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("unknown node kind {other}"),
                        ))
                    }
                };
                Ok(Node {
                    kind,
                    pos,
                    customers,
                    area: (area != NO_AREA).then_some(area),
                })
            })
            .collect::<io::Result<_>>()?;
        Ok(NetworkGraph::new(
            nodes,
            edges,
            substations,
            area_names,
            origin,
            patch_grid,
        ))
    };
    let g = parse(&mut r).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof || e.kind() == io::ErrorKind::InvalidData {
            corrupt(&e.to_string())
        } else {
            io_err(e)
        }
    })?;

    // Bounds checks before anyone indexes with these ids.
    let n = g.nodes.len() as u32;
    for e in &g.edges {
        if e.a >= n || e.b >= n {
            return Err(corrupt("edge endpoint out of range"));
        }
        if e.patch as usize >= g.patch_grid.n_patches() {
            return Err(corrupt("edge patch out of range"));
        }
    }
    for (a, &s) in g.substations.iter().enumerate() {
        if s >= n {
            return Err(corrupt("substation id out of range"));
        }
        if g.nodes[s as usize].kind != NodeKind::Substation {
            return Err(corrupt("substation id does not point at a substation node"));
        }
        if g.nodes[s as usize].area != Some(a as u32) {
            return Err(corrupt("substation not assigned to its own area"));
        }
    }
    for node in &g.nodes {
        if let Some(a) = node.area {
            if a as usize >= g.substations.len() {
                return Err(corrupt("node area out of range"));
            }
        }
    }
    Ok(g)
}

/// GeoJSON FeatureCollection with one Point per node and one LineString per
/// edge. Written streaming; Detroit-scale networks produce files in the
/// hundreds of megabytes, so no DOM is built.
pub fn write_network_geojson(path: &Path, g: &NetworkGraph) -> Result<(), GraphIoError> {
    let io_err = |source| GraphIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    (|| -> io::Result<()> {
        write!(w, "{{\"type\":\"FeatureCollection\",\"features\":[")?;
        let mut first = true;
        for (id, node) in g.nodes.iter().enumerate() {
            if !first {
                write!(w, ",")?;
            }
            first = false;
            let p = unproject(node.pos, g.origin);
            let kind = match node.kind {
                NodeKind::Substation => "substation",
                NodeKind::Pole => "pole",
                NodeKind::Load => "load",
            };
            let area = match node.area {
                Some(a) => serde_json::to_string(&g.area_names[a as usize]).unwrap(),
                None => "null".to_string(),
            };
            write!(
                w,
                "{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\
                 \"properties\":{{\"id\":{id},\"kind\":\"{kind}\",\"customers\":{},\"area\":{area}}}}}",
                p.lon, p.lat, node.customers
            )?;
        }
        for (id, e) in g.edges.iter().enumerate() {
            let pa = unproject(g.nodes[e.a as usize].pos, g.origin);
            let pb = unproject(g.nodes[e.b as usize].pos, g.origin);
            write!(
                w,
                ",{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"LineString\",\"coordinates\":\
                 [[{},{}],[{},{}]]}},\"properties\":{{\"id\":{id},\"length_m\":{},\"tree_cover\":{},\
                 \"patch\":{}}}}}",
                pa.lon, pa.lat, pb.lon, pb.lat, e.length, e.tree_cover, e.patch
            )?;
        }
        write!(w, "]}}")?;
        w.flush()
    })()
    .map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_testbed, synthesize, NetworkInputs, SynthConfig, TestbedSpec};
    use tempfile::tempdir;

    fn small_graph() -> NetworkGraph {
        let spec = TestbedSpec {
            rows: 4,
            cols: 4,
            n_buildings: 40,
            n_substations: 2,
            ..TestbedSpec::default()
        };
        let data = generate_testbed(&spec, 42);
        let inputs = NetworkInputs {
            substations: data.substations,
            roads: data.roads,
            buildings: data.buildings,
            tree: data.tree,
        };
        synthesize(&inputs, &SynthConfig::default()).unwrap().0
    }

    #[test]
    fn binary_roundtrip_preserves_everything() {
        let g = small_graph();
        let dir = tempdir().unwrap();
        let path = dir.path().join("network.bin");
        write_graph(&path, &g).unwrap();
        let back = read_graph(&path).unwrap();
        assert_eq!(back.nodes, g.nodes);
        assert_eq!(back.edges, g.edges);
        assert_eq!(back.substations, g.substations);
        assert_eq!(back.area_names, g.area_names);
        assert_eq!(back.origin, g.origin);
        assert_eq!(back.patch_grid.origin, g.patch_grid.origin);
        assert_eq!(back.patch_grid.cell_size, g.patch_grid.cell_size);
        assert_eq!(back.area_customers(), g.area_customers());
    }

    #[test]
    fn writes_are_byte_identical() {
        let g = small_graph();
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
        write_graph(&p1, &g).unwrap();
        write_graph(&p2, &g).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bogus.bin");
        fs::write(&path, b"PNG\x00garbage").unwrap();
        assert!(matches!(read_graph(&path), Err(GraphIoError::BadMagic { .. })));

        let g = small_graph();
        let full = dir.path().join("full.bin");
        write_graph(&full, &g).unwrap();
        let bytes = fs::read(&full).unwrap();
        let cut = dir.path().join("cut.bin");
        fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_graph(&cut), Err(GraphIoError::Corrupt { .. })));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        fs::write(&cut, &wrong_version).unwrap();
        assert!(matches!(
            read_graph(&cut),
            Err(GraphIoError::UnsupportedVersion { found: 99, .. })
        ));
    }

    #[test]
    fn geojson_parses_and_counts_match() {
        let g = small_graph();
        let dir = tempdir().unwrap();
        let path = dir.path().join("network.geojson");
        write_network_geojson(&path, &g).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        let features = v["features"].as_array().unwrap();
        assert_eq!(features.len(), g.nodes.len() + g.edges.len());
        // First feature is node 0; coordinates match the projection inverse.
        let p = unproject(g.nodes[0].pos, g.origin);
        let coords = features[0]["geometry"]["coordinates"].as_array().unwrap();
        assert!((coords[0].as_f64().unwrap() - p.lon).abs() < 1e-12);
        assert!((coords[1].as_f64().unwrap() - p.lat).abs() < 1e-12);
        // Substation features carry their area name.
        let sub = &features[g.substations[0] as usize];
        assert_eq!(sub["properties"]["kind"], "substation");
        assert_eq!(sub["properties"]["area"], g.area_names[0]);
    }
}
