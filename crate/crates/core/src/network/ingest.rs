//! Readers and writers for the plain-text input formats: substation and
//! building CSVs, road polyline JSONL, the tree-cover raster, and recorded
//! wind samples.
//!
//! Readers collect per-record problems instead of failing fast; a file is
//! rejected only when it is structurally broken or when more than 1% of its
//! records are invalid.

use crate::geo::GeoPoint;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SubstationRec {
    pub id: u32,
    pub name: String,
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadPolyline {
    pub points: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingRec {
    pub pos: GeoPoint,
    pub floor_area_m2: f64,
    pub residential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSampleRec {
    pub speed_mps: f64,
    pub is_gust: bool,
}

/// Tree canopy fraction raster, row-major with row 0 at the southern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRaster {
    pub origin: GeoPoint,
    pub cell_m: f64,
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<f32>,
}

impl TreeRaster {
    /// Canopy fraction at a point; positions outside the raster clamp to the
    /// nearest cell so edges near the boundary still get a value.
    pub fn cover_at(&self, p: GeoPoint) -> f32 {
        let pp = crate::geo::project(p, self.origin);
        let col = (pp.x / self.cell_m).floor().clamp(0.0, (self.cols - 1) as f64) as u32;
        let row = (pp.y / self.cell_m).floor().clamp(0.0, (self.rows - 1) as f64) as u32;
        self.values[(row * self.cols + col) as usize]
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    BadHeader {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path} line {line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {invalid} of {total} records invalid, over the 1% abort threshold")]
    TooManyInvalid {
        path: PathBuf,
        invalid: usize,
        total: usize,
    },
    #[error("{path}: no valid records")]
    Empty { path: PathBuf },
}

/// A parse problem on one record; the record is skipped, not fatal.
#[derive(Debug, Clone)]
pub struct RecordIssue {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub issues: Vec<RecordIssue>,
}

impl<T> Ingested<T> {
    fn total(&self) -> usize {
        self.records.len() + self.issues.len()
    }

    /// Abort threshold: more than 1% invalid records means the file itself is
    /// suspect and the run must not continue on a silently thinned dataset.
    fn enforce_threshold(self, path: &Path) -> Result<Self, IngestError> {
        if self.issues.len() * 100 > self.total() {
            return Err(IngestError::TooManyInvalid {
                path: path.to_path_buf(),
                invalid: self.issues.len(),
                total: self.total(),
            });
        }
        Ok(self)
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, IngestError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn csv_reader(path: &Path, expected_header: &'static str) -> Result<csv::Reader<BufReader<fs::File>>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(open(path)?);
    let found = rdr
        .headers()
        .map_err(|e| IngestError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != expected_header {
        return Err(IngestError::BadHeader {
            path: path.to_path_buf(),
            expected: expected_header,
            found,
        });
    }
    Ok(rdr)
}

fn parse_point(lat: &str, lon: &str) -> Result<GeoPoint, String> {
    let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude {lat:?}"))?;
    let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude {lon:?}"))?;
    GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

/// `substations.csv`: `id,name,lat,lon`. Order defines the area ids used
/// everywhere downstream.
pub fn load_substations(path: &Path) -> Result<Ingested<SubstationRec>, IngestError> {
    let mut rdr = csv_reader(path, "id,name,lat,lon")?;
    let mut out = Ingested {
        records: Vec::new(),
        issues: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if rec.len() != 4 {
                    return Err(format!("expected 4 fields, found {}", rec.len()));
                }
                let id: u32 = rec[0].trim().parse().map_err(|_| format!("bad id {:?}", &rec[0]))?;
                let name = rec[1].trim().to_owned();
                if name.is_empty() {
                    return Err("empty name".into());
                }
                let pos = parse_point(&rec[2], &rec[3])?;
                Ok(SubstationRec { id, name, pos })
            });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(msg) => out.issues.push(RecordIssue { line, msg }),
        }
    }
    let out = out.enforce_threshold(path)?;
    if out.records.is_empty() {
        return Err(IngestError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

/// `roads.jsonl`: one JSON array of `[lat, lon]` pairs per line.
pub fn load_roads(path: &Path) -> Result<Ingested<RoadPolyline>, IngestError> {
    let mut out = Ingested {
        records: Vec::new(),
        issues: Vec::new(),
    };
    for (i, line) in open(path)?.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Vec<[f64; 2]>>(&line)
            .map_err(|e| e.to_string())
            .and_then(|pairs| {
                if pairs.len() < 2 {
                    return Err(format!("polyline needs at least 2 points, found {}", pairs.len()));
                }
                pairs
                    .iter()
                    .map(|&[lat, lon]| GeoPoint::new(lat, lon).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()
            });
        match parsed {
            Ok(points) => out.records.push(RoadPolyline { points }),
            Err(msg) => out.issues.push(RecordIssue { line: lineno, msg }),
        }
    }
    let out = out.enforce_threshold(path)?;
    if out.records.is_empty() {
        return Err(IngestError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

/// `buildings.csv`: `lat,lon,floor_area_m2,residential` with residential as
/// `0`/`1`. An empty file is legal (a network with no customers).
pub fn load_buildings(path: &Path) -> Result<Ingested<BuildingRec>, IngestError> {
    let mut rdr = csv_reader(path, "lat,lon,floor_area_m2,residential")?;
    let mut out = Ingested {
        records: Vec::new(),
        issues: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if rec.len() != 4 {
                    return Err(format!("expected 4 fields, found {}", rec.len()));
                }
                let pos = parse_point(&rec[0], &rec[1])?;
                let floor_area_m2: f64 = rec[2]
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad floor area {:?}", &rec[2]))?;
                if !(floor_area_m2 > 0.0 && floor_area_m2.is_finite()) {
                    return Err(format!("floor area must be positive, found {floor_area_m2}"));
                }
                let residential = parse_flag(&rec[3])?;
                Ok(BuildingRec {
                    pos,
                    floor_area_m2,
                    residential,
                })
            });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(msg) => out.issues.push(RecordIssue { line, msg }),
        }
    }
    out.enforce_threshold(path)
}

/// `wind_samples.csv`: `speed_mps,is_gust` observations used to fit the wind
/// speed distributions.
pub fn load_wind_samples(path: &Path) -> Result<Ingested<WindSampleRec>, IngestError> {
    let mut rdr = csv_reader(path, "speed_mps,is_gust")?;
    let mut out = Ingested {
        records: Vec::new(),
        issues: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if rec.len() != 2 {
                    return Err(format!("expected 2 fields, found {}", rec.len()));
                }
                let speed_mps: f64 = rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad speed {:?}", &rec[0]))?;
                if !(speed_mps > 0.0 && speed_mps.is_finite()) {
                    return Err(format!("speed must be positive, found {speed_mps}"));
                }
                let is_gust = parse_flag(&rec[1])?;
                Ok(WindSampleRec { speed_mps, is_gust })
            });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(msg) => out.issues.push(RecordIssue { line, msg }),
        }
    }
    let out = out.enforce_threshold(path)?;
    if out.records.is_empty() {
        return Err(IngestError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

fn parse_flag(field: &str) -> Result<bool, String> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, found {other:?}")),
    }
}

/// `tree_cover.grid`: header `lat lon cell_m rows cols`, then `rows * cols`
/// whitespace-separated canopy fractions, southern row first. The raster is
/// structural — any bad token rejects the file.
pub fn load_tree_raster(path: &Path) -> Result<TreeRaster, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, msg: String| IngestError::Malformed {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty raster file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(malformed(
            header_line + 1,
            format!("header needs 5 fields (lat lon cell_m rows cols), found {}", fields.len()),
        ));
    }
    let parse_f = |s: &str, what: &str| -> Result<f64, IngestError> {
        s.parse()
            .map_err(|_| malformed(header_line + 1, format!("bad {what} {s:?}")))
    };
    let origin = GeoPoint::new(parse_f(fields[0], "latitude")?, parse_f(fields[1], "longitude")?)
        .map_err(|e| malformed(header_line + 1, e.to_string()))?;
    let cell_m = parse_f(fields[2], "cell size")?;
    if cell_m <= 0.0 || cell_m.is_nan() {
        return Err(malformed(header_line + 1, format!("cell size must be positive, found {cell_m}")));
    }
    let rows: u32 = fields[3]
        .parse()
        .map_err(|_| malformed(header_line + 1, format!("bad row count {:?}", fields[3])))?;
    let cols: u32 = fields[4]
        .parse()
        .map_err(|_| malformed(header_line + 1, format!("bad column count {:?}", fields[4])))?;
    if rows == 0 || cols == 0 {
        return Err(malformed(header_line + 1, "raster must have at least one cell".into()));
    }

    let mut values = Vec::with_capacity((rows * cols) as usize);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| malformed(i + 1, format!("bad canopy value {tok:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(malformed(i + 1, format!("canopy value {v} outside [0, 1]")));
            }
            values.push(v);
        }
    }
    if values.len() != (rows * cols) as usize {
        return Err(malformed(
            header_line + 1,
            format!("expected {} values, found {}", rows * cols, values.len()),
        ));
    }
    Ok(TreeRaster {
        origin,
        cell_m,
        rows,
        cols,
        values,
    })
}

/// All four network inputs plus wind samples, with per-record issues logged.
#[derive(Debug)]
pub struct NetworkInputs {
    pub substations: Vec<SubstationRec>,
    pub roads: Vec<RoadPolyline>,
    pub buildings: Vec<BuildingRec>,
    pub tree: TreeRaster,
}

pub fn load_inputs(
    substations: &Path,
    roads: &Path,
    buildings: &Path,
    tree: &Path,
) -> Result<NetworkInputs, IngestError> {
    let subs = load_substations(substations)?;
    let roads_in = load_roads(roads)?;
    let bldgs = load_buildings(buildings)?;
    for (path, issues) in [
        (substations, &subs.issues),
        (roads, &roads_in.issues),
        (buildings, &bldgs.issues),
    ] {
        for issue in issues {
            log::warn!("{} line {}: skipped record: {}", path.display(), issue.line, issue.msg);
        }
    }
    Ok(NetworkInputs {
        substations: subs.records,
        roads: roads_in.records,
        buildings: bldgs.records,
        tree: load_tree_raster(tree)?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), IngestError> {
    fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_substations_csv(path: &Path, recs: &[SubstationRec]) -> Result<(), IngestError> {
    let mut out = String::from("id,name,lat,lon\n");
    for r in recs {
        writeln!(out, "{},{},{},{}", r.id, r.name, r.pos.lat, r.pos.lon).unwrap();
    }
    write_text(path, &out)
}

pub fn write_roads_jsonl(path: &Path, roads: &[RoadPolyline]) -> Result<(), IngestError> {
    let mut out = String::new();
    for road in roads {
        let pairs: Vec<[f64; 2]> = road.points.iter().map(|p| [p.lat, p.lon]).collect();
        writeln!(out, "{}", serde_json::to_string(&pairs).unwrap()).unwrap();
    }
    write_text(path, &out)
}

pub fn write_buildings_csv(path: &Path, recs: &[BuildingRec]) -> Result<(), IngestError> {
    let mut out = String::from("lat,lon,floor_area_m2,residential\n");
    for r in recs {
        writeln!(
            out,
            "{},{},{},{}",
            r.pos.lat,
            r.pos.lon,
            r.floor_area_m2,
            r.residential as u8
        )
        .unwrap();
    }
    write_text(path, &out)
}

pub fn write_wind_samples_csv(path: &Path, recs: &[WindSampleRec]) -> Result<(), IngestError> {
    let mut out = String::from("speed_mps,is_gust\n");
    for r in recs {
        writeln!(out, "{},{}", r.speed_mps, r.is_gust as u8).unwrap();
    }
    write_text(path, &out)
}

pub fn write_tree_raster(path: &Path, raster: &TreeRaster) -> Result<(), IngestError> {
    let mut out = format!(
        "{} {} {} {} {}\n",
        raster.origin.lat, raster.origin.lon, raster.cell_m, raster.rows, raster.cols
    );
    for row in 0..raster.rows {
        let offset = (row * raster.cols) as usize;
        for col in 0..raster.cols as usize {
            if col > 0 {
                out.push(' ');
            }
            write!(out, "{}", raster.values[offset + col]).unwrap();
        }
        out.push('\n');
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn substations_roundtrip() {
        let dir = tempdir().unwrap();
        let recs = vec![
            SubstationRec {
                id: 14,
                name: "SUB14".into(),
                pos: GeoPoint::new(42.3314, -83.0458).unwrap(),
            },
            SubstationRec {
                id: 36,
                name: "SUB36".into(),
                pos: GeoPoint::new(42.35, -83.1).unwrap(),
            },
        ];
        let path = dir.path().join("substations.csv");
        write_substations_csv(&path, &recs).unwrap();
        let back = load_substations(&path).unwrap();
        assert!(back.issues.is_empty());
        assert_eq!(back.records, recs);
    }

    #[test]
    fn bad_substation_records_are_skipped_and_reported() {
        let dir = tempdir().unwrap();
        // 2 bad records out of 102 stays under the 1% threshold? No: 2/102 > 1%,
        // so build exactly 1 bad out of 200.
        let mut content = String::from("id,name,lat,lon\n");
        for i in 0..199 {
            content.push_str(&format!("{i},S{i},42.0,-83.0\n"));
        }
        content.push_str("199,S199,notanumber,-83.0\n");
        let path = write(dir.path(), "substations.csv", &content);
        let got = load_substations(&path).unwrap();
        assert_eq!(got.records.len(), 199);
        assert_eq!(got.issues.len(), 1);
        assert_eq!(got.issues[0].line, 201);
    }

    #[test]
    fn over_one_percent_invalid_aborts() {
        let dir = tempdir().unwrap();
        let mut content = String::from("id,name,lat,lon\n");
        for i in 0..97 {
            content.push_str(&format!("{i},S{i},42.0,-83.0\n"));
        }
        content.push_str("97,S97,91.0,-83.0\n"); // latitude out of range
        content.push_str("98,S98,42.0,xx\n");
        let path = write(dir.path(), "substations.csv", &content);
        match load_substations(&path) {
            Err(IngestError::TooManyInvalid { invalid, total, .. }) => {
                assert_eq!(invalid, 2);
                assert_eq!(total, 99);
            }
            other => panic!("expected TooManyInvalid, got {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_fatal() {
        let dir = tempdir().unwrap();
        let path = write(dir.path(), "substations.csv", "name,lat,lon\nS1,42.0,-83.0\n");
        assert!(matches!(
            load_substations(&path),
            Err(IngestError::BadHeader { .. })
        ));
    }

    #[test]
    fn roads_roundtrip_and_validation() {
        let dir = tempdir().unwrap();
        let roads = vec![RoadPolyline {
            points: vec![
                GeoPoint::new(42.0, -83.0).unwrap(),
                GeoPoint::new(42.001, -83.0).unwrap(),
                GeoPoint::new(42.001, -83.001).unwrap(),
            ],
        }];
        let path = dir.path().join("roads.jsonl");
        write_roads_jsonl(&path, &roads).unwrap();
        let back = load_roads(&path).unwrap();
        assert_eq!(back.records, roads);

        // single-point polyline is invalid, blank lines are ignored; enough
        // good lines keep the file under the abort threshold
        let mut content = String::new();
        for i in 0..100 {
            content.push_str(&format!("[[42.0,-83.0],[42.{:03},-83.0]]\n", i + 1));
        }
        content.push_str("\n[[42.0,-83.0]]\n");
        let path2 = write(dir.path(), "roads2.jsonl", &content);
        let got = load_roads(&path2).unwrap();
        assert_eq!(got.records.len(), 100);
        assert_eq!(got.issues.len(), 1);
        assert_eq!(got.issues[0].line, 102);
    }

    #[test]
    fn buildings_roundtrip_and_flags() {
        let dir = tempdir().unwrap();
        let recs = vec![
            BuildingRec {
                pos: GeoPoint::new(42.2, -83.2).unwrap(),
                floor_area_m2: 160.0,
                residential: true,
            },
            BuildingRec {
                pos: GeoPoint::new(42.3, -83.3).unwrap(),
                floor_area_m2: 1200.0,
                residential: false,
            },
        ];
        let path = dir.path().join("buildings.csv");
        write_buildings_csv(&path, &recs).unwrap();
        let back = load_buildings(&path).unwrap();
        assert_eq!(back.records, recs);

        let bad = write(
            dir.path(),
            "bad.csv",
            "lat,lon,floor_area_m2,residential\n42.0,-83.0,0.0,1\n42.0,-83.0,100.0,2\n",
        );
        let got = load_buildings(&bad);
        assert!(
            matches!(got, Err(IngestError::TooManyInvalid { invalid: 2, total: 2, .. })),
            "zero area and flag=2 must both be invalid"
        );
    }

    #[test]
    fn wind_samples_roundtrip() {
        let dir = tempdir().unwrap();
        let recs = vec![
            WindSampleRec {
                speed_mps: 21.5,
                is_gust: true,
            },
            WindSampleRec {
                speed_mps: 8.25,
                is_gust: false,
            },
        ];
        let path = dir.path().join("wind_samples.csv");
        write_wind_samples_csv(&path, &recs).unwrap();
        let back = load_wind_samples(&path).unwrap();
        assert_eq!(back.records, recs);
    }

    #[test]
    fn tree_raster_roundtrip_and_lookup() {
        let dir = tempdir().unwrap();
        let raster = TreeRaster {
            origin: GeoPoint::new(42.0, -83.0).unwrap(),
            cell_m: 100.0,
            rows: 2,
            cols: 3,
            values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        };
        let path = dir.path().join("tree_cover.grid");
        write_tree_raster(&path, &raster).unwrap();
        let back = load_tree_raster(&path).unwrap();
        assert_eq!(back, raster);

        // cell centers resolve to their own value; out-of-range clamps
        let at = |x: f64, y: f64| {
            let p = crate::geo::unproject(crate::geo::PlanarPoint::new(x, y), raster.origin);
            raster.cover_at(p)
        };
        assert_eq!(at(50.0, 50.0), 0.1);
        assert_eq!(at(250.0, 50.0), 0.3);
        assert_eq!(at(150.0, 150.0), 0.5);
        assert_eq!(at(-40.0, -40.0), 0.1, "south-west overhang clamps to corner cell");
        assert_eq!(at(1e4, 1e4), 0.6, "north-east overhang clamps to corner cell");
    }

    #[test]
    fn tree_raster_value_count_mismatch_is_fatal() {
        let dir = tempdir().unwrap();
        let path = write(dir.path(), "t.grid", "42.0 -83.0 100.0 2 2\n0.1 0.2 0.3\n");
        assert!(matches!(load_tree_raster(&path), Err(IngestError::Malformed { .. })));
    }

    #[test]
    fn tree_raster_rejects_out_of_range_canopy() {
        let dir = tempdir().unwrap();
        let path = write(dir.path(), "t.grid", "42.0 -83.0 100.0 1 2\n0.1 1.2\n");
        assert!(matches!(load_tree_raster(&path), Err(IngestError::Malformed { .. })));
    }
}
