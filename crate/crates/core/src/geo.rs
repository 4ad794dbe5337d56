//! Spatial primitives: planar projection, a uniform-grid nearest-neighbor
//! index, and the patch grid that discretizes the study area for the wind
//! field.
//!
//! Everything here is immutable after construction and shared read-only by
//! the parallel episode workers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters, used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Cell size of the nearest-neighbor grid hash. Bulk-loaded once, queried
/// billions of times, never rebalanced.
const INDEX_CELL_M: f64 = 100.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("latitude {0} out of range [-90, 90]")]
    BadLatitude(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    BadLongitude(f64),
    #[error("nearest-neighbor query on an empty index")]
    EmptyIndex,
    #[error("point ({x}, {y}) lies outside the patch grid beyond the clamp margin")]
    OutOfGrid { x: f64, y: f64 },
}

/// WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(GeoError::BadLatitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(GeoError::BadLongitude(lon));
        }
        Ok(Self { lat, lon })
    }
}

/// Local planar coordinate: meters east/north of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &PlanarPoint) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &PlanarPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Equirectangular projection around `origin`. At city scale the error
/// against true geodesics is well under 1%, which is all the hot path needs.
pub fn project(p: GeoPoint, origin: GeoPoint) -> PlanarPoint {
    let x = EARTH_RADIUS_M * (p.lon - origin.lon).to_radians() * origin.lat.to_radians().cos();
    let y = EARTH_RADIUS_M * (p.lat - origin.lat).to_radians();
    PlanarPoint { x, y }
}

/// Inverse of [`project`], used when exporting planar geometry to GeoJSON.
pub fn unproject(p: PlanarPoint, origin: GeoPoint) -> GeoPoint {
    let lat = origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (p.x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPoint { lat, lon }
}

/// Great-circle distance in meters. Reference for projection accuracy checks
/// and not used in the hot path.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlam = (b.lon - a.lon).to_radians();
    let s = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlam / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().asin()
}

/// Uniform grid hash over planar points supporting exact nearest-neighbor
/// queries. Ties break toward the lowest item id.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    min_x: f64,
    min_y: f64,
    n_cols: i64,
    n_rows: i64,
    /// CSR layout: `starts[c]..starts[c+1]` indexes `items` for cell `c`.
    starts: Vec<u32>,
    items: Vec<(u32, PlanarPoint)>,
}

impl GridIndex {
    /// Bulk-load `points`; item ids are the indices into `points`.
    pub fn build(points: &[PlanarPoint]) -> Self {
        Self::build_with_cell(points, INDEX_CELL_M)
    }

    pub fn build_with_cell(points: &[PlanarPoint], cell: f64) -> Self {
        assert!(cell > 0.0);
        if points.is_empty() {
            return Self {
                cell,
                min_x: 0.0,
                min_y: 0.0,
                n_cols: 1,
                n_rows: 1,
                starts: vec![0, 0],
                items: Vec::new(),
            };
        }
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for p in points {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        let n_cols = ((max_x - min_x) / cell).floor() as i64 + 1;
        let n_rows = ((max_y - min_y) / cell).floor() as i64 + 1;
        let n_cells = (n_cols * n_rows) as usize;

        let cell_of = |p: &PlanarPoint| -> usize {
            let cx = (((p.x - min_x) / cell).floor() as i64).clamp(0, n_cols - 1);
            let cy = (((p.y - min_y) / cell).floor() as i64).clamp(0, n_rows - 1);
            (cy * n_cols + cx) as usize
        };

        let mut counts = vec![0u32; n_cells + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![(0u32, PlanarPoint::new(0.0, 0.0)); points.len()];
        // Insert in id order so each cell's bucket is id-sorted.
        for (id, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = (id as u32, *p);
            fill[c] += 1;
        }
        Self {
            cell,
            min_x,
            min_y,
            n_cols,
            n_rows,
            starts,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Exact nearest item to `q` by Euclidean distance; ties break toward the
    /// lowest item id. Expanding-ring search: a point in a cell at Chebyshev
    /// ring `r` is at least `(r-1)*cell` away, so the scan stops as soon as
    /// that bound exceeds the best distance found.
    pub fn nearest(&self, q: PlanarPoint) -> Result<u32, GeoError> {
        if self.items.is_empty() {
            return Err(GeoError::EmptyIndex);
        }
        let qcx = ((q.x - self.min_x) / self.cell).floor() as i64;
        let qcy = ((q.y - self.min_y) / self.cell).floor() as i64;

        let mut best: Option<(f64, u32)> = None;
        let max_ring = self.n_cols.max(self.n_rows)
            + (qcx.max(self.n_cols - 1 - qcx).max(0) + qcy.max(self.n_rows - 1 - qcy).max(0));
        for ring in 0..=max_ring {
            if let Some((d_sq, _)) = best {
                let lower = (ring - 1).max(0) as f64 * self.cell;
                if lower * lower > d_sq {
                    break;
                }
            }
            self.scan_ring(qcx, qcy, ring, q, &mut best);
        }
        Ok(best.expect("non-empty index always yields a nearest item").1)
    }

    fn scan_ring(&self, qcx: i64, qcy: i64, ring: i64, q: PlanarPoint, best: &mut Option<(f64, u32)>) {
        let mut visit = |cx: i64, cy: i64| {
            if cx < 0 || cy < 0 || cx >= self.n_cols || cy >= self.n_rows {
                return;
            }
            let c = (cy * self.n_cols + cx) as usize;
            for &(id, p) in &self.items[self.starts[c] as usize..self.starts[c + 1] as usize] {
                let d_sq = q.dist_sq(&p);
                let better = match *best {
                    None => true,
                    Some((bd, bid)) => d_sq < bd || (d_sq == bd && id < bid),
                };
                if better {
                    *best = Some((d_sq, id));
                }
            }
        };
        if ring == 0 {
            visit(qcx, qcy);
            return;
        }
        for cx in (qcx - ring)..=(qcx + ring) {
            visit(cx, qcy - ring);
            visit(cx, qcy + ring);
        }
        for cy in (qcy - ring + 1)..(qcy + ring) {
            visit(qcx - ring, cy);
            visit(qcx + ring, cy);
        }
    }
}

/// Row-major grid of square patches covering the study area. Wind speed is
/// uniform within a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub origin: PlanarPoint,
    pub cell_size: f64,
    pub n_rows: u32,
    pub n_cols: u32,
}

impl PatchGrid {
    pub fn new(origin: PlanarPoint, cell_size: f64, n_rows: u32, n_cols: u32) -> Self {
        assert!(cell_size > 0.0 && n_rows >= 1 && n_cols >= 1);
        Self {
            origin,
            cell_size,
            n_rows,
            n_cols,
        }
    }

    /// Grid covering the axis-aligned bounding box of `points`.
    pub fn covering(points: impl Iterator<Item = PlanarPoint>, cell_size: f64) -> Self {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        let mut any = false;
        for p in points {
            any = true;
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        if !any {
            return Self::new(PlanarPoint::new(0.0, 0.0), cell_size, 1, 1);
        }
        let n_cols = ((max_x - min_x) / cell_size).floor() as u32 + 1;
        let n_rows = ((max_y - min_y) / cell_size).floor() as u32 + 1;
        Self::new(PlanarPoint::new(min_x, min_y), cell_size, n_rows, n_cols)
    }

    pub fn n_patches(&self) -> usize {
        self.n_rows as usize * self.n_cols as usize
    }

    /// Row-major patch index of `p`. Points within `cell_size / 2` outside
    /// the bounds clamp to the boundary cell; anything farther is an error.
    pub fn patch_of(&self, p: PlanarPoint) -> Result<u32, GeoError> {
        let margin = self.cell_size / 2.0;
        let rel_x = p.x - self.origin.x;
        let rel_y = p.y - self.origin.y;
        let span_x = self.n_cols as f64 * self.cell_size;
        let span_y = self.n_rows as f64 * self.cell_size;
        if rel_x < -margin || rel_y < -margin || rel_x > span_x + margin || rel_y > span_y + margin
        {
            return Err(GeoError::OutOfGrid { x: p.x, y: p.y });
        }
        let col = ((rel_x / self.cell_size).floor() as i64).clamp(0, self.n_cols as i64 - 1);
        let row = ((rel_y / self.cell_size).floor() as i64).clamp(0, self.n_rows as i64 - 1);
        Ok((row * self.n_cols as i64 + col) as u32)
    }

    /// Center of patch `idx` in planar coordinates.
    pub fn patch_center(&self, idx: u32) -> PlanarPoint {
        let row = (idx / self.n_cols) as f64;
        let col = (idx % self.n_cols) as f64;
        PlanarPoint::new(
            self.origin.x + (col + 0.5) * self.cell_size,
            self.origin.y + (row + 0.5) * self.cell_size,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn origin() -> GeoPoint {
        GeoPoint::new(42.33, -83.05).unwrap()
    }

    #[test]
    fn project_identity_at_origin() {
        let o = origin();
        let p = project(o, o);
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn project_pure_latitude_offset() {
        let o = origin();
        let delta = 0.01;
        let p = project(GeoPoint::new(o.lat + delta, o.lon).unwrap(), o);
        assert_eq!(p.x, 0.0);
        let expected = EARTH_RADIUS_M * delta.to_radians();
        assert!((p.y - expected).abs() < 1e-9, "y = {}, want {}", p.y, expected);
    }

    #[test]
    fn project_matches_haversine_oracle() {
        let o = origin();
        let p = GeoPoint::new(42.40, -83.10).unwrap();
        let planar = project(p, o);
        let planar_dist = (planar.x * planar.x + planar.y * planar.y).sqrt();
        let true_dist = haversine_m(p, o);
        let rel_err = (planar_dist - true_dist).abs() / true_dist;
        assert!(rel_err < 0.005, "relative error {rel_err} vs haversine");
    }

    #[test]
    fn project_preserves_pairwise_distances_within_1pct() {
        let o = origin();
        let mut rng = crate::rng::stream(11, crate::rng::StreamPurpose::Testbed, 0);
        for _ in 0..200 {
            // Points up to ~50 km from the origin.
            let a = GeoPoint::new(o.lat + rng.gen_range(-0.2..0.2), o.lon + rng.gen_range(-0.3..0.3)).unwrap();
            let b = GeoPoint::new(o.lat + rng.gen_range(-0.2..0.2), o.lon + rng.gen_range(-0.3..0.3)).unwrap();
            let true_dist = haversine_m(a, b);
            if true_dist < 100.0 {
                continue; // relative error meaningless at trivial separation
            }
            let planar_dist = project(a, o).dist(&project(b, o));
            let rel_err = (planar_dist - true_dist).abs() / true_dist;
            assert!(rel_err < 0.01, "pair error {rel_err} at separation {true_dist} m");
        }
    }

    #[test]
    fn unproject_round_trips() {
        let o = origin();
        let p = GeoPoint::new(42.40, -83.10).unwrap();
        let back = unproject(project(p, o), o);
        assert!((back.lat - p.lat).abs() < 1e-9);
        assert!((back.lon - p.lon).abs() < 1e-9);
    }

    #[test]
    fn nearest_single_item() {
        let idx = GridIndex::build(&[PlanarPoint::new(5.0, 5.0)]);
        assert_eq!(idx.nearest(PlanarPoint::new(1000.0, -400.0)).unwrap(), 0);
    }

    #[test]
    fn nearest_exact_hit() {
        let pts = vec![
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(250.0, 30.0),
            PlanarPoint::new(-90.0, 410.0),
        ];
        let idx = GridIndex::build(&pts);
        assert_eq!(idx.nearest(pts[1]).unwrap(), 1);
    }

    #[test]
    fn nearest_empty_index_errors() {
        let idx = GridIndex::build(&[]);
        assert!(matches!(idx.nearest(PlanarPoint::new(0.0, 0.0)), Err(GeoError::EmptyIndex)));
    }

    #[test]
    fn nearest_tie_breaks_to_lowest_id() {
        // Two items at mirrored positions, query dead center.
        let pts = vec![PlanarPoint::new(-50.0, 0.0), PlanarPoint::new(50.0, 0.0)];
        let idx = GridIndex::build(&pts);
        assert_eq!(idx.nearest(PlanarPoint::new(0.0, 0.0)).unwrap(), 0);
    }

    #[test]
    fn nearest_matches_linear_scan_oracle() {
        let mut rng = crate::rng::stream(7, crate::rng::StreamPurpose::Testbed, 0);
        let pts: Vec<PlanarPoint> = (0..1000)
            .map(|_| PlanarPoint::new(rng.gen_range(-5000.0..5000.0), rng.gen_range(-5000.0..5000.0)))
            .collect();
        let idx = GridIndex::build(&pts);
        for _ in 0..100 {
            let q = PlanarPoint::new(rng.gen_range(-6000.0..6000.0), rng.gen_range(-6000.0..6000.0));
            let got = idx.nearest(q).unwrap();
            let want = pts
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| {
                    q.dist_sq(a).partial_cmp(&q.dist_sq(b)).unwrap().then(i.cmp(j))
                })
                .unwrap()
                .0 as u32;
            assert_eq!(got, want, "query ({}, {})", q.x, q.y);
        }
    }

    #[test]
    fn patch_of_origin_is_zero() {
        let grid = PatchGrid::new(PlanarPoint::new(0.0, 0.0), 500.0, 4, 4);
        assert_eq!(grid.patch_of(PlanarPoint::new(0.0, 0.0)).unwrap(), 0);
    }

    #[test]
    fn patch_of_direct_arithmetic() {
        let grid = PatchGrid::new(PlanarPoint::new(0.0, 0.0), 500.0, 4, 4);
        assert_eq!(grid.patch_of(PlanarPoint::new(750.0, 0.0)).unwrap(), 1);
    }

    #[test]
    fn patch_of_clamps_within_half_cell() {
        let grid = PatchGrid::new(PlanarPoint::new(0.0, 0.0), 500.0, 2, 2);
        // 200 m outside the west edge: clamps into column 0.
        assert_eq!(grid.patch_of(PlanarPoint::new(-200.0, 100.0)).unwrap(), 0);
        // 300 m outside exceeds the cell_size/2 margin.
        assert!(grid.patch_of(PlanarPoint::new(-300.0, 100.0)).is_err());
    }

    #[test]
    fn patch_occupancy_uniform_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let grid = PatchGrid::new(PlanarPoint::new(0.0, 0.0), 100.0, 8, 8);
        let mut rng = crate::rng::stream(13, crate::rng::StreamPurpose::Testbed, 0);
        let n = 64_000usize;
        let mut counts = vec![0u32; grid.n_patches()];
        for _ in 0..n {
            let p = PlanarPoint::new(rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0));
            counts[grid.patch_of(p).unwrap() as usize] += 1;
        }
        let expected = n as f64 / counts.len() as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        let p_value = 1.0 - dist.cdf(stat);
        assert!(p_value > 0.01, "chi-square stat {stat}, p = {p_value}");
    }

    #[test]
    fn patch_of_total_over_covering_grid() {
        let mut rng = crate::rng::stream(17, crate::rng::StreamPurpose::Testbed, 0);
        let pts: Vec<PlanarPoint> = (0..500)
            .map(|_| PlanarPoint::new(rng.gen_range(-3000.0..3000.0), rng.gen_range(-3000.0..3000.0)))
            .collect();
        let grid = PatchGrid::covering(pts.iter().copied(), 500.0);
        for p in &pts {
            grid.patch_of(*p).expect("covering grid assigns every source point a patch");
        }
    }

    #[test]
    fn geo_point_validation() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
        assert!(GeoPoint::new(45.0, 45.0).is_ok());
    }
}
