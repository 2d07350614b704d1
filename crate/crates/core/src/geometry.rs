//! Geometry kernel for city-scale shapes given in WGS84 degrees.
//!
//! Distances between points use the haversine formula on a sphere of radius
//! [`EARTH_RADIUS_KM`]. Everything that needs planar math (area, containment,
//! overlap, polyline splitting, Monte Carlo sampling) is done in a Lambert
//! azimuthal equal-area projection centered on the shape being processed.
//! Zones are well under a few km across, so the planar error is negligible.

use geo::{Area, BooleanOps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Default bracketing tolerance for boundary crossings, 1 m.
pub const DEFAULT_SPLIT_TOLERANCE_KM: f64 = 0.001;

/// Points closer than this (km, 1 mm) to a ring edge count as on the boundary.
const BOUNDARY_EPS_KM: f64 = 1e-6;

const STALL_WINDOW: u64 = 1_000_000;
const STALL_MIN_RATE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid coordinate (lon {lon}, lat {lat})")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid tolerance {0} km, must be > 0")]
    InvalidTolerance(f64),
    #[error("rejection sampling stalled: {accepted} of {attempts} samples accepted")]
    SamplingStalled { accepted: u64, attempts: u64 },
    #[error("invalid Monte Carlo config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        let p = Self { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeometryError::InvalidCoordinate { lon, lat })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Lambert azimuthal equal-area projection on the sphere, output in km.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    lon0: f64,
    sin_lat0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn centered_at(center: GeoPoint) -> Self {
        let lat0 = center.lat.to_radians();
        Self {
            lon0: center.lon.to_radians(),
            sin_lat0: lat0.sin(),
            cos_lat0: lat0.cos(),
        }
    }

    pub fn forward(&self, p: GeoPoint) -> [f64; 2] {
        let lat = p.lat.to_radians();
        let dlon = p.lon.to_radians() - self.lon0;
        let (sin_lat, cos_lat) = lat.sin_cos();
        let cos_dlon = dlon.cos();
        let denom = 1.0 + self.sin_lat0 * sin_lat + self.cos_lat0 * cos_lat * cos_dlon;
        let k = (2.0 / denom).sqrt();
        [
            EARTH_RADIUS_KM * k * cos_lat * dlon.sin(),
            EARTH_RADIUS_KM * k * (self.cos_lat0 * sin_lat - self.sin_lat0 * cos_lat * cos_dlon),
        ]
    }

    pub fn inverse(&self, xy: [f64; 2]) -> GeoPoint {
        let [x, y] = xy;
        let rho = x.hypot(y);
        if rho == 0.0 {
            return GeoPoint {
                lon: self.lon0.to_degrees(),
                lat: self.sin_lat0.asin().to_degrees(),
            };
        }
        let c = 2.0 * (rho / (2.0 * EARTH_RADIUS_KM)).asin();
        let (sin_c, cos_c) = c.sin_cos();
        let lat = (cos_c * self.sin_lat0 + y * sin_c * self.cos_lat0 / rho).asin();
        let lon = self.lon0
            + (x * sin_c).atan2(rho * self.cos_lat0 * cos_c - y * self.sin_lat0 * sin_c);
        GeoPoint {
            lon: normalize_lon(lon.to_degrees()),
            lat: lat.to_degrees(),
        }
    }
}

fn normalize_lon(lon: f64) -> f64 {
    if lon > 180.0 {
        lon - 360.0
    } else if lon < -180.0 {
        lon + 360.0
    } else {
        lon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    fn of<'a>(pts: impl IntoIterator<Item = &'a [f64; 2]>) -> Self {
        let mut b = BBox {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for p in pts {
            b.expand(*p);
        }
        b
    }

    fn expand(&mut self, p: [f64; 2]) {
        for k in 0..2 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn intersects(&self, o: &BBox) -> bool {
        self.min[0] <= o.max[0]
            && o.min[0] <= self.max[0]
            && self.min[1] <= o.max[1]
            && o.min[1] <= self.max[1]
    }

    fn contains_within(&self, p: [f64; 2], slack: f64) -> bool {
        p[0] >= self.min[0] - slack
            && p[0] <= self.max[0] + slack
            && p[1] >= self.min[1] - slack
            && p[1] <= self.max[1] + slack
    }

    fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }
}

fn lonlat_center<'a>(pts: impl IntoIterator<Item = &'a GeoPoint>) -> GeoPoint {
    let b = BBox::of(pts.into_iter().map(|p| [p.lon, p.lat]).collect::<Vec<_>>().iter());
    let c = b.center();
    GeoPoint { lon: c[0], lat: c[1] }
}

/// Polygon with an exterior ring and optional holes. Rings are closed
/// (first point == last point) and have at least four points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon", into = "RawPolygon")]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

#[derive(Serialize, Deserialize)]
struct RawPolygon {
    exterior: Vec<GeoPoint>,
    #[serde(default)]
    holes: Vec<Vec<GeoPoint>>,
}

impl TryFrom<RawPolygon> for GeoPolygon {
    type Error = GeometryError;
    fn try_from(r: RawPolygon) -> Result<Self, Self::Error> {
        GeoPolygon::new(r.exterior, r.holes)
    }
}

impl From<GeoPolygon> for RawPolygon {
    fn from(p: GeoPolygon) -> Self {
        RawPolygon {
            exterior: p.exterior,
            holes: p.holes,
        }
    }
}

fn validate_ring(ring: &[GeoPoint], what: &str) -> Result<(), GeometryError> {
    if ring.len() < 4 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "{what} ring has {} points, need at least 4",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(GeometryError::DegenerateGeometry(format!(
            "{what} ring is not closed"
        )));
    }
    if let Some(p) = ring.iter().find(|p| !p.is_valid()) {
        return Err(GeometryError::InvalidCoordinate {
            lon: p.lon,
            lat: p.lat,
        });
    }
    Ok(())
}

impl GeoPolygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeometryError> {
        validate_ring(&exterior, "exterior")?;
        for h in &holes {
            validate_ring(h, "hole")?;
        }
        let poly = Self { exterior, holes };
        let planar = poly.to_planar(&poly.default_projection());
        if ring_signed_area(&planar.exterior).abs() <= 0.0 {
            return Err(GeometryError::DegenerateGeometry(
                "exterior ring has zero area".into(),
            ));
        }
        let outer = PlanarPolygon {
            exterior: planar.exterior.clone(),
            holes: Vec::new(),
            bbox: planar.bbox,
        };
        for h in &planar.holes {
            if !h.iter().all(|p| outer.contains(*p)) {
                return Err(GeometryError::DegenerateGeometry(
                    "hole is not inside the exterior ring".into(),
                ));
            }
        }
        Ok(poly)
    }

    /// Axis-aligned lon/lat rectangle.
    pub fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeometryError> {
        let ring = [
            (min_lon, min_lat),
            (max_lon, min_lat),
            (max_lon, max_lat),
            (min_lon, max_lat),
            (min_lon, min_lat),
        ]
        .iter()
        .map(|&(lon, lat)| GeoPoint::new(lon, lat))
        .collect::<Result<Vec<_>, _>>()?;
        Self::new(ring, Vec::new())
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    fn default_projection(&self) -> LocalProjection {
        LocalProjection::centered_at(lonlat_center(&self.exterior))
    }

    pub fn to_planar(&self, proj: &LocalProjection) -> PlanarPolygon {
        let exterior: Vec<[f64; 2]> = self.exterior.iter().map(|p| proj.forward(*p)).collect();
        let holes = self
            .holes
            .iter()
            .map(|h| h.iter().map(|p| proj.forward(*p)).collect())
            .collect();
        let bbox = BBox::of(&exterior);
        PlanarPolygon {
            exterior,
            holes,
            bbox,
        }
    }

    /// Area-weighted centroid of the exterior minus holes.
    pub fn centroid(&self) -> GeoPoint {
        let proj = self.default_projection();
        let planar = self.to_planar(&proj);
        proj.inverse(planar.centroid())
    }

    pub fn vertex_reversed(&self) -> Self {
        let mut p = self.clone();
        p.exterior.reverse();
        for h in &mut p.holes {
            h.reverse();
        }
        p
    }
}

/// A polygon already projected to a local plane (km).
#[derive(Debug, Clone)]
pub struct PlanarPolygon {
    exterior: Vec<[f64; 2]>,
    holes: Vec<Vec<[f64; 2]>>,
    bbox: BBox,
}

impl PlanarPolygon {
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        (ring_signed_area(&self.exterior).abs() - holes).max(0.0)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let (mut a, mut cx, mut cy) = ring_moments(&self.exterior, 1.0);
        for h in &self.holes {
            let (ha, hx, hy) = ring_moments(h, -1.0);
            a += ha;
            cx += hx;
            cy += hy;
        }
        if a.abs() < f64::MIN_POSITIVE {
            return self.bbox.center();
        }
        [cx / a, cy / a]
    }

    /// Even-odd containment with boundary points counted as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        if !self.bbox.contains_within(p, BOUNDARY_EPS_KM) {
            return false;
        }
        if on_ring_boundary(&self.exterior, p) || self.holes.iter().any(|h| on_ring_boundary(h, p)) {
            return true;
        }
        let mut inside = ring_crossings_odd(&self.exterior, p);
        for h in &self.holes {
            if ring_crossings_odd(h, p) {
                inside = !inside;
            }
        }
        inside
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<[f64; 2]>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    fn to_geo(&self) -> geo::Polygon<f64> {
        let ring = |r: &Vec<[f64; 2]>| geo::LineString::from(r.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>());
        geo::Polygon::new(ring(&self.exterior), self.holes.iter().map(ring).collect())
    }
}

fn ring_signed_area(r: &[[f64; 2]]) -> f64 {
    0.5 * r
        .windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum::<f64>()
}

/// Returns (area, area·cx, area·cy), oriented so the ring counts with `sign`.
fn ring_moments(r: &[[f64; 2]], sign: f64) -> (f64, f64, f64) {
    let signed = ring_signed_area(r);
    let orient = if signed < 0.0 { -sign } else { sign };
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in r.windows(2) {
        let cross = w[0][0] * w[1][1] - w[1][0] * w[0][1];
        a += cross;
        cx += (w[0][0] + w[1][0]) * cross;
        cy += (w[0][1] + w[1][1]) * cross;
    }
    (orient * a / 2.0, orient * cx / 6.0, orient * cy / 6.0)
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let cross = dx * (p[1] - a[1]) - dy * (p[0] - a[0]);
    if len == 0.0 {
        return (p[0] - a[0]).hypot(p[1] - a[1]) <= BOUNDARY_EPS_KM;
    }
    if (cross / len).abs() > BOUNDARY_EPS_KM {
        return false;
    }
    let t = (dx * (p[0] - a[0]) + dy * (p[1] - a[1])) / (len * len);
    let slack = BOUNDARY_EPS_KM / len;
    (-slack..=1.0 + slack).contains(&t)
}

fn on_ring_boundary(r: &[[f64; 2]], p: [f64; 2]) -> bool {
    r.windows(2).any(|w| on_segment(w[0], w[1], p))
}

fn ring_crossings_odd(r: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut odd = false;
    for w in r.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                odd = !odd;
            }
        }
    }
    odd
}

/// Area of exterior minus holes, in km².
pub fn polygon_area_km2(p: &GeoPolygon) -> Result<f64, GeometryError> {
    let proj = LocalProjection::centered_at(p.centroid());
    let planar = p.to_planar(&proj);
    let exterior = ring_signed_area(&planar.exterior).abs();
    if exterior <= 0.0 {
        return Err(GeometryError::DegenerateGeometry(
            "exterior ring has zero area".into(),
        ));
    }
    Ok(planar.area())
}

pub fn point_in_polygon(pt: GeoPoint, p: &GeoPolygon) -> bool {
    let proj = p.default_projection();
    p.to_planar(&proj).contains(proj.forward(pt))
}

fn lexical_cmp(a: &GeoPolygon, b: &GeoPolygon) -> std::cmp::Ordering {
    let flat = |p: &GeoPolygon| -> Vec<f64> {
        std::iter::once(&p.exterior)
            .chain(p.holes.iter())
            .flat_map(|r| r.iter().flat_map(|q| [q.lon, q.lat]))
            .collect()
    };
    flat(a)
        .partial_cmp(&flat(b))
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Intersection over union of two polygons, in [0, 1].
pub fn polygon_iou(a: &GeoPolygon, b: &GeoPolygon) -> Result<f64, GeometryError> {
    if a == b {
        return Ok(1.0);
    }
    // Fixed argument order keeps the result exactly symmetric.
    let (a, b) = if lexical_cmp(a, b).is_gt() { (b, a) } else { (a, b) };
    let center = lonlat_center(a.exterior.iter().chain(b.exterior.iter()));
    let proj = LocalProjection::centered_at(center);
    let (pa, pb) = (a.to_planar(&proj), b.to_planar(&proj));
    let (area_a, area_b) = (pa.area(), pb.area());
    if area_a <= 0.0 && area_b <= 0.0 {
        return Err(GeometryError::DegenerateGeometry(
            "both polygons have zero area".into(),
        ));
    }
    if !pa.bbox.intersects(&pb.bbox) {
        return Ok(0.0);
    }
    let inter = pa.to_geo().intersection(&pb.to_geo()).unsigned_area();
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Ordered list of at least two points, consecutive points distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPolyline {
    points: Vec<GeoPoint>,
}

impl GeoPolyline {
    pub fn new(points: Vec<GeoPoint>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::DegenerateGeometry(format!(
                "polyline has {} points, need at least 2",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_valid()) {
            return Err(GeometryError::InvalidCoordinate {
                lon: p.lon,
                lat: p.lat,
            });
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeometryError::DegenerateGeometry(
                "polyline has repeated consecutive points".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn length_km(&self) -> f64 {
        self.points.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
    }
}

/// A run of a polyline assigned to one zone (index into the zone list) or to
/// no zone at all.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePiece {
    pub zone: Option<usize>,
    pub line: GeoPolyline,
}

struct ZoneIndex {
    planar: Vec<PlanarPolygon>,
}

impl ZoneIndex {
    fn zone_of(&self, p: [f64; 2]) -> Option<usize> {
        self.planar.iter().position(|z| z.contains(p))
    }
}

/// Parameters along `a → b` (exclusive of the ends) where the segment meets
/// any ring edge of the given zones.
fn boundary_params(a: [f64; 2], b: [f64; 2], zones: &[PlanarPolygon]) -> Vec<f64> {
    let seg_box = BBox::of([&a, &b]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let mut ts = Vec::new();
    for z in zones.iter().filter(|z| z.bbox.intersects(&seg_box)) {
        for ring in z.rings() {
            for w in ring.windows(2) {
                let (c, e) = (w[0], w[1]);
                let f = [e[0] - c[0], e[1] - c[1]];
                let denom = d[0] * f[1] - d[1] * f[0];
                let ac = [c[0] - a[0], c[1] - a[1]];
                if denom.abs() > 1e-15 * len2.sqrt() * f[0].hypot(f[1]) {
                    let t = (ac[0] * f[1] - ac[1] * f[0]) / denom;
                    let u = (ac[0] * d[1] - ac[1] * d[0]) / denom;
                    if (0.0..=1.0).contains(&u) && t > 0.0 && t < 1.0 {
                        ts.push(t);
                    }
                } else if (ac[0] * d[1] - ac[1] * d[0]).abs() <= BOUNDARY_EPS_KM * len2.sqrt() {
                    // Collinear edge: its endpoints bound the shared stretch.
                    for q in [c, e] {
                        let t = ((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / len2;
                        if t > 0.0 && t < 1.0 {
                            ts.push(t);
                        }
                    }
                }
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    ts
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

/// Splits a polyline into pieces that each lie in a single zone (or in
/// none). Each boundary crossing is bracketed between two points known to be
/// on either side, then located by bisection until the bracket is shorter
/// than `epsilon_km`.
pub fn split_polyline_by_zone(
    line: &GeoPolyline,
    zones: &[GeoPolygon],
    epsilon_km: f64,
) -> Result<Vec<LinePiece>, GeometryError> {
    if !(epsilon_km > 0.0) {
        return Err(GeometryError::InvalidTolerance(epsilon_km));
    }
    let proj = LocalProjection::centered_at(lonlat_center(line.points()));
    let index = ZoneIndex {
        planar: zones.iter().map(|z| z.to_planar(&proj)).collect(),
    };
    let xy: Vec<[f64; 2]> = line.points().iter().map(|p| proj.forward(*p)).collect();

    let mut pieces: Vec<LinePiece> = Vec::new();
    let mut current: Option<(Option<usize>, Vec<GeoPoint>)> = None;
    let close = |label: Option<usize>, pts: Vec<GeoPoint>, pieces: &mut Vec<LinePiece>| {
        if pts.len() >= 2 {
            if let Ok(l) = GeoPolyline::new(pts) {
                pieces.push(LinePiece { zone: label, line: l });
            }
        }
    };

    for (k, w) in xy.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let seg_len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let mut cuts = vec![0.0];
        cuts.extend(boundary_params(a, b, &index.planar));
        cuts.push(1.0);
        // Zone membership is constant strictly between consecutive cuts.
        let probes: Vec<(f64, Option<usize>)> = cuts
            .windows(2)
            .map(|c| {
                let t = 0.5 * (c[0] + c[1]);
                (t, index.zone_of(lerp(a, b, t)))
            })
            .collect();

        let start_pt = line.points()[k];
        match current.take() {
            None => current = Some((probes[0].1, vec![start_pt])),
            Some((label, pts)) if label != probes[0].1 => {
                // Crossing exactly at a vertex.
                close(label, pts, &mut pieces);
                current = Some((probes[0].1, vec![start_pt]));
            }
            Some(c) => current = Some(c),
        }

        for pair in probes.windows(2) {
            let ((mut lo, from), (mut hi, to)) = (pair[0], pair[1]);
            if from == to {
                continue;
            }
            while (hi - lo) * seg_len >= epsilon_km {
                let mid = 0.5 * (lo + hi);
                if index.zone_of(lerp(a, b, mid)) == from {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let crossing = proj.inverse(lerp(a, b, 0.5 * (lo + hi)));
            let (label, mut pts) = current.take().expect("piece in progress");
            if pts.last() != Some(&crossing) {
                pts.push(crossing);
            }
            close(label, pts, &mut pieces);
            current = Some((to, vec![crossing]));
        }

        let end_pt = line.points()[k + 1];
        if let Some((_, pts)) = current.as_mut() {
            if pts.last() != Some(&end_pt) {
                pts.push(end_pt);
            }
        }
    }
    if let Some((label, pts)) = current.take() {
        close(label, pts, &mut pieces);
    }
    Ok(pieces)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: 42,
        }
    }
}

/// Monte Carlo estimate of the mean straight-line distance between two
/// uniformly random points of the polygon.
pub fn mc_mean_pairwise_distance_km(p: &GeoPolygon, cfg: McConfig) -> Result<f64, GeometryError> {
    if cfg.n_samples == 0 {
        return Err(GeometryError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let proj = LocalProjection::centered_at(p.centroid());
    let planar = p.to_planar(&proj);
    if planar.area() <= 0.0 {
        return Err(GeometryError::DegenerateGeometry("polygon has zero area".into()));
    }
    let bbox = planar.bbox;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut attempts, mut accepted) = (0u64, 0u64);
    let mut sample = |rng: &mut ChaCha8Rng| -> Result<[f64; 2], GeometryError> {
        loop {
            let q = [
                bbox.min[0] + rng.gen::<f64>() * (bbox.max[0] - bbox.min[0]),
                bbox.min[1] + rng.gen::<f64>() * (bbox.max[1] - bbox.min[1]),
            ];
            attempts += 1;
            if planar.contains(q) {
                accepted += 1;
                return Ok(q);
            }
            if attempts % STALL_WINDOW == 0 && (accepted as f64) < STALL_MIN_RATE * attempts as f64 {
                return Err(GeometryError::SamplingStalled { accepted, attempts });
            }
        }
    };
    let mut total = 0.0;
    for _ in 0..cfg.n_samples {
        let u = sample(&mut rng)?;
        let v = sample(&mut rng)?;
        total += (u[0] - v[0]).hypot(u[1] - v[1]);
    }
    Ok(total / cfg.n_samples as f64)
}

/// Side, in degrees, of a lon/lat square measuring `km` along the equator.
pub fn equator_degrees(km: f64) -> f64 {
    (km / EARTH_RADIUS_KM).to_degrees()
}
