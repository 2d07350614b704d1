//! Synthetic cities with known ground truth, and a brute-force evaluator
//! that recomputes every pipeline quantity from the generator's exact
//! description.
//!
//! The evaluator deliberately shares nothing with the pipeline beyond plain
//! value types: it has its own haversine, its own spherical areas, and
//! evaluates the demand and segmentation formulas directly.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::demand::AttributionPolicy;
use crate::geometry::{equator_degrees, GeoPolygon};
use crate::ingest::{
    tacs_cells_to_geojson, trip_table_to_csv, zones_to_geojson, ChargerClass, HighwayClass, TacsCell, TacsTripTable,
    TripRow, Zone,
};
use crate::segmentation::SegmentedDemand;
use crate::stations::{ChargerSpec, StationCounts, Technology};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic city spec: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Upper bounds on POIs generated per zone; actual counts are drawn
/// uniformly from 0 to the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoiCounts {
    pub office: u32,
    pub semi_rapid: u32,
    pub fast: u32,
    pub sport: u32,
    /// POIs mapped as bare nodes (any of the three public classes).
    pub nodes: u32,
}

impl Default for PoiCounts {
    fn default() -> Self {
        Self {
            office: 3,
            semi_rapid: 3,
            fast: 3,
            sport: 1,
            nodes: 1,
        }
    }
}

fn d_zones() -> usize {
    4
}
fn d_side() -> f64 {
    2.0
}
fn d_trips() -> [f64; 2] {
    [0.0, 500.0]
}
fn d_zero_pairs() -> f64 {
    0.2
}
fn d_one() -> f64 {
    1.0
}
fn d_poi_side() -> [f64; 2] {
    [0.02, 0.2]
}
fn d_res() -> [f64; 2] {
    [0.0, 4.0]
}
fn d_major() -> [f64; 2] {
    [0.0, 2.0]
}
fn d_tau() -> [f64; 2] {
    [0.0, 12_000.0]
}
fn d_chi() -> [f64; 2] {
    [1.5, 3.0]
}
fn d_sigma() -> [f64; 2] {
    [0.0, 1_500.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "d_zones")]
    pub n_zones: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_side")]
    pub zone_side_km: f64,
    /// Range of regular and irregular trips per ordered zone pair.
    #[serde(default = "d_trips")]
    pub trips_per_pair: [f64; 2],
    /// Probability that a pair has no trips at all.
    #[serde(default = "d_zero_pairs")]
    pub zero_pair_fraction: f64,
    #[serde(default = "d_one")]
    pub extrapolation_factor: f64,
    #[serde(default)]
    pub poi_counts: PoiCounts,
    #[serde(default = "d_poi_side")]
    pub poi_side_km: [f64; 2],
    #[serde(default = "d_res")]
    pub residential_km: [f64; 2],
    #[serde(default = "d_major")]
    pub major_km: [f64; 2],
    #[serde(default = "d_tau")]
    pub tau: [f64; 2],
    #[serde(default = "d_chi")]
    pub chi: [f64; 2],
    #[serde(default = "d_sigma")]
    pub sigma: [f64; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(2..=10).contains(&self.n_zones) {
            return bad(format!("n_zones {} not in 2..=10", self.n_zones));
        }
        if !(self.zone_side_km > 0.0 && self.zone_side_km <= 20.0) {
            return bad("zone_side_km must be in (0, 20]".into());
        }
        let ranges = [
            ("trips_per_pair", self.trips_per_pair),
            ("poi_side_km", self.poi_side_km),
            ("residential_km", self.residential_km),
            ("major_km", self.major_km),
            ("tau", self.tau),
            ("chi", self.chi),
            ("sigma", self.sigma),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return bad(format!("{name} must be a range 0 <= lo <= hi"));
            }
        }
        if self.chi[0] <= 0.0 {
            return bad("chi must be > 0".into());
        }
        if self.poi_side_km[0] <= 0.0 || self.poi_side_km[1] > 0.4 * self.zone_side_km {
            return bad("poi_side_km must be > 0 and at most 40% of the zone side".into());
        }
        if !(0.0..=1.0).contains(&self.zero_pair_fraction) {
            return bad("zero_pair_fraction must be in [0, 1]".into());
        }
        if !(self.extrapolation_factor > 0.0 && self.extrapolation_factor.is_finite()) {
            return bad("extrapolation_factor must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthZone {
    pub id: String,
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
    pub tau: f64,
    pub chi: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SynthShape {
    Rect { min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64 },
    Node { lon: f64, lat: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPoi {
    pub osm_id: i64,
    pub tag: String,
    pub class: ChargerClass,
    pub zone: usize,
    pub shape: SynthShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRoad {
    pub osm_id: i64,
    pub tag: String,
    pub class: HighwayClass,
    pub zone: usize,
    /// (lon, lat) endpoints of a straight segment.
    pub from: (f64, f64),
    pub to: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTrip {
    pub origin: usize,
    pub dest: usize,
    pub regular: f64,
    pub irregular: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCity {
    pub zones: Vec<SynthZone>,
    pub pois: Vec<SynthPoi>,
    pub roads: Vec<SynthRoad>,
    pub trips: Vec<SynthTrip>,
    pub extrapolation_factor: f64,
}

const SEMI_TAGS: [&str; 5] = ["university", "school", "hospital", "clinic", "kindergarten"];
const FAST_TAGS: [&str; 5] = ["restaurant", "bar", "cafe", "pub", "fast_food"];

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Rounds to 1/100, so values survive the 6-decimal CSV round trip exactly.
fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Splits a total length into pieces no longer than `max_piece`.
fn pieces(total: f64, max_piece: f64) -> Vec<f64> {
    if total <= 0.0 {
        return Vec::new();
    }
    let n = (total / max_piece).ceil().max(1.0) as usize;
    vec![total / n as f64; n]
}

/// A grid of square zones near the equator, filled with random POIs,
/// straight road segments and trips. Deterministic per seed.
pub fn generate_city(spec: &SynthSpec) -> Result<SynthCity, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cols = (spec.n_zones as f64).sqrt().ceil() as usize;
    let side = spec.zone_side_km;
    let deg = equator_degrees;
    let mut next_id = 1i64;
    let mut id = || {
        next_id += 1;
        next_id
    };

    let mut zones = Vec::new();
    for k in 0..spec.n_zones {
        let (c, r) = ((k % cols) as f64, (k / cols) as f64);
        zones.push(SynthZone {
            id: format!("Z{k}"),
            min_lon: deg(c * side),
            min_lat: deg(r * side),
            max_lon: deg((c + 1.0) * side),
            max_lat: deg((r + 1.0) * side),
            tau: cents(draw(&mut rng, spec.tau)),
            chi: cents(draw(&mut rng, spec.chi)).max(spec.chi[0].max(0.01)),
            sigma: draw(&mut rng, spec.sigma).round(),
        });
    }

    let mut pois = Vec::new();
    let mut roads = Vec::new();
    let margin = 0.05 * side;
    for (zi, z) in zones.iter().enumerate() {
        let (x0, y0) = (z.min_lon, z.min_lat);
        let at = |dx_km: f64, dy_km: f64| (x0 + deg(dx_km), y0 + deg(dy_km));

        let c = spec.poi_counts;
        let mut wanted: Vec<(ChargerClass, String, bool)> = Vec::new();
        for _ in 0..rng.gen_range(0..=c.office) {
            wanted.push((ChargerClass::NormalWork, "office".into(), false));
        }
        for _ in 0..rng.gen_range(0..=c.semi_rapid) {
            wanted.push((ChargerClass::SemiRapid, SEMI_TAGS[rng.gen_range(0..SEMI_TAGS.len())].into(), false));
        }
        for _ in 0..rng.gen_range(0..=c.fast) {
            wanted.push((ChargerClass::Fast, FAST_TAGS[rng.gen_range(0..FAST_TAGS.len())].into(), false));
        }
        for _ in 0..rng.gen_range(0..=c.sport) {
            wanted.push((ChargerClass::Excluded, "sport".into(), false));
        }
        for _ in 0..rng.gen_range(0..=c.nodes) {
            let (cls, tag) = match rng.gen_range(0..3) {
                0 => (ChargerClass::NormalWork, "office"),
                1 => (ChargerClass::SemiRapid, "school"),
                _ => (ChargerClass::Fast, "restaurant"),
            };
            wanted.push((cls, tag.into(), true));
        }
        for (class, tag, node) in wanted {
            let w = draw(&mut rng, spec.poi_side_km);
            let h = draw(&mut rng, spec.poi_side_km);
            let cx = rng.gen_range(margin + w..side - margin - w);
            let cy = rng.gen_range(margin + h..side - margin - h);
            let shape = if node {
                let (lon, lat) = at(cx, cy);
                SynthShape::Node { lon, lat }
            } else {
                let (min_lon, min_lat) = at(cx - w / 2.0, cy - h / 2.0);
                let (max_lon, max_lat) = at(cx + w / 2.0, cy + h / 2.0);
                SynthShape::Rect { min_lon, min_lat, max_lon, max_lat }
            };
            pois.push(SynthPoi { osm_id: id(), tag, class, zone: zi, shape });
        }

        // Residential roads run east-west, major roads north-south, each on
        // its own line strictly inside the zone.
        let usable = side - 2.0 * margin;
        let res = pieces(draw(&mut rng, spec.residential_km), usable);
        let major = pieces(draw(&mut rng, spec.major_km), usable);
        let mut add = |lens: &[f64], class: HighwayClass, tags: &[&str], vertical: bool, rng: &mut ChaCha8Rng| {
            for (k, &len) in lens.iter().enumerate() {
                let lane = margin + usable * (k as f64 + 1.0) / (lens.len() as f64 + 1.0);
                let start = margin + rng.gen_range(0.0..=(usable - len).max(0.0));
                let (from, to) = if vertical {
                    (at(lane, start), at(lane, start + len))
                } else {
                    (at(start, lane), at(start + len, lane))
                };
                let tag = tags[rng.gen_range(0..tags.len())].to_string();
                roads.push(SynthRoad { osm_id: id(), tag, class, zone: zi, from, to });
            }
        };
        add(&res, HighwayClass::Residential, &["residential"], false, &mut rng);
        add(&major, HighwayClass::Major, &["primary", "secondary", "tertiary", "motorway"], true, &mut rng);
        if rng.gen_bool(0.5) {
            add(&[0.3 * usable], HighwayClass::Ignored, &["footway", "service"], true, &mut rng);
        }
    }

    let mut trips = Vec::new();
    for i in 0..spec.n_zones {
        for j in 0..spec.n_zones {
            if i == j || rng.gen_bool(spec.zero_pair_fraction) {
                continue;
            }
            trips.push(SynthTrip {
                origin: i,
                dest: j,
                regular: cents(draw(&mut rng, spec.trips_per_pair)),
                irregular: cents(draw(&mut rng, spec.trips_per_pair)),
            });
        }
    }

    Ok(SynthCity {
        zones,
        pois,
        roads,
        trips,
        extrapolation_factor: spec.extrapolation_factor,
    })
}

/// Settings the evaluator needs; mirrors the numeric pipeline flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub kwh_per_km: f64,
    pub detour_index: f64,
    pub dr_a: f64,
    pub dr_b: f64,
    pub attribution: AttributionPolicy,
    pub ppr_cap: Option<f64>,
    pub node_footprint_km2: f64,
    pub specs: Vec<ChargerSpec>,
    pub traffic_reduction: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kwh_per_km: 0.22,
            detour_index: 1.417,
            dr_a: 0.759,
            dr_b: 0.466,
            attribution: AttributionPolicy::Destination,
            ppr_cap: None,
            node_footprint_km2: 0.0001,
            specs: ChargerSpec::defaults(),
            traffic_reduction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleZone {
    pub id: String,
    pub area_km2: f64,
    pub delta_regular: f64,
    pub delta_irregular: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub phi: SegmentedDemand,
    pub counts: StationCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub zones: Vec<OracleZone>,
    pub citywide: StationCounts,
}

const R_KM: f64 = 6371.0;

fn hav_km((lon1, lat1): (f64, f64), (lon2, lat2): (f64, f64)) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R_KM * h.sqrt().asin()
}

/// Area of a lon/lat rectangle on the sphere.
fn rect_area_km2(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> f64 {
    R_KM * R_KM * (max_lon - min_lon).to_radians() * (max_lat.to_radians().sin() - min_lat.to_radians().sin())
}

fn ceil_count(demand: f64, spec: &ChargerSpec) -> u64 {
    let cap = spec.power_kw * spec.delivery * spec.occupancy * spec.hours;
    if demand <= 0.0 {
        0
    } else {
        (demand / cap).ceil() as u64
    }
}

/// Recomputes demand, segmentation and station counts for a synthetic city
/// by direct formula evaluation.
pub fn oracle_evaluate(city: &SynthCity, cfg: &OracleConfig) -> OracleResult {
    let n = city.zones.len();
    let center = |z: &SynthZone| ((z.min_lon + z.max_lon) / 2.0, (z.min_lat + z.max_lat) / 2.0);

    let mut d_reg = vec![0.0; n];
    let mut d_irr = vec![0.0; n];
    for t in &city.trips {
        let km = if t.origin == t.dest {
            0.0
        } else {
            hav_km(center(&city.zones[t.origin]), center(&city.zones[t.dest])) * cfg.detour_index
        };
        let dr = cfg.dr_a * (1.0 - (-cfg.dr_b * km).exp());
        let kwh_per_trip = city.extrapolation_factor * dr * km * cfg.kwh_per_km;
        let (reg, irr) = (t.regular * kwh_per_trip, t.irregular * kwh_per_trip);
        let mut credit = |z: usize, w: f64| {
            d_reg[z] += w * reg;
            d_irr[z] += w * irr;
        };
        match cfg.attribution {
            AttributionPolicy::Destination => credit(t.dest, 1.0),
            AttributionPolicy::Origin => credit(t.origin, 1.0),
            AttributionPolicy::SplitHalf => {
                credit(t.origin, 0.5);
                credit(t.dest, 0.5);
            }
        }
    }

    let spec_for = |t: Technology| cfg.specs.iter().find(|s| s.technology == t).expect("spec present");
    let (normal, semi, rapid) = (spec_for(Technology::Normal), spec_for(Technology::SemiRapid), spec_for(Technology::Rapid));
    let keep = 1.0 - cfg.traffic_reduction;
    let mut citywide = StationCounts::default();
    let mut out = Vec::with_capacity(n);
    for (k, z) in city.zones.iter().enumerate() {
        let area = rect_area_km2(z.min_lon, z.min_lat, z.max_lon, z.max_lat);

        let households = z.tau * area / z.chi;
        let upper = cfg.ppr_cap.unwrap_or(1.0).min(1.0);
        let gamma = if households > 0.0 {
            (z.sigma / households).min(upper)
        } else if z.sigma > 0.0 {
            upper
        } else {
            0.0
        };

        let (mut res_km, mut major_km) = (0.0, 0.0);
        for r in city.roads.iter().filter(|r| r.zone == k) {
            match r.class {
                HighwayClass::Residential => res_km += hav_km(r.from, r.to),
                HighwayClass::Major => major_km += hav_km(r.from, r.to),
                HighwayClass::Ignored => {}
            }
        }
        let alpha = if res_km + major_km > 0.0 { res_km / (res_km + major_km) } else { 1.0 };

        let (mut a_off, mut a_sem, mut a_fast) = (0.0, 0.0, 0.0);
        for p in city.pois.iter().filter(|p| p.zone == k) {
            let a = match p.shape {
                SynthShape::Rect { min_lon, min_lat, max_lon, max_lat } => rect_area_km2(min_lon, min_lat, max_lon, max_lat),
                SynthShape::Node { .. } => cfg.node_footprint_km2,
            };
            match p.class {
                ChargerClass::NormalWork => a_off += a,
                ChargerClass::SemiRapid => a_sem += a,
                ChargerClass::Fast => a_fast += a,
                _ => {}
            }
        }
        let sum_a = a_off + a_sem + a_fast;

        let t = d_reg[k] + d_irr[k];
        let rest = (1.0 - alpha) * (1.0 - gamma) * t;
        let mut phi = SegmentedDemand {
            phi_par: gamma * t,
            phi_nres: alpha * (1.0 - gamma) * t,
            ..Default::default()
        };
        if sum_a > 0.0 {
            phi.phi_noff = rest * a_off / sum_a;
            phi.phi_sem = rest * a_sem / sum_a;
            phi.phi_rap = rest * a_fast / sum_a;
        } else {
            phi.phi_nres += rest;
        }

        let public = (phi.phi_nres + phi.phi_noff + phi.phi_sem + phi.phi_rap) * keep;
        let counts = StationCounts {
            normal_resi: ceil_count(phi.phi_nres * keep, normal),
            normal_work: ceil_count(phi.phi_noff * keep, normal),
            semi_rapid: ceil_count(phi.phi_sem * keep, semi),
            rapid: ceil_count(phi.phi_rap * keep, rapid),
            full_normal: ceil_count(public, normal),
        };
        citywide.normal_resi += counts.normal_resi;
        citywide.normal_work += counts.normal_work;
        citywide.semi_rapid += counts.semi_rapid;
        citywide.rapid += counts.rapid;
        citywide.full_normal += counts.full_normal;
        out.push(OracleZone {
            id: z.id.clone(),
            area_km2: area,
            delta_regular: d_reg[k],
            delta_irregular: d_irr[k],
            alpha,
            gamma,
            phi,
            counts,
        });
    }
    OracleResult { zones: out, citywide }
}

fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> GeoPolygon {
    GeoPolygon::rect(min_lon, min_lat, max_lon, max_lat).expect("synthetic rectangles are valid")
}

impl SynthCity {
    pub fn zone_records(&self) -> Vec<Zone> {
        self.zones
            .iter()
            .map(|z| Zone {
                id: z.id.clone(),
                name: format!("Synthetic {}", z.id),
                polygon: rect(z.min_lon, z.min_lat, z.max_lon, z.max_lat),
                pop_density_tau: z.tau,
                household_size_chi: z.chi,
                par_count_sigma: z.sigma,
            })
            .collect()
    }

    /// One TACS cell per zone, with the zone's own footprint.
    pub fn tacs_cells(&self) -> Vec<TacsCell> {
        self.zones
            .iter()
            .enumerate()
            .map(|(k, z)| TacsCell {
                id: format!("C{k}"),
                polygon: rect(z.min_lon, z.min_lat, z.max_lon, z.max_lat),
            })
            .collect()
    }

    pub fn trip_table(&self) -> TacsTripTable {
        TacsTripTable {
            rows: self
                .trips
                .iter()
                .map(|t| TripRow {
                    origin_tacs: format!("C{}", t.origin),
                    dest_tacs: format!("C{}", t.dest),
                    regular: t.regular,
                    irregular: t.irregular,
                })
                .collect(),
            extrapolation_factor: self.extrapolation_factor,
        }
    }

    /// Overpass-style JSON export (`out geom`) of the POIs and roads.
    pub fn overpass_json(&self) -> serde_json::Value {
        let ll = |(lon, lat): (f64, f64)| json!({"lat": lat, "lon": lon});
        let mut elements = Vec::new();
        for p in &self.pois {
            elements.push(match p.shape {
                SynthShape::Node { lon, lat } => {
                    json!({"type": "node", "id": p.osm_id, "lat": lat, "lon": lon, "tags": {"amenity": p.tag}})
                }
                SynthShape::Rect { min_lon, min_lat, max_lon, max_lat } => {
                    let ring = [
                        (min_lon, min_lat),
                        (max_lon, min_lat),
                        (max_lon, max_lat),
                        (min_lon, max_lat),
                        (min_lon, min_lat),
                    ];
                    json!({"type": "way", "id": p.osm_id, "tags": {"amenity": p.tag},
                           "geometry": ring.iter().map(|&q| ll(q)).collect::<Vec<_>>()})
                }
            });
        }
        for r in &self.roads {
            elements.push(json!({"type": "way", "id": r.osm_id, "tags": {"highway": r.tag},
                                 "geometry": [ll(r.from), ll(r.to)]}));
        }
        json!({"version": 0.6, "generator": "chargecast synth", "elements": elements})
    }
}

fn write(path: PathBuf, body: String) -> Result<PathBuf, SynthError> {
    std::fs::write(&path, body).map_err(|source| SynthError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes zones.geojson, tacs.geojson, trips.csv, overpass.json,
/// city.json (the generator's description) and config.json, a pipeline
/// config matching `cfg`. Returns the config path.
pub fn write_city(city: &SynthCity, cfg: &OracleConfig, dir: &Path) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.to_path_buf(), source })?;
    let pretty = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("serializable") + "\n";
    write(dir.join("zones.geojson"), pretty(&zones_to_geojson(&city.zone_records())))?;
    write(dir.join("tacs.geojson"), pretty(&tacs_cells_to_geojson(&city.tacs_cells())))?;
    write(dir.join("trips.csv"), trip_table_to_csv(&city.trip_table()))?;
    write(dir.join("overpass.json"), pretty(&city.overpass_json()))?;
    write(dir.join("city.json"), pretty(&serde_json::to_value(city).expect("serializable")))?;
    write(
        dir.join("charger_specs.json"),
        pretty(&serde_json::to_value(&cfg.specs).expect("serializable")),
    )?;
    let config = json!({
        "zones": "zones.geojson",
        "tacs": "tacs.geojson",
        "trips": "trips.csv",
        "overpass": "overpass.json",
        "charger_specs": "charger_specs.json",
        "routing_backend": "offline",
        "detour_index": cfg.detour_index,
        "kwh_per_km": cfg.kwh_per_km,
        "attribution": cfg.attribution,
        "ppr_cap": cfg.ppr_cap,
        "dr_params": {"a": cfg.dr_a, "b": cfg.dr_b},
        "traffic_reduction": cfg.traffic_reduction,
        "mc_samples": 2000,
    });
    write(dir.join("config.json"), pretty(&config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec { seed: 9, ..Default::default() };
        let a = generate_city(&spec).unwrap();
        assert_eq!(a, generate_city(&spec).unwrap());
        assert_ne!(a, generate_city(&SynthSpec { seed: 10, ..spec }).unwrap());
        assert_eq!(a.zones.len(), 4);
        // 2 x 2 grid
        assert_eq!(a.zones[1].min_lat, a.zones[0].min_lat);
        assert_eq!(a.zones[2].min_lon, a.zones[0].min_lon);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate_city(&SynthSpec { n_zones: 1, ..Default::default() }).is_err());
        assert!(generate_city(&SynthSpec { n_zones: 11, ..Default::default() }).is_err());
        assert!(generate_city(&SynthSpec { chi: [0.0, 1.0], ..Default::default() }).is_err());
    }

    #[test]
    fn no_pois_means_no_area() {
        let spec = SynthSpec {
            poi_counts: PoiCounts { office: 0, semi_rapid: 0, fast: 0, sport: 0, nodes: 0 },
            ..Default::default()
        };
        let city = generate_city(&spec).unwrap();
        assert!(city.pois.is_empty());
        let r = oracle_evaluate(&city, &OracleConfig::default());
        for z in &r.zones {
            assert_eq!(z.phi.phi_noff + z.phi.phi_sem + z.phi.phi_rap, 0.0);
        }
    }

    #[test]
    fn fixed_road_lengths_give_known_alpha() {
        let spec = SynthSpec { residential_km: [3.0, 3.0], major_km: [1.0, 1.0], ..Default::default() };
        let city = generate_city(&spec).unwrap();
        for z in oracle_evaluate(&city, &OracleConfig::default()).zones {
            assert!((z.alpha - 0.75).abs() < 1e-6, "{}", z.alpha);
        }
    }

    #[test]
    fn conservation_and_zero_gamma() {
        for seed in 0..20 {
            let spec = SynthSpec { seed, sigma: [0.0, 0.0], ..Default::default() };
            let city = generate_city(&spec).unwrap();
            for z in oracle_evaluate(&city, &OracleConfig::default()).zones {
                assert_eq!(z.phi.phi_par, 0.0);
                let t = z.delta_regular + z.delta_irregular;
                assert!((z.phi.total() - t).abs() <= 1e-12 * t.max(1.0));
            }
        }
    }

    #[test]
    fn hand_computed_pair() {
        // Two 1 km cells side by side, 100 regular trips from one to the other.
        let d = equator_degrees(1.0);
        let zone = |k: usize| SynthZone {
            id: format!("Z{k}"),
            min_lon: k as f64 * d,
            min_lat: 0.0,
            max_lon: (k + 1) as f64 * d,
            max_lat: d,
            tau: 0.0,
            chi: 2.0,
            sigma: 0.0,
        };
        let city = SynthCity {
            zones: vec![zone(0), zone(1)],
            pois: Vec::new(),
            roads: Vec::new(),
            trips: vec![SynthTrip { origin: 0, dest: 1, regular: 100.0, irregular: 0.0 }],
            extrapolation_factor: 1.0,
        };
        let cfg = OracleConfig { dr_a: 1.0, dr_b: 1e6, ..Default::default() };
        let r = oracle_evaluate(&city, &cfg);
        // centers 1 km apart (up to the tiny off-equator shrink), DR = 1
        let want = 100.0 * 1.417 * 0.22;
        assert!((r.zones[1].delta_regular - want).abs() < 1e-6 * want);
        assert_eq!(r.zones[0].delta_regular, 0.0);
    }
}
