//! Loading and validation of zones, TACS cells, trip tables and Overpass
//! exports, plus POI/highway classification and TACS → zone aggregation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{polygon_area_km2, polygon_iou, GeoPoint, GeoPolygon, GeoPolyline, GeometryError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate zone id '{0}'")]
    DuplicateZoneId(String),
    #[error("trip table references unknown cell '{0}'")]
    UnknownCell(String),
    #[error("geometry error in '{id}': {source}")]
    Geometry {
        id: String,
        #[source]
        source: GeometryError,
    },
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn schema(msg: impl Into<String>) -> IngestError {
    IngestError::Schema(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub polygon: GeoPolygon,
    /// Population density, persons per km².
    pub pop_density_tau: f64,
    /// Average household size, persons.
    pub household_size_chi: f64,
    /// Number of private access roads in the zone.
    pub par_count_sigma: f64,
}

impl Zone {
    pub fn area_km2(&self) -> Result<f64, GeometryError> {
        polygon_area_km2(&self.polygon)
    }

    fn validate(&self) -> Result<(), IngestError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(schema(format!("zone '{}': {what}", self.id)))
            }
        };
        check(
            self.pop_density_tau.is_finite() && self.pop_density_tau >= 0.0,
            "pop_density_tau must be >= 0",
        )?;
        check(
            self.household_size_chi.is_finite() && self.household_size_chi > 0.0,
            "household_size_chi must be > 0",
        )?;
        check(
            self.par_count_sigma.is_finite() && self.par_count_sigma >= 0.0,
            "par_count_sigma must be >= 0",
        )
    }
}

fn parse_ring(v: &Value, ctx: &str) -> Result<Vec<GeoPoint>, IngestError> {
    let arr = v
        .as_array()
        .ok_or_else(|| schema(format!("{ctx}: ring is not an array")))?;
    arr.iter()
        .map(|c| {
            let lon = c.get(0).and_then(Value::as_f64);
            let lat = c.get(1).and_then(Value::as_f64);
            match (lon, lat) {
                (Some(lon), Some(lat)) => GeoPoint::new(lon, lat).map_err(|source| IngestError::Geometry {
                    id: ctx.to_string(),
                    source,
                }),
                _ => Err(schema(format!("{ctx}: bad coordinate {c}"))),
            }
        })
        .collect()
}

/// Parses a GeoJSON `Polygon` geometry object.
pub fn polygon_from_geojson(geometry: &Value, ctx: &str) -> Result<GeoPolygon, IngestError> {
    let kind = geometry.get("type").and_then(Value::as_str);
    if kind != Some("Polygon") {
        return Err(schema(format!(
            "{ctx}: geometry must be a Polygon, got {}",
            kind.unwrap_or("nothing")
        )));
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| schema(format!("{ctx}: Polygon has no coordinates")))?;
    let exterior = parse_ring(&rings[0], ctx)?;
    let holes = rings[1..]
        .iter()
        .map(|r| parse_ring(r, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    GeoPolygon::new(exterior, holes).map_err(|source| IngestError::Geometry {
        id: ctx.to_string(),
        source,
    })
}

pub fn polygon_to_geojson(p: &GeoPolygon) -> Value {
    let ring = |r: &[GeoPoint]| r.iter().map(|q| json!([q.lon, q.lat])).collect::<Vec<_>>();
    let mut rings = vec![ring(p.exterior())];
    rings.extend(p.holes().iter().map(|h| ring(h)));
    json!({"type": "Polygon", "coordinates": rings})
}

fn features(doc: &Value) -> Result<&Vec<Value>, IngestError> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(schema("expected a GeoJSON FeatureCollection"));
    }
    doc.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("FeatureCollection has no features array"))
}

fn str_prop(props: &Value, key: &str, ctx: &str) -> Result<String, IngestError> {
    props
        .get(key)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| schema(format!("{ctx}: missing string property '{key}'")))
}

fn num_prop(props: &Value, key: &str, ctx: &str) -> Result<f64, IngestError> {
    props
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| schema(format!("{ctx}: missing numeric property '{key}'")))
}

pub fn parse_zones(text: &str) -> Result<Vec<Zone>, IngestError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    let mut seen = HashSet::new();
    let mut zones = Vec::new();
    for (k, f) in features(&doc)?.iter().enumerate() {
        let ctx = format!("feature {k}");
        let props = f
            .get("properties")
            .filter(|p| p.is_object())
            .ok_or_else(|| schema(format!("{ctx}: missing properties")))?;
        let id = str_prop(props, "id", &ctx)?;
        let ctx = format!("zone '{id}'");
        let zone = Zone {
            name: str_prop(props, "name", &ctx)?,
            pop_density_tau: num_prop(props, "pop_density_tau", &ctx)?,
            household_size_chi: num_prop(props, "household_size_chi", &ctx)?,
            par_count_sigma: num_prop(props, "par_count_sigma", &ctx)?,
            polygon: polygon_from_geojson(
                f.get("geometry").ok_or_else(|| schema(format!("{ctx}: missing geometry")))?,
                &id,
            )?,
            id,
        };
        zone.validate()?;
        if !seen.insert(zone.id.clone()) {
            return Err(IngestError::DuplicateZoneId(zone.id));
        }
        zones.push(zone);
    }
    Ok(zones)
}

pub fn load_zones(path: &Path) -> Result<Vec<Zone>, IngestError> {
    parse_zones(&read(path)?)
}

pub fn zones_to_geojson(zones: &[Zone]) -> Value {
    let feats: Vec<Value> = zones
        .iter()
        .map(|z| {
            json!({
                "type": "Feature",
                "properties": {
                    "id": z.id,
                    "name": z.name,
                    "pop_density_tau": z.pop_density_tau,
                    "household_size_chi": z.household_size_chi,
                    "par_count_sigma": z.par_count_sigma,
                },
                "geometry": polygon_to_geojson(&z.polygon),
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": feats})
}

#[derive(Debug, Clone, PartialEq)]
pub struct TacsCell {
    pub id: String,
    pub polygon: GeoPolygon,
}

pub fn parse_tacs_cells(text: &str) -> Result<Vec<TacsCell>, IngestError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    features(&doc)?
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let props = f.get("properties").cloned().unwrap_or(Value::Null);
            let id = str_prop(&props, "id", &format!("TACS feature {k}"))?;
            let geometry = f
                .get("geometry")
                .ok_or_else(|| schema(format!("TACS cell '{id}': missing geometry")))?;
            Ok(TacsCell {
                polygon: polygon_from_geojson(geometry, &id)?,
                id,
            })
        })
        .collect()
}

pub fn load_tacs_cells(path: &Path) -> Result<Vec<TacsCell>, IngestError> {
    parse_tacs_cells(&read(path)?)
}

pub fn tacs_cells_to_geojson(cells: &[TacsCell]) -> Value {
    let feats: Vec<Value> = cells
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "properties": {"id": c.id},
                "geometry": polygon_to_geojson(&c.polygon),
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": feats})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRow {
    pub origin_tacs: String,
    pub dest_tacs: String,
    pub regular: f64,
    pub irregular: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TacsTripTable {
    pub rows: Vec<TripRow>,
    pub extrapolation_factor: f64,
}

const EXTRAPOLATION_PRAGMA: &str = "#extrapolation_factor=";

pub fn parse_trip_table(text: &str) -> Result<TacsTripTable, IngestError> {
    let mut extrapolation_factor = 1.0;
    let mut body = text;
    if let Some(first) = text.lines().next() {
        if let Some(v) = first.trim().strip_prefix(EXTRAPOLATION_PRAGMA) {
            extrapolation_factor = v
                .trim()
                .parse::<f64>()
                .map_err(|_| schema(format!("bad extrapolation factor '{v}'")))?;
            body = &text[first.len()..];
            body = body.trim_start_matches(['\r', '\n']);
        }
    }
    if !(extrapolation_factor.is_finite() && extrapolation_factor > 0.0) {
        return Err(schema("extrapolation factor must be > 0"));
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| schema(format!("trip table header: {e}")))?
        .clone();
    for col in ["origin_tacs", "dest_tacs", "regular", "irregular"] {
        if !headers.iter().any(|h| h == col) {
            return Err(schema(format!("trip table missing column '{col}'")));
        }
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize::<TripRow>().enumerate() {
        let row = rec.map_err(|e| schema(format!("trip table row {}: {e}", k + 1)))?;
        if !(row.regular >= 0.0 && row.irregular >= 0.0 && row.regular.is_finite() && row.irregular.is_finite()) {
            return Err(schema(format!("trip table row {}: counts must be finite and >= 0", k + 1)));
        }
        rows.push(row);
    }
    Ok(TacsTripTable {
        rows,
        extrapolation_factor,
    })
}

pub fn load_trip_table(path: &Path) -> Result<TacsTripTable, IngestError> {
    parse_trip_table(&read(path)?)
}

pub fn trip_table_to_csv(table: &TacsTripTable) -> String {
    let mut out = format!("{EXTRAPOLATION_PRAGMA}{}\n", table.extrapolation_factor);
    out.push_str("origin_tacs,dest_tacs,regular,irregular\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            r.origin_tacs, r.dest_tacs, r.regular, r.irregular
        ));
    }
    out
}

/// Regular and irregular trip counts between zones, in `zone_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TripMatrix {
    pub zone_ids: Vec<String>,
    pub regular: Array2<f64>,
    pub irregular: Array2<f64>,
}

impl TripMatrix {
    pub fn zeros(zone_ids: Vec<String>) -> Self {
        let n = zone_ids.len();
        Self {
            zone_ids,
            regular: Array2::zeros((n, n)),
            irregular: Array2::zeros((n, n)),
        }
    }

    pub fn len(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zone_ids.is_empty()
    }

    pub fn total(&self) -> (f64, f64) {
        (self.regular.sum(), self.irregular.sum())
    }
}

const IOU_TIE_EPS: f64 = 1e-9;

/// Maps each cell id to the zone with the largest IoU, `None` when the cell
/// overlaps no zone. Ties go to the lexicographically smallest zone id.
pub fn assign_tacs_to_zones(
    cells: &[TacsCell],
    zones: &[Zone],
) -> Result<BTreeMap<String, Option<String>>, IngestError> {
    let mut ordered: Vec<&Zone> = zones.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    cells
        .par_iter()
        .map(|cell| {
            let mut best: Option<(&str, f64)> = None;
            for z in &ordered {
                let iou = polygon_iou(&cell.polygon, &z.polygon).map_err(|source| IngestError::Geometry {
                    id: cell.id.clone(),
                    source,
                })?;
                // Near-equal IoUs are ties: float noise must not beat the id order.
                if iou > 0.0 && best.map_or(true, |(_, b)| iou > b + IOU_TIE_EPS) {
                    best = Some((&z.id, iou));
                }
            }
            Ok((cell.id.clone(), best.map(|(id, _)| id.to_owned())))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AggregationDiagnostics {
    pub rows_total: usize,
    pub rows_dropped_unassigned: usize,
    pub regular_dropped: f64,
    pub irregular_dropped: f64,
}

/// Sums cell-level trips into a zone-level matrix, scaled by the table's
/// extrapolation factor. Rows touching a cell mapped to no zone are dropped
/// and counted.
pub fn aggregate_trips(
    table: &TacsTripTable,
    mapping: &BTreeMap<String, Option<String>>,
    zones: &[Zone],
) -> Result<(TripMatrix, AggregationDiagnostics), IngestError> {
    let index: HashMap<&str, usize> = zones.iter().enumerate().map(|(k, z)| (z.id.as_str(), k)).collect();
    let mut m = TripMatrix::zeros(zones.iter().map(|z| z.id.clone()).collect());
    let mut diag = AggregationDiagnostics {
        rows_total: table.rows.len(),
        ..Default::default()
    };
    let lookup = |cell: &str| -> Result<Option<usize>, IngestError> {
        match mapping.get(cell) {
            None => Err(IngestError::UnknownCell(cell.to_owned())),
            Some(None) => Ok(None),
            Some(Some(zone)) => index
                .get(zone.as_str())
                .copied()
                .map(Some)
                .ok_or_else(|| schema(format!("cell '{cell}' maps to unknown zone '{zone}'"))),
        }
    };
    let f = table.extrapolation_factor;
    for row in &table.rows {
        match (lookup(&row.origin_tacs)?, lookup(&row.dest_tacs)?) {
            (Some(i), Some(j)) => {
                m.regular[[i, j]] += f * row.regular;
                m.irregular[[i, j]] += f * row.irregular;
            }
            _ => {
                diag.rows_dropped_unassigned += 1;
                diag.regular_dropped += f * row.regular;
                diag.irregular_dropped += f * row.irregular;
            }
        }
    }
    Ok((m, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChargerClass {
    NormalWork,
    SemiRapid,
    Fast,
    Excluded,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HighwayClass {
    Residential,
    Major,
    Ignored,
}

/// Tag → class configuration for amenities and highways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub poi: BTreeMap<String, ChargerClass>,
    pub highway: BTreeMap<String, HighwayClass>,
    /// Footprint assumed for POIs mapped as bare nodes.
    #[serde(default = "default_node_footprint")]
    pub node_footprint_km2: f64,
}

fn default_node_footprint() -> f64 {
    0.0001
}

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.json");

impl Default for Taxonomy {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

impl Taxonomy {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let t: Taxonomy =
            serde_json::from_str(&read(path)?).map_err(|e| schema(format!("taxonomy: {e}")))?;
        if !(t.node_footprint_km2.is_finite() && t.node_footprint_km2 >= 0.0) {
            return Err(schema("taxonomy: node_footprint_km2 must be >= 0"));
        }
        Ok(t)
    }

    pub fn highway_class(&self, tag: &str) -> HighwayClass {
        self.highway.get(tag).copied().unwrap_or(HighwayClass::Ignored)
    }
}

pub fn classify_poi(amenity_tag: &str, taxonomy: &Taxonomy) -> ChargerClass {
    taxonomy
        .poi
        .get(amenity_tag)
        .copied()
        .unwrap_or(ChargerClass::Ignored)
}

pub fn classify_highway(highway_tag: &str) -> HighwayClass {
    match highway_tag {
        "residential" => HighwayClass::Residential,
        "motorway" | "primary" | "secondary" | "tertiary" => HighwayClass::Major,
        _ => HighwayClass::Ignored,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoiGeometry {
    Point(GeoPoint),
    Polygon(GeoPolygon),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub osm_id: i64,
    pub amenity_tag: String,
    pub geometry: PoiGeometry,
    pub charger_class: ChargerClass,
    pub area_km2: f64,
    /// True when `area_km2` is the configured node footprint rather than a
    /// measured polygon area.
    pub footprint_defaulted: bool,
}

impl PoiRecord {
    /// Point used to attribute the POI to a zone.
    pub fn representative_point(&self) -> GeoPoint {
        match &self.geometry {
            PoiGeometry::Point(p) => *p,
            PoiGeometry::Polygon(poly) => poly.centroid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayRecord {
    pub osm_id: i64,
    pub highway_tag: String,
    pub polyline: GeoPolyline,
    pub cls: HighwayClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OverpassDiagnostics {
    pub elements: usize,
    pub pois: usize,
    pub pois_ignored: usize,
    pub pois_node_footprint: usize,
    pub highways: usize,
    pub highways_ignored: usize,
    pub skipped_missing_geometry: usize,
    pub skipped_untagged: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct OverpassDoc {
    elements: Vec<OverpassElement>,
}

#[derive(Debug, Deserialize)]
struct LatLon {
    lat: f64,
    lon: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OverpassGeometry {
    Line(Vec<LatLon>),
    Point(LatLon),
}

#[derive(Debug, Deserialize)]
struct OverpassElement {
    #[serde(rename = "type")]
    kind: String,
    id: i64,
    #[serde(default)]
    tags: BTreeMap<String, String>,
    lat: Option<f64>,
    lon: Option<f64>,
    geometry: Option<OverpassGeometry>,
}

fn to_points(geom: &[LatLon]) -> Result<Vec<GeoPoint>, GeometryError> {
    let mut pts: Vec<GeoPoint> = Vec::with_capacity(geom.len());
    for g in geom {
        let p = GeoPoint::new(g.lon, g.lat)?;
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    Ok(pts)
}

fn way_poi_geometry(pts: Vec<GeoPoint>) -> Option<PoiGeometry> {
    if pts.len() >= 3 {
        let mut ring = pts.clone();
        if ring.first() != ring.last() {
            ring.push(ring[0]);
        }
        if let Ok(poly) = GeoPolygon::new(ring, Vec::new()) {
            return Some(PoiGeometry::Polygon(poly));
        }
    }
    let n = pts.len() as f64;
    if n == 0.0 {
        return None;
    }
    let lon = pts.iter().map(|p| p.lon).sum::<f64>() / n;
    let lat = pts.iter().map(|p| p.lat).sum::<f64>() / n;
    Some(PoiGeometry::Point(GeoPoint { lon, lat }))
}

pub fn parse_overpass_str(
    text: &str,
    taxonomy: &Taxonomy,
) -> Result<(Vec<PoiRecord>, Vec<HighwayRecord>, OverpassDiagnostics), IngestError> {
    let doc: OverpassDoc =
        serde_json::from_str(text).map_err(|e| schema(format!("Overpass export: {e}")))?;
    let mut diag = OverpassDiagnostics {
        elements: doc.elements.len(),
        ..Default::default()
    };
    let mut pois = Vec::new();
    let mut highways = Vec::new();
    let skip = |diag: &mut OverpassDiagnostics, msg: String| {
        warn!("{msg}");
        diag.skipped_missing_geometry += 1;
        diag.warnings.push(msg);
    };

    for el in &doc.elements {
        let amenity = el.tags.get("amenity");
        let highway = el.tags.get("highway").filter(|_| el.kind == "way");
        if amenity.is_none() && highway.is_none() {
            diag.skipped_untagged += 1;
            continue;
        }
        let points: Option<Vec<GeoPoint>> = match (&el.geometry, el.lat, el.lon) {
            (Some(OverpassGeometry::Line(g)), _, _) => to_points(g).ok(),
            (Some(OverpassGeometry::Point(g)), _, _) => to_points(std::slice::from_ref(g)).ok(),
            (None, Some(lat), Some(lon)) => GeoPoint::new(lon, lat).ok().map(|p| vec![p]),
            _ => None,
        };
        let Some(points) = points.filter(|p| !p.is_empty()) else {
            skip(&mut diag, format!("{} {}: missing or invalid geometry, skipped", el.kind, el.id));
            continue;
        };

        if let Some(tag) = amenity {
            let geometry = if el.kind == "way" {
                way_poi_geometry(points.clone())
            } else {
                Some(PoiGeometry::Point(points[0]))
            };
            match geometry {
                Some(geometry) => {
                    let (area_km2, footprint_defaulted) = match &geometry {
                        PoiGeometry::Polygon(p) => match polygon_area_km2(p) {
                            Ok(a) => (a, false),
                            Err(_) => (taxonomy.node_footprint_km2, true),
                        },
                        PoiGeometry::Point(_) => (taxonomy.node_footprint_km2, true),
                    };
                    let charger_class = classify_poi(tag, taxonomy);
                    if charger_class == ChargerClass::Ignored {
                        diag.pois_ignored += 1;
                    }
                    if footprint_defaulted {
                        diag.pois_node_footprint += 1;
                    }
                    diag.pois += 1;
                    pois.push(PoiRecord {
                        osm_id: el.id,
                        amenity_tag: tag.clone(),
                        geometry,
                        charger_class,
                        area_km2,
                        footprint_defaulted,
                    });
                }
                None => skip(&mut diag, format!("way {}: no usable POI geometry, skipped", el.id)),
            }
        }

        if let Some(tag) = highway {
            match GeoPolyline::new(points) {
                Ok(polyline) => {
                    let cls = taxonomy.highway_class(tag);
                    if cls == HighwayClass::Ignored {
                        diag.highways_ignored += 1;
                    }
                    diag.highways += 1;
                    highways.push(HighwayRecord {
                        osm_id: el.id,
                        highway_tag: tag.clone(),
                        polyline,
                        cls,
                    });
                }
                Err(e) => skip(&mut diag, format!("way {}: unusable highway geometry ({e}), skipped", el.id)),
            }
        }
    }
    Ok((pois, highways, diag))
}

pub fn parse_overpass(
    path: &Path,
    taxonomy: &Taxonomy,
) -> Result<(Vec<PoiRecord>, Vec<HighwayRecord>, OverpassDiagnostics), IngestError> {
    parse_overpass_str(&read(path)?, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::equator_degrees;

    fn square_feature(id: &str, x0: f64, tau: Value) -> Value {
        let d = equator_degrees(1.0);
        let (a, b) = (x0 * d, (x0 + 1.0) * d);
        json!({
            "type": "Feature",
            "properties": {"id": id, "name": format!("Zone {id}"), "pop_density_tau": tau,
                            "household_size_chi": 2.0, "par_count_sigma": 10},
            "geometry": {"type": "Polygon", "coordinates": [[[a, 0.0], [b, 0.0], [b, d], [a, d], [a, 0.0]]]}
        })
    }

    fn collection(f: Vec<Value>) -> String {
        json!({"type": "FeatureCollection", "features": f}).to_string()
    }

    #[test]
    fn zones_parse() {
        let text = collection(vec![
            square_feature("A", 0.0, json!(1000.0)),
            square_feature("B", 1.0, json!(2000.0)),
            square_feature("C", 2.0, json!(0.0)),
        ]);
        let zones = parse_zones(&text).unwrap();
        assert_eq!(zones.len(), 3);
        assert_eq!(zones[1].pop_density_tau, 2000.0);
        assert_eq!(zones[2].household_size_chi, 2.0);
        assert_eq!(zones[0].par_count_sigma, 10.0);
        // round trip through the writer
        assert_eq!(parse_zones(&zones_to_geojson(&zones).to_string()).unwrap(), zones);
    }

    #[test]
    fn zone_missing_property_names_field() {
        let mut f = square_feature("A", 0.0, json!(1.0));
        f["properties"].as_object_mut().unwrap().remove("pop_density_tau");
        let err = parse_zones(&collection(vec![f])).unwrap_err();
        assert!(matches!(&err, IngestError::Schema(m) if m.contains("pop_density_tau")), "{err}");
    }

    #[test]
    fn duplicate_zone_id() {
        let text = collection(vec![square_feature("A", 0.0, json!(1.0)), square_feature("A", 1.0, json!(1.0))]);
        assert!(matches!(parse_zones(&text), Err(IngestError::DuplicateZoneId(id)) if id == "A"));
    }

    #[test]
    fn zone_non_polygon_rejected() {
        let mut f = square_feature("A", 0.0, json!(1.0));
        f["geometry"] = json!({"type": "Point", "coordinates": [0.0, 0.0]});
        assert!(matches!(parse_zones(&collection(vec![f])), Err(IngestError::Schema(_))));
    }

    #[test]
    fn negative_density_rejected() {
        let text = collection(vec![square_feature("A", 0.0, json!(-1.0))]);
        assert!(matches!(parse_zones(&text), Err(IngestError::Schema(_))));
    }

    #[test]
    fn classification_matches_table() {
        let t = Taxonomy::default();
        assert_eq!(classify_poi("office", &t), ChargerClass::NormalWork);
        for tag in ["university", "school", "kindergarten", "entertainment", "shops", "clinic", "hospital"] {
            assert_eq!(classify_poi(tag, &t), ChargerClass::SemiRapid, "{tag}");
        }
        for tag in ["bar", "café", "fast_food", "ice_cream", "pub", "restaurant", "tourism", "taxi"] {
            assert_eq!(classify_poi(tag, &t), ChargerClass::Fast, "{tag}");
        }
        assert_eq!(classify_poi("sport", &t), ChargerClass::Excluded);
        assert_eq!(classify_poi("fountain", &t), ChargerClass::Ignored);

        assert_eq!(classify_highway("residential"), HighwayClass::Residential);
        for tag in ["motorway", "primary", "secondary", "tertiary"] {
            assert_eq!(classify_highway(tag), HighwayClass::Major);
            assert_eq!(t.highway_class(tag), HighwayClass::Major);
        }
        assert_eq!(classify_highway("footway"), HighwayClass::Ignored);
    }

    #[test]
    fn trip_table_pragma_and_rows() {
        let t = parse_trip_table("#extrapolation_factor=2.5\norigin_tacs,dest_tacs,regular,irregular\nc1,c2,10,4\n").unwrap();
        assert_eq!(t.extrapolation_factor, 2.5);
        assert_eq!(t.rows.len(), 1);
        let t = parse_trip_table("origin_tacs,dest_tacs,regular,irregular\nc1,c2,1,0\n").unwrap();
        assert_eq!(t.extrapolation_factor, 1.0);
        assert!(parse_trip_table("origin_tacs,dest_tacs,regular,irregular\nc1,c2,-1,0\n").is_err());
        assert!(parse_trip_table("origin,dest,regular,irregular\nc1,c2,1,0\n").is_err());
        assert_eq!(parse_trip_table(&trip_table_to_csv(&t)).unwrap(), t);
    }

    fn zone(id: &str, x0: f64) -> Zone {
        let d = equator_degrees(1.0);
        Zone {
            id: id.into(),
            name: id.into(),
            polygon: GeoPolygon::rect(x0 * d, 0.0, (x0 + 1.0) * d, d).unwrap(),
            pop_density_tau: 1000.0,
            household_size_chi: 2.0,
            par_count_sigma: 0.0,
        }
    }

    fn cell(id: &str, x0: f64, w: f64, y0: f64, h: f64) -> TacsCell {
        let d = equator_degrees(1.0);
        TacsCell {
            id: id.into(),
            polygon: GeoPolygon::rect(x0 * d, y0 * d, (x0 + w) * d, (y0 + h) * d).unwrap(),
        }
    }

    #[test]
    fn tacs_assignment() {
        let zones = vec![zone("A", 0.0), zone("B", 1.0)];
        let cells = vec![
            cell("same", 0.0, 1.0, 0.0, 1.0),
            // 0.4 km² inside A and 0.1 km² inside B: IoU 0.4/1.1 vs 0.1/1.4
            cell("mixed", 0.6, 0.5, 0.0, 1.0),
            cell("far", 10.0, 1.0, 0.0, 1.0),
        ];
        let m = assign_tacs_to_zones(&cells, &zones).unwrap();
        assert_eq!(m["same"].as_deref(), Some("A"));
        assert_eq!(m["mixed"].as_deref(), Some("A"));
        assert_eq!(m["far"], None);
        // order of zones does not matter
        let rev: Vec<Zone> = zones.iter().rev().cloned().collect();
        assert_eq!(assign_tacs_to_zones(&cells, &rev).unwrap(), m);
    }

    #[test]
    fn tacs_tie_goes_to_smallest_id() {
        let zones = vec![zone("B", 1.0), zone("A", 0.0)];
        let cells = vec![cell("mid", 0.5, 1.0, 0.0, 1.0)];
        assert_eq!(assign_tacs_to_zones(&cells, &zones).unwrap()["mid"].as_deref(), Some("A"));
    }

    #[test]
    fn aggregation() {
        let zones = vec![zone("A", 0.0), zone("B", 1.0)];
        let mapping: BTreeMap<String, Option<String>> = [
            ("c1".to_string(), Some("A".to_string())),
            ("c2".to_string(), Some("B".to_string())),
            ("c3".to_string(), Some("B".to_string())),
            ("cx".to_string(), None),
        ]
        .into_iter()
        .collect();
        let row = |o: &str, d: &str, r: f64, i: f64| TripRow {
            origin_tacs: o.into(),
            dest_tacs: d.into(),
            regular: r,
            irregular: i,
        };
        let table = TacsTripTable {
            rows: vec![row("c1", "c2", 10.0, 1.0)],
            extrapolation_factor: 1.0,
        };
        let (m, _) = aggregate_trips(&table, &mapping, &zones).unwrap();
        assert_eq!(m.regular[[0, 1]], 10.0);
        assert_eq!(m.irregular[[0, 1]], 1.0);

        let table = TacsTripTable {
            rows: vec![row("c1", "c2", 10.0, 0.0), row("c1", "c3", 5.0, 0.0), row("cx", "c2", 7.0, 3.0)],
            extrapolation_factor: 2.5,
        };
        let (m, diag) = aggregate_trips(&table, &mapping, &zones).unwrap();
        assert_eq!(m.regular[[0, 1]], 37.5);
        assert_eq!(diag.rows_dropped_unassigned, 1);
        assert_eq!(diag.regular_dropped, 17.5);

        let table = TacsTripTable {
            rows: vec![row("c1", "nope", 1.0, 0.0)],
            extrapolation_factor: 1.0,
        };
        assert!(matches!(aggregate_trips(&table, &mapping, &zones), Err(IngestError::UnknownCell(c)) if c == "nope"));
    }

    #[test]
    fn overpass_records() {
        let text = json!({"elements": [
            {"type": "way", "id": 1, "tags": {"amenity": "restaurant"},
             "geometry": [{"lat": 0.0, "lon": 0.0}, {"lat": 0.0, "lon": 0.001}, {"lat": 0.001, "lon": 0.001},
                          {"lat": 0.001, "lon": 0.0}, {"lat": 0.0, "lon": 0.0}]},
            {"type": "node", "id": 2, "lat": 0.0005, "lon": 0.0005, "tags": {"amenity": "taxi"}},
            {"type": "node", "id": 3, "geometry": {"lat": 0.0005, "lon": 0.0005}, "tags": {"amenity": "fountain"}},
            {"type": "way", "id": 4, "tags": {"highway": "residential"},
             "geometry": [{"lat": 0.0, "lon": 0.0}, {"lat": 0.0, "lon": 0.01}]},
            {"type": "way", "id": 5, "tags": {"highway": "footway"},
             "geometry": [{"lat": 0.0, "lon": 0.0}, {"lat": 0.0, "lon": 0.01}]},
            {"type": "way", "id": 6, "tags": {"highway": "primary"}},
            {"type": "node", "id": 7, "lat": 0.0, "lon": 0.0, "tags": {"name": "x"}}
        ]})
        .to_string();
        let (pois, highways, diag) = parse_overpass_str(&text, &Taxonomy::default()).unwrap();
        assert_eq!(pois.len(), 3);
        assert_eq!(pois[0].charger_class, ChargerClass::Fast);
        assert!(matches!(pois[0].geometry, PoiGeometry::Polygon(_)));
        assert!(!pois[0].footprint_defaulted);
        assert!((pois[0].area_km2 - (0.001f64.to_radians() * 6371.0).powi(2)).abs() < 1e-8);
        assert_eq!(pois[1].charger_class, ChargerClass::Fast);
        assert_eq!(pois[1].area_km2, 0.0001);
        assert_eq!(pois[2].charger_class, ChargerClass::Ignored);
        assert_eq!(highways.len(), 2);
        assert_eq!(highways[0].cls, HighwayClass::Residential);
        assert_eq!(highways[1].cls, HighwayClass::Ignored);
        assert_eq!(diag.skipped_missing_geometry, 1);
        assert_eq!(diag.skipped_untagged, 1);
        assert_eq!(diag.warnings.len(), 1);
    }

    #[test]
    fn overpass_malformed() {
        assert!(matches!(parse_overpass_str("{not json", &Taxonomy::default()), Err(IngestError::Schema(_))));
        assert!(matches!(parse_overpass_str("{\"x\": 1}", &Taxonomy::default()), Err(IngestError::Schema(_))));
    }
}
