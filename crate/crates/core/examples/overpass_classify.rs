//! Parses a small Overpass export and shows how amenities and roads are
//! classified. Pass a path to classify your own export.

use chargecast::ingest::{parse_overpass, parse_overpass_str, Taxonomy};

const SAMPLE: &str = r#"{"elements": [
  {"type": "node", "id": 1, "lat": 50.82, "lon": 4.39, "tags": {"amenity": "restaurant"}},
  {"type": "node", "id": 2, "lat": 50.83, "lon": 4.38, "tags": {"amenity": "bench"}},
  {"type": "way", "id": 3, "tags": {"amenity": "university"}, "geometry": [
    {"lat": 50.810, "lon": 4.380}, {"lat": 50.810, "lon": 4.384},
    {"lat": 50.813, "lon": 4.384}, {"lat": 50.813, "lon": 4.380}, {"lat": 50.810, "lon": 4.380}]},
  {"type": "way", "id": 4, "tags": {"highway": "residential"}, "geometry": [
    {"lat": 50.820, "lon": 4.370}, {"lat": 50.821, "lon": 4.375}]},
  {"type": "way", "id": 5, "tags": {"highway": "cycleway"}, "geometry": [
    {"lat": 50.820, "lon": 4.370}, {"lat": 50.825, "lon": 4.371}]}
]}"#;

fn main() {
    let tax = Taxonomy::default();
    let parsed = match std::env::args().nth(1) {
        Some(path) => parse_overpass(path.as_ref(), &tax),
        None => parse_overpass_str(SAMPLE, &tax),
    };
    let (pois, highways, diag) = parsed.expect("valid export");
    for p in &pois {
        println!(
            "poi {:>4} {:<12} -> {:?}, {:.5} km2{}",
            p.osm_id,
            p.amenity_tag,
            p.charger_class,
            p.area_km2,
            if p.footprint_defaulted { " (node footprint)" } else { "" }
        );
    }
    for h in &highways {
        println!("road {:>3} {:<12} -> {:?}, {:.3} km", h.osm_id, h.highway_tag, h.cls, h.polyline.length_km());
    }
    println!("{diag:?}");
}
