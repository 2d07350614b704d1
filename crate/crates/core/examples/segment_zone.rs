//! Splits one zone's demand into the five charging segments, from road
//! lengths, POI footprints and the private parking ratio.

use chargecast::corrections::{compute_ppr, PprFormula};
use chargecast::geometry::{equator_degrees, GeoPoint, GeoPolygon, GeoPolyline};
use chargecast::ingest::{ChargerClass, HighwayClass, HighwayRecord, PoiGeometry, PoiRecord, Zone};
use chargecast::segmentation::{poi_area_table, residential_share, segment_demand, EmptyPoiFallback};

fn main() {
    let km = equator_degrees;
    let zone = Zone {
        id: "demo".into(),
        name: "Demo".into(),
        polygon: GeoPolygon::rect(0.0, 0.0, km(2.0), km(2.0)).unwrap(),
        pop_density_tau: 7_000.0,
        household_size_chi: 2.1,
        par_count_sigma: 1_500.0,
    };
    let road = |cls, y: f64, len: f64| HighwayRecord {
        osm_id: 0,
        highway_tag: format!("{cls:?}"),
        polyline: GeoPolyline::new(vec![GeoPoint { lon: km(0.2), lat: km(y) }, GeoPoint { lon: km(0.2 + len), lat: km(y) }]).unwrap(),
        cls,
    };
    let highways = [road(HighwayClass::Residential, 0.5, 1.5), road(HighwayClass::Residential, 1.0, 1.5), road(HighwayClass::Major, 1.5, 1.0)];
    let poi = |cls, x: f64, area: f64| PoiRecord {
        osm_id: 0,
        amenity_tag: String::new(),
        geometry: PoiGeometry::Point(GeoPoint { lon: km(x), lat: km(1.0) }),
        charger_class: cls,
        area_km2: area,
        footprint_defaulted: false,
    };
    let pois = [poi(ChargerClass::NormalWork, 0.5, 0.02), poi(ChargerClass::SemiRapid, 1.0, 0.05), poi(ChargerClass::Fast, 1.5, 0.01)];

    let alpha = residential_share(&zone, &highways, 0.001).unwrap();
    let areas = poi_area_table(&zone, &pois);
    let ppr = compute_ppr(&zone, None, PprFormula::PerHousehold).unwrap();
    println!("alpha = {:.3} ({:.2} of {:.2} km residential)", alpha.alpha, alpha.residential_km, alpha.classified_km);
    println!("gamma = {:.3} ({:.0} households)", ppr.gamma, ppr.households);
    println!("POI areas: {areas:?}");
    let (phi, _) = segment_demand(3_000.0, 1_200.0, alpha.alpha, ppr.gamma, &areas, EmptyPoiFallback::Nres).unwrap();
    println!("{phi:#?}");
}
