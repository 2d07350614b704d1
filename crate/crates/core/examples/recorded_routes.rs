//! Replays recorded driving distances between five Brussels neighborhoods and
//! prints them as a matrix next to the offline great-circle estimate.

use std::path::Path;

use chargecast::distances::{build_distance_matrix, FixtureBackend, MatrixOptions, TrafficContext};
use chargecast::geometry::{equator_degrees, GeoPolygon};
use chargecast::ingest::Zone;

fn main() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/recorded_routes.json");
    let backend = FixtureBackend::load(&fixture).expect("fixture loads");
    let names = ["Altitude 100", "Boondael", "Vivier d'oie", "Université", "Observatoire"];
    let d = equator_degrees(1.0);
    // Geometry is irrelevant for replay; only the ids are looked up.
    let zones: Vec<Zone> = names
        .iter()
        .enumerate()
        .map(|(k, n)| Zone {
            id: n.to_string(),
            name: n.to_string(),
            polygon: GeoPolygon::rect(k as f64 * d, 0.0, (k as f64 + 1.0) * d, d).unwrap(),
            pop_density_tau: 0.0,
            household_size_chi: 1.0,
            par_count_sigma: 0.0,
        })
        .collect();
    let m = build_distance_matrix(&zones, &backend, &TrafficContext::default(), &MatrixOptions::default()).unwrap();
    print!("{:>14}", "");
    for n in names {
        print!("{n:>14}");
    }
    println!();
    for (i, n) in names.iter().enumerate() {
        print!("{n:>14}");
        for j in 0..names.len() {
            print!("{:>14.3}", m.km[[i, j]]);
        }
        println!();
    }
}
