//! Monte Carlo mean distance between two random points of a zone, compared
//! with the closed form for a square, then scaled by the detour index.

use chargecast::distances::DEFAULT_DETOUR_INDEX;
use chargecast::geometry::{equator_degrees, mc_mean_pairwise_distance_km, GeoPolygon, McConfig};

fn main() {
    let exact_unit = (2.0 + 2f64.sqrt() + 5.0 * (1.0 + 2f64.sqrt()).ln()) / 15.0;
    for side in [0.5, 1.0, 2.0] {
        let d = equator_degrees(side);
        let square = GeoPolygon::rect(0.0, 0.0, d, d).unwrap();
        for n in [1_000, 10_000, 100_000] {
            let est = mc_mean_pairwise_distance_km(&square, McConfig { n_samples: n, seed: 42 }).unwrap();
            println!(
                "{side} km square, n = {n:>6}: {est:.4} km (exact {:.4}), driving {:.4} km",
                exact_unit * side,
                est * DEFAULT_DETOUR_INDEX
            );
        }
    }
}
