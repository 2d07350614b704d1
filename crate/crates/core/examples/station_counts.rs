//! Converts daily demand per segment into charging points under the bundled
//! and the lower-occupancy charger assumptions, with and without a 5%
//! traffic reduction.

use std::path::Path;

use chargecast::geometry::{equator_degrees, GeoPolygon};
use chargecast::ingest::Zone;
use chargecast::segmentation::{PoiAreaTable, SegmentedDemand, ZoneSegment};
use chargecast::stations::{build_station_report, daily_capacity_kwh, ChargerSpec, ScenarioConfig};

fn main() {
    let d = equator_degrees(1.0);
    let zone = Zone {
        id: "demo".into(),
        name: "Demo".into(),
        polygon: GeoPolygon::rect(0.0, 0.0, d, d).unwrap(),
        pop_density_tau: 0.0,
        household_size_chi: 1.0,
        par_count_sigma: 0.0,
    };
    let phi = SegmentedDemand { phi_nres: 5_200.0, phi_noff: 900.0, phi_sem: 700.0, phi_rap: 300.0, phi_par: 1_500.0 };
    let seg = ZoneSegment { zone_id: "demo".into(), total_kwh: phi.total(), alpha: 0.0, gamma: 0.0, areas: PoiAreaTable::default(), phi };
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for file in ["charger_specs.json", "charger_specs_mid_occupancy.json", "charger_specs_low_occupancy.json"] {
        let specs = ChargerSpec::load_list(&data.join(file)).unwrap();
        let caps: Vec<String> = specs.iter().map(|s| format!("{:?} {:.1}", s.technology, daily_capacity_kwh(s))).collect();
        println!("{file}: kWh/day per point: {}", caps.join(", "));
        for reduction in [0.0, 0.05] {
            let scen = ScenarioConfig { traffic_reduction: reduction, full_normal: false };
            let r = build_station_report(std::slice::from_ref(&seg), &specs, scen, std::slice::from_ref(&zone)).unwrap();
            let c = r.citywide;
            println!(
                "  traffic -{:>2.0}%: resi {}, work {}, semi-rapid {}, rapid {} (mixed {}), full normal {}",
                reduction * 100.0,
                c.normal_resi,
                c.normal_work,
                c.semi_rapid,
                c.rapid,
                c.mixed_total(),
                c.full_normal
            );
        }
    }
}
