//! Generates a synthetic city, runs the whole pipeline on its files and
//! compares the result with the brute-force evaluator.

use chargecast::report::{emit_outputs, run_pipeline, PipelineConfig};
use chargecast::synth::{generate_city, oracle_evaluate, write_city, OracleConfig, SynthSpec};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let city = generate_city(&SynthSpec { seed, n_zones: 6, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ocfg = OracleConfig::default();
    let cfg_path = write_city(&city, &ocfg, &dir.path().join("in")).unwrap();
    let out = run_pipeline(&PipelineConfig::load(&cfg_path).unwrap()).unwrap();
    let files = emit_outputs(&out, &dir.path().join("out")).unwrap();
    let truth = oracle_evaluate(&city, &ocfg);

    println!("{:<4} {:>12} {:>12} {:>7} {:>7}  stations (pipeline / oracle)", "zone", "demand kWh", "oracle kWh", "alpha", "gamma");
    for (k, z) in truth.zones.iter().enumerate() {
        let s = &out.segments[k];
        println!(
            "{:<4} {:>12.3} {:>12.3} {:>7.3} {:>7.3}  {} / {}",
            z.id,
            s.total_kwh,
            z.delta_regular + z.delta_irregular,
            s.alpha,
            s.gamma,
            out.stations.zones[k].counts.mixed_total(),
            z.counts.mixed_total()
        );
    }
    println!("wrote {} files", files.len());
}
