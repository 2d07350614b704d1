//! Fits share(d) = A (1 - exp(-B d)) to the bundled Brussels mode-share table
//! under each abscissa rule and prints the corrected share at a few distances.

use chargecast::corrections::{driving_ratio, fit_driving_ratio, AbscissaRule, ModeShareTable};

fn main() {
    let table = ModeShareTable::brussels();
    for rule in [AbscissaRule::BinMidpoint, AbscissaRule::BinLow, AbscissaRule::BinHigh] {
        let m = fit_driving_ratio(&table, rule).expect("fit converges");
        println!("{rule:?}: A = {:.4}, B = {:.4}, sse = {:.5}", m.a_param, m.b_param, m.sse);
    }
    let m = fit_driving_ratio(&table, AbscissaRule::BinMidpoint).unwrap();
    for d in [0.5, 2.0, 5.0, 10.0, 30.0] {
        println!("  {d:>5.1} km -> {:.3} of trips by car", driving_ratio(&m, d));
    }
}
