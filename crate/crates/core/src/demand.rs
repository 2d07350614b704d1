//! Trip matrices → energy (kWh per average workday) → per-zone demand.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::{csv_field, DistanceMatrix};
use crate::geometry::GeometryError;
use crate::ingest::{TripMatrix, Zone};

/// Average EV consumption on the road.
pub const DEFAULT_KWH_PER_KM: f64 = 0.22;

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("kwh_per_km {0} outside [0.05, 1.0]")]
    InvalidConsumption(f64),
    #[error("zone '{zone}': {source}")]
    Geometry { zone: String, source: GeometryError },
    #[error("zone demand CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub kwh_per_km: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            kwh_per_km: DEFAULT_KWH_PER_KM,
        }
    }
}

impl EnergyConfig {
    pub fn new(kwh_per_km: f64) -> Result<Self, DemandError> {
        if !(0.05..=1.0).contains(&kwh_per_km) {
            return Err(DemandError::InvalidConsumption(kwh_per_km));
        }
        Ok(Self { kwh_per_km })
    }
}

/// kWh per average workday between zones.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMatrices {
    pub zone_ids: Vec<String>,
    pub regular: Array2<f64>,
    pub irregular: Array2<f64>,
}

pub fn trips_to_energy(trips: &TripMatrix, dist: &DistanceMatrix, cfg: &EnergyConfig) -> Result<EnergyMatrices, DemandError> {
    if trips.zone_ids != dist.zone_ids {
        return Err(DemandError::DimensionMismatch(format!(
            "trip matrix has {} zones, distance matrix {}",
            trips.len(),
            dist.len()
        )));
    }
    let per_trip = dist.km.mapv(|d| d * cfg.kwh_per_km);
    Ok(EnergyMatrices {
        zone_ids: trips.zone_ids.clone(),
        regular: &trips.regular * &per_trip,
        irregular: &trips.irregular * &per_trip,
    })
}

/// Which end of a trip its energy is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionPolicy {
    #[default]
    Destination,
    Origin,
    SplitHalf,
}

impl std::str::FromStr for AttributionPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "destination" => Ok(Self::Destination),
            "origin" => Ok(Self::Origin),
            "split" | "split_half" => Ok(Self::SplitHalf),
            _ => Err(format!("unknown attribution '{s}' (destination|origin|split)")),
        }
    }
}

/// Per-zone regular (Δ_i) and irregular (Δ_j) demand, kWh per workday.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneDemand {
    pub zone_ids: Vec<String>,
    pub delta_regular: Vec<f64>,
    pub delta_irregular: Vec<f64>,
}

impl ZoneDemand {
    pub fn total(&self, k: usize) -> f64 {
        self.delta_regular[k] + self.delta_irregular[k]
    }

    pub fn len(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zone_ids.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("zone_id,delta_regular,delta_irregular\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                csv_field(&self.zone_ids[k]),
                self.delta_regular[k],
                self.delta_irregular[k]
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DemandError> {
        #[derive(Deserialize)]
        struct Row {
            zone_id: String,
            delta_regular: f64,
            delta_irregular: f64,
        }
        let mut d = ZoneDemand {
            zone_ids: Vec::new(),
            delta_regular: Vec::new(),
            delta_irregular: Vec::new(),
        };
        for rec in csv::Reader::from_reader(text.as_bytes()).deserialize::<Row>() {
            let r = rec.map_err(|e| DemandError::Csv(e.to_string()))?;
            if !(r.delta_regular >= 0.0 && r.delta_irregular >= 0.0) {
                return Err(DemandError::Csv(format!("zone '{}': negative demand", r.zone_id)));
            }
            d.zone_ids.push(r.zone_id);
            d.delta_regular.push(r.delta_regular);
            d.delta_irregular.push(r.delta_irregular);
        }
        Ok(d)
    }
}

fn attribute(e: &Array2<f64>, policy: AttributionPolicy) -> Vec<f64> {
    // Fixed summation order: rows (or columns) are folded by index.
    let by_origin = || e.axis_iter(Axis(0)).map(|row| row.iter().sum::<f64>()).collect::<Vec<_>>();
    let by_dest = || e.axis_iter(Axis(1)).map(|col| col.iter().sum::<f64>()).collect::<Vec<_>>();
    match policy {
        AttributionPolicy::Destination => by_dest(),
        AttributionPolicy::Origin => by_origin(),
        AttributionPolicy::SplitHalf => by_origin()
            .into_iter()
            .zip(by_dest())
            .map(|(o, d)| 0.5 * o + 0.5 * d)
            .collect(),
    }
}

pub fn aggregate_zone_demand(energy: &EnergyMatrices, policy: AttributionPolicy) -> ZoneDemand {
    ZoneDemand {
        zone_ids: energy.zone_ids.clone(),
        delta_regular: attribute(&energy.regular, policy),
        delta_irregular: attribute(&energy.irregular, policy),
    }
}

/// Total demand per zone in MWh per km².
pub fn normalize_by_area(d: &ZoneDemand, zones: &[Zone]) -> Result<Vec<f64>, DemandError> {
    if d.len() != zones.len() {
        return Err(DemandError::DimensionMismatch(format!(
            "{} demand entries for {} zones",
            d.len(),
            zones.len()
        )));
    }
    zones
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let area = z.area_km2().map_err(|source| DemandError::Geometry {
                zone: z.id.clone(),
                source,
            })?;
            if area <= 0.0 {
                return Err(DemandError::Geometry {
                    zone: z.id.clone(),
                    source: GeometryError::DegenerateGeometry("zero area".into()),
                });
            }
            Ok(d.total(k) / 1000.0 / area)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{equator_degrees, GeoPolygon};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("Z{k}")).collect()
    }

    fn energy_single(e: f64) -> EnergyMatrices {
        let mut m = EnergyMatrices {
            zone_ids: ids(2),
            regular: Array2::zeros((2, 2)),
            irregular: Array2::zeros((2, 2)),
        };
        m.regular[[0, 1]] = e;
        m
    }

    #[test]
    fn trip_energy() {
        let mut t = TripMatrix::zeros(ids(2));
        t.regular[[0, 1]] = 100.0;
        let d = DistanceMatrix { zone_ids: ids(2), km: Array2::from_elem((2, 2), 5.0) };
        let e = trips_to_energy(&t, &d, &EnergyConfig::default()).unwrap();
        assert_relative_eq!(e.regular[[0, 1]], 110.0, max_relative = 1e-12);
        assert!(e.irregular.iter().all(|&v| v == 0.0));
        let hi = trips_to_energy(&t, &d, &EnergyConfig::new(0.24).unwrap()).unwrap();
        assert_relative_eq!(hi.regular[[0, 1]] / e.regular[[0, 1]], 0.24 / 0.22, max_relative = 1e-12);
        assert!(EnergyConfig::new(2.0).is_err());
        let bad = DistanceMatrix { zone_ids: ids(3), km: Array2::zeros((3, 3)) };
        assert!(trips_to_energy(&t, &bad, &EnergyConfig::default()).is_err());
    }

    #[test]
    fn attribution_policies() {
        let e = energy_single(10.0);
        let d = aggregate_zone_demand(&e, AttributionPolicy::Destination);
        assert_eq!(d.delta_regular, vec![0.0, 10.0]);
        let o = aggregate_zone_demand(&e, AttributionPolicy::Origin);
        assert_eq!(o.delta_regular, vec![10.0, 0.0]);
        let s = aggregate_zone_demand(&e, AttributionPolicy::SplitHalf);
        assert_eq!(s.delta_regular, vec![5.0, 5.0]);
    }

    #[test]
    fn diagonal_stays_home() {
        let mut e = energy_single(0.0);
        e.irregular[[1, 1]] = 7.0;
        for p in [AttributionPolicy::Destination, AttributionPolicy::Origin, AttributionPolicy::SplitHalf] {
            assert_eq!(aggregate_zone_demand(&e, p).delta_irregular, vec![0.0, 7.0]);
        }
    }

    #[test]
    fn normalization() {
        let d1 = equator_degrees(1.0);
        let zone = |w: f64| Zone {
            id: "Z0".into(),
            name: "Z0".into(),
            polygon: GeoPolygon::rect(0.0, 0.0, w * d1, d1).unwrap(),
            pop_density_tau: 0.0,
            household_size_chi: 1.0,
            par_count_sigma: 0.0,
        };
        let d = ZoneDemand { zone_ids: ids(1), delta_regular: vec![5000.0], delta_irregular: vec![200.0] };
        let one = normalize_by_area(&d, &[zone(1.0)]).unwrap()[0];
        assert_relative_eq!(one, 5.2, max_relative = 1e-6);
        let two = normalize_by_area(&d, &[zone(2.0)]).unwrap()[0];
        assert_relative_eq!(two, one / 2.0, max_relative = 1e-6);
        let zero = ZoneDemand { zone_ids: ids(1), delta_regular: vec![0.0], delta_irregular: vec![0.0] };
        assert_eq!(normalize_by_area(&zero, &[zone(1.0)]).unwrap()[0], 0.0);
    }

    #[test]
    fn demand_csv_round_trip() {
        let d = ZoneDemand { zone_ids: ids(2), delta_regular: vec![1.5, 0.0], delta_irregular: vec![0.25, 3.0] };
        assert_eq!(ZoneDemand::from_csv(&d.to_csv()).unwrap(), d);
    }

    fn square(n: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(0.0f64..1e4, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
    }

    proptest! {
        #[test]
        fn policies_conserve_energy(n in 1usize..8, seed in square(8)) {
            let reg = seed.slice(ndarray::s![..n, ..n]).to_owned();
            let irr = reg.t().to_owned();
            let e = EnergyMatrices { zone_ids: ids(n), regular: reg.clone(), irregular: irr.clone() };
            for p in [AttributionPolicy::Destination, AttributionPolicy::Origin, AttributionPolicy::SplitHalf] {
                let d = aggregate_zone_demand(&e, p);
                let tr: f64 = d.delta_regular.iter().sum();
                let ti: f64 = d.delta_irregular.iter().sum();
                prop_assert!((tr - reg.sum()).abs() <= 1e-9 * reg.sum().max(1.0));
                prop_assert!((ti - irr.sum()).abs() <= 1e-9 * irr.sum().max(1.0));
            }
        }

        #[test]
        fn symmetric_matrix_origin_equals_destination(n in 1usize..8, seed in square(8)) {
            // brute-force both sums on a symmetrized matrix
            let a = seed.slice(ndarray::s![..n, ..n]).to_owned();
            let sym = &a + &a.t();
            let e = EnergyMatrices { zone_ids: ids(n), regular: sym.clone(), irregular: Array2::zeros((n, n)) };
            let o = aggregate_zone_demand(&e, AttributionPolicy::Origin);
            let d = aggregate_zone_demand(&e, AttributionPolicy::Destination);
            for z in 0..n {
                let mut row = 0.0;
                let mut col = 0.0;
                for k in 0..n { row += sym[[z, k]]; col += sym[[k, z]]; }
                prop_assert!((o.delta_regular[z] - row).abs() <= 1e-9 * row.max(1.0));
                prop_assert!((d.delta_regular[z] - col).abs() <= 1e-9 * col.max(1.0));
                prop_assert!((o.delta_regular[z] - d.delta_regular[z]).abs() <= 1e-9 * row.max(1.0));
            }
        }
    }
}
