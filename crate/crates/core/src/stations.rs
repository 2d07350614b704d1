//! Segmented energy demand → number of charging points per technology.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::ingest::Zone;
use crate::segmentation::ZoneSegment;

#[derive(Debug, Error, PartialEq)]
pub enum StationError {
    #[error("no charger spec for {0:?}")]
    MissingSpec(Technology),
    #[error("invalid charger spec for {technology:?}: {reason}")]
    InvalidSpec { technology: Technology, reason: String },
    #[error("traffic_reduction {0} outside [0, 1)")]
    InvalidScenario(f64),
    #[error("charger specs: {0}")]
    Config(String),
    #[error("zone '{zone}': {source}")]
    Geometry { zone: String, source: GeometryError },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technology {
    Normal,
    SemiRapid,
    Rapid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerSpec {
    pub technology: Technology,
    /// Nameplate power, kW.
    pub power_kw: f64,
    /// Average fraction of nameplate power actually delivered.
    pub delivery: f64,
    /// Fraction of opening hours a point is in use.
    pub occupancy: f64,
    /// Opening hours per day.
    pub hours: f64,
}

const DEFAULT_SPECS: &str = include_str!("../data/charger_specs.json");

impl ChargerSpec {
    pub fn validate(&self) -> Result<(), StationError> {
        let bad = |reason: &str| StationError::InvalidSpec {
            technology: self.technology,
            reason: reason.to_string(),
        };
        if !(self.power_kw > 0.0 && self.power_kw.is_finite()) {
            return Err(bad("power_kw must be > 0"));
        }
        if !(self.delivery > 0.0 && self.delivery <= 1.0) {
            return Err(bad("delivery must be in (0, 1]"));
        }
        if !(self.occupancy > 0.0 && self.occupancy <= 1.0) {
            return Err(bad("occupancy must be in (0, 1]"));
        }
        if !(self.hours > 0.0 && self.hours <= 24.0) {
            return Err(bad("hours must be in (0, 24]"));
        }
        Ok(())
    }

    /// The bundled default assumptions (7 / 22 / 100 kW).
    pub fn defaults() -> Vec<ChargerSpec> {
        serde_json::from_str(DEFAULT_SPECS).expect("bundled charger specs are valid")
    }

    pub fn parse_list(text: &str) -> Result<Vec<ChargerSpec>, StationError> {
        let specs: Vec<ChargerSpec> = serde_json::from_str(text).map_err(|e| StationError::Config(e.to_string()))?;
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }

    pub fn load_list(path: &Path) -> Result<Vec<ChargerSpec>, StationError> {
        let text = std::fs::read_to_string(path).map_err(|e| StationError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_list(&text)
    }
}

pub fn daily_capacity_kwh(spec: &ChargerSpec) -> f64 {
    spec.power_kw * spec.delivery * spec.occupancy * spec.hours
}

/// Relative slack below which a quotient just above an integer is treated as
/// that integer, so accumulated rounding in the demand does not add a point.
const CEIL_REL_TOL: f64 = 1e-9;

pub fn stations_needed(demand_kwh_day: f64, spec: &ChargerSpec) -> u64 {
    if !(demand_kwh_day > 0.0) {
        return 0;
    }
    let ratio = demand_kwh_day / daily_capacity_kwh(spec);
    let floor = ratio.floor();
    if ratio - floor <= CEIL_REL_TOL * ratio {
        floor as u64
    } else {
        floor as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Fraction by which all traffic (and therefore demand) is reduced.
    #[serde(default)]
    pub traffic_reduction: f64,
    /// Use the all-normal count for per-km² densities.
    #[serde(default)]
    pub full_normal: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), StationError> {
        if (0.0..1.0).contains(&self.traffic_reduction) {
            Ok(())
        } else {
            Err(StationError::InvalidScenario(self.traffic_reduction))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationCounts {
    pub normal_resi: u64,
    pub normal_work: u64,
    pub semi_rapid: u64,
    pub rapid: u64,
    /// Points needed if every public segment were served by normal chargers.
    pub full_normal: u64,
}

impl StationCounts {
    pub fn mixed_total(&self) -> u64 {
        self.normal_resi + self.normal_work + self.semi_rapid + self.rapid
    }

    fn accumulate(&mut self, o: &StationCounts) {
        self.normal_resi += o.normal_resi;
        self.normal_work += o.normal_work;
        self.semi_rapid += o.semi_rapid;
        self.rapid += o.rapid;
        self.full_normal += o.full_normal;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneStations {
    pub zone_id: String,
    pub area_km2: f64,
    pub counts: StationCounts,
    pub stations_per_km2: f64,
    /// Demand absorbed by private parking, kWh/day, after scenario scaling.
    pub private_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationReport {
    pub scenario: ScenarioConfig,
    pub zones: Vec<ZoneStations>,
    pub citywide: StationCounts,
}

fn find_spec(specs: &[ChargerSpec], t: Technology) -> Result<ChargerSpec, StationError> {
    let spec = specs
        .iter()
        .find(|s| s.technology == t)
        .copied()
        .ok_or(StationError::MissingSpec(t))?;
    spec.validate()?;
    Ok(spec)
}

pub fn zone_counts(seg: &ZoneSegment, normal: &ChargerSpec, semi: &ChargerSpec, rapid: &ChargerSpec, keep: f64) -> StationCounts {
    let phi = seg.phi.scaled(keep);
    StationCounts {
        normal_resi: stations_needed(phi.phi_nres, normal),
        normal_work: stations_needed(phi.phi_noff, normal),
        semi_rapid: stations_needed(phi.phi_sem, semi),
        rapid: stations_needed(phi.phi_rap, rapid),
        full_normal: stations_needed(phi.public(), normal),
    }
}

pub fn build_station_report(
    segments: &[ZoneSegment],
    specs: &[ChargerSpec],
    scenario: ScenarioConfig,
    zones: &[Zone],
) -> Result<StationReport, StationError> {
    scenario.validate()?;
    if segments.len() != zones.len() {
        return Err(StationError::DimensionMismatch(format!(
            "{} segmented zones, {} zones",
            segments.len(),
            zones.len()
        )));
    }
    let normal = find_spec(specs, Technology::Normal)?;
    let semi = find_spec(specs, Technology::SemiRapid)?;
    let rapid = find_spec(specs, Technology::Rapid)?;
    let keep = 1.0 - scenario.traffic_reduction;
    let mut citywide = StationCounts::default();
    let mut out = Vec::with_capacity(zones.len());
    for (seg, zone) in segments.iter().zip(zones) {
        if seg.zone_id != zone.id {
            return Err(StationError::DimensionMismatch(format!(
                "segment '{}' paired with zone '{}'",
                seg.zone_id, zone.id
            )));
        }
        let area_km2 = zone.area_km2().map_err(|source| StationError::Geometry {
            zone: zone.id.clone(),
            source,
        })?;
        let counts = zone_counts(seg, &normal, &semi, &rapid, keep);
        citywide.accumulate(&counts);
        let shown = if scenario.full_normal {
            counts.full_normal
        } else {
            counts.mixed_total()
        };
        out.push(ZoneStations {
            zone_id: zone.id.clone(),
            area_km2,
            counts,
            stations_per_km2: if area_km2 > 0.0 { shown as f64 / area_km2 } else { 0.0 },
            private_kwh: seg.phi.phi_par * keep,
        });
    }
    Ok(StationReport {
        scenario,
        zones: out,
        citywide,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{equator_degrees, GeoPolygon};
    use crate::segmentation::{PoiAreaTable, SegmentedDemand};
    use proptest::prelude::*;

    fn specs() -> Vec<ChargerSpec> {
        ChargerSpec::defaults()
    }

    fn spec(t: Technology) -> ChargerSpec {
        find_spec(&specs(), t).unwrap()
    }

    fn zone(id: &str) -> Zone {
        let d = equator_degrees(1.0);
        Zone {
            id: id.into(),
            name: id.into(),
            polygon: GeoPolygon::rect(0.0, 0.0, d, d).unwrap(),
            pop_density_tau: 0.0,
            household_size_chi: 1.0,
            par_count_sigma: 0.0,
        }
    }

    fn seg(id: &str, phi: SegmentedDemand) -> ZoneSegment {
        ZoneSegment {
            zone_id: id.into(),
            total_kwh: phi.total(),
            alpha: 1.0,
            gamma: 0.0,
            areas: PoiAreaTable::default(),
            phi,
        }
    }

    #[test]
    fn capacities() {
        assert_eq!(daily_capacity_kwh(&spec(Technology::Normal)), 67.2);
        assert_eq!(daily_capacity_kwh(&spec(Technology::SemiRapid)), 140.8);
        assert_eq!(daily_capacity_kwh(&spec(Technology::Rapid)), 480.0);
    }

    #[test]
    fn ceiling_boundaries() {
        let n = spec(Technology::Normal);
        assert_eq!(stations_needed(0.0, &n), 0);
        assert_eq!(stations_needed(67.2, &n), 1);
        assert_eq!(stations_needed(67.3, &n), 2);
        assert_eq!(stations_needed(3.0 * 67.2, &n), 3);
        assert_eq!(stations_needed(1e-6, &n), 1);
    }

    #[test]
    fn report_examples() {
        let z = [zone("A")];
        let s = [seg("A", SegmentedDemand { phi_nres: 134.4, ..Default::default() })];
        let r = build_station_report(&s, &specs(), ScenarioConfig::default(), &z).unwrap();
        assert_eq!(r.citywide.normal_resi, 2);
        assert_eq!(r.citywide.full_normal, 2);
        let reduced = ScenarioConfig { traffic_reduction: 0.05, full_normal: false };
        let r = build_station_report(&s, &specs(), reduced, &z).unwrap();
        assert_eq!(r.citywide.normal_resi, 2);
        let empty = [seg("A", SegmentedDemand::default())];
        let r = build_station_report(&empty, &specs(), ScenarioConfig::default(), &z).unwrap();
        assert_eq!(r.citywide, StationCounts::default());
    }

    #[test]
    fn private_parking_builds_nothing() {
        let z = [zone("A")];
        let s = [seg("A", SegmentedDemand { phi_par: 1e4, ..Default::default() })];
        let r = build_station_report(&s, &specs(), ScenarioConfig::default(), &z).unwrap();
        assert_eq!(r.citywide, StationCounts::default());
        assert_eq!(r.zones[0].private_kwh, 1e4);
    }

    #[test]
    fn missing_spec() {
        let only_normal = vec![spec(Technology::Normal)];
        let err = build_station_report(&[], &only_normal, ScenarioConfig::default(), &[]).unwrap_err();
        assert_eq!(err, StationError::MissingSpec(Technology::SemiRapid));
        let bad = ScenarioConfig { traffic_reduction: 1.0, full_normal: false };
        assert!(build_station_report(&[], &specs(), bad, &[]).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let text = serde_json::to_string(&specs()).unwrap();
        assert_eq!(ChargerSpec::parse_list(&text).unwrap(), specs());
        assert!(ChargerSpec::parse_list(r#"[{"technology":"Normal","power_kw":7,"delivery":0.8,"occupancy":0,"hours":24}]"#).is_err());
    }

    fn phi() -> impl Strategy<Value = SegmentedDemand> {
        (0.0f64..5e3, 0.0f64..5e3, 0.0f64..5e3, 0.0f64..5e3).prop_map(|(a, b, c, d)| SegmentedDemand {
            phi_nres: a,
            phi_noff: b,
            phi_sem: c,
            phi_rap: d,
            phi_par: 0.0,
        })
    }

    proptest! {
        #[test]
        fn monotone(p in phi(), which in 0usize..4, bump in 0.0f64..1e3) {
            let (n, s, r) = (spec(Technology::Normal), spec(Technology::SemiRapid), spec(Technology::Rapid));
            let mut q = p;
            match which {
                0 => q.phi_nres += bump,
                1 => q.phi_noff += bump,
                2 => q.phi_sem += bump,
                _ => q.phi_rap += bump,
            }
            let a = zone_counts(&seg("A", p), &n, &s, &r, 1.0);
            let b = zone_counts(&seg("A", q), &n, &s, &r, 1.0);
            prop_assert!(b.normal_resi >= a.normal_resi && b.normal_work >= a.normal_work);
            prop_assert!(b.semi_rapid >= a.semi_rapid && b.rapid >= a.rapid && b.full_normal >= a.full_normal);
        }

        /// Before ceilings, faster chargers need strictly fewer points than
        /// serving everything with normal ones.
        #[test]
        fn mixed_fractional_count_below_full_normal(p in phi()) {
            let (n, s, r) = (spec(Technology::Normal), spec(Technology::SemiRapid), spec(Technology::Rapid));
            let frac = |d: f64, c: &ChargerSpec| d / daily_capacity_kwh(c);
            let mixed = frac(p.phi_nres, &n) + frac(p.phi_noff, &n) + frac(p.phi_sem, &s) + frac(p.phi_rap, &r);
            prop_assert!(mixed <= frac(p.public(), &n) * (1.0 + 1e-12));
            let c = zone_counts(&seg("A", p), &n, &s, &r, 1.0);
            // each of the four ceilings adds at most one point
            prop_assert!(c.mixed_total() <= c.full_normal + 3);
        }
    }
}
