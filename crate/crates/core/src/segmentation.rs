//! Residential share from road lengths, POI areas per charger class, and the
//! five-way split of zone demand into charging segments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::ZoneDemand;
use crate::geometry::{point_in_polygon, split_polyline_by_zone, GeoPolygon, GeometryError};
use crate::ingest::{ChargerClass, HighwayClass, HighwayRecord, PoiRecord, Zone};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("{name} = {value} outside [0, 1]")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error("negative or non-finite demand {0}")]
    InvalidDemand(f64),
    #[error("no POI area to distribute non-residential demand {0}")]
    EmptyPoiAreas(f64),
    #[error("zone '{zone}': {source}")]
    Zone { zone: String, source: Box<SegmentationError> },
    #[error("zone '{zone}': {source}")]
    Geometry { zone: String, source: GeometryError },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentationWarning {
    /// No classified road inside the zone; α set to 1.
    DegenerateAlpha { zone: String },
    /// POI areas empty; non-residential demand moved to Φ_Nres.
    EmptyPoiFallback { zone: String },
}

/// What to do with non-residential demand when a zone has no POI area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPoiFallback {
    #[default]
    Nres,
    Error,
}

impl std::str::FromStr for EmptyPoiFallback {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nres" => Ok(Self::Nres),
            "error" => Ok(Self::Error),
            _ => Err(format!("unknown empty-poi fallback '{s}' (nres|error)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidentialShare {
    pub zone_id: String,
    pub alpha: f64,
    pub residential_km: f64,
    pub classified_km: f64,
    pub degenerate: bool,
}

impl ResidentialShare {
    fn from_lengths(zone_id: &str, residential_km: f64, major_km: f64) -> Self {
        let classified_km = residential_km + major_km;
        let degenerate = classified_km <= 0.0;
        let alpha = if degenerate {
            1.0
        } else {
            (residential_km / classified_km).clamp(0.0, 1.0)
        };
        Self {
            zone_id: zone_id.to_string(),
            alpha,
            residential_km,
            classified_km,
            degenerate,
        }
    }

    pub fn warning(&self) -> Option<SegmentationWarning> {
        self.degenerate.then(|| SegmentationWarning::DegenerateAlpha {
            zone: self.zone_id.clone(),
        })
    }
}

/// (residential km, major km) of one highway per zone index.
fn highway_lengths(
    hw: &HighwayRecord,
    polygons: &[GeoPolygon],
    epsilon_km: f64,
) -> Result<Vec<(usize, f64, f64)>, GeometryError> {
    if hw.cls == HighwayClass::Ignored {
        return Ok(Vec::new());
    }
    let pieces = split_polyline_by_zone(&hw.polyline, polygons, epsilon_km)?;
    Ok(pieces
        .into_iter()
        .filter_map(|p| {
            let z = p.zone?;
            let len = p.line.length_km();
            Some(match hw.cls {
                HighwayClass::Residential => (z, len, 0.0),
                _ => (z, 0.0, len),
            })
        })
        .collect())
}

pub fn residential_share(
    zone: &Zone,
    highways: &[HighwayRecord],
    epsilon_km: f64,
) -> Result<ResidentialShare, SegmentationError> {
    let mut shares = residential_shares(std::slice::from_ref(zone), highways, epsilon_km)?;
    Ok(shares.remove(0))
}

/// Residential share for every zone, splitting each highway once against the
/// whole tessellation.
pub fn residential_shares(
    zones: &[Zone],
    highways: &[HighwayRecord],
    epsilon_km: f64,
) -> Result<Vec<ResidentialShare>, SegmentationError> {
    let polygons: Vec<GeoPolygon> = zones.iter().map(|z| z.polygon.clone()).collect();
    let per_highway: Vec<_> = highways
        .par_iter()
        .map(|hw| {
            highway_lengths(hw, &polygons, epsilon_km).map_err(|source| SegmentationError::Geometry {
                zone: format!("highway {}", hw.osm_id),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut res = vec![0.0; zones.len()];
    let mut major = vec![0.0; zones.len()];
    for pieces in &per_highway {
        for &(z, r, m) in pieces {
            res[z] += r;
            major[z] += m;
        }
    }
    Ok(zones
        .iter()
        .enumerate()
        .map(|(k, z)| ResidentialShare::from_lengths(&z.id, res[k], major[k]))
        .collect())
}

/// Summed POI footprint per charger class, km².
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PoiAreaTable {
    pub a_office: f64,
    pub a_semi: f64,
    pub a_fast: f64,
    pub sum_a: f64,
}

impl PoiAreaTable {
    pub fn add(&mut self, poi: &PoiRecord) {
        match poi.charger_class {
            ChargerClass::NormalWork => self.a_office += poi.area_km2,
            ChargerClass::SemiRapid => self.a_semi += poi.area_km2,
            ChargerClass::Fast => self.a_fast += poi.area_km2,
            ChargerClass::Excluded | ChargerClass::Ignored => return,
        }
        self.sum_a = self.a_office + self.a_semi + self.a_fast;
    }
}

impl std::ops::Add for PoiAreaTable {
    type Output = PoiAreaTable;
    fn add(self, o: Self) -> Self {
        let (a_office, a_semi, a_fast) = (self.a_office + o.a_office, self.a_semi + o.a_semi, self.a_fast + o.a_fast);
        PoiAreaTable {
            a_office,
            a_semi,
            a_fast,
            sum_a: a_office + a_semi + a_fast,
        }
    }
}

pub fn poi_area_table(zone: &Zone, pois: &[PoiRecord]) -> PoiAreaTable {
    let mut t = PoiAreaTable::default();
    for p in pois {
        if point_in_polygon(p.representative_point(), &zone.polygon) {
            t.add(p);
        }
    }
    t
}

/// POI area tables for all zones. A POI whose representative point lies on a
/// shared boundary goes to the first zone in list order.
pub fn poi_area_tables(zones: &[Zone], pois: &[PoiRecord]) -> Vec<PoiAreaTable> {
    let owner: Vec<Option<usize>> = pois
        .par_iter()
        .map(|p| {
            let pt = p.representative_point();
            zones.iter().position(|z| point_in_polygon(pt, &z.polygon))
        })
        .collect();
    let mut tables = vec![PoiAreaTable::default(); zones.len()];
    for (p, z) in pois.iter().zip(owner) {
        if let Some(z) = z {
            tables[z].add(p);
        }
    }
    tables
}

/// Daily demand per charging segment, kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentedDemand {
    pub phi_nres: f64,
    pub phi_noff: f64,
    pub phi_sem: f64,
    pub phi_rap: f64,
    pub phi_par: f64,
}

impl SegmentedDemand {
    pub fn total(&self) -> f64 {
        self.phi_nres + self.phi_noff + self.phi_sem + self.phi_rap + self.phi_par
    }

    /// Demand served by public chargers (everything but private parking).
    pub fn public(&self) -> f64 {
        self.phi_nres + self.phi_noff + self.phi_sem + self.phi_rap
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            phi_nres: self.phi_nres * k,
            phi_noff: self.phi_noff * k,
            phi_sem: self.phi_sem * k,
            phi_rap: self.phi_rap * k,
            phi_par: self.phi_par * k,
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), SegmentationError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SegmentationError::InvalidFraction { name, value })
    }
}

/// Splits Δ_i + Δ_j into the five segments. The returned flag is set when
/// the empty-POI fallback was used.
pub fn segment_demand(
    delta_regular: f64,
    delta_irregular: f64,
    alpha: f64,
    gamma: f64,
    areas: &PoiAreaTable,
    fallback: EmptyPoiFallback,
) -> Result<(SegmentedDemand, bool), SegmentationError> {
    check_fraction("alpha", alpha)?;
    check_fraction("gamma", gamma)?;
    for d in [delta_regular, delta_irregular] {
        if !(d.is_finite() && d >= 0.0) {
            return Err(SegmentationError::InvalidDemand(d));
        }
    }
    let t = delta_regular + delta_irregular;
    let mut s = SegmentedDemand {
        phi_par: gamma * t,
        phi_nres: alpha * (1.0 - gamma) * t,
        ..Default::default()
    };
    let rest = (1.0 - alpha) * (1.0 - gamma) * t;
    if rest > 0.0 {
        if areas.sum_a > 0.0 {
            s.phi_noff = rest * (areas.a_office / areas.sum_a);
            s.phi_sem = rest * (areas.a_semi / areas.sum_a);
            s.phi_rap = rest * (areas.a_fast / areas.sum_a);
        } else {
            match fallback {
                EmptyPoiFallback::Nres => {
                    s.phi_nres += rest;
                    return Ok((s, true));
                }
                EmptyPoiFallback::Error => return Err(SegmentationError::EmptyPoiAreas(rest)),
            }
        }
    }
    Ok((s, false))
}

/// Full per-zone segmentation result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneSegment {
    pub zone_id: String,
    pub total_kwh: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub areas: PoiAreaTable,
    pub phi: SegmentedDemand,
}

pub fn segment_zones(
    demand: &ZoneDemand,
    shares: &[ResidentialShare],
    gammas: &[f64],
    areas: &[PoiAreaTable],
    fallback: EmptyPoiFallback,
) -> Result<(Vec<ZoneSegment>, Vec<SegmentationWarning>), SegmentationError> {
    let n = demand.len();
    if shares.len() != n || gammas.len() != n || areas.len() != n {
        return Err(SegmentationError::DimensionMismatch(format!(
            "{n} demand entries, {} shares, {} gammas, {} area tables",
            shares.len(),
            gammas.len(),
            areas.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for k in 0..n {
        let zone = &demand.zone_ids[k];
        if shares[k].zone_id != *zone {
            return Err(SegmentationError::DimensionMismatch(format!(
                "share for '{}' at position of '{zone}'",
                shares[k].zone_id
            )));
        }
        let (phi, fell_back) = segment_demand(
            demand.delta_regular[k],
            demand.delta_irregular[k],
            shares[k].alpha,
            gammas[k],
            &areas[k],
            fallback,
        )
        .map_err(|e| SegmentationError::Zone {
            zone: zone.clone(),
            source: Box::new(e),
        })?;
        warnings.extend(shares[k].warning());
        if fell_back {
            warnings.push(SegmentationWarning::EmptyPoiFallback { zone: zone.clone() });
        }
        out.push(ZoneSegment {
            zone_id: zone.clone(),
            total_kwh: demand.total(k),
            alpha: shares[k].alpha,
            gamma: gammas[k],
            areas: areas[k],
            phi,
        });
    }
    Ok((out, warnings))
}
