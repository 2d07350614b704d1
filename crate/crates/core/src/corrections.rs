//! Trip-count corrections: the distance-dependent driving ratio and the
//! per-zone private parking ratio (γ).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::DistanceMatrix;
use crate::geometry::GeometryError;
use crate::ingest::{TripMatrix, Zone};

const STEP_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 500;
const START_A: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const START_B: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Error, PartialEq)]
pub enum CorrectionError {
    #[error("need at least 2 distinct abscissae to fit, got {0}")]
    Underdetermined(usize),
    #[error("all drive shares are zero")]
    DegenerateData,
    #[error("no start point converged")]
    FitDiverged,
    #[error("fitted parameters out of range: A = {a}, B = {b}")]
    OutOfRange { a: f64, b: f64 },
    #[error("invalid mode-share table: {0}")]
    InvalidTable(String),
    #[error("invalid driving-ratio parameters: A = {a}, B = {b}")]
    InvalidModel { a: f64, b: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zone '{zone}': {source}")]
    Geometry { zone: String, source: GeometryError },
    #[error("invalid PPR cap {0}, must be in [0, 1]")]
    InvalidCap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeShareBin {
    pub lo_km: f64,
    pub hi_km: f64,
    pub drive_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeShareTable {
    pub bins: Vec<ModeShareBin>,
}

const BRUSSELS_MODE_SHARE: &str = include_str!("../data/mode_share_brussels.csv");

impl ModeShareTable {
    pub fn new(bins: Vec<ModeShareBin>) -> Result<Self, CorrectionError> {
        let bad = |m: String| Err(CorrectionError::InvalidTable(m));
        for (k, b) in bins.iter().enumerate() {
            if !(b.lo_km.is_finite() && b.hi_km.is_finite() && b.lo_km >= 0.0 && b.lo_km < b.hi_km) {
                return bad(format!("bin {k}: need 0 <= lo < hi"));
            }
            if !(0.0..=1.0).contains(&b.drive_share) {
                return bad(format!("bin {k}: share {} outside [0, 1]", b.drive_share));
            }
            if k > 0 && bins[k - 1].hi_km != b.lo_km {
                return bad(format!("bin {k} does not start where bin {} ends", k - 1));
            }
        }
        Ok(Self { bins })
    }

    pub fn from_csv(text: &str) -> Result<Self, CorrectionError> {
        let bins = csv::Reader::from_reader(text.as_bytes())
            .deserialize::<ModeShareBin>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CorrectionError::InvalidTable(e.to_string()))?;
        Self::new(bins)
    }

    pub fn load(path: &Path) -> Result<Self, CorrectionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CorrectionError::InvalidTable(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    /// Drive shares per distance band in Brussels, 0–50 km.
    pub fn brussels() -> Self {
        Self::from_csv(BRUSSELS_MODE_SHARE).expect("bundled mode-share table is valid")
    }

    pub fn abscissae(&self, rule: AbscissaRule) -> Vec<f64> {
        self.bins
            .iter()
            .map(|b| match rule {
                AbscissaRule::BinMidpoint => 0.5 * (b.lo_km + b.hi_km),
                AbscissaRule::BinLow => b.lo_km,
                AbscissaRule::BinHigh => b.hi_km,
            })
            .collect()
    }
}

/// Which distance stands for a bin when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbscissaRule {
    #[default]
    BinMidpoint,
    BinLow,
    BinHigh,
}

impl std::str::FromStr for AbscissaRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midpoint" | "bin_midpoint" => Ok(Self::BinMidpoint),
            "low" | "bin_low" => Ok(Self::BinLow),
            "high" | "bin_high" => Ok(Self::BinHigh),
            _ => Err(format!("unknown abscissa rule '{s}' (midpoint|low|high)")),
        }
    }
}

/// `share(d) = A (1 - exp(-B d))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingRatioModel {
    pub a_param: f64,
    pub b_param: f64,
    pub sse: f64,
}

impl DrivingRatioModel {
    pub fn new(a_param: f64, b_param: f64) -> Result<Self, CorrectionError> {
        if !((0.0..=1.0).contains(&a_param) && b_param > 0.0 && b_param.is_finite()) {
            return Err(CorrectionError::InvalidModel { a: a_param, b: b_param });
        }
        Ok(Self {
            a_param,
            b_param,
            sse: 0.0,
        })
    }
}

pub fn driving_ratio(model: &DrivingRatioModel, d_km: f64) -> f64 {
    model.a_param * (1.0 - (-model.b_param * d_km).exp())
}

fn sse(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (y - a * (1.0 - (-b * x).exp())).powi(2))
        .sum()
}

/// Levenberg–Marquardt from one start. Returns `(a, b, sse)` once a step
/// falls below the tolerance, `None` if the iteration budget runs out.
fn levenberg_marquardt(xs: &[f64], ys: &[f64], mut a: f64, mut b: f64) -> Option<(f64, f64, f64)> {
    let mut lambda = 1e-3;
    let mut cost = sse(xs, ys, a, b);
    for _ in 0..MAX_ITERATIONS {
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let e = (-b * x).exp();
            let da = 1.0 - e;
            let db = a * x * e;
            let r = y - a * da;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        loop {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if !(det.is_finite() && det.abs() > 0.0) {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return None;
                }
                continue;
            }
            let step_a = (mbb * ga - jab * gb) / det;
            let step_b = (maa * gb - jab * ga) / det;
            let small = step_a.abs() < STEP_TOL && step_b.abs() < STEP_TOL;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if nb > 0.0 { sse(xs, ys, na, nb) } else { f64::INFINITY };
            if new_cost <= cost {
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if small {
                    return Some((a, b, cost));
                }
                break;
            }
            if small {
                return Some((a, b, cost));
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                return Some((a, b, cost));
            }
        }
    }
    None
}

/// Least-squares fit of `y = A (1 - exp(-B x))`, multi-started over a grid
/// of initial guesses; the best converged start wins.
pub fn fit_saturating_exponential(xs: &[f64], ys: &[f64]) -> Result<DrivingRatioModel, CorrectionError> {
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if xs.len() != ys.len() || distinct.len() < 2 {
        return Err(CorrectionError::Underdetermined(distinct.len()));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Err(CorrectionError::DegenerateData);
    }
    let best = START_A
        .iter()
        .flat_map(|&a| START_B.iter().map(move |&b| (a, b)))
        .filter_map(|(a, b)| levenberg_marquardt(xs, ys, a, b))
        .filter(|(a, b, c)| a.is_finite() && *b > 0.0 && c.is_finite())
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .ok_or(CorrectionError::FitDiverged)?;
    let (a, b, cost) = best;
    if !(-1e-6..=1.0 + 1e-6).contains(&a) {
        return Err(CorrectionError::OutOfRange { a, b });
    }
    Ok(DrivingRatioModel {
        a_param: a,
        b_param: b,
        sse: cost,
    })
}

pub fn fit_driving_ratio(table: &ModeShareTable, rule: AbscissaRule) -> Result<DrivingRatioModel, CorrectionError> {
    let ys: Vec<f64> = table.bins.iter().map(|b| b.drive_share).collect();
    fit_saturating_exponential(&table.abscissae(rule), &ys)
}

/// Scales every trip count by the driving ratio at that pair's distance.
pub fn apply_driving_ratio(
    trips: &TripMatrix,
    dist: &DistanceMatrix,
    model: &DrivingRatioModel,
) -> Result<TripMatrix, CorrectionError> {
    if trips.zone_ids != dist.zone_ids {
        return Err(CorrectionError::DimensionMismatch(format!(
            "trip matrix has {} zones, distance matrix {}",
            trips.len(),
            dist.len()
        )));
    }
    let factor = dist.km.mapv(|d| driving_ratio(model, d));
    Ok(TripMatrix {
        zone_ids: trips.zone_ids.clone(),
        regular: &trips.regular * &factor,
        irregular: &trips.irregular * &factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprFormula {
    /// PARs per household, households = τ · area / χ.
    #[default]
    PerHousehold,
    /// σ / (τ · χ) as printed, with τ taken as-is.
    Literal,
}

impl std::str::FromStr for PprFormula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_household" | "households" => Ok(Self::PerHousehold),
            "literal" => Ok(Self::Literal),
            _ => Err(format!("unknown PPR formula '{s}' (per_household|literal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PprWarning {
    /// PARs but no households: γ forced to 1.
    NoHouseholds,
    /// Raw ratio above 1 (or above the cap) was clamped.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PprEntry {
    pub zone_id: String,
    pub households: f64,
    pub raw_ppr: f64,
    pub gamma: f64,
    pub cap: Option<f64>,
    pub warning: Option<PprWarning>,
}

pub fn compute_ppr(zone: &Zone, cap: Option<f64>, formula: PprFormula) -> Result<PprEntry, CorrectionError> {
    if let Some(c) = cap {
        if !(0.0..=1.0).contains(&c) {
            return Err(CorrectionError::InvalidCap(c));
        }
    }
    let households = match formula {
        PprFormula::PerHousehold => {
            let area = zone.area_km2().map_err(|source| CorrectionError::Geometry {
                zone: zone.id.clone(),
                source,
            })?;
            zone.pop_density_tau * area / zone.household_size_chi
        }
        PprFormula::Literal => zone.pop_density_tau * zone.household_size_chi,
    };
    let sigma = zone.par_count_sigma;
    let upper = cap.unwrap_or(1.0).min(1.0);
    let (raw_ppr, gamma, warning) = if households > 0.0 {
        let raw = sigma / households;
        let clamped = raw > upper;
        (raw, raw.min(upper), clamped.then_some(PprWarning::Clamped))
    } else if sigma > 0.0 {
        log::warn!("zone '{}': {sigma} PARs but no households, gamma set to 1", zone.id);
        (f64::INFINITY, upper, Some(PprWarning::NoHouseholds))
    } else {
        (0.0, 0.0, None)
    };
    Ok(PprEntry {
        zone_id: zone.id.clone(),
        households,
        raw_ppr,
        gamma,
        cap,
        warning,
    })
}
