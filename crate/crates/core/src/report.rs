//! End-to-end pipeline driven by a JSON config, and the report files it
//! writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::corrections::{
    apply_driving_ratio, compute_ppr, fit_driving_ratio, AbscissaRule, CorrectionError, DrivingRatioModel,
    ModeShareTable, PprEntry, PprFormula, PprWarning,
};
use crate::demand::{aggregate_zone_demand, normalize_by_area, trips_to_energy, AttributionPolicy, EnergyConfig, ZoneDemand};
use crate::distances::{
    build_distance_matrix, csv_field, fill_diagonal, zone_mc_seed, DistanceMatrix, FixtureBackend, MatrixOptions,
    OfflineBackend, OfflineRoutingConfig, RemoteBackend, RemoteRoutingConfig, RoutingBackend, RoutingError,
    TrafficContext, Weekday,
};
use crate::geometry::{McConfig, DEFAULT_SPLIT_TOLERANCE_KM};
use crate::ingest::{
    aggregate_trips, assign_tacs_to_zones, load_tacs_cells, load_trip_table, load_zones, parse_overpass,
    polygon_to_geojson, AggregationDiagnostics, HighwayRecord, OverpassDiagnostics, PoiRecord, Taxonomy, Zone,
};
use crate::segmentation::{
    poi_area_tables, residential_shares, segment_zones, EmptyPoiFallback, PoiAreaTable, ResidentialShare,
    SegmentedDemand, ZoneSegment,
};
use crate::stations::{build_station_report, ChargerSpec, ScenarioConfig, StationReport};

pub const CONFIG_SCHEMA: &str = include_str!("../data/pipeline_config.schema.json");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: routing backend failed: {message}")]
    Backend { stage: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 routing backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } | PipelineError::Io { .. } => 3,
            PipelineError::Backend { .. } => 4,
        }
    }
}

fn data(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Data {
        stage,
        message: e.to_string(),
    }
}

fn routing_error(stage: &'static str, e: RoutingError) -> PipelineError {
    match e {
        RoutingError::BackendFailure(_) => PipelineError::Backend {
            stage,
            message: e.to_string(),
        },
        RoutingError::Config(m) => PipelineError::Config(m),
        other => data(stage)(&other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Offline,
    Fixture,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offline" => Ok(Self::Offline),
            "fixture" => Ok(Self::Fixture),
            "remote" => Ok(Self::Remote),
            _ => Err(format!("unknown routing backend '{s}' (offline|fixture|remote)")),
        }
    }
}

/// Fixed driving-ratio parameters, used instead of fitting the mode-share
/// table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrParams {
    pub a: f64,
    pub b: f64,
}

fn d_detour() -> f64 {
    crate::distances::DEFAULT_DETOUR_INDEX
}
fn d_hour() -> u8 {
    7
}
fn d_concurrency() -> usize {
    MatrixOptions::default().max_concurrent_requests
}
fn d_retries() -> u32 {
    MatrixOptions::default().max_retries
}
fn d_backoff() -> u64 {
    MatrixOptions::default().backoff_base_ms
}
fn d_samples() -> u64 {
    McConfig::default().n_samples
}
fn d_seed() -> u64 {
    McConfig::default().seed
}
fn d_kwh() -> f64 {
    crate::demand::DEFAULT_KWH_PER_KM
}
fn d_split() -> f64 {
    DEFAULT_SPLIT_TOLERANCE_KM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub zones: PathBuf,
    pub tacs: PathBuf,
    pub trips: PathBuf,
    pub overpass: PathBuf,
    #[serde(default)]
    pub routing_fixture: Option<PathBuf>,
    #[serde(default)]
    pub remote_routing: Option<RemoteRoutingConfig>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub mode_share: Option<PathBuf>,
    #[serde(default)]
    pub charger_specs: Option<PathBuf>,

    #[serde(default)]
    pub routing_backend: BackendKind,
    #[serde(default = "d_detour")]
    pub detour_index: f64,
    #[serde(default)]
    pub traffic_day: Weekday,
    #[serde(default = "d_hour")]
    pub traffic_hour: u8,
    #[serde(default = "d_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default = "d_retries")]
    pub max_retries: u32,
    #[serde(default = "d_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "d_samples")]
    pub mc_samples: u64,
    #[serde(default = "d_seed")]
    pub mc_seed: u64,

    #[serde(default = "d_kwh")]
    pub kwh_per_km: f64,
    #[serde(default)]
    pub attribution: AttributionPolicy,
    #[serde(default)]
    pub ppr_cap: Option<f64>,
    #[serde(default)]
    pub ppr_formula: PprFormula,
    #[serde(default)]
    pub dr_abscissa: AbscissaRule,
    #[serde(default)]
    pub dr_params: Option<DrParams>,

    #[serde(default = "d_split")]
    pub split_tolerance_km: f64,
    #[serde(default)]
    pub empty_poi_fallback: EmptyPoiFallback,

    #[serde(default)]
    pub traffic_reduction: f64,
    #[serde(default)]
    pub full_normal: bool,

    /// Also write distance_matrix.csv, zone_demand.csv and
    /// segmented_demand.csv.
    #[serde(default = "d_true")]
    pub write_intermediates: bool,
}

fn d_true() -> bool {
    true
}

impl PipelineConfig {
    /// Config with default flags for the given input files.
    pub fn with_inputs(zones: PathBuf, tacs: PathBuf, trips: PathBuf, overpass: PathBuf) -> Self {
        serde_json::from_value(json!({
            "zones": zones, "tacs": tacs, "trips": trips, "overpass": overpass,
        }))
        .expect("defaults deserialize")
    }

    /// Parses a config document. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.zones);
        fix(&mut cfg.tacs);
        fix(&mut cfg.trips);
        fix(&mut cfg.overpass);
        for p in [&mut cfg.routing_fixture, &mut cfg.taxonomy, &mut cfg.mode_share, &mut cfg.charger_specs]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks flag ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let mut files = vec![("zones", &self.zones), ("tacs", &self.tacs), ("trips", &self.trips), ("overpass", &self.overpass)];
        for (name, p) in [
            ("routing_fixture", &self.routing_fixture),
            ("taxonomy", &self.taxonomy),
            ("mode_share", &self.mode_share),
            ("charger_specs", &self.charger_specs),
        ] {
            if let Some(p) = p {
                files.push((name, p));
            }
        }
        for (name, p) in files {
            if !p.is_file() {
                return bad(format!("{name} file {} does not exist", p.display()));
            }
        }
        match self.routing_backend {
            BackendKind::Fixture if self.routing_fixture.is_none() => {
                return bad("fixture backend needs routing_fixture".into())
            }
            BackendKind::Remote if self.remote_routing.is_none() => {
                return bad("remote backend needs remote_routing".into())
            }
            _ => {}
        }
        if !(self.detour_index.is_finite() && self.detour_index >= 1.0) {
            return bad(format!("detour_index {} must be >= 1", self.detour_index));
        }
        if self.traffic_hour > 23 {
            return bad(format!("traffic_hour {} not in 0..=23", self.traffic_hour));
        }
        if self.max_concurrent_requests == 0 {
            return bad("max_concurrent_requests must be >= 1".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be >= 1".into());
        }
        EnergyConfig::new(self.kwh_per_km).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(c) = self.ppr_cap {
            if !(0.0..=1.0).contains(&c) {
                return bad(format!("ppr_cap {c} not in [0, 1]"));
            }
        }
        if let Some(p) = self.dr_params {
            DrivingRatioModel::new(p.a, p.b).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if !(self.split_tolerance_km > 0.0 && self.split_tolerance_km.is_finite()) {
            return bad(format!("split_tolerance_km {} must be > 0", self.split_tolerance_km));
        }
        self.scenario().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            traffic_reduction: self.traffic_reduction,
            full_normal: self.full_normal,
        }
    }

    pub fn mc(&self) -> McConfig {
        McConfig {
            n_samples: self.mc_samples,
            seed: self.mc_seed,
        }
    }

    pub fn specs(&self) -> Result<Vec<ChargerSpec>, PipelineError> {
        match &self.charger_specs {
            Some(p) => ChargerSpec::load_list(p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(ChargerSpec::defaults()),
        }
    }

    pub fn taxonomy(&self) -> Result<Taxonomy, PipelineError> {
        match &self.taxonomy {
            Some(p) => Taxonomy::load(p).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(Taxonomy::default()),
        }
    }
}

/// Warning list that keeps only the first occurrence of each message.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Warnings(Vec<String>);

impl Warnings {
    pub fn push(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.0.contains(&w) {
            self.0.push(w);
        }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivingRatioRecord {
    pub a_param: f64,
    pub b_param: f64,
    pub sse: Option<f64>,
    /// "fit" or "config".
    pub source: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageDiagnostics {
    pub tacs_cells: usize,
    pub tacs_cells_unassigned: Vec<String>,
    pub aggregation: AggregationDiagnostics,
    pub overpass: OverpassDiagnostics,
    pub driving_ratio: Option<DrivingRatioRecord>,
    pub ppr: Vec<PprEntry>,
    pub residential_share: Vec<ResidentialShare>,
    pub mc_seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: PipelineConfig,
    pub charger_specs: Vec<ChargerSpec>,
    pub diagnostics: StageDiagnostics,
    pub warnings: Warnings,
    pub timing_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub zones: Vec<Zone>,
    pub distances: DistanceMatrix,
    pub demand: ZoneDemand,
    pub demand_mwh_per_km2: Vec<f64>,
    pub segments: Vec<ZoneSegment>,
    pub stations: StationReport,
    pub manifest: RunManifest,
}

pub struct Inputs {
    pub zones: Vec<Zone>,
    pub pois: Vec<PoiRecord>,
    pub highways: Vec<HighwayRecord>,
}

/// Loads zones and the Overpass export.
pub fn load_geography(cfg: &PipelineConfig, diag: &mut StageDiagnostics) -> Result<Inputs, PipelineError> {
    let zones = load_zones(&cfg.zones).map_err(|e| data("ingest")(&e))?;
    if zones.is_empty() {
        return Err(data("ingest")(&"zones file has no features"));
    }
    let (pois, highways, od) = parse_overpass(&cfg.overpass, &cfg.taxonomy()?).map_err(|e| data("ingest")(&e))?;
    diag.overpass = od;
    Ok(Inputs { zones, pois, highways })
}

fn backend(cfg: &PipelineConfig) -> Result<Box<dyn RoutingBackend>, PipelineError> {
    let offline = OfflineRoutingConfig::new(cfg.detour_index).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(match cfg.routing_backend {
        BackendKind::Offline => Box::new(OfflineBackend { cfg: offline }),
        BackendKind::Fixture => {
            let p = cfg.routing_fixture.as_ref().ok_or_else(|| PipelineError::Config("routing_fixture not set".into()))?;
            Box::new(FixtureBackend::load(p).map_err(|e| routing_error("distances", e))?)
        }
        BackendKind::Remote => {
            let r = cfg.remote_routing.clone().ok_or_else(|| PipelineError::Config("remote_routing not set".into()))?;
            Box::new(RemoteBackend::new(r).map_err(|e| routing_error("distances", e))?)
        }
    })
}

/// Full distance matrix, inter-zone routes plus Monte Carlo diagonal.
pub fn compute_distances(
    cfg: &PipelineConfig,
    zones: &[Zone],
    diag: &mut StageDiagnostics,
) -> Result<DistanceMatrix, PipelineError> {
    let ctx = TrafficContext::new(cfg.traffic_day, cfg.traffic_hour).map_err(|e| PipelineError::Config(e.to_string()))?;
    let opts = MatrixOptions {
        max_concurrent_requests: cfg.max_concurrent_requests,
        max_retries: cfg.max_retries,
        backoff_base_ms: cfg.backoff_base_ms,
    };
    let b = backend(cfg)?;
    let m = build_distance_matrix(zones, b.as_ref(), &ctx, &opts).map_err(|e| routing_error("distances", e))?;
    let offline = OfflineRoutingConfig::new(cfg.detour_index).map_err(|e| PipelineError::Config(e.to_string()))?;
    diag.mc_seeds = zones.iter().map(|z| (z.id.clone(), zone_mc_seed(cfg.mc_seed, &z.id))).collect();
    fill_diagonal(&m, zones, &cfg.mc(), &offline).map_err(|e| routing_error("distances", e))
}

pub fn driving_ratio_model(cfg: &PipelineConfig) -> Result<(DrivingRatioModel, DrivingRatioRecord), PipelineError> {
    let corr = |e: CorrectionError| data("corrections")(&e);
    if let Some(p) = cfg.dr_params {
        let m = DrivingRatioModel::new(p.a, p.b).map_err(|e| PipelineError::Config(e.to_string()))?;
        return Ok((
            m,
            DrivingRatioRecord {
                a_param: m.a_param,
                b_param: m.b_param,
                sse: None,
                source: "config",
            },
        ));
    }
    let table = match &cfg.mode_share {
        Some(p) => ModeShareTable::load(p).map_err(corr)?,
        None => ModeShareTable::brussels(),
    };
    let m = fit_driving_ratio(&table, cfg.dr_abscissa).map_err(corr)?;
    Ok((
        m,
        DrivingRatioRecord {
            a_param: m.a_param,
            b_param: m.b_param,
            sse: Some(m.sse),
            source: "fit",
        },
    ))
}

/// Private parking ratio per zone; warnings go to `warnings`.
pub fn compute_gammas(
    cfg: &PipelineConfig,
    zones: &[Zone],
    warnings: &mut Warnings,
) -> Result<Vec<PprEntry>, PipelineError> {
    let entries = zones
        .iter()
        .map(|z| compute_ppr(z, cfg.ppr_cap, cfg.ppr_formula))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| data("corrections")(&e))?;
    for e in &entries {
        match e.warning {
            Some(PprWarning::NoHouseholds) => {
                warnings.push(format!("zone '{}': private parking present but no households, gamma = {}", e.zone_id, e.gamma))
            }
            Some(PprWarning::Clamped) => warnings.push(format!(
                "zone '{}': private parking ratio {:.6} clamped to {}",
                e.zone_id, e.raw_ppr, e.gamma
            )),
            None => {}
        }
    }
    Ok(entries)
}

/// Trips → DR-corrected energy → per-zone demand.
pub fn compute_demand(
    cfg: &PipelineConfig,
    zones: &[Zone],
    dist: &DistanceMatrix,
    diag: &mut StageDiagnostics,
    warnings: &mut Warnings,
) -> Result<ZoneDemand, PipelineError> {
    let cells = load_tacs_cells(&cfg.tacs).map_err(|e| data("ingest")(&e))?;
    let table = load_trip_table(&cfg.trips).map_err(|e| data("ingest")(&e))?;
    let mapping = assign_tacs_to_zones(&cells, zones).map_err(|e| data("ingest")(&e))?;
    diag.tacs_cells = cells.len();
    diag.tacs_cells_unassigned = mapping
        .iter()
        .filter(|(_, z)| z.is_none())
        .map(|(c, _)| c.clone())
        .collect();
    for c in &diag.tacs_cells_unassigned {
        warnings.push(format!("TACS cell '{c}' overlaps no zone; its trips are dropped"));
    }
    let (trips, agg) = aggregate_trips(&table, &mapping, zones).map_err(|e| data("ingest")(&e))?;
    diag.aggregation = agg;

    let (model, record) = driving_ratio_model(cfg)?;
    diag.driving_ratio = Some(record);
    let car = apply_driving_ratio(&trips, dist, &model).map_err(|e| data("corrections")(&e))?;
    let energy_cfg = EnergyConfig::new(cfg.kwh_per_km).map_err(|e| PipelineError::Config(e.to_string()))?;
    let energy = trips_to_energy(&car, dist, &energy_cfg).map_err(|e| data("demand")(&e))?;
    Ok(aggregate_zone_demand(&energy, cfg.attribution))
}

/// α, POI areas and the five-way split for every zone.
pub fn compute_segments(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    demand: &ZoneDemand,
    gammas: &[f64],
    diag: &mut StageDiagnostics,
    warnings: &mut Warnings,
) -> Result<Vec<ZoneSegment>, PipelineError> {
    let ids: Vec<&String> = inputs.zones.iter().map(|z| &z.id).collect();
    if demand.zone_ids.iter().collect::<Vec<_>>() != ids {
        return Err(data("segmentation")(&"zone demand does not list the configured zones in order"));
    }
    let shares = residential_shares(&inputs.zones, &inputs.highways, cfg.split_tolerance_km)
        .map_err(|e| data("segmentation")(&e))?;
    let areas = poi_area_tables(&inputs.zones, &inputs.pois);
    let (segments, seg_warnings) =
        segment_zones(demand, &shares, gammas, &areas, cfg.empty_poi_fallback).map_err(|e| data("segmentation")(&e))?;
    for w in seg_warnings {
        warnings.push(match w {
            crate::segmentation::SegmentationWarning::DegenerateAlpha { zone } => {
                format!("zone '{zone}': no classified roads, alpha = 1")
            }
            crate::segmentation::SegmentationWarning::EmptyPoiFallback { zone } => {
                format!("zone '{zone}': no POI area, non-residential demand assigned to normal residential")
            }
        });
    }
    diag.residential_share = shares;
    Ok(segments)
}

/// Runs every stage in order. Nothing is written to disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let specs = cfg.specs()?;
    let mut diag = StageDiagnostics::default();
    let mut warnings = Warnings::default();
    let mut timing = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut BTreeMap<String, f64>| {
        timing.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let inputs = load_geography(cfg, &mut diag)?;
    for w in &diag.overpass.warnings {
        warnings.push(w.clone());
    }
    lap("ingest", &mut timing);
    let distances = compute_distances(cfg, &inputs.zones, &mut diag)?;
    lap("distances", &mut timing);
    let ppr = compute_gammas(cfg, &inputs.zones, &mut warnings)?;
    let demand = compute_demand(cfg, &inputs.zones, &distances, &mut diag, &mut warnings)?;
    let density = normalize_by_area(&demand, &inputs.zones).map_err(|e| data("demand")(&e))?;
    lap("corrections_demand", &mut timing);
    let gammas: Vec<f64> = ppr.iter().map(|e| e.gamma).collect();
    diag.ppr = ppr;
    let segments = compute_segments(cfg, &inputs, &demand, &gammas, &mut diag, &mut warnings)?;
    lap("segmentation", &mut timing);
    let stations = build_station_report(&segments, &specs, cfg.scenario(), &inputs.zones).map_err(|e| data("stations")(&e))?;
    lap("stations", &mut timing);

    Ok(PipelineOutput {
        zones: inputs.zones,
        distances,
        demand,
        demand_mwh_per_km2: density,
        segments,
        stations,
        manifest: RunManifest {
            software: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            charger_specs: specs,
            diagnostics: diag,
            warnings,
            timing_ms: timing,
        },
    })
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn choropleth_geojson(out: &PipelineOutput) -> Value {
    let feats: Vec<Value> = out
        .zones
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let seg = &out.segments[k];
            let st = &out.stations.zones[k];
            let mut p = Map::new();
            let mut num = |key: &str, v: f64| {
                p.insert(key.into(), json!(v));
            };
            num("area_km2", st.area_km2);
            num("demand_kwh_day", out.demand.total(k));
            num("demand_mwh_per_km2", out.demand_mwh_per_km2[k]);
            num("phi_nres", seg.phi.phi_nres);
            num("phi_noff", seg.phi.phi_noff);
            num("phi_sem", seg.phi.phi_sem);
            num("phi_rap", seg.phi.phi_rap);
            num("phi_par", seg.phi.phi_par);
            num("alpha", seg.alpha);
            num("gamma", seg.gamma);
            num("stations_per_km2", st.stations_per_km2);
            p.insert("id".into(), json!(z.id));
            p.insert("name".into(), json!(z.name));
            p.insert("stations_normal_resi".into(), json!(st.counts.normal_resi));
            p.insert("stations_normal_work".into(), json!(st.counts.normal_work));
            p.insert("stations_semi_rapid".into(), json!(st.counts.semi_rapid));
            p.insert("stations_rapid".into(), json!(st.counts.rapid));
            p.insert("stations_full_normal".into(), json!(st.counts.full_normal));
            json!({"type": "Feature", "properties": p, "geometry": polygon_to_geojson(&z.polygon)})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": feats})
}

/// Citywide station table: technology, points, daily demand served.
pub fn stations_summary_csv(rep: &StationReport, segments: &[ZoneSegment]) -> String {
    let keep = 1.0 - rep.scenario.traffic_reduction;
    let sum = |f: fn(&SegmentedDemand) -> f64| segments.iter().map(|s| f(&s.phi)).sum::<f64>() * keep;
    let c = &rep.citywide;
    let rows = [
        ("Normal (Resi)", c.normal_resi, sum(|p| p.phi_nres)),
        ("Normal (Work)", c.normal_work, sum(|p| p.phi_noff)),
        ("Semi-Rapid", c.semi_rapid, sum(|p| p.phi_sem)),
        ("Rapid", c.rapid, sum(|p| p.phi_rap)),
        ("Full Normal", c.full_normal, sum(|p| p.public())),
    ];
    let mut s = String::from("technology,stations,demand_kwh_day\n");
    for (name, n, d) in rows {
        s.push_str(&format!("{name},{n},{}\n", f6(d)));
    }
    s
}

/// Per-zone percentage split of total demand. Zones with no demand get all
/// zeros.
pub fn segmentation_shares_csv(segments: &[ZoneSegment]) -> String {
    let mut s = String::from("zone_id,normal_resi_pct,normal_work_pct,semi_rapid_pct,rapid_pct,private_pct\n");
    for seg in segments {
        let t = seg.phi.total();
        let pct = |v: f64| if t > 0.0 { 100.0 * v / t } else { 0.0 };
        let p = &seg.phi;
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&seg.zone_id),
            f6(pct(p.phi_nres)),
            f6(pct(p.phi_noff)),
            f6(pct(p.phi_sem)),
            f6(pct(p.phi_rap)),
            f6(pct(p.phi_par))
        ));
    }
    s
}

const SEGMENT_HEADER: &str =
    "zone_id,total_kwh,alpha,gamma,a_office,a_semi,a_fast,phi_nres,phi_noff,phi_sem,phi_rap,phi_par\n";

/// Segmented demand per zone, readable by [`segments_from_csv`].
pub fn segments_to_csv(segments: &[ZoneSegment]) -> String {
    let mut s = String::from(SEGMENT_HEADER);
    for g in segments {
        let vals = [
            g.total_kwh,
            g.alpha,
            g.gamma,
            g.areas.a_office,
            g.areas.a_semi,
            g.areas.a_fast,
            g.phi.phi_nres,
            g.phi.phi_noff,
            g.phi.phi_sem,
            g.phi.phi_rap,
            g.phi.phi_par,
        ];
        s.push_str(&csv_field(&g.zone_id));
        for v in vals {
            s.push(',');
            s.push_str(&f6(v));
        }
        s.push('\n');
    }
    s
}

pub fn segments_from_csv(text: &str) -> Result<Vec<ZoneSegment>, PipelineError> {
    #[derive(Deserialize)]
    struct Row {
        zone_id: String,
        total_kwh: f64,
        alpha: f64,
        gamma: f64,
        a_office: f64,
        a_semi: f64,
        a_fast: f64,
        phi_nres: f64,
        phi_noff: f64,
        phi_sem: f64,
        phi_rap: f64,
        phi_par: f64,
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(|e| data("stations")(&e))?;
            Ok(ZoneSegment {
                zone_id: r.zone_id,
                total_kwh: r.total_kwh,
                alpha: r.alpha,
                gamma: r.gamma,
                areas: PoiAreaTable {
                    a_office: r.a_office,
                    a_semi: r.a_semi,
                    a_fast: r.a_fast,
                    sum_a: r.a_office + r.a_semi + r.a_fast,
                },
                phi: SegmentedDemand {
                    phi_nres: r.phi_nres,
                    phi_noff: r.phi_noff,
                    phi_sem: r.phi_sem,
                    phi_rap: r.phi_rap,
                    phi_par: r.phi_par,
                },
            })
        })
        .collect()
}

/// Per-zone station counts.
pub fn zone_stations_csv(rep: &StationReport) -> String {
    let mut s = String::from("zone_id,area_km2,normal_resi,normal_work,semi_rapid,rapid,full_normal,stations_per_km2,private_kwh\n");
    for z in &rep.zones {
        let c = &z.counts;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(&z.zone_id),
            f6(z.area_km2),
            c.normal_resi,
            c.normal_work,
            c.semi_rapid,
            c.rapid,
            c.full_normal,
            f6(z.stations_per_km2),
            f6(z.private_kwh)
        ));
    }
    s
}

/// Writes a set of files into `out_dir`. Every file is first written to a
/// staging directory inside `out_dir`, and renamed into place only after all
/// of them were written successfully.
pub fn write_files_atomically(out_dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let staging = tempfile::Builder::new()
        .prefix(".chargecast-")
        .tempdir_in(out_dir)
        .map_err(io(out_dir))?;
    for (name, body) in files {
        let p = staging.path().join(name);
        let mut f = fs::File::create(&p).map_err(io(&p))?;
        f.write_all(body.as_bytes()).map_err(io(&p))?;
        f.sync_all().map_err(io(&p))?;
    }
    let mut written = Vec::new();
    for (name, _) in files {
        let dest = out_dir.join(name);
        fs::rename(staging.path().join(name), &dest).map_err(io(&dest))?;
        written.push(dest);
    }
    Ok(written)
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn emit_outputs(out: &PipelineOutput, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = vec![
        ("zones_choropleth.geojson", pretty(&choropleth_geojson(out))),
        (
            "stations_summary.csv",
            stations_summary_csv(&out.stations, &out.segments),
        ),
        ("segmentation_shares.csv", segmentation_shares_csv(&out.segments)),
        ("zone_stations.csv", zone_stations_csv(&out.stations)),
        ("manifest.json", pretty(&out.manifest)),
    ];
    if out.manifest.config.write_intermediates {
        files.push(("distance_matrix.csv", out.distances.to_csv()));
        files.push(("zone_demand.csv", out.demand.to_csv()));
        files.push(("segmented_demand.csv", segments_to_csv(&out.segments)));
    }
    write_files_atomically(out_dir, &files)
}
