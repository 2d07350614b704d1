//! Origin-destination driving distances between zone centroids.
//!
//! Off-diagonal entries come from a [`RoutingBackend`]; the diagonal is the
//! Monte Carlo mean intra-zone distance scaled by the detour index.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{haversine_km, mc_mean_pairwise_distance_km, GeoPoint, GeometryError, McConfig};
use crate::ingest::Zone;

/// Straight-line to driving distance multiplier.
pub const DEFAULT_DETOUR_INDEX: f64 = 1.417;

/// Environment variable holding the remote routing API key.
pub const ROUTING_KEY_ENV: &str = "CHARGECAST_ROUTING_KEY";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("no route recorded for '{0}' -> '{1}'")]
    MissingPair(String, String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("unexpected response: {0}")]
    Response(String),
    #[error("backend returned invalid distance {0}")]
    InvalidDistance(f64),
}

impl BackendError {
    fn retryable(&self) -> bool {
        matches!(self, BackendError::Request(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFailure {
    pub origin: String,
    pub destination: String,
    pub cause: BackendError,
}

impl fmt::Display for PairFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}: {}", self.origin, self.destination, self.cause)
    }
}

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("{} pair(s) failed: {}", .0.len(), .0.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
    BackendFailure(Vec<PairFailure>),
    #[error("zone '{zone}': {source}")]
    Geometry {
        zone: String,
        #[source]
        source: GeometryError,
    },
    #[error("distance matrix has {matrix} zones but {zones} were given")]
    DimensionMismatch { matrix: usize, zones: usize },
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Weekday {
    #[default]
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl std::str::FromStr for Weekday {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "monday" | "mon" => Weekday::Monday,
            "tuesday" | "tue" => Weekday::Tuesday,
            "wednesday" | "wed" => Weekday::Wednesday,
            "thursday" | "thu" => Weekday::Thursday,
            "friday" | "fri" => Weekday::Friday,
            "saturday" | "sat" => Weekday::Saturday,
            "sunday" | "sun" => Weekday::Sunday,
            _ => return Err(format!("unknown weekday '{s}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficContext {
    pub weekday: Weekday,
    pub hour: u8,
}

impl Default for TrafficContext {
    /// Monday, 7 AM.
    fn default() -> Self {
        Self {
            weekday: Weekday::Monday,
            hour: 7,
        }
    }
}

impl TrafficContext {
    pub fn new(weekday: Weekday, hour: u8) -> Result<Self, RoutingError> {
        if hour > 23 {
            return Err(RoutingError::Config(format!("traffic hour {hour} is not in 0..=23")));
        }
        Ok(Self { weekday, hour })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineRoutingConfig {
    pub detour_index: f64,
}

impl Default for OfflineRoutingConfig {
    fn default() -> Self {
        Self {
            detour_index: DEFAULT_DETOUR_INDEX,
        }
    }
}

impl OfflineRoutingConfig {
    pub fn new(detour_index: f64) -> Result<Self, RoutingError> {
        if !(detour_index.is_finite() && detour_index >= 1.0) {
            return Err(RoutingError::Config(format!(
                "detour index {detour_index} must be >= 1"
            )));
        }
        Ok(Self { detour_index })
    }
}

pub fn offline_route_km(a: GeoPoint, b: GeoPoint, cfg: &OfflineRoutingConfig) -> f64 {
    haversine_km(a, b) * cfg.detour_index
}

/// A zone as seen by a routing backend.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub id: &'a str,
    pub point: GeoPoint,
}

pub trait RoutingBackend: Sync {
    /// Driving distance in km from `from` to `to`. Must be 0 when both
    /// endpoints are the same zone.
    fn route_km(&self, from: &Endpoint, to: &Endpoint, ctx: &TrafficContext) -> Result<f64, BackendError>;

    /// Whether failed requests are worth waiting for before retrying.
    fn backoff_on_retry(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineBackend {
    pub cfg: OfflineRoutingConfig,
}

impl RoutingBackend for OfflineBackend {
    fn route_km(&self, from: &Endpoint, to: &Endpoint, _ctx: &TrafficContext) -> Result<f64, BackendError> {
        if from.id == to.id {
            return Ok(0.0);
        }
        Ok(offline_route_km(from.point, to.point, &self.cfg))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedPair {
    pub o: String,
    pub d: String,
    pub km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteFixture {
    pub pairs: Vec<RecordedPair>,
}

/// Replays distances recorded from a routing service, keyed by zone id.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    routes: HashMap<(String, String), f64>,
}

impl FixtureBackend {
    pub fn from_fixture(fixture: &RouteFixture) -> Result<Self, RoutingError> {
        let mut routes = HashMap::new();
        for p in &fixture.pairs {
            if !(p.km.is_finite() && p.km >= 0.0) {
                return Err(RoutingError::Config(format!(
                    "fixture pair {} -> {} has invalid distance {}",
                    p.o, p.d, p.km
                )));
            }
            routes.insert((p.o.clone(), p.d.clone()), p.km);
        }
        Ok(Self { routes })
    }

    pub fn load(path: &Path) -> Result<Self, RoutingError> {
        let text = std::fs::read_to_string(path).map_err(|source| RoutingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let fixture: RouteFixture = serde_json::from_str(&text)
            .map_err(|e| RoutingError::Config(format!("routing fixture {}: {e}", path.display())))?;
        Self::from_fixture(&fixture)
    }
}

impl RoutingBackend for FixtureBackend {
    fn route_km(&self, from: &Endpoint, to: &Endpoint, _ctx: &TrafficContext) -> Result<f64, BackendError> {
        if from.id == to.id {
            return Ok(0.0);
        }
        self.routes
            .get(&(from.id.to_owned(), to.id.to_owned()))
            .copied()
            .ok_or_else(|| BackendError::MissingPair(from.id.to_owned(), to.id.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRoutingConfig {
    /// GET URL with `{olat}`, `{olon}`, `{dlat}`, `{dlon}` and optional
    /// `{key}`, `{day}`, `{hour}` placeholders.
    pub url_template: String,
    /// JSON pointer to the distance in the response body.
    #[serde(default = "default_pointer")]
    pub distance_pointer: String,
    /// Multiplier turning the response value into km (0.001 for meters).
    #[serde(default = "default_scale")]
    pub distance_scale: f64,
    /// Minimum spacing between two requests, in milliseconds.
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_pointer() -> String {
    "/km".into()
}

fn default_scale() -> f64 {
    1.0
}

fn default_timeout() -> u64 {
    30_000
}

/// Generic HTTP routing client. The API key is read from
/// [`ROUTING_KEY_ENV`] at construction.
pub struct RemoteBackend {
    cfg: RemoteRoutingConfig,
    key: Option<String>,
    client: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteRoutingConfig) -> Result<Self, RoutingError> {
        let key = std::env::var(ROUTING_KEY_ENV).ok();
        Self::with_key(cfg, key)
    }

    pub fn with_key(cfg: RemoteRoutingConfig, key: Option<String>) -> Result<Self, RoutingError> {
        if cfg.url_template.contains("{key}") && key.is_none() {
            return Err(RoutingError::Config(format!(
                "URL template needs an API key but {ROUTING_KEY_ENV} is not set"
            )));
        }
        for p in ["{olat}", "{olon}", "{dlat}", "{dlon}"] {
            if !cfg.url_template.contains(p) {
                return Err(RoutingError::Config(format!("URL template is missing {p}")));
            }
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| RoutingError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            cfg,
            key,
            client,
            last_request: Mutex::new(None),
        })
    }

    pub fn url_for(&self, from: GeoPoint, to: GeoPoint, ctx: &TrafficContext) -> String {
        self.cfg
            .url_template
            .replace("{olat}", &from.lat.to_string())
            .replace("{olon}", &from.lon.to_string())
            .replace("{dlat}", &to.lat.to_string())
            .replace("{dlon}", &to.lon.to_string())
            .replace("{key}", self.key.as_deref().unwrap_or(""))
            .replace("{day}", &format!("{:?}", ctx.weekday))
            .replace("{hour}", &ctx.hour.to_string())
    }

    fn throttle(&self) {
        if self.cfg.min_interval_ms == 0 {
            return;
        }
        let gap = Duration::from_millis(self.cfg.min_interval_ms);
        let mut last = self.last_request.lock().expect("rate limiter lock");
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < gap {
                thread::sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }
}

impl RoutingBackend for RemoteBackend {
    fn route_km(&self, from: &Endpoint, to: &Endpoint, ctx: &TrafficContext) -> Result<f64, BackendError> {
        if from.id == to.id {
            return Ok(0.0);
        }
        self.throttle();
        let url = self.url_for(from.point, to.point, ctx);
        let resp = self
            .client
            .get(&url)
            .send()
            .map_err(|e| BackendError::Request(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Request(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Response(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| BackendError::Request(e.to_string()))?;
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Response(e.to_string()))?;
        let raw = body
            .pointer(&self.cfg.distance_pointer)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| BackendError::Response(format!("no number at {}", self.cfg.distance_pointer)))?;
        let km = raw * self.cfg.distance_scale;
        if !(km.is_finite() && km >= 0.0) {
            return Err(BackendError::InvalidDistance(km));
        }
        Ok(km)
    }

    fn backoff_on_retry(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixOptions {
    pub max_concurrent_requests: usize,
    /// Retries after the first attempt, per pair.
    pub max_retries: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_base_ms: u64,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self {
            max_concurrent_requests: 4,
            max_retries: 3,
            backoff_base_ms: 200,
        }
    }
}

/// Driving distances in km; `km[[i, j]]` is the route from zone i to zone j.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub zone_ids: Vec<String>,
    pub km: Array2<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zone_ids.is_empty()
    }

    pub fn get(&self, origin: &str, dest: &str) -> Option<f64> {
        let i = self.zone_ids.iter().position(|z| z == origin)?;
        let j = self.zone_ids.iter().position(|z| z == dest)?;
        Some(self.km[[i, j]])
    }

    /// Long-format CSV: `origin,destination,km`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("origin,destination,km\n");
        for (i, o) in self.zone_ids.iter().enumerate() {
            for (j, d) in self.zone_ids.iter().enumerate() {
                out.push_str(&format!("{},{},{:.6}\n", csv_field(o), csv_field(d), self.km[[i, j]]));
            }
        }
        out
    }

    pub fn from_csv(text: &str, zone_ids: &[String]) -> Result<Self, RoutingError> {
        #[derive(Deserialize)]
        struct Row {
            origin: String,
            destination: String,
            km: f64,
        }
        let index: HashMap<&str, usize> = zone_ids.iter().enumerate().map(|(k, z)| (z.as_str(), k)).collect();
        let n = zone_ids.len();
        let mut km = Array2::from_elem((n, n), f64::NAN);
        for rec in csv::Reader::from_reader(text.as_bytes()).deserialize::<Row>() {
            let row = rec.map_err(|e| RoutingError::Config(format!("distance matrix CSV: {e}")))?;
            let (Some(&i), Some(&j)) = (index.get(row.origin.as_str()), index.get(row.destination.as_str())) else {
                return Err(RoutingError::Config(format!(
                    "distance matrix references unknown zone pair {} -> {}",
                    row.origin, row.destination
                )));
            };
            km[[i, j]] = row.km;
        }
        if km.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(RoutingError::Config(
                "distance matrix CSV is incomplete or has invalid entries".into(),
            ));
        }
        Ok(Self {
            zone_ids: zone_ids.to_vec(),
            km,
        })
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn route_with_retries(
    backend: &dyn RoutingBackend,
    from: &Endpoint,
    to: &Endpoint,
    ctx: &TrafficContext,
    opts: &MatrixOptions,
) -> Result<f64, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.route_km(from, to, ctx) {
            Ok(km) if km.is_finite() && km >= 0.0 => return Ok(km),
            Ok(km) => return Err(BackendError::InvalidDistance(km)),
            Err(e) if e.retryable() && attempt < opts.max_retries => {
                if backend.backoff_on_retry() {
                    thread::sleep(Duration::from_millis(opts.backoff_base_ms << attempt.min(16)));
                }
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Queries the backend for every ordered pair of distinct zones. The
/// diagonal is left at 0 for [`fill_diagonal`].
pub fn build_distance_matrix(
    zones: &[Zone],
    backend: &dyn RoutingBackend,
    ctx: &TrafficContext,
    opts: &MatrixOptions,
) -> Result<DistanceMatrix, RoutingError> {
    if zones.is_empty() {
        return Err(RoutingError::Config("no zones to route between".into()));
    }
    let endpoints: Vec<Endpoint> = zones
        .iter()
        .map(|z| Endpoint {
            id: &z.id,
            point: z.polygon.centroid(),
        })
        .collect();
    let n = zones.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();

    let next = AtomicUsize::new(0);
    let workers = opts.max_concurrent_requests.clamp(1, pairs.len().max(1));
    let results: Vec<Vec<(usize, usize, Result<f64, BackendError>)>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(i, j)) = pairs.get(k) else { break };
                        let r = route_with_retries(backend, &endpoints[i], &endpoints[j], ctx, opts);
                        local.push((i, j, r));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("routing worker panicked"))
            .collect()
    });

    let mut km = Array2::zeros((n, n));
    let mut failures = Vec::new();
    for (i, j, r) in results.into_iter().flatten() {
        match r {
            Ok(d) => km[[i, j]] = d,
            Err(cause) => failures.push(PairFailure {
                origin: zones[i].id.clone(),
                destination: zones[j].id.clone(),
                cause,
            }),
        }
    }
    if !failures.is_empty() {
        failures.sort_by(|a, b| (&a.origin, &a.destination).cmp(&(&b.origin, &b.destination)));
        return Err(RoutingError::BackendFailure(failures));
    }
    Ok(DistanceMatrix {
        zone_ids: zones.iter().map(|z| z.id.clone()).collect(),
        km,
    })
}

/// Stable 64-bit hash of a zone id (first 8 bytes of its SHA-256).
pub fn zone_seed_hash(zone_id: &str) -> u64 {
    let digest = Sha256::digest(zone_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Monte Carlo seed for one zone's intra-zone distance.
pub fn zone_mc_seed(global_seed: u64, zone_id: &str) -> u64 {
    global_seed ^ zone_seed_hash(zone_id)
}

/// Sets each diagonal entry to the zone's mean intra-zone distance times the
/// detour index. Off-diagonal entries are untouched.
pub fn fill_diagonal(
    m: &DistanceMatrix,
    zones: &[Zone],
    mc: &McConfig,
    cfg: &OfflineRoutingConfig,
) -> Result<DistanceMatrix, RoutingError> {
    if m.len() != zones.len() {
        return Err(RoutingError::DimensionMismatch {
            matrix: m.len(),
            zones: zones.len(),
        });
    }
    let diag: Vec<f64> = zones
        .par_iter()
        .map(|z| {
            let zone_cfg = McConfig {
                n_samples: mc.n_samples,
                seed: zone_mc_seed(mc.seed, &z.id),
            };
            mc_mean_pairwise_distance_km(&z.polygon, zone_cfg)
                .map(|d| d * cfg.detour_index)
                .map_err(|source| RoutingError::Geometry {
                    zone: z.id.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let mut out = m.clone();
    for (k, d) in diag.into_iter().enumerate() {
        out.km[[k, k]] = d;
    }
    Ok(out)
}
