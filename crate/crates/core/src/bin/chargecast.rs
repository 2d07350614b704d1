use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chargecast::corrections::{fit_driving_ratio, AbscissaRule, ModeShareTable, PprFormula};
use chargecast::demand::{AttributionPolicy, ZoneDemand};
use chargecast::distances::Weekday;
use chargecast::ingest::{load_tacs_cells, load_trip_table};
use chargecast::report::{
    compute_distances, compute_gammas, compute_segments, emit_outputs, load_geography, run_pipeline, segments_from_csv,
    segments_to_csv, segmentation_shares_csv, stations_summary_csv, write_files_atomically, zone_stations_csv,
    BackendKind, PipelineConfig, PipelineError, StageDiagnostics, Warnings,
};
use chargecast::segmentation::EmptyPoiFallback;
use chargecast::stations::build_station_report;
use chargecast::synth::{generate_city, write_city, OracleConfig, SynthSpec};

#[derive(Parser)]
#[command(name = "chargecast", version, about = "EV charging demand estimation and segmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline and write all reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Fit the driving-ratio curve to a mode-share table.
    FitDr {
        /// CSV lo_km,hi_km,drive_share; the bundled Brussels table if omitted.
        #[arg(long)]
        mode_share: Option<PathBuf>,
        #[arg(long, default_value = "midpoint")]
        dr_abscissa: AbscissaRule,
    },
    /// Build the zone distance matrix.
    Distances {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Segment per-zone demand (zone_demand.csv) into charging types.
    Segment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        demand: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Convert segmented demand (segmented_demand.csv) into station counts.
    Stations {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Check a config and load every input it references.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Write a synthetic city fixture set.
    Synth {
        /// JSON synthetic city spec; defaults if omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags that override values from the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    routing_backend: Option<BackendKind>,
    #[arg(long)]
    detour_index: Option<f64>,
    #[arg(long)]
    traffic_day: Option<Weekday>,
    #[arg(long)]
    traffic_hour: Option<u8>,
    #[arg(long)]
    max_concurrent_requests: Option<usize>,
    #[arg(long)]
    mc_seed: Option<u64>,
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    kwh_per_km: Option<f64>,
    #[arg(long)]
    attribution: Option<AttributionPolicy>,
    #[arg(long)]
    ppr_cap: Option<f64>,
    #[arg(long)]
    ppr_formula: Option<PprFormula>,
    #[arg(long)]
    dr_abscissa: Option<AbscissaRule>,
    #[arg(long)]
    split_tolerance_km: Option<f64>,
    #[arg(long)]
    empty_poi_fallback: Option<EmptyPoiFallback>,
    #[arg(long)]
    traffic_reduction: Option<f64>,
    #[arg(long)]
    full_normal: bool,
    #[arg(long)]
    charger_specs: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, mut c: PipelineConfig) -> PipelineConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            routing_backend,
            detour_index,
            traffic_day,
            traffic_hour,
            max_concurrent_requests,
            mc_seed,
            mc_samples,
            kwh_per_km,
            attribution,
            ppr_formula,
            dr_abscissa,
            split_tolerance_km,
            empty_poi_fallback,
            traffic_reduction
        );
        if self.ppr_cap.is_some() {
            c.ppr_cap = self.ppr_cap;
        }
        if self.charger_specs.is_some() {
            c.charger_specs = self.charger_specs;
        }
        c.full_normal |= self.full_normal;
        c
    }
}

fn config(path: &Path, flags: Overrides) -> Result<PipelineConfig, PipelineError> {
    let cfg = flags.apply(PipelineConfig::load(path)?);
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cmd: Cmd) -> Result<(), PipelineError> {
    match cmd {
        Cmd::Run { config: path, out, flags } => {
            let cfg = config(&path, flags)?;
            let result = run_pipeline(&cfg)?;
            for w in result.manifest.warnings.as_slice() {
                log::warn!("{w}");
            }
            report_written(&emit_outputs(&result, &out)?);
            let c = result.stations.citywide;
            println!(
                "stations: normal (resi) {}, normal (work) {}, semi-rapid {}, rapid {}, full normal {}",
                c.normal_resi, c.normal_work, c.semi_rapid, c.rapid, c.full_normal
            );
        }
        Cmd::FitDr { mode_share, dr_abscissa } => {
            let table = match mode_share {
                Some(p) => ModeShareTable::load(&p).map_err(|e| PipelineError::Config(e.to_string()))?,
                None => ModeShareTable::brussels(),
            };
            let m = fit_driving_ratio(&table, dr_abscissa).map_err(|e| PipelineError::Data {
                stage: "corrections",
                message: e.to_string(),
            })?;
            println!("{}", serde_json::to_string_pretty(&m).expect("serializable"));
        }
        Cmd::Distances { config: path, out, flags } => {
            let cfg = config(&path, flags)?;
            let mut diag = StageDiagnostics::default();
            let inputs = load_geography(&cfg, &mut diag)?;
            let m = compute_distances(&cfg, &inputs.zones, &mut diag)?;
            report_written(&write_files_atomically(&out, &[("distance_matrix.csv", m.to_csv())])?);
        }
        Cmd::Segment { config: path, demand, out, flags } => {
            let cfg = config(&path, flags)?;
            let mut diag = StageDiagnostics::default();
            let mut warnings = Warnings::default();
            let inputs = load_geography(&cfg, &mut diag)?;
            let demand = ZoneDemand::from_csv(&read(&demand)?).map_err(|e| PipelineError::Data {
                stage: "segmentation",
                message: e.to_string(),
            })?;
            let gammas: Vec<f64> = compute_gammas(&cfg, &inputs.zones, &mut warnings)?
                .iter()
                .map(|e| e.gamma)
                .collect();
            let segs = compute_segments(&cfg, &inputs, &demand, &gammas, &mut diag, &mut warnings)?;
            for w in warnings.as_slice() {
                log::warn!("{w}");
            }
            report_written(&write_files_atomically(
                &out,
                &[
                    ("segmented_demand.csv", segments_to_csv(&segs)),
                    ("segmentation_shares.csv", segmentation_shares_csv(&segs)),
                ],
            )?);
        }
        Cmd::Stations { config: path, segments, out, flags } => {
            let cfg = config(&path, flags)?;
            let mut diag = StageDiagnostics::default();
            let inputs = load_geography(&cfg, &mut diag)?;
            let segs = segments_from_csv(&read(&segments)?)?;
            let rep = build_station_report(&segs, &cfg.specs()?, cfg.scenario(), &inputs.zones).map_err(|e| {
                PipelineError::Data {
                    stage: "stations",
                    message: e.to_string(),
                }
            })?;
            report_written(&write_files_atomically(
                &out,
                &[
                    ("stations_summary.csv", stations_summary_csv(&rep, &segs)),
                    ("zone_stations.csv", zone_stations_csv(&rep)),
                ],
            )?);
        }
        Cmd::Validate { config: path, flags } => {
            let cfg = config(&path, flags)?;
            let mut diag = StageDiagnostics::default();
            let inputs = load_geography(&cfg, &mut diag)?;
            let data = |e: &dyn std::fmt::Display| PipelineError::Data {
                stage: "ingest",
                message: e.to_string(),
            };
            let cells = load_tacs_cells(&cfg.tacs).map_err(|e| data(&e))?;
            let trips = load_trip_table(&cfg.trips).map_err(|e| data(&e))?;
            cfg.specs()?;
            println!(
                "ok: {} zones, {} TACS cells, {} trip rows, {} POIs, {} highways",
                inputs.zones.len(),
                cells.len(),
                trips.rows.len(),
                inputs.pois.len(),
                inputs.highways.len()
            );
            for w in &diag.overpass.warnings {
                println!("warning: {w}");
            }
        }
        Cmd::Synth { spec, seed, out } => {
            let mut s: SynthSpec = match spec {
                Some(p) => serde_json::from_str(&read(&p)?).map_err(|e| PipelineError::Config(e.to_string()))?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let city = generate_city(&s).map_err(|e| PipelineError::Config(e.to_string()))?;
            let cfg = write_city(&city, &OracleConfig::default(), &out).map_err(|e| PipelineError::Data {
                stage: "synth",
                message: e.to_string(),
            })?;
            println!("wrote synthetic city to {} (config {})", out.display(), cfg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
