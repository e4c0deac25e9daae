//! Command-line front end: reads a TOML run manifest, applies flag overrides,
//! runs the experiment and writes `report.json` plus CSV click and scan data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Deserialize;

use gedanken_core::elements::{
    ChannelShape, DetectorSpec, ElementSpec, FiberSpec, MichelsonSpec, SpectrometerSpec,
};
use gedanken_core::estimators::ScanPoint;
use gedanken_core::experiments::{GridParams, Results, ScanSpec};
use gedanken_core::{
    run, Error as CoreError, Executor, ExperimentConfig, ExperimentKind, Mode, PhotonOntology,
    RunReport, SourceSpec,
};

/// Manifest format understood by this build.
pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_OUT_DIR: &str = "gedanken-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] CoreError),
}

impl CliError {
    /// Process exit status: 2 for numerical guards, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical_guard() => 2,
            _ => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "gedanken",
    version,
    about = "Single-photon coherence Gedanken experiments"
)]
pub struct Args {
    /// TOML run manifest.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Experiment to run: 1, 2, 3 or delayed.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Photon model: quantum, hv or transformer.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// expectation or monte-carlo.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for trial sampling; defaults to all cores.
    #[arg(long, env = "GEDANKEN_WORKERS")]
    pub workers: Option<usize>,
}

/// Number or string in the manifest, e.g. `experiment = 3` or `"delayed"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Label {
    Int(u64),
    Str(String),
}

impl Label {
    fn text(&self) -> String {
        match self {
            Label::Int(i) => i.to_string(),
            Label::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    schema_version: u32,
    experiment: Option<Label>,
    model: Option<String>,
    mode: Option<String>,
    trials: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    source: Option<SourceSpec>,
    grid: Option<GridParams>,
    scan: Option<ScanSpec>,
    elements: Option<Vec<ManifestElement>>,
}

/// Element entry. Spectrometers may list their centers or give a uniform
/// bank as `n_channels` and `spacing_hz`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestElement {
    Spectrometer(ManifestSpectrometer),
    Fiber(FiberSpec),
    Michelson(MichelsonSpec),
    Detector(DetectorSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSpectrometer {
    centers_hz: Option<Vec<f64>>,
    n_channels: Option<usize>,
    spacing_hz: Option<f64>,
    channel_hwhm_hz: f64,
    #[serde(default)]
    shape: ChannelShape,
}

impl ManifestElement {
    fn resolve(self) -> Result<ElementSpec, CliError> {
        Ok(match self {
            ManifestElement::Fiber(f) => ElementSpec::Fiber(f),
            ManifestElement::Michelson(m) => ElementSpec::Michelson(m),
            ManifestElement::Detector(d) => ElementSpec::Detector(d),
            ManifestElement::Spectrometer(s) => {
                let spec = match (s.centers_hz, s.n_channels, s.spacing_hz) {
                    (Some(centers_hz), None, None) => SpectrometerSpec {
                        centers_hz,
                        channel_hwhm_hz: s.channel_hwhm_hz,
                        shape: s.shape,
                    },
                    (None, Some(n), spacing) => {
                        let spacing = match (n, spacing) {
                            (1, None) => 0.0,
                            (_, Some(sp)) => sp,
                            _ => {
                                return Err(CliError::Config(
                                    "spectrometer with n_channels > 1 needs spacing_hz".into(),
                                ))
                            }
                        };
                        SpectrometerSpec::uniform(n, spacing, s.channel_hwhm_hz, s.shape)
                    }
                    _ => {
                        return Err(CliError::Config(
                            "spectrometer needs either centers_hz or n_channels (+ spacing_hz)"
                                .into(),
                        ))
                    }
                };
                ElementSpec::Spectrometer(spec)
            }
        })
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, CliError> {
    let m: Manifest =
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid manifest: {e}")))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    Ok(m)
}

/// Everything needed to execute one invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

/// Merges manifest and flags; flags win.
pub fn resolve(args: &Args) -> Result<Invocation, CliError> {
    let manifest = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            Some(parse_manifest(&text)?)
        }
        None => None,
    };
    let experiment = args
        .experiment
        .clone()
        .or_else(|| {
            manifest
                .as_ref()
                .and_then(|m| m.experiment.as_ref().map(Label::text))
        })
        .ok_or_else(|| {
            CliError::Config("no experiment given (use --experiment or a config)".into())
        })?;
    let kind: ExperimentKind = experiment.parse().map_err(config_err)?;
    let mut cfg = ExperimentConfig::defaults(kind);
    let mut out = None;
    let mut workers = None;

    if let Some(m) = manifest {
        if let Some(model) = m.model {
            cfg.ontology = model.parse().map_err(config_err)?;
        }
        if let Some(mode) = m.mode {
            cfg.mode = mode.parse().map_err(config_err)?;
        }
        cfg.trials = m.trials.unwrap_or(cfg.trials);
        cfg.seed = m.seed.unwrap_or(cfg.seed);
        if let Some(source) = m.source {
            cfg.source = source;
            cfg.elements = ExperimentConfig::defaults_for(kind, source).elements;
        }
        cfg.grid = m.grid.unwrap_or(cfg.grid);
        cfg.scan = m.scan.unwrap_or(cfg.scan);
        if let Some(elements) = m.elements {
            cfg.elements = elements
                .into_iter()
                .map(ManifestElement::resolve)
                .collect::<Result<_, _>>()?;
        }
        out = m.out;
        workers = m.workers;
    }

    if let Some(model) = &args.model {
        cfg.ontology = model.parse::<PhotonOntology>().map_err(config_err)?;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse::<Mode>().map_err(config_err)?;
    }
    cfg.trials = args.trials.unwrap_or(cfg.trials);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .or(out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let workers = args.workers.or(workers);
    if workers == Some(0) {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    cfg.validate().map_err(|e| match e {
        e if e.is_numerical_guard() => CliError::Run(e),
        e => CliError::Config(e.to_string()),
    })?;
    Ok(Invocation {
        config: cfg,
        out,
        workers,
    })
}

fn config_err(e: CoreError) -> CliError {
    CliError::Config(e.to_string())
}

/// Runs one invocation and writes its outputs.
pub fn execute(inv: &Invocation) -> Result<RunReport, CliError> {
    let exec = match inv.workers {
        Some(w) => Executor::new(w),
        None => Executor::default(),
    };
    let report = run(&inv.config, &exec)?;
    write_outputs(&report, &inv.out)?;
    Ok(report)
}

/// Writes `report.json`, `clicks.csv` and any scan tables into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
    write_file(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_file(&dir.join("clicks.csv"), &clicks_csv(report)?)?;
    match &report.results {
        Results::Source(r) => write_file(&dir.join("visibility.csv"), &scan_csv(&r.scan)?)?,
        Results::Filtered(r) => {
            for c in r.channels.iter().filter(|c| !c.scan.is_empty()) {
                let name = format!("visibility_channel_{}.csv", c.k);
                write_file(&dir.join(name), &scan_csv(&c.scan)?)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f =
        fs::File::create(path).map_err(io_err(format!("cannot write {}", path.display())))?;
    f.write_all(bytes)
        .map_err(io_err(format!("cannot write {}", path.display())))
}

/// Seconds with 17 significant digits, independent of locale.
fn seconds(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))
}

pub fn clicks_csv(report: &RunReport) -> Result<Vec<u8>, CliError> {
    let rows = report.click_sets.iter().flat_map(|set| {
        set.clicks.iter().map(move |c| {
            let channel = match set.label {
                Some(label) => format!("{label}:{}", c.channel),
                None => c.channel.to_string(),
            };
            vec![c.trial.to_string(), channel, seconds(c.t_click)]
        })
    });
    csv_bytes(&["trial", "channel", "t_seconds"], rows)
}

pub fn scan_csv(scan: &[ScanPoint]) -> Result<Vec<u8>, CliError> {
    let rows = scan.iter().map(|p| {
        vec![
            seconds(p.tau_s),
            format!("{:.16e}", p.visibility),
            format!("{:.16e}", p.p_click),
        ]
    });
    csv_bytes(&["tau_seconds", "visibility", "p_click"], rows)
}

/// Full command: resolve, run, write, and report timing on stderr.
pub fn run_cli(args: &Args) -> i32 {
    let started = Instant::now();
    let outcome = resolve(args).and_then(|inv| execute(&inv).map(|r| (inv, r)));
    match outcome {
        Ok((inv, report)) => {
            eprintln!(
                "experiment {} ({}, {}) done in {:.3} s, outputs in {}",
                inv.config.experiment,
                inv.config.ontology.as_str(),
                inv.config.mode.as_str(),
                started.elapsed().as_secs_f64().max(report.wall_clock_s),
                inv.out.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
