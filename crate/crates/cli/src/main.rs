//! `geopanel`: ingest, featurize, forecast, evaluate and report on a
//! multi-station panel.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geopanel::config::{Overrides, RunConfig};
use geopanel::evaluation::report::{emit_report, read_json, write_json, write_text, SAVED_RUN_JSON};
use geopanel::evaluation::SavedRun;
use geopanel::forecast::BRIDGE_CMD_ENV;
use geopanel::model::Frequency;
use geopanel::workflow::{self, load_inputs};
use geopanel::{Error, ErrorKind};

const DEFAULT_OUTDIR: &str = "out";
const RESOLVED_CONFIG_JSON: &str = "resolved_config.json";
const SELECTION_JSON: &str = "selection.json";
const RUN_LOG: &str = "run.log";

#[derive(Parser)]
#[command(name = "geopanel", version, about = "Spatiotemporal forecasting for small multi-station panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Backtest, forecast forward, and write the report
    Run(Common),
    /// Dump the feature table before and after selection
    Features {
        #[command(flatten)]
        common: Common,
        /// Output CSV; the selected table goes next to it as `<stem>.selected.csv`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that no feature reads observations after its own time index
    Audit {
        #[command(flatten)]
        common: Common,
        /// Exit 1 with the first violations listed when any probe fails
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        /// Add a feature that deliberately reads the future
        #[arg(long)]
        inject_leak: bool,
    },
    /// Re-render report files from a saved run in the output directory
    Report(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; every field is optional
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stations: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    frequency: Option<Frequency>,
    /// ridge, knn, naive, seasonal_naive or external
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Fit one model per station instead of one pooled model
    #[arg(long)]
    per_station: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            stations: self.stations.clone(),
            panel: self.panel.clone(),
            outdir: self.outdir.clone(),
            frequency: self.frequency,
            backend: self.backend.clone(),
            horizon: self.horizon,
            seed: self.seed,
            per_station: self.per_station,
        })?;
        config.apply_bridge_command(std::env::var(BRIDGE_CMD_ENV).ok());
        if config.paths.outdir.is_none() {
            config.paths.outdir = Some(PathBuf::from(DEFAULT_OUTDIR));
        }
        config.resolve()
    }
}

fn outdir(config: &RunConfig) -> Result<PathBuf, Error> {
    let dir = config.paths.outdir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR));
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_run(common: &Common) -> Result<ExitCode, Error> {
    let config = common.config()?;
    let dir = outdir(&config)?;
    let inputs = load_inputs(&config)?;
    let out = workflow::run(&config, &inputs)?;

    write_json(&dir.join(RESOLVED_CONFIG_JSON), &config.snapshot())?;
    write_json(&dir.join(SAVED_RUN_JSON), &out.saved)?;
    write_json(&dir.join(SELECTION_JSON), &out.selection)?;
    let (report, written) = emit_report(&dir, &out.saved)?;

    let mut log = String::new();
    let _ = writeln!(log, "config digest {}", config.digest());
    let _ = writeln!(
        log,
        "{} stations, {} steps ({}), {} missing cells imputed",
        inputs.stations.len(),
        inputs.raw.n_times(),
        inputs.raw.frequency(),
        out.imputation.filled.len()
    );
    let _ = writeln!(log, "backend {}, horizon {}", config.backend.id(), config.split.resolved_horizon(inputs.raw.frequency()));
    for origin in &out.saved.backtest {
        let _ = writeln!(log, "origin {}: {} features kept", origin.origin, origin.selection.kept.len());
    }
    let _ = writeln!(log, "forward forecast: {} features kept", out.selection.kept.len());
    let _ = writeln!(log, "pooled rmse {} mae {} (n = {})", report.pooled.rmse, report.pooled.mae, report.pooled.n);
    for path in [RESOLVED_CONFIG_JSON, SAVED_RUN_JSON, SELECTION_JSON] {
        let _ = writeln!(log, "wrote {}", dir.join(path).display());
    }
    for path in &written {
        let _ = writeln!(log, "wrote {}", path.display());
    }
    write_text(&dir.join(RUN_LOG), &log)?;
    print!("{log}");
    Ok(ExitCode::SUCCESS)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_features(common: &Common, out: Option<&Path>) -> Result<ExitCode, Error> {
    let config = common.config()?;
    let out = match out {
        Some(p) => p.to_owned(),
        None => outdir(&config)?.join("features.csv"),
    };
    let inputs = load_inputs(&config)?;
    let (table, selected, report) = workflow::feature_tables(&config, &inputs)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.to_owned(), source })?;
    }
    let selected_path = sibling(&out, "selected.csv");
    let report_path = sibling(&out, "selection.json");
    write_text(&out, &table.to_csv())?;
    write_text(&selected_path, &selected.to_csv())?;
    write_json(&report_path, &report)?;
    println!(
        "{} rows, {} features ({} kept) -> {}, {}, {}",
        table.n_rows(),
        table.schema().len(),
        report.kept.len(),
        out.display(),
        selected_path.display(),
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(common: &Common, probes: usize, inject_leak: bool) -> Result<ExitCode, Error> {
    let config = common.config()?;
    let inputs = load_inputs(&config)?;
    let report = workflow::audit(&config, &inputs, probes, inject_leak)?;
    if report.passed() {
        println!("audit passed: {} probes, no violations", report.probes);
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("audit failed: {} of {} probes changed under truncation", report.violations.len(), report.probes);
    for v in report.violations.iter().take(20) {
        eprintln!("  {} t={} {}: full {:?} vs truncated {:?}", v.station, v.t, v.feature, v.full, v.truncated);
    }
    Ok(ExitCode::from(1))
}

fn cmd_report(common: &Common) -> Result<ExitCode, Error> {
    let dir = match &common.outdir {
        Some(d) => d.clone(),
        None => match &common.config {
            Some(path) => RunConfig::from_file(path)?.paths.outdir.unwrap_or_else(|| DEFAULT_OUTDIR.into()),
            None => PathBuf::from(DEFAULT_OUTDIR),
        },
    };
    let saved: SavedRun = read_json(&dir.join(SAVED_RUN_JSON))?;
    let (_, written) = emit_report(&dir, &saved)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Backend => 4,
        ErrorKind::Internal => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Features { common, out } => cmd_features(common, out.as_deref()),
        Command::Audit { common, probes, inject_leak } => cmd_audit(common, *probes, *inject_leak),
        Command::Report(common) => cmd_report(common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
