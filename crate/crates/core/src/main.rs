use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use flashwarn::config::PipelineConfig;
use flashwarn::error::{Error, Result};
use flashwarn::pipeline;
use flashwarn::synth::{self, ScenarioSpec};
use flashwarn::validate::Window;

#[derive(Parser)]
#[command(name = "flashwarn", version, about = "Flash-flood threat maps on an H3 resolution-10 grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify static susceptibility and write ihl.geojson / ihl.csv.
    Ihl(Common),
    /// Run IHL, HSI and LTS and write lts.geojson / lts.csv.
    Lts(Common),
    /// Correlate threat levels with impact reports.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Impact CSV; overrides `inputs.points` in the config.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Event window `<start>..<end>` (RFC 3339, half-open).
        #[arg(long)]
        window: Option<String>,
        /// Skip malformed impact rows instead of failing.
        #[arg(long)]
        lenient_points: bool,
    },
    /// Write a synthetic input bundle.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    rows: usize,
    #[arg(long, default_value_t = 300)]
    cols: usize,
    /// Static-raster pixel size in degrees.
    #[arg(long, default_value_t = 1e-4)]
    cell_size: f64,
    #[arg(long, default_value_t = 29.70, allow_hyphen_values = true)]
    origin_lat: f64,
    #[arg(long, default_value_t = -95.40, allow_hyphen_values = true)]
    origin_lng: f64,
    /// Rainfall as a fraction of the design depth, west half.
    #[arg(long, default_value_t = 0.3)]
    west_fraction: f64,
    /// Rainfall as a fraction of the design depth, east half.
    #[arg(long, default_value_t = 1.2)]
    east_fraction: f64,
    /// Expected impact points per hex for levels F,A,B,C,D,E.
    #[arg(long, default_value = "0.05,0.2,0.5,1.0,2.0,4.0")]
    rates: String,
    /// Design depth in thousandths of an inch.
    #[arg(long, default_value_t = 17000.0)]
    design_raw: f64,
    /// Window start (RFC 3339); the window lasts `--window-hours`.
    #[arg(long, default_value = "2019-09-18T00:00:00Z")]
    window_start: String,
    #[arg(long, default_value_t = 24)]
    window_hours: i64,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        config.workers = Some(w);
    }
    Ok(config)
}

fn scenario(args: &SynthArgs) -> Result<ScenarioSpec> {
    let rates: Vec<f64> = args
        .rates
        .split(',')
        .map(|r| r.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("--rates {:?}: {e}", args.rates)))?;
    let rates: [f64; 6] = rates
        .try_into()
        .map_err(|_| Error::Config("--rates needs six values (F,A,B,C,D,E)".into()))?;
    let window_start = DateTime::parse_from_rfc3339(&args.window_start)
        .map_err(|e| Error::Config(format!("--window-start: {e}")))?
        .with_timezone(&Utc);
    Ok(ScenarioSpec {
        seed: args.seed,
        nrows: args.rows,
        ncols: args.cols,
        cell_size: args.cell_size,
        origin_lat: args.origin_lat,
        origin_lng: args.origin_lng,
        west_fraction: args.west_fraction,
        east_fraction: args.east_fraction,
        rates,
        design_raw: args.design_raw,
        window_start,
        window_hours: args.window_hours,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ihl(common) => {
            let config = load_config(&common)?;
            let ihl = pipeline::cmd_ihl(&config)?;
            eprintln!("wrote {} hexes to {}", ihl.len(), config.output_dir.display());
        }
        Command::Lts(common) => {
            let config = load_config(&common)?;
            let hazard = pipeline::cmd_lts(&config)?;
            eprintln!("wrote {} hexes to {}", hazard.lts.len(), config.output_dir.display());
        }
        Command::Validate {
            common,
            points,
            window,
            lenient_points,
        } => {
            let config = load_config(&common)?;
            let points = points
                .or_else(|| config.inputs.points.clone())
                .ok_or_else(|| Error::Config("no impact points: pass --points or set inputs.points".into()))?;
            let window = window.as_deref().map(Window::parse).transpose()?;
            let out = pipeline::cmd_validate(&config, &points, window, lenient_points)?;
            if out.rejected_points > 0 {
                eprintln!("skipped {} malformed impact rows", out.rejected_points);
            }
            println!("{}", out.summary_line);
        }
        Command::Synth(args) => {
            let spec = scenario(&args)?;
            let config = synth::cmd_synth(&spec, &args.out)?;
            eprintln!("wrote scenario bundle; config at {}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flashwarn: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
