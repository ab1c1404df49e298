use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use squeezelab::estimators::Measured;
use squeezelab::homodyne::DetectionChain;
use squeezelab::io::commands::{self, AnalyzeOptions, CalibrationInput, FitGainOptions, InferOptions};
use squeezelab::io::config::{RunConfig, StreamFormat};
use squeezelab::Result;

#[derive(Parser)]
#[command(name = "squeezelab", version, about = "Simulate and analyze pulsed squeezed-light homodyne data")]
struct Cli {
    /// Run configuration (TOML). Missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the scan seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Pulse-stream format for `simulate`.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

impl From<FormatArg> for StreamFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Bin => StreamFormat::Bin,
            FormatArg::Csv => StreamFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a pulse stream from the configured source and detector.
    Simulate {
        /// Output file; defaults to `<out-dir>/<stream_file>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Block the signal so the detector sees vacuum.
        #[arg(long)]
        vacuum: bool,
        /// Operate the detector at this LO level (photons per pulse).
        #[arg(long)]
        lo_photons: Option<f64>,
        #[arg(long)]
        pulses: Option<u64>,
    },
    /// Block variances, extremal squeezing levels and histograms of a stream.
    Analyze {
        stream: PathBuf,
        /// Shot-noise variance in raw units; overrides the header calibration.
        #[arg(long)]
        snl: Option<f64>,
        #[arg(long)]
        block_size: Option<usize>,
        /// Subtract the electronic-noise floor from block variances.
        #[arg(long)]
        subtract_elec: bool,
        #[arg(long, default_value_t = 101)]
        bins: usize,
        /// Half-width of the phase window feeding each histogram, rad.
        #[arg(long, default_value_t = 0.05)]
        hist_window_rad: f64,
    },
    /// Fit the gain model to a `p_pump_mw,g_amp,g_deamp[,weight]` table.
    FitGain {
        csv: PathBuf,
        /// Use only rows with pump power at or below this bound.
        #[arg(long)]
        max_pump_mw: Option<f64>,
        /// Fit the deamplification floor as well as kappa.
        #[arg(long)]
        fit_mu: bool,
    },
    /// Infer detected squeezing levels from probe gains and efficiencies.
    Infer {
        #[arg(long)]
        g_amp: f64,
        #[arg(long, default_value_t = 0.0)]
        g_amp_sigma: f64,
        #[arg(long)]
        g_deamp: f64,
        #[arg(long, default_value_t = 0.0)]
        g_deamp_sigma: f64,
        #[arg(long, default_value_t = DetectionChain::default().eta_t)]
        eta_t: f64,
        #[arg(long, default_value_t = DetectionChain::default().eta_h)]
        eta_h: f64,
        #[arg(long, default_value_t = DetectionChain::default().eta_d)]
        eta_d: f64,
        /// Uncertainty of the overall efficiency.
        #[arg(long, default_value_t = 0.0)]
        eta_sigma: f64,
        /// Warn when gains violate the lossless plane-wave relations.
        #[arg(long)]
        plane_wave_check: bool,
    },
    /// Fit shot-noise variance against LO level.
    Calibrate {
        /// Vacuum streams, one per LO level.
        #[arg(required_unless_present = "pairs", conflicts_with = "pairs")]
        streams: Vec<PathBuf>,
        /// `n_lo,variance` table instead of streams.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Force the line through the origin.
        #[arg(long)]
        no_intercept: bool,
    },
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn default_stream_path(cfg: &RunConfig, out_dir: &Path) -> PathBuf {
    let path = out_dir.join(&cfg.output.stream_file);
    match cfg.output.format {
        StreamFormat::Csv if path.extension().is_none_or(|e| e != "csv") => path.with_extension("csv"),
        _ => path,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scan.seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f.into();
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    match cli.cmd {
        Cmd::Simulate {
            out,
            vacuum,
            lo_photons,
            pulses,
        } => {
            if vacuum {
                cfg.source.signal_blocked = true;
            }
            if let Some(n) = pulses {
                cfg.scan.n_pulses = n;
            }
            if let Some(n) = lo_photons {
                cfg = commands::with_lo_level(&cfg, n)?;
            }
            let out = out.unwrap_or_else(|| default_stream_path(&cfg, &out_dir));
            log::info!("writing {} pulses to {}", cfg.scan.n_pulses, out.display());
            print_json(&commands::simulate(&cfg, &out)?);
        }
        Cmd::Analyze {
            stream,
            snl,
            block_size,
            subtract_elec,
            bins,
            hist_window_rad,
        } => {
            let opts = AnalyzeOptions {
                snl_raw: snl,
                block_size,
                subtract_elec,
                n_bins: bins,
                hist_window_rad,
                ..AnalyzeOptions::new(out_dir)
            };
            print_json(&commands::analyze(&stream, &opts)?);
        }
        Cmd::FitGain {
            csv,
            max_pump_mw,
            fit_mu,
        } => {
            let opts = FitGainOptions {
                fit_mu,
                max_pump_mw,
                out_dir,
            };
            print_json(&commands::fit_gain(&csv, &opts)?);
        }
        Cmd::Infer {
            g_amp,
            g_amp_sigma,
            g_deamp,
            g_deamp_sigma,
            eta_t,
            eta_h,
            eta_d,
            eta_sigma,
            plane_wave_check,
        } => {
            let opts = InferOptions {
                g_amp: Measured::new(g_amp, g_amp_sigma),
                g_deamp: Measured::new(g_deamp, g_deamp_sigma),
                eta_t,
                eta_h,
                eta_d,
                sigma_eta: eta_sigma,
                plane_wave_check,
            };
            print_json(&commands::infer(&opts)?);
        }
        Cmd::Calibrate {
            streams,
            pairs,
            no_intercept,
        } => {
            let input = match pairs {
                Some(p) => CalibrationInput::Pairs(p),
                None => CalibrationInput::Streams(streams),
            };
            print_json(&commands::calibrate(&input, !no_intercept, Some(&out_dir))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
