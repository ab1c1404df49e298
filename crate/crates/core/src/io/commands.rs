//! The five commands: `simulate`, `analyze`, `fit-gain`, `infer`,
//! `calibrate`. Each returns a serializable report and writes its data files;
//! the binary only parses arguments and prints.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{RunConfig, StreamFormat};
use super::stream::{self, CalibrationHeader, RngInfo, StreamHeader};
use super::tables;
use super::write_atomic;
use crate::dopa::{fit_gain_curve, FitOptions, GainFit};
use crate::error::{Error, Result};
use crate::estimators::{
    block_variances, calibrate_from_pairs, extremal_variances, gaussian_fit, histogram, sample_variance,
    GaussianFit, InferredLevels, Measured, ShotNoiseCalibration, SqueezingReport,
};
use crate::gaussian;
use crate::homodyne::{self, overall_efficiency, LO_LINEARITY_CEILING};

pub const TRACE_FILE: &str = "trace.csv";
pub const HIST_MIN_FILE: &str = "hist_min.csv";
pub const HIST_MAX_FILE: &str = "hist_max.csv";
pub const REPORT_FILE: &str = "report.json";
pub const GAIN_MODEL_FILE: &str = "gain_model.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const CALIBRATION_FILE: &str = "calibration.json";

/// Shot-noise to electronic-noise ratio required of the detector, dB.
pub const SHOT_TO_ELEC_THRESHOLD_DB: f64 = 11.0;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Copy of `cfg` with the detector operated at another LO level (see
/// [`homodyne::DetectionChain::at_lo_level`]).
pub fn with_lo_level(cfg: &RunConfig, n_lo: f64) -> Result<RunConfig> {
    let mut out = cfg.clone();
    out.detection = cfg.detection.at_lo_level(n_lo)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub n_pulses: u64,
    pub eta: f64,
    /// Extremal variances expected from the model, SNU, electronic noise
    /// included.
    pub expected_min_snu: f64,
    pub expected_max_snu: f64,
    pub warnings: Vec<String>,
}

/// Generate a pulse stream for `cfg` and write it to `out`. The output is a
/// pure function of the config: no timestamps, no system entropy.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    cfg.validate()?;
    let state = if cfg.source.signal_blocked {
        gaussian::vacuum()
    } else {
        cfg.dopa.model()?.output_state()?
    };
    let chain = cfg.detection;
    let records = homodyne::sample_pulse_train(&state, &chain, &cfg.scan)?;
    let snl_raw = chain.gain_raw * chain.gain_raw;
    let header = StreamHeader {
        rng: RngInfo::default(),
        calibration: Some(CalibrationHeader {
            snl_raw,
            v_elec_raw: snl_raw * chain.v_elec,
        }),
        config: cfg.clone(),
    };
    match cfg.output.format {
        StreamFormat::Bin => stream::write_stream(out, &header, &records)?,
        StreamFormat::Csv => stream::write_stream_csv(out, &header, &records)?,
    }
    let (lo, hi) = state.principal_variances();
    let warnings = chain.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SimulateSummary {
        path: out.to_owned(),
        n_pulses: cfg.scan.n_pulses,
        eta: overall_efficiency(&chain),
        expected_min_snu: homodyne::measured_variance(lo, &chain, true),
        expected_max_snu: homodyne::measured_variance(hi, &chain, true),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub out_dir: PathBuf,
    /// Overrides the header calibration.
    pub snl_raw: Option<f64>,
    /// Defaults to the block size recorded in the header.
    pub block_size: Option<usize>,
    pub subtract_elec: bool,
    pub n_bins: usize,
    /// Half-width of the LO-phase window selecting histogram samples, rad.
    pub hist_window_rad: f64,
}

impl AnalyzeOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            snl_raw: None,
            block_size: None,
            subtract_elec: false,
            n_bins: 101,
            hist_window_rad: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub source: PathBuf,
    #[serde(flatten)]
    pub squeezing: SqueezingReport,
    pub snl_raw: f64,
    pub calibration_from: &'static str,
    pub block_size: usize,
    pub n_blocks: usize,
    pub dropped_tail: usize,
    pub degenerate_blocks: Vec<usize>,
    pub hist_min_fit: Option<GaussianFit>,
    pub hist_max_fit: Option<GaussianFit>,
}

fn angular_distance_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

pub fn analyze(path: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let s = stream::read_stream(path)?;
    let cfg = &s.header.config;
    let (snl_raw, calibration_from) = match (opts.snl_raw, s.header.calibration) {
        (Some(v), _) => (v, "flag"),
        (None, Some(c)) => (c.snl_raw, "header"),
        (None, None) => {
            return Err(Error::MissingCalibration(format!(
                "{} carries no calibration; pass --snl",
                path.display()
            )))
        }
    };
    let v_elec_snu = match (opts.snl_raw, s.header.calibration) {
        (None, Some(c)) => c.v_elec_raw / c.snl_raw,
        _ => cfg.detection.v_elec,
    };
    let block_size = opts.block_size.unwrap_or(cfg.scan.block_size);
    let blocks = block_variances(&s.records, block_size, snl_raw)?;
    let mut squeezing = extremal_variances(&blocks.traces, if opts.subtract_elec { v_elec_snu } else { 0.0 })?;
    if blocks.dropped_tail > 0 {
        squeezing
            .flags
            .push(format!("trailing partial block of {} records dropped", blocks.dropped_tail));
    }
    let eta = overall_efficiency(&cfg.detection);
    squeezing.eta_used = Some(eta);
    if !cfg.source.signal_blocked {
        let (g_amp, g_deamp) = cfg.dopa.model()?.effective_gains();
        squeezing.inferred_from_gains = Some(InferredLevels::compute(
            Measured::exact(g_amp),
            Measured::exact(g_deamp),
            Measured::exact(eta),
        )?);
    }

    let (theta_min, theta_max) = match &squeezing.sinusoid {
        Some(fit) => (fit.theta_min, fit.theta_max),
        None => (
            blocks.traces[squeezing.block_extremes.min_block].phase_mid,
            blocks.traces[squeezing.block_extremes.max_block].phase_mid,
        ),
    };
    let scale = snl_raw.sqrt();
    let select = |theta: f64| -> Vec<f64> {
        s.records
            .iter()
            .filter(|r| angular_distance_mod_pi(r.lo_phase, theta) <= opts.hist_window_rad)
            .map(|r| r.value / scale)
            .collect()
    };
    let sq = select(theta_min);
    let anti = select(theta_max);
    let half = 5.0 * crate::estimators::from_db(squeezing.v_max_db).sqrt();
    let h_min = histogram(&sq, opts.n_bins, -half, half)?;
    let h_max = histogram(&anti, opts.n_bins, -half, half)?;
    let fit_or_flag = |samples: &[f64], label: &str, flags: &mut Vec<String>| match gaussian_fit(samples) {
        Ok(f) => Some(f),
        Err(e) => {
            flags.push(format!("{label} histogram fit unavailable: {e}"));
            None
        }
    };
    let hist_min_fit = fit_or_flag(&sq, "squeezed", &mut squeezing.flags);
    let hist_max_fit = fit_or_flag(&anti, "anti-squeezed", &mut squeezing.flags);

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    tables::write_trace_csv(&opts.out_dir.join(TRACE_FILE), &blocks.traces)?;
    tables::write_hist_csv(&opts.out_dir.join(HIST_MIN_FILE), &h_min)?;
    tables::write_hist_csv(&opts.out_dir.join(HIST_MAX_FILE), &h_max)?;

    let report = AnalysisReport {
        source: path.to_owned(),
        degenerate_blocks: blocks.degenerate_blocks(),
        squeezing,
        snl_raw,
        calibration_from,
        block_size,
        n_blocks: blocks.traces.len(),
        dropped_tail: blocks.dropped_tail,
        hist_min_fit,
        hist_max_fit,
    };
    write_json(&opts.out_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct FitGainOptions {
    pub fit_mu: bool,
    pub max_pump_mw: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitGainReport {
    pub source: PathBuf,
    pub rows_read: usize,
    pub rows_filtered: usize,
    pub max_pump_mw: Option<f64>,
    #[serde(flatten)]
    pub fit: GainFit,
    /// Model `g_amp·g_deamp` at the highest pump power in the file; above 1
    /// when the deamplification floor is active.
    pub gain_product_at_max_pump: f64,
}

pub fn fit_gain(path: &Path, opts: &FitGainOptions) -> Result<FitGainReport> {
    let points = tables::read_gain_csv(path)?;
    let fit = fit_gain_curve(
        &points,
        &FitOptions {
            fit_mu: opts.fit_mu,
            max_pump_mw: opts.max_pump_mw,
            ..Default::default()
        },
    )?;
    let p_max = points.iter().map(|p| p.p_pump_mw).fold(0.0, f64::max);
    let n = 101;
    let curve: Vec<(f64, f64, f64)> = (0..n)
        .map(|k| {
            let p = p_max * k as f64 / (n - 1) as f64;
            let (a, d) = fit.model(p).effective_gains();
            (p, a, d)
        })
        .collect();
    let (a, d) = fit.model(p_max).effective_gains();
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    tables::write_model_curve(&opts.out_dir.join(GAIN_MODEL_FILE), &curve)?;
    let report = FitGainReport {
        source: path.to_owned(),
        rows_read: points.len(),
        rows_filtered: fit.points_filtered,
        max_pump_mw: opts.max_pump_mw,
        fit,
        gain_product_at_max_pump: a * d,
    };
    write_json(&opts.out_dir.join(FIT_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    pub g_amp: Measured,
    pub g_deamp: Measured,
    pub eta_t: f64,
    pub eta_h: f64,
    pub eta_d: f64,
    pub sigma_eta: f64,
    pub plane_wave_check: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferReport {
    pub eta: f64,
    pub sigma_eta: f64,
    #[serde(flatten)]
    pub levels: InferredLevels,
    pub warnings: Vec<String>,
}

pub fn infer(opts: &InferOptions) -> Result<InferReport> {
    let chain = homodyne::DetectionChain {
        eta_t: opts.eta_t,
        eta_h: opts.eta_h,
        eta_d: opts.eta_d,
        ..Default::default()
    };
    chain.validate()?;
    let eta = overall_efficiency(&chain);
    let mut warnings = Vec::new();
    if opts.plane_wave_check {
        if opts.g_deamp.value > 1.0 {
            warnings.push("deamplification gain exceeds unity".to_owned());
        }
        if opts.g_amp.value < 1.0 {
            warnings.push("amplification gain is below unity".to_owned());
        }
        if opts.g_amp.value * opts.g_deamp.value < 1.0 - 1e-9 {
            warnings.push("gain product is below the plane-wave bound g_amp·g_deamp = 1".to_owned());
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let levels = InferredLevels::compute(opts.g_amp, opts.g_deamp, Measured::new(eta, opts.sigma_eta))?;
    Ok(InferReport {
        eta,
        sigma_eta: opts.sigma_eta,
        levels,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub enum CalibrationInput {
    Pairs(PathBuf),
    /// Vacuum-input streams, one per LO level; the level is read from each
    /// header.
    Streams(Vec<PathBuf>),
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub points: Vec<(f64, f64)>,
    #[serde(flatten)]
    pub calibration: ShotNoiseCalibration,
    pub shot_to_electronic_db: Option<f64>,
    pub threshold_db: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

pub fn calibrate(input: &CalibrationInput, fit_intercept: bool, out_dir: Option<&Path>) -> Result<CalibrationReport> {
    let mut warnings = Vec::new();
    let levels = match input {
        CalibrationInput::Pairs(p) => tables::read_pairs_csv(p)?,
        CalibrationInput::Streams(paths) => {
            let mut out = Vec::with_capacity(paths.len());
            for p in paths {
                let s = stream::read_stream(p)?;
                if !s.header.config.source.signal_blocked {
                    warnings.push(format!("{} was recorded with the signal unblocked", p.display()));
                }
                let values: Vec<f64> = s.records.iter().map(|r| r.value).collect();
                if values.len() < 2 {
                    return Err(Error::InsufficientData(format!("{}: fewer than 2 records", p.display())));
                }
                out.push((s.header.config.detection.n_lo, sample_variance(&values)));
            }
            out
        }
    };
    for &(n, _) in &levels {
        if n > LO_LINEARITY_CEILING {
            warnings.push(format!(
                "LO level {n:e} is above the verified linearity ceiling of {LO_LINEARITY_CEILING:e} photons per pulse"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let calibration = calibrate_from_pairs(&levels, None, fit_intercept)?;
    let ratio = calibration.shot_to_electronic_db();
    let report = CalibrationReport {
        points: levels,
        calibration,
        shot_to_electronic_db: ratio,
        threshold_db: SHOT_TO_ELEC_THRESHOLD_DB,
        pass: ratio.is_none_or(|r| r >= SHOT_TO_ELEC_THRESHOLD_DB),
        warnings,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(CALIBRATION_FILE), &report)?;
    }
    Ok(report)
}
