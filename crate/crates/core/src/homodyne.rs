//! Pulse-by-pulse time-domain homodyne detection.
//!
//! Each pulse yields one Gaussian draw of the quadrature selected by the LO
//! phase, after the detection chain: loss `η = η_T·η_H²·η_D`, additive
//! electronic noise `v_elec` (SNU) and a raw-unit scale `gain_raw`
//! (raw units per √SNU at the chain's LO level).
//!
//! Random streams are chunked: pulse `i` belongs to chunk `i / CHUNK_LEN`, and
//! chunk `k` draws from ChaCha20 seeded with `seed_from_u64(seed)` on stream
//! `k`. Serial and parallel generation therefore produce identical records.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::sample_variance;
use crate::gaussian::{self, GaussianState};

/// Pulses per independently seeded chunk.
pub const CHUNK_LEN: u64 = 65_536;

/// Identifier written into stream headers.
pub const RNG_ID: &str = "chacha20-seed_from_u64+stream=chunk_index;chunk_len=65536;normal=rand_distr-0.5-StandardNormal";

/// Highest LO level with verified shot-noise linearity, photons per pulse.
pub const LO_LINEARITY_CEILING: f64 = 2.5e8;

/// Stream offset for shot-noise calibration levels, keeping them disjoint
/// from pulse-train chunks.
const SCAN_STREAM_BASE: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionChain {
    pub eta_t: f64,
    pub eta_h: f64,
    pub eta_d: f64,
    #[serde(rename = "v_elec_snu")]
    pub v_elec: f64,
    pub n_lo: f64,
    pub gain_raw: f64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        Self {
            eta_t: 0.92,
            eta_h: 0.935,
            eta_d: 0.945,
            v_elec: 0.0073,
            n_lo: 1.0e8,
            gain_raw: 1.0,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_t", self.eta_t), ("eta_h", self.eta_h), ("eta_d", self.eta_d)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("efficiency must lie in [0, 1], got {v}")));
            }
        }
        if !(self.v_elec.is_finite() && self.v_elec >= 0.0) {
            return Err(Error::param("v_elec_snu", format!("must be >= 0, got {}", self.v_elec)));
        }
        if !(self.n_lo.is_finite() && self.n_lo >= 0.0) {
            return Err(Error::param("n_lo", format!("must be >= 0, got {}", self.n_lo)));
        }
        if !(self.gain_raw.is_finite() && self.gain_raw > 0.0) {
            return Err(Error::param("gain_raw", format!("must be > 0, got {}", self.gain_raw)));
        }
        Ok(())
    }

    /// The same detector operated at LO level `n_lo`: shot noise in raw units
    /// scales with `n_lo`, the electronic floor stays fixed in raw units.
    pub fn at_lo_level(&self, n_lo: f64) -> Result<Self> {
        if !(n_lo.is_finite() && n_lo > 0.0) || self.n_lo <= 0.0 {
            return Err(Error::param("n_lo", "LO levels must be > 0"));
        }
        let ratio = n_lo / self.n_lo;
        Ok(Self {
            n_lo,
            gain_raw: self.gain_raw * ratio.sqrt(),
            v_elec: self.v_elec / ratio,
            ..*self
        })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.n_lo > LO_LINEARITY_CEILING {
            w.push(format!(
                "LO level {:e} photons/pulse exceeds the verified linearity ceiling of {:e}",
                self.n_lo, LO_LINEARITY_CEILING
            ));
        }
        w
    }
}

pub fn overall_efficiency(chain: &DetectionChain) -> f64 {
    chain.eta_t * chain.eta_h * chain.eta_h * chain.eta_d
}

/// Variance seen after the detection chain for a signal variance `v_signal`
/// (SNU): `η·v + (1-η)`, plus `v_elec` when requested.
pub fn measured_variance(v_signal: f64, chain: &DetectionChain, include_elec: bool) -> f64 {
    let eta = overall_efficiency(chain);
    let v = eta * v_signal + (1.0 - eta);
    if include_elec {
        v + chain.v_elec
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub n_pulses: u64,
    pub block_size: usize,
    #[serde(rename = "phase_start_rad")]
    pub phase_start: f64,
    #[serde(rename = "phase_end_rad")]
    pub phase_end: f64,
    pub rep_rate_hz: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            n_pulses: 1_000_000,
            block_size: 2500,
            phase_start: 0.0,
            phase_end: TAU,
            rep_rate_hz: 790_000.0,
            seed: 1,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses < 1 {
            return Err(Error::param("n_pulses", "must be >= 1"));
        }
        if self.block_size < 2 {
            return Err(Error::param("block_size", "must be >= 2"));
        }
        if !(self.phase_start.is_finite() && self.phase_end.is_finite()) {
            return Err(Error::param("phase", "phase ramp must be finite"));
        }
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::param("rep_rate_hz", "must be > 0"));
        }
        Ok(())
    }
}

/// Descriptive metadata carried through file headers. Never used in any
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub wavelength_nm: f64,
    pub pulse_fwhm_fs: f64,
    pub crystal_len_um: f64,
    pub crystal_temp_c: f64,
    pub waist_um: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 846.0,
            pulse_fwhm_fs: 150.0,
            crystal_len_um: 100.0,
            crystal_temp_c: -14.0,
            waist_um: 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseRecord {
    pub index: u64,
    pub lo_phase: f64,
    /// Raw quadrature sample.
    pub value: f64,
}

/// LO phase of pulse `i` on the linear ramp.
pub fn phase_at(i: u64, cfg: &ScanConfig) -> Result<f64> {
    if i >= cfg.n_pulses {
        return Err(Error::param(
            "index",
            format!("pulse {i} out of range for {} pulses", cfg.n_pulses),
        ));
    }
    if i == 0 || cfg.n_pulses == 1 {
        return Ok(cfg.phase_start);
    }
    if i == cfg.n_pulses - 1 {
        return Ok(cfg.phase_end);
    }
    let frac = i as f64 / (cfg.n_pulses - 1) as f64;
    Ok(cfg.phase_start + (cfg.phase_end - cfg.phase_start) * frac)
}

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

pub fn n_chunks(cfg: &ScanConfig) -> u64 {
    cfg.n_pulses.div_ceil(CHUNK_LEN)
}

fn check_inputs(chain: &DetectionChain, cfg: &ScanConfig) -> Result<()> {
    chain.validate()?;
    cfg.validate()?;
    if chain.n_lo <= 0.0 {
        return Err(Error::param("n_lo", "LO must be on (n_lo > 0) to sample a pulse train"));
    }
    Ok(())
}

/// Records of chunk `chunk` of the pulse train.
pub fn sample_chunk(
    state: &GaussianState,
    chain: &DetectionChain,
    cfg: &ScanConfig,
    chunk: u64,
) -> Result<Vec<PulseRecord>> {
    check_inputs(chain, cfg)?;
    let start = chunk * CHUNK_LEN;
    if start >= cfg.n_pulses {
        return Err(Error::param("chunk", format!("chunk {chunk} beyond end of stream")));
    }
    let end = (start + CHUNK_LEN).min(cfg.n_pulses);
    let eta = overall_efficiency(chain);
    let amp = eta.sqrt();
    let mut rng = chunk_rng(cfg.seed, chunk);
    let mut out = Vec::with_capacity((end - start) as usize);
    for i in start..end {
        let theta = phase_at(i, cfg)?;
        let var = eta * gaussian::quadrature_variance(state, theta) + (1.0 - eta) + chain.v_elec;
        let z: f64 = StandardNormal.sample(&mut rng);
        let value = chain.gain_raw * (amp * state.quadrature_mean(theta) + var.sqrt() * z);
        out.push(PulseRecord {
            index: i,
            lo_phase: theta,
            value,
        });
    }
    Ok(out)
}

/// Full pulse train, chunks generated in parallel.
pub fn sample_pulse_train(state: &GaussianState, chain: &DetectionChain, cfg: &ScanConfig) -> Result<Vec<PulseRecord>> {
    check_inputs(chain, cfg)?;
    let chunks: Vec<Vec<PulseRecord>> = (0..n_chunks(cfg))
        .into_par_iter()
        .map(|k| sample_chunk(state, chain, cfg, k))
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Same stream as [`sample_pulse_train`], generated on the calling thread.
pub fn sample_pulse_train_serial(
    state: &GaussianState,
    chain: &DetectionChain,
    cfg: &ScanConfig,
) -> Result<Vec<PulseRecord>> {
    check_inputs(chain, cfg)?;
    let mut out = Vec::with_capacity(cfg.n_pulses as usize);
    for k in 0..n_chunks(cfg) {
        out.extend(sample_chunk(state, chain, cfg, k)?);
    }
    Ok(out)
}

/// Vacuum-input variance at several LO levels, in raw units. The chain's own
/// `n_lo` is the reference level where one SNU equals `gain_raw²`; at level
/// `n` the raw variance is `gain_raw²·(n/n_ref + v_elec)`.
pub fn shot_noise_scan(
    chain: &DetectionChain,
    n_lo_list: &[f64],
    pulses_per_level: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    chain.validate()?;
    if n_lo_list.is_empty() {
        return Err(Error::InsufficientData("shot-noise scan needs at least one LO level".into()));
    }
    if pulses_per_level < 2 {
        return Err(Error::param("pulses_per_level", "must be >= 2"));
    }
    if chain.n_lo <= 0.0 {
        return Err(Error::param("n_lo", "reference LO level must be > 0"));
    }
    n_lo_list
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::param("n_lo", format!("LO level must be > 0, got {n}")));
            }
            let sigma = chain.gain_raw * (n / chain.n_lo + chain.v_elec).sqrt();
            let mut rng = chunk_rng(seed, SCAN_STREAM_BASE + k as u64);
            let samples: Vec<f64> = (0..pulses_per_level)
                .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            Ok((n, sample_variance(&samples)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dopa::DopaModel;
    use crate::gaussian::{apply_squeeze, vacuum, SqueezeParams};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fixed_phase(n: u64, theta: f64, seed: u64) -> ScanConfig {
        ScanConfig {
            n_pulses: n,
            phase_start: theta,
            phase_end: theta,
            seed,
            ..Default::default()
        }
    }

    fn values(r: &[PulseRecord]) -> Vec<f64> {
        r.iter().map(|p| p.value).collect()
    }

    #[test]
    fn efficiency_examples() {
        let quoted = DetectionChain::default();
        assert_abs_diff_eq!(overall_efficiency(&quoted), 0.7601, epsilon = 5e-5);
        let ideal = DetectionChain {
            eta_t: 1.0,
            eta_h: 1.0,
            eta_d: 1.0,
            ..quoted
        };
        assert_eq!(overall_efficiency(&ideal), 1.0);
        let no_vis = DetectionChain { eta_h: 1.0, ..quoted };
        assert_abs_diff_eq!(overall_efficiency(&no_vis), 0.92 * 0.945, epsilon = 1e-15);
        assert_abs_diff_eq!(overall_efficiency(&no_vis), 0.8694, epsilon = 1e-12);
    }

    #[test]
    fn measured_variance_examples() {
        let chain = DetectionChain {
            eta_t: 0.76,
            eta_h: 1.0,
            eta_d: 1.0,
            ..Default::default()
        };
        assert_abs_diff_eq!(measured_variance(0.53, &chain, false), 0.6428, epsilon = 1e-12);
        assert_abs_diff_eq!(measured_variance(2.51, &chain, false), 2.1476, epsilon = 1e-12);
        assert_abs_diff_eq!(measured_variance(1.0, &chain, false), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(measured_variance(1.0, &chain, true), 1.0073, epsilon = 1e-15);
    }

    #[test]
    fn invalid_chain_rejected() {
        let bad = DetectionChain {
            eta_h: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DetectionChain {
            v_elec: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn phase_ramp_endpoints() {
        let cfg = ScanConfig {
            n_pulses: 101,
            phase_start: 0.3,
            phase_end: 2.9,
            ..Default::default()
        };
        assert_eq!(phase_at(0, &cfg).unwrap(), 0.3);
        assert_eq!(phase_at(100, &cfg).unwrap(), 2.9);
        assert_abs_diff_eq!(phase_at(50, &cfg).unwrap(), 1.6, epsilon = 1e-15);
        assert!(phase_at(101, &cfg).is_err());
        let single = ScanConfig {
            n_pulses: 1,
            ..cfg
        };
        assert_eq!(phase_at(0, &single).unwrap(), 0.3);
    }

    #[test]
    fn record_count_and_indices() {
        let cfg = ScanConfig {
            n_pulses: 2 * CHUNK_LEN + 17,
            ..Default::default()
        };
        let recs = sample_pulse_train(&vacuum(), &DetectionChain::default(), &cfg).unwrap();
        assert_eq!(recs.len() as u64, cfg.n_pulses);
        assert!(recs.windows(2).all(|w| w[1].index == w[0].index + 1));
    }

    #[test]
    fn parallel_equals_serial() {
        let state = DopaModel::from_gains(2.51, 0.53, 1.0, 0.0).unwrap().output_state().unwrap();
        let cfg = ScanConfig {
            n_pulses: 3 * CHUNK_LEN + 5,
            seed: 99,
            ..Default::default()
        };
        let chain = DetectionChain::default();
        let a = sample_pulse_train(&state, &chain, &cfg).unwrap();
        let b = sample_pulse_train_serial(&state, &chain, &cfg).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.value.to_bits() == y.value.to_bits()
            && x.lo_phase.to_bits() == y.lo_phase.to_bits()));
        let c = sample_pulse_train(&state, &chain, &ScanConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a[0].value, c[0].value);
    }

    #[test]
    fn rejects_dark_lo() {
        let chain = DetectionChain {
            n_lo: 0.0,
            ..Default::default()
        };
        assert!(sample_pulse_train(&vacuum(), &chain, &ScanConfig::default()).is_err());
    }

    #[test]
    fn vacuum_calibration_identity() {
        let chain = DetectionChain {
            v_elec: 0.0,
            ..Default::default()
        };
        let n = 1_000_000;
        let cfg = ScanConfig {
            n_pulses: n,
            seed: 7,
            ..Default::default()
        };
        let v = sample_variance(&values(&sample_pulse_train(&vacuum(), &chain, &cfg).unwrap()));
        assert!((v - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "variance {v}");
    }

    #[test]
    fn calibration_identity_over_seeds() {
        let chain = DetectionChain {
            v_elec: 0.0,
            ..Default::default()
        };
        let n = 100_000u64;
        let bound = 4.0 * (2.0 / n as f64).sqrt();
        let inside = (0..200u64)
            .filter(|&seed| {
                let cfg = ScanConfig {
                    n_pulses: n,
                    seed,
                    ..Default::default()
                };
                let v = sample_variance(&values(&sample_pulse_train(&vacuum(), &chain, &cfg).unwrap()));
                (v - 1.0).abs() < bound
            })
            .count();
        assert!(inside >= 198, "{inside}/200 seeds inside");
    }

    #[test]
    fn operating_point_variances() {
        let state = DopaModel::from_gains(2.51, 0.53, 1.0, 0.0).unwrap().output_state().unwrap();
        let chain = DetectionChain::default();
        let sq = values(&sample_pulse_train(&state, &chain, &fixed_phase(1_000_000, 0.0, 3)).unwrap());
        let v = sample_variance(&sq);
        assert!((v - 0.650).abs() < 0.003, "squeezed variance {v}");
        assert!((10.0 * v.log10() + 1.87).abs() < 0.02);
        let anti = values(&sample_pulse_train(&state, &chain, &fixed_phase(1_000_000, FRAC_PI_2, 4)).unwrap());
        let v = sample_variance(&anti);
        assert!((v - 2.155).abs() < 0.01, "anti-squeezed variance {v}");
    }

    #[test]
    fn degradation_with_efficiency() {
        let state = apply_squeeze(&vacuum(), SqueezeParams::new(0.4, 0.0).unwrap());
        let v_min = gaussian::quadrature_variance(&state, 0.0);
        let mut last = 0.0;
        let mut last_sampled = 0.0;
        for eta_t in [1.0, 0.9, 0.7, 0.5, 0.3, 0.1] {
            let chain = DetectionChain {
                eta_t,
                v_elec: 0.0,
                ..Default::default()
            };
            let expect = measured_variance(v_min, &chain, false);
            assert!(expect >= last);
            last = expect;
            let s = sample_variance(&values(&sample_pulse_train(&state, &chain, &fixed_phase(200_000, 0.0, 11)).unwrap()));
            // same seed: draws are paired, only the scale changes
            assert!(s >= last_sampled);
            last_sampled = s;
        }
    }

    #[test]
    fn electronic_noise_additivity() {
        let state = apply_squeeze(&vacuum(), SqueezeParams::new(0.3, 0.0).unwrap());
        let quiet = DetectionChain {
            v_elec: 0.0,
            ..Default::default()
        };
        let noisy = DetectionChain {
            v_elec: 0.05,
            ..Default::default()
        };
        let cfg = fixed_phase(100_000, 0.0, 5);
        let a = sample_variance(&values(&sample_pulse_train(&state, &quiet, &cfg).unwrap()));
        let b = sample_variance(&values(&sample_pulse_train(&state, &noisy, &cfg).unwrap()));
        let n = cfg.n_pulses as f64;
        // paired draws: the difference is 0.05 times the sample variance of z
        let sigma = 0.05 * (2.0 / n).sqrt();
        assert!(((b - a) - 0.05).abs() < 3.0 * sigma, "difference {}", b - a);
    }

    #[test]
    fn phase_binned_scan_follows_model() {
        let state = DopaModel::from_gains(2.51, 0.53, 1.0, 0.2).unwrap().output_state().unwrap();
        let chain = DetectionChain::default();
        let cfg = ScanConfig {
            n_pulses: 400_000,
            phase_end: PI,
            seed: 21,
            ..Default::default()
        };
        let recs = sample_pulse_train(&state, &chain, &cfg).unwrap();
        let bins = 20;
        let per = recs.len() / bins;
        for b in 0..bins {
            let slice = &recs[b * per..(b + 1) * per];
            let v = sample_variance(&values(slice));
            let expect = slice
                .iter()
                .map(|p| measured_variance(gaussian::quadrature_variance(&state, p.lo_phase), &chain, true))
                .sum::<f64>()
                / per as f64;
            let se = expect * (2.0 / (per as f64 - 1.0)).sqrt();
            assert!((v - expect).abs() < 4.0 * se, "bin {b}: {v} vs {expect}");
        }
    }

    #[test]
    fn lo_level_rescaling() {
        let chain = DetectionChain {
            n_lo: 2.5e8,
            v_elec: 0.0794,
            gain_raw: 3.0,
            ..Default::default()
        };
        let low = chain.at_lo_level(1e7).unwrap();
        // electronic floor fixed in raw units
        assert_abs_diff_eq!(low.gain_raw.powi(2) * low.v_elec, 9.0 * 0.0794, epsilon = 1e-12);
        assert_abs_diff_eq!(low.gain_raw.powi(2), 9.0 * 1e7 / 2.5e8, epsilon = 1e-12);
        assert!(chain.at_lo_level(3e8).unwrap().warnings().len() == 1);
        assert!(chain.warnings().is_empty());
    }

    #[test]
    fn shot_noise_scan_proportional() {
        let chain = DetectionChain {
            v_elec: 0.0,
            n_lo: 1e8,
            ..Default::default()
        };
        let out = shot_noise_scan(&chain, &[5e7], 200_000, 3).unwrap();
        let expect = 0.5;
        assert!((out[0].1 - expect).abs() < 4.0 * expect * (2.0 / 200_000f64).sqrt());
        assert!(shot_noise_scan(&chain, &[], 10, 0).is_err());
        assert!(shot_noise_scan(&chain, &[-1.0], 10, 0).is_err());
    }
}
