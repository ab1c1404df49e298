//! Estimators from raw pulse records to squeezing figures.
//!
//! Everything here works in shot-noise units except the calibration step,
//! which is where raw values are converted (exactly once).
//!
//! Summation order is fixed for reproducible output: left to right inside a
//! block, pairwise across blocks.

mod blocks;
mod calibration;
mod distribution;
mod extremal;
mod inference;

pub use blocks::{block_variances, BlockVariances, VarianceTrace};
pub use calibration::{calibrate_from_pairs, calibrate_from_vacuum, ShotNoiseCalibration};
pub use distribution::{gaussian_fit, histogram, GaussianFit, Histogram, KS_COEFF_1PCT};
pub use extremal::{extremal_variances, DbValue, EstimateMethod, SinusoidFit, SqueezingReport};
pub use inference::{
    inference_jacobian, infer_squeezing_from_gains, propagate_inference_uncertainty, InferredLevels, Measured,
};

use crate::error::{Error, Result};

const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

/// `10·log10(v)` relative to the shot-noise level.
pub fn to_db(v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("variance", format!("dB conversion needs v > 0, got {v}")));
    }
    Ok(10.0 * v.log10())
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// First-order dB uncertainty of a variance `v ± sigma`.
pub fn db_sigma(v: f64, sigma: f64) -> f64 {
    DB_PER_NEPER * sigma / v
}

/// Standard error of an unbiased Gaussian sample variance, `v·√(2/(n-1))`.
pub fn variance_stderr(v: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("variance standard error needs n >= 2, got {n}")));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("variance", format!("must be > 0, got {v}")));
    }
    Ok(v * (2.0 / (n as f64 - 1.0)).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased (n-1) sample variance, two-pass. NaN for fewer than 2 values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    ss / (values.len() as f64 - 1.0)
}

pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
