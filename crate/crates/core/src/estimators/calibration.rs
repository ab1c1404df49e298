use serde::Serialize;

use super::sample_variance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShotNoiseCalibration {
    /// Raw variance per LO photon.
    pub slope: f64,
    /// Raw variance at zero LO: the electronic floor.
    pub intercept: f64,
    pub r_squared: f64,
    /// LO level at which `snl_raw` applies.
    pub n_lo_ref: f64,
    /// Raw variance of one SNU at `n_lo_ref`.
    pub snl_raw: f64,
    pub v_elec_raw: f64,
    pub levels: usize,
}

impl ShotNoiseCalibration {
    /// Shot-noise to electronic-noise variance ratio at the reference level,
    /// dB. `None` when the fitted floor is not positive.
    pub fn shot_to_electronic_db(&self) -> Option<f64> {
        (self.v_elec_raw > 0.0).then(|| 10.0 * (self.snl_raw / self.v_elec_raw).log10())
    }

    pub fn v_elec_snu(&self) -> f64 {
        self.v_elec_raw / self.snl_raw
    }
}

/// Ordinary least squares of raw variance against LO photon number.
///
/// `n_lo_ref` defaults to the highest level. Without an intercept the line is
/// forced through the origin and a single level suffices.
pub fn calibrate_from_pairs(
    pairs: &[(f64, f64)],
    n_lo_ref: Option<f64>,
    fit_intercept: bool,
) -> Result<ShotNoiseCalibration> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no calibration levels".into()));
    }
    for &(n, v) in pairs {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("n_lo", format!("LO level must be > 0, got {n}")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param("variance", format!("raw variance must be >= 0, got {v}")));
        }
    }
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();

    let (slope, intercept) = if fit_intercept {
        if pairs.len() < 2 || sxx <= f64::EPSILON * mx * mx * k {
            return Err(Error::Degenerate(
                "slope and intercept need at least 2 distinct LO levels (use --no-intercept for one level)".into(),
            ));
        }
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    } else {
        let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
        let sxx0: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
        (sxy / sxx0, 0.0)
    };
    if slope <= 0.0 {
        return Err(Error::Degenerate(format!("non-positive shot-noise slope {slope:e}")));
    }
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let n_ref = n_lo_ref.unwrap_or_else(|| pairs.iter().map(|p| p.0).fold(f64::MIN, f64::max));
    Ok(ShotNoiseCalibration {
        slope,
        intercept,
        r_squared,
        n_lo_ref: n_ref,
        snl_raw: slope * n_ref,
        v_elec_raw: intercept,
        levels: pairs.len(),
    })
}

/// Single-level calibration from a vacuum-input stream: the shot-noise raw
/// variance is the sample variance minus the supplied electronic floor.
pub fn calibrate_from_vacuum(values: &[f64], v_elec_raw: f64, n_lo: f64) -> Result<ShotNoiseCalibration> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("vacuum calibration needs at least 2 samples".into()));
    }
    let total = sample_variance(values);
    let snl_raw = total - v_elec_raw;
    if snl_raw.is_nan() || snl_raw <= 0.0 {
        return Err(Error::Degenerate(format!(
            "vacuum variance {total:e} does not exceed the electronic floor {v_elec_raw:e}"
        )));
    }
    Ok(ShotNoiseCalibration {
        slope: snl_raw / n_lo,
        intercept: v_elec_raw,
        r_squared: f64::NAN,
        n_lo_ref: n_lo,
        snl_raw,
        v_elec_raw,
        levels: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{shot_noise_scan, DetectionChain};
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let pairs: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 9.0].iter().map(|&n| (n, 2.0 * n + 5.0)).collect();
        let cal = calibrate_from_pairs(&pairs, None, true).unwrap();
        assert_abs_diff_eq!(cal.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cal.intercept, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cal.r_squared, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cal.snl_raw, 18.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_design() {
        let pairs = [(1e8, 1.0), (1e8, 1.1)];
        assert!(matches!(calibrate_from_pairs(&pairs, None, true), Err(Error::Degenerate(_))));
        assert!(matches!(calibrate_from_pairs(&pairs[..1], None, true), Err(Error::Degenerate(_))));
        let cal = calibrate_from_pairs(&pairs[..1], None, false).unwrap();
        assert_abs_diff_eq!(cal.slope, 1e-8, epsilon = 1e-20);
        assert!(calibrate_from_pairs(&[], None, false).is_err());
    }

    #[test]
    fn simulated_scan_is_linear() {
        let chain = DetectionChain {
            n_lo: 2.5e8,
            ..Default::default()
        };
        let pairs = shot_noise_scan(&chain, &[1e7, 5e7, 1e8, 2.5e8], 100_000, 8).unwrap();
        let cal = calibrate_from_pairs(&pairs, None, true).unwrap();
        assert!(cal.r_squared > 0.999, "R² = {}", cal.r_squared);
    }

    #[test]
    fn floor_recovered_within_3_sigma() {
        let chain = DetectionChain {
            n_lo: 2.5e8,
            v_elec: 0.0794,
            ..Default::default()
        };
        let levels = [1e7, 5e7, 1e8, 2.5e8];
        let n = 100_000;
        let pairs = shot_noise_scan(&chain, &levels, n, 12).unwrap();
        let cal = calibrate_from_pairs(&pairs, None, true).unwrap();
        // oracle: OLS intercept variance from per-level variance stderr
        let k = levels.len() as f64;
        let mx = levels.iter().sum::<f64>() / k;
        let sxx: f64 = levels.iter().map(|x| (x - mx).powi(2)).sum();
        let var_int: f64 = levels
            .iter()
            .map(|&x| {
                let w = 1.0 / k - mx * (x - mx) / sxx;
                let v = x / 2.5e8 + 0.0794;
                w * w * 2.0 * v * v / (n as f64 - 1.0)
            })
            .sum();
        assert!((cal.intercept - 0.0794).abs() < 3.0 * var_int.sqrt());
        let ratio = cal.intercept / (cal.slope * 2.5e8);
        assert!((ratio / 0.0794 - 1.0).abs() < 0.1);
    }

    #[test]
    fn vacuum_single_level() {
        let values: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.5 } else { -1.5 }).collect();
        let cal = calibrate_from_vacuum(&values, 0.25, 1e8).unwrap();
        assert_abs_diff_eq!(cal.snl_raw, 2.25 * 1000.0 / 999.0 - 0.25, epsilon = 1e-12);
        assert!(calibrate_from_vacuum(&values, 10.0, 1e8).is_err());
    }
}
