use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::{db_sigma, to_db, InferredLevels, VarianceTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DbValue {
    pub snu: f64,
    pub sigma_snu: f64,
    pub db: f64,
    pub sigma_db: f64,
}

impl DbValue {
    fn new(snu: f64, sigma_snu: f64) -> Result<Self> {
        Ok(Self {
            snu,
            sigma_snu,
            db: to_db(snu)?,
            sigma_db: db_sigma(snu, sigma_snu),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// `a ∓ |b|` from a least-squares fit of `V(θ) = a + b·cos(2θ - c)`.
    SinusoidFit,
    /// Smallest and largest single block.
    BlockExtremes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    /// `c` in `cos(2θ - c)`.
    pub phase: f64,
    /// LO angle of the quiet quadrature, in `[0, π)`.
    pub theta_min: f64,
    pub theta_max: f64,
    pub min: DbValue,
    pub max: DbValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockExtremes {
    pub min_block: usize,
    pub max_block: usize,
    pub min: DbValue,
    pub max: DbValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqueezingReport {
    /// Headline values, from `method`.
    pub v_min_db: f64,
    pub v_min_sigma_db: f64,
    pub v_max_db: f64,
    pub v_max_sigma_db: f64,
    pub method: EstimateMethod,
    pub block_extremes: BlockExtremes,
    pub sinusoid: Option<SinusoidFit>,
    pub blocks_used: usize,
    pub eta_used: Option<f64>,
    pub elec_correction: bool,
    pub elec_subtracted_snu: f64,
    pub inferred_from_gains: Option<InferredLevels>,
    pub flags: Vec<String>,
}

fn fit_sinusoid(traces: &[(f64, f64, f64)]) -> Result<SinusoidFit> {
    let design = |theta: f64| Vector3::new(1.0, (2.0 * theta).cos(), (2.0 * theta).sin());
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for &(theta, v, _) in traces {
        let x = design(theta);
        xtx += x * x.transpose();
        xty += x * v;
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular design in sinusoid fit".into()))?;
    let beta = inv * xty;
    // sandwich covariance with the per-block sampling variances
    let mut meat = Matrix3::zeros();
    for &(theta, _, se) in traces {
        let x = design(theta);
        meat += x * x.transpose() * (se * se);
    }
    let cov = inv * meat * inv;

    let (a, b1, b2) = (beta[0], beta[1], beta[2]);
    let amp = b1.hypot(b2);
    let grad_amp = if amp > 0.0 {
        Vector3::new(0.0, b1 / amp, b2 / amp)
    } else {
        Vector3::zeros()
    };
    let e0 = Vector3::new(1.0, 0.0, 0.0);
    let g_min = e0 - grad_amp;
    let g_max = e0 + grad_amp;
    let s_min = (g_min.transpose() * cov * g_min)[(0, 0)].max(0.0).sqrt();
    let s_max = (g_max.transpose() * cov * g_max)[(0, 0)].max(0.0).sqrt();
    let c = b2.atan2(b1);
    Ok(SinusoidFit {
        offset: a,
        amplitude: amp,
        phase: c,
        theta_min: ((c + PI) / 2.0).rem_euclid(PI),
        theta_max: (c / 2.0).rem_euclid(PI),
        min: DbValue::new(a - amp, s_min)?,
        max: DbValue::new(a + amp, s_max)?,
    })
}

/// Extremal quadrature variances of a block trace, optionally after
/// subtracting an electronic-noise variance `elec_subtract_snu`.
///
/// Both the raw min/max block and the sinusoid-fit estimates are computed;
/// the fit is the headline whenever the blocks span more than π of LO phase.
pub fn extremal_variances(trace: &[VarianceTrace], elec_subtract_snu: f64) -> Result<SqueezingReport> {
    if !(elec_subtract_snu.is_finite() && elec_subtract_snu >= 0.0) {
        return Err(Error::param("elec_subtract_snu", "must be >= 0"));
    }
    let mut flags = Vec::new();
    let usable: Vec<&VarianceTrace> = trace.iter().filter(|t| !t.degenerate).collect();
    if usable.len() < trace.len() {
        flags.push(format!("{} degenerate blocks excluded", trace.len() - usable.len()));
    }
    if usable.is_empty() {
        return Err(Error::InsufficientData("no usable variance blocks".into()));
    }
    let points: Vec<(f64, f64, f64)> = usable
        .iter()
        .map(|t| (t.phase_mid, t.variance_snu - elec_subtract_snu, t.stderr_snu))
        .collect();
    if let Some(bad) = points.iter().position(|p| p.1 <= 0.0) {
        return Err(Error::Degenerate(format!(
            "block {} variance is not positive after electronic-noise subtraction",
            usable[bad].block_index
        )));
    }

    let (imin, pmin) = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let (imax, pmax) = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let block_extremes = BlockExtremes {
        min_block: usable[imin].block_index,
        max_block: usable[imax].block_index,
        min: DbValue::new(pmin.1, pmin.2)?,
        max: DbValue::new(pmax.1, pmax.2)?,
    };

    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let sinusoid = if points.len() >= 3 && hi - lo > PI {
        match fit_sinusoid(&points) {
            Ok(fit) => Some(fit),
            Err(e) => {
                flags.push(format!("sinusoid fit failed: {e}"));
                None
            }
        }
    } else {
        flags.push(format!(
            "insufficient phase coverage for sinusoid fit ({} blocks spanning {:.3} rad); using block extremes",
            points.len(),
            hi - lo
        ));
        None
    };

    let (method, min, max) = match &sinusoid {
        Some(fit) => (EstimateMethod::SinusoidFit, fit.min, fit.max),
        None => (EstimateMethod::BlockExtremes, block_extremes.min, block_extremes.max),
    };
    Ok(SqueezingReport {
        v_min_db: min.db,
        v_min_sigma_db: min.sigma_db,
        v_max_db: max.db,
        v_max_sigma_db: max.sigma_db,
        method,
        block_extremes,
        sinusoid,
        blocks_used: points.len(),
        eta_used: None,
        elec_correction: elec_subtract_snu > 0.0,
        elec_subtracted_snu: elec_subtract_snu,
        inferred_from_gains: None,
        flags,
    })
}
