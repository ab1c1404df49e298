use serde::Serialize;

use super::{to_db, DB_PER_NEPER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InferredLevels {
    pub db_squeezed: f64,
    pub db_antisqueezed: f64,
    pub sigma_db_squeezed: f64,
    pub sigma_db_antisqueezed: f64,
}

fn check(g_amp: f64, g_deamp: f64, eta: f64) -> Result<()> {
    if !(g_amp.is_finite() && g_amp > 0.0) {
        return Err(Error::param("g_amp", format!("must be > 0, got {g_amp}")));
    }
    if !(g_deamp.is_finite() && g_deamp > 0.0) {
        return Err(Error::param("g_deamp", format!("must be > 0, got {g_deamp}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Squeezing levels expected after a loss `eta` from measured probe gains.
/// Returns `(dB squeezed, dB anti-squeezed)`.
pub fn infer_squeezing_from_gains(g_amp: f64, g_deamp: f64, eta: f64) -> Result<(f64, f64)> {
    check(g_amp, g_deamp, eta)?;
    Ok((to_db(eta * g_deamp + 1.0 - eta)?, to_db(eta * g_amp + 1.0 - eta)?))
}

/// Analytic Jacobian of [`infer_squeezing_from_gains`]. Rows are (squeezed,
/// anti-squeezed), columns `(g_amp, g_deamp, eta)`.
pub fn inference_jacobian(g_amp: f64, g_deamp: f64, eta: f64) -> Result<[[f64; 3]; 2]> {
    check(g_amp, g_deamp, eta)?;
    let vs = eta * g_deamp + 1.0 - eta;
    let va = eta * g_amp + 1.0 - eta;
    Ok([
        [0.0, DB_PER_NEPER * eta / vs, DB_PER_NEPER * (g_deamp - 1.0) / vs],
        [DB_PER_NEPER * eta / va, 0.0, DB_PER_NEPER * (g_amp - 1.0) / va],
    ])
}

/// First-order Gaussian propagation of independent uncertainties. Returns
/// `(σ_dB squeezed, σ_dB anti-squeezed)`.
pub fn propagate_inference_uncertainty(g_amp: Measured, g_deamp: Measured, eta: Measured) -> Result<(f64, f64)> {
    for (name, s) in [("sigma_g_amp", g_amp.sigma), ("sigma_g_deamp", g_deamp.sigma), ("sigma_eta", eta.sigma)] {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::param(name, format!("uncertainty must be >= 0, got {s}")));
        }
    }
    let jac = inference_jacobian(g_amp.value, g_deamp.value, eta.value)?;
    let sig = [g_amp.sigma, g_deamp.sigma, eta.sigma];
    let prop = |row: &[f64; 3]| row.iter().zip(&sig).map(|(j, s)| (j * s).powi(2)).sum::<f64>().sqrt();
    Ok((prop(&jac[0]), prop(&jac[1])))
}

impl InferredLevels {
    pub fn compute(g_amp: Measured, g_deamp: Measured, eta: Measured) -> Result<Self> {
        let (db_squeezed, db_antisqueezed) = infer_squeezing_from_gains(g_amp.value, g_deamp.value, eta.value)?;
        let (s, a) = propagate_inference_uncertainty(g_amp, g_deamp, eta)?;
        Ok(Self {
            db_squeezed,
            db_antisqueezed,
            sigma_db_squeezed: s,
            sigma_db_antisqueezed: a,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quoted_inferred_levels() {
        let (s, a) = infer_squeezing_from_gains(2.51, 0.53, 0.76).unwrap();
        assert_abs_diff_eq!(s, -1.92, epsilon = 0.005);
        assert_abs_diff_eq!(a, 3.32, epsilon = 0.005);
    }

    #[test]
    fn lossless_symmetric_and_trivial() {
        let g = 3.7;
        let (s, a) = infer_squeezing_from_gains(g, 1.0 / g, 1.0).unwrap();
        assert_abs_diff_eq!(s, -10.0 * g.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, 10.0 * g.log10(), epsilon = 1e-12);
        for eta in [0.0, 0.3, 1.0] {
            let (s, a) = infer_squeezing_from_gains(1.0, 1.0, eta).unwrap();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        }
        assert!(infer_squeezing_from_gains(2.0, 0.5, 1.1).is_err());
        assert!(infer_squeezing_from_gains(-2.0, 0.5, 0.5).is_err());
        assert!(infer_squeezing_from_gains(2.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn zero_sigma_gives_zero() {
        let out = propagate_inference_uncertainty(Measured::exact(2.51), Measured::exact(0.53), Measured::exact(0.76))
            .unwrap();
        assert_eq!(out, (0.0, 0.0));
    }

    #[test]
    fn eta_only_scales_linearly() {
        let one = propagate_inference_uncertainty(Measured::exact(2.51), Measured::exact(0.53), Measured::new(0.76, 0.01))
            .unwrap();
        let two = propagate_inference_uncertainty(Measured::exact(2.51), Measured::exact(0.53), Measured::new(0.76, 0.02))
            .unwrap();
        assert_abs_diff_eq!(two.0, 2.0 * one.0, epsilon = 1e-12);
        assert_abs_diff_eq!(two.1, 2.0 * one.1, epsilon = 1e-12);

        // oracle: finite-difference Jacobian times sigma
        let h = 1e-6;
        let f = |eta: f64| infer_squeezing_from_gains(2.51, 0.53, eta).unwrap();
        let ds = (f(0.76 + h).0 - f(0.76 - h).0) / (2.0 * h);
        assert_abs_diff_eq!(one.0, ds.abs() * 0.01, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn inference_closure(r in 0.0f64..3.0) {
            let g = (2.0 * r).exp();
            let (s, a) = infer_squeezing_from_gains(g, (-2.0 * r).exp(), 1.0).unwrap();
            let expect = to_db(g).unwrap();
            prop_assert!((s + expect).abs() <= 1e-12 * expect.abs().max(1.0));
            prop_assert!((a - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }

        #[test]
        fn jacobian_matches_finite_differences(ga in 1.0f64..5.0, gd in 0.1f64..1.0, eta in 0.2f64..0.99) {
            let jac = inference_jacobian(ga, gd, eta).unwrap();
            let h = 1e-6;
            let x = [ga, gd, eta];
            for c in 0..3 {
                let mut up = x;
                let mut dn = x;
                up[c] += h;
                dn[c] -= h;
                let fu = infer_squeezing_from_gains(up[0], up[1], up[2]).unwrap();
                let fd = infer_squeezing_from_gains(dn[0], dn[1], dn[2]).unwrap();
                let fdiff = [(fu.0 - fd.0) / (2.0 * h), (fu.1 - fd.1) / (2.0 * h)];
                for r in 0..2 {
                    let scale = jac[r][c].abs().max(1.0);
                    prop_assert!((jac[r][c] - fdiff[r]).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
