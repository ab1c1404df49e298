use serde::Serialize;
use statrs::function::erf::erfc;

use super::{mean, sample_variance};
use crate::error::{Error, Result};

/// Asymptotic Kolmogorov-Smirnov coefficient at the 1% level: reject when
/// `D > 1.63/√N`.
pub const KS_COEFF_1PCT: f64 = 1.63;

const MIN_FIT_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Kolmogorov-Smirnov distance to the fitted Gaussian.
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
    /// `ks_statistic` is below the 1% critical value.
    pub consistent_1pct: bool,
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (std::f64::consts::TAU * var).sqrt()
}

pub fn gaussian_fit(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "Gaussian fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("samples", "non-finite sample"));
    }
    let m = mean(samples);
    let var = sample_variance(samples);
    if var <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x, m, sd);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0);
    let crit = KS_COEFF_1PCT / n.sqrt();
    Ok(GaussianFit {
        n: samples.len(),
        mean: m,
        variance: var,
        ks_statistic: ks,
        ks_critical_1pct: crit,
        consistent_1pct: ks < crit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Fitted Gaussian density scaled to expected counts per bin
    /// (sample count × bin width × pdf at the bin centre).
    pub model: Vec<f64>,
    pub in_range: u64,
    pub fit_mean: f64,
    pub fit_variance: f64,
}

/// Fixed-width histogram over `[lo, hi]` (right edge inclusive) with a
/// Gaussian overlay fitted to all samples.
pub fn histogram(samples: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if n_bins < 2 {
        return Err(Error::param("n_bins", "need at least 2 bins"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param("range", format!("invalid histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        if x >= lo && x <= hi {
            let k = (((x - lo) / width) as usize).min(n_bins - 1);
            counts[k] += 1;
        }
    }
    let in_range = counts.iter().sum();
    let (fit_mean, fit_variance) = if samples.len() >= 2 {
        (mean(samples), sample_variance(samples))
    } else {
        (f64::NAN, f64::NAN)
    };
    let model = if fit_variance > 0.0 {
        let scale = samples.len() as f64 * width;
        (0..n_bins)
            .map(|k| scale * normal_pdf(lo + width * (k as f64 + 0.5), fit_mean, fit_variance))
            .collect()
    } else {
        vec![0.0; n_bins]
    };
    Ok(Histogram {
        edges,
        counts,
        model,
        in_range,
        fit_mean,
        fit_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
    }

    #[test]
    fn ks_by_hand() {
        // oracle: D computed directly from the empirical CDF definition
        let s: Vec<f64> = (0..40).map(|i| (i as f64 - 19.5) / 10.0).collect();
        let fit = gaussian_fit(&s).unwrap();
        let sd = fit.variance.sqrt();
        let mut d: f64 = 0.0;
        for (i, &x) in s.iter().enumerate() {
            let f = normal_cdf(x, fit.mean, sd);
            d = d.max((f - i as f64 / 40.0).abs()).max((f - (i + 1) as f64 / 40.0).abs());
        }
        assert!((fit.ks_statistic - d).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_fit() {
        let n = 100_000;
        let sd = (2.0 / n as f64).sqrt();
        let (mut passes, mut close) = (0, 0);
        for seed in 0..20 {
            let fit = gaussian_fit(&normals(n, seed, 1.0)).unwrap();
            assert!((fit.variance - 1.0).abs() < 5.0 * sd);
            assert!((0.0..=1.0).contains(&fit.ks_statistic));
            if (fit.variance - 1.0).abs() < 0.01 {
                close += 1;
            }
            if fit.consistent_1pct {
                passes += 1;
            }
        }
        // 0.01 is 2.2 standard errors at this N
        assert!(close >= 18, "{close}/20 within 0.01");
        assert!(passes >= 19, "{passes}/20");
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(gaussian_fit(&[3.0; 50]), Err(Error::Degenerate(_))));
        assert!(matches!(gaussian_fit(&[1.0; 10]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn histogram_chi_square() {
        let n = 1_000_000;
        let s = normals(n, 4, 1.0);
        let h = histogram(&s, 101, -5.0, 5.0).unwrap();
        assert_eq!(h.in_range, s.iter().filter(|x| x.abs() <= 5.0).count() as u64);
        assert_eq!(h.counts.iter().sum::<u64>(), h.in_range);
        // oracle: expected counts from exact bin probabilities
        let mut chi2 = 0.0;
        let mut dof = 0;
        for k in 0..101 {
            let p = normal_cdf(h.edges[k + 1], 0.0, 1.0) - normal_cdf(h.edges[k], 0.0, 1.0);
            let e = p * n as f64;
            if e >= 5.0 {
                chi2 += (h.counts[k] as f64 - e).powi(2) / e;
                dof += 1;
            }
        }
        let red = chi2 / (dof - 1) as f64;
        assert!((0.8..=1.25).contains(&red), "chi2/dof {red}");
    }

    #[test]
    fn out_of_range_samples_give_zero_counts() {
        let s = normals(1000, 5, 1.0);
        let h = histogram(&s, 10, 50.0, 60.0).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0));
        assert!(histogram(&s, 10, 1.0, 1.0).is_err());
        assert!(histogram(&s, 1, 0.0, 1.0).is_err());
        assert!(histogram(&[], 4, 0.0, 1.0).unwrap().model.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn overlay_width_ratio() {
        let a = histogram(&normals(200_000, 6, 0.650f64.sqrt()), 201, -8.0, 8.0).unwrap();
        let b = histogram(&normals(200_000, 7, 2.155f64.sqrt()), 201, -8.0, 8.0).unwrap();
        let ratio = (a.fit_variance / b.fit_variance).sqrt();
        assert!((ratio - 0.549).abs() < 0.005, "ratio {ratio}");
        // overlay peak heights scale inversely with width
        let pa = a.model.iter().cloned().fold(0.0, f64::max);
        let pb = b.model.iter().cloned().fold(0.0, f64::max);
        assert!((pb / pa - ratio).abs() < 0.01);
    }
}
