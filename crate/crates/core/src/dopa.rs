//! Plane-wave degenerate parametric amplifier.
//!
//! The squeezing parameter grows with the square root of the pump power,
//! `r = κ·√P`. A bright probe sees the phase-sensitive intensity gain
//! `G(θ) = cosh 2r + sinh 2r·cos θ`, so `G(0) = e^{2r}` and `G(π) = e^{-2r}`.
//!
//! Gain-induced diffraction is represented by a one-parameter floor on the
//! deamplification, `G_d = (1-μ)·e^{-2r} + μ`, while amplification stays
//! plane-wave. The same excess shows up in the generated state as classical
//! noise on the quiet quadrature (see [`DopaModel::output_state`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState, SqueezeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopaModel {
    /// Pump coupling in mW^-1/2.
    pub kappa: f64,
    /// Average pump power in mW.
    pub p_pump_mw: f64,
    /// Orientation of the deamplified quadrature, radians.
    pub phi: f64,
    /// Deamplification floor from gain-induced diffraction, in [0, 1).
    pub mu_gid: f64,
}

impl DopaModel {
    pub fn new(kappa: f64, p_pump_mw: f64, phi: f64, mu_gid: f64) -> Result<Self> {
        let m = Self {
            kappa,
            p_pump_mw,
            phi,
            mu_gid,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::param("kappa", format!("must be finite and >= 0, got {}", self.kappa)));
        }
        if !self.p_pump_mw.is_finite() || self.p_pump_mw < 0.0 {
            return Err(Error::param("p_pump_mw", format!("must be finite and >= 0, got {}", self.p_pump_mw)));
        }
        if !self.phi.is_finite() {
            return Err(Error::param("phi", "must be finite"));
        }
        check_mu(self.mu_gid)
    }

    /// Operating point reproducing a measured gain pair `(g_amp, g_deamp)` at
    /// pump power `p_pump_mw`: `r` from the amplification, `μ` from the
    /// deamplification excess over `1/g_amp`.
    pub fn from_gains(g_amp: f64, g_deamp: f64, p_pump_mw: f64, phi: f64) -> Result<Self> {
        if !(g_amp.is_finite() && g_amp > 1.0) {
            return Err(Error::param("g_amp", format!("must exceed 1, got {g_amp}")));
        }
        if !(g_deamp.is_finite() && g_deamp < 1.0) {
            return Err(Error::param("g_deamp", format!("must be below 1, got {g_deamp}")));
        }
        if !(p_pump_mw.is_finite() && p_pump_mw > 0.0) {
            return Err(Error::param("p_pump_mw", "must be > 0"));
        }
        let r = 0.5 * g_amp.ln();
        let floor = 1.0 / g_amp;
        if g_deamp < floor * (1.0 - 1e-12) {
            return Err(Error::param(
                "g_deamp",
                format!("{g_deamp} is below the plane-wave bound 1/g_amp = {floor}"),
            ));
        }
        let mu = ((g_deamp - floor) / (1.0 - floor)).max(0.0);
        Self::new(r / p_pump_mw.sqrt(), p_pump_mw, phi, mu)
    }

    pub fn squeeze_param(&self) -> f64 {
        self.kappa * self.p_pump_mw.sqrt()
    }

    pub fn effective_gains(&self) -> (f64, f64) {
        let r = self.squeeze_param();
        ((2.0 * r).exp(), gid_deamp(r, self.mu_gid))
    }

    /// Squeezed vacuum emitted with the probe blocked. The quiet quadrature
    /// (angle `phi`) has variance equal to the deamplification gain and the
    /// loud one equals the amplification gain; for `μ = 0` this is the pure
    /// squeezed vacuum.
    pub fn output_state(&self) -> Result<GaussianState> {
        let r = self.squeeze_param();
        let squeezed = gaussian::apply_squeeze(&gaussian::vacuum(), SqueezeParams::new(r, self.phi)?);
        let excess = self.mu_gid * (1.0 - (-2.0 * r).exp());
        gaussian::add_quadrature_noise(&squeezed, self.phi, excess)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu.is_finite() && (0.0..1.0).contains(&mu)) {
        return Err(Error::param("mu_gid", format!("must lie in [0, 1), got {mu}")));
    }
    Ok(())
}

/// Phase-sensitive intensity gain of a bright probe at relative phase `theta`
/// (0 = amplified, π = deamplified).
pub fn classical_gain(r: f64, theta: f64) -> f64 {
    (2.0 * r).cosh() + (2.0 * r).sinh() * theta.cos()
}

pub fn gid_deamp(r: f64, mu_gid: f64) -> f64 {
    (1.0 - mu_gid) * (-2.0 * r).exp() + mu_gid
}

pub fn infer_r_from_deamp(g_deamp: f64) -> Result<f64> {
    if !(g_deamp > 0.0 && g_deamp <= 1.0) {
        return Err(Error::param("g_deamp", format!("must lie in (0, 1], got {g_deamp}")));
    }
    Ok((-0.5 * g_deamp.ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub p_pump_mw: f64,
    pub g_amp: f64,
    pub g_deamp: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl GainPoint {
    pub fn new(p_pump_mw: f64, g_amp: f64, g_deamp: f64) -> Self {
        Self {
            p_pump_mw,
            g_amp,
            g_deamp,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub fit_mu: bool,
    /// Value of μ when it is not floated.
    pub fixed_mu: f64,
    /// Keep only points with `p_pump_mw <= bound`.
    pub max_pump_mw: Option<f64>,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_mu: false,
            fixed_mu: 0.0,
            max_pump_mw: None,
            max_iterations: 200,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainFit {
    pub kappa: f64,
    pub mu_gid: f64,
    /// Attained weighted sum of squared log-gain residuals.
    pub residual: f64,
    pub iterations: usize,
    pub points_used: usize,
    pub points_filtered: usize,
    /// Points violating `g_amp >= 1 >= g_deamp`; accepted but reported.
    pub flagged: Vec<usize>,
}

impl GainFit {
    pub fn model(&self, p_pump_mw: f64) -> DopaModel {
        DopaModel {
            kappa: self.kappa,
            p_pump_mw,
            phi: 0.0,
            mu_gid: self.mu_gid,
        }
    }
}

struct Problem<'a> {
    points: &'a [GainPoint],
    fit_mu: bool,
    fixed_mu: f64,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        if self.fit_mu {
            2
        } else {
            1
        }
    }

    fn mu(&self, x: &[f64]) -> f64 {
        if self.fit_mu {
            x[1]
        } else {
            self.fixed_mu
        }
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mu = self.mu(x);
        let mut res = Vec::with_capacity(2 * self.points.len());
        for p in self.points {
            let sw = p.weight.sqrt();
            let r = x[0] * p.p_pump_mw.sqrt();
            res.push(sw * (p.g_amp.ln() - 2.0 * r));
            res.push(sw * (p.g_deamp.ln() - gid_deamp(r, mu).ln()));
        }
        res
    }

    /// Row-major Jacobian of the residuals, `2n × n_params`.
    fn jacobian(&self, x: &[f64]) -> Vec<[f64; 2]> {
        let mu = self.mu(x);
        let mut jac = Vec::with_capacity(2 * self.points.len());
        for p in self.points {
            let sw = p.weight.sqrt();
            let sp = p.p_pump_mw.sqrt();
            let r = x[0] * sp;
            let e = (-2.0 * r).exp();
            let gd = gid_deamp(r, mu);
            jac.push([-2.0 * sw * sp, 0.0]);
            jac.push([2.0 * sw * sp * (1.0 - mu) * e / gd, -sw * (1.0 - e) / gd]);
        }
        jac
    }

    fn clamp(&self, x: &mut [f64]) {
        x[0] = x[0].max(0.0);
        if self.fit_mu {
            x[1] = x[1].clamp(0.0, 1.0 - 1e-12);
        }
    }
}

fn cost(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Solve the (at most 2×2) damped normal equations.
fn damped_step(jac: &[[f64; 2]], res: &[f64], n: usize, lambda: f64) -> Option<[f64; 2]> {
    let mut h = [[0.0; 2]; 2];
    let mut g = [0.0; 2];
    for (row, &ri) in jac.iter().zip(res) {
        for a in 0..n {
            g[a] += row[a] * ri;
            for b in 0..n {
                h[a][b] += row[a] * row[b];
            }
        }
    }
    for (a, row) in h.iter_mut().enumerate().take(n) {
        let d = if row[a] > 0.0 { row[a] } else { 1.0 };
        row[a] += lambda * d;
    }
    if n == 1 {
        if h[0][0] <= 0.0 {
            return None;
        }
        return Some([-g[0] / h[0][0], 0.0]);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some([
        -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
        -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
    ])
}

/// Weighted least-squares fit of log-gains against the plane-wave model with
/// the deamplification floor. Levenberg-Marquardt with fixed initialization
/// (κ from the lowest-power point, μ = 0), relative step tolerance and an
/// iteration cap; hitting the cap is an error.
pub fn fit_gain_curve(points: &[GainPoint], opts: &FitOptions) -> Result<GainFit> {
    for (i, p) in points.iter().enumerate() {
        if !(p.p_pump_mw.is_finite() && p.p_pump_mw >= 0.0) {
            return Err(Error::param("p_pump_mw", format!("point {i}: invalid pump power {}", p.p_pump_mw)));
        }
        if !(p.g_amp > 0.0 && p.g_deamp > 0.0 && p.g_amp.is_finite() && p.g_deamp.is_finite()) {
            return Err(Error::param("gain", format!("point {i}: gains must be positive")));
        }
        if !(p.weight.is_finite() && p.weight >= 0.0) {
            return Err(Error::param("weight", format!("point {i}: weight must be >= 0")));
        }
    }
    check_mu(opts.fixed_mu)?;

    let selected: Vec<GainPoint> = match opts.max_pump_mw {
        Some(bound) => points.iter().copied().filter(|p| p.p_pump_mw <= bound).collect(),
        None => points.to_vec(),
    };
    let points_filtered = points.len() - selected.len();
    if selected.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "gain fit needs at least 2 points, have {} (underdetermined)",
            selected.len()
        )));
    }
    if selected.iter().all(|p| p.weight == 0.0) {
        return Err(Error::InsufficientData("all fit weights are zero".into()));
    }
    let flagged = selected
        .iter()
        .enumerate()
        .filter(|(_, p)| p.g_amp < 1.0 || p.g_deamp > 1.0)
        .map(|(i, _)| i)
        .collect();

    let problem = Problem {
        points: &selected,
        fit_mu: opts.fit_mu,
        fixed_mu: opts.fixed_mu,
    };
    let n = problem.n_params();

    let lowest = selected
        .iter()
        .filter(|p| p.p_pump_mw > 0.0 && p.weight > 0.0)
        .min_by(|a, b| a.p_pump_mw.total_cmp(&b.p_pump_mw))
        .ok_or_else(|| Error::InsufficientData("no point with positive pump power".into()))?;
    let mut kappa0 = (lowest.g_amp / lowest.g_deamp).ln() / (4.0 * lowest.p_pump_mw.sqrt());
    if !(kappa0.is_finite() && kappa0 > 0.0) {
        kappa0 = 1e-3;
    }
    let mut x = [kappa0, 0.0];
    let mut res = problem.residuals(&x);
    let mut current = cost(&res);
    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        let jac = problem.jacobian(&x);
        let Some(delta) = damped_step(&jac, &res, n, lambda) else {
            return Err(Error::Degenerate("singular normal equations in gain fit".into()));
        };
        let mut trial = [x[0] + delta[0], x[1] + delta[1]];
        problem.clamp(&mut trial);
        let step = ((trial[0] - x[0]).powi(2) + (trial[1] - x[1]).powi(2)).sqrt();
        let scale = (x[0] * x[0] + x[1] * x[1]).sqrt();
        last_step = step / (scale + opts.step_tolerance);

        let trial_res = problem.residuals(&trial);
        let trial_cost = cost(&trial_res);
        if trial_cost <= current {
            x = trial;
            res = trial_res;
            current = trial_cost;
            lambda = (lambda * 0.1).max(1e-15);
        } else {
            lambda *= 10.0;
        }
        if last_step < opts.step_tolerance {
            return Ok(GainFit {
                kappa: x[0],
                mu_gid: problem.mu(&x),
                residual: current,
                iterations: iter,
                points_used: selected.len(),
                points_filtered,
                flagged,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        last_step,
    })
}
