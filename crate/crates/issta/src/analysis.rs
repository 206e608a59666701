//! Post-run verification: performance indices, Lyapunov and reachability
//! checks over traces, describing-function chattering prediction and an
//! offline robust exact differentiator for velocity plots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulic_plant::PlantParams;
use crate::lmi_synthesis::{coupling, ultimate_bound, SurfaceDesign};
use crate::scalar::{spow, Scalar};
use crate::sim_engine::SimTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no samples in window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("trace lacks column `{0}`")]
    MissingColumn(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub m_e: f64,
    pub mu_e: f64,
    pub sigma_e: f64,
    pub ise: f64,
    pub steady_state_pct: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

pub const DEFAULT_WINDOW: (f64, f64) = (10.0, 14.0);

/// Indices over errors `e` sampled at `t` with step `dt`.
pub fn indices_from_samples(t: &[f64], e: &[f64], dt: f64, window: (f64, f64), stroke: f64) -> Result<PerformanceReport, AnalysisError> {
    let sel: Vec<f64> = t.iter().zip(e).filter(|(ti, _)| **ti >= window.0 && **ti <= window.1).map(|(_, ei)| *ei).collect();
    if sel.is_empty() {
        return Err(AnalysisError::EmptyWindow(window.0, window.1));
    }
    let n = sel.len() as f64;
    let m_e = sel.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mu_e = sel.iter().map(|v| v.abs()).sum::<f64>() / n;
    let sigma_e = (sel.iter().map(|v| (v.abs() - mu_e).powi(2)).sum::<f64>() / n).sqrt();
    let ise = sel.iter().map(|v| v * v).sum::<f64>() * dt;
    Ok(PerformanceReport { m_e, mu_e, sigma_e, ise, steady_state_pct: 100.0 * mu_e / stroke, window, samples: sel.len() })
}

/// Indices of the true tracking error `q_true - r`.
pub fn performance_indices(trace: &SimTrace, window: (f64, f64), stroke: f64) -> Result<PerformanceReport, AnalysisError> {
    let t = trace.column("t").ok_or(AnalysisError::MissingColumn("t"))?;
    let q = trace.column("q_true").ok_or(AnalysisError::MissingColumn("q_true"))?;
    let r = trace.column("r").ok_or(AnalysisError::MissingColumn("r"))?;
    let e: Vec<f64> = q.iter().zip(&r).map(|(a, b)| a - b).collect();
    indices_from_samples(&t, &e, trace.meta.dt, window, stroke)
}

/// First time after `t_step` from which `y` stays within `band * |target|`
/// of `target`; `None` if it never settles.
pub fn settling_time(t: &[f64], y: &[f64], target: f64, t_step: f64, band: f64) -> Option<f64> {
    let tol = band * target.abs();
    let mut last_out = None;
    for (i, (&ti, &yi)) in t.iter().zip(y).enumerate() {
        if ti >= t_step && (yi - target).abs() > tol {
            last_out = Some(i);
        }
    }
    match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < t.len() => Some(t[i + 1] - t_step),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub v_max: f64,
    pub threshold_norm: f64,
    pub ultimate_bound: f64,
    pub checked: usize,
    pub violations: Vec<f64>,
    pub final_norm: f64,
}

/// Error vector `(e1, e2, e3)` per sample; `e3` is rebuilt from the logged
/// virtual-control integral on the manifold.
pub fn error_states(trace: &SimTrace, params: &PlantParams<f64>, design: &SurfaceDesign) -> Result<Vec<[f64; 3]>, AnalysisError> {
    let q = trace.column("q_true").ok_or(AnalysisError::MissingColumn("q_true"))?;
    let qd = trace.column("q_dot_true").ok_or(AnalysisError::MissingColumn("q_dot_true"))?;
    let r = trace.column("r").ok_or(AnalysisError::MissingColumn("r"))?;
    let rd = trace.column("r_dot").ok_or(AnalysisError::MissingColumn("r_dot"))?;
    let vi = trace.column("v_integral").ok_or(AnalysisError::MissingColumn("v_integral"))?;
    let (a23, alpha) = coupling(params);
    Ok((0..q.len())
        .map(|i| {
            let e1 = q[i] - r[i];
            [e1, qd[i] - rd[i], a23 * (vi[i] - design.kappa * e1 - alpha * e1)]
        })
        .collect())
}

fn quad(m: &[[f64; 3]; 3], e: &[f64; 3]) -> f64 {
    (0..3).map(|i| (0..3).map(|j| e[i] * m[i][j] * e[j]).sum::<f64>()).sum()
}

/// Checks `dV/dt < 0` for `V = e^T M e` wherever `||e||` exceeds the
/// decrease threshold `2 lambda_max(M) beta / (theta_V mu)`. Samples with
/// `V` below `v_floor` are skipped as numerical floor.
pub fn lyapunov_check(
    trace: &SimTrace,
    params: &PlantParams<f64>,
    design: &SurfaceDesign,
    beta: f64,
    theta_v: f64,
    v_floor: f64,
) -> Result<LyapunovReport, AnalysisError> {
    let e = error_states(trace, params, design)?;
    let t = trace.column("t").ok_or(AnalysisError::MissingColumn("t"))?;
    let m = design.m_matrix();
    let lmax = nalgebra::SymmetricEigen::new(m).eigenvalues.max();
    let threshold_norm = 2.0 * lmax * beta / (theta_v * design.mu_m);
    let bound = ultimate_bound(&m, design.mu_m, beta, theta_v).map_err(|e| AnalysisError::Precondition(e.to_string()))?;
    let v: Vec<f64> = e.iter().map(|x| quad(&design.m, x)).collect();
    let v_max = v.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-9 * v_max;
    let dt = trace.meta.dt;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 1..v.len().saturating_sub(1) {
        let norm = e[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < threshold_norm || v[i] <= v_floor {
            continue;
        }
        checked += 1;
        if (v[i + 1] - v[i - 1]) / (2.0 * dt) >= tol {
            violations.push(t[i]);
        }
    }
    let final_norm = e.last().map(|x| x.iter().map(|y| y * y).sum::<f64>().sqrt()).unwrap_or(0.0);
    Ok(LyapunovReport { v_max, threshold_norm, ultimate_bound: bound, checked, violations, final_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub k_bar: f64,
    pub band: f64,
    pub checked: usize,
    pub violations: Vec<f64>,
}

/// Verifies `s ds/dt <= -K_bar |s|` outside `|s| <= band`, with
/// `K_bar = K_s - L3 - |kappa| C_e2`.
pub fn reachability_check(trace: &SimTrace, k_s: f64, l3: f64, kappa: f64, c_e2: f64, band: f64) -> Result<ReachabilityReport, AnalysisError> {
    let k_bar = k_s - l3 - kappa.abs() * c_e2;
    if !(k_bar > 0.0) {
        return Err(AnalysisError::Precondition(format!("K_s = {k_s} does not dominate L3 + |kappa| C_e2 (K_bar = {k_bar})")));
    }
    let s = trace.column("s").ok_or(AnalysisError::MissingColumn("s"))?;
    let t = trace.column("t").ok_or(AnalysisError::MissingColumn("t"))?;
    let dt = trace.meta.dt;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 0..s.len().saturating_sub(1) {
        if s[i].abs() <= band {
            continue;
        }
        checked += 1;
        let ds = (s[i + 1] - s[i]) / dt;
        if s[i] * ds > -k_bar * s[i].abs() {
            violations.push(t[i]);
        }
    }
    Ok(ReachabilityReport { k_bar, band, checked, violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatterPrediction {
    pub gamma_a: f64,
    pub a_y: f64,
    pub a1: f64,
    pub phi_d: f64,
    pub omega: f64,
    pub t_s: f64,
}

impl ChatterPrediction {
    /// Relative residual of the amplitude quadratic at `a_y`.
    pub fn residual(&self) -> f64 {
        let a = self.omega * self.omega / (self.t_s * self.t_s);
        let terms = [a * self.a_y * self.a_y, self.gamma_a * self.gamma_a * self.a_y, self.a1 * self.a1];
        (terms[0] + terms[1] - terms[2]).abs() / terms.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn gamma_fn(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Describing-function amplitude and phase deficit of the STA loop.
pub fn chatter_predict<T: Scalar>(k1: T, k2: T, rho: T, l: T, t_s: T, omega: T) -> Result<ChatterPrediction, AnalysisError> {
    let v = [k1, k2, rho, l, t_s, omega].map(|x| x.as_f64());
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(AnalysisError::Precondition("all chatter inputs must be positive".into()));
    }
    let [k1, k2, rho, l, t_s, omega] = v;
    let pi = std::f64::consts::PI;
    let gamma_a = 2.0 * k1 * l * gamma_fn(1.25) / (pi.sqrt() * gamma_fn(1.75));
    let a1 = 4.0 * k2 * l * l / (pi * omega);
    let qa = omega * omega / (t_s * t_s);
    let g2 = gamma_a * gamma_a;
    // Positive root written without cancellation.
    let a_y = 2.0 * a1 * a1 / (g2 + (g2 * g2 + 4.0 * qa * a1 * a1).sqrt());
    let ratio = 64.0 * k2 * k2 * rho * rho / (t_s.powi(4) * pi * pi * g2 * g2);
    let phi_d = pi / 2.0 - ((-1.0 + (1.0 + ratio).sqrt()).sqrt() / 2f64.sqrt()).atan();
    Ok(ChatterPrediction { gamma_a, a_y, a1, phi_d, omega, t_s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedGains {
    /// Lipschitz constant of the second derivative of the signal.
    pub l: f64,
    pub lambda: [f64; 3],
}

impl Default for RedGains {
    fn default() -> Self {
        Self { l: 1.0, lambda: [2.0, 2.12, 1.1] }
    }
}

/// Second-order robust exact differentiator run offline over `f` sampled
/// at `dt`. Returns the first-derivative estimate.
pub fn red_differentiate(f: &[f64], dt: f64, gains: &RedGains) -> Vec<f64> {
    let l = gains.l;
    let [l2, l1, l0] = gains.lambda;
    let mut z = [f.first().copied().unwrap_or(0.0), 0.0, 0.0];
    let substeps = 10;
    let h = dt / substeps as f64;
    let mut out = Vec::with_capacity(f.len());
    for &fi in f {
        out.push(z[1]);
        for _ in 0..substeps {
            let d = z[0] - fi;
            let r0 = -l2 * l.powf(1.0 / 3.0) * spow(d, 2.0 / 3.0) + z[1];
            let r1 = -l1 * l.powf(2.0 / 3.0) * spow(d, 1.0 / 3.0) + z[2];
            let r2 = -l0 * l * spow(d, 0.0);
            z[0] += h * r0;
            z[1] += h * r1;
            z[2] += h * r2;
        }
    }
    out
}

/// Velocity estimate of the measured position column, for reporting only.
pub fn red_velocity(trace: &SimTrace, gains: &RedGains) -> Result<Vec<f64>, AnalysisError> {
    let q = trace.column("q_meas").ok_or(AnalysisError::MissingColumn("q_meas"))?;
    Ok(red_differentiate(&q, trace.meta.dt, gains))
}
