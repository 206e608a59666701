//! Velocity-free integral-sliding-surface super-twisting controller.
//!
//! Inputs are position, load pressure and the reference position only. The
//! surface `s = eta - int v dt + (kappa + alpha) e1` replaces the velocity
//! error by an integral of the virtual control `v = -gamma1 e1 - gamma2 eta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulic_plant::PlantParams;
use crate::scalar::{sign, spow, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("STA gains k1 = {k1}, k2 = {k2} do not give a Hurwitz matrix")]
    NotHurwitz { k1: f64, k2: f64 },
    #[error("rho = {rho} does not exceed the convergence threshold {threshold}")]
    RhoBelowThreshold { rho: f64, threshold: f64 },
    #[error("invalid controller setting: {0}")]
    Invalid(String),
}

/// Super-twisting gains with their Lyapunov certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaGains<T> {
    pub k1: T,
    pub k2: T,
    pub rho: T,
    pub l: T,
    pub m_k: [[T; 2]; 2],
    pub lambda_max_mk: T,
}

impl<T: Scalar> StaGains<T> {
    /// `2 L lambda_max(M_k)`.
    pub fn rho_threshold(&self) -> T {
        T::lit(2.0) * self.l * self.lambda_max_mk
    }
}

/// Solution of `A_k^T M + M A_k = -I` for `A_k = [[-k1, 1], [-k2, 0]]`.
pub fn sta_lyapunov<T: Scalar>(k1: T, k2: T) -> Result<[[T; 2]; 2], ControllerError> {
    if !(k1 > T::zero() && k2 > T::zero()) {
        return Err(ControllerError::NotHurwitz { k1: k1.as_f64(), k2: k2.as_f64() });
    }
    let two = T::lit(2.0);
    let b = -T::lit(0.5);
    let a = (T::one() + k2) / (two * k1);
    let c = (a - k1 * b) / k2;
    Ok([[a, b], [b, c]])
}

/// Lyapunov matrix of the super-twisting flow itself. In `(|s|^(1/2) sign(s), z)`
/// coordinates the unit-rho flow is `A = [[-k1, 1], [-2 k2, 0]]` times
/// `1/(2|s|^(1/2))`; the factor 2 on `k2` is absent from `sta_lyapunov`.
pub fn flow_lyapunov<T: Scalar>(k1: T, k2: T) -> Result<[[T; 2]; 2], ControllerError> {
    sta_lyapunov(k1, T::lit(2.0) * k2)
}

pub fn sym2_eigenvalues<T: Scalar>(m: &[[T; 2]; 2]) -> (T, T) {
    let half = T::lit(0.5);
    let mid = half * (m[0][0] + m[1][1]);
    let r = (half * (m[0][0] - m[1][1])).hypot(m[0][1]);
    (mid - r, mid + r)
}

/// Gain set without the `rho` threshold check, for deliberately
/// under-tuned runs such as gain sweeps.
pub fn sta_gains_unchecked<T: Scalar>(k1: T, k2: T, l: T, rho: T) -> Result<StaGains<T>, ControllerError> {
    if l < T::zero() || !(rho > T::zero()) {
        return Err(ControllerError::Invalid("need L >= 0 and rho > 0".into()));
    }
    let m_k = sta_lyapunov(k1, k2)?;
    let (_, lambda_max_mk) = sym2_eigenvalues(&m_k);
    Ok(StaGains { k1, k2, rho, l, m_k, lambda_max_mk })
}

/// Builds the STA gain set, rejecting `rho` at or below `2 L lambda_max`.
pub fn design_sta_gains<T: Scalar>(k1: T, k2: T, l: T, rho: T) -> Result<StaGains<T>, ControllerError> {
    let gains = sta_gains_unchecked(k1, k2, l, rho)?;
    let threshold = gains.rho_threshold();
    if !(rho > threshold) {
        return Err(ControllerError::RhoBelowThreshold { rho: rho.as_f64(), threshold: threshold.as_f64() });
    }
    Ok(gains)
}

/// Surface parameters consumed by the control law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams<T> {
    pub gamma1: T,
    pub gamma2: T,
    pub kappa: T,
    /// `4 tau E A / V_t`.
    pub alpha: T,
}

/// Controller integrals and filter memory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState<T> {
    /// Integral of the virtual control.
    pub v_integral: T,
    /// Super-twisting integral term.
    pub z_integral: T,
    pub prefilter: [T; 2],
    pub last_u: T,
    /// Downstream command saturated at the previous step.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorCoordinates<T> {
    pub e1: T,
    pub eta: T,
    pub s: T,
}

/// Sensor values available to the controller. There is deliberately no
/// velocity channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement<T> {
    pub q: T,
    pub p: T,
}

pub fn error_coordinates<T: Scalar>(
    meas: Measurement<T>,
    r: T,
    params: &PlantParams<T>,
    surface: &SurfaceParams<T>,
    state: &ControllerState<T>,
) -> ErrorCoordinates<T> {
    let e1 = meas.q - r;
    let eta = params.tau * meas.p;
    let s = eta - state.v_integral + (surface.kappa + surface.alpha) * e1;
    ErrorCoordinates { e1, eta, s }
}

/// One sampled control update. Returns `u` computed with the current
/// integrals, then advances both integrals by explicit Euler. The STA
/// integral is held while `state.saturated` is set.
pub fn control_step<T: Scalar>(
    coords: &ErrorCoordinates<T>,
    params: &PlantParams<T>,
    surface: &SurfaceParams<T>,
    gains: &StaGains<T>,
    dt: T,
    state: &mut ControllerState<T>,
) -> T {
    let k = params.stiffness();
    let b = params.tau * k * params.c_q;
    let half = T::lit(0.5);
    let bracket = gains.k1 * gains.rho * spow(coords.s, half)
        + surface.gamma1 * coords.e1
        + (surface.gamma2 - k * params.c_qp) * coords.eta
        + state.z_integral;
    let u = -bracket / b;
    if !state.saturated {
        state.z_integral += gains.k2 * gains.rho * gains.rho * sign(coords.s) * dt;
    }
    state.v_integral += (-surface.gamma1 * coords.e1 - surface.gamma2 * coords.eta) * dt;
    state.last_u = u;
    u
}

/// Discontinuous reaching law used to exercise surface reachability:
/// `u = -(1/b) [K_s sign(s) + gamma1 e1 + (gamma2 - 4E C_qp/V_t) eta]`.
pub fn relay_control_step<T: Scalar>(
    coords: &ErrorCoordinates<T>,
    params: &PlantParams<T>,
    surface: &SurfaceParams<T>,
    k_s: T,
    dt: T,
    state: &mut ControllerState<T>,
) -> T {
    let k = params.stiffness();
    let b = params.tau * k * params.c_q;
    let u = -(k_s * sign(coords.s) + surface.gamma1 * coords.e1 + (surface.gamma2 - k * params.c_qp) * coords.eta) / b;
    state.v_integral += (-surface.gamma1 * coords.e1 - surface.gamma2 * coords.eta) * dt;
    state.last_u = u;
    u
}

/// Feed-forward dead-zone compensation.
pub fn deadzone_inverse<T: Scalar>(u: T, d_s: T) -> T {
    T::lit(0.5) * d_s * sign(u) + u
}

/// Exact zero-order-hold step of `1/(mu s + 1)^2` with unity DC gain.
pub fn prefilter_step<T: Scalar>(input: T, mu_c: T, dt: T, state: &mut [T; 2]) -> T {
    let r = dt / mu_c;
    let a = (-r).exp();
    let x1 = state[0];
    state[0] = a * x1 + (T::one() - a) * input;
    state[1] = a * state[1] + r * a * x1 + (T::one() - a - r * a) * input;
    state[1]
}

/// Implementation compensators applied after the control law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputStage<T> {
    /// Dead-zone size compensated in feed-forward.
    pub d_s: T,
    /// Prefilter time constant; zero disables the filter.
    pub mu_c: T,
    /// Command saturation level.
    pub u_max: T,
}

impl<T: Scalar> Default for OutputStage<T> {
    fn default() -> Self {
        Self { d_s: T::lit(0.2), mu_c: T::lit(1e-3), u_max: T::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IsstaOutput<T> {
    pub coords: ErrorCoordinates<T>,
    pub u: T,
    pub u_tilde: T,
    /// Command sent to the valve after saturation and prefilter.
    pub g_cmd: T,
}

/// Control law plus output stage with its own state.
#[derive(Debug, Clone, PartialEq)]
pub struct IsstaController<T> {
    pub params: PlantParams<T>,
    pub surface: SurfaceParams<T>,
    pub gains: StaGains<T>,
    pub output: OutputStage<T>,
    pub state: ControllerState<T>,
    /// Replaces the STA law by the relay reaching law with this gain.
    pub relay_gain: Option<T>,
}

impl<T: Scalar> IsstaController<T> {
    pub fn new(params: PlantParams<T>, surface: SurfaceParams<T>, gains: StaGains<T>, output: OutputStage<T>) -> Self {
        Self { params, surface, gains, output, state: ControllerState::default(), relay_gain: None }
    }

    pub fn step(&mut self, meas: Measurement<T>, r: T, dt: T) -> IsstaOutput<T> {
        let coords = error_coordinates(meas, r, &self.params, &self.surface, &self.state);
        let u = match self.relay_gain {
            Some(k_s) => relay_control_step(&coords, &self.params, &self.surface, k_s, dt, &mut self.state),
            None => control_step(&coords, &self.params, &self.surface, &self.gains, dt, &mut self.state),
        };
        let u_tilde = deadzone_inverse(u, self.output.d_s);
        let lim = self.output.u_max;
        self.state.saturated = u_tilde.abs() > lim;
        let clipped = u_tilde.max(-lim).min(lim);
        let g_cmd = if self.output.mu_c > T::zero() {
            prefilter_step(clipped, self.output.mu_c, dt, &mut self.state.prefilter)
        } else {
            clipped
        };
        IsstaOutput { coords, u, u_tilde, g_cmd }
    }
}
