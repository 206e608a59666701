//! Output-feedback variable-gain super-twisting baseline: reference model,
//! state-variable filters, norm observer, fourth-order variable-gain
//! differentiator and the variable-gain STA law.

use serde::{Deserialize, Serialize};

use crate::scalar::{sign, spow, Scalar};

/// Exact ZOH step of `1/(mu s + 1)^2` scaled by `gain`.
fn critical_lag<T: Scalar>(input: T, mu: T, gain: T, dt: T, x: &mut [T; 2]) -> T {
    let r = dt / mu;
    let a = (-r).exp();
    let x1 = x[0];
    let u = gain * input;
    x[0] = a * x1 + (T::one() - a) * u;
    x[1] = a * x[1] + r * a * x1 + (T::one() - a - r * a) * u;
    x[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VgstaState<T> {
    pub y_m: [T; 2],
    pub w_u: [T; 2],
    pub w_y: [T; 2],
    pub e_hat: [T; 4],
    pub x_hat: T,
    pub integral: T,
    pub last_u: T,
}

/// `y_m = 25^2/(s + 25)^2 r`.
pub fn reference_model_step<T: Scalar>(r: T, dt: T, state: &mut VgstaState<T>) -> T {
    critical_lag(r, T::lit(1.0 / 25.0), T::one(), dt, &mut state.y_m)
}

/// `w = 1/(s + 5)^2` applied to `u` and `q`.
pub fn io_filters_step<T: Scalar>(u: T, q: T, dt: T, state: &mut VgstaState<T>) -> (T, T) {
    let mu = T::lit(0.2);
    let g = T::lit(1.0 / 25.0);
    (critical_lag(u, mu, g, dt, &mut state.w_u), critical_lag(q, mu, g, dt, &mut state.w_y))
}

/// Euler step of the norm observer; returns `(x_hat, L_vgst)` where the
/// bound uses the updated observer state.
pub fn norm_observer_step<T: Scalar>(w_u: T, w_y: T, u: T, dt: T, state: &mut VgstaState<T>) -> (T, T) {
    let l = T::lit;
    let x = state.x_hat;
    state.x_hat = x + dt * (-l(0.8) * x + l(10.0) + l(1.5) * w_u.hypot(w_y));
    (state.x_hat, l(1.2) * state.x_hat.abs() + l(2.0) * u.abs() + l(7.0))
}

/// Euler step of the variable-gain differentiator.
pub fn vg_differentiator_step<T: Scalar>(e1: T, l_vgst: T, dt: T, state: &mut VgstaState<T>) -> [T; 4] {
    let c = T::lit;
    let e = state.e_hat;
    let d = e[0] - e1;
    let rates = [
        -c(3.0) * l_vgst.powf(c(0.25)) * spow(d, c(0.75)) - c(2.0) * d + e[1],
        -c(2.5) * l_vgst.powf(c(1.0 / 3.0)) * spow(d, c(2.0 / 3.0)) - c(3.0) * d + e[2],
        -c(1.5) * l_vgst.sqrt() * spow(d, c(0.5)) - c(2.0) * d + e[3],
        -c(1.1) * l_vgst * sign(d) - d,
    ];
    for (x, r) in state.e_hat.iter_mut().zip(rates) {
        *x += dt * r;
    }
    state.e_hat
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgstaGains<T> {
    pub delta_k: T,
    pub eps_k: T,
}

impl<T: Scalar> Default for VgstaGains<T> {
    fn default() -> Self {
        Self { delta_k: T::lit(0.01), eps_k: T::lit(1e-3) }
    }
}

pub fn sigma_hat<T: Scalar>(e1: T, e2: T, e3: T) -> T {
    e3 + T::lit(50.0) * e2 + T::lit(625.0) * e1
}

pub fn phi1<T: Scalar>(s: T) -> T {
    spow(s, T::lit(0.5)) + s
}

pub fn phi2<T: Scalar>(s: T) -> T {
    T::lit(0.5) * sign(s) + T::lit(1.5) * spow(s, T::lit(0.5)) + s
}

pub fn rho2<T: Scalar>(e1: T, e2_hat: T, x_hat: T) -> T {
    T::lit(10.0) * e2_hat.abs() + T::lit(5.0) * e1.abs() + x_hat + T::one()
}

/// `(k1, k2)` of the variable-gain law.
pub fn variable_gains<T: Scalar>(rho2: T, g: &VgstaGains<T>) -> (T, T) {
    let (two, four) = (T::lit(2.0), T::lit(4.0));
    let e = g.eps_k;
    let k1 = g.delta_k + rho2 * rho2 / (four * e) + two * e * rho2 + e + two * e * (T::one() + four * e * e);
    let k2 = T::one() + four * e * e + two * e * k1;
    (k1, k2)
}

/// STA law with the Euler-advanced integral of `k2 phi2`. `freeze` holds the
/// integral, used while the downstream command saturates.
#[allow(clippy::too_many_arguments)]
pub fn vgsta_control_step<T: Scalar>(
    e1: T,
    e2_hat: T,
    e3_hat: T,
    x_hat: T,
    gains: &VgstaGains<T>,
    dt: T,
    freeze: bool,
    state: &mut VgstaState<T>,
) -> T {
    let s = sigma_hat(e1, e2_hat, e3_hat);
    let (k1, k2) = variable_gains(rho2(e1, e2_hat, x_hat), gains);
    let u = -k1 * phi1(s) - state.integral;
    if !freeze {
        state.integral += k2 * phi2(s) * dt;
    }
    state.last_u = u;
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    /// Track the reference-model output.
    #[default]
    ReferenceModel,
    /// Track the raw reference.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgstaOptions<T> {
    pub gains: VgstaGains<T>,
    pub error_reference: ErrorReference,
    /// Maps the STA output to the valve command.
    pub input_scale: T,
    pub u_max: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VgstaOutput<T> {
    pub e1: T,
    pub sigma: T,
    pub u: T,
    pub g_cmd: T,
    pub x_hat: T,
    pub l_vgst: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VgstaController<T> {
    pub options: VgstaOptions<T>,
    pub state: VgstaState<T>,
    saturated: bool,
}

impl<T: Scalar> VgstaController<T> {
    pub fn new(options: VgstaOptions<T>) -> Self {
        Self { options, state: VgstaState::default(), saturated: false }
    }

    pub fn step(&mut self, q: T, r: T, dt: T) -> VgstaOutput<T> {
        let y_m = reference_model_step(r, dt, &mut self.state);
        let target = match self.options.error_reference {
            ErrorReference::ReferenceModel => y_m,
            ErrorReference::Raw => r,
        };
        let e1 = q - target;
        let u_prev = self.state.last_u;
        let (w_u, w_y) = io_filters_step(u_prev, q, dt, &mut self.state);
        let (x_hat, l_vgst) = norm_observer_step(w_u, w_y, u_prev, dt, &mut self.state);
        let e = vg_differentiator_step(e1, l_vgst, dt, &mut self.state);
        let sigma = sigma_hat(e1, e[1], e[2]);
        let u = vgsta_control_step(e1, e[1], e[2], x_hat, &self.options.gains, dt, self.saturated, &mut self.state);
        let raw = self.options.input_scale * u;
        let lim = self.options.u_max;
        self.saturated = raw.abs() > lim;
        VgstaOutput { e1, sigma, u, g_cmd: raw.max(-lim).min(lim), x_hat, l_vgst }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_model_step_response() {
        let mut st = VgstaState::default();
        let dt = 1.0 / 25.0 / 40.0;
        let mut y = 0.0;
        for _ in 0..40 {
            y = reference_model_step(1.0, dt, &mut st);
        }
        assert_relative_eq!(y, 1.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        for _ in 0..40_000 {
            y = reference_model_step(1.0, dt, &mut st);
        }
        assert_relative_eq!(y, 1.0, epsilon = 1e-12);
        let mut z = VgstaState::default();
        assert_eq!(reference_model_step(0.0, dt, &mut z), 0.0);
    }

    #[test]
    fn filters_dc_gain_and_linearity() {
        let mut st = VgstaState::default();
        let mut w = (0.0, 0.0);
        for _ in 0..100_000 {
            w = io_filters_step(25.0, 0.0, 1e-3, &mut st);
        }
        assert_relative_eq!(w.0, 1.0, epsilon = 1e-9);
        assert_eq!(w.1, 0.0);
        let (mut a, mut b) = (VgstaState::default(), VgstaState::default());
        for k in 0..500 {
            let u = (k as f64 * 0.01).sin();
            let wa = io_filters_step(u, 0.0, 1e-3, &mut a);
            let wb = io_filters_step(3.0 * u, 0.0, 1e-3, &mut b);
            assert_relative_eq!(wb.0, 3.0 * wa.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn observer_equilibrium() {
        let mut st = VgstaState::default();
        let (_, l0) = norm_observer_step(0.0, 0.0, 0.0, 0.0, &mut st);
        assert_eq!(l0, 7.0);
        let mut prev = st.x_hat;
        for _ in 0..40_000 {
            let (x, _) = norm_observer_step(0.0, 0.0, 0.0, 1e-3, &mut st);
            assert!(x >= prev);
            prev = x;
        }
        assert_relative_eq!(prev, 12.5, epsilon = 1e-6);
    }

    #[test]
    fn differentiator_equilibrium() {
        let mut st = VgstaState { e_hat: [0.3, 0.0, 0.0, 0.0], ..Default::default() };
        for _ in 0..100 {
            vg_differentiator_step(0.3, 20.0, 1e-3, &mut st);
        }
        assert_eq!(st.e_hat, [0.3, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gain_formulas() {
        let g = VgstaGains::default();
        let (k1, k2) = variable_gains(rho2(0.0, 0.0, 0.0), &g);
        let expect = 0.01 + 250.0 + 0.002 + 0.001 + 0.002 * (1.0 + 4e-6);
        assert_relative_eq!(k1, expect, max_relative = 1e-14);
        assert!(k2 > 1.0);
        assert_eq!(phi2(1.0), 3.0);
        assert_eq!(phi1(0.0), 0.0);
        let mut st = VgstaState::default();
        assert_eq!(vgsta_control_step(0.0, 0.0, 0.0, 0.0, &g, 1e-3, false, &mut st), 0.0);
        assert_eq!(st.integral, 0.0);
    }
}
