//! Hydraulic cylinder actuator: servo-valve, orifice flow, chamber pressure,
//! Stribeck friction and rigid-body mechanics, plus the linearized model.
//!
//! Every function here is a pure evaluator; integration lives in `sim_engine`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{sign, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-physical load pressure {pressure} Pa exceeds supply pressure {supply} Pa")]
    PressureDomain { pressure: f64, supply: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParams(String),
}

/// Physical constants of the actuator and its valve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams<T> {
    /// Moving mass [kg].
    pub m: T,
    /// Viscous friction [N s/m].
    pub sigma: T,
    /// Mean effective piston area [m^2].
    pub area: T,
    /// Bulk modulus [Pa].
    pub bulk_modulus: T,
    /// Total circuit volume [m^3].
    pub v_t: T,
    /// Leakage coefficient [m^3/(s Pa)].
    pub c_l: T,
    /// Valve flow coefficient.
    pub k_f: T,
    /// Supply pressure [Pa].
    pub p_s: T,
    pub f_c: T,
    pub f_s: T,
    /// Stribeck velocity [m/s].
    pub chi: T,
    /// Stribeck exponent.
    pub iota: T,
    /// Coulomb smoothing [s/m].
    pub vartheta: T,
    pub omega_0: T,
    pub zeta_v: T,
    pub c_d: T,
    pub c_s: T,
    /// Linearized flow-pressure coefficient, taken as `-dQ/dP` (non-negative).
    pub c_qp: T,
    /// Linearized flow gain.
    pub c_q: T,
    /// Pressure scaling of the virtual control `eta = tau P`.
    pub tau: T,
    pub stroke: T,
}

impl<T: Scalar> PlantParams<T> {
    /// Placeholder test-bench constants. Only `p_s` and `stroke` are published
    /// figures; every other value is a plausible stand-in.
    pub fn placeholder() -> Self {
        let l = T::lit;
        let mut p = Self {
            m: l(20.0),
            sigma: l(10.0),
            area: l(3.0e-4),
            bulk_modulus: l(1.4e9),
            v_t: l(1.0e-3),
            c_l: l(1.0e-14),
            k_f: l(5.0e-8),
            p_s: l(1.0e7),
            f_c: l(0.6),
            f_s: l(1.0),
            chi: l(0.01),
            iota: l(1.0),
            vartheta: l(10.0),
            omega_0: l(1000.0),
            zeta_v: l(0.8),
            c_d: l(0.1),
            c_s: l(0.9),
            c_qp: T::zero(),
            c_q: T::zero(),
            tau: l(1.0e-7),
            stroke: l(0.2),
        };
        let (c_q, c_qp) = linearize(&p, T::zero(), T::zero()).expect("zero operating point");
        p.c_q = c_q;
        p.c_qp = c_qp;
        p
    }

    /// `4E/V_t`, the hydraulic capacitance inverse that shows up everywhere.
    pub fn stiffness(&self) -> T {
        T::lit(4.0) * self.bulk_modulus / self.v_t
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("m", self.m),
            ("sigma", self.sigma),
            ("area", self.area),
            ("bulk_modulus", self.bulk_modulus),
            ("v_t", self.v_t),
            ("k_f", self.k_f),
            ("p_s", self.p_s),
            ("vartheta", self.vartheta),
            ("chi", self.chi),
            ("omega_0", self.omega_0),
            ("tau", self.tau),
            ("stroke", self.stroke),
            ("c_q", self.c_q),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.f_s > self.f_c && self.f_c >= T::zero()) {
            return Err(PlantError::InvalidParams("require f_s > f_c >= 0".into()));
        }
        if !(self.c_d >= T::zero() && self.c_d < self.c_s && self.c_s <= T::one()) {
            return Err(PlantError::InvalidParams("require 0 <= c_d < c_s <= 1".into()));
        }
        if self.zeta_v < T::zero() || self.iota == T::zero() || self.c_l < T::zero() || self.c_qp < T::zero() {
            return Err(PlantError::InvalidParams("require zeta_v >= 0, iota != 0, c_l >= 0, c_qp >= 0".into()));
        }
        Ok(())
    }
}

/// Plant state: position, velocity, load pressure and spool position/velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState<T> {
    pub q: T,
    pub q_dot: T,
    pub p: T,
    pub nu: T,
    pub nu_dot: T,
}

impl<T: Scalar> PlantState<T> {
    pub fn is_finite(&self) -> bool {
        [self.q, self.q_dot, self.p, self.nu, self.nu_dot].iter().all(|v| v.is_finite())
    }

    pub fn axpy(&self, h: T, d: &Self) -> Self {
        Self {
            q: self.q + h * d.q,
            q_dot: self.q_dot + h * d.q_dot,
            p: self.p + h * d.p,
            nu: self.nu + h * d.nu,
            nu_dot: self.nu_dot + h * d.nu_dot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValveMode {
    /// Second-order spool dynamics driven by the command.
    #[default]
    Dynamic,
    /// Command used directly as spool position.
    PassThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionModel {
    #[default]
    Stribeck,
    /// Only the `sigma q_dot` term.
    Viscous,
}

/// Exogenous inputs of the nonlinear model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs<T> {
    /// Valve command `U`.
    pub u: T,
    /// Load force [N].
    pub f_l: T,
    /// Additive pressure-rate disturbance [Pa/s].
    pub delta_p: T,
}

/// Orifice opening with dead zone and saturation.
pub fn valve_opening<T: Scalar>(nu: T, params: &PlantParams<T>) -> T {
    let a = nu.abs();
    if a >= params.c_s + params.c_d {
        params.c_s * sign(nu)
    } else if a < params.c_d {
        T::zero()
    } else {
        nu - params.c_d * sign(nu)
    }
}

/// Load flow through the valve orifice.
pub fn orifice_flow<T: Scalar>(g: T, p: T, params: &PlantParams<T>) -> Result<T, PlantError> {
    if p.abs() > params.p_s || !p.is_finite() {
        return Err(PlantError::PressureDomain { pressure: p.as_f64(), supply: params.p_s.as_f64() });
    }
    if g == T::zero() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    Ok(g * params.k_f * (half * (params.p_s - sign(g) * p)).sqrt())
}

/// Smoothed Coulomb plus Stribeck plus viscous friction.
pub fn friction_force<T: Scalar>(q_dot: T, params: &PlantParams<T>) -> T {
    let stribeck = (-(q_dot.abs() / params.chi).powf(params.iota)).exp();
    (params.vartheta * q_dot).tanh() * (params.f_c + (params.f_s - params.f_c) * stribeck) + params.sigma * q_dot
}

/// Time derivative of the full nonlinear state.
pub fn nonlinear_derivative<T: Scalar>(
    state: &PlantState<T>,
    inputs: &PlantInputs<T>,
    params: &PlantParams<T>,
    valve: ValveMode,
    friction: FrictionModel,
) -> Result<PlantState<T>, PlantError> {
    let (nu, nu_dot, nu_ddot) = match valve {
        ValveMode::Dynamic => {
            let w = params.omega_0;
            let acc = w * w * (inputs.u - state.nu) - T::lit(2.0) * params.zeta_v * w * state.nu_dot;
            (state.nu, state.nu_dot, acc)
        }
        ValveMode::PassThrough => (inputs.u, T::zero(), T::zero()),
    };
    let g = valve_opening(nu, params);
    let flow = orifice_flow(g, state.p, params)?;
    let f = match friction {
        FrictionModel::Stribeck => friction_force(state.q_dot, params),
        FrictionModel::Viscous => params.sigma * state.q_dot,
    };
    let p_dot =
        params.stiffness() * (flow - params.area * state.q_dot - params.c_l * state.p) + inputs.delta_p;
    let q_ddot = (params.area * state.p - f - inputs.f_l) / params.m;
    Ok(PlantState { q: state.q_dot, q_dot: q_ddot, p: p_dot, nu: nu_dot, nu_dot: nu_ddot })
}

/// Disturbances entering the linearized model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearDisturbance<T> {
    pub delta2: T,
    pub delta3: T,
    pub f_l: T,
}

/// Linearized model in `x = (q, q_dot, P)`.
pub fn linear_derivative<T: Scalar>(
    x: [T; 3],
    u: T,
    params: &PlantParams<T>,
    dist: &LinearDisturbance<T>,
) -> [T; 3] {
    let k = params.stiffness();
    [
        x[1],
        -(params.sigma / params.m) * x[1] + (params.area / params.m) * x[2] + dist.delta2 + dist.f_l,
        -k * params.area * x[1] - k * params.c_qp * x[2] + k * params.c_q * u + dist.delta3,
    ]
}

/// Flow gain and flow-pressure coefficient at the operating point `(g0, P0)`.
///
/// `C_qp` is returned as `-dQ/dP`, which is what the linear model subtracts.
pub fn linearize<T: Scalar>(params: &PlantParams<T>, g0: T, p0: T) -> Result<(T, T), PlantError> {
    if p0.abs() >= params.p_s {
        return Err(PlantError::PressureDomain { pressure: p0.as_f64(), supply: params.p_s.as_f64() });
    }
    let two = T::lit(2.0);
    let margin = params.p_s - p0 * sign(g0);
    let c_q = params.k_f * margin.sqrt() / two.sqrt();
    let c_qp = g0.abs() * params.k_f / (T::lit(4.0) * (margin / two).sqrt());
    Ok((c_q, c_qp))
}

/// Finite-difference Jacobian of the nonlinear model against the linear
/// coefficient matrix, columns `(q, q_dot, P, g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    pub nonlinear: [[f64; 4]; 3],
    pub linear: [[f64; 4]; 3],
    pub max_rel_err: f64,
}

/// Compares both models at `(g0, P0)` with friction reduced to `sigma q_dot`,
/// no leakage (the linear model has none), and the valve opening taken
/// directly as input. Central differences with steps of 1e-6 times the
/// natural scale of each variable.
pub fn jacobian_check(params: &PlantParams<f64>, g0: f64, p0: f64) -> Result<JacobianCheck, PlantError> {
    if g0.abs() >= 1.0 {
        return Err(PlantError::InvalidParams("operating opening must satisfy |g0| < 1".into()));
    }
    let (c_q, c_qp) = linearize(params, g0, p0)?;
    let p = PlantParams { c_l: 0.0, c_d: 0.0, c_s: 1.0, c_q, c_qp, ..*params };
    let x0 = [0.0, 0.0, p0, g0];
    let scale = [p.stroke, 1.0, p.p_s, 1.0];
    let eval = |x: &[f64; 4]| -> Result<[f64; 3], PlantError> {
        let st = PlantState { q: x[0], q_dot: x[1], p: x[2], nu: 0.0, nu_dot: 0.0 };
        let inp = PlantInputs { u: x[3], f_l: 0.0, delta_p: 0.0 };
        let d = nonlinear_derivative(&st, &inp, &p, ValveMode::PassThrough, FrictionModel::Viscous)?;
        Ok([d.q, d.q_dot, d.p])
    };
    let mut nonlinear = [[0.0; 4]; 3];
    for j in 0..4 {
        let h = 1e-6 * scale[j];
        let (mut xp, mut xm) = (x0, x0);
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (eval(&xp)?, eval(&xm)?);
        for i in 0..3 {
            nonlinear[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let k = p.stiffness();
    let linear = [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -p.sigma / p.m, p.area / p.m, 0.0],
        [0.0, -k * p.area, -k * c_qp, k * c_q],
    ];
    let mut max_rel_err = 0.0_f64;
    for i in 0..3 {
        let row = linear[i].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..4 {
            let err = (nonlinear[i][j] - linear[i][j]).abs() / linear[i][j].abs().max(1e-9 * row);
            max_rel_err = max_rel_err.max(err);
        }
    }
    Ok(JacobianCheck { nonlinear, linear, max_rel_err })
}
