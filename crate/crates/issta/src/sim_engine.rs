//! Fixed-step closed-loop simulator: RK4 plant at `dt_plant`, sampled
//! controller at `dt_control` with zero-order hold, seeded measurement noise.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ControllerKind, PlantMode, ScenarioConfig};
use crate::hydraulic_plant::{
    linear_derivative, nonlinear_derivative, LinearDisturbance, PlantError, PlantInputs, PlantState, ValveMode,
};
use crate::issta_controller::{sta_gains_unchecked, ControllerError, IsstaController, Measurement, StaGains, SurfaceParams};
use crate::lmi_synthesis::{search_theta, solve_region_lmi, SurfaceDesign, SynthesisError};
use crate::scalar::{sign, spow};
use crate::vgsta_baseline::{VgstaController, VgstaOptions};

pub const RNG_NAME: &str = "ChaCha8Rng";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("simulation blew up at t = {t:.6} s: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error("trace I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub const COLUMNS: [&str; 17] = [
    "t", "r", "r_dot", "q_meas", "q_true", "q_dot_true", "p_meas", "p_true", "e1", "s", "u", "u_tilde", "g",
    "noise_q", "noise_p", "v_integral", "z_integral",
];
pub const NCOL: usize = COLUMNS.len();

pub fn column_index(name: &str) -> Option<usize> {
    COLUMNS.iter().position(|c| *c == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config_hash: String,
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub rng: String,
    pub noise_std: f64,
    pub dt: f64,
    pub samples: usize,
    pub version: String,
}

/// Uniformly sampled closed-loop record; one row per control instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<[f64; NCOL]>,
    pub meta: TraceMeta,
}

impl SimTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(COLUMNS)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: TraceMeta) -> Result<Self, SimError> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != COLUMNS {
            return Err(SimError::Io(format!("unexpected trace header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let mut row = [0.0; NCOL];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|e| SimError::Io(format!("bad number `{field}`: {e}")))?;
            }
            rows.push(row);
        }
        Ok(Self { rows, meta })
    }

    pub fn meta_toml(&self) -> String {
        toml::to_string(&self.meta).expect("metadata serializes")
    }
}

/// Surface design for the scenario's synthesis settings.
pub fn synthesize(config: &ScenarioConfig) -> Result<SurfaceDesign, SynthesisError> {
    if config.synthesis.search_theta {
        search_theta(&config.plant, &config.synthesis.input)
    } else {
        solve_region_lmi(&config.plant, &config.synthesis.input)
    }
}

pub fn sta_gains(config: &ScenarioConfig) -> Result<StaGains<f64>, ControllerError> {
    sta_gains_unchecked(config.sta.k1, config.sta.k2, config.sta.l, config.sta.rho)
}

pub fn surface_params(design: &SurfaceDesign) -> SurfaceParams<f64> {
    SurfaceParams { gamma1: design.gamma1, gamma2: design.gamma2, kappa: design.kappa, alpha: design.alpha }
}

enum Loop {
    Sliding(IsstaController<f64>),
    Baseline(VgstaController<f64>),
}

struct Logged {
    e1: f64,
    s: f64,
    u: f64,
    u_tilde: f64,
    g: f64,
    v_integral: f64,
    z_integral: f64,
}

impl Loop {
    fn step(&mut self, q: f64, p: f64, r: f64, dt: f64) -> Logged {
        match self {
            Loop::Sliding(c) => {
                let o = c.step(Measurement { q, p }, r, dt);
                Logged {
                    e1: o.coords.e1,
                    s: o.coords.s,
                    u: o.u,
                    u_tilde: o.u_tilde,
                    g: o.g_cmd,
                    v_integral: c.state.v_integral,
                    z_integral: c.state.z_integral,
                }
            }
            Loop::Baseline(c) => {
                let o = c.step(q, r, dt);
                Logged {
                    e1: o.e1,
                    s: o.sigma,
                    u: o.u,
                    u_tilde: c.options.input_scale * o.u,
                    g: o.g_cmd,
                    v_integral: 0.0,
                    z_integral: c.state.integral,
                }
            }
        }
    }
}

fn plant_rate(config: &ScenarioConfig, x: &PlantState<f64>, cmd: f64, t: f64) -> Result<PlantState<f64>, PlantError> {
    let f_l = config.disturbance.load(t);
    let delta_p = config.disturbance.pressure(t);
    let p = &config.plant;
    match config.model.mode {
        PlantMode::Nonlinear => {
            nonlinear_derivative(x, &PlantInputs { u: cmd, f_l, delta_p }, p, config.model.valve, config.model.friction)
        }
        PlantMode::Linear => {
            let (u, nu_dot, nu_ddot) = match config.model.valve {
                ValveMode::Dynamic => {
                    let w = p.omega_0;
                    (x.nu, x.nu_dot, w * w * (cmd - x.nu) - 2.0 * p.zeta_v * w * x.nu_dot)
                }
                ValveMode::PassThrough => (cmd, 0.0, 0.0),
            };
            // The load force enters as an acceleration disturbance.
            let dist = LinearDisturbance { delta2: -f_l / p.m, delta3: delta_p, f_l: 0.0 };
            let d = linear_derivative([x.q, x.q_dot, x.p], u, p, &dist);
            Ok(PlantState { q: d[0], q_dot: d[1], p: d[2], nu: nu_dot, nu_dot: nu_ddot })
        }
    }
}

fn rk4(config: &ScenarioConfig, x: &PlantState<f64>, cmd: f64, t: f64, h: f64) -> Result<PlantState<f64>, PlantError> {
    let k1 = plant_rate(config, x, cmd, t)?;
    let k2 = plant_rate(config, &x.axpy(0.5 * h, &k1), cmd, t + 0.5 * h)?;
    let k3 = plant_rate(config, &x.axpy(0.5 * h, &k2), cmd, t + 0.5 * h)?;
    let k4 = plant_rate(config, &x.axpy(h, &k3), cmd, t + h)?;
    let sum = PlantState {
        q: k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q,
        q_dot: k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot,
        p: k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p,
        nu: k1.nu + 2.0 * k2.nu + 2.0 * k3.nu + k4.nu,
        nu_dot: k1.nu_dot + 2.0 * k2.nu_dot + 2.0 * k3.nu_dot + k4.nu_dot,
    };
    Ok(x.axpy(h / 6.0, &sum))
}

/// Runs the scenario, synthesizing the surface first when needed.
pub fn run(config: &ScenarioConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    let design = match config.controller {
        ControllerKind::Vgsta => None,
        _ => Some(synthesize(config)?),
    };
    run_with_design(config, design.as_ref())
}

pub fn run_with_design(config: &ScenarioConfig, design: Option<&SurfaceDesign>) -> Result<SimTrace, SimError> {
    config.validate()?;
    let profile = config.profile.build()?;
    let mut ctrl = match (config.controller, design) {
        (ControllerKind::Vgsta, _) => Loop::Baseline(VgstaController::new(VgstaOptions {
            gains: config.vgsta.gains,
            error_reference: config.vgsta.error_reference,
            input_scale: config.vgsta_input_scale(),
            u_max: config.output_stage.u_max,
        })),
        (kind, Some(d)) => {
            let mut c = IsstaController::new(config.plant, surface_params(d), sta_gains(config)?, config.output_stage);
            if kind == ControllerKind::Relay {
                c.relay_gain = Some(config.relay.k_s);
            }
            Loop::Sliding(c)
        }
        (_, None) => return Err(SimError::Config(ConfigError::Invalid("surface design required".into()))),
    };

    let s = &config.sim;
    let n = (s.horizon / s.dt_control).round() as usize;
    let sub = (s.dt_control / s.dt_plant).round() as usize;
    let h = s.dt_control / sub as f64;
    let std = config.noise.std_dev();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut draw = |on: bool| -> f64 {
        if on && std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        } else {
            0.0
        }
    };

    let mut x = s.initial;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * s.dt_control;
        let r = profile.sample(t, 0).map_err(|e| SimError::Config(ConfigError::Invalid(e.to_string())))?.value;
        let r_dot = profile.sample(t, 1).map_err(|e| SimError::Config(ConfigError::Invalid(e.to_string())))?.value;
        let nq = draw(config.noise.on_q);
        let np = draw(config.noise.on_p);
        let (q_meas, p_meas) = (x.q + nq, x.p + np);
        let lg = ctrl.step(q_meas, p_meas, r, s.dt_control);
        rows.push([
            t, r, r_dot, q_meas, x.q, x.q_dot, p_meas, x.p, lg.e1, lg.s, lg.u, lg.u_tilde, lg.g, nq, np, lg.v_integral,
            lg.z_integral,
        ]);
        if !(lg.g.is_finite() && lg.u.is_finite()) {
            return Err(SimError::BlowUp { t, reason: "non-finite control command".into() });
        }
        for j in 0..sub {
            let tj = t + j as f64 * h;
            x = rk4(config, &x, lg.g, tj, h).map_err(|e| SimError::BlowUp { t: tj, reason: e.to_string() })?;
            if !x.is_finite() {
                return Err(SimError::BlowUp { t: tj + h, reason: "non-finite plant state".into() });
            }
        }
    }
    Ok(SimTrace {
        rows,
        meta: TraceMeta {
            config_hash: config.hash(),
            scenario: config.name.clone(),
            controller: config.controller,
            seed: s.seed,
            rng: RNG_NAME.into(),
            noise_std: std,
            dt: s.dt_control,
            samples: n,
            version: env!("CARGO_PKG_VERSION").into(),
        },
    })
}

/// Re-runs the sliding controller of `config` fed only from the logged
/// `q_meas`, `p_meas` and `r` columns and returns `(u, u_tilde, g)` per
/// sample. Matching the logged columns shows nothing else reached the law.
pub fn replay_controller(config: &ScenarioConfig, design: &SurfaceDesign, trace: &SimTrace) -> Result<Vec<[f64; 3]>, SimError> {
    let mut c = IsstaController::new(config.plant, surface_params(design), sta_gains(config)?, config.output_stage);
    if config.controller == ControllerKind::Relay {
        c.relay_gain = Some(config.relay.k_s);
    }
    let col = |name| trace.column(name).ok_or_else(|| ConfigError::Invalid(format!("trace lacks {name}")));
    let (q, p, r) = (col("q_meas")?, col("p_meas")?, col("r")?);
    Ok((0..q.len())
        .map(|i| {
            let o = c.step(Measurement { q: q[i], p: p[i] }, r[i], trace.meta.dt);
            [o.u, o.u_tilde, o.g_cmd]
        })
        .collect())
}

/// Standalone super-twisting record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReducedTrace {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
}

impl ReducedTrace {
    /// `xi^T M_k xi` with `xi = (|s|^(1/2) sign(s) / rho, z / rho^2)`.
    pub fn lyapunov(&self, m_k: &[[f64; 2]; 2], rho: f64) -> Vec<f64> {
        self.s
            .iter()
            .zip(&self.z)
            .map(|(&s, &z)| {
                let a = spow(s, 0.5) / rho;
                let b = z / (rho * rho);
                m_k[0][0] * a * a + 2.0 * m_k[0][1] * a * b + m_k[1][1] * b * b
            })
            .collect()
    }
}

/// Euler simulation of `s' = -k1 rho |s|^(1/2) sign(s) + z`,
/// `z' = -k2 rho^2 sign(s) + delta_z(t)`.
pub fn run_reduced_sta(
    rho: f64,
    k1: f64,
    k2: f64,
    delta_z: &dyn Fn(f64) -> f64,
    init: (f64, f64),
    dt: f64,
    horizon: f64,
) -> ReducedTrace {
    let n = (horizon / dt).round() as usize;
    let mut tr = ReducedTrace { t: Vec::with_capacity(n + 1), s: Vec::with_capacity(n + 1), z: Vec::with_capacity(n + 1) };
    let (mut s, mut z) = init;
    for k in 0..=n {
        let t = k as f64 * dt;
        tr.t.push(t);
        tr.s.push(s);
        tr.z.push(z);
        let ds = -k1 * rho * spow(s, 0.5) + z;
        let dz = -k2 * rho * rho * sign(s) + delta_z(t);
        s += dt * ds;
        z += dt * dz;
    }
    tr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_run_is_flat() {
        let mut c = ScenarioConfig::linear_nominal();
        c.profile = crate::config::ProfileConfig::Segments {
            segments: vec![crate::trajectory_gen::Segment {
                t_start: 0.0,
                t_end: 1.0,
                kind: crate::trajectory_gen::SegmentKind::Hold { value: 0.0 },
            }],
        };
        c.sim.horizon = 1.0;
        let tr = run(&c).unwrap();
        assert_eq!(tr.len(), 2000);
        for row in &tr.rows {
            assert!(row[1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut c = ScenarioConfig::rho_step();
        c.sim.horizon = 1.0;
        let tr = run(&c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = SimTrace::read_csv(buf.as_slice(), tr.meta.clone()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn reduced_sta_origin_is_fixed() {
        let tr = run_reduced_sta(10.0, 1.1, 2.028, &|_| 0.0, (0.0, 0.0), 1e-3, 1.0);
        assert!(tr.s.iter().chain(&tr.z).all(|v| *v == 0.0));
    }

    #[test]
    fn reduced_sta_converges_from_unit_offset() {
        let tr = run_reduced_sta(10.0, 1.1, 2.028, &|_| 0.0, (1.0, 0.0), 1e-4, 3.0);
        let tail = &tr.s[tr.s.len() - 1000..];
        assert!(tail.iter().all(|s| s.abs() < 1e-3));
    }
}
