//! Scenario configuration: one TOML document describing plant, design,
//! controller, profile, simulation grid, noise and disturbances.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hydraulic_plant::{FrictionModel, PlantParams, PlantState, ValveMode};
use crate::issta_controller::OutputStage;
use crate::lmi_synthesis::SynthesisInput;
use crate::trajectory_gen::{ReferenceProfile, Segment, SegmentKind};
use crate::vgsta_baseline::{ErrorReference, VgstaGains};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    Linear,
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Issta,
    Vgsta,
    /// Relay reaching law on the same surface.
    Relay,
}

impl std::str::FromStr for ControllerKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "issta" => Ok(Self::Issta),
            "vgsta" => Ok(Self::Vgsta),
            "relay" | "relay-reachability" => Ok(Self::Relay),
            other => Err(ConfigError::Invalid(format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: PlantMode,
    pub valve: ValveMode,
    pub friction: FrictionModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    #[serde(flatten)]
    pub input: SynthesisInput,
    /// Search the cone angle upward from zero instead of using `theta`.
    pub search_theta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaConfig {
    pub k1: f64,
    pub k2: f64,
    pub rho: f64,
    /// Perturbation-derivative bound used for the `rho` check.
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgstaConfig {
    #[serde(flatten)]
    pub gains: VgstaGains<f64>,
    pub error_reference: ErrorReference,
    /// Valve command per unit of STA output; omitted means `1/b_q` with
    /// `b_q = (A/m)(4 E C_q / V_t)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayConfig {
    pub k_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Benchmark { ramp_target: f64 },
    Segments { segments: Vec<Segment<f64>> },
}

impl ProfileConfig {
    pub fn build(&self) -> Result<ReferenceProfile<f64>, ConfigError> {
        match self {
            Self::Benchmark { ramp_target } => Ok(ReferenceProfile::benchmark(*ramp_target)),
            Self::Segments { segments } => {
                ReferenceProfile::new(segments.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt_control: f64,
    pub dt_plant: f64,
    pub horizon: f64,
    pub seed: u64,
    pub initial: PlantState<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Band-limited white noise power.
    pub power: f64,
    /// Sample time the power refers to [s].
    pub sample_time: f64,
    pub on_q: bool,
    pub on_p: bool,
}

impl NoiseConfig {
    /// Per-sample standard deviation `sqrt(power / sample_time)`.
    pub fn std_dev(&self) -> f64 {
        if self.power > 0.0 {
            (self.power / self.sample_time).sqrt()
        } else {
            0.0
        }
    }
}

/// Constant value on `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub t_start: f64,
    pub t_end: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// Load force schedule [N].
    #[serde(default)]
    pub f_l: Vec<Pulse>,
    /// Pressure-rate disturbance schedule [Pa/s].
    #[serde(default)]
    pub delta_p: Vec<Pulse>,
}

impl DisturbanceConfig {
    fn eval(pulses: &[Pulse], t: f64) -> f64 {
        pulses.iter().filter(|p| t >= p.t_start && t < p.t_end).map(|p| p.value).sum()
    }

    pub fn load(&self, t: f64) -> f64 {
        Self::eval(&self.f_l, t)
    }

    pub fn pressure(&self, t: f64) -> f64 {
        Self::eval(&self.delta_p, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub controller: ControllerKind,
    pub plant: PlantParams<f64>,
    pub model: ModelConfig,
    pub synthesis: SynthesisConfig,
    pub sta: StaConfig,
    pub output_stage: OutputStage<f64>,
    pub vgsta: VgstaConfig,
    pub relay: RelayConfig,
    pub profile: ProfileConfig,
    pub sim: SimConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
}

pub const PRESETS: [&str; 5] = ["benchmark", "benchmark-vgsta", "linear-nominal", "rho-step", "reachability"];

impl ScenarioConfig {
    /// Nonlinear plant with valve dynamics, the benchmark profile and
    /// measurement noise of power 1e-9 at 5e-6 s.
    pub fn benchmark() -> Self {
        Self {
            name: "benchmark".into(),
            controller: ControllerKind::Issta,
            plant: PlantParams::placeholder(),
            model: ModelConfig { mode: PlantMode::Nonlinear, valve: ValveMode::Dynamic, friction: FrictionModel::Stribeck },
            synthesis: SynthesisConfig { input: SynthesisInput::default(), search_theta: false },
            sta: StaConfig { k1: 1.1, k2: 2.028, rho: 10.0, l: 1.347 },
            output_stage: OutputStage::default(),
            vgsta: VgstaConfig { gains: VgstaGains::default(), error_reference: ErrorReference::ReferenceModel, input_scale: None },
            relay: RelayConfig { k_s: 10.0 },
            profile: ProfileConfig::Benchmark { ramp_target: 0.06 },
            sim: SimConfig { dt_control: 5e-4, dt_plant: 5e-5, horizon: 14.0, seed: 1, initial: PlantState::default() },
            noise: NoiseConfig { power: 1e-9, sample_time: 5e-6, on_q: true, on_p: true },
            disturbance: DisturbanceConfig::default(),
        }
    }

    /// Linearized plant, command passed straight to the orifice, no noise and
    /// no output compensators.
    pub fn linear_nominal() -> Self {
        let mut c = Self::benchmark();
        c.name = "linear-nominal".into();
        c.model = ModelConfig { mode: PlantMode::Linear, valve: ValveMode::PassThrough, friction: FrictionModel::Viscous };
        c.output_stage = OutputStage { d_s: 0.0, mu_c: 0.0, u_max: 1.0 };
        c.noise.power = 0.0;
        c
    }

    fn step_profile() -> ProfileConfig {
        ProfileConfig::Segments {
            segments: vec![
                Segment { t_start: 0.0, t_end: 0.5, kind: SegmentKind::Hold { value: 0.0 } },
                Segment { t_start: 0.5, t_end: 6.0, kind: SegmentKind::Step { value: 0.02 } },
            ],
        }
    }

    /// Noise-free 20 mm set-point step on the nonlinear plant with friction
    /// and dead-zone but an ideal valve and no command prefilter.
    pub fn rho_step() -> Self {
        let mut c = Self::benchmark();
        c.name = "rho-step".into();
        c.model.valve = ValveMode::PassThrough;
        c.output_stage.mu_c = 0.0;
        c.noise.power = 0.0;
        c.profile = Self::step_profile();
        c.sim.horizon = 6.0;
        c
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "benchmark" => Ok(Self::benchmark()),
            "benchmark-vgsta" => {
                let mut c = Self::benchmark();
                c.name = "benchmark-vgsta".into();
                c.controller = ControllerKind::Vgsta;
                Ok(c)
            }
            "linear-nominal" => Ok(Self::linear_nominal()),
            "rho-step" => Ok(Self::rho_step()),
            "reachability" => {
                let mut c = Self::linear_nominal();
                c.name = "reachability".into();
                c.profile = Self::step_profile();
                // Start off the surface: s(0) = tau P(0) = 0.1.
                c.sim.initial.p = 1e6;
                c.controller = ControllerKind::Relay;
                c.sim.horizon = 3.0;
                Ok(c)
            }
            other => Err(ConfigError::UnknownPreset(other.into())),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = self.to_toml().expect("config always serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.plant.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.synthesis.input.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = &self.sim;
        if !(s.dt_plant > 0.0 && s.dt_control > 0.0 && s.horizon > 0.0) {
            return bad("time steps and horizon must be positive".into());
        }
        if s.dt_plant > s.dt_control {
            return bad("dt_plant must not exceed dt_control".into());
        }
        let ratio = s.dt_control / s.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad("dt_plant must divide dt_control".into());
        }
        let steps = s.horizon / s.dt_control;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return bad("dt_control must divide the horizon".into());
        }
        let profile = self.profile.build()?;
        if profile.t_end() + 1e-12 < s.horizon {
            return bad(format!("profile ends at {} before the horizon {}", profile.t_end(), s.horizon));
        }
        if self.noise.power < 0.0 || !(self.noise.sample_time > 0.0) {
            return bad("noise power must be >= 0 and sample time > 0".into());
        }
        if !(self.sta.k1 > 0.0 && self.sta.k2 > 0.0 && self.sta.rho > 0.0 && self.sta.l >= 0.0) {
            return bad("STA gains must be positive".into());
        }
        if !(self.output_stage.d_s >= 0.0 && self.output_stage.mu_c >= 0.0 && self.output_stage.u_max > 0.0) {
            return bad("output stage settings out of range".into());
        }
        Ok(())
    }

    /// Plant input gain to jerk, `(A/m)(4 E C_q / V_t)`.
    pub fn jerk_gain(&self) -> f64 {
        self.plant.area / self.plant.m * self.plant.stiffness() * self.plant.c_q
    }

    pub fn vgsta_input_scale(&self) -> f64 {
        self.vgsta.input_scale.unwrap_or_else(|| 1.0 / self.jerk_gain())
    }
}
