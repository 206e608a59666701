//! Velocity-free integral sliding surface with super-twisting control for
//! valve-controlled hydraulic cylinders, with a variable-gain STA baseline,
//! LMI surface synthesis and a closed-loop simulator.
//!
//! Plant, trajectory and controller math is generic over [`scalar::Scalar`];
//! synthesis and the simulator run in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod hydraulic_plant;
pub mod issta_controller;
pub mod lmi_synthesis;
pub mod scalar;
pub mod sim_engine;
pub mod trajectory_gen;
pub mod vgsta_baseline;

pub use scalar::Scalar;

pub type Plant = hydraulic_plant::PlantParams<f64>;
pub type State = hydraulic_plant::PlantState<f64>;
pub type Profile = trajectory_gen::ReferenceProfile<f64>;
pub type Controller = issta_controller::IsstaController<f64>;
pub type Gains = issta_controller::StaGains<f64>;
pub type Baseline = vgsta_baseline::VgstaController<f64>;
