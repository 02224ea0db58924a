//! Thermal model of a soft, water-circulated temperature display cover.
//!
//! The plant is a closed water loop: a small tank sandwiched between two
//! thermoelectric devices, a silicone supply tube, a grid of semicircular
//! channels cast into a foam cover, and a return tube back to the tank.
//! Heat pumped into the tank is carried by the circulating water to a gel
//! skin whose outer surface is the controlled variable.
//!
//! The crate provides, in dependency order:
//!
//! * [`materials`] / [`geometry`]: material properties, layer stacks and
//!   the cover / loop dimensions everything else is derived from.
//! * [`network`]: assembly of the lumped RC network (capacitive nodes,
//!   conductive edges, boundary nodes).
//! * [`peltier`]: thermoelectric device coefficients and face heat flows.
//! * [`waterloop`]: pump voltage-to-flow map and plug-flow advection
//!   around the loop.
//! * [`sim`]: the coupled integrator (implicit conduction step plus
//!   operator-split advection) with per-step energy accounting.
//! * [`sysid`], [`qp`], [`controller`]: step-response identification, the
//!   box-constrained QP solver, and the MPC / PI / pump-schedule layer.
//! * [`calibration`]: fits the few free plant parameters to measured
//!   time constants and the achievable surface temperature range.
//! * [`capsense`]: the data-driven capacitive touch sensing model.
//! * [`config`] / [`scenario`]: plain-text scenario files and the
//!   closed-loop scenario runner that produces telemetry.
//!
//! The numerical core is generic over the scalar type through
//! [`scalar::Scalar`]; the aliases at the crate root pin `f64`, which is
//! what the scenario runner, the calibrator and the CLI use.

pub mod calibration;
pub mod capsense;
pub mod config;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod materials;
pub mod network;
pub mod peltier;
pub mod profile;
pub mod qp;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod sysid;
pub mod timeseries;
pub mod waterloop;

pub use error::{Error, Result};

/// `f64` specializations of the generic core types.
pub type Material = materials::Material<f64>;
pub type CoverGeometry = geometry::CoverGeometry<f64>;
pub type LoopGeometry = geometry::LoopGeometry<f64>;
pub type PeltierSpecs = peltier::PeltierSpecs<f64>;
pub type PeltierParams = peltier::PeltierParams<f64>;
pub type PumpMap = waterloop::PumpMap<f64>;
pub type WaterLoopState = waterloop::WaterLoopState<f64>;
pub type ThermalNetwork = network::ThermalNetwork<f64>;
pub type Simulator = sim::Simulator<f64>;
pub type SimState = sim::SimState<f64>;
pub type ReducedModel = sysid::ReducedModel<f64>;
pub type MpcConfig = controller::MpcConfig<f64>;
pub type MpcController = controller::MpcController<f64>;
pub type PiController = controller::PiController<f64>;
pub type ControlCommand = controller::ControlCommand<f64>;

