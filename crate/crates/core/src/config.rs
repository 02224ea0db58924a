//! Scenario files: plain-text `key = value` lines grouped under bracketed
//! section headers.
//!
//! The format is deliberately dumb: no nesting, no quoting, no includes.
//! Lines starting with `#` or `;` are comments. Every key has a default,
//! so an empty file is a valid scenario; unknown sections or keys are
//! rejected with their line number. Serializing and reparsing a config
//! yields an equal config, which keeps generated parameter overlays
//! honest.

use crate::controller::{MpcConfig, PiConfig};
use crate::error::{Error, Result};
use crate::geometry::{CoverGeometry, LoopGeometry};
use crate::materials::Material;
use crate::network::{ExchangeCoefficients, MaterialSet};
use crate::peltier::{derive_peltier_coefficients, PeltierSpecs};
use crate::profile::SetpointProfile;
use crate::sim::{Disturbance, PeltierMode, Scheme};
use crate::waterloop::PumpMap;
use std::fmt::Write as _;
use std::path::Path;

/// Surface temperatures the bench can actually render. Closed-loop
/// profiles commanding outside this band are rejected up front instead of
/// letting the run chase an unreachable setpoint.
pub const RENDERABLE_MIN_C: f64 = 15.8;
pub const RENDERABLE_MAX_C: f64 = 66.6;

/// Face command envelope considered safe for skin contact, C. Wider
/// envelopes need the explicit opt-out flag.
pub const COMMAND_ENVELOPE_MIN_C: f64 = 12.0;
pub const COMMAND_ENVELOPE_MAX_C: f64 = 77.0;

const SECTIONS: [&str; 10] = [
    "materials",
    "geometry",
    "loop",
    "peltier",
    "pump",
    "controller",
    "profile",
    "disturbances",
    "integrator",
    "output",
];

/// `[materials]`: conductivity W/(m K), density kg/m3, specific heat
/// J/(kg K) for the four stock materials.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialKeys {
    pub water_conductivity: f64,
    pub water_density: f64,
    pub water_specific_heat: f64,
    pub gel_conductivity: f64,
    pub gel_density: f64,
    pub gel_specific_heat: f64,
    pub foam_conductivity: f64,
    pub foam_density: f64,
    pub foam_specific_heat: f64,
    pub tube_wall_conductivity: f64,
    pub tube_wall_density: f64,
    pub tube_wall_specific_heat: f64,
}

impl Default for MaterialKeys {
    fn default() -> Self {
        let water = crate::materials::water::<f64>();
        let gel = crate::materials::gel::<f64>();
        let foam = crate::materials::foam::<f64>();
        let tube = crate::materials::tube_wall::<f64>();
        Self {
            water_conductivity: water.conductivity,
            water_density: water.density,
            water_specific_heat: water.specific_heat,
            gel_conductivity: gel.conductivity,
            gel_density: gel.density,
            gel_specific_heat: gel.specific_heat,
            foam_conductivity: foam.conductivity,
            foam_density: foam.density,
            foam_specific_heat: foam.specific_heat,
            tube_wall_conductivity: tube.conductivity,
            tube_wall_density: tube.density,
            tube_wall_specific_heat: tube.specific_heat,
        }
    }
}

/// `[geometry]`: cover dimensions plus the film and shell coefficients
/// closing the heat paths the geometry defines. Channel length is always
/// derived as `active_area / channel_pitch`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryKeys {
    /// Semicircular channel diameter, m. Default 0.003.
    pub channel_diameter: f64,
    /// Channel spacing, m. Default 0.01.
    pub channel_pitch: f64,
    /// Active cover area, m2. Default about 0.0272; calibrated.
    pub active_area: f64,
    /// Gel skin thickness, m. Default 0.001.
    pub gel_thickness: f64,
    /// Foam body thickness, m. Default 0.006.
    pub foam_thickness: f64,
    /// Channel cells in the network. Default 10.
    pub cover_cells: usize,
    /// Water-side film, W/(m2 K). Default about 1534; calibrated.
    pub h_water_wall: f64,
    /// Effective surface-to-air film including radiation and edge
    /// losses, W/(m2 K). Default about 42.1; calibrated.
    pub h_surface_ambient: f64,
    /// Tubing-to-air film, W/(m2 K). Default 8.
    pub h_tube_ambient: f64,
    /// Tank shell loss, W/K. Default 0.1.
    pub tank_loss: f64,
}

impl Default for GeometryKeys {
    fn default() -> Self {
        let cover = CoverGeometry::<f64>::default();
        let x = ExchangeCoefficients::<f64>::default();
        Self {
            channel_diameter: cover.channel_diameter,
            channel_pitch: cover.channel_pitch,
            active_area: cover.active_area,
            gel_thickness: cover.gel_thickness,
            foam_thickness: cover.foam_thickness,
            cover_cells: cover.n_cells,
            h_water_wall: x.h_water_wall,
            h_surface_ambient: x.h_surface_ambient,
            h_tube_ambient: x.h_tube_ambient,
            tank_loss: x.tank_loss,
        }
    }
}

/// `[loop]`: tank and tubing.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopKeys {
    /// Tube bore, m. Default 0.0025.
    pub tube_inner_diameter: f64,
    /// Supply plus return tube length, m. Default 1.46.
    pub tube_length: f64,
    /// Tube wall thickness, m. Default 0.001.
    pub tube_wall_thickness: f64,
    /// Tank volume, m3. Default about 2.73e-5; calibrated.
    pub tank_volume: f64,
    /// Tube cells in the network, split evenly between the runs; must be
    /// even. Default 10.
    pub n_cells: usize,
    /// Reported spread between the three tank probe heights, C. Default 0.
    pub stratification_offset: f64,
}

impl Default for LoopKeys {
    fn default() -> Self {
        let g = LoopGeometry::<f64>::default();
        Self {
            tube_inner_diameter: g.tube_inner_diameter,
            tube_length: g.tube_length,
            tube_wall_thickness: g.tube_wall_thickness,
            tank_volume: g.tank_volume,
            n_cells: g.n_cells,
            stratification_offset: 0.0,
        }
    }
}

/// How the `[peltier]` faces are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeltierModeKey {
    /// First-order lag toward the clamped command. Default.
    Command,
    /// Faces forced to the command immediately; characterization runs.
    Pinned,
    /// Constant drive current against a heat sink.
    Current,
    /// Faces disconnected.
    Off,
}

/// `[peltier]`: device ratings and drive mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PeltierKeys {
    /// Zero-load maximum temperature difference, K. Default 72.
    pub dt_max: f64,
    /// Zero-difference maximum pumped heat, W. Default 77.1.
    pub q_max: f64,
    /// Rated voltage, V. Default 15.7.
    pub v_max: f64,
    /// Rated current, A. Default 8.5.
    pub i_max: f64,
    /// Hot-side reference the ratings are quoted at, K. Default 323.15.
    pub hot_side_reference: f64,
    /// Face area, m2. Default 0.0016.
    pub face_area: f64,
    /// Drive mode. Default `command`.
    pub mode: PeltierModeKey,
    /// Lowest admissible face command, C. Default 12.
    pub command_min: f64,
    /// Highest admissible face command, C. Default 77.
    pub command_max: f64,
    /// Command-following lag, s. Default 3.
    pub lag_tau: f64,
    /// Signed drive current in `current` mode, A. Default 2.
    pub drive_current: f64,
    /// Heat-sink resistance to ambient in `current` mode, K/W.
    /// Default 0.15.
    pub sink_resistance: f64,
    /// Water-side face lump in `current` mode, J/K. Default 20.
    pub face_capacity: f64,
    /// Permit a command envelope outside [12, 77] C. Default false.
    pub allow_extended_range: bool,
}

impl Default for PeltierKeys {
    fn default() -> Self {
        let s = PeltierSpecs::<f64>::default();
        Self {
            dt_max: s.dt_max,
            q_max: s.q_max,
            v_max: s.v_max,
            i_max: s.i_max,
            hot_side_reference: s.hot_side_reference,
            face_area: s.face_area,
            mode: PeltierModeKey::Command,
            command_min: COMMAND_ENVELOPE_MIN_C,
            command_max: COMMAND_ENVELOPE_MAX_C,
            lag_tau: 3.0,
            drive_current: 2.0,
            sink_resistance: 0.15,
            face_capacity: 20.0,
            allow_extended_range: false,
        }
    }
}

/// `[pump]`: drive map and the hysteresis schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpKeys {
    /// Lowest drive voltage, V. Default 0.
    pub v_min: f64,
    /// Full-scale drive voltage, V. Default 5.
    pub v_max: f64,
    /// No flow at or below this voltage, V. Default 0.5.
    pub deadband: f64,
    /// Full-scale flow, ml/min. Default 80.
    pub max_flow_ml_min: f64,
    /// Error band that keeps the schedule boosted, C. Default 0.5.
    pub hysteresis_c: f64,
    /// Fraction of `v_max` held once inside the band. Default 0.4.
    pub hold_fraction: f64,
    /// Drive used when no controller runs, V. Default 5.
    pub open_loop_voltage: f64,
}

impl Default for PumpKeys {
    fn default() -> Self {
        let m = PumpMap::<f64>::default();
        Self {
            v_min: m.v_min,
            v_max: m.v_max,
            deadband: m.deadband,
            max_flow_ml_min: 80.0,
            hysteresis_c: 0.5,
            hold_fraction: 0.4,
            open_loop_voltage: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Mpc,
    Pi,
    /// Open loop: the profile drives the faces directly and the pump runs
    /// at `pump.open_loop_voltage`.
    None,
}

/// `[controller]`: tracking law and its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerKeys {
    /// `mpc`, `pi` or `none`. Default `mpc`.
    pub kind: ControllerKind,
    /// Prediction horizon, ticks. Default 20.
    pub horizon: usize,
    /// Tracking weight. Default 1.
    pub q: f64,
    /// Command move weight. Default 0.05.
    pub r: f64,
    /// Pump-use weight, joint mode only. Default 0.001.
    pub rho: f64,
    /// Identified model order. Default 3.
    pub model_order: usize,
    /// Put the pump voltage into the decision vector. Default false.
    pub joint: bool,
    /// Solver iteration budget per tick. Default 500.
    pub solver_max_iterations: usize,
    /// Solver projected-gradient stop. Default 1e-8.
    pub solver_tolerance: f64,
    /// PI proportional gain; 0 tunes both gains from the identified
    /// model. Default 0.
    pub kp: f64,
    /// PI integral gain; see `kp`. Default 0.
    pub ki: f64,
}

impl Default for ControllerKeys {
    fn default() -> Self {
        let m = MpcConfig::<f64>::default();
        Self {
            kind: ControllerKind::Mpc,
            horizon: m.horizon,
            q: m.q,
            r: m.r,
            rho: m.rho,
            model_order: m.model_order,
            joint: m.joint,
            solver_max_iterations: m.solver_max_iterations,
            solver_tolerance: m.solver_tolerance,
            kp: 0.0,
            ki: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Constant,
    Steps,
    Square,
    Sine,
}

/// `[profile]`: the setpoint schedule. With `controller.kind = none` the
/// same schedule drives the faces open loop instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileKeys {
    /// `constant`, `steps`, `square` or `sine`. Default `constant`.
    pub kind: ProfileKind,
    /// Constant setpoint, C. Default 22.
    pub value: f64,
    /// Step levels, C, comma separated. Default `22`.
    pub levels: Vec<f64>,
    /// Hold per step, s. Default 60.
    pub hold: f64,
    /// Wave midline, C. Default 31.
    pub mean: f64,
    /// Wave amplitude, C. Default 14.
    pub amplitude: f64,
    /// Wave period, s. Default 360.
    pub period: f64,
}

impl Default for ProfileKeys {
    fn default() -> Self {
        Self {
            kind: ProfileKind::Constant,
            value: 22.0,
            levels: vec![22.0],
            hold: 60.0,
            mean: 31.0,
            amplitude: 14.0,
            period: 360.0,
        }
    }
}

/// `[disturbances]`: zero durations disable each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceKeys {
    /// Hand contact onset, s. Default 0.
    pub hand_start: f64,
    /// Hand contact duration, s; 0 disables. Default 0.
    pub hand_duration: f64,
    /// Contact patch, m2. Default 0.005.
    pub hand_area: f64,
    /// Skin-side temperature, C. Default 33.
    pub hand_skin_temp: f64,
    /// Contact film, W/(m2 K). Default 100.
    pub hand_coefficient: f64,
    /// Ambient shift onset, s. Default 0.
    pub ambient_start: f64,
    /// Ambient shift duration, s; 0 disables. Default 0.
    pub ambient_duration: f64,
    /// Ambient offset while active, C. Default 0.
    pub ambient_offset: f64,
}

impl Default for DisturbanceKeys {
    fn default() -> Self {
        Self {
            hand_start: 0.0,
            hand_duration: 0.0,
            hand_area: 0.005,
            hand_skin_temp: 33.0,
            hand_coefficient: 100.0,
            ambient_start: 0.0,
            ambient_duration: 0.0,
            ambient_offset: 0.0,
        }
    }
}

/// `[integrator]`: stepping and run length.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorKeys {
    /// Simulation step, s. Default 0.05.
    pub dt: f64,
    /// `implicit` or `rk4`. Default `implicit`.
    pub scheme: Scheme,
    /// Control tick, s; must be a multiple of `dt`. Default 0.5.
    pub control_tick: f64,
    /// Run length, s; 0 runs the profile's natural duration plus a settle
    /// margin. Default 0.
    pub duration: f64,
    /// Uniform starting temperature, C. Default 22.
    pub initial_temp: f64,
    /// Air temperature around the bench, C. Default 22.
    pub ambient_temp: f64,
    /// Robot structure boundary temperature, C. Default 22.
    pub structure_temp: f64,
}

impl Default for IntegratorKeys {
    fn default() -> Self {
        Self {
            dt: 0.05,
            scheme: Scheme::Implicit,
            control_tick: 0.5,
            duration: 0.0,
            initial_temp: 22.0,
            ambient_temp: 22.0,
            structure_temp: 22.0,
        }
    }
}

/// `[output]`: telemetry cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputKeys {
    /// Telemetry row spacing, s; must be a multiple of `dt`. Default 0.5.
    pub sample_dt: f64,
    /// Write the per-tick solver diagnostics sidecar. Default true.
    pub solver_log: bool,
}

impl Default for OutputKeys {
    fn default() -> Self {
        Self {
            sample_dt: 0.5,
            solver_log: true,
        }
    }
}

/// One fully described run. `Default` is a valid do-nothing scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioConfig {
    pub materials: MaterialKeys,
    pub geometry: GeometryKeys,
    pub water_loop: LoopKeys,
    pub peltier: PeltierKeys,
    pub pump: PumpKeys,
    pub controller: ControllerKeys,
    pub profile: ProfileKeys,
    pub disturbances: DisturbanceKeys,
    pub integrator: IntegratorKeys,
    pub output: OutputKeys,
}

fn bad(line: Option<usize>, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

fn num(raw: &str, line: Option<usize>, key: &str) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(line, key, format!("expected a finite number, got `{raw}`"))),
    }
}

fn count(raw: &str, line: Option<usize>, key: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| bad(line, key, format!("expected a non-negative integer, got `{raw}`")))
}

fn flag(raw: &str, line: Option<usize>, key: &str) -> Result<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(line, key, format!("expected true or false, got `{raw}`"))),
    }
}

fn list(raw: &str, line: Option<usize>, key: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(bad(line, key, "expected comma-separated numbers"));
    }
    items.iter().map(|s| num(s, line, key)).collect()
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse_str(&text)
    }

    /// Parses and validates a scenario. An empty string yields the
    /// defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: Some(line),
                    key: None,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Config {
                        line: Some(line),
                        key: None,
                        message: format!(
                            "unknown section `[{name}]`; sections are {}",
                            SECTIONS.map(|s| format!("[{s}]")).join(", ")
                        ),
                    });
                }
                section = Some(name.to_string());
            } else if let Some((key, value)) = trimmed.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                if key.is_empty() {
                    return Err(Error::Config {
                        line: Some(line),
                        key: None,
                        message: "missing key before `=`".into(),
                    });
                }
                let section = section.as_deref().ok_or_else(|| Error::Config {
                    line: Some(line),
                    key: Some(key.to_string()),
                    message: "key appears before any [section] header".into(),
                })?;
                cfg.assign(&format!("{section}.{key}"), value, Some(line))?;
            } else {
                return Err(Error::Config {
                    line: Some(line),
                    key: None,
                    message: format!("expected `key = value` or `[section]`, got `{trimmed}`"),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `section.key = value` override, as used by command-line
    /// overlays and calibration parameter files. The caller revalidates
    /// once all overrides are in.
    pub fn apply_override(&mut self, path: &str, value: &str) -> Result<()> {
        self.assign(path, value.trim(), None)
    }

    fn assign(&mut self, path: &str, raw: &str, line: Option<usize>) -> Result<()> {
        match path {
            "materials.water_conductivity" => {
                self.materials.water_conductivity = num(raw, line, path)?
            }
            "materials.water_density" => self.materials.water_density = num(raw, line, path)?,
            "materials.water_specific_heat" => {
                self.materials.water_specific_heat = num(raw, line, path)?
            }
            "materials.gel_conductivity" => {
                self.materials.gel_conductivity = num(raw, line, path)?
            }
            "materials.gel_density" => self.materials.gel_density = num(raw, line, path)?,
            "materials.gel_specific_heat" => {
                self.materials.gel_specific_heat = num(raw, line, path)?
            }
            "materials.foam_conductivity" => {
                self.materials.foam_conductivity = num(raw, line, path)?
            }
            "materials.foam_density" => self.materials.foam_density = num(raw, line, path)?,
            "materials.foam_specific_heat" => {
                self.materials.foam_specific_heat = num(raw, line, path)?
            }
            "materials.tube_wall_conductivity" => {
                self.materials.tube_wall_conductivity = num(raw, line, path)?
            }
            "materials.tube_wall_density" => {
                self.materials.tube_wall_density = num(raw, line, path)?
            }
            "materials.tube_wall_specific_heat" => {
                self.materials.tube_wall_specific_heat = num(raw, line, path)?
            }

            "geometry.channel_diameter" => self.geometry.channel_diameter = num(raw, line, path)?,
            "geometry.channel_pitch" => self.geometry.channel_pitch = num(raw, line, path)?,
            "geometry.active_area" => self.geometry.active_area = num(raw, line, path)?,
            "geometry.gel_thickness" => self.geometry.gel_thickness = num(raw, line, path)?,
            "geometry.foam_thickness" => self.geometry.foam_thickness = num(raw, line, path)?,
            "geometry.cover_cells" => self.geometry.cover_cells = count(raw, line, path)?,
            "geometry.h_water_wall" => self.geometry.h_water_wall = num(raw, line, path)?,
            "geometry.h_surface_ambient" => {
                self.geometry.h_surface_ambient = num(raw, line, path)?
            }
            "geometry.h_tube_ambient" => self.geometry.h_tube_ambient = num(raw, line, path)?,
            "geometry.tank_loss" => self.geometry.tank_loss = num(raw, line, path)?,

            "loop.tube_inner_diameter" => {
                self.water_loop.tube_inner_diameter = num(raw, line, path)?
            }
            "loop.tube_length" => self.water_loop.tube_length = num(raw, line, path)?,
            "loop.tube_wall_thickness" => {
                self.water_loop.tube_wall_thickness = num(raw, line, path)?
            }
            "loop.tank_volume" => self.water_loop.tank_volume = num(raw, line, path)?,
            "loop.n_cells" => self.water_loop.n_cells = count(raw, line, path)?,
            "loop.stratification_offset" => {
                self.water_loop.stratification_offset = num(raw, line, path)?
            }

            "peltier.dt_max" => self.peltier.dt_max = num(raw, line, path)?,
            "peltier.q_max" => self.peltier.q_max = num(raw, line, path)?,
            "peltier.v_max" => self.peltier.v_max = num(raw, line, path)?,
            "peltier.i_max" => self.peltier.i_max = num(raw, line, path)?,
            "peltier.hot_side_reference" => {
                self.peltier.hot_side_reference = num(raw, line, path)?
            }
            "peltier.face_area" => self.peltier.face_area = num(raw, line, path)?,
            "peltier.mode" => {
                self.peltier.mode = match raw {
                    "command" => PeltierModeKey::Command,
                    "pinned" => PeltierModeKey::Pinned,
                    "current" => PeltierModeKey::Current,
                    "off" => PeltierModeKey::Off,
                    _ => {
                        return Err(bad(
                            line,
                            path,
                            format!("expected command, pinned, current or off, got `{raw}`"),
                        ))
                    }
                }
            }
            "peltier.command_min" => self.peltier.command_min = num(raw, line, path)?,
            "peltier.command_max" => self.peltier.command_max = num(raw, line, path)?,
            "peltier.lag_tau" => self.peltier.lag_tau = num(raw, line, path)?,
            "peltier.drive_current" => self.peltier.drive_current = num(raw, line, path)?,
            "peltier.sink_resistance" => self.peltier.sink_resistance = num(raw, line, path)?,
            "peltier.face_capacity" => self.peltier.face_capacity = num(raw, line, path)?,
            "peltier.allow_extended_range" => {
                self.peltier.allow_extended_range = flag(raw, line, path)?
            }

            "pump.v_min" => self.pump.v_min = num(raw, line, path)?,
            "pump.v_max" => self.pump.v_max = num(raw, line, path)?,
            "pump.deadband" => self.pump.deadband = num(raw, line, path)?,
            "pump.max_flow_ml_min" => self.pump.max_flow_ml_min = num(raw, line, path)?,
            "pump.hysteresis_c" => self.pump.hysteresis_c = num(raw, line, path)?,
            "pump.hold_fraction" => self.pump.hold_fraction = num(raw, line, path)?,
            "pump.open_loop_voltage" => self.pump.open_loop_voltage = num(raw, line, path)?,

            "controller.kind" => {
                self.controller.kind = match raw {
                    "mpc" => ControllerKind::Mpc,
                    "pi" => ControllerKind::Pi,
                    "none" => ControllerKind::None,
                    _ => {
                        return Err(bad(
                            line,
                            path,
                            format!("expected mpc, pi or none, got `{raw}`"),
                        ))
                    }
                }
            }
            "controller.horizon" => self.controller.horizon = count(raw, line, path)?,
            "controller.q" => self.controller.q = num(raw, line, path)?,
            "controller.r" => self.controller.r = num(raw, line, path)?,
            "controller.rho" => self.controller.rho = num(raw, line, path)?,
            "controller.model_order" => self.controller.model_order = count(raw, line, path)?,
            "controller.joint" => self.controller.joint = flag(raw, line, path)?,
            "controller.solver_max_iterations" => {
                self.controller.solver_max_iterations = count(raw, line, path)?
            }
            "controller.solver_tolerance" => {
                self.controller.solver_tolerance = num(raw, line, path)?
            }
            "controller.kp" => self.controller.kp = num(raw, line, path)?,
            "controller.ki" => self.controller.ki = num(raw, line, path)?,

            "profile.kind" => {
                self.profile.kind = match raw {
                    "constant" => ProfileKind::Constant,
                    "steps" => ProfileKind::Steps,
                    "square" => ProfileKind::Square,
                    "sine" => ProfileKind::Sine,
                    _ => {
                        return Err(bad(
                            line,
                            path,
                            format!("expected constant, steps, square or sine, got `{raw}`"),
                        ))
                    }
                }
            }
            "profile.value" => self.profile.value = num(raw, line, path)?,
            "profile.levels" => self.profile.levels = list(raw, line, path)?,
            "profile.hold" => self.profile.hold = num(raw, line, path)?,
            "profile.mean" => self.profile.mean = num(raw, line, path)?,
            "profile.amplitude" => self.profile.amplitude = num(raw, line, path)?,
            "profile.period" => self.profile.period = num(raw, line, path)?,

            "disturbances.hand_start" => self.disturbances.hand_start = num(raw, line, path)?,
            "disturbances.hand_duration" => {
                self.disturbances.hand_duration = num(raw, line, path)?
            }
            "disturbances.hand_area" => self.disturbances.hand_area = num(raw, line, path)?,
            "disturbances.hand_skin_temp" => {
                self.disturbances.hand_skin_temp = num(raw, line, path)?
            }
            "disturbances.hand_coefficient" => {
                self.disturbances.hand_coefficient = num(raw, line, path)?
            }
            "disturbances.ambient_start" => {
                self.disturbances.ambient_start = num(raw, line, path)?
            }
            "disturbances.ambient_duration" => {
                self.disturbances.ambient_duration = num(raw, line, path)?
            }
            "disturbances.ambient_offset" => {
                self.disturbances.ambient_offset = num(raw, line, path)?
            }

            "integrator.dt" => self.integrator.dt = num(raw, line, path)?,
            "integrator.scheme" => {
                self.integrator.scheme = match raw {
                    "implicit" => Scheme::Implicit,
                    "rk4" => Scheme::Rk4,
                    _ => {
                        return Err(bad(
                            line,
                            path,
                            format!("expected implicit or rk4, got `{raw}`"),
                        ))
                    }
                }
            }
            "integrator.control_tick" => self.integrator.control_tick = num(raw, line, path)?,
            "integrator.duration" => self.integrator.duration = num(raw, line, path)?,
            "integrator.initial_temp" => self.integrator.initial_temp = num(raw, line, path)?,
            "integrator.ambient_temp" => self.integrator.ambient_temp = num(raw, line, path)?,
            "integrator.structure_temp" => {
                self.integrator.structure_temp = num(raw, line, path)?
            }

            "output.sample_dt" => self.output.sample_dt = num(raw, line, path)?,
            "output.solver_log" => self.output.solver_log = flag(raw, line, path)?,

            _ => {
                return Err(bad(line, path, "unknown key"));
            }
        }
        Ok(())
    }

    /// Canonical text form: every section, every key, declaration order.
    /// `parse_str` of the result reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.materials;
        let _ = writeln!(s, "[materials]");
        let _ = writeln!(s, "water_conductivity = {}", m.water_conductivity);
        let _ = writeln!(s, "water_density = {}", m.water_density);
        let _ = writeln!(s, "water_specific_heat = {}", m.water_specific_heat);
        let _ = writeln!(s, "gel_conductivity = {}", m.gel_conductivity);
        let _ = writeln!(s, "gel_density = {}", m.gel_density);
        let _ = writeln!(s, "gel_specific_heat = {}", m.gel_specific_heat);
        let _ = writeln!(s, "foam_conductivity = {}", m.foam_conductivity);
        let _ = writeln!(s, "foam_density = {}", m.foam_density);
        let _ = writeln!(s, "foam_specific_heat = {}", m.foam_specific_heat);
        let _ = writeln!(s, "tube_wall_conductivity = {}", m.tube_wall_conductivity);
        let _ = writeln!(s, "tube_wall_density = {}", m.tube_wall_density);
        let _ = writeln!(s, "tube_wall_specific_heat = {}", m.tube_wall_specific_heat);

        let g = &self.geometry;
        let _ = writeln!(s, "\n[geometry]");
        let _ = writeln!(s, "channel_diameter = {}", g.channel_diameter);
        let _ = writeln!(s, "channel_pitch = {}", g.channel_pitch);
        let _ = writeln!(s, "active_area = {}", g.active_area);
        let _ = writeln!(s, "gel_thickness = {}", g.gel_thickness);
        let _ = writeln!(s, "foam_thickness = {}", g.foam_thickness);
        let _ = writeln!(s, "cover_cells = {}", g.cover_cells);
        let _ = writeln!(s, "h_water_wall = {}", g.h_water_wall);
        let _ = writeln!(s, "h_surface_ambient = {}", g.h_surface_ambient);
        let _ = writeln!(s, "h_tube_ambient = {}", g.h_tube_ambient);
        let _ = writeln!(s, "tank_loss = {}", g.tank_loss);

        let l = &self.water_loop;
        let _ = writeln!(s, "\n[loop]");
        let _ = writeln!(s, "tube_inner_diameter = {}", l.tube_inner_diameter);
        let _ = writeln!(s, "tube_length = {}", l.tube_length);
        let _ = writeln!(s, "tube_wall_thickness = {}", l.tube_wall_thickness);
        let _ = writeln!(s, "tank_volume = {}", l.tank_volume);
        let _ = writeln!(s, "n_cells = {}", l.n_cells);
        let _ = writeln!(s, "stratification_offset = {}", l.stratification_offset);

        let p = &self.peltier;
        let _ = writeln!(s, "\n[peltier]");
        let _ = writeln!(s, "dt_max = {}", p.dt_max);
        let _ = writeln!(s, "q_max = {}", p.q_max);
        let _ = writeln!(s, "v_max = {}", p.v_max);
        let _ = writeln!(s, "i_max = {}", p.i_max);
        let _ = writeln!(s, "hot_side_reference = {}", p.hot_side_reference);
        let _ = writeln!(s, "face_area = {}", p.face_area);
        let mode = match p.mode {
            PeltierModeKey::Command => "command",
            PeltierModeKey::Pinned => "pinned",
            PeltierModeKey::Current => "current",
            PeltierModeKey::Off => "off",
        };
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "command_min = {}", p.command_min);
        let _ = writeln!(s, "command_max = {}", p.command_max);
        let _ = writeln!(s, "lag_tau = {}", p.lag_tau);
        let _ = writeln!(s, "drive_current = {}", p.drive_current);
        let _ = writeln!(s, "sink_resistance = {}", p.sink_resistance);
        let _ = writeln!(s, "face_capacity = {}", p.face_capacity);
        let _ = writeln!(s, "allow_extended_range = {}", p.allow_extended_range);

        let pu = &self.pump;
        let _ = writeln!(s, "\n[pump]");
        let _ = writeln!(s, "v_min = {}", pu.v_min);
        let _ = writeln!(s, "v_max = {}", pu.v_max);
        let _ = writeln!(s, "deadband = {}", pu.deadband);
        let _ = writeln!(s, "max_flow_ml_min = {}", pu.max_flow_ml_min);
        let _ = writeln!(s, "hysteresis_c = {}", pu.hysteresis_c);
        let _ = writeln!(s, "hold_fraction = {}", pu.hold_fraction);
        let _ = writeln!(s, "open_loop_voltage = {}", pu.open_loop_voltage);

        let c = &self.controller;
        let _ = writeln!(s, "\n[controller]");
        let kind = match c.kind {
            ControllerKind::Mpc => "mpc",
            ControllerKind::Pi => "pi",
            ControllerKind::None => "none",
        };
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "horizon = {}", c.horizon);
        let _ = writeln!(s, "q = {}", c.q);
        let _ = writeln!(s, "r = {}", c.r);
        let _ = writeln!(s, "rho = {}", c.rho);
        let _ = writeln!(s, "model_order = {}", c.model_order);
        let _ = writeln!(s, "joint = {}", c.joint);
        let _ = writeln!(s, "solver_max_iterations = {}", c.solver_max_iterations);
        let _ = writeln!(s, "solver_tolerance = {}", c.solver_tolerance);
        let _ = writeln!(s, "kp = {}", c.kp);
        let _ = writeln!(s, "ki = {}", c.ki);

        let pr = &self.profile;
        let _ = writeln!(s, "\n[profile]");
        let kind = match pr.kind {
            ProfileKind::Constant => "constant",
            ProfileKind::Steps => "steps",
            ProfileKind::Square => "square",
            ProfileKind::Sine => "sine",
        };
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "value = {}", pr.value);
        let levels: Vec<String> = pr.levels.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "levels = {}", levels.join(", "));
        let _ = writeln!(s, "hold = {}", pr.hold);
        let _ = writeln!(s, "mean = {}", pr.mean);
        let _ = writeln!(s, "amplitude = {}", pr.amplitude);
        let _ = writeln!(s, "period = {}", pr.period);

        let d = &self.disturbances;
        let _ = writeln!(s, "\n[disturbances]");
        let _ = writeln!(s, "hand_start = {}", d.hand_start);
        let _ = writeln!(s, "hand_duration = {}", d.hand_duration);
        let _ = writeln!(s, "hand_area = {}", d.hand_area);
        let _ = writeln!(s, "hand_skin_temp = {}", d.hand_skin_temp);
        let _ = writeln!(s, "hand_coefficient = {}", d.hand_coefficient);
        let _ = writeln!(s, "ambient_start = {}", d.ambient_start);
        let _ = writeln!(s, "ambient_duration = {}", d.ambient_duration);
        let _ = writeln!(s, "ambient_offset = {}", d.ambient_offset);

        let i = &self.integrator;
        let _ = writeln!(s, "\n[integrator]");
        let _ = writeln!(s, "dt = {}", i.dt);
        let scheme = match i.scheme {
            Scheme::Implicit => "implicit",
            Scheme::Rk4 => "rk4",
        };
        let _ = writeln!(s, "scheme = {scheme}");
        let _ = writeln!(s, "control_tick = {}", i.control_tick);
        let _ = writeln!(s, "duration = {}", i.duration);
        let _ = writeln!(s, "initial_temp = {}", i.initial_temp);
        let _ = writeln!(s, "ambient_temp = {}", i.ambient_temp);
        let _ = writeln!(s, "structure_temp = {}", i.structure_temp);

        let o = &self.output;
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "sample_dt = {}", o.sample_dt);
        let _ = writeln!(s, "solver_log = {}", o.solver_log);
        s
    }

    /// Full validation; every parse ends here, and override users call it
    /// again once their overlays are applied.
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("materials.water_conductivity", self.materials.water_conductivity),
            ("materials.water_density", self.materials.water_density),
            ("materials.water_specific_heat", self.materials.water_specific_heat),
            ("materials.gel_conductivity", self.materials.gel_conductivity),
            ("materials.gel_density", self.materials.gel_density),
            ("materials.gel_specific_heat", self.materials.gel_specific_heat),
            ("materials.foam_conductivity", self.materials.foam_conductivity),
            ("materials.foam_density", self.materials.foam_density),
            ("materials.foam_specific_heat", self.materials.foam_specific_heat),
            ("materials.tube_wall_conductivity", self.materials.tube_wall_conductivity),
            ("materials.tube_wall_density", self.materials.tube_wall_density),
            ("materials.tube_wall_specific_heat", self.materials.tube_wall_specific_heat),
        ] {
            if !(v > 0.0) {
                return Err(bad(None, key, "must be positive"));
            }
        }

        self.cover_geometry()
            .validated()
            .map_err(|e| relabel(e, "geometry"))?;
        for (key, v) in [
            ("geometry.h_water_wall", self.geometry.h_water_wall),
            ("geometry.h_surface_ambient", self.geometry.h_surface_ambient),
            ("geometry.h_tube_ambient", self.geometry.h_tube_ambient),
            ("geometry.tank_loss", self.geometry.tank_loss),
        ] {
            if !(v >= 0.0) {
                return Err(bad(None, key, "must be non-negative"));
            }
        }
        if !(self.geometry.h_water_wall > 0.0) {
            return Err(bad(None, "geometry.h_water_wall", "must be positive"));
        }

        self.loop_geometry()
            .validated()
            .map_err(|e| relabel(e, "loop"))?;
        if !self.water_loop.stratification_offset.is_finite() {
            return Err(bad(None, "loop.stratification_offset", "must be finite"));
        }

        derive_peltier_coefficients(&self.peltier_specs())
            .map_err(|e| relabel(e, "peltier"))?;
        let p = &self.peltier;
        if !(p.command_min < p.command_max) {
            return Err(bad(
                None,
                "peltier.command_min",
                "command_min must sit below command_max",
            ));
        }
        if !p.allow_extended_range
            && (p.command_min < COMMAND_ENVELOPE_MIN_C || p.command_max > COMMAND_ENVELOPE_MAX_C)
        {
            return Err(bad(
                None,
                "peltier.command_max",
                format!(
                    "command envelope [{}, {}] leaves the safe [{COMMAND_ENVELOPE_MIN_C}, \
                     {COMMAND_ENVELOPE_MAX_C}] C band; set allow_extended_range = true to permit it",
                    p.command_min, p.command_max
                ),
            ));
        }
        if !(p.lag_tau > 0.0) {
            return Err(bad(None, "peltier.lag_tau", "must be positive"));
        }
        if !(p.sink_resistance > 0.0) {
            return Err(bad(None, "peltier.sink_resistance", "must be positive"));
        }
        if !(p.face_capacity > 0.0) {
            return Err(bad(None, "peltier.face_capacity", "must be positive"));
        }
        if p.mode == PeltierModeKey::Current && p.drive_current.abs() > p.i_max {
            return Err(bad(
                None,
                "peltier.drive_current",
                format!("magnitude exceeds the rated {} A", p.i_max),
            ));
        }

        self.pump_map().validated().map_err(|e| relabel(e, "pump"))?;
        if !(self.pump.hysteresis_c > 0.0) {
            return Err(bad(None, "pump.hysteresis_c", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pump.hold_fraction) {
            return Err(bad(None, "pump.hold_fraction", "must lie in [0, 1]"));
        }
        if self.pump.open_loop_voltage < self.pump.v_min
            || self.pump.open_loop_voltage > self.pump.v_max
        {
            return Err(bad(
                None,
                "pump.open_loop_voltage",
                "must lie within [v_min, v_max]",
            ));
        }

        self.mpc_config()
            .validated()
            .map_err(|e| relabel(e, "controller"))?;
        let c = &self.controller;
        if c.model_order > 3 {
            return Err(bad(None, "controller.model_order", "supported orders are 0 to 3"));
        }
        if (c.kp == 0.0) != (c.ki == 0.0) {
            return Err(bad(
                None,
                "controller.kp",
                "set kp and ki together, or leave both 0 to tune from the identified model",
            ));
        }
        if !(c.kp >= 0.0 && c.ki >= 0.0) {
            return Err(bad(None, "controller.kp", "gains must be non-negative"));
        }

        let profile = self
            .setpoint_profile()
            .validated()
            .map_err(|e| relabel(e, "profile"))?;
        if self.controller.kind != ControllerKind::None {
            let (lo, hi) = profile.extremes();
            if lo < RENDERABLE_MIN_C || hi > RENDERABLE_MAX_C {
                return Err(bad(
                    None,
                    "profile",
                    format!(
                        "setpoints span [{lo}, {hi}] C but the surface can only render \
                         [{RENDERABLE_MIN_C}, {RENDERABLE_MAX_C}] C"
                    ),
                ));
            }
        }

        let d = &self.disturbances;
        for (key, v) in [
            ("disturbances.hand_start", d.hand_start),
            ("disturbances.hand_duration", d.hand_duration),
            ("disturbances.hand_area", d.hand_area),
            ("disturbances.hand_coefficient", d.hand_coefficient),
            ("disturbances.ambient_start", d.ambient_start),
            ("disturbances.ambient_duration", d.ambient_duration),
        ] {
            if !(v >= 0.0) {
                return Err(bad(None, key, "must be non-negative"));
            }
        }

        let i = &self.integrator;
        if !(i.dt > 0.0) {
            return Err(bad(None, "integrator.dt", "must be positive"));
        }
        check_multiple(i.control_tick, i.dt, "integrator.control_tick")?;
        check_multiple(self.output.sample_dt, i.dt, "output.sample_dt")?;
        if !(i.duration >= 0.0) {
            return Err(bad(None, "integrator.duration", "must be non-negative"));
        }
        for (key, v) in [
            ("integrator.initial_temp", i.initial_temp),
            ("integrator.ambient_temp", i.ambient_temp),
            ("integrator.structure_temp", i.structure_temp),
        ] {
            if !(-20.0..=120.0).contains(&v) {
                return Err(bad(None, key, "must lie within the [-20, 120] C sanity band"));
            }
        }
        Ok(())
    }

    pub fn material_set(&self) -> MaterialSet<f64> {
        let m = &self.materials;
        let mat = |name: &str, k: f64, rho: f64, c: f64| Material {
            name: name.to_string(),
            conductivity: k,
            density: rho,
            specific_heat: c,
        };
        MaterialSet {
            water: mat("water", m.water_conductivity, m.water_density, m.water_specific_heat),
            gel: mat("gel", m.gel_conductivity, m.gel_density, m.gel_specific_heat),
            foam: mat("foam", m.foam_conductivity, m.foam_density, m.foam_specific_heat),
            tube_wall: mat(
                "tube_wall",
                m.tube_wall_conductivity,
                m.tube_wall_density,
                m.tube_wall_specific_heat,
            ),
        }
    }

    pub fn cover_geometry(&self) -> CoverGeometry<f64> {
        let g = &self.geometry;
        CoverGeometry {
            channel_diameter: g.channel_diameter,
            channel_pitch: g.channel_pitch,
            active_area: g.active_area,
            gel_thickness: g.gel_thickness,
            foam_thickness: g.foam_thickness,
            channel_total_length: CoverGeometry::derived_channel_length(
                g.active_area,
                g.channel_pitch,
            ),
            n_cells: g.cover_cells,
        }
    }

    pub fn loop_geometry(&self) -> LoopGeometry<f64> {
        let l = &self.water_loop;
        LoopGeometry {
            tube_inner_diameter: l.tube_inner_diameter,
            tube_length: l.tube_length,
            tube_wall_thickness: l.tube_wall_thickness,
            tank_volume: l.tank_volume,
            n_cells: l.n_cells,
        }
    }

    pub fn exchange_coefficients(&self) -> ExchangeCoefficients<f64> {
        let g = &self.geometry;
        ExchangeCoefficients {
            h_water_wall: g.h_water_wall,
            h_surface_ambient: g.h_surface_ambient,
            h_tube_ambient: g.h_tube_ambient,
            tank_loss: g.tank_loss,
        }
    }

    pub fn peltier_specs(&self) -> PeltierSpecs<f64> {
        let p = &self.peltier;
        PeltierSpecs {
            dt_max: p.dt_max,
            q_max: p.q_max,
            v_max: p.v_max,
            i_max: p.i_max,
            hot_side_reference: p.hot_side_reference,
            face_area: p.face_area,
        }
    }

    pub fn peltier_mode(&self) -> PeltierMode<f64> {
        let p = &self.peltier;
        match p.mode {
            PeltierModeKey::Command => PeltierMode::Command {
                tau: p.lag_tau,
                min_c: p.command_min,
                max_c: p.command_max,
            },
            PeltierModeKey::Pinned => PeltierMode::Pinned,
            PeltierModeKey::Current => PeltierMode::Current {
                drive_current: p.drive_current,
                sink_resistance: p.sink_resistance,
                face_capacity: p.face_capacity,
            },
            PeltierModeKey::Off => PeltierMode::Off,
        }
    }

    pub fn pump_map(&self) -> PumpMap<f64> {
        let p = &self.pump;
        PumpMap {
            v_min: p.v_min,
            v_max: p.v_max,
            deadband: p.deadband,
            q_max: p.max_flow_ml_min * 1.0e-6 / 60.0,
        }
    }

    pub fn setpoint_profile(&self) -> SetpointProfile<f64> {
        let p = &self.profile;
        match p.kind {
            ProfileKind::Constant => SetpointProfile::Constant { value: p.value },
            ProfileKind::Steps => SetpointProfile::StepSequence {
                levels: p.levels.clone(),
                hold: p.hold,
            },
            ProfileKind::Square => SetpointProfile::SquareWave {
                mean: p.mean,
                amplitude: p.amplitude,
                period: p.period,
            },
            ProfileKind::Sine => SetpointProfile::SineWave {
                mean: p.mean,
                amplitude: p.amplitude,
                period: p.period,
            },
        }
    }

    pub fn mpc_config(&self) -> MpcConfig<f64> {
        let c = &self.controller;
        MpcConfig {
            horizon: c.horizon,
            tick: self.integrator.control_tick,
            q: c.q,
            r: c.r,
            rho: c.rho,
            model_order: c.model_order,
            joint: c.joint,
            command_min: self.peltier.command_min,
            command_max: self.peltier.command_max,
            pump_min: self.pump.v_min,
            pump_max: self.pump.v_max,
            solver_max_iterations: c.solver_max_iterations,
            solver_tolerance: c.solver_tolerance,
        }
    }

    /// Explicit PI gains, when the scenario pins them instead of tuning
    /// from the identified model.
    pub fn pi_config(&self) -> Option<PiConfig<f64>> {
        let c = &self.controller;
        if c.kp == 0.0 && c.ki == 0.0 {
            return None;
        }
        Some(PiConfig {
            kp: c.kp,
            ki: c.ki,
            tick: self.integrator.control_tick,
            command_min: self.peltier.command_min,
            command_max: self.peltier.command_max,
        })
    }

    pub fn disturbance_list(&self) -> Vec<Disturbance<f64>> {
        let d = &self.disturbances;
        let mut out = Vec::new();
        if d.hand_duration > 0.0 {
            out.push(Disturbance::HandContact {
                start: d.hand_start,
                duration: d.hand_duration,
                area: d.hand_area,
                skin_temp: d.hand_skin_temp,
                coefficient: d.hand_coefficient,
            });
        }
        if d.ambient_duration > 0.0 && d.ambient_offset != 0.0 {
            out.push(Disturbance::AmbientShift {
                start: d.ambient_start,
                duration: d.ambient_duration,
                offset: d.ambient_offset,
            });
        }
        out
    }
}

fn relabel(e: Error, key: &str) -> Error {
    let message = match e {
        Error::InvalidParameter { message, .. } => message,
        other => other.to_string(),
    };
    Error::Config {
        line: None,
        key: Some(key.to_string()),
        message,
    }
}

fn check_multiple(value: f64, dt: f64, key: &str) -> Result<()> {
    if !(value > 0.0) {
        return Err(bad(None, key, "must be positive"));
    }
    let ratio = value / dt;
    if (ratio - ratio.round()).abs() > 1.0e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(bad(
            None,
            key,
            format!("must be a whole multiple of integrator.dt = {dt}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_input_yields_the_documented_defaults() {
        let cfg = ScenarioConfig::parse_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.controller.kind, ControllerKind::Mpc);
        assert_eq!(cfg.integrator.dt, 0.05);
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.water_loop.tank_volume = 0.1 + 0.2;
        cfg.geometry.h_water_wall = 1234.567891234;
        cfg.controller.r = 1.0e-7;
        cfg.profile.kind = ProfileKind::Steps;
        cfg.profile.levels = vec![25.0, 28.0, 31.0 + 1.0e-13];
        cfg.peltier.mode = PeltierModeKey::Pinned;
        cfg.integrator.scheme = Scheme::Rk4;
        cfg.output.solver_log = false;
        let reparsed = ScenarioConfig::parse_str(&cfg.to_text()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "\n# heading\n  [pump]  \n; note\n  v_max =  6.5 \ndeadband=0.5\n";
        let cfg = ScenarioConfig::parse_str(text).unwrap();
        assert_eq!(cfg.pump.v_max, 6.5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let err = ScenarioConfig::parse_str("[pump]\nbogus = 1\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2"), "{text}");
        assert!(text.contains("pump.bogus"), "{text}");

        let err = ScenarioConfig::parse_str("[turbopump]\n").unwrap_err();
        assert!(err.to_string().contains("unknown section"), "{err}");
    }

    #[test]
    fn keys_need_a_section_and_values_need_a_key() {
        let err = ScenarioConfig::parse_str("v_max = 5\n").unwrap_err();
        assert!(err.to_string().contains("before any [section]"), "{err}");

        let err = ScenarioConfig::parse_str("[pump]\njust words\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn malformed_numbers_name_the_key() {
        let err = ScenarioConfig::parse_str("[pump]\nv_max = fast\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("pump.v_max"), "{text}");
        assert!(text.contains("finite number"), "{text}");

        assert!(ScenarioConfig::parse_str("[pump]\nv_max = inf\n").is_err());
    }

    #[test]
    fn command_envelope_needs_the_explicit_flag_to_widen() {
        let err = ScenarioConfig::parse_str("[peltier]\ncommand_max = 200\n").unwrap_err();
        assert!(err.to_string().contains("allow_extended_range"), "{err}");

        let cfg = ScenarioConfig::parse_str(
            "[peltier]\ncommand_max = 200\nallow_extended_range = true\n",
        )
        .unwrap();
        assert_eq!(cfg.peltier.command_max, 200.0);
    }

    #[test]
    fn unreachable_setpoints_are_rejected_unless_open_loop() {
        let text = "[profile]\nkind = square\nmean = 40\namplitude = 40\n";
        let err = ScenarioConfig::parse_str(text).unwrap_err();
        assert!(err.to_string().contains("render"), "{err}");

        // Open loop the same numbers drive the faces, not the surface.
        let open = format!("{text}[controller]\nkind = none\n[peltier]\nmode = pinned\n");
        assert!(ScenarioConfig::parse_str(&open).is_ok());
    }

    #[test]
    fn control_tick_must_align_with_dt() {
        let err =
            ScenarioConfig::parse_str("[integrator]\ndt = 0.05\ncontrol_tick = 0.52\n").unwrap_err();
        assert!(err.to_string().contains("integrator.control_tick"), "{err}");

        assert!(
            ScenarioConfig::parse_str("[integrator]\ndt = 0.05\ncontrol_tick = 0.5\n").is_ok()
        );
    }

    #[test]
    fn overrides_reach_nested_keys_and_reject_unknown_paths() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_override("loop.tank_volume", "2.5e-5").unwrap();
        assert_eq!(cfg.water_loop.tank_volume, 2.5e-5);
        cfg.validate().unwrap();

        let err = cfg.apply_override("loop.tankk_volume", "1").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn accessors_assemble_the_core_types() {
        let text = "[geometry]\nactive_area = 0.03\nchannel_pitch = 0.01\n\
                    [profile]\nkind = steps\nlevels = 25, 28, 31\nhold = 60\n";
        let cfg = ScenarioConfig::parse_str(text).unwrap();
        // Channel length follows the overridden area.
        assert_eq!(cfg.cover_geometry().channel_total_length, 3.0);
        assert_eq!(
            cfg.setpoint_profile(),
            SetpointProfile::StepSequence {
                levels: vec![25.0, 28.0, 31.0],
                hold: 60.0
            }
        );
        assert_relative_eq!(cfg.pump_map().q_max, 80.0e-6 / 60.0, max_relative = 1.0e-12);
        assert_eq!(cfg.mpc_config().tick, 0.5);
        assert!(cfg.pi_config().is_none());
        assert!(cfg.disturbance_list().is_empty());
    }

    #[test]
    fn disturbances_activate_on_positive_duration() {
        let text = "[disturbances]\nhand_start = 60\nhand_duration = 180\n";
        let cfg = ScenarioConfig::parse_str(text).unwrap();
        let list = cfg.disturbance_list();
        assert_eq!(list.len(), 1);
        match &list[0] {
            Disturbance::HandContact { start, duration, skin_temp, .. } => {
                assert_eq!(*start, 60.0);
                assert_eq!(*duration, 180.0);
                assert_eq!(*skin_temp, 33.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pi_gains_come_paired_or_not_at_all() {
        let err = ScenarioConfig::parse_str("[controller]\nkind = pi\nkp = 2\n").unwrap_err();
        assert!(err.to_string().contains("kp and ki together"), "{err}");

        let cfg = ScenarioConfig::parse_str("[controller]\nkind = pi\nkp = 2\nki = 0.1\n").unwrap();
        let pi = cfg.pi_config().unwrap();
        assert_eq!(pi.kp, 2.0);
        assert_eq!(pi.ki, 0.1);
    }
}
