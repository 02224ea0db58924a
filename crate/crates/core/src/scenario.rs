//! Closed-loop scenario runner: builds the plant a config describes,
//! identifies the reduced control model on it, then advances simulation
//! and controller on their two clocks and records telemetry.
//!
//! Everything here is deterministic: the same config yields bit-identical
//! telemetry, summary and solver log.

use crate::config::{ControllerKind, ScenarioConfig};
use crate::controller::{
    pi_gains_from_model, MpcController, PiController, PumpSchedule,
};
use crate::error::{Error, Result};
use crate::network::build_network;
use crate::peltier::derive_peltier_coefficients;
use crate::sim::{Drive, Plant, Simulator};
use crate::sysid::{fit_arx_delayed, ReducedModel};
use crate::timeseries::{sig6, Sample, TimeSeries};
use crate::waterloop::WaterLoopState;
use std::fmt::Write as _;

/// Free-run RMS the identification fit must beat, C.
pub const ID_RMS_LIMIT_C: f64 = 0.2;

/// Band the settle metric uses, C.
pub const SETTLE_BAND_C: f64 = 0.5;

const ID_REST_TICKS: usize = 20;
const ID_HOLD_TICKS: usize = 145;
/// Command excursions around the rest point during identification, C.
const ID_COMMAND_OFFSETS: [f64; 4] = [25.0, -8.0, 35.0, 0.0];
/// Pump toggle half-period during joint identification, ticks.
const ID_PUMP_HALF_PERIOD: usize = 13;
/// Widest input dead time the identification scan considers, ticks.
/// Transport from the faces to the surface takes a few seconds at full
/// pump speed; the cap leaves headroom for slower flow.
const ID_MAX_DELAY_TICKS: usize = 24;

/// Per-scenario metrics next to the telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Simulated span, s.
    pub duration_s: f64,
    /// Earliest time after which the surface stays within
    /// [`SETTLE_BAND_C`] of the setpoint, if it ever does.
    pub settle_time_s: Option<f64>,
    /// RMS of surface minus setpoint over the whole run, C.
    pub rms_error_c: f64,
    /// Longest unbroken run of clamped control ticks, s.
    pub max_clamp_duration_s: f64,
    /// Total heat moved through the device faces, J.
    pub energy_j: f64,
    /// Controller outputs that left their boxes. Open-loop
    /// characterization drives are not commands and never count.
    pub violations: usize,
    pub surface_min_c: f64,
    pub surface_max_c: f64,
}

impl RunSummary {
    /// Stable text form, one `key = value` line each.
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "duration_s = {}", sig6(self.duration_s));
        match self.settle_time_s {
            Some(t) => {
                let _ = writeln!(s, "settle_time_s = {}", sig6(t));
            }
            None => {
                let _ = writeln!(s, "settle_time_s = none");
            }
        }
        let _ = writeln!(s, "rms_error_c = {}", sig6(self.rms_error_c));
        let _ = writeln!(s, "max_clamp_duration_s = {}", sig6(self.max_clamp_duration_s));
        let _ = writeln!(s, "energy_j = {}", sig6(self.energy_j));
        let _ = writeln!(s, "violations = {}", self.violations);
        let _ = writeln!(s, "surface_min_c = {}", sig6(self.surface_min_c));
        let _ = writeln!(s, "surface_max_c = {}", sig6(self.surface_max_c));
        s
    }
}

/// One control tick of solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverRecord {
    pub tick_index: usize,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub fallback_used: bool,
    pub clamped: bool,
}

/// Sidecar CSV for the solver log.
pub fn solver_log_csv(records: &[SolverRecord]) -> String {
    let mut s = String::from("tick,iterations,objective,converged,fallback,clamped\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.tick_index,
            r.iterations,
            sig6(r.objective),
            u8::from(r.converged),
            u8::from(r.fallback_used),
            u8::from(r.clamped),
        );
    }
    s
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub telemetry: TimeSeries,
    pub summary: RunSummary,
    /// Empty unless an MPC ran with `output.solver_log` set.
    pub solver_log: Vec<SolverRecord>,
}

/// Assembles the integrator plant a config describes.
pub fn build_plant(config: &ScenarioConfig) -> Result<Plant<f64>> {
    let specs = config.peltier_specs();
    let cover = config.cover_geometry();
    let loop_geo = config.loop_geometry();
    let (network, layout) = build_network(
        &config.material_set(),
        &cover,
        &loop_geo,
        specs.face_area,
        &config.exchange_coefficients(),
    )?;
    let loop_state = WaterLoopState::build(&cover, &loop_geo, config.integrator.initial_temp)?;
    Ok(Plant {
        network,
        layout,
        ring_volumes: loop_state.cells.iter().map(|c| c.volume).collect(),
        ring_segments: loop_state.cells.iter().map(|c| c.segment).collect(),
        pump: config.pump_map(),
        peltier: derive_peltier_coefficients(&specs)?,
        ambient_temp: config.integrator.ambient_temp,
        structure_temp: config.integrator.structure_temp,
    })
}

/// Fits the reduced control model by exciting the configured plant with a
/// deterministic command schedule (plus a pump toggle in joint mode) from
/// its ambient rest point.
pub fn identify_model(config: &ScenarioConfig) -> Result<ReducedModel<f64>> {
    let dt = config.integrator.dt;
    let tick = config.integrator.control_tick;
    let steps_per_tick = (tick / dt).round() as usize;
    let rest_temp = config.integrator.ambient_temp;
    let rest_pump = config.pump.open_loop_voltage;
    let hold_pump = config.pump.deadband
        + config.pump.hold_fraction * (config.pump.v_max - config.pump.deadband);

    let sim = Simulator::new(build_plant(config)?, config.peltier_mode(), dt)?
        .with_scheme(config.integrator.scheme);
    let mut state = sim.initial_state(rest_temp);
    let surface = sim.plant.layout.surface;

    let n_ticks = ID_REST_TICKS + ID_COMMAND_OFFSETS.len() * ID_HOLD_TICKS;
    let mut commands = Vec::with_capacity(n_ticks);
    let mut pumps = Vec::with_capacity(n_ticks);
    let mut outputs = Vec::with_capacity(n_ticks);
    for k in 0..n_ticks {
        let command = if k < ID_REST_TICKS {
            rest_temp
        } else {
            rest_temp + ID_COMMAND_OFFSETS[(k - ID_REST_TICKS) / ID_HOLD_TICKS]
        };
        let pump = if config.controller.joint && k >= ID_REST_TICKS {
            if ((k - ID_REST_TICKS) / ID_PUMP_HALF_PERIOD) % 2 == 0 {
                config.pump.v_max
            } else {
                hold_pump
            }
        } else {
            rest_pump
        };
        outputs.push(state.temps[surface]);
        pumps.push(pump);
        let mut applied = command;
        for _ in 0..steps_per_tick {
            let outcome = sim.step(
                &mut state,
                &Drive {
                    peltier_command: command,
                    pump_voltage: pump,
                },
            )?;
            applied = outcome.applied_command;
        }
        // The record keeps what the plant actually saw, envelope included.
        commands.push(applied);
    }

    let inputs: Vec<&[f64]> = if config.controller.joint {
        vec![&commands, &pumps]
    } else {
        vec![&commands]
    };
    fit_arx_delayed(
        &inputs,
        &outputs,
        config.controller.model_order,
        tick,
        ID_MAX_DELAY_TICKS,
        ID_RMS_LIMIT_C,
    )
}

enum Law {
    Mpc(MpcController<f64>, Option<PumpSchedule<f64>>),
    Pi(PiController<f64>, PumpSchedule<f64>),
    Open,
}

fn schedule(config: &ScenarioConfig) -> Result<PumpSchedule<f64>> {
    PumpSchedule::new(
        config.pump.hysteresis_c,
        config.pump.hold_fraction,
        config.pump.v_max,
    )
}

fn build_law(config: &ScenarioConfig) -> Result<Law> {
    match config.controller.kind {
        ControllerKind::None => Ok(Law::Open),
        ControllerKind::Pi => {
            let gains = match config.pi_config() {
                Some(g) => g,
                None => pi_gains_from_model(
                    &identify_model(config)?,
                    config.peltier.command_min,
                    config.peltier.command_max,
                )?,
            };
            Ok(Law::Pi(PiController::new(gains), schedule(config)?))
        }
        ControllerKind::Mpc => {
            let model = identify_model(config)?;
            let controller = MpcController::new(model, config.mpc_config())?;
            let sched = if config.controller.joint {
                None
            } else {
                Some(schedule(config)?)
            };
            Ok(Law::Mpc(controller, sched))
        }
    }
}

/// Run length: the configured duration, or the profile's natural span
/// plus a settle margin.
pub fn effective_duration(config: &ScenarioConfig) -> f64 {
    if config.integrator.duration > 0.0 {
        return config.integrator.duration;
    }
    config
        .setpoint_profile()
        .natural_duration()
        .map(|d| d + 120.0)
        .unwrap_or(300.0)
}

/// Runs one scenario end to end.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    if config.controller.kind != ControllerKind::None
        && config.peltier.mode != crate::config::PeltierModeKey::Command
    {
        return Err(Error::Config {
            line: None,
            key: Some("peltier.mode".into()),
            message: "closed-loop control needs peltier.mode = command".into(),
        });
    }

    let mut law = build_law(config)?;

    let dt = config.integrator.dt;
    let tick = config.integrator.control_tick;
    let steps_per_tick = (tick / dt).round() as usize;
    let sample_every = (config.output.sample_dt / dt).round() as usize;
    let duration = effective_duration(config);
    let n_ticks = (duration / tick).ceil() as usize;
    let horizon = config.controller.horizon;

    let sim = Simulator::new(build_plant(config)?, config.peltier_mode(), dt)?
        .with_scheme(config.integrator.scheme)
        .with_disturbances(config.disturbance_list());
    let mut state = sim.initial_state(config.integrator.initial_temp);
    let layout = sim.plant.layout.clone();
    let cover_inlet = *layout.supply.last().unwrap();
    let cover_outlet = *layout.cover.last().unwrap();
    let profile = config.setpoint_profile();

    let mut telemetry = TimeSeries::default();
    let mut log = Vec::new();
    let mut energy = 0.0f64;
    let mut violations = 0usize;
    let mut clamp_run = 0usize;
    let mut max_clamp_run = 0usize;
    let mut step_index = 0usize;

    let command_eps = 1.0e-9;
    for k in 0..n_ticks {
        let t = state.time;
        let setpoint_now = profile.value_at(t);
        let surface_now = state.temps[layout.surface];

        let mut tick_clamped = false;
        let (command, pump) = match &mut law {
            Law::Mpc(c, sched) => {
                let window = profile.window(t + tick, tick, horizon);
                let (cmd, diag) = c.step(surface_now, &window)?;
                let pump = match sched {
                    Some(sched) => {
                        let v = sched.voltage(setpoint_now - surface_now);
                        c.note_pump(v);
                        v
                    }
                    None => cmd.pump_voltage,
                };
                tick_clamped |= diag.clamped;
                if config.output.solver_log {
                    log.push(SolverRecord {
                        tick_index: k,
                        iterations: diag.iterations,
                        objective: diag.objective,
                        converged: diag.converged,
                        fallback_used: diag.fallback_used,
                        clamped: diag.clamped,
                    });
                }
                (cmd.peltier_command, pump)
            }
            Law::Pi(c, sched) => {
                let (u, saturated) = c.step(surface_now, setpoint_now);
                tick_clamped |= saturated;
                (u, sched.voltage(setpoint_now - surface_now))
            }
            Law::Open => (setpoint_now, config.pump.open_loop_voltage),
        };

        if !matches!(law, Law::Open) {
            let out_of_box = command < config.peltier.command_min - command_eps
                || command > config.peltier.command_max + command_eps
                || pump < config.pump.v_min - command_eps
                || pump > config.pump.v_max + command_eps;
            if out_of_box {
                violations += 1;
            }
        }

        let drive = Drive {
            peltier_command: command,
            pump_voltage: pump,
        };
        let emit = |state: &SimStateRef, clamped: bool, dist: bool, ts: &mut TimeSeries| {
            ts.push(Sample {
                t_s: state.time,
                setpoint_c: profile.value_at(state.time),
                surface_c: state.temps[layout.surface],
                tank_c: state.temps[layout.tank],
                cover_in_c: state.temps[cover_inlet],
                cover_out_c: state.temps[cover_outlet],
                peltier_top_c: state.temps[layout.peltier_top],
                peltier_bottom_c: state.temps[layout.peltier_bottom],
                u_peltier_c: command,
                u_pump_v: pump,
                clamped,
                disturbance_active: dist,
            });
        };
        if k == 0 {
            emit(
                &SimStateRef {
                    time: state.time,
                    temps: &state.temps,
                },
                tick_clamped,
                false,
                &mut telemetry,
            );
        }
        for _ in 0..steps_per_tick {
            let outcome = sim.step(&mut state, &drive)?;
            energy += outcome.audit.from_faces.abs();
            tick_clamped |= outcome.clamped;
            step_index += 1;
            if step_index % sample_every == 0 {
                emit(
                    &SimStateRef {
                        time: state.time,
                        temps: &state.temps,
                    },
                    tick_clamped,
                    outcome.disturbance_active,
                    &mut telemetry,
                );
            }
        }

        if tick_clamped {
            clamp_run += 1;
            max_clamp_run = max_clamp_run.max(clamp_run);
        } else {
            clamp_run = 0;
        }
    }

    let summary = summarize(
        &telemetry,
        duration,
        energy,
        violations,
        max_clamp_run as f64 * tick,
    );
    Ok(ScenarioOutcome {
        telemetry,
        summary,
        solver_log: log,
    })
}

/// Borrowed view the row emitter reads; avoids cloning the state.
struct SimStateRef<'a> {
    time: f64,
    temps: &'a [f64],
}

fn summarize(
    telemetry: &TimeSeries,
    duration: f64,
    energy: f64,
    violations: usize,
    max_clamp_duration_s: f64,
) -> RunSummary {
    let mut sum_sq = 0.0f64;
    let mut surface_min = f64::INFINITY;
    let mut surface_max = f64::NEG_INFINITY;
    let mut settled_from: Option<f64> = None;
    for s in &telemetry.samples {
        let err = s.surface_c - s.setpoint_c;
        sum_sq += err * err;
        surface_min = surface_min.min(s.surface_c);
        surface_max = surface_max.max(s.surface_c);
        if err.abs() <= SETTLE_BAND_C {
            if settled_from.is_none() {
                settled_from = Some(s.t_s);
            }
        } else {
            settled_from = None;
        }
    }
    let n = telemetry.samples.len().max(1) as f64;
    RunSummary {
        duration_s: duration,
        settle_time_s: settled_from,
        rms_error_c: (sum_sq / n).sqrt(),
        max_clamp_duration_s,
        energy_j: energy,
        violations,
        surface_min_c: surface_min,
        surface_max_c: surface_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn parse(text: &str) -> ScenarioConfig {
        ScenarioConfig::parse_str(text).unwrap()
    }

    #[test]
    fn open_loop_at_ambient_stays_flat() {
        let cfg = parse("[controller]\nkind = none\n[integrator]\nduration = 60\n");
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.telemetry.len(), 121);
        for s in &out.telemetry.samples {
            assert!((s.surface_c - 22.0).abs() < 1.0e-9, "{}", s.surface_c);
            assert!((s.tank_c - 22.0).abs() < 1.0e-9);
        }
        assert_eq!(out.summary.violations, 0);
        assert!(out.solver_log.is_empty());
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let text = "[profile]\nkind = steps\nlevels = 30\nhold = 60\n[integrator]\nduration = 40\n";
        let run = |t: &str| {
            let out = run_scenario(&parse(t)).unwrap();
            let mut buf = Vec::new();
            out.telemetry.write_csv(&mut buf).unwrap();
            (buf, solver_log_csv(&out.solver_log), out.summary.text())
        };
        assert_eq!(run(text), run(text));
    }

    #[test]
    fn mpc_closes_the_loop_on_a_step() {
        let cfg = parse(
            "[profile]\nkind = steps\nlevels = 30\nhold = 240\n[integrator]\nduration = 240\n",
        );
        let out = run_scenario(&cfg).unwrap();
        let last = out.telemetry.samples.last().unwrap();
        assert!(
            (last.surface_c - 30.0).abs() < 0.5,
            "surface ended at {}",
            last.surface_c
        );
        assert_eq!(out.summary.violations, 0);
        assert!(out.summary.settle_time_s.is_some());
        assert!(!out.solver_log.is_empty());
        // Clamp flags during the initial slew, none at rest.
        assert!(out.telemetry.samples.iter().any(|s| s.clamped));
    }

    #[test]
    fn pi_closes_the_loop_on_a_step() {
        let cfg = parse(
            "[controller]\nkind = pi\n[profile]\nkind = steps\nlevels = 30\nhold = 300\n\
             [integrator]\nduration = 300\n",
        );
        let out = run_scenario(&cfg).unwrap();
        let last = out.telemetry.samples.last().unwrap();
        assert!(
            (last.surface_c - 30.0).abs() < 1.0,
            "surface ended at {}",
            last.surface_c
        );
        assert_eq!(out.summary.violations, 0);
        assert!(out.solver_log.is_empty());
    }

    #[test]
    fn hand_contact_window_is_flagged() {
        let cfg = parse(
            "[controller]\nkind = none\n[disturbances]\nhand_start = 10\nhand_duration = 20\n\
             [integrator]\nduration = 60\n",
        );
        let out = run_scenario(&cfg).unwrap();
        // Flags lag the window edges by up to one step, so probe the
        // interior and the far outside only.
        for s in &out.telemetry.samples {
            if s.t_s > 10.5 && s.t_s < 29.5 {
                assert!(s.disturbance_active, "t = {}", s.t_s);
            }
            if s.t_s < 9.9 || s.t_s > 30.6 {
                assert!(!s.disturbance_active, "t = {}", s.t_s);
            }
        }
    }

    #[test]
    fn closed_loop_rejects_non_command_face_modes() {
        let cfg = parse("[peltier]\nmode = pinned\n[integrator]\nduration = 10\n");
        let err = run_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("peltier.mode"), "{err}");
    }
}
