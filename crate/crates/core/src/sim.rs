//! Coupled plant integrator.
//!
//! One step advances, in order: device faces (exact first-order lag, or
//! the current-drive balance), plug-flow advection around the ring, then
//! one implicit backward-Euler solve of the conduction/convection
//! network. The implicit step makes the per-step energy audit close to
//! solver precision; an explicit fourth-order scheme is kept for
//! validation runs.

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{NetworkLayout, ThermalNetwork};
use crate::peltier::{self, PeltierParams, KELVIN_OFFSET};
use crate::scalar::Scalar;
use crate::waterloop::{LoopCell, PumpMap, Segment, WaterLoopState};

/// Static description of the plant the integrator advances.
#[derive(Debug, Clone)]
pub struct Plant<T> {
    pub network: ThermalNetwork<T>,
    pub layout: NetworkLayout,
    /// Water volume of each ring cell, in flow order (m3).
    pub ring_volumes: Vec<T>,
    /// Ring cell segments, aligned with `ring_volumes`.
    pub ring_segments: Vec<Segment>,
    pub pump: PumpMap<T>,
    pub peltier: PeltierParams<T>,
    pub ambient_temp: T,
    pub structure_temp: T,
}

/// How the device faces are driven.
#[derive(Debug, Clone, PartialEq)]
pub enum PeltierMode<T> {
    /// First-order lag toward the command, clamped to the envelope.
    Command { tau: T, min_c: T, max_c: T },
    /// Faces forced to the commanded value immediately, unclamped.
    /// Characterization mode for bench protocols that drive the faces
    /// beyond the command envelope.
    Pinned,
    /// Constant signed current (A, positive heats the water), sink side
    /// tied to ambient through a heat-sink resistance (K/W).
    Current {
        drive_current: T,
        sink_resistance: T,
        /// Lumped ceramic/spreader capacity of the water-side face, J/K.
        face_capacity: T,
    },
    /// Faces disconnected; adiabatic studies.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance<T> {
    /// Skin contact patch on the cover surface.
    HandContact {
        start: T,
        duration: T,
        /// Contact area, m2.
        area: T,
        /// Skin temperature, C.
        skin_temp: T,
        /// Contact heat transfer coefficient, W/(m2 K).
        coefficient: T,
    },
    /// Ambient air temperature offset; the robot structure holds its own
    /// temperature.
    AmbientShift { start: T, duration: T, offset: T },
}

impl<T: Scalar> Disturbance<T> {
    fn active(&self, t: T) -> bool {
        let (start, duration) = match self {
            Disturbance::HandContact { start, duration, .. } => (*start, *duration),
            Disturbance::AmbientShift { start, duration, .. } => (*start, *duration),
        };
        t >= start && t < start + duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Backward Euler; energy audit closes to solver precision.
    Implicit,
    /// Classic fourth-order explicit scheme, for validation runs.
    Rk4,
}

/// Signed per-step energy bookkeeping, J. Positive means heat entered
/// the modeled storage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyAudit<T> {
    pub from_faces: T,
    pub from_ambient: T,
    pub from_structure: T,
    pub from_hand: T,
    /// Exchange with water cells held fixed by a characterization pin.
    pub from_pins: T,
    /// Change of stored energy over the step.
    pub storage_delta: T,
    /// |storage - advection carry - boundary flows|.
    pub residual: T,
    /// Scale for the residual tolerance: sum of flow magnitudes.
    pub gross: T,
}

/// Evolving state: time and every node temperature (C), boundary nodes
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub time: T,
    pub temps: Vec<T>,
    pub flow_rate: T,
}

/// Commands applied over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive<T> {
    /// Face temperature command, C (command and pinned modes).
    pub peltier_command: T,
    /// Pump drive voltage, V.
    pub pump_voltage: T,
}

/// What one step actually did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    /// Command after envelope clamping (command mode) or pass-through.
    pub applied_command: T,
    pub clamped: bool,
    pub disturbance_active: bool,
    pub audit: EnergyAudit<T>,
}

/// Relative audit residual admitted per implicit step.
pub const IMPLICIT_RESIDUAL_TOL: f64 = 1.0e-6;
/// Relative audit residual admitted per explicit validation step.
pub const EXPLICIT_RESIDUAL_TOL: f64 = 1.0e-4;

/// Sanity envelope; leaving it is treated as divergence.
const TEMP_SANITY_MIN: f64 = -40.0;
const TEMP_SANITY_MAX: f64 = 150.0;

#[derive(Debug, Clone)]
pub struct Simulator<T> {
    pub plant: Plant<T>,
    pub mode: PeltierMode<T>,
    pub scheme: Scheme,
    /// Integration step, s.
    pub dt: T,
    pub disturbances: Vec<Disturbance<T>>,
    /// Characterization pin: water ring cells held at this temperature.
    pub pinned_water: Option<T>,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(plant: Plant<T>, mode: PeltierMode<T>, dt: T) -> Result<Self> {
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                message: "integration step must be positive".into(),
            });
        }
        Ok(Self {
            plant,
            mode,
            scheme: Scheme::Implicit,
            dt,
            disturbances: Vec::new(),
            pinned_water: None,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_disturbances(mut self, disturbances: Vec<Disturbance<T>>) -> Self {
        self.disturbances = disturbances;
        self
    }

    pub fn with_pinned_water(mut self, temp: T) -> Self {
        self.pinned_water = Some(temp);
        self
    }

    /// Uniform-temperature initial state with the pump off.
    pub fn initial_state(&self, temp: T) -> SimState<T> {
        SimState {
            time: T::zero(),
            temps: vec![temp; self.plant.network.nodes.len()],
            flow_rate: T::zero(),
        }
    }

    fn is_face(&self, node: usize) -> bool {
        node == self.plant.layout.peltier_top || node == self.plant.layout.peltier_bottom
    }

    fn edge_active(&self, a: usize, b: usize) -> bool {
        if matches!(self.mode, PeltierMode::Off) {
            !(self.is_face(a) || self.is_face(b))
        } else {
            true
        }
    }

    /// Whether the node is solved for this step (capacitive, not pinned).
    fn solved(&self, node: usize) -> bool {
        if !self.plant.network.is_capacitive(node) {
            return false;
        }
        if self.pinned_water.is_some() {
            let ring = self.plant.layout.water_ring();
            if ring.contains(&node) {
                return false;
            }
        }
        true
    }

    fn ambient_now(&self, t: T) -> T {
        let mut ambient = self.plant.ambient_temp;
        for d in &self.disturbances {
            if let Disturbance::AmbientShift { offset, .. } = d {
                if d.active(t) {
                    ambient = ambient + *offset;
                }
            }
        }
        ambient
    }

    fn hand_now(&self, t: T) -> Option<(T, T)> {
        for d in &self.disturbances {
            if let Disturbance::HandContact {
                area,
                skin_temp,
                coefficient,
                ..
            } = d
            {
                if d.active(t) {
                    return Some((*coefficient * *area, *skin_temp));
                }
            }
        }
        None
    }

    /// Boundary temperature a node imposes during the solve at time `t`.
    fn boundary_temp(&self, state: &SimState<T>, node: usize, t: T) -> T {
        let layout = &self.plant.layout;
        if node == layout.ambient {
            self.ambient_now(t)
        } else if node == layout.structure {
            self.plant.structure_temp
        } else if let Some(pin) = self.pinned_water {
            let ring = layout.water_ring();
            if ring.contains(&node) {
                pin
            } else {
                state.temps[node]
            }
        } else {
            state.temps[node]
        }
    }

    /// Advances faces, advects the ring, solves the network and audits
    /// the energy balance over one `dt`.
    pub fn step(&self, state: &mut SimState<T>, drive: &Drive<T>) -> Result<StepOutcome<T>> {
        if !drive.peltier_command.is_finite() || !drive.pump_voltage.is_finite() {
            return Err(Error::Actuation("non-finite drive command".into()));
        }
        let t = state.time;
        let dt = self.dt;
        let layout = self.plant.layout.clone();

        // Faces first; the network solve then sees them as boundaries.
        let (applied_command, clamped) = match &self.mode {
            PeltierMode::Command { tau, min_c, max_c } => {
                let applied = drive.peltier_command.max(*min_c).min(*max_c);
                let clamped = applied != drive.peltier_command;
                for face in [layout.peltier_top, layout.peltier_bottom] {
                    state.temps[face] =
                        peltier::command_mode_step(state.temps[face], applied, *tau, dt)?;
                }
                (applied, clamped)
            }
            PeltierMode::Pinned => {
                for face in [layout.peltier_top, layout.peltier_bottom] {
                    state.temps[face] = drive.peltier_command;
                }
                (drive.peltier_command, false)
            }
            PeltierMode::Current {
                drive_current,
                sink_resistance,
                face_capacity,
            } => {
                let applied = self.advance_faces_current_mode(
                    state,
                    *drive_current,
                    *sink_resistance,
                    *face_capacity,
                    t,
                )?;
                (applied, false)
            }
            PeltierMode::Off => (drive.peltier_command, false),
        };

        // Advection: exact charge bookkeeping feeds the audit.
        let flow = self.plant.pump.flow(drive.pump_voltage)?;
        state.flow_rate = flow;
        let water_capacity_per_volume = self.water_volumetric_capacity();
        let mut advect_carry = T::zero();
        if flow > T::zero() && self.pinned_water.is_none() {
            let ring = layout.water_ring();
            let mut loop_state = WaterLoopState {
                cells: ring
                    .iter()
                    .zip(&self.plant.ring_volumes)
                    .zip(&self.plant.ring_segments)
                    .map(|((node, volume), segment)| LoopCell {
                        segment: *segment,
                        volume: *volume,
                        temperature: state.temps[*node],
                    })
                    .collect(),
                flow_rate: flow,
            };
            let charge_before = loop_state.thermal_charge();
            loop_state.advect(dt)?;
            let charge_after = loop_state.thermal_charge();
            advect_carry = (charge_after - charge_before) * water_capacity_per_volume;
            for (node, cell) in ring.iter().zip(&loop_state.cells) {
                state.temps[*node] = cell.temperature;
            }
        }

        // Conduction/convection update.
        let audit = match self.scheme {
            Scheme::Implicit => self.implicit_step(state, t, advect_carry)?,
            Scheme::Rk4 => self.rk4_step(state, t, advect_carry)?,
        };

        let tolerance = match self.scheme {
            Scheme::Implicit => T::lit(IMPLICIT_RESIDUAL_TOL),
            Scheme::Rk4 => T::lit(EXPLICIT_RESIDUAL_TOL),
        };
        // Floor of 1 J: near equilibrium both sides of the balance are
        // pure roundoff and a relative test would be meaningless.
        let scale = audit.gross.max(T::one());
        if audit.residual > tolerance * scale {
            return Err(Error::Numerics {
                t_s: t.as_f64(),
                node: "energy audit".into(),
                message: format!(
                    "residual {:.3e} exceeds {:.1e} of gross {:.3e}",
                    audit.residual.as_f64(),
                    tolerance.as_f64(),
                    audit.gross.as_f64()
                ),
            });
        }

        for (i, temp) in state.temps.iter().enumerate() {
            let v = temp.as_f64();
            if !v.is_finite() || !(TEMP_SANITY_MIN..=TEMP_SANITY_MAX).contains(&v) {
                return Err(Error::Numerics {
                    t_s: t.as_f64(),
                    node: self.plant.network.nodes[i].name.clone(),
                    message: format!("temperature {v} left the sanity envelope"),
                });
            }
        }

        state.time = t + dt;
        Ok(StepOutcome {
            applied_command,
            clamped,
            disturbance_active: self.disturbances.iter().any(|d| d.active(t)),
            audit,
        })
    }

    /// rho * c_p of the circulating water, J/(m3 K), from the tank cell.
    fn water_volumetric_capacity(&self) -> T {
        let tank_node = self.plant.layout.tank;
        let tank_capacity = self.plant.network.heat_capacity(tank_node);
        tank_capacity / self.plant.ring_volumes[0]
    }

    fn advance_faces_current_mode(
        &self,
        state: &mut SimState<T>,
        current: T,
        sink_resistance: T,
        face_capacity: T,
        t: T,
    ) -> Result<T> {
        if current.abs() > self.plant.peltier.max_current {
            return Err(Error::Actuation(format!(
                "drive current {} A beyond the {} A rating",
                current.as_f64(),
                self.plant.peltier.max_current.as_f64()
            )));
        }
        if !(face_capacity > T::zero() && sink_resistance >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "current mode",
                message: "face_capacity must be positive, sink_resistance non-negative".into(),
            });
        }
        let p = &self.plant.peltier;
        let kelvin = T::lit(KELVIN_OFFSET);
        let ambient_k = self.ambient_now(t) + kelvin;
        let tank_temp = state.temps[self.plant.layout.tank];
        let film = self.face_film_conductance();
        let layout = &self.plant.layout;
        let mut applied = T::zero();
        for face in [layout.peltier_top, layout.peltier_bottom] {
            let face_k = state.temps[face] + kelvin;
            // Massless sink face: solve the linear balance
            //   T_sink = T_ambient + R_sink * q_into_sink(T_sink).
            let denominator =
                T::one() + sink_resistance * (p.conductance + p.seebeck * current);
            if denominator <= T::lit(1.0e-6) {
                return Err(Error::Numerics {
                    t_s: t.as_f64(),
                    node: "peltier sink".into(),
                    message: "sink balance lost diagonal dominance".into(),
                });
            }
            let q_sink_unscaled = p.seebeck * (-current) * ambient_k
                + T::lit(0.5) * current * current * p.resistance
                - p.conductance * (ambient_k - face_k);
            let q_into_sink = q_sink_unscaled / denominator;
            let sink_k = ambient_k + sink_resistance * q_into_sink;
            let q_into_face = peltier::face_flow_into(p, face_k, sink_k, current);
            let exchange = film * (tank_temp - state.temps[face]);
            state.temps[face] =
                state.temps[face] + self.dt / face_capacity * (q_into_face + exchange);
            applied = state.temps[face];
        }
        Ok(applied)
    }

    fn face_film_conductance(&self) -> T {
        let layout = &self.plant.layout;
        self.plant
            .network
            .edges
            .iter()
            .find(|e| {
                (e.a == layout.peltier_top && e.b == layout.tank)
                    || (e.b == layout.peltier_top && e.a == layout.tank)
            })
            .map(|e| e.conductance)
            .unwrap_or_else(T::zero)
    }

    /// Backward Euler: (C/dt + L) T' = (C/dt) T + boundary terms.
    fn implicit_step(
        &self,
        state: &mut SimState<T>,
        t: T,
        advect_carry: T,
    ) -> Result<EnergyAudit<T>> {
        let net = &self.plant.network;
        let layout = &self.plant.layout;
        let dt = self.dt;

        let unknowns: Vec<usize> = (0..net.nodes.len()).filter(|&n| self.solved(n)).collect();
        let index_of: Vec<Option<usize>> = {
            let mut map = vec![None; net.nodes.len()];
            for (k, &n) in unknowns.iter().enumerate() {
                map[n] = Some(k);
            }
            map
        };
        let n = unknowns.len();
        let mut a = vec![vec![T::zero(); n]; n];
        let mut b = vec![T::zero(); n];
        for (k, &node) in unknowns.iter().enumerate() {
            let c_over_dt = net.heat_capacity(node) / dt;
            a[k][k] = c_over_dt;
            b[k] = c_over_dt * state.temps[node];
        }
        for e in &net.edges {
            if e.conductance == T::zero() || !self.edge_active(e.a, e.b) {
                continue;
            }
            for (this, other) in [(e.a, e.b), (e.b, e.a)] {
                if let Some(k) = index_of[this] {
                    a[k][k] = a[k][k] + e.conductance;
                    match index_of[other] {
                        Some(m) => a[k][m] = a[k][m] - e.conductance,
                        None => {
                            b[k] = b[k] + e.conductance * self.boundary_temp(state, other, t);
                        }
                    }
                }
            }
        }
        if let Some((g_hand, skin)) = self.hand_now(t) {
            if let Some(k) = index_of[layout.surface] {
                a[k][k] = a[k][k] + g_hand;
                b[k] = b[k] + g_hand * skin;
            }
        }

        let before: Vec<T> = unknowns.iter().map(|&u| state.temps[u]).collect();
        let solution = linalg::solve(a, b)?;
        for (&node, &temp) in unknowns.iter().zip(&solution) {
            state.temps[node] = temp;
        }

        Ok(self.audit(state, t, &unknowns, &before, advect_carry))
    }

    /// Explicit validation scheme on the same right-hand side. Boundary
    /// flows are tallied with the same stage weights the update uses, so
    /// the audit closes to roundoff here as well.
    fn rk4_step(&self, state: &mut SimState<T>, t: T, advect_carry: T) -> Result<EnergyAudit<T>> {
        let net = &self.plant.network;
        let layout = &self.plant.layout;
        let unknowns: Vec<usize> = (0..net.nodes.len()).filter(|&n| self.solved(n)).collect();
        let index_of: Vec<Option<usize>> = {
            let mut map = vec![None; net.nodes.len()];
            for (k, &n) in unknowns.iter().enumerate() {
                map[n] = Some(k);
            }
            map
        };
        let before: Vec<T> = unknowns.iter().map(|&u| state.temps[u]).collect();
        let dt = self.dt;
        // faces, ambient, structure, hand, pins.
        type Buckets<T> = [T; 5];

        let derivative = |temps: &[T]| -> (Vec<T>, Buckets<T>) {
            let mut full = state.temps.clone();
            for (&node, &temp) in unknowns.iter().zip(temps) {
                full[node] = temp;
            }
            let mut rate = vec![T::zero(); unknowns.len()];
            let mut buckets = [T::zero(); 5];
            for e in &net.edges {
                if e.conductance == T::zero() || !self.edge_active(e.a, e.b) {
                    continue;
                }
                for (this, other) in [(e.a, e.b), (e.b, e.a)] {
                    if let Some(k) = index_of[this] {
                        let (other_temp, bucket) = if index_of[other].is_some() {
                            (full[other], None)
                        } else {
                            let slot = if other == layout.peltier_top
                                || other == layout.peltier_bottom
                            {
                                0
                            } else if other == layout.ambient {
                                1
                            } else if other == layout.structure {
                                2
                            } else {
                                4
                            };
                            (self.boundary_temp(state, other, t), Some(slot))
                        };
                        let q = e.conductance * (other_temp - full[this]);
                        rate[k] = rate[k] + q;
                        if let Some(slot) = bucket {
                            buckets[slot] = buckets[slot] + q;
                        }
                    }
                }
            }
            if let Some((g_hand, skin)) = self.hand_now(t) {
                if let Some(k) = index_of[layout.surface] {
                    let q = g_hand * (skin - full[layout.surface]);
                    rate[k] = rate[k] + q;
                    buckets[3] = buckets[3] + q;
                }
            }
            for (k, &node) in unknowns.iter().enumerate() {
                rate[k] = rate[k] / net.heat_capacity(node);
            }
            (rate, buckets)
        };

        let add = |base: &[T], scale: T, slope: &[T]| -> Vec<T> {
            base.iter()
                .zip(slope)
                .map(|(b, s)| *b + scale * *s)
                .collect()
        };
        let (k1, f1) = derivative(&before);
        let (k2, f2) = derivative(&add(&before, dt * T::lit(0.5), &k1));
        let (k3, f3) = derivative(&add(&before, dt * T::lit(0.5), &k2));
        let (k4, f4) = derivative(&add(&before, dt, &k3));
        let two = T::lit(2.0);
        let sixth = dt / T::lit(6.0);
        for (i, &node) in unknowns.iter().enumerate() {
            let slope = k1[i] + two * k2[i] + two * k3[i] + k4[i];
            state.temps[node] = before[i] + sixth * slope;
        }

        let mut audit = EnergyAudit::default();
        let weighted = |i: usize| sixth * (f1[i] + two * f2[i] + two * f3[i] + f4[i]);
        audit.from_faces = weighted(0);
        audit.from_ambient = weighted(1);
        audit.from_structure = weighted(2);
        audit.from_hand = weighted(3);
        audit.from_pins = weighted(4);
        let mut storage = T::zero();
        for (&node, &prev) in unknowns.iter().zip(&before) {
            storage = storage + net.heat_capacity(node) * (state.temps[node] - prev);
        }
        audit.storage_delta = storage;
        let inflow = audit.from_faces
            + audit.from_ambient
            + audit.from_structure
            + audit.from_hand
            + audit.from_pins;
        audit.gross = audit.from_faces.abs()
            + audit.from_ambient.abs()
            + audit.from_structure.abs()
            + audit.from_hand.abs()
            + audit.from_pins.abs()
            + storage.abs()
            + advect_carry.abs();
        audit.residual = (storage - advect_carry - inflow).abs();
        Ok(audit)
    }

    /// Boundary-flow bookkeeping against the storage change. Flows are
    /// evaluated at the post-step temperatures, which is exactly what the
    /// implicit scheme balances.
    fn audit(
        &self,
        state: &SimState<T>,
        t: T,
        unknowns: &[usize],
        before: &[T],
        advect_carry: T,
    ) -> EnergyAudit<T> {
        let net = &self.plant.network;
        let layout = &self.plant.layout;
        let dt = self.dt;
        let mut audit = EnergyAudit::default();

        let mut storage = T::zero();
        for (&node, &prev) in unknowns.iter().zip(before) {
            storage = storage + net.heat_capacity(node) * (state.temps[node] - prev);
        }
        audit.storage_delta = storage;

        let solved: Vec<bool> = (0..net.nodes.len()).map(|i| self.solved(i)).collect();
        let mut inflow = T::zero();
        let mut gross = T::zero();
        let mut tally = |bucket: &mut T, q: T| {
            *bucket = *bucket + q;
            inflow = inflow + q;
            gross = gross + q.abs();
        };
        for e in &net.edges {
            if e.conductance == T::zero() || !self.edge_active(e.a, e.b) {
                continue;
            }
            let (interior, boundary) = match (solved[e.a], solved[e.b]) {
                (true, false) => (e.a, e.b),
                (false, true) => (e.b, e.a),
                _ => continue,
            };
            let q = e.conductance
                * (self.boundary_temp(state, boundary, t) - state.temps[interior])
                * dt;
            if boundary == layout.peltier_top || boundary == layout.peltier_bottom {
                tally(&mut audit.from_faces, q);
            } else if boundary == layout.ambient {
                tally(&mut audit.from_ambient, q);
            } else if boundary == layout.structure {
                tally(&mut audit.from_structure, q);
            } else {
                tally(&mut audit.from_pins, q);
            }
        }
        if let Some((g_hand, skin)) = self.hand_now(t) {
            if solved[layout.surface] {
                let q = g_hand * (skin - state.temps[layout.surface]) * dt;
                tally(&mut audit.from_hand, q);
            }
        }
        audit.gross = gross + storage.abs() + advect_carry.abs();
        audit.residual = (storage - advect_carry - inflow).abs();
        audit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CoverGeometry, LoopGeometry};
    use crate::network::{build_network, ExchangeCoefficients, MaterialSet};
    use crate::peltier::{derive_peltier_coefficients, PeltierSpecs};
    use approx::assert_relative_eq;

    pub(crate) fn default_plant() -> Plant<f64> {
        plant_with(&ExchangeCoefficients::default())
    }

    pub(crate) fn plant_with(coeffs: &ExchangeCoefficients<f64>) -> Plant<f64> {
        let mats = MaterialSet::default();
        let cover = CoverGeometry::default();
        let loop_geo = LoopGeometry::default();
        let specs = PeltierSpecs::default();
        let (network, layout) = build_network(&mats, &cover, &loop_geo, specs.face_area, coeffs)
            .unwrap();
        let loop_state =
            WaterLoopState::<f64>::build(&cover, &loop_geo, 22.0).unwrap();
        Plant {
            network,
            layout,
            ring_volumes: loop_state.cells.iter().map(|c| c.volume).collect(),
            ring_segments: loop_state.cells.iter().map(|c| c.segment).collect(),
            pump: PumpMap::default(),
            peltier: derive_peltier_coefficients(&specs).unwrap(),
            ambient_temp: 22.0,
            structure_temp: 22.0,
        }
    }

    fn command_mode() -> PeltierMode<f64> {
        PeltierMode::Command {
            tau: 3.0,
            min_c: 12.0,
            max_c: 77.0,
        }
    }

    #[test]
    fn uniform_ambient_state_is_an_equilibrium() {
        let sim = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let mut state = sim.initial_state(22.0);
        for _ in 0..100 {
            sim.step(
                &mut state,
                &Drive {
                    peltier_command: 22.0,
                    pump_voltage: 5.0,
                },
            )
            .unwrap();
        }
        for temp in &state.temps {
            assert_relative_eq!(*temp, 22.0, epsilon = 1.0e-9);
        }
    }

    #[test]
    fn heating_command_warms_tank_then_surface() {
        let sim = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let mut state = sim.initial_state(22.0);
        let drive = Drive {
            peltier_command: 60.0,
            pump_voltage: 5.0,
        };
        let mut tank_lead = 0.0f64;
        for _ in 0..1200 {
            sim.step(&mut state, &drive).unwrap();
            let tank = state.temps[sim.plant.layout.tank];
            let surface = state.temps[sim.plant.layout.surface];
            tank_lead = tank_lead.max(tank - surface);
        }
        let tank = state.temps[sim.plant.layout.tank];
        let surface = state.temps[sim.plant.layout.surface];
        assert!(tank > 30.0, "tank {tank}");
        assert!(surface > 25.0, "surface {surface}");
        assert!(tank_lead > 1.0, "tank should lead the surface");
    }

    #[test]
    fn clamp_is_reported_and_envelope_respected() {
        let sim = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let mut state = sim.initial_state(22.0);
        let outcome = sim
            .step(
                &mut state,
                &Drive {
                    peltier_command: 90.0,
                    pump_voltage: 5.0,
                },
            )
            .unwrap();
        assert!(outcome.clamped);
        assert_eq!(outcome.applied_command, 77.0);
        // Pinned mode follows the raw value instead.
        let pinned = Simulator::new(default_plant(), PeltierMode::Pinned, 0.05).unwrap();
        let mut state = pinned.initial_state(22.0);
        let outcome = pinned
            .step(
                &mut state,
                &Drive {
                    peltier_command: 87.0,
                    pump_voltage: 5.0,
                },
            )
            .unwrap();
        assert!(!outcome.clamped);
        assert_eq!(state.temps[pinned.plant.layout.peltier_top], 87.0);
    }

    #[test]
    fn implicit_audit_closes_tightly_under_load() {
        let sim = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let mut state = sim.initial_state(22.0);
        let drive = Drive {
            peltier_command: 70.0,
            pump_voltage: 5.0,
        };
        for _ in 0..400 {
            let outcome = sim.step(&mut state, &drive).unwrap();
            assert!(
                outcome.audit.residual <= 1.0e-6 * outcome.audit.gross.max(1.0e-9),
                "residual {} gross {}",
                outcome.audit.residual,
                outcome.audit.gross
            );
        }
    }

    #[test]
    fn explicit_scheme_tracks_the_implicit_one() {
        let implicit = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let explicit = Simulator::new(default_plant(), command_mode(), 0.05)
            .unwrap()
            .with_scheme(Scheme::Rk4);
        let mut si = implicit.initial_state(22.0);
        let mut se = explicit.initial_state(22.0);
        let drive = Drive {
            peltier_command: 50.0,
            pump_voltage: 5.0,
        };
        for _ in 0..600 {
            implicit.step(&mut si, &drive).unwrap();
            explicit.step(&mut se, &drive).unwrap();
        }
        let surface = implicit.plant.layout.surface;
        assert_relative_eq!(si.temps[surface], se.temps[surface], epsilon = 0.05);
    }

    #[test]
    fn hand_contact_lifts_an_uncontrolled_cold_surface() {
        let plant = default_plant();
        let surface = plant.layout.surface;
        let hand = Disturbance::HandContact {
            start: 0.0,
            duration: 60.0,
            area: 0.005,
            skin_temp: 33.0,
            coefficient: 100.0,
        };
        let sim = Simulator::new(plant, PeltierMode::Off, 0.05)
            .unwrap()
            .with_disturbances(vec![hand]);
        let mut state = sim.initial_state(22.0);
        let drive = Drive {
            peltier_command: 22.0,
            pump_voltage: 0.0,
        };
        let mut active_seen = false;
        for _ in 0..1200 {
            let outcome = sim.step(&mut state, &drive).unwrap();
            active_seen |= outcome.disturbance_active;
        }
        assert!(active_seen);
        assert!(state.temps[surface] > 22.3, "surface {}", state.temps[surface]);
    }

    #[test]
    fn larger_contact_area_deviates_more() {
        let deviation = |area: f64| {
            let plant = default_plant();
            let surface = plant.layout.surface;
            let sim = Simulator::new(plant, PeltierMode::Off, 0.05)
                .unwrap()
                .with_disturbances(vec![Disturbance::HandContact {
                    start: 0.0,
                    duration: 120.0,
                    area,
                    skin_temp: 33.0,
                    coefficient: 100.0,
                }]);
            let mut state = sim.initial_state(22.0);
            let drive = Drive {
                peltier_command: 22.0,
                pump_voltage: 0.0,
            };
            for _ in 0..2400 {
                sim.step(&mut state, &drive).unwrap();
            }
            state.temps[surface] - 22.0
        };
        let small = deviation(0.002);
        let large = deviation(0.008);
        assert!(large > small + 0.05, "small {small}, large {large}");
    }

    #[test]
    fn ambient_shift_window_gates_the_offset() {
        let plant = default_plant();
        let surface = plant.layout.surface;
        let sim = Simulator::new(plant, PeltierMode::Off, 0.05)
            .unwrap()
            .with_disturbances(vec![Disturbance::AmbientShift {
                start: 10.0,
                duration: 10.0,
                offset: 15.0,
            }]);
        let mut state = sim.initial_state(22.0);
        let drive = Drive {
            peltier_command: 22.0,
            pump_voltage: 0.0,
        };
        let mut peak: f64 = 22.0;
        for _ in 0..1200 {
            sim.step(&mut state, &drive).unwrap();
            peak = peak.max(state.temps[surface]);
        }
        assert!(peak > 22.05, "shift never bit: {peak}");
        // Shift expired; surface relaxes back toward ambient.
        assert!(state.temps[surface] < peak - 0.01);
    }

    #[test]
    fn pinned_water_isolates_the_surface_response() {
        let plant = default_plant();
        let surface = plant.layout.surface;
        let sim = Simulator::new(plant, PeltierMode::Off, 0.05)
            .unwrap()
            .with_pinned_water(32.0);
        let mut state = sim.initial_state(22.0);
        let drive = Drive {
            peltier_command: 22.0,
            pump_voltage: 0.0,
        };
        for _ in 0..2000 {
            sim.step(&mut state, &drive).unwrap();
        }
        let tank = state.temps[sim.plant.layout.tank];
        assert_relative_eq!(tank, 22.0, epsilon = 1.0e-12); // pins bypass state
        assert!(state.temps[surface] > 28.0);
    }

    #[test]
    fn current_mode_heats_and_cools_by_sign() {
        let run = |current: f64| {
            let plant = default_plant();
            let mode = PeltierMode::Current {
                drive_current: current,
                sink_resistance: 0.15,
                face_capacity: 20.0,
            };
            let sim = Simulator::new(plant, mode, 0.05).unwrap();
            let mut state = sim.initial_state(22.0);
            let drive = Drive {
                peltier_command: 0.0,
                pump_voltage: 5.0,
            };
            for _ in 0..1200 {
                sim.step(&mut state, &drive).unwrap();
            }
            state.temps[sim.plant.layout.tank]
        };
        assert!(run(2.0) > 24.0);
        assert!(run(-2.0) < 20.0);
    }

    #[test]
    fn divergent_drive_is_reported_not_propagated() {
        let sim = Simulator::new(default_plant(), command_mode(), 0.05).unwrap();
        let mut state = sim.initial_state(22.0);
        let err = sim
            .step(
                &mut state,
                &Drive {
                    peltier_command: f64::NAN,
                    pump_voltage: 5.0,
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::Actuation(_)));
    }
}
