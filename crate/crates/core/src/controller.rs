//! Closed-loop control: receding-horizon MPC on the reduced model, a PI
//! baseline tuned from the same model, and the hysteresis pump rule.
//!
//! The MPC predicts with the identified ARX recursion plus a constant
//! output-bias correction (measured minus model output, held over the
//! horizon), which gives offset-free tracking without a state observer.
//! The condensed problem is a box QP in the absolute input sequence;
//! move penalties enter through a difference matrix, so input bounds
//! stay simple boxes for the projected-gradient solver.

use crate::error::{Error, Result};
use crate::qp::{solve_box_qp, BoxQp};
use crate::scalar::Scalar;
use crate::sysid::ReducedModel;

/// Inputs applied over one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand<T> {
    /// Face temperature command, C.
    pub peltier_command: T,
    /// Pump drive, V.
    pub pump_voltage: T,
    pub tick_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig<T> {
    /// Decision horizon, ticks: how many input moves the solver plans.
    pub horizon: usize,
    /// Control tick, s.
    pub tick: T,
    /// Tracking weight.
    pub q: T,
    /// Input-move weight; strictly positive keeps the QP well posed.
    pub r: T,
    /// Pump-use weight (joint mode only).
    pub rho: T,
    pub model_order: usize,
    /// When set, the pump voltage sequence joins the decision vector;
    /// otherwise the hysteresis schedule drives the pump.
    pub joint: bool,
    pub command_min: T,
    pub command_max: T,
    pub pump_min: T,
    pub pump_max: T,
    pub solver_max_iterations: usize,
    pub solver_tolerance: T,
}

impl<T: Scalar> Default for MpcConfig<T> {
    fn default() -> Self {
        Self {
            horizon: 20,
            tick: T::lit(0.5),
            q: T::one(),
            r: T::lit(0.01),
            rho: T::lit(1.0e-3),
            model_order: 3,
            joint: false,
            command_min: T::lit(12.0),
            command_max: T::lit(77.0),
            pump_min: T::zero(),
            pump_max: T::lit(5.0),
            solver_max_iterations: 500,
            solver_tolerance: T::lit(1.0e-8),
        }
    }
}

impl<T: Scalar> MpcConfig<T> {
    pub fn validated(self) -> Result<Self> {
        if self.horizon < 1 {
            return Err(Error::InvalidParameter {
                name: "mpc.horizon",
                message: "horizon must be at least one tick".into(),
            });
        }
        if !(self.r > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "mpc.r",
                message: "move weight must be strictly positive".into(),
            });
        }
        if !(self.q >= T::zero()) || !(self.rho >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "mpc.q",
                message: "tracking and pump weights must be non-negative".into(),
            });
        }
        if !(self.command_min < self.command_max) || !(self.pump_min < self.pump_max) {
            return Err(Error::InvalidParameter {
                name: "mpc bounds",
                message: "lower bounds must sit below upper bounds".into(),
            });
        }
        if !(self.tick > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "mpc.tick",
                message: "control tick must be positive".into(),
            });
        }
        Ok(self)
    }
}

/// Per-tick solver report, mirrored into the diagnostics sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcDiagnostics<T> {
    pub tick_index: usize,
    pub iterations: usize,
    pub converged: bool,
    /// True when the tick fell back to the PI law.
    pub fallback_used: bool,
    /// Applied command sits on a box bound.
    pub clamped: bool,
    /// Full tracking objective at the returned solution.
    pub objective: T,
}

/// Hysteresis pump rule: full speed while the error is outside the
/// band, a reduced hold level once it has come back deep inside. The
/// release threshold sits at half the band so the rule cannot chatter.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpSchedule<T> {
    pub band: T,
    pub hold_fraction: T,
    pub v_max: T,
    boosted: bool,
}

impl<T: Scalar> PumpSchedule<T> {
    pub fn new(band: T, hold_fraction: T, v_max: T) -> Result<Self> {
        if !(band > T::zero() && v_max > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "pump schedule",
                message: "band and v_max must be positive".into(),
            });
        }
        if !(hold_fraction >= T::zero() && hold_fraction <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "pump.hold_fraction",
                message: "hold fraction must lie in [0, 1]".into(),
            });
        }
        Ok(Self {
            band,
            hold_fraction,
            v_max,
            boosted: true,
        })
    }

    pub fn voltage(&mut self, error: T) -> T {
        let magnitude = error.abs();
        if magnitude > self.band {
            self.boosted = true;
        } else if magnitude < self.band * T::lit(0.5) {
            self.boosted = false;
        }
        if self.boosted {
            self.v_max
        } else {
            self.v_max * self.hold_fraction
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiConfig<T> {
    pub kp: T,
    pub ki: T,
    pub tick: T,
    pub command_min: T,
    pub command_max: T,
}

/// IMC-style PI gains from the identified model: proportional gain from
/// the dominant lag against a target closed-loop constant, integral
/// reset at the dominant lag.
pub fn pi_gains_from_model<T: Scalar>(
    model: &ReducedModel<T>,
    command_min: T,
    command_max: T,
) -> Result<PiConfig<T>> {
    let gain = model.step_gain(0);
    if !gain.is_finite() || gain.abs() < T::lit(1.0e-9) {
        return Err(Error::Estimation(
            "model gain too small to tune a PI loop from".into(),
        ));
    }
    let tau = model
        .dominant_time_constant()
        .unwrap_or(model.tick * T::lit(5.0));
    // The closed-loop constant cannot beat the model dead time.
    let dead = model.tick * T::lit(model.delay[0] as f64);
    let lambda = (tau / T::lit(3.0)).max(dead).max(model.tick * T::lit(2.0));
    let kp = tau / (gain * lambda);
    let ki = kp / tau;
    Ok(PiConfig {
        kp,
        ki,
        tick: model.tick,
        command_min,
        command_max,
    })
}

/// PI law with setpoint feedforward and conditional anti-windup: the
/// integrator freezes whenever it would push the command further into
/// saturation.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController<T> {
    pub config: PiConfig<T>,
    integral: T,
    tick_index: usize,
}

impl<T: Scalar> PiController<T> {
    pub fn new(config: PiConfig<T>) -> Self {
        Self {
            config,
            integral: T::zero(),
            tick_index: 0,
        }
    }

    pub fn integral(&self) -> T {
        self.integral
    }

    /// One tick: command in C, clamp flag.
    pub fn step(&mut self, measured: T, setpoint: T) -> (T, bool) {
        let c = &self.config;
        let error = setpoint - measured;
        let candidate_integral = self.integral + c.ki * c.tick * error;
        let raw = setpoint + c.kp * error + candidate_integral;
        let clamped_value = raw.max(c.command_min).min(c.command_max);
        let saturated = clamped_value != raw;
        let pushing_further = (raw > c.command_max && error > T::zero())
            || (raw < c.command_min && error < T::zero());
        if !(saturated && pushing_further) {
            self.integral = candidate_integral;
        }
        self.tick_index += 1;
        (clamped_value, saturated)
    }
}

/// How far past the last planned move the tracking penalty looks, in
/// dominant time constants of the fitted model. A short decision
/// horizon on a slow plant must still pay for the settling it causes,
/// or the solver trades invisible future overshoot for present speed.
const PREDICTION_TAIL_TAUS: f64 = 4.0;
/// Prediction window cap, ticks.
const MAX_PREDICTION_TICKS: usize = 600;

/// Receding-horizon controller around a fitted [`ReducedModel`].
#[derive(Debug, Clone)]
pub struct MpcController<T> {
    pub config: MpcConfig<T>,
    model: ReducedModel<T>,
    /// Tracking-penalty window, ticks; at least the decision horizon.
    prediction: usize,
    /// Unit-step output responses per channel, `prediction` entries.
    step_response: Vec<Vec<T>>,
    /// Model recursion history, newest first, deviation units.
    y_history: Vec<T>,
    u_history: Vec<Vec<T>>,
    /// Model output expected at the next measurement, absolute units.
    model_output: T,
    last_command: T,
    last_pump: T,
    warm_start: Option<Vec<T>>,
    fallback: PiController<T>,
    tick_index: usize,
}

impl<T: Scalar> MpcController<T> {
    pub fn new(model: ReducedModel<T>, config: MpcConfig<T>) -> Result<Self> {
        let config = config.validated()?;
        let expected_channels = if config.joint { 2 } else { 1 };
        if model.input_channels() != expected_channels {
            return Err(Error::InvalidParameter {
                name: "model",
                message: format!(
                    "{} input channels fitted, mode needs {expected_channels}",
                    model.input_channels()
                ),
            });
        }
        let tail = match model.dominant_time_constant() {
            Some(tau) => {
                let ticks = (tau / config.tick).as_f64() * PREDICTION_TAIL_TAUS;
                ticks.ceil() as usize
            }
            None => 0,
        };
        let prediction = (config.horizon + tail).min(MAX_PREDICTION_TICKS.max(config.horizon));
        let step_response: Vec<Vec<T>> = (0..model.input_channels())
            .map(|ch| model.step_response(ch, prediction))
            .collect();
        let fallback = PiController::new(pi_gains_from_model(
            &model,
            config.command_min,
            config.command_max,
        )?);
        let lag = model.order.max(1);
        let last_command = model.u_offsets[0];
        let last_pump = model.u_offsets.get(1).copied().unwrap_or(T::zero());
        // Each input history covers the coefficient lags plus the
        // channel's dead time.
        let u_history = (0..model.input_channels())
            .map(|ch| vec![T::zero(); lag + model.delay[ch]])
            .collect();
        Ok(Self {
            y_history: vec![T::zero(); model.order.max(1)],
            u_history,
            model_output: model.y_offset,
            last_command,
            last_pump,
            warm_start: None,
            fallback,
            tick_index: 0,
            prediction,
            step_response,
            config,
            model,
        })
    }

    pub fn model(&self) -> &ReducedModel<T> {
        &self.model
    }

    /// Model free response over the prediction window with all inputs
    /// held.
    fn free_response(&self) -> Vec<T> {
        let n = self.prediction;
        let order = self.model.order;
        let lag = order.max(1);
        let mut y = self.y_history.clone();
        let mut u = self.u_history.clone();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut next = T::zero();
            for i in 0..order {
                next = next + self.model.a[i] * y[i];
            }
            for (ch, hist) in u.iter().enumerate() {
                let delay = self.model.delay[ch];
                for i in 0..lag {
                    next = next + self.model.b[ch][i] * hist[delay + i];
                }
            }
            y.rotate_right(1);
            y[0] = next;
            for hist in u.iter_mut() {
                let held = hist[0];
                hist.rotate_right(1);
                hist[0] = held;
            }
            out.push(next + self.model.y_offset);
        }
        out
    }

    /// Feed the applied inputs into the model recursion and return the
    /// output it expects at the next tick.
    fn advance_model(&mut self, command: T, pump: T) {
        let order = self.model.order;
        let lag = order.max(1);
        let devs = [
            command - self.model.u_offsets[0],
            pump - self.model.u_offsets.get(1).copied().unwrap_or(T::zero()),
        ];
        for (ch, hist) in self.u_history.iter_mut().enumerate() {
            hist.rotate_right(1);
            hist[0] = devs[ch];
        }
        let mut next = T::zero();
        for i in 0..order {
            next = next + self.model.a[i] * self.y_history[i];
        }
        for (ch, hist) in self.u_history.iter().enumerate() {
            let delay = self.model.delay[ch];
            for i in 1..=lag {
                // hist[0] is the input just applied, which acts after
                // one tick plus the channel dead time; older entries
                // line up with b indices.
                next = next + self.model.b[ch][i - 1] * hist[delay + i - 1];
            }
        }
        self.y_history.rotate_right(1);
        self.y_history[0] = next;
        self.model_output = next + self.model.y_offset;
    }

    /// One control tick. `setpoints` must hold at least `horizon`
    /// entries starting at the next tick; the last entry extends over
    /// whatever the prediction window still covers.
    pub fn step(
        &mut self,
        measured: T,
        setpoints: &[T],
    ) -> Result<(ControlCommand<T>, MpcDiagnostics<T>)> {
        let n = self.config.horizon;
        if setpoints.len() < n {
            return Err(Error::InvalidParameter {
                name: "setpoints",
                message: format!("preview window needs {n} entries, got {}", setpoints.len()),
            });
        }
        if !measured.is_finite() {
            return Err(Error::Estimation("non-finite measurement".into()));
        }
        let bias = measured - self.model_output;
        let free = self.free_response();

        let joint = self.config.joint;
        let dim = if joint { 2 * n } else { n };
        let p = self.prediction;
        let step_u = &self.step_response[0];

        // Tracking error affine term over the prediction window: free
        // response + bias - setpoint, minus the shift the move matrices
        // express relative to. Past the supplied preview the setpoint
        // holds at its last known value.
        let sp = |i: usize| setpoints[i.min(setpoints.len() - 1)];
        let mut w = Vec::with_capacity(p);
        for i in 0..p {
            let mut v = free[i] + bias - sp(i);
            v = v - step_u[i] * self.last_command;
            if joint {
                v = v - self.step_response[1][i] * self.last_pump;
            }
            w.push(v);
        }

        // Output map columns: y_i gains (S D) for absolute inputs.
        let column = |resp: &[T], l: usize, i: usize| -> T {
            // Effect of absolute input at tick l on output i: S[i-l]
            // minus S[i-l-1] cancelled by the next input taking over.
            // The final planned input is held through the rest of the
            // prediction window, so nothing cancels it.
            if i < l {
                T::zero()
            } else {
                let direct = resp[i - l];
                let cancel = if l + 1 < n && l + 1 <= i {
                    resp[i - l - 1]
                } else {
                    T::zero()
                };
                direct - cancel
            }
        };

        let q = self.config.q;
        let r = self.config.r;
        let rho = self.config.rho;
        let mut hessian = vec![vec![T::zero(); dim]; dim];
        let mut linear = vec![T::zero(); dim];
        let two = T::lit(2.0);

        // q * ||A z + w||^2 with A columns defined by `column`.
        let resp_for = |var: usize| -> (&[T], usize) {
            if var < n {
                (step_u.as_slice(), var)
            } else {
                (self.step_response[1].as_slice(), var - n)
            }
        };
        for col_a in 0..dim {
            let (resp_a, la) = resp_for(col_a);
            for col_b in col_a..dim {
                let (resp_b, lb) = resp_for(col_b);
                let mut acc = T::zero();
                for i in la.max(lb)..p {
                    acc = acc + column(resp_a, la, i) * column(resp_b, lb, i);
                }
                let v = two * q * acc;
                hessian[col_a][col_b] = hessian[col_a][col_b] + v;
                if col_a != col_b {
                    hessian[col_b][col_a] = hessian[col_b][col_a] + v;
                }
            }
            let mut acc = T::zero();
            for i in la..p {
                acc = acc + column(resp_a, la, i) * w[i];
            }
            linear[col_a] = linear[col_a] + two * q * acc;
        }

        // r * sum of squared moves on the command block: (u_0 - u_prev)^2
        // then (u_l - u_{l-1})^2 along the horizon.
        hessian[0][0] = hessian[0][0] + two * r;
        linear[0] = linear[0] - two * r * self.last_command;
        for l in 1..n {
            hessian[l][l] = hessian[l][l] + two * r;
            hessian[l - 1][l - 1] = hessian[l - 1][l - 1] + two * r;
            hessian[l][l - 1] = hessian[l][l - 1] - two * r;
            hessian[l - 1][l] = hessian[l - 1][l] - two * r;
        }

        if joint {
            for l in n..dim {
                hessian[l][l] = hessian[l][l] + two * rho;
            }
        }

        let mut lower = vec![self.config.command_min; n];
        let mut upper = vec![self.config.command_max; n];
        if joint {
            lower.extend(vec![self.config.pump_min; n]);
            upper.extend(vec![self.config.pump_max; n]);
        }
        let problem = BoxQp {
            hessian,
            linear,
            lower,
            upper,
        };
        let warm = self.warm_start.as_deref().filter(|v| v.len() == dim);
        let solution = solve_box_qp(
            &problem,
            warm,
            self.config.solver_max_iterations,
            self.config.solver_tolerance,
        )?;

        let setpoint_now = setpoints[0];
        let (command, pump_opt, fallback_used) = if solution.converged {
            let pump = if joint { Some(solution.x[n]) } else { None };
            // Track the PI integrator so a later fallback starts warm.
            let _ = self.fallback.step(measured, setpoint_now);
            (solution.x[0], pump, false)
        } else {
            let (pi_command, _) = self.fallback.step(measured, setpoint_now);
            (pi_command, None, true)
        };

        // Shifted warm start for the next tick.
        let mut next_warm = solution.x.clone();
        next_warm[..n].rotate_left(1);
        next_warm[n - 1] = next_warm[n.saturating_sub(2).min(n - 1)];
        if joint {
            next_warm[n..].rotate_left(1);
            next_warm[dim - 1] = next_warm[dim.saturating_sub(2)];
        }
        self.warm_start = Some(next_warm);

        let objective = {
            let mut j = T::zero();
            let z = &solution.x;
            for i in 0..p {
                let mut y = w[i];
                for (col, zv) in z.iter().enumerate() {
                    let (resp, l) = resp_for(col);
                    y = y + column(resp, l, i) * *zv;
                }
                j = j + q * y * y;
            }
            for i in 0..n {
                let u_here = z[i];
                let u_before = if i == 0 { self.last_command } else { z[i - 1] };
                let du = u_here - u_before;
                j = j + r * du * du;
                if joint {
                    j = j + rho * z[n + i] * z[n + i];
                }
            }
            j
        };

        let eps = T::lit(1.0e-9);
        let clamped = command <= self.config.command_min + eps
            || command >= self.config.command_max - eps;

        let tick_index = self.tick_index;
        self.tick_index += 1;
        self.last_command = command;
        let pump = pump_opt.unwrap_or(self.last_pump);
        self.last_pump = pump;
        self.advance_model(command, pump);

        Ok((
            ControlCommand {
                peltier_command: command,
                pump_voltage: pump,
                tick_index,
            },
            MpcDiagnostics {
                tick_index,
                iterations: solution.iterations,
                converged: solution.converged,
                fallback_used,
                clamped,
                objective,
            },
        ))
    }

    /// Hand the schedule-driven pump voltage to the model recursion in
    /// non-joint mode, where [`step`] does not know it.
    pub fn note_pump(&mut self, voltage: T) {
        if !self.config.joint {
            self.last_pump = voltage;
        }
    }
}
