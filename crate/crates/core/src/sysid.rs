//! Reduced-order model identification from recorded responses.
//!
//! Fits a low-order ARX model with a shared denominator over one or more
//! input channels by least squares, reports the free-run fit error, and
//! exposes the realizations the controller needs: step-response
//! coefficients and a state-space form. Orders 0 through 3 are
//! supported; order 0 degenerates to a static gain with a one-tick
//! delay. Each input channel may carry an explicit dead time on top of
//! the pole dynamics; [`fit_arx_delayed`] picks the dead times by scan.
//! The water loop needs that: transport from the Peltier faces to the
//! cover surface is a genuine delay no third-order rational fit can
//! absorb.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel<T> {
    pub order: usize,
    /// Sample interval of the fitted recursion, s.
    pub tick: T,
    /// Output auto-regression coefficients, `order` of them.
    pub a: Vec<T>,
    /// Input coefficients per channel, `max(order, 1)` each.
    pub b: Vec<Vec<T>>,
    /// Input dead time per channel, in ticks. The coefficients `b[ch]`
    /// act on samples `delay[ch] + 1 ..= delay[ch] + max(order, 1)`
    /// ticks back.
    pub delay: Vec<usize>,
    /// Operating-point offsets the deviations were taken about.
    pub u_offsets: Vec<T>,
    pub y_offset: T,
    /// Free-run RMS error on the training record, same unit as y.
    pub fit_rms: T,
}

pub fn fit_arx<T: Scalar>(
    inputs: &[&[T]],
    output: &[T],
    order: usize,
    tick: T,
    rms_limit: T,
) -> Result<ReducedModel<T>> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "inputs",
            message: "at least one input channel is required".into(),
        });
    }
    if order > 3 {
        return Err(Error::InvalidParameter {
            name: "order",
            message: "orders above 3 are not supported".into(),
        });
    }
    if !(tick.is_finite() && tick > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "tick",
            message: "sample interval must be positive".into(),
        });
    }
    let len = output.len();
    let lag = order.max(1);
    if len < lag + 2 {
        return Err(Error::InvalidParameter {
            name: "output",
            message: format!("need more than {} samples to fit order {order}", lag + 1),
        });
    }
    for (j, u) in inputs.iter().enumerate() {
        if u.len() != len {
            return Err(Error::InvalidParameter {
                name: "inputs",
                message: format!("channel {j} length {} != output length {len}", u.len()),
            });
        }
    }

    let y_offset = output[0];
    let u_offsets: Vec<T> = inputs.iter().map(|u| u[0]).collect();
    let ydev: Vec<T> = output.iter().map(|v| *v - y_offset).collect();
    let udev: Vec<Vec<T>> = inputs
        .iter()
        .zip(&u_offsets)
        .map(|(u, o)| u.iter().map(|v| *v - *o).collect())
        .collect();

    // Least squares on the raw regressor matrix; the QR routine drops
    // collinear columns (a single step held for minutes) instead of
    // failing.
    let nu = inputs.len();
    let cols = order + lag * nu;
    let mut matrix = Vec::with_capacity(len - lag);
    let mut rhs = Vec::with_capacity(len - lag);
    for k in lag..len {
        let mut row = Vec::with_capacity(cols);
        for i in 1..=order {
            row.push(ydev[k - i]);
        }
        for u in &udev {
            for i in 1..=lag {
                row.push(u[k - i]);
            }
        }
        matrix.push(row);
        rhs.push(ydev[k]);
    }
    let theta = linalg::least_squares(&matrix, &rhs)?;

    let a = theta[..order].to_vec();
    let b: Vec<Vec<T>> = (0..nu)
        .map(|j| theta[order + j * lag..order + (j + 1) * lag].to_vec())
        .collect();
    let mut model = ReducedModel {
        order,
        tick,
        a,
        b,
        delay: vec![0; nu],
        u_offsets,
        y_offset,
        fit_rms: T::zero(),
    };

    let simulated = model.simulate(inputs)?;
    let mut sq = T::zero();
    for (s, y) in simulated.iter().zip(output) {
        let e = *s - *y;
        sq = sq + e * e;
    }
    let rms = (sq / T::lit(len as f64)).sqrt();
    model.fit_rms = rms;
    if !rms.is_finite() || rms > rms_limit {
        return Err(Error::Identification {
            rms_c: rms.as_f64(),
            limit_c: rms_limit.as_f64(),
        });
    }
    Ok(model)
}

/// [`fit_arx`] with a per-channel input dead time chosen by exhaustive
/// scan over `0..=max_delay` ticks, keeping the combination with the
/// smallest free-run error. The record must be long enough that the
/// scan cannot trade tail samples for fit; shifted samples before the
/// record start are held at the rest value.
pub fn fit_arx_delayed<T: Scalar>(
    inputs: &[&[T]],
    output: &[T],
    order: usize,
    tick: T,
    max_delay: usize,
    rms_limit: T,
) -> Result<ReducedModel<T>> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "inputs",
            message: "at least one input channel is required".into(),
        });
    }
    let nu = inputs.len();
    let mut delays = vec![0usize; nu];
    let mut best: Option<(Vec<usize>, ReducedModel<T>)> = None;
    let mut last_err = None;
    loop {
        let shifted: Vec<Vec<T>> = inputs
            .iter()
            .zip(&delays)
            .map(|(u, d)| {
                let rest = u[0];
                let mut s = vec![rest; *d];
                s.extend_from_slice(&u[..u.len() - *d]);
                s
            })
            .collect();
        let borrowed: Vec<&[T]> = shifted.iter().map(|s| s.as_slice()).collect();
        // No error limit inside the scan; hopeless delays lose on rms.
        match fit_arx(&borrowed, output, order, tick, T::lit(f64::INFINITY)) {
            Ok(model) => {
                let better = best
                    .as_ref()
                    .is_none_or(|(_, b)| model.fit_rms < b.fit_rms);
                if better {
                    best = Some((delays.clone(), model));
                }
            }
            Err(e) => last_err = Some(e),
        }

        // Odometer over the delay grid.
        let mut ch = 0;
        loop {
            if ch == nu {
                let (delays, mut model) = match best {
                    Some(found) => found,
                    None => return Err(last_err.expect("scan ran at least once")),
                };
                model.delay = delays;
                if model.fit_rms > rms_limit {
                    return Err(Error::Identification {
                        rms_c: model.fit_rms.as_f64(),
                        limit_c: rms_limit.as_f64(),
                    });
                }
                return Ok(model);
            }
            if delays[ch] < max_delay {
                delays[ch] += 1;
                break;
            }
            delays[ch] = 0;
            ch += 1;
        }
    }
}

impl<T: Scalar> ReducedModel<T> {
    pub fn input_channels(&self) -> usize {
        self.b.len()
    }

    /// Free-run simulation from rest at the operating point.
    pub fn simulate(&self, inputs: &[&[T]]) -> Result<Vec<T>> {
        if inputs.len() != self.b.len() {
            return Err(Error::InvalidParameter {
                name: "inputs",
                message: format!(
                    "model has {} channels, got {}",
                    self.b.len(),
                    inputs.len()
                ),
            });
        }
        let len = inputs.first().map_or(0, |u| u.len());
        let lag = self.order.max(1);
        let mut ydev = vec![T::zero(); len];
        for k in 0..len {
            let mut v = T::zero();
            for i in 1..=self.order {
                if k >= i {
                    v = v + self.a[i - 1] * ydev[k - i];
                }
            }
            for (j, bj) in self.b.iter().enumerate() {
                for i in 1..=lag {
                    let back = self.delay[j] + i;
                    if k >= back {
                        v = v + bj[i - 1] * (inputs[j][k - back] - self.u_offsets[j]);
                    }
                }
            }
            ydev[k] = v;
        }
        Ok(ydev.into_iter().map(|v| v + self.y_offset).collect())
    }

    /// Steady-state output change per unit input change on one channel.
    pub fn step_gain(&self, channel: usize) -> T {
        let denom = T::one() - self.a.iter().copied().sum::<T>();
        let numer = self.b[channel].iter().copied().sum::<T>();
        numer / denom
    }

    /// Response at ticks 1..=n to a unit step on `channel` applied at
    /// tick 0, in deviation units. The first `delay[channel]` entries
    /// are zero.
    pub fn step_response(&self, channel: usize, n: usize) -> Vec<T> {
        let lag = self.order.max(1);
        let mut out = Vec::with_capacity(n);
        let mut ydev = vec![T::zero(); n + 1];
        for k in 1..=n {
            let mut v = T::zero();
            for i in 1..=self.order {
                if k >= i {
                    v = v + self.a[i - 1] * ydev[k - i];
                }
            }
            for i in 1..=lag {
                if k >= self.delay[channel] + i {
                    v = v + self.b[channel][i - 1];
                }
            }
            ydev[k] = v;
            out.push(v);
        }
        out
    }

    /// State-space realization: x' = A x + B u_dev, y_dev = x[0]. The
    /// leading `max(order, 1)` states are the observer-canonical core;
    /// each delayed channel appends a shift chain of `delay` states
    /// feeding the core. `B` has one column per input channel.
    pub fn state_space(&self) -> StateSpace<T> {
        let n = self.order.max(1);
        let total = n + self.delay.iter().sum::<usize>();
        let nu = self.b.len();
        let mut a = vec![vec![T::zero(); total]; total];
        let mut b = vec![vec![T::zero(); nu]; total];
        for i in 0..n {
            if i < self.order {
                a[i][0] = self.a[i];
            }
            if i + 1 < n {
                a[i][i + 1] = T::one();
            }
        }
        let mut offset = n;
        for (j, bj) in self.b.iter().enumerate() {
            let d = self.delay[j];
            if d == 0 {
                for (i, coeff) in bj.iter().enumerate() {
                    b[i][j] = *coeff;
                }
            } else {
                // Chain state m holds the input from m+1 ticks ago.
                b[offset][j] = T::one();
                for m in 1..d {
                    a[offset + m][offset + m - 1] = T::one();
                }
                for (i, coeff) in bj.iter().enumerate() {
                    a[i][offset + d - 1] = *coeff;
                }
                offset += d;
            }
        }
        StateSpace {
            a,
            b,
            tick: self.tick,
        }
    }

    /// Modulus of the slowest (largest-magnitude) pole.
    pub fn dominant_pole(&self) -> T {
        match self.order {
            0 => T::zero(),
            1 => self.a[0].abs(),
            2 => {
                let (p, q) = (self.a[0], self.a[1]);
                // z^2 - p z - q = 0
                let disc = p * p + T::lit(4.0) * q;
                if disc >= T::zero() {
                    let root = disc.sqrt();
                    let z1 = (p + root) * T::lit(0.5);
                    let z2 = (p - root) * T::lit(0.5);
                    z1.abs().max(z2.abs())
                } else {
                    // complex pair; modulus^2 = -q
                    (-q).sqrt()
                }
            }
            _ => {
                let real = cubic_real_root(self.a[0], self.a[1], self.a[2]);
                // Deflate z^3 - a1 z^2 - a2 z - a3 by (z - real).
                let c1 = real - self.a[0];
                let c0 = real * c1 - self.a[1];
                // Remaining quadratic: z^2 + c1 z + c0.
                let disc = c1 * c1 - T::lit(4.0) * c0;
                let pair_modulus = if disc >= T::zero() {
                    let root = disc.sqrt();
                    let z1 = (-c1 + root) * T::lit(0.5);
                    let z2 = (-c1 - root) * T::lit(0.5);
                    z1.abs().max(z2.abs())
                } else {
                    c0.abs().sqrt()
                };
                real.abs().max(pair_modulus)
            }
        }
    }

    /// Continuous time constant of the dominant pole, None when the pole
    /// gives no decaying exponential (at or outside the unit circle, or
    /// non-positive).
    pub fn dominant_time_constant(&self) -> Option<T> {
        let pole = self.dominant_pole();
        if pole > T::zero() && pole < T::one() {
            Some(-self.tick / pole.ln())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T> {
    pub a: Vec<Vec<T>>,
    /// One column per input channel.
    pub b: Vec<Vec<T>>,
    pub tick: T,
}

/// One real root of z^3 - a1 z^2 - a2 z - a3, by bisection on a bracket
/// that provably contains it.
fn cubic_real_root<T: Scalar>(a1: T, a2: T, a3: T) -> T {
    let eval = |z: T| ((z - a1) * z - a2) * z - a3;
    let bound = T::one() + a1.abs().max(a2.abs()).max(a3.abs());
    let (mut lo, mut hi) = (-bound, bound);
    // Cubic with positive leading coefficient: negative far left,
    // positive far right.
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if eval(mid) >= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) * T::lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prbs(seed: u64, len: usize, amplitude: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(len);
        let mut level = 0.0;
        for k in 0..len {
            // Hold zero over the first block so records start at rest.
            if k % 7 == 0 && k > 0 {
                level = if rng.random::<bool>() { amplitude } else { 0.0 };
            }
            out.push(level);
        }
        out
    }

    fn simulate_arx(a: &[f64], b: &[f64], u: &[f64]) -> Vec<f64> {
        let lag = a.len().max(b.len());
        let mut y = vec![0.0; u.len()];
        for k in 0..u.len() {
            let mut v = 0.0;
            for (i, ai) in a.iter().enumerate() {
                if k > i {
                    v += ai * y[k - i - 1];
                }
            }
            for (i, bi) in b.iter().enumerate() {
                if k > i {
                    v += bi * u[k - i - 1];
                }
            }
            let _ = lag;
            y[k] = v;
        }
        y
    }

    #[test]
    fn first_order_sampling_of_a_ten_second_lag_is_recovered() {
        // Continuous dT/dt = (u - T) / 10 sampled at 0.5 s gives the
        // discrete pole exp(-0.05).
        let pole = (-0.05f64).exp();
        assert_relative_eq!(pole, 0.951_229_424_500_714, epsilon = 1.0e-12);
        let u = prbs(7, 400, 10.0);
        let y = simulate_arx(&[pole], &[1.0 - pole], &u);
        let model = fit_arx(&[&u], &y, 1, 0.5, 1.0e-6).unwrap();
        assert_relative_eq!(model.a[0], pole, epsilon = 1.0e-7);
        assert_relative_eq!(model.b[0][0], 1.0 - pole, epsilon = 1.0e-7);
        assert_relative_eq!(model.dominant_time_constant().unwrap(), 10.0, epsilon = 1.0e-4);
    }

    #[test]
    fn third_order_coefficients_are_recovered_from_clean_data() {
        // Poles 0.9, 0.6, 0.3: z^3 - 1.8 z^2 + 0.99 z - 0.162.
        let a = [1.8, -0.99, 0.162];
        let b = [0.4, 0.1, -0.05];
        let u = prbs(11, 900, 5.0);
        let y = simulate_arx(&a, &b, &u);
        let model = fit_arx(&[&u], &y, 3, 0.5, 1.0e-6).unwrap();
        for i in 0..3 {
            assert_relative_eq!(model.a[i], a[i], epsilon = 1.0e-5);
            assert_relative_eq!(model.b[0][i], b[i], epsilon = 1.0e-5);
        }
        assert_relative_eq!(model.dominant_pole(), 0.9, epsilon = 1.0e-5);
    }

    #[test]
    fn offsets_are_removed_before_fitting() {
        let pole = 0.9;
        let u_dev = prbs(3, 300, 4.0);
        let y_dev = simulate_arx(&[pole], &[0.2], &u_dev);
        let u: Vec<f64> = u_dev.iter().map(|v| v + 52.0).collect();
        let y: Vec<f64> = y_dev.iter().map(|v| v + 22.0).collect();
        let model = fit_arx(&[&u], &y, 1, 0.5, 1.0e-6).unwrap();
        assert_relative_eq!(model.a[0], pole, epsilon = 1.0e-6);
        assert_eq!(model.u_offsets[0], 52.0);
        assert_eq!(model.y_offset, 22.0);
        let replay = model.simulate(&[&u]).unwrap();
        assert_relative_eq!(replay[150], y[150], epsilon = 1.0e-8);
    }

    #[test]
    fn static_gain_order_zero() {
        let u = prbs(5, 200, 3.0);
        let y: Vec<f64> = std::iter::once(0.0)
            .chain(u.iter().take(199).map(|v| 2.5 * v))
            .collect();
        let model = fit_arx(&[&u], &y, 0, 0.5, 1.0e-6).unwrap();
        assert_relative_eq!(model.b[0][0], 2.5, epsilon = 1.0e-6);
        assert_relative_eq!(model.step_gain(0), 2.5, epsilon = 1.0e-6);
        assert_eq!(model.dominant_pole(), 0.0);
    }

    #[test]
    fn two_input_channels_are_separated() {
        let a = [0.8];
        let u1 = prbs(21, 500, 6.0);
        let u2 = prbs(22, 500, 2.0);
        let mut y = vec![0.0; 500];
        for k in 1..500 {
            y[k] = a[0] * y[k - 1] + 0.3 * u1[k - 1] - 0.7 * u2[k - 1];
        }
        let model = fit_arx(&[&u1, &u2], &y, 1, 0.5, 1.0e-6).unwrap();
        assert_relative_eq!(model.a[0], 0.8, epsilon = 1.0e-6);
        assert_relative_eq!(model.b[0][0], 0.3, epsilon = 1.0e-6);
        assert_relative_eq!(model.b[1][0], -0.7, epsilon = 1.0e-6);
    }

    #[test]
    fn poor_fit_is_rejected_with_the_measured_error() {
        let a = [1.8, -0.99, 0.162];
        let b = [0.4, 0.1, -0.05];
        let u = prbs(13, 600, 5.0);
        let y = simulate_arx(&a, &b, &u);
        let err = fit_arx(&[&u], &y, 1, 0.5, 1.0e-4).unwrap_err();
        match err {
            Error::Identification { rms_c, limit_c } => {
                assert!(rms_c > limit_c);
                assert_eq!(limit_c, 1.0e-4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn step_gain_matches_the_settled_step_response() {
        let a = [1.2, -0.35];
        let b = [0.5, -0.2];
        let u = prbs(17, 700, 4.0);
        let y = simulate_arx(&a, &b, &u);
        let model = fit_arx(&[&u], &y, 2, 0.5, 1.0e-6).unwrap();
        let response = model.step_response(0, 2000);
        assert_relative_eq!(
            *response.last().unwrap(),
            model.step_gain(0),
            epsilon = 1.0e-9
        );
    }

    #[test]
    fn state_space_realization_reproduces_the_recursion() {
        let a = [1.8, -0.99, 0.162];
        let b = [0.4, 0.1, -0.05];
        let u = prbs(19, 400, 5.0);
        let y = simulate_arx(&a, &b, &u);
        let model = fit_arx(&[&u], &y, 3, 0.5, 1.0e-6).unwrap();
        let ss = model.state_space();
        let n = 3;
        let mut x = vec![0.0; n];
        let mut worst: f64 = 0.0;
        let direct = model.simulate(&[&u]).unwrap();
        for k in 0..u.len() {
            let ydev = x[0];
            worst = worst.max((ydev + model.y_offset - direct[k]).abs());
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[i] += ss.a[i][j] * x[j];
                }
                next[i] += ss.b[i][0] * (u[k] - model.u_offsets[0]);
            }
            x = next;
        }
        assert!(worst < 1.0e-9, "state space diverged by {worst}");
    }

    /// Shift a record right by `d` samples, holding the rest value.
    fn delayed(u: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![u[0]; d];
        out.extend_from_slice(&u[..u.len() - d]);
        out
    }

    #[test]
    fn input_dead_time_is_recovered_by_the_scan() {
        let a = [1.2, -0.35];
        let b = [0.5, -0.2];
        let u = prbs(23, 700, 4.0);
        let y = simulate_arx(&a, &b, &delayed(&u, 4));
        let model = fit_arx_delayed(&[&u], &y, 2, 0.5, 8, 1.0e-6).unwrap();
        assert_eq!(model.delay, vec![4]);
        for i in 0..2 {
            assert_relative_eq!(model.a[i], a[i], epsilon = 1.0e-6);
            assert_relative_eq!(model.b[0][i], b[i], epsilon = 1.0e-6);
        }
        let replay = model.simulate(&[&u]).unwrap();
        for (r, t) in replay.iter().zip(&y) {
            assert_relative_eq!(*r, *t, epsilon = 1.0e-7);
        }
        // Without the dead time the same structure cannot fit the data.
        let flat = fit_arx(&[&u], &y, 2, 0.5, f64::INFINITY).unwrap();
        assert!(flat.fit_rms > 100.0 * model.fit_rms);
    }

    #[test]
    fn dead_time_scan_prefers_zero_on_undelayed_data() {
        let a = [1.2, -0.35];
        let b = [0.5, -0.2];
        let u = prbs(29, 700, 4.0);
        let y = simulate_arx(&a, &b, &u);
        let model = fit_arx_delayed(&[&u], &y, 2, 0.5, 8, 1.0e-6).unwrap();
        assert_eq!(model.delay, vec![0]);
    }

    #[test]
    fn two_channels_with_different_dead_times() {
        let u1 = prbs(31, 800, 6.0);
        let u2 = prbs(32, 800, 2.0);
        let d1 = delayed(&u1, 3);
        let d2 = delayed(&u2, 1);
        let mut y = vec![0.0; 800];
        for k in 1..800 {
            y[k] = 0.8 * y[k - 1] + 0.3 * d1[k - 1] - 0.7 * d2[k - 1];
        }
        let model = fit_arx_delayed(&[&u1, &u2], &y, 1, 0.5, 5, 1.0e-6).unwrap();
        assert_eq!(model.delay, vec![3, 1]);
        assert_relative_eq!(model.b[0][0], 0.3, epsilon = 1.0e-6);
        assert_relative_eq!(model.b[1][0], -0.7, epsilon = 1.0e-6);
    }

    #[test]
    fn delayed_step_response_leads_with_zeros_and_keeps_the_gain() {
        let a = [1.2, -0.35];
        let b = [0.5, -0.2];
        let u = prbs(23, 700, 4.0);
        let y = simulate_arx(&a, &b, &delayed(&u, 4));
        let model = fit_arx_delayed(&[&u], &y, 2, 0.5, 8, 1.0e-6).unwrap();
        let response = model.step_response(0, 1000);
        for v in &response[..4] {
            assert_eq!(*v, 0.0);
        }
        assert_relative_eq!(response[4], b[0], epsilon = 1.0e-6);
        assert_relative_eq!(
            *response.last().unwrap(),
            model.step_gain(0),
            epsilon = 1.0e-9
        );
    }

    #[test]
    fn state_space_carries_the_dead_time() {
        let u1 = prbs(31, 400, 6.0);
        let u2 = prbs(32, 400, 2.0);
        let d1 = delayed(&u1, 3);
        let d2 = delayed(&u2, 1);
        let mut y = vec![0.0; 400];
        for k in 1..400 {
            y[k] = 0.8 * y[k - 1] + 0.3 * d1[k - 1] - 0.7 * d2[k - 1];
        }
        let model = fit_arx_delayed(&[&u1, &u2], &y, 1, 0.5, 5, 1.0e-6).unwrap();
        let ss = model.state_space();
        let n = ss.a.len();
        assert_eq!(n, 1 + 3 + 1);
        let direct = model.simulate(&[&u1, &u2]).unwrap();
        let mut x = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for k in 0..u1.len() {
            worst = worst.max((x[0] + model.y_offset - direct[k]).abs());
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[i] += ss.a[i][j] * x[j];
                }
                next[i] += ss.b[i][0] * (u1[k] - model.u_offsets[0]);
                next[i] += ss.b[i][1] * (u2[k] - model.u_offsets[1]);
            }
            x = next;
        }
        assert!(worst < 1.0e-9, "state space diverged by {worst}");
    }

    #[test]
    fn cubic_dominant_pole_handles_a_complex_pair() {
        // (z - 0.5)(z^2 - 1.2 z + 0.72): complex pair modulus sqrt(0.72).
        let a1 = 1.7;
        let a2 = -(0.72 + 0.6);
        let a3 = 0.36;
        let model = ReducedModel {
            order: 3,
            tick: 0.5,
            a: vec![a1, a2, a3],
            b: vec![vec![0.1, 0.0, 0.0]],
            delay: vec![0],
            u_offsets: vec![0.0],
            y_offset: 0.0,
            fit_rms: 0.0,
        };
        assert_relative_eq!(model.dominant_pole(), 0.72f64.sqrt(), epsilon = 1.0e-6);
    }

    #[test]
    fn pure_step_input_still_fits_without_blowing_up() {
        // A held step makes the input regressors collinear; the
        // conditioning ridge keeps the solve finite and the free-run
        // replay accurate.
        let a = [1.7, -0.72];
        let b = [0.015, 0.005];
        let mut u = vec![0.0; 600];
        for v in u.iter_mut().skip(1) {
            *v = 30.0;
        }
        let y = simulate_arx(&a, &b, &u);
        // The duplicated columns are merged, which misfits the first few
        // transient samples; the free-run error stays well inside the
        // shipped gate but is not zero.
        let model = fit_arx(&[&u], &y, 3, 0.5, 0.2).unwrap();
        assert!(model.fit_rms < 0.2, "rms {}", model.fit_rms);
        let replay = model.simulate(&[&u]).unwrap();
        assert!((replay[599] - y[599]).abs() < 0.05, "settled mismatch");
    }
}
