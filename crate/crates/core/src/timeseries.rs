//! Telemetry container with a fixed column set, deterministic CSV
//! formatting, and the step-response time constant estimator.

use std::io::Write;

use crate::error::{Error, Result};

/// Column order of every telemetry CSV this crate emits.
pub const CSV_HEADER: &str = "t_s,setpoint_C,T_surface_C,T_water_tank_C,T_water_cover_in_C,\
T_water_cover_out_C,T_peltier_top_C,T_peltier_bottom_C,u_peltier_C,u_pump_V,clamped,\
disturbance_active";

/// One telemetry sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_s: f64,
    pub setpoint_c: f64,
    pub surface_c: f64,
    pub tank_c: f64,
    pub cover_in_c: f64,
    pub cover_out_c: f64,
    pub peltier_top_c: f64,
    pub peltier_bottom_c: f64,
    pub u_peltier_c: f64,
    pub u_pump_v: f64,
    pub clamped: bool,
    pub disturbance_active: bool,
}

/// Recorded run, one row per sample instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn push(&mut self, sample: Sample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t_s).collect()
    }

    pub fn column(&self, which: Signal) -> Vec<f64> {
        self.samples.iter().map(|s| which.of(s)).collect()
    }

    /// Writes the fixed-header CSV. Formatting is value-deterministic:
    /// identical runs produce identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                sig6(s.t_s),
                sig6(s.setpoint_c),
                sig6(s.surface_c),
                sig6(s.tank_c),
                sig6(s.cover_in_c),
                sig6(s.cover_out_c),
                sig6(s.peltier_top_c),
                sig6(s.peltier_bottom_c),
                sig6(s.u_peltier_c),
                sig6(s.u_pump_v),
                u8::from(s.clamped),
                u8::from(s.disturbance_active),
            )?;
        }
        Ok(())
    }
}

/// Telemetry column selectors for estimators and summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Setpoint,
    Surface,
    Tank,
    CoverIn,
    CoverOut,
    PeltierTop,
    PeltierBottom,
    PeltierCommand,
    PumpVoltage,
}

impl Signal {
    pub fn of(self, s: &Sample) -> f64 {
        match self {
            Signal::Setpoint => s.setpoint_c,
            Signal::Surface => s.surface_c,
            Signal::Tank => s.tank_c,
            Signal::CoverIn => s.cover_in_c,
            Signal::CoverOut => s.cover_out_c,
            Signal::PeltierTop => s.peltier_top_c,
            Signal::PeltierBottom => s.peltier_bottom_c,
            Signal::PeltierCommand => s.u_peltier_c,
            Signal::PumpVoltage => s.u_pump_v,
        }
    }
}

/// Prints with six significant digits, plain decimal notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Fraction of a step completed after one time constant.
pub const ONE_TAU_FRACTION: f64 = 0.63212;

/// Time constant of a settled step response: time to cover 63.212 % of
/// the total change, linearly interpolated between samples.
///
/// The series must start at the step instant, settle (tail within 1 % of
/// the swing) and rise or fall essentially monotonically (reversals above
/// 1 % of the swing are rejected).
pub fn step_response_time_constant(t: &[f64], y: &[f64]) -> Result<f64> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::Estimation(format!(
            "need at least 4 aligned samples, got {} / {}",
            t.len(),
            y.len()
        )));
    }
    let y0 = y[0];
    let y_end = *y.last().unwrap();
    let swing = y_end - y0;
    if swing.abs() < 1.0e-9 {
        return Err(Error::Estimation("no step excitation in series".into()));
    }
    let direction = swing.signum();

    let tail_start = t.len() - (t.len() / 10).max(2);
    let tail_dev = y[tail_start..]
        .iter()
        .map(|v| (v - y_end).abs())
        .fold(0.0, f64::max);
    if tail_dev > 0.01 * swing.abs() {
        return Err(Error::Estimation(format!(
            "series not settled: tail deviates {tail_dev:.4} of a {swing:.4} swing"
        )));
    }

    let mut running_peak = y0 * direction;
    for v in y {
        let progress = v * direction;
        if running_peak - progress > 0.01 * swing.abs() {
            return Err(Error::Estimation(
                "series is not monotone toward its asymptote".into(),
            ));
        }
        running_peak = running_peak.max(progress);
    }

    let target = y0 + ONE_TAU_FRACTION * swing;
    for i in 1..y.len() {
        let before = (y[i - 1] - target) * direction;
        let after = (y[i] - target) * direction;
        if before < 0.0 && after >= 0.0 {
            let frac = -before / (after - before);
            return Ok(t[i - 1] + frac * (t[i] - t[i - 1]) - t[0]);
        }
    }
    Err(Error::Estimation("response never crossed 63.212 %".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order(tau: f64, dt: f64, n: usize, y0: f64, y_inf: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let y = t
            .iter()
            .map(|&ti| y_inf + (y0 - y_inf) * (-ti / tau).exp())
            .collect();
        (t, y)
    }

    #[test]
    fn recovers_a_synthetic_time_constant() {
        let (t, y) = first_order(10.0, 0.1, 1200, 20.0, 50.0);
        let tau = step_response_time_constant(&t, &y).unwrap();
        assert!((tau - 10.0).abs() < 0.05, "tau = {tau}");
    }

    #[test]
    fn works_for_falling_steps() {
        let (t, y) = first_order(5.578, 0.05, 800, 40.0, 17.0);
        let tau = step_response_time_constant(&t, &y).unwrap();
        assert!((tau - 5.578).abs() < 0.03, "tau = {tau}");
    }

    #[test]
    fn rejects_unsettled_series() {
        let (t, y) = first_order(10.0, 0.1, 120, 20.0, 50.0);
        assert!(matches!(
            step_response_time_constant(&t, &y),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn rejects_oscillating_series() {
        let t: Vec<f64> = (0..600).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&ti| 50.0 - 30.0 * (-ti / 5.0).exp() * (1.5 * ti).cos())
            .collect();
        assert!(step_response_time_constant(&t, &y).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(22.567_849), "22.5678");
        assert_eq!(sig6(600.05), "600.050");
        assert_eq!(sig6(0.000_123_456_4), "0.000123456");
        assert_eq!(sig6(-3.5), "-3.50000");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0e7), "10000000");
    }

    #[test]
    fn csv_layout_is_stable() {
        let mut ts = TimeSeries::default();
        ts.push(Sample {
            t_s: 0.5,
            setpoint_c: 30.0,
            surface_c: 22.123_456,
            tank_c: 22.0,
            cover_in_c: 22.0,
            cover_out_c: 22.0,
            peltier_top_c: 25.0,
            peltier_bottom_c: 25.0,
            u_peltier_c: 41.0,
            u_pump_v: 5.0,
            clamped: false,
            disturbance_active: true,
        });
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "0.500000,30.0000,22.1235,22.0000,22.0000,22.0000,25.0000,25.0000,41.0000,5.00000,0,1"
        );
    }
}
