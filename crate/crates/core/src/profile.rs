//! Setpoint profiles driving the closed-loop scenarios.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum SetpointProfile<T> {
    Constant { value: T },
    /// Piecewise-constant levels, each held for `hold` seconds.
    StepSequence { levels: Vec<T>, hold: T },
    /// Low half-period first, then high: mean -/+ amplitude.
    SquareWave { mean: T, amplitude: T, period: T },
    SineWave { mean: T, amplitude: T, period: T },
}

impl<T: Scalar> SetpointProfile<T> {
    pub fn validated(self) -> Result<Self> {
        let ok = match &self {
            SetpointProfile::Constant { value } => value.is_finite(),
            SetpointProfile::StepSequence { levels, hold } => {
                !levels.is_empty()
                    && levels.iter().all(|l| l.is_finite())
                    && hold.is_finite()
                    && *hold > T::zero()
            }
            SetpointProfile::SquareWave { mean, amplitude, period }
            | SetpointProfile::SineWave { mean, amplitude, period } => {
                mean.is_finite()
                    && amplitude.is_finite()
                    && *amplitude >= T::zero()
                    && period.is_finite()
                    && *period > T::zero()
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter {
                name: "profile",
                message: "profile parameters out of domain".into(),
            })
        }
    }

    /// Setpoint at time `t` (s from scenario start).
    pub fn value_at(&self, t: T) -> T {
        match self {
            SetpointProfile::Constant { value } => *value,
            SetpointProfile::StepSequence { levels, hold } => {
                let idx = (t / *hold).floor().as_f64().max(0.0) as usize;
                levels[idx.min(levels.len() - 1)]
            }
            SetpointProfile::SquareWave { mean, amplitude, period } => {
                let phase = (t / *period).fract();
                if phase < T::lit(0.5) {
                    *mean - *amplitude
                } else {
                    *mean + *amplitude
                }
            }
            SetpointProfile::SineWave { mean, amplitude, period } => {
                let phase = T::lit(2.0 * std::f64::consts::PI) * t / *period;
                *mean + *amplitude * phase.sin()
            }
        }
    }

    /// Setpoints at `len` future ticks starting at `t`, for preview.
    pub fn window(&self, t: T, tick: T, len: usize) -> Vec<T> {
        (0..len)
            .map(|k| self.value_at(t + tick * T::from_usize(k).unwrap()))
            .collect()
    }

    /// Duration after which the profile has nothing new to show, if any.
    pub fn natural_duration(&self) -> Option<T> {
        match self {
            SetpointProfile::StepSequence { levels, hold } => {
                Some(*hold * T::from_usize(levels.len()).unwrap())
            }
            _ => None,
        }
    }

    /// Lowest and highest setpoint the profile can emit.
    pub fn extremes(&self) -> (T, T) {
        match self {
            SetpointProfile::Constant { value } => (*value, *value),
            SetpointProfile::StepSequence { levels, .. } => {
                let lo = levels.iter().cloned().fold(T::infinity(), T::min);
                let hi = levels.iter().cloned().fold(T::neg_infinity(), T::max);
                (lo, hi)
            }
            SetpointProfile::SquareWave { mean, amplitude, .. }
            | SetpointProfile::SineWave { mean, amplitude, .. } => {
                (*mean - *amplitude, *mean + *amplitude)
            }
        }
    }
}
