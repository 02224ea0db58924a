//! Thermoelectric device model: coefficient identification from datasheet
//! maxima, face heat flows, and the first-order command-following mode.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Offset between Celsius state variables and the absolute temperatures
/// the device equations need.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Datasheet ratings of one device, all at the hot-side reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PeltierSpecs<T> {
    /// Maximum temperature difference at zero load, K.
    pub dt_max: T,
    /// Maximum cooling capacity at zero temperature difference, W.
    pub q_max: T,
    /// Voltage at maximum ratings, V.
    pub v_max: T,
    /// Current at maximum ratings, A.
    pub i_max: T,
    /// Hot side temperature the ratings are quoted at, K.
    pub hot_side_reference: T,
    /// Heat exchange face area, m2.
    pub face_area: T,
}

impl<T: Scalar> Default for PeltierSpecs<T> {
    fn default() -> Self {
        Self {
            dt_max: T::lit(72.0),
            q_max: T::lit(77.1),
            v_max: T::lit(15.7),
            i_max: T::lit(8.5),
            hot_side_reference: T::lit(323.15),
            face_area: T::lit(0.0016),
        }
    }
}

/// Lumped device coefficients recovered from the ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct PeltierParams<T> {
    /// Effective Seebeck coefficient, V/K.
    pub seebeck: T,
    /// Internal electrical resistance, ohm.
    pub resistance: T,
    /// Internal thermal conductance between the faces, W/K.
    pub conductance: T,
    /// Admissible current magnitude, A.
    pub max_current: T,
}

/// Heat flows at the two faces for a positive pumping current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceHeatFlows<T> {
    /// Heat removed from the cold face, W.
    pub q_cold: T,
    /// Heat delivered to the hot face, W.
    pub q_hot: T,
}

/// Largest admissible mismatch between the rated cooling capacity and the
/// capacity the recovered coefficients reproduce. The standard maxima
/// identities close to roughly 6 % on this device class.
pub const CAPACITY_CLOSURE_TOLERANCE: f64 = 0.06;

/// Recovers Seebeck coefficient, resistance and thermal conductance from
/// the datasheet maxima, then checks that substituting them back
/// reproduces `q_max` at zero temperature difference and `i_max`.
pub fn derive_peltier_coefficients<T: Scalar>(specs: &PeltierSpecs<T>) -> Result<PeltierParams<T>> {
    for (label, v) in [
        ("dt_max", specs.dt_max),
        ("q_max", specs.q_max),
        ("v_max", specs.v_max),
        ("i_max", specs.i_max),
        ("hot_side_reference", specs.hot_side_reference),
        ("face_area", specs.face_area),
    ] {
        if !(v.is_finite() && v > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "peltier specs",
                message: format!("{label} must be positive and finite"),
            });
        }
    }
    if specs.dt_max >= specs.hot_side_reference {
        return Err(Error::InvalidParameter {
            name: "peltier specs",
            message: "dt_max must be below the hot side reference".into(),
        });
    }

    let th = specs.hot_side_reference;
    let cold_ref = th - specs.dt_max;
    let seebeck = specs.v_max / th;
    let resistance = specs.v_max * cold_ref / (specs.i_max * th);
    let conductance =
        specs.v_max * specs.i_max * cold_ref / (T::lit(2.0) * th * specs.dt_max);

    let params = PeltierParams {
        seebeck,
        resistance,
        conductance,
        max_current: specs.i_max,
    };
    let closed =
        seebeck * specs.i_max * th - T::lit(0.5) * specs.i_max * specs.i_max * resistance;
    let mismatch = ((closed - specs.q_max) / specs.q_max).abs();
    if mismatch > T::lit(CAPACITY_CLOSURE_TOLERANCE) {
        return Err(Error::InvalidParameter {
            name: "peltier specs",
            message: format!(
                "ratings are inconsistent: derived capacity {:.2} W vs rated {:.2} W",
                closed.as_f64(),
                specs.q_max.as_f64()
            ),
        });
    }
    Ok(params)
}

/// Face heat flows for a device pumping from the cold to the hot face.
///
/// Temperatures are absolute (K) and `current >= 0` drives heat toward
/// the hot face; callers relabel the faces to reverse the device. In this
/// regime `q_hot >= q_cold`, with equality only at zero current, and
/// `q_hot - q_cold` equals the electrical power drawn.
pub fn face_heat_flows<T: Scalar>(
    params: &PeltierParams<T>,
    t_cold: T,
    t_hot: T,
    current: T,
) -> Result<FaceHeatFlows<T>> {
    if !current.is_finite() || current < T::zero() || current > params.max_current {
        return Err(Error::InvalidParameter {
            name: "current",
            message: format!(
                "current {} A outside [0, {} A]",
                current,
                params.max_current
            ),
        });
    }
    if !(t_cold.is_finite() && t_hot.is_finite() && t_cold > T::zero() && t_hot > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "face temperature",
            message: "face temperatures must be positive absolute temperatures".into(),
        });
    }
    let dt = t_hot - t_cold;
    let joule = T::lit(0.5) * current * current * params.resistance;
    let leak = params.conductance * dt;
    Ok(FaceHeatFlows {
        q_cold: params.seebeck * current * t_cold - joule - leak,
        q_hot: params.seebeck * current * t_hot + joule - leak,
    })
}

/// Heat delivered into one face for a signed current, W.
///
/// `current > 0` pumps heat toward `t_face`; the far face sees the same
/// current with opposite sign. Used by the current-drive simulation mode
/// where either face can play the hot role.
pub fn face_flow_into<T: Scalar>(params: &PeltierParams<T>, t_face: T, t_far: T, current: T) -> T {
    params.seebeck * current * t_face + T::lit(0.5) * current * current * params.resistance
        - params.conductance * (t_face - t_far)
}

/// Advances a command-following face temperature by one step of the
/// first-order lag, exactly: `T + (command - T) * (1 - exp(-dt/tau))`.
pub fn command_mode_step<T: Scalar>(face_temp: T, command: T, tau: T, dt: T) -> Result<T> {
    if !(tau.is_finite() && tau > T::zero()) || !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "lag step",
            message: "tau and dt must be positive".into(),
        });
    }
    if !face_temp.is_finite() || !command.is_finite() {
        return Err(Error::Actuation("non-finite face temperature or command".into()));
    }
    Ok(face_temp + (command - face_temp) * (T::one() - (-dt / tau).exp()))
}
