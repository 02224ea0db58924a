//! Material properties and composed conduction paths.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Homogeneous material as seen by the lumped network.
#[derive(Debug, Clone, PartialEq)]
pub struct Material<T> {
    /// Identifier used in config files and error messages.
    pub name: String,
    /// Thermal conductivity, W/(m K).
    pub conductivity: T,
    /// Density, kg/m3.
    pub density: T,
    /// Specific heat capacity, J/(kg K).
    pub specific_heat: T,
}

impl<T: Scalar> Material<T> {
    pub fn new(name: &str, conductivity: T, density: T, specific_heat: T) -> Result<Self> {
        for (label, v) in [
            ("conductivity", conductivity),
            ("density", density),
            ("specific_heat", specific_heat),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidParameter {
                    name: "material",
                    message: format!("{name}: {label} must be positive and finite"),
                });
            }
        }
        Ok(Self {
            name: name.to_owned(),
            conductivity,
            density,
            specific_heat,
        })
    }

    /// Heat capacity of `volume` m3 of this material, J/K.
    pub fn heat_capacity(&self, volume: T) -> T {
        self.density * self.specific_heat * volume
    }
}

/// Series conductance of a layer stack normal to the heat flow, W/K.
///
/// `layers` are (material, thickness m) pairs; `area` is the common cross
/// section in m2. Resistances add, so the result is independent of layer
/// order and scales linearly with area.
pub fn series_conductance<T: Scalar>(layers: &[(&Material<T>, T)], area: T) -> Result<T> {
    if layers.is_empty() {
        return Err(Error::InvalidParameter {
            name: "layers",
            message: "series stack needs at least one layer".into(),
        });
    }
    if !(area.is_finite() && area > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "area",
            message: "cross section must be positive and finite".into(),
        });
    }
    let mut resistance = T::zero();
    for (material, thickness) in layers {
        if !(thickness.is_finite() && *thickness > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "thickness",
                message: format!("layer {}: thickness must be positive", material.name),
            });
        }
        resistance = resistance + *thickness / (material.conductivity * area);
    }
    Ok(resistance.recip())
}

/// Stock water properties near room temperature.
pub fn water<T: Scalar>() -> Material<T> {
    Material {
        name: "water".into(),
        conductivity: T::lit(0.604),
        density: T::lit(998.0),
        specific_heat: T::lit(4186.0),
    }
}

/// Soft thermally conductive gel forming the touch surface.
pub fn gel<T: Scalar>() -> Material<T> {
    Material {
        name: "gel".into(),
        conductivity: T::lit(0.37),
        density: T::lit(1200.0),
        specific_heat: T::lit(1500.0),
    }
}

/// Closed-cell polyurethane foam body the channels are cast into.
pub fn foam<T: Scalar>() -> Material<T> {
    Material {
        name: "foam".into(),
        conductivity: T::lit(0.035),
        density: T::lit(100.0),
        specific_heat: T::lit(1400.0),
    }
}

/// Silicone tubing between tank and cover; modeled as pure resistance.
pub fn tube_wall<T: Scalar>() -> Material<T> {
    Material {
        name: "tube_wall".into(),
        conductivity: T::lit(0.20),
        density: T::lit(1150.0),
        specific_heat: T::lit(1200.0),
    }
}

/// Thin TPU film lining the channels.
pub fn tpu<T: Scalar>() -> Material<T> {
    Material {
        name: "tpu".into(),
        conductivity: T::lit(0.20),
        density: T::lit(1220.0),
        specific_heat: T::lit(1500.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gel_slab_conductance_per_area() {
        // 1 mm gel: k/t = 370 W/(m2 K), so 3.7 W/K over 0.01 m2.
        let g = series_conductance(&[(&gel::<f64>(), 1.0e-3)], 0.01).unwrap();
        assert_relative_eq!(g, 3.70, max_relative = 1.0e-12);
    }

    #[test]
    fn gel_plus_tpu_stack_over_100_cm2() {
        let g = series_conductance(&[(&gel::<f64>(), 1.0e-3), (&tpu(), 0.4e-3)], 0.01).unwrap();
        assert_relative_eq!(g, 2.1264367816091956, max_relative = 1.0e-12);
    }

    #[test]
    fn water_heat_capacity_of_a_tank() {
        let c = water::<f64>().heat_capacity(3.0e-5);
        assert_relative_eq!(c, 998.0 * 4186.0 * 3.0e-5, max_relative = 1.0e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let g = series_conductance(&[(&gel::<f32>(), 1.0e-3)], 0.01).unwrap();
        assert_relative_eq!(g, 3.70f32, max_relative = 1.0e-5);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(series_conductance::<f64>(&[], 0.01).is_err());
        assert!(series_conductance(&[(&gel::<f64>(), 0.0)], 0.01).is_err());
        assert!(series_conductance(&[(&gel::<f64>(), 1.0e-3)], -1.0).is_err());
        assert!(Material::<f64>::new("bad", 0.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn order_invariant(
            t1 in 1.0e-4f64..1.0e-2,
            t2 in 1.0e-4f64..1.0e-2,
            t3 in 1.0e-4f64..1.0e-2,
            area in 1.0e-3f64..1.0,
        ) {
            let (g, f, w) = (gel::<f64>(), foam::<f64>(), tube_wall::<f64>());
            let a = series_conductance(&[(&g, t1), (&f, t2), (&w, t3)], area).unwrap();
            let b = series_conductance(&[(&w, t3), (&g, t1), (&f, t2)], area).unwrap();
            prop_assert!((a - b).abs() <= 1.0e-12 * a.abs());
        }

        #[test]
        fn linear_in_area(
            t1 in 1.0e-4f64..1.0e-2,
            area in 1.0e-3f64..1.0,
            scale in 0.1f64..10.0,
        ) {
            let g = gel::<f64>();
            let base = series_conductance(&[(&g, t1)], area).unwrap();
            let scaled = series_conductance(&[(&g, t1)], area * scale).unwrap();
            prop_assert!((scaled - base * scale).abs() <= 1.0e-9 * scaled.abs());
        }
    }
}
