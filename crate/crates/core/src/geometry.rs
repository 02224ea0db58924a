//! Cover and water-loop dimensions everything else derives from.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimensions of the heat exchange cover: semicircular channels cast into
/// foam, sealed by a gel skin.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverGeometry<T> {
    /// Channel diameter (flat side toward the gel), m.
    pub channel_diameter: T,
    /// Center-to-center channel spacing, m.
    pub channel_pitch: T,
    /// Heat exchange area covered by the channel grid, m2.
    pub active_area: T,
    /// Gel skin thickness above the channels, m.
    pub gel_thickness: T,
    /// Foam body thickness below the channels, m.
    pub foam_thickness: T,
    /// Total channel length threaded through the active area, m.
    pub channel_total_length: T,
    /// Number of well-mixed channel segments in the network.
    pub n_cells: usize,
}

impl<T: Scalar> CoverGeometry<T> {
    /// Serpentine length that fills `active_area` at `pitch` spacing.
    pub fn derived_channel_length(active_area: T, pitch: T) -> T {
        active_area / pitch
    }

    pub fn validated(self) -> Result<Self> {
        for (label, v) in [
            ("channel_diameter", self.channel_diameter),
            ("channel_pitch", self.channel_pitch),
            ("active_area", self.active_area),
            ("gel_thickness", self.gel_thickness),
            ("foam_thickness", self.foam_thickness),
            ("channel_total_length", self.channel_total_length),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidParameter {
                    name: "cover geometry",
                    message: format!("{label} must be positive and finite"),
                });
            }
        }
        if self.channel_pitch <= self.channel_diameter {
            return Err(Error::InvalidParameter {
                name: "cover geometry",
                message: "channel_pitch must exceed channel_diameter".into(),
            });
        }
        if self.n_cells == 0 {
            return Err(Error::InvalidParameter {
                name: "cover geometry",
                message: "n_cells must be at least 1".into(),
            });
        }
        Ok(self)
    }

    /// Cross section of one semicircular channel, m2.
    pub fn channel_cross_section(&self) -> T {
        T::lit(std::f64::consts::PI / 8.0) * self.channel_diameter * self.channel_diameter
    }

    /// Wetted perimeter of one channel (arc plus flat side), m.
    pub fn channel_wetted_perimeter(&self) -> T {
        self.channel_diameter * T::lit(1.0 + std::f64::consts::PI / 2.0)
    }

    /// Water volume held in the cover channels, m3.
    pub fn channel_water_volume(&self) -> T {
        self.channel_cross_section() * self.channel_total_length
    }

    /// Water-to-wall film area of one channel cell, m2.
    pub fn cell_wetted_area(&self) -> T {
        self.channel_wetted_perimeter() * self.channel_total_length
            / T::from_usize(self.n_cells).unwrap()
    }

    /// Slice of the active (gel or foam facing) area per channel cell, m2.
    pub fn cell_active_area(&self) -> T {
        self.active_area / T::from_usize(self.n_cells).unwrap()
    }
}

/// Defaults describe the calibrated bench device; `active_area` carries
/// the value fitted by the step-response calibration.
impl<T: Scalar> Default for CoverGeometry<T> {
    fn default() -> Self {
        let active_area = T::lit(0.027181990950512273);
        let pitch = T::lit(0.010);
        Self {
            channel_diameter: T::lit(0.003),
            channel_pitch: pitch,
            active_area,
            gel_thickness: T::lit(0.001),
            foam_thickness: T::lit(0.006),
            channel_total_length: Self::derived_channel_length(active_area, pitch),
            n_cells: 10,
        }
    }
}

/// Dimensions of the tank and the tubing to and from the cover.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopGeometry<T> {
    /// Tube inner diameter, m.
    pub tube_inner_diameter: T,
    /// Total tube length, supply and return combined, m.
    pub tube_length: T,
    /// Tube wall thickness, m. The wall is treated as pure resistance.
    pub tube_wall_thickness: T,
    /// Well-mixed tank volume, m3.
    pub tank_volume: T,
    /// Number of tube segments in the network; split evenly between the
    /// supply and return runs, so it must be even.
    pub n_cells: usize,
}

impl<T: Scalar> LoopGeometry<T> {
    pub fn validated(self) -> Result<Self> {
        for (label, v) in [
            ("tube_inner_diameter", self.tube_inner_diameter),
            ("tube_length", self.tube_length),
            ("tube_wall_thickness", self.tube_wall_thickness),
            ("tank_volume", self.tank_volume),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidParameter {
                    name: "loop geometry",
                    message: format!("{label} must be positive and finite"),
                });
            }
        }
        if self.n_cells < 2 || self.n_cells % 2 != 0 {
            return Err(Error::InvalidParameter {
                name: "loop geometry",
                message: "n_cells must be even and at least 2".into(),
            });
        }
        Ok(self)
    }

    /// Tube flow cross section, m2.
    pub fn tube_cross_section(&self) -> T {
        T::lit(std::f64::consts::PI / 4.0) * self.tube_inner_diameter * self.tube_inner_diameter
    }

    /// Water volume held in the tubing, m3.
    pub fn tube_water_volume(&self) -> T {
        self.tube_cross_section() * self.tube_length
    }

    /// Volume of one tube segment, m3.
    pub fn tube_cell_volume(&self) -> T {
        self.tube_water_volume() / T::from_usize(self.n_cells).unwrap()
    }

    /// Length of one tube segment, m.
    pub fn tube_cell_length(&self) -> T {
        self.tube_length / T::from_usize(self.n_cells).unwrap()
    }

    /// Outer surface area of one tube segment, m2.
    pub fn tube_cell_outer_area(&self) -> T {
        let outer_diameter =
            self.tube_inner_diameter + T::lit(2.0) * self.tube_wall_thickness;
        T::lit(std::f64::consts::PI) * outer_diameter * self.tube_cell_length()
    }
}

/// Defaults describe the calibrated bench device; `tank_volume` carries
/// the value fitted by the step-response calibration.
impl<T: Scalar> Default for LoopGeometry<T> {
    fn default() -> Self {
        Self {
            tube_inner_diameter: T::lit(0.0025),
            tube_length: T::lit(1.46),
            tube_wall_thickness: T::lit(0.001),
            tank_volume: T::lit(2.7328506470216687e-5),
            n_cells: 10,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn tube_volume_from_bore_and_length() {
        let g = LoopGeometry::<f64>::default();
        // Independent route: radius squared times pi times length.
        let expected = PI * 0.00125 * 0.00125 * 1.46;
        assert_relative_eq!(g.tube_water_volume(), expected, max_relative = 1.0e-12);
        assert_relative_eq!(g.tube_water_volume(), 7.17e-6, max_relative = 1.0e-3);
    }

    #[test]
    fn tube_cell_heat_capacity() {
        let g = LoopGeometry::<f64>::default();
        let c = materials::water::<f64>().heat_capacity(g.tube_cell_volume());
        let expected = 998.0 * 4186.0 * (PI * 0.00125 * 0.00125 * 0.146);
        assert_relative_eq!(c, expected, max_relative = 1.0e-12);
        assert_relative_eq!(c, 2.99, max_relative = 2.0e-3);
    }

    #[test]
    fn semicircular_channel_cross_section() {
        let g = CoverGeometry::<f64>::default();
        assert_relative_eq!(
            g.channel_cross_section(),
            PI * 0.0015 * 0.0015 / 2.0,
            max_relative = 1.0e-12
        );
    }

    #[test]
    fn channel_length_fills_active_area() {
        let g = CoverGeometry::<f64> {
            active_area: 0.02,
            channel_total_length: CoverGeometry::<f64>::derived_channel_length(0.02, 0.010),
            ..Default::default()
        };
        assert_relative_eq!(g.channel_total_length, 2.0, max_relative = 1.0e-12);
        assert_relative_eq!(
            g.channel_water_volume(),
            PI * 0.0015 * 0.0015 / 2.0 * 2.0,
            max_relative = 1.0e-12
        );
    }

    #[test]
    fn validation_rejects_tight_pitch_and_odd_tube_split() {
        let mut cover = CoverGeometry::<f64>::default();
        cover.channel_pitch = 0.002;
        assert!(cover.validated().is_err());

        let mut lg = LoopGeometry::<f64>::default();
        lg.n_cells = 9;
        assert!(lg.validated().is_err());
    }
}
