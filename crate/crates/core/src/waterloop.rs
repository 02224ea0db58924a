//! Closed water loop: pump voltage-to-flow map and plug-flow advection
//! around the tank, supply tube, cover channels and return tube.

use crate::error::{Error, Result};
use crate::geometry::{CoverGeometry, LoopGeometry};
use crate::scalar::Scalar;

/// Piecewise-linear pump characteristic with a start-up deadband.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpMap<T> {
    /// Lowest drive voltage, V.
    pub v_min: T,
    /// Full-scale drive voltage, V.
    pub v_max: T,
    /// No flow at or below this voltage, V.
    pub deadband: T,
    /// Flow at `v_max`, m3/s.
    pub q_max: T,
}

impl<T: Scalar> PumpMap<T> {
    /// Flow for a drive voltage, m3/s. Monotone non-decreasing, zero
    /// through the deadband, linear up to `q_max`, clamped above `v_max`.
    pub fn flow(&self, voltage: T) -> Result<T> {
        if !voltage.is_finite() || voltage < self.v_min {
            return Err(Error::Actuation(format!(
                "pump voltage {voltage} below v_min {}",
                self.v_min
            )));
        }
        let v = voltage.min(self.v_max);
        if v <= self.deadband {
            return Ok(T::zero());
        }
        Ok(self.q_max * (v - self.deadband) / (self.v_max - self.deadband))
    }

    pub fn validated(self) -> Result<Self> {
        let ok = self.v_min.is_finite()
            && self.v_max.is_finite()
            && self.deadband.is_finite()
            && self.q_max.is_finite()
            && self.v_min >= T::zero()
            && self.v_max > self.deadband
            && self.deadband >= self.v_min
            && self.q_max > T::zero();
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter {
                name: "pump map",
                message: "require v_min <= deadband < v_max and q_max > 0".into(),
            })
        }
    }
}

impl<T: Scalar> Default for PumpMap<T> {
    fn default() -> Self {
        Self {
            v_min: T::zero(),
            v_max: T::lit(5.0),
            deadband: T::lit(0.5),
            // 80 ml/min full-scale flow.
            q_max: T::lit(80.0e-6 / 60.0),
        }
    }
}

/// Which physical run of the loop a cell belongs to, in flow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Tank,
    SupplyTube(usize),
    Cover(usize),
    ReturnTube(usize),
}

/// One well-mixed cell of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopCell<T> {
    pub segment: Segment,
    /// Water volume, m3.
    pub volume: T,
    /// Temperature, C.
    pub temperature: T,
}

/// Water state around the closed loop, in flow order starting at the
/// tank. Advection shifts heat along the ring; the network step handles
/// exchange with walls and faces.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterLoopState<T> {
    pub cells: Vec<LoopCell<T>>,
    /// Current volumetric flow, m3/s.
    pub flow_rate: T,
}

impl<T: Scalar> WaterLoopState<T> {
    /// Builds the ring: tank, supply tube cells, cover channel cells,
    /// return tube cells. Tube cells split evenly between the runs.
    pub fn build(
        cover: &CoverGeometry<T>,
        loop_geo: &LoopGeometry<T>,
        initial_temp: T,
    ) -> Result<Self> {
        if !initial_temp.is_finite() {
            return Err(Error::InvalidParameter {
                name: "initial_temp",
                message: "must be finite".into(),
            });
        }
        let tube_cell = loop_geo.tube_cell_volume();
        let cover_cell = cover.channel_water_volume() / T::from_usize(cover.n_cells).unwrap();
        let half = loop_geo.n_cells / 2;
        let mut cells = Vec::with_capacity(1 + loop_geo.n_cells + cover.n_cells);
        cells.push(LoopCell {
            segment: Segment::Tank,
            volume: loop_geo.tank_volume,
            temperature: initial_temp,
        });
        for i in 0..half {
            cells.push(LoopCell {
                segment: Segment::SupplyTube(i),
                volume: tube_cell,
                temperature: initial_temp,
            });
        }
        for i in 0..cover.n_cells {
            cells.push(LoopCell {
                segment: Segment::Cover(i),
                volume: cover_cell,
                temperature: initial_temp,
            });
        }
        for i in 0..half {
            cells.push(LoopCell {
                segment: Segment::ReturnTube(i),
                volume: tube_cell,
                temperature: initial_temp,
            });
        }
        Ok(Self {
            cells,
            flow_rate: T::zero(),
        })
    }

    /// Total water volume in the ring, m3.
    pub fn total_volume(&self) -> T {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Volume-weighted temperature integral (sum of V_i * T_i, m3 C).
    /// Advection preserves this exactly; conservation tests build on it.
    pub fn thermal_charge(&self) -> T {
        self.cells.iter().map(|c| c.volume * c.temperature).sum()
    }

    /// Mean dwell time of a parcel in the tubing between tank and cover
    /// at the given flow, s.
    pub fn mean_transit_time(&self, flow_rate: T) -> Result<T> {
        if !(flow_rate.is_finite() && flow_rate > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "flow_rate",
                message: "transit time needs a positive flow".into(),
            });
        }
        let tube_volume: T = self
            .cells
            .iter()
            .filter(|c| matches!(c.segment, Segment::SupplyTube(_) | Segment::ReturnTube(_)))
            .map(|c| c.volume)
            .sum();
        Ok(tube_volume / flow_rate)
    }

    /// Tank temperature as seen by three stacked probes; `offset` models
    /// residual stratification (default 0 keeps all three identical).
    pub fn tank_probe_temps(&self, offset: T) -> [T; 3] {
        let t = self.cells[0].temperature;
        [t + offset, t, t - offset]
    }

    /// Advances plug flow by `dt` seconds at the state's flow rate.
    ///
    /// Upwind donor-cell transport on the ring, substepped so no more
    /// than one smallest-cell volume moves per substep. Conserves the
    /// thermal charge and keeps every temperature inside the pre-step
    /// min/max envelope. Moving exactly one cell volume between equal
    /// cells swaps them.
    pub fn advect(&mut self, dt: T) -> Result<()> {
        if !dt.is_finite() || dt < T::zero() {
            return Err(Error::InvalidParameter {
                name: "dt",
                message: "advection step must be non-negative".into(),
            });
        }
        if !self.flow_rate.is_finite() || self.flow_rate < T::zero() {
            return Err(Error::Actuation(format!(
                "flow rate {} outside the one-directional pump range",
                self.flow_rate
            )));
        }
        let moved = self.flow_rate * dt;
        if moved == T::zero() {
            return Ok(());
        }
        let min_volume = self
            .cells
            .iter()
            .map(|c| c.volume)
            .fold(T::infinity(), T::min);
        let substeps = (moved / min_volume).ceil().as_f64().max(1.0) as usize;
        let step_volume = moved / T::from_usize(substeps).unwrap();

        let n = self.cells.len();
        let mut previous = vec![T::zero(); n];
        for _ in 0..substeps {
            for (slot, cell) in previous.iter_mut().zip(&self.cells) {
                *slot = cell.temperature;
            }
            for i in 0..n {
                let upstream = previous[(i + n - 1) % n];
                let cell = &mut self.cells[i];
                cell.temperature =
                    cell.temperature + step_volume / cell.volume * (upstream - cell.temperature);
            }
        }
        Ok(())
    }
}
