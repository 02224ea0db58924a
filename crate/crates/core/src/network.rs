//! Lumped RC network: capacitive nodes, conductive edges, boundary nodes,
//! and the assembly of the full cover/loop graph from geometry.

use crate::error::{Error, Result};
use crate::geometry::{CoverGeometry, LoopGeometry};
use crate::materials::{self, Material};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind<T> {
    /// Temperature state with a heat capacity, J/K.
    Capacitive { heat_capacity: T },
    /// Externally imposed temperature (ambient, structure, device faces).
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub name: String,
    pub kind: NodeKind<T>,
}

/// Symmetric conductive link between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T> {
    pub a: usize,
    pub b: usize,
    /// Conductance, W/K.
    pub conductance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNetwork<T> {
    pub nodes: Vec<Node<T>>,
    pub edges: Vec<Edge<T>>,
}

impl<T: Scalar> ThermalNetwork<T> {
    pub fn is_capacitive(&self, node: usize) -> bool {
        matches!(self.nodes[node].kind, NodeKind::Capacitive { .. })
    }

    pub fn heat_capacity(&self, node: usize) -> T {
        match self.nodes[node].kind {
            NodeKind::Capacitive { heat_capacity } => heat_capacity,
            NodeKind::Boundary => T::infinity(),
        }
    }

    /// Whether `from` reaches `to` through the edge list.
    pub fn connected(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(i) = stack.pop() {
            if i == to {
                return true;
            }
            for e in &self.edges {
                let next = if e.a == i {
                    e.b
                } else if e.b == i {
                    e.a
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        false
    }
}

/// The materials the default plant is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSet<T> {
    pub water: Material<T>,
    pub gel: Material<T>,
    pub foam: Material<T>,
    pub tube_wall: Material<T>,
}

impl<T: Scalar> Default for MaterialSet<T> {
    fn default() -> Self {
        Self {
            water: materials::water(),
            gel: materials::gel(),
            foam: materials::foam(),
            tube_wall: materials::tube_wall(),
        }
    }
}

/// Film and shell coefficients closing the network. The water-to-wall and
/// surface-to-ambient films are the main calibration degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeCoefficients<T> {
    /// Water-side film on every wetted wall, W/(m2 K).
    pub h_water_wall: T,
    /// Cover surface to ambient air, W/(m2 K).
    pub h_surface_ambient: T,
    /// Outside film on the tubing, W/(m2 K).
    pub h_tube_ambient: T,
    /// Tank shell loss to ambient, W/K.
    pub tank_loss: T,
}

/// The two film defaults carry the values fitted by the step-response
/// calibration. The surface film is an effective coefficient: it lumps
/// convection, radiation and edge losses into one path.
impl<T: Scalar> Default for ExchangeCoefficients<T> {
    fn default() -> Self {
        Self {
            h_water_wall: T::lit(1534.382661211448),
            h_surface_ambient: T::lit(42.095605763488315),
            h_tube_ambient: T::lit(8.0),
            tank_loss: T::lit(0.1),
        }
    }
}

/// Node roles of the assembled network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub peltier_top: usize,
    pub peltier_bottom: usize,
    pub ambient: usize,
    pub structure: usize,
    pub tank: usize,
    pub supply: Vec<usize>,
    pub cover: Vec<usize>,
    pub ret: Vec<usize>,
    pub surface: usize,
}

impl NetworkLayout {
    /// Water cells in flow order: tank, supply run, cover, return run.
    pub fn water_ring(&self) -> Vec<usize> {
        let mut ring = Vec::with_capacity(1 + self.supply.len() + self.cover.len() + self.ret.len());
        ring.push(self.tank);
        ring.extend(&self.supply);
        ring.extend(&self.cover);
        ring.extend(&self.ret);
        ring
    }
}

/// Assembles the cover/loop network.
///
/// Topology: both device faces couple to the tank through the water film;
/// the tank leaks through its shell; tube cells leak through their walls;
/// each cover cell reaches the surface node through the water film plus
/// the gel slab and reaches the robot structure through the foam slab;
/// the surface exchanges with ambient air. The gel mass forms the surface
/// capacity and the foam mass rides with the channel cells it surrounds.
/// Hand contact is a runtime overlay on the surface node, not an edge
/// here.
pub fn build_network<T: Scalar>(
    mats: &MaterialSet<T>,
    cover: &CoverGeometry<T>,
    loop_geo: &LoopGeometry<T>,
    peltier_face_area: T,
    coeffs: &ExchangeCoefficients<T>,
) -> Result<(ThermalNetwork<T>, NetworkLayout)> {
    cover.clone().validated()?;
    loop_geo.clone().validated()?;
    for (label, v) in [
        ("peltier face area", peltier_face_area),
        ("h_water_wall", coeffs.h_water_wall),
    ] {
        if !(v.is_finite() && v > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "network",
                message: format!("{label} must be positive and finite"),
            });
        }
    }
    // Zero loss coefficients are legal; they drop the edge (adiabatic
    // studies disable the ambient exchange this way).
    for (label, v) in [
        ("h_surface_ambient", coeffs.h_surface_ambient),
        ("h_tube_ambient", coeffs.h_tube_ambient),
        ("tank_loss", coeffs.tank_loss),
    ] {
        if !(v.is_finite() && v >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "network",
                message: format!("{label} must be non-negative and finite"),
            });
        }
    }

    let mut nodes = Vec::new();
    let push = |nodes: &mut Vec<Node<T>>, name: String, kind: NodeKind<T>| -> usize {
        nodes.push(Node { name, kind });
        nodes.len() - 1
    };

    let peltier_top = push(&mut nodes, "peltier_top".into(), NodeKind::Boundary);
    let peltier_bottom = push(&mut nodes, "peltier_bottom".into(), NodeKind::Boundary);
    let ambient = push(&mut nodes, "ambient".into(), NodeKind::Boundary);
    let structure = push(&mut nodes, "structure".into(), NodeKind::Boundary);

    let tank = push(
        &mut nodes,
        "tank".into(),
        NodeKind::Capacitive {
            heat_capacity: mats.water.heat_capacity(loop_geo.tank_volume),
        },
    );
    let tube_cell_capacity = mats.water.heat_capacity(loop_geo.tube_cell_volume());
    let half = loop_geo.n_cells / 2;
    let supply: Vec<usize> = (0..half)
        .map(|i| {
            push(
                &mut nodes,
                format!("supply_{i}"),
                NodeKind::Capacitive {
                    heat_capacity: tube_cell_capacity,
                },
            )
        })
        .collect();
    let cover_cell_water = cover.channel_water_volume() / T::from_usize(cover.n_cells).unwrap();
    let foam_cell_mass_capacity = mats
        .foam
        .heat_capacity(cover.cell_active_area() * cover.foam_thickness);
    let cover_cells: Vec<usize> = (0..cover.n_cells)
        .map(|i| {
            push(
                &mut nodes,
                format!("cover_{i}"),
                NodeKind::Capacitive {
                    heat_capacity: mats.water.heat_capacity(cover_cell_water)
                        + foam_cell_mass_capacity,
                },
            )
        })
        .collect();
    let ret: Vec<usize> = (0..half)
        .map(|i| {
            push(
                &mut nodes,
                format!("return_{i}"),
                NodeKind::Capacitive {
                    heat_capacity: tube_cell_capacity,
                },
            )
        })
        .collect();
    let surface = push(
        &mut nodes,
        "surface".into(),
        NodeKind::Capacitive {
            heat_capacity: mats
                .gel
                .heat_capacity(cover.active_area * cover.gel_thickness),
        },
    );

    let mut edges = Vec::new();
    let face_film = coeffs.h_water_wall * peltier_face_area;
    edges.push(Edge { a: peltier_top, b: tank, conductance: face_film });
    edges.push(Edge { a: peltier_bottom, b: tank, conductance: face_film });
    if coeffs.tank_loss > T::zero() {
        edges.push(Edge { a: tank, b: ambient, conductance: coeffs.tank_loss });
    }

    // Tube cells: planar wall approximation over the outer area, in
    // series with the outside film.
    if coeffs.h_tube_ambient > T::zero() {
        let tube_area = loop_geo.tube_cell_outer_area();
        let wall_resistance =
            loop_geo.tube_wall_thickness / (mats.tube_wall.conductivity * tube_area);
        let film_resistance = (coeffs.h_tube_ambient * tube_area).recip();
        let tube_leak = (wall_resistance + film_resistance).recip();
        for &cell in supply.iter().chain(&ret) {
            edges.push(Edge { a: cell, b: ambient, conductance: tube_leak });
        }
    }

    // Cover cells: water film over the wetted channel wall in series with
    // the gel slab above; foam slab down to the structure.
    let film = (coeffs.h_water_wall * cover.cell_wetted_area()).recip();
    let gel_slab = cover.gel_thickness / (mats.gel.conductivity * cover.cell_active_area());
    let to_surface = (film + gel_slab).recip();
    let to_structure =
        mats.foam.conductivity * cover.cell_active_area() / cover.foam_thickness;
    for &cell in &cover_cells {
        edges.push(Edge { a: cell, b: surface, conductance: to_surface });
        edges.push(Edge { a: cell, b: structure, conductance: to_structure });
    }

    if coeffs.h_surface_ambient > T::zero() {
        edges.push(Edge {
            a: surface,
            b: ambient,
            conductance: coeffs.h_surface_ambient * cover.active_area,
        });
    }

    let network = ThermalNetwork { nodes, edges };
    let layout = NetworkLayout {
        peltier_top,
        peltier_bottom,
        ambient,
        structure,
        tank,
        supply,
        cover: cover_cells,
        ret,
        surface,
    };
    if !network.connected(layout.peltier_top, layout.surface) {
        return Err(Error::InvalidParameter {
            name: "network",
            message: "device faces are not connected to the surface".into(),
        });
    }
    Ok((network, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_build() -> (ThermalNetwork<f64>, NetworkLayout) {
        build_network(
            &MaterialSet::default(),
            &CoverGeometry::default(),
            &LoopGeometry::default(),
            0.0016,
            &ExchangeCoefficients::default(),
        )
        .unwrap()
    }

    #[test]
    fn faces_reach_the_surface() {
        let (net, layout) = default_build();
        assert!(net.connected(layout.peltier_top, layout.surface));
        assert!(net.connected(layout.peltier_bottom, layout.ambient));
    }

    #[test]
    fn water_ring_matches_cell_counts() {
        let (_, layout) = default_build();
        let ring = layout.water_ring();
        assert_eq!(ring.len(), 21);
        assert_eq!(ring[0], layout.tank);
        assert_eq!(*ring.last().unwrap(), *layout.ret.last().unwrap());
    }

    #[test]
    fn tank_capacity_is_water_mass_times_cp() {
        let (net, layout) = default_build();
        let volume = LoopGeometry::<f64>::default().tank_volume;
        assert_relative_eq!(
            net.heat_capacity(layout.tank),
            998.0 * 4186.0 * volume,
            max_relative = 1.0e-12
        );
    }

    #[test]
    fn surface_capacity_is_the_gel_mass() {
        let (net, layout) = default_build();
        let area = CoverGeometry::<f64>::default().active_area;
        assert_relative_eq!(
            net.heat_capacity(layout.surface),
            1200.0 * 1500.0 * area * 0.001,
            max_relative = 1.0e-12
        );
    }

    #[test]
    fn cover_edge_combines_film_and_gel_slab() {
        let (net, layout) = default_build();
        let cover = CoverGeometry::<f64>::default();
        let h = ExchangeCoefficients::<f64>::default().h_water_wall;
        let expected = 1.0
            / (1.0 / (h * cover.cell_wetted_area())
                + 0.001 / (0.37 * cover.cell_active_area()));
        let edge = net
            .edges
            .iter()
            .find(|e| e.a == layout.cover[0] && e.b == layout.surface)
            .unwrap();
        assert_relative_eq!(edge.conductance, expected, max_relative = 1.0e-12);
        // The gel slab alone would pass 370 W/(m2 K) over the cell slice;
        // the film can only lower that.
        assert!(edge.conductance < 370.0 * cover.cell_active_area());
    }

    #[test]
    fn single_channel_collapses_to_a_chain() {
        let mut cover = CoverGeometry::<f64>::default();
        cover.n_cells = 1;
        let mut lg = LoopGeometry::<f64>::default();
        lg.n_cells = 2;
        let (net, layout) = build_network(
            &MaterialSet::default(),
            &cover,
            &lg,
            0.0016,
            &ExchangeCoefficients::default(),
        )
        .unwrap();
        assert_eq!(layout.cover.len(), 1);
        assert_eq!(layout.water_ring().len(), 4);
        assert!(net.connected(layout.tank, layout.surface));
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        let mut cover = CoverGeometry::<f64>::default();
        cover.active_area = 0.0;
        assert!(build_network(
            &MaterialSet::default(),
            &cover,
            &LoopGeometry::default(),
            0.0016,
            &ExchangeCoefficients::default(),
        )
        .is_err());
    }
}
