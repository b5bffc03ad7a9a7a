//! The fibration base: ivy graphs, rounded simplices, and the glued
//! expanded skeleton.
//!
//! Each maximal face of the essential skeleton contributes a *rounded
//! simplex* (the image of the standard simplex under coordinatewise `−η`),
//! each submaximal face contributes a product of a rounded simplex with an
//! *ivy graph* (an open graph with a proper positive parameter on each
//! edge), and the pieces are glued along the open edge ends of the ivies.
//! For the canonical single-edge ivies on a pseudomanifold skeleton the
//! result is a closed manifold of cells.

use std::collections::BTreeMap;

use crate::dual_complex::{classify_faces, Face, FaceClass, Skeleton};
use crate::error::{Error, Result};
use crate::transfer::{eta, eta_inv};

// ---------------------------------------------------------------------------
// Ivy graphs
// ---------------------------------------------------------------------------

/// An end of an ivy edge: either attached to a vertex of the graph or open
/// (the parameter runs properly to 0 or ∞ there).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IvyEnd {
    Vertex(usize),
    Open,
}

/// An edge of an ivy graph. The parameter `p` is strictly increasing from
/// `ends[0]` to `ends[1]`; a closed end carries the critical level of its
/// vertex, an open end the (possibly infinite) limit level.
#[derive(Clone, Debug)]
pub struct IvyEdge {
    pub ends: [IvyEnd; 2],
    /// Parameter levels at the two ends; open ends may be 0 or +∞.
    pub levels: [f64; 2],
}

/// An open graph with a proper map to (0, ∞), strictly monotone on edges.
#[derive(Clone, Debug)]
pub struct IvyGraph {
    /// Critical levels of the vertices.
    pub vertex_levels: Vec<f64>,
    pub edges: Vec<IvyEdge>,
}

impl IvyGraph {
    /// The canonical ivy of a stratum isomorphic to C*: a single open edge
    /// with parameter running over all of (0, ∞), no vertices.
    pub fn canonical() -> Self {
        IvyGraph {
            vertex_levels: Vec::new(),
            edges: vec![IvyEdge {
                ends: [IvyEnd::Open, IvyEnd::Open],
                levels: [0.0, f64::INFINITY],
            }],
        }
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.edges
            .iter()
            .flat_map(|e| e.ends.iter())
            .filter(|end| matches!(end, IvyEnd::Vertex(v) if *v == vertex))
            .count()
    }

    /// Ramification vertices: degree at least 3.
    pub fn ram(&self) -> Vec<usize> {
        (0..self.vertex_levels.len())
            .filter(|&v| self.degree(v) >= 3)
            .collect()
    }

    /// Boundary vertices: degree exactly 1.
    pub fn boundary(&self) -> Vec<usize> {
        (0..self.vertex_levels.len())
            .filter(|&v| self.degree(v) == 1)
            .collect()
    }

    /// Open edge ends, as (edge index, end index) pairs, ordered with the
    /// 0-level ends first within each edge.
    pub fn open_ends(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            for side in 0..2 {
                if e.ends[side] == IvyEnd::Open {
                    out.push((i, side));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() {
            return Err(Error::InvalidModel("ivy graph has no edges".into()));
        }
        for (i, e) in self.edges.iter().enumerate() {
            let mut levels = e.levels;
            for side in 0..2 {
                if let IvyEnd::Vertex(v) = e.ends[side] {
                    if v >= self.vertex_levels.len() {
                        return Err(Error::InvalidModel(format!(
                            "ivy edge {i} references missing vertex {v}"
                        )));
                    }
                    levels[side] = self.vertex_levels[v];
                }
            }
            if !(levels[0] >= 0.0) || !(levels[1] > levels[0]) {
                return Err(Error::InvalidModel(format!(
                    "ivy edge {i} parameter is not strictly increasing: {:?}",
                    levels
                )));
            }
        }
        for v in 0..self.vertex_levels.len() {
            let d = self.degree(v);
            if d == 0 {
                return Err(Error::InvalidModel(format!("ivy vertex {v} is isolated")));
            }
            if d == 2 {
                return Err(Error::InvalidModel(format!(
                    "ivy vertex {v} has degree 2; suppress it by joining its edges"
                )));
            }
        }
        Ok(())
    }
}

/// Builds and validates an ivy graph from explicit critical levels and edge
/// connectivity.
pub fn ivy_from_data(vertex_levels: Vec<f64>, edges: Vec<IvyEdge>) -> Result<IvyGraph> {
    let ivy = IvyGraph {
        vertex_levels,
        edges,
    };
    ivy.validate()?;
    Ok(ivy)
}

// ---------------------------------------------------------------------------
// Rounded simplices
// ---------------------------------------------------------------------------

/// The image of a standard simplex under coordinatewise `−η`: the maximal
/// cell attached to a face, with coordinates `v̂_i = −η(w_i) ∈ [−1, 0]`.
#[derive(Clone, Debug)]
pub struct RoundedSimplex {
    pub face: Face,
}

impl RoundedSimplex {
    /// Simplex coordinates → cell coordinates.
    pub fn to_cell(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.face.len() {
            return Err(Error::Domain("weight count does not match the face".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!("not a point of the simplex: {w:?}")));
        }
        Ok(w.iter().map(|&x| -eta(x)).collect())
    }

    /// Cell coordinates → simplex coordinates (the inverse map).
    pub fn to_face(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.face.len() {
            return Err(Error::Domain(
                "coordinate count does not match the face".into(),
            ));
        }
        if v.iter().any(|&x| !(-1.0..=0.0).contains(&x)) {
            return Err(Error::Domain(format!(
                "not a point of the rounded simplex: {v:?}"
            )));
        }
        Ok(v.iter().map(|&x| eta_inv(-x)).collect())
    }
}

// ---------------------------------------------------------------------------
// The glued base
// ---------------------------------------------------------------------------

/// A cell of the expanded skeleton.
#[derive(Clone, Debug)]
pub enum Cell {
    /// Rounded simplex of a maximal face.
    Maximal { simplex: RoundedSimplex },
    /// Product of a rounded simplex with an ivy graph, for a submaximal
    /// face. `end_faces` records, per open edge end of the ivy (in
    /// `open_ends` order), the maximal face glued there, if any.
    Submaximal {
        simplex: RoundedSimplex,
        ivy: IvyGraph,
        end_faces: Vec<Option<Face>>,
    },
}

impl Cell {
    pub fn face(&self) -> &Face {
        match self {
            Cell::Maximal { simplex } => &simplex.face,
            Cell::Submaximal { simplex, .. } => &simplex.face,
        }
    }
}

/// The glued fibration base.
#[derive(Clone, Debug)]
pub struct ExpandedSkeleton {
    pub cells: Vec<Cell>,
    /// Gluings: (submaximal cell, open end index) ↔ maximal cell.
    pub gluings: Vec<(usize, usize, usize)>,
}

/// Per-submaximal-face ivy choice.
#[derive(Clone, Debug, Default)]
pub struct IvyChoice {
    /// Explicit ivies; faces not listed use the canonical single-edge ivy.
    pub explicit: BTreeMap<Face, IvyGraph>,
    /// Orientation overrides: for a canonical ivy, the maximal face placed
    /// at the 0-end (defaults to the lexicographically smaller one).
    pub zero_end: BTreeMap<Face, Face>,
}

/// Builds the expanded skeleton from the essential skeleton's maximal and
/// submaximal faces, gluing ivy edge ends to incident maximal faces.
pub fn build_expanded(sk: &Skeleton, choice: &IvyChoice) -> Result<ExpandedSkeleton> {
    let classes = classify_faces(sk);
    let mut maximal: Vec<Face> = Vec::new();
    let mut submaximal: Vec<Face> = Vec::new();
    for (face, class) in &classes {
        match class {
            FaceClass::Maximal => maximal.push(face.clone()),
            FaceClass::Submaximal => submaximal.push(face.clone()),
            FaceClass::Lower => {}
        }
    }
    maximal.sort();
    submaximal.sort();
    if maximal.is_empty() && submaximal.is_empty() {
        return Err(Error::InvalidModel(
            "skeleton has neither maximal nor submaximal faces".into(),
        ));
    }

    let mut cells: Vec<Cell> = maximal
        .iter()
        .map(|f| Cell::Maximal {
            simplex: RoundedSimplex { face: f.clone() },
        })
        .collect();
    let max_index: BTreeMap<Face, usize> = maximal
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, f)| (f, i))
        .collect();

    let mut gluings = Vec::new();
    for face in &submaximal {
        let ivy = choice
            .explicit
            .get(face)
            .cloned()
            .unwrap_or_else(IvyGraph::canonical);
        ivy.validate()?;
        // Incident maximal faces, in a deterministic order with the chosen
        // 0-end face first.
        let mut incident: Vec<Face> = maximal
            .iter()
            .filter(|m| face.is_subset(m))
            .cloned()
            .collect();
        if let Some(zero) = choice.zero_end.get(face) {
            if let Some(pos) = incident.iter().position(|m| m == zero) {
                incident.swap(0, pos);
            } else {
                return Err(Error::InvalidModel(format!(
                    "requested 0-end face {zero:?} is not incident to {face:?}"
                )));
            }
        }
        let ends = ivy.open_ends();
        if incident.len() > ends.len() {
            return Err(Error::InvalidModel(format!(
                "ivy of face {face:?} has {} open ends but {} incident maximal faces",
                ends.len(),
                incident.len()
            )));
        }
        let cell_idx = cells.len();
        let mut end_faces = vec![None; ends.len()];
        for (slot, m) in incident.iter().enumerate() {
            end_faces[slot] = Some(m.clone());
            gluings.push((cell_idx, slot, max_index[m]));
        }
        cells.push(Cell::Submaximal {
            simplex: RoundedSimplex { face: face.clone() },
            ivy,
            end_faces,
        });
    }
    Ok(ExpandedSkeleton { cells, gluings })
}

impl ExpandedSkeleton {
    /// Euler characteristic of the cell adjacency complex: cells minus
    /// gluings. For a one-dimensional base this is the Euler characteristic
    /// of the underlying graph (0 for a circle, 1 for an interval).
    pub fn euler_characteristic(&self) -> i64 {
        self.cells.len() as i64 - self.gluings.len() as i64
    }

    /// Ramification points of the base: one entry per ramification vertex
    /// of an ivy, as (cell index, vertex index).
    pub fn ram(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if let Cell::Submaximal { ivy, .. } = c {
                for v in ivy.ram() {
                    out.push((i, v));
                }
            }
        }
        out
    }

    /// Outer boundary points: degree-1 ivy vertices and unglued open ends.
    pub fn outer_boundary(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if let Cell::Submaximal { ivy, end_faces, .. } = c {
                for v in ivy.boundary() {
                    out.push((i, v));
                }
                for (slot, f) in end_faces.iter().enumerate() {
                    if f.is_none() {
                        out.push((i, usize::MAX - slot));
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Base points and their classification
// ---------------------------------------------------------------------------

/// A point of the expanded skeleton.
#[derive(Clone, Debug)]
pub struct BasePoint {
    pub cell: usize,
    /// Rounded-simplex coordinates `v̂_i` within the cell's simplex factor.
    pub simplex_coords: Vec<f64>,
    /// For submaximal cells: position on the ivy factor.
    pub ivy_position: Option<IvyPosition>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IvyPosition {
    /// Interior of an edge, at the given parameter level.
    OnEdge {
        edge: usize,
        level: f64,
    },
    AtVertex(usize),
}

/// Classification of a base point, driving the expected fiber topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointClass {
    /// Smooth point of the base: embedded-torus fiber.
    Interior,
    /// Over a ramification vertex: immersed-torus fiber.
    Ram,
    /// Over a degree-1 ivy vertex or unglued end: isotropic lower torus.
    OuterBoundary,
    /// On the boundary of the simplex factor (handled by the gluing).
    BoundaryCorner,
}

pub fn classify_base_point(e: &ExpandedSkeleton, b: &BasePoint) -> Result<PointClass> {
    let cell = e
        .cells
        .get(b.cell)
        .ok_or_else(|| Error::Domain(format!("no cell {}", b.cell)))?;
    let simplex = match cell {
        Cell::Maximal { simplex } => simplex,
        Cell::Submaximal { simplex, .. } => simplex,
    };
    if b.simplex_coords.len() != simplex.face.len() {
        return Err(Error::Domain(
            "coordinate count does not match the cell".into(),
        ));
    }
    if b.simplex_coords.iter().any(|&v| !(-1.0..=0.0).contains(&v)) {
        return Err(Error::Domain(format!(
            "coordinates outside the closed cell: {:?}",
            b.simplex_coords
        )));
    }
    // A 0-dimensional simplex factor has no boundary; otherwise the
    // boundary is where some weight reaches 0 or 1.
    let on_simplex_boundary =
        simplex.face.len() > 1 && b.simplex_coords.iter().any(|&v| v == 0.0 || v == -1.0);
    match cell {
        Cell::Maximal { .. } => {
            if b.ivy_position.is_some() {
                return Err(Error::Domain("maximal cells have no ivy factor".into()));
            }
            Ok(if on_simplex_boundary {
                PointClass::BoundaryCorner
            } else {
                PointClass::Interior
            })
        }
        Cell::Submaximal { ivy, .. } => {
            let pos = b
                .ivy_position
                .ok_or_else(|| Error::Domain("submaximal cells need an ivy position".into()))?;
            match pos {
                IvyPosition::AtVertex(v) => {
                    if v >= ivy.vertex_levels.len() {
                        return Err(Error::Domain(format!("no ivy vertex {v}")));
                    }
                    match ivy.degree(v) {
                        1 => Ok(PointClass::OuterBoundary),
                        d if d >= 3 => Ok(PointClass::Ram),
                        _ => Err(Error::InvalidModel("invalid ivy vertex degree".into())),
                    }
                }
                IvyPosition::OnEdge { edge, level } => {
                    let e = ivy
                        .edges
                        .get(edge)
                        .ok_or_else(|| Error::Domain(format!("no ivy edge {edge}")))?;
                    let mut levels = e.levels;
                    for side in 0..2 {
                        if let IvyEnd::Vertex(v) = e.ends[side] {
                            levels[side] = ivy.vertex_levels[v];
                        }
                    }
                    if !(level > levels[0] && level < levels[1]) {
                        return Err(Error::Domain(format!(
                            "level {level} outside the open edge range {levels:?}"
                        )));
                    }
                    Ok(if on_simplex_boundary {
                        PointClass::BoundaryCorner
                    } else {
                        PointClass::Interior
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_complex::{essential_skeleton, models, Component, SncDegeneration};

    #[test]
    fn rounded_simplex_examples() {
        let cell = RoundedSimplex {
            face: Face::from([1, 2]),
        };
        // vertex w = (1, 0) → (−1, 0); η(1) = 1, η(0) = 0.
        let v = cell.to_cell(&[1.0, 0.0]).unwrap();
        assert_eq!(v, vec![-1.0, 0.0]);
        // barycenter: −η(1/2) = −1/(1 + ln 2).
        let v = cell.to_cell(&[0.5, 0.5]).unwrap();
        let expected = -1.0 / (1.0 + std::f64::consts::LN_2);
        assert!((v[0] - expected).abs() < 1e-15 && (v[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn rounded_simplex_round_trip() {
        let cell = RoundedSimplex {
            face: Face::from([1, 2, 3]),
        };
        // Deterministic interior sample grid standing in for random points.
        let mut count = 0;
        for a in 1..10 {
            for b in 1..(10 - a) {
                let w = [
                    a as f64 / 10.0,
                    b as f64 / 10.0,
                    1.0 - (a + b) as f64 / 10.0,
                ];
                let v = cell.to_cell(&w).unwrap();
                let back = cell.to_face(&v).unwrap();
                for i in 0..3 {
                    assert!((back[i] - w[i]).abs() < 1e-12);
                }
                count += 1;
            }
        }
        assert!(count >= 30);
    }

    #[test]
    fn ivy_validation_rejects_degree_two() {
        let bad = IvyGraph {
            vertex_levels: vec![1.0],
            edges: vec![
                IvyEdge {
                    ends: [IvyEnd::Open, IvyEnd::Vertex(0)],
                    levels: [0.0, 1.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Open],
                    levels: [1.0, f64::INFINITY],
                },
            ],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ivy_validation_rejects_non_monotone() {
        let bad = IvyGraph {
            vertex_levels: vec![2.0, 1.0],
            edges: vec![
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Vertex(1)],
                    levels: [0.0, 0.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Open, IvyEnd::Vertex(0)],
                    levels: [0.0, 0.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Open, IvyEnd::Vertex(0)],
                    levels: [0.0, 0.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(1), IvyEnd::Open],
                    levels: [0.0, f64::INFINITY],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(1), IvyEnd::Open],
                    levels: [0.0, f64::INFINITY],
                },
            ],
        };
        // Edge 0 runs from level 2 down to level 1: not increasing.
        assert!(bad.validate().is_err());
    }

    #[test]
    fn y_shaped_ivy_is_accepted() {
        // Saddle + max + min: three ramification-free boundary data points
        // joined at one degree-3 vertex.
        let ivy = ivy_from_data(
            vec![1.0, 2.0, 3.0],
            vec![
                IvyEdge {
                    ends: [IvyEnd::Open, IvyEnd::Vertex(0)],
                    levels: [0.0, 1.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Vertex(1)],
                    levels: [1.0, 2.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Vertex(2)],
                    levels: [1.0, 3.0],
                },
            ],
        )
        .unwrap();
        assert_eq!(ivy.ram(), vec![0]);
        assert_eq!(ivy.boundary(), vec![1, 2]);
    }

    #[test]
    fn hesse_base_is_a_circle_of_six_cells() {
        let model = models::hesse();
        let sk = essential_skeleton(&model).unwrap();
        let e = build_expanded(&sk, &IvyChoice::default()).unwrap();
        assert_eq!(e.cells.len(), 6);
        assert_eq!(e.gluings.len(), 6);
        assert_eq!(e.euler_characteristic(), 0);
        assert!(e.ram().is_empty());
        assert!(e.outer_boundary().is_empty());
    }

    #[test]
    fn square_base_is_a_circle_of_eight_cells() {
        // A cycle of four lines: same gluing rule, eight cells.
        let model = SncDegeneration::new(
            1,
            vec![
                Component { id: 1, m: 1, nu: 0 },
                Component { id: 2, m: 1, nu: 0 },
                Component { id: 3, m: 1, nu: 0 },
                Component { id: 4, m: 1, nu: 0 },
            ],
            &[&[1, 2], &[2, 3], &[3, 4], &[4, 1]],
        )
        .unwrap();
        let sk = essential_skeleton(&model).unwrap();
        let e = build_expanded(&sk, &IvyChoice::default()).unwrap();
        assert_eq!(e.cells.len(), 8);
        assert_eq!(e.euler_characteristic(), 0);
    }

    #[test]
    fn single_maximal_face_gives_one_cell() {
        let model = models::local_snc(2, &[1, 1, 1], &[0, 0, 0]);
        let mut sk = essential_skeleton(&model).unwrap();
        // Keep only the top face: a base with a single rounded simplex.
        sk.faces.retain(|f| f.len() == 3);
        let e = build_expanded(&sk, &IvyChoice::default()).unwrap();
        assert_eq!(e.cells.len(), 1);
        assert!(e.gluings.is_empty());
    }

    #[test]
    fn classification_examples() {
        let model = models::hesse();
        let sk = essential_skeleton(&model).unwrap();
        let e = build_expanded(&sk, &IvyChoice::default()).unwrap();
        // Interior of the first maximal cell.
        let eta_half = 1.0 / (1.0 + std::f64::consts::LN_2);
        let b = BasePoint {
            cell: 0,
            simplex_coords: vec![-eta_half, -eta_half],
            ivy_position: None,
        };
        assert_eq!(classify_base_point(&e, &b).unwrap(), PointClass::Interior);
        // Interior of a submaximal cell's ivy edge.
        let sub = e
            .cells
            .iter()
            .position(|c| matches!(c, Cell::Submaximal { .. }))
            .unwrap();
        let b = BasePoint {
            cell: sub,
            simplex_coords: vec![-1.0],
            ivy_position: Some(IvyPosition::OnEdge {
                edge: 0,
                level: 1.0,
            }),
        };
        // The submaximal simplex factor is the single vertex v̂ = −1: still
        // an interior point of the glued base.
        assert_eq!(classify_base_point(&e, &b).unwrap(), PointClass::Interior);
    }

    #[test]
    fn ram_and_boundary_classification() {
        // One maximal edge with an explicit Y-shaped ivy on a vertex face.
        let model = SncDegeneration::new(
            1,
            vec![
                Component { id: 1, m: 1, nu: 0 },
                Component { id: 2, m: 1, nu: 0 },
            ],
            &[&[1, 2]],
        )
        .unwrap();
        let sk = essential_skeleton(&model).unwrap();
        let ivy = ivy_from_data(
            vec![1.0, 2.0, 3.0],
            vec![
                IvyEdge {
                    ends: [IvyEnd::Open, IvyEnd::Vertex(0)],
                    levels: [0.0, 1.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Vertex(1)],
                    levels: [1.0, 2.0],
                },
                IvyEdge {
                    ends: [IvyEnd::Vertex(0), IvyEnd::Vertex(2)],
                    levels: [1.0, 3.0],
                },
            ],
        )
        .unwrap();
        let mut choice = IvyChoice::default();
        choice.explicit.insert(Face::from([1]), ivy);
        let e = build_expanded(&sk, &choice).unwrap();
        let sub = e
            .cells
            .iter()
            .position(|c| matches!(c, Cell::Submaximal { simplex, .. } if simplex.face == Face::from([1])))
            .unwrap();
        let ram_point = BasePoint {
            cell: sub,
            simplex_coords: vec![-1.0],
            ivy_position: Some(IvyPosition::AtVertex(0)),
        };
        assert_eq!(
            classify_base_point(&e, &ram_point).unwrap(),
            PointClass::Ram
        );
        let boundary_point = BasePoint {
            cell: sub,
            simplex_coords: vec![-1.0],
            ivy_position: Some(IvyPosition::AtVertex(1)),
        };
        assert_eq!(
            classify_base_point(&e, &boundary_point).unwrap(),
            PointClass::OuterBoundary
        );
    }
}
