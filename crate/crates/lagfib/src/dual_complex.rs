//! Combinatorics of the special fiber: dual complex, essential skeleton,
//! face classification, and the intrinsic metric on the skeleton.
//!
//! A degeneration is described purely combinatorially: a list of divisor
//! components with multiplicities `m_i` and discrepancy coefficients `ν_i`,
//! plus the lattice of nonempty intersection strata. The essential skeleton
//! is spanned by the components minimizing `ν_i/m_i`; its faces are embedded
//! in the standard simplex of R^N and carry the induced path metric, which we
//! approximate by shortest paths on a refinement mesh.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::Ratio;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};

use crate::error::{Error, Result};

/// An index subset `I` with nonempty stratum `X_I`.
pub type Face = BTreeSet<u32>;

/// One irreducible component of the special fiber.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Component {
    pub id: u32,
    /// Multiplicity of the component in the special fiber (positive).
    pub m: u32,
    /// Discrepancy coefficient (non-negative).
    pub nu: u32,
}

/// Combinatorial model of an snc degeneration of relative dimension `n`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SncDegeneration {
    /// Relative dimension of the family.
    pub n: usize,
    pub components: Vec<Component>,
    /// Nonempty strata, closed under taking nonempty subsets.
    pub strata: BTreeSet<Face>,
}

impl SncDegeneration {
    /// Builds a model from the maximal strata, closing the lattice downward,
    /// and validates it.
    pub fn new(n: usize, components: Vec<Component>, strata: &[&[u32]]) -> Result<Self> {
        let mut closed: BTreeSet<Face> = BTreeSet::new();
        for ids in strata {
            let face: Face = ids.iter().copied().collect();
            for sub in nonempty_subsets(&face) {
                closed.insert(sub);
            }
        }
        // Every component spans at least its own vertex stratum.
        for c in &components {
            closed.insert([c.id].into_iter().collect());
        }
        let model = SncDegeneration {
            n,
            components,
            strata: closed,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidModel("empty component list".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.components {
            if c.m == 0 {
                return Err(Error::InvalidModel(format!(
                    "component {} has multiplicity 0",
                    c.id
                )));
            }
            if !seen.insert(c.id) {
                return Err(Error::InvalidModel(format!(
                    "duplicate component id {}",
                    c.id
                )));
            }
        }
        for face in &self.strata {
            if face.is_empty() {
                return Err(Error::InvalidModel("empty stratum".into()));
            }
            if face.len() > self.n + 1 {
                return Err(Error::InvalidModel(format!(
                    "stratum {:?} has {} components but the relative dimension is {}",
                    face,
                    face.len(),
                    self.n
                )));
            }
            for id in face {
                if !seen.contains(id) {
                    return Err(Error::InvalidModel(format!(
                        "stratum {face:?} references unknown component {id}"
                    )));
                }
            }
            for sub in nonempty_subsets(face) {
                if !self.strata.contains(&sub) {
                    return Err(Error::InvalidModel(format!(
                        "strata not closed under subsets: {face:?} present, {sub:?} missing"
                    )));
                }
            }
        }
        for c in &self.components {
            let vertex: Face = [c.id].into_iter().collect();
            if !self.strata.contains(&vertex) {
                return Err(Error::InvalidModel(format!(
                    "component {} appears in no stratum",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// Looks up a component by id; panics if absent (ids are validated).
    pub fn component(&self, id: u32) -> &Component {
        self.components.iter().find(|c| c.id == id).unwrap()
    }
}

fn nonempty_subsets(face: &Face) -> Vec<Face> {
    let ids: Vec<u32> = face.iter().copied().collect();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << ids.len()) {
        out.push(
            ids.iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, id)| *id)
                .collect(),
        );
    }
    out
}

/// Returns the essential set `S = {i : ν_i/m_i = min_j ν_j/m_j}`.
///
/// Comparisons use exact rational arithmetic, so ties are exact. The result
/// is independent of the simultaneous substitution `ν_i → ν_i + k·m_i`.
pub fn essential_set(model: &SncDegeneration) -> Result<BTreeSet<u32>> {
    model.validate()?;
    let ratio = |c: &Component| Ratio::new(i64::from(c.nu), i64::from(c.m));
    let min = model.components.iter().map(&ratio).min().unwrap();
    Ok(model
        .components
        .iter()
        .filter(|c| ratio(c) == min)
        .map(|c| c.id)
        .collect())
}

/// The essential skeleton: faces of the dual complex supported on the
/// essential set, embedded in the standard simplex of R^N.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub parent: SncDegeneration,
    pub essential: BTreeSet<u32>,
    /// Faces, closed under nonempty subsets.
    pub faces: BTreeSet<Face>,
    /// Sorted essential ids; position = embedding coordinate index.
    coordinate_ids: Vec<u32>,
}

/// A point on the skeleton: a face together with barycentric weights in R^N
/// (indexed like [`Skeleton::coordinate_ids`], vanishing outside the face).
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPoint {
    pub face: Face,
    pub coords: Vec<f64>,
}

impl Skeleton {
    /// Dimension of the top face.
    pub fn dim(&self) -> usize {
        self.faces.iter().map(|f| f.len() - 1).max().unwrap_or(0)
    }

    /// The sorted component ids indexing the embedding coordinates.
    pub fn coordinate_ids(&self) -> &[u32] {
        &self.coordinate_ids
    }

    /// Index of component `id` in the embedding coordinates.
    pub fn coordinate_index(&self, id: u32) -> Option<usize> {
        self.coordinate_ids.binary_search(&id).ok()
    }

    /// Builds the point with weight 1/|I| on each vertex of `face`.
    pub fn barycenter(&self, face: &Face) -> Result<SkeletonPoint> {
        self.point(face, &vec![1.0 / face.len() as f64; face.len()])
    }

    /// Builds a point on `face` from weights listed in sorted id order.
    pub fn point(&self, face: &Face, weights: &[f64]) -> Result<SkeletonPoint> {
        if !self.faces.contains(face) {
            return Err(Error::Domain(format!(
                "{face:?} is not a face of the skeleton"
            )));
        }
        if weights.len() != face.len() {
            return Err(Error::Domain(
                "weight count does not match face size".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < -1e-12) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("weights must be a convex combination".into()));
        }
        let mut coords = vec![0.0; self.coordinate_ids.len()];
        for (id, w) in face.iter().zip(weights) {
            coords[self.coordinate_index(*id).unwrap()] = *w;
        }
        Ok(SkeletonPoint {
            face: face.clone(),
            coords,
        })
    }
}

/// Builds the skeleton spanned by `essential`: its faces are exactly the
/// strata contained in the essential set.
pub fn build_skeleton(model: &SncDegeneration, essential: &BTreeSet<u32>) -> Result<Skeleton> {
    model.validate()?;
    for id in essential {
        if !model.components.iter().any(|c| c.id == *id) {
            return Err(Error::InvalidModel(format!(
                "essential id {id} is not a component"
            )));
        }
    }
    let faces: BTreeSet<Face> = model
        .strata
        .iter()
        .filter(|f| f.iter().all(|id| essential.contains(id)))
        .cloned()
        .collect();
    Ok(Skeleton {
        parent: model.clone(),
        essential: essential.clone(),
        faces,
        coordinate_ids: essential.iter().copied().collect(),
    })
}

/// Builds the skeleton spanned by the essential set of the model.
pub fn essential_skeleton(model: &SncDegeneration) -> Result<Skeleton> {
    let essential = essential_set(model)?;
    build_skeleton(model, &essential)
}

/// Classification of a face by cardinality relative to `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceClass {
    /// `|I| = n+1`: the stratum is a finite set of points.
    Maximal,
    /// `|I| = n`: the stratum is a curve.
    Submaximal,
    Lower,
}

/// Tags every face of the skeleton by cardinality.
pub fn classify_faces(sk: &Skeleton) -> BTreeMap<Face, FaceClass> {
    let n = sk.parent.n;
    sk.faces
        .iter()
        .map(|f| {
            let class = if f.len() == n + 1 {
                FaceClass::Maximal
            } else if f.len() == n {
                FaceClass::Submaximal
            } else {
                FaceClass::Lower
            };
            (f.clone(), class)
        })
        .collect()
}

/// Result of the closed-pseudomanifold check.
#[derive(Clone, Debug)]
pub struct PseudomanifoldReport {
    pub verdict: bool,
    /// Submaximal faces not contained in exactly two maximal faces.
    pub violations: Vec<Face>,
    /// False when the skeleton has no face of dimension `n`.
    pub dimension_maximal: bool,
    pub connected: bool,
}

/// Checks that every submaximal face lies in exactly two maximal faces and
/// that the maximal faces are connected through submaximal ones.
pub fn pseudomanifold_check(sk: &Skeleton) -> PseudomanifoldReport {
    let classes = classify_faces(sk);
    let maximal: Vec<&Face> = classes
        .iter()
        .filter(|(_, c)| **c == FaceClass::Maximal)
        .map(|(f, _)| f)
        .collect();
    let submaximal: Vec<&Face> = classes
        .iter()
        .filter(|(_, c)| **c == FaceClass::Submaximal)
        .map(|(f, _)| f)
        .collect();
    let dimension_maximal = !maximal.is_empty();

    let mut violations = Vec::new();
    for sub in &submaximal {
        let count = maximal.iter().filter(|max| sub.is_subset(max)).count();
        if count != 2 {
            violations.push((*sub).clone());
        }
    }

    // Connectivity of maximal faces through shared submaximal faces.
    let connected = if maximal.len() <= 1 {
        dimension_maximal
    } else {
        let mut reached = vec![false; maximal.len()];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..maximal.len() {
                if !reached[j]
                    && submaximal
                        .iter()
                        .any(|s| s.is_subset(maximal[i]) && s.is_subset(maximal[j]))
                {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        reached.iter().all(|r| *r)
    };

    PseudomanifoldReport {
        verdict: dimension_maximal && violations.is_empty() && connected,
        violations,
        dimension_maximal,
        connected,
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All integer compositions of `total` into `parts` non-negative parts.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Intrinsic path distance on the skeleton, approximated by shortest paths
/// on a mesh graph refining each face at `mesh_resolution`.
///
/// Each face is convex, so within a face every pair of mesh nodes is joined
/// by a straight edge of exact euclidean length; the only approximation is
/// that paths cross face boundaries at mesh nodes. Two points on a common
/// face are therefore at exact euclidean distance.
pub fn skeleton_distance(
    sk: &Skeleton,
    p: &SkeletonPoint,
    q: &SkeletonPoint,
    mesh_resolution: u32,
) -> Result<f64> {
    for pt in [p, q] {
        if !sk.faces.contains(&pt.face) {
            return Err(Error::Domain(format!(
                "point lies off the complex: {:?}",
                pt.face
            )));
        }
        if pt.coords.len() != sk.coordinate_ids.len() {
            return Err(Error::Domain("coordinate dimension mismatch".into()));
        }
    }
    if mesh_resolution == 0 {
        return Err(Error::Domain("mesh_resolution must be positive".into()));
    }
    // Fast path: a shared face is convex.
    if sk
        .faces
        .contains(&p.face.union(&q.face).cloned().collect::<Face>())
    {
        return Ok(euclid(&p.coords, &q.coords));
    }

    // Mesh nodes keyed by rational barycentric coordinates so that nodes on
    // shared boundary faces are identified across faces.
    let mut graph: UnGraph<(), f64> = UnGraph::new_undirected();
    let mut node_of: HashMap<Vec<(u32, Ratio<u32>)>, NodeIndex> = HashMap::new();
    let mut position: HashMap<NodeIndex, Vec<f64>> = HashMap::new();
    let mut face_nodes: HashMap<&Face, Vec<NodeIndex>> = HashMap::new();

    for face in &sk.faces {
        let ids: Vec<u32> = face.iter().copied().collect();
        let mut nodes = Vec::new();
        for comp in compositions(mesh_resolution, ids.len()) {
            let key: Vec<(u32, Ratio<u32>)> = ids
                .iter()
                .zip(&comp)
                .filter(|(_, c)| **c > 0)
                .map(|(id, c)| (*id, Ratio::new(*c, mesh_resolution)))
                .collect();
            let node = *node_of.entry(key.clone()).or_insert_with(|| {
                let n = graph.add_node(());
                let mut pos = vec![0.0; sk.coordinate_ids.len()];
                for (id, r) in &key {
                    pos[sk.coordinate_index(*id).unwrap()] =
                        f64::from(*r.numer()) / f64::from(*r.denom());
                }
                position.insert(n, pos);
                n
            });
            nodes.push(node);
        }
        nodes.sort();
        nodes.dedup();
        face_nodes.insert(face, nodes);
    }

    // Complete graph within each face: faces are convex, segments are exact.
    for nodes in face_nodes.values() {
        for (a, b) in pairs(nodes) {
            graph.update_edge(a, b, euclid(&position[&a], &position[&b]));
        }
    }

    // Attach the query points to every mesh node of their containing faces.
    let mut attach = |pt: &SkeletonPoint| {
        let node = graph.add_node(());
        position.insert(node, pt.coords.clone());
        for (face, nodes) in &face_nodes {
            if pt.face.is_subset(face) {
                for other in nodes {
                    graph.update_edge(node, *other, euclid(&pt.coords, &position[other]));
                }
            }
        }
        node
    };
    let source = attach(p);
    let target = attach(q);

    let dist = dijkstra(&graph, source, Some(target), |e| *e.weight());
    dist.get(&target)
        .copied()
        .ok_or_else(|| Error::Domain("points lie on disconnected parts of the complex".into()))
}

fn pairs(nodes: &[NodeIndex]) -> Vec<(NodeIndex, NodeIndex)> {
    let mut out = Vec::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            out.push((*a, *b));
        }
    }
    out
}

/// Built-in combinatorial models from the cubic-pencil family of examples.
pub mod models {
    use super::*;

    /// Pencil of plane cubics degenerating to a triangle of lines:
    /// three components, `m = (1,1,1)`, `ν = (1,1,1)`, triangle strata.
    pub fn hesse() -> SncDegeneration {
        SncDegeneration::new(
            1,
            vec![
                Component { id: 1, m: 1, nu: 1 },
                Component { id: 2, m: 1, nu: 1 },
                Component { id: 3, m: 1, nu: 1 },
            ],
            &[&[1, 2], &[2, 3], &[1, 3]],
        )
        .expect("built-in model is valid")
    }

    /// The same pencil blown up at a smooth point of the triangle: the
    /// exceptional component has `m = 1`, `ν = 2` and is not essential.
    pub fn hesse_blowup_smooth_point() -> SncDegeneration {
        SncDegeneration::new(
            1,
            vec![
                Component { id: 1, m: 1, nu: 1 },
                Component { id: 2, m: 1, nu: 1 },
                Component { id: 3, m: 1, nu: 1 },
                Component { id: 4, m: 1, nu: 2 },
            ],
            &[&[1, 2], &[2, 3], &[1, 3], &[1, 4]],
        )
        .expect("built-in model is valid")
    }

    /// The pencil blown up at a node of the triangle: the exceptional
    /// component has `m = 2`, `ν = 2`, is essential, and subdivides one
    /// edge, so the skeleton becomes a square.
    pub fn hesse_blowup_node() -> SncDegeneration {
        SncDegeneration::new(
            1,
            vec![
                Component { id: 1, m: 1, nu: 1 },
                Component { id: 2, m: 1, nu: 1 },
                Component { id: 3, m: 1, nu: 1 },
                Component { id: 4, m: 2, nu: 2 },
            ],
            // Blowing up the node X_{1,2} replaces that edge by two edges
            // through the exceptional vertex.
            &[&[1, 4], &[4, 2], &[2, 3], &[1, 3]],
        )
        .expect("built-in model is valid")
    }

    /// Local snc model: polydisk in C^{n+1} with `f = Π z_i^{m_i}`.
    pub fn local_snc(n: usize, m: &[u32], nu: &[u32]) -> SncDegeneration {
        assert_eq!(m.len(), n + 1);
        assert_eq!(nu.len(), n + 1);
        let components = m
            .iter()
            .zip(nu)
            .enumerate()
            .map(|(k, (m, nu))| Component {
                id: k as u32 + 1,
                m: *m,
                nu: *nu,
            })
            .collect();
        let top: Vec<u32> = (1..=n as u32 + 1).collect();
        SncDegeneration::new(n, components, &[&top]).expect("built-in model is valid")
    }
}
