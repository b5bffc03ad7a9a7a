//! Hybrid coordinates on the real oriented blowup of a degenerating family.
//!
//! A point near the special fiber carries, besides its complex chart
//! coordinates `z_i = exp(s_i + iθ_i)`, the tropical data
//! `t = −1/log|f|`, `w_i = t/t_i` with `t_i = −1/(m_i s_i)`, and the angles
//! `θ_i`. The tuple `(t, θ, w, θ_i)` stays smooth up to the radius-zero
//! boundary `t = 0` and is the coordinate system every other module works in.
//!
//! Two model families are supported:
//! * `LocalSnc`: a polydisk in C^{n+1} with `f = Π z_i^{m_i}` and a single
//!   global adapted chart;
//! * `Hesse`: the pencil of plane cubics degenerating to the coordinate
//!   triangle, with three vertex charts (unit absorbed into the first
//!   coordinate, so `f = z_a z_b` exactly) and six half-edge charts along
//!   the lines.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::transfer::eta;

pub type C64 = Complex<f64>;

/// Identifier of a coordinate chart of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ChartId {
    /// The single global chart of a `LocalSnc` model.
    LocalSnc,
    /// Vertex chart of the cubic-pencil model at the intersection of lines
    /// `a` and `b` (0-based line indices, `b = (a+1) % 3`).
    HesseVertex { a: u8 },
    /// Half-edge chart along line `line`, anchored at the vertex shared
    /// with line `other`; covers the half of the line closer to that vertex.
    HesseEdge { line: u8, other: u8 },
}

/// One component of the special fiber visible in a chart.
#[derive(Clone, Debug)]
pub struct ChartComponent {
    /// Component id, matching the combinatorial model.
    pub id: u32,
    pub m: u32,
    pub nu: u32,
}

/// Static description of a chart: which components meet it and how far the
/// coordinates extend.
#[derive(Clone, Debug)]
pub struct ChartInfo {
    pub id: ChartId,
    /// Components whose divisors pass through the chart, in coordinate order.
    pub components: Vec<ChartComponent>,
    /// Number of residual complex coordinates (non-divisor directions).
    pub residual_dim: usize,
    /// Radius bound for the divisor coordinates.
    pub radius: f64,
}

impl ChartInfo {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Total number of complex coordinates.
    pub fn dim(&self) -> usize {
        self.components.len() + self.residual_dim
    }

    pub fn multiplicities(&self) -> Vec<f64> {
        self.components.iter().map(|c| f64::from(c.m)).collect()
    }
}

/// A geometric model the coordinate engine can evaluate.
#[derive(Clone, Debug)]
pub enum Model {
    LocalSnc {
        n: usize,
        m: Vec<u32>,
        nu: Vec<u32>,
        radius: f64,
        t_max: f64,
        /// Calibrated positivity bound for the fiberwise Kähler family.
        eps0: f64,
    },
    Hesse {
        radius: f64,
        t_max: f64,
        eps0: f64,
    },
}

/// Default polydisk radius: just inside 1/e so that `log|z_i| < −1`.
pub const DEFAULT_RADIUS: f64 = 0.99 / std::f64::consts::E;
pub const DEFAULT_T_MAX: f64 = 0.3;

impl Model {
    pub fn local_snc(n: usize, m: Vec<u32>, nu: Vec<u32>) -> Result<Self> {
        if m.len() != n + 1 || nu.len() != n + 1 {
            return Err(Error::InvalidModel(format!(
                "local snc model of dimension {n} needs {} multiplicities and discrepancies",
                n + 1
            )));
        }
        if m.iter().any(|&x| x == 0) {
            return Err(Error::InvalidModel("zero multiplicity".into()));
        }
        Ok(Model::LocalSnc {
            n,
            m,
            nu,
            radius: DEFAULT_RADIUS,
            t_max: DEFAULT_T_MAX,
            eps0: 0.5, // overwritten by calibration; see kahler::calibrate_eps0
        })
    }

    pub fn hesse() -> Self {
        Model::Hesse {
            radius: DEFAULT_RADIUS,
            t_max: DEFAULT_T_MAX,
            eps0: 0.5,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Model::LocalSnc { n, .. } => *n,
            Model::Hesse { .. } => 1,
        }
    }

    pub fn t_max(&self) -> f64 {
        match self {
            Model::LocalSnc { t_max, .. } | Model::Hesse { t_max, .. } => *t_max,
        }
    }

    pub fn eps0(&self) -> f64 {
        match self {
            Model::LocalSnc { eps0, .. } | Model::Hesse { eps0, .. } => *eps0,
        }
    }

    pub fn set_eps0(&mut self, value: f64) {
        match self {
            Model::LocalSnc { eps0, .. } | Model::Hesse { eps0, .. } => *eps0 = value,
        }
    }

    /// The charts whose component set is maximal (`k = n+1`).
    pub fn maximal_charts(&self) -> Vec<ChartId> {
        match self {
            Model::LocalSnc { .. } => vec![ChartId::LocalSnc],
            Model::Hesse { .. } => (0..3).map(|a| ChartId::HesseVertex { a }).collect(),
        }
    }

    pub fn chart(&self, id: ChartId) -> Result<ChartInfo> {
        match (self, id) {
            (
                Model::LocalSnc {
                    n, m, nu, radius, ..
                },
                ChartId::LocalSnc,
            ) => Ok(ChartInfo {
                id,
                components: (0..=*n)
                    .map(|i| ChartComponent {
                        id: i as u32 + 1,
                        m: m[i],
                        nu: nu[i],
                    })
                    .collect(),
                residual_dim: 0,
                radius: *radius,
            }),
            (Model::Hesse { radius, .. }, ChartId::HesseVertex { a }) if a < 3 => {
                let b = (a + 1) % 3;
                Ok(ChartInfo {
                    id,
                    components: vec![
                        ChartComponent {
                            id: u32::from(a) + 1,
                            m: 1,
                            nu: 1,
                        },
                        ChartComponent {
                            id: u32::from(b) + 1,
                            m: 1,
                            nu: 1,
                        },
                    ],
                    residual_dim: 0,
                    radius: *radius,
                })
            }
            (Model::Hesse { radius, .. }, ChartId::HesseEdge { line, other })
                if line < 3 && other < 3 && line != other =>
            {
                Ok(ChartInfo {
                    id,
                    components: vec![ChartComponent {
                        id: u32::from(line) + 1,
                        m: 1,
                        nu: 1,
                    }],
                    residual_dim: 1,
                    radius: *radius,
                })
            }
            _ => Err(Error::Domain(format!(
                "chart {id:?} does not belong to this model"
            ))),
        }
    }
}

/// A point of the blown-up family in a chart.
///
/// At `t > 0` the divisor coordinates are recovered as
/// `s_i = −w_i/(m_i t)`, `z_i = exp(s_i + iθ_i)`. At `t = 0` the point lies
/// on the radius-zero boundary; `w` are the tropical coordinates there.
/// Angles are stored as plain reals (branch-tracked, not reduced mod 2π).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HybridPoint {
    pub chart: ChartId,
    /// Rescaled radius `t = −1/log|f| ≥ 0`.
    pub t: f64,
    /// Total angle `θ = Σ m_i θ_i` (branch-tracked real).
    pub theta: f64,
    /// Tropical coordinates, one per chart component; `Σ w_i = 1` in a
    /// maximal chart.
    pub w: Vec<f64>,
    /// Angles `θ_i`, one per chart component.
    pub angles: Vec<f64>,
    /// Residual complex coordinates as `(log-radius, angle)` pairs.
    pub residual: Vec<[f64; 2]>,
}

impl HybridPoint {
    /// Point in a maximal chart from `(t, w, θ_i)`; `θ` is derived.
    pub fn in_maximal_chart(
        model: &Model,
        chart: ChartId,
        t: f64,
        w: &[f64],
        angles: &[f64],
    ) -> Result<Self> {
        let info = model.chart(chart)?;
        if info.k() != info.dim() {
            return Err(Error::Domain(format!("{chart:?} is not a maximal chart")));
        }
        if w.len() != info.k() || angles.len() != info.k() {
            return Err(Error::Domain("coordinate count mismatch".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!(
                "tropical coordinates must lie on the standard simplex, got {w:?}"
            )));
        }
        if t < 0.0 || t > model.t_max() {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                model.t_max()
            )));
        }
        let theta = info
            .components
            .iter()
            .zip(angles)
            .map(|(c, th)| f64::from(c.m) * th)
            .sum();
        Ok(HybridPoint {
            chart,
            t,
            theta,
            w: w.to_vec(),
            angles: angles.to_vec(),
            residual: Vec::new(),
        })
    }

    /// Log-radii `s_i = −w_i/(m_i t)` of the divisor coordinates; requires `t > 0`.
    pub fn s_coords(&self, info: &ChartInfo) -> Result<Vec<f64>> {
        if self.t <= 0.0 {
            return Err(Error::Domain(
                "s-coordinates are undefined at radius zero; use the radius-zero branch".into(),
            ));
        }
        Ok(self
            .w
            .iter()
            .zip(&info.components)
            .map(|(w, c)| -w / (f64::from(c.m) * self.t))
            .collect())
    }

    /// Complex divisor coordinates `z_i` (requires `t > 0`).
    pub fn z_coords(&self, info: &ChartInfo) -> Result<Vec<C64>> {
        let s = self.s_coords(info)?;
        Ok(s.iter()
            .zip(&self.angles)
            .map(|(s, th)| (C64::new(*s, *th)).exp())
            .collect())
    }
}

/// The record of basic coordinate functions at a point with `t > 0`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BasicFunctionRecord {
    pub t: f64,
    /// g = η(t).
    pub g: f64,
    pub theta: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    /// t_i = −1/(m_i s_i).
    pub t_i: Vec<f64>,
    /// w_i = t/t_i.
    pub w: Vec<f64>,
    /// u_i = η(w_i).
    pub u: Vec<f64>,
    /// v_i = t_i − u_i.
    pub v: Vec<f64>,
    /// σ_i = t_i² + t_i u_i².
    pub sigma: Vec<f64>,
}

/// Evaluates the basic functions at a point with `t > 0`.
pub fn basic_functions(model: &Model, p: &HybridPoint) -> Result<BasicFunctionRecord> {
    let info = model.chart(p.chart)?;
    if p.t <= 0.0 {
        return Err(Error::Domain(
            "basic functions need t > 0; at radius zero only (w, θ) survive".into(),
        ));
    }
    let s = p.s_coords(&info)?;
    let r: Vec<f64> = s.iter().map(|s| s.exp()).collect();
    let t_i: Vec<f64> = s
        .iter()
        .zip(&info.components)
        .map(|(s, c)| -1.0 / (f64::from(c.m) * s))
        .collect();
    let w: Vec<f64> = t_i.iter().map(|ti| p.t / ti).collect();
    let u: Vec<f64> = w.iter().map(|w| eta(*w)).collect();
    let v: Vec<f64> = t_i.iter().zip(&u).map(|(ti, u)| ti - u).collect();
    let sigma: Vec<f64> = t_i
        .iter()
        .zip(&u)
        .map(|(ti, u)| ti * ti + ti * u * u)
        .collect();
    Ok(BasicFunctionRecord {
        t: p.t,
        g: eta(p.t.min(1.0)),
        theta: p.theta,
        r,
        s,
        t_i,
        w,
        u,
        v,
        sigma,
    })
}

/// Moves a radius-zero point of a maximal chart to radius `t > 0`, keeping
/// `(θ, w, θ_i)` fixed. Fails if a recovered coordinate escapes the chart.
pub fn from_radius_zero(model: &Model, p: &HybridPoint, t: f64) -> Result<HybridPoint> {
    let info = model.chart(p.chart)?;
    if p.t != 0.0 {
        return Err(Error::Domain("source point is not at radius zero".into()));
    }
    if t <= 0.0 || t > model.t_max() {
        return Err(Error::Domain(format!(
            "target t = {t} outside (0, {}]",
            model.t_max()
        )));
    }
    let q = HybridPoint { t, ..p.clone() };
    // Chart-domain check: r_i = exp(−w_i/(m_i t)) must stay below the radius.
    for ((w, c), _) in q.w.iter().zip(&info.components).zip(0..) {
        let r = (-w / (f64::from(c.m) * t)).exp();
        if r >= info.radius {
            return Err(Error::Domain(format!(
                "component {} escapes the chart: r = {r:.6} ≥ {:.6} (w = {w}, t = {t})",
                c.id, info.radius
            )));
        }
    }
    Ok(q)
}

/// Builds a point of a maximal chart from complex coordinates given as
/// `(log-radius, angle)` pairs; requires all log-radii negative.
pub fn from_log_z(model: &Model, chart: ChartId, log_z: &[[f64; 2]]) -> Result<HybridPoint> {
    let info = model.chart(chart)?;
    if log_z.len() != info.k() {
        return Err(Error::Domain("coordinate count mismatch".into()));
    }
    if log_z.iter().any(|sz| sz[0] >= 0.0) {
        return Err(Error::Domain(
            "log-radii must be negative (|z_i| < 1)".into(),
        ));
    }
    // L = log|f| = Σ m_i s_i, t = −1/L, w_i = m_i s_i / L.
    let l: f64 = log_z
        .iter()
        .zip(&info.components)
        .map(|(sz, c)| f64::from(c.m) * sz[0])
        .sum();
    let t = -1.0 / l;
    let w: Vec<f64> = log_z
        .iter()
        .zip(&info.components)
        .map(|(sz, c)| f64::from(c.m) * sz[0] / l)
        .collect();
    let angles: Vec<f64> = log_z.iter().map(|sz| sz[1]).collect();
    let theta = angles
        .iter()
        .zip(&info.components)
        .map(|(th, c)| f64::from(c.m) * th)
        .sum();
    Ok(HybridPoint {
        chart,
        t,
        theta,
        w,
        angles,
        residual: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Cubic-pencil chart algebra.
//
// Vertex chart at the intersection of lines a and b, in the affine plane
// where the third coordinate is 1: with affine coordinates (y_a, y_b) and
// u = y_a³ + y_b³ + 1, the adapted coordinates are z_a = y_a/u, z_b = y_b,
// so that f = z_a z_b exactly. The half-edge chart along line b anchored at
// this vertex has coordinates (ζ_res, ζ_b) = (y_a, f).
// ---------------------------------------------------------------------------

/// Solves `y_a = z_a·(y_a³ + y_b³ + 1)` for `y_a` by Newton iteration.
pub fn hesse_y_from_z(z_a: C64, z_b: C64) -> Result<C64> {
    let c = z_b.powu(3) + 1.0;
    let mut y = z_a * c; // first-order guess: u ≈ y_b³ + 1
    for _ in 0..60 {
        let f = y - z_a * (y.powu(3) + c);
        let df = C64::new(1.0, 0.0) - z_a * 3.0 * y.powu(2);
        let step = f / df;
        y -= step;
        if step.norm() < 1e-16 * (1.0 + y.norm()) {
            return Ok(y);
        }
    }
    Err(Error::Numerical(
        "vertex-chart coordinate inversion did not converge".into(),
    ))
}

/// Solves `y_b = ζ_b·(y_a³ + y_b³ + 1)/y_a` for `y_b` (the fiber equation of
/// the half-edge chart) by Newton iteration.
pub fn hesse_yb_on_edge(zeta_res: C64, zeta_b: C64) -> Result<C64> {
    let ya = zeta_res;
    if ya.norm() < 1e-12 {
        return Err(Error::Domain("edge chart degenerates at the vertex".into()));
    }
    let c = ya.powu(3) + 1.0;
    let mut yb = zeta_b * c / ya;
    for _ in 0..60 {
        let f = yb - zeta_b * (yb.powu(3) + c) / ya;
        let df = C64::new(1.0, 0.0) - zeta_b * 3.0 * yb.powu(2) / ya;
        let step = f / df;
        yb -= step;
        if step.norm() < 1e-16 * (1.0 + yb.norm()) {
            return Ok(yb);
        }
    }
    Err(Error::Numerical(
        "edge-chart fiber equation did not converge".into(),
    ))
}

/// Chooses the branch of `angle` closest to `near`.
pub fn align_angle(angle: f64, near: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    angle + ((near - angle) / two_pi).round() * two_pi
}

/// Transition from a cubic-pencil vertex chart to the half-edge chart along
/// the second chart component (line `b`), anchored at the same vertex.
///
/// The overlap requirement `w_a < 1/(n+2)` keeps the point away from the
/// divisor that the target chart forgets. `|f|` is preserved exactly, since
/// the edge chart's divisor coordinate is `f` itself.
pub fn hesse_vertex_to_edge(model: &Model, p: &HybridPoint) -> Result<HybridPoint> {
    let info = model.chart(p.chart)?;
    let ChartId::HesseVertex { a } = p.chart else {
        return Err(Error::Domain("source must be a vertex chart".into()));
    };
    let n = model.n();
    if p.t <= 0.0 {
        return Err(Error::Domain(
            "use the radius-zero gluing (the ivy parameter) instead of a chart transition".into(),
        ));
    }
    if p.w[0] >= 1.0 / (n as f64 + 2.0) {
        return Err(Error::Domain(format!(
            "point outside the overlap region: w_a = {} ≥ 1/(n+2)",
            p.w[0]
        )));
    }
    let z = p.z_coords(&info)?;
    let ya = hesse_y_from_z(z[0], z[1])?;
    let b = (a + 1) % 3;
    // Branch-track the residual angle: arg(y_a) is close to θ_a because the
    // absorbed unit is close to 1.
    let res_angle = align_angle(ya.arg(), p.angles[0]);
    Ok(HybridPoint {
        chart: ChartId::HesseEdge { line: b, other: a },
        t: p.t,
        theta: p.theta,
        w: vec![1.0],
        angles: vec![p.theta],
        residual: vec![[ya.norm().ln(), res_angle]],
    })
}

/// Inverse transition: from a half-edge chart back to the vertex chart it is
/// anchored at.
pub fn hesse_edge_to_vertex(model: &Model, p: &HybridPoint) -> Result<HybridPoint> {
    let ChartId::HesseEdge { line, other } = p.chart else {
        return Err(Error::Domain("source must be a half-edge chart".into()));
    };
    if p.t <= 0.0 {
        return Err(Error::Domain("transition needs t > 0".into()));
    }
    let ya = C64::from_polar(p.residual[0][0].exp(), p.residual[0][1]);
    // θ of the f-coordinate: branch-tracked total angle.
    let f = C64::from_polar((-1.0 / p.t).exp(), p.angles[0]);
    let yb = hesse_yb_on_edge(ya, f)?;
    let u = ya.powu(3) + yb.powu(3) + 1.0;
    let z_a = ya / u;
    let z_b = yb;
    if z_a.norm() >= 1.0 || z_b.norm() >= 1.0 {
        return Err(Error::Domain("point outside the vertex chart".into()));
    }
    let a = other;
    debug_assert_eq!((a + 1) % 3, line);
    let th_a = align_angle(z_a.arg(), p.residual[0][1]);
    let th_b = p.angles[0] - th_a; // θ_b = θ − θ_a, exact branch tracking
    let log_z = [[z_a.norm().ln(), th_a], [z_b.norm().ln(), th_b]];
    let q = from_log_z(model, ChartId::HesseVertex { a }, &log_z)?;
    Ok(q)
}

/// The ivy/glue parameter of a point near a submaximal stratum:
/// `p = −1/(m₁ log|z|)` where `z` is the forgotten divisor's stratum
/// coordinate. In the half-edge chart the stratum coordinate is the
/// residual one.
pub fn glue_parameter(p: &HybridPoint) -> Result<f64> {
    match p.chart {
        ChartId::HesseEdge { .. } => {
            let s = p.residual[0][0];
            if s >= 0.0 {
                return Err(Error::Domain("glue parameter needs |z| < 1".into()));
            }
            Ok(-1.0 / s)
        }
        _ => Err(Error::Domain(
            "glue parameter is defined in half-edge charts".into(),
        )),
    }
}
