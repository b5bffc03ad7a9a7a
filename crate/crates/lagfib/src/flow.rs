//! The torus fibration on the nearby fibers: structured torus fibers,
//! admissible paths in the parameter space, symplectic lifts, parallel
//! transport of fibers, and the map to the expanded-skeleton base.
//!
//! Fibers are transported by integrating the symplectic lift of the radial
//! direction: the unique vector field projecting to ∂/∂t whose contraction
//! with ω_q annihilates all fiber tangents. Integration runs in the rescaled
//! radius t itself, so |f| is matched exactly at every step and the flow can
//! start on the radius-zero boundary, where the lift has a closed form.

use nalgebra::{DMatrix, DVector};

use crate::base::{BasePoint, Cell, ExpandedSkeleton, IvyEnd, IvyGraph, IvyPosition};
use crate::dual_complex::Face;
use crate::error::{Error, Result};
use crate::hybrid::{basic_functions, glue_parameter, ChartId, ChartInfo, HybridPoint, Model};
use crate::kahler::{fiber_basis, omega_q, BasisKind, FormParams};
use crate::transfer::{eta, zeta};

// ---------------------------------------------------------------------------
// Admissible paths
// ---------------------------------------------------------------------------

/// The schedule of the interpolation parameter q along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QSchedule {
    /// q ≡ c (fixed-q transport).
    Constant(f64),
    /// q(h) = h.
    Proportional,
    /// q(h) = h².
    Square,
}

impl QSchedule {
    pub fn value(&self, h: f64) -> f64 {
        let raw = match self {
            QSchedule::Constant(c) => *c,
            QSchedule::Proportional => h,
            QSchedule::Square => h * h,
        };
        raw.clamp(0.0, 1.0)
    }
}

/// A path h ↦ (t, θ, q) = (h, θ₀, q(h)) in the parameter space of the
/// family, with the radius coordinate equal to the path parameter.
#[derive(Clone, Debug)]
pub struct AdmissiblePath {
    /// The (constant) total-angle level of the path.
    pub theta: f64,
    pub q: QSchedule,
}

impl AdmissiblePath {
    pub fn new(theta: f64, q: QSchedule) -> Self {
        AdmissiblePath { theta, q }
    }

    /// Tame paths have a C² schedule with q′(0) = 0; the square schedule and
    /// constants qualify, the proportional one does not.
    pub fn is_tame(&self) -> bool {
        matches!(self.q, QSchedule::Constant(_) | QSchedule::Square)
    }

    /// Parses a textual path description such as `"t=h,q=h^2"` or `"q=1"`.
    /// The radius clause, when present, must be `t=h`.
    pub fn parse(text: &str, theta: f64) -> Result<Self> {
        let mut q = None;
        for token in text.split(',') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::Domain(format!(
                    "path clause `{token}` is not of the form key=value"
                ))
            })?;
            match (key.trim(), value.trim()) {
                ("t", "h") => {}
                ("t", other) => {
                    return Err(Error::Domain(format!(
                        "unsupported radius clause t={other}; paths are parametrized by t=h"
                    )))
                }
                ("q", "h") => q = Some(QSchedule::Proportional),
                ("q", "h^2") | ("q", "h*h") => q = Some(QSchedule::Square),
                ("q", other) => {
                    let c: f64 = other
                        .parse()
                        .map_err(|_| Error::Domain(format!("cannot parse q clause `{other}`")))?;
                    if !(0.0..=1.0).contains(&c) {
                        return Err(Error::Domain(format!("constant q = {c} outside [0,1]")));
                    }
                    q = Some(QSchedule::Constant(c));
                }
                (other, _) => {
                    return Err(Error::Domain(format!("unknown path clause key `{other}`")))
                }
            }
        }
        let q = q.ok_or_else(|| Error::Domain("path needs a q clause".into()))?;
        Ok(AdmissiblePath::new(theta, q))
    }
}

// ---------------------------------------------------------------------------
// Symplectic lifts
// ---------------------------------------------------------------------------

/// The base direction a lift projects to: a radial speed dt and a
/// total-angle speed dθ.
#[derive(Clone, Copy, Debug)]
pub struct LiftDirection {
    pub dt: f64,
    pub dtheta: f64,
}

/// A solved symplectic lift at a point.
#[derive(Clone, Debug)]
pub struct Lift {
    pub basis: BasisKind,
    /// The lift in the ambient tangent basis.
    pub vector: DVector<f64>,
    /// Its fiber-correction coefficients on the fiber basis (w-type vectors
    /// first, θ-type vectors second in maximal charts).
    pub fiber_coeffs: DVector<f64>,
}

/// The lift of a base direction through ω_q: the unique vector v with
/// df(v) equal to the requested direction and ω_q(v, u) = 0 for every fiber
/// tangent u. With ε = 0 this is the ω_X-orthogonal lift.
pub fn symplectic_lift(
    model: &Model,
    p: &HybridPoint,
    fp: FormParams,
    dir: LiftDirection,
) -> Result<Lift> {
    let info = model.chart(p.chart)?;
    let m = info.multiplicities();
    let k = info.k();
    let l = k - 1;
    let form = omega_q(model, p, fp)?;
    let (basis, basis_kind) = fiber_basis(model, p)?;
    let nb = basis.len();
    let dim = form.matrix.nrows();
    // A primitive with the requested projection; fiber corrections span the
    // kernel of df, so the particular choice is immaterial.
    let mut v0 = DVector::zeros(dim);
    match basis_kind {
        BasisKind::LogZ => {
            let rec = basic_functions(model, p)?;
            for i in 0..k {
                v0[2 * i] = dir.dt * rec.w[i] / (m[i] * p.t * p.t);
            }
            v0[2 * l + 1] += dir.dtheta / m[l];
        }
        BasisKind::HybridZero => {
            v0[0] = dir.dt;
            v0[k + 1 + l] += dir.dtheta / m[l];
        }
    }
    // Solve Σ_b x_b ω(u_b, u_a) = −ω(v0, u_a) over the fiber basis.
    let mut mat = DMatrix::zeros(nb, nb);
    let mut rhs = DVector::zeros(nb);
    let images: Vec<DVector<f64>> = basis.iter().map(|u| &form.matrix * u).collect();
    for a in 0..nb {
        // ω(v0, u_a) = v0ᵀ M u_a and ω(u_b, u_a) = u_bᵀ M u_a.
        rhs[a] = -v0.dot(&images[a]);
        for b in 0..nb {
            mat[(a, b)] = basis[b].dot(&images[a]);
        }
    }
    let lu = mat.full_piv_lu();
    let x = lu.solve(&rhs).ok_or_else(|| {
        Error::DegenerateForm(format!(
            "the form is degenerate on the fiber at {:?} (t = {}, ε = {}, q = {}); no lift",
            p.chart, p.t, fp.eps, fp.q
        ))
    })?;
    let mut vector = v0;
    for b in 0..nb {
        vector += x[b] * &basis[b];
    }
    Ok(Lift {
        basis: basis_kind,
        vector,
        fiber_coeffs: x,
    })
}

/// The closed-form angular lift at radius zero with q = 1: the lift of the
/// unit total-angle direction is Σ γ_i ∂θ_i with
/// γ_i = ζ(η(w_i)) / Σ_j m_j ζ(η(w_j)).
pub fn monodromy_field(model: &Model, p: &HybridPoint) -> Result<Vec<f64>> {
    let info = model.chart(p.chart)?;
    if p.t != 0.0 || info.residual_dim != 0 {
        return Err(Error::Domain(
            "the closed-form angular lift lives at radius zero in maximal charts".into(),
        ));
    }
    let m = info.multiplicities();
    if p.w.iter().any(|&w| w <= 0.0) {
        return Err(Error::SingularCoordinate(
            "the angular lift is singular where some w_i = 0".into(),
        ));
    }
    let weights: Vec<f64> = p.w.iter().map(|&w| zeta(eta(w))).collect();
    let total: f64 = weights.iter().zip(&m).map(|(z, m)| m * z).sum();
    Ok(weights.into_iter().map(|z| z / total).collect())
}

// ---------------------------------------------------------------------------
// Torus fibers
// ---------------------------------------------------------------------------

/// A structured torus fiber: a lattice of samples on the fiber torus over a
/// base point, transported as a whole. Samples are stored in row-major
/// lattice order over the n angle generators, with the first generator's
/// index varying fastest.
#[derive(Clone, Debug)]
pub struct TorusFiber {
    pub chart: ChartId,
    /// Number of angle generators (the fiber dimension).
    pub n: usize,
    /// Samples per generator circle.
    pub resolution: usize,
    /// Current radius parameter of the fiber.
    pub h: f64,
    /// Current interpolation parameter.
    pub q: f64,
    /// Total-angle level of the fiber.
    pub theta: f64,
    pub samples: Vec<HybridPoint>,
    /// Set when a transported sample had to be clamped to the chart domain.
    pub escaped: bool,
}

/// Builds the radius-zero torus fiber over tropical coordinates `w` at a
/// total-angle level, sampled on a `resolution`ⁿ lattice. Every sample
/// satisfies the lattice constraint Σ m_i θ_i = θ exactly.
pub fn radius_zero_fiber(
    model: &Model,
    chart: ChartId,
    w: &[f64],
    theta: f64,
    resolution: usize,
) -> Result<TorusFiber> {
    let info = model.chart(chart)?;
    if info.residual_dim != 0 {
        return Err(Error::Domain(
            "torus fibers are sampled in maximal charts".into(),
        ));
    }
    if resolution == 0 {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    let m = info.multiplicities();
    let k = info.k();
    let n = k - 1;
    let l = k - 1;
    let g = resolution;
    let count = g.pow(n as u32);
    let mut samples = Vec::with_capacity(count);
    for idx in 0..count {
        let mut angles = vec![0.0; k];
        let mut rest = idx;
        for a in 0..n {
            let j = rest % g;
            rest /= g;
            angles[a] = std::f64::consts::TAU * j as f64 / g as f64;
        }
        let partial: f64 = (0..n).map(|a| m[a] * angles[a]).sum();
        angles[l] = (theta - partial) / m[l];
        samples.push(HybridPoint::in_maximal_chart(
            model, chart, 0.0, w, &angles,
        )?);
    }
    Ok(TorusFiber {
        chart,
        n,
        resolution,
        h: 0.0,
        q: 0.0,
        theta,
        samples,
        escaped: false,
    })
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/// Rates of change of (w, θ_i) along the radial lift at a state.
///
/// The rates are assembled from the fiber-correction coefficients, not from
/// raw s-derivatives: the primitive radial lift preserves w exactly and each
/// w-type fiber vector moves w by its ±1 pattern, so no cancellation of
/// O(1/t) terms ever enters.
fn flow_rates(
    model: &Model,
    info: &ChartInfo,
    m: &[f64],
    h: f64,
    w: &[f64],
    angles: &[f64],
    fp: FormParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = info.k();
    let l = k - 1;
    let n = k - 1;
    let theta: f64 = m.iter().zip(angles).map(|(m, th)| m * th).sum();
    let p = HybridPoint {
        chart: info.id,
        t: h,
        theta,
        w: w.to_vec(),
        angles: angles.to_vec(),
        residual: Vec::new(),
    };
    let lift = symplectic_lift(
        model,
        &p,
        fp,
        LiftDirection {
            dt: 1.0,
            dtheta: 0.0,
        },
    )?;
    let x = &lift.fiber_coeffs;
    let mut wdot = vec![0.0; k];
    let mut thdot = vec![0.0; k];
    for a in 0..n {
        wdot[a] += x[a];
        wdot[l] -= x[a];
        thdot[a] += x[n + a];
        thdot[l] -= x[n + a] * m[a] / m[l];
    }
    Ok((wdot, thdot))
}

/// Integrates one sample from `h0` to `h1` with fixed-step RK4, recording
/// intermediate states when asked. Returns the final (w, θ_i) and whether
/// the sample was clamped to the chart domain on the way.
#[allow(clippy::too_many_arguments)]
fn integrate_sample(
    model: &Model,
    info: &ChartInfo,
    m: &[f64],
    start: &HybridPoint,
    path: &AdmissiblePath,
    eps: f64,
    h1: f64,
    steps: usize,
    mut record: Option<&mut Vec<(f64, HybridPoint)>>,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let k = info.k();
    let h0 = start.t;
    let mut w = start.w.clone();
    let mut th = start.angles.clone();
    let mut escaped = false;
    let dh = (h1 - h0) / steps as f64;
    let fp_at = |h: f64| FormParams::new(eps, path.q.value(h));
    let log_bound = -info.radius.ln();
    // Chart-domain clamp r_i < radius, i.e. w_i > −ln(radius)·m_i·t, taking
    // the deficit from the largest component to stay on the simplex.
    let clamp = |y: &mut [f64], t: f64| -> bool {
        let mut touched = false;
        for i in 0..k {
            let bound = log_bound * m[i] * t * (1.0 + 1e-9);
            if y[i] < bound {
                let deficit = bound - y[i];
                y[i] = bound;
                let (jmax, _) = y
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                y[jmax] -= deficit;
                touched = true;
            }
        }
        touched
    };
    for step in 0..steps {
        let h = h0 + step as f64 * dh;
        let (k1w, k1t) = flow_rates(model, info, m, h, &w, &th, fp_at(h)?)?;
        let mid = |y: &[f64], dy: &[f64], c: f64| -> Vec<f64> {
            y.iter().zip(dy).map(|(y, d)| y + c * d).collect()
        };
        // Stage weights must also stay in the chart domain: the form is only
        // evaluable there, so clamp them like the step results (this only
        // activates on samples that are being clamped anyway).
        let wmid = |y: &[f64], dy: &[f64], c: f64, t: f64| -> Vec<f64> {
            let mut out = mid(y, dy, c);
            clamp(&mut out, t);
            out
        };
        let hm = h + 0.5 * dh;
        let (k2w, k2t) = flow_rates(
            model,
            info,
            m,
            hm,
            &wmid(&w, &k1w, 0.5 * dh, hm),
            &mid(&th, &k1t, 0.5 * dh),
            fp_at(hm)?,
        )?;
        let (k3w, k3t) = flow_rates(
            model,
            info,
            m,
            hm,
            &wmid(&w, &k2w, 0.5 * dh, hm),
            &mid(&th, &k2t, 0.5 * dh),
            fp_at(hm)?,
        )?;
        let he = h + dh;
        let (k4w, k4t) = flow_rates(
            model,
            info,
            m,
            he,
            &wmid(&w, &k3w, dh, he),
            &mid(&th, &k3t, dh),
            fp_at(he)?,
        )?;
        for i in 0..k {
            w[i] += dh / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
            th[i] += dh / 6.0 * (k1t[i] + 2.0 * k2t[i] + 2.0 * k3t[i] + k4t[i]);
        }
        if clamp(&mut w, he) {
            escaped = true;
        }
        if let Some(rec) = record.as_deref_mut() {
            let theta: f64 = m.iter().zip(&th).map(|(m, th)| m * th).sum();
            rec.push((
                he,
                HybridPoint {
                    chart: info.id,
                    t: he,
                    theta,
                    w: w.clone(),
                    angles: th.clone(),
                    residual: Vec::new(),
                },
            ));
        }
    }
    Ok((w, th, escaped))
}

/// Transports a torus fiber along a path from its current radius to
/// `h_target` with `steps` fixed RK4 steps per sample. A zero-length request
/// returns the fiber unchanged (with the schedule's q recorded).
pub fn transport(
    model: &Model,
    fiber: &TorusFiber,
    path: &AdmissiblePath,
    eps: f64,
    h_target: f64,
    steps: usize,
) -> Result<TorusFiber> {
    let info = model.chart(fiber.chart)?;
    let m = info.multiplicities();
    if h_target < fiber.h {
        return Err(Error::Domain(format!(
            "transport runs outward: target {h_target} < current {}",
            fiber.h
        )));
    }
    if h_target > model.t_max() {
        return Err(Error::Domain(format!(
            "target radius {h_target} exceeds t_max = {}",
            model.t_max()
        )));
    }
    let mut out = fiber.clone();
    out.q = path.q.value(h_target);
    if h_target == fiber.h {
        return Ok(out);
    }
    if steps == 0 {
        return Err(Error::Domain("a positive step count is required".into()));
    }
    out.h = h_target;
    for sample in &mut out.samples {
        let (w, th, escaped) =
            integrate_sample(model, &info, &m, sample, path, eps, h_target, steps, None)?;
        let theta: f64 = m.iter().zip(&th).map(|(m, th)| m * th).sum();
        *sample = HybridPoint {
            chart: fiber.chart,
            t: h_target,
            theta,
            w,
            angles: th,
            residual: Vec::new(),
        };
        out.escaped |= escaped;
    }
    Ok(out)
}

/// A transported single-point trajectory, for tracing.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// States (h, point), starting with the initial point at its radius.
    pub states: Vec<(f64, HybridPoint)>,
    pub escaped: bool,
}

/// Transports a single point along a path, recording the state after every
/// step.
pub fn trace_point(
    model: &Model,
    start: &HybridPoint,
    path: &AdmissiblePath,
    eps: f64,
    h_target: f64,
    steps: usize,
) -> Result<Trajectory> {
    let info = model.chart(start.chart)?;
    if info.residual_dim != 0 {
        return Err(Error::Domain("tracing runs in maximal charts".into()));
    }
    let m = info.multiplicities();
    let mut states = vec![(start.t, start.clone())];
    if h_target == start.t {
        return Ok(Trajectory {
            states,
            escaped: false,
        });
    }
    if h_target < start.t || h_target > model.t_max() {
        return Err(Error::Domain(format!(
            "target radius {h_target} outside [{}, {}]",
            start.t,
            model.t_max()
        )));
    }
    if steps == 0 {
        return Err(Error::Domain("a positive step count is required".into()));
    }
    let (_, _, escaped) = integrate_sample(
        model,
        &info,
        &m,
        start,
        path,
        eps,
        h_target,
        steps,
        Some(&mut states),
    )?;
    Ok(Trajectory { states, escaped })
}

// ---------------------------------------------------------------------------
// Lagrangian residual
// ---------------------------------------------------------------------------

/// Max |ω_q(τ_a, τ_b)| over all lattice sites and generator pairs, with
/// tangents from central differences of neighbouring samples. Zero for
/// radius-zero fibers (only angle directions), and an integration-accuracy
/// gauge after transport.
pub fn lagrangian_residual(model: &Model, fiber: &TorusFiber, fp: FormParams) -> Result<f64> {
    if fiber.resolution < 8 {
        return Err(Error::Domain(format!(
            "Lagrangian residual needs at least 8 samples per circle, got {}",
            fiber.resolution
        )));
    }
    let info = model.chart(fiber.chart)?;
    let m = info.multiplicities();
    let k = info.k();
    let l = k - 1;
    let n = fiber.n;
    let g = fiber.resolution;
    let delta = std::f64::consts::TAU / g as f64;
    // Lattice period of generator a in angle space: +2π on θ_a, compensated
    // on the last angle. Neighbour differences across the lattice seam are
    // corrected by this vector; the correction is exact because the form
    // coefficients are angle-independent, so seam-equivalent samples follow
    // congruent trajectories.
    let period = |a: usize, th: &mut [f64], sign: f64| {
        th[a] += sign * std::f64::consts::TAU;
        th[l] -= sign * std::f64::consts::TAU * m[a] / m[l];
    };
    let neighbor = |idx: usize, a: usize, dir: isize| -> (usize, f64) {
        let stride = g.pow(a as u32);
        let digit = (idx / stride) % g;
        let new_digit = digit as isize + dir;
        if new_digit < 0 {
            (idx + (g - 1) * stride, -1.0)
        } else if new_digit as usize >= g {
            (idx - (g - 1) * stride, 1.0)
        } else {
            ((idx as isize + dir * stride as isize) as usize, 0.0)
        }
    };
    let mut worst = 0.0_f64;
    for (idx, sample) in fiber.samples.iter().enumerate() {
        let form = omega_q(model, sample, fp)?;
        let dim = form.matrix.nrows();
        let mut tangents = Vec::with_capacity(n);
        for a in 0..n {
            let (ip, wrap_p) = neighbor(idx, a, 1);
            let (im, wrap_m) = neighbor(idx, a, -1);
            let pp = &fiber.samples[ip];
            let pm = &fiber.samples[im];
            let mut thp = pp.angles.clone();
            let mut thm = pm.angles.clone();
            if wrap_p != 0.0 {
                period(a, &mut thp, wrap_p);
            }
            if wrap_m != 0.0 {
                period(a, &mut thm, wrap_m);
            }
            let mut v = DVector::zeros(dim);
            match form.basis {
                BasisKind::LogZ => {
                    for i in 0..k {
                        let dw = (pp.w[i] - pm.w[i]) / (2.0 * delta);
                        let dth = (thp[i] - thm[i]) / (2.0 * delta);
                        v[2 * i] = -dw / (m[i] * sample.t);
                        v[2 * i + 1] = dth;
                    }
                }
                BasisKind::HybridZero => {
                    for i in 0..k {
                        v[1 + i] = (pp.w[i] - pm.w[i]) / (2.0 * delta);
                        v[k + 1 + i] = (thp[i] - thm[i]) / (2.0 * delta);
                    }
                }
            }
            tangents.push(v);
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let val = tangents[a].dot(&(&form.matrix * &tangents[b])).abs();
                worst = worst.max(val);
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// The fibration map to the expanded skeleton
// ---------------------------------------------------------------------------

/// Finds the ivy edge whose open parameter range contains `level`.
fn ivy_edge_at_level(ivy: &IvyGraph, level: f64) -> Result<usize> {
    for (i, e) in ivy.edges.iter().enumerate() {
        let mut levels = e.levels;
        for side in 0..2 {
            if let IvyEnd::Vertex(v) = e.ends[side] {
                levels[side] = ivy.vertex_levels[v];
            }
        }
        if level > levels[0] && level < levels[1] {
            return Ok(i);
        }
    }
    Err(Error::Domain(format!("no ivy edge contains level {level}")))
}

fn find_cell(skeleton: &ExpandedSkeleton, face: &Face, maximal: bool) -> Result<usize> {
    skeleton
        .cells
        .iter()
        .position(|c| {
            c.face() == face
                && match c {
                    Cell::Maximal { .. } => maximal,
                    Cell::Submaximal { .. } => !maximal,
                }
        })
        .ok_or_else(|| {
            Error::Domain(format!(
                "the expanded skeleton has no {} cell for face {face:?}",
                if maximal { "maximal" } else { "submaximal" }
            ))
        })
}

/// The fibration map: sends a point of the family to the expanded-skeleton
/// base. In maximal charts interior points land in the maximal cell with
/// coordinates v̂_i = t_i − η(w_i) (−η(w_i) at radius zero); a point past
/// the rounding of one component is handed to the submaximal cell of the
/// remaining face, with ivy level the forgotten component's glue parameter
/// t_i = −1/(m_i log|z_i|). Half-edge-chart points land in their line's
/// submaximal cell directly. All angles collapse.
pub fn fibration_map(
    model: &Model,
    skeleton: &ExpandedSkeleton,
    p: &HybridPoint,
) -> Result<BasePoint> {
    let info = model.chart(p.chart)?;
    let face: Face = info.components.iter().map(|c| c.id).collect();
    if info.residual_dim != 0 {
        // Half-edge chart: the submaximal cell of the single line, at the
        // glue parameter of the forgotten divisor.
        let level = glue_parameter(p)?;
        let cell = find_cell(skeleton, &face, false)?;
        let Cell::Submaximal { ivy, .. } = &skeleton.cells[cell] else {
            unreachable!()
        };
        let edge = ivy_edge_at_level(ivy, level)?;
        return Ok(BasePoint {
            cell,
            simplex_coords: p.w.iter().map(|&w| -eta(w)).collect(),
            ivy_position: Some(IvyPosition::OnEdge { edge, level }),
        });
    }
    let (vhat, glue_levels): (Vec<f64>, Vec<f64>) = if p.t > 0.0 {
        let rec = basic_functions(model, p)?;
        (rec.v.clone(), rec.t_i.clone())
    } else {
        (p.w.iter().map(|&w| -eta(w)).collect(), vec![0.0; info.k()])
    };
    let offenders: Vec<usize> = (0..info.k()).filter(|&i| vhat[i] > 0.0).collect();
    match offenders.len() {
        0 => {
            let cell = find_cell(skeleton, &face, true)?;
            Ok(BasePoint {
                cell,
                simplex_coords: vhat.iter().map(|&v| v.min(0.0)).collect(),
                ivy_position: None,
            })
        }
        1 => {
            let i = offenders[0];
            let mut sub_face = face.clone();
            sub_face.remove(&info.components[i].id);
            let rest: f64 = 1.0 - p_weight(model, p, i)?;
            let mut coords = Vec::new();
            for j in 0..info.k() {
                if j != i {
                    coords.push(-eta((p_weight(model, p, j)? / rest).clamp(0.0, 1.0)));
                }
            }
            let level = glue_levels[i];
            let cell = find_cell(skeleton, &sub_face, false)?;
            let Cell::Submaximal { ivy, .. } = &skeleton.cells[cell] else {
                unreachable!()
            };
            let edge = ivy_edge_at_level(ivy, level)?;
            Ok(BasePoint {
                cell,
                simplex_coords: coords,
                ivy_position: Some(IvyPosition::OnEdge { edge, level }),
            })
        }
        _ => Err(Error::Domain(format!(
            "point sits over a depth-{} stratum; only maximal and submaximal cells are mapped",
            offenders.len()
        ))),
    }
}

/// Tropical weight of component `i` at a point (recomputed at t > 0).
fn p_weight(model: &Model, p: &HybridPoint, i: usize) -> Result<f64> {
    if p.t > 0.0 {
        Ok(basic_functions(model, p)?.w[i])
    } else {
        Ok(p.w[i])
    }
}
