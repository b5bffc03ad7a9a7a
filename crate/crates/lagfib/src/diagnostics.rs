//! Limit diagnostics along a degeneration sweep: metric limits, distortion
//! certificates for the base map, volume filling, density spread, phase
//! alignment, and calibrated length ratios.
//!
//! All sweep diagnostics are driven by the same deterministic ingredients —
//! transported torus fibers and the flow-image boundary weight — so reruns
//! with the same configuration are bit-identical. The distortion, volume,
//! phase and calibration diagnostics are implemented at curve level (n = 1),
//! which is where the proper model lives; the metric-limit and density
//! diagnostics work in any dimension.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{radius_zero_fiber, trace_point, transport, AdmissiblePath, TorusFiber};
use crate::hybrid::{hesse_y_from_z, hesse_yb_on_edge, ChartId, HybridPoint, Model, C64};
use crate::kahler::{
    apply_j, cplus, fiber_basis, metric_g, omega_q, volume_forms, BasisKind, FormParams,
};
use crate::quad;

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// A path together with a strictly decreasing, positive radius schedule.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub path: AdmissiblePath,
    pub hs: Vec<f64>,
}

impl Sweep {
    pub fn new(path: AdmissiblePath, hs: Vec<f64>) -> Result<Self> {
        if hs.is_empty() {
            return Err(Error::Domain("a sweep needs at least one radius".into()));
        }
        for pair in hs.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(Error::Domain(format!(
                    "sweep schedule must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if !(hs[hs.len() - 1] > 0.0) {
            return Err(Error::Domain("sweep radii must be positive".into()));
        }
        Ok(Sweep { path, hs })
    }

    /// Geometric schedule from `first` down to `last` in `count` points.
    pub fn geometric(path: AdmissiblePath, first: f64, last: f64, count: usize) -> Result<Self> {
        if count < 2 || !(last > 0.0) || !(first > last) {
            return Err(Error::Domain(format!(
                "geometric schedule needs first > last > 0 and count ≥ 2, got {first}, {last}, {count}"
            )));
        }
        let ratio = (last / first).powf(1.0 / (count as f64 - 1.0));
        let hs = (0..count).map(|i| first * ratio.powi(i as i32)).collect();
        Sweep::new(path, hs)
    }

    /// Parses a schedule description like `"geometric:1e-1,1e-4,8"`.
    pub fn parse_schedule(text: &str) -> Result<Vec<f64>> {
        let err = |msg: &str| {
            Error::Domain(format!(
                "cannot parse schedule {text:?}: {msg}; expected e.g. \"geometric:1e-1,1e-4,8\""
            ))
        };
        let (kind, rest) = text.split_once(':').ok_or_else(|| err("missing ':'"))?;
        if kind.trim() != "geometric" {
            return Err(err("unknown schedule kind"));
        }
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(err("expected three comma-separated values"));
        }
        let first: f64 = parts[0].parse().map_err(|_| err("bad first radius"))?;
        let last: f64 = parts[1].parse().map_err(|_| err("bad last radius"))?;
        let count: usize = parts[2].parse().map_err(|_| err("bad point count"))?;
        let dummy = AdmissiblePath::new(0.0, crate::flow::QSchedule::Square);
        Ok(Sweep::geometric(dummy, first, last, count)?.hs)
    }
}

// ---------------------------------------------------------------------------
// Shared machinery
// ---------------------------------------------------------------------------

/// Tropical distance from the generic-region interface to the simplex
/// boundary at radius `h`: the first weight of the flow trajectory seeded
/// next to the boundary at radius zero and integrated along the path. Where
/// the trajectory leaves the rounded chart zone it is clamped there, which
/// models the freeze of the flow in the ambient-dominated region between
/// charts (the fibers move at the rate |f|′ ~ e^{−1/t}/t², which is
/// negligible at the radii considered).
pub fn boundary_weight(model: &Model, path: &AdmissiblePath, eps: f64, h: f64) -> Result<f64> {
    boundary_weight_with_steps(model, path, eps, h, 240)
}

/// [`boundary_weight`] on an explicit step grid, so callers comparing
/// transported samples against the interface can integrate both on the same
/// grid (clamped trajectories then agree bit for bit).
fn boundary_weight_with_steps(
    model: &Model,
    path: &AdmissiblePath,
    eps: f64,
    h: f64,
    steps: usize,
) -> Result<f64> {
    if h == 0.0 {
        return Ok(0.0);
    }
    let chart = model.maximal_charts()[0];
    let info = model.chart(chart)?;
    let k = info.k();
    let delta = 1e-4;
    let mut w = vec![(1.0 - delta) / (k as f64 - 1.0); k];
    w[0] = delta;
    let start = HybridPoint::in_maximal_chart(model, chart, 0.0, &w, &vec![0.0; k])?;
    let tr = trace_point(model, &start, path, eps, h, steps)?;
    Ok(tr.states.last().expect("trajectory has states").1.w[0])
}

/// LogZ tangent between two lattice-adjacent samples of a transported fiber
/// at `t > 0`. With `wrap` set, the lattice seam of the first generator is
/// unwrapped (exact, since the form coefficients are angle-independent).
fn lattice_tangent(
    m: &[f64],
    t: f64,
    a: &HybridPoint,
    b: &HybridPoint,
    wrap: bool,
) -> DVector<f64> {
    let k = m.len();
    let mut tau = DVector::zeros(2 * k);
    for i in 0..k {
        let mut dth = b.angles[i] - a.angles[i];
        if wrap {
            if i == 0 {
                dth += TAU;
            }
            if i == k - 1 {
                dth -= TAU * m[0] / m[k - 1];
            }
        }
        tau[2 * i] = -(b.w[i] - a.w[i]) / (m[i] * t);
        tau[2 * i + 1] = dth;
    }
    tau
}

/// The quadratic form g(τ,τ) = ω(τ, Jτ) of a form matrix in the LogZ basis.
fn metric_quadratic(form: &DMatrix<f64>, tau: &DVector<f64>) -> f64 {
    let jt = apply_j(tau);
    (tau.transpose() * form * jt)[(0, 0)]
}

fn transported_fiber(
    model: &Model,
    path: &AdmissiblePath,
    eps: f64,
    h: f64,
    base_w: &[f64],
    resolution: usize,
    steps: usize,
) -> Result<TorusFiber> {
    let chart = model.maximal_charts()[0];
    let fiber = radius_zero_fiber(model, chart, base_w, 0.0, resolution)?;
    if h == 0.0 {
        return Ok(fiber);
    }
    transport(model, &fiber, path, eps, h, steps)
}

// ---------------------------------------------------------------------------
// Metric limit
// ---------------------------------------------------------------------------

/// Per-radius residual of the fiber metric against its radius-zero limit.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MetricResidual {
    pub h: f64,
    pub q: f64,
    /// max |h·g_ε(b_a, b_b) − (1−q)·L_ab| over fiber-basis probes, where
    /// g_ε is the metric of the ε-part of the form and L the limit Gram.
    pub residual: f64,
    /// Length of a unit θ-probe under h·g (collapses like √h).
    pub theta_length: f64,
}

/// Gram matrix of the radius-zero limit metric ε·Σ(dŵ_i)² on the standard
/// fiber basis (w-type probes first): (δ_ab + 1)ε on the w-block, zero on
/// the θ-block. Linear in ε by construction.
pub fn limit_metric_gram(n: usize, eps: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            g[(a, b)] = eps * (if a == b { 2.0 } else { 1.0 });
        }
    }
    g
}

fn metric_sample_weights(k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0 / k as f64; k]];
    let mut skew = vec![0.6 / (k as f64 - 1.0); k];
    skew[0] = 0.4;
    out.push(skew);
    out
}

/// Checks the fiberwise metric limit h·g_ε → (1−q)·ε·Σ(dŵ_i)² on fixed
/// tangent probes over maximal-chart samples.
pub fn metric_limit_check(model: &Model, sweep: &Sweep, eps: f64) -> Result<Vec<MetricResidual>> {
    let chart = model.maximal_charts()[0];
    let info = model.chart(chart)?;
    let k = info.k();
    let n = k - 1;
    let m = info.multiplicities();
    let limit = limit_metric_gram(n, eps);
    let mut out = Vec::new();
    for &h in &sweep.hs {
        let q = sweep.path.q.value(h);
        let fp = FormParams::new(eps, q)?;
        let fp_ambient = FormParams::new(0.0, q)?;
        let mut worst: f64 = 0.0;
        let mut theta_len: f64 = 0.0;
        let mut used = 0;
        for w in metric_sample_weights(k) {
            // Stay inside chart validity w_i > −ln(radius)·m_i·h.
            let bound = -info.radius.ln() * h * 1.05;
            if w.iter().zip(&m).any(|(&wi, &mi)| wi <= bound * mi) {
                continue;
            }
            used += 1;
            let p = HybridPoint::in_maximal_chart(model, chart, h, &w, &vec![0.0; k])?;
            let full = omega_q(model, &p, fp)?.matrix;
            let ambient = omega_q(model, &p, fp_ambient)?.matrix;
            let m_eps = &full - ambient;
            let (basis, _) = fiber_basis(model, &p)?;
            for a in 0..2 * n {
                for b in 0..2 * n {
                    let jv = apply_j(&basis[b]);
                    let g = (basis[a].transpose() * &m_eps * jv)[(0, 0)];
                    let target = (1.0 - q) * limit[(a, b)];
                    worst = worst.max((h * g - target).abs());
                }
            }
            // θ-probe length under the full h·g metric.
            let g_theta = metric_quadratic(&full, &basis[n]);
            theta_len = theta_len.max((h * g_theta).max(0.0).sqrt());
        }
        if used == 0 {
            return Err(Error::Domain(format!(
                "metric_limit_check: no valid sample weights at h = {h} (chart bound too large)"
            )));
        }
        out.push(MetricResidual {
            h,
            q,
            residual: worst,
            theta_length: theta_len,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Volume filling
// ---------------------------------------------------------------------------

/// Per-radius volume-filling record.
#[derive(Clone, Debug, serde::Serialize)]
pub struct VolumeRecord {
    pub h: f64,
    pub q: f64,
    /// Tropical width of the non-generic collar on each side of a window.
    pub boundary_weight: f64,
    /// Generic-region volume over total fiber volume.
    pub ratio: f64,
}

/// Density of the rescaled volume form on a cubic-pencil vertex window in
/// window coordinates (s = log|z_a|, θ_a).
fn hesse_vertex_density(model: &Model, t: f64, s: f64, th: f64) -> Result<f64> {
    let w0 = -s * t;
    let p = HybridPoint::in_maximal_chart(
        model,
        ChartId::HesseVertex { a: 0 },
        t,
        &[w0, 1.0 - w0],
        &[th, 0.0],
    )?;
    let xs = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
    let xth = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
    let vv = volume_forms(model, &p, &[xs, xth], BasisKind::LogZ)?;
    Ok(vv.vol_new.abs())
}

/// Density of the rescaled volume form on a cubic-pencil tube in residual
/// coordinates (σ = log|y|, arg y): t·|c·J|², where c is the residue factor
/// of the volume form and J the log-Jacobian from the adapted coordinate to
/// the residual one along the curve.
fn hesse_tube_density(t: f64, sigma: f64, alpha: f64) -> Result<f64> {
    let f = C64::from_polar((-1.0 / t).exp(), 0.0);
    let y = C64::from_polar(sigma.exp(), alpha);
    let yb = hesse_yb_on_edge(y, f)?;
    let u = y.powu(3) + yb.powu(3) + C64::new(1.0, 0.0);
    // Curve y·y_b = f·u ⟹ dy_b/dy = (3f y² − y_b)/(y − 3f y_b²).
    let dyb_dy = (3.0 * f * y * y - yb) / (y - 3.0 * f * yb * yb);
    let jfac = C64::new(1.0, 0.0) - (y / u) * (3.0 * y * y + 3.0 * yb * yb * dyb_dy);
    let c = -u / (u - 3.0 * y.powu(3));
    Ok(t * (c * jfac).norm_sqr())
}

/// Vertex-window and tube integrals of the rescaled volume form over one of
/// the three congruent segments of the cubic-pencil fiber, with the window
/// cut at tropical weight `w_cut` on each side. The window is the rectangle
/// s ∈ [−(1−w_cut)/t, −w_cut/t] in (s, θ); the tube annulus runs from the
/// matching adapted cut |y/u| = e^{−w_cut/t} to the exact plain-coordinate
/// cut |y| = e^{w_cut/t} of the far vertex chart (y′ = 1/y there).
fn hesse_segment_integrals(model: &Model, t: f64, w_cut: f64) -> Result<(f64, f64)> {
    let n_theta = 16;
    let n_s = 32;
    let gl = quad::gauss_legendre_nodes(n_s);
    let s_cut = -w_cut / t;

    // Vertex window.
    let (a, b) = (-1.0 / t - s_cut, s_cut);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut i_vertex = 0.0;
    for jt in 0..n_theta {
        let th = TAU * jt as f64 / n_theta as f64;
        for &(x, wq) in &gl {
            let s = mid + half * x;
            i_vertex += wq * half * hesse_vertex_density(model, t, s, th)? * (TAU / n_theta as f64);
        }
    }

    // Tube annulus.
    let f = C64::from_polar((-1.0 / t).exp(), 0.0);
    let mut i_tube = 0.0;
    let sigma_far = w_cut / t;
    for jt in 0..n_theta {
        let alpha = TAU * jt as f64 / n_theta as f64;
        // Solve σ = s_cut + log|u(y)| for the near boundary (the adapted cut).
        let mut sigma_near = s_cut;
        for _ in 0..40 {
            let y = C64::from_polar(sigma_near.exp(), alpha);
            let yb = hesse_yb_on_edge(y, f)?;
            let u = y.powu(3) + yb.powu(3) + C64::new(1.0, 0.0);
            let next = s_cut + u.norm().ln();
            let done = (next - sigma_near).abs() < 1e-14;
            sigma_near = next;
            if done {
                break;
            }
        }
        let (mid, half) = (
            0.5 * (sigma_near + sigma_far),
            0.5 * (sigma_far - sigma_near),
        );
        for &(x, wq) in &gl {
            let sigma = mid + half * x;
            i_tube += wq * half * hesse_tube_density(t, sigma, alpha)? * (TAU / n_theta as f64);
        }
    }
    Ok((i_vertex, i_tube))
}

/// Volume ratio of the cubic-pencil fiber at radius `h` with the generic
/// window cut at tropical weight `w_minus` on each side: stratified
/// quadrature over one vertex window and one connecting annulus (the cyclic
/// symmetry of the model makes one of each sufficient).
pub fn hesse_volume_ratio(model: &Model, h: f64, w_minus: f64) -> Result<f64> {
    if !matches!(model, Model::Hesse { .. }) {
        return Err(Error::Domain(
            "volume filling is computed on the proper (cubic-pencil) model".into(),
        ));
    }
    if h == 0.0 {
        // The rescaled volume form is supported on the generic region at
        // radius zero: the tube density carries a factor t.
        return Ok(1.0);
    }
    if !(w_minus > 0.0) || !(2.0 * w_minus < 1.0) {
        return Err(Error::Domain(format!(
            "window weight must satisfy 0 < w < 1/2, got {w_minus}"
        )));
    }
    let (i_vertex, i_tube) = hesse_segment_integrals(model, h, w_minus)?;
    if !(i_vertex + i_tube > 0.0) {
        return Err(Error::Numerical(format!(
            "volume quadrature degenerated at h = {h} (total {})",
            i_vertex + i_tube
        )));
    }
    Ok(i_vertex / (i_vertex + i_tube))
}

/// Volume-filling diagnostic along a sweep: the generic region is the flow
/// image of the radius-zero generic region, so its boundary is the
/// transported boundary trajectory (see [`boundary_weight`]).
pub fn volume_fraction(model: &Model, sweep: &Sweep, eps: f64) -> Result<Vec<VolumeRecord>> {
    if !matches!(model, Model::Hesse { .. }) {
        return Err(Error::Domain(
            "volume filling needs a proper model with compact fibers; use the cubic-pencil model"
                .into(),
        ));
    }
    let mut out = Vec::new();
    for &h in &sweep.hs {
        let q = sweep.path.q.value(h);
        let w_minus = boundary_weight(model, &sweep.path, eps, h)?;
        let ratio = hesse_volume_ratio(model, h, w_minus)?;
        out.push(VolumeRecord {
            h,
            q,
            boundary_weight: w_minus,
            ratio,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Density spread (asymptotic Ricci flatness)
// ---------------------------------------------------------------------------

/// Per-radius statistics of the density ratio c₊ over generic samples.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CplusRecord {
    pub h: f64,
    pub q: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub spread: f64,
    /// Samples flagged non-generic (outside the flow-image window) and
    /// excluded from the statistics.
    pub excluded: usize,
    /// The radius-zero limit value ε^n·(n+1)·|c₀|⁻².
    pub limit: f64,
}

/// Tracks max/min/mean of c₊ on transported fibers along the sweep, plus a
/// radius-zero record appended at the end. Samples that were clamped to the
/// chart boundary (non-generic) are flagged and excluded.
pub fn ricci_flat_trend(
    model: &Model,
    sweep: &Sweep,
    eps: f64,
    bases: &[Vec<f64>],
    resolution: usize,
) -> Result<Vec<CplusRecord>> {
    if bases.is_empty() {
        return Err(Error::Domain("at least one base point is required".into()));
    }
    let n = model.n();
    let mut out = Vec::new();
    let mut hs: Vec<f64> = sweep.hs.clone();
    hs.push(0.0);
    for h in hs {
        let q = sweep.path.q.value(h);
        let fp = FormParams::new(eps, q)?;
        // Integrate the interface on the same step grid as the fibers, so a
        // clamped sample and the interface trajectory coincide exactly.
        let w_bound = boundary_weight_with_steps(model, &sweep.path, eps, h, 24)?;
        let mut vals: Vec<f64> = Vec::new();
        let mut excluded = 0usize;
        let mut limit = f64::NAN;
        for base in bases {
            let tf = transported_fiber(model, &sweep.path, eps, h, base, resolution, 24)?;
            for p in &tf.samples {
                if h > 0.0 && p.w.iter().any(|&wi| wi <= w_bound * (1.0 + 1e-3)) {
                    excluded += 1;
                    continue;
                }
                vals.push(cplus(model, p, fp)?);
                if limit.is_nan() {
                    let (frame, basis) = fiber_basis(model, p)?;
                    let vv = volume_forms(model, p, &frame, basis)?;
                    limit = eps.powi(n as i32) * (n as f64 + 1.0) / vv.c0.norm_sqr();
                }
            }
        }
        if vals.is_empty() {
            return Err(Error::Domain(format!(
                "ricci_flat_trend: every sample at h = {h} was non-generic"
            )));
        }
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        out.push(CplusRecord {
            h,
            q,
            min,
            max,
            mean,
            spread: max - min,
            excluded,
            limit,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Phase and calibration
// ---------------------------------------------------------------------------

/// Per-radius phase record of a transported fiber.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PhaseRecord {
    pub h: f64,
    pub q: f64,
    /// sup over lattice sites of |ϖ_h − ϖ₀|.
    pub sup_deviation: f64,
    /// Branch-tracked winding of the phase around the fiber generator.
    pub winding: i64,
}

/// Phase diagnostic output: the pinned limit phase and per-radius records.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PhaseReport {
    /// The limit phase ±i^n·c₀/|c₀| with the sign resolved at the first
    /// sweep point and held fixed, as (re, im).
    pub pinned: [f64; 2],
    pub records: Vec<PhaseRecord>,
}

fn require_tame_curve(model: &Model, path: &AdmissiblePath, what: &str) -> Result<()> {
    if model.n() != 1 {
        return Err(Error::Domain(format!(
            "{what} is implemented for curve models (n = 1)"
        )));
    }
    if !path.is_tame() || path.q.value(0.0) != 0.0 {
        return Err(Error::Domain(format!(
            "{what} needs a tame path ending at q = 0 (q(0) = 0 with q′(0) = 0)"
        )));
    }
    Ok(())
}

/// Phase values ϖ at every lattice site of a transported curve fiber, from
/// the rescaled volume form on finite-difference tangents.
fn fiber_phases(model: &Model, tf: &TorusFiber) -> Result<(Vec<C64>, C64)> {
    let info = model.chart(tf.chart)?;
    let m = info.multiplicities();
    let res = tf.resolution;
    let mut phases = Vec::with_capacity(res);
    let mut c0 = C64::new(1.0, 0.0);
    for j in 0..res {
        let a = &tf.samples[j];
        let b = &tf.samples[(j + 1) % res];
        let tau = lattice_tangent(&m, tf.h, a, b, j + 1 == res);
        let jtau = apply_j(&tau);
        let vv = volume_forms(model, a, &[tau, jtau], BasisKind::LogZ)?;
        let norm = vv.omega_new.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateForm(format!(
                "phase undefined: the volume form vanishes at lattice site {j} (non-generic point)"
            )));
        }
        phases.push(vv.omega_new / norm);
        c0 = vv.c0;
    }
    Ok((phases, c0))
}

fn winding_of(phases: &[C64]) -> Result<i64> {
    let mut total = 0.0;
    for j in 0..phases.len() {
        let next = phases[(j + 1) % phases.len()];
        total += (next / phases[j]).arg();
    }
    let winding = (total / TAU).round();
    if (total - winding * TAU).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "phase winding did not close to an integer multiple of 2π (residual {:.3e})",
            total - winding * TAU
        )));
    }
    Ok(winding as i64)
}

/// Phase diagnostic along a tame sweep on a curve model: compares the phase
/// field of transported fibers with the radius-zero limit ±i·c₀/|c₀| and
/// reports branch-tracked windings.
pub fn phase_specialty(
    model: &Model,
    sweep: &Sweep,
    eps: f64,
    base_w: &[f64],
    resolution: usize,
) -> Result<PhaseReport> {
    require_tame_curve(model, &sweep.path, "the phase diagnostic")?;
    let mut pinned: Option<C64> = None;
    let mut records = Vec::new();
    for &h in &sweep.hs {
        let tf = transported_fiber(model, &sweep.path, eps, h, base_w, resolution, 32)?;
        let (phases, c0) = fiber_phases(model, &tf)?;
        let reference = C64::new(0.0, 1.0) * c0 / c0.norm();
        let dev = |target: C64| {
            phases
                .iter()
                .map(|p| (p - target).norm())
                .fold(0.0f64, f64::max)
        };
        let target = *pinned.get_or_insert_with(|| {
            if dev(reference) <= dev(-reference) {
                reference
            } else {
                -reference
            }
        });
        records.push(PhaseRecord {
            h,
            q: sweep.path.q.value(h),
            sup_deviation: dev(target),
            winding: winding_of(&phases)?,
        });
    }
    let pinned = pinned.expect("at least one sweep point");
    Ok(PhaseReport {
        pinned: [pinned.re, pinned.im],
        records,
    })
}

/// Per-radius calibration record.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CalibrationRecord {
    pub h: f64,
    pub q: f64,
    /// ∫ vol^g over ∫ √c₊·Re(ϖ₀⁻¹Ω); ≥ 1 up to quadrature error, → 1.
    pub ratio: f64,
}

/// Calibration ratio at a single radius (1 exactly at radius zero, where the
/// length element and √c₊·|Ω| agree pointwise by the density identity).
pub fn calibration_at(
    model: &Model,
    path: &AdmissiblePath,
    eps: f64,
    h: f64,
    base_w: &[f64],
    resolution: usize,
    pinned: C64,
) -> Result<f64> {
    require_tame_curve(model, path, "the calibration diagnostic")?;
    if h == 0.0 {
        return Ok(1.0);
    }
    let fp = FormParams::new(eps, path.q.value(h))?;
    let tf = transported_fiber(model, path, eps, h, base_w, resolution, 32)?;
    let info = model.chart(tf.chart)?;
    let m = info.multiplicities();
    let res = tf.resolution;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..res {
        let a = &tf.samples[j];
        let b = &tf.samples[(j + 1) % res];
        let tau = lattice_tangent(&m, tf.h, a, b, j + 1 == res);
        let form = omega_q(model, a, fp)?.matrix;
        let g = metric_quadratic(&form, &tau).max(0.0);
        num += (h * g).sqrt();
        let jtau = apply_j(&tau);
        let vv = volume_forms(model, a, &[tau, jtau], BasisKind::LogZ)?;
        let c = cplus(model, a, fp)?;
        den += c.sqrt() * (pinned.conj() * vv.omega_new).re;
    }
    if !(den > 0.0) {
        return Err(Error::Numerical(format!(
            "calibration denominator not positive at h = {h}: the phase reference is misaligned"
        )));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Distortion certificate for the base map
// ---------------------------------------------------------------------------

/// Per-radius distortion certificate of the base map μ against the rescaled
/// fiber metric (1/ε)·h·g.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GHRecord {
    pub h: f64,
    pub q: f64,
    /// max over probe pairs of |d_h(x, y) − d_std(μx, μy)|.
    pub max_distortion: f64,
    /// Certified slack for the upper band: fiber circumferences, tube
    /// crossings, radial metric excess over the base metric, and stitch
    /// lengths of the mesh. Shrinks with h along tame paths.
    pub diameter_proxy: f64,
    /// max over pairs of (√(1−q)·d_std − d_h), clamped at 0. The pointwise
    /// bound h·g ≥ (1−q)·ε·Σ(dŵ_i)² makes this vanish up to rounding.
    pub lower_violation: f64,
    /// max over pairs of (d_h − d_std − diameter_proxy), clamped at 0.
    pub upper_violation: f64,
}

/// A weighted mesh on the family at one radius, with skeleton positions.
struct MetricGraph {
    adj: Vec<Vec<(usize, f64)>>,
    /// Skeleton coordinate of each node under μ (already scaled by √2).
    pos: Vec<f64>,
    probes: Vec<usize>,
    diameter_proxy: f64,
    /// Total length of the skeleton cycle for proper models.
    cycle: Option<f64>,
}

impl MetricGraph {
    fn new(nodes: usize) -> Self {
        MetricGraph {
            adj: vec![Vec::new(); nodes],
            pos: vec![0.0; nodes],
            probes: Vec::new(),
            diameter_proxy: 0.0,
            cycle: None,
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, len: f64) {
        self.adj[a].push((b, len));
        self.adj[b].push((a, len));
    }

    fn d_std(&self, a: usize, b: usize) -> f64 {
        let d = (self.pos[a] - self.pos[b]).abs();
        match self.cycle {
            Some(l) => d.min(l - d),
            None => d,
        }
    }

    fn dijkstra(&self, src: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Key(f64);
        impl Eq for Key {}
        impl PartialOrd for Key {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Key {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0.total_cmp(&other.0)
            }
        }
        let mut dist = vec![f64::INFINITY; self.adj.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((Key(0.0), src)));
        while let Some(Reverse((Key(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(u, len) in &self.adj[v] {
                let nd = d + len;
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(Reverse((Key(nd), u)));
                }
            }
        }
        dist
    }

    fn certify(&self, h: f64, q: f64) -> Result<GHRecord> {
        let mut max_distortion: f64 = 0.0;
        let mut lower: f64 = 0.0;
        let mut upper: f64 = 0.0;
        for (i, &a) in self.probes.iter().enumerate() {
            let dist = self.dijkstra(a);
            for &b in self.probes.iter().skip(i + 1) {
                let dh = dist[b];
                if !dh.is_finite() {
                    return Err(Error::Numerical(
                        "distortion mesh is disconnected between probe nodes".into(),
                    ));
                }
                let ds = self.d_std(a, b);
                max_distortion = max_distortion.max((dh - ds).abs());
                lower = lower.max((1.0 - q).sqrt() * ds - dh);
                upper = upper.max(dh - ds - self.diameter_proxy);
            }
        }
        Ok(GHRecord {
            h,
            q,
            max_distortion,
            diameter_proxy: self.diameter_proxy,
            lower_violation: lower.max(0.0),
            upper_violation: upper.max(0.0),
        })
    }
}

fn edge_length(h: f64, eps: f64, ga: f64, gb: f64) -> f64 {
    0.5 * ((h / eps * ga.max(0.0)).sqrt() + (h / eps * gb.max(0.0)).sqrt())
}

/// Mesh for the single-chart local model: a grid of genuinely transported
/// fibers over a truncated base window, with μ the first tropical weight.
fn snc_mesh(
    model: &Model,
    path: &AdmissiblePath,
    eps: f64,
    h: f64,
    grid: usize,
) -> Result<MetricGraph> {
    let q = path.q.value(h);
    let fp = FormParams::new(eps, q)?;
    let info = model.chart(model.maximal_charts()[0])?;
    let m = info.multiplicities();
    let (nb, res) = (grid.max(4), grid.max(4));
    let (w_lo, w_hi) = (0.12, 0.88);
    let mut nodes: Vec<HybridPoint> = Vec::with_capacity(nb * res);
    for f in 0..nb {
        let w0 = w_lo + (w_hi - w_lo) * f as f64 / (nb as f64 - 1.0);
        let tf = transported_fiber(model, path, eps, h, &[w0, 1.0 - w0], res, 16)?;
        nodes.extend(tf.samples);
    }
    let forms: Vec<DMatrix<f64>> = nodes
        .iter()
        .map(|p| Ok(omega_q(model, p, fp)?.matrix))
        .collect::<Result<_>>()?;
    let mut graph = MetricGraph::new(nodes.len());
    let id = |f: usize, j: usize| f * res + j;
    for (i, p) in nodes.iter().enumerate() {
        graph.pos[i] = std::f64::consts::SQRT_2 * p.w[0];
    }
    let mut ring_half = vec![0.0f64; nb];
    let mut col_excess = vec![0.0f64; res];
    for f in 0..nb {
        for j in 0..res {
            let (a, b) = (id(f, j), id(f, (j + 1) % res));
            let tau = lattice_tangent(&m, h, &nodes[a], &nodes[b], j + 1 == res);
            let len = edge_length(
                h,
                eps,
                metric_quadratic(&forms[a], &tau),
                metric_quadratic(&forms[b], &tau),
            );
            graph.add_edge(a, b, len);
            ring_half[f] += 0.5 * len;
            if f + 1 < nb {
                let (a, b) = (id(f, j), id(f + 1, j));
                let tau = lattice_tangent(&m, h, &nodes[a], &nodes[b], false);
                let len = edge_length(
                    h,
                    eps,
                    metric_quadratic(&forms[a], &tau),
                    metric_quadratic(&forms[b], &tau),
                );
                graph.add_edge(a, b, len);
                col_excess[j] += len - (graph.pos[b] - graph.pos[a]).abs();
            }
        }
    }
    let max_half = ring_half.iter().cloned().fold(0.0f64, f64::max);
    let max_excess = col_excess.iter().cloned().fold(0.0f64, f64::max);
    graph.diameter_proxy = max_half + max_excess.max(0.0);
    let fiber_probes = [0, nb / 4, nb / 2, 3 * nb / 4, nb - 1];
    let angle_probes = [0, res / 4, res / 2, 3 * res / 4];
    for &f in &fiber_probes {
        for &j in &angle_probes {
            let node = id(f, j);
            if !graph.probes.contains(&node) {
                graph.probes.push(node);
            }
        }
    }
    Ok(graph)
}

/// Mesh for the cubic-pencil model at radius `h`: three vertex windows in
/// maximal charts stitched through three line tubes in edge charts, using
/// the exact coordinate conversions between charts. μ is the tropical weight
/// translated so it is constant past the chart seams; its cycle length is
/// reported through the graph and converges to the full skeleton length.
fn hesse_mesh(
    model: &Model,
    path: &AdmissiblePath,
    eps: f64,
    h: f64,
    grid: usize,
) -> Result<MetricGraph> {
    let q = path.q.value(h);
    let fp = FormParams::new(eps, q)?;
    let info = model.chart(ChartId::HesseVertex { a: 0 })?;
    let w_lo = -info.radius.ln() * h * 1.06;
    if 2.0 * w_lo >= 0.8 {
        return Err(Error::Domain(format!(
            "radius h = {h} too large for the distortion mesh (chart seam at w = {w_lo:.3})"
        )));
    }
    let nw = grid.max(16) / 2;
    let nth = (grid / 4).max(6);
    let nsig = (grid / 3).max(9);
    let nal = (grid / 4).max(6);
    let edge_len_std = std::f64::consts::SQRT_2 * (1.0 - 2.0 * w_lo);
    let cycle = 3.0 * edge_len_std;
    let sig_span = w_lo / h + 0.35;

    let window_nodes = 3 * nw * nth;
    let tube_nodes = 3 * nsig * nal;
    let mut graph = MetricGraph::new(window_nodes + tube_nodes);
    graph.cycle = Some(cycle);
    let wid = |a: usize, iw: usize, it: usize| (a * nw + iw) * nth + it;
    let tid = |b: usize, is: usize, ia: usize| window_nodes + (b * nsig + is) * nal + ia;

    // Window nodes: metric 2×2 on the (w-type, θ-type) fiber basis.
    let mut wg: Vec<DMatrix<f64>> = Vec::with_capacity(window_nodes);
    let mut wz: Vec<(C64, C64)> = Vec::with_capacity(window_nodes);
    for a in 0..3 {
        for iw in 0..nw {
            let x = w_lo + (1.0 - 2.0 * w_lo) * iw as f64 / (nw as f64 - 1.0);
            for it in 0..nth {
                let v = TAU * it as f64 / nth as f64;
                let p = HybridPoint::in_maximal_chart(
                    model,
                    ChartId::HesseVertex { a: a as u8 },
                    h,
                    &[1.0 - x, x],
                    &[v, -v],
                )?;
                let z = p.z_coords(&info)?;
                wz.push((z[0], z[1]));
                wg.push(metric_g(model, &p, fp)?.matrix);
                graph.pos[wid(a, iw, it)] =
                    a as f64 * edge_len_std + std::f64::consts::SQRT_2 * (x - w_lo);
            }
        }
    }

    // Tube nodes: metric 2×2 on (∂_{log|y|}, ∂_{arg y}); tube of line b is
    // anchored at the vertex chart of lines {(b+2)%3, b}.
    let mut tg: Vec<DMatrix<f64>> = Vec::with_capacity(tube_nodes);
    for b in 0..3 {
        let chart = ChartId::HesseEdge {
            line: b as u8,
            other: ((b + 2) % 3) as u8,
        };
        for is in 0..nsig {
            let sigma = -sig_span + 2.0 * sig_span * is as f64 / (nsig as f64 - 1.0);
            for ia in 0..nal {
                let alpha = TAU * ia as f64 / nal as f64;
                let p = HybridPoint {
                    chart,
                    t: h,
                    theta: 0.0,
                    w: vec![1.0],
                    angles: vec![0.0],
                    residual: vec![[sigma, alpha]],
                };
                tg.push(metric_g(model, &p, fp)?.matrix);
                graph.pos[tid(b, is, ia)] = b as f64 * edge_len_std;
            }
        }
    }

    let dx = (1.0 - 2.0 * w_lo) / (nw as f64 - 1.0);
    let dv = TAU / nth as f64;
    let dsig = 2.0 * sig_span / (nsig as f64 - 1.0);
    let dal = TAU / nal as f64;
    let mut max_half: f64 = 0.0;
    let mut max_excess: f64 = 0.0;
    let mut max_crossing: f64 = 0.0;
    let mut max_stitch: f64 = 0.0;
    // The radial and tube-crossing directions traverse an exponential
    // ambient boundary layer (|z| varies by orders of magnitude along one
    // edge), so their lengths are integrated with Gauss–Legendre nodes
    // instead of endpoint averages. This can only shorten an edge toward the
    // true segment length; the lower-band inequality is pointwise, so it is
    // preserved under any positive quadrature.
    let gl = quad::gauss_legendre_nodes(6);
    let window_g = |a: usize, x: f64, v: f64| -> Result<DMatrix<f64>> {
        let p = HybridPoint::in_maximal_chart(
            model,
            ChartId::HesseVertex { a: a as u8 },
            h,
            &[1.0 - x, x],
            &[v, -v],
        )?;
        Ok(metric_g(model, &p, fp)?.matrix)
    };
    let tube_g = |b: usize, sigma: f64, alpha: f64| -> Result<DMatrix<f64>> {
        let p = HybridPoint {
            chart: ChartId::HesseEdge {
                line: b as u8,
                other: ((b + 2) % 3) as u8,
            },
            t: h,
            theta: 0.0,
            w: vec![1.0],
            angles: vec![0.0],
            residual: vec![[sigma, alpha]],
        };
        Ok(metric_g(model, &p, fp)?.matrix)
    };

    // Window edges.
    for a in 0..3 {
        for iw in 0..nw {
            let mut half = 0.0;
            for it in 0..nth {
                let (na, nb) = (wid(a, iw, it), wid(a, iw, (it + 1) % nth));
                let ga = wg[na][(1, 1)] * dv * dv;
                let gb = wg[nb][(1, 1)] * dv * dv;
                let len = edge_length(h, eps, ga, gb);
                graph.add_edge(na, nb, len);
                half += 0.5 * len;
            }
            max_half = max_half.max(half);
        }
        for it in 0..nth {
            let v = TAU * it as f64 / nth as f64;
            let mut col = 0.0;
            for iw in 0..nw - 1 {
                let (na, nb) = (wid(a, iw, it), wid(a, iw + 1, it));
                let x0 = w_lo + dx * iw as f64;
                let (mid, halfw) = (x0 + 0.5 * dx, 0.5 * dx);
                let mut len = 0.0;
                for &(xi, wq) in &gl {
                    let g = window_g(a, mid + halfw * xi, v)?;
                    len += wq * halfw * (h / eps * g[(0, 0)].max(0.0)).sqrt();
                }
                graph.add_edge(na, nb, len);
                col += len;
            }
            max_excess = max_excess.max(col - edge_len_std);
        }
    }

    // Tube edges.
    for b in 0..3 {
        for is in 0..nsig {
            let mut half = 0.0;
            for ia in 0..nal {
                let (na, nb) = (tid(b, is, ia), tid(b, is, (ia + 1) % nal));
                let ga = tg[na - window_nodes][(1, 1)] * dal * dal;
                let gb = tg[nb - window_nodes][(1, 1)] * dal * dal;
                let len = edge_length(h, eps, ga, gb);
                graph.add_edge(na, nb, len);
                half += 0.5 * len;
            }
            max_half = max_half.max(half);
        }
        for ia in 0..nal {
            let alpha = TAU * ia as f64 / nal as f64;
            let mut crossing = 0.0;
            for is in 0..nsig - 1 {
                let (na, nb) = (tid(b, is, ia), tid(b, is + 1, ia));
                let s0 = -sig_span + dsig * is as f64;
                let (mid, halfs) = (s0 + 0.5 * dsig, 0.5 * dsig);
                let mut len = 0.0;
                for &(xi, wq) in &gl {
                    let g = tube_g(b, mid + halfs * xi, alpha)?;
                    len += wq * halfs * (h / eps * g[(0, 0)].max(0.0)).sqrt();
                }
                graph.add_edge(na, nb, len);
                crossing += len;
            }
            max_crossing = max_crossing.max(crossing);
        }
    }

    // Stitches between window boundary rows and the adjacent tubes, via the
    // exact chart conversions.
    let mut stitch =
        |graph: &mut MetricGraph, node: usize, b: usize, sigma: f64, alpha: f64| -> Result<()> {
            let is = ((sigma + sig_span) / dsig)
                .round()
                .clamp(0.0, nsig as f64 - 1.0) as usize;
            let ia = (alpha.rem_euclid(TAU) / dal).round() as usize % nal;
            let target = tid(b, is, ia);
            let dsig_gap = sigma - (-sig_span + dsig * is as f64);
            let mut dal_gap = (alpha - dal * ia as f64).rem_euclid(TAU);
            if dal_gap > TAU / 2.0 {
                dal_gap -= TAU;
            }
            let g = &tg[target - window_nodes];
            let quad = g[(0, 0)] * dsig_gap * dsig_gap
                + 2.0 * g[(0, 1)] * dsig_gap * dal_gap
                + g[(1, 1)] * dal_gap * dal_gap;
            let len = (h / eps * quad.max(0.0)).sqrt();
            graph.add_edge(node, target, len);
            max_stitch = max_stitch.max(len);
            Ok(())
        };
    for a in 0..3 {
        for it in 0..nth {
            // Toward the tube of line (a+1)%3 at the far window end: the
            // tube residual is the vertex-chart affine coordinate y_a.
            let node = wid(a, nw - 1, it);
            let (za, zb) = wz[node];
            let y = hesse_y_from_z(za, zb)?;
            stitch(&mut graph, node, (a + 1) % 3, y.norm().ln(), y.arg())?;
            // Toward the tube of line a at the near end: the tube residual
            // is exactly 1/z_b in this chart's plain coordinate.
            let node = wid(a, 0, it);
            let (_, zb) = wz[node];
            stitch(&mut graph, node, a, -zb.norm().ln(), -zb.arg())?;
        }
    }

    // Constructed paths cross at most three windows and two tubes, with an
    // angular alignment in each piece.
    graph.diameter_proxy =
        5.0 * max_half + 2.0 * max_crossing + 3.0 * max_excess.max(0.0) + 4.0 * max_stitch;
    for a in 0..3 {
        for iw in [0, nw / 2, nw - 1] {
            graph.probes.push(wid(a, iw, 0));
        }
        graph.probes.push(tid(a, nsig / 2, 0));
    }
    Ok(graph)
}

/// Distortion certificate along a sweep: compares mesh geodesic distances of
/// the rescaled metric with skeleton distances of the base map, and checks
/// the two-sided band at every radius.
pub fn gh_distortion(model: &Model, sweep: &Sweep, eps: f64, grid: usize) -> Result<Vec<GHRecord>> {
    if model.n() != 1 {
        return Err(Error::Domain(
            "the distortion mesh is implemented for curve models (n = 1)".into(),
        ));
    }
    let mut out = Vec::new();
    for &h in &sweep.hs {
        let graph = match model {
            Model::LocalSnc { .. } => snc_mesh(model, &sweep.path, eps, h, grid)?,
            Model::Hesse { .. } => hesse_mesh(model, &sweep.path, eps, h, grid)?,
        };
        out.push(graph.certify(h, sweep.path.q.value(h))?);
    }
    Ok(out)
}

/// Calibration diagnostic along a tame sweep, with the phase reference
/// pinned by [`phase_specialty`]'s rule at the first sweep point.
pub fn calibration_ratio(
    model: &Model,
    sweep: &Sweep,
    eps: f64,
    base_w: &[f64],
    resolution: usize,
) -> Result<Vec<CalibrationRecord>> {
    let report = phase_specialty(model, sweep, eps, base_w, resolution)?;
    let pinned = C64::new(report.pinned[0], report.pinned[1]);
    let mut out = Vec::new();
    for &h in &sweep.hs {
        let ratio = calibration_at(model, &sweep.path, eps, h, base_w, resolution, pinned)?;
        out.push(CalibrationRecord {
            h,
            q: sweep.path.q.value(h),
            ratio,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::QSchedule;

    const EPS: f64 = 0.25;

    fn snc_curve() -> Model {
        Model::local_snc(1, vec![1, 1], vec![1, 1]).unwrap()
    }

    fn tame() -> AdmissiblePath {
        AdmissiblePath::new(0.0, QSchedule::Square)
    }

    fn sweep4() -> Sweep {
        Sweep::geometric(tame(), 0.1, 0.001, 4).unwrap()
    }

    #[test]
    fn sweep_validation_and_schedule_parsing() {
        assert!(Sweep::new(tame(), vec![]).is_err());
        assert!(Sweep::new(tame(), vec![0.1, 0.1]).is_err());
        assert!(Sweep::new(tame(), vec![0.1, -0.01]).is_err());
        let hs = Sweep::parse_schedule("geometric:1e-1,1e-4,8").unwrap();
        assert_eq!(hs.len(), 8);
        assert!((hs[0] - 0.1).abs() < 1e-15);
        assert!((hs[7] - 1e-4).abs() < 1e-18);
        for pair in hs.windows(2) {
            assert!(pair[1] < pair[0]);
        }
        assert!(Sweep::parse_schedule("linear:1,2,3").is_err());
        assert!(Sweep::parse_schedule("geometric:1e-4,1e-1,8").is_err());
    }

    #[test]
    fn limit_gram_matches_the_rounded_weight_metric() {
        let g = limit_metric_gram(2, 1.0);
        assert_eq!(g[(0, 0)], 2.0);
        assert_eq!(g[(0, 1)], 1.0);
        assert_eq!(g[(1, 1)], 2.0);
        assert_eq!(g[(2, 2)], 0.0);
        assert_eq!(g[(0, 2)], 0.0);
        // Linear in ε.
        assert_eq!(&g * 2.0, limit_metric_gram(2, 2.0));
    }

    #[test]
    fn boundary_weight_tracks_the_flow_freeze() {
        let hesse = Model::hesse();
        assert_eq!(boundary_weight(&hesse, &tame(), EPS, 0.0).unwrap(), 0.0);
        // Tame schedules freeze at the chart seam, w ≈ 1.01·h.
        let w = boundary_weight(&hesse, &tame(), EPS, 0.1086).unwrap();
        assert!((w - 0.1097).abs() < 1e-3, "tame boundary weight {w}");
        // The hard path q ≡ 1 keeps the interface moving much further in.
        let hard = AdmissiblePath::new(0.0, QSchedule::Constant(1.0));
        let w = boundary_weight(&hesse, &hard, EPS, 0.1086).unwrap();
        assert!((w - 0.2096).abs() < 5e-3, "hard boundary weight {w}");
    }

    #[test]
    fn metric_residual_decays_and_theta_lengths_collapse() {
        for model in [snc_curve(), Model::hesse()] {
            let rs = metric_limit_check(&model, &sweep4(), EPS).unwrap();
            for pair in rs.windows(2) {
                assert!(pair[1].residual < pair[0].residual);
                assert!(pair[1].theta_length < pair[0].theta_length);
            }
            assert!(rs[3].residual < 1e-6, "final residual {}", rs[3].residual);
            // θ-circles of h·g shrink linearly in h (g♭ scales the θ-block
            // by t, so the probe length is √(2ε)·h up to model curvature).
            let rate = rs[3].theta_length / rs[0].theta_length;
            let expected = rs[3].h / rs[0].h;
            assert!(
                (rate - expected).abs() < 0.1 * expected,
                "θ collapse rate {rate}, expected ≈ {expected}"
            );
        }
    }

    #[test]
    fn eps_part_of_the_form_is_linear_in_eps_at_q_zero() {
        let model = snc_curve();
        let chart = model.maximal_charts()[0];
        let p =
            HybridPoint::in_maximal_chart(&model, chart, 0.05, &[0.3, 0.7], &[0.4, -0.1]).unwrap();
        let ambient = omega_q(&model, &p, FormParams::new(0.0, 0.0).unwrap())
            .unwrap()
            .matrix;
        let m1 = omega_q(&model, &p, FormParams::new(0.2, 0.0).unwrap())
            .unwrap()
            .matrix
            - &ambient;
        let m2 = omega_q(&model, &p, FormParams::new(0.4, 0.0).unwrap())
            .unwrap()
            .matrix
            - &ambient;
        assert!((m2 - m1 * 2.0).amax() < 1e-14);
    }

    #[test]
    fn volume_quadrature_is_consistent_across_cuts() {
        // Moving the vertex/tube split point changes both strata but must
        // leave the total fiber volume invariant; this exercises both
        // densities and the coordinate Jacobian between the charts.
        let hesse = Model::hesse();
        let t = 0.08;
        let totals: Vec<f64> = [0.12, 0.2, 0.3]
            .iter()
            .map(|&cut| {
                let (v, tube) = hesse_segment_integrals(&hesse, t, cut).unwrap();
                v + tube
            })
            .collect();
        for &total in &totals[1..] {
            assert!(
                (total - totals[0]).abs() < 1e-5 * totals[0].abs(),
                "totals {totals:?}"
            );
        }
    }

    #[test]
    fn volume_ratio_limits_and_monotonicity() {
        let hesse = Model::hesse();
        assert_eq!(hesse_volume_ratio(&hesse, 0.0, 0.1).unwrap(), 1.0);
        let sweep = Sweep::geometric(tame(), 0.1086, 0.02, 5).unwrap();
        let rs = volume_fraction(&hesse, &sweep, EPS).unwrap();
        for pair in rs.windows(2) {
            assert!(pair[1].ratio > pair[0].ratio - 1e-3);
        }
        assert!((rs[0].ratio - 0.7810).abs() < 5e-3, "ratio {}", rs[0].ratio);
        assert!(rs[4].ratio > 0.93, "ratio {}", rs[4].ratio);
        // A wider non-generic collar strictly shrinks the generic share.
        assert!(hesse_volume_ratio(&hesse, 0.1086, 0.3).unwrap() < rs[0].ratio);
        // The local model has no compact fibers to fill.
        assert!(volume_fraction(&snc_curve(), &sweep, EPS).is_err());
    }

    #[test]
    fn cplus_statistics_converge_to_the_flat_limit() {
        let bases = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
        for model in [snc_curve(), Model::hesse()] {
            let rs = ricci_flat_trend(&model, &sweep4(), EPS, &bases, 8).unwrap();
            let last = rs.last().unwrap();
            assert_eq!(last.h, 0.0);
            assert!(last.spread < 1e-10, "radius-zero spread {}", last.spread);
            assert!((last.mean - 2.0 * EPS).abs() < 1e-10, "mean {}", last.mean);
            assert!((last.limit - 2.0 * EPS).abs() < 1e-12);
            for pair in rs.windows(2) {
                assert!(pair[1].spread < pair[0].spread + 1e-12);
            }
        }
    }

    #[test]
    fn clamped_samples_are_flagged_non_generic() {
        // At this radius the tame interface trajectory is still frozen at
        // the chart seam, so a fiber seeded below it gets clamped onto the
        // interface and must be flagged; transported interior fibers can
        // never be flagged (the flow image of the interior stays generic).
        let hesse = Model::hesse();
        let sweep = Sweep::new(tame(), vec![0.1086]).unwrap();
        let bases = vec![vec![0.004, 0.996], vec![0.5, 0.5]];
        let rs = ricci_flat_trend(&hesse, &sweep, EPS, &bases, 4).unwrap();
        assert!(
            rs[0].excluded > 0,
            "expected clamped samples to be excluded"
        );
        let interior = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
        let rs = ricci_flat_trend(&hesse, &sweep, EPS, &interior, 4).unwrap();
        assert_eq!(rs[0].excluded, 0);
    }

    #[test]
    fn phase_pins_to_the_limit_and_windings_vanish() {
        for model in [snc_curve(), Model::hesse()] {
            let rep = phase_specialty(&model, &sweep4(), EPS, &[0.4, 0.6], 12).unwrap();
            assert!(rep.pinned[0].abs() < 1e-9, "pinned {:?}", rep.pinned);
            assert!((rep.pinned[1].abs() - 1.0).abs() < 1e-9);
            let mut sups = Vec::new();
            for r in &rep.records {
                assert_eq!(r.winding, 0);
                assert!(r.sup_deviation < 0.1, "sup {}", r.sup_deviation);
                sups.push(r.sup_deviation);
            }
            assert!(sups[3] <= sups[0] + 1e-12);
        }
        // Hard paths and higher-dimensional models are rejected.
        let hard = Sweep::new(
            AdmissiblePath::new(0.0, QSchedule::Constant(1.0)),
            vec![0.05],
        )
        .unwrap();
        assert!(phase_specialty(&snc_curve(), &hard, EPS, &[0.4, 0.6], 8).is_err());
        let surface = Model::local_snc(2, vec![1, 1, 1], vec![1, 1, 1]).unwrap();
        assert!(phase_specialty(&surface, &sweep4(), EPS, &[0.3, 0.3, 0.4], 4).is_err());
    }

    #[test]
    fn calibration_ratio_stays_pinched_at_one() {
        for model in [snc_curve(), Model::hesse()] {
            let rs = calibration_ratio(&model, &sweep4(), EPS, &[0.4, 0.6], 12).unwrap();
            for r in &rs {
                assert!(r.ratio >= 1.0 - 1e-9, "ratio {}", r.ratio);
                assert!(r.ratio <= 1.0 + 1e-6, "ratio {}", r.ratio);
            }
        }
        // Radius zero is the exact pointwise density identity.
        let pinned = C64::new(0.0, 1.0);
        let r = calibration_at(&snc_curve(), &tame(), EPS, 0.0, &[0.4, 0.6], 8, pinned).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn distortion_bands_hold_on_the_local_model() {
        let rs = gh_distortion(&snc_curve(), &sweep4(), EPS, 12).unwrap();
        for pair in rs.windows(2) {
            assert!(pair[1].max_distortion < pair[0].max_distortion);
        }
        assert!(
            rs[3].max_distortion < 0.05,
            "final {}",
            rs[3].max_distortion
        );
        for r in &rs {
            assert!(r.lower_violation < 1e-9, "lower {}", r.lower_violation);
            assert!(r.upper_violation < 1e-9, "upper {}", r.upper_violation);
        }
        let surface = Model::local_snc(2, vec![1, 1, 1], vec![1, 1, 1]).unwrap();
        assert!(gh_distortion(&surface, &sweep4(), EPS, 8).is_err());
    }

    #[test]
    fn distortion_bands_hold_on_the_proper_model() {
        let sweep = Sweep::new(tame(), vec![0.09, 0.03, 0.01]).unwrap();
        let rs = gh_distortion(&Model::hesse(), &sweep, EPS, 12).unwrap();
        for r in &rs {
            assert!(r.lower_violation < 1e-9, "lower {}", r.lower_violation);
            assert!(r.upper_violation < 1e-9, "upper {}", r.upper_violation);
        }
        assert!(rs[2].max_distortion < rs[1].max_distortion);
        assert!(rs[1].max_distortion < rs[0].max_distortion);
        assert!(rs[2].diameter_proxy < rs[0].diameter_proxy);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let hesse = Model::hesse();
        let sweep = Sweep::new(tame(), vec![0.06, 0.02]).unwrap();
        let a = volume_fraction(&hesse, &sweep, EPS).unwrap();
        let b = volume_fraction(&hesse, &sweep, EPS).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ratio.to_bits(), y.ratio.to_bits());
            assert_eq!(x.boundary_weight.to_bits(), y.boundary_weight.to_bits());
        }
        let bases = vec![vec![0.5, 0.5]];
        let a = ricci_flat_trend(&hesse, &sweep, EPS, &bases, 6).unwrap();
        let b = ricci_flat_trend(&hesse, &sweep, EPS, &bases, 6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
        }
    }
}
