//! The fiberwise Kähler family: the forms ω♯, ω♭, ω_q^ε, their potentials,
//! the induced fiber metrics, and the rescaled volume forms.
//!
//! Conventions, fixed globally:
//! * `d^c = i(∂ − ∂̄)`, so `d^c s_i = −dθ_i` and `d^c t = −t² dθ`;
//! * in a chart, `dv_i = m_i t_i² ds_i − η′(w_i) dw_i` and
//!   `dw_i = −m_i t ds_i + w_i t Σ_j m_j ds_j`;
//! * ω♯ = Σ dv_i∧dθ_i, ω♭ = −Σ m_i dw_i∧dθ_i (the exterior derivative of
//!   λ♭ = −Σ m_i ŵ_i dθ_i);
//! * volume orientation is chosen so that the fiber volume density is
//!   positive; signs of top forms are absorbed into frame orientation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hybrid::{
    basic_functions, hesse_y_from_z, hesse_yb_on_edge, ChartId, ChartInfo, HybridPoint, Model, C64,
};
use crate::quad;
use crate::transfer::{eta, eta_prime, zeta};

/// Parameters of the form family ω_q^ε.
#[derive(Clone, Copy, Debug)]
pub struct FormParams {
    pub eps: f64,
    pub q: f64,
}

impl FormParams {
    pub fn new(eps: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("q = {q} outside [0,1]")));
        }
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("ε = {eps} must be non-negative")));
        }
        Ok(FormParams { eps, q })
    }
}

/// Tangent basis in which a form matrix is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// At `t > 0`: real log coordinates, interleaved `(∂s_c, ∂θ_c)` per
    /// complex chart coordinate, divisor coordinates first.
    LogZ,
    /// At `t = 0` in a maximal chart: `(∂t, ∂w_1..∂w_k, ∂θ_1..∂θ_k)`;
    /// admissible vectors satisfy Σ dw_i = 0.
    HybridZero,
}

/// A 2-form evaluated at a point, as an antisymmetric matrix.
#[derive(Clone, Debug)]
pub struct FormValue {
    pub point: HybridPoint,
    pub basis: BasisKind,
    pub matrix: DMatrix<f64>,
}

fn antisymmetrize_entry(m: &mut DMatrix<f64>, i: usize, j: usize, v: f64) {
    m[(i, j)] += v;
    m[(j, i)] -= v;
}

/// Per-point divisor-coordinate data shared by the form constructors.
struct ChartData {
    info: ChartInfo,
    m: Vec<f64>,
    t: f64,
    w: Vec<f64>,
    t_i: Option<Vec<f64>>,
}

fn chart_data(model: &Model, p: &HybridPoint) -> Result<ChartData> {
    let info = model.chart(p.chart)?;
    let m = info.multiplicities();
    if p.t > 0.0 {
        let rec = basic_functions(model, p)?;
        Ok(ChartData {
            info,
            m,
            t: p.t,
            w: rec.w,
            t_i: Some(rec.t_i),
        })
    } else {
        Ok(ChartData {
            info,
            m,
            t: 0.0,
            w: p.w.clone(),
            t_i: None,
        })
    }
}

fn log_z_dim(info: &ChartInfo) -> usize {
    2 * info.dim()
}

fn hybrid_zero_dim(info: &ChartInfo) -> usize {
    1 + 2 * info.k()
}

fn eta_primes(w: &[f64]) -> Result<Vec<f64>> {
    w.iter()
        .map(|&wi| {
            if wi <= 0.0 {
                Err(Error::SingularCoordinate(format!(
                    "η′(w) required at w = {wi}; v_i is singular where w_i = 0"
                )))
            } else {
                Ok(eta_prime(wi))
            }
        })
        .collect()
}

/// Coefficient matrix of dv in ds: `dv_i = Σ_j A[i][j] ds_j` at `t > 0`.
fn dv_coefficients(d: &ChartData) -> Result<DMatrix<f64>> {
    let k = d.info.k();
    let t_i = d.t_i.as_ref().expect("t > 0");
    let ep = eta_primes(&d.w)?;
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let eta_i = eta(d.w[i]);
        for j in 0..k {
            let mut v = -eta_i * eta_i * d.t * d.m[j];
            if i == j {
                v += d.m[i] * t_i[i] * t_i[i] + ep[i] * d.m[i] * d.t;
            }
            a[(i, j)] = v;
        }
    }
    Ok(a)
}

/// Coefficient matrix of dw in ds: `dw_i = Σ_j B[i][j] ds_j` at `t > 0`.
fn dw_coefficients(d: &ChartData) -> DMatrix<f64> {
    let k = d.info.k();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut v = d.w[i] * d.t * d.m[j];
            if i == j {
                v -= d.m[i] * d.t;
            }
            b[(i, j)] = v;
        }
    }
    b
}

/// The form ω♯ = Σ dv_i ∧ dθ_i.
pub fn omega_sharp(model: &Model, p: &HybridPoint) -> Result<FormValue> {
    let d = chart_data(model, p)?;
    let k = d.info.k();
    if p.t > 0.0 {
        let a = dv_coefficients(&d)?;
        let mut m = DMatrix::zeros(log_z_dim(&d.info), log_z_dim(&d.info));
        for i in 0..k {
            for j in 0..k {
                // coefficient of ds_j ∧ dθ_i
                antisymmetrize_entry(&mut m, 2 * j, 2 * i + 1, a[(i, j)]);
            }
        }
        Ok(FormValue {
            point: p.clone(),
            basis: BasisKind::LogZ,
            matrix: m,
        })
    } else {
        let ep = eta_primes(&d.w)?;
        let mut m = DMatrix::zeros(hybrid_zero_dim(&d.info), hybrid_zero_dim(&d.info));
        for i in 0..k {
            // dv_i = (1/w_i)dt − η′(w_i)dw_i at t = 0.
            antisymmetrize_entry(&mut m, 0, k + 1 + i, 1.0 / d.w[i]);
            antisymmetrize_entry(&mut m, 1 + i, k + 1 + i, -ep[i]);
        }
        Ok(FormValue {
            point: p.clone(),
            basis: BasisKind::HybridZero,
            matrix: m,
        })
    }
}

/// The form ω♭ = −Σ m_i dw_i ∧ dθ_i.
pub fn omega_flat(model: &Model, p: &HybridPoint) -> Result<FormValue> {
    let d = chart_data(model, p)?;
    let k = d.info.k();
    if p.t > 0.0 {
        let b = dw_coefficients(&d);
        let mut m = DMatrix::zeros(log_z_dim(&d.info), log_z_dim(&d.info));
        for i in 0..k {
            for j in 0..k {
                antisymmetrize_entry(&mut m, 2 * j, 2 * i + 1, -d.m[i] * b[(i, j)]);
            }
        }
        Ok(FormValue {
            point: p.clone(),
            basis: BasisKind::LogZ,
            matrix: m,
        })
    } else {
        let mut m = DMatrix::zeros(hybrid_zero_dim(&d.info), hybrid_zero_dim(&d.info));
        for i in 0..k {
            antisymmetrize_entry(&mut m, 1 + i, k + 1 + i, -d.m[i]);
        }
        Ok(FormValue {
            point: p.clone(),
            basis: BasisKind::HybridZero,
            matrix: m,
        })
    }
}

// ---------------------------------------------------------------------------
// The ambient Kähler form π*ω_X
// ---------------------------------------------------------------------------

/// Fubini–Study hermitian metric matrix in an affine chart (the matrix of
/// second mixed partials of log(1 + |y|²)).
fn fubini_study_h(y: &[C64; 2]) -> [[C64; 2]; 2] {
    let norm2 = 1.0 + y[0].norm_sqr() + y[1].norm_sqr();
    let denom = norm2 * norm2;
    let mut h = [[C64::new(0.0, 0.0); 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            let mut v = -y[j].conj() * y[k];
            if j == k {
                v += norm2;
            }
            h[j][k] = v / denom;
        }
    }
    h
}

/// Affine coordinates and complex Jacobian ∂y/∂(chart coords) for the
/// cubic-pencil charts.
fn hesse_affine_data(p: &HybridPoint, info: &ChartInfo) -> Result<([C64; 2], [[C64; 2]; 2])> {
    match p.chart {
        ChartId::HesseVertex { .. } => {
            let z = p.z_coords(info)?;
            let y1 = hesse_y_from_z(z[0], z[1])?;
            let y2 = z[1];
            let u = y1.powu(3) + y2.powu(3) + 1.0;
            let d = u - 3.0 * y1.powu(3);
            if d.norm() < 1e-12 {
                return Err(Error::SingularCoordinate(
                    "vertex chart degenerates (u = 3y₁³)".into(),
                ));
            }
            let jac = [
                [u * u / d, 3.0 * y1 * y2.powu(2) / d],
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            ];
            Ok(([y1, y2], jac))
        }
        ChartId::HesseEdge { .. } => {
            // Chart coordinates in order (f, ζ_res) = (divisor, residual).
            let f = C64::from_polar((-1.0 / p.t).exp(), p.angles[0]);
            let y1 = C64::from_polar(p.residual[0][0].exp(), p.residual[0][1]);
            let y2 = hesse_yb_on_edge(y1, f)?;
            let u = y1.powu(3) + y2.powu(3) + 1.0;
            let fy1 = y2 * (u - 3.0 * y1.powu(3)) / (u * u);
            let fy2 = y1 * (u - 3.0 * y2.powu(3)) / (u * u);
            if fy2.norm() < 1e-12 {
                return Err(Error::SingularCoordinate(
                    "edge chart degenerates (∂f/∂y₂ = 0)".into(),
                ));
            }
            let jac = [
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
                [C64::new(1.0, 0.0) / fy2, -fy1 / fy2],
            ];
            Ok(([y1, y2], jac))
        }
        ChartId::LocalSnc => Err(Error::Domain("not a cubic-pencil chart".into())),
    }
}

/// The ambient Kähler form pulled back to the chart, in the active basis.
/// LocalSnc uses the euclidean form of C^{n+1}; the cubic-pencil model uses
/// the Fubini–Study form of the ambient plane. At `t = 0` over a point
/// stratum the pullback vanishes on all hybrid directions.
pub fn omega_ambient(model: &Model, p: &HybridPoint) -> Result<FormValue> {
    let info = model.chart(p.chart)?;
    if p.t == 0.0 {
        let dim = hybrid_zero_dim(&info);
        return Ok(FormValue {
            point: p.clone(),
            basis: BasisKind::HybridZero,
            matrix: DMatrix::zeros(dim, dim),
        });
    }
    let dim = log_z_dim(&info);
    let mut m = DMatrix::zeros(dim, dim);
    match model {
        Model::LocalSnc { .. } => {
            let rec = basic_functions(model, p)?;
            for (c, r) in rec.r.iter().enumerate() {
                antisymmetrize_entry(&mut m, 2 * c, 2 * c + 1, r * r);
            }
        }
        Model::Hesse { .. } => {
            let (y, jac) = hesse_affine_data(p, &info)?;
            let h = fubini_study_h(&y);
            // Complex chart-coordinate values, divisor coordinates first.
            let zc: Vec<C64> = match p.chart {
                ChartId::HesseVertex { .. } => p.z_coords(&info)?,
                ChartId::HesseEdge { .. } => vec![
                    C64::from_polar((-1.0 / p.t).exp(), p.angles[0]),
                    C64::from_polar(p.residual[0][0].exp(), p.residual[0][1]),
                ],
                ChartId::LocalSnc => unreachable!(),
            };
            // Holomorphic tangent vectors of the 2d real basis elements,
            // pushed to affine coordinates.
            let d = info.dim();
            let mut pushed: Vec<[C64; 2]> = Vec::with_capacity(2 * d);
            for c in 0..d {
                for im in [false, true] {
                    let val = if im {
                        zc[c] * C64::new(0.0, 1.0)
                    } else {
                        zc[c]
                    };
                    let mut v = [C64::new(0.0, 0.0); 2];
                    for row in 0..2 {
                        v[row] = jac[row][c] * val;
                    }
                    pushed.push(v);
                }
            }
            for a in 0..dim {
                for b in (a + 1)..dim {
                    let mut s = C64::new(0.0, 0.0);
                    for j in 0..2 {
                        for k in 0..2 {
                            s += h[j][k] * pushed[a][j] * pushed[b][k].conj();
                        }
                    }
                    antisymmetrize_entry(&mut m, a, b, -s.im);
                }
            }
        }
    }
    Ok(FormValue {
        point: p.clone(),
        basis: BasisKind::LogZ,
        matrix: m,
    })
}

/// The family form ω_q^ε = π*ω_X + ε(q ω♯ + (1−q) ω♭).
pub fn omega_q(model: &Model, p: &HybridPoint, fp: FormParams) -> Result<FormValue> {
    let ambient = omega_ambient(model, p)?;
    let flat = omega_flat(model, p)?;
    // ω♯ is singular where some w_i = 0; it is only needed when q > 0.
    let mut matrix = ambient.matrix.clone();
    if fp.q > 0.0 {
        let sharp = omega_sharp(model, p)?;
        matrix += (fp.eps * fp.q) * sharp.matrix;
    }
    matrix += (fp.eps * (1.0 - fp.q)) * flat.matrix;
    Ok(FormValue {
        point: p.clone(),
        basis: ambient.basis,
        matrix,
    })
}

// ---------------------------------------------------------------------------
// Fiber bases, J, metrics
// ---------------------------------------------------------------------------

/// A basis of the fiber tangent space (the fibers of the extended family):
/// `n` w-type vectors followed by `n` θ-type vectors in maximal charts, or
/// the residual pair in a half-edge chart.
pub fn fiber_basis(model: &Model, p: &HybridPoint) -> Result<(Vec<DVector<f64>>, BasisKind)> {
    let info = model.chart(p.chart)?;
    let k = info.k();
    let m = info.multiplicities();
    if p.t > 0.0 {
        let dim = log_z_dim(&info);
        let mut out = Vec::new();
        // Divisor-coordinate directions tangent to {|f| = const, θ = const}.
        for j in 0..k.saturating_sub(1) {
            let mut v = DVector::zeros(dim);
            v[2 * j] = -1.0 / (m[j] * p.t);
            v[2 * (k - 1)] = 1.0 / (m[k - 1] * p.t);
            out.push(v);
        }
        for c in k..info.dim() {
            let mut v = DVector::zeros(dim);
            v[2 * c] = 1.0;
            out.push(v);
        }
        for j in 0..k.saturating_sub(1) {
            let mut v = DVector::zeros(dim);
            v[2 * j + 1] = 1.0;
            v[2 * (k - 1) + 1] = -m[j] / m[k - 1];
            out.push(v);
        }
        for c in k..info.dim() {
            let mut v = DVector::zeros(dim);
            v[2 * c + 1] = 1.0;
            out.push(v);
        }
        Ok((out, BasisKind::LogZ))
    } else {
        if info.residual_dim != 0 {
            return Err(Error::Domain(
                "radius-zero fiber bases are built in maximal charts".into(),
            ));
        }
        let dim = hybrid_zero_dim(&info);
        let mut out = Vec::new();
        for j in 0..k - 1 {
            let mut v = DVector::zeros(dim);
            v[1 + j] = 1.0;
            v[1 + (k - 1)] = -1.0;
            out.push(v);
        }
        for j in 0..k - 1 {
            let mut v = DVector::zeros(dim);
            v[k + 1 + j] = 1.0;
            v[k + 1 + (k - 1)] = -m[j] / m[k - 1];
            out.push(v);
        }
        Ok((out, BasisKind::HybridZero))
    }
}

/// The θ-type generators of a radius-zero torus fiber (the lattice
/// directions of {w = const, Σ m_i θ_i = const}).
pub fn torus_basis(model: &Model, p: &HybridPoint) -> Result<Vec<DVector<f64>>> {
    if p.t != 0.0 {
        return Err(Error::Domain("torus bases live at radius zero".into()));
    }
    let (basis, _) = fiber_basis(model, p)?;
    let n = basis.len() / 2;
    Ok(basis.into_iter().skip(n).collect())
}

/// Applies the complex structure to a LogZ-basis vector: J∂s_c = ∂θ_c.
pub fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for c in 0..v.len() / 2 {
        out[2 * c] = -v[2 * c + 1];
        out[2 * c + 1] = v[2 * c];
    }
    out
}

/// Restricts a form matrix to a list of tangent vectors.
pub fn restrict_form(form: &FormValue, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let n = vectors.len();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            out[(a, b)] = (vectors[a].transpose() * &form.matrix * &vectors[b])[(0, 0)];
        }
    }
    out
}

/// Fiber metric report: g = ω_q(·, J·) on a fiber basis.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
    pub symmetry_residual: f64,
}

/// The fiberwise metric of ω_q^ε at `t > 0`, with its eigenvalue report.
pub fn metric_g(model: &Model, p: &HybridPoint, fp: FormParams) -> Result<MetricReport> {
    if p.t <= 0.0 {
        return Err(Error::Domain(
            "the fiber metric needs t > 0 (J is defined off the boundary)".into(),
        ));
    }
    let form = omega_q(model, p, fp)?;
    let (basis, _) = fiber_basis(model, p)?;
    let n = basis.len();
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let jv = apply_j(&basis[b]);
            g[(a, b)] = (basis[a].transpose() * &form.matrix * jv)[(0, 0)];
        }
    }
    let scale = g.amax().max(1.0);
    let sym_res = (&g - g.transpose()).amax() / scale;
    if sym_res > 1e-10 {
        return Err(Error::Numerical(format!(
            "fiber metric not symmetric (residual {sym_res:.3e}): J-compatibility violated at {:?}",
            p.chart
        )));
    }
    let sym = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_eigenvalue = eigenvalues[0];
    Ok(MetricReport {
        matrix: sym,
        min_eigenvalue,
        positive_definite: min_eigenvalue > 0.0,
        eigenvalues,
        symmetry_residual: sym_res,
    })
}

// ---------------------------------------------------------------------------
// Pairing identity at radius zero
// ---------------------------------------------------------------------------

/// Max residual of the radius-zero identity ω_q(·, ∂θ_i) = ε c_i dv̂_i with
/// c_i = q + (1−q) m_i ζ(u_i), as forms on the boundary (dt dropped).
pub fn pairing_check(model: &Model, p: &HybridPoint, fp: FormParams) -> Result<f64> {
    if p.t != 0.0 {
        return Err(Error::Domain(
            "the pairing identity is a radius-zero statement".into(),
        ));
    }
    let info = model.chart(p.chart)?;
    let k = info.k();
    let m = info.multiplicities();
    let form = omega_q(model, p, fp)?;
    let ep = eta_primes(&p.w)?;
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let c_i = fp.q + (1.0 - fp.q) * m[i] * zeta(eta(p.w[i]));
        // Compare on all boundary-tangent slots: w-slots 1..=k, θ-slots.
        for slot in 1..hybrid_zero_dim(&info) {
            let lhs = form.matrix[(slot, k + 1 + i)];
            let rhs = if slot == 1 + i {
                -fp.eps * c_i * ep[i]
            } else {
                0.0
            };
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

/// The potential φ♯ = Σ_i ∫_{ŝ_i}^{−1} v̌_i(s, t) ds with
/// v̌_i = −(m_i s)⁻¹ − η(−m_i s t); fiberwise λ♯ = d^cφ♯.
///
/// The −1/(m_i s) part integrates exactly to log(−ŝ_i)/m_i; only the η part
/// needs quadrature, after the substitution x = −m_i s t:
/// φ_i = log(−ŝ_i)/m_i − (1/(m_i t)) ∫_{m_i t}^{w_i} η(x) dx.
pub fn potential_sharp(model: &Model, p: &HybridPoint, tol: f64) -> Result<f64> {
    let info = model.chart(p.chart)?;
    let rec = basic_functions(model, p)?;
    let mut phi = 0.0;
    for (i, c) in info.components.iter().enumerate() {
        let mi = f64::from(c.m);
        phi += (-rec.s[i]).ln() / mi
            - quad::integrate(eta, mi * p.t, rec.w[i].min(1.0), tol)? / (mi * p.t);
    }
    Ok(phi)
}

/// The closed-form potential φ♭ = −(1/2t) Σ ŵ_i², together with the
/// finite-difference residual of the identity λ♭ = d^cφ♭ − ½Σŵ_i² dθ.
pub fn potential_flat(model: &Model, p: &HybridPoint) -> Result<(f64, f64)> {
    let info = model.chart(p.chart)?;
    let m = info.multiplicities();
    let rec = basic_functions(model, p)?;
    let phi = -rec.w.iter().map(|w| w * w).sum::<f64>() / (2.0 * p.t);

    // φ♭ as a function of the log-radii, for finite differences.
    let phi_of_s = |s: &[f64]| {
        let l: f64 = s.iter().zip(&m).map(|(s, m)| m * s).sum();
        let t = -1.0 / l;
        let sum_w2: f64 = s
            .iter()
            .zip(&m)
            .map(|(s, m)| {
                let w = -t * m * s;
                w * w
            })
            .sum();
        -sum_w2 / (2.0 * t)
    };
    let h = 1e-5;
    let sum_w2: f64 = rec.w.iter().map(|w| w * w).sum();
    let mut residual: f64 = 0.0;
    for i in 0..info.k() {
        let mut sp = rec.s.clone();
        sp[i] += h;
        let mut sm = rec.s.clone();
        sm[i] -= h;
        let dphi_dsi = (phi_of_s(&sp) - phi_of_s(&sm)) / (2.0 * h);
        // dθ_i-component: −m_i ŵ_i = −∂φ/∂s_i − ½ Σŵ² m_i.
        let lhs = -m[i] * rec.w[i];
        let rhs = -dphi_dsi - 0.5 * sum_w2 * m[i];
        residual = residual.max((lhs - rhs).abs());
    }
    Ok((phi, residual))
}

/// Finite-difference check of the fiberwise identity dd^cφ♯ = ω♯ at a point
/// of a maximal chart with `t > 0`: returns the max-norm mismatch between
/// the central-difference Hessian form of φ♯ and ω♯, both restricted to the
/// fiber basis. `fd_step` is the log-radius step (1e-4 is a good default).
pub fn ddc_sharp_check(model: &Model, p: &HybridPoint, fd_step: f64) -> Result<f64> {
    let info = model.chart(p.chart)?;
    if info.residual_dim != 0 {
        return Err(Error::Domain("dd^c check runs in maximal charts".into()));
    }
    if p.t <= 0.0 {
        return Err(Error::Domain("dd^c check needs t > 0".into()));
    }
    let k = info.k();
    let m = info.multiplicities();
    let rec = basic_functions(model, p)?;
    let phi_of_s = |s: &[f64]| -> Result<f64> {
        let l: f64 = s.iter().zip(&m).map(|(s, m)| m * s).sum();
        let t = -1.0 / l;
        let w: Vec<f64> = s.iter().zip(&m).map(|(s, m)| m * s / l).collect();
        let q = HybridPoint {
            chart: p.chart,
            t,
            theta: p.theta,
            w,
            angles: p.angles.clone(),
            residual: Vec::new(),
        };
        potential_sharp(model, &q, 1e-14)
    };
    let h = fd_step;
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let eval = |si: f64, sj: f64| -> Result<f64> {
                let mut s = rec.s.clone();
                s[i] += si;
                s[j] += sj;
                phi_of_s(&s)
            };
            hess[(i, j)] =
                (eval(h, h)? - eval(h, -h)? - eval(-h, h)? + eval(-h, -h)?) / (4.0 * h * h);
        }
    }
    // dd^cφ = −Σ_{ij} H_{ij} ds_j∧dθ_i in the interleaved LogZ basis.
    let mut fd = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            antisymmetrize_entry(&mut fd, 2 * j, 2 * i + 1, -hess[(i, j)]);
        }
    }
    let sharp = omega_sharp(model, p)?;
    let (fiber, _) = fiber_basis(model, p)?;
    let fd_fiber = restrict_form(
        &FormValue {
            point: p.clone(),
            basis: BasisKind::LogZ,
            matrix: fd,
        },
        &fiber,
    );
    let exact_fiber = restrict_form(&sharp, &fiber);
    Ok((&fd_fiber - &exact_fiber).amax())
}

// ---------------------------------------------------------------------------
// Volume forms
// ---------------------------------------------------------------------------

/// Rescaled holomorphic volume data at a point of a maximal chart.
#[derive(Clone, Debug)]
pub struct VolumeValue {
    /// Ω_new (an n-form) evaluated on the first n frame vectors.
    pub omega_new: C64,
    /// vol_new (the rescaled volume 2n-form) evaluated on the full frame.
    pub vol_new: f64,
    /// The model constant c₀ (value of the scalar factor at t = 0).
    pub c0: C64,
}

/// Minimal discrepancy ratio λ = min ν_i/m_i of the model.
fn lambda_min(model: &Model) -> f64 {
    match model {
        Model::LocalSnc { m, nu, .. } => m
            .iter()
            .zip(nu)
            .map(|(m, nu)| f64::from(*nu) / f64::from(*m))
            .fold(f64::INFINITY, f64::min),
        Model::Hesse { .. } => 1.0,
    }
}

/// The chart factor c(z) of the model's holomorphic volume form Θ.
fn c_factor(model: &Model, p: &HybridPoint, info: &ChartInfo) -> Result<C64> {
    match model {
        Model::LocalSnc { .. } => Ok(C64::new(1.0, 0.0)),
        Model::Hesse { .. } => {
            if p.t == 0.0 {
                // Vertex limit: u = 1, y = 0 → c₀ = −1 in every vertex chart.
                return Ok(C64::new(-1.0, 0.0));
            }
            match p.chart {
                ChartId::HesseVertex { .. } => {
                    let z = p.z_coords(info)?;
                    let y1 = hesse_y_from_z(z[0], z[1])?;
                    let y2 = z[1];
                    let u = y1.powu(3) + y2.powu(3) + 1.0;
                    Ok(-u / (u - 3.0 * y1.powu(3)))
                }
                _ => Err(Error::Domain(
                    "volume forms are evaluated in maximal charts".into(),
                )),
            }
        }
    }
}

/// The scalar factor `a` with Ω_new = a·⋀_{j≥2}(dw_j − t m_j i dθ_j)
/// (orientation sign absorbed): a = c(z)·Πz_i^{ν_i}·f^{−λ} / Π m_i.
fn omega_scalar(model: &Model, p: &HybridPoint, info: &ChartInfo) -> Result<C64> {
    let c = c_factor(model, p, info)?;
    let lambda = lambda_min(model);
    let prod_m: f64 = info.components.iter().map(|c| f64::from(c.m)).product();
    // log(Πz^ν f^{−λ}) = Σ(ν_i − λ m_i)(s_i + iθ_i); at t = 0 the real part
    // is 0 on essential w-support and −∞ otherwise.
    let mut log_re = 0.0;
    let mut log_im = 0.0;
    for (i, comp) in info.components.iter().enumerate() {
        let coeff = f64::from(comp.nu) - lambda * f64::from(comp.m);
        if coeff != 0.0 {
            if p.t == 0.0 {
                if p.w[i] > 0.0 {
                    return Ok(C64::new(0.0, 0.0)); // vanishes toward non-essential strata
                }
            } else {
                log_re += coeff * (-p.w[i] / (f64::from(comp.m) * p.t));
            }
        }
        log_im += coeff * p.angles[i];
    }
    Ok(c * C64::new(log_re, log_im).exp() / prod_m)
}

/// The coordinate differential dw_i applied to a tangent vector.
fn eval_dw(
    basis: BasisKind,
    p: &HybridPoint,
    m: &[f64],
    k: usize,
    v: &DVector<f64>,
    i: usize,
) -> f64 {
    match basis {
        BasisKind::HybridZero => v[1 + i],
        BasisKind::LogZ => {
            // dw_i = −m_i t ds_i + w_i t Σ m_j ds_j
            let mut x = -m[i] * p.t * v[2 * i];
            for j in 0..k {
                x += p.w[i] * p.t * m[j] * v[2 * j];
            }
            x
        }
    }
}

fn eval_dtheta(basis: BasisKind, k: usize, v: &DVector<f64>, i: usize) -> f64 {
    match basis {
        BasisKind::HybridZero => v[k + 1 + i],
        BasisKind::LogZ => v[2 * i + 1],
    }
}

/// Evaluates Ω_new on the first n vectors of a 2n fiber frame and vol_new on
/// the whole frame.
pub fn volume_forms(
    model: &Model,
    p: &HybridPoint,
    frame: &[DVector<f64>],
    basis: BasisKind,
) -> Result<VolumeValue> {
    let info = model.chart(p.chart)?;
    let k = info.k();
    let n = model.n();
    if k != n + 1 || info.residual_dim != 0 {
        return Err(Error::Domain(
            "volume forms are evaluated in maximal charts".into(),
        ));
    }
    if frame.len() != 2 * n {
        return Err(Error::Domain(format!(
            "fiber frame must have {} vectors, got {}",
            2 * n,
            frame.len()
        )));
    }
    let m = info.multiplicities();
    let a = omega_scalar(model, p, &info)?;
    let c0 = match model {
        Model::LocalSnc { .. } => C64::new(1.0, 0.0),
        Model::Hesse { .. } => C64::new(-1.0, 0.0),
    } / m.iter().product::<f64>();

    // Complex factor forms φ_j = dw_j − t m_j i dθ_j, j = 2..k, applied to
    // the first n frame vectors; Ω_new(first n) = a · det.
    let mut det = DMatrix::<C64>::zeros(n, n);
    for (row, j) in (1..k).enumerate() {
        for (col, v) in frame.iter().take(n).enumerate() {
            det[(row, col)] = C64::new(
                eval_dw(basis, p, &m, k, v, j),
                -p.t * m[j] * eval_dtheta(basis, k, v, j),
            );
        }
    }
    let omega_new = a * det.determinant();

    // vol_new = |a|²·Π_{j≥2} m_j · ⋀_{j≥2}(dw_j∧dθ_j), on the full frame.
    let mut pairing = DMatrix::zeros(2 * n, 2 * n);
    for (row, j) in (1..k).enumerate() {
        for (col, v) in frame.iter().enumerate() {
            pairing[(2 * row, col)] = eval_dw(basis, p, &m, k, v, j);
            pairing[(2 * row + 1, col)] = eval_dtheta(basis, k, v, j);
        }
    }
    let pairing_det = pairing.determinant();
    if a.norm() > 0.0 && pairing_det == 0.0 {
        return Err(Error::DegenerateForm(
            "frame is not a basis of the fiber tangent space".into(),
        ));
    }
    let prod_m_rest: f64 = m.iter().skip(1).product();
    let vol_new = a.norm_sqr() * prod_m_rest * pairing_det;
    Ok(VolumeValue {
        omega_new,
        vol_new,
        c0,
    })
}

/// Pfaffian of an antisymmetric matrix (small sizes, recursive expansion).
pub fn pfaffian(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    debug_assert_eq!(n % 2, 0);
    if n == 0 {
        return 1.0;
    }
    if n == 2 {
        return m[(0, 1)];
    }
    let mut acc = 0.0;
    let mut sign = 1.0;
    for j in 1..n {
        if m[(0, j)] != 0.0 {
            let keep: Vec<usize> = (1..n).filter(|&x| x != j).collect();
            let mut sub = DMatrix::zeros(n - 2, n - 2);
            for (a, &ra) in keep.iter().enumerate() {
                for (b, &rb) in keep.iter().enumerate() {
                    sub[(a, b)] = m[(ra, rb)];
                }
            }
            acc += sign * m[(0, j)] * pfaffian(&sub);
        }
        sign = -sign;
    }
    acc
}

/// The density ratio c₊ = (1/n!) ω_q^n / vol_new on the fiber.
pub fn cplus(model: &Model, p: &HybridPoint, fp: FormParams) -> Result<f64> {
    let form = omega_q(model, p, fp)?;
    let (basis_vecs, basis) = fiber_basis(model, p)?;
    let fiber_form = restrict_form(&form, &basis_vecs);
    let pf = pfaffian(&fiber_form);
    let vv = volume_forms(model, p, &basis_vecs, basis)?;
    if vv.vol_new == 0.0 {
        return Err(Error::Domain(
            "vol_new vanishes here (non-generic point); c₊ is undefined".into(),
        ));
    }
    Ok((pf / vv.vol_new).abs())
}

// ---------------------------------------------------------------------------
// ε₀ calibration
// ---------------------------------------------------------------------------

/// Result of the positivity calibration of the family parameter ε.
///
/// In the chart-exact models implemented here the fiberwise metric is
/// positive definite for every ε: on fiber-tangent vectors the m-weighted
/// ds-components sum to zero, which annihilates the only non-positive
/// (rank-one) parts of the ω♯/ω♭ coefficient matrices, leaving positive
/// Gram blocks. The scan therefore typically finds no failing ε and falls
/// back to a documented default.
#[derive(Clone, Debug)]
pub struct EpsCalibration {
    /// Largest tested ε at which the fiber metric stays positive definite
    /// on the calibration grid (with a 1% safety margin applied), or the
    /// default when no failure exists below the scan cap.
    pub eps0: f64,
    /// A recorded ε at which positivity fails, with the witnessing sample;
    /// `None` when positivity holds up to the scan cap.
    pub failing_eps: Option<f64>,
    pub failing_sample: Option<String>,
}

/// Default ε₀ reported when the positivity scan finds no failure.
pub const DEFAULT_EPS0: f64 = 1.0;

fn calibration_samples(model: &Model) -> Vec<HybridPoint> {
    let mut samples = Vec::new();
    let charts = model.maximal_charts();
    let chart = charts[0];
    let info = model.chart(chart).unwrap();
    let k = info.k();
    let m = info.multiplicities();
    let margin = -info.radius.ln() * 1.02; // w_i ≥ margin·m_i·t keeps r_i < radius
    for &t in &[1e-3, 0.01, 0.05, 0.1] {
        // Interior and near-boundary tropical coordinates.
        let mut weight_sets: Vec<Vec<f64>> = Vec::new();
        if k == 2 {
            for &x in &[0.1f64, 0.25, 0.5, 0.75, 0.9, 0.97] {
                weight_sets.push(vec![x, 1.0 - x]);
            }
        } else {
            for &x in &[0.1f64, 0.45, 0.8] {
                for &y in &[0.1f64, 0.45] {
                    if x + y < 0.99 {
                        weight_sets.push(vec![x, y, 1.0 - x - y]);
                    }
                }
            }
        }
        for mut w in weight_sets {
            // Clamp into the chart: every w_i ≥ margin·m_i·t.
            let mut deficit = 0.0;
            for i in 0..k {
                let lo = margin * m[i] * t;
                if w[i] < lo {
                    deficit += lo - w[i];
                    w[i] = lo;
                }
            }
            let imax = (0..k)
                .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap())
                .unwrap();
            w[imax] -= deficit;
            let angles = vec![0.4; k];
            if let Ok(p) = HybridPoint::in_maximal_chart(model, chart, t, &w, &angles) {
                samples.push(p);
            }
        }
    }
    samples
}

/// Calibrates ε₀ by bisection on fiber-metric positivity over a fixed
/// sample grid (q ∈ {0, ¼, ½, ¾, 1}), and records a failure witness.
pub fn calibrate_eps0(model: &Model) -> Result<EpsCalibration> {
    let samples = calibration_samples(model);
    let qs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let positive = |eps: f64| -> Result<Option<String>> {
        for p in &samples {
            for &q in &qs {
                let rep = metric_g(model, p, FormParams { eps, q })?;
                if !rep.positive_definite {
                    return Ok(Some(format!(
                        "q={q}, t={}, w={:?}, min eigenvalue {:.3e}",
                        p.t, p.w, rep.min_eigenvalue
                    )));
                }
            }
        }
        Ok(None)
    };
    // Look for a failing ε by doubling up to the scan cap.
    let mut hi = 0.05;
    let mut witness = None;
    for _ in 0..16 {
        hi *= 2.0;
        if let Some(w) = positive(hi)? {
            witness = Some((hi, w));
            break;
        }
    }
    let Some((mut hi, wdesc)) = witness else {
        return Ok(EpsCalibration {
            eps0: DEFAULT_EPS0,
            failing_eps: None,
            failing_sample: None,
        });
    };
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if positive(mid)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(EpsCalibration {
        eps0: lo * 0.99,
        failing_eps: Some(hi),
        failing_sample: Some(wdesc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snc1() -> Model {
        Model::local_snc(1, vec![1, 1], vec![0, 0]).unwrap()
    }

    fn snc2() -> Model {
        Model::local_snc(2, vec![1, 1, 1], vec![0, 0, 0]).unwrap()
    }

    fn point0(model: &Model, w: &[f64], angles: &[f64]) -> HybridPoint {
        let chart = model.maximal_charts()[0];
        HybridPoint::in_maximal_chart(model, chart, 0.0, w, angles).unwrap()
    }

    fn pointt(model: &Model, t: f64, w: &[f64], angles: &[f64]) -> HybridPoint {
        let chart = model.maximal_charts()[0];
        HybridPoint::in_maximal_chart(model, chart, t, w, angles).unwrap()
    }

    #[test]
    fn flat_form_radius_zero_oracle() {
        // n=1, m=(1,1), t=0, w=(1/2,1/2): ω♭ = −dw₁∧dθ₁ − dw₂∧dθ₂ in the
        // basis (∂t, ∂w₁, ∂w₂, ∂θ₁, ∂θ₂).
        let model = snc1();
        let p = point0(&model, &[0.5, 0.5], &[0.0, 0.0]);
        let f = omega_flat(&model, &p).unwrap();
        assert_eq!(f.basis, BasisKind::HybridZero);
        let mut expect = DMatrix::zeros(5, 5);
        expect[(1, 3)] = -1.0;
        expect[(3, 1)] = 1.0;
        expect[(2, 4)] = -1.0;
        expect[(4, 2)] = 1.0;
        assert_eq!(f.matrix, expect);
    }

    #[test]
    fn pairing_identity_holds_at_radius_zero() {
        let model = snc1();
        for &q in &[0.0, 0.3, 1.0] {
            let fp = FormParams { eps: 0.5, q };
            for k in 1..20 {
                let x = k as f64 / 20.0;
                let p = point0(&model, &[x, 1.0 - x], &[0.2, -0.4]);
                let r = pairing_check(&model, &p, fp).unwrap();
                assert!(r < 1e-12, "n=1 q={q} w={x}: residual {r:.3e}");
            }
        }
        let model = snc2();
        let fp = FormParams { eps: 0.7, q: 0.4 };
        for a in 1..6 {
            for b in 1..(7 - a) {
                let (x, y) = (a as f64 / 8.0, b as f64 / 8.0);
                let p = point0(&model, &[x, y, 1.0 - x - y], &[0.1, 0.2, 0.3]);
                let r = pairing_check(&model, &p, fp).unwrap();
                assert!(r < 1e-12, "n=2: residual {r:.3e}");
            }
        }
    }

    #[test]
    fn pairing_degenerate_at_simplex_boundary_is_flagged() {
        let model = snc1();
        let p = point0(&model, &[1.0, 0.0], &[0.0, 0.0]);
        let fp = FormParams { eps: 0.5, q: 0.0 };
        assert!(matches!(
            pairing_check(&model, &p, fp),
            Err(Error::SingularCoordinate(_))
        ));
    }

    #[test]
    fn torus_pullback_is_exactly_zero() {
        let fp = FormParams { eps: 0.7, q: 0.4 };
        for model in [snc1(), snc2()] {
            let k = model.n() + 1;
            let w: Vec<f64> = (0..k)
                .map(|i| (i as f64 + 1.0) / (k * (k + 1) / 2) as f64)
                .collect();
            let angles = vec![0.3; k];
            let p = point0(&model, &w, &angles);
            let form = omega_q(&model, &p, fp).unwrap();
            let torus = torus_basis(&model, &p).unwrap();
            let restricted = restrict_form(&form, &torus);
            assert!(restricted.iter().all(|&x| x == 0.0), "{restricted}");
        }
    }

    #[test]
    fn metric_at_eps_zero_is_ambient() {
        // ε=0: g is the euclidean metric restricted to the fiber.
        let model = snc1();
        let p = pointt(&model, 0.25, &[0.5, 0.5], &[0.1, 0.2]);
        let rep = metric_g(&model, &p, FormParams { eps: 0.0, q: 0.0 }).unwrap();
        assert!(rep.positive_definite);
        // g(W,W) = ω_X(W,JW) = r₁²/t² + r₂²/t² = 32e⁻⁴ at this point.
        let expect = 32.0 * (-4.0f64).exp();
        assert!((rep.matrix[(0, 0)] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn metric_positive_for_all_eps() {
        // The fiberwise metric is positive definite for every ε in these
        // chart-exact models: the rank-one non-positive parts of the ω♯/ω♭
        // coefficient matrices are annihilated on fiber-tangent vectors
        // (whose m-weighted ds-components sum to zero), leaving positive
        // Gram blocks plus the ambient PSD contribution.
        let model = snc1();
        for &eps in &[0.05, 0.3, 10.0, 1e3] {
            for &q in &[0.0, 0.5, 1.0] {
                for k in 1..10 {
                    let x = k as f64 / 10.0;
                    let p = pointt(&model, 0.1, &[x, 1.0 - x], &[0.0, 0.0]);
                    let rep = metric_g(&model, &p, FormParams { eps, q }).unwrap();
                    assert!(
                        rep.positive_definite,
                        "eps={eps} q={q} w={x}: {:?}",
                        rep.eigenvalues
                    );
                }
            }
        }
    }

    #[test]
    fn calibration_reports_no_failing_eps() {
        // Existence of a failing ε is structurally impossible here (see the
        // positive-Gram argument above), so the scan reaches its cap and the
        // calibration returns the documented default.
        let model = snc1();
        let cal = calibrate_eps0(&model).unwrap();
        assert_eq!(cal.eps0, DEFAULT_EPS0);
        assert!(cal.failing_eps.is_none());
        assert!(cal.failing_sample.is_none());
    }

    #[test]
    fn potential_flat_oracle_and_identity() {
        let model = snc1();
        let p = pointt(&model, 0.25, &[0.5, 0.5], &[0.0, 0.0]);
        let (phi, residual) = potential_flat(&model, &p).unwrap();
        assert!((phi + 1.0).abs() < 1e-12, "φ♭ = {phi}");
        assert!(residual < 1e-6, "identity residual {residual:.3e}");
        // Rate: φ♭ ~ −Σw²/(2t) as t→0 along fixed w.
        for &t in &[0.1, 0.05, 0.01] {
            let p = pointt(&model, t, &[0.3, 0.7], &[0.0, 0.0]);
            let (phi, _) = potential_flat(&model, &p).unwrap();
            let expect = -(0.09 + 0.49) / (2.0 * t);
            assert!((phi - expect).abs() < 1e-12 * expect.abs());
        }
    }

    #[test]
    fn potential_sharp_vanishes_when_all_s_are_minus_one() {
        let model = snc1();
        // s_i = −1 ⟺ w_i = m_i t with t = 1/Σm_i; bypass the t_max guard.
        let p = HybridPoint {
            chart: ChartId::LocalSnc,
            t: 0.5,
            theta: 0.0,
            w: vec![0.5, 0.5],
            angles: vec![0.0, 0.0],
            residual: Vec::new(),
        };
        let phi = potential_sharp(&model, &p, 1e-13).unwrap();
        assert!(phi.abs() < 1e-12, "φ♯ = {phi}");
    }

    /// φ♯ as a function of the log-radii, with t = −1/Σm_i s_i induced.
    fn phi_sharp_of_s(model: &Model, s: &[f64]) -> f64 {
        let info = model.chart(model.maximal_charts()[0]).unwrap();
        let m = info.multiplicities();
        let l: f64 = s.iter().zip(&m).map(|(s, m)| m * s).sum();
        let t = -1.0 / l;
        let w: Vec<f64> = s.iter().zip(&m).map(|(s, m)| m * s / l).collect();
        let p = HybridPoint {
            chart: info.id,
            t,
            theta: 0.0,
            w,
            angles: vec![0.0; info.k()],
            residual: Vec::new(),
        };
        potential_sharp(model, &p, 1e-14).unwrap()
    }

    #[test]
    fn dc_potential_sharp_matches_lambda_sharp_fiberwise() {
        let model = Model::local_snc(1, vec![1, 2], vec![0, 0]).unwrap();
        let p = pointt(&model, 0.2, &[0.4, 0.6], &[0.0, 0.0]);
        let rec = basic_functions(&model, &p).unwrap();
        let m = [1.0, 2.0];
        let h = 1e-5;
        let dphi: Vec<f64> = (0..2)
            .map(|i| {
                let mut sp = rec.s.clone();
                sp[i] += h;
                let mut sm = rec.s.clone();
                sm[i] -= h;
                (phi_sharp_of_s(&model, &sp) - phi_sharp_of_s(&model, &sm)) / (2.0 * h)
            })
            .collect();
        // Fiberwise d^cφ = λ♯ = Σ v̂_i dθ_i, tested on the angular fiber
        // generator T = ∂θ₁ − (m₁/m₂)∂θ₂: −Σ∂φ/∂s_i dθ_i(T) = Σv̂_i dθ_i(T).
        let lhs = -(dphi[0] - (m[0] / m[1]) * dphi[1]);
        let rhs = rec.v[0] - (m[0] / m[1]) * rec.v[1];
        assert!((lhs - rhs).abs() < 1e-6, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn ddc_potential_sharp_matches_omega_sharp_fiberwise() {
        let model = Model::local_snc(1, vec![1, 2], vec![0, 0]).unwrap();
        let p = pointt(&model, 0.2, &[0.4, 0.6], &[0.0, 0.0]);
        let rec = basic_functions(&model, &p).unwrap();
        let h = 1e-4;
        let mut hess = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = rec.s.clone();
                let eval = |si: f64, sj: f64, s: &mut Vec<f64>| {
                    s[i] = rec.s[i] + si;
                    s[j] = rec.s[j] + sj;
                    if i == j {
                        s[i] = rec.s[i] + si + sj;
                    }
                    phi_sharp_of_s(&model, s)
                };
                hess[(i, j)] = (eval(h, h, &mut s) - eval(h, -h, &mut s) - eval(-h, h, &mut s)
                    + eval(-h, -h, &mut s))
                    / (4.0 * h * h);
            }
        }
        // dd^cφ = −Σ_{ij} H_{ij} ds_j∧dθ_i in the LogZ basis.
        let mut fd = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                antisymmetrize_entry(&mut fd, 2 * j, 2 * i + 1, -hess[(i, j)]);
            }
        }
        let sharp = omega_sharp(&model, &p).unwrap();
        let (fiber, _) = fiber_basis(&model, &p).unwrap();
        let fd_fiber = restrict_form(
            &FormValue {
                point: p.clone(),
                basis: BasisKind::LogZ,
                matrix: fd,
            },
            &fiber,
        );
        let exact_fiber = restrict_form(&sharp, &fiber);
        let err = (&fd_fiber - &exact_fiber).amax();
        assert!(err < 1e-5, "fiberwise dd^cφ mismatch {err:.3e}");
    }

    #[test]
    fn volume_oracles_at_radius_zero() {
        let model = snc1();
        let p = point0(&model, &[0.5, 0.5], &[0.0, 0.0]);
        // Frame (∂w₂, ∂θ₂) in the basis (∂t, ∂w₁, ∂w₂, ∂θ₁, ∂θ₂).
        let mut dw2 = DVector::zeros(5);
        dw2[2] = 1.0;
        let mut dth2 = DVector::zeros(5);
        dth2[4] = 1.0;
        let vv = volume_forms(
            &model,
            &p,
            &[dw2.clone(), dth2.clone()],
            BasisKind::HybridZero,
        )
        .unwrap();
        assert_eq!(vv.omega_new, C64::new(1.0, 0.0));
        assert_eq!(vv.vol_new, 1.0);
        assert_eq!(vv.c0, C64::new(1.0, 0.0));
        // Swapped frame: orientation flip of vol_new.
        let vv2 = volume_forms(&model, &p, &[dth2, dw2], BasisKind::HybridZero).unwrap();
        assert_eq!(vv2.vol_new, -1.0);

        let hesse = Model::hesse();
        let hp = point0(&hesse, &[0.5, 0.5], &[0.0, 0.0]);
        let mut dw2 = DVector::zeros(5);
        dw2[2] = 1.0;
        let mut dth2 = DVector::zeros(5);
        dth2[4] = 1.0;
        let vv = volume_forms(&hesse, &hp, &[dw2, dth2], BasisKind::HybridZero).unwrap();
        assert_eq!(vv.c0, C64::new(-1.0, 0.0));
        assert_eq!(vv.omega_new, C64::new(-1.0, 0.0));
        assert!((vv.vol_new - 1.0).abs() < 1e-15);
    }

    #[test]
    fn volume_near_radius_zero_stays_close() {
        let model = snc1();
        let p = pointt(&model, 0.05, &[0.5, 0.5], &[0.0, 0.0]);
        let mut dw2 = DVector::zeros(5);
        dw2[2] = 1.0;
        let mut dth2 = DVector::zeros(5);
        dth2[4] = 1.0;
        let vv = volume_forms(&model, &p, &[dw2, dth2], BasisKind::HybridZero).unwrap();
        assert!((vv.omega_new.norm() - 1.0).abs() < 0.2);
    }

    #[test]
    fn volume_vanishes_toward_non_essential_strata() {
        // ν = (0,1): the second component is non-essential; vol_new decays
        // as its tropical weight grows and is exactly zero at t = 0.
        let model = Model::local_snc(1, vec![1, 1], vec![0, 1]).unwrap();
        let mut dw2 = DVector::zeros(5);
        dw2[2] = 1.0;
        let mut dth2 = DVector::zeros(5);
        dth2[4] = 1.0;
        let frame = [dw2, dth2];
        let mut last = f64::INFINITY;
        for &w2 in &[0.3, 0.5, 0.7, 0.9] {
            let p = pointt(&model, 0.1, &[1.0 - w2, w2], &[0.0, 0.0]);
            let vv = volume_forms(&model, &p, &frame, BasisKind::HybridZero).unwrap();
            assert!(
                vv.vol_new > 0.0 && vv.vol_new < last,
                "w2={w2}: {}",
                vv.vol_new
            );
            last = vv.vol_new;
        }
        let p = point0(&model, &[0.5, 0.5], &[0.0, 0.0]);
        let vv = volume_forms(&model, &p, &frame, BasisKind::HybridZero).unwrap();
        assert_eq!(vv.vol_new, 0.0);
    }

    #[test]
    fn cplus_constant_on_radius_zero_grid() {
        let eps = 0.5;
        let fp = FormParams { eps, q: 0.0 };
        let model = snc1();
        for k in 1..20 {
            let x = k as f64 / 20.0;
            let p = point0(&model, &[x, 1.0 - x], &[0.1, 0.7]);
            let c = cplus(&model, &p, fp).unwrap();
            assert!((c - 2.0 * eps).abs() < 1e-12, "n=1 w={x}: c₊={c}");
        }
        let model = snc2();
        for a in 1..6 {
            for b in 1..(7 - a) {
                let (x, y) = (a as f64 / 8.0, b as f64 / 8.0);
                let p = point0(&model, &[x, y, 1.0 - x - y], &[0.0, 0.0, 0.0]);
                let c = cplus(&model, &p, fp).unwrap();
                assert!((c - 3.0 * eps * eps).abs() < 1e-12, "n=2: c₊={c}");
            }
        }
    }

    #[test]
    fn cplus_continuous_in_t() {
        // Continuity check away from the boundary: at q=1, t=0.05 the ratio
        // drifts from its t=0 value 2ε by a bounded amount.
        let eps = 0.5;
        let model = snc1();
        let p = pointt(&model, 0.05, &[0.5, 0.5], &[0.0, 0.0]);
        let c = cplus(&model, &p, FormParams { eps, q: 1.0 }).unwrap();
        assert!((c / (2.0 * eps) - 1.0).abs() < 0.15, "c₊ = {c}");
    }

    #[test]
    fn omega_q_is_closed_finite_differences() {
        // ω_q depends on the angles only through nothing (LocalSnc): check
        // ∂_a ω_{s_b θ_i} symmetric in (a,b) over a coordinate cube.
        let model = Model::local_snc(1, vec![1, 2], vec![0, 0]).unwrap();
        let fp = FormParams { eps: 0.5, q: 0.7 };
        let base = pointt(&model, 0.25, &[0.4, 0.6], &[0.0, 0.0]);
        let rec = basic_functions(&model, &base).unwrap();
        let m = [1.0, 2.0];
        let omega_of_s = |s: &[f64]| -> DMatrix<f64> {
            let l: f64 = s.iter().zip(&m).map(|(s, m)| m * s).sum();
            let t = -1.0 / l;
            let w: Vec<f64> = s.iter().zip(&m).map(|(s, m)| m * s / l).collect();
            let p = HybridPoint {
                chart: ChartId::LocalSnc,
                t,
                theta: 0.0,
                w,
                angles: vec![0.0, 0.0],
                residual: Vec::new(),
            };
            omega_q(&model, &p, fp).unwrap().matrix
        };
        let h = 1e-4;
        let mut deriv = vec![DMatrix::zeros(4, 4); 2];
        for a in 0..2 {
            let mut sp = rec.s.clone();
            sp[a] += h;
            let mut sm = rec.s.clone();
            sm[a] -= h;
            deriv[a] = (omega_of_s(&sp) - omega_of_s(&sm)) / (2.0 * h);
        }
        for i in 0..2 {
            // dω(∂s₀, ∂s₁, ∂θ_i) = ∂₀ω(s₁,θ_i) − ∂₁ω(s₀,θ_i).
            let r = (deriv[0][(2, 2 * i + 1)] - deriv[1][(0, 2 * i + 1)]).abs();
            assert!(r < 1e-6, "dω residual {r:.3e} on θ_{i}");
        }
    }

    #[test]
    fn omega_q_fiberwise_j_compatible() {
        let model = snc1();
        let fp = FormParams { eps: 0.4, q: 0.6 };
        let p = pointt(&model, 0.25, &[0.3, 0.7], &[0.0, 0.0]);
        let form = omega_q(&model, &p, fp).unwrap();
        let (fiber, _) = fiber_basis(&model, &p).unwrap();
        // u, v span the fiber; J preserves the fiber tangent space.
        let u = &fiber[0] * 0.7 + &fiber[1] * 0.3;
        let v = &fiber[0] * -0.2 + &fiber[1] * 1.1;
        let lhs = (apply_j(&u).transpose() * &form.matrix * apply_j(&v))[(0, 0)];
        let rhs = (u.transpose() * &form.matrix * v)[(0, 0)];
        assert!(
            (lhs - rhs).abs() < 1e-10,
            "ω(Ju,Jv) = {lhs}, ω(u,v) = {rhs}"
        );
    }

    #[test]
    fn hesse_metric_positive_at_small_eps() {
        let model = Model::hesse();
        let fp = FormParams { eps: 0.01, q: 0.5 };
        for &t in &[0.05, 0.1] {
            for k in 1..6 {
                let x = k as f64 / 6.0;
                let p = pointt(&model, t, &[x, 1.0 - x], &[0.3, -0.2]);
                let rep = metric_g(&model, &p, fp).unwrap();
                assert!(rep.positive_definite, "t={t} w={x}: {:?}", rep.eigenvalues);
            }
        }
    }
}
