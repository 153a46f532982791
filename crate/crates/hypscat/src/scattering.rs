//! Scattering matrix from interior and cusp Neumann-to-Dirichlet maps.
//!
//! All matrices act on coefficient vectors in the basis e_{m,k} = √a_k e^{2πimx}
//! on ∂M_k (orthonormal for dx/a_k), ordered cusp-major with m ascending.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cuspnd::{averaging_matrix, cusp_nd, BasisLayout, CuspNdMatrix};
use crate::error::{Error, Result};
use crate::fem::{AnchorSolve, Discretization, NeumannSpectralData};
use crate::linalg::{all_finite, norm2, qr, singular_values, solve_dense, svd};

/// Relative distance below which s(1−s) counts as sitting on a Neumann eigenvalue.
const POLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NdProvenance {
    Series,
    AnchoredSeries,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdMatrix {
    pub s: C64,
    pub entries: Mat<C64>,
    pub provenance: NdProvenance,
}

/// Evaluator for the truncated interior ND map Ñ^M(s).
#[derive(Debug, Clone)]
pub enum InteriorNd {
    /// Eigen-series, optionally accelerated by direct solves at anchors μ_i.
    Series { data: NeumannSpectralData, mus: Vec<C64>, divided: Vec<Mat<C64>> },
    /// Sparse solve at every s.
    Direct { disc: Box<Discretization> },
}

impl InteriorNd {
    /// Series evaluator; with anchors, uses Newton divided differences
    /// N(μ) = Σ_i N[μ_0..μ_i] ω_i(μ) + ω_k(μ) Σ_j c_j c_j^H / Π_i(λ_j − μ_i)(λ_j − μ).
    pub fn series(data: NeumannSpectralData, anchors: &[AnchorSolve]) -> Result<Self> {
        let dim = data.layout().dim();
        let mus: Vec<C64> = anchors.iter().map(|a| a.s0 * (1.0 - a.s0)).collect();
        for (i, a) in anchors.iter().enumerate() {
            if a.nd.nrows() != dim || a.nd.ncols() != dim {
                return Err(Error::Dimension(format!("anchor matrix is {}×{}, expected {dim}", a.nd.nrows(), a.nd.ncols())));
            }
            for l in 0..i {
                if (mus[i] - mus[l]).norm() < 1e-8 {
                    return Err(Error::InvalidParameter("repeated anchor".into()));
                }
            }
        }
        // divided-difference table, kept along the diagonal
        let mut table: Vec<Mat<C64>> = anchors.iter().map(|a| a.nd.clone()).collect();
        let mut divided = Vec::with_capacity(anchors.len());
        if !table.is_empty() {
            divided.push(table[0].clone());
        }
        for level in 1..anchors.len() {
            let mut next = Vec::with_capacity(table.len() - 1);
            for i in 0..table.len() - 1 {
                let denom = mus[i + level] - mus[i];
                next.push(Mat::from_fn(dim, dim, |r, c| (table[i + 1][(r, c)] - table[i][(r, c)]) / denom));
            }
            divided.push(next[0].clone());
            table = next;
        }
        Ok(InteriorNd::Series { data, mus, divided })
    }

    pub fn direct(disc: Discretization) -> Self {
        InteriorNd::Direct { disc: Box::new(disc) }
    }

    pub fn layout(&self) -> BasisLayout {
        match self {
            InteriorNd::Series { data, .. } => data.layout(),
            InteriorNd::Direct { disc } => disc.layout,
        }
    }

    pub fn reduced(&self) -> bool {
        match self {
            InteriorNd::Series { data, .. } => data.reduced,
            InteriorNd::Direct { disc } => disc.reduced(),
        }
    }

    pub fn cut_heights(&self) -> Vec<f64> {
        match self {
            InteriorNd::Series { data, .. } => data.a.clone(),
            InteriorNd::Direct { disc } => disc.a.clone(),
        }
    }

    pub fn eval(&self, s: C64) -> Result<NdMatrix> {
        let mu = s * (1.0 - s);
        match self {
            InteriorNd::Series { data, mus, divided } => {
                if let Some(&l) = data.eigenvalues.iter().find(|&&l| (C64::new(l, 0.0) - mu).norm() <= POLE_TOL * l.abs().max(1.0)) {
                    return Err(Error::Pole(format!("s(1−s) = {mu} coincides with the Neumann eigenvalue {l}")));
                }
                let k = mus.len();
                let tail = data.weighted_series(|l| {
                    let mut d = C64::new(l, 0.0) - mu;
                    for &m in mus {
                        d *= C64::new(l, 0.0) - m;
                    }
                    1.0 / d
                });
                let dim = tail.nrows();
                let mut omega = C64::new(1.0, 0.0);
                let mut out = Mat::<C64>::zeros(dim, dim);
                for i in 0..k {
                    for r in 0..dim {
                        for c in 0..dim {
                            out[(r, c)] += divided[i][(r, c)] * omega;
                        }
                    }
                    omega *= mu - mus[i];
                }
                for r in 0..dim {
                    for c in 0..dim {
                        out[(r, c)] += tail[(r, c)] * omega;
                    }
                }
                let provenance = if k == 0 { NdProvenance::Series } else { NdProvenance::AnchoredSeries };
                Ok(NdMatrix { s, entries: out, provenance })
            }
            InteriorNd::Direct { disc } => Ok(NdMatrix { s, entries: disc.direct_nd(s)?, provenance: NdProvenance::Direct }),
        }
    }

    /// Plain-series tail estimate Σ_{j>n} ‖c_j‖²/λ_j, extrapolated from the last
    /// quarter of the computed coefficients with Weyl growth λ_j ∝ j.
    pub fn series_tail_estimate(&self, mu: C64) -> Option<f64> {
        let InteriorNd::Series { data, .. } = self else { return None };
        let n = data.len();
        if n < 8 {
            return None;
        }
        let start = 3 * n / 4;
        let mean_sq: f64 = (start..n)
            .map(|j| (0..data.coeffs.ncols()).map(|a| data.coeffs[(j, a)].norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / (n - start) as f64;
        let ln = data.eigenvalues[n - 1];
        let slope = ln / n as f64;
        // Σ_{j>n} mean_sq / (slope·j − |μ|) over the terms up to 100n
        let mut sum = 0.0;
        for j in n + 1..=100 * n {
            let lj = slope * j as f64;
            sum += mean_sq / (lj - mu.norm()).max(lj / 2.0);
        }
        Some(sum)
    }
}

/// T̃(s) = (1 − ãv)Ñ^M(s) + Ñ^c(s).
pub fn assemble_t(ndm: &Mat<C64>, ndc: &CuspNdMatrix) -> Result<Mat<C64>> {
    let dim = ndc.layout.dim();
    if ndm.nrows() != dim || ndm.ncols() != dim {
        return Err(Error::Dimension(format!("interior ND is {}×{}, cusp ND is {dim}×{dim}", ndm.nrows(), ndm.ncols())));
    }
    let mut t = ndm.clone();
    for k in 0..ndc.layout.p {
        let z = ndc.layout.zero_mode(k);
        for c in 0..dim {
            t[(z, c)] = C64::new(0.0, 0.0);
        }
    }
    for i in 0..dim {
        t[(i, i)] += ndc.diag[i];
    }
    Ok(t)
}

/// Orthonormal approximate kernel of T̃ with its singular-value gap.
#[derive(Debug, Clone)]
pub struct Kernel {
    /// dim × p right singular vectors.
    pub vectors: Mat<C64>,
    pub sigma_p: f64,
    pub sigma_p1: f64,
    /// σ_{p+1}/σ_p < 10.
    pub weak_gap: bool,
}

/// Right singular vectors for the p smallest singular values of qT̃ (or T̃).
pub fn kernel_vectors(t: &Mat<C64>, layout: BasisLayout, q_weight: bool) -> Result<Kernel> {
    let dim = t.nrows();
    if t.ncols() != dim {
        return Err(Error::Dimension("T̃ must be square".into()));
    }
    let p = layout.p;
    if dim <= p {
        return Err(Error::Dimension(format!("basis of size {dim} cannot hold a {p}-dimensional kernel")));
    }
    let weighted = if q_weight {
        Mat::from_fn(dim, dim, |r, c| t[(r, c)] * (layout.mode(r).0.unsigned_abs() as f64 + 1.0))
    } else {
        t.clone()
    };
    let dec = svd(&weighted)?;
    // singular values descend; the kernel sits in the last p columns
    let vectors = Mat::from_fn(dim, p, |r, c| dec.v[(r, dim - p + c)]);
    let sigma_p = dec.s[dim - p];
    let sigma_p1 = dec.s[dim - p - 1];
    let weak_gap = sigma_p1 < 10.0 * sigma_p;
    Ok(Kernel { vectors, sigma_p, sigma_p1, weak_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringOptions {
    pub q_weight: bool,
    /// Error out when the kernel gap σ_{p+1}/σ_p drops below 10.
    pub require_gap: bool,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        Self { q_weight: true, require_gap: true }
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringResult {
    pub s: C64,
    pub c: Mat<C64>,
    pub sigma_p: f64,
    pub sigma_p1: f64,
    pub weak_gap: bool,
    /// Condition number of (s−1)Q̃₂ + Q̃₁.
    pub condition: f64,
    /// ‖((s−1)Q̃₂ + Q̃₁)^{−1}‖.
    pub k2: f64,
    /// ‖sQ̃₂ − Q̃₁‖.
    pub k3: f64,
    /// ‖Ñ^M(s)‖.
    pub nm_norm: f64,
}

impl ScatteringResult {
    /// Error bound with the measured kernel residual as δ₁ and σ_{p+1} as K₁.
    pub fn error_bound(&self, delta2: f64, a: &[f64]) -> Result<f64> {
        let (an_s, an_s1) = power_norms(a, self.s);
        error_bound(&ErrorBoundInputs {
            delta1: self.sigma_p,
            delta2,
            k1: self.sigma_p1,
            k2: self.k2,
            k3: self.k3,
            nm_norm: self.nm_norm,
            a_s_norm: an_s,
            a_s1_norm: an_s1,
            s: self.s,
            p: self.c.nrows(),
        })
    }
}

/// (‖A^s‖, ‖A^{s−1}‖) for A = diag(a).
fn power_norms(a: &[f64], s: C64) -> (f64, f64) {
    let n = |e: C64| a.iter().map(|&x| (e * x.ln()).exp().norm()).fold(0.0, f64::max);
    (n(s), n(s - 1.0))
}

/// C̃ from a basis V of the kernel of T̃, with the singular values of
/// (s−1)Q̃₂ + Q̃₁ and the matrix sQ̃₂ − Q̃₁.
fn c_from_kernel(ndm: &Mat<C64>, vectors: &Mat<C64>, s: C64, a: &[f64], layout: BasisLayout) -> Result<(Mat<C64>, Vec<f64>, Mat<C64>)> {
    let p = layout.p;
    let nv = ndm * vectors;
    let mut q1 = Mat::<C64>::zeros(p, p);
    let mut q2 = Mat::<C64>::zeros(p, p);
    for k in 0..p {
        let z = layout.zero_mode(k);
        let root = a[k].sqrt();
        for c in 0..p {
            q1[(k, c)] = vectors[(z, c)] * root;
            q2[(k, c)] = nv[(z, c)] * root;
        }
    }
    let denom = Mat::from_fn(p, p, |r, c| (s - 1.0) * q2[(r, c)] + q1[(r, c)]);
    let numer = Mat::from_fn(p, p, |r, c| s * q2[(r, c)] - q1[(r, c)]);
    let dsv = singular_values(&denom)?;
    let condition = dsv[0] / dsv[p - 1];
    if !condition.is_finite() || condition > 1e13 {
        return Err(Error::Singular(format!("(s−1)Q₂ + Q₁ is singular at s = {s} (condition {condition:.3e})")));
    }
    // C = A^{s−1} numer denom^{−1} A^s, computed as (denom^T \ numer^T)^T
    let inv = solve_dense(&denom, &Mat::<C64>::identity(p, p))?;
    let core = &numer * &inv;
    let pw = |x: f64, e: C64| (e * x.ln()).exp();
    let c = Mat::from_fn(p, p, |r, col| pw(a[r], s - 1.0) * core[(r, col)] * pw(a[col], s));
    if !all_finite(&c) {
        return Err(Error::Singular(format!("non-finite scattering matrix at s = {s}")));
    }
    Ok((c, dsv, numer))
}

/// C̃(s) from an interior ND matrix.
pub fn scattering_from_nd(ndm: &Mat<C64>, s: C64, a: &[f64], layout: BasisLayout, opts: &ScatteringOptions) -> Result<ScatteringResult> {
    if (s - 0.5).norm() < 1e-12 {
        return Err(Error::InvalidParameter("s = 1/2 is excluded".into()));
    }
    let p = layout.p;
    let ndc = cusp_nd(s, a, layout.j)?;
    let t = assemble_t(ndm, &ndc)?;
    let ker = kernel_vectors(&t, layout, opts.q_weight)?;
    if opts.require_gap && ker.weak_gap {
        return Err(Error::Kernel(format!(
            "kernel gap too small at s = {s}: σ_p = {:.3e}, σ_p+1 = {:.3e}",
            ker.sigma_p, ker.sigma_p1
        )));
    }
    let (c, dsv, numer) = c_from_kernel(ndm, &ker.vectors, s, a, layout)?;
    Ok(ScatteringResult {
        s,
        c,
        sigma_p: ker.sigma_p,
        sigma_p1: ker.sigma_p1,
        weak_gap: ker.weak_gap,
        condition: dsv[0] / dsv[p - 1],
        k2: 1.0 / dsv[p - 1],
        k3: norm2(&numer),
        nm_norm: norm2(ndm),
    })
}

pub fn scattering_matrix(nd: &InteriorNd, s: C64, opts: &ScatteringOptions) -> Result<ScatteringResult> {
    let ndm = nd.eval(s)?;
    scattering_from_nd(&ndm.entries, s, &nd.cut_heights(), nd.layout(), opts)
}

/// Outcome of the one-cusp generalized eigenvalue route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OneCusp {
    /// C(s) from the single generalized eigenvalue G(s).
    Regular { g: C64, c: C64 },
    /// The pencil is degenerate and C(s) = s/(s−1)·a^{2s−1}.
    Exceptional { c: C64 },
}

impl OneCusp {
    pub fn value(&self) -> C64 {
        match *self {
            OneCusp::Regular { c, .. } | OneCusp::Exceptional { c } => c,
        }
    }
}

/// Single-cusp C(s) via the generalized eigenvalue of (Ñ^M + Ñ^c, ãv).
///
/// Because ãv has rank one, the finite eigenvalue is G = 1/[(Ñ^M + Ñ^c)^{−1}]_{00}.
pub fn one_cusp_via_generalized_eig(ndm: &Mat<C64>, ndc: &CuspNdMatrix, s: C64, a: f64) -> Result<OneCusp> {
    if ndc.layout.p != 1 {
        return Err(Error::Dimension("generalized eigenvalue route needs exactly one cusp".into()));
    }
    let dim = ndc.layout.dim();
    let z = ndc.layout.zero_mode(0);
    let mut sum = ndm.clone();
    for i in 0..dim {
        sum[(i, i)] += ndc.diag[i];
    }
    let mut e0 = Mat::<C64>::zeros(dim, 1);
    e0[(z, 0)] = C64::new(1.0, 0.0);
    let x = solve_dense(&sum, &e0)?;
    let w = x[(z, 0)];
    let scale = (C64::new(a.ln(), 0.0) * (2.0 * s - 1.0)).exp();
    if w.norm() < 1e-14 * norm2(&x).max(1e-300) {
        return Ok(OneCusp::Exceptional { c: s / (s - 1.0) * scale });
    }
    let g = 1.0 / w;
    let c = (s * g - 1.0) / ((s - 1.0) * g + 1.0) * scale;
    Ok(OneCusp::Regular { g, c })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundInputs {
    pub delta1: f64,
    pub delta2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub nm_norm: f64,
    pub a_s_norm: f64,
    pub a_s1_norm: f64,
    pub s: C64,
    pub p: usize,
}

/// ‖C̃ − C‖ ≤ ‖A^{s−1}‖‖A^s‖(ε₁K₂²(K₃ + ε₂)/(1 − ε₁K₂) + ε₂K₂).
pub fn error_bound(x: &ErrorBoundInputs) -> Result<f64> {
    let rp = (x.p as f64).sqrt();
    let kernel = rp * x.delta1 / x.k1;
    let nd = rp * (x.delta2 + x.nm_norm * x.delta1 / x.k1);
    let eps1 = kernel + (x.s - 1.0).norm() * nd;
    let eps2 = kernel + x.s.norm() * nd;
    if eps1 * x.k2 >= 1.0 {
        return Err(Error::InvalidParameter(format!("bound unavailable: ε₁K₂ = {} ≥ 1", eps1 * x.k2)));
    }
    Ok(x.a_s1_norm * x.a_s_norm * (eps1 * x.k2 * x.k2 * (x.k3 + eps2) / (1.0 - eps1 * x.k2) + eps2 * x.k2))
}

/// ‖C C^H − I‖₂.
pub fn unitarity_defect(c: &Mat<C64>) -> f64 {
    let p = c.nrows();
    let prod = c * c.adjoint();
    norm2(&Mat::from_fn(p, p, |r, col| prod[(r, col)] - if r == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
}

/// ‖C(s)C(1−s) − I‖₂.
pub fn functional_equation_defect(c_s: &Mat<C64>, c_1ms: &Mat<C64>) -> f64 {
    let p = c_s.nrows();
    let prod = c_s * c_1ms;
    norm2(&Mat::from_fn(p, p, |r, col| prod[(r, col)] - if r == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
}

/// Singular values (descending) of P Q̃(s) for B̃ = (Ñ^M + Ñ^c) ⊕ ãv ⊕ Ñ^M ⊕ Ñ^c.
///
/// On reduced domains B̃ is restricted to the even vectors v_m = v_{−m}; the
/// odd ones are annihilated by the cosine data and would pin σ at 1/√2.
pub fn embedded_singular_values(ndm: &Mat<C64>, s: C64, a: &[f64], layout: BasisLayout, reduced: bool) -> Result<Vec<f64>> {
    let dim = layout.dim();
    let ndc = cusp_nd(s, a, layout.j)?;
    let av = averaging_matrix(layout.j, layout.p);
    let full = Mat::from_fn(4 * dim, dim, |r, c| {
        let (block, i) = (r / dim, r % dim);
        let cusp = if i == c { ndc.diag[i] } else { C64::new(0.0, 0.0) };
        match block {
            0 => ndm[(i, c)] + cusp,
            1 => av[(i, c)],
            2 => ndm[(i, c)],
            _ => cusp,
        }
    });
    let stacked = if reduced {
        let per = layout.j + 1;
        let iso = Mat::from_fn(dim, per * layout.p, |r, c| {
            let (m, k) = layout.mode(r);
            let (mc, kc) = ((c % per) as i64, c / per);
            if k != kc || m.abs() != mc {
                C64::new(0.0, 0.0)
            } else if mc == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
            }
        });
        &full * &iso
    } else {
        full
    };
    let n = stacked.ncols();
    let (q, r) = qr(&stacked);
    let rsv = singular_values(&r)?;
    if rsv[n - 1] <= 1e-14 * rsv[0] {
        return Err(Error::Singular(format!("stacked matrix lost rank at s = {s}")));
    }
    let top = Mat::from_fn(2 * dim, n, |r, c| q[(r, c)]);
    singular_values(&top)
}

/// Smallest singular value of P Q̃(s).
pub fn embedded_indicator(ndm: &Mat<C64>, s: C64, a: &[f64], layout: BasisLayout, reduced: bool) -> Result<f64> {
    let sv = embedded_singular_values(ndm, s, a, layout, reduced)?;
    Ok(*sv.last().expect("non-empty basis"))
}
