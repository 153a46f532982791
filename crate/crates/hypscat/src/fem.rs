//! Finite elements for P = Δ_g + V on the meshed compact part.
//!
//! The Dirichlet energy of a conformal metric is the flat one, so the
//! stiffness matrix is Euclidean; the metric only enters through the mass
//! weight e^φ y^{−2}.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cuspnd::BasisLayout;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, Curve, Symmetry};
use crate::linalg::{generalized_eigs, ComplexShiftedSolver, EigOptions, EigResult, SparseSym};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ElementOrder {
    Linear,
    #[default]
    Quadratic,
}

/// Degree-5 seven-point rule on the reference triangle: weights summing to 1
/// and barycentric points.
pub fn quadrature_7() -> ([f64; 7], [[f64; 3]; 7]) {
    let (a1, b1, w1) = (0.059_715_871_789_769_82, 0.470_142_064_105_115_09, 0.132_394_152_788_506_18);
    let (a2, b2, w2) = (0.797_426_985_353_087_3, 0.101_286_507_323_456_34, 0.125_939_180_544_827_15);
    (
        [0.225, w1, w1, w1, w2, w2, w2],
        [
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ],
    )
}

/// Five-point Gauss–Legendre rule on [0, 1].
fn gauss_5() -> ([f64; 5], [f64; 5]) {
    let x = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
    let w = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
    (x.map(|t| 0.5 * (t + 1.0)), w.map(|v| 0.5 * v))
}

impl ElementOrder {
    fn local_dofs(self) -> usize {
        match self {
            ElementOrder::Linear => 3,
            ElementOrder::Quadratic => 6,
        }
    }

    /// Shape values and barycentric gradients (coefficients of ∇λ_k) at `l`.
    fn shapes(self, l: [f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
        match self {
            ElementOrder::Linear => (l.to_vec(), vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
            ElementOrder::Quadratic => {
                let mut v = Vec::with_capacity(6);
                let mut g = Vec::with_capacity(6);
                for i in 0..3 {
                    v.push(l[i] * (2.0 * l[i] - 1.0));
                    let mut gi = [0.0; 3];
                    gi[i] = 4.0 * l[i] - 1.0;
                    g.push(gi);
                }
                for k in 0..3 {
                    let (i, j) = (k, (k + 1) % 3);
                    v.push(4.0 * l[i] * l[j]);
                    let mut gk = [0.0; 3];
                    gk[i] = 4.0 * l[j];
                    gk[j] = 4.0 * l[i];
                    g.push(gk);
                }
                (v, g)
            }
        }
    }

    /// Shape values along a boundary edge at parameter t for (start, end, midpoint).
    fn edge_shapes(self, t: f64) -> Vec<f64> {
        match self {
            ElementOrder::Linear => vec![1.0 - t, t],
            ElementOrder::Quadratic => vec![(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)],
        }
    }
}

/// Global dofs of one triangle, before Dirichlet elimination.
fn triangle_dofs(mesh: &Mesh, order: ElementOrder, t: usize) -> Vec<usize> {
    let mut d: Vec<usize> = mesh.triangles[t].iter().map(|&v| mesh.dof_map[v]).collect();
    if order == ElementOrder::Quadratic {
        d.extend(mesh.triangle_edges[t].iter().map(|&e| mesh.n_dofs + mesh.edge_dof[e]));
    }
    d
}

fn total_dofs(mesh: &Mesh, order: ElementOrder) -> usize {
    match order {
        ElementOrder::Linear => mesh.n_dofs,
        ElementOrder::Quadratic => mesh.n_dofs + mesh.n_edge_dofs,
    }
}

/// Map from global dofs to unknowns after removing Dirichlet dofs.
fn free_map(mesh: &Mesh, order: ElementOrder) -> (Vec<Option<usize>>, usize) {
    let n = total_dofs(mesh, order);
    let mut fixed = vec![false; n];
    for e in mesh.boundary_edges() {
        if mesh.spec.arcs[e.arc].kind == BoundaryKind::Dirichlet {
            for &v in &e.v {
                fixed[mesh.dof_map[v]] = true;
            }
            if order == ElementOrder::Quadratic {
                fixed[mesh.n_dofs + mesh.edge_dof[e.edge]] = true;
            }
        }
    }
    let mut map = vec![None; n];
    let mut count = 0;
    for i in 0..n {
        if !fixed[i] {
            map[i] = Some(count);
            count += 1;
        }
    }
    (map, count)
}

/// Stiffness (Dirichlet energy plus potential) and mass matrices on the free dofs.
pub fn assemble(mesh: &Mesh, order: ElementOrder) -> Result<(SparseSym, SparseSym)> {
    let (free, n) = free_map(mesh, order);
    let conformal = mesh.spec.conformal.as_ref().map(|f| f.compile()).transpose()?;
    let potential = mesh.spec.potential.as_ref().map(|f| f.compile()).transpose()?;
    let (qw, ql) = quadrature_7();
    let pre: Vec<(Vec<f64>, Vec<[f64; 3]>)> = ql.iter().map(|&l| order.shapes(l)).collect();
    let geo: Vec<(Vec<f64>, Vec<[f64; 3]>)> = ql.iter().map(|&l| ElementOrder::Quadratic.shapes(l)).collect();
    let mids = mesh.edge_midpoints();
    let nl = order.local_dofs();
    let mut kt = Vec::with_capacity(mesh.triangles.len() * nl * nl);
    let mut mt = Vec::with_capacity(mesh.triangles.len() * nl * nl);
    let mut kl = vec![0.0; nl * nl];
    let mut ml = vec![0.0; nl * nl];
    for t in 0..mesh.triangles.len() {
        // quadratic geometry: vertices then edge midpoints, curved on circular arcs
        let mut x = [C64::new(0.0, 0.0); 6];
        for k in 0..3 {
            x[k] = mesh.vertex(mesh.triangles[t][k]);
            x[3 + k] = mids[mesh.triangle_edges[t][k]];
        }
        kl.iter_mut().for_each(|x| *x = 0.0);
        ml.iter_mut().for_each(|x| *x = 0.0);
        for (q, (vals, bgrads)) in pre.iter().enumerate() {
            let (gvals, ggrads) = &geo[q];
            let mut z = C64::new(0.0, 0.0);
            // Jacobian columns ∂x/∂λ₁ − ∂x/∂λ₀ and ∂x/∂λ₂ − ∂x/∂λ₀
            let (mut d1, mut d2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for i in 0..6 {
                z += x[i] * gvals[i];
                d1 += x[i] * (ggrads[i][1] - ggrads[i][0]);
                d2 += x[i] * (ggrads[i][2] - ggrads[i][0]);
            }
            let det = d1.re * d2.im - d1.im * d2.re;
            if !(det > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} is not positively oriented")));
            }
            let ephi = match &conformal {
                Some(f) => f.eval(z.re, z.im)?,
                None => 1.0,
            };
            if !(ephi > 0.0) {
                return Err(Error::Geometry(format!("conformal factor {ephi} at {z} is not positive")));
            }
            let weight = ephi / (z.im * z.im);
            let v = match &potential {
                Some(f) => f.eval(z.re, z.im)?,
                None => 0.0,
            };
            // ∇u = J^{−T}(∂u/∂ξ₁, ∂u/∂ξ₂)
            let g: Vec<[f64; 2]> = bgrads
                .iter()
                .map(|c| {
                    let (u1, u2) = (c[1] - c[0], c[2] - c[0]);
                    [(d2.im * u1 - d1.im * u2) / det, (-d2.re * u1 + d1.re * u2) / det]
                })
                .collect();
            let w = qw[q] * 0.5 * det;
            for i in 0..nl {
                for j in 0..nl {
                    let mass = vals[i] * vals[j] * weight;
                    kl[i * nl + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1] + v * mass);
                    ml[i * nl + j] += w * mass;
                }
            }
        }
        let dofs = triangle_dofs(mesh, order, t);
        for i in 0..nl {
            let Some(gi) = free[dofs[i]] else { continue };
            for j in 0..nl {
                let Some(gj) = free[dofs[j]] else { continue };
                kt.push((gi, gj, kl[i * nl + j]));
                mt.push((gi, gj, ml[i * nl + j]));
            }
        }
    }
    Ok((SparseSym::from_triplets(n, &kt), SparseSym::from_triplets(n, &mt)))
}

/// Cusp coordinate u at curve parameter p of a horocycle piece.
fn cusp_u(curve: &Curve, p: f64) -> f64 {
    match *curve {
        Curve::HorocycleSegment { u0, u1, .. } => u0 + p * (u1 - u0),
        _ => unreachable!("cusp pieces are horocycle segments"),
    }
}

/// Boundary functionals B_{iα} = ∫_{∂M_k} N_i e_α dS with e_α = √a_k e^{2πimu}
/// (cos(2πmu) on symmetry-reduced domains) and dS = du/a_k.
fn boundary_matrix(mesh: &Mesh, order: ElementOrder, layout: BasisLayout) -> Result<Mat<C64>> {
    let (free, n) = free_map(mesh, order);
    let reduced = mesh.spec.symmetry != Symmetry::None;
    let (gx, gw) = gauss_5();
    let mut b = Mat::<C64>::zeros(n, layout.dim());
    for e in mesh.boundary_edges() {
        let arc = &mesh.spec.arcs[e.arc];
        let BoundaryKind::Cusp(k) = arc.kind else { continue };
        let a = mesh.spec.cusps[k].a;
        let (ua, ub) = (cusp_u(&arc.curve, e.p[0]), cusp_u(&arc.curve, e.p[1]));
        let len = (ub - ua).abs() / a;
        let mut dofs = vec![mesh.dof_map[e.v[0]], mesh.dof_map[e.v[1]]];
        if order == ElementOrder::Quadratic {
            dofs.push(mesh.n_dofs + mesh.edge_dof[e.edge]);
        }
        for (t, w) in gx.iter().zip(gw.iter()) {
            let u = ua + t * (ub - ua);
            let shapes = order.edge_shapes(*t);
            for (sv, &d) in shapes.iter().zip(dofs.iter()) {
                let Some(row) = free[d] else { continue };
                for m in -(layout.j as i64)..=(layout.j as i64) {
                    let phase = 2.0 * PI * m as f64 * u;
                    let e_val = if reduced { C64::new(phase.cos(), 0.0) } else { C64::new(phase.cos(), phase.sin()) };
                    let col = layout.index(m, k);
                    b[(row, col)] += e_val * (a.sqrt() * sv * w * len);
                }
            }
        }
    }
    Ok(b)
}

/// K, M and the boundary functionals on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub order: ElementOrder,
    pub k: SparseSym,
    pub m: SparseSym,
    /// n_free × (2J+1)p boundary functionals.
    pub boundary: Mat<C64>,
    pub layout: BasisLayout,
    /// Cut heights a_k.
    pub a: Vec<f64>,
    /// 2 on symmetry-reduced domains, 1 otherwise.
    pub scale: f64,
}

impl Discretization {
    pub fn new(mesh: &Mesh, order: ElementOrder, j: usize) -> Result<Self> {
        let p = mesh.spec.cusp_count();
        for k in 0..p {
            let nk = mesh.cusp_dof_count(k);
            let needed = if mesh.spec.symmetry == Symmetry::None { 4 * j } else { 2 * j };
            if nk < needed {
                return Err(Error::InvalidParameter(format!(
                    "J = {j} is too large for {nk} boundary nodes on cusp {k}"
                )));
            }
        }
        let (k, m) = assemble(mesh, order)?;
        let layout = BasisLayout::new(j, p);
        let boundary = boundary_matrix(mesh, order, layout)?;
        Ok(Self { order, k, m, boundary, layout, a: mesh.spec.cut_heights(), scale: mesh.spec.reduction_factor() })
    }

    /// Symmetry-reduced domain, where the basis functions are cosines.
    pub fn reduced(&self) -> bool {
        self.scale > 1.0
    }

    pub fn n_free(&self) -> usize {
        self.k.n
    }

    /// The n lowest eigenpairs of K v = λ M v.
    pub fn solve_spectrum(&self, n: usize) -> Result<EigResult> {
        let n = n.min(self.n_free());
        generalized_eigs(&self.k, &self.m, n, &EigOptions::default())
    }

    /// λ_j and ⟨φ_j, e_α⟩ for the computed eigenpairs, normalized on the full surface.
    pub fn spectral_data(&self, eig: &EigResult) -> NeumannSpectralData {
        let n = eig.values.len();
        let dim = self.layout.dim();
        let mut coeffs = Mat::<C64>::zeros(n, dim);
        let root = self.scale.sqrt();
        for j in 0..n {
            for al in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..self.n_free() {
                    acc += self.boundary[(i, al)].conj() * eig.vectors[(i, j)];
                }
                coeffs[(j, al)] = acc * root;
            }
        }
        NeumannSpectralData {
            eigenvalues: eig.values.clone(),
            coeffs,
            j: self.layout.j,
            p: self.layout.p,
            a: self.a.clone(),
            reduced: self.reduced(),
        }
    }

    /// N^M(s) in the truncated basis by a sparse solve of (K − s(1−s)M)ψ = Bf.
    pub fn direct_nd(&self, s: C64) -> Result<Mat<C64>> {
        let mu = s * (1.0 - s);
        let solver = ComplexShiftedSolver::new(&self.k, &self.m, mu)?;
        let mut x = self.boundary.clone();
        solver.solve_in_place(&mut x);
        if !crate::linalg::all_finite(&x) {
            return Err(Error::Singular(format!("interior problem singular at s = {s}")));
        }
        let dim = self.layout.dim();
        let mut nd = Mat::<C64>::zeros(dim, dim);
        for al in 0..dim {
            for be in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..self.n_free() {
                    acc += self.boundary[(i, al)].conj() * x[(i, be)];
                }
                nd[(al, be)] = acc * self.scale;
            }
        }
        Ok(nd)
    }

    /// Direct solve at an anchor, refusing anchors too close to the computed spectrum.
    pub fn anchor(&self, s0: C64, eigenvalues: &[f64]) -> Result<AnchorSolve> {
        let mu = s0 * (1.0 - s0);
        if let Some(l) = eigenvalues.iter().find(|&&l| (C64::new(l, 0.0) - mu).norm() < 1e-6) {
            return Err(Error::Pole(format!("anchor s0 = {s0} sits on the eigenvalue {l}")));
        }
        Ok(AnchorSolve { s0, nd: self.direct_nd(s0)? })
    }
}

/// (λ_j, ⟨φ_j, e_α⟩) with rows indexed by j and columns by the basis layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannSpectralData {
    pub eigenvalues: Vec<f64>,
    #[serde(with = "mat_serde")]
    pub coeffs: Mat<C64>,
    pub j: usize,
    pub p: usize,
    pub a: Vec<f64>,
    /// Computed on a symmetry-reduced domain.
    #[serde(default)]
    pub reduced: bool,
}

impl NeumannSpectralData {
    pub fn layout(&self) -> BasisLayout {
        BasisLayout::new(self.j, self.p)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Σ_j c_j c_j^H / (λ_j − μ) with c_j the j-th coefficient row.
    pub fn series(&self, mu: C64) -> Mat<C64> {
        self.weighted_series(|l| 1.0 / (C64::new(l, 0.0) - mu))
    }

    /// Σ_j w(λ_j) c_j c_j^H.
    pub fn weighted_series(&self, w: impl Fn(f64) -> C64) -> Mat<C64> {
        let dim = self.coeffs.ncols();
        let mut out = Mat::<C64>::zeros(dim, dim);
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            let wj = w(l);
            for b in 0..dim {
                let cb = self.coeffs[(j, b)].conj() * wj;
                for a in 0..dim {
                    out[(a, b)] += self.coeffs[(j, a)] * cb;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Direct evaluation of N^M at an anchor s₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSolve {
    pub s0: C64,
    #[serde(with = "mat_serde")]
    pub nd: Mat<C64>,
}

/// Dense complex matrices as {rows, cols, data: [[re, im], ...]} in row-major order.
pub mod mat_serde {
    use faer::Mat;
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Dense {
        rows: usize,
        cols: usize,
        data: Vec<C64>,
    }

    pub fn serialize<S: Serializer>(m: &Mat<C64>, s: S) -> Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Dense { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat<C64>, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.data.len() != dense.rows * dense.cols {
            return Err(serde::de::Error::custom("matrix data length does not match its shape"));
        }
        Ok(Mat::from_fn(dense.rows, dense.cols, |i, j| dense.data[i * dense.cols + j]))
    }
}

/// Lowest Dirichlet eigenvalues of the odd modular problem, on the reduced
/// domain with its cusp cut replaced by a Dirichlet wall at height `y_top`.
pub fn odd_dirichlet_eigenvalues(h: f64, n_boundary: usize, y_top: f64, refinements: usize, n: usize) -> Result<Vec<f64>> {
    let spec = crate::geometry::build_modular(y_top, 0.0, Symmetry::Odd)?;
    let spec = spec.with_dirichlet_cut(y_top)?;
    let mut mesh = Mesh::triangulate(&spec, h, n_boundary)?;
    for _ in 0..refinements {
        mesh = mesh.refine()?;
    }
    let (k, m) = assemble(&mesh, ElementOrder::Quadratic)?;
    let opts = EigOptions { shift: 0.0, ..EigOptions::default() };
    Ok(generalized_eigs(&k, &m, n, &opts)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_modular, BoundaryArc, CuspSpec, Family, FamilyParams, Identification, Mobius, ScalarField, SurfaceSpec};

    #[test]
    fn quadrature_is_degree_five() {
        let (w, l) = quadrature_7();
        // ∫ λ1^a λ2^b λ3^c = 2 a! b! c! / (a+b+c+2)! relative to area
        let fact = |n: u32| (1..=n).product::<u32>() as f64;
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let c = 5 - a - b;
                for &(a, b, c) in &[(a, b, c), (a, b, 0), (a, 0, 0)] {
                    let q: f64 = w.iter().zip(l.iter()).map(|(wi, li)| wi * li[0].powi(a as i32) * li[1].powi(b as i32) * li[2].powi(c as i32)).sum();
                    let exact = 2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
                    assert!((q - exact).abs() < 1e-15, "{a} {b} {c}");
                }
            }
        }
    }

    fn strip_spec(y0: f64, y1: f64) -> SurfaceSpec {
        let arc = |tag: &str, curve: Curve, kind| BoundaryArc { tag: tag.into(), curve, kind };
        SurfaceSpec {
            family: Family::A,
            params: FamilyParams::Modular { a: y1, q: 0.0 },
            arcs: vec![
                arc("top", Curve::HorocycleSegment { sigma: Mobius::identity(), a: y1, u0: 0.5, u1: -0.5 }, BoundaryKind::Cusp(0)),
                arc("left", Curve::VerticalRay { x: -0.5, y0: y1, y1: y0 }, BoundaryKind::Glued),
                arc("bottom", Curve::HorocycleSegment { sigma: Mobius::identity(), a: y0, u0: -0.5, u1: 0.5 }, BoundaryKind::Neumann),
                arc("right", Curve::VerticalRay { x: 0.5, y0, y1 }, BoundaryKind::Glued),
            ],
            identifications: vec![Identification { source: 1, target: 3, map: Mobius::translation(1.0) }],
            cusps: vec![CuspSpec { index: 0, a: y1, width: 1.0 }],
            conformal: None,
            potential: None,
            symmetry: Symmetry::None,
        }
    }

    /// Neumann eigenvalues of −y²(f″ − 4π²m²f) = λf on [y0, y1] by shooting in u = ln y.
    fn ode_eigenvalues(m: f64, y0: f64, y1: f64, count: usize) -> Vec<f64> {
        let end_slope = |lam: f64| {
            // f as a function of y: f'' = (4π²m² − λ/y²) f
            let steps = 4000;
            let hstep = (y1 - y0) / steps as f64;
            let rhs = |y: f64, f: f64, g: f64| (g, (4.0 * PI * PI * m * m - lam / (y * y)) * f);
            let (mut y, mut f, mut g) = (y0, 1.0, 0.0);
            for _ in 0..steps {
                let k1 = rhs(y, f, g);
                let k2 = rhs(y + hstep / 2.0, f + hstep / 2.0 * k1.0, g + hstep / 2.0 * k1.1);
                let k3 = rhs(y + hstep / 2.0, f + hstep / 2.0 * k2.0, g + hstep / 2.0 * k2.1);
                let k4 = rhs(y + hstep, f + hstep * k3.0, g + hstep * k3.1);
                f += hstep / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                g += hstep / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                y += hstep;
            }
            g
        };
        let mut out = Vec::new();
        let mut lam = -1.0;
        let mut prev = end_slope(lam);
        while out.len() < count {
            let next = lam + 0.05;
            let cur = end_slope(next);
            if prev == 0.0 || prev.signum() != cur.signum() {
                let (mut lo, mut hi) = (lam, next);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if end_slope(mid).signum() == end_slope(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            lam = next;
            prev = cur;
        }
        out
    }

    #[test]
    fn strip_matches_ode_oracle() {
        let spec = strip_spec(1.0, 2.0);
        let mesh = Mesh::triangulate(&spec, 0.1, 64).unwrap();
        let disc = Discretization::new(&mesh, ElementOrder::Quadratic, 4).unwrap();
        let eig = disc.solve_spectrum(12).unwrap();
        let mut oracle: Vec<f64> = ode_eigenvalues(0.0, 1.0, 2.0, 5);
        for m in 1..=3 {
            for l in ode_eigenvalues(m as f64, 1.0, 2.0, 4) {
                oracle.push(l);
                oracle.push(l);
            }
        }
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, o) in oracle.iter().take(10).enumerate() {
            let f = eig.values[i];
            assert!((f - o).abs() <= 1e-3 * o.abs().max(1.0), "{i}: {f} vs {o}");
        }
    }

    #[test]
    fn constants_are_harmonic_and_mass_is_area() {
        let spec = build_modular(2.0, 0.0, Symmetry::None).unwrap();
        let mesh = Mesh::triangulate(&spec, 0.08, 64).unwrap();
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let (k, m) = assemble(&mesh, order).unwrap();
            let ones = vec![1.0; k.n];
            assert!(k.matvec(&ones).iter().all(|x| x.abs() < 1e-10));
            let area = m.bilinear(&ones, &ones);
            assert!((area - (PI / 3.0 - 0.5)).abs() < 1e-2 * area, "{area}");
            assert!(k.asymmetry() < 1e-12 && m.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn conformal_factor_changes_mass_only() {
        let plain = build_modular(2.0, 0.0, Symmetry::None).unwrap();
        let mut bumped = plain.clone();
        bumped.conformal = Some(ScalarField::ModularBump { q: 1.0 });
        let mesh = Mesh::triangulate(&plain, 0.08, 64).unwrap();
        let mut mesh_b = mesh.clone();
        mesh_b.spec = bumped;
        let (k0, m0) = assemble(&mesh, ElementOrder::Quadratic).unwrap();
        let (k1, m1) = assemble(&mesh_b, ElementOrder::Quadratic).unwrap();
        assert!(k0.triplets().zip(k1.triplets()).all(|(a, b)| (a.2 - b.2).abs() < 1e-14));
        assert!(m0.triplets().zip(m1.triplets()).any(|(a, b)| (a.2 - b.2).abs() > 1e-6));
    }

    #[test]
    fn boundary_data_properties() {
        let spec = build_modular(2.0, 0.0, Symmetry::None).unwrap();
        let mesh = Mesh::triangulate(&spec, 0.08, 64).unwrap();
        let disc = Discretization::new(&mesh, ElementOrder::Quadratic, 8).unwrap();
        let eig = disc.solve_spectrum(20).unwrap();
        assert!(eig.values[0].abs() < 1e-6);
        let data = disc.spectral_data(&eig);
        let lay = data.layout();
        for m in -8i64..=8 {
            let c = data.coeffs[(0, lay.index(m, 0))];
            if m != 0 {
                assert!(c.norm() < 1e-10);
            }
        }
        for j in 0..data.len() {
            for m in 1..=8i64 {
                let (a, b) = (data.coeffs[(j, lay.index(m, 0))], data.coeffs[(j, lay.index(-m, 0))]);
                assert!((a - b.conj()).norm() < 1e-10);
            }
        }
        // N^M(s0) from the direct solve is symmetric under index negation
        let nd = disc.direct_nd(C64::new(0.5, 6.0)).unwrap();
        for a in 0..lay.dim() {
            for b in 0..lay.dim() {
                let (ma, _) = lay.mode(a);
                let (mb, _) = lay.mode(b);
                let swapped = nd[(lay.index(-mb, 0), lay.index(-ma, 0))];
                assert!((nd[(a, b)] - swapped).norm() < 1e-9 * (1.0 + nd[(a, b)].norm()));
            }
        }
        let json = data.to_json().unwrap();
        assert_eq!(NeumannSpectralData::from_json(&json).unwrap(), data);
    }

    #[test]
    fn series_matches_direct_solve_with_all_modes() {
        let spec = build_modular(2.0, 0.0, Symmetry::Even).unwrap();
        let mesh = Mesh::triangulate(&spec, 0.25, 16).unwrap();
        let disc = Discretization::new(&mesh, ElementOrder::Linear, 3).unwrap();
        let eig = disc.solve_spectrum(disc.n_free()).unwrap();
        let data = disc.spectral_data(&eig);
        let s = C64::new(0.7, 3.0);
        let direct = disc.direct_nd(s).unwrap();
        let series = data.series(s * (1.0 - s));
        for a in 0..direct.nrows() {
            for b in 0..direct.ncols() {
                assert!((direct[(a, b)] - series[(a, b)]).norm() < 1e-8, "{a},{b}");
            }
        }
    }
}
