//! Fundamental domains of the four surface families.
//!
//! A surface is described by its compact part M: a closed, counterclockwise
//! loop of boundary pieces (geodesic arcs, vertical geodesic rays and
//! horocycle segments), a list of side pairings, and the cusp cut heights.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// s, λ = s(1−s) and t = −i(s − 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub s: C64,
}

impl SpectralPoint {
    pub fn from_s(s: C64) -> Self {
        Self { s }
    }

    pub fn from_t(t: C64) -> Self {
        Self { s: 0.5 + C64::new(0.0, 1.0) * t }
    }

    /// Solves s(1−s) = λ, picking Re s ≥ 1/2 when `upper` and Re s ≤ 1/2 otherwise.
    pub fn from_lambda(lambda: C64, upper: bool) -> Self {
        let root = (0.25 - lambda).sqrt();
        let root = if (root.re >= 0.0) == upper { root } else { -root };
        Self { s: 0.5 + root }
    }

    pub fn lambda(&self) -> C64 {
        self.s * (1.0 - self.s)
    }

    pub fn t(&self) -> C64 {
        C64::new(0.0, -1.0) * (self.s - 0.5)
    }
}

/// Orientation-preserving isometry z ↦ (az + b)/(cz + d) with ad − bc = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub m: [[f64; 2]; 2],
}

impl Mobius {
    /// Normalizes to unit determinant; the determinant must be positive.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !(det > 0.0) {
            return Err(Error::Geometry(format!("Möbius determinant {det} is not positive")));
        }
        let r = det.sqrt();
        Ok(Self { m: [[a / r, b / r], [c / r, d / r]] })
    }

    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn translation(b: f64) -> Self {
        Self { m: [[1.0, b], [0.0, 1.0]] }
    }

    pub fn apply(&self, z: C64) -> C64 {
        let [[a, b], [c, d]] = self.m;
        (a * z + b) / (c * z + d)
    }

    pub fn inverse(&self) -> Self {
        let [[a, b], [c, d]] = self.m;
        Self { m: [[d, -b], [-c, a]] }
    }

    /// self ∘ other.
    pub fn compose(&self, other: &Mobius) -> Self {
        let a = self.m;
        let b = other.m;
        Self {
            m: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
        }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Hyperbolic translation along the geodesic with ideal endpoints e1, e2
    /// that moves `from` to `to` (both on the geodesic).
    pub fn translation_along(e1: f64, e2: f64, from: C64, to: C64) -> Result<Self> {
        let (e1, e2) = if e1 > e2 { (e1, e2) } else { (e2, e1) };
        // C(z) = (z − e1)/(z − e2) sends the geodesic to the positive imaginary axis
        let c = Mobius::new(1.0, -e1, 1.0, -e2)?;
        let ratio = c.apply(to) / c.apply(from);
        if ratio.im.abs() > 1e-9 * ratio.norm() || ratio.re <= 0.0 {
            return Err(Error::Geometry(format!("points {from}, {to} are not on the geodesic ({e1}, {e2})")));
        }
        let k = ratio.re.sqrt();
        let scale = Mobius { m: [[k, 0.0], [0.0, 1.0 / k]] };
        Ok(c.inverse().compose(&scale).compose(&c))
    }
}

/// Hyperbolic distance in the upper half-plane.
pub fn hyperbolic_distance(z: C64, w: C64) -> f64 {
    let num = (z - w).norm_sqr();
    (1.0 + num / (2.0 * z.im * w.im)).acosh()
}

/// Geometric shape of a boundary piece, traversed from parameter 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Curve {
    /// z = center + radius·e^{iθ}, θ from theta0 to theta1.
    CircularArc { center: f64, radius: f64, theta0: f64, theta1: f64 },
    /// z = x + iy, y from y0 to y1.
    VerticalRay { x: f64, y0: f64, y1: f64 },
    /// z = σ(u + ia), u from u0 to u1; σ is the cusp scaling map.
    HorocycleSegment { sigma: Mobius, a: f64, u0: f64, u1: f64 },
}

fn ln_tan_half(theta: f64) -> f64 {
    (theta / 2.0).tan().ln()
}

impl Curve {
    /// Point at fraction `p` of the hyperbolic length.
    pub fn point(&self, p: f64) -> C64 {
        match *self {
            Curve::CircularArc { center, radius, theta0, theta1 } => {
                let (s0, s1) = (ln_tan_half(theta0), ln_tan_half(theta1));
                let th = 2.0 * (s0 + p * (s1 - s0)).exp().atan();
                C64::new(center + radius * th.cos(), radius * th.sin())
            }
            Curve::VerticalRay { x, y0, y1 } => C64::new(x, y0 * (y1 / y0).powf(p)),
            Curve::HorocycleSegment { sigma, a, u0, u1 } => sigma.apply(C64::new(u0 + p * (u1 - u0), a)),
        }
    }

    pub fn start(&self) -> C64 {
        self.point(0.0)
    }

    pub fn end(&self) -> C64 {
        self.point(1.0)
    }

    pub fn hyperbolic_length(&self) -> f64 {
        match *self {
            Curve::CircularArc { theta0, theta1, .. } => (ln_tan_half(theta1) - ln_tan_half(theta0)).abs(),
            Curve::VerticalRay { y0, y1, .. } => (y1 / y0).ln().abs(),
            Curve::HorocycleSegment { a, u0, u1, .. } => (u1 - u0).abs() / a,
        }
    }

    /// Whether the piece is a geodesic segment.
    pub fn is_geodesic(&self) -> bool {
        !matches!(self, Curve::HorocycleSegment { .. })
    }

    /// Closest point on the underlying full curve (circle, line or horocycle).
    pub fn project(&self, z: C64) -> C64 {
        match *self {
            Curve::CircularArc { center, radius, .. } => {
                let d = z - center;
                center + d * (radius / d.norm())
            }
            Curve::VerticalRay { x, .. } => C64::new(x, z.im),
            Curve::HorocycleSegment { sigma, a, .. } => {
                let w = sigma.inverse().apply(z);
                sigma.apply(C64::new(w.re, a))
            }
        }
    }

    /// Distance of z from the underlying full curve, in the curve's natural scale.
    pub fn distance_to_curve(&self, z: C64) -> f64 {
        match *self {
            Curve::CircularArc { center, radius, .. } => ((z - center).norm() - radius).abs(),
            Curve::VerticalRay { x, .. } => (z.re - x).abs(),
            Curve::HorocycleSegment { sigma, a, .. } => (sigma.inverse().apply(z).im - a).abs(),
        }
    }

    /// Cusp coordinate u of a point on a horocycle segment.
    pub fn cusp_u(&self, z: C64) -> Option<f64> {
        match *self {
            Curve::HorocycleSegment { sigma, .. } => Some(sigma.inverse().apply(z).re),
            _ => None,
        }
    }

    /// ∮ dx / y along the piece (Green's formula for hyperbolic area), Gauss–Legendre.
    fn area_contribution(&self) -> f64 {
        let (nodes, weights) = gauss_legendre_20();
        let panels = 64;
        let mut acc = 0.0;
        for k in 0..panels {
            let (a, b) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
            for (x, w) in nodes.iter().zip(weights.iter()) {
                let p = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let h = 1e-6;
                let dz = (self.point((p + h).min(1.0)) - self.point((p - h).max(0.0)))
                    / ((p + h).min(1.0) - (p - h).max(0.0));
                let z = self.point(p);
                acc += w * 0.5 * (b - a) * dz.re / z.im;
            }
        }
        acc
    }
}

fn gauss_legendre_20() -> ([f64; 20], [f64; 20]) {
    let half = [
        (0.076_526_521_133_497_33, 0.152_753_387_130_725_85),
        (0.227_785_851_141_645_08, 0.149_172_986_472_603_75),
        (0.373_706_088_715_419_56, 0.142_096_109_318_382_05),
        (0.510_867_001_950_827_1, 0.131_688_638_449_176_63),
        (0.636_053_680_726_515, 0.118_194_531_961_518_42),
        (0.746_331_906_460_150_8, 0.101_930_119_817_240_44),
        (0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
        (0.912_234_428_251_326, 0.062_672_048_334_109_06),
        (0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
        (0.993_128_599_185_094_9, 0.017_614_007_139_152_12),
    ];
    let mut x = [0.0; 20];
    let mut w = [0.0; 20];
    for (i, &(xi, wi)) in half.iter().enumerate() {
        x[2 * i] = -xi;
        x[2 * i + 1] = xi;
        w[2 * i] = wi;
        w[2 * i + 1] = wi;
    }
    (x, w)
}

/// Boundary condition carried by a piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "cusp", rename_all = "kebab-case")]
pub enum BoundaryKind {
    Neumann,
    Dirichlet,
    /// Part of the cut horocycle ∂M_k of cusp k.
    Cusp(usize),
    /// Glued to another piece by an identification.
    Glued,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub tag: String,
    pub curve: Curve,
    pub kind: BoundaryKind,
}

/// `map` sends piece `source` onto piece `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub source: usize,
    pub target: usize,
    pub map: Mobius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspSpec {
    pub index: usize,
    /// Cut height in the cusp coordinate.
    pub a: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    /// Full fundamental domain.
    None,
    /// Half domain 0 ≤ x ≤ 1/2 with Neumann conditions on the symmetry line.
    Even,
    /// Half domain with Dirichlet conditions.
    Odd,
}

/// Scalar field on the domain: conformal factor e^φ or potential V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarField {
    /// 1 + q·sin(5x − 0.5)·exp(−40((x−0.1)² + (y−1.5)²)).
    ModularBump { q: f64 },
    /// Arithmetic expression in `x` and `y`.
    Expression { expr: String },
}

/// Compiled form of a [`ScalarField`].
pub struct FieldFn {
    inner: FieldInner,
}

enum FieldInner {
    Bump(f64),
    Expr(evalexpr::Node<evalexpr::DefaultNumericTypes>),
}

impl ScalarField {
    pub fn compile(&self) -> Result<FieldFn> {
        match self {
            ScalarField::ModularBump { q } => Ok(FieldFn { inner: FieldInner::Bump(*q) }),
            ScalarField::Expression { expr } => {
                let node = evalexpr::build_operator_tree::<evalexpr::DefaultNumericTypes>(expr)
                    .map_err(|e| Error::Expression(format!("{expr}: {e}")))?;
                let f = FieldFn { inner: FieldInner::Expr(node) };
                f.eval(0.0, 1.0)?;
                Ok(f)
            }
        }
    }
}

impl FieldFn {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match &self.inner {
            FieldInner::Bump(q) => Ok(modular_bump(*q, x, y)),
            FieldInner::Expr(node) => {
                use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
                let mut ctx = HashMapContext::<evalexpr::DefaultNumericTypes>::new();
                ctx.set_value("x".into(), Value::Float(x)).map_err(|e| Error::Expression(e.to_string()))?;
                ctx.set_value("y".into(), Value::Float(y)).map_err(|e| Error::Expression(e.to_string()))?;
                ctx.set_value("pi".into(), Value::Float(PI)).map_err(|e| Error::Expression(e.to_string()))?;
                node.eval_number_with_context(&ctx).map_err(|e| Error::Expression(e.to_string()))
            }
        }
    }
}

/// The conformal factor of the deformed modular family.
pub fn modular_bump(q: f64, x: f64, y: f64) -> f64 {
    1.0 + q * (5.0 * x - 0.5).sin() * (-40.0 * ((x - 0.1).powi(2) + (y - 1.5).powi(2))).exp()
}

/// Family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyParams {
    Modular { a: f64, q: f64 },
    Artin { r: f64, a: f64 },
    GenusOne { ell: f64, tau: f64, a: f64 },
    GenusZero { a: [f64; 3] },
}

/// A glued hyperbolic fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub family: Family,
    pub params: FamilyParams,
    /// Boundary of M as a counterclockwise loop.
    pub arcs: Vec<BoundaryArc>,
    pub identifications: Vec<Identification>,
    pub cusps: Vec<CuspSpec>,
    pub conformal: Option<ScalarField>,
    pub potential: Option<ScalarField>,
    pub symmetry: Symmetry,
}

impl SurfaceSpec {
    pub fn cusp_count(&self) -> usize {
        self.cusps.len()
    }

    pub fn cut_heights(&self) -> Vec<f64> {
        self.cusps.iter().map(|c| c.a).collect()
    }

    /// Factor relating integrals over the meshed domain to integrals over the
    /// full surface (2 for symmetry-reduced domains).
    pub fn reduction_factor(&self) -> f64 {
        match self.symmetry {
            Symmetry::None => 1.0,
            _ => 2.0,
        }
    }

    /// Hyperbolic area of the meshed domain, ∮ dx/y.
    pub fn area(&self) -> f64 {
        self.arcs.iter().map(|a| a.curve.area_contribution()).sum()
    }

    /// Boundary loop sampled with `per_arc` segments per piece (closing point omitted).
    pub fn boundary_polyline(&self, per_arc: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(per_arc * self.arcs.len());
        for arc in &self.arcs {
            for k in 0..per_arc {
                out.push(arc.curve.point(k as f64 / per_arc as f64));
            }
        }
        out
    }

    /// Axis-aligned bounding box (xmin, xmax, ymin, ymax) of the meshed domain.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let poly = self.boundary_polyline(64);
        poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |b, z| {
            (b.0.min(z.re), b.1.max(z.re), b.2.min(z.im), b.3.max(z.im))
        })
    }

    /// Checks loop closure, identification isometries, cut placement and
    /// positivity of the conformal factor.
    pub fn validate(&self) -> Result<()> {
        let n = self.arcs.len();
        for i in 0..n {
            let e = self.arcs[i].curve.end();
            let s = self.arcs[(i + 1) % n].curve.start();
            if (e - s).norm() > 1e-10 {
                return Err(Error::Geometry(format!(
                    "boundary loop open between {} and {}: {e} vs {s}",
                    self.arcs[i].tag,
                    self.arcs[(i + 1) % n].tag
                )));
            }
            if self.arcs[i].curve.start().im <= 0.0 {
                return Err(Error::Geometry(format!("{} leaves the upper half-plane", self.arcs[i].tag)));
            }
        }
        let mut glued = vec![0usize; n];
        for id in &self.identifications {
            if (id.map.det() - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry("identification is not normalized".into()));
            }
            glued[id.source] += 1;
            glued[id.target] += 1;
            let src = &self.arcs[id.source].curve;
            let tgt = &self.arcs[id.target].curve;
            for k in 0..=16 {
                let p = k as f64 / 16.0;
                let z = src.point(p);
                let w = id.map.apply(z);
                let proj = tgt.project(w);
                if hyperbolic_distance(w, proj) > 1e-12 {
                    return Err(Error::Geometry(format!(
                        "identification {} → {} misses the target at p = {p}",
                        self.arcs[id.source].tag, self.arcs[id.target].tag
                    )));
                }
            }
            let ends = [id.map.apply(src.start()), id.map.apply(src.end())];
            let tends = [tgt.start(), tgt.end()];
            let matched = |a: C64| tends.iter().any(|&b| hyperbolic_distance(a, b) < 1e-10);
            if !(matched(ends[0]) && matched(ends[1])) {
                return Err(Error::Geometry(format!(
                    "identification {} → {} does not match endpoints",
                    self.arcs[id.source].tag, self.arcs[id.target].tag
                )));
            }
            let (ls, lt) = (src.hyperbolic_length(), tgt.hyperbolic_length());
            if (ls - lt).abs() > 1e-10 * (1.0 + ls) {
                return Err(Error::Geometry(format!("identified lengths differ: {ls} vs {lt}")));
            }
        }
        for (i, arc) in self.arcs.iter().enumerate() {
            let expect = usize::from(arc.kind == BoundaryKind::Glued);
            if glued[i] != expect {
                return Err(Error::Geometry(format!("piece {} appears in {} identifications", arc.tag, glued[i])));
            }
        }
        // every cut must lie above all non-horocycle pieces of its cusp neighbourhood
        for arc in &self.arcs {
            if let Curve::HorocycleSegment { sigma, .. } = arc.curve {
                let sinv = sigma.inverse();
                let a = match arc.kind {
                    BoundaryKind::Cusp(k) => self.cusps[k].a,
                    _ => continue,
                };
                for other in &self.arcs {
                    if !other.curve.is_geodesic() {
                        continue;
                    }
                    for k in 1..16 {
                        let w = sinv.apply(other.curve.point(k as f64 / 16.0));
                        if w.im > a + 1e-12 && w.re.abs() <= 0.5 + 1e-12 && w.im.is_finite() {
                            // only sides that bound the cusp strip may reach above the cut
                            if !matches!(other.curve, Curve::VerticalRay { .. }) && !is_cusp_side(&other.curve, &sigma) {
                                return Err(Error::Geometry(format!(
                                    "horocycle cut of cusp at height {a} intersects {}",
                                    other.tag
                                )));
                            }
                        }
                    }
                }
            }
        }
        if let Some(f) = &self.conformal {
            let f = f.compile()?;
            let mut samples = self.boundary_polyline(32);
            let (x0, x1, y0, y1) = self.bounding_box();
            let poly = self.boundary_polyline(128);
            for i in 0..=60 {
                for j in 0..=60 {
                    let z = C64::new(x0 + (x1 - x0) * i as f64 / 60.0, y0 + (y1 - y0) * j as f64 / 60.0);
                    if point_in_polygon(&poly, z) {
                        samples.push(z);
                    }
                }
            }
            for z in samples {
                if !(f.eval(z.re, z.im)? > 0.0) {
                    return Err(Error::Geometry(format!("conformal factor not positive at {z}")));
                }
            }
        }
        Ok(())
    }

    /// Copy with the cusp horocycles replaced by Dirichlet cuts at height `y_top`
    /// (cusp ∞ only); used for purely discrete symmetry classes.
    pub fn with_dirichlet_cut(&self, y_top: f64) -> Result<SurfaceSpec> {
        let mut out = self.clone();
        for arc in out.arcs.iter_mut() {
            match (&mut arc.curve, arc.kind) {
                (Curve::HorocycleSegment { sigma, a, .. }, BoundaryKind::Cusp(_)) => {
                    if *sigma != Mobius::identity() {
                        return Err(Error::Geometry("Dirichlet cut supports the cusp at infinity only".into()));
                    }
                    *a = y_top;
                    arc.kind = BoundaryKind::Dirichlet;
                }
                (Curve::VerticalRay { y0, y1, .. }, _) => {
                    let old_top = y0.max(*y1);
                    if *y0 == old_top {
                        *y0 = y_top;
                    } else {
                        *y1 = y_top;
                    }
                }
                _ => {}
            }
        }
        out.cusps.clear();
        Ok(out)
    }
}

/// Even-odd rule against a closed polyline.
pub fn point_in_polygon(poly: &[C64], z: C64) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.im > z.im) != (b.im > z.im) {
            let x = a.re + (z.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if z.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// A geodesic piece whose image under σ^{−1} is a vertical line bounding the cusp strip.
fn is_cusp_side(curve: &Curve, sigma: &Mobius) -> bool {
    let sinv = sigma.inverse();
    let a = sinv.apply(curve.point(0.25));
    let b = sinv.apply(curve.point(0.75));
    (a.re - b.re).abs() < 1e-9
}

fn arc(tag: &str, curve: Curve, kind: BoundaryKind) -> BoundaryArc {
    BoundaryArc { tag: tag.to_string(), curve, kind }
}

fn horocycle_inf(a: f64, u0: f64, u1: f64, k: usize) -> BoundaryArc {
    arc("horocycle", Curve::HorocycleSegment { sigma: Mobius::identity(), a, u0, u1 }, BoundaryKind::Cusp(k))
}

/// Modular surface A_φ with conformal factor 1 + q·c(x, y).
pub fn build_modular(a: f64, q: f64, symmetry: Symmetry) -> Result<SurfaceSpec> {
    if !(a > 1.0) {
        return Err(Error::InvalidParameter(format!("cut height a = {a} must exceed 1")));
    }
    if q != 0.0 && symmetry != Symmetry::None {
        return Err(Error::InvalidParameter("symmetry reduction requires q = 0".into()));
    }
    let y_corner = 3f64.sqrt() / 2.0;
    let (arcs, identifications) = match symmetry {
        Symmetry::None => {
            let arcs = vec![
                horocycle_inf(a, 0.5, -0.5, 0),
                arc("left", Curve::VerticalRay { x: -0.5, y0: a, y1: y_corner }, BoundaryKind::Glued),
                arc(
                    "arc-left",
                    Curve::CircularArc { center: 0.0, radius: 1.0, theta0: 2.0 * PI / 3.0, theta1: PI / 2.0 },
                    BoundaryKind::Glued,
                ),
                arc(
                    "arc-right",
                    Curve::CircularArc { center: 0.0, radius: 1.0, theta0: PI / 2.0, theta1: PI / 3.0 },
                    BoundaryKind::Glued,
                ),
                arc("right", Curve::VerticalRay { x: 0.5, y0: y_corner, y1: a }, BoundaryKind::Glued),
            ];
            let ids = vec![
                Identification { source: 1, target: 4, map: Mobius::translation(1.0) },
                Identification { source: 2, target: 3, map: Mobius::new(0.0, -1.0, 1.0, 0.0)? },
            ];
            (arcs, ids)
        }
        Symmetry::Even | Symmetry::Odd => {
            let kind = if symmetry == Symmetry::Even { BoundaryKind::Neumann } else { BoundaryKind::Dirichlet };
            (half_domain(1.0, a, kind), Vec::new())
        }
    };
    let conformal = if q != 0.0 { Some(ScalarField::ModularBump { q }) } else { None };
    let spec = SurfaceSpec {
        family: Family::A,
        params: FamilyParams::Modular { a, q },
        arcs,
        identifications,
        cusps: vec![CuspSpec { index: 0, a, width: 1.0 }],
        conformal,
        potential: None,
        symmetry,
    };
    spec.validate()?;
    Ok(spec)
}

/// Half domain {x² + y² ≥ r², 0 ≤ x ≤ 1/2, y ≤ a}.
fn half_domain(r: f64, a: f64, kind: BoundaryKind) -> Vec<BoundaryArc> {
    let theta0 = (0.5 / r).acos();
    vec![
        horocycle_inf(a, 0.5, 0.0, 0),
        arc("symmetry", Curve::VerticalRay { x: 0.0, y0: a, y1: r }, kind),
        arc("arc", Curve::CircularArc { center: 0.0, radius: r, theta0: PI / 2.0, theta1: theta0 }, kind),
        arc("side", Curve::VerticalRay { x: 0.5, y0: r * theta0.sin(), y1: a }, kind),
    ]
}

/// Artin billiard B_r: reduced domain with Neumann conditions.
pub fn build_artin(r: f64, a: f64) -> Result<SurfaceSpec> {
    if !(r > 0.5) {
        return Err(Error::InvalidParameter(format!("r = {r} must exceed 1/2")));
    }
    if !(a > r) {
        return Err(Error::InvalidParameter(format!("cut height a = {a} must exceed r = {r}")));
    }
    let spec = SurfaceSpec {
        family: Family::B,
        params: FamilyParams::Artin { r, a },
        arcs: half_domain(r, a, BoundaryKind::Neumann),
        identifications: Vec::new(),
        cusps: vec![CuspSpec { index: 0, a, width: 1.0 }],
        conformal: None,
        potential: None,
        symmetry: Symmetry::Even,
    };
    spec.validate()?;
    Ok(spec)
}

/// α(ℓ) = arcsin(tanh(ℓ/2)).
pub fn torus_angle(ell: f64) -> f64 {
    (ell / 2.0).tanh().asin()
}

/// Length of the second distinguished closed geodesic of C_{ℓ,τ}.
pub fn second_geodesic_length(ell: f64, tau: f64) -> Result<f64> {
    if !(ell > 0.0) {
        return Err(Error::InvalidParameter(format!("ℓ = {ell} must be positive")));
    }
    let ch = (ell / 2.0).cosh();
    let sh = (ell / 2.0).sinh();
    Ok(((ell * tau).cosh() * ch * ch + 1.0) / (sh * sh)).map(f64::acosh)
}

/// Positive root of cosh ℓ − cosh(ℓτ) = 2.
pub fn equal_length_locus(tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("τ = {tau} must lie in [0, 1)")));
    }
    let f = |l: f64| l.cosh() - (l * tau).cosh() - 2.0;
    let df = |l: f64| l.sinh() - tau * (l * tau).sinh();
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 || hi - lo < 4.0 * f64::EPSILON * hi {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / df(x);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() < 1e-15 * x {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Once-punctured torus C_{ℓ,τ}.
pub fn build_genus_one(ell: f64, tau: f64, a: f64) -> Result<SurfaceSpec> {
    if !(ell > 0.0) {
        return Err(Error::InvalidParameter(format!("ℓ = {ell} must be positive")));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("τ = {tau} must lie in [0, 1)")));
    }
    let alpha = torus_angle(ell);
    let r1 = alpha.sin() / 4.0;
    let r2 = alpha.cos() / 4.0;
    if !(a > r1.max(r2) + 1e-9) {
        return Err(Error::Geometry(format!("horocycle at {a} intersects the boundary arcs (need > {})", r1.max(r2))));
    }
    let half = ell / 2.0;
    // arclength σ from the top of a circle centred on the real axis,
    // positive toward decreasing θ on γ1 and toward increasing θ on γ4
    let theta_g1 = |s: f64| 2.0 * (-s).exp().atan();
    let theta_g4 = |s: f64| 2.0 * s.exp().atan();
    let on_circle = |c: f64, r: f64, th: f64| C64::new(c + r * th.cos(), r * th.sin());
    let g1 = |s: f64| on_circle(0.0, r1, theta_g1(s));
    let p1 = g1(half);
    let p1p = g1(-half);
    let p4 = on_circle(0.5, r1, theta_g4(half));
    let p5 = on_circle(-0.5, r1, theta_g4(-half));

    let s2 = Mobius::translation_along(0.25 - r2, 0.25 + r2, p1, p4)?;
    let t_map = Mobius::translation_along(-r1, r1, p1p, p1)?;
    let shift_left = Mobius::translation(-1.0);

    // twist breakpoints on γ1
    let wrap = |x: f64| {
        let mut y = (x + half).rem_euclid(ell) - half;
        if y >= half {
            y -= ell;
        }
        y
    };
    let mut breaks = vec![-half, half];
    for base in [0.0, half] {
        for k in -2..=2 {
            let b = base - tau * ell + k as f64 * ell;
            if b > -half + 1e-12 && b < half - 1e-12 {
                breaks.push(b);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    struct Sub {
        s0: f64,
        s1: f64,
        t0: f64,
        t1: f64,
        map: Mobius,
    }
    let mut subs = Vec::new();
    for w in breaks.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let mid = 0.5 * (s0 + s1);
        let tm = wrap(mid + tau * ell);
        let delta = tm - mid;
        let a_delta = Mobius::translation_along(-r1, r1, g1(mid), g1(mid + delta))?;
        let mut map = s2.compose(&a_delta);
        if tm < 0.0 {
            map = shift_left.compose(&map);
        }
        subs.push(Sub { s0, s1, t0: s0 + delta, t1: s1 + delta, map });
    }

    let mut arcs = Vec::new();
    let mut ids = Vec::new();
    arcs.push(horocycle_inf(a, 0.5, -0.5, 0));
    arcs.push(arc("gamma7", Curve::VerticalRay { x: -0.5, y0: a, y1: r1 }, BoundaryKind::Glued));
    let idx_g7 = 1;
    // γ5: target pieces with σ' < 0, traversed from the top (σ' = 0) down to P5 (σ' = −ℓ/2)
    let mut g5: Vec<&Sub> = subs.iter().filter(|s| s.t0 + s.t1 < 0.0).collect();
    g5.sort_by(|a, b| b.t1.partial_cmp(&a.t1).unwrap());
    let mut g5_idx = Vec::new();
    for s in &g5 {
        g5_idx.push(arcs.len());
        arcs.push(arc(
            "gamma5",
            Curve::CircularArc { center: -0.5, radius: r1, theta0: theta_g4(s.t1), theta1: theta_g4(s.t0) },
            BoundaryKind::Glued,
        ));
    }
    let th = |z: C64, c: f64| (z - c).arg();
    let idx_g3 = arcs.len();
    arcs.push(arc(
        "gamma3",
        Curve::CircularArc { center: -0.25, radius: r2, theta0: th(p5, -0.25), theta1: th(p1p, -0.25) },
        BoundaryKind::Glued,
    ));
    let mut g1_idx = Vec::new();
    for s in &subs {
        g1_idx.push(arcs.len());
        arcs.push(arc(
            "gamma1",
            Curve::CircularArc { center: 0.0, radius: r1, theta0: theta_g1(s.s0), theta1: theta_g1(s.s1) },
            BoundaryKind::Glued,
        ));
    }
    let idx_g2 = arcs.len();
    arcs.push(arc(
        "gamma2",
        Curve::CircularArc { center: 0.25, radius: r2, theta0: th(p1, 0.25), theta1: th(p4, 0.25) },
        BoundaryKind::Glued,
    ));
    // γ4: from P4 (σ' = ℓ/2) to the top (σ' = 0)
    let mut g4: Vec<&Sub> = subs.iter().filter(|s| s.t0 + s.t1 >= 0.0).collect();
    g4.sort_by(|a, b| b.t1.partial_cmp(&a.t1).unwrap());
    let mut g4_idx = Vec::new();
    for s in &g4 {
        g4_idx.push(arcs.len());
        arcs.push(arc(
            "gamma4",
            Curve::CircularArc { center: 0.5, radius: r1, theta0: theta_g4(s.t1), theta1: theta_g4(s.t0) },
            BoundaryKind::Glued,
        ));
    }
    let idx_g6 = arcs.len();
    arcs.push(arc("gamma6", Curve::VerticalRay { x: 0.5, y0: r1, y1: a }, BoundaryKind::Glued));

    ids.push(Identification { source: idx_g6, target: idx_g7, map: shift_left });
    ids.push(Identification { source: idx_g3, target: idx_g2, map: t_map });
    for (i, s) in subs.iter().enumerate() {
        let target = if s.t0 + s.t1 < 0.0 {
            g5_idx[g5.iter().position(|x| std::ptr::eq(*x, s)).unwrap()]
        } else {
            g4_idx[g4.iter().position(|x| std::ptr::eq(*x, s)).unwrap()]
        };
        ids.push(Identification { source: g1_idx[i], target, map: s.map });
    }
    let spec = SurfaceSpec {
        family: Family::C,
        params: FamilyParams::GenusOne { ell, tau, a },
        arcs,
        identifications: ids,
        cusps: vec![CuspSpec { index: 0, a, width: 1.0 }],
        conformal: None,
        potential: None,
        symmetry: Symmetry::None,
    };
    spec.validate()?;
    Ok(spec)
}

/// Default cut height for C_{ℓ,τ}.
pub fn genus_one_default_cut(ell: f64) -> f64 {
    (2.0 * torus_angle(ell).sin() / 4.0).max(0.5)
}

/// Γ₀(4): cusps ordered (∞, 0, 1/2) with cut heights in the cusp coordinates.
pub fn build_genus_zero_three_cusps(a: [f64; 3]) -> Result<SurfaceSpec> {
    let [a_inf, a0, ah] = a;
    if !(a_inf > 0.25) {
        return Err(Error::Geometry(format!("cut a_∞ = {a_inf} intersects the boundary circles")));
    }
    // horocycle disks at 0 and ±1/2 have diameter 1/(4a); they must stay inside the
    // domain strip in their own cusp coordinates, which needs a > 1/2 for the
    // vertical sides to stay below the cut, and must not touch each other
    for (name, v) in [("a_0", a0), ("a_1/2", ah)] {
        if !(v > 0.5) {
            return Err(Error::Geometry(format!("cut {name} = {v} too low: horocycle disks overlap")));
        }
    }
    if 1.0 / (4.0 * ah) >= a_inf {
        return Err(Error::Geometry("cusp 1/2 horocycle reaches the cut at infinity".into()));
    }
    let sigma0 = Mobius::new(0.0, -0.5, 2.0, 0.0)?;
    let sigma_h = Mobius::new(1.0, -0.5, 2.0, 0.0)?;
    let sigma_h_left = Mobius::translation(-1.0).compose(&sigma_h);
    let hor = |tag: &str, sigma: Mobius, a: f64, u0: f64, u1: f64, k: usize| {
        arc(tag, Curve::HorocycleSegment { sigma, a, u0, u1 }, BoundaryKind::Cusp(k))
    };
    let c_left = hor("horocycle-half-left", sigma_h_left, ah, 0.0, -0.5, 2);
    let c_zero = hor("horocycle-zero", sigma0, a0, 0.5, -0.5, 1);
    let c_right = hor("horocycle-half-right", sigma_h, ah, 0.5, 0.0, 2);
    let th = |z: C64, c: f64| (z - c).arg();
    let g2 = Curve::CircularArc {
        center: -0.25,
        radius: 0.25,
        theta0: th(c_left.curve.end(), -0.25),
        theta1: th(c_zero.curve.start(), -0.25),
    };
    let g1 = Curve::CircularArc {
        center: 0.25,
        radius: 0.25,
        theta0: th(c_zero.curve.end(), 0.25),
        theta1: th(c_right.curve.start(), 0.25),
    };
    let y_h = 1.0 / (4.0 * ah);
    let arcs = vec![
        horocycle_inf(a_inf, 0.5, -0.5, 0),
        arc("gamma3", Curve::VerticalRay { x: -0.5, y0: a_inf, y1: y_h }, BoundaryKind::Glued),
        c_left,
        arc("gamma2", g2, BoundaryKind::Glued),
        c_zero,
        arc("gamma1", g1, BoundaryKind::Glued),
        c_right,
        arc("gamma4", Curve::VerticalRay { x: 0.5, y0: y_h, y1: a_inf }, BoundaryKind::Glued),
    ];
    let ids = vec![
        Identification { source: 3, target: 5, map: Mobius::new(1.0, 0.0, 4.0, 1.0)? },
        Identification { source: 1, target: 7, map: Mobius::translation(1.0) },
    ];
    let spec = SurfaceSpec {
        family: Family::D,
        params: FamilyParams::GenusZero { a },
        arcs,
        identifications: ids,
        cusps: vec![
            CuspSpec { index: 0, a: a_inf, width: 1.0 },
            CuspSpec { index: 1, a: a0, width: 1.0 },
            CuspSpec { index: 2, a: ah, width: 1.0 },
        ],
        conformal: None,
        potential: None,
        symmetry: Symmetry::None,
    };
    spec.validate()?;
    Ok(spec)
}
