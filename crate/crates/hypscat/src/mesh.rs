//! Triangulation of the compact part M with matched nodes on glued sides.
//!
//! Meshing happens in Euclidean coordinates. The target edge length is
//! hyperbolic (Euclidean size h·y), graded down toward the cusp horocycles,
//! whose node count is fixed by `n_boundary`.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use spade::handles::FixedVertexHandle;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, PositionInTriangulation, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, Curve, Mobius, SurfaceSpec};

/// Growth rate of the hyperbolic size field away from the cusp cuts.
const GRADING: f64 = 0.3;
/// Tolerance for matching nodes across an identification.
const MATCH_TOL: f64 = 1e-9;

/// A boundary segment between consecutive nodes of one piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub arc: usize,
    pub v: [usize; 2],
    /// Curve parameters of the two ends.
    pub p: [f64; 2],
    /// Index into `Mesh::edges`.
    pub edge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub spec: SurfaceSpec,
    /// Hyperbolic target edge length.
    pub h: f64,
    pub n_boundary: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Node indices along each boundary piece, endpoints included, in curve order.
    pub arc_nodes: Vec<Vec<usize>>,
    /// Curve parameter of each entry of `arc_nodes`.
    pub arc_params: Vec<Vec<f64>>,
    /// Vertex → dof; vertices matched by an identification share a dof.
    pub dof_map: Vec<usize>,
    pub n_dofs: usize,
    /// Sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Local edge k of a triangle joins vertices k and (k + 1) mod 3.
    pub triangle_edges: Vec<[usize; 3]>,
    /// Edge → edge dof (used by quadratic elements).
    pub edge_dof: Vec<usize>,
    pub n_edge_dofs: usize,
}

/// Hyperbolic size field min(h, s_k + g·dist(z, cut_k)).
struct SizeField {
    h: f64,
    cusps: Vec<(Mobius, f64, f64)>,
}

impl SizeField {
    fn new(spec: &SurfaceSpec, h: f64, n_boundary: usize) -> Self {
        let mut cusps = Vec::new();
        for arc in &spec.arcs {
            if let (Curve::HorocycleSegment { sigma, a, .. }, BoundaryKind::Cusp(_)) = (&arc.curve, arc.kind) {
                cusps.push((sigma.inverse(), *a, 1.0 / (n_boundary as f64 * a)));
            }
        }
        Self { h, cusps }
    }

    fn hyperbolic(&self, z: C64) -> f64 {
        let mut s = self.h;
        for &(sinv, a, s0) in &self.cusps {
            let y = sinv.apply(z).im;
            if y > 0.0 {
                let d = (a / y).ln().abs();
                s = s.min(s0 + GRADING * d);
            }
        }
        s
    }

    fn euclidean(&self, z: C64) -> f64 {
        self.hyperbolic(z) * z.im
    }
}

/// Boundary polygon with segments bucketed by height for point queries.
struct Polygon {
    segs: Vec<(C64, C64)>,
    y0: f64,
    dy: f64,
    bins: Vec<Vec<usize>>,
}

impl Polygon {
    fn new(points: &[C64]) -> Self {
        let n = points.len();
        let segs: Vec<(C64, C64)> = (0..n).map(|i| (points[i], points[(i + 1) % n])).collect();
        let y0 = points.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
        let y1 = points.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
        let nb = (n / 4).clamp(16, 4096);
        let dy = (y1 - y0) / nb as f64 * (1.0 + 1e-9);
        let mut bins = vec![Vec::new(); nb];
        for (i, (a, b)) in segs.iter().enumerate() {
            let lo = (((a.im.min(b.im) - y0) / dy) as usize).min(nb - 1);
            let hi = (((a.im.max(b.im) - y0) / dy) as usize).min(nb - 1);
            for bin in &mut bins[lo..=hi] {
                bin.push(i);
            }
        }
        Self { segs, y0, dy, bins }
    }

    fn bin_range(&self, ylo: f64, yhi: f64) -> std::ops::RangeInclusive<usize> {
        let nb = self.bins.len() as isize;
        let lo = (((ylo - self.y0) / self.dy).floor() as isize).clamp(0, nb - 1) as usize;
        let hi = (((yhi - self.y0) / self.dy).floor() as isize).clamp(0, nb - 1) as usize;
        lo..=hi
    }

    fn contains(&self, z: C64) -> bool {
        if z.im < self.y0 || z.im > self.y0 + self.dy * self.bins.len() as f64 {
            return false;
        }
        let b = *self.bin_range(z.im, z.im).start();
        let mut inside = false;
        for &i in &self.bins[b] {
            let (a, c) = self.segs[i];
            if (a.im > z.im) != (c.im > z.im) {
                let x = a.re + (z.im - a.im) / (c.im - a.im) * (c.re - a.re);
                if z.re < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn distance(&self, z: C64, radius: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut seen = Vec::new();
        for b in self.bin_range(z.im - radius, z.im + radius) {
            for &i in &self.bins[b] {
                if seen.contains(&i) {
                    continue;
                }
                seen.push(i);
                best = best.min(segment_distance(z, self.segs[i].0, self.segs[i].1));
            }
        }
        best
    }
}

fn segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let t = (((z - a) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

fn circumcenter(a: C64, b: C64, c: C64) -> Option<C64> {
    let (b, c) = (b - a, c - a);
    let d = 2.0 * (b.re * c.im - b.im * c.re);
    if d.abs() < 1e-300 {
        return None;
    }
    let (b2, c2) = (b.norm_sqr(), c.norm_sqr());
    Some(a + C64::new(c.im * b2 - b.im * c2, b.re * c2 - c.re * b2) / d)
}

/// Whether the identification reverses curve parameters.
fn reverses(spec: &SurfaceSpec, source: usize, target: usize, map: &Mobius) -> bool {
    let z = map.apply(spec.arcs[source].curve.start());
    let t = &spec.arcs[target].curve;
    (z - t.end()).norm() < (z - t.start()).norm()
}

/// Parameters of the nodes on one piece.
fn piece_params(spec: &SurfaceSpec, arc: usize, size: &SizeField, n_boundary: usize) -> Vec<f64> {
    let piece = &spec.arcs[arc];
    let segments = match (&piece.curve, piece.kind) {
        (Curve::HorocycleSegment { u0, u1, .. }, BoundaryKind::Cusp(k)) => {
            let w = spec.cusps[k].width;
            ((n_boundary as f64 * (u1 - u0).abs() / w).round() as usize).max(1)
        }
        _ => 0,
    };
    if segments > 0 {
        return (0..=segments).map(|i| i as f64 / segments as f64).collect();
    }
    // equidistribute ∫ dℓ / H along the piece
    let len = piece.curve.hyperbolic_length();
    let samples = 400;
    let mut cum = vec![0.0; samples + 1];
    let dens = |p: f64| len / size.hyperbolic(piece.curve.point(p));
    let mut prev = dens(0.0);
    for i in 1..=samples {
        let cur = dens(i as f64 / samples as f64);
        cum[i] = cum[i - 1] + 0.5 * (prev + cur) / samples as f64;
        prev = cur;
    }
    let total = cum[samples];
    let n = (total.ceil() as usize).max(1);
    let mut out = vec![0.0];
    let mut j = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push((j as f64 + frac) / samples as f64);
    }
    out.push(1.0);
    out
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
    /// Compact class labels in order of first appearance.
    fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.0.len();
        let mut label = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if label[r] == usize::MAX {
                label[r] = count;
                count += 1;
            }
            out[i] = label[r];
        }
        (out, count)
    }
}

fn angles(a: C64, b: C64, c: C64) -> [f64; 3] {
    let ang = |p: C64, q: C64, r: C64| ((q - p) / (r - p)).arg().abs();
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

fn signed_area(a: C64, b: C64, c: C64) -> f64 {
    0.5 * ((b - a).re * (c - a).im - (b - a).im * (c - a).re)
}

impl Mesh {
    pub fn triangulate(spec: &SurfaceSpec, h: f64, n_boundary: usize) -> Result<Mesh> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("mesh size h = {h} must be positive")));
        }
        if n_boundary < 8 {
            return Err(Error::InvalidParameter(format!("n_boundary = {n_boundary} is below 8")));
        }
        spec.validate()?;
        let size = SizeField::new(spec, h, n_boundary);
        let n_arcs = spec.arcs.len();

        // boundary nodes; identified targets are images of their sources
        let mut positions: Vec<Option<Vec<C64>>> = vec![None; n_arcs];
        let mut params: Vec<Vec<f64>> = vec![Vec::new(); n_arcs];
        let target_of: HashMap<usize, usize> =
            spec.identifications.iter().enumerate().map(|(i, id)| (id.target, i)).collect();
        for i in 0..n_arcs {
            if target_of.contains_key(&i) {
                continue;
            }
            let p = piece_params(spec, i, &size, n_boundary);
            positions[i] = Some(p.iter().map(|&t| spec.arcs[i].curve.point(t)).collect());
            params[i] = p;
        }
        for id in &spec.identifications {
            let src = positions[id.source].clone().expect("source placed");
            let rev = reverses(spec, id.source, id.target, &id.map);
            let mut pts: Vec<C64> = src.iter().map(|&z| id.map.apply(z)).collect();
            let mut ps: Vec<f64> = params[id.source].iter().map(|&p| if rev { 1.0 - p } else { p }).collect();
            if rev {
                pts.reverse();
                ps.reverse();
            }
            positions[id.target] = Some(pts);
            params[id.target] = ps;
        }

        // boundary loop with shared corners
        let mut loop_pts: Vec<C64> = Vec::new();
        let mut arc_nodes: Vec<Vec<usize>> = vec![Vec::new(); n_arcs];
        for i in 0..n_arcs {
            let pts = positions[i].as_ref().unwrap();
            for (k, &z) in pts.iter().enumerate() {
                if k + 1 == pts.len() {
                    break;
                }
                arc_nodes[i].push(loop_pts.len());
                loop_pts.push(z);
            }
        }
        let nb = loop_pts.len();
        for i in 0..n_arcs {
            let next_first = arc_nodes[(i + 1) % n_arcs][0];
            arc_nodes[i].push(next_first);
        }
        for i in 0..n_arcs {
            let end = positions[i].as_ref().unwrap().last().copied().unwrap();
            if (end - loop_pts[*arc_nodes[i].last().unwrap()]).norm() > 1e-9 {
                return Err(Error::Mesh(format!("piece {} does not close onto its successor", spec.arcs[i].tag)));
            }
        }

        let polygon = Polygon::new(&loop_pts);
        let verts: Vec<Point2<f64>> = loop_pts.iter().map(|z| Point2::new(z.re, z.im)).collect();
        let cons: Vec<[usize; 2]> = (0..nb).map(|i| [i, (i + 1) % nb]).collect();
        let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, cons)
            .map_err(|e| Error::Mesh(format!("constrained triangulation failed: {e:?}")))?;
        if cdt.num_vertices() != nb {
            return Err(Error::Mesh("boundary nodes coincide".into()));
        }

        // size-driven interior insertion
        for _round in 0..80 {
            let mut cands: Vec<(f64, C64)> = Vec::new();
            for f in cdt.inner_faces() {
                let [a, b, c] = f.positions().map(|p| C64::new(p.x, p.y));
                let g = (a + b + c) / 3.0;
                if !polygon.contains(g) {
                    continue;
                }
                let longest = (a - b).norm().max((b - c).norm()).max((c - a).norm());
                let target = size.euclidean(g);
                if longest > 1.35 * target {
                    let pick = match circumcenter(a, b, c) {
                        Some(cc) if polygon.contains(cc) && polygon.distance(cc, target) > 0.45 * size.euclidean(cc) => cc,
                        _ => g,
                    };
                    cands.push((longest / target, pick));
                }
            }
            if cands.is_empty() {
                break;
            }
            cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
            let mut inserted = 0;
            for (_, z) in cands {
                let s = size.euclidean(z);
                let ok = match cdt.locate(Point2::new(z.re, z.im)) {
                    PositionInTriangulation::OnFace(f) => cdt
                        .face(f)
                        .positions()
                        .iter()
                        .all(|p| (C64::new(p.x, p.y) - z).norm() > 0.55 * s),
                    _ => false,
                };
                if ok && polygon.distance(z, s) > 0.3 * s {
                    cdt.insert(Point2::new(z.re, z.im))
                        .map_err(|e| Error::Mesh(format!("insertion failed: {e:?}")))?;
                    inserted += 1;
                }
            }
            if inserted == 0 {
                break;
            }
        }

        let extra = 4 * cdt.num_vertices() + 1000;
        cdt.refine(
            RefinementParameters::new()
                .with_angle_limit(AngleLimit::from_deg(25.0))
                .keep_constraint_edges()
                .exclude_outer_faces(true)
                .with_max_additional_vertices(extra),
        );

        // collect inner triangles, boundary nodes keep their indices
        let mut index: HashMap<FixedVertexHandle, usize> = HashMap::new();
        let mut vertices: Vec<[f64; 2]> = loop_pts.iter().map(|z| [z.re, z.im]).collect();
        let key = |z: C64| (z.re.to_bits(), z.im.to_bits());
        let boundary_lookup: HashMap<(u64, u64), usize> = loop_pts.iter().enumerate().map(|(i, &z)| (key(z), i)).collect();
        let mut triangles = Vec::new();
        for f in cdt.inner_faces() {
            let pos = f.positions().map(|p| C64::new(p.x, p.y));
            if !polygon.contains((pos[0] + pos[1] + pos[2]) / 3.0) {
                continue;
            }
            let mut tri = [0usize; 3];
            for (k, v) in f.vertices().iter().enumerate() {
                let fix = v.fix();
                let id = match index.get(&fix) {
                    Some(&i) => i,
                    None => {
                        let z = pos[k];
                        let i = match boundary_lookup.get(&key(z)) {
                            Some(&i) => i,
                            None => {
                                vertices.push([z.re, z.im]);
                                vertices.len() - 1
                            }
                        };
                        index.insert(fix, i);
                        i
                    }
                };
                tri[k] = id;
            }
            triangles.push(tri);
        }
        if triangles.is_empty() {
            return Err(Error::Mesh("triangulation produced no interior triangles".into()));
        }

        let mut mesh = Mesh {
            spec: spec.clone(),
            h,
            n_boundary,
            vertices,
            triangles,
            arc_nodes,
            arc_params: params,
            dof_map: Vec::new(),
            n_dofs: 0,
            edges: Vec::new(),
            triangle_edges: Vec::new(),
            edge_dof: Vec::new(),
            n_edge_dofs: 0,
        };
        mesh.orient()?;
        mesh.smooth(4, nb);
        mesh.build_topology()?;
        Ok(mesh)
    }

    fn point(&self, v: usize) -> C64 {
        C64::new(self.vertices[v][0], self.vertices[v][1])
    }

    fn orient(&mut self) -> Result<()> {
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangles[t];
            let area = signed_area(self.point(a), self.point(b), self.point(c));
            if area == 0.0 {
                return Err(Error::Mesh("degenerate triangle".into()));
            }
            if area < 0.0 {
                self.triangles[t].swap(1, 2);
            }
        }
        Ok(())
    }

    /// Guarded Laplacian smoothing of vertices with index ≥ `first_free`.
    fn smooth(&mut self, sweeps: usize, first_free: usize) {
        let nv = self.vertices.len();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        let min_angle_around = |mesh: &Mesh, v: usize, z: C64| -> f64 {
            let mut worst = f64::INFINITY;
            for &t in &incident[v] {
                let p = mesh.triangles[t].map(|w| if w == v { z } else { mesh.point(w) });
                if signed_area(p[0], p[1], p[2]) <= 0.0 {
                    return -1.0;
                }
                worst = angles(p[0], p[1], p[2]).iter().fold(worst, |m, &x| m.min(x));
            }
            worst
        };
        for _ in 0..sweeps {
            for v in first_free..nv {
                if incident[v].is_empty() {
                    continue;
                }
                let mut sum = C64::new(0.0, 0.0);
                let mut cnt = 0.0;
                for &t in &incident[v] {
                    for &w in &self.triangles[t] {
                        if w != v {
                            sum += self.point(w);
                            cnt += 1.0;
                        }
                    }
                }
                let target = sum / cnt;
                let old = self.point(v);
                let before = min_angle_around(self, v, old);
                let after = min_angle_around(self, v, target);
                if after > before {
                    self.vertices[v] = [target.re, target.im];
                }
            }
        }
    }

    /// Builds edges and the vertex/edge dof identification from `arc_nodes`.
    fn build_topology(&mut self) -> Result<()> {
        let nv = self.vertices.len();
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut tri_edges = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let e = [a.min(b), a.max(b)];
                te[k] = *edge_index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edges.len() - 1
                });
            }
            tri_edges.push(te);
        }
        for (i, nodes) in self.arc_nodes.iter().enumerate() {
            for w in nodes.windows(2) {
                if !edge_index.contains_key(&[w[0].min(w[1]), w[0].max(w[1])]) {
                    return Err(Error::Mesh(format!("boundary segment of {} missing from triangulation", self.spec.arcs[i].tag)));
                }
            }
        }

        let mut vsets = DisjointSet::new(nv);
        let mut esets = DisjointSet::new(edges.len());
        for id in &self.spec.identifications {
            let src = &self.arc_nodes[id.source];
            let mut tgt = self.arc_nodes[id.target].clone();
            if reverses(&self.spec, id.source, id.target, &id.map) {
                tgt.reverse();
            }
            if src.len() != tgt.len() {
                return Err(Error::Mesh(format!(
                    "identified pieces {} and {} carry {} and {} nodes",
                    self.spec.arcs[id.source].tag,
                    self.spec.arcs[id.target].tag,
                    src.len(),
                    tgt.len()
                )));
            }
            for (&a, &b) in src.iter().zip(tgt.iter()) {
                let w = id.map.apply(self.point(a));
                if (w - self.point(b)).norm() > MATCH_TOL {
                    return Err(Error::Mesh(format!(
                        "node matching failed between {} and {}",
                        self.spec.arcs[id.source].tag, self.spec.arcs[id.target].tag
                    )));
                }
                vsets.union(a, b);
            }
            for k in 0..src.len() - 1 {
                let e1 = edge_index[&[src[k].min(src[k + 1]), src[k].max(src[k + 1])]];
                let e2 = edge_index[&[tgt[k].min(tgt[k + 1]), tgt[k].max(tgt[k + 1])]];
                esets.union(e1, e2);
            }
        }
        let (dof_map, n_dofs) = vsets.labels();
        let (edge_dof, n_edge_dofs) = esets.labels();
        self.dof_map = dof_map;
        self.n_dofs = n_dofs;
        self.edges = edges;
        self.triangle_edges = tri_edges;
        self.edge_dof = edge_dof;
        self.n_edge_dofs = n_edge_dofs;
        Ok(())
    }

    /// Uniform quadrisection; new boundary midpoints sit on the true pieces at the
    /// hyperbolic midpoint, so matched nodes stay matched.
    pub fn refine(&self) -> Result<Mesh> {
        let mut vertices = self.vertices.clone();
        let mut mid = vec![usize::MAX; self.edges.len()];
        let mut arc_nodes = Vec::with_capacity(self.arc_nodes.len());
        let mut arc_params = Vec::with_capacity(self.arc_nodes.len());
        let edge_of = |a: usize, b: usize| [a.min(b), a.max(b)];
        let lookup: HashMap<[usize; 2], usize> = self.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let targets: HashMap<usize, usize> =
            self.spec.identifications.iter().enumerate().map(|(i, id)| (id.target, i)).collect();
        let mut mid_param: Vec<Vec<f64>> = vec![Vec::new(); self.arc_nodes.len()];
        for (i, nodes) in self.arc_nodes.iter().enumerate() {
            let ps = &self.arc_params[i];
            for k in 0..nodes.len() - 1 {
                mid_param[i].push(0.5 * (ps[k] + ps[k + 1]));
            }
        }
        // midpoints on pieces that are not identification targets
        for (i, nodes) in self.arc_nodes.iter().enumerate() {
            if targets.contains_key(&i) {
                continue;
            }
            let curve = &self.spec.arcs[i].curve;
            for k in 0..nodes.len() - 1 {
                let e = lookup[&edge_of(nodes[k], nodes[k + 1])];
                let z = curve.point(mid_param[i][k]);
                vertices.push([z.re, z.im]);
                mid[e] = vertices.len() - 1;
            }
        }
        for id in &self.spec.identifications {
            let src = &self.arc_nodes[id.source];
            let tgt = &self.arc_nodes[id.target];
            let rev = reverses(&self.spec, id.source, id.target, &id.map);
            let n = src.len() - 1;
            for k in 0..n {
                let es = lookup[&edge_of(src[k], src[k + 1])];
                let kt = if rev { n - 1 - k } else { k };
                let et = lookup[&edge_of(tgt[kt], tgt[kt + 1])];
                let zs = C64::new(vertices[mid[es]][0], vertices[mid[es]][1]);
                let z = id.map.apply(zs);
                vertices.push([z.re, z.im]);
                mid[et] = vertices.len() - 1;
            }
        }
        for (i, nodes) in self.arc_nodes.iter().enumerate() {
            let mut nn = Vec::with_capacity(2 * nodes.len());
            let mut pp = Vec::with_capacity(2 * nodes.len());
            for k in 0..nodes.len() {
                nn.push(nodes[k]);
                pp.push(self.arc_params[i][k]);
                if k + 1 < nodes.len() {
                    nn.push(mid[lookup[&edge_of(nodes[k], nodes[k + 1])]]);
                    pp.push(mid_param[i][k]);
                }
            }
            arc_nodes.push(nn);
            arc_params.push(pp);
        }
        for (e, [a, b]) in self.edges.iter().enumerate() {
            if mid[e] == usize::MAX {
                let z = 0.5 * (self.point(*a) + self.point(*b));
                vertices.push([z.re, z.im]);
                mid[e] = vertices.len() - 1;
            }
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.triangle_edges[t].map(|e| mid[e]);
            let [a, b, c] = *tri;
            triangles.push([a, e0, e2]);
            triangles.push([e0, b, e1]);
            triangles.push([e2, e1, c]);
            triangles.push([e0, e1, e2]);
        }
        let mut out = Mesh {
            spec: self.spec.clone(),
            h: self.h / 2.0,
            n_boundary: 2 * self.n_boundary,
            vertices,
            triangles,
            arc_nodes,
            arc_params,
            dof_map: Vec::new(),
            n_dofs: 0,
            edges: Vec::new(),
            triangle_edges: Vec::new(),
            edge_dof: Vec::new(),
            n_edge_dofs: 0,
        };
        for tri in &out.triangles {
            if signed_area(out.point(tri[0]), out.point(tri[1]), out.point(tri[2])) <= 0.0 {
                return Err(Error::Mesh("refinement inverted a triangle next to a curved piece".into()));
            }
        }
        out.build_topology()?;
        Ok(out)
    }

    pub fn vertex(&self, v: usize) -> C64 {
        self.point(v)
    }

    /// All boundary segments, piece by piece.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let lookup: HashMap<[usize; 2], usize> = self.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut out = Vec::new();
        for (i, nodes) in self.arc_nodes.iter().enumerate() {
            for k in 0..nodes.len() - 1 {
                let (a, b) = (nodes[k], nodes[k + 1]);
                out.push(BoundaryEdge {
                    arc: i,
                    v: [a, b],
                    p: [self.arc_params[i][k], self.arc_params[i][k + 1]],
                    edge: lookup[&[a.min(b), a.max(b)]],
                });
            }
        }
        out
    }

    /// Geometric midpoint of every edge: on the curve for boundary edges of
    /// circular arcs, the chord midpoint otherwise.
    pub fn edge_midpoints(&self) -> Vec<C64> {
        let mut mid: Vec<C64> = self.edges.iter().map(|e| (self.vertex(e[0]) + self.vertex(e[1])) * 0.5).collect();
        for be in self.boundary_edges() {
            let curve = &self.spec.arcs[be.arc].curve;
            if matches!(curve, Curve::CircularArc { .. }) {
                mid[be.edge] = curve.point(0.5 * (be.p[0] + be.p[1]));
            }
        }
        mid
    }

    /// Distinct dofs on the cusp cut of cusp k.
    pub fn cusp_dof_count(&self, k: usize) -> usize {
        let mut dofs: Vec<usize> = Vec::new();
        for (i, arc) in self.spec.arcs.iter().enumerate() {
            if arc.kind == BoundaryKind::Cusp(k) {
                dofs.extend(self.arc_nodes[i].iter().map(|&v| self.dof_map[v]));
            }
        }
        dofs.sort_unstable();
        dofs.dedup();
        dofs.len()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| angles(self.point(t[0]), self.point(t[1]), self.point(t[2])).into_iter().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    /// Sum of Euclidean triangle areas.
    pub fn euclidean_area(&self) -> f64 {
        self.triangles.iter().map(|t| signed_area(self.point(t[0]), self.point(t[1]), self.point(t[2]))).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        let mesh: Mesh = serde_json::from_str(s)?;
        mesh.check()?;
        Ok(mesh)
    }

    /// Structural invariants: orientation, y > 0, node matching.
    pub fn check(&self) -> Result<()> {
        for tri in &self.triangles {
            for &v in tri {
                if v >= self.vertices.len() || self.vertices[v][1] <= 0.0 {
                    return Err(Error::Mesh("vertex index out of range or below the real axis".into()));
                }
            }
            if signed_area(self.point(tri[0]), self.point(tri[1]), self.point(tri[2])) <= 0.0 {
                return Err(Error::Mesh("triangle with non-positive orientation".into()));
            }
        }
        let mut copy = self.clone();
        copy.build_topology()?;
        if copy.dof_map != self.dof_map || copy.edge_dof != self.edge_dof {
            return Err(Error::Mesh("stored dof identification is inconsistent".into()));
        }
        Ok(())
    }
}
