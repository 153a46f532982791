//! Resonances as zeros of det C̃(1−s), argument-principle counts, parameter
//! tracking and the embedded-eigenvalue scan.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::det;
use crate::scattering::{embedded_singular_values, scattering_matrix, InteriorNd, ScatteringOptions};

/// Anything that yields a scattering matrix at s.
pub trait Evaluator {
    fn scattering(&self, s: C64) -> Result<Mat<C64>>;
}

impl<F: Fn(C64) -> Result<Mat<C64>>> Evaluator for F {
    fn scattering(&self, s: C64) -> Result<Mat<C64>> {
        self(s)
    }
}

/// C̃(s) from an interior ND evaluator.
#[derive(Debug, Clone)]
pub struct NdEvaluator {
    pub nd: InteriorNd,
    pub options: ScatteringOptions,
}

impl NdEvaluator {
    pub fn new(nd: InteriorNd) -> Self {
        // off the critical line the gap warning is informative only
        Self { nd, options: ScatteringOptions { q_weight: true, require_gap: false } }
    }
}

impl Evaluator for NdEvaluator {
    fn scattering(&self, s: C64) -> Result<Mat<C64>> {
        Ok(scattering_matrix(&self.nd, s, &self.options)?.c)
    }
}

/// det C̃(1−s), whose zeros in Re s < 1/2 are the resonances.
pub fn det_c_inverse_arg<E: Evaluator + ?Sized>(s: C64, eval: &E) -> Result<C64> {
    let c = eval.scattering(1.0 - s)?;
    let d = det(&c);
    if !d.is_finite() {
        return Err(Error::Singular(format!("det C̃(1−s) is not finite at s = {s}")));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    CriticalLine,
    ImaginaryAxis,
    NearSpectrum,
    Generic,
}

impl Classification {
    pub fn of(s: C64) -> Self {
        if (s.re - 0.25).abs() <= 5e-3 {
            Classification::CriticalLine
        } else if s.re.abs() <= 5e-3 {
            Classification::ImaginaryAxis
        } else if (s.re - 0.5).abs() <= 1e-2 {
            Classification::NearSpectrum
        } else {
            Classification::Generic
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Classification::CriticalLine => "critical-line",
            Classification::ImaginaryAxis => "imaginary-axis",
            Classification::NearSpectrum => "near-spectrum",
            Classification::Generic => "generic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRecord {
    /// Zero of det C̃(1−s); the pole of C̃ sits at 1−s.
    pub s: C64,
    pub residual: f64,
    pub multiplicity: usize,
    pub class: Classification,
    pub param: Option<f64>,
}

impl ResonanceRecord {
    fn new(s: C64, residual: f64) -> Self {
        Self { s, residual, multiplicity: 1, class: Classification::of(s), param: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step: f64,
    /// Largest accepted Newton step; longer steps count as divergence.
    pub max_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 60, step: 1e-5, max_step: 1.0 }
    }
}

/// Newton on f(s)/Π(s − s_k) with a central-difference derivative.
fn newton_deflated<E: Evaluator + ?Sized>(seed: C64, eval: &E, found: &[C64], opts: &NewtonOptions) -> Result<ResonanceRecord> {
    let g = |s: C64| -> Result<C64> {
        let mut v = det_c_inverse_arg(s, eval)?;
        for &r in found {
            v /= s - r;
        }
        Ok(v)
    };
    if seed.re >= 0.5 - 1e-3 {
        return Err(Error::RootFinding(format!("seed {seed} lies in the near-spectrum band Re s ≥ 1/2 − 1e-3")));
    }
    let h = opts.step;
    let mut s = seed;
    for _ in 0..opts.max_iter {
        let f = g(s)?;
        let df = (g(s + h)? - g(s - h)?) / (2.0 * h);
        if df.norm() == 0.0 || !df.is_finite() {
            return Err(Error::RootFinding(format!("vanishing derivative at {s}")));
        }
        let delta = f / df;
        if !(delta.norm() <= opts.max_step) {
            return Err(Error::RootFinding(format!("Newton diverged from seed {seed} (step {} at {s})", delta.norm())));
        }
        s -= delta;
        if s.re >= 0.5 - 1e-3 {
            return Err(Error::RootFinding(format!("iterate {s} crossed into the near-spectrum band")));
        }
        if delta.norm() <= opts.tol {
            let residual = det_c_inverse_arg(s, eval)?.norm();
            return Ok(ResonanceRecord::new(s, residual));
        }
    }
    Err(Error::RootFinding(format!("no convergence from seed {seed} after {} iterations", opts.max_iter)))
}

pub fn newton_find<E: Evaluator + ?Sized>(seed: C64, eval: &E, opts: &NewtonOptions) -> Result<ResonanceRecord> {
    newton_deflated(seed, eval, &[], opts)
}

/// Roots found one after another, each factored out of the function before
/// the next Newton run. Every seed is tried until it fails; failures are returned
/// alongside the roots.
pub fn deflated_find<E: Evaluator + ?Sized>(
    seeds: &[C64],
    eval: &E,
    opts: &NewtonOptions,
    max_roots: usize,
) -> Result<(Vec<ResonanceRecord>, Vec<Error>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("deflated_find needs at least one seed".into()));
    }
    let mut roots: Vec<ResonanceRecord> = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        while roots.len() < max_roots {
            let found: Vec<C64> = roots.iter().map(|r| r.s).collect();
            // a seed sitting on a found root would divide by zero
            let start = if found.iter().any(|&r| (r - seed).norm() < 1e-6) { seed + C64::new(-1e-3, 1e-3) } else { seed };
            match newton_deflated(start, eval, &found, opts) {
                Ok(r) => roots.push(r),
                Err(e) => {
                    failures.push(e);
                    break;
                }
            }
        }
    }
    Ok((roots, failures))
}

/// Groups roots closer than `radius` (single linkage) into one record each,
/// located at the cluster mean with the cluster size as multiplicity.
pub fn cluster(records: &[ResonanceRecord], radius: f64) -> Vec<ResonanceRecord> {
    let n = records.len();
    let mut group: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (records[i].s - records[j].s).norm() <= radius {
                let (gi, gj) = (group[i], group[j]);
                for g in group.iter_mut() {
                    if *g == gi {
                        *g = gj;
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        if seen.contains(&group[i]) {
            continue;
        }
        seen.push(group[i]);
        let members: Vec<&ResonanceRecord> = (0..n).filter(|&k| group[k] == group[i]).map(|k| &records[k]).collect();
        let mean = members.iter().map(|r| r.s).sum::<C64>() / members.len() as f64;
        let residual = members.iter().map(|r| r.residual).fold(0.0, f64::max);
        out.push(ResonanceRecord {
            s: mean,
            residual,
            multiplicity: members.len(),
            class: Classification::of(mean),
            param: records[i].param,
        });
    }
    out
}

/// Axis-parallel rectangle [re0, re1] × [im0, im1]i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Rectangle {
    pub fn contains(&self, s: C64) -> bool {
        s.re > self.re0 && s.re < self.re1 && s.im > self.im0 && s.im < self.im1
    }
}

/// Winding number of det C̃(1−s) around the rectangle.
///
/// Each of the `n_points` initial segments is bisected while the phase jump
/// exceeds 0.5 rad, so the count is reliable once the function is resolved.
pub fn count_by_argument_principle<E: Evaluator + ?Sized>(rect: &Rectangle, eval: &E, n_points: usize) -> Result<i64> {
    if !(rect.re0 < rect.re1 && rect.im0 < rect.im1) {
        return Err(Error::InvalidParameter("empty rectangle".into()));
    }
    if rect.re1 > 0.5 - 1e-2 {
        return Err(Error::InvalidParameter("contour must stay 1e-2 away from Re s = 1/2".into()));
    }
    let corners = [
        C64::new(rect.re0, rect.im0),
        C64::new(rect.re1, rect.im0),
        C64::new(rect.re1, rect.im1),
        C64::new(rect.re0, rect.im1),
    ];
    let per_side = (n_points / 4).max(4);
    let f = |s: C64| -> Result<C64> {
        let v = det_c_inverse_arg(s, eval)?;
        if v.norm() == 0.0 {
            return Err(Error::RootFinding(format!("contour passes through a zero at {s}")));
        }
        Ok(v)
    };
    let mut total = 0.0;
    for side in 0..4 {
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        for k in 0..per_side {
            let z0 = a + (b - a) * (k as f64 / per_side as f64);
            let z1 = a + (b - a) * ((k + 1) as f64 / per_side as f64);
            total += phase_change(&f, z0, f(z0)?, z1, f(z1)?, 0)?;
        }
    }
    let winding = total / (2.0 * PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.1 {
        return Err(Error::RootFinding(format!("winding {winding:.3} is not close to an integer; increase n_points")));
    }
    Ok(rounded as i64)
}

fn phase_change(f: &impl Fn(C64) -> Result<C64>, z0: C64, f0: C64, z1: C64, f1: C64, depth: usize) -> Result<f64> {
    let d = (f1 / f0).arg();
    if d.abs() <= 0.5 || depth >= 24 {
        return Ok(d);
    }
    let zm = (z0 + z1) * 0.5;
    let fm = f(zm)?;
    Ok(phase_change(f, z0, f0, zm, fm, depth + 1)? + phase_change(f, zm, fm, z1, f1, depth + 1)?)
}

/// Local minima of |det C̃(1−s)| on a regular grid, usable as Newton seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub rect: Rectangle,
    pub spacing: f64,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self { rect: Rectangle { re0: -0.2, re1: 0.45, im0: 0.5, im1: 20.0 }, spacing: 0.05 }
    }
}

pub fn seed_scan<E: Evaluator + ?Sized>(grid: &SeedGrid, eval: &E) -> Result<Vec<C64>> {
    let nx = ((grid.rect.re1 - grid.rect.re0) / grid.spacing).round() as usize + 1;
    let ny = ((grid.rect.im1 - grid.rect.im0) / grid.spacing).round() as usize + 1;
    let at = |i: usize, j: usize| C64::new(grid.rect.re0 + i as f64 * grid.spacing, grid.rect.im0 + j as f64 * grid.spacing);
    let mut vals = vec![f64::INFINITY; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            // unevaluable points (exact poles of the series) are skipped
            if let Ok(v) = det_c_inverse_arg(at(i, j), eval) {
                vals[j * nx + i] = v.norm();
            }
        }
    }
    let mut seeds = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v = vals[j * nx + i];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                        continue;
                    }
                    if vals[jj as usize * nx + ii as usize] < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(at(i, j));
            }
        }
    }
    Ok(seeds)
}

/// Seed scan followed by Newton from every seed, merged and sorted by Im s.
pub fn resonance_scan<E: Evaluator + ?Sized>(grid: &SeedGrid, eval: &E, opts: &NewtonOptions, residual_tol: f64) -> Result<Vec<ResonanceRecord>> {
    let seeds = seed_scan(grid, eval)?;
    let mut out: Vec<ResonanceRecord> = Vec::new();
    for seed in seeds {
        let Ok(r) = newton_find(seed, eval, opts) else { continue };
        if r.residual > residual_tol || !grid.rect.contains(r.s) && (r.s - seed).norm() > 2.0 * grid.spacing {
            continue;
        }
        if out.iter().all(|o| (o.s - r.s).norm() > 1e-6) {
            out.push(r);
        }
    }
    out.sort_by(|a, b| a.s.im.total_cmp(&b.s.im));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: Vec<f64>,
    pub records: Vec<ResonanceRecord>,
    pub predictor_order: usize,
    /// Newton lost the root before the end of the grid.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub max_order: usize,
    /// Continuity guard: larger jumps between grid points split the trajectory.
    pub max_jump: f64,
    pub newton: NewtonOptions,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { max_order: 3, max_jump: 0.25, newton: NewtonOptions::default() }
    }
}

/// Lagrange extrapolation of the trailing points to x.
fn extrapolate(xs: &[f64], ys: &[C64], x: f64) -> C64 {
    let mut out = C64::new(0.0, 0.0);
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        out += ys[i] * w;
    }
    out
}

/// Follows each seed along the parameter grid; `build` produces the evaluator
/// for one parameter value and is called once per grid point.
pub fn track<E, F>(params: &[f64], seeds: &[C64], mut build: F, opts: &TrackOptions) -> Result<Vec<Trajectory>>
where
    E: Evaluator,
    F: FnMut(f64) -> Result<E>,
{
    if params.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter("tracking needs parameters and seeds".into()));
    }
    let mut active: Vec<Trajectory> = seeds
        .iter()
        .map(|_| Trajectory { params: vec![], records: vec![], predictor_order: opts.max_order, truncated: false })
        .collect();
    let mut done: Vec<Trajectory> = Vec::new();
    for (step, &p) in params.iter().enumerate() {
        let eval = build(p)?;
        let mut next_active = Vec::new();
        for (k, mut tr) in active.into_iter().enumerate() {
            let guess = if tr.records.is_empty() {
                if step == 0 { seeds[k] } else { continue }
            } else {
                let n = tr.records.len().min(opts.max_order + 1);
                let xs = &tr.params[tr.params.len() - n..];
                let ys: Vec<C64> = tr.records[tr.records.len() - n..].iter().map(|r| r.s).collect();
                extrapolate(xs, &ys, p)
            };
            match newton_find(guess, &eval, &opts.newton) {
                Ok(mut r) => {
                    r.param = Some(p);
                    if let Some(last) = tr.records.last() {
                        if (r.s - last.s).norm() > opts.max_jump {
                            done.push(tr);
                            tr = Trajectory { params: vec![], records: vec![], predictor_order: opts.max_order, truncated: false };
                        }
                    }
                    tr.params.push(p);
                    tr.records.push(r);
                    next_active.push(tr);
                }
                Err(_) => {
                    tr.truncated = true;
                    done.push(tr);
                }
            }
        }
        active = next_active;
    }
    done.extend(active);
    done.retain(|t| !t.records.is_empty());
    Ok(done)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedCandidate {
    pub t: f64,
    pub sigma: f64,
    /// Singular values of P Q̃ below the threshold at the refined t.
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedScan {
    pub samples: Vec<(f64, f64)>,
    pub candidates: Vec<EmbeddedCandidate>,
}

/// Smallest singular value of P Q̃(1/2 + it) on a t-grid. Every local minimum
/// below `prefilter` is refined by successive parabolic interpolation and kept
/// when the refined value falls below `threshold`.
pub fn embedded_scan(nd: &InteriorNd, t_grid: &[f64], threshold: f64, prefilter: f64) -> Result<EmbeddedScan> {
    let a = nd.cut_heights();
    let layout = nd.layout();
    let reduced = nd.reduced();
    let values = |t: f64| -> Result<Vec<f64>> {
        let s = C64::new(0.5, t);
        embedded_singular_values(&nd.eval(s)?.entries, s, &a, layout, reduced)
    };
    let sigma = |t: f64| -> Result<f64> { Ok(*values(t)?.last().expect("non-empty basis")) };
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        samples.push((t, sigma(t)?));
    }
    let mut candidates = Vec::new();
    for i in 1..samples.len().saturating_sub(1) {
        let (l, c, r) = (samples[i - 1], samples[i], samples[i + 1]);
        if !(c.1 <= l.1 && c.1 < r.1 && c.1 < prefilter) {
            continue;
        }
        let (t, v) = refine_minimum(&sigma, l.0, c.0, r.0)?;
        if v < threshold {
            let multiplicity = values(t)?.iter().filter(|&&x| x < threshold).count().max(1);
            candidates.push(EmbeddedCandidate { t, sigma: v, multiplicity });
        }
    }
    Ok(EmbeddedScan { samples, candidates })
}

/// Brent-style minimization of a bracketed minimum (parabolic steps with
/// golden-section fallback).
fn refine_minimum(f: &impl Fn(f64) -> Result<f64>, a0: f64, b0: f64, c0: f64) -> Result<(f64, f64)> {
    const GOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a0, c0);
    let (mut x, mut w, mut v) = (b0, b0, b0);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let tol = 1e-9 * x.abs().max(1.0);
        if (x - m).abs() <= 2.0 * tol - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol { x + d } else { x + tol.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x { a = x } else { b = x }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x { a = u } else { b = u }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok((x, fx))
}

/// CSV with columns param, Re s, Im s, residual, class, multiplicity (6 significant digits).
pub fn records_to_csv(records: &[ResonanceRecord]) -> String {
    let mut out = String::from("param,re_s,im_s,residual,class,multiplicity\n");
    for r in records {
        let param = r.param.map(|p| format!("{p:.5e}")).unwrap_or_default();
        let _ = writeln!(out, "{param},{:.5e},{:.5e},{:.5e},{},{}", r.s.re, r.s.im, r.residual, r.class.label(), r.multiplicity);
    }
    out
}

pub fn trajectories_to_csv(trajectories: &[Trajectory]) -> String {
    let all: Vec<ResonanceRecord> = trajectories.iter().flat_map(|t| t.records.iter().copied()).collect();
    records_to_csv(&all)
}

/// Scatter plot of resonances in the s-plane, trajectories drawn as polylines.
pub fn svg_plot(records: &[ResonanceRecord], trajectories: &[Trajectory]) -> String {
    let pts: Vec<C64> = records.iter().map(|r| r.s).chain(trajectories.iter().flat_map(|t| t.records.iter().map(|r| r.s))).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (-0.25f64, 0.55f64, 0.0f64, 1.0f64);
    for p in &pts {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y0 = y0.min(p.im);
        y1 = y1.max(p.im);
    }
    let y1 = y1 + 0.5;
    let (w, h) = (480.0, 640.0);
    let px = |s: C64| (40.0 + (s.re - x0) / (x1 - x0) * (w - 60.0), h - 30.0 - (s.im - y0) / (y1 - y0) * (h - 50.0));
    let colour = |c: Classification| match c {
        Classification::NearSpectrum => "blue",
        Classification::CriticalLine => "red",
        Classification::ImaginaryAxis => "green",
        Classification::Generic => "black",
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (re, col) in [(0.0, "green"), (0.25, "red"), (0.5, "blue")] {
        let (xa, ya) = px(C64::new(re, y0));
        let (_, yb) = px(C64::new(re, y1));
        let _ = writeln!(out, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xa:.2}" y2="{yb:.2}" stroke="{col}" stroke-opacity="0.3"/>"#);
    }
    for t in trajectories {
        let path: Vec<String> = t.records.iter().map(|r| {
            let (x, y) = px(r.s);
            format!("{x:.2},{y:.2}")
        }).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="gray"/>"#, path.join(" "));
    }
    for r in records.iter().chain(trajectories.iter().flat_map(|t| t.records.iter())) {
        let (x, y) = px(r.s);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#, colour(r.class));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::{closed_form_c, ClosedFormCase, ZETA_ZERO_ORDINATES};
    use proptest::prelude::*;

    fn a0(s: C64) -> Result<Mat<C64>> {
        closed_form_c(ClosedFormCase::A0, s)
    }

    #[test]
    fn det_unimodular_on_critical_line() {
        for k in 1..10 {
            let s = C64::new(0.5, k as f64 * 0.9);
            assert!((det_c_inverse_arg(s, &a0).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn newton_finds_zeta_zeros() {
        for (k, &g) in ZETA_ZERO_ORDINATES[..3].iter().enumerate() {
            let seed = C64::new(0.22, g / 2.0 - 0.05);
            let r = newton_find(seed, &a0, &NewtonOptions::default()).unwrap();
            assert!((r.s - C64::new(0.25, g / 2.0)).norm() < 1e-7, "zero {k}: {}", r.s);
            assert_eq!(r.class, Classification::CriticalLine);
            assert!(r.residual < 1e-6);
        }
    }

    #[test]
    fn hecke_imaginary_axis_resonance() {
        let b = |s: C64| closed_form_c(ClosedFormCase::BSqrt2, s);
        let r = newton_find(C64::new(0.02, 4.5), &b, &NewtonOptions::default()).unwrap();
        assert!((r.s - C64::new(0.0, PI / 2f64.ln())).norm() < 1e-7, "{}", r.s);
        assert_eq!(r.class, Classification::ImaginaryAxis);
    }

    #[test]
    fn newton_rejects_band_and_divergence() {
        assert!(newton_find(C64::new(0.4995, 3.0), &a0, &NewtonOptions::default()).is_err());
        let flat = |_s: C64| -> Result<Mat<C64>> { Ok(Mat::from_fn(1, 1, |_, _| C64::new(1.0, 0.0))) };
        assert!(newton_find(C64::new(0.2, 3.0), &flat, &NewtonOptions::default()).is_err());
    }

    #[test]
    fn deflation_resolves_a_triple_cluster() {
        let roots = [C64::new(0.25, 7.0675), C64::new(0.25, 7.0676), C64::new(0.2499, 7.068)];
        let f = move |s: C64| -> Result<Mat<C64>> {
            let z = 1.0 - s;
            let v: C64 = roots.iter().map(|&r| z - r).product::<C64>() * (z * 0.1).exp();
            Ok(Mat::from_fn(1, 1, |_, _| v))
        };
        let (found, _) = deflated_find(&[C64::new(0.2, 7.0)], &f, &NewtonOptions::default(), 3).unwrap();
        assert_eq!(found.len(), 3);
        for r in &roots {
            assert!(found.iter().any(|x| (x.s - r).norm() < 1e-6));
        }
        let merged = cluster(&found, 1e-3);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].multiplicity, 3);
    }

    #[test]
    fn argument_principle_counts() {
        let rect = Rectangle { re0: 0.1, re1: 0.4, im0: 6.5, im1: 7.5 };
        assert_eq!(count_by_argument_principle(&rect, &a0, 64).unwrap(), 1);
        let empty = Rectangle { re0: 0.1, re1: 0.4, im0: 1.0, im1: 2.0 };
        assert_eq!(count_by_argument_principle(&empty, &a0, 64).unwrap(), 0);
        let d = |s: C64| closed_form_c(ClosedFormCase::DGamma04, s);
        assert_eq!(count_by_argument_principle(&rect, &d, 64).unwrap(), 3);
        let axis = Rectangle { re0: -0.1, re1: 0.1, im0: 4.3, im1: 4.8 };
        assert_eq!(count_by_argument_principle(&axis, &d, 64).unwrap(), 2);
        assert!(count_by_argument_principle(&Rectangle { re1: 0.495, ..rect }, &a0, 64).is_err());
    }

    #[test]
    fn scan_recovers_first_zeros() {
        let grid = SeedGrid { rect: Rectangle { re0: -0.2, re1: 0.45, im0: 0.5, im1: 13.0 }, spacing: 0.05 };
        let found = resonance_scan(&grid, &a0, &NewtonOptions::default(), 1e-6).unwrap();
        let critical: Vec<f64> = found.iter().filter(|r| r.class == Classification::CriticalLine).map(|r| r.s.im).collect();
        for g in &ZETA_ZERO_ORDINATES[..3] {
            assert!(critical.iter().any(|&t| (t - g / 2.0).abs() < 1e-6), "{g}: {critical:?}");
        }
    }

    #[test]
    fn constant_family_tracks_constant() {
        let params: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        let tr = track(&params, &[C64::new(0.24, 7.05)], |_p| Ok(a0), &TrackOptions::default()).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(!tr[0].truncated);
        for r in &tr[0].records {
            assert!((r.s - tr[0].records[0].s).norm() < 1e-8);
        }
    }

    #[test]
    fn moving_root_is_followed() {
        // det C̃(1−s) = s − (0.25 + (5 + 2p²)i)
        let params: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let tr = track(
            &params,
            &[C64::new(0.25, 5.0)],
            |p| Ok(move |s: C64| -> Result<Mat<C64>> { Ok(Mat::from_fn(1, 1, |_, _| (1.0 - s) - C64::new(0.25, 5.0 + 2.0 * p * p))) }),
            &TrackOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].records.len(), 21);
        for (p, r) in tr[0].params.iter().zip(&tr[0].records) {
            assert!((r.s - C64::new(0.25, 5.0 + 2.0 * p * p)).norm() < 1e-8);
        }
    }

    #[test]
    fn parabolic_refinement_finds_v_minimum() {
        let f = |t: f64| Ok((t - 1.2345678).abs() * 3.0 + 1e-9);
        let (t, v) = refine_minimum(&f, 1.0, 1.25, 1.5).unwrap();
        assert!((t - 1.2345678).abs() < 1e-7, "{t}");
        assert!(v < 1e-6);
    }

    #[test]
    fn csv_and_svg_shapes() {
        let mut r = ResonanceRecord::new(C64::new(0.25, 7.0674), 1e-9);
        r.param = Some(1.0);
        let csv = records_to_csv(&[r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "param,re_s,im_s,residual,class,multiplicity");
        assert_eq!(lines[1], "1.00000e0,2.50000e-1,7.06740e0,1.00000e-9,critical-line,1");
        let svg = svg_plot(&[r], &[]);
        assert!(svg.contains("fill=\"red\"") && svg.ends_with("</svg>\n"));
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(re in -0.2f64..0.45, im in 0.5f64..20.0) {
            let s = C64::new(re, im);
            let a = det_c_inverse_arg(s, &a0).unwrap();
            let b = det_c_inverse_arg(s.conj(), &a0).unwrap();
            prop_assert!((a.conj() - b).norm() <= 1e-9 * a.norm().max(1.0));
        }

        #[test]
        fn classification_is_consistent(re in -0.3f64..0.6) {
            let c = Classification::of(C64::new(re, 3.0));
            match c {
                Classification::CriticalLine => prop_assert!((re - 0.25).abs() <= 5e-3),
                Classification::ImaginaryAxis => prop_assert!(re.abs() <= 5e-3),
                Classification::NearSpectrum => prop_assert!((re - 0.5).abs() <= 1e-2),
                Classification::Generic => prop_assert!((re - 0.25).abs() > 5e-3 && re.abs() > 5e-3 && (re - 0.5).abs() > 1e-2),
            }
        }
    }
}
