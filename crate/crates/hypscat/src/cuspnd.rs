//! Neumann-to-Dirichlet map of the cusp ends.
//!
//! On the cusp Z_k = (ℝ/ℤ) × [a_k, ∞) the decaying solution of
//! (Δ − s(1−s))ψ = 0 in Fourier mode m ≠ 0 is √y K_{it}(2π|m|y) e^{2πimx}.
//! The ND map is diagonal in the Fourier basis with entries
//! −(1/2 + x K′_{it}(x)/K_{it}(x))^{−1}, x = 2π|m|a_k.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LENTZ_TINY: f64 = 1e-30;
pub const CF_TOL: f64 = 1e-14;
pub const CF_MAX_ITER: usize = 10_000;

/// Ordering of the truncated boundary basis α = (m, k): cusp-major, m ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLayout {
    /// Fourier truncation |m| ≤ j.
    pub j: usize,
    /// Number of cusps.
    pub p: usize,
}

impl BasisLayout {
    pub fn new(j: usize, p: usize) -> Self {
        Self { j, p }
    }

    pub fn modes_per_cusp(&self) -> usize {
        2 * self.j + 1
    }

    pub fn dim(&self) -> usize {
        self.p * self.modes_per_cusp()
    }

    pub fn index(&self, m: i64, k: usize) -> usize {
        debug_assert!(m.unsigned_abs() as usize <= self.j && k < self.p);
        k * self.modes_per_cusp() + (m + self.j as i64) as usize
    }

    /// Inverse of [`BasisLayout::index`].
    pub fn mode(&self, idx: usize) -> (i64, usize) {
        let w = self.modes_per_cusp();
        ((idx % w) as i64 - self.j as i64, idx / w)
    }

    pub fn zero_mode(&self, k: usize) -> usize {
        self.index(0, k)
    }
}

/// t with s = 1/2 + i t.
pub fn t_of_s(s: C64) -> C64 {
    C64::new(0.0, -1.0) * (s - 0.5)
}

/// 1/2 + x K′_{it}(x)/K_{it}(x) by the modified Lentz algorithm.
pub fn bessel_ratio_cf(t: C64, x: f64, tol: f64, max_iter: usize) -> Result<C64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("Bessel argument x = {x} must be positive")));
    }
    let t2 = t * t;
    let p = |n: usize| -t2 - ((2 * n - 1) as f64).powi(2) / 4.0;
    let q = |n: usize| C64::new(2.0 * x + 2.0 * n as f64, 0.0);
    let tiny = C64::new(LENTZ_TINY, 0.0);
    let mut f = C64::new(-x, 0.0);
    if f.norm() < LENTZ_TINY {
        f = tiny;
    }
    let mut c = f;
    let mut d = C64::new(0.0, 0.0);
    for n in 1..=max_iter {
        let a = if n == 1 { -p(1) } else { p(n) };
        let b = q(n);
        d = b + a * d;
        if d.norm() < LENTZ_TINY {
            d = tiny;
        }
        c = b + a / c;
        if c.norm() < LENTZ_TINY {
            c = tiny;
        }
        d = d.inv();
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).norm() < tol {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, partial: f })
}

/// K_{it}(x) and K′_{it}(x) by trapezoidal quadrature on a shifted contour.
///
/// Uses K_ν(x) = ½∫ exp(−x cosh w − νw) dw along w = u − iθ, with θ chosen
/// so the stationary phase sits near u = 0. Both values are scaled by the
/// same positive factor, so only their ratio is meaningful.
pub fn bessel_k_contour(t: C64, x: f64) -> (C64, C64) {
    let nu = C64::new(0.0, 1.0) * t;
    let theta_max = PI / 2.0 - 0.15;
    let theta = (t.re.abs() / x).min(1.0).asin().min(theta_max) * t.re.signum();
    let shift = C64::new(0.0, -theta);
    let phase = |u: f64| {
        let w = u + shift;
        -x * w.cosh() - nu * w
    };
    let scale = phase(0.0).re;
    let h = 0.01;
    let term = |u: f64| {
        let v = (phase(u) - scale).exp();
        (v, -(u + shift).cosh() * v)
    };
    let (mut k, mut kp) = term(0.0);
    for i in 1..200_000 {
        let u = i as f64 * h;
        let (a, ap) = term(u);
        let (b, bp) = term(-u);
        k += a + b;
        kp += ap + bp;
        if i > 10 && a.norm() + b.norm() + ap.norm() + bp.norm() < 1e-18 * k.norm() {
            break;
        }
    }
    (k, kp)
}

/// 1/2 + x K′/K by contour quadrature; the fallback when the continued fraction stalls.
pub fn bessel_ratio_quadrature(t: C64, x: f64) -> C64 {
    let (k, kp) = bessel_k_contour(t, x);
    0.5 + x * kp / k
}

/// 1/2 + x K′/K: continued fraction with automatic quadrature fallback.
pub fn bessel_ratio(t: C64, x: f64) -> Result<C64> {
    match bessel_ratio_cf(t, x, CF_TOL, CF_MAX_ITER) {
        Ok(v) => Ok(v),
        Err(Error::NoConvergence { .. }) => Ok(bessel_ratio_quadrature(t, x)),
        Err(e) => Err(e),
    }
}

/// Diagonal cusp ND matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuspNdMatrix {
    pub s: C64,
    pub layout: BasisLayout,
    pub a: Vec<f64>,
    pub diag: Vec<C64>,
}

impl CuspNdMatrix {
    pub fn to_dense(&self) -> Mat<C64> {
        let n = self.layout.dim();
        Mat::from_fn(n, n, |i, j| if i == j { self.diag[i] } else { C64::new(0.0, 0.0) })
    }
}

/// Single diagonal entry −(1/2 + x K′/K)^{−1} at x = 2π|m|a, zero for m = 0.
pub fn cusp_nd_entry(s: C64, m: i64, a: f64) -> Result<C64> {
    if m == 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let x = 2.0 * PI * m.unsigned_abs() as f64 * a;
    let r = bessel_ratio(t_of_s(s), x)?;
    Ok(-r.inv())
}

/// Cusp ND matrix for cut heights `a` and truncation `j`.
pub fn cusp_nd(s: C64, a: &[f64], j: usize) -> Result<CuspNdMatrix> {
    let layout = BasisLayout::new(j, a.len());
    let mut diag = vec![C64::new(0.0, 0.0); layout.dim()];
    for (k, &ak) in a.iter().enumerate() {
        if !(ak > 0.0) {
            return Err(Error::InvalidParameter(format!("cut height a_{k} = {ak}")));
        }
        for m in 1..=j as i64 {
            let d = cusp_nd_entry(s, m, ak)?;
            diag[layout.index(m, k)] = d;
            diag[layout.index(-m, k)] = d;
        }
    }
    Ok(CuspNdMatrix { s, layout, a: a.to_vec(), diag })
}

/// Orthogonal projection onto the m = 0 modes.
pub fn averaging_matrix(j: usize, p: usize) -> Mat<C64> {
    let layout = BasisLayout::new(j, p);
    let n = layout.dim();
    Mat::from_fn(n, n, |r, c| {
        if r == c && layout.mode(r).0 == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: Gauss–Legendre panels on a contour with a smaller shift.
    fn oracle_ratio(t: C64, x: f64) -> C64 {
        let nu = C64::new(0.0, 1.0) * t;
        let theta = ((t.re.abs() / x).min(1.0).asin() * 0.8).min(1.3) * t.re.signum();
        let shift = C64::new(0.0, -theta);
        let f = |u: f64| -x * (u + shift).cosh() - nu * (u + shift);
        let scale = f(0.0).re;
        // 10-point Gauss–Legendre nodes and weights on [−1, 1]
        let nodes = [
            0.148_874_338_981_631_2,
            0.433_395_394_129_247_2,
            0.679_409_568_299_024_4,
            0.865_063_366_688_984_5,
            0.973_906_528_517_171_7,
        ];
        let weights = [
            0.295_524_224_714_752_9,
            0.269_266_719_309_996_4,
            0.219_086_362_515_982_0,
            0.149_451_349_150_580_6,
            0.066_671_344_308_688_1,
        ];
        let (mut k, mut kp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let width = 0.05;
        let lim = 12.0;
        let panels = (2.0 * lim / width) as usize;
        for pnl in 0..panels {
            let c = -lim + (pnl as f64 + 0.5) * width;
            for (xi, wi) in nodes.iter().zip(weights.iter()) {
                for sg in [-1.0, 1.0] {
                    let u = c + sg * xi * width / 2.0;
                    let v = (f(u) - scale).exp() * wi * width / 2.0;
                    k += v;
                    kp -= (u + shift).cosh() * v;
                }
            }
        }
        0.5 + x * kp / k
    }

    #[test]
    fn half_order_closed_form() {
        let r = bessel_ratio_cf(C64::new(0.0, 0.5), 3.0, CF_TOL, CF_MAX_ITER).unwrap();
        assert!((r + 3.0).norm() < 1e-12);
    }

    #[test]
    fn cf_matches_quadrature_grid() {
        let ts = [
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(5.0, 0.0),
            C64::new(10.0, 0.0),
            C64::new(15.0, 0.0),
            C64::new(5.0, -0.3),
        ];
        let mut worst: f64 = 0.0;
        for &t in &ts {
            for m in [1.0, 2.0, 5.0, 20.0] {
                for a in [0.5, 1.0, 2.0] {
                    let x = 2.0 * PI * m * a;
                    let cf = bessel_ratio_cf(t, x, CF_TOL, CF_MAX_ITER).unwrap();
                    let q = oracle_ratio(t, x);
                    worst = worst.max((cf - q).norm() / q.norm());
                }
            }
        }
        assert!(worst <= 1e-9, "worst relative error {worst}");
    }

    #[test]
    fn library_fallback_matches_cf() {
        for &(t, x) in &[(C64::new(5.0, 0.0), 9.42), (C64::new(12.0, -1.0), 6.0), (C64::new(3.0, 0.0), 30.0)] {
            let cf = bessel_ratio_cf(t, x, CF_TOL, CF_MAX_ITER).unwrap();
            let q = bessel_ratio_quadrature(t, x);
            assert!((cf - q).norm() / cf.norm() < 1e-10);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        match bessel_ratio_cf(C64::new(5.0, 0.0), 1.0, 1e-14, 3) {
            Err(Error::NoConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_mode_and_asymptotics() {
        let s = C64::new(0.5, 3.0);
        let nd = cusp_nd(s, &[1.0], 20).unwrap();
        assert_eq!(nd.diag[nd.layout.zero_mode(0)], C64::new(0.0, 0.0));
        for m in 1..=20i64 {
            let d = nd.diag[nd.layout.index(m, 0)];
            assert_eq!(d, nd.diag[nd.layout.index(-m, 0)]);
            if m >= 5 {
                let asym = 1.0 / (2.0 * PI * m as f64);
                assert!((d - asym).norm() / asym < 0.1);
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let s = C64::new(0.3, 4.2);
        let a = cusp_nd(s, &[1.5, 0.7], 6).unwrap();
        let b = cusp_nd(s.conj(), &[1.5, 0.7], 6).unwrap();
        for (x, y) in a.diag.iter().zip(b.diag.iter()) {
            assert!((x.conj() - y).norm() < 1e-13);
        }
    }

    #[test]
    fn averaging_projection() {
        let av = averaging_matrix(1, 1);
        assert_eq!(av[(1, 1)], C64::new(1.0, 0.0));
        assert_eq!(av[(0, 0)], C64::new(0.0, 0.0));
        let av = averaging_matrix(4, 3);
        let tr: C64 = (0..av.nrows()).map(|i| av[(i, i)]).sum();
        assert_eq!(tr, C64::new(3.0, 0.0));
        let sq = &av * &av;
        assert_eq!(sq, av);
    }

    #[test]
    fn layout_round_trip() {
        let l = BasisLayout::new(3, 2);
        for idx in 0..l.dim() {
            let (m, k) = l.mode(idx);
            assert_eq!(l.index(m, k), idx);
        }
    }

    proptest! {
        #[test]
        fn continuous_in_t(t in 0.2f64..18.0, a in 0.5f64..2.0, m in 1i64..6) {
            let s0 = C64::new(0.5, t);
            let s1 = C64::new(0.5, t + 1e-4);
            let d0 = cusp_nd_entry(s0, m, a).unwrap();
            let d1 = cusp_nd_entry(s1, m, a).unwrap();
            let d2 = cusp_nd_entry(C64::new(0.5, t + 2e-4), m, a).unwrap();
            let slope = (d1 - d0).norm();
            prop_assert!((d2 - d1).norm() <= 10.0 * slope + 1e-12);
        }
    }
}
