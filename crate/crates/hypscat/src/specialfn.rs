//! Complex Gamma, Riemann zeta, the completed zeta function and the closed-form
//! scattering matrices of the arithmetic surfaces.
//!
//! Everything here is independent of the FEM pipeline and serves as the
//! reference against which computed scattering data are compared.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinates of the first thirty nontrivial zeros of ζ on the critical line.
///
/// Used for seeding and tolerance checks only.
pub const ZETA_ZERO_ORDINATES: [f64; 30] = [
    14.134725142,
    21.022039639,
    25.010857580,
    30.424876126,
    32.935061588,
    37.586178159,
    40.918719012,
    43.327073281,
    48.005150881,
    49.773832478,
    52.970321478,
    56.446247697,
    59.347044003,
    60.831778525,
    65.112544048,
    67.079810529,
    69.546401711,
    72.067157674,
    75.704690699,
    77.144840069,
    79.337375020,
    82.910380854,
    84.735492981,
    87.425274613,
    88.809111208,
    92.491899271,
    94.651344041,
    95.870634228,
    98.831194218,
    101.317851006,
];

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_nonpositive_integer(z: C64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// log Γ(z) for Re z ≥ 1/2 (Lanczos, g = 7).
fn ln_gamma_right(z: C64) -> C64 {
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS_COEF[0], 0.0);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Complex Gamma function.
///
/// Lanczos approximation on Re z ≥ 1/2 and the reflection formula elsewhere.
pub fn gamma_c(z: C64) -> Result<C64> {
    if is_nonpositive_integer(z) {
        return Err(Error::Pole(format!("Gamma at {z}")));
    }
    if z.re >= 0.5 {
        Ok(ln_gamma_right(z).exp())
    } else {
        let s = (PI * z).sin();
        Ok(PI / (s * ln_gamma_right(1.0 - z).exp()))
    }
}

/// Binomial-free Borwein coefficients d_0..d_n for the eta series.
fn borwein_d(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut d = Vec::with_capacity(n + 1);
    let mut term = 1.0 / nf;
    let mut sum = term;
    d.push(nf * sum);
    for i in 1..=n {
        let fi = i as f64;
        term *= 4.0 * (nf + fi - 1.0) * (nf - fi + 1.0) / ((2.0 * fi - 1.0) * (2.0 * fi));
        sum += term;
        d.push(nf * sum);
    }
    d
}

/// Dirichlet eta function by Borwein's accelerated alternating series.
fn eta_borwein(s: C64) -> C64 {
    let n = 40 + (1.4 * s.im.abs()).ceil() as usize;
    let d = borwein_d(n);
    let dn = d[n];
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kp = (k + 1) as f64;
        acc += sign * (d[k] - dn) * (-s * kp.ln()).exp();
    }
    -acc / dn
}

/// Bernoulli numbers B_2, B_4, ..., B_30.
const BERNOULLI_2K: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// ζ(s) by Euler–Maclaurin summation; valid for Re s > −10 away from s = 1.
pub fn zeta_euler_maclaurin(s: C64) -> C64 {
    let n = 20 + s.im.abs().ceil() as usize;
    let nf = n as f64;
    let mut sum = C64::new(0.0, 0.0);
    for k in 1..n {
        sum += (-s * (k as f64).ln()).exp();
    }
    let n_pow = (-s * nf.ln()).exp();
    sum += n_pow * nf / (s - 1.0) + 0.5 * n_pow;
    // rising product s(s+1)...(s+2k-2) / (2k)! · N^{-s-2k+1}
    let mut fac = s / nf * n_pow;
    let mut fact = 2.0;
    for (k, &b) in BERNOULLI_2K.iter().enumerate() {
        let kk = (k + 1) as f64;
        if k > 0 {
            fac *= (s + 2.0 * kk - 3.0) * (s + 2.0 * kk - 2.0) / (nf * nf);
            fact *= (2.0 * kk - 1.0) * (2.0 * kk);
        }
        sum += b / fact * fac;
    }
    sum
}

/// Riemann zeta function.
///
/// Borwein's eta acceleration on Re s ≥ 1/2, switching to Euler–Maclaurin
/// where 1 − 2^{1−s} is small, and the functional equation for Re s < 1/2.
pub fn zeta_c(s: C64) -> Result<C64> {
    if s == C64::new(1.0, 0.0) {
        return Err(Error::Pole("zeta at s = 1".into()));
    }
    if s.re < 0.5 {
        let one_minus = 1.0 - s;
        let chi = (s * 2f64.ln()).exp()
            * ((s - 1.0) * PI.ln()).exp()
            * (PI * s / 2.0).sin()
            * gamma_c(one_minus)?;
        return Ok(chi * zeta_c(one_minus)?);
    }
    let denom = 1.0 - ((1.0 - s) * 2f64.ln()).exp();
    if denom.norm() < 0.1 || s.re > 30.0 {
        return Ok(zeta_euler_maclaurin(s));
    }
    Ok(eta_borwein(s) / denom)
}

/// Completed zeta Λ(s) = π^{−s/2} Γ(s/2) ζ(s).
///
/// Evaluated directly for Re s ≥ 1/2 and through Λ(s) = Λ(1−s) otherwise.
pub fn lambda_completed(s: C64) -> Result<C64> {
    if s.norm() < 1e-300 || (s - 1.0).norm() < 1e-300 {
        return Err(Error::Pole(format!("Lambda at {s}")));
    }
    let s = if s.re < 0.5 { 1.0 - s } else { s };
    let pref = (-s / 2.0 * PI.ln()).exp();
    Ok(pref * gamma_c(s / 2.0)? * zeta_c(s)?)
}

/// Scattering coefficient of the modular surface, Λ(2s−1)/Λ(2s).
pub fn modular_phi(s: C64) -> Result<C64> {
    let num = lambda_completed(2.0 * s - 1.0)?;
    let den = lambda_completed(2.0 * s)?;
    if den.norm() == 0.0 {
        return Err(Error::Pole(format!("modular phi at {s}")));
    }
    Ok(num / den)
}

fn cpow_real(base: f64, e: C64) -> C64 {
    (e * base.ln()).exp()
}

/// (1 + q^{1−s}) / (1 + q^s), the Hecke-type rational factor.
pub fn hecke_factor(q: f64, s: C64) -> C64 {
    (1.0 + cpow_real(q, 1.0 - s)) / (1.0 + cpow_real(q, s))
}

/// Arithmetic surfaces with a known closed-form scattering matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormCase {
    /// Modular surface, cusp width 1.
    A0,
    /// Artin billiard with r = 1/√3 (Hecke triangle group q = 6), width 1.
    BSqrt3,
    /// Artin billiard with r = 1/√2 (Hecke triangle group q = 4), width 1.
    BSqrt2,
    /// Punctured torus with ℓ = arccosh 2, τ = 0.
    CAcosh2,
    /// Punctured torus with ℓ = arccosh 3, τ = 0.
    CAcosh3,
    /// Punctured torus with ℓ = arccosh 9, τ = 0.
    CAcosh9,
    /// Punctured torus with ℓ = 2 arccosh(3/2), τ = 1/2.
    CGutzwiller,
    /// Γ₀(4) with cusps ordered (∞, 0, 1/2).
    DGamma04,
}

impl ClosedFormCase {
    /// Number of cusps.
    pub fn cusps(self) -> usize {
        match self {
            ClosedFormCase::DGamma04 => 3,
            _ => 1,
        }
    }

    /// Cusp-width prefactor applied to the modular coefficient.
    ///
    /// The torus cases are normalized to a width-one cusp, which rescales the
    /// scattering coefficient of a width-w cusp by w^{1−2s}.
    pub fn width_note(self) -> &'static str {
        match self {
            ClosedFormCase::A0 | ClosedFormCase::BSqrt3 | ClosedFormCase::BSqrt2 => "width 1",
            ClosedFormCase::CAcosh2 => "width 2 rescaled: 2^{1-2s}",
            ClosedFormCase::CAcosh3 => "width 4 rescaled: 4^{1-2s}",
            ClosedFormCase::CAcosh9 => "width 2 rescaled: 2^{1-2s}",
            ClosedFormCase::CGutzwiller => "width 6 rescaled: 6^{1-2s}",
            ClosedFormCase::DGamma04 => "three width-1 cusps",
        }
    }
}

/// Closed-form scattering matrix of an arithmetic case.
pub fn closed_form_c(case: ClosedFormCase, s: C64) -> Result<Mat<C64>> {
    let phi = modular_phi(s)?;
    let one_m_2s = 1.0 - 2.0 * s;
    let scalar = match case {
        ClosedFormCase::A0 => phi,
        ClosedFormCase::BSqrt3 => hecke_factor(3.0, s) * phi,
        ClosedFormCase::BSqrt2 => hecke_factor(2.0, s) * phi,
        ClosedFormCase::CAcosh2 => {
            cpow_real(2.0, one_m_2s) * hecke_factor(2.0, s) * hecke_factor(3.0, s) * phi
        }
        ClosedFormCase::CAcosh3 => cpow_real(4.0, one_m_2s) * hecke_factor(2.0, s) * phi,
        ClosedFormCase::CAcosh9 => cpow_real(2.0, one_m_2s) * hecke_factor(5.0, s) * phi,
        ClosedFormCase::CGutzwiller => cpow_real(6.0, one_m_2s) * phi,
        ClosedFormCase::DGamma04 => {
            let den = cpow_real(2.0, 2.0 * s) - 1.0;
            if den.norm() < 1e-300 {
                return Err(Error::Pole(format!("Gamma0(4) prefactor at {s}")));
            }
            let diag = cpow_real(2.0, one_m_2s);
            let off = 1.0 - diag;
            let f = phi / den;
            return Ok(Mat::from_fn(3, 3, |i, j| if i == j { f * diag } else { f * off }));
        }
    };
    Ok(Mat::from_fn(1, 1, |_, _| scalar))
}

/// The 2×2 matrix M_q(s) = (q^{2s} − 1)^{−1} [[q−1, q^s − q^{1−s}], [q^s − q^{1−s}, q−1]].
pub fn eisenstein_mq(q: f64, s: C64) -> Result<Mat<C64>> {
    let den = cpow_real(q, 2.0 * s) - 1.0;
    if den.norm() < 1e-300 {
        return Err(Error::Pole(format!("M_q at {s}")));
    }
    let diag = C64::new(q - 1.0, 0.0) / den;
    let off = (cpow_real(q, s) - cpow_real(q, 1.0 - s)) / den;
    Ok(Mat::from_fn(2, 2, |i, j| if i == j { diag } else { off }))
}
