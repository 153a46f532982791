//! Dense and sparse linear algebra used by the pipeline.
//!
//! Factorizations (sparse Cholesky/LU, dense SVD/QR/LU, symmetric eigen) are
//! delegated to `faer`. The generalized sparse eigensolver is a shift-invert
//! block Lanczos iteration with full reorthogonalization in the M-inner product.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Real sparse symmetric matrix in compressed row form.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(ay.iter()).map(|(a, b)| a * b).sum()
    }

    /// Largest relative asymmetry |a_ij − a_ji| / max|a|.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        self.triplets().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max) / scale
    }

    /// A + alpha·B with the union sparsity pattern.
    pub fn add_scaled(&self, b: &SparseSym, alpha: f64) -> SparseSym {
        let t: Vec<_> = self.triplets().chain(b.triplets().map(|(r, c, v)| (r, c, alpha * v))).collect();
        SparseSym::from_triplets(self.n, &t)
    }

    /// Symmetric permutation P A Pᵀ with new index perm[i] for old i.
    pub fn permuted(&self, perm: &[usize]) -> SparseSym {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (perm[r], perm[c], v)).collect();
        SparseSym::from_triplets(self.n, &t)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::Dimension(format!("sparse build: {e:?}")))
    }
}

/// Sparse LU factorization of K − μM for complex μ.
pub struct ComplexShiftedSolver {
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
    pub n: usize,
}

impl ComplexShiftedSolver {
    pub fn new(k: &SparseSym, m: &SparseSym, mu: C64) -> Result<Self> {
        if k.n != m.n {
            return Err(Error::Dimension(format!("K is {} but M is {}", k.n, m.n)));
        }
        let t: Vec<_> = k
            .triplets()
            .map(|(r, c, v)| Triplet::new(r, c, C64::new(v, 0.0)))
            .chain(m.triplets().map(|(r, c, v)| Triplet::new(r, c, -mu * v)))
            .collect();
        let a = SparseColMat::<usize, C64>::try_new_from_triplets(k.n, k.n, &t)
            .map_err(|e| Error::Dimension(format!("sparse build: {e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::Singular(format!("sparse LU at mu = {mu}: {e:?}")))?;
        Ok(Self { lu, n: k.n })
    }

    /// Solves in place for all columns of `rhs`.
    pub fn solve_in_place(&self, rhs: &mut Mat<C64>) {
        self.lu.solve_in_place(rhs.as_mut());
    }
}

/// Solves (K − μM) x = b for one or more right-hand sides.
pub fn solve_sparse_complex(k: &SparseSym, m: &SparseSym, mu: C64, b: &Mat<C64>) -> Result<Mat<C64>> {
    let solver = ComplexShiftedSolver::new(k, m, mu)?;
    let mut x = b.clone();
    solver.solve_in_place(&mut x);
    if all_finite(&x) {
        Ok(x)
    } else {
        Err(Error::Singular(format!("non-finite solution at mu = {mu}")))
    }
}

/// Options for [`generalized_eigs`].
#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Shift σ below the spectrum; K − σM must be positive definite.
    pub shift: f64,
    pub block_size: usize,
    /// Convergence tolerance on the Ritz residual relative to the Ritz value.
    pub tol: f64,
    /// Krylov dimension cap (0 → automatic).
    pub max_dim: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { shift: -1.0, block_size: 3, tol: 1e-10, max_dim: 0 }
    }
}

/// Generalized eigenpairs K v = λ M v.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: Mat<f64>,
    /// ‖Kv − λMv‖ / (‖Kv‖ + |λ|‖Mv‖) per pair.
    pub residuals: Vec<f64>,
}

/// Deterministic pseudo-random start vectors (splitmix64).
fn start_block(n: usize, b: usize) -> Mat<f64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    Mat::from_fn(n, b, |_, _| next())
}

/// The n smallest eigenpairs of the pencil (K, M).
///
/// Shift-invert block Lanczos on (K − σM)^{−1}M. With full
/// reorthogonalization the projected matrix is assembled Arnoldi-style
/// and symmetrized before the Rayleigh–Ritz step.
pub fn generalized_eigs(k: &SparseSym, m: &SparseSym, n: usize, opts: &EigOptions) -> Result<EigResult> {
    let dim = k.n;
    if m.n != dim {
        return Err(Error::Dimension(format!("K is {dim} but M is {}", m.n)));
    }
    if n == 0 || n > dim {
        return Err(Error::InvalidParameter(format!("requested {n} eigenpairs of a {dim}-dimensional pencil")));
    }
    let shifted = k.add_scaled(m, -opts.shift).to_faer()?;
    let llt = shifted
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Eigen(format!("K − σM not positive definite for σ = {}: {e:?}", opts.shift)))?;
    let b = opts.block_size.max(1).min(dim);
    let max_dim = if opts.max_dim > 0 { opts.max_dim.min(dim) } else { (3 * n + 60).min(dim) };

    let m_apply = |x: MatRef<f64>| -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(dim, x.ncols());
        let mut buf = vec![0.0; dim];
        for j in 0..x.ncols() {
            let col: Vec<f64> = (0..dim).map(|i| x[(i, j)]).collect();
            m.matvec_into(&col, &mut buf);
            for i in 0..dim {
                out[(i, j)] = buf[i];
            }
        }
        out
    };

    let mut q = Mat::<f64>::zeros(dim, max_dim + b);
    let mut mq = Mat::<f64>::zeros(dim, max_dim + b);
    let mut h = Mat::<f64>::zeros(max_dim + b, max_dim + b);

    // M-orthonormalize a block against the basis q[:, ..filled] and itself.
    // Returns the number of new columns appended and the R factor (b×b).
    let orthonormalize = |w: &mut Mat<f64>,
                          q: &mut Mat<f64>,
                          mq: &mut Mat<f64>,
                          h: &mut Mat<f64>,
                          filled: usize,
                          col0: Option<usize>|
     -> usize {
        let nb = w.ncols();
        for pass in 0..2 {
            if filled == 0 {
                break;
            }
            let mw = m_apply(w.as_ref());
            let coeff = q.as_ref().subcols(0, filled).transpose() * &mw;
            let corr = q.as_ref().subcols(0, filled) * &coeff;
            *w -= &corr;
            if let Some(c0) = col0 {
                for i in 0..filled {
                    for j in 0..nb {
                        h[(i, c0 + j)] += coeff[(i, j)];
                    }
                }
            }
            let _ = pass;
        }
        // Modified Gram–Schmidt within the block, M-inner product.
        let mut added = 0;
        for j in 0..nb {
            let mut v: Vec<f64> = (0..dim).map(|i| w[(i, j)]).collect();
            let orig_norm = {
                let mv = m.matvec(&v);
                v.iter().zip(mv.iter()).map(|(a, b)| a * b).sum::<f64>().sqrt()
            };
            for _ in 0..2 {
                for l in filled..filled + added {
                    let dot: f64 = (0..dim).map(|i| mq[(i, l)] * v[i]).sum();
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi -= dot * q[(i, l)];
                    }
                    if let Some(c0) = col0 {
                        h[(l, c0 + j)] += dot;
                    }
                }
            }
            let mv = m.matvec(&v);
            let nrm = v.iter().zip(mv.iter()).map(|(a, b)| a * b).sum::<f64>().sqrt();
            if !(nrm > 1e-10 * orig_norm.max(1e-300)) || nrm == 0.0 {
                continue;
            }
            let col = filled + added;
            for i in 0..dim {
                q[(i, col)] = v[i] / nrm;
                mq[(i, col)] = mv[i] / nrm;
            }
            if let Some(c0) = col0 {
                h[(col, c0 + j)] += nrm;
            }
            added += 1;
        }
        added
    };

    let mut start = start_block(dim, b);
    let mut filled = orthonormalize(&mut start, &mut q, &mut mq, &mut h, 0, None);
    if filled == 0 {
        return Err(Error::Eigen("degenerate start block".into()));
    }
    let mut processed = 0;
    let mut last_check = 0;
    let check_step = (n / 4).max(10);
    loop {
        // apply the operator to the next unprocessed block
        let bcols = (filled - processed).min(b);
        if bcols == 0 {
            // invariant subspace: restart with fresh random directions
            let mut fresh = start_block(dim, b);
            for v in fresh.col_iter_mut() {
                for (i, x) in v.iter_mut().enumerate() {
                    *x *= 1.0 + (i % 7) as f64;
                }
            }
            let added = orthonormalize(&mut fresh, &mut q, &mut mq, &mut h, filled, None);
            if added == 0 {
                break;
            }
            filled += added;
            continue;
        }
        let mut w = mq.as_ref().subcols(processed, bcols).to_owned();
        llt.solve_in_place(w.as_mut());
        let added = orthonormalize(&mut w, &mut q, &mut mq, &mut h, filled, Some(processed));
        processed += bcols;
        filled += added;
        let exhausted = processed >= max_dim || (filled >= dim && processed >= filled);
        if processed >= n && (processed - last_check >= check_step || exhausted) {
            last_check = processed;
            if let Some(res) = ritz(&q, &h, processed, filled, n, opts, k, m, exhausted)? {
                return Ok(res);
            }
        }
        if exhausted {
            break;
        }
    }
    ritz(&q, &h, processed, filled, n, opts, k, m, true)?
        .ok_or_else(|| Error::Eigen("Krylov space exhausted".into()))
}

#[allow(clippy::too_many_arguments)]
fn ritz(
    q: &Mat<f64>,
    h: &Mat<f64>,
    processed: usize,
    filled: usize,
    n: usize,
    opts: &EigOptions,
    k: &SparseSym,
    m: &SparseSym,
    force: bool,
) -> Result<Option<EigResult>> {
    let p = processed;
    let hs = Mat::<f64>::from_fn(p, p, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    let eig = hs
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("projected eigenproblem: {e:?}")))?;
    let theta = eig.S().column_vector();
    let y = eig.U();
    // residual of Ritz pair i: ‖H[p..filled, ..p] y_i‖
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| theta[b].partial_cmp(&theta[a]).unwrap());
    let mut idx = Vec::with_capacity(n);
    let mut all_converged = true;
    for &i in order.iter().take(n) {
        let mut r2 = 0.0;
        for row in p..filled {
            let mut acc = 0.0;
            for c in 0..p {
                acc += h[(row, c)] * y[(c, i)];
            }
            r2 += acc * acc;
        }
        if r2.sqrt() > opts.tol * theta[i].abs() {
            all_converged = false;
        }
        idx.push(i);
    }
    if !all_converged && !force {
        return Ok(None);
    }
    let ysel = Mat::<f64>::from_fn(p, idx.len(), |r, c| y[(r, idx[c])]);
    let vectors = q.as_ref().subcols(0, p) * &ysel;
    let mut pairs: Vec<(f64, usize)> = idx.iter().enumerate().map(|(c, &i)| (opts.shift + 1.0 / theta[i], c)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vectors = Mat::<f64>::from_fn(k.n, pairs.len(), |r, c| vectors[(r, pairs[c].1)]);
    let mut residuals = Vec::with_capacity(values.len());
    for (c, &lam) in values.iter().enumerate() {
        let v: Vec<f64> = (0..k.n).map(|r| vectors[(r, c)]).collect();
        let kv = k.matvec(&v);
        let mv = m.matvec(&v);
        let num: f64 = kv.iter().zip(mv.iter()).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        let den = kv.iter().map(|a| a * a).sum::<f64>().sqrt() + lam.abs() * mv.iter().map(|a| a * a).sum::<f64>().sqrt();
        residuals.push(num / den.max(1e-300));
    }
    if !all_converged {
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        return Err(Error::Eigen(format!(
            "{n} eigenpairs did not converge within Krylov dimension {p}; worst residual {worst:.3e}"
        )));
    }
    Ok(Some(EigResult { values, vectors, residuals }))
}

/// Thin singular value decomposition A = U Σ V*, Σ descending.
pub struct Svd {
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    pub v: Mat<C64>,
}

pub fn svd(a: &Mat<C64>) -> Result<Svd> {
    let dec = a.thin_svd().map_err(|e| Error::Singular(format!("SVD failed: {e:?}")))?;
    let s = dec.S().column_vector();
    let sv: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok(Svd { u: dec.U().to_owned(), s: sv, v: dec.V().to_owned() })
}

/// Singular values only, descending.
pub fn singular_values(a: &Mat<C64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| Error::Singular(format!("SVD failed: {e:?}")))
}

/// Thin QR decomposition.
pub fn qr(a: &Mat<C64>) -> (Mat<C64>, Mat<C64>) {
    let dec = a.qr();
    (dec.compute_thin_Q(), dec.thin_R().to_owned())
}

/// Solves A X = B by partial-pivoting LU; rejects results with large residual.
pub fn solve_dense(a: &Mat<C64>, b: &Mat<C64>) -> Result<Mat<C64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("A is {}×{}, B has {} rows", a.nrows(), a.ncols(), b.nrows())));
    }
    let lu = a.partial_piv_lu();
    let x = lu.solve(b);
    if !all_finite(&x) {
        return Err(Error::Singular("dense solve produced non-finite values".into()));
    }
    let r = a * &x - b;
    let scale = a.norm_max() * x.norm_max() + b.norm_max();
    let rel = r.norm_max() / scale.max(1e-300);
    if !rel.is_finite() || rel > 1e-10 {
        return Err(Error::Singular(format!("dense solve residual {rel:.3e}")));
    }
    Ok(x)
}

pub fn all_finite(a: &Mat<C64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Condition number estimate σ_max/σ_min.
pub fn condition_number(a: &Mat<C64>) -> Result<f64> {
    let s = singular_values(a)?;
    let smin = *s.last().unwrap_or(&0.0);
    Ok(if smin > 0.0 { s[0] / smin } else { f64::INFINITY })
}

/// Spectral norm.
pub fn norm2(a: &Mat<C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    singular_values(a).map(|s| s[0]).unwrap_or(f64::NAN)
}

/// Determinant by LU.
pub fn det(a: &Mat<C64>) -> C64 {
    a.determinant()
}
