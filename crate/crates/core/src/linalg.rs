//! Deterministic spectral decompositions and Hermitian matrix functions.

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Eigen-decomposition `A = U diag(values) U^H` with `values` non-increasing.
#[derive(Debug, Clone)]
pub struct SortedEvd {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl SortedEvd {
    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Rebuild `U diag(f(values)) U^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let d: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        hermitian_part(&(scale_columns(&self.vectors, &d) * self.vectors.adjoint()))
    }
}

/// Full SVD `A = U diag(values) V^H` with square unitary `U`, `V` and
/// `values` (length `min(m, n)`) non-increasing.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: CMat,
    pub values: Vec<f64>,
    pub v: CMat,
}

pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `rows x cols` matrix with ones on the main diagonal.
pub fn padded_identity(rows: usize, cols: usize) -> CMat {
    CMat::identity(rows, cols)
}

pub fn from_real_diag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
}

/// Real `rows x cols` matrix lifted to complex.
pub fn from_real(rows: usize, cols: usize, data_row_major: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data_row_major.iter().map(|&x| c(x)))
}

/// Multiply column `j` by `d[j]`.
pub fn scale_columns(m: &CMat, d: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, &s) in d.iter().enumerate().take(m.ncols()) {
        out.column_mut(j).scale_mut(s);
    }
    out
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

pub fn real_trace(a: &CMat) -> f64 {
    a.trace().re
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc.re
}

pub fn gram(f: &CMat) -> CMat {
    hermitian_part(&(f * f.adjoint()))
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square(a: &CMat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if !is_finite(a) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Rotate a vector so that its first largest-magnitude entry is real positive.
fn canonical_phase(v: &mut [C64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

fn quantized_key(v: &[C64]) -> Vec<(i64, i64)> {
    v.iter()
        .map(|z| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64))
        .collect()
}

/// Hermitian eigen-decomposition with a deterministic output convention.
///
/// Eigenvalues are sorted descending. Each eigenvector is rotated so its
/// first largest-magnitude entry is real positive. Within a run of tied
/// eigenvalues, vectors are ordered by their entries on a `1e-9` grid,
/// lexicographically largest first, so `I` decomposes to `I`.
pub fn sorted_evd(a: &CMat) -> Result<SortedEvd> {
    sorted_evd_with(a, &Tolerances::DEFAULT)
}

pub fn sorted_evd_with(a: &CMat, tol: &Tolerances) -> Result<SortedEvd> {
    check_square(a, "matrix")?;
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut pairs: Vec<(f64, Vec<C64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<C64> = eig.eigenvectors.column(j).iter().copied().collect();
            canonical_phase(&mut v);
            (eig.eigenvalues[j], v)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

    let scale = pairs.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end - 1].0 - pairs[end].0 < tol.eig_tie * scale {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|x, y| match quantized_key(&y.1).cmp(&quantized_key(&x.1)) {
                Ordering::Equal => y.0.total_cmp(&x.0),
                o => o,
            });
        }
        start = end;
    }

    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = CMat::from_fn(n, n, |i, j| pairs[j].1[i]);
    Ok(SortedEvd { values, vectors })
}

/// Append orthonormal columns to `q` until it is square, picking at each
/// step the standard basis vector with the largest residual.
fn complete_unitary(q: &CMat) -> CMat {
    let m = q.nrows();
    let mut cols: Vec<DVector<C64>> = (0..q.ncols()).map(|j| q.column(j).into_owned()).collect();
    while cols.len() < m {
        let mut best: Option<(f64, DVector<C64>)> = None;
        for j in 0..m {
            let mut r = DVector::<C64>::zeros(m);
            r[j] = c(1.0);
            for _ in 0..2 {
                for b in &cols {
                    let proj = b.dotc(&r);
                    r -= b * proj;
                }
            }
            let nr = r.norm();
            if best.as_ref().map_or(true, |(bn, _)| nr > *bn + 1e-12) {
                best = Some((nr, r));
            }
        }
        let (nr, r) = best.expect("m > 0");
        let mut v: Vec<C64> = (r / c(nr)).iter().copied().collect();
        canonical_phase(&mut v);
        cols.push(DVector::from_vec(v));
    }
    CMat::from_columns(&cols)
}

/// Full SVD with singular values descending. The first largest-magnitude
/// entry of each left singular vector is made real positive and the same
/// phase is applied to the matching right vector.
pub fn sorted_svd(a: &CMat) -> Result<SortedSvd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("matrix is empty"));
    }
    if !is_finite(a) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let k = m.min(n);
    let svd = a.clone().svd(true, true);
    let u_thin = svd.u.expect("requested U");
    let v_thin = svd.v_t.expect("requested V^H").adjoint();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut u = CMat::zeros(m, k);
    let mut v = CMat::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc: Vec<C64> = u_thin.column(src).iter().copied().collect();
        let max = uc.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = uc.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
        let phase = if max > 0.0 { uc[pivot].conj() / uc[pivot].norm() } else { c(1.0) };
        for z in uc.iter_mut() {
            *z *= phase;
        }
        for i in 0..m {
            u[(i, dst)] = uc[i];
        }
        for i in 0..n {
            v[(i, dst)] = v_thin[(i, src)] * phase;
        }
        values.push(svd.singular_values[src]);
    }
    Ok(SortedSvd {
        u: complete_unitary(&u),
        values,
        v: complete_unitary(&v),
    })
}

fn psd_evd(a: &CMat, tol: &Tolerances) -> Result<SortedEvd> {
    let evd = sorted_evd_with(a, tol)?;
    let scale = evd.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if evd.min() < -tol.psd_reject * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eig: evd.min(), scale });
    }
    Ok(evd)
}

/// Eigenvalues of a PSD matrix with tiny negative values clamped to zero.
pub fn psd_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    Ok(psd_evd(a, &Tolerances::DEFAULT)?
        .values
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}

/// The unique PSD square root of a PSD matrix.
pub fn hermitian_sqrt(a: &CMat) -> Result<CMat> {
    hermitian_sqrt_with(a, &Tolerances::DEFAULT)
}

pub fn hermitian_sqrt_with(a: &CMat, tol: &Tolerances) -> Result<CMat> {
    Ok(psd_evd(a, tol)?.map(|v| v.max(0.0).sqrt()))
}

fn pd_evd(a: &CMat) -> Result<SortedEvd> {
    let evd = sorted_evd(a)?;
    let scale = evd.max().abs().max(f64::MIN_POSITIVE);
    if !(evd.min() > 1e-15 * scale) {
        return Err(Error::NotPd);
    }
    Ok(evd)
}

/// `A^{-1/2}` for a positive definite `A`.
pub fn hermitian_inv_sqrt(a: &CMat) -> Result<CMat> {
    Ok(pd_evd(a)?.map(|v| 1.0 / v.sqrt()))
}

/// Inverse of a positive definite matrix.
pub fn hermitian_inv(a: &CMat) -> Result<CMat> {
    match Cholesky::new(hermitian_part(a)) {
        Some(ch) => Ok(hermitian_part(&ch.inverse())),
        None => Ok(pd_evd(a)?.map(|v| 1.0 / v)),
    }
}

/// Lower Cholesky factor `L` with `A = L L^H`.
pub fn cholesky_lower(a: &CMat) -> Result<CMat> {
    Cholesky::new(hermitian_part(a)).map(|ch| ch.l()).ok_or(Error::NotPd)
}

/// Natural log-determinant of a positive definite matrix.
pub fn log_det_pd(a: &CMat) -> Result<f64> {
    check_square(a, "matrix")?;
    if let Some(ch) = Cholesky::new(hermitian_part(a)) {
        let l = ch.l();
        return Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum());
    }
    let evd = pd_evd(a)?;
    Ok(evd.values.iter().map(|v| v.ln()).sum())
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max(a: &CMat) -> Result<f64> {
    Ok(sorted_evd(a)?.max())
}

pub fn lambda_min(a: &CMat) -> Result<f64> {
    Ok(sorted_evd(a)?.min())
}

/// Square block-diagonal matrix from the given blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut cc) = (0, 0);
    for b in blocks {
        out.view_mut((r, cc), b.shape()).copy_from(b);
        r += b.nrows();
        cc += b.ncols();
    }
    out
}

/// Permutation matrix with `P[i, perm[i]] = 1`, so `(P x)_i = x_{perm[i]}`.
pub fn permutation_matrix(perm: &[usize]) -> CMat {
    let n = perm.len();
    let mut p = CMat::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        p[(i, j)] = c(1.0);
    }
    p
}

/// Unitary DFT matrix with entries `exp(-2 pi i j k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| {
        let ang = -2.0 * std::f64::consts::PI * ((j * k) % n.max(1)) as f64 / n as f64;
        C64::from_polar(s, ang)
    })
}

/// `max |A^H A - I|` entrywise.
pub fn unitarity_error(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    let n = g.nrows();
    (g - CMat::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
