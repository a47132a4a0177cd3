//! Random matrix helpers driven by a caller-supplied RNG.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, hermitian_part, CMat, C64};

/// Circularly-symmetric complex Gaussian entries with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(s * re, s * im)
    })
}

/// Haar-distributed unitary matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = complex_gaussian(rng, n, n, 1.0);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = q;
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let ph = d / d.norm();
            for i in 0..n {
                out[(i, j)] *= ph;
            }
        }
    }
    out
}

/// Random Hermitian PSD matrix `G G^H / cols` with `G` of size `n x cols`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, cols: usize) -> CMat {
    let g = complex_gaussian(rng, n, cols, 1.0);
    hermitian_part(&(&g * g.adjoint())) * c(1.0 / cols.max(1) as f64)
}

/// Random Hermitian positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> CMat {
    let u = random_unitary(rng, n);
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    hermitian_part(&(crate::linalg::scale_columns(&u, &d) * u.adjoint()))
}
