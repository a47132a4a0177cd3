//! Geometric mean decomposition of a diagonal matrix by Givens rotations.

use matmono_core::linalg::{c, from_real_diag, CMat};
use matmono_core::{Error, Result};

/// `diag(values) = q * r * p^H` with `r` upper triangular and every diagonal
/// entry of `r` equal to the geometric mean of `values`.
#[derive(Debug, Clone)]
pub struct Gmd {
    pub q: CMat,
    pub r: CMat,
    pub p: CMat,
}

fn swap_sym(m: &mut CMat, a: usize, b: usize) {
    m.swap_rows(a, b);
    m.swap_columns(a, b);
}

fn rotate_cols(m: &mut CMat, i: usize, j: usize, cs: f64, sn: f64) {
    // m <- m * [[c, -s], [s, c]] on columns (i, j)
    for row in 0..m.nrows() {
        let (a, b) = (m[(row, i)], m[(row, j)]);
        m[(row, i)] = a * c(cs) + b * c(sn);
        m[(row, j)] = b * c(cs) - a * c(sn);
    }
}

fn rotate_rows_t(m: &mut CMat, i: usize, j: usize, cs: f64, sn: f64) {
    // m <- [[c, -s], [s, c]]^T * m on rows (i, j)
    for col in 0..m.ncols() {
        let (a, b) = (m[(i, col)], m[(j, col)]);
        m[(i, col)] = a * c(cs) + b * c(sn);
        m[(j, col)] = b * c(cs) - a * c(sn);
    }
}

pub fn gmd_diagonal(values: &[f64]) -> Result<Gmd> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty diagonal".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("diagonal entries must be positive".into()));
    }
    let mean = (values.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp();
    let mut r = from_real_diag(values);
    let mut q = CMat::identity(n, n);
    let mut p = CMat::identity(n, n);

    for k in 0..n.saturating_sub(1) {
        let d = |r: &CMat, i: usize| r[(i, i)].re;
        // Put an entry >= mean at k and an entry <= mean at k + 1.
        let big = (k..n).max_by(|&a, &b| d(&r, a).total_cmp(&d(&r, b))).unwrap();
        if big != k {
            swap_sym(&mut r, k, big);
            q.swap_columns(k, big);
            p.swap_columns(k, big);
        }
        let small = (k + 1..n).min_by(|&a, &b| d(&r, a).total_cmp(&d(&r, b))).unwrap();
        if small != k + 1 {
            swap_sym(&mut r, k + 1, small);
            q.swap_columns(k + 1, small);
            p.swap_columns(k + 1, small);
        }
        let (d1, d2) = (d(&r, k), d(&r, k + 1));
        let spread = d1 * d1 - d2 * d2;
        let (cs, sn) = if spread <= f64::EPSILON * d1 * d1 {
            (1.0, 0.0)
        } else {
            let cs = ((mean * mean - d2 * d2) / spread).clamp(0.0, 1.0).sqrt();
            (cs, (1.0 - cs * cs).sqrt())
        };
        // Right rotation G1 = [[c, -s], [s, c]], left G2 = [[c d1, -s d2], [s d2, c d1]] / mean.
        rotate_cols(&mut r, k, k + 1, cs, sn);
        rotate_cols(&mut p, k, k + 1, cs, sn);
        let nrm = (cs * cs * d1 * d1 + sn * sn * d2 * d2).sqrt();
        let (c2, s2) = if nrm > 0.0 { (cs * d1 / nrm, sn * d2 / nrm) } else { (1.0, 0.0) };
        rotate_rows_t(&mut r, k, k + 1, c2, s2);
        rotate_cols(&mut q, k, k + 1, c2, s2);
        r[(k + 1, k)] = c(0.0);
    }
    let dev = (0..n).map(|i| (r[(i, i)].re - mean).abs()).fold(0.0, f64::max);
    if dev > 1e-10 * mean.max(1.0) {
        return Err(Error::Infeasible(format!("equal-diagonal construction deviates by {dev:.3e}")));
    }
    Ok(Gmd { q, r, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use matmono_core::linalg::{frobenius, unitarity_error};

    #[test]
    fn reconstructs_and_equalises() {
        for vals in [vec![4.0, 1.0], vec![3.0, 2.0, 0.5], vec![1.0, 1.0, 1.0], vec![0.1, 5.0, 2.0, 0.7]] {
            let g = gmd_diagonal(&vals).unwrap();
            let gm = (vals.iter().map(|v: &f64| v.ln()).sum::<f64>() / vals.len() as f64).exp();
            assert!(frobenius(&(&g.q * &g.r * g.p.adjoint() - from_real_diag(&vals))) < 1e-12);
            assert!(unitarity_error(&g.q) < 1e-12 && unitarity_error(&g.p) < 1e-12);
            for i in 0..vals.len() {
                assert!((g.r[(i, i)].re - gm).abs() < 1e-12);
                for j in 0..i {
                    assert_eq!(g.r[(i, j)], c(0.0));
                }
            }
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(gmd_diagonal(&[1.0, 0.0]).is_err());
        assert!(gmd_diagonal(&[]).is_err());
    }
}
