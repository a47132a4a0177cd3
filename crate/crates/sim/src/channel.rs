//! Random channel and source models.

use matmono_core::linalg::{c, hermitian_sqrt, lambda_min, CMat};
use matmono_core::random::complex_gaussian;
use rand::Rng;

use crate::config::DistanceLaw;
use crate::SimError;

/// `[R]_{ij} = r^{|i-j|}`.
pub fn exponential_corr(r: f64, n: usize) -> Result<CMat, SimError> {
    if !(0.0..1.0).contains(&r) {
        return Err(SimError::Config(format!("correlation coefficient {r} is outside [0, 1)")));
    }
    Ok(CMat::from_fn(n, n, |i, j| c(r.powi(i.abs_diff(j) as i32))))
}

/// Kronecker-correlated channel `R_rx^{1/2} G R_tx^{1/2}` with unit-variance
/// circular Gaussian `G`.
pub fn sample_channel<R: Rng + ?Sized>(r_rx: &CMat, r_tx: &CMat, rng: &mut R) -> Result<CMat, SimError> {
    let g = complex_gaussian(rng, r_rx.nrows(), r_tx.nrows(), 1.0);
    Ok(hermitian_sqrt(r_rx)? * g * hermitian_sqrt(r_tx)?)
}

#[derive(Debug, Clone)]
pub struct RelayCsi {
    pub estimate: CMat,
    pub truth: CMat,
}

/// Channel estimate and true channel of one hop from unit-variance draws
/// `g_hat` and `g_err`: `H^ = sqrt(1 - s) g_hat Psi^{1/2}` and
/// `H = H^ + sqrt(s) g_err Psi^{1/2}`, so every entry of `H` has unit power
/// when `Psi` has a unit diagonal. The error covariance seen by the
/// designer is `s Psi`.
pub fn relay_csi_from_draws(
    sigma_e2: f64,
    psi_sqrt: &CMat,
    g_hat: &CMat,
    g_err: &CMat,
) -> Result<RelayCsi, SimError> {
    if !(0.0..1.0).contains(&sigma_e2) {
        return Err(SimError::Config(format!("sigma_e2 = {sigma_e2} is outside [0, 1)")));
    }
    let estimate = g_hat * psi_sqrt * c((1.0 - sigma_e2).sqrt());
    let truth = &estimate + g_err * psi_sqrt * c(sigma_e2.sqrt());
    Ok(RelayCsi { estimate, truth })
}

/// `rows x Psi.nrows()` hop with fresh draws.
pub fn sample_relay_csi<R: Rng + ?Sized>(
    sigma_e2: f64,
    psi_base: &CMat,
    rows: usize,
    rng: &mut R,
) -> Result<RelayCsi, SimError> {
    let n = psi_base.nrows();
    let g_hat = complex_gaussian(rng, rows, n, 1.0);
    let g_err = complex_gaussian(rng, rows, n, 1.0);
    relay_csi_from_draws(sigma_e2, &hermitian_sqrt(psi_base)?, &g_hat, &g_err)
}

const MAX_SOURCE_DRAWS: usize = 100_000;

/// Smallest eigenvalue accepted for an i.i.d.-distance source covariance.
pub const SOURCE_MIN_EIG: f64 = 1e-3;

/// Source covariance with blocks `e^{-d_{mn}} I`; `d_mm = 0`.
pub fn source_covariance<R: Rng + ?Sized>(
    sensors: usize,
    block_dim: usize,
    law: DistanceLaw,
    rng: &mut R,
) -> Result<CMat, SimError> {
    let build = |d: &dyn Fn(usize, usize) -> f64| {
        let n = sensors * block_dim;
        CMat::from_fn(n, n, |i, j| {
            if i % block_dim == j % block_dim {
                c((-d(i / block_dim, j / block_dim)).exp())
            } else {
                c(0.0)
            }
        })
    };
    match law {
        DistanceLaw::Line => {
            let pos: Vec<f64> = (0..sensors).map(|_| rng.random::<f64>()).collect();
            Ok(build(&|m, n| (pos[m] - pos[n]).abs()))
        }
        DistanceLaw::Iid => {
            for _ in 0..MAX_SOURCE_DRAWS {
                let mut d = vec![0.0; sensors * sensors];
                for m in 0..sensors {
                    for n in m + 1..sensors {
                        let v = rng.random::<f64>();
                        d[m * sensors + n] = v;
                        d[n * sensors + m] = v;
                    }
                }
                let cx = build(&|m, n| d[m * sensors + n]);
                if lambda_min(&cx)? >= SOURCE_MIN_EIG {
                    return Ok(cx);
                }
            }
            Err(SimError::Config(format!(
                "no positive definite source covariance for {sensors} sensors in {MAX_SOURCE_DRAWS} draws"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use matmono_core::linalg::{frobenius, identity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_examples() {
        assert_eq!(exponential_corr(0.0, 3).unwrap(), identity(3));
        let r = exponential_corr(0.6, 2).unwrap();
        assert!((r[(0, 1)].re - 0.6).abs() < 1e-15 && (r[(1, 0)].re - 0.6).abs() < 1e-15);
        assert!(lambda_min(&exponential_corr(0.5, 4).unwrap()).unwrap() > 0.0);
        assert!(exponential_corr(1.0, 2).is_err());
        assert!(exponential_corr(-0.1, 2).is_err());
    }

    #[test]
    fn zero_error_keeps_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = exponential_corr(0.6, 4).unwrap();
        let csi = sample_relay_csi(0.0, &psi, 4, &mut rng).unwrap();
        assert_eq!(frobenius(&(&csi.truth - &csi.estimate)), 0.0);
        assert!(sample_relay_csi(1.0, &psi, 4, &mut rng).is_err());
    }

    #[test]
    fn source_covariance_is_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for law in [DistanceLaw::Iid, DistanceLaw::Line] {
            for k in [1, 2, 4, 6] {
                let cx = source_covariance(k, 3, law, &mut rng).unwrap();
                assert_eq!(cx.nrows(), 3 * k);
                assert!(lambda_min(&cx).unwrap() > 0.0);
                assert!((0..3 * k).all(|i| (cx[(i, i)].re - 1.0).abs() < 1e-15));
            }
        }
    }
}
