//! Per-hop quantities and the robust forwarding-matrix structures.

use matmono_core::linalg::{
    c, hermitian_inv_sqrt, hermitian_part, hermitian_sqrt, lambda_max, lambda_min, padded_identity, psd_eigenvalues,
    real_trace, sorted_evd, trace_product, CMat,
};
use matmono_core::structure::{aggregate_weights, solve_shaping, subgradient_weights, GainObjective, WeightProbe};
use matmono_core::{Error, PowerConstraint, Result, StructuredSolution, Tolerances, WeightedTerm};

use crate::RelayScenario;

/// `sigma^2 + Tr(F F^H Psi)`, the scale of `K_{n_k}`.
pub fn hop_noise_level(f: &CMat, psi: &CMat, noise_var: f64) -> f64 {
    noise_var + trace_product(&(f * f.adjoint()), psi)
}

/// `K_{n_k} = (sigma^2 + Tr(F F^H Psi)) I` with the receive dimension `rows`.
pub fn hop_noise_covariance(f: &CMat, psi: &CMat, noise_var: f64, rows: usize) -> CMat {
    CMat::identity(rows, rows) * c(hop_noise_level(f, psi, noise_var))
}

/// `M_k = (K^{-1/2} H F F^H H^H K^{-1/2} + I)^{1/2}` for `K = level I`.
pub fn hop_amplification(f: &CMat, h: &CMat, level: f64) -> Result<CMat> {
    let hf = h * f;
    let n = h.nrows();
    hermitian_sqrt(&(hermitian_part(&(&hf * hf.adjoint())) * c(1.0 / level) + CMat::identity(n, n)))
}

/// Eigenvalues of `F^H H^H K^{-1} H F`, descending.
pub fn hop_snr_eigenvalues(f: &CMat, h: &CMat, level: f64) -> Result<Vec<f64>> {
    let hf = h * f;
    let mut v = psd_eigenvalues(&(hermitian_part(&(hf.adjoint() * &hf)) * c(1.0 / level)))?;
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    Ok(v)
}

/// `F = sigma W G / sqrt(1 - Tr(W Psi W G G^H))`, with the denominator kept
/// at least `margin` by shrinking `G` when needed.
fn unwhiten(w: &CMat, g: &CMat, psi: &CMat, sigma: f64, margin: f64) -> CMat {
    let wg = w * g;
    let t = trace_product(&(&wg * wg.adjoint()), psi);
    let (g_scale, t) = if t > 1.0 - margin {
        let s2 = (1.0 - margin) / t;
        (s2.sqrt(), 1.0 - margin)
    } else {
        (1.0, t)
    };
    wg * c(sigma * g_scale / (1.0 - t).sqrt())
}

fn scale_into(constraint: &PowerConstraint, f: CMat) -> Result<CMat> {
    let s = constraint.max_feasible_scale(&f)?;
    Ok(if s < 1.0 { f * c(s) } else { f })
}

/// Mode gains `lambda_i(F^H H^H K^{-1} H F)` realised by `f`, as values of
/// `GainObjective` with unit powers.
fn objective_of(f: &CMat, h: &CMat, psi: &CMat, noise_var: f64, objective: &GainObjective, r: usize) -> Result<f64> {
    let lam = hop_snr_eigenvalues(f, h, hop_noise_level(f, psi, noise_var))?;
    let lam: Vec<f64> = lam.into_iter().chain(std::iter::repeat(0.0)).take(r).collect();
    objective.value(&lam, &vec![1.0; r])
}

/// Forwarding matrix of hop `k` for the given per-mode objective.
///
/// With `Psi_k = 0` these are the exact optimal structures. Otherwise they
/// maximise a lower bound: the change of variables
/// `F = sigma W G / sqrt(1 - Tr(W Psi W G G^H))` turns the hop into a
/// sum-power problem on `G` with channel `H W`.
pub fn robust_update_hop(
    scn: &RelayScenario,
    k: usize,
    objective: &GainObjective,
    warm_alpha: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<StructuredSolution> {
    let h = &scn.est_channels[k];
    let psi = &scn.error_covs[k];
    let sigma2 = scn.noise_vars[k];
    let sigma = sigma2.sqrt();
    let (rows, cols) = scn.forwarder_shape(k);
    let r = rows.min(cols);
    let margin = tol.robust_denominator_margin;

    let f = match &scn.constraints[k] {
        PowerConstraint::Shaping { shape } => return solve_shaping(shape, cols),
        PowerConstraint::Joint { total, cap } => {
            let psi_t = CMat::identity(rows, rows) * c(sigma2) + psi * c(*total);
            let w = hermitian_inv_sqrt(&psi_t)?;
            let evd = sorted_evd(&hermitian_part(&(&w * h.adjoint() * h * &w)))?;
            let eff: Vec<f64> = evd.values[..r].iter().map(|v| v.max(0.0)).collect();
            let (lo, hi) = (lambda_min(psi)?.max(0.0), lambda_max(psi)?.max(0.0));
            let cap = cap * (sigma2 + total * lo) / (sigma2 + total * hi);
            let powers = objective.allocate(&eff, *total, cap)?;
            let g = matmono_core::linalg::scale_columns(
                &evd.vectors.columns(0, r).into_owned(),
                &powers.iter().map(|p| p.sqrt()).collect::<Vec<_>>(),
            ) * padded_identity(cols, r).adjoint();
            scale_into(&scn.constraints[k], unwhiten(&w, &g, psi, sigma, margin))?
        }
        PowerConstraint::Weighted { terms } => {
            let sol = robust_weighted(scn, k, terms, objective, warm_alpha, tol)?;
            return Ok(sol);
        }
    };
    StructuredSolution::from_dense(&f)
}

struct RobustCandidate {
    f: CMat,
    loads: Vec<f64>,
}

fn robust_weighted_candidate(
    scn: &RelayScenario,
    k: usize,
    terms: &[WeightedTerm],
    alpha: &[f64],
    objective: &GainObjective,
    tol: &Tolerances,
) -> Result<RobustCandidate> {
    let h = &scn.est_channels[k];
    let psi = &scn.error_covs[k];
    let sigma2 = scn.noise_vars[k];
    let (rows, cols) = scn.forwarder_shape(k);
    let r = rows.min(cols);
    // Omega~ = sum alpha_i (sigma^2 Omega_i + P_i Psi)
    let tilde: Vec<WeightedTerm> = terms
        .iter()
        .map(|t| WeightedTerm { weight: &t.weight * c(sigma2) + psi * c(t.budget), budget: t.budget })
        .collect();
    let omega = aggregate_weights(&tilde, alpha, tol)?;
    let w = hermitian_inv_sqrt(&omega)?;
    let evd = sorted_evd(&hermitian_part(&(&w * h.adjoint() * h * &w)))?;
    let eff: Vec<f64> = evd.values[..r].iter().map(|v| v.max(0.0)).collect();
    let budget: f64 = terms.iter().zip(alpha).map(|(t, a)| a * t.budget).sum();
    let powers = objective.allocate(&eff, budget, f64::INFINITY)?;
    let g = matmono_core::linalg::scale_columns(
        &evd.vectors.columns(0, r).into_owned(),
        &powers.iter().map(|p| p.sqrt()).collect::<Vec<_>>(),
    ) * padded_identity(cols, r).adjoint();
    let f = unwhiten(&w, &g, psi, sigma2.sqrt(), tol.robust_denominator_margin);
    let ff = &f * f.adjoint();
    let loads = terms.iter().map(|t| real_trace(&(&t.weight * &ff))).collect();
    Ok(RobustCandidate { f, loads })
}

fn robust_weighted(
    scn: &RelayScenario,
    k: usize,
    terms: &[WeightedTerm],
    objective: &GainObjective,
    warm_alpha: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<StructuredSolution> {
    let (rows, cols) = scn.forwarder_shape(k);
    let r = rows.min(cols);
    let budgets: Vec<f64> = terms.iter().map(|t| t.budget).collect();
    let m = terms.len();
    let alpha0: Vec<f64> = match warm_alpha {
        Some(a) if a.len() == m && a.iter().all(|v| v.is_finite() && *v > 0.0) => a.to_vec(),
        _ => budgets.iter().map(|p| 1.0 / (m as f64 * p)).collect(),
    };
    let (h, psi, sigma2) = (&scn.est_channels[k], &scn.error_covs[k], scn.noise_vars[k]);
    let constraint = &scn.constraints[k];
    let search = subgradient_weights(
        |alpha| {
            let cand = robust_weighted_candidate(scn, k, terms, alpha, objective, tol)?;
            let gaps = cand.loads.iter().zip(&budgets).map(|(l, p)| l - p).collect();
            let f = scale_into(constraint, cand.f)?;
            let score = objective_of(&f, h, psi, sigma2, objective, r)?;
            Ok(WeightProbe { gaps, score })
        },
        &alpha0,
        &budgets,
        tol,
    )?;
    let cand = robust_weighted_candidate(scn, k, terms, &search.alpha, objective, tol)?;
    let mut sol = StructuredSolution::from_dense(&scale_into(constraint, cand.f)?)?;
    let norm: f64 = search.alpha.iter().zip(&budgets).map(|(a, p)| a * p).sum();
    sol.weights_alpha = Some(search.alpha.iter().map(|a| a / norm).collect());
    sol.converged = search.converged;
    if sol.dense.ncols() != cols {
        return Err(Error::Dimension("forwarder has the wrong number of columns".into()));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use matmono_core::linalg::{frobenius, from_real_diag, identity};

    #[test]
    fn noise_covariance_examples() {
        let psi = from_real_diag(&[0.5, 0.2]);
        assert_eq!(hop_noise_level(&CMat::zeros(2, 2), &psi, 0.3), 0.3);
        assert_eq!(hop_noise_level(&identity(2), &CMat::zeros(2, 2), 0.3), 0.3);
        let f = from_real_diag(&[2.0, 1.0]);
        assert!((hop_noise_level(&f, &psi, 0.3) - (0.3 + 4.0 * 0.5 + 0.2)).abs() < 1e-12);
        assert_eq!(hop_noise_covariance(&f, &psi, 0.3, 3).nrows(), 3);
    }

    #[test]
    fn amplification_examples() {
        assert!(frobenius(&(hop_amplification(&CMat::zeros(2, 2), &identity(2), 1.0).unwrap() - identity(2))) < 1e-14);
        let m = hop_amplification(&from_real_diag(&[0.5]), &from_real_diag(&[2.0]), 0.25).unwrap();
        assert!((m[(0, 0)].re - (1.0f64 + 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unwhiten_keeps_denominator() {
        let w = identity(2);
        let psi = identity(2);
        let g = from_real_diag(&[1.0, 1.0]);
        let f = unwhiten(&w, &g, &psi, 1.0, 1e-6);
        assert!(f.iter().all(|x| x.re.is_finite()));
        let f0 = unwhiten(&w, &CMat::zeros(2, 2), &psi, 1.0, 1e-6);
        assert_eq!(f0, CMat::zeros(2, 2));
    }
}
