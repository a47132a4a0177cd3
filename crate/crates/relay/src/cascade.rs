//! MSE matrix of the cascade, optimal rotations and feedback, and the
//! hop-by-hop solver.

use log::debug;
use matmono_core::linalg::{c, cholesky_lower, dft_matrix, hermitian_inv, hermitian_part, sorted_evd, sorted_svd, CMat};
use matmono_core::structure::GainObjective;
use matmono_core::{Error, Result, StructuredSolution, Tolerances};

use crate::gmd::gmd_diagonal;
use crate::hop::{hop_amplification, hop_noise_level, hop_snr_eigenvalues, robust_update_hop};
use crate::{HopState, MseMatrix, ObjectiveKind, ObjectiveSpec, RelayScenario, StopRule};

/// Per-hop matrices derived from a forwarding factor.
#[derive(Debug, Clone)]
pub struct HopTerms {
    /// Scale of `K_{n_k}`.
    pub level: f64,
    pub m: CMat,
    /// `A_k = M_k^{-1} K_{n_k}^{-1/2} H^_k F_k`
    pub a: CMat,
    /// Eigenvalues of `F_k^H H^_k^H K^{-1} H^_k F_k`, descending.
    pub lambdas: Vec<f64>,
}

pub fn hop_terms(scn: &RelayScenario, forwarders: &[CMat]) -> Result<Vec<HopTerms>> {
    check_forwarders(scn, forwarders)?;
    forwarders
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let h = &scn.est_channels[k];
            let level = hop_noise_level(f, &scn.error_covs[k], scn.noise_vars[k]);
            let m = hop_amplification(f, h, level)?;
            let a = hermitian_inv(&m)? * h * f * c(1.0 / level.sqrt());
            let lambdas = hop_snr_eigenvalues(f, h, level)?;
            Ok(HopTerms { level, m, a, lambdas })
        })
        .collect()
}

fn check_forwarders(scn: &RelayScenario, forwarders: &[CMat]) -> Result<()> {
    if forwarders.len() != scn.hops() {
        return Err(Error::Dimension("one forwarding matrix per hop is required".into()));
    }
    for (k, f) in forwarders.iter().enumerate() {
        if f.shape() != scn.forwarder_shape(k) {
            return Err(Error::Dimension(format!("forwarding matrix {k} has the wrong shape")));
        }
    }
    Ok(())
}

pub fn hop_lambdas(scn: &RelayScenario, forwarders: &[CMat]) -> Result<Vec<Vec<f64>>> {
    check_forwarders(scn, forwarders)?;
    forwarders
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let level = hop_noise_level(f, &scn.error_covs[k], scn.noise_vars[k]);
            hop_snr_eigenvalues(f, &scn.est_channels[k], level)
        })
        .collect()
}

fn ratio(l: f64) -> f64 {
    l / (1.0 + l)
}

/// `r_i = prod_k lambda_{k,i} / (1 + lambda_{k,i})` over the first
/// `streams` aligned modes, each hop sorted descending.
pub fn stream_products(lambdas: &[Vec<f64>], streams: usize) -> Vec<f64> {
    let sorted: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.sort_by(|a, b| b.total_cmp(a));
            l
        })
        .collect();
    (0..streams)
        .map(|i| sorted.iter().map(|l| l.get(i).map_or(0.0, |&x| ratio(x.max(0.0)))).product())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMetric {
    /// `sum sigma^2 (1 - r_i)`
    SumMse,
    /// `-sum log(1 - r_i)`
    SumRate,
}

/// Objective of the cascade from the per-hop eigenvalue vectors under
/// optimal rotations.
pub fn f_eigen(metric: EigenMetric, source_var: f64, lambdas: &[Vec<f64>], streams: usize) -> Result<f64> {
    if lambdas.iter().flatten().any(|l| *l < 0.0 || !l.is_finite()) {
        return Err(Error::InvalidInput("eigenvalues must be finite and non-negative".into()));
    }
    let r = stream_products(lambdas, streams);
    Ok(match metric {
        EigenMetric::SumMse => r.iter().map(|x| source_var * (1.0 - x)).sum(),
        EigenMetric::SumRate => r.iter().map(|x| -(-x).ln_1p()).sum(),
    })
}

/// Sum rate of the given forwarding factors under the scenario's error
/// statistics, with optimal rotations.
pub fn evaluate_sum_rate(scn: &RelayScenario, forwarders: &[CMat]) -> Result<f64> {
    f_eigen(EigenMetric::SumRate, scn.source_var, &hop_lambdas(scn, forwarders)?, scn.streams)
}

/// `Q_k = V_{A_k} U_{A_{k-1}}^H` for hops `1..K` (0-based), aligning the
/// singular vectors of consecutive hops.
pub fn inner_rotations(a: &[CMat]) -> Result<Vec<CMat>> {
    (1..a.len())
        .map(|k| {
            let v = sorted_svd(&a[k])?.v;
            let u = sorted_svd(&a[k - 1])?.u;
            if v.nrows() != u.nrows() {
                return Err(Error::Dimension(format!("hop {k} does not chain with hop {}", k - 1)));
            }
            Ok(v * u.adjoint())
        })
        .collect()
}

/// Source-side rotation for the objective. `products` are the cascade
/// stream products `r_i`, used by the equal-Cholesky-diagonal kind.
pub fn first_rotation(objective: &ObjectiveSpec, a1: &CMat, products: &[f64]) -> Result<CMat> {
    let v = sorted_svd(a1)?.v;
    let n = v.nrows();
    Ok(match objective.kind {
        ObjectiveKind::LogDetMse | ObjectiveKind::SchurConcaveMse | ObjectiveKind::SchurConcaveCholesky => v,
        ObjectiveKind::WeightedMse => {
            let w = objective
                .weight_matrix
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("weighted MSE needs a weight matrix".into()))?;
            v * sorted_evd(w)?.vectors.adjoint()
        }
        ObjectiveKind::SchurConvexMse => v * dft_matrix(n).adjoint(),
        ObjectiveKind::SchurConvexCholesky => {
            if products.len() != n {
                return Err(Error::Dimension(format!("{} stream products for {n} streams", products.len())));
            }
            let d: Vec<f64> = products.iter().map(|r| (1.0 - r).max(f64::MIN_POSITIVE).sqrt()).collect();
            v * gmd_diagonal(&d)?.p
        }
    })
}

/// `G = A_K Q_K ... A_1 Q_1`.
pub fn cascade_product(a: &[CMat], q: &[CMat]) -> Result<CMat> {
    if a.len() != q.len() || a.is_empty() {
        return Err(Error::Dimension("one rotation per hop is required".into()));
    }
    let mut g = &a[0] * &q[0];
    for k in 1..a.len() {
        if a[k].ncols() != q[k].nrows() || q[k].ncols() != g.nrows() {
            return Err(Error::Dimension(format!("hop {k} does not chain")));
        }
        g = &a[k] * &q[k] * g;
    }
    Ok(g)
}

/// `C_opt = diag(L_ii) L^{-1}` for `L L^H = mse_tilde`.
pub fn feedback_matrix(mse_tilde: &CMat) -> Result<CMat> {
    let l = cholesky_lower(mse_tilde)?;
    let n = l.nrows();
    let linv = l.clone().solve_lower_triangular(&CMat::identity(n, n)).ok_or(Error::NotPd)?;
    let mut cm = CMat::from_fn(n, n, |i, j| if j <= i { l[(i, i)] * linv[(i, j)] } else { c(0.0) });
    for i in 0..n {
        cm[(i, i)] = c(1.0);
    }
    Ok(cm)
}

/// `sigma^2 C C^H - sigma^2 C G^H G C^H` for the given factors, rotations
/// and feedback.
pub fn cascade_mse_matrix(scn: &RelayScenario, forwarders: &[CMat], rotations: &[CMat], fb: &CMat) -> Result<MseMatrix> {
    let terms = hop_terms(scn, forwarders)?;
    let a: Vec<CMat> = terms.into_iter().map(|t| t.a).collect();
    let g = cascade_product(&a, rotations)?;
    let n = g.ncols();
    if fb.shape() != (n, n) {
        return Err(Error::Dimension("feedback matrix does not match the stream count".into()));
    }
    let inner = CMat::identity(n, n) - g.adjoint() * &g;
    MseMatrix::new(hermitian_part(&(fb * inner * fb.adjoint())) * c(scn.source_var))
}

/// Optimal rotations and feedback matrix for the given factors.
pub fn optimal_rotations(scn: &RelayScenario, forwarders: &[CMat]) -> Result<(Vec<CMat>, CMat)> {
    let terms = hop_terms(scn, forwarders)?;
    let a: Vec<CMat> = terms.iter().map(|t| t.a.clone()).collect();
    let lambdas: Vec<Vec<f64>> = terms.iter().map(|t| t.lambdas.clone()).collect();
    let r = stream_products(&lambdas, scn.streams);
    let mut q = vec![first_rotation(&scn.objective, &a[0], &r)?];
    q.extend(inner_rotations(&a)?);
    let n = scn.streams;
    let fb = if scn.objective.kind.nonlinear() {
        let g = cascade_product(&a, &q)?;
        feedback_matrix(&(hermitian_part(&(CMat::identity(n, n) - g.adjoint() * &g)) * c(scn.source_var)))?
    } else {
        CMat::identity(n, n)
    };
    Ok((q, fb))
}

fn uses_rate(kind: ObjectiveKind) -> bool {
    !matches!(kind, ObjectiveKind::WeightedMse | ObjectiveKind::SchurConvexMse)
}

/// Quantity the hop allocation maximises: sum rate, or the negative
/// weighted sum MSE.
fn merit(scn: &RelayScenario, lambdas: &[Vec<f64>]) -> Result<f64> {
    if uses_rate(scn.objective.kind) {
        return f_eigen(EigenMetric::SumRate, scn.source_var, lambdas, scn.streams);
    }
    let w = scn.objective.stream_weights(scn.streams)?;
    let r = stream_products(lambdas, scn.streams);
    Ok(-w.iter().zip(&r).map(|(w, r)| w * scn.source_var * (1.0 - r)).sum::<f64>())
}

/// Per-mode objective of hop `k` with the other hops fixed.
fn hop_objective(scn: &RelayScenario, lambdas: &[Vec<f64>], k: usize) -> Result<GainObjective> {
    let (rows, cols) = scn.forwarder_shape(k);
    let r = rows.min(cols);
    let others: Vec<Vec<f64>> = lambdas.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, l)| l.clone()).collect();
    let coupling: Vec<f64> = if others.is_empty() { vec![1.0; r] } else { stream_products(&others, r) };
    let coupling: Vec<f64> = coupling.into_iter().enumerate().map(|(i, c)| if i < scn.streams { c } else { 0.0 }).collect();
    if uses_rate(scn.objective.kind) {
        return Ok(GainObjective::CascadeRate(coupling));
    }
    let w = scn.objective.stream_weights(scn.streams)?;
    Ok(GainObjective::CascadeMse(
        coupling.iter().enumerate().map(|(i, c)| c * w.get(i).copied().unwrap_or(0.0)).collect(),
    ))
}

/// Feasible scaled-identity starting factors.
pub fn default_init(scn: &RelayScenario) -> Result<Vec<CMat>> {
    (0..scn.hops())
        .map(|k| {
            let (r, c) = scn.forwarder_shape(k);
            scn.constraints[k].scaled_identity_init(r, c)
        })
        .collect()
}

/// Hop-by-hop block ascent. Each hop takes its constraint-family structure
/// with powers allocated against the other hops' current gains; an update
/// is kept only if the merit does not drop. Rotations and feedback are
/// attached at the end.
pub fn cascade_solve(
    scn: &RelayScenario,
    init: Option<Vec<CMat>>,
    stop: StopRule,
    tol: &Tolerances,
) -> Result<HopState> {
    let n_hops = scn.hops();
    let mut fs = match init {
        Some(f) => f,
        None => default_init(scn)?,
    };
    check_forwarders(scn, &fs)?;
    for (k, f) in fs.iter().enumerate() {
        let v = scn.constraints[k].relative_violation(f)?;
        if v > 1e-6 {
            return Err(Error::Infeasible(format!("initial forwarding matrix {k} violates its constraint by {v:.3e}")));
        }
    }
    let mut sols: Vec<StructuredSolution> = fs.iter().map(StructuredSolution::from_dense).collect::<Result<_>>()?;
    let mut lambdas = hop_lambdas(scn, &fs)?;
    let mut current = merit(scn, &lambdas)?;
    let mut trace = vec![current];
    let mut alphas: Vec<Option<Vec<f64>>> = vec![None; n_hops];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=stop.max_iter {
        iterations = it;
        let before = current;
        for k in 0..n_hops {
            let objective = hop_objective(scn, &lambdas, k)?;
            let sol = robust_update_hop(scn, k, &objective, alphas[k].as_deref(), tol)?;
            let mut trial = fs.clone();
            trial[k] = sol.dense.clone();
            let trial_lambdas = hop_lambdas(scn, &trial)?;
            let value = merit(scn, &trial_lambdas)?;
            if value >= current {
                alphas[k] = sol.weights_alpha.clone();
                fs = trial;
                sols[k] = sol;
                lambdas = trial_lambdas;
                current = value;
            } else {
                debug!("hop {k}: update lowers the merit ({value} < {current}), kept previous");
            }
        }
        trace.push(current);
        if (current - before).abs() <= stop.rel_tol * before.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let terms = hop_terms(scn, &fs)?;
    let (rotations_q, feedback_c) = optimal_rotations(scn, &fs)?;
    Ok(HopState {
        forwarders_f: sols,
        rotations_q,
        amplifications_m: terms.iter().map(|t| t.m.clone()).collect(),
        noise_levels: terms.iter().map(|t| t.level).collect(),
        feedback_c,
        objective_trace: trace,
        iterations,
        converged,
    })
}
