//! Sum-rate precoder design for the K-user MIMO uplink.
//!
//! Each user's precoder is updated in turn with the others fixed. With the
//! other users folded into the interference-plus-noise covariance `K_k`, the
//! per-user problem is matrix-monotonic in `X_k^H H_k^H K_k^{-1} H_k X_k`, so
//! the optimal precoder is the closed-form structure of its constraint
//! family followed by a unitary rotation matching the stream weights.

use log::debug;
use matmono_core::linalg::{hermitian_inv, log_det_pd, sorted_evd, CMat};
use matmono_core::structure::{solve_joint, solve_shaping, solve_weighted, GainObjective};
use matmono_core::{Error, PowerConstraint, Result, StructuredSolution, Tolerances};

/// Immutable uplink problem data.
#[derive(Debug, Clone)]
pub struct UplinkScenario {
    /// `H_k`, base-station antennas x user-`k` antennas.
    pub channels: Vec<CMat>,
    pub noise_cov: CMat,
    /// `W_k`, one per user, square with the number of streams of user `k`.
    pub weights: Vec<CMat>,
    pub constraints: Vec<PowerConstraint>,
}

impl UplinkScenario {
    pub fn new(
        channels: Vec<CMat>,
        noise_cov: CMat,
        weights: Vec<CMat>,
        constraints: Vec<PowerConstraint>,
    ) -> Result<Self> {
        let k = channels.len();
        if k == 0 || weights.len() != k || constraints.len() != k {
            return Err(Error::Dimension(format!(
                "{k} channels, {} weights, {} constraints",
                weights.len(),
                constraints.len()
            )));
        }
        let nr = noise_cov.nrows();
        if noise_cov.ncols() != nr {
            return Err(Error::Dimension("noise covariance must be square".into()));
        }
        log_det_pd(&noise_cov).map_err(|_| Error::InvalidInput("noise covariance must be PD".into()))?;
        for (i, ((h, w), c)) in channels.iter().zip(&weights).zip(&constraints).enumerate() {
            if h.nrows() != nr {
                return Err(Error::Dimension(format!("channel {i} has {} rows, expected {nr}", h.nrows())));
            }
            if w.nrows() != w.ncols() || w.nrows() == 0 {
                return Err(Error::Dimension(format!("weight {i} must be square")));
            }
            log_det_pd(w).map_err(|_| Error::InvalidInput(format!("weight {i} must be PD")))?;
            c.validate(h.ncols())?;
        }
        Ok(UplinkScenario { channels, noise_cov, weights, constraints })
    }

    pub fn users(&self) -> usize {
        self.channels.len()
    }

    /// Precoder shape `(user antennas, streams)` of user `k`.
    pub fn precoder_shape(&self, k: usize) -> (usize, usize) {
        (self.channels[k].ncols(), self.weights[k].nrows())
    }
}

#[derive(Debug, Clone)]
pub struct PrecoderState {
    pub precoders: Vec<StructuredSolution>,
    pub rotations: Vec<CMat>,
    /// `X_k = F_k Q_k`
    pub realized: Vec<CMat>,
    /// Sum rate after each outer iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { rel_tol: 1e-6, max_iter: 200 }
    }
}

/// `K_k = R_n + sum_{j != k} H_j X_j W_j X_j^H H_j^H`.
pub fn interference_covariance(scn: &UplinkScenario, realized: &[CMat], k: usize) -> CMat {
    let mut acc = scn.noise_cov.clone();
    for (j, x) in realized.iter().enumerate() {
        if j != k {
            let hx = &scn.channels[j] * x;
            acc += &hx * &scn.weights[j] * hx.adjoint();
        }
    }
    acc
}

/// `log|R_n + sum H_k X_k W_k X_k^H H_k^H| - log|R_n|` in nats.
pub fn sum_rate(scn: &UplinkScenario, realized: &[CMat]) -> Result<f64> {
    let all = interference_covariance(scn, realized, usize::MAX);
    Ok(log_det_pd(&all)? - log_det_pd(&scn.noise_cov)?)
}

/// `Q = U_S U_W^H`, which maximises `log|I + W Q^H S Q|` over unitary `Q`
/// where `S = F^H H^H K^{-1} H F`.
pub fn optimal_rotation_uplink(f: &CMat, h: &CMat, k_nk: &CMat, w: &CMat) -> Result<CMat> {
    let hf = h * f;
    let s = hf.adjoint() * hermitian_inv(k_nk)? * hf;
    let us = sorted_evd(&s)?.vectors;
    let uw = sorted_evd(w)?.vectors;
    Ok(us * uw.adjoint())
}

fn stream_weights(w: &CMat, r: usize) -> Result<Vec<f64>> {
    Ok(sorted_evd(w)?.values.into_iter().take(r).collect())
}

/// Closed-form optimal precoder of user `k` with the other users fixed,
/// before its rotation.
pub fn update_precoder(
    scn: &UplinkScenario,
    realized: &[CMat],
    k: usize,
    warm_alpha: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<StructuredSolution> {
    let (nt, d) = scn.precoder_shape(k);
    let h = &scn.channels[k];
    let pi = h.adjoint() * hermitian_inv(&interference_covariance(scn, realized, k))? * h;
    let r = nt.min(d);
    let objective = GainObjective::WeightedCapacity(stream_weights(&scn.weights[k], r)?);
    match &scn.constraints[k] {
        PowerConstraint::Shaping { shape } => solve_shaping(shape, d),
        PowerConstraint::Joint { total, cap } => solve_joint(&pi, *total, *cap, d, &objective),
        PowerConstraint::Weighted { terms } => solve_weighted(&pi, terms, d, &objective, warm_alpha, tol),
    }
}

/// Feasible scaled-identity starting precoders.
pub fn default_init(scn: &UplinkScenario) -> Result<Vec<CMat>> {
    (0..scn.users())
        .map(|k| {
            let (nt, d) = scn.precoder_shape(k);
            scn.constraints[k].scaled_identity_init(nt, d)
        })
        .collect()
}

/// Alternating block ascent over the users, in ascending order.
///
/// A block update is kept only if it does not lower the sum rate, so the
/// trace is non-decreasing.
pub fn alternating_solve_uplink(
    scn: &UplinkScenario,
    init: Option<Vec<CMat>>,
    stop: StopRule,
    tol: &Tolerances,
) -> Result<PrecoderState> {
    let n_users = scn.users();
    let realized = match init {
        Some(x) => x,
        None => default_init(scn)?,
    };
    if realized.len() != n_users {
        return Err(Error::Dimension("one initial precoder per user is required".into()));
    }
    for (k, x) in realized.iter().enumerate() {
        if x.shape() != scn.precoder_shape(k) {
            return Err(Error::Dimension(format!("initial precoder {k} has the wrong shape")));
        }
        let v = scn.constraints[k].relative_violation(x)?;
        if v > 1e-6 {
            return Err(Error::Infeasible(format!("initial precoder {k} violates its constraint by {v:.3e}")));
        }
    }
    let mut state = PrecoderState {
        precoders: realized.iter().map(StructuredSolution::from_dense).collect::<Result<_>>()?,
        rotations: realized.iter().map(|x| CMat::identity(x.ncols(), x.ncols())).collect(),
        realized,
        objective_trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut current = sum_rate(scn, &state.realized)?;
    state.objective_trace.push(current);
    let mut alphas: Vec<Option<Vec<f64>>> = vec![None; n_users];

    for it in 1..=stop.max_iter {
        state.iterations = it;
        let before = current;
        for k in 0..n_users {
            let sol = update_precoder(scn, &state.realized, k, alphas[k].as_deref(), tol)?;
            let k_nk = interference_covariance(scn, &state.realized, k);
            let q = optimal_rotation_uplink(&sol.dense, &scn.channels[k], &k_nk, &scn.weights[k])?;
            let x = &sol.dense * &q;
            let mut trial = state.realized.clone();
            trial[k] = x;
            let value = sum_rate(scn, &trial)?;
            if value >= current {
                alphas[k] = sol.weights_alpha.clone();
                state.realized = trial;
                state.precoders[k] = sol;
                state.rotations[k] = q;
                current = value;
            } else {
                debug!("user {k}: update lowers the sum rate ({value} < {current}), kept previous");
            }
        }
        state.objective_trace.push(current);
        if (current - before).abs() <= stop.rel_tol * before.abs().max(f64::MIN_POSITIVE) {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
