//! Compression matrices for distributed sensor fusion.
//!
//! Sensor `k` observes the block `x_k` of a jointly Gaussian source with
//! covariance `C_x`, compresses it with `X_k` and sends it over its own MIMO
//! channel. The fusion centre's mutual information is
//! `log|C_x^{-1} + blkdiag(X_k^H A_k X_k)| - log|C_x^{-1}|` with
//! `A_k = H_k^H R_{n_k}^{-1} H_k`. With the other sensors fixed, a Schur
//! complement reduces the problem for sensor `k` to `log|X_k^H A_k X_k + Phi_k|`.

use log::debug;
use matmono_core::linalg::{
    block_diag, hermitian_inv, hermitian_inv_sqrt, hermitian_part, hermitian_sqrt, log_det_pd, permutation_matrix,
    sorted_evd, CMat,
};
use matmono_core::structure::{solve_joint, solve_shaping, solve_weighted, GainObjective};
use matmono_core::{Error, PowerConstraint, Result, StructuredSolution, Tolerances};

#[derive(Debug, Clone)]
pub struct SensorScenario {
    pub source_cov: CMat,
    pub block_dims: Vec<usize>,
    /// `H_k`, fusion-centre antennas x sensor-`k` antennas.
    pub channels: Vec<CMat>,
    pub noise_covs: Vec<CMat>,
    /// `R_{x_k}`, the diagonal blocks of `C_x`.
    pub block_covs: Vec<CMat>,
    /// Constraint on `X_k R_{x_k}^{1/2}`, i.e. on the transmitted covariance.
    pub constraints: Vec<PowerConstraint>,
    source_inv: CMat,
}

fn block_offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for d in dims {
        off.push(off.last().unwrap() + d);
    }
    off
}

impl SensorScenario {
    pub fn new(
        source_cov: CMat,
        block_dims: Vec<usize>,
        channels: Vec<CMat>,
        noise_covs: Vec<CMat>,
        constraints: Vec<PowerConstraint>,
    ) -> Result<Self> {
        let k = block_dims.len();
        if k == 0 || channels.len() != k || noise_covs.len() != k || constraints.len() != k {
            return Err(Error::Dimension("per-sensor lists must all have one entry per sensor".into()));
        }
        let off = block_offsets(&block_dims);
        let n = off[k];
        if source_cov.shape() != (n, n) {
            return Err(Error::Dimension(format!("source covariance must be {n}x{n}")));
        }
        if block_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("empty sensor block".into()));
        }
        let source_inv = hermitian_inv(&source_cov)
            .map_err(|_| Error::InvalidInput("source covariance must be positive definite".into()))?;
        let mut block_covs = Vec::with_capacity(k);
        for i in 0..k {
            let b = source_cov.view((off[i], off[i]), (block_dims[i], block_dims[i])).into_owned();
            hermitian_inv_sqrt(&b)
                .map_err(|_| Error::InvalidInput(format!("source block {i} is rank deficient")))?;
            let (h, r) = (&channels[i], &noise_covs[i]);
            if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
                return Err(Error::Dimension(format!("noise covariance {i} does not match channel {i}")));
            }
            log_det_pd(r).map_err(|_| Error::InvalidInput(format!("noise covariance {i} must be PD")))?;
            constraints[i].validate(h.ncols())?;
            block_covs.push(b);
        }
        Ok(SensorScenario {
            source_cov,
            block_dims,
            channels,
            noise_covs,
            block_covs,
            constraints,
            source_inv,
        })
    }

    pub fn sensors(&self) -> usize {
        self.block_dims.len()
    }

    pub fn source_inv(&self) -> &CMat {
        &self.source_inv
    }

    /// `A_k = H_k^H R_{n_k}^{-1} H_k`.
    pub fn channel_snr(&self, k: usize) -> Result<CMat> {
        let h = &self.channels[k];
        Ok(hermitian_part(&(h.adjoint() * hermitian_inv(&self.noise_covs[k])? * h)))
    }

    /// Shape `(sensor antennas, block dimension)` of `X_k`.
    pub fn compressor_shape(&self, k: usize) -> (usize, usize) {
        (self.channels[k].ncols(), self.block_dims[k])
    }
}

#[derive(Debug, Clone)]
pub struct FusionState {
    /// Whitened variables `F_k` before rotation.
    pub compressors_f: Vec<StructuredSolution>,
    pub rotations: Vec<CMat>,
    /// `X_k = F_k Q_k R_{x_k}^{-1/2}`
    pub compressors_x: Vec<CMat>,
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

/// Index order that moves block `k` (0-based) to the front and block 0 to
/// position `k`, leaving the rest in place.
pub fn block_order(n_blocks: usize, k: usize) -> Result<Vec<usize>> {
    if k >= n_blocks {
        return Err(Error::InvalidInput(format!("sensor index {k} out of range for {n_blocks} sensors")));
    }
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.swap(0, k);
    Ok(order)
}

/// Permutation matrix `P_k` such that `P_k M P_k^T` reorders the blocks of
/// `M` as [`block_order`].
pub fn build_permutation(block_dims: &[usize], k: usize) -> Result<CMat> {
    let order = block_order(block_dims.len(), k)?;
    let off = block_offsets(block_dims);
    let perm: Vec<usize> = order.iter().flat_map(|&b| off[b]..off[b + 1]).collect();
    Ok(permutation_matrix(&perm))
}

/// `Phi_k = P11 - P12 (P22 + Xi_k)^{-1} P21` for the partition of the
/// permuted `C_x^{-1}` with a leading `n_k x n_k` block.
pub fn schur_complement_phi(permuted_inv: &CMat, n_k: usize, xi: &CMat) -> Result<CMat> {
    let n = permuted_inv.nrows();
    if n_k > n || xi.shape() != (n - n_k, n - n_k) {
        return Err(Error::Dimension("partition does not match the remaining blocks".into()));
    }
    let p11 = permuted_inv.view((0, 0), (n_k, n_k)).into_owned();
    if n_k == n {
        return Ok(p11);
    }
    let p12 = permuted_inv.view((0, n_k), (n_k, n - n_k)).into_owned();
    let p22 = permuted_inv.view((n_k, n_k), (n - n_k, n - n_k)).into_owned();
    let inner = hermitian_inv(&(p22 + xi))?;
    Ok(hermitian_part(&(p11 - &p12 * inner * p12.adjoint())))
}

/// `X_k^H A_k X_k` for every sensor.
fn information_blocks(scn: &SensorScenario, xs: &[CMat]) -> Result<Vec<CMat>> {
    xs.iter()
        .enumerate()
        .map(|(k, x)| Ok(hermitian_part(&(x.adjoint() * scn.channel_snr(k)? * x))))
        .collect()
}

/// `Phi_k` for sensor `k` given the current compressors of all sensors.
pub fn phi_for(scn: &SensorScenario, xs: &[CMat], k: usize) -> Result<CMat> {
    let p = build_permutation(&scn.block_dims, k)?;
    let permuted = &p * scn.source_inv() * p.transpose();
    let blocks = information_blocks(scn, xs)?;
    let order = block_order(scn.sensors(), k)?;
    let xi = block_diag(&order[1..].iter().map(|&j| blocks[j].clone()).collect::<Vec<_>>());
    schur_complement_phi(&permuted, scn.block_dims[k], &xi)
}

/// `log|C_x^{-1} + blkdiag(X_k^H A_k X_k)| - log|C_x^{-1}|`.
pub fn mutual_information(scn: &SensorScenario, xs: &[CMat]) -> Result<f64> {
    let d = block_diag(&information_blocks(scn, xs)?);
    Ok(log_det_pd(&(scn.source_inv() + d))? - log_det_pd(scn.source_inv())?)
}

/// `Q = U_S Ubar^H` with `S = F^H A F` sorted descending and `Ubar` the
/// eigenvectors of `phi_term` sorted ascending. Maximises
/// `log|phi_term + Q^H S Q|` over unitary `Q`.
pub fn optimal_rotation_sensor(f: &CMat, a: &CMat, phi_term: &CMat) -> Result<CMat> {
    let s = f.adjoint() * a * f;
    let us = sorted_evd(&s)?.vectors;
    let ubar = ascending_vectors(phi_term)?;
    Ok(us * ubar.adjoint())
}

fn ascending_vectors(m: &CMat) -> Result<CMat> {
    let e = sorted_evd(m)?;
    let n = e.vectors.ncols();
    Ok(CMat::from_fn(n, n, |i, j| e.vectors[(i, n - 1 - j)]))
}

fn ascending_values(m: &CMat) -> Result<Vec<f64>> {
    let mut v = sorted_evd(m)?.values;
    v.reverse();
    Ok(v)
}

/// `R_{x_k}^{1/2} Phi_k R_{x_k}^{1/2}`, the noise-floor matrix seen by the
/// whitened variable `F_k Q_k = X_k R_{x_k}^{1/2}`.
pub fn phi_term(scn: &SensorScenario, phi: &CMat, k: usize) -> Result<CMat> {
    let r = hermitian_sqrt(&scn.block_covs[k])?;
    Ok(hermitian_part(&(&r * phi * &r)))
}

/// Closed-form whitened compressor for sensor `k` with the others fixed,
/// before rotation.
pub fn update_compressor(
    scn: &SensorScenario,
    xs: &[CMat],
    k: usize,
    warm_alpha: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<(StructuredSolution, CMat)> {
    let (nt, nk) = scn.compressor_shape(k);
    let a = scn.channel_snr(k)?;
    let phi = phi_for(scn, xs, k)?;
    let term = phi_term(scn, &phi, k)?;
    let r = nt.min(nk);
    let floors: Vec<f64> = ascending_values(&term)?.into_iter().take(r).collect();
    let objective = GainObjective::NoiseFloors(floors);
    let sol = match &scn.constraints[k] {
        PowerConstraint::Shaping { shape } => solve_shaping(shape, nk)?,
        PowerConstraint::Joint { total, cap } => solve_joint(&a, *total, *cap, nk, &objective)?,
        PowerConstraint::Weighted { terms } => solve_weighted(&a, terms, nk, &objective, warm_alpha, tol)?,
    };
    Ok((sol, term))
}

/// Compressor `X_k = F Q R_{x_k}^{-1/2}` from a whitened variable.
pub fn recover_compressor(scn: &SensorScenario, fq: &CMat, k: usize) -> Result<CMat> {
    Ok(fq * hermitian_inv_sqrt(&scn.block_covs[k])?)
}

/// Feasible scaled-identity starting compressors.
pub fn default_init(scn: &SensorScenario) -> Result<Vec<CMat>> {
    (0..scn.sensors())
        .map(|k| {
            let (nt, nk) = scn.compressor_shape(k);
            let f = scn.constraints[k].scaled_identity_init(nt, nk)?;
            recover_compressor(scn, &f, k)
        })
        .collect()
}

/// Alternating block ascent over the sensors in ascending order; an update
/// is kept only if it does not lower the mutual information.
pub fn alternating_solve_sensors(
    scn: &SensorScenario,
    init: Option<Vec<CMat>>,
    stop: StopRule,
    tol: &Tolerances,
) -> Result<FusionState> {
    let n = scn.sensors();
    let xs = match init {
        Some(x) => x,
        None => default_init(scn)?,
    };
    if xs.len() != n {
        return Err(Error::Dimension("one initial compressor per sensor is required".into()));
    }
    let mut whitened = Vec::with_capacity(n);
    for (k, x) in xs.iter().enumerate() {
        if x.shape() != scn.compressor_shape(k) {
            return Err(Error::Dimension(format!("initial compressor {k} has the wrong shape")));
        }
        let f = x * hermitian_sqrt(&scn.block_covs[k])?;
        let v = scn.constraints[k].relative_violation(&f)?;
        if v > 1e-6 {
            return Err(Error::Infeasible(format!("initial compressor {k} violates its constraint by {v:.3e}")));
        }
        whitened.push(StructuredSolution::from_dense(&f)?);
    }
    let mut state = FusionState {
        compressors_f: whitened,
        rotations: xs.iter().map(|x| CMat::identity(x.ncols(), x.ncols())).collect(),
        compressors_x: xs,
        objective_trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut current = mutual_information(scn, &state.compressors_x)?;
    state.objective_trace.push(current);
    let mut alphas: Vec<Option<Vec<f64>>> = vec![None; n];

    for it in 1..=stop.max_iter {
        state.iterations = it;
        let before = current;
        for k in 0..n {
            let (sol, term) = update_compressor(scn, &state.compressors_x, k, alphas[k].as_deref(), tol)?;
            let q = optimal_rotation_sensor(&sol.dense, &scn.channel_snr(k)?, &term)?;
            let x = recover_compressor(scn, &(&sol.dense * &q), k)?;
            let mut trial = state.compressors_x.clone();
            trial[k] = x;
            let value = mutual_information(scn, &trial)?;
            if value >= current {
                alphas[k] = sol.weights_alpha.clone();
                state.compressors_x = trial;
                state.compressors_f[k] = sol;
                state.rotations[k] = q;
                current = value;
            } else {
                debug!("sensor {k}: update lowers the mutual information ({value} < {current}), kept previous");
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
