//! Transceiver design for K-hop amplify-and-forward MIMO relaying with
//! imperfect CSI.
//!
//! Hop `k` sees `x_k = H_k X_k x_{k-1} + n_k` with `H_k = H^_k + H_W Psi_k^{1/2}`.
//! Each forwarding matrix is reparametrised as `F_k` (the transmit-side
//! factor) and a unitary `Q_k`; the rotations have closed forms, and the
//! `F_k` follow one constraint-family structure per hop with powers chosen
//! by a coupled per-stream allocation.

mod cascade;
mod gmd;
mod hop;

pub use cascade::{
    cascade_mse_matrix, cascade_product, cascade_solve, evaluate_sum_rate, f_eigen, feedback_matrix, first_rotation,
    hop_lambdas, hop_terms, inner_rotations, optimal_rotations, stream_products, EigenMetric, HopTerms,
};
pub use gmd::{gmd_diagonal, Gmd};
pub use hop::{hop_amplification, hop_noise_covariance, hop_noise_level, hop_snr_eigenvalues, robust_update_hop};

use matmono_core::linalg::{cholesky_lower, psd_eigenvalues, sorted_evd, CMat};
use matmono_core::{Error, PowerConstraint, Result, StructuredSolution};

/// The six detection-MSE objectives, all minimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `log|Phi|` with `C = I`.
    LogDetMse,
    /// `Tr(W Phi)` with `C = I`.
    WeightedMse,
    /// Additively Schur-convex function of `diag(Phi)`; reported as the
    /// largest stream MSE.
    SchurConvexMse,
    /// Additively Schur-concave function of `diag(Phi)`; reported as
    /// `sum log Phi_ii`.
    SchurConcaveMse,
    /// Multiplicatively Schur-convex function of the squared Cholesky
    /// diagonal; reported as its largest entry.
    SchurConvexCholesky,
    /// Multiplicatively Schur-concave function of the squared Cholesky
    /// diagonal; reported as the sum of its logs.
    SchurConcaveCholesky,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::LogDetMse,
        ObjectiveKind::WeightedMse,
        ObjectiveKind::SchurConvexMse,
        ObjectiveKind::SchurConcaveMse,
        ObjectiveKind::SchurConvexCholesky,
        ObjectiveKind::SchurConcaveCholesky,
    ];

    /// Objective by its 1-based index in the order of [`ObjectiveKind::ALL`].
    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Unsupported(format!("objective {i}")))
    }

    /// Nonlinear (decision-feedback) transceivers use a feedback matrix `C`.
    pub fn nonlinear(self) -> bool {
        matches!(self, ObjectiveKind::SchurConvexCholesky | ObjectiveKind::SchurConcaveCholesky)
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Required for [`ObjectiveKind::WeightedMse`] only.
    pub weight_matrix: Option<CMat>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, weight_matrix: Option<CMat>) -> Result<Self> {
        match (kind, &weight_matrix) {
            (ObjectiveKind::WeightedMse, None) => {
                return Err(Error::InvalidInput("weighted MSE needs a weight matrix".into()))
            }
            (ObjectiveKind::WeightedMse, Some(w)) => {
                if w.nrows() != w.ncols() {
                    return Err(Error::Dimension("weight matrix must be square".into()));
                }
                if sorted_evd(w)?.min() <= 0.0 {
                    return Err(Error::InvalidInput("weight matrix must be positive definite".into()));
                }
            }
            (_, Some(_)) => return Err(Error::InvalidInput("only weighted MSE takes a weight matrix".into())),
            _ => {}
        }
        Ok(ObjectiveSpec { kind, weight_matrix })
    }

    pub fn of(kind: ObjectiveKind) -> Self {
        assert!(kind != ObjectiveKind::WeightedMse, "weighted MSE needs a weight matrix");
        ObjectiveSpec { kind, weight_matrix: None }
    }

    /// Descending eigenvalues of `W`, or ones.
    pub fn stream_weights(&self, n: usize) -> Result<Vec<f64>> {
        match &self.weight_matrix {
            Some(w) => Ok(sorted_evd(w)?.values),
            None => Ok(vec![1.0; n]),
        }
    }

    /// Scalar objective from the MSE matrix (with `C_opt` already applied
    /// for the nonlinear kinds).
    pub fn evaluate(&self, mse: &MseMatrix) -> Result<f64> {
        let m = &mse.matrix;
        let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].re).collect();
        Ok(match self.kind {
            ObjectiveKind::LogDetMse => matmono_core::linalg::log_det_pd(m)?,
            ObjectiveKind::WeightedMse => {
                let w = self.weight_matrix.as_ref().expect("validated");
                (w * m).trace().re
            }
            ObjectiveKind::SchurConvexMse | ObjectiveKind::SchurConvexCholesky => {
                d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            ObjectiveKind::SchurConcaveMse | ObjectiveKind::SchurConcaveCholesky => d.iter().map(|x| x.ln()).sum(),
        })
    }

    /// The same objective from the per-stream products
    /// `r_i = prod_k lambda_{k,i} / (1 + lambda_{k,i})`, assuming optimal
    /// rotations and feedback.
    pub fn evaluate_eigen(&self, source_var: f64, r: &[f64]) -> Result<f64> {
        let n = r.len() as f64;
        let mse: Vec<f64> = r.iter().map(|x| source_var * (1.0 - x)).collect();
        Ok(match self.kind {
            ObjectiveKind::LogDetMse | ObjectiveKind::SchurConcaveMse | ObjectiveKind::SchurConcaveCholesky => {
                mse.iter().map(|x| x.ln()).sum()
            }
            ObjectiveKind::WeightedMse => {
                let w = self.stream_weights(r.len())?;
                w.iter().zip(&mse).map(|(w, m)| w * m).sum()
            }
            ObjectiveKind::SchurConvexMse => mse.iter().sum::<f64>() / n,
            ObjectiveKind::SchurConvexCholesky => (mse.iter().map(|x| x.ln()).sum::<f64>() / n).exp(),
        })
    }
}

/// Immutable relay-chain data. Hop `k` (0-based) maps node `k` to node
/// `k + 1`; node 0 is the source.
#[derive(Debug, Clone)]
pub struct RelayScenario {
    /// `H^_k`, receive antennas x transmit antennas.
    pub est_channels: Vec<CMat>,
    /// `Psi_k`, transmit-side error correlation of hop `k`.
    pub error_covs: Vec<CMat>,
    pub noise_vars: Vec<f64>,
    pub source_var: f64,
    pub constraints: Vec<PowerConstraint>,
    pub objective: ObjectiveSpec,
    /// Number of data streams, the column count of the source factor `F_1`.
    pub streams: usize,
}

impl RelayScenario {
    pub fn new(
        est_channels: Vec<CMat>,
        error_covs: Vec<CMat>,
        noise_vars: Vec<f64>,
        source_var: f64,
        constraints: Vec<PowerConstraint>,
        objective: ObjectiveSpec,
        streams: usize,
    ) -> Result<Self> {
        let k = est_channels.len();
        if k == 0 || error_covs.len() != k || noise_vars.len() != k || constraints.len() != k {
            return Err(Error::Dimension("per-hop lists must all have one entry per hop".into()));
        }
        if !(source_var > 0.0) || noise_vars.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("source and noise variances must be positive".into()));
        }
        if streams == 0 {
            return Err(Error::InvalidInput("at least one stream is required".into()));
        }
        for i in 0..k {
            let h = &est_channels[i];
            if i > 0 && h.ncols() != est_channels[i - 1].nrows() {
                return Err(Error::Dimension(format!("hop {i} input does not match hop {} output", i - 1)));
            }
            if error_covs[i].shape() != (h.ncols(), h.ncols()) {
                return Err(Error::Dimension(format!("error covariance {i} must be {0}x{0}", h.ncols())));
            }
            psd_eigenvalues(&error_covs[i])?;
            constraints[i].validate(h.ncols())?;
        }
        if let Some(w) = &objective.weight_matrix {
            if w.nrows() != streams {
                return Err(Error::Dimension(format!("weight matrix must be {streams}x{streams}")));
            }
        }
        Ok(RelayScenario { est_channels, error_covs, noise_vars, source_var, constraints, objective, streams })
    }

    pub fn hops(&self) -> usize {
        self.est_channels.len()
    }

    /// Shape of `F_k`: the source factor has one column per stream, relay
    /// factors are square.
    pub fn forwarder_shape(&self, k: usize) -> (usize, usize) {
        let rows = self.est_channels[k].ncols();
        (rows, if k == 0 { self.streams } else { rows })
    }

    /// The same scenario with every `Psi_k = 0`.
    pub fn with_perfect_csi(&self) -> Self {
        let mut out = self.clone();
        for p in out.error_covs.iter_mut() {
            p.fill(num_zero());
        }
        out
    }
}

fn num_zero() -> matmono_core::C64 {
    matmono_core::C64::new(0.0, 0.0)
}

/// Detection MSE matrix and its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct MseMatrix {
    pub matrix: CMat,
    pub cholesky_l: CMat,
}

impl MseMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        let cholesky_l = cholesky_lower(&matrix)?;
        Ok(MseMatrix { matrix, cholesky_l })
    }
}

#[derive(Debug, Clone)]
pub struct HopState {
    pub forwarders_f: Vec<StructuredSolution>,
    pub rotations_q: Vec<CMat>,
    pub amplifications_m: Vec<CMat>,
    /// Scale of each `K_{n_k}`.
    pub noise_levels: Vec<f64>,
    /// Unit-diagonal lower-triangular feedback matrix (identity for the
    /// linear objectives).
    pub feedback_c: CMat,
    /// Allocation merit after each outer iteration: sum rate for the
    /// log-determinant kinds, negative weighted sum MSE otherwise.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl HopState {
    pub fn forwarders(&self) -> Vec<CMat> {
        self.forwarders_f.iter().map(|s| s.dense.clone()).collect()
    }
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
