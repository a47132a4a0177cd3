//! Closed-form optimal precoder structures for the three constraint families.
//!
//! Each solver returns `F = left diag(gains) right^H`; any `F Q` with `Q`
//! unitary meets the same constraint, which is how the system crates attach
//! their own right rotations.

use crate::constraint::{PowerConstraint, WeightedTerm};
use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_inv_sqrt, padded_identity, psd_eigenvalues, real_trace, scale_columns, sorted_evd, CMat,
};
use crate::tolerance::Tolerances;
use crate::waterfill::{allocate, waterfill_capped, ModeUtility};

#[derive(Debug, Clone)]
pub struct StructuredSolution {
    /// `rows x r` basis (orthonormal except in the weighted case).
    pub left_basis: CMat,
    pub gains: Vec<f64>,
    /// `cols x r` with orthonormal columns.
    pub right_unitary: CMat,
    pub dense: CMat,
    /// Multipliers of the weighted terms, normalised so `sum alpha_i P_i = 1`.
    pub weights_alpha: Option<Vec<f64>>,
    pub converged: bool,
}

impl StructuredSolution {
    pub fn new(left_basis: CMat, gains: Vec<f64>, right_unitary: CMat) -> Self {
        let dense = scale_columns(&left_basis, &gains) * right_unitary.adjoint();
        StructuredSolution {
            left_basis,
            gains,
            right_unitary,
            dense,
            weights_alpha: None,
            converged: true,
        }
    }

    /// `s [I; 0]`, the usual starting point of the block iterations.
    pub fn scaled_identity(rows: usize, cols: usize, s: f64) -> Self {
        let r = rows.min(cols);
        Self::new(padded_identity(rows, r), vec![s; r], padded_identity(cols, r))
    }

    /// Factor an arbitrary matrix through its SVD.
    pub fn from_dense(f: &CMat) -> Result<Self> {
        let svd = crate::linalg::sorted_svd(f)?;
        let r = svd.values.len();
        let mut out = Self::new(
            svd.u.columns(0, r).into_owned(),
            svd.values,
            svd.v.columns(0, r).into_owned(),
        );
        out.dense = f.clone();
        Ok(out)
    }

    /// Replace the right factor, i.e. return `left diag(gains) q^H`.
    pub fn with_right(&self, q: CMat) -> Self {
        let mut out = Self::new(self.left_basis.clone(), self.gains.clone(), q);
        out.weights_alpha = self.weights_alpha.clone();
        out.converged = self.converged;
        out
    }

    pub fn rows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn cols(&self) -> usize {
        self.dense.ncols()
    }
}

/// Scalar objective over the modes of a diagonalised problem.
///
/// Per-mode parameters are aligned with the effective gains sorted in
/// descending order.
#[derive(Debug, Clone, PartialEq)]
pub enum GainObjective {
    /// `sum log(1 + g_i p_i)`
    Capacity,
    /// `sum log(1 + w_i g_i p_i)`
    WeightedCapacity(Vec<f64>),
    /// `sum log(a_i + g_i p_i)`, up to a constant
    NoiseFloors(Vec<f64>),
    /// `sum -log(1 - c_i x_i / (1 + x_i))`, `x_i = g_i p_i`
    CascadeRate(Vec<f64>),
    /// `sum c_i x_i / (1 + x_i)`
    CascadeMse(Vec<f64>),
}

impl GainObjective {
    fn param(v: &[f64], i: usize, what: &str) -> Result<f64> {
        v.get(i)
            .copied()
            .ok_or_else(|| Error::dim(format!("{what} has {} entries, need {}", v.len(), i + 1)))
    }

    pub fn utilities(&self, eff: &[f64]) -> Result<Vec<ModeUtility>> {
        eff.iter()
            .enumerate()
            .map(|(i, &g)| {
                let g = g.max(0.0);
                Ok(match self {
                    GainObjective::Capacity => ModeUtility::Log { gain: g },
                    GainObjective::WeightedCapacity(w) => ModeUtility::Log {
                        gain: Self::param(w, i, "weights")?.max(0.0) * g,
                    },
                    GainObjective::NoiseFloors(a) => {
                        let a = Self::param(a, i, "floors")?;
                        if !(a > 0.0) {
                            return Err(Error::invalid("noise floors must be positive"));
                        }
                        ModeUtility::Log { gain: g / a }
                    }
                    GainObjective::CascadeRate(cp) => ModeUtility::CascadeRate {
                        gain: g,
                        coupling: Self::param(cp, i, "couplings")?.clamp(0.0, 1.0),
                    },
                    GainObjective::CascadeMse(cp) => ModeUtility::CascadeMse {
                        gain: g,
                        coupling: Self::param(cp, i, "couplings")?.max(0.0),
                    },
                })
            })
            .collect()
    }

    /// Objective value up to an additive constant.
    pub fn value(&self, eff: &[f64], powers: &[f64]) -> Result<f64> {
        Ok(self
            .utilities(eff)?
            .iter()
            .zip(powers)
            .map(|(u, &p)| u.value(p))
            .sum())
    }

    /// Optimal powers for the modes under a sum budget and per-mode cap.
    pub fn allocate(&self, eff: &[f64], budget: f64, cap: f64) -> Result<Vec<f64>> {
        if let GainObjective::Capacity = self {
            let g: Vec<f64> = eff.iter().map(|g| g.max(0.0)).collect();
            return Ok(waterfill_capped(&g, budget, cap)?.powers);
        }
        Ok(allocate(&self.utilities(eff)?, budget, cap)?.powers)
    }
}

fn check_pi(pi: &CMat, rows: usize) -> Result<()> {
    if pi.shape() != (rows, rows) {
        return Err(Error::dim(format!(
            "objective matrix is {}x{}, expected {rows}x{rows}",
            pi.nrows(),
            pi.ncols()
        )));
    }
    psd_eigenvalues(pi).map(|_| ())
}

/// `F F^H = shape` exactly: the Hermitian square root when `cols = rows`,
/// a truncated or zero-padded factor otherwise.
pub fn solve_shaping(shape: &CMat, cols: usize) -> Result<StructuredSolution> {
    let n = shape.nrows();
    PowerConstraint::Shaping { shape: shape.clone() }.validate(n)?;
    if cols == 0 {
        return Err(Error::invalid("precoder has no columns"));
    }
    let evd = sorted_evd(shape)?;
    let lam: Vec<f64> = evd.values.iter().map(|v| v.max(0.0)).collect();
    let rank = lam.iter().filter(|&&v| v > 1e-12 * lam[0].max(f64::MIN_POSITIVE)).count();
    let r = n.min(cols);
    if rank > r {
        return Err(Error::UnsupportedRank { rank, rows: n, cols });
    }
    let gains: Vec<f64> = lam[..r].iter().map(|v| v.sqrt()).collect();
    let left = evd.vectors.columns(0, r).into_owned();
    if cols == n {
        let right = left.clone();
        return Ok(StructuredSolution::new(left, gains, right));
    }
    Ok(StructuredSolution::new(left, gains, padded_identity(cols, r)))
}

/// Optimal structure under `Tr(F F^H) <= total`, `F F^H <= cap I`: the
/// eigenvectors of `pi` with powers from `objective`.
pub fn solve_joint(
    pi: &CMat,
    total: f64,
    cap: f64,
    cols: usize,
    objective: &GainObjective,
) -> Result<StructuredSolution> {
    let n = pi.nrows();
    PowerConstraint::Joint { total, cap }.validate(n)?;
    check_pi(pi, n)?;
    let r = n.min(cols);
    if r == 0 {
        return Err(Error::invalid("precoder has no columns"));
    }
    let evd = sorted_evd(pi)?;
    let eff: Vec<f64> = evd.values[..r].iter().map(|v| v.max(0.0)).collect();
    let powers = objective.allocate(&eff, total, cap)?;
    let gains = powers.iter().map(|p| p.sqrt()).collect();
    Ok(StructuredSolution::new(
        evd.vectors.columns(0, r).into_owned(),
        gains,
        padded_identity(cols, r),
    ))
}

/// Outcome of one multiplier probe.
#[derive(Debug, Clone)]
pub struct WeightProbe {
    /// `Tr(Omega_i F F^H) - P_i` for the structure at the probed multipliers.
    pub gaps: Vec<f64>,
    /// Objective of the structure after scaling it back to feasibility.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct WeightSearch {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Search for multipliers `alpha >= 0` whose aggregated-constraint solution
/// meets every individual constraint.
///
/// Works in the normalised coordinates `beta_i = alpha_i P_i` on the unit
/// simplex, stepping each coordinate by `exp(s_t gap_i / P_i)` with
/// `s_t = 1 / sqrt(t)`. Stops once every relative gap is at most
/// `tol.weight_search_rel`; otherwise returns the best-scoring multipliers
/// seen.
pub fn subgradient_weights<F>(
    mut probe: F,
    alpha0: &[f64],
    budgets: &[f64],
    tol: &Tolerances,
) -> Result<WeightSearch>
where
    F: FnMut(&[f64]) -> Result<WeightProbe>,
{
    let m = budgets.len();
    if alpha0.len() != m || m == 0 {
        return Err(Error::dim("multiplier and budget lengths differ"));
    }
    if alpha0.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || alpha0.iter().all(|&a| a == 0.0) {
        return Err(Error::invalid("initial multipliers must be non-negative and not all zero"));
    }
    let mut alpha = alpha0.to_vec();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for t in 1..=tol.weight_search_max_iter {
        let pr = probe(&alpha)?;
        let rel: Vec<f64> = pr.gaps.iter().zip(budgets).map(|(g, p)| g / p).collect();
        if rel.iter().all(|&r| r <= tol.weight_search_rel) {
            return Ok(WeightSearch { alpha, iterations: t, converged: true });
        }
        if best.as_ref().map_or(true, |(s, _)| pr.score > *s) {
            best = Some((pr.score, alpha.clone()));
        }
        let step = 1.0 / (t as f64).sqrt();
        let mut beta: Vec<f64> = alpha
            .iter()
            .zip(budgets)
            .zip(&rel)
            .map(|((a, p), r)| a * p * (step * r.min(50.0)).exp())
            .collect();
        let floor = 1e-300;
        let sum: f64 = beta.iter().sum();
        for b in beta.iter_mut() {
            *b = (*b / sum).max(floor);
        }
        alpha = beta.iter().zip(budgets).map(|(b, p)| b / p).collect();
    }
    let (_, alpha) = best.expect("at least one probe");
    Ok(WeightSearch {
        alpha,
        iterations: tol.weight_search_max_iter,
        converged: false,
    })
}

/// `Omega = sum alpha_i Omega_i`, ridged when badly conditioned.
pub fn aggregate_weights(terms: &[WeightedTerm], alpha: &[f64], tol: &Tolerances) -> Result<CMat> {
    let n = terms[0].weight.nrows();
    let mut omega = CMat::zeros(n, n);
    for (t, &a) in terms.iter().zip(alpha) {
        omega += &t.weight * c(a);
    }
    let evd = sorted_evd(&omega)?;
    if !(evd.min() * tol.omega_max_condition > evd.max()) {
        let ridge = tol.omega_ridge * real_trace(&omega).max(f64::MIN_POSITIVE) / n as f64;
        omega += CMat::identity(n, n) * c(ridge);
    }
    Ok(omega)
}

struct WeightedCandidate {
    left: CMat,
    eff: Vec<f64>,
    powers: Vec<f64>,
    /// `q[i][j] = left_j^H Omega_i left_j`
    quad: Vec<Vec<f64>>,
}

impl WeightedCandidate {
    fn build(
        pi: &CMat,
        terms: &[WeightedTerm],
        alpha: &[f64],
        r: usize,
        objective: &GainObjective,
        tol: &Tolerances,
    ) -> Result<Self> {
        let omega = aggregate_weights(terms, alpha, tol)?;
        let w = hermitian_inv_sqrt(&omega)?;
        let evd = sorted_evd(&(&w * pi * &w))?;
        let eff: Vec<f64> = evd.values[..r].iter().map(|v| v.max(0.0)).collect();
        let budget: f64 = terms.iter().zip(alpha).map(|(t, a)| a * t.budget).sum();
        let powers = objective.allocate(&eff, budget, f64::INFINITY)?;
        let left = &w * evd.vectors.columns(0, r);
        let quad = terms
            .iter()
            .map(|t| {
                (0..r)
                    .map(|j| {
                        let v = left.column(j);
                        (v.adjoint() * &t.weight * v)[(0, 0)].re
                    })
                    .collect()
            })
            .collect();
        Ok(WeightedCandidate { left, eff, powers, quad })
    }

    fn loads(&self) -> Vec<f64> {
        self.quad
            .iter()
            .map(|q| q.iter().zip(&self.powers).map(|(a, p)| a * p).sum())
            .collect()
    }

    fn feasible_scale2(&self, terms: &[WeightedTerm]) -> f64 {
        self.loads()
            .iter()
            .zip(terms)
            .map(|(l, t)| if *l > 0.0 { t.budget / l } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Optimal structure under weighted constraints `Tr(Omega_i F F^H) <= P_i`.
///
/// For fixed multipliers the aggregated problem has the closed form
/// `F = Omega^{-1/2} U diag(gains)`; the multipliers come from
/// [`subgradient_weights`], warm-started from `warm_alpha` when given. The
/// returned precoder is scaled so that it is feasible.
pub fn solve_weighted(
    pi: &CMat,
    terms: &[WeightedTerm],
    cols: usize,
    objective: &GainObjective,
    warm_alpha: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<StructuredSolution> {
    let n = pi.nrows();
    PowerConstraint::Weighted { terms: terms.to_vec() }.validate(n)?;
    check_pi(pi, n)?;
    let r = n.min(cols);
    if r == 0 {
        return Err(Error::invalid("precoder has no columns"));
    }
    let budgets: Vec<f64> = terms.iter().map(|t| t.budget).collect();
    let m = terms.len();
    let alpha0: Vec<f64> = match warm_alpha {
        Some(a) if a.len() == m && a.iter().all(|v| v.is_finite() && *v > 0.0) => a.to_vec(),
        _ => budgets.iter().map(|p| 1.0 / (m as f64 * p)).collect(),
    };

    let search = subgradient_weights(
        |alpha| {
            let cand = WeightedCandidate::build(pi, terms, alpha, r, objective, tol)?;
            let gaps = cand.loads().iter().zip(&budgets).map(|(l, p)| l - p).collect();
            let s2 = cand.feasible_scale2(terms);
            let scaled: Vec<f64> = cand.powers.iter().map(|p| p * s2).collect();
            let score = objective.value(&cand.eff, &scaled)?;
            Ok(WeightProbe { gaps, score })
        },
        &alpha0,
        &budgets,
        tol,
    )?;

    let cand = WeightedCandidate::build(pi, terms, &search.alpha, r, objective, tol)?;
    let s2 = cand.feasible_scale2(terms).min(1.0);
    let gains = cand.powers.iter().map(|p| (p * s2).sqrt()).collect();
    let norm: f64 = search.alpha.iter().zip(&budgets).map(|(a, p)| a * p).sum();
    let mut sol = StructuredSolution::new(cand.left, gains, padded_identity(cols, r));
    sol.weights_alpha = Some(search.alpha.iter().map(|a| a / norm).collect());
    sol.converged = search.converged;
    Ok(sol)
}
