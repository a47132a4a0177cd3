//! Right-unitarily-invariant power constraints on a precoder `F`.
//!
//! All three families depend on `F` only through `F F^H`, so `F Q` is
//! feasible whenever `F` is, for any unitary `Q`.

use crate::error::{Error, Result};
use crate::linalg::{
    gram, hermitian_inv_sqrt, lambda_max, padded_identity, real_trace, sorted_evd, trace_product, CMat,
};
use crate::tolerance::Tolerances;

/// One `Tr(weight F F^H) <= budget` term of a weighted constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTerm {
    pub weight: CMat,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerConstraint {
    /// `F F^H <= shape` in the PSD order.
    Shaping { shape: CMat },
    /// `Tr(F F^H) <= total` and `F F^H <= cap I`.
    Joint { total: f64, cap: f64 },
    /// `Tr(weight_i F F^H) <= budget_i` for every term.
    Weighted { terms: Vec<WeightedTerm> },
}

impl PowerConstraint {
    /// Plain sum-power constraint.
    pub fn sum_power(total: f64) -> Self {
        PowerConstraint::Joint { total, cap: f64::INFINITY }
    }

    /// One weighted term per antenna: `[F F^H]_ii <= budgets[i]`.
    pub fn per_antenna(budgets: &[f64]) -> Self {
        let n = budgets.len();
        let terms = budgets
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let mut w = CMat::zeros(n, n);
                w[(i, i)] = crate::linalg::c(1.0);
                WeightedTerm { weight: w, budget: b }
            })
            .collect();
        PowerConstraint::Weighted { terms }
    }

    /// Check internal consistency for a precoder with `rows` rows.
    pub fn validate(&self, rows: usize) -> Result<()> {
        match self {
            PowerConstraint::Shaping { shape } => {
                if shape.shape() != (rows, rows) {
                    return Err(Error::dim(format!(
                        "shaping matrix is {}x{}, expected {rows}x{rows}",
                        shape.nrows(),
                        shape.ncols()
                    )));
                }
                crate::linalg::psd_eigenvalues(shape)?;
            }
            PowerConstraint::Joint { total, cap } => {
                if !(total.is_finite() && *total > 0.0) {
                    return Err(Error::invalid(format!("total power must be positive, got {total}")));
                }
                if !(*cap > 0.0) || cap.is_nan() {
                    return Err(Error::invalid(format!("eigenvalue cap must be positive, got {cap}")));
                }
            }
            PowerConstraint::Weighted { terms } => {
                if terms.is_empty() {
                    return Err(Error::invalid("weighted constraint has no terms"));
                }
                let mut sum = CMat::zeros(rows, rows);
                for (i, t) in terms.iter().enumerate() {
                    if t.weight.shape() != (rows, rows) {
                        return Err(Error::dim(format!("weight {i} is not {rows}x{rows}")));
                    }
                    if !(t.budget.is_finite() && t.budget > 0.0) {
                        return Err(Error::invalid(format!("budget {i} must be positive, got {}", t.budget)));
                    }
                    crate::linalg::psd_eigenvalues(&t.weight)?;
                    sum += &t.weight;
                }
                // A positive combination is PD iff the plain sum is.
                let evd = sorted_evd(&sum)?;
                if !(evd.min() > 1e-12 * evd.max()) {
                    return Err(Error::invalid(
                        "weight matrices have a common null space; power there is unbounded",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Largest constraint violation of `F` (non-positive when feasible).
    pub fn violation(&self, f: &CMat) -> Result<f64> {
        let g = gram(f);
        Ok(match self {
            PowerConstraint::Shaping { shape } => lambda_max(&(g - shape))?,
            PowerConstraint::Joint { total, cap } => {
                let tr = real_trace(&g) - total;
                if cap.is_finite() {
                    tr.max(lambda_max(&g)? - cap)
                } else {
                    tr
                }
            }
            PowerConstraint::Weighted { terms } => terms
                .iter()
                .map(|t| trace_product(&t.weight, &g) - t.budget)
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Violation normalised by the size of the corresponding budget.
    pub fn relative_violation(&self, f: &CMat) -> Result<f64> {
        let g = gram(f);
        Ok(match self {
            PowerConstraint::Shaping { shape } => {
                lambda_max(&(g - shape))? / lambda_max(shape)?.max(f64::MIN_POSITIVE)
            }
            PowerConstraint::Joint { total, cap } => {
                let tr = (real_trace(&g) - total) / total;
                if cap.is_finite() {
                    tr.max((lambda_max(&g)? - cap) / cap)
                } else {
                    tr
                }
            }
            PowerConstraint::Weighted { terms } => terms
                .iter()
                .map(|t| (trace_product(&t.weight, &g) - t.budget) / t.budget)
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn is_feasible(&self, f: &CMat, tol: &Tolerances) -> Result<bool> {
        Ok(self.relative_violation(f)? <= tol.feasibility)
    }

    /// Largest `s >= 0` such that `s F` is feasible.
    pub fn max_feasible_scale(&self, f: &CMat) -> Result<f64> {
        let g = gram(f);
        let s2 = match self {
            PowerConstraint::Joint { total, cap } => {
                let tr = real_trace(&g);
                let mut s2 = if tr > 0.0 { total / tr } else { f64::INFINITY };
                if cap.is_finite() {
                    let lm = lambda_max(&g)?;
                    if lm > 0.0 {
                        s2 = s2.min(cap / lm);
                    }
                }
                s2
            }
            PowerConstraint::Weighted { terms } => terms
                .iter()
                .map(|t| {
                    let tr = trace_product(&t.weight, &g);
                    if tr > 0.0 { t.budget / tr } else { f64::INFINITY }
                })
                .fold(f64::INFINITY, f64::min),
            PowerConstraint::Shaping { shape } => match hermitian_inv_sqrt(shape) {
                Ok(w) => {
                    let lm = lambda_max(&(&w * &g * &w))?;
                    if lm > 0.0 { 1.0 / lm } else { f64::INFINITY }
                }
                Err(_) => shaping_scale_bisect(shape, &g)?,
            },
        };
        Ok(s2.sqrt())
    }

    /// `s [I; 0]` of size `rows x cols` with the largest feasible `s`.
    pub fn scaled_identity_init(&self, rows: usize, cols: usize) -> Result<CMat> {
        let i = padded_identity(rows, cols);
        let s = self.max_feasible_scale(&i)?;
        if !s.is_finite() {
            return Err(Error::invalid("constraint does not bound the identity direction"));
        }
        Ok(i * crate::linalg::c(s))
    }
}

/// Largest `s^2` with `s^2 G <= R` when `R` is singular.
fn shaping_scale_bisect(shape: &CMat, g: &CMat) -> Result<f64> {
    let scale = lambda_max(shape)?.max(f64::MIN_POSITIVE);
    let ok = |s2: f64| -> Result<bool> {
        Ok(lambda_max(&(g * crate::linalg::c(s2) - shape))? <= 1e-12 * scale)
    };
    let gmax = lambda_max(g)?;
    if gmax <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut hi = scale / gmax;
    if ok(hi)? {
        return Ok(hi);
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real, from_real_diag};

    #[test]
    fn joint_checks() {
        let k = PowerConstraint::Joint { total: 2.0, cap: 1.5 };
        k.validate(2).unwrap();
        let f = from_real_diag(&[1.0, 1.0]);
        assert!(k.is_feasible(&f, &Tolerances::DEFAULT).unwrap());
        let f = from_real_diag(&[1.3, 0.1]);
        assert!(!k.is_feasible(&f, &Tolerances::DEFAULT).unwrap());
        assert!(matches!(
            PowerConstraint::Joint { total: 0.0, cap: 1.0 }.validate(2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn scale_to_boundary() {
        let k = PowerConstraint::sum_power(4.0);
        let s = k.max_feasible_scale(&from_real_diag(&[1.0, 1.0])).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-14);
        let k = PowerConstraint::per_antenna(&[1.0, 4.0]);
        let s = k.max_feasible_scale(&from_real_diag(&[1.0, 1.0])).unwrap();
        assert!((s - 1.0).abs() < 1e-14);
        let k = PowerConstraint::Shaping { shape: from_real_diag(&[4.0, 1.0]) };
        let s = k.max_feasible_scale(&from_real_diag(&[1.0, 1.0])).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let k = PowerConstraint::Shaping { shape: from_real_diag(&[4.0, 0.0]) };
        let s = k.max_feasible_scale(&from_real(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn right_rotation_keeps_violation() {
        let k = PowerConstraint::per_antenna(&[1.0, 2.0]);
        let f = from_real(2, 2, &[1.0, 0.5, -0.3, 0.9]);
        let h = 1.0 / 2f64.sqrt();
        let q = from_real(2, 2, &[h, h, -h, h]) * c(1.0);
        let a = k.violation(&f).unwrap();
        let b = k.violation(&(&f * q)).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn weighted_rejects_common_null_space() {
        let k = PowerConstraint::Weighted {
            terms: vec![WeightedTerm { weight: from_real_diag(&[1.0, 0.0]), budget: 1.0 }],
        };
        assert!(k.validate(2).is_err());
    }
}
