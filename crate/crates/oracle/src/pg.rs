//! Multi-block projected-gradient ascent with Armijo backtracking.

use matmono_core::linalg::{c, frobenius, CMat};
use matmono_core::random::complex_gaussian;
use matmono_core::{Error, PowerConstraint, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::objective::{gradient_check, Objective};
use crate::projection::Projector;
use crate::sampling::random_feasible;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub best_objective: f64,
    pub iterations: usize,
    /// Largest relative constraint violation over the blocks.
    pub feasibility_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PgOptions {
    pub max_iter: usize,
    /// Stop after `patience` consecutive steps improving by less than
    /// `rel_tol * max(1, |f|)`.
    pub rel_tol: f64,
    pub patience: usize,
    pub shrink: f64,
    pub slope: f64,
    pub max_backtracks: usize,
    pub restarts: usize,
    pub seed: u64,
    pub gradient_tol: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            max_iter: 5000,
            rel_tol: 1e-10,
            patience: 5,
            shrink: 0.5,
            slope: 1e-4,
            max_backtracks: 50,
            restarts: 8,
            seed: 0,
            gradient_tol: 1e-4,
        }
    }
}

struct Problem<'a> {
    constraints: &'a [PowerConstraint],
    projectors: Vec<Projector>,
}

impl<'a> Problem<'a> {
    fn new(obj: &'a dyn Objective, constraints: &'a [PowerConstraint]) -> Result<Self> {
        let shapes = obj.shapes();
        if shapes.len() != constraints.len() {
            return Err(Error::Dimension(format!(
                "{} blocks but {} constraints",
                shapes.len(),
                constraints.len()
            )));
        }
        let projectors = constraints
            .iter()
            .zip(&shapes)
            .map(|(k, (r, _))| Projector::new(k, *r))
            .collect::<Result<_>>()?;
        Ok(Problem { constraints, projectors })
    }

    fn project(&self, xs: &[CMat]) -> Result<(Vec<CMat>, bool)> {
        let mut ok = true;
        let out = xs
            .iter()
            .zip(&self.projectors)
            .map(|(x, p)| {
                let r = p.project(x)?;
                ok &= r.converged;
                Ok(r.matrix)
            })
            .collect::<Result<_>>()?;
        Ok((out, ok))
    }

    fn residual(&self, xs: &[CMat]) -> Result<f64> {
        xs.iter()
            .zip(self.constraints)
            .map(|(x, k)| k.relative_violation(x))
            .try_fold(f64::NEG_INFINITY, |a, v| Ok(a.max(v?)))
    }
}

fn inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.adjoint() * y).trace().re).sum()
}

/// Projected-gradient ascent from `init` (projected first).
///
/// The analytic gradient is compared with a central difference at the
/// starting point; a mismatch above `opts.gradient_tol` is an error.
pub fn projected_gradient(
    obj: &dyn Objective,
    constraints: &[PowerConstraint],
    init: &[CMat],
    opts: &PgOptions,
) -> Result<(OracleReport, Vec<CMat>)> {
    let prob = Problem::new(obj, constraints)?;
    let shapes = obj.shapes();
    if init.len() != shapes.len() || init.iter().zip(&shapes).any(|(x, s)| x.shape() != *s) {
        return Err(Error::Dimension("initial point does not match the objective blocks".into()));
    }
    let (mut xs, mut proj_ok) = prob.project(init)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let dir: Vec<CMat> = shapes.iter().map(|(r, k)| complex_gaussian(&mut rng, *r, *k, 1.0)).collect();
    let probe: Vec<CMat> = xs.iter().zip(&dir).map(|(x, d)| x + d * c(0.1)).collect();
    let err = gradient_check(obj, &probe, &dir)?;
    if err > opts.gradient_tol {
        return Err(Error::InvalidInput(format!("gradient check failed (relative error {err:.2e})")));
    }

    let mut f = obj.value(&xs)?;
    let mut step = 1.0;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let g = obj.gradient(&xs)?;
        if g.iter().map(frobenius).fold(0.0, f64::max) == 0.0 {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<CMat> = xs.iter().zip(&g).map(|(x, g)| x + g * c(t)).collect();
            let (cand, ok) = prob.project(&trial)?;
            let moved: Vec<CMat> = cand.iter().zip(&xs).map(|(a, b)| a - b).collect();
            let gain = inner(&g, &moved);
            let fc = obj.value(&cand)?;
            if fc >= f + opts.slope * gain && fc >= f {
                accepted = Some((cand, fc, ok));
                break;
            }
            t *= opts.shrink;
        }
        let Some((cand, fc, ok)) = accepted else {
            converged = true;
            break;
        };
        proj_ok &= ok;
        let improvement = fc - f;
        xs = cand;
        f = fc;
        step = (t * 2.0).min(1e8);
        if improvement <= opts.rel_tol * f.abs().max(1.0) {
            quiet += 1;
            if quiet >= opts.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let residual = prob.residual(&xs)?;
    let report = OracleReport {
        best_objective: f,
        iterations,
        feasibility_residual: residual,
        converged: converged && proj_ok && residual <= 1e-6,
    };
    Ok((report, xs))
}

/// Best of `opts.restarts` runs: the first from `init`, the rest from
/// random feasible points. Restarts run on the rayon pool.
pub fn projected_gradient_restarts(
    obj: &dyn Objective,
    constraints: &[PowerConstraint],
    init: &[CMat],
    opts: &PgOptions,
) -> Result<(OracleReport, Vec<CMat>)> {
    let shapes = obj.shapes();
    let runs: Vec<Result<(OracleReport, Vec<CMat>)>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                init.to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                shapes
                    .iter()
                    .zip(constraints)
                    .map(|((rows, cols), k)| random_feasible(k, *rows, *cols, &mut rng))
                    .collect::<Result<_>>()?
            };
            let o = PgOptions { seed: opts.seed.wrapping_add(r as u64), ..*opts };
            projected_gradient(obj, constraints, &start, &o)
        })
        .collect();
    let mut best: Option<(OracleReport, Vec<CMat>)> = None;
    let mut iterations = 0;
    for run in runs {
        let (rep, xs) = run?;
        iterations += rep.iterations;
        if best.as_ref().map_or(true, |(b, _)| rep.best_objective > b.best_objective) {
            best = Some((rep, xs));
        }
    }
    let (mut rep, xs) = best.expect("at least one restart");
    rep.iterations = iterations;
    Ok((rep, xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::LogDet;
    use matmono_core::linalg::{from_real_diag, padded_identity};
    use matmono_core::waterfill::waterfill;

    #[test]
    fn sum_power_matches_waterfilling() {
        let pi = from_real_diag(&[3.0, 1.0, 0.2]);
        let obj = LogDet { pi, cols: 3 };
        let k = [PowerConstraint::sum_power(2.0)];
        let (rep, _) =
            projected_gradient(&obj, &k, &[padded_identity(3, 3) * c(0.1)], &PgOptions::default()).unwrap();
        let wf = waterfill(&[3.0, 1.0, 0.2], 2.0).unwrap();
        let cap: f64 = [3.0, 1.0, 0.2].iter().zip(&wf.powers).map(|(g, p): (&f64, &f64)| (g * p).ln_1p()).sum();
        assert!(rep.converged);
        assert!(((rep.best_objective - cap) / cap).abs() < 1e-4, "{} vs {cap}", rep.best_objective);
    }

    #[test]
    fn start_at_zero_gradient() {
        let obj = LogDet { pi: CMat::zeros(2, 2), cols: 2 };
        let k = [PowerConstraint::sum_power(1.0)];
        let (rep, _) = projected_gradient(&obj, &k, &[padded_identity(2, 2) * c(0.5)], &PgOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.best_objective, 0.0);
        assert_eq!(rep.iterations, 1);
    }
}
