//! Random feasible precoders and sampled Pareto-dominance tests.

use matmono_core::linalg::{c, hermitian_sqrt, scale_columns, sorted_evd, CMat};
use matmono_core::random::random_unitary;
use matmono_core::{Error, PowerConstraint, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A random `rows x cols` matrix meeting `constraint`.
///
/// Built as `U diag(gains) V^H` with Haar `U`, `V`. About half of the
/// samples are pushed onto the constraint boundary, where Pareto-relevant
/// points live.
pub fn random_feasible<R: Rng + ?Sized>(
    constraint: &PowerConstraint,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<CMat> {
    constraint.validate(rows)?;
    let r = rows.min(cols);
    let u = random_unitary(rng, rows).columns(0, r).into_owned();
    let v = random_unitary(rng, cols).columns(0, r).into_owned();
    let boundary = rng.random_bool(0.5);
    let f = match constraint {
        PowerConstraint::Shaping { shape } => {
            let s: Vec<f64> = (0..r)
                .map(|_| if boundary { 1.0 } else { rng.random::<f64>().powf(0.25) })
                .collect();
            hermitian_sqrt(shape)? * scale_columns(&u, &s) * v.adjoint()
        }
        PowerConstraint::Joint { .. } | PowerConstraint::Weighted { .. } => {
            let g: Vec<f64> = (0..r).map(|_| rng.random::<f64>()).collect();
            let f = scale_columns(&u, &g) * v.adjoint();
            let s = constraint.max_feasible_scale(&f)?;
            let s = if boundary { s } else { s * rng.random::<f64>() };
            f * c(s)
        }
    };
    // Guard against round-off on the boundary.
    let viol = constraint.relative_violation(&f)?;
    if viol > 1e-12 {
        let s = constraint.max_feasible_scale(&f)? * (1.0 - 1e-12);
        return Ok(f * c(s));
    }
    Ok(f)
}

/// Eigenvalues of `F^H Pi F`, descending.
pub fn mode_gains(f: &CMat, pi: &CMat) -> Result<Vec<f64>> {
    Ok(sorted_evd(&(f.adjoint() * pi * f))?.values)
}

fn dominates(other: &[f64], cand: &[f64]) -> bool {
    let scale = cand.first().copied().unwrap_or(0.0).abs().max(1.0);
    other.iter().zip(cand).all(|(o, c)| *o >= c - 1e-9 * scale)
        && other.iter().zip(cand).any(|(o, c)| *o > c + 1e-6)
}

/// True when no sampled feasible `F'` has `lambda(F'^H Pi F')` at least
/// `lambda(F^H Pi F)` in every entry with a strict gain above `1e-6`.
///
/// Besides the random samples, the candidate scaled up to the constraint
/// boundary is always tested.
pub fn pareto_dominance_check<R: Rng + ?Sized>(
    candidate: &CMat,
    pi: &CMat,
    constraint: &PowerConstraint,
    samples: usize,
    rng: &mut R,
) -> Result<bool> {
    let (rows, cols) = candidate.shape();
    if pi.shape() != (rows, rows) {
        return Err(Error::Dimension("objective matrix does not match the candidate".into()));
    }
    let cand = mode_gains(candidate, pi)?;
    let s = constraint.max_feasible_scale(candidate)?;
    if s.is_finite() && s > 1.0 + 1e-9 && dominates(&mode_gains(&(candidate * c(s)), pi)?, &cand) {
        return Ok(false);
    }
    const CHUNK: usize = 1000;
    let base: u64 = rng.random();
    let chunks = samples.div_ceil(CHUNK);
    let found = (0..chunks)
        .into_par_iter()
        .map(|ch| -> Result<bool> {
            let mut local = ChaCha8Rng::seed_from_u64(base.wrapping_add(ch as u64));
            let n = CHUNK.min(samples - ch * CHUNK);
            for _ in 0..n {
                let f = random_feasible(constraint, rows, cols, &mut local)?;
                if dominates(&mode_gains(&f, pi)?, &cand) {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(!found.into_iter().any(|d| d))
}
