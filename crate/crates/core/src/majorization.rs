//! Additive and multiplicative majorization tests.

use crate::error::{Error, Result};

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

const TOL: f64 = 1e-9;

fn check_pair(x: &[f64], y: &[f64], nonneg: bool) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite() || (nonneg && *v < 0.0)) {
        return Err(Error::invalid("entries must be finite and non-negative"));
    }
    Ok(())
}

/// True when `y` majorizes `x`: partial sums of the sorted `x` never
/// exceed those of `y`, and the totals agree. Slack is `1e-9 * max(1, sum |y|)`.
pub fn majorizes_additive(x: &[f64], y: &[f64]) -> Result<bool> {
    check_pair(x, y, false)?;
    let (xs, ys) = (sorted_desc(x), sorted_desc(y));
    let slack = TOL * ys.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        sx += a;
        sy += b;
        if sx > sy + slack {
            return Ok(false);
        }
    }
    Ok((sx - sy).abs() <= slack)
}

/// Multiplicative analogue: partial products of the sorted `x` never exceed
/// those of `y` and the full products agree, both to relative `1e-9`.
pub fn majorizes_multiplicative(x: &[f64], y: &[f64]) -> Result<bool> {
    check_pair(x, y, true)?;
    let (xs, ys) = (sorted_desc(x), sorted_desc(y));
    let (mut px, mut py) = (1.0, 1.0);
    for (a, b) in xs.iter().zip(&ys) {
        px *= a;
        py *= b;
        if px > py * (1.0 + TOL) + f64::MIN_POSITIVE {
            return Ok(false);
        }
    }
    Ok((px - py).abs() <= TOL * px.max(py) + f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_examples() {
        assert!(majorizes_additive(&[1.0, 1.0], &[2.0, 0.0]).unwrap());
        assert!(!majorizes_additive(&[2.0, 0.0], &[1.0, 1.0]).unwrap());
        assert!(!majorizes_additive(&[1.0, 1.0], &[2.0, 1.0]).unwrap());
        assert!(majorizes_additive(&[0.5, 1.5, 1.0], &[0.0, 0.0, 3.0]).unwrap());
    }

    #[test]
    fn multiplicative_examples() {
        assert!(majorizes_multiplicative(&[2.0, 2.0], &[4.0, 1.0]).unwrap());
        assert!(!majorizes_multiplicative(&[4.0, 1.0], &[2.0, 2.0]).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(majorizes_additive(&[1.0], &[1.0, 0.0]).is_err());
        assert!(majorizes_multiplicative(&[-1.0], &[1.0]).is_err());
    }
}
