//! Grid-search water-filling for up to three channels.

use matmono_core::{Error, Result};

fn utility(gains: &[f64], p: &[f64]) -> f64 {
    gains.iter().zip(p).map(|(g, p)| (g * p).ln_1p()).sum()
}

/// Best power vector on a grid of spacing `step` for
/// `max sum log(1 + g_i p_i)`, `sum p_i <= budget`, `p_i <= cap`.
///
/// All coordinates but the last lie on the grid; the last takes whatever
/// budget remains, clipped to the cap. The objective is increasing, so an
/// optimum never leaves budget that the last channel could still use.
pub fn grid_waterfill(gains: &[f64], budget: f64, cap: Option<f64>, step: f64) -> Result<Vec<f64>> {
    if gains.is_empty() {
        return Err(Error::InvalidInput("no channels".into()));
    }
    if gains.len() > 3 {
        return Err(Error::Unsupported(format!("grid search over {} channels", gains.len())));
    }
    if !(budget > 0.0) || !(step > 0.0) || gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidInput("budget, step and gains must be positive".into()));
    }
    let cap = cap.unwrap_or(f64::INFINITY);
    if !(cap > 0.0) {
        return Err(Error::InvalidInput("cap must be positive".into()));
    }
    let top = budget.min(cap);
    let steps = (top / step + 1e-9).floor() as usize;
    let last = |rest: f64| rest.max(0.0).min(cap);

    Ok(match gains.len() {
        1 => vec![top],
        2 => {
            let mut best = (f64::NEG_INFINITY, vec![0.0, 0.0]);
            for i in 0..=steps {
                let p = [i as f64 * step, last(budget - i as f64 * step)];
                let u = utility(gains, &p);
                if u > best.0 {
                    best = (u, p.to_vec());
                }
            }
            best.1
        }
        _ => {
            let mut best = (f64::NEG_INFINITY, vec![0.0; 3]);
            for i in 0..=steps {
                let p1 = i as f64 * step;
                let rest = budget - p1;
                let n2 = (rest.min(cap) / step + 1e-9).floor() as usize;
                let eval = |j: usize| {
                    let p2 = j as f64 * step;
                    let p = [p1, p2, last(rest - p2)];
                    (utility(gains, &p), p)
                };
                // Concave in the second coordinate: discrete ternary search.
                let (mut lo, mut hi) = (0usize, n2);
                while hi - lo > 2 {
                    let m1 = lo + (hi - lo) / 3;
                    let m2 = hi - (hi - lo) / 3;
                    let (f1, f2) = (eval(m1).0, eval(m2).0);
                    if f1 < f2 {
                        lo = m1 + 1;
                    } else if f1 > f2 {
                        hi = m2 - 1;
                    } else {
                        lo = m1;
                        hi = m2;
                    }
                }
                for j in lo..=hi {
                    let (u, p) = eval(j);
                    if u > best.0 {
                        best = (u, p.to_vec());
                    }
                }
            }
            best.1
        }
    })
}
