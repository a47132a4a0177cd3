//! Power allocation over parallel modes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult {
    pub powers: Vec<f64>,
    pub water_level: f64,
    pub active_mask: Vec<bool>,
}

/// Maximise `sum log(1 + g_i p_i)` subject to `sum p_i <= budget`.
pub fn waterfill(gains: &[f64], budget: f64) -> Result<WaterfillResult> {
    waterfill_inner(gains, budget, f64::INFINITY)
}

/// Water-filling with the additional per-mode cap `p_i <= cap`.
pub fn waterfill_capped(gains: &[f64], budget: f64, cap: f64) -> Result<WaterfillResult> {
    if !(cap > 0.0) {
        return Err(Error::invalid(format!("cap must be positive, got {cap}")));
    }
    waterfill_inner(gains, budget, cap)
}

fn check_gains(gains: &[f64], budget: f64) -> Result<()> {
    if gains.is_empty() {
        return Err(Error::invalid("no channels"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid(format!("budget must be positive, got {budget}")));
    }
    if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::invalid("gains must be finite and non-negative"));
    }
    Ok(())
}

fn waterfill_inner(gains: &[f64], budget: f64, cap: f64) -> Result<WaterfillResult> {
    check_gains(gains, budget)?;
    // Live modes by increasing inverse gain. Powers are formed from
    // differences of inverse gains so that near-zero gains (inverse gains
    // near 1e16) do not swamp the budget in round-off.
    let mut live: Vec<(usize, f64)> = gains.iter().enumerate().filter(|(_, g)| **g > 0.0).map(|(i, g)| (i, 1.0 / g)).collect();
    live.sort_by(|a, b| a.1.total_cmp(&b.1));
    let n = live.len();
    let mut powers = vec![0.0; gains.len()];
    if n == 0 {
        return Ok(WaterfillResult { powers, water_level: 0.0, active_mask: vec![false; gains.len()] });
    }
    if cap.is_finite() && cap * n as f64 <= budget {
        for (i, _) in &live {
            powers[*i] = cap;
        }
        let active_mask = powers.iter().map(|&p| p > 0.0).collect();
        return Ok(WaterfillResult { powers, water_level: live[n - 1].1 + cap, active_mask });
    }

    let slack = 1e-12 * (budget + if cap.is_finite() { cap } else { 0.0 });
    // `capped` strongest modes sit at the cap, the next `free` share the rest.
    let max_capped = if cap.is_finite() { n - 1 } else { 0 };
    for capped in 0..=max_capped {
        let rest = if capped == 0 { budget } else { budget - capped as f64 * cap };
        if rest <= 0.0 {
            break;
        }
        for free in 1..=n - capped {
            let set = &live[capped..capped + free];
            // `mu - v_i` for any mode, as a difference of inverse gains
            let level_minus = |v: f64| (rest - set.iter().map(|(_, w)| v - w).sum::<f64>()) / free as f64;
            let ok_free = set.iter().all(|(_, v)| {
                let p = level_minus(*v);
                p >= -slack && p <= cap + slack
            });
            let ok_capped = capped == 0 || level_minus(live[capped - 1].1) >= cap - slack;
            let ok_off = capped + free == n || level_minus(live[capped + free].1) <= slack;
            if ok_free && ok_capped && ok_off {
                for (i, _) in &live[..capped] {
                    powers[*i] = cap;
                }
                for (i, v) in set {
                    powers[*i] = level_minus(*v).clamp(0.0, cap);
                }
                let water_level = set[0].1 + level_minus(set[0].1);
                let active_mask = powers.iter().map(|&p| p > 0.0).collect();
                return Ok(WaterfillResult { powers, water_level, active_mask });
            }
        }
    }
    Err(Error::invalid("water-filling found no consistent active set"))
}

/// Concave, increasing per-mode utility `u(p)` of the power `p` on a mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeUtility {
    /// `log(1 + gain p)`
    Log { gain: f64 },
    /// `-log(1 - coupling x / (1 + x))` with `x = gain p`
    CascadeRate { gain: f64, coupling: f64 },
    /// `coupling x / (1 + x)` with `x = gain p`
    CascadeMse { gain: f64, coupling: f64 },
}

impl ModeUtility {
    pub fn value(&self, p: f64) -> f64 {
        match *self {
            ModeUtility::Log { gain } => (gain * p).ln_1p(),
            ModeUtility::CascadeRate { gain, coupling } => {
                let x = gain * p;
                x.ln_1p() - ((1.0 - coupling) * x).ln_1p()
            }
            ModeUtility::CascadeMse { gain, coupling } => {
                let x = gain * p;
                coupling * x / (1.0 + x)
            }
        }
    }

    pub fn marginal(&self, p: f64) -> f64 {
        match *self {
            ModeUtility::Log { gain } => gain / (1.0 + gain * p),
            ModeUtility::CascadeRate { gain, coupling } => {
                let x = gain * p;
                let b = 1.0 - coupling;
                gain * coupling / ((1.0 + x) * (1.0 + b * x))
            }
            ModeUtility::CascadeMse { gain, coupling } => {
                let x = gain * p;
                coupling * gain / ((1.0 + x) * (1.0 + x))
            }
        }
    }

    /// Power at which the marginal utility equals `price`, clipped to `[0, cap]`.
    pub fn power_at_price(&self, price: f64, cap: f64) -> f64 {
        let p = match *self {
            ModeUtility::Log { gain } => {
                if gain <= 0.0 { 0.0 } else { 1.0 / price - 1.0 / gain }
            }
            ModeUtility::CascadeRate { gain, coupling } => {
                if gain <= 0.0 || coupling <= 0.0 {
                    0.0
                } else {
                    let d = gain * coupling / price - 1.0;
                    if d <= 0.0 {
                        0.0
                    } else {
                        let b = 1.0 - coupling;
                        let x = 2.0 * d / ((1.0 + b) + ((1.0 + b).powi(2) + 4.0 * b * d).sqrt());
                        x / gain
                    }
                }
            }
            ModeUtility::CascadeMse { gain, coupling } => {
                if gain <= 0.0 || coupling <= 0.0 {
                    0.0
                } else {
                    ((coupling * gain / price).sqrt() - 1.0) / gain
                }
            }
        };
        p.clamp(0.0, cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub powers: Vec<f64>,
    /// Lagrange multiplier of the budget (0 when every mode is capped).
    pub price: f64,
}

/// Maximise `sum u_i(p_i)` subject to `sum p_i <= budget`, `0 <= p_i <= cap`.
pub fn allocate(utils: &[ModeUtility], budget: f64, cap: f64) -> Result<Allocation> {
    if utils.is_empty() {
        return Err(Error::invalid("no modes"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid(format!("budget must be positive, got {budget}")));
    }
    if !(cap > 0.0) {
        return Err(Error::invalid(format!("cap must be positive, got {cap}")));
    }
    let top = utils.iter().map(|u| u.marginal(0.0)).fold(0.0, f64::max);
    if !top.is_finite() {
        return Err(Error::invalid("non-finite mode gain"));
    }
    if top <= 0.0 {
        return Ok(Allocation { powers: vec![0.0; utils.len()], price: 0.0 });
    }
    let total = |nu: f64| -> f64 { utils.iter().map(|u| u.power_at_price(nu, cap)).sum() };
    let useful = utils.iter().filter(|u| u.marginal(0.0) > 0.0).count();
    if cap.is_finite() && cap * useful as f64 <= budget {
        let powers = utils
            .iter()
            .map(|u| if u.marginal(0.0) > 0.0 { cap } else { 0.0 })
            .collect();
        return Ok(Allocation { powers, price: 0.0 });
    }
    let mut hi = top;
    let mut lo = top;
    while total(lo) < budget {
        lo *= 0.5;
        if lo < 1e-300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let powers: Vec<f64> = utils.iter().map(|u| u.power_at_price(hi, cap)).collect();
    Ok(Allocation { powers, price: hi })
}
