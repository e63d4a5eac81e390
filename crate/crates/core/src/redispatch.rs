//! Re-dispatch LP: maximize the predicted damping gain `delta` subject to
//! `psi . (dx_R + dx_O) >= delta`, per-feature ramp/capacity boxes on
//! `dx_R + dx_O`, optional power balance `sum dx_R = 0`, and `dx_R = 0` for
//! features sitting at a capacity limit.
//!
//! `delta` enters a single row, so the optimum is the maximum of `psi . dx_R` over
//! the box (and balance hyperplane) plus the constant `psi . dx_O`. That problem is
//! a continuous knapsack solved exactly by sorting; alternative optima are resolved
//! to the minimum-norm `dx_R`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Slack used when testing whether a value sits on a limit (p.u.).
pub const LIMIT_TOL: f64 = 1e-9;

/// Extra re-dispatch capacity released by the spinning-reserve option, as a
/// fraction of capacity.
pub const RESERVE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLimits {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
    /// Largest change per dispatch interval (p.u.).
    pub ramp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchBounds {
    pub feature_ids: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Capacity window actually in force (reserve-widened when enabled).
    pub capacity: Vec<(f64, f64)>,
    /// Features sitting on a capacity limit.
    pub at_limit: Vec<bool>,
}

impl DispatchBounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Increment bounds `max(-ramp, x_lo - x) ..= min(ramp, x_hi - x)` per feature.
pub fn compute_bounds(x: &[f64], limits: &[FeatureLimits], reserve: bool) -> Result<DispatchBounds> {
    if x.len() != limits.len() {
        return Err(Error::Bounds(format!("{} values for {} features", x.len(), limits.len())));
    }
    let mut out = DispatchBounds {
        feature_ids: Vec::with_capacity(x.len()),
        lower: Vec::with_capacity(x.len()),
        upper: Vec::with_capacity(x.len()),
        capacity: Vec::with_capacity(x.len()),
        at_limit: Vec::with_capacity(x.len()),
    };
    for (&xi, lim) in x.iter().zip(limits) {
        if !(lim.ramp >= 0.0) || !(lim.p_max > lim.p_min) {
            return Err(Error::Bounds(format!("feature {} has invalid limits", lim.id)));
        }
        let hi = if reserve {
            lim.p_max + RESERVE_FRACTION * lim.p_max
        } else {
            lim.p_max
        };
        let lo = lim.p_min;
        if xi < lo - LIMIT_TOL || xi > hi + LIMIT_TOL {
            return Err(Error::Bounds(format!(
                "feature {} at {xi} outside its capacity window [{lo}, {hi}]",
                lim.id
            )));
        }
        out.feature_ids.push(lim.id.clone());
        out.lower.push((-lim.ramp).max(lo - xi).min(0.0));
        out.upper.push(lim.ramp.min(hi - xi).max(0.0));
        out.capacity.push((lo, hi));
        out.at_limit.push(xi >= hi - LIMIT_TOL || xi <= lo + LIMIT_TOL);
    }
    Ok(out)
}

/// Moves the part of each at-limit feature's planned increment that its own
/// bounds cannot absorb onto the other features, in proportion to their remaining
/// room in the needed direction. The total is preserved.
pub fn redistribute_planned(planned: &[f64], at_limit: &[bool], bounds: &DispatchBounds) -> Result<Vec<f64>> {
    let m = bounds.len();
    if planned.len() != m || at_limit.len() != m {
        return Err(Error::Bounds("planned increments and bounds differ in length".into()));
    }
    let mut out = planned.to_vec();
    let mut amount = 0.0;
    for i in 0..m {
        if at_limit[i] {
            let kept = planned[i].clamp(bounds.lower[i], bounds.upper[i]);
            amount += planned[i] - kept;
            out[i] = kept;
        }
    }
    if amount == 0.0 {
        return Ok(out);
    }
    let room: Vec<f64> = (0..m)
        .map(|i| {
            if at_limit[i] {
                0.0
            } else if amount > 0.0 {
                (bounds.upper[i] - out[i]).max(0.0)
            } else {
                (out[i] - bounds.lower[i]).max(0.0)
            }
        })
        .collect();
    let total: f64 = room.iter().sum();
    if total < amount.abs() - 1e-12 {
        return Err(Error::NoHeadroom { amount });
    }
    for i in 0..m {
        out[i] += amount * room[i] / total;
    }
    Ok(out)
}

/// The re-dispatch LP in terms of the re-dispatch variables `dx_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub feature_ids: Vec<String>,
    pub psi: Vec<f64>,
    pub planned: Vec<f64>,
    /// Box on `dx_R`: `lower - planned ..= upper - planned`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed: Vec<bool>,
    pub balance: bool,
}

impl LpInstance {
    /// Constant part `psi . dx_O` of the damping row.
    pub fn planned_gain(&self) -> f64 {
        self.psi.iter().zip(&self.planned).map(|(p, o)| p * o).sum()
    }

    /// Effective box with fixed features pinned at zero.
    fn effective_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = (0..self.psi.len())
            .map(|i| if self.fixed[i] { 0.0 } else { self.lower[i] })
            .collect();
        let hi = (0..self.psi.len())
            .map(|i| if self.fixed[i] { 0.0 } else { self.upper[i] })
            .collect();
        (lo, hi)
    }
}

pub fn build_lp(psi: &[f64], bounds: &DispatchBounds, planned: &[f64], balance: bool) -> Result<LpInstance> {
    let m = psi.len();
    if m == 0 {
        return Err(Error::LpBuild("no features".into()));
    }
    if bounds.len() != m || planned.len() != m {
        return Err(Error::LpBuild(format!(
            "{m} sensitivities, {} bounds, {} planned increments",
            bounds.len(),
            planned.len()
        )));
    }
    if psi.iter().chain(planned).any(|v| !v.is_finite()) {
        return Err(Error::LpBuild("sensitivities and planned increments must be finite".into()));
    }
    Ok(LpInstance {
        feature_ids: bounds.feature_ids.clone(),
        psi: psi.to_vec(),
        planned: planned.to_vec(),
        lower: (0..m).map(|i| bounds.lower[i] - planned[i]).collect(),
        upper: (0..m).map(|i| bounds.upper[i] - planned[i]).collect(),
        fixed: bounds.at_limit.clone(),
        balance,
    })
}

impl fmt::Display for LpInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = |i: usize| format!("dxR[{}]", self.feature_ids[i]);
        writeln!(f, "max delta")?;
        write!(f, "damping:")?;
        for (i, p) in self.psi.iter().enumerate() {
            write!(f, " {:+} {}", p, var(i))?;
        }
        writeln!(f, " -1 delta >= {}", 0.0 - self.planned_gain())?;
        for i in 0..self.psi.len() {
            if self.fixed[i] {
                writeln!(f, "fixed {}: 1 {} = 0", self.feature_ids[i], var(i))?;
            } else {
                writeln!(f, "lower {}: 1 {} >= {}", self.feature_ids[i], var(i), self.lower[i])?;
                writeln!(f, "upper {}: 1 {} <= {}", self.feature_ids[i], var(i), self.upper[i])?;
            }
        }
        if self.balance {
            write!(f, "balance:")?;
            for i in 0..self.psi.len() {
                write!(f, " +1 {}", var(i))?;
            }
            writeln!(f, " = 0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    /// Optimal, but the optimum was not unique; the minimum-norm point was chosen.
    Degenerate,
    Infeasible,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Degenerate => "degenerate",
            LpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Damping,
    Lower(usize),
    Upper(usize),
    Fixed(usize),
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedispatchSolution {
    /// Predicted damping gain; zero when infeasible.
    pub delta: f64,
    pub dx_r: Vec<f64>,
    pub binding: Vec<Binding>,
    pub status: LpStatus,
}

impl RedispatchSolution {
    fn infeasible(m: usize) -> Self {
        Self {
            delta: 0.0,
            dx_r: vec![0.0; m],
            binding: Vec::new(),
            status: LpStatus::Infeasible,
        }
    }
}

/// Minimum-norm point with `sum = target` inside the box (water-filling on a
/// common level `nu`, `y_i = clamp(nu, lo_i, hi_i)`).
fn water_fill(lo: &[f64], hi: &[f64], target: f64) -> Vec<f64> {
    let sum_at = |nu: f64| -> f64 { lo.iter().zip(hi).map(|(l, h)| nu.clamp(*l, *h)).sum() };
    let mut a = lo.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut b = hi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if sum_at(a) >= target {
        return lo.to_vec();
    }
    if sum_at(b) <= target {
        return hi.to_vec();
    }
    // sum_at is piecewise linear; find the bracketing breakpoints, then solve exactly.
    let mut knots: Vec<f64> = lo.iter().chain(hi).copied().collect();
    knots.sort_by(|x, y| x.total_cmp(y));
    knots.dedup();
    for w in knots.windows(2) {
        if sum_at(w[0]) <= target && sum_at(w[1]) >= target {
            a = w[0];
            b = w[1];
            break;
        }
    }
    // Between the knots the free variables all sit at the level nu.
    let mut pinned = 0.0;
    let mut free = 0usize;
    for (l, h) in lo.iter().zip(hi) {
        if *h <= a {
            pinned += h;
        } else if *l >= b {
            pinned += l;
        } else {
            free += 1;
        }
    }
    let nu = if free > 0 { (target - pinned) / free as f64 } else { a };
    let mut y: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| nu.clamp(*l, *h)).collect();
    // absorb rounding so the sum is exact to the last bit where possible
    let err = target - y.iter().sum::<f64>();
    if err != 0.0 {
        if let Some(i) = (0..y.len()).find(|&i| y[i] + err >= lo[i] && y[i] + err <= hi[i] && lo[i] < hi[i]) {
            y[i] += err;
        }
    }
    y
}

/// Exact solution of the re-dispatch LP.
pub fn solve_lp(lp: &LpInstance) -> RedispatchSolution {
    let m = lp.psi.len();
    let (lo, hi) = lp.effective_box();
    let pinned_outside = (0..m).any(|i| lp.fixed[i] && (lp.lower[i] > LIMIT_TOL || lp.upper[i] < -LIMIT_TOL));
    if pinned_outside || (0..m).any(|i| lo[i] > hi[i] + LIMIT_TOL) {
        return RedispatchSolution::infeasible(m);
    }
    let hi: Vec<f64> = (0..m).map(|i| hi[i].max(lo[i])).collect();

    let mut degenerate = false;
    let mut y = vec![0.0; m];
    if !lp.balance {
        for i in 0..m {
            y[i] = if lp.psi[i] > 0.0 {
                hi[i]
            } else if lp.psi[i] < 0.0 {
                lo[i]
            } else {
                degenerate |= lo[i] < hi[i];
                0.0f64.clamp(lo[i], hi[i])
            };
        }
    } else {
        let sum_lo: f64 = lo.iter().sum();
        let sum_hi: f64 = hi.iter().sum();
        if sum_lo > LIMIT_TOL || sum_hi < -LIMIT_TOL {
            return RedispatchSolution::infeasible(m);
        }
        // Distinct sensitivity levels, high to low. Features above the marginal
        // level sit at their upper bound, below it at their lower bound.
        let mut levels: Vec<f64> = lp.psi.clone();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        let mut placed = false;
        for &mu in &levels {
            let outside: f64 = (0..m)
                .filter(|&i| lp.psi[i] != mu)
                .map(|i| if lp.psi[i] > mu { hi[i] } else { lo[i] })
                .sum();
            let group: Vec<usize> = (0..m).filter(|&i| lp.psi[i] == mu).collect();
            let glo: f64 = group.iter().map(|&i| lo[i]).sum();
            let ghi: f64 = group.iter().map(|&i| hi[i]).sum();
            let need = -outside;
            if need >= glo - LIMIT_TOL && need <= ghi + LIMIT_TOL {
                for i in 0..m {
                    if lp.psi[i] > mu {
                        y[i] = hi[i];
                    } else if lp.psi[i] < mu {
                        y[i] = lo[i];
                    }
                }
                let gl: Vec<f64> = group.iter().map(|&i| lo[i]).collect();
                let gh: Vec<f64> = group.iter().map(|&i| hi[i]).collect();
                let filled = water_fill(&gl, &gh, need.clamp(glo, ghi));
                let free = group.iter().filter(|&&i| lo[i] < hi[i]).count();
                degenerate |= free > 1 && need > glo + LIMIT_TOL && need < ghi - LIMIT_TOL;
                for (k, &i) in group.iter().enumerate() {
                    y[i] = filled[k];
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return RedispatchSolution::infeasible(m);
        }
    }

    let delta = lp.psi.iter().zip(&y).map(|(p, v)| p * v).sum::<f64>() + lp.planned_gain();
    let mut binding = vec![Binding::Damping];
    for i in 0..m {
        if lp.fixed[i] {
            binding.push(Binding::Fixed(i));
        } else if (y[i] - lo[i]).abs() <= LIMIT_TOL {
            binding.push(Binding::Lower(i));
        } else if (y[i] - hi[i]).abs() <= LIMIT_TOL {
            binding.push(Binding::Upper(i));
        }
    }
    if lp.balance {
        binding.push(Binding::Balance);
    }
    RedispatchSolution {
        delta,
        dx_r: y,
        binding,
        status: if degenerate { LpStatus::Degenerate } else { LpStatus::Optimal },
    }
}

#[cfg(test)]
mod tests;
