use alloc::vec::Vec;

use super::eigen::{analyze, best_match, min_damping_mode, Mode};
use crate::error::{Error, Result};
use crate::feature::Feature;
use crate::grid::{solve_power_flow_from, NetworkCase, OperatingPoint, PowerFlowOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Finite-difference step (p.u.).
    pub step: f64,
    /// Minimum eigenvector correlation for the perturbed mode to count as the same mode.
    pub min_correlation: f64,
    pub power_flow: PowerFlowOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            min_correlation: 0.8,
            power_flow: PowerFlowOptions::default(),
        }
    }
}

/// Finite-difference gradient of a scalar function of `m` variables.
///
/// `room(i)` gives how far variable `i` may move down and up; `eval(i, d)` is the
/// function value with variable `i` offset by `d`. Central differences are used
/// when both sides fit, one-sided otherwise.
pub fn central_differences<R, F>(m: usize, step: f64, room: R, mut eval: F) -> Result<Vec<f64>>
where
    R: Fn(usize) -> (f64, f64),
    F: FnMut(usize, f64) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let mut grad = Vec::with_capacity(m);
    for i in 0..m {
        let (down, up) = room(i);
        let can_up = up >= step;
        let can_down = down >= step;
        let g = match (can_down, can_up) {
            (true, true) => (eval(i, step)? - eval(i, -step)?) / (2.0 * step),
            (false, true) => (eval(i, step)? - eval(i, 0.0)?) / step,
            (true, false) => (eval(i, 0.0)? - eval(i, -step)?) / step,
            (false, false) => {
                return Err(Error::InvalidInput(alloc::format!(
                    "feature {i} has no room for a step of {step}"
                )))
            }
        };
        grad.push(g);
    }
    Ok(grad)
}

/// Model-based damping sensitivity of the least damped mode at `op`.
///
/// Each feature is perturbed with the slack generator balancing; the target mode is
/// followed across the perturbation by eigenvector correlation.
pub fn perturbation_sensitivity(
    case: &NetworkCase,
    op: &OperatingPoint,
    features: &[Feature],
    opts: &OracleOptions,
) -> Result<Vec<f64>> {
    let modes = analyze(case, op)?;
    let target: Mode = min_damping_mode(&modes)?.clone();
    let headroom = opts.power_flow.headroom;
    let room = |i: usize| {
        let f = &features[i];
        let down: f64 = f
            .generators
            .iter()
            .map(|&g| op.gen_p[g] - case.generators[g].p_min)
            .sum();
        let up: f64 = f
            .generators
            .iter()
            .map(|&g| case.generators[g].p_max * (1.0 + headroom) - op.gen_p[g])
            .sum();
        (down, up)
    };
    central_differences(features.len(), opts.step, room, |i, d| {
        if d == 0.0 {
            return Ok(target.damping_ratio);
        }
        let mut dispatch = op.gen_p.clone();
        features[i].spread(case, d, &mut dispatch);
        let perturbed = solve_power_flow_from(case, &dispatch, &op.demand, op, &opts.power_flow)?;
        let modes = analyze(case, &perturbed)?;
        let (m, corr) = best_match(&modes, &target).ok_or(Error::TrackingLost {
            feature: i,
            correlation: 0.0,
        })?;
        if corr < opts.min_correlation {
            return Err(Error::TrackingLost {
                feature: i,
                correlation: corr,
            });
        }
        Ok(m.damping_ratio)
    })
}
