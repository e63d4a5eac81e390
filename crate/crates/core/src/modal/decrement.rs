use alloc::vec::Vec;


use crate::error::{Error, Result};

/// Damping ratio of an oscillating, zero-centered signal by logarithmic decrement.
///
/// One positive peak is taken per cycle (between successive upward zero
/// crossings, refined by a parabola through the three samples around the
/// maximum). Crossings closer than half a period of `freq_hint` are merged so
/// faster components riding on the signal do not split a cycle.
pub fn trajectory_damping(signal: &[f64], dt: f64, freq_hint: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Estimation("sample spacing must be positive".into()));
    }
    let min_gap = if freq_hint > 0.0 { 0.5 / (freq_hint * dt) } else { 0.0 };
    let mut crossings: Vec<usize> = Vec::new();
    for i in 1..signal.len() {
        if signal[i - 1] < 0.0 && signal[i] >= 0.0 {
            match crossings.last() {
                Some(&last) if ((i - last) as f64) < min_gap => {}
                _ => crossings.push(i),
            }
        }
    }
    let mut peaks = Vec::new();
    for w in crossings.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (imax, vmax) = (a..b).fold((a, f64::NEG_INFINITY), |acc, i| {
            if signal[i] > acc.1 {
                (i, signal[i])
            } else {
                acc
            }
        });
        if vmax <= 0.0 {
            continue;
        }
        let mut peak = vmax;
        if imax > 0 && imax + 1 < signal.len() {
            let (y0, y1, y2) = (signal[imax - 1], signal[imax], signal[imax + 1]);
            let curv = y0 - 2.0 * y1 + y2;
            if curv < 0.0 {
                let off = 0.5 * (y0 - y2) / curv;
                if off.abs() <= 1.0 {
                    peak = y1 - 0.25 * (y0 - y2) * off;
                }
            }
        }
        peaks.push(peak);
    }
    if peaks.len() < 2 {
        return Err(Error::Estimation("fewer than two oscillation peaks".into()));
    }
    let two_pi = 2.0 * core::f64::consts::PI;
    let ratios: Vec<f64> = peaks
        .windows(2)
        .map(|p| {
            let r = libm::log(p[0] / p[1]);
            r / libm::sqrt(two_pi * two_pi + r * r)
        })
        .collect();
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}
