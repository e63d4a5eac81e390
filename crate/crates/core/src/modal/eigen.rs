use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Schur};

use super::{linearize, StateMatrix};
use crate::error::{Error, Result};
use crate::grid::{Complex64, NetworkCase, OperatingPoint};

/// Electromechanical frequency band (Hz).
pub const EM_BAND: (f64, f64) = (0.1, 3.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    InterArea,
    Local,
    NonElectromechanical,
}

impl ModeKind {
    pub fn is_electromechanical(self) -> bool {
        !matches!(self, ModeKind::NonElectromechanical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::InterArea => "inter-area",
            ModeKind::Local => "local",
            ModeKind::NonElectromechanical => "non-electromechanical",
        }
    }
}

/// One oscillatory eigenvalue (upper half plane member of a conjugate pair).
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub eigenvalue: Complex64,
    pub damping_ratio: f64,
    pub frequency_hz: f64,
    /// Rotor-speed components of the right eigenvector, largest = 1 at 0 rad.
    pub shape: Vec<Complex64>,
    /// Rotor-speed participation factor per generator, largest = 1.
    pub participation: Vec<f64>,
    /// Unit-norm right eigenvector over all states.
    pub vector: Vec<Complex64>,
    pub kind: ModeKind,
}

pub fn damping_ratio(lambda: Complex64) -> f64 {
    let mag = lambda.norm();
    if mag == 0.0 {
        return 0.0;
    }
    -lambda.re / mag
}

fn complexify(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex::new(x, 0.0))
}

/// Eigenvector of `m` for `lambda` by shifted inverse iteration.
fn inverse_iteration(m: &DMatrix<Complex64>, lambda: Complex64) -> Result<DVector<Complex64>> {
    let n = m.nrows();
    let shift = lambda + Complex::new(1e-10 * (1.0 + lambda.norm()), 0.0);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    let mut v = DVector::from_iterator(
        n,
        (0..n).map(|i| Complex::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64)),
    );
    for _ in 0..3 {
        let next = lu.solve(&v).ok_or(Error::EigenSolver)?;
        let norm = next.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::EigenSolver);
        }
        v = next.unscale(norm);
    }
    Ok(v)
}

fn classify(freq: f64, speed_share: f64, shape: &[Complex64], areas: &[alloc::string::String]) -> ModeKind {
    if freq < EM_BAND.0 || freq > EM_BAND.1 || speed_share < 0.25 {
        return ModeKind::NonElectromechanical;
    }
    // Coherent areas: every significant member swings with the same sign.
    let mut groups: BTreeMap<&str, (i32, f64, bool)> = BTreeMap::new();
    for (c, area) in shape.iter().zip(areas) {
        if c.norm() < 0.1 {
            continue;
        }
        let sign = if c.re >= 0.0 { 1 } else { -1 };
        let entry = groups.entry(area.as_str()).or_insert((sign, 0.0, true));
        if entry.0 != sign {
            entry.2 = false;
        }
        entry.1 = entry.1.max(c.norm());
    }
    let coherent: Vec<(i32, f64)> = groups
        .values()
        .filter(|(_, mag, ok)| *ok && *mag >= 0.2)
        .map(|(s, m, _)| (*s, *m))
        .collect();
    let pos = coherent.iter().any(|(s, _)| *s > 0);
    let neg = coherent.iter().any(|(s, _)| *s < 0);
    if pos && neg {
        ModeKind::InterArea
    } else {
        ModeKind::Local
    }
}

/// All oscillatory modes of the state matrix, sorted by ascending frequency.
pub fn eigen_modes(sm: &StateMatrix) -> Result<Vec<Mode>> {
    let a = &sm.a;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenSolver);
    }
    let n = sm.n_gen;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(Error::EigenSolver)?;
    let lambdas = schur.complex_eigenvalues();
    let scale = a.amax().max(1.0);
    let ac = complexify(a);
    let act = complexify(&a.transpose());

    let mut modes = Vec::new();
    for lambda in lambdas.iter().copied() {
        if !lambda.re.is_finite() {
            return Err(Error::EigenSolver);
        }
        // a 2x2 block with a rounding-negative discriminant reports NaN for the
        // imaginary part; those are the real pair at the angle-reference zero
        if lambda.im.is_nan() || lambda.im <= 1e-8 * scale {
            continue;
        }
        let mut v = inverse_iteration(&ac, lambda)?;
        let psi = inverse_iteration(&act, lambda)?;

        let speed: Vec<Complex64> = (0..n).map(|i| v[n + i]).collect();
        let (imax, _) = speed
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, c)| if c.norm() > acc.1 { (i, c.norm()) } else { acc });
        let pivot = speed[imax];
        let phase = pivot / pivot.norm();
        v = v.map(|c| c / phase);
        let shape: Vec<Complex64> = speed.iter().map(|c| c / pivot).collect();

        let denom: Complex64 = (0..2 * n).map(|k| psi[k] * v[k]).sum();
        let part: Vec<f64> = (0..2 * n).map(|k| (psi[k] * v[k] / denom).norm()).collect();
        let total: f64 = part.iter().sum();
        let speed_part: Vec<f64> = part[n..].to_vec();
        let speed_share = speed_part.iter().sum::<f64>() / total;
        let pmax = speed_part.iter().cloned().fold(0.0, f64::max);
        let participation = speed_part.iter().map(|p| if pmax > 0.0 { p / pmax } else { 0.0 }).collect();

        let freq = lambda.im / (2.0 * core::f64::consts::PI);
        let kind = classify(freq, speed_share, &shape, &sm.areas);
        modes.push(Mode {
            eigenvalue: lambda,
            damping_ratio: damping_ratio(lambda),
            frequency_hz: freq,
            shape,
            participation,
            vector: v.iter().copied().collect(),
            kind,
        });
    }
    modes.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(modes)
}

/// Linearize and compute modes in one call.
pub fn analyze(case: &NetworkCase, op: &OperatingPoint) -> Result<Vec<Mode>> {
    eigen_modes(&linearize(case, op)?)
}

/// The least damped electromechanical mode; ties go to the lower frequency.
pub fn min_damping_mode(modes: &[Mode]) -> Result<&Mode> {
    modes
        .iter()
        .filter(|m| m.kind.is_electromechanical())
        .min_by(|a, b| {
            a.damping_ratio
                .total_cmp(&b.damping_ratio)
                .then(a.frequency_hz.total_cmp(&b.frequency_hz))
        })
        .ok_or(Error::NoElectromechanicalMode)
}

/// |<u, v>| for unit vectors.
pub(crate) fn correlation(u: &[Complex64], v: &[Complex64]) -> f64 {
    let dot: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
    let nu = libm::sqrt(u.iter().map(|c| c.norm_sqr()).sum::<f64>());
    let nv = libm::sqrt(v.iter().map(|c| c.norm_sqr()).sum::<f64>());
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot.norm() / (nu * nv)
}

/// Mode in `modes` whose eigenvector best matches `target`.
pub(crate) fn best_match<'a>(modes: &'a [Mode], target: &Mode) -> Option<(&'a Mode, f64)> {
    modes
        .iter()
        .map(|m| (m, correlation(&m.vector, &target.vector)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}
