use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

use super::{machine_network, reduce_network, MachineNetwork};
use crate::error::{Error, Result};
use crate::grid::{Complex64, NetworkCase, OperatingPoint};

/// Rotor-angle deviation beyond which the run is declared unstable (rad).
const BLOWUP_ANGLE: f64 = 10.0;

/// Three-phase shunt fault at one bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub bus: u32,
    pub start: f64,
    pub clear: f64,
    pub horizon: f64,
    pub step: f64,
    /// Shunt admittance applied at the faulted bus while the fault is on (p.u.).
    pub admittance: Complex64,
}

impl FaultSpec {
    pub fn new(bus: u32, start: f64, duration: f64, horizon: f64) -> Self {
        Self {
            bus,
            start,
            clear: start + duration,
            horizon,
            step: 0.005,
            admittance: Complex::new(0.0, -1e4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dur = self.clear - self.start;
        if !(self.start >= 0.0) || !(dur >= 0.0) || dur > 0.3 + 1e-12 {
            return Err(Error::InvalidFault(format!(
                "fault must last between 0 and 0.3 s (got {dur})"
            )));
        }
        if !(self.step > 0.0) || self.step > 0.01 + 1e-15 {
            return Err(Error::InvalidFault(format!("integration step {} outside (0, 0.01]", self.step)));
        }
        if !(self.horizon > self.clear) {
            return Err(Error::InvalidFault("horizon must extend past the clearing time".into()));
        }
        Ok(())
    }
}

/// Sampled rotor trajectories of a fault run.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultResponse {
    pub times: Vec<f64>,
    /// `delta[k][i]`: rotor angle of generator `i` at `times[k]` (rad).
    pub delta: Vec<Vec<f64>>,
    /// Speed deviation (p.u.).
    pub speed: Vec<Vec<f64>>,
    pub unstable: bool,
    pub clear: f64,
    /// Pre-fault equilibrium angles.
    pub delta0: Vec<f64>,
}

impl FaultResponse {
    pub fn relative_angle(&self, a: usize, b: usize) -> Vec<f64> {
        self.delta.iter().map(|d| d[a] - d[b]).collect()
    }

    /// Relative angle after clearing, centered on the equilibrium and scaled to a peak of 1.
    pub fn normalized_relative_angle(&self, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        let eq = self.delta0[a] - self.delta0[b];
        let start = self.times.iter().position(|&t| t >= self.clear - 1e-12).unwrap_or(self.times.len());
        let t: Vec<f64> = self.times[start..].to_vec();
        let centered: Vec<f64> = self.delta[start..].iter().map(|d| d[a] - d[b] - eq).collect();
        let peak = centered.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scaled = if peak > 0.0 {
            centered.iter().map(|x| x / peak).collect()
        } else {
            centered
        };
        (t, scaled)
    }
}

struct Dynamics<'a> {
    net: &'a MachineNetwork,
}

impl Dynamics<'_> {
    fn rhs(&self, y: &DMatrix<Complex64>, delta: &[f64], speed: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let net = self.net;
        let n = net.len();
        let pe = net.electrical_power(y, delta);
        let k = net.synchronizing(y, delta);
        let ddelta: Vec<f64> = speed.iter().map(|w| net.omega_s * w).collect();
        let dspeed = (0..n)
            .map(|i| {
                let damper: f64 = (0..n).map(|j| k[(i, j)] * speed[j]).sum();
                (net.p_mech[i] - pe[i] - net.damping[i] * speed[i] - net.damper_tau * net.omega_s * damper)
                    / (2.0 * net.inertia[i])
            })
            .collect();
        (ddelta, dspeed)
    }

    fn rk4(&self, y: &DMatrix<Complex64>, delta: &mut [f64], speed: &mut [f64], h: f64) {
        let n = delta.len();
        let axpy = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> { (0..n).map(|i| x[i] + s * d[i]).collect() };
        let (k1d, k1w) = self.rhs(y, delta, speed);
        let (k2d, k2w) = self.rhs(y, &axpy(delta, &k1d, h / 2.0), &axpy(speed, &k1w, h / 2.0));
        let (k3d, k3w) = self.rhs(y, &axpy(delta, &k2d, h / 2.0), &axpy(speed, &k2w, h / 2.0));
        let (k4d, k4w) = self.rhs(y, &axpy(delta, &k3d, h), &axpy(speed, &k3w, h));
        for i in 0..n {
            delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
            speed[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
    }
}

/// Nonlinear classical-model response to a temporary three-phase fault (fixed-step RK4).
///
/// An unstable run (rotor angle spread beyond 10 rad) stops early with `unstable` set.
pub fn fault_simulate(case: &NetworkCase, op: &OperatingPoint, fault: &FaultSpec) -> Result<FaultResponse> {
    fault.validate()?;
    let bus = case
        .bus_index(fault.bus)
        .ok_or_else(|| Error::InvalidFault(format!("unknown fault bus {}", fault.bus)))?;
    let net = machine_network(case, op)?;
    let faulted = reduce_network(case, op, Some((bus, fault.admittance)))?;
    let healthy = net.y.clone();
    let dynamics = Dynamics { net: &net };
    let n = net.len();

    let mut delta = net.delta0.clone();
    let mut speed = vec![0.0; n];
    let mut out = FaultResponse {
        times: vec![0.0],
        delta: vec![delta.clone()],
        speed: vec![speed.clone()],
        unstable: false,
        clear: fault.clear,
        delta0: net.delta0.clone(),
    };
    let segments = [
        (fault.start, &healthy),
        (fault.clear, &faulted),
        (fault.horizon, &healthy),
    ];
    let mut t = 0.0;
    for (end, y) in segments {
        let span = end - t;
        if span <= 1e-12 {
            continue;
        }
        let steps = libm::ceil(span / fault.step - 1e-9).max(1.0) as usize;
        let h = span / steps as f64;
        let base = t;
        for s in 1..=steps {
            dynamics.rk4(y, &mut delta, &mut speed, h);
            t = base + h * s as f64;
            out.times.push(t);
            out.delta.push(delta.clone());
            out.speed.push(speed.clone());
            let coi: f64 = (0..n).map(|i| delta[i] - net.delta0[i]).sum::<f64>() / n as f64;
            let spread = (0..n).fold(0.0f64, |m, i| m.max((delta[i] - net.delta0[i] - coi).abs()));
            if !spread.is_finite() || spread > BLOWUP_ANGLE {
                out.unstable = true;
                return Ok(out);
            }
        }
        t = end;
    }
    Ok(out)
}
