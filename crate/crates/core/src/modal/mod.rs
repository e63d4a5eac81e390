//! Small-signal analysis of the classical machine model.
//!
//! Each generator is a constant EMF behind its transient reactance. Loads are
//! turned into constant admittances at the solved voltage and the network is
//! Kron-reduced to the generator internal nodes. The swing equation per machine is
//!
//! ```text
//! 2H_i dw_i/dt = Pm_i - Pe_i(delta) - D_i w_i - tau * omega_s * sum_k dPe_i/ddelta_k * w_k
//! ```
//!
//! where the last term is the rotor-circuit damping torque, proportional to the
//! synchronizing torque and acting only on relative rotor motion.

mod decrement;
mod eigen;
mod fault;
mod oracle;

pub use decrement::trajectory_damping;
pub use eigen::{analyze, eigen_modes, min_damping_mode, Mode, ModeKind};
pub use fault::{fault_simulate, FaultResponse, FaultSpec};
pub use oracle::{central_differences, perturbation_sensitivity, OracleOptions};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, Complex64, NetworkCase, OperatingPoint};

/// Network reduced to generator internal nodes plus the machine constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineNetwork {
    /// Reduced admittance between internal nodes.
    pub y: DMatrix<Complex64>,
    /// Internal EMF magnitudes.
    pub emf: Vec<f64>,
    /// Equilibrium rotor angles (rad).
    pub delta0: Vec<f64>,
    /// Mechanical power, equal to the electrical output at equilibrium.
    pub p_mech: Vec<f64>,
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub damper_tau: f64,
    pub omega_s: f64,
}

impl MachineNetwork {
    pub fn len(&self) -> usize {
        self.emf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emf.is_empty()
    }

    pub fn electrical_power(&self, y: &DMatrix<Complex64>, delta: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        let d = delta[i] - delta[k];
                        let g = y[(i, k)];
                        self.emf[i] * self.emf[k] * (g.re * libm::cos(d) + g.im * libm::sin(d))
                    })
                    .sum()
            })
            .collect()
    }

    /// Synchronizing matrix dPe_i/ddelta_k; rows sum to zero.
    pub fn synchronizing(&self, y: &DMatrix<Complex64>, delta: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = delta[i] - delta[j];
                let g = y[(i, j)];
                let v = self.emf[i] * self.emf[j] * (g.re * libm::sin(d) - g.im * libm::cos(d));
                k[(i, j)] = v;
                diag -= v;
            }
            k[(i, i)] = diag;
        }
        k
    }
}

/// Linearized system `dx/dt = A x` with states `(d_delta_1..n, d_omega_1..n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub a: DMatrix<f64>,
    pub n_gen: usize,
    pub omega_s: f64,
    /// Area label per generator, used to classify mode shapes.
    pub areas: Vec<String>,
    pub network: MachineNetwork,
    pub op: OperatingPoint,
}

/// Kron-reduced admittance at the internal nodes, optionally with a shunt fault.
pub(crate) fn reduce_network(
    case: &NetworkCase,
    op: &OperatingPoint,
    fault: Option<(usize, Complex64)>,
) -> Result<DMatrix<Complex64>> {
    let nb = case.buses.len();
    let ng = case.generators.len();
    let mut ybb = build_admittance(case)?;
    for (l, d) in case.loads.iter().zip(&op.demand) {
        let b = case
            .bus_index(l.bus)
            .ok_or_else(|| Error::InvalidCase(format!("unknown load bus {}", l.bus)))?;
        let v2 = op.vm[b] * op.vm[b];
        ybb[(b, b)] += Complex::new(d.re, -d.im) / v2;
    }
    if let Some((b, yf)) = fault {
        ybb[(b, b)] += yf;
    }
    let mut ybg = DMatrix::from_element(nb, ng, Complex::new(0.0, 0.0));
    let mut ygg = DMatrix::from_element(ng, ng, Complex::new(0.0, 0.0));
    for (i, g) in case.generators.iter().enumerate() {
        let b = case
            .bus_index(g.bus)
            .ok_or_else(|| Error::InvalidCase(format!("unknown generator bus {}", g.bus)))?;
        let yg = Complex::new(0.0, -1.0 / g.xd_prime);
        ybb[(b, b)] += yg;
        ybg[(b, i)] -= yg;
        ygg[(i, i)] += yg;
    }
    let x = ybb
        .lu()
        .solve(&ybg)
        .ok_or_else(|| Error::Reduction("network admittance is singular".into()))?;
    let yred = ygg - ybg.transpose() * x;
    if yred.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Reduction("reduced admittance is not finite".into()));
    }
    Ok(yred)
}

pub(crate) fn machine_network(case: &NetworkCase, op: &OperatingPoint) -> Result<MachineNetwork> {
    let y = reduce_network(case, op, None)?;
    let mut emf = Vec::with_capacity(case.generators.len());
    let mut delta0 = Vec::with_capacity(case.generators.len());
    for (i, g) in case.generators.iter().enumerate() {
        let b = case.bus_index(g.bus).ok_or_else(|| Error::InvalidCase("generator bus".into()))?;
        let v = op.voltage(b);
        let s = Complex::new(op.gen_p[i], op.gen_q[i]);
        let current = (s / v).conj();
        let e = v + Complex::new(0.0, g.xd_prime) * current;
        emf.push(e.norm());
        delta0.push(e.arg());
    }
    let mut net = MachineNetwork {
        y,
        emf,
        delta0,
        p_mech: Vec::new(),
        inertia: case.generators.iter().map(|g| g.inertia).collect(),
        damping: case.generators.iter().map(|g| g.damping).collect(),
        damper_tau: case.damper_tau,
        omega_s: case.omega_s(),
    };
    net.p_mech = net.electrical_power(&net.y, &net.delta0);
    Ok(net)
}

/// Linearizes the classical multi-machine model about a converged operating point.
pub fn linearize(case: &NetworkCase, op: &OperatingPoint) -> Result<StateMatrix> {
    let net = machine_network(case, op)?;
    let n = net.len();
    let ws = net.omega_s;
    let k = net.synchronizing(&net.y, &net.delta0);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = ws;
        let m = 2.0 * net.inertia[i];
        for j in 0..n {
            a[(n + i, j)] = -k[(i, j)] / m;
            a[(n + i, n + j)] = -net.damper_tau * ws * k[(i, j)] / m;
        }
        a[(n + i, n + i)] -= net.damping[i] / m;
    }
    Ok(StateMatrix {
        a,
        n_gen: n,
        omega_s: ws,
        areas: case.generators.iter().map(|g| g.area().into()).collect(),
        network: net,
        op: op.clone(),
    })
}
