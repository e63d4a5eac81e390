//! Static network description and AC power flow.
//!
//! Everything is per-unit on the case's MVA base. Loads enter the power flow
//! as constant P/Q injections; the dynamic modules convert them to constant
//! admittances at the solved voltage.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Scheduled voltage magnitude for slack/PV buses, initial guess for PQ buses (p.u.).
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, split evenly between both ends.
    pub b: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u32,
    /// Inertia constant on the system base (s).
    pub inertia: f64,
    /// Speed damping (p.u. torque / p.u. speed).
    pub damping: f64,
    pub xd_prime: f64,
    pub p_max: f64,
    pub p_min: f64,
    /// `area/station`; the part before the first `/` is the area label.
    pub station: String,
    pub dispatchable: bool,
    /// Default active power setpoint used when no dispatch is supplied.
    pub p_set: f64,
}

impl Generator {
    pub fn area(&self) -> &str {
        self.station.split('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: u32,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub frequency_hz: f64,
    /// Rotor-circuit damping time constant (s): damping torque proportional
    /// to the synchronizing torque times the speed deviation.
    pub damper_tau: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

impl NetworkCase {
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_bus(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Index of the generator that absorbs the power imbalance (first generator at the slack bus).
    pub fn slack_generator(&self) -> Option<usize> {
        let slack = self.buses[self.slack_bus()?].id;
        self.generators.iter().position(|g| g.bus == slack)
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.frequency_hz
    }

    /// Generator label used in reports: `G1`, `G2`, ...
    pub fn generator_label(index: usize) -> String {
        format!("G{}", index + 1)
    }

    /// Setpoints stored in the case.
    pub fn default_dispatch(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.p_set).collect()
    }

    /// Base-case load demand.
    pub fn base_demand(&self) -> Vec<Complex64> {
        self.loads.iter().map(|l| Complex::new(l.p, l.q)).collect()
    }

    /// Checks every structural invariant of the case.
    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::InvalidCase("case has no buses".into()));
        }
        if !(self.base_mva > 0.0) || !(self.frequency_hz > 0.0) {
            return Err(Error::InvalidCase("base MVA and frequency must be positive".into()));
        }
        if !(self.damper_tau >= 0.0) {
            return Err(Error::InvalidCase("damper time constant must be non-negative".into()));
        }
        let mut seen = BTreeMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if seen.insert(b.id, i).is_some() {
                return Err(Error::InvalidCase(format!("duplicate bus id {}", b.id)));
            }
            if !(b.voltage > 0.0) {
                return Err(Error::InvalidCase(format!("bus {} voltage must be positive", b.id)));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(Error::InvalidCase(format!("expected exactly one slack bus, found {slacks}")));
        }
        for br in &self.branches {
            for id in [br.from, br.to] {
                if !seen.contains_key(&id) {
                    return Err(Error::InvalidCase(format!("branch references unknown bus {id}")));
                }
            }
            if br.from == br.to {
                return Err(Error::InvalidCase(format!("branch {}-{} is a self loop", br.from, br.to)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::InvalidCase(format!("branch {}-{} has zero impedance", br.from, br.to)));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            let Some(&bi) = seen.get(&g.bus) else {
                return Err(Error::InvalidCase(format!("generator {} references unknown bus {}", i + 1, g.bus)));
            };
            if self.buses[bi].kind == BusKind::Pq {
                return Err(Error::InvalidCase(format!("generator {} sits on PQ bus {}", i + 1, g.bus)));
            }
            if !(g.inertia > 0.0) || !(g.xd_prime > 0.0) {
                return Err(Error::InvalidCase(format!("generator {} needs H > 0 and xd' > 0", i + 1)));
            }
            if !(g.p_min >= 0.0 && g.p_max > g.p_min) {
                return Err(Error::InvalidCase(format!("generator {} needs P_max > P_min >= 0", i + 1)));
            }
            if !(g.damping >= 0.0) {
                return Err(Error::InvalidCase(format!("generator {} damping must be non-negative", i + 1)));
            }
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind != BusKind::Pq && !self.generators.iter().any(|g| g.bus == b.id) {
                return Err(Error::InvalidCase(format!(
                    "voltage-controlled bus {} (index {i}) has no generator",
                    b.id
                )));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if !seen.contains_key(&l.bus) {
                return Err(Error::InvalidCase(format!("load {} references unknown bus {}", i + 1, l.bus)));
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (Some(f), Some(t)) = (self.bus_index(br.from), self.bus_index(br.to)) else {
                continue;
            };
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Topology(format!(
                "bus {} is not connected to bus {} through in-service branches",
                self.buses[i].id, self.buses[0].id
            ))),
            None => Ok(()),
        }
    }
}

/// Bus admittance matrix from the pi model of every in-service branch.
pub fn build_admittance(case: &NetworkCase) -> Result<DMatrix<Complex64>> {
    case.check_connected()?;
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
    for br in case.branches.iter().filter(|b| b.in_service) {
        let f = case
            .bus_index(br.from)
            .ok_or_else(|| Error::InvalidCase(format!("unknown bus {}", br.from)))?;
        let t = case
            .bus_index(br.to)
            .ok_or_else(|| Error::InvalidCase(format!("unknown bus {}", br.to)))?;
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let ysh = Complex::new(0.0, br.b / 2.0);
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Convergence tolerance on the largest mismatch (p.u.).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Extra fraction of `p_max` a setpoint may use (spinning reserve).
    pub headroom: f64,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            headroom: 0.0,
        }
    }
}

/// A converged power-flow solution together with the injections that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub t: f64,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Net bus injections (generation minus load).
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub demand: Vec<Complex64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl OperatingPoint {
    pub fn voltage(&self, bus: usize) -> Complex64 {
        Complex::from_polar(self.vm[bus], self.va[bus])
    }

    pub fn voltages(&self) -> DVector<Complex64> {
        DVector::from_iterator(self.vm.len(), (0..self.vm.len()).map(|i| self.voltage(i)))
    }

    pub fn total_generation(&self) -> f64 {
        self.gen_p.iter().sum()
    }

    pub fn total_load(&self) -> f64 {
        self.demand.iter().map(|d| d.re).sum()
    }
}

/// Series and shunt active losses summed branch by branch.
pub fn branch_losses(case: &NetworkCase, op: &OperatingPoint) -> f64 {
    let mut loss = 0.0;
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (Some(f), Some(t)) = (case.bus_index(br.from), case.bus_index(br.to)) else {
            continue;
        };
        let vf = op.voltage(f);
        let vt = op.voltage(t);
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let ysh = Complex::new(0.0, br.b / 2.0);
        let i_f = (vf - vt) * ys + vf * ysh;
        let i_t = (vt - vf) * ys + vt * ysh;
        loss += (vf * i_f.conj()).re + (vt * i_t.conj()).re;
    }
    loss
}

/// Newton-Raphson power flow from a flat start.
pub fn solve_power_flow(
    case: &NetworkCase,
    dispatch: &[f64],
    demand: &[Complex64],
    opts: &PowerFlowOptions,
) -> Result<OperatingPoint> {
    let vm: Vec<f64> = case.buses.iter().map(|b| b.voltage).collect();
    let va = vec![0.0; case.buses.len()];
    newton(case, dispatch, demand, opts, vm, va)
}

/// Newton-Raphson power flow started from a previous solution.
pub fn solve_power_flow_from(
    case: &NetworkCase,
    dispatch: &[f64],
    demand: &[Complex64],
    start: &OperatingPoint,
    opts: &PowerFlowOptions,
) -> Result<OperatingPoint> {
    if start.vm.len() != case.buses.len() {
        return Err(Error::InvalidInput("warm start has the wrong bus count".into()));
    }
    let mut vm = start.vm.clone();
    for (i, b) in case.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            vm[i] = b.voltage;
        }
    }
    newton(case, dispatch, demand, opts, vm, start.va.clone())
}

fn check_dispatch(case: &NetworkCase, dispatch: &[f64], demand: &[Complex64], headroom: f64) -> Result<()> {
    if dispatch.len() != case.generators.len() {
        return Err(Error::InvalidInput(format!(
            "dispatch has {} entries for {} generators",
            dispatch.len(),
            case.generators.len()
        )));
    }
    if demand.len() != case.loads.len() {
        return Err(Error::InvalidInput(format!(
            "demand has {} entries for {} loads",
            demand.len(),
            case.loads.len()
        )));
    }
    let slack = case.slack_generator();
    for (i, (g, &p)) in case.generators.iter().zip(dispatch).enumerate() {
        if Some(i) == slack {
            continue;
        }
        let max = g.p_max * (1.0 + headroom);
        if !p.is_finite() || p < g.p_min - 1e-9 || p > max + 1e-9 {
            return Err(Error::DispatchOutOfBounds {
                generator: i,
                value: p,
                min: g.p_min,
                max,
            });
        }
    }
    Ok(())
}

fn newton(
    case: &NetworkCase,
    dispatch: &[f64],
    demand: &[Complex64],
    opts: &PowerFlowOptions,
    mut vm: Vec<f64>,
    mut va: Vec<f64>,
) -> Result<OperatingPoint> {
    check_dispatch(case, dispatch, demand, opts.headroom)?;
    let y = build_admittance(case)?;
    let n = case.buses.len();
    let slack_bus = case
        .slack_bus()
        .ok_or_else(|| Error::InvalidCase("no slack bus".into()))?;
    let slack_gen = case.slack_generator();

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (i, (g, &p)) in case.generators.iter().zip(dispatch).enumerate() {
        if Some(i) == slack_gen {
            continue;
        }
        let b = case.bus_index(g.bus).ok_or_else(|| Error::InvalidCase("generator bus".into()))?;
        p_spec[b] += p;
    }
    for (l, d) in case.loads.iter().zip(demand) {
        let b = case.bus_index(l.bus).ok_or_else(|| Error::InvalidCase("load bus".into()))?;
        p_spec[b] -= d.re;
        q_spec[b] -= d.im;
    }

    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack_bus).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind == BusKind::Pq).collect();
    let na = pvpq.len();
    let dim = na + pq.len();

    let mut iterations = 0;
    let mut mismatch;
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|i| Complex::from_polar(vm[i], va[i])));
        let current = &y * &v;
        let s: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj()).collect();
        let mut f = DVector::zeros(dim);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - p_spec[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[na + r] = s[i].im - q_spec[i];
        }
        mismatch = f.amax();
        if !mismatch.is_finite() {
            return Err(Error::Divergence { iterations, mismatch });
        }
        if mismatch <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::Divergence { iterations, mismatch });
        }
        iterations += 1;

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let j = Complex::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(dim, dim);
        let unit: Vec<Complex64> = (0..n).map(|i| Complex::from_polar(1.0, va[i])).collect();
        let ds_dva = |row: usize, col: usize| -> Complex64 {
            let mut t = -y[(row, col)] * v[col];
            if row == col {
                t += current[row];
            }
            j * v[row] * t.conj()
        };
        let ds_dvm = |row: usize, col: usize| -> Complex64 {
            let mut t = v[row] * (y[(row, col)] * unit[col]).conj();
            if row == col {
                t += current[row].conj() * unit[row];
            }
            t
        };
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva(i, k).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dvm(i, k).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(na + r, c)] = ds_dva(i, k).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dvm(i, k).im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(Error::Divergence { iterations, mismatch })?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[na + r];
        }
    }

    let v = DVector::from_iterator(n, (0..n).map(|i| Complex::from_polar(vm[i], va[i])));
    let current = &y * &v;
    let s: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj()).collect();

    // Generator outputs: the slack generator takes the residual at its bus,
    // reactive power at a bus is shared by capacity.
    let mut gen_p = dispatch.to_vec();
    let mut gen_q = vec![0.0; case.generators.len()];
    let mut bus_load = vec![Complex::new(0.0, 0.0); n];
    for (l, d) in case.loads.iter().zip(demand) {
        if let Some(b) = case.bus_index(l.bus) {
            bus_load[b] += *d;
        }
    }
    if let Some(sg) = slack_gen {
        let others: f64 = case
            .generators
            .iter()
            .enumerate()
            .filter(|(i, g)| *i != sg && g.bus == case.buses[slack_bus].id)
            .map(|(i, _)| dispatch[i])
            .sum();
        gen_p[sg] = s[slack_bus].re + bus_load[slack_bus].re - others;
    }
    for b in 0..n {
        let members: Vec<usize> = (0..case.generators.len())
            .filter(|&i| case.generators[i].bus == case.buses[b].id)
            .collect();
        if members.is_empty() {
            continue;
        }
        let q_total = s[b].im + bus_load[b].im;
        let cap: f64 = members.iter().map(|&i| case.generators[i].p_max).sum();
        for &i in &members {
            gen_q[i] = q_total * case.generators[i].p_max / cap;
        }
    }

    Ok(OperatingPoint {
        t: 0.0,
        p_inj: s.iter().map(|c| c.re).collect(),
        q_inj: s.iter().map(|c| c.im).collect(),
        vm,
        va,
        gen_p,
        gen_q,
        demand: demand.to_vec(),
        iterations,
        mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn two_bus(x: f64) -> NetworkCase {
        NetworkCase {
            base_mva: 100.0,
            frequency_hz: 60.0,
            damper_tau: 0.0,
            buses: vec![
                Bus { id: 1, kind: BusKind::Slack, voltage: 1.0 },
                Bus { id: 2, kind: BusKind::Pq, voltage: 1.0 },
            ],
            branches: vec![Branch { from: 1, to: 2, r: 0.0, x, b: 0.0, in_service: true }],
            generators: vec![Generator {
                bus: 1,
                inertia: 3.5,
                damping: 0.0,
                xd_prime: 0.3,
                p_max: 2.0,
                p_min: 0.0,
                station: "A/S1".to_string(),
                dispatchable: false,
                p_set: 0.0,
            }],
            loads: vec![Load { bus: 2, p: 0.0, q: 0.0 }],
        }
    }

    #[test]
    fn two_bus_admittance() {
        let y = build_admittance(&two_bus(0.5)).unwrap();
        let expect = [[-2.0, 2.0], [2.0, -2.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((y[(i, k)] - Complex::new(0.0, expect[i][k])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn all_branches_out_is_topology_error() {
        let mut case = two_bus(0.5);
        case.branches[0].in_service = false;
        assert!(matches!(build_admittance(&case), Err(Error::Topology(_))));
        assert!(matches!(case.validate(), Err(Error::Topology(_))));
    }

    #[test]
    fn zero_injection_is_flat() {
        let case = two_bus(0.5);
        let op = solve_power_flow(&case, &[0.0], &case.base_demand(), &Default::default()).unwrap();
        assert_eq!(op.iterations, 0);
        for i in 0..2 {
            assert!((op.vm[i] - 1.0).abs() < 1e-12);
            assert!(op.va[i].abs() < 1e-12);
        }
        assert!(op.gen_p[0].abs() < 1e-12);
    }

    #[test]
    fn two_bus_transfer_matches_closed_form() {
        // Lossless line with slack at 1.0: P = V sin(theta) / x, Q = (V^2 - V cos theta)/x
        let case = two_bus(0.5);
        let demand = [Complex::new(0.8, 0.0)];
        let op = solve_power_flow(&case, &[0.0], &demand, &Default::default()).unwrap();
        let (v, th) = (op.vm[1], op.va[1]);
        assert!((v * th.sin() / 0.5 + 0.8).abs() < 1e-8);
        assert!(((v * v - v * th.cos()) / 0.5).abs() < 1e-8);
        assert!((op.gen_p[0] - 0.8).abs() < 1e-8);
    }

    #[test]
    fn dispatch_above_pmax_rejected() {
        let mut case = two_bus(0.5);
        case.buses[1].kind = BusKind::Pv;
        case.generators.push(Generator { bus: 2, p_max: 1.0, dispatchable: true, ..case.generators[0].clone() });
        let err = solve_power_flow(&case, &[0.0, 1.5], &case.base_demand(), &Default::default());
        assert!(matches!(err, Err(Error::DispatchOutOfBounds { generator: 1, .. })));
        let with_reserve = PowerFlowOptions { headroom: 0.6, ..Default::default() };
        assert!(solve_power_flow(&case, &[0.0, 1.5], &case.base_demand(), &with_reserve).is_ok());
    }

    #[test]
    fn divergence_reports_mismatch() {
        let case = two_bus(0.5);
        // Beyond the maximum transfer of the line.
        let demand = [Complex::new(5.0, 0.0)];
        match solve_power_flow(&case, &[0.0], &demand, &Default::default()) {
            Err(Error::Divergence { mismatch, .. }) => assert!(mismatch > 1e-8),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn two_slacks_rejected() {
        let mut case = two_bus(0.5);
        case.buses[1].kind = BusKind::Slack;
        case.generators.push(Generator { bus: 2, ..case.generators[0].clone() });
        assert!(matches!(case.validate(), Err(Error::InvalidCase(_))));
    }
}
