//! Closed-loop day simulation.
//!
//! Three activities are interleaved on one deterministic clock: ambient
//! measurements at the sampling period (load and generator fluctuation around the
//! schedule, power flow, modes, noisy minimum damping), damping estimation over
//! the samples taken since the last dispatch finished ramping, and a dispatch
//! decision every `t1` seconds. Every random draw comes from a generator keyed by
//! `(seed, stream, second)`, so the log does not depend on evaluation order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimator::{naer_estimate, reduce_features, EstimatorConfig, SampleWindow, SensitivityEstimate};
use crate::feature::Feature;
use crate::grid::{solve_power_flow, solve_power_flow_from, Complex64, NetworkCase, OperatingPoint, PowerFlowOptions};
use crate::modal::{analyze, min_damping_mode, perturbation_sensitivity, Mode, OracleOptions};
use crate::redispatch::{
    build_lp, compute_bounds, redistribute_planned, solve_lp, DispatchBounds, FeatureLimits, LpInstance, LpStatus,
    RedispatchSolution, LIMIT_TOL, RESERVE_FRACTION,
};

const STREAM_AMBIENT: u64 = 1;
const STREAM_MEASURE: u64 = 2;

/// Piecewise-linear time series over minutes, held constant outside its range.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidScenario("profile has no points".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidScenario("profile times must increase".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidScenario("profile values must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn value(&self, t_min: f64) -> f64 {
        let p = &self.points;
        if t_min <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            if t_min <= w[1].0 {
                let s = (t_min - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + s * (w[1].1 - w[0].1);
            }
        }
        p[p.len() - 1].1
    }
}

/// Scheduled setpoint increments of one generator, stamped in minutes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannedDispatch {
    pub steps: Vec<(f64, f64)>,
}

impl PlannedDispatch {
    /// Sum of increments stamped in `(from, to]` minutes.
    pub fn between(&self, from_min: f64, to_min: f64) -> f64 {
        self.steps
            .iter()
            .filter(|(t, _)| *t > from_min && *t <= to_min)
            .map(|(_, d)| d)
            .sum()
    }

    /// Increments stamped at or before minute 0, applied to the starting point.
    pub fn initial(&self) -> f64 {
        self.steps.iter().filter(|(t, _)| *t <= 0.0).map(|(_, d)| d).sum()
    }
}

/// Where the LP gets its sensitivities from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivitySource {
    /// Noise-assisted ensemble regression over the measurement window.
    Estimated,
    /// Model-based perturbation at the scheduled operating point (for validation).
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub case: NetworkCase,
    /// Multiplier on each load's base P and Q over the day.
    pub load_profiles: Vec<Profile>,
    pub planned: Vec<PlannedDispatch>,
    pub horizon_s: f64,
    /// Dispatch interval.
    pub t1_s: f64,
    pub threshold: f64,
    pub sample_s: f64,
    /// Std of the additive noise on measured damping.
    pub noise_zeta: f64,
    /// Std of the per-sample load fluctuation, fraction of the profile value.
    pub load_fluctuation: f64,
    /// Std of the per-sample generator output fluctuation, fraction of capacity.
    pub gen_fluctuation: f64,
    /// Largest setpoint change per interval, fraction of capacity.
    pub ramp_limit: f64,
    /// Execution ramp speed, fraction of capacity per minute.
    pub ramp_rate: f64,
    /// Samples averaged into the damping estimate that drives the trigger (s).
    pub trigger_window_s: f64,
    pub seed: u64,
    pub reserve: bool,
    pub balance: bool,
    pub feature_budget: usize,
    pub estimator: EstimatorConfig,
    pub sensitivity: SensitivitySource,
    pub oracle: OracleOptions,
    /// Keep the raw measurement window of every estimated decision in the log.
    pub record_windows: bool,
}

impl Scenario {
    /// Scenario with the default parameters over a constant load and no planned moves.
    pub fn new(case: NetworkCase) -> Self {
        let loads = case.loads.len();
        let gens = case.generators.len();
        Self {
            case,
            load_profiles: vec![Profile::constant(1.0); loads],
            planned: vec![PlannedDispatch::default(); gens],
            horizon_s: 86_400.0,
            t1_s: 900.0,
            threshold: 0.03,
            sample_s: 1.0,
            noise_zeta: 0.002,
            load_fluctuation: 0.01,
            gen_fluctuation: 0.0,
            ramp_limit: 0.05,
            ramp_rate: 0.01,
            trigger_window_s: 60.0,
            seed: 0,
            reserve: false,
            balance: true,
            feature_budget: 8,
            estimator: EstimatorConfig::default(),
            sensitivity: SensitivitySource::Estimated,
            oracle: OracleOptions::default(),
            record_windows: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.case.validate()?;
        let bad = |m: &str| Err(Error::InvalidScenario(m.into()));
        if !(self.t1_s > 0.0) {
            return bad("dispatch interval must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 0.2) {
            return bad("damping threshold must lie in (0, 0.2)");
        }
        if !(self.horizon_s >= 0.0) {
            return bad("horizon must be non-negative");
        }
        let intervals = self.horizon_s / self.t1_s;
        if (intervals - libm::round(intervals)).abs() > 1e-9 {
            return bad("horizon must be a whole number of dispatch intervals");
        }
        if !(self.sample_s > 0.0) || (self.sample_s - libm::round(self.sample_s)).abs() > 1e-12 {
            return bad("sampling period must be a whole number of seconds");
        }
        if self.noise_zeta < 0.0 || self.load_fluctuation < 0.0 || self.gen_fluctuation < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if !(self.ramp_limit > 0.0) || !(self.ramp_rate > 0.0) {
            return bad("ramp limit and ramp rate must be positive");
        }
        if self.ramp_limit / self.ramp_rate * 60.0 >= self.t1_s {
            return bad("a full ramp must finish within one dispatch interval");
        }
        if !(self.trigger_window_s >= self.sample_s) {
            return bad("trigger window must hold at least one sample");
        }
        if self.load_profiles.len() != self.case.loads.len() {
            return bad("one load profile per load is required");
        }
        if self.planned.len() != self.case.generators.len() {
            return bad("one planned dispatch series per generator is required");
        }
        let slack = self.case.slack_generator();
        for (i, p) in self.planned.iter().enumerate() {
            let g = &self.case.generators[i];
            if (!g.dispatchable || Some(i) == slack) && p.steps.iter().any(|s| s.1 != 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "generator {} is not dispatchable but has planned moves",
                    NetworkCase::generator_label(i)
                )));
            }
        }
        if self.feature_budget < 2 {
            return bad("feature budget must be at least 2");
        }
        self.estimator.validate()
    }

    /// Load multipliers of the schedule at `t` seconds.
    pub fn load_factors(&self, t: f64) -> Vec<f64> {
        self.load_profiles.iter().map(|p| p.value(t / 60.0)).collect()
    }

    /// The case at a scheduled point: setpoints from `dispatch`, loads scaled to `t`.
    pub fn snapshot(&self, dispatch: &[f64], t: f64) -> NetworkCase {
        let mut case = self.case.clone();
        for (g, p) in case.generators.iter_mut().zip(dispatch) {
            g.p_set = *p;
        }
        for (l, f) in case.loads.iter_mut().zip(self.load_factors(t)) {
            l.p *= f;
            l.q *= f;
        }
        case
    }

    fn headroom(&self) -> f64 {
        if self.reserve {
            RESERVE_FRACTION
        } else {
            0.0
        }
    }

    fn pf_options(&self) -> PowerFlowOptions {
        PowerFlowOptions {
            headroom: self.headroom(),
            ..Default::default()
        }
    }

    /// Generators the operator may move: dispatchable and not the slack.
    pub fn controllable(&self) -> Vec<usize> {
        let slack = self.case.slack_generator();
        (0..self.case.generators.len())
            .filter(|&i| self.case.generators[i].dispatchable && Some(i) != slack)
            .collect()
    }

    fn capacity_window(&self, g: usize) -> (f64, f64) {
        let gen = &self.case.generators[g];
        (gen.p_min, gen.p_max * (1.0 + self.headroom()))
    }

    /// Starting setpoints: case setpoints plus planned increments stamped at or before minute 0.
    pub fn initial_dispatch(&self) -> Vec<f64> {
        self.case
            .generators
            .iter()
            .zip(&self.planned)
            .map(|(g, p)| g.p_set + p.initial())
            .collect()
    }
}

fn keyed_rng(seed: u64, stream: u64, second: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&second.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// True minimum damping plus Gaussian measurement noise, kept inside (-1, 1).
pub fn measure_damping(modes: &[Mode], noise_std: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let zeta = min_damping_mode(modes)?.damping_ratio;
    let limit = 1.0 - 1e-12;
    Ok((zeta + gaussian(rng, noise_std)).clamp(-limit, limit))
}

/// Instantaneous load multipliers at `t` seconds: profile value times `1 + noise`.
pub fn generate_ambient(scenario: &Scenario, t: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    scenario
        .load_profiles
        .iter()
        .map(|p| p.value(t / 60.0) * (1.0 + gaussian(rng, scenario.load_fluctuation)))
        .collect()
}

/// Why a triggered decision did not re-dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    EstimatorFlagged,
    InsufficientData,
    FeatureReduction,
    NoHeadroom,
    LpInfeasible,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::EstimatorFlagged => "estimator-flagged",
            SkipReason::InsufficientData => "insufficient-data",
            SkipReason::FeatureReduction => "feature-reduction",
            SkipReason::NoHeadroom => "no-headroom",
            SkipReason::LpInfeasible => "lp-infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Estimated damping at or above the threshold.
    NotTriggered,
    Redispatched,
    /// The LP found no re-dispatch room at all.
    ZeroCapacity,
    Skipped(SkipReason),
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::NotTriggered => "not-triggered",
            Outcome::Redispatched => "redispatched",
            Outcome::ZeroCapacity => "zero-capacity",
            Outcome::Skipped(r) => r.as_str(),
        }
    }

    pub fn triggered(self) -> bool {
        self != Outcome::NotTriggered
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinuteRecord {
    pub t: f64,
    /// Minimum damping at the scheduled (fluctuation-free) operating point.
    pub zeta_true: f64,
    /// Noisy measurement taken at this second.
    pub zeta_measured: f64,
    /// Per-generator output at the scheduled point (slack from the power flow).
    pub dispatch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub index: usize,
    pub t: f64,
    /// Mean measured damping over the trigger window.
    pub zeta_estimated: f64,
    pub zeta_true: f64,
    /// Scheduled damping right after the committed move, at the same loads.
    pub zeta_true_after: Option<f64>,
    /// Scheduled setpoints at the decision time, before this decision's move.
    pub dispatch: Vec<f64>,
    /// Regression samples in the window.
    pub samples: usize,
    /// Raw window levels `(t, zeta, feature values)` when recording is enabled.
    pub window: Vec<(f64, f64, Vec<f64>)>,
    pub window_start: f64,
    pub outcome: Outcome,
    pub features: Vec<Feature>,
    pub estimate: Option<SensitivityEstimate>,
    pub bounds: Option<DispatchBounds>,
    pub lp: Option<LpInstance>,
    pub solution: Option<RedispatchSolution>,
    /// Per-generator planned increments after redistribution.
    pub planned: Vec<f64>,
    /// Per-generator re-dispatch increments.
    pub redispatch: Vec<f64>,
    /// Setpoints at the end of the ramp.
    pub target: Vec<f64>,
    /// Ramp duration (s).
    pub t2: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub generator_ids: Vec<String>,
    pub minutes: Vec<MinuteRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub initial_dispatch: Vec<f64>,
}

impl SimulationLog {
    pub fn triggers(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.decisions.iter().filter(|d| d.outcome.triggered())
    }
}

/// A run stopped by an error; the log up to that point is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted {
    pub log: SimulationLog,
    pub error: Error,
}

/// Setpoint trajectory of one dispatch move.
#[derive(Debug, Clone, PartialEq)]
struct Ramp {
    start: f64,
    from: Vec<f64>,
    to: Vec<f64>,
    /// Speed per generator (p.u./s).
    rate: Vec<f64>,
}

impl Ramp {
    fn hold(x: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            start: 0.0,
            from: x.clone(),
            to: x,
            rate: vec![f64::INFINITY; n],
        }
    }

    fn at(&self, t: f64) -> Vec<f64> {
        let dt = (t - self.start).max(0.0);
        self.from
            .iter()
            .zip(&self.to)
            .zip(&self.rate)
            .map(|((a, b), r)| {
                let d = b - a;
                if d == 0.0 || d.abs() <= r * dt {
                    *b
                } else {
                    a + d.signum() * r * dt
                }
            })
            .collect()
    }

    fn duration(&self) -> f64 {
        self.from
            .iter()
            .zip(&self.to)
            .zip(&self.rate)
            .map(|((a, b), r)| if a == b { 0.0 } else { (b - a).abs() / r })
            .fold(0.0, f64::max)
    }
}

struct Sample {
    t: f64,
    gen_p: Vec<f64>,
    zeta: f64,
}

/// Mutable state of a run. Within a dispatch interval every power flow starts
/// from the same reference solution (the scheduled point of the last decision),
/// so a sample does not depend on which samples were computed before it.
pub struct LoopState<'a> {
    scenario: &'a Scenario,
    ramp: Ramp,
    reference: OperatingPoint,
    ramp_end: f64,
    index: usize,
    log: SimulationLog,
}

impl<'a> LoopState<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let x0 = scenario.initial_dispatch();
        for &g in &scenario.controllable() {
            let (lo, hi) = scenario.capacity_window(g);
            if x0[g] < lo - LIMIT_TOL || x0[g] > hi + LIMIT_TOL {
                return Err(Error::InvalidScenario(format!(
                    "initial setpoint of {} outside [{lo}, {hi}]",
                    NetworkCase::generator_label(g)
                )));
            }
        }
        let demand = scenario.case.base_demand();
        let reference = solve_power_flow(&scenario.case, &x0, &demand, &scenario.pf_options())?;
        Ok(Self {
            scenario,
            ramp: Ramp::hold(x0.clone()),
            reference,
            ramp_end: 0.0,
            index: 0,
            log: SimulationLog {
                generator_ids: (0..scenario.case.generators.len()).map(NetworkCase::generator_label).collect(),
                minutes: Vec::new(),
                decisions: Vec::new(),
                initial_dispatch: x0,
            },
        })
    }

    pub fn log(&self) -> &SimulationLog {
        &self.log
    }

    pub fn into_log(self) -> SimulationLog {
        self.log
    }

    /// Scheduled setpoints at `t` (no fluctuation).
    pub fn setpoint(&self, t: f64) -> Vec<f64> {
        self.ramp.at(t)
    }

    fn demand(&self, factors: &[f64]) -> Vec<Complex64> {
        self.scenario
            .case
            .loads
            .iter()
            .zip(factors)
            .map(|(l, f)| Complex64::new(l.p * f, l.q * f))
            .collect()
    }

    fn operating_point(&self, dispatch: &[f64], factors: &[f64], t: f64) -> Result<OperatingPoint> {
        let case = &self.scenario.case;
        let demand = self.demand(factors);
        let opts = self.scenario.pf_options();
        let first = match solve_power_flow_from(case, dispatch, &demand, &self.reference, &opts) {
            Err(Error::Divergence { .. }) => solve_power_flow(case, dispatch, &demand, &opts),
            other => other,
        };
        let mut op = match first {
            Err(err @ Error::Divergence { .. }) => self.continuation(dispatch, &demand).ok_or(err)?,
            other => other?,
        };
        op.t = t;
        Ok(op)
    }

    /// Walks from the reference point to the target injections in equal steps.
    fn continuation(&self, dispatch: &[f64], demand: &[Complex64]) -> Option<OperatingPoint> {
        let case = &self.scenario.case;
        let opts = self.scenario.pf_options();
        let r = &self.reference;
        'steps: for n in [4, 16] {
            let mut op = r.clone();
            for k in 1..=n {
                let s = k as f64 / n as f64;
                let x: Vec<f64> = r.gen_p.iter().zip(dispatch).map(|(a, b)| a + s * (b - a)).collect();
                let d: Vec<Complex64> = r.demand.iter().zip(demand).map(|(a, b)| a + (b - a) * s).collect();
                match solve_power_flow_from(case, &x, &d, &op, &opts) {
                    Ok(next) => op = next,
                    Err(_) => continue 'steps,
                }
            }
            return Some(op);
        }
        None
    }

    /// Operating point and modes at the schedule, without fluctuation.
    fn scheduled(&mut self, t: f64) -> Result<(OperatingPoint, Vec<Mode>)> {
        let factors = self.scenario.load_factors(t);
        let x = self.setpoint(t);
        let op = self.operating_point(&x, &factors, t)?;
        let modes = analyze(&self.scenario.case, &op)?;
        Ok((op, modes))
    }

    /// One ambient measurement at second `s`.
    fn sample(&mut self, s: u64) -> Result<Sample> {
        let sc = self.scenario;
        let t = s as f64;
        let mut rng = keyed_rng(sc.seed, STREAM_AMBIENT, s);
        let factors = generate_ambient(sc, t, &mut rng);
        let mut x = self.setpoint(t);
        for g in sc.controllable() {
            let (lo, hi) = sc.capacity_window(g);
            let cap = sc.case.generators[g].p_max;
            x[g] = (x[g] + gaussian(&mut rng, sc.gen_fluctuation * cap)).clamp(lo, hi);
        }
        let op = self.operating_point(&x, &factors, t)?;
        let modes = analyze(&sc.case, &op)?;
        let mut noise = keyed_rng(sc.seed, STREAM_MEASURE, s);
        let zeta = measure_damping(&modes, sc.noise_zeta, &mut noise)?;
        Ok(Sample {
            t,
            gen_p: op.gen_p,
            zeta,
        })
    }

    fn minute_record(&mut self, t: f64) -> Result<MinuteRecord> {
        let (op, modes) = self.scheduled(t)?;
        let zeta_true = min_damping_mode(&modes)?.damping_ratio;
        let measured = self.sample(t as u64)?;
        Ok(MinuteRecord {
            t,
            zeta_true,
            zeta_measured: measured.zeta,
            dispatch: op.gen_p,
        })
    }

    fn record_minutes(&mut self, from: f64, to: f64, inclusive: bool) -> Result<()> {
        let mut m = libm::ceil(from / 60.0) as u64;
        loop {
            let t = m as f64 * 60.0;
            if t > to || (!inclusive && t >= to) {
                break;
            }
            let rec = self.minute_record(t)?;
            self.log.minutes.push(rec);
            m += 1;
        }
        Ok(())
    }

    /// Seconds of the current measurement window, oldest first.
    fn window_seconds(&self, t: f64) -> Vec<u64> {
        let step = self.scenario.sample_s as u64;
        let first = libm::ceil(self.ramp_end / step as f64) as u64 * step;
        let last = t as u64;
        (first..=last).step_by(step as usize).collect()
    }

    /// Decision at `t`: trigger check, estimation, LP and the next ramp.
    pub fn step(&mut self, t: f64) -> Result<()> {
        let sc = self.scenario;
        self.index += 1;
        let seconds = self.window_seconds(t);
        let window_start = self.ramp_end;
        let n_trigger = (libm::round(sc.trigger_window_s / sc.sample_s) as usize).max(1);
        let split = seconds.len().saturating_sub(n_trigger);
        let mut recent = Vec::with_capacity(seconds.len() - split);
        for &s in &seconds[split..] {
            recent.push(self.sample(s)?);
        }
        let zeta_estimated = if recent.is_empty() {
            f64::NAN
        } else {
            recent.iter().map(|r| r.zeta).sum::<f64>() / recent.len() as f64
        };
        let (op, modes) = self.scheduled(t)?;
        let target_mode = min_damping_mode(&modes)?.clone();
        let x = self.setpoint(t);
        let ng = sc.case.generators.len();
        let controllable = sc.controllable();

        // planned moves for the coming interval, kept inside each generator's bounds
        let prev_min = (t - sc.t1_s) / 60.0;
        let raw: Vec<f64> = controllable.iter().map(|&g| sc.planned[g].between(prev_min, t / 60.0)).collect();
        let limits: Vec<FeatureLimits> = controllable
            .iter()
            .map(|&g| {
                let gen = &sc.case.generators[g];
                FeatureLimits {
                    id: NetworkCase::generator_label(g),
                    p_min: gen.p_min,
                    p_max: gen.p_max,
                    ramp: sc.ramp_limit * gen.p_max,
                }
            })
            .collect();
        let xc: Vec<f64> = controllable.iter().map(|&g| x[g]).collect();
        let gen_bounds = compute_bounds(&xc, &limits, sc.reserve)?;
        let mut notes = Vec::new();
        let spill: Vec<bool> = (0..controllable.len())
            .map(|i| {
                gen_bounds.at_limit[i]
                    || raw[i] < gen_bounds.lower[i] - LIMIT_TOL
                    || raw[i] > gen_bounds.upper[i] + LIMIT_TOL
            })
            .collect();
        let (planned_c, headroom_ok) = match redistribute_planned(&raw, &spill, &gen_bounds) {
            Ok(p) => (p, true),
            Err(Error::NoHeadroom { amount }) => {
                notes.push(format!("planned dispatch clipped, {amount} p.u. could not be placed"));
                let clipped = (0..raw.len())
                    .map(|i| raw[i].clamp(gen_bounds.lower[i], gen_bounds.upper[i]))
                    .collect();
                (clipped, false)
            }
            Err(e) => return Err(e),
        };

        let mut record = DecisionRecord {
            index: self.index,
            t,
            zeta_estimated,
            zeta_true: target_mode.damping_ratio,
            zeta_true_after: None,
            dispatch: x.clone(),
            samples: 0,
            window: Vec::new(),
            window_start,
            outcome: Outcome::NotTriggered,
            features: Vec::new(),
            estimate: None,
            bounds: None,
            lp: None,
            solution: None,
            planned: vec![0.0; ng],
            redispatch: vec![0.0; ng],
            target: x.clone(),
            t2: 0.0,
            notes,
        };
        for (i, &g) in controllable.iter().enumerate() {
            record.planned[g] = planned_c[i];
        }

        if zeta_estimated.is_nan() || zeta_estimated < sc.threshold {
            let outcome = self.decide(
                &mut record,
                &seconds[..split],
                recent,
                &op,
                &target_mode,
                &controllable,
                &gen_bounds,
                &planned_c,
                headroom_ok,
            )?;
            record.outcome = outcome;
        }

        for g in 0..ng {
            record.target[g] = x[g] + record.planned[g] + record.redispatch[g];
        }
        if let Some(slack) = sc.case.slack_generator() {
            record.target[slack] = x[slack];
        }
        let rate: Vec<f64> = sc
            .case
            .generators
            .iter()
            .map(|g| sc.ramp_rate * g.p_max / 60.0)
            .collect();
        self.ramp = Ramp {
            start: t,
            from: x,
            to: record.target.clone(),
            rate,
        };
        record.t2 = self.ramp.duration();
        self.reference = op;
        self.ramp_end = t + record.t2;
        if record.outcome == Outcome::Redispatched {
            let factors = sc.load_factors(t);
            let after = self.operating_point(&record.target, &factors, t)?;
            let modes = analyze(&sc.case, &after)?;
            record.zeta_true_after = Some(min_damping_mode(&modes)?.damping_ratio);
        }
        self.log.decisions.push(record);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn decide(
        &mut self,
        record: &mut DecisionRecord,
        earlier: &[u64],
        recent: Vec<Sample>,
        op: &OperatingPoint,
        mode: &Mode,
        controllable: &[usize],
        gen_bounds: &DispatchBounds,
        planned_c: &[f64],
        headroom_ok: bool,
    ) -> Result<Outcome> {
        let sc = self.scenario;
        let features = match reduce_features(&sc.case, mode, sc.feature_budget) {
            Ok(f) => f,
            Err(e) => {
                record.notes.push(format!("{e}"));
                return Ok(Outcome::Skipped(SkipReason::FeatureReduction));
            }
        };
        record.features = features.clone();
        if !headroom_ok {
            return Ok(Outcome::Skipped(SkipReason::NoHeadroom));
        }

        let psi = match sc.sensitivity {
            SensitivitySource::Estimated => {
                let mut samples = Vec::with_capacity(earlier.len() + recent.len());
                for &s in earlier {
                    samples.push(self.sample(s)?);
                }
                samples.extend(recent);
                let ids = features.iter().map(|f| f.id.clone()).collect();
                let mut window = SampleWindow::new(ids);
                window.set_boundary(record.window_start);
                for s in &samples {
                    let xf: Vec<f64> = features.iter().map(|f| f.value(&s.gen_p)).collect();
                    window.push_level(&xf, s.zeta, s.t)?;
                    if sc.record_windows {
                        record.window.push((s.t, s.zeta, xf));
                    }
                }
                record.samples = window.len();
                let cfg = EstimatorConfig {
                    seed: sc.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(record.index as u64),
                    ..sc.estimator
                };
                let estimate = match naer_estimate(&window, &cfg) {
                    Ok(e) => e,
                    Err(e) => {
                        record.notes.push(format!("{e}"));
                        return Ok(Outcome::Skipped(SkipReason::InsufficientData));
                    }
                };
                let flagged = estimate.flagged;
                let psi = estimate.psi.clone();
                record.estimate = Some(estimate);
                if flagged {
                    return Ok(Outcome::Skipped(SkipReason::EstimatorFlagged));
                }
                psi
            }
            SensitivitySource::Oracle => {
                let opts = OracleOptions {
                    power_flow: sc.pf_options(),
                    ..sc.oracle
                };
                perturbation_sensitivity(&sc.case, op, &features, &opts)?
            }
        };

        // feature-level bounds and planned increments
        let pos = |g: usize| controllable.iter().position(|&c| c == g).unwrap_or(usize::MAX);
        let mut fb = DispatchBounds {
            feature_ids: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            capacity: Vec::new(),
            at_limit: Vec::new(),
        };
        let mut f_planned = Vec::new();
        for f in &features {
            let idx: Vec<usize> = f.generators.iter().map(|&g| pos(g)).collect();
            fb.feature_ids.push(f.id.clone());
            fb.lower.push(idx.iter().map(|&i| gen_bounds.lower[i]).sum());
            fb.upper.push(idx.iter().map(|&i| gen_bounds.upper[i]).sum());
            fb.capacity.push((
                idx.iter().map(|&i| gen_bounds.capacity[i].0).sum(),
                idx.iter().map(|&i| gen_bounds.capacity[i].1).sum(),
            ));
            fb.at_limit.push(idx.iter().all(|&i| gen_bounds.at_limit[i]));
            f_planned.push(idx.iter().map(|&i| planned_c[i]).sum::<f64>());
        }
        let lp = build_lp(&psi, &fb, &f_planned, sc.balance)?;
        let solution = solve_lp(&lp);
        record.bounds = Some(fb);
        record.lp = Some(lp);
        let status = solution.status;
        let moves = solution.dx_r.clone();
        record.solution = Some(solution);
        if status == LpStatus::Infeasible {
            return Ok(Outcome::Skipped(SkipReason::LpInfeasible));
        }
        if moves.iter().all(|v| v.abs() <= LIMIT_TOL) {
            return Ok(Outcome::ZeroCapacity);
        }
        // split each feature's move over its members by room in that direction
        for (f, &r) in features.iter().zip(&moves) {
            let room: Vec<f64> = f
                .generators
                .iter()
                .map(|&g| {
                    let i = pos(g);
                    if r >= 0.0 {
                        (gen_bounds.upper[i] - planned_c[i]).max(0.0)
                    } else {
                        (planned_c[i] - gen_bounds.lower[i]).max(0.0)
                    }
                })
                .collect();
            let total: f64 = room.iter().sum();
            for (k, &g) in f.generators.iter().enumerate() {
                record.redispatch[g] = if total > 0.0 {
                    r * room[k] / total
                } else {
                    r / f.generators.len() as f64
                };
            }
        }
        Ok(Outcome::Redispatched)
    }
}

/// Runs the scenario over its horizon.
pub fn run(scenario: &Scenario) -> core::result::Result<SimulationLog, Aborted> {
    let mut state = match LoopState::new(scenario) {
        Ok(s) => s,
        Err(error) => {
            return Err(Aborted {
                log: SimulationLog {
                    generator_ids: Vec::new(),
                    minutes: Vec::new(),
                    decisions: Vec::new(),
                    initial_dispatch: Vec::new(),
                },
                error,
            })
        }
    };
    if scenario.horizon_s <= 0.0 {
        return Ok(state.into_log());
    }
    let intervals = libm::round(scenario.horizon_s / scenario.t1_s) as usize;
    let result = (|| -> Result<()> {
        for k in 1..intervals {
            let t = k as f64 * scenario.t1_s;
            state.record_minutes((k - 1) as f64 * scenario.t1_s, t, false)?;
            state.step(t)?;
        }
        state.record_minutes((intervals - 1) as f64 * scenario.t1_s, scenario.horizon_s, true)
    })();
    match result {
        Ok(()) => Ok(state.into_log()),
        Err(error) => Err(Aborted {
            log: state.into_log(),
            error,
        }),
    }
}

/// Dispatch-legality violations: capacity window at every minute and ramp limit
/// between consecutive decision targets. The slack generator is exempt.
pub fn legality_violations(scenario: &Scenario, log: &SimulationLog) -> Vec<String> {
    let mut out = Vec::new();
    let ctrl = scenario.controllable();
    for rec in &log.minutes {
        for &g in &ctrl {
            let (lo, hi) = scenario.capacity_window(g);
            let p = rec.dispatch[g];
            if p < lo - 1e-6 || p > hi + 1e-6 {
                out.push(format!(
                    "t={}s {} at {p} outside [{lo}, {hi}]",
                    rec.t,
                    NetworkCase::generator_label(g)
                ));
            }
        }
    }
    let mut prev = log.initial_dispatch.clone();
    for d in &log.decisions {
        for &g in &ctrl {
            let limit = scenario.ramp_limit * scenario.case.generators[g].p_max;
            let change = d.target[g] - prev[g];
            if change.abs() > limit + 1e-6 {
                out.push(format!(
                    "decision {} moves {} by {change}, ramp limit {limit}",
                    d.index,
                    NetworkCase::generator_label(g)
                ));
            }
        }
        prev = d.target.clone();
    }
    out
}
