//! Subcommand definitions and handlers.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dampopt_core::closed_loop::{legality_violations, run as run_loop, Aborted, Outcome, Scenario, SimulationLog};
use dampopt_core::estimator::{naer_estimate, reduce_features, EstimatorConfig, SampleWindow};
use dampopt_core::modal::{
    analyze, fault_simulate, min_damping_mode, perturbation_sensitivity, trajectory_damping, FaultSpec, Mode,
    OracleOptions,
};
use dampopt_core::redispatch::{build_lp, solve_lp, Binding};
use dampopt_core::{NetworkCase, OperatingPoint, PowerFlowOptions};
use serde_json::json;

use crate::case_file::{read_case, write_case};
use crate::csv_io::{self, SampleTable};
use crate::scenario_file::{generator_index, read_scenario};

#[derive(Debug, Parser)]
#[command(name = "dampopt", version, about = "Data-driven re-dispatch for oscillation damping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the power flow of a case at its default dispatch.
    Powerflow(CaseArgs),
    /// Eigen table of the classical-model state matrix.
    Modes(CaseArgs),
    /// Model-based damping sensitivities of the least damped mode.
    SensOracle(OracleArgs),
    /// Ensemble regression on a recorded measurement window.
    Estimate(EstimateArgs),
    /// One LP re-dispatch from sensitivity and bounds tables.
    OptimizeStep(OptimizeArgs),
    /// Closed-loop day simulation.
    Simulate(SimulateArgs),
    /// Three-phase fault simulation with log-decrement damping.
    Fault(FaultArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Spinning-reserve window for setpoints.
    #[arg(long)]
    pub reserve: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub base: CaseArgs,
    /// Feature budget after participation-based reduction.
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    /// Finite-difference step (p.u.).
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Window CSV `t,zeta,<feature ids>`.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub ridge_k: f64,
    #[arg(long, default_value_t = 100)]
    pub ensemble: usize,
    #[arg(long, default_value_t = 0.99)]
    pub forgetting: f64,
    /// Ensemble noise as a fraction of each column's spread.
    #[arg(long, default_value_t = 0.1)]
    pub ensemble_noise: f64,
    #[arg(long, default_value_t = 1e8)]
    pub condition_cap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Sensitivity table (`feature_id,psi_hat` or `feature_id,psi`).
    #[arg(long)]
    pub psi: PathBuf,
    /// Bounds table `feature_id,lower,upper,planned[,at_limit]`.
    #[arg(long)]
    pub bounds: PathBuf,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub balance: OnOff,
    /// Print the LP instance.
    #[arg(long)]
    pub debug_lp: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replace the scenario's case file.
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Dispatch interval (s).
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub ridge_k: Option<f64>,
    #[arg(long)]
    pub ensemble: Option<usize>,
    #[arg(long)]
    pub reserve: bool,
    #[arg(long, value_enum)]
    pub balance: Option<OnOff>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub noise_zeta: Option<f64>,
    /// Write every LP instance under `lp/`.
    #[arg(long)]
    pub debug_lp: bool,
    /// Write every estimation window under `windows/`.
    #[arg(long)]
    pub record_windows: bool,
}

#[derive(Debug, Args)]
pub struct FaultArgs {
    #[command(flatten)]
    pub base: CaseArgs,
    /// Faulted bus id.
    #[arg(long)]
    pub bus: u32,
    /// Fault duration (s).
    #[arg(long, default_value_t = 0.1)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.5)]
    pub start: f64,
    #[arg(long, default_value_t = 15.0)]
    pub horizon: f64,
    /// Integration step (s).
    #[arg(long, default_value_t = 0.005)]
    pub h: f64,
    /// Generator pair for the relative angle, e.g. `G1,G3`; defaults to the
    /// extremes of the least damped mode's shape.
    #[arg(long)]
    pub pair: Option<String>,
}

pub fn run(cli: Cli, stdout: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Powerflow(a) => powerflow(&a, stdout),
        Command::Modes(a) => modes(&a, stdout),
        Command::SensOracle(a) => sens_oracle(&a, stdout),
        Command::Estimate(a) => estimate(&a, stdout),
        Command::OptimizeStep(a) => optimize_step(&a, stdout),
        Command::Simulate(a) => simulate(&a, stdout),
        Command::Fault(a) => fault(&a, stdout),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn out_dir(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    Ok(out.as_deref())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn solve_case(case: &NetworkCase, reserve: bool) -> Result<OperatingPoint> {
    let opts = PowerFlowOptions {
        headroom: if reserve { 0.2 } else { 0.0 },
        ..Default::default()
    };
    dampopt_core::grid::solve_power_flow(case, &case.default_dispatch(), &case.base_demand(), &opts)
        .map_err(|e| anyhow!("power flow: {e}"))
}

fn powerflow(a: &CaseArgs, stdout: &mut impl Write) -> Result<()> {
    let case = read_case(&a.case)?;
    let op = solve_case(&case, a.reserve)?;
    writeln!(stdout, "converged in {} iterations, mismatch {:.3e}", op.iterations, op.mismatch)?;
    let header: Vec<String> = ["bus", "vm", "va_deg", "p_inj", "q_inj"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            vec![
                b.id.to_string(),
                format!("{:.6}", op.vm[i]),
                format!("{:.4}", op.va[i].to_degrees()),
                format!("{:.5}", op.p_inj[i]),
                format!("{:.5}", op.q_inj[i]),
            ]
        })
        .collect();
    csv_io::write_table(stdout, &header, &rows)?;
    writeln!(stdout)?;
    let gen_header: Vec<String> = ["generator", "bus", "p", "q"].map(String::from).to_vec();
    let gen_rows: Vec<Vec<String>> = case
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| {
            vec![
                NetworkCase::generator_label(i),
                g.bus.to_string(),
                format!("{:.5}", op.gen_p[i]),
                format!("{:.5}", op.gen_q[i]),
            ]
        })
        .collect();
    csv_io::write_table(stdout, &gen_header, &gen_rows)?;
    if let Some(dir) = out_dir(&a.out)? {
        csv_io::write_table(&mut create(&dir.join("powerflow.csv"))?, &header, &rows)?;
        csv_io::write_table(&mut create(&dir.join("generators.csv"))?, &gen_header, &gen_rows)?;
    }
    Ok(())
}

fn shape_text(m: &Mode) -> String {
    let mut s = String::new();
    for (i, c) in m.shape.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "G{}:{:+.2}", i + 1, c.re);
    }
    s
}

fn modes(a: &CaseArgs, stdout: &mut impl Write) -> Result<()> {
    let case = read_case(&a.case)?;
    let op = solve_case(&case, a.reserve)?;
    let modes = analyze(&case, &op).map_err(|e| anyhow!("modal analysis: {e}"))?;
    let header: Vec<String> = ["mode", "real", "imag", "zeta", "freq_hz", "kind", "shape"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            vec![
                (i + 1).to_string(),
                format!("{:.5}", m.eigenvalue.re),
                format!("{:.5}", m.eigenvalue.im),
                format!("{:.5}", m.damping_ratio),
                format!("{:.4}", m.frequency_hz),
                m.kind.as_str().to_string(),
                shape_text(m),
            ]
        })
        .collect();
    csv_io::write_table(stdout, &header, &rows)?;
    if let Ok(m) = min_damping_mode(&modes) {
        writeln!(stdout, "least damped: {:.4} Hz, zeta {:.5} ({})", m.frequency_hz, m.damping_ratio, m.kind.as_str())?;
    }
    if let Some(dir) = out_dir(&a.out)? {
        csv_io::write_table(&mut create(&dir.join("modes.csv"))?, &header, &rows)?;
    }
    Ok(())
}

fn sens_oracle(a: &OracleArgs, stdout: &mut impl Write) -> Result<()> {
    let case = read_case(&a.base.case)?;
    let op = solve_case(&case, a.base.reserve)?;
    let modes = analyze(&case, &op).map_err(|e| anyhow!("modal analysis: {e}"))?;
    let mode = min_damping_mode(&modes).map_err(|e| anyhow!("{e}"))?;
    let features = reduce_features(&case, mode, a.features).map_err(|e| anyhow!("feature reduction: {e}"))?;
    let opts = OracleOptions {
        step: a.step,
        power_flow: PowerFlowOptions {
            headroom: if a.base.reserve { 0.2 } else { 0.0 },
            ..Default::default()
        },
        ..Default::default()
    };
    let psi = perturbation_sensitivity(&case, &op, &features, &opts).map_err(|e| anyhow!("oracle: {e}"))?;
    let ids: Vec<String> = features.iter().map(|f| f.id.clone()).collect();
    writeln!(stdout, "mode {:.4} Hz, zeta {:.5}", mode.frequency_hz, mode.damping_ratio)?;
    csv_io::write_psi(stdout, &ids, &psi)?;
    if let Some(dir) = out_dir(&a.base.out)? {
        csv_io::write_psi(&mut create(&dir.join("psi_oracle.csv"))?, &ids, &psi)?;
    }
    Ok(())
}

fn window_from(table: &SampleTable) -> Result<SampleWindow> {
    let mut w = SampleWindow::new(table.feature_ids.clone());
    if let Some(first) = table.rows.first() {
        w.set_boundary(first.0);
    }
    for (t, z, x) in &table.rows {
        w.push_level(x, *z, *t).map_err(|e| anyhow!("sample at t={t}: {e}"))?;
    }
    Ok(w)
}

fn estimate(a: &EstimateArgs, stdout: &mut impl Write) -> Result<()> {
    let table = csv_io::read_samples(&a.samples)?;
    let window = window_from(&table)?;
    let cfg = EstimatorConfig {
        ridge_k: a.ridge_k,
        forgetting: a.forgetting,
        ensemble: a.ensemble,
        noise_fraction: a.ensemble_noise,
        seed: a.seed,
        condition_cap: a.condition_cap,
    };
    let est = naer_estimate(&window, &cfg).map_err(|e| anyhow!("estimation: {e}"))?;
    writeln!(
        stdout,
        "samples {}, condition {:.3e}, replicates {}{}",
        est.samples,
        est.condition,
        est.replicates,
        if est.flagged { ", FLAGGED" } else { "" }
    )?;
    csv_io::write_estimate(stdout, &est)?;
    if let Some(dir) = out_dir(&a.out)? {
        csv_io::write_estimate(&mut create(&dir.join("estimate.csv"))?, &est)?;
        write_json(&dir.join("estimate.json"), &csv_io::estimate_json(&est))?;
    }
    Ok(())
}

fn binding_text(b: &Binding, ids: &[String]) -> String {
    match b {
        Binding::Damping => "damping".into(),
        Binding::Lower(i) => format!("lower {}", ids[*i]),
        Binding::Upper(i) => format!("upper {}", ids[*i]),
        Binding::Fixed(i) => format!("fixed {}", ids[*i]),
        Binding::Balance => "balance".into(),
    }
}

fn optimize_step(a: &OptimizeArgs, stdout: &mut impl Write) -> Result<()> {
    let (psi_ids, psi) = csv_io::read_psi(&a.psi)?;
    let (bounds, planned) = csv_io::read_bounds(&a.bounds)?;
    if psi_ids != bounds.feature_ids {
        bail!("feature ids differ between {} and {}", a.psi.display(), a.bounds.display());
    }
    let lp = build_lp(&psi, &bounds, &planned, a.balance.on()).map_err(|e| anyhow!("LP construction: {e}"))?;
    if a.debug_lp {
        write!(stdout, "{lp}")?;
    }
    let sol = solve_lp(&lp);
    writeln!(stdout, "status {}, delta {:.6e}", sol.status.as_str(), sol.delta)?;
    let header: Vec<String> = ["feature_id", "dx_r"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = bounds
        .feature_ids
        .iter()
        .zip(&sol.dx_r)
        .map(|(id, d)| vec![id.clone(), d.to_string()])
        .collect();
    csv_io::write_table(stdout, &header, &rows)?;
    let binding: Vec<String> = sol.binding.iter().map(|b| binding_text(b, &bounds.feature_ids)).collect();
    writeln!(stdout, "binding: {}", binding.join(", "))?;
    if let Some(dir) = out_dir(&a.out)? {
        csv_io::write_table(&mut create(&dir.join("solution.csv"))?, &header, &rows)?;
        write_json(
            &dir.join("solution.json"),
            &json!({ "status": sol.status.as_str(), "delta": sol.delta, "binding": binding }),
        )?;
        if a.debug_lp {
            fs::write(dir.join("instance.lp"), lp.to_string())?;
        }
    }
    if sol.status == dampopt_core::redispatch::LpStatus::Infeasible {
        bail!("LP infeasible");
    }
    Ok(())
}

fn apply_overrides(sc: &mut Scenario, a: &SimulateArgs) -> Result<()> {
    if let Some(path) = &a.case {
        sc.case = read_case(path)?;
    }
    if let Some(v) = a.seed {
        sc.seed = v;
    }
    if let Some(v) = a.threshold {
        sc.threshold = v;
    }
    if let Some(v) = a.t1 {
        sc.t1_s = v;
    }
    if let Some(v) = a.ridge_k {
        sc.estimator.ridge_k = v;
    }
    if let Some(v) = a.ensemble {
        sc.estimator.ensemble = v;
    }
    if a.reserve {
        sc.reserve = true;
    }
    if let Some(v) = a.balance {
        sc.balance = v.on();
    }
    if let Some(v) = a.features {
        sc.feature_budget = v;
    }
    if let Some(v) = a.noise_zeta {
        sc.noise_zeta = v;
    }
    sc.record_windows = a.record_windows;
    sc.validate().map_err(|e| anyhow!("scenario: {e}"))
}

fn simulate(a: &SimulateArgs, stdout: &mut impl Write) -> Result<()> {
    let mut sc = read_scenario(&a.scenario)?;
    apply_overrides(&mut sc, a)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating output directory {}", a.out.display()))?;
    let (log, error) = match run_loop(&sc) {
        Ok(log) => (log, None),
        Err(Aborted { log, error }) => (log, Some(error)),
    };
    write_log(&sc, &log, error.as_ref().map(|e| e.to_string()), a)?;
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "subcommand": "simulate",
            "scenario": a.scenario.display().to_string(),
            "case": a.case.as_ref().map(|p| p.display().to_string()),
            "seed": sc.seed,
            "threshold": sc.threshold,
            "t1_s": sc.t1_s,
            "ridge_k": sc.estimator.ridge_k,
            "ensemble": sc.estimator.ensemble,
            "reserve": sc.reserve,
            "balance": sc.balance,
            "features": sc.feature_budget,
            "noise_zeta": sc.noise_zeta,
        }),
    )?;
    let triggers = log.triggers().count();
    let moved = log.decisions.iter().filter(|d| d.outcome == Outcome::Redispatched).count();
    writeln!(stdout, "decisions {}, triggers {triggers}, re-dispatches {moved}", log.decisions.len())?;
    if let Some(last) = log.minutes.last() {
        writeln!(stdout, "final true zeta {:.5} at t={} min", last.zeta_true, last.t / 60.0)?;
    }
    let violations = legality_violations(&sc, &log);
    for v in &violations {
        writeln!(stdout, "legality violation: {v}")?;
    }
    if let Some(e) = error {
        bail!("simulation aborted: {e}");
    }
    if !violations.is_empty() {
        bail!("{} dispatch-legality violations", violations.len());
    }
    Ok(())
}

fn f(v: f64) -> String {
    // avoid "-0" in tables
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn write_log(sc: &Scenario, log: &SimulationLog, error: Option<String>, a: &SimulateArgs) -> Result<()> {
    let dir = &a.out;
    let ids = &log.generator_ids;

    let header: Vec<String> = ["t_min", "zeta_true", "zeta_measured"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = log
        .minutes
        .iter()
        .map(|m| vec![f(m.t / 60.0), f(m.zeta_true), f(m.zeta_measured)])
        .collect();
    csv_io::write_table(&mut create(&dir.join("zeta.csv"))?, &header, &rows)?;

    let mut header = vec!["t_min".to_string()];
    header.extend(ids.iter().cloned());
    let rows: Vec<Vec<String>> = log
        .minutes
        .iter()
        .map(|m| std::iter::once(f(m.t / 60.0)).chain(m.dispatch.iter().map(|p| f(*p))).collect())
        .collect();
    csv_io::write_table(&mut create(&dir.join("dispatch.csv"))?, &header, &rows)?;

    let header: Vec<String> = [
        "index",
        "t_min",
        "zeta_estimated",
        "zeta_true",
        "zeta_true_after",
        "samples",
        "outcome",
        "features",
        "lp_status",
        "delta",
        "t2_s",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = log
        .decisions
        .iter()
        .map(|d| {
            vec![
                d.index.to_string(),
                f(d.t / 60.0),
                f(d.zeta_estimated),
                f(d.zeta_true),
                opt(d.zeta_true_after),
                d.samples.to_string(),
                d.outcome.label().to_string(),
                d.features.iter().map(|x| x.id.as_str()).collect::<Vec<_>>().join(" "),
                d.solution.as_ref().map(|s| s.status.as_str().to_string()).unwrap_or_default(),
                opt(d.solution.as_ref().map(|s| s.delta)),
                f(d.t2),
            ]
        })
        .collect();
    csv_io::write_table(&mut create(&dir.join("decisions.csv"))?, &header, &rows)?;

    let header: Vec<String> = ["index", "generator", "dispatch", "planned", "redispatch", "target"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for d in &log.decisions {
        for (g, id) in ids.iter().enumerate() {
            rows.push(vec![
                d.index.to_string(),
                id.clone(),
                f(d.dispatch[g]),
                f(d.planned[g]),
                f(d.redispatch[g]),
                f(d.target[g]),
            ]);
        }
    }
    csv_io::write_table(&mut create(&dir.join("moves.csv"))?, &header, &rows)?;

    let header: Vec<String> = ["index", "feature_id", "psi_hat", "ensemble_std", "condition", "samples", "flagged"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for d in &log.decisions {
        if let Some(e) = &d.estimate {
            for i in 0..e.psi.len() {
                rows.push(vec![
                    d.index.to_string(),
                    e.feature_ids[i].clone(),
                    f(e.psi[i]),
                    f(e.spread[i]),
                    f(e.condition),
                    e.samples.to_string(),
                    u8::from(e.flagged).to_string(),
                ]);
            }
        }
    }
    csv_io::write_table(&mut create(&dir.join("estimates.csv"))?, &header, &rows)?;

    // event ledger
    let mut events = Vec::new();
    for d in &log.decisions {
        if !d.outcome.triggered() {
            continue;
        }
        let mut ev = json!({
            "t_s": d.t,
            "index": d.index,
            "event": match d.outcome {
                Outcome::Redispatched => "redispatch",
                Outcome::ZeroCapacity => "zero-capacity",
                _ => "skip",
            },
            "outcome": d.outcome.label(),
            "zeta_estimated": d.zeta_estimated,
            "zeta_true": d.zeta_true,
        });
        if let Some(s) = &d.solution {
            let feats: Vec<&str> = d.features.iter().map(|x| x.id.as_str()).collect();
            ev["solution"] = json!({
                "status": s.status.as_str(),
                "delta": s.delta,
                "dx_r": feats.iter().zip(&s.dx_r).map(|(id, v)| json!([id, v])).collect::<Vec<_>>(),
                "binding": s.binding.iter().map(|b| binding_text(b, &feats.iter().map(|x| x.to_string()).collect::<Vec<_>>())).collect::<Vec<_>>(),
            });
        }
        if let Some(after) = d.zeta_true_after {
            ev["zeta_true_after"] = json!(after);
        }
        if !d.notes.is_empty() {
            ev["notes"] = json!(d.notes);
        }
        events.push(ev);
    }
    for d in &log.decisions {
        if !d.outcome.triggered() && !d.notes.is_empty() {
            events.push(json!({ "t_s": d.t, "index": d.index, "event": "warning", "notes": d.notes }));
        }
    }
    events.sort_by(|x, y| x["index"].as_u64().cmp(&y["index"].as_u64()));
    if let Some(e) = &error {
        events.push(json!({ "event": "error", "message": e }));
    }
    write_json(&dir.join("events.json"), &json!({ "events": events }))?;

    // operating-point snapshots around each triggered round
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    let mut round = 0;
    let mut in_round = false;
    for d in &log.decisions {
        let trig = d.outcome.triggered();
        if trig && !in_round {
            round += 1;
            fs::write(snaps.join(format!("round{round}_pre.case")), write_case(&sc.snapshot(&d.dispatch, d.t)))?;
        } else if !trig && in_round {
            fs::write(snaps.join(format!("round{round}_post.case")), write_case(&sc.snapshot(&d.dispatch, d.t)))?;
        }
        in_round = trig;
    }
    if in_round {
        if let Some(m) = log.minutes.last() {
            fs::write(snaps.join(format!("round{round}_post.case")), write_case(&sc.snapshot(&m.dispatch, m.t)))?;
        }
    }

    if a.debug_lp {
        let lp_dir = dir.join("lp");
        fs::create_dir_all(&lp_dir)?;
        for d in &log.decisions {
            if let Some(lp) = &d.lp {
                fs::write(lp_dir.join(format!("decision_{:03}.lp", d.index)), lp.to_string())?;
            }
        }
    }
    if a.record_windows {
        let wdir = dir.join("windows");
        fs::create_dir_all(&wdir)?;
        for d in &log.decisions {
            if d.window.is_empty() {
                continue;
            }
            let table = SampleTable {
                feature_ids: d.features.iter().map(|x| x.id.clone()).collect(),
                rows: d.window.clone(),
            };
            csv_io::write_samples(&mut create(&wdir.join(format!("decision_{:03}.csv", d.index)))?, &table)?;
        }
    }
    Ok(())
}

/// Generators with the largest positive and negative shape entries.
fn default_pair(mode: &Mode) -> (usize, usize) {
    let mut hi = 0;
    let mut lo = 0;
    for (i, c) in mode.shape.iter().enumerate() {
        if c.re > mode.shape[hi].re {
            hi = i;
        }
        if c.re < mode.shape[lo].re {
            lo = i;
        }
    }
    (lo, hi)
}

fn fault(a: &FaultArgs, stdout: &mut impl Write) -> Result<()> {
    let case = read_case(&a.base.case)?;
    let op = solve_case(&case, a.base.reserve)?;
    let modes = analyze(&case, &op).map_err(|e| anyhow!("modal analysis: {e}"))?;
    let mode = min_damping_mode(&modes).map_err(|e| anyhow!("{e}"))?.clone();
    let (ga, gb) = match &a.pair {
        Some(p) => {
            let parts: Vec<&str> = p.split(',').map(str::trim).collect();
            let n = case.generators.len();
            match parts.as_slice() {
                [x, y] => (
                    generator_index(x, n).ok_or_else(|| anyhow!("unknown generator `{x}`"))?,
                    generator_index(y, n).ok_or_else(|| anyhow!("unknown generator `{y}`"))?,
                ),
                _ => bail!("--pair expects two generator labels, e.g. G1,G3"),
            }
        }
        None => default_pair(&mode),
    };
    let mut spec = FaultSpec::new(a.bus, a.start, a.duration, a.horizon);
    spec.step = a.h;
    let resp = fault_simulate(&case, &op, &spec).map_err(|e| anyhow!("fault simulation: {e}"))?;
    let ids: Vec<String> = (0..case.generators.len()).map(NetworkCase::generator_label).collect();

    let zeta_decrement = if resp.unstable {
        None
    } else {
        let (t, sig) = resp.normalized_relative_angle(ga, gb);
        let dt = if t.len() > 1 { t[1] - t[0] } else { a.h };
        Some(trajectory_damping(&sig, dt, mode.frequency_hz).map_err(|e| anyhow!("log decrement: {e}"))?)
    };
    writeln!(
        stdout,
        "dominant mode {:.4} Hz, eigen zeta {:.5}; pair {}-{}",
        mode.frequency_hz, mode.damping_ratio, ids[ga], ids[gb]
    )?;
    match zeta_decrement {
        Some(z) => writeln!(stdout, "log-decrement zeta {z:.5}")?,
        None => writeln!(stdout, "loss of synchronism at t={:.3} s", resp.times.last().copied().unwrap_or(0.0))?,
    }
    if let Some(dir) = out_dir(&a.base.out)? {
        let mut header = vec!["t".to_string()];
        for id in &ids {
            header.push(format!("gen_{id}_delta"));
            header.push(format!("gen_{id}_omega"));
        }
        let rows: Vec<Vec<String>> = resp
            .times
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut r = vec![((t * 1000.0).round() as i64).to_string()];
                for g in 0..ids.len() {
                    r.push(f(resp.delta[k][g]));
                    r.push(f(resp.speed[k][g]));
                }
                r
            })
            .collect();
        csv_io::write_table(&mut create(&dir.join("trajectory.csv"))?, &header, &rows)?;
        write_json(
            &dir.join("fault.json"),
            &json!({
                "bus": a.bus,
                "duration_s": a.duration,
                "pair": [ids[ga], ids[gb]],
                "unstable": resp.unstable,
                "zeta_decrement": zeta_decrement,
                "zeta_eigen": mode.damping_ratio,
                "frequency_hz": mode.frequency_hz,
            }),
        )?;
    }
    if resp.unstable {
        bail!("system lost synchronism after the fault");
    }
    Ok(())
}
