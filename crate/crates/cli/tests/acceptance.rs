//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dampopt::scenario_file::read_scenario;
use dampopt_core::closed_loop::{legality_violations, run};
use dampopt_core::grid::BusKind;
use dampopt_core::estimator::{naer_estimate, weighted_ridge, EstimatorConfig, SampleWindow};
use dampopt_core::redispatch::{build_lp, solve_lp, DispatchBounds, LpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn dampopt(args: &[&str]) -> Result<(String, Duration), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_dampopt"))
        .args(args)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    let took = start.elapsed();
    if !out.status.success() {
        return Err(format!(
            "`dampopt {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), took))
}

/// Rows of a CSV file keyed by header name.
fn table(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = rd.headers().map_err(|e| e.to_string())?.clone();
    rd.records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            Ok(headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or(f64::NAN)
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(took: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        took.as_secs_f64() < limit_s,
        format!("runtime {:.2}s exceeds {limit_s}s", took.as_secs_f64()),
    )
}

fn mode_structure(work: &Path) -> Check {
    let out = work.join("modes");
    let case = data("cases/kundur_2area.case");
    let (_, took) = dampopt(&["modes", "--case", case.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    within_time(took, 1.0)?;
    let rows = table(&out.join("modes.csv"))?;
    ensure(rows.len() == 3, format!("{} oscillatory modes", rows.len()))?;
    let inter: Vec<_> = rows.iter().filter(|r| r["kind"] == "inter-area").collect();
    let local: Vec<_> = rows.iter().filter(|r| r["kind"] == "local").collect();
    ensure(inter.len() == 1 && local.len() == 2, "expected one inter-area and two local modes")?;
    let f_inter = num(inter[0], "freq_hz");
    ensure((0.3..=0.8).contains(&f_inter), format!("inter-area at {f_inter} Hz"))?;
    for m in &local {
        let f = num(m, "freq_hz");
        ensure((0.8..=1.5).contains(&f), format!("local mode at {f} Hz"))?;
    }
    let shape: BTreeMap<&str, f64> = inter[0]["shape"]
        .split_whitespace()
        .filter_map(|p| p.split_once(':'))
        .map(|(g, v)| (g, v.parse().unwrap_or(f64::NAN)))
        .collect();
    let s = |g: &str| shape.get(g).copied().unwrap_or(f64::NAN);
    let area1 = s("G1").signum() == s("G2").signum();
    let area2 = s("G3").signum() == s("G4").signum();
    ensure(area1 && area2 && s("G1").signum() != s("G3").signum(), format!("shape {shape:?}"))?;
    Ok(format!("inter-area {f_inter:.3} Hz, local {:.3}/{:.3} Hz, {:.0} ms",
        num(local[0], "freq_hz"), num(local[1], "freq_hz"), took.as_secs_f64() * 1e3))
}

fn estimator_agreement(work: &Path) -> Check {
    let samples = data("samples/eight_machine_first_step.csv");
    let case = data("cases/eight_machine_first_step.case");
    let est_dir = work.join("estimate8");
    let ora_dir = work.join("oracle8");
    let (_, t1) = dampopt(&[
        "estimate", "--samples", samples.to_str().unwrap(), "--ridge-k", "0", "--ensemble", "100",
        "--forgetting", "1", "--out", est_dir.to_str().unwrap(),
    ])?;
    let (_, t2) = dampopt(&["sens-oracle", "--case", case.to_str().unwrap(), "--out", ora_dir.to_str().unwrap()])?;
    within_time(t1 + t2, 30.0)?;
    let meta = json(&est_dir.join("estimate.json"))?;
    let n = meta["samples"].as_u64().unwrap_or(0);
    ensure(n >= 300, format!("window has {n} samples"))?;
    let est = table(&est_dir.join("estimate.csv"))?;
    let ora = table(&ora_dir.join("psi_oracle.csv"))?;
    ensure(est.len() == ora.len() && !est.is_empty(), "feature sets differ")?;
    let max_oracle = ora.iter().map(|r| num(r, "psi").abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (e, o) in est.iter().zip(&ora) {
        ensure(e["feature_id"] == o["feature_id"], "feature order differs")?;
        let (pe, po) = (num(e, "psi_hat"), num(o, "psi"));
        if po.abs() >= 1e-4 {
            ensure(pe.signum() == po.signum(), format!("{} sign: {pe:.3e} vs {po:.3e}", e["feature_id"]))?;
        }
        worst = worst.max((pe - po).abs());
    }
    ensure(worst <= 0.3 * max_oracle, format!("deviation {worst:.3e} > 30% of {max_oracle:.3e}"))?;
    Ok(format!("{n} samples, max deviation {worst:.2e} vs tolerance {:.2e}", 0.3 * max_oracle))
}

/// Best `psi . y` over the vertices of `lo <= y <= hi` (and `sum y = 0` with balance).
fn enumerate_vertices(psi: &[f64], lo: &[f64], hi: &[f64], balance: bool) -> Option<f64> {
    let m = psi.len();
    let value = |y: &[f64]| psi.iter().zip(y).map(|(p, v)| p * v).sum::<f64>();
    let corner = |mask: u32| -> Vec<f64> { (0..m).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect() };
    let mut best: Option<f64> = None;
    let mut keep = |v: f64| best = Some(best.map_or(v, |b| b.max(v)));
    for mask in 0..(1u32 << m) {
        let y = corner(mask);
        if !balance {
            keep(value(&y));
            continue;
        }
        // With the equality row a vertex has at most one coordinate off its bounds.
        for free in 0..m {
            let mut y = y.clone();
            y[free] = -(0..m).filter(|&i| i != free).map(|i| y[i]).sum::<f64>();
            if y[free] >= lo[free] - 1e-12 && y[free] <= hi[free] + 1e-12 {
                keep(value(&y));
            }
        }
    }
    best
}

fn lp_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut infeasible = 0;
    for case in 0..200 {
        let m = rng.random_range(2..=4);
        let balance = case % 2 == 0;
        let psi: Vec<f64> = (0..m).map(|_| rng.random_range(-0.01..0.01)).collect();
        let lower: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..0.0)).collect();
        let upper: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let planned: Vec<f64> = (0..m).map(|_| rng.random_range(-0.3..0.3)).collect();
        let bounds = DispatchBounds {
            feature_ids: (1..=m).map(|i| format!("G{i}")).collect(),
            lower: lower.clone(),
            upper: upper.clone(),
            capacity: vec![(0.0, 1.0); m],
            at_limit: vec![false; m],
        };
        let lp = build_lp(&psi, &bounds, &planned, balance).map_err(|e| e.to_string())?;
        let sol = solve_lp(&lp);
        let lo: Vec<f64> = (0..m).map(|i| lower[i] - planned[i]).collect();
        let hi: Vec<f64> = (0..m).map(|i| upper[i] - planned[i]).collect();
        let gain: f64 = psi.iter().zip(&planned).map(|(p, o)| p * o).sum();
        match enumerate_vertices(&psi, &lo, &hi, balance) {
            Some(best) => {
                let expect = best + gain;
                ensure(sol.status != LpStatus::Infeasible, format!("instance {case}: solver says infeasible"))?;
                ensure(
                    (sol.delta - expect).abs() <= 1e-9,
                    format!("instance {case}: delta {} vs {expect}", sol.delta),
                )?;
            }
            None => {
                infeasible += 1;
                ensure(sol.status == LpStatus::Infeasible, format!("instance {case}: should be infeasible"))?;
            }
        }
    }
    within_time(start.elapsed(), 10.0)?;
    Ok(format!("200 instances ({infeasible} infeasible), {:.0} ms", start.elapsed().as_secs_f64() * 1e3))
}

fn regression_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let m = rng.random_range(2..=7);
        let psi: Vec<f64> = (0..m).map(|_| rng.random_range(-0.01..0.01)).collect();
        let offset = rng.random_range(0.01..0.05);
        let ids = (1..=m).map(|i| format!("G{i}")).collect();
        let mut window = SampleWindow::new(ids);
        for s in 0..=2 * m {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..9.0)).collect();
            let zeta = offset + psi.iter().zip(&x).map(|(p, v)| p * v).sum::<f64>();
            window.push_level(&x, zeta, s as f64).map_err(|e| e.to_string())?;
        }
        ensure(window.len() == 2 * m, "window size")?;
        let cfg = EstimatorConfig {
            ridge_k: 0.0,
            forgetting: rng.random_range(0.5..=1.0),
            ensemble: 1,
            noise_fraction: 0.0,
            seed: trial,
            condition_cap: f64::INFINITY,
        };
        let est = naer_estimate(&window, &cfg).map_err(|e| e.to_string())?;
        let err = est.psi.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, format!("exact recovery error {worst:.2e}"))?;

    for _ in 0..50 {
        let (n, m) = (rng.random_range(3..20), rng.random_range(2..5));
        let x = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let fit = |w: &[f64], k: f64| weighted_ridge(&x, &y, w, k).map(|(p, _)| p).map_err(|e| e.to_string());
        let mut last = f64::INFINITY;
        for k in [1e-3, 1e-2, 0.1, 1.0, 10.0, 1e3] {
            let norm = fit(&w, k)?.norm();
            ensure(norm <= last * (1.0 + 1e-12), format!("ridge norm grew at k={k}"))?;
            last = norm;
        }
        ensure(fit(&w, 1e12)?.norm() < 1e-9, "ridge does not shrink to zero")?;
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
        if let (Ok(a), Ok(b)) = (fit(&w, 0.0), fit(&scaled, 0.0)) {
            ensure((&a - &b).amax() <= 1e-9 * (1.0 + b.amax()), "weight scaling changed the k=0 fit")?;
        }
        let (a, b) = (fit(&w, 0.3)?, fit(&scaled, 0.3 * c)?);
        ensure((&a - &b).amax() <= 1e-9 * (1.0 + b.amax()), "joint weight/ridge scaling changed the fit")?;
    }
    Ok(format!("max recovery error {worst:.1e}; ridge monotone and weight-invariant on 50 draws"))
}

/// Minute dispatch inside capacity and decision-to-decision moves inside the ramp
/// limit, read back from the output files.
fn file_legality(dir: &Path, scenario: &Path, reserve: bool) -> Result<(), String> {
    let sc = read_scenario(scenario).map_err(|e| format!("{e:#}"))?;
    let case = &sc.case;
    let slack_bus = case.buses.iter().find(|b| b.kind == BusKind::Slack).map(|b| b.id);
    let slack = case.generators.iter().position(|g| Some(g.bus) == slack_bus);
    let headroom = if reserve { 0.2 } else { 0.0 };
    let controlled: Vec<usize> = (0..case.generators.len())
        .filter(|&g| case.generators[g].dispatchable && Some(g) != slack)
        .collect();
    let label = |g: usize| format!("G{}", g + 1);
    let minutes = table(&dir.join("dispatch.csv"))?;
    for row in &minutes {
        for &g in &controlled {
            let gen = &case.generators[g];
            let p = num(row, &label(g));
            let hi = gen.p_max * (1.0 + headroom);
            ensure(
                p >= gen.p_min - 1e-6 && p <= hi + 1e-6,
                format!("minute {}: {} at {p}", row["t_min"], label(g)),
            )?;
        }
    }
    let mut prev: BTreeMap<String, f64> = controlled.iter().map(|&g| (label(g), num(&minutes[0], &label(g)))).collect();
    let mut by_decision: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    for row in table(&dir.join("moves.csv"))? {
        let index = row["index"].parse().map_err(|_| "bad index")?;
        by_decision.entry(index).or_default().insert(row["generator"].clone(), num(&row, "target"));
    }
    for (index, targets) in by_decision {
        for &g in &controlled {
            let Some(&target) = targets.get(&label(g)) else { continue };
            let limit = sc.ramp_limit * case.generators[g].p_max;
            let change = target - prev[&label(g)];
            ensure(change.abs() <= limit + 1e-6, format!("decision {index}: {} moves {change}", label(g)))?;
            prev.insert(label(g), target);
        }
    }
    Ok(())
}

fn damping_recovery(work: &Path) -> Check {
    let scenario = data("scenarios/kundur_day/day.scn");
    let off = work.join("day_off");
    let on = work.join("day_on");
    let (_, t_off) = dampopt(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", off.to_str().unwrap()])?;
    let (_, t_on) = dampopt(&[
        "simulate", "--scenario", scenario.to_str().unwrap(), "--reserve", "--out", on.to_str().unwrap(),
    ])?;
    within_time(t_off.max(t_on), 120.0)?;

    let zeta = table(&off.join("zeta.csv"))?;
    let start = num(&zeta[0], "zeta_true");
    ensure(start < 0.03, format!("day starts at {start}, not below threshold"))?;
    let decisions = table(&off.join("decisions.csv"))?;
    let first = decisions
        .iter()
        .position(|d| d["outcome"] != "not-triggered")
        .ok_or("no trigger")?;
    let steps = decisions[first..]
        .iter()
        .take(10)
        .position(|d| num(d, "zeta_true_after") >= 0.03)
        .map(|i| i + 1)
        .ok_or("true damping stays below 3% for 10 intervals after the first trigger")?;

    file_legality(&off, &scenario, false)?;
    file_legality(&on, &scenario, true)?;
    for reserve in [false, true] {
        let mut sc = read_scenario(&scenario).map_err(|e| format!("{e:#}"))?;
        sc.reserve = reserve;
        let log = run(&sc).map_err(|a| a.error.to_string())?;
        let bad = legality_violations(&sc, &log);
        ensure(bad.is_empty(), format!("legality: {}", bad.first().cloned().unwrap_or_default()))?;
    }

    let last = |dir: &Path| -> Result<f64, String> {
        let z = table(&dir.join("zeta.csv"))?;
        Ok(num(z.last().ok_or("empty zeta.csv")?, "zeta_true"))
    };
    let (z_off, z_on) = (last(&off)?, last(&on)?);
    ensure(z_on > z_off, format!("reserve final {z_on:.5} does not exceed {z_off:.5}"))?;
    Ok(format!(
        "start {start:.4}, >= 3% after {steps} steps, final {z_off:.5} (reserve {z_on:.5}), {:.1} s per day",
        t_off.as_secs_f64()
    ))
}

fn exhausted_capacity(work: &Path) -> Check {
    let scenario = data("scenarios/kundur_day/day_exhausted.scn");
    let out = work.join("exhausted");
    dampopt(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    let decisions = table(&out.join("decisions.csv"))?;
    let zero = decisions.iter().filter(|d| d["outcome"] == "zero-capacity").count();
    ensure(zero > 0, "no zero-capacity outcomes")?;
    let low = decisions
        .iter()
        .filter(|d| d["outcome"] == "zero-capacity" && num(d, "zeta_true") < 0.03)
        .count();
    Ok(format!("{zero} zero-capacity outcomes ({low} below threshold), run completed"))
}

fn fault_validation(work: &Path) -> Check {
    let snaps = work.join("day_off/snapshots");
    let mut took = Duration::ZERO;
    let mut read = |name: &str| -> Result<(f64, f64, f64), String> {
        let case = snaps.join(format!("round1_{name}.case"));
        let out = work.join(format!("fault_{name}"));
        let (_, t) = dampopt(&[
            "fault", "--case", case.to_str().unwrap(), "--bus", "8", "--duration", "0.1", "--out",
            out.to_str().unwrap(),
        ])?;
        took += t;
        let modes_dir = work.join(format!("modes_{name}"));
        dampopt(&["modes", "--case", case.to_str().unwrap(), "--out", modes_dir.to_str().unwrap()])?;
        let least = table(&modes_dir.join("modes.csv"))?
            .iter()
            .map(|r| num(r, "zeta"))
            .fold(f64::INFINITY, f64::min);
        let j = json(&out.join("fault.json"))?;
        ensure(j["unstable"] == false, format!("{name}: lost synchronism"))?;
        Ok((j["zeta_decrement"].as_f64().unwrap_or(f64::NAN), j["zeta_eigen"].as_f64().unwrap_or(f64::NAN), least))
    };
    let (pre, pre_eig, pre_tab) = read("pre")?;
    let (post, post_eig, post_tab) = read("post")?;
    within_time(took, 30.0)?;
    for (eig, tab) in [(pre_eig, pre_tab), (post_eig, post_tab)] {
        ensure((eig - tab).abs() < 5e-5, format!("fault eigen zeta {eig} vs modes table {tab}"))?;
    }
    ensure(post >= pre + 0.005, format!("post {post:.5} < pre {pre:.5} + 0.005"))?;
    ensure((pre - pre_eig).abs() <= 0.01, format!("pre decrement {pre:.5} vs eigen {pre_eig:.5}"))?;
    ensure((post - post_eig).abs() <= 0.01, format!("post decrement {post:.5} vs eigen {post_eig:.5}"))?;
    Ok(format!("pre {pre:.5} (eigen {pre_eig:.5}), post {post:.5} (eigen {post_eig:.5})"))
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn determinism(work: &Path) -> Check {
    let kundur = data("cases/kundur_2area.case");
    let eight = data("cases/eight_machine_first_step.case");
    let samples = data("samples/eight_machine_first_step.csv");
    let scenario = data("scenarios/eight_machine/first_step.scn");
    let bounds = work.join("bounds.csv");
    std::fs::write(&bounds, "feature_id,lower,upper,planned\nG1,-0.4,0.4,0.1\nG2,-0.4,0.4,0\nG3,-0.4,0.4,-0.1\nG4,-0.2,0.4,0\nG5,-0.4,0.4,0\nG6,-0.4,0.4,0\nG7,-0.4,0.1,0\n")
        .map_err(|e| e.to_string())?;
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("powerflow", vec!["powerflow".into(), "--case".into(), kundur.display().to_string()]),
        ("modes", vec!["modes".into(), "--case".into(), kundur.display().to_string()]),
        ("sens-oracle", vec!["sens-oracle".into(), "--case".into(), eight.display().to_string()]),
        ("estimate", vec!["estimate".into(), "--samples".into(), samples.display().to_string(), "--seed".into(), "9".into()]),
        ("optimize-step", vec![
            "optimize-step".into(), "--psi".into(), work.join("estimate8/estimate.csv").display().to_string(),
            "--bounds".into(), bounds.display().to_string(), "--debug-lp".into(),
        ]),
        ("simulate", vec![
            "simulate".into(), "--scenario".into(), scenario.display().to_string(), "--record-windows".into(),
            "--debug-lp".into(),
        ]),
        ("fault", vec!["fault".into(), "--case".into(), kundur.display().to_string(), "--bus".into(), "8".into()]),
    ];
    let mut files = 0;
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = work.join(format!("det_{name}_{rep}"));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            let d = dir.display().to_string();
            a.extend(["--out", &d]);
            let (stdout, _) = dampopt(&a)?;
            let contents: Vec<(PathBuf, Vec<u8>)> = files_under(&dir)
                .into_iter()
                .map(|p| {
                    let bytes = std::fs::read(&p).unwrap_or_default();
                    (p.strip_prefix(&dir).unwrap().to_path_buf(), bytes)
                })
                .collect();
            outputs.push((stdout, contents));
        }
        ensure(!outputs[0].1.is_empty(), format!("{name} wrote no files"))?;
        ensure(outputs[0] == outputs[1], format!("{name} output differs between runs"))?;
        files += outputs[0].1.len();
    }
    // the day run of criterion 5, repeated
    let again = work.join("day_off_again");
    let day = data("scenarios/kundur_day/day.scn");
    dampopt(&["simulate", "--scenario", day.to_str().unwrap(), "--out", again.to_str().unwrap()])?;
    for p in files_under(&work.join("day_off")) {
        let rel = p.strip_prefix(work.join("day_off")).unwrap();
        let other = again.join(rel);
        ensure(
            std::fs::read(&p).ok() == std::fs::read(&other).ok(),
            format!("day rerun differs in {}", rel.display()),
        )?;
    }
    Ok(format!("{} subcommands, {files} files byte-identical; day rerun identical", runs.len()))
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<Criterion> = vec![
        ("1 mode structure", Box::new(|| mode_structure(w))),
        ("2 estimator vs oracle", Box::new(|| estimator_agreement(w))),
        ("3 LP vs vertex enumeration", Box::new(lp_equivalence)),
        ("4 exact regression recovery", Box::new(regression_properties)),
        ("5 closed-loop damping recovery", Box::new(|| damping_recovery(w))),
        ("6 exhausted capacity", Box::new(|| exhausted_capacity(w))),
        ("7 fault response", Box::new(|| fault_validation(w))),
        ("8 determinism", Box::new(|| determinism(w))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
