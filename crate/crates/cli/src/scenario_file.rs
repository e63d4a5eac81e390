//! Scenario files: one `key value...` pair per line, `#` starts a comment.
//!
//! ```text
//! case ../cases/kundur_2area.case
//! horizon_h 24
//! t1_s 900
//! threshold 0.03
//! load 9 profiles/load_bus9.csv        # t_min,factor
//! planned G1 profiles/planned_g1.csv   # t_min,delta_p
//! ```
//!
//! Relative paths are resolved against the scenario file's directory. Scalars
//! not given keep the library defaults.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dampopt_core::closed_loop::{PlannedDispatch, Profile, Scenario, SensitivitySource};

use crate::case_file::read_case;
use crate::csv_io::read_pairs;

fn number<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| anyhow!("line {line}: `{key}` expects a number, got `{v}`"))
}

fn switch(v: &str, line: usize, key: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => bail!("line {line}: `{key}` expects on/off, got `{v}`"),
    }
}

/// Index of a generator label `G<n>` (1-based).
pub fn generator_index(label: &str, count: usize) -> Option<usize> {
    let n: usize = label.strip_prefix('G')?.parse().ok()?;
    (n >= 1 && n <= count).then(|| n - 1)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &dir).with_context(|| format!("in scenario {}", path.display()))
}

pub fn parse_scenario(text: &str, dir: &Path) -> Result<Scenario> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        lines.push((i + 1, words));
    }
    let resolve = |p: &str| -> PathBuf { dir.join(p) };

    let (case_line, case_words) = lines
        .iter()
        .find(|(_, w)| w[0] == "case")
        .ok_or_else(|| anyhow!("scenario names no `case`"))?;
    if case_words.len() != 2 {
        bail!("line {case_line}: `case` expects one path");
    }
    let case_path = resolve(case_words[1]);
    let case = read_case(&case_path).with_context(|| format!("line {case_line}: case {}", case_path.display()))?;
    let mut sc = Scenario::new(case);

    for (line, w) in &lines {
        let (line, key) = (*line, w[0]);
        let args = &w[1..];
        let one = || -> Result<&str> {
            if args.len() == 1 {
                Ok(args[0])
            } else {
                bail!("line {line}: `{key}` expects one value")
            }
        };
        match key {
            "case" => {}
            "horizon_h" => sc.horizon_s = number::<f64>(one()?, line, key)? * 3600.0,
            "horizon_s" => sc.horizon_s = number(one()?, line, key)?,
            "t1_s" => sc.t1_s = number(one()?, line, key)?,
            "threshold" => sc.threshold = number(one()?, line, key)?,
            "sample_s" => sc.sample_s = number(one()?, line, key)?,
            "noise_zeta" => sc.noise_zeta = number(one()?, line, key)?,
            "load_fluctuation" => sc.load_fluctuation = number(one()?, line, key)?,
            "gen_fluctuation" => sc.gen_fluctuation = number(one()?, line, key)?,
            "ramp_limit" => sc.ramp_limit = number(one()?, line, key)?,
            "ramp_rate" => sc.ramp_rate = number(one()?, line, key)?,
            "trigger_window_s" => sc.trigger_window_s = number(one()?, line, key)?,
            "seed" => sc.seed = number(one()?, line, key)?,
            "reserve" => sc.reserve = switch(one()?, line, key)?,
            "balance" => sc.balance = switch(one()?, line, key)?,
            "features" => sc.feature_budget = number(one()?, line, key)?,
            "ridge_k" => sc.estimator.ridge_k = number(one()?, line, key)?,
            "ensemble" => sc.estimator.ensemble = number(one()?, line, key)?,
            "forgetting" => sc.estimator.forgetting = number(one()?, line, key)?,
            "ensemble_noise" => sc.estimator.noise_fraction = number(one()?, line, key)?,
            "condition_cap" => sc.estimator.condition_cap = number(one()?, line, key)?,
            "sensitivity" => {
                sc.sensitivity = match one()? {
                    "estimated" => SensitivitySource::Estimated,
                    "oracle" => SensitivitySource::Oracle,
                    v => bail!("line {line}: unknown sensitivity source `{v}`"),
                }
            }
            "load" => {
                let [bus, file] = args else {
                    bail!("line {line}: `load` expects a bus id and a profile path");
                };
                let bus: u32 = number(bus, line, key)?;
                let points = read_pairs(&resolve(file), ("t_min", "factor")).with_context(|| format!("line {line}"))?;
                let profile = Profile::new(points).map_err(|e| anyhow!("line {line}: {e}"))?;
                let mut found = false;
                for (i, l) in sc.case.loads.iter().enumerate() {
                    if l.bus == bus {
                        sc.load_profiles[i] = profile.clone();
                        found = true;
                    }
                }
                if !found {
                    bail!("line {line}: no load at bus {bus}");
                }
            }
            "planned" => {
                let [gen, file] = args else {
                    bail!("line {line}: `planned` expects a generator label and a profile path");
                };
                let g = generator_index(gen, sc.case.generators.len())
                    .ok_or_else(|| anyhow!("line {line}: unknown generator `{gen}`"))?;
                let steps = read_pairs(&resolve(file), ("t_min", "delta_p")).with_context(|| format!("line {line}"))?;
                sc.planned[g] = PlannedDispatch { steps };
            }
            _ => bail!("line {line}: unknown key `{key}`"),
        }
    }
    sc.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(sc)
}
