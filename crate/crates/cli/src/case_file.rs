//! Plain-text case format.
//!
//! ```text
//! [SYSTEM]
//! base_mva 100
//! frequency_hz 60
//! damper_tau 0.018
//! [BUS]
//! # id kind(slack|pv|pq) voltage
//! [BRANCH]
//! # from to r x b [in_service(1|0)]
//! [GEN]
//! # bus H D xd' Pmax Pmin station dispatchable(1|0) [P_set]
//! [LOAD]
//! # bus P Q
//! ```
//!
//! Quantities are per unit on the system base, H in seconds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dampopt_core::grid::{Branch, Bus, BusKind, Generator, Load};
use dampopt_core::NetworkCase;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{0}")]
    Semantic(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    System,
    Bus,
    Branch,
    Gen,
    Load,
}

struct Fields<'a> {
    line: usize,
    raw: &'a str,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, raw: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in raw.char_indices() {
            match (c.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    tokens.push((s, &raw[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push((s, &raw[s..]));
        }
        Self { line, raw, tokens }
    }

    fn err(&self, idx: usize, message: impl Into<String>) -> CaseError {
        let column = self.tokens.get(idx).map_or(self.raw.len(), |t| t.0) + 1;
        CaseError::Syntax { line: self.line, column, message: message.into() }
    }

    fn arity(&self, min: usize, max: usize, what: &str) -> Result<(), CaseError> {
        let n = self.tokens.len();
        if n < min || n > max {
            let expect = if min == max { format!("{min}") } else { format!("{min} to {max}") };
            return Err(self.err(n.min(max), format!("{what} record needs {expect} fields, found {n}")));
        }
        Ok(())
    }

    fn num(&self, idx: usize, name: &str) -> Result<f64, CaseError> {
        let tok = self.tokens[idx].1;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(idx, format!("{name}: expected a number, found `{tok}`"))),
        }
    }

    fn id(&self, idx: usize, name: &str) -> Result<u32, CaseError> {
        let tok = self.tokens[idx].1;
        tok.parse::<u32>()
            .map_err(|_| self.err(idx, format!("{name}: expected a non-negative integer, found `{tok}`")))
    }

    fn flag(&self, idx: usize, name: &str) -> Result<bool, CaseError> {
        match self.tokens[idx].1 {
            "1" | "true" | "yes" => Ok(true),
            "0" | "false" | "no" => Ok(false),
            tok => Err(self.err(idx, format!("{name}: expected 1 or 0, found `{tok}`"))),
        }
    }
}

/// Parses a case and checks every structural invariant.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let mut case = NetworkCase {
        base_mva: 100.0,
        frequency_hz: 60.0,
        damper_tau: 0.0,
        buses: Vec::new(),
        branches: Vec::new(),
        generators: Vec::new(),
        loads: Vec::new(),
    };
    let mut section = Section::None;
    let mut bus_lines: Vec<usize> = Vec::new();
    let mut slack_lines: Vec<usize> = Vec::new();
    let mut refs: Vec<(usize, &str, u32)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            section = match trimmed.to_ascii_uppercase().as_str() {
                "[SYSTEM]" => Section::System,
                "[BUS]" => Section::Bus,
                "[BRANCH]" => Section::Branch,
                "[GEN]" => Section::Gen,
                "[LOAD]" => Section::Load,
                other => {
                    let column = content.find('[').unwrap_or(0) + 1;
                    return Err(CaseError::Syntax { line, column, message: format!("unknown section {other}") });
                }
            };
            continue;
        }
        let f = Fields::new(line, content);
        match section {
            Section::None => return Err(f.err(0, "record outside of any section")),
            Section::System => {
                f.arity(2, 2, "system")?;
                let value = f.num(1, f.tokens[0].1)?;
                match f.tokens[0].1 {
                    "base_mva" => case.base_mva = value,
                    "frequency_hz" => case.frequency_hz = value,
                    "damper_tau" => case.damper_tau = value,
                    key => return Err(f.err(0, format!("unknown system parameter `{key}`"))),
                }
            }
            Section::Bus => {
                f.arity(3, 3, "bus")?;
                let kind = match f.tokens[1].1.to_ascii_lowercase().as_str() {
                    "slack" => BusKind::Slack,
                    "pv" => BusKind::Pv,
                    "pq" => BusKind::Pq,
                    tok => return Err(f.err(1, format!("bus kind must be slack, pv or pq, found `{tok}`"))),
                };
                let id = f.id(0, "bus id")?;
                if let Some(prev) = case.buses.iter().position(|b| b.id == id) {
                    return Err(CaseError::Semantic(format!(
                        "bus {id} defined twice (lines {} and {line})",
                        bus_lines[prev]
                    )));
                }
                if kind == BusKind::Slack {
                    slack_lines.push(line);
                }
                case.buses.push(Bus { id, kind, voltage: f.num(2, "voltage")? });
                bus_lines.push(line);
            }
            Section::Branch => {
                f.arity(5, 6, "branch")?;
                let br = Branch {
                    from: f.id(0, "from bus")?,
                    to: f.id(1, "to bus")?,
                    r: f.num(2, "r")?,
                    x: f.num(3, "x")?,
                    b: f.num(4, "b")?,
                    in_service: if f.tokens.len() == 6 { f.flag(5, "in service")? } else { true },
                };
                refs.push((line, "branch", br.from));
                refs.push((line, "branch", br.to));
                case.branches.push(br);
            }
            Section::Gen => {
                f.arity(8, 9, "generator")?;
                let g = Generator {
                    bus: f.id(0, "bus")?,
                    inertia: f.num(1, "H")?,
                    damping: f.num(2, "D")?,
                    xd_prime: f.num(3, "xd'")?,
                    p_max: f.num(4, "Pmax")?,
                    p_min: f.num(5, "Pmin")?,
                    station: f.tokens[6].1.to_string(),
                    dispatchable: f.flag(7, "dispatchable")?,
                    p_set: if f.tokens.len() == 9 { f.num(8, "P_set")? } else { 0.0 },
                };
                refs.push((line, "generator", g.bus));
                case.generators.push(g);
            }
            Section::Load => {
                f.arity(3, 3, "load")?;
                let l = Load { bus: f.id(0, "bus")?, p: f.num(1, "P")?, q: f.num(2, "Q")? };
                refs.push((line, "load", l.bus));
                case.loads.push(l);
            }
        }
    }

    if slack_lines.len() > 1 {
        let lines: Vec<String> = slack_lines.iter().map(|l| l.to_string()).collect();
        return Err(CaseError::Semantic(format!("more than one slack bus (lines {})", lines.join(", "))));
    }
    if slack_lines.is_empty() {
        return Err(CaseError::Semantic("no slack bus".into()));
    }
    let ids: BTreeMap<u32, ()> = case.buses.iter().map(|b| (b.id, ())).collect();
    for (line, what, bus) in refs {
        if !ids.contains_key(&bus) {
            return Err(CaseError::Semantic(format!("line {line}: {what} references unknown bus {bus}")));
        }
    }
    case.validate().map_err(|e| CaseError::Semantic(e.to_string()))?;
    Ok(case)
}

pub fn read_case(path: &Path) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_case(&text)
}

/// Writes a case in the format read by [`parse_case`]; numbers round-trip exactly.
pub fn write_case(case: &NetworkCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[SYSTEM]");
    let _ = writeln!(s, "base_mva {}", case.base_mva);
    let _ = writeln!(s, "frequency_hz {}", case.frequency_hz);
    let _ = writeln!(s, "damper_tau {}", case.damper_tau);
    let _ = writeln!(s, "\n[BUS]\n# id kind voltage");
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        };
        let _ = writeln!(s, "{} {} {}", b.id, kind, b.voltage);
    }
    let _ = writeln!(s, "\n[BRANCH]\n# from to r x b in_service");
    for br in &case.branches {
        let _ = writeln!(s, "{} {} {} {} {} {}", br.from, br.to, br.r, br.x, br.b, u8::from(br.in_service));
    }
    let _ = writeln!(s, "\n[GEN]\n# bus H D xd Pmax Pmin station dispatchable P_set");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            g.bus,
            g.inertia,
            g.damping,
            g.xd_prime,
            g.p_max,
            g.p_min,
            g.station,
            u8::from(g.dispatchable),
            g.p_set
        );
    }
    let _ = writeln!(s, "\n[LOAD]\n# bus P Q");
    for l in &case.loads {
        let _ = writeln!(s, "{} {} {}", l.bus, l.p, l.q);
    }
    s
}
