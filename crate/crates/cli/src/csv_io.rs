//! CSV inputs and outputs. Every file starts with a header row; columns are
//! matched by name on input and written in a fixed order on output.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dampopt_core::estimator::SensitivityEstimate;
use dampopt_core::redispatch::DispatchBounds;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
}

fn field(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<f64> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| anyhow!("{}:{line}: missing field", path.display()))?;
    raw.parse()
        .map_err(|_| anyhow!("{}:{line}: `{raw}` is not a number", path.display()))
}

/// Two named numeric columns.
pub fn read_pairs(path: &Path, names: (&str, &str)) -> Result<Vec<(f64, f64)>> {
    let mut rd = reader(path)?;
    let headers = rd.headers()?.clone();
    let a = column(&headers, names.0, path)?;
    let b = column(&headers, names.1, path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        out.push((field(&rec, a, path)?, field(&rec, b, path)?));
    }
    Ok(out)
}

/// Measurement window: `t,zeta,<feature ids...>` with feature levels per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub feature_ids: Vec<String>,
    pub rows: Vec<(f64, f64, Vec<f64>)>,
}

pub fn read_samples(path: &Path) -> Result<SampleTable> {
    let mut rd = reader(path)?;
    let headers = rd.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "t" || &headers[1] != "zeta" {
        bail!("{}: expected header `t,zeta,<feature ids>`", path.display());
    }
    let feature_ids: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let x = (2..headers.len()).map(|i| field(&rec, i, path)).collect::<Result<Vec<_>>>()?;
        rows.push((field(&rec, 0, path)?, field(&rec, 1, path)?, x));
    }
    Ok(SampleTable { feature_ids, rows })
}

pub fn write_samples(out: &mut impl Write, table: &SampleTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "zeta".to_string()];
    header.extend(table.feature_ids.iter().cloned());
    w.write_record(&header)?;
    for (t, z, x) in &table.rows {
        let mut rec = vec![t.to_string(), z.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimate(out: &mut impl Write, est: &SensitivityEstimate) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_id", "psi_hat", "ensemble_std"])?;
    for ((id, p), s) in est.feature_ids.iter().zip(&est.psi).zip(&est.spread) {
        w.write_record([id.clone(), p.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Side-car metadata of an estimate.
pub fn estimate_json(est: &SensitivityEstimate) -> serde_json::Value {
    serde_json::json!({
        "samples": est.samples,
        "condition": est.condition,
        "replicates": est.replicates,
        "seed": est.seed,
        "flagged": est.flagged,
    })
}

/// Sensitivities from an estimate (`psi_hat`) or oracle (`psi`) table.
pub fn read_psi(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rd = reader(path)?;
    let headers = rd.headers()?.clone();
    let id = column(&headers, "feature_id", path)?;
    let psi = column(&headers, "psi_hat", path).or_else(|_| column(&headers, "psi", path))?;
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        ids.push(rec.get(id).unwrap_or_default().to_string());
        vals.push(field(&rec, psi, path)?);
    }
    Ok((ids, vals))
}

pub fn write_psi(out: &mut impl Write, ids: &[String], psi: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_id", "psi"])?;
    for (id, p) in ids.iter().zip(psi) {
        w.write_record([id.clone(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Bounds table `feature_id,lower,upper,planned[,at_limit]`; returns bounds and planned increments.
pub fn read_bounds(path: &Path) -> Result<(DispatchBounds, Vec<f64>)> {
    let mut rd = reader(path)?;
    let headers = rd.headers()?.clone();
    let id = column(&headers, "feature_id", path)?;
    let lo = column(&headers, "lower", path)?;
    let hi = column(&headers, "upper", path)?;
    let pl = column(&headers, "planned", path)?;
    let fixed = column(&headers, "at_limit", path).ok();
    let mut b = DispatchBounds {
        feature_ids: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        capacity: Vec::new(),
        at_limit: Vec::new(),
    };
    let mut planned = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        b.feature_ids.push(rec.get(id).unwrap_or_default().to_string());
        let (l, u) = (field(&rec, lo, path)?, field(&rec, hi, path)?);
        b.lower.push(l);
        b.upper.push(u);
        b.capacity.push((l, u));
        b.at_limit.push(match fixed {
            Some(i) => field(&rec, i, path)? != 0.0,
            None => false,
        });
        planned.push(field(&rec, pl, path)?);
    }
    Ok((b, planned))
}

pub fn write_bounds(out: &mut impl Write, b: &DispatchBounds, planned: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_id", "lower", "upper", "planned", "at_limit"])?;
    for i in 0..b.len() {
        w.write_record([
            b.feature_ids[i].clone(),
            b.lower[i].to_string(),
            b.upper[i].to_string(),
            planned[i].to_string(),
            u8::from(b.at_limit[i]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generic table writer for fixed-column outputs.
pub fn write_table(out: &mut impl Write, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
