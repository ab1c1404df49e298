//! CSV tables: gain curves and calibration pairs in, plot data out.
//!
//! Inputs are read strictly (fixed column count, exact header). Floats are
//! written with 17 significant digits.

use std::path::Path;

use super::stream::{csv_err, fmt_f64};
use super::write_atomic;
use crate::dopa::GainPoint;
use crate::error::{Error, Result};
use crate::estimators::{Histogram, VarianceTrace};

pub const GAIN_HEADER: [&str; 3] = ["p_pump_mw", "g_amp", "g_deamp"];
pub const PAIRS_HEADER: [&str; 2] = ["n_lo", "variance"];

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, &e))
}

fn parse_field(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Csv {
            path: path.into(),
            line,
            reason: format!("field `{name}`: cannot parse {raw:?} as a finite number"),
        })
}

/// Gain-curve CSV: `p_pump_mw,g_amp,g_deamp[,weight]`.
pub fn read_gain_csv(path: &Path) -> Result<Vec<GainPoint>> {
    let mut rdr = reader(path)?;
    let cols: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, &e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let weighted = match cols.len() {
        3 if cols == GAIN_HEADER => false,
        4 if cols[..3] == GAIN_HEADER && cols[3] == "weight" => true,
        _ => {
            return Err(Error::Csv {
                path: path.into(),
                line: 1,
                reason: format!("expected header `p_pump_mw,g_amp,g_deamp[,weight]`, found `{}`", cols.join(",")),
            })
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, &e))?;
        let line = row.position().map_or(0, |p| p.line());
        let mut p = GainPoint::new(
            parse_field(path, line, "p_pump_mw", &row[0])?,
            parse_field(path, line, "g_amp", &row[1])?,
            parse_field(path, line, "g_deamp", &row[2])?,
        );
        if weighted {
            p.weight = parse_field(path, line, "weight", &row[3])?;
        }
        if p.p_pump_mw < 0.0 || p.g_amp <= 0.0 || p.g_deamp <= 0.0 || p.weight < 0.0 {
            return Err(Error::Csv {
                path: path.into(),
                line,
                reason: "pump power and weight must be >= 0, gains > 0".into(),
            });
        }
        out.push(p);
    }
    Ok(out)
}

/// Calibration pairs CSV: `n_lo,variance` (raw units).
pub fn read_pairs_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = reader(path)?;
    let cols = rdr.headers().map_err(|e| csv_err(path, &e))?.clone();
    if cols.iter().collect::<Vec<_>>() != PAIRS_HEADER {
        return Err(Error::Csv {
            path: path.into(),
            line: 1,
            reason: "expected header `n_lo,variance`".into(),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, &e))?;
        let line = row.position().map_or(0, |p| p.line());
        out.push((
            parse_field(path, line, "n_lo", &row[0])?,
            parse_field(path, line, "variance", &row[1])?,
        ));
    }
    Ok(out)
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, &e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, &e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn write_pairs_csv(path: &Path, pairs: &[(f64, f64)]) -> Result<()> {
    write_rows(path, &PAIRS_HEADER, pairs.iter().map(|&(n, v)| vec![fmt_f64(n), fmt_f64(v)]))
}

pub fn write_gain_csv(path: &Path, points: &[GainPoint]) -> Result<()> {
    write_rows(
        path,
        &["p_pump_mw", "g_amp", "g_deamp", "weight"],
        points
            .iter()
            .map(|p| vec![fmt_f64(p.p_pump_mw), fmt_f64(p.g_amp), fmt_f64(p.g_deamp), fmt_f64(p.weight)]),
    )
}

/// `block_index,phase_mid,variance_snu,stderr_snu`
pub fn write_trace_csv(path: &Path, traces: &[VarianceTrace]) -> Result<()> {
    write_rows(
        path,
        &["block_index", "phase_mid", "variance_snu", "stderr_snu"],
        traces.iter().map(|t| {
            vec![
                t.block_index.to_string(),
                fmt_f64(t.phase_mid),
                fmt_f64(t.variance_snu),
                fmt_f64(t.stderr_snu),
            ]
        }),
    )
}

/// `edge,count,model`, one row per bin with its left edge.
pub fn write_hist_csv(path: &Path, h: &Histogram) -> Result<()> {
    write_rows(
        path,
        &["edge", "count", "model"],
        h.counts
            .iter()
            .zip(&h.model)
            .zip(&h.edges)
            .map(|((c, m), e)| vec![fmt_f64(*e), c.to_string(), fmt_f64(*m)]),
    )
}

/// `p_pump_mw,g_amp_model,g_deamp_model`
pub fn write_model_curve(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    write_rows(
        path,
        &["p_pump_mw", "g_amp_model", "g_deamp_model"],
        rows.iter().map(|&(p, a, d)| vec![fmt_f64(p), fmt_f64(a), fmt_f64(d)]),
    )
}
