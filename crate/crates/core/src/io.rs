//! CSV and JSON files read and written by the command layer.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseControl;
use crate::error::{Error, Result};
use crate::measures::ParticleMeasure;
use crate::optimality::ResidualReport;
use crate::optimizer::StabilityRow;
use crate::transport::Trajectory;

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn numbers(record: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| Error::Csv {
                line,
                message: format!("'{f}' is not a number"),
            })
        })
        .collect()
}

/// Parsed numeric rows, each with its line number.
type NumericRows = Vec<(usize, Vec<f64>)>;

fn rows(path: &Path) -> Result<(csv::StringRecord, NumericRows)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        out.push((line, numbers(&rec, line)?));
    }
    Ok((header, out))
}

/// Columns `x1..xn,w`.
pub fn read_particles(path: &Path) -> Result<ParticleMeasure> {
    let (header, rows) = rows(path)?;
    if header.len() < 2 || &header[header.len() - 1] != "w" {
        return Err(Error::Csv {
            line: 1,
            message: "expected header x1,...,xn,w".into(),
        });
    }
    let dim = header.len() - 1;
    let mut points = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for (_, r) in rows {
        points.extend_from_slice(&r[..dim]);
        weights.push(r[dim]);
    }
    ParticleMeasure::from_flat(dim, points, weights)
}

pub fn write_particles(path: &Path, theta: &ParticleMeasure) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = (1..=theta.dim()).map(|k| format!("x{k}")).collect();
    header.push("w".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..theta.len() {
        let mut row: Vec<String> = theta.point(i).iter().map(f64::to_string).collect();
        row.push(theta.weight(i).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t_start,t_end,u1..um`, one row per cell.
pub fn write_control(path: &Path, u: &PiecewiseControl) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t_start".to_string(), "t_end".to_string()];
    header.extend((1..=u.control_dim()).map(|k| format!("u{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, v) in u.values().iter().enumerate() {
        let mut row = vec![u.grid()[i].to_string(), u.grid()[i + 1].to_string()];
        row.extend(v.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_control(path: &Path) -> Result<PiecewiseControl> {
    let (header, rows) = rows(path)?;
    if header.len() < 3 || &header[0] != "t_start" || &header[1] != "t_end" {
        return Err(Error::Csv {
            line: 1,
            message: "expected header t_start,t_end,u1,...".into(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            line: 2,
            message: "control has no cells".into(),
        });
    }
    let mut grid = vec![rows[0].1[0]];
    let mut values = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let last = *grid.last().expect("nonempty");
        if r[0] != last {
            return Err(Error::Csv {
                line,
                message: format!("cell starts at {} but the previous one ends at {last}", r[0]),
            });
        }
        grid.push(r[1]);
        values.push(r[2..].to_vec());
    }
    PiecewiseControl::new(grid, values)
}

pub fn write_residuals(path: &Path, report: &ResidualReport) -> Result<()> {
    let mut w = writer(path)?;
    let m = report.rows.first().map_or(0, |r| r.argmin.len());
    let mut header: Vec<String> = ["tau", "res", "outflow_ubar", "outflow_min"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=m).map(|k| format!("argmin{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.rows {
        let mut row = vec![r.tau.to_string(), r.res.to_string(), r.outflow_ubar.to_string(), r.outflow_min.to_string()];
        row.extend(r.argmin.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct StabilityCsvRow {
    eps: f64,
    value: f64,
    rebased_value: f64,
    residual_max: f64,
}

pub fn write_stability(path: &Path, rows: &[StabilityRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(StabilityCsvRow {
            eps: r.eps,
            value: r.value,
            rebased_value: r.rebased_value,
            residual_max: r.residual_max,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,particle,x1..xn,w`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let dim = traj.terminal().dim();
    let mut header = vec!["t".to_string(), "particle".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.push("w".into());
    w.write_record(&header).map_err(csv_err)?;
    for (t, snap) in traj.times().iter().zip(traj.snapshots()) {
        for i in 0..snap.len() {
            let mut row = vec![t.to_string(), i.to_string()];
            row.extend(snap.point(i).iter().map(f64::to_string));
            row.push(snap.weight(i).to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary written by `run`, `check` and `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub method: String,
    pub eps: Option<f64>,
    pub value: f64,
    pub rebased_value: Option<f64>,
    pub residual_max: Option<f64>,
    /// Wall time, recorded only on request so that reruns stay byte-identical.
    pub runtime_ms: Option<u64>,
    pub control_file: String,
}

pub fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
