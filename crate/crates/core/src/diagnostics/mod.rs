//! Per-step learning diagnostics, correlation statistics of the logged
//! series, and the long-run steady-state audit.

mod audit;
mod series;

use std::io::{BufRead, Write};

pub use audit::{longrun_audit, AuditArm, AuditConfig, AuditReport, Verdict};
pub use series::{acf, analysis_window, ccf, cross_correlation, pacf, series_stats, SeriesStats, DEFAULT_MAXLAG};

use crate::error::{Error, Result};
use crate::numerics::{batch_energies, Energy, Tensor};

/// Scalars logged at one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: usize,
    /// Energy gap `mean_pos - mean_neg`.
    pub d: f64,
    /// Mean gradient norm along the negative chains.
    pub v: f64,
    /// Per-step drift displacement `eps^2 / 2 * v`.
    pub r: f64,
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub accept_rate: f64,
}

pub const CSV_HEADER: &str = "t,d,v,r,mean_pos,mean_neg,accept_rate";

/// Drift displacement per Langevin step for gradient magnitude `v`.
pub fn displacement(epsilon: f64, v: f64) -> f64 {
    0.5 * epsilon * epsilon * v
}

impl DiagnosticsRecord {
    pub fn is_finite(&self) -> bool {
        [self.d, self.v, self.r, self.mean_pos, self.mean_neg, self.accept_rate]
            .iter()
            .all(|x| x.is_finite())
    }

    /// CSV row; floats use the shortest representation that round-trips.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t, self.d, self.v, self.r, self.mean_pos, self.mean_neg, self.accept_rate
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(Error::Config(format!("expected 7 diagnostics fields, found {}", f.len())));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| Error::Config(format!("bad diagnostics value `{}`", f[i])))
        };
        Ok(Self {
            t: f[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad step index `{}`", f[0])))?,
            d: num(1)?,
            v: num(2)?,
            r: num(3)?,
            mean_pos: num(4)?,
            mean_neg: num(5)?,
            accept_rate: num(6)?,
        })
    }
}

pub fn write_csv<W: Write>(log: &[DiagnosticsRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for rec in log {
        writeln!(w, "{}", rec.csv_row())?;
    }
    w.flush()
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config("missing diagnostics header".into())),
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<diagnostics csv>", e))?;
        if !line.trim().is_empty() {
            out.push(DiagnosticsRecord::parse_csv_row(&line)?);
        }
    }
    Ok(out)
}

/// Batch estimate of the energy gap: mean energy of `positives` minus mean
/// energy of `negatives`. Negative values are expansion steps, positive ones
/// contraction steps.
pub fn energy_gap<E: Energy + ?Sized>(pot: &E, positives: &Tensor, negatives: &Tensor) -> Result<f64> {
    if positives.batch_len() == 0 || negatives.batch_len() == 0 {
        return Err(Error::Precondition("energy gap needs nonempty batches".into()));
    }
    let mean = |b: &Tensor| -> Result<f64> {
        let e = batch_energies(pot, b)?;
        Ok(e.iter().sum::<f64>() / e.len() as f64)
    };
    Ok(mean(positives)? - mean(negatives)?)
}

/// Mean and population standard deviation.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
