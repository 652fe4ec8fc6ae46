//! Run traces on disk.
//!
//! `<name>.csv` holds one row per epoch and is byte-stable for a fixed seed.
//! Wall-clock times go to `<name>.log`; run metadata to `<name>.meta`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solvers::RunTrace;

pub const TRACE_HEADER: &str = "epoch,xi,xi_clamped,reset_size,h_norm_sq,objective,cum_ce,cum_opt";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub xi: usize,
    pub xi_clamped: bool,
    pub reset_size: usize,
    pub h_norm_sq: f64,
    pub objective: f64,
    pub cum_ce: u64,
    pub cum_opt: u64,
}

pub fn trace_csv<P>(trace: &RunTrace<P>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.xi, r.xi_clamped as u8, r.reset_size, r.h_norm_sq, r.objective, r.cum_ce, r.cum_opt
        )
        .unwrap();
    }
    out
}

/// Parses the output of [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |row: usize, column: usize, message: String| Error::Parse {
        path: "trace".into(),
        row,
        column,
        message,
    };
    let header = rdr.headers().map_err(|e| bad(1, 0, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(bad(1, 0, format!("expected header {TRACE_HEADER}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| bad(row, 0, e.to_string()))?;
        if rec.len() != 8 {
            return Err(bad(row, 0, format!("expected 8 fields, found {}", rec.len())));
        }
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, c: usize, row: usize) -> Result<T> {
            rec[c].parse().map_err(|_| Error::Parse {
                path: "trace".into(),
                row,
                column: c + 1,
                message: format!("cannot parse {:?}", &rec[c]),
            })
        }
        let clamped: u8 = field(&rec, 2, row)?;
        if clamped > 1 {
            return Err(bad(row, 3, "xi_clamped must be 0 or 1".into()));
        }
        rows.push(TraceRow {
            epoch: field(&rec, 0, row)?,
            xi: field(&rec, 1, row)?,
            xi_clamped: clamped == 1,
            reset_size: field(&rec, 3, row)?,
            h_norm_sq: field(&rec, 4, row)?,
            objective: field(&rec, 5, row)?,
            cum_ce: field(&rec, 6, row)?,
            cum_opt: field(&rec, 7, row)?,
        });
    }
    Ok(rows)
}

/// Writes the trace CSV at `path` with `.meta` and `.log` sidecars.
/// `meta` lines are written verbatim before the computed ones.
pub fn write_trace_files<P>(path: &Path, trace: &RunTrace<P>, meta: &[(String, String)]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, trace_csv(trace)).map_err(|e| Error::io(path, e))?;

    let mut m = String::new();
    for (k, v) in meta {
        writeln!(m, "{k} = {v}").unwrap();
    }
    writeln!(m, "strategy = {}", trace.label).unwrap();
    writeln!(m, "gamma_inner = {}", trace.gamma_inner).unwrap();
    writeln!(m, "initial_objective = {}", trace.initial_objective).unwrap();
    writeln!(m, "warmstart_ce = {}", trace.warmstart.ce).unwrap();
    writeln!(m, "warmstart_opt = {}", trace.warmstart.opt).unwrap();
    if let Some((t, _)) = &trace.terminal {
        writeln!(m, "terminal_epoch = {t}").unwrap();
    }
    let meta_path = path.with_extension("meta");
    std::fs::write(&meta_path, m).map_err(|e| Error::io(&meta_path, e))?;

    let mut log = String::from("epoch,elapsed_s\n");
    for r in &trace.records {
        writeln!(log, "{},{:.6}", r.epoch, r.elapsed.as_secs_f64()).unwrap();
    }
    let log_path = path.with_extension("log");
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))
}
