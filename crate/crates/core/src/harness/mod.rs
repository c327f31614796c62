//! Seeded, configuration-driven experiments and their CSV output.

mod config;
mod experiments;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

pub use config::{
    default_battery, resolve_dist, split_top_level, BaseSource, ConfigBuilder, ConfigError, ExperimentConfig,
    ExperimentKind, Instance,
};
pub use experiments::{
    run_clique_scaling, run_experiment, run_klift_sweep, run_mc_norm, run_oracle_suite, run_prop_compare,
    CliqueScalingRow, ExperimentOutput, KliftSweepRow, McNormSummary, OracleRow, RowStatus,
};

use crate::bounds::{BoundError, BoundReport};
use crate::distribution::DistError;
use crate::lift::LiftError;
use crate::model::{fmt_real, ModelError};
use crate::moments::MomentError;
use crate::spectral::SpectralError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Real(x) => f.write_str(&fmt_real(*x)),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Cell {
    /// Integers, then booleans, then reals; anything else is text.
    pub fn parse(s: &str) -> Self {
        if let Ok(x) = s.parse::<i64>() {
            Cell::Int(x)
        } else if let Ok(b) = s.parse::<bool>() {
            Cell::Bool(b)
        } else if let Ok(x) = s.parse::<f64>() {
            Cell::Real(x)
        } else {
            Cell::Text(s.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(x) => Some(x as f64),
            Cell::Real(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Cell::Bool(b) => Some(b),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a numeric column, NaN where a cell is not numeric.
    pub fn reals(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column(name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
        out.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|c| c.to_string())).map_err(csv_err)?;
        }
        out.flush().map_err(|e| HarnessError::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, HarnessError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
        let columns = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut table = Table { columns, rows: Vec::new() };
        for rec in rdr.records() {
            table.rows.push(rec.map_err(csv_err)?.iter().map(Cell::parse).collect());
        }
        Ok(table)
    }
}

/// One statistic from one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Free-form grouping label, e.g. `k=3`.
    pub group: String,
    pub trial_index: u64,
    pub stream_id: u64,
    pub statistic: String,
    pub value: f64,
    pub wall_time_ms: Option<f64>,
}

/// Records as a table, in the order given. The wall-time column appears only
/// when every record carries a timing.
pub fn records_table(records: &[RunRecord]) -> Table {
    let timed = !records.is_empty() && records.iter().all(|r| r.wall_time_ms.is_some());
    let mut cols = vec!["group", "trial_index", "stream_id", "statistic", "value"];
    if timed {
        cols.push("wall_time_ms");
    }
    let mut t = Table::new(cols);
    for r in records {
        let mut row = vec![
            Cell::from(r.group.as_str()),
            r.trial_index.into(),
            r.stream_id.into(),
            r.statistic.as_str().into(),
            r.value.into(),
        ];
        if timed {
            row.push(r.wall_time_ms.expect("checked").into());
        }
        t.push(row);
    }
    t
}

/// Bound reports with one column per input; inputs a bound does not use are left empty.
pub fn bounds_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(["bound_name", "value", "sigma", "sigma_star", "n", "k", "eps", "C"]);
    let real = |x: Option<f64>| x.map(Cell::Real).unwrap_or_else(|| Cell::Text(String::new()));
    let int = |x: Option<usize>| x.map(Cell::from).unwrap_or_else(|| Cell::Text(String::new()));
    for r in reports {
        t.push(vec![
            r.name.as_str().into(),
            r.value.into(),
            real(r.sigma),
            real(r.sigma_star),
            int(r.n),
            int(r.k),
            real(r.eps),
            real(r.c),
        ]);
    }
    t
}

/// Writes `table` to `path` as CSV: header then rows, reals to 17 significant digits.
pub fn emit_csv(table: &Table, path: &Path) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io { path: path.display().to_string(), msg: e.to_string() };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    table.write_csv(&mut w)?;
    w.flush().map_err(io)
}

pub fn read_csv(path: &Path) -> Result<Table, HarnessError> {
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    Table::read_csv(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["name", "k", "value", "ok"]);
        t.push(vec!["petersen".into(), 3usize.into(), (1.0f64 / 3.0).into(), true.into()]);
        t.push(vec!["a,b".into(), 5usize.into(), 2.5e-300.into(), false.into()]);
        t.push(vec!["x".into(), 0usize.into(), (-0.1f64).into(), true.into()]);
        t
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&sample(), &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), sample());
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        emit_csv(&Table::new(["a", "b"]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
        let records = records_table(&[]);
        assert_eq!(records.to_csv_string(), "group,trial_index,stream_id,statistic,value\n");
    }

    #[test]
    fn reals_carry_seventeen_digits() {
        let s = sample().to_csv_string();
        assert!(s.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = emit_csv(&sample(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, HarnessError::Io { .. }));
    }

    #[test]
    fn timing_column_is_opt_in() {
        let mut r = RunRecord {
            group: "k=2".into(),
            trial_index: 0,
            stream_id: 0,
            statistic: "spectral_norm".into(),
            value: 1.0,
            wall_time_ms: None,
        };
        assert_eq!(records_table(std::slice::from_ref(&r)).columns.len(), 5);
        r.wall_time_ms = Some(0.5);
        assert_eq!(records_table(&[r]).columns.last().unwrap(), "wall_time_ms");
    }
}
