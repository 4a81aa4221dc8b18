//! Command implementations behind the `ampsched` binary. Every command
//! writes CSV with a header row; the column order of each row type is the
//! field order of its struct.

pub mod app;
pub mod bench;
pub mod config;
pub mod files;
pub mod simulate;

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use bench::{cmd_bench, BenchConfig, BenchRow};
pub use config::KeyValues;
pub use files::{cmd_dag, cmd_trace, KindRow, SummaryRow};
pub use simulate::{cmd_simulate, SimRow, SimulateConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or config values.
    #[error("usage: {0}")]
    Usage(String),
    /// A result failed its check, e.g. a residual above tolerance.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] ampsched_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(ampsched_core::Error::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Serializes `rows` as CSV with a header row. An empty slice still gets
/// its header, taken from `header`.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_file(path, &to_csv(rows, header)?)
}

/// Parses a comma-separated list such as `64,128,256`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: std::result::Result<Vec<T>, String> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| format!("`{p}`: {e}")))
        .collect();
    match items {
        Ok(v) if v.is_empty() => Err(format!("empty list `{s}`")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("64, 128,").unwrap(), vec![64, 128]);
        assert!(parse_list::<usize>("").is_err());
        assert!(parse_list::<usize>("6x").is_err());
    }

    #[test]
    fn empty_csv_keeps_header() {
        let rows: Vec<BenchRow> = Vec::new();
        assert_eq!(to_csv(&rows, BenchRow::HEADER).unwrap().trim(), BenchRow::HEADER.join(","));
    }
}
