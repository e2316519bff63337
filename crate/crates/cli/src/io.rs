use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &'static str) -> CliResult<T> {
    let text = read_input(path, stage)?;
    serde_json::from_str(&text).map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_input(path: &Path, stage: &'static str) -> CliResult<String> {
    if !path.is_file() {
        return Err(CliError::MissingInput {
            path: path.to_path_buf(),
            stage,
        });
    }
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let malformed = |e: csv::Error| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(malformed)?;
    w.write_record(header).map_err(malformed)?;
    for row in rows {
        w.write_record(&row).map_err(malformed)?;
    }
    w.flush().map_err(io_err(path))
}

/// Rows of a CSV file with a header, as raw strings.
pub fn read_csv(path: &Path, stage: &'static str) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_input(path, stage)?;
    let malformed = |e: csv::Error| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(malformed)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(malformed)?;
    Ok((header, rows))
}

/// Standard file locations under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn tails_csv(&self) -> PathBuf {
        self.root.join("tails.csv")
    }

    pub fn tailclass_json(&self) -> PathBuf {
        self.root.join("tailclass.json")
    }

    pub fn rates_json(&self) -> PathBuf {
        self.root.join("rates.json")
    }

    pub fn backward_dir(&self) -> PathBuf {
        self.root.join("backward")
    }

    pub fn root_dir(&self, index: u64) -> PathBuf {
        self.backward_dir().join(format!("root_{index:03}"))
    }

    pub fn backward_summary_json(&self) -> PathBuf {
        self.root.join("backward_summary.json")
    }

    pub fn chains_csv(&self) -> PathBuf {
        self.root.join("chains.csv")
    }

    pub fn tower_json(&self) -> PathBuf {
        self.root.join("tower.json")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }
}
