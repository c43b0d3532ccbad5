//! Dataset sources: the built-in generators and CSV files.
//!
//! A dataset file has a header row with feature columns `x0, x1, …` and an
//! optional label column `y` (a class index for classification).

use std::path::Path;

use serde::{Deserialize, Serialize};
use tfb_core::data::{toy_blobs, toy_cubic, Dataset, Targets};
use tfb_core::netcore::Task;

use crate::error::{CliError, CliResult};
use crate::table::{csv_error, fmt_float, write_csv};

/// Where a dataset comes from; stored in checkpoints so it can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSpec {
    ToyCubic {
        seed: u64,
    },
    ToyBlobs {
        classes: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
    },
    File {
        path: String,
        task: Task,
        classes: usize,
    },
}

impl DataSpec {
    pub fn task(&self) -> Task {
        match self {
            DataSpec::ToyCubic { .. } => Task::Regression,
            DataSpec::ToyBlobs { .. } => Task::Classification,
            DataSpec::File { task, .. } => *task,
        }
    }

    pub fn load(&self) -> CliResult<Dataset> {
        match self {
            DataSpec::ToyCubic { seed } => Ok(toy_cubic(*seed)),
            DataSpec::ToyBlobs {
                classes,
                per_class,
                separation,
                seed,
            } => Ok(toy_blobs(*classes, *per_class, *separation, *seed)?),
            DataSpec::File {
                path,
                task,
                classes,
            } => read_dataset(Path::new(path), *task, *classes),
        }
    }
}

pub fn read_dataset(path: &Path, task: Task, classes: usize) -> CliResult<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_col = header.iter().position(|h| h.trim() == "y");
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != label_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(CliError::format(path, "no feature columns"));
    }
    let mut inputs = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let parse = |c: usize| {
            field(c).parse::<f64>().map_err(|_| {
                CliError::format(path, format!("row {}: bad number {:?}", line + 1, field(c)))
            })
        };
        inputs.push(
            feature_cols
                .iter()
                .map(|&c| parse(c))
                .collect::<CliResult<Vec<_>>>()?,
        );
        if let Some(c) = label_col {
            match task {
                Task::Regression => values.push(parse(c)?),
                Task::Classification => labels.push(field(c).parse::<usize>().map_err(|_| {
                    CliError::format(
                        path,
                        format!("row {}: bad class label {:?}", line + 1, field(c)),
                    )
                })?),
            }
        }
    }
    let has_labels = label_col.is_some();
    Ok(match task {
        Task::Regression => Dataset::regression(inputs, has_labels.then_some(values))?,
        Task::Classification => {
            Dataset::classification(inputs, has_labels.then_some(labels), classes)?
        }
    })
}

pub fn write_dataset(path: &Path, data: &Dataset, with_labels: bool) -> CliResult<()> {
    let dim = data.input_dim().unwrap_or(0);
    let mut header: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    let targets = data.targets().filter(|_| with_labels);
    if targets.is_some() {
        header.push("y".into());
    }
    let rows: Vec<Vec<String>> = data
        .inputs()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut row: Vec<String> = x.iter().map(|&v| fmt_float(v)).collect();
            match targets {
                Some(Targets::Values(v)) => row.push(fmt_float(v[i])),
                Some(Targets::Classes(c)) => row.push(c[i].to_string()),
                None => {}
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let data = toy_blobs(3, 4, 2.0, 1).unwrap();
        write_dataset(&path, &data, true).unwrap();
        assert_eq!(read_dataset(&path, Task::Classification, 3).unwrap(), data);
        write_dataset(&path, &data, false).unwrap();
        let unl = read_dataset(&path, Task::Classification, 3).unwrap();
        assert!(unl.targets().is_none());
        assert_eq!(unl.inputs(), data.inputs());
    }

    #[test]
    fn regression_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cubic.csv");
        let data = toy_cubic(2);
        write_dataset(&path, &data, true).unwrap();
        assert_eq!(read_dataset(&path, Task::Regression, 0).unwrap(), data);
    }

    #[test]
    fn bad_label_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,y\n1.0,cat\n").unwrap();
        assert!(matches!(
            read_dataset(&path, Task::Classification, 2),
            Err(CliError::Format { .. })
        ));
    }
}
