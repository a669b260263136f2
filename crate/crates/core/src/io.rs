//! Dataset files and report writing.
//!
//! Datasets are read from CSV (columns `x_1..x_p`, `y_1..y_d`, in any order)
//! or JSON (`{"n", "p", "d", "x": [[..]], "y": [[..]]}`). Every output file is
//! written to a temporary sibling first and renamed into place, so readers
//! never observe a partially written report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Dataset, ModelError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// Chosen from the file extension.
    #[default]
    Auto,
    Csv,
    Json,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonDataset {
    n: usize,
    p: usize,
    d: usize,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

/// Reads a dataset file.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, IoError> {
    let format = match format {
        DatasetFormat::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DatasetFormat::Json,
            Some(e) if e.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => {
                return Err(IoError::Format {
                    path: path.to_path_buf(),
                    message: "cannot infer the dataset format; use a .csv or .json extension".into(),
                })
            }
        },
        f => f,
    };
    match format {
        DatasetFormat::Json => load_json(path),
        _ => load_csv(path),
    }
}

fn load_json(path: &Path) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let raw: JsonDataset = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = raw.x.len() != raw.n
        || raw.y.len() != raw.n
        || raw.x.iter().any(|r| r.len() != raw.p)
        || raw.y.iter().any(|r| r.len() != raw.d);
    if bad {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!(
                "declared shape n={}, p={}, d={} does not match the arrays",
                raw.n, raw.p, raw.d
            ),
        });
    }
    Ok(Dataset::new(raw.x, raw.y)?)
}

/// Position of each `{prefix}{k}` column, `k = 1, 2, ...`, in the header.
fn indexed_columns(header: &csv::StringRecord, prefix: &str, path: &Path) -> Result<Vec<usize>, IoError> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        if let Some(k) = name.trim().strip_prefix(prefix) {
            let k: usize = k.parse().map_err(|_| IoError::Format {
                path: path.to_path_buf(),
                message: format!("column `{name}` is not of the form {prefix}<index>"),
            })?;
            found.push((k, pos));
        }
    }
    found.sort_unstable();
    for (expected, (k, _)) in (1..).zip(&found) {
        if *k != expected {
            return Err(IoError::Format {
                path: path.to_path_buf(),
                message: format!("{prefix} columns must be numbered 1..k without gaps"),
            });
        }
    }
    if found.is_empty() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!("no {prefix}<index> columns"),
        });
    }
    Ok(found.into_iter().map(|(_, pos)| pos).collect())
}

fn load_csv(path: &Path) -> Result<Dataset, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let xcols = indexed_columns(&header, "x_", path)?;
    let ycols = indexed_columns(&header, "y_", path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |cols: &[usize]| -> Result<Vec<f64>, IoError> {
            cols.iter()
                .map(|&c| {
                    let field = record.get(c).unwrap_or("").trim();
                    field.parse::<f64>().map_err(|_| IoError::Format {
                        path: path.to_path_buf(),
                        message: format!("row {}: `{field}` is not a number", row + 1),
                    })
                })
                .collect()
        };
        x.push(parse(&xcols)?);
        y.push(parse(&ycols)?);
    }
    Ok(Dataset::new(x, y)?)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serializes `rows` as CSV with a header derived from the row type.
pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes)
}

/// Dataset in the CSV layout accepted by [`load_dataset`].
pub fn dataset_csv_bytes(ds: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=ds.p())
        .map(|k| format!("x_{k}"))
        .chain((1..=ds.d()).map(|k| format!("y_{k}")))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (x, y) in ds.x().iter().zip(ds.y()) {
        let fields: Vec<String> = x.iter().chain(y).map(|v| v.to_string()).collect();
        w.write_record(&fields).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    write_atomic(path, &dataset_csv_bytes(ds))
}

pub fn write_dataset_json(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    write_json(
        path,
        &JsonDataset {
            n: ds.n(),
            p: ds.p(),
            d: ds.d(),
            x: ds.x().to_vec(),
            y: ds.y().to_vec(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new(
            vec![vec![0.1, -2.0], vec![1.0 / 3.0, 4.5]],
            vec![vec![1e-17], vec![-7.25]],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&path, &sample()).unwrap();
        let back = load_dataset(&path, DatasetFormat::Auto).unwrap();
        assert_eq!(back.x(), sample().x());
        assert_eq!(back.y(), sample().y());
    }

    #[test]
    fn json_round_trip_and_shape_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        write_dataset_json(&path, &sample()).unwrap();
        let back = load_dataset(&path, DatasetFormat::Auto).unwrap();
        assert_eq!(back.y(), sample().y());
        fs::write(&path, r#"{"n":3,"p":1,"d":1,"x":[[0]],"y":[[1]]}"#).unwrap();
        assert!(matches!(
            load_dataset(&path, DatasetFormat::Json),
            Err(IoError::Format { .. })
        ));
    }

    #[test]
    fn csv_columns_in_any_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "y_1,x_2,x_1\n5,2,1\n6,4,3\n").unwrap();
        let ds = load_dataset(&path, DatasetFormat::Csv).unwrap();
        assert_eq!(ds.x(), &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(ds.y(), &[vec![5.0], vec![6.0]]);
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("r.json");
        write_json(&path, &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("r.json")]);
    }
}
