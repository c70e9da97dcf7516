use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::BearingSelector;
use crate::error::{Error, Result};

/// Rows per IMS snapshot: one second at 20480 Hz.
pub const IMS_ROWS: usize = 20480;

/// Filename pattern of IMS snapshots, e.g. `2003.10.22.12.06.24`.
pub const TIMESTAMP_FORMAT: &str = "%Y.%m.%d.%H.%M.%S";

/// Expected shape of a snapshot file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotFormat {
    pub channels: usize,
    /// `None` accepts any non-zero row count (fixtures and reduced-length test data).
    pub rows: Option<usize>,
}

impl SnapshotFormat {
    pub fn ims(channels: usize) -> Self {
        Self {
            channels,
            rows: Some(IMS_ROWS),
        }
    }
}

/// One snapshot: `rows x channels` accelerometer readings, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSnapshot {
    pub timestamp: NaiveDateTime,
    rows: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RawSnapshot {
    pub fn new(timestamp: NaiveDateTime, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.is_empty() || data.len() % channels != 0 {
            return Err(Error::Shape {
                expected: channels,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("snapshot"));
        }
        Ok(Self {
            timestamp,
            rows: data.len() / channels,
            channels,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.channels + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(col)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn file_name(&self) -> String {
        self.timestamp.format(TIMESTAMP_FORMAT).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRef {
    pub path: PathBuf,
    pub timestamp: NaiveDateTime,
}

pub fn parse_timestamp(name: &str) -> Result<NaiveDateTime> {
    let ok_shape = name.len() == 19
        && name.char_indices().all(|(i, c)| {
            if matches!(i, 4 | 7 | 10 | 13 | 16) {
                c == '.'
            } else {
                c.is_ascii_digit()
            }
        });
    if !ok_shape {
        return Err(Error::BadTimestamp(name.to_string()));
    }
    NaiveDateTime::parse_from_str(name, TIMESTAMP_FORMAT)
        .map_err(|_| Error::BadTimestamp(name.to_string()))
}

/// Lists the snapshot files in `dir`, sorted by the timestamp in their names.
/// Dotfiles are ignored; any other file that does not match the pattern is an error.
pub fn scan_dataset(dir: &Path) -> Result<Vec<SnapshotRef>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut refs = Vec::new();
    let mut rejected = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !entry.path().is_file() {
            continue;
        }
        match parse_timestamp(&name) {
            Ok(timestamp) => refs.push(SnapshotRef {
                path: entry.path(),
                timestamp,
            }),
            Err(_) => rejected.push(name),
        }
    }
    if !rejected.is_empty() {
        rejected.sort();
        return Err(Error::BadFilenames {
            dir: dir.to_path_buf(),
            count: rejected.len(),
            names: rejected,
        });
    }
    if refs.is_empty() {
        return Err(Error::NoSnapshots(dir.to_path_buf()));
    }
    refs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.path.cmp(&b.path)));
    Ok(refs)
}

/// Parses an ASCII snapshot with whitespace-separated columns.
/// `name` is the file name carrying the timestamp.
pub fn parse_snapshot(name: &str, bytes: &[u8], format: SnapshotFormat) -> Result<RawSnapshot> {
    let timestamp = parse_timestamp(name)?;
    let text = std::str::from_utf8(bytes).map_err(|_| Error::NonNumeric {
        name: name.to_string(),
        line: 0,
        token: "<non-utf8 bytes>".to_string(),
    })?;

    let mut data = Vec::with_capacity(format.rows.unwrap_or(IMS_ROWS) * format.channels);
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = 0usize;
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| Error::NonNumeric {
                name: name.to_string(),
                line: idx + 1,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    name: name.to_string(),
                    line: idx + 1,
                });
            }
            data.push(v);
            cols += 1;
        }
        if cols != format.channels {
            return Err(Error::ColumnCount {
                name: name.to_string(),
                line: idx + 1,
                got: cols,
                expected: format.channels,
            });
        }
        rows += 1;
    }

    match format.rows {
        Some(expected) if rows < expected => {
            return Err(Error::ShortFile {
                name: name.to_string(),
                rows,
                expected,
            })
        }
        Some(expected) if rows > expected => {
            return Err(Error::ExtraRows {
                name: name.to_string(),
                rows,
                expected,
            })
        }
        None if rows == 0 => {
            return Err(Error::ShortFile {
                name: name.to_string(),
                rows,
                expected: 1,
            })
        }
        _ => {}
    }
    RawSnapshot::new(timestamp, format.channels, data)
}

/// Serializes a snapshot in the tab-separated text format. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_snapshot(snapshot: &RawSnapshot) -> String {
    let mut out = String::with_capacity(snapshot.rows * snapshot.channels * 8);
    for row in snapshot.data.chunks(snapshot.channels) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push('\t');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// The bearing's X-axis series from a snapshot.
pub fn extract_bearing_series(
    snapshot: &RawSnapshot,
    selector: &BearingSelector,
) -> Result<Vec<f64>> {
    if snapshot.channels() != selector.dataset_channels() {
        return Err(Error::SelectorMismatch {
            dataset: selector.id.dataset,
            bearing: selector.id.bearing,
        });
    }
    Ok(snapshot.column(selector.series_column()))
}
