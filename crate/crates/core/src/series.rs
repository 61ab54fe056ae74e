//! Multivariate series data model, CSV ingestion, min-max scaling,
//! temporal splitting and sliding-window extraction.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CgadError, Result};

/// `N` aligned sensor channels over `T` timestamps.
///
/// `values[i][t]` is sensor `i` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    values: Vec<Vec<f64>>,
    sensor_names: Vec<String>,
    labels: Option<Vec<u8>>,
    /// Informational epoch offset of the first row.
    pub t0: Option<i64>,
}

impl MultivariateSeries {
    pub fn new(values: Vec<Vec<f64>>, sensor_names: Vec<String>) -> Result<Self> {
        Self::build(values, sensor_names, 2)
    }

    // Time slices (e.g. a short validation tail) may hold a single timestamp.
    fn build(values: Vec<Vec<f64>>, sensor_names: Vec<String>, min_len: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(CgadError::Dimension("series needs at least one sensor".into()));
        }
        if sensor_names.len() != values.len() {
            return Err(CgadError::Dimension(format!(
                "{} sensor names for {} rows",
                sensor_names.len(),
                values.len()
            )));
        }
        let len = values[0].len();
        if len < min_len {
            return Err(CgadError::Dimension(format!(
                "series needs at least {min_len} timestamps, got {len}"
            )));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != len {
                return Err(CgadError::Dimension(format!(
                    "sensor {i} has {} values, expected {len}",
                    row.len()
                )));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(CgadError::Argument(format!(
                    "sensor {i} has a non-finite value at t={t}"
                )));
            }
        }
        Ok(Self {
            values,
            sensor_names,
            labels: None,
            t0: None,
        })
    }

    /// Builds a series with generated names `x0, x1, ...`.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("x{i}")).collect();
        Self::new(values, names)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(CgadError::Dimension(format!(
                "label count {} does not match series length {}",
                labels.len(),
                self.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(CgadError::Argument("labels must be 0 or 1".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_sensors(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, sensor: usize) -> &[f64] {
        &self.values[sensor]
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Time slice `[start, end)`; labels are sliced along with the values.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(CgadError::Argument(format!(
                "invalid slice {start}..{end} of length {}",
                self.len()
            )));
        }
        let values = self.values.iter().map(|r| r[start..end].to_vec()).collect();
        let mut out = Self::build(values, self.sensor_names.clone(), 1)?;
        out.labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        out.t0 = self.t0.map(|t| t + start as i64);
        Ok(out)
    }

    /// Reorders sensors so that output sensor `k` is input sensor `order[k]`.
    pub fn permute_sensors(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_sensors() {
            return Err(CgadError::Dimension("permutation length".into()));
        }
        let values = order.iter().map(|&i| self.values[i].clone()).collect();
        let names = order.iter().map(|&i| self.sensor_names[i].clone()).collect();
        let mut out = Self::build(values, names, 1)?;
        out.labels = self.labels.clone();
        out.t0 = self.t0;
        Ok(out)
    }
}

/// Per-sensor extrema fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub per_sensor_min: Vec<f64>,
    pub per_sensor_max: Vec<f64>,
}

impl NormalizationSpec {
    pub fn n_sensors(&self) -> usize {
        self.per_sensor_min.len()
    }
}

pub fn fit_minmax(train: &MultivariateSeries) -> NormalizationSpec {
    let (mins, maxs) = train
        .values()
        .iter()
        .map(|row| {
            row.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .unzip();
    NormalizationSpec {
        per_sensor_min: mins,
        per_sensor_max: maxs,
    }
}

/// Maps each value to `(x - min) / (max - min)`.
///
/// Values outside the fitted range are not clamped. Constant sensors map to 0.
pub fn apply_minmax(series: &MultivariateSeries, spec: &NormalizationSpec) -> Result<MultivariateSeries> {
    if spec.n_sensors() != series.n_sensors() || spec.per_sensor_max.len() != series.n_sensors() {
        return Err(CgadError::Dimension(format!(
            "normalization has {} sensors, series has {}",
            spec.n_sensors(),
            series.n_sensors()
        )));
    }
    let values = series
        .values()
        .iter()
        .zip(spec.per_sensor_min.iter().zip(&spec.per_sensor_max))
        .map(|(row, (&lo, &hi))| {
            let span = hi - lo;
            if span > 0.0 {
                row.iter().map(|&v| (v - lo) / span).collect()
            } else {
                vec![0.0; row.len()]
            }
        })
        .collect();
    let mut out = MultivariateSeries::build(values, series.sensor_names().to_vec(), 1)?;
    out.labels = series.labels.clone();
    out.t0 = series.t0;
    Ok(out)
}

/// Contiguous split: the first `floor((1 - val_fraction) * T)` timestamps
/// train, the remainder validates.
pub fn split_train_val(
    series: &MultivariateSeries,
    val_fraction: f64,
) -> Result<(MultivariateSeries, MultivariateSeries)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(CgadError::Argument(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let len = series.len();
    let train_len = ((1.0 - val_fraction) * len as f64).floor() as usize;
    if train_len == 0 || train_len == len {
        return Err(CgadError::Argument(format!(
            "split of {len} timestamps at {val_fraction} leaves an empty part"
        )));
    }
    Ok((series.slice(0, train_len)?, series.slice(train_len, len)?))
}

/// A batch of `(history, next value)` pairs.
///
/// `inputs` is row-major `B x N x w`, `targets` is `B x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub end_times: Vec<usize>,
    pub n_sensors: usize,
    pub window: usize,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.end_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.end_times.is_empty()
    }

    /// Copies out the samples at the given positions into a new batch.
    pub fn select(&self, rows: &[usize]) -> WindowBatch {
        let (n, w) = (self.n_sensors, self.window);
        let mut out = WindowBatch {
            inputs: Vec::with_capacity(rows.len() * n * w),
            targets: Vec::with_capacity(rows.len() * n),
            end_times: Vec::with_capacity(rows.len()),
            n_sensors: n,
            window: w,
        };
        for &r in rows {
            out.inputs.extend_from_slice(&self.inputs[r * n * w..(r + 1) * n * w]);
            out.targets.extend_from_slice(&self.targets[r * n..(r + 1) * n]);
            out.end_times.push(self.end_times[r]);
        }
        out
    }

    /// Concatenates batches into one.
    pub fn concat(batches: &[WindowBatch]) -> Option<WindowBatch> {
        let first = batches.first()?;
        let mut out = WindowBatch {
            inputs: Vec::new(),
            targets: Vec::new(),
            end_times: Vec::new(),
            n_sensors: first.n_sensors,
            window: first.window,
        };
        for b in batches {
            out.inputs.extend_from_slice(&b.inputs);
            out.targets.extend_from_slice(&b.targets);
            out.end_times.extend_from_slice(&b.end_times);
        }
        Some(out)
    }
}

/// One window per end time `t` in `w..T` (0-indexed): the input is
/// `values[:, t-w..t]` and the target `values[:, t]`.
pub fn make_windows(series: &MultivariateSeries, w: usize, batch_size: usize) -> Result<Vec<WindowBatch>> {
    let len = series.len();
    if w == 0 || w >= len {
        return Err(CgadError::Argument(format!(
            "window {w} must satisfy 1 <= w < T = {len}"
        )));
    }
    if batch_size == 0 {
        return Err(CgadError::Argument("batch_size must be positive".into()));
    }
    let n = series.n_sensors();
    let ends: Vec<usize> = (w..len).collect();
    Ok(ends
        .chunks(batch_size)
        .map(|chunk| {
            let mut batch = WindowBatch {
                inputs: Vec::with_capacity(chunk.len() * n * w),
                targets: Vec::with_capacity(chunk.len() * n),
                end_times: chunk.to_vec(),
                n_sensors: n,
                window: w,
            };
            for &t in chunk {
                for row in series.values() {
                    batch.inputs.extend_from_slice(&row[t - w..t]);
                }
                batch.targets.extend(series.values().iter().map(|row| row[t]));
            }
            batch
        })
        .collect())
}

/// Reads a headered, comma-separated file with one row per timestamp.
/// Lines starting with `#` are ignored.
pub fn load_csv(path: &Path, label_path: Option<&Path>) -> Result<MultivariateSeries> {
    let file_name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&file_name, path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&file_name, path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CgadError::parse(&file_name, 1, 1, "missing header"));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&file_name, path, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(CgadError::parse(
                &file_name,
                row,
                record.len().min(names.len()) + 1,
                format!("expected {} columns, found {}", names.len(), record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| CgadError::parse(&file_name, row, col + 1, format!("not a number: {cell:?}")))?;
            if !value.is_finite() {
                return Err(CgadError::parse(&file_name, row, col + 1, "missing or non-finite value"));
            }
            columns[col].push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(CgadError::parse(&file_name, 2, 1, "no data rows"));
    }
    let series = MultivariateSeries::new(columns, names)?;
    match label_path {
        Some(lp) => {
            let labels = load_labels(lp)?;
            series.with_labels(labels)
        }
        None => Ok(series),
    }
}

/// Reads one 0/1 value per line, skipping `#` comments.
pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| CgadError::io(path, e))?;
    let name = path.display().to_string();
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CgadError::io(path, e))?;
        let cell = line.trim();
        if cell.is_empty() || cell.starts_with('#') {
            continue;
        }
        match cell {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(CgadError::parse(&name, idx + 1, 1, format!("label must be 0 or 1, got {other:?}")))
            }
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    write_labels_with_header(path, labels, &[])
}

pub fn write_labels_with_header(path: &Path, labels: &[u8], header: &[String]) -> Result<()> {
    let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
    for l in labels {
        text.push_str(if *l == 0 { "0\n" } else { "1\n" });
    }
    std::fs::write(path, text).map_err(|e| CgadError::io(path, e))
}

/// Writes the series as a headered CSV with 17 significant digits.
pub fn write_csv(path: &Path, series: &MultivariateSeries) -> Result<()> {
    write_csv_with_header(path, series, &[])
}

/// Like [`write_csv`], preceded by `#` comment lines.
pub fn write_csv_with_header(path: &Path, series: &MultivariateSeries, header: &[String]) -> Result<()> {
    let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
    text.push_str(&series.sensor_names().join(","));
    text.push('\n');
    for t in 0..series.len() {
        let row: Vec<String> = series.values().iter().map(|r| format!("{:.16e}", r[t])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CgadError::io(path, e))
}

fn csv_error(file: &str, path: &Path, err: csv::Error) -> CgadError {
    let row = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => CgadError::io(path, e),
        kind => CgadError::parse(file, row, 0, format!("{kind:?}")),
    }
}
