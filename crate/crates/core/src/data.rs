//! UCR-format ingestion, 0-1 normalization and fixed-length segmentation.
//!
//! A UCR text file holds one series per line: the class label first, then the
//! values. Labels may be arbitrary integers; the two distinct values are
//! mapped onto [`Label::Negative`] / [`Label::Positive`] with the minority class
//! positive unless a [`LabelMap`] is supplied.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    pub values: Vec<T>,
    pub label: Option<Label>,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(values: Vec<T>, label: Option<Label>) -> Result<Self> {
        if values.is_empty() {
            return Err(argument("time series must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("time series contains non-finite values"));
        }
        Ok(Self { values, label })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A borrowed fixed-length window of a series. `position` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<'a, T> {
    pub values: &'a [T],
    pub series_index: usize,
    pub position: usize,
}

/// Rescale to `[0, 1]`. Constant series map to all zeros.
pub fn normalize_01<T: Scalar>(series: &TimeSeries<T>) -> TimeSeries<T> {
    TimeSeries {
        values: normalize_values(&series.values),
        label: series.label,
    }
}

pub(crate) fn normalize_values<T: Scalar>(values: &[T]) -> Vec<T> {
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > T::zero()) {
        return vec![T::zero(); values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / span).max(T::zero()).min(T::one()))
        .collect()
}

/// Split into `floor(n / l)` contiguous windows; the trailing `n mod l` points are dropped.
pub fn segment<T: Scalar>(series: &TimeSeries<T>, l: usize) -> Result<Vec<Segment<'_, T>>> {
    segment_values(&series.values, l, 0)
}

pub(crate) fn segment_values<T>(values: &[T], l: usize, series_index: usize) -> Result<Vec<Segment<'_, T>>> {
    if l == 0 {
        return Err(argument("segment length must be positive"));
    }
    if l > values.len() {
        return Err(argument(format!(
            "segment length {l} exceeds series length {}",
            values.len()
        )));
    }
    Ok(values
        .chunks_exact(l)
        .enumerate()
        .map(|(position, values)| Segment {
            values,
            series_index,
            position,
        })
        .collect())
}

/// Raw integer labels mapped onto the binary classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub positive: i64,
    pub negative: Option<i64>,
}

impl LabelMap {
    fn apply(&self, raw: i64) -> Option<Label> {
        if raw == self.positive {
            Some(Label::Positive)
        } else if self.negative.is_none() || self.negative == Some(raw) {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Delimiter {
    Comma,
    Tab,
    Whitespace,
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "," | "comma" => Ok(Delimiter::Comma),
            "\t" | "\\t" | "tab" => Ok(Delimiter::Tab),
            " " | "space" | "whitespace" => Ok(Delimiter::Whitespace),
            other => Err(argument(format!("unsupported delimiter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UcrOptions {
    pub delimiter: Delimiter,
    /// Fixed label mapping, e.g. the one learned from the training split.
    pub label_map: Option<LabelMap>,
    /// Segment length `l`; `None` uses the whole series as one segment.
    pub segment_length: Option<usize>,
}

impl Default for UcrOptions {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Comma,
            label_map: None,
            segment_length: None,
        }
    }
}

/// Labeled, 0-1 normalized, segmentable series sharing one segment length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub series: Vec<TimeSeries<T>>,
    pub segment_length: usize,
    pub num_segments: usize,
    pub label_map: Option<LabelMap>,
}

impl<T: Scalar> Dataset<T> {
    /// Normalizes every series and fixes the segmentation. `m` is the smallest
    /// `floor(n / l)` across series so every series exposes the same segments.
    pub fn new(series: Vec<TimeSeries<T>>, segment_length: usize) -> Result<Self> {
        if series.is_empty() {
            return Err(argument("dataset is empty"));
        }
        if segment_length == 0 {
            return Err(argument("segment length must be positive"));
        }
        if let Some((i, s)) = series.iter().enumerate().find(|(_, s)| s.len() < segment_length) {
            return Err(argument(format!(
                "series {i} has length {} < segment length {segment_length}",
                s.len()
            )));
        }
        let num_segments = series.iter().map(|s| s.len() / segment_length).min().unwrap_or(0);
        Ok(Self {
            series: series.iter().map(normalize_01).collect(),
            segment_length,
            num_segments,
            label_map: None,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// The `m` segments of series `i`.
    pub fn segments(&self, i: usize) -> Vec<Segment<'_, T>> {
        let l = self.segment_length;
        let values = &self.series[i].values[..self.num_segments * l];
        segment_values(values, l, i).expect("dataset invariants guarantee segmentation")
    }

    pub fn segment(&self, i: usize, position: usize) -> &[T] {
        let l = self.segment_length;
        &self.series[i].values[position * l..(position + 1) * l]
    }

    /// Every segment of every series, ordered by `(series_index, position)`.
    pub fn all_segments(&self) -> Vec<Segment<'_, T>> {
        (0..self.len()).flat_map(|i| self.segments(i)).collect()
    }

    pub fn labels(&self) -> Vec<Option<Label>> {
        self.series.iter().map(|s| s.label).collect()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.series.iter().filter(|s| s.label == Some(label)).count()
    }

    /// Fraction of labeled series that are positive.
    pub fn positive_ratio(&self) -> f64 {
        let labeled = self.series.iter().filter(|s| s.label.is_some()).count();
        if labeled == 0 {
            return 0.0;
        }
        self.count_label(Label::Positive) as f64 / labeled as f64
    }

    /// Dataset restricted to the given series indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            series: indices.iter().map(|&i| self.series[i].clone()).collect(),
            segment_length: self.segment_length,
            num_segments: self.num_segments,
            label_map: self.label_map,
        }
    }
}

/// Load a UCR text file into a normalized [`Dataset`].
pub fn load_ucr<T: Scalar>(path: impl AsRef<Path>, opts: &UcrOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let load_err = |row: usize, reason: String| Error::Load {
        path: path.to_path_buf(),
        row,
        reason,
    };

    let mut rows: Vec<(usize, i64, Vec<T>)> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells = opts.delimiter.split(line.trim());
        if rows.is_empty() && width.is_none() && cells[0].parse::<f64>().is_err() {
            log::debug!("{}: skipping header row", path.display());
            width = Some(None);
            continue;
        }
        if cells.len() < 2 {
            return Err(load_err(row, "expected a label and at least one value".into()));
        }
        match width {
            Some(Some(w)) if w != cells.len() => {
                return Err(load_err(
                    row,
                    format!("row has {} columns, expected {w}", cells.len()),
                ));
            }
            _ => width = Some(Some(cells.len())),
        }
        let raw: f64 = cells[0]
            .parse()
            .map_err(|_| load_err(row, format!("non-numeric label {:?}", cells[0])))?;
        if raw.fract() != 0.0 || !raw.is_finite() {
            return Err(load_err(row, format!("label {:?} is not an integer", cells[0])));
        }
        let mut values = Vec::with_capacity(cells.len() - 1);
        for (col, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| load_err(row, format!("non-numeric value {cell:?} in column {}", col + 2)))?;
            if !v.is_finite() {
                return Err(load_err(row, format!("non-finite value in column {}", col + 2)));
            }
            values.push(T::of(v));
        }
        rows.push((row, raw as i64, values));
    }
    if rows.is_empty() {
        return Err(load_err(0, "file contains no series".into()));
    }

    let label_map = match opts.label_map {
        Some(map) => map,
        None => minority_label_map(rows.iter().map(|r| r.1)).map_err(|reason| load_err(0, reason))?,
    };
    let mut series = Vec::with_capacity(rows.len());
    for (row, raw, values) in rows {
        let label = label_map
            .apply(raw)
            .ok_or_else(|| load_err(row, format!("unknown label value {raw}")))?;
        series.push(TimeSeries::new(values, Some(label)).map_err(|e| load_err(row, e.to_string()))?);
    }

    let l = match opts.segment_length {
        Some(l) => l,
        None => series.iter().map(TimeSeries::len).min().unwrap_or(1),
    };
    let mut ds = Dataset::new(series, l)?;
    ds.label_map = Some(label_map);
    Ok(ds)
}

/// Minority class becomes positive; ties go to the larger raw value.
fn minority_label_map(raw: impl Iterator<Item = i64>) -> std::result::Result<LabelMap, String> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for r in raw {
        *counts.entry(r).or_default() += 1;
    }
    match counts.len() {
        1 => Ok(LabelMap {
            positive: *counts.keys().next().unwrap(),
            negative: None,
        }),
        2 => {
            let mut it = counts.iter();
            let (a, ca) = it.next().unwrap();
            let (b, cb) = it.next().unwrap();
            let (pos, neg) = if ca < cb { (*a, *b) } else { (*b, *a) };
            Ok(LabelMap {
                positive: pos,
                negative: Some(neg),
            })
        }
        n => Err(format!("expected a binary dataset, found {n} distinct labels")),
    }
}
