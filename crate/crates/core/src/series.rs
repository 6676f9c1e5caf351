//! Dated observation series, multi-series panels, and the increment/profile
//! transforms every estimator consumes.
//!
//! # Panel file format
//!
//! Comma-separated text, one header row. The first header cell names the
//! date column; every other header cell is a series id. Dates are ISO
//! `YYYY-MM-DD`. Values use a decimal point. An empty cell is a missing
//! observation. Rows may appear in any order; they are sorted by date on
//! load. Rows whose date cell does not parse are skipped.
//!
//! ```text
//! date,R1d,R7d,TB10Y
//! 2007-01-04,1.52,1.88,3.01
//! 2007-01-05,1.49,,3.02
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// A single dated series of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries {
                id,
                reason: format!("{} dates but {} values", dates.len(), values.len()),
            });
        }
        if values.len() < 2 {
            return Err(Error::TooShort {
                id,
                len: values.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries {
                id,
                reason: format!("dates not strictly increasing at {}", w[1]),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries {
                id,
                reason: format!("non-finite value at position {i}"),
            });
        }
        Ok(Self { id, dates, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same dates, every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.dates.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// One panel column; `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub id: String,
    pub values: Vec<Option<f64>>,
}

/// Several series on a shared date index. Before alignment a column may have
/// missing cells; after [`align`] every column is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePanel {
    dates: Vec<NaiveDate>,
    columns: Vec<Column>,
}

impl RatePanel {
    pub fn new(dates: Vec<NaiveDate>, columns: Vec<Column>) -> Result<Self> {
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(if w[0] == w[1] {
                Error::DuplicateDate(w[0])
            } else {
                Error::InvalidParameter(format!("panel dates not increasing at {}", w[1]))
            });
        }
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.id.as_str()) {
                return Err(Error::DuplicateColumn(col.id.clone()));
            }
            if col.values.len() != dates.len() {
                return Err(Error::InvalidSeries {
                    id: col.id.clone(),
                    reason: format!("{} cells for {} dates", col.values.len(), dates.len()),
                });
            }
            if col.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSeries {
                    id: col.id.clone(),
                    reason: "non-finite value".into(),
                });
            }
        }
        Ok(Self { dates, columns })
    }

    /// Builds a panel on the union of the members' dates.
    pub fn from_series(series: Vec<TimeSeries>) -> Result<Self> {
        let mut dates: Vec<NaiveDate> = series
            .iter()
            .flat_map(|s| s.dates.iter().copied())
            .collect();
        dates.sort_unstable();
        dates.dedup();
        let columns = series
            .into_iter()
            .map(|s| {
                let mut values = vec![None; dates.len()];
                let mut cursor = 0;
                for (d, v) in s.dates.iter().zip(&s.values) {
                    while dates[cursor] != *d {
                        cursor += 1;
                    }
                    values[cursor] = Some(*v);
                }
                Column { id: s.id, values }
            })
            .collect();
        Self::new(dates, columns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn ids(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn n_series(&self) -> usize {
        self.columns.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn is_aligned(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.values.iter().all(Option::is_some))
    }

    /// The named column as a series, skipping missing cells.
    pub fn series(&self, id: &str) -> Result<TimeSeries> {
        let col = self
            .columns
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownSeries(id.to_string()))?;
        column_to_series(&self.dates, col)
    }

    /// Every member as a series. Requires an aligned panel.
    pub fn all_series(&self) -> Result<Vec<TimeSeries>> {
        if !self.is_aligned() {
            return Err(Error::NotAligned);
        }
        self.columns
            .iter()
            .map(|c| column_to_series(&self.dates, c))
            .collect()
    }

    /// Rows with `from <= date <= to`.
    pub fn restrict(&self, from: NaiveDate, to: NaiveDate) -> Self {
        let keep: Vec<usize> = (0..self.dates.len())
            .filter(|&i| self.dates[i] >= from && self.dates[i] <= to)
            .collect();
        self.select_rows(&keep)
    }

    /// Number of rows on which every column has a value.
    pub fn complete_rows(&self) -> usize {
        (0..self.dates.len())
            .filter(|&i| self.columns.iter().all(|c| c.values[i].is_some()))
            .count()
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    id: c.id.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }
}

fn column_to_series(dates: &[NaiveDate], col: &Column) -> Result<TimeSeries> {
    let (d, v): (Vec<NaiveDate>, Vec<f64>) = dates
        .iter()
        .zip(&col.values)
        .filter_map(|(d, v)| v.map(|v| (*d, v)))
        .unzip();
    TimeSeries::new(col.id.clone(), d, v)
}

/// Ingestion settings for [`load_panel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: u8,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// A loaded panel plus the 1-based data-row numbers dropped for bad dates.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub panel: RatePanel,
    pub rejected_rows: Vec<usize>,
}

pub fn load_panel(path: impl AsRef<Path>, config: &IngestConfig) -> Result<RatePanel> {
    load_panel_detailed(path, config).map(|l| l.panel)
}

pub fn load_panel_detailed(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Loaded> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(file, config)
}

pub fn read_panel<R: Read>(reader: R, config: &IngestConfig) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::NoNumericColumns);
    }
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateColumn(id.clone()));
        }
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    let mut rejected_rows = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let Some(date) = record
            .get(0)
            .and_then(|d| NaiveDate::parse_from_str(d, DATE_FORMAT).ok())
        else {
            rejected_rows.push(row_no + 1);
            continue;
        };
        let mut cells = Vec::with_capacity(ids.len());
        for (j, id) in ids.iter().enumerate() {
            let raw = record.get(j + 1).unwrap_or("");
            if raw.is_empty() {
                cells.push(None);
            } else {
                let v: f64 = raw.parse().map_err(|_| Error::InvalidSeries {
                    id: id.clone(),
                    reason: format!("non-numeric cell `{raw}` on {date}"),
                })?;
                cells.push(Some(v));
            }
        }
        rows.push((date, cells));
    }

    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0));
    }
    if rows.len() < 2 {
        return Err(Error::TooShort {
            id: "<panel>".into(),
            len: rows.len(),
        });
    }
    let mut columns: Vec<Column> = ids
        .into_iter()
        .map(|id| Column {
            id,
            values: Vec::with_capacity(rows.len()),
        })
        .collect();
    let mut dates = Vec::with_capacity(rows.len());
    for (d, cells) in rows {
        dates.push(d);
        for (col, v) in columns.iter_mut().zip(cells) {
            col.values.push(v);
        }
    }
    if columns.iter().all(|c| c.values.iter().all(Option::is_none)) {
        return Err(Error::NoNumericColumns);
    }
    Ok(Loaded {
        panel: RatePanel::new(dates, columns)?,
        rejected_rows,
    })
}

/// Writes a panel in the format [`read_panel`] accepts. Values use the
/// shortest representation that round-trips exactly.
pub fn write_panel<W: Write>(panel: &RatePanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.columns.iter().map(|c| c.id.clone()));
    wtr.write_record(&header)?;
    for (i, d) in panel.dates.iter().enumerate() {
        let mut row = vec![d.format(DATE_FORMAT).to_string()];
        row.extend(panel.columns.iter().map(|c| match c.values[i] {
            Some(v) => format!("{v}"),
            None => String::new(),
        }));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// How [`align`] reconciles members with different histories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AlignPolicy {
    /// Keep only dates on which every member has a value.
    #[default]
    Intersect,
    /// Carry the last observation across interior gaps of at most `max_gap`
    /// missing cells, then intersect.
    ForwardFill { max_gap: usize },
}

pub fn align(panel: &RatePanel, policy: AlignPolicy) -> Result<RatePanel> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut work = panel.clone();
    if let AlignPolicy::ForwardFill { max_gap } = policy {
        for col in &mut work.columns {
            forward_fill(col, &panel.dates, max_gap)?;
        }
    }
    let keep: Vec<usize> = (0..work.dates.len())
        .filter(|&i| work.columns.iter().all(|c| c.values[i].is_some()))
        .collect();
    if keep.len() < 2 {
        return Err(Error::AlignmentTooShort(keep.len()));
    }
    Ok(work.select_rows(&keep))
}

fn forward_fill(col: &mut Column, dates: &[NaiveDate], max_gap: usize) -> Result<()> {
    let Some(first) = col.values.iter().position(Option::is_some) else {
        return Err(Error::NoPriorValue {
            id: col.id.clone(),
            date: dates[0],
        });
    };
    let mut i = first;
    while i < col.values.len() {
        if col.values[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < col.values.len() && col.values[i].is_none() {
            i += 1;
        }
        // trailing gaps are filled too: the last observation is still the best prior
        if i - start <= max_gap {
            let prior = col.values[start - 1];
            for v in &mut col.values[start..i] {
                *v = prior;
            }
        }
    }
    Ok(())
}

/// Absolute first differences of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    pub parent_id: String,
    values: Vec<f64>,
}

impl IncrementSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `|R(i+1) - R(i)|` for consecutive observations.
pub fn increments(series: &TimeSeries) -> IncrementSeries {
    IncrementSeries {
        parent_id: series.id.clone(),
        values: series
            .values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .collect(),
    }
}

/// Cumulative sum of mean-centred values; the last element is zero up to
/// rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub parent_id: String,
    values: Vec<f64>,
}

impl Profile {
    /// Wraps an arbitrary sequence as a profile. Used for analysing
    /// already-integrated signals; [`profile`] is the normal route.
    pub fn from_values(parent_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let parent_id = parent_id.into();
        if values.len() < 2 {
            return Err(Error::TooShort {
                id: parent_id,
                len: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries {
                id: parent_id,
                reason: "non-finite profile value".into(),
            });
        }
        Ok(Self { parent_id, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        Self::from_values(
            self.parent_id.clone(),
            self.values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(i, v))
                .collect(),
        )
    }
}

pub fn profile(x: &IncrementSeries) -> Result<Profile> {
    if x.values.len() < 2 {
        return Err(Error::TooShort {
            id: x.parent_id.clone(),
            len: x.values.len(),
        });
    }
    let mean = x.values.iter().sum::<f64>() / x.values.len() as f64;
    let values = x
        .values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v - mean;
            Some(*acc)
        })
        .collect();
    Ok(Profile {
        parent_id: x.parent_id.clone(),
        values,
    })
}

/// `profile(increments(series))`.
pub fn series_profile(series: &TimeSeries) -> Result<Profile> {
    profile(&increments(series))
}
