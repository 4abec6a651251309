//! Annual economic time series and the exact transforms among inflation,
//! accumulated price index, log-price and growth-rate index (GRI).
//!
//! A GRI value `r_k = ln(P_{k+1} / P_k)` describes the interval between two
//! consecutive observations. It is labeled with the calendar year at the
//! *end* of that interval, so the GRI series starts one period after the
//! price series it was computed from.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What the values of an [`ObservationSeries`] measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// Accumulated consumer price index `P(t)`.
    PriceIndex,
    /// Annual inflation in percent, `100 * (P(t)/P(t-dt) - 1)`.
    InflationPct,
    /// `p(t) = ln P(t)`.
    LogPrice,
    /// Growth rate index `r = ln(P(t+dt)/P(t))`, labeled at the interval end.
    Gri,
}

impl SeriesKind {
    pub fn label(self) -> &'static str {
        match self {
            SeriesKind::PriceIndex => "price",
            SeriesKind::InflationPct => "inflation",
            SeriesKind::LogPrice => "log-price",
            SeriesKind::Gri => "gri",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub country_label: String,
    pub source_label: String,
    /// Year at which the series was divided through to 1, if any.
    pub normalization_year: Option<i32>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("domain error at year {year}: {reason}")]
    Domain { year: f64, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("expected a {expected} series, got {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("numeric overflow at year {year}")]
    Range { year: f64 },
    #[error("line {line}: {message}")]
    Ingest { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SeriesError>;

/// An ordered, gap-free series of observations spaced `dt` years apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub start_year: i32,
    pub dt: f64,
    values: Vec<f64>,
    pub kind: SeriesKind,
    #[serde(default)]
    pub meta: SeriesMeta,
}

impl ObservationSeries {
    /// Annual series (`dt = 1`).
    pub fn new(start_year: i32, values: Vec<f64>, kind: SeriesKind) -> Result<Self> {
        Self::with_dt(start_year, 1.0, values, kind)
    }

    pub fn with_dt(start_year: i32, dt: f64, values: Vec<f64>, kind: SeriesKind) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SeriesError::Argument(format!("period length must be positive, got {dt}")));
        }
        let s = ObservationSeries {
            start_year,
            dt,
            values,
            kind,
            meta: SeriesMeta::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_meta(mut self, meta: SeriesMeta) -> Self {
        self.meta = meta;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() && self.kind != SeriesKind::Gri {
            return Err(SeriesError::Argument("series has no values".into()));
        }
        for (k, &v) in self.values.iter().enumerate() {
            let year = self.year_at(k);
            if !v.is_finite() {
                return Err(SeriesError::Domain {
                    year,
                    reason: format!("non-finite value {v}"),
                });
            }
            match self.kind {
                SeriesKind::PriceIndex if v <= 0.0 => {
                    return Err(SeriesError::Domain {
                        year,
                        reason: format!("price index must be positive, got {v}"),
                    })
                }
                SeriesKind::InflationPct if v <= -100.0 => {
                    return Err(SeriesError::Domain {
                        year,
                        reason: format!("inflation must exceed -100%, got {v}"),
                    })
                }
                _ => {}
            }
        }
        Ok(())
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

    pub fn year_at(&self, index: usize) -> f64 {
        self.start_year as f64 + index as f64 * self.dt
    }

    pub fn years(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.year_at(k))
    }

    pub fn first_year(&self) -> f64 {
        self.start_year as f64
    }

    pub fn last_year(&self) -> f64 {
        self.year_at(self.len().saturating_sub(1))
    }

    /// Index of the observation labeled `year`, if the series has one.
    pub fn index_of(&self, year: f64) -> Option<usize> {
        let pos = (year - self.start_year as f64) / self.dt;
        let k = pos.round();
        if (pos - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.len() {
            return None;
        }
        Some(k as usize)
    }

    pub fn value_at(&self, year: f64) -> Option<f64> {
        self.index_of(year).map(|k| self.values[k])
    }

    /// `(year, value)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(k, &v)| (self.year_at(k), v))
    }

    fn expect_kind(&self, kind: SeriesKind) -> Result<()> {
        if self.kind != kind {
            return Err(SeriesError::WrongKind {
                expected: kind.label(),
                found: self.kind.label(),
            });
        }
        Ok(())
    }

    fn derived(&self, start_year: i32, values: Vec<f64>, kind: SeriesKind) -> ObservationSeries {
        ObservationSeries {
            start_year,
            dt: self.dt,
            values,
            kind,
            meta: self.meta.clone(),
        }
    }

    /// Calendar year `n` periods after `start_year`, as an integer label.
    fn shifted_start(&self, periods: i32) -> i32 {
        self.start_year + (periods as f64 * self.dt).round() as i32
    }
}

/// Accumulates annual inflation (percent) into a price index starting at
/// `base`. The base value is placed one period before the first inflation
/// observation, so the output is one element longer than the input.
pub fn inflation_to_cpi(s: &ObservationSeries, base: f64) -> Result<ObservationSeries> {
    s.expect_kind(SeriesKind::InflationPct)?;
    if !(base.is_finite() && base > 0.0) {
        return Err(SeriesError::Argument(format!("base price must be positive, got {base}")));
    }
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(base);
    let mut price = base;
    for (year, i) in s.points() {
        if i <= -100.0 {
            return Err(SeriesError::Domain {
                year,
                reason: format!("inflation {i}% would make the price non-positive"),
            });
        }
        price *= 1.0 + i / 100.0;
        if !price.is_finite() {
            return Err(SeriesError::Range { year });
        }
        out.push(price);
    }
    Ok(s.derived(s.shifted_start(-1), out, SeriesKind::PriceIndex))
}

/// GRI from a price index; each rate is labeled with its interval's end year.
pub fn cpi_to_gri(s: &ObservationSeries) -> Result<ObservationSeries> {
    s.expect_kind(SeriesKind::PriceIndex)?;
    if s.len() < 2 {
        return Err(SeriesError::Argument(
            "at least two prices are needed to form a growth rate".into(),
        ));
    }
    let rates = s
        .values
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            if w[0] <= 0.0 || w[1] <= 0.0 {
                Err(SeriesError::Domain {
                    year: s.year_at(k + 1),
                    reason: "non-positive price".into(),
                })
            } else {
                Ok((w[1] / w[0]).ln())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(s.derived(s.shifted_start(1), rates, SeriesKind::Gri))
}

/// Inverse of [`cpi_to_gri`]: `P_0 = p_base`, `P_{k+1} = P_k exp(r_k)`.
pub fn gri_to_cpi(r: &ObservationSeries, p_base: f64) -> Result<ObservationSeries> {
    r.expect_kind(SeriesKind::Gri)?;
    if !(p_base.is_finite() && p_base > 0.0) {
        return Err(SeriesError::Argument(format!("base price must be positive, got {p_base}")));
    }
    let mut out = Vec::with_capacity(r.len() + 1);
    out.push(p_base);
    // Accumulate in log space so long series do not compound rounding in
    // repeated products.
    let ln_base = p_base.ln();
    let mut log_price = ln_base;
    for (year, rate) in r.points() {
        log_price += rate;
        let price = log_price.exp();
        if !price.is_finite() || price <= 0.0 {
            return Err(SeriesError::Range { year });
        }
        out.push(price);
    }
    Ok(r.derived(r.shifted_start(-1), out, SeriesKind::PriceIndex))
}

/// Divides every price by the price observed in `year`.
pub fn normalize(s: &ObservationSeries, year: i32) -> Result<ObservationSeries> {
    s.expect_kind(SeriesKind::PriceIndex)?;
    let k = s
        .index_of(year as f64)
        .ok_or_else(|| SeriesError::Argument(format!("normalization year {year} outside series")))?;
    let pivot = s.values[k];
    if pivot <= 0.0 {
        return Err(SeriesError::Domain {
            year: year as f64,
            reason: "normalization price must be positive".into(),
        });
    }
    let mut values: Vec<f64> = s.values.iter().map(|v| v / pivot).collect();
    values[k] = 1.0;
    let mut out = s.derived(s.start_year, values, SeriesKind::PriceIndex);
    out.meta.normalization_year = Some(year);
    Ok(out)
}

pub fn log_transform(s: &ObservationSeries) -> Result<ObservationSeries> {
    s.expect_kind(SeriesKind::PriceIndex)?;
    let values = s
        .points()
        .map(|(year, v)| {
            if v <= 0.0 {
                Err(SeriesError::Domain {
                    year,
                    reason: "logarithm of non-positive price".into(),
                })
            } else {
                Ok(v.ln())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(s.derived(s.start_year, values, SeriesKind::LogPrice))
}

/// Inclusive slice `[from_year, to_year]`; metadata is kept.
pub fn window(s: &ObservationSeries, from_year: i32, to_year: i32) -> Result<ObservationSeries> {
    if from_year > to_year {
        return Err(SeriesError::Argument(format!(
            "empty window {from_year}..{to_year}"
        )));
    }
    let lo = s
        .index_of(from_year as f64)
        .ok_or_else(|| SeriesError::Argument(format!("window start {from_year} outside series")))?;
    let hi = s
        .index_of(to_year as f64)
        .ok_or_else(|| SeriesError::Argument(format!("window end {to_year} outside series")))?;
    Ok(s.derived(from_year, s.values[lo..=hi].to_vec(), s.kind))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    year: i32,
    value: f64,
}

/// Reads a `year,value` CSV (header required). Years must be consecutive.
pub fn read_csv<R: Read>(reader: R, kind: SeriesKind) -> Result<ObservationSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SeriesError::Ingest {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["year", "value"] {
        return Err(SeriesError::Ingest {
            line: 1,
            message: format!("expected header `year,value`, found `{}`", names.join(",")),
        });
    }
    let mut start = None;
    let mut values = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| SeriesError::Ingest {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = values.len() as u64 + 2;
        let first = *start.get_or_insert(row.year);
        let expected = first + values.len() as i32;
        if row.year != expected {
            return Err(SeriesError::Ingest {
                line,
                message: format!("expected year {expected}, found {} (gaps are not allowed)", row.year),
            });
        }
        values.push(row.value);
    }
    let start = start.ok_or(SeriesError::Ingest {
        line: 1,
        message: "no data rows".into(),
    })?;
    ObservationSeries::new(start, values, kind).map_err(|e| match e {
        SeriesError::Domain { year, reason } => SeriesError::Ingest {
            line: (year - start as f64).round() as u64 + 2,
            message: reason,
        },
        other => other,
    })
}

pub fn read_csv_path(path: &std::path::Path, kind: SeriesKind) -> Result<ObservationSeries> {
    let file = std::fs::File::open(path).map_err(|e| SeriesError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, kind)
}

/// Writes the series in the same `year,value` schema [`read_csv`] accepts.
pub fn write_csv<W: Write>(s: &ObservationSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SeriesError::Io(e.to_string());
    w.write_record(["year", "value"]).map_err(io)?;
    for (year, v) in s.points() {
        w.write_record([format!("{year}"), format!("{v}")]).map_err(io)?;
    }
    w.flush().map_err(|e| SeriesError::Io(e.to_string()))
}
