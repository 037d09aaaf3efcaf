use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where one price (or factor) series lives on disk. The CSV holds two
/// columns, `date,value`; a non-parseable first row is treated as a header.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeriesSource {
    pub name: String,
    pub path: PathBuf,
    /// strftime-style pattern; ISO-8601 (`%Y-%m-%d`) when absent.
    #[serde(default)]
    pub date_format: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalendarPolicy {
    #[default]
    Intersection,
    Union,
}

/// Price levels for several markets on a shared, strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

/// Log returns `ln(P_t / P_{t-1})`, one row shorter than the price panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

impl PricePanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.series[i].as_slice())
    }

    pub fn validate(&self) -> Result<()> {
        validate_calendar(&self.dates)?;
        for (name, s) in self.names.iter().zip(&self.series) {
            if s.len() != self.dates.len() {
                return Err(Error::Calendar(format!(
                    "series `{name}` has {} values for {} dates",
                    s.len(),
                    self.dates.len()
                )));
            }
            if let Some(i) = s.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::Calendar(format!(
                    "series `{name}` has non-positive price {} on {}",
                    s[i], self.dates[i]
                )));
            }
        }
        Ok(())
    }
}

impl ReturnPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.series[i].as_slice())
    }
}

fn validate_calendar(dates: &[NaiveDate]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Calendar(format!(
            "dates not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub fn parse_date(s: &str, format: Option<&str>) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), format.unwrap_or("%Y-%m-%d")).ok()
}

/// Reads a two-column `date,value` CSV. Dates must be strictly increasing.
pub fn load_series_csv(path: &Path, date_format: Option<&str>) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Load {
            file: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let load_err = |msg: String| Error::Load {
            file: path.to_path_buf(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| load_err(e.to_string()))?;
        if rec.len() < 2 {
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            return Err(load_err(format!("expected 2 columns, found {}", rec.len())));
        }
        let Some(date) = parse_date(&rec[0], date_format) else {
            if line == 1 {
                continue;
            }
            return Err(load_err(format!("unparseable date `{}`", &rec[0])));
        };
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| load_err(format!("unparseable number `{}`", &rec[1])))?;
        if !value.is_finite() {
            return Err(load_err(format!("non-finite value `{}`", &rec[1])));
        }
        if let Some((prev, _)) = out.last() {
            if *prev >= date {
                return Err(load_err(format!("date {date} does not follow {prev}")));
            }
        }
        out.push((date, value));
    }
    Ok(out)
}

/// Loads one price file per market and places them on a common calendar.
///
/// Under [`CalendarPolicy::Union`] gaps are forward-filled and rows that are
/// still missing (before a series starts) are dropped.
pub fn load_prices(sources: &[SeriesSource], policy: CalendarPolicy) -> Result<PricePanel> {
    if sources.is_empty() {
        return Err(Error::Calendar("no price files given".into()));
    }
    let mut raw = Vec::with_capacity(sources.len());
    for src in sources {
        let obs = load_series_csv(&src.path, src.date_format.as_deref())?;
        if let Some(i) = obs.iter().position(|(_, p)| *p <= 0.0) {
            return Err(Error::Load {
                file: src.path.clone(),
                line: line_of(&src.path, src.date_format.as_deref(), i),
                msg: format!("non-positive price {}", obs[i].1),
            });
        }
        raw.push(obs.into_iter().collect::<BTreeMap<_, _>>());
    }

    let calendar: Vec<NaiveDate> = match policy {
        CalendarPolicy::Intersection => {
            let mut common: BTreeSet<NaiveDate> = raw[0].keys().cloned().collect();
            for m in &raw[1..] {
                common.retain(|d| m.contains_key(d));
            }
            common.into_iter().collect()
        }
        CalendarPolicy::Union => {
            let all: BTreeSet<NaiveDate> = raw.iter().flat_map(|m| m.keys().cloned()).collect();
            let start = raw
                .iter()
                .filter_map(|m| m.keys().next().cloned())
                .max()
                .unwrap_or_default();
            all.into_iter().filter(|d| *d >= start).collect()
        }
    };
    if calendar.is_empty() {
        return Err(Error::Calendar("price files share no common dates".to_string()));
    }

    let series = raw
        .iter()
        .map(|m| {
            let mut last = None;
            calendar
                .iter()
                .map(|d| {
                    if let Some(v) = m.get(d) {
                        last = Some(*v);
                    } else if let Some((_, v)) = m.range(..*d).next_back() {
                        last = Some(*v);
                    }
                    last.expect("calendar starts after every series begins")
                })
                .collect()
        })
        .collect();

    let panel = PricePanel {
        dates: calendar,
        names: sources.iter().map(|s| s.name.clone()).collect(),
        series,
    };
    panel.validate()?;
    Ok(panel)
}

// Line number in the file of the `idx`-th data row, accounting for a header.
fn line_of(path: &Path, fmt: Option<&str>, idx: usize) -> usize {
    let has_header = std::fs::read_to_string(path)
        .ok()
        .and_then(|s| s.lines().next().map(|l| l.to_string()))
        .map(|l| parse_date(l.split(',').next().unwrap_or(""), fmt).is_none())
        .unwrap_or(false);
    idx + 1 + usize::from(has_header)
}

pub fn log_returns(p: &PricePanel) -> Result<ReturnPanel> {
    p.validate()?;
    if p.len() < 2 {
        return Err(Error::Calendar("need at least two prices for a return".into()));
    }
    let series = p
        .series
        .iter()
        .map(|s| s.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        .collect();
    Ok(ReturnPanel {
        dates: p.dates[1..].to_vec(),
        names: p.names.clone(),
        series,
    })
}

/// Writes `date,<name_1>,...,<name_n>` rows.
pub fn write_wide_csv(path: &Path, dates: &[NaiveDate], names: &[String], series: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Export(e.to_string()))?;
    let mut header = vec!["date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Export(e.to_string()))?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.format("%Y-%m-%d").to_string()];
        row.extend(series.iter().map(|s| format!("{:e}", s[t])));
        w.write_record(&row).map_err(|e| Error::Export(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_wide_csv`].
pub fn read_wide_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Load {
        file: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let headers = rdr.headers().map_err(|e| Error::Load {
        file: path.to_path_buf(),
        line: 1,
        msg: e.to_string(),
    })?;
    let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut dates = Vec::new();
    let mut series = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let err = |msg: String| Error::Load {
            file: path.to_path_buf(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        dates.push(parse_date(&rec[0], None).ok_or_else(|| err(format!("bad date `{}`", &rec[0])))?);
        for (j, s) in series.iter_mut().enumerate() {
            let v: f64 = rec
                .get(j + 1)
                .ok_or_else(|| err("missing column".into()))?
                .parse()
                .map_err(|_| err(format!("bad number in column {}", j + 1)))?;
            s.push(v);
        }
    }
    Ok((dates, names, series))
}
