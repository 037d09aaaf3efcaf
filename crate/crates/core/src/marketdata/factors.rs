use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{stats, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
    Annual,
}

impl Frequency {
    /// First day of the period that contains `d`.
    fn period_start(self, d: NaiveDate) -> NaiveDate {
        match self {
            Frequency::Daily => d,
            Frequency::Weekly => d - chrono::Days::new(d.weekday().num_days_from_monday() as u64),
            Frequency::Monthly => d.with_day(1).expect("day 1 exists"),
            Frequency::Annual => NaiveDate::from_ymd_opt(d.year(), 1, 1).expect("Jan 1 exists"),
        }
    }
}

/// One driver series at its native frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFactor {
    pub name: String,
    pub frequency: Frequency,
    pub observations: Vec<(NaiveDate, f64)>,
}

/// Driver series aligned onto the trading calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub native_frequency: Vec<Frequency>,
    pub standardized: bool,
}

impl FactorPanel {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }
}

/// Forward-fills every factor onto `calendar`; dates before a factor's first
/// observation take that first value. Weekly, monthly and annual observations
/// are keyed to the start of their period, so a value holds for every trading
/// day of the period it describes.
pub fn align_factors(raw: &[RawFactor], calendar: &[NaiveDate]) -> Result<FactorPanel> {
    if calendar.is_empty() {
        return Err(Error::Alignment("empty calendar".into()));
    }
    let (first, last) = (calendar[0], calendar[calendar.len() - 1]);
    let mut values = Vec::with_capacity(raw.len());
    for f in raw {
        if f.observations.is_empty() {
            return Err(Error::Alignment(format!("factor `{}` has no observations", f.name)));
        }
        let mut obs: Vec<(NaiveDate, f64)> = f
            .observations
            .iter()
            .map(|(d, v)| (f.frequency.period_start(*d), *v))
            .collect();
        obs.sort_by_key(|(d, _)| *d);
        // later observations within the same period win
        obs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = b.1;
                true
            } else {
                false
            }
        });
        let span_start = f.frequency.period_start(first);
        if !obs.iter().any(|(d, _)| *d >= span_start && *d <= last) {
            return Err(Error::Alignment(format!(
                "factor `{}` has no observation between {first} and {last}",
                f.name
            )));
        }
        if let Some((_, v)) = obs.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Alignment(format!(
                "factor `{}` has non-finite value {v}",
                f.name
            )));
        }

        let mut aligned = Vec::with_capacity(calendar.len());
        let mut idx = 0usize;
        let mut current = obs[0].1;
        for d in calendar {
            while idx < obs.len() && obs[idx].0 <= *d {
                current = obs[idx].1;
                idx += 1;
            }
            aligned.push(current);
        }
        values.push(aligned);
    }
    Ok(FactorPanel {
        dates: calendar.to_vec(),
        names: raw.iter().map(|f| f.name.clone()).collect(),
        values,
        native_frequency: raw.iter().map(|f| f.frequency).collect(),
        standardized: false,
    })
}

/// `(x - mean) / std` per factor with the population (1/Q) standard deviation.
pub fn standardize(f: &FactorPanel) -> Result<FactorPanel> {
    let mut out = f.clone();
    for (name, col) in out.names.iter().zip(out.values.iter_mut()) {
        let m = stats::mean(col);
        let sd = stats::variance(col).sqrt();
        let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if !(sd > 1e-14 * scale) {
            return Err(Error::Standardization(name.clone()));
        }
        for v in col.iter_mut() {
            *v = (*v - m) / sd;
        }
    }
    out.standardized = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut cur = start;
        while out.len() < n {
            if cur.weekday().num_days_from_monday() < 5 {
                out.push(cur);
            }
            cur = cur.succ_opt().unwrap();
        }
        out
    }

    #[test]
    fn monthly_value_repeats_within_month() {
        let cal = business_days(d(2024, 1, 1), 60);
        let f = RawFactor {
            name: "EPU".into(),
            frequency: Frequency::Monthly,
            observations: vec![(d(2024, 1, 31), 1.0), (d(2024, 2, 29), 2.0), (d(2024, 3, 31), 3.0)],
        };
        let p = align_factors(&[f], &cal).unwrap();
        for (date, v) in cal.iter().zip(&p.values[0]) {
            assert_eq!(*v, date.month() as f64, "{date}");
        }
    }

    #[test]
    fn leading_dates_are_back_filled() {
        let cal = business_days(d(2024, 1, 1), 10);
        let f = RawFactor {
            name: "VIX".into(),
            frequency: Frequency::Daily,
            observations: vec![(cal[4], 7.0), (cal[6], 8.0)],
        };
        let p = align_factors(&[f], &cal).unwrap();
        assert_eq!(p.values[0], vec![7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 8.0, 8.0, 8.0, 8.0]);
    }

    #[test]
    fn weekly_fill_on_ten_day_calendar() {
        // 2024-01-01 is a Monday
        let cal = business_days(d(2024, 1, 1), 10);
        let f = RawFactor {
            name: "COS".into(),
            frequency: Frequency::Weekly,
            observations: vec![(d(2024, 1, 1), 1.0), (d(2024, 1, 8), 2.0)],
        };
        let p = align_factors(&[f], &cal).unwrap();
        assert_eq!(p.values[0][..5], [1.0; 5]);
        assert_eq!(p.values[0][5..], [2.0; 5]);
    }

    #[test]
    fn empty_factor_is_an_error() {
        let cal = business_days(d(2024, 1, 1), 10);
        let f = RawFactor {
            name: "GND".into(),
            frequency: Frequency::Annual,
            observations: vec![],
        };
        assert!(matches!(align_factors(&[f], &cal), Err(Error::Alignment(_))));
    }

    fn panel(values: Vec<f64>) -> FactorPanel {
        FactorPanel {
            dates: business_days(d(2024, 1, 1), values.len()),
            names: vec!["f".into()],
            values: vec![values],
            native_frequency: vec![Frequency::Daily],
            standardized: false,
        }
    }

    #[test]
    fn standardize_uses_population_std() {
        let s = standardize(&panel(vec![1.0, 2.0, 3.0])).unwrap();
        let a = 1.5f64.sqrt();
        assert!((s.values[0][0] + a).abs() < 1e-12);
        assert!(s.values[0][1].abs() < 1e-12);
        assert!((s.values[0][2] - a).abs() < 1e-12);
        assert!(s.standardized);
    }

    #[test]
    fn standardize_is_idempotent() {
        let once = standardize(&panel(vec![3.0, -1.0, 4.0, 1.0, 5.0, 9.0])).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.values[0].iter().zip(&twice.values[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_factor_cannot_be_standardized() {
        match standardize(&panel(vec![2.0; 5])) {
            Err(Error::Standardization(name)) => assert_eq!(name, "f"),
            other => panic!("{other:?}"),
        }
    }
}
