//! Tick parsing, minute resampling and return computation.
//!
//! A session minute `k` (zero based, counted from the session open) carries
//! the price of the last in-session trade strictly before the boundary
//! `open + (k + 1)` minutes. Minutes without trades repeat the previous
//! minute's price.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Identifier of the resampling rule written into price-series artifacts.
pub const RESAMPLE_RULE: &str = "last-before-boundary-ffill";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord<F> {
    pub timestamp: NaiveDateTime,
    pub price: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries<F> {
    pub records: Vec<TickRecord<F>>,
    /// Rows dropped because they were malformed or carried a non-positive price.
    pub rejected: usize,
}

/// Layout of a delimited tick file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputFormat {
    pub delimiter: char,
    pub timestamp_column: String,
    pub price_column: String,
    /// `chrono` format string; fractional seconds are accepted with `%.f`.
    pub timestamp_format: String,
}

impl Default for InputFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
            timestamp_format: "%Y-%m-%d %H:%M:%S%.f".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOverride {
    pub date: NaiveDate,
    pub open: NaiveTime,
    pub close: NaiveTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    pub id: String,
    pub session_open: NaiveTime,
    pub session_close: NaiveTime,
    #[serde(default)]
    pub overrides: Vec<SessionOverride>,
}

impl TradingCalendar {
    pub fn new(id: impl Into<String>, open: NaiveTime, close: NaiveTime) -> Result<Self> {
        let cal = Self {
            id: id.into(),
            session_open: open,
            session_close: close,
            overrides: Vec::new(),
        };
        cal.validate()?;
        Ok(cal)
    }

    /// Milan continuous session from 28 September 2009: 507 minutes per day.
    ///
    /// The two minutes after 17:25 hold the closing prices.
    pub fn borsa_italiana() -> Self {
        Self {
            id: "borsa-italiana".into(),
            session_open: hm(9, 0),
            session_close: hm(17, 27),
            overrides: Vec::new(),
        }
    }

    /// Milan session before 28 September 2009, continuous trading from 9:05: 502 minutes.
    pub fn borsa_italiana_pre_2009() -> Self {
        Self {
            id: "borsa-italiana-pre-2009".into(),
            session_open: hm(9, 5),
            session_close: hm(17, 27),
            overrides: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.session_open >= self.session_close {
            return Err(Error::Config(format!(
                "calendar {}: session open {} is not before close {}",
                self.id, self.session_open, self.session_close
            )));
        }
        for o in &self.overrides {
            if o.open >= o.close {
                return Err(Error::Config(format!(
                    "calendar {}: override on {} opens after it closes",
                    self.id, o.date
                )));
            }
        }
        Ok(())
    }

    /// Session bounds for `date`, honouring per-day overrides.
    pub fn session(&self, date: NaiveDate) -> (NaiveTime, NaiveTime) {
        self.overrides
            .iter()
            .find(|o| o.date == date)
            .map(|o| (o.open, o.close))
            .unwrap_or((self.session_open, self.session_close))
    }

    /// Whole session minutes on `date`.
    pub fn minutes(&self, date: NaiveDate) -> usize {
        let (open, close) = self.session(date);
        ((close - open).num_seconds() / 60) as usize
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cal: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calendar serializes")
    }
}

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).expect("valid time")
}

/// One trading day of minute prices. `prices[k]` belongs to session minute
/// `first_minute + k`; `first_minute > 0` marks a late opening.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingDay<F> {
    pub date: NaiveDate,
    pub first_minute: usize,
    pub prices: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries<F> {
    pub symbol: String,
    pub calendar_id: String,
    pub rule: String,
    pub days: Vec<TradingDay<F>>,
}

impl<F: Real> PriceSeries<F> {
    pub fn len(&self) -> usize {
        self.days.iter().map(|d| d.prices.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One tick per minute, stamped at the minute's start. Resampling these
    /// ticks with the same calendar reproduces the series.
    pub fn to_ticks(&self, cal: &TradingCalendar) -> TickSeries<F> {
        let mut records = Vec::with_capacity(self.len());
        for day in &self.days {
            let (open, _) = cal.session(day.date);
            let start = day.date.and_time(open);
            for (k, &price) in day.prices.iter().enumerate() {
                let minute = (day.first_minute + k) as i64;
                records.push(TickRecord {
                    timestamp: start + Duration::minutes(minute),
                    price,
                });
            }
        }
        TickSeries {
            records,
            rejected: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayReturns<F> {
    pub date: NaiveDate,
    pub returns: Vec<F>,
}

/// Intraday minute returns per day, with close-to-open returns kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReturnSeries<F> {
    pub days: Vec<DayReturns<F>>,
    pub overnight: Vec<F>,
}

impl<F: Real> RawReturnSeries<F> {
    pub fn len(&self) -> usize {
        self.days.iter().map(|d| d.returns.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All intraday returns in time order.
    pub fn concatenated(&self) -> Vec<F> {
        self.days.iter().flat_map(|d| d.returns.iter().copied()).collect()
    }

    /// Offsets into [`Self::concatenated`] at which each day starts.
    pub fn day_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.days.len());
        let mut at = 0;
        for d in &self.days {
            starts.push(at);
            at += d.returns.len();
        }
        starts
    }

    /// Single-day series, handy for tests and synthetic inputs.
    pub fn from_values(returns: Vec<F>) -> Self {
        Self {
            days: vec![DayReturns {
                date: NaiveDate::default(),
                returns,
            }],
            overnight: Vec::new(),
        }
    }
}

fn parse_timestamp(raw: &str, format: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, format)
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f").ok())
}

/// Parses delimited tick records. Rows with an unparsable timestamp or price,
/// or a non-positive price, are counted in `rejected`.
pub fn parse_ticks<F: Real, R: Read>(raw: R, format: &InputFormat) -> Result<TickSeries<F>> {
    if !format.delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {:?} is not a single byte",
            format.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if e.is_io_error() => return Err(Error::Input(e.to_string())),
        Err(_) => return Err(Error::EmptyInput),
    };
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("missing column {name:?}")))
    };
    let ts_col = column(&format.timestamp_column)?;
    let px_col = column(&format.price_column)?;

    let mut records = Vec::new();
    let mut rejected = 0;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(Error::Input(e.to_string())),
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let timestamp = row
            .get(ts_col)
            .and_then(|s| parse_timestamp(s, &format.timestamp_format));
        let price = row
            .get(px_col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|p| p.is_finite() && *p > 0.0);
        match (timestamp, price) {
            (Some(timestamp), Some(price)) => records.push(TickRecord {
                timestamp,
                price: F::of(price),
            }),
            _ => rejected += 1,
        }
    }
    if rejected > 0 {
        warn!("rejected {rejected} malformed or non-positive tick rows");
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    records.sort_by_key(|r| r.timestamp);
    Ok(TickSeries { records, rejected })
}

fn resample_day<F: Real>(
    date: NaiveDate,
    ticks: &[TickRecord<F>],
    cal: &TradingCalendar,
) -> Option<TradingDay<F>> {
    let (open, close) = cal.session(date);
    let open = date.and_time(open);
    let close = date.and_time(close);
    let minutes = cal.minutes(date);
    let in_session: Vec<&TickRecord<F>> = ticks
        .iter()
        .filter(|t| t.timestamp >= open && t.timestamp < close)
        .collect();
    let Some(first) = in_session.first() else {
        warn!("{date}: no trade inside the session, day skipped");
        return None;
    };
    let first_minute = ((first.timestamp - open).num_seconds() / 60) as usize;

    let mut prices = Vec::with_capacity(minutes - first_minute);
    let mut cursor = 0;
    let mut last = first.price;
    for k in first_minute..minutes {
        let boundary = open + Duration::minutes(k as i64 + 1);
        while cursor < in_session.len() && in_session[cursor].timestamp < boundary {
            last = in_session[cursor].price;
            cursor += 1;
        }
        prices.push(last);
    }
    Some(TradingDay {
        date,
        first_minute,
        prices,
    })
}

/// Resamples sorted ticks onto the calendar's minute grid. Days are processed
/// in parallel and merged in date order.
pub fn resample_minutes<F: Real>(
    ticks: &TickSeries<F>,
    cal: &TradingCalendar,
    symbol: &str,
) -> Result<PriceSeries<F>> {
    cal.validate()?;
    let mut by_day: BTreeMap<NaiveDate, Vec<TickRecord<F>>> = BTreeMap::new();
    for t in &ticks.records {
        by_day.entry(t.timestamp.date()).or_default().push(*t);
    }
    let groups: Vec<(NaiveDate, Vec<TickRecord<F>>)> = by_day.into_iter().collect();
    let days: Vec<TradingDay<F>> = groups
        .par_iter()
        .filter_map(|(date, day_ticks)| resample_day(*date, day_ticks, cal))
        .collect();
    Ok(PriceSeries {
        symbol: symbol.to_string(),
        calendar_id: cal.id.clone(),
        rule: RESAMPLE_RULE.to_string(),
        days,
    })
}

/// Simple one-minute returns `(S(t+1) - S(t)) / S(t)` within each day.
pub fn compute_returns<F: Real>(prices: &PriceSeries<F>) -> Result<RawReturnSeries<F>> {
    let mut days = Vec::with_capacity(prices.days.len());
    let mut overnight = Vec::new();
    let mut previous_close: Option<F> = None;
    for day in &prices.days {
        if let Some(p) = day.prices.iter().find(|p| !(**p > F::zero())) {
            return Err(Error::Input(format!(
                "{}: non-positive price {p}",
                day.date
            )));
        }
        if day.prices.len() < 2 {
            warn!("{}: fewer than two minutes, no returns", day.date);
        }
        let returns = day
            .prices
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .collect();
        if let (Some(close), Some(&open)) = (previous_close, day.prices.first()) {
            overnight.push((open - close) / close);
        }
        if let Some(&close) = day.prices.last() {
            previous_close = Some(close);
        }
        days.push(DayReturns {
            date: day.date,
            returns,
        });
    }
    Ok(RawReturnSeries { days, overnight })
}
