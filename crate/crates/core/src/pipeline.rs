//! OHLCV bars → bid/ask temperatures, ΔT and the volume accumulation
//! oscillator (VAO).
//!
//! Each bar after the first is one interval: the previous bar's close is the
//! reference price, the bar's low and high stand in for the minimum bid and
//! maximum ask, and its volume is the exchanged quantity. The linearized
//! temperature difference of a bar is `2 n̄ [(low + high)/2 − close]`; its
//! rolling sum over `N` bars is the VAO. `n̄` is taken per bar.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{linearized_temperatures, temperatures_from_observables, GibbsError, MarketObservables};

pub const OHLCV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];
pub const OUTPUT_HEADER: &str = "date,t_bid,t_ask,delta_t,t_bid_lin,t_ask_lin,delta_t_lin,vao,flags";
pub const DEFAULT_VAO_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("ParseError: line {line}, column {column}: {message}")]
    Parse { line: u64, column: String, message: String },
    #[error("OrderingError: line {line}: date {date} does not follow {previous}")]
    Ordering {
        line: u64,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("InvariantError: line {line}: {message}")]
    Invariant { line: u64, message: String },
    #[error("TooFewBars: need at least 2 bars, got {0}")]
    TooFewBars(usize),
    #[error("ZeroVolume: bar {0} has zero volume")]
    ZeroVolume(NaiveDate),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] GibbsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    ZeroVolume,
    DegenerateBid,
    DegenerateAsk,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::ZeroVolume => "ZERO_VOLUME",
            Flag::DegenerateBid => "DEGENERATE_BID",
            Flag::DegenerateAsk => "DEGENERATE_ASK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoRecord {
    pub date: NaiveDate,
    pub t_bid: Option<f64>,
    pub t_ask: Option<f64>,
    pub delta_t: Option<f64>,
    pub t_bid_lin: Option<f64>,
    pub t_ask_lin: Option<f64>,
    pub delta_t_lin: Option<f64>,
    pub vao: Option<f64>,
    pub flags: BTreeSet<Flag>,
}

impl ThermoRecord {
    fn empty(date: NaiveDate) -> Self {
        ThermoRecord {
            date,
            t_bid: None,
            t_ask: None,
            delta_t: None,
            t_bid_lin: None,
            t_ask_lin: None,
            delta_t_lin: None,
            vao: None,
            flags: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub vao_window: usize,
    pub skip_zero_volume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vao_window: DEFAULT_VAO_WINDOW,
            skip_zero_volume: true,
        }
    }
}

impl PipelineConfig {
    pub fn new(vao_window: usize, skip_zero_volume: bool) -> Result<Self, PipelineError> {
        if vao_window == 0 {
            return Err(PipelineError::InvalidConfig("vao_window must be >= 1".into()));
        }
        Ok(PipelineConfig {
            vao_window,
            skip_zero_volume,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn parse_error(line: u64, column: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse {
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Parse OHLCV CSV text (header `date,open,high,low,close,volume`).
pub fn parse_ohlcv(text: &str) -> Result<Vec<DailyBar>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    match records.next() {
        None => return Err(parse_error(1, "header", "missing header")),
        Some(Err(e)) => return Err(parse_error(1, "header", e.to_string())),
        Some(Ok(h)) => {
            if h.iter().ne(OHLCV_HEADER) {
                return Err(parse_error(
                    1,
                    "header",
                    format!(
                        "expected `{}`, found `{}`",
                        OHLCV_HEADER.join(","),
                        h.iter().collect::<Vec<_>>().join(",")
                    ),
                ));
            }
        }
    }

    let mut bars: Vec<DailyBar> = Vec::new();
    for record in records {
        let record = record.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), "row", e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != OHLCV_HEADER.len() {
            return Err(parse_error(
                line,
                "row",
                format!("expected 6 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_error(line, "date", format!("`{}`: {e}", &record[0])))?;
        let price = |i: usize| -> Result<f64, PipelineError> {
            let name = OHLCV_HEADER[i];
            let v: f64 = record[i]
                .parse()
                .map_err(|e| parse_error(line, name, format!("`{}`: {e}", &record[i])))?;
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(parse_error(
                    line,
                    name,
                    format!("price must be finite and > 0, got `{}`", &record[i]),
                ))
            }
        };
        let (open, high, low, close) = (price(1)?, price(2)?, price(3)?, price(4)?);
        let volume: u64 = record[5]
            .parse()
            .map_err(|e| parse_error(line, "volume", format!("`{}`: {e}", &record[5])))?;

        if low > high {
            return Err(PipelineError::Invariant {
                line,
                message: format!("low {low} above high {high}"),
            });
        }
        for (name, v) in [("open", open), ("close", close)] {
            if v < low || v > high {
                return Err(PipelineError::Invariant {
                    line,
                    message: format!("{name} {v} outside [low {low}, high {high}]"),
                });
            }
        }
        if let Some(prev) = bars.last() {
            if date <= prev.date {
                return Err(PipelineError::Ordering {
                    line,
                    date,
                    previous: prev.date,
                });
            }
        }
        bars.push(DailyBar {
            date,
            open,
            high,
            low,
            close,
            volume,
        });
    }
    Ok(bars)
}

/// Per-interval temperatures for every bar after the first. `vao` is left
/// empty; see [`vao_series`].
pub fn thermo_series(bars: &[DailyBar], cfg: &PipelineConfig) -> Result<Vec<ThermoRecord>, PipelineError> {
    if bars.len() < 2 {
        return Err(PipelineError::TooFewBars(bars.len()));
    }
    bars.windows(2)
        .map(|w| {
            let (prev, bar) = (&w[0], &w[1]);
            let mut rec = ThermoRecord::empty(bar.date);
            if bar.volume == 0 {
                if !cfg.skip_zero_volume {
                    return Err(PipelineError::ZeroVolume(bar.date));
                }
                rec.flags.insert(Flag::ZeroVolume);
                return Ok(rec);
            }
            let m = MarketObservables::new(prev.close, bar.close, bar.low, bar.high, bar.volume as f64)?;
            let exact = temperatures_from_observables(&m)?;
            let lin = linearized_temperatures(&m)?;
            rec.t_bid = Some(exact.bid);
            rec.t_ask = Some(exact.ask);
            rec.delta_t = Some(exact.difference());
            rec.t_bid_lin = Some(lin.bid);
            rec.t_ask_lin = Some(lin.ask);
            rec.delta_t_lin = Some(lin.difference);
            if exact.bid_degenerate {
                rec.flags.insert(Flag::DegenerateBid);
            }
            if exact.ask_degenerate {
                rec.flags.insert(Flag::DegenerateAsk);
            }
            Ok(rec)
        })
        .collect()
}

/// Fill `vao` with the sum of `delta_t_lin` over the trailing `N` non-null
/// records, oldest first. Stays null until `N` values have been seen and on
/// records that have no `delta_t_lin` of their own.
pub fn vao_series(mut records: Vec<ThermoRecord>, cfg: &PipelineConfig) -> Vec<ThermoRecord> {
    let n = cfg.vao_window.max(1);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(n + 1);
    for rec in records.iter_mut() {
        rec.vao = None;
        let Some(d) = rec.delta_t_lin else { continue };
        window.push_back(d);
        if window.len() > n {
            window.pop_front();
        }
        if window.len() == n {
            rec.vao = Some(window.iter().sum());
        }
    }
    records
}

/// `thermo_series` followed by `vao_series`.
pub fn run_pipeline(bars: &[DailyBar], cfg: &PipelineConfig) -> Result<Vec<ThermoRecord>, PipelineError> {
    Ok(vao_series(thermo_series(bars, cfg)?, cfg))
}

fn push_opt(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        // shortest representation that parses back to the same f64
        write!(out, "{v}").expect("write to String");
    }
}

pub fn write_output(records: &[ThermoRecord], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::with_capacity(64 * (records.len() + 1));
            out.push_str(OUTPUT_HEADER);
            out.push('\n');
            for r in records {
                write!(out, "{}", r.date.format("%Y-%m-%d")).expect("write to String");
                for v in [
                    r.t_bid,
                    r.t_ask,
                    r.delta_t,
                    r.t_bid_lin,
                    r.t_ask_lin,
                    r.delta_t_lin,
                    r.vao,
                ] {
                    push_opt(&mut out, v);
                }
                out.push(',');
                let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
                out.push_str(&flags.join("|"));
                out.push('\n');
            }
            out
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(records).expect("records serialize");
            s.push('\n');
            s
        }
    }
}

pub fn parse_json_output(text: &str) -> Result<Vec<ThermoRecord>, serde_json::Error> {
    serde_json::from_str(text)
}
