//! Tick-quantized limit order book snapshots, single-price clearing, and
//! books generated from the gas model.
//!
//! Aggregate depth follows the convention of a call auction: at price `p`
//! the aggregate bid is every bid willing to pay at least `p` (limit `≥ p`)
//! and the aggregate ask is every ask willing to sell at `p` (limit `≤ p`).
//! The clearing price maximizes `min(agg_bid, agg_ask)`.
//!
//! Prices are exact decimals. A snapshot stores per-level and aggregate
//! quantities as `f64` so that noise-free model books (real-valued means) and
//! share-count books share one type.
//!
//! # Synthetic sampling stream
//!
//! [`sample_synthetic_book`] seeds a `ChaCha8Rng` with
//! `SeedableRng::seed_from_u64(seed)`. The bid side is drawn first, walking
//! levels from the highest price down; the ask side follows, walking from the
//! lowest price up. Each side keeps a continuous exponential variable `Y`
//! (rate = the level's reduced energy `x`) and reports `floor(Y)` shares:
//!
//! * first level: `Y = E / x` with `E ~ Exp(1)` (`rand_distr::Exp1`);
//! * next level, `x' < x`: one `f64` uniform `U`; if `U < 1 − x'/x` then
//!   `Y += E / x'` with a fresh `E`.
//!
//! Every level's marginal is then exactly the geometric law `(1 − q) qⁿ`,
//! `q = e^{−x}`, while the aggregates stay monotone in price.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{mean_occupancy, GasParams, GibbsError, PriceOffset, Quantity, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BookError {
    #[error("EmptyBook: no orders or levels")]
    EmptyBook,
    #[error("NonPositiveTick: tick must be > 0, got {0}")]
    NonPositiveTick(Decimal),
    #[error("InvalidOrder: {0}")]
    InvalidOrder(String),
    #[error("InvalidBook: {0}")]
    InvalidBook(String),
    #[error("UnknownLevel: {0} is not a level of the book")]
    UnknownLevel(Decimal),
    #[error("NoTrade: no level has a positive tradeable quantity")]
    NoTrade,
    #[error("EmptyGrid: no tick-aligned price lies strictly between {low} and {high}")]
    EmptyGrid { low: f64, high: f64 },
    #[error(transparent)]
    Model(#[from] GibbsError),
    #[error("InvalidBookFile: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitOrder {
    pub side: Side,
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    pub price: Decimal,
    #[serde(rename = "qty")]
    pub quantity: u64,
}

impl LimitOrder {
    pub fn new(side: Side, price: Decimal, quantity: u64) -> Self {
        LimitOrder { side, price, quantity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BookLevel {
    pub price: Decimal,
    /// Shares whose bid limit quantizes to exactly this price.
    pub bid: f64,
    /// Shares whose ask limit quantizes to exactly this price.
    pub ask: f64,
    pub agg_bid: f64,
    pub agg_ask: f64,
}

impl BookLevel {
    pub fn tradeable(&self) -> f64 {
        self.agg_bid.min(self.agg_ask)
    }
}

/// An immutable aggregated book. Levels are strictly increasing in price and
/// tick-aligned; `agg_bid` is non-increasing and `agg_ask` non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderBookSnapshot {
    tick: Decimal,
    levels: Vec<BookLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearingResult {
    pub price: Decimal,
    pub tradeable: Quantity,
}

fn check_tick(tick: Decimal) -> Result<(), BookError> {
    if tick > Decimal::ZERO {
        Ok(())
    } else {
        Err(BookError::NonPositiveTick(tick))
    }
}

/// Round `price` to the nearest multiple of `tick`, halves rounding up.
pub fn quantize(price: Decimal, tick: Decimal) -> Decimal {
    let steps = (price / tick).round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero);
    (steps * tick).normalize()
}

impl OrderBookSnapshot {
    /// Build a snapshot from per-level (non-cumulative) quantities.
    pub fn from_level_quantities(tick: Decimal, mut levels: Vec<(Decimal, f64, f64)>) -> Result<Self, BookError> {
        check_tick(tick)?;
        if levels.is_empty() {
            return Err(BookError::EmptyBook);
        }
        levels.sort_by_key(|l| l.0);
        Self::check_prices(tick, levels.iter().map(|l| l.0))?;
        for &(price, bid, ask) in &levels {
            for q in [bid, ask] {
                if !(q.is_finite() && q >= 0.0) {
                    return Err(BookError::InvalidBook(format!("invalid quantity {q} at {price}")));
                }
            }
        }

        let mut out: Vec<BookLevel> = levels
            .iter()
            .map(|&(price, bid, ask)| BookLevel {
                price,
                bid,
                ask,
                agg_bid: 0.0,
                agg_ask: 0.0,
            })
            .collect();
        let mut running = 0.0;
        for level in out.iter_mut() {
            running += level.ask;
            level.agg_ask = running;
        }
        running = 0.0;
        for level in out.iter_mut().rev() {
            running += level.bid;
            level.agg_bid = running;
        }
        Ok(OrderBookSnapshot { tick, levels: out })
    }

    /// Build a snapshot from aggregate quantities, deriving the per-level
    /// quantities as differences of neighbouring aggregates.
    pub fn from_aggregates(tick: Decimal, mut levels: Vec<(Decimal, f64, f64)>) -> Result<Self, BookError> {
        check_tick(tick)?;
        if levels.is_empty() {
            return Err(BookError::EmptyBook);
        }
        levels.sort_by_key(|l| l.0);
        Self::check_prices(tick, levels.iter().map(|l| l.0))?;
        for &(price, bid, ask) in &levels {
            for q in [bid, ask] {
                if !(q.is_finite() && q >= 0.0) {
                    return Err(BookError::InvalidBook(format!("invalid aggregate {q} at {price}")));
                }
            }
        }
        for w in levels.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(BookError::InvalidBook(format!(
                    "aggregate bid increases from {} to {}",
                    w[0].0, w[1].0
                )));
            }
            if w[1].2 < w[0].2 {
                return Err(BookError::InvalidBook(format!(
                    "aggregate ask decreases from {} to {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let n = levels.len();
        let out = (0..n)
            .map(|i| {
                let (price, agg_bid, agg_ask) = levels[i];
                let above = if i + 1 < n { levels[i + 1].1 } else { 0.0 };
                let below = if i > 0 { levels[i - 1].2 } else { 0.0 };
                BookLevel {
                    price,
                    bid: agg_bid - above,
                    ask: agg_ask - below,
                    agg_bid,
                    agg_ask,
                }
            })
            .collect();
        Ok(OrderBookSnapshot { tick, levels: out })
    }

    fn check_prices(tick: Decimal, prices: impl Iterator<Item = Decimal>) -> Result<(), BookError> {
        let mut last: Option<Decimal> = None;
        for p in prices {
            if p <= Decimal::ZERO {
                return Err(BookError::InvalidBook(format!("non-positive price {p}")));
            }
            if !(p % tick).is_zero() {
                return Err(BookError::InvalidBook(format!(
                    "price {p} is not a multiple of tick {tick}"
                )));
            }
            if last == Some(p) {
                return Err(BookError::InvalidBook(format!("duplicate level {p}")));
            }
            last = Some(p);
        }
        Ok(())
    }

    pub fn tick(&self) -> Decimal {
        self.tick
    }

    pub fn levels(&self) -> &[BookLevel] {
        &self.levels
    }

    pub fn level(&self, price: Decimal) -> Option<&BookLevel> {
        self.levels
            .binary_search_by(|l| l.price.cmp(&price))
            .ok()
            .map(|i| &self.levels[i])
    }

    pub fn total_bid(&self) -> f64 {
        self.levels.first().map_or(0.0, |l| l.agg_bid)
    }

    pub fn total_ask(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.agg_ask)
    }
}

/// Aggregate raw orders into a snapshot on the `tick` grid.
pub fn aggregate_book(orders: &[LimitOrder], tick: Decimal) -> Result<OrderBookSnapshot, BookError> {
    check_tick(tick)?;
    if orders.is_empty() {
        return Err(BookError::EmptyBook);
    }
    let mut by_price: BTreeMap<Decimal, (u64, u64)> = BTreeMap::new();
    for order in orders {
        if order.price <= Decimal::ZERO {
            return Err(BookError::InvalidOrder(format!(
                "non-positive limit price {}",
                order.price
            )));
        }
        if order.quantity == 0 {
            return Err(BookError::InvalidOrder(format!("zero quantity at {}", order.price)));
        }
        let price = quantize(order.price, tick);
        if price <= Decimal::ZERO {
            return Err(BookError::InvalidOrder(format!(
                "limit price {} quantizes to {price}",
                order.price
            )));
        }
        let slot = by_price.entry(price).or_default();
        match order.side {
            Side::Bid => slot.0 += order.quantity,
            Side::Ask => slot.1 += order.quantity,
        }
    }
    let levels = by_price
        .into_iter()
        .map(|(p, (b, a))| (p, b as f64, a as f64))
        .collect();
    OrderBookSnapshot::from_level_quantities(tick, levels)
}

pub fn tradeable_quantity(book: &OrderBookSnapshot, price: Decimal) -> Result<Quantity, BookError> {
    let level = book.level(price).ok_or(BookError::UnknownLevel(price))?;
    Ok(Quantity::new(level.tradeable())?)
}

/// The level maximizing tradeable quantity. Ties go to the level nearest
/// `prev_close`, then to the lower price.
pub fn clearing_price(book: &OrderBookSnapshot, prev_close: Decimal) -> Result<ClearingResult, BookError> {
    clear_with_reference(book, Some(prev_close))
}

/// As [`clearing_price`]; without a reference price ties go to the lower
/// price.
pub fn clear_with_reference(
    book: &OrderBookSnapshot,
    prev_close: Option<Decimal>,
) -> Result<ClearingResult, BookError> {
    let distance = |p: Decimal| prev_close.map(|r| (p - r).abs());
    let mut best: Option<&BookLevel> = None;
    for level in &book.levels {
        let better = match best {
            None => true,
            Some(b) => match level.tradeable().partial_cmp(&b.tradeable()) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => distance(level.price) < distance(b.price),
                _ => false,
            },
        };
        if better {
            best = Some(level);
        }
    }
    let best = best.ok_or(BookError::EmptyBook)?;
    if best.tradeable() <= 0.0 {
        return Err(BookError::NoTrade);
    }
    Ok(ClearingResult {
        price: best.price,
        tradeable: Quantity::new(best.tradeable())?,
    })
}

/// A tick-aligned price level together with its offset from the previous close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub price: Decimal,
    pub offset: PriceOffset,
}

fn to_f64(d: Decimal) -> f64 {
    d.to_f64().unwrap_or(f64::NAN)
}

/// Positive tick multiples strictly inside both gases' domains, ascending.
pub fn model_grid(
    bid: &GasParams,
    ask: &GasParams,
    prev_close: Decimal,
    tick: Decimal,
) -> Result<Vec<GridPoint>, BookError> {
    check_tick(tick)?;
    if bid.side() != Side::Bid {
        return Err(GibbsError::SideMismatch {
            expected: Side::Bid,
            found: bid.side(),
        }
        .into());
    }
    if ask.side() != Side::Ask {
        return Err(GibbsError::SideMismatch {
            expected: Side::Ask,
            found: ask.side(),
        }
        .into());
    }
    let prev = to_f64(prev_close);
    let low = prev + bid.singular_offset();
    let high = prev + ask.singular_offset();
    let tick_f = to_f64(tick);
    let start = ((low / tick_f).floor() as i64 - 1).max(1);
    let end = (high / tick_f).ceil() as i64 + 1;

    let mut grid = Vec::new();
    for k in start..=end {
        let price = Decimal::from(k) * tick;
        let offset = PriceOffset(to_f64(price - prev_close));
        if bid.contains(offset) && ask.contains(offset) {
            grid.push(GridPoint {
                price: price.normalize(),
                offset,
            });
        }
    }
    if grid.is_empty() {
        return Err(BookError::EmptyGrid { low, high });
    }
    Ok(grid)
}

/// Noise-free book whose aggregates are the model's mean occupancies.
pub fn model_book(
    bid: &GasParams,
    ask: &GasParams,
    prev_close: Decimal,
    tick: Decimal,
) -> Result<OrderBookSnapshot, BookError> {
    let grid = model_grid(bid, ask, prev_close, tick)?;
    let levels = grid
        .iter()
        .map(|g| {
            Ok((
                g.price,
                mean_occupancy(g.offset, bid)?.value(),
                mean_occupancy(g.offset, ask)?.value(),
            ))
        })
        .collect::<Result<Vec<_>, GibbsError>>()?;
    OrderBookSnapshot::from_aggregates(tick, levels)
}

/// Draw one side's aggregate quantities. `energies` must be strictly
/// decreasing; the result is non-decreasing.
fn sample_side(rng: &mut ChaCha8Rng, energies: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(energies.len());
    let mut y = 0.0;
    let mut prev_x: Option<f64> = None;
    for &x in energies {
        match prev_x {
            None => {
                let e: f64 = rng.sample(Exp1);
                y = e / x;
            }
            Some(px) => {
                let u: f64 = rng.random();
                if u < 1.0 - x / px {
                    let e: f64 = rng.sample(Exp1);
                    y += e / x;
                }
            }
        }
        prev_x = Some(x);
        out.push(y.floor());
    }
    out
}

/// One random book whose aggregate quantity at each level follows that
/// side's geometric law. Deterministic in `seed`; see the module docs for the
/// stream layout.
pub fn sample_synthetic_book(
    bid: &GasParams,
    ask: &GasParams,
    prev_close: Decimal,
    tick: Decimal,
    seed: u64,
) -> Result<OrderBookSnapshot, BookError> {
    let grid = model_grid(bid, ask, prev_close, tick)?;
    let sampler = LevelSampler::new(bid, ask, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (agg_bid, agg_ask) = sampler.draw(&mut rng);
    let levels = grid
        .iter()
        .zip(agg_bid.into_iter().zip(agg_ask))
        .map(|(g, (b, a))| (g.price, b, a))
        .collect();
    OrderBookSnapshot::from_aggregates(tick, levels)
}

/// Precomputed reduced energies for repeated draws on a fixed grid.
#[derive(Debug, Clone)]
pub struct LevelSampler {
    /// Bid energies from the top price down.
    bid_energies: Vec<f64>,
    /// Ask energies from the bottom price up.
    ask_energies: Vec<f64>,
}

impl LevelSampler {
    pub fn new(bid: &GasParams, ask: &GasParams, grid: &[GridPoint]) -> Result<Self, GibbsError> {
        let bid_energies = grid
            .iter()
            .rev()
            .map(|g| bid.reduced_energy(g.offset))
            .collect::<Result<_, _>>()?;
        let ask_energies = grid
            .iter()
            .map(|g| ask.reduced_energy(g.offset))
            .collect::<Result<_, _>>()?;
        Ok(LevelSampler {
            bid_energies,
            ask_energies,
        })
    }

    /// Aggregate bid and ask quantities in ascending price order.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let mut bids = sample_side(rng, &self.bid_energies);
        bids.reverse();
        let asks = sample_side(rng, &self.ask_energies);
        (bids, asks)
    }
}

// ---- JSON book files ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrdersFile {
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    tick: Decimal,
    orders: Vec<LimitOrder>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelRecord {
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    price: Decimal,
    bid: f64,
    ask: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelsFile {
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    tick: Decimal,
    levels: Vec<LevelRecord>,
}

/// Parse a book file in either the raw `orders` form or the aggregated
/// `levels` form. In the `levels` form `bid`/`ask` are aggregate quantities.
pub fn read_book_json(text: &str) -> Result<OrderBookSnapshot, BookError> {
    let json_err = |e: serde_json::Error| BookError::Json(e.to_string());
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    let has = |key: &str| value.get(key).is_some();
    if has("orders") {
        let f: OrdersFile = serde_json::from_value(value).map_err(json_err)?;
        aggregate_book(&f.orders, f.tick)
    } else if has("levels") {
        let f: LevelsFile = serde_json::from_value(value).map_err(json_err)?;
        OrderBookSnapshot::from_aggregates(f.tick, f.levels.into_iter().map(|l| (l.price, l.bid, l.ask)).collect())
    } else {
        Err(BookError::Json("expected an `orders` or `levels` array".into()))
    }
}

/// Raw orders from an `orders`-form file.
pub fn read_orders_json(text: &str) -> Result<(Decimal, Vec<LimitOrder>), BookError> {
    let f: OrdersFile = serde_json::from_str(text).map_err(|e| BookError::Json(e.to_string()))?;
    Ok((f.tick, f.orders))
}

pub fn write_orders_json(tick: Decimal, orders: &[LimitOrder]) -> String {
    let file = OrdersFile {
        tick,
        orders: orders.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("orders serialize")
}

/// Serialize a snapshot in the aggregated `levels` form. Prices keep the
/// tick's decimal places.
pub fn write_book_json(book: &OrderBookSnapshot) -> String {
    let scale = book.tick.normalize().scale();
    let file = LevelsFile {
        tick: book.tick.normalize(),
        levels: book
            .levels
            .iter()
            .map(|l| {
                let mut price = l.price;
                price.rescale(scale);
                LevelRecord {
                    price,
                    bid: l.agg_bid,
                    ask: l.agg_ask,
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("levels serialize")
}
