//! Grand-canonical occupancy laws for the bid and ask "gases" of a limit
//! order book.
//!
//! Each side of the book is modelled as an ideal Bose gas whose particles are
//! shares and whose energy levels are price offsets from the previous close,
//! `ε = p(t) − p̄(t − Δt)`. The Boltzmann constant is fixed at 1, so
//! temperatures and chemical potentials are both in price units.
//!
//! Sign conventions used throughout:
//!
//! ```text
//! bid:  x_b = (ε − μ_b) / T_b        n̄_b(ε) = 1 / (e^{x_b} − 1)    diverges at ε = μ_b
//! ask:  x_a = (−μ_a − ε) / T_a       n̄_a(ε) = 1 / (e^{x_a} − 1)    diverges at ε = −μ_a
//!
//! equilibrium:  ε̄ = (T_a μ_b − T_b μ_a) / (T_a + T_b)
//!               n̄ = 1 / (e^{−(μ_a + μ_b)/(T_a + T_b)} − 1)
//!
//! temperatures: L = ln(1 + 1/n̄)
//!               T_b = (p̄ − p_min) / L        T_a = (p_max − p̄) / L
//! ```
//!
//! `x` (the "reduced energy") is the distance from the singular point in units
//! of temperature; it is strictly positive on each side's domain. All
//! transcendental functions go through `libm` so results are bit-identical
//! across platforms.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side of the book a gas (or an order) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Bid => f.write_str("bid"),
            Side::Ask => f.write_str("ask"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GibbsError {
    #[error("InvalidTemperature: temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("InvalidChemicalPotential: chemical potential must be finite and < 0, got {0}")]
    InvalidChemicalPotential(f64),
    #[error("NonFinite: {what} is not finite")]
    NonFinite { what: &'static str },
    #[error("InvalidQuantity: quantity must be finite and >= 0, got {0}")]
    InvalidQuantity(f64),
    #[error("Divergence: {side} occupancy diverges at offset {offset}")]
    Divergence { side: Side, offset: f64 },
    #[error("OutOfDomain: offset {offset} lies beyond the {side} singular point {singular}")]
    OutOfDomain { side: Side, offset: f64, singular: f64 },
    #[error("SideMismatch: expected {expected} gas, got {found}")]
    SideMismatch { expected: Side, found: Side },
    #[error("NoIntersection: bid singular point {mu_bid} is not below ask singular point {ask_edge}")]
    NoIntersection { mu_bid: f64, ask_edge: f64 },
    #[error("ZeroVolume: exchanged volume must be > 0")]
    ZeroVolume,
    #[error("InvalidObservables: {0}")]
    InvalidObservables(String),
}

/// Offset of a price from the previous closing price, in currency units.
/// May be negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceOffset(pub f64);

impl PriceOffset {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for PriceOffset {
    fn from(v: f64) -> Self {
        PriceOffset(v)
    }
}

/// A non-negative, finite number of shares. Model quantities are real-valued
/// averages, so this is not restricted to integers.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Quantity(f64);

impl Quantity {
    pub const ZERO: Quantity = Quantity(0.0);

    pub fn new(value: f64) -> Result<Self, GibbsError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Quantity(value))
        } else {
            Err(GibbsError::InvalidQuantity(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Quantity::new(v).map_err(serde::de::Error::custom)
    }
}

/// Temperature and chemical potential of one order gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GasParams {
    side: Side,
    temperature: f64,
    chemical_potential: f64,
}

impl GasParams {
    pub fn new(side: Side, temperature: f64, chemical_potential: f64) -> Result<Self, GibbsError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(GibbsError::InvalidTemperature(temperature));
        }
        if !(chemical_potential.is_finite() && chemical_potential < 0.0) {
            return Err(GibbsError::InvalidChemicalPotential(chemical_potential));
        }
        Ok(GasParams {
            side,
            temperature,
            chemical_potential,
        })
    }

    pub fn bid(temperature: f64, chemical_potential: f64) -> Result<Self, GibbsError> {
        Self::new(Side::Bid, temperature, chemical_potential)
    }

    pub fn ask(temperature: f64, chemical_potential: f64) -> Result<Self, GibbsError> {
        Self::new(Side::Ask, temperature, chemical_potential)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn chemical_potential(&self) -> f64 {
        self.chemical_potential
    }

    /// Offset at which the mean occupancy diverges: `μ_b` for bids, `−μ_a`
    /// for asks.
    pub fn singular_offset(&self) -> f64 {
        match self.side {
            Side::Bid => self.chemical_potential,
            Side::Ask => -self.chemical_potential,
        }
    }

    /// True when `eps` lies strictly inside this side's domain.
    pub fn contains(&self, eps: PriceOffset) -> bool {
        self.reduced_energy(eps).is_ok()
    }

    /// Distance of `eps` from the singular point in units of temperature.
    /// Strictly positive on the domain.
    pub fn reduced_energy(&self, eps: PriceOffset) -> Result<f64, GibbsError> {
        let e = eps.0;
        if !e.is_finite() {
            return Err(GibbsError::NonFinite { what: "price offset" });
        }
        let gap = match self.side {
            Side::Bid => e - self.chemical_potential,
            Side::Ask => -self.chemical_potential - e,
        };
        let x = gap / self.temperature;
        if x > 0.0 {
            Ok(x)
        } else if gap == 0.0 || x == 0.0 {
            Err(GibbsError::Divergence {
                side: self.side,
                offset: e,
            })
        } else {
            Err(GibbsError::OutOfDomain {
                side: self.side,
                offset: e,
                singular: self.singular_offset(),
            })
        }
    }

    fn expect_side(&self, expected: Side) -> Result<(), GibbsError> {
        if self.side == expected {
            Ok(())
        } else {
            Err(GibbsError::SideMismatch {
                expected,
                found: self.side,
            })
        }
    }
}

/// `1 / (e^x − 1)` for `x > 0`, erroring if the result overflows.
fn bose_occupancy(x: f64, side: Side, eps: PriceOffset) -> Result<Quantity, GibbsError> {
    let n = 1.0 / libm::expm1(x);
    if n.is_finite() {
        Ok(Quantity(n))
    } else {
        Err(GibbsError::Divergence { side, offset: eps.0 })
    }
}

/// Mean occupancy for either side, dispatching on `g.side()`.
pub fn mean_occupancy(eps: PriceOffset, g: &GasParams) -> Result<Quantity, GibbsError> {
    let x = g.reduced_energy(eps)?;
    bose_occupancy(x, g.side, eps)
}

/// Average aggregate bid quantity at offset `eps`: `1 / (e^{(ε − μ_b)/T_b} − 1)`.
pub fn mean_bid_occupancy(eps: PriceOffset, g: &GasParams) -> Result<Quantity, GibbsError> {
    g.expect_side(Side::Bid)?;
    mean_occupancy(eps, g)
}

/// Average aggregate ask quantity at offset `eps`: `1 / (e^{(−μ_a − ε)/T_a} − 1)`.
pub fn mean_ask_occupancy(eps: PriceOffset, g: &GasParams) -> Result<Quantity, GibbsError> {
    g.expect_side(Side::Ask)?;
    mean_occupancy(eps, g)
}

/// Probability of exactly `n` aggregate shares at offset `eps`: the
/// geometric law `(1 − q) qⁿ` with `q = e^{−x}`.
pub fn level_occupation_probability(n: u64, eps: PriceOffset, g: &GasParams) -> Result<f64, GibbsError> {
    let x = g.reduced_energy(eps)?;
    // 1 - q = -expm1(-x) keeps precision when q is close to 1
    Ok(-libm::expm1(-x) * libm::exp(-(n as f64) * x))
}

/// Per-level grand potential `Ω = T ln(1 − q)`. Always negative; its
/// negative derivative with respect to the chemical potential is the mean
/// occupancy.
pub fn grand_potential(eps: PriceOffset, g: &GasParams) -> Result<f64, GibbsError> {
    let x = g.reduced_energy(eps)?;
    let omega = g.temperature * libm::log(-libm::expm1(-x));
    if omega.is_finite() {
        Ok(omega)
    } else {
        Err(GibbsError::Divergence {
            side: g.side,
            offset: eps.0,
        })
    }
}

/// Intersection of the bid and ask occupancy curves: the model's closing
/// offset and exchanged volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub price_offset: PriceOffset,
    pub volume: Quantity,
}

pub fn equilibrium_point(bid: &GasParams, ask: &GasParams) -> Result<EquilibriumPoint, GibbsError> {
    bid.expect_side(Side::Bid)?;
    ask.expect_side(Side::Ask)?;
    let (tb, mb) = (bid.temperature, bid.chemical_potential);
    let (ta, ma) = (ask.temperature, ask.chemical_potential);
    if mb >= -ma {
        return Err(GibbsError::NoIntersection {
            mu_bid: mb,
            ask_edge: -ma,
        });
    }
    let t_sum = ta + tb;
    let offset = PriceOffset((ta * mb - tb * ma) / t_sum);
    let x = -(ma + mb) / t_sum;
    let volume = bose_occupancy(x, Side::Bid, offset)?;
    Ok(EquilibriumPoint {
        price_offset: offset,
        volume,
    })
}

/// Prices and volume observed over one interval.
///
/// `min_bid_price ≤ close ≤ max_ask_price` is enforced. The model further
/// assumes `min_bid_price < prev_close < max_ask_price` (negative chemical
/// potentials); that is checked only by [`MarketObservables::implied_gases`]
/// because the previous close does not enter the temperature formulas and
/// high/low proxies routinely violate it on gap days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketObservables {
    pub prev_close: f64,
    pub close: f64,
    pub min_bid_price: f64,
    pub max_ask_price: f64,
    pub volume: f64,
}

impl MarketObservables {
    pub fn new(
        prev_close: f64,
        close: f64,
        min_bid_price: f64,
        max_ask_price: f64,
        volume: f64,
    ) -> Result<Self, GibbsError> {
        for (what, v) in [
            ("prev_close", prev_close),
            ("close", close),
            ("min_bid_price", min_bid_price),
            ("max_ask_price", max_ask_price),
            ("volume", volume),
        ] {
            if !v.is_finite() {
                return Err(GibbsError::NonFinite { what });
            }
        }
        if volume < 0.0 {
            return Err(GibbsError::InvalidQuantity(volume));
        }
        if !(min_bid_price <= close && close <= max_ask_price) {
            return Err(GibbsError::InvalidObservables(format!(
                "close {close} outside [min_bid_price {min_bid_price}, max_ask_price {max_ask_price}]"
            )));
        }
        Ok(MarketObservables {
            prev_close,
            close,
            min_bid_price,
            max_ask_price,
            volume,
        })
    }

    /// Observables produced by a pair of gases around `prev_close`: the close
    /// and volume of their equilibrium, with the book edges at the singular
    /// points.
    pub fn from_gases(prev_close: f64, bid: &GasParams, ask: &GasParams) -> Result<Self, GibbsError> {
        let eq = equilibrium_point(bid, ask)?;
        Self::new(
            prev_close,
            prev_close + eq.price_offset.0,
            prev_close + bid.chemical_potential,
            prev_close - ask.chemical_potential,
            eq.volume.0,
        )
    }

    /// Chemical potentials implied by the book edges, `μ_b = p_min − p̄(t−Δt)`
    /// and `μ_a = p̄(t−Δt) − p_max`.
    pub fn implied_chemical_potentials(&self) -> Result<(f64, f64), GibbsError> {
        let mu_bid = self.min_bid_price - self.prev_close;
        let mu_ask = self.prev_close - self.max_ask_price;
        if mu_bid < 0.0 && mu_ask < 0.0 {
            Ok((mu_bid, mu_ask))
        } else {
            Err(GibbsError::InvalidObservables(format!(
                "previous close {} not strictly inside ({}, {})",
                self.prev_close, self.min_bid_price, self.max_ask_price
            )))
        }
    }

    /// The full pair of gases implied by these observables.
    pub fn implied_gases(&self) -> Result<(GasParams, GasParams), GibbsError> {
        let (mu_bid, mu_ask) = self.implied_chemical_potentials()?;
        let t = temperatures_from_observables(self)?;
        Ok((GasParams::bid(t.bid, mu_bid)?, GasParams::ask(t.ask, mu_ask)?))
    }

    fn log_volume_factor(&self) -> Result<f64, GibbsError> {
        if self.volume <= 0.0 {
            return Err(GibbsError::ZeroVolume);
        }
        let l = libm::log1p(1.0 / self.volume);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(GibbsError::ZeroVolume)
        }
    }
}

/// Bid and ask temperatures. A temperature of exactly zero means the close
/// sat on the corresponding bound; the matching `*_degenerate` flag is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Temperatures {
    pub bid: f64,
    pub ask: f64,
    pub bid_degenerate: bool,
    pub ask_degenerate: bool,
}

impl Temperatures {
    /// `T_a − T_b`.
    pub fn difference(&self) -> f64 {
        self.ask - self.bid
    }
}

pub fn temperatures_from_observables(m: &MarketObservables) -> Result<Temperatures, GibbsError> {
    let l = m.log_volume_factor()?;
    let bid_gap = m.close - m.min_bid_price;
    let ask_gap = m.max_ask_price - m.close;
    Ok(Temperatures {
        bid: bid_gap / l,
        ask: ask_gap / l,
        bid_degenerate: bid_gap == 0.0,
        ask_degenerate: ask_gap == 0.0,
    })
}

/// `ΔT = T_a − T_b`, taken as the difference of the two temperatures so the
/// identity is exact in floating point.
pub fn temperature_difference(m: &MarketObservables) -> Result<f64, GibbsError> {
    Ok(temperatures_from_observables(m)?.difference())
}

/// First-order (large volume) temperatures, `ln(1 + 1/n̄) ≈ 1/n̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedTemperatures {
    pub bid: f64,
    pub ask: f64,
    pub difference: f64,
}

pub fn linearized_temperatures(m: &MarketObservables) -> Result<LinearizedTemperatures, GibbsError> {
    if m.volume <= 0.0 {
        return Err(GibbsError::ZeroVolume);
    }
    let bid = m.volume * (m.close - m.min_bid_price);
    let ask = m.volume * (m.max_ask_price - m.close);
    Ok(LinearizedTemperatures {
        bid,
        ask,
        difference: ask - bid,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OccupancyCurve {
    pub points: Vec<(PriceOffset, Quantity)>,
    /// Grid points dropped because they were on or beyond the singular point.
    pub omitted: usize,
}

/// Evaluate the mean occupancy of `g` on `grid`, dropping out-of-domain points.
pub fn occupancy_curve(grid: &[PriceOffset], g: &GasParams) -> OccupancyCurve {
    let mut curve = OccupancyCurve::default();
    for &eps in grid {
        match mean_occupancy(eps, g) {
            Ok(n) => curve.points.push((eps, n)),
            Err(_) => curve.omitted += 1,
        }
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn bid(t: f64, mu: f64) -> GasParams {
        GasParams::bid(t, mu).unwrap()
    }

    fn ask(t: f64, mu: f64) -> GasParams {
        GasParams::ask(t, mu).unwrap()
    }

    // Reference values below were evaluated at 40 digits with mpmath.

    #[test]
    fn bid_occupancy_reference_values() {
        let n = mean_bid_occupancy(PriceOffset(0.0), &bid(1.0, -1.0)).unwrap();
        assert_relative_eq!(n.value(), 0.581_976_706_869_326_4, max_relative = 1e-14);

        let g = bid(1.7, -0.3);
        let n = mean_bid_occupancy(PriceOffset(-0.3 + 1.7 * LN2), &g).unwrap();
        assert_relative_eq!(n.value(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn ask_occupancy_reference_values() {
        let n = mean_ask_occupancy(PriceOffset(0.0), &ask(1.0, -2.0)).unwrap();
        assert_relative_eq!(n.value(), 0.156_517_642_749_665_65, max_relative = 1e-14);

        let g = ask(0.8, -1.5);
        let n = mean_ask_occupancy(PriceOffset(1.5 - 0.8 * LN2), &g).unwrap();
        assert_relative_eq!(n.value(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn singular_points_and_domains() {
        let b = bid(1.0, -1.0);
        assert!(matches!(
            mean_bid_occupancy(PriceOffset(-1.0), &b),
            Err(GibbsError::Divergence { side: Side::Bid, .. })
        ));
        assert!(matches!(
            mean_bid_occupancy(PriceOffset(-1.5), &b),
            Err(GibbsError::OutOfDomain { .. })
        ));
        let a = ask(1.0, -2.0);
        assert!(matches!(
            mean_ask_occupancy(PriceOffset(2.0), &a),
            Err(GibbsError::Divergence { side: Side::Ask, .. })
        ));
        assert!(matches!(
            mean_ask_occupancy(PriceOffset(2.5), &a),
            Err(GibbsError::OutOfDomain { .. })
        ));
        assert!(matches!(
            mean_ask_occupancy(PriceOffset(0.0), &b),
            Err(GibbsError::SideMismatch { .. })
        ));
        assert!(matches!(
            mean_bid_occupancy(PriceOffset(f64::NAN), &b),
            Err(GibbsError::NonFinite { .. })
        ));
    }

    #[test]
    fn params_reject_invalid_values() {
        assert!(matches!(
            GasParams::bid(0.0, -1.0),
            Err(GibbsError::InvalidTemperature(_))
        ));
        assert!(matches!(
            GasParams::bid(-1.0, -1.0),
            Err(GibbsError::InvalidTemperature(_))
        ));
        assert!(matches!(
            GasParams::ask(1.0, 0.5),
            Err(GibbsError::InvalidChemicalPotential(_))
        ));
        assert!(matches!(
            GasParams::ask(1.0, 0.0),
            Err(GibbsError::InvalidChemicalPotential(_))
        ));
        assert!(GasParams::ask(1.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn geometric_law_at_half() {
        let g = bid(2.0, -1.0);
        let eps = PriceOffset(-1.0 + 2.0 * LN2);
        assert_relative_eq!(
            level_occupation_probability(0, eps, &g).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            level_occupation_probability(3, eps, &g).unwrap(),
            0.0625,
            max_relative = 1e-13
        );
    }

    /// Sum the geometric law term by term until qⁿ < 1e-15.
    fn brute_force_moments(eps: PriceOffset, g: &GasParams) -> (f64, f64) {
        let x = g.reduced_energy(eps).unwrap();
        let q = (-x).exp();
        let (mut total, mut mean) = (0.0, 0.0);
        let mut n = 0u64;
        while q.powi(n as i32) >= 1e-15 {
            let w = level_occupation_probability(n, eps, g).unwrap();
            total += w;
            mean += n as f64 * w;
            n += 1;
        }
        (total, mean)
    }

    #[test]
    fn geometric_law_normalization_and_mean() {
        for t in [0.5, 1.0, 5.0] {
            for gap in [0.1, 1.0, 3.0] {
                let b = bid(t, -2.0);
                let eps = PriceOffset(-2.0 + gap);
                let (total, mean) = brute_force_moments(eps, &b);
                assert!((total - 1.0).abs() <= 1e-12, "T={t} gap={gap} total={total}");
                let closed = mean_bid_occupancy(eps, &b).unwrap().value();
                assert_relative_eq!(mean, closed, max_relative = 1e-9);

                let a = ask(t, -2.0);
                let eps = PriceOffset(2.0 - gap);
                let (total, mean) = brute_force_moments(eps, &a);
                assert!((total - 1.0).abs() <= 1e-12);
                assert_relative_eq!(mean, mean_ask_occupancy(eps, &a).unwrap().value(), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn grand_potential_values() {
        let g = bid(1.0, -1.0);
        let omega = grand_potential(PriceOffset(-1.0 + LN2), &g).unwrap();
        assert_relative_eq!(omega, -LN2, max_relative = 1e-14);
        assert!(grand_potential(PriceOffset(-1.0), &g).is_err());

        // decreasing towards the singular point
        let mut last = 0.0;
        for k in (1..=50).rev() {
            let omega = grand_potential(PriceOffset(-1.0 + k as f64 * 0.02), &g).unwrap();
            assert!(omega < 0.0 && omega < last);
            last = omega;
        }
    }

    fn potential_derivative(eps: PriceOffset, g: &GasParams, h: f64) -> f64 {
        let up = GasParams::new(g.side(), g.temperature(), g.chemical_potential() + h).unwrap();
        let down = GasParams::new(g.side(), g.temperature(), g.chemical_potential() - h).unwrap();
        -(grand_potential(eps, &up).unwrap() - grand_potential(eps, &down).unwrap()) / (2.0 * h)
    }

    #[test]
    fn potential_derivative_is_occupancy() {
        let g = bid(1.0, -1.0);
        let fd = potential_derivative(PriceOffset(0.0), &g, 1e-6);
        assert!((fd - 0.581_976_706_869_326_4).abs() < 1e-5);

        let a = ask(0.7, -1.2);
        let eps = PriceOffset(0.4);
        let fd = potential_derivative(eps, &a, 1e-6);
        assert!((fd - mean_ask_occupancy(eps, &a).unwrap().value()).abs() < 1e-5);
    }

    #[test]
    fn finite_difference_error_shrinks_quadratically() {
        let g = bid(1.3, -0.9);
        let eps = PriceOffset(0.2);
        let exact = mean_bid_occupancy(eps, &g).unwrap().value();
        let e1 = (potential_derivative(eps, &g, 1e-2) - exact).abs();
        let e2 = (potential_derivative(eps, &g, 5e-3) - exact).abs();
        // halving h should cut the error by ~4
        assert!(e2 < e1 / 3.0, "e1={e1} e2={e2}");
    }

    #[test]
    fn equilibrium_examples() {
        let eq = equilibrium_point(&bid(1.5, -2.0), &ask(1.5, -2.0)).unwrap();
        assert_eq!(eq.price_offset.value(), 0.0);

        let b = bid(2.0, -4.0);
        let a = ask(3.0, -5.0);
        let eq = equilibrium_point(&b, &a).unwrap();
        assert_relative_eq!(eq.price_offset.value(), -0.4, max_relative = 1e-14);
        assert_relative_eq!(eq.volume.value(), 0.198_033_626_515_005_92, max_relative = 1e-14);
        let nb = mean_bid_occupancy(eq.price_offset, &b).unwrap().value();
        let na = mean_ask_occupancy(eq.price_offset, &a).unwrap().value();
        assert_relative_eq!(nb, eq.volume.value(), max_relative = 1e-12);
        assert_relative_eq!(na, eq.volume.value(), max_relative = 1e-12);

        assert!(matches!(
            equilibrium_point(&a, &b),
            Err(GibbsError::SideMismatch { .. })
        ));
    }

    #[test]
    fn temperatures_reference_example() {
        let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, 1000.0).unwrap();
        let t = temperatures_from_observables(&m).unwrap();
        assert_relative_eq!(t.bid, 1000.499916708307, max_relative = 1e-13);
        assert_relative_eq!(t.ask, 2000.999833416614, max_relative = 1e-13);
        assert!(!t.bid_degenerate && !t.ask_degenerate);
        let dt = temperature_difference(&m).unwrap();
        assert_eq!(dt, t.ask - t.bid);
        assert_relative_eq!(dt, 1000.499916708307, max_relative = 1e-12);

        let m = MarketObservables::new(9.5, 11.0, 9.0, 12.0, 1000.0).unwrap();
        assert_relative_eq!(
            temperature_difference(&m).unwrap(),
            -1000.499916708307,
            max_relative = 1e-12
        );

        let m = MarketObservables::new(9.5, 10.5, 9.0, 12.0, 1000.0).unwrap();
        assert_eq!(temperature_difference(&m).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_and_zero_volume() {
        let m = MarketObservables::new(9.5, 9.0, 9.0, 12.0, 1000.0).unwrap();
        let t = temperatures_from_observables(&m).unwrap();
        assert_eq!(t.bid, 0.0);
        assert!(t.bid_degenerate && !t.ask_degenerate);

        let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, 0.0).unwrap();
        assert_eq!(temperatures_from_observables(&m), Err(GibbsError::ZeroVolume));
        assert_eq!(linearized_temperatures(&m), Err(GibbsError::ZeroVolume));

        assert!(matches!(
            MarketObservables::new(9.5, 12.5, 9.0, 12.0, 10.0),
            Err(GibbsError::InvalidObservables(_))
        ));
        assert!(MarketObservables::new(9.5, 10.0, 9.0, 12.0, -1.0).is_err());
    }

    #[test]
    fn implied_potentials_require_prev_close_inside() {
        let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, 1000.0).unwrap();
        let (mb, ma) = m.implied_chemical_potentials().unwrap();
        assert_eq!((mb, ma), (-0.5, -2.5));
        let gap_up = MarketObservables::new(8.5, 10.0, 9.0, 12.0, 1000.0).unwrap();
        assert!(gap_up.implied_chemical_potentials().is_err());
    }

    #[test]
    fn linearized_reference_example() {
        let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, 1000.0).unwrap();
        let lin = linearized_temperatures(&m).unwrap();
        assert_eq!((lin.bid, lin.ask, lin.difference), (1000.0, 2000.0, 1000.0));
        let exact = temperatures_from_observables(&m).unwrap();
        // linearized values sit ~0.05% below the exact ones
        assert!(lin.bid < exact.bid && (exact.bid - lin.bid) / exact.bid < 6e-4);

        // small-volume worst case: exact/linear − 1 = 1/ln 2 − 1
        let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, 1.0).unwrap();
        let lin = linearized_temperatures(&m).unwrap();
        let exact = temperatures_from_observables(&m).unwrap();
        assert_relative_eq!(
            (exact.bid - lin.bid) / lin.bid,
            0.442_695_040_888_963_4,
            max_relative = 1e-13
        );

        let m = MarketObservables::new(9.5, 10.5, 9.0, 12.0, 1000.0).unwrap();
        assert_eq!(linearized_temperatures(&m).unwrap().difference, 0.0);
    }

    #[test]
    fn linearization_error_bracket() {
        for n in [1e2, 1e3, 1e4] {
            let m = MarketObservables::new(9.5, 10.0, 9.0, 12.0, n).unwrap();
            let lin = linearized_temperatures(&m).unwrap();
            let exact = temperatures_from_observables(&m).unwrap();
            for (l, e) in [
                (lin.bid, exact.bid),
                (lin.ask, exact.ask),
                (lin.difference, exact.difference()),
            ] {
                let rel = (l - e).abs() / e.abs();
                assert!(rel <= 1.0 / n && rel >= 0.25 / n, "n={n} rel={rel}");
            }
        }
    }

    #[test]
    fn occupancy_curve_filters_domain() {
        let g = bid(1.0, -1.0);
        assert_eq!(occupancy_curve(&[], &g), OccupancyCurve::default());

        let c = occupancy_curve(&[PriceOffset(0.0)], &g);
        assert_eq!(
            c.points,
            vec![(PriceOffset(0.0), mean_bid_occupancy(PriceOffset(0.0), &g).unwrap())]
        );

        let c = occupancy_curve(&[PriceOffset(-1.5), PriceOffset(-1.0), PriceOffset(-0.5)], &g);
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].0, PriceOffset(-0.5));
        assert_eq!(c.omitted, 2);
    }

    fn gas_pair() -> impl Strategy<Value = (GasParams, GasParams)> {
        (0.1f64..10.0, -10.0f64..-0.1, 0.1f64..10.0, -10.0f64..-0.1)
            .prop_map(|(tb, mb, ta, ma)| (bid(tb, mb), ask(ta, ma)))
    }

    proptest! {
        #[test]
        fn occupancy_monotone_on_sorted_grid(t in 0.1f64..10.0, mu in -10.0f64..-0.1, steps in 2usize..40) {
            let b = bid(t, mu);
            let a = ask(t, mu);
            let grid: Vec<PriceOffset> = (1..steps)
                .map(|k| PriceOffset(mu + (-2.0 * mu) * k as f64 / steps as f64))
                .collect();
            let nb = occupancy_curve(&grid, &b).points;
            let na = occupancy_curve(&grid, &a).points;
            prop_assert_eq!(nb.len(), grid.len());
            for w in nb.windows(2) {
                prop_assert!(w[1].1 < w[0].1);
            }
            for w in na.windows(2) {
                prop_assert!(w[1].1 > w[0].1);
            }
        }

        #[test]
        fn equilibrium_is_a_fixed_point((b, a) in gas_pair()) {
            let eq = equilibrium_point(&b, &a).unwrap();
            let nb = mean_bid_occupancy(eq.price_offset, &b).unwrap().value();
            let na = mean_ask_occupancy(eq.price_offset, &a).unwrap().value();
            let n = eq.volume.value();
            prop_assert!(((nb - n) / n).abs() <= 1e-12, "bid {} vs {}", nb, n);
            prop_assert!(((na - n) / n).abs() <= 1e-12, "ask {} vs {}", na, n);
        }

        #[test]
        fn temperatures_invert_equilibrium((b, a) in gas_pair(), prev in 20.0f64..200.0) {
            let m = MarketObservables::from_gases(prev, &b, &a).unwrap();
            let t = temperatures_from_observables(&m).unwrap();
            prop_assert!(((t.bid - b.temperature()) / b.temperature()).abs() <= 1e-9);
            prop_assert!(((t.ask - a.temperature()) / a.temperature()).abs() <= 1e-9);
            prop_assert_eq!(temperature_difference(&m).unwrap(), t.ask - t.bid);
            let lin = linearized_temperatures(&m).unwrap();
            prop_assert_eq!(lin.difference, lin.ask - lin.bid);
        }
    }
}
