//! Limit order book modelled as two grand-canonical Bose gases.
//!
//! * [`gibbs`]: occupancy laws, grand potential, equilibrium, temperatures.
//! * [`book`]: tick-quantized snapshots, clearing, model and sampled books.
//! * [`calibration`]: fitting `(T, μ)` to observed depth.
//! * [`pipeline`]: OHLCV bars to temperature / ΔT / VAO series.

pub mod book;
pub mod calibration;
pub mod gibbs;
pub mod pipeline;

pub use book::{
    aggregate_book, clearing_price, model_book, sample_synthetic_book, tradeable_quantity, BookError, ClearingResult,
    LimitOrder, OrderBookSnapshot,
};
pub use calibration::{fit_gas, goodness_of_fit, linearize_depth, CalibrationError, DepthPoint, FitResult};
pub use gibbs::{
    equilibrium_point, grand_potential, level_occupation_probability, linearized_temperatures, mean_ask_occupancy,
    mean_bid_occupancy, occupancy_curve, temperature_difference, temperatures_from_observables, EquilibriumPoint,
    GasParams, GibbsError, MarketObservables, PriceOffset, Quantity, Side,
};
pub use pipeline::{
    parse_ohlcv, thermo_series, vao_series, write_output, DailyBar, OutputFormat, PipelineConfig, PipelineError,
    ThermoRecord,
};
