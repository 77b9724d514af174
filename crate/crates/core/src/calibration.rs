//! Fit gas parameters to observed aggregate depth.
//!
//! The occupancy law inverts exactly to a straight line,
//! `y = ln(1 + 1/n̄) = x(ε)`, where `x` is the reduced energy: `(ε − μ_b)/T_b`
//! for bids and `(−μ_a − ε)/T_a` for asks. Fitting is ordinary least squares
//! in that transformed space. A fitted slope of the wrong sign (or a
//! non-negative fitted chemical potential) means the data contradict the
//! model; those come back as [`CalibrationError::is_falsification`] errors
//! that carry the fitted line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{GasParams, GibbsError, PriceOffset, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("NonPositiveQuantity: point {index} at offset {offset} has quantity {quantity}")]
    NonPositiveQuantity { index: usize, offset: f64, quantity: f64 },
    #[error("InsufficientData: need at least 2 distinct price offsets with positive quantity, got {distinct}")]
    InsufficientData { distinct: usize },
    #[error("WrongSlopeSign: fitted slope {} is not positive (R² {})", .line.slope, .line.r_squared)]
    WrongSlopeSign { line: FittedLine },
    #[error("NonNegativePotential: fitted chemical potential {mu} is not negative")]
    NonNegativePotential { mu: f64, line: FittedLine },
    #[error("ParseError: line {line}, column {column}: {message}")]
    Parse { line: u64, column: String, message: String },
    #[error(transparent)]
    Model(#[from] GibbsError),
}

impl CalibrationError {
    /// True for outcomes where the fit ran but the data contradict the model.
    pub fn is_falsification(&self) -> bool {
        matches!(
            self,
            CalibrationError::WrongSlopeSign { .. } | CalibrationError::NonNegativePotential { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPoint {
    pub price_offset: PriceOffset,
    pub mean_quantity: f64,
}

impl DepthPoint {
    pub fn new(offset: f64, quantity: f64) -> Self {
        DepthPoint {
            price_offset: PriceOffset(offset),
            mean_quantity: quantity,
        }
    }
}

/// Least-squares line in transformed space. `slope` is against the side's
/// regressor: `ε` for bids, `−ε` for asks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FittedLine {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rmse_transformed: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub params: GasParams,
    pub r_squared: f64,
    pub rmse_transformed: f64,
    pub points_used: usize,
    /// Zero-quantity points left out of the fit.
    pub points_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub r_squared: f64,
    pub rmse_transformed: f64,
}

/// `(ε, ln(1 + 1/n))` for each point.
pub fn linearize_depth(points: &[DepthPoint]) -> Result<Vec<(PriceOffset, f64)>, CalibrationError> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let n = p.mean_quantity;
            if !(n.is_finite() && n > 0.0) || !p.price_offset.0.is_finite() {
                return Err(CalibrationError::NonPositiveQuantity {
                    index,
                    offset: p.price_offset.0,
                    quantity: n,
                });
            }
            Ok((p.price_offset, libm::log1p(1.0 / n)))
        })
        .collect()
}

fn regressor(side: Side, eps: PriceOffset) -> f64 {
    match side {
        Side::Bid => eps.0,
        Side::Ask => -eps.0,
    }
}

fn distinct_count(xs: &[f64]) -> usize {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

/// R² and RMSE of `predicted` against `observed`. When the observations are
/// constant (`SS_tot = 0`) R² is 1 for a perfect prediction and 0 otherwise.
fn fit_statistics(observed: &[f64], predicted: impl Iterator<Item = f64>) -> GoodnessOfFit {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    GoodnessOfFit {
        r_squared,
        rmse_transformed: (ss_res / n).sqrt(),
    }
}

fn ordinary_least_squares(xs: &[f64], ys: &[f64]) -> FittedLine {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stats = fit_statistics(ys, xs.iter().map(|x| intercept + slope * x));
    FittedLine {
        slope,
        intercept,
        r_squared: stats.r_squared,
        rmse_transformed: stats.rmse_transformed,
        points_used: xs.len(),
    }
}

/// Estimate `(T, μ)` for one side from mean depth observations.
pub fn fit_gas(points: &[DepthPoint], side: Side) -> Result<FitResult, CalibrationError> {
    let mut used = Vec::with_capacity(points.len());
    let mut excluded = 0;
    for p in points {
        if p.mean_quantity == 0.0 {
            excluded += 1;
        } else {
            used.push(*p);
        }
    }
    let linear = linearize_depth(&used)?;
    let xs: Vec<f64> = linear.iter().map(|(e, _)| regressor(side, *e)).collect();
    let ys: Vec<f64> = linear.iter().map(|(_, y)| *y).collect();
    let distinct = distinct_count(&xs);
    if distinct < 2 {
        return Err(CalibrationError::InsufficientData { distinct });
    }

    let line = ordinary_least_squares(&xs, &ys);
    // negated so that NaN also fails
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(line.slope > 0.0) {
        return Err(CalibrationError::WrongSlopeSign { line });
    }
    let temperature = 1.0 / line.slope;
    let mu = -line.intercept * temperature;
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(mu < 0.0) {
        return Err(CalibrationError::NonNegativePotential { mu, line });
    }
    Ok(FitResult {
        params: GasParams::new(side, temperature, mu)?,
        r_squared: line.r_squared,
        rmse_transformed: line.rmse_transformed,
        points_used: line.points_used,
        points_excluded: excluded,
    })
}

/// Fit quality of `params` against `points`, measured in transformed space.
/// R² may be negative for a poor line and is reported as computed.
pub fn goodness_of_fit(params: &GasParams, points: &[DepthPoint]) -> Result<GoodnessOfFit, CalibrationError> {
    let linear = linearize_depth(points)?;
    if linear.len() < 2 {
        return Err(CalibrationError::InsufficientData { distinct: linear.len() });
    }
    let ys: Vec<f64> = linear.iter().map(|(_, y)| *y).collect();
    let t = params.temperature();
    let singular = params.singular_offset();
    // the line extends past the singular point, so no domain check here
    let predicted = linear.iter().map(|(e, _)| match params.side() {
        Side::Bid => (e.0 - singular) / t,
        Side::Ask => (singular - e.0) / t,
    });
    Ok(fit_statistics(&ys, predicted))
}

/// Parse a depth CSV with header `offset,quantity`. Negative quantities are
/// rejected; zero quantities are kept (and later excluded by [`fit_gas`]).
pub fn parse_depth_csv(text: &str) -> Result<Vec<DepthPoint>, CalibrationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let parse_err = |line: u64, column: &str, message: String| CalibrationError::Parse {
        line,
        column: column.to_string(),
        message,
    };
    match records.next() {
        None => return Err(parse_err(1, "header", "missing header `offset,quantity`".into())),
        Some(Err(e)) => return Err(parse_err(1, "header", e.to_string())),
        Some(Ok(h)) if h.iter().collect::<Vec<_>>() != ["offset", "quantity"] => {
            return Err(parse_err(
                1,
                "header",
                format!(
                    "expected `offset,quantity`, found `{}`",
                    h.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
        Some(Ok(_)) => {}
    }
    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, "row", e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(
                line,
                "row",
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let field = |i: usize, name: &str| -> Result<f64, CalibrationError> {
            let v: f64 = record[i]
                .parse()
                .map_err(|e| parse_err(line, name, format!("`{}`: {e}", &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, name, format!("`{}` is not finite", &record[i])))
            }
        };
        let offset = field(0, "offset")?;
        let quantity = field(1, "quantity")?;
        if quantity < 0.0 {
            return Err(parse_err(line, "quantity", format!("negative quantity {quantity}")));
        }
        out.push(DepthPoint::new(offset, quantity));
    }
    Ok(out)
}
