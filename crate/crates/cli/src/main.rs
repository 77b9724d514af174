//! `lobgas` command-line front end.
//!
//! Exit status: 0 on success (including fits that falsify the model),
//! 1 on domain errors, 2 on usage errors and malformed input files.

use std::fs;
use std::io::{self, Read, Write};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use lobgas::book::{self, clear_with_reference, read_book_json, write_book_json, BookError};
use lobgas::calibration::{self, parse_depth_csv, CalibrationError};
use lobgas::gibbs::{self, GasParams, GibbsError, PriceOffset, Side};
use lobgas::pipeline::{self, OutputFormat, PipelineConfig, PipelineError, DEFAULT_VAO_WINDOW};
use rust_decimal::Decimal;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "lobgas",
    version,
    about = "Grand-canonical gas model of the limit order book"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Bid,
    Ask,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Bid => Side::Bid,
            SideArg::Ask => Side::Ask,
        }
    }
}

#[derive(Debug, clap::Args)]
struct GasArgs {
    /// Bid gas temperature (price units)
    #[arg(long = "t-bid", allow_negative_numbers = true)]
    t_bid: Option<f64>,
    /// Bid chemical potential (negative offset where bid depth diverges)
    #[arg(long = "mu-bid", allow_negative_numbers = true)]
    mu_bid: Option<f64>,
    /// Ask gas temperature (price units)
    #[arg(long = "t-ask", allow_negative_numbers = true)]
    t_ask: Option<f64>,
    /// Ask chemical potential (ask depth diverges at offset -mu_ask)
    #[arg(long = "mu-ask", allow_negative_numbers = true)]
    mu_ask: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean occupancy curves as CSV `side,offset,quantity`
    Curve {
        #[command(flatten)]
        gases: GasArgs,
        /// First grid offset (defaults to the lower edge of the supplied gases)
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        /// Last grid offset
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        /// Number of grid points
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Output file, `-` for stdout
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Clear a book file at the price maximizing tradeable quantity
    Clear {
        /// Book JSON (`orders` or aggregated `levels` form), `-` for stdin
        #[arg(long)]
        input: String,
        /// Previous close, used to break ties between equally good levels
        #[arg(long = "prev-close")]
        prev_close: Option<Decimal>,
        /// Print the per-level aggregate table instead of the clearing result
        #[arg(long)]
        levels: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file, `-` for stdout
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Generate a book from the gas model as aggregated-levels JSON
    Sample {
        #[command(flatten)]
        gases: GasArgs,
        /// Previous close; offsets are measured from it
        #[arg(long = "prev-close")]
        prev_close: Decimal,
        /// Price tick of the generated levels
        #[arg(long)]
        tick: Decimal,
        /// Seed of the ChaCha8 sampling stream
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the noise-free book of mean occupancies instead of a sample
        #[arg(long)]
        expected: bool,
        /// Output file, `-` for stdout
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Fit one side's temperature and chemical potential to a depth CSV
    Fit {
        /// Depth CSV with header `offset,quantity`, `-` for stdin
        #[arg(long)]
        input: String,
        /// Which side of the book the depth belongs to
        #[arg(long, value_enum)]
        side: SideArg,
        /// Output file, `-` for stdout
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Temperatures, ΔT and VAO from an OHLCV CSV
    Thermo {
        /// OHLCV CSV with header `date,open,high,low,close,volume`, `-` for stdin
        #[arg(long)]
        input: String,
        /// Number of trailing days summed into the VAO
        #[arg(long = "vao-window", default_value_t = DEFAULT_VAO_WINDOW)]
        vao_window: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Fail on zero-volume bars instead of emitting flagged empty rows
        #[arg(long = "keep-zero-volume")]
        keep_zero_volume: bool,
        /// Output file, `-` for stdout
        #[arg(long, default_value = "-")]
        output: String,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

type CliResult = Result<(), Failure>;

fn usage(msg: impl ToString) -> Failure {
    Failure::Usage(msg.to_string())
}

fn domain(msg: impl ToString) -> Failure {
    Failure::Domain(msg.to_string())
}

impl From<BookError> for Failure {
    fn from(e: BookError) -> Self {
        match e {
            BookError::Json(_) | BookError::InvalidBook(_) | BookError::InvalidOrder(_) => usage(e),
            _ => domain(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Parse { .. }
            | PipelineError::Ordering { .. }
            | PipelineError::Invariant { .. }
            | PipelineError::InvalidConfig(_) => usage(e),
            _ => domain(e),
        }
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Parse { .. } => usage(e),
            _ => domain(e),
        }
    }
}

fn read_input(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| usage(format!("reading stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| usage(format!("reading {path}: {e}")))
    }
}

fn write_output(path: &str, text: &str) -> CliResult {
    if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| domain(format!("writing stdout: {e}")))
    } else {
        fs::write(path, text).map_err(|e| domain(format!("writing {path}: {e}")))
    }
}

fn gas(side: Side, t: Option<f64>, mu: Option<f64>) -> Result<Option<GasParams>, Failure> {
    let flags = match side {
        Side::Bid => "--t-bid/--mu-bid",
        Side::Ask => "--t-ask/--mu-ask",
    };
    match (t, mu) {
        (None, None) => Ok(None),
        (Some(t), Some(mu)) => GasParams::new(side, t, mu)
            .map(Some)
            .map_err(|e: GibbsError| usage(format!("{flags}: {e}"))),
        _ => Err(usage(format!("{flags} must be given together"))),
    }
}

fn both_gases(g: &GasArgs) -> Result<(GasParams, GasParams), Failure> {
    let bid = gas(Side::Bid, g.t_bid, g.mu_bid)?.ok_or_else(|| usage("--t-bid and --mu-bid are required"))?;
    let ask = gas(Side::Ask, g.t_ask, g.mu_ask)?.ok_or_else(|| usage("--t-ask and --mu-ask are required"))?;
    Ok((bid, ask))
}

fn run_curve(gases: &GasArgs, from: Option<f64>, to: Option<f64>, points: usize, output: &str) -> CliResult {
    let bid = gas(Side::Bid, gases.t_bid, gases.mu_bid)?;
    let ask = gas(Side::Ask, gases.t_ask, gases.mu_ask)?;
    let supplied: Vec<GasParams> = bid.into_iter().chain(ask).collect();
    if supplied.is_empty() {
        return Err(usage(
            "give bid (--t-bid, --mu-bid) and/or ask (--t-ask, --mu-ask) parameters",
        ));
    }
    if points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    // default span: between the singular points, or 5 temperatures into a lone side's domain
    let lo = match (bid, ask) {
        (Some(b), _) => b.singular_offset(),
        (None, Some(a)) => a.singular_offset() - 5.0 * a.temperature(),
        (None, None) => unreachable!(),
    };
    let hi = match (bid, ask) {
        (_, Some(a)) => a.singular_offset(),
        (Some(b), None) => b.singular_offset() + 5.0 * b.temperature(),
        (None, None) => unreachable!(),
    };
    let (from, to) = (from.unwrap_or(lo), to.unwrap_or(hi));
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(usage(format!("--from {from} must be finite and below --to {to}")));
    }
    let grid: Vec<PriceOffset> = (0..points)
        .map(|k| PriceOffset(from + (to - from) * k as f64 / (points - 1) as f64))
        .collect();

    let mut out = String::from("side,offset,quantity\n");
    for g in &supplied {
        let curve = gibbs::occupancy_curve(&grid, g);
        for (eps, n) in &curve.points {
            out.push_str(&format!("{},{},{}\n", g.side(), eps.value(), n.value()));
        }
        if curve.omitted > 0 {
            eprintln!("{}: omitted {} grid points outside the domain", g.side(), curve.omitted);
        }
    }
    write_output(output, &out)
}

fn at_tick_scale(price: Decimal, tick: Decimal) -> Decimal {
    let mut p = price;
    p.rescale(tick.normalize().scale());
    p
}

fn run_clear(input: &str, prev_close: Option<Decimal>, levels: bool, format: Format, output: &str) -> CliResult {
    let book = read_book_json(&read_input(input)?)?;
    let tick = book.tick();
    let text = if levels {
        // highest price first, as order books are usually printed
        let rows = book.levels().iter().rev();
        match format {
            Format::Csv => {
                let mut s = String::from("price,agg_bid,agg_ask,tradeable\n");
                for l in rows {
                    s.push_str(&format!(
                        "{},{},{},{}\n",
                        at_tick_scale(l.price, tick),
                        l.agg_bid,
                        l.agg_ask,
                        l.tradeable()
                    ));
                }
                s
            }
            Format::Json => {
                let rows: Vec<_> = rows
                    .map(|l| {
                        json!({
                            "price": decimal_number(at_tick_scale(l.price, tick)),
                            "agg_bid": l.agg_bid,
                            "agg_ask": l.agg_ask,
                            "tradeable": l.tradeable(),
                        })
                    })
                    .collect();
                serde_json::to_string_pretty(&rows).expect("json") + "\n"
            }
        }
    } else {
        let result = clear_with_reference(&book, prev_close)?;
        let price = at_tick_scale(result.price, tick);
        match format {
            Format::Csv => format!("price,tradeable\n{},{}\n", price, result.tradeable.value()),
            Format::Json => {
                let v = json!({ "price": decimal_number(price), "tradeable": result.tradeable.value() });
                serde_json::to_string_pretty(&v).expect("json") + "\n"
            }
        }
    };
    write_output(output, &text)
}

/// A JSON number carrying the decimal's exact digits.
fn decimal_number(d: Decimal) -> serde_json::Value {
    d.to_string()
        .parse::<serde_json::Number>()
        .map(serde_json::Value::Number)
        .unwrap_or_else(|_| serde_json::Value::String(d.to_string()))
}

fn run_sample(
    gases: &GasArgs,
    prev_close: Decimal,
    tick: Decimal,
    seed: u64,
    expected: bool,
    output: &str,
) -> CliResult {
    let (bid, ask) = both_gases(gases)?;
    if tick <= Decimal::ZERO {
        return Err(usage(format!("--tick must be > 0, got {tick}")));
    }
    if prev_close <= Decimal::ZERO {
        return Err(usage(format!("--prev-close must be > 0, got {prev_close}")));
    }
    let snapshot = if expected {
        book::model_book(&bid, &ask, prev_close, tick)?
    } else {
        book::sample_synthetic_book(&bid, &ask, prev_close, tick, seed)?
    };
    write_output(output, &(write_book_json(&snapshot) + "\n"))
}

fn run_fit(input: &str, side: Side, output: &str) -> CliResult {
    let points = parse_depth_csv(&read_input(input)?)?;
    let report = match calibration::fit_gas(&points, side) {
        Ok(fit) => json!({
            "status": "fit",
            "side": side,
            "temperature": fit.params.temperature(),
            "chemical_potential": fit.params.chemical_potential(),
            "r_squared": fit.r_squared,
            "rmse_transformed": fit.rmse_transformed,
            "points_used": fit.points_used,
            "points_excluded": fit.points_excluded,
        }),
        Err(e) if e.is_falsification() => {
            let (reason, line) = match &e {
                CalibrationError::WrongSlopeSign { line } => ("WrongSlopeSign", line),
                CalibrationError::NonNegativePotential { line, .. } => ("NonNegativePotential", line),
                _ => unreachable!(),
            };
            eprintln!("model falsified: {e}");
            json!({
                "status": "falsified",
                "side": side,
                "reason": reason,
                "slope": line.slope,
                "intercept": line.intercept,
                "r_squared": line.r_squared,
                "rmse_transformed": line.rmse_transformed,
                "points_used": line.points_used,
            })
        }
        Err(e) => return Err(e.into()),
    };
    write_output(output, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))
}

fn run_thermo(input: &str, vao_window: usize, format: Format, keep_zero_volume: bool, output: &str) -> CliResult {
    let cfg = PipelineConfig::new(vao_window, !keep_zero_volume)?;
    let bars = pipeline::parse_ohlcv(&read_input(input)?)?;
    let records = if bars.is_empty() {
        Vec::new()
    } else {
        pipeline::run_pipeline(&bars, &cfg)?
    };
    let format = match format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    write_output(output, &pipeline::write_output(&records, format))
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Curve {
            gases,
            from,
            to,
            points,
            output,
        } => run_curve(&gases, from, to, points, &output),
        Command::Clear {
            input,
            prev_close,
            levels,
            format,
            output,
        } => run_clear(&input, prev_close, levels, format, &output),
        Command::Sample {
            gases,
            prev_close,
            tick,
            seed,
            expected,
            output,
        } => run_sample(&gases, prev_close, tick, seed, expected, &output),
        Command::Fit { input, side, output } => run_fit(&input, side.into(), &output),
        Command::Thermo {
            input,
            vao_window,
            format,
            keep_zero_volume,
            output,
        } => run_thermo(&input, vao_window, format, keep_zero_volume, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
    }
}
