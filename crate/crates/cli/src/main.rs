use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use clinch_core::closed_form::{marginal_rates_n2, solve_n2, MarginalRates, Regime};
use clinch_core::engine::{self, EngineConfig, EventTrace};
use clinch_core::json;
use clinch_core::oracle::{run_property, CorpusSpec, Property, PropertyReport};
use clinch_core::stream::{StreamError, SupplyStream};
use clinch_core::vcg::{vcg_capacity_demo, vcg_multiunit, vcg_polymatroid, TableFunction};
use clinch_core::{AuctionInstance, Outcome, DEFAULT_TOLERANCE};

#[derive(Parser)]
#[command(name = "clinch", version, about = "Adaptive clinching auction solver and checks")]
struct Cli {
    /// Relative tolerance for money and supply comparisons.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Seed for randomized corpora (a `seed=` key in --corpus takes precedence).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Final allocation and payments for an instance.
    Solve(InputArgs),
    /// Event trace of the ascending process, one JSON object per event.
    Trace(InputArgs),
    /// Reads `{"supply": ds}` lines from standard input and prints the change
    /// in outcome after each.
    Stream(StreamArgs),
    /// Runs property checks over a seeded random corpus.
    Check(CheckArgs),
    /// Explicit two-bidder formulas.
    N2(N2Args),
    /// VCG reference outcomes.
    Vcg(VcgArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Instance file `{"values": [...], "budgets": [...], "supply": s}`;
    /// standard input when omitted or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    /// File with `{"values": [...], "budgets": [...]}`; any supply is ignored.
    #[arg(long, conflicts_with_all = ["values", "budgets"])]
    input: Option<PathBuf>,
    #[arg(long, num_args = 1.., requires = "budgets")]
    values: Vec<f64>,
    #[arg(long, num_args = 1.., requires = "values")]
    budgets: Vec<f64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Corpus parameters, e.g. `size=200,nmin=2,nmax=6,seed=3`.
    #[arg(long, default_value = "")]
    corpus: String,
    /// Properties to check; all of them when omitted.
    #[arg(long = "property", value_parser = parse_property)]
    properties: Vec<Property>,
}

#[derive(Args)]
struct N2Args {
    #[arg(long, num_args = 2, required = true)]
    v: Vec<f64>,
    #[arg(long, num_args = 2, required = true)]
    b: Vec<f64>,
    #[arg(long)]
    s: f64,
    /// Also print the derivative of the outcome in the supply.
    #[arg(long)]
    rates: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Multiunit,
    Capped,
}

#[derive(Args)]
struct VcgArgs {
    #[arg(long, num_args = 1.., required = true)]
    values: Vec<f64>,
    #[arg(long, required_unless_present = "table")]
    supply: Option<f64>,
    #[arg(long, value_enum, default_value_t = Family::Multiunit, conflicts_with = "table")]
    family: Family,
    /// Demand caps for the `capped` family.
    #[arg(long, num_args = 1..)]
    caps: Vec<f64>,
    /// JSON array of `2^n` set-function values indexed by subset bitmask.
    #[arg(long, conflicts_with = "supply")]
    table: Option<PathBuf>,
}

fn parse_property(s: &str) -> Result<Property, String> {
    s.parse()
}

/// Error carrying its exit status: 2 for bad input, 1 for everything else.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = run(&cli, &mut out);
    let flushed = out.flush();
    match result {
        Ok(code) => {
            if let Err(e) = flushed {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            code
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli, out: &mut impl Write) -> CliResult<ExitCode> {
    if !(cli.tolerance > 0.0 && cli.tolerance.is_finite()) {
        return Err(usage(anyhow!("--tolerance must be positive and finite")));
    }
    let config = EngineConfig::new(cli.tolerance, 1e-12).map_err(usage)?;
    match &cli.command {
        Command::Solve(args) => {
            let inst = read_instance(args.input.as_ref())?;
            let v = inst.validate().map_err(usage)?;
            let outcome = engine::solve_with(&v, config).map_err(failure)?;
            match cli.format {
                Format::Json => emit(out, &outcome)?,
                Format::Table => outcome_table(out, &inst.values, Some(&inst.budgets), &outcome)?,
            }
        }
        Command::Trace(args) => {
            let inst = read_instance(args.input.as_ref())?;
            let v = inst.validate().map_err(usage)?;
            let trace = engine::trace_with(&v, config).map_err(failure)?;
            match cli.format {
                Format::Json => write!(out, "{}", trace.to_json_lines()).map_err(failure)?,
                Format::Table => trace_table(out, &trace)?,
            }
        }
        Command::Stream(args) => stream(cli, config, args, out)?,
        Command::Check(args) => return check(cli, args, out),
        Command::N2(args) => n2(cli, args, out)?,
        Command::Vcg(args) => vcg(cli, args, out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn read_source(path: Option<&PathBuf>) -> CliResult<String> {
    match path {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(usage),
        _ => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .context("reading standard input")
                .map_err(usage)?;
            Ok(s)
        }
    }
}

fn read_instance(path: Option<&PathBuf>) -> CliResult<AuctionInstance> {
    let text = read_source(path)?;
    serde_json::from_str(&text).context("parsing instance").map_err(usage)
}

fn emit<T: Serialize + ?Sized>(out: &mut impl Write, value: &T) -> CliResult<()> {
    json::to_writer(&mut *out, value).map_err(failure)?;
    writeln!(out).map_err(failure)
}

fn line(out: &mut impl Write, text: std::fmt::Arguments) -> CliResult<()> {
    out.write_fmt(text).and_then(|_| writeln!(out)).map_err(failure)
}

fn outcome_table(out: &mut impl Write, values: &[f64], budgets: Option<&[f64]>, o: &Outcome) -> CliResult<()> {
    line(
        out,
        format_args!(
            "{:>6} {:>14} {:>14} {:>14} {:>14} {:>14}",
            "player", "value", "budget", "x", "pi", "u"
        ),
    )?;
    for i in 0..o.n() {
        let b = budgets.map_or(String::from("-"), |b| format!("{:.9}", b[i]));
        line(
            out,
            format_args!(
                "{:>6} {:>14.9} {:>14} {:>14.9} {:>14.9} {:>14.9}",
                i,
                values[i],
                b,
                o.allocation[i],
                o.payments[i],
                values[i] * o.allocation[i] - o.payments[i]
            ),
        )?;
    }
    Ok(())
}

fn trace_table(out: &mut impl Write, trace: &EventTrace) -> CliResult<()> {
    line(
        out,
        format_args!(
            "{:<12} {:>14} {:>10} {:>14}  clinching",
            "event", "price", "players", "remnant"
        ),
    )?;
    for ev in &trace.events {
        let kind = format!("{:?}", ev.kind);
        let players = format!("{:?}", ev.players);
        line(
            out,
            format_args!(
                "{:<12} {:>14.9} {:>10} {:>14.9}  {:?}",
                kind, ev.price, players, ev.after.remnant, ev.after.clinching
            ),
        )?;
    }
    if trace.meta.degenerate {
        line(
            out,
            format_args!("(fewer than two bidders with value and budget: degenerate rule applied)"),
        )?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct Bidders {
    values: Vec<f64>,
    budgets: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupplyEvent {
    supply: f64,
}

#[derive(Serialize)]
struct StreamLine<'a> {
    s_cum: f64,
    delta_x: &'a [f64],
    delta_pi: &'a [f64],
    x: &'a [f64],
    pi: &'a [f64],
    u: &'a [f64],
}

fn stream(cli: &Cli, config: EngineConfig, args: &StreamArgs, out: &mut impl Write) -> CliResult<()> {
    let bidders = if args.values.is_empty() {
        let path = args
            .input
            .as_ref()
            .ok_or_else(|| usage(anyhow!("give --input or --values and --budgets")))?;
        let text = read_source(Some(path))?;
        serde_json::from_str::<Bidders>(&text)
            .context("parsing bidders")
            .map_err(usage)?
    } else {
        Bidders {
            values: args.values.clone(),
            budgets: args.budgets.clone(),
        }
    };
    let mut st = SupplyStream::with_config(bidders.values, bidders.budgets, config.quiet()).map_err(usage)?;
    if cli.format == Format::Table {
        line(
            out,
            format_args!("{:>14}  {:<40} {:<40}", "s_cum", "delta_x", "delta_pi"),
        )?;
    }
    for (k, text) in io::stdin().lock().lines().enumerate() {
        let text = text.context("reading standard input").map_err(usage)?;
        if text.trim().is_empty() {
            continue;
        }
        let ev: SupplyEvent = serde_json::from_str(&text)
            .with_context(|| format!("line {}: expected {{\"supply\": number}}", k + 1))
            .map_err(usage)?;
        let d = st.on_supply(ev.supply).map_err(|e| match e {
            StreamError::MonotonicityViolation { .. } | StreamError::Engine(_) => failure(e),
            _ => usage(anyhow::Error::new(e).context(format!("line {}", k + 1))),
        })?;
        let o = st.outcome();
        match cli.format {
            Format::Json => emit(
                out,
                &StreamLine {
                    s_cum: d.s_cum,
                    delta_x: &d.delta_x,
                    delta_pi: &d.delta_pi,
                    x: &o.allocation,
                    pi: &o.payments,
                    u: &st.utility_snapshot(),
                },
            )?,
            Format::Table => line(
                out,
                format_args!(
                    "{:>14.9}  {:<40} {:<40}",
                    d.s_cum,
                    fmt_vec(&d.delta_x),
                    fmt_vec(&d.delta_pi)
                ),
            )?,
        }
        // keep downstream consumers in step with the input
        out.flush().map_err(failure)?;
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(cli: &Cli, args: &CheckArgs, out: &mut impl Write) -> CliResult<ExitCode> {
    let spec: CorpusSpec = format!("seed={},{}", cli.seed, args.corpus)
        .parse()
        .map_err(|e: String| usage(anyhow!("--corpus: {e}")))?;
    let properties: Vec<Property> = if args.properties.is_empty() {
        Property::all().to_vec()
    } else {
        args.properties.clone()
    };
    let reports: Vec<PropertyReport> = properties
        .iter()
        .map(|&p| run_property(p, &spec, cli.tolerance))
        .collect();
    match cli.format {
        Format::Json => emit(out, &reports)?,
        Format::Table => {
            line(
                out,
                format_args!(
                    "{:<12} {:>6} {:>10} {:>14} {:>14}",
                    "property", "status", "instances", "worst", "threshold"
                ),
            )?;
            for r in &reports {
                line(
                    out,
                    format_args!(
                        "{:<12} {:>6} {:>10} {:>14.3e} {:>14.3e}",
                        r.property,
                        if r.passed { "pass" } else { "FAIL" },
                        r.instances,
                        r.worst_violation,
                        r.threshold
                    ),
                )?;
                if let Some(w) = &r.witness {
                    line(out, format_args!("  instance {}: {}", w.index, w.detail))?;
                }
            }
        }
    }
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct N2Report<'a> {
    #[serde(flatten)]
    outcome: &'a Outcome,
    regime: String,
    b1_prime: f64,
    swapped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    rates: Option<RatesReport>,
}

#[derive(Serialize)]
struct RatesReport {
    dx: [f64; 2],
    dpi: [f64; 2],
}

fn n2(cli: &Cli, args: &N2Args, out: &mut impl Write) -> CliResult<()> {
    let (v, b) = (&args.v, &args.b);
    let (outcome, label) = solve_n2(v[0], v[1], b[0], b[1], args.s).map_err(usage)?;
    let rates = if args.rates {
        let MarginalRates {
            allocation, payments, ..
        } = marginal_rates_n2(v[0], v[1], b[0], b[1], args.s).map_err(usage)?;
        Some(RatesReport {
            dx: allocation,
            dpi: payments,
        })
    } else {
        None
    };
    match cli.format {
        Format::Json => emit(
            out,
            &N2Report {
                outcome: &outcome,
                regime: label.regime.to_string(),
                b1_prime: label.b1_prime,
                swapped: label.swapped,
                rates,
            },
        ),
        Format::Table => {
            line(
                out,
                format_args!("regime {} ({})", label.regime, regime_name(label.regime)),
            )?;
            outcome_table(out, v, Some(b), &outcome)?;
            if let Some(r) = rates {
                line(
                    out,
                    format_args!("dx/ds {}  dpi/ds {}", fmt_vec(&r.dx), fmt_vec(&r.dpi)),
                )?;
            }
            Ok(())
        }
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::SmallBudgetVcg => "VCG, larger budget has the lower value",
        Regime::SmallBudgetDepleted => "higher-value bidder exhausts its budget",
        Regime::SmallBudgetSplit => "supply split, larger budget has the lower value",
        Regime::LargeBudgetVcg => "VCG, larger budget has the higher value",
        Regime::LargeBudgetDiscounted => "all supply to the larger budget at a discount",
        Regime::LargeBudgetSplit => "supply split, larger budget has the higher value",
    }
}

fn vcg(cli: &Cli, args: &VcgArgs, out: &mut impl Write) -> CliResult<()> {
    let outcome = if let Some(path) = &args.table {
        let text = read_source(Some(path))?;
        let table: Vec<f64> = serde_json::from_str(&text).context("parsing table").map_err(usage)?;
        let f = TableFunction::new(args.values.len(), table).map_err(usage)?;
        vcg_polymatroid(&args.values, &f)
    } else {
        let supply = args.supply.expect("clap requires --supply without --table");
        match args.family {
            Family::Multiunit => vcg_multiunit(&args.values, supply),
            Family::Capped => {
                if args.caps.len() != args.values.len() {
                    return Err(usage(anyhow!("--caps needs one entry per value")));
                }
                vcg_capacity_demo(&args.values, &args.caps, supply)
            }
        }
    }
    .map_err(usage)?;
    match cli.format {
        Format::Json => emit(out, &outcome),
        Format::Table => outcome_table(out, &args.values, None, &outcome),
    }
}
