//! Command-line front end: full experiment sweeps to CSV, single runs
//! with an optional event-log dump, and the built-in eight-node
//! walkthrough.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 1 otherwise.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use qos_lookup::demo::{node_label, run_demo};
use qos_lookup::engine::run_simulation;
use qos_lookup::protocol::Strategy;
use qos_lookup::sweep::{run_sweep, write_csv_files, SweepResult, SweepSpec};
use qos_lookup::trace::format_trace;
use qos_lookup::{ConfigError, Exact, Real, Scalar, SimConfig, SimError};

#[derive(Parser)]
#[command(
    name = "qos-lookup",
    version,
    about = "Deterministic simulator of QoS-adaptive lookup in unstructured overlays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ttl x strategy x seed grid and write CSV files.
    Sweep(SweepArgs),
    /// Run a single cell and print its summary.
    Run(RunArgs),
    /// Run the built-in eight-node walkthrough and print the ranked hits.
    Fig2,
}

#[derive(Args)]
struct SweepArgs {
    /// Base configuration file, flat `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    ttl_min: u32,
    #[arg(long, default_value_t = 5)]
    ttl_max: u32,
    /// Comma-separated subset of: qos, flooding.
    #[arg(long, value_delimiter = ',', default_value = "qos,flooding")]
    strategies: Vec<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Queries per grid cell.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    /// Directory for results.csv, messages.csv, hits.csv, unwanted.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file, flat `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured TTL.
    #[arg(long)]
    ttl: Option<u32>,
    /// Override the configured strategy (qos or flooding).
    #[arg(long)]
    strategy: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of queries.
    #[arg(long)]
    queries: Option<usize>,
    /// Write the full event log to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                SimError::Config(_) | SimError::Domain(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Run(args) => run(args),
        Command::Fig2 => fig2(),
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig<Real>, SimError> {
    let config = match path {
        Some(path) => SimConfig::<Real>::parse(&std::fs::read_to_string(path)?)?,
        None => SimConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn parse_strategy(name: &str) -> Result<Strategy, SimError> {
    Strategy::from_str(name).map_err(|why| ConfigError::Invalid(why).into())
}

fn sweep(args: SweepArgs) -> Result<(), SimError> {
    let strategies = args
        .strategies
        .iter()
        .map(|name| parse_strategy(name))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        ttl_min: args.ttl_min,
        ttl_max: args.ttl_max,
        strategies,
        seeds: args.seeds,
        queries_per_cell: args.queries,
        base: load_config(args.config.as_deref())?,
    };
    let result = run_sweep(&spec)?;
    write_csv_files(&result, &args.out)?;
    print_means(&result);
    println!(
        "wrote results.csv, messages.csv, hits.csv, unwanted.csv to {}",
        args.out.display()
    );
    Ok(())
}

fn print_means(result: &SweepResult) {
    println!("ttl  strategy  msgs/query  hits/query  unwanted/query  lost/query");
    for m in result.cell_means() {
        println!(
            "{:>3}  {:<8}  {:>10.1}  {:>10.2}  {:>14.2}  {:>10.2}",
            m.ttl,
            m.strategy,
            m.avg_messages_per_query,
            m.avg_hits_per_query,
            m.avg_unwanted_per_query,
            m.avg_lost_per_query
        );
    }
}

fn run(args: RunArgs) -> Result<(), SimError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(ttl) = args.ttl {
        config.ttl = ttl;
    }
    if let Some(name) = args.strategy.as_deref() {
        config.strategy = parse_strategy(name)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(queries) = args.queries {
        config.queries_per_run = queries;
    }
    config.validate()?;

    let run = run_simulation(&config)?;
    let queries = config.queries_per_run.max(1) as f64;
    println!(
        "strategy {}, ttl {}, seed {}, {} nodes, {} queries",
        config.strategy, config.ttl, config.seed, config.node_count, config.queries_per_run
    );
    println!(
        "messages {} ({:.1}/query)",
        run.counts.forwards,
        run.counts.forwards as f64 / queries
    );
    println!(
        "hits delivered {} ({:.2}/query), unwanted {}, lost {}",
        run.counts.hits_delivered,
        run.counts.hits_delivered as f64 / queries,
        run.counts.unwanted_hits,
        run.counts.hits_lost
    );

    if let Some(path) = args.trace.as_deref() {
        std::fs::write(path, format_trace(&run.trace))?;
        println!("wrote {} trace records to {}", run.trace.len(), path.display());
    }
    Ok(())
}

fn fig2() -> Result<(), SimError> {
    // Exact arithmetic inside; costs print as two-decimal numbers.
    let report = run_demo::<Exact>()?;
    let dec = |v: &Exact| v.to_f64_lossy();

    println!("admission threshold: {:.2}", dec(&report.max_cost));
    let admitted: Vec<String> = report
        .admitted
        .iter()
        .map(|&n| node_label(n).to_string())
        .collect();
    println!("A forwards to: {}", admitted.join(", "));
    for (node, cost) in &report.rejected {
        println!("A rejects: {} (hop cost {:.2})", node_label(*node), dec(cost));
    }

    println!("rank  node  files  accumulated  final");
    for hit in &report.results {
        println!(
            "{:>4}  {:>4}  {:>5}  {:>11.2}  {:>5.2}",
            hit.rank,
            node_label(hit.responder),
            hit.num_files,
            dec(&hit.accumulated_cost),
            dec(&hit.final_cost)
        );
    }
    println!(
        "forwards {}, hits delivered {} of {}, unwanted {}",
        report.counts.forwards,
        report.counts.hits_delivered,
        report.counts.hits_sent,
        report.counts.unwanted_hits
    );
    Ok(())
}
