//! Experiment sweeps: the TTL x strategy x seed grid, parallel cell
//! execution, and the CSV outputs (one wide table plus one pivoted table
//! per plotted metric).

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::engine::run_simulation;
use crate::error::{ConfigError, SimError, TraceError};
use crate::metrics::RunMetrics;
use crate::protocol::Strategy;
use crate::scalar::Scalar;

/// The grid to run: every combination of TTL, strategy, and seed over a
/// shared base configuration.
#[derive(Debug, Clone)]
pub struct SweepSpec<S> {
    pub ttl_min: u32,
    pub ttl_max: u32,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub queries_per_cell: usize,
    pub base: SimConfig<S>,
}

impl<S: Scalar> SweepSpec<S> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ttl_min == 0 || self.ttl_min > self.ttl_max {
            return Err(ConfigError::Invalid(format!(
                "ttl range [{}, {}] is invalid",
                self.ttl_min, self.ttl_max
            )));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::Invalid("no strategies selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("no seeds selected".into()));
        }
        if self.queries_per_cell == 0 {
            return Err(ConfigError::Invalid("queries_per_cell must be at least 1".into()));
        }
        let mut probe = self.base.clone();
        probe.ttl = self.ttl_min;
        probe.queries_per_run = self.queries_per_cell;
        probe.validate()
    }

    fn cell_config(&self, ttl: u32, strategy: Strategy, seed: u64) -> SimConfig<S> {
        let mut config = self.base.clone();
        config.ttl = ttl;
        config.strategy = strategy;
        config.seed = seed;
        config.queries_per_run = self.queries_per_cell;
        config
    }
}

/// Results of a sweep, one row per grid cell, sorted by
/// (ttl, strategy, seed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepResult {
    pub rows: Vec<RunMetrics>,
}

/// Per-(ttl, strategy) averages across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMean {
    pub ttl: u32,
    pub strategy: Strategy,
    pub avg_messages_per_query: f64,
    pub avg_hits_per_query: f64,
    pub avg_unwanted_per_query: f64,
    pub avg_lost_per_query: f64,
}

impl SweepResult {
    pub fn rows_for(&self, ttl: u32, strategy: Strategy) -> Vec<&RunMetrics> {
        self.rows
            .iter()
            .filter(|r| r.ttl == ttl && r.strategy == strategy)
            .collect()
    }

    /// Collapses seeds: mean of the per-query averages per (ttl, strategy).
    pub fn cell_means(&self) -> Vec<CellMean> {
        let mut groups: BTreeMap<(u32, Strategy), Vec<&RunMetrics>> = BTreeMap::new();
        for row in &self.rows {
            groups.entry((row.ttl, row.strategy)).or_default().push(row);
        }
        groups
            .into_iter()
            .map(|((ttl, strategy), rows)| {
                let n = rows.len() as f64;
                let mean = |f: &dyn Fn(&RunMetrics) -> f64| {
                    rows.iter().map(|r| f(r)).sum::<f64>() / n
                };
                CellMean {
                    ttl,
                    strategy,
                    avg_messages_per_query: mean(&|r| r.avg_messages_per_query()),
                    avg_hits_per_query: mean(&|r| r.avg_hits_per_query()),
                    avg_unwanted_per_query: mean(&|r| {
                        r.unwanted_hits as f64 / r.queries.max(1) as f64
                    }),
                    avg_lost_per_query: mean(&|r| r.lost_hits as f64 / r.queries.max(1) as f64),
                }
            })
            .collect()
    }
}

/// Runs every cell of the grid (in parallel) and returns the sorted rows.
pub fn run_sweep<S: Scalar>(spec: &SweepSpec<S>) -> Result<SweepResult, SimError> {
    spec.validate()?;
    let mut cells = Vec::new();
    for ttl in spec.ttl_min..=spec.ttl_max {
        for &strategy in &spec.strategies {
            for &seed in &spec.seeds {
                cells.push((ttl, strategy, seed));
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|&(ttl, strategy, seed)| {
            let config = spec.cell_config(ttl, strategy, seed);
            let run = run_simulation(&config)?;
            Ok(RunMetrics::from_counts(
                ttl,
                strategy,
                seed,
                config.queries_per_run as u64,
                &run.counts,
            ))
        })
        .collect::<Result<Vec<RunMetrics>, SimError>>()?;
    rows.sort_by_key(|r| (r.ttl, r.strategy.as_str(), r.seed));
    Ok(SweepResult { rows })
}

pub const CSV_HEADER: &str = "ttl,strategy,seed,queries,messages,hits,unwanted_hits,lost_hits,avg_messages_per_query,avg_hits_per_query";

/// Renders the wide results table. Averages are recomputed from the
/// integer tallies at emission time and printed with four decimals.
pub fn emit_csv(rows: &[RunMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.4},{:.4}\n",
            r.ttl,
            r.strategy,
            r.seed,
            r.queries,
            r.messages,
            r.hits,
            r.unwanted_hits,
            r.lost_hits,
            r.avg_messages_per_query(),
            r.avg_hits_per_query(),
        ));
    }
    out
}

/// Parses the output of [`emit_csv`] back into rows. The stored average
/// columns are validated against the recomputed values.
pub fn parse_csv(text: &str) -> Result<Vec<RunMetrics>, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TraceError::parse(1, "empty csv"))?;
    if header != CSV_HEADER {
        return Err(TraceError::parse(1, "unexpected csv header"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [ttl, strategy, seed, queries, messages, hits, unwanted, lost, avg_m, avg_h] =
            fields.as_slice()
        else {
            return Err(TraceError::parse(lineno, "expected 10 columns"));
        };
        let bad = |what: &str| TraceError::parse(lineno, format!("bad {what}"));
        let row = RunMetrics {
            ttl: ttl.parse().map_err(|_| bad("ttl"))?,
            strategy: strategy.parse().map_err(|_| bad("strategy"))?,
            seed: seed.parse().map_err(|_| bad("seed"))?,
            queries: queries.parse().map_err(|_| bad("queries"))?,
            messages: messages.parse().map_err(|_| bad("messages"))?,
            hits: hits.parse().map_err(|_| bad("hits"))?,
            unwanted_hits: unwanted.parse().map_err(|_| bad("unwanted_hits"))?,
            lost_hits: lost.parse().map_err(|_| bad("lost_hits"))?,
        };
        let check_avg = |name: &str, text: &str, value: f64| -> Result<(), TraceError> {
            let stored: f64 = text
                .parse()
                .map_err(|_| TraceError::parse(lineno, format!("bad {name}")))?;
            if (stored - value).abs() > 5e-5 {
                return Err(TraceError::parse(
                    lineno,
                    format!("{name} column disagrees with the tallies"),
                ));
            }
            Ok(())
        };
        check_avg("avg_messages_per_query", avg_m, row.avg_messages_per_query())?;
        check_avg("avg_hits_per_query", avg_h, row.avg_hits_per_query())?;
        rows.push(row);
    }
    Ok(rows)
}

/// The three per-figure metrics, pivoted as `ttl x strategy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureMetric {
    Messages,
    Hits,
    UnwantedHits,
}

impl FigureMetric {
    pub fn file_name(self) -> &'static str {
        match self {
            FigureMetric::Messages => "messages.csv",
            FigureMetric::Hits => "hits.csv",
            FigureMetric::UnwantedHits => "unwanted.csv",
        }
    }

    fn pick(self, mean: &CellMean) -> f64 {
        match self {
            FigureMetric::Messages => mean.avg_messages_per_query,
            FigureMetric::Hits => mean.avg_hits_per_query,
            FigureMetric::UnwantedHits => mean.avg_unwanted_per_query,
        }
    }
}

/// Renders one pivoted per-figure table: rows are TTLs, one column per
/// strategy, cells are the seed-averaged per-query metric.
pub fn figure_csv(means: &[CellMean], metric: FigureMetric) -> String {
    let mut strategies: Vec<Strategy> = means.iter().map(|m| m.strategy).collect();
    strategies.sort_by_key(|s| s.as_str());
    strategies.dedup();
    let mut ttls: Vec<u32> = means.iter().map(|m| m.ttl).collect();
    ttls.sort_unstable();
    ttls.dedup();

    let mut out = String::from("ttl");
    for s in &strategies {
        out.push(',');
        out.push_str(s.as_str());
    }
    out.push('\n');
    for ttl in ttls {
        out.push_str(&ttl.to_string());
        for s in &strategies {
            let cell = means
                .iter()
                .find(|m| m.ttl == ttl && m.strategy == *s)
                .map(|m| metric.pick(m));
            match cell {
                Some(v) => out.push_str(&format!(",{v:.4}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the wide table and the three per-figure tables into `dir`.
pub fn write_csv_files(result: &SweepResult, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), emit_csv(&result.rows))?;
    let means = result.cell_means();
    for metric in [
        FigureMetric::Messages,
        FigureMetric::Hits,
        FigureMetric::UnwantedHits,
    ] {
        std::fs::write(dir.join(metric.file_name()), figure_csv(&means, metric))?;
    }
    Ok(())
}
