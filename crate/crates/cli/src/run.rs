//! Orchestration: build the graph, place tree roots, sweep the workload
//! across all requested schemes, and emit one CSV.
//!
//! The CSV is assembled in memory and written in a single call from one
//! thread, so identical configurations always produce byte-identical files
//! no matter how many worker threads crunched the cells.

use std::fmt::Write as _;

use anyhow::{Context, Result};

use entroute_core::prelude::*;
use entroute_core::rng::topology_seed;

use crate::config::{ExperimentConfig, SchemeSpec, TopologySpec};

/// Column order of the emitted CSV.
pub const CSV_HEADER: &str = "scheme,topology,distance,attempts,successes,rate,seed";

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunReport {
    /// The CSV text written to the output path.
    pub csv: String,
    /// One human-readable line per scheme.
    pub summaries: Vec<String>,
    /// The raw measurement records.
    pub records: Vec<RateRecord>,
}

/// Materializes the physical graph a spec describes. Random graphs derive
/// their seed from the master seed, so one `seed` value pins the whole run.
pub fn build_topology(spec: &TopologySpec, seed: u64) -> Result<PhysicalTopology> {
    let topo = match spec {
        TopologySpec::Grid { rows, cols } => PhysicalTopology::gen_grid(*rows, *cols),
        TopologySpec::Path { n } => PhysicalTopology::from_edges(
            format!("path:{n}"),
            *n,
            (0..n - 1).map(|i| (i, i + 1)),
        ),
        TopologySpec::Er { n, p_edge } => {
            PhysicalTopology::gen_erdos_renyi(*n, *p_edge, topology_seed(seed))
        }
        TopologySpec::Barbell { n, p_edge } => {
            PhysicalTopology::gen_barbell(*n, *p_edge, topology_seed(seed))
        }
        TopologySpec::File(path) => PhysicalTopology::load(path),
    };
    topo.with_context(|| format!("topology {spec}"))
}

/// Places each scheme's roots on the graph and validates the combination.
pub fn resolve_schemes(
    specs: &[SchemeSpec],
    topo: &PhysicalTopology,
) -> Result<Vec<Scheme>> {
    specs
        .iter()
        .map(|spec| {
            let roots = match &spec.strategy {
                Some(strategy) => topo
                    .select_roots(strategy)
                    .with_context(|| format!("scheme {}: root strategy", spec.kind))?,
                None => Vec::new(),
            };
            Scheme::new(spec.kind, roots).with_context(|| format!("scheme {}", spec.kind))
        })
        .collect()
}

/// Runs the configured experiment, writes the CSV to the configured output
/// path, and returns the run's artifacts.
pub fn run_cli(config: &ExperimentConfig) -> Result<RunReport> {
    let topo = build_topology(&config.topology, config.seed)?;
    let schemes = resolve_schemes(&config.schemes, &topo)?;
    let params = SimParams::new(config.p, config.q, config.tco)?;
    let workload = WorkloadSpec::new(
        config.distances.clone(),
        config.attempts,
        config.warmup,
    )?;
    let records = run_cells_parallel(
        &topo,
        &schemes,
        params,
        &workload,
        EngineOptions::default(),
        config.seed,
        config.threads,
    )?;
    let csv = render_csv(config, &schemes, &records);
    std::fs::write(&config.output, &csv)
        .with_context(|| format!("writing {}", config.output.display()))?;
    let summaries = summarize(&schemes, &records);
    Ok(RunReport {
        csv,
        summaries,
        records,
    })
}

/// Renders the CSV: a comment block carrying the full configuration (plus
/// the resolved roots), the header line, then one row per measured cell.
pub fn render_csv(
    config: &ExperimentConfig,
    schemes: &[Scheme],
    records: &[RateRecord],
) -> String {
    let mut out = String::new();
    for (key, value) in config.provenance() {
        writeln!(out, "# {key} = {value}").unwrap();
    }
    let roots = schemes
        .iter()
        .map(|scheme| {
            let ids = scheme
                .roots
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            format!("{}:[{}]", scheme.kind, ids)
        })
        .collect::<Vec<_>>()
        .join(",");
    writeln!(out, "# roots = {roots}").unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{}",
            r.scheme, r.topology, r.distance, r.attempts, r.successes, r.rate, r.seed
        )
        .unwrap();
    }
    out
}

/// One line per scheme: how many distances produced data and the mean rate
/// across them.
fn summarize(schemes: &[Scheme], records: &[RateRecord]) -> Vec<String> {
    schemes
        .iter()
        .map(|scheme| {
            let rates: Vec<f64> = records
                .iter()
                .filter(|r| r.scheme == scheme.kind)
                .map(|r| r.rate)
                .collect();
            if rates.is_empty() {
                format!("{}: no distance produced data", scheme.kind)
            } else {
                let mean = rates.iter().sum::<f64>() / rates.len() as f64;
                format!(
                    "{}: {} distances, mean rate {:.6}",
                    scheme.kind,
                    rates.len(),
                    mean
                )
            }
        })
        .collect()
}
