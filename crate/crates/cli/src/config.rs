//! Configuration: command-line flags, a `key = value` config file with the
//! same key names, and validation that names the offending field.
//!
//! Flags override file entries; anything still unset falls back to a
//! documented default. The fully resolved configuration is echoed into the
//! CSV header so every run is self-describing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;

use entroute_core::prelude::*;

/// All keys accepted both as `--key value` flags and as `key = value` lines
/// in a config file.
const KNOWN_KEYS: &[&str] = &[
    "topology",
    "scheme",
    "p",
    "q",
    "tco",
    "distances",
    "attempts",
    "warmup",
    "seed",
    "output",
    "threads",
];

/// Measure end-to-end entanglement rates of tree-based routing schemes over
/// a repeater network.
#[derive(Parser, Debug, Default)]
#[command(name = "entroute", version, about)]
pub struct CliArgs {
    /// Config file with `key = value` lines (same keys as the flags);
    /// flags given here override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Topology: grid:RxC, path:N, er:N:P, barbell:N:P, or file:PATH
    /// (edge list or GML). Random topologies derive their seed from
    /// --seed.
    #[arg(long)]
    pub topology: Option<String>,

    /// Scheme to run: multi-tree, single-tree, or synchronous, optionally
    /// with a root strategy suffix, e.g. multi-tree:density:4. Repeat the
    /// flag or separate entries with commas. Default: all three.
    #[arg(long)]
    pub scheme: Vec<String>,

    /// Per-edge link generation probability per step, in [0, 1].
    #[arg(long)]
    pub p: Option<f64>,

    /// Swap success probability, in [0, 1].
    #[arg(long)]
    pub q: Option<f64>,

    /// Coherence time: steps a link survives after creation (>= 1).
    #[arg(long)]
    pub tco: Option<u32>,

    /// Distance sweep: an inclusive range like 2..10 or a comma list like
    /// 2,4,8.
    #[arg(long)]
    pub distances: Option<String>,

    /// Request attempts measured per distance.
    #[arg(long)]
    pub attempts: Option<u64>,

    /// Regeneration steps before each asynchronous attempt.
    #[arg(long)]
    pub warmup: Option<u32>,

    /// Master seed; every random stream of the run derives from it.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output CSV path.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Worker threads for experiment cells (0 = all cores). Defaults to
    /// the ENTROUTE_THREADS environment variable when set.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// How to build the physical graph.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// A rows-by-cols grid.
    Grid {
        /// Number of rows.
        rows: u32,
        /// Number of columns.
        cols: u32,
    },
    /// A linear chain of `n` nodes.
    Path {
        /// Number of nodes.
        n: u32,
    },
    /// A seeded random graph: every node pair is an edge with probability
    /// `p_edge`.
    Er {
        /// Number of nodes.
        n: u32,
        /// Edge probability.
        p_edge: f64,
    },
    /// Two random clusters of `n` nodes each joined by one bridge edge.
    Barbell {
        /// Nodes per cluster.
        n: u32,
        /// Edge probability within each cluster.
        p_edge: f64,
    },
    /// Load from an edge-list or GML file.
    File(PathBuf),
}

impl fmt::Display for TopologySpec {
    /// Writes the same syntax [`parse_topology_spec`] accepts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            TopologySpec::Path { n } => write!(f, "path:{n}"),
            TopologySpec::Er { n, p_edge } => write!(f, "er:{n}:{p_edge}"),
            TopologySpec::Barbell { n, p_edge } => write!(f, "barbell:{n}:{p_edge}"),
            TopologySpec::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

/// One scheme to run, with the strategy that places its tree roots
/// (`None` for the rootless synchronous baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    /// Which routing discipline.
    pub kind: SchemeKind,
    /// Where its roots go.
    pub strategy: Option<RootStrategy>,
}

/// A fully validated run description with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// The physical graph to build.
    pub topology: TopologySpec,
    /// Schemes to measure, in output order.
    pub schemes: Vec<SchemeSpec>,
    /// Per-edge link generation probability per step.
    pub p: f64,
    /// Swap success probability.
    pub q: f64,
    /// Coherence time in steps.
    pub tco: u32,
    /// Distance sweep.
    pub distances: Vec<u32>,
    /// Attempts per distance.
    pub attempts: u64,
    /// Warmup steps per asynchronous attempt.
    pub warmup: u32,
    /// Master seed.
    pub seed: u64,
    /// Output CSV path.
    pub output: PathBuf,
    /// Worker threads (0 = all cores).
    pub threads: usize,
}

impl ExperimentConfig {
    /// Every configuration value that affects the results, as `(key,
    /// value)` pairs in a fixed order. `output` and `threads` are excluded:
    /// neither changes a single byte of the data rows.
    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        vec![
            ("topology", self.topology.to_string()),
            ("scheme", render_scheme_list(&self.schemes)),
            ("p", self.p.to_string()),
            ("q", self.q.to_string()),
            ("tco", self.tco.to_string()),
            (
                "distances",
                self.distances
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("attempts", self.attempts.to_string()),
            ("warmup", self.warmup.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Renders a scheme list in the same syntax the `scheme` key accepts.
pub fn render_scheme_list(schemes: &[SchemeSpec]) -> String {
    schemes
        .iter()
        .map(|spec| match &spec.strategy {
            Some(strategy) => format!("{}:{}", spec.kind, render_strategy(strategy)),
            None => spec.kind.to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a root strategy in the same syntax `parse_root_strategy`
/// accepts.
pub fn render_strategy(strategy: &RootStrategy) -> String {
    match strategy {
        RootStrategy::Explicit(nodes) => format!(
            "explicit:{}",
            nodes
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join("+")
        ),
        RootStrategy::GridCenter => "grid-center".into(),
        RootStrategy::GridQuadrants => "grid-quadrants".into(),
        RootStrategy::MinEccentricity(k) => format!("min-ecc:{k}"),
        RootStrategy::DensityClusters(k) => format!("density:{k}"),
        RootStrategy::MaxDegree(k) => format!("max-degree:{k}"),
    }
}

/// Builds the validated configuration from flags plus the optional config
/// file the flags point to. Flags win over file entries; remaining gaps are
/// filled with defaults.
pub fn parse_config(args: &CliArgs) -> Result<ExperimentConfig> {
    let mut file_entries = BTreeMap::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config file {}", path.display()))?;
        file_entries = parse_config_file(&text)
            .with_context(|| format!("config file {}", path.display()))?;
    }
    build_config(args, &file_entries, std::env::var("ENTROUTE_THREADS").ok())
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped, and unknown keys are rejected by name.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", idx + 1))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            bail!("line {}: unknown key {key:?}", idx + 1);
        }
        if entries.insert(key.to_owned(), value.to_owned()).is_some() {
            bail!("line {}: duplicate key {key:?}", idx + 1);
        }
    }
    Ok(entries)
}

/// Merges flags over file entries, applies defaults, and validates. The
/// `env_threads` parameter carries the raw ENTROUTE_THREADS value so tests
/// can exercise the precedence without touching the process environment.
fn build_config(
    args: &CliArgs,
    file: &BTreeMap<String, String>,
    env_threads: Option<String>,
) -> Result<ExperimentConfig> {
    fn pick<T, F>(flag: Option<T>, file: Option<&String>, key: &str, parse: F) -> Result<Option<T>>
    where
        F: FnOnce(&str) -> Result<T>,
    {
        match (flag, file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(raw)) => parse(raw).map(Some).with_context(|| format!("key {key:?}")),
            (None, None) => Ok(None),
        }
    }

    let topology_raw = match (&args.topology, file.get("topology")) {
        (Some(raw), _) | (None, Some(raw)) => raw.clone(),
        (None, None) => bail!("missing topology: pass --topology or a `topology =` entry"),
    };
    let topology = parse_topology_spec(&topology_raw)?;

    let scheme_raw: Vec<String> = if args.scheme.is_empty() {
        match file.get("scheme") {
            Some(raw) => vec![raw.clone()],
            None => vec!["multi-tree,single-tree,synchronous".into()],
        }
    } else {
        args.scheme.clone()
    };
    let schemes = parse_scheme_list(&scheme_raw, &topology)?;

    let p = pick(args.p, file.get("p"), "p", parse_f64)?.unwrap_or(0.8);
    let q = pick(args.q, file.get("q"), "q", parse_f64)?.unwrap_or(0.8);
    let tco = pick(args.tco, file.get("tco"), "tco", parse_u32)?.unwrap_or(2);
    let distances = match (&args.distances, file.get("distances")) {
        (Some(raw), _) | (None, Some(raw)) => parse_distances(raw)?,
        (None, None) => (2..=10).collect(),
    };
    let attempts = pick(args.attempts, file.get("attempts"), "attempts", parse_u64)?
        .unwrap_or(10_000);
    let warmup = pick(args.warmup, file.get("warmup"), "warmup", parse_u32)?.unwrap_or(5);
    let seed = pick(args.seed, file.get("seed"), "seed", parse_u64)?.unwrap_or(0);
    let output = match (&args.output, file.get("output")) {
        (Some(path), _) => path.clone(),
        (None, Some(raw)) => PathBuf::from(raw),
        (None, None) => PathBuf::from("results.csv"),
    };
    let threads = match pick(args.threads, file.get("threads"), "threads", parse_usize)? {
        Some(n) => n,
        None => match env_threads {
            Some(raw) => parse_usize(&raw).context("environment variable ENTROUTE_THREADS")?,
            None => 0,
        },
    };

    if !(0.0..=1.0).contains(&p) {
        bail!("p = {p}: must lie in [0, 1]");
    }
    if !(0.0..=1.0).contains(&q) {
        bail!("q = {q}: must lie in [0, 1]");
    }
    if tco < 1 {
        bail!("tco = {tco}: must be at least 1");
    }
    if distances.contains(&0) {
        bail!("distances: every entry must be at least 1");
    }
    if attempts == 0 {
        bail!("attempts = 0: must be at least 1");
    }

    Ok(ExperimentConfig {
        topology,
        schemes,
        p,
        q,
        tco,
        distances,
        attempts,
        warmup,
        seed,
        output,
        threads,
    })
}

fn parse_f64(raw: &str) -> Result<f64> {
    raw.parse().map_err(|_| anyhow!("{raw:?} is not a number"))
}

fn parse_u32(raw: &str) -> Result<u32> {
    raw.parse()
        .map_err(|_| anyhow!("{raw:?} is not a non-negative integer"))
}

fn parse_u64(raw: &str) -> Result<u64> {
    raw.parse()
        .map_err(|_| anyhow!("{raw:?} is not a non-negative integer"))
}

fn parse_usize(raw: &str) -> Result<usize> {
    raw.parse()
        .map_err(|_| anyhow!("{raw:?} is not a non-negative integer"))
}

/// Parses a topology spec string; errors name the `topology` field.
pub fn parse_topology_spec(raw: &str) -> Result<TopologySpec> {
    let err = |msg: &str| anyhow!("topology {raw:?}: {msg}");
    let (kind, rest) = raw
        .split_once(':')
        .ok_or_else(|| err("expected grid:RxC, path:N, er:N:P, barbell:N:P, or file:PATH"))?;
    match kind {
        "grid" => {
            let (rows, cols) = rest
                .split_once('x')
                .ok_or_else(|| err("grid wants ROWSxCOLS, e.g. grid:10x10"))?;
            let rows = rows.parse().map_err(|_| err("rows must be an integer"))?;
            let cols = cols.parse().map_err(|_| err("cols must be an integer"))?;
            if rows == 0 || cols == 0 {
                return Err(err("grid dimensions must be at least 1"));
            }
            Ok(TopologySpec::Grid { rows, cols })
        }
        "path" => {
            let n = rest
                .parse()
                .map_err(|_| err("path wants a node count, e.g. path:30"))?;
            if n < 2 {
                return Err(err("a path needs at least 2 nodes"));
            }
            Ok(TopologySpec::Path { n })
        }
        "er" | "barbell" => {
            let (n, p_edge) = rest
                .split_once(':')
                .ok_or_else(|| err("wants N:P, e.g. er:50:0.1"))?;
            let n = n.parse().map_err(|_| err("node count must be an integer"))?;
            let p_edge: f64 = p_edge
                .parse()
                .map_err(|_| err("edge probability must be a number"))?;
            if !(0.0..=1.0).contains(&p_edge) {
                return Err(err("edge probability must lie in [0, 1]"));
            }
            if n == 0 {
                return Err(err("node count must be at least 1"));
            }
            Ok(if kind == "er" {
                TopologySpec::Er { n, p_edge }
            } else {
                TopologySpec::Barbell { n, p_edge }
            })
        }
        "file" => Ok(TopologySpec::File(PathBuf::from(rest))),
        _ => Err(err("unknown kind (grid, path, er, barbell, file)")),
    }
}

/// Parses scheme entries (each possibly a comma-separated list). Missing
/// root strategies get topology-appropriate defaults; duplicate scheme
/// kinds are rejected.
fn parse_scheme_list(raw: &[String], topology: &TopologySpec) -> Result<Vec<SchemeSpec>> {
    let is_grid = matches!(topology, TopologySpec::Grid { .. });
    let mut specs = Vec::new();
    for entry in raw.iter().flat_map(|chunk| chunk.split(',')) {
        let entry = entry.trim();
        if entry.is_empty() {
            bail!("scheme: empty entry");
        }
        let (kind_raw, strategy_raw) = match entry.split_once(':') {
            Some((k, s)) => (k, Some(s)),
            None => (entry, None),
        };
        let kind: SchemeKind = kind_raw
            .parse()
            .map_err(|msg: String| anyhow!("scheme: {msg}"))?;
        let strategy = match (kind, strategy_raw) {
            (SchemeKind::Synchronous, Some(_)) => {
                bail!("scheme {entry:?}: the synchronous baseline takes no root strategy")
            }
            (SchemeKind::Synchronous, None) => None,
            (_, Some(raw)) => Some(parse_root_strategy(raw)?),
            (SchemeKind::MultiTree, None) => Some(if is_grid {
                RootStrategy::GridQuadrants
            } else {
                RootStrategy::DensityClusters(4)
            }),
            (SchemeKind::SingleTree, None) => Some(if is_grid {
                RootStrategy::GridCenter
            } else {
                RootStrategy::MinEccentricity(1)
            }),
        };
        if specs.iter().any(|s: &SchemeSpec| s.kind == kind) {
            bail!("scheme {}: listed twice", kind);
        }
        specs.push(SchemeSpec { kind, strategy });
    }
    Ok(specs)
}

/// Parses a root strategy spec; errors name the `scheme` field it came
/// from.
pub fn parse_root_strategy(raw: &str) -> Result<RootStrategy> {
    let err = |msg: &str| anyhow!("scheme root strategy {raw:?}: {msg}");
    let (head, tail) = match raw.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (raw, None),
    };
    let want_count = |tail: Option<&str>| -> Result<usize> {
        let tail = tail.ok_or_else(|| err("wants a count, e.g. density:4"))?;
        let k: usize = tail
            .parse()
            .map_err(|_| err("count must be a positive integer"))?;
        if k == 0 {
            return Err(err("count must be at least 1"));
        }
        Ok(k)
    };
    match head {
        "grid-center" => Ok(RootStrategy::GridCenter),
        "grid-quadrants" => Ok(RootStrategy::GridQuadrants),
        "min-ecc" => Ok(RootStrategy::MinEccentricity(want_count(tail)?)),
        "density" => Ok(RootStrategy::DensityClusters(want_count(tail)?)),
        "max-degree" => Ok(RootStrategy::MaxDegree(want_count(tail)?)),
        "explicit" => {
            let tail = tail.ok_or_else(|| err("wants node ids, e.g. explicit:7+21"))?;
            let nodes: Vec<NodeId> = tail
                .split('+')
                .map(|tok| {
                    tok.parse()
                        .map_err(|_| err(&format!("node id {tok:?} is not an integer")))
                })
                .collect::<Result<_>>()?;
            if nodes.is_empty() {
                return Err(err("wants at least one node id"));
            }
            Ok(RootStrategy::Explicit(nodes))
        }
        _ => Err(err(
            "unknown strategy (grid-center, grid-quadrants, min-ecc:K, density:K, \
             max-degree:K, explicit:a+b)",
        )),
    }
}

/// Parses a distance sweep: inclusive range `A..B` or comma list.
pub fn parse_distances(raw: &str) -> Result<Vec<u32>> {
    let err = |msg: &str| anyhow!("distances {raw:?}: {msg}");
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: u32 = lo.parse().map_err(|_| err("range start must be an integer"))?;
        let hi: u32 = hi.parse().map_err(|_| err("range end must be an integer"))?;
        if lo > hi {
            return Err(err("range start exceeds range end"));
        }
        return Ok((lo..=hi).collect());
    }
    let list: Vec<u32> = raw
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| err(&format!("{tok:?} is not an integer")))
        })
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(err("must not be empty"));
    }
    Ok(list)
}
