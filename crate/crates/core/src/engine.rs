//! The discrete-time driver: advances worlds step by step, generates the
//! request workload, and accumulates per-distance rate statistics.
//!
//! Each unit of time runs three phases in fixed order: link generation on
//! every idle edge, tree maintenance plus cross-tree negotiation, and
//! ageing with repairs for expired tree links. Serving a request consumes
//! exactly the links on the executed path; everything else is conserved.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dodag::ControlMessage;
use crate::entanglement::{EntanglementError, LinkLayerState, SimParams};
use crate::forest::{ForestError, ForestState, NegotiationEvent};
use crate::rng::{stream, StreamKind};
use crate::routing::{
    execute_swaps, find_path_multi, find_path_single, sync_round, SwapOutcome,
};
use crate::topology::{DistanceTable, PhysicalTopology, TopologyError};
use crate::types::{LinkId, NodeId, TreeId};

/// Errors from engine-level operations.
#[derive(Debug, Error)]
pub enum EngineError {
    /// A scheme was built with the wrong number of roots.
    #[error("scheme {kind} requires {expected} roots, got {got}")]
    BadRootCount {
        /// The scheme being built.
        kind: SchemeKind,
        /// How many roots it accepts.
        expected: &'static str,
        /// How many were supplied.
        got: usize,
    },
    /// Persistent worlds only exist for the asynchronous schemes.
    #[error("the synchronous scheme runs per-slot rounds, not a persistent world")]
    SynchronousWorld,
    /// A request named the same node twice.
    #[error("request endpoints coincide at node {0}")]
    SameEndpoints(NodeId),
    /// No node pair exists at the requested distance.
    #[error("no node pair at distance {0}")]
    NoPairAtDistance(u32),
    /// The workload description is unusable.
    #[error("invalid workload: {0}")]
    BadWorkload(String),
    /// The parallel runner could not build its thread pool.
    #[error("thread pool: {0}")]
    ThreadPool(String),
    /// A topology query failed.
    #[error(transparent)]
    Topology(#[from] TopologyError),
    /// A link-layer operation failed.
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
    /// A forest operation failed.
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// The three request-serving schemes under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeKind {
    /// Several cooperating trees; routes cross tree boundaries.
    MultiTree,
    /// One tree; routes climb parent chains toward the root.
    SingleTree,
    /// The memoryless two-phase per-slot baseline.
    Synchronous,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::MultiTree => "multi-tree",
            SchemeKind::SingleTree => "single-tree",
            SchemeKind::Synchronous => "synchronous",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi-tree" | "multi_tree" | "multi" => Ok(SchemeKind::MultiTree),
            "single-tree" | "single_tree" | "single" => Ok(SchemeKind::SingleTree),
            "synchronous" | "sync" | "syn" => Ok(SchemeKind::Synchronous),
            other => Err(format!(
                "unknown scheme {other:?} (expected multi-tree, single-tree or synchronous)"
            )),
        }
    }
}

/// A scheme plus the tree roots it runs with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    /// Which routing discipline.
    pub kind: SchemeKind,
    /// Root nodes, one tree each; empty for the synchronous baseline.
    pub roots: Vec<NodeId>,
}

impl Scheme {
    /// Validates the kind/root pairing: multi-tree wants two or more roots,
    /// single-tree exactly one, synchronous none.
    pub fn new(kind: SchemeKind, roots: Vec<NodeId>) -> Result<Self, EngineError> {
        let expected = match kind {
            SchemeKind::MultiTree => "two or more",
            SchemeKind::SingleTree => "exactly one",
            SchemeKind::Synchronous => "no",
        };
        let ok = match kind {
            SchemeKind::MultiTree => roots.len() >= 2,
            SchemeKind::SingleTree => roots.len() == 1,
            SchemeKind::Synchronous => roots.is_empty(),
        };
        if !ok {
            return Err(EngineError::BadRootCount {
                kind,
                expected,
                got: roots.len(),
            });
        }
        Ok(Self { kind, roots })
    }
}

/// One measured point: the entanglement rate of a scheme at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    /// The scheme measured.
    pub scheme: SchemeKind,
    /// Display name of the topology.
    pub topology: String,
    /// Requested graph distance between endpoints.
    pub distance: u32,
    /// Number of attempts made.
    pub attempts: u64,
    /// Number of attempts that delivered end-to-end entanglement.
    pub successes: u64,
    /// `successes / attempts`.
    pub rate: f64,
    /// Master seed of the run.
    pub seed: u64,
}

/// What to measure: the distance sweep and per-point effort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    /// Hop distances to sweep, in output order.
    pub distances: Vec<u32>,
    /// Request attempts measured per distance.
    pub attempts_per_point: u64,
    /// Steps of regeneration before each asynchronous attempt.
    pub warmup_steps: u32,
}

impl WorkloadSpec {
    /// Validates the sweep: at least one distance, all of them nonzero, and
    /// at least one attempt per point.
    pub fn new(
        distances: Vec<u32>,
        attempts_per_point: u64,
        warmup_steps: u32,
    ) -> Result<Self, EngineError> {
        if distances.is_empty() {
            return Err(EngineError::BadWorkload("no distances given".into()));
        }
        if distances.contains(&0) {
            return Err(EngineError::BadWorkload(
                "distances must be at least 1".into(),
            ));
        }
        if attempts_per_point == 0 {
            return Err(EngineError::BadWorkload(
                "attempts_per_point must be at least 1".into(),
            ));
        }
        Ok(Self {
            distances,
            attempts_per_point,
            warmup_steps,
        })
    }
}

/// Behavioral toggles, all off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Limit tree joins to one hop per maintenance round instead of running
    /// the handshake cascade to fixpoint.
    pub slow_control: bool,
    /// Disable lowest-common-ancestor truncation in single-tree routing:
    /// only endpoint pairs whose chains meet exactly at the root route.
    pub via_root_strict: bool,
    /// Retain control messages and negotiation events in step reports.
    pub collect_events: bool,
}

/// What one unit of time did.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Links created in the generation phase.
    pub generated: Vec<LinkId>,
    /// Links that decohered at the end of the step.
    pub expired: Vec<LinkId>,
    /// Fraction of physical edges holding a direct link right after the
    /// generation phase.
    pub occupied_after_generation: f64,
    /// Maintenance handshake traffic (only with
    /// [`EngineOptions::collect_events`]).
    pub messages: Vec<ControlMessage>,
    /// Cross-tree negotiations processed (only with
    /// [`EngineOptions::collect_events`]).
    pub negotiations: Vec<NegotiationEvent>,
}

/// How one served request ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeOutcome {
    /// An end-to-end link was delivered.
    Delivered,
    /// No tree path joined the endpoints.
    NoPath,
    /// A swap failed along the path.
    SwapFailed,
    /// A path link died between search and execution.
    Stale,
}

impl ServeOutcome {
    /// Whether the request was satisfied.
    pub fn succeeded(self) -> bool {
        matches!(self, ServeOutcome::Delivered)
    }
}

/// A persistent asynchronous simulation: one topology, one link layer, one
/// routing forest, and the scheme that serves requests over them.
#[derive(Debug)]
pub struct World<'a> {
    topo: &'a PhysicalTopology,
    params: SimParams,
    kind: SchemeKind,
    options: EngineOptions,
    forest: ForestState,
    links: LinkLayerState,
    gen_rng: ChaCha8Rng,
    swap_rng: ChaCha8Rng,
    steps: u64,
}

impl<'a> World<'a> {
    /// Builds a world for an asynchronous scheme. The two generators drive
    /// link generation and swap outcomes independently.
    pub fn new(
        topo: &'a PhysicalTopology,
        scheme: &Scheme,
        params: SimParams,
        options: EngineOptions,
        gen_rng: ChaCha8Rng,
        swap_rng: ChaCha8Rng,
    ) -> Result<Self, EngineError> {
        if scheme.kind == SchemeKind::Synchronous {
            return Err(EngineError::SynchronousWorld);
        }
        Ok(Self {
            topo,
            params,
            kind: scheme.kind,
            options,
            forest: ForestState::new(&scheme.roots)?,
            links: LinkLayerState::new(topo.edge_count()),
            gen_rng,
            swap_rng,
            steps: 0,
        })
    }

    /// The topology the world runs over.
    pub fn topo(&self) -> &PhysicalTopology {
        self.topo
    }

    /// The live link layer.
    pub fn links(&self) -> &LinkLayerState {
        self.links_ref()
    }

    fn links_ref(&self) -> &LinkLayerState {
        &self.links
    }

    /// The routing forest.
    pub fn forest(&self) -> &ForestState {
        &self.forest
    }

    /// Units of time elapsed.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Advances one unit of time: generation, maintenance plus negotiation,
    /// then ageing with tree repairs for whatever expired.
    pub fn step(&mut self) -> StepReport {
        let generated = self
            .links
            .generate_all(self.topo, &self.params, &mut self.gen_rng);
        let occupied_after_generation = self.links.occupied_fraction();
        let messages = self
            .forest
            .maintenance_round(&self.links, self.options.slow_control);
        let negotiations = self.forest.negotiation_round(&self.links);
        let expired = self.links.age_all();
        self.forest.handle_lost_links(&expired);
        self.steps += 1;
        StepReport {
            generated,
            expired,
            occupied_after_generation,
            messages: if self.options.collect_events {
                messages
            } else {
                Vec::new()
            },
            negotiations: if self.options.collect_events {
                negotiations
            } else {
                Vec::new()
            },
        }
    }

    /// Serves one end-to-end entanglement request. Consumes exactly the
    /// links on the executed path (and the delivered link itself), with
    /// tree repairs for each.
    pub fn serve_request(&mut self, s: NodeId, t: NodeId) -> Result<ServeOutcome, EngineError> {
        if s == t {
            return Err(EngineError::SameEndpoints(s));
        }
        let path = match self.kind {
            SchemeKind::SingleTree => find_path_single(
                self.forest.tree(TreeId(0)),
                &self.links,
                s,
                t,
                self.options.via_root_strict,
            ),
            SchemeKind::MultiTree => find_path_multi(&self.forest, &self.links, s, t),
            SchemeKind::Synchronous => unreachable!("constructor rejects synchronous worlds"),
        };
        let Some(path) = path else {
            return Ok(ServeOutcome::NoPath);
        };
        let report = execute_swaps(&mut self.links, &path, &self.params, &mut self.swap_rng)?;
        let mut lost = report.consumed.clone();
        if let Some(delivered) = report.delivered {
            // The delivered pair is handed to the application and measured;
            // it leaves the network either way.
            self.links.remove(delivered);
            lost.push(delivered);
        }
        self.forest.handle_lost_links(&lost);
        Ok(match report.outcome {
            SwapOutcome::Delivered => ServeOutcome::Delivered,
            SwapOutcome::SwapFailed { .. } => ServeOutcome::SwapFailed,
            SwapOutcome::Stale { .. } => ServeOutcome::Stale,
        })
    }

    /// Cross-layer consistency check; an empty result means the world is
    /// sound.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = self.links.audit(self.topo);
        problems.extend(self.forest.audit(&self.links));
        problems
    }
}

/// Uniform sampling of node pairs at an exact graph distance.
#[derive(Debug, Clone)]
pub struct PairSampler {
    sources: Vec<NodeId>,
    partners: Vec<Vec<NodeId>>,
}

impl PairSampler {
    /// Prepares a sampler for one distance, or `None` when no pair of
    /// nodes sits at exactly that distance.
    pub fn new(table: &DistanceTable, distance: u32) -> Option<Self> {
        let n = table.node_count();
        let mut sources = Vec::new();
        let mut partners = vec![Vec::new(); n as usize];
        for s in 0..n {
            let list: Vec<NodeId> = (0..n)
                .filter(|&t| table.get(s, t) == Some(distance))
                .collect();
            if !list.is_empty() {
                sources.push(s);
                partners[s as usize] = list;
            }
        }
        (!sources.is_empty()).then_some(Self { sources, partners })
    }

    /// Draws a pair: the source uniform over eligible nodes, the partner
    /// uniform over that source's partners.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (NodeId, NodeId) {
        let s = self.sources[rng.random_range(0..self.sources.len())];
        let list = &self.partners[s as usize];
        (s, list[rng.random_range(0..list.len())])
    }
}

/// Draws one node pair at an exact graph distance.
pub fn sample_pair(
    table: &DistanceTable,
    distance: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(NodeId, NodeId), EngineError> {
    PairSampler::new(table, distance)
        .map(|sampler| sampler.sample(rng))
        .ok_or(EngineError::NoPairAtDistance(distance))
}

/// Runs one (scheme, distance) measurement cell. Returns `None` when the
/// topology offers no pair at the distance (the point is skipped).
#[allow(clippy::too_many_arguments)]
fn run_cell(
    topo: &PhysicalTopology,
    table: &DistanceTable,
    scheme: &Scheme,
    params: SimParams,
    workload: &WorkloadSpec,
    options: EngineOptions,
    seed: u64,
    distance: u32,
) -> Result<Option<RateRecord>, EngineError> {
    let Some(sampler) = PairSampler::new(table, distance) else {
        return Ok(None);
    };
    let mut workload_rng = stream(seed, StreamKind::Workload, Some(scheme.kind), distance);
    let attempts = workload.attempts_per_point;
    let mut successes = 0;
    match scheme.kind {
        SchemeKind::Synchronous => {
            let mut round_rng = stream(seed, StreamKind::Generation, Some(scheme.kind), distance);
            for _ in 0..attempts {
                let (s, t) = sampler.sample(&mut workload_rng);
                if sync_round(topo, &params, s, t, &mut round_rng) {
                    successes += 1;
                }
            }
        }
        _ => {
            let mut world = World::new(
                topo,
                scheme,
                params,
                options,
                stream(seed, StreamKind::Generation, Some(scheme.kind), distance),
                stream(seed, StreamKind::Swaps, Some(scheme.kind), distance),
            )?;
            for _ in 0..attempts {
                for _ in 0..workload.warmup_steps {
                    world.step();
                }
                let (s, t) = sampler.sample(&mut workload_rng);
                if world.serve_request(s, t)?.succeeded() {
                    successes += 1;
                }
            }
        }
    }
    Ok(Some(RateRecord {
        scheme: scheme.kind,
        topology: topo.name().to_owned(),
        distance,
        attempts,
        successes,
        rate: successes as f64 / attempts as f64,
        seed,
    }))
}

/// Measures one scheme across the workload's distance sweep. Fully
/// deterministic for a given seed; distances with no eligible pair are
/// skipped.
pub fn run_experiment(
    topo: &PhysicalTopology,
    scheme: &Scheme,
    params: SimParams,
    workload: &WorkloadSpec,
    options: EngineOptions,
    seed: u64,
) -> Result<Vec<RateRecord>, EngineError> {
    let table = DistanceTable::new(topo);
    let mut records = Vec::new();
    for &distance in &workload.distances {
        if let Some(record) = run_cell(
            topo, &table, scheme, params, workload, options, seed, distance,
        )? {
            records.push(record);
        }
    }
    Ok(records)
}

/// Measures several schemes, farming independent (scheme, distance) cells
/// out to a thread pool. `threads = 0` uses every core. Output is ordered
/// by scheme then by the workload's distance order and is bit-identical to
/// a sequential run: every cell draws from its own random streams.
pub fn run_cells_parallel(
    topo: &PhysicalTopology,
    schemes: &[Scheme],
    params: SimParams,
    workload: &WorkloadSpec,
    options: EngineOptions,
    seed: u64,
    threads: usize,
) -> Result<Vec<RateRecord>, EngineError> {
    let table = DistanceTable::new(topo);
    let cells: Vec<(usize, usize)> = (0..schemes.len())
        .flat_map(|si| (0..workload.distances.len()).map(move |di| (si, di)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let mut results: Vec<((usize, usize), Option<RateRecord>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(si, di)| {
                run_cell(
                    topo,
                    &table,
                    &schemes[si],
                    params,
                    workload,
                    options,
                    seed,
                    workload.distances[di],
                )
                .map(|record| ((si, di), record))
            })
            .collect::<Result<Vec<_>, EngineError>>()
    })?;
    results.sort_by_key(|&(key, _)| key);
    Ok(results.into_iter().filter_map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dodag::Membership;
    use crate::topology::RootStrategy;

    fn world_for<'a>(
        topo: &'a PhysicalTopology,
        scheme: &Scheme,
        params: SimParams,
        seed: u64,
    ) -> World<'a> {
        World::new(
            topo,
            scheme,
            params,
            EngineOptions::default(),
            stream(seed, StreamKind::Generation, Some(scheme.kind), 0),
            stream(seed, StreamKind::Swaps, Some(scheme.kind), 0),
        )
        .unwrap()
    }

    #[test]
    fn scheme_root_counts_are_validated() {
        assert!(Scheme::new(SchemeKind::MultiTree, vec![1, 2]).is_ok());
        assert!(Scheme::new(SchemeKind::MultiTree, vec![1]).is_err());
        assert!(Scheme::new(SchemeKind::SingleTree, vec![4]).is_ok());
        assert!(Scheme::new(SchemeKind::SingleTree, vec![]).is_err());
        assert!(Scheme::new(SchemeKind::Synchronous, vec![]).is_ok());
        assert!(Scheme::new(SchemeKind::Synchronous, vec![1]).is_err());
        assert!(matches!(
            World::new(
                &PhysicalTopology::gen_grid(2, 2).unwrap(),
                &Scheme::new(SchemeKind::Synchronous, vec![]).unwrap(),
                SimParams::new(0.5, 0.5, 2).unwrap(),
                EngineOptions::default(),
                stream(0, StreamKind::Generation, None, 0),
                stream(0, StreamKind::Swaps, None, 0),
            ),
            Err(EngineError::SynchronousWorld)
        ));
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in [
            SchemeKind::MultiTree,
            SchemeKind::SingleTree,
            SchemeKind::Synchronous,
        ] {
            assert_eq!(kind.to_string().parse::<SchemeKind>(), Ok(kind));
        }
        assert!("spanning-tree".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn zero_generation_probability_keeps_the_world_empty() {
        let topo = PhysicalTopology::gen_grid(3, 3).unwrap();
        let scheme = Scheme::new(SchemeKind::SingleTree, vec![4]).unwrap();
        let params = SimParams::new(0.0, 1.0, 2).unwrap();
        let mut world = world_for(&topo, &scheme, params, 3);
        for _ in 0..20 {
            world.step();
        }
        assert!(world.links().is_empty());
        assert_eq!(world.forest().tree(TreeId(0)).attached_count(), 1);
        assert_eq!(world.serve_request(0, 8).unwrap(), ServeOutcome::NoPath);
        assert!(world.audit().is_empty());
    }

    #[test]
    fn perfect_generation_spans_the_grid_in_one_step() {
        let topo = PhysicalTopology::gen_grid(10, 10).unwrap();
        let scheme = Scheme::new(SchemeKind::SingleTree, vec![0]).unwrap();
        let params = SimParams::new(1.0, 1.0, 1_000_000).unwrap();
        let mut world = world_for(&topo, &scheme, params, 3);
        world.step();
        assert_eq!(world.forest().tree(TreeId(0)).attached_count(), 100);
        // Fixpoint joins follow breadth-first layers, so ranks equal graph
        // distance from the root.
        let dist = topo.bfs_distances(0);
        for v in 0..100 {
            assert_eq!(
                world.forest().tree(TreeId(0)).attached_rank(v),
                dist[v as usize]
            );
        }
        assert!(world.audit().is_empty());
    }

    #[test]
    fn steady_state_edge_occupancy_matches_the_renewal_oracle() {
        // Each edge cycles: a successful generation blocks it for t_co = 2
        // steps, a failure frees it immediately, giving stationary
        // mid-step occupancy 2p/(1+p) — about 0.889 at p = 0.8.
        let topo = PhysicalTopology::gen_grid(1, 50).unwrap();
        let scheme = Scheme::new(SchemeKind::SingleTree, vec![25]).unwrap();
        let params = SimParams::new(0.8, 0.8, 2).unwrap();
        let mut world = world_for(&topo, &scheme, params, 11);
        let steps = 10_000;
        let mut acc = 0.0;
        for _ in 0..steps {
            acc += world.step().occupied_after_generation;
        }
        let mean = acc / steps as f64;
        assert!((0.87..=0.91).contains(&mean), "occupancy {mean}");
        // Also inside the broader qualification band used for sign-off.
        assert!((0.79..=0.97).contains(&mean));
    }

    #[test]
    fn pair_sampling_respects_exact_distance() {
        let topo = PhysicalTopology::gen_grid(10, 10).unwrap();
        let table = DistanceTable::new(&topo);
        let mut rng = stream(5, StreamKind::Workload, None, 18);
        for _ in 0..50 {
            let (s, t) = sample_pair(&table, 18, &mut rng).unwrap();
            // Only opposite corners sit 18 hops apart on a 10x10 grid.
            assert!(matches!((s, t), (0, 99) | (99, 0) | (9, 90) | (90, 9)));
        }
        assert!(matches!(
            sample_pair(&table, 19, &mut rng),
            Err(EngineError::NoPairAtDistance(19))
        ));
    }

    #[test]
    fn experiments_are_deterministic_and_parallel_safe() {
        let topo = PhysicalTopology::gen_grid(4, 4).unwrap();
        let schemes = vec![
            Scheme::new(SchemeKind::MultiTree, vec![0, 15]).unwrap(),
            Scheme::new(SchemeKind::SingleTree, vec![5]).unwrap(),
            Scheme::new(SchemeKind::Synchronous, vec![]).unwrap(),
        ];
        let params = SimParams::new(0.8, 0.8, 2).unwrap();
        let workload = WorkloadSpec::new(vec![2, 3, 4], 150, 3).unwrap();
        let options = EngineOptions::default();

        let mut sequential = Vec::new();
        for scheme in &schemes {
            sequential
                .extend(run_experiment(&topo, scheme, params, &workload, options, 42).unwrap());
        }
        let parallel =
            run_cells_parallel(&topo, &schemes, params, &workload, options, 42, 4).unwrap();
        let single_thread =
            run_cells_parallel(&topo, &schemes, params, &workload, options, 42, 1).unwrap();
        assert_eq!(sequential, parallel);
        assert_eq!(parallel, single_thread);
        let rerun =
            run_cells_parallel(&topo, &schemes, params, &workload, options, 42, 4).unwrap();
        assert_eq!(parallel, rerun);
        assert_eq!(parallel.len(), 9);
        for record in &parallel {
            assert!(record.rate >= 0.0 && record.rate <= 1.0);
            assert!(record.successes <= record.attempts);
        }
    }

    #[test]
    fn ideal_parameters_deliver_every_request() {
        let topo = PhysicalTopology::gen_grid(1, 6).unwrap();
        let scheme = Scheme::new(SchemeKind::SingleTree, vec![2]).unwrap();
        let params = SimParams::new(1.0, 1.0, 1_000_000).unwrap();
        let workload = WorkloadSpec::new(vec![2, 3], 100, 2).unwrap();
        let records =
            run_experiment(&topo, &scheme, params, &workload, EngineOptions::default(), 7)
                .unwrap();
        assert_eq!(records.len(), 2);
        for record in records {
            assert_eq!(record.rate, 1.0, "distance {}", record.distance);
        }
    }

    #[test]
    fn serving_repairs_the_trees_it_consumes() {
        let topo = PhysicalTopology::gen_grid(1, 5).unwrap();
        let scheme = Scheme::new(SchemeKind::SingleTree, vec![0]).unwrap();
        let params = SimParams::new(1.0, 1.0, 1_000_000).unwrap();
        let mut world = world_for(&topo, &scheme, params, 9);
        world.step();
        assert_eq!(world.serve_request(1, 4).unwrap(), ServeOutcome::Delivered);
        // The request consumed the tree links below node 1, so nodes 2..=4
        // fall out of the tree; node 1's own attachment link was not on the
        // path and it stays a member. The audit must pass throughout and
        // the next step must re-attach everyone.
        assert!(world.audit().is_empty(), "{:?}", world.audit());
        assert_eq!(
            world.forest().tree(TreeId(0)).membership(1),
            Membership::Member
        );
        for v in 2..=4 {
            assert_ne!(
                world.forest().tree(TreeId(0)).membership(v),
                Membership::Member
            );
        }
        world.step();
        assert_eq!(world.forest().tree(TreeId(0)).attached_count(), 5);
        assert!(world.audit().is_empty());
        assert!(matches!(
            world.serve_request(3, 3),
            Err(EngineError::SameEndpoints(3))
        ));
    }

    #[test]
    fn skipped_distances_are_excluded_from_output() {
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let scheme = Scheme::new(SchemeKind::Synchronous, vec![]).unwrap();
        let params = SimParams::new(0.9, 0.9, 2).unwrap();
        // Distance 9 exceeds the diameter (3): silently skipped.
        let workload = WorkloadSpec::new(vec![2, 9], 50, 1).unwrap();
        let records =
            run_experiment(&topo, &scheme, params, &workload, EngineOptions::default(), 1)
                .unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].distance, 2);
    }

    #[test]
    fn workload_validation() {
        assert!(WorkloadSpec::new(vec![], 10, 1).is_err());
        assert!(WorkloadSpec::new(vec![0], 10, 1).is_err());
        assert!(WorkloadSpec::new(vec![1], 0, 1).is_err());
        assert!(WorkloadSpec::new(vec![1], 1, 0).is_ok());
    }

    #[test]
    fn root_strategy_feeds_scheme_construction() {
        let topo = PhysicalTopology::gen_grid(10, 10).unwrap();
        let roots = topo.select_roots(&RootStrategy::GridQuadrants).unwrap();
        let scheme = Scheme::new(SchemeKind::MultiTree, roots).unwrap();
        assert_eq!(scheme.roots, vec![22, 27, 72, 77]);
    }
}
