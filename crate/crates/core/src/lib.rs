//! Discrete-time simulation of entanglement distribution in quantum repeater
//! networks.
//!
//! The crate models a network of repeater nodes joined by physical edges.
//! Each unit of time, every idle edge attempts to generate a direct
//! entanglement link; links survive for a bounded number of steps before
//! decohering. Nodes organise the surviving links into one or more
//! destination-oriented trees, repair those trees as links decay, and answer
//! end-to-end entanglement requests by swapping chains of links together.
//!
//! Three request-serving schemes are provided:
//!
//! * **multi-tree** — several trees rooted across the network cooperate; a
//!   request is routed either through a shared ancestor or across tree
//!   junction nodes.
//! * **single-tree** — one tree serves all requests; the path climbs parent
//!   chains and is truncated at the lowest common ancestor.
//! * **synchronous** — a memoryless per-slot baseline: fresh links are
//!   generated each slot, greedily swapped toward the endpoints, and
//!   discarded at the end of the slot.
//!
//! The [`engine`] module ties the layers together and measures the
//! end-to-end entanglement rate as a function of hop distance.
//!
//! ```
//! use entroute_core::prelude::*;
//!
//! let topo = PhysicalTopology::gen_grid(4, 4).unwrap();
//! let roots = topo.select_roots(&RootStrategy::GridCenter).unwrap();
//! let scheme = Scheme::new(SchemeKind::SingleTree, roots).unwrap();
//! let params = SimParams::new(0.8, 0.8, 2).unwrap();
//! let workload = WorkloadSpec::new(vec![2, 3], 200, 5).unwrap();
//! let records = run_experiment(
//!     &topo, &scheme, params, &workload, EngineOptions::default(), 42,
//! ).unwrap();
//! assert_eq!(records.len(), 2);
//! ```

#![warn(missing_docs)]
#![warn(missing_debug_implementations)]

pub mod dodag;
pub mod engine;
pub mod entanglement;
pub mod forest;
pub mod rng;
pub mod routing;
pub mod topology;
mod types;

pub use types::{EdgeId, LinkId, NodeId, TreeId};

/// Convenient re-exports of the types most callers need.
pub mod prelude {
    pub use crate::dodag::{ControlMessage, Membership, MessageKind, Tree};
    pub use crate::engine::{
        run_cells_parallel, run_experiment, EngineError, EngineOptions, PairSampler, RateRecord,
        Scheme, SchemeKind, ServeOutcome, WorkloadSpec, World,
    };
    pub use crate::entanglement::{EntLink, EntanglementError, LinkLayerState, SimParams};
    pub use crate::forest::{ForestState, NegotiationOutcome};
    pub use crate::routing::{find_path_multi, find_path_single, sync_round, ForestPath};
    pub use crate::topology::{
        DistanceTable, PhysicalTopology, RootStrategy, TopologyError,
    };
    pub use crate::types::{EdgeId, LinkId, NodeId, TreeId};
}

pub use prelude::*;
