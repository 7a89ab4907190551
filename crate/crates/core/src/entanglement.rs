//! The entanglement link layer: probabilistic pair generation over physical
//! edges, lifetime-limited storage, and entanglement swapping.
//!
//! Links live in discrete time. A link created at step `t` with lifetime
//! `t_co` is usable during steps `t .. t + t_co - 1`; the end-of-step ageing
//! pass decrements every remaining lifetime and removes links that reach
//! zero. A physical edge can host at most one live direct link at a time;
//! links produced by swapping span multiple hops and occupy no edge.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{EdgeId, LinkId, NodeId};
use crate::topology::PhysicalTopology;

/// Errors from link-layer operations.
#[derive(Debug, Error, PartialEq)]
pub enum EntanglementError {
    /// The referenced link is not live.
    #[error("link {0} is not live")]
    UnknownLink(LinkId),
    /// A swap was requested at a node that one of the links does not touch.
    #[error("link {link} does not touch node {at}")]
    NotAtNode {
        /// The offending link.
        link: LinkId,
        /// The requested swap node.
        at: NodeId,
    },
    /// A swap was requested over a single link given twice.
    #[error("cannot swap link {0} with itself")]
    SameLink(LinkId),
    /// A swap's outer endpoints coincide, which would produce a degenerate
    /// self-entangled pair.
    #[error("swap outer endpoints coincide at node {0}")]
    DegenerateSwap(NodeId),
    /// Generation was attempted on an edge already holding a direct link.
    #[error("edge {0} already holds a live link")]
    EdgeOccupied(EdgeId),
    /// Probabilities and lifetimes must be within their ranges.
    #[error("parameter {name} = {value} is out of range ({expected})")]
    BadParam {
        /// Parameter name.
        name: &'static str,
        /// Rejected value.
        value: f64,
        /// Accepted range.
        expected: &'static str,
    },
}

/// Physical-layer model parameters shared by every scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Success probability of one generation attempt across one edge.
    pub p: f64,
    /// Success probability of one entanglement swap.
    pub q: f64,
    /// Link lifetime in whole steps; a fresh link survives `t_co - 1`
    /// end-of-step boundaries.
    pub t_co: u32,
}

impl SimParams {
    /// Validates and builds a parameter set.
    pub fn new(p: f64, q: f64, t_co: u32) -> Result<Self, EntanglementError> {
        for (name, value) in [("p", p), ("q", q)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EntanglementError::BadParam {
                    name,
                    value,
                    expected: "within [0, 1]",
                });
            }
        }
        if t_co == 0 {
            return Err(EntanglementError::BadParam {
                name: "t_co",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(Self { p, q, t_co })
    }
}

/// One live entangled pair between two nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntLink {
    /// Unique id, never reused within a run.
    pub id: LinkId,
    /// Lower endpoint.
    pub a: NodeId,
    /// Upper endpoint (`a < b` always).
    pub b: NodeId,
    /// Remaining lifetime in steps; live links always have `ttl >= 1`.
    pub ttl: u32,
    /// Number of physical edges this link spans (1 for direct links).
    pub hop_span: u32,
    /// The physical edge this link occupies; `None` for swapped links.
    pub edge: Option<EdgeId>,
}

impl EntLink {
    /// Whether the link has `v` as an endpoint.
    pub fn touches(&self, v: NodeId) -> bool {
        self.a == v || self.b == v
    }

    /// The endpoint that is not `v`. Panics if the link does not touch `v`.
    pub fn other(&self, v: NodeId) -> NodeId {
        debug_assert!(self.touches(v));
        if self.a == v {
            self.b
        } else {
            self.a
        }
    }
}

/// Result of a swap attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwapResult {
    /// The swap succeeded and produced this new link.
    Fused(EntLink),
    /// The swap failed; both inputs are gone.
    Lost,
}

/// All live entangled links plus the per-edge occupancy they imply.
#[derive(Debug, Clone)]
pub struct LinkLayerState {
    live: BTreeMap<LinkId, EntLink>,
    /// `occupancy[e]` is the direct link currently held on physical edge `e`.
    occupancy: Vec<Option<LinkId>>,
    next_id: u64,
}

impl LinkLayerState {
    /// An empty link layer for a topology with `edge_count` physical edges.
    pub fn new(edge_count: u32) -> Self {
        Self {
            live: BTreeMap::new(),
            occupancy: vec![None; edge_count as usize],
            next_id: 0,
        }
    }

    /// Number of live links.
    pub fn len(&self) -> usize {
        self.live.len()
    }

    /// Whether no links are live.
    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// A live link by id.
    pub fn get(&self, id: LinkId) -> Option<&EntLink> {
        self.live.get(&id)
    }

    /// All live links in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &EntLink> {
        self.live.values()
    }

    /// The direct link currently occupying a physical edge, if any.
    pub fn link_on_edge(&self, edge: EdgeId) -> Option<LinkId> {
        self.occupancy[edge.index()]
    }

    /// Fraction of physical edges holding a live direct link.
    pub fn occupied_fraction(&self) -> f64 {
        if self.occupancy.is_empty() {
            return 0.0;
        }
        let held = self.occupancy.iter().filter(|o| o.is_some()).count();
        held as f64 / self.occupancy.len() as f64
    }

    fn fresh_id(&mut self) -> LinkId {
        let id = LinkId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Runs one generation attempt on a single unoccupied physical edge; it
    /// succeeds with probability `params.p`, producing a fresh direct link.
    pub fn attempt_generation(
        &mut self,
        topo: &PhysicalTopology,
        edge: EdgeId,
        params: &SimParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<LinkId>, EntanglementError> {
        if self.occupancy[edge.index()].is_some() {
            return Err(EntanglementError::EdgeOccupied(edge));
        }
        if !rng.random_bool(params.p) {
            return Ok(None);
        }
        let (a, b) = topo.edge_endpoints(edge);
        let id = self.fresh_id();
        self.live.insert(
            id,
            EntLink {
                id,
                a,
                b,
                ttl: params.t_co,
                hop_span: 1,
                edge: Some(edge),
            },
        );
        self.occupancy[edge.index()] = Some(id);
        Ok(Some(id))
    }

    /// Runs one generation attempt on every unoccupied physical edge, in
    /// ascending edge order. Returns ids of the links created.
    pub fn generate_all(
        &mut self,
        topo: &PhysicalTopology,
        params: &SimParams,
        rng: &mut ChaCha8Rng,
    ) -> Vec<LinkId> {
        let mut created = Vec::new();
        for idx in 0..topo.edge_count() {
            let edge = EdgeId(idx);
            if self.occupancy[edge.index()].is_some() {
                continue;
            }
            let outcome = self
                .attempt_generation(topo, edge, params, rng)
                .expect("edge checked unoccupied");
            created.extend(outcome);
        }
        created
    }

    /// End-of-step ageing: decrements every live link's lifetime and removes
    /// those that reach zero. Returns the ids of expired links.
    pub fn age_all(&mut self) -> Vec<LinkId> {
        let expired: Vec<LinkId> = self
            .live
            .values()
            .filter(|l| l.ttl == 1)
            .map(|l| l.id)
            .collect();
        for &id in &expired {
            self.remove(id);
        }
        for link in self.live.values_mut() {
            link.ttl -= 1;
        }
        expired
    }

    /// Removes a live link, releasing its edge if it held one. Returns the
    /// removed link.
    pub fn remove(&mut self, id: LinkId) -> Option<EntLink> {
        let link = self.live.remove(&id)?;
        if let Some(edge) = link.edge {
            debug_assert_eq!(self.occupancy[edge.index()], Some(id));
            self.occupancy[edge.index()] = None;
        }
        Some(link)
    }

    /// Attempts an entanglement swap at node `at`, consuming `first` and
    /// `second`. Both inputs are removed regardless of the outcome; with
    /// probability `params.q` the swap yields a merged link joining the two
    /// outer endpoints, whose lifetime is the smaller of the inputs' and
    /// whose hop span is the sum of theirs.
    pub fn swap(
        &mut self,
        at: NodeId,
        first: LinkId,
        second: LinkId,
        params: &SimParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<SwapResult, EntanglementError> {
        if first == second {
            return Err(EntanglementError::SameLink(first));
        }
        let f = self
            .get(first)
            .ok_or(EntanglementError::UnknownLink(first))?;
        let s = self
            .get(second)
            .ok_or(EntanglementError::UnknownLink(second))?;
        for l in [f, s] {
            if !l.touches(at) {
                return Err(EntanglementError::NotAtNode { link: l.id, at });
            }
        }
        let (outer_f, outer_s) = (f.other(at), s.other(at));
        if outer_f == outer_s {
            return Err(EntanglementError::DegenerateSwap(outer_f));
        }
        let (ttl, span) = (f.ttl.min(s.ttl), f.hop_span + s.hop_span);
        self.remove(first);
        self.remove(second);
        if rng.random_bool(params.q) {
            let id = self.fresh_id();
            let link = EntLink {
                id,
                a: outer_f.min(outer_s),
                b: outer_f.max(outer_s),
                ttl,
                hop_span: span,
                edge: None,
            };
            self.live.insert(id, link.clone());
            Ok(SwapResult::Fused(link))
        } else {
            Ok(SwapResult::Lost)
        }
    }

    /// Live **direct** links grouped by the unordered node pair they join.
    /// Swapped links are excluded: tree maintenance only reasons over
    /// single-edge links.
    pub fn direct_adjacency(&self) -> BTreeMap<(NodeId, NodeId), Vec<LinkId>> {
        let mut map: BTreeMap<(NodeId, NodeId), Vec<LinkId>> = BTreeMap::new();
        for link in self.live.values() {
            if link.edge.is_some() {
                map.entry((link.a, link.b)).or_default().push(link.id);
            }
        }
        map
    }

    /// Internal-consistency check; returns human-readable violations.
    /// An empty result means the state is sound.
    pub fn audit(&self, topo: &PhysicalTopology) -> Vec<String> {
        let mut problems = Vec::new();
        for link in self.live.values() {
            if link.a >= link.b {
                problems.push(format!("link {}: endpoints not normalized", link.id));
            }
            if link.ttl == 0 {
                problems.push(format!("link {}: live with zero ttl", link.id));
            }
            if link.hop_span == 0 {
                problems.push(format!("link {}: zero hop span", link.id));
            }
            match link.edge {
                Some(edge) => {
                    if link.hop_span != 1 {
                        problems.push(format!(
                            "link {}: occupies an edge but spans {} hops",
                            link.id, link.hop_span
                        ));
                    }
                    if topo.edge_endpoints(edge) != (link.a, link.b) {
                        problems.push(format!(
                            "link {}: endpoints disagree with edge {edge}",
                            link.id
                        ));
                    }
                    if self.occupancy[edge.index()] != Some(link.id) {
                        problems.push(format!(
                            "link {}: edge {edge} occupancy does not point back",
                            link.id
                        ));
                    }
                }
                None => {
                    if link.hop_span < 2 {
                        problems.push(format!(
                            "link {}: edgeless link with hop span {}",
                            link.id, link.hop_span
                        ));
                    }
                }
            }
        }
        for (idx, held) in self.occupancy.iter().enumerate() {
            if let Some(id) = held {
                match self.live.get(id) {
                    None => problems.push(format!("edge e{idx}: occupied by dead link {id}")),
                    Some(l) if l.edge != Some(EdgeId(idx as u32)) => {
                        problems.push(format!("edge e{idx}: held link {id} points elsewhere"))
                    }
                    _ => {}
                }
            }
        }
        problems
    }
}
