//! A single routing tree over the instant topology: rank bookkeeping, join
//! handshakes, and repair when tree links decohere or are consumed.
//!
//! Nodes hold at most one parent per tree. When a node's parent link dies,
//! the node and its whole subtree stay structurally intact but are marked
//! detached: excluded from routing until some branch node re-joins, at which
//! point the branch is re-ranked outward from the re-attachment node.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::types::{LinkId, NodeId, TreeId};

/// Errors from tree-state operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DodagError {
    /// The tree already has a root.
    #[error("tree {tree} already rooted at node {existing}")]
    RootExists {
        /// The tree in question.
        tree: TreeId,
        /// Its current root.
        existing: NodeId,
    },
    /// The node already holds state in this tree.
    #[error("node {node} is already present in tree {tree}")]
    AlreadyPresent {
        /// The offending node.
        node: NodeId,
        /// The tree in question.
        tree: TreeId,
    },
    /// The operation requires an attached (root or member) node.
    #[error("node {node} is not attached in tree {tree}")]
    NotAttached {
        /// The offending node.
        node: NodeId,
        /// The tree in question.
        tree: TreeId,
    },
    /// The operation requires a detached node.
    #[error("node {node} is not detached in tree {tree}")]
    NotDetached {
        /// The offending node.
        node: NodeId,
        /// The tree in question.
        tree: TreeId,
    },
    /// The link is not a parent edge anywhere in this tree.
    #[error("link {link} is not a tree edge of tree {tree}")]
    UnknownLink {
        /// The link that was reported lost.
        link: LinkId,
        /// The tree in question.
        tree: TreeId,
    },
}

/// A node's standing within one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// No state in the tree.
    Out,
    /// The tree's root (rank 0).
    Root,
    /// Attached: connected to the root through parent links.
    Member,
    /// Formerly attached; structure retained but excluded from routing
    /// until the branch re-joins.
    Detached,
}

impl Membership {
    /// Whether the node participates in routing (root or member).
    pub fn is_attached(self) -> bool {
        matches!(self, Membership::Root | Membership::Member)
    }
}

/// Per-(node, tree) routing state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTreeState {
    /// Standing within the tree.
    pub membership: Membership,
    /// Hops from the root along the tree (root = 0). Retained while
    /// detached, though stale until re-ranked.
    pub rank: u32,
    /// Parent edges `(parent node, entanglement link)`. Well-formed states
    /// hold at most one entry; the audit tolerates more so violations are
    /// representable.
    pub parents: Vec<(NodeId, LinkId)>,
    /// Child edges `(child node, entanglement link)`.
    pub children: BTreeSet<(NodeId, LinkId)>,
}

impl NodeTreeState {
    fn new(membership: Membership, rank: u32) -> Self {
        Self {
            membership,
            rank,
            parents: Vec::new(),
            children: BTreeSet::new(),
        }
    }

    /// The single parent edge, if the state is well-formed and has one.
    pub fn parent(&self) -> Option<(NodeId, LinkId)> {
        self.parents.first().copied()
    }
}

/// The three classical handshake message kinds used by tree maintenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Solicitation: an unattached node asks a neighbor for tree info.
    Dis,
    /// Information object: an attached node advertises its rank.
    Dio,
    /// Destination advertisement: the joiner commits to a parent.
    Dao,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Dis => "DIS",
            MessageKind::Dio => "DIO",
            MessageKind::Dao => "DAO",
        })
    }
}

/// One classical control message between physically adjacent nodes sharing
/// a live entanglement link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlMessage {
    /// Message kind.
    pub kind: MessageKind,
    /// Sender.
    pub from: NodeId,
    /// Receiver.
    pub to: NodeId,
    /// The tree the exchange concerns.
    pub tree: TreeId,
    /// The sender's advertised rank (informational messages only).
    pub advertised_rank: Option<u32>,
}

impl fmt::Display for ControlMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}->{} {}", self.kind, self.from, self.to, self.tree)?;
        match self.advertised_rank {
            Some(r) => write!(f, " rank={r}"),
            None => write!(f, " rank=-"),
        }
    }
}

/// A directed tree edge, reported when edges are created or re-oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdge {
    /// The end closer to the root.
    pub parent: NodeId,
    /// The end farther from the root.
    pub child: NodeId,
    /// The entanglement link realizing the edge.
    pub link: LinkId,
}

/// What a lost tree link did to the tree.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetachReport {
    /// Nodes newly marked detached (branch retained).
    pub detached: Vec<NodeId>,
    /// Nodes dropped from the tree entirely (isolated leaves/fragments).
    pub removed: Vec<NodeId>,
}

/// One routing tree.
#[derive(Debug, Clone)]
pub struct Tree {
    id: TreeId,
    root: Option<NodeId>,
    states: BTreeMap<NodeId, NodeTreeState>,
}

impl Tree {
    /// An empty, unrooted tree.
    pub fn new(id: TreeId) -> Self {
        Self {
            id,
            root: None,
            states: BTreeMap::new(),
        }
    }

    /// Installs the root node with rank 0. Fails if a root exists.
    pub fn init_root(&mut self, node: NodeId) -> Result<(), DodagError> {
        if let Some(existing) = self.root {
            return Err(DodagError::RootExists {
                tree: self.id,
                existing,
            });
        }
        self.root = Some(node);
        self.states
            .insert(node, NodeTreeState::new(Membership::Root, 0));
        Ok(())
    }

    /// This tree's identifier.
    pub fn id(&self) -> TreeId {
        self.id
    }

    /// The root node, once installed.
    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    /// Per-tree state of a node, if it has any.
    pub fn state(&self, node: NodeId) -> Option<&NodeTreeState> {
        self.states.get(&node)
    }

    /// A node's standing in this tree ([`Membership::Out`] when absent).
    pub fn membership(&self, node: NodeId) -> Membership {
        self.states
            .get(&node)
            .map_or(Membership::Out, |s| s.membership)
    }

    /// Whether the node is root or member.
    pub fn is_attached(&self, node: NodeId) -> bool {
        self.membership(node).is_attached()
    }

    /// A node's rank, only while attached (detached ranks are stale).
    pub fn attached_rank(&self, node: NodeId) -> Option<u32> {
        self.states
            .get(&node)
            .filter(|s| s.membership.is_attached())
            .map(|s| s.rank)
    }

    /// All nodes holding state, with that state, in ascending node order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeTreeState)> {
        self.states.iter().map(|(&v, s)| (v, s))
    }

    /// Number of attached nodes.
    pub fn attached_count(&self) -> usize {
        self.states
            .values()
            .filter(|s| s.membership.is_attached())
            .count()
    }

    /// Admits a node with no prior state in this tree as a member under
    /// `parent`. Returns the new member's rank.
    pub fn admit(
        &mut self,
        child: NodeId,
        parent: NodeId,
        link: LinkId,
    ) -> Result<u32, DodagError> {
        if self.states.contains_key(&child) {
            return Err(DodagError::AlreadyPresent {
                node: child,
                tree: self.id,
            });
        }
        let rank = self
            .attached_rank(parent)
            .ok_or(DodagError::NotAttached {
                node: parent,
                tree: self.id,
            })?
            + 1;
        let mut state = NodeTreeState::new(Membership::Member, rank);
        state.parents.push((parent, link));
        self.states.insert(child, state);
        self.states
            .get_mut(&parent)
            .unwrap()
            .children
            .insert((child, link));
        Ok(rank)
    }

    /// Structural neighbors of a detached node within its fragment.
    fn fragment_neighbors(&self, v: NodeId) -> Vec<(NodeId, LinkId)> {
        let state = &self.states[&v];
        let mut out: Vec<(NodeId, LinkId)> = state
            .parents
            .iter()
            .copied()
            .chain(state.children.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Re-attaches the detached node `x` (any node of its branch, interior
    /// or head) as a member under the attached node `parent`. The whole
    /// fragment is re-ranked by breadth-first search from `x`, re-orienting
    /// parent/child edges away from `x`. Returns every tree edge whose
    /// orientation was (re)established: the new attachment edge first, then
    /// the fragment's edges in ascending child-node order.
    pub fn reattach(
        &mut self,
        x: NodeId,
        parent: NodeId,
        link: LinkId,
    ) -> Result<Vec<TreeEdge>, DodagError> {
        if self.membership(x) != Membership::Detached {
            return Err(DodagError::NotDetached {
                node: x,
                tree: self.id,
            });
        }
        let base = self.attached_rank(parent).ok_or(DodagError::NotAttached {
            node: parent,
            tree: self.id,
        })? + 1;

        // Walk the fragment breadth-first from x, recording each node's new
        // rank and the edge it was discovered through.
        let mut order: Vec<(NodeId, u32)> = vec![(x, base)];
        let mut discovered: BTreeMap<NodeId, (NodeId, LinkId)> = BTreeMap::new();
        let mut seen: BTreeSet<NodeId> = BTreeSet::from([x]);
        let mut queue = VecDeque::from([(x, base)]);
        while let Some((v, rank)) = queue.pop_front() {
            for (w, l) in self.fragment_neighbors(v) {
                if seen.insert(w) {
                    debug_assert_eq!(self.membership(w), Membership::Detached);
                    discovered.insert(w, (v, l));
                    order.push((w, rank + 1));
                    queue.push_back((w, rank + 1));
                }
            }
        }

        let mut edges = vec![TreeEdge {
            parent,
            child: x,
            link,
        }];
        for &(v, rank) in &order {
            let state = self.states.get_mut(&v).unwrap();
            state.membership = Membership::Member;
            state.rank = rank;
            state.parents.clear();
            state.children.clear();
        }
        self.states.get_mut(&x).unwrap().parents.push((parent, link));
        self.states
            .get_mut(&parent)
            .unwrap()
            .children
            .insert((x, link));
        for (&w, &(v, l)) in &discovered {
            self.states.get_mut(&w).unwrap().parents.push((v, l));
            self.states.get_mut(&v).unwrap().children.insert((w, l));
            edges.push(TreeEdge {
                parent: v,
                child: w,
                link: l,
            });
        }
        Ok(edges)
    }

    /// All descendants of `v` (children closure), not including `v`.
    fn subtree_below(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut queue: VecDeque<NodeId> = self.states[&v]
            .children
            .iter()
            .map(|&(c, _)| c)
            .collect();
        let mut seen: BTreeSet<NodeId> = queue.iter().copied().collect();
        while let Some(w) = queue.pop_front() {
            out.push(w);
            for &(c, _) in &self.states[&w].children {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        out
    }

    /// Handles the loss of a tree link: the child side and its entire
    /// subtree are marked detached (structure retained) or, when that
    /// leaves an isolated node with no branch to retain, dropped outright.
    pub fn on_link_lost(&mut self, link: LinkId) -> Result<DetachReport, DodagError> {
        let child = self
            .states
            .iter()
            .find(|(_, s)| s.parents.iter().any(|&(_, l)| l == link))
            .map(|(&v, _)| v)
            .ok_or(DodagError::UnknownLink {
                link,
                tree: self.id,
            })?;
        let parent = {
            let state = self.states.get_mut(&child).unwrap();
            let idx = state
                .parents
                .iter()
                .position(|&(_, l)| l == link)
                .unwrap();
            state.parents.remove(idx).0
        };
        self.states
            .get_mut(&parent)
            .unwrap()
            .children
            .retain(|&(c, l)| !(c == child && l == link));

        let mut report = DetachReport::default();
        for v in std::iter::once(child).chain(self.subtree_below(child)) {
            let state = self.states.get_mut(&v).unwrap();
            if state.membership != Membership::Root {
                state.membership = Membership::Detached;
                report.detached.push(v);
            }
        }
        // Fragments reduced to a single isolated node have no branch worth
        // retaining; the severed parent may itself have become one.
        for v in [child, parent] {
            if let Some(state) = self.states.get(&v) {
                if state.membership == Membership::Detached
                    && state.parents.is_empty()
                    && state.children.is_empty()
                {
                    self.states.remove(&v);
                    report.detached.retain(|&d| d != v);
                    report.removed.push(v);
                }
            }
        }
        report.detached.sort_unstable();
        report.removed.sort_unstable();
        Ok(report)
    }

    /// The node's path to the root, starting at the node itself; only
    /// attached nodes have one.
    pub fn parent_chain(&self, v: NodeId) -> Option<Vec<NodeId>> {
        if !self.is_attached(v) {
            return None;
        }
        let mut chain = vec![v];
        let mut seen = BTreeSet::from([v]);
        let mut cur = v;
        while let Some((p, _)) = self.states[&cur].parent() {
            if !seen.insert(p) {
                return None; // corrupted: cycle
            }
            chain.push(p);
            cur = p;
        }
        (Some(cur) == self.root).then_some(chain)
    }

    /// Link ids currently serving as tree edges, each with its orientation.
    pub fn tree_edges(&self) -> impl Iterator<Item = TreeEdge> + '_ {
        self.states.iter().flat_map(|(&child, s)| {
            s.parents.iter().map(move |&(parent, link)| TreeEdge {
                parent,
                child,
                link,
            })
        })
    }

    /// Structural-consistency check; an empty result means the tree is
    /// sound.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let tree = self.id;
        match self.root {
            None => {
                if !self.states.is_empty() {
                    problems.push(format!("{tree}: states present without a root"));
                }
            }
            Some(root) => match self.states.get(&root) {
                None => problems.push(format!("{tree}: root {root} has no state")),
                Some(s) => {
                    if s.membership != Membership::Root || s.rank != 0 || !s.parents.is_empty() {
                        problems.push(format!("{tree}: root {root} state malformed"));
                    }
                }
            },
        }
        for (&v, s) in &self.states {
            if s.membership == Membership::Out {
                problems.push(format!("{tree}: node {v} stored as out"));
            }
            if s.parents.len() > 1 {
                problems.push(format!("{tree}: node {v} has {} parents", s.parents.len()));
            }
            if s.membership == Membership::Root && Some(v) != self.root {
                problems.push(format!("{tree}: node {v} claims root"));
            }
            for &(p, l) in &s.parents {
                match self.states.get(&p) {
                    None => problems.push(format!("{tree}: node {v} parent {p} missing")),
                    Some(ps) => {
                        if !ps.children.contains(&(v, l)) {
                            problems
                                .push(format!("{tree}: edge {p}->{v} missing child entry"));
                        }
                        match s.membership {
                            Membership::Member => {
                                if !ps.membership.is_attached() {
                                    problems.push(format!(
                                        "{tree}: member {v} hangs off unattached {p}"
                                    ));
                                }
                                if s.rank != ps.rank + 1 {
                                    problems.push(format!(
                                        "{tree}: rank of {v} is {} but parent rank is {}",
                                        s.rank, ps.rank
                                    ));
                                }
                            }
                            Membership::Detached => {
                                if ps.membership != Membership::Detached {
                                    problems.push(format!(
                                        "{tree}: detached {v} hangs off non-detached {p}"
                                    ));
                                }
                            }
                            _ => problems.push(format!("{tree}: {v} has parent yet is not a member")),
                        }
                    }
                }
            }
            if s.membership == Membership::Member && s.parents.is_empty() {
                problems.push(format!("{tree}: member {v} has no parent"));
            }
            for &(c, l) in &s.children {
                let ok = self
                    .states
                    .get(&c)
                    .is_some_and(|cs| cs.parents.contains(&(v, l)));
                if !ok {
                    problems.push(format!("{tree}: child entry {v}->{c} not mirrored"));
                }
            }
        }
        // Attached nodes must reach the root by parent links.
        for (&v, s) in &self.states {
            if s.membership == Membership::Member && self.parent_chain(v).is_none() {
                problems.push(format!("{tree}: member {v} cannot reach the root"));
            }
        }
        problems
    }
}

#[cfg(test)]
impl Tree {
    /// Plants a parent entry without any gating, so audits can be exercised
    /// against states the normal operations refuse to build.
    pub(crate) fn plant_parent_for_tests(&mut self, node: NodeId, parent: NodeId, link: LinkId) {
        self.states
            .get_mut(&node)
            .expect("node present")
            .parents
            .push((parent, link));
        self.states
            .get_mut(&parent)
            .expect("parent present")
            .children
            .insert((node, link));
    }
}
