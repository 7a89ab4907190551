//! Coordination of several routing trees over one link layer: join
//! handshakes run against every tree, parent negotiation where trees meet,
//! and the structural rules (one parent per tree, no diamond patterns) that
//! keep cross-tree routing sound.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::dodag::{
    ControlMessage, DetachReport, DodagError, Membership, MessageKind, Tree,
};
use crate::entanglement::LinkLayerState;
use crate::types::{LinkId, NodeId, TreeId};

/// Errors from forest-level operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    /// A forest needs at least one root.
    #[error("a forest needs at least one root")]
    NoRoots,
    /// Two trees were given the same root node.
    #[error("node {0} was listed as a root twice")]
    DuplicateRoot(NodeId),
    /// Negotiation was invoked for a node attached to no tree.
    #[error("node {0} is attached to no tree; ordinary joining applies")]
    NodeInNoTree(NodeId),
    /// A tree-level operation failed.
    #[error(transparent)]
    Dodag(#[from] DodagError),
}

/// The role a live entanglement link plays as a tree edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdgeRole {
    /// The tree the edge belongs to.
    pub tree: TreeId,
    /// The end closer to that tree's root.
    pub parent: NodeId,
    /// The end farther from that tree's root.
    pub child: NodeId,
}

/// Outcome of one parent negotiation across trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegotiationOutcome {
    /// The first node adopted the second into its primary tree.
    FirstParentsSecond,
    /// The second node adopted the first into its primary tree.
    SecondParentsFirst,
    /// No edge was created: equal ranks (comparable nodes) or the adoption
    /// gate rejected it. The link stays available for other uses.
    NoConnection,
}

/// A record of one processed negotiation, for tracing and audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegotiationEvent {
    /// Lower-id endpoint of the link.
    pub a: NodeId,
    /// Higher-id endpoint of the link.
    pub b: NodeId,
    /// The link negotiated over.
    pub link: LinkId,
    /// Primary ranks of `a` and `b` at negotiation time.
    pub ranks: (u32, u32),
    /// What happened.
    pub outcome: NegotiationOutcome,
}

/// One join or reattachment decision within a maintenance pass.
#[derive(Debug, Clone, Copy)]
enum Decision {
    Fresh {
        joiner: NodeId,
        tree: TreeId,
        parent: NodeId,
        link: LinkId,
    },
    Reattach {
        joiner: NodeId,
        tree: TreeId,
        parent: NodeId,
        link: LinkId,
    },
}

/// A collection of routing trees sharing one link layer.
#[derive(Debug, Clone)]
pub struct ForestState {
    trees: Vec<Tree>,
    /// Which live link realizes which tree edge. A link serves at most one
    /// tree edge across the whole forest.
    roles: BTreeMap<LinkId, TreeEdgeRole>,
}

impl ForestState {
    /// Creates one tree per root node. Roots must be distinct.
    pub fn new(roots: &[NodeId]) -> Result<Self, ForestError> {
        if roots.is_empty() {
            return Err(ForestError::NoRoots);
        }
        let mut seen = BTreeSet::new();
        let mut trees = Vec::with_capacity(roots.len());
        for (idx, &root) in roots.iter().enumerate() {
            if !seen.insert(root) {
                return Err(ForestError::DuplicateRoot(root));
            }
            let mut tree = Tree::new(TreeId(idx as u32));
            tree.init_root(root)?;
            trees.push(tree);
        }
        Ok(Self {
            trees,
            roles: BTreeMap::new(),
        })
    }

    /// All trees, ordered by tree id.
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// One tree by id.
    pub fn tree(&self, id: TreeId) -> &Tree {
        &self.trees[id.index()]
    }

    /// The tree-edge role a link currently plays, if any.
    pub fn role_of(&self, link: LinkId) -> Option<TreeEdgeRole> {
        self.roles.get(&link).copied()
    }

    /// Every `(tree, rank)` membership in which the node is attached,
    /// ascending by tree id.
    pub fn attached_memberships(&self, node: NodeId) -> Vec<(TreeId, u32)> {
        self.trees
            .iter()
            .filter_map(|t| t.attached_rank(node).map(|r| (t.id(), r)))
            .collect()
    }

    /// The node's primary membership: its smallest attached rank, ties to
    /// the smaller tree id. This is the rank the node advertises.
    pub fn primary(&self, node: NodeId) -> Option<(TreeId, u32)> {
        self.attached_memberships(node)
            .into_iter()
            .min_by_key(|&(tree, rank)| (rank, tree))
    }

    /// Nodes attached in two or more trees — the cross-tree junctions that
    /// multi-tree route search exploits.
    pub fn shared_subtree_nodes(&self) -> BTreeSet<NodeId> {
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for tree in &self.trees {
            for (v, s) in tree.nodes() {
                if s.membership.is_attached() {
                    *counts.entry(v).or_default() += 1;
                }
            }
        }
        counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .map(|(v, _)| v)
            .collect()
    }

    /// Whether `child` may gain a parent in `tree`: it must not already
    /// have one there (one parent per tree), must not be that tree's root,
    /// and the enlarged parent set must stay diamond-free.
    pub fn can_adopt(&self, child: NodeId, tree: TreeId) -> bool {
        let target = &self.trees[tree.index()];
        if target.root() == Some(child) {
            return false;
        }
        if target
            .state(child)
            .is_some_and(|s| !s.parents.is_empty())
        {
            return false;
        }
        // Hypothetical parent census after the adoption: diamonds pair
        // multi-tree parentage with a doubled parent inside one tree.
        let mut trees_with_parents = 1; // the candidate tree
        let mut max_in_one = 1;
        for t in &self.trees {
            if t.id() == tree {
                continue;
            }
            if let Some(s) = t.state(child) {
                if !s.parents.is_empty() {
                    trees_with_parents += 1;
                    max_in_one = max_in_one.max(s.parents.len());
                }
            }
        }
        !(trees_with_parents >= 2 && max_in_one >= 2)
    }

    /// Whether no node anywhere holds parents in two or more trees while
    /// also holding two or more parents inside a single tree.
    pub fn is_diamond_free(&self) -> bool {
        let mut per_node: BTreeMap<NodeId, (usize, usize)> = BTreeMap::new();
        for tree in &self.trees {
            for (v, s) in tree.nodes() {
                if !s.parents.is_empty() {
                    let entry = per_node.entry(v).or_default();
                    entry.0 += 1;
                    entry.1 = entry.1.max(s.parents.len());
                }
            }
        }
        per_node
            .values()
            .all(|&(trees, max_in_one)| !(trees >= 2 && max_in_one >= 2))
    }

    /// Per-node live-direct-link adjacency: `node -> (neighbor, link)`,
    /// both levels ascending.
    fn neighbor_map(links: &LinkLayerState) -> BTreeMap<NodeId, Vec<(NodeId, LinkId)>> {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, LinkId)>> = BTreeMap::new();
        for (&(a, b), ids) in &links.direct_adjacency() {
            // Edge occupancy caps this at one live direct link per pair.
            let link = ids[0];
            adj.entry(a).or_default().push((b, link));
            adj.entry(b).or_default().push((a, link));
        }
        for list in adj.values_mut() {
            list.sort_unstable();
        }
        adj
    }

    /// Runs join/repair handshakes across all trees until no further node
    /// can act (or for a single pass when `slow_control` is set). Within a
    /// pass every eligible node decides against the same snapshot, so join
    /// waves spread one hop per pass. Returns the control messages
    /// exchanged.
    pub fn maintenance_round(
        &mut self,
        links: &LinkLayerState,
        slow_control: bool,
    ) -> Vec<ControlMessage> {
        let adj = Self::neighbor_map(links);
        let mut messages = Vec::new();
        loop {
            let changed = self.maintenance_pass(&adj, &mut messages);
            if slow_control || !changed {
                break;
            }
        }
        messages
    }

    fn maintenance_pass(
        &mut self,
        adj: &BTreeMap<NodeId, Vec<(NodeId, LinkId)>>,
        messages: &mut Vec<ControlMessage>,
    ) -> bool {
        // Pass-start snapshot of every attached (node, tree) rank; all
        // decisions below read this, not the evolving state.
        let mut attached: BTreeMap<(NodeId, TreeId), u32> = BTreeMap::new();
        for tree in &self.trees {
            for (v, s) in tree.nodes() {
                if s.membership.is_attached() {
                    attached.insert((v, tree.id()), s.rank);
                }
            }
        }
        let primary_of = |v: NodeId| -> Option<(TreeId, u32)> {
            self.trees
                .iter()
                .filter_map(|t| attached.get(&(v, t.id())).map(|&r| (t.id(), r)))
                .min_by_key(|&(tree, rank)| (rank, tree))
        };

        let mut decisions = Vec::new();
        for (&joiner, neighbors) in adj {
            let has_any_state = self.trees.iter().any(|t| t.state(joiner).is_some());
            if !has_any_state {
                // A node in no tree solicits every attached neighbor and
                // commits to the lowest advertised rank (ties by lower
                // neighbor id); the neighbor's advertisement names its
                // primary tree.
                let mut best: Option<(u32, NodeId, TreeId, LinkId)> = None;
                for &(n, link) in neighbors {
                    if self.roles.contains_key(&link) {
                        continue;
                    }
                    let Some((tree, rank)) = primary_of(n) else {
                        continue;
                    };
                    messages.push(ControlMessage {
                        kind: MessageKind::Dis,
                        from: joiner,
                        to: n,
                        tree,
                        advertised_rank: None,
                    });
                    messages.push(ControlMessage {
                        kind: MessageKind::Dio,
                        from: n,
                        to: joiner,
                        tree,
                        advertised_rank: Some(rank),
                    });
                    if best.is_none_or(|(br, bn, _, _)| (rank, n) < (br, bn)) {
                        best = Some((rank, n, tree, link));
                    }
                }
                if let Some((_, parent, tree, link)) = best {
                    decisions.push(Decision::Fresh {
                        joiner,
                        tree,
                        parent,
                        link,
                    });
                }
            } else {
                // Detached nodes solicit re-entry into each tree they are
                // detached in — and only those trees.
                for tree in &self.trees {
                    if tree.membership(joiner) != Membership::Detached {
                        continue;
                    }
                    let tid = tree.id();
                    let mut best: Option<(u32, NodeId, LinkId)> = None;
                    for &(n, link) in neighbors {
                        if self.roles.contains_key(&link) {
                            continue;
                        }
                        let Some(&rank) = attached.get(&(n, tid)) else {
                            continue;
                        };
                        messages.push(ControlMessage {
                            kind: MessageKind::Dis,
                            from: joiner,
                            to: n,
                            tree: tid,
                            advertised_rank: None,
                        });
                        messages.push(ControlMessage {
                            kind: MessageKind::Dio,
                            from: n,
                            to: joiner,
                            tree: tid,
                            advertised_rank: Some(rank),
                        });
                        if best.is_none_or(|(br, bn, _)| (rank, n) < (br, bn)) {
                            best = Some((rank, n, link));
                        }
                    }
                    if let Some((_, parent, link)) = best {
                        decisions.push(Decision::Reattach {
                            joiner,
                            tree: tid,
                            parent,
                            link,
                        });
                    }
                }
            }
        }

        let mut changed = false;
        for decision in decisions {
            match decision {
                Decision::Fresh {
                    joiner,
                    tree,
                    parent,
                    link,
                } => {
                    // An earlier decision in this batch may have claimed the
                    // link; the snapshot cannot see within-batch claims. The
                    // joiner re-solicits on the next pass.
                    if self.roles.contains_key(&link) {
                        continue;
                    }
                    self.trees[tree.index()]
                        .admit(joiner, parent, link)
                        .expect("fresh joiner validated against snapshot");
                    self.roles.insert(
                        link,
                        TreeEdgeRole {
                            tree,
                            parent,
                            child: joiner,
                        },
                    );
                    messages.push(ControlMessage {
                        kind: MessageKind::Dao,
                        from: joiner,
                        to: parent,
                        tree,
                        advertised_rank: None,
                    });
                    changed = true;
                }
                Decision::Reattach {
                    joiner,
                    tree,
                    parent,
                    link,
                } => {
                    // A branch mate applied earlier in this batch may have
                    // pulled the joiner back in already, and an earlier
                    // decision may have claimed the link for another tree
                    // edge (a node detached in two trees bids the same link
                    // for both; two mutually detached neighbors bid the link
                    // between them). Losers re-solicit on the next pass.
                    if self.trees[tree.index()].membership(joiner) != Membership::Detached
                        || self.roles.contains_key(&link)
                    {
                        continue;
                    }
                    let edges = self.trees[tree.index()]
                        .reattach(joiner, parent, link)
                        .expect("reattach validated against snapshot");
                    for e in edges {
                        self.roles.insert(
                            e.link,
                            TreeEdgeRole {
                                tree,
                                parent: e.parent,
                                child: e.child,
                            },
                        );
                    }
                    messages.push(ControlMessage {
                        kind: MessageKind::Dao,
                        from: joiner,
                        to: parent,
                        tree,
                        advertised_rank: None,
                    });
                    changed = true;
                }
            }
        }
        changed
    }

    /// Negotiates parenthood over one live link whose endpoints sit in
    /// different primary trees. The lower-ranked node adopts the other into
    /// its primary tree; equal ranks are comparable nodes and never
    /// connect; the adoption gate ([`Self::can_adopt`]) may also veto.
    pub fn negotiate_parent(
        &mut self,
        node_a: NodeId,
        node_b: NodeId,
        link: LinkId,
    ) -> Result<NegotiationOutcome, ForestError> {
        let (tree_a, rank_a) = self
            .primary(node_a)
            .ok_or(ForestError::NodeInNoTree(node_a))?;
        let (tree_b, rank_b) = self
            .primary(node_b)
            .ok_or(ForestError::NodeInNoTree(node_b))?;
        if rank_a == rank_b {
            return Ok(NegotiationOutcome::NoConnection);
        }
        let (parent, child, tree, outcome) = if rank_a < rank_b {
            (node_a, node_b, tree_a, NegotiationOutcome::FirstParentsSecond)
        } else {
            (node_b, node_a, tree_b, NegotiationOutcome::SecondParentsFirst)
        };
        if !self.can_adopt(child, tree) {
            return Ok(NegotiationOutcome::NoConnection);
        }
        match self.trees[tree.index()].membership(child) {
            Membership::Out => {
                self.trees[tree.index()].admit(child, parent, link)?;
                self.roles.insert(
                    link,
                    TreeEdgeRole {
                        tree,
                        parent,
                        child,
                    },
                );
            }
            Membership::Detached => {
                // The child heads a retained branch in the adopting tree;
                // adoption doubles as the branch's re-entry point.
                let edges = self.trees[tree.index()].reattach(child, parent, link)?;
                for e in edges {
                    self.roles.insert(
                        e.link,
                        TreeEdgeRole {
                            tree,
                            parent: e.parent,
                            child: e.child,
                        },
                    );
                }
            }
            // can_adopt excludes members, roots, and parented nodes.
            other => unreachable!("can_adopt admitted membership {other:?}"),
        }
        Ok(outcome)
    }

    /// Processes every live direct link not already serving as a tree edge,
    /// in ascending endpoint order, negotiating wherever the endpoints'
    /// primary trees differ. Returns the processed negotiations.
    pub fn negotiation_round(&mut self, links: &LinkLayerState) -> Vec<NegotiationEvent> {
        let mut events = Vec::new();
        for (&(a, b), ids) in &links.direct_adjacency() {
            let link = ids[0];
            if self.roles.contains_key(&link) {
                continue;
            }
            let (Some((tree_a, rank_a)), Some((tree_b, rank_b))) =
                (self.primary(a), self.primary(b))
            else {
                continue;
            };
            if tree_a == tree_b {
                continue;
            }
            let outcome = self
                .negotiate_parent(a, b, link)
                .expect("both endpoints verified attached");
            events.push(NegotiationEvent {
                a,
                b,
                link,
                ranks: (rank_a, rank_b),
                outcome,
            });
        }
        events
    }

    /// Tears lost links out of every tree they serve, detaching or
    /// dropping the downstream branches. Links that were not tree edges
    /// are ignored. Returns each affected tree's repair report.
    pub fn handle_lost_links(&mut self, lost: &[LinkId]) -> Vec<(TreeId, DetachReport)> {
        let mut ids: Vec<LinkId> = lost.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut reports = Vec::new();
        for link in ids {
            if let Some(role) = self.roles.remove(&link) {
                let report = self.trees[role.tree.index()]
                    .on_link_lost(link)
                    .expect("role registry names a real tree edge");
                reports.push((role.tree, report));
            }
        }
        reports
    }

    /// Line-oriented forest snapshot: one `node,tree,rank,parent` line per
    /// attached membership, sorted by node then tree; roots print `-` as
    /// parent. Byte-identical across runs with identical history.
    pub fn snapshot(&self) -> String {
        let mut lines = Vec::new();
        for tree in &self.trees {
            for (v, s) in tree.nodes() {
                if !s.membership.is_attached() {
                    continue;
                }
                let parent = match s.parent() {
                    Some((p, _)) => p.to_string(),
                    None => "-".to_owned(),
                };
                lines.push((v, tree.id(), s.rank, parent));
            }
        }
        lines.sort();
        let mut out = String::new();
        for (v, tree, rank, parent) in lines {
            out.push_str(&format!("{v},{},{rank},{parent}\n", tree.0));
        }
        out
    }

    /// Forest-wide consistency check. Verifies every per-tree audit, the
    /// diamond rule, root distinctness, and agreement between the role
    /// registry, the trees, and the live link set.
    pub fn audit(&self, links: &LinkLayerState) -> Vec<String> {
        let mut problems = Vec::new();
        for tree in &self.trees {
            problems.extend(tree.audit());
        }
        if !self.is_diamond_free() {
            problems.push("diamond pattern present".to_owned());
        }
        let mut roots = BTreeSet::new();
        for tree in &self.trees {
            if let Some(root) = tree.root() {
                if !roots.insert(root) {
                    problems.push(format!("root {root} used by two trees"));
                }
            }
        }
        // Tree edges and the role registry must describe the same set, and
        // every tree edge must be a live link with matching endpoints.
        let mut from_trees = BTreeMap::new();
        for tree in &self.trees {
            for edge in tree.tree_edges() {
                if from_trees
                    .insert(
                        edge.link,
                        TreeEdgeRole {
                            tree: tree.id(),
                            parent: edge.parent,
                            child: edge.child,
                        },
                    )
                    .is_some()
                {
                    problems.push(format!("link {} serves two tree edges", edge.link));
                }
            }
        }
        if from_trees != self.roles {
            problems.push("role registry disagrees with tree edges".to_owned());
        }
        for (link, role) in &self.roles {
            match links.get(*link) {
                None => problems.push(format!("tree edge {link} is not live")),
                Some(l) => {
                    let pair = (role.parent.min(role.child), role.parent.max(role.child));
                    if (l.a, l.b) != pair {
                        problems.push(format!("tree edge {link} endpoints disagree"));
                    }
                }
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::SimParams;
    use crate::rng::{stream, StreamKind};
    use crate::topology::PhysicalTopology;

    fn full_links(topo: &PhysicalTopology, t_co: u32) -> LinkLayerState {
        let params = SimParams::new(1.0, 1.0, t_co).unwrap();
        let mut rng = stream(7, StreamKind::Generation, None, 0);
        let mut links = LinkLayerState::new(topo.edge_count());
        links.generate_all(topo, &params, &mut rng);
        links
    }

    #[test]
    fn forest_construction_validates_roots() {
        assert!(matches!(ForestState::new(&[]), Err(ForestError::NoRoots)));
        assert!(matches!(
            ForestState::new(&[3, 3]),
            Err(ForestError::DuplicateRoot(3))
        ));
        let forest = ForestState::new(&[0, 5]).unwrap();
        assert_eq!(forest.trees().len(), 2);
        assert_eq!(forest.tree(TreeId(1)).root(), Some(5));
        assert_eq!(forest.primary(5), Some((TreeId(1), 0)));
    }

    #[test]
    fn maintenance_fixpoint_joins_a_whole_chain_in_one_round() {
        // Root at 0, fresh links 0-1 and 1-2: one round attaches both
        // nodes, one hop per pass.
        let topo = PhysicalTopology::gen_grid(1, 3).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0]).unwrap();
        let messages = forest.maintenance_round(&links, false);
        let tree = forest.tree(TreeId(0));
        assert_eq!(tree.attached_rank(1), Some(1));
        assert_eq!(tree.attached_rank(2), Some(2));
        assert_eq!(tree.state(1).unwrap().parent().map(|(p, _)| p), Some(0));
        assert_eq!(tree.state(2).unwrap().parent().map(|(p, _)| p), Some(1));
        assert!(forest.audit(&links).is_empty());
        // The handshake trace for node 1: DIS out, DIO back, DAO commit.
        let kinds: Vec<MessageKind> = messages
            .iter()
            .filter(|m| m.from == 1 || m.to == 1)
            .map(|m| m.kind)
            .collect();
        assert!(kinds.starts_with(&[MessageKind::Dis, MessageKind::Dio]));
        assert!(kinds.contains(&MessageKind::Dao));
    }

    #[test]
    fn slow_control_limits_joins_to_one_hop_per_round() {
        let topo = PhysicalTopology::gen_grid(1, 3).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0]).unwrap();
        forest.maintenance_round(&links, true);
        let tree = forest.tree(TreeId(0));
        assert_eq!(tree.attached_rank(1), Some(1));
        assert_eq!(tree.attached_rank(2), None);
        forest.maintenance_round(&links, true);
        assert_eq!(forest.tree(TreeId(0)).attached_rank(2), Some(2));
    }

    #[test]
    fn joiner_prefers_the_lowest_advertised_rank() {
        // Joiner 6 hears rank 3 from node 3 and rank 5 from node 5; it must
        // join under node 3 with rank 4.
        let topo = PhysicalTopology::from_edges("probe", 7, [(3, 6), (5, 6)]).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0]).unwrap();
        {
            let tree = &mut forest.trees[0];
            tree.admit(1, 0, LinkId(100)).unwrap();
            tree.admit(2, 1, LinkId(101)).unwrap();
            tree.admit(3, 2, LinkId(102)).unwrap();
            tree.admit(4, 3, LinkId(103)).unwrap();
            tree.admit(5, 4, LinkId(104)).unwrap();
        }
        forest.maintenance_round(&links, false);
        let tree = forest.tree(TreeId(0));
        assert_eq!(tree.attached_rank(6), Some(4));
        assert_eq!(tree.state(6).unwrap().parent().map(|(p, _)| p), Some(3));
    }

    #[test]
    fn isolated_nodes_stay_out() {
        let topo = PhysicalTopology::gen_grid(1, 3).unwrap();
        let links = LinkLayerState::new(topo.edge_count());
        let mut forest = ForestState::new(&[0]).unwrap();
        let messages = forest.maintenance_round(&links, false);
        assert!(messages.is_empty());
        assert_eq!(forest.tree(TreeId(0)).attached_count(), 1);
    }

    #[test]
    fn negotiation_smaller_rank_adopts_larger() {
        // Path 0-1-2-3 with roots 0 and 3: after maintenance, nodes 1, 2
        // are attached (1 in tree 0, 2 in tree 1, both rank 1) and the
        // middle link 1-2 carries a comparable-rank negotiation. Root
        // ranks 0 never negotiate adoptions here because the outer links
        // are already tree edges.
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0, 3]).unwrap();
        forest.maintenance_round(&links, false);
        let events = forest.negotiation_round(&links);
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].a, events[0].b), (1, 2));
        assert_eq!(events[0].ranks, (1, 1));
        assert_eq!(events[0].outcome, NegotiationOutcome::NoConnection);
        assert!(forest.shared_subtree_nodes().is_empty());

        // A 5-node path breaks the symmetry: node 2 (rank 2 in tree 0)
        // meets node 3 (rank 1 in tree 1), so 3 adopts 2 into tree 1.
        let topo = PhysicalTopology::gen_grid(1, 5).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0, 4]).unwrap();
        forest.maintenance_round(&links, false);
        let events = forest.negotiation_round(&links);
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].a, events[0].b), (2, 3));
        assert_eq!(events[0].ranks, (2, 1));
        assert_eq!(events[0].outcome, NegotiationOutcome::SecondParentsFirst);
        assert_eq!(forest.tree(TreeId(1)).attached_rank(2), Some(2));
        assert_eq!(
            forest.shared_subtree_nodes(),
            BTreeSet::from([2])
        );
        assert!(forest.audit(&links).is_empty());
        assert!(forest.is_diamond_free());
    }

    #[test]
    fn negotiation_blocked_by_existing_parent_in_that_tree() {
        // Node 1 is already a member (hence parented) in tree 0; node 0
        // (rank 0) cannot adopt it again despite the rank gap.
        let topo = PhysicalTopology::from_edges("pair", 4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let links = full_links(&topo, 10);
        let mut forest = ForestState::new(&[0, 3]).unwrap();
        forest.maintenance_round(&links, false);
        // Tree edges: 0-1 (tree 0), 2-3 (tree 1); link 1-2 negotiates.
        assert!(!forest.can_adopt(1, TreeId(0)));
        assert!(forest.can_adopt(1, TreeId(1)));
        let outcome = forest.negotiate_parent(1, 2, LinkId(999)).unwrap();
        assert_eq!(outcome, NegotiationOutcome::NoConnection); // equal ranks
        // Unequal ranks but the winner's tree already parents the loser:
        // the adoption gate turns the negotiation away.
        let outcome = forest.negotiate_parent(0, 1, LinkId(998)).unwrap();
        assert_eq!(outcome, NegotiationOutcome::NoConnection);
        assert_eq!(forest.tree(TreeId(0)).state(1).unwrap().parents.len(), 1);
    }

    #[test]
    fn negotiation_requires_attachment() {
        let mut forest = ForestState::new(&[0]).unwrap();
        assert_eq!(
            forest.negotiate_parent(0, 9, LinkId(1)),
            Err(ForestError::NodeInNoTree(9))
        );
    }

    #[test]
    fn diamond_audit_catches_hand_built_violation() {
        // Node 9 with two parents inside tree 0 plus one in tree 1 is the
        // canonical diamond; the incremental gate and the global audit must
        // both reject it.
        let mut forest = ForestState::new(&[0, 1]).unwrap();
        forest.trees[0].admit(2, 0, LinkId(10)).unwrap();
        forest.trees[0].admit(9, 2, LinkId(11)).unwrap();
        forest.trees[1].admit(9, 1, LinkId(12)).unwrap();
        assert!(forest.is_diamond_free());
        assert!(!forest.can_adopt(9, TreeId(0))); // already parented there
        // Plant the second in-tree parent directly, bypassing the gate.
        forest.trees[0].plant_parent_for_tests(9, 0, LinkId(13));
        assert!(!forest.is_diamond_free());
    }

    #[test]
    fn cross_tree_adoption_rank_is_parent_plus_one() {
        let mut forest = ForestState::new(&[0, 5]).unwrap();
        forest.trees[0].admit(1, 0, LinkId(10)).unwrap();
        forest.trees[1].admit(4, 5, LinkId(20)).unwrap();
        forest.trees[1].admit(3, 4, LinkId(21)).unwrap();
        // Node 1 (rank 1) vs node 3 (rank 2): 1 adopts 3 into tree 0.
        let outcome = forest.negotiate_parent(1, 3, LinkId(30)).unwrap();
        assert_eq!(outcome, NegotiationOutcome::FirstParentsSecond);
        assert_eq!(forest.tree(TreeId(0)).attached_rank(3), Some(2));
        assert_eq!(forest.attached_memberships(3).len(), 2);
        assert_eq!(
            forest.role_of(LinkId(30)),
            Some(TreeEdgeRole {
                tree: TreeId(0),
                parent: 1,
                child: 3
            })
        );
    }

    #[test]
    fn lost_adoption_edge_detaches_only_that_tree() {
        let mut forest = ForestState::new(&[0, 5]).unwrap();
        forest.trees[0].admit(1, 0, LinkId(10)).unwrap();
        forest.trees[1].admit(4, 5, LinkId(20)).unwrap();
        forest.trees[1].admit(3, 4, LinkId(21)).unwrap();
        forest.roles.insert(
            LinkId(21),
            TreeEdgeRole {
                tree: TreeId(1),
                parent: 4,
                child: 3,
            },
        );
        forest.negotiate_parent(1, 3, LinkId(30)).unwrap();
        let reports = forest.handle_lost_links(&[LinkId(30)]);
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].0, TreeId(0));
        assert_eq!(reports[0].1.removed, vec![3]);
        // Tree 1 membership survives.
        assert_eq!(forest.tree(TreeId(1)).attached_rank(3), Some(2));
        assert_eq!(forest.tree(TreeId(0)).membership(3), Membership::Out);
        assert_eq!(forest.role_of(LinkId(30)), None);
    }

    #[test]
    fn one_link_cannot_serve_two_reattachments_in_one_pass() {
        // Node 2 ends up detached in both trees while node 1 is attached in
        // both; the link 1-2 is then the best reattachment bid for 2 in each
        // tree within the same pass. Only one bid may claim the link; the
        // other must fall back to a different link on a later pass.
        let topo = PhysicalTopology::from_edges(
            "probe",
            10,
            [(0, 1), (1, 2), (1, 9), (2, 3), (2, 4), (2, 6), (3, 9)],
        )
        .unwrap();
        let params = SimParams::new(1.0, 1.0, 100).unwrap();
        let mut rng = stream(8, StreamKind::Generation, None, 0);
        let mut links = LinkLayerState::new(topo.edge_count());
        let ids = links.generate_all(&topo, &params, &mut rng);
        let (l01, l12, l19, l23, l24, l26, l39) =
            (ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6]);

        let mut forest = ForestState::new(&[0, 9]).unwrap();
        let mut grow = |tree: usize, child: NodeId, parent: NodeId, link: LinkId| {
            forest.trees[tree].admit(child, parent, link).unwrap();
            forest.roles.insert(
                link,
                TreeEdgeRole {
                    tree: TreeId(tree as u32),
                    parent,
                    child,
                },
            );
        };
        grow(0, 1, 0, l01);
        grow(0, 2, 1, l12);
        grow(0, 4, 2, l24);
        grow(1, 3, 9, l39);
        grow(1, 1, 9, l19);
        grow(1, 2, 3, l23);
        grow(1, 6, 2, l26);
        assert!(forest.audit(&links).is_empty());

        // Both of node 2's parent links die; its branches {2,4} and {2,6}
        // detach in their trees. The freed edges then regrow fresh links.
        links.remove(l12);
        links.remove(l23);
        forest.handle_lost_links(&[l12, l23]);
        assert_eq!(forest.tree(TreeId(0)).membership(2), Membership::Detached);
        assert_eq!(forest.tree(TreeId(1)).membership(2), Membership::Detached);
        let fresh = links.generate_all(&topo, &params, &mut rng);
        assert_eq!(fresh.len(), 2);
        let (n12, n23) = (fresh[0], fresh[1]);

        forest.maintenance_round(&links, false);
        assert!(forest.audit(&links).is_empty());
        assert_eq!(
            forest.role_of(n12),
            Some(TreeEdgeRole {
                tree: TreeId(0),
                parent: 1,
                child: 2
            })
        );
        assert_eq!(
            forest.role_of(n23),
            Some(TreeEdgeRole {
                tree: TreeId(1),
                parent: 3,
                child: 2
            })
        );
        // Both branches are reattached, children included.
        assert_eq!(forest.tree(TreeId(0)).attached_rank(4), Some(3));
        assert_eq!(forest.tree(TreeId(1)).attached_rank(6), Some(3));
    }

    #[test]
    fn snapshot_is_sorted_and_stable() {
        let mut forest = ForestState::new(&[0, 5]).unwrap();
        forest.trees[0].admit(1, 0, LinkId(10)).unwrap();
        forest.trees[1].admit(3, 5, LinkId(20)).unwrap();
        let snap = forest.snapshot();
        assert_eq!(snap, "0,0,0,-\n1,0,1,0\n3,1,1,5\n5,1,0,-\n");
        assert_eq!(snap, forest.clone().snapshot());
    }
}
