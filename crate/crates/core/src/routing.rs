//! Path search over routing trees and the execution of swap chains, plus
//! the synchronous two-phase baseline used for comparison.
//!
//! Searches are purely classical and consume nothing; only
//! [`execute_swaps`] touches the link layer. The multi-tree search first
//! looks for a shared ancestor of the endpoints across all trees, then
//! falls back to an undirected breadth-first search over the forest's tree
//! edges, which lets routes descend through cross-tree junction nodes.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use crate::dodag::Tree;
use crate::engine::SchemeKind;
use crate::entanglement::{EntanglementError, LinkLayerState, SimParams, SwapResult};
use crate::forest::ForestState;
use crate::topology::PhysicalTopology;
use crate::types::{LinkId, NodeId};

/// A swap-ready chain of live links joining a source to a destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestPath {
    /// Source node.
    pub s: NodeId,
    /// Destination node.
    pub t: NodeId,
    /// The links to fuse, ordered from source to destination. Empty only
    /// for the trivial `s == t` request.
    pub links: Vec<LinkId>,
    /// The intermediate nodes where swaps occur; one fewer than `links`.
    pub via: Vec<NodeId>,
    /// Which scheme produced the path.
    pub scheme: SchemeKind,
}

/// How a swap-chain execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapOutcome {
    /// Every swap succeeded; an end-to-end link was delivered.
    Delivered,
    /// A swap failed at this node; links beyond it were left untouched.
    SwapFailed {
        /// The node whose swap failed.
        at: NodeId,
    },
    /// A path link died between search and execution; nothing was consumed.
    Stale {
        /// The first dead link found.
        dead: LinkId,
    },
}

/// The links an execution consumed and what it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapReport {
    /// How the execution ended.
    pub outcome: SwapOutcome,
    /// Every link fed into a swap (originals and intermediates alike).
    pub consumed: Vec<LinkId>,
    /// The delivered end-to-end link, when the outcome is `Delivered` and
    /// the path was non-empty.
    pub delivered: Option<LinkId>,
}

impl SwapReport {
    /// Whether the request was satisfied.
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, SwapOutcome::Delivered)
    }
}

/// The node sequence `[v, parent(v), …, root]` with the link toward each
/// node's parent, or `None` when `v` is not attached.
fn chain_with_links(tree: &Tree, v: NodeId) -> Option<Vec<(NodeId, Option<LinkId>)>> {
    if !tree.is_attached(v) {
        return None;
    }
    let mut out = Vec::new();
    let mut cur = v;
    loop {
        match tree.state(cur).and_then(|s| s.parent()) {
            Some((p, l)) => {
                out.push((cur, Some(l)));
                cur = p;
            }
            None => {
                out.push((cur, None));
                return Some(out);
            }
        }
    }
}

fn all_live(links: &LinkLayerState, ids: &[LinkId]) -> bool {
    ids.iter().all(|&l| links.get(l).is_some())
}

fn assemble(
    s: NodeId,
    t: NodeId,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
    scheme: SchemeKind,
) -> ForestPath {
    debug_assert_eq!(nodes.len(), links.len() + 1);
    debug_assert_eq!(nodes.first(), Some(&s));
    debug_assert_eq!(nodes.last(), Some(&t));
    let via = nodes[1..nodes.len().saturating_sub(1)].to_vec();
    ForestPath {
        s,
        t,
        links,
        via,
        scheme,
    }
}

/// Finds the path between two members of one tree: up the parent chains,
/// truncated at the lowest common ancestor (the first node the chains
/// share). With `via_root_strict`, truncation is disabled and only pairs
/// whose chains meet exactly at the root are routable — anything else
/// would have to traverse a link twice.
pub fn find_path_single(
    tree: &Tree,
    links: &LinkLayerState,
    s: NodeId,
    t: NodeId,
    via_root_strict: bool,
) -> Option<ForestPath> {
    if !tree.is_attached(s) || !tree.is_attached(t) {
        return None;
    }
    if s == t {
        return Some(ForestPath {
            s,
            t,
            links: Vec::new(),
            via: Vec::new(),
            scheme: SchemeKind::SingleTree,
        });
    }
    let cs = chain_with_links(tree, s)?;
    let ct = chain_with_links(tree, t)?;
    let pos_in_ct: BTreeMap<NodeId, usize> =
        ct.iter().enumerate().map(|(i, &(v, _))| (v, i)).collect();
    let (i, j) = cs
        .iter()
        .enumerate()
        .find_map(|(i, &(v, _))| pos_in_ct.get(&v).map(|&j| (i, j)))?;
    let meet = cs[i].0;
    if via_root_strict && Some(meet) != tree.root() {
        return None;
    }
    let mut nodes: Vec<NodeId> = cs[..=i].iter().map(|&(v, _)| v).collect();
    let mut path_links: Vec<LinkId> = cs[..i].iter().map(|&(_, l)| l.unwrap()).collect();
    for k in (0..j).rev() {
        nodes.push(ct[k].0);
        path_links.push(ct[k].1.unwrap());
    }
    if !all_live(links, &path_links) {
        return None;
    }
    Some(assemble(s, t, nodes, path_links, SchemeKind::SingleTree))
}

/// Breadth-first closure of a node under "step to any parent in any tree
/// I'm attached in". Returns each reached node's hop distance and the
/// (toward-start node, link) it was discovered through.
type Closure = BTreeMap<NodeId, (u32, Option<(NodeId, LinkId)>)>;

fn ancestor_closure(forest: &ForestState, start: NodeId) -> Closure {
    let mut out: Closure = BTreeMap::from([(start, (0, None))]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = out[&v].0;
        for tree in forest.trees() {
            if tree.attached_rank(v).is_none() {
                continue;
            }
            if let Some((p, l)) = tree.state(v).and_then(|st| st.parent()) {
                out.entry(p).or_insert_with(|| {
                    queue.push_back(p);
                    (d + 1, Some((v, l)))
                });
            }
        }
    }
    out
}

/// Walks a closure's discovery edges from `node` back to the closure's
/// start, yielding the node sequence and links in walk order.
fn unwind(closure: &Closure, node: NodeId) -> (Vec<NodeId>, Vec<LinkId>) {
    let mut nodes = vec![node];
    let mut links = Vec::new();
    let mut cur = node;
    while let (_, Some((w, l))) = closure[&cur] {
        nodes.push(w);
        links.push(l);
        cur = w;
    }
    (nodes, links)
}

/// The forest's routable adjacency: tree edges whose two ends are both
/// attached, keyed by node, each list ascending.
fn tree_edge_adjacency(forest: &ForestState) -> BTreeMap<NodeId, Vec<(NodeId, LinkId)>> {
    let mut adj: BTreeMap<NodeId, Vec<(NodeId, LinkId)>> = BTreeMap::new();
    for tree in forest.trees() {
        for edge in tree.tree_edges() {
            if tree.is_attached(edge.parent) && tree.is_attached(edge.child) {
                adj.entry(edge.parent).or_default().push((edge.child, edge.link));
                adj.entry(edge.child).or_default().push((edge.parent, edge.link));
            }
        }
    }
    for list in adj.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Finds a path between two nodes across the whole forest. Phase 1 looks
/// for a node shared by the endpoints' ancestor closures (preferring the
/// closest, ties to the lower node id) and joins the two up-paths there.
/// If the closures are disjoint, phase 2 runs an undirected breadth-first
/// search over all attached tree edges — descending through cross-tree
/// junctions where needed — and returns the lexicographically smallest
/// shortest path.
pub fn find_path_multi(
    forest: &ForestState,
    links: &LinkLayerState,
    s: NodeId,
    t: NodeId,
) -> Option<ForestPath> {
    let s_attached = !forest.attached_memberships(s).is_empty();
    let t_attached = !forest.attached_memberships(t).is_empty();
    if !s_attached || !t_attached {
        return None;
    }
    if s == t {
        return Some(ForestPath {
            s,
            t,
            links: Vec::new(),
            via: Vec::new(),
            scheme: SchemeKind::MultiTree,
        });
    }

    let from_s = ancestor_closure(forest, s);
    let from_t = ancestor_closure(forest, t);
    let common = from_s
        .iter()
        .filter_map(|(&v, &(ds, _))| from_t.get(&v).map(|&(dt, _)| (ds + dt, v)))
        .min();
    if let Some((_, c)) = common {
        let (up_nodes, up_links) = unwind(&from_s, c);
        let (down_nodes, down_links) = unwind(&from_t, c);
        // up: c..s (walk order) — reverse to s..c; down: c..t as walked.
        let mut nodes: Vec<NodeId> = up_nodes.into_iter().rev().collect();
        let mut path_links: Vec<LinkId> = up_links.into_iter().rev().collect();
        nodes.extend(down_nodes.into_iter().skip(1));
        path_links.extend(down_links);
        if !all_live(links, &path_links) {
            return None;
        }
        return Some(assemble(s, t, nodes, path_links, SchemeKind::MultiTree));
    }

    // Phase 2: widen to the full tree-edge graph.
    let adj = tree_edge_adjacency(forest);
    let mut dist: BTreeMap<NodeId, u32> = BTreeMap::from([(t, 0)]);
    let mut queue = VecDeque::from([t]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for &(w, _) in adj.get(&v).into_iter().flatten() {
            dist.entry(w).or_insert_with(|| {
                queue.push_back(w);
                d + 1
            });
        }
    }
    let mut d = *dist.get(&s)?;
    // March toward t, always taking the lowest-numbered neighbor on a
    // shortest path: this realizes the lexicographically smallest one.
    let mut nodes = vec![s];
    let mut path_links = Vec::new();
    let mut cur = s;
    while cur != t {
        let (w, l) = adj[&cur]
            .iter()
            .copied()
            .find(|&(w, _)| dist.get(&w) == Some(&(d - 1)))
            .expect("distance map guarantees a descending neighbor");
        nodes.push(w);
        path_links.push(l);
        cur = w;
        d -= 1;
    }
    if !all_live(links, &path_links) {
        return None;
    }
    Some(assemble(s, t, nodes, path_links, SchemeKind::MultiTree))
}

/// Verifies the path chain invariants against the live link set; an empty
/// result means the path is sound.
pub fn audit_path(path: &ForestPath, links: &LinkLayerState) -> Vec<String> {
    let mut problems = Vec::new();
    if path.links.is_empty() {
        if path.s != path.t {
            problems.push("empty link list on a non-trivial request".into());
        }
        if !path.via.is_empty() {
            problems.push("via nodes without links".into());
        }
        return problems;
    }
    if path.via.len() + 1 != path.links.len() {
        problems.push(format!(
            "expected {} via nodes, found {}",
            path.links.len() - 1,
            path.via.len()
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut cur = path.s;
    for (i, &id) in path.links.iter().enumerate() {
        if !seen.insert(id) {
            problems.push(format!("link {id} appears twice"));
        }
        let Some(link) = links.get(id) else {
            problems.push(format!("link {id} is not live"));
            return problems;
        };
        if !link.touches(cur) {
            problems.push(format!("link {id} does not touch node {cur}"));
            return problems;
        }
        cur = link.other(cur);
        if i < path.links.len() - 1 {
            if path.via.get(i) != Some(&cur) {
                problems.push(format!("via[{i}] does not match chain node {cur}"));
            }
        } else if cur != path.t {
            problems.push(format!("chain ends at {cur}, not {}", path.t));
        }
    }
    problems
}

/// Fuses a path's links into one end-to-end link by swapping sequentially
/// at each via node. Any dead link found up front aborts with a distinct
/// stale outcome and consumes nothing; a failed swap stops the chain,
/// leaving the links beyond it untouched.
pub fn execute_swaps(
    links: &mut LinkLayerState,
    path: &ForestPath,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<SwapReport, EntanglementError> {
    for &id in &path.links {
        if links.get(id).is_none() {
            return Ok(SwapReport {
                outcome: SwapOutcome::Stale { dead: id },
                consumed: Vec::new(),
                delivered: None,
            });
        }
    }
    let Some((&first, rest)) = path.links.split_first() else {
        return Ok(SwapReport {
            outcome: SwapOutcome::Delivered,
            consumed: Vec::new(),
            delivered: None,
        });
    };
    let mut consumed = Vec::new();
    let mut cur = first;
    for (i, &next) in rest.iter().enumerate() {
        let at = path.via[i];
        let result = links.swap(at, cur, next, params, rng)?;
        consumed.push(cur);
        consumed.push(next);
        match result {
            SwapResult::Fused(link) => cur = link.id,
            SwapResult::Lost => {
                return Ok(SwapReport {
                    outcome: SwapOutcome::SwapFailed { at },
                    consumed,
                    delivered: None,
                });
            }
        }
    }
    Ok(SwapReport {
        outcome: SwapOutcome::Delivered,
        consumed,
        delivered: Some(cur),
    })
}

/// One slot of the synchronous two-phase baseline. External phase: every
/// physical edge generates a link with probability `p`. Internal phase:
/// in ascending id order, every node other than the endpoints greedily
/// swaps its best source-side link with its best destination-side link
/// (judged by precomputed graph distances), sweeping until no node can
/// act. The slot succeeds if an `s`–`t` link exists at the end; all links
/// are then discarded.
pub fn sync_round(
    topo: &PhysicalTopology,
    params: &SimParams,
    s: NodeId,
    t: NodeId,
    rng: &mut ChaCha8Rng,
) -> bool {
    debug_assert_ne!(s, t);
    let mut links = LinkLayerState::new(topo.edge_count());
    // The slot is self-contained, so the coherence budget is irrelevant;
    // reuse the caller's p and q only.
    let slot_params = SimParams {
        t_co: u32::MAX,
        ..*params
    };
    links.generate_all(topo, &slot_params, rng);
    let dist_s = topo.bfs_distances(s);
    let dist_t = topo.bfs_distances(t);

    loop {
        let mut acted = false;
        for v in 0..topo.node_count() {
            if v == s || v == t {
                continue;
            }
            let held: Vec<(LinkId, NodeId)> = links
                .iter()
                .filter(|l| l.touches(v))
                .map(|l| (l.id, l.other(v)))
                .collect();
            let toward = |table: &[Option<u32>], outer: NodeId| -> Option<u32> {
                // Strictly closer to the target than v itself.
                match (table[outer as usize], table[v as usize]) {
                    (Some(o), Some(own)) if o < own => Some(o),
                    _ => None,
                }
            };
            let best_s = held
                .iter()
                .filter_map(|&(id, outer)| toward(&dist_s, outer).map(|d| (d, outer, id)))
                .min();
            let Some((_, s_outer, s_link)) = best_s else {
                continue;
            };
            let best_t = held
                .iter()
                .filter(|&&(id, outer)| id != s_link && outer != s_outer)
                .filter_map(|&(id, outer)| toward(&dist_t, outer).map(|d| (d, outer, id)))
                .min();
            let Some((_, _, t_link)) = best_t else {
                continue;
            };
            links
                .swap(v, s_link, t_link, &slot_params, rng)
                .expect("both links live and distinct at node v");
            acted = true;
        }
        if !acted {
            break;
        }
    }
    let (lo, hi) = (s.min(t), s.max(t));
    let delivered = links.iter().any(|l| (l.a, l.b) == (lo, hi));
    delivered
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestState;
    use crate::rng::{stream, StreamKind};
    use crate::types::TreeId;

    fn rng(seed: u64) -> ChaCha8Rng {
        stream(seed, StreamKind::Swaps, None, 0)
    }

    /// A link layer holding one fresh link per physical edge; link id k
    /// sits on edge k.
    fn saturated(topo: &PhysicalTopology, t_co: u32) -> LinkLayerState {
        let params = SimParams::new(1.0, 1.0, t_co).unwrap();
        let mut links = LinkLayerState::new(topo.edge_count());
        links.generate_all(topo, &params, &mut rng(0));
        links
    }

    /// Root 0 with branches 0-1-2 and 0-3-4 over matching live links.
    fn y_tree() -> (PhysicalTopology, LinkLayerState, Tree) {
        let topo =
            PhysicalTopology::from_edges("y", 5, [(0, 1), (1, 2), (0, 3), (3, 4)]).unwrap();
        // Sorted edges: (0,1)=l0, (0,3)=l1, (1,2)=l2, (3,4)=l3.
        let links = saturated(&topo, 10);
        let mut tree = Tree::new(TreeId(0));
        tree.init_root(0).unwrap();
        tree.admit(1, 0, LinkId(0)).unwrap();
        tree.admit(3, 0, LinkId(1)).unwrap();
        tree.admit(2, 1, LinkId(2)).unwrap();
        tree.admit(4, 3, LinkId(3)).unwrap();
        (topo, links, tree)
    }

    #[test]
    fn single_tree_chain_to_root() {
        let (_, links, tree) = y_tree();
        let path = find_path_single(&tree, &links, 2, 0, false).unwrap();
        assert_eq!(path.links, vec![LinkId(2), LinkId(0)]);
        assert_eq!(path.via, vec![1]);
        assert!(audit_path(&path, &links).is_empty());
    }

    #[test]
    fn sibling_branches_route_through_the_root() {
        let (_, links, tree) = y_tree();
        let path = find_path_single(&tree, &links, 2, 4, false).unwrap();
        assert_eq!(path.via, vec![1, 0, 3]);
        assert_eq!(
            path.links,
            vec![LinkId(2), LinkId(0), LinkId(1), LinkId(3)]
        );
        assert!(audit_path(&path, &links).is_empty());
    }

    #[test]
    fn truncation_stops_at_the_first_shared_node() {
        let (_, links, tree) = y_tree();
        // 2 and 1 share the chain at 1 itself: one hop, no via.
        let path = find_path_single(&tree, &links, 2, 1, false).unwrap();
        assert_eq!(path.links, vec![LinkId(2)]);
        assert!(path.via.is_empty());
        // Strict mode refuses anything not meeting at the root…
        assert!(find_path_single(&tree, &links, 2, 1, true).is_none());
        // …but still allows genuine through-root pairs.
        assert!(find_path_single(&tree, &links, 2, 4, true).is_some());
    }

    #[test]
    fn unattached_endpoints_have_no_path() {
        let (_, links, tree) = y_tree();
        assert!(find_path_single(&tree, &links, 2, 9, false).is_none());
        let trivial = find_path_single(&tree, &links, 2, 2, false).unwrap();
        assert!(trivial.links.is_empty());
        assert!(audit_path(&trivial, &links).is_empty());
    }

    /// Two single-root trees on a 5-node path with every link live, after
    /// one maintenance and one negotiation round: node 2 ends up in both
    /// trees (rank 2 in each), joined to 3 by the adoption edge.
    fn two_tree_path() -> (PhysicalTopology, LinkLayerState, ForestState) {
        let topo = PhysicalTopology::gen_grid(1, 5).unwrap();
        let links = saturated(&topo, 10);
        let mut forest = ForestState::new(&[0, 4]).unwrap();
        forest.maintenance_round(&links, false);
        forest.negotiation_round(&links);
        assert!(forest.audit(&links).is_empty());
        (topo, links, forest)
    }

    #[test]
    fn junction_node_bridges_the_trees() {
        let (_, links, forest) = two_tree_path();
        // No shared ancestor for the two roots: phase 2 walks 0-1-2-3-4.
        let path = find_path_multi(&forest, &links, 0, 4).unwrap();
        assert_eq!(path.via, vec![1, 2, 3]);
        assert_eq!(
            path.links,
            vec![LinkId(0), LinkId(1), LinkId(2), LinkId(3)]
        );
        assert!(audit_path(&path, &links).is_empty());
    }

    #[test]
    fn shared_member_is_a_phase_one_ancestor() {
        let (_, links, forest) = two_tree_path();
        // 2 is attached in both trees, so 2 -> 4 resolves in phase 1
        // through 2's tree-1 ancestors.
        let path = find_path_multi(&forest, &links, 2, 4).unwrap();
        assert_eq!(path.via, vec![3]);
        assert_eq!(path.links, vec![LinkId(2), LinkId(3)]);
        assert!(audit_path(&path, &links).is_empty());
    }

    #[test]
    fn multi_tree_matches_single_tree_on_a_one_tree_forest() {
        let topo = PhysicalTopology::gen_grid(1, 6).unwrap();
        let links = saturated(&topo, 10);
        let mut forest = ForestState::new(&[2]).unwrap();
        forest.maintenance_round(&links, false);
        for s in 0..6 {
            for t in 0..6 {
                let single =
                    find_path_single(forest.tree(TreeId(0)), &links, s, t, false);
                let multi = find_path_multi(&forest, &links, s, t);
                assert_eq!(
                    single.as_ref().map(|p| (&p.links, &p.via)),
                    multi.as_ref().map(|p| (&p.links, &p.via)),
                    "disagreement at ({s}, {t})"
                );
            }
        }
    }

    #[test]
    fn swap_chain_success_frequency_matches_q_squared() {
        // Path of 3 links (2 swaps) at q = 0.8: success rate must sit at
        // 0.64 within a tight Monte Carlo band.
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let params = SimParams::new(1.0, 0.8, 10).unwrap();
        let base = saturated(&topo, 10);
        let path = ForestPath {
            s: 0,
            t: 3,
            links: vec![LinkId(0), LinkId(1), LinkId(2)],
            via: vec![1, 2],
            scheme: SchemeKind::SingleTree,
        };
        let mut r = rng(99);
        let trials = 100_000;
        let mut hits = 0;
        for _ in 0..trials {
            let mut links = base.clone();
            let report = execute_swaps(&mut links, &path, &params, &mut r).unwrap();
            if report.succeeded() {
                hits += 1;
                assert_eq!(report.consumed.len(), 4);
                let delivered = links.get(report.delivered.unwrap()).unwrap();
                assert_eq!((delivered.a, delivered.b), (0, 3));
                assert_eq!(delivered.hop_span, 3);
            }
        }
        let freq = hits as f64 / trials as f64;
        // Three-sigma band around 0.64 at 1e5 trials: roughly ±0.0046.
        assert!((0.635..=0.645).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn failed_swap_conserves_the_tail() {
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let params = SimParams::new(1.0, 0.0, 10).unwrap();
        let mut links = saturated(&topo, 10);
        let path = ForestPath {
            s: 0,
            t: 3,
            links: vec![LinkId(0), LinkId(1), LinkId(2)],
            via: vec![1, 2],
            scheme: SchemeKind::SingleTree,
        };
        let report = execute_swaps(&mut links, &path, &params, &mut rng(1)).unwrap();
        assert_eq!(report.outcome, SwapOutcome::SwapFailed { at: 1 });
        assert_eq!(report.consumed, vec![LinkId(0), LinkId(1)]);
        assert_eq!(report.delivered, None);
        // The last link was never touched.
        assert!(links.get(LinkId(2)).is_some());
        assert_eq!(links.len(), 1);
    }

    #[test]
    fn stale_paths_consume_nothing() {
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let params = SimParams::new(1.0, 1.0, 10).unwrap();
        let mut links = saturated(&topo, 10);
        links.remove(LinkId(1));
        let path = ForestPath {
            s: 0,
            t: 3,
            links: vec![LinkId(0), LinkId(1), LinkId(2)],
            via: vec![1, 2],
            scheme: SchemeKind::MultiTree,
        };
        let report = execute_swaps(&mut links, &path, &params, &mut rng(1)).unwrap();
        assert_eq!(report.outcome, SwapOutcome::Stale { dead: LinkId(1) });
        assert!(report.consumed.is_empty());
        assert_eq!(links.len(), 2);
    }

    #[test]
    fn single_link_paths_need_no_swap() {
        let topo = PhysicalTopology::gen_grid(1, 2).unwrap();
        let params = SimParams::new(1.0, 0.0, 10).unwrap(); // q = 0 irrelevant
        let mut links = saturated(&topo, 10);
        let path = ForestPath {
            s: 0,
            t: 1,
            links: vec![LinkId(0)],
            via: vec![],
            scheme: SchemeKind::SingleTree,
        };
        let report = execute_swaps(&mut links, &path, &params, &mut rng(1)).unwrap();
        assert!(report.succeeded());
        assert_eq!(report.delivered, Some(LinkId(0)));
        assert!(report.consumed.is_empty());
    }

    #[test]
    fn sync_round_single_edge_matches_p() {
        let topo = PhysicalTopology::gen_grid(1, 2).unwrap();
        let params = SimParams::new(0.8, 0.8, 1).unwrap();
        let mut r = rng(5);
        let slots = 20_000;
        let hits = (0..slots)
            .filter(|_| sync_round(&topo, &params, 0, 1, &mut r))
            .count();
        let freq = hits as f64 / slots as f64;
        assert!((0.79..=0.81).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sync_round_chain_matches_p_squared_q() {
        let topo = PhysicalTopology::gen_grid(1, 3).unwrap();
        let params = SimParams::new(0.8, 0.8, 1).unwrap();
        let mut r = rng(6);
        let slots = 20_000;
        let hits = (0..slots)
            .filter(|_| sync_round(&topo, &params, 0, 2, &mut r))
            .count();
        let freq = hits as f64 / slots as f64;
        // p²q = 0.512; three sigma at 2e4 slots ≈ ±0.0106.
        assert!((0.5014..=0.5226).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sync_round_merged_links_keep_swapping_within_the_slot() {
        // p = q = 1 on a 6-node chain: the greedy internal phase must fuse
        // all five links in one slot regardless of sweep count.
        let topo = PhysicalTopology::gen_grid(1, 6).unwrap();
        let params = SimParams::new(1.0, 1.0, 1).unwrap();
        let mut r = rng(7);
        assert!(sync_round(&topo, &params, 0, 5, &mut r));
    }

    #[test]
    fn path_audit_flags_inconsistencies() {
        let topo = PhysicalTopology::gen_grid(1, 4).unwrap();
        let links = saturated(&topo, 10);
        let broken = ForestPath {
            s: 0,
            t: 3,
            links: vec![LinkId(0), LinkId(2)], // gap: skips link 1
            via: vec![1],
            scheme: SchemeKind::MultiTree,
        };
        assert!(!audit_path(&broken, &links).is_empty());
    }
}
