//! Single-source shortest paths over per-link costs.
//!
//! Works on the multigraph directly: predecessors are link ids, so parallel
//! links stay distinguishable. Zone centroids (nodes below the network's
//! first-through node) may begin or end a path but are never expanded as
//! interior nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::network::Network;

pub(crate) const NO_PRED: u32 = u32::MAX;

/// Shortest-path tree from one origin. `dist` is `f64::INFINITY` and
/// `pred_link` is `NO_PRED` for unreachable nodes.
pub(crate) struct SsspTree {
    pub dist: Vec<f64>,
    pub pred_link: Vec<u32>,
}

struct QueueEntry {
    dist: f64,
    node: usize,
}

// Min-heap order on (dist, node). The node tie-break pins the pop order, and
// with it the tree, for equal-cost relaxation fronts.
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for QueueEntry {}

/// Dijkstra from `origin`. `banned_links`/`banned_nodes` are dense masks
/// honored when non-empty; `stop_at` ends the search once that node's label
/// is settled. Costs must be finite and nonnegative (checked by callers once
/// per generation run, not per search).
pub(crate) fn sssp(
    net: &Network,
    costs: &[f64],
    origin: usize,
    banned_links: &[bool],
    banned_nodes: &[bool],
    stop_at: Option<usize>,
) -> SsspTree {
    debug_assert_eq!(costs.len(), net.n_links());
    let n = net.n_nodes;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred_link = vec![NO_PRED; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(QueueEntry {
        dist: 0.0,
        node: origin,
    });

    while let Some(QueueEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if stop_at == Some(u) {
            break;
        }
        // Centroid rule: only the origin itself may be left once entered.
        if u != origin && u < net.first_thru_node {
            continue;
        }
        for &link_id in net.out_links(u) {
            let lid = link_id as usize;
            if !banned_links.is_empty() && banned_links[lid] {
                continue;
            }
            let link = &net.links[lid];
            let v = link.head;
            if !banned_nodes.is_empty() && banned_nodes[v] {
                continue;
            }
            let nd = d + costs[lid];
            if nd < dist[v] {
                dist[v] = nd;
                pred_link[v] = link_id;
                heap.push(QueueEntry { dist: nd, node: v });
            }
        }
    }
    SsspTree { dist, pred_link }
}

/// Link sequence from `origin` to `destination` in a tree, or `None` when
/// unreachable.
pub(crate) fn tree_path(net: &Network, tree: &SsspTree, origin: usize, destination: usize) -> Option<Vec<u32>> {
    if !tree.dist[destination].is_finite() {
        return None;
    }
    let mut links = Vec::new();
    let mut node = destination;
    while node != origin {
        let lid = tree.pred_link[node];
        debug_assert_ne!(lid, NO_PRED);
        links.push(lid);
        node = net.links[lid as usize].tail;
    }
    links.reverse();
    Some(links)
}

pub(crate) fn path_cost(costs: &[f64], links: &[u32]) -> f64 {
    links.iter().map(|&l| costs[l as usize]).sum()
}

/// Node sequence visited by a link sequence, starting at the first link's
/// tail.
pub(crate) fn path_nodes(net: &Network, links: &[u32]) -> Vec<usize> {
    let mut nodes = Vec::with_capacity(links.len() + 1);
    if let Some(&first) = links.first() {
        nodes.push(net.links[first as usize].tail);
    }
    for &l in links {
        nodes.push(net.links[l as usize].head);
    }
    nodes
}

/// Generation-time validation of a cost vector.
pub(crate) fn validate_costs(net: &Network, costs: &[f64]) -> Result<()> {
    if costs.len() != net.n_links() {
        return Err(Error::Invalid(format!(
            "cost vector has {} entries for {} links",
            costs.len(),
            net.n_links()
        )));
    }
    for (i, &c) in costs.iter().enumerate() {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::Invalid(format!(
                "link {i} has cost {c}; shortest-path costs must be finite and nonnegative"
            )));
        }
    }
    Ok(())
}
