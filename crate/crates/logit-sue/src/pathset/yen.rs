//! K-shortest loopless paths for one origin/destination pair.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::network::Network;

use super::shortest::{path_cost, path_nodes, sssp, tree_path, validate_costs};

struct Candidate {
    cost: f64,
    nodes: Vec<usize>,
    links: Vec<u32>,
}

// Candidates never carry NaN costs (validated up front), so the comparison is
// total. Equal-cost candidates order lexicographically by node sequence; the
// link sequence breaks the remaining tie between parallel links.
fn candidate_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.cost
        .partial_cmp(&b.cost)
        .unwrap()
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| a.links.cmp(&b.links))
}

/// Up to `k` cheapest loopless paths from `origin` to `destination` under
/// fixed link costs, cheapest first. Returns fewer than `k` when the network
/// holds fewer loopless paths, and `NoPath` when it holds none.
pub fn yen_k_shortest(
    net: &Network,
    costs: &[f64],
    origin: usize,
    destination: usize,
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    validate_costs(net, costs)?;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if origin == destination {
        return Err(Error::Invalid(format!(
            "origin and destination are both node {}",
            origin + 1
        )));
    }

    let tree = sssp(net, costs, origin, &[], &[], Some(destination));
    let first = tree_path(net, &tree, origin, destination).ok_or(Error::NoPath {
        origin: origin + 1,
        destination: destination + 1,
    })?;

    let mut accepted: Vec<Candidate> = vec![Candidate {
        cost: path_cost(costs, &first),
        nodes: path_nodes(net, &first),
        links: first,
    }];
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    seen.insert(accepted[0].links.clone());

    let mut pool: Vec<Candidate> = Vec::new();
    let mut banned_links = vec![false; net.n_links()];
    let mut banned_nodes = vec![false; net.n_nodes];

    while accepted.len() < k {
        let prev = accepted.last().unwrap();
        let prev_links = prev.links.clone();
        let prev_nodes = prev.nodes.clone();

        for spur_idx in 0..prev_nodes.len() - 1 {
            let spur_node = prev_nodes[spur_idx];
            let root = &prev_links[..spur_idx];

            // Paths that share the root must not be rediscovered: drop the
            // link each of them takes out of the spur node.
            for p in &accepted {
                if p.links.len() > spur_idx && p.links[..spur_idx] == *root {
                    banned_links[p.links[spur_idx] as usize] = true;
                }
            }
            // The root's interior nodes are off limits, which keeps every
            // candidate loopless.
            for &node in &prev_nodes[..spur_idx] {
                banned_nodes[node] = true;
            }

            let spur_tree = sssp(net, costs, spur_node, &banned_links, &banned_nodes, Some(destination));
            if let Some(spur_links) = tree_path(net, &spur_tree, spur_node, destination) {
                let mut links = root.to_vec();
                links.extend_from_slice(&spur_links);
                if !seen.contains(&links) {
                    seen.insert(links.clone());
                    pool.push(Candidate {
                        cost: path_cost(costs, &links),
                        nodes: path_nodes(net, &links),
                        links,
                    });
                }
            }

            for p in &accepted {
                if p.links.len() > spur_idx && p.links[..spur_idx] == *root {
                    banned_links[p.links[spur_idx] as usize] = false;
                }
            }
            for &node in &prev_nodes[..spur_idx] {
                banned_nodes[node] = false;
            }
        }

        if pool.is_empty() {
            break;
        }
        let best = pool
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| candidate_order(a, b))
            .map(|(i, _)| i)
            .unwrap();
        accepted.push(pool.swap_remove(best));
    }

    Ok(accepted.into_iter().map(|c| c.links).collect())
}
