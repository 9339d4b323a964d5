//! Randomized penalty path generation, one origin at a time.
//!
//! Each round perturbs the cost of links on the most recently found path per
//! destination (each link independently with probability 1/2, cost times
//! 1.5), then reruns one shortest-path tree for the whole origin and keeps
//! any routes not seen before. Penalties accumulate across rounds within an
//! origin and reset between origins.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::Network;

use super::shortest::{sssp, tree_path, validate_costs};

pub(crate) const PENALTY_FACTOR: f64 = 1.5;
pub(crate) const PENALTY_PROB: f64 = 0.5;

/// Paths found for the destinations of one origin, aligned with the
/// `destinations` argument. A destination with no route at all yields an
/// empty list plus a warning; callers decide whether that is fatal.
pub struct OriginPaths {
    pub paths: Vec<Vec<Vec<u32>>>,
    pub warnings: Vec<String>,
}

/// Up to `k` unique loopless paths per destination from `origin`, found by
/// iterated random penalization of `base_costs`. Deterministic for a fixed
/// `seed`.
pub fn penalty_paths(
    net: &Network,
    base_costs: &[f64],
    origin: usize,
    destinations: &[usize],
    k: usize,
    seed: u64,
) -> Result<OriginPaths> {
    validate_costs(net, base_costs)?;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if destinations.iter().any(|&d| d == origin) {
        return Err(Error::Invalid(format!(
            "destination equals origin {}",
            origin + 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut costs = base_costs.to_vec();
    let mut paths: Vec<Vec<Vec<u32>>> = vec![Vec::new(); destinations.len()];
    let mut seen: Vec<HashSet<Vec<u32>>> = vec![HashSet::new(); destinations.len()];
    let mut warnings = Vec::new();

    let tree = sssp(net, &costs, origin, &[], &[], None);
    for (di, &dest) in destinations.iter().enumerate() {
        match tree_path(net, &tree, origin, dest) {
            Some(p) => {
                seen[di].insert(p.clone());
                paths[di].push(p);
            }
            None => warnings.push(format!(
                "no route from node {} to node {}; pair skipped",
                origin + 1,
                dest + 1
            )),
        }
    }

    for _round in 1..k {
        for di in 0..destinations.len() {
            let Some(last) = paths[di].last() else { continue };
            for &lid in last {
                if rng.random_bool(PENALTY_PROB) {
                    costs[lid as usize] *= PENALTY_FACTOR;
                }
            }
        }
        let tree = sssp(net, &costs, origin, &[], &[], None);
        let mut any_new = false;
        for (di, &dest) in destinations.iter().enumerate() {
            if paths[di].is_empty() {
                continue;
            }
            if let Some(p) = tree_path(net, &tree, origin, dest) {
                if !seen[di].contains(&p) {
                    seen[di].insert(p.clone());
                    paths[di].push(p);
                    any_new = true;
                }
            }
        }
        if !any_new {
            break;
        }
    }

    Ok(OriginPaths { paths, warnings })
}
