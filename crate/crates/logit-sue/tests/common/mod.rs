//! Builders shared by the integration suites: seeded random layered
//! networks with guaranteed OD connectivity, feasible flow samples, and
//! block-sum projections.

// Each integration binary compiles this module and uses its own subset.
#![allow(dead_code)]

use logit_sue::equilibrium::{Assignment, LogitParams};
use logit_sue::network::{DemandTable, Link, LinkCost, Network, OdPair};
use logit_sue::pathset::{generate_path_set, Generator};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct SmallCase {
    pub asg: Assignment,
}

fn random_cost(rng: &mut ChaCha8Rng) -> LinkCost {
    if rng.random_bool(0.2) {
        LinkCost::Affine {
            intercept: rng.random_range(1.0..5.0),
            slope: rng.random_range(0.05..0.5),
        }
    } else {
        LinkCost::Bpr {
            free_flow_time: rng.random_range(1.0..10.0),
            capacity: rng.random_range(2.0..20.0),
            alpha: rng.random_range(0.05..0.5),
            beta: if rng.random_bool(0.5) { 2.0 } else { 4.0 },
        }
    }
}

/// Random layered network: origin zones, two fully connected interior
/// layers, destination zones. Complete links between consecutive layers
/// keep every OD pair reachable through interior nodes only; extra skip and
/// backward links add route diversity without breaking that guarantee.
pub fn random_small_case(seed: u64, max_k: usize) -> SmallCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_orig = rng.random_range(1..=2usize);
    let n_dest = rng.random_range(1..=2usize);
    let w1 = rng.random_range(1..=3usize);
    let w2 = rng.random_range(1..=3usize);
    let n_zones = n_orig + n_dest;
    let n_nodes = n_zones + w1 + w2;
    let layer1: Vec<usize> = (n_zones..n_zones + w1).collect();
    let layer2: Vec<usize> = (n_zones + w1..n_nodes).collect();

    let mut links = Vec::new();
    let mut add = |rng: &mut ChaCha8Rng, tail: usize, head: usize| {
        links.push(Link {
            tail,
            head,
            cost: random_cost(rng),
            length: 0.0,
            speed: 0.0,
            toll: 0.0,
            link_type: 1,
        });
    };
    for o in 0..n_orig {
        for &m in &layer1 {
            add(&mut rng, o, m);
        }
    }
    for &a in &layer1 {
        for &b in &layer2 {
            add(&mut rng, a, b);
        }
    }
    for &m in &layer2 {
        for d in n_orig..n_zones {
            add(&mut rng, m, d);
        }
    }
    for o in 0..n_orig {
        for &b in &layer2 {
            if rng.random_bool(0.3) {
                add(&mut rng, o, b);
            }
        }
    }
    for &b in &layer2 {
        for &a in &layer1 {
            if rng.random_bool(0.2) {
                add(&mut rng, b, a);
            }
        }
    }
    // All zones are centroids: routes may start and end there but never
    // pass through one.
    let net = Network::new(n_nodes, n_zones, n_zones, links).expect("valid by construction");

    let mut pairs = Vec::new();
    for o in 0..n_orig {
        for d in n_orig..n_zones {
            if rng.random_bool(0.8) {
                pairs.push(OdPair {
                    origin: o,
                    destination: d,
                    demand: rng.random_range(1.0..10.0),
                });
            }
        }
    }
    if pairs.is_empty() {
        pairs.push(OdPair {
            origin: 0,
            destination: n_orig,
            demand: rng.random_range(1.0..10.0),
        });
    }
    let demand = DemandTable::new(pairs, n_zones).expect("valid by construction");

    let k = rng.random_range(2..=max_k.max(2));
    let generated =
        generate_path_set(&net, &demand, Generator::Yen, k, seed).expect("layers stay connected");
    let theta = rng.random_range(0.3..1.5);
    let asg = Assignment::new(
        net,
        generated.demand,
        generated.paths,
        LogitParams::new(theta).unwrap(),
    )
    .expect("generated paths validate");
    SmallCase { asg }
}

/// Strictly positive flows with exact per-block demand sums.
pub fn random_feasible_flows(asg: &Assignment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut h = vec![0.0; asg.n_paths()];
    for (r, &d) in asg.od_demands().iter().enumerate() {
        let range = asg.paths().od_range(r);
        let raw: Vec<f64> = range.clone().map(|_| rng.random_range(0.1..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        for (slot, u) in h[range].iter_mut().zip(raw) {
            *slot = d * u / sum;
        }
    }
    h
}

/// Removes the per-block mean, leaving a direction with zero sum inside
/// every OD block.
pub fn project_zero_block_sums(asg: &Assignment, v: &mut [f64]) {
    for r in 0..asg.paths().n_ods() {
        let range = asg.paths().od_range(r);
        let mean: f64 = v[range.clone()].iter().sum::<f64>() / range.len() as f64;
        for x in &mut v[range] {
            *x -= mean;
        }
    }
}
