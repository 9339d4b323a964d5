//! Route sets: generation, the link/path incidence matrix, diversity
//! metrics, and a plain-text interchange format.
//!
//! A path set is grouped by OD pair in the order of the demand table, and is
//! frozen once built: every solver indexes flow vectors against it, so it is
//! never mutated afterwards.

mod penalty;
mod shortest;
mod yen;

pub use penalty::{penalty_paths, OriginPaths};
pub use yen::yen_k_shortest;

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DemandTable, Network};

pub(crate) use shortest::path_nodes;

/// Loopless routes grouped by OD pair. Paths are stored as link-id
/// sequences; a path's identity is its link sequence, so parallel links give
/// distinct paths even though they share a node sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    /// Path range of OD block `r` is `od_offsets[r]..od_offsets[r + 1]`.
    od_offsets: Vec<usize>,
    /// Link range of path `i` is `path_ptr[i]..path_ptr[i + 1]`.
    path_ptr: Vec<usize>,
    path_links: Vec<u32>,
}

impl PathSet {
    /// Build from per-OD path lists. Every OD must have at least one path
    /// and no duplicate link sequence within its block.
    pub fn from_paths(per_od: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        let mut od_offsets = Vec::with_capacity(per_od.len() + 1);
        let mut path_ptr = vec![0usize];
        let mut path_links = Vec::new();
        od_offsets.push(0);
        for (r, paths) in per_od.iter().enumerate() {
            if paths.is_empty() {
                return Err(Error::Invalid(format!("OD block {r} has no paths")));
            }
            let mut seen = HashSet::with_capacity(paths.len());
            for p in paths {
                if p.is_empty() {
                    return Err(Error::Invalid(format!("empty path in OD block {r}")));
                }
                if !seen.insert(p.as_slice()) {
                    return Err(Error::Invalid(format!(
                        "duplicate path {p:?} in OD block {r}"
                    )));
                }
                path_links.extend_from_slice(p);
                path_ptr.push(path_links.len());
            }
            od_offsets.push(path_ptr.len() - 1);
        }
        Ok(PathSet {
            od_offsets,
            path_ptr,
            path_links,
        })
    }

    pub fn n_ods(&self) -> usize {
        self.od_offsets.len() - 1
    }

    pub fn n_paths(&self) -> usize {
        self.path_ptr.len() - 1
    }

    pub fn od_offsets(&self) -> &[usize] {
        &self.od_offsets
    }

    pub fn od_range(&self, r: usize) -> std::ops::Range<usize> {
        self.od_offsets[r]..self.od_offsets[r + 1]
    }

    pub fn links_of(&self, path: usize) -> &[u32] {
        &self.path_links[self.path_ptr[path]..self.path_ptr[path + 1]]
    }

    /// OD block index of a path.
    pub fn od_of(&self, path: usize) -> usize {
        match self.od_offsets.binary_search(&path) {
            // An offset value can repeat only for empty blocks, which the
            // constructor rejects, so the partition point is unambiguous.
            Ok(r) => r,
            Err(r) => r - 1,
        }
    }

    /// Check structural agreement with a network and demand table: blocks
    /// align one-to-one with OD pairs, every path is a contiguous loopless
    /// walk from its origin to its destination.
    pub fn validate(&self, net: &Network, demand: &DemandTable) -> Result<()> {
        if self.n_ods() != demand.n_pairs() {
            return Err(Error::Invalid(format!(
                "path set has {} OD blocks for {} demand pairs",
                self.n_ods(),
                demand.n_pairs()
            )));
        }
        for &l in &self.path_links {
            if (l as usize) >= net.n_links() {
                return Err(Error::Invalid(format!("path references link {l} beyond network")));
            }
        }
        for (r, pair) in demand.pairs.iter().enumerate() {
            for i in self.od_range(r) {
                let links = self.links_of(i);
                let nodes = path_nodes(net, links);
                if nodes.first() != Some(&pair.origin) || nodes.last() != Some(&pair.destination) {
                    return Err(Error::Invalid(format!(
                        "path {i} does not connect origin {} to destination {}",
                        pair.origin + 1,
                        pair.destination + 1
                    )));
                }
                for w in links.windows(2) {
                    if net.links[w[0] as usize].head != net.links[w[1] as usize].tail {
                        return Err(Error::Invalid(format!("path {i} is not contiguous")));
                    }
                }
                let mut sorted = nodes.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != nodes.len() {
                    return Err(Error::Invalid(format!("path {i} revisits a node")));
                }
            }
        }
        Ok(())
    }

    /// Serialize as one line per path: `od_index origin destination :
    /// link,link,...` with 1-based node ids and 0-based link ids.
    pub fn to_text(&self, demand: &DemandTable) -> String {
        assert_eq!(self.n_ods(), demand.n_pairs(), "path set / demand mismatch");
        let mut out = String::new();
        for (r, pair) in demand.pairs.iter().enumerate() {
            for i in self.od_range(r) {
                let _ = write!(out, "{} {} {} : ", r, pair.origin + 1, pair.destination + 1);
                let links = self.links_of(i);
                for (j, l) in links.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{l}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parse the text form back, checking block structure against the demand
    /// table it will be used with.
    pub fn from_text(text: &str, demand: &DemandTable) -> Result<Self> {
        let mut per_od: Vec<Vec<Vec<u32>>> = vec![Vec::new(); demand.n_pairs()];
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::parse("paths", idx + 1, msg);
            let (head, tail) = line
                .split_once(':')
                .ok_or_else(|| err("expected `od origin destination : links`".into()))?;
            let fields: Vec<&str> = head.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 header fields, got {}", fields.len())));
            }
            let r: usize = fields[0].parse().map_err(|_| err(format!("bad OD index {:?}", fields[0])))?;
            if r >= demand.n_pairs() {
                return Err(err(format!("OD index {r} beyond demand table")));
            }
            let origin: usize = fields[1].parse().map_err(|_| err(format!("bad origin {:?}", fields[1])))?;
            let dest: usize = fields[2].parse().map_err(|_| err(format!("bad destination {:?}", fields[2])))?;
            let pair = &demand.pairs[r];
            if origin != pair.origin + 1 || dest != pair.destination + 1 {
                return Err(err(format!(
                    "OD {r} is {}->{} in the demand table, not {origin}->{dest}",
                    pair.origin + 1,
                    pair.destination + 1
                )));
            }
            let mut links = Vec::new();
            for tok in tail.trim().split(',') {
                let tok = tok.trim();
                if tok.is_empty() {
                    continue;
                }
                links.push(tok.parse::<u32>().map_err(|_| err(format!("bad link id {tok:?}")))?);
            }
            if links.is_empty() {
                return Err(err("path has no links".into()));
            }
            per_od[r].push(links);
        }
        PathSet::from_paths(per_od)
    }
}

/// Link/path incidence in both compressed orientations. Entry (l, i) is 1
/// when link l lies on path i. The two orientations are built from the same
/// path list and checked against each other in tests; kernels pick whichever
/// gathers contiguously.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    pub n_links: usize,
    pub n_paths: usize,
    /// Per-path link lists (column-compressed).
    pub col_ptr: Vec<usize>,
    pub col_links: Vec<u32>,
    /// Per-link path lists (row-compressed).
    pub row_ptr: Vec<usize>,
    pub row_paths: Vec<u32>,
}

impl IncidenceMatrix {
    pub fn from_path_set(ps: &PathSet, n_links: usize) -> Self {
        let n_paths = ps.n_paths();
        let col_ptr = ps.path_ptr.clone();
        let col_links = ps.path_links.clone();

        let mut counts = vec![0usize; n_links];
        for &l in &col_links {
            counts[l as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_links + 1);
        row_ptr.push(0);
        for c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let mut fill = row_ptr.clone();
        let mut row_paths = vec![0u32; col_links.len()];
        for i in 0..n_paths {
            for &l in &col_links[col_ptr[i]..col_ptr[i + 1]] {
                row_paths[fill[l as usize]] = i as u32;
                fill[l as usize] += 1;
            }
        }
        IncidenceMatrix {
            n_links,
            n_paths,
            col_ptr,
            col_links,
            row_ptr,
            row_paths,
        }
    }

    /// Link flows from path flows (the incidence matrix applied to `h`).
    pub fn link_flows(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.n_paths, "path vector length");
        let mut a = vec![0.0; self.n_links];
        for l in 0..self.n_links {
            let mut acc = 0.0;
            for &i in &self.row_paths[self.row_ptr[l]..self.row_ptr[l + 1]] {
                acc += h[i as usize];
            }
            a[l] = acc;
        }
        a
    }

    /// Per-path sums of a link quantity (the transpose applied to `t`), e.g.
    /// path costs from link costs.
    pub fn path_totals(&self, t: &[f64]) -> Vec<f64> {
        assert_eq!(t.len(), self.n_links, "link vector length");
        let mut c = vec![0.0; self.n_paths];
        for i in 0..self.n_paths {
            let mut acc = 0.0;
            for &l in &self.col_links[self.col_ptr[i]..self.col_ptr[i + 1]] {
                acc += t[l as usize];
            }
            c[i] = acc;
        }
        c
    }

    pub fn nnz(&self) -> usize {
        self.col_links.len()
    }
}

/// Route diversity statistics over a path set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PathSetMetrics {
    /// Mean over ODs of the coefficient of variation (population form) of
    /// free-flow path costs. Single-path ODs contribute zero.
    pub mean_cost_cv: f64,
    /// Mean over ODs of the mean pairwise Jaccard overlap of link sets.
    /// Single-path ODs contribute zero.
    pub mean_jaccard: f64,
}

pub fn path_set_metrics(ps: &PathSet, net: &Network) -> Result<PathSetMetrics> {
    if ps.n_ods() == 0 {
        return Err(Error::Metric("path set has no OD blocks".into()));
    }
    let t0 = net.free_flow_costs();
    let mut cv_sum = 0.0;
    let mut jac_sum = 0.0;
    for r in 0..ps.n_ods() {
        let range = ps.od_range(r);
        let m = range.len();
        if m < 2 {
            continue;
        }
        let costs: Vec<f64> = range
            .clone()
            .map(|i| ps.links_of(i).iter().map(|&l| t0[l as usize]).sum())
            .collect();
        let mean = costs.iter().sum::<f64>() / m as f64;
        if mean == 0.0 {
            return Err(Error::Metric(format!(
                "OD block {r} has zero mean free-flow cost"
            )));
        }
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / m as f64;
        cv_sum += var.sqrt() / mean;

        let sets: Vec<Vec<u32>> = range
            .clone()
            .map(|i| {
                let mut v = ps.links_of(i).to_vec();
                v.sort_unstable();
                v
            })
            .collect();
        let mut pair_sum = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                pair_sum += jaccard(&sets[i], &sets[j]);
            }
        }
        jac_sum += pair_sum / (m * (m - 1) / 2) as f64;
    }
    let n = ps.n_ods() as f64;
    Ok(PathSetMetrics {
        mean_cost_cv: cv_sum / n,
        mean_jaccard: jac_sum / n,
    })
}

fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Which generator produced a path set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Yen,
    Penalty,
}

impl std::str::FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yen" => Ok(Generator::Yen),
            "penalty" => Ok(Generator::Penalty),
            other => Err(Error::Invalid(format!(
                "unknown path generator {other:?} (expected yen or penalty)"
            ))),
        }
    }
}

/// Sidecar metadata written next to a serialized path set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSetMeta {
    pub generator: Generator,
    pub k: usize,
    /// Master seed for the penalty generator; absent for the deterministic
    /// generator.
    pub seed: Option<u64>,
    pub n_ods: usize,
    pub n_paths: usize,
    pub metrics: PathSetMetrics,
}

/// A generated path set together with the demand table it aligns to. The
/// penalty generator may drop unreachable OD pairs, in which case `demand`
/// is the filtered table.
pub struct GeneratedPathSet {
    pub paths: PathSet,
    pub demand: DemandTable,
    pub warnings: Vec<String>,
}

/// Generate up to `k` paths per OD pair at free-flow costs. Yen's generator
/// fails hard on a disconnected pair; the penalty generator drops the pair
/// with a warning. Per-origin penalty seeds are derived from `seed`, so the
/// result does not depend on scheduling.
pub fn generate_path_set(
    net: &Network,
    demand: &DemandTable,
    generator: Generator,
    k: usize,
    seed: u64,
) -> Result<GeneratedPathSet> {
    let costs = net.free_flow_costs();
    shortest::validate_costs(net, &costs)?;
    match generator {
        Generator::Yen => {
            let per_od: Vec<Vec<Vec<u32>>> = demand
                .pairs
                .par_iter()
                .map(|pair| yen_k_shortest(net, &costs, pair.origin, pair.destination, k))
                .collect::<Result<_>>()?;
            Ok(GeneratedPathSet {
                paths: PathSet::from_paths(per_od)?,
                demand: demand.clone(),
                warnings: Vec::new(),
            })
        }
        Generator::Penalty => {
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for pair in &demand.pairs {
                match groups.last_mut() {
                    Some((o, dests)) if *o == pair.origin => dests.push(pair.destination),
                    _ => groups.push((pair.origin, vec![pair.destination])),
                }
            }
            let results: Vec<OriginPaths> = groups
                .par_iter()
                .map(|(origin, dests)| {
                    penalty_paths(net, &costs, *origin, dests, k, mix_seed(seed, *origin))
                })
                .collect::<Result<_>>()?;

            let mut per_od = Vec::with_capacity(demand.n_pairs());
            let mut kept_pairs = Vec::with_capacity(demand.n_pairs());
            let mut warnings = Vec::new();
            let mut pair_iter = demand.pairs.iter();
            for ((_, dests), out) in groups.iter().zip(results) {
                warnings.extend(out.warnings);
                for (paths, _) in out.paths.into_iter().zip(dests) {
                    let pair = *pair_iter.next().expect("group/pair alignment");
                    if paths.is_empty() {
                        continue;
                    }
                    per_od.push(paths);
                    kept_pairs.push(pair);
                }
            }
            let mut demand = DemandTable::new(kept_pairs, demand.n_zones)?;
            demand.warnings = warnings.clone();
            Ok(GeneratedPathSet {
                paths: PathSet::from_paths(per_od)?,
                demand,
                warnings,
            })
        }
    }
}

/// SplitMix64 step, used to derive independent per-origin seeds from the
/// master seed.
fn mix_seed(seed: u64, origin: usize) -> u64 {
    let mut z = seed
        .wrapping_add((origin as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
