//! Road network and trip table, read from TNTP-format text files.
//!
//! Node ids are 1-based in the files and 0-based everywhere in this crate.
//! Links are identified by their row index in the network file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Volume-delay function attached to one link.
///
/// The affine family exists for networks whose delays are honest linear
/// functions of flow; BPR cannot express `t(a) = a` because its free-flow
/// factor multiplies the whole expression. Affine links are marked in the
/// network file with link type 9: the free-flow-time column is read as the
/// intercept and the `b` column as the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkCost {
    Bpr {
        free_flow_time: f64,
        capacity: f64,
        alpha: f64,
        beta: f64,
    },
    Affine {
        intercept: f64,
        slope: f64,
    },
}

impl LinkCost {
    /// Travel time at link flow `flow >= 0`.
    pub fn value(&self, flow: f64) -> f64 {
        match *self {
            LinkCost::Bpr {
                free_flow_time,
                capacity,
                alpha,
                beta,
            } => free_flow_time * (1.0 + alpha * (flow / capacity).powf(beta)),
            LinkCost::Affine { intercept, slope } => intercept + slope * flow,
        }
    }

    /// Exact derivative of [`value`](Self::value) with respect to flow.
    ///
    /// `beta = 0` is a constant-cost link and returns 0 for every flow,
    /// including 0, where the power-rule expression would be indeterminate.
    pub fn derivative(&self, flow: f64) -> f64 {
        match *self {
            LinkCost::Bpr {
                free_flow_time,
                capacity,
                alpha,
                beta,
            } => {
                if beta == 0.0 {
                    0.0
                } else {
                    free_flow_time * alpha * beta / capacity * (flow / capacity).powf(beta - 1.0)
                }
            }
            LinkCost::Affine { slope, .. } => slope,
        }
    }

    /// Travel time at zero flow.
    pub fn free_flow(&self) -> f64 {
        match *self {
            LinkCost::Bpr { free_flow_time, .. } => free_flow_time,
            LinkCost::Affine { intercept, .. } => intercept,
        }
    }
}

/// One directed link. The trailing TNTP columns are carried through for
/// round-tripping but play no role in the solver.
#[derive(Debug, Clone)]
pub struct Link {
    pub tail: usize,
    pub head: usize,
    pub cost: LinkCost,
    pub length: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: i64,
}

/// Directed road network.
#[derive(Debug, Clone)]
pub struct Network {
    pub n_nodes: usize,
    pub n_zones: usize,
    /// 0-based id of the first node that through traffic may pass. Nodes
    /// below it are zone centroids: they can start or end a path but never
    /// appear in its interior.
    pub first_thru_node: usize,
    pub links: Vec<Link>,
    /// Outgoing link ids per node.
    out_links: Vec<Vec<u32>>,
}

impl Network {
    pub fn new(n_nodes: usize, n_zones: usize, first_thru_node: usize, links: Vec<Link>) -> Result<Self> {
        for (i, link) in links.iter().enumerate() {
            if link.tail >= n_nodes || link.head >= n_nodes {
                return Err(Error::Invalid(format!(
                    "link {} references node {} outside 1..={}",
                    i,
                    link.tail.max(link.head) + 1,
                    n_nodes
                )));
            }
            validate_cost(i, &link.cost)?;
        }
        let mut out_links = vec![Vec::new(); n_nodes];
        for (i, link) in links.iter().enumerate() {
            out_links[link.tail].push(i as u32);
        }
        Ok(Network {
            n_nodes,
            n_zones,
            first_thru_node,
            links,
            out_links,
        })
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn out_links(&self, node: usize) -> &[u32] {
        &self.out_links[node]
    }

    /// Travel time per link at the given link flows.
    pub fn link_costs(&self, flows: &[f64]) -> Vec<f64> {
        assert_eq!(flows.len(), self.links.len(), "link flow vector length");
        self.links
            .iter()
            .zip(flows)
            .map(|(l, &a)| l.cost.value(a))
            .collect()
    }

    /// Marginal travel time per link at the given link flows.
    pub fn link_cost_derivatives(&self, flows: &[f64]) -> Vec<f64> {
        assert_eq!(flows.len(), self.links.len(), "link flow vector length");
        self.links
            .iter()
            .zip(flows)
            .map(|(l, &a)| l.cost.derivative(a))
            .collect()
    }

    /// Travel time per link at zero flow.
    pub fn free_flow_costs(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.cost.free_flow()).collect()
    }

    /// Serialize back to TNTP text. Numeric fields use the shortest
    /// representation that round-trips, so parse -> write -> parse is exact.
    pub fn to_tntp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "<NUMBER OF ZONES> {}", self.n_zones);
        let _ = writeln!(s, "<NUMBER OF NODES> {}", self.n_nodes);
        let _ = writeln!(s, "<FIRST THRU NODE> {}", self.first_thru_node + 1);
        let _ = writeln!(s, "<NUMBER OF LINKS> {}", self.links.len());
        let _ = writeln!(s, "<END OF METADATA>");
        let _ = writeln!(s, "~\tinit\tterm\tcapacity\tlength\tfft\tb\tpower\tspeed\ttoll\ttype\t;");
        for link in &self.links {
            let (cap, fft, b, power) = match link.cost {
                LinkCost::Bpr {
                    free_flow_time,
                    capacity,
                    alpha,
                    beta,
                } => (capacity, free_flow_time, alpha, beta),
                LinkCost::Affine { intercept, slope } => (1.0, intercept, slope, 0.0),
            };
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
                link.tail + 1,
                link.head + 1,
                cap,
                link.length,
                fft,
                b,
                power,
                link.speed,
                link.toll,
                link.link_type
            );
        }
        s
    }
}

fn validate_cost(link_index: usize, cost: &LinkCost) -> Result<()> {
    match *cost {
        LinkCost::Bpr {
            free_flow_time,
            capacity,
            alpha,
            beta,
        } => {
            if !(capacity > 0.0) {
                return Err(Error::Invalid(format!(
                    "link {link_index}: capacity {capacity} must be positive"
                )));
            }
            if free_flow_time < 0.0 || alpha < 0.0 || beta < 0.0 {
                return Err(Error::Invalid(format!(
                    "link {link_index}: negative BPR parameter"
                )));
            }
        }
        LinkCost::Affine { intercept, slope } => {
            if intercept < 0.0 || slope < 0.0 {
                return Err(Error::Invalid(format!(
                    "link {link_index}: affine cost must have nonnegative intercept and slope"
                )));
            }
        }
    }
    Ok(())
}

/// One origin/destination pair with positive demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

/// Trip table. Pairs are sorted by origin then destination; zero-demand pairs
/// are dropped at parse time, so `demand > 0` holds for every entry and the
/// index of a pair in `pairs` is the OD-block index used by the flow vectors.
#[derive(Debug, Clone)]
pub struct DemandTable {
    pub pairs: Vec<OdPair>,
    pub n_zones: usize,
    /// `<TOTAL OD FLOW>` from the file header, if present.
    pub declared_total: Option<f64>,
    /// Non-fatal oddities found while reading (total mismatch, dropped
    /// diagonal demand, ...).
    pub warnings: Vec<String>,
}

impl DemandTable {
    pub fn new(mut pairs: Vec<OdPair>, n_zones: usize) -> Result<Self> {
        pairs.sort_by(|a, b| (a.origin, a.destination).cmp(&(b.origin, b.destination)));
        for w in pairs.windows(2) {
            if w[0].origin == w[1].origin && w[0].destination == w[1].destination {
                return Err(Error::Invalid(format!(
                    "duplicate demand entry for origin {} destination {}",
                    w[0].origin + 1,
                    w[0].destination + 1
                )));
            }
        }
        if let Some(p) = pairs.iter().find(|p| !(p.demand > 0.0) || !p.demand.is_finite()) {
            return Err(Error::Invalid(format!(
                "demand for origin {} destination {} must be positive and finite, got {}",
                p.origin + 1,
                p.destination + 1,
                p.demand
            )));
        }
        Ok(DemandTable {
            pairs,
            n_zones,
            declared_total: None,
            warnings: Vec::new(),
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn total(&self) -> f64 {
        self.pairs.iter().map(|p| p.demand).sum()
    }

    pub fn max_demand(&self) -> f64 {
        self.pairs.iter().map(|p| p.demand).fold(0.0, f64::max)
    }

    /// Uniformly scaled copy. The multiplier is a solve-time setting, not a
    /// property of the file, so scaling never happens in the parser.
    pub fn scaled(&self, multiplier: f64) -> Result<DemandTable> {
        if !(multiplier > 0.0) || !multiplier.is_finite() {
            return Err(Error::Invalid(format!(
                "demand multiplier must be positive and finite, got {multiplier}"
            )));
        }
        let mut out = self.clone();
        for p in &mut out.pairs {
            p.demand *= multiplier;
        }
        out.declared_total = self.declared_total.map(|t| t * multiplier);
        Ok(out)
    }
}

/// Line-by-line cursor over TNTP text: strips `~` comments, skips blanks,
/// tracks 1-based line numbers for error messages.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (idx, raw) in self.inner.by_ref() {
            let no_comment = match raw.find('~') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let trimmed = no_comment.trim();
            if !trimmed.is_empty() {
                return Some((idx + 1, trimmed));
            }
        }
        None
    }
}

struct Metadata {
    tags: Vec<(String, f64)>,
    end_line: usize,
}

fn parse_metadata(lines: &mut Lines, source: &str) -> Result<Metadata> {
    let mut tags = Vec::new();
    loop {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 0, "missing <END OF METADATA>"))?;
        if !line.starts_with('<') {
            return Err(Error::parse(
                source,
                line_no,
                format!("expected a <...> metadata tag before data rows, got {line:?}"),
            ));
        }
        let close = line.find('>').ok_or_else(|| {
            Error::parse(source, line_no, format!("unterminated metadata tag {line:?}"))
        })?;
        let tag = line[1..close].trim().to_ascii_uppercase();
        let rest = line[close + 1..].trim();
        if tag == "END OF METADATA" {
            return Ok(Metadata {
                tags,
                end_line: line_no,
            });
        }
        if rest.is_empty() {
            tags.push((tag, f64::NAN));
            continue;
        }
        let value: f64 = rest.parse().map_err(|_| {
            Error::parse(
                source,
                line_no,
                format!("metadata tag <{tag}> has non-numeric value {rest:?}"),
            )
        })?;
        tags.push((tag, value));
    }
}

fn metadata_value(meta: &Metadata, tag: &str) -> Option<f64> {
    meta.tags
        .iter()
        .find(|(t, _)| t == tag)
        .map(|&(_, v)| v)
        .filter(|v| v.is_finite())
}

fn require_count(meta: &Metadata, tag: &str, source: &str) -> Result<usize> {
    let v = metadata_value(meta, tag).ok_or_else(|| {
        Error::parse(source, meta.end_line, format!("missing metadata tag <{tag}>"))
    })?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::parse(
            source,
            meta.end_line,
            format!("metadata tag <{tag}> must be a nonnegative integer, got {v}"),
        ));
    }
    Ok(v as usize)
}

/// Parse a TNTP network file from text.
pub fn parse_net_str(text: &str) -> Result<Network> {
    parse_net_named(text, "input")
}

/// Parse a TNTP network file from disk.
pub fn parse_net_file(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_net_named(&text, &path.display().to_string())
}

fn parse_net_named(text: &str, source: &str) -> Result<Network> {
    let mut lines = Lines::new(text);
    let meta = parse_metadata(&mut lines, source)?;
    let n_nodes = require_count(&meta, "NUMBER OF NODES", source)?;
    let n_links_declared = require_count(&meta, "NUMBER OF LINKS", source)?;
    let n_zones = require_count(&meta, "NUMBER OF ZONES", source)?;
    let first_thru = metadata_value(&meta, "FIRST THRU NODE").unwrap_or(1.0);
    if first_thru < 1.0 || first_thru.fract() != 0.0 {
        return Err(Error::parse(
            source,
            meta.end_line,
            format!("<FIRST THRU NODE> must be a 1-based node id, got {first_thru}"),
        ));
    }

    let mut links = Vec::with_capacity(n_links_declared);
    while let Some((line_no, line)) = lines.next() {
        let record = match line.find(';') {
            Some(pos) => line[..pos].trim(),
            None => line,
        };
        if record.is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.split_whitespace().collect();
        if fields.len() < 7 {
            return Err(Error::parse(
                source,
                line_no,
                format!("link row has {} fields, expected at least 7", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                Error::parse(
                    source,
                    line_no,
                    format!("non-numeric field {:?} in link row", fields[i]),
                )
            })
        };
        let init = num(0)?;
        let term = num(1)?;
        let capacity = num(2)?;
        let length = num(3)?;
        let fft = num(4)?;
        let b = num(5)?;
        let power = num(6)?;
        let speed = if fields.len() > 7 { num(7)? } else { 0.0 };
        let toll = if fields.len() > 8 { num(8)? } else { 0.0 };
        let link_type = if fields.len() > 9 { num(9)? as i64 } else { 1 };

        let node = |v: f64| -> Result<usize> {
            if v < 1.0 || v.fract() != 0.0 || v as usize > n_nodes {
                return Err(Error::parse(
                    source,
                    line_no,
                    format!("node id {v} outside 1..={n_nodes}"),
                ));
            }
            Ok(v as usize - 1)
        };
        let cost = if link_type == AFFINE_LINK_TYPE {
            LinkCost::Affine {
                intercept: fft,
                slope: b,
            }
        } else {
            LinkCost::Bpr {
                free_flow_time: fft,
                capacity,
                alpha: b,
                beta: power,
            }
        };
        links.push(Link {
            tail: node(init)?,
            head: node(term)?,
            cost,
            length,
            speed,
            toll,
            link_type,
        });
    }

    if links.len() != n_links_declared {
        return Err(Error::Invalid(format!(
            "{source}: <NUMBER OF LINKS> declares {n_links_declared} but {} rows were read",
            links.len()
        )));
    }
    Network::new(n_nodes, n_zones, first_thru as usize - 1, links)
}

/// Link type marking the affine cost family in network files.
pub const AFFINE_LINK_TYPE: i64 = 9;

/// Parse a TNTP trip table from text.
pub fn parse_trips_str(text: &str) -> Result<DemandTable> {
    parse_trips_named(text, "input")
}

/// Parse a TNTP trip table from disk.
pub fn parse_trips_file(path: impl AsRef<Path>) -> Result<DemandTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_trips_named(&text, &path.display().to_string())
}

fn parse_trips_named(text: &str, source: &str) -> Result<DemandTable> {
    let mut lines = Lines::new(text);
    let meta = parse_metadata(&mut lines, source)?;
    let n_zones = require_count(&meta, "NUMBER OF ZONES", source)?;
    let declared_total = metadata_value(&meta, "TOTAL OD FLOW");

    let mut pairs: Vec<OdPair> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut origin: Option<usize> = None;
    while let Some((line_no, line)) = lines.next() {
        if let Some(rest) = strip_keyword(line, "Origin") {
            let id: f64 = rest.trim().parse().map_err(|_| {
                Error::parse(source, line_no, format!("bad origin id {:?}", rest.trim()))
            })?;
            if id < 1.0 || id.fract() != 0.0 {
                return Err(Error::parse(source, line_no, format!("bad origin id {id}")));
            }
            origin = Some(id as usize - 1);
            continue;
        }
        let o = origin
            .ok_or_else(|| Error::parse(source, line_no, "demand row before any Origin header"))?;
        for entry in line.split(';') {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (dest_str, demand_str) = entry.split_once(':').ok_or_else(|| {
                Error::parse(source, line_no, format!("expected `dest : demand`, got {entry:?}"))
            })?;
            let dest: f64 = dest_str.trim().parse().map_err(|_| {
                Error::parse(source, line_no, format!("bad destination {:?}", dest_str.trim()))
            })?;
            let demand: f64 = demand_str.trim().parse().map_err(|_| {
                Error::parse(source, line_no, format!("bad demand {:?}", demand_str.trim()))
            })?;
            if dest < 1.0 || dest.fract() != 0.0 {
                return Err(Error::parse(source, line_no, format!("bad destination {dest}")));
            }
            let d = dest as usize - 1;
            if demand < 0.0 || !demand.is_finite() {
                return Err(Error::parse(
                    source,
                    line_no,
                    format!("demand {demand} for origin {} destination {dest} is negative", o + 1),
                ));
            }
            if demand == 0.0 {
                continue;
            }
            if d == o {
                warnings.push(format!(
                    "dropped intra-zonal demand {demand} at zone {}",
                    o + 1
                ));
                continue;
            }
            pairs.push(OdPair {
                origin: o,
                destination: d,
                demand,
            });
        }
    }

    let mut table = DemandTable::new(pairs, n_zones)?;
    table.declared_total = declared_total;
    if let Some(declared) = declared_total {
        let actual = table.total();
        let scale = declared.abs().max(1.0);
        if (actual - declared).abs() > 0.005 * scale {
            warnings.push(format!(
                "<TOTAL OD FLOW> declares {declared} but entries sum to {actual}"
            ));
        }
    }
    table.warnings = warnings;
    Ok(table)
}

fn strip_keyword<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let lower = line.to_ascii_lowercase();
    let klower = keyword.to_ascii_lowercase();
    if lower.starts_with(&klower) {
        let rest = &line[keyword.len()..];
        if rest.starts_with(|c: char| c.is_whitespace()) || rest.is_empty() {
            return Some(rest);
        }
    }
    None
}
