//! Network model: directed graphs with per-edge transit time, capacity and
//! cost, a single source/sink pair, a constant source inflow rate and a global
//! arrival deadline.
//!
//! Multi-edges are allowed; edges are identified by their string id, not by
//! their endpoint pair. Everything here is immutable after construction and
//! all operations are pure.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Default cap on path enumeration.
pub const DEFAULT_PATH_LIMIT: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("path enumeration exceeded the limit of {limit} paths")]
    PathExplosion { limit: usize },
    #[error("network is not a parallel path network")]
    NotParallelPath,
    #[error("network failed validation: {0}")]
    Invalid(String),
    #[error("unknown edge id {0}")]
    UnknownEdge(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: String,
    pub tail: String,
    pub head: String,
    /// Transit time τ ≥ 0.
    pub transit: f64,
    /// Capacity ν > 0 (flow per unit time).
    pub capacity: f64,
    /// Abstract cost c ≥ 0.
    pub cost: f64,
}

/// Family metadata echoed into generated instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
    pub source: String,
    pub sink: String,
    /// Constant source inflow rate u > 0.
    pub inflow_rate: f64,
    /// Global arrival deadline D > 0.
    pub deadline: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceMeta>,
}

/// A single s–t link in a parallel (reduced) network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub transit: f64,
    pub capacity: f64,
    pub cost: f64,
}

/// A simple s–t path with its derived aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Indices into `Network::edges`, in tail-to-head order.
    pub edges: Vec<usize>,
    /// Σ c_e over the path.
    pub cost: f64,
    /// Σ τ_e over the path.
    pub transit: f64,
    /// min ν_e over the path.
    pub bottleneck: f64,
}

impl Path {
    pub fn edge_ids<'a>(&self, net: &'a Network) -> Vec<&'a str> {
        self.edges
            .iter()
            .map(|&i| net.edges[i].id.as_str())
            .collect()
    }

    /// Stable human-readable label: edge ids joined by `+`.
    pub fn label(&self, net: &Network) -> String {
        self.edge_ids(net).join("+")
    }

    /// Vertex sequence from source to sink.
    pub fn vertices<'a>(&self, net: &'a Network) -> Vec<&'a str> {
        let mut vs = Vec::with_capacity(self.edges.len() + 1);
        vs.push(net.edges[self.edges[0]].tail.as_str());
        for &e in &self.edges {
            vs.push(net.edges[e].head.as_str());
        }
        vs
    }

    pub fn as_link(&self) -> Link {
        Link {
            transit: self.transit,
            capacity: self.bottleneck,
            cost: self.cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SourceEqualsSink,
    UnknownVertex { edge: String, vertex: String },
    NonpositiveCapacity { edge: String },
    NegativeTransit { edge: String },
    NegativeCost { edge: String },
    NonFinite { edge: String, field: &'static str },
    DuplicateEdgeId { edge: String },
    NonpositiveInflowRate,
    NonpositiveDeadline,
    SourceCannotReachSink,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SourceEqualsSink => write!(f, "source and sink must differ"),
            Violation::UnknownVertex { edge, vertex } => {
                write!(f, "edge {edge} references undeclared vertex {vertex}")
            }
            Violation::NonpositiveCapacity { edge } => {
                write!(f, "edge {edge}: capacity must be positive")
            }
            Violation::NegativeTransit { edge } => {
                write!(f, "edge {edge}: transit time must be non-negative")
            }
            Violation::NegativeCost { edge } => {
                write!(f, "edge {edge}: cost must be non-negative")
            }
            Violation::NonFinite { edge, field } => {
                write!(f, "edge {edge}: {field} must be finite")
            }
            Violation::DuplicateEdgeId { edge } => write!(f, "duplicate edge id {edge}"),
            Violation::NonpositiveInflowRate => write!(f, "inflow rate must be positive"),
            Violation::NonpositiveDeadline => write!(f, "deadline must be positive"),
            Violation::SourceCannotReachSink => write!(f, "sink is unreachable from source"),
        }
    }
}

/// Result of [`validate`]: violations, prune warnings and the pruned network.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    /// The input with vertices (and their edges) not on any s–t path removed.
    /// Only meaningful when there are no violations.
    pub pruned: Network,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Network {
    pub fn vertex_index(&self) -> HashMap<&str, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect()
    }

    /// Interpret every edge as an s→t link. `None` unless the network is
    /// already a parallel link network.
    pub fn as_parallel_links(&self) -> Option<Vec<Link>> {
        if self
            .edges
            .iter()
            .all(|e| e.tail == self.source && e.head == self.sink)
        {
            Some(
                self.edges
                    .iter()
                    .map(|e| Link {
                        transit: e.transit,
                        capacity: e.capacity,
                        cost: e.cost,
                    })
                    .collect(),
            )
        } else {
            None
        }
    }
}

/// Check structural and numeric invariants; prune vertices that lie on no
/// s–t path (with a warning per pruned vertex).
pub fn validate(net: &Network) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    if net.source == net.sink {
        violations.push(Violation::SourceEqualsSink);
    }
    if !net.inflow_rate.is_finite() || net.inflow_rate <= 0.0 {
        violations.push(Violation::NonpositiveInflowRate);
    }
    if !net.deadline.is_finite() || net.deadline <= 0.0 {
        violations.push(Violation::NonpositiveDeadline);
    }

    let declared: HashSet<&str> = net.vertices.iter().map(|v| v.as_str()).collect();
    let mut seen_ids: HashSet<&str> = HashSet::new();
    for e in &net.edges {
        if !seen_ids.insert(e.id.as_str()) {
            violations.push(Violation::DuplicateEdgeId { edge: e.id.clone() });
        }
        for v in [&e.tail, &e.head] {
            if !declared.contains(v.as_str()) {
                violations.push(Violation::UnknownVertex {
                    edge: e.id.clone(),
                    vertex: v.clone(),
                });
            }
        }
        if !e.capacity.is_finite() {
            violations.push(Violation::NonFinite {
                edge: e.id.clone(),
                field: "capacity",
            });
        } else if e.capacity <= 0.0 {
            violations.push(Violation::NonpositiveCapacity { edge: e.id.clone() });
        }
        if !e.transit.is_finite() {
            violations.push(Violation::NonFinite {
                edge: e.id.clone(),
                field: "transit",
            });
        } else if e.transit < 0.0 {
            violations.push(Violation::NegativeTransit { edge: e.id.clone() });
        }
        if !e.cost.is_finite() {
            violations.push(Violation::NonFinite {
                edge: e.id.clone(),
                field: "cost",
            });
        } else if e.cost < 0.0 {
            violations.push(Violation::NegativeCost { edge: e.id.clone() });
        }
    }
    for v in [&net.source, &net.sink] {
        if !declared.contains(v.as_str()) {
            violations.push(Violation::UnknownVertex {
                edge: "(network)".into(),
                vertex: v.clone(),
            });
        }
    }

    let mut pruned = net.clone();
    if violations.is_empty() {
        // a vertex is kept iff reachable from s and co-reachable from t
        let fwd = reachable(net, &net.source, false);
        let bwd = reachable(net, &net.sink, true);
        if !fwd.contains(net.sink.as_str()) {
            violations.push(Violation::SourceCannotReachSink);
        } else {
            let keep: HashSet<&str> = fwd.intersection(&bwd).copied().collect();
            for v in &net.vertices {
                if !keep.contains(v.as_str()) {
                    warnings.push(format!("vertex {v} lies on no s-t path; pruned"));
                }
            }
            pruned.vertices.retain(|v| keep.contains(v.as_str()));
            pruned
                .edges
                .retain(|e| keep.contains(e.tail.as_str()) && keep.contains(e.head.as_str()));
        }
    }

    ValidationReport {
        violations,
        warnings,
        pruned,
    }
}

fn reachable<'a>(net: &'a Network, from: &str, backwards: bool) -> HashSet<&'a str> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &net.edges {
        let (a, b) = if backwards {
            (e.head.as_str(), e.tail.as_str())
        } else {
            (e.tail.as_str(), e.head.as_str())
        };
        adj.entry(a).or_default().push(b);
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let start = match net.vertices.iter().find(|v| v.as_str() == from) {
        Some(v) => v.as_str(),
        None => return seen,
    };
    let mut stack = vec![start];
    seen.insert(start);
    while let Some(v) = stack.pop() {
        if let Some(next) = adj.get(v) {
            for &w in next {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
    }
    seen
}

/// All simple s–t paths, sorted by non-decreasing cost; cost ties broken
/// lexicographically by the edge-id sequence.
pub fn enumerate_paths(net: &Network) -> Result<Vec<Path>, NetworkError> {
    enumerate_paths_limited(net, DEFAULT_PATH_LIMIT)
}

pub fn enumerate_paths_limited(net: &Network, limit: usize) -> Result<Vec<Path>, NetworkError> {
    let mut out_edges: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in net.edges.iter().enumerate() {
        out_edges.entry(e.tail.as_str()).or_default().push(i);
    }
    // deterministic expansion order
    for v in out_edges.values_mut() {
        v.sort_by(|&a, &b| net.edges[a].id.cmp(&net.edges[b].id));
    }

    fn dfs<'a>(
        net: &'a Network,
        out_edges: &HashMap<&str, Vec<usize>>,
        at: &'a str,
        stack: &mut Vec<usize>,
        visited: &mut HashSet<&'a str>,
        paths: &mut Vec<Path>,
        limit: usize,
    ) -> Result<(), NetworkError> {
        if at == net.sink {
            if paths.len() >= limit {
                return Err(NetworkError::PathExplosion { limit });
            }
            let cost = stack.iter().map(|&i| net.edges[i].cost).sum();
            let transit = stack.iter().map(|&i| net.edges[i].transit).sum();
            let bottleneck = stack
                .iter()
                .map(|&i| net.edges[i].capacity)
                .fold(f64::INFINITY, f64::min);
            paths.push(Path {
                edges: stack.clone(),
                cost,
                transit,
                bottleneck,
            });
            return Ok(());
        }
        if let Some(nexts) = out_edges.get(at) {
            for &i in nexts {
                let head = net.edges[i].head.as_str();
                if visited.contains(head) {
                    continue;
                }
                visited.insert(head);
                stack.push(i);
                dfs(net, out_edges, head, stack, visited, paths, limit)?;
                stack.pop();
                visited.remove(head);
            }
        }
        Ok(())
    }

    let mut paths = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut visited: HashSet<&str> = HashSet::new();
    visited.insert(net.source.as_str());
    dfs(
        net,
        &out_edges,
        net.source.as_str(),
        &mut stack,
        &mut visited,
        &mut paths,
        limit,
    )?;

    paths.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then_with(|| a.edge_ids(net).cmp(&b.edge_ids(net)))
    });
    Ok(paths)
}

/// True iff no edge appears on two distinct s–t paths.
pub fn is_parallel_path(net: &Network) -> Result<bool, NetworkError> {
    let paths = enumerate_paths(net)?;
    let mut seen: HashSet<usize> = HashSet::new();
    for p in &paths {
        for &e in &p.edges {
            if !seen.insert(e) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Replace each path of a parallel path network by a single s→t link with the
/// path's total transit, bottleneck capacity and total cost. The reduced
/// network has identical flow dynamics.
pub fn reduce_to_parallel_links(net: &Network) -> Result<Network, NetworkError> {
    if !is_parallel_path(net)? {
        return Err(NetworkError::NotParallelPath);
    }
    let paths = enumerate_paths(net)?;
    let edges = paths
        .iter()
        .map(|p| Edge {
            id: p.label(net),
            tail: net.source.clone(),
            head: net.sink.clone(),
            transit: p.transit,
            capacity: p.bottleneck,
            cost: p.cost,
        })
        .collect();
    Ok(Network {
        vertices: vec![net.source.clone(), net.sink.clone()],
        edges,
        source: net.source.clone(),
        sink: net.sink.clone(),
        inflow_rate: net.inflow_rate,
        deadline: net.deadline,
        meta: net.meta.clone(),
    })
}

/// Parse an instance file (JSON syntax; unknown fields rejected).
pub fn from_json(data: &str) -> Result<Network, serde_json::Error> {
    serde_json::from_str(data)
}

/// Serialize an instance to pretty JSON (deterministic field order).
pub fn to_json(net: &Network) -> String {
    serde_json::to_string_pretty(net).expect("network serialization cannot fail")
}
