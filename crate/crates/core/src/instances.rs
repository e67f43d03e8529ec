//! Instance generators for the tight families and random instances, plus
//! instance file I/O.
//!
//! All generators produce networks with pairwise distinct path costs, so the
//! layered construction is the unique equilibrium shape. Random families are
//! reproducible from a seed via [`SplitMix64`] (documented by algorithm name
//! for cross-language reproducibility).

use crate::network::{Edge, InstanceMeta, Network};
use std::collections::BTreeMap;
use std::path::Path as FsPath;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("parameter out of domain: {0}")]
    DomainError(String),
    #[error("failed to read instance: {0}")]
    Io(String),
    #[error("failed to parse instance: {0}")]
    Parse(String),
}

/// SplitMix64: counter-based 64-bit generator (Steele, Lea & Flood).
/// State advances by the golden-gamma constant; each output is a finalizer of
/// the state, so the i-th draw is a pure function of `seed + i`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn uniform_usize(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

fn meta(family: &str, params: &[(&str, serde_json::Value)]) -> Option<InstanceMeta> {
    let mut map = BTreeMap::new();
    for (k, v) in params {
        map.insert((*k).to_string(), v.clone());
    }
    Some(InstanceMeta {
        family: family.to_string(),
        params: map,
    })
}

/// `k` two-link blocks in series, each followed by a single edge. Upper edges
/// have transit 1 and cost 0; the i-th lower edge has transit 0 and cost
/// `2^(k−i)`; single edges are free; every capacity is 1, `u = 1`,
/// `D = k + 2`. The 2^k path costs are pairwise distinct and the all-upper
/// path is cheapest. This family exhibits unbounded prices of anarchy.
pub fn gen_series_parallel(k: usize) -> Result<Network, InstanceError> {
    if k < 1 {
        return Err(InstanceError::DomainError("k must be >= 1".into()));
    }
    if k > 11 {
        return Err(InstanceError::DomainError(
            "k > 11 would exceed the default path limit of 4096".into(),
        ));
    }
    let mut vertices = vec!["v0".to_string()];
    let mut edges = Vec::with_capacity(3 * k);
    for i in 1..=k {
        let junction = format!("w{i}");
        let block_end = format!("v{i}");
        let tail = format!("v{}", i - 1);
        edges.push(Edge {
            id: format!("u{i}"),
            tail: tail.clone(),
            head: junction.clone(),
            transit: 1.0,
            capacity: 1.0,
            cost: 0.0,
        });
        edges.push(Edge {
            id: format!("l{i}"),
            tail,
            head: junction.clone(),
            transit: 0.0,
            capacity: 1.0,
            cost: (1u64 << (k - i)) as f64,
        });
        edges.push(Edge {
            id: format!("m{i}"),
            tail: junction.clone(),
            head: block_end.clone(),
            transit: 0.0,
            capacity: 1.0,
            cost: 0.0,
        });
        vertices.push(junction);
        vertices.push(block_end);
    }
    Ok(Network {
        vertices,
        edges,
        source: "v0".into(),
        sink: format!("v{k}"),
        inflow_rate: 1.0,
        deadline: (k + 2) as f64,
        meta: meta("series_parallel_k", &[("k", serde_json::json!(k))]),
    })
}

/// `k` parallel links with capacity `1/k`, zero transit and distinct costs
/// `1..k`; `u = D = 1`. The tight family for the `e/(e−1)` bounds.
pub fn gen_equal_links(k: usize) -> Result<Network, InstanceError> {
    if k < 1 {
        return Err(InstanceError::DomainError("k must be >= 1".into()));
    }
    let edges = (1..=k)
        .map(|i| Edge {
            id: format!("e{i}"),
            tail: "s".into(),
            head: "t".into(),
            transit: 0.0,
            capacity: 1.0 / k as f64,
            cost: i as f64,
        })
        .collect();
    Ok(Network {
        vertices: vec!["s".into(), "t".into()],
        edges,
        source: "s".into(),
        sink: "t".into(),
        inflow_rate: 1.0,
        deadline: 1.0,
        meta: meta("equal_links_k", &[("k", serde_json::json!(k))]),
    })
}

/// Two parallel links: a cheap thin one (transit 0, capacity ε) and an
/// expensive one (transit 1−ε, capacity 1−ε); `u = D = 1`. The tight family
/// for the throughput bound of 2.
pub fn gen_two_link_eps(eps: f64) -> Result<Network, InstanceError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(InstanceError::DomainError(format!(
            "epsilon must be in (0, 1), got {eps}"
        )));
    }
    Ok(Network {
        vertices: vec!["s".into(), "t".into()],
        edges: vec![
            Edge {
                id: "upper".into(),
                tail: "s".into(),
                head: "t".into(),
                transit: 0.0,
                capacity: eps,
                cost: 0.0,
            },
            Edge {
                id: "lower".into(),
                tail: "s".into(),
                head: "t".into(),
                transit: 1.0 - eps,
                capacity: 1.0 - eps,
                cost: 1.0,
            },
        ],
        source: "s".into(),
        sink: "t".into(),
        inflow_rate: 1.0,
        deadline: 1.0,
        meta: meta("two_link_eps", &[("eps", serde_json::json!(eps))]),
    })
}

/// `k` random parallel links: capacity in (0, 1], transit in [0, D), distinct
/// costs `1..k`; `u = D = 1`.
pub fn gen_random_parallel(k: usize, seed: u64) -> Network {
    let mut rng = SplitMix64::new(seed);
    let edges = (1..=k)
        .map(|i| Edge {
            id: format!("e{i}"),
            tail: "s".into(),
            head: "t".into(),
            transit: rng.uniform(0.0, 1.0),
            capacity: rng.uniform(0.0, 1.0).max(1e-3),
            cost: i as f64,
        })
        .collect();
    Network {
        vertices: vec!["s".into(), "t".into()],
        edges,
        source: "s".into(),
        sink: "t".into(),
        inflow_rate: 1.0,
        deadline: 1.0,
        meta: meta(
            "random_parallel",
            &[
                ("k", serde_json::json!(k)),
                ("seed", serde_json::json!(seed)),
            ],
        ),
    }
}

/// Random layered DAG on `n` vertices with (at least a spine of) an s–t path
/// and `m` edges in total. Edge costs are distinct powers of two, so all path
/// costs are pairwise distinct.
pub fn gen_random_dag(n: usize, m: usize, seed: u64) -> Result<Network, InstanceError> {
    if n < 2 {
        return Err(InstanceError::DomainError("n must be >= 2".into()));
    }
    if m < n - 1 {
        return Err(InstanceError::DomainError(format!(
            "m must be at least n-1 = {} to fit a spanning spine",
            n - 1
        )));
    }
    if m > 50 {
        return Err(InstanceError::DomainError(
            "m > 50 would overflow the power-of-two cost encoding".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let vertices: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    while pairs.len() < m {
        let a = rng.uniform_usize(0, n - 2);
        let b = rng.uniform_usize(a + 1, n - 1);
        pairs.push((a, b));
    }
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Edge {
            id: format!("e{i}"),
            tail: vertices[a].clone(),
            head: vertices[b].clone(),
            transit: rng.uniform(0.0, 0.4),
            capacity: rng.uniform(0.2, 1.0),
            cost: (1u64 << i) as f64,
        })
        .collect();
    Ok(Network {
        vertices: vertices.clone(),
        edges,
        source: vertices[0].clone(),
        sink: vertices[n - 1].clone(),
        inflow_rate: 1.0,
        deadline: 1.0,
        meta: meta(
            "random_dag",
            &[
                ("n", serde_json::json!(n)),
                ("m", serde_json::json!(m)),
                ("seed", serde_json::json!(seed)),
            ],
        ),
    })
}

pub fn read_instance(path: &FsPath) -> Result<Network, InstanceError> {
    let data = std::fs::read_to_string(path).map_err(|e| InstanceError::Io(e.to_string()))?;
    crate::network::from_json(&data).map_err(|e| InstanceError::Parse(e.to_string()))
}

pub fn write_instance(path: &FsPath, net: &Network) -> Result<(), InstanceError> {
    std::fs::write(path, crate::network::to_json(net) + "\n")
        .map_err(|e| InstanceError::Io(e.to_string()))
}
