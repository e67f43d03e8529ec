//! Price-of-anarchy analysis: equilibrium vs optimum under the throughput and
//! makespan objectives, plus the closed-form worst-case expressions for
//! parallel networks.
//!
//! * throughput ratio `t = M*/M_f` — fixed deadline, how much more an optimal
//!   flow delivers;
//! * makespan ratio `m = D/D*(M_f)` — fixed mass, how much earlier an optimal
//!   flow could deliver it.
//!
//! For parallel path networks the layered equilibrium is the worst case among
//! all equilibria, so the ratios are the prices of anarchy; in general
//! networks the report is for one layered equilibrium and the ratios are
//! lower bounds.

use crate::dynamics::{throughput, DynamicsError};
use crate::nash::{layered_nash_general, layered_thetas_parallel, NashError};
use crate::network::{enumerate_paths, validate, Link, Network, NetworkError, Path};
use crate::optimal::{
    max_throughput_parallel, optimal_deadline_parallel, time_expanded_max_throughput, Method,
    OptimalError,
};
use thiserror::Error;

/// e/(e−1) ≈ 1.581977: the tight bound for zero-transit throughput and for
/// the makespan objective on parallel networks.
pub const E_RATIO: f64 = std::f64::consts::E / (std::f64::consts::E - 1.0);

#[derive(Debug, Error)]
pub enum PoaError {
    #[error("network failed validation: {0}")]
    InvalidNetwork(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Optimal(#[from] OptimalError),
}

/// Tri-state bound check: the structural preconditions of each bound decide
/// applicability, so series-parallel instances are never misflagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundFlag {
    Holds,
    Violated,
    NotApplicable,
}

impl std::fmt::Display for BoundFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundFlag::Holds => write!(f, "holds"),
            BoundFlag::Violated => write!(f, "violated"),
            BoundFlag::NotApplicable => write!(f, "n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    /// Parallel path network: the layered equilibrium minimizes throughput
    /// among all equilibria, so the ratios are the true prices of anarchy.
    WorstCaseLayered,
    /// General network: one layered equilibrium; ratios are lower bounds.
    SomeLayered,
}

#[derive(Debug, Clone)]
pub struct PoaReport {
    pub m_f: f64,
    pub m_star: f64,
    pub deadline: f64,
    pub d_star: f64,
    pub t_poa: f64,
    pub m_poa: f64,
    /// t ≤ 2 (parallel path, arbitrary transits).
    pub bound_t_general: BoundFlag,
    /// t ≤ e/(e−1) (parallel path, all transits zero).
    pub bound_t_zero_transit: BoundFlag,
    /// m ≤ e/(e−1) (parallel path).
    pub bound_m: BoundFlag,
    pub equilibrium: EquilibriumKind,
    pub m_star_method: Method,
    pub d_star_method: Method,
}

impl PoaReport {
    pub fn csv_header() -> &'static str {
        "M_f,M_star,D,D_star,t_poa,m_poa,bound_t,bound_t_zero_tau,bound_m"
    }

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.m_f,
            self.m_star,
            self.deadline,
            self.d_star,
            self.t_poa,
            self.m_poa,
            self.bound_t_general,
            self.bound_t_zero_transit,
            self.bound_m
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    /// Fixed-point tolerance for general networks.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Time-expansion step for general networks; `None` means `D/256`.
    pub delta: Option<f64>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            tol: 1e-9,
            max_sweeps: 10_000,
            delta: None,
        }
    }
}

fn paths_edge_disjoint(paths: &[Path]) -> bool {
    let mut seen = std::collections::HashSet::new();
    for p in paths {
        for &e in &p.edges {
            if !seen.insert(e) {
                return false;
            }
        }
    }
    true
}

pub fn analyze(net: &Network) -> Result<PoaReport, PoaError> {
    analyze_with(net, AnalyzeOptions::default())
}

pub fn analyze_with(net: &Network, opts: AnalyzeOptions) -> Result<PoaReport, PoaError> {
    let report = validate(net);
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(PoaError::InvalidNetwork(msgs.join("; ")));
    }
    let net = &report.pruned;
    let paths = enumerate_paths(net)?;
    let u = net.inflow_rate;
    let d = net.deadline;
    let parallel = paths_edge_disjoint(&paths);

    let (m_f, m_star, d_star, equilibrium, m_star_method, d_star_method, links) = if parallel {
        let links: Vec<Link> = paths.iter().map(|p| p.as_link()).collect();
        let thetas = layered_thetas_parallel(&links, u, d);
        let m_f = u * thetas.last().unwrap();
        let m_star = max_throughput_parallel(&links, u, d).value;
        let d_star = optimal_deadline_parallel(&links, u, m_f).value;
        (
            m_f,
            m_star,
            d_star,
            EquilibriumKind::WorstCaseLayered,
            Method::Greedy,
            Method::Greedy,
            Some(links),
        )
    } else {
        let outcome = layered_nash_general(net, &paths, opts.tol, opts.max_sweeps)?;
        let flow = outcome.layered.propagate(net, d)?;
        let m_f = throughput(&flow, d);
        let delta = opts.delta.unwrap_or(d / 256.0);
        let m_star = time_expanded_max_throughput(net, d, delta)?.value;
        // makespan lower bound: relax each path to an independent link (the
        // water-filling also enforces the source rate), so D/D* upper-bounds
        // the makespan ratio
        let path_links: Vec<Link> = paths.iter().map(|p| p.as_link()).collect();
        let d_star = optimal_deadline_parallel(&path_links, u, m_f).value;
        (
            m_f,
            m_star,
            d_star,
            EquilibriumKind::SomeLayered,
            Method::TimeExpanded,
            Method::Greedy,
            None,
        )
    };

    let (t_poa, m_poa) = if m_f <= 1e-15 {
        let t = if m_star <= 1e-12 { 1.0 } else { f64::INFINITY };
        (t, 1.0)
    } else {
        (m_star / m_f, d / d_star)
    };

    let (bound_t_general, bound_t_zero_transit, bound_m) = match &links {
        Some(ls) => {
            let zero_tau = ls.iter().all(|l| l.transit <= 1e-15);
            let flag = |ok: bool| {
                if ok {
                    BoundFlag::Holds
                } else {
                    BoundFlag::Violated
                }
            };
            (
                flag(t_poa <= 2.0 + 1e-9),
                if zero_tau {
                    flag(t_poa <= E_RATIO + 1e-9)
                } else {
                    BoundFlag::NotApplicable
                },
                flag(m_poa <= E_RATIO + 1e-9),
            )
        }
        None => (
            BoundFlag::NotApplicable,
            BoundFlag::NotApplicable,
            BoundFlag::NotApplicable,
        ),
    };

    Ok(PoaReport {
        m_f,
        m_star,
        deadline: d,
        d_star,
        t_poa,
        m_poa,
        bound_t_general,
        bound_t_zero_transit,
        bound_m,
        equilibrium,
        m_star_method,
        d_star_method,
    })
}

/// Worst-case throughput ratio over zero-transit parallel networks with `k`
/// links: `1/(1 − ((k−1)/k)^k)`, non-decreasing in `k` with limit e/(e−1).
pub fn worst_case_t_poa_zero_tau(k: u32) -> f64 {
    assert!(k >= 1);
    let frac = (k as f64 - 1.0) / k as f64;
    1.0 / (1.0 - frac.powi(k as i32))
}

/// Worst-case throughput ratio over parallel networks with `k` links and
/// general transits, parameterized by the common capacity `ν1` of the k−1
/// zero-transit links:
/// `(k−1)·ν1/(1−(1−ν1)^(k−1)) + 1 − (k−1)·ν1`.
///
/// Strictly decreasing in ν1, with limit 2 as ν1 → 0.
pub fn worst_case_t_poa_general_tau(k: u32, nu1: f64) -> Result<f64, PoaError> {
    if k < 2 {
        return Err(PoaError::DomainError(format!("k must be >= 2, got {k}")));
    }
    let bound = 1.0 / (k as f64 - 1.0);
    if !(nu1 > 0.0 && nu1 < bound) {
        return Err(PoaError::DomainError(format!(
            "nu1 must be in (0, 1/(k-1)) = (0, {bound}), got {nu1}"
        )));
    }
    let km1 = k as f64 - 1.0;
    Ok(km1 * nu1 / (1.0 - (1.0 - nu1).powi(k as i32 - 1)) + 1.0 - km1 * nu1)
}

/// Decompose the makespan ratio of a parallel instance as
/// `m = α·D/(β·D + γ)` with `α = Σ ν'`, `β = 1 − Π (1−ν')` and
/// `γ = Σ ν'_j τ_j (1 − Π_{ℓ>j} (1−ν'_ℓ))`, where `ν' = min(ν, u)/u`.
///
/// The identity against [`analyze`] requires every link to carry flow
/// (checked here) and `Σ ν ≤ u` (the closed optimal-deadline form). With
/// `γ ≥ 0` the ratio is non-decreasing in the deadline.
pub fn m_poa_ratio_decomposition(
    links: &[Link],
    u: f64,
    deadline: f64,
) -> Result<(f64, f64, f64), PoaError> {
    let thetas = layered_thetas_parallel(links, u, deadline);
    for (i, l) in links.iter().enumerate() {
        if l.transit >= deadline - thetas[i] {
            return Err(PoaError::DomainError(format!(
                "link {} carries no flow (transit {} >= remaining {})",
                i + 1,
                l.transit,
                deadline - thetas[i]
            )));
        }
    }
    let nu: Vec<f64> = links.iter().map(|l| l.capacity.min(u) / u).collect();
    let alpha: f64 = nu.iter().sum();
    let beta = 1.0 - nu.iter().map(|n| 1.0 - n).product::<f64>();
    let mut gamma = 0.0;
    for j in 0..links.len() {
        let tail_prod: f64 = nu[j + 1..].iter().map(|n| 1.0 - n).product();
        gamma += nu[j] * links[j].transit * (1.0 - tail_prod);
    }
    Ok((alpha, beta, gamma))
}
