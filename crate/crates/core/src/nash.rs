//! Layered equilibrium flows.
//!
//! A layered flow routes the entire source inflow into one path at a time,
//! ordered by non-decreasing path cost, switching paths at breakpoints
//! `0 = θ_0 ≤ θ_1 ≤ … ≤ θ_k ≤ D` chosen so that each path's last particle
//! arrives exactly at the deadline (paths whose transit already exceeds the
//! remaining time get an empty interval). Such a flow is an equilibrium: every
//! particle takes the cheapest path that still reaches the sink in time.
//!
//! Three constructions are provided:
//! * a closed recursion for parallel links,
//! * an independent closed-form evaluation (used to cross-check the recursion),
//! * a fixed-point iteration for general networks, driven by the full
//!   dynamics engine,
//!
//! plus the compaction of an arbitrary block flow into a layered flow on
//! parallel links.

use crate::dynamics::{propagate, DynamicsError, FlowOverTime};
use crate::network::{Link, Network, NetworkError, Path};
use crate::pwl::StepFunction;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NashError {
    #[error(
        "fixed-point iteration did not converge within {sweeps} sweeps (last iterate {last:?})"
    )]
    NoConvergence { sweeps: usize, last: Vec<f64> },
    #[error("closed form requires every link to carry flow: {0}")]
    AssumptionViolated(String),
    #[error("not a block flow: {0}")]
    NotBlockFlow(String),
    #[error("network is not a parallel link network")]
    NotParallelLinks,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A layered flow over time: cost-ordered paths and their switch points.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredFlow {
    /// Paths in non-decreasing cost order.
    pub paths: Vec<Path>,
    /// `thetas[i]` is θ_i; `thetas[0] = 0`, length `paths.len() + 1`.
    pub thetas: Vec<f64>,
}

impl LayeredFlow {
    pub fn new(paths: Vec<Path>, thetas: Vec<f64>) -> Self {
        assert_eq!(thetas.len(), paths.len() + 1);
        assert!(thetas[0] == 0.0);
        debug_assert!(thetas.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        LayeredFlow { paths, thetas }
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.thetas[i]
    }

    pub fn last_theta(&self) -> f64 {
        *self.thetas.last().unwrap()
    }

    /// Whether path `i` (1-based, cost order) receives a non-empty interval.
    pub fn carries_flow(&self, i: usize) -> bool {
        self.thetas[i] > self.thetas[i - 1] + 1e-12
    }

    /// Per-path inflow rates: `u` on `[θ_{i-1}, θ_i)` for each path. With
    /// `residual` set, inflow after θ_k continues on the most expensive path
    /// (those particles never arrive before the deadline, so the choice does
    /// not affect the equilibrium property).
    pub fn to_path_inflows(&self, u: f64, residual: bool) -> Vec<StepFunction> {
        let k = self.paths.len();
        let mut out = Vec::with_capacity(k);
        for i in 1..=k {
            if i == k && residual {
                out.push(StepFunction::from_onward(self.thetas[i - 1], u));
            } else {
                out.push(StepFunction::block(self.thetas[i - 1], self.thetas[i], u));
            }
        }
        out
    }

    /// CSV rows `(path, edges, theta_start, theta_end)`.
    pub fn to_csv(&self, net: &Network) -> String {
        let mut out = String::from("path,edges,theta_start,theta_end\n");
        for (i, p) in self.paths.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                p.label(net),
                self.thetas[i],
                self.thetas[i + 1]
            ));
        }
        out
    }

    /// Propagate this layered flow through the dynamics engine.
    pub fn propagate(&self, net: &Network, horizon: f64) -> Result<FlowOverTime, DynamicsError> {
        let inflows = self.to_path_inflows(net.inflow_rate, true);
        propagate(net, &self.paths, &inflows, horizon)
    }
}

/// Switch points for parallel links by the layered recursion.
///
/// Links must be sorted by non-decreasing cost. Capacities are normalized to
/// `min(ν, u)` (a link can never absorb more than the source emits): each
/// flow-carrying step solves `θ_{i-1} + (θ_i − θ_{i-1})·u/ν_i + τ_i = D`,
/// i.e. `θ_i = θ_{i-1} + (D − τ_i − θ_{i-1})·ν_i/u`; a link whose transit
/// already exceeds the remaining time `D − θ_{i-1}` is skipped.
pub fn layered_thetas_parallel(links: &[Link], u: f64, deadline: f64) -> Vec<f64> {
    debug_assert!(
        links.windows(2).all(|w| w[0].cost <= w[1].cost + 1e-12),
        "links must be sorted by cost"
    );
    let mut thetas = Vec::with_capacity(links.len() + 1);
    thetas.push(0.0);
    let mut prev = 0.0_f64;
    for l in links {
        let nu = l.capacity.min(u);
        let next = if l.transit < deadline - prev {
            prev + (deadline - l.transit - prev) * nu / u
        } else {
            prev
        };
        thetas.push(next);
        prev = next;
    }
    thetas
}

/// Independent closed-form evaluation of the switch points, assuming every
/// link carries flow:
/// `θ_i = D·(1−Π_j (1−ν'_j)) − Σ_j τ_j·ν'_j·Π_{ℓ>j} (1−ν'_ℓ)` with
/// `ν' = min(ν, u)/u`.
///
/// Errors with [`NashError::AssumptionViolated`] when some link would be
/// skipped by the recursion (the closed form only covers flow-carrying
/// prefixes).
pub fn closed_form_thetas(links: &[Link], u: f64, deadline: f64) -> Result<Vec<f64>, NashError> {
    // detect skipped links via the recursion
    let rec = layered_thetas_parallel(links, u, deadline);
    for (i, l) in links.iter().enumerate() {
        if l.transit >= deadline - rec[i] {
            return Err(NashError::AssumptionViolated(format!(
                "link {} has transit {} >= remaining time {}",
                i + 1,
                l.transit,
                deadline - rec[i]
            )));
        }
    }
    let nu: Vec<f64> = links.iter().map(|l| l.capacity.min(u) / u).collect();
    let mut out = Vec::with_capacity(links.len() + 1);
    out.push(0.0);
    for i in 0..links.len() {
        let mut prod = 1.0;
        for &n in &nu[..=i] {
            prod *= 1.0 - n;
        }
        let mut sum = 0.0;
        for j in 0..=i {
            let mut tail_prod = 1.0;
            for &n in &nu[j + 1..=i] {
                tail_prod *= 1.0 - n;
            }
            sum += links[j].transit * nu[j] * tail_prod;
        }
        out.push(deadline * (1.0 - prod) - sum);
    }
    Ok(out)
}

/// Outcome of the general fixed-point construction.
#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub layered: LayeredFlow,
    pub sweeps: usize,
    /// Final boundary residual in arrival-time units: max over carrying paths
    /// of |ℓ_t(θ_i) − D| (and of the shortfall D − ℓ_t(θ_{i-1}) for a path
    /// that should open a block but has not).
    pub residual: f64,
}

/// Layered equilibrium on a general network by fixed-point iteration.
///
/// One coordinate update routes every path on its current interval (with the
/// residual inflow after θ_k on the most expensive path — exactly the flow
/// that will be returned), runs the full dynamics and moves θ_i toward the
/// root of the boundary condition `ℓ_t^{P_i}(θ_i) = D` by a Newton step on
/// the arrival label. The label's left slope at the block end is the exact
/// derivative for parallel links (where one step solves the coordinate) and
/// a local predictor in general; an empty block opens with the slope `u/ν_P`
/// of self-induced queuing. A vector is a fixed point precisely when every
/// switch point satisfies the layered-flow conditions under its own induced
/// dynamics.
///
/// Coordinates are swept Gauss–Seidel style (updates take effect
/// immediately); on detected oscillation the step is damped by 1/2.
/// Existence of a suitable vector is guaranteed, convergence of the
/// iteration is not — non-convergence is reported, never guessed.
pub fn layered_nash_general(
    net: &Network,
    paths: &[Path],
    tol: f64,
    max_sweeps: usize,
) -> Result<FixedPointOutcome, NashError> {
    let u = net.inflow_rate;
    let d = net.deadline;
    let k = paths.len();
    // thetas[0] = θ_0 = 0 fixed; coordinate i lives at thetas[i]
    let mut thetas = vec![0.0_f64; k + 1];
    let mut damping = 1.0_f64;
    let mut prev_delta = f64::INFINITY;

    for sweep in 1..=max_sweeps {
        // residual of the boundary conditions in arrival-time units,
        // measured before damping
        let mut delta = 0.0_f64;
        for i in 1..=k {
            let layered = LayeredFlow::new(paths.to_vec(), thetas.clone());
            let inflows = layered.to_path_inflows(u, true);
            let flow = propagate(net, paths, &inflows, d)?;
            let label = flow.sink_label(i - 1);
            let at = thetas[i];
            let arrival = label.eval(at);
            let empty = at <= thetas[i - 1] + 1e-12;
            if empty {
                // an empty interval is in equilibrium iff the path cannot
                // deliver in time anyway
                delta = delta.max((d - arrival).max(0.0));
            } else {
                delta = delta.max((arrival - d).abs());
            }
            let opener = u / paths[i - 1].bottleneck.min(u);
            let slope = if empty {
                opener
            } else {
                let s = label.slope_before(at);
                if s > 1e-9 {
                    s
                } else {
                    opener
                }
            };
            let target = (at + (d - arrival) / slope).clamp(thetas[i - 1], d);
            thetas[i] = (thetas[i] + damping * (target - thetas[i])).clamp(thetas[i - 1], d);
            // keep the suffix a valid non-decreasing vector
            for j in i + 1..=k {
                if thetas[j] < thetas[i] {
                    thetas[j] = thetas[i];
                }
            }
        }
        if delta <= tol {
            return Ok(FixedPointOutcome {
                layered: LayeredFlow::new(paths.to_vec(), thetas),
                sweeps: sweep,
                residual: delta,
            });
        }
        if delta > prev_delta {
            damping = 0.5;
        }
        prev_delta = delta;
    }
    Err(NashError::NoConvergence {
        sweeps: max_sweeps,
        last: thetas,
    })
}

/// A flow on parallel links whose inflow into each link is either empty or a
/// single half-open interval at full rate `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFlow {
    /// Aligned with the network's edges: `Some((start, end))` or `None`.
    pub blocks: Vec<Option<(f64, f64)>>,
}

/// Compact a block flow on parallel links into a layered flow.
///
/// Walks the blocks in chronological order of their end; before each block's
/// link is (re)filled, every still-unused strictly cheaper link is filled
/// first, in cost order. Filling a link at time `T` sends inflow `u` on
/// `[T, T′)` with `T′ = T + (D − T − τ)·min(ν, u)/u`, which makes its last
/// particle arrive exactly at the deadline; links whose transit exceeds the
/// remaining time receive nothing. The result's first late departure is never
/// later than the input's. Residual inflow after the last fill is carried by
/// the most expensive path (it can never arrive in time).
pub fn create_layered_flow(net: &Network, blocks: &BlockFlow) -> Result<LayeredFlow, NashError> {
    let links = net.as_parallel_links().ok_or(NashError::NotParallelLinks)?;
    if blocks.blocks.len() != links.len() {
        return Err(NashError::NotBlockFlow(format!(
            "{} blocks for {} links",
            blocks.blocks.len(),
            links.len()
        )));
    }
    let mut spans: Vec<(usize, f64, f64)> = Vec::new();
    for (e, b) in blocks.blocks.iter().enumerate() {
        if let Some((s, t)) = *b {
            if !s.is_finite() || !t.is_finite() || t <= s || s < 0.0 {
                return Err(NashError::NotBlockFlow(format!(
                    "link {e} has an empty or negative block [{s}, {t})"
                )));
            }
            spans.push((e, s, t));
        }
    }
    {
        let mut sorted = spans.clone();
        sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        for w in sorted.windows(2) {
            if w[1].1 < w[0].2 - 1e-12 {
                return Err(NashError::NotBlockFlow(format!(
                    "blocks of links {} and {} overlap",
                    w[0].0, w[1].0
                )));
            }
        }
    }

    let u = net.inflow_rate;
    let d = net.deadline;
    let mut t_cur = 0.0_f64;
    let mut fills: Vec<(usize, f64, f64)> = Vec::new();

    let fill_edge = |e: usize, t: &mut f64, fills: &mut Vec<(usize, f64, f64)>| {
        let l = &links[e];
        if *t + l.transit < d {
            let t_next = *t + (d - *t - l.transit) * l.capacity.min(u) / u;
            fills.push((e, *t, t_next));
            *t = t_next;
        } else {
            fills.push((e, *t, *t));
        }
    };

    let mut s_set: Vec<(usize, f64)> = spans.iter().map(|&(e, _, end)| (e, end)).collect();
    let mut unused: Vec<usize> = (0..links.len())
        .filter(|e| blocks.blocks[*e].is_none())
        .collect();

    while !s_set.is_empty() {
        // block with the earliest end; ties by edge index
        let (pos, _) = s_set
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .unwrap();
        let (e, _) = s_set.remove(pos);
        // cheaper unused links first, in cost order
        let mut v: Vec<usize> = unused
            .iter()
            .copied()
            .filter(|&e2| links[e2].cost < links[e].cost)
            .collect();
        v.sort_by(|&a, &b| {
            links[a]
                .cost
                .partial_cmp(&links[b].cost)
                .unwrap()
                .then(a.cmp(&b))
        });
        for e2 in v {
            fill_edge(e2, &mut t_cur, &mut fills);
            unused.retain(|&x| x != e2);
        }
        fill_edge(e, &mut t_cur, &mut fills);
    }
    unused.sort_by(|&a, &b| {
        links[a]
            .cost
            .partial_cmp(&links[b].cost)
            .unwrap()
            .then(a.cmp(&b))
    });
    for e2 in unused {
        fill_edge(e2, &mut t_cur, &mut fills);
    }

    // the fills must come out in non-decreasing cost order to form a layered
    // flow; a violation means the input blocks were not an equilibrium
    for w in fills.windows(2) {
        if links[w[1].0].cost < links[w[0].0].cost - 1e-12 {
            return Err(NashError::NotBlockFlow(format!(
                "fill order is not cost-monotone: link {} (cost {}) after link {} (cost {})",
                w[1].0, links[w[1].0].cost, w[0].0, links[w[0].0].cost
            )));
        }
    }

    let mut paths = Vec::with_capacity(fills.len());
    let mut thetas = Vec::with_capacity(fills.len() + 1);
    thetas.push(0.0);
    for &(e, _, end) in &fills {
        paths.push(Path {
            edges: vec![e],
            cost: links[e].cost,
            transit: links[e].transit,
            bottleneck: links[e].capacity,
        });
        thetas.push(end);
    }
    Ok(LayeredFlow::new(paths, thetas))
}
