//! Optimal flows: maximum throughput before the deadline and minimum makespan
//! for a target mass.
//!
//! Parallel links admit an exact greedy: a link with transit τ can accept
//! useful inflow only during `[0, D−τ)` at rate ≤ ν, and the source emits at
//! most `u`, so the optimum value is `∫_0^D min(u, Σ_{active} ν) dx` with
//! earliest-deadline-first tie-breaking for the schedule. General graphs go
//! through a time-expanded max-flow with per-edge queue (holdover) nodes at
//! the edge tails.

use crate::network::{Link, Network};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimalError {
    #[error("discretization mismatch: {0}")]
    DiscretizationMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Greedy,
    TimeExpanded,
    Formula,
}

/// One constant-rate assignment in an optimal schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    /// Link (edge) index in the input ordering.
    pub link: usize,
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct OptSolution {
    /// M* for throughput problems, D* for deadline problems.
    pub value: f64,
    pub schedule: Vec<ScheduleRow>,
    pub method: Method,
    /// Transit snapping applied by the time expansion: (edge, original, snapped).
    pub snapped_transits: Vec<(usize, f64, f64)>,
}

impl OptSolution {
    pub fn to_csv(&self, net: &Network) -> String {
        let mut out = String::from("link,interval_start,interval_end,rate\n");
        for row in &self.schedule {
            let id = net
                .edges
                .get(row.link)
                .map(|e| e.id.as_str())
                .unwrap_or("?");
            out.push_str(&format!("{},{},{},{}\n", id, row.start, row.end, row.rate));
        }
        out
    }
}

/// Maximum mass deliverable strictly before `deadline` on parallel links.
///
/// Exact for parallel links: inside each interval between consecutive link
/// deadlines `d_j = (D − τ_j)⁺` the useful injection rate is
/// `min(u, Σ_active ν)`; links are saturated earliest-deadline-first.
pub fn max_throughput_parallel(links: &[Link], u: f64, deadline: f64) -> OptSolution {
    let deadlines: Vec<f64> = links
        .iter()
        .map(|l| (deadline - l.transit).max(0.0))
        .collect();
    let mut cuts: Vec<f64> = deadlines.iter().copied().filter(|&d| d > 0.0).collect();
    cuts.push(0.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let mut value = 0.0;
    let mut schedule = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // active links can still deliver if entered during [a, b)
        let mut active: Vec<usize> = (0..links.len()).filter(|&j| deadlines[j] >= b).collect();
        active.sort_by(|&x, &y| {
            deadlines[x]
                .partial_cmp(&deadlines[y])
                .unwrap()
                .then(x.cmp(&y))
        });
        let mut remaining = u;
        for &j in &active {
            if remaining <= 0.0 {
                break;
            }
            let rate = links[j].capacity.min(remaining);
            remaining -= rate;
            value += rate * (b - a);
            schedule.push(ScheduleRow {
                link: j,
                start: a,
                end: b,
                rate,
            });
        }
    }
    OptSolution {
        value,
        schedule,
        method: Method::Greedy,
        snapped_transits: Vec::new(),
    }
}

/// Smallest deadline by which `mass` units can be delivered on parallel links
/// (the generalized inverse of [`max_throughput_parallel`] in the deadline).
pub fn optimal_deadline_parallel(links: &[Link], u: f64, mass: f64) -> OptSolution {
    if mass <= 0.0 {
        return OptSolution {
            value: 0.0,
            schedule: Vec::new(),
            method: Method::Greedy,
            snapped_transits: Vec::new(),
        };
    }
    // Φ(D) = ∫_0^D min(u, Σ_{τ_j < x} ν_j) dx; walk the activation thresholds
    let mut taus: Vec<f64> = links.iter().map(|l| l.transit).collect();
    taus.push(0.0);
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let rate_at = |x: f64| -> f64 {
        let total: f64 = links
            .iter()
            .filter(|l| l.transit <= x + 1e-15)
            .map(|l| l.capacity)
            .sum();
        total.min(u)
    };

    let mut acc = 0.0;
    let mut dstar = f64::NAN;
    for (i, &x) in taus.iter().enumerate() {
        let g = rate_at(x);
        let next = taus.get(i + 1).copied();
        match next {
            Some(x1) => {
                let seg = g * (x1 - x);
                if acc + seg >= mass {
                    dstar = x + (mass - acc) / g;
                    break;
                }
                acc += seg;
            }
            None => {
                // beyond the last threshold the rate is constant and positive
                dstar = x + (mass - acc) / g;
            }
        }
    }
    let schedule = max_throughput_parallel(links, u, dstar).schedule;
    OptSolution {
        value: dstar,
        schedule,
        method: Method::Greedy,
        snapped_transits: Vec::new(),
    }
}

/// Closed-form optimal deadline `D*(M) = (M + Σ ν_j τ_j) / Σ ν_j`.
///
/// Valid when the source never binds (`Σ ν_j ≤ u`) and every link is active
/// at the optimum (`D* ≥ max τ_j`); [`optimal_deadline_parallel`] handles the
/// remaining cases and is the ground truth.
pub fn optimal_deadline_formula(links: &[Link], mass: f64) -> f64 {
    let cap_sum: f64 = links.iter().map(|l| l.capacity).sum();
    let weighted_transit: f64 = links.iter().map(|l| l.capacity * l.transit).sum();
    (mass + weighted_transit) / cap_sum
}

/// Maximum throughput before `deadline` on a general network via a
/// time-expanded max-flow with step `delta`.
///
/// Transits are snapped to the grid (snapping deltas reported in the
/// solution); queues live at edge tails as per-edge holdover chains with
/// unbounded capacity. The result underestimates the continuous optimum by at
/// most `u·Δ·(L+1)` where `L` is the maximum path edge count.
pub fn time_expanded_max_throughput(
    net: &Network,
    deadline: f64,
    delta: f64,
) -> Result<OptSolution, OptimalError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(OptimalError::DiscretizationMismatch(format!(
            "step must be positive and finite, got {delta}"
        )));
    }
    let steps_f = deadline / delta;
    let t_steps = steps_f.round().max(1.0) as usize;
    if (steps_f - t_steps as f64).abs() > 1e-6 * steps_f.max(1.0) {
        return Err(OptimalError::DiscretizationMismatch(format!(
            "step {delta} does not divide the deadline {deadline}"
        )));
    }
    if t_steps > 1 << 20 {
        return Err(OptimalError::DiscretizationMismatch(format!(
            "step {delta} yields {t_steps} layers"
        )));
    }
    let u = net.inflow_rate;
    let n_v = net.vertices.len();
    let n_e = net.edges.len();
    let layers = t_steps + 1;

    let mut snapped = Vec::new();
    let hop_counts: Vec<usize> = net
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = (e.transit / delta).round() as usize;
            let snap = k as f64 * delta;
            if (snap - e.transit).abs() > 1e-12 {
                snapped.push((i, e.transit, snap));
            }
            k
        })
        .collect();

    let vidx = net.vertex_index();
    // node layout: vertex-time nodes, then per-edge queue nodes, then S, T
    let vt = |v: usize, t: usize| v * layers + t;
    let qt = |e: usize, t: usize| n_v * layers + e * layers + t;
    let src = (n_v + n_e) * layers;
    let snk = src + 1;
    let mut g = maxflow::Graph::new(snk + 1);

    let big = u * deadline * 4.0 + 10.0;
    let s = vidx[net.source.as_str()];
    let t_v = vidx[net.sink.as_str()];
    for t in 0..t_steps {
        g.add_edge(src, vt(s, t), u * delta);
        g.add_edge(vt(t_v, t), snk, big);
    }
    for (ei, e) in net.edges.iter().enumerate() {
        let k = hop_counts[ei];
        let tail = vidx[e.tail.as_str()];
        let head = vidx[e.head.as_str()];
        for t in 0..t_steps {
            g.add_edge(vt(tail, t), qt(ei, t), big);
            if t + 1 < t_steps {
                g.add_edge(qt(ei, t), qt(ei, t + 1), big);
            }
            // traversal arcs that cannot arrive before the deadline are useless
            if t + k < t_steps {
                g.add_edge(qt(ei, t), vt(head, t + k), e.capacity * delta);
            }
        }
    }

    let value = g.max_flow(src, snk);

    // schedule: positive traversal flows per edge per step
    let mut schedule = Vec::new();
    for (ei, e) in net.edges.iter().enumerate() {
        let k = hop_counts[ei];
        let tail = vidx[e.tail.as_str()];
        let head = vidx[e.head.as_str()];
        let _ = tail;
        for t in 0..t_steps {
            if t + k < t_steps {
                let f = g.flow_between(qt(ei, t), vt(head, t + k));
                if f > 1e-12 {
                    schedule.push(ScheduleRow {
                        link: ei,
                        start: t as f64 * delta,
                        end: (t + 1) as f64 * delta,
                        rate: f / delta,
                    });
                }
            }
        }
    }

    Ok(OptSolution {
        value,
        schedule,
        method: Method::TimeExpanded,
        snapped_transits: snapped,
    })
}

mod maxflow {
    //! Dinic's algorithm on f64 capacities.

    const EPS: f64 = 1e-12;

    #[derive(Clone)]
    struct Arc {
        to: usize,
        cap: f64,
    }

    pub struct Graph {
        arcs: Vec<Arc>,
        adj: Vec<Vec<usize>>,
        level: Vec<i32>,
        iter: Vec<usize>,
        original_cap: Vec<f64>,
    }

    impl Graph {
        pub fn new(n: usize) -> Self {
            Graph {
                arcs: Vec::new(),
                adj: vec![Vec::new(); n],
                level: vec![0; n],
                iter: vec![0; n],
                original_cap: Vec::new(),
            }
        }

        pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
            let a = self.arcs.len();
            self.arcs.push(Arc { to, cap });
            self.original_cap.push(cap);
            self.adj[from].push(a);
            self.arcs.push(Arc { to: from, cap: 0.0 });
            self.original_cap.push(0.0);
            self.adj[to].push(a + 1);
        }

        /// Flow currently routed on the first arc from `from` to `to`.
        pub fn flow_between(&self, from: usize, to: usize) -> f64 {
            for &a in &self.adj[from] {
                if a % 2 == 0 && self.arcs[a].to == to {
                    return self.original_cap[a] - self.arcs[a].cap;
                }
            }
            0.0
        }

        fn bfs(&mut self, s: usize, t: usize) -> bool {
            self.level.iter_mut().for_each(|l| *l = -1);
            let mut queue = std::collections::VecDeque::new();
            self.level[s] = 0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &a in &self.adj[v] {
                    let arc = &self.arcs[a];
                    if arc.cap > EPS && self.level[arc.to] < 0 {
                        self.level[arc.to] = self.level[v] + 1;
                        queue.push_back(arc.to);
                    }
                }
            }
            self.level[t] >= 0
        }

        fn dfs(&mut self, v: usize, t: usize, f: f64) -> f64 {
            if v == t {
                return f;
            }
            while self.iter[v] < self.adj[v].len() {
                let a = self.adj[v][self.iter[v]];
                let (to, cap) = (self.arcs[a].to, self.arcs[a].cap);
                if cap > EPS && self.level[v] < self.level[to] {
                    let d = self.dfs(to, t, f.min(cap));
                    if d > EPS {
                        self.arcs[a].cap -= d;
                        self.arcs[a ^ 1].cap += d;
                        return d;
                    }
                }
                self.iter[v] += 1;
            }
            0.0
        }

        pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
            let mut flow = 0.0;
            while self.bfs(s, t) {
                self.iter.iter_mut().for_each(|i| *i = 0);
                loop {
                    let f = self.dfs(s, t, f64::INFINITY);
                    if f <= EPS {
                        break;
                    }
                    flow += f;
                }
            }
            flow
        }
    }
}
