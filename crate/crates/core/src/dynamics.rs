//! The flow-over-time engine.
//!
//! Given per-path inflow rates, derives every edge's queue, outflow and exit
//! time exactly (event-driven over piecewise-linear functions, no time
//! stepping), computes per-path arrival labels, throughput before the
//! deadline, and verifies the equilibrium property.
//!
//! Edge dynamics: a queue of mass `z_e` forms at the tail whenever the inflow
//! rate exceeds the capacity; it drains at the capacity rate. A particle
//! entering at time θ leaves at `T_e(θ) = θ + z_e(θ)/ν_e + τ_e`.

use crate::network::{Network, Path};
use crate::pwl::{MonotonePwl, Pwl, PwlError, StepFunction, X_MERGE_TOL};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid path inflow: {0}")]
    BadInflow(#[from] PwlError),
    #[error("inflow list length {got} does not match path count {expected}")]
    InflowCountMismatch { got: usize, expected: usize },
    #[error("label iteration did not stabilize within {waves} waves")]
    CyclicDependencyUnresolved { waves: usize },
}

/// Everything the dynamics derive for one edge.
#[derive(Debug, Clone)]
pub struct EdgeState {
    /// Inflow rate f⁺ at the tail.
    pub inflow: StepFunction,
    /// Outflow rate f⁻ at the head.
    pub outflow: StepFunction,
    /// Cumulative inflow F⁺.
    pub cum_inflow: MonotonePwl,
    /// Cumulative outflow F⁻.
    pub cum_outflow: MonotonePwl,
    /// Queue mass z at the tail (piecewise linear, not monotone).
    pub queue: Pwl,
    /// Exit time T(θ) = θ + z(θ)/ν + τ.
    pub exit_time: MonotonePwl,
}

impl EdgeState {
    /// |F⁺(h) − F⁻(h+τ) − z(h)|: conservation residual at time `h`.
    pub fn conservation_residual(&self, transit: f64, h: f64) -> f64 {
        (self.cum_inflow.eval(h) - self.cum_outflow.eval(h + transit) - self.queue.eval(h)).abs()
    }
}

/// Event-driven single-edge evolution under a given inflow rate.
pub fn edge_evolve(
    inflow: &StepFunction,
    transit: f64,
    capacity: f64,
) -> Result<EdgeState, DynamicsError> {
    let cum_inflow = inflow.integrate()?;
    let nu = capacity;

    // walk constant-rate intervals; z is piecewise linear, the outflow (in
    // entry-time parameterization h(θ) = f⁻(θ+τ)) piecewise constant
    let mut z_points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut h_bps: Vec<f64> = Vec::new();
    let mut h_vals: Vec<f64> = Vec::new();
    let mut z = 0.0_f64;
    let mut z_final_slope = 0.0;

    let n_intervals = inflow.values().len();
    let push_h = |t: f64, v: f64, bps: &mut Vec<f64>, vals: &mut Vec<f64>| {
        if vals.is_empty() {
            vals.push(v);
        } else if t <= X_MERGE_TOL {
            vals[0] = v;
        } else if bps.last().is_some_and(|&last| t - last <= X_MERGE_TOL) {
            *vals.last_mut().unwrap() = v;
        } else {
            bps.push(t);
            vals.push(v);
        }
    };

    for i in 0..n_intervals {
        let a = if i == 0 {
            0.0
        } else {
            inflow.breakpoints()[i - 1]
        };
        let b = inflow.breakpoints().get(i).copied(); // None for the tail
        let r = inflow.values()[i];

        if z > 0.0 {
            push_h(a, nu, &mut h_bps, &mut h_vals);
            let slope = r - nu;
            if slope < 0.0 {
                let t_dep = a + z / (nu - r);
                match b {
                    Some(end) if t_dep >= end => {
                        z += slope * (end - a);
                        z_points.push((end, z.max(0.0)));
                        z = z.max(0.0);
                    }
                    _ => {
                        // queue empties inside this interval
                        z_points.push((t_dep, 0.0));
                        z = 0.0;
                        push_h(t_dep, r.min(nu), &mut h_bps, &mut h_vals);
                        if let Some(end) = b {
                            z_points.push((end, 0.0));
                        } else {
                            z_final_slope = 0.0;
                        }
                    }
                }
            } else {
                match b {
                    Some(end) => {
                        z += slope * (end - a);
                        z_points.push((end, z));
                    }
                    None => z_final_slope = slope,
                }
            }
        } else {
            // empty queue: grows only if the rate exceeds capacity
            push_h(a, r.min(nu), &mut h_bps, &mut h_vals);
            let slope = (r - nu).max(0.0);
            match b {
                Some(end) => {
                    z += slope * (end - a);
                    z_points.push((end, z));
                }
                None => z_final_slope = slope,
            }
        }
    }

    let queue = Pwl::new(z_points, z_final_slope).expect("queue points are ordered");
    // T(θ) = θ + z(θ)/ν + τ
    let exit_points: Vec<(f64, f64)> = queue
        .points()
        .iter()
        .map(|&(x, zy)| (x, x + zy / nu + transit))
        .collect();
    let exit_time = MonotonePwl::new(exit_points, 1.0 + z_final_slope / nu)
        .expect("exit time is non-decreasing");

    let h = StepFunction::new(h_bps, h_vals).expect("outflow breakpoints are sorted");
    let outflow = h.shift_right(transit, 0.0);
    let cum_outflow = outflow.integrate()?;

    Ok(EdgeState {
        inflow: inflow.clone(),
        outflow,
        cum_inflow,
        cum_outflow,
        queue,
        exit_time,
    })
}

/// A propagated flow over time: per-path inflows plus all derived edge state
/// and arrival labels. Immutable once built.
#[derive(Debug, Clone)]
pub struct FlowOverTime {
    pub paths: Vec<Path>,
    pub path_inflows: Vec<StepFunction>,
    pub cum_path_inflows: Vec<MonotonePwl>,
    /// Aligned with `Network::edges`; unused edges carry the zero state.
    pub edge_states: Vec<EdgeState>,
    /// `labels[p][pos]` is the arrival time of particle θ at the pos-th vertex
    /// of path p (position 0 is the source, where the label is the identity).
    pub labels: Vec<Vec<MonotonePwl>>,
    pub horizon: f64,
}

impl FlowOverTime {
    /// Arrival label at the sink for path `p`.
    pub fn sink_label(&self, p: usize) -> &MonotonePwl {
        self.labels[p].last().expect("path has at least one edge")
    }

    /// First departure time whose particle reaches the sink at or after the
    /// deadline along path `p` (`None` if every particle stays strictly
    /// earlier).
    pub fn deadline_crossing(&self, p: usize, deadline: f64) -> Option<f64> {
        self.sink_label(p).crossing_time(deadline)
    }
}

/// Derive all edge states and labels from path inflow rates.
///
/// Edges are processed in dependency order (an edge depends on its
/// predecessors along every path through it); for networks whose dependency
/// graph is cyclic, a capped Jacobi iteration over waves is used instead.
pub fn propagate(
    net: &Network,
    paths: &[Path],
    path_inflows: &[StepFunction],
    horizon: f64,
) -> Result<FlowOverTime, DynamicsError> {
    if paths.len() != path_inflows.len() {
        return Err(DynamicsError::InflowCountMismatch {
            got: path_inflows.len(),
            expected: paths.len(),
        });
    }
    let cum_path_inflows: Vec<MonotonePwl> = path_inflows
        .iter()
        .map(|f| f.integrate())
        .collect::<Result<_, _>>()?;

    // users of each edge: (path index, position along the path)
    let mut users: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (p, path) in paths.iter().enumerate() {
        for (pos, &e) in path.edges.iter().enumerate() {
            users.entry(e).or_default().push((p, pos));
        }
    }

    let order = dependency_order(net.edges.len(), paths, &users);

    let zero_state = |e: usize| {
        edge_evolve(
            &StepFunction::zero(),
            net.edges[e].transit,
            net.edges[e].capacity,
        )
        .expect("zero inflow always evolves")
    };

    match order {
        Some(order) => {
            // single pass in dependency order
            let mut arrivals: Vec<Vec<Option<MonotonePwl>>> = paths
                .iter()
                .map(|path| vec![None; path.edges.len() + 1])
                .collect();
            let mut labels: Vec<Vec<Option<MonotonePwl>>> = arrivals.clone();
            for p in 0..paths.len() {
                arrivals[p][0] = Some(cum_path_inflows[p].clone());
                labels[p][0] = Some(MonotonePwl::identity());
            }
            let mut edge_states: Vec<Option<EdgeState>> = vec![None; net.edges.len()];
            for &e in &order {
                let us = &users[&e];
                let mut agg: Option<MonotonePwl> = None;
                for &(p, pos) in us {
                    let a = arrivals[p][pos].as_ref().expect("processed in order");
                    agg = Some(match agg {
                        None => a.clone(),
                        Some(acc) => acc.add(a),
                    });
                }
                let inflow = agg.expect("edge in order has users").differentiate();
                let state = edge_evolve(&inflow, net.edges[e].transit, net.edges[e].capacity)?;
                for &(p, pos) in us {
                    let a = arrivals[p][pos].as_ref().unwrap();
                    arrivals[p][pos + 1] =
                        Some(MonotonePwl::pullback(a, &state.exit_time).extend_left_constant(0.0));
                    let l = labels[p][pos].as_ref().unwrap();
                    labels[p][pos + 1] = Some(MonotonePwl::compose(&state.exit_time, l));
                }
                edge_states[e] = Some(state);
            }
            let edge_states = edge_states
                .into_iter()
                .enumerate()
                .map(|(e, s)| s.unwrap_or_else(|| zero_state(e)))
                .collect();
            Ok(FlowOverTime {
                paths: paths.to_vec(),
                path_inflows: path_inflows.to_vec(),
                cum_path_inflows,
                edge_states,
                labels: labels
                    .into_iter()
                    .map(|ls| ls.into_iter().map(|l| l.unwrap()).collect())
                    .collect(),
                horizon,
            })
        }
        None => propagate_waves(net, paths, path_inflows, &cum_path_inflows, &users, horizon),
    }
}

/// Topological order of used edges under "precedes on some path", or `None`
/// if that relation is cyclic.
fn dependency_order(
    n_edges: usize,
    paths: &[Path],
    users: &HashMap<usize, Vec<(usize, usize)>>,
) -> Option<Vec<usize>> {
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n_edges];
    let mut indeg: Vec<usize> = vec![0; n_edges];
    for path in paths {
        for w in path.edges.windows(2) {
            succ[w[0]].push(w[1]);
            indeg[w[1]] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n_edges)
        .filter(|e| users.contains_key(e) && indeg[*e] == 0)
        .collect();
    queue.sort_unstable();
    let mut order = Vec::with_capacity(users.len());
    let mut i = 0;
    while i < queue.len() {
        let e = queue[i];
        i += 1;
        order.push(e);
        let mut next = Vec::new();
        for &f in &succ[e] {
            indeg[f] -= 1;
            if indeg[f] == 0 {
                next.push(f);
            }
        }
        next.sort_unstable();
        next.dedup();
        queue.extend(next);
    }
    if order.len() == users.len() {
        Some(order)
    } else {
        None
    }
}

/// Capped Jacobi iteration for cyclic edge dependencies (best effort; the
/// constructions in this crate are acyclic).
fn propagate_waves(
    net: &Network,
    paths: &[Path],
    path_inflows: &[StepFunction],
    cum_path_inflows: &[MonotonePwl],
    users: &HashMap<usize, Vec<(usize, usize)>>,
    horizon: f64,
) -> Result<FlowOverTime, DynamicsError> {
    const MAX_WAVES: usize = 100;
    let total_transit: f64 = net.edges.iter().map(|e| e.transit).sum();
    let cmp_h = horizon + total_transit + 1.0;

    // start from free-flow exit times
    let mut exits: Vec<MonotonePwl> = net
        .edges
        .iter()
        .map(|e| MonotonePwl::affine(1.0, e.transit))
        .collect();
    let mut states: Vec<Option<EdgeState>> = vec![None; net.edges.len()];

    for wave in 0..MAX_WAVES {
        // arrivals under current exit maps
        let mut arrivals: Vec<Vec<MonotonePwl>> = Vec::with_capacity(paths.len());
        for (p, path) in paths.iter().enumerate() {
            let mut along = Vec::with_capacity(path.edges.len() + 1);
            along.push(cum_path_inflows[p].clone());
            for &e in &path.edges {
                let next = MonotonePwl::pullback(along.last().unwrap(), &exits[e])
                    .extend_left_constant(0.0);
                along.push(next);
            }
            arrivals.push(along);
        }
        // re-evolve every used edge
        let mut delta = 0.0_f64;
        let mut new_exits = exits.clone();
        for (&e, us) in users.iter() {
            let mut agg: Option<MonotonePwl> = None;
            for &(p, pos) in us {
                let a = &arrivals[p][pos];
                agg = Some(match agg {
                    None => a.clone(),
                    Some(acc) => acc.add(a),
                });
            }
            let inflow = agg.unwrap().differentiate();
            let state = edge_evolve(&inflow, net.edges[e].transit, net.edges[e].capacity)?;
            delta = delta.max(state.exit_time.max_difference(&exits[e], cmp_h));
            new_exits[e] = state.exit_time.clone();
            states[e] = Some(state);
        }
        exits = new_exits;
        if delta <= 1e-9 {
            // final labels from the stabilized exit maps
            let mut labels: Vec<Vec<MonotonePwl>> = Vec::with_capacity(paths.len());
            for path in paths {
                let mut along = vec![MonotonePwl::identity()];
                for &e in &path.edges {
                    let l = MonotonePwl::compose(&exits[e], along.last().unwrap());
                    along.push(l);
                }
                labels.push(along);
            }
            let edge_states = states
                .into_iter()
                .enumerate()
                .map(|(e, s)| {
                    s.unwrap_or_else(|| {
                        edge_evolve(
                            &StepFunction::zero(),
                            net.edges[e].transit,
                            net.edges[e].capacity,
                        )
                        .expect("zero inflow always evolves")
                    })
                })
                .collect();
            let _ = wave;
            return Ok(FlowOverTime {
                paths: paths.to_vec(),
                path_inflows: path_inflows.to_vec(),
                cum_path_inflows: cum_path_inflows.to_vec(),
                edge_states,
                labels,
                horizon,
            });
        }
    }
    Err(DynamicsError::CyclicDependencyUnresolved { waves: MAX_WAVES })
}

/// Mass arriving at the sink strictly before `deadline`.
pub fn throughput(flow: &FlowOverTime, deadline: f64) -> f64 {
    let mut total = 0.0;
    for p in 0..flow.paths.len() {
        match flow.deadline_crossing(p, deadline) {
            Some(theta) => total += flow.cum_path_inflows[p].eval(theta),
            None => {
                // label never reaches the deadline: all routed mass arrives
                let cum = &flow.cum_path_inflows[p];
                let (x_last, y_last) = *cum.points().last().unwrap();
                total += if cum.final_slope() > 0.0 {
                    f64::INFINITY
                } else {
                    let _ = x_last;
                    y_last
                };
            }
        }
    }
    total
}

/// Last θ̄ such that every particle departing in `[0, θ̄)` arrives strictly
/// before `deadline` on its chosen path. `+∞` when no particle is ever late.
///
/// A positive-inflow interval that merely touches the deadline crossing at
/// its right end (within the merge tolerance) carries no late mass — layered
/// flows end each block exactly at the crossing, so the boundary must not
/// count.
pub fn first_late_particle(flow: &FlowOverTime, deadline: f64) -> f64 {
    let mut earliest = f64::INFINITY;
    for p in 0..flow.paths.len() {
        let Some(theta) = flow.deadline_crossing(p, deadline) else {
            continue;
        };
        for (start, end) in flow.path_inflows[p].positive_intervals() {
            if end > theta + X_MERGE_TOL {
                earliest = earliest.min(start.max(theta));
                break;
            }
        }
    }
    earliest
}

/// A particle that could have taken a strictly cheaper path and still arrived
/// before the deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct NashViolation {
    pub theta: f64,
    /// Path carrying flow at θ.
    pub path: usize,
    /// Strictly cheaper path that still arrives in time at θ.
    pub better_path: usize,
}

/// Flow-carrying in-time paths with different costs at the same instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseViolation {
    pub theta: f64,
    pub paths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NashReport {
    pub violations: Vec<NashViolation>,
    pub phase_violations: Vec<PhaseViolation>,
    /// Whether the common cost signal c(θ) is non-decreasing over the samples.
    pub cost_monotone: bool,
    pub samples: usize,
}

impl NashReport {
    pub fn is_nash(&self) -> bool {
        self.violations.is_empty() && self.phase_violations.is_empty() && self.cost_monotone
    }
}

/// Equilibrium check by counterfactual deviation under the *unchanged* flow.
///
/// A deviation is profitable at θ if some strictly cheaper path's arrival
/// label is still below the deadline. All label and inflow functions are
/// piecewise linear, so sampling every elementary interval (breakpoint
/// endpoints plus midpoints) over `[0, horizon)` is exhaustive.
///
/// Particles arriving exactly at the deadline count as late. Layered flows
/// place arrivals exactly on the deadline by construction, so the check reads
/// the boundary band `D ± in_time_slack` asymmetrically: a deviation target
/// must arrive *surely* in time (label < D − slack) to make a violation,
/// while a carrying particle inside the band keeps its finite path cost (its
/// cost comparison against the cheaper target still decides). Arrivals with
/// label ≥ D + slack are surely late (infinite cost, any in-time alternative
/// wins).
pub fn verify_nash(net: &Network, flow: &FlowOverTime, in_time_slack: f64) -> NashReport {
    let deadline = net.deadline;
    let k = flow.paths.len();

    // elementary sample grid
    let mut grid: Vec<f64> = vec![0.0];
    for p in 0..k {
        grid.extend_from_slice(flow.path_inflows[p].breakpoints());
        for &(x, _) in flow.sink_label(p).points() {
            grid.push(x);
        }
        if let Some(x) = flow.deadline_crossing(p, deadline) {
            grid.push(x);
        }
    }
    grid.retain(|&x| x >= 0.0 && x < flow.horizon);
    grid.push(flow.horizon);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| *a - *b <= X_MERGE_TOL);

    let mut samples: Vec<f64> = Vec::with_capacity(grid.len() * 2);
    for w in grid.windows(2) {
        samples.push(w[0]);
        samples.push(0.5 * (w[0] + w[1]));
    }

    // surely in time: a deviation target must clear the deadline by the slack
    let surely_in_time =
        |p: usize, theta: f64| flow.sink_label(p).eval(theta) < deadline - in_time_slack;
    // surely late: only then does a carrying particle's own cost become ∞
    let surely_late =
        |p: usize, theta: f64| flow.sink_label(p).eval(theta) >= deadline + in_time_slack;

    let mut violations = Vec::new();
    let mut phase_violations = Vec::new();
    let mut cost_monotone = true;
    let mut last_cost = f64::NEG_INFINITY;

    for &theta in &samples {
        let carrying: Vec<usize> = (0..k)
            .filter(|&p| flow.path_inflows[p].value_at(theta) > 1e-12)
            .collect();
        if carrying.is_empty() {
            continue;
        }
        let mut finite_costs: Vec<(usize, f64)> = Vec::new();
        let mut signal = f64::INFINITY;
        for &p in &carrying {
            let cost_p = if surely_late(p, theta) {
                f64::INFINITY
            } else {
                flow.paths[p].cost
            };
            if cost_p.is_finite() && surely_in_time(p, theta) {
                finite_costs.push((p, cost_p));
            }
            signal = signal.min(cost_p);
            for q in 0..k {
                if q == p {
                    continue;
                }
                if surely_in_time(q, theta) && flow.paths[q].cost < cost_p - 1e-12 {
                    violations.push(NashViolation {
                        theta,
                        path: p,
                        better_path: q,
                    });
                }
            }
        }
        if finite_costs.len() > 1 {
            let lo = finite_costs
                .iter()
                .map(|&(_, c)| c)
                .fold(f64::INFINITY, f64::min);
            let hi = finite_costs
                .iter()
                .map(|&(_, c)| c)
                .fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-9 {
                phase_violations.push(PhaseViolation {
                    theta,
                    paths: finite_costs.iter().map(|&(p, _)| p).collect(),
                });
            }
        }
        if signal < last_cost - 1e-9 {
            cost_monotone = false;
        }
        if signal > last_cost {
            last_cost = signal;
        }
    }

    NashReport {
        violations,
        phase_violations,
        cost_monotone,
        samples: samples.len(),
    }
}

/// CSV dump of per-edge states: one row per constant-rate interval.
pub fn edges_to_csv(net: &Network, flow: &FlowOverTime, upto: f64) -> String {
    let mut out =
        String::from("edge,interval_start,interval_end,inflow,outflow,queue_start,queue_end\n");
    for (e, state) in flow.edge_states.iter().enumerate() {
        let id = &net.edges[e].id;
        let mut cuts: Vec<f64> = vec![0.0];
        cuts.extend_from_slice(state.inflow.breakpoints());
        cuts.extend_from_slice(state.outflow.breakpoints());
        for &(x, _) in state.queue.points() {
            cuts.push(x);
        }
        cuts.retain(|&x| x < upto);
        cuts.push(upto);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| *a - *b <= X_MERGE_TOL);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                id,
                a,
                b,
                state.inflow.value_at(mid),
                state.outflow.value_at(mid),
                state.queue.eval(a),
                state.queue.eval(b),
            ));
        }
    }
    out
}

/// CSV dump of per-path arrival labels at their breakpoints.
pub fn labels_to_csv(net: &Network, flow: &FlowOverTime, upto: f64) -> String {
    let mut out = String::from("path,edges,theta,arrival\n");
    for (p, path) in flow.paths.iter().enumerate() {
        let label = flow.sink_label(p);
        let mut xs: Vec<f64> = label
            .points()
            .iter()
            .map(|&(x, _)| x)
            .filter(|&x| x < upto)
            .collect();
        if xs.is_empty() || *xs.first().unwrap() > 0.0 {
            xs.insert(0, 0.0);
        }
        xs.push(upto);
        for &x in &xs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p + 1,
                path.label(net),
                x,
                label.eval(x)
            ));
        }
    }
    out
}
