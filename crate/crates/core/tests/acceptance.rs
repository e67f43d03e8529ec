//! Acceptance suite: one test per criterion, each printing a pass line with
//! the quantities it pinned. Oracles (bisection, closed forms, discrete
//! simulation budgets) live here in test code, independent of the library
//! paths they check.

use flowtime::dynamics::{throughput, verify_nash};
use flowtime::instances::{gen_equal_links, gen_series_parallel, gen_two_link_eps, SplitMix64};
use flowtime::nash::{
    closed_form_thetas, layered_nash_general, layered_thetas_parallel, LayeredFlow,
};
use flowtime::network::{enumerate_paths, Edge, Link, Network};
use flowtime::optimal::{
    max_throughput_parallel, optimal_deadline_parallel, time_expanded_max_throughput,
};
use flowtime::poa::{
    analyze, m_poa_ratio_decomposition, worst_case_t_poa_general_tau, BoundFlag, E_RATIO,
};
use flowtime::pwl::StepFunction;

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(
        (a - b).abs() <= tol,
        "{what}: {a} vs {b} (tol {tol}, diff {})",
        (a - b).abs()
    );
}

/// Random flow-carrying parallel instance: every link's transit leaves room
/// after the recursion's current switch point, so every link carries flow.
fn random_carrying_links(rng: &mut SplitMix64, max_k: usize) -> (Vec<Link>, f64, f64) {
    let k = rng.uniform_usize(1, max_k);
    let u = rng.uniform(0.5, 2.0);
    let d = rng.uniform(0.5, 4.0);
    let mut links = Vec::with_capacity(k);
    let mut theta = 0.0;
    for i in 0..k {
        let capacity = rng.uniform(0.05, u);
        let transit = rng.uniform(0.0, 0.9 * (d - theta));
        links.push(Link {
            transit,
            capacity,
            cost: (i + 1) as f64,
        });
        theta += (d - transit - theta) * capacity.min(u) / u;
    }
    (links, u, d)
}

fn parallel_net(links: &[Link], u: f64, d: f64) -> Network {
    Network {
        vertices: vec!["s".into(), "t".into()],
        edges: links
            .iter()
            .enumerate()
            .map(|(i, l)| Edge {
                id: format!("e{i:02}"),
                tail: "s".into(),
                head: "t".into(),
                transit: l.transit,
                capacity: l.capacity,
                cost: l.cost,
            })
            .collect(),
        source: "s".into(),
        sink: "t".into(),
        inflow_rate: u,
        deadline: d,
        meta: None,
    }
}

/// The layered flow on the series-parallel family (2^k paths, switch points
/// at multiples of 2^(1−k)).
fn series_parallel_layered(net: &Network) -> LayeredFlow {
    let paths = enumerate_paths(net).unwrap();
    let k = (paths.len() as f64).log2().round() as usize;
    let step = 1.0 / (1u64 << (k - 1)) as f64;
    let thetas = (0..=paths.len()).map(|i| i as f64 * step).collect();
    LayeredFlow::new(paths, thetas)
}

#[test]
fn criterion_01_recursion_equals_closed_form() {
    let mut rng = SplitMix64::new(0xC1);
    let mut max_diff = 0.0_f64;
    for _ in 0..1000 {
        let (links, u, d) = random_carrying_links(&mut rng, 20);
        let rec = layered_thetas_parallel(&links, u, d);
        let cf = closed_form_thetas(&links, u, d).expect("instances are flow-carrying");
        for i in 0..rec.len() {
            let diff = (rec[i] - cf[i]).abs();
            assert!(
                diff <= 1e-9,
                "theta_{i} recursion {} vs closed form {}",
                rec[i],
                cf[i]
            );
            max_diff = max_diff.max(diff);
        }
    }
    println!(
        "criterion 1: PASS - recursion vs closed form within 1e-9 on 1000 instances (max diff {max_diff:.3e})"
    );
}

#[test]
fn criterion_02_simulation_consistency() {
    let mut rng = SplitMix64::new(0xC1); // same family as criterion 1
    let mut max_diff = 0.0_f64;
    for _ in 0..1000 {
        let (links, u, d) = random_carrying_links(&mut rng, 20);
        let net = parallel_net(&links, u, d);
        let paths = enumerate_paths(&net).unwrap();
        let thetas = layered_thetas_parallel(&links, u, d);
        let lf = LayeredFlow::new(paths, thetas.clone());
        let flow = lf.propagate(&net, d).unwrap();
        for (i, &theta) in thetas.iter().enumerate().skip(1) {
            if lf.carries_flow(i) {
                let arrival = flow.sink_label(i - 1).eval(theta);
                let diff = (arrival - d).abs();
                assert!(
                    diff <= 1e-6,
                    "path {i}: last particle arrives at {arrival}, deadline {d}"
                );
                max_diff = max_diff.max(diff);
            }
        }
    }
    println!(
        "criterion 2: PASS - layered arrivals hit the deadline within 1e-6 on 1000 instances (max diff {max_diff:.3e})"
    );
}

#[test]
fn criterion_03_equal_links_family() {
    let mut prev = 0.0;
    let mut val100 = 0.0;
    for &k in &[1usize, 2, 3, 10, 100] {
        let net = gen_equal_links(k).unwrap();
        let report = analyze(&net).unwrap();
        let expect = 1.0 / (1.0 - ((k as f64 - 1.0) / k as f64).powi(k as i32));
        assert_close(report.t_poa, expect, 1e-9, &format!("t ratio at k={k}"));
        assert!(report.t_poa > prev, "monotone increasing in k");
        assert!(report.t_poa <= E_RATIO + 1e-9, "within e/(e-1) at k={k}");
        assert_eq!(report.bound_t_zero_transit, BoundFlag::Holds);
        prev = report.t_poa;
        if k == 100 {
            val100 = report.t_poa;
        }
    }
    assert!(
        (E_RATIO - val100).abs() <= 8e-3,
        "k=100 within 8e-3 of e/(e-1): {val100} vs {E_RATIO}"
    );
    println!(
        "criterion 3: PASS - equal-links ratios match 1/(1-((k-1)/k)^k), monotone, k=100 at {val100:.6} vs e/(e-1)={E_RATIO:.6}"
    );
}

#[test]
fn criterion_04_two_link_eps_family() {
    for &eps in &[0.5, 0.1, 0.001] {
        let net = gen_two_link_eps(eps).unwrap();
        let report = analyze(&net).unwrap();
        assert_close(
            report.t_poa,
            2.0 - eps,
            1e-9,
            &format!("t ratio at eps={eps}"),
        );
        let m_expect = 1.0 / (eps + (1.0 - eps) * (1.0 - eps));
        assert_close(
            report.m_poa,
            m_expect,
            1e-9,
            &format!("m ratio at eps={eps}"),
        );
        assert!(report.m_poa <= E_RATIO + 1e-9);
        assert_eq!(report.bound_m, BoundFlag::Holds);

        // independent oracle: bisect the deadline on the exact greedy
        let links = net.as_parallel_links().unwrap();
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if max_throughput_parallel(&links, 1.0, mid).value >= report.m_f {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_close(hi, report.d_star, 1e-9, "bisection vs water-filling D*");
    }
    println!("criterion 4: PASS - two-link ratios 2-eps and 1/(eps+(1-eps)^2) within 1e-9, D* cross-checked by bisection");
}

#[test]
fn criterion_05_series_parallel_family() {
    for &k in &[1usize, 2, 4] {
        let net = gen_series_parallel(k).unwrap();
        let d = net.deadline;
        let lf = series_parallel_layered(&net);
        let flow = lf.propagate(&net, d).unwrap();
        let m_f = throughput(&flow, d);
        assert_close(m_f, 2.0, 1e-6, &format!("equilibrium mass at k={k}"));

        let m_star = time_expanded_max_throughput(&net, d, 1.0).unwrap().value;
        assert_close(m_star, (k + 2) as f64, 1e-9, &format!("optimum at k={k}"));

        let t_poa = m_star / m_f;
        assert_close(t_poa, 1.0 + k as f64 / 2.0, 1e-5, "throughput ratio");

        // D*(2) = 2: reduce each used path to an independent link (EDF
        // water-filling also caps at the source rate)
        let path_links: Vec<Link> = lf.paths.iter().map(|p| p.as_link()).collect();
        let d_star = optimal_deadline_parallel(&path_links, 1.0, m_f).value;
        assert_close(
            d_star,
            2.0,
            1e-5,
            "optimal deadline for the equilibrium mass",
        );
        let m_poa = d / d_star;
        assert_close(m_poa, 1.0 + k as f64 / 2.0, 1e-4, "makespan ratio");

        // bisection oracle on the time expansion corroborates D* = 2
        let delta = 1.0 / 32.0;
        let mut lo_steps = 1usize;
        let mut hi_steps = ((d / delta).round() as usize).max(2);
        let err = 1.0 * delta * (2.0 * k as f64 + 1.0);
        while lo_steps + 1 < hi_steps {
            let mid = (lo_steps + hi_steps) / 2;
            let val = time_expanded_max_throughput(&net, mid as f64 * delta, delta)
                .unwrap()
                .value;
            if val >= m_f - err {
                hi_steps = mid;
            } else {
                lo_steps = mid;
            }
        }
        let d_bisect = hi_steps as f64 * delta;
        assert!(
            (d_bisect - 2.0).abs() <= 0.2 + err,
            "bisection oracle for D*: {d_bisect} (err budget {err})"
        );
    }
    println!("criterion 5: PASS - series-parallel: M_f = 2, M* = k+2 exact, both ratios 1+k/2 for k in {{1,2,4}}");
}

#[test]
fn criterion_06_nash_verification() {
    // layered flows of the criterion-1/2 family (subsampled for runtime)
    let mut rng = SplitMix64::new(0xC1);
    for i in 0..1000 {
        let (links, u, d) = random_carrying_links(&mut rng, 20);
        if i % 5 != 0 {
            continue;
        }
        let net = parallel_net(&links, u, d);
        let paths = enumerate_paths(&net).unwrap();
        let thetas = layered_thetas_parallel(&links, u, d);
        let lf = LayeredFlow::new(paths, thetas);
        let flow = lf.propagate(&net, d).unwrap();
        let report = verify_nash(&net, &flow, 1e-9);
        assert!(
            report.is_nash(),
            "instance {i}: violations {:?}, phase {:?}, monotone {}",
            report.violations.first(),
            report.phase_violations.first(),
            report.cost_monotone
        );
    }

    // the named families
    for &k in &[1usize, 2, 3, 10, 100] {
        let net = gen_equal_links(k).unwrap();
        let links = net.as_parallel_links().unwrap();
        let paths = enumerate_paths(&net).unwrap();
        let lf = LayeredFlow::new(paths, layered_thetas_parallel(&links, 1.0, 1.0));
        let flow = lf.propagate(&net, 1.0).unwrap();
        let report = verify_nash(&net, &flow, 1e-9);
        assert!(report.is_nash() && report.cost_monotone);
    }
    for &eps in &[0.5, 0.1, 0.001] {
        let net = gen_two_link_eps(eps).unwrap();
        let links = net.as_parallel_links().unwrap();
        let paths = enumerate_paths(&net).unwrap();
        let lf = LayeredFlow::new(paths, layered_thetas_parallel(&links, 1.0, 1.0));
        let flow = lf.propagate(&net, 1.0).unwrap();
        let report = verify_nash(&net, &flow, 1e-9);
        assert!(report.is_nash() && report.cost_monotone);
    }
    for &k in &[1usize, 2, 4] {
        let net = gen_series_parallel(k).unwrap();
        let lf = series_parallel_layered(&net);
        let flow = lf.propagate(&net, net.deadline).unwrap();
        let report = verify_nash(&net, &flow, 1e-9);
        assert!(report.is_nash() && report.cost_monotone);
    }

    // perturbed two-link flow starting on the expensive link: must fail with
    // a witness naming the cheap path
    let net = gen_two_link_eps(0.5).unwrap();
    let paths = enumerate_paths(&net).unwrap();
    let inflows = vec![StepFunction::zero(), StepFunction::from_onward(0.0, 1.0)];
    let flow = flowtime::dynamics::propagate(&net, &paths, &inflows, 1.0).unwrap();
    let report = verify_nash(&net, &flow, 1e-9);
    assert!(!report.is_nash());
    let witness = &report.violations[0];
    assert_eq!(witness.path, 1, "expensive path carries the flow");
    assert_eq!(witness.better_path, 0, "cheap path is the witness");

    println!("criterion 6: PASS - equilibrium verification accepts all constructed layered flows (with monotone cost signal) and rejects the perturbed flow with a witness");
}

#[test]
fn criterion_07_greedy_equals_time_expanded() {
    let mut rng = SplitMix64::new(0xC7);
    let mut max_rel = 0.0_f64;
    for i in 0..500 {
        let k = rng.uniform_usize(1, 8);
        let u = rng.uniform(0.5, 2.0);
        let d = rng.uniform(0.5, 2.0);
        let delta = d / 256.0;
        let links: Vec<Link> = (0..k)
            .map(|j| Link {
                // transits on the discretization grid
                transit: (rng.uniform(0.0, 0.9) * 256.0).floor() * delta,
                capacity: rng.uniform(0.05, u),
                cost: (j + 1) as f64,
            })
            .collect();
        let net = parallel_net(&links, u, d);
        let exact = max_throughput_parallel(&links, u, d).value;
        let expanded = time_expanded_max_throughput(&net, d, delta).unwrap().value;
        let budget = u * delta * (k as f64 + 1.0);
        let diff = (exact - expanded).abs();
        assert!(
            diff <= budget,
            "instance {i}: greedy {exact} vs expanded {expanded} (budget {budget})"
        );
        max_rel = max_rel.max(diff / budget);
    }
    println!(
        "criterion 7: PASS - greedy vs time-expanded within u*delta*(k+1) on 500 instances (worst {:.0}% of budget)",
        max_rel * 100.0
    );
}

#[test]
fn criterion_08_fixed_point_matches_recursion() {
    let mut rng = SplitMix64::new(0xC8);
    let mut max_sweeps = 0usize;
    for i in 0..100 {
        let (links, u, d) = random_carrying_links(&mut rng, 10);
        let net = parallel_net(&links, u, d);
        let paths = enumerate_paths(&net).unwrap();
        let outcome = layered_nash_general(&net, &paths, 1e-8, 200)
            .unwrap_or_else(|e| panic!("instance {i} did not converge: {e}"));
        assert!(outcome.sweeps <= 200);
        max_sweeps = max_sweeps.max(outcome.sweeps);
        let rec = layered_thetas_parallel(&links, u, d);
        for (j, (a, b)) in outcome.layered.thetas.iter().zip(rec.iter()).enumerate() {
            assert_close(*a, *b, 1e-6, &format!("instance {i} theta_{j}"));
        }
    }
    println!(
        "criterion 8: PASS - fixed point matches recursion within 1e-6 on 100 instances (max {max_sweeps} sweeps)"
    );
}

#[test]
fn criterion_09_general_tau_worst_case_monotone() {
    for &k in &[2u32, 5, 10] {
        let hi = 1.0 / (k as f64 - 1.0) - 0.01;
        let mut nu = 0.01;
        let mut prev = f64::INFINITY;
        while nu <= hi + 1e-12 {
            let v = worst_case_t_poa_general_tau(k, nu).unwrap();
            assert!(
                v < prev,
                "strictly decreasing in nu1 at k={k}, nu1={nu}: {v} !< {prev}"
            );
            prev = v;
            nu += 0.01;
        }
        let limit = worst_case_t_poa_general_tau(k, 1e-6).unwrap();
        assert_close(limit, 2.0, 1e-4, &format!("limit at k={k}"));
    }
    println!("criterion 9: PASS - general-transit worst case strictly decreasing in nu1, limit 2 within 1e-4");
}

#[test]
fn criterion_10_makespan_decomposition_identity() {
    let mut rng = SplitMix64::new(0xCA);
    for i in 0..200 {
        // u = 1, capacities scaled so they sum below 1, transits leaving
        // every link flow-carrying at the smallest deadline
        let k = rng.uniform_usize(1, 8);
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.1, 1.0)).collect();
        let total: f64 = raw.iter().sum();
        let scale = rng.uniform(0.3, 0.95) / total;
        let mut links = Vec::with_capacity(k);
        let mut theta = 0.0;
        for (j, r) in raw.iter().enumerate() {
            let capacity = r * scale;
            let transit = rng.uniform(0.0, 0.8 * (1.0 - theta));
            links.push(Link {
                transit,
                capacity,
                cost: (j + 1) as f64,
            });
            theta += (1.0 - transit - theta) * capacity;
        }
        let (alpha, beta, gamma) = m_poa_ratio_decomposition(&links, 1.0, 1.0)
            .unwrap_or_else(|e| panic!("instance {i}: {e}"));
        let mut prev = 0.0;
        for &d in &[1.0, 2.0, 4.0, 8.0, 16.0] {
            let net = parallel_net(&links, 1.0, d);
            let report = analyze(&net).unwrap();
            let predicted = alpha * d / (beta * d + gamma);
            assert_close(
                report.m_poa,
                predicted,
                1e-9,
                &format!("instance {i} at D={d}"),
            );
            assert!(
                report.m_poa >= prev - 1e-12,
                "instance {i}: makespan ratio must be non-decreasing in D"
            );
            prev = report.m_poa;
        }
    }
    println!("criterion 10: PASS - alpha*D/(beta*D+gamma) matches the makespan ratio within 1e-9 on 200 instances, non-decreasing over D");
}
