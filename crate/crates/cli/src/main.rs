//! Command-line interface: validate instances, construct equilibria, compute
//! optimal flows, report price-of-anarchy figures, sweep instance families
//! and dump simulation state.
//!
//! Exit codes: 0 on success, 1 on computation errors (e.g. the fixed point
//! does not converge), 2 on input errors (unreadable, unparseable or invalid
//! instances, bad parameters). Errors print to stderr as
//! `error[category]: message`.

mod svg;

use clap::{Parser, Subcommand, ValueEnum};
use flowtime::dynamics::{first_late_particle, propagate, throughput, verify_nash};
use flowtime::instances;
use flowtime::nash::{layered_nash_general, layered_thetas_parallel, LayeredFlow};
use flowtime::network::{enumerate_paths, validate, Link, Network};
use flowtime::optimal::{max_throughput_parallel, time_expanded_max_throughput};
use flowtime::poa::{analyze_with, AnalyzeOptions, PoaReport};
use flowtime::pwl::StepFunction;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "flowtime",
    version,
    about = "Flows over time with costs and deadlines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and report violations and prune warnings.
    Validate { instance: PathBuf },
    /// Construct the layered equilibrium and verify it.
    Nash {
        instance: PathBuf,
        /// Fixed-point tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Fixed-point sweep cap.
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Compute the maximum-throughput flow before the deadline.
    Optimal {
        instance: PathBuf,
        /// Time-expansion step for non-parallel networks (default D/256).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Equilibrium vs optimum: both ratios and bound flags, one CSV row.
    Poa {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze a family over a parameter range, one CSV row per instance.
    ///
    /// Range syntax: `k=1..100` (integer, inclusive) or `eps=0.5,0.1,0.001`.
    Sweep {
        /// Family: equal_links, two_link_eps, series_parallel, random_parallel.
        family: String,
        /// Swept parameter, e.g. `k=1..100` or `eps=0.5,0.1`.
        param: String,
        /// Link count for random_parallel (its swept parameter is the seed).
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Write an instance file for a named family.
    Generate {
        /// Family: equal_links, two_link_eps, series_parallel,
        /// random_parallel, random_dag.
        family: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate user-supplied path inflows and dump the edge states.
    ///
    /// The inflow file is CSV with header `path,start,end,rate`; paths are
    /// 1-based indices into the cost-ordered path list (see `nash` output).
    Simulate {
        instance: PathBuf,
        #[arg(long)]
        inflows: PathBuf,
        /// Simulation/reporting horizon (default: the deadline).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct CliError {
    category: &'static str,
    message: String,
    exit: i32,
}

impl CliError {
    fn input(category: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
            exit: 2,
        }
    }

    fn compute(category: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
            exit: 1,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.message);
            std::process::exit(e.exit);
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Nash {
            instance,
            tol,
            max_iter,
            out,
            format,
        } => cmd_nash(&instance, tol, max_iter, out.as_deref(), format),
        Command::Optimal {
            instance,
            delta,
            out,
        } => cmd_optimal(&instance, delta, out.as_deref()),
        Command::Poa {
            instance,
            tol,
            delta,
            max_iter,
            out,
        } => cmd_poa(&instance, tol, delta, max_iter, out.as_deref()),
        Command::Sweep {
            family,
            param,
            k,
            tol,
            delta,
            max_iter,
            out,
            format,
        } => cmd_sweep(
            &family,
            &param,
            k,
            AnalyzeOptions {
                tol,
                max_sweeps: max_iter,
                delta,
            },
            out.as_deref(),
            format,
        ),
        Command::Generate {
            family,
            k,
            eps,
            n,
            m,
            seed,
            out,
        } => cmd_generate(&family, k, eps, n, m, seed, out.as_deref()),
        Command::Simulate {
            instance,
            inflows,
            horizon,
            out,
        } => cmd_simulate(&instance, &inflows, horizon, out.as_deref()),
    }
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

fn load_instance(path: &Path) -> Result<Network, CliError> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))?;
    flowtime::network::from_json(&data)
        .map_err(|e| CliError::input("parse", format!("{}: {e}", path.display())))
}

fn load_valid_instance(path: &Path) -> Result<Network, CliError> {
    let net = load_instance(path)?;
    let report = validate(&net);
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::input("validate", msgs.join("; ")));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report.pruned)
}

/// Write `data` to `path` (plus a deterministic `<path>.meta` sidecar naming
/// the producing tool) or to stdout when no path is given.
fn emit(out: Option<&Path>, data: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, data)
                .map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))?;
            let meta = format!(
                "producer: {} {}\n",
                env!("CARGO_PKG_NAME"),
                env!("CARGO_PKG_VERSION")
            );
            let mut meta_path = path.as_os_str().to_owned();
            meta_path.push(".meta");
            let meta_path = PathBuf::from(meta_path);
            std::fs::write(&meta_path, meta)
                .map_err(|e| CliError::input("io", format!("{}: {e}", meta_path.display())))?;
            Ok(())
        }
        None => {
            print!("{data}");
            Ok(())
        }
    }
}

fn paths_edge_disjoint(paths: &[flowtime::network::Path]) -> bool {
    let mut seen = std::collections::HashSet::new();
    paths
        .iter()
        .all(|p| p.edges.iter().all(|e| seen.insert(*e)))
}

/// Layered equilibrium for a validated network: exact recursion on the
/// parallel-path reduction when possible, fixed-point iteration otherwise.
/// The second value is the construction residual on the switch points (zero
/// for the exact recursion).
fn construct_layered(
    net: &Network,
    tol: f64,
    max_iter: usize,
) -> Result<(LayeredFlow, f64), CliError> {
    let paths = enumerate_paths(net).map_err(|e| CliError::input("paths", e.to_string()))?;
    if paths_edge_disjoint(&paths) {
        let links: Vec<Link> = paths.iter().map(|p| p.as_link()).collect();
        let thetas = layered_thetas_parallel(&links, net.inflow_rate, net.deadline);
        Ok((LayeredFlow::new(paths, thetas), 0.0))
    } else {
        let outcome = layered_nash_general(net, &paths, tol, max_iter)
            .map_err(|e| CliError::compute("no-convergence", e.to_string()))?;
        Ok((outcome.layered, outcome.residual))
    }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let net = load_instance(path)?;
    let report = validate(&net);
    for v in &report.violations {
        println!("violation: {v}");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.is_valid() {
        println!(
            "ok: {} vertices, {} edges, u = {}, D = {}",
            report.pruned.vertices.len(),
            report.pruned.edges.len(),
            report.pruned.inflow_rate,
            report.pruned.deadline
        );
        Ok(())
    } else {
        Err(CliError::input(
            "validate",
            format!("{} violation(s)", report.violations.len()),
        ))
    }
}

fn cmd_nash(
    path: &Path,
    tol: f64,
    max_iter: usize,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let net = load_valid_instance(path)?;
    let (layered, residual) = construct_layered(&net, tol, max_iter)?;
    let flow = layered
        .propagate(&net, net.deadline)
        .map_err(|e| CliError::compute("dynamics", e.to_string()))?;
    // verification slack: budget the construction's boundary residual
    // (exact constructions keep the tight default)
    let slack = 1e-9_f64.max(10.0 * residual);
    let report = verify_nash(&net, &flow, slack);
    let m_f = throughput(&flow, net.deadline);
    let theta_bar = first_late_particle(&flow, net.deadline);
    eprintln!(
        "nash: {} paths, mass before deadline {m_f}, first late departure {theta_bar}",
        layered.paths.len()
    );
    match format {
        Format::Csv => emit(out, &layered.to_csv(&net))?,
        Format::Svg => emit(out, &svg::theta_steps(&layered, &net))?,
    }
    if report.is_nash() {
        eprintln!("nash: verified, {} samples", report.samples);
        Ok(())
    } else {
        Err(CliError::compute(
            "verify",
            format!(
                "constructed flow failed verification: {} violation(s), first {:?}",
                report.violations.len(),
                report.violations.first()
            ),
        ))
    }
}

fn cmd_optimal(path: &Path, delta: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let net = load_valid_instance(path)?;
    let paths = enumerate_paths(&net).map_err(|e| CliError::input("paths", e.to_string()))?;
    let sol = if paths_edge_disjoint(&paths) && net.as_parallel_links().is_some() {
        let links = net.as_parallel_links().unwrap();
        max_throughput_parallel(&links, net.inflow_rate, net.deadline)
    } else {
        let d = delta.unwrap_or(net.deadline / 256.0);
        let sol = time_expanded_max_throughput(&net, net.deadline, d)
            .map_err(|e| CliError::compute("discretization", e.to_string()))?;
        for &(e, orig, snap) in &sol.snapped_transits {
            eprintln!(
                "note: transit of edge {} snapped from {orig} to {snap}",
                net.edges[e].id
            );
        }
        sol
    };
    eprintln!("optimal: mass before deadline {}", sol.value);
    emit(out, &sol.to_csv(&net))
}

fn cmd_poa(
    path: &Path,
    tol: f64,
    delta: Option<f64>,
    max_iter: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let net = load_valid_instance(path)?;
    let report = analyze_with(
        &net,
        AnalyzeOptions {
            tol,
            max_sweeps: max_iter,
            delta,
        },
    )
    .map_err(|e| CliError::compute("analyze", e.to_string()))?;
    let data = format!("{}\n{}\n", PoaReport::csv_header(), report.csv_fields());
    emit(out, &data)
}

fn parse_param(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| CliError::input("param", format!("expected name=range, got {spec}")))?;
    let values = if let Some((a, b)) = rest.split_once("..") {
        let lo: i64 = a
            .parse()
            .map_err(|_| CliError::input("param", format!("bad range start {a}")))?;
        let hi: i64 = b
            .parse()
            .map_err(|_| CliError::input("param", format!("bad range end {b}")))?;
        if hi < lo {
            return Err(CliError::input("param", format!("empty range {spec}")));
        }
        (lo..=hi).map(|v| v as f64).collect()
    } else {
        rest.split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| CliError::input("param", format!("bad value {v}")))
            })
            .collect::<Result<Vec<f64>, _>>()?
    };
    Ok((name.to_string(), values))
}

fn cmd_sweep(
    family: &str,
    param: &str,
    k_fixed: usize,
    opts: AnalyzeOptions,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let (pname, values) = parse_param(param)?;
    let gen_err = |e: instances::InstanceError| CliError::input("domain", e.to_string());
    let mut rows: Vec<(f64, PoaReport)> = Vec::with_capacity(values.len());
    for &v in &values {
        let net = match (family, pname.as_str()) {
            ("equal_links", "k") => instances::gen_equal_links(v as usize).map_err(gen_err)?,
            ("two_link_eps", "eps") => instances::gen_two_link_eps(v).map_err(gen_err)?,
            ("series_parallel", "k") => {
                instances::gen_series_parallel(v as usize).map_err(gen_err)?
            }
            ("random_parallel", "seed") => instances::gen_random_parallel(k_fixed, v as u64),
            _ => {
                return Err(CliError::input(
                    "family",
                    format!("unknown family/parameter combination {family}/{pname}"),
                ))
            }
        };
        let report =
            analyze_with(&net, opts).map_err(|e| CliError::compute("analyze", e.to_string()))?;
        rows.push((v, report));
    }
    match format {
        Format::Csv => {
            let mut data = format!("family,{},{}\n", pname, PoaReport::csv_header());
            for (v, report) in &rows {
                data.push_str(&format!("{},{},{}\n", family, v, report.csv_fields()));
            }
            emit(out, &data)
        }
        Format::Svg => {
            let t_curve: Vec<(f64, f64)> = rows.iter().map(|(v, r)| (*v, r.t_poa)).collect();
            let m_curve: Vec<(f64, f64)> = rows.iter().map(|(v, r)| (*v, r.m_poa)).collect();
            emit(
                out,
                &svg::line_plot(
                    &format!("{family}: inefficiency over {pname}"),
                    &pname,
                    &[("t-ratio", &t_curve), ("m-ratio", &m_curve)],
                ),
            )
        }
    }
}

fn cmd_generate(
    family: &str,
    k: Option<usize>,
    eps: Option<f64>,
    n: Option<usize>,
    m: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let need_k =
        || k.ok_or_else(|| CliError::input("param", format!("family {family} requires --k")));
    let gen_err = |e: instances::InstanceError| CliError::input("domain", e.to_string());
    let net = match family {
        "equal_links" => instances::gen_equal_links(need_k()?).map_err(gen_err)?,
        "series_parallel" => instances::gen_series_parallel(need_k()?).map_err(gen_err)?,
        "two_link_eps" => {
            let eps = eps.ok_or_else(|| CliError::input("param", "two_link_eps requires --eps"))?;
            instances::gen_two_link_eps(eps).map_err(gen_err)?
        }
        "random_parallel" => instances::gen_random_parallel(need_k()?, seed),
        "random_dag" => {
            let n = n.ok_or_else(|| CliError::input("param", "random_dag requires --n"))?;
            let m = m.ok_or_else(|| CliError::input("param", "random_dag requires --m"))?;
            instances::gen_random_dag(n, m, seed).map_err(gen_err)?
        }
        _ => {
            return Err(CliError::input(
                "family",
                format!("unknown family {family}"),
            ))
        }
    };
    emit(out, &(flowtime::network::to_json(&net) + "\n"))
}

fn parse_inflow_blocks(data: &str, n_paths: usize) -> Result<Vec<StepFunction>, CliError> {
    let mut per_path: Vec<StepFunction> = vec![StepFunction::zero(); n_paths];
    for (lineno, line) in data.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("path")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::input(
                "parse",
                format!("inflow line {}: expected path,start,end,rate", lineno + 1),
            ));
        }
        let parse_f = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                CliError::input(
                    "parse",
                    format!("inflow line {}: bad number {s}", lineno + 1),
                )
            })
        };
        let path: usize = fields[0].trim().parse().map_err(|_| {
            CliError::input(
                "parse",
                format!("inflow line {}: bad path index {}", lineno + 1, fields[0]),
            )
        })?;
        if path == 0 || path > n_paths {
            return Err(CliError::input(
                "parse",
                format!(
                    "inflow line {}: path {path} out of range 1..={n_paths}",
                    lineno + 1
                ),
            ));
        }
        let (start, end, rate) = (
            parse_f(fields[1])?,
            parse_f(fields[2])?,
            parse_f(fields[3])?,
        );
        if rate < 0.0 || end <= start {
            return Err(CliError::input(
                "parse",
                format!(
                    "inflow line {}: empty interval or negative rate",
                    lineno + 1
                ),
            ));
        }
        per_path[path - 1] = per_path[path - 1].add(&StepFunction::block(start, end, rate));
    }
    Ok(per_path)
}

fn cmd_simulate(
    path: &Path,
    inflows_path: &Path,
    horizon: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let net = load_valid_instance(path)?;
    let paths = enumerate_paths(&net).map_err(|e| CliError::input("paths", e.to_string()))?;
    let data = std::fs::read_to_string(inflows_path)
        .map_err(|e| CliError::input("io", format!("{}: {e}", inflows_path.display())))?;
    let inflows = parse_inflow_blocks(&data, paths.len())?;
    let horizon = horizon.unwrap_or(net.deadline);
    let flow = propagate(&net, &paths, &inflows, horizon)
        .map_err(|e| CliError::compute("dynamics", e.to_string()))?;
    let edges_csv = flowtime::dynamics::edges_to_csv(&net, &flow, horizon);
    let labels_csv = flowtime::dynamics::labels_to_csv(&net, &flow, horizon);
    match out {
        Some(p) => {
            emit(Some(p), &edges_csv)?;
            let mut labels_path = p.file_stem().map(|s| s.to_owned()).unwrap_or_default();
            labels_path.push(".labels.csv");
            let labels_path = p.with_file_name(labels_path);
            emit(Some(&labels_path), &labels_csv)?;
            eprintln!(
                "simulate: edge states in {}, labels in {}",
                p.display(),
                labels_path.display()
            );
            Ok(())
        }
        None => {
            print!("{edges_csv}\n{labels_csv}");
            Ok(())
        }
    }
}
