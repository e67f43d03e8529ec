//! End-to-end tests of the binary: exit codes, error categories, round trips
//! against the in-process results, and byte-identical determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowtime"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("flowtime-cli-{name}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn malformed_instance_exits_2_with_parse_category() {
    let dir = tmp_dir("parse");
    let path = dir.join("bad.json");
    std::fs::write(&path, "{\"vertices\": [}").unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error[parse]:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn invalid_network_exits_2_with_violation() {
    let dir = tmp_dir("invalid");
    let path = dir.join("zero_cap.json");
    std::fs::write(
        &path,
        r#"{"vertices":["s","t"],"edges":[{"id":"e","tail":"s","head":"t","transit":0.0,"capacity":0.0,"cost":0.0}],"source":"s","sink":"t","inflow_rate":1.0,"deadline":1.0}"#,
    )
    .unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("capacity must be positive"));
}

#[test]
fn unknown_family_exits_2() {
    let out = bin()
        .args(["generate", "mystery", "--k", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[family]:"));
}

#[test]
fn generate_nash_poa_round_trip_matches_in_process() {
    let dir = tmp_dir("roundtrip");
    let inst = dir.join("eq5.json");
    let ok = bin()
        .args(["generate", "equal_links", "--k", "5", "--out"])
        .arg(&inst)
        .output()
        .unwrap();
    assert!(ok.status.success());

    let out = bin().arg("poa").arg(&inst).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let (m_f, m_star, t_poa): (f64, f64, f64) = (
        fields[0].parse().unwrap(),
        fields[1].parse().unwrap(),
        fields[4].parse().unwrap(),
    );

    let net = flowtime::instances::gen_equal_links(5).unwrap();
    let report = flowtime::poa::analyze(&net).unwrap();
    assert_eq!(m_f, report.m_f);
    assert_eq!(m_star, report.m_star);
    assert_eq!(t_poa, report.t_poa);

    // nash switch points equal the in-process recursion, exactly
    let out = bin().arg("nash").arg(&inst).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let links = net.as_parallel_links().unwrap();
    let thetas = flowtime::nash::layered_thetas_parallel(&links, 1.0, 1.0);
    for (i, line) in text.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let start: f64 = fields[2].parse().unwrap();
        let end: f64 = fields[3].parse().unwrap();
        assert_eq!(start, thetas[i]);
        assert_eq!(end, thetas[i + 1]);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tmp_dir("determinism");
    let inst = dir.join("sp2.json");
    assert!(bin()
        .args(["generate", "series_parallel", "--k", "2", "--out"])
        .arg(&inst)
        .status()
        .unwrap()
        .success());
    let a = bin().arg("poa").arg(&inst).output().unwrap();
    let b = bin().arg("poa").arg(&inst).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let s1 = bin()
        .args(["sweep", "two_link_eps", "eps=0.5,0.25,0.125"])
        .output()
        .unwrap();
    let s2 = bin()
        .args(["sweep", "two_link_eps", "eps=0.5,0.25,0.125"])
        .output()
        .unwrap();
    assert_eq!(s1.stdout, s2.stdout);
}

#[test]
fn sweep_equal_links_monotone_toward_limit() {
    let out = bin()
        .args(["sweep", "equal_links", "k=1..100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let limit = std::f64::consts::E / (std::f64::consts::E - 1.0);
    let mut prev = 0.0;
    let mut last = 0.0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let t_poa: f64 = fields[6].parse().unwrap();
        assert!(t_poa > prev, "t ratio must increase with k");
        assert!(t_poa <= limit + 1e-9);
        prev = t_poa;
        last = t_poa;
    }
    assert!((limit - last) < 8e-3);
}

#[test]
fn simulate_dumps_edge_states_and_labels() {
    let dir = tmp_dir("simulate");
    let inst = dir.join("two.json");
    assert!(bin()
        .args(["generate", "two_link_eps", "--eps", "0.5", "--out"])
        .arg(&inst)
        .status()
        .unwrap()
        .success());
    let inflows = dir.join("inflows.csv");
    std::fs::write(&inflows, "path,start,end,rate\n1,0,0.5,1\n").unwrap();
    let edges_out = dir.join("flow.csv");
    let out = bin()
        .arg("simulate")
        .arg(&inst)
        .arg("--inflows")
        .arg(&inflows)
        .arg("--out")
        .arg(&edges_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let edges = std::fs::read_to_string(&edges_out).unwrap();
    assert!(
        edges.starts_with("edge,interval_start,interval_end,inflow,outflow,queue_start,queue_end")
    );
    assert!(edges.contains("upper"));
    let labels = std::fs::read_to_string(dir.join("flow.labels.csv")).unwrap();
    assert!(labels.starts_with("path,edges,theta,arrival"));
}

#[test]
fn nash_svg_output_is_svg() {
    let dir = tmp_dir("svg");
    let inst = dir.join("eq3.json");
    assert!(bin()
        .args(["generate", "equal_links", "--k", "3", "--out"])
        .arg(&inst)
        .status()
        .unwrap()
        .success());
    let out = bin()
        .args(["nash"])
        .arg(&inst)
        .args(["--format", "svg"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("<svg"));
}
