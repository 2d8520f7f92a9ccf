use std::fs;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use heatlab::kernel::srw;
use heatlab::{GraphData, Space};

fn heatlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatlab"));
    cmd.args(args).env_remove("HEATLAB_BUDGET");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn identities_suite_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    let o = heatlab(&["suite", "identities", "--threads", "1", "--out", out], &[]);
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("structural failures: 0; unmet assertions: 0"));
}

#[test]
fn paper_examples_suite_matches_its_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let o = heatlab(&["suite", "paper-examples", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let exps = fs::read_to_string(dir.path().join("experiments.csv")).unwrap();
    let verdicts: Vec<&str> = exps.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(
        verdicts,
        ["FAIL", "FAIL", "FAIL", "PASS", "PASS", "PASS", "FAIL", "PASS", "PASS", "PASS", "PASS", "FAIL", "FAIL"]
    );
}

#[test]
fn usage_errors() {
    assert_eq!(code(&heatlab(&["suite", "everything"], &[])), 2);
    assert_eq!(code(&heatlab(&["run", "/nonexistent/config"], &[])), 2);
    assert_eq!(code(&heatlab(&["frobnicate"], &[])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[experiment]\nop = polynomials\nn_max = lots\n").unwrap();
    let o = heatlab(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = heatlab(
        &["suite", "identities", "--out", dir.path().to_str().unwrap()],
        &[("HEATLAB_BUDGET", "many")],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn env_budget_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("walk.cfg");
    fs::write(
        &cfg,
        "budget = 100000000000\n[space]\nkind = lattice\ndim = 1\nside = 201\n[kernel]\nkind = ball_walk\nh = 1\n[experiment]\nop = parabolic_harnack\nr = 24\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let args = ["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(code(&heatlab(&args, &[])), 0);
    assert_eq!(code(&heatlab(&args, &[("HEATLAB_BUDGET", "1000")])), 4);
}

#[test]
fn seed_flag_changes_recorded_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    fs::write(&cfg, "seed = 1\n[experiment]\nop = polynomials\nn_max = 4\ntrials = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = heatlab(&["run", cfg.to_str().unwrap(), "--seed", "77", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let exps = fs::read_to_string(out.join("experiments.csv")).unwrap();
    assert!(exps.lines().nth(1).unwrap().starts_with("1,polynomials,77,"));
}

#[test]
fn net_build_writes_a_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("space.cfg");
    fs::write(&cfg, "[space]\nkind = lattice\ndim = 2\nside = 20\n").unwrap();
    let file = dir.path().join("net.txt");
    let o = heatlab(&["net-build", cfg.to_str().unwrap(), "--eps", "2", "-o", file.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = GraphData::parse(&fs::read_to_string(&file).unwrap()).unwrap();
    let space = Space::build(heatlab::SpaceSpec::Lattice { dim: 2, side: 20 }).unwrap();
    let net = heatlab::net::build_net(&space, 2.0).unwrap();
    assert_eq!(g, net.to_graph_data());
    assert_eq!(code(&heatlab(&["net-build", cfg.to_str().unwrap(), "--eps", "0", "-o", file.to_str().unwrap()], &[])), 2);
}

#[test]
fn audit_kernel_reads_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let space = Space::from_graph(GraphData::cycle(12)).unwrap();
    let lazy = dir.path().join("lazy.txt");
    fs::write(&lazy, srw(&space).unwrap().lazy().to_text()).unwrap();
    let o = heatlab(&["audit-kernel", lazy.to_str().unwrap(), "--h", "1", "--hp", "1"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("verdict = PASS"));
    assert!(text.contains("points_audited = 12"));
    let broken = dir.path().join("broken.txt");
    fs::write(&broken, "kernel 2 1\nm 0 1\n").unwrap();
    let o = heatlab(&["audit-kernel", broken.to_str().unwrap(), "--h", "1", "--hp", "1"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn threads_one_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = heatlab(&["suite", "paper-examples", "--threads", "1", "--dump-witness", "--out", out.to_str().unwrap()], &[]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(a.join("manifest.sha256")).unwrap(), fs::read(b.join("manifest.sha256")).unwrap());
    assert!(a.join("01_poincare_witness.csv").exists());
}
