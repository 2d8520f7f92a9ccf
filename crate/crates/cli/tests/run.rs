use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use heatlab_cli::runner::{EXIT_ASSERT, EXIT_BUDGET, EXIT_OK, EXIT_STRUCTURAL};
use heatlab_cli::{run, ExperimentConfig, Report, RunOptions};
use sha2::{Digest, Sha256};

fn go(text: &str, out: &Path) -> Report {
    go_with(text, out, heatlab::kernel::DEFAULT_BUDGET, false)
}

// The budget and its application counter are process-wide.
static SERIAL: Mutex<()> = Mutex::new(());

fn go_with(text: &str, out: &Path, budget: u64, dump_witness: bool) -> Report {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
    run(
        &cfg,
        &RunOptions {
            out: out.to_path_buf(),
            dump_witness,
            budget,
        },
    )
    .unwrap()
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

const BROKEN: &str = "
[space]
kind = broken_line
window = 5.25
step = 0.05
[kernel]
kind = ball_walk
h = 0.4
[experiment]
op = poincare
h = 0.4
r = 5
assert = false
";

#[test]
fn broken_line_poincare_is_infinite_without_failing_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let rep = go(BROKEN, dir.path());
    assert_eq!(rep.exit_code(), EXIT_OK);
    let consts = read_csv(&dir.path().join("constants.csv"));
    let value = consts.iter().find(|r| r["name"] == "value").unwrap();
    assert_eq!(value["value"], "inf");
    let exps = read_csv(&dir.path().join("experiments.csv"));
    assert_eq!(exps[0]["verdict"], "FAIL");
    assert_eq!(exps[0]["label"], "degenerate");
    assert_eq!(exps[0]["structural_ok"], "true");
}

#[test]
fn asserted_expectations_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let asserted = BROKEN.replace("assert = false", "assert = true");
    assert_eq!(go(&asserted, dir.path()).exit_code(), EXIT_ASSERT);
    let expected = asserted.replace("assert = true", "assert = true\nexpect = fail");
    assert_eq!(go(&expected, dir.path()).exit_code(), EXIT_OK);
}

#[test]
fn lattice_gaussian_and_parabolic_battery_pass() {
    let dir = tempfile::tempdir().unwrap();
    let rep = go(
        "seed = 9
[space]
kind = lattice
dim = 2
side = 101
[kernel]
kind = ball_walk
h = 1
lazy = true
[experiment]
op = gaussian_fit
n_min = 64
n_max = 256
assert = true
[experiment]
op = parabolic_harnack
r = 16
doubled = true
assert = true
",
        dir.path(),
    );
    assert_eq!(rep.exit_code(), EXIT_OK, "{}", rep.summary);
    let exps = read_csv(&dir.path().join("experiments.csv"));
    assert_eq!(exps.iter().map(|r| r["verdict"].as_str()).collect::<Vec<_>>(), ["PASS", "PASS"]);
    // the diagonal table is what the verdict was computed from
    let diag = read_csv(&dir.path().join("01_gaussian_fit.csv"));
    assert!(!diag.is_empty());
    for row in &diag {
        let rho: f64 = row["rho"].parse().unwrap();
        assert!((0.05..=20.0).contains(&rho));
    }
    let svg = fs::read_to_string(dir.path().join("01_gaussian_fit.svg")).unwrap();
    assert!(svg.starts_with(r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600""#));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline"));
}

#[test]
fn empty_experiment_list_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = go("seed = 1\n", dir.path());
    assert_eq!(rep.exit_code(), EXIT_OK);
    assert!(rep.records.is_empty());
    assert!(read_csv(&dir.path().join("experiments.csv")).is_empty());
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn manifest_digests_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let rep = go_with(BROKEN, dir.path(), heatlab::kernel::DEFAULT_BUDGET, true);
    let listed: HashSet<String> = rep.manifest.iter().map(|(n, _)| n.clone()).collect();
    let on_disk: HashSet<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.sha256")
        .collect();
    assert_eq!(listed, on_disk);
    assert!(listed.contains("01_poincare_witness.csv"));
    let manifest = fs::read_to_string(dir.path().join("manifest.sha256")).unwrap();
    for line in manifest.lines() {
        let (digest, name) = line.split_once("  ").unwrap();
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(digest, hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn witness_is_a_two_component_step() {
    let dir = tempfile::tempdir().unwrap();
    go_with(BROKEN, dir.path(), heatlab::kernel::DEFAULT_BUDGET, true);
    let w = read_csv(&dir.path().join("01_poincare_witness.csv"));
    let values: HashSet<String> = w.iter().map(|r| r["value"].clone()).collect();
    assert!(values.len() >= 2);
}

#[test]
fn runs_are_byte_identical() {
    let text = "seed = 4
[space]
kind = lattice
dim = 2
side = 41
[kernel]
kind = ball_walk
h = 1
[experiment]
op = elliptic_harnack
r = 8
trials = 10
[experiment]
op = net
eps = 3
[experiment]
op = caccioppoli
support = 8
r = 6
steps = 10
trials = 2
[experiment]
op = doubling
radii = 2, 4, 8
";
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = go(text, a.path());
    let rb = go(text, b.path());
    assert_eq!(ra.manifest, rb.manifest);
    assert_eq!(
        fs::read(a.path().join("manifest.sha256")).unwrap(),
        fs::read(b.path().join("manifest.sha256")).unwrap()
    );
}

#[test]
fn summary_numbers_trace_to_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BROKEN}\n[experiment]\nop = polynomials\nn_max = 10\ntrials = 20\n");
    let rep = go(&text, dir.path());
    let consts = read_csv(&dir.path().join("constants.csv"));
    let exps = read_csv(&dir.path().join("experiments.csv"));
    let cells: HashSet<String> = consts.iter().chain(&exps).flat_map(|r| r.values().cloned()).collect();
    let mut seen = 0;
    for line in rep.summary.lines() {
        if let Some((_, v)) = line.trim().split_once(" = ") {
            assert!(cells.contains(v), "{line}");
            seen += 1;
        }
        if let Some(rest) = line.split(" seed ").nth(1) {
            assert!(cells.contains(rest.split_whitespace().next().unwrap()), "{line}");
        }
    }
    assert_eq!(seen, consts.len());
}

#[test]
fn budget_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = "
[space]
kind = lattice
dim = 1
side = 201
[kernel]
kind = ball_walk
h = 1
[experiment]
op = parabolic_harnack
r = 24
[experiment]
op = polynomials
";
    let before = heatlab::kernel::budget();
    let rep = go_with(text, dir.path(), 1_000, false);
    assert_eq!(rep.exit_code(), EXIT_BUDGET);
    assert_eq!(rep.records.len(), 1);
    assert!(rep.records[0].error.as_ref().unwrap().contains("budget"));
    // the previous limit is restored afterwards
    assert_eq!(heatlab::kernel::budget(), before);
}

#[test]
fn operation_errors_are_structural() {
    let dir = tempfile::tempdir().unwrap();
    // a ball reaching past the window
    let text = "
[space]
kind = euclidean_radial
dim = 1
window = 3
step = 0.1
[kernel]
kind = ball_walk
h = 0.5
[experiment]
op = spectral_gap
r = 10
[experiment]
op = polynomials
n_max = 5
trials = 5
";
    let rep = go(text, dir.path());
    assert_eq!(rep.exit_code(), EXIT_STRUCTURAL);
    assert!(rep.records[0].error.is_some());
    // later experiments still run
    assert!(rep.records[1].outcome.is_some());
}

#[test]
fn bipartite_forms() {
    let dir = tempfile::tempdir().unwrap();
    let rep = go(
        "[space]\nkind = bipartite\nleft = 1\nright = 1\n[kernel]\nkind = srw\n[experiment]\nop = forms\nf = 1, -1\n",
        dir.path(),
    );
    let o = rep.records[0].outcome.as_ref().unwrap();
    let c: BTreeMap<_, _> = o.constants.iter().cloned().collect();
    assert_eq!((c["energy"], c["energy_star"]), (4.0, 0.0));
    assert_eq!(o.verdict.name(), "FAIL");
}

#[test]
fn every_operation_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "
[experiment]
op = polynomials
n_max = 6
trials = 10
[experiment]
op = tree_profile
times = 4, 16
[space]
kind = lattice
dim = 1
side = 81
[experiment]
op = doubling
radii = 2, 4, 8
[experiment]
op = reverse_doubling
radii = 2, 4, 8
b = 2
[experiment]
op = net
eps = 3
[experiment]
op = poincare
h = 1
r = 6
[kernel]
kind = ball_walk
h = 1
lazy = true
[experiment]
op = compat
[experiment]
op = pseudo_poincare
s = 4
trials = 5
[experiment]
op = sobolev
r = 8
delta = 2.5
trials = 5
[experiment]
op = nash
r = 8
delta = 2.5
trials = 5
[experiment]
op = ultracontractivity
r = 8
kmax = 20
delta = 1
[experiment]
op = spectral_gap
r = 8
[experiment]
op = caccioppoli
support = 10
r = 8
steps = 10
trials = 2
[experiment]
op = imp
[experiment]
op = elliptic_harnack
r = 8
trials = 5
[experiment]
op = parabolic_harnack
r = 8
trials = 5
[experiment]
op = reverse_poincare
r = 8
trials = 5
[experiment]
op = balayage
r = 20
r1 = 6
b = 30
trials = 3
[experiment]
op = on_diagonal
times = 4, 16
[experiment]
op = ed_profile
d = 16
kmax = 20
[experiment]
op = gaussian_fit
n_min = 4
n_max = 16
centers = 2
[experiment]
op = recurrence
n_max = 30
[experiment]
op = identities
steps = 4
trials = 3
[experiment]
op = green
kmax = 50
[experiment]
op = forms
f = 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0
";
    let rep = go(text, dir.path());
    let ran: HashSet<&str> = rep.records.iter().map(|r| r.op.as_str()).collect();
    for spec in heatlab_cli::ops::OPS {
        assert!(ran.contains(spec.name), "{} not exercised", spec.name);
    }
    for r in &rep.records {
        assert!(r.error.is_none(), "{}: {:?}", r.op, r.error);
        assert!(r.structural_ok(), "{}: {:?}", r.op, r.failed_checks());
    }
}
