//! Runs a parsed config and writes the artifact directory.
//!
//! Layout: `experiments.csv`, `constants.csv`, one `NN_op*.csv` per result
//! table, `NN_op.svg` plots, optional `NN_op_witness.csv`, `summary.txt`, and
//! `manifest.sha256` in `sha256sum` format. Nothing written depends on the
//! clock, so single-threaded runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use heatlab::kernel::{self, annulus_walk, ball_walk, srw, KernelDump};
use heatlab::{Kernel, Space};
use sha2::{Digest, Sha256};

use crate::config::{Expect, ExperimentConfig, KernelConfig, KernelKind};
use crate::ops::{self, num, Ctx, OpError, Outcome, Table, Verdict};

pub const EXIT_OK: i32 = 0;
/// An experiment marked `assert = true` did not meet its expectation.
pub const EXIT_ASSERT: i32 = 1;
/// Config, usage or I/O problem (clap uses 2 as well).
pub const EXIT_USAGE: i32 = 2;
/// A structural invariant failed or an operation errored.
pub const EXIT_STRUCTURAL: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub dump_witness: bool,
    /// Kernel-entry applications allowed per experiment.
    pub budget: u64,
}

#[derive(Clone, Debug)]
pub struct Record {
    pub index: usize,
    pub op: String,
    pub seed: u64,
    pub assert: bool,
    pub expect: Expect,
    /// `None` when the operation errored.
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
    /// The error came from a malformed config value, not from the computation.
    pub config_error: bool,
}

impl Record {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.outcome
            .iter()
            .flat_map(|o| o.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()))
            .collect()
    }

    pub fn structural_ok(&self) -> bool {
        self.error.is_none() && self.failed_checks().is_empty()
    }

    pub fn meets_expectation(&self) -> bool {
        match (&self.outcome, self.expect) {
            (Some(o), Expect::Pass) => o.verdict == Verdict::Pass,
            (Some(o), Expect::Fail) => o.verdict == Verdict::Fail,
            (None, _) => false,
        }
    }

    fn stem(&self) -> String {
        format!("{:02}_{}", self.index, self.op)
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub records: Vec<Record>,
    /// `(file name, sha256 hex)` for every emitted file, sorted by name.
    pub manifest: Vec<(String, String)>,
    pub wall_clock: f64,
    pub budget_exceeded: bool,
    pub summary: String,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.budget_exceeded {
            EXIT_BUDGET
        } else if self.records.iter().any(|r| r.config_error) {
            EXIT_USAGE
        } else if self.records.iter().any(|r| !r.structural_ok()) {
            EXIT_STRUCTURAL
        } else if self.records.iter().any(|r| r.assert && !r.meets_expectation()) {
            EXIT_ASSERT
        } else {
            EXIT_OK
        }
    }
}

fn build_kernel(cfg: &KernelConfig, space: &Space) -> Result<Kernel, String> {
    let k = match &cfg.kind {
        KernelKind::BallWalk { h } => ball_walk(space, *h),
        KernelKind::AnnulusWalk { h, h1, h2 } => annulus_walk(space, *h, *h1, *h2),
        KernelKind::Srw => srw(space),
        KernelKind::File { path, h, h_prime } => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            KernelDump::parse(&text).and_then(|d| d.into_kernel(space, *h, *h_prime))
        }
    }
    .map_err(|e| format!("kernel (line {}): {e}", cfg.line))?;
    Ok(if cfg.lazy { k.lazy() } else { k })
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

struct Files {
    dir: PathBuf,
    names: Vec<String>,
}

impl Files {
    fn csv(&mut self, name: String, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
        write_csv(&self.dir.join(&name), header, rows)?;
        self.names.push(name);
        Ok(())
    }

    fn text(&mut self, name: String, body: &str) -> io::Result<()> {
        fs::write(self.dir.join(&name), body)?;
        self.names.push(name);
        Ok(())
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> io::Result<Report> {
    let start = Instant::now();
    fs::create_dir_all(&opts.out)?;
    let saved_budget = kernel::budget();
    kernel::set_budget(opts.budget);

    let mut spaces: Vec<Option<Result<Space, String>>> = vec![None; cfg.spaces.len()];
    let mut kernels: Vec<Option<Result<Kernel, String>>> = vec![None; cfg.kernels.len()];
    // kernels are rebuilt whenever the space they sit on changes
    let mut kernel_space: Vec<Option<usize>> = vec![None; cfg.kernels.len()];
    let mut records = Vec::new();
    let mut budget_exceeded = false;

    for (index, e) in cfg.experiments.iter().enumerate() {
        let spec = ops::lookup(&e.op).expect("validated at parse time");
        let mut rec = Record {
            index: index + 1,
            op: e.op.clone(),
            seed: e.seed,
            assert: e.assert,
            expect: e.expect,
            outcome: None,
            error: None,
            config_error: false,
        };
        kernel::reset_applications();
        let space = match e.space {
            Some(i) if spec.needs_space => {
                let built = spaces[i].get_or_insert_with(|| {
                    Space::build(cfg.spaces[i].spec.clone()).map_err(|err| format!("space (line {}): {err}", cfg.spaces[i].line))
                });
                match built {
                    Ok(s) => Some(s as &Space),
                    Err(msg) => {
                        rec.error = Some(msg.clone());
                        records.push(rec);
                        continue;
                    }
                }
            }
            _ => None,
        };
        let kern = match (e.kernel, space, e.space) {
            (Some(i), Some(s), Some(si)) if spec.needs_kernel => {
                if kernel_space[i] != Some(si) {
                    kernels[i] = Some(build_kernel(&cfg.kernels[i], s));
                    kernel_space[i] = Some(si);
                }
                match kernels[i].as_ref().expect("just built") {
                    Ok(k) => Some(k),
                    Err(msg) => {
                        rec.error = Some(msg.clone());
                        records.push(rec);
                        continue;
                    }
                }
            }
            _ => None,
        };
        let ctx = Ctx {
            space,
            kernel: kern,
            params: &e.params,
            seed: e.seed,
        };
        match ops::execute(spec, &ctx) {
            Ok(o) => rec.outcome = Some(o),
            Err(OpError::Core(heatlab::Error::BudgetExceeded(n))) => {
                rec.error = Some(format!("budget exceeded ({n} kernel-entry applications)"));
                budget_exceeded = true;
            }
            Err(err) => {
                rec.config_error = matches!(err, OpError::Config(_));
                rec.error = Some(err.to_string());
            }
        }
        records.push(rec);
        if budget_exceeded {
            break;
        }
    }
    kernel::set_budget(saved_budget);

    let mut files = Files {
        dir: opts.out.clone(),
        names: Vec::new(),
    };
    let header = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let exp_rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let o = r.outcome.as_ref();
            vec![
                r.index.to_string(),
                r.op.clone(),
                r.seed.to_string(),
                o.map_or("ERROR", |o| o.verdict.name()).to_string(),
                o.map_or(String::new(), |o| o.label.clone()),
                if r.expect == Expect::Pass { "pass" } else { "fail" }.to_string(),
                r.assert.to_string(),
                r.structural_ok().to_string(),
                o.is_some_and(|o| o.truncated).to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    files.csv(
        "experiments.csv".into(),
        &header(&["index", "op", "seed", "verdict", "label", "expect", "assert", "structural_ok", "truncated", "error"]),
        &exp_rows,
    )?;
    let const_rows: Vec<Vec<String>> = records
        .iter()
        .flat_map(|r| {
            r.outcome
                .iter()
                .flat_map(|o| o.constants.iter())
                .map(|(k, v)| vec![r.index.to_string(), r.op.clone(), k.clone(), num(*v)])
        })
        .collect();
    files.csv("constants.csv".into(), &header(&["index", "op", "name", "value"]), &const_rows)?;

    for r in &records {
        let Some(o) = &r.outcome else { continue };
        for t in &o.tables {
            let Table { name, header, rows } = t;
            let file = if name.is_empty() { format!("{}.csv", r.stem()) } else { format!("{}_{name}.csv", r.stem()) };
            files.csv(file, header, rows)?;
        }
        if cfg.svg {
            if let Some(p) = &o.plot {
                files.text(format!("{}.svg", r.stem()), &p.render())?;
            }
        }
        if opts.dump_witness {
            if let Some(w) = &o.witness {
                let rows: Vec<Vec<String>> = w.iter().map(|(p, v)| vec![p.to_string(), num(*v)]).collect();
                files.csv(format!("{}_witness.csv", r.stem()), &header(&["point", "value"]), &rows)?;
            }
        }
    }

    let summary = summarize(cfg, &records);
    files.text("summary.txt".into(), &summary)?;

    let mut manifest = Vec::new();
    for name in &files.names {
        let bytes = fs::read(opts.out.join(name))?;
        manifest.push((name.clone(), hex::encode(Sha256::digest(&bytes))));
    }
    manifest.sort();
    let body: String = manifest.iter().map(|(n, h)| format!("{h}  {n}\n")).collect();
    fs::write(opts.out.join("manifest.sha256"), body)?;

    Ok(Report {
        records,
        manifest,
        wall_clock: start.elapsed().as_secs_f64(),
        budget_exceeded,
        summary,
    })
}

/// Every number printed here is a cell of `experiments.csv` or `constants.csv`.
fn summarize(cfg: &ExperimentConfig, records: &[Record]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "heatlab report: {} experiments, global seed {}", records.len(), cfg.seed);
    if records.len() < cfg.experiments.len() {
        let _ = writeln!(s, "stopped early after experiment {}", records.len());
    }
    for r in records {
        let _ = write!(s, "[{:02}] {:<20} seed {}", r.index, r.op, r.seed);
        match &r.outcome {
            Some(o) => {
                let _ = write!(s, "  {}", o.verdict.name());
                if !o.label.is_empty() {
                    let _ = write!(s, " ({})", o.label);
                }
                if r.expect == Expect::Fail {
                    let _ = write!(s, ", expected FAIL");
                }
                if r.assert {
                    let _ = write!(s, ", asserted: {}", if r.meets_expectation() { "ok" } else { "NOT MET" });
                }
                if o.truncated {
                    let _ = write!(s, ", truncated");
                }
                let _ = writeln!(s);
                for (k, v) in &o.constants {
                    let _ = writeln!(s, "     {k} = {}", num(*v));
                }
                let failed = r.failed_checks();
                if !failed.is_empty() {
                    let _ = writeln!(s, "     STRUCTURAL FAILURE: {}", failed.join(", "));
                }
            }
            None => {
                let _ = writeln!(s, "  ERROR: {}", r.error.as_deref().unwrap_or(""));
            }
        }
    }
    let structural = records.iter().filter(|r| !r.structural_ok()).count();
    let asserted = records.iter().filter(|r| r.assert && !r.meets_expectation()).count();
    let _ = writeln!(s, "structural failures: {structural}; unmet assertions: {asserted}");
    s
}
