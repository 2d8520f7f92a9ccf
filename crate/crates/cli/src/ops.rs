//! Operation table: config keys, what each operation needs, and how its
//! result turns into a verdict, constants, CSV tables and an optional plot.

use heatlab::harnack::{self, HarnackReport, Recurrence};
use heatlab::ineq::{self, Subcaloric};
use heatlab::kernel::GreenStatus;
use heatlab::net::{audit_net, build_net};
use heatlab::space::{doubling_profile, reverse_doubling};
use heatlab::{Kernel, Space};
use rand::Rng;

use crate::config::{ConfigError, Params};
use crate::svg::Plot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    /// Measurement only.
    Info,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Info => "INFO",
        }
    }

    fn of(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File suffix; empty for the main table.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }
}

/// Shortest round-trip text, switching to exponents for tiny and huge values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    /// Short label for the summary, e.g. a recurrence class.
    pub label: String,
    /// Named structural invariants; any `false` is a bug, not a finding.
    pub checks: Vec<(String, bool)>,
    pub constants: Vec<(String, f64)>,
    pub tables: Vec<Table>,
    pub plot: Option<Plot>,
    pub truncated: bool,
    /// `(point, value)` pairs of the extremal trial function.
    pub witness: Option<Vec<(usize, f64)>>,
}

impl Outcome {
    fn new(verdict: Verdict) -> Outcome {
        Outcome {
            verdict,
            label: String::new(),
            checks: Vec::new(),
            constants: Vec::new(),
            tables: Vec::new(),
            plot: None,
            truncated: false,
            witness: None,
        }
    }

    fn c(mut self, name: &str, v: f64) -> Outcome {
        self.constants.push((name.to_string(), v));
        self
    }

    fn check(mut self, name: &str, ok: bool) -> Outcome {
        self.checks.push((name.to_string(), ok));
        self
    }
}

#[derive(Debug)]
pub enum OpError {
    Config(ConfigError),
    Core(heatlab::Error),
}

impl From<ConfigError> for OpError {
    fn from(e: ConfigError) -> Self {
        OpError::Config(e)
    }
}

impl From<heatlab::Error> for OpError {
    fn from(e: heatlab::Error) -> Self {
        OpError::Core(e)
    }
}

impl std::fmt::Display for OpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpError::Config(e) => e.fmt(f),
            OpError::Core(e) => e.fmt(f),
        }
    }
}

type OpResult = Result<Outcome, OpError>;

pub struct Ctx<'a> {
    pub space: Option<&'a Space>,
    pub kernel: Option<&'a Kernel>,
    pub params: &'a Params,
    pub seed: u64,
}

impl Ctx<'_> {
    fn space(&self) -> &Space {
        self.space.expect("checked at parse time")
    }

    fn kernel(&self) -> &Kernel {
        self.kernel.expect("checked at parse time")
    }

    /// `vertex = i`, `center = x₁, x₂, …`, or the window centre.
    fn center(&self) -> Result<usize, OpError> {
        let s = self.space();
        let p = self.params;
        if let Some(v) = p.u64("vertex")? {
            let v = v as usize;
            if v >= s.len() {
                return Err(heatlab::Error::PointOutOfRange(v).into());
            }
            return Ok(v);
        }
        match p.list_f64("center")? {
            Some(c) => Ok(s.locate(&c)),
            None => Ok(s.center()),
        }
    }
}

pub struct OpSpec {
    pub name: &'static str,
    pub keys: &'static [&'static str],
    pub needs_space: bool,
    pub needs_kernel: bool,
    run: fn(&Ctx) -> OpResult,
}

const fn op(name: &'static str, keys: &'static [&'static str], space: bool, kernel: bool, run: fn(&Ctx) -> OpResult) -> OpSpec {
    OpSpec {
        name,
        keys,
        needs_space: space,
        needs_kernel: kernel,
        run,
    }
}

pub const OPS: &[OpSpec] = &[
    op("doubling", &["radii"], true, false, doubling),
    op("reverse_doubling", &["radii", "b"], true, false, reverse_doubling_op),
    op("net", &["eps", "pairs", "delta"], true, false, net),
    op("compat", &[], true, true, compat),
    op("green", &["tol", "kmax"], true, true, green),
    op("identities", &["steps", "trials"], true, true, identities),
    op("forms", &["f"], true, true, forms),
    op("poincare", &["h", "r", "kappa"], true, false, poincare),
    op("pseudo_poincare", &["s", "trials"], true, true, pseudo_poincare),
    op("sobolev", &["r", "delta", "trials"], true, true, sobolev),
    op("nash", &["r", "delta", "trials"], true, true, nash),
    op("ultracontractivity", &["r", "kmax", "delta"], true, true, ultracontractivity),
    op("spectral_gap", &["r"], true, true, spectral_gap),
    op("caccioppoli", &["support", "r", "steps", "trials", "lazy"], true, true, caccioppoli),
    op("imp", &["radius", "big_r", "steps", "d0"], true, true, imp),
    op("polynomials", &["n_max", "trials"], false, false, polynomials),
    op("elliptic_harnack", &["r", "c", "trials", "doubled"], true, true, elliptic),
    op("parabolic_harnack", &["r", "eta", "trials", "doubled"], true, true, parabolic),
    op("reverse_poincare", &["r", "omega", "trials", "doubled"], true, true, reverse_poincare),
    op("balayage", &["r", "r1", "b", "a", "trials"], true, true, balayage),
    op("gaussian_fit", &["n_min", "n_max", "centers", "a", "rho_lo", "rho_hi", "spread"], true, true, gaussian),
    op("on_diagonal", &["times"], true, true, on_diagonal),
    op("tree_profile", &["degree", "times", "drop"], false, false, tree_profile),
    op("recurrence", &["n_max", "green_steps", "class"], true, true, recurrence),
    op("ed_profile", &["d", "kmax", "a", "bound"], true, true, ed_profile),
];

pub fn lookup(name: &str) -> Option<&'static OpSpec> {
    OPS.iter().find(|o| o.name == name)
}

pub fn execute(spec: &OpSpec, ctx: &Ctx) -> OpResult {
    (spec.run)(ctx)
}

fn missing(p: &Params, key: &str) -> OpError {
    OpError::Config(ConfigError {
        line: p.line,
        msg: format!("missing `{key}`"),
    })
}

fn series(name: &str, pts: Vec<(f64, f64)>) -> (String, Vec<(f64, f64)>) {
    (name.to_string(), pts)
}

fn doubling(ctx: &Ctx) -> OpResult {
    let radii = ctx.params.list_f64("radii")?.ok_or_else(|| missing(ctx.params, "radii"))?;
    let x = ctx.center()?;
    let dp = doubling_profile(ctx.space(), &[x], &radii)?;
    let mut t = Table::new("", &["radius", "ratio", "truncated"]);
    for ((r, q), tr) in dp.radii.iter().zip(&dp.ratios).zip(&dp.truncated) {
        t.row(vec![num(*r), num(*q), tr.to_string()]);
    }
    let mut o = Outcome::new(Verdict::of(dp.verdict)).c("delta_hat", dp.delta_hat).c("gamma_hat", dp.gamma_hat);
    o.truncated = dp.truncated.iter().any(|t| *t);
    o.plot = Some(Plot::new("volume doubling", "r", "V(x,2r)/V(x,r)").with(series(
        "ratio",
        dp.radii.iter().copied().zip(dp.ratios.iter().copied()).collect(),
    )));
    o.tables.push(t);
    Ok(o)
}

fn reverse_doubling_op(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let radii = p.list_f64("radii")?.ok_or_else(|| missing(p, "radii"))?;
    let rd = reverse_doubling(ctx.space(), &[ctx.center()?], &radii, p.f64("b", 1.0)?)?;
    let mut o = Outcome::new(Verdict::of(rd.gamma_hat > 0.0)).c("gamma_hat", rd.gamma_hat).c("c_hat", rd.c_hat);
    o.truncated = rd.truncated;
    Ok(o)
}

fn net(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let s = ctx.space();
    let eps = p.req_f64("eps")?;
    let net = build_net(s, eps)?;
    let audit = audit_net(s, &net, p.usize("pairs", 10_000)?, p.f64("delta", 2.0 * eps)?, ctx.seed);
    let mut t = Table::new("", &["vertex", "point", "m", "degree"]);
    for (a, &v) in net.vertices.iter().enumerate() {
        t.row(vec![a.to_string(), v.to_string(), num(net.m[a]), net.degree(a).to_string()]);
    }
    let mut o = Outcome::new(Verdict::of(audit.connected))
        .check("separated", audit.separated)
        .check("covering", audit.covering)
        .check("edge_rule", audit.edge_rule)
        .check("disjoint", audit.disjoint)
        .check("partition_of_unity", audit.partition_of_unity)
        .c("vertices", net.len() as f64)
        .c("edges", net.edges.len() as f64)
        .c("max_degree", audit.max_degree as f64)
        .c("overlap", audit.overlap as f64)
        .c("lower", audit.lower)
        .c("a_hat", audit.a_hat)
        .c("pairs_probed", audit.pairs_probed as f64);
    o.tables.push(t);
    Ok(o)
}

fn compat(ctx: &Ctx) -> OpResult {
    let k = ctx.kernel();
    let a = k.audit_compat(ctx.space(), k.h, k.h_prime)?;
    Ok(Outcome::new(Verdict::of(a.pass()))
        .c("c1_hat", a.c1_hat)
        .c("big_c1_hat", a.big_c1_hat)
        .c("support_ok", f64::from(u8::from(a.support_ok)))
        .c("alpha_hat", a.alpha_hat)
        .c("pcomp_hat", a.pcomp_hat)
        .c("points_audited", a.points_audited as f64))
}

fn green(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let x = ctx.center()?;
    let g = ctx.kernel().green(x, p.f64("tol", 1e-10)?, p.usize("kmax", 100_000)?)?;
    let (verdict, label) = match g.status {
        GreenStatus::Converged => (Verdict::Pass, "converged"),
        GreenStatus::NoConvergence => (Verdict::Fail, "no convergence"),
        GreenStatus::Truncated => (Verdict::Inconclusive, "truncated"),
    };
    let mut t = Table::new("", &["point", "green"]);
    for (y, v) in g.sums.iter().enumerate() {
        t.row(vec![y.to_string(), num(*v)]);
    }
    let mut o = Outcome::new(verdict)
        .c("green_xx", g.sums[x])
        .c("steps", g.steps as f64)
        .c("tail", g.tail)
        .c("decay_exponent", g.decay_exponent.unwrap_or(f64::NAN));
    o.label = label.into();
    o.truncated = g.status == GreenStatus::Truncated;
    o.tables.push(t);
    Ok(o)
}

const DENSE_LIMIT: usize = 400;

/// Kernel identities against a dense operator built from `p` and `m`.
fn identities(ctx: &Ctx) -> OpResult {
    let k = ctx.kernel();
    let n = ctx.space().len();
    if n > DENSE_LIMIT {
        return Err(heatlab::Error::InvalidParameter(format!("identities need at most {DENSE_LIMIT} points")).into());
    }
    let steps = ctx.params.usize("steps", 8)?.max(2);
    let m = k.m();
    let a: Vec<Vec<f64>> = (0..n).map(|x| (0..n).map(|y| k.p(x, y) * m[y]).collect()).collect();
    let mul = |u: &[Vec<f64>], v: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|l| u[i][l] * v[l][j]).sum()).collect())
            .collect()
    };
    // powers[i] = A^(i+1)
    let mut powers = vec![a.clone()];
    for _ in 1..steps {
        let next = mul(powers.last().unwrap(), &a);
        powers.push(next);
    }
    let density = |i: usize, x: usize, y: usize| powers[i][x][y] / m[y];
    let mut checks = 0usize;
    let mut t = Table::new("", &["identity", "checks", "violations", "worst"]);
    let mut record = |name: &str, errs: Vec<f64>, tol: f64| {
        let worst = errs.iter().copied().fold(0.0, f64::max);
        let bad = errs.iter().filter(|e| **e > tol).count();
        checks += errs.len();
        t.row(vec![name.into(), errs.len().to_string(), bad.to_string(), num(worst)]);
        bad
    };
    let scale = (0..n).map(|x| k.p(x, x)).fold(0.0, f64::max).max(1.0);
    let mut violations = 0;
    violations += record(
        "symmetry",
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|(x, y)| (k.p(x, y) - k.p(y, x)).abs() / scale).collect(),
        1e-14,
    );
    violations += record("sub-Markov rows", a.iter().map(|row| (row.iter().sum::<f64>() - 1.0).max(0.0)).collect(), 1e-12);
    let mut iter_errs = Vec::new();
    for x in 0..n {
        for i in 0..steps {
            let row = k.iterate(x, i + 1)?.values;
            let peak = (0..n).map(|y| density(i, x, y).abs()).fold(0.0, f64::max).max(1e-300);
            iter_errs.push((0..n).map(|y| (row[y] - density(i, x, y)).abs()).fold(0.0, f64::max) / peak);
        }
    }
    violations += record("iterate vs dense power", iter_errs, 1e-12);
    let mut ck = Vec::new();
    for i in 0..steps / 2 {
        for j in 0..steps / 2 {
            for x in 0..n {
                for y in 0..n {
                    let direct = density(i + j + 1, x, y);
                    let split: f64 = (0..n).map(|z| density(i, x, z) * density(j, z, y) * m[z]).sum();
                    ck.push((direct - split).abs() / direct.abs().max(1e-300).max(split.abs()).max(1e-12));
                }
            }
        }
    }
    violations += record("Chapman-Kolmogorov", ck, 1e-12);
    let mut mono = Vec::new();
    for x in 0..n {
        for i in (1..steps / 2).map(|h| 2 * h - 1) {
            mono.push(((density(i + 2, x, x) - density(i, x, x)) / density(i, x, x).max(1e-300)).max(0.0));
        }
    }
    violations += record("p_2n(x,x) non-increasing", mono, 1e-12);
    let mut rng = heatlab::numeric::rng(ctx.seed, 1);
    let trials = ctx.params.usize("trials", 20)?;
    let mut comp = Vec::new();
    let mut ibp = Vec::new();
    for _ in 0..trials {
        // integration by parts needs support away from the window edge
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|y| {
                    let v = rng.random::<f64>() * 2.0 - 1.0;
                    if k.margin(y) > k.support_radius() { v } else { 0.0 }
                })
                .collect()
        };
        let (f, g) = (draw(), draw());
        let fm = k.forms(&f);
        if f.iter().all(|v| *v == 0.0) {
            continue;
        }
        comp.push((fm.energy_star - 2.0 * fm.energy).max(0.0) / fm.energy.max(1e-300));
        ibp.push(k.integration_by_parts_residual(&f, &g)?);
        // contraction in L²(m)
        let pf = k.apply(&f);
        let norm = |v: &[f64]| v.iter().zip(m).map(|(a, b)| a * a * b).sum::<f64>();
        comp.push(((norm(&pf) - norm(&f)) / norm(&f)).max(0.0));
    }
    violations += record("form comparison and contraction", comp, 1e-12);
    violations += record("integration by parts", ibp, 1e-10);
    let mut o = Outcome::new(Verdict::of(violations == 0))
        .check("identities", violations == 0)
        .c("checks", checks as f64)
        .c("violations", violations as f64);
    o.tables.push(t);
    Ok(o)
}

/// `ℰ(f,f)` vs `ℰ*(f,f)`: FAIL when the squared form vanishes on a non-constant `f`.
fn forms(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let f = p.list_f64("f")?.ok_or_else(|| missing(p, "f"))?;
    let n = ctx.space().len();
    if f.len() != n {
        return Err(OpError::Config(ConfigError {
            line: p.line,
            msg: format!("`f` has {} values, the space has {n} points", f.len()),
        }));
    }
    let fm = ctx.kernel().forms(&f);
    let comparable = fm.energy == 0.0 || fm.energy_star > 1e-14 * fm.energy;
    Ok(Outcome::new(Verdict::of(comparable))
        .check("star_le_twice", fm.energy_star <= 2.0 * fm.energy * (1.0 + 1e-12))
        .c("energy", fm.energy)
        .c("energy_inner", fm.energy_inner)
        .c("energy_star", fm.energy_star))
}

fn local_witness(members: &[usize], w: &[f64], n: usize) -> Vec<(usize, f64)> {
    if w.len() == n {
        w.iter().copied().enumerate().collect()
    } else {
        members.iter().copied().zip(w.iter().copied()).collect()
    }
}

fn probe_outcome(pr: &ineq::ConstantProbe, members: &[usize], n: usize) -> Outcome {
    let mut t = Table::new("", &["trial", "ratio"]);
    for (id, r) in &pr.ratios {
        t.row(vec![id.clone(), num(*r)]);
    }
    let mut o = Outcome::new(Verdict::of(pr.observed.is_finite())).c("observed", pr.observed).c("radius", pr.radius);
    o.label = format!("witness {}", pr.witness_id);
    o.witness = Some(local_witness(members, &pr.witness, n));
    o.tables.push(t);
    o
}

fn poincare(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let s = ctx.space();
    let res = ineq::poincare_constant(s, p.req_f64("h")?, ctx.center()?, p.req_f64("r")?, p.f64("kappa", 1.0)?)?;
    let mut o = Outcome::new(Verdict::of(res.value.is_finite()))
        .c("value", res.value)
        .c("components_meeting_ball", res.components_meeting_ball as f64)
        .c("members", res.members.len() as f64);
    if res.degenerate {
        o.label = "degenerate".into();
    }
    o.witness = Some(local_witness(&res.members, &res.witness, s.len()));
    Ok(o)
}

fn pseudo_poincare(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let pr = ineq::pseudo_poincare_check(ctx.kernel(), ctx.space(), p.req_f64("s")?, p.usize("trials", 20)?, ctx.seed)?;
    Ok(probe_outcome(&pr, &[], ctx.space().len()))
}

fn sobolev(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let dk = ctx.kernel().restrict(ctx.space(), ctx.center()?, p.req_f64("r")?)?;
    let pr = ineq::sobolev_probe(&dk, ctx.space(), p.req_f64("delta")?, p.usize("trials", 20)?, ctx.seed)?;
    Ok(probe_outcome(&pr, &dk.members, ctx.space().len()))
}

fn nash(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let pr = ineq::nash_probe(
        ctx.kernel(),
        ctx.space(),
        ctx.center()?,
        p.req_f64("r")?,
        p.req_f64("delta")?,
        p.usize("trials", 20)?,
        ctx.seed,
    )?;
    Ok(probe_outcome(&pr, &[], ctx.space().len()))
}

fn ultracontractivity(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let dk = ctx.kernel().restrict(ctx.space(), ctx.center()?, p.req_f64("r")?)?;
    let u = ineq::ultracontractivity_profile(&dk, p.req_usize("kmax")?, p.req_f64("delta")?)?;
    let mut t = Table::new("", &["k", "norm"]);
    for (i, v) in u.norms.iter().enumerate() {
        t.row(vec![(i + 1).to_string(), num(*v)]);
    }
    let mut o = Outcome::new(Verdict::of(u.c_u.is_finite())).c("c_u", u.c_u).c("decay_exponent", u.decay_exponent);
    o.plot = Some(
        Plot::new("Dirichlet ultracontractivity", "k", "max ||p_k(y,.)||^2")
            .log_log()
            .with(series("norm", u.norms.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect())),
    );
    o.tables.push(t);
    Ok(o)
}

fn spectral_gap(ctx: &Ctx) -> OpResult {
    let dk = ctx.kernel().restrict(ctx.space(), ctx.center()?, ctx.params.req_f64("r")?)?;
    let g = ineq::spectral_gap(ctx.kernel(), &dk)?;
    let mut o = Outcome::new(Verdict::of(g.gap > 0.0))
        .c("norm", g.norm)
        .c("min", g.min)
        .c("max", g.max)
        .c("gap", g.gap)
        .c("a_hat", g.a_hat);
    o.witness = Some(local_witness(&dk.members, &g.top, ctx.space().len()));
    Ok(o)
}

fn caccioppoli(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let s = ctx.space();
    let k = ctx.kernel();
    let x = ctx.center()?;
    let (support, r) = (p.f64("support", 15.0)?, p.f64("r", 10.0)?);
    let steps = p.usize("steps", 50)?;
    let lazy = p.bool("lazy", true)?;
    let mut rng = heatlab::numeric::rng(ctx.seed, 2);
    let mut t = Table::new("", &["trial", "step", "lhs", "rhs", "residual"]);
    let mut violations = 0;
    for trial in 0..p.usize("trials", 5)? {
        let v0: Vec<f64> = (0..s.len())
            .map(|y| if s.dist(x, y) <= support { rng.random::<f64>() * 2.0 - 1.0 } else { 0.0 })
            .collect();
        let u = if lazy { Subcaloric::lazy_abs(k, &v0, steps)? } else { Subcaloric::non_lazy_abs(k, &v0, steps)? };
        let psi: Vec<f64> = (0..s.len()).map(|y| (1.0 - s.dist(x, y) / r).max(0.0)).collect();
        let rep = ineq::caccioppoli_check(k, &u, &psi)?;
        violations += rep.violations();
        for (i, ((l, rh), res)) in rep.lhs.iter().zip(&rep.rhs).zip(&rep.residuals).enumerate() {
            t.row(vec![trial.to_string(), i.to_string(), num(*l), num(*rh), num(*res)]);
        }
    }
    let mut o = Outcome::new(Verdict::of(violations == 0)).c("violations", violations as f64);
    o.tables.push(t);
    Ok(o)
}

fn imp(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let s = ctx.space();
    let k = ctx.kernel();
    let x = ctx.center()?;
    let radius = p.f64("radius", 3.0)?;
    let mut rng = heatlab::numeric::rng(ctx.seed, 3);
    let mut u0 = vec![0.0; s.len()];
    for y in s.ball(x, radius) {
        u0[y] = 1.0 + rng.random::<f64>();
    }
    let sigma = ineq::sigma_r(s, x, p.f64("big_r", 12.0)?, k.h_prime);
    let rep = ineq::find_min_d(k, s, &u0, x, radius, &sigma, p.usize("steps", 30)?, p.f64("d0", 1.0)?)?;
    let mut t = Table::new("", &["k", "j"]);
    for (i, j) in rep.j.iter().enumerate() {
        t.row(vec![i.to_string(), num(*j)]);
    }
    let mut o = Outcome::new(Verdict::of(rep.verdict == ineq::ImpVerdict::Pass && rep.non_increasing))
        .c("d", rep.d)
        .c("worst_condition", rep.worst_condition);
    o.label = format!("{:?}", rep.verdict);
    o.tables.push(t);
    Ok(o)
}

fn polynomials(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let r = ineq::poly_sweep(p.usize("n_max", 20)?, p.usize("trials", 500)?, ctx.seed)?;
    let ok = r.first <= 1e-8 && r.second <= 1e-8 && r.s_margin >= 0.0;
    Ok(Outcome::new(Verdict::of(ok))
        .check("first identity", r.first <= 1e-8)
        .check("second identity", r.second <= 1e-8)
        .check("s_nk lower bound", r.s_margin >= 0.0)
        .c("first_residual", r.first)
        .c("second_residual", r.second)
        .c("s_margin", r.s_margin))
}

fn harnack_table(reports: &[&HarnackReport]) -> Table {
    let mut t = Table::new("", &["radius", "trial", "sup", "inf", "ratio"]);
    for r in reports {
        for (id, sup, inf, q) in &r.trials {
            t.row(vec![num(r.radius), id.to_string(), num(*sup), num(*inf), num(*q)]);
        }
    }
    t
}

fn harnack_outcome(ctx: &Ctx, run: impl Fn(f64) -> Result<HarnackReport, heatlab::Error>) -> OpResult {
    let p = ctx.params;
    let r = p.req_f64("r")?;
    let first = run(r)?;
    let mut ok = first.ratio.is_finite() && !first.degenerate;
    let mut o = Outcome::new(Verdict::Info).c("ratio", first.ratio).c("witness_trial", first.witness as f64);
    let mut truncated = first.truncated;
    let second = if p.bool("doubled", false)? {
        let s = run(2.0 * r)?;
        let stab = first.stability(&s);
        ok &= s.ratio.is_finite() && !s.degenerate && stab <= 2.0;
        truncated |= s.truncated;
        o = o.c("ratio_doubled", s.ratio).c("stability", stab);
        Some(s)
    } else {
        None
    };
    o.verdict = Verdict::of(ok);
    if first.degenerate {
        o.label = "degenerate".into();
    }
    o.truncated = truncated;
    let mut reports = vec![&first];
    reports.extend(second.as_ref());
    o.tables.push(harnack_table(&reports));
    Ok(o)
}

fn elliptic(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let (x, c, trials) = (ctx.center()?, p.f64("c", 0.25)?, p.usize("trials", 30)?);
    harnack_outcome(ctx, |r| harnack::elliptic_harnack(ctx.kernel(), ctx.space(), x, r, c, trials, ctx.seed))
}

fn parabolic(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let (x, eta, trials) = (ctx.center()?, p.f64("eta", 0.25)?, p.usize("trials", 20)?);
    harnack_outcome(ctx, |r| harnack::parabolic_harnack(ctx.kernel(), ctx.space(), x, r, eta, trials, ctx.seed))
}

fn reverse_poincare(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let (x, omega, trials) = (ctx.center()?, p.f64("omega", 2.0)?, p.usize("trials", 30)?);
    let r = p.req_f64("r")?;
    let run = |r| harnack::reverse_poincare_battery(ctx.kernel(), ctx.space(), x, r, omega, trials, ctx.seed);
    let (v, w) = run(r)?;
    let mut ok = v.is_finite();
    let mut o = Outcome::new(Verdict::Info).c("value", v).c("witness_trial", w as f64);
    if p.bool("doubled", false)? {
        let (v2, _) = run(2.0 * r)?;
        let stab = (v / v2).max(v2 / v);
        ok &= v2.is_finite() && stab <= 2.0;
        o = o.c("value_doubled", v2).c("stability", stab);
    }
    o.verdict = Verdict::of(ok);
    Ok(o)
}

fn balayage(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let (s, k) = (ctx.space(), ctx.kernel());
    let x = ctx.center()?;
    let (r, r1) = (p.req_f64("r")?, p.req_f64("r1")?);
    let b = p.req_usize("b")?;
    let a = p.usize("a", 0)?;
    let mut t = Table::new("", &["trial", "residual", "v_min", "u_sup"]);
    let (mut worst, mut v_min) = (0.0f64, 0.0f64);
    for trial in 0..p.usize("trials", 20)? {
        // trial 0 of the generator is the constant, which never needs sweeping
        let u0 = harnack::caloric_data(s, x, r1, k.h_prime, trial + 1, ctx.seed);
        let frames = harnack::evolve_caloric(k, &u0, b)?;
        let bal = harnack::balayage(k, s, x, r, r1, a, &frames)?;
        worst = worst.max(bal.relative_residual());
        v_min = v_min.min(bal.v_min);
        t.row(vec![trial.to_string(), num(bal.relative_residual()), num(bal.v_min), num(bal.u_sup)]);
    }
    let ok = worst <= 1e-10 && v_min >= -1e-14;
    let mut o = Outcome::new(Verdict::of(ok))
        .check("reconstruction", worst <= 1e-10)
        .check("non-negative charges", v_min >= -1e-14)
        .c("residual", worst)
        .c("v_min", v_min);
    o.tables.push(t);
    Ok(o)
}

fn gaussian(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let fit = harnack::gaussian_fit(
        ctx.kernel(),
        ctx.space(),
        p.req_usize("n_min")?,
        p.req_usize("n_max")?,
        p.usize("centers", 5)?,
        p.f64("a", 1.0)?,
        ctx.seed,
    )?;
    let (lo, hi) = (p.f64("rho_lo", 0.05)?, p.f64("rho_hi", 20.0)?);
    let spread = p.f64("spread", 2.0)?;
    let admissible = fit.samples.iter().all(|s| s.slack >= 0.0);
    let ok = fit.diagonal_within(lo, hi) && fit.upper_spread <= spread && admissible;
    let (rmin, rmax) = fit
        .diagonal
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), (_, _, r)| (a.min(*r), b.max(*r)));
    let mut samples = Table::new("samples", &["n", "x", "y", "d", "p", "v_sqrt_n", "log_ratio", "slack", "upper"]);
    for s in &fit.samples {
        samples.row(vec![
            s.n.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            num(s.d),
            num(s.p),
            num(s.v_sqrt_n),
            num(s.log_ratio),
            num(s.slack),
            s.upper.to_string(),
        ]);
    }
    let mut diag = Table::new("", &["x", "n", "rho"]);
    for (x, n, r) in &fit.diagonal {
        diag.row(vec![x.to_string(), n.to_string(), num(*r)]);
    }
    let mut o = Outcome::new(Verdict::of(ok))
        .check("admissible samples", admissible)
        .c("rho_min", rmin)
        .c("rho_max", rmax)
        .c("c1_upper", fit.c1_upper)
        .c("c2_upper", fit.c2_upper)
        .c("c1_lower", fit.c1_lower)
        .c("c2_lower", fit.c2_lower)
        .c("c3_lower", fit.c3_lower)
        .c("upper_spread", fit.upper_spread)
        .c("lower_spread", fit.lower_spread);
    let mut plot = Plot::new("on-diagonal ratio", "n", "V(x,sqrt n) p_n(x,x)").log_log();
    let mut centers: Vec<usize> = fit.diagonal.iter().map(|d| d.0).collect();
    centers.dedup();
    for c in centers {
        plot = plot.with(series(
            &format!("x = {c}"),
            fit.diagonal.iter().filter(|d| d.0 == c).map(|d| (d.1 as f64, d.2)).collect(),
        ));
    }
    o.plot = Some(plot);
    o.tables.push(diag);
    o.tables.push(samples);
    Ok(o)
}

fn on_diagonal(ctx: &Ctx) -> OpResult {
    let times = ctx.params.list_usize("times")?.ok_or_else(|| missing(ctx.params, "times"))?;
    let prof = harnack::on_diagonal_profile(ctx.kernel(), ctx.space(), &[ctx.center()?], &times)?;
    let mut t = Table::new("", &["x", "n", "rho", "truncated"]);
    for (x, n, r, tr) in &prof {
        t.row(vec![x.to_string(), n.to_string(), num(*r), tr.to_string()]);
    }
    let mut o = Outcome::new(Verdict::Info);
    if let (Some(first), Some(last)) = (prof.first(), prof.last()) {
        o = o.c("rho_first", first.2).c("rho_last", last.2);
    }
    o.truncated = prof.iter().any(|p| p.3);
    o.plot = Some(
        Plot::new("on-diagonal ratio", "n", "V(x,sqrt n) p_n(x,x)")
            .log_log()
            .with(series("rho", prof.iter().map(|p| (p.1 as f64, p.2)).collect())),
    );
    o.tables.push(t);
    Ok(o)
}

/// FAIL when `ρ` collapses by at least `drop` over the horizon.
fn tree_profile(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let times = p.list_usize("times")?.ok_or_else(|| missing(p, "times"))?;
    let prof = harnack::tree_root_profile(p.usize("degree", 3)?, &times)?;
    let ratio = match (prof.first(), prof.last()) {
        (Some(a), Some(b)) => a.1 / b.1,
        _ => 1.0,
    };
    let mut t = Table::new("", &["n", "rho"]);
    for (n, r) in &prof {
        t.row(vec![n.to_string(), num(*r)]);
    }
    let mut o = Outcome::new(Verdict::of(ratio < p.f64("drop", 10.0)?)).c("drop", ratio);
    o.plot = Some(
        Plot::new("tree root profile", "n", "V(o,sqrt n) p_n(o,o)")
            .log_log()
            .with(series("rho", prof.iter().map(|p| (p.0 as f64, p.1)).collect())),
    );
    o.tables.push(t);
    Ok(o)
}

fn recurrence(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let rep = harnack::classify_recurrence(
        ctx.kernel(),
        ctx.space(),
        ctx.center()?,
        p.usize("n_max", 1000)?,
        p.usize("green_steps", 0)?,
    )?;
    let verdict = match p.raw("class") {
        None => match rep.verdict {
            Recurrence::Inconclusive => Verdict::Inconclusive,
            _ => Verdict::Info,
        },
        Some(c) => Verdict::of(c == rep.verdict.name()),
    };
    let mut t = Table::new("", &["n", "partial_sum"]);
    for (n, v) in &rep.partial_sums {
        t.row(vec![n.to_string(), num(*v)]);
    }
    let mut o = Outcome::new(verdict)
        .c("beta_hat", rep.beta_hat)
        .c("tail", rep.tail)
        .c("analytic", f64::from(u8::from(rep.analytic)));
    o.label = rep.verdict.name().into();
    o.truncated = rep.truncated;
    o.plot = Some(
        Plot::new("recurrence series", "n", "sum k/V(x,k)")
            .log_x()
            .with(series("partial sum", rep.partial_sums.iter().map(|(n, v)| (*n as f64, *v)).collect())),
    );
    o.tables.push(t);
    Ok(o)
}

fn ed_profile(ctx: &Ctx) -> OpResult {
    let p = ctx.params;
    let e = harnack::ed_profile(
        ctx.kernel(),
        ctx.space(),
        ctx.center()?,
        p.req_f64("d")?,
        p.req_usize("kmax")?,
        p.f64("a", 6.0)?,
        p.f64("bound", 50.0)?,
    )?;
    let mut t = Table::new("", &["k", "e_d", "product"]);
    for (i, (v, q)) in e.values.iter().zip(&e.products).enumerate() {
        t.row(vec![(i + 1).to_string(), num(*v), num(*q)]);
    }
    let mut o = Outcome::new(Verdict::of(e.pass)).c("d", e.d).c("spread", e.spread);
    o.plot = Some(
        Plot::new("weighted energy", "k", "E_D(k)")
            .log_log()
            .with(series("E_D", e.values.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect())),
    );
    o.tables.push(t);
    Ok(o)
}
