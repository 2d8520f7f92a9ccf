//! Symmetric Markov kernels relative to a reference measure.
//!
//! A kernel stores `p(x,y) = p(y,x)` together with a reference measure `m`;
//! the operator is `(Pf)(x) = Σ_y p(x,y) f(y) m(y)`. Rows `p_n(x,·)` are
//! densities and evolve by the operator itself, since `p_{n+1}(x,·) = P p_n(x,·)`.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric;
use crate::space::{GraphData, Space};

static APPLIED: AtomicU64 = AtomicU64::new(0);
static BUDGET: AtomicU64 = AtomicU64::new(DEFAULT_BUDGET);

/// Default compute budget in kernel-entry applications.
pub const DEFAULT_BUDGET: u64 = 500_000_000;

/// Stochasticity tolerance per application.
pub const STOCHASTIC_TOL: f64 = 1e-12;

pub fn set_budget(limit: u64) {
    BUDGET.store(limit, Ordering::Relaxed);
}

pub fn budget() -> u64 {
    BUDGET.load(Ordering::Relaxed)
}

/// Kernel-entry applications performed since the last reset.
pub fn applications() -> u64 {
    APPLIED.load(Ordering::Relaxed)
}

pub fn reset_applications() {
    APPLIED.store(0, Ordering::Relaxed);
}

pub fn check_budget() -> Result<()> {
    let limit = budget();
    if applications() > limit {
        Err(Error::BudgetExceeded(limit))
    } else {
        Ok(())
    }
}

const PAR_THRESHOLD: usize = 4096;

/// Compressed rows of a symmetric kernel (both triangles stored).
#[derive(Clone, Debug)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_upper(n: usize, entries: &[(usize, usize, f64)]) -> Csr {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in entries {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Csr {
            row_ptr,
            cols,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[x], self.row_ptr[x + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    fn get(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (self.row_ptr[x], self.row_ptr[x + 1]);
        match self.cols[a..b].binary_search(&y) {
            Ok(i) => self.vals[a + i],
            Err(_) => 0.0,
        }
    }

    /// `Σ_y p(x,y) f(y) m(y)`, one fixed-order sum per row.
    fn apply(&self, f: &[f64], m: &[f64]) -> Vec<f64> {
        APPLIED.fetch_add(self.nnz() as u64, Ordering::Relaxed);
        let row = |x: usize| -> f64 {
            let mut s = 0.0;
            for (y, p) in self.row(x) {
                s += p * f[y] * m[y];
            }
            s
        };
        let n = self.n();
        if n >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }

    fn upper(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz() / 2 + self.n());
        for x in 0..self.n() {
            for (y, v) in self.row(x) {
                if y >= x {
                    out.push((x, y, v));
                }
            }
        }
        out
    }
}

/// A finite symmetric Markov kernel.
#[derive(Clone, Debug)]
pub struct Kernel {
    m: Vec<f64>,
    csr: Csr,
    /// Declared scales `(h, h′)`.
    pub h: f64,
    pub h_prime: f64,
    support_radius: f64,
    margin: Vec<f64>,
    lazy: bool,
    name: String,
}

/// A row `p_n(x,·)` with its truncation bookkeeping.
#[derive(Clone, Debug)]
pub struct HeatRow {
    pub values: Vec<f64>,
    /// `Σ_y p_n(x,y) m(y)`.
    pub mass: f64,
    /// The row may have felt the window boundary.
    pub truncated: bool,
}

impl HeatRow {
    pub fn deficit(&self) -> f64 {
        (1.0 - self.mass).abs()
    }
}

/// Values of `ℰ(f,f)` and `ℰ*(f,f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Forms {
    /// `½ ΣΣ (f(x)−f(y))² p m m`.
    pub energy: f64,
    /// `⟨(I−P)f, f⟩_m`.
    pub energy_inner: f64,
    /// `⟨f, (I−P²)f⟩_m`.
    pub energy_star: f64,
}

/// Observed constants of the compatibility conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatAudit {
    /// `min p₁(x,y) V_m(x,h)` over `d ≤ h`.
    pub c1_hat: f64,
    /// `max p₁(x,y) V_m(x,h′)`.
    pub big_c1_hat: f64,
    pub support_ok: bool,
    /// `min p₂/p₁` over the support of `p₁`.
    pub alpha_hat: f64,
    /// `min p_{k+1}/p_k` for `k ∈ {2,3,4}` on sampled rows.
    pub pcomp_hat: f64,
    pub points_audited: usize,
}

impl CompatAudit {
    pub fn pass(&self) -> bool {
        self.c1_hat > 0.0 && self.support_ok && self.alpha_hat > 0.0
    }
}

/// Sums of `p_i(x,·)` with a convergence status.
#[derive(Clone, Debug)]
pub struct GreenSums {
    pub sums: Vec<f64>,
    pub steps: usize,
    pub status: GreenStatus,
    /// Fitted decay exponent of the sup-norm increments.
    pub decay_exponent: Option<f64>,
    /// Certified (Dirichlet) or extrapolated (full space) sup-norm tail.
    pub tail: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreenStatus {
    Converged,
    /// Stopped because the row could reach the window boundary.
    Truncated,
    NoConvergence,
}

impl GreenSums {
    /// Turn a `NoConvergence` status into an error.
    pub fn into_result(self) -> Result<GreenSums> {
        if self.status == GreenStatus::NoConvergence {
            Err(Error::NoConvergence("Green sum", self.steps))
        } else {
            Ok(self)
        }
    }
}

impl Kernel {
    /// Build from upper-triangle entries `(i ≤ j, p)` and a reference measure.
    pub fn from_entries(
        space: &Space,
        m: Vec<f64>,
        entries: Vec<(usize, usize, f64)>,
        h: f64,
        h_prime: f64,
        name: &str,
    ) -> Result<Kernel> {
        let n = space.len();
        if m.len() != n {
            return Err(Error::InvalidParameter(format!(
                "reference measure has {} entries for {n} points",
                m.len()
            )));
        }
        if let Some(i) = m.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "reference measure is not positive at {i}"
            )));
        }
        let mut support_radius = 0.0f64;
        for &(i, j, v) in &entries {
            if i >= n || j >= n {
                return Err(Error::PointOutOfRange(i.max(j)));
            }
            if i > j {
                return Err(Error::InvalidParameter("entries must satisfy i ≤ j".into()));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("negative entry at ({i},{j})")));
            }
            if v > 0.0 {
                support_radius = support_radius.max(space.dist(i, j));
            }
        }
        let margin = (0..n).map(|x| space.margin(x)).collect();
        Ok(Kernel {
            csr: Csr::from_upper(n, &entries),
            m,
            h,
            h_prime,
            support_radius,
            margin,
            lazy: false,
            name: name.to_string(),
        })
    }

    /// Kernel with `p = c/(m m)` and `m(x) = Σ_y c(x,y)` for symmetric conductances.
    pub fn from_conductances(space: &Space, conductances: &[(usize, usize, f64)]) -> Result<Kernel> {
        let n = space.len();
        let mut m = vec![0.0; n];
        let mut upper = std::collections::BTreeMap::new();
        for &(a, b, c) in conductances {
            if a >= n || b >= n {
                return Err(Error::PointOutOfRange(a.max(b)));
            }
            *upper.entry((a.min(b), a.max(b))).or_insert(0.0) += c;
        }
        for (&(a, b), &c) in &upper {
            m[a] += c;
            if a != b {
                m[b] += c;
            }
        }
        let entries = upper
            .into_iter()
            .map(|((a, b), c)| (a, b, c / (m[a] * m[b])))
            .collect::<Vec<_>>();
        let mut k = Kernel::from_entries(space, m, entries, 0.0, 0.0, "conductance")?;
        k.h_prime = k.support_radius;
        Ok(k)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn margin(&self, x: usize) -> f64 {
        self.margin[x]
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.csr.get(x, y)
    }

    /// Non-zero entries of row `x`.
    pub fn row_entries(&self, x: usize) -> Vec<(usize, f64)> {
        self.csr.row(x).collect()
    }

    /// Upper-triangle entries `(i ≤ j, p)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.csr.upper()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.csr.apply(f, &self.m)
    }

    /// `(f + Pf)/2`.
    pub fn apply_lazy(&self, f: &[f64]) -> Vec<f64> {
        let pf = self.apply(f);
        f.iter().zip(pf).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn apply_n(&self, f: &[f64], steps: usize) -> Vec<f64> {
        let mut g = f.to_vec();
        for _ in 0..steps {
            g = self.apply(&g);
        }
        g
    }

    /// Dense `p₁(x,·)`.
    pub fn row(&self, x: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.len()];
        for (y, v) in self.csr.row(x) {
            r[y] = v;
        }
        r
    }

    /// `Σ_y p(x,y) m(y)` per row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len())
            .map(|x| self.csr.row(x).map(|(y, v)| v * self.m[y]).sum())
            .collect()
    }

    /// Rows whose deficit exceeds the stochasticity tolerance.
    pub fn deficient_rows(&self) -> Vec<usize> {
        self.row_sums()
            .iter()
            .enumerate()
            .filter(|(_, s)| (1.0 - **s).abs() > STOCHASTIC_TOL)
            .map(|(x, _)| x)
            .collect()
    }

    /// `true` when `n` steps from `x` stay clear of the window boundary.
    pub fn steps_clear(&self, x: usize, n: usize) -> bool {
        n as f64 * self.support_radius <= self.margin[x] + 1e-12
    }

    /// `p_n(x,·)` for `n ≥ 1`.
    pub fn iterate(&self, x: usize, n: usize) -> Result<HeatRow> {
        if n == 0 {
            return Err(Error::InvalidParameter("iterate needs n ≥ 1".into()));
        }
        if x >= self.len() {
            return Err(Error::PointOutOfRange(x));
        }
        let mut r = self.row(x);
        for _ in 1..n {
            r = self.apply(&r);
            check_budget()?;
        }
        Ok(self.heat_row(x, n, r))
    }

    fn heat_row(&self, x: usize, n: usize, values: Vec<f64>) -> HeatRow {
        let mass = numeric::compensated_sum(values.iter().zip(&self.m).map(|(v, w)| v * w));
        HeatRow {
            truncated: !self.steps_clear(x, n),
            mass,
            values,
        }
    }

    /// `h_n(x,·) = P_Lⁿ p₂(x,·)`.
    pub fn hk(&self, x: usize, n: usize) -> Result<HeatRow> {
        let mut r = self.iterate(x, 2)?.values;
        for _ in 0..n {
            r = self.apply_lazy(&r);
            check_budget()?;
        }
        let mut row = self.heat_row(x, n + 2, r);
        row.truncated = !self.steps_clear(x, n + 2);
        Ok(row)
    }

    /// The lazy kernel of `(I + P)/2`.
    pub fn lazy(&self) -> Kernel {
        let mut entries = Vec::with_capacity(self.nnz() / 2 + self.len());
        let mut has_diag = vec![false; self.len()];
        for (i, j, v) in self.entries() {
            if i == j {
                has_diag[i] = true;
                entries.push((i, i, 0.5 * v + 0.5 / self.m[i]));
            } else {
                entries.push((i, j, 0.5 * v));
            }
        }
        for (x, d) in has_diag.iter().enumerate() {
            if !d {
                entries.push((x, x, 0.5 / self.m[x]));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        Kernel {
            csr: Csr::from_upper(self.len(), &entries),
            m: self.m.clone(),
            h: self.h,
            h_prime: self.h_prime,
            support_radius: self.support_radius,
            margin: self.margin.clone(),
            lazy: true,
            name: format!("lazy {}", self.name),
        }
    }

    /// Kernel of `P²`, same reference measure.
    pub fn square(&self) -> Kernel {
        let n = self.len();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut acc = std::collections::BTreeMap::new();
                for (z, pxz) in self.csr.row(x) {
                    let w = pxz * self.m[z];
                    for (y, pzy) in self.csr.row(z) {
                        if y >= x {
                            *acc.entry(y).or_insert(0.0) += w * pzy;
                        }
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        let mut entries = Vec::new();
        for (x, r) in rows.into_iter().enumerate() {
            for (y, v) in r {
                entries.push((x, y, v));
            }
        }
        Kernel {
            csr: Csr::from_upper(n, &entries),
            m: self.m.clone(),
            h: self.h,
            h_prime: 2.0 * self.h_prime,
            support_radius: 2.0 * self.support_radius,
            margin: self.margin.clone(),
            lazy: self.lazy,
            name: format!("square {}", self.name),
        }
    }

    /// `ℰ` by pairs and by inner product, and `ℰ*`.
    pub fn forms(&self, f: &[f64]) -> Forms {
        let pf = self.apply(f);
        let mut pairs = Vec::with_capacity(self.nnz());
        for x in 0..self.len() {
            for (y, v) in self.csr.row(x) {
                let d = f[x] - f[y];
                pairs.push(0.5 * d * d * v * self.m[x] * self.m[y]);
            }
        }
        let energy = numeric::compensated_sum(pairs);
        let ff = linalg::dot_m(f, f, &self.m);
        let fpf = linalg::dot_m(f, &pf, &self.m);
        let pfpf = linalg::dot_m(&pf, &pf, &self.m);
        Forms {
            energy,
            energy_inner: ff - fpf,
            energy_star: ff - pfpf,
        }
    }

    /// [`Kernel::forms`] after checking `f` lives at distance `≥ h′` from the boundary.
    pub fn dirichlet_forms(&self, f: &[f64]) -> Result<Forms> {
        self.check_interior_support(f)?;
        Ok(self.forms(f))
    }

    fn check_interior_support(&self, f: &[f64]) -> Result<()> {
        for (x, v) in f.iter().enumerate() {
            if *v != 0.0 && self.margin[x] < self.support_radius {
                return Err(Error::Support(format!(
                    "function is non-zero at {x}, within {} of the boundary",
                    self.support_radius
                )));
            }
        }
        Ok(())
    }

    /// `|∇_P f|(x) = (Σ_y (f(y)−f(x))² p(x,y) m(y))^{1/2}`.
    pub fn grad(&self, f: &[f64], x: usize) -> f64 {
        self.csr
            .row(x)
            .map(|(y, v)| (f[y] - f[x]).powi(2) * v * self.m[y])
            .sum::<f64>()
            .sqrt()
    }

    /// `|⟨(I−P)f, g⟩ − ½ ΣΣ ∇f ∇g p m m|`.
    pub fn integration_by_parts_residual(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_interior_support(f)?;
        self.check_interior_support(g)?;
        let pf = self.apply(f);
        let lf: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
        let lhs = linalg::dot_m(&lf, g, &self.m);
        let mut pairs = Vec::with_capacity(self.nnz());
        for x in 0..self.len() {
            for (y, v) in self.csr.row(x) {
                pairs.push(0.5 * (f[x] - f[y]) * (g[x] - g[y]) * v * self.m[x] * self.m[y]);
            }
        }
        Ok((lhs - numeric::compensated_sum(pairs)).abs())
    }

    /// Audit the compatibility conditions on interior points (margin ≥ 2h′).
    pub fn audit_compat(&self, space: &Space, h: f64, h_prime: f64) -> Result<CompatAudit> {
        if h > h_prime {
            return Err(Error::Precondition(format!("h = {h} exceeds h′ = {h_prime}")));
        }
        let n = self.len();
        let mut support_ok = true;
        for x in 0..n {
            for (y, v) in self.csr.row(x) {
                if v > 0.0 && space.dist(x, y) > h_prime + 1e-9 {
                    support_ok = false;
                }
            }
        }
        let interior: Vec<usize> = (0..n)
            .filter(|&x| self.margin[x] >= 2.0 * h_prime)
            .collect();
        let interior = if interior.is_empty() {
            (0..n).collect()
        } else {
            interior
        };
        let vm = |x: usize, r: f64| -> f64 {
            numeric::compensated_sum(space.ball(x, r).into_iter().map(|y| self.m[y]))
        };
        let stats: Vec<(f64, f64)> = interior
            .par_iter()
            .map(|&x| {
                let vh = vm(x, h);
                let vhp = vm(x, h_prime);
                let mut lo = f64::INFINITY;
                for y in space.ball(x, h) {
                    lo = lo.min(self.p(x, y) * vh);
                }
                let hi = self
                    .csr
                    .row(x)
                    .map(|(_, v)| v * vhp)
                    .fold(0.0, f64::max);
                (lo, hi)
            })
            .collect();
        let c1_hat = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let big_c1_hat = stats.iter().map(|s| s.1).fold(0.0, f64::max);

        let stride = (interior.len() / 200).max(1);
        let sample: Vec<usize> = interior.iter().copied().step_by(stride).collect();
        let ratios: Vec<(f64, f64)> = sample
            .par_iter()
            .map(|&x| {
                let mut rows = vec![self.row(x)];
                for _ in 0..4 {
                    let next = self.apply(rows.last().unwrap());
                    rows.push(next);
                }
                let min_ratio = |k: usize| -> f64 {
                    let mut r = f64::INFINITY;
                    for (y, pk) in rows[k - 1].iter().enumerate() {
                        if *pk > 0.0 {
                            r = r.min(rows[k][y] / pk);
                        }
                    }
                    r
                };
                let alpha = min_ratio(1);
                let pcomp = (2..=4).map(min_ratio).fold(f64::INFINITY, f64::min);
                (alpha, pcomp)
            })
            .collect();
        Ok(CompatAudit {
            c1_hat,
            big_c1_hat,
            support_ok,
            alpha_hat: ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
            pcomp_hat: ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
            points_audited: interior.len(),
        })
    }

    /// `G_N(x,·) = Σ_{i≤N} p_i(x,·)` until the extrapolated tail is below `tol·max G_N`.
    ///
    /// The sup-norm increments are fitted to `C i^{−s}` on the second half of the
    /// run; the tail estimate is `inc_N·N/(s−1)` and only exists for `s > 1`.
    pub fn green(&self, x: usize, tol: f64, kmax: usize) -> Result<GreenSums> {
        if x >= self.len() {
            return Err(Error::PointOutOfRange(x));
        }
        let mut row = self.row(x);
        let mut sums = row.clone();
        let mut incs = vec![row.iter().fold(0.0f64, |a, v| a.max(v.abs()))];
        let mut status = GreenStatus::NoConvergence;
        let mut decay = None;
        let mut tail = f64::INFINITY;
        let mut steps = 1;
        while steps < kmax {
            if !self.steps_clear(x, steps + 1) {
                status = GreenStatus::Truncated;
                break;
            }
            row = self.apply(&row);
            check_budget()?;
            steps += 1;
            sums.iter_mut().zip(&row).for_each(|(s, r)| *s += r);
            incs.push(row.iter().fold(0.0f64, |a, v| a.max(v.abs())));
            if steps >= 16 && steps % 8 == 0 {
                let (s, t) = tail_fit(&incs);
                decay = Some(s);
                tail = t;
                let gmax = sums.iter().fold(0.0f64, |a, v| a.max(*v));
                if t <= tol * gmax {
                    status = GreenStatus::Converged;
                    break;
                }
            }
        }
        if steps >= 16 && decay.is_none() {
            let (s, t) = tail_fit(&incs);
            decay = Some(s);
            tail = t;
        }
        Ok(GreenSums {
            sums,
            steps,
            status,
            decay_exponent: decay,
            tail,
        })
    }

    /// Restriction to the closed ball `B(center, r)`.
    pub fn restrict(&self, space: &Space, center: usize, r: f64) -> Result<DirichletKernel> {
        if center >= self.len() {
            return Err(Error::PointOutOfRange(center));
        }
        if !(r >= 0.0) {
            return Err(Error::EmptyBall { center, radius: r });
        }
        if r > self.margin[center] + 1e-12 {
            return Err(Error::OutsideWindow { center, radius: r });
        }
        Ok(DirichletKernel::from_members(self, space.ball(center, r), center, r))
    }

    /// Restriction to an arbitrary point set.
    pub fn restrict_to(&self, members: Vec<usize>) -> DirichletKernel {
        let c = members.first().copied().unwrap_or(0);
        DirichletKernel::from_members(self, members, c, f64::NAN)
    }

    /// Kernel dump: `kernel n nnz`, `m id value`, `p i j value` with `i ≤ j`.
    pub fn to_text(&self) -> String {
        let entries = self.entries();
        let mut out = String::new();
        let _ = writeln!(out, "kernel {} {}", self.len(), entries.len());
        for (i, v) in self.m.iter().enumerate() {
            let _ = writeln!(out, "m {i} {v}");
        }
        for (i, j, v) in entries {
            let _ = writeln!(out, "p {i} {j} {v}");
        }
        out
    }
}

fn tail_fit(incs: &[f64]) -> (f64, f64) {
    let n = incs.len();
    let lo = n / 2;
    let (ks, vs): (Vec<f64>, Vec<f64>) = (lo..n)
        .map(|i| ((i + 1) as f64, incs[i]))
        .filter(|(_, v)| *v > 0.0)
        .unzip();
    let s = numeric::loglog_slope(&ks, &vs).map(|v| -v).unwrap_or(0.0);
    let last = incs[n - 1];
    let tail = if last == 0.0 {
        0.0
    } else if s > 1.0 {
        last * n as f64 / (s - 1.0)
    } else {
        f64::INFINITY
    };
    (s, tail)
}

/// Parsed kernel dump.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDump {
    pub m: Vec<f64>,
    pub entries: Vec<(usize, usize, f64)>,
}

impl KernelDump {
    pub fn parse(text: &str) -> Result<KernelDump> {
        let mut header: Option<(usize, usize)> = None;
        let mut m: Vec<Option<f64>> = Vec::new();
        let mut entries = Vec::new();
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last = line;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let err = |msg: &str| Error::Parse {
                line,
                msg: msg.to_string(),
            };
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| err("malformed number")) };
            let idx = |s: &str| -> Result<usize> { s.parse().map_err(|_| err("malformed index")) };
            match (f[0], header) {
                ("kernel", None) if f.len() == 3 => {
                    let n = idx(f[1])?;
                    header = Some((n, idx(f[2])?));
                    m = vec![None; n];
                }
                ("kernel", _) => return Err(err("bad or duplicate header")),
                (_, None) => return Err(err("missing `kernel` header")),
                ("m", Some((n, _))) if f.len() == 3 => {
                    let id = idx(f[1])?;
                    if id >= n {
                        return Err(err("point id out of range"));
                    }
                    m[id] = Some(num(f[2])?);
                }
                ("p", Some((n, _))) if f.len() == 4 => {
                    let (a, b) = (idx(f[1])?, idx(f[2])?);
                    if a >= n || b >= n {
                        return Err(err("point id out of range"));
                    }
                    if a > b {
                        return Err(err("entries must satisfy id1 ≤ id2"));
                    }
                    entries.push((a, b, num(f[3])?));
                }
                _ => return Err(err("malformed record")),
            }
        }
        let (_, nnz) = header.ok_or(Error::Parse {
            line: last.max(1),
            msg: "missing `kernel` header".into(),
        })?;
        if entries.len() != nnz {
            return Err(Error::Parse {
                line: last,
                msg: format!("header declares {nnz} entries, found {}", entries.len()),
            });
        }
        let m = m
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or(Error::Parse {
                    line: last,
                    msg: format!("no `m` line for point {i}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelDump { m, entries })
    }

    /// Support graph with hop metric and weights `m`.
    pub fn support_space(&self) -> Result<Space> {
        let edges = self
            .entries
            .iter()
            .filter(|(a, b, v)| a != b && *v > 0.0)
            .map(|(a, b, _)| (*a, *b))
            .collect();
        Space::from_graph(GraphData {
            weights: self.m.clone(),
            edges,
        })
    }

    pub fn into_kernel(self, space: &Space, h: f64, h_prime: f64) -> Result<Kernel> {
        Kernel::from_entries(space, self.m, self.entries, h, h_prime, "dump")
    }
}

/// Ball walk `p = 1_{d≤h}/(V(x,h)V(y,h))` with `m = V(·,h)·μ`.
pub fn ball_walk(space: &Space, h: f64) -> Result<Kernel> {
    check_scale(space, h)?;
    let balls: Vec<Vec<usize>> = (0..space.len()).into_par_iter().map(|x| space.ball(x, h)).collect();
    let vol: Vec<f64> = balls
        .iter()
        .map(|b| numeric::compensated_sum(b.iter().map(|&y| space.mass(y))))
        .collect();
    let mut entries = Vec::new();
    for (x, b) in balls.iter().enumerate() {
        for &y in b {
            if y >= x {
                entries.push((x, y, 1.0 / (vol[x] * vol[y])));
            }
        }
    }
    let m = vol.iter().enumerate().map(|(x, v)| v * space.mass(x)).collect();
    let mut k = Kernel::from_entries(space, m, entries, h, h, "ball walk")?;
    k.support_radius = k.support_radius.max(h.min(space.window_diameter()));
    Ok(k)
}

/// Annulus walk on `h1 < d ≤ h2`, symmetrised like the ball walk.
pub fn annulus_walk(space: &Space, h: f64, h1: f64, h2: f64) -> Result<Kernel> {
    if !(0.0 < h1 && h1 < h2) {
        return Err(Error::InvalidParameter("annulus needs 0 < h1 < h2".into()));
    }
    check_scale(space, h1)?;
    let rings: Vec<Vec<usize>> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            space
                .ball(x, h2)
                .into_iter()
                .filter(|&y| space.dist(x, y) > h1 + 1e-9 * h1.max(1.0))
                .collect()
        })
        .collect();
    let mut area = Vec::with_capacity(space.len());
    for (x, r) in rings.iter().enumerate() {
        let a = numeric::compensated_sum(r.iter().map(|&y| space.mass(y)));
        if a == 0.0 {
            return Err(Error::EmptyAnnulus(x));
        }
        area.push(a);
    }
    let mut entries = Vec::new();
    for (x, r) in rings.iter().enumerate() {
        for &y in r {
            if y > x {
                entries.push((x, y, 1.0 / (area[x] * area[y])));
            }
        }
    }
    let m = area.iter().enumerate().map(|(x, a)| a * space.mass(x)).collect();
    let mut k = Kernel::from_entries(space, m, entries, h, h2, "annulus walk")?;
    k.support_radius = k.support_radius.max(h2.min(space.window_diameter()));
    Ok(k)
}

/// Simple random walk on a connected graph: `p = 1_{x~y}/(W(x)W(y))`, `m = W·μ`.
pub fn srw(space: &Space) -> Result<Kernel> {
    if !space.kind().is_graph() {
        return Err(Error::UnsupportedKind(format!(
            "simple random walk needs a graph, got {}",
            space.kind().name()
        )));
    }
    if space.len() > 1 && space.proximity_components(1.0).iter().any(|&c| c != 0) {
        return Err(Error::Precondition("graph is not connected".into()));
    }
    if space.len() == 1 {
        return Err(Error::Precondition("graph has no edges".into()));
    }
    let nbrs: Vec<Vec<usize>> = (0..space.len()).map(|x| space.graph_neighbors(x)).collect();
    let w: Vec<f64> = nbrs
        .iter()
        .map(|nb| numeric::compensated_sum(nb.iter().map(|&y| space.mass(y))))
        .collect();
    let mut entries = Vec::new();
    for (x, nb) in nbrs.iter().enumerate() {
        for &y in nb {
            if y > x {
                entries.push((x, y, 1.0 / (w[x] * w[y])));
            }
        }
    }
    let m = w.iter().enumerate().map(|(x, v)| v * space.mass(x)).collect();
    let mut k = Kernel::from_entries(space, m, entries, 1.0, 1.0, "simple random walk")?;
    k.support_radius = 1.0;
    Ok(k)
}

fn check_scale(space: &Space, h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("scale h must be positive".into()));
    }
    if let Some(rho) = space.resolution() {
        if h < 2.0 * rho - 1e-12 {
            return Err(Error::BelowResolution {
                eps: h,
                resolution: rho,
            });
        }
    }
    Ok(())
}

/// Kernel killed on exiting a point set `B`, in local indices.
#[derive(Clone, Debug)]
pub struct DirichletKernel {
    pub center: usize,
    pub radius: f64,
    /// Global indices of `B`, ascending.
    pub members: Vec<usize>,
    local: Vec<usize>,
    m: Vec<f64>,
    csr: Csr,
    h_prime: f64,
}

impl DirichletKernel {
    fn from_members(k: &Kernel, members: Vec<usize>, center: usize, radius: f64) -> Self {
        let mut local = vec![usize::MAX; k.len()];
        for (i, &g) in members.iter().enumerate() {
            local[g] = i;
        }
        let mut entries = Vec::new();
        for (i, &g) in members.iter().enumerate() {
            for (y, v) in k.csr.row(g) {
                let j = local[y];
                if j != usize::MAX && j >= i {
                    entries.push((i, j, v));
                }
            }
        }
        let m = members.iter().map(|&g| k.m[g]).collect();
        DirichletKernel {
            center,
            radius,
            csr: Csr::from_upper(members.len(), &entries),
            members,
            local,
            m,
            h_prime: k.h_prime,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn h_prime(&self) -> f64 {
        self.h_prime
    }

    /// Local index of a global point, if it lies in `B`.
    pub fn local(&self, g: usize) -> Option<usize> {
        self.local.get(g).copied().filter(|&i| i != usize::MAX)
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.csr.upper()
    }

    /// `P_B f` on local vectors.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.csr.apply(f, &self.m)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.len()];
        for (j, v) in self.csr.row(i) {
            r[j] = v;
        }
        r
    }

    /// `p_n^B(x,·)` on `B` for a global point `x ∈ B`.
    pub fn iterate(&self, x: usize, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("iterate needs n ≥ 1".into()));
        }
        let i = self.local(x).ok_or(Error::PointOutOfRange(x))?;
        let mut r = self.row(i);
        for _ in 1..n {
            r = self.apply(&r);
            check_budget()?;
        }
        Ok(r)
    }

    /// `Σ_y p_n^B(x,y) m(y)`.
    pub fn mass(&self, row: &[f64]) -> f64 {
        linalg::dot_m(row, &vec![1.0; row.len()], &self.m)
    }

    /// Scatter a local vector into a global one (zero outside `B`).
    pub fn to_global(&self, local: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &g) in self.members.iter().enumerate() {
            out[g] = local[i];
        }
        out
    }

    /// `ℰ^B(f,f) = ⟨(I − P_B) f, f⟩_m` for local `f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let pf = self.apply(f);
        linalg::dot_m(f, f, &self.m) - linalg::dot_m(f, &pf, &self.m)
    }

    /// Extreme eigenvalues of `P_B` in `L²(m)`: dense up to 2000 points, Lanczos beyond.
    pub fn extremes(&self) -> Result<linalg::Extremes> {
        let n = self.len();
        if n <= 2000 {
            let sq: Vec<f64> = self.m.iter().map(|v| v.sqrt()).collect();
            let mut a = nalgebra::DMatrix::zeros(n, n);
            for (i, j, v) in self.entries() {
                let s = v * sq[i] * sq[j];
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
            let (values, vectors) = linalg::sym_eigen(a);
            let top = (0..n).map(|i| vectors[(i, n - 1)] / sq[i]).collect();
            Ok(linalg::Extremes {
                min: values[0],
                max: values[n - 1],
                top,
                iterations: 0,
            })
        } else {
            linalg::lanczos(|f| self.apply(f), &self.m, 1e-10, 10_000, 0x5eed)
        }
    }

    /// `Σ_{i≥1} p_i^B(x,·)` with a certified geometric tail bound.
    pub fn green(&self, x: usize, tol: f64, kmax: usize) -> Result<GreenSums> {
        let i = self.local(x).ok_or(Error::PointOutOfRange(x))?;
        let lambda = self.extremes()?.spectral_radius();
        if lambda >= 1.0 - 1e-14 {
            return Err(Error::Precondition(
                "spectral radius of the restricted kernel is 1".into(),
            ));
        }
        let mmin = self.m.iter().copied().fold(f64::INFINITY, f64::min);
        let mut row = self.row(i);
        let mut sums = row.clone();
        let mut steps = 1;
        loop {
            let tail = linalg::norm_m(&row, &self.m) * lambda / (1.0 - lambda) / mmin.sqrt();
            if tail < tol {
                return Ok(GreenSums {
                    sums,
                    steps,
                    status: GreenStatus::Converged,
                    decay_exponent: None,
                    tail,
                });
            }
            if steps >= kmax {
                return Ok(GreenSums {
                    sums,
                    steps,
                    status: GreenStatus::NoConvergence,
                    decay_exponent: None,
                    tail,
                });
            }
            row = self.apply(&row);
            check_budget()?;
            sums.iter_mut().zip(&row).for_each(|(s, r)| *s += r);
            steps += 1;
        }
    }
}
