use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{check_budget, Kernel};
use crate::numeric;
use crate::space::Space;

/// One admitted `(x, y, n)` sample, aggregated over a distance shell.
#[derive(Clone, Debug)]
pub struct GaussSample {
    pub n: usize,
    pub x: usize,
    /// Representative `y` of the shell (the argmax for upper, argmin for lower).
    pub y: usize,
    pub d: f64,
    pub p: f64,
    pub v_sqrt_n: f64,
    /// `log(V_m(x,√n) p_n(x,y))`.
    pub log_ratio: f64,
    /// `margin(x) − d − A√n ≥ 0`.
    pub slack: f64,
    pub upper: bool,
}

#[derive(Clone, Debug)]
pub struct GaussianFit {
    pub n_min: usize,
    pub n_max: usize,
    pub a: f64,
    pub samples: Vec<GaussSample>,
    pub c1_upper: f64,
    pub c2_upper: f64,
    pub c1_lower: f64,
    pub c2_lower: f64,
    pub c3_lower: f64,
    /// Spread (max − min) of the upper-fit log residuals.
    pub upper_spread: f64,
    pub lower_spread: f64,
    /// `(x, n, ρ_n(x))`.
    pub diagonal: Vec<(usize, usize, f64)>,
}

impl GaussianFit {
    pub fn diagonal_within(&self, lo: f64, hi: f64) -> bool {
        self.diagonal.iter().all(|(_, _, r)| *r >= lo && *r <= hi)
    }
}

/// `V_m(x, r) = Σ_{B(x,r)} m`.
pub fn volume_m(k: &Kernel, space: &Space, x: usize, r: f64) -> f64 {
    let m = k.m();
    numeric::compensated_sum(space.ball(x, r).into_iter().map(|y| m[y]))
}

/// Horizon sample points: `n_min`, `n_max` and log-spaced values between.
fn horizon(n_min: usize, n_max: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1).max(1) as f64;
            ((n_min as f64).ln() * (1.0 - t) + (n_max as f64).ln() * t).exp().round() as usize
        })
        .collect();
    out.dedup();
    out
}

/// Rows `p_n(x,·)` at the requested times (ascending).
fn rows_at(k: &Kernel, x: usize, times: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut row = k.row(x);
    let mut n = 1;
    for &t in times {
        while n < t {
            row = k.apply(&row);
            check_budget()?;
            n += 1;
        }
        out.push(row.clone());
    }
    Ok(out)
}

/// `ρ_n(x) = V_m(x,√n) p_n(x,x)` with a truncation flag per sample.
pub fn on_diagonal_profile(k: &Kernel, space: &Space, centers: &[usize], times: &[usize]) -> Result<Vec<(usize, usize, f64, bool)>> {
    let mut t = times.to_vec();
    t.sort_unstable();
    t.dedup();
    if t.first() == Some(&0) {
        return Err(Error::InvalidParameter("times must be positive".into()));
    }
    let per: Vec<Vec<(usize, usize, f64, bool)>> = centers
        .par_iter()
        .map(|&x| {
            let rows = rows_at(k, x, &t)?;
            Ok(t.iter()
                .zip(rows)
                .map(|(&n, row)| {
                    let v = volume_m(k, space, x, (n as f64).sqrt());
                    (x, n, v * row[x], !k.steps_clear(x, n))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Fit Gaussian envelopes on `n ∈ [n_min, n_max]`.
///
/// Centres are the window centre plus seeded points near it; samples need
/// `margin(x) ≥ d(x,y) + A√n`. Within each `(x, n, d)` shell the largest value
/// feeds the upper fit and the smallest the lower one, so that anisotropy of the
/// metric does not masquerade as Gaussian spread.
pub fn gaussian_fit(
    k: &Kernel,
    space: &Space,
    n_min: usize,
    n_max: usize,
    centers: usize,
    a: f64,
    seed: u64,
) -> Result<GaussianFit> {
    if n_min == 0 || n_max < n_min {
        return Err(Error::InvalidParameter("need 1 ≤ n_min ≤ n_max".into()));
    }
    let c = space.center();
    let mut xs = vec![c];
    let mut rng = numeric::rng(seed, 0x9a55);
    let near = space.ball(c, (n_min as f64).sqrt().max(k.h_prime));
    while xs.len() < centers.max(1) && xs.len() < near.len() {
        let y = near[rng.random_range(0..near.len())];
        if !xs.contains(&y) {
            xs.push(y);
        }
    }
    let times = horizon(n_min, n_max, 9);
    let hp = k.h_prime;
    let c3 = 0.5 * hp;

    type PerCenter = (Vec<GaussSample>, Vec<(usize, usize, f64)>);
    let per: Vec<PerCenter> = xs
        .par_iter()
        .map(|&x| {
            let rows = rows_at(k, x, &times)?;
            let mut samples = Vec::new();
            let mut diag = Vec::new();
            for (&n, row) in times.iter().zip(&rows) {
                let sq = (n as f64).sqrt();
                let budget = space.margin(x).min(k.margin(x)) - a * sq;
                if budget < 0.0 {
                    continue;
                }
                let v = volume_m(k, space, x, sq);
                diag.push((x, n, v * row[x]));
                let mut shells: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
                for y in space.ball(x, budget) {
                    if row[y] <= 0.0 {
                        continue;
                    }
                    let key = (space.dist(x, y) * 1e6).round() as u64;
                    let e = shells.entry(key).or_insert((y, y));
                    if row[y] > row[e.0] {
                        e.0 = y;
                    }
                    if row[y] < row[e.1] {
                        e.1 = y;
                    }
                }
                for (_, (hi, lo)) in shells {
                    let d = space.dist(x, hi);
                    let slack = budget - d;
                    if d >= sq {
                        samples.push(sample(n, x, hi, d, row[hi], v, slack, true));
                    }
                    if d <= c3 * n as f64 {
                        samples.push(sample(n, x, lo, d, row[lo], v, slack, false));
                    }
                }
            }
            Ok((samples, diag))
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    let mut diagonal = Vec::new();
    for (s, d) in per {
        samples.extend(s);
        diagonal.extend(d);
    }
    if diagonal.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "no centre has margin ≥ {a}·√n for n ≥ {n_min}"
        )));
    }
    let (c2u, c1u, su) = envelope(&samples, true)?;
    let (c2l, c1l, sl) = envelope(&samples, false)?;
    Ok(GaussianFit {
        n_min,
        n_max,
        a,
        samples,
        c1_upper: c1u,
        c2_upper: c2u,
        c1_lower: c1l,
        c2_lower: c2l,
        c3_lower: c3,
        upper_spread: su,
        lower_spread: sl,
        diagonal,
    })
}

#[allow(clippy::too_many_arguments)]
fn sample(n: usize, x: usize, y: usize, d: f64, p: f64, v: f64, slack: f64, upper: bool) -> GaussSample {
    GaussSample {
        n,
        x,
        y,
        d,
        p,
        v_sqrt_n: v,
        log_ratio: (v * p).ln(),
        slack,
        upper,
    }
}

/// Regress `−log(V p)` on `d²/n`; returns `(C₂, C₁, spread)` with `C₁` from the
/// extreme residual (max for upper, min for lower).
fn envelope(samples: &[GaussSample], upper: bool) -> Result<(f64, f64, f64)> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.upper == upper)
        .map(|s| (s.d * s.d / s.n as f64, -s.log_ratio))
        .unzip();
    let (slope, _) = numeric::linear_fit(&ts, &ys).ok_or_else(|| {
        Error::InsufficientSamples(format!("{} {} samples", ts.len(), if upper { "upper" } else { "lower" }))
    })?;
    // residual of log(Vp) + t/C₂ = log C
    let res: Vec<f64> = ts.iter().zip(&ys).map(|(t, y)| -y + slope * t).collect();
    let hi = res.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = res.iter().copied().fold(f64::INFINITY, f64::min);
    let c1 = if upper { hi.exp() } else { lo.exp() };
    Ok((1.0 / slope, c1, hi - lo))
}

/// `E_D(k,x)·V_m(x,√k)` for `k = 1..=kmax`.
#[derive(Clone, Debug)]
pub struct EdProfile {
    pub d: f64,
    pub values: Vec<f64>,
    pub products: Vec<f64>,
    /// `max/min` of the products.
    pub spread: f64,
    pub pass: bool,
}

/// `E_D(k,x) = Σ_z h_k(x,z)² exp(d₁²/(Dk)) m(z)`, `d₁ = max(d, h′)`.
pub fn ed_profile(k: &Kernel, space: &Space, x: usize, d: f64, kmax: usize, a: f64, bound: f64) -> Result<EdProfile> {
    if !(d > 0.0) || kmax == 0 {
        return Err(Error::InvalidParameter("need D > 0 and kmax ≥ 1".into()));
    }
    let margin = space.margin(x).min(k.margin(x));
    if a * (kmax as f64).sqrt() > margin {
        return Err(Error::OutsideWindow {
            center: x,
            radius: a * (kmax as f64).sqrt(),
        });
    }
    let hp = k.h_prime;
    let m = k.m();
    let dist: Vec<f64> = (0..k.len()).map(|z| space.dist(x, z).max(hp)).collect();
    let mut h = k.iterate(x, 2)?.values;
    let mut values = Vec::with_capacity(kmax);
    let mut products = Vec::with_capacity(kmax);
    for step in 1..=kmax {
        h = k.apply_lazy(&h);
        check_budget()?;
        let dk = d * step as f64;
        let e = numeric::compensated_sum(
            h.iter()
                .zip(&dist)
                .zip(m)
                .filter(|((v, _), _)| **v != 0.0)
                .map(|((v, d1), w)| v * v * (d1 * d1 / dk).exp() * w),
        );
        values.push(e);
        products.push(e * volume_m(k, space, x, (step as f64).sqrt()));
    }
    let hi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    Ok(EdProfile {
        d,
        values,
        products,
        spread,
        pass: spread.is_finite() && spread <= bound,
    })
}

/// On-diagonal ratio at the root of the infinite `q`-regular tree, lazy SRW,
/// computed exactly on the radial quotient (a birth–death chain on levels).
///
/// Returns `(n, ρ_n)` with `ρ_n = V_m(o, √n) p_n(o,o)`, `m = deg`.
pub fn tree_root_profile(degree: usize, times: &[usize]) -> Result<Vec<(usize, f64)>> {
    if degree < 3 {
        return Err(Error::InvalidParameter("tree degree must be at least 3".into()));
    }
    let q = degree as f64;
    let nmax = times.iter().copied().max().unwrap_or(0);
    let levels = nmax + 2;
    let mut prob = vec![0.0; levels];
    prob[0] = 1.0;
    let mut out = Vec::new();
    let mut want: Vec<usize> = times.to_vec();
    want.sort_unstable();
    let mut wi = 0;
    for n in 1..=nmax {
        let mut next = vec![0.0; levels];
        for (j, &pj) in prob.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            next[j] += 0.5 * pj;
            if j == 0 {
                next[1] += 0.5 * pj;
            } else {
                next[j + 1] += 0.5 * pj * (q - 1.0) / q;
                next[j - 1] += 0.5 * pj / q;
            }
        }
        prob = next;
        while wi < want.len() && want[wi] == n {
            // level counts 1, q, q(q−1), …; every vertex has m = q
            let r = (n as f64).sqrt().floor() as usize;
            let mut count = 1.0;
            let mut layer = q;
            for _ in 1..=r {
                count += layer;
                layer *= q - 1.0;
            }
            out.push((n, q * count * prob[0] / q));
            wi += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ball_walk, srw};
    use crate::space::SpaceSpec;

    #[test]
    fn tree_quotient_matches_full_tree() {
        let s = Space::build(SpaceSpec::Tree { degree: 3, depth: 8 }).unwrap();
        let k = srw(&s).unwrap().lazy();
        let times = [2usize, 4, 6];
        let exact = tree_root_profile(3, &times).unwrap();
        let full = on_diagonal_profile(&k, &s, &[0], &times).unwrap();
        for ((n, a), (_, _, b, _)) in exact.iter().zip(&full) {
            assert!((a - b).abs() < 1e-12 * a, "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn ed_with_huge_d_is_a_norm() {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 61 }).unwrap();
        let k = ball_walk(&s, 1.0).unwrap();
        let p = ed_profile(&k, &s, 30, 1e12, 3, 6.0, 50.0).unwrap();
        let h = k.hk(30, 3).unwrap().values;
        let norm: f64 = h.iter().zip(k.m()).map(|(v, w)| v * v * w).sum();
        assert!((p.values[2] / norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn finite_speed() {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 61 }).unwrap();
        let k = ball_walk(&s, 1.0).unwrap();
        let row = k.iterate(30, 5).unwrap().values;
        assert!(row.iter().enumerate().all(|(y, v)| (s.dist(30, y) <= 5.0) == (*v > 0.0)));
    }
}
