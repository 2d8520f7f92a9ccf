use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{DirichletKernel, Kernel};
use crate::linalg;
use crate::numeric;
use crate::space::Space;

/// A named trial function on the points of a ball (local indices).
#[derive(Clone, Debug)]
pub struct Trial {
    pub id: String,
    pub f: Vec<f64>,
}

/// Observed lower bound on a best constant.
#[derive(Clone, Debug)]
pub struct ConstantProbe {
    pub name: &'static str,
    pub center: usize,
    pub radius: f64,
    pub observed: f64,
    pub witness_id: String,
    pub witness: Vec<f64>,
    /// `(trial id, ratio)` for every trial evaluated.
    pub ratios: Vec<(String, f64)>,
}

impl ConstantProbe {
    fn from_ratios(name: &'static str, center: usize, radius: f64, trials: &[Trial], ratios: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, r) in ratios.iter().enumerate() {
            if *r > ratios[best] {
                best = i;
            }
        }
        ConstantProbe {
            name,
            center,
            radius,
            observed: ratios.get(best).copied().unwrap_or(0.0),
            witness_id: trials.get(best).map(|t| t.id.clone()).unwrap_or_default(),
            witness: trials.get(best).map(|t| t.f.clone()).unwrap_or_default(),
            ratios: trials.iter().map(|t| t.id.clone()).zip(ratios).collect(),
        }
    }
}

/// The fixed trial family on a ball: point indicators, tents at three widths,
/// the top five eigenfunctions of `P_B` and `random` seeded Gaussian vectors.
pub fn ball_trials(space: &Space, dk: &DirichletKernel, random: usize, seed: u64) -> Result<Vec<Trial>> {
    let n = dk.len();
    let mut out = Vec::new();
    let stride = (n / 50).max(1);
    let mut points: Vec<usize> = (0..n).step_by(stride).collect();
    if let Some(c) = dk.local(dk.center) {
        if !points.contains(&c) {
            points.push(c);
        }
    }
    for i in points {
        let mut f = vec![0.0; n];
        f[i] = 1.0;
        out.push(Trial {
            id: format!("point:{}", dk.members[i]),
            f,
        });
    }
    let r = if dk.radius.is_finite() { dk.radius } else { 1.0 };
    for (label, w) in [("tent:r/4", r / 4.0), ("tent:r/2", r / 2.0), ("tent:r", r)] {
        let f = dk
            .members
            .iter()
            .map(|&g| (1.0 - space.dist(dk.center, g) / w.max(1e-12)).max(0.0))
            .collect();
        out.push(Trial {
            id: label.to_string(),
            f,
        });
    }
    out.extend(top_eigenfunctions(dk, 5)?);
    let mut rng = numeric::rng(seed, 0x7472);
    for t in 0..random {
        let f = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        out.push(Trial {
            id: format!("gauss:{t}"),
            f,
        });
    }
    Ok(out)
}

fn top_eigenfunctions(dk: &DirichletKernel, count: usize) -> Result<Vec<Trial>> {
    let n = dk.len();
    if n <= 2000 {
        let sq: Vec<f64> = dk.m().iter().map(|v| v.sqrt()).collect();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for (i, j, v) in dk.entries() {
            a[(i, j)] = v * sq[i] * sq[j];
            a[(j, i)] = v * sq[i] * sq[j];
        }
        let (_, vecs) = linalg::sym_eigen(a);
        Ok((0..count.min(n))
            .map(|k| Trial {
                id: format!("eigen:{k}"),
                f: (0..n).map(|i| vecs[(i, n - 1 - k)] / sq[i]).collect(),
            })
            .collect())
    } else {
        let e = dk.extremes()?;
        Ok(vec![Trial {
            id: "eigen:0".into(),
            f: e.top,
        }])
    }
}

fn lp_norm(f: &[f64], m: &[f64], p: f64) -> f64 {
    numeric::compensated_sum(f.iter().zip(m).map(|(v, w)| v.abs().powf(p) * w)).powf(1.0 / p)
}

/// Worst `‖f − f_s‖₂² / (s² ℰ(f,f))` over interior trial functions, with
/// `f_s` the `s`-ball average in the kernel's reference measure.
///
/// A trial with `ℰ(f,f) = 0` but `f ≠ f_s` yields `∞`; trials with both
/// sides below `1e−14` are skipped.
pub fn pseudo_poincare_check(k: &Kernel, space: &Space, s: f64, trials: usize, seed: u64) -> Result<ConstantProbe> {
    if let Some(rho) = space.resolution() {
        if s < rho {
            return Err(Error::BelowResolution { eps: s, resolution: rho });
        }
    }
    let c = space.center();
    let reach = s + k.support_radius();
    let radius = (space.margin(c) - reach).min(8.0 * s);
    if radius <= 0.0 {
        return Err(Error::OutsideWindow { center: c, radius: reach });
    }
    let support = space.ball(c, radius);
    let region = space.ball(c, radius + s);
    let m = k.m();
    let n = space.len();
    let mut fam: Vec<Trial> = Vec::new();
    let mut rng = numeric::rng(seed, 0x7070);
    let embed = |vals: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut f = vec![0.0; n];
        for &g in &support {
            f[g] = vals(g);
        }
        f
    };
    for w in [s, 2.0 * s, 4.0 * s] {
        fam.push(Trial {
            id: format!("bump:{w}"),
            f: embed(&|g| (1.0 - space.dist(c, g) / w).max(0.0)),
        });
    }
    // ±1 on whole components only, so a cut never costs energy
    let labels = space.proximity_components(k.support_radius().max(1e-12));
    let mut inside = vec![true; labels.iter().max().map_or(0, |l| l + 1)];
    let mut in_support = vec![false; n];
    for &g in &support {
        in_support[g] = true;
    }
    for (g, &l) in labels.iter().enumerate() {
        if !in_support[g] {
            inside[l] = false;
        }
    }
    fam.push(Trial {
        id: "components".into(),
        f: embed(&|g| match (inside[labels[g]], labels[g] % 2) {
            (false, _) => 0.0,
            (true, 0) => 1.0,
            (true, _) => -1.0,
        }),
    });
    for t in 0..trials {
        let g = support[(t * 7919 + 13) % support.len()];
        let mut f = vec![0.0; n];
        f[g] = 1.0;
        fam.push(Trial {
            id: format!("spike:{g}"),
            f,
        });
        let noise: Vec<f64> = support.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut f = vec![0.0; n];
        for (g, v) in support.iter().zip(noise) {
            f[*g] = v;
        }
        fam.push(Trial {
            id: format!("gauss:{t}"),
            f,
        });
    }
    let vols: Vec<(usize, Vec<usize>, f64)> = region
        .par_iter()
        .map(|&x| {
            let b = space.ball(x, s);
            let v = numeric::compensated_sum(b.iter().map(|&y| m[y]));
            (x, b, v)
        })
        .collect();
    let ratios: Vec<f64> = fam
        .iter()
        .map(|t| {
            let mut diff = Vec::with_capacity(region.len());
            for (x, b, v) in &vols {
                let avg = numeric::compensated_sum(b.iter().map(|&y| t.f[y] * m[y])) / v;
                diff.push((t.f[*x] - avg).powi(2) * m[*x]);
            }
            let num = numeric::compensated_sum(diff);
            let e = k.forms(&t.f).energy;
            if e <= 1e-14 {
                if num <= 1e-14 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                num / (s * s * e)
            }
        })
        .collect();
    Ok(ConstantProbe::from_ratios("pseudo-poincare", c, s, &fam, ratios))
}

/// Worst `‖P_B f‖²_{2δ/(δ−2)} / (r² V(x,r)^{−2/δ} (ℰ^B(f,f) + r⁻²‖f‖₂²))`.
pub fn sobolev_probe(dk: &DirichletKernel, space: &Space, delta: f64, trials: usize, seed: u64) -> Result<ConstantProbe> {
    if delta <= 2.0 {
        return Err(Error::InvalidParameter("delta must exceed 2".into()));
    }
    let r = dk.radius;
    let m = dk.m();
    let vol = numeric::compensated_sum(m.iter().copied());
    let q = 2.0 * delta / (delta - 2.0);
    let fam = ball_trials(space, dk, trials, seed)?;
    let ratios = fam
        .par_iter()
        .map(|t| {
            let pf = dk.apply(&t.f);
            let lhs = lp_norm(&pf, m, q).powi(2);
            let rhs = r * r / vol.powf(2.0 / delta) * (dk.energy(&t.f) + linalg::dot_m(&t.f, &t.f, m) / (r * r));
            if rhs > 0.0 {
                lhs / rhs
            } else {
                0.0
            }
        })
        .collect();
    Ok(ConstantProbe::from_ratios("sobolev", dk.center, r, &fam, ratios))
}

/// Worst `‖Pf‖₂^{2+4/δ} / (r² V(x,r)^{−2/δ} (ℰ(f,f) + r⁻²‖f‖₂²) ‖f‖₁^{4/δ})`
/// over trial functions supported in `B(x,r)`.
pub fn nash_probe(k: &Kernel, space: &Space, center: usize, r: f64, delta: f64, trials: usize, seed: u64) -> Result<ConstantProbe> {
    if delta <= 2.0 {
        return Err(Error::InvalidParameter("delta must exceed 2".into()));
    }
    let dk = k.restrict(space, center, r)?;
    let fam = ball_trials(space, &dk, trials, seed)?;
    let m = k.m();
    let vol = numeric::compensated_sum(dk.m().iter().copied());
    let n = space.len();
    let ratios = fam
        .par_iter()
        .map(|t| {
            let f = dk.to_global(&t.f, n);
            let pf = k.apply(&f);
            let lhs = linalg::norm_m(&pf, m).powf(2.0 + 4.0 / delta);
            let e = k.forms(&f).energy;
            let rhs = r * r / vol.powf(2.0 / delta)
                * (e + linalg::dot_m(&f, &f, m) / (r * r))
                * lp_norm(&f, m, 1.0).powf(4.0 / delta);
            if rhs > 0.0 {
                lhs / rhs
            } else {
                0.0
            }
        })
        .collect();
    Ok(ConstantProbe::from_ratios("nash", center, r, &fam, ratios))
}

/// `‖P_B^k‖_{1→∞}` for `k = 1..=kmax` against the ultracontractive envelope shape.
#[derive(Clone, Debug)]
pub struct UltraProfile {
    pub norms: Vec<f64>,
    /// `max_k observed / ((1+r²)^{δ/2} V⁻¹ (1+r⁻²)^{k−1} k^{−δ/2})`.
    pub c_u: f64,
    /// `−slope` of `log norm` against `log k` on `k ∈ [2, kmax/4]` (or `[2, kmax]` when short).
    pub decay_exponent: f64,
}

pub fn ultracontractivity_profile(dk: &DirichletKernel, kmax: usize, delta: f64) -> Result<UltraProfile> {
    if kmax < 2 {
        return Err(Error::InvalidParameter("kmax must be at least 2".into()));
    }
    let n = dk.len();
    let per_row: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = dk.row(i);
            let mut maxima = Vec::with_capacity(kmax);
            maxima.push(row.iter().fold(0.0f64, |a, v| a.max(*v)));
            for _ in 1..kmax {
                row = dk.apply(&row);
                maxima.push(row.iter().fold(0.0f64, |a, v| a.max(*v)));
            }
            maxima
        })
        .collect();
    crate::kernel::check_budget()?;
    let norms: Vec<f64> = (0..kmax)
        .map(|k| per_row.iter().map(|r| r[k]).fold(0.0, f64::max))
        .collect();
    let r = dk.radius;
    let vol = numeric::compensated_sum(dk.m().iter().copied());
    let c_u = norms
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let k = (i + 1) as f64;
            let shape = (1.0 + r * r).powf(delta / 2.0) / vol * (1.0 + 1.0 / (r * r)).powf(k - 1.0) / k.powf(delta / 2.0);
            v / shape
        })
        .fold(0.0, f64::max);
    let hi = if kmax >= 16 { kmax / 4 } else { kmax };
    let ks: Vec<f64> = (2..=hi).map(|k| k as f64).collect();
    let vs: Vec<f64> = (2..=hi).map(|k| norms[k - 1]).collect();
    let decay_exponent = numeric::loglog_slope(&ks, &vs).map(|s| -s).unwrap_or(f64::NAN);
    Ok(UltraProfile {
        norms,
        c_u,
        decay_exponent,
    })
}

/// `‖P_B‖_{2→2}` and the scaled gap `â = r²(1 − ‖P_B‖)`.
#[derive(Clone, Debug)]
pub struct SpectralGap {
    pub norm: f64,
    pub min: f64,
    pub max: f64,
    pub gap: f64,
    pub a_hat: f64,
    /// Top eigenvector (local indices), normalised in `L²(m)`.
    pub top: Vec<f64>,
}

pub fn spectral_gap(k: &Kernel, dk: &DirichletKernel) -> Result<SpectralGap> {
    if dk.is_empty() {
        return Err(Error::EmptyBall {
            center: dk.center,
            radius: dk.radius,
        });
    }
    let proper = dk
        .members
        .iter()
        .any(|&g| k.row_entries(g).iter().any(|(y, v)| *v > 0.0 && dk.local(*y).is_none()));
    if !proper {
        return Err(Error::BallNotProper {
            center: dk.center,
            radius: dk.radius,
        });
    }
    let e = dk.extremes()?;
    let norm = e.spectral_radius();
    let gap = 1.0 - norm;
    Ok(SpectralGap {
        norm,
        min: e.min,
        max: e.max,
        gap,
        a_hat: dk.radius * dk.radius * gap,
        top: e.top,
    })
}
