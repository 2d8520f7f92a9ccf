use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{check_budget, Kernel};
use crate::linalg;
use crate::numeric;
use crate::space::Space;

/// Solution of the Dirichlet problem on `B(x,r)` with data on the layer
/// `B(x,r+h′)∖B(x,r)`. Vectors are global; `u` equals `g` on the layer and is
/// zero beyond it.
#[derive(Clone, Debug)]
pub struct HarmonicSolution {
    pub center: usize,
    pub radius: f64,
    pub interior: Vec<usize>,
    pub layer: Vec<usize>,
    pub g: Vec<f64>,
    pub u: Vec<f64>,
    /// `max_{B} |u − Pu|`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HarnackKind {
    Elliptic,
    Parabolic,
}

/// Observed Harnack constant over a seeded trial family.
#[derive(Clone, Debug)]
pub struct HarnackReport {
    pub kind: HarnackKind,
    pub center: usize,
    pub radius: f64,
    /// `c` for the elliptic battery, `η` for the parabolic one.
    pub scale: f64,
    /// `(trial, sup, inf, ratio)`, ordered by trial id.
    pub trials: Vec<(usize, f64, f64, f64)>,
    pub ratio: f64,
    pub witness: usize,
    /// Some trial had `inf = 0` (disconnected or parity-degenerate kernel).
    pub degenerate: bool,
    pub truncated: bool,
}

impl HarnackReport {
    pub(crate) fn from_trials(
        kind: HarnackKind,
        center: usize,
        radius: f64,
        scale: f64,
        trials: Vec<(usize, f64, f64, f64)>,
        truncated: bool,
    ) -> Self {
        let mut witness = 0;
        let mut ratio = 0.0f64;
        for (id, _, _, r) in &trials {
            if *r > ratio {
                ratio = *r;
                witness = *id;
            }
        }
        let degenerate = trials.iter().any(|t| t.2 <= 0.0 && t.1 > 0.0);
        HarnackReport {
            kind,
            center,
            radius,
            scale,
            trials,
            ratio,
            witness,
            degenerate,
            truncated,
        }
    }

    /// Observed constant at `2r` over the one at `r`, or its inverse if smaller.
    pub fn stability(&self, doubled: &HarnackReport) -> f64 {
        let q = doubled.ratio / self.ratio;
        if q >= 1.0 {
            q
        } else {
            1.0 / q
        }
    }
}

fn ratio(sup: f64, inf: f64) -> f64 {
    if sup == 0.0 && inf == 0.0 {
        1.0
    } else if inf <= 0.0 {
        f64::INFINITY
    } else {
        sup / inf
    }
}

pub(crate) fn sup_inf<'a, I: IntoIterator<Item = &'a usize>>(u: &[f64], pts: I) -> (f64, f64) {
    pts.into_iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(s, i), &y| (s.max(u[y]), i.min(u[y])))
}

const DENSE_LIMIT: usize = 2000;

/// Solve `u = Pu` on `B(x,r)` with `u = g` on the layer.
pub fn solve_harmonic(k: &Kernel, space: &Space, x: usize, r: f64, g: &[f64]) -> Result<HarmonicSolution> {
    if g.len() != k.len() {
        return Err(Error::InvalidParameter("boundary data has the wrong length".into()));
    }
    let hp = k.h_prime;
    if r + hp > k.margin(x) + 1e-12 {
        return Err(Error::OutsideWindow {
            center: x,
            radius: r + hp,
        });
    }
    let dk = k.restrict(space, x, r)?;
    let n = dk.len();
    let layer: Vec<usize> = space
        .ball(x, r + hp)
        .into_iter()
        .filter(|&y| dk.local(y).is_none())
        .collect();
    let mut gl = vec![0.0; k.len()];
    for &y in &layer {
        if g[y] < 0.0 {
            return Err(Error::InvalidParameter("boundary data must be nonnegative".into()));
        }
        gl[y] = g[y];
    }
    let mut reaches = vec![false; n];
    let m = k.m();
    let mut b = vec![0.0; n];
    for (i, &y) in dk.members.iter().enumerate() {
        for (z, p) in k.row_entries(y) {
            if dk.local(z).is_none() {
                reaches[i] = true;
                b[i] += p * gl[z] * m[z];
            }
        }
    }
    check_connected(&dk, &mut reaches)?;

    let op = |f: &[f64]| -> Vec<f64> {
        let pf = dk.apply(f);
        f.iter().zip(pf).map(|(a, c)| a - c).collect()
    };
    let gmax = gl.iter().fold(0.0f64, |a, v| a.max(*v));
    let gmin = layer.iter().map(|&y| gl[y]).fold(f64::INFINITY, f64::min);
    let mut local = match linalg::conjugate_gradient(op, &b, dk.m(), 1e-12, 20_000) {
        Ok((v, _)) => v,
        Err(Error::NoConvergence(..)) if n <= DENSE_LIMIT => dense_solve(&dk, &b)?,
        Err(e) => return Err(e),
    };
    // A few refinement sweeps bring the sup-norm residual to round-off.
    for _ in 0..4 {
        let res: Vec<f64> = b.iter().zip(op(&local)).map(|(bi, ai)| bi - ai).collect();
        let worst = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if worst <= 1e-13 * gmax.max(f64::MIN_POSITIVE) {
            break;
        }
        let (corr, _) = linalg::conjugate_gradient(op, &res, dk.m(), 1e-12, 20_000)?;
        local.iter_mut().zip(corr).for_each(|(a, c)| *a += c);
        check_budget()?;
    }
    // The exact solution lies in [min g, max g]; clipping only removes round-off.
    for v in local.iter_mut() {
        *v = v.clamp(gmin.min(gmax), gmax);
    }
    let mut u = gl.clone();
    for (i, &y) in dk.members.iter().enumerate() {
        u[y] = local[i];
    }
    let pu = k.apply(&u);
    let residual = dk
        .members
        .iter()
        .map(|&y| (u[y] - pu[y]).abs())
        .fold(0.0f64, f64::max);
    Ok(HarmonicSolution {
        center: x,
        radius: r,
        interior: dk.members.clone(),
        layer,
        g: gl,
        u,
        residual,
    })
}

fn check_connected(dk: &crate::kernel::DirichletKernel, reaches: &mut [bool]) -> Result<()> {
    let mut adj = vec![Vec::new(); reaches.len()];
    for (i, j, v) in dk.entries() {
        if v > 0.0 && i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut stack: Vec<usize> = (0..reaches.len()).filter(|&i| reaches[i]).collect();
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !reaches[j] {
                reaches[j] = true;
                stack.push(j);
            }
        }
    }
    match reaches.iter().position(|r| !r) {
        Some(i) => Err(Error::Precondition(format!(
            "point {} of the ball cannot reach the boundary layer",
            dk.members[i]
        ))),
        None => Ok(()),
    }
}

fn dense_solve(dk: &crate::kernel::DirichletKernel, b: &[f64]) -> Result<Vec<f64>> {
    let n = dk.len();
    let m = dk.m();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, j, v) in dk.entries() {
        a[(i, j)] -= v * m[j];
        if i != j {
            a[(j, i)] -= v * m[i];
        }
    }
    a.lu()
        .solve(&DVector::from_column_slice(b))
        .map(|v| v.iter().copied().collect())
        .ok_or(Error::Precondition("singular Dirichlet system".into()))
}

/// Seeded nonnegative boundary data: trial 0 is `g ≡ 1`, others are sums of
/// one to three positive spikes on the layer.
pub fn spike_data(space: &Space, x: usize, r: f64, h_prime: f64, trial: usize, seed: u64) -> Vec<f64> {
    let layer: Vec<usize> = space
        .ball(x, r + h_prime)
        .into_iter()
        .filter(|&y| space.dist(x, y) > r + 1e-9 * r.max(1.0))
        .collect();
    let mut g = vec![0.0; space.len()];
    if trial == 0 {
        layer.iter().for_each(|&y| g[y] = 1.0);
        return g;
    }
    let mut rng = numeric::rng(seed, trial as u64);
    let spikes = rng.random_range(1..=3);
    for _ in 0..spikes {
        if layer.is_empty() {
            break;
        }
        let y = layer[rng.random_range(0..layer.len())];
        g[y] += 0.1 + rng.random::<f64>();
    }
    g
}

/// `Ĉ_E = max sup_{B(x,cr)} u / inf_{B(x,cr)} u` over seeded spike data.
pub fn elliptic_harnack(
    k: &Kernel,
    space: &Space,
    x: usize,
    r: f64,
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<HarnackReport> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter("c must lie in (0,1)".into()));
    }
    if r < 2.0 * k.h_prime {
        return Err(Error::Precondition(format!("r = {r} is below 2h′")));
    }
    let inner = space.ball(x, c * r);
    let rows = (0..trials.max(1))
        .into_par_iter()
        .map(|t| {
            let g = spike_data(space, x, r, k.h_prime, t, seed);
            let sol = solve_harmonic(k, space, x, r, &g)?;
            let (s, i) = sup_inf(&sol.u, &inner);
            Ok((t, s, i, ratio(s, i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HarnackReport::from_trials(HarnackKind::Elliptic, x, r, c, rows, false))
}

/// Oscillation decay over nested balls.
#[derive(Clone, Debug)]
pub struct OscillationProfile {
    pub radii: Vec<f64>,
    pub oscillations: Vec<f64>,
    /// Geometric decay rate per step of the radius chain.
    pub rho_hat: f64,
    /// `(Ĉ_E − 1)/(Ĉ_E + 1) + 0.1`.
    pub bound: f64,
    pub pass: bool,
}

fn harmonic_defect(k: &Kernel, u: &[f64], pts: &[usize]) -> f64 {
    let pu = k.apply(u);
    pts.iter().map(|&y| (u[y] - pu[y]).abs()).fold(0.0, f64::max)
}

/// `osc_i = sup_{B_i} u − inf_{B_i} u` over radii in decreasing order.
pub fn holder_oscillation(
    k: &Kernel,
    space: &Space,
    u: &[f64],
    x: usize,
    radii: &[f64],
    c_e: f64,
) -> Result<OscillationProfile> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("radii must be strictly decreasing, at least two".into()));
    }
    let outer = space.ball(x, radii[0]);
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if harmonic_defect(k, u, &outer) > 1e-8 * scale {
        return Err(Error::Precondition("u is not harmonic on the largest ball".into()));
    }
    let oscillations: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let (s, i) = sup_inf(u, &space.ball(x, r));
            s - i
        })
        .collect();
    let (idx, logs): (Vec<f64>, Vec<f64>) = oscillations
        .iter()
        .enumerate()
        .filter(|(_, o)| **o > 1e-300)
        .map(|(i, o)| (i as f64, o.ln()))
        .unzip();
    let rho_hat = numeric::linear_fit(&idx, &logs).map_or(0.0, |(s, _)| s.exp());
    let bound = (c_e - 1.0) / (c_e + 1.0) + 0.1;
    Ok(OscillationProfile {
        radii: radii.to_vec(),
        oscillations,
        rho_hat,
        bound,
        pass: rho_hat <= bound,
    })
}

/// `Σ_{B(x,r)} |∇_P u|² m / (r⁻² Σ_{B(x,Ωr)} u² m)`.
pub fn reverse_poincare_check(k: &Kernel, space: &Space, u: &[f64], x: usize, r: f64, omega: f64) -> Result<f64> {
    if !(omega > 1.0) || r <= 3.0 * k.h_prime / (omega - 1.0) {
        return Err(Error::Precondition(format!("need r > 3h′/(Ω−1), got r = {r}, Ω = {omega}")));
    }
    let big = space.ball(x, omega * r);
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if harmonic_defect(k, u, &big) > 1e-8 * scale {
        return Err(Error::Precondition("u is not harmonic on B(x, Ωr)".into()));
    }
    let m = k.m();
    let num = numeric::compensated_sum(space.ball(x, r).into_iter().map(|y| k.grad(u, y).powi(2) * m[y]));
    let den = numeric::compensated_sum(big.iter().map(|&y| u[y] * u[y] * m[y])) / (r * r);
    Ok(if num == 0.0 { 0.0 } else { num / den })
}

/// `Ĉ_R` over harmonic functions on `B(x, Ωr)` from seeded spike data.
pub fn reverse_poincare_battery(
    k: &Kernel,
    space: &Space,
    x: usize,
    r: f64,
    omega: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let ratios = (0..trials.max(1))
        .into_par_iter()
        .map(|t| {
            let g = spike_data(space, x, omega * r, k.h_prime, t, seed);
            let sol = solve_harmonic(k, space, x, omega * r, &g)?;
            reverse_poincare_check(k, space, &sol.u, x, r, omega)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = (0.0, 0);
    for (t, v) in ratios.into_iter().enumerate() {
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::srw;
    use crate::space::GraphData;

    #[test]
    fn gamblers_ruin() {
        let s = Space::from_graph(GraphData::path(11)).unwrap();
        let k = srw(&s).unwrap();
        let mut g = vec![0.0; 11];
        g[10] = 1.0;
        let sol = solve_harmonic(&k, &s, 5, 4.0, &g).unwrap();
        for i in 0..=10 {
            assert!((sol.u[i] - i as f64 / 10.0).abs() < 1e-10, "{i}: {}", sol.u[i]);
        }
        assert!(sol.residual <= 1e-10);
        let osc = holder_oscillation(&k, &s, &sol.u, 5, &[4.0, 2.0, 1.0], 3.0).unwrap();
        assert!((osc.rho_hat - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constants_are_harmonic() {
        let s = Space::from_graph(GraphData::path(41)).unwrap();
        let k = srw(&s).unwrap();
        let sol = solve_harmonic(&k, &s, 20, 12.0, &vec![1.0; 41]).unwrap();
        assert!(sol.interior.iter().all(|&y| sol.u[y] == 1.0));
        assert_eq!(reverse_poincare_check(&k, &s, &sol.u, 20, 4.0, 3.0).unwrap(), 0.0);
    }
}
