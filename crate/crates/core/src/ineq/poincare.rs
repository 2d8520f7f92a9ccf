use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric;
use crate::space::Space;

/// Observed Poincaré constant at scale `h` on a ball.
#[derive(Clone, Debug)]
pub struct PoincareResult {
    pub center: usize,
    pub radius: f64,
    pub h: f64,
    pub kappa: f64,
    /// `Ĉ_P`, possibly `∞`.
    pub value: f64,
    /// Points of `κB`, ascending.
    pub members: Vec<usize>,
    /// Extremal function on `members`.
    pub witness: Vec<f64>,
    /// Two or more `h`-components of `κB` meet `B`.
    pub degenerate: bool,
    pub components_meeting_ball: usize,
}

const DENSE_LIMIT: usize = 2000;

/// `Ĉ_P = sup_f Σ_B |f − f_B|² μ / (r² Σ_{κB} |∇f|_h² μ)` over functions on `κB`.
///
/// The gradient energy counts pairs inside `κB` only; volumes `V(y,h)` are
/// those of the whole space.
pub fn poincare_constant(space: &Space, h: f64, center: usize, r: f64, kappa: f64) -> Result<PoincareResult> {
    if kappa < 1.0 {
        return Err(Error::InvalidParameter("kappa must be at least 1".into()));
    }
    if !(h > 0.0 && r > 0.0) {
        return Err(Error::InvalidParameter("h and r must be positive".into()));
    }
    if center >= space.len() {
        return Err(Error::PointOutOfRange(center));
    }
    if kappa * r > space.margin(center) + 1e-12 {
        return Err(Error::OutsideWindow {
            center,
            radius: kappa * r,
        });
    }
    let members = space.ball(center, kappa * r);
    let n = members.len();
    let mut local = std::collections::HashMap::with_capacity(n);
    for (i, &g) in members.iter().enumerate() {
        local.insert(g, i);
    }
    let in_b: Vec<bool> = members
        .iter()
        .map(|&g| space.dist(center, g) <= r + 1e-9 * r.max(1.0))
        .collect();
    let mu: Vec<f64> = members.iter().map(|&g| space.mass(g)).collect();
    let vol: Vec<f64> = members.iter().map(|&g| space.ball_volume(g, h)).collect();

    let mut pairs = Vec::new();
    for (i, &g) in members.iter().enumerate() {
        for q in space.ball(g, h) {
            if let Some(&j) = local.get(&q) {
                if j > i {
                    pairs.push((i, j, mu[i] * mu[j] * (1.0 / vol[i] + 1.0 / vol[j])));
                }
            }
        }
    }

    let comp = components(n, &pairs);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut meets = vec![false; ncomp];
    for i in 0..n {
        if in_b[i] {
            meets[comp[i]] = true;
        }
    }
    let meeting: Vec<usize> = (0..ncomp).filter(|&c| meets[c]).collect();
    let base = PoincareResult {
        center,
        radius: r,
        h,
        kappa,
        value: 0.0,
        members: members.clone(),
        witness: vec![0.0; n],
        degenerate: false,
        components_meeting_ball: meeting.len(),
    };
    if meeting.len() >= 2 {
        let witness = comp
            .iter()
            .map(|c| match meeting.iter().position(|m| m == c) {
                Some(p) if p % 2 == 0 => 1.0,
                Some(_) => -1.0,
                None => 0.0,
            })
            .collect();
        return Ok(PoincareResult {
            value: f64::INFINITY,
            witness,
            degenerate: true,
            ..base
        });
    }
    let nb = in_b.iter().filter(|b| **b).count();
    if nb < 2 {
        return Ok(base);
    }
    if n > DENSE_LIMIT {
        return iterative(base, &pairs, &comp, ncomp, &in_b, &mu, r);
    }

    let mut a = DMatrix::zeros(n, n);
    let mb: f64 = numeric::compensated_sum((0..n).filter(|&i| in_b[i]).map(|i| mu[i]));
    for i in 0..n {
        if !in_b[i] {
            continue;
        }
        a[(i, i)] += mu[i];
        for j in 0..n {
            if in_b[j] {
                a[(i, j)] -= mu[i] * mu[j] / mb;
            }
        }
    }
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in &pairs {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    for c in 0..ncomp {
        let idx: Vec<usize> = (0..n).filter(|&i| comp[i] == c).collect();
        let total: f64 = idx.iter().map(|&i| mu[i]).sum();
        for &i in &idx {
            for &j in &idx {
                l[(i, j)] += mu[i] * mu[j] / total;
            }
        }
    }
    let (lambda, v) = linalg::generalized_top(&a, &l)?;
    Ok(PoincareResult {
        value: lambda.max(0.0) / (r * r),
        witness: v.iter().copied().collect(),
        ..base
    })
}

fn components(n: usize, pairs: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Shifted power iteration on `M⁻¹A` with conjugate-gradient solves.
fn iterative(
    base: PoincareResult,
    pairs: &[(usize, usize, f64)],
    comp: &[usize],
    ncomp: usize,
    in_b: &[bool],
    mu: &[f64],
    r: f64,
) -> Result<PoincareResult> {
    let n = mu.len();
    let mut comp_mass = vec![0.0; ncomp];
    for i in 0..n {
        comp_mass[comp[i]] += mu[i];
    }
    let mb: f64 = (0..n).filter(|&i| in_b[i]).map(|i| mu[i]).sum();
    let ones = vec![1.0; n];
    // Operators act on coefficient vectors; CG runs in the plain inner product.
    let apply_m = |f: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, j, w) in pairs {
            let d = w * (f[i] - f[j]);
            out[i] += d;
            out[j] -= d;
        }
        let mut dots = vec![0.0; ncomp];
        for i in 0..n {
            dots[comp[i]] += mu[i] * f[i];
        }
        for i in 0..n {
            out[i] += mu[i] * dots[comp[i]] / comp_mass[comp[i]];
        }
        out
    };
    let apply_a = |f: &[f64]| -> Vec<f64> {
        let mean: f64 = (0..n).filter(|&i| in_b[i]).map(|i| mu[i] * f[i]).sum::<f64>() / mb;
        (0..n)
            .map(|i| if in_b[i] { mu[i] * (f[i] - mean) } else { 0.0 })
            .collect()
    };
    let mut v: Vec<f64> = (0..n)
        .map(|i| if in_b[i] { ((i * 7919) % 101) as f64 / 101.0 - 0.5 } else { 0.0 })
        .collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let av = apply_a(&v);
        let (w, _) = linalg::conjugate_gradient(apply_m, &av, &ones, 1e-12, 20_000)?;
        let num = linalg::dot_m(&w, &apply_a(&w), &ones);
        let den = linalg::dot_m(&w, &apply_m(&w), &ones);
        let next = num / den;
        let norm = linalg::norm_m(&w, &ones);
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-9 * next.abs() {
            return Ok(PoincareResult {
                value: next.max(0.0) / (r * r),
                witness: v,
                ..base
            });
        }
        lambda = next;
    }
    Err(Error::NoConvergence("Poincaré power iteration", 10_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceSpec;

    #[test]
    fn single_point_ball_is_zero() {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 11 }).unwrap();
        let p = poincare_constant(&s, 1.0, 5, 0.5, 1.0).unwrap();
        assert_eq!(p.value, 0.0);
        assert!(!p.degenerate);
    }

    #[test]
    fn path_matches_scalar_oracle() {
        // B = {4,5,6} on a path, h = 1, κ = 1: the top ratio is an explicit 3×3 problem
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 11 }).unwrap();
        let p = poincare_constant(&s, 1.0, 5, 1.0, 1.0).unwrap();
        // f = (1,0,-1): variance 2, energy 2·(1/3+1/3)·1 = 4/3 → ratio 3/2
        assert!((p.value - 1.5).abs() < 1e-10, "{}", p.value);
    }

    #[test]
    fn dense_and_iterative_agree() {
        let s = Space::build(SpaceSpec::Lattice { dim: 2, side: 15 }).unwrap();
        let c = s.center();
        let dense = poincare_constant(&s, 1.0, c, 4.0, 1.5).unwrap();
        let members = dense.members.len();
        let pairs: Vec<(usize, usize, f64)> = {
            let mut out = Vec::new();
            let mut local = std::collections::HashMap::new();
            for (i, &g) in dense.members.iter().enumerate() {
                local.insert(g, i);
            }
            for (i, &g) in dense.members.iter().enumerate() {
                for q in s.ball(g, 1.0) {
                    if let Some(&j) = local.get(&q) {
                        if j > i {
                            let w = 1.0 / s.ball_volume(g, 1.0) + 1.0 / s.ball_volume(q, 1.0);
                            out.push((i, j, w));
                        }
                    }
                }
            }
            out
        };
        let comp = vec![0; members];
        let in_b: Vec<bool> = dense.members.iter().map(|&g| s.dist(c, g) <= 4.0).collect();
        let it = iterative(dense.clone(), &pairs, &comp, 1, &in_b, &vec![1.0; members], 4.0).unwrap();
        assert!((it.value / dense.value - 1.0).abs() < 1e-6);
    }
}
