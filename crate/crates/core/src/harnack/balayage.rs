use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::space::Space;

/// Charges swept onto the annulus `B(x,r₁+h′)∖B(x,r₁)`.
#[derive(Clone, Debug)]
pub struct Balayage {
    pub a: usize,
    pub b: usize,
    /// `v[l − a]` for `l ∈ ⟦a, b⟧` (global vectors; `v[0] = 0`).
    pub v: Vec<Vec<f64>>,
    pub annulus: Vec<usize>,
    /// `max |u(k,y) − reconstruction(k,y)|` over `⟦a,b+1⟧ × B(x,r₁)`.
    pub residual: f64,
    pub u_sup: f64,
    pub v_min: f64,
}

impl Balayage {
    pub fn relative_residual(&self) -> f64 {
        if self.u_sup == 0.0 {
            self.residual
        } else {
            self.residual / self.u_sup
        }
    }
}

/// Decompose `u` (frames `u_a … u_{b+1}`) on `B(x,r₁)` as the killed evolution
/// on `B = B(x,r)` of `u_a` plus killed evolutions of charges `v_l ≥ 0` on the
/// annulus.
///
/// Recursion: `S_a = u_a 1_B`, `v_l = (u_l − S_l) 1_annulus`, `S_{l+1} = P_B(S_l + v_l)`.
/// The reconstruction is then recomputed by superposition, one charge at a time.
#[allow(clippy::too_many_arguments)]
pub fn balayage(k: &Kernel, space: &Space, x: usize, r: f64, r1: f64, a: usize, frames: &[Vec<f64>]) -> Result<Balayage> {
    let hp = k.h_prime;
    if !(r1 > 0.0 && r1 + hp < r) {
        return Err(Error::Precondition(format!("need 0 < r1 < r1 + h′ < r, got r1 = {r1}, r = {r}")));
    }
    if frames.len() < 2 {
        return Err(Error::InvalidParameter("need frames u_a … u_{b+1}".into()));
    }
    let b = a + frames.len() - 2;
    let dk = k.restrict(space, x, r)?;
    let n = dk.len();
    let inner = space.ball(x, r1);
    let annulus: Vec<usize> = space
        .ball(x, r1 + hp)
        .into_iter()
        .filter(|&y| space.dist(x, y) > r1 + 1e-9 * r1.max(1.0))
        .collect();
    let u_sup = frames.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let big = dk.members.clone();
    for (j, w) in frames.windows(2).enumerate() {
        let pu = k.apply(&w[0]);
        if w[0].iter().any(|v| *v < 0.0) {
            return Err(Error::Precondition(format!("u is negative at time {}", a + j)));
        }
        if big.iter().any(|&y| (pu[y] - w[1][y]).abs() > 1e-12 * u_sup.max(f64::MIN_POSITIVE)) {
            return Err(Error::Precondition(format!("u is not caloric on B at time {}", a + j)));
        }
    }
    let loc = |f: &[f64]| -> Vec<f64> { dk.members.iter().map(|&g| f[g]).collect() };
    let ann_local: Vec<usize> = annulus.iter().map(|&g| dk.local(g).unwrap()).collect();

    let mut s = loc(&frames[0]);
    let mut v = vec![vec![0.0; k.len()]];
    let mut v_local = vec![vec![0.0; n]];
    for l in a + 1..=b {
        s = dk.apply(&(s.iter().zip(&v_local[l - 1 - a]).map(|(p, q)| p + q).collect::<Vec<_>>()));
        let ul = &frames[l - a];
        let mut vl = vec![0.0; n];
        let mut vg = vec![0.0; k.len()];
        for (&i, &g) in ann_local.iter().zip(&annulus) {
            vl[i] = ul[g] - s[i];
            vg[g] = vl[i];
        }
        v_local.push(vl);
        v.push(vg);
    }

    // Superposition: R_k = P_B^{k−a} u_a + Σ_{a<l<k} P_B^{k−l} v_l.
    let mut evolved: Vec<Vec<f64>> = vec![loc(&frames[0])];
    let mut residual = 0.0f64;
    let inner_local: Vec<usize> = inner.iter().map(|&g| dk.local(g).unwrap()).collect();
    for kk in a..=b + 1 {
        if kk > a {
            for e in evolved.iter_mut() {
                *e = dk.apply(e);
            }
            if kk - 1 > a {
                evolved.push(dk.apply(&v_local[kk - 1 - a]));
            }
        }
        for (&i, &g) in inner_local.iter().zip(&inner) {
            let rec: f64 = evolved.iter().map(|e| e[i]).sum();
            residual = residual.max((rec - frames[kk - a][g]).abs());
        }
    }
    let v_min = v_local.iter().flatten().fold(0.0f64, |s, q| s.min(*q));
    Ok(Balayage {
        a,
        b,
        v,
        annulus,
        residual,
        u_sup,
        v_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harnack::evolve_caloric;
    use crate::kernel::ball_walk;
    use crate::space::SpaceSpec;

    #[test]
    fn nothing_to_sweep() {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 81 }).unwrap();
        let k = ball_walk(&s, 1.0).unwrap();
        let mut u0 = vec![0.0; 81];
        u0[40] = 1.0;
        let frames = evolve_caloric(&k, &u0, 5).unwrap();
        let bal = balayage(&k, &s, 40, 30.0, 10.0, 0, &frames).unwrap();
        assert!(bal.v.iter().flatten().all(|v| *v == 0.0));
        assert!(bal.residual <= 1e-15);
    }

    #[test]
    fn point_mass_reconstructs() {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 101 }).unwrap();
        let k = ball_walk(&s, 1.0).unwrap();
        let mut u0 = vec![0.0; 101];
        u0[50] = 1.0;
        let frames = evolve_caloric(&k, &u0, 81).unwrap();
        let bal = balayage(&k, &s, 50, 30.0, 10.0, 0, &frames).unwrap();
        assert!(bal.relative_residual() <= 1e-10, "{}", bal.residual);
        assert!(bal.v_min >= -1e-14);
        assert!(bal.v.iter().flatten().any(|v| *v > 0.0));
    }
}
