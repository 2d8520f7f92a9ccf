use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::numeric;

/// Nonnegative space-time data that is subcaloric by construction.
///
/// Frames are `u_k = |v_k|` where `v` evolves by `P_L` (or by `P` for the
/// deliberate non-lazy counterexample); `|P_L v| ≤ P_L |v|` makes `u` subcaloric.
#[derive(Clone, Debug)]
pub struct Subcaloric {
    frames: Vec<Vec<f64>>,
    lazy: bool,
}

impl Subcaloric {
    pub fn lazy_abs(k: &Kernel, v0: &[f64], steps: usize) -> Result<Subcaloric> {
        Self::generate(k, v0, steps, true)
    }

    /// Same construction with the non-lazy operator; not covered by the lemma.
    pub fn non_lazy_abs(k: &Kernel, v0: &[f64], steps: usize) -> Result<Subcaloric> {
        Self::generate(k, v0, steps, false)
    }

    fn generate(k: &Kernel, v0: &[f64], steps: usize, lazy: bool) -> Result<Subcaloric> {
        if v0.len() != k.len() {
            return Err(Error::InvalidParameter("initial data has the wrong length".into()));
        }
        let mut v = v0.to_vec();
        let mut frames = vec![v.iter().map(|x| x.abs()).collect::<Vec<_>>()];
        for _ in 0..steps {
            v = if lazy { k.apply_lazy(&v) } else { k.apply(&v) };
            frames.push(v.iter().map(|x| x.abs()).collect());
        }
        Ok(Subcaloric { frames, lazy })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }
}

/// Per-step residual `RHS − LHS` of the Caccioppoli inequality.
#[derive(Clone, Debug)]
pub struct CaccioppoliReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub lazy: bool,
}

impl CaccioppoliReport {
    pub fn pass(&self) -> bool {
        self.residuals.iter().all(|r| *r >= -1e-10)
    }

    pub fn violations(&self) -> usize {
        self.residuals.iter().filter(|r| **r < -1e-10).count()
    }
}

/// `Σ ∂_k(u²)ψ² m + ℰ(u_kψ)/8 ≤ (17/8) ΣΣ (ψ(y)−ψ(z))² u_k(y)² p(y,z) m m`,
/// with `ℰ` and `p` those of the non-lazy kernel.
pub fn caccioppoli_check(k: &Kernel, u: &Subcaloric, psi: &[f64]) -> Result<CaccioppoliReport> {
    if psi.len() != k.len() {
        return Err(Error::InvalidParameter("cutoff has the wrong length".into()));
    }
    if psi.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("cutoff must be nonnegative".into()));
    }
    let m = k.m();
    let n = k.len();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for w in u.frames.windows(2) {
        let (uk, uk1) = (&w[0], &w[1]);
        let dt = numeric::compensated_sum((0..n).map(|x| (uk1[x] * uk1[x] - uk[x] * uk[x]) * psi[x] * psi[x] * m[x]));
        let upsi: Vec<f64> = (0..n).map(|x| uk[x] * psi[x]).collect();
        let e = k.forms(&upsi).energy;
        lhs.push(dt + e / 8.0);
        let mut terms = Vec::new();
        for y in 0..n {
            if uk[y] == 0.0 {
                continue;
            }
            for (z, p) in k.row_entries(y) {
                let d = psi[y] - psi[z];
                if d != 0.0 {
                    terms.push(d * d * uk[y] * uk[y] * p * m[y] * m[z]);
                }
            }
        }
        rhs.push(17.0 / 8.0 * numeric::compensated_sum(terms));
    }
    let residuals = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
    Ok(CaccioppoliReport {
        lhs,
        rhs,
        residuals,
        lazy: u.lazy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::srw;
    use crate::space::{GraphData, Space};

    #[test]
    fn k2_needs_laziness() {
        let s = Space::from_graph(GraphData::path(2)).unwrap();
        let k = srw(&s).unwrap();
        let psi = [1.0, 1.0];
        let bad = Subcaloric::non_lazy_abs(&k, &[2.0, 0.5], 3).unwrap();
        let r = caccioppoli_check(&k, &bad, &psi).unwrap();
        assert!((r.lhs[0] - 1.5f64.powi(2) / 8.0).abs() < 1e-15);
        assert_eq!(r.rhs[0], 0.0);
        assert!(!r.pass());
        let good = Subcaloric::lazy_abs(&k, &[2.0, 0.5], 3).unwrap();
        assert!(caccioppoli_check(&k, &good, &psi).unwrap().pass());
    }

    #[test]
    fn zero_data() {
        let s = Space::from_graph(GraphData::path(5)).unwrap();
        let k = srw(&s).unwrap();
        let u = Subcaloric::lazy_abs(&k, &[0.0; 5], 4).unwrap();
        let r = caccioppoli_check(&k, &u, &[0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        assert!(r.lhs.iter().chain(&r.rhs).all(|v| *v == 0.0));
    }
}
