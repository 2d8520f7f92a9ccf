use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric::{self, binomial};

/// Relative residuals of the two polynomial identities at one `(n, β, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyResiduals {
    pub first: f64,
    pub second: f64,
    /// `min_k s_{n,k} − C(n−1,k)` over odd `k < n` (≥ 0 when the bound holds).
    pub s_margin: f64,
}

const MAX_N: usize = 25;

/// `s_{n,k} = (1+β)^{−(n−1−k)} Σ_{i=k+1}^{n} C(n,i) C(i−1,k) β^{i−1−k}`.
pub fn s_nk(n: usize, k: usize, beta: f64) -> f64 {
    let terms = (k + 1..=n).map(|i| {
        binomial(n as u64, i as u64) as f64 * binomial(i as u64 - 1, k as u64) as f64 * beta.powi((i - 1 - k) as i32)
    });
    numeric::compensated_sum(terms) / (1.0 + beta).powi((n - 1 - k) as i32)
}

fn relative(lhs: f64, terms: &[f64]) -> f64 {
    let rhs = numeric::compensated_sum(terms.iter().copied());
    let scale = lhs.abs().max(terms.iter().map(|t| t.abs()).sum::<f64>());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Residuals measured against `max(|LHS|, Σ|terms|)`, the size of the
/// cancelling sum.
pub fn poly_residuals(n: usize, beta: f64, z: f64) -> Result<PolyResiduals> {
    if n > MAX_N {
        return Err(Error::Overflow(n));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let zb = z - beta;
    let q = z * z - 2.0 * beta * z;
    let mut t1 = Vec::new();
    for k in (1..=n).step_by(2) {
        t1.push(binomial(n as u64, k as u64) as f64 * beta.powi((n - k) as i32) * zb.powi(k as i32 - 1) * z);
    }
    for k in (1..n).step_by(2) {
        t1.push(binomial(n as u64 - 1, k as u64) as f64 * beta.powi((n - 1 - k) as i32) * zb.powi(k as i32 - 1) * q);
    }
    let first = relative(z.powi(n as i32), &t1);

    let a = (1.0 + beta) / 2.0;
    let mut t2 = vec![0.5f64.powi(n as i32)];
    for k in (1..=n).step_by(2) {
        t2.push(binomial(n as u64, k as u64) as f64 * a.powi((n - k) as i32) * 0.5f64.powi(k as i32) * zb.powi(k as i32 - 1) * z);
    }
    let mut s_margin = f64::INFINITY;
    for k in (1..n).step_by(2) {
        let s = s_nk(n, k, beta);
        s_margin = s_margin.min(s - binomial(n as u64 - 1, k as u64) as f64);
        t2.push(s * a.powi((n - 1 - k) as i32) * 0.5f64.powi(k as i32 + 1) * zb.powi(k as i32 - 1) * q);
    }
    let second = relative(((1.0 + z) / 2.0).powi(n as i32), &t2);
    Ok(PolyResiduals {
        first,
        second,
        s_margin,
    })
}

/// Worst residuals over `n ∈ 1..=n_max` and `trials` seeded `(β, z)` draws with
/// `β ∈ (0, 3]`, `z ∈ [−3, 3]`.
pub fn poly_sweep(n_max: usize, trials: usize, seed: u64) -> Result<PolyResiduals> {
    let mut rng = numeric::rng(seed, 0x706f6c);
    let mut worst = PolyResiduals {
        first: 0.0,
        second: 0.0,
        s_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let beta = 3.0 * (1.0 - rng.random::<f64>());
        let z = 6.0 * rng.random::<f64>() - 3.0;
        for n in 1..=n_max {
            let r = poly_residuals(n, beta, z)?;
            worst.first = worst.first.max(r.first);
            worst.second = worst.second.max(r.second);
            worst.s_margin = worst.s_margin.min(r.s_margin);
        }
    }
    Ok(worst)
}
