use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::numeric;
use crate::space::Space;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImpVerdict {
    Pass,
    /// The weight condition fails somewhere, so monotonicity is not a theorem-check.
    ConditionViolated,
    /// Condition holds but `J_k` increased: a genuine falsification.
    Fail,
}

#[derive(Clone, Debug)]
pub struct ImpReport {
    pub d: f64,
    /// `J_k = Σ u_k² f_k m` for `k ∈ ⟦0, n⟧`.
    pub j: Vec<f64>,
    pub non_increasing: bool,
    /// Largest value of `(∂_k f + |∇_P f_{k+1}|²/(4f_{k+1}))/f_{k+1}` over all points and steps.
    pub worst_condition: f64,
    pub verdict: ImpVerdict,
}

/// `σ_R(z) = max(R − d(x,z), 0) + h′`.
pub fn sigma_r(space: &Space, x: usize, r: f64, h_prime: f64) -> Vec<f64> {
    (0..space.len())
        .map(|z| (r - space.dist(x, z)).max(0.0) + h_prime)
        .collect()
}

/// Track `J_k` for `P_L`-caloric `u` with weight `f_k = exp(−σ²/(D(n+1−k)))`.
#[allow(clippy::too_many_arguments)]
pub fn imp_check(
    k: &Kernel,
    space: &Space,
    u0: &[f64],
    w: usize,
    radius: f64,
    sigma: &[f64],
    d: f64,
    n: usize,
) -> Result<ImpReport> {
    let len = k.len();
    if u0.len() != len || sigma.len() != len {
        return Err(Error::InvalidParameter("vectors have the wrong length".into()));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidParameter("D must be positive".into()));
    }
    if u0.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("initial data must be nonnegative".into()));
    }
    for (x, v) in u0.iter().enumerate() {
        if *v != 0.0 && space.dist(w, x) > radius + 1e-12 {
            return Err(Error::Support(format!("u0 is non-zero at {x}, outside B({w}, {radius})")));
        }
    }
    let hp = k.h_prime;
    if sigma.iter().any(|s| *s < hp - 1e-12) {
        return Err(Error::Precondition(format!("inf sigma is below h′ = {hp}")));
    }
    for x in 0..len {
        for y in space.ball(x, hp) {
            if (sigma[x] - sigma[y]).abs() > space.dist(x, y) + 1e-12 {
                return Err(Error::NotLipschitz(x, y));
            }
        }
    }
    let m = k.m();
    let log_f = |kk: usize, x: usize| -> f64 { -sigma[x] * sigma[x] / (d * (n + 1 - kk) as f64) };
    let mut worst = f64::NEG_INFINITY;
    for kk in 0..n {
        for x in 0..len {
            let l1 = log_f(kk + 1, x);
            let drift = 1.0 - (log_f(kk, x) - l1).exp();
            let grad: f64 = k
                .row_entries(x)
                .iter()
                .map(|(y, p)| ((log_f(kk + 1, *y) - l1).exp() - 1.0).powi(2) * p * m[*y])
                .sum();
            worst = worst.max(drift + grad / 4.0);
        }
    }
    let mut u = u0.to_vec();
    let mut j = Vec::with_capacity(n + 1);
    for kk in 0..=n {
        j.push(numeric::compensated_sum((0..len).map(|x| u[x] * u[x] * log_f(kk, x).exp() * m[x])));
        if kk < n {
            u = k.apply_lazy(&u);
        }
    }
    let tol = 1e-12 * j[0];
    let non_increasing = j.windows(2).all(|p| p[1] <= p[0] + tol);
    let condition_ok = worst <= 1e-12;
    let verdict = match (condition_ok, non_increasing) {
        (false, _) => ImpVerdict::ConditionViolated,
        (true, true) => ImpVerdict::Pass,
        (true, false) => ImpVerdict::Fail,
    };
    Ok(ImpReport {
        d,
        j,
        non_increasing,
        worst_condition: worst,
        verdict,
    })
}

/// Smallest passing `D` (to relative precision `1e−3`) by doubling then bisection.
#[allow(clippy::too_many_arguments)]
pub fn find_min_d(
    k: &Kernel,
    space: &Space,
    u0: &[f64],
    w: usize,
    radius: f64,
    sigma: &[f64],
    n: usize,
    d0: f64,
) -> Result<ImpReport> {
    let run = |d: f64| imp_check(k, space, u0, w, radius, sigma, d, n);
    let mut lo = d0;
    let mut hi_report = run(lo)?;
    if hi_report.verdict == ImpVerdict::Pass {
        // shrink until failing
        let mut hi = lo;
        for _ in 0..60 {
            lo = hi / 2.0;
            let r = run(lo)?;
            if r.verdict != ImpVerdict::Pass {
                break;
            }
            hi = lo;
            hi_report = r;
        }
        return bisect(&run, lo, hi, hi_report);
    }
    let mut hi = lo;
    for _ in 0..60 {
        hi *= 2.0;
        let r = run(hi)?;
        if r.verdict == ImpVerdict::Pass {
            return bisect(&run, hi / 2.0, hi, r);
        }
        if r.verdict == ImpVerdict::Fail {
            return Ok(r);
        }
    }
    Err(Error::NoConvergence("D search", 60))
}

fn bisect<F: Fn(f64) -> Result<ImpReport>>(run: &F, mut lo: f64, mut hi: f64, mut best: ImpReport) -> Result<ImpReport> {
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.verdict == ImpVerdict::Pass {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ball_walk;
    use crate::space::SpaceSpec;

    fn setup() -> (Space, Kernel) {
        let s = Space::build(SpaceSpec::Lattice { dim: 1, side: 61 }).unwrap();
        let k = ball_walk(&s, 1.0).unwrap();
        (s, k)
    }

    #[test]
    fn constant_sigma_passes() {
        let (s, k) = setup();
        let mut u0 = vec![0.0; s.len()];
        u0[30] = 1.0;
        let sigma = vec![1.0; s.len()];
        let r = imp_check(&k, &s, &u0, 30, 0.0, &sigma, 1.0, 10).unwrap();
        assert_eq!(r.verdict, ImpVerdict::Pass);
    }

    #[test]
    fn tiny_d_violates_condition() {
        let (s, k) = setup();
        let mut u0 = vec![0.0; s.len()];
        u0[30] = 1.0;
        let sigma = sigma_r(&s, 30, 10.0, 1.0);
        let r = imp_check(&k, &s, &u0, 30, 0.0, &sigma, 1e-3, 10).unwrap();
        assert_eq!(r.verdict, ImpVerdict::ConditionViolated);
        let big = imp_check(&k, &s, &u0, 30, 0.0, &sigma, 100.0, 10).unwrap();
        assert_eq!(big.verdict, ImpVerdict::Pass);
    }

    #[test]
    fn lipschitz_guard() {
        let (s, k) = setup();
        let u0 = vec![0.0; s.len()];
        let sigma: Vec<f64> = (0..s.len()).map(|i| 1.0 + 2.0 * i as f64).collect();
        assert!(matches!(
            imp_check(&k, &s, &u0, 30, 1.0, &sigma, 1.0, 3),
            Err(Error::NotLipschitz(..))
        ));
    }
}
