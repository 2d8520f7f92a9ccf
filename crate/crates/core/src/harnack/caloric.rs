use rand::Rng as _;
use rayon::prelude::*;

use super::harmonic::{sup_inf, HarnackKind, HarnackReport};
use crate::error::{Error, Result};
use crate::kernel::{check_budget, Kernel};
use crate::numeric;
use crate::space::Space;

/// Frames `u_0, …, u_steps` of `u_{k+1} = P u_k`.
pub fn evolve_caloric(k: &Kernel, u0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
    if u0.len() != k.len() {
        return Err(Error::InvalidParameter("initial data has the wrong length".into()));
    }
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(u0.to_vec());
    for _ in 0..steps {
        let next = k.apply(frames.last().unwrap());
        check_budget()?;
        frames.push(next);
    }
    Ok(frames)
}

/// Time windows `(⌈η²r²/2⌉, ⌊η²r²⌋)` and `(⌈2η²r²⌉, ⌊4η²r²⌋)`.
pub fn phi_windows(r: f64, eta: f64) -> ((usize, usize), (usize, usize)) {
    let t = eta * eta * r * r;
    (
        ((t / 2.0).ceil() as usize, t.floor() as usize),
        ((2.0 * t).ceil() as usize, (4.0 * t).floor() as usize),
    )
}

/// Trial 0 is `u₀ ≡ 1`, trial 1 a point mass at `x`, later trials one to
/// three seeded spikes on `B(x, r+h′)`.
pub fn caloric_data(space: &Space, x: usize, r: f64, h_prime: f64, trial: usize, seed: u64) -> Vec<f64> {
    let mut u = vec![0.0; space.len()];
    match trial {
        0 => u.iter_mut().for_each(|v| *v = 1.0),
        1 => u[x] = 1.0,
        _ => {
            let ball = space.ball(x, r + h_prime);
            let mut rng = numeric::rng(seed ^ 0xca10, trial as u64);
            for _ in 0..rng.random_range(1..=3) {
                let y = ball[rng.random_range(0..ball.len())];
                u[y] += 0.1 + rng.random::<f64>();
            }
        }
    }
    u
}

/// `Ĉ_H = max sup_{Q⊖} u / inf_{Q⊕} u`, both cylinders over `B(x, ηr/2)`.
///
/// `inf_{Q⊕} u = 0` is reported through `degenerate` and an infinite ratio.
pub fn parabolic_harnack(
    k: &Kernel,
    space: &Space,
    x: usize,
    r: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<HarnackReport> {
    let ((a1, b1), (a2, b2)) = phi_windows(r, eta);
    if b2 < 4 || a1 > b1 || a2 > b2 {
        return Err(Error::Precondition(format!("cylinders are empty for r = {r}, η = {eta}")));
    }
    if r + k.h_prime > k.margin(x) + 1e-12 {
        return Err(Error::OutsideWindow {
            center: x,
            radius: r + k.h_prime,
        });
    }
    let inner = space.ball(x, eta * r / 2.0);
    let truncated = r + k.h_prime + b2 as f64 * k.support_radius() > k.margin(x);
    let rows = (0..trials.max(2))
        .into_par_iter()
        .map(|t| {
            let mut u = caloric_data(space, x, r, k.h_prime, t, seed);
            let mut sup = f64::NEG_INFINITY;
            let mut inf = f64::INFINITY;
            for step in 1..=b2 {
                u = k.apply(&u);
                check_budget()?;
                if (a1..=b1).contains(&step) {
                    sup = sup.max(sup_inf(&u, &inner).0);
                }
                if step >= a2 {
                    inf = inf.min(sup_inf(&u, &inner).1);
                }
            }
            let ratio = if inf > 0.0 { sup / inf } else { f64::INFINITY };
            Ok((t, sup, inf, ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HarnackReport::from_trials(HarnackKind::Parabolic, x, r, eta, rows, truncated))
}
