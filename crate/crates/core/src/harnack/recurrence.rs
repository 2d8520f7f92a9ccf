use crate::error::Result;
use crate::kernel::{GreenStatus, Kernel};
use crate::numeric;
use crate::space::{radial_integral, Space, SpaceSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recurrence {
    Transient,
    Recurrent,
    Inconclusive,
}

impl Recurrence {
    pub fn name(self) -> &'static str {
        match self {
            Recurrence::Transient => "transient",
            Recurrence::Recurrent => "recurrent",
            Recurrence::Inconclusive => "inconclusive",
        }
    }
}

pub const EXPONENT_MARGIN: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct RecurrenceReport {
    pub verdict: Recurrence,
    pub beta_hat: f64,
    /// `(N, S_N)` at decades.
    pub partial_sums: Vec<(usize, f64)>,
    /// `S_N − S_{N/10}` at the largest `N`.
    pub tail: f64,
    pub analytic: bool,
    pub truncated: bool,
    pub green: Option<GreenStatus>,
}

/// `V_m(x, n)` for the ball walk at scale `h` on `ℝ` with density `(1+t²)^{α/2}`:
/// `∫_{x−n}^{x+n} w(y) ∫_{y−h}^{y+h} w(z) dz dy`.
pub fn radial_ball_walk_volume(alpha: f64, h: f64, x: f64, n: f64) -> f64 {
    let inner = |y: f64| (1.0 + y * y).powf(alpha / 2.0) * radial_integral(alpha, y - h, y + h);
    numeric::integrate(inner, x - n, x + n, h.min(1.0))
}

/// Classify from the growth exponent of `V_m(x,n)` over the top decade of `n ≤ N`.
///
/// Ball walks on the 1-D radial space use the closed-form volume; everything
/// else sums `m` over the window and flags truncation. With `green_steps > 0`
/// the full-space Green sums are attached as corroboration.
pub fn classify_recurrence(k: &Kernel, space: &Space, x: usize, n_max: usize, green_steps: usize) -> Result<RecurrenceReport> {
    let n_max = n_max.max(10);
    let analytic = match space.spec() {
        SpaceSpec::EuclideanRadial { dim: 1, alpha, .. } if k.name() == "ball walk" => Some(*alpha),
        _ => None,
    };
    let cx = space.coords(x).first().copied().unwrap_or(0.0);
    let m = k.m();
    let mut truncated = false;
    let mut vol = |n: f64| -> f64 {
        match analytic {
            Some(alpha) => radial_ball_walk_volume(alpha, k.h, cx, n),
            None => {
                if n > space.margin(x) {
                    truncated = true;
                }
                numeric::compensated_sum(space.ball(x, n).into_iter().map(|y| m[y]))
            }
        }
    };
    let lo = n_max as f64 / 10.0;
    let pts: Vec<f64> = (0..=20).map(|i| lo * 10f64.powf(i as f64 / 20.0)).collect();
    let vols: Vec<f64> = pts.iter().map(|&n| vol(n)).collect();
    let beta_hat = numeric::loglog_slope(&pts, &vols).unwrap_or(0.0);

    // Integer radii: the closed form is accumulated one unit slab at a time.
    let mut slab = 0.0;
    let mut integer_vol = |n: usize| -> f64 {
        match analytic {
            Some(alpha) => {
                let w = |y: f64| (1.0 + y * y).powf(alpha / 2.0) * radial_integral(alpha, y - k.h, y + k.h);
                let nf = n as f64;
                slab += numeric::integrate(w, cx + nf - 1.0, cx + nf, k.h.min(1.0))
                    + numeric::integrate(w, cx - nf, cx - nf + 1.0, k.h.min(1.0));
                slab
            }
            None => vol(n as f64),
        }
    };
    let mut partial_sums = Vec::new();
    let mut s = 0.0;
    let mut next = 10;
    let mut prev = 0.0;
    let mut tail = 0.0;
    for n in 1..=n_max {
        s += n as f64 / integer_vol(n);
        if n == next || n == n_max {
            tail = s - prev;
            prev = s;
            partial_sums.push((n, s));
            next *= 10;
        }
    }
    let verdict = if beta_hat > 2.0 + EXPONENT_MARGIN {
        Recurrence::Transient
    } else if beta_hat < 2.0 - EXPONENT_MARGIN {
        Recurrence::Recurrent
    } else {
        Recurrence::Inconclusive
    };
    let green = if green_steps > 0 {
        Some(k.green(x, 1e-6, green_steps)?.status)
    } else {
        None
    };
    Ok(RecurrenceReport {
        verdict,
        beta_hat,
        partial_sums,
        tail,
        analytic: analytic.is_some(),
        truncated,
        green,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_volume_is_linear() {
        // α = 0: V_m(0,n) = ∫_{−n}^{n} 2h dy = 4hn
        let v = radial_ball_walk_volume(0.0, 0.5, 0.0, 7.0);
        assert!((v - 14.0).abs() < 1e-10);
    }
}
