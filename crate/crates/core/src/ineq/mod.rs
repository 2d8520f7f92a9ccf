//! Functional inequalities: Poincaré at a scale, Nash/Sobolev/ultracontractivity
//! probes, spectral gaps of killed chains, Caccioppoli, the discrete integral
//! maximum principle and the polynomial identities behind the lazy comparison.

mod caccioppoli;
mod imp;
mod poincare;
mod poly;
mod probes;

pub use caccioppoli::{caccioppoli_check, CaccioppoliReport, Subcaloric};
pub use imp::{find_min_d, imp_check, sigma_r, ImpReport, ImpVerdict};
pub use poincare::{poincare_constant, PoincareResult};
pub use poly::{poly_residuals, poly_sweep, s_nk, PolyResiduals};
pub use probes::{
    ball_trials, nash_probe, pseudo_poincare_check, sobolev_probe, spectral_gap, ultracontractivity_profile,
    ConstantProbe, SpectralGap, Trial, UltraProfile,
};
