//! Harmonic and caloric functions, Harnack batteries, balayage, Gaussian
//! envelopes and the recurrence classifier.

mod balayage;
mod caloric;
mod gaussian;
mod harmonic;
mod recurrence;

pub use balayage::{balayage, Balayage};
pub use caloric::{caloric_data, evolve_caloric, parabolic_harnack, phi_windows};
pub use gaussian::{
    ed_profile, gaussian_fit, on_diagonal_profile, tree_root_profile, volume_m, EdProfile, GaussSample,
    GaussianFit,
};
pub use harmonic::{
    elliptic_harnack, holder_oscillation, reverse_poincare_battery, reverse_poincare_check, solve_harmonic,
    spike_data, HarmonicSolution, HarnackKind, HarnackReport, OscillationProfile,
};
pub use recurrence::{
    classify_recurrence, radial_ball_walk_volume, Recurrence, RecurrenceReport, EXPONENT_MARGIN,
};
