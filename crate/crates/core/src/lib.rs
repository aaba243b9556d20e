//! Time-transformations for linear DDEs with a constant-plus-periodic delay.
//!
//! A delay `tau(t) = tau0 + eps * tau~(t)` with periodic `tau~` can be removed
//! by a change of time `t = h(lambda)` that solves the Abel equation
//!
//! ```text
//! h(lambda) - tau(h(lambda)) = h(lambda - tau*),   h(0) = 0.
//! ```
//!
//! The transformed system has the constant delay `tau*` and a time-varying
//! scalar `h'(lambda)` multiplying both system matrices. This crate builds
//! such transformations two ways:
//!
//! * [`perturbation`]: explicit first- and second-order Fourier expansions in `eps`;
//! * [`abel`]: a numerically exact transform propagated from a fitted seed.
//!
//! It also integrates both the original and the transformed DDE
//! ([`dde_sim`]) and assembles the robust-stability data for the
//! transformed system ([`robust`]).

pub mod abel;
pub mod dde_sim;
mod error;
pub mod experiments;
pub mod fmt;
pub mod interp;
pub mod periodic_delay;
pub mod perturbation;
pub mod presets;
pub mod robust;
pub mod roots;

pub use abel::{fit_seed, g_inverse, propagate, PropagatedTransform, PropagationOptions, SeedFunction};
pub use dde_sim::{
    simulate_original, simulate_transformed, stability_probe, verify_equivalence, DdeSystem,
    ProbeVerdict, Trajectory,
};
pub use error::{Error, Result};
pub use periodic_delay::{DelayProfile, FourierSeries, HypothesisReport, PeriodicDelay};
pub use perturbation::{
    closed_form_sinusoid, first_order_coeffs, second_order_coeffs, ExpansionCoefficients,
    ExpansionOrder, TimeTransform,
};
pub use robust::{assemble_feedback_form, assemble_pie, compute_hdot_bounds, HdotBounds, PieOperatorData};
