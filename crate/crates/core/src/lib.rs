//! Numerical laboratory for the Toda lattice at thermal equilibrium.
//!
//! The crate simulates the open and periodic Toda lattice in Flaschka
//! variables, diagonalizes the associated Lax matrices, extracts
//! localization-center data defining quasiparticles, and evaluates the
//! spectral identities, charge/current estimates, scattering relation, and
//! effective-velocity system that tie the pieces together.

pub mod compare;
pub mod domain;
pub mod error;
pub mod hydro;
pub mod lattice;
pub mod lax;
pub mod linalg;
pub mod localization;
pub mod quasiparticle;
pub mod rng;
pub mod thermal;

pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use lattice::{
    evolve, flaschka_from_state, hamiltonian, hamiltonian_flaschka, state_from_flaschka,
    toda_rhs, torus_invariants, FlaschkaState, IntegratorConfig, Scheme, TodaState, Trajectory,
};
pub use lax::{
    build_lax, spectral_diagnostics, thouless_identity_residual, LaxMatrix,
    SpectralDecomposition,
};
pub use localization::{
    center_bijection, centers, decay_profile, track_centers, truncation_eigen_match,
    LocalizationAssignment,
};
pub use quasiparticle::{
    charge_continuity_residual, charge_window_vs_eigsum, local_charge, local_current,
    quasiparticle_positions, scattering_report, ScatteringReport,
};
pub use rng::RngStream;
pub use thermal::ThermalParams;

