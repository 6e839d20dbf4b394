//! Desk-scale density-matrix simulation of position-basis decoherence.
//!
//! The crate has three layers:
//!
//! * [`qmath`] and [`spin`] — dense complex linear algebra over labeled
//!   tensor factorizations, and the spin-1/2 algebra (Bloch observables,
//!   closed-form interaction unitaries, site-localized operations).
//! * [`nogo`] — exact two-lab signaling protocols: nonlocal operations on an
//!   internal degree of freedom versus their site-localized counterparts,
//!   with the resulting classical mutual information computed in closed form.
//! * [`darwinism`] and [`analysis`] — a spin-bath decoherence model with two
//!   evolution engines (exact brute force and a linear-cost branch-wise fast
//!   path), environment fragmentation, fidelity/Holevo diagnostics, and a
//!   spectrum-broadcast-structure verdict.

pub mod analysis;
pub mod darwinism;
pub mod error;
pub mod nogo;
pub mod qmath;
pub mod spin;

pub use error::{Error, Result};
