//! Trajectory-ensemble simulator for a two-level system coupled to
//! classical nuclear motion and dissipative environments.
//!
//! Three propagation methods share one set of building blocks:
//!
//! * **Secular master equation** ([`redfield_me`]): deterministic Bloch
//!   dynamics with golden-rule rates and Lamb shifts, either static or
//!   driven by a schedule of time-dependent rates.
//! * **Piecewise-deterministic unravelling** ([`unravel`]): pure-state
//!   quantum trajectories whose jump statistics reproduce the master
//!   equation.
//! * **Spin-mapping surface hopping** ([`mash_core`]) and its dissipative
//!   extension ([`hybrid`]): nuclear trajectories carrying a spin vector
//!   whose hemisphere selects the active adiabat, with bath jumps grafted
//!   onto the hopping dynamics.
//!
//! The [`harness`] module packages two benchmark models (a two-bath
//! spin-boson system and cavity-modified fluorescence), deterministic
//! parallel ensemble drivers, and the built-in cross-validation suite.

pub mod bath;
pub mod harness;
pub(crate) mod engine;
pub mod hybrid;
pub mod linalg;
pub mod mash_core;
pub mod ode;
pub mod redfield_me;
pub mod rng;
pub mod stats;
pub mod two_level;
pub mod units;
pub mod unravel;
