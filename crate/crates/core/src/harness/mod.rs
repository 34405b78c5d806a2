//! Benchmark models, ensemble runner, and validation suite.
//!
//! This module packages the physics kernels into two ready-to-run
//! benchmark problems and exposes one entry point per concern:
//!
//! ```text
//!     config    parse + validate JSON descriptions of the benchmarks
//!     models    their diabatic potentials (spin-boson, cavity molecule)
//!     ensemble  run N trajectories of a chosen method, reduce statistics
//!     output    deterministic CSV serialization of ensemble results
//!     validate  the built-in correctness suite (10 numbered criteria)
//! ```
//!
//! Every run is reproducible bit for bit from `(config, method, seed)`:
//! trajectories draw from counter-derived random streams and partial
//! results merge in a fixed chunk order regardless of worker count.

pub mod config;
pub mod ensemble;
pub mod models;
pub mod output;
pub mod validate;

pub use config::{
    CavityConfig, ClassicalBathParams, ConfigError, QuantumBathParams, RunConfig, SpinBosonConfig,
};
pub use ensemble::{run_ensemble, EnsembleResult, EstimatorSeries, HarnessError, Method};
pub use models::{CavityModel, SpinBosonModel};
pub use output::{csv_string, write_csv};
pub use validate::{run_all, run_criterion, run_suite, CriterionReport, Suite};
