//! Particle creation from vacuum in a one-dimensional cavity with a moving
//! wall (dynamical Casimir effect) for a real scalar field.
//!
//! The field inside the cavity is expanded in the instantaneous eigenbasis of
//! the spatial operator on `[0, l(t)]`. The moving boundary turns the mode
//! amplitudes into a large coupled linear ODE system; integrating it and
//! reading off the Bogoliubov coefficients at a checkpoint time yields the
//! created-particle spectrum `N_k`, the total number `N` and the radiated
//! energy `E`.
//!
//! The crate is organised along the pipeline:
//!
//! * [`trajectory`] — prescribed wall motions `l(t)` with exact derivatives,
//! * [`spectrum`] — instantaneous frequencies `Ω_n(t)` and the intermode
//!   coupling matrix `M_nm(t)` (Dirichlet conditions),
//! * [`dynamics`] — right-hand sides and initial conditions of the three
//!   equivalent propagation formulations,
//! * [`integrator`] — adaptive embedded Runge–Kutta stepping with
//!   checkpointed output,
//! * [`observables`] — Bogoliubov extraction, spectra, totals and unitarity
//!   residuals,
//! * [`analytic`] — closed-form small-amplitude predictions used as oracles
//!   and CSV overlays,
//! * [`config`] / [`harness`] — run configuration, single runs, cut-off
//!   convergence sweeps and detuning sweeps with CSV/JSON output.

pub mod analytic;
pub mod config;
pub mod dynamics;
pub mod harness;
pub mod integrator;
pub mod observables;
pub mod spectrum;
pub mod trajectory;

pub use config::RunConfig;
pub use dynamics::{CoefficientSet, EvolutionState, SecondOrderState, XiEtaSystem};
pub use harness::{run_convergence, run_detuning_sweep, run_single};
pub use integrator::{integrate, Method, StepperConfig};
pub use observables::{BogoliubovPair, ObservableRecord};
pub use spectrum::{CouplingMatrix, ModeSystem};
pub use trajectory::Trajectory;

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
