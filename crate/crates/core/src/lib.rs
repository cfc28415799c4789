//! Steady states of the coherently driven, dissipative Bose-Hubbard dimer.
//!
//! Three tiers of description share one parameter set ([`DimerParams`]):
//!
//! * [`semiclassical`]: mean-field amplitudes, branch continuation, stability
//!   and the location of the symmetry-breaking bifurcations.
//! * [`gaussian`]: second-order fluctuations around a mean-field solution,
//!   exact when `U -> 0` at fixed `sqrt(U) F`.
//! * [`fockspace`]: the full Lindblad steady state on a truncated Fock space
//!   of the fluctuation operators, for finite `U`.
//!
//! All frequencies are in units of the loss rate `gamma`.

pub mod fockspace;
pub mod gaussian;
pub mod model;
pub mod numerics;
pub mod semiclassical;

pub use num_complex::Complex64;

pub use fockspace::{DensityMatrix, ExactPoint, FockConfig, FockError, FockObservables, SteadyStateOptions};
pub use gaussian::{CovarianceMatrix, GaussianError, GaussianObservables, MomentSet};
pub use model::{DimerParams, ParamError, RescaledDrive};
pub use numerics::{LinalgError, SparseMatrix, TripletBuilder};
pub use semiclassical::{Branch, FitError, PowerLawFit, SemiclassicalSolution, SolveError};
