//! Numerical laboratory for trait-structured population dynamics across a
//! finite set of habitat patches coupled by migration.
//!
//! Two routes to the same object:
//!
//! * [`pde`] integrates the rescaled mutation-selection-migration system
//!   (small mutation variance `epsilon`) to its steady state on a trait grid;
//! * [`asymptotic`] solves the `epsilon -> 0` limit directly: the population
//!   concentrates on Dirac masses located at zero-level maxima of the
//!   effective Hamiltonian (the Perron eigenvalue of the patch fitness
//!   matrix), with weights fixed by the eigenvector and the pressure
//!   normalization.
//!
//! [`concentration`] extracts empirical atoms from a simulated density and
//! cross-validates the two routes. [`hamiltonian`] holds the shared spectral
//! machinery, [`model`] the problem definition, [`config`] the text format,
//! [`export`] the CSV writers.

pub mod asymptotic;
pub mod concentration;
pub mod config;
mod error;
pub mod export;
pub mod hamiltonian;
mod linalg;
pub mod model;
pub mod nnls;
pub mod pde;

pub use asymptotic::{
    dirac_weights, solve_general, support_points, verify_solution, AsymptoticSolution,
    ConstraintCheck, ConstraintReport, Residuals, SolveStatus, SolverOpts,
};
pub use asymptotic::solve_symmetric;
pub use concentration::{
    compare_limits, extract_diracs, hopf_cole, patch_coupling_gap, semiconvexity_deficit,
    Atom, CompareTol, ComparisonReport, EmpiricalAtoms, HopfColeProfile, PatchAtoms,
    ProfileDiagnostics,
};
pub use config::{load_config, parse_config, ParsedConfig};
pub use error::{Error, Result};
pub use hamiltonian::{
    effective_hamiltonian, fitness_determinant, landscape, perron_pair, FitnessLandscape,
    FitnessMatrix, PerronPair,
};
pub use model::{
    GrowthSpec, Migration, PatchModel, PressureVector, ValidationCheck, ValidationReport,
    WeightFn,
};
pub use pde::{
    init_state, pressures, run_to_steady, DensityState, GridSpec, InitSpec, SimOpts,
    SimulationResult, Stepper, TimeSeries,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
