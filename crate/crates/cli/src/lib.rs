//! Experiment harness for the entropy-dissipating finite-difference solver:
//! configuration files, initial-data presets, PGM image I/O, and the
//! evolve / convergence / denoise / check experiment drivers.

pub mod check;
pub mod config;
pub mod image;
pub mod pgm;
pub mod presets;
pub mod runner;

pub use check::{run_check, CheckReport, CheckStatus};
pub use config::{
    apply_overrides, parse, render, ConfigError, EquationSpec, InitialSpec, JacobianSpec,
    MethodSpec, Overrides, RunConfig, SolverSpec,
};
pub use image::{field_to_image, image_to_field, synthetic_test_image, DEFAULT_IMAGE_FLOOR};
pub use pgm::{encode_pgm, load_pgm, parse_pgm, save_pgm, GrayImage, PgmError};
pub use presets::preset_initial_data;
pub use runner::{
    exit_code, run_convergence, run_denoise, run_evolve, ConvergenceOutcome, DenoiseOutcome,
    EvolveOutcome, Resolved, ResolvedScheme, RunError, EXIT_CHECK_FAILED,
};
