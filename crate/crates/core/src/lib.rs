//! Spectral laboratory for nonlinear Schrödinger equations whose dispersion
//! is driven by an irregular modulation path `w`.
//!
//! * [`modulation`]: paths, the occupation transform `Phi^w`, irregularity estimates.
//! * [`young`]: nonlinear Young integral, Picard and Euler solvers.
//! * [`nls_torus`]: Fourier-explicit modulated operators on the torus.
//! * [`nls_solver`]: controlled-path solver and convergence experiments.
//! * [`strichartz_line`]: periodic-box experiments for the line problem.

pub mod modulation;
pub mod nls_solver;
pub mod nls_torus;
pub mod numeric;
pub mod strichartz_line;
pub mod young;

pub use num_complex::Complex64;
