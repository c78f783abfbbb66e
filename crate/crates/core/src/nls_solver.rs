//! Controlled-path solver for modulated NLS on the torus.
//!
//! The unknown is the moving-frame variable `psi_t = (U_t)^{-1} phi_t`,
//! which solves the Young equation `psi_t = psi_0 + ∫_0^t X_{dσ}(psi_σ)`
//! with `X_{s,t}(psi) = sign * i * X_{s,t}(psi, psi, psi)`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulation::{ModulationError, ModulationPath};
use crate::nls_torus::{
    dnls_x_apply, galerkin_project, h_norm, x_apply, EquationKind, FourierState, Part, TorusError,
    XOperatorSpec,
};
use crate::numeric::loglog_slope;
use crate::young::{
    self, euler_solve, picard_solve, HolderPath, OperatorPath, SewingParams, Vector, YoungError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Young(#[from] YoungError),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// The equation's increment map `psi -> sign * i * X_{s,t}(psi, psi, psi)`,
/// optionally Galerkin-projected on both sides.
pub struct NlsOperator {
    pub spec: XOperatorSpec,
    /// +1 or -1 in front of the nonlinearity.
    pub sign: f64,
    pub galerkin: Option<usize>,
    /// Declared Hölder exponent in time; only checked by the Picard solver.
    pub gamma: f64,
}

impl NlsOperator {
    pub fn new(spec: XOperatorSpec) -> Self {
        Self {
            spec,
            sign: 1.0,
            galerkin: None,
            gamma: 0.75,
        }
    }

    fn state(&self, x: &[Complex64]) -> Result<FourierState> {
        let st = FourierState::from_coeffs(self.spec.cutoff, self.spec.box_length, x.to_vec())?;
        Ok(match self.galerkin {
            Some(l) => galerkin_project(&st, l)?,
            None => st,
        })
    }

    pub fn apply(&self, s: f64, t: f64, x: &[Complex64]) -> Result<FourierState> {
        let p = self.state(x)?;
        let raw = match self.spec.kind {
            EquationKind::CubicNls => x_apply(&self.spec, s, t, &p, &p, &p, Part::Full)?,
            EquationKind::DerivativeNls { .. } => dnls_x_apply(&self.spec, s, t, &p, &p, &p)?,
        };
        let out = raw.scaled(Complex64::new(0.0, self.sign));
        Ok(match self.galerkin {
            Some(l) => galerkin_project(&out, l)?,
            None => out,
        })
    }
}

impl OperatorPath for NlsOperator {
    fn eval(&self, s: f64, t: f64, x: &[Complex64]) -> young::Result<Vector> {
        self.apply(s, t, x)
            .map(FourierState::into_coeffs)
            .map_err(|e| YoungError::Operator(e.to_string()))
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn growth(&self) -> u32 {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler(usize),
    Picard {
        params: SewingParams,
        max_iter: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub alpha: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    pub sign: f64,
    /// Galerkin cutoff `L` applied inside the nonlinearity.
    pub galerkin: Option<usize>,
}

impl SolveConfig {
    pub fn euler(t_end: f64, n: usize, alpha: f64) -> Self {
        Self {
            alpha,
            t_end,
            scheme: Scheme::Euler(n),
            record_every: 1,
            sign: 1.0,
            galerkin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledTrajectory {
    pub grid: Vec<f64>,
    pub psi_nodes: Vec<FourierState>,
    pub phi_nodes: Vec<FourierState>,
    pub l2_history: Vec<f64>,
    pub alpha: f64,
    pub halpha_history: Vec<f64>,
    /// Set for equations with only a local theory (dNLS).
    pub local_only: bool,
}

impl ControlledTrajectory {
    fn from_path(
        path: &HolderPath,
        spec: &XOperatorSpec,
        alpha: f64,
        every: usize,
    ) -> Result<Self> {
        let every = every.max(1);
        let last = path.grid.len() - 1;
        let keep: Vec<usize> = (0..=last)
            .filter(|i| i % every == 0 || *i == last)
            .collect();
        let mut traj = Self {
            grid: Vec::with_capacity(keep.len()),
            psi_nodes: Vec::with_capacity(keep.len()),
            phi_nodes: Vec::with_capacity(keep.len()),
            l2_history: Vec::with_capacity(keep.len()),
            alpha,
            halpha_history: Vec::with_capacity(keep.len()),
            local_only: matches!(spec.kind, EquationKind::DerivativeNls { .. }),
        };
        for i in keep {
            let t = path.grid[i];
            let psi =
                FourierState::from_coeffs(spec.cutoff, spec.box_length, path.nodes[i].clone())?;
            let w = spec.modulation.eval(t)?;
            traj.l2_history.push(psi.l2());
            traj.halpha_history.push(psi.h_norm(alpha));
            traj.phi_nodes.push(psi.propagate(w));
            traj.psi_nodes.push(psi);
            traj.grid.push(t);
        }
        Ok(traj)
    }

    /// `sup_t ||psi_t - other_t||_{H^alpha}` over shared nodes; states are
    /// compared at the larger of the two cutoffs.
    pub fn sup_distance(&self, other: &Self, alpha: f64) -> f64 {
        self.psi_nodes
            .iter()
            .zip(&other.psi_nodes)
            .map(|(a, b)| {
                let n = a.cutoff().max(b.cutoff());
                a.with_cutoff(n).sub(&b.with_cutoff(n)).h_norm(alpha)
            })
            .fold(0.0, f64::max)
    }
}

/// Solve the modulated equation for `spec` from `phi0`.
pub fn solve_controlled(
    spec: &XOperatorSpec,
    config: &SolveConfig,
    phi0: &FourierState,
) -> Result<ControlledTrajectory> {
    if phi0.cutoff() != spec.cutoff {
        return Err(TorusError::CutoffMismatch {
            expected: spec.cutoff,
            got: phi0.cutoff(),
        }
        .into());
    }
    let end = spec.modulation.end();
    if !(config.t_end > 0.0) || config.t_end > end + 1e-12 {
        return Err(SolverError::Config(format!(
            "T={} must lie in (0, {end}]",
            config.t_end
        )));
    }
    let w0 = spec.modulation.eval(0.0)?;
    let psi0 = phi0.propagate(-w0);
    let op = NlsOperator {
        sign: config.sign,
        galerkin: config.galerkin,
        ..NlsOperator::new(spec.clone())
    };
    let path = match config.scheme {
        Scheme::Euler(n) => {
            if n < 1 {
                return Err(SolverError::Config("euler needs n >= 1".into()));
            }
            euler_solve(&op, psi0.coeffs(), config.t_end, n)?
        }
        Scheme::Picard { params, max_iter } => {
            picard_solve(&op, psi0.coeffs(), config.t_end, &params, max_iter)?
        }
    };
    ControlledTrajectory::from_path(&path, spec, config.alpha, config.record_every)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub max_l2_drift: f64,
    /// Slope of log drift against log step over paired runs, when available.
    pub drift_vs_dt_slope: Option<f64>,
}

/// `max_t | ||psi_t|| - ||psi_0|| |` in L².
pub fn conservation_report(traj: &ControlledTrajectory) -> ConservationReport {
    let l0 = traj.l2_history.first().copied().unwrap_or(0.0);
    ConservationReport {
        max_l2_drift: traj
            .l2_history
            .iter()
            .map(|l| (l - l0).abs())
            .fold(0.0, f64::max),
        drift_vs_dt_slope: None,
    }
}

/// Drift report over runs at several step sizes `(dt, trajectory)`.
pub fn conservation_refinement(runs: &[(f64, &ControlledTrajectory)]) -> ConservationReport {
    let drifts: Vec<f64> = runs
        .iter()
        .map(|(_, t)| conservation_report(t).max_l2_drift)
        .collect();
    let dts: Vec<f64> = runs.iter().map(|(d, _)| *d).collect();
    let slope =
        (runs.len() >= 2 && drifts.iter().all(|d| *d > 0.0)).then(|| loglog_slope(&dts, &drifts));
    ConservationReport {
        max_l2_drift: drifts.iter().copied().fold(0.0, f64::max),
        drift_vs_dt_slope: slope,
    }
}

/// `(L, sup_t ||psi^L - psi^ref||_{H^alpha})` for each Galerkin cutoff,
/// the reference being the solve at `spec.cutoff`.
pub fn galerkin_convergence(
    spec: &XOperatorSpec,
    config: &SolveConfig,
    phi0: &FourierState,
    l_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if !(config.alpha > 0.0) {
        return Err(SolverError::Config("alpha must be positive".into()));
    }
    if l_list.iter().any(|&l| l > spec.cutoff) {
        return Err(SolverError::Config(format!(
            "cutoffs must not exceed the reference cutoff {}",
            spec.cutoff
        )));
    }
    let reference = solve_controlled(spec, config, phi0)?;
    l_list
        .par_iter()
        .map(|&l| {
            if l == spec.cutoff {
                return Ok((l, 0.0));
            }
            let sub = spec.at_cutoff(l);
            let traj = solve_controlled(&sub, config, &phi0.with_cutoff(l))?;
            Ok((l, traj.sup_distance(&reference, config.alpha)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub path_gap: f64,
    pub trajectory_gap: f64,
}

/// Trajectory sensitivity to the modulation: each path in `w_sequence` is
/// compared against `spec.modulation`.
pub fn modulation_continuity(
    spec: &XOperatorSpec,
    config: &SolveConfig,
    phi0: &FourierState,
    w_sequence: &[ModulationPath],
) -> Result<Vec<ContinuityRow>> {
    let base = &spec.modulation;
    for w in w_sequence {
        if w.len() != base.len() || w.dt() != base.dt() || w.t0() != base.t0() {
            return Err(SolverError::Config("paths must share the base grid".into()));
        }
    }
    let reference = solve_controlled(spec, config, phi0)?;
    w_sequence
        .par_iter()
        .map(|w| {
            let alt = XOperatorSpec {
                modulation: Arc::new(w.clone()),
                phi_cache: None,
                ..spec.clone()
            };
            let traj = solve_controlled(&alt, config, phi0)?;
            Ok(ContinuityRow {
                path_gap: base.sup_distance(w),
                trajectory_gap: traj.sup_distance(&reference, config.alpha),
            })
        })
        .collect()
}

/// Initial data with `c(k) = exp(-k² / 8)` scaled to the given L² norm.
pub fn gaussian_decay(cutoff: usize, box_length: f64, l2: f64) -> FourierState {
    let s = FourierState::from_fn(cutoff, box_length, |k| {
        Complex64::new((-(k * k) as f64 / 8.0).exp(), 0.0)
    });
    let n = s.l2();
    s.scaled(Complex64::new(l2 / n, 0.0))
}

/// Single mode `c e^{i k x}`.
pub fn single_mode(cutoff: usize, box_length: f64, k: i64, c: Complex64) -> FourierState {
    FourierState::from_fn(cutoff, box_length, |j| {
        if j == k {
            c
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `||x||_{H^alpha}` of a raw coefficient vector.
pub fn coeff_h_norm(coeffs: &[Complex64], cutoff: usize, box_length: f64, alpha: f64) -> f64 {
    h_norm(coeffs, cutoff, box_length, alpha)
}
