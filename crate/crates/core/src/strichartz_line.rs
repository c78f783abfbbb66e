//! Line experiments on a large periodic box.
//!
//! The real line is replaced by `[-L/2, L/2)` sampled at `M` points. The
//! modulated propagator `U_w` multiplies the spectrum at `ξ` by
//! `exp(-i ξ² w)`. A guard requires fields to be negligible near the edge of
//! the box so that the periodic problem stands in for the line.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulation::{ModulationError, ModulationPath};
use crate::numeric::{l2_distance, loglog_slope};

/// Relative size allowed in the outer part of the box.
pub const GUARD_TOL: f64 = 1e-10;
/// Fraction of the box length, split evenly between both ends, watched by the guard.
pub const GUARD_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineError {
    #[error("grid size {0} must be a power of two")]
    GridSize(usize),
    #[error("grid mismatch")]
    GridMismatch,
    #[error("p={0} outside the admissible range")]
    InvalidP(f64),
    #[error("need at least 3 horizons, got {0}")]
    TooFewHorizons(usize),
    #[error("source is identically zero")]
    ZeroSource,
    #[error("field is identically zero")]
    ZeroField,
    #[error("guard violated t={t}: edge/peak ratio {ratio:e}")]
    Guard { t: f64, ratio: f64 },
    #[error("fixed point did not contract after {halvings} step halvings")]
    NoContraction { halvings: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
}

pub type Result<T> = std::result::Result<T, LineError>;

/// Uniform periodic grid with cached transforms.
#[derive(Clone)]
pub struct BoxGrid {
    points: usize,
    length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BoxGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxGrid")
            .field("points", &self.points)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for BoxGrid {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.length == other.length
    }
}

impl BoxGrid {
    pub fn new(points: usize, length: f64) -> Result<Self> {
        if !points.is_power_of_two() || points < 2 {
            return Err(LineError::GridSize(points));
        }
        if !(length > 0.0) {
            return Err(LineError::InvalidArgument(format!("box length {length}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            points,
            length,
            fwd: planner.plan_fft_forward(points),
            inv: planner.plan_fft_inverse(points),
        })
    }

    /// Box of length 64 with 2^12 points.
    pub fn standard() -> Self {
        Self::new(1 << 12, 64.0).unwrap()
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    /// Angular frequency of FFT bin `k`.
    pub fn xi(&self, k: usize) -> f64 {
        let m = self.points as i64;
        let kk = if (k as i64) < m / 2 { k as i64 } else { k as i64 - m };
        2.0 * std::f64::consts::PI / self.length * kk as f64
    }

    fn forward(&self, v: &mut [Complex64]) {
        self.fwd.process(v);
    }

    fn inverse(&self, v: &mut [Complex64]) {
        self.inv.process(v);
        let s = 1.0 / self.points as f64;
        v.iter_mut().for_each(|z| *z *= s);
    }
}

/// Complex field on the box grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxField {
    pub grid: BoxGrid,
    pub values: Vec<Complex64>,
}

impl BoxField {
    pub fn from_fn(grid: &BoxGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid: grid.clone(),
            values: (0..grid.points).map(|j| f(grid.x(j))).collect(),
        }
    }

    pub fn zeros(grid: &BoxGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.points],
        }
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut v = self.values.clone();
        self.grid.forward(&mut v);
        v
    }

    pub fn from_spectrum(grid: &BoxGrid, mut spec: Vec<Complex64>) -> Self {
        grid.inverse(&mut spec);
        Self {
            grid: grid.clone(),
            values: spec,
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let dx = self.grid.dx();
        (dx * self.values.iter().map(|v| v.norm().powf(p)).sum::<f64>()).powf(1.0 / p)
    }

    pub fn l1(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.norm()).sum::<f64>()
    }

    pub fn l2(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// L² norm computed from the spectrum.
    pub fn spectral_l2(&self) -> f64 {
        spectral_weighted(&self.grid, &self.spectrum(), |_| 1.0)
    }

    /// Inhomogeneous `H^alpha` norm with weight `(1+ξ²)^alpha`.
    pub fn h_norm(&self, alpha: f64) -> f64 {
        spectral_weighted(&self.grid, &self.spectrum(), |xi| (1.0 + xi * xi).powf(alpha))
    }

    /// Homogeneous seminorm with weight `|ξ|^{2s}`, zero mode excluded.
    pub fn homogeneous_norm(&self, s: f64) -> f64 {
        spectral_weighted(&self.grid, &self.spectrum(), |xi| {
            if xi == 0.0 {
                0.0
            } else {
                xi.abs().powf(2.0 * s)
            }
        })
    }

    /// `max |u|` in the guarded edge region divided by `max |u|`.
    pub fn edge_ratio(&self) -> f64 {
        let half = 0.5 * self.grid.length;
        let edge = half * (1.0 - GUARD_FRACTION);
        let mut peak: f64 = 0.0;
        let mut outer: f64 = 0.0;
        for (j, v) in self.values.iter().enumerate() {
            let a = v.norm();
            peak = peak.max(a);
            if self.grid.x(j).abs() >= edge {
                outer = outer.max(a);
            }
        }
        if peak == 0.0 {
            0.0
        } else {
            outer / peak
        }
    }

    pub fn guard_ok(&self) -> bool {
        self.edge_ratio() <= GUARD_TOL
    }

    pub fn distance(&self, other: &Self) -> f64 {
        l2_distance(&self.values, &other.values) * self.grid.dx().sqrt()
    }
}

fn spectral_weighted(grid: &BoxGrid, spec: &[Complex64], weight: impl Fn(f64) -> f64) -> f64 {
    let dx = grid.dx();
    let s: f64 = spec
        .iter()
        .enumerate()
        .map(|(k, v)| weight(grid.xi(k)) * v.norm_sqr())
        .sum();
    (dx * dx / grid.length * s).sqrt()
}

fn phase_multiply(grid: &BoxGrid, spec: &mut [Complex64], w: f64) {
    for (k, v) in spec.iter_mut().enumerate() {
        let xi = grid.xi(k);
        *v *= Complex64::from_polar(1.0, -xi * xi * w);
    }
}

/// `U_w f`: spectrum at `ξ` multiplied by `exp(-i ξ² w)`.
pub fn propagate(field: &BoxField, w_value: f64) -> BoxField {
    let mut spec = field.spectrum();
    phase_multiply(&field.grid, &mut spec, w_value);
    BoxField::from_spectrum(&field.grid, spec)
}

/// Free evolution of `exp(-x² / (2σ²))` under `U_w` on the line.
pub fn gaussian_closed_form(grid: &BoxGrid, sigma: f64, w: f64) -> BoxField {
    let s2 = Complex64::new(sigma * sigma, 0.0);
    let z = s2 + Complex64::new(0.0, 2.0 * w);
    let pref = (s2 / z).sqrt();
    BoxField::from_fn(grid, |x| pref * (-(x * x) / (z * 2.0)).exp())
}

/// Time-indexed fields on a uniform grid `t_j = j T / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub times: Vec<f64>,
    pub fields: Vec<BoxField>,
}

impl FieldSeries {
    /// `(∫_0^T ||F_t||_{L^{2p}}^p dt)^{1/p}` by the trapezoid rule.
    pub fn mixed_norm(&self, p: f64) -> f64 {
        let vals: Vec<f64> = self.fields.iter().map(|f| f.lp_norm(2.0 * p).powf(p)).collect();
        trapezoid(&self.times, &vals).powf(1.0 / p)
    }

    /// `∫_0^T ||F_t||_{L²} dt` by the trapezoid rule.
    pub fn l1_l2(&self) -> f64 {
        let vals: Vec<f64> = self.fields.iter().map(BoxField::l2).collect();
        trapezoid(&self.times, &vals)
    }
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `t -> ∫_0^t U_t (U_s)^{-1} psi_s ds` on the grid `j T / quad_points`,
/// composite trapezoid in `s`.
pub fn duhamel(
    w: &ModulationPath,
    grid: &BoxGrid,
    source: impl Fn(f64) -> BoxField + Sync,
    t_end: f64,
    quad_points: usize,
) -> Result<FieldSeries> {
    if quad_points < 1 {
        return Err(LineError::InvalidArgument("quad_points must be >= 1".into()));
    }
    let times: Vec<f64> = (0..=quad_points)
        .map(|j| t_end * j as f64 / quad_points as f64)
        .collect();
    let wv: Vec<f64> = times.iter().map(|&t| w.eval(t)).collect::<std::result::Result<_, _>>()?;
    // interaction-frame integrand (U_s)^{-1} psi_s, spectrally
    let frames: Vec<Vec<Complex64>> = times
        .par_iter()
        .zip(&wv)
        .map(|(&t, &ws)| {
            let f = source(t);
            if f.grid != *grid {
                return Err(LineError::GridMismatch);
            }
            let mut spec = f.spectrum();
            phase_multiply(grid, &mut spec, -ws);
            Ok(spec)
        })
        .collect::<Result<_>>()?;
    let mut cumulative = Vec::with_capacity(times.len());
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.points];
    cumulative.push(acc.clone());
    for j in 1..times.len() {
        let h = 0.5 * (times[j] - times[j - 1]);
        for ((a, x), y) in acc.iter_mut().zip(&frames[j - 1]).zip(&frames[j]) {
            *a += (x + y) * h;
        }
        cumulative.push(acc.clone());
    }
    let fields = cumulative
        .into_par_iter()
        .zip(wv.par_iter())
        .map(|(mut spec, &wt)| {
            phase_multiply(grid, &mut spec, wt);
            BoxField::from_spectrum(grid, spec)
        })
        .collect();
    Ok(FieldSeries { times, fields })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrichartzFit {
    pub p: f64,
    /// `(source index, T, ratio)`.
    pub rows: Vec<(usize, f64, f64)>,
    /// Slope of log ratio against log T, per source.
    pub slopes: Vec<f64>,
    pub max_constant: f64,
}

/// Ratio `||duhamel||_{L^p L^{2p}} / ||psi||_{L^1 L^2}` over horizons and its
/// log-log slope in `T`.
pub fn strichartz_fit(
    w: &ModulationPath,
    grid: &BoxGrid,
    sources: &[&(dyn Fn(f64) -> BoxField + Sync)],
    p: f64,
    t_list: &[f64],
    quad_points: usize,
) -> Result<StrichartzFit> {
    if !(p > 2.0 && p <= 5.0) {
        return Err(LineError::InvalidP(p));
    }
    if t_list.len() < 3 {
        return Err(LineError::TooFewHorizons(t_list.len()));
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        let mut ratios = Vec::with_capacity(t_list.len());
        for &t in t_list {
            let d = duhamel(w, grid, src, t, quad_points)?;
            let input = FieldSeries {
                times: d.times.clone(),
                fields: d.times.iter().map(|&s| src(s)).collect(),
            };
            let denom = input.l1_l2();
            if denom == 0.0 {
                return Err(LineError::ZeroSource);
            }
            let r = d.mixed_norm(p) / denom;
            rows.push((i, t, r));
            ratios.push(r);
        }
        slopes.push(loglog_slope(t_list, &ratios));
    }
    let max_constant = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(StrichartzFit {
        p,
        rows,
        slopes,
        max_constant,
    })
}

/// `||U_t u0||_{L^p([0,T], L^{2p})} / ||u0||_{L^2}`.
pub fn homogeneous_ratio(
    w: &ModulationPath,
    u0: &BoxField,
    p: f64,
    t_end: f64,
    quad_points: usize,
) -> Result<f64> {
    let times: Vec<f64> = (0..=quad_points)
        .map(|j| t_end * j as f64 / quad_points as f64)
        .collect();
    let fields = times
        .iter()
        .map(|&t| Ok(propagate(u0, w.eval(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let series = FieldSeries { times, fields };
    Ok(series.mixed_norm(p) / u0.l2())
}

/// `||D^{alpha/2} |f|²||_{L²}`, the quantity controlled by the smoothing estimate.
pub fn square_smoothing_norm(f: &BoxField, alpha: f64) -> f64 {
    let sq = BoxField {
        grid: f.grid.clone(),
        values: f.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect(),
    };
    sq.homogeneous_norm(alpha / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrajectory {
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub h1: Option<Vec<f64>>,
    /// Steps actually used after automatic halving.
    pub steps: usize,
    #[serde(skip)]
    pub final_field: Option<BoxField>,
}

impl PowerTrajectory {
    pub fn l2_drift(&self) -> f64 {
        let l0 = self.l2[0];
        self.l2.iter().map(|l| (l - l0).abs()).fold(0.0, f64::max)
    }
}

/// Maximum fixed-point sweeps per time step before the step is halved.
const MAX_SWEEPS: usize = 60;
const MAX_HALVINGS: usize = 8;

/// Solve `u_t = U_t u0 + i ∫_0^t U_t (U_s)^{-1} (|u_s|^mu u_s) ds` with the
/// trapezoid rule in the interaction frame and a fixed-point solve per step.
pub fn mild_solve_power(
    w: &ModulationPath,
    u0: &BoxField,
    mu: f64,
    t_end: f64,
    n_steps: usize,
    fixed_point_tol: f64,
    track_h1: bool,
) -> Result<PowerTrajectory> {
    if !(mu > 1.0 && mu <= 4.0) {
        return Err(LineError::InvalidArgument(format!("mu={mu} outside (1,4]")));
    }
    if n_steps < 1 || !(fixed_point_tol > 0.0) {
        return Err(LineError::InvalidArgument("need n_steps >= 1 and tol > 0".into()));
    }
    if !u0.guard_ok() {
        return Err(LineError::Guard {
            t: 0.0,
            ratio: u0.edge_ratio(),
        });
    }
    let pad = PaddedPower::new(&u0.grid, mu);
    let mut n = n_steps;
    for _ in 0..=MAX_HALVINGS {
        match mild_run(w, u0, &pad, t_end, n, fixed_point_tol, track_h1)? {
            Some(traj) => return Ok(traj),
            None => n *= 2,
        }
    }
    Err(LineError::NoContraction {
        halvings: MAX_HALVINGS,
    })
}

fn mild_run(
    w: &ModulationPath,
    u0: &BoxField,
    pad: &PaddedPower,
    t_end: f64,
    n: usize,
    tol: f64,
    track_h1: bool,
) -> Result<Option<PowerTrajectory>> {
    let grid = &u0.grid;
    let h = t_end / n as f64;
    let mut times = vec![0.0];
    let mut l2 = vec![u0.l2()];
    let mut h1 = track_h1.then(|| vec![u0.h_norm(1.0)]);
    // interaction variable v = (U_t)^{-1} u, spectral
    let mut v = u0.spectrum();
    let w0 = w.eval(0.0)?;
    phase_multiply(grid, &mut v, -w0);
    let mut wt = w0;
    let mut g_prev = pad.frame_term(&v, wt);
    let mut field = u0.clone();
    for step in 1..=n {
        let t = if step == n { t_end } else { step as f64 * h };
        let wn = w.eval(t)?;
        // explicit predictor then fixed point on the trapezoid relation
        let base: Vec<Complex64> = v
            .iter()
            .zip(&g_prev)
            .map(|(a, g)| a + g * (0.5 * h))
            .collect();
        let mut cur: Vec<Complex64> = v.iter().zip(&g_prev).map(|(a, g)| a + g * h).collect();
        let mut last_gap = f64::INFINITY;
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let g_new = pad.frame_term(&cur, wn);
            let next: Vec<Complex64> = base.iter().zip(&g_new).map(|(b, g)| b + g * (0.5 * h)).collect();
            let gap = l2_distance(&next, &cur);
            let scale = crate::numeric::l2_norm(&next).max(f64::MIN_POSITIVE);
            cur = next;
            if gap <= tol * scale {
                converged = true;
                break;
            }
            if gap > last_gap {
                return Ok(None);
            }
            last_gap = gap;
        }
        if !converged {
            return Ok(None);
        }
        g_prev = pad.frame_term(&cur, wn);
        v = cur;
        wt = wn;
        let mut spec = v.clone();
        phase_multiply(grid, &mut spec, wt);
        field = BoxField::from_spectrum(grid, spec);
        if !field.guard_ok() {
            return Err(LineError::Guard {
                t,
                ratio: field.edge_ratio(),
            });
        }
        times.push(t);
        l2.push(field.l2());
        if let Some(h1) = h1.as_mut() {
            h1.push(field.h_norm(1.0));
        }
    }
    Ok(Some(PowerTrajectory {
        times,
        l2,
        h1,
        steps: n,
        final_field: Some(field),
    }))
}

/// `|u|^mu u` evaluated on a 3/2 zero-padded grid.
struct PaddedPower {
    grid: BoxGrid,
    mu: f64,
    big: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PaddedPower {
    fn new(grid: &BoxGrid, mu: f64) -> Self {
        let big = 3 * grid.points / 2;
        let mut planner = FftPlanner::new();
        Self {
            grid: grid.clone(),
            mu,
            big,
            fwd: planner.plan_fft_forward(big),
            inv: planner.plan_fft_inverse(big),
        }
    }

    /// Spectrum of `|u|^mu u` for the field with spectrum `spec`.
    fn power(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let m = self.grid.points;
        let half = m / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.big];
        // positive frequencies then negative ones; the Nyquist bin is dropped
        buf[..half].copy_from_slice(&spec[..half]);
        for k in half + 1..m {
            buf[self.big - (m - k)] = spec[k];
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / m as f64;
        for z in buf.iter_mut() {
            let u = *z * scale;
            *z = u * u.norm().powf(self.mu);
        }
        self.fwd.process(&mut buf);
        let back = m as f64 / self.big as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        out[..half].copy_from_slice(&buf[..half]);
        for k in half + 1..m {
            out[k] = buf[self.big - (m - k)];
        }
        out.iter_mut().for_each(|z| *z *= back);
        out
    }

    /// `i (U_w)^{-1} (|u|^mu u)` with `u = U_w v`, spectrally.
    fn frame_term(&self, v: &[Complex64], w: f64) -> Vec<Complex64> {
        let mut u = v.to_vec();
        phase_multiply(&self.grid, &mut u, w);
        let mut g = self.power(&u);
        phase_multiply(&self.grid, &mut g, -w);
        g.iter_mut().for_each(|z| *z *= Complex64::new(0.0, 1.0));
        g
    }
}

/// Strang splitting for `mu = 2`: exact phase rotation for the nonlinear part
/// and exact spectral propagation for the modulated linear part.
pub fn split_step_cubic(
    w: &ModulationPath,
    u0: &BoxField,
    t_end: f64,
    n_steps: usize,
) -> Result<BoxField> {
    let h = t_end / n_steps as f64;
    let half_kick = |f: &mut BoxField| {
        for v in f.values.iter_mut() {
            *v *= Complex64::from_polar(1.0, 0.5 * h * v.norm_sqr());
        }
    };
    let mut f = u0.clone();
    let mut wt = w.eval(0.0)?;
    for step in 1..=n_steps {
        let t = if step == n_steps { t_end } else { step as f64 * h };
        let wn = w.eval(t)?;
        half_kick(&mut f);
        f = propagate(&f, wn - wt);
        half_kick(&mut f);
        wt = wn;
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub s: f64,
    pub theta: f64,
}

/// Both sides of `||f||_{L^p} <= c ||f||_{L^1}^{1-θ} ||f||_{Ḣ^s}^θ` with
/// `s = 1/2 - 1/p + eps/2` and `θ = (2p-2)/((2+eps)p-2)`.
pub fn gn_check(f: &BoxField, p: f64, eps: f64) -> Result<GnCheck> {
    if !(p > 2.0) {
        return Err(LineError::InvalidP(p));
    }
    if !(eps > 0.0) {
        return Err(LineError::InvalidArgument(format!("eps={eps}")));
    }
    if f.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(LineError::ZeroField);
    }
    let s = 0.5 - 1.0 / p + 0.5 * eps;
    let theta = (2.0 * p - 2.0) / ((2.0 + eps) * p - 2.0);
    let lhs = f.lp_norm(p);
    let rhs = f.l1().powf(1.0 - theta) * f.homogeneous_norm(s).powf(theta);
    Ok(GnCheck {
        lhs,
        rhs,
        ratio: lhs / rhs,
        s,
        theta,
    })
}
