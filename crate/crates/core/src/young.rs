//! Nonlinear Young calculus for paths of maps `X_{s,t}: V -> V`.
//!
//! [`young_integral`] builds `∫_s^t X_{du}(g_u)` from left-point Riemann sums
//! on dyadically refined partitions. [`picard_solve`] and [`euler_solve`]
//! solve the Young equation `psi_t = psi_0 + ∫_0^t X_{du}(psi_u)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{l2_norm, loglog_slope, CompensatedSum};

pub type Vector = Vec<Complex64>;

/// Norm above which a scheme is declared divergent.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum YoungError {
    #[error("exponents are not summable: gamma + rho = {0} <= 1")]
    NotSummable(f64),
    #[error("no stabilization after {depth} dyadic levels (last gap {gap:e})")]
    NoStabilization { depth: usize, gap: f64 },
    #[error("no contracting window found at t={t} (window shrank below one grid step)")]
    NoContraction { t: f64 },
    #[error("picard iteration exceeded {0} iterations")]
    MaxIterations(usize),
    #[error("diverged t={t}")]
    Diverged { t: f64 },
    #[error("interval [{s}, {t}] outside the path grid [{start}, {end}]")]
    OutsideGrid {
        s: f64,
        t: f64,
        start: f64,
        end: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operator evaluation failed: {0}")]
    Operator(String),
}

pub type Result<T> = std::result::Result<T, YoungError>;

/// A Hölder path of maps `(s, t, x) -> X_{s,t}(x)` on a complex vector space.
pub trait OperatorPath: Sync {
    fn eval(&self, s: f64, t: f64, x: &[Complex64]) -> Result<Vector>;

    /// Hölder exponent in time.
    fn gamma(&self) -> f64;

    /// Polynomial growth order `M` of the local Lipschitz constant.
    fn growth(&self) -> u32 {
        0
    }

    /// Declared constant of the Hölder-Lipschitz estimate.
    fn norm_bound(&self) -> f64 {
        f64::NAN
    }

    /// Norm of the state space.
    fn norm(&self, x: &[Complex64]) -> f64 {
        l2_norm(x)
    }
}

/// `X_{s,t}(x) = (h(t) - h(s)) * c * x` for a scalar control `h`.
pub struct ScalarLinear<H: Fn(f64) -> f64 + Sync> {
    pub control: H,
    pub coeff: Complex64,
    pub gamma: f64,
}

impl<H: Fn(f64) -> f64 + Sync> OperatorPath for ScalarLinear<H> {
    fn eval(&self, s: f64, t: f64, x: &[Complex64]) -> Result<Vector> {
        let f = self.coeff * ((self.control)(t) - (self.control)(s));
        Ok(x.iter().map(|v| f * v).collect())
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// `X_{s,t}(x) = (t - s) F(x)`, the integral-derived family of an ODE.
pub struct Autonomous<F: Fn(&[Complex64]) -> Vector + Sync> {
    pub field: F,
}

impl<F: Fn(&[Complex64]) -> Vector + Sync> OperatorPath for Autonomous<F> {
    fn eval(&self, s: f64, t: f64, x: &[Complex64]) -> Result<Vector> {
        Ok((self.field)(x).into_iter().map(|v| v * (t - s)).collect())
    }

    fn gamma(&self) -> f64 {
        1.0
    }
}

/// The zero operator path.
pub struct Zero;

impl OperatorPath for Zero {
    fn eval(&self, _s: f64, _t: f64, x: &[Complex64]) -> Result<Vector> {
        Ok(vec![Complex64::new(0.0, 0.0); x.len()])
    }

    fn gamma(&self) -> f64 {
        1.0
    }
}

/// Path of vectors on an ordered time grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderPath {
    pub grid: Vec<f64>,
    pub nodes: Vec<Vector>,
    pub holder_exponent: f64,
}

impl HolderPath {
    pub fn new(grid: Vec<f64>, nodes: Vec<Vector>, holder_exponent: f64) -> Result<Self> {
        if grid.is_empty() || grid.len() != nodes.len() {
            return Err(YoungError::InvalidArgument(format!(
                "grid has {} times but {} nodes",
                grid.len(),
                nodes.len()
            )));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(YoungError::InvalidArgument("grid is not increasing".into()));
        }
        Ok(Self {
            grid,
            nodes,
            holder_exponent,
        })
    }

    /// Constant path on a uniform grid.
    pub fn constant(x: Vector, t0: f64, t1: f64, steps: usize, holder_exponent: f64) -> Self {
        let grid = uniform_grid(t0, t1, steps);
        let nodes = vec![x; grid.len()];
        Self {
            grid,
            nodes,
            holder_exponent,
        }
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn last(&self) -> &Vector {
        self.nodes.last().unwrap()
    }

    /// Linear interpolation between grid nodes.
    pub fn eval(&self, t: f64) -> Vector {
        let n = self.grid.len();
        if n == 1 || t <= self.grid[0] {
            return self.nodes[0].clone();
        }
        if t >= self.grid[n - 1] {
            return self.nodes[n - 1].clone();
        }
        let j = self.grid.partition_point(|&g| g <= t) - 1;
        let (a, b) = (self.grid[j], self.grid[j + 1]);
        let u = (t - a) / (b - a);
        if u == 0.0 {
            return self.nodes[j].clone();
        }
        self.nodes[j]
            .iter()
            .zip(&self.nodes[j + 1])
            .map(|(x, y)| x + (y - x) * u)
            .collect()
    }

    /// `max ||g_{i+1} - g_i|| / |t_{i+1} - t_i|^exponent` over adjacent nodes.
    pub fn holder_audit(&self, norm: impl Fn(&[Complex64]) -> f64) -> f64 {
        (1..self.grid.len())
            .map(|i| {
                let d: Vector = diff(&self.nodes[i], &self.nodes[i - 1]);
                norm(&d) / (self.grid[i] - self.grid[i - 1]).powf(self.holder_exponent)
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self, norm: impl Fn(&[Complex64]) -> f64) -> f64 {
        self.nodes.iter().map(|x| norm(x)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SewingParams {
    pub max_depth: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of grid cells used by [`picard_solve`] on `[0, T]`.
    pub base_steps: usize,
}

impl Default for SewingParams {
    fn default() -> Self {
        Self {
            max_depth: 16,
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            base_steps: 64,
        }
    }
}

impl SewingParams {
    fn validate(&self) -> Result<()> {
        if self.max_depth < 1 || !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(YoungError::InvalidArgument(format!(
                "invalid sewing parameters {self:?}"
            )));
        }
        if self.base_steps < 1 {
            return Err(YoungError::InvalidArgument(
                "base_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoungIntegral {
    pub value: Vector,
    /// Dyadic level at which the sum stabilized.
    pub depth: usize,
    /// Gap between the last two levels.
    pub gap: f64,
}

/// Left-point Riemann sum of `X` over `[s, t]` split into `pieces` equal parts.
pub fn riemann_sum<X: OperatorPath + ?Sized>(
    x: &X,
    g: &HolderPath,
    s: f64,
    t: f64,
    pieces: usize,
) -> Result<Vector> {
    let h = (t - s) / pieces as f64;
    let terms: Vec<Vector> = (0..pieces)
        .into_par_iter()
        .map(|i| {
            let a = s + i as f64 * h;
            let b = if i + 1 == pieces {
                t
            } else {
                s + (i + 1) as f64 * h
            };
            x.eval(a, b, &g.eval(a))
        })
        .collect::<Result<_>>()?;
    Ok(ordered_sum(&terms, g.nodes[0].len()))
}

fn ordered_sum(terms: &[Vector], dim: usize) -> Vector {
    let mut acc = vec![CompensatedSum::new(); dim];
    for term in terms {
        for (a, v) in acc.iter_mut().zip(term) {
            a.add(*v);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

/// Nonlinear Young integral `∫_s^t X_{du}(g_u)` by dyadic refinement.
pub fn young_integral<X: OperatorPath + ?Sized>(
    x: &X,
    g: &HolderPath,
    s: f64,
    t: f64,
    params: &SewingParams,
) -> Result<YoungIntegral> {
    params.validate()?;
    let total = x.gamma() + g.holder_exponent;
    if total <= 1.0 {
        return Err(YoungError::NotSummable(total));
    }
    check_span(g, s, t)?;
    integrate_dyadic(x, g, s, t, params.max_depth, |v| {
        params.abs_tol + params.rel_tol * x.norm(v)
    })
}

fn check_span(g: &HolderPath, s: f64, t: f64) -> Result<()> {
    let slack = 1e-12 * g.end().abs().max(1.0);
    if s > t || s < g.start() - slack || t > g.end() + slack {
        return Err(YoungError::OutsideGrid {
            s,
            t,
            start: g.start(),
            end: g.end(),
        });
    }
    Ok(())
}

fn integrate_dyadic<X: OperatorPath + ?Sized>(
    x: &X,
    g: &HolderPath,
    s: f64,
    t: f64,
    max_depth: usize,
    tol: impl Fn(&[Complex64]) -> f64,
) -> Result<YoungIntegral> {
    let mut prev = x.eval(s, t, &g.eval(s))?;
    if s == t {
        return Ok(YoungIntegral {
            value: prev,
            depth: 0,
            gap: 0.0,
        });
    }
    let mut gap = f64::INFINITY;
    for depth in 1..=max_depth {
        let next = riemann_sum(x, g, s, t, 1 << depth)?;
        gap = x.norm(&diff(&next, &prev));
        if gap <= tol(&next) {
            return Ok(YoungIntegral {
                value: next,
                depth,
                gap,
            });
        }
        prev = next;
    }
    Err(YoungError::NoStabilization {
        depth: max_depth,
        gap,
    })
}

/// Solve `psi_t = psi_0 + ∫_0^t X_{du}(psi_u)` by Picard iteration on windows
/// of a uniform grid with `params.base_steps` cells.
///
/// Each window starts at the full remaining span and is halved until the
/// measured ratio of successive iterate gaps drops below 1/2.
pub fn picard_solve<X: OperatorPath + ?Sized>(
    x: &X,
    psi0: &[Complex64],
    t_end: f64,
    params: &SewingParams,
    max_iter: usize,
) -> Result<HolderPath> {
    params.validate()?;
    if x.gamma() <= 0.5 {
        return Err(YoungError::NotSummable(x.gamma() + 0.5));
    }
    let n = params.base_steps;
    let grid = uniform_grid(0.0, t_end, n);
    let mut nodes: Vec<Vector> = vec![psi0.to_vec()];
    let mut window = n;
    let mut start = 0;
    while start < n {
        let cells = window.min(n - start);
        match picard_window(
            x,
            &grid[start..=start + cells],
            &nodes[start],
            params,
            max_iter,
        )? {
            Some(path) => {
                if let Some(bad) = path.iter().position(|v| !(x.norm(v) < BLOWUP_NORM)) {
                    return Err(YoungError::Diverged {
                        t: grid[start + bad],
                    });
                }
                nodes.extend(path.into_iter().skip(1));
                start += cells;
            }
            None => {
                if window == 1 {
                    return Err(YoungError::NoContraction { t: grid[start] });
                }
                window /= 2;
            }
        }
    }
    HolderPath::new(grid, nodes, 0.5)
}

/// Picard iteration on one window. `None` means the contraction test failed.
fn picard_window<X: OperatorPath + ?Sized>(
    x: &X,
    grid: &[f64],
    start: &Vector,
    params: &SewingParams,
    max_iter: usize,
) -> Result<Option<Vec<Vector>>> {
    let mut current = vec![start.clone(); grid.len()];
    let mut last_gap = f64::NAN;
    for _ in 0..max_iter {
        let path = HolderPath::new(grid.to_vec(), current.clone(), 0.5)?;
        let next = integrate_along(x, &path, start, params)?;
        let gap = half_seminorm(grid, &next, &current, |v| x.norm(v));
        if !gap.is_finite() {
            return Ok(None);
        }
        if gap < params.abs_tol {
            return Ok(Some(next));
        }
        // ratios are meaningful once two gaps are available
        if last_gap.is_finite() && gap > 0.5 * last_gap {
            return Ok(None);
        }
        last_gap = gap;
        current = next;
    }
    Err(YoungError::MaxIterations(max_iter))
}

/// `start + ∫_{t_0}^{t_k} X_{du}(g_u)` at every node of the path grid.
///
/// All cells are refined together; the dyadic level is increased until the
/// cumulative values at every node move by less than the tolerance.
fn integrate_along<X: OperatorPath + ?Sized>(
    x: &X,
    path: &HolderPath,
    start: &Vector,
    params: &SewingParams,
) -> Result<Vec<Vector>> {
    let mut prev = cumulative(x, path, start, 0)?;
    let mut gap = f64::INFINITY;
    for depth in 1..=params.max_depth {
        let next = cumulative(x, path, start, depth)?;
        gap = 0.0;
        let mut tol = f64::INFINITY;
        for (a, b) in next.iter().zip(&prev) {
            gap = f64::max(gap, x.norm(&diff(a, b)));
            tol = tol.min(params.abs_tol + params.rel_tol * x.norm(a));
        }
        if gap <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(YoungError::NoStabilization {
        depth: params.max_depth,
        gap,
    })
}

fn cumulative<X: OperatorPath + ?Sized>(
    x: &X,
    path: &HolderPath,
    start: &Vector,
    depth: usize,
) -> Result<Vec<Vector>> {
    let pieces = 1usize << depth;
    let cells: Vec<Vector> = (1..path.grid.len())
        .into_par_iter()
        .map(|i| riemann_sum(x, path, path.grid[i - 1], path.grid[i], pieces))
        .collect::<Result<_>>()?;
    let mut acc: Vec<CompensatedSum> = start
        .iter()
        .map(|v| {
            let mut c = CompensatedSum::new();
            c.add(*v);
            c
        })
        .collect();
    let mut out = Vec::with_capacity(path.grid.len());
    out.push(start.clone());
    for cell in cells {
        for (a, v) in acc.iter_mut().zip(&cell) {
            a.add(*v);
        }
        out.push(acc.iter().map(|a| a.value()).collect());
    }
    Ok(out)
}

/// `max_{i<j} ||(a-b)_j - (a-b)_i|| / |t_j - t_i|^{1/2}`, plus the sup of
/// `||a - b||` so that paths differing by a constant are not confused.
fn half_seminorm(
    grid: &[f64],
    a: &[Vector],
    b: &[Vector],
    norm: impl Fn(&[Complex64]) -> f64,
) -> f64 {
    let d: Vec<Vector> = a.iter().zip(b).map(|(x, y)| diff(x, y)).collect();
    let mut best = d.iter().map(|v| norm(v)).fold(0.0, f64::max);
    for j in 1..d.len() {
        for i in 0..j {
            let v = norm(&diff(&d[j], &d[i])) / (grid[j] - grid[i]).sqrt();
            best = best.max(v);
        }
    }
    best
}

/// `max_k ||psi_k - psi_0 - ∫_0^{t_k} X_{du}(psi_u)||` over the path grid.
pub fn picard_residual<X: OperatorPath + ?Sized>(
    x: &X,
    path: &HolderPath,
    params: &SewingParams,
) -> Result<f64> {
    let rebuilt = integrate_along(x, path, &path.nodes[0], params)?;
    Ok(rebuilt
        .iter()
        .zip(&path.nodes)
        .map(|(a, b)| x.norm(&diff(a, b)))
        .fold(0.0, f64::max))
}

/// Explicit Euler scheme `psi_i = psi_{i-1} + X_{t_{i-1}, t_i}(psi_{i-1})`
/// on the grid `i T / n`.
pub fn euler_solve<X: OperatorPath + ?Sized>(
    x: &X,
    psi0: &[Complex64],
    t_end: f64,
    n: usize,
) -> Result<HolderPath> {
    if n < 1 {
        return Err(YoungError::InvalidArgument("n must be >= 1".into()));
    }
    let grid = uniform_grid(0.0, t_end, n);
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(psi0.to_vec());
    for i in 1..=n {
        let prev = &nodes[i - 1];
        let inc = x.eval(grid[i - 1], grid[i], prev)?;
        let next: Vector = prev.iter().zip(&inc).map(|(a, b)| a + b).collect();
        if !(x.norm(&next) < BLOWUP_NORM) {
            return Err(YoungError::Diverged { t: grid[i] });
        }
        nodes.push(next);
    }
    HolderPath::new(grid, nodes, 0.5)
}

/// `n + 1` equispaced times from `t0` to `t1`, endpoints exact.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                t1
            } else {
                t0 + (t1 - t0) * (i as f64 / n as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<(usize, f64)>,
    pub slope: f64,
}

/// Euler errors against an Euler reference at `8 * max(n_list)` steps.
pub fn convergence_study<X: OperatorPath + ?Sized>(
    x: &X,
    psi0: &[Complex64],
    t_end: f64,
    n_list: &[usize],
) -> Result<ConvergenceTable> {
    check_n_list(n_list)?;
    let n_ref = 8 * n_list.last().unwrap();
    let reference = euler_solve(x, psi0, t_end, n_ref)?;
    convergence_rows(x, psi0, t_end, n_list, |k, n| {
        reference.nodes[k * (n_ref / n)].clone()
    })
}

/// Euler errors against an exact solution `t -> psi(t)`.
pub fn convergence_study_exact<X: OperatorPath + ?Sized>(
    x: &X,
    psi0: &[Complex64],
    t_end: f64,
    n_list: &[usize],
    exact: impl Fn(f64) -> Vector + Sync,
) -> Result<ConvergenceTable> {
    check_n_list(n_list)?;
    convergence_rows(x, psi0, t_end, n_list, |k, n| {
        exact(uniform_grid(0.0, t_end, n)[k])
    })
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(YoungError::InvalidArgument(
            "n_list must be ascending with at least 3 entries".into(),
        ));
    }
    let top = 8 * n_list.last().unwrap();
    if n_list.iter().any(|n| top % n != 0) {
        return Err(YoungError::InvalidArgument(
            "every n must divide the reference resolution".into(),
        ));
    }
    Ok(())
}

fn convergence_rows<X: OperatorPath + ?Sized>(
    x: &X,
    psi0: &[Complex64],
    t_end: f64,
    n_list: &[usize],
    reference: impl Fn(usize, usize) -> Vector + Sync,
) -> Result<ConvergenceTable> {
    let rows: Vec<(usize, f64)> = n_list
        .par_iter()
        .map(|&n| {
            let sol = euler_solve(x, psi0, t_end, n)?;
            let err = sol
                .nodes
                .iter()
                .enumerate()
                .map(|(k, v)| x.norm(&diff(v, &reference(k, n))))
                .fold(0.0, f64::max);
            Ok((n, err))
        })
        .collect::<Result<_>>()?;
    let positive: Vec<&(usize, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let slope = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|r| r.0 as f64).collect();
        let ys: Vec<f64> = positive.iter().map(|r| r.1).collect();
        loglog_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(ConvergenceTable { rows, slope })
}

/// `max |‖psi_s + X_{s,t}(psi_s)‖ - ‖psi_s‖| / |t - s|^exponent` over adjacent
/// grid pairs of `path`.
pub fn conservation_check<X: OperatorPath + ?Sized>(
    x: &X,
    path: &HolderPath,
    exponent: f64,
) -> Result<f64> {
    let vals: Vec<f64> = (1..path.grid.len())
        .into_par_iter()
        .map(|i| {
            let (s, t) = (path.grid[i - 1], path.grid[i]);
            let p = &path.nodes[i - 1];
            let inc = x.eval(s, t, p)?;
            let moved: Vector = p.iter().zip(&inc).map(|(a, b)| a + b).collect();
            Ok((x.norm(&moved) - x.norm(p)).abs() / (t - s).powf(exponent))
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Random-probe estimate of the Hölder-Lipschitz constant
/// `‖X_{s,t}(x) - X_{s,t}(y)‖ / (|t-s|^gamma (1+‖x‖+‖y‖)^M ‖x-y‖)`.
///
/// Probe states are complex Gaussians of dimension `dim` scaled to norm
/// `radius`, times are drawn from `[0, t_end]`.
pub fn probe_holder_lipschitz<X: OperatorPath + ?Sized>(
    x: &X,
    dim: usize,
    t_end: f64,
    radius: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vector {
        let v: Vector = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = l2_norm(&v);
        v.into_iter().map(|z| z * (radius / n)).collect()
    };
    let mut best: f64 = 0.0;
    for _ in 0..probes {
        let mut s = rng.random::<f64>() * t_end;
        let mut t = rng.random::<f64>() * t_end;
        if s > t {
            std::mem::swap(&mut s, &mut t);
        }
        if t - s <= 0.0 {
            continue;
        }
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let num = x.norm(&diff(&x.eval(s, t, &a)?, &x.eval(s, t, &b)?));
        let den = (t - s).powf(x.gamma())
            * (1.0 + x.norm(&a) + x.norm(&b)).powi(x.growth() as i32)
            * x.norm(&diff(&a, &b));
        best = best.max(num / den);
    }
    Ok(best)
}

pub(crate) fn diff(a: &[Complex64], b: &[Complex64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
