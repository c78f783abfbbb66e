//! Modulation paths and their oscillatory occupation transform.
//!
//! A [`ModulationPath`] is a uniformly sampled real signal `w` that is
//! evaluated by piecewise-linear interpolation. Because the interpolant is
//! linear on each segment, the occupation transform
//!
//! ```text
//! Phi_{s,t}(a) = ∫_s^t exp(i a w(r)) dr
//! ```
//!
//! has a closed form per segment, so [`ModulationPath::phi`] is exact up to
//! rounding. [`irregularity_norm`] scans a finite frequency grid and strided
//! time pairs to produce a lower estimate of the `(rho, gamma)`-irregularity
//! norm `sup_a sup_{s<t} (1+|a|)^rho |Phi_{s,t}(a)| / |t-s|^gamma`.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this phase increment the segment integral switches to its Taylor
/// expansion.
pub const TAYLOR_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulationError {
    #[error("hurst index must lie in (0,1), got {0}")]
    InvalidHurst(f64),
    #[error("a path needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("time {t} outside path span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },
    #[error("interval [{s}, {t}] is reversed")]
    ReversedInterval { s: f64, t: f64 },
    #[error("circulant embedding and Cholesky factorization both failed: {0}")]
    EmbeddingFailed(String),
    #[error("rho must be >= 0 and gamma in (0,1], got rho={rho}, gamma={gamma}")]
    InvalidExponents { rho: f64, gamma: f64 },
    #[error("frequency grid is empty")]
    EmptyFrequencyGrid,
    #[error("pair stride must be >= 1")]
    InvalidStride,
    #[error("cache belongs to path {cache} but was used with path {path}")]
    CacheMismatch { cache: u64, path: u64 },
}

pub type Result<T> = std::result::Result<T, ModulationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
}

/// Uniformly sampled modulation signal. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationPath {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    #[serde(default)]
    interp: Interpolation,
    pub label: String,
    pub seed: Option<u64>,
    pub hurst: Option<f64>,
}

impl ModulationPath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() < 2 {
            return Err(ModulationError::TooFewSamples(values.len()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ModulationError::InvalidStep(dt));
        }
        Ok(Self {
            t0,
            dt,
            values,
            interp: Interpolation::PiecewiseLinear,
            label: label.into(),
            seed: None,
            hurst: None,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    /// Time of grid node `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Content fingerprint; two paths with identical samples share an id.
    pub fn id(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.t0.to_bits().hash(&mut h);
        self.dt.to_bits().hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let end = self.end();
        // allow a few ulps of slack at the right end, grids are built by multiplication
        let slack = 4.0 * f64::EPSILON * end.abs().max(1.0);
        if !(t >= self.t0 - slack && t <= end + slack) {
            return Err(ModulationError::OutsideSpan {
                t,
                start: self.t0,
                end,
            });
        }
        Ok(())
    }

    /// Index of the segment `[time(j), time(j+1)]` containing `t`.
    fn segment(&self, t: f64) -> usize {
        let x = ((t - self.t0) / self.dt).floor();
        (x.max(0.0) as usize).min(self.values.len() - 2)
    }

    fn slope(&self, j: usize) -> f64 {
        (self.values[j + 1] - self.values[j]) / self.dt
    }

    /// Linear interpolation; errors outside the span.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        let j = self.segment(t);
        let u = (t - self.time(j)) / self.dt;
        self.values[j] + u * (self.values[j + 1] - self.values[j])
    }

    /// Exact `∫_s^t exp(i a w(r)) dr` for the piecewise-linear interpolant.
    pub fn phi(&self, s: f64, t: f64, a: f64) -> Result<Complex64> {
        if t < s {
            return Err(ModulationError::ReversedInterval { s, t });
        }
        self.check_time(s)?;
        self.check_time(t)?;
        Ok(self.phi_unchecked(s, t, a))
    }

    fn phi_unchecked(&self, s: f64, t: f64, a: f64) -> Complex64 {
        if t == s {
            return Complex64::new(0.0, 0.0);
        }
        if a == 0.0 {
            return Complex64::new(t - s, 0.0);
        }
        let first = self.segment(s);
        let last = self.segment(t);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in first..=last {
            let u = s.max(self.time(j));
            let v = if j + 1 == self.values.len() - 1 {
                t
            } else {
                t.min(self.time(j + 1))
            };
            if v <= u {
                continue;
            }
            let wu = self.values[j] + (u - self.time(j)) * self.slope(j);
            acc += segment_integral(a, wu, self.slope(j), v - u);
        }
        acc
    }

    /// Same samples shifted by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out.label = format!("{}+{c}", self.label);
        out
    }

    /// Moving average over a centred window of `width` (in time units),
    /// truncated at the ends of the span.
    pub fn mollified(&self, width: f64) -> Self {
        let half = (0.5 * width / self.dt).round() as usize;
        if half == 0 {
            return self.clone();
        }
        let n = self.values.len();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + self.values[i];
        }
        let values = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(n - 1);
                (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
            })
            .collect();
        Self {
            values,
            label: format!("{}~{width}", self.label),
            ..self.clone()
        }
    }

    /// `sup_i |w_i - other_i|` over the shared grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `∫_0^len exp(i a (w + m r)) dr`.
#[inline]
pub(crate) fn segment_integral(a: f64, w: f64, m: f64, len: f64) -> Complex64 {
    let theta = a * m * len;
    Complex64::from_polar(1.0, a * w) * expm1_ratio(theta, theta.abs() < TAYLOR_THRESHOLD) * len
}

/// `(e^{i theta} - 1) / (i theta)`, by its 4-term Taylor expansion or in closed form.
#[inline]
fn expm1_ratio(theta: f64, taylor: bool) -> Complex64 {
    if taylor {
        let t2 = theta * theta;
        Complex64::new(1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let sh = (0.5 * theta).sin();
        Complex64::new(theta.sin() / theta, 2.0 * sh * sh / theta)
    }
}

/// Fractional Brownian motion sampled on `n` nodes with spacing `dt`,
/// started at zero. Increments are drawn by circulant embedding of the
/// stationary increment covariance, with a dense Cholesky fallback.
pub fn gen_fbm(hurst: f64, n: usize, dt: f64, seed: u64) -> Result<ModulationPath> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(ModulationError::InvalidHurst(hurst));
    }
    if n < 2 {
        return Err(ModulationError::TooFewSamples(n));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ModulationError::InvalidStep(dt));
    }
    let m = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acov = |k: usize| fgn_autocovariance(hurst, k);
    let noise = sample_stationary_gaussian(&acov, m, &mut rng, false)?;
    let scale = dt.powf(hurst);
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    let mut w = 0.0;
    for z in noise {
        w += scale * z;
        values.push(w);
    }
    let mut path = ModulationPath::new(0.0, dt, values, format!("fbm(H={hurst})"))?;
    path.seed = Some(seed);
    path.hurst = Some(hurst);
    Ok(path)
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) + (k - 1.0).abs().powf(h2) - 2.0 * k.powf(h2))
}

/// Draw `m` samples of a stationary Gaussian sequence with autocovariance
/// `acov(lag)`.
pub(crate) fn sample_stationary_gaussian(
    acov: &dyn Fn(usize) -> f64,
    m: usize,
    rng: &mut ChaCha8Rng,
    force_cholesky: bool,
) -> Result<Vec<f64>> {
    if !force_cholesky {
        if let Some(eigs) = circulant_eigenvalues(acov, m) {
            let len = eigs.len();
            let mut buf: Vec<Complex64> = eigs
                .iter()
                .map(|&lam| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im) * (lam / len as f64).sqrt()
                })
                .collect();
            FftPlanner::new().plan_fft_forward(len).process(&mut buf);
            return Ok(buf[..m].iter().map(|z| z.re).collect());
        }
    }
    cholesky_sample(acov, m, rng)
}

/// Eigenvalues of the minimal power-of-two circulant embedding, or `None`
/// when the embedding is not nonnegative definite.
fn circulant_eigenvalues(acov: &dyn Fn(usize) -> f64, m: usize) -> Option<Vec<f64>> {
    let half = m.next_power_of_two().max(1);
    let len = 2 * half;
    let mut row: Vec<Complex64> = (0..len)
        .map(|k| Complex64::new(acov(if k <= half { k } else { len - k }), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut row);
    let max = row.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let tol = 1e-10 * max.abs().max(1.0);
    if row.iter().any(|z| z.re < -tol) {
        return None;
    }
    Some(row.iter().map(|z| z.re.max(0.0)).collect())
}

fn cholesky_sample(
    acov: &dyn Fn(usize) -> f64,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(m, m, |i, j| acov(i.abs_diff(j)));
    let chol = cov.cholesky().ok_or_else(|| {
        ModulationError::EmbeddingFailed("covariance is not positive definite".into())
    })?;
    let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    let x = chol.l() * z;
    Ok(x.iter().copied().collect())
}

/// `w(t) = slope (t - t0)` on `n` nodes starting at `t0 = 0`.
pub fn gen_linear(slope: f64, n: usize, dt: f64) -> Result<ModulationPath> {
    if n < 2 {
        return Err(ModulationError::TooFewSamples(n));
    }
    let values = (0..n).map(|i| slope * (i as f64 * dt)).collect();
    ModulationPath::new(0.0, dt, values, format!("linear({slope})"))
}

type PhiKey = (u64, u64, u64);

/// Memo of `Phi_{s,t}(a)` values for one path. Reads are concurrent.
#[derive(Debug)]
pub struct PhiCache {
    path_id: u64,
    entries: RwLock<HashMap<PhiKey, Complex64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl PhiCache {
    pub fn new(path: &ModulationPath) -> Self {
        Self {
            path_id: path.id(),
            entries: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, s: f64, t: f64, a: f64) -> Option<Complex64> {
        self.entries
            .read()
            .unwrap()
            .get(&(s.to_bits(), t.to_bits(), a.to_bits()))
            .copied()
    }

    /// Fraction of lookups served from the memo.
    pub fn hit_rate(&self) -> f64 {
        let h = self.hits.load(Ordering::Relaxed) as f64;
        let m = self.misses.load(Ordering::Relaxed) as f64;
        if h + m == 0.0 {
            0.0
        } else {
            h / (h + m)
        }
    }

    pub fn clear(&self) {
        self.entries.write().unwrap().clear();
    }

    /// Look up many frequencies for one interval, computing and storing the
    /// missing ones under a single write lock.
    pub fn phi_many(
        &self,
        path: &ModulationPath,
        s: f64,
        t: f64,
        freqs: &[f64],
    ) -> Result<Vec<Complex64>> {
        self.check(path)?;
        if t < s {
            return Err(ModulationError::ReversedInterval { s, t });
        }
        path.check_time(s)?;
        path.check_time(t)?;
        let (sb, tb) = (s.to_bits(), t.to_bits());
        let mut out = Vec::with_capacity(freqs.len());
        let mut missing = Vec::new();
        {
            let map = self.entries.read().unwrap();
            for (i, &a) in freqs.iter().enumerate() {
                match map.get(&(sb, tb, a.to_bits())) {
                    Some(v) => out.push(*v),
                    None => {
                        out.push(Complex64::new(0.0, 0.0));
                        missing.push(i);
                    }
                }
            }
        }
        self.hits
            .fetch_add((freqs.len() - missing.len()) as u64, Ordering::Relaxed);
        self.misses
            .fetch_add(missing.len() as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            for &i in &missing {
                out[i] = path.phi_unchecked(s, t, freqs[i]);
            }
            let mut map = self.entries.write().unwrap();
            for &i in &missing {
                map.insert((sb, tb, freqs[i].to_bits()), out[i]);
            }
        }
        Ok(out)
    }

    fn check(&self, path: &ModulationPath) -> Result<()> {
        let id = path.id();
        if id != self.path_id {
            return Err(ModulationError::CacheMismatch {
                cache: self.path_id,
                path: id,
            });
        }
        Ok(())
    }
}

/// Cached `Phi_{s,t}(a)`.
pub fn phi(path: &ModulationPath, s: f64, t: f64, a: f64, cache: &PhiCache) -> Result<Complex64> {
    Ok(cache.phi_many(path, s, t, &[a])?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularityEstimate {
    pub rho: f64,
    pub gamma: f64,
    /// Maximum of the scanned ratios; a lower bound of the true norm.
    pub norm_estimate: f64,
    pub a_grid_max: f64,
    pub pair_count: usize,
    /// `(a, s, t)` attaining the maximum.
    pub argmax: (f64, f64, f64),
}

/// Grid estimate of the `(rho, gamma)`-irregularity norm.
///
/// Pairs `(s, t)` range over grid nodes whose indices are multiples of
/// `pair_stride`. Interval transforms are differences of prefix sums along
/// the strided nodes.
pub fn irregularity_norm(
    path: &ModulationPath,
    rho: f64,
    gamma: f64,
    a_grid: &[f64],
    pair_stride: usize,
) -> Result<IrregularityEstimate> {
    if !(rho >= 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(ModulationError::InvalidExponents { rho, gamma });
    }
    if a_grid.is_empty() {
        return Err(ModulationError::EmptyFrequencyGrid);
    }
    if pair_stride == 0 {
        return Err(ModulationError::InvalidStride);
    }
    let nodes: Vec<usize> = (0..path.len()).step_by(pair_stride).collect();
    let k = nodes.len();
    let lag_time: Vec<f64> = (0..k).map(|l| (l * pair_stride) as f64 * path.dt).collect();
    let lag_weight: Vec<f64> = lag_time
        .iter()
        .map(|&h| if h > 0.0 { h.powf(-gamma) } else { 0.0 })
        .collect();
    let lag_weight_sq: Vec<f64> = lag_weight.iter().map(|w| w * w).collect();

    let per_a: Vec<(f64, usize, usize)> = a_grid
        .par_iter()
        .map(|&a| {
            let amp = (1.0 + a.abs()).powf(rho);
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            if a == 0.0 {
                for lag in 1..k {
                    let v = amp * lag_time[lag].powf(1.0 - gamma);
                    if v > best.0 {
                        best = (v, 0, lag);
                    }
                }
                return best;
            }
            let mut prefix = Vec::with_capacity(k);
            prefix.push(Complex64::new(0.0, 0.0));
            let mut acc = Complex64::new(0.0, 0.0);
            for win in nodes.windows(2) {
                for j in win[0]..win[1] {
                    acc += segment_integral(a, path.values[j], path.slope(j), path.dt);
                }
                prefix.push(acc);
            }
            // compare squared magnitudes; one square root at the end
            let mut best_sq = (f64::NEG_INFINITY, 0usize, 0usize);
            for i in 0..k {
                let p = prefix[i];
                for j in (i + 1)..k {
                    let v = (prefix[j] - p).norm_sqr() * lag_weight_sq[j - i];
                    if v > best_sq.0 {
                        best_sq = (v, i, j);
                    }
                }
            }
            if best_sq.0 < 0.0 {
                return best;
            }
            (amp * best_sq.0.sqrt(), best_sq.1, best_sq.2)
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, 0usize);
    for (idx, (v, _, _)) in per_a.iter().enumerate() {
        if *v > best.0 {
            best = (*v, idx);
        }
    }
    let (value, i, j) = per_a[best.1];
    let a_grid_max = a_grid.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    Ok(IrregularityEstimate {
        rho,
        gamma,
        norm_estimate: value.max(0.0),
        a_grid_max,
        pair_count: k * (k - 1) / 2,
        argmax: (a_grid[best.1], path.time(nodes[i]), path.time(nodes[j])),
    })
}

/// Symmetric uniform grid of `points` frequencies on `[-amax, amax]`.
pub fn symmetric_grid(amax: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -amax + 2.0 * amax * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_values() {
        let p = gen_linear(2.0, 5, 0.5).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn evaluation_outside_span_errors() {
        let p = gen_linear(1.0, 3, 1.0).unwrap();
        assert!(p.eval(2.5).is_err());
        assert!(p.eval(-0.1).is_err());
        assert!((p.eval(1.25).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn phi_zero_frequency_is_length() {
        let p = gen_fbm(0.3, 64, 1.0 / 63.0, 3).unwrap();
        let v = p.phi(0.1, 0.7, 0.0).unwrap();
        assert_eq!(v, Complex64::new(0.7 - 0.1, 0.0));
    }

    #[test]
    fn phi_unit_slope_at_pi() {
        let p = gen_linear(1.0, 2, 1.0).unwrap();
        let v = p.phi(0.0, 1.0, std::f64::consts::PI).unwrap();
        let expect = Complex64::new(0.0, 2.0 / std::f64::consts::PI);
        assert!((v - expect).norm() < 1e-15);
    }

    #[test]
    fn phi_constant_path() {
        let p = gen_linear(0.0, 10, 0.1).unwrap();
        let v = p.phi(0.2, 0.65, 3.0).unwrap();
        assert!((v - Complex64::new(0.45, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phi_rejects_bad_intervals() {
        let p = gen_linear(1.0, 5, 0.25).unwrap();
        assert!(matches!(
            p.phi(0.5, 0.2, 1.0),
            Err(ModulationError::ReversedInterval { .. })
        ));
        assert!(matches!(
            p.phi(0.5, 1.2, 1.0),
            Err(ModulationError::OutsideSpan { .. })
        ));
    }

    #[test]
    fn taylor_branch_is_continuous() {
        for theta in [0.99 * TAYLOR_THRESHOLD, -0.5 * TAYLOR_THRESHOLD, 1e-6] {
            let d = expm1_ratio(theta, true) - expm1_ratio(theta, false);
            assert!(d.norm() < 1e-12, "{theta}: {d}");
        }
    }

    #[test]
    fn fbm_starts_at_zero_with_one_increment() {
        let p = gen_fbm(0.7, 2, 0.5, 11).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.values()[0], 0.0);
        assert!(p.values()[1] != 0.0);
    }

    #[test]
    fn fbm_rejects_bad_input() {
        assert_eq!(
            gen_fbm(1.0, 10, 0.1, 0),
            Err(ModulationError::InvalidHurst(1.0))
        );
        assert_eq!(
            gen_fbm(0.0, 10, 0.1, 0),
            Err(ModulationError::InvalidHurst(0.0))
        );
        assert_eq!(
            gen_fbm(0.5, 1, 0.1, 0),
            Err(ModulationError::TooFewSamples(1))
        );
    }

    #[test]
    fn fbm_is_reproducible() {
        let a = gen_fbm(0.4, 100, 0.01, 42).unwrap();
        let b = gen_fbm(0.4, 100, 0.01, 42).unwrap();
        let c = gen_fbm(0.4, 100, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn cholesky_fallback_matches_covariance() {
        // same covariance through the forced fallback: empirical lag-1 correlation
        let h = 0.8;
        let acov = |k: usize| fgn_autocovariance(h, k);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 20_000;
        let (mut c0, mut c1) = (0.0, 0.0);
        for _ in 0..reps {
            let x = sample_stationary_gaussian(&acov, 4, &mut rng, true).unwrap();
            c0 += x[0] * x[0];
            c1 += x[0] * x[1];
        }
        c0 /= reps as f64;
        c1 /= reps as f64;
        assert!((c0 - 1.0).abs() < 0.05, "{c0}");
        assert!((c1 - acov(1)).abs() < 0.05, "{c1} vs {}", acov(1));
    }

    #[test]
    fn cholesky_failure_is_reported() {
        // not a covariance: lag-1 exceeds lag-0
        let acov = |k: usize| [1.0, 2.0, 0.0][k];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_stationary_gaussian(&acov, 2, &mut rng, true),
            Err(ModulationError::EmbeddingFailed(_))
        ));
    }

    #[test]
    fn cache_hits_and_mismatch() {
        let p = gen_fbm(0.5, 33, 1.0 / 32.0, 1).unwrap();
        let q = gen_fbm(0.5, 33, 1.0 / 32.0, 2).unwrap();
        let cache = PhiCache::new(&p);
        let v1 = phi(&p, 0.1, 0.5, 3.0, &cache).unwrap();
        let v2 = phi(&p, 0.1, 0.5, 3.0, &cache).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1, p.phi(0.1, 0.5, 3.0).unwrap());
        assert_eq!(cache.len(), 1);
        assert!((cache.hit_rate() - 0.5).abs() < 1e-12);
        assert!(matches!(
            phi(&q, 0.1, 0.5, 3.0, &cache),
            Err(ModulationError::CacheMismatch { .. })
        ));
    }

    #[test]
    fn irregularity_with_zero_frequency_is_one() {
        let p = gen_fbm(0.5, 65, 1.0 / 64.0, 9).unwrap();
        let est = irregularity_norm(&p, 0.0, 1.0, &[0.0, 2.0, -5.0], 1).unwrap();
        assert_eq!(est.norm_estimate, 1.0);
        let est = irregularity_norm(&p, 0.0, 1.0, &[2.0, -5.0, 40.0], 2).unwrap();
        assert!(est.norm_estimate <= 1.0 + 1e-12);
    }

    #[test]
    fn irregularity_rejects_bad_arguments() {
        let p = gen_linear(1.0, 9, 0.125).unwrap();
        assert!(irregularity_norm(&p, -0.1, 0.5, &[1.0], 1).is_err());
        assert!(irregularity_norm(&p, 0.5, 0.0, &[1.0], 1).is_err());
        assert!(irregularity_norm(&p, 0.5, 1.5, &[1.0], 1).is_err());
        assert!(irregularity_norm(&p, 0.5, 0.5, &[], 1).is_err());
        assert!(irregularity_norm(&p, 0.5, 0.5, &[1.0], 0).is_err());
    }

    #[test]
    fn mollified_path_is_close_and_smoother() {
        let p = gen_fbm(0.5, 257, 1.0 / 256.0, 4).unwrap();
        let m = p.mollified(1.0 / 16.0);
        assert!(p.sup_distance(&m) > 0.0);
        let tv = |q: &ModulationPath| {
            q.values()
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .sum::<f64>()
        };
        assert!(tv(&m) < tv(&p));
        assert_eq!(p.mollified(0.0).values(), p.values());
    }
}
