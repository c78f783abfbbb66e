//! Modulated trilinear operators on the torus in Fourier variables.
//!
//! For the cubic equation the operator is
//!
//! ```text
//! X_{s,t}(p1,p2,p3)^(k) = Σ_{-k1+k2+k3=k} Phi_{s,t}(2 κ² (k-k2)(k-k3)) conj(p1(k1)) p2(k2) p3(k3)
//! ```
//!
//! with `κ = 2π / box_length` and every `|ki| <= N`. The resonant triples
//! (`k2 = k` or `k3 = k`) form the part X¹, the rest X².

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulation::{ModulationError, ModulationPath, PhiCache};
use crate::numeric::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("cutoff mismatch: expected N={expected}, got N={got}")]
    CutoffMismatch { expected: usize, got: usize },
    #[error("box length mismatch: {0} vs {1}")]
    BoxMismatch(f64, f64),
    #[error("dNLS exponent must be positive, got {0}")]
    InvalidTheta(f64),
    #[error("operation requires a {0} operator")]
    WrongKind(&'static str),
    #[error("projection cutoff {l} exceeds state cutoff {n}")]
    InvalidProjection { l: usize, n: usize },
    #[error("cutoff must be >= 1")]
    ZeroCutoff,
    #[error("need {0} coefficients for cutoff N")]
    BadLength(usize),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
}

pub type Result<T> = std::result::Result<T, TorusError>;

/// Fourier coefficients of a field on a torus of length `box_length`,
/// stored for modes `-N..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierState {
    cutoff: usize,
    box_length: f64,
    coeffs: Vec<Complex64>,
}

impl FourierState {
    pub fn zeros(cutoff: usize, box_length: f64) -> Self {
        Self {
            cutoff,
            box_length,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * cutoff + 1],
        }
    }

    pub fn from_coeffs(cutoff: usize, box_length: f64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * cutoff + 1 {
            return Err(TorusError::BadLength(2 * cutoff + 1));
        }
        Ok(Self {
            cutoff,
            box_length,
            coeffs,
        })
    }

    /// State with coefficients `f(k)`.
    pub fn from_fn(cutoff: usize, box_length: f64, f: impl Fn(i64) -> Complex64) -> Self {
        let n = cutoff as i64;
        Self {
            cutoff,
            box_length,
            coeffs: (-n..=n).map(f).collect(),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, k: i64) -> Complex64 {
        let n = self.cutoff as i64;
        if k.abs() > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    pub fn set(&mut self, k: i64, v: Complex64) {
        let n = self.cutoff as i64;
        assert!(k.abs() <= n, "mode {k} outside cutoff {n}");
        self.coeffs[(k + n) as usize] = v;
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.cutoff as i64;
        -n..=n
    }

    /// Frequency `ξ = κ k`.
    pub fn xi(&self, k: i64) -> f64 {
        wavenumber(self.box_length) * k as f64
    }

    /// `(Σ (1+ξ²)^α |c(k)|²)^{1/2}`.
    pub fn h_norm(&self, alpha: f64) -> f64 {
        h_norm(&self.coeffs, self.cutoff, self.box_length, alpha)
    }

    pub fn l2(&self) -> f64 {
        self.h_norm(0.0)
    }

    /// `Σ conj(self(k)) other(k)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Same coefficients embedded at a larger or truncated at a smaller cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        Self::from_fn(cutoff, self.box_length, |k| self.get(k))
    }

    /// Multiply mode `k` by `exp(-i ξ² w)`.
    pub fn propagate(&self, w: f64) -> Self {
        Self::from_fn(self.cutoff, self.box_length, |k| {
            let xi = self.xi(k);
            self.get(k) * Complex64::from_polar(1.0, -xi * xi * w)
        })
    }
}

pub fn wavenumber(box_length: f64) -> f64 {
    2.0 * std::f64::consts::PI / box_length
}

pub(crate) fn h_norm(coeffs: &[Complex64], cutoff: usize, box_length: f64, alpha: f64) -> f64 {
    let kappa = wavenumber(box_length);
    let n = cutoff as i64;
    coeffs
        .iter()
        .zip(-n..=n)
        .map(|(c, k)| {
            let xi = kappa * k as f64;
            (1.0 + xi * xi).powf(alpha) * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EquationKind {
    CubicNls,
    DerivativeNls { theta: f64 },
}

/// Which triples of the cubic sum to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Part {
    #[default]
    Full,
    /// `k2 = k` or `k3 = k` (X¹).
    Resonant,
    /// `k2 != k` and `k3 != k` (X²).
    NonResonant,
}

/// Operator descriptor: equation, cutoff and modulation.
#[derive(Debug, Clone)]
pub struct XOperatorSpec {
    pub kind: EquationKind,
    pub cutoff: usize,
    pub box_length: f64,
    pub modulation: Arc<ModulationPath>,
    /// When present, Phi tables are memoized here.
    pub phi_cache: Option<Arc<PhiCache>>,
}

impl XOperatorSpec {
    pub fn cubic(cutoff: usize, modulation: Arc<ModulationPath>) -> Self {
        Self {
            kind: EquationKind::CubicNls,
            cutoff,
            box_length: 2.0 * std::f64::consts::PI,
            modulation,
            phi_cache: None,
        }
    }

    pub fn dnls(cutoff: usize, theta: f64, modulation: Arc<ModulationPath>) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(TorusError::InvalidTheta(theta));
        }
        Ok(Self {
            kind: EquationKind::DerivativeNls { theta },
            ..Self::cubic(cutoff, modulation)
        })
    }

    pub fn with_cache(mut self) -> Self {
        self.phi_cache = Some(Arc::new(PhiCache::new(&self.modulation)));
        self
    }

    pub fn with_box_length(mut self, box_length: f64) -> Self {
        self.box_length = box_length;
        self
    }

    /// Same operator at another cutoff, sharing the modulation and cache.
    pub fn at_cutoff(&self, cutoff: usize) -> Self {
        Self {
            cutoff,
            ..self.clone()
        }
    }

    fn kappa2(&self) -> f64 {
        let k = wavenumber(self.box_length);
        k * k
    }

    /// `Phi_{s,t}(2 κ² p)` for `p = -N²..=N²`, indexed by `p + N²`.
    ///
    /// `N²` bounds `|(k-k2)(k-k3)|` over admissible triples.
    pub fn phi_table(&self, s: f64, t: f64) -> Result<Vec<Complex64>> {
        let p_max = (self.cutoff * self.cutoff) as i64;
        let freqs: Vec<f64> = (-p_max..=p_max)
            .map(|p| 2.0 * self.kappa2() * p as f64)
            .collect();
        match &self.phi_cache {
            Some(cache) => Ok(cache.phi_many(&self.modulation, s, t, &freqs)?),
            None => freqs
                .iter()
                .map(|&a| self.modulation.phi(s, t, a).map_err(Into::into))
                .collect(),
        }
    }

    fn check(&self, states: &[&FourierState]) -> Result<()> {
        for st in states {
            if st.cutoff != self.cutoff {
                return Err(TorusError::CutoffMismatch {
                    expected: self.cutoff,
                    got: st.cutoff,
                });
            }
            if st.box_length != self.box_length {
                return Err(TorusError::BoxMismatch(self.box_length, st.box_length));
            }
        }
        Ok(())
    }
}

/// Cubic operator `X_{s,t}(psi1, psi2, psi3)` restricted to `part`.
pub fn x_apply(
    spec: &XOperatorSpec,
    s: f64,
    t: f64,
    psi1: &FourierState,
    psi2: &FourierState,
    psi3: &FourierState,
    part: Part,
) -> Result<FourierState> {
    spec.check(&[psi1, psi2, psi3])?;
    let table = spec.phi_table(s, t)?;
    let (res, non) = cubic_sums(spec.cutoff, &table, psi1, psi2, psi3, false);
    let coeffs = match part {
        Part::Full => res.iter().zip(&non).map(|(a, b)| a + b).collect(),
        Part::Resonant => res,
        Part::NonResonant => non,
    };
    FourierState::from_coeffs(spec.cutoff, spec.box_length, coeffs)
}

/// Resonant and non-resonant sums per output mode. With `wick`, triples
/// touching the zero mode are dropped.
fn cubic_sums(
    cutoff: usize,
    table: &[Complex64],
    psi1: &FourierState,
    psi2: &FourierState,
    psi3: &FourierState,
    wick: bool,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = cutoff as i64;
    let p0 = n * n;
    let (a1, a2, a3) = (psi1.coeffs(), psi2.coeffs(), psi3.coeffs());
    let idx = |k: i64| (k + n) as usize;
    let out: Vec<(Complex64, Complex64)> = (-n..=n)
        .into_par_iter()
        .map(|k| {
            let mut res = CompensatedSum::new();
            let mut non = CompensatedSum::new();
            for k2 in -n..=n {
                let c2 = a2[idx(k2)];
                if c2 == Complex64::new(0.0, 0.0) || (wick && k2 == 0) {
                    continue;
                }
                let d1 = k - k2;
                // k1 = k2 + k3 - k must lie in [-n, n]
                let lo = (-n).max(k - k2 - n);
                let hi = n.min(k - k2 + n);
                for k3 in lo..=hi {
                    let k1 = k2 + k3 - k;
                    if wick && (k3 == 0 || k1 == 0) {
                        continue;
                    }
                    let d2 = k - k3;
                    let phi = table[(d1 * d2 + p0) as usize];
                    let term = phi * a1[idx(k1)].conj() * c2 * a3[idx(k3)];
                    if d1 == 0 || d2 == 0 {
                        res.add(term);
                    } else {
                        non.add(term);
                    }
                }
            }
            (res.value(), non.value())
        })
        .collect();
    out.into_iter().unzip()
}

/// `(i k)^theta` on the principal branch.
pub fn ik_power(k: i64, theta: f64) -> Complex64 {
    if k == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let arg = if k > 0 { 0.5 } else { -0.5 } * std::f64::consts::PI * theta;
    Complex64::from_polar((k.abs() as f64).powf(theta), arg)
}

/// Wick-ordered derivative operator: non-resonant triples with no zero
/// mode, times `(i k)^theta`.
pub fn dnls_x_apply(
    spec: &XOperatorSpec,
    s: f64,
    t: f64,
    psi1: &FourierState,
    psi2: &FourierState,
    psi3: &FourierState,
) -> Result<FourierState> {
    let EquationKind::DerivativeNls { theta } = spec.kind else {
        return Err(TorusError::WrongKind("derivative NLS"));
    };
    if !(theta > 0.0) {
        return Err(TorusError::InvalidTheta(theta));
    }
    spec.check(&[psi1, psi2, psi3])?;
    let table = spec.phi_table(s, t)?;
    let (_, non) = cubic_sums(spec.cutoff, &table, psi1, psi2, psi3, true);
    let n = spec.cutoff as i64;
    let coeffs = non
        .into_iter()
        .zip(-n..=n)
        .map(|(v, k)| ik_power(k, theta) * v)
        .collect();
    FourierState::from_coeffs(spec.cutoff, spec.box_length, coeffs)
}

/// Zero all modes `|k| > l`.
pub fn galerkin_project(state: &FourierState, l: usize) -> Result<FourierState> {
    if l > state.cutoff {
        return Err(TorusError::InvalidProjection { l, n: state.cutoff });
    }
    let l = l as i64;
    Ok(FourierState::from_fn(state.cutoff, state.box_length, |k| {
        if k.abs() <= l {
            state.get(k)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `|Im <phi, X_{s,t}(phi, phi, phi)>|` for the cubic operator.
pub fn realness_defect(spec: &XOperatorSpec, s: f64, t: f64, phi: &FourierState) -> Result<f64> {
    if spec.kind != EquationKind::CubicNls {
        return Err(TorusError::WrongKind("cubic NLS"));
    }
    let x = x_apply(spec, s, t, phi, phi, phi, Part::Full)?;
    Ok(phi.inner(&x).im.abs())
}

/// Closed form of the resonant part:
/// `(t-s) (psi2 <psi1,psi3> + psi3 <psi1,psi2> - diag)` where `diag(k)` is
/// the doubly resonant term `conj(psi1(k)) psi2(k) psi3(k)`.
pub fn resonant_closed_form(
    s: f64,
    t: f64,
    psi1: &FourierState,
    psi2: &FourierState,
    psi3: &FourierState,
) -> FourierState {
    let i13 = psi1.inner(psi3);
    let i12 = psi1.inner(psi2);
    FourierState::from_fn(psi1.cutoff, psi1.box_length, |k| {
        let diag = psi1.get(k).conj() * psi2.get(k) * psi3.get(k);
        (psi2.get(k) * i13 + psi3.get(k) * i12 - diag) * (t - s)
    })
}

/// Reference evaluation of the cubic (or Wick-ordered derivative) operator
/// that avoids the triple sum.
///
/// The frame-conjugated nonlinearity `(U_w)^{-1} N(U_w p1, U_w p2, U_w p3)`
/// is a trigonometric polynomial in `θ = 2κ² w` with integer frequencies in
/// `[-N², N²]`. It is sampled at `M >= max(quad_points, 2N²+1)` equispaced
/// phases, the products being formed in physical space by zero-padded FFTs;
/// a discrete Fourier transform in θ recovers each frequency component,
/// which is then integrated exactly against the same interpolated path as
/// `Phi_{s,t}(2κ² p)`.
pub fn x_oracle(
    spec: &XOperatorSpec,
    s: f64,
    t: f64,
    psi1: &FourierState,
    psi2: &FourierState,
    psi3: &FourierState,
    quad_points: usize,
) -> Result<FourierState> {
    spec.check(&[psi1, psi2, psi3])?;
    let n = spec.cutoff as i64;
    let p_max = n * n;
    let m = quad_points.max((2 * p_max + 1) as usize);
    let wick = matches!(spec.kind, EquationKind::DerivativeNls { .. });
    let (q1, q2, q3) = if wick {
        let strip = |p: &FourierState| {
            let mut q = p.clone();
            q.set(0, Complex64::new(0.0, 0.0));
            q
        };
        (strip(psi1), strip(psi2), strip(psi3))
    } else {
        (psi1.clone(), psi2.clone(), psi3.clone())
    };
    let width = 2 * spec.cutoff + 1;
    let samples: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            frame_nonlinearity(&q1, &q2, &q3, theta, wick)
        })
        .collect();
    // per-mode DFT in θ: component p of sample sequence
    let mut comps = vec![vec![Complex64::new(0.0, 0.0); m]; width];
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    for (mode, comp) in comps.iter_mut().enumerate() {
        for (j, sample) in samples.iter().enumerate() {
            comp[j] = sample[mode] / m as f64;
        }
        fft.process(comp);
    }
    let kappa2 = spec.kappa2();
    let phis: Vec<Complex64> = (-p_max..=p_max)
        .map(|p| spec.modulation.phi(s, t, 2.0 * kappa2 * p as f64))
        .collect::<std::result::Result<_, _>>()?;
    let theta_exp = match spec.kind {
        EquationKind::DerivativeNls { theta } => Some(theta),
        EquationKind::CubicNls => None,
    };
    let coeffs = comps
        .iter()
        .zip(-n..=n)
        .map(|(comp, k)| {
            let mut acc = CompensatedSum::new();
            for p in -p_max..=p_max {
                let bin = p.rem_euclid(m as i64) as usize;
                acc.add(comp[bin] * phis[(p + p_max) as usize]);
            }
            match theta_exp {
                Some(th) => ik_power(k, th) * acc.value(),
                None => acc.value(),
            }
        })
        .collect();
    FourierState::from_coeffs(spec.cutoff, spec.box_length, coeffs)
}

/// Modes `-N..=N` of `(U)^{-1} N(U p1, U p2, U p3)` where `U` multiplies
/// mode `k` by `exp(-i k² θ / 2)` (so that `θ = 2κ² w`).
fn frame_nonlinearity(
    p1: &FourierState,
    p2: &FourierState,
    p3: &FourierState,
    theta: f64,
    wick: bool,
) -> Vec<Complex64> {
    let n = p1.cutoff as i64;
    let rot = |k: i64| Complex64::from_polar(1.0, -0.5 * theta * (k * k) as f64);
    let u = |p: &FourierState| FourierState::from_fn(p.cutoff, p.box_length, |k| p.get(k) * rot(k));
    let (u1, u2, u3) = (u(p1), u(p2), u(p3));
    let mut prod = padded_product(&u1, &u2, &u3);
    if wick {
        // remove triples with k2 = k or k3 = k, restoring the doubly resonant one
        let i13 = u1.inner(&u3);
        let i12 = u1.inner(&u2);
        for (k, v) in (-n..=n).zip(prod.iter_mut()) {
            let diag = u1.get(k).conj() * u2.get(k) * u3.get(k);
            *v -= u2.get(k) * i13 + u3.get(k) * i12 - diag;
        }
    }
    (-n..=n).zip(prod).map(|(k, v)| v * rot(k).conj()).collect()
}

/// Modes `-N..=N` of `conj(f1) f2 f3` computed on an alias-free grid.
fn padded_product(p1: &FourierState, p2: &FourierState, p3: &FourierState) -> Vec<Complex64> {
    let n = p1.cutoff as i64;
    let size = (4 * p1.cutoff + 2).next_power_of_two();
    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(size);
    let fwd = planner.plan_fft_forward(size);
    let to_grid = |p: &FourierState| {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for k in -n..=n {
            buf[k.rem_euclid(size as i64) as usize] = p.get(k);
        }
        inv.process(&mut buf);
        buf
    };
    let (f1, f2, f3) = (to_grid(p1), to_grid(p2), to_grid(p3));
    let mut prod: Vec<Complex64> = f1
        .iter()
        .zip(&f2)
        .zip(&f3)
        .map(|((a, b), c)| a.conj() * b * c / size as f64)
        .collect();
    fwd.process(&mut prod);
    (-n..=n)
        .map(|k| prod[k.rem_euclid(size as i64) as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::{gen_fbm, gen_linear};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn linear_spec(n: usize) -> XOperatorSpec {
        XOperatorSpec::cubic(n, Arc::new(gen_linear(1.0, 65, 1.0 / 64.0).unwrap()))
    }

    #[test]
    fn empty_interval_gives_zero() {
        let spec = linear_spec(3);
        let p = FourierState::from_fn(3, spec.box_length, |k| c(1.0 / (1 + k * k) as f64, 0.2));
        let x = x_apply(&spec, 0.3, 0.3, &p, &p, &p, Part::Full).unwrap();
        assert!(x.coeffs().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn constants_only_hit_zero_mode() {
        let spec = linear_spec(1);
        let delta = |v: Complex64| {
            FourierState::from_fn(
                1,
                spec.box_length,
                move |k| if k == 0 { v } else { c(0.0, 0.0) },
            )
        };
        let (c1, c2, c3) = (c(1.0, 2.0), c(-0.5, 0.3), c(0.7, -1.1));
        let x = x_apply(
            &spec,
            0.1,
            0.6,
            &delta(c1),
            &delta(c2),
            &delta(c3),
            Part::Full,
        )
        .unwrap();
        let expect = c1.conj() * c2 * c3 * 0.5;
        assert!((x.get(0) - expect).norm() < 1e-15);
        assert_eq!(x.get(1), c(0.0, 0.0));
        assert_eq!(x.get(-1), c(0.0, 0.0));
    }

    #[test]
    fn parts_add_up_exactly() {
        let w = Arc::new(gen_fbm(0.4, 257, 1.0 / 256.0, 3).unwrap());
        let spec = XOperatorSpec::cubic(5, w);
        let p = FourierState::from_fn(5, spec.box_length, |k| {
            c((k as f64).sin(), (k as f64 * 0.3).cos())
        });
        let full = x_apply(&spec, 0.2, 0.7, &p, &p, &p, Part::Full).unwrap();
        let r = x_apply(&spec, 0.2, 0.7, &p, &p, &p, Part::Resonant).unwrap();
        let nr = x_apply(&spec, 0.2, 0.7, &p, &p, &p, Part::NonResonant).unwrap();
        assert_eq!(full, r.add(&nr));
    }

    #[test]
    fn cutoff_mismatch_is_rejected() {
        let spec = linear_spec(3);
        let a = FourierState::zeros(3, spec.box_length);
        let b = FourierState::zeros(4, spec.box_length);
        assert!(matches!(
            x_apply(&spec, 0.0, 0.5, &a, &b, &a, Part::Full),
            Err(TorusError::CutoffMismatch { .. })
        ));
    }

    #[test]
    fn ik_power_branch() {
        assert!((ik_power(2, 1.0) - c(0.0, 2.0)).norm() < 1e-15);
        assert!((ik_power(-2, 1.0) - c(0.0, -2.0)).norm() < 1e-15);
        let h = ik_power(-4, 0.5);
        assert!((h - Complex64::from_polar(2.0, -std::f64::consts::FRAC_PI_4)).norm() < 1e-15);
        assert_eq!(ik_power(0, 0.5), c(0.0, 0.0));
    }

    #[test]
    fn dnls_rejects_cubic_spec_and_bad_theta() {
        let spec = linear_spec(2);
        let p = FourierState::zeros(2, spec.box_length);
        assert!(dnls_x_apply(&spec, 0.0, 0.1, &p, &p, &p).is_err());
        assert!(XOperatorSpec::dnls(2, 0.0, spec.modulation.clone()).is_err());
    }

    #[test]
    fn galerkin_projection_basics() {
        let p = FourierState::from_fn(4, 1.0, |k| c(k as f64, 1.0));
        assert_eq!(galerkin_project(&p, 4).unwrap(), p);
        let z = galerkin_project(&p, 0).unwrap();
        assert!(z.modes().all(|k| k == 0 || z.get(k) == c(0.0, 0.0)));
        assert!(galerkin_project(&p, 5).is_err());
    }

    #[test]
    fn single_mode_inner_product_is_real() {
        let spec = XOperatorSpec::cubic(4, Arc::new(gen_fbm(0.5, 129, 1.0 / 128.0, 8).unwrap()));
        let p = FourierState::from_fn(4, spec.box_length, |k| {
            if k == 2 {
                c(0.6, -0.8)
            } else {
                c(0.0, 0.0)
            }
        });
        let x = x_apply(&spec, 0.1, 0.9, &p, &p, &p, Part::Full).unwrap();
        let ip = p.inner(&x);
        assert_eq!(ip.im, 0.0);
        assert!((ip.re - 0.8).abs() < 1e-14);
    }

    #[test]
    fn padded_product_matches_direct_convolution() {
        let p = FourierState::from_fn(3, 1.0, |k| c(1.0 + k as f64, 0.5 * k as f64));
        let prod = padded_product(&p, &p, &p);
        for (k, v) in (-3..=3).zip(&prod) {
            let mut direct = c(0.0, 0.0);
            for k2 in -3i64..=3 {
                for k3 in -3i64..=3 {
                    let k1 = k2 + k3 - k;
                    direct += p.get(k1).conj() * p.get(k2) * p.get(k3);
                }
            }
            assert!((v - direct).norm() < 1e-10, "{k}: {v} vs {direct}");
        }
    }

    #[test]
    fn propagate_is_isometric() {
        let p = FourierState::from_fn(5, 3.0, |k| c(1.0 / (1.0 + (k * k) as f64), 0.1));
        let q = p.propagate(0.37);
        for a in [0.0, 0.5, 1.0] {
            assert!((p.h_norm(a) - q.h_norm(a)).abs() < 1e-14);
        }
    }
}
