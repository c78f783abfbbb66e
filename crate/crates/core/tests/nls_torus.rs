use std::sync::Arc;

use modnls::modulation::{gen_fbm, gen_linear, ModulationPath};
use modnls::nls_torus::*;
use modnls::numeric::l2_distance;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_state(n: usize, box_length: f64, rng: &mut ChaCha8Rng) -> FourierState {
    let coeffs: Vec<Complex64> = (0..2 * n + 1)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let s = FourierState::from_coeffs(n, box_length, coeffs).unwrap();
    let norm = s.l2();
    s.scaled(Complex64::new(1.0 / norm, 0.0))
}

fn rel_err(a: &FourierState, b: &FourierState) -> f64 {
    l2_distance(a.coeffs(), b.coeffs()) / b.l2().max(1e-300)
}

#[test]
fn apply_matches_phase_oracle_on_fbm() {
    let w = Arc::new(gen_fbm(0.4, 1025, 1.0 / 1024.0, 17).unwrap());
    let spec = XOperatorSpec::cubic(8, w);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let (a, b, c) = (
            random_state(8, spec.box_length, &mut rng),
            random_state(8, spec.box_length, &mut rng),
            random_state(8, spec.box_length, &mut rng),
        );
        let x = x_apply(&spec, 0.13, 0.71, &a, &b, &c, Part::Full).unwrap();
        let o = x_oracle(&spec, 0.13, 0.71, &a, &b, &c, 256).unwrap();
        assert!(rel_err(&x, &o) < 1e-10, "{}", rel_err(&x, &o));
    }
}

#[test]
fn dnls_matches_wick_oracle() {
    let w = Arc::new(gen_fbm(0.4, 1025, 1.0 / 1024.0, 5).unwrap());
    let spec = XOperatorSpec::dnls(8, 0.5, w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (a, b, c) = (
            random_state(8, spec.box_length, &mut rng),
            random_state(8, spec.box_length, &mut rng),
            random_state(8, spec.box_length, &mut rng),
        );
        let x = dnls_x_apply(&spec, 0.2, 0.9, &a, &b, &c).unwrap();
        let o = x_oracle(&spec, 0.2, 0.9, &a, &b, &c, 256).unwrap();
        assert!(rel_err(&x, &o) < 1e-10, "{}", rel_err(&x, &o));
    }
}

fn fbm(seed: u64) -> Arc<ModulationPath> {
    Arc::new(gen_fbm(0.4, 1025, 1.0 / 1024.0, seed).unwrap())
}

#[test]
fn zero_modes_give_fully_resonant_product() {
    let spec = XOperatorSpec::cubic(1, fbm(1));
    let mk = |c: Complex64| FourierState::from_fn(1, spec.box_length, |k| if k == 0 { c } else { Complex64::new(0.0, 0.0) });
    let (c1, c2, c3) = (Complex64::new(0.3, -0.2), Complex64::new(1.1, 0.4), Complex64::new(-0.5, 0.9));
    let x = x_apply(&spec, 0.2, 0.65, &mk(c1), &mk(c2), &mk(c3), Part::Full).unwrap();
    let expected = c1.conj() * c2 * c3 * 0.45;
    assert!((x.get(0) - expected).norm() < 1e-15);
    assert_eq!(x.get(1), Complex64::new(0.0, 0.0));
    assert_eq!(x.get(-1), Complex64::new(0.0, 0.0));
}

#[test]
fn empty_interval_gives_zero() {
    let spec = XOperatorSpec::cubic(4, fbm(2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_state(4, spec.box_length, &mut rng);
    let x = x_apply(&spec, 0.4, 0.4, &a, &a, &a, Part::Full).unwrap();
    assert!(x.coeffs().iter().all(|c| c.norm() == 0.0));
}

#[test]
fn linear_modulation_matches_closed_form_kernel() {
    let n = 4i64;
    let w = Arc::new(gen_linear(1.0, 65, 1.0 / 64.0).unwrap());
    let spec = XOperatorSpec::cubic(4, w);
    let psi = FourierState::from_fn(4, spec.box_length, |k| Complex64::new(1.0 / (1.0 + (k * k) as f64), 0.0));
    let (s, t) = (0.1, 0.8);
    let x = x_apply(&spec, s, t, &psi, &psi, &psi, Part::Full).unwrap();
    let kernel = |xi: f64| {
        if xi == 0.0 {
            Complex64::new(t - s, 0.0)
        } else {
            (Complex64::from_polar(1.0, xi * t) - Complex64::from_polar(1.0, xi * s)) / Complex64::new(0.0, xi)
        }
    };
    for k in -n..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for k1 in -n..=n {
            for k2 in -n..=n {
                for k3 in -n..=n {
                    if k1 - k2 - k3 + k != 0 {
                        continue;
                    }
                    let xi = 2.0 * ((k - k2) * (k - k3)) as f64;
                    acc += kernel(xi) * psi.get(k1).conj() * psi.get(k2) * psi.get(k3);
                }
            }
        }
        assert!((x.get(k) - acc).norm() <= 1e-10, "mode {k}");
    }
}

#[test]
fn dnls_unit_derivative_matches_enumeration() {
    let spec = XOperatorSpec::dnls(1, 1.0, fbm(4)).unwrap();
    let a = FourierState::from_coeffs(1, spec.box_length, vec![Complex64::new(0.7, 0.1), Complex64::new(0.0, 0.0), Complex64::new(-0.2, 0.5)]).unwrap();
    let b = FourierState::from_coeffs(1, spec.box_length, vec![Complex64::new(0.3, -0.4), Complex64::new(0.0, 0.0), Complex64::new(0.9, 0.2)]).unwrap();
    let (s, t) = (0.05, 0.6);
    let x = dnls_x_apply(&spec, s, t, &a, &b, &a).unwrap();
    let mut expected = [Complex64::new(0.0, 0.0); 3];
    for k1 in -1i64..=1 {
        for k2 in -1i64..=1 {
            for k3 in -1i64..=1 {
                let k = k2 + k3 - k1;
                if k.abs() > 1 || k2 == k || k3 == k || k1 * k2 * k3 == 0 {
                    continue;
                }
                let xi = 2.0 * ((k - k2) * (k - k3)) as f64;
                let phase = spec.modulation.phi(s, t, xi).unwrap();
                expected[(k + 1) as usize] += Complex64::new(0.0, k as f64) * phase * a.get(k1).conj() * b.get(k2) * a.get(k3);
            }
        }
    }
    for k in -1i64..=1 {
        assert!((x.get(k) - expected[(k + 1) as usize]).norm() < 1e-14, "mode {k}");
    }
}

#[test]
fn galerkin_projection_commutes_exactly() {
    let spec = XOperatorSpec::cubic(8, fbm(5));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b, c) = (random_state(8, spec.box_length, &mut rng), random_state(8, spec.box_length, &mut rng), random_state(8, spec.box_length, &mut rng));
    let l = 5;
    let pa = galerkin_project(&a, l).unwrap();
    let pb = galerkin_project(&b, l).unwrap();
    let pc = galerkin_project(&c, l).unwrap();
    let big = x_apply(&spec, 0.1, 0.9, &pa, &pb, &pc, Part::Full).unwrap();
    let small_spec = spec.at_cutoff(l);
    let small = x_apply(&small_spec, 0.1, 0.9, &a.with_cutoff(l), &b.with_cutoff(l), &c.with_cutoff(l), Part::Full).unwrap();
    let projected = galerkin_project(&big, l).unwrap();
    assert_eq!(projected.with_cutoff(l).coeffs(), small.coeffs());
}

#[test]
fn projection_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_state(6, 2.0 * std::f64::consts::PI, &mut rng);
    assert_eq!(galerkin_project(&a, 6).unwrap(), a);
    let zero = galerkin_project(&a, 0).unwrap();
    assert!(zero.modes().all(|k| k == 0 || zero.get(k).norm() == 0.0));
    let half = galerkin_project(&a, 3).unwrap();
    assert!(half.l2() < a.l2());
    assert!(galerkin_project(&a, 7).is_err());
}

#[test]
fn operator_is_additive_in_time() {
    let spec = XOperatorSpec::cubic(8, fbm(8));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_state(8, spec.box_length, &mut rng);
    let whole = x_apply(&spec, 0.1, 0.8, &a, &a, &a, Part::Full).unwrap();
    let left = x_apply(&spec, 0.1, 0.37, &a, &a, &a, Part::Full).unwrap();
    let right = x_apply(&spec, 0.37, 0.8, &a, &a, &a, Part::Full).unwrap();
    assert!(rel_err(&left.add(&right), &whole) <= 1e-12);
}

#[test]
fn realness_defect_vanishes() {
    let spec = XOperatorSpec::cubic(8, fbm(10));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let a = random_state(8, spec.box_length, &mut rng);
        assert!(realness_defect(&spec, 0.0, 1.0, &a).unwrap() <= 1e-10);
    }
    let single = FourierState::from_fn(8, spec.box_length, |k| if k == 3 { Complex64::new(0.6, -0.8) } else { Complex64::new(0.0, 0.0) });
    let x = x_apply(&spec, 0.2, 0.7, &single, &single, &single, Part::Full).unwrap();
    assert_eq!(single.inner(&x).im, 0.0);
    assert!((single.inner(&x).re - 0.5).abs() < 1e-14);
}

#[test]
fn resonant_part_has_closed_form() {
    let spec = XOperatorSpec::cubic(8, fbm(12));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (a, b, c) = (random_state(8, spec.box_length, &mut rng), random_state(8, spec.box_length, &mut rng), random_state(8, spec.box_length, &mut rng));
    let res = x_apply(&spec, 0.3, 0.9, &a, &b, &c, Part::Resonant).unwrap();
    let closed = resonant_closed_form(0.3, 0.9, &a, &b, &c);
    assert!(rel_err(&res, &closed) <= 1e-13);
}

#[test]
fn nonresonant_projection_error_decreases_with_cutoff() {
    let spec = XOperatorSpec::cubic(12, fbm(14));
    let psi = FourierState::from_fn(12, spec.box_length, |k| Complex64::from_polar((-(k * k) as f64 / 8.0).exp(), 0.3 * k as f64));
    let full = x_apply(&spec, 0.0, 1.0, &psi, &psi, &psi, Part::NonResonant).unwrap();
    let mut last = f64::INFINITY;
    for l in [2usize, 4, 6, 8, 10] {
        let p = galerkin_project(&psi, l).unwrap();
        let xl = x_apply(&spec, 0.0, 1.0, &p, &p, &p, Part::NonResonant).unwrap();
        let d = galerkin_project(&xl, l).unwrap().sub(&full).h_norm(0.5);
        assert!(d < last, "L={l}: {d} !< {last}");
        last = d;
    }
}

#[test]
fn cached_and_uncached_agree() {
    let w = fbm(15);
    let plain = XOperatorSpec::cubic(6, w.clone());
    let cached = XOperatorSpec::cubic(6, w).with_cache();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = random_state(6, plain.box_length, &mut rng);
    let x1 = x_apply(&plain, 0.1, 0.5, &a, &a, &a, Part::Full).unwrap();
    let x2 = x_apply(&cached, 0.1, 0.5, &a, &a, &a, Part::Full).unwrap();
    let x3 = x_apply(&cached, 0.1, 0.5, &a, &a, &a, Part::Full).unwrap();
    assert_eq!(x1, x2);
    assert_eq!(x2, x3);
    assert!(cached.phi_cache.as_ref().unwrap().hit_rate() > 0.0);
}

#[test]
fn mismatched_cutoff_is_rejected() {
    let spec = XOperatorSpec::cubic(4, fbm(17));
    let a = FourierState::zeros(3, spec.box_length);
    assert!(x_apply(&spec, 0.0, 1.0, &a, &a, &a, Part::Full).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parts_sum_to_full(seed in 0u64..10_000, s in 0.0..0.5f64, len in 0.0..0.5f64) {
        let spec = XOperatorSpec::cubic(5, fbm(seed % 7));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (random_state(5, spec.box_length, &mut rng), random_state(5, spec.box_length, &mut rng), random_state(5, spec.box_length, &mut rng));
        let t = s + len;
        let full = x_apply(&spec, s, t, &a, &b, &c, Part::Full).unwrap();
        let res = x_apply(&spec, s, t, &a, &b, &c, Part::Resonant).unwrap();
        let non = x_apply(&spec, s, t, &a, &b, &c, Part::NonResonant).unwrap();
        prop_assert_eq!(full, res.add(&non));
    }
}
