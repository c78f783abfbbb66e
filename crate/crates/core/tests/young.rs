use std::f64::consts::PI;

use modnls::modulation::gen_fbm;
use modnls::young::*;
use modnls::Complex64;
use proptest::prelude::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Closed polygon through `(cos 2πu, sin 2πu)` with `segments` pieces on `[0, 1]`.
fn circle_path(segments: usize) -> HolderPath {
    let grid = uniform_grid(0.0, 1.0, segments);
    let nodes = grid
        .iter()
        .map(|&u| vec![c((2.0 * PI * u).cos()), c((2.0 * PI * u).sin())])
        .collect();
    HolderPath::new(grid, nodes, 1.0).unwrap()
}

fn field(v: &[Complex64]) -> Vector {
    vec![Complex64::i() * v[0] * v[1], v[0] - v[1] * v[1]]
}

/// Adaptive Simpson on one piece.
fn simpson(f: &dyn Fn(f64) -> Vector, a: f64, b: f64, tol: f64, depth: usize) -> Vector {
    let m = 0.5 * (a + b);
    let rule = |a: f64, b: f64| -> Vector {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        (0..fa.len())
            .map(|i| (fa[i] + fm[i] * 4.0 + fb[i]) * ((b - a) / 6.0))
            .collect()
    };
    let whole = rule(a, b);
    let (l, r) = (rule(a, m), rule(m, b));
    let err: f64 = (0..whole.len())
        .map(|i| (l[i] + r[i] - whole[i]).norm())
        .fold(0.0, f64::max);
    if depth == 0 || err < 15.0 * tol {
        return (0..whole.len()).map(|i| l[i] + r[i]).collect();
    }
    let lv = simpson(f, a, m, 0.5 * tol, depth - 1);
    let rv = simpson(f, m, b, 0.5 * tol, depth - 1);
    lv.iter().zip(&rv).map(|(x, y)| x + y).collect()
}

#[test]
fn ode_family_matches_adaptive_quadrature() {
    // odd piece count keeps nodes off the dyadic points, so no level is accidentally exact
    let g = circle_path(25);
    let x = Autonomous { field };
    let params = SewingParams {
        max_depth: 20,
        abs_tol: 1e-10,
        ..Default::default()
    };
    let r = young_integral(&x, &g, 0.0, 1.0, &params).unwrap();
    // quadrature on each linear piece of the same interpolant
    let f = |u: f64| field(&g.eval(u));
    let mut oracle = vec![c(0.0); 2];
    for w in g.grid.windows(2) {
        let piece = simpson(&f, w[0], w[1], 1e-13, 40);
        oracle[0] += piece[0];
        oracle[1] += piece[1];
    }
    for i in 0..2 {
        assert!((r.value[i] - oracle[i]).norm() <= 1e-8, "{i}: {} vs {}", r.value[i], oracle[i]);
    }
}

#[test]
fn constant_integrand_collapses_to_one_increment() {
    let x = Autonomous { field };
    let g0 = vec![c(0.3), c(-1.2)];
    let g = HolderPath::constant(g0.clone(), 0.0, 1.0, 8, 0.5);
    let direct = x.eval(0.2, 0.9, &g0).unwrap();
    for depth in [0usize, 3, 9] {
        let v = riemann_sum(&x, &g, 0.2, 0.9, 1 << depth).unwrap();
        for (a, b) in v.iter().zip(&direct) {
            assert!((a - b).norm() <= 1e-15 * b.norm().max(1.0));
        }
    }
}

#[test]
fn scalar_integral_matches_riemann_stieltjes_limit() {
    let w = gen_fbm(0.9, 1025, 1.0 / 1024.0, 31).unwrap();
    let h = gen_fbm(0.9, 1025, 1.0 / 1024.0, 32).unwrap();
    let g = HolderPath::new(
        (0..h.len()).map(|i| h.time(i)).collect(),
        h.values().iter().map(|&v| vec![c(v)]).collect(),
        0.9,
    )
    .unwrap();
    let x = ScalarLinear {
        control: |t: f64| w.eval(t).unwrap(),
        coeff: c(1.0),
        gamma: 0.9,
    };
    let params = SewingParams {
        max_depth: 24,
        abs_tol: 2e-7,
        rel_tol: 1e-12,
        base_steps: 64,
    };
    let r = young_integral(&x, &g, 0.0, 1.0, &params).unwrap();
    // left-point sums over linear pieces are exactly affine in the cell size,
    // so Richardson on 2^13 and 2^14 points gives the limit
    let rs = |m: usize| -> f64 {
        (0..m)
            .map(|i| {
                let (a, b) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
                h.eval(a).unwrap() * (w.eval(b).unwrap() - w.eval(a).unwrap())
            })
            .sum()
    };
    let limit = 2.0 * rs(1 << 14) - rs(1 << 13);
    assert!((r.value[0].re - limit).abs() <= 1e-6, "{} vs {limit}", r.value[0].re);
}

#[test]
fn integral_is_additive() {
    let w = gen_fbm(0.9, 257, 1.0 / 256.0, 3).unwrap();
    let x = ScalarLinear {
        control: |t: f64| w.eval(t).unwrap(),
        coeff: Complex64::new(0.0, 1.0),
        gamma: 0.9,
    };
    let g = circle_path(15);
    let params = SewingParams {
        max_depth: 20,
        abs_tol: 1e-5,
        ..Default::default()
    };
    let whole = young_integral(&x, &g, 0.25, 0.75, &params).unwrap();
    let left = young_integral(&x, &g, 0.25, 0.5, &params).unwrap();
    let right = young_integral(&x, &g, 0.5, 0.75, &params).unwrap();
    for i in 0..2 {
        let d = (left.value[i] + right.value[i] - whole.value[i]).norm();
        assert!(d <= 10.0 * params.abs_tol, "{d}");
    }
}

#[test]
fn sewing_remainder_respects_bound() {
    let gamma = 0.75;
    let w = gen_fbm(0.85, 257, 1.0 / 256.0, 11).unwrap();
    let h = gen_fbm(0.85, 257, 1.0 / 256.0, 12).unwrap();
    let g = HolderPath::new(
        (0..h.len()).map(|i| h.time(i)).collect(),
        h.values().iter().map(|&v| vec![c(v)]).collect(),
        gamma,
    )
    .unwrap();
    let holder = |v: &[f64]| -> f64 {
        let mut k: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                k = k.max((v[j] - v[i]).abs() / ((j - i) as f64 / 256.0).powf(gamma));
            }
        }
        k
    };
    let kx = holder(w.values());
    let kg = holder(h.values());
    let x = ScalarLinear {
        control: |t: f64| w.eval(t).unwrap(),
        coeff: c(1.0),
        gamma,
    };
    let params = SewingParams {
        max_depth: 24,
        abs_tol: 1e-7,
        ..Default::default()
    };
    let constant = 1.0 / (1.0 - 2f64.powf(1.0 - 2.0 * gamma));
    for (s, t) in [(0.0, 1.0), (0.125, 0.375), (0.5, 0.5625)] {
        let r = young_integral(&x, &g, s, t, &params).unwrap();
        let germ = x.eval(s, t, &g.eval(s)).unwrap();
        let rem = (r.value[0] - germ[0]).norm();
        let bound = constant * kx * kg * (t - s).powf(2.0 * gamma);
        assert!(rem <= bound, "[{s},{t}] {rem} > {bound}");
    }
}

#[test]
fn picard_of_zero_operator() {
    let p = picard_solve(&Zero, &[c(0.5), c(-1.0)], 2.0, &SewingParams::default(), 10).unwrap();
    assert!(p.nodes.iter().all(|v| v == &vec![c(0.5), c(-1.0)]));
}

#[test]
fn euler_single_step_is_definition() {
    let x = Autonomous { field };
    let psi0 = vec![c(0.4), c(0.1)];
    let p = euler_solve(&x, &psi0, 0.7, 1).unwrap();
    let inc = x.eval(0.0, 0.7, &psi0).unwrap();
    assert_eq!(p.nodes[1], vec![psi0[0] + inc[0], psi0[1] + inc[1]]);
}

#[test]
fn euler_is_first_order_for_lipschitz_time() {
    let x = Autonomous {
        field: |v: &[Complex64]| v.iter().map(|z| -z).collect(),
    };
    let table = convergence_study_exact(&x, &[c(1.0)], 1.0, &[64, 128, 256, 512, 1024], |t| {
        vec![c((-t).exp())]
    })
    .unwrap();
    assert!(table.slope <= -1.0, "{}", table.slope);
}

#[test]
fn euler_rate_for_rough_scalar_problem() {
    let gamma = 0.75;
    let w = gen_fbm(gamma, (1 << 14) + 1, 1.0 / (1 << 14) as f64, 5).unwrap();
    let x = ScalarLinear {
        control: |t: f64| w.eval(t).unwrap(),
        coeff: Complex64::i(),
        gamma,
    };
    let w0 = w.eval(0.0).unwrap();
    let table = convergence_study_exact(&x, &[c(1.0)], 1.0, &[64, 128, 256, 512, 1024, 2048], |t| {
        vec![Complex64::from_polar(1.0, w.eval(t).unwrap() - w0)]
    })
    .unwrap();
    assert!((table.slope - (1.0 - 2.0 * gamma)).abs() <= 0.3, "{}", table.slope);
}

#[test]
fn zero_operator_has_zero_errors() {
    let t = convergence_study(&Zero, &[c(1.0)], 1.0, &[4, 8, 16]).unwrap();
    assert!(t.rows.iter().all(|r| r.1 == 0.0));
}

#[test]
fn norm_preserving_increments_have_quadratic_drift() {
    let gamma = 0.75;
    let w = gen_fbm(gamma, 4097, 1.0 / 4096.0, 8).unwrap();
    let x = ScalarLinear {
        control: |t: f64| w.eval(t).unwrap(),
        coeff: Complex64::i(),
        gamma,
    };
    let mut ratios = Vec::new();
    for n in [64usize, 256, 1024, 4096] {
        let path = euler_solve(&x, &[c(1.0), c(0.5)], 1.0, n).unwrap();
        ratios.push(conservation_check(&x, &path, 2.0 * gamma).unwrap());
    }
    // |‖x + iΔw x‖ - ‖x‖| ≈ ‖x‖ Δw² / 2 is bounded by ‖x‖ K²/2 |t-s|^{2γ}
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ratios.iter().all(|r| r.is_finite()));
    assert!(spread < 10.0, "{ratios:?}");
}

#[test]
fn holder_probe_recovers_scalar_constant() {
    let x = ScalarLinear {
        control: |t: f64| 3.0 * t,
        coeff: c(1.0),
        gamma: 1.0,
    };
    let k = probe_holder_lipschitz(&x, 3, 1.0, 1.0, 64, 1).unwrap();
    assert!((k - 3.0).abs() < 1e-12, "{k}");
}

#[test]
fn integral_outside_grid_is_rejected() {
    let g = circle_path(4);
    let x = Autonomous { field };
    assert!(matches!(
        young_integral(&x, &g, 0.5, 1.5, &SewingParams::default()),
        Err(YoungError::OutsideGrid { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn riemann_sums_are_linear_in_the_control(a in -3.0..3.0f64, b in -3.0..3.0f64, pieces in 1usize..64) {
        let g = circle_path(8);
        let x1 = ScalarLinear { control: |t: f64| t * t, coeff: c(a), gamma: 1.0 };
        let x2 = ScalarLinear { control: |t: f64| t * t, coeff: c(b), gamma: 1.0 };
        let x12 = ScalarLinear { control: |t: f64| t * t, coeff: c(a + b), gamma: 1.0 };
        let s1 = riemann_sum(&x1, &g, 0.0, 1.0, pieces).unwrap();
        let s2 = riemann_sum(&x2, &g, 0.0, 1.0, pieces).unwrap();
        let s12 = riemann_sum(&x12, &g, 0.0, 1.0, pieces).unwrap();
        for i in 0..2 {
            prop_assert!((s1[i] + s2[i] - s12[i]).norm() <= 1e-12);
        }
    }
}
