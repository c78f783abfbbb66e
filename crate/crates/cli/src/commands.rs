use std::sync::Arc;
use std::time::Instant;

use modnls::modulation::{gen_fbm, gen_linear, irregularity_norm, symmetric_grid, ModulationPath};
use modnls::nls_solver::{
    conservation_report, galerkin_convergence, gaussian_decay, modulation_continuity, single_mode, solve_controlled,
    Scheme, SolveConfig,
};
use modnls::nls_torus::{x_apply, FourierState, Part, XOperatorSpec};
use modnls::numeric::{derive_seed, loglog_slope};
use modnls::strichartz_line::{
    duhamel, gn_check, mild_solve_power, square_smoothing_norm, strichartz_fit, BoxField, BoxGrid, LineError,
};
use modnls::young::{convergence_study_exact, ScalarLinear, SewingParams};
use modnls::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::io::{build_modulation, fmt, read_path_csv, usage, write_path_csv, CliError, Result, Run};
use crate::params::*;

fn path_seed(global: u64, index: Option<usize>) -> u64 {
    match index {
        Some(i) => derive_seed(global, &format!("modulation/{i}")),
        None => derive_seed(global, "modulation"),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

pub fn gen_path(c: &GenPath, run: &mut Run) -> Result<()> {
    let seed = path_seed(c.seed, None);
    let w = run.time("generate", || match c.kind.as_str() {
        "fbm" => gen_fbm(c.hurst, c.n, c.dt, seed).map_err(CliError::from),
        "linear" => gen_linear(c.slope, c.n, c.dt).map_err(CliError::from),
        k => Err(usage(format!("unknown path kind `{k}` (fbm or linear)"))),
    })?;
    let out = run.primary_or("path.csv");
    write_path_csv(run, &out, &w)?;
    let sidecar = json!({
        "label": w.label,
        "kind": c.kind,
        "hurst": (c.kind == "fbm").then_some(c.hurst),
        "slope": (c.kind == "linear").then_some(c.slope),
        "n": c.n,
        "dt": c.dt,
        "t0": w.t0(),
        "path_seed": (c.kind == "fbm").then_some(seed),
    });
    run.json(&out.with_extension("json"), &sidecar)
}

pub fn irregularity(c: &Irregularity, run: &mut Run) -> Result<()> {
    if c.path.is_empty() {
        return Err(usage("--path is required"));
    }
    let input = std::path::Path::new(&c.path);
    run.record_input(input)?;
    let w = read_path_csv(input)?;
    let grid = symmetric_grid(c.amax, c.apoints);
    let est = run.time("scan", || irregularity_norm(&w, c.rho, c.gamma, &grid, c.stride))?;
    let mut out = run.csv(&run.primary_or("irregularity.csv"))?;
    out.write_record([
        "rho", "gamma", "a_grid_max", "pair_count", "norm_estimate", "argmax_a", "argmax_s", "argmax_t",
    ])?;
    out.write_record([
        fmt(est.rho),
        fmt(est.gamma),
        fmt(est.a_grid_max),
        est.pair_count.to_string(),
        fmt(est.norm_estimate),
        fmt(est.argmax.0),
        fmt(est.argmax.1),
        fmt(est.argmax.2),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn euler_rate(c: &EulerRate, run: &mut Run) -> Result<()> {
    if c.samples < 2 {
        return Err(usage("samples must be >= 2"));
    }
    let w = gen_fbm(c.hurst, c.samples, c.t_end / (c.samples - 1) as f64, path_seed(c.seed, None))?;
    let control = |t: f64| w.eval(t).unwrap_or(f64::NAN);
    let x = ScalarLinear {
        control,
        coeff: Complex64::i(),
        gamma: c.hurst,
    };
    // dψ = i ψ dw has the solution ψ_t = ψ_0 exp(i (w_t - w_0))
    let w0 = control(0.0);
    let exact = |t: f64| vec![Complex64::from_polar(1.0, control(t) - w0)];
    let one = [Complex64::new(1.0, 0.0)];
    let table = run.time("solve", || convergence_study_exact(&x, &one, c.t_end, &c.n_list, exact))?;
    let mut out = run.csv(&run.primary_or("euler_rate.csv"))?;
    out.write_record(["n", "max_error"])?;
    for (n, e) in &table.rows {
        out.write_record([n.to_string(), fmt(*e)])?;
    }
    out.write_record(["slope".to_string(), fmt(table.slope)])?;
    out.flush()?;
    Ok(())
}

struct TorusProblem {
    spec: XOperatorSpec,
    config: SolveConfig,
    phi0: FourierState,
}

fn torus_problem(c: &Solve, w: ModulationPath) -> Result<TorusProblem> {
    let w = Arc::new(w);
    let spec = match c.equation.as_str() {
        "cubic" => XOperatorSpec::cubic(c.cutoff, w),
        "dnls" => XOperatorSpec::dnls(c.cutoff, c.theta, w)?,
        e => return Err(usage(format!("unknown equation `{e}` (cubic or dnls)"))),
    };
    let scheme = match c.scheme.as_str() {
        "euler" => Scheme::Euler(c.steps),
        "picard" => Scheme::Picard {
            params: SewingParams {
                max_depth: c.picard_depth,
                abs_tol: c.picard_tol,
                rel_tol: 1e-12,
                base_steps: c.picard_base,
            },
            max_iter: c.picard_max_iter,
        },
        s => return Err(usage(format!("unknown scheme `{s}` (euler or picard)"))),
    };
    let config = SolveConfig {
        alpha: c.alpha,
        t_end: c.t_end,
        scheme,
        record_every: c.record_every,
        sign: c.sign,
        galerkin: None,
    };
    let (n, len) = (c.cutoff, spec.box_length);
    let phi0 = match c.initial.split_once(':') {
        None if c.initial == "gaussian" => gaussian_decay(n, len, c.initial_l2),
        None if c.initial == "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, "initial"));
            random_state(&mut rng, n, len).scaled(Complex64::new(c.initial_l2, 0.0))
        }
        Some(("single", k)) => {
            let k: i64 = k.parse().map_err(|_| usage(format!("bad mode in `{}`", c.initial)))?;
            if k.unsigned_abs() as usize > n {
                return Err(usage(format!("mode {k} exceeds cutoff {n}")));
            }
            single_mode(n, len, k, Complex64::new(c.initial_l2, 0.0))
        }
        _ => return Err(usage(format!("unknown initial data `{}`", c.initial))),
    };
    Ok(TorusProblem { spec, config, phi0 })
}

fn write_states(run: &mut Run, name: &str, times: &[f64], states: &[FourierState]) -> Result<()> {
    let mut out = run.csv(&run.file(name))?;
    let mut header = vec!["t".to_string()];
    if let Some(first) = states.first() {
        for k in first.modes() {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
    }
    out.write_record(&header)?;
    for (t, st) in times.iter().zip(states) {
        let mut row = vec![fmt(*t)];
        for z in st.coeffs() {
            row.push(fmt(z.re));
            row.push(fmt(z.im));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn solve(c: &Solve, run: &mut Run) -> Result<()> {
    let w = build_modulation(&c.modulation, c.path_samples, c.t_end, path_seed(c.seed, None), run)?;
    let p = torus_problem(c, w)?;
    let traj = run.time("solve", || solve_controlled(&p.spec, &p.config, &p.phi0))?;
    write_states(run, "psi.csv", &traj.grid, &traj.psi_nodes)?;
    write_states(run, "phi.csv", &traj.grid, &traj.phi_nodes)?;
    let mut out = run.csv(&run.file("norms.csv"))?;
    out.write_record(["t", "l2", "h_alpha"])?;
    for ((t, l2), h) in traj.grid.iter().zip(&traj.l2_history).zip(&traj.halpha_history) {
        out.write_record([fmt(*t), fmt(*l2), fmt(*h)])?;
    }
    out.flush()?;
    let report = json!({
        "max_l2_drift": conservation_report(&traj).max_l2_drift,
        "initial_l2": traj.l2_history.first(),
        "final_l2": traj.l2_history.last(),
        "alpha": traj.alpha,
        "final_h_alpha": traj.halpha_history.last(),
        "max_h_alpha": traj.halpha_history.iter().cloned().fold(0.0, f64::max),
        "local_only": traj.local_only,
        "nodes": traj.grid.len(),
        "timings": run.timings.clone(),
    });
    run.json(&run.file("report.json"), &report)
}

pub fn galerkin(c: &Solve, run: &mut Run) -> Result<()> {
    let w = build_modulation(&c.modulation, c.path_samples, c.t_end, path_seed(c.seed, None), run)?;
    let p = torus_problem(c, w)?;
    let rows = run.time("solve", || galerkin_convergence(&p.spec, &p.config, &p.phi0, &c.l_list))?;
    let mut out = run.csv(&run.primary_or("galerkin.csv"))?;
    out.write_record(["L", "distance"])?;
    for (l, d) in rows {
        out.write_record([l.to_string(), fmt(d)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn mod_continuity(c: &Solve, run: &mut Run) -> Result<()> {
    if c.seeds == 0 || c.scales.is_empty() {
        return Err(usage("need at least one seed and one scale"));
    }
    let paths = (0..c.seeds)
        .map(|i| build_modulation(&c.modulation, c.path_samples, c.t_end, path_seed(c.seed, Some(i)), run))
        .collect::<Result<Vec<_>>>()?;
    let per_seed = run.time("solve", || {
        paths
            .into_par_iter()
            .map(|w| {
                let seq: Vec<ModulationPath> = c.scales.iter().map(|&j| w.mollified(2f64.powi(-j))).collect();
                let p = torus_problem(c, w)?;
                Ok(modulation_continuity(&p.spec, &p.config, &p.phi0, &seq)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = run.csv(&run.primary_or("mod_continuity.csv"))?;
    out.write_record(["seed", "scale", "path_gap", "trajectory_gap", "ratio"])?;
    for (i, rows) in per_seed.iter().enumerate() {
        for (j, r) in c.scales.iter().zip(rows) {
            out.write_record([
                i.to_string(),
                j.to_string(),
                fmt(r.path_gap),
                fmt(r.trajectory_gap),
                fmt(r.trajectory_gap / r.path_gap),
            ])?;
        }
    }
    let medians: Vec<f64> = (0..c.scales.len())
        .map(|k| median(per_seed.iter().map(|rows| rows[k].trajectory_gap / rows[k].path_gap).collect()))
        .collect();
    for (j, m) in c.scales.iter().zip(&medians) {
        out.write_record(["median".to_string(), j.to_string(), fmt(*m)])?;
    }
    out.write_record(["median_spread".to_string(), fmt(spread(&medians))])?;
    out.flush()?;
    Ok(())
}

fn random_state(rng: &mut ChaCha8Rng, cutoff: usize, box_length: f64) -> FourierState {
    let coeffs = (0..2 * cutoff + 1)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let raw = FourierState::from_coeffs(cutoff, box_length, coeffs).expect("2N+1 coefficients");
    raw.scaled(Complex64::new(1.0 / raw.l2(), 0.0))
}

pub fn x_bench(c: &XBench, run: &mut Run) -> Result<()> {
    if c.pairs < 2 {
        return Err(usage("pairs must be >= 2"));
    }
    let w = build_modulation(&c.modulation, c.path_samples, 1.0, path_seed(c.seed, None), run)?;
    let end = w.end();
    let spec = XOperatorSpec::cubic(c.cutoff, Arc::new(w)).with_cache();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, "x-bench"));
    let mut rows = Vec::with_capacity(c.pairs);
    let mut seconds = Vec::with_capacity(c.pairs);
    for _ in 0..c.pairs {
        let (a, b) = (rng.random::<f64>() * end, rng.random::<f64>() * end);
        let (s, t) = (a.min(b), a.max(b));
        let psi: Vec<FourierState> = (0..3).map(|_| random_state(&mut rng, c.cutoff, spec.box_length)).collect();
        let start = Instant::now();
        let first = x_apply(&spec, s, t, &psi[0], &psi[1], &psi[2], Part::Full)?;
        seconds.push(start.elapsed().as_secs_f64());
        // second call hits the Phi cache
        let again = x_apply(&spec, s, t, &psi[0], &psi[1], &psi[2], Part::Full)?;
        debug_assert_eq!(first, again);
        rows.push((s, t, first.l2()));
    }
    run.timings.insert("apply".into(), seconds.iter().sum());
    let usable: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.1 > r.0 && r.2 > 0.0).collect();
    let lens: Vec<f64> = usable.iter().map(|r| r.1 - r.0).collect();
    let norms: Vec<f64> = usable.iter().map(|r| r.2).collect();
    let exponent = if usable.len() >= 2 { loglog_slope(&lens, &norms) } else { f64::NAN };
    let constant = lens.iter().zip(&norms).map(|(l, n)| n / l.powf(exponent)).fold(0.0, f64::max);
    let hit_rate = spec.phi_cache.as_ref().map_or(0.0, |cache| cache.hit_rate());

    let mut out = run.csv(&run.primary_or("x_bench.csv"))?;
    out.write_record(["pair", "s", "t", "output_l2"])?;
    for (i, (s, t, n)) in rows.iter().enumerate() {
        out.write_record([i.to_string(), fmt(*s), fmt(*t), fmt(*n)])?;
    }
    out.write_record(["holder_exponent".to_string(), fmt(exponent)])?;
    out.write_record(["holder_constant".to_string(), fmt(constant)])?;
    out.write_record(["cache_hit_rate".to_string(), fmt(hit_rate)])?;
    // wall-clock rows are the only non-reproducible values in any CSV
    out.write_record(["apply_seconds_mean".to_string(), fmt(seconds.iter().sum::<f64>() / seconds.len() as f64)])?;
    out.write_record(["apply_seconds_max".to_string(), fmt(seconds.iter().cloned().fold(0.0, f64::max))])?;
    out.flush()?;
    Ok(())
}

fn gaussian(grid: &BoxGrid, sigma: f64, l2: f64) -> BoxField {
    // ∫ exp(-x²/σ²) dx = σ √π
    let amp = l2 / (std::f64::consts::PI.sqrt() * sigma).sqrt();
    BoxField::from_fn(grid, |x| Complex64::new(amp * (-(x * x) / (2.0 * sigma * sigma)).exp(), 0.0))
}

pub fn strichartz(c: &Strichartz, run: &mut Run) -> Result<()> {
    if c.seeds == 0 {
        return Err(usage("seeds must be >= 1"));
    }
    let grid = BoxGrid::new(c.points, c.box_length)?;
    let t_max = c.t_list.iter().cloned().fold(0.0, f64::max);
    let paths = (0..c.seeds)
        .map(|i| build_modulation(&c.modulation, c.path_samples, t_max, path_seed(c.seed, Some(i)), run))
        .collect::<Result<Vec<_>>>()?;
    let source = gaussian(&grid, c.sigma, 1.0);
    let src = |_: f64| source.clone();
    let fits = run.time("fit", || {
        paths
            .par_iter()
            .map(|w| {
                let fit = strichartz_fit(w, &grid, &[&src], c.p, &c.t_list, c.quad_points)?;
                let smoothing = if c.smoothing > 0.0 {
                    c.t_list
                        .iter()
                        .map(|&t| {
                            let d = duhamel(w, &grid, src, t, c.quad_points)?;
                            Ok(square_smoothing_norm(d.fields.last().expect("nonempty series"), c.smoothing))
                        })
                        .collect::<std::result::Result<Vec<f64>, LineError>>()?
                } else {
                    Vec::new()
                };
                Ok((fit, smoothing))
            })
            .collect::<std::result::Result<Vec<_>, LineError>>()
    })?;
    let mut out = run.csv(&run.primary_or("strichartz.csv"))?;
    let mut header = vec!["seed", "T", "ratio"];
    if c.smoothing > 0.0 {
        header.push("square_smoothing");
    }
    out.write_record(&header)?;
    for (i, (fit, smoothing)) in fits.iter().enumerate() {
        for (k, row) in fit.rows.iter().enumerate() {
            let mut rec = vec![i.to_string(), fmt(row.1), fmt(row.2)];
            if let Some(v) = smoothing.get(k) {
                rec.push(fmt(*v));
            }
            out.write_record(&rec)?;
        }
    }
    for (i, (fit, _)) in fits.iter().enumerate() {
        out.write_record(["slope".to_string(), i.to_string(), fmt(fit.slopes[0])])?;
    }
    let max_constant = fits.iter().map(|f| f.0.max_constant).fold(0.0, f64::max);
    out.write_record(["max_constant".to_string(), fmt(max_constant)])?;
    out.flush()?;
    Ok(())
}

pub fn nls_line(c: &NlsLine, run: &mut Run) -> Result<()> {
    let grid = BoxGrid::new(c.points, c.box_length)?;
    let w = build_modulation(&c.modulation, c.path_samples, c.t_end, path_seed(c.seed, None), run)?;
    let u0 = gaussian(&grid, c.sigma, c.initial_l2);
    let traj = run.time("solve", || mild_solve_power(&w, &u0, c.mu, c.t_end, c.steps, c.tol, c.track_h1))?;
    let mut out = run.csv(&run.file("trajectory.csv"))?;
    let mut header = vec!["t", "l2"];
    if traj.h1.is_some() {
        header.push("h1");
    }
    out.write_record(&header)?;
    for (k, (t, l2)) in traj.times.iter().zip(&traj.l2).enumerate() {
        let mut rec = vec![fmt(*t), fmt(*l2)];
        if let Some(h1) = &traj.h1 {
            rec.push(fmt(h1[k]));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    let report = json!({
        "l2_drift": traj.l2_drift(),
        "initial_l2": traj.l2.first(),
        "final_l2": traj.l2.last(),
        "steps": traj.steps,
        "timings": run.timings.clone(),
    });
    run.json(&run.file("report.json"), &report)
}

/// One corpus member: Gaussian bumps `(centre, width, carrier, amplitude)`.
pub type Bumps = Vec<(f64, f64, f64, Complex64)>;

/// Random corpus of 1 to 4 Gaussian wave packets per field.
pub fn gn_corpus(seed: u64, size: usize) -> Vec<Bumps> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus"));
    (0..size)
        .map(|_| {
            let bumps = rng.random_range(1..=4);
            (0..bumps)
                .map(|_| {
                    (
                        rng.random_range(-1.5..1.5),
                        rng.random_range(0.3..0.6),
                        rng.random_range(-3.0..3.0),
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    )
                })
                .collect()
        })
        .collect()
}

/// The corpus member evaluated at `lambda x`.
pub fn bump_field(grid: &BoxGrid, bumps: &[(f64, f64, f64, Complex64)], lambda: f64) -> BoxField {
    BoxField::from_fn(grid, |x| {
        let y = lambda * x;
        bumps
            .iter()
            .map(|&(c, s, k, a)| a * (-(y - c) * (y - c) / (2.0 * s * s)).exp() * Complex64::from_polar(1.0, k * y))
            .sum()
    })
}

pub fn gn(c: &Gn, run: &mut Run) -> Result<()> {
    if c.scales.is_empty() {
        return Err(usage("need at least one scale"));
    }
    let grid = BoxGrid::new(c.points, c.box_length)?;
    let corpus = gn_corpus(c.seed, c.corpus);
    let results = run.time("check", || {
        corpus
            .par_iter()
            .map(|bumps| {
                c.scales
                    .iter()
                    .map(|&l| {
                        let f = bump_field(&grid, bumps, l);
                        if !f.guard_ok() {
                            return Err(LineError::Guard { t: 0.0, ratio: f.edge_ratio() });
                        }
                        gn_check(&f, c.p, c.eps)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let mut out = run.csv(&run.primary_or("gn.csv"))?;
    out.write_record(["index", "lambda", "lhs", "rhs", "ratio"])?;
    for (i, checks) in results.iter().enumerate() {
        for (l, r) in c.scales.iter().zip(checks) {
            out.write_record([i.to_string(), fmt(*l), fmt(r.lhs), fmt(r.rhs), fmt(r.ratio)])?;
        }
    }
    let max_ratio = results.iter().flatten().map(|r| r.ratio).fold(0.0, f64::max);
    let deviation = results
        .iter()
        .map(|checks| spread(&checks.iter().map(|r| r.ratio).collect::<Vec<_>>()) - 1.0)
        .fold(0.0, f64::max);
    out.write_record(["max_ratio".to_string(), fmt(max_ratio)])?;
    out.write_record(["max_scale_deviation".to_string(), fmt(deviation)])?;
    out.flush()?;
    Ok(())
}
