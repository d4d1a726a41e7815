//! Built-in self checks. Each check runs fixed reference problems at desk
//! scale; only the seed, the path count, the slack and the worker count
//! come from the config.

use std::f64::consts::PI;
use std::path::Path;

use svi_core::analysis::{cauchy_rate_study, complementarity_report, energy_check, ensemble_run, noise_moments, Functional, ObstacleProblem, RateFit};
use svi_core::grid::{mass, norm_l2};
use svi_core::noise::NoiseFields;
use svi_core::signorini::{coercivity_probe, solve_signorini, step_signorini, BoundaryData};
use svi_core::stefan::{baiocchi_forward, similarity_oracle, solve_stefan_svi, StefanData};
use svi_core::{
    build_grid, direct_em_solve, sample_paths, solve_path, BoundaryKind, BrownianPathSet, CoeffSpec, CoeffTerm, Forcing, InitialData,
    ReactionSpec, SolveConfig, SpaceProfile, TimeGrid,
};

use crate::config::RunConfig;
use crate::modes::{write_summary, Check};
use crate::CliError;

type Rows = Result<Vec<Check>, CliError>;

fn sine_noise(amp: f64) -> CoeffSpec {
    CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::SineMode { amp, modes: [1, 0] })])
}

fn mixed_problem(n: usize, t: f64, dt: f64) -> Result<ObstacleProblem, CliError> {
    Ok(ObstacleProblem {
        grid: build_grid(1, &[1.0], n, BoundaryKind::Dirichlet)?,
        tg: TimeGrid::from_dt(t, dt)?,
        cs: sine_noise(0.5),
        rs: ReactionSpec::saturating(1.0),
        forcing: Forcing::SineMode { amp: 4.0, modes: [2, 0] },
        init: InitialData::sine(0.5),
        cfg: SolveConfig::default(),
    })
}

/// Fits one constant on all but the smallest `ε` (factor 2 margin) and
/// checks `ratio ≤ C` on every `ε`.
fn single_constant(scaled: &[f64]) -> (f64, bool) {
    let fit = scaled[..scaled.len() - 1].iter().cloned().fold(0.0, f64::max);
    let c = 2.0 * fit.max(1e-300);
    (c, scaled.iter().all(|&s| s <= c))
}

fn heat() -> Rows {
    let grid = build_grid(1, &[1.0], 63, BoundaryKind::Dirichlet)?;
    let tg = TimeGrid::from_dt(0.1, 1e-3)?;
    let paths = BrownianPathSet::zeros(&tg, 0);
    let sol = solve_path(&grid, &tg, &CoeffSpec::none(), &ReactionSpec::zero(), &Forcing::Zero, &InitialData::sine(1.0), &SolveConfig::default(), &paths)?;
    let decay = (-0.1 * PI * PI).exp();
    let exact = grid.field_from_fn(|x| decay * (PI * x[0]).sin());
    let err = sol.traj_y.last().zip_map(&exact, |a, b| a - b).max_abs();
    let active = sol.traj_eta.frames.iter().map(|e| e.max_abs()).fold(0.0, f64::max);
    Ok(vec![Check::at_most("heat_max_error", err, 5e-3), Check::at_most("heat_penalty_activity", active, 0.0)])
}

fn complementarity(seed: u64) -> Rows {
    let eps_list = [1e-2, 1e-3, 1e-4];
    let pinned = ObstacleProblem {
        grid: build_grid(1, &[1.0], 31, BoundaryKind::Dirichlet)?,
        tg: TimeGrid::from_dt(0.2, 2e-3)?,
        cs: CoeffSpec::none(),
        rs: ReactionSpec::zero(),
        forcing: Forcing::Constant(-1.0),
        init: InitialData::zero(),
        cfg: SolveConfig::default(),
    };
    let mixed = mixed_problem(31, 0.25, 2e-3)?;
    let mut rows = Vec::new();
    for (label, problem, paths) in [
        ("pinned", &pinned, BrownianPathSet::zeros(&pinned.tg, 0)),
        ("noisy", &mixed, mixed.paths(seed, 0)),
    ] {
        let (mut neg_x, mut pair, mut max_eta) = (Vec::new(), Vec::new(), f64::NEG_INFINITY);
        for &eps in &eps_list {
            let sol = problem.solve_with_eps(eps, &paths)?;
            let rep = complementarity_report(&problem.grid, &sol.traj_x, &sol.traj_eta_x)?;
            neg_x.push((-rep.min_x).max(0.0) / eps);
            pair.push(rep.pairing / eps);
            max_eta = max_eta.max(rep.max_eta);
        }
        let (cx, okx) = single_constant(&neg_x);
        let (cp, okp) = single_constant(&pair);
        rows.push(Check::judged(format!("complementarity_{label}_c_x"), cx, f64::NAN, okx && neg_x[0] > 0.0));
        rows.push(Check::judged(format!("complementarity_{label}_c_pairing"), cp, f64::NAN, okp));
        rows.push(Check::at_most(format!("complementarity_{label}_max_eta"), max_eta, 1e-12));
    }
    Ok(rows)
}

fn cauchy_rate(seed: u64) -> Rows {
    let problem = mixed_problem(63, 0.25, 1e-3)?;
    let paths = problem.paths(seed, 0);
    let fit = cauchy_rate_study(&problem, &[1e-2, 2.5e-3, 6.25e-4, 1.5625e-4], &paths)?;
    Ok(vec![Check::judged("cauchy_rate_slope", fit.slope.unwrap_or(f64::NAN), 0.45, fit.passes(0.45))])
}

fn energy(cfg: &RunConfig) -> Rows {
    let problem = mixed_problem(31, 0.25, 1e-3)?;
    let n_paths = cfg.n_paths.max(2);
    let st = ensemble_run(&problem, n_paths, cfg.seed, &[Functional::EnergyRatio, Functional::MultiplierRatio], cfg.slack, cfg.workers)?;
    let worst = |name: &str| st.get(name).map_or(f64::NAN, |f| f.values.iter().cloned().fold(0.0, f64::max));

    let grid = build_grid(1, &[1.0], 63, BoundaryKind::Dirichlet)?;
    let tg = TimeGrid::from_dt(0.25, 1e-3)?;
    let x = InitialData::sine(1.0);
    let sol = solve_path(&grid, &tg, &CoeffSpec::none(), &ReactionSpec::zero(), &Forcing::Zero, &x, &SolveConfig::default(), &BrownianPathSet::zeros(&tg, 0))?;
    let heat = energy_check(&grid, &sol, &x.evaluate(&grid)?, &Forcing::Zero, 0.0, cfg.slack)?;
    Ok(vec![
        Check::at_most("energy_worst_ratio", worst("energy_ratio"), cfg.slack),
        Check::at_most("energy_worst_multiplier_ratio", worst("multiplier_ratio"), cfg.slack),
        Check::at_most("energy_failed_paths", st.n_failures as f64, 0.0),
        Check::at_most("energy_diffusion_ratio", heat.ratio_energy, 1.0 + 10.0 * tg.dt()),
    ])
}

/// Direct Euler–Maruyama against the transformed scheme on shared
/// increments, three dyadic step levels.
fn transform(cfg: &RunConfig) -> Rows {
    let grid = build_grid(1, &[1.0], 31, BoundaryKind::Dirichlet)?;
    let cs = sine_noise(0.5);
    let rs = ReactionSpec::linear(1.0);
    let x = InitialData::sine(1.0);
    let scfg = SolveConfig::default();
    let levels = 3;
    let dt0 = 2.5e-3;
    let finest = TimeGrid::from_dt(0.5, dt0 / (1 << (levels - 1)) as f64)?;
    let n_paths = cfg.n_paths.max(1);
    let mut errors = vec![0.0; levels];
    let mut min_x = f64::INFINITY;
    for id in 0..n_paths as u64 {
        let pf = sample_paths(&finest, 1, cfg.seed, id);
        for (l, err) in errors.iter_mut().enumerate() {
            let factor = 1 << (levels - 1 - l);
            let p = pf.coarsened(factor)?;
            let tg = TimeGrid::new(0.5, finest.steps() / factor)?;
            let a = direct_em_solve(&grid, &tg, &cs, &rs, &Forcing::Zero, &x, &scfg, &p)?;
            let b = solve_path(&grid, &tg, &cs, &rs, &Forcing::Zero, &x, &scfg, &p)?;
            min_x = min_x.min(a.traj_x.min()).min(b.traj_x.min());
            *err += norm_l2(&grid, &a.traj_x.last().zip_map(b.traj_x.last(), |u, v| u - v))? / n_paths as f64;
        }
    }
    let dts: Vec<f64> = (0..levels).map(|l| dt0 / (1 << l) as f64).collect();
    let fit = RateFit::new(dts, errors);
    let factor = 2f64.powf(fit.slope.unwrap_or(0.0));
    Ok(vec![
        Check::judged("transform_reduction_factor", factor, 1.5, (1.5..=3.0).contains(&factor)),
        Check::at_least("transform_min_x", min_x, 0.0),
    ])
}

fn signorini(cfg: &RunConfig) -> Rows {
    let grid = build_grid(1, &[1.0], 33, BoundaryKind::Neumann)?;
    let bd = BoundaryData::new(&grid)?;
    let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.0, c1: [0.4, 0.0], c2: [0.0, 0.0] })]);
    let tg = TimeGrid::from_dt(0.25, 1e-3)?;
    let paths = sample_paths(&tg, 1, cfg.seed, 0);
    let suction = Forcing::BoundarySuction { amp: 5.0, width: 0.1 };
    let x = InitialData::sine(0.2);
    let mut scaled = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let sol = solve_signorini(&grid, &tg, &cs, &ReactionSpec::zero(), &suction, &x, &SolveConfig::with_eps(eps), &paths)?;
        let trace_min = bd.nodes().iter().flat_map(|&i| sol.traj_x.frames.iter().map(move |f| f[i])).fold(f64::INFINITY, f64::min);
        scaled.push((-trace_min).max(0.0) / eps);
    }
    let (c, trace_ok) = single_constant(&scaled);

    let nf0 = NoiseFields::zero(&grid);
    let mut y = grid.field_from_fn(|x| 1.0 + 0.5 * (PI * x[0]).cos());
    let m0 = mass(&grid, &y)?;
    let (dt, steps) = (1e-3, 200);
    for _ in 0..steps {
        y = step_signorini(&grid, &y, &nf0, &ReactionSpec::zero(), &grid.zeros(), &bd, dt, &SolveConfig::default())?.0;
    }
    let drift = (mass(&grid, &y)? - m0).abs() / (dt * steps as f64);

    let nf = NoiseFields::at_node(&cs, &paths, tg.steps() / 2, &grid)?;
    let probe = coercivity_probe(&grid, &nf, &ReactionSpec::saturating(1.0), &bd, Some(1e-3), cfg.probe_samples, cfg.seed)?;
    Ok(vec![
        Check::judged("signorini_trace_c", c, f64::NAN, trace_ok && scaled[0] > 0.0),
        Check::at_most("signorini_mass_drift", drift, 1e-6),
        Check::at_most("signorini_probe_violations", probe.violations as f64, 0.0),
    ])
}

fn stefan(cfg: &RunConfig) -> Rows {
    let sim = similarity_oracle(1.0)?;
    let t_final = 0.16;
    let grid = build_grid(1, &[1.0], 399, BoundaryKind::Dirichlet)?;
    let tg = TimeGrid::from_dt(t_final, 2e-4)?;
    let sd = StefanData::new(grid.zeros(), 1.0)?.with_boundary_temperature(1.0)?;
    let det = solve_stefan_svi(&grid, &tg, &CoeffSpec::none(), &sd, &SolveConfig::with_eps(1e-8), &BrownianPathSet::zeros(&tg, 0), None)?;
    let front = det.fb.final_front().unwrap_or(0.0);
    let exact = sim.front(t_final);
    let back = baiocchi_forward(&det.theta, &det.fb, Some(&det.sol.traj_mu), Some(sd.mask()))?;
    let round_trip = back
        .frames
        .iter()
        .zip(&det.sol.traj_y.frames)
        .map(|(a, b)| a.zip_map(b, |p, q| p - q).max_abs())
        .fold(0.0, f64::max);

    let ngrid = build_grid(1, &[1.0], 99, BoundaryKind::Dirichlet)?;
    let ntg = TimeGrid::from_dt(0.2, 1e-3)?;
    let theta0 = ngrid.field_from_fn(|x| (1.0 - ((x[0] - 0.5) / 0.15).powi(2)).max(0.0));
    let nsd = StefanData::new(theta0, 2.0)?;
    let mut monotone = det.fb.is_monotone(grid.h(0));
    for id in 0..cfg.n_paths.clamp(1, 8) as u64 {
        let p = sample_paths(&ntg, 1, cfg.seed, id);
        let run = solve_stefan_svi(&ngrid, &ntg, &sine_noise(0.3), &nsd, &SolveConfig::with_eps(1e-6), &p, None)?;
        monotone &= run.fb.is_monotone(ngrid.h(0));
    }
    Ok(vec![
        Check::at_most("stefan_front_rel_error", (front - exact).abs() / exact, 0.02),
        Check::at_most("stefan_root_residual", sim.residual, 1e-10),
        Check::judged("stefan_monotone", if monotone { 1.0 } else { 0.0 }, 1.0, monotone),
        Check::at_most("stefan_round_trip", round_trip, tg.dt()),
    ])
}

fn noise(cfg: &RunConfig) -> Rows {
    let tg = TimeGrid::new(1.0, 100)?;
    let big = noise_moments(&tg, 1, 10_000, cfg.seed, cfg.workers)?;
    let small = noise_moments(&tg, 1, 2_500, cfg.seed, cfg.workers)?;
    let (mean_sq, se) = big.terminal_sq[0];
    let d_mean = big.delta_sq.0;
    let halving = small.delta_sq.2 / big.delta_sq.2;
    Ok(vec![
        Check::judged("noise_terminal_second_moment", mean_sq, 1.0, (mean_sq - 1.0).abs() <= 3.0 * se),
        Check::judged("noise_delta_sq_mean", d_mean, 1.0, (1.0..=4.0).contains(&d_mean)),
        Check::judged("noise_ci_halving", halving, 2.0, (1.5..=2.5).contains(&halving)),
    ])
}

pub(crate) fn verify(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for name in &cfg.checks {
        let r = match name.as_str() {
            "heat" => heat(),
            "complementarity" => complementarity(cfg.seed),
            "cauchy_rate" => cauchy_rate(cfg.seed),
            "energy" => energy(cfg),
            "transform" => transform(cfg),
            "signorini" => signorini(cfg),
            "stefan" => stefan(cfg),
            "noise" => noise(cfg),
            other => unreachable!("check '{other}' passed validation"),
        };
        let r = match r {
            Ok(r) => r,
            // a check whose solve breaks down is a failed check, not an aborted run
            Err(CliError::Solver(e)) if e.is_numerical() => vec![Check::judged(format!("{name}_solver"), f64::NAN, f64::NAN, false)],
            Err(e) => return Err(e),
        };
        for c in &r {
            if !quiet {
                println!("{:<40} {:>12.4e}  {}", c.name, c.value, c.status);
            }
        }
        rows.extend(r);
    }
    write_summary(dir, hash, &rows)?;
    let failed = rows.iter().filter(|r| r.status == "fail").count();
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}
