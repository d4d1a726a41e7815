use std::path::Path;

use svi_core::analysis::{
    cauchy_rate_study, complementarity_report, energy_check, ensemble_run, mesh_rate_study, Functional, ObstacleProblem, RateFit,
};
use svi_core::grid::mass;
use svi_core::noise::{path_sup, NoiseFields};
use svi_core::signorini::{boundary_potential_ratio, coercivity_probe, solve_signorini, BoundaryData};
use svi_core::stefan::{baiocchi_forward, front_statistics, similarity_oracle, solve_stefan_svi, StefanData};
use svi_core::transform::DEFAULT_MU_CAP;
use svi_core::{build_grid, sample_paths, Grid, PathSolution, SolveConfig, SviError, TimeGrid};

use crate::config::{Mode, RunConfig, Theta0};
use crate::csv::{Cell, CsvWriter};
use crate::verify;
use crate::CliError;

/// One line of summary.csv. `threshold` is NaN for informational rows.
pub(crate) struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub status: &'static str,
}

impl Check {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Check { name: name.into(), value, threshold: f64::NAN, status: "info" }
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check::judged(name, value, threshold, value <= threshold)
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check::judged(name, value, threshold, value >= threshold)
    }

    pub fn judged(name: impl Into<String>, value: f64, threshold: f64, pass: bool) -> Self {
        Check { name: name.into(), value, threshold, status: if pass { "pass" } else { "fail" } }
    }
}

pub(crate) fn write_summary(dir: &Path, hash: &str, rows: &[Check]) -> Result<(), CliError> {
    let mut w = CsvWriter::create(dir, "summary.csv", hash, &["check_name", "value", "threshold", "status"])?;
    for r in rows {
        w.row(&[Cell::S(&r.name), Cell::F(r.value), Cell::F(r.threshold), Cell::S(r.status)])?;
    }
    w.finish()
}

/// The row recorded when the numerics give up.
fn diagnostic(e: &SviError) -> Check {
    let (name, value, threshold) = match e {
        SviError::Stability { ratio, .. } => ("numerical_failure:stability_guard", *ratio, 1.0),
        SviError::NewtonFailure { residual, .. } => ("numerical_failure:newton", *residual, f64::NAN),
        SviError::MuOverflow { value, cap, .. } => ("numerical_failure:mu_overflow", *value, *cap),
        SviError::LinearSolve(_) => ("numerical_failure:linear_solve", f64::NAN, f64::NAN),
        _ => ("numerical_failure:study", f64::NAN, f64::NAN),
    };
    Check::judged(name, value, threshold, false)
}

pub(crate) fn grid_of(cfg: &RunConfig) -> Result<Grid, CliError> {
    Ok(build_grid(cfg.dim, &cfg.lengths, cfg.n, cfg.bc)?)
}

pub(crate) fn solve_config(cfg: &RunConfig, eps: f64) -> SolveConfig {
    SolveConfig {
        theta: cfg.theta,
        eps,
        newton_tol: cfg.newton_tol,
        newton_max: cfg.newton_max,
        mu_cap: DEFAULT_MU_CAP,
        max_retries: cfg.max_retries,
    }
}

fn obstacle_problem(cfg: &RunConfig) -> Result<ObstacleProblem, CliError> {
    Ok(ObstacleProblem {
        grid: grid_of(cfg)?,
        tg: TimeGrid::from_dt(cfg.t_final, cfg.dt)?,
        cs: cfg.coeffs.clone(),
        rs: cfg.reaction,
        forcing: cfg.forcing,
        init: cfg.initial,
        cfg: solve_config(cfg, cfg.eps[0]),
    })
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

pub(crate) fn dispatch(cfg: &RunConfig, hash: &str, quiet: bool) -> Result<(), CliError> {
    let dir = cfg.out_dir.as_path();
    let result = match cfg.mode {
        Mode::Run => run(cfg, dir, hash, quiet),
        Mode::Ensemble => ensemble(cfg, dir, hash, quiet),
        Mode::RateEps | Mode::RateMesh => rates(cfg, dir, hash, quiet),
        Mode::Stefan => stefan(cfg, dir, hash, quiet),
        Mode::Signorini => signorini(cfg, dir, hash, quiet),
        Mode::Verify => verify::verify(cfg, dir, hash, quiet),
    };
    if let Err(CliError::Solver(e)) = &result {
        if e.is_numerical() {
            write_summary(dir, hash, &[diagnostic(e)])?;
        }
    }
    result
}

fn write_trajectory(dir: &Path, hash: &str, grid: &Grid, sol: &PathSolution, stride: usize) -> Result<(), CliError> {
    let mut w = CsvWriter::create(dir, "trajectory.csv", hash, &["t", "node_index", "xi_0", "xi_1", "y", "X", "eta"])?;
    let frames = sol.traj_y.len();
    for n in (0..frames).filter(|n| n % stride == 0 || n + 1 == frames) {
        let (y, x, eta) = (&sol.traj_y.frames[n], &sol.traj_x.frames[n], &sol.traj_eta_x.frames[n]);
        for i in 0..grid.len() {
            let p = grid.position(i);
            w.row(&[
                Cell::F(sol.traj_y.times[n]),
                Cell::I(i as u64),
                Cell::F(p[0]),
                Cell::F(if grid.dim() > 1 { p[1] } else { 0.0 }),
                Cell::F(y[i]),
                Cell::F(x[i]),
                Cell::F(eta[i]),
            ])?;
        }
    }
    w.finish()
}

fn run(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let problem = obstacle_problem(cfg)?;
    let paths = problem.paths(cfg.seed, 0);
    let sol = problem.solve(&paths)?;
    write_trajectory(dir, hash, &problem.grid, &sol, cfg.stride)?;

    let x = problem.init.evaluate(&problem.grid)?;
    let comp = complementarity_report(&problem.grid, &sol.traj_x, &sol.traj_eta_x)?;
    let en = energy_check(&problem.grid, &sol, &x, &problem.forcing, path_sup(&paths), cfg.slack)?;
    let rows = vec![
        Check::info("min_X", comp.min_x),
        Check::at_most("max_eta", comp.max_eta, 1e-12),
        Check::info("complementarity_pairing", comp.pairing),
        Check::at_most("energy_ratio", en.ratio_energy, cfg.slack),
        Check::at_most("multiplier_ratio", en.ratio_multiplier, cfg.slack),
        Check::info("max_newton_iterations", sol.max_newton_iterations() as f64),
        Check::info("substeps", sol.substeps as f64),
    ];
    write_summary(dir, hash, &rows)?;
    say(quiet, format!("run: {} steps, min X = {:.3e}, energy ratio = {:.3}", sol.traj_y.len() - 1, comp.min_x, en.ratio_energy));
    Ok(())
}

fn ensemble(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let problem = obstacle_problem(cfg)?;
    let st = ensemble_run(&problem, cfg.n_paths, cfg.seed, &Functional::ALL, cfg.slack, cfg.workers)?;
    let mut w = CsvWriter::create(dir, "stats.csv", hash, &["functional", "mean", "variance", "ci_half_width", "n_paths", "n_failures"])?;
    for f in &st.functionals {
        w.row(&[
            Cell::S(f.name),
            Cell::F(f.mean),
            Cell::F(f.variance),
            Cell::F(f.ci_half_width),
            Cell::I(st.n_paths as u64),
            Cell::I(st.n_failures as u64),
        ])?;
    }
    w.finish()?;

    let worst = |name: &str| st.get(name).map_or(f64::NAN, |f| f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let mut rows = vec![
        Check::at_most("worst_energy_ratio", worst("energy_ratio"), cfg.slack),
        Check::at_most("worst_multiplier_ratio", worst("multiplier_ratio"), cfg.slack),
        Check::at_most("failure_fraction", st.n_failures as f64 / st.n_paths as f64, 0.1),
    ];
    for (name, c) in &st.empirical_c {
        rows.push(Check::info(format!("empirical_c:{name}"), *c));
    }
    write_summary(dir, hash, &rows)?;
    say(quiet, format!("ensemble: {} paths, {} failures", st.n_paths, st.n_failures));
    Ok(())
}

fn write_rates(dir: &Path, hash: &str, fit: &RateFit) -> Result<(), CliError> {
    let mut w = CsvWriter::create(dir, "rates.csv", hash, &["eps", "error_l2", "slope_running"])?;
    for ((x, e), s) in fit.x.iter().zip(&fit.errors).zip(fit.running_slopes()) {
        w.row(&[Cell::F(*x), Cell::F(*e), Cell::F(s.unwrap_or(f64::NAN))])?;
    }
    w.finish()
}

fn rates(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let problem = obstacle_problem(cfg)?;
    let paths = problem.paths(cfg.seed, 0);
    let (fit, rows) = if cfg.mode == Mode::RateEps {
        let fit = cauchy_rate_study(&problem, &cfg.eps, &paths)?;
        let slope = fit.slope.unwrap_or(f64::NAN);
        let row = Check::judged("eps_rate_slope", slope, 0.45, fit.passes(0.45));
        (fit, vec![row])
    } else {
        let fit = mesh_rate_study(&problem, cfg.levels, &paths)?;
        let row = Check::info("mesh_rate_slope", fit.slope.unwrap_or(f64::NAN));
        (fit, vec![row])
    };
    write_rates(dir, hash, &fit)?;
    let mut rows = rows;
    rows.push(Check::info("fit_residual", fit.residual.unwrap_or(f64::NAN)));
    write_summary(dir, hash, &rows)?;
    say(quiet, format!("rate study: slope {:.3}", fit.slope.unwrap_or(f64::NAN)));
    Ok(())
}

pub(crate) fn theta0_field(theta0: &Theta0, grid: &Grid) -> svi_core::Field {
    match *theta0 {
        Theta0::Zero => grid.zeros(),
        Theta0::Bump { amp, center, radius } => grid.field_from_fn(|p| {
            let r2: f64 = (0..grid.dim()).map(|a| (p[a] - center[a]).powi(2)).sum();
            amp * (1.0 - r2 / (radius * radius)).max(0.0)
        }),
    }
}

fn stefan(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let grid = grid_of(cfg)?;
    let tg = TimeGrid::from_dt(cfg.t_final, cfg.dt)?;
    let mut sd = StefanData::new(theta0_field(&cfg.stefan.theta0, &grid), cfg.stefan.rho)?;
    if let Some(tb) = cfg.stefan.boundary_temperature {
        sd = sd.with_boundary_temperature(tb)?;
    }
    let scfg = solve_config(cfg, cfg.eps[0]);
    let h = grid.min_h();
    let mut fronts = Vec::new();
    let mut monotone = 0usize;
    let mut worst_retreat: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut rows = Vec::new();
    for id in 0..cfg.n_paths as u64 {
        let paths = sample_paths(&tg, cfg.coeffs.m(), cfg.seed, id);
        let run = solve_stefan_svi(&grid, &tg, &cfg.coeffs, &sd, &scfg, &paths, cfg.stefan.tol_fb)?;
        if id == 0 {
            let mut w = CsvWriter::create(dir, "front.csv", hash, &["t", "front_position", "melted_measure"])?;
            for n in 0..run.fb.times.len() {
                w.row(&[Cell::F(run.fb.times[n]), Cell::F(run.fb.front[n].unwrap_or(f64::NAN)), Cell::F(run.fb.melted_measure[n])])?;
            }
            w.finish()?;
            let back = baiocchi_forward(&run.theta, &run.fb, Some(&run.sol.traj_mu), Some(sd.mask()))?;
            let round_trip = back
                .frames
                .iter()
                .zip(&run.sol.traj_y.frames)
                .map(|(a, b)| a.zip_map(b, |p, q| p - q).max_abs())
                .fold(0.0, f64::max);
            rows.push(Check::at_most("baiocchi_round_trip", round_trip, tg.dt()));
            let similarity_case = cfg.dim == 1 && cfg.coeffs.m() == 0 && cfg.stefan.theta0 == Theta0::Zero;
            if let (true, Some(tb), Some(front)) = (similarity_case, cfg.stefan.boundary_temperature, run.fb.final_front()) {
                if tb > 0.0 {
                    let sim = similarity_oracle(tb / cfg.stefan.rho)?;
                    let exact = sim.front(cfg.t_final);
                    rows.push(Check::at_most("similarity_front_rel_error", (front - exact).abs() / exact, 0.02));
                    rows.push(Check::at_most("similarity_root_residual", sim.residual, 1e-10));
                }
            }
        }
        if run.fb.is_monotone(h) {
            monotone += 1;
        }
        worst_retreat = worst_retreat.max(run.fb.max_retreat()).max(run.fb.max_measure_loss());
        residual = residual.max(run.source_residual);
        if let Some(f) = run.fb.final_front() {
            fronts.push(f);
        }
    }
    rows.push(Check::judged("monotone_paths", monotone as f64, cfg.n_paths as f64, monotone == cfg.n_paths));
    rows.push(Check::info("worst_front_retreat", worst_retreat));
    rows.push(Check::info("source_residual", residual));
    if let Some((mean, q10, q50, q90)) = front_statistics(&fronts) {
        rows.push(Check::info("final_front_mean", mean));
        rows.push(Check::info("final_front_q10", q10));
        rows.push(Check::info("final_front_q50", q50));
        rows.push(Check::info("final_front_q90", q90));
    }
    write_summary(dir, hash, &rows)?;
    say(quiet, format!("stefan: {} paths, {monotone} monotone", cfg.n_paths));
    Ok(())
}

fn signorini(cfg: &RunConfig, dir: &Path, hash: &str, quiet: bool) -> Result<(), CliError> {
    let grid = grid_of(cfg)?;
    let tg = TimeGrid::from_dt(cfg.t_final, cfg.dt)?;
    let bd = BoundaryData::new(&grid)?;
    let scfg = solve_config(cfg, cfg.eps[0]);
    let paths = sample_paths(&tg, cfg.coeffs.m(), cfg.seed, 0);
    let sol = solve_signorini(&grid, &tg, &cfg.coeffs, &cfg.reaction, &cfg.forcing, &cfg.initial, &scfg, &paths)?;
    write_trajectory(dir, hash, &grid, &sol, cfg.stride)?;

    let trace_min = bd.nodes().iter().flat_map(|&i| sol.traj_x.frames.iter().map(move |f| f[i])).fold(f64::INFINITY, f64::min);
    let (ratio, _, _) = boundary_potential_ratio(&grid, &sol, &bd, &cfg.forcing)?;
    let mid = tg.steps() / 2;
    let nf = NoiseFields::at_node(&cfg.coeffs, &paths, mid, &grid)?;
    let probe = coercivity_probe(&grid, &nf, &cfg.reaction, &bd, Some(scfg.eps), cfg.probe_samples, cfg.seed)?;
    let mut rows = vec![
        Check::info("boundary_trace_min", trace_min),
        Check::info("boundary_trace_min_over_eps", trace_min / scfg.eps),
        Check::at_most("boundary_potential_ratio", ratio, cfg.slack),
        Check::at_most("probe_violations", probe.violations as f64, 0.0),
        Check::info("probe_c1", probe.c1_hat),
        Check::info("probe_c2", probe.c2_hat),
        Check::info("probe_c3", probe.c3_hat),
        Check::info("probe_c3_apriori", probe.c3_apriori),
        Check::info("probe_c4", probe.c4_hat),
    ];
    let conservative = cfg.coeffs.m() == 0 && cfg.reaction.alpha == 0.0 && cfg.forcing == svi_core::Forcing::Zero;
    if conservative && sol.traj_eta.frames.iter().all(|e| e.max_abs() == 0.0) {
        let m0 = mass(&grid, &sol.traj_x.frames[0])?;
        let m1 = mass(&grid, sol.traj_x.last())?;
        rows.push(Check::at_most("mass_drift_per_time", (m1 - m0).abs() / cfg.t_final, 1e-6));
    }
    write_summary(dir, hash, &rows)?;
    say(quiet, format!("signorini: trace min {trace_min:.3e}, {} probe violations", probe.violations));
    Ok(())
}
