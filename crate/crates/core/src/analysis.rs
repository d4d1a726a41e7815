//! Numerical checks of the a priori theory: complementarity, energy
//! bounds, penalization and mesh rates, Monte Carlo ensembles.

use rayon::prelude::*;

use crate::error::{check_len, Result, SviError};
use crate::grid::{apply_laplacian, build_grid, norm_l2, seminorm_h1, BoundaryKind, Field, Grid};
use crate::noise::{path_sup, sample_paths, BrownianPathSet, CoeffSpec, TimeGrid};
use crate::pathsolver::{solve_path, Forcing, InitialData, PathSolution, SolveConfig, Trajectory};
use crate::penalty::beta_eps;
use crate::transform::ReactionSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplementarityReport {
    pub min_x: f64,
    pub max_eta: f64,
    /// `∫∫ |X η|`, left-endpoint in time.
    pub pairing: f64,
    /// Per time slice: `(t, node, |X η|)` at the worst node.
    pub worst: Vec<(f64, usize, f64)>,
}

impl ComplementarityReport {
    pub fn passes(&self, tol_x: f64, tol_eta: f64, tol_pair: f64) -> bool {
        self.min_x >= -tol_x && self.max_eta <= tol_eta && self.pairing <= tol_pair
    }
}

pub fn complementarity_report(grid: &Grid, traj_x: &Trajectory, traj_eta: &Trajectory) -> Result<ComplementarityReport> {
    check_len(traj_x.len(), traj_eta.len())?;
    let w = grid.weights();
    let mut rep = ComplementarityReport { min_x: f64::INFINITY, max_eta: f64::NEG_INFINITY, pairing: 0.0, worst: Vec::new() };
    for n in 0..traj_x.len() {
        let x = &traj_x.frames[n];
        let eta = &traj_eta.frames[n];
        check_len(grid.len(), x.len())?;
        check_len(grid.len(), eta.len())?;
        rep.min_x = rep.min_x.min(x.min());
        rep.max_eta = rep.max_eta.max(eta.max());
        let mut worst = (traj_x.times[n], 0, 0.0);
        let mut slice = 0.0;
        for i in 0..grid.len() {
            let p = (x[i] * eta[i]).abs();
            slice += w[i] * p;
            if p > worst.2 {
                worst = (traj_x.times[n], i, p);
            }
        }
        if n + 1 < traj_x.len() {
            rep.pairing += (traj_x.times[n + 1] - traj_x.times[n]) * slice;
        }
        rep.worst.push(worst);
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    /// `max_n [|y_n|² + Σ_{k<n} dt |∇y_k|²] / [|x|² + Σ_{k<n} dt |f_k|² + δ²]`
    pub ratio_energy: f64,
    /// `max_n Σ_{k<n} dt (|β_ε(y_k)|² + |Δy_k|²) / [Σ_{k<n} dt |f_k|² + t_n δ² + |x|²_{H¹}]`
    pub ratio_multiplier: f64,
    pub slack: f64,
}

impl EnergyReport {
    pub fn passes(&self) -> bool {
        self.ratio_energy <= self.slack && self.ratio_multiplier <= self.slack
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

pub fn energy_check(grid: &Grid, sol: &PathSolution, x: &Field, forcing: &Forcing, delta: f64, slack: f64) -> Result<EnergyReport> {
    check_len(grid.len(), x.len())?;
    let ty = &sol.traj_y;
    let x_sq = norm_l2(grid, x)?.powi(2);
    let x_h1 = x_sq + seminorm_h1(grid, x)?.powi(2);
    let d2 = delta * delta;
    let mut grad_acc = 0.0;
    let mut f_acc = 0.0;
    let mut pen_acc = 0.0;
    let mut r_energy: f64 = ratio(norm_l2(grid, &ty.frames[0])?.powi(2), x_sq + d2);
    let mut r_mult: f64 = 0.0;
    for n in 0..ty.len().saturating_sub(1) {
        let t = ty.times[n];
        let dt = ty.times[n + 1] - t;
        let y = &ty.frames[n];
        grad_acc += dt * seminorm_h1(grid, y)?.powi(2);
        f_acc += dt * norm_l2(grid, &forcing.eval(t, grid))?.powi(2);
        let b = y.map(|v| beta_eps(v, sol.eps));
        let lap = apply_laplacian(grid, y)?;
        pen_acc += dt * (norm_l2(grid, &b)?.powi(2) + norm_l2(grid, &lap)?.powi(2));
        let lhs = norm_l2(grid, &ty.frames[n + 1])?.powi(2) + grad_acc;
        r_energy = r_energy.max(ratio(lhs, x_sq + f_acc + d2));
        r_mult = r_mult.max(ratio(pen_acc, f_acc + ty.times[n + 1] * d2 + x_h1));
    }
    Ok(EnergyReport { ratio_energy: r_energy, ratio_multiplier: r_mult, slack })
}

/// Least-squares fit of `log e = slope log x + intercept`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when the study is degenerate (some error is zero).
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub residual: Option<f64>,
}

impl RateFit {
    pub fn new(x: Vec<f64>, errors: Vec<f64>) -> Self {
        let fit = loglog_fit(&x, &errors);
        RateFit {
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
            residual: fit.map(|f| f.2),
            x,
            errors,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.slope.is_none()
    }

    /// Slope of the fit through the first `k + 1` points, for `k ≥ 1`.
    pub fn running_slopes(&self) -> Vec<Option<f64>> {
        (0..self.x.len())
            .map(|k| if k == 0 { None } else { loglog_fit(&self.x[..=k], &self.errors[..=k]).map(|f| f.0) })
            .collect()
    }

    /// Slope assertion: at least 4 points, not degenerate.
    pub fn passes(&self, min_slope: f64) -> bool {
        self.x.len() >= 4 && self.slope.is_some_and(|s| s >= min_slope)
    }
}

fn loglog_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || y.iter().chain(x).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

/// Everything that defines one obstacle run apart from the Brownian path.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleProblem {
    pub grid: Grid,
    pub tg: TimeGrid,
    pub cs: CoeffSpec,
    pub rs: ReactionSpec,
    pub forcing: Forcing,
    pub init: InitialData,
    pub cfg: SolveConfig,
}

impl ObstacleProblem {
    pub fn paths(&self, seed: u64, path_id: u64) -> BrownianPathSet {
        sample_paths(&self.tg, self.cs.m(), seed, path_id)
    }

    pub fn solve(&self, paths: &BrownianPathSet) -> Result<PathSolution> {
        solve_path(&self.grid, &self.tg, &self.cs, &self.rs, &self.forcing, &self.init, &self.cfg, paths)
    }

    pub fn solve_with_eps(&self, eps: f64, paths: &BrownianPathSet) -> Result<PathSolution> {
        let cfg = SolveConfig { eps, ..self.cfg };
        solve_path(&self.grid, &self.tg, &self.cs, &self.rs, &self.forcing, &self.init, &cfg, paths)
    }

    pub fn on_grid(&self, grid: Grid) -> ObstacleProblem {
        ObstacleProblem { grid, ..self.clone() }
    }
}

fn sup_l2_distance(grid: &Grid, a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let mut e: f64 = 0.0;
    for (u, v) in a.frames.iter().zip(&b.frames) {
        e = e.max(norm_l2(grid, &u.zip_map(v, |p, q| p - q))?);
    }
    Ok(e)
}

/// Penalization rate: `e(ε) = sup_n ‖y_ε(t_n) - y_ref(t_n)‖₂` against a
/// reference at `ε_min / 4`, all solves on the same path and time step.
pub fn cauchy_rate_study(problem: &ObstacleProblem, eps_list: &[f64], paths: &BrownianPathSet) -> Result<RateFit> {
    if eps_list.len() < 4 {
        return Err(SviError::Study(format!("rate study needs at least 4 values of eps, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(SviError::Study("eps values must be positive and strictly decreasing".into()));
    }
    let q = eps_list[1] / eps_list[0];
    if eps_list.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-6) {
        return Err(SviError::Study("eps values must be geometrically spaced".into()));
    }
    let eps_ref = eps_list[eps_list.len() - 1] / 4.0;
    let mut all: Vec<f64> = eps_list.to_vec();
    all.push(eps_ref);
    let sols: Vec<Result<PathSolution>> = all.par_iter().map(|&e| problem.solve_with_eps(e, paths)).collect();
    let mut solved = Vec::with_capacity(sols.len());
    for (e, s) in all.iter().zip(sols) {
        solved.push(s.map_err(|err| SviError::Study(format!("solve at eps = {e:e} failed: {err}")))?);
    }
    let reference = solved.pop().expect("reference solve");
    if solved.iter().any(|s| s.substeps != reference.substeps) {
        return Err(SviError::Study("member solves used different substep counts".into()));
    }
    let errors = solved
        .iter()
        .map(|s| sup_l2_distance(&problem.grid, &s.traj_y, &reference.traj_y))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RateFit::new(eps_list.to_vec(), errors))
}

/// Mesh rate on nested Dirichlet grids `n → 2n + 1`, measured on the
/// coarse nodes against the finest level. The fit is in `h`.
pub fn mesh_rate_study(problem: &ObstacleProblem, levels: usize, paths: &BrownianPathSet) -> Result<RateFit> {
    if levels < 2 {
        return Err(SviError::Study("mesh study needs at least 2 levels".into()));
    }
    let g0 = &problem.grid;
    if g0.bc() != BoundaryKind::Dirichlet || g0.dim() != 1 {
        return Err(SviError::Study("mesh study runs on 1D Dirichlet grids".into()));
    }
    let mut grids = vec![g0.clone()];
    for _ in 0..levels {
        let n = grids.last().unwrap().len();
        grids.push(build_grid(1, g0.lengths(), 2 * n + 1, BoundaryKind::Dirichlet)?);
    }
    let sols = grids
        .par_iter()
        .map(|g| problem.on_grid(g.clone()).solve(paths))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let fine = sols.last().unwrap();
    let finest = grids.last().unwrap();
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    for (lvl, (g, s)) in grids.iter().zip(&sols).enumerate().take(levels) {
        let stride = 1usize << (levels - lvl);
        let mut e: f64 = 0.0;
        for (u, v) in s.traj_y.frames.iter().zip(&fine.traj_y.frames) {
            let restricted: Field = Field((0..g.len()).map(|i| v[(i + 1) * stride - 1]).collect());
            e = e.max(norm_l2(g, &u.zip_map(&restricted, |p, q| p - q))?);
        }
        debug_assert!(finest.len() + 1 == (g.len() + 1) * stride);
        hs.push(g.h(0));
        errors.push(e);
    }
    Ok(RateFit::new(hs, errors))
}

/// Path functionals collected by [`ensemble_run`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Functional {
    SupL2Sq,
    GradL2Sq,
    PenaltyL2Sq,
    LaplacianL2Sq,
    TimeDerivativeL2,
    TimeDerivativeL2Sq,
    DeltaSq,
    EnergyRatio,
    MultiplierRatio,
}

impl Functional {
    pub const ALL: [Functional; 9] = [
        Functional::SupL2Sq,
        Functional::GradL2Sq,
        Functional::PenaltyL2Sq,
        Functional::LaplacianL2Sq,
        Functional::TimeDerivativeL2,
        Functional::TimeDerivativeL2Sq,
        Functional::DeltaSq,
        Functional::EnergyRatio,
        Functional::MultiplierRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::SupL2Sq => "sup_l2_sq",
            Functional::GradL2Sq => "int_grad_l2_sq",
            Functional::PenaltyL2Sq => "int_penalty_l2_sq",
            Functional::LaplacianL2Sq => "int_laplacian_l2_sq",
            Functional::TimeDerivativeL2 => "int_dydt_l2",
            Functional::TimeDerivativeL2Sq => "int_dydt_l2_sq",
            Functional::DeltaSq => "delta_sq",
            Functional::EnergyRatio => "energy_ratio",
            Functional::MultiplierRatio => "multiplier_ratio",
        }
    }
}

/// All functionals of one path, in [`Functional::ALL`] order.
pub fn path_functionals(grid: &Grid, sol: &PathSolution, x: &Field, forcing: &Forcing, delta: f64, slack: f64) -> Result<Vec<f64>> {
    let ty = &sol.traj_y;
    let mut sup: f64 = 0.0;
    let (mut grad, mut pen, mut lap, mut dy, mut dy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 0..ty.len() {
        let y = &ty.frames[n];
        sup = sup.max(norm_l2(grid, y)?.powi(2));
        if n + 1 < ty.len() {
            let dt = ty.times[n + 1] - ty.times[n];
            grad += dt * seminorm_h1(grid, y)?.powi(2);
            pen += dt * norm_l2(grid, &y.map(|v| beta_eps(v, sol.eps)))?.powi(2);
            lap += dt * norm_l2(grid, &apply_laplacian(grid, y)?)?.powi(2);
            let d = norm_l2(grid, &ty.frames[n + 1].zip_map(y, |a, b| (a - b) / dt))?;
            dy += dt * d;
            dy2 += dt * d * d;
        }
    }
    let en = energy_check(grid, sol, x, forcing, delta, slack)?;
    Ok(vec![sup, grad, pen, lap, dy, dy2, delta * delta, en.ratio_energy, en.ratio_multiplier])
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalStats {
    pub name: &'static str,
    pub mean: f64,
    pub variance: f64,
    pub ci_half_width: f64,
    pub values: Vec<f64>,
}

/// Mean, unbiased variance and 95% normal half-width `1.96 √(var / n)`.
pub fn sample_stats(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var, 1.96 * (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub n_failures: usize,
    pub failures: Vec<(u64, String)>,
    pub functionals: Vec<FunctionalStats>,
    /// `mean / (|x|² + ∫|f|²)` per functional.
    pub empirical_c: Vec<(&'static str, f64)>,
}

impl EnsembleStats {
    pub fn get(&self, name: &str) -> Option<&FunctionalStats> {
        self.functionals.iter().find(|f| f.name == name)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SviError::Study(format!("cannot start worker pool: {e}")))
}

/// Runs paths `0..n_paths` of `problem` on `workers` threads. Results are
/// reduced in path order, so the statistics do not depend on scheduling.
pub fn ensemble_run(
    problem: &ObstacleProblem,
    n_paths: usize,
    base_seed: u64,
    functionals: &[Functional],
    slack: f64,
    workers: usize,
) -> Result<EnsembleStats> {
    if n_paths < 2 {
        return Err(SviError::Study(format!("ensembles need at least 2 paths, got {n_paths}")));
    }
    let x = problem.init.evaluate(&problem.grid)?;
    let results: Vec<Result<Vec<f64>>> = pool(workers)?.install(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|id| {
                let paths = problem.paths(base_seed, id);
                let sol = problem.solve(&paths)?;
                path_functionals(&problem.grid, &sol, &x, &problem.forcing, path_sup(&paths), slack)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(n_paths);
    let mut failures = Vec::new();
    for (id, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => rows.push(v),
            Err(e) if e.is_numerical() => failures.push((id as u64, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if failures.len() * 10 > n_paths {
        return Err(SviError::Study(format!("{} of {} paths failed; first: {}", failures.len(), n_paths, failures[0].1)));
    }
    let tg = &problem.tg;
    let mut f_int = 0.0;
    for n in 0..tg.steps() {
        f_int += tg.dt() * norm_l2(&problem.grid, &problem.forcing.eval(tg.node(n), &problem.grid))?.powi(2);
    }
    let scale = norm_l2(&problem.grid, &x)?.powi(2) + f_int;
    let mut stats = Vec::new();
    let mut empirical_c = Vec::new();
    for f in functionals {
        let col = Functional::ALL.iter().position(|g| g == f).expect("known functional");
        let values: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let (mean, variance, ci_half_width) = sample_stats(&values);
        empirical_c.push((f.name(), if scale > 0.0 { mean / scale } else { f64::NAN }));
        stats.push(FunctionalStats { name: f.name(), mean, variance, ci_half_width, values });
    }
    Ok(EnsembleStats { n_paths, n_failures: failures.len(), failures, functionals: stats, empirical_c })
}

/// Brownian sample moments over `n_paths` independent paths.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMoments {
    pub n_paths: usize,
    /// Per noise index: mean and standard error of `β_k(T)²`.
    pub terminal_sq: Vec<(f64, f64)>,
    /// Mean, variance and 95% half-width of `δ² = sup_{k,t} β_k(t)²`.
    pub delta_sq: (f64, f64, f64),
}

pub fn noise_moments(tg: &TimeGrid, m: usize, n_paths: usize, base_seed: u64, workers: usize) -> Result<NoiseMoments> {
    if n_paths < 2 || m == 0 {
        return Err(SviError::Study("noise moments need m >= 1 and at least 2 paths".into()));
    }
    let rows: Vec<(Vec<f64>, f64)> = pool(workers)?.install(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|id| {
                let p = sample_paths(tg, m, base_seed, id);
                let term = (0..m).map(|k| p.value(k, tg.steps()).powi(2)).collect();
                (term, path_sup(&p).powi(2))
            })
            .collect()
    });
    let terminal_sq = (0..m)
        .map(|k| {
            let v: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            let (mean, var, _) = sample_stats(&v);
            (mean, (var / n_paths as f64).sqrt())
        })
        .collect();
    let d: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(NoiseMoments { n_paths, terminal_sq, delta_sq: sample_stats(&d) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loglog_fit_recovers_power_law() {
        let x = [1e-1, 1e-2, 1e-3, 1e-4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.7)).collect();
        let f = RateFit::new(x.to_vec(), y);
        assert_relative_eq!(f.slope.unwrap(), 0.7, epsilon = 1e-12);
        assert_relative_eq!(f.intercept.unwrap(), 3f64.ln(), epsilon = 1e-10);
        assert!(f.residual.unwrap() < 1e-12);
        assert!(f.passes(0.45));
        let running = f.running_slopes();
        assert!(running[0].is_none());
        assert_relative_eq!(running[3].unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn zero_errors_are_degenerate() {
        let f = RateFit::new(vec![1.0, 0.5, 0.25, 0.125], vec![0.0; 4]);
        assert!(f.is_degenerate());
        assert!(!f.passes(0.0));
    }

    #[test]
    fn stats_of_constant_sample() {
        let (m, v, h) = sample_stats(&[2.0; 8]);
        assert_eq!((m, v, h), (2.0, 0.0, 0.0));
        let (m, v, _) = sample_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(v, 5.0 / 3.0, epsilon = 1e-15);
    }
}
