//! One-phase Stefan problem through the Baiocchi transform.
//!
//! The time-integrated temperature `y = ∫ θ` solves an obstacle problem with
//! the time-constant source `f₀ = θ₀` on the initially liquid set `O⁰` and
//! `-ρ` elsewhere. On the solid region the multiplier absorbs the `-ρ`, so
//! the solver works with the full source. Temperature is recovered as
//! `θ = e^μ ∂y/∂t` by backward differencing.

use crate::error::{check_len, Result, SviError};
use crate::grid::{BoundaryKind, Field, Grid};
use crate::noise::{BrownianPathSet, CoeffSpec, TimeGrid};
use crate::pathsolver::{Constraint, PathSolution, Problem, SolveConfig, Source, Trajectory};
use crate::transform::ReactionSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct StefanData {
    theta0: Field,
    rho: f64,
    mask: Vec<bool>,
    /// Fixed temperature at `ξ = 0` (1D only).
    boundary_temperature: Option<f64>,
}

impl StefanData {
    pub fn new(theta0: Field, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(SviError::Config(format!("stefan.rho must be > 0, got {rho}")));
        }
        if let Some(bad) = theta0.iter().find(|v| !(**v >= 0.0)) {
            return Err(SviError::Config(format!("stefan.theta0 must be >= 0, found {bad}")));
        }
        let mask = theta0.iter().map(|&v| v > 0.0).collect();
        Ok(StefanData { theta0, rho, mask, boundary_temperature: None })
    }

    /// Holds `θ = θ_b` at the left end of a 1D domain, so that
    /// `y(t, 0) = θ_b t`.
    pub fn with_boundary_temperature(mut self, theta_b: f64) -> Result<Self> {
        if !(theta_b >= 0.0 && theta_b.is_finite()) {
            return Err(SviError::Config(format!("stefan.boundary_temperature must be >= 0, got {theta_b}")));
        }
        self.boundary_temperature = Some(theta_b);
        Ok(self)
    }

    pub fn theta0(&self) -> &Field {
        &self.theta0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Initially liquid nodes `{θ₀ > 0}`.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn boundary_temperature(&self) -> Option<f64> {
        self.boundary_temperature
    }
}

pub fn build_svi_source(sd: &StefanData, grid: &Grid) -> Result<Field> {
    check_len(grid.len(), sd.theta0.len())?;
    Ok(Field(
        sd.theta0
            .iter()
            .zip(&sd.mask)
            .map(|(&t, &liquid)| if liquid { t } else { -sd.rho })
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeBoundary {
    pub times: Vec<f64>,
    pub tol: f64,
    /// 1D front position per step (`None` when nothing is melted).
    pub front: Vec<Option<f64>>,
    /// Measure of `{y > tol}` per step.
    pub melted_measure: Vec<f64>,
    /// Number of connected melted components per step.
    pub components: Vec<usize>,
    /// Melted nodes with a solid neighbour, per step.
    pub interface: Vec<Vec<usize>>,
    /// First time each node is melted.
    pub crossing_time: Vec<Option<f64>>,
}

impl FreeBoundary {
    pub fn final_front(&self) -> Option<f64> {
        self.front.last().copied().flatten()
    }

    /// Largest decrease of the interpolated front between consecutive steps.
    pub fn max_retreat(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.front.windows(2) {
            match (w[0], w[1]) {
                (Some(a), Some(b)) => worst = worst.max(a - b),
                (Some(a), None) => worst = worst.max(a),
                _ => {}
            }
        }
        worst
    }

    /// Largest decrease of the melted measure between consecutive steps.
    pub fn max_measure_loss(&self) -> f64 {
        self.melted_measure.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    /// Neither the front nor the melted measure ever decreases by more than
    /// `tol`. Pass the cell size to test monotonicity at grid resolution.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let slack = tol * (1.0 + 1e-9) + 1e-14;
        self.max_measure_loss() <= slack && self.max_retreat() <= slack
    }
}

/// Connected components of the melted set (4- or 2-neighbour adjacency).
fn components(grid: &Grid, melted: &[bool]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; grid.len()];
    let mut out = Vec::new();
    for start in 0..grid.len() {
        if !melted[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in neighbours(grid, i) {
                if melted[j] && label[j] == usize::MAX {
                    label[j] = id;
                    comp.push(j);
                    stack.push(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn neighbours(grid: &Grid, i: usize) -> Vec<usize> {
    let mi = grid.multi_index(i);
    let mut out = Vec::with_capacity(4);
    for a in 0..grid.dim() {
        let mut up = mi;
        if mi[a] > 0 {
            up[a] -= 1;
            out.push(grid.index(up[0], up[1]));
        }
        let mut down = mi;
        if mi[a] + 1 < grid.count(a) {
            down[a] += 1;
            out.push(grid.index(down[0], down[1]));
        }
    }
    out
}

/// Front of one 1D frame: right end of the melted component that holds the
/// seed nodes (or touches `ξ = 0` when there are none), refined by linear
/// interpolation of the level `tol`.
fn front_1d(grid: &Grid, y: &[f64], tol: f64, melted: &[bool], comps: &[Vec<usize>], seed: Option<&[bool]>) -> Option<f64> {
    if comps.is_empty() {
        return None;
    }
    let has_seed = seed.is_some_and(|s| s.iter().any(|&v| v));
    let chosen: Vec<&Vec<usize>> = comps
        .iter()
        .filter(|c| {
            if has_seed {
                c.iter().any(|&i| seed.unwrap()[i])
            } else {
                c.contains(&0)
            }
        })
        .collect();
    let pool: Vec<&Vec<usize>> = if chosen.is_empty() { comps.iter().collect() } else { chosen };
    let last = pool.iter().flat_map(|c| c.iter()).copied().max()?;
    let xs = grid.axis_coords(0);
    let h = grid.h(0);
    let n = grid.len();
    // neighbour value beyond the last melted node: next node, or the
    // Dirichlet ghost 0 one step outside
    let (x_next, y_next) = if last + 1 < n {
        (xs[last + 1], y[last + 1])
    } else if grid.bc() == BoundaryKind::Dirichlet {
        (xs[last] + h, 0.0)
    } else {
        return Some(xs[last]);
    };
    debug_assert!(melted[last]);
    let (y0, y1) = (y[last], y_next);
    if y0 <= y1 {
        return Some(xs[last]);
    }
    let s = ((y0 - tol) / (y0 - y1)).clamp(0.0, 1.0);
    Some(xs[last] + s * (x_next - xs[last]))
}

/// Free boundary of `{y > tol}`. `seed` marks the initially liquid nodes.
pub fn extract_free_boundary(grid: &Grid, traj_y: &Trajectory, tol: f64, seed: Option<&[bool]>) -> Result<FreeBoundary> {
    if let Some(s) = seed {
        check_len(grid.len(), s.len())?;
    }
    let w = grid.weights();
    let mut fb = FreeBoundary {
        times: traj_y.times.clone(),
        tol,
        front: Vec::with_capacity(traj_y.len()),
        melted_measure: Vec::with_capacity(traj_y.len()),
        components: Vec::with_capacity(traj_y.len()),
        interface: Vec::with_capacity(traj_y.len()),
        crossing_time: vec![None; grid.len()],
    };
    for (t, y) in traj_y.times.iter().zip(&traj_y.frames) {
        check_len(grid.len(), y.len())?;
        let melted: Vec<bool> = y.iter().map(|&v| v > tol).collect();
        let comps = components(grid, &melted);
        for (i, &m) in melted.iter().enumerate() {
            if m && fb.crossing_time[i].is_none() {
                fb.crossing_time[i] = Some(*t);
            }
        }
        fb.front.push(if grid.dim() == 1 { front_1d(grid, y, tol, &melted, &comps, seed) } else { None });
        fb.melted_measure.push((0..grid.len()).filter(|&i| melted[i]).map(|i| w[i]).sum());
        fb.components.push(comps.len());
        fb.interface.push((0..grid.len()).filter(|&i| melted[i] && neighbours(grid, i).iter().any(|&j| !melted[j])).collect());
    }
    Ok(fb)
}

/// Temperature `θ_n = e^{μ_n} (y_n - y_{n-1}) / dt`, with `θ_0 = θ₀`.
pub fn recover_temperature(sol: &PathSolution, theta0: &Field) -> Trajectory {
    let ty = &sol.traj_y;
    let mut out = Trajectory::with_capacity(ty.len());
    out.push(ty.times[0], theta0.clone());
    for n in 1..ty.len() {
        let dt = ty.times[n] - ty.times[n - 1];
        let mu = &sol.traj_mu.frames[n];
        out.push(
            ty.times[n],
            Field((0..mu.len()).map(|i| mu[i].exp() * (ty.frames[n][i] - ty.frames[n - 1][i]) / dt).collect()),
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StefanSolution {
    pub sol: PathSolution,
    pub theta: Trajectory,
    pub fb: FreeBoundary,
    /// `∫∫ |η - f₀ 1_{solid}|` relative to `∫∫ |f₀|`: how far the multiplier
    /// of the full-source formulation is from the indicator formulation.
    pub source_residual: f64,
}

/// Solves the Stefan problem along one path. `tol_fb` defaults to `10 ε`.
#[allow(clippy::too_many_arguments)]
pub fn solve_stefan_svi(
    grid: &Grid,
    tg: &TimeGrid,
    cs: &CoeffSpec,
    sd: &StefanData,
    cfg: &SolveConfig,
    paths: &BrownianPathSet,
    tol_fb: Option<f64>,
) -> Result<StefanSolution> {
    if grid.bc() != BoundaryKind::Dirichlet {
        return Err(SviError::Config("the Stefan solver needs a Dirichlet grid".into()));
    }
    let f0 = build_svi_source(sd, grid)?;
    let rs = ReactionSpec::zero();
    let sol = Problem {
        grid,
        tg,
        cs,
        rs: &rs,
        source: Source::Transformed(&f0),
        init: grid.zeros(),
        cfg,
        paths,
        boundary_ramp: sd.boundary_temperature.map(|tb| (tb, 0.0)),
        constraint: Constraint::Interior,
    }
    .solve()?;
    let tol = tol_fb.unwrap_or(10.0 * cfg.eps);
    let theta = recover_temperature(&sol, &sd.theta0);
    let fb = extract_free_boundary(grid, &sol.traj_y, tol, Some(sd.mask()))?;

    let w = grid.weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 1..sol.traj_y.len() {
        let dt = sol.traj_y.times[n] - sol.traj_y.times[n - 1];
        let y = &sol.traj_y.frames[n];
        let eta = &sol.traj_eta.frames[n];
        for i in 0..grid.len() {
            let solid = if y[i] > tol { 0.0 } else { 1.0 };
            num += dt * w[i] * (eta[i] - f0[i].min(0.0) * solid).abs();
            den += dt * w[i] * f0[i].abs();
        }
    }
    let source_residual = if den > 0.0 { num / den } else { 0.0 };
    Ok(StefanSolution { sol, theta, fb, source_residual })
}

/// Classical one-phase similarity solution with fixed boundary temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub stefan_number: f64,
    pub lambda: f64,
    /// `|λ e^{λ²} erf(λ) - St/√π|`
    pub residual: f64,
}

impl Similarity {
    pub fn front(&self, t: f64) -> f64 {
        2.0 * self.lambda * t.max(0.0).sqrt()
    }

    /// `θ / θ_b` at `(t, ξ)`.
    pub fn profile(&self, t: f64, xi: f64) -> f64 {
        if t <= 0.0 || xi >= self.front(t) {
            return 0.0;
        }
        if self.lambda == 0.0 {
            return 0.0;
        }
        1.0 - libm::erf(xi / (2.0 * t.sqrt())) / libm::erf(self.lambda)
    }
}

fn similarity_lhs(l: f64) -> f64 {
    l * (l * l).exp() * libm::erf(l)
}

/// Root of `λ e^{λ²} erf(λ) = St/√π` by bisection to `1e-12`.
pub fn similarity_oracle(stefan_number: f64) -> Result<Similarity> {
    if !(stefan_number > 0.0 && stefan_number.is_finite()) {
        return Err(SviError::Bracket(format!("Stefan number must be positive and finite, got {stefan_number}")));
    }
    let target = stefan_number / std::f64::consts::PI.sqrt();
    let mut hi = 1.0;
    while similarity_lhs(hi) < target {
        hi *= 2.0;
        if hi > 16.0 {
            return Err(SviError::Bracket(format!("Stefan number {stefan_number} is out of the supported range")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1e-300) && hi - lo > 1e-300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if similarity_lhs(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = (similarity_lhs(lambda) - target).abs();
    Ok(Similarity { stefan_number, lambda, residual })
}

/// Time integral of the temperature from the melting time `ℓ(ξ)` (from 0
/// on the initially liquid set), in the frame `z = e^{-μ} θ` when a `μ`
/// trajectory is supplied. Right-endpoint quadrature, the companion of the
/// backward difference used to recover `θ`.
pub fn baiocchi_forward(theta: &Trajectory, fb: &FreeBoundary, mu: Option<&Trajectory>, liquid0: Option<&[bool]>) -> Result<Trajectory> {
    if theta.is_empty() {
        return Ok(Trajectory::default());
    }
    let n_nodes = theta.frames[0].len();
    check_len(n_nodes, fb.crossing_time.len())?;
    let mut acc = vec![0.0; n_nodes];
    let mut out = Trajectory::with_capacity(theta.len());
    out.push(theta.times[0], Field::zeros(n_nodes));
    for n in 1..theta.len() {
        let t = theta.times[n];
        let dt = t - theta.times[n - 1];
        for i in 0..n_nodes {
            let from_start = liquid0.is_some_and(|m| m[i]);
            let started = from_start || fb.crossing_time[i].is_some_and(|l| l <= t);
            if started {
                let z = match mu {
                    Some(m) => (-m.frames[n][i]).exp() * theta.frames[n][i],
                    None => theta.frames[n][i],
                };
                acc[i] += dt * z;
            }
        }
        out.push(t, Field(acc.clone()));
    }
    Ok(out)
}

/// Mean and the 10/50/90% quantiles of a sample of front positions.
pub fn front_statistics(fronts: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if fronts.is_empty() {
        return None;
    }
    let mut s = fronts.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
    };
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    Some((mean, q(0.1), q(0.5), q(0.9)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn source_is_piecewise() {
        let g = build_grid(1, &[1.0], 9, BoundaryKind::Dirichlet).unwrap();
        let theta0 = g.field_from_fn(|x| if x[0] < 0.5 { (2.0 * std::f64::consts::PI * x[0]).sin() } else { 0.0 });
        let sd = StefanData::new(theta0.clone(), 1.0).unwrap();
        let f0 = build_svi_source(&sd, &g).unwrap();
        for i in 0..g.len() {
            if g.position(i)[0] < 0.5 {
                assert_eq!(f0[i], theta0[i]);
            } else {
                assert_eq!(f0[i], -1.0);
            }
            assert_eq!(f0[i] >= 0.0, sd.mask()[i]);
        }
        let sd0 = StefanData::new(g.zeros(), 2.5).unwrap();
        assert!(build_svi_source(&sd0, &g).unwrap().iter().all(|&v| v == -2.5));
    }

    #[test]
    fn invalid_data() {
        assert!(StefanData::new(Field(vec![0.0, -1.0]), 1.0).is_err());
        assert!(StefanData::new(Field(vec![0.0]), 0.0).is_err());
        assert!(similarity_oracle(0.0).is_err());
        assert!(similarity_oracle(f64::NAN).is_err());
        assert!(similarity_oracle(1e200).is_err());
    }

    #[test]
    fn small_stefan_number_gives_small_lambda() {
        let a = similarity_oracle(1e-6).unwrap();
        let b = similarity_oracle(1e-3).unwrap();
        assert!(a.lambda < b.lambda);
        assert!(a.lambda < 1e-2);
        // λ² ≈ St/2 as St → 0
        assert!((a.lambda * a.lambda / 0.5e-6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn quantiles() {
        let (m, q10, q50, q90) = front_statistics(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m, 3.0);
        assert_eq!(q50, 3.0);
        assert!((q10 - 1.4).abs() < 1e-12);
        assert!((q90 - 4.6).abs() < 1e-12);
        assert!(front_statistics(&[]).is_none());
    }
}
