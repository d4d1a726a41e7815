//! Path-wise solution of the stochastic obstacle problem.
//!
//! For a fixed Brownian path the exponential transform turns the equation
//! for `X` into a random parabolic inequality for `y = e^{-μ} X`, which is
//! penalized and marched with the θ-scheme of [`crate::scheme`]. A direct
//! Euler–Maruyama integrator on `X` is provided as an independent route.

use crate::error::{Result, SviError};
use crate::grid::{BoundaryKind, Field, Grid};
use crate::noise::{BrownianPathSet, CoeffSpec, NoiseFields, TimeGrid};
use crate::penalty::beta_eps;
use crate::scheme::{explicit_rhs, penalty_field, stability_ratio, GhostValues, NewtonStats, StepInputs, StepOperator};
use crate::transform::{effective_source, ReactionSpec, DEFAULT_MU_CAP};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    /// Implicitness of the diffusion, in `[1/2, 1]`.
    pub theta: f64,
    pub eps: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub mu_cap: f64,
    /// Number of times a path violating the transport guard is retried
    /// with the step halved.
    pub max_retries: u32,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { theta: 1.0, eps: 1e-3, newton_tol: 1e-10, newton_max: 500, mu_cap: DEFAULT_MU_CAP, max_retries: 3 }
    }
}

impl SolveConfig {
    pub fn with_eps(eps: f64) -> Self {
        SolveConfig { eps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(SviError::Config(format!("time.theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(SviError::Config(format!("penalty.eps must be > 0, got {}", self.eps)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(SviError::Config("newton_tol must be > 0".into()));
        }
        if !(self.mu_cap > 0.0) {
            return Err(SviError::Config("mu_cap must be > 0".into()));
        }
        Ok(())
    }
}

/// Catalog of initial data. Every entry is nonnegative and vanishes on the
/// boundary of the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialKind {
    Zero,
    /// `Π sin(π ξ_a / L_a)`
    SineBump,
    /// `max(0, 1 - |ξ - center| / radius)`
    TruncatedCone { center: [f64; 2], radius: f64 },
    /// `min(1, dist(ξ, ∂O) / width)`
    ConstantCutoff { width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialData {
    pub kind: InitialKind,
    pub amplitude: f64,
}

fn boundary_distance(xi: [f64; 2], lengths: &[f64]) -> f64 {
    lengths.iter().enumerate().map(|(a, &l)| xi[a].min(l - xi[a])).fold(f64::INFINITY, f64::min)
}

impl InitialData {
    pub fn zero() -> Self {
        InitialData { kind: InitialKind::Zero, amplitude: 0.0 }
    }

    pub fn sine(amplitude: f64) -> Self {
        InitialData { kind: InitialKind::SineBump, amplitude }
    }

    pub fn evaluate(&self, grid: &Grid) -> Result<Field> {
        if !(self.amplitude >= 0.0) {
            return Err(SviError::Config(format!("initial amplitude must be >= 0, got {}", self.amplitude)));
        }
        let lengths = grid.lengths().to_vec();
        let a = self.amplitude;
        let field = match self.kind {
            InitialKind::Zero => grid.zeros(),
            InitialKind::SineBump => grid.field_from_fn(|xi| {
                a * (0..lengths.len())
                    .map(|ax| (std::f64::consts::PI * xi[ax] / lengths[ax]).sin().max(0.0))
                    .product::<f64>()
            }),
            InitialKind::TruncatedCone { center, radius } => {
                if !(radius > 0.0) {
                    return Err(SviError::Config("initial cone radius must be > 0".into()));
                }
                grid.field_from_fn(|xi| {
                    let r2: f64 = (0..lengths.len()).map(|ax| (xi[ax] - center[ax]).powi(2)).sum();
                    let bump = a * (1.0 - r2.sqrt() / radius).max(0.0);
                    // keep the support inside the domain
                    bump.min(a * boundary_distance(xi, &lengths) / radius)
                })
            }
            InitialKind::ConstantCutoff { width } => {
                if !(width > 0.0) {
                    return Err(SviError::Config("initial cutoff width must be > 0".into()));
                }
                grid.field_from_fn(|xi| a * (boundary_distance(xi, &lengths) / width).min(1.0))
            }
        };
        Ok(field)
    }
}

/// Deterministic space-time forcing `f(t, ξ)` in the original variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Forcing {
    Zero,
    Constant(f64),
    /// `amp Π sin(k_a π ξ_a / L_a)` (wave number 0 means constant along that axis).
    SineMode { amp: f64, modes: [u32; 2] },
    /// `amp cos(ω t) Π sin(k_a π ξ_a / L_a)`
    Oscillating { amp: f64, omega: f64, modes: [u32; 2] },
    /// `-amp` within `width` of the boundary, 0 elsewhere.
    BoundarySuction { amp: f64, width: f64 },
}

impl Forcing {
    pub fn eval(&self, t: f64, grid: &Grid) -> Field {
        let lengths = grid.lengths().to_vec();
        let modes_at = |xi: [f64; 2], modes: [u32; 2]| -> f64 {
            (0..lengths.len())
                .map(|a| {
                    if modes[a] == 0 {
                        1.0
                    } else {
                        (modes[a] as f64 * std::f64::consts::PI * xi[a] / lengths[a]).sin()
                    }
                })
                .product()
        };
        match *self {
            Forcing::Zero => grid.zeros(),
            Forcing::Constant(c) => Field::constant(grid.len(), c),
            Forcing::SineMode { amp, modes } => grid.field_from_fn(|xi| amp * modes_at(xi, modes)),
            Forcing::Oscillating { amp, omega, modes } => {
                let s = amp * (omega * t).cos();
                grid.field_from_fn(|xi| s * modes_at(xi, modes))
            }
            Forcing::BoundarySuction { amp, width } => grid.field_from_fn(|xi| {
                if boundary_distance(xi, &lengths) < width {
                    -amp
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Forcing::Oscillating { .. })
    }
}

/// A sequence of fields on a time grid.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Trajectory { times: Vec::with_capacity(n), frames: Vec::with_capacity(n) }
    }

    pub fn push(&mut self, t: f64, f: Field) {
        self.times.push(t);
        self.frames.push(f);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.frames.last().expect("empty trajectory")
    }

    pub fn map(&self, f: impl Fn(&Field) -> Field) -> Trajectory {
        Trajectory { times: self.times.clone(), frames: self.frames.iter().map(f).collect() }
    }

    pub fn min(&self) -> f64 {
        self.frames.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.frames.iter().map(|f| f.max()).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    /// Newton iterations summed over the substeps of this step.
    pub newton_iterations: usize,
    pub residual: f64,
    /// `dt sup|g| / h`; the guard requires it to be at most 1.
    pub stability_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSolution {
    /// Transformed variable `y`.
    pub traj_y: Trajectory,
    /// `η_ε = β_ε(y)` on the constrained nodes.
    pub traj_eta: Trajectory,
    /// `X = e^μ y`.
    pub traj_x: Trajectory,
    /// Multiplier in the original variables, `e^μ η_ε`.
    pub traj_eta_x: Trajectory,
    pub traj_mu: Trajectory,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Substeps per time step that were finally used (1 unless retried).
    pub substeps: usize,
    pub eps: f64,
}

impl PathSolution {
    pub fn max_newton_iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.newton_iterations).max().unwrap_or(0)
    }
}

/// Which nodes carry the penalty.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Constraint<'a> {
    Interior,
    /// Signorini: boundary penalty and Robin term through ghost nodes.
    Boundary(&'a crate::signorini::BoundaryData),
}

/// Source term as seen by the transformed equation.
pub(crate) enum Source<'a> {
    /// Original-variable forcing `f`; the solver uses `e^{-μ} f`.
    Original(&'a Forcing),
    /// A time-constant source already in the transformed frame.
    Transformed(&'a Field),
}

pub(crate) struct Problem<'a> {
    pub grid: &'a Grid,
    pub tg: &'a TimeGrid,
    pub cs: &'a CoeffSpec,
    pub rs: &'a ReactionSpec,
    pub source: Source<'a>,
    pub init: Field,
    pub cfg: &'a SolveConfig,
    pub paths: &'a BrownianPathSet,
    /// 1D Dirichlet boundary values of `y` growing linearly in time,
    /// `(left rate, right rate)`.
    pub boundary_ramp: Option<(f64, f64)>,
    pub constraint: Constraint<'a>,
}

impl Problem<'_> {
    fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.cs.m() != self.paths.m() {
            return Err(SviError::NoiseMismatch { coeffs: self.cs.m(), paths: self.paths.m() });
        }
        if self.paths.steps() != self.tg.steps() && self.paths.m() > 0 {
            return Err(SviError::Config(format!(
                "path set has {} steps but the time grid has {}",
                self.paths.steps(),
                self.tg.steps()
            )));
        }
        crate::error::check_len(self.grid.len(), self.init.len())?;
        if self.boundary_ramp.is_some() && (self.grid.dim() != 1 || self.grid.bc() != BoundaryKind::Dirichlet) {
            return Err(SviError::Config("boundary ramps need a 1D Dirichlet grid".into()));
        }
        Ok(())
    }

    fn fields_at(&self, t: f64, node: Option<usize>) -> Result<NoiseFields> {
        let betas = match node {
            Some(n) => self.paths.at_node(n),
            None => self.paths.at_time(t),
        };
        let nf = NoiseFields::assemble(self.cs, self.grid, t, &betas)?;
        let worst = nf.mu.max_abs();
        if worst > self.cfg.mu_cap || !worst.is_finite() {
            return Err(SviError::MuOverflow { value: worst, cap: self.cfg.mu_cap, t });
        }
        Ok(nf)
    }

    fn source_at(&self, t: f64, nf: &NoiseFields) -> Result<Field> {
        match self.source {
            Source::Original(f) => effective_source(&nf.mu, &f.eval(t, self.grid)),
            Source::Transformed(f) => Ok(f.clone()),
        }
    }

    fn march(&self, substeps: usize) -> Result<PathSolution> {
        let grid = self.grid;
        let cfg = self.cfg;
        let steps = self.tg.steps();
        let dt = self.tg.dt() / substeps as f64;
        let eps = cfg.eps;

        let (weight, bd) = match self.constraint {
            Constraint::Interior => (None, None),
            Constraint::Boundary(bd) => (Some(bd.penalty_weight().to_vec()), Some(bd)),
        };

        let mut traj_y = Trajectory::with_capacity(steps + 1);
        let mut traj_eta = Trajectory::with_capacity(steps + 1);
        let mut traj_x = Trajectory::with_capacity(steps + 1);
        let mut traj_eta_x = Trajectory::with_capacity(steps + 1);
        let mut traj_mu = Trajectory::with_capacity(steps + 1);
        let mut diagnostics = Vec::with_capacity(steps);

        let mut record = |t: f64, y: &Field, nf: &NoiseFields| {
            let eta = penalty_field(y, eps, weight.as_deref());
            let e: Vec<f64> = nf.mu.iter().map(|m| m.exp()).collect();
            traj_x.push(t, Field(y.iter().zip(&e).map(|(a, b)| a * b).collect()));
            traj_eta_x.push(t, Field(eta.iter().zip(&e).map(|(a, b)| a * b).collect()));
            traj_y.push(t, y.clone());
            traj_eta.push(t, eta);
            traj_mu.push(t, nf.mu.clone());
        };

        let mut y = self.init.clone();
        let mut nf = self.fields_at(0.0, Some(0))?;
        record(0.0, &y, &nf);

        for n in 0..steps {
            let t_n = self.tg.node(n);
            let mut diag = StepDiagnostics { t: self.tg.node(n + 1), ..Default::default() };
            for j in 0..substeps {
                let t = t_n + j as f64 * dt;
                if j > 0 {
                    nf = self.fields_at(t, None)?;
                }
                let ratio = stability_ratio(grid, &nf, dt);
                diag.stability_ratio = diag.stability_ratio.max(ratio);
                if ratio > 1.0 {
                    return Err(SviError::Stability { t, ratio, retries: 0 });
                }
                let robin = bd.map(|bd| bd.robin_coefficients(grid, &nf));
                let op = StepOperator {
                    grid,
                    dt,
                    theta: cfg.theta,
                    eps,
                    robin: robin.as_deref(),
                    penalty_weight: weight.as_deref(),
                };
                let source = self.source_at(t, &nf)?;
                let ghosts = self.boundary_ramp.map(|(l, r)| GhostValues {
                    old: (l * t, r * t),
                    new: (l * (t + dt), r * (t + dt)),
                });
                let inputs = StepInputs { fields: &nf, reaction: self.rs, source: &source, ghosts };
                let rhs = explicit_rhs(&op, &y, &inputs)?;
                let (next, stats) = op.solve(&rhs, &y, cfg.newton_tol, cfg.newton_max, t + dt)?;
                diag.newton_iterations += stats.iterations;
                diag.residual = diag.residual.max(stats.residual);
                y = Field(next);
                if !y.is_finite() {
                    return Err(SviError::NewtonFailure { t: t + dt, iterations: stats.iterations, residual: f64::NAN });
                }
            }
            let t_next = self.tg.node(n + 1);
            nf = self.fields_at(t_next, Some(n + 1))?;
            record(t_next, &y, &nf);
            diagnostics.push(diag);
        }

        Ok(PathSolution { traj_y, traj_eta, traj_x, traj_eta_x, traj_mu, diagnostics, substeps, eps })
    }

    /// Marches the path, halving the step on transport-guard violations.
    pub fn solve(&self) -> Result<PathSolution> {
        self.check()?;
        let mut last = None;
        for retry in 0..=self.cfg.max_retries {
            match self.march(1 << retry) {
                Err(SviError::Stability { t, ratio, .. }) => {
                    last = Some(SviError::Stability { t, ratio, retries: retry });
                }
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// One θ-step of the penalized transformed equation with the interior obstacle.
///
/// `fields` are the noise-derived coefficients at the old time level and
/// `source` is `f̃` there.
pub fn step_interior(
    grid: &Grid,
    y_n: &Field,
    fields: &NoiseFields,
    reaction: &ReactionSpec,
    source: &Field,
    dt: f64,
    cfg: &SolveConfig,
) -> Result<(Field, NewtonStats)> {
    cfg.validate()?;
    crate::error::check_len(grid.len(), y_n.len())?;
    crate::error::check_len(grid.len(), source.len())?;
    let ratio = stability_ratio(grid, fields, dt);
    if ratio > 1.0 {
        return Err(SviError::Stability { t: f64::NAN, ratio, retries: 0 });
    }
    let op = StepOperator { grid, dt, theta: cfg.theta, eps: cfg.eps, robin: None, penalty_weight: None };
    let inputs = StepInputs { fields, reaction, source, ghosts: None };
    let rhs = explicit_rhs(&op, y_n, &inputs)?;
    let (y, stats) = op.solve(&rhs, y_n, cfg.newton_tol, cfg.newton_max, f64::NAN)?;
    Ok((Field(y), stats))
}

/// Solves one path of the obstacle problem through the exponential transform.
#[allow(clippy::too_many_arguments)]
pub fn solve_path(
    grid: &Grid,
    tg: &TimeGrid,
    cs: &CoeffSpec,
    rs: &ReactionSpec,
    forcing: &Forcing,
    x: &InitialData,
    cfg: &SolveConfig,
    paths: &BrownianPathSet,
) -> Result<PathSolution> {
    if grid.bc() != BoundaryKind::Dirichlet {
        return Err(SviError::Config("the obstacle solver needs a Dirichlet grid".into()));
    }
    let init = x.evaluate(grid)?;
    Problem {
        grid,
        tg,
        cs,
        rs,
        source: Source::Original(forcing),
        init,
        cfg,
        paths,
        boundary_ramp: None,
        constraint: Constraint::Interior,
    }
    .solve()
}

/// The multiplier `β_ε(y_ε)` of a finished run.
pub fn recover_multiplier(sol: &PathSolution) -> Trajectory {
    sol.traj_y.map(|y| y.map(|v| beta_eps(v, sol.eps)))
}

/// Euler–Maruyama on the original equation: implicit diffusion and penalty,
/// explicit reaction and forcing, noise `X_n Σ_k μ_k(t_n) Δβ_k(n)`.
#[allow(clippy::too_many_arguments)]
pub fn direct_em_solve(
    grid: &Grid,
    tg: &TimeGrid,
    cs: &CoeffSpec,
    rs: &ReactionSpec,
    forcing: &Forcing,
    x: &InitialData,
    cfg: &SolveConfig,
    paths: &BrownianPathSet,
) -> Result<PathSolution> {
    cfg.validate()?;
    if grid.bc() != BoundaryKind::Dirichlet {
        return Err(SviError::Config("the obstacle solver needs a Dirichlet grid".into()));
    }
    if cs.m() != paths.m() {
        return Err(SviError::NoiseMismatch { coeffs: cs.m(), paths: paths.m() });
    }
    let n_nodes = grid.len();
    let steps = tg.steps();
    let dt = tg.dt();
    let eps = cfg.eps;
    let op = StepOperator { grid, dt, theta: cfg.theta, eps, robin: None, penalty_weight: None };

    let mut sol = PathSolution {
        traj_y: Trajectory::with_capacity(steps + 1),
        traj_eta: Trajectory::with_capacity(steps + 1),
        traj_x: Trajectory::with_capacity(steps + 1),
        traj_eta_x: Trajectory::with_capacity(steps + 1),
        traj_mu: Trajectory::with_capacity(steps + 1),
        diagnostics: Vec::with_capacity(steps),
        substeps: 1,
        eps,
    };
    let record = |sol: &mut PathSolution, n: usize, x: &Field| -> Result<()> {
        let t = tg.node(n);
        let mu = NoiseFields::at_node(cs, paths, n, grid)?.mu;
        let eta_x = x.map(|v| beta_eps(v, eps));
        let em: Vec<f64> = mu.iter().map(|m| (-m).exp()).collect();
        sol.traj_y.push(t, Field(x.iter().zip(&em).map(|(a, b)| a * b).collect()));
        sol.traj_eta.push(t, Field(eta_x.iter().zip(&em).map(|(a, b)| a * b).collect()));
        sol.traj_x.push(t, x.clone());
        sol.traj_eta_x.push(t, eta_x);
        sol.traj_mu.push(t, mu);
        Ok(())
    };

    let mut xs = x.evaluate(grid)?;
    record(&mut sol, 0, &xs)?;
    let mut ax = vec![0.0; n_nodes];
    for n in 0..steps {
        let t = tg.node(n);
        op.apply_a(&xs, &mut ax);
        let f = forcing.eval(t, grid);
        let mut noise = vec![0.0; n_nodes];
        for k in 0..cs.m() {
            let mu_k = cs.term_field(k, t, grid);
            let db = paths.increment(k, n);
            for i in 0..n_nodes {
                noise[i] += mu_k[i] * db;
            }
        }
        let rhs: Vec<f64> = (0..n_nodes)
            .map(|i| {
                xs[i] - (1.0 - cfg.theta) * dt * ax[i] + dt * (f[i] - rs.eval(xs[i])) + xs[i] * noise[i]
            })
            .collect();
        let (next, stats) = op.solve(&rhs, &xs, cfg.newton_tol, cfg.newton_max, tg.node(n + 1))?;
        xs = Field(next);
        if !xs.is_finite() {
            return Err(SviError::NewtonFailure { t: tg.node(n + 1), iterations: stats.iterations, residual: f64::NAN });
        }
        record(&mut sol, n + 1, &xs)?;
        sol.diagnostics.push(StepDiagnostics {
            t: tg.node(n + 1),
            newton_iterations: stats.iterations,
            residual: stats.residual,
            stability_ratio: 0.0,
        });
    }
    Ok(sol)
}
