//! Time-stepping engine shared by the interior-obstacle, Signorini and
//! Stefan solvers.
//!
//! One step of the θ-scheme reads
//!
//! ```text
//! (I + θ dt A) y⁺ + dt P β_ε(y⁺) = y + (1-θ) dt (-A y) + dt (-F̃(y) - g·∇y + f̃)
//! ```
//!
//! where `A = -Δ_h` plus an optional diagonal Robin part, and `P` is a
//! nonnegative diagonal weight selecting the constrained nodes (all nodes
//! for the interior obstacle, boundary nodes for Signorini). The penalty is
//! piecewise linear, so semismooth Newton on the active set `{y⁺ < 0}`
//! terminates once the set stops changing.

use crate::error::{Result, SviError};
use crate::grid::{BoundaryKind, Field, Grid};
use crate::linalg::{conjugate_gradient, solve_tridiagonal};
use crate::noise::NoiseFields;
use crate::penalty::beta_eps;
use crate::transform::{effective_reaction, ReactionSpec};

/// Ghost values for a 1D Dirichlet grid, `(left, right)` at the old and new time levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct GhostValues {
    pub old: (f64, f64),
    pub new: (f64, f64),
}

pub(crate) struct StepOperator<'a> {
    pub grid: &'a Grid,
    pub dt: f64,
    pub theta: f64,
    pub eps: f64,
    /// Extra diagonal term of `A` (Robin coefficient times `2/h`), if any.
    pub robin: Option<&'a [f64]>,
    /// `None` means weight 1 on every node.
    pub penalty_weight: Option<&'a [f64]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

impl<'a> StepOperator<'a> {
    fn weight(&self, i: usize) -> f64 {
        self.penalty_weight.map_or(1.0, |w| w[i])
    }

    fn robin(&self, i: usize) -> f64 {
        self.robin.map_or(0.0, |r| r[i])
    }

    /// `A y` (without the penalty).
    pub fn apply_a(&self, y: &[f64], out: &mut [f64]) {
        self.grid.laplacian_into(y, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o = -*o + self.robin(i) * y[i];
        }
    }

    /// Nonlinear residual `M(y) - rhs` in the max norm.
    pub fn residual(&self, y: &[f64], rhs: &[f64]) -> f64 {
        let mut ay = vec![0.0; y.len()];
        self.apply_a(y, &mut ay);
        (0..y.len())
            .map(|i| {
                let m = y[i] + self.theta * self.dt * ay[i] + self.dt * self.weight(i) * beta_eps(y[i], self.eps);
                (m - rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn solve_linear(&self, active: &[bool], rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid;
        let n = grid.len();
        let td = self.theta * self.dt;
        let extra: Vec<f64> = (0..n)
            .map(|i| {
                let pen = if active[i] { self.dt * self.weight(i) / self.eps } else { 0.0 };
                1.0 + td * self.robin(i) + pen
            })
            .collect();
        if grid.dim() == 1 {
            let h = grid.h(0);
            let k = td / (h * h);
            let diag: Vec<f64> = extra.iter().map(|e| e + 2.0 * k).collect();
            let mut sub = vec![-k; n - 1];
            let mut sup = vec![-k; n - 1];
            if grid.bc() == BoundaryKind::Neumann {
                sup[0] = -2.0 * k;
                sub[n - 2] = -2.0 * k;
            }
            return solve_tridiagonal(&sub, &diag, &sup, rhs);
        }
        // 2D: CG on the quadrature-weighted (symmetric) system.
        let w = grid.weights();
        let stencil_diag: f64 = (0..grid.dim()).map(|a| 2.0 / (grid.h(a) * grid.h(a))).sum();
        let pre: Vec<f64> = (0..n).map(|i| w[i] * (extra[i] + td * stencil_diag)).collect();
        let wrhs: Vec<f64> = (0..n).map(|i| w[i] * rhs[i]).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            grid.laplacian_into(x, out);
            for i in 0..n {
                out[i] = w[i] * (extra[i] * x[i] - td * out[i]);
            }
        };
        let (x, _) = conjugate_gradient(apply, &pre, &wrhs, guess, 1e-13, 20 * n + 100)?;
        Ok(x)
    }

    /// Semismooth Newton on `M(y) = rhs`, starting from `guess`.
    pub fn solve(&self, rhs: &[f64], guess: &[f64], tol: f64, max_iter: usize, t: f64) -> Result<(Vec<f64>, NewtonStats)> {
        let n = self.grid.len();
        let constrained = |i: usize| self.weight(i) > 0.0;
        let mut active: Vec<bool> = (0..n).map(|i| constrained(i) && guess[i] < 0.0).collect();
        let mut y = guess.to_vec();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for it in 1..=max_iter.max(1) {
            y = self.solve_linear(&active, rhs, &y)?;
            let next: Vec<bool> = (0..n).map(|i| constrained(i) && y[i] < 0.0).collect();
            if next == active {
                let residual = self.residual(&y, rhs);
                if residual <= tol * scale || self.grid.dim() > 1 && residual <= 1e-8 * scale {
                    return Ok((y, NewtonStats { iterations: it, residual }));
                }
                return Err(SviError::NewtonFailure { t, iterations: it, residual });
            }
            active = next;
        }
        let residual = self.residual(&y, rhs);
        Err(SviError::NewtonFailure { t, iterations: max_iter, residual })
    }
}

/// Everything a single step needs besides the state.
pub(crate) struct StepInputs<'a> {
    pub fields: &'a NoiseFields,
    pub reaction: &'a ReactionSpec,
    /// `f̃` at the old time level.
    pub source: &'a [f64],
    pub ghosts: Option<GhostValues>,
}

/// Right-hand side of one θ-step.
pub(crate) fn explicit_rhs(op: &StepOperator<'_>, y: &[f64], inp: &StepInputs<'_>) -> Result<Vec<f64>> {
    let grid = op.grid;
    let n = grid.len();
    let nf = inp.fields;
    let reaction = effective_reaction(inp.reaction, &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, y)?;
    let mut ay = vec![0.0; n];
    op.apply_a(y, &mut ay);
    let mut transport = vec![0.0; n];
    let mut comp = vec![0.0; n];
    for (axis, g) in nf.g.components.iter().enumerate() {
        if g.max_abs() == 0.0 {
            continue;
        }
        grid.gradient_axis_into(y, axis, &mut comp);
        for i in 0..n {
            transport[i] += g[i] * comp[i];
        }
    }
    let dt = op.dt;
    let mut rhs: Vec<f64> = (0..n)
        .map(|i| y[i] - (1.0 - op.theta) * dt * ay[i] + dt * (-reaction[i] - transport[i] + inp.source[i]))
        .collect();
    if let Some(gv) = inp.ghosts {
        let h = grid.h(0);
        let c = dt / (h * h);
        let left = op.theta * gv.new.0 + (1.0 - op.theta) * gv.old.0;
        let right = op.theta * gv.new.1 + (1.0 - op.theta) * gv.old.1;
        rhs[0] += c * left;
        rhs[n - 1] += c * right;
    }
    Ok(rhs)
}

/// `dt sup|g| / h_min`.
pub(crate) fn stability_ratio(grid: &Grid, fields: &NoiseFields, dt: f64) -> f64 {
    dt * fields.g.max_norm() / grid.min_h()
}

pub(crate) fn penalty_field(y: &[f64], eps: f64, weight: Option<&[f64]>) -> Field {
    Field(
        y.iter()
            .enumerate()
            .map(|(i, &v)| if weight.is_none_or(|w| w[i] > 0.0) { beta_eps(v, eps) } else { 0.0 })
            .collect(),
    )
}
