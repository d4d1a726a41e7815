//! Unilateral (Signorini) boundary conditions `∂X/∂ν + β(X) ∋ 0`.
//!
//! After the exponential transform the boundary condition for `y` becomes
//! `∂y/∂ν + (∂μ/∂ν) y + β(y) ∋ 0`. Boundary nodes are unknowns; the ghost
//! node beyond each face carries the prescribed flux, which turns the
//! boundary condition into a diagonal Robin term plus a diagonal penalty
//! with weight `2/h` per face. Corner nodes of a rectangle get one ghost per
//! axis, each with its own normal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Result, SviError};
use crate::grid::{apply_gradient, norm_l2, seminorm_h1, BoundaryKind, Field, Grid};
use crate::noise::{BrownianPathSet, CoeffSpec, NoiseFields, TimeGrid};
use crate::pathsolver::{Constraint, Forcing, InitialData, PathSolution, Problem, SolveConfig, Source};
use crate::penalty::{beta_eps, j_eps};
use crate::scheme::{explicit_rhs, stability_ratio, NewtonStats, StepInputs, StepOperator};
use crate::transform::{effective_reaction, ReactionSpec};

/// One face of the domain seen from one boundary node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceEntry {
    pub node: usize,
    pub axis: usize,
    /// Outward normal along `axis`: `-1` or `+1`.
    pub sign: f64,
    /// Surface quadrature weight of this node on this face.
    pub surface_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    nodes: Vec<usize>,
    faces: Vec<FaceEntry>,
    penalty_weight: Vec<f64>,
}

impl BoundaryData {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.bc() != BoundaryKind::Neumann {
            return Err(SviError::Config("Signorini problems need a Neumann grid".into()));
        }
        let mut faces = Vec::new();
        let mut penalty_weight = vec![0.0; grid.len()];
        for node in grid.boundary_nodes() {
            let mi = grid.multi_index(node);
            for (axis, sign) in grid.faces(node) {
                let surface_weight: f64 = (0..grid.dim())
                    .filter(|&b| b != axis)
                    .map(|b| {
                        let last = grid.count(b) - 1;
                        if mi[b] == 0 || mi[b] == last {
                            0.5 * grid.h(b)
                        } else {
                            grid.h(b)
                        }
                    })
                    .product();
                faces.push(FaceEntry { node, axis, sign, surface_weight });
                penalty_weight[node] += 2.0 / grid.h(axis);
            }
        }
        Ok(BoundaryData { nodes: grid.boundary_nodes(), faces, penalty_weight })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn faces(&self) -> &[FaceEntry] {
        &self.faces
    }

    /// `Σ_faces 2/h` on boundary nodes, 0 inside.
    pub fn penalty_weight(&self) -> &[f64] {
        &self.penalty_weight
    }

    /// Diagonal Robin term `Σ_faces (2/h) ∂μ/∂ν`.
    pub fn robin_coefficients(&self, grid: &Grid, fields: &NoiseFields) -> Vec<f64> {
        let mut r = vec![0.0; grid.len()];
        for f in &self.faces {
            r[f.node] += 2.0 / grid.h(f.axis) * f.sign * fields.grad_mu.components[f.axis][f.node];
        }
        r
    }

    /// `∂μ/∂ν` per boundary node (averaged over faces at corners).
    pub fn dmu_dnu(&self, fields: &NoiseFields) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&node| {
                let fs: Vec<&FaceEntry> = self.faces.iter().filter(|f| f.node == node).collect();
                fs.iter().map(|f| f.sign * fields.grad_mu.components[f.axis][node]).sum::<f64>() / fs.len() as f64
            })
            .collect()
    }

    /// Second-order one-sided outward normal derivative per boundary node
    /// (averaged over faces at corners).
    pub fn normal_derivative(&self, grid: &Grid, y: &[f64]) -> Result<Vec<f64>> {
        let grad = apply_gradient(grid, y)?;
        Ok(self
            .nodes
            .iter()
            .map(|&node| {
                let fs: Vec<&FaceEntry> = self.faces.iter().filter(|f| f.node == node).collect();
                fs.iter().map(|f| f.sign * grad.components[f.axis][node]).sum::<f64>() / fs.len() as f64
            })
            .collect())
    }

    /// Boundary trace `y|_{∂O}` in node order.
    pub fn trace(&self, y: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&i| y[i]).collect()
    }

    /// `∫_{∂O} u v`.
    pub fn surface_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.faces.iter().map(|f| f.surface_weight * u[f.node] * v[f.node]).sum()
    }
}

/// One implicit step of the penalized Signorini problem.
#[allow(clippy::too_many_arguments)]
pub fn step_signorini(
    grid: &Grid,
    y_n: &Field,
    fields: &NoiseFields,
    reaction: &ReactionSpec,
    source: &Field,
    bd: &BoundaryData,
    dt: f64,
    cfg: &SolveConfig,
) -> Result<(Field, NewtonStats)> {
    cfg.validate()?;
    check_len(grid.len(), y_n.len())?;
    check_len(grid.len(), source.len())?;
    let ratio = stability_ratio(grid, fields, dt);
    if ratio > 1.0 {
        return Err(SviError::Stability { t: f64::NAN, ratio, retries: 0 });
    }
    let robin = bd.robin_coefficients(grid, fields);
    let op = StepOperator {
        grid,
        dt,
        theta: cfg.theta,
        eps: cfg.eps,
        robin: Some(&robin),
        penalty_weight: Some(bd.penalty_weight()),
    };
    let inputs = StepInputs { fields, reaction, source, ghosts: None };
    let rhs = explicit_rhs(&op, y_n, &inputs)?;
    let (y, stats) = op.solve(&rhs, y_n, cfg.newton_tol, cfg.newton_max, f64::NAN)?;
    Ok((Field(y), stats))
}

/// Solves one path of the Signorini problem through the exponential transform.
/// `traj_eta` holds `β_ε(y)` on boundary nodes and 0 inside.
#[allow(clippy::too_many_arguments)]
pub fn solve_signorini(
    grid: &Grid,
    tg: &TimeGrid,
    cs: &CoeffSpec,
    rs: &ReactionSpec,
    forcing: &Forcing,
    x: &InitialData,
    cfg: &SolveConfig,
    paths: &BrownianPathSet,
) -> Result<PathSolution> {
    let bd = BoundaryData::new(grid)?;
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
        constraint: Constraint::Boundary(&bd),
    }
    .solve()
}

/// `β_ε(y)` on the boundary nodes over time.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrajectory {
    pub times: Vec<f64>,
    pub nodes: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl BoundaryTrajectory {
    pub fn max(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Σ_n dt ∫_{∂O} η²` with left-endpoint time quadrature.
    pub fn space_time_l2_sq(&self, bd: &BoundaryData, grid: &Grid) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.times.len().saturating_sub(1) {
            let dt = self.times[n + 1] - self.times[n];
            let mut full = vec![0.0; grid.len()];
            for (j, &node) in self.nodes.iter().enumerate() {
                full[node] = self.values[n][j];
            }
            acc += dt * bd.surface_inner(&full, &full);
        }
        acc
    }
}

pub fn recover_boundary_multiplier(sol: &PathSolution, bd: &BoundaryData) -> BoundaryTrajectory {
    BoundaryTrajectory {
        times: sol.traj_y.times.clone(),
        nodes: bd.nodes().to_vec(),
        values: sol.traj_y.frames.iter().map(|y| bd.nodes().iter().map(|&i| beta_eps(y[i], sol.eps)).collect()).collect(),
    }
}

/// The discrete operator `Ã_ε y` as a nodal field: ghost-closed `-Δ y`
/// plus reaction and transport.
pub fn apply_signorini_operator(
    grid: &Grid,
    fields: &NoiseFields,
    reaction: &ReactionSpec,
    bd: &BoundaryData,
    y: &[f64],
    eps: Option<f64>,
) -> Result<Field> {
    check_len(grid.len(), y.len())?;
    let robin = bd.robin_coefficients(grid, fields);
    let mut lap = grid.zeros();
    grid.laplacian_into(y, &mut lap);
    let react = effective_reaction(reaction, &fields.mu, &fields.mu_tilde, &fields.grad_mu, &fields.lap_mu, y)?;
    let grad = apply_gradient(grid, y)?;
    let transport = fields.g.dot(&grad);
    Ok(Field(
        (0..grid.len())
            .map(|i| {
                let pen = eps.map_or(0.0, |e| bd.penalty_weight()[i] * beta_eps(y[i], e));
                -lap[i] + robin[i] * y[i] + pen + react[i] + transport[i]
            })
            .collect(),
    ))
}

/// `⟨Ã_ε y, φ⟩` assembled as a weak form: edge-difference gradients,
/// volume quadrature for reaction and transport, surface quadrature for the
/// boundary terms. `eps = None` drops the penalty.
pub fn assemble_form_value(
    grid: &Grid,
    fields: &NoiseFields,
    reaction: &ReactionSpec,
    bd: &BoundaryData,
    y: &[f64],
    phi: &[f64],
    eps: Option<f64>,
) -> Result<f64> {
    check_len(grid.len(), y.len())?;
    check_len(grid.len(), phi.len())?;
    let w = grid.weights();
    // ∫ ∇y·∇φ by polarization of the edge seminorm
    let plus: Vec<f64> = y.iter().zip(phi).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = y.iter().zip(phi).map(|(a, b)| a - b).collect();
    let dirichlet_form = 0.25 * (seminorm_h1(grid, &plus)?.powi(2) - seminorm_h1(grid, &minus)?.powi(2));
    let react = effective_reaction(reaction, &fields.mu, &fields.mu_tilde, &fields.grad_mu, &fields.lap_mu, y)?;
    let transport = fields.g.dot(&apply_gradient(grid, y)?);
    let volume: f64 = (0..grid.len()).map(|i| w[i] * (react[i] + transport[i]) * phi[i]).sum();
    let surface: f64 = bd
        .faces()
        .iter()
        .map(|f| {
            let dmu = f.sign * fields.grad_mu.components[f.axis][f.node];
            let pen = eps.map_or(0.0, |e| beta_eps(y[f.node], e));
            f.surface_weight * (pen + dmu * y[f.node]) * phi[f.node]
        })
        .sum();
    Ok(dirichlet_form + volume + surface)
}

/// Fitted constants of the bounds on `Ã_ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    pub n_samples: usize,
    /// Boundedness `|⟨Ãy, φ⟩| ≤ C₁ ‖y‖_V ‖φ‖_V`.
    pub c1_hat: f64,
    /// Largest `C₂` with `⟨Ãy, y⟩ ≥ C₂ |∇y|² - C₃* |y|²` on every sample,
    /// where `C₃*` is the a priori constant below.
    pub c2_hat: f64,
    /// Smallest `C₃` with `⟨Ãy, y⟩ ≥ ½ |∇y|² - C₃ |y|²` on every sample.
    pub c3_hat: f64,
    /// Quasi-monotonicity `⟨Ãy - Ãȳ, y - ȳ⟩ ≥ -C₄ |y - ȳ|²`.
    pub c4_hat: f64,
    /// A priori `C₃` from the trace-interpolation bound with `C₂ = ½`.
    pub c3_apriori: f64,
    /// Samples violating `⟨Ãy, y⟩ ≥ ½ |∇y|² - C₃* |y|²`.
    pub violations: usize,
}

/// The a priori lower-order constant: reaction bound, transport absorbed
/// by Young, and the boundary Robin term bounded through
/// `|y|²_{∂O} ≤ Σ 2/L_a |y|² + 4√d |y| |∇y|`.
pub fn apriori_c3(grid: &Grid, fields: &NoiseFields, reaction: &ReactionSpec, bd: &BoundaryData) -> f64 {
    let gsq = fields.grad_mu.norm_sq();
    let coeff = (0..grid.len())
        .map(|i| (fields.mu_tilde[i] - gsq[i] - fields.lap_mu[i]).abs())
        .fold(0.0, f64::max);
    let alpha = reaction.lipschitz() + coeff;
    let g = fields.g.max_norm();
    let m = bd.dmu_dnu(fields).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let inv_len: f64 = grid.lengths().iter().map(|l| 2.0 / l).sum();
    let d = grid.dim() as f64;
    alpha + g * g + m * inv_len + 16.0 * d * m * m
}

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> Field {
    let lengths = grid.lengths().to_vec();
    let n_modes = 6;
    let mut coeffs = Vec::new();
    for _ in 0..n_modes {
        let k = [rng.random_range(0..7u32), rng.random_range(0..7u32)];
        let a = rng.random_range(-1.0..1.0) / (1.0 + (k[0] + k[1]) as f64);
        coeffs.push((k, a));
    }
    let offset = rng.random_range(-0.5..0.5);
    let noise = rng.random_range(0.0..0.05);
    let mut f = grid.field_from_fn(|xi| {
        offset
            + coeffs
                .iter()
                .map(|(k, a)| {
                    a * (0..lengths.len())
                        .map(|ax| (k[ax] as f64 * std::f64::consts::PI * xi[ax] / lengths[ax]).cos())
                        .product::<f64>()
                })
                .sum::<f64>()
    });
    for v in f.iter_mut() {
        *v += noise * rng.random_range(-1.0..1.0);
    }
    f
}

/// Probes the bounds on `Ã_ε` with random fields. Never fails: the report
/// carries the fitted constants and the count of violated samples.
pub fn coercivity_probe(
    grid: &Grid,
    fields: &NoiseFields,
    reaction: &ReactionSpec,
    bd: &BoundaryData,
    eps: Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c3_star = apriori_c3(grid, fields, reaction, bd);
    let samples: Vec<Field> = (0..n_samples)
        .map(|i| {
            let mut y = random_field(grid, &mut rng);
            // every few samples: a constant, or a field pushed below zero on the boundary
            match i % 5 {
                0 => {
                    let c = rng.random_range(-1.0..1.0);
                    y = Field::constant(grid.len(), c);
                }
                1 => {
                    let shift = y.max() + 0.1;
                    for v in y.iter_mut() {
                        *v -= shift;
                    }
                }
                _ => {}
            }
            y
        })
        .collect();

    let mut quads = Vec::with_capacity(n_samples);
    for y in &samples {
        let a = assemble_form_value(grid, fields, reaction, bd, y, y, eps)?;
        let v = seminorm_h1(grid, y)?.powi(2);
        let h = norm_l2(grid, y)?.powi(2);
        quads.push((a, v, h));
    }

    let mut c3_hat: f64 = 0.0;
    let mut c2_hat = f64::INFINITY;
    let mut violations = 0;
    for &(a, v, h) in &quads {
        if h > 0.0 {
            c3_hat = c3_hat.max((0.5 * v - a) / h);
        }
        if v > 1e-14 * h.max(1e-300) {
            c2_hat = c2_hat.min((a + c3_star * h) / v);
        }
        let slack = 1e-10 * (a.abs() + v + c3_star * h);
        if a < 0.5 * v - c3_star * h - slack {
            violations += 1;
        }
    }
    if !c2_hat.is_finite() {
        c2_hat = 0.0;
    }

    let mut c1_hat: f64 = 0.0;
    let mut c4_hat: f64 = 0.0;
    let full = |u: &Field| -> Result<f64> { Ok((seminorm_h1(grid, u)?.powi(2) + norm_l2(grid, u)?.powi(2)).sqrt()) };
    for pair in samples.windows(2) {
        let (y, phi) = (&pair[0], &pair[1]);
        let ny = full(y)?;
        let np = full(phi)?;
        if ny > 0.0 && np > 0.0 {
            let val = assemble_form_value(grid, fields, reaction, bd, y, phi, eps)?;
            c1_hat = c1_hat.max(val.abs() / (ny * np));
        }
        let diff: Field = y.zip_map(phi, |a, b| a - b);
        let hd = norm_l2(grid, &diff)?.powi(2);
        if hd > 0.0 {
            let a1 = assemble_form_value(grid, fields, reaction, bd, y, &diff, eps)?;
            let a2 = assemble_form_value(grid, fields, reaction, bd, phi, &diff, eps)?;
            c4_hat = c4_hat.max(-(a1 - a2) / hd);
        }
    }

    Ok(CoercivityReport { n_samples, c1_hat, c2_hat, c3_hat: c3_hat.max(0.0), c4_hat, c3_apriori: c3_star, violations })
}

/// Discrete analogue of the boundary potential estimate:
/// `max_t [∫ j_ε(y(t)) + ∫₀ᵗ ∫_{∂O} β_ε(y)²] / (∫ j_ε(x) + ∫₀ᵀ |f|²)`.
/// Returns `(ratio, lhs_max, rhs)`.
pub fn boundary_potential_ratio(
    grid: &Grid,
    sol: &PathSolution,
    bd: &BoundaryData,
    forcing: &Forcing,
) -> Result<(f64, f64, f64)> {
    let w = grid.weights();
    let eps = sol.eps;
    let pot = |y: &Field| -> f64 { (0..grid.len()).map(|i| w[i] * j_eps(y[i], eps)).sum() };
    let x = &sol.traj_y.frames[0];
    let mut f_int = 0.0;
    let mut lhs_max: f64 = pot(x);
    let mut boundary_acc = 0.0;
    for n in 0..sol.traj_y.len() - 1 {
        let t = sol.traj_y.times[n];
        let dt = sol.traj_y.times[n + 1] - t;
        let f = forcing.eval(t, grid);
        f_int += dt * norm_l2(grid, &f)?.powi(2);
        let y = &sol.traj_y.frames[n];
        let b: Vec<f64> = y.iter().map(|&v| beta_eps(v, eps)).collect();
        boundary_acc += dt * bd.surface_inner(&b, &b);
        lhs_max = lhs_max.max(pot(&sol.traj_y.frames[n + 1]) + boundary_acc);
    }
    let rhs = pot(x) + f_int;
    let ratio = if rhs > 0.0 {
        lhs_max / rhs
    } else if lhs_max == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((ratio, lhs_max, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, inner, mass};
    use crate::noise::{sample_paths, CoeffTerm, SpaceProfile};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn neumann_1d(n: usize) -> Grid {
        build_grid(1, &[1.0], n, BoundaryKind::Neumann).unwrap()
    }

    #[test]
    fn boundary_data_rejects_dirichlet() {
        let g = build_grid(1, &[1.0], 5, BoundaryKind::Dirichlet).unwrap();
        assert!(BoundaryData::new(&g).is_err());
    }

    #[test]
    fn corners_have_two_faces() {
        let g = build_grid(2, &[1.0, 2.0], 5, BoundaryKind::Neumann).unwrap();
        let bd = BoundaryData::new(&g).unwrap();
        let corner = g.index(0, 0);
        assert_eq!(bd.faces().iter().filter(|f| f.node == corner).count(), 2);
        let edge = g.index(2, 0);
        assert_eq!(bd.faces().iter().filter(|f| f.node == edge).count(), 1);
        assert_eq!(bd.nodes().len(), 16);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = neumann_1d(21);
        let bd = BoundaryData::new(&g).unwrap();
        let nf = NoiseFields::zero(&g);
        let (y, _) = step_signorini(&g, &g.zeros(), &nf, &ReactionSpec::linear(1.0), &g.zeros(), &bd, 1e-3, &SolveConfig::default()).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn form_of_zero_is_zero() {
        let g = neumann_1d(33);
        let bd = BoundaryData::new(&g).unwrap();
        let p = sample_paths(&TimeGrid::new(1.0, 10).unwrap(), 1, 1, 0);
        let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::CosineMode { amp: 0.4, modes: [1, 0] })]);
        let nf = NoiseFields::at_node(&cs, &p, 7, &g).unwrap();
        let phi = g.field_from_fn(|x| (2.0 * x[0]).cos());
        let v = assemble_form_value(&g, &nf, &ReactionSpec::saturating(1.0), &bd, &g.zeros(), &phi, Some(1e-3)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn form_of_sine_matches_integrals() {
        let g = neumann_1d(1025);
        let bd = BoundaryData::new(&g).unwrap();
        let nf = NoiseFields::zero(&g);
        let alpha = 0.7;
        let y = g.field_from_fn(|x| (PI * x[0]).sin());
        let v = assemble_form_value(&g, &nf, &ReactionSpec::linear(alpha), &bd, &y, &y, Some(1e-2)).unwrap();
        assert_relative_eq!(v, PI * PI / 2.0 + alpha / 2.0, max_relative = 1e-5);
    }

    #[test]
    fn weak_form_matches_nodal_operator() {
        for dim in [1, 2] {
            let g = build_grid(dim, &vec![1.0, 1.5][..dim], 17, BoundaryKind::Neumann).unwrap();
            let bd = BoundaryData::new(&g).unwrap();
            let p = sample_paths(&TimeGrid::new(1.0, 10).unwrap(), 1, 2, 0);
            let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.2, c1: [0.6, -0.3], c2: [0.4, 0.2] })]);
            let nf = NoiseFields::at_node(&cs, &p, 9, &g).unwrap();
            let rs = ReactionSpec::saturating(1.3);
            let y = g.field_from_fn(|x| (3.0 * x[0]).cos() - 0.8 + 0.3 * x[1]);
            let phi = g.field_from_fn(|x| (1.0 + x[0]) * (2.0 * x[1]).sin() + 0.5);
            let eps = Some(1e-2);
            let weak = assemble_form_value(&g, &nf, &rs, &bd, &y, &phi, eps).unwrap();
            let op = apply_signorini_operator(&g, &nf, &rs, &bd, &y, eps).unwrap();
            let strong = inner(&g, &op, &phi).unwrap();
            assert!((weak - strong).abs() <= 1e-10 * (1.0 + weak.abs()), "dim {dim}: {weak} vs {strong}");
        }
    }

    #[test]
    fn probe_pure_dirichlet_form() {
        let g = neumann_1d(65);
        let bd = BoundaryData::new(&g).unwrap();
        let nf = NoiseFields::zero(&g);
        let r = coercivity_probe(&g, &nf, &ReactionSpec::zero(), &bd, None, 100, 5).unwrap();
        assert_relative_eq!(r.c2_hat, 1.0, epsilon = 1e-9);
        assert!(r.c3_hat.abs() < 1e-9);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn penalty_does_not_lower_coercivity() {
        let g = neumann_1d(65);
        let bd = BoundaryData::new(&g).unwrap();
        let p = sample_paths(&TimeGrid::new(1.0, 10).unwrap(), 1, 3, 0);
        let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.0, c1: [0.8, 0.0], c2: [0.0, 0.0] })]);
        let nf = NoiseFields::at_node(&cs, &p, 10, &g).unwrap();
        let rs = ReactionSpec::linear(0.5);
        let without = coercivity_probe(&g, &nf, &rs, &bd, None, 120, 9).unwrap();
        let with = coercivity_probe(&g, &nf, &rs, &bd, Some(1e-3), 120, 9).unwrap();
        assert!(with.c2_hat >= without.c2_hat - 1e-12);
        assert_eq!(with.violations, 0);
        assert_eq!(without.violations, 0);
    }

    #[test]
    fn constant_sample_closed_form() {
        let g = neumann_1d(41);
        let bd = BoundaryData::new(&g).unwrap();
        let p = sample_paths(&TimeGrid::new(1.0, 10).unwrap(), 1, 4, 0);
        let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.1, c1: [0.5, 0.0], c2: [0.2, 0.0] })]);
        let nf = NoiseFields::at_node(&cs, &p, 6, &g).unwrap();
        let rs = ReactionSpec::linear(1.1);
        let eps = 1e-2;
        let c = -0.3;
        let y = Field::constant(g.len(), c);
        let v = assemble_form_value(&g, &nf, &rs, &bd, &y, &y, Some(eps)).unwrap();
        // reaction: ∫ F̃(c) c ; boundary: Σ_ends (β_ε(c) + ∂μ/∂ν c) c
        let react = effective_reaction(&rs, &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, &y).unwrap();
        let w = g.weights();
        let vol: f64 = (0..g.len()).map(|i| w[i] * react[i] * c).sum();
        let dmu = bd.dmu_dnu(&nf);
        let surf: f64 = dmu.iter().map(|d| (beta_eps(c, eps) + d * c) * c).sum();
        assert_relative_eq!(v, vol + surf, max_relative = 1e-12);
    }

    #[test]
    fn mass_is_conserved_without_noise() {
        let g = neumann_1d(101);
        let bd = BoundaryData::new(&g).unwrap();
        let nf = NoiseFields::zero(&g);
        let cfg = SolveConfig::default();
        let mut y = g.field_from_fn(|x| 1.0 + 0.5 * (PI * x[0]).cos());
        let m0 = mass(&g, &y).unwrap();
        for _ in 0..100 {
            y = step_signorini(&g, &y, &nf, &ReactionSpec::zero(), &g.zeros(), &bd, 1e-2, &cfg).unwrap().0;
        }
        assert!((mass(&g, &y).unwrap() - m0).abs() <= 1e-6);
    }
}
