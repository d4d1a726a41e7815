//! Brownian paths and the coefficient fields `μ_k` they multiply.
//!
//! Each scalar Brownian motion is drawn from its own ChaCha stream keyed by
//! `(seed, path_id, k)`, so any path of any ensemble can be regenerated in
//! isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SviError};
use crate::grid::{Field, Grid, VectorField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(SviError::Config(format!("time.T must be > 0, got {t_final}")));
        }
        if steps == 0 {
            return Err(SviError::Config("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { t_final, steps })
    }

    /// Grid with step as close as possible to `dt` that lands on `t_final`.
    pub fn from_dt(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SviError::Config(format!("time.dt must be > 0, got {dt}")));
        }
        Self::new(t_final, ((t_final / dt).round() as usize).max(1))
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn node(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.node(n)).collect()
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid { t_final: self.t_final, steps: self.steps * factor.max(1) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPathSet {
    dt: f64,
    increments: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    pub seed: u64,
    pub path_id: u64,
}

fn stream_rng(seed: u64, path_id: u64, k: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&path_id.to_le_bytes());
    key[16..24].copy_from_slice(&(k as u64).to_le_bytes());
    key[24..].copy_from_slice(b"brownian");
    ChaCha8Rng::from_seed(key)
}

pub fn sample_paths(tg: &TimeGrid, m: usize, seed: u64, path_id: u64) -> BrownianPathSet {
    let dt = tg.dt();
    let sd = dt.sqrt();
    let mut increments = Vec::with_capacity(m);
    for k in 0..m {
        let mut rng = stream_rng(seed, path_id, k);
        let inc: Vec<f64> = (0..tg.steps())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        increments.push(inc);
    }
    BrownianPathSet::from_increments(dt, increments, seed, path_id)
}

impl BrownianPathSet {
    pub fn from_increments(dt: f64, increments: Vec<Vec<f64>>, seed: u64, path_id: u64) -> Self {
        let values = increments
            .iter()
            .map(|inc| {
                let mut v = Vec::with_capacity(inc.len() + 1);
                let mut acc = 0.0;
                v.push(0.0);
                for d in inc {
                    acc += d;
                    v.push(acc);
                }
                v
            })
            .collect();
        BrownianPathSet { dt, increments, values, seed, path_id }
    }

    /// Path set with prescribed node values (first value of each path must be 0).
    pub fn from_values(dt: f64, values: Vec<Vec<f64>>) -> Self {
        let increments = values.iter().map(|v| v.windows(2).map(|w| w[1] - w[0]).collect()).collect();
        BrownianPathSet { dt, increments, values, seed: 0, path_id: 0 }
    }

    /// The same motions observed every `factor` steps.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(SviError::Config(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let values = self.values.iter().map(|v| v.iter().step_by(factor).copied().collect()).collect();
        let mut out = Self::from_values(self.dt * factor as f64, values);
        out.seed = self.seed;
        out.path_id = self.path_id;
        Ok(out)
    }

    /// A path set with `m` identically zero motions, used for deterministic runs.
    pub fn zeros(tg: &TimeGrid, m: usize) -> Self {
        Self::from_increments(tg.dt(), vec![vec![0.0; tg.steps()]; m], 0, 0)
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.values.first().map_or(0, |v| v.len().saturating_sub(1))
    }

    pub fn value(&self, k: usize, n: usize) -> f64 {
        self.values[k][n]
    }

    pub fn increment(&self, k: usize, n: usize) -> f64 {
        self.increments[k][n]
    }

    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn increments(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    /// All `β_k(t_n)`.
    pub fn at_node(&self, n: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[n]).collect()
    }

    /// `β_k` at an arbitrary time, linear between nodes. Only used when a
    /// step is split into substeps.
    pub fn at_time(&self, t: f64) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| {
                let s = (t / self.dt).max(0.0);
                let n = (s.floor() as usize).min(v.len() - 1);
                if n + 1 >= v.len() {
                    return v[v.len() - 1];
                }
                let frac = s - n as f64;
                v[n] + frac * (v[n + 1] - v[n])
            })
            .collect()
    }
}

/// `sup_{k, n} |β_k(t_n)|`.
pub fn path_sup(paths: &BrownianPathSet) -> f64 {
    paths.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeProfile {
    Constant(f64),
    Linear { offset: f64, slope: f64 },
    Cosine { amp: f64, omega: f64, phase: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant(c) => c,
            TimeProfile::Linear { offset, slope } => offset + slope * t,
            TimeProfile::Cosine { amp, omega, phase } => amp * (omega * t + phase).cos(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant(_) => 0.0,
            TimeProfile::Linear { slope, .. } => slope,
            TimeProfile::Cosine { amp, omega, phase } => -amp * omega * (omega * t + phase).sin(),
        }
    }
}

/// Spatial factor of a coefficient. For the trigonometric modes a wave
/// number of 0 on an axis means the factor is constant along that axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpaceProfile {
    Constant(f64),
    /// `c0 + Σ c1[a] ξ_a + Σ c2[a] ξ_a²`
    Quadratic { c0: f64, c1: [f64; 2], c2: [f64; 2] },
    /// `amp Π sin(k_a π ξ_a / L_a)`
    SineMode { amp: f64, modes: [u32; 2] },
    /// `amp Π cos(k_a π ξ_a / L_a)`
    CosineMode { amp: f64, modes: [u32; 2] },
}

struct Mode {
    value: f64,
    d1: f64,
    d2: f64,
}

fn mode(sine: bool, k: u32, x: f64, len: f64) -> Mode {
    if k == 0 {
        return Mode { value: 1.0, d1: 0.0, d2: 0.0 };
    }
    let w = k as f64 * std::f64::consts::PI / len;
    let (s, c) = (w * x).sin_cos();
    if sine {
        Mode { value: s, d1: w * c, d2: -w * w * s }
    } else {
        Mode { value: c, d1: -w * s, d2: -w * w * c }
    }
}

impl SpaceProfile {
    /// Value, gradient and Laplacian at `xi`.
    pub fn eval(&self, xi: [f64; 2], lengths: &[f64]) -> (f64, [f64; 2], f64) {
        let dim = lengths.len();
        match *self {
            SpaceProfile::Constant(c) => (c, [0.0; 2], 0.0),
            SpaceProfile::Quadratic { c0, c1, c2 } => {
                let mut v = c0;
                let mut g = [0.0; 2];
                let mut lap = 0.0;
                for a in 0..dim {
                    v += c1[a] * xi[a] + c2[a] * xi[a] * xi[a];
                    g[a] = c1[a] + 2.0 * c2[a] * xi[a];
                    lap += 2.0 * c2[a];
                }
                (v, g, lap)
            }
            SpaceProfile::SineMode { amp, modes } | SpaceProfile::CosineMode { amp, modes } => {
                let sine = matches!(self, SpaceProfile::SineMode { .. });
                let ms: Vec<Mode> = (0..dim).map(|a| mode(sine, modes[a], xi[a], lengths[a])).collect();
                let prod_except = |skip: usize| -> f64 {
                    ms.iter().enumerate().filter(|(b, _)| *b != skip).map(|(_, m)| m.value).product()
                };
                let v = amp * ms.iter().map(|m| m.value).product::<f64>();
                let mut g = [0.0; 2];
                let mut lap = 0.0;
                for a in 0..dim {
                    let rest = prod_except(a);
                    g[a] = amp * ms[a].d1 * rest;
                    lap += amp * ms[a].d2 * rest;
                }
                (v, g, lap)
            }
        }
    }
}

/// One coefficient `μ_k(t, ξ) = a_k(t) b_k(ξ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffTerm {
    pub time: TimeProfile,
    pub space: SpaceProfile,
}

impl CoeffTerm {
    pub fn new(time: TimeProfile, space: SpaceProfile) -> Self {
        CoeffTerm { time, space }
    }

    /// Time-constant coefficient `b(ξ)`.
    pub fn steady(space: SpaceProfile) -> Self {
        CoeffTerm { time: TimeProfile::Constant(1.0), space }
    }
}

/// The full set of noise coefficients, one per Brownian motion.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CoeffSpec {
    pub terms: Vec<CoeffTerm>,
}

impl CoeffSpec {
    pub fn new(terms: Vec<CoeffTerm>) -> Self {
        CoeffSpec { terms }
    }

    pub fn none() -> Self {
        CoeffSpec { terms: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.terms.len()
    }

    fn check(&self, paths: &BrownianPathSet) -> Result<()> {
        if self.m() != paths.m() {
            return Err(SviError::NoiseMismatch { coeffs: self.m(), paths: paths.m() });
        }
        Ok(())
    }

    /// `μ_k(t, ·)` on the grid.
    pub fn term_field(&self, k: usize, t: f64, grid: &Grid) -> Field {
        let term = &self.terms[k];
        let a = term.time.value(t);
        grid.field_from_fn(|xi| a * term.space.eval(xi, grid.lengths()).0)
    }
}

/// Everything derived from `μ` that the transformed equation needs at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseFields {
    pub mu: Field,
    pub mu_tilde: Field,
    pub grad_mu: VectorField,
    pub lap_mu: Field,
    /// Transport field `g = -2∇μ`.
    pub g: VectorField,
}

impl NoiseFields {
    /// Fields for given Brownian values `betas[k] = β_k(t)`.
    pub fn assemble(cs: &CoeffSpec, grid: &Grid, t: f64, betas: &[f64]) -> Result<Self> {
        if cs.m() != betas.len() {
            return Err(SviError::NoiseMismatch { coeffs: cs.m(), paths: betas.len() });
        }
        let n = grid.len();
        let dim = grid.dim();
        let mut mu = Field::zeros(n);
        let mut mu_tilde = Field::zeros(n);
        let mut lap_mu = Field::zeros(n);
        let mut grad_mu = VectorField::zeros(dim, n);
        for (term, &beta) in cs.terms.iter().zip(betas) {
            let a = term.time.value(t);
            let da = term.time.derivative(t);
            for idx in 0..n {
                let (b, gb, lb) = term.space.eval(grid.position(idx), grid.lengths());
                let mu_k = a * b;
                mu[idx] += mu_k * beta;
                mu_tilde[idx] += da * b * beta + 0.5 * mu_k * mu_k;
                lap_mu[idx] += beta * a * lb;
                for (comp, d) in grad_mu.components.iter_mut().zip(gb) {
                    comp[idx] += beta * a * d;
                }
            }
        }
        let g = grad_mu.scaled(-2.0);
        Ok(NoiseFields { mu, mu_tilde, grad_mu, lap_mu, g })
    }

    /// Fields at time node `n` of a path set.
    pub fn at_node(cs: &CoeffSpec, paths: &BrownianPathSet, n: usize, grid: &Grid) -> Result<Self> {
        cs.check(paths)?;
        Self::assemble(cs, grid, n as f64 * paths.dt(), &paths.at_node(n))
    }

    /// Noise-free fields (all zero).
    pub fn zero(grid: &Grid) -> Self {
        let n = grid.len();
        NoiseFields {
            mu: Field::zeros(n),
            mu_tilde: Field::zeros(n),
            grad_mu: VectorField::zeros(grid.dim(), n),
            lap_mu: Field::zeros(n),
            g: VectorField::zeros(grid.dim(), n),
        }
    }
}

/// `μ(t_n, ξ) = Σ_k μ_k(t_n, ξ) β_k(t_n)`.
pub fn eval_mu(cs: &CoeffSpec, paths: &BrownianPathSet, n: usize, grid: &Grid) -> Result<Field> {
    Ok(NoiseFields::at_node(cs, paths, n, grid)?.mu)
}

/// `μ̃(t_n, ξ) = Σ_k (∂_t μ_k β_k(t_n) + ½ μ_k²)`.
pub fn eval_mu_tilde(cs: &CoeffSpec, paths: &BrownianPathSet, n: usize, grid: &Grid) -> Result<Field> {
    Ok(NoiseFields::at_node(cs, paths, n, grid)?.mu_tilde)
}

/// Analytic `(∇μ, Δμ, g = -2∇μ)` at `t_n`.
pub fn eval_mu_derivs(
    cs: &CoeffSpec,
    paths: &BrownianPathSet,
    n: usize,
    grid: &Grid,
) -> Result<(VectorField, Field, VectorField)> {
    let nf = NoiseFields::at_node(cs, paths, n, grid)?;
    Ok((nf.grad_mu, nf.lap_mu, nf.g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_gradient, build_grid, BoundaryKind};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tg() -> TimeGrid {
        TimeGrid::new(1.0, 50).unwrap()
    }

    #[test]
    fn empty_path_set() {
        let p = sample_paths(&tg(), 0, 1, 2);
        assert_eq!(p.m(), 0);
        assert_eq!(path_sup(&p), 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_keyed() {
        let a = sample_paths(&tg(), 3, 42, 7);
        let b = sample_paths(&tg(), 3, 42, 7);
        assert_eq!(a, b);
        let c = sample_paths(&tg(), 3, 42, 8);
        assert_ne!(a.increments(0), c.increments(0));
        assert_ne!(a.increments(0), a.increments(1));
        // the k-th motion does not depend on how many others are drawn
        let d = sample_paths(&tg(), 1, 42, 7);
        assert_eq!(a.increments(0), d.increments(0));
        for k in 0..3 {
            assert_eq!(a.value(k, 0), 0.0);
            for n in 0..50 {
                assert_relative_eq!(a.value(k, n + 1) - a.value(k, n), a.increment(k, n), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn path_sup_of_explicit_values() {
        let p = BrownianPathSet::from_values(0.5, vec![vec![0.0, 0.3, -0.7]]);
        assert_relative_eq!(path_sup(&p), 0.7);
    }

    #[test]
    fn mu_cases() {
        let g = build_grid(1, &[1.0], 9, BoundaryKind::Dirichlet).unwrap();
        let p = sample_paths(&tg(), 1, 3, 0);
        let zero = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Constant(0.0))]);
        assert_eq!(eval_mu(&zero, &p, 10, &g).unwrap().max_abs(), 0.0);
        assert_eq!(eval_mu_tilde(&zero, &p, 10, &g).unwrap().max_abs(), 0.0);

        let c = 0.7;
        let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Constant(c))]);
        assert_eq!(eval_mu(&cs, &p, 0, &g).unwrap().max_abs(), 0.0);
        let mu = eval_mu(&cs, &p, 20, &g).unwrap();
        for v in mu.iter() {
            assert_relative_eq!(*v, c * p.value(0, 20), epsilon = 1e-15);
        }
        let mt = eval_mu_tilde(&cs, &p, 20, &g).unwrap();
        for v in mt.iter() {
            assert_relative_eq!(*v, 0.5 * c * c, epsilon = 1e-15);
        }
        let (gm, lm, gg) = eval_mu_derivs(&cs, &p, 20, &g).unwrap();
        assert_eq!(gm.max_norm(), 0.0);
        assert_eq!(lm.max_abs(), 0.0);
        assert_eq!(gg.max_norm(), 0.0);

        let mismatch = sample_paths(&tg(), 2, 3, 0);
        assert!(eval_mu(&cs, &mismatch, 1, &g).is_err());
    }

    #[test]
    fn linear_in_time_coefficient() {
        let g = build_grid(1, &[1.0], 9, BoundaryKind::Dirichlet).unwrap();
        let p = sample_paths(&tg(), 1, 11, 4);
        let b = SpaceProfile::Quadratic { c0: 0.2, c1: [0.5, 0.0], c2: [-0.3, 0.0] };
        let cs = CoeffSpec::new(vec![CoeffTerm::new(TimeProfile::Linear { offset: 0.0, slope: 1.0 }, b)]);
        let n = 30;
        let t = n as f64 * p.dt();
        let mt = eval_mu_tilde(&cs, &p, n, &g).unwrap();
        for idx in 0..g.len() {
            let bx = b.eval(g.position(idx), g.lengths()).0;
            let expect = bx * p.value(0, n) + 0.5 * t * t * bx * bx;
            assert_relative_eq!(mt[idx], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn sine_coefficient_derivatives() {
        let g = build_grid(1, &[1.0], 63, BoundaryKind::Dirichlet).unwrap();
        let p = sample_paths(&tg(), 1, 5, 1);
        let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::SineMode { amp: 1.0, modes: [1, 0] })]);
        let n = 25;
        let beta = p.value(0, n);
        let (gm, lm, gg) = eval_mu_derivs(&cs, &p, n, &g).unwrap();
        for idx in 0..g.len() {
            let x = g.position(idx)[0];
            assert_relative_eq!(gm.components[0][idx], PI * (PI * x).cos() * beta, epsilon = 1e-13);
            assert_relative_eq!(lm[idx], -PI * PI * (PI * x).sin() * beta, epsilon = 1e-12);
            assert_relative_eq!(gg.components[0][idx], -2.0 * gm.components[0][idx]);
        }
    }

    #[test]
    fn analytic_gradient_agrees_with_grid_operator_2d() {
        let g = build_grid(2, &[1.0, 2.0], 41, BoundaryKind::Dirichlet).unwrap();
        let p = sample_paths(&tg(), 2, 8, 0);
        let cs = CoeffSpec::new(vec![
            CoeffTerm::steady(SpaceProfile::CosineMode { amp: 0.5, modes: [1, 2] }),
            CoeffTerm::new(
                TimeProfile::Cosine { amp: 1.0, omega: 3.0, phase: 0.1 },
                SpaceProfile::Quadratic { c0: 0.1, c1: [0.2, -0.1], c2: [0.3, 0.05] },
            ),
        ]);
        let mu = eval_mu(&cs, &p, 40, &g).unwrap();
        let (gm, _, _) = eval_mu_derivs(&cs, &p, 40, &g).unwrap();
        let fd = apply_gradient(&g, &mu).unwrap();
        let scale = gm.max_norm().max(1e-3);
        for a in 0..2 {
            for idx in 0..g.len() {
                let err = (fd.components[a][idx] - gm.components[a][idx]).abs();
                assert!(err / scale < 20.0 * g.h(a) * g.h(a), "axis {a} node {idx}: {err}");
            }
        }
    }
}
