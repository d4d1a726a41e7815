//! The exponential change of variables `X = e^μ y` and the coefficients of
//! the random equation it produces for `y`.

use crate::error::{check_len, Result, SviError};
use crate::grid::{Field, VectorField};

/// Default bound on `|μ|` beyond which a path is declared pathological.
pub const DEFAULT_MU_CAP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactionKind {
    Zero,
    /// `F(r) = α r`
    Linear,
    /// `F(r) = α tanh(r)`
    Saturating,
}

/// Lipschitz reaction `F(t, ξ, r)` with `F(·, ·, 0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    pub alpha: f64,
}

impl ReactionSpec {
    pub fn zero() -> Self {
        ReactionSpec { kind: ReactionKind::Zero, alpha: 0.0 }
    }

    pub fn linear(alpha: f64) -> Self {
        ReactionSpec { kind: ReactionKind::Linear, alpha }
    }

    pub fn saturating(alpha: f64) -> Self {
        ReactionSpec { kind: ReactionKind::Saturating, alpha }
    }

    /// Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            _ => self.alpha.abs(),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => self.alpha * r,
            ReactionKind::Saturating => self.alpha * r.tanh(),
        }
    }
}

fn check_cap(mu: &[f64], cap: f64) -> Result<()> {
    let worst = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > cap || !worst.is_finite() {
        return Err(SviError::MuOverflow { value: worst, cap, t: f64::NAN });
    }
    Ok(())
}

/// `X = e^μ y`.
pub fn forward(mu: &[f64], y: &[f64]) -> Result<Field> {
    forward_capped(mu, y, DEFAULT_MU_CAP)
}

pub fn forward_capped(mu: &[f64], y: &[f64], cap: f64) -> Result<Field> {
    check_len(mu.len(), y.len())?;
    check_cap(mu, cap)?;
    Ok(Field(mu.iter().zip(y).map(|(m, v)| m.exp() * v).collect()))
}

/// `y = e^{-μ} X`.
pub fn inverse(mu: &[f64], x: &[f64]) -> Result<Field> {
    inverse_capped(mu, x, DEFAULT_MU_CAP)
}

pub fn inverse_capped(mu: &[f64], x: &[f64], cap: f64) -> Result<Field> {
    check_len(mu.len(), x.len())?;
    check_cap(mu, cap)?;
    Ok(Field(mu.iter().zip(x).map(|(m, v)| (-m).exp() * v).collect()))
}

/// `F̃(t, y) = e^{-μ} F(e^μ y) + μ̃ y - (|∇μ|² + Δμ) y`, pointwise.
pub fn effective_reaction(
    rs: &ReactionSpec,
    mu: &[f64],
    mu_tilde: &[f64],
    grad_mu: &VectorField,
    lap_mu: &[f64],
    y: &[f64],
) -> Result<Field> {
    let n = y.len();
    check_len(n, mu.len())?;
    check_len(n, mu_tilde.len())?;
    check_len(n, lap_mu.len())?;
    for c in &grad_mu.components {
        check_len(n, c.len())?;
    }
    let grad_sq = grad_mu.norm_sq();
    let mut out = Field::zeros(n);
    for i in 0..n {
        let e = mu[i].exp();
        let coeff = mu_tilde[i] - grad_sq[i] - lap_mu[i];
        out[i] = rs.eval(e * y[i]) / e + coeff * y[i];
    }
    Ok(out)
}

/// The source seen by `y`: `e^{-μ} f`.
pub fn effective_source(mu: &[f64], f: &[f64]) -> Result<Field> {
    check_len(mu.len(), f.len())?;
    Ok(Field(mu.iter().zip(f).map(|(m, v)| (-m).exp() * v).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, BoundaryKind};
    use crate::noise::{sample_paths, CoeffSpec, CoeffTerm, NoiseFields, SpaceProfile, TimeGrid, TimeProfile};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_and_inverse_cases() {
        let y = Field(vec![1.0, -2.0, 0.5]);
        let z = Field::zeros(3);
        assert_eq!(forward(&z, &y).unwrap(), y);
        assert_eq!(forward(&[0.3, 0.1, -1.0], &z).unwrap().max_abs(), 0.0);
        let ln2 = Field::constant(3, 2f64.ln());
        for v in forward(&ln2, &Field::constant(3, 3.0)).unwrap().iter() {
            assert_relative_eq!(*v, 6.0, epsilon = 1e-14);
        }
        assert_eq!(inverse(&z, &y).unwrap(), y);
        assert_eq!(inverse(&ln2, &z).unwrap().max_abs(), 0.0);
        assert!(forward(&[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn overflow_guard() {
        let mu = Field(vec![0.0, 31.0]);
        assert!(matches!(forward(&mu, &[1.0, 1.0]), Err(SviError::MuOverflow { .. })));
        assert!(inverse(&mu, &[1.0, 1.0]).is_err());
        assert!(forward_capped(&mu, &[1.0, 1.0], 40.0).is_ok());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mu: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
            let back = inverse(&mu, &forward(&mu, &y).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&y) {
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn source_cases() {
        let f = Field::constant(4, 4.0);
        assert_eq!(effective_source(&Field::zeros(4), &f).unwrap(), f);
        assert_eq!(effective_source(&Field::constant(4, 1.0), &Field::zeros(4)).unwrap().max_abs(), 0.0);
        for v in effective_source(&Field::constant(4, 2f64.ln()), &f).unwrap().iter() {
            assert_relative_eq!(*v, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn reaction_without_noise_is_plain() {
        let n = 5;
        let y = Field(vec![0.1, -0.2, 0.3, 1.0, -4.0]);
        let z = Field::zeros(n);
        let gz = VectorField::zeros(1, n);
        let out = effective_reaction(&ReactionSpec::linear(2.5), &z, &z, &gz, &z, &y).unwrap();
        for (a, b) in out.iter().zip(y.iter()) {
            assert_relative_eq!(*a, 2.5 * b, epsilon = 1e-15);
        }
    }

    fn sample_fields(seed: u64) -> (crate::grid::Grid, NoiseFields) {
        let g = build_grid(1, &[1.0], 33, BoundaryKind::Dirichlet).unwrap();
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let p = sample_paths(&tg, 2, seed, 0);
        let cs = CoeffSpec::new(vec![
            CoeffTerm::new(TimeProfile::Cosine { amp: 0.8, omega: 2.0, phase: 0.0 }, SpaceProfile::SineMode { amp: 1.0, modes: [2, 0] }),
            CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.3, c1: [-0.4, 0.0], c2: [0.5, 0.0] }),
        ]);
        let nf = NoiseFields::at_node(&cs, &p, 73, &g).unwrap();
        (g, nf)
    }

    #[test]
    fn zero_reaction_leaves_coefficient_only() {
        let (g, nf) = sample_fields(1);
        let y = g.field_from_fn(|x| (3.0 * x[0]).cos() - 0.2);
        let out = effective_reaction(&ReactionSpec::zero(), &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, &y).unwrap();
        // independent term-by-term assembly
        for i in 0..g.len() {
            let gx = nf.grad_mu.components[0][i];
            let c = nf.mu_tilde[i] - gx * gx - nf.lap_mu[i];
            assert_relative_eq!(out[i], c * y[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn linear_growth_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let (g, nf) = sample_fields(seed);
            let rs = ReactionSpec::saturating(1.7);
            let gsq = nf.grad_mu.norm_sq();
            let bound = rs.lipschitz()
                + nf.mu_tilde.max_abs()
                + (0..g.len()).map(|i| gsq[i] + nf.lap_mu[i].abs()).fold(0.0, f64::max);
            let y: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-10.0..10.0)).collect();
            let out = effective_reaction(&rs, &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, &y).unwrap();
            for (a, b) in out.iter().zip(&y) {
                assert!(a.abs() <= bound * b.abs() + 1e-12);
            }
        }
    }

    #[test]
    fn reaction_is_linear_in_y_for_linear_f() {
        let (g, nf) = sample_fields(2);
        let rs = ReactionSpec::linear(0.9);
        let y1 = g.field_from_fn(|x| x[0] * (1.0 - x[0]));
        let y2 = g.field_from_fn(|x| (5.0 * x[0]).sin());
        let comb: Field = y1.zip_map(&y2, |a, b| 2.0 * a - 3.0 * b);
        let f = |y: &Field| effective_reaction(&rs, &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, y).unwrap();
        let (a, b, c) = (f(&y1), f(&y2), f(&comb));
        for i in 0..g.len() {
            assert_relative_eq!(c[i], 2.0 * a[i] - 3.0 * b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_preserves_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu: Vec<f64> = (0..100).map(|_| rng.random_range(-8.0..8.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = forward(&mu, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a.signum(), b.signum());
        }
    }
}
