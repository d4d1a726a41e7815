//! Grid operators, noise sampling and the change of variables, checked
//! against closed forms computed here.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use svi_core::grid::{apply_laplacian, inner, mass, norm_l2, seminorm_h1};
use svi_core::noise::{path_sup, NoiseFields};
use svi_core::transform::{effective_reaction, forward, inverse};
use svi_core::{beta_eps, build_grid, j_eps, resolvent, sample_paths, BoundaryKind, CoeffSpec, CoeffTerm, ReactionSpec, SpaceProfile, TimeGrid, TimeProfile};

fn laplacian_error(n: usize) -> f64 {
    let g = build_grid(1, &[1.0], n, BoundaryKind::Dirichlet).unwrap();
    let u = g.field_from_fn(|x| (PI * x[0]).sin());
    let lap = apply_laplacian(&g, &u).unwrap();
    lap.zip_map(&u, |l, v| l + PI * PI * v).max_abs()
}

#[test]
fn laplacian_is_second_order() {
    let e: Vec<f64> = [15, 31, 63, 127].iter().map(|&n| laplacian_error(n)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio} from {e:?}");
    }
}

#[test]
fn discrete_sine_is_an_exact_eigenvector() {
    // -Δ_h sin(kπx) = (4/h²) sin²(kπh/2) sin(kπx) on the Dirichlet grid
    let n = 40;
    let g = build_grid(1, &[1.0], n, BoundaryKind::Dirichlet).unwrap();
    let h = 1.0 / (n + 1) as f64;
    for k in 1..4 {
        let kf = k as f64;
        let u = g.field_from_fn(|x| (kf * PI * x[0]).sin());
        let lam = 4.0 / (h * h) * (kf * PI * h / 2.0).sin().powi(2);
        let lap = apply_laplacian(&g, &u).unwrap();
        assert!(lap.zip_map(&u, |l, v| l + lam * v).max_abs() < 1e-9 * lam);
    }
}

#[test]
fn laplacian_2d_on_product_sines() {
    let g = build_grid(2, &[1.0, 2.0], 31, BoundaryKind::Dirichlet).unwrap();
    let u = g.field_from_fn(|x| (PI * x[0]).sin() * (PI * x[1] / 2.0).sin());
    let lap = apply_laplacian(&g, &u).unwrap();
    let k2 = PI * PI * (1.0 + 0.25);
    assert!(lap.zip_map(&u, |l, v| l + k2 * v).max_abs() < 2e-2);
}

#[test]
fn quadrature_of_smooth_functions() {
    let g = build_grid(1, &[1.0], 255, BoundaryKind::Dirichlet).unwrap();
    let u = g.field_from_fn(|x| (PI * x[0]).sin());
    assert_relative_eq!(mass(&g, &u).unwrap(), 2.0 / PI, max_relative = 1e-4);
    assert_relative_eq!(norm_l2(&g, &u).unwrap().powi(2), 0.5, max_relative = 1e-4);
    assert_relative_eq!(seminorm_h1(&g, &u).unwrap().powi(2), PI * PI / 2.0, max_relative = 1e-3);

    // trapezoid weights integrate affine functions exactly on Neumann grids
    let gn = build_grid(1, &[2.0], 17, BoundaryKind::Neumann).unwrap();
    let a = gn.field_from_fn(|x| 3.0 - x[0]);
    assert_relative_eq!(mass(&gn, &a).unwrap(), 4.0, max_relative = 1e-12);
}

#[test]
fn neumann_boundary_is_the_outer_ring() {
    let g = build_grid(2, &[1.0, 1.0], 9, BoundaryKind::Neumann).unwrap();
    assert_eq!(g.boundary_nodes().len(), 4 * 9 - 4);
    let d = build_grid(2, &[1.0, 1.0], 9, BoundaryKind::Dirichlet).unwrap();
    assert!(d.boundary_nodes().is_empty());
}

proptest! {
    #[test]
    fn laplacian_is_symmetric_and_negative(us in prop::collection::vec(-1.0f64..1.0, 24), vs in prop::collection::vec(-1.0f64..1.0, 24)) {
        let g = build_grid(1, &[1.0], 24, BoundaryKind::Dirichlet).unwrap();
        let lu = apply_laplacian(&g, &us).unwrap();
        let lv = apply_laplacian(&g, &vs).unwrap();
        let a = inner(&g, &lu, &vs).unwrap();
        let b = inner(&g, &us, &lv).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        prop_assert!(inner(&g, &lu, &us).unwrap() <= 1e-12);
        // summation by parts: -<Δu, u> = |∇u|²
        let s = seminorm_h1(&g, &us).unwrap().powi(2);
        prop_assert!((inner(&g, &lu, &us).unwrap() + s).abs() <= 1e-9 * (1.0 + s));
    }

    #[test]
    fn transform_round_trip(mu in prop::collection::vec(-5.0f64..5.0, 10), y in prop::collection::vec(-3.0f64..3.0, 10)) {
        let x = forward(&mu, &y).unwrap();
        let back = inverse(&mu, &x).unwrap();
        for i in 0..10 {
            prop_assert!((back[i] - y[i]).abs() <= 1e-12 * (1.0 + y[i].abs()));
            prop_assert_eq!(x[i] >= 0.0, y[i] >= 0.0);
        }
    }

    #[test]
    fn yosida_potential_and_resolvent(r in -10.0f64..10.0, eps in 1e-6f64..1.0) {
        // j_ε' = β_ε by central differences
        let d = 1e-6 * (1.0 + r.abs());
        let fd = (j_eps(r + d, eps) - j_eps(r - d, eps)) / (2.0 * d);
        prop_assert!((fd - beta_eps(r, eps)).abs() <= 1e-4 * (1.0 + beta_eps(r, eps).abs()));
        // β_ε(r) = (r - J_ε r) / ε with J_ε the projection onto [0, ∞)
        prop_assert!((beta_eps(r, eps) - (r - resolvent(r, eps)) / eps).abs() <= 1e-9 / eps);
        prop_assert!(beta_eps(r, eps) <= 0.0);
    }
}

#[test]
fn brownian_paths_are_reproducible_and_nested() {
    let tg = TimeGrid::new(1.0, 64).unwrap();
    let a = sample_paths(&tg, 2, 9, 3);
    let b = sample_paths(&tg, 2, 9, 3);
    let c = sample_paths(&tg, 2, 9, 4);
    assert_eq!(a, b);
    assert_ne!(a.values(0), c.values(0));
    for k in 0..2 {
        assert_eq!(a.value(k, 0), 0.0);
        let sum: f64 = a.increments(k).iter().sum();
        assert_relative_eq!(sum, a.value(k, 64), epsilon = 1e-12);
    }
    let coarse = a.coarsened(4).unwrap();
    assert_eq!(coarse.steps(), 16);
    for n in 0..=16 {
        assert_eq!(coarse.value(1, n), a.value(1, 4 * n));
    }
    assert!(a.coarsened(5).is_err());
    assert!(path_sup(&a) >= a.value(0, 64).abs());
}

#[test]
fn noise_fields_match_hand_derivatives() {
    // μ_1 = (1 + t) sin(πξ), so μ̃ = ∂_t μ_1 β + ½ μ_1²
    let g = build_grid(1, &[1.0], 9, BoundaryKind::Dirichlet).unwrap();
    let cs = CoeffSpec::new(vec![CoeffTerm::new(
        TimeProfile::Linear { offset: 1.0, slope: 1.0 },
        SpaceProfile::SineMode { amp: 1.0, modes: [1, 0] },
    )]);
    let (t, b) = (0.3, 0.7);
    let nf = NoiseFields::assemble(&cs, &g, t, &[b]).unwrap();
    for i in 0..g.len() {
        let x = g.position(i)[0];
        let s = (PI * x).sin();
        let mu = b * (1.0 + t) * s;
        assert_relative_eq!(nf.mu[i], mu, epsilon = 1e-12);
        assert_relative_eq!(nf.mu_tilde[i], s * b + 0.5 * ((1.0 + t) * s).powi(2), epsilon = 1e-12);
        assert_relative_eq!(nf.grad_mu.components[0][i], b * (1.0 + t) * PI * (PI * x).cos(), epsilon = 1e-12);
        assert_relative_eq!(nf.lap_mu[i], -PI * PI * mu, epsilon = 1e-10);
        assert_relative_eq!(nf.g.components[0][i], -2.0 * nf.grad_mu.components[0][i], epsilon = 1e-12);
    }
}

#[test]
fn effective_reaction_against_direct_formula() {
    let g = build_grid(1, &[1.0], 7, BoundaryKind::Dirichlet).unwrap();
    let cs = CoeffSpec::new(vec![CoeffTerm::steady(SpaceProfile::Quadratic { c0: 0.1, c1: [0.5, 0.0], c2: [-0.3, 0.0] })]);
    let nf = NoiseFields::assemble(&cs, &g, 0.0, &[1.3]).unwrap();
    let rs = ReactionSpec::saturating(2.0);
    let y = g.field_from_fn(|x| x[0] - 0.4);
    let out = effective_reaction(&rs, &nf.mu, &nf.mu_tilde, &nf.grad_mu, &nf.lap_mu, &y).unwrap();
    for i in 0..g.len() {
        let x = g.position(i)[0];
        let mu = 1.3 * (0.1 + 0.5 * x - 0.3 * x * x);
        let dmu = 1.3 * (0.5 - 0.6 * x);
        let lap = 1.3 * -0.6;
        let expect = (-mu).exp() * 2.0 * (mu.exp() * y[i]).tanh() + nf.mu_tilde[i] * y[i] - (dmu * dmu + lap) * y[i];
        assert_relative_eq!(out[i], expect, epsilon = 1e-12);
    }
}
