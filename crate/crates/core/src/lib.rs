//! Path-wise penalized solvers for parabolic variational inequalities with
//! linear multiplicative noise.
//!
//! The stochastic equation `dX - ΔX dt + F(X) dt + β(X) dt ∋ f dt + X Σ μ_k dβ_k`
//! is mapped, for each Brownian path, to a random parabolic inequality by
//! `X = e^μ y` with `μ = Σ μ_k β_k`. The inequality is penalized with the
//! Yosida approximation of `β` and marched by an implicit scheme.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod noise;
pub mod pathsolver;
pub mod penalty;
mod scheme;
pub mod signorini;
pub mod stefan;
pub mod transform;

pub use error::{Result, SviError};
pub use grid::{build_grid, BoundaryKind, Field, Grid, VectorField};
pub use noise::{sample_paths, BrownianPathSet, CoeffSpec, CoeffTerm, NoiseFields, SpaceProfile, TimeGrid, TimeProfile};
pub use pathsolver::{
    direct_em_solve, recover_multiplier, solve_path, step_interior, Forcing, InitialData, InitialKind, PathSolution, SolveConfig,
    Trajectory,
};
pub use penalty::{beta_eps, j_eps, resolvent, PenaltyParam};
pub use scheme::NewtonStats;
pub use transform::{ReactionKind, ReactionSpec};
