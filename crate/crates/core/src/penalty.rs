//! The obstacle graph `β` (zero on `r > 0`, `]-∞, 0]` at `r = 0`, empty
//! for `r < 0`) and its Yosida approximation.
//!
//! Multipliers follow the sign of the graph: `η ≤ 0`.

use crate::error::{Result, SviError};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PenaltyParam(f64);

impl PenaltyParam {
    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && eps > 0.0 {
            Ok(PenaltyParam(eps))
        } else {
            Err(SviError::Config(format!("penalty.eps must be > 0, got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `(1 + εβ)^{-1} r`, the projection onto `[0, ∞)`.
#[inline]
pub fn resolvent(r: f64, _eps: f64) -> f64 {
    r.max(0.0)
}

/// `β_ε(r) = -r⁻/ε`.
#[inline]
pub fn beta_eps(r: f64, eps: f64) -> f64 {
    r.min(0.0) / eps
}

/// `j_ε(r) = ∫₀ʳ β_ε = (r⁻)² / 2ε`.
#[inline]
pub fn j_eps(r: f64, eps: f64) -> f64 {
    let m = r.min(0.0);
    m * m / (2.0 * eps)
}

/// Whether `eta ∈ β(r)`.
pub fn graph_contains(r: f64, eta: f64) -> bool {
    if r > 0.0 {
        eta == 0.0
    } else if r == 0.0 {
        eta <= 0.0
    } else {
        false
    }
}

/// Distance-based variant of [`graph_contains`] for numerically computed
/// pairs: `r ≥ -tol`, `η ≤ tol` and `|r η| ≤ tol` (after clipping `r` at 0).
pub fn graph_contains_tol(r: f64, eta: f64, tol: f64) -> bool {
    r >= -tol && eta <= tol && (r.max(0.0) * eta).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn scalar_cases() {
        assert_eq!(resolvent(5.0, 0.1), 5.0);
        assert_eq!(resolvent(-3.0, 0.1), 0.0);
        assert_eq!(resolvent(0.0, 0.1), 0.0);
        assert_eq!(beta_eps(1.0, 0.1), 0.0);
        assert_relative_eq!(beta_eps(-0.2, 0.1), -2.0);
        assert_eq!(j_eps(2.0, 0.1), 0.0);
        assert_relative_eq!(j_eps(-0.2, 0.1), 0.2, epsilon = 1e-15);
        assert!(graph_contains(1.0, 0.0));
        assert!(graph_contains(0.0, -7.0));
        assert!(!graph_contains(-0.1, 0.0));
        assert!(!graph_contains(-0.1, -5.0));
        assert!(!graph_contains(1.0, -1.0));
        assert!(PenaltyParam::new(-1.0).is_err());
        assert!(PenaltyParam::new(0.0).is_err());
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    proptest! {
        #[test]
        fn yosida_identity(r in -100.0f64..100.0, eps in 1e-4f64..1.0) {
            let lhs = (r - resolvent(r, eps)) / eps;
            prop_assert!((lhs - beta_eps(r, eps)).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn potential_is_integral_of_penalty(r in -2.0f64..2.0, eps in 1e-2f64..1.0) {
            // β_ε is piecewise linear with a kink at 0: integrate each piece
            let q = if r < 0.0 {
                -simpson(|s| beta_eps(s, eps), r, 0.0, 200)
            } else {
                simpson(|s| beta_eps(s, eps), 0.0, r, 200)
            };
            prop_assert!((q - j_eps(r, eps)).abs() <= 1e-8);
        }

        #[test]
        fn monotone_and_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, eps in 1e-4f64..1.0) {
            prop_assert!((beta_eps(a, eps) - beta_eps(b, eps)) * (a - b) >= 0.0);
            prop_assert!((resolvent(a, eps) - resolvent(b, eps)).abs() <= (a - b).abs());
        }

        #[test]
        fn potential_convex_and_nonnegative(a in -10.0f64..10.0, b in -10.0f64..10.0, l in 0.0f64..1.0, eps in 1e-3f64..1.0) {
            prop_assert!(j_eps(a, eps) >= 0.0);
            let mid = j_eps(l * a + (1.0 - l) * b, eps);
            prop_assert!(mid <= l * j_eps(a, eps) + (1.0 - l) * j_eps(b, eps) + 1e-9);
            if a >= 0.0 { prop_assert_eq!(j_eps(a, eps), 0.0); }
            // derivative away from the kink
            if a.abs() > 1e-3 {
                let h = 1e-6;
                let fd = (j_eps(a + h, eps) - j_eps(a - h, eps)) / (2.0 * h);
                prop_assert!((fd - beta_eps(a, eps)).abs() <= 1e-4 * (1.0 + beta_eps(a, eps).abs()));
            }
        }

        #[test]
        fn cauchy_difference_inequality(a in -5.0f64..5.0, b in -5.0f64..5.0, e1 in 1e-4f64..1.0, e2 in 1e-4f64..1.0) {
            let lhs = (beta_eps(a, e1) - beta_eps(b, e2)) * (a - b);
            let rhs = (e1 * beta_eps(a, e1) - e2 * beta_eps(b, e2)) * (beta_eps(a, e1) - beta_eps(b, e2));
            prop_assert!(lhs >= rhs - 1e-9 * (1.0 + lhs.abs() + rhs.abs()));
        }

        #[test]
        fn graph_is_cone_invariant(r in -5.0f64..5.0, eta in -5.0f64..5.0, mu in -5.0f64..5.0, pick in 0u8..3) {
            // bias samples onto the graph's corner as well
            let (r, eta) = match pick { 0 => (0.0, eta), 1 => (r, 0.0), _ => (r, eta) };
            let s = mu.exp();
            prop_assert_eq!(graph_contains(r, eta), graph_contains(s * r, s * eta));
        }
    }

    #[test]
    fn penalty_blows_up_below_zero() {
        let mut prev = 0.0;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let v = beta_eps(-0.5, eps);
            assert!(v < prev);
            prev = v;
            assert_eq!(beta_eps(0.5, eps), 0.0);
            assert_eq!(beta_eps(0.0, eps), 0.0);
        }
    }
}
