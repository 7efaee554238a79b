//! Step and batch-size schedules.
//!
//! All accelerated methods here share one step relation,
//! `c·L·α² = A_{k+1}(1 + A_k μ)` with `A_{k+1} = A_k + α`, differing only in the
//! factor `c` and in how `A` is initialised.

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    pub k: usize,
    pub alpha: f64,
    pub a: f64,
}

impl StepState {
    pub fn zero() -> Self {
        Self {
            k: 0,
            alpha: 0.0,
            a: 0.0,
        }
    }

    pub fn start(a0: f64) -> Self {
        Self {
            k: 0,
            alpha: a0,
            a: a0,
        }
    }

    pub fn advance(&mut self, l: f64, mu: f64, factor: f64) -> Result<()> {
        let (alpha, a) = next_alpha(self.a, l, mu, factor)?;
        self.k += 1;
        self.alpha = alpha;
        self.a = a;
        Ok(())
    }
}

/// Positive root of `c·L·α² − (1+Aμ)α − A(1+Aμ) = 0`.
pub fn next_alpha(a_k: f64, l: f64, mu: f64, factor: f64) -> Result<(f64, f64)> {
    contract(l > 0.0 && l.is_finite(), || format!("smoothness constant must be positive, got {l}"))?;
    contract(mu >= 0.0, || format!("strong convexity must be nonnegative, got {mu}"))?;
    contract(factor > 0.0, || format!("step factor must be positive, got {factor}"))?;
    contract(a_k >= 0.0, || format!("A_k must be nonnegative, got {a_k}"))?;
    let b = 1.0 + a_k * mu;
    let cl = factor * l;
    // both terms are positive, so no cancellation
    let alpha = (b + (b * b + 4.0 * cl * a_k * b).sqrt()) / (2.0 * cl);
    Ok((alpha, a_k + alpha))
}

/// `2L̃α² = A_k + α`.
pub fn next_alpha_spdstm(a_k: f64, l_tilde: f64) -> Result<(f64, f64)> {
    next_alpha(a_k, l_tilde, 0.0, 2.0)
}

/// `A_{k+1}(1 + A_k μ) = L α²`.
pub fn next_alpha_strongly_convex(a_k: f64, l: f64, mu: f64) -> Result<(f64, f64)> {
    next_alpha(a_k, l, mu, 1.0)
}

/// Basic accelerated step with unit factor, starting from `A₀ = 0`.
pub fn next_alpha_stm(a_k: f64, l: f64, mu: f64) -> Result<(f64, f64)> {
    next_alpha(a_k, l, mu, 1.0)
}

/// `(α_t, γ_t) = (2/(t+1), 4L/(t(t+1)))`.
pub fn acsa_params(t: usize, l_tilde: f64) -> Result<(f64, f64)> {
    contract(t >= 1, || "AC-SA step index starts at 1".into())?;
    let t = t as f64;
    Ok((2.0 / (t + 1.0), 4.0 * l_tilde / (t * (t + 1.0))))
}

/// Ceiling that ignores relative round-off of order 1e-12, so that
/// e.g. `3.0000000000000004` maps to 3.
pub fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

const MAX_BATCH: f64 = 1e12;

fn to_batch(x: f64) -> usize {
    if !(x > 1.0) {
        return 1;
    }
    ceil_tol(x.min(MAX_BATCH)).max(1.0) as usize
}

/// Mini-batch for stochastic STM: `σ²α ln(N/β) / ((1+Aμ)ε)`.
pub fn batch_size_sstm(alpha_next: f64, a_next: f64, mu: f64, sigma: f64, eps: f64, n: usize, beta: f64) -> usize {
    if sigma == 0.0 {
        return 1;
    }
    let log = (n as f64 / beta).ln().max(0.0);
    to_batch(sigma * sigma * alpha_next * log / ((1.0 + a_next * mu) * eps))
}

/// Primal-dual mini-batch: `σ_ψ² α̃ ln(N/β) / (Ĉε)`.
pub fn batch_size_spdstm(alpha_tilde: f64, sigma_psi: f64, eps: f64, n: usize, beta: f64, c_hat: f64) -> usize {
    if sigma_psi == 0.0 {
        return 1;
    }
    let log = (n as f64 / beta).ln().max(0.0);
    to_batch(sigma_psi * sigma_psi * alpha_tilde * log / (c_hat * eps))
}

/// Constant mini-batch for the strongly convex dual method:
/// `(1/C)·max{1, (μ/L)^{3/2} N² σ² (1+√(3 ln(N/β)))² / ε}`.
pub fn batch_size_sstm_sc(l: f64, mu: f64, sigma: f64, eps: f64, n: usize, beta: f64, c: f64) -> usize {
    if sigma == 0.0 {
        return 1;
    }
    let n_f = n as f64;
    let tail = 1.0 + (3.0 * (n_f / beta).ln().max(0.0)).sqrt();
    let raw = (mu / l).powf(1.5) * n_f * n_f * sigma * sigma * tail * tail / eps;
    to_batch(raw.max(1.0) / c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn spdstm_first_two_steps() {
        let (a1, big_a1) = next_alpha_spdstm(0.0, 1.0).unwrap();
        assert_eq!(a1, 0.5);
        assert_eq!(big_a1, 0.5);
        let (a2, _) = next_alpha_spdstm(0.5, 1.0).unwrap();
        assert_relative_eq!(a2, (1.0 + 5f64.sqrt()) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn strongly_convex_step_from_unit_state() {
        let (a, big_a) = next_alpha_strongly_convex(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(a, 1.0 + 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(big_a, 2.0 + 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(big_a * 2.0, a * a, epsilon = 1e-13);
        assert!(big_a >= 2.25);
    }

    #[test]
    fn strongly_convex_step_degenerates_without_mu() {
        let (a, _) = next_alpha_strongly_convex(0.0, 4.0, 0.0).unwrap();
        assert_eq!(a, 0.25);
    }

    #[test]
    fn stm_first_step_is_one_over_l() {
        let (a, big_a) = next_alpha_stm(0.0, 1.0, 0.0).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(big_a, 1.0);
    }

    #[test]
    fn stm_growth_is_quadratic() {
        let mut s = StepState::zero();
        for n in 1..=1000 {
            s.advance(1.0, 0.0, 1.0).unwrap();
            assert!(s.a >= 0.25 * (n * n) as f64);
        }
    }

    #[test]
    fn rejects_nonpositive_l() {
        assert!(next_alpha_spdstm(0.0, 0.0).is_err());
        assert!(next_alpha_strongly_convex(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn acsa_values() {
        assert_eq!(acsa_params(1, 1.0).unwrap(), (1.0, 2.0));
        let (a, g) = acsa_params(3, 1.0).unwrap();
        assert_eq!(a, 0.5);
        assert_relative_eq!(g, 1.0 / 3.0, epsilon = 1e-16);
        assert!(acsa_params(0, 1.0).is_err());
    }

    #[test]
    fn sstm_batch_examples() {
        assert_eq!(batch_size_sstm(1.0, 5.0, 0.0, 0.0, 0.1, 100, 0.05), 1);
        let beta = 20.0 / 3f64.exp();
        assert_eq!(batch_size_sstm(1.0, 5.0, 0.0, 1.0, 0.1, 20, beta), 30);
        assert_eq!(batch_size_sstm(1.0, 5.0, 1e12, 1.0, 0.1, 20, beta), 1);
    }

    #[test]
    fn spdstm_batch_examples() {
        assert_eq!(batch_size_spdstm(2.0, 0.0, 0.5, 10, 0.1, 1.0), 1);
        let beta = 10.0 / 2f64.exp();
        assert_eq!(batch_size_spdstm(2.0, 1.0, 0.5, 10, beta, 1.0), 8);
        // doubling eps halves the batch
        assert_eq!(batch_size_spdstm(2.0, 1.0, 1.0, 10, beta, 1.0), 4);
    }

    proptest! {
        #[test]
        fn relation_residual_and_bounds(
            l in prop::sample::select(vec![0.1, 1.0, 10.0]),
            mu in prop::sample::select(vec![0.0, 1e-3, 1e-2]),
            factor in prop::sample::select(vec![1.0, 2.0]),
            steps in 1usize..1000,
        ) {
            let mu = mu * l;
            let mut s = StepState::zero();
            for _ in 0..steps {
                let prev = s;
                s.advance(l, mu, factor).unwrap();
                prop_assert_eq!(s.a, prev.a + s.alpha);
                let lhs = s.a * (1.0 + prev.a * mu);
                let rhs = factor * l * s.alpha * s.alpha;
                prop_assert!((lhs - rhs).abs() / lhs <= 1e-12);
                prop_assert!(s.alpha > prev.alpha && s.a > prev.a);
                if mu == 0.0 && factor == 2.0 {
                    prop_assert!(s.alpha <= (s.k + 1) as f64 / (2.0 * l) * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn strongly_convex_lower_bound(l in 0.1f64..10.0, ratio in 1e-3f64..1.0) {
            let mu = ratio * l;
            let mut s = StepState::start(1.0 / l);
            for k in 1..=100 {
                s.advance(l, mu, 1.0).unwrap();
                let bound = (1.0 / l) * (1.0 + 0.5 * (mu / l).sqrt()).powi(2 * k);
                prop_assert!(s.a >= bound * (1.0 - 1e-12));
            }
        }

        #[test]
        fn batch_inverse_in_eps(alpha in 0.1f64..100.0, sigma in 0.1f64..10.0, eps in 1e-3f64..1.0) {
            let r1 = batch_size_spdstm(alpha, sigma, eps, 100, 0.05, 1.0);
            let r2 = batch_size_spdstm(alpha, sigma, 2.0 * eps, 100, 0.05, 1.0);
            prop_assert!(r2 <= r1);
            prop_assert!((2 * r2) as i64 - r1 as i64 >= 0 && (2 * r2) as i64 - (r1 as i64) <= 2);
        }
    }
}
