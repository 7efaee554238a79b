//! Dual-side methods for `min f(x) s.t. Ax = 0`, run on `ψ(y) = max_x {⟨Aᵀy,x⟩ − f(x)}`.

mod acsa;
mod restart;
mod spdstm;
mod sstm_sc;

pub use acsa::{ac_sa, ac_sa2, rrma_ac_sa2, rrma_rounds, RegularizedDual, RrmaRun};
pub use restart::{n_bar, restart_config, restarted_rrma, RestartConfig, RestartParams, RestartRun};
pub use spdstm::{spdstm, SpdstmOptions, SpdstmRun};
pub use sstm_sc::{sstm_sc, sstm_sc_observed, SstmScBatch, SstmScOptions, SstmScRun};

use crate::error::Result;
use crate::linalg::Vector;
use crate::oracle::DualObjective;
use crate::rng::Stream;

/// Batched noisy primal response `x̃(Aᵀy)` used as the primal output of a dual run.
pub fn primal_recovery(dual: &dyn DualObjective, y: &Vector, r: usize, stream: Stream) -> Result<Vector> {
    dual.sample_primal(y, r, stream)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// `f(x) + ψ(y)`.
    pub gap: f64,
    /// `‖Ax‖`.
    pub constraint_norm: f64,
}

pub fn duality_gap(dual: &dyn DualObjective, x: &Vector, y: &Vector) -> GapReport {
    GapReport {
        gap: dual.duality_gap(x, y),
        constraint_norm: dual.constraint_norm(x),
    }
}

/// Norm guard shared by the dual solvers.
pub(crate) fn guard_cap(scale: f64) -> f64 {
    1e6 * (1.0 + scale)
}


#[cfg(test)]
mod tests {
    use super::fixtures::shifted_dual;
    use super::*;
    use crate::oracle::NoiseSpec;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn gap_at_optimum_is_zero() {
        let d = shifted_dual(NoiseSpec::none());
        let g = duality_gap(&d, &v(&[2.0, 2.0]), &v(&[1.0]));
        assert!(g.gap.abs() <= 1e-10);
        assert_eq!(g.constraint_norm, 0.0);
    }

    #[test]
    fn gap_at_origin() {
        let d = shifted_dual(NoiseSpec::none());
        let g = duality_gap(&d, &v(&[0.0, 0.0]), &v(&[0.0]));
        assert_relative_eq!(g.gap, 5.0, epsilon = 1e-12);
        assert!(g.gap >= 5.0 - 1.0);
    }

    #[test]
    fn feasible_gap_is_primal_gap() {
        let d = shifted_dual(NoiseSpec::none());
        let x = v(&[0.5, 0.5]);
        let g = duality_gap(&d, &x, &v(&[1.0]));
        let f = 0.5 * (0.25 + 6.25);
        assert_relative_eq!(g.gap, f - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovery_is_exact_without_noise() {
        let d = shifted_dual(NoiseSpec::none());
        let x = primal_recovery(&d, &v(&[1.0]), 7, Stream::new(1)).unwrap();
        assert_relative_eq!(x, v(&[2.0, 2.0]), epsilon = 1e-15);
    }

    #[test]
    fn recovery_variance_shrinks_with_batch() {
        let d = shifted_dual(NoiseSpec::gaussian(1.0));
        let y = v(&[1.0]);
        let var = |r: usize| {
            let n = 2000;
            let mut s = 0.0;
            for i in 0..n {
                let x = primal_recovery(&d, &y, r, Stream::new(9).child(i)).unwrap();
                s += (x - v(&[2.0, 2.0])).norm_squared();
            }
            s / n as f64
        };
        let ratio = var(100) / var(1);
        assert!((ratio - 0.01).abs() <= 0.2 * 0.01, "ratio {ratio}");
    }
}
