use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::Vector;
use crate::oracle::DualObjective;
use crate::rng::{tag, Stream};
use crate::schedules::{batch_size_sstm_sc, next_alpha_strongly_convex};
use crate::trace::{Event, RunTrace, TraceRow};

use super::guard_cap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SstmScBatch {
    Fixed(usize),
    /// Constant batch from the noise level, target accuracy and horizon.
    Theory { eps: f64, beta: f64, c: f64 },
}

#[derive(Debug, Clone)]
pub struct SstmScOptions {
    pub n: usize,
    pub batch: SstmScBatch,
    pub stream: Stream,
    /// Recompute `z` from the stored history each step instead of running sums.
    pub resum: bool,
    pub monitor: bool,
    /// Optimal dual value, enables the `f_gap` column.
    pub psi_star: Option<f64>,
    /// Stop once the exact dual gradient norm at `y` drops to this level.
    pub target_grad_norm: Option<f64>,
    pub scale: f64,
}

impl Default for SstmScOptions {
    fn default() -> Self {
        Self {
            n: 100,
            batch: SstmScBatch::Fixed(1),
            stream: Stream::new(0),
            resum: false,
            monitor: true,
            psi_star: None,
            target_grad_norm: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SstmScRun {
    pub y: Vector,
    pub z: Vector,
    pub a_n: f64,
    pub batch: usize,
    pub iterations: usize,
    pub trace: RunTrace,
}

pub fn sstm_sc(dual: &dyn DualObjective, y0: &Vector, opts: &SstmScOptions) -> Result<SstmScRun> {
    sstm_sc_observed(dual, y0, opts, |_, _, _, _| {})
}

/// Stochastic similar triangles for a strongly convex dual. `observe(k, y, z, ỹ)`
/// sees every iterate, including the start point at `k = 0`.
pub fn sstm_sc_observed(
    dual: &dyn DualObjective,
    y0: &Vector,
    opts: &SstmScOptions,
    mut observe: impl FnMut(usize, &Vector, &Vector, &Vector),
) -> Result<SstmScRun> {
    check_dim(dual.dim(), y0.len())?;
    let l = dual.l_psi();
    let mu = dual.mu_psi();
    contract(mu > 0.0, || "SSTM_sc needs a strongly convex dual (mu_psi > 0)".into())?;
    let r = match opts.batch {
        SstmScBatch::Fixed(r) => {
            contract(r >= 1, || "batch size must be at least 1".into())?;
            r
        }
        SstmScBatch::Theory { eps, beta, c } => {
            contract(eps > 0.0 && c > 0.0, || "eps and C must be positive".into())?;
            batch_size_sstm_sc(l, mu, dual.sigma_psi(), eps, opts.n, beta, c)
        }
    };
    let grad_at = |y: &Vector, k: usize| -> Result<Vector> {
        let x = dual.sample_primal(y, r, opts.stream.path(&[tag::GRADIENT, k as u64]))?;
        Ok(dual.direction(&x))
    };
    let cap = guard_cap(opts.scale);
    let mut a = 1.0 / l;
    let mut y = y0.clone();
    let g0 = grad_at(y0, 0)?;
    // Σ α_l (μ(ỹ^l − y⁰) − g^l), with ỹ⁰ = y⁰
    let mut sum = &g0 * (-a);
    let mut history: Vec<(f64, Vector, Vector)> = Vec::new();
    if opts.resum {
        history.push((a, y0.clone(), g0));
    }
    let mut z = y0.clone();
    let mut trace = RunTrace::new();
    let row = |k: usize, a: f64, y: &Vector| {
        let mut row = TraceRow::new(k, Event::Iter, a, dual.counter().snapshot());
        if opts.monitor {
            let x = dual.exact_primal(y);
            row.grad_norm = Some(dual.grad_norm_of(&x));
            row.constraint_norm = Some(dual.constraint_norm(&x));
            row.dual_gap = Some(dual.duality_gap(&x, y));
            row.f_gap = opts.psi_star.map(|s| dual.value(y) - s);
        }
        row
    };
    trace.push(row(0, a, &y));
    observe(0, &y, &z, y0);
    let reached = |y: &Vector| opts.target_grad_norm.is_some_and(|t| dual.exact_grad_norm(y) <= t);
    let mut iterations = 0;
    if !reached(&y) {
        for k in 0..opts.n {
            let (alpha, a_next) = next_alpha_strongly_convex(a, l, mu)?;
            if !a_next.is_finite() {
                trace.flag(format!("step sum overflowed at iteration {}", k + 1));
                break;
            }
            let y_tilde = (&y * a + &z * alpha) / a_next;
            let g = grad_at(&y_tilde, k + 1)?;
            let denom = 1.0 + a_next * mu;
            if opts.resum {
                history.push((alpha, y_tilde.clone(), g));
                let mut s = y0 / denom;
                for (al, yt, gl) in &history {
                    s += (yt * (al * mu) - gl * *al) / denom;
                }
                z = s;
            } else {
                sum += ((&y_tilde - y0) * mu - &g) * alpha;
                z = y0 + &sum / denom;
            }
            y = (&y * a + &z * alpha) / a_next;
            a = a_next;
            iterations = k + 1;
            observe(k + 1, &y, &z, &y_tilde);
            trace.push(row(k + 1, a, &y));
            let zn = (&z - y0).norm();
            if !zn.is_finite() || zn > cap {
                return Err(Error::Diverged {
                    iteration: k + 1,
                    norm: zn,
                    cap,
                    trace: Box::new(trace),
                });
            }
            if reached(&y) {
                break;
            }
        }
    }
    Ok(SstmScRun {
        y,
        z,
        a_n: a,
        batch: r,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::shifted_dual;
    use super::*;
    use crate::linalg::{left_kernel_projector, Matrix};
    use crate::oracle::NoiseSpec;
    use crate::primal::minimize_to_tolerance;
    use crate::problems::QuadraticProblem;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn two_dim_dual() -> crate::oracle::DualOracle {
        let p = QuadraticProblem::random(3, 5.0, Stream::new(3));
        let a = Matrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        p.dual(a, NoiseSpec::none()).unwrap()
    }

    #[test]
    fn first_z_matches_numeric_argmin() {
        let d = two_dim_dual();
        let y0 = v(&[0.3, -0.2]);
        let (l, mu) = (d.l_psi(), d.mu_psi());
        let a0 = 1.0 / l;
        let (alpha, a1) = next_alpha_strongly_convex(a0, l, mu).unwrap();
        let g0 = d.exact_direction(&y0);
        let y_tilde = (&y0 * a0 + &y0 * alpha) / a1;
        let g1 = d.exact_direction(&y_tilde);
        // g̃₁(z) = ½‖z − y⁰‖² + Σ α_l(⟨g^l, z⟩ + (μ/2)‖z − ỹ^l‖²)
        let grad = |z: &Vector| {
            (z - &y0) + (&g0 + (z - &y0) * mu) * a0 + (&g1 + (z - &y_tilde) * mu) * alpha
        };
        let zs = minimize_to_tolerance(grad, y0.clone(), 1.0 + a1 * mu, 1.0 + a1 * mu, 1e-13, 10_000).x;
        let mut seen = None;
        sstm_sc_observed(&d, &y0, &SstmScOptions { n: 1, ..Default::default() }, |k, _, z, _| {
            if k == 1 {
                seen = Some(z.clone());
            }
        })
        .unwrap();
        assert_relative_eq!(seen.unwrap(), zs, epsilon = 1e-8);
    }

    #[test]
    fn running_sums_match_resum() {
        let d = two_dim_dual();
        let y0 = v(&[1.0, 2.0]);
        let a = sstm_sc(&d, &y0, &SstmScOptions { n: 60, ..Default::default() }).unwrap();
        let b = sstm_sc(
            &d,
            &y0,
            &SstmScOptions {
                n: 60,
                resum: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_relative_eq!(a.y, b.y, epsilon = 1e-10);
        assert_relative_eq!(a.z, b.z, epsilon = 1e-10);
    }

    #[test]
    fn certified_decay_on_shifted_quadratic() {
        let d = shifted_dual(NoiseSpec::none());
        let y0 = v(&[0.0]);
        let run = sstm_sc(&d, &y0, &SstmScOptions { n: 30, ..Default::default() }).unwrap();
        let r0 = 1.0;
        assert!((run.y[0] - 1.0).powi(2) <= r0 * d.l_psi() / run.a_n);
        assert!((run.y[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn optimum_is_stationary() {
        let d = shifted_dual(NoiseSpec::none());
        let run = sstm_sc(&d, &v(&[1.0]), &SstmScOptions { n: 20, ..Default::default() }).unwrap();
        assert_relative_eq!(run.y[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn iterates_stay_in_affine_row_space() {
        let p = QuadraticProblem::random(4, 10.0, Stream::new(21));
        let a = Matrix::from_row_slice(3, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0]);
        let d = p.dual(a.clone(), NoiseSpec::none()).unwrap();
        let proj = left_kernel_projector(&a);
        assert!(proj.norm() > 0.5, "A must be rank deficient");
        let y0 = v(&[0.5, -1.0, 2.0]);
        let mut worst: f64 = 0.0;
        sstm_sc_observed(&d, &y0, &SstmScOptions { n: 300, ..Default::default() }, |_, y, z, yt| {
            for w in [y, z, yt] {
                worst = worst.max((&proj * (w - &y0)).norm());
            }
        })
        .unwrap();
        assert!(worst <= 1e-10, "{worst:e}");
    }

    #[test]
    fn early_stop_on_target() {
        let d = shifted_dual(NoiseSpec::none());
        let run = sstm_sc(
            &d,
            &v(&[0.0]),
            &SstmScOptions {
                n: 1000,
                target_grad_norm: Some(1e-6),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(run.iterations < 1000);
        assert!(d.exact_grad_norm(&run.y) <= 1e-6);
    }

    #[test]
    fn rejects_non_strongly_convex_dual() {
        let p = QuadraticProblem::new(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let d = p.dual(Matrix::zeros(1, 2), NoiseSpec::none()).unwrap();
        assert!(sstm_sc(&d, &v(&[0.0]), &SstmScOptions::default()).is_err());
    }
}
