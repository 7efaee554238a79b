use crate::error::{contract, Error, Result};
use crate::linalg::Vector;
use crate::oracle::DualObjective;
use crate::rng::{tag, Stream};
use crate::schedules::{batch_size_spdstm, next_alpha_spdstm};
use crate::trace::{Event, RunTrace, TraceRow};

use super::guard_cap;

#[derive(Debug, Clone)]
pub struct SpdstmOptions {
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
    pub c_hat: f64,
    /// Overrides the theoretical batch rule when set.
    pub fixed_batch: Option<usize>,
    pub stream: Stream,
    /// Record `f(x̃)+ψ(y)` and `‖Ax̃‖` each iteration.
    pub monitor: bool,
    /// Estimate of `‖y*‖` used by the divergence guard.
    pub scale: f64,
}

impl Default for SpdstmOptions {
    fn default() -> Self {
        Self {
            n: 100,
            eps: 1e-3,
            beta: 0.05,
            c_hat: 1.0,
            fixed_batch: None,
            stream: Stream::new(0),
            monitor: true,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpdstmRun {
    pub y: Vector,
    /// Weighted average `Σ α_k x̃_k / A_N` of the primal responses.
    pub x_tilde: Vector,
    pub a_n: f64,
    pub batches: Vec<usize>,
    pub trace: RunTrace,
}

/// Stochastic primal-dual similar-triangles method started from `y = z = 0`.
pub fn spdstm(dual: &dyn DualObjective, opts: &SpdstmOptions) -> Result<SpdstmRun> {
    contract(opts.eps > 0.0, || "eps must be positive".into())?;
    contract(opts.beta > 0.0 && opts.beta < 1.0, || "beta must lie in (0,1)".into())?;
    contract(opts.c_hat > 0.0, || "C_hat must be positive".into())?;
    let l_tilde = 2.0 * dual.l_psi();
    let dim = dual.dim();
    let mut y = Vector::zeros(dim);
    let mut z = Vector::zeros(dim);
    let mut acc = Vector::zeros(dual.primal_dim());
    let mut a = 0.0;
    let mut batches = Vec::with_capacity(opts.n);
    let mut trace = RunTrace::new();
    trace.push(TraceRow::new(0, Event::Iter, 0.0, dual.counter().snapshot()));
    let cap = guard_cap(opts.scale);
    for k in 0..opts.n {
        let (alpha, a_next) = next_alpha_spdstm(a, l_tilde)?;
        let y_tilde = (&y * a + &z * alpha) / a_next;
        let alpha_bound = (k + 2) as f64 / (2.0 * l_tilde);
        let r = opts.fixed_batch.unwrap_or_else(|| {
            batch_size_spdstm(alpha_bound, dual.sigma_psi(), opts.eps, opts.n, opts.beta, opts.c_hat)
        });
        batches.push(r);
        let x = dual.sample_primal(&y_tilde, r, opts.stream.path(&[tag::GRADIENT, k as u64]))?;
        let g = dual.direction(&x);
        z -= &g * alpha;
        y = (&y * a + &z * alpha) / a_next;
        acc += &x * alpha;
        a = a_next;
        let x_avg = &acc / a;
        let mut row = TraceRow::new(k + 1, Event::Iter, a, dual.counter().snapshot());
        if opts.monitor {
            row.dual_gap = Some(dual.duality_gap(&x_avg, &y));
            row.constraint_norm = Some(dual.constraint_norm(&x_avg));
        }
        trace.push(row);
        let zn = z.norm();
        if !zn.is_finite() || zn > cap {
            return Err(Error::Diverged {
                iteration: k + 1,
                norm: zn,
                cap,
                trace: Box::new(trace),
            });
        }
    }
    let x_tilde = if a > 0.0 { acc / a } else { dual.exact_primal(&y) };
    Ok(SpdstmRun {
        y,
        x_tilde,
        a_n: a,
        batches,
        trace,
    })
}
