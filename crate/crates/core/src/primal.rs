//! Primal accelerated methods: the similar-triangles scheme, its mini-batch
//! variant, the quadratic penalty for affine constraints and the variant with
//! an inexact proximal step for smooth composite objectives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::{gram_spectrum, Matrix, Vector};
use crate::oracle::{CallCounter, FirstOrderOracle, StochasticGradientOracle};
use crate::rng::{tag, Stream};
use crate::schedules::{batch_size_sstm, next_alpha};
use crate::trace::{Event, RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StmMode {
    #[default]
    Convex,
    StronglyConvex,
}

#[derive(Debug, Clone)]
pub struct StmOptions {
    pub mode: StmMode,
    /// `c` in `c·L·α² = A_{k+1}(1+A_kμ)`.
    pub step_factor: f64,
    /// Use `z − (∇f − μx̃)α/(1+μ)` instead of the exact prox update.
    pub literal_z_update: bool,
    /// Optimal value, enables the `f_gap` column.
    pub f_star: Option<f64>,
    pub record_grad_norm: bool,
}

impl Default for StmOptions {
    fn default() -> Self {
        Self {
            mode: StmMode::Convex,
            step_factor: 2.0,
            literal_z_update: false,
            f_star: None,
            record_grad_norm: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrimalRun {
    pub x: Vector,
    pub a_n: f64,
    pub trace: RunTrace,
}

/// `(A x + α z) / A⁺`.
fn triangle(a: f64, x: &Vector, alpha: f64, z: &Vector, a_next: f64) -> Vector {
    (x * a + z * alpha) / a_next
}

struct Monitor<'a> {
    value: Option<&'a dyn Fn(&Vector) -> f64>,
    f_star: Option<f64>,
    grad: Option<&'a dyn Fn(&Vector) -> Vector>,
    counter: &'a CallCounter,
}

impl Monitor<'_> {
    fn row(&self, k: usize, a: f64, x: &Vector) -> TraceRow {
        let mut row = TraceRow::new(k, Event::Iter, a, self.counter.snapshot());
        if let (Some(v), Some(fs)) = (self.value, self.f_star) {
            row.f_gap = Some(v(x) - fs);
        }
        if let Some(g) = self.grad {
            row.grad_norm = Some(g(x).norm());
        }
        row
    }
}

#[allow(clippy::too_many_arguments)]
fn triangles(
    x0: &Vector,
    n: usize,
    l: f64,
    mu: f64,
    opts: &StmOptions,
    monitor: &Monitor<'_>,
    mut grad: impl FnMut(&Vector, usize, f64, f64) -> Result<Vector>,
) -> Result<PrimalRun> {
    let mu = match opts.mode {
        StmMode::Convex => 0.0,
        StmMode::StronglyConvex => mu,
    };
    let mut x = x0.clone();
    let mut z = x0.clone();
    let mut a = 0.0;
    let mut trace = RunTrace::new();
    trace.push(monitor.row(0, a, &x));
    for k in 0..n {
        let (alpha, a_next) = next_alpha(a, l, mu, opts.step_factor)?;
        let x_tilde = triangle(a, &x, alpha, &z, a_next);
        let g = grad(&x_tilde, k, alpha, a_next)?;
        z = if mu == 0.0 {
            &z - &g * alpha
        } else if opts.literal_z_update {
            &z - (&g - &x_tilde * mu) * (alpha / (1.0 + mu))
        } else {
            (&z * (1.0 + a * mu) + (&x_tilde * mu - &g) * alpha) / (1.0 + a_next * mu)
        };
        x = triangle(a, &x, alpha, &z, a_next);
        a = a_next;
        if !a.is_finite() {
            trace.flag(format!("step sum overflowed at iteration {}", k + 1));
            break;
        }
        trace.push(monitor.row(k + 1, a, &x));
    }
    Ok(PrimalRun { x, a_n: a, trace })
}

/// Deterministic similar-triangles method.
pub fn stm(oracle: &FirstOrderOracle, x0: &Vector, n: usize, opts: &StmOptions) -> Result<PrimalRun> {
    check_dim(oracle.dim(), x0.len())?;
    contract(oracle.l() > 0.0, || "STM needs a positive smoothness constant".into())?;
    if opts.mode == StmMode::StronglyConvex {
        contract(oracle.mu() > 0.0, || "strongly convex mode needs mu > 0".into())?;
    }
    let value = |x: &Vector| oracle.value(x);
    let gradient = |x: &Vector| oracle.gradient(x);
    let monitor = Monitor {
        value: Some(&value),
        f_star: opts.f_star,
        grad: opts.record_grad_norm.then_some(&gradient as &dyn Fn(&Vector) -> Vector),
        counter: oracle.counter(),
    };
    triangles(x0, n, oracle.l(), oracle.mu(), opts, &monitor, |xt, _, _, _| oracle.eval_grad(xt))
}

#[derive(Debug, Clone, Copy)]
pub struct SstmBatch {
    pub eps: f64,
    pub beta: f64,
}

/// Mini-batch similar-triangles method with batch `r_{k+1}` from [`batch_size_sstm`].
pub fn sstm(
    oracle: &StochasticGradientOracle,
    x0: &Vector,
    n: usize,
    opts: &StmOptions,
    batch: SstmBatch,
    stream: Stream,
) -> Result<PrimalRun> {
    let base = oracle.base();
    check_dim(base.dim(), x0.len())?;
    contract(batch.eps > 0.0, || "eps must be positive".into())?;
    contract(batch.beta > 0.0 && batch.beta < 1.0, || "beta must lie in (0,1)".into())?;
    let sigma = oracle.noise().map(|s| s.scale()).unwrap_or(0.0);
    let mu = match opts.mode {
        StmMode::Convex => 0.0,
        StmMode::StronglyConvex => base.mu(),
    };
    let value = |x: &Vector| base.value(x);
    let monitor = Monitor {
        value: Some(&value),
        f_star: opts.f_star,
        grad: None,
        counter: base.counter(),
    };
    triangles(x0, n, base.l(), base.mu(), opts, &monitor, |xt, k, alpha, a_next| {
        let r = batch_size_sstm(alpha, a_next, mu, sigma, batch.eps, n, batch.beta);
        oracle.batch(xt, r, stream.path(&[tag::GRADIENT, k as u64]))
    })
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub x: Vector,
    pub iterations: usize,
    pub converged: bool,
}

/// Accelerated minimization driven by a caller-supplied stopping rule that
/// sees the current point and its gradient. The rule is checked at the start
/// point too, so an exact warm start costs one gradient.
pub fn minimize_until(
    mut grad: impl FnMut(&Vector) -> Vector,
    x0: Vector,
    l: f64,
    mu: f64,
    max_iter: usize,
    mut stop: impl FnMut(&Vector, &Vector) -> bool,
) -> Minimized {
    let mut x = x0;
    let g0 = grad(&x);
    if stop(&x, &g0) {
        return Minimized {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let mut z = x.clone();
    let mut a = 0.0;
    for it in 1..=max_iter {
        if a > 1e200 {
            // geometric growth of A; restart the estimate sequence from x
            a = 0.0;
            z = x.clone();
        }
        let (alpha, a_next) = next_alpha(a, l, mu, 1.0).expect("validated constants");
        let x_tilde = triangle(a, &x, alpha, &z, a_next);
        let g = grad(&x_tilde);
        z = (&z * (1.0 + a * mu) + (&x_tilde * mu - &g) * alpha) / (1.0 + a_next * mu);
        x = triangle(a, &x, alpha, &z, a_next);
        a = a_next;
        let gx = grad(&x);
        if stop(&x, &gx) {
            return Minimized {
                x,
                iterations: it,
                converged: true,
            };
        }
    }
    Minimized {
        x,
        iterations: max_iter,
        converged: false,
    }
}

/// Runs until the gradient norm drops to `tol`.
pub fn minimize_to_tolerance(
    grad: impl FnMut(&Vector) -> Vector,
    x0: Vector,
    l: f64,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Minimized {
    minimize_until(grad, x0, l, mu, max_iter, |_, g| g.norm() <= tol)
}

/// `F = f + h` with both parts smooth and convex.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub f: FirstOrderOracle,
    pub h: FirstOrderOracle,
}

impl CompositeProblem {
    pub fn new(f: FirstOrderOracle, h: FirstOrderOracle) -> Result<Self> {
        check_dim(f.dim(), h.dim())?;
        Ok(Self { f, h })
    }

    pub fn l_total(&self) -> f64 {
        self.f.l() + self.h.l()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.f.value(x) + self.h.value(x)
    }

    /// Whole objective as a single oracle sharing `f`'s counter.
    pub fn combined(&self) -> FirstOrderOracle {
        let (f1, h1, f2, h2) = (self.f.clone(), self.h.clone(), self.f.clone(), self.h.clone());
        FirstOrderOracle::new(
            self.f.dim(),
            self.l_total(),
            self.f.mu() + self.h.mu(),
            move |x| f1.value(x) + h1.value(x),
            move |x| f2.gradient(x) + h2.gradient(x),
        )
        .with_counter(self.f.counter().clone())
    }
}

/// `F(x) = f(x) + (R_y²/ε)‖Ax‖²`.
#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    pub composite: CompositeProblem,
    pub a: Matrix,
    pub r_y: f64,
    pub eps: f64,
    pub coef: f64,
    pub l_h: f64,
}

impl PenaltyProblem {
    pub fn base(&self) -> &FirstOrderOracle {
        &self.composite.f
    }

    pub fn constraint_norm(&self, x: &Vector) -> f64 {
        (&self.a * x).norm()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.composite.value(x)
    }
}

pub fn build_penalty(base: FirstOrderOracle, a: Matrix, r_y: f64, eps: f64) -> Result<PenaltyProblem> {
    check_dim(base.dim(), a.ncols())?;
    contract(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    contract(r_y > 0.0, || format!("R_y must be positive, got {r_y}"))?;
    contract(a.amax() > 0.0, || "constraint matrix is identically zero".into())?;
    let coef = r_y * r_y / eps;
    let spec = gram_spectrum(&a);
    let l_h = 2.0 * coef * spec.lambda_max;
    let mu_h = if spec.rank == a.ncols() {
        2.0 * coef * spec.lambda_min_plus
    } else {
        0.0
    };
    let ata = Arc::new(a.transpose() * &a);
    let counter = base.counter().clone();
    let (ata_v, ata_g) = (ata.clone(), ata);
    let h = FirstOrderOracle::new(
        base.dim(),
        l_h,
        mu_h,
        move |x| coef * x.dot(&(ata_v.as_ref() * x)),
        move |x| {
            counter.add_matvec(1);
            ata_g.as_ref() * x * (2.0 * coef)
        },
    )
    .with_counter(base.counter().clone());
    Ok(PenaltyProblem {
        composite: CompositeProblem::new(base, h)?,
        a,
        r_y,
        eps,
        coef,
        l_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCheck {
    pub f_gap: f64,
    pub constraint_norm: f64,
    pub f_gap_ok: bool,
    pub feasibility_ok: bool,
}

/// Checks the two conclusions of the penalty transfer against the true
/// constrained optimal value `f_star`.
pub fn verify_penalty_transfer(x_n: &Vector, problem: &PenaltyProblem, f_star: f64) -> TransferCheck {
    let f_gap = problem.base().value(x_n) - f_star;
    let constraint_norm = problem.constraint_norm(x_n);
    TransferCheck {
        f_gap,
        constraint_norm,
        f_gap_ok: f_gap <= problem.eps,
        feasibility_ok: constraint_norm <= 2.0 * problem.eps / problem.r_y,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStop {
    /// Stop once the a-posteriori δ-solution certificate holds (or at the cap).
    #[default]
    Certificate,
    /// Run exactly the theoretical budget.
    Budget,
}

#[derive(Debug, Clone)]
pub struct IpsOptions {
    /// Optimal value of `F`, enables the `f_gap` column.
    pub f_star: Option<f64>,
    pub inner_stop: InnerStop,
    /// Overrides the theoretical inner budget.
    pub inner_budget: Option<usize>,
    /// Hard cap on inner iterations, as a multiple of the budget.
    pub inner_cap_factor: usize,
    /// Overrides `δ = L/(64(L_h+L)N³)`.
    pub delta: Option<f64>,
    /// Records `‖Ax‖` in the trace.
    pub constraint: Option<Matrix>,
}

impl Default for IpsOptions {
    fn default() -> Self {
        Self {
            f_star: None,
            inner_stop: InnerStop::Certificate,
            inner_budget: None,
            inner_cap_factor: 50,
            delta: None,
            constraint: None,
        }
    }
}

/// What one outer step of [`stm_ips`] did, for inspection by callers.
#[derive(Debug, Clone)]
pub struct IpsStep {
    pub k: usize,
    pub alpha: f64,
    pub z_prev: Vector,
    pub z_next: Vector,
    pub x_tilde: Vector,
    pub grad_f: Vector,
    pub inner_iterations: usize,
    pub certified: bool,
    pub delta: f64,
}

impl IpsStep {
    /// `g(z) − ½‖z_prev‖²`-free evaluation of the prox subproblem (constants dropped).
    pub fn subproblem_value(&self, h: &FirstOrderOracle, z: &Vector) -> f64 {
        0.5 * (z - &self.z_prev).norm_squared() + self.alpha * (self.grad_f.dot(z) + h.value(z))
    }
}

pub fn inner_budget(kappa: f64, n: usize) -> usize {
    let n3 = (n.max(1) as f64).powi(3);
    (kappa.sqrt() * (kappa * n3).ln().max(1.0)).ceil().max(1.0) as usize
}

/// Similar triangles with an inexactly solved proximal step on `h`.
pub fn stm_ips(
    problem: &CompositeProblem,
    x0: &Vector,
    n: usize,
    opts: &IpsOptions,
    mut on_step: impl FnMut(&IpsStep),
) -> Result<PrimalRun> {
    let f = &problem.f;
    let h = &problem.h;
    check_dim(f.dim(), x0.len())?;
    let l = f.l();
    contract(l > 0.0, || "f must have a positive smoothness constant".into())?;
    let l_h = h.l();
    let delta = opts.delta.unwrap_or(l / (64.0 * (l_h + l) * (n.max(1) as f64).powi(3)));
    let counter = f.counter().clone();

    let snapshot_row = |k: usize, a: f64, x: &Vector| {
        let mut row = TraceRow::new(k, Event::Iter, a, counter.snapshot());
        if let Some(fs) = opts.f_star {
            row.f_gap = Some(problem.value(x) - fs);
        }
        if let Some(m) = &opts.constraint {
            row.constraint_norm = Some((m * x).norm());
        }
        row
    };

    let mut x = x0.clone();
    let mut z = x0.clone();
    let mut a = 0.0;
    let mut trace = RunTrace::new();
    trace.push(snapshot_row(0, a, &x));
    for k in 0..n {
        let (alpha, a_next) = next_alpha(a, l, 0.0, 2.0)?;
        let x_tilde = triangle(a, &x, alpha, &z, a_next);
        let gf = f.eval_grad(&x_tilde)?;
        let l_g = 1.0 + alpha * l_h;
        let mu_g = 1.0 + alpha * h.mu();
        let kappa = l_g / mu_g;
        let budget = opts.inner_budget.unwrap_or_else(|| inner_budget(kappa, n));
        let z_prev = z.clone();
        let warm = &z_prev - &gf * alpha;
        let grad_g = |w: &Vector| w - &z_prev + (&gf + h.gradient(w)) * alpha;
        let inner = match opts.inner_stop {
            InnerStop::Budget => minimize_until(grad_g, warm, l_g, mu_g, budget, |_, g| g.norm() == 0.0),
            InnerStop::Certificate => {
                let cap = budget.saturating_mul(opts.inner_cap_factor.max(1));
                minimize_until(grad_g, warm, l_g, mu_g, cap, |w, g| {
                    let gn = g.norm();
                    if gn == 0.0 {
                        return true;
                    }
                    let lower = (w - &z_prev).norm() - gn / mu_g;
                    lower > 0.0 && gn * gn / (2.0 * mu_g) <= delta * lower * lower
                })
            }
        };
        let certified = inner.converged;
        if opts.inner_stop == InnerStop::Certificate && !certified {
            trace.flag(format!(
                "inner prox solve hit its cap of {} iterations at outer step {}",
                inner.iterations,
                k + 1
            ));
        }
        z = inner.x;
        x = triangle(a, &x, alpha, &z, a_next);
        a = a_next;
        on_step(&IpsStep {
            k: k + 1,
            alpha,
            z_prev,
            z_next: z.clone(),
            x_tilde,
            grad_f: gf,
            inner_iterations: inner.iterations,
            certified,
            delta,
        });
        trace.push(snapshot_row(k + 1, a, &x));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged {
            iteration: n,
            norm: x.norm(),
            cap: f64::MAX,
            trace: Box::new(trace),
        });
    }
    Ok(PrimalRun { x, a_n: a, trace })
}
