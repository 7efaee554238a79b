//! First-order, stochastic and dual oracles plus the call accounting shared by all solvers.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::{gram_spectrum, Matrix, Vector};
use crate::rng::Stream;

#[derive(Debug, Default)]
pub struct CallCounter {
    grad_calls: AtomicU64,
    stoch_samples: AtomicU64,
    matvec_ata: AtomicU64,
    comm_rounds: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub grad_calls: u64,
    pub stoch_samples: u64,
    pub matvec_ata: u64,
    pub comm_rounds: u64,
}

impl Counts {
    /// Componentwise `<=`.
    pub fn le(&self, other: &Counts) -> bool {
        self.grad_calls <= other.grad_calls
            && self.stoch_samples <= other.stoch_samples
            && self.matvec_ata <= other.matvec_ata
            && self.comm_rounds <= other.comm_rounds
    }
}

impl CallCounter {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn add_grad(&self, n: u64) {
        self.grad_calls.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_samples(&self, n: u64) {
        self.stoch_samples.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_matvec(&self, n: u64) {
        self.matvec_ata.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_rounds(&self, n: u64) {
        self.comm_rounds.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> Counts {
        Counts {
            grad_calls: self.grad_calls.load(Ordering::Relaxed),
            stoch_samples: self.stoch_samples.load(Ordering::Relaxed),
            matvec_ata: self.matvec_ata.load(Ordering::Relaxed),
            comm_rounds: self.comm_rounds.load(Ordering::Relaxed),
        }
    }

    /// Only meant to be called when a run starts.
    pub fn reset(&self) {
        self.grad_calls.store(0, Ordering::Relaxed);
        self.stoch_samples.store(0, Ordering::Relaxed);
        self.matvec_ata.store(0, Ordering::Relaxed);
        self.comm_rounds.store(0, Ordering::Relaxed);
    }
}

pub type ValueFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A convex objective with an exact gradient and known curvature bounds.
#[derive(Clone)]
pub struct FirstOrderOracle {
    dim: usize,
    l: f64,
    mu: f64,
    value: ValueFn,
    gradient: VectorFn,
    counter: Arc<CallCounter>,
}

impl fmt::Debug for FirstOrderOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FirstOrderOracle")
            .field("dim", &self.dim)
            .field("l", &self.l)
            .field("mu", &self.mu)
            .finish_non_exhaustive()
    }
}

impl FirstOrderOracle {
    pub fn new(
        dim: usize,
        l: f64,
        mu: f64,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            l,
            mu,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            counter: CallCounter::new(),
        }
    }

    pub fn with_counter(mut self, counter: Arc<CallCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn counter(&self) -> &Arc<CallCounter> {
        &self.counter
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    /// Gradient without touching the counter (monitoring and test use).
    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }

    pub fn eval_grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        self.counter.add_grad(1);
        Ok((self.gradient)(x))
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff_grad(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Bounded,
    None,
}

/// Additive perturbation model: bias of norm `delta` plus zero-mean noise of scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            delta: 0.0,
            sigma: 0.0,
            kind: NoiseKind::None,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            delta: 0.0,
            sigma,
            kind: NoiseKind::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        contract(self.delta >= 0.0 && self.delta.is_finite(), || {
            format!("noise delta must be finite and nonnegative, got {}", self.delta)
        })?;
        contract(self.sigma >= 0.0 && self.sigma.is_finite(), || {
            format!("noise sigma must be finite and nonnegative, got {}", self.sigma)
        })
    }

    /// Effective noise scale after accounting for `kind`.
    pub fn scale(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ => self.sigma,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.delta == 0.0 && self.scale() == 0.0
    }

    /// One zero-mean draw in `ℝ^dim`.
    pub fn draw(&self, dim: usize, rng: &mut ChaCha8Rng) -> Vector {
        let sigma = self.scale();
        if sigma == 0.0 || dim == 0 {
            return Vector::zeros(dim);
        }
        let g = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        match self.kind {
            NoiseKind::Gaussian => g * (sigma / (dim as f64).sqrt()),
            NoiseKind::Bounded => {
                let n = g.norm();
                if n == 0.0 {
                    let mut e = Vector::zeros(dim);
                    e[0] = sigma;
                    e
                } else {
                    g * (sigma / n)
                }
            }
            NoiseKind::None => unreachable!(),
        }
    }

    /// Mean of `r` draws, sample `i` taken from `stream.child(i)`.
    pub fn draw_mean(&self, dim: usize, r: usize, stream: Stream) -> Vector {
        let mut acc = Vector::zeros(dim);
        if self.scale() == 0.0 {
            return acc;
        }
        for i in 0..r {
            acc += self.draw(dim, &mut stream.child(i as u64).rng());
        }
        acc / r as f64
    }
}

/// Unit vector field used to place the bias; defaults to `e₁`.
pub fn first_axis(dim: usize) -> VectorFn {
    Arc::new(move |_x: &Vector| {
        let mut e = Vector::zeros(dim);
        if dim > 0 {
            e[0] = 1.0;
        }
        e
    })
}

pub type SampleFn = Arc<dyn Fn(&Vector, &mut ChaCha8Rng) -> Vector + Send + Sync>;

#[derive(Clone)]
enum Sampler {
    Additive { noise: NoiseSpec, bias_direction: VectorFn },
    Custom(SampleFn),
}

/// Stochastic gradients with bounded bias and light-tailed noise.
#[derive(Clone)]
pub struct StochasticGradientOracle {
    base: FirstOrderOracle,
    sampler: Sampler,
}

impl fmt::Debug for StochasticGradientOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("StochasticGradientOracle");
        d.field("base", &self.base);
        if let Sampler::Additive { noise, .. } = &self.sampler {
            d.field("noise", noise);
        }
        d.finish_non_exhaustive()
    }
}

impl StochasticGradientOracle {
    pub fn new(base: FirstOrderOracle, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        let bias_direction = first_axis(base.dim());
        Ok(Self {
            base,
            sampler: Sampler::Additive {
                noise,
                bias_direction,
            },
        })
    }

    pub fn with_bias_direction(mut self, dir: VectorFn) -> Self {
        if let Sampler::Additive { bias_direction, .. } = &mut self.sampler {
            *bias_direction = dir;
        }
        self
    }

    /// Fully custom sampler, e.g. finite-sum objectives sampled by index.
    pub fn from_sampler(
        base: FirstOrderOracle,
        sample: impl Fn(&Vector, &mut ChaCha8Rng) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            base,
            sampler: Sampler::Custom(Arc::new(sample)),
        }
    }

    pub fn base(&self) -> &FirstOrderOracle {
        &self.base
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        match &self.sampler {
            Sampler::Additive { noise, .. } => Some(*noise),
            Sampler::Custom(_) => None,
        }
    }

    fn one(&self, x: &Vector, stream: Stream) -> Vector {
        match &self.sampler {
            Sampler::Additive {
                noise,
                bias_direction,
            } => {
                let g = self.base.gradient(x);
                if noise.is_exact() {
                    return g;
                }
                let mut out = g;
                if noise.delta > 0.0 {
                    out += bias_direction(x) * noise.delta;
                }
                out + noise.draw(x.len(), &mut stream.rng())
            }
            Sampler::Custom(f) => f(x, &mut stream.rng()),
        }
    }

    pub fn sample(&self, x: &Vector, stream: Stream) -> Result<Vector> {
        check_dim(self.base.dim(), x.len())?;
        self.base.counter().add_samples(1);
        Ok(self.one(x, stream))
    }

    /// Mean of `r` samples; sample `i` uses `stream.child(i)`.
    pub fn batch(&self, x: &Vector, r: usize, stream: Stream) -> Result<Vector> {
        check_dim(self.base.dim(), x.len())?;
        contract(r >= 1, || "batch size must be at least 1".into())?;
        self.base.counter().add_samples(r as u64);
        if let Sampler::Additive { noise, .. } = &self.sampler {
            if noise.is_exact() {
                return Ok(self.base.gradient(x));
            }
        }
        if r == 1 {
            return Ok(self.one(x, stream.child(0)));
        }
        let mut acc = Vector::zeros(x.len());
        for i in 0..r {
            acc += self.one(x, stream.child(i as u64));
        }
        Ok(acc / r as f64)
    }
}

pub fn eval_grad(oracle: &FirstOrderOracle, x: &Vector) -> Result<Vector> {
    oracle.eval_grad(x)
}

pub fn sample_stoch_grad(oracle: &StochasticGradientOracle, x: &Vector, stream: Stream) -> Result<Vector> {
    oracle.sample(x, stream)
}

pub fn batch_grad(oracle: &StochasticGradientOracle, x: &Vector, r: usize, stream: Stream) -> Result<Vector> {
    oracle.batch(x, r, stream)
}

/// Solver for the conjugate response `x(u) = argmax_x {⟨u,x⟩ − f(x)}`.
#[derive(Clone)]
pub enum ArgmaxSolver {
    Closed(VectorFn),
    /// Accelerated inner minimization of `f(x) − ⟨u,x⟩` to a gradient-norm tolerance.
    InnerStm { tol: f64, max_iter: usize },
}

impl fmt::Debug for ArgmaxSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgmaxSolver::Closed(_) => f.write_str("Closed"),
            ArgmaxSolver::InnerStm { tol, max_iter } => f
                .debug_struct("InnerStm")
                .field("tol", tol)
                .field("max_iter", max_iter)
                .finish(),
        }
    }
}

impl ArgmaxSolver {
    pub fn closed(f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        ArgmaxSolver::Closed(Arc::new(f))
    }

    pub fn inner() -> Self {
        ArgmaxSolver::InnerStm {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }

    pub fn solve(&self, f: &FirstOrderOracle, u: &Vector) -> Vector {
        match self {
            ArgmaxSolver::Closed(g) => g(u),
            ArgmaxSolver::InnerStm { tol, max_iter } => {
                let shifted = |x: &Vector| f.gradient(x) - u;
                crate::primal::minimize_to_tolerance(
                    shifted,
                    Vector::zeros(f.dim()),
                    f.l(),
                    f.mu(),
                    *tol,
                    *max_iter,
                )
                .x
            }
        }
    }
}

/// The dual side of `min f(x) s.t. Ax = 0` as seen by a dual solver.
///
/// Solvers only touch the counted methods; the rest are monitors used for
/// traces and certificates and must not bump any counter.
pub trait DualObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn primal_dim(&self) -> usize;
    fn l_psi(&self) -> f64;
    fn mu_psi(&self) -> f64;
    /// Noise scale of a single dual-gradient sample.
    fn sigma_psi(&self) -> f64;
    fn counter(&self) -> &Arc<CallCounter>;

    /// Batched noisy primal response at dual point `y`.
    fn sample_primal(&self, y: &Vector, r: usize, stream: Stream) -> Result<Vector>;
    /// Dual-space step direction for a primal response.
    fn direction(&self, x: &Vector) -> Vector;
    /// Dual gradient norm for a primal response, as an algorithm would compute it.
    fn probe_norm(&self, x: &Vector) -> f64;

    fn value(&self, y: &Vector) -> f64;
    fn exact_primal(&self, y: &Vector) -> Vector;
    /// True dual gradient norm for a primal response (uncounted).
    fn grad_norm_of(&self, x: &Vector) -> f64;
    fn constraint_norm(&self, x: &Vector) -> f64;
    fn primal_value(&self, x: &Vector) -> f64;

    fn exact_direction(&self, y: &Vector) -> Vector {
        let x = self.exact_primal(y);
        self.direction_uncounted(&x)
    }

    fn direction_uncounted(&self, x: &Vector) -> Vector;

    fn exact_grad_norm(&self, y: &Vector) -> f64 {
        self.grad_norm_of(&self.exact_primal(y))
    }

    /// `f(x) + ψ(y)`.
    fn duality_gap(&self, x: &Vector, y: &Vector) -> f64 {
        self.primal_value(x) + self.value(y)
    }
}

/// `ψ(y) = max_x {⟨Aᵀy, x⟩ − f(x)}` with a possibly noisy primal response.
#[derive(Clone, Debug)]
pub struct DualOracle {
    primal: FirstOrderOracle,
    a: Matrix,
    argmax: ArgmaxSolver,
    noise: NoiseSpec,
    l_psi: f64,
    mu_psi: f64,
    sigma_psi: f64,
    lambda_max: f64,
    lambda_min_plus: f64,
}

impl DualOracle {
    pub fn primal(&self) -> &FirstOrderOracle {
        &self.primal
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_min_plus(&self) -> f64 {
        self.lambda_min_plus
    }

    /// Exact `x(Aᵀy)`.
    pub fn response(&self, y: &Vector) -> Vector {
        self.argmax.solve(&self.primal, &(self.a.transpose() * y))
    }

    /// Exact `∇ψ(y) = A x(Aᵀy)`.
    pub fn gradient(&self, y: &Vector) -> Vector {
        &self.a * self.response(y)
    }

    /// Batched noisy dual gradient.
    pub fn batch_grad(&self, y: &Vector, r: usize, stream: Stream) -> Result<Vector> {
        let x = self.sample_primal(y, r, stream)?;
        Ok(&self.a * x)
    }
}

pub fn dual_from_primal(
    primal: FirstOrderOracle,
    a: Matrix,
    argmax: ArgmaxSolver,
    noise: NoiseSpec,
) -> Result<DualOracle> {
    noise.validate()?;
    check_dim(primal.dim(), a.ncols())?;
    if primal.mu() <= 0.0 {
        return Err(Error::NotStronglyConvex { mu: primal.mu() });
    }
    let spec = gram_spectrum(&a);
    let l_psi = spec.lambda_max / primal.mu();
    let mu_psi = if primal.l() > 0.0 {
        spec.lambda_min_plus / primal.l()
    } else {
        0.0
    };
    let sigma_x = noise.scale();
    Ok(DualOracle {
        sigma_psi: spec.lambda_max.sqrt() * sigma_x,
        primal,
        a,
        argmax,
        noise,
        l_psi,
        mu_psi,
        lambda_max: spec.lambda_max,
        lambda_min_plus: spec.lambda_min_plus,
    })
}

impl DualObjective for DualOracle {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    fn l_psi(&self) -> f64 {
        self.l_psi
    }

    fn mu_psi(&self) -> f64 {
        self.mu_psi
    }

    fn sigma_psi(&self) -> f64 {
        self.sigma_psi
    }

    fn counter(&self) -> &Arc<CallCounter> {
        self.primal.counter()
    }

    fn sample_primal(&self, y: &Vector, r: usize, stream: Stream) -> Result<Vector> {
        check_dim(self.a.nrows(), y.len())?;
        contract(r >= 1, || "batch size must be at least 1".into())?;
        self.counter().add_samples(r as u64);
        let x = self.response(y);
        if self.noise.is_exact() {
            return Ok(x);
        }
        let mut out = x;
        if self.noise.delta > 0.0 {
            out += first_axis(out.len())(&out) * self.noise.delta;
        }
        let n = out.len();
        Ok(out + self.noise.draw_mean(n, r, stream))
    }

    fn direction(&self, x: &Vector) -> Vector {
        &self.a * x
    }

    fn direction_uncounted(&self, x: &Vector) -> Vector {
        &self.a * x
    }

    fn probe_norm(&self, x: &Vector) -> f64 {
        (&self.a * x).norm()
    }

    fn value(&self, y: &Vector) -> f64 {
        let u = self.a.transpose() * y;
        let x = self.argmax.solve(&self.primal, &u);
        u.dot(&x) - self.primal.value(&x)
    }

    fn exact_primal(&self, y: &Vector) -> Vector {
        self.response(y)
    }

    fn grad_norm_of(&self, x: &Vector) -> f64 {
        (&self.a * x).norm()
    }

    fn constraint_norm(&self, x: &Vector) -> f64 {
        (&self.a * x).norm()
    }

    fn primal_value(&self, x: &Vector) -> f64 {
        self.primal.value(x)
    }
}
