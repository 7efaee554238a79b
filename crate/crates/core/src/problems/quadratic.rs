//! Quadratic test objectives `f(x) = ½xᵀQx − bᵀx + c₀` with closed-form everything.

use std::sync::Arc;

use nalgebra::linalg::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::{gram_spectrum, is_symmetric, kernel_basis, pinv_solve, sym_eigen, Matrix, Vector};
use crate::oracle::{dual_from_primal, ArgmaxSolver, DualOracle, FirstOrderOracle, NoiseSpec};
use crate::rng::Stream;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    q: Arc<Matrix>,
    b: Arc<Vector>,
    c0: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
    l: f64,
    mu: f64,
}

impl QuadraticProblem {
    pub fn new(q: Matrix, b: Vector) -> Result<Self> {
        Self::with_constant(q, b, 0.0)
    }

    pub fn with_constant(q: Matrix, b: Vector, c0: f64) -> Result<Self> {
        check_dim(q.nrows(), b.len())?;
        contract(is_symmetric(&q, 1e-12), || "Q must be symmetric".into())?;
        let (vals, _) = sym_eigen(&q);
        let mu = vals[0];
        let l = vals[vals.len() - 1];
        if mu <= 0.0 {
            return Err(Error::NotPsd(format!("Q is not positive definite: smallest eigenvalue {mu:e}")));
        }
        let chol = Cholesky::new(q.clone()).ok_or_else(|| Error::NotPsd("Cholesky failed".into()))?;
        Ok(Self {
            q: Arc::new(q),
            b: Arc::new(b),
            c0,
            chol,
            l,
            mu,
        })
    }

    /// `½‖x − c‖²`.
    pub fn shifted(c: Vector) -> Self {
        let n = c.len();
        let c0 = 0.5 * c.norm_squared();
        Self::with_constant(Matrix::identity(n, n), c, c0).expect("identity is SPD")
    }

    /// Random SPD matrix with log-uniform spectrum in `[1, cond]` and a random rotation.
    pub fn random(dim: usize, cond: f64, stream: Stream) -> Self {
        let mut rng = stream.rng();
        let g = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let rot = qr.q();
        let eig = Vector::from_fn(dim, |i, _| {
            if dim == 1 {
                1.0
            } else {
                cond.powf(i as f64 / (dim - 1) as f64)
            }
        });
        let q = &rot * Matrix::from_diagonal(&eig) * rot.transpose();
        let q = (&q + q.transpose()) * 0.5;
        let b = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(q, b).expect("constructed SPD")
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(self.q.as_ref() * x)) - self.b.dot(x) + self.c0
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.q.as_ref() * x - self.b.as_ref()
    }

    pub fn oracle(&self) -> FirstOrderOracle {
        let (a, b) = (self.clone(), self.clone());
        FirstOrderOracle::new(self.dim(), self.l, self.mu, move |x| a.value(x), move |x| b.gradient(x))
    }

    pub fn minimizer(&self) -> Vector {
        self.chol.solve(&self.b)
    }

    pub fn min_value(&self) -> f64 {
        self.value(&self.minimizer())
    }

    /// `x(u) = argmax_x {⟨u,x⟩ − f(x)} = Q⁻¹(u + b)`.
    pub fn response(&self, u: &Vector) -> Vector {
        self.chol.solve(&(u + self.b.as_ref()))
    }

    /// `f*(u) = ½(u+b)ᵀQ⁻¹(u+b) − c₀`.
    pub fn conjugate(&self, u: &Vector) -> f64 {
        let w = u + self.b.as_ref();
        0.5 * w.dot(&self.chol.solve(&w)) - self.c0
    }

    pub fn argmax(&self) -> ArgmaxSolver {
        let me = self.clone();
        ArgmaxSolver::closed(move |u| me.response(u))
    }

    pub fn dual(&self, a: Matrix, noise: NoiseSpec) -> Result<DualOracle> {
        dual_from_primal(self.oracle(), a, self.argmax(), noise)
    }

    /// Minimizer and value of `f` on `{x : Ax = 0}` by reduction to the null space.
    pub fn constrained_minimizer(&self, a: &Matrix) -> Result<(Vector, f64)> {
        check_dim(self.dim(), a.ncols())?;
        let basis = kernel_basis(&(a.transpose() * a));
        if basis.ncols() == 0 {
            let x = Vector::zeros(self.dim());
            let v = self.value(&x);
            return Ok((x, v));
        }
        let reduced_q = basis.transpose() * self.q.as_ref() * &basis;
        let reduced_b = basis.transpose() * self.b.as_ref();
        let w = Cholesky::new(reduced_q)
            .ok_or_else(|| Error::NotPsd("reduced Hessian".into()))?
            .solve(&reduced_b);
        let x = &basis * w;
        let v = self.value(&x);
        Ok((x, v))
    }

    /// Minimum-norm dual solution `y*` with `∇f(x*) = Aᵀy*`.
    pub fn dual_solution(&self, a: &Matrix) -> Result<Vector> {
        let (x, _) = self.constrained_minimizer(a)?;
        pinv_solve(&a.transpose(), &self.gradient(&x))
    }

    /// `‖∇f(x*)‖² / λ⁺_min(AᵀA)`, an upper bound on `‖y*‖²`.
    pub fn dual_radius_bound(&self, a: &Matrix) -> Result<f64> {
        let (x, _) = self.constrained_minimizer(a)?;
        let spec = gram_spectrum(a);
        Ok(self.gradient(&x).norm_squared() / spec.lambda_min_plus)
    }
}

/// Nesterov's worst-case quadratic on `n` coordinates:
/// `(L/4)(½[x₁² + Σ(x_i − x_{i+1})² + x_n²] − x₁)`.
///
/// The gradient is applied in `O(n)` without forming the tridiagonal matrix.
#[derive(Debug, Clone, Copy)]
pub struct WorstCaseChain {
    pub n: usize,
    pub l: f64,
}

impl WorstCaseChain {
    fn apply_t(&self, x: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] } else { 0.0 };
            2.0 * x[i] - left - right
        })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.25 * self.l * (0.5 * x.dot(&self.apply_t(x)) - x[0])
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let mut g = self.apply_t(x);
        g[0] -= 1.0;
        g * (0.25 * self.l)
    }

    pub fn minimizer(&self) -> Vector {
        let np1 = (self.n + 1) as f64;
        Vector::from_fn(self.n, |i, _| 1.0 - (i + 1) as f64 / np1)
    }

    pub fn min_value(&self) -> f64 {
        self.l / 8.0 * (-1.0 + 1.0 / (self.n + 1) as f64)
    }

    pub fn oracle(&self) -> FirstOrderOracle {
        let (a, b) = (*self, *self);
        FirstOrderOracle::new(self.n, self.l, 0.0, move |x| a.value(x), move |x| b.gradient(x))
    }
}
