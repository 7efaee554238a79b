//! Entropy-regularized optimal transport through its log-sum-exp dual.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::{Matrix, Vector};

const SIMPLEX_TOL: f64 = 1e-12;

pub(crate) fn check_simplex(p: &Vector, what: &str) -> Result<()> {
    contract(p.iter().all(|&v| v >= 0.0 && v.is_finite()), || format!("{what} has a negative entry"))?;
    let s: f64 = p.iter().sum();
    contract((s - 1.0).abs() <= SIMPLEX_TOL * p.len().max(1) as f64, || {
        format!("{what} sums to {s}, not 1")
    })
}

/// `W*_{q,μ}(λ) = μ Σ_j q_j ln((1/q_j) Σ_i exp((λ_i − C_ij)/μ))`.
#[derive(Debug, Clone)]
pub struct EntropicOt {
    q: Vector,
    c: Matrix,
    mu: f64,
}

#[derive(Debug, Clone)]
pub struct Transport {
    /// `W_μ(p, q)`.
    pub value: f64,
    /// Zero-mean maximizer, equal to `∇_p W_μ(p, q)`.
    pub lambda: Vector,
    pub iterations: usize,
}

impl EntropicOt {
    pub fn new(q: Vector, c: Matrix, mu: f64) -> Result<Self> {
        check_simplex(&q, "q")?;
        contract(c.is_square(), || "cost matrix must be square".into())?;
        check_dim(q.len(), c.nrows())?;
        contract(c.iter().all(|&v| v >= 0.0 && v.is_finite()), || "costs must be nonnegative".into())?;
        contract(mu > 0.0, || "entropy weight must be positive".into())?;
        Ok(Self { q, c, mu })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn q(&self) -> &Vector {
        &self.q
    }

    pub fn cost(&self) -> &Matrix {
        &self.c
    }

    /// Gradient Lipschitz constant of the dual.
    pub fn smoothness(&self) -> f64 {
        1.0 / self.mu
    }

    /// Stabilised `ln Σ_i exp((λ_i − C_ij)/μ)` and the column softmax.
    fn column(&self, lambda: &Vector, j: usize) -> (f64, Vector) {
        let logits = Vector::from_fn(self.n(), |i, _| (lambda[i] - self.c[(i, j)]) / self.mu);
        let top = logits.max();
        let w = logits.map(|t| (t - top).exp());
        let s = w.sum();
        (top + s.ln(), w / s)
    }

    pub fn value(&self, lambda: &Vector) -> f64 {
        let mut v = 0.0;
        for j in 0..self.n() {
            let qj = self.q[j];
            if qj == 0.0 {
                continue;
            }
            let (lse, _) = self.column(lambda, j);
            v += qj * (lse - qj.ln());
        }
        self.mu * v
    }

    pub fn gradient(&self, lambda: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n());
        for j in 0..self.n() {
            let qj = self.q[j];
            if qj == 0.0 {
                continue;
            }
            g += self.column(lambda, j).1 * qj;
        }
        g
    }

    /// Column softmax for one atom `j ~ q`; unbiased for the gradient.
    pub fn stoch_gradient(&self, lambda: &Vector, rng: &mut ChaCha8Rng) -> Vector {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.n() - 1;
        for j in 0..self.n() {
            acc += self.q[j];
            if u < acc && self.q[j] > 0.0 {
                pick = j;
                break;
            }
        }
        while self.q[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        self.column(lambda, pick).1
    }

    /// `∇²W*(λ) = (1/μ) Σ_j q_j (diag(s_j) − s_j s_jᵀ)`, singular along `1`.
    pub fn hessian(&self, lambda: &Vector) -> Matrix {
        let n = self.n();
        let mut h = Matrix::zeros(n, n);
        for j in 0..n {
            let qj = self.q[j];
            if qj == 0.0 {
                continue;
            }
            let s = self.column(lambda, j).1;
            h += (Matrix::from_diagonal(&s) - &s * s.transpose()) * qj;
        }
        h / self.mu
    }

    /// `W_μ(p, q) = max_λ {⟨λ,p⟩ − W*(λ)}`, solved by damped Newton steps on the
    /// zero-sum subspace until `‖p − ∇W*(λ)‖ ≤ tol`.
    pub fn wasserstein(&self, p: &Vector, tol: f64) -> Result<Transport> {
        check_dim(self.n(), p.len())?;
        check_simplex(p, "p")?;
        contract(tol > 0.0, || "tolerance must be positive".into())?;
        let n = self.n();
        let objective = |l: &Vector| self.value(l) - l.dot(p);
        let residual = |l: &Vector| self.gradient(l) - p;
        let ones = Matrix::from_element(n, n, 1.0 / n as f64);
        let mut x = Vector::zeros(n);
        let mut fx = objective(&x);
        let max_iter = 10_000;
        for it in 0..max_iter {
            let g = residual(&x);
            if g.norm() <= tol {
                let lambda = center(x);
                return Ok(Transport {
                    value: lambda.dot(p) - self.value(&lambda),
                    lambda,
                    iterations: it,
                });
            }
            // adding 11ᵀ/n fixes the kernel direction without touching zero-sum steps
            let h = self.hessian(&x) + &ones;
            let d = match h.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -&g * self.mu,
            };
            let slope = g.dot(&d);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &x + &d * t;
                let fc = objective(&cand);
                let armijo = fc <= fx + 1e-4 * t * slope;
                // near the optimum value differences drown in round-off; fall back to the residual
                let flat = fc <= fx + 1e-14 * fx.abs().max(1.0) && residual(&cand).norm() < g.norm();
                if armijo || flat {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: g.norm(),
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: residual(&x).norm(),
        })
    }
}

fn center(mut v: Vector) -> Vector {
    let m = v.mean();
    v.add_scalar_mut(-m);
    v
}

pub fn entropic_ot_dual_value(lambda: &Vector, q: &Vector, c: &Matrix, mu: f64) -> Result<f64> {
    let ot = EntropicOt::new(q.clone(), c.clone(), mu)?;
    check_dim(ot.n(), lambda.len())?;
    Ok(ot.value(lambda))
}

pub fn entropic_ot_dual_grad(lambda: &Vector, q: &Vector, c: &Matrix, mu: f64) -> Result<Vector> {
    let ot = EntropicOt::new(q.clone(), c.clone(), mu)?;
    check_dim(ot.n(), lambda.len())?;
    Ok(ot.gradient(lambda))
}

pub fn entropic_ot_stoch_grad(lambda: &Vector, q: &Vector, c: &Matrix, mu: f64, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let ot = EntropicOt::new(q.clone(), c.clone(), mu)?;
    check_dim(ot.n(), lambda.len())?;
    Ok(ot.stoch_gradient(lambda, rng))
}

/// Returns `(W_μ(p,q), λ*)` with `⟨λ*, 1⟩ = 0`.
pub fn entropic_wasserstein(p: &Vector, q: &Vector, c: &Matrix, mu: f64, tol: f64) -> Result<(f64, Vector)> {
    let t = EntropicOt::new(q.clone(), c.clone(), mu)?.wasserstein(p, tol)?;
    Ok((t.value, t.lambda))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &Vector) -> Vector {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}
