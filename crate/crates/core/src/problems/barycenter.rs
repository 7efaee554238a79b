//! Entropic Wasserstein barycenter of `m` discrete measures as a consensus problem.

use std::sync::Arc;

use crate::decentralized::{lift_problem, DecentralizedInstance, LocalObjective, Topology};
use crate::error::{contract, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::oracle::{ArgmaxSolver, FirstOrderOracle};

use super::entropic::{check_simplex, project_simplex, EntropicOt};

/// Tolerance of the inner transport solves behind values and gradients in `p`.
const INNER_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct BarycenterInstance {
    locals: Vec<EntropicOt>,
    mu: f64,
}

impl BarycenterInstance {
    pub fn new(measures: &[Vector], c: &Matrix, mu: f64) -> Result<Self> {
        contract(!measures.is_empty(), || "need at least one measure".into())?;
        let locals = measures
            .iter()
            .map(|q| EntropicOt::new(q.clone(), c.clone(), mu))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { locals, mu })
    }

    pub fn m(&self) -> usize {
        self.locals.len()
    }

    pub fn n(&self) -> usize {
        self.locals[0].n()
    }

    pub fn local(&self, k: usize) -> &EntropicOt {
        &self.locals[k]
    }

    /// `(1/m) Σ W_μ(p, q^k)`.
    pub fn objective(&self, p: &Vector) -> Result<f64> {
        let mut s = 0.0;
        for ot in &self.locals {
            s += ot.wasserstein(p, INNER_TOL)?.value;
        }
        Ok(s / self.m() as f64)
    }

    /// `(1/m) Σ λ*_k(p)`.
    pub fn gradient(&self, p: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(self.n());
        for ot in &self.locals {
            g += ot.wasserstein(p, INNER_TOL)?.lambda;
        }
        Ok(g / self.m() as f64)
    }

    /// Centralized projected gradient with backtracking, started at the uniform measure.
    pub fn reference(&self, tol: f64, max_iter: usize) -> Result<Vector> {
        let n = self.n();
        let mut p = Vector::from_element(n, 1.0 / n as f64);
        let mut fp = self.objective(&p)?;
        let mut step = self.mu;
        for _ in 0..max_iter {
            let g = self.gradient(&p)?;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = project_simplex(&(&p - &g * step));
                // keep the inner solves away from the boundary where λ* blows up
                if cand.min() <= 0.0 {
                    step *= 0.5;
                    continue;
                }
                let fc = self.objective(&cand)?;
                let d = &cand - &p;
                if fc <= fp + g.dot(&d) + d.norm_squared() / (2.0 * step) {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                return Ok(p);
            };
            let moved = (&cand - &p).norm() / step;
            p = cand;
            fp = fc;
            step *= 2.0;
            if moved <= tol {
                return Ok(p);
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: f64::NAN,
        })
    }

    /// Per-node objectives `W_μ(·, q^k)` with responses `∇W*_{q^k}` on the given network.
    pub fn decentralized(&self, topology: Topology) -> Result<DecentralizedInstance> {
        let n = self.n();
        let locals = self
            .locals
            .iter()
            .map(|ot| {
                let ot = Arc::new(ot.clone());
                let (v, g, r, c) = (ot.clone(), ot.clone(), ot.clone(), ot.clone());
                let oracle = FirstOrderOracle::new(
                    n,
                    f64::INFINITY,
                    self.mu,
                    move |p| primal_or_infinite(&v, p, |t| t.value),
                    move |p| {
                        v_or_nan(g.wasserstein(p, INNER_TOL).map(|t| t.lambda), p.len())
                    },
                );
                LocalObjective::new(oracle, ArgmaxSolver::closed(move |u| r.gradient(u)))
                    .with_conjugate(move |u| c.value(u))
            })
            .collect();
        lift_problem(locals, topology, n)
    }
}

fn primal_or_infinite(ot: &EntropicOt, p: &Vector, pick: impl Fn(super::Transport) -> f64) -> f64 {
    if check_simplex(p, "p").is_err() {
        return f64::INFINITY;
    }
    ot.wasserstein(p, INNER_TOL).map(pick).unwrap_or(f64::NAN)
}

fn v_or_nan(r: Result<Vector>, n: usize) -> Vector {
    r.unwrap_or_else(|_| Vector::from_element(n, f64::NAN))
}

pub fn barycenter_problem(measures: &[Vector], c: &Matrix, mu: f64, topology: Topology) -> Result<DecentralizedInstance> {
    contract(measures.len() == topology.m(), || {
        format!("{} measures for {} nodes", measures.len(), topology.m())
    })?;
    BarycenterInstance::new(measures, c, mu)?.decentralized(topology)
}
