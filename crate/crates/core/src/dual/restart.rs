use crate::error::{check_dim, contract, Result};
use crate::linalg::Vector;
use crate::oracle::DualObjective;
use crate::rng::{tag, Stream};
use crate::schedules::ceil_tol;
use crate::trace::{Event, RunTrace, TraceRow};

use super::acsa::rrma_ac_sa2;

#[derive(Debug, Clone)]
pub struct RestartParams {
    pub eps: f64,
    pub beta: f64,
    /// Bound on the dual solution norm.
    pub r_y: f64,
    /// Unquantified theory constant in the inner budget and batch rules.
    pub c: f64,
    pub max_batch: usize,
    pub n_bar: Option<usize>,
    pub lambda: Option<f64>,
    pub stream: Stream,
}

impl Default for RestartParams {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            beta: 0.05,
            r_y: 1.0,
            c: 1.0,
            max_batch: 1 << 20,
            n_bar: None,
            lambda: None,
            stream: Stream::new(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartConfig {
    pub l: usize,
    pub n_bar: usize,
    /// Trajectories per restart.
    pub p: usize,
    pub hat_r: usize,
    pub bar_r: usize,
    pub lambda: f64,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct RestartRun {
    pub y: Vector,
    pub config: RestartConfig,
    /// Exact `‖∇ψ‖` at `y⁰` and at every selected restart point.
    pub grad_norms: Vec<f64>,
    /// Inner batch `r_k` of each restart.
    pub batches: Vec<usize>,
    pub trace: RunTrace,
}

/// Smallest integer `N̄ > 1` with `C L² ln⁴N̄ / (μ² N̄⁴) ≤ 1/32`.
pub fn n_bar(l: f64, mu: f64, c: f64) -> Result<usize> {
    contract(mu > 0.0 && l > 0.0 && c > 0.0, || "N̄ needs L, mu, C > 0".into())?;
    let kappa2 = c * (l / mu).powi(2);
    let mut n = 2usize;
    loop {
        let nf = n as f64;
        if kappa2 * nf.ln().powi(4) / nf.powi(4) <= 1.0 / 32.0 {
            return Ok(n);
        }
        n += 1;
    }
}

fn to_count(x: f64) -> usize {
    if x.is_finite() {
        ceil_tol(x.max(1.0)) as usize
    } else {
        usize::MAX
    }
}

fn tail(log_arg: f64) -> f64 {
    1.0 + (3.0 * log_arg.ln().max(0.0)).sqrt()
}

/// Restart count, amplification and probe batches from the initial gradient norm.
pub fn restart_config(dual: &dyn DualObjective, grad_norm0: f64, params: &RestartParams) -> Result<RestartConfig> {
    contract(params.eps > 0.0, || "eps must be positive".into())?;
    contract(params.beta > 0.0 && params.beta < 1.0, || "beta must lie in (0,1)".into())?;
    contract(params.r_y > 0.0, || "R_y must be positive".into())?;
    let (eps, beta, r_y) = (params.eps, params.beta, params.r_y);
    let sigma = dual.sigma_psi();
    let nb = match params.n_bar {
        Some(n) => n.max(2),
        None => n_bar(dual.l_psi(), dual.mu_psi(), params.c)?,
    };
    let l_ratio = 2.0 * r_y * r_y * grad_norm0 * grad_norm0 / (eps * eps);
    let l = if l_ratio > 1.0 { to_count(ceil_tol(l_ratio.log2())) } else { 1 };
    let p = to_count(ceil_tol((l as f64 / beta).log2()));
    let ry2 = r_y * r_y / (eps * eps);
    let (hat_r, bar_r) = if sigma == 0.0 {
        (1, 1)
    } else {
        let s2 = sigma * sigma;
        (
            to_count(4.0 * s2 * tail(l as f64 / beta).powi(2) * ry2).min(params.max_batch),
            to_count(128.0 * s2 * tail((l * p) as f64 / beta).powi(2) * ry2).min(params.max_batch),
        )
    };
    let nbf = nb as f64;
    let lambda = params
        .lambda
        .unwrap_or_else(|| dual.l_psi() * nbf.ln().powi(2) / (nbf * nbf));
    Ok(RestartConfig {
        l,
        n_bar: nb,
        p,
        hat_r,
        bar_r,
        lambda,
        c: params.c,
    })
}

fn inner_batch(sigma: f64, c: f64, n_bar: usize, probe: f64, max_batch: usize) -> usize {
    if sigma == 0.0 {
        return 1;
    }
    if probe == 0.0 {
        return max_batch;
    }
    let nb = n_bar as f64;
    to_count(64.0 * c * sigma * sigma * nb.ln().powi(6) / (nb * probe * probe)).min(max_batch)
}

/// Restarted recursive-regularization method driving `‖∇ψ‖` below `ε/R_y`.
///
/// Each restart runs `p` independent trajectories from the current point and
/// keeps the one with the smallest probed gradient norm.
pub fn restarted_rrma(dual: &dyn DualObjective, y0: &Vector, params: &RestartParams) -> Result<RestartRun> {
    check_dim(dual.dim(), y0.len())?;
    let sigma = dual.sigma_psi();
    let stream = params.stream;
    let initial_batch = if sigma == 0.0 {
        1
    } else {
        let ry2 = (params.r_y / params.eps).powi(2);
        to_count(4.0 * sigma * sigma * tail(1.0 / params.beta).powi(2) * ry2).min(params.max_batch)
    };
    let x0 = dual.sample_primal(y0, initial_batch, stream.path(&[tag::PROBE, 0]))?;
    let mut probe = dual.probe_norm(&x0);
    let config = restart_config(dual, probe, params)?;
    let mut trace = RunTrace::new();
    let mut grad_norms = vec![dual.exact_grad_norm(y0)];
    let mut row = TraceRow::new(0, Event::Restart, 0.0, dual.counter().snapshot());
    row.grad_norm = Some(grad_norms[0]);
    trace.push(row);
    let mut y = y0.clone();
    let mut batches = Vec::with_capacity(config.l);
    for k in 1..=config.l {
        if k > 1 {
            let x = dual.sample_primal(&y, config.hat_r, stream.path(&[tag::PROBE, k as u64]))?;
            probe = dual.probe_norm(&x);
        }
        let r_k = inner_batch(sigma, config.c, config.n_bar, probe, params.max_batch);
        batches.push(r_k);
        let mut best: Option<(f64, Vector)> = None;
        for p in 1..=config.p {
            let key = [k as u64, p as u64];
            let run = rrma_ac_sa2(
                dual,
                &y,
                config.n_bar,
                config.lambda,
                r_k,
                stream.path(&[tag::TRAJECTORY, key[0], key[1]]),
            )?;
            let x = dual.sample_primal(&run.y, config.bar_r, stream.path(&[tag::SELECT, key[0], key[1]]))?;
            let norm = dual.probe_norm(&x);
            if best.as_ref().is_none_or(|(b, _)| norm < *b) {
                best = Some((norm, run.y));
            }
        }
        y = best.expect("p >= 1").1;
        let gn = dual.exact_grad_norm(&y);
        grad_norms.push(gn);
        let mut row = TraceRow::new(k, Event::Restart, 0.0, dual.counter().snapshot());
        row.grad_norm = Some(gn);
        let x = dual.exact_primal(&y);
        row.constraint_norm = Some(dual.constraint_norm(&x));
        row.dual_gap = Some(dual.duality_gap(&x, &y));
        trace.push(row);
    }
    Ok(RestartRun {
        y,
        config,
        grad_norms,
        batches,
        trace,
    })
}
