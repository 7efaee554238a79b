use crate::error::{check_dim, contract, Result};
use crate::linalg::Vector;
use crate::oracle::DualObjective;
use crate::rng::{tag, Stream};
use crate::schedules::acsa_params;

/// `ψ(y) + (λ/2)‖y − y⁰‖² + λ Σ_l 2^{l−1} ‖y − ŷ^l‖²`.
pub struct RegularizedDual<'a> {
    base: &'a dyn DualObjective,
    lambda: f64,
    anchor: Vector,
    centers: Vec<Vector>,
}

impl<'a> RegularizedDual<'a> {
    pub fn new(base: &'a dyn DualObjective, lambda: f64, anchor: Vector) -> Result<Self> {
        contract(lambda > 0.0, || "regularization must be positive".into())?;
        check_dim(base.dim(), anchor.len())?;
        Ok(Self {
            base,
            lambda,
            anchor,
            centers: Vec::new(),
        })
    }

    pub fn push_center(&mut self, center: Vector) {
        self.centers.push(center);
    }

    pub fn centers(&self) -> &[Vector] {
        &self.centers
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Total quadratic weight `λ(2^{k+1} − 1)` after `k` centers.
    pub fn strong_convexity(&self) -> f64 {
        self.lambda * (2f64.powi(self.centers.len() as i32 + 1) - 1.0)
    }

    pub fn smoothness(&self) -> f64 {
        self.base.l_psi() + self.strong_convexity()
    }

    fn shift(&self, y: &Vector) -> Vector {
        let mut g = (y - &self.anchor) * self.lambda;
        for (l, c) in self.centers.iter().enumerate() {
            g += (y - c) * (self.lambda * 2f64.powi(l as i32 + 1));
        }
        g
    }

    /// Batched stochastic gradient; counted.
    pub fn batch_gradient(&self, y: &Vector, r: usize, stream: Stream) -> Result<Vector> {
        let x = self.base.sample_primal(y, r, stream)?;
        Ok(self.base.direction(&x) + self.shift(y))
    }

    /// Exact gradient; uncounted.
    pub fn gradient(&self, y: &Vector) -> Vector {
        self.base.exact_direction(y) + self.shift(y)
    }

    pub fn value(&self, y: &Vector) -> f64 {
        let mut v = self.base.value(y) + 0.5 * self.lambda * (y - &self.anchor).norm_squared();
        for (l, c) in self.centers.iter().enumerate() {
            v += self.lambda * 2f64.powi(l as i32) * (y - c).norm_squared();
        }
        v
    }
}

/// Accelerated stochastic approximation for a strongly convex objective.
/// `m = 0` returns `z0`.
pub fn ac_sa(obj: &RegularizedDual<'_>, z0: &Vector, m: usize, r: usize, stream: Stream) -> Result<Vector> {
    let mu = obj.strong_convexity();
    let l = obj.smoothness();
    let mut ag = z0.clone();
    let mut z = z0.clone();
    for t in 1..=m {
        let (alpha, gamma) = acsa_params(t, l)?;
        let denom = gamma + (1.0 - alpha * alpha) * mu;
        let md = &ag * ((1.0 - alpha) * (mu + gamma) / denom) + &z * (alpha * ((1.0 - alpha) * mu + gamma) / denom);
        let g = obj.batch_gradient(&md, r, stream.path(&[tag::GRADIENT, t as u64]))?;
        z = (&md * (alpha * mu) + &z * ((1.0 - alpha) * mu + gamma) - g * alpha) / (mu + gamma);
        ag = &z * alpha + &ag * (1.0 - alpha);
    }
    Ok(ag)
}

/// Two chained AC-SA runs of `⌊m/2⌋` and `⌈m/2⌉` iterations.
pub fn ac_sa2(obj: &RegularizedDual<'_>, z0: &Vector, m: usize, r: usize, stream: Stream) -> Result<Vector> {
    contract(m >= 1, || "AC-SA² needs at least one iteration".into())?;
    let first = m / 2;
    let y1 = ac_sa(obj, z0, first, r, stream.child(1))?;
    ac_sa(obj, &y1, m - first, r, stream.child(2))
}

/// Number of regularization rounds `⌊log₂(L̃/λ)⌋`, at least 1.
pub fn rrma_rounds(l_psi: f64, lambda: f64) -> usize {
    let l_tilde = l_psi + lambda;
    ((l_tilde / lambda).log2().floor() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct RrmaRun {
    pub y: Vector,
    /// Round outputs `ŷ¹ … ŷ^T`.
    pub centers: Vec<Vector>,
}

/// Recursive regularization around AC-SA²: `T` rounds sharing the budget `m`,
/// each adding the previous round's output as a new center.
pub fn rrma_ac_sa2(
    dual: &dyn DualObjective,
    y0: &Vector,
    m: usize,
    lambda: f64,
    r: usize,
    stream: Stream,
) -> Result<RrmaRun> {
    let rounds = rrma_rounds(dual.l_psi(), lambda);
    let mut obj = RegularizedDual::new(dual, lambda, y0.clone())?;
    let mut y = y0.clone();
    let (base, extra) = (m / rounds, m % rounds);
    for k in 0..rounds {
        let budget = (base + usize::from(k < extra)).max(1);
        y = ac_sa2(&obj, &y, budget, r, stream.child(k as u64))?;
        obj.push_center(y.clone());
    }
    Ok(RrmaRun {
        y,
        centers: obj.centers,
    })
}
