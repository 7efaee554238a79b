//! Consensus problems over a network: Laplacians, the lifted problem with
//! `A = √W`, and the dual oracles that count communication rounds.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{
    primal_recovery, restarted_rrma, spdstm, sstm_sc, RestartParams, SpdstmOptions, SstmScBatch, SstmScOptions,
};
use crate::error::{check_dim, contract, Error, Result};
use crate::linalg::{spectrum_of_psd, sqrt_psd, Matrix, Vector};
use crate::oracle::{first_axis, ArgmaxSolver, CallCounter, DualObjective, FirstOrderOracle, NoiseSpec, ValueFn};
use crate::rng::{tag, Stream};
use crate::trace::RunTrace;

/// Undirected simple graph on nodes `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    m: usize,
    edges: Vec<(usize, usize)>,
    connected: bool,
}

impl Topology {
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        contract(m >= 1, || "a topology needs at least one node".into())?;
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            contract(i < m && j < m, || format!("edge ({i},{j}) out of range for m={m}"))?;
            contract(i != j, || format!("self-loop at node {i}"))?;
            let e = (i.min(j), i.max(j));
            contract(set.insert(e), || format!("duplicate edge ({},{})", e.0, e.1))?;
        }
        let edges: Vec<_> = set.into_iter().collect();
        let connected = components(m, &edges) == 1;
        Ok(Self { m, edges, connected })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    pub fn components(&self) -> usize {
        components(self.m, &self.edges)
    }

    pub fn ring(m: usize) -> Result<Self> {
        contract(m >= 3, || "a ring needs at least 3 nodes".into())?;
        Self::new(m, (0..m).map(|i| (i, (i + 1) % m)))
    }

    pub fn path(m: usize) -> Result<Self> {
        contract(m >= 2, || "a path needs at least 2 nodes".into())?;
        Self::new(m, (0..m - 1).map(|i| (i, i + 1)))
    }

    /// Star centred at node 0.
    pub fn star(m: usize) -> Result<Self> {
        contract(m >= 2, || "a star needs at least 2 nodes".into())?;
        Self::new(m, (1..m).map(|i| (0, i)))
    }

    pub fn complete(m: usize) -> Result<Self> {
        contract(m >= 2, || "a complete graph needs at least 2 nodes".into())?;
        Self::new(m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))))
    }

    /// G(m, p) resampled until connected.
    pub fn erdos_renyi(m: usize, p: f64, stream: Stream, max_attempts: usize) -> Result<Self> {
        contract(m >= 2, || "a random graph needs at least 2 nodes".into())?;
        contract((0.0..=1.0).contains(&p), || format!("edge probability {p} outside [0,1]"))?;
        let mut last = m;
        for attempt in 0..max_attempts {
            let mut rng = stream.path(&[tag::TOPOLOGY, attempt as u64]).rng();
            let mut edges = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            let t = Self::new(m, edges)?;
            if t.connected {
                return Ok(t);
            }
            last = t.components();
        }
        Err(Error::Disconnected { components: last })
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            m: self.m,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self> {
        let mut edges = Vec::with_capacity(file.edges.len());
        for &[i, j] in &file.edges {
            contract(i >= 1 && j >= 1, || "topology nodes are 1-indexed".into())?;
            edges.push((i - 1, j - 1));
        }
        Self::new(file.m, edges)
    }
}

/// On-disk form: `{"m": 3, "edges": [[1,2],[2,3]]}` with 1-indexed nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub m: usize,
    pub edges: Vec<[usize; 2]>,
}

fn components(m: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); m];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; m];
    let mut count = 0;
    for s in 0..m {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

pub fn laplacian(topology: &Topology) -> Result<Matrix> {
    if !topology.connected {
        return Err(Error::Disconnected {
            components: topology.components(),
        });
    }
    let m = topology.m;
    let mut w = Matrix::zeros(m, m);
    for &(i, j) in &topology.edges {
        w[(i, j)] = -1.0;
        w[(j, i)] = -1.0;
        w[(i, i)] += 1.0;
        w[(j, j)] += 1.0;
    }
    Ok(w)
}

/// `W̄ ⊗ Iₙ`.
pub fn lift_laplacian(w_bar: &Matrix, n: usize) -> Matrix {
    w_bar.kronecker(&Matrix::identity(n, n))
}

/// `‖Wx‖ ≤ tol·max(1, ‖x‖)`.
pub fn consensus_check(x: &Vector, w: &Matrix, tol: f64) -> bool {
    (w * x).norm() <= tol * x.norm().max(1.0)
}

/// All `n`-blocks of `x` equal to the first one within `tol·max(1,‖x‖)`.
pub fn blocks_agree(x: &Vector, n: usize, tol: f64) -> bool {
    if n == 0 || x.len() % n != 0 {
        return false;
    }
    let first = x.rows(0, n).clone_owned();
    let scale = tol * x.norm().max(1.0);
    (1..x.len() / n).all(|k| (x.rows(k * n, n) - &first).norm() <= scale)
}

#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub w_bar: Matrix,
    pub w: Matrix,
    pub sqrt_w: Matrix,
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub chi: f64,
}

impl LaplacianPair {
    pub fn new(topology: &Topology, n: usize) -> Result<Self> {
        contract(n >= 1, || "block size must be positive".into())?;
        let w_bar = laplacian(topology)?;
        let spec = spectrum_of_psd(&w_bar);
        let sqrt_bar = sqrt_psd(&w_bar)?;
        Ok(Self {
            w: lift_laplacian(&w_bar, n),
            sqrt_w: lift_laplacian(&sqrt_bar, n),
            w_bar,
            lambda_max: spec.lambda_max,
            lambda_min_plus: spec.lambda_min_plus,
            chi: spec.chi(),
        })
    }
}

/// One node's objective with its conjugate response `x_k(u) = argmax {⟨u,x⟩ − f_k(x)}`.
#[derive(Clone)]
pub struct LocalObjective {
    pub oracle: FirstOrderOracle,
    pub argmax: ArgmaxSolver,
    /// Closed-form conjugate `f_k*(u)`, used by monitors when available.
    pub conjugate: Option<ValueFn>,
}

impl std::fmt::Debug for LocalObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalObjective")
            .field("oracle", &self.oracle)
            .field("argmax", &self.argmax)
            .field("conjugate", &self.conjugate.is_some())
            .finish()
    }
}

impl LocalObjective {
    pub fn new(oracle: FirstOrderOracle, argmax: ArgmaxSolver) -> Self {
        Self {
            oracle,
            argmax,
            conjugate: None,
        }
    }

    pub fn with_conjugate(mut self, f: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        self.conjugate = Some(Arc::new(f));
        self
    }

    fn conjugate_value(&self, u: &Vector) -> f64 {
        match &self.conjugate {
            Some(f) => f(u),
            None => {
                let x = self.argmax.solve(&self.oracle, u);
                u.dot(&x) - self.oracle.value(&x)
            }
        }
    }
}

/// `min (1/m) Σ f_k(x_k)` subject to `√W x = 0`.
#[derive(Clone, Debug)]
pub struct DecentralizedInstance {
    pub locals: Vec<LocalObjective>,
    pub topology: Topology,
    pub n: usize,
    pub pair: Arc<LaplacianPair>,
    pub stacked: FirstOrderOracle,
    pub counter: Arc<CallCounter>,
}

impl DecentralizedInstance {
    pub fn m(&self) -> usize {
        self.locals.len()
    }

    pub fn block<'a>(&self, x: &'a Vector, k: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(k * self.n, self.n)
    }

    pub fn split(&self, x: &Vector) -> Vec<Vector> {
        (0..self.m()).map(|k| self.block(x, k).clone_owned()).collect()
    }

    pub fn stack(&self, blocks: &[Vector]) -> Vector {
        Vector::from_iterator(self.m() * self.n, blocks.iter().flat_map(|b| b.iter().copied()))
    }
}

pub fn lift_problem(locals: Vec<LocalObjective>, topology: Topology, n: usize) -> Result<DecentralizedInstance> {
    let m = locals.len();
    contract(m == topology.m(), || {
        format!("{m} local objectives for a topology with {} nodes", topology.m())
    })?;
    contract(m >= 2, || "a single node has no consensus constraint; solve it directly".into())?;
    for loc in &locals {
        check_dim(n, loc.oracle.dim())?;
    }
    let pair = Arc::new(LaplacianPair::new(&topology, n)?);
    let l = locals.iter().map(|o| o.oracle.l()).fold(0.0, f64::max) / m as f64;
    let mu = locals.iter().map(|o| o.oracle.mu()).fold(f64::INFINITY, f64::min) / m as f64;
    let (lv, lg) = (locals.clone(), locals.clone());
    let mf = m as f64;
    let counter = CallCounter::new();
    let stacked = FirstOrderOracle::new(
        m * n,
        l,
        mu,
        move |x| lv.iter().enumerate().map(|(k, o)| o.oracle.value(&x.rows(k * n, n).clone_owned())).sum::<f64>() / mf,
        move |x| {
            Vector::from_iterator(
                m * n,
                lg.iter()
                    .enumerate()
                    .flat_map(|(k, o)| o.oracle.gradient(&x.rows(k * n, n).clone_owned()).iter().copied().collect::<Vec<_>>()),
            ) / mf
        },
    )
    .with_counter(counter.clone());
    Ok(DecentralizedInstance {
        locals,
        topology,
        n,
        pair,
        stacked,
        counter,
    })
}

/// Coordinates the distributed dual works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSpace {
    /// `y`: every gradient costs two `√W` multiplications.
    Original,
    /// `ŷ = √W y`: every gradient costs one `W` multiplication.
    #[default]
    Scaled,
}

/// `Ψ(y) = Φ(√W y)` with `Φ(ŷ) = (1/m) Σ φ_k(m ŷ_k)`, node responses computed locally.
#[derive(Clone, Debug)]
pub struct DistributedDual {
    inst: DecentralizedInstance,
    noise: NoiseSpec,
    space: DualSpace,
    l_psi: f64,
    mu_psi: f64,
    sigma_psi: f64,
}

pub fn build_distributed_dual(inst: &DecentralizedInstance, noise: NoiseSpec, space: DualSpace) -> Result<DistributedDual> {
    noise.validate()?;
    let mu = inst.stacked.mu();
    if mu <= 0.0 {
        return Err(Error::NotStronglyConvex { mu });
    }
    let l = inst.stacked.l();
    let lam = inst.pair.lambda_max;
    let sigma_phi = noise.scale() * (inst.m() as f64).sqrt();
    Ok(DistributedDual {
        inst: inst.clone(),
        noise,
        space,
        l_psi: lam / mu,
        mu_psi: if l.is_finite() && l > 0.0 {
            inst.pair.lambda_min_plus / l
        } else {
            0.0
        },
        sigma_psi: lam.sqrt() * sigma_phi,
    })
}

impl DistributedDual {
    pub fn instance(&self) -> &DecentralizedInstance {
        &self.inst
    }

    pub fn space(&self) -> DualSpace {
        self.space
    }

    /// Stacked `x(ŷ)` with `x_k = x_k(m ŷ_k)`.
    pub fn responses(&self, y_hat: &Vector) -> Vector {
        let (m, n) = (self.inst.m(), self.inst.n);
        let mf = m as f64;
        let blocks: Vec<Vector> = self
            .inst
            .locals
            .iter()
            .enumerate()
            .map(|(k, o)| o.argmax.solve(&o.oracle, &(y_hat.rows(k * n, n) * mf)))
            .collect();
        self.inst.stack(&blocks)
    }

    /// `Φ(ŷ)`.
    pub fn phi(&self, y_hat: &Vector) -> f64 {
        let (m, n) = (self.inst.m(), self.inst.n);
        let mf = m as f64;
        self.inst
            .locals
            .iter()
            .enumerate()
            .map(|(k, o)| o.conjugate_value(&(y_hat.rows(k * n, n) * mf)))
            .sum::<f64>()
            / mf
    }

    fn to_scaled(&self, y: &Vector) -> Vector {
        match self.space {
            DualSpace::Original => &self.inst.pair.sqrt_w * y,
            DualSpace::Scaled => y.clone(),
        }
    }

    fn round(&self) {
        self.inst.counter.add_rounds(1);
    }
}

impl DualObjective for DistributedDual {
    fn dim(&self) -> usize {
        self.inst.m() * self.inst.n
    }

    fn primal_dim(&self) -> usize {
        self.dim()
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
        &self.inst.counter
    }

    fn sample_primal(&self, y: &Vector, r: usize, stream: Stream) -> Result<Vector> {
        check_dim(self.dim(), y.len())?;
        contract(r >= 1, || "batch size must be at least 1".into())?;
        if self.space == DualSpace::Original {
            self.round();
        }
        self.counter().add_samples(r as u64);
        let mut x = self.responses(&self.to_scaled(y));
        if self.noise.is_exact() {
            return Ok(x);
        }
        if self.noise.delta > 0.0 {
            x += first_axis(x.len())(&x) * self.noise.delta;
        }
        let n = self.inst.n;
        for k in 0..self.inst.m() {
            let eta = self.noise.draw_mean(n, r, stream.child(k as u64));
            let mut block = x.rows_mut(k * n, n);
            block += eta;
        }
        Ok(x)
    }

    fn direction(&self, x: &Vector) -> Vector {
        self.round();
        self.direction_uncounted(x)
    }

    fn direction_uncounted(&self, x: &Vector) -> Vector {
        match self.space {
            DualSpace::Original => &self.inst.pair.sqrt_w * x,
            DualSpace::Scaled => &self.inst.pair.w * x,
        }
    }

    fn probe_norm(&self, x: &Vector) -> f64 {
        self.round();
        self.grad_norm_of(x)
    }

    fn value(&self, y: &Vector) -> f64 {
        self.phi(&self.to_scaled(y))
    }

    fn exact_primal(&self, y: &Vector) -> Vector {
        self.responses(&self.to_scaled(y))
    }

    fn grad_norm_of(&self, x: &Vector) -> f64 {
        x.dot(&(&self.inst.pair.w * x)).max(0.0).sqrt()
    }

    fn constraint_norm(&self, x: &Vector) -> f64 {
        (&self.inst.pair.sqrt_w * x).norm()
    }

    fn primal_value(&self, x: &Vector) -> f64 {
        self.inst.stacked.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributedMethod {
    Spdstm,
    SstmSc,
    RestartedRrma,
}

#[derive(Debug, Clone)]
pub struct DistributedConfig {
    pub method: DistributedMethod,
    pub space: DualSpace,
    pub n_iter: usize,
    pub eps: f64,
    pub beta: f64,
    pub c: f64,
    pub c_hat: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub r_y: f64,
    /// Batch for the final primal recovery.
    pub recovery_batch: usize,
    pub target_grad_norm: Option<f64>,
    pub monitor: bool,
}

impl Default for DistributedConfig {
    fn default() -> Self {
        Self {
            method: DistributedMethod::SstmSc,
            space: DualSpace::Scaled,
            n_iter: 200,
            eps: 1e-3,
            beta: 0.05,
            c: 1.0,
            c_hat: 1.0,
            noise: NoiseSpec::none(),
            seed: 0,
            r_y: 1.0,
            recovery_batch: 1,
            target_grad_norm: None,
            monitor: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CommStats {
    pub rounds: u64,
    /// Vector length each node sends per round.
    pub per_round_payload: usize,
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub x_per_node: Vec<Vector>,
    pub y: Vector,
    pub iterations: usize,
    pub trace: RunTrace,
    pub comm: CommStats,
}

pub fn run_distributed(inst: &DecentralizedInstance, cfg: &DistributedConfig) -> Result<DistributedRun> {
    let dual = build_distributed_dual(inst, cfg.noise, cfg.space)?;
    inst.counter.reset();
    let stream = Stream::new(cfg.seed);
    let y0 = Vector::zeros(dual.dim());
    let (x, y, iterations, trace) = match cfg.method {
        DistributedMethod::Spdstm => {
            let run = spdstm(
                &dual,
                &SpdstmOptions {
                    n: cfg.n_iter,
                    eps: cfg.eps,
                    beta: cfg.beta,
                    c_hat: cfg.c_hat,
                    fixed_batch: None,
                    stream,
                    monitor: cfg.monitor,
                    scale: cfg.r_y,
                },
            )?;
            (run.x_tilde, run.y, cfg.n_iter, run.trace)
        }
        DistributedMethod::SstmSc => {
            let batch = if dual.sigma_psi() == 0.0 {
                SstmScBatch::Fixed(1)
            } else {
                SstmScBatch::Theory {
                    eps: cfg.eps,
                    beta: cfg.beta,
                    c: cfg.c,
                }
            };
            let run = sstm_sc(
                &dual,
                &y0,
                &SstmScOptions {
                    n: cfg.n_iter,
                    batch,
                    stream,
                    resum: false,
                    monitor: cfg.monitor,
                    psi_star: None,
                    target_grad_norm: cfg.target_grad_norm,
                    scale: cfg.r_y,
                },
            )?;
            let x = primal_recovery(&dual, &run.y, cfg.recovery_batch, stream.child(tag::RECOVERY))?;
            (x, run.y, run.iterations, run.trace)
        }
        DistributedMethod::RestartedRrma => {
            let run = restarted_rrma(
                &dual,
                &y0,
                &RestartParams {
                    eps: cfg.eps,
                    beta: cfg.beta,
                    r_y: cfg.r_y,
                    c: cfg.c,
                    stream,
                    ..Default::default()
                },
            )?;
            let x = primal_recovery(&dual, &run.y, cfg.recovery_batch, stream.child(tag::RECOVERY))?;
            let l = run.config.l;
            (x, run.y, l, run.trace)
        }
    };
    Ok(DistributedRun {
        x_per_node: inst.split(&x),
        y,
        iterations,
        trace,
        comm: CommStats {
            rounds: inst.counter.snapshot().comm_rounds,
            per_round_payload: inst.n,
        },
    })
}
