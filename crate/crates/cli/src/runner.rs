//! Builds the configured problem, runs the configured method and writes the
//! trace CSV and the JSON summary.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use optdec_core::decentralized::{
    build_distributed_dual, lift_problem, DecentralizedInstance, DualSpace, LocalObjective, Topology, TopologyFile,
};
use optdec_core::dual::{
    ac_sa2, primal_recovery, restarted_rrma, rrma_ac_sa2, spdstm, sstm_sc, RegularizedDual, RestartParams,
    SpdstmOptions, SstmScBatch, SstmScOptions,
};
use optdec_core::oracle::{Counts, DualObjective, FirstOrderOracle, StochasticGradientOracle};
use optdec_core::primal::{build_penalty, sstm, stm, stm_ips, IpsOptions, SstmBatch, StmOptions};
use optdec_core::problems::{barycenter_problem, QuadraticProblem, WorstCaseChain};
use optdec_core::rng::{tag, Stream};
use optdec_core::schedules::{next_alpha, next_alpha_spdstm, next_alpha_strongly_convex};
use optdec_core::trace::{Event, RunTrace, TraceRow};
use optdec_core::{Error, Matrix, Vector};

use crate::config::{GeneratedTopology, Horizon, Method, ProblemSpec, RunConfig, TopologyKind, TopologySpec};
use crate::CliError;

/// Upper limit on automatically chosen horizons.
const MAX_AUTO_N: usize = 1_000_000;
const MAX_BATCH: usize = 1 << 20;
const ER_ATTEMPTS: usize = 10_000;

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalRow {
    pub iter: usize,
    pub a_k: f64,
    pub f_gap: Option<f64>,
    pub dual_gap: Option<f64>,
    pub grad_norm: Option<f64>,
    pub constraint_norm: Option<f64>,
}

/// Metrics of the primal point recovered after a dual run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    /// `f(x) − f*` against the constrained optimum, when known.
    pub f_gap: Option<f64>,
    pub dual_gap: Option<f64>,
    pub constraint_norm: f64,
    /// Largest distance of a node's block from the network average.
    pub consensus_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub method: Method,
    pub horizon: usize,
    pub rows: usize,
    #[serde(rename = "final")]
    pub last: FinalRow,
    pub counters: Counts,
    /// `3R₀²/(2A_N)` for the primal methods.
    pub certificate: Option<f64>,
    pub r0: Option<f64>,
    pub r_y: Option<f64>,
    pub chi: Option<f64>,
    pub recovery: Option<Recovery>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub trace: RunTrace,
    pub summary: Summary,
}

/// What a run produced on disk.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub execution: Execution,
}

fn runtime(e: Error) -> CliError {
    match e {
        Error::Contract(_) | Error::DimensionMismatch { .. } | Error::NotStronglyConvex { .. } | Error::NotPsd(_) => {
            CliError::Config(e.to_string())
        }
        Error::Diverged { ref trace, .. } => CliError::Runtime {
            message: e.to_string(),
            trace: Some(trace.clone()),
        },
        _ => CliError::Runtime {
            message: e.to_string(),
            trace: None,
        },
    }
}

fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{}: expected a non-empty rectangular table", path.display())));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn read_vector(path: &Path) -> Result<Vector, CliError> {
    let m = read_matrix(path)?;
    Ok(Vector::from_iterator(m.len(), m.transpose().iter().copied()))
}

pub fn gen_topology(kind: TopologyKind, m: usize, p: Option<f64>, seed: u64) -> optdec_core::Result<Topology> {
    match kind {
        TopologyKind::Ring => Topology::ring(m),
        TopologyKind::Path => Topology::path(m),
        TopologyKind::Star => Topology::star(m),
        TopologyKind::Complete => Topology::complete(m),
        TopologyKind::ErdosRenyi => Topology::erdos_renyi(m, p.unwrap_or(0.5), Stream::new(seed), ER_ATTEMPTS),
    }
}

fn build_topology(cfg: &RunConfig) -> Result<Topology, CliError> {
    match cfg.topology.as_ref().expect("validated") {
        TopologySpec::File(r) => {
            let path = cfg.resolve(&r.file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let file: TopologyFile =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Topology::from_file(&file).map_err(runtime)
        }
        TopologySpec::Generated(GeneratedTopology { kind, m, p }) => gen_topology(*kind, *m, *p, cfg.seed).map_err(runtime),
    }
}

fn instance_stream(cfg: &RunConfig) -> Stream {
    Stream::new(cfg.seed).child(tag::INSTANCE)
}

/// Entries uniform in `[-1, 1)`.
fn random_constraints(rows: usize, cols: usize, stream: Stream) -> Matrix {
    let mut rng = stream.rng();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Quadratic part and optional constraint matrix of a centralized problem.
fn centralized(cfg: &RunConfig) -> Result<(QuadraticProblem, Option<Matrix>), CliError> {
    let s = instance_stream(cfg);
    match &cfg.problem {
        ProblemSpec::Quadratic { dim, cond } => Ok((QuadraticProblem::random(*dim, *cond, s), None)),
        ProblemSpec::Penalty { dim, cond, constraints } => {
            let p = QuadraticProblem::random(*dim, *cond, s.child(0));
            let a = random_constraints(*constraints, *dim, s.child(1));
            Ok((p, Some(a)))
        }
        ProblemSpec::Files { q_file, b_file, a_file } => {
            let q = read_matrix(&cfg.resolve(q_file))?;
            let b = read_vector(&cfg.resolve(b_file))?;
            let p = QuadraticProblem::new(q, b).map_err(runtime)?;
            let a = a_file.as_ref().map(|f| read_matrix(&cfg.resolve(f))).transpose()?;
            Ok((p, a))
        }
        _ => unreachable!("decentralized problems are built elsewhere"),
    }
}

fn decentralized(cfg: &RunConfig) -> Result<DecentralizedInstance, CliError> {
    let topology = build_topology(cfg)?;
    let m = topology.m();
    let s = instance_stream(cfg);
    match &cfg.problem {
        ProblemSpec::ConsensusQuadratic { dim, cond } => {
            let locals = (0..m)
                .map(|k| {
                    let p = QuadraticProblem::random(*dim, *cond, s.child(k as u64));
                    let q = p.clone();
                    LocalObjective::new(p.oracle(), p.argmax()).with_conjugate(move |u| q.conjugate(u))
                })
                .collect();
            lift_problem(locals, topology, *dim).map_err(runtime)
        }
        ProblemSpec::Barycenter {
            mu,
            n,
            measures_file,
            cost_file,
        } => {
            let (measures, c) = match (measures_file, cost_file) {
                (Some(mf), Some(cf)) => {
                    let table = read_matrix(&cfg.resolve(mf))?;
                    let c = read_matrix(&cfg.resolve(cf))?;
                    let ms = (0..table.nrows()).map(|i| table.row(i).transpose()).collect::<Vec<_>>();
                    (ms, c)
                }
                _ => {
                    let n = n.expect("validated");
                    let ms = (0..m)
                        .map(|k| {
                            let mut rng = s.child(k as u64).rng();
                            let w = Vector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
                            let total = w.sum();
                            w / total
                        })
                        .collect::<Vec<_>>();
                    let scale = (n - 1) as f64;
                    let c = Matrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs() / scale);
                    (ms, c)
                }
            };
            barycenter_problem(&measures, &c, *mu, topology).map_err(runtime)
        }
        _ => unreachable!("centralized problems are built elsewhere"),
    }
}

/// Smallest `N` whose step sum satisfies `scale/A_N ≤ eps`.
fn horizon_from_steps(scale: f64, eps: f64, mut step: impl FnMut(f64) -> optdec_core::Result<(f64, f64)>, a0: f64) -> usize {
    let mut a = a0;
    for n in 1..=MAX_AUTO_N {
        match step(a) {
            Ok((_, next)) if next.is_finite() => a = next,
            _ => return n,
        }
        if scale / a <= eps {
            return n;
        }
    }
    MAX_AUTO_N
}

fn dual_horizon(cfg: &RunConfig, dual: &dyn DualObjective, r_y: f64) -> usize {
    if let Horizon::Fixed(n) = cfg.n {
        return n;
    }
    let r2 = r_y * r_y;
    match cfg.method {
        Method::SstmSc => horizon_from_steps(
            r2,
            cfg.eps,
            |a| next_alpha_strongly_convex(a, dual.l_psi(), dual.mu_psi()),
            1.0 / dual.l_psi(),
        ),
        _ => horizon_from_steps(r2, cfg.eps, |a| next_alpha_spdstm(a, 2.0 * dual.l_psi()), 0.0),
    }
}

fn last_row(trace: &RunTrace) -> FinalRow {
    let r = trace.last().expect("traces start with a row");
    FinalRow {
        iter: r.iter,
        a_k: r.a_k,
        f_gap: r.f_gap,
        dual_gap: r.dual_gap,
        grad_norm: r.grad_norm,
        constraint_norm: r.constraint_norm,
    }
}

fn monitored_row(dual: &dyn DualObjective, k: usize, y: &Vector) -> TraceRow {
    let mut row = TraceRow::new(k, Event::Iter, 0.0, dual.counter().snapshot());
    let x = dual.exact_primal(y);
    row.grad_norm = Some(dual.grad_norm_of(&x));
    row.constraint_norm = Some(dual.constraint_norm(&x));
    row.dual_gap = Some(dual.duality_gap(&x, y));
    row
}

struct DualOutcome {
    trace: RunTrace,
    y: Vector,
    x: Vector,
    horizon: usize,
}

fn acsa_batch(dual: &dyn DualObjective, eps: f64, r_y: f64) -> usize {
    let s = dual.sigma_psi();
    if s == 0.0 {
        1
    } else {
        ((s * r_y / eps).powi(2).ceil() as usize).clamp(1, MAX_BATCH)
    }
}

fn run_dual(cfg: &RunConfig, dual: &dyn DualObjective, r_y: f64) -> Result<DualOutcome, CliError> {
    let stream = Stream::new(cfg.seed);
    let y0 = Vector::zeros(dual.dim());
    let n = dual_horizon(cfg, dual, r_y);
    let target = cfg.constants.early_stop.then_some(cfg.eps / r_y);
    let recover = |y: &Vector, r: usize| primal_recovery(dual, y, r, stream.child(tag::RECOVERY)).map_err(runtime);
    match cfg.method {
        Method::Spdstm => {
            let run = spdstm(
                dual,
                &SpdstmOptions {
                    n,
                    eps: cfg.eps,
                    beta: cfg.beta,
                    c_hat: cfg.constants.c_hat,
                    fixed_batch: None,
                    stream,
                    monitor: true,
                    scale: r_y,
                },
            )
            .map_err(runtime)?;
            Ok(DualOutcome {
                trace: run.trace,
                y: run.y,
                x: run.x_tilde,
                horizon: n,
            })
        }
        Method::SstmSc => {
            let batch = if dual.sigma_psi() == 0.0 {
                SstmScBatch::Fixed(1)
            } else {
                SstmScBatch::Theory {
                    eps: cfg.eps,
                    beta: cfg.beta,
                    c: cfg.constants.c,
                }
            };
            let run = sstm_sc(
                dual,
                &y0,
                &SstmScOptions {
                    n,
                    batch,
                    stream,
                    resum: false,
                    monitor: true,
                    psi_star: None,
                    target_grad_norm: target,
                    scale: r_y,
                },
            )
            .map_err(runtime)?;
            let x = recover(&run.y, run.batch)?;
            let mut trace = run.trace;
            if run.iterations < n && target.is_none() {
                trace.flag(format!("stopped after {} of {} iterations", run.iterations, n));
            }
            Ok(DualOutcome {
                trace,
                y: run.y,
                x,
                horizon: n,
            })
        }
        Method::AcSa | Method::Rrma => {
            let nf = n.max(2) as f64;
            let lambda = dual.l_psi() * nf.ln().powi(2) / (nf * nf);
            let r = acsa_batch(dual, cfg.eps, r_y);
            let mut trace = RunTrace::new();
            trace.push(monitored_row(dual, 0, &y0));
            let y = if cfg.method == Method::AcSa {
                let obj = RegularizedDual::new(dual, lambda, y0.clone()).map_err(runtime)?;
                let y = ac_sa2(&obj, &y0, n.max(1), r, stream).map_err(runtime)?;
                trace.push(monitored_row(dual, n, &y));
                y
            } else {
                let run = rrma_ac_sa2(dual, &y0, n.max(1), lambda, r, stream).map_err(runtime)?;
                // one row per regularization round; counters are only known at the end
                let rounds = run.centers.len();
                for (k, c) in run.centers.iter().enumerate() {
                    let mut row = monitored_row(dual, k + 1, c);
                    row.iter = (k + 1) * n / rounds;
                    trace.push(row);
                }
                run.y
            };
            let x = recover(&y, r)?;
            Ok(DualOutcome { trace, y, x, horizon: n })
        }
        Method::RestartedRrma => {
            let run = restarted_rrma(
                dual,
                &y0,
                &RestartParams {
                    eps: cfg.eps,
                    beta: cfg.beta,
                    r_y,
                    c: cfg.constants.c,
                    max_batch: MAX_BATCH,
                    n_bar: None,
                    lambda: None,
                    stream,
                },
            )
            .map_err(runtime)?;
            let r = run.config.bar_r;
            let x = recover(&run.y, r)?;
            Ok(DualOutcome {
                trace: run.trace,
                y: run.y,
                x,
                horizon: run.config.l,
            })
        }
        Method::Stm | Method::StmIps | Method::Sstm => unreachable!("primal methods are dispatched elsewhere"),
    }
}

fn certificate(r0: f64, a_n: f64) -> f64 {
    if a_n > 0.0 {
        3.0 * r0 * r0 / (2.0 * a_n)
    } else {
        f64::INFINITY
    }
}

fn primal_horizon(cfg: &RunConfig, l: f64, r0: f64) -> usize {
    match cfg.n {
        Horizon::Fixed(n) => n,
        Horizon::Auto(_) => {
            let factor = cfg.constants.step_factor;
            horizon_from_steps(1.5 * r0 * r0, cfg.eps, |a| next_alpha(a, l, 0.0, factor), 0.0)
        }
    }
}

struct Partial {
    trace: RunTrace,
    horizon: usize,
    certificate: Option<f64>,
    r0: Option<f64>,
    r_y: Option<f64>,
    chi: Option<f64>,
    recovery: Option<Recovery>,
    counts: Counts,
}

/// Oracle, minimizer and optimal value of an unconstrained problem.
fn unconstrained(cfg: &RunConfig) -> Result<(FirstOrderOracle, Vector, f64), CliError> {
    if let ProblemSpec::Chain { dim, l } = cfg.problem {
        let chain = WorstCaseChain { n: dim, l };
        return Ok((chain.oracle(), chain.minimizer(), chain.min_value()));
    }
    let (p, _) = centralized(cfg)?;
    Ok((p.oracle(), p.minimizer(), p.min_value()))
}

fn execute_primal(cfg: &RunConfig) -> Result<Partial, CliError> {
    let stream = Stream::new(cfg.seed);
    let opts = |f_star: f64| StmOptions {
        step_factor: cfg.constants.step_factor,
        f_star: Some(f_star),
        ..Default::default()
    };
    match cfg.method {
        Method::Stm | Method::Sstm => {
            let (oracle, x_star, f_star) = unconstrained(cfg)?;
            let x0 = Vector::zeros(oracle.dim());
            let r0 = x_star.norm();
            let n = primal_horizon(cfg, oracle.l(), r0);
            let run = if cfg.method == Method::Stm {
                stm(&oracle, &x0, n, &opts(f_star))
            } else {
                let sg = StochasticGradientOracle::new(oracle.clone(), cfg.noise).map_err(runtime)?;
                sstm(
                    &sg,
                    &x0,
                    n,
                    &opts(f_star),
                    SstmBatch {
                        eps: cfg.eps,
                        beta: cfg.beta,
                    },
                    stream,
                )
            }
            .map_err(runtime)?;
            Ok(Partial {
                certificate: Some(certificate(r0, run.a_n)),
                trace: run.trace,
                horizon: n,
                r0: Some(r0),
                r_y: None,
                chi: None,
                recovery: None,
                counts: oracle.counter().snapshot(),
            })
        }
        Method::StmIps => {
            let (p, a) = centralized(cfg)?;
            let x0 = Vector::zeros(p.dim());
            let a = a.expect("validated");
            let r_y = match cfg.constants.r_y {
                Some(r) => r,
                None => positive_or_one(p.dual_solution(&a).map_err(runtime)?.norm()),
            };
            let oracle = p.oracle();
            let penalty = build_penalty(oracle.clone(), a.clone(), r_y, cfg.eps).map_err(runtime)?;
            // F is quadratic too: (Q + 2c·AᵀA)x = b
            let big_q = p.q() + a.transpose() * &a * (2.0 * penalty.coef);
            let xf = big_q
                .clone()
                .cholesky()
                .ok_or_else(|| CliError::Config("penalized Hessian is not positive definite".into()))?
                .solve(p.b());
            let f_star_pen = penalty.value(&xf);
            let r0 = xf.norm();
            let n = primal_horizon(cfg, p.l(), r0);
            let run = stm_ips(
                &penalty.composite,
                &x0,
                n,
                &IpsOptions {
                    f_star: Some(f_star_pen),
                    constraint: Some(a.clone()),
                    ..Default::default()
                },
                |_| {},
            )
            .map_err(runtime)?;
            let (_, f_star) = p.constrained_minimizer(&a).map_err(runtime)?;
            let recovery = Recovery {
                f_gap: Some(p.value(&run.x) - f_star),
                dual_gap: None,
                constraint_norm: (&a * &run.x).norm(),
                consensus_residual: None,
            };
            Ok(Partial {
                certificate: Some(certificate(r0, run.a_n)),
                trace: run.trace,
                horizon: n,
                r0: Some(r0),
                r_y: Some(r_y),
                chi: None,
                recovery: Some(recovery),
                counts: oracle.counter().snapshot(),
            })
        }
        _ => unreachable!(),
    }
}

fn positive_or_one(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        1.0
    }
}

fn execute_dual(cfg: &RunConfig) -> Result<Partial, CliError> {
    if cfg.problem.is_decentralized() {
        let inst = decentralized(cfg)?;
        let dual = build_distributed_dual(&inst, cfg.noise, DualSpace::Scaled).map_err(runtime)?;
        inst.counter.reset();
        let r_y = cfg.constants.r_y.unwrap_or(1.0);
        let out = run_dual(cfg, &dual, r_y)?;
        let blocks = inst.split(&out.x);
        let mean = blocks.iter().fold(Vector::zeros(inst.n), |acc, b| acc + b) / blocks.len() as f64;
        let residual = blocks.iter().map(|b| (b - &mean).norm()).fold(0.0, f64::max);
        Ok(Partial {
            recovery: Some(Recovery {
                f_gap: None,
                dual_gap: Some(dual.duality_gap(&out.x, &out.y)),
                constraint_norm: dual.constraint_norm(&out.x),
                consensus_residual: Some(residual),
            }),
            trace: out.trace,
            horizon: out.horizon,
            certificate: None,
            r0: None,
            r_y: Some(r_y),
            chi: Some(inst.pair.chi),
            counts: inst.counter.snapshot(),
        })
    } else {
        let (p, a) = centralized(cfg)?;
        let a = a.expect("validated");
        let dual = p.dual(a.clone(), cfg.noise).map_err(runtime)?;
        let r_y = match cfg.constants.r_y {
            Some(r) => r,
            None => positive_or_one(p.dual_solution(&a).map_err(runtime)?.norm()),
        };
        let out = run_dual(cfg, &dual, r_y)?;
        Ok(Partial {
            recovery: Some(Recovery {
                f_gap: None,
                dual_gap: Some(dual.duality_gap(&out.x, &out.y)),
                constraint_norm: dual.constraint_norm(&out.x),
                consensus_residual: None,
            }),
            trace: out.trace,
            horizon: out.horizon,
            certificate: None,
            r0: None,
            r_y: Some(r_y),
            chi: None,
            counts: dual.counter().snapshot(),
        })
    }
}

/// Runs the configured pipeline in memory.
pub fn execute(cfg: &RunConfig) -> Result<Execution, CliError> {
    let part = if cfg.method.is_dual() {
        execute_dual(cfg)?
    } else {
        execute_primal(cfg)?
    };
    let summary = Summary {
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        version: version(),
        method: cfg.method,
        horizon: part.horizon,
        rows: part.trace.len(),
        last: last_row(&part.trace),
        counters: part.counts,
        certificate: part.certificate,
        r0: part.r0,
        r_y: part.r_y,
        chi: part.chi,
        recovery: part.recovery,
        flags: part.trace.flags.clone(),
    };
    Ok(Execution {
        trace: part.trace,
        summary,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 11] = [
    "iter",
    "event",
    "a_k",
    "f_gap",
    "dual_gap",
    "grad_norm",
    "constraint_norm",
    "grad_calls",
    "stoch_samples",
    "matvec_ata",
    "comm_rounds",
];

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(TRACE_HEADER).map_err(|e| CliError::io(path, e))?;
    for r in &trace.rows {
        let c = r.counts;
        w.write_record([
            r.iter.to_string(),
            r.event.as_str().to_string(),
            format!("{:.16e}", r.a_k),
            fmt_opt(r.f_gap),
            fmt_opt(r.dual_gap),
            fmt_opt(r.grad_norm),
            fmt_opt(r.constraint_norm),
            c.grad_calls.to_string(),
            c.stoch_samples.to_string(),
            c.matvec_ata.to_string(),
            c.comm_rounds.to_string(),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Output file stem: the first 16 hex digits of the config hash.
pub fn file_stem(cfg: &RunConfig) -> String {
    config_hash(cfg)[..16].to_string()
}

/// Runs and writes `<hash>.trace.csv` and `<hash>.summary.json` into `out_dir`.
/// On divergence the partial trace is still written before the error is returned.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path) -> Result<RunFiles, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let stem = file_stem(cfg);
    let trace_path = out_dir.join(format!("{stem}.trace.csv"));
    let summary_path = out_dir.join(format!("{stem}.summary.json"));
    let execution = match execute(cfg) {
        Ok(e) => e,
        Err(CliError::Runtime {
            message,
            trace: Some(trace),
        }) => {
            write_trace(&trace, &trace_path)?;
            return Err(CliError::Runtime {
                message: format!("{message} (partial trace in {})", trace_path.display()),
                trace: Some(trace),
            });
        }
        Err(e) => return Err(e),
    };
    write_trace(&execution.trace, &trace_path)?;
    let json = serde_json::to_string_pretty(&execution.summary).expect("summary serializes");
    std::fs::write(&summary_path, json + "\n").map_err(|e| CliError::io(&summary_path, e))?;
    Ok(RunFiles {
        trace: trace_path,
        summary: summary_path,
        execution,
    })
}
