//! One-parameter sweeps over a base configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use optdec_core::trace::RunTrace;

use crate::config::{GeneratedTopology, Horizon, Method, RunConfig, TopologyKind, TopologySpec};
use crate::runner::{self, Execution};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eps,
    Sigma,
    M,
    ChiTopology,
    N,
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps" => Ok(Self::Eps),
            "sigma" => Ok(Self::Sigma),
            "m" => Ok(Self::M),
            "chi-topology" | "chi_topology" => Ok(Self::ChiTopology),
            "N" | "n" => Ok(Self::N),
            _ => Err(CliError::Config(format!(
                "unknown sweep parameter `{s}` (expected eps, sigma, m, chi-topology or N)"
            ))),
        }
    }
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::Sigma => "sigma",
            Self::M => "m",
            Self::ChiTopology => "chi-topology",
            Self::N => "N",
        }
    }
}

fn parse<T: FromStr>(v: &str, what: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("sweep value `{v}` is not a valid {what}")))
}

fn generated(cfg: &RunConfig) -> Result<GeneratedTopology, CliError> {
    match &cfg.topology {
        Some(TopologySpec::Generated(g)) => Ok(g.clone()),
        _ => Err(CliError::Config("this sweep needs a generated topology in the base config".into())),
    }
}

/// Base config with one parameter replaced.
pub fn apply(base: &RunConfig, param: SweepParam, value: &str) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Eps => cfg.eps = parse(value, "number")?,
        SweepParam::Sigma => cfg.noise.sigma = parse(value, "number")?,
        SweepParam::N => cfg.n = Horizon::Fixed(parse(value, "iteration count")?),
        SweepParam::M => {
            let mut g = generated(base)?;
            g.m = parse(value, "node count")?;
            cfg.topology = Some(TopologySpec::Generated(g));
        }
        SweepParam::ChiTopology => {
            let mut g = generated(base)?;
            g.kind = TopologyKind::from_str(value.trim()).map_err(CliError::Config)?;
            cfg.topology = Some(TopologySpec::Generated(g));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub config_hash: String,
    pub chi: Option<f64>,
    pub horizon: usize,
    pub last_iter: usize,
    /// First iteration whose progress measure is within tolerance.
    pub iters_to_eps: Option<usize>,
    /// Communication rounds spent up to that iteration.
    pub rounds_to_eps: Option<u64>,
    pub comm_rounds: u64,
    pub stoch_samples: u64,
    pub grad_calls: u64,
    pub final_metric: Option<f64>,
}

/// Progress measure each method is judged by, already divided by its tolerance.
fn progress(method: Method, row: &optdec_core::trace::TraceRow, eps: f64, r_y: f64) -> Option<f64> {
    match method {
        Method::Stm | Method::Sstm | Method::StmIps => row.f_gap.map(|g| g / eps),
        Method::Spdstm => match (row.dual_gap, row.constraint_norm) {
            (Some(g), Some(c)) => Some((g.abs() / eps).max(c * r_y / eps)),
            _ => None,
        },
        _ => row.grad_norm.map(|g| g * r_y / eps),
    }
}

fn first_within(method: Method, trace: &RunTrace, eps: f64, r_y: f64) -> Option<&optdec_core::trace::TraceRow> {
    trace
        .rows
        .iter()
        .find(|r| progress(method, r, eps, r_y).is_some_and(|p| p <= 1.0))
}

pub fn row_for(cfg: &RunConfig, value: &str, exec: &Execution) -> SweepRow {
    let s = &exec.summary;
    let r_y = s.r_y.unwrap_or(1.0);
    let hit = first_within(cfg.method, &exec.trace, cfg.eps, r_y);
    let last = exec.trace.last().expect("non-empty trace");
    SweepRow {
        value: value.to_string(),
        config_hash: s.config_hash.clone(),
        chi: s.chi,
        horizon: s.horizon,
        last_iter: last.iter,
        iters_to_eps: hit.map(|r| r.iter),
        rounds_to_eps: hit.map(|r| r.counts.comm_rounds),
        comm_rounds: s.counters.comm_rounds,
        stoch_samples: s.counters.stoch_samples,
        grad_calls: s.counters.grad_calls,
        final_metric: progress(cfg.method, last, cfg.eps, r_y).map(|p| p * cfg.eps),
    }
}

/// Runs every value in parallel, in memory.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    let cfgs = values
        .iter()
        .map(|v| apply(base, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    cfgs.par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| runner::execute(cfg).map(|e| row_for(cfg, v, &e)))
        .collect()
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Runs every value, writes each run's own files and the aggregated CSV.
pub fn sweep_to_dir(base: &RunConfig, param: SweepParam, values: &[String], out_dir: &Path) -> Result<PathBuf, CliError> {
    let cfgs = values
        .iter()
        .map(|v| apply(base, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = cfgs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| runner::run_to_dir(cfg, out_dir).map(|f| row_for(cfg, v, &f.execution)))
        .collect::<Result<Vec<_>, _>>()?;
    let path = out_dir.join(format!("sweep-{}-{}.csv", runner::file_stem(base), param.name()));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
    w.write_record([
        param.name(),
        "config_hash",
        "chi",
        "horizon",
        "last_iter",
        "iters_to_eps",
        "rounds_to_eps",
        "comm_rounds",
        "stoch_samples",
        "grad_calls",
        "final_metric",
    ])
    .map_err(|e| CliError::io(&path, e))?;
    for r in &rows {
        w.write_record([
            r.value.clone(),
            r.config_hash[..16].to_string(),
            fmt_f(r.chi),
            r.horizon.to_string(),
            r.last_iter.to_string(),
            fmt_opt(r.iters_to_eps),
            fmt_opt(r.rounds_to_eps),
            r.comm_rounds.to_string(),
            r.stoch_samples.to_string(),
            r.grad_calls.to_string(),
            fmt_f(r.final_metric),
        ])
        .map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
