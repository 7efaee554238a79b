//! Run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use optdec_core::oracle::NoiseSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stm,
    StmIps,
    Sstm,
    Spdstm,
    SstmSc,
    AcSa,
    Rrma,
    RestartedRrma,
}

impl Method {
    pub fn is_dual(self) -> bool {
        !matches!(self, Method::Stm | Method::StmIps | Method::Sstm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Random strongly convex quadratic.
    Quadratic { dim: usize, cond: f64 },
    /// Nesterov's worst-case chain quadratic with smoothness `l`.
    Chain {
        dim: usize,
        #[serde(default = "one")]
        l: f64,
    },
    /// Random quadratic with `constraints` random linear equality constraints `Ax = 0`.
    Penalty { dim: usize, cond: f64, constraints: usize },
    /// One random quadratic per node, coupled by consensus over the topology.
    ConsensusQuadratic { dim: usize, cond: f64 },
    /// Entropic barycenter of random measures (one per node) or of measures from files.
    Barycenter {
        mu: f64,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        measures_file: Option<PathBuf>,
        #[serde(default)]
        cost_file: Option<PathBuf>,
    },
    /// Quadratic `½xᵀQx − bᵀx` from CSV files, optionally with constraints `Ax = 0`.
    Files {
        q_file: PathBuf,
        b_file: PathBuf,
        #[serde(default)]
        a_file: Option<PathBuf>,
    },
}

impl ProblemSpec {
    pub fn is_decentralized(&self) -> bool {
        matches!(self, ProblemSpec::ConsensusQuadratic { .. } | ProblemSpec::Barycenter { .. })
    }

    fn is_constrained(&self) -> bool {
        matches!(self, ProblemSpec::Penalty { .. } | ProblemSpec::Files { a_file: Some(_), .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Path,
    Star,
    Complete,
    ErdosRenyi,
}

impl std::str::FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "ring" => Ok(Self::Ring),
            "path" => Ok(Self::Path),
            "star" => Ok(Self::Star),
            "complete" => Ok(Self::Complete),
            "erdos_renyi" => Ok(Self::ErdosRenyi),
            _ => Err(format!("unknown topology kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyRef {
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedTopology {
    pub kind: TopologyKind,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    File(TopologyRef),
    Generated(GeneratedTopology),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub c_hat: f64,
    #[serde(default = "two")]
    pub step_factor: f64,
    /// Bound on the dual solution norm; computed when the problem allows it.
    #[serde(default)]
    pub r_y: Option<f64>,
    /// Stop dual methods once the exact gradient norm reaches `eps / R_y`.
    #[serde(default)]
    pub early_stop: bool,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c: 1.0,
            c_hat: 1.0,
            step_factor: 2.0,
            r_y: None,
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default = "NoiseSpec::none")]
    pub noise: NoiseSpec,
    pub eps: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: Horizon,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub constants: Constants,
    /// Directory relative paths are resolved against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_beta() -> f64 {
    0.05
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Canonical JSON used for hashing and file names.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0,1), got {}", self.beta));
        }
        if self.noise.validate().is_err() {
            return bad("noise sigma and delta must be finite and nonnegative".into());
        }
        let c = &self.constants;
        if !(c.c > 0.0 && c.c_hat > 0.0) {
            return bad("constants c and c_hat must be positive".into());
        }
        if c.step_factor != 1.0 && c.step_factor != 2.0 {
            return bad(format!("step_factor must be 1 or 2, got {}", c.step_factor));
        }
        if c.r_y.is_some_and(|r| r <= 0.0) {
            return bad("r_y must be positive".into());
        }
        match &self.problem {
            ProblemSpec::Quadratic { dim, cond }
            | ProblemSpec::Penalty { dim, cond, .. }
            | ProblemSpec::ConsensusQuadratic { dim, cond } => {
                if *dim == 0 || !(*cond >= 1.0) {
                    return bad("problem needs dim ≥ 1 and cond ≥ 1".into());
                }
            }
            ProblemSpec::Barycenter {
                mu,
                n,
                measures_file,
                cost_file,
            } => {
                if !(*mu > 0.0) {
                    return bad("barycenter mu must be positive".into());
                }
                if measures_file.is_some() != cost_file.is_some() {
                    return bad("barycenter needs both measures_file and cost_file, or neither".into());
                }
                if measures_file.is_none() && n.is_none_or(|n| n < 2) {
                    return bad("random barycenter needs n ≥ 2".into());
                }
            }
            ProblemSpec::Chain { dim, l } => {
                if *dim == 0 || !(*l > 0.0) {
                    return bad("chain needs dim ≥ 1 and l > 0".into());
                }
            }
            ProblemSpec::Files { .. } => {}
        }
        if let ProblemSpec::Penalty { constraints, .. } = self.problem {
            if constraints == 0 {
                return bad("penalty problem needs at least one constraint".into());
            }
        }
        if self.problem.is_decentralized() {
            if self.topology.is_none() {
                return bad("decentralized problem needs a topology".into());
            }
            if !self.method.is_dual() {
                return bad(format!("method {:?} cannot run a decentralized problem", self.method));
            }
        }
        match self.method {
            Method::Stm | Method::Sstm => {
                if !matches!(
                    self.problem,
                    ProblemSpec::Quadratic { .. } | ProblemSpec::Chain { .. } | ProblemSpec::Files { a_file: None, .. }
                ) {
                    return bad(format!("method {:?} needs an unconstrained quadratic", self.method));
                }
            }
            Method::StmIps => {
                if !self.problem.is_constrained() {
                    return bad("stm_ips needs a constrained problem (penalty or files with a_file)".into());
                }
            }
            _ => {
                if !(self.problem.is_constrained() || self.problem.is_decentralized()) {
                    return bad(format!("method {:?} needs constraints or a topology", self.method));
                }
            }
        }
        if let Some(TopologySpec::Generated(GeneratedTopology { kind, m, p })) = &self.topology {
            if *m < 2 {
                return bad("topology needs m ≥ 2".into());
            }
            if *kind == TopologyKind::ErdosRenyi && p.is_none_or(|p| !(p > 0.0 && p <= 1.0)) {
                return bad("erdos_renyi needs p in (0,1]".into());
            }
        }
        Ok(())
    }
}
