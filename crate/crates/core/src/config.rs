//! TOML experiment files.
//!
//! ```toml
//! [graph]
//! type = "explicit"          # ring | path | complete | erdos_renyi | explicit
//! n = 10
//! edges_file = "ring_chords.edges"   # or edges = [[1, 2], ...]
//!
//! [data]
//! values = [45, 8, 22, 91, 15, 82, 53, 7, 44, 99]
//! # file = "data.txt"
//! # generator = { kind = "uniform_int", lo = 1, hi = 100, seed = 3 }
//!
//! [target]
//! k = 1                      # or p = 0.95
//!
//! [schedule]
//! alpha0 = 80.0
//! beta0 = "auto"
//! tau1 = 1.0
//! tau2 = 0.505
//!
//! [noise]
//! type = "gaussian"          # or "none"
//! sigma2 = 10.0
//!
//! [run]
//! iterations = 100000
//! replications = 100
//! seed = 1
//! record_cadence = "auto"    # "auto" | "geometric" | N (every N rounds)
//! decision_offset = 0.5
//!
//! [output]
//! dir = "out/noisy"
//! ```
//!
//! Unknown keys are rejected. Relative paths resolve against the directory
//! of the config file. A run manifest is also accepted as a config: its
//! `[config]` table is used.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{make_graph, parse_edge_list, Graph, GraphError, GraphKind};
use crate::protocol::{NoiseKind, NoiseModel};
use crate::quantile::{Dataset, QuantileError};
use crate::schedule::StepSchedule;
use crate::simulator::{RecordCadence, SimConfig, Target};

pub const DEFAULT_DECISION_OFFSET: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid config: {0}")]
    Graph(#[from] GraphError),
    #[error("invalid config: {0}")]
    Quantile(#[from] QuantileError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphType {
    Ring,
    Path,
    Complete,
    ErdosRenyi,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(rename = "type")]
    pub kind: GraphType,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    /// Erdős–Rényi seed; defaults to `run.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_file: Option<PathBuf>,
    /// Inline 1-based edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    UniformInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub lo: i64,
    pub hi: i64,
    /// Defaults to `run.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl TargetSection {
    pub fn target(&self) -> Result<Target, ConfigError> {
        match (self.k, self.p) {
            (Some(k), None) => Ok(Target::K(k)),
            (None, Some(p)) => Ok(Target::P(p)),
            _ => Err(invalid("target: exactly one of `k` or `p` must be given")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CadenceName {
    Auto,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CadenceSpec {
    Every(u64),
    Named(CadenceName),
}

impl Default for CadenceSpec {
    fn default() -> Self {
        CadenceSpec::Named(CadenceName::Auto)
    }
}

impl CadenceSpec {
    pub fn cadence(&self) -> RecordCadence {
        match *self {
            CadenceSpec::Every(n) => RecordCadence::Every(n),
            CadenceSpec::Named(CadenceName::Auto) => RecordCadence::Auto,
            CadenceSpec::Named(CadenceName::Geometric) => RecordCadence::Geometric,
        }
    }
}

fn default_offset() -> f64 {
    DEFAULT_DECISION_OFFSET
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: u64,
    pub replications: u64,
    pub seed: u64,
    #[serde(default)]
    pub record_cadence: CadenceSpec,
    #[serde(default = "default_offset")]
    pub decision_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// File form of a simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    pub data: DataSection,
    pub target: TargetSection,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub noise: NoiseModel,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<u64>,
    pub iterations: Option<u64>,
    pub sigma2: Option<f64>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub output: Option<PathBuf>,
}

/// A config ready to run, plus a self-contained copy of it (files and
/// generators inlined, overrides applied) for the manifest.
#[derive(Debug, Clone)]
pub struct BuiltConfig {
    pub sim: SimConfig,
    pub resolved: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if table.contains_key("manifest_format") {
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(invalid("manifest has no [config] table")),
            };
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.graph.edges_file.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.data.file.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.output.dir.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(r) = o.replications {
            self.run.replications = r;
        }
        if let Some(t) = o.iterations {
            self.run.iterations = t;
        }
        if let Some(sigma2) = o.sigma2 {
            self.noise = NoiseModel {
                kind: NoiseKind::Gaussian,
                sigma2,
            };
        }
        if let Some(k) = o.k {
            self.target = TargetSection {
                k: Some(k),
                p: None,
            };
        }
        if let Some(p) = o.p {
            self.target = TargetSection {
                k: None,
                p: Some(p),
            };
        }
        if let Some(dir) = &o.output {
            self.output.dir = Some(dir.clone());
        }
    }

    pub fn build(&self, allow_unsafe_schedule: bool) -> Result<BuiltConfig, ConfigError> {
        if self.run.iterations == 0 {
            return Err(invalid("run.iterations must be >= 1"));
        }
        if self.run.replications == 0 {
            return Err(invalid("run.replications must be >= 1"));
        }
        if self.run.record_cadence == CadenceSpec::Every(0) {
            return Err(invalid("run.record_cadence must be >= 1"));
        }
        let target = self.target.target()?;
        let graph = self.build_graph()?;
        let dataset = Dataset::new(self.data_values()?)?;

        let mut resolved = self.clone();
        resolved.graph = GraphSection {
            kind: GraphType::Explicit,
            n: graph.n(),
            edge_prob: None,
            seed: None,
            edges_file: None,
            edges: Some(
                graph
                    .edges_one_based()
                    .into_iter()
                    .map(|(a, b)| [a, b])
                    .collect(),
            ),
        };
        resolved.data = DataSection {
            values: Some(dataset.values().to_vec()),
            file: None,
            generator: None,
        };

        let sim = SimConfig {
            graph,
            dataset,
            target,
            schedule: self.schedule,
            noise: self.noise,
            horizon: self.run.iterations,
            replications: self.run.replications,
            base_seed: self.run.seed,
            decision_offset: self.run.decision_offset,
            cadence: self.run.record_cadence.cadence(),
            allow_unsafe_schedule,
        };
        Ok(BuiltConfig { sim, resolved })
    }

    pub fn build_graph(&self) -> Result<Graph, ConfigError> {
        let g = &self.graph;
        let seed = g.seed.unwrap_or(self.run.seed);
        let kind = match g.kind {
            GraphType::Ring => GraphKind::Ring,
            GraphType::Path => GraphKind::Path,
            GraphType::Complete => GraphKind::Complete,
            GraphType::ErdosRenyi => GraphKind::ErdosRenyi {
                edge_prob: g
                    .edge_prob
                    .ok_or_else(|| invalid("graph: erdos_renyi needs `edge_prob`"))?,
            },
            GraphType::Explicit => {
                let edges = match (&g.edges, &g.edges_file) {
                    (Some(inline), None) => inline.iter().map(|&[a, b]| (a, b)).collect(),
                    (None, Some(path)) => parse_edge_list(&read(path)?)?,
                    _ => {
                        return Err(invalid(
                            "graph: explicit needs exactly one of `edges` or `edges_file`",
                        ))
                    }
                };
                GraphKind::Explicit(edges)
            }
        };
        Ok(make_graph(&kind, g.n, seed)?)
    }

    pub fn data_values(&self) -> Result<Vec<f64>, ConfigError> {
        let d = &self.data;
        match (&d.values, &d.file, &d.generator) {
            (Some(v), None, None) => Ok(v.clone()),
            (None, Some(path), None) => parse_data(&read(path)?),
            (None, None, Some(gen)) => {
                if gen.lo > gen.hi {
                    return Err(invalid(format!(
                        "data.generator: lo = {} exceeds hi = {}",
                        gen.lo, gen.hi
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(gen.seed.unwrap_or(self.run.seed));
                Ok((0..self.graph.n)
                    .map(|_| rng.random_range(gen.lo..=gen.hi) as f64)
                    .collect())
            }
            _ => Err(invalid(
                "data: exactly one of `values`, `file` or `generator` must be given",
            )),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a data file: numbers separated by whitespace or commas, one agent
/// per number in agent order, `#` starts a comment.
pub fn parse_data(text: &str) -> Result<Vec<f64>, ConfigError> {
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| {
                invalid(format!("data line {}: `{tok}` is not a number", lineno + 1))
            })?;
            values.push(v);
        }
    }
    Ok(values)
}
