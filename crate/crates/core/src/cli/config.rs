//! Declarative experiment description, read from and written to JSON.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorConfig;
use crate::equilibrium::SolverConfig;
use crate::error::{Error, Result};
use crate::graph::{self, EdgeListOptions, Indexing, Network};
use crate::models::{LinearFjParams, Model, NfjParams, TaylorParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the network comes from. Generator seeds default to the
/// experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Er {
        n: usize,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Sbm {
        sizes: Vec<usize>,
        p_in: f64,
        p_out: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    CorePeriphery {
        n: usize,
        p_e: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Complete {
        n: usize,
    },
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        indexing: Indexing,
        #[serde(default = "yes")]
        symmetrize: bool,
        #[serde(default)]
        ignore_weights: bool,
    },
}

fn yes() -> bool {
    true
}

impl GraphSpec {
    pub fn build(&self, default_seed: u64) -> Result<Network> {
        match self {
            GraphSpec::Er { n, p, seed } => graph::erdos_renyi(*n, *p, seed.unwrap_or(default_seed)),
            GraphSpec::Sbm { sizes, p_in, p_out, seed } => {
                graph::stochastic_block_model(sizes, *p_in, *p_out, seed.unwrap_or(default_seed))
            }
            GraphSpec::CorePeriphery { n, p_e, seed } => graph::core_periphery(*n, *p_e, seed.unwrap_or(default_seed)),
            GraphSpec::Complete { n } => graph::complete_graph(*n),
            GraphSpec::EdgeList { path, indexing, symmetrize, ignore_weights } => graph::load_edge_list_with(
                path,
                &EdgeListOptions { indexing: *indexing, symmetrize: *symmetrize, ignore_weights: *ignore_weights },
            ),
        }
    }

    /// Node count when it is known without building the graph.
    pub fn declared_n(&self) -> Option<usize> {
        match self {
            GraphSpec::Er { n, .. } | GraphSpec::CorePeriphery { n, .. } | GraphSpec::Complete { n } => Some(*n),
            GraphSpec::Sbm { sizes, .. } => Some(sizes.iter().sum()),
            GraphSpec::EdgeList { .. } => None,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let GraphSpec::EdgeList { path, .. } = self {
            *path = resolve(base, path);
        }
    }
}

/// A per-node parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorSpec {
    Constant {
        value: f64,
    },
    /// `first` on one group of `split` nodes, `rest` on the others. The
    /// group is the leading nodes, or a seeded random subset when
    /// `randomize` is set.
    TwoGroup {
        first: f64,
        rest: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<usize>,
        #[serde(default)]
        randomize: bool,
    },
    Values {
        values: Vec<f64>,
    },
    /// One value per node, whitespace or comma separated; `#` comments.
    File {
        path: PathBuf,
    },
}

impl VectorSpec {
    pub fn constant(value: f64) -> Self {
        VectorSpec::Constant { value }
    }

    pub fn resolve(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let v = match self {
            VectorSpec::Constant { value } => vec![*value; n],
            VectorSpec::TwoGroup { first, rest, split, randomize } => {
                let groups = two_group_labels(n, *split, *randomize, seed)?;
                groups.iter().map(|&g| if g == 0 { *first } else { *rest }).collect()
            }
            VectorSpec::Values { values } => values.clone(),
            VectorSpec::File { path } => read_vector(path)?,
        };
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        Ok(v)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let VectorSpec::File { path } = self {
            *path = resolve(base, path);
        }
    }
}

/// Group size used when a two-group split is not given: 50 of 150 nodes,
/// scaled to the network size.
pub fn default_split(n: usize) -> usize {
    n * 50 / 150
}

/// Labels 0 (first group) and 1 (the rest).
pub fn two_group_labels(n: usize, split: Option<usize>, randomize: bool, seed: u64) -> Result<Vec<usize>> {
    let split = split.unwrap_or(if randomize { n / 2 } else { default_split(n) });
    if split > n {
        return Err(Error::Config(format!("group split {split} exceeds node count {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if randomize {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut labels = vec![1; n];
    for &i in &order[..split] {
        labels[i] = 0;
    }
    Ok(labels)
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v = tok.parse().map_err(|_| Error::Parse { line: k + 1, msg: format!("not a number: {tok:?}") })?;
            out.push(v);
        }
    }
    Ok(out)
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    Abelson,
    Laplacian,
    Taylor,
    LinearFj,
    Nfj,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Abelson => "abelson",
            ModelKind::Laplacian => "laplacian",
            ModelKind::Taylor => "taylor",
            ModelKind::LinearFj => "linear_fj",
            ModelKind::Nfj => "nfj",
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub graph: GraphSpec,
    pub model: ModelKind,
    #[serde(default = "unit_vector")]
    pub u: VectorSpec,
    #[serde(default = "unit_vector")]
    pub sigma: VectorSpec,
    /// Taylor model only.
    #[serde(default = "half_vector")]
    pub lambda: VectorSpec,
    #[serde(default = "unit_vector")]
    pub x0: VectorSpec,
    /// Nonlinear model only: agents with infinite stubbornness.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<usize>,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Iterate the discrete protocol instead of integrating the flow.
    #[serde(default)]
    pub discrete: bool,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_grid")]
    pub nash_grid: usize,
}

fn unit_vector() -> VectorSpec {
    VectorSpec::constant(1.0)
}

fn half_vector() -> VectorSpec {
    VectorSpec::constant(0.5)
}

fn one() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_steps() -> usize {
    10_000
}

fn default_grid() -> usize {
    1001
}

/// A config turned into concrete numerical objects.
#[derive(Debug, Clone)]
pub struct Instance {
    pub net: Network,
    pub model: Model,
    pub x0: Vec<f64>,
    /// Group label of each node, for the group statistics.
    pub groups: Vec<usize>,
}

impl ExperimentConfig {
    pub fn new(graph: GraphSpec, model: ModelKind) -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            name: None,
            graph,
            model,
            u: unit_vector(),
            sigma: unit_vector(),
            lambda: half_vector(),
            x0: unit_vector(),
            pinned: Vec::new(),
            p: 1.0,
            integrator: IntegratorConfig::default(),
            solver: SolverConfig::default(),
            seed: 0,
            output_dir: default_output_dir(),
            discrete: false,
            steps: default_steps(),
            nash_grid: default_grid(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", cfg.schema)));
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.graph.resolve_paths(base);
        for spec in [&mut cfg.u, &mut cfg.sigma, &mut cfg.lambda, &mut cfg.x0] {
            spec.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks everything that can be checked without building the network.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema version {}", self.schema)));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p = {} must be positive", self.p)));
        }
        self.integrator.validate()?;
        self.solver.validate()?;
        if self.nash_grid < 2 {
            return Err(Error::Config("nash_grid must be at least 2".into()));
        }
        if let GraphSpec::EdgeList { path, .. } = &self.graph {
            if !path.exists() {
                return Err(Error::Config(format!("edge list {} does not exist", path.display())));
            }
        }
        for spec in [&self.u, &self.sigma, &self.lambda, &self.x0] {
            match spec {
                VectorSpec::File { path } if !path.exists() => {
                    return Err(Error::Config(format!("vector file {} does not exist", path.display())));
                }
                VectorSpec::TwoGroup { split: Some(s), .. } => {
                    if let Some(n) = self.graph.declared_n() {
                        if *s > n {
                            return Err(Error::Config(format!("group split {s} exceeds node count {n}")));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Group labels: from the first two-group parameter vector, otherwise a
    /// single group.
    pub fn group_labels(&self, n: usize) -> Result<Vec<usize>> {
        for spec in [&self.u, &self.sigma, &self.lambda] {
            if let VectorSpec::TwoGroup { split, randomize, .. } = spec {
                return two_group_labels(n, *split, *randomize, self.seed);
            }
        }
        Ok(vec![0; n])
    }

    pub fn build_model(&self, n: usize) -> Result<Model> {
        let model = match self.model {
            ModelKind::Abelson => Model::Abelson,
            ModelKind::Laplacian => Model::Laplacian,
            ModelKind::Taylor => Model::Taylor(TaylorParams::new(self.lambda.resolve(n, self.seed)?, self.u.resolve(n, self.seed)?)?),
            ModelKind::LinearFj => {
                Model::LinearFj(LinearFjParams::new(self.u.resolve(n, self.seed)?, self.sigma.resolve(n, self.seed)?)?)
            }
            ModelKind::Nfj => {
                let mut params = NfjParams::new(self.u.resolve(n, self.seed)?, self.sigma.resolve(n, self.seed)?, self.p)?;
                if !self.pinned.is_empty() {
                    let mut mask = vec![false; n];
                    for &i in &self.pinned {
                        if i >= n {
                            return Err(Error::Config(format!("pinned agent {i} out of range (n = {n})")));
                        }
                        mask[i] = true;
                    }
                    params = params.with_pinned(mask)?;
                }
                Model::Nfj(params)
            }
        };
        Ok(model)
    }

    /// Validates the config, then builds network, model, initial state and
    /// group labels.
    pub fn instantiate(&self) -> Result<Instance> {
        self.validate()?;
        let net = self.graph.build(self.seed)?;
        let n = net.n();
        let model = self.build_model(n)?;
        model.validate_for(&net)?;
        let mut x0 = self.x0.resolve(n, self.seed)?;
        if let Model::Nfj(params) = &model {
            params.project_pinned(&mut x0);
        }
        crate::models::check_positive(&x0)?;
        let groups = self.group_labels(n)?;
        Ok(Instance { net, model, x0, groups })
    }
}
