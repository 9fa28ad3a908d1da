//! Simulation experiments comparing BIC and sBIC, random trees, and a
//! numerical oracle for learning coefficients.

mod laplace;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::forest::fixtures::five_leaf;
use crate::forest::{canonicalize, subforest_lattice, CanonicalForest, Forest, ForestError, ForestJson, ModelLattice, Node};
use crate::forest_rlct::RlctError;
use crate::gaussian::{
    covariance, sample_cov, suff_stats, suff_stats_from_cov, EmConfig, GaussianError, ModelParams, ParamsJson,
};
use crate::selection::{select_on_lattice, Criterion, SelectionError};

pub use laplace::{laplace_rlct_estimate, IntegrationMethod, LaplaceConfig, LaplaceEstimate};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Rlct(#[from] RlctError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("need at least 3 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("no lattice class at depth {depth} (maximum {max})")]
    NoSuchDepth { depth: usize, max: usize },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Random trivalent tree with leaves `"1".."m"` and latent nodes `"h1"..`:
/// start from the 3-star and repeatedly subdivide a uniform edge, hanging
/// the next leaf from the new node.
pub fn random_trivalent_tree(m: usize, seed: u64) -> Result<Forest, SimError> {
    if m < 3 {
        return Err(SimError::TooFewLeaves(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf = |i: usize| i - 1;
    let latent = |j: usize| m + j - 1;
    let mut edges = vec![(latent(1), leaf(1)), (latent(1), leaf(2)), (latent(1), leaf(3))];
    for i in 4..=m {
        let (u, v) = edges.swap_remove(rng.gen_range(0..edges.len()));
        let h = latent(i - 2);
        edges.extend([(u, h), (h, v), (h, leaf(i))]);
    }
    edges.sort_unstable();
    let mut nodes: Vec<Node> = (1..=m).map(|i| Node::observed(i.to_string())).collect();
    nodes.extend((1..=m - 2).map(|j| Node::latent(format!("h{j}"))));
    Ok(Forest::from_indices(nodes, edges)?)
}

/// Uniform class index among those at the given depth.
pub fn random_class_at_depth(lattice: &ModelLattice, depth: usize, seed: u64) -> Result<usize, SimError> {
    let at: Vec<usize> = (0..lattice.len()).filter(|&c| lattice.class(c).depth() == depth).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    at.choose(&mut rng).copied().ok_or(SimError::NoSuchDepth { depth, max: lattice.max_depth() })
}

pub fn random_subforest_at_depth(t: &Forest, depth: usize, seed: u64) -> Result<CanonicalForest, SimError> {
    let lattice = subforest_lattice(t)?;
    let c = random_class_at_depth(&lattice, depth, seed)?;
    Ok(lattice.class(c).canonical().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// The five-leaf tree with the third leaf independent.
    Lattice5,
    /// Random trees with a random true subforest at middle depth.
    DepthComparison,
    /// User-supplied host and true parameters.
    Custom,
}

/// EM settings used inside experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub restarts: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        let d = EmConfig::default();
        EmSettings { max_iter: d.max_iter, rel_tol: d.rel_tol, restarts: d.restarts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_values: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Tree sizes for `depth_comparison`.
    #[serde(default = "default_leaves")]
    pub leaves: Vec<usize>,
    #[serde(default = "default_corr")]
    pub edge_corr: f64,
    /// Use the exact covariance with sample size `n` instead of sampling.
    #[serde(default)]
    pub population: bool,
    #[serde(default)]
    pub em: EmSettings,
    #[serde(default)]
    pub host: Option<ForestJson>,
    #[serde(default)]
    pub params: Option<ParamsJson>,
}

fn default_replicates() -> usize {
    100
}

fn default_leaves() -> Vec<usize> {
    vec![6, 8]
}

fn default_corr() -> f64 {
    0.6
}

impl ExperimentConfig {
    pub fn lattice5(n_values: Vec<usize>, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Lattice5,
            n_values,
            replicates,
            seed,
            leaves: default_leaves(),
            edge_corr: default_corr(),
            population: false,
            em: EmSettings::default(),
            host: None,
            params: None,
        }
    }

    /// Scaled-down defaults: 20 trees, 6 and 8 leaves, n in 1e2, 1e3, 1e4.
    pub fn depth_comparison(seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::DepthComparison,
            n_values: vec![100, 1000, 10000],
            replicates: 20,
            leaves: default_leaves(),
            em: EmSettings { restarts: 2, ..EmSettings::default() },
            ..Self::lattice5(Vec::new(), 0, seed)
        }
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.replicates < 1 {
            return bad("replicates must be at least 1");
        }
        if self.n_values.is_empty() || self.n_values[0] < 1 || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be positive and strictly increasing");
        }
        if !(self.edge_corr.abs() < 1.0) {
            return bad("edge_corr must lie in (-1, 1)");
        }
        match self.kind {
            ExperimentKind::DepthComparison if self.leaves.iter().any(|&m| !(3..=12).contains(&m)) => {
                bad("leaves must lie in 3..=12")
            }
            ExperimentKind::Custom if self.host.is_none() || self.params.is_none() => {
                bad("custom experiments need host and params")
            }
            _ => Ok(()),
        }
    }

    fn em_config(&self, seed: u64) -> EmConfig {
        EmConfig { max_iter: self.em.max_iter, rel_tol: self.em.rel_tol, restarts: self.em.restarts, seed, ..Default::default() }
    }
}

/// One line of the count table. `model` is a 1-based lattice class number,
/// or 0 for exact-recovery rows of the depth comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub leaves: usize,
    pub n: usize,
    pub criterion: Criterion,
    pub model: usize,
    pub code: String,
    pub truth: bool,
    pub count: usize,
    pub replicates: usize,
}

/// A cover relation of the lattice, for drawing heatmaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub from: usize,
    pub to: usize,
    pub from_code: String,
    pub to_code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub counts: Vec<CountRow>,
    pub edges: Vec<EdgeRow>,
}

impl ExperimentResult {
    /// Count for a 1-based model number under a criterion at sample size `n`.
    pub fn count(&self, n: usize, criterion: Criterion, model: usize) -> usize {
        self.counts
            .iter()
            .filter(|r| r.n == n && r.criterion == criterion && r.model == model)
            .map(|r| r.count)
            .sum()
    }

    /// Model number selected most often (ties to the smaller number).
    pub fn modal(&self, n: usize, criterion: Criterion) -> Option<usize> {
        self.counts
            .iter()
            .filter(|r| r.n == n && r.criterion == criterion && r.model > 0)
            .max_by(|a, b| a.count.cmp(&b.count).then(b.model.cmp(&a.model)))
            .map(|r| r.model)
    }

    pub fn write_counts_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        write_csv(w, &self.counts)
    }

    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        write_csv(w, &self.edges)
    }

    /// Writes `counts.csv`, `lattice_edges.csv` and `result.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        let io = |e: std::io::Error| SimError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        self.write_counts_csv(std::fs::File::create(dir.join("counts.csv")).map_err(io)?)?;
        self.write_edges_csv(std::fs::File::create(dir.join("lattice_edges.csv")).map_err(io)?)?;
        let json = serde_json::to_string_pretty(self).expect("result json");
        std::fs::write(dir.join("result.json"), json + "\n").map_err(io)
    }
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), SimError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| SimError::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| SimError::Io(e.to_string()))
}

const CRITERIA: [Criterion; 2] = [Criterion::Bic, Criterion::Sbic];

/// Sufficient statistics for one replicate: sampled, or exact in population mode.
fn replicate_stats(
    sigma: &nalgebra::DMatrix<f64>,
    ids: &[String],
    n: usize,
    population: bool,
    seed: u64,
) -> Result<crate::gaussian::SufficientStats, SimError> {
    if population {
        return Ok(suff_stats_from_cov(sigma, n, ids));
    }
    let x = sample_cov(sigma, n, seed)?;
    Ok(suff_stats(&x, ids, false)?)
}

/// Selection counts over a fixed lattice with data from `params` on its host.
fn run_lattice(cfg: &ExperimentConfig, host: &Forest, params: &ModelParams) -> Result<ExperimentResult, SimError> {
    params.validate(host)?;
    let mut lattice = subforest_lattice(host)?;
    lattice.populate_rlcts()?;
    let truth = lattice
        .find(&canonicalize(&host.edge_subforest(|e| params.edge_corr[e] != 0.0)))
        .expect("every subforest has a class");
    let sigma = covariance(host, params);
    let ids: Vec<String> = host.observed_ids().iter().map(|s| s.to_string()).collect();
    let leaves = ids.len();

    let tasks: Vec<(usize, usize)> =
        (0..cfg.n_values.len()).flat_map(|i| (0..cfg.replicates).map(move |r| (i, r))).collect();
    let picks: Vec<[usize; 2]> = tasks
        .par_iter()
        .map(|&(i, r)| {
            let seed = derive_seed(derive_seed(cfg.seed, i as u64), r as u64);
            let stats = replicate_stats(&sigma, &ids, cfg.n_values[i], cfg.population, seed)?;
            let sel = select_on_lattice(&lattice, &stats, Criterion::Sbic, &cfg.em_config(derive_seed(seed, 1)))?;
            Ok([sel.best(&lattice, Criterion::Bic), sel.best(&lattice, Criterion::Sbic)])
        })
        .collect::<Result<_, SimError>>()?;

    let mut counts = Vec::new();
    for (i, &n) in cfg.n_values.iter().enumerate() {
        for (k, &criterion) in CRITERIA.iter().enumerate() {
            let mut hist = vec![0usize; lattice.len()];
            for (t, p) in tasks.iter().zip(&picks) {
                if t.0 == i {
                    hist[p[k]] += 1;
                }
            }
            for (c, &count) in hist.iter().enumerate() {
                counts.push(CountRow {
                    leaves,
                    n,
                    criterion,
                    model: c + 1,
                    code: lattice.code(c),
                    truth: c == truth,
                    count,
                    replicates: cfg.replicates,
                });
            }
        }
    }
    let edges = lattice
        .covers()
        .iter()
        .map(|&(a, b)| EdgeRow { from: a + 1, to: b + 1, from_code: lattice.code(a), to_code: lattice.code(b) })
        .collect();
    Ok(ExperimentResult { kind: cfg.kind, counts, edges })
}

/// Exact-recovery counts on random trees with a random middle-depth truth.
fn run_depth_comparison(cfg: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
    let mut counts = Vec::new();
    for &m in &cfg.leaves {
        let tree_master = derive_seed(cfg.seed, m as u64);
        let hits: Vec<Vec<[bool; 2]>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(tree_master, r as u64);
                let tree = random_trivalent_tree(m, derive_seed(seed, 0))?;
                let mut lattice = subforest_lattice(&tree)?;
                lattice.populate_rlcts()?;
                let truth = random_class_at_depth(&lattice, (m - 1) / 2, derive_seed(seed, 1))?;
                let mask = lattice.class(truth).rep_mask();
                let params = ModelParams {
                    leaf_var: vec![1.0; m],
                    edge_corr: (0..tree.num_edges()).map(|e| if mask >> e & 1 == 1 { cfg.edge_corr } else { 0.0 }).collect(),
                };
                let sigma = covariance(&tree, &params);
                let ids: Vec<String> = tree.observed_ids().iter().map(|s| s.to_string()).collect();
                cfg.n_values
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let s = derive_seed(seed, 2 + i as u64);
                        let stats = replicate_stats(&sigma, &ids, n, cfg.population, s)?;
                        let sel = select_on_lattice(&lattice, &stats, Criterion::Sbic, &cfg.em_config(derive_seed(s, 1)))?;
                        Ok([sel.best(&lattice, Criterion::Bic) == truth, sel.best(&lattice, Criterion::Sbic) == truth])
                    })
                    .collect::<Result<Vec<_>, SimError>>()
            })
            .collect::<Result<_, SimError>>()?;
        for (i, &n) in cfg.n_values.iter().enumerate() {
            for (k, &criterion) in CRITERIA.iter().enumerate() {
                counts.push(CountRow {
                    leaves: m,
                    n,
                    criterion,
                    model: 0,
                    code: "recovered".into(),
                    truth: true,
                    count: hits.iter().filter(|h| h[i][k]).count(),
                    replicates: cfg.replicates,
                });
            }
        }
    }
    Ok(ExperimentResult { kind: cfg.kind, counts, edges: Vec::new() })
}

/// The five-leaf host with all correlations `rho` except the edge to leaf 3.
pub fn lattice5_truth(rho: f64) -> (Forest, ModelParams) {
    let host = five_leaf();
    let mut p = ModelParams::uniform(&host, 1.0, rho);
    let e = host.edge_between(host.index_of("c").unwrap(), host.index_of("3").unwrap()).unwrap();
    p.edge_corr[e] = 0.0;
    (host, p)
}

/// Runs an experiment. Every replicate draws from its own stream derived
/// from the master seed, so results do not depend on thread scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Lattice5 => {
            let (host, p) = lattice5_truth(cfg.edge_corr);
            run_lattice(cfg, &host, &p)
        }
        ExperimentKind::Custom => {
            let host = Forest::try_from(cfg.host.clone().expect("validated"))?;
            let p = ModelParams::from_json(&host, cfg.params.as_ref().expect("validated"))?;
            run_lattice(cfg, &host, &p)
        }
        ExperimentKind::DepthComparison => run_depth_comparison(cfg),
    }
}
