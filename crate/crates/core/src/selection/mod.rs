//! Model scores over posets of forest models: BIC, the singular BIC, and
//! the two search strategies (exhaustive lattice, greedy pruned chain).

mod chain;
mod nj;
mod sbic;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::forest::{subforest_lattice, Forest, ForestError, ModelLattice};
use crate::forest_rlct::{Rlct, RlctError};
use crate::gaussian::{em_fit, EmConfig, EmFit, GaussianError, SufficientStats};

pub use chain::{pruned_chain, ChainResult, ChainStep};
pub use nj::{initial_tree, neighbor_joining};
pub use sbic::{sbic_scores, solve_log_quadratic};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Rlct(#[from] RlctError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("need at least 3 observed variables, got {0}")]
    TooFewLeaves(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Sbic,
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "sbic" => Ok(Criterion::Sbic),
            other => Err(format!("unknown criterion {other:?} (expected bic or sbic)")),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Sbic => "sbic",
        })
    }
}

/// `loglik - (dim / 2) ln n`.
pub fn bic(loglik_hat: f64, dim: usize, n: usize) -> f64 {
    loglik_hat - 0.5 * dim as f64 * (n as f64).ln()
}

/// Log of the marginal-likelihood proxy `L'`:
/// `loglik - (lambda / 2) ln n + (mult - 1) ln ln n`.
pub fn log_lprime(loglik_hat_sup: f64, rlct: &Rlct, n: usize) -> f64 {
    let ln_n = (n as f64).ln();
    let mut v = loglik_hat_sup - 0.5 * rlct.lambda_f64() * ln_n;
    if rlct.mult > 1 {
        v += (rlct.mult - 1) as f64 * ln_n.ln();
    }
    v
}

/// One row of a score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    /// Edge-subset code of the class in the host edge order, or the
    /// canonical key for chain elements.
    pub code: String,
    pub dim: usize,
    pub loglik: f64,
    pub bic: f64,
    pub sbic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub n: usize,
    pub rows: Vec<ClassScore>,
}

impl ScoreTable {
    pub fn score(&self, class: usize, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Bic => self.rows[class].bic,
            Criterion::Sbic => self.rows[class].sbic,
        }
    }
}

/// Index of the best score; ties go to the smaller dimension, then to the
/// smaller tie key.
pub fn argmax_by(scores: &[f64], dims: &[usize], tie_keys: &[u64]) -> usize {
    (0..scores.len())
        .max_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then(dims[b].cmp(&dims[a]))
                .then(tie_keys[b].cmp(&tie_keys[a]))
        })
        .expect("nonempty score list")
}

/// BIC and sBIC for every class of a lattice given its maximized
/// log-likelihoods.
pub fn sbic_all(lattice: &ModelLattice, loglik: &[f64], n: usize) -> Result<ScoreTable, SelectionError> {
    if loglik.len() != lattice.len() {
        return Err(SelectionError::Invalid(format!("{} fits for {} classes", loglik.len(), lattice.len())));
    }
    let order = lattice.linear_extension();
    let below: Vec<Vec<usize>> = (0..lattice.len()).map(|c| lattice.strictly_below(c)).collect();
    let mut pairs = Vec::new();
    for (sup, subs) in below.iter().enumerate() {
        pairs.push((sup, sup));
        pairs.extend(subs.iter().map(|&sub| (sub, sup)));
    }
    let rlcts: Vec<Rlct> = pairs.par_iter().map(|&(a, b)| lattice.rlct(a, b)).collect::<Result<_, _>>()?;
    let mut log_l = std::collections::HashMap::with_capacity(pairs.len());
    for (&(a, b), r) in pairs.iter().zip(&rlcts) {
        log_l.insert((a, b), log_lprime(loglik[b], r, n));
    }
    let sbic = sbic_scores(&order, &below, |a, b| log_l[&(a, b)]);
    let rows = (0..lattice.len())
        .map(|c| {
            let cl = lattice.class(c);
            ClassScore {
                class: c,
                code: lattice.code(c),
                dim: cl.dim(),
                loglik: loglik[c],
                bic: bic(loglik[c], cl.dim(), n),
                sbic: sbic[c],
            }
        })
        .collect();
    Ok(ScoreTable { n, rows })
}

/// Result of scoring every class of a lattice.
#[derive(Debug, Clone)]
pub struct Selection {
    pub selected: usize,
    pub criterion: Criterion,
    pub table: ScoreTable,
    /// Forest each class was fitted on (host-indexed representative) and its fit.
    pub fits: Vec<(Forest, EmFit)>,
}

impl Selection {
    /// Winner under either criterion, with the same tie rules.
    pub fn best(&self, lattice: &ModelLattice, criterion: Criterion) -> usize {
        best_class(lattice, &self.table, criterion)
    }
}

pub fn best_class(lattice: &ModelLattice, table: &ScoreTable, criterion: Criterion) -> usize {
    let scores: Vec<f64> = (0..table.rows.len()).map(|c| table.score(c, criterion)).collect();
    let dims: Vec<usize> = table.rows.iter().map(|r| r.dim).collect();
    let keys: Vec<u64> = lattice.classes().iter().map(|c| c.canonical().hash()).collect();
    argmax_by(&scores, &dims, &keys)
}

/// Fits every class of `lattice` by EM on its minimal host representative.
/// Class `c` uses EM seed `derive_seed(cfg.seed, c)`.
pub fn fit_lattice(
    lattice: &ModelLattice,
    stats: &SufficientStats,
    cfg: &EmConfig,
) -> Result<Vec<(Forest, EmFit)>, SelectionError> {
    (0..lattice.len())
        .into_par_iter()
        .map(|c| {
            let f = lattice.representative(c);
            let cfg_c = EmConfig { seed: derive_seed(cfg.seed, c as u64), ..cfg.clone() };
            let fit = em_fit(&f, stats, &cfg_c)?;
            Ok((f, fit))
        })
        .collect()
}

/// Exhaustive selection on a lattice whose RLCTs may already be cached.
pub fn select_on_lattice(
    lattice: &ModelLattice,
    stats: &SufficientStats,
    criterion: Criterion,
    cfg: &EmConfig,
) -> Result<Selection, SelectionError> {
    let fits = fit_lattice(lattice, stats, cfg)?;
    let ll: Vec<f64> = fits.iter().map(|(_, f)| f.loglik).collect();
    let table = sbic_all(lattice, &ll, stats.n)?;
    let selected = best_class(lattice, &table, criterion);
    Ok(Selection { selected, criterion, table, fits })
}

/// Builds the lattice of `host`, fits and scores every class, and returns
/// the lattice with the selection.
pub fn select_exhaustive(
    host: &Forest,
    stats: &SufficientStats,
    criterion: Criterion,
    cfg: &EmConfig,
) -> Result<(ModelLattice, Selection), SelectionError> {
    let mut lattice = subforest_lattice(host)?;
    lattice.populate_rlcts()?;
    let sel = select_on_lattice(&lattice, stats, criterion, cfg)?;
    Ok((lattice, sel))
}
