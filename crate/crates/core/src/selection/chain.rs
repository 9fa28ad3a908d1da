use std::collections::HashSet;

use serde::Serialize;

use super::{argmax_by, bic, log_lprime, sbic_scores, ClassScore, ScoreTable, SelectionError};
use crate::derive_seed;
use crate::forest::{canonicalize, model_dimension, steiner_subforest, CanonicalForest, Forest};
use crate::forest_rlct::rlct_forest_pair;
use crate::gaussian::{em_fit, em_fit_from, EmConfig, EmFit, SufficientStats};

#[derive(Debug, Clone)]
pub struct ChainStep {
    pub forest: CanonicalForest,
    pub fit: EmFit,
}

/// A decreasing chain from the canonical host down to the empty forest,
/// scored as a totally ordered lattice.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub steps: Vec<ChainStep>,
    /// Row `i` scores `steps[i]`; codes are canonical keys.
    pub table: ScoreTable,
    pub selected_sbic: usize,
    pub selected_bic: usize,
}

#[derive(Serialize)]
struct ChainJson<'a> {
    n: usize,
    selected_sbic: usize,
    selected_bic: usize,
    rows: &'a [ClassScore],
}

impl ChainResult {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_json(&self) -> String {
        let j = ChainJson {
            n: self.table.n,
            selected_sbic: self.selected_sbic,
            selected_bic: self.selected_bic,
            rows: &self.table.rows,
        };
        serde_json::to_string_pretty(&j).expect("chain json")
    }
}

/// Parent correlations multiplied along the source paths of each canonical
/// edge. `removed` is the parent edge deleted before canonicalizing.
fn warm_start(child: &CanonicalForest, parent_corr: &[f64], removed: usize) -> Vec<f64> {
    child
        .edge_origin()
        .iter()
        .map(|path| path.iter().map(|&g| parent_corr[if g < removed { g } else { g + 1 }]).product())
        .collect()
}

/// Greedy chain: from the current forest, try every single-edge removal,
/// canonicalize, fit with a warm start, and keep the candidate with the
/// largest BIC. Repeats until no edge is left, then scores the chain.
pub fn pruned_chain(host: &Forest, stats: &SufficientStats, cfg: &EmConfig) -> Result<ChainResult, SelectionError> {
    let n = stats.n;
    let top = canonicalize(host);
    let top_fit = em_fit(top.forest(), stats, &EmConfig { seed: derive_seed(cfg.seed, 0), ..cfg.clone() })?;
    let mut steps = vec![ChainStep { forest: top, fit: top_fit }];

    loop {
        let cur = steps.last().unwrap();
        let f = cur.forest.forest();
        if f.num_edges() == 0 {
            break;
        }
        let step_seed = derive_seed(cfg.seed, steps.len() as u64);
        let mut seen = HashSet::new();
        let mut cands: Vec<(CanonicalForest, usize)> = Vec::new();
        for e in 0..f.num_edges() {
            let c = canonicalize(&f.edge_subforest(|i| i != e));
            if seen.insert(c.key().to_string()) {
                cands.push((c, e));
            }
        }
        let fits: Vec<EmFit> = {
            use rayon::prelude::*;
            cands
                .par_iter()
                .enumerate()
                .map(|(i, (c, e))| {
                    let init = warm_start(c, &cur.fit.params.edge_corr, *e);
                    let cfg_i = EmConfig { seed: derive_seed(step_seed, i as u64), ..cfg.clone() };
                    em_fit_from(c.forest(), stats, &cfg_i, Some(&init))
                })
                .collect::<Result<_, _>>()?
        };
        let dims: Vec<usize> = cands.iter().map(|(c, _)| model_dimension(c.forest())).collect();
        let scores: Vec<f64> = fits.iter().zip(&dims).map(|(fit, &d)| bic(fit.loglik, d, n)).collect();
        let keys: Vec<u64> = cands.iter().map(|(c, _)| c.hash()).collect();
        let best = argmax_by(&scores, &dims, &keys);
        let (forest, _) = cands.swap_remove(best);
        let fit = fits.into_iter().nth(best).unwrap();
        steps.push(ChainStep { forest, fit });
    }

    let len = steps.len();
    let order: Vec<usize> = (0..len).rev().collect();
    let below: Vec<Vec<usize>> = (0..len).map(|i| (i + 1..len).collect()).collect();
    let mut log_l = vec![vec![f64::NAN; len]; len];
    for sup in 0..len {
        let sf = steps[sup].forest.forest();
        for sub in sup..len {
            let qf = steiner_subforest(sf, &steps[sub].forest)?;
            let r = rlct_forest_pair(sf, &qf)?;
            log_l[sub][sup] = log_lprime(steps[sup].fit.loglik, &r, n);
        }
    }
    let sbic = sbic_scores(&order, &below, |a, b| log_l[a][b]);
    let rows: Vec<ClassScore> = steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dim = model_dimension(s.forest.forest());
            ClassScore {
                class: i,
                code: s.forest.key().to_string(),
                dim,
                loglik: s.fit.loglik,
                bic: bic(s.fit.loglik, dim, n),
                sbic: sbic[i],
            }
        })
        .collect();
    let dims: Vec<usize> = rows.iter().map(|r| r.dim).collect();
    let keys: Vec<u64> = steps.iter().map(|s| s.forest.hash()).collect();
    let selected_bic = argmax_by(&rows.iter().map(|r| r.bic).collect::<Vec<_>>(), &dims, &keys);
    let selected_sbic = argmax_by(&sbic, &dims, &keys);
    Ok(ChainResult { steps, table: ScoreTable { n, rows }, selected_sbic, selected_bic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::fixtures::*;
    use crate::gaussian::{default_ids, sample, suff_stats, ModelParams};

    fn cfg() -> EmConfig {
        EmConfig { restarts: 2, ..Default::default() }
    }

    #[test]
    fn independent_data_select_empty() {
        let host = star(3);
        let x = sample(&host, &ModelParams::uniform(&host, 1.0, 0.0), 300, 11).unwrap();
        let stats = suff_stats(&x, &default_ids(3), false).unwrap();
        let ch = pruned_chain(&host, &stats, &cfg()).unwrap();
        let last = ch.len() - 1;
        assert_eq!(ch.steps[last].forest.forest().num_edges(), 0);
        assert_eq!(ch.selected_bic, last);
        assert_eq!(ch.selected_sbic, last);
        assert_eq!(ch.table.rows[last].sbic, ch.table.rows[last].bic);
    }

    #[test]
    fn strong_data_select_host() {
        let host = five_leaf();
        let x = sample(&host, &ModelParams::uniform(&host, 1.0, 0.9), 2000, 5).unwrap();
        let stats = suff_stats(&x, &default_ids(5), false).unwrap();
        let ch = pruned_chain(&host, &stats, &cfg()).unwrap();
        assert_eq!(ch.selected_bic, 0);
        assert_eq!(ch.selected_sbic, 0);
    }

    #[test]
    fn chain_strictly_decreases() {
        let host = five_leaf();
        let mut p = ModelParams::uniform(&host, 1.0, 0.5);
        p.edge_corr[2] = 0.0;
        let x = sample(&host, &p, 200, 9).unwrap();
        let stats = suff_stats(&x, &default_ids(5), true).unwrap();
        let ch = pruned_chain(&host, &stats, &cfg()).unwrap();
        for w in ch.steps.windows(2) {
            let (big, small) = (w[0].forest.forest(), w[1].forest.forest());
            assert!(model_dimension(small) < model_dimension(big));
            assert!(steiner_subforest(big, &w[1].forest).is_ok());
        }
        for r in &ch.table.rows {
            assert!(r.sbic >= r.bic - 1e-9 * r.bic.abs());
        }
        assert!(ch.to_json().contains("selected_sbic"));
    }
}
