use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GaussianError, ModelParams, SufficientStats, LN_2PI};
use crate::derive_seed;
use crate::forest::Forest;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub corr_clamp: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iter: 2000, rel_tol: 1e-9, restarts: 5, seed: 0, corr_clamp: 1e-9 }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<(), GaussianError> {
        if self.max_iter < 1 || !(self.rel_tol > 0.0) || self.restarts < 1 || !(self.corr_clamp > 0.0 && self.corr_clamp < 1.0) {
            return Err(GaussianError::InvalidParams(format!("bad EM configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: ModelParams,
    pub loglik: f64,
    /// Iterations of the slowest component in its best restart.
    pub iters: usize,
    /// False when some component stopped at `max_iter`.
    pub converged: bool,
    /// Observed log-likelihood per iteration of the returned fit.
    pub trace: Vec<f64>,
}

/// Maximum likelihood by EM with random restarts.
pub fn em_fit(f: &Forest, stats: &SufficientStats, cfg: &EmConfig) -> Result<EmFit, GaussianError> {
    em_fit_from(f, stats, cfg, None)
}

/// As [`em_fit`]; `init` (edge correlations in forest order) replaces the
/// random start of the first restart.
pub fn em_fit_from(
    f: &Forest,
    stats: &SufficientStats,
    cfg: &EmConfig,
    init: Option<&[f64]>,
) -> Result<EmFit, GaussianError> {
    cfg.validate()?;
    let stats = stats.aligned_to(f)?;
    if let Some(init) = init {
        if init.len() != f.num_edges() {
            return Err(GaussianError::DimensionMismatch(format!("{} initial correlations", init.len())));
        }
    }
    let obs = f.observed();
    let mut obs_pos = vec![usize::MAX; f.num_nodes()];
    for (i, &v) in obs.iter().enumerate() {
        obs_pos[v] = i;
    }
    let leaf_var: Vec<f64> = (0..obs.len()).map(|i| stats.s[(i, i)]).collect();
    let mut edge_corr = vec![0.0; f.num_edges()];
    let mut total = 0.0;
    let mut iters = 0;
    let mut converged = true;
    let mut traces: Vec<Vec<f64>> = Vec::new();

    for (ci, comp) in f.components().into_iter().enumerate() {
        let block = Block::new(f, &comp, &obs_pos, &stats);
        if block.obs.is_empty() {
            continue;
        }
        let mut best: Option<Run> = None;
        for r in 0..cfg.restarts {
            let start: Vec<f64> = match init {
                Some(init) if r == 0 => block
                    .edges
                    .iter()
                    .map(|&(e, _, _)| {
                        let w = init[e].clamp(-1.0 + cfg.corr_clamp, 1.0 - cfg.corr_clamp);
                        if w.abs() < 0.05 {
                            0.05f64.copysign(w)
                        } else {
                            w
                        }
                    })
                    .collect(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, (ci as u64) << 32 | r as u64));
                    block
                        .edges
                        .iter()
                        .map(|_| {
                            let m: f64 = rng.gen_range(0.1..0.9);
                            if rng.gen::<bool>() {
                                m
                            } else {
                                -m
                            }
                        })
                        .collect()
                }
            };
            match block.run(start, stats.n, cfg) {
                Ok(run) => {
                    if best.as_ref().map_or(true, |b| run.loglik > b.loglik) {
                        best = Some(run);
                    }
                }
                Err(GaussianError::NotPositiveDefinite) => continue,
                Err(e) => return Err(e),
            }
        }
        let run = best.ok_or(GaussianError::NotPositiveDefinite)?;
        for (k, &(e, _, _)) in block.edges.iter().enumerate() {
            edge_corr[e] = run.corr[k];
        }
        total += run.loglik;
        iters = iters.max(run.iters);
        converged &= run.converged;
        traces.push(run.trace);
    }

    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let trace = (0..len)
        .map(|i| traces.iter().map(|t| t[i.min(t.len() - 1)]).sum())
        .collect();
    Ok(EmFit { params: ModelParams { leaf_var, edge_corr }, loglik: total, iters, converged, trace })
}

struct Run {
    corr: Vec<f64>,
    loglik: f64,
    iters: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// One connected component in local coordinates.
struct Block {
    /// Local indices of observed and latent nodes.
    obs: Vec<usize>,
    lat: Vec<usize>,
    /// (global edge, local u, local v).
    edges: Vec<(usize, usize, usize)>,
    /// Local adjacency: (neighbor, position in `edges`).
    adj: Vec<Vec<(usize, usize)>>,
    s: DMatrix<f64>,
    sd: Vec<f64>,
}

impl Block {
    fn new(f: &Forest, comp: &[usize], obs_pos: &[usize], stats: &SufficientStats) -> Block {
        let mut local = std::collections::HashMap::new();
        for (i, &u) in comp.iter().enumerate() {
            local.insert(u, i);
        }
        let obs: Vec<usize> = (0..comp.len()).filter(|&i| !f.is_latent(comp[i])).collect();
        let lat: Vec<usize> = (0..comp.len()).filter(|&i| f.is_latent(comp[i])).collect();
        let mut edges = Vec::new();
        let mut adj = vec![Vec::new(); comp.len()];
        for (e, &(u, v)) in f.edges().iter().enumerate() {
            if let (Some(&a), Some(&b)) = (local.get(&u), local.get(&v)) {
                adj[a].push((b, edges.len()));
                adj[b].push((a, edges.len()));
                edges.push((e, a, b));
            }
        }
        let k = obs.len();
        let gpos: Vec<usize> = obs.iter().map(|&i| obs_pos[comp[i]]).collect();
        let mut s = DMatrix::from_fn(k, k, |i, j| stats.s[(gpos[i], gpos[j])]);
        if Cholesky::new(s.clone()).is_none() {
            let scale = (s.trace() / k as f64).max(1e-12);
            let mut ridge = 1e-8;
            while Cholesky::new(s.clone() + DMatrix::identity(k, k) * (ridge * scale)).is_none() && ridge < 1.0 {
                ridge *= 10.0;
            }
            s += DMatrix::identity(k, k) * (ridge * scale);
        }
        let sd = (0..k).map(|i| s[(i, i)].sqrt()).collect();
        Block { obs, lat, edges, adj, s, sd }
    }

    fn correlations(&self, corr: &[f64]) -> DMatrix<f64> {
        let n = self.adj.len();
        let mut r = DMatrix::zeros(n, n);
        let mut stack = Vec::new();
        for s in 0..n {
            r[(s, s)] = 1.0;
            stack.push((s, usize::MAX, 1.0));
            while let Some((u, parent, val)) = stack.pop() {
                for &(v, k) in &self.adj[u] {
                    if v != parent {
                        let x = val * corr[k];
                        r[(s, v)] = x;
                        stack.push((v, u, x));
                    }
                }
            }
        }
        r
    }

    /// Observed covariance and the expected complete-data second moments.
    fn step(&self, corr: &[f64], n: usize) -> Result<(f64, DMatrix<f64>), GaussianError> {
        let r = self.correlations(corr);
        let k = self.obs.len();
        let h = self.lat.len();
        let sig_oo = DMatrix::from_fn(k, k, |i, j| r[(self.obs[i], self.obs[j])] * self.sd[i] * self.sd[j]);
        let ch = Cholesky::new(sig_oo).ok_or(GaussianError::NotPositiveDefinite)?;
        let logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let inv = ch.inverse();
        let ll = -0.5 * n as f64 * (k as f64 * LN_2PI + logdet + inv.component_mul(&self.s).sum());

        let nn = self.adj.len();
        let mut m = DMatrix::zeros(nn, nn);
        for i in 0..k {
            for j in 0..k {
                m[(self.obs[i], self.obs[j])] = self.s[(i, j)];
            }
        }
        if h > 0 {
            let sig_ho = DMatrix::from_fn(h, k, |a, j| r[(self.lat[a], self.obs[j])] * self.sd[j]);
            let sig_hh = DMatrix::from_fn(h, h, |a, b| r[(self.lat[a], self.lat[b])]);
            let gain = &sig_ho * &inv;
            let m_ho = &gain * &self.s;
            let m_hh = sig_hh - &gain * sig_ho.transpose() + &m_ho * gain.transpose();
            for a in 0..h {
                for j in 0..k {
                    m[(self.lat[a], self.obs[j])] = m_ho[(a, j)];
                    m[(self.obs[j], self.lat[a])] = m_ho[(a, j)];
                }
                for b in 0..h {
                    m[(self.lat[a], self.lat[b])] = m_hh[(a, b)];
                }
            }
        }
        Ok((ll, m))
    }

    fn run(&self, mut corr: Vec<f64>, n: usize, cfg: &EmConfig) -> Result<Run, GaussianError> {
        let bound = 1.0 - cfg.corr_clamp;
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = self.edges.is_empty();
        let mut iters = 0;
        let mut ll;
        loop {
            let (cur, m) = self.step(&corr, n)?;
            ll = cur;
            if let Some(&prev) = trace.last() {
                if (cur - prev).abs() <= cfg.rel_tol * cur.abs().max(1.0) {
                    trace.push(cur);
                    converged = true;
                    break;
                }
            }
            trace.push(cur);
            if self.edges.is_empty() || iters == cfg.max_iter {
                break;
            }
            for (k, &(_, u, v)) in self.edges.iter().enumerate() {
                corr[k] = (m[(u, v)] / (m[(u, u)] * m[(v, v)]).sqrt()).clamp(-bound, bound);
            }
            iters += 1;
        }
        Ok(Run { corr, loglik: ll, iters, converged, trace })
    }
}
