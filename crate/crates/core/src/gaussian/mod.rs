//! The Gaussian latent forest model: path-product covariances, sampling,
//! likelihoods and the phase function `H_q`.

mod em;
mod io;

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Interval, MonomialSos, Term};
use crate::forest::Forest;

pub use em::{em_fit, em_fit_from, EmConfig, EmFit};
pub use io::{read_covariance_csv, read_samples_csv, write_samples_csv};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
    #[error("true correlation {rho} between {v} and {w} cannot be reached: they are disconnected in the model")]
    Unreachable { v: String, w: String, rho: f64 },
}

/// Leaf variances (observed order of the forest) and edge correlations
/// (edge order of the forest).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub leaf_var: Vec<f64>,
    pub edge_corr: Vec<f64>,
}

/// `{"leaf_var":{"1":1.0,..},"edge_corr":{"1--a":0.6,..}}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamsJson {
    pub leaf_var: BTreeMap<String, f64>,
    pub edge_corr: BTreeMap<String, f64>,
}

impl ModelParams {
    pub fn uniform(f: &Forest, var: f64, corr: f64) -> Self {
        ModelParams { leaf_var: vec![var; f.observed().len()], edge_corr: vec![corr; f.num_edges()] }
    }

    pub fn validate(&self, f: &Forest) -> Result<(), GaussianError> {
        if self.leaf_var.len() != f.observed().len() || self.edge_corr.len() != f.num_edges() {
            return Err(GaussianError::DimensionMismatch(format!(
                "{} variances and {} correlations for {} leaves and {} edges",
                self.leaf_var.len(),
                self.edge_corr.len(),
                f.observed().len(),
                f.num_edges()
            )));
        }
        if let Some(v) = self.leaf_var.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(GaussianError::InvalidParams(format!("variance {v}")));
        }
        if let Some(r) = self.edge_corr.iter().find(|&&r| !(r.abs() <= 1.0)) {
            return Err(GaussianError::InvalidParams(format!("correlation {r}")));
        }
        Ok(())
    }

    pub fn to_json(&self, f: &Forest) -> ParamsJson {
        let ids = f.observed_ids();
        ParamsJson {
            leaf_var: ids.iter().zip(&self.leaf_var).map(|(id, &v)| (id.to_string(), v)).collect(),
            edge_corr: f.edge_ids().iter().zip(&self.edge_corr).map(|((a, b), &r)| (format!("{a}--{b}"), r)).collect(),
        }
    }

    /// Edge keys may name the endpoints in either order.
    pub fn from_json(f: &Forest, j: &ParamsJson) -> Result<Self, GaussianError> {
        let mut leaf_var = Vec::new();
        for id in f.observed_ids() {
            let v = j.leaf_var.get(id).ok_or_else(|| GaussianError::InvalidParams(format!("no variance for {id}")))?;
            leaf_var.push(*v);
        }
        let mut edge_corr = Vec::new();
        for (a, b) in f.edge_ids() {
            let r = j
                .edge_corr
                .get(&format!("{a}--{b}"))
                .or_else(|| j.edge_corr.get(&format!("{b}--{a}")))
                .ok_or_else(|| GaussianError::InvalidParams(format!("no correlation for {a}--{b}")))?;
            edge_corr.push(*r);
        }
        let p = ModelParams { leaf_var, edge_corr };
        p.validate(f)?;
        Ok(p)
    }
}

/// Sample size and second-moment matrix over named observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: usize,
    pub s: DMatrix<f64>,
    pub ids: Vec<String>,
}

impl SufficientStats {
    /// The same statistics with rows and columns in the forest's observed order.
    pub fn aligned_to(&self, f: &Forest) -> Result<SufficientStats, GaussianError> {
        let target = f.observed_ids();
        if target.len() != self.ids.len() {
            return Err(GaussianError::DimensionMismatch(format!(
                "{} variables in the data, {} leaves in the forest",
                self.ids.len(),
                target.len()
            )));
        }
        let mut perm = Vec::with_capacity(target.len());
        for id in &target {
            let i = self
                .ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| GaussianError::DimensionMismatch(format!("leaf {id} missing from the data")))?;
            perm.push(i);
        }
        let k = perm.len();
        let s = DMatrix::from_fn(k, k, |i, j| self.s[(perm[i], perm[j])]);
        Ok(SufficientStats { n: self.n, s, ids: target.iter().map(|s| s.to_string()).collect() })
    }

    pub fn correlations(&self) -> DMatrix<f64> {
        let d: Vec<f64> = (0..self.s.nrows()).map(|i| self.s[(i, i)].sqrt()).collect();
        DMatrix::from_fn(self.s.nrows(), self.s.ncols(), |i, j| {
            if d[i] > 0.0 && d[j] > 0.0 {
                self.s[(i, j)] / (d[i] * d[j])
            } else {
                (i == j) as u8 as f64
            }
        })
    }
}

/// Correlations between all pairs of nodes, latent ones included, with unit
/// latent variances: products of edge correlations along paths.
pub fn node_correlations(f: &Forest, edge_corr: &[f64]) -> DMatrix<f64> {
    let n = f.num_nodes();
    let mut r = DMatrix::zeros(n, n);
    let mut stack = Vec::new();
    for s in 0..n {
        r[(s, s)] = 1.0;
        stack.push((s, usize::MAX, 1.0));
        while let Some((u, parent, val)) = stack.pop() {
            for &(v, e) in f.neighbors(u) {
                if v != parent {
                    let x = val * edge_corr[e];
                    r[(s, v)] = x;
                    stack.push((v, u, x));
                }
            }
        }
    }
    r
}

/// Covariance of the observed variables, in the forest's observed order.
pub fn covariance(f: &Forest, p: &ModelParams) -> DMatrix<f64> {
    let r = node_correlations(f, &p.edge_corr);
    let obs = f.observed();
    let sd: Vec<f64> = p.leaf_var.iter().map(|v| v.sqrt()).collect();
    DMatrix::from_fn(obs.len(), obs.len(), |i, j| r[(obs[i], obs[j])] * sd[i] * sd[j])
}

/// `n` draws from the model, one row each, deterministic in `seed`.
pub fn sample(f: &Forest, p: &ModelParams, n: usize, seed: u64) -> Result<DMatrix<f64>, GaussianError> {
    p.validate(f)?;
    sample_cov(&covariance(f, p), n, seed)
}

pub fn sample_cov(sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>, GaussianError> {
    let k = sigma.nrows();
    let l = Cholesky::new(sigma.clone()).ok_or(GaussianError::NotPositiveDefinite)?.unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    Ok(z * l.transpose())
}

/// Second moments `(1/n) sum x x^T`, or the covariance with denominator `n`
/// when `center` is set.
pub fn suff_stats(samples: &DMatrix<f64>, ids: &[String], center: bool) -> Result<SufficientStats, GaussianError> {
    let n = samples.nrows();
    if n == 0 {
        return Err(GaussianError::DimensionMismatch("no observations".into()));
    }
    if ids.len() != samples.ncols() {
        return Err(GaussianError::DimensionMismatch(format!("{} names for {} columns", ids.len(), samples.ncols())));
    }
    let mut x = samples.clone();
    if center {
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    let s = (x.transpose() * &x) / n as f64;
    Ok(SufficientStats { n, s, ids: ids.to_vec() })
}

/// Population statistics: `S` is exactly `sigma`.
pub fn suff_stats_from_cov(sigma: &DMatrix<f64>, n: usize, ids: &[String]) -> SufficientStats {
    SufficientStats { n, s: sigma.clone(), ids: ids.to_vec() }
}

/// Default observed ids `"1".."k"`.
pub fn default_ids(k: usize) -> Vec<String> {
    (1..=k).map(|i| i.to_string()).collect()
}

fn logdet_and_inverse(sigma: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>), GaussianError> {
    let ch = Cholesky::new(sigma.clone()).ok_or(GaussianError::NotPositiveDefinite)?;
    let logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok((logdet, ch.inverse()))
}

/// Centered Gaussian log-likelihood `-(n/2)(k ln 2pi + ln det Sigma + tr(Sigma^-1 S))`.
pub fn loglik(sigma: &DMatrix<f64>, stats: &SufficientStats) -> Result<f64, GaussianError> {
    let k = sigma.nrows();
    if stats.s.nrows() != k {
        return Err(GaussianError::DimensionMismatch(format!("{k} vs {}", stats.s.nrows())));
    }
    let (logdet, inv) = logdet_and_inverse(sigma)?;
    let tr = inv.component_mul(&stats.s).sum();
    Ok(-0.5 * stats.n as f64 * (k as f64 * LN_2PI + logdet + tr))
}

/// `KL(N(0, sigma_star) || N(0, sigma))`.
pub fn kl_divergence(sigma_star: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64, GaussianError> {
    let k = sigma.nrows();
    if sigma_star.nrows() != k {
        return Err(GaussianError::DimensionMismatch(format!("{} vs {k}", sigma_star.nrows())));
    }
    let (ld, inv) = logdet_and_inverse(sigma)?;
    let (ld_star, _) = logdet_and_inverse(sigma_star)?;
    let tr = inv.component_mul(sigma_star).sum();
    Ok(0.5 * (tr - k as f64 - (ld_star - ld)))
}

fn correlation_of(sigma_star: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    sigma_star[(i, j)] / (sigma_star[(i, i)] * sigma_star[(j, j)]).sqrt()
}

/// `sum_v (w_v - s_vv)^2 + sum_{v<w} (prod_path w_e - rho_vw)^2`, with the
/// product taken as zero for disconnected leaves.
pub fn h_q(f: &Forest, p: &ModelParams, sigma_star: &DMatrix<f64>) -> f64 {
    let r = node_correlations(f, &p.edge_corr);
    let obs = f.observed();
    let mut h = 0.0;
    for (i, &v) in obs.iter().enumerate() {
        h += (p.leaf_var[i] - sigma_star[(i, i)]).powi(2);
        for (j, &w) in obs.iter().enumerate().skip(i + 1) {
            h += (r[(v, w)] - correlation_of(sigma_star, i, j)).powi(2);
        }
    }
    h
}

/// `H_q` as a monomial system. Variables are the leaf variances (observed
/// order, on `[0, inf)`) followed by the edge correlations (edge order, on
/// `[-1, 1]`). Pairs of leaves in different components contribute a constant
/// and are left out; such a pair must have true correlation zero.
pub fn h_q_monomials(f: &Forest, sigma_star: &DMatrix<f64>) -> Result<MonomialSos, GaussianError> {
    let obs = f.observed();
    let k = obs.len();
    if sigma_star.nrows() != k {
        return Err(GaussianError::DimensionMismatch(format!("{} vs {k}", sigma_star.nrows())));
    }
    let dim = k + f.num_edges();
    let mut terms = Vec::new();
    for i in 0..k {
        let mut u = vec![0u32; dim];
        u[i] = 1;
        terms.push(Term { u, c: sigma_star[(i, i)] });
    }
    for i in 0..k {
        for j in i + 1..k {
            let rho = correlation_of(sigma_star, i, j);
            let rho = if rho.abs() < 1e-12 { 0.0 } else { rho };
            match f.path_edges(obs[i], obs[j]) {
                Some(path) => {
                    let mut u = vec![0u32; dim];
                    for e in path {
                        u[k + e] += 1;
                    }
                    terms.push(Term { u, c: rho });
                }
                None if rho == 0.0 => {}
                None => {
                    return Err(GaussianError::Unreachable {
                        v: f.node(obs[i]).id.clone(),
                        w: f.node(obs[j]).id.clone(),
                        rho,
                    })
                }
            }
        }
    }
    let mut domain = vec![Interval::new(0.0, f64::INFINITY); k];
    domain.extend(vec![Interval::new(-1.0, 1.0); f.num_edges()]);
    Ok(MonomialSos { dim, terms, domain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::fixtures::*;
    use crate::forest::{build_forest, Forest};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn five_leaf_path_powers() {
        let t = five_leaf();
        let sigma = covariance(&t, &ModelParams::uniform(&t, 1.0, 0.6));
        // leaves 1,2,3,4,5 in observed order
        assert!(close(sigma[(0, 1)], 0.1296, 1e-12));
        assert!(close(sigma[(0, 4)], 0.36, 1e-12));
        assert!(close(sigma[(0, 3)], 0.216, 1e-12));
        assert!(close(sigma[(1, 2)], 0.36, 1e-12));
        assert_eq!(sigma[(2, 2)], 1.0);
    }

    #[test]
    fn zero_edge_and_disconnected() {
        let q = quartet();
        let mut p = ModelParams::uniform(&q, 2.0, 0.5);
        p.edge_corr[2] = 0.0;
        let sigma = covariance(&q, &p);
        assert_eq!(sigma[(0, 2)], 0.0);
        assert!(close(sigma[(0, 1)], 0.5, 1e-12));
        let e = empty_on(&q);
        let s = covariance(&e, &ModelParams::uniform(&e, 1.0, 0.0));
        assert_eq!(s, DMatrix::identity(4, 4));
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = star(3);
        let p = ModelParams::uniform(&t, 1.0, 0.5);
        assert_eq!(sample(&t, &p, 0, 1).unwrap().nrows(), 0);
        assert_eq!(sample(&t, &p, 10, 7).unwrap(), sample(&t, &p, 10, 7).unwrap());
        assert_ne!(sample(&t, &p, 10, 7).unwrap(), sample(&t, &p, 10, 8).unwrap());
    }

    #[test]
    fn sample_covariance_converges() {
        let t = five_leaf();
        let p = ModelParams::uniform(&t, 1.0, 0.6);
        let sigma = covariance(&t, &p);
        let x = sample(&t, &p, 100_000, 11).unwrap();
        let st = suff_stats(&x, &default_ids(5), false).unwrap();
        assert!((st.s - sigma).abs().max() < 0.02);
    }

    #[test]
    fn stats_shortcuts() {
        let x = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let st = suff_stats(&x, &default_ids(2), false).unwrap();
        assert_eq!(st.s, DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 1.0]));
        let zeros = DMatrix::zeros(3, 2);
        assert_eq!(suff_stats(&zeros, &default_ids(2), true).unwrap().s, DMatrix::zeros(2, 2));
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        assert_eq!(suff_stats_from_cov(&sigma, 50, &default_ids(2)).s, sigma);
    }

    #[test]
    fn loglik_values() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let st = suff_stats_from_cov(&one, 2, &default_ids(1));
        assert!(close(loglik(&one, &st).unwrap(), -(LN_2PI + 1.0), 1e-12));
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let st = suff_stats_from_cov(&s, 10, &default_ids(2));
        let best = loglik(&s, &st).unwrap();
        let expected = -5.0 * (2.0 * LN_2PI + s.determinant().ln() + 2.0);
        assert!(close(best, expected, 1e-10));
        let other = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]);
        assert!(loglik(&other, &st).unwrap() < best);
        assert!(matches!(loglik(&DMatrix::zeros(2, 2), &st), Err(GaussianError::NotPositiveDefinite)));
    }

    #[test]
    fn kl_values() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 2.0);
        assert!(close(kl_divergence(&a, &a).unwrap(), 0.0, 1e-15));
        assert!(close(kl_divergence(&a, &b).unwrap(), 0.5 * (0.5 - 1.0 + 2f64.ln()), 1e-15));
        assert!(close(kl_divergence(&a, &b).unwrap(), 0.096_573_590_279_972_65, 1e-12));
        assert!(!close(kl_divergence(&a, &b).unwrap(), kl_divergence(&b, &a).unwrap(), 1e-6));
    }

    #[test]
    fn h_q_two_leaf_path() {
        let p = two_leaf_path();
        let id = DMatrix::identity(2, 2);
        let (x, y) = (0.3, -0.7);
        let params = ModelParams { leaf_var: vec![1.0, 1.0], edge_corr: vec![x, y] };
        assert!(close(h_q(&p, &params, &id), x * x * y * y, 1e-15));
    }

    #[test]
    fn h_q_three_star_segments() {
        let s = star(3);
        let id = DMatrix::identity(3, 3);
        for e in 0..3 {
            let mut corr = vec![0.0; 3];
            corr[e] = 0.8;
            let p = ModelParams { leaf_var: vec![1.0; 3], edge_corr: corr };
            assert_eq!(h_q(&s, &p, &id), 0.0);
        }
        let p = ModelParams { leaf_var: vec![1.0; 3], edge_corr: vec![0.5, 0.5, 0.0] };
        assert!(h_q(&s, &p, &id) > 0.0);
    }

    #[test]
    fn h_q_matches_its_monomials() {
        let t = five_leaf();
        let truth = ModelParams::uniform(&t, 1.5, 0.6);
        let sigma = covariance(&t, &truth);
        let m = h_q_monomials(&t, &sigma).unwrap();
        let p = ModelParams { leaf_var: vec![1.0, 2.0, 1.2, 0.7, 1.1], edge_corr: vec![0.1, -0.4, 0.9, 0.3, 0.5, -0.2, 0.6] };
        let mut w = p.leaf_var.clone();
        w.extend(&p.edge_corr);
        assert!(close(m.eval(&w), h_q(&t, &p, &sigma), 1e-12));
        assert!(close(h_q(&t, &truth, &sigma), 0.0, 1e-20));
    }

    #[test]
    fn params_json_round_trip() {
        let q = quartet();
        let p = ModelParams { leaf_var: vec![1.0, 2.0, 3.0, 4.0], edge_corr: vec![0.1, 0.2, 0.3, 0.4, 0.5] };
        let j = p.to_json(&q);
        assert_eq!(j.edge_corr["a--b"], 0.3);
        let s = serde_json::to_string(&j).unwrap();
        let back: ParamsJson = serde_json::from_str(&s).unwrap();
        assert_eq!(ModelParams::from_json(&q, &back).unwrap(), p);
        let mut swapped = j.clone();
        let v = swapped.edge_corr.remove("a--b").unwrap();
        swapped.edge_corr.insert("b--a".into(), v);
        assert_eq!(ModelParams::from_json(&q, &swapped).unwrap(), p);
    }

    #[test]
    fn aligned_stats_follow_forest_order() {
        let f: Forest = build_forest(&[("x", false), ("y", false)], &[("x", "y")]).unwrap();
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0]);
        let st = SufficientStats { n: 5, s, ids: vec!["y".into(), "x".into()] };
        let a = st.aligned_to(&f).unwrap();
        assert_eq!(a.s[(0, 0)], 3.0);
        assert_eq!(a.ids, vec!["x", "y"]);
    }
}
