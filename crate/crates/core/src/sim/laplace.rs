//! Numerical learning coefficients from the growth of
//! `Z_n = int exp(-n H(w)) dw`: `ln Z_n = -(lambda/2) ln n + (m-1) ln ln n + O(1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::derive_seed;
use crate::engine::MonomialSos;
use crate::forest::UnionFind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceConfig {
    pub n_grid: Vec<f64>,
    /// Relative tolerance of each adaptive quadrature.
    pub rel_tol: f64,
    /// Blocks up to this dimension use nested quadrature.
    pub max_quad_dim: usize,
    pub max_mc_dim: usize,
    pub mc_points: usize,
    pub max_intervals: usize,
    pub max_mult: u32,
    pub seed: u64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            n_grid: (0..9).map(|i| 10f64.powf(2.0 + 0.5 * i as f64)).collect(),
            rel_tol: 1e-8,
            max_quad_dim: 3,
            max_mc_dim: 10,
            mc_points: 1_000_000,
            max_intervals: 400,
            max_mult: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub lambda_hat: f64,
    pub mult_hat: u32,
    pub n_grid: Vec<f64>,
    pub log_z: Vec<f64>,
    /// Standard error of each `ln Z_n` (zero for pure quadrature).
    pub log_z_se: Vec<f64>,
    /// Residuals of the chosen fit, per grid point.
    pub residuals: Vec<f64>,
    /// Residual sum of squares for each candidate multiplicity `1..=max_mult`.
    pub rss_by_mult: Vec<f64>,
    pub method: IntegrationMethod,
}

/// Variables tied together by shared terms; `H` splits into a sum over
/// blocks, so `Z_n` is a product.
struct Block {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// (local exponents as (variable, power), target)
    terms: Vec<(Vec<(usize, i32)>, f64)>,
}

impl Block {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn h(&self, w: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(u, c)| {
                let m: f64 = u.iter().map(|&(j, p)| w[j].powi(p)).product();
                (m - c) * (m - c)
            })
            .sum()
    }

    /// Points where the integrand may peak along axis `j`: ends, zero, and
    /// roots of terms in that variable alone.
    fn breakpoints(&self, j: usize) -> Vec<f64> {
        let (lo, hi) = (self.lo[j], self.hi[j]);
        let mut b = vec![lo, hi];
        for k in 1..8 {
            b.push(lo + (hi - lo) * k as f64 / 8.0);
        }
        if lo < 0.0 && 0.0 < hi {
            b.push(0.0);
        }
        for (u, c) in &self.terms {
            if let [(v, p)] = u.as_slice() {
                if *v == j && *c != 0.0 {
                    let r = c.abs().powf(1.0 / *p as f64);
                    if *c > 0.0 || p % 2 == 1 {
                        let root = if *c < 0.0 { -r } else { r };
                        b.push(root);
                        if p % 2 == 0 {
                            b.push(-root);
                        }
                    }
                }
            }
        }
        b.retain(|x| *x >= lo && *x <= hi);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

fn blocks(h: &MonomialSos) -> Result<(Vec<Block>, f64), SimError> {
    let d = h.dim;
    let mut uf = UnionFind::new(d);
    let mut constant = 0.0;
    for t in &h.terms {
        let vars: Vec<usize> = (0..d).filter(|&j| t.u[j] > 0).collect();
        if vars.is_empty() {
            constant += (1.0 - t.c) * (1.0 - t.c);
        }
        for w in vars.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    if constant > 0.0 {
        return Err(SimError::IntegrationFailure("phase function has no zero".into()));
    }
    let used: Vec<bool> = (0..d).map(|j| h.terms.iter().any(|t| t.u[j] > 0)).collect();
    let mut roots: Vec<usize> = (0..d).filter(|&j| used[j]).map(|j| uf.find(j)).collect();
    roots.sort_unstable();
    roots.dedup();
    let mut log_free = 0.0;
    for (j, iv) in h.domain.iter().enumerate() {
        if !(iv.lo.is_finite() && iv.hi.is_finite()) {
            return Err(SimError::IntegrationFailure(format!("variable {j} has an unbounded range")));
        }
        if !used[j] {
            log_free += (iv.hi - iv.lo).ln();
        }
    }
    let mut out = Vec::new();
    for r in roots {
        let vars: Vec<usize> = (0..d).filter(|&j| used[j] && uf.find(j) == r).collect();
        let local = |j: usize| vars.iter().position(|&v| v == j).unwrap();
        let terms = h
            .terms
            .iter()
            .filter(|t| vars.iter().any(|&j| t.u[j] > 0))
            .map(|t| {
                let u = (0..d).filter(|&j| t.u[j] > 0).map(|j| (local(j), t.u[j] as i32)).collect();
                (u, t.c)
            })
            .collect();
        out.push(Block {
            lo: vars.iter().map(|&j| h.domain[j].lo).collect(),
            hi: vars.iter().map(|&j| h.domain[j].hi).collect(),
            terms,
        });
    }
    Ok((out, log_free))
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate with the embedded 7-point Gauss error.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive bisection starting from the given breakpoints.
fn adaptive(f: &dyn Fn(f64) -> f64, breaks: &[f64], rel_tol: f64, max_intervals: usize) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || parts.len() >= max_intervals {
            return total;
        }
        let (i, _) = parts.iter().enumerate().max_by(|a, b| a.1 .3.total_cmp(&b.1 .3)).unwrap();
        let (a, b, _, _) = parts.swap_remove(i);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return total;
        }
        for (x, y) in [(a, m), (m, b)] {
            let (v, e) = gk15(f, x, y);
            parts.push((x, y, v, e));
        }
    }
}

fn nested(block: &Block, n: f64, point: &mut Vec<f64>, cfg: &LaplaceConfig) -> f64 {
    let level = point.len();
    let breaks = block.breakpoints(level);
    let inner = |x: f64| {
        let mut p = point.clone();
        p.push(x);
        if p.len() == block.dim() {
            (-n * block.h(&p)).exp()
        } else {
            nested(block, n, &mut p, cfg)
        }
    };
    adaptive(&inner, &breaks, cfg.rel_tol, cfg.max_intervals)
}

/// Stratified uniform sampling with two points per cell; returns the
/// integral and its standard error.
fn monte_carlo(block: &Block, n: f64, points: usize, seed: u64) -> (f64, f64) {
    let d = block.dim();
    let s = ((points as f64 / 2.0).powf(1.0 / d as f64).floor() as usize).max(1);
    let cells = s.pow(d as u32);
    let width: Vec<f64> = (0..d).map(|j| (block.hi[j] - block.lo[j]) / s as f64).collect();
    let vol: f64 = width.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut var) = (0.0, 0.0);
    let mut w = vec![0.0; d];
    for cell in 0..cells {
        let mut vals = [0.0; 2];
        for v in &mut vals {
            let mut idx = cell;
            for j in 0..d {
                let k = idx % s;
                idx /= s;
                w[j] = block.lo[j] + width[j] * (k as f64 + rng.gen::<f64>());
            }
            *v = (-n * block.h(&w)).exp();
        }
        sum += vol * 0.5 * (vals[0] + vals[1]);
        // variance of the two-point cell mean
        var += vol * vol * 0.25 * (vals[0] - vals[1]).powi(2);
    }
    (sum, var.sqrt())
}

/// Least squares fit of `y = slope * x + c`; returns the slope, the
/// intercept and the residuals.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, Vec<f64>) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let c = my - slope * mx;
    let res = x.iter().zip(y).map(|(a, b)| b - slope * a - c).collect();
    (slope, c, res)
}

/// Estimates `(lambda, m)` of a monomial phase function on a bounded box by
/// integrating `exp(-n H)` over the grid of `n` and regressing `ln Z_n`.
/// For each candidate `m` the slope in `ln n` is fitted with `(m-1) ln ln n`
/// held fixed; the candidate with the smallest residual wins.
pub fn laplace_rlct_estimate(h: &MonomialSos, cfg: &LaplaceConfig) -> Result<LaplaceEstimate, SimError> {
    h.validate().map_err(|e| SimError::IntegrationFailure(e.to_string()))?;
    if cfg.n_grid.len() < 3 || cfg.n_grid.iter().any(|&n| !(n > std::f64::consts::E)) {
        return Err(SimError::IntegrationFailure("need at least 3 grid points above e".into()));
    }
    let (blocks, log_free) = blocks(h)?;
    if let Some(b) = blocks.iter().find(|b| b.dim() > cfg.max_mc_dim) {
        return Err(SimError::IntegrationFailure(format!("block of dimension {} is too large", b.dim())));
    }
    let method = if blocks.iter().all(|b| b.dim() <= cfg.max_quad_dim) {
        IntegrationMethod::Quadrature
    } else {
        IntegrationMethod::MonteCarlo
    };
    let per_n: Vec<(f64, f64)> = cfg
        .n_grid
        .par_iter()
        .enumerate()
        .map(|(gi, &n)| {
            let mut log_z = log_free;
            let mut rel_var = 0.0;
            for (bi, b) in blocks.iter().enumerate() {
                let (z, se) = if b.dim() <= cfg.max_quad_dim {
                    (nested(b, n, &mut Vec::new(), cfg), 0.0)
                } else {
                    monte_carlo(b, n, cfg.mc_points, derive_seed(cfg.seed, (bi as u64) << 32 | gi as u64))
                };
                if !(z > 0.0 && z.is_finite()) {
                    return Err(SimError::IntegrationFailure(format!("Z = {z} at n = {n}")));
                }
                log_z += z.ln();
                rel_var += (se / z).powi(2);
            }
            Ok((log_z, rel_var.sqrt()))
        })
        .collect::<Result<_, SimError>>()?;
    let log_z: Vec<f64> = per_n.iter().map(|p| p.0).collect();
    let log_z_se: Vec<f64> = per_n.iter().map(|p| p.1).collect();

    let x: Vec<f64> = cfg.n_grid.iter().map(|n| n.ln()).collect();
    let mut best: Option<(u32, f64, Vec<f64>)> = None;
    let mut rss_by_mult = Vec::new();
    for m in 1..=cfg.max_mult.max(1) {
        let y: Vec<f64> = log_z.iter().zip(&x).map(|(z, lx)| z - (m - 1) as f64 * lx.ln()).collect();
        let (slope, _, res) = line_fit(&x, &y);
        let rss: f64 = res.iter().map(|r| r * r).sum();
        rss_by_mult.push(rss);
        if best.as_ref().map_or(true, |b| rss < rss_by_mult[b.0 as usize - 1]) {
            best = Some((m, -2.0 * slope, res));
        }
    }
    let (mult_hat, lambda, residuals) = best.unwrap();
    Ok(LaplaceEstimate {
        lambda_hat: lambda.max(0.0),
        mult_hat,
        n_grid: cfg.n_grid.clone(),
        log_z,
        log_z_se,
        residuals,
        rss_by_mult,
        method,
    })
}
