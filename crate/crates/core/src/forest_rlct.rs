//! Closed-form learning coefficients for pairs of latent forest models.
//!
//! For a host forest and the minimal subforest `qf` carrying the
//! correlation pattern of the true distribution,
//! `lambda = dim(qf) + (1/2) * sum over removed edges of |e ∩ U*|`, where `U*`
//! is the node set of `qf`, and `mult = 1 + #(degree-2 host nodes outside U*)`.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::engine::{Interval, MonomialSos, Term};
use crate::forest::{model_dimension, Forest, ForestError, UnionFind};

/// Learning coefficient and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rlct {
    pub lambda: Ratio<i64>,
    pub mult: u32,
}

impl Rlct {
    pub fn new(lambda: Ratio<i64>, mult: u32) -> Self {
        Rlct { lambda, mult }
    }

    pub fn integer(lambda: i64, mult: u32) -> Self {
        Rlct { lambda: Ratio::from_integer(lambda), mult }
    }

    pub fn lambda_f64(&self) -> f64 {
        *self.lambda.numer() as f64 / *self.lambda.denom() as f64
    }
}

impl fmt::Display for Rlct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lambda={} mult={}", self.lambda, self.mult)
    }
}

#[derive(Debug, Error)]
pub enum RlctError {
    #[error("not a subforest of the host: {0}")]
    NotSubforest(String),
    #[error("observed nodes differ: {0}")]
    LeafMismatch(String),
    #[error("host has latent node {0} of degree at most one")]
    InvalidHost(String),
    #[error("latent node {0} is a leaf of the subforest, so it is not a minimal pattern forest")]
    NotMinimal(String),
    #[error("class {0} is not below class {1}")]
    NotComparable(usize, usize),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Host-indexed view of a validated `(host, qf)` pair.
struct Pair {
    /// Node of the host that also lies in `qf`.
    in_sub: Vec<bool>,
    /// Host edge not present in `qf`.
    removed: Vec<bool>,
}

fn check_pair(host: &Forest, qf: &Forest) -> Result<Pair, RlctError> {
    let mut host_obs: Vec<&str> = host.observed_ids();
    let mut sub_obs: Vec<&str> = qf.observed_ids();
    host_obs.sort_unstable();
    sub_obs.sort_unstable();
    if host_obs != sub_obs {
        return Err(RlctError::LeafMismatch(format!("host {host_obs:?}, subforest {sub_obs:?}")));
    }
    for u in 0..host.num_nodes() {
        if host.is_latent(u) && host.degree(u) <= 1 {
            return Err(RlctError::InvalidHost(host.node(u).id.clone()));
        }
    }
    let mut in_sub = vec![false; host.num_nodes()];
    for (i, n) in qf.nodes().iter().enumerate() {
        let h = host
            .index_of(&n.id)
            .ok_or_else(|| RlctError::NotSubforest(format!("unknown node {}", n.id)))?;
        if host.is_latent(h) != n.latent {
            return Err(RlctError::NotSubforest(format!("node {} changes its latent flag", n.id)));
        }
        if n.latent && qf.degree(i) == 0 {
            continue;
        }
        if n.latent && qf.degree(i) == 1 {
            return Err(RlctError::NotMinimal(n.id.clone()));
        }
        in_sub[h] = true;
    }
    let mut removed = vec![true; host.num_edges()];
    for (a, b) in qf.edge_ids() {
        let e = host
            .edge_between(host.index_of(a).unwrap(), host.index_of(b).unwrap())
            .ok_or_else(|| RlctError::NotSubforest(format!("edge {a}--{b} is not a host edge")))?;
        removed[e] = false;
    }
    Ok(Pair { in_sub, removed })
}

/// Learning coefficient of the host model at a true distribution whose
/// minimal pattern forest is `qf`. Linear in the size of the host.
///
/// The multiplicity counts every latent degree-2 host node outside `qf`.
/// On hosts where such a node sits between two branching nodes the Newton
/// polyhedron gives a smaller multiplicity; use `rlct_monomial_sos` on the
/// zero part there. Canonical hosts have no degree-2 nodes and agree exactly.
pub fn rlct_forest_pair(host: &Forest, qf: &Forest) -> Result<Rlct, RlctError> {
    let pair = check_pair(host, qf)?;
    let mut half_units: i64 = 2 * model_dimension(qf) as i64;
    for (e, &(u, v)) in host.edges().iter().enumerate() {
        if pair.removed[e] {
            half_units += pair.in_sub[u] as i64 + pair.in_sub[v] as i64;
        }
    }
    let outside_deg2 = (0..host.num_nodes())
        .filter(|&u| !pair.in_sub[u] && host.degree(u) == 2)
        .count();
    Ok(Rlct::new(Ratio::new(half_units, 2), 1 + outside_deg2 as u32))
}

/// A connected piece of the removed edges, glued only through nodes outside
/// the subforest, together with its nodes that lie in the subforest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    /// Host edge indices, ascending.
    pub edges: Vec<usize>,
    /// Host node indices lying in the subforest, ascending.
    pub leaves: Vec<usize>,
}

/// Splits the removed edges into subtrees. Pieces meet only at subforest
/// nodes, so the leaf counts add up to the total edge weight.
pub fn subtree_decomposition(host: &Forest, qf: &Forest) -> Result<Vec<Subtree>, RlctError> {
    let pair = check_pair(host, qf)?;
    Ok(decompose(host, &pair))
}

fn decompose(host: &Forest, pair: &Pair) -> Vec<Subtree> {
    let m = host.num_edges();
    let mut uf = UnionFind::new(m);
    for u in 0..host.num_nodes() {
        if pair.in_sub[u] {
            continue;
        }
        let incident: Vec<usize> = host.neighbors(u).iter().map(|&(_, e)| e).collect();
        for w in incident.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut pieces: Vec<(usize, Subtree)> = Vec::new();
    for e in (0..m).filter(|&e| pair.removed[e]) {
        let root = uf.find(e);
        let idx = match pieces.iter().position(|(r, _)| *r == root) {
            Some(i) => i,
            None => {
                pieces.push((root, Subtree { edges: Vec::new(), leaves: Vec::new() }));
                pieces.len() - 1
            }
        };
        let st = &mut pieces[idx].1;
        st.edges.push(e);
        let (u, v) = host.edges()[e];
        for x in [u, v] {
            if pair.in_sub[x] && !st.leaves.contains(&x) {
                st.leaves.push(x);
            }
        }
    }
    pieces
        .into_iter()
        .map(|(_, mut st)| {
            st.leaves.sort_unstable();
            st
        })
        .collect()
}

/// The reduced zero part: one path monomial per pair of leaves inside each
/// subtree, all targets zero, variables the removed edges in host order,
/// each on `[-1, 1]`.
pub fn zero_part_monomials(host: &Forest, qf: &Forest) -> Result<MonomialSos, RlctError> {
    let pair = check_pair(host, qf)?;
    let vars: Vec<usize> = (0..host.num_edges()).filter(|&e| pair.removed[e]).collect();
    let mut col = vec![usize::MAX; host.num_edges()];
    for (j, &e) in vars.iter().enumerate() {
        col[e] = j;
    }
    let mut terms = Vec::new();
    for st in decompose(host, &pair) {
        for (i, &a) in st.leaves.iter().enumerate() {
            for &b in &st.leaves[i + 1..] {
                let path = host.path_edges(a, b).expect("leaves of one subtree are connected");
                let mut u = vec![0u32; vars.len()];
                for e in path {
                    u[col[e]] += 1;
                }
                terms.push(Term { u, c: 0.0 });
            }
        }
    }
    Ok(MonomialSos { dim: vars.len(), terms, domain: vec![Interval::new(-1.0, 1.0); vars.len()] })
}
