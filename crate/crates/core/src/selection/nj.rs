use nalgebra::DMatrix;

use super::SelectionError;
use crate::forest::{Forest, Node};
use crate::gaussian::{em_fit, EmConfig, SufficientStats};

const CORR_FLOOR: f64 = 1e-3;

/// Prefix for new latent ids that no observed id starts with.
fn latent_prefix(ids: &[String]) -> String {
    let mut p = "h".to_string();
    while ids.iter().any(|id| id.starts_with(&p)) {
        p.insert(0, '_');
    }
    p
}

/// Unrooted binary topology by neighbor joining on a leaf distance matrix.
/// Leaves keep the order of `ids`; latent nodes follow in creation order.
pub fn neighbor_joining(dist: &DMatrix<f64>, ids: &[String]) -> Result<Forest, SelectionError> {
    let k = ids.len();
    if k < 3 {
        return Err(SelectionError::TooFewLeaves(k));
    }
    if dist.nrows() != k || dist.ncols() != k {
        return Err(SelectionError::Invalid(format!("{}x{} distances for {k} leaves", dist.nrows(), dist.ncols())));
    }
    let prefix = latent_prefix(ids);
    let mut nodes: Vec<Node> = ids.iter().map(Node::observed).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut active: Vec<usize> = (0..k).collect();
    let mut d: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| dist[(i, j)]).collect()).collect();

    while active.len() > 3 {
        let r = active.len();
        let sums: Vec<f64> = d.iter().map(|row| row.iter().sum()).collect();
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..r {
            for j in i + 1..r {
                let q = (r as f64 - 2.0) * d[i][j] - sums[i] - sums[j];
                if q < best.0 {
                    best = (q, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let u = nodes.len();
        nodes.push(Node::latent(format!("{prefix}{}", u - k + 1)));
        edges.push((u, active[i]));
        edges.push((u, active[j]));
        let du: Vec<f64> = (0..r).map(|m| 0.5 * (d[i][m] + d[j][m] - d[i][j])).collect();
        let keep: Vec<usize> = (0..r).filter(|&m| m != i && m != j).collect();
        let mut nd: Vec<Vec<f64>> = keep.iter().map(|&a| keep.iter().map(|&b| d[a][b]).collect()).collect();
        for (row, &a) in nd.iter_mut().zip(&keep) {
            row.push(du[a]);
        }
        let mut last: Vec<f64> = keep.iter().map(|&a| du[a]).collect();
        last.push(0.0);
        nd.push(last);
        d = nd;
        active = keep.iter().map(|&a| active[a]).chain(std::iter::once(u)).collect();
    }
    let c = nodes.len();
    nodes.push(Node::latent(format!("{prefix}{}", c - k + 1)));
    for &a in &active {
        edges.push((c, a));
    }
    Ok(Forest::from_indices(nodes, edges)?)
}

/// The two nearest-neighbor interchanges around the internal edge `e`.
fn nni_moves(t: &Forest, e: usize) -> Vec<Forest> {
    let (u, v) = t.edges()[e];
    let side = |x: usize, other: usize| -> Vec<(usize, usize)> {
        t.neighbors(x).iter().copied().filter(|&(y, _)| y != other).collect()
    };
    let (us, vs) = (side(u, v), side(v, u));
    if us.len() != 2 || vs.len() != 2 {
        return Vec::new();
    }
    let (b, eb) = us[1];
    let mut out = Vec::with_capacity(2);
    for &(c, ec) in &vs {
        let mut edges = t.edges().to_vec();
        edges[eb] = (v, b);
        edges[ec] = (u, c);
        out.push(Forest::from_indices(t.nodes().to_vec(), edges).expect("interchange keeps a tree"));
    }
    out
}

/// Trivalent tree on the observed variables: neighbor joining on
/// `-ln clamp(|r|, 1e-3, 1)` followed by one pass of nearest-neighbor
/// interchanges, each kept only if it raises the EM log-likelihood.
pub fn initial_tree(stats: &SufficientStats, cfg: &EmConfig) -> Result<Forest, SelectionError> {
    let k = stats.ids.len();
    if k < 3 {
        return Err(SelectionError::TooFewLeaves(k));
    }
    let r = stats.correlations();
    let dist = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { -r[(i, j)].abs().clamp(CORR_FLOOR, 1.0).ln() });
    let mut tree = neighbor_joining(&dist, &stats.ids)?;
    let mut best = em_fit(&tree, stats, cfg)?.loglik;
    for e in 0..tree.num_edges() {
        let (u, v) = tree.edges()[e];
        if !(tree.is_latent(u) && tree.is_latent(v)) {
            continue;
        }
        for cand in nni_moves(&tree, e) {
            let ll = em_fit(&cand, stats, cfg)?.loglik;
            if ll > best + 1e-9 * best.abs().max(1.0) {
                best = ll;
                tree = cand;
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::fixtures::*;
    use crate::forest::{canonicalize, steiner_subforest};
    use crate::gaussian::{covariance, default_ids, suff_stats_from_cov, ModelParams};

    #[test]
    fn three_leaves_give_the_star() {
        let ids = default_ids(3);
        let d = DMatrix::from_element(3, 3, 1.0);
        let t = neighbor_joining(&d, &ids).unwrap();
        assert_eq!(canonicalize(&t), canonicalize(&star(3)));
        assert!(matches!(neighbor_joining(&d.view((0, 0), (2, 2)).into(), &ids[..2]), Err(SelectionError::TooFewLeaves(2))));
    }

    #[test]
    fn additive_distances_recover_five_leaf_topology() {
        let host = five_leaf();
        let p = ModelParams { leaf_var: vec![1.0; 5], edge_corr: vec![0.6, 0.5, 0.7, 0.6, 0.55, 0.65, 0.6] };
        let stats = suff_stats_from_cov(&covariance(&host, &p), 1000, &default_ids(5));
        let t = initial_tree(&stats, &EmConfig { restarts: 1, ..Default::default() }).unwrap();
        assert_eq!(canonicalize(&t), canonicalize(&host));
        assert!((0..t.num_nodes()).filter(|&u| t.is_latent(u)).all(|u| t.degree(u) == 3));
    }

    #[test]
    fn duplicated_columns_form_a_cherry() {
        let ids = default_ids(5);
        // leaf 5 duplicates leaf 2: zero distance between them, equal distances elsewhere
        let base = |i: usize, j: usize| 1.0 + 0.3 * (i + j) as f64;
        let col = |i: usize| if i == 4 { 1 } else { i };
        let dist = DMatrix::from_fn(5, 5, |i, j| if col(i) == col(j) { 0.0 } else { base(col(i), col(j)) });
        let t = neighbor_joining(&dist, &ids).unwrap();
        let a = t.neighbors(t.index_of("2").unwrap())[0].0;
        let b = t.neighbors(t.index_of("5").unwrap())[0].0;
        assert_eq!(a, b);
    }

    #[test]
    fn latent_names_avoid_observed_ids() {
        let ids: Vec<String> = vec!["h1".into(), "h2".into(), "x".into(), "y".into()];
        let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 + (i + j) as f64 });
        let t = neighbor_joining(&d, &ids).unwrap();
        assert_eq!(t.num_nodes(), 6);
        assert!(t.nodes().iter().filter(|n| n.latent).all(|n| n.id.starts_with("_h")));
        let _ = steiner_subforest(&t, &canonicalize(&t)).unwrap();
    }
}
