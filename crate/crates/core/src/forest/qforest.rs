use std::collections::BTreeSet;

use super::{canonicalize, CanonicalForest, Forest, ForestError, UnionFind};

/// The minimal subforest of `host` realizing a correlation pattern.
///
/// `correlated_pairs` lists every pair of observed nodes with nonzero
/// correlation; all other pairs are uncorrelated. The result keeps every
/// observed node, the union of host paths between correlated pairs, and the
/// latent nodes those paths touch. Edges keep their host order and node ids.
pub fn q_forest<S: AsRef<str>>(host: &Forest, correlated_pairs: &[(S, S)]) -> Result<Forest, ForestError> {
    let mut pairs = Vec::with_capacity(correlated_pairs.len());
    for (a, b) in correlated_pairs {
        let (a, b) = (a.as_ref(), b.as_ref());
        let u = observed_index(host, a)?;
        let v = observed_index(host, b)?;
        if u == v {
            return Err(ForestError::UnrealizablePattern(format!("pair ({a}, {a}) is not a pair")));
        }
        pairs.push((u.min(v), u.max(v)));
    }
    let mut keep = vec![false; host.num_edges()];
    for &(u, v) in &pairs {
        let path = host.path_edges(u, v).ok_or_else(|| {
            ForestError::UnrealizablePattern(format!(
                "{} and {} lie in different host components",
                host.node(u).id,
                host.node(v).id
            ))
        })?;
        for e in path {
            keep[e] = true;
        }
    }

    // The union of paths may correlate further pairs; all of them must be listed.
    let listed: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
    let mut uf = UnionFind::new(host.num_nodes());
    for (e, &(u, v)) in host.edges().iter().enumerate() {
        if keep[e] {
            uf.union(u, v);
        }
    }
    let observed = host.observed();
    for (i, &v) in observed.iter().enumerate() {
        for &w in &observed[i + 1..] {
            if uf.find(v) == uf.find(w) && !listed.contains(&(v.min(w), v.max(w))) {
                return Err(ForestError::UnrealizablePattern(format!(
                    "listed pairs force {} and {} to correlate",
                    host.node(v).id,
                    host.node(w).id
                )));
            }
        }
    }
    Ok(restrict(host, &keep))
}

/// Subforest on the kept edges, dropping latent nodes that end up isolated.
pub(crate) fn restrict(host: &Forest, keep: &[bool]) -> Forest {
    let mut used = vec![false; host.num_nodes()];
    for (e, &(u, v)) in host.edges().iter().enumerate() {
        if keep[e] {
            used[u] = true;
            used[v] = true;
        }
    }
    let mut new_index = vec![usize::MAX; host.num_nodes()];
    let mut nodes = Vec::new();
    for (i, n) in host.nodes().iter().enumerate() {
        if !n.latent || used[i] {
            new_index[i] = nodes.len();
            nodes.push(n.clone());
        }
    }
    let edges = host
        .edges()
        .iter()
        .enumerate()
        .filter(|(e, _)| keep[*e])
        .map(|(_, &(u, v))| (new_index[u], new_index[v]))
        .collect();
    Forest::from_indices(nodes, edges).expect("restriction of a valid forest")
}

/// Union of host paths joining the members of each block (a Steiner forest).
pub(crate) fn steiner_mask(host: &Forest, blocks: &[Vec<usize>]) -> Option<Vec<bool>> {
    let mut keep = vec![false; host.num_edges()];
    for block in blocks {
        if let Some((&first, rest)) = block.split_first() {
            for &w in rest {
                for e in host.path_edges(first, w)? {
                    keep[e] = true;
                }
            }
        }
    }
    Some(keep)
}

fn observed_index(host: &Forest, id: &str) -> Result<usize, ForestError> {
    let u = host.index_of(id).ok_or_else(|| ForestError::UnknownNode(id.to_string()))?;
    if host.is_latent(u) {
        return Err(ForestError::UnrealizablePattern(format!("{id} is latent")));
    }
    Ok(u)
}

/// Realizes a lattice class inside `host` as the q-forest of its leaf
/// connectivity. The canonical form of the result equals `sub`.
pub fn steiner_subforest(host: &Forest, sub: &CanonicalForest) -> Result<Forest, ForestError> {
    let sf = sub.forest();
    let mut host_obs: Vec<&str> = host.observed_ids();
    let mut sub_obs: Vec<&str> = sf.observed_ids();
    host_obs.sort_unstable();
    sub_obs.sort_unstable();
    if host_obs != sub_obs {
        return Err(ForestError::NotInLattice("observed nodes differ from the host".into()));
    }
    let mut pairs = Vec::new();
    for block in sf.observed_blocks() {
        for (i, &v) in block.iter().enumerate() {
            for &w in &block[i + 1..] {
                pairs.push((sf.node(v).id.as_str(), sf.node(w).id.as_str()));
            }
        }
    }
    let qf = q_forest(host, &pairs).map_err(|e| ForestError::NotInLattice(e.to_string()))?;
    if canonicalize(&qf) != *sub {
        return Err(ForestError::NotInLattice(format!("{} is not a subforest class of the host", sub.key())));
    }
    Ok(qf)
}
