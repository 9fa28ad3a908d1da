use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::{Forest, Node};

/// A forest with no latent node of degree two or less, in canonical form.
///
/// Two canonical forests compare equal exactly when they are isomorphic
/// as leaf-labeled forests: observed ids are fixed, latent ids are
/// exchangeable and get replaced by `~h0`, `~h1`, ... in a deterministic
/// depth-first order.
#[derive(Debug, Clone)]
pub struct CanonicalForest {
    forest: Forest,
    key: String,
    hash: u64,
    node_origin: Vec<usize>,
    edge_origin: Vec<Vec<usize>>,
}

impl CanonicalForest {
    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    /// The canonical string the equality and ordering are based on.
    pub fn key(&self) -> &str {
        &self.key
    }

    /// 64-bit FNV-1a of [`CanonicalForest::key`].
    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// Index in the source forest of each canonical node.
    pub fn node_origin(&self) -> &[usize] {
        &self.node_origin
    }

    /// Source edges merged into each canonical edge (a path in the source).
    pub fn edge_origin(&self) -> &[Vec<usize>] {
        &self.edge_origin
    }

    pub fn into_forest(self) -> Forest {
        self.forest
    }
}

impl PartialEq for CanonicalForest {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for CanonicalForest {}

impl std::hash::Hash for CanonicalForest {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}

impl fmt::Display for CanonicalForest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deletes latent nodes of degree at most one and contracts latent nodes of
/// degree two until neither applies, then relabels canonically.
///
/// Neither operation changes the statistical model of the forest.
pub fn canonicalize(f: &Forest) -> CanonicalForest {
    let n = f.num_nodes();
    let mut alive = vec![true; n];
    // neighbor -> source edges making up the (possibly merged) edge
    let mut adj: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); n];
    for (e, &(u, v)) in f.edges().iter().enumerate() {
        adj[u].insert(v, vec![e]);
        adj[v].insert(u, vec![e]);
    }

    let mut work: Vec<usize> = (0..n).filter(|&u| f.is_latent(u)).collect();
    while let Some(u) = work.pop() {
        if !alive[u] || !f.is_latent(u) {
            continue;
        }
        match adj[u].len() {
            0 => alive[u] = false,
            1 => {
                let (&x, _) = adj[u].iter().next().unwrap();
                adj[x].remove(&u);
                adj[u].clear();
                alive[u] = false;
                work.push(x);
            }
            2 => {
                let mut it = std::mem::take(&mut adj[u]).into_iter();
                let (x, mut px) = it.next().unwrap();
                let (y, py) = it.next().unwrap();
                adj[x].remove(&u);
                adj[y].remove(&u);
                px.extend(py);
                adj[x].insert(y, px.clone());
                adj[y].insert(x, px);
                alive[u] = false;
                work.push(x);
                work.push(y);
            }
            _ => {}
        }
    }

    // Encode every surviving component rooted at its smallest observed id.
    let mut comp = vec![usize::MAX; n];
    let mut roots = Vec::new();
    for s in 0..n {
        if !alive[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = s;
        let mut root: Option<usize> = None;
        while let Some(u) = stack.pop() {
            if !f.is_latent(u) && root.is_none_or(|r| f.node(u).id < f.node(r).id) {
                root = Some(u);
            }
            for &v in adj[u].keys() {
                if comp[v] == usize::MAX {
                    comp[v] = s;
                    stack.push(v);
                }
            }
        }
        roots.push(root.expect("every surviving component holds an observed node"));
    }

    let mut memo: HashMap<(usize, usize), String> = HashMap::new();
    let mut keyed: Vec<(String, usize)> = roots
        .into_iter()
        .map(|r| (encode(f, &adj, r, usize::MAX, &mut memo), r))
        .collect();
    keyed.sort();

    let mut nodes: Vec<Node> = Vec::new();
    let mut node_origin = Vec::new();
    let mut new_index = vec![usize::MAX; n];
    for u in 0..n {
        if !f.is_latent(u) {
            new_index[u] = nodes.len();
            nodes.push(f.node(u).clone());
            node_origin.push(u);
        }
    }
    let prefix = latent_prefix(f);
    let mut edges = Vec::new();
    let mut edge_origin = Vec::new();
    let mut next_latent = 0usize;
    for (_, root) in &keyed {
        let mut stack = vec![(*root, usize::MAX)];
        while let Some((u, parent)) = stack.pop() {
            if new_index[u] == usize::MAX {
                new_index[u] = nodes.len();
                nodes.push(Node::latent(format!("{prefix}{next_latent}")));
                node_origin.push(u);
                next_latent += 1;
            }
            if parent != usize::MAX {
                edges.push((new_index[parent], new_index[u]));
                let mut path = adj[u][&parent].clone();
                path.sort_unstable();
                edge_origin.push(path);
            }
            let mut children: Vec<(&String, usize)> = adj[u]
                .keys()
                .filter(|&&v| v != parent)
                .map(|&v| (&memo[&(v, u)], v))
                .collect();
            children.sort();
            // reversed so the smallest child is expanded first
            for &(_, v) in children.iter().rev() {
                stack.push((v, u));
            }
        }
    }

    let key = keyed.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join("|");
    let forest = Forest::from_indices(nodes, edges).expect("canonical form of a valid forest");
    CanonicalForest { hash: fnv1a(&key), key, forest, node_origin, edge_origin }
}

fn encode(
    f: &Forest,
    adj: &[BTreeMap<usize, Vec<usize>>],
    u: usize,
    parent: usize,
    memo: &mut HashMap<(usize, usize), String>,
) -> String {
    let mut parts: Vec<String> = adj[u]
        .keys()
        .filter(|&&v| v != parent)
        .map(|&v| encode(f, adj, v, u, memo))
        .collect();
    parts.sort();
    let s = if f.is_latent(u) {
        format!("({})", parts.join(","))
    } else if parts.is_empty() {
        format!("{:?}", f.node(u).id)
    } else {
        format!("{:?}({})", f.node(u).id, parts.join(","))
    };
    memo.insert((u, parent), s.clone());
    s
}

fn latent_prefix(f: &Forest) -> String {
    let mut prefix = String::from("~h");
    while f.nodes().iter().any(|n| !n.latent && n.id.starts_with(&prefix)) {
        prefix.insert(0, '~');
    }
    prefix
}
