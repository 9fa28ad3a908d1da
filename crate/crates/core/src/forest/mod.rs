//! Leaf-labeled forests with latent inner nodes.
//!
//! A [`Forest`] is the combinatorial backbone of every Gaussian latent forest
//! model: observed nodes carry data and are leaves (degree at most one),
//! latent nodes are unobserved unit-variance variables. Edges are stored in
//! the order they were declared, which is the order used for edge-subset
//! codes in [`lattice`].

mod canonical;
mod io;
pub mod lattice;
mod qforest;

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

pub use canonical::{canonicalize, CanonicalForest};
pub use io::{ForestJson, NodeJson};
pub use lattice::{subforest_lattice, LatticeClass, ModelLattice};
pub use qforest::{q_forest, steiner_subforest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForestError {
    #[error("edge {0}--{1} closes a cycle")]
    Cycle(String, String),
    #[error("duplicate edge {0}--{1}")]
    DuplicateEdge(String, String),
    #[error("self loop at node {0}")]
    SelfLoop(String),
    #[error("observed node {id} has degree {degree}; observed nodes must be leaves")]
    ObservedDegree { id: String, degree: usize },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("correlation pattern is not realizable: {0}")]
    UnrealizablePattern(String),
    #[error("forest has {0} edges; exhaustive lattices are limited to 24")]
    TooLarge(usize),
    #[error("host is not canonical: latent node {0} has degree <= 2")]
    NotCanonical(String),
    #[error("class is not a subforest of the host: {0}")]
    NotInLattice(String),
    #[error("invalid forest json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: String,
    pub latent: bool,
}

impl Node {
    pub fn observed(id: impl Into<String>) -> Self {
        Node { id: id.into(), latent: false }
    }

    pub fn latent(id: impl Into<String>) -> Self {
        Node { id: id.into(), latent: true }
    }
}

/// A validated leaf-labeled forest.
///
/// Nodes and edges are addressed by their position; `edges()[i]` is the
/// `i`-th declared edge with endpoints as node indices.
#[derive(Debug, Clone)]
pub struct Forest {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<(usize, usize)>>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

impl PartialEq for Forest {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for Forest {}

fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Forest {
    /// Validates nodes and edges (given by node id) into a forest.
    pub fn new<S: AsRef<str>>(nodes: Vec<Node>, edges: &[(S, S)]) -> Result<Self, ForestError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(ForestError::DuplicateNode(n.id.clone()));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let u = *index.get(a).ok_or_else(|| ForestError::UnknownNode(a.to_string()))?;
            let v = *index.get(b).ok_or_else(|| ForestError::UnknownNode(b.to_string()))?;
            idx_edges.push((u, v));
        }
        Self::from_indices(nodes, idx_edges)
    }

    /// Same as [`Forest::new`] with edges given as node indices.
    pub fn from_indices(nodes: Vec<Node>, edges: Vec<(usize, usize)>) -> Result<Self, ForestError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(ForestError::DuplicateNode(n.id.clone()));
            }
        }
        let mut uf = UnionFind::new(nodes.len());
        let mut adj = vec![Vec::new(); nodes.len()];
        let mut edge_lookup = HashMap::with_capacity(edges.len());
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= nodes.len() || v >= nodes.len() {
                return Err(ForestError::UnknownNode(format!("#{}", u.max(v))));
            }
            if u == v {
                return Err(ForestError::SelfLoop(nodes[u].id.clone()));
            }
            if edge_lookup.insert(key(u, v), i).is_some() {
                return Err(ForestError::DuplicateEdge(nodes[u].id.clone(), nodes[v].id.clone()));
            }
            if !uf.union(u, v) {
                return Err(ForestError::Cycle(nodes[u].id.clone(), nodes[v].id.clone()));
            }
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        for (i, n) in nodes.iter().enumerate() {
            if !n.latent && adj[i].len() > 1 {
                return Err(ForestError::ObservedDegree { id: n.id.clone(), degree: adj[i].len() });
            }
        }
        Ok(Forest { nodes, edges, index, adj, edge_lookup })
    }

    /// The forest on the same nodes keeping only edges with `keep[i]`.
    pub fn edge_subforest(&self, keep: impl Fn(usize) -> bool) -> Forest {
        let edges = (0..self.edges.len()).filter(|&i| keep(i)).map(|i| self.edges[i]).collect();
        Forest::from_indices(self.nodes.clone(), edges).expect("subforest of a valid forest")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn is_latent(&self, i: usize) -> bool {
        self.nodes[i].latent
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Neighbors of `i` as `(node, edge index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.edge_lookup.get(&key(u, v)).copied()
    }

    /// Edge ids as `(id, id)` pairs in declaration order.
    pub fn edge_ids(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(u, v)| (self.nodes[u].id.as_str(), self.nodes[v].id.as_str()))
            .collect()
    }

    /// Observed node indices in declaration order.
    pub fn observed(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].latent).collect()
    }

    pub fn observed_ids(&self) -> Vec<&str> {
        self.observed().into_iter().map(|i| self.nodes[i].id.as_str()).collect()
    }

    pub fn latent_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.latent).count()
    }

    /// Connected components as sorted node-index lists, ordered by their
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        for s in 0..self.nodes.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut members = vec![s];
            comp[s] = c;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = c;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Component label per node, numbered as in [`Forest::components`].
    pub fn component_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.nodes.len()];
        for (c, members) in self.components().iter().enumerate() {
            for &u in members {
                labels[u] = c;
            }
        }
        labels
    }

    /// Edge indices on the unique path from `u` to `v`, or `None` when the
    /// two nodes lie in different components.
    pub fn path_edges(&self, u: usize, v: usize) -> Option<Vec<usize>> {
        if u == v {
            return Some(Vec::new());
        }
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        seen[u] = true;
        let mut queue = VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            if x == v {
                break;
            }
            for &(y, e) in &self.adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some((x, e));
                    queue.push_back(y);
                }
            }
        }
        if !seen[v] {
            return None;
        }
        let mut path = Vec::new();
        let mut x = v;
        while let Some((p, e)) = parent[x] {
            path.push(e);
            x = p;
        }
        path.reverse();
        Some(path)
    }

    /// Leaves connected to each other, as the partition of observed nodes
    /// into blocks (each block sorted, blocks ordered by first member).
    pub fn observed_blocks(&self) -> Vec<Vec<usize>> {
        self.components()
            .into_iter()
            .map(|c| c.into_iter().filter(|&u| !self.nodes[u].latent).collect::<Vec<_>>())
            .filter(|b| !b.is_empty())
            .collect()
    }

    /// A copy with observed node ids renamed through `rename`.
    pub fn relabel_observed(&self, rename: impl Fn(&str) -> String) -> Result<Forest, ForestError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| if n.latent { n.clone() } else { Node::observed(rename(&n.id)) })
            .collect();
        Forest::from_indices(nodes, self.edges.clone())
    }

    /// Graphviz rendering; latent nodes are drawn hollow.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph forest {\n");
        for n in &self.nodes {
            let style = if n.latent { "shape=circle, label=\"\"" } else { "shape=circle, style=filled, fillcolor=black, fontcolor=white" };
            s.push_str(&format!("  {:?} [{}];\n", n.id, style));
        }
        for &(u, v) in &self.edges {
            s.push_str(&format!("  {:?} -- {:?};\n", self.nodes[u].id, self.nodes[v].id));
        }
        s.push_str("}\n");
        s
    }
}

/// Convenience constructor from `(id, latent)` and `(id, id)` slices.
pub fn build_forest(nodes: &[(&str, bool)], edges: &[(&str, &str)]) -> Result<Forest, ForestError> {
    let nodes = nodes.iter().map(|&(id, latent)| Node { id: id.to_string(), latent }).collect();
    Forest::new(nodes, edges)
}

/// Number of free parameters of the latent forest model, `|V| + |E| - l2`.
pub fn model_dimension(f: &Forest) -> usize {
    let observed = f.nodes.iter().filter(|n| !n.latent).count();
    let deg2 = (0..f.num_nodes()).filter(|&i| f.degree(i) == 2).count();
    observed + f.num_edges() - deg2
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if ra < rb {
            self.parent[rb] = ra;
        } else {
            self.parent[ra] = rb;
        }
        true
    }
}

/// Named fixtures that recur throughout the tests and the CLI docs.
pub mod fixtures {
    use super::{build_forest, Forest};

    /// Quartet tree: leaves 1,2 on `a`, leaves 3,4 on `b`.
    pub fn quartet() -> Forest {
        build_forest(
            &[("1", false), ("2", false), ("3", false), ("4", false), ("a", true), ("b", true)],
            &[("1", "a"), ("2", "a"), ("a", "b"), ("b", "3"), ("b", "4")],
        )
        .unwrap()
    }

    /// Star with one latent center `a` and leaves `1..=k`.
    pub fn star(k: usize) -> Forest {
        let ids: Vec<String> = (1..=k).map(|i| i.to_string()).collect();
        let mut nodes: Vec<(&str, bool)> = ids.iter().map(|s| (s.as_str(), false)).collect();
        nodes.push(("a", true));
        let edges: Vec<(&str, &str)> = ids.iter().map(|s| ("a", s.as_str())).collect();
        build_forest(&nodes, &edges).unwrap()
    }

    /// The five-leaf tree with edges ordered a1, a5, ab, b4, bc, c2, c3.
    pub fn five_leaf() -> Forest {
        build_forest(
            &[
                ("1", false),
                ("2", false),
                ("3", false),
                ("4", false),
                ("5", false),
                ("a", true),
                ("b", true),
                ("c", true),
            ],
            &[("a", "1"), ("a", "5"), ("a", "b"), ("b", "4"), ("b", "c"), ("c", "2"), ("c", "3")],
        )
        .unwrap()
    }

    /// Path 1 - a - 2 with a degree-two latent node.
    pub fn two_leaf_path() -> Forest {
        build_forest(&[("1", false), ("2", false), ("a", true)], &[("1", "a"), ("a", "2")]).unwrap()
    }

    /// All observed nodes of `host` without edges.
    pub fn empty_on(host: &Forest) -> Forest {
        let nodes = host.nodes().iter().filter(|n| !n.latent).cloned().collect();
        Forest::from_indices(nodes, Vec::new()).unwrap()
    }
}
