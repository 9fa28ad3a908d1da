//! The poset of subforest models of a host forest.
//!
//! Every edge subset of the host defines a submodel; subsets with the same
//! canonical form define the same model. Classes are ordered by edge-subset
//! inclusion between representatives and numbered by the little-endian value
//! of their minimal representative. Indices start at 0; reports number
//! models from 1, so on the five-leaf fixture model 13 (index 12) is the
//! subset `1 1 1 1 1 1 0`.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::qforest::{restrict, steiner_mask};
use super::{canonicalize, model_dimension, steiner_subforest, CanonicalForest, Forest, ForestError, UnionFind};
use crate::forest_rlct::{rlct_forest_pair, Rlct, RlctError};

pub const MAX_LATTICE_EDGES: usize = 24;

#[derive(Debug, Clone)]
pub struct LatticeClass {
    canonical: CanonicalForest,
    rep_mask: u32,
    depth: usize,
    dim: usize,
    blocks: usize,
}

impl LatticeClass {
    pub fn canonical(&self) -> &CanonicalForest {
        &self.canonical
    }

    pub fn forest(&self) -> &Forest {
        self.canonical.forest()
    }

    /// Minimal host edge subset in this class, bit `i` for host edge `i`.
    pub fn rep_mask(&self) -> u32 {
        self.rep_mask
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of connected leaf blocks.
    pub fn num_blocks(&self) -> usize {
        self.blocks
    }
}

#[derive(Debug, Clone)]
pub struct ModelLattice {
    host: Forest,
    classes: Vec<LatticeClass>,
    below: Vec<BitSet>,
    covers: Vec<(usize, usize)>,
    by_key: HashMap<String, usize>,
    rlct_cache: HashMap<(usize, usize), Rlct>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn union_with(&mut self, other: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= *b;
        }
    }
}

/// Enumerates all edge subsets of a canonical host and groups them into
/// model classes.
pub fn subforest_lattice(host: &Forest) -> Result<ModelLattice, ForestError> {
    let m = host.num_edges();
    if m > MAX_LATTICE_EDGES {
        return Err(ForestError::TooLarge(m));
    }
    if let Some(u) = (0..host.num_nodes()).find(|&u| host.is_latent(u) && host.degree(u) <= 2) {
        return Err(ForestError::NotCanonical(host.node(u).id.clone()));
    }
    let observed = host.observed();
    let n_masks = 1usize << m;

    // Leaf partition of each subset, as block labels per observed node.
    let mut partition_class: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut partitions: Vec<Vec<u8>> = Vec::new();
    let mut mask_class = vec![0u32; n_masks];
    for mask in 0..n_masks {
        let mut uf = UnionFind::new(host.num_nodes());
        for (e, &(u, v)) in host.edges().iter().enumerate() {
            if mask >> e & 1 == 1 {
                uf.union(u, v);
            }
        }
        let roots: Vec<usize> = observed.iter().map(|&v| uf.find(v)).collect();
        let labels: Vec<u8> = roots
            .iter()
            .map(|r| roots.iter().position(|x| x == r).unwrap() as u8)
            .collect();
        let next = partitions.len() as u32;
        let c = *partition_class.entry(labels).or_insert_with_key(|k| {
            partitions.push(k.clone());
            next
        });
        mask_class[mask] = c;
    }

    // Minimal representatives, then renumber by their value.
    let mut raw: Vec<(u32, Vec<Vec<usize>>)> = partitions
        .iter()
        .map(|labels| {
            let mut blocks: Vec<Vec<usize>> = Vec::new();
            for (i, &l) in labels.iter().enumerate() {
                if l as usize == i {
                    blocks.push(vec![observed[i]]);
                } else {
                    let first = observed[l as usize];
                    blocks.iter_mut().find(|b| b[0] == first).unwrap().push(observed[i]);
                }
            }
            let keep = steiner_mask(host, &blocks).expect("blocks of a subforest are host-connected");
            let mask = keep.iter().enumerate().fold(0u32, |acc, (e, &k)| if k { acc | 1 << e } else { acc });
            (mask, blocks)
        })
        .collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by_key(|&i| raw[i].0);
    let mut renumber = vec![0usize; raw.len()];
    for (new, &old) in order.iter().enumerate() {
        renumber[old] = new;
    }
    let n_classes = raw.len();

    let mut classes: Vec<LatticeClass> = order
        .iter()
        .map(|&old| {
            let (mask, blocks) = std::mem::take(&mut raw[old]);
            let keep: Vec<bool> = (0..m).map(|e| mask >> e & 1 == 1).collect();
            let sub = restrict(host, &keep);
            let canonical = canonicalize(&sub);
            let dim = model_dimension(canonical.forest());
            LatticeClass { canonical, rep_mask: mask, depth: 0, dim, blocks: blocks.len() }
        })
        .collect();

    let mut cover_set: HashSet<(usize, usize)> = HashSet::new();
    for mask in 0..n_masks {
        let a = renumber[mask_class[mask] as usize];
        for e in 0..m {
            if mask >> e & 1 == 0 {
                let b = renumber[mask_class[mask | 1 << e] as usize];
                if a != b {
                    cover_set.insert((a, b));
                }
            }
        }
    }
    let mut covers: Vec<(usize, usize)> = cover_set.into_iter().collect();
    covers.sort_unstable();

    // Strictly larger classes have strictly fewer blocks.
    let mut topo: Vec<usize> = (0..n_classes).collect();
    topo.sort_by_key(|&c| (std::cmp::Reverse(classes[c].blocks), c));
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for &(a, b) in &covers {
        preds[b].push(a);
    }
    let mut below: Vec<BitSet> = vec![BitSet::new(n_classes); n_classes];
    for &c in &topo {
        below[c].insert(c);
        let mut depth = 0;
        for &p in &preds[c] {
            let bp = below[p].clone();
            below[c].union_with(&bp);
            depth = depth.max(classes[p].depth + 1);
        }
        classes[c].depth = depth;
    }

    let by_key = classes.iter().enumerate().map(|(i, c)| (c.canonical.key().to_string(), i)).collect();
    Ok(ModelLattice { host: host.clone(), classes, below, covers, by_key, rlct_cache: HashMap::new() })
}

impl ModelLattice {
    pub fn host(&self) -> &Forest {
        &self.host
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[LatticeClass] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> &LatticeClass {
        &self.classes[i]
    }

    /// Index of the empty forest.
    pub fn minimum(&self) -> usize {
        0
    }

    /// Index of the host class.
    pub fn maximum(&self) -> usize {
        self.classes.len() - 1
    }

    /// `a <= b` in the subforest order.
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.below[b].contains(a)
    }

    /// Pairs `(a, b)` with `a < b` linked by adding a single host edge.
    pub fn covers(&self) -> &[(usize, usize)] {
        &self.covers
    }

    pub fn max_depth(&self) -> usize {
        self.classes.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    pub fn find(&self, c: &CanonicalForest) -> Option<usize> {
        self.by_key.get(c.key()).copied()
    }

    /// Classes strictly below `c`.
    pub fn strictly_below(&self, c: usize) -> Vec<usize> {
        (0..self.classes.len()).filter(|&a| a != c && self.leq(a, c)).collect()
    }

    /// A linear extension of the order: by depth, then index.
    pub fn linear_extension(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.classes.len()).collect();
        v.sort_by_key(|&c| (self.classes[c].depth, c));
        v
    }

    /// The minimal representative of class `c` as a subforest of the host,
    /// keeping host node ids and dropping isolated latent nodes.
    pub fn representative(&self, c: usize) -> Forest {
        let mask = self.classes[c].rep_mask;
        let keep: Vec<bool> = (0..self.host.num_edges()).map(|e| mask >> e & 1 == 1).collect();
        restrict(&self.host, &keep)
    }

    /// Edge-subset code of the minimal representative, in host edge order.
    pub fn code(&self, c: usize) -> String {
        let mask = self.classes[c].rep_mask;
        (0..self.host.num_edges())
            .map(|e| if mask >> e & 1 == 1 { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// `(lambda, mult)` of the super-class model when data come from the
    /// sub-class, using the q-forest of `sub` inside `sup`.
    pub fn rlct(&self, sub: usize, sup: usize) -> Result<Rlct, RlctError> {
        if let Some(r) = self.rlct_cache.get(&(sub, sup)) {
            return Ok(*r);
        }
        if !self.leq(sub, sup) {
            return Err(RlctError::NotComparable(sub, sup));
        }
        let sup_forest = self.classes[sup].forest();
        let qf = steiner_subforest(sup_forest, &self.classes[sub].canonical)?;
        rlct_forest_pair(sup_forest, &qf)
    }

    /// Fills the cache for every comparable pair.
    pub fn populate_rlcts(&mut self) -> Result<(), RlctError> {
        let pairs: Vec<(usize, usize)> = (0..self.len())
            .flat_map(|b| (0..self.len()).map(move |a| (a, b)))
            .filter(|&(a, b)| self.leq(a, b))
            .collect();
        let values: Vec<((usize, usize), Rlct)> = pairs
            .par_iter()
            .map(|&(a, b)| self.rlct(a, b).map(|r| ((a, b), r)))
            .collect::<Result<_, _>>()?;
        self.rlct_cache.extend(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{build_forest, canonicalize};
    use super::*;

    #[test]
    fn five_leaf_lattice_has_34_classes() {
        let l = subforest_lattice(&five_leaf()).unwrap();
        assert_eq!(l.len(), 34);
        assert_eq!(l.max_depth(), 4);
        assert_eq!(l.class(l.minimum()).depth(), 0);
        assert_eq!(l.class(l.maximum()).canonical(), &canonicalize(&five_leaf()));
        assert_eq!(l.code(12), "1 1 1 1 1 1 0");
        assert_eq!(l.code(1), "1 1 0 0 0 0 0");
        assert_eq!(l.code(33), "1 1 1 1 1 1 1");
        for c in 0..l.len() {
            assert!(l.leq(l.minimum(), c));
            assert!(l.leq(c, l.maximum()));
        }
    }

    #[test]
    fn reference_listing_matches() {
        let listing = [
            "0000000", "1100000", "1011000", "0111000", "1111000", "1010110", "0110110", "1110110", "0001110",
            "1101110", "1011110", "0111110", "1111110", "1010101", "0110101", "1110101", "0001101", "1101101",
            "1011101", "0111101", "1111101", "0000011", "1100011", "1011011", "0111011", "1111011", "1010111",
            "0110111", "1110111", "0001111", "1101111", "1011111", "0111111", "1111111",
        ];
        let l = subforest_lattice(&five_leaf()).unwrap();
        for (i, code) in listing.iter().enumerate() {
            assert_eq!(l.code(i).replace(' ', ""), *code, "model {}", i + 1);
        }
    }

    #[test]
    fn quartet_lattice_count() {
        // Frozen from an independent brute force over the 32 edge subsets
        // with graph-isomorphism deduplication of the reduced forests.
        let l = subforest_lattice(&quartet()).unwrap();
        assert_eq!(l.len(), 13);
        assert_eq!(l.max_depth(), 3);
        assert_eq!(subforest_lattice(&star(3)).unwrap().len(), 5);
    }

    #[test]
    fn single_edge_host() {
        let h = build_forest(&[("1", false), ("2", false)], &[("1", "2")]).unwrap();
        let l = subforest_lattice(&h).unwrap();
        assert_eq!(l.len(), 2);
        assert!(l.leq(0, 1));
        assert!(!l.leq(1, 0));
    }

    #[test]
    fn rejects_non_canonical_and_large() {
        assert!(matches!(subforest_lattice(&two_leaf_path()), Err(ForestError::NotCanonical(_))));
        // caterpillar with 15 leaves has 27 edges
        let leaves: Vec<String> = (1..=15).map(|i| i.to_string()).collect();
        let inner: Vec<String> = (0..13).map(|i| format!("h{i}")).collect();
        let mut nodes: Vec<(&str, bool)> = leaves.iter().map(|s| (s.as_str(), false)).collect();
        nodes.extend(inner.iter().map(|s| (s.as_str(), true)));
        let mut edges: Vec<(&str, &str)> = vec![(&leaves[0], &inner[0]), (&leaves[14], &inner[12])];
        for i in 0..13 {
            edges.push((&inner[i], &leaves[i + 1]));
            if i + 1 < 13 {
                edges.push((&inner[i], &inner[i + 1]));
            }
        }
        let big = build_forest(&nodes, &edges).unwrap();
        assert!(matches!(subforest_lattice(&big), Err(ForestError::TooLarge(27))));
    }

    #[test]
    fn depth_is_leaves_minus_blocks() {
        let l = subforest_lattice(&five_leaf()).unwrap();
        for c in l.classes() {
            assert_eq!(c.depth(), 5 - c.num_blocks());
        }
    }
}
