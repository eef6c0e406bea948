//! Undirected graphs with node features, labels and train/val/test splits.
//!
//! Edges are stored once as `(u, v)` with `u < v`. The symmetric adjacency is
//! only materialized when a [`PropagationMatrix`] is built.

use std::collections::BTreeSet;
use std::sync::Arc;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor2;
use crate::{Error, Result};

/// Three pairwise-disjoint node masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

/// Which part of a node set a mask entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Val,
    Test,
    Unused,
}

impl Split {
    pub fn empty(n: usize) -> Self {
        Split { train: vec![false; n], val: vec![false; n], test: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn role(&self, node: usize) -> SplitRole {
        if self.train[node] {
            SplitRole::Train
        } else if self.val[node] {
            SplitRole::Val
        } else if self.test[node] {
            SplitRole::Test
        } else {
            SplitRole::Unused
        }
    }

    pub fn from_roles(roles: &[SplitRole]) -> Self {
        let mut split = Split::empty(roles.len());
        for (i, role) in roles.iter().enumerate() {
            match role {
                SplitRole::Train => split.train[i] = true,
                SplitRole::Val => split.val[i] = true,
                SplitRole::Test => split.test[i] = true,
                SplitRole::Unused => {}
            }
        }
        split
    }

    /// Stratified split: within every class, nodes are shuffled and the first
    /// `round(train_frac·size)` go to train, the next `round(val_frac·size)` to
    /// validation and the rest to test. Unlabeled nodes stay unused.
    pub fn stratified<R: Rng>(
        labels: &[Option<usize>],
        classes: usize,
        train_frac: f64,
        val_frac: f64,
        rng: &mut R,
    ) -> Self {
        let mut split = Split::empty(labels.len());
        let mut by_class = vec![Vec::new(); classes];
        for (node, label) in labels.iter().enumerate() {
            if let Some(l) = label {
                by_class[*l].push(node);
            }
        }
        for members in by_class.iter_mut() {
            members.shuffle(rng);
            let size = members.len() as f64;
            let n_train = (train_frac * size).round() as usize;
            let n_val = ((val_frac * size).round() as usize).min(members.len() - n_train);
            for (k, &node) in members.iter().enumerate() {
                if k < n_train {
                    split.train[node] = true;
                } else if k < n_train + n_val {
                    split.val[node] = true;
                } else {
                    split.test[node] = true;
                }
            }
        }
        split
    }

    fn check(&self, n: usize, labels: &[Option<usize>]) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "split masks of length {}/{}/{} for {n} nodes",
                self.train.len(),
                self.val.len(),
                self.test.len()
            )));
        }
        for i in 0..n {
            let covered = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if covered > 1 {
                return Err(Error::OverlappingMasks(i));
            }
            if covered == 1 && labels[i].is_none() {
                return Err(Error::UnlabeledMaskedNode(i));
            }
        }
        Ok(())
    }
}

/// Homophilous / heterophilious tag of an edge relative to a set of labeled nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    Homophilous,
    Heterophilious,
    Unknown,
}

/// Which labels count when measuring homophily.
#[derive(Debug, Clone, Copy)]
pub enum LabelScope<'a> {
    /// Every labeled node.
    All,
    /// Only nodes inside the mask.
    Mask(&'a [bool]),
}

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Arc<Tensor2>,
    labels: Arc<Vec<Option<usize>>>,
    classes: usize,
    split: Split,
}

impl Graph {
    /// Canonicalizes and validates a graph.
    ///
    /// Edges are reoriented to `u < v`, sorted and deduplicated; self-loops are
    /// dropped and their count returned alongside the graph. The class count is
    /// one more than the largest label.
    pub fn build(
        edges: &[(usize, usize)],
        features: Tensor2,
        labels: Vec<Option<usize>>,
        split: Split,
    ) -> Result<(Graph, usize)> {
        let classes = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        Self::build_with_classes(edges, features, labels, split, classes)
    }

    pub fn build_with_classes(
        edges: &[(usize, usize)],
        features: Tensor2,
        labels: Vec<Option<usize>>,
        split: Split,
        classes: usize,
    ) -> Result<(Graph, usize)> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        for (node, label) in labels.iter().enumerate() {
            if let Some(l) = *label {
                if l >= classes {
                    return Err(Error::InvalidLabel { node, label: l, classes });
                }
            }
        }
        split.check(n, &labels)?;

        let mut canonical = BTreeSet::new();
        let mut self_loops = 0;
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if a == b {
                self_loops += 1;
                continue;
            }
            canonical.insert((a.min(b), a.max(b)));
        }
        if self_loops > 0 {
            warn!("stripped {self_loops} self-loop(s) from input edges");
        }
        let graph = Graph {
            n,
            edges: canonical.into_iter().collect(),
            features: Arc::new(features),
            labels: Arc::new(labels),
            classes,
            split,
        };
        Ok((graph, self_loops))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Same nodes and edges under a different split.
    pub fn with_split(&self, split: Split) -> Result<Graph> {
        split.check(self.n, &self.labels)?;
        Ok(Graph { split, ..self.clone() })
    }

    /// Keeps the edges whose mask entry is `true`. Features, labels and split
    /// are shared with `self`.
    pub fn apply_deletion(&self, keep: &[bool]) -> Result<Graph> {
        if keep.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "keep mask of length {} for {} edges",
                keep.len(),
                self.edges.len()
            )));
        }
        let edges = self.edges.iter().zip(keep).filter(|(_, &k)| k).map(|(&e, _)| e).collect();
        Ok(Graph { edges, ..self.clone() })
    }

    /// Tag of every edge, using only labels of nodes inside `mask`.
    pub fn label_edges(&self, mask: &[bool]) -> Vec<EdgeLabel> {
        self.edges.iter().map(|&(u, v)| self.tag(u, v, LabelScope::Mask(mask))).collect()
    }

    /// Tag of every edge against all known labels.
    pub fn label_edges_all(&self) -> Vec<EdgeLabel> {
        self.edges.iter().map(|&(u, v)| self.tag(u, v, LabelScope::All)).collect()
    }

    fn tag(&self, u: usize, v: usize, scope: LabelScope<'_>) -> EdgeLabel {
        let visible = |node: usize| match scope {
            LabelScope::All => self.labels[node],
            LabelScope::Mask(mask) => self.labels[node].filter(|_| mask[node]),
        };
        match (visible(u), visible(v)) {
            (Some(a), Some(b)) if a == b => EdgeLabel::Homophilous,
            (Some(_), Some(_)) => EdgeLabel::Heterophilious,
            _ => EdgeLabel::Unknown,
        }
    }

    /// Edge homophily ratio: homophilous edges over countable edges. Edges
    /// with an endpoint unlabeled under `scope` are not counted.
    pub fn homophily_ratio(&self, scope: LabelScope<'_>) -> Result<f64> {
        let (mut same, mut counted) = (0usize, 0usize);
        for &(u, v) in &self.edges {
            match self.tag(u, v, scope) {
                EdgeLabel::Homophilous => {
                    same += 1;
                    counted += 1;
                }
                EdgeLabel::Heterophilious => counted += 1,
                EdgeLabel::Unknown => {}
            }
        }
        if counted == 0 {
            return Err(Error::NoCountableEdges);
        }
        Ok(same as f64 / counted as f64)
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn sym_normalize(&self) -> PropagationMatrix {
        PropagationMatrix::new(self.n, &self.edges, true)
    }
}

/// Where a stored entry of a [`SparsePattern`] comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    SelfLoop,
    Edge(usize),
}

/// CSR sparsity pattern of a symmetric adjacency, optionally with the
/// diagonal. Each undirected edge owns two stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    source: Vec<EntrySource>,
    edges: Vec<(usize, usize)>,
    self_loops: bool,
}

impl SparsePattern {
    pub fn new(n: usize, edges: &[(usize, usize)], self_loops: bool) -> Self {
        let mut rows: Vec<Vec<(usize, EntrySource)>> = vec![Vec::new(); n];
        if self_loops {
            for (i, row) in rows.iter_mut().enumerate() {
                row.push((i, EntrySource::SelfLoop));
            }
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            rows[u].push((v, EntrySource::Edge(e)));
            rows[v].push((u, EntrySource::Edge(e)));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut source = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, s) in row {
                col_idx.push(c);
                source.push(s);
            }
            row_ptr.push(col_idx.len());
        }
        SparsePattern { n, row_ptr, col_idx, source, edges: edges.to_vec(), self_loops }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// Stored entries of row `i` as `(entry index, column, source)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, usize, EntrySource)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (k, self.col_idx[k], self.source[k]))
    }

    /// Degrees of `A(w) (+ I)` for per-edge weights `w`.
    pub fn degrees(&self, weights: &[f64]) -> Vec<f64> {
        let base = if self.self_loops { 1.0 } else { 0.0 };
        let mut d = vec![base; self.n];
        for (&(u, v), &w) in self.edges.iter().zip(weights) {
            d[u] += w;
            d[v] += w;
        }
        d
    }

    /// Symmetrically normalized entry values for per-edge weights `w`.
    /// Returns the values in storage order and the degrees used.
    pub fn normalized_values(&self, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(weights.len(), self.edges.len(), "one weight per edge");
        let d = self.degrees(weights);
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n {
            for (k, j, src) in self.row(i) {
                let w = match src {
                    EntrySource::SelfLoop => 1.0,
                    EntrySource::Edge(e) => weights[e],
                };
                values[k] = normalized_entry(w, d[i], d[j]);
            }
        }
        (values, d)
    }

    /// `Y = S X` for entry values `values`.
    pub fn spmm(&self, values: &[f64], x: &Tensor2) -> Tensor2 {
        assert_eq!(x.rows(), self.n, "spmm: row count differs from matrix order");
        assert_eq!(values.len(), self.nnz(), "spmm: one value per stored entry");
        let mut out = Tensor2::zeros(self.n, x.cols());
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for (k, j, _) in self.row(i) {
                let v = values[k];
                for (o, &xv) in out_row.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        }
        out
    }
}

/// `w / √(dᵢ·dⱼ)`, or zero when both degrees vanish.
#[inline]
pub(crate) fn normalized_entry(w: f64, di: f64, dj: f64) -> f64 {
    let denom = (di * dj).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        w / denom
    }
}

/// Symmetric normalized adjacency stored sparse.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl PropagationMatrix {
    /// Normalizes `A (+ I)` for the given unweighted edges.
    pub fn new(n: usize, edges: &[(usize, usize)], self_loops: bool) -> Self {
        let pattern = Arc::new(SparsePattern::new(n, edges, self_loops));
        let (values, _) = pattern.normalized_values(&vec![1.0; edges.len()]);
        PropagationMatrix { pattern, values }
    }

    pub fn from_parts(pattern: Arc<SparsePattern>, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        PropagationMatrix { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn has_self_loops(&self) -> bool {
        self.pattern.self_loops
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.row(i).find(|&(_, c, _)| c == j).map_or(0.0, |(k, _, _)| self.values[k])
    }

    pub fn spmm(&self, x: &Tensor2) -> Tensor2 {
        self.pattern.spmm(&self.values, x)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dense(&self) -> Tensor2 {
        let n = self.n();
        let mut dense = Tensor2::zeros(n, n);
        for i in 0..n {
            for (k, j, _) in self.pattern.row(i) {
                dense.set(i, j, self.values[k]);
            }
        }
        dense
    }
}
