//! Measurements on learned structures: deletion ratios, endpoint distance
//! statistics with a γ recommendation, and spectra of `S_sym`.

mod eigen;

pub use eigen::jacobi_eigenvalues;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeLabel, Graph, PropagationMatrix};
use crate::models::EdgeRepr;
use crate::{Error, Result};

/// Largest matrix order the dense eigensolver accepts by default.
pub const DEFAULT_DENSE_LIMIT: usize = 4000;
pub const DEFAULT_BINS: usize = 50;
/// Relative off-diagonal tolerance for the Jacobi sweeps.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const UNIT_EIGENVALUE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionStats {
    pub total_edges: usize,
    pub total_heterophilious: usize,
    pub deleted: usize,
    pub deleted_heterophilious: usize,
    /// Deleted edges over all edges.
    pub total_deletion_ratio: f64,
    /// Deleted heterophilious edges over deleted edges; `None` when nothing
    /// was deleted.
    pub heterophilious_deletion_ratio: Option<f64>,
    /// Heterophilious edges still present after deletion.
    pub heterophilious_remaining: usize,
}

/// Deletion ratios of `keep` against the ground-truth labels of `original`.
pub fn deletion_stats(original: &Graph, keep: &[bool]) -> Result<DeletionStats> {
    if keep.len() != original.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "keep mask of length {} for {} edges",
            keep.len(),
            original.edge_count()
        )));
    }
    let tags = original.label_edges_all();
    let mut stats = DeletionStats {
        total_edges: keep.len(),
        total_heterophilious: 0,
        deleted: 0,
        deleted_heterophilious: 0,
        total_deletion_ratio: 0.0,
        heterophilious_deletion_ratio: None,
        heterophilious_remaining: 0,
    };
    for ((&(u, v), tag), &kept) in original.edges().iter().zip(&tags).zip(keep) {
        let hetero = match tag {
            EdgeLabel::Heterophilious => true,
            EdgeLabel::Homophilous => false,
            EdgeLabel::Unknown => return Err(Error::LabelsMissing(u, v)),
        };
        stats.total_heterophilious += hetero as usize;
        if kept {
            stats.heterophilious_remaining += hetero as usize;
        } else {
            stats.deleted += 1;
            stats.deleted_heterophilious += hetero as usize;
        }
    }
    if stats.total_edges > 0 {
        stats.total_deletion_ratio = stats.deleted as f64 / stats.total_edges as f64;
    }
    if stats.deleted > 0 {
        stats.heterophilious_deletion_ratio =
            Some(stats.deleted_heterophilious as f64 / stats.deleted as f64);
    }
    Ok(stats)
}

/// How per-edge distances are pooled into the in-class / between-class
/// aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceAggregation {
    /// Average of per-class-pair statistics over pairs that have edges.
    #[default]
    PairMeans,
    /// Pool every edge of the category directly.
    PerEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// Unordered class pair, smaller class first.
    pub classes: (usize, usize),
    pub edges: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    /// Class pairs with at least one edge, in ascending order.
    pub pairs: Vec<PairStats>,
    pub in_class: Option<Moments>,
    pub between_class: Option<Moments>,
    pub aggregation: DistanceAggregation,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn moments(values: &[f64]) -> Moments {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = values.iter().map(|d| (mean - d) * (mean - d)).sum::<f64>() / values.len() as f64;
    Moments { mean, variance }
}

/// Endpoint feature distances `‖xᵢ − xⱼ‖₂` over existing edges, grouped by
/// the endpoints' class pair. Edges with an unlabeled endpoint are skipped;
/// categories without edges are `None`.
pub fn distance_stats(graph: &Graph, aggregation: DistanceAggregation) -> DistanceStats {
    let x = graph.features();
    let mut by_pair: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for &(u, v) in graph.edges() {
        let (Some(a), Some(b)) = (graph.label(u), graph.label(v)) else { continue };
        by_pair.entry((a.min(b), a.max(b))).or_default().push(euclidean(x.row(u), x.row(v)));
    }
    let pairs: Vec<PairStats> = by_pair
        .iter()
        .map(|(&classes, d)| {
            let m = moments(d);
            PairStats { classes, edges: d.len(), mean: m.mean, variance: m.variance }
        })
        .collect();

    let aggregate = |same: bool| -> Option<Moments> {
        match aggregation {
            DistanceAggregation::PairMeans => {
                let chosen: Vec<&PairStats> =
                    pairs.iter().filter(|p| (p.classes.0 == p.classes.1) == same).collect();
                if chosen.is_empty() {
                    return None;
                }
                let k = chosen.len() as f64;
                Some(Moments {
                    mean: chosen.iter().map(|p| p.mean).sum::<f64>() / k,
                    variance: chosen.iter().map(|p| p.variance).sum::<f64>() / k,
                })
            }
            DistanceAggregation::PerEdge => {
                let pooled: Vec<f64> = by_pair
                    .iter()
                    .filter(|((a, b), _)| (a == b) == same)
                    .flat_map(|(_, d)| d.iter().copied())
                    .collect();
                (!pooled.is_empty()).then(|| moments(&pooled))
            }
        }
    };

    DistanceStats { in_class: aggregate(true), between_class: aggregate(false), pairs, aggregation }
}

/// Squared difference when the between-class and in-class mean distances
/// differ by more than `tau` pooled standard deviations, summation
/// otherwise. `None` when either category is absent.
pub fn recommend_gamma(stats: &DistanceStats, tau: f64) -> Option<EdgeRepr> {
    let (between, within) = (stats.between_class?, stats.in_class?);
    let pooled_std = ((between.variance + within.variance) / 2.0).sqrt();
    if (between.mean - within.mean).abs() > tau * pooled_std {
        Some(EdgeRepr::SquaredDiff)
    } else {
        Some(EdgeRepr::Sum)
    }
}

/// All eigenvalues of `s` in ascending order.
///
/// Connected components are diagonalized separately (the matrix is block
/// diagonal under the component permutation), each with cyclic Jacobi.
pub fn symmetric_eigenvalues(s: &PropagationMatrix, dense_limit: usize) -> Result<Vec<f64>> {
    let n = s.n();
    if n > dense_limit {
        return Err(Error::DenseLimit { n, limit: dense_limit });
    }
    let pattern = s.pattern();
    let mut component = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut stack = vec![start];
        let mut nodes = Vec::new();
        component[start] = id;
        while let Some(i) = stack.pop() {
            nodes.push(i);
            for (_, j, _) in pattern.row(i) {
                if component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
        nodes.sort_unstable();
        members.push(nodes);
    }

    let values = s.values();
    let mut local = vec![usize::MAX; n];
    let mut eigenvalues = Vec::with_capacity(n);
    for nodes in &members {
        let m = nodes.len();
        for (k, &i) in nodes.iter().enumerate() {
            local[i] = k;
        }
        let mut block = vec![0.0; m * m];
        for &i in nodes {
            for (k, j, _) in pattern.row(i) {
                block[local[i] * m + local[j]] = values[k];
            }
        }
        eigenvalues.extend(jacobi_eigenvalues(&mut block, m, JACOBI_TOLERANCE)?);
    }
    eigenvalues.sort_by(f64::total_cmp);
    Ok(eigenvalues)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub counts: Vec<usize>,
    /// Eigenvalues within 1e-6 of 1.
    pub unit_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `bins + 1` uniform edges over [−1, 1].
    pub bin_edges: Vec<f64>,
    pub before: Spectrum,
    pub after: Spectrum,
}

pub fn histogram(eigenvalues: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let width = 2.0 / bins as f64;
    let edges = (0..=bins).map(|b| -1.0 + b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in eigenvalues {
        let b = ((v + 1.0) / width).floor();
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    (edges, counts)
}

pub fn spectrum(graph: &Graph, bins: usize, dense_limit: usize) -> Result<Spectrum> {
    let eigenvalues = symmetric_eigenvalues(&graph.sym_normalize(), dense_limit)?;
    let (_, counts) = histogram(&eigenvalues, bins);
    let unit_count = eigenvalues.iter().filter(|v| (*v - 1.0).abs() <= UNIT_EIGENVALUE_TOLERANCE).count();
    Ok(Spectrum { eigenvalues, counts, unit_count })
}

/// Paired spectra of `S_sym` before and after edge deletion.
pub fn spectrum_report(before: &Graph, after: &Graph, bins: usize, dense_limit: usize) -> Result<SpectrumReport> {
    if bins == 0 {
        return Err(Error::InvalidSpec("histogram needs at least one bin".into()));
    }
    let (bin_edges, _) = histogram(&[], bins);
    Ok(SpectrumReport {
        bin_edges,
        before: spectrum(before, bins, dense_limit)?,
        after: spectrum(after, bins, dense_limit)?,
    })
}
