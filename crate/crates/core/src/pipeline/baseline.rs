use rand::seq::index::sample;
use rand::Rng;

use crate::graph::{EdgeLabel, Graph};
use crate::{Error, Result};

fn keep_all_but<R: Rng>(m: usize, candidates: &[usize], remove: usize, rng: &mut R) -> Vec<bool> {
    let mut keep = vec![true; m];
    for i in sample(rng, candidates.len(), remove) {
        keep[candidates[i]] = false;
    }
    keep
}

/// Removes a uniformly random `round(rate · #heterophilious)` of the
/// ground-truth heterophilious edges. Homophilous edges are untouched.
pub fn oracle_drop<R: Rng>(graph: &Graph, rate: f64, rng: &mut R) -> Result<(Graph, Vec<bool>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let mut hetero = Vec::new();
    for (e, (tag, &(u, v))) in graph.label_edges_all().into_iter().zip(graph.edges()).enumerate() {
        match tag {
            EdgeLabel::Heterophilious => hetero.push(e),
            EdgeLabel::Homophilous => {}
            EdgeLabel::Unknown => return Err(Error::LabelsMissing(u, v)),
        }
    }
    let remove = (rate * hetero.len() as f64).round() as usize;
    let keep = keep_all_but(graph.edge_count(), &hetero, remove, rng);
    Ok((graph.apply_deletion(&keep)?, keep))
}

/// Removes a uniformly random `round(rate · |E|)` of all edges.
pub fn random_drop<R: Rng>(graph: &Graph, rate: f64, rng: &mut R) -> Result<(Graph, Vec<bool>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let m = graph.edge_count();
    let all: Vec<usize> = (0..m).collect();
    let remove = (rate * m as f64).round() as usize;
    let keep = keep_all_but(m, &all, remove, rng);
    Ok((graph.apply_deletion(&keep)?, keep))
}
