use serde::{Deserialize, Serialize};

use super::GroundTruthPolicy;
use crate::graph::{EdgeLabel, Graph};
use crate::tensor::{argmax, softmax_in_place};
use crate::{Error, Result};

/// Classifier output for one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    /// `softmax(z)`: (homophilous, heterophilious).
    pub probs: [f64; 2],
    /// One-hot of the argmax of `probs`; ties go to homophilous.
    pub hard: [f64; 2],
    /// Forward value of `detach(hard − probs) + probs`.
    pub straight_through: [f64; 2],
    pub keep: bool,
}

/// BackMax on one logit pair. The forward value is the hard one-hot; on a
/// tape the same construction is `Tape::straight_through_argmax` over
/// `softmax_rows`, whose backward is the identity onto `probs`.
pub fn backmax(z: [f64; 2]) -> EdgeDecision {
    let mut probs = z;
    softmax_in_place(&mut probs);
    let mut hard = [0.0; 2];
    hard[argmax(&probs)] = 1.0;
    let straight_through = [(hard[0] - probs[0]) + probs[0], (hard[1] - probs[1]) + probs[1]];
    EdgeDecision { probs, hard, straight_through, keep: hard[0] == 1.0 }
}

/// Partition of a graph's edges into classifier-decided edges and edges
/// whose verdict is fixed by known labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScope {
    /// Indices of edges the classifier decides, ascending.
    pub scoped: Vec<usize>,
    /// Per edge: `Some(keep)` when fixed by ground truth.
    pub fixed: Vec<Option<bool>>,
}

impl EdgeScope {
    pub fn new(graph: &Graph, policy: GroundTruthPolicy) -> Self {
        let fixed: Vec<Option<bool>> = match policy {
            GroundTruthPolicy::ClassifierOnly => vec![None; graph.edge_count()],
            GroundTruthPolicy::TrainingLabels => graph
                .label_edges(&graph.split().train)
                .into_iter()
                .map(|tag| match tag {
                    EdgeLabel::Homophilous => Some(true),
                    EdgeLabel::Heterophilious => Some(false),
                    EdgeLabel::Unknown => None,
                })
                .collect(),
        };
        let scoped = fixed.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(e, _)| e).collect();
        EdgeScope { scoped, fixed }
    }

    /// Per-edge keep weights with scoped edges set to `fill`.
    pub fn base_weights(&self, fill: f64) -> Vec<f64> {
        self.fixed.iter().map(|f| f.map_or(fill, |keep| if keep { 1.0 } else { 0.0 })).collect()
    }
}

/// Applies one decision per scoped edge on top of the fixed verdicts.
/// Returns the pruned graph and the full keep mask.
pub fn structure_from_decisions(
    graph: &Graph,
    scope: &EdgeScope,
    decisions: &[EdgeDecision],
) -> Result<(Graph, Vec<bool>)> {
    if decisions.len() != scope.scoped.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decisions for {} scoped edges",
            decisions.len(),
            scope.scoped.len()
        )));
    }
    let mut keep: Vec<bool> = scope.fixed.iter().map(|f| f.unwrap_or(true)).collect();
    for (&e, d) in scope.scoped.iter().zip(decisions) {
        keep[e] = d.keep;
    }
    Ok((graph.apply_deletion(&keep)?, keep))
}
