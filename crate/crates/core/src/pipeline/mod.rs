//! LHE orchestration: edge-classifier pretraining, BackMax, joint training
//! (end-to-end and separate), and the oracle / random-deletion baselines.

mod baseline;
mod decision;
mod report;
mod train;

pub use baseline::{oracle_drop, random_drop};
pub use decision::{backmax, structure_from_decisions, EdgeDecision, EdgeScope};
pub use report::{EpochCurves, PretrainMetrics, RunReport};
pub use train::{
    accuracy, edge_training_set, evaluate, pretrain_edge_classifier, run_experiment, train_base,
    train_end_to_end, train_separate, BasePlan, EdgeTrainingSet,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::models::{EdgeRepr, NodeModelKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Task loss back-propagates into the edge classifier through BackMax.
    EndToEnd,
    /// Edge classifier keeps training on its own loss; the base model sees
    /// the structure renewed every epoch.
    Separate,
    /// Base model on the input graph.
    BaseOnly,
    /// Pretrain, fix the structure once, then train the base model.
    BaseOnFixed,
    /// Ground-truth heterophilious edges removed at `drop_rate`.
    Oracle,
    /// DropEdge: `drop_rate` of all edges resampled every epoch.
    RandomDrop,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::EndToEnd, Mode::Separate, Mode::BaseOnly, Mode::BaseOnFixed, Mode::Oracle, Mode::RandomDrop];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EndToEnd => "end_to_end",
            Mode::Separate => "separate",
            Mode::BaseOnly => "base_only",
            Mode::BaseOnFixed => "base_on_fixed",
            Mode::Oracle => "oracle",
            Mode::RandomDrop => "random_drop",
        }
    }

    pub fn uses_edge_classifier(self) -> bool {
        matches!(self, Mode::EndToEnd | Mode::Separate | Mode::BaseOnFixed)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Treatment of edges whose endpoints are both training nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthPolicy {
    /// Their labels are known: delete exactly the heterophilious ones.
    #[default]
    TrainingLabels,
    /// Let the classifier decide every edge.
    ClassifierOnly,
}

impl FromStr for GroundTruthPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "training_labels" => Ok(GroundTruthPolicy::TrainingLabels),
            "classifier_only" => Ok(GroundTruthPolicy::ClassifierOnly),
            other => Err(format!("unknown ground-truth policy `{other}`")),
        }
    }
}

impl fmt::Display for GroundTruthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroundTruthPolicy::TrainingLabels => "training_labels",
            GroundTruthPolicy::ClassifierOnly => "classifier_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub model: NodeModelKind,
    pub epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub pretrain_epochs: usize,
    pub pretrain_patience: usize,
    pub lr: f64,
    /// Also used for the edge classifier during joint training.
    pub pretrain_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    /// Projection size f′ of the edge classifier.
    pub edge_dim: usize,
    pub k: usize,
    pub gamma: EdgeRepr,
    /// Deletion rate for `oracle` and `random_drop`.
    pub drop_rate: f64,
    pub ground_truth_policy: GroundTruthPolicy,
    /// Reweight pretraining classes by inverse frequency.
    pub class_weighted: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Separate,
            model: NodeModelKind::Sgc2,
            epochs: 500,
            patience: 100,
            pretrain_epochs: 200,
            pretrain_patience: 30,
            lr: 0.01,
            pretrain_lr: 0.005,
            weight_decay: 0.0005,
            dropout: 0.6,
            hidden: 64,
            edge_dim: 64,
            k: 2,
            gamma: EdgeRepr::SquaredDiff,
            drop_rate: 0.0,
            ground_truth_policy: GroundTruthPolicy::TrainingLabels,
            class_weighted: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.pretrain_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        if self.hidden == 0 || self.edge_dim == 0 {
            return bad("hidden and edge dimensions must be positive");
        }
        let rate_ok = match self.mode {
            Mode::Oracle => (0.0..=1.0).contains(&self.drop_rate),
            Mode::RandomDrop => (0.0..1.0).contains(&self.drop_rate),
            _ => true,
        };
        if !rate_ok {
            return Err(Error::InvalidRate(self.drop_rate));
        }
        Ok(())
    }
}
