use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TrainConfig;
use crate::analysis::DeletionStats;
use crate::{Error, Result};

/// Per-epoch metrics of the node model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochCurves {
    /// Training-mode (dropout on) cross-entropy before each step.
    pub train_loss: Vec<f64>,
    /// Evaluation-mode cross-entropy on validation nodes after each step.
    pub val_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    /// Hamming distance between this epoch's keep mask and the previous one.
    pub structure_changes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainMetrics {
    pub train_edges: usize,
    pub val_edges: usize,
    pub epochs_run: usize,
    /// Epoch (1-based) whose parameters were kept; 0 when no step ran.
    pub best_epoch: usize,
    pub loss: Vec<f64>,
    pub train_edge_accuracy: f64,
    pub val_edge_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub curves: EpochCurves,
    pub epochs_run: usize,
    /// 1-based epoch of the best validation accuracy.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Test accuracy at `best_epoch`.
    pub test_accuracy: f64,
    pub final_train_loss: f64,
    pub pretrain: Option<PretrainMetrics>,
    /// Set when no training edges existed and the run used the input graph.
    pub fell_back_to_base: bool,
    /// Structure at `best_epoch`, one bit per input edge.
    #[serde(serialize_with = "bits_out", deserialize_with = "bits_in")]
    pub keep_mask: Vec<bool>,
    /// Present when every node is labeled.
    pub deletion: Option<DeletionStats>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        serde_json::from_str(text).map_err(|e| Error::Parse { path: "run report".into(), line: e.line(), message: e.to_string() })
    }
}

fn bits_out<S: Serializer>(bits: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
    let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.serialize_str(&text)
}

fn bits_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
    let text = String::deserialize(d)?;
    text.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            other => Err(serde::de::Error::custom(format!("keep mask holds `{other}`"))),
        })
        .collect()
}
