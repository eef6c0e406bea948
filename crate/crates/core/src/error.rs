use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("split masks overlap at node {0}")]
    OverlappingMasks(usize),

    #[error("node {0} is covered by a split mask but has no label")]
    UnlabeledMaskedNode(usize),

    #[error("label {label} at node {node} is outside [0, {classes})")]
    InvalidLabel { node: usize, label: usize, classes: usize },

    #[error("no countable edges")]
    NoCountableEdges,

    #[error("empty mask")]
    EmptyMask,

    #[error("invalid rate {0}")]
    InvalidRate(f64),

    #[error("ground-truth labels missing for edge ({0}, {1})")]
    LabelsMissing(usize, usize),

    #[error("no trainable edges among training nodes")]
    NoTrainableEdges,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("infeasible graph: {0}")]
    Infeasible(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("matrix of order {n} exceeds dense limit {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("eigensolver did not converge after {0} sweeps")]
    NotConverged(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}
