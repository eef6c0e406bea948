//! Learning to drop heterophilious edges (LHE) for message-passing GNNs.
//!
//! The crate bundles everything needed to run the method at desk scale:
//!
//! - [`graph`]: undirected graphs, splits, edge tagging, homophily and
//!   symmetric normalization.
//! - [`tensor`]: a small dense engine with a reverse-mode tape and Adam.
//! - [`models`]: MLP, SGC, SGC₂, GCN and the edge classifier.
//! - [`pipeline`]: pretraining, BackMax, the joint training loops and the
//!   oracle / DropEdge baselines.
//! - [`synth`]: stochastic block model graphs with tunable homophily.
//! - [`analysis`]: deletion ratios, distance statistics and spectra.
//! - [`io`]: the plain-text dataset format.

pub mod analysis;
pub mod error;
pub mod graph;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{EdgeLabel, Graph, LabelScope, PropagationMatrix, Split};
pub use tensor::Tensor2;
