//! Node classifiers (MLP, SGC, SGC₂, GCN) and the edge classifier.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, PropagationMatrix, SparsePattern};
use crate::tensor::{Checkpoint, Parameter, Tape, Tensor2, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeModelKind {
    Mlp,
    Sgc,
    Sgc2,
    Gcn,
}

impl NodeModelKind {
    /// SGC-family models consume `S^K X` and can cache it per structure.
    pub fn is_sgc_family(self) -> bool {
        matches!(self, NodeModelKind::Sgc | NodeModelKind::Sgc2)
    }
}

impl fmt::Display for NodeModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeModelKind::Mlp => "mlp",
            NodeModelKind::Sgc => "sgc",
            NodeModelKind::Sgc2 => "sgc2",
            NodeModelKind::Gcn => "gcn",
        })
    }
}

impl FromStr for NodeModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(NodeModelKind::Mlp),
            "sgc" => Ok(NodeModelKind::Sgc),
            "sgc2" => Ok(NodeModelKind::Sgc2),
            "gcn" => Ok(NodeModelKind::Gcn),
            other => Err(format!("unknown model `{other}` (expected mlp, sgc, sgc2 or gcn)")),
        }
    }
}

/// How node features are mixed along the structure during a forward pass.
#[derive(Clone, Copy)]
pub enum Propagation<'a> {
    /// `S = I`.
    Identity,
    /// A fixed structure; no gradient reaches it.
    Fixed(&'a PropagationMatrix),
    /// Entry values recorded on the tape, so gradients reach whatever
    /// produced them.
    Learned { pattern: &'a Arc<SparsePattern>, values: Var },
}

pub enum NodeInput<'a> {
    Raw { features: Var, propagation: Propagation<'a> },
    /// `S^K X` computed ahead of time (SGC family only).
    Propagated(Var),
}

/// `S^K X` by K sparse-dense products.
pub fn sgc_precompute(s: &PropagationMatrix, x: &Tensor2, k: usize) -> Tensor2 {
    let mut out = x.clone();
    for _ in 0..k {
        out = s.spmm(&out);
    }
    out
}

fn propagate_once(tape: &mut Tape, propagation: Propagation<'_>, x: Var) -> Result<Var> {
    match propagation {
        Propagation::Identity => Ok(x),
        Propagation::Fixed(s) => {
            let values = tape.constant(Tensor2::from_vec(s.values().len(), 1, s.values().to_vec()));
            tape.spmm(s.pattern(), values, x)
        }
        Propagation::Learned { pattern, values } => tape.spmm(pattern, values, x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    kind: NodeModelKind,
    k: usize,
    hidden: usize,
    dropout: f64,
    params: Vec<Parameter>,
}

impl NodeModel {
    /// Glorot-initialized weights, zero biases. SGC has one linear map; the
    /// other variants have two with `hidden` units between them.
    pub fn new<R: Rng>(
        kind: NodeModelKind,
        in_dim: usize,
        hidden: usize,
        classes: usize,
        k: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let params = match kind {
            NodeModelKind::Sgc => vec![
                Parameter::glorot("w", in_dim, classes, rng),
                Parameter::zeros("b", 1, classes),
            ],
            _ => vec![
                Parameter::glorot("w0", in_dim, hidden, rng),
                Parameter::zeros("b0", 1, hidden),
                Parameter::glorot("w1", hidden, classes, rng),
                Parameter::zeros("b1", 1, classes),
            ],
        };
        NodeModel { kind, k, hidden, dropout, params }
    }

    pub fn kind(&self) -> NodeModelKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Same model with another kind and K, sharing parameters. Only valid
    /// between kinds with identical parameter layouts.
    pub fn retag(&self, kind: NodeModelKind, k: usize) -> NodeModel {
        assert_eq!(
            kind == NodeModelKind::Sgc,
            self.kind == NodeModelKind::Sgc,
            "retag between incompatible parameter layouts"
        );
        NodeModel { kind, k, ..self.clone() }
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| p.bind(tape)).collect()
    }

    pub fn accumulate(&mut self, tape: &Tape, vars: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            p.accumulate(tape, v);
        }
    }

    fn mlp2<R: Rng>(&self, tape: &mut Tape, vars: &[Var], x: Var, training: bool, rng: &mut R) -> Result<Var> {
        let x = tape.dropout(x, self.dropout, training, rng)?;
        let h = tape.matmul(x, vars[0])?;
        let h = tape.add_bias(h, vars[1])?;
        let h = tape.relu(h);
        let h = tape.dropout(h, self.dropout, training, rng)?;
        let out = tape.matmul(h, vars[2])?;
        tape.add_bias(out, vars[3])
    }

    /// Class logits (`n × c`); apply `softmax_rows` for probabilities.
    ///
    /// - MLP: two-layer perceptron on the raw (or given) features.
    /// - SGC: one linear map of `S^K X`.
    /// - SGC₂: the two-layer perceptron on `S^K X`.
    /// - GCN: `S·ReLU(S·drop(X)W₀ + b₀)` then `S·drop(H)W₁ + b₁`.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        input: NodeInput<'_>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        match self.kind {
            NodeModelKind::Mlp => {
                let x = match input {
                    NodeInput::Raw { features, .. } | NodeInput::Propagated(features) => features,
                };
                self.mlp2(tape, vars, x, training, rng)
            }
            NodeModelKind::Sgc | NodeModelKind::Sgc2 => {
                let x = match input {
                    NodeInput::Propagated(x) => x,
                    NodeInput::Raw { features, propagation } => {
                        let mut x = features;
                        for _ in 0..self.k {
                            x = propagate_once(tape, propagation, x)?;
                        }
                        x
                    }
                };
                if self.kind == NodeModelKind::Sgc {
                    let out = tape.matmul(x, vars[0])?;
                    tape.add_bias(out, vars[1])
                } else {
                    self.mlp2(tape, vars, x, training, rng)
                }
            }
            NodeModelKind::Gcn => {
                let NodeInput::Raw { features, propagation } = input else {
                    return Err(Error::DimensionMismatch(
                        "GCN needs raw features and a propagation".into(),
                    ));
                };
                let x = tape.dropout(features, self.dropout, training, rng)?;
                let h = tape.matmul(x, vars[0])?;
                let h = propagate_once(tape, propagation, h)?;
                let h = tape.add_bias(h, vars[1])?;
                let h = tape.relu(h);
                let h = tape.dropout(h, self.dropout, training, rng)?;
                let out = tape.matmul(h, vars[2])?;
                let out = propagate_once(tape, propagation, out)?;
                tape.add_bias(out, vars[3])
            }
        }
    }

    /// Evaluation-mode class probabilities.
    pub fn predict(&self, features: &Tensor2, propagation: Option<&PropagationMatrix>) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.constant(features.clone());
        let propagation = propagation.map_or(Propagation::Identity, Propagation::Fixed);
        let mut unused = crate::rng::stream(0, crate::rng::Stream::Dropout);
        let logits =
            self.forward(&mut tape, &vars, NodeInput::Raw { features: x, propagation }, false, &mut unused)?;
        Ok(tape.value(logits).softmax_rows())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let header = BTreeMap::from([
            ("model".to_string(), "node".to_string()),
            ("variant".to_string(), self.kind.to_string()),
            ("k".to_string(), self.k.to_string()),
            ("hidden".to_string(), self.hidden.to_string()),
            ("dropout".to_string(), self.dropout.to_string()),
        ]);
        Checkpoint::new(header, &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<NodeModel> {
        let get = |key: &str| {
            ckpt.header.get(key).ok_or_else(|| Error::Checkpoint(format!("header field `{key}` missing")))
        };
        let bad = |key: &str| Error::Checkpoint(format!("header field `{key}` malformed"));
        let kind: NodeModelKind = get("variant")?.parse().map_err(|_| bad("variant"))?;
        let k = get("k")?.parse().map_err(|_| bad("k"))?;
        let hidden = get("hidden")?.parse().map_err(|_| bad("hidden"))?;
        let dropout = get("dropout")?.parse().map_err(|_| bad("dropout"))?;
        let mut params: Vec<Parameter> = ckpt
            .tensors
            .iter()
            .map(|t| Parameter::zeros(t.name.clone(), t.rows, t.cols))
            .collect();
        ckpt.restore(&mut params)?;
        Ok(NodeModel { kind, k, hidden, dropout, params })
    }
}

/// Edge-representation mode γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRepr {
    /// γ = 0: `Wxᵢ + Wxⱼ`.
    Sum,
    /// γ = 1: `(Wxᵢ − Wxⱼ)²` element-wise.
    SquaredDiff,
}

impl EdgeRepr {
    pub fn gamma(self) -> u8 {
        match self {
            EdgeRepr::Sum => 0,
            EdgeRepr::SquaredDiff => 1,
        }
    }

    pub fn from_gamma(gamma: u8) -> Option<Self> {
        match gamma {
            0 => Some(EdgeRepr::Sum),
            1 => Some(EdgeRepr::SquaredDiff),
            _ => None,
        }
    }
}

/// Representation of one edge from the projected endpoints `Wxᵢ`, `Wxⱼ`.
pub fn combine_projected(pi: &[f64], pj: &[f64], repr: EdgeRepr) -> Vec<f64> {
    match repr {
        EdgeRepr::Sum => pi.iter().zip(pj).map(|(a, b)| a + b).collect(),
        EdgeRepr::SquaredDiff => pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).collect(),
    }
}

/// `R(Wxᵢ, Wxⱼ, γ)` for a projection stored as `f × f′` (so `Wx = xᵀ·proj`).
pub fn edge_representation(xi: &[f64], xj: &[f64], proj: &Tensor2, repr: EdgeRepr) -> Vec<f64> {
    let project = |x: &[f64]| Tensor2::from_vec(1, x.len(), x.to_vec()).matmul(proj).into_vec();
    combine_projected(&project(xi), &project(xj), repr)
}

/// Single-layer binary classifier over edge representations. Output column 0
/// is "homophilous", column 1 "heterophilious".
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeClassifier {
    repr: EdgeRepr,
    params: Vec<Parameter>,
}

impl EdgeClassifier {
    pub fn new<R: Rng>(in_dim: usize, edge_dim: usize, repr: EdgeRepr, rng: &mut R) -> Self {
        EdgeClassifier {
            repr,
            params: vec![
                Parameter::glorot("w", in_dim, edge_dim, rng),
                Parameter::glorot("wc", edge_dim, 2, rng),
                Parameter::zeros("bc", 1, 2),
            ],
        }
    }

    /// Classifier with every parameter set to zero.
    pub fn zeroed(in_dim: usize, edge_dim: usize, repr: EdgeRepr) -> Self {
        EdgeClassifier {
            repr,
            params: vec![
                Parameter::zeros("w", in_dim, edge_dim),
                Parameter::zeros("wc", edge_dim, 2),
                Parameter::zeros("bc", 1, 2),
            ],
        }
    }

    pub fn repr(&self) -> EdgeRepr {
        self.repr
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| p.bind(tape)).collect()
    }

    pub fn accumulate(&mut self, tape: &Tape, vars: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            p.accumulate(tape, v);
        }
    }

    /// Edge logits `W_c e + b_c` (`m × 2`) for the given endpoint pairs.
    pub fn logits(&self, tape: &mut Tape, vars: &[Var], x: Var, edges: &[(usize, usize)]) -> Result<Var> {
        let projected = tape.matmul(x, vars[0])?;
        let us: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let vs: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let pu = tape.gather_rows(projected, &us);
        let pv = tape.gather_rows(projected, &vs);
        let e = match self.repr {
            EdgeRepr::Sum => tape.add(pu, pv)?,
            EdgeRepr::SquaredDiff => {
                let d = tape.sub(pu, pv)?;
                tape.square(d)
            }
        };
        let z = tape.matmul(e, vars[1])?;
        tape.add_bias(z, vars[2])
    }

    /// Logits for a subset of `graph`'s edges, outside any training tape.
    pub fn edge_logits(&self, graph: &Graph, edge_subset: &[usize]) -> Result<Tensor2> {
        let edges: Vec<(usize, usize)> = edge_subset.iter().map(|&e| graph.edges()[e]).collect();
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.constant(graph.features().clone());
        let z = self.logits(&mut tape, &vars, x, &edges)?;
        Ok(tape.value(z).clone())
    }

    /// `(p_homophilous, p_heterophilious)` per edge in `edge_subset`.
    pub fn classify_edges(&self, graph: &Graph, edge_subset: &[usize]) -> Result<Tensor2> {
        Ok(self.edge_logits(graph, edge_subset)?.softmax_rows())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let header = BTreeMap::from([
            ("model".to_string(), "edge".to_string()),
            ("gamma".to_string(), self.repr.gamma().to_string()),
        ]);
        Checkpoint::new(header, &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<EdgeClassifier> {
        let repr = ckpt
            .header
            .get("gamma")
            .and_then(|g| g.parse().ok())
            .and_then(EdgeRepr::from_gamma)
            .ok_or_else(|| Error::Checkpoint("header field `gamma` missing or malformed".into()))?;
        let mut params: Vec<Parameter> = ckpt
            .tensors
            .iter()
            .map(|t| Parameter::zeros(t.name.clone(), t.rows, t.cols))
            .collect();
        ckpt.restore(&mut params)?;
        Ok(EdgeClassifier { repr, params })
    }
}
