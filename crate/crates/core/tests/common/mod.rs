//! Shared builders and brute-force oracles for the integration tests.
#![allow(dead_code)]

use lhe_core::graph::{Graph, Split};
use lhe_core::models::{EdgeClassifier, NodeInput, NodeModel, NodeModelKind, Propagation};
use lhe_core::rng::{stream, Stream};
use lhe_core::tensor::{Parameter, Tape, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Erdős–Rényi graph with Gaussian-ish features, labels in `[0, classes)`
/// (a `1 - labeled` fraction unlabeled) and a random split over labeled nodes.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64, f: usize, classes: usize, labeled: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let data = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<Option<usize>> = (0..n)
        .map(|_| (rng.random::<f64>() < labeled).then(|| rng.random_range(0..classes)))
        .collect();
    let mut split = Split::empty(n);
    for (i, l) in labels.iter().enumerate() {
        if l.is_some() {
            match rng.random_range(0..3) {
                0 => split.train[i] = true,
                1 => split.val[i] = true,
                _ => split.test[i] = true,
            }
        }
    }
    Graph::build_with_classes(&edges, Tensor2::from_vec(n, f, data), labels, split, classes).unwrap().0
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` from the dense formula.
pub fn dense_sym_normalize(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = dense_adjacency(g);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    (0..n).map(|i| (0..n).map(|j| a[i][j] / (d[i].sqrt() * d[j].sqrt())).collect()).collect()
}

pub fn dense_matmul(a: &[Vec<f64>], x: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(a.len(), x.cols());
    for (i, row) in a.iter().enumerate() {
        for (k, &aik) in row.iter().enumerate() {
            for j in 0..x.cols() {
                out.set(i, j, out.get(i, j) + aik * x.get(k, j));
            }
        }
    }
    out
}

/// Training cross-entropy of a node model with dropout masks drawn from
/// a fresh `Dropout` stream, plus the tape gradient of every parameter.
pub fn node_loss(model: &NodeModel, g: &Graph, with_grad: bool) -> (f64, Vec<Tensor2>) {
    let s = g.sym_normalize();
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let x = tape.constant(g.features().clone());
    let propagation = if model.kind() == NodeModelKind::Mlp { Propagation::Identity } else { Propagation::Fixed(&s) };
    let mut rng = stream(9, Stream::Dropout);
    let logits = model.forward(&mut tape, &vars, NodeInput::Raw { features: x, propagation }, true, &mut rng).unwrap();
    let targets: Vec<usize> = g.labels().iter().map(|l| l.unwrap_or(0)).collect();
    let loss = tape.cross_entropy(logits, &targets, &g.split().train).unwrap();
    let value = tape.value(loss).item();
    if !with_grad {
        return (value, Vec::new());
    }
    tape.backward(loss);
    let grads = vars.iter().zip(model.params()).map(|(&v, p)| {
        tape.grad(v).cloned().unwrap_or_else(|| Tensor2::zeros(p.value.rows(), p.value.cols()))
    });
    (value, grads.collect())
}

pub fn edge_loss(ec: &EdgeClassifier, g: &Graph, with_grad: bool) -> (f64, Vec<Tensor2>) {
    let mut tape = Tape::new();
    let vars = ec.bind(&mut tape);
    let x = tape.constant(g.features().clone());
    let z = ec.logits(&mut tape, &vars, x, g.edges()).unwrap();
    let targets: Vec<usize> = g.edges().iter().map(|&(u, v)| (g.label(u) != g.label(v)) as usize).collect();
    let loss = tape.cross_entropy(z, &targets, &vec![true; targets.len()]).unwrap();
    let value = tape.value(loss).item();
    if !with_grad {
        return (value, Vec::new());
    }
    tape.backward(loss);
    (value, vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect())
}

/// Relative error with the denominator floored at 1e-6, so entries whose
/// true gradient vanishes are compared absolutely.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every entry of every parameter.
pub fn fd_max_rel_err(
    params: &[Parameter],
    analytic: &[Tensor2],
    eps: f64,
    mut loss: impl FnMut(&[Parameter]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, g) in analytic.iter().enumerate() {
        for j in 0..g.as_slice().len() {
            let orig = work[pi].value.as_slice()[j];
            work[pi].value.as_mut_slice()[j] = orig + eps;
            let plus = loss(&work);
            work[pi].value.as_mut_slice()[j] = orig - eps;
            let minus = loss(&work);
            work[pi].value.as_mut_slice()[j] = orig;
            worst = worst.max(rel_err(g.as_slice()[j], (plus - minus) / (2.0 * eps)));
        }
    }
    worst
}

pub fn with_params(model: &NodeModel, params: &[Parameter]) -> NodeModel {
    let mut m = model.clone();
    m.params_mut().clone_from_slice(params);
    m
}

pub fn ec_with_params(ec: &EdgeClassifier, params: &[Parameter]) -> EdgeClassifier {
    let mut e = ec.clone();
    e.params_mut().clone_from_slice(params);
    e
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Stream::Graph)
}
