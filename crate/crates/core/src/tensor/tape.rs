//! Reverse-mode automatic differentiation over [`Tensor2`] values.
//!
//! A [`Tape`] records every primitive in execution order. `backward` walks
//! the record once in reverse, accumulating gradients for every node that
//! depends on a differentiable leaf.

use std::sync::Arc;

use rand::Rng;

use super::{log_sum_exp, softmax_in_place, Tensor2};
use crate::graph::{normalized_entry, EntrySource, SparsePattern};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Square(Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64> },
    Gather(Var, Vec<usize>),
    Scatter(Var, Vec<usize>),
    Column(Var, usize),
    StraightThrough(Var),
    Normalize { weights: Var, pattern: Arc<SparsePattern>, degrees: Vec<f64> },
    SpMM { values: Var, x: Var, pattern: Arc<SparsePattern> },
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor2>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable input.
    pub fn variable(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::DimensionMismatch(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = av.matmul(bv);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a `1 × cols` bias to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::DimensionMismatch(format!(
                "bias {:?} for input {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::DimensionMismatch(format!(
                "{what} {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let rg = self.needs(a);
        self.push(out, Op::Square(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Inverted dropout. Outside training, or at rate 0, returns `x` itself
    /// and records nothing.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let len = self.value(x).as_slice().len();
        let mask: Vec<f64> =
            (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale }).collect();
        let xv = self.value(x);
        let data = xv.as_slice().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor2::from_vec(xv.rows(), xv.cols(), data);
        let rg = self.needs(x);
        Ok(self.push(out, Op::Dropout(x, mask), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        let rg = self.needs(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Mean negative log-softmax of the target class over rows with
    /// `row_mask[r]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], row_mask: &[bool]) -> Result<Var> {
        let weights: Vec<f64> = row_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        self.weighted_cross_entropy(logits, targets, &weights)
    }

    /// Cross-entropy with per-row weights, normalized by the weight total.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        row_weights: &[f64],
    ) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.rows() || row_weights.len() != z.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} targets / {} weights for {} rows",
                targets.len(),
                row_weights.len(),
                z.rows()
            )));
        }
        let total: f64 = row_weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyMask);
        }
        let weights: Vec<f64> = row_weights.iter().map(|w| w / total).collect();
        let mut loss = 0.0;
        for (r, (&t, &w)) in targets.iter().zip(&weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            if t >= z.cols() {
                return Err(Error::DimensionMismatch(format!("target {t} for {} classes", z.cols())));
            }
            let row = z.row(r);
            loss += w * (log_sum_exp(row) - row[t]);
        }
        let rg = self.needs(logits);
        Ok(self.push(
            Tensor2::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), weights },
            rg,
        ))
    }

    /// Rows of `a` at `idx`, in order.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Tensor2::zeros(idx.len(), av.cols());
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(av.row(i));
        }
        let rg = self.needs(a);
        self.push(out, Op::Gather(a, idx.to_vec()), rg)
    }

    /// Copy of the constant `base` with row `idx[k]` replaced by row `k` of
    /// `src`. Gradient flows only to `src`.
    pub fn scatter_rows(&mut self, base: Tensor2, src: Var, idx: &[usize]) -> Result<Var> {
        let sv = self.value(src);
        if sv.rows() != idx.len() || sv.cols() != base.cols() {
            return Err(Error::DimensionMismatch(format!(
                "scatter {:?} into {:?} at {} rows",
                sv.shape(),
                base.shape(),
                idx.len()
            )));
        }
        let mut out = base;
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(sv.row(k));
        }
        let rg = self.needs(src);
        Ok(self.push(out, Op::Scatter(src, idx.to_vec()), rg))
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.get(r, j)).collect();
        let out = Tensor2::from_vec(av.rows(), 1, data);
        let rg = self.needs(a);
        self.push(out, Op::Column(a, j), rg)
    }

    /// Forward: one-hot of the row argmax (ties to the lower index).
    /// Backward: identity, as if the output were `a` itself.
    pub fn straight_through_argmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor2::zeros(av.rows(), av.cols());
        for (r, c) in av.argmax_rows().into_iter().enumerate() {
            if av.cols() > 0 {
                out.set(r, c, 1.0);
            }
        }
        let rg = self.needs(a);
        self.push(out, Op::StraightThrough(a), rg)
    }

    /// Entry values of `D̃^{-1/2}(A(w) + I)D̃^{-1/2}` for an `m × 1` column of
    /// edge weights, laid out in `pattern`'s storage order (`nnz × 1`).
    pub fn normalize_adjacency(&mut self, weights: Var, pattern: &Arc<SparsePattern>) -> Result<Var> {
        let wv = self.value(weights);
        if wv.cols() != 1 || wv.rows() != pattern.edges().len() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} edge weights for {} edges",
                wv.shape(),
                pattern.edges().len()
            )));
        }
        if !pattern.has_self_loops() {
            return Err(Error::DimensionMismatch(
                "differentiable normalization requires self-loops".into(),
            ));
        }
        let (values, degrees) = pattern.normalized_values(wv.as_slice());
        let out = Tensor2::from_vec(values.len(), 1, values);
        let rg = self.needs(weights);
        Ok(self.push(out, Op::Normalize { weights, pattern: Arc::clone(pattern), degrees }, rg))
    }

    /// `S X` where `values` (`nnz × 1`) fills `pattern`.
    pub fn spmm(&mut self, pattern: &Arc<SparsePattern>, values: Var, x: Var) -> Result<Var> {
        let (vv, xv) = (self.value(values), self.value(x));
        if vv.rows() != pattern.nnz() || vv.cols() != 1 || xv.rows() != pattern.n() {
            return Err(Error::DimensionMismatch(format!(
                "spmm with {:?} values and {:?} input for order {}",
                vv.shape(),
                xv.shape(),
                pattern.n()
            )));
        }
        let out = pattern.spmm(vv.as_slice(), xv);
        let rg = self.needs(values) || self.needs(x);
        Ok(self.push(out, Op::SpMM { values, x, pattern: Arc::clone(pattern) }, rg))
    }

    /// Back-propagates from the scalar `loss`, replacing any gradients from a
    /// previous call.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward target must be a scalar");
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Tensor2| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].requires_grad {
                    acc(*a, g.matmul_t(val(*b)));
                }
                if nodes[b.0].requires_grad {
                    acc(*b, val(*a).t_matmul(g));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let mut db = Tensor2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |gv, x| 2.0 * x * gv)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })),
            Op::Dropout(a, mask) => {
                let data = g.as_slice().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                acc(*a, Tensor2::from_vec(g.rows(), g.cols(), data));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut da = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((d, p), q) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = p * (q - inner);
                    }
                }
                acc(*a, da);
            }
            Op::CrossEntropy { logits, targets, weights } => {
                let z = val(*logits);
                let scale = g.item();
                let mut dz = Tensor2::zeros(z.rows(), z.cols());
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let row = dz.row_mut(r);
                    row.copy_from_slice(z.row(r));
                    softmax_in_place(row);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= w * scale);
                }
                acc(*logits, dz);
            }
            Op::Gather(a, idx) => {
                let av = val(*a);
                let mut da = Tensor2::zeros(av.rows(), av.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (d, v) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                        *d += v;
                    }
                }
                acc(*a, da);
            }
            Op::Scatter(src, idx) => {
                let mut ds = Tensor2::zeros(idx.len(), g.cols());
                for (k, &i) in idx.iter().enumerate() {
                    ds.row_mut(k).copy_from_slice(g.row(i));
                }
                acc(*src, ds);
            }
            Op::Column(a, j) => {
                let av = val(*a);
                let mut da = Tensor2::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    da.set(r, *j, g.get(r, 0));
                }
                acc(*a, da);
            }
            Op::StraightThrough(a) => acc(*a, g.clone()),
            Op::Normalize { weights, pattern, degrees } => {
                let w = val(*weights).as_slice();
                let values = node.value.as_slice();
                let gv = g.as_slice();
                let mut dd = vec![0.0; pattern.n()];
                let mut dw = vec![0.0; w.len()];
                for i in 0..pattern.n() {
                    for (k, j, src) in pattern.row(i) {
                        match src {
                            EntrySource::SelfLoop => {
                                dd[i] -= gv[k] / (degrees[i] * degrees[i]);
                            }
                            EntrySource::Edge(e) => {
                                dw[e] += gv[k] * normalized_entry(1.0, degrees[i], degrees[j]);
                                let half = 0.5 * gv[k] * values[k];
                                dd[i] -= half / degrees[i];
                                dd[j] -= half / degrees[j];
                            }
                        }
                    }
                }
                for (e, &(u, v)) in pattern.edges().iter().enumerate() {
                    dw[e] += dd[u] + dd[v];
                }
                acc(*weights, Tensor2::from_vec(w.len(), 1, dw));
            }
            Op::SpMM { values, x, pattern } => {
                let (vv, xv) = (val(*values).as_slice(), val(*x));
                if nodes[x.0].requires_grad {
                    let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                    for i in 0..pattern.n() {
                        for (k, j, _) in pattern.row(i) {
                            for (d, gi) in dx.row_mut(j).iter_mut().zip(g.row(i)) {
                                *d += vv[k] * gi;
                            }
                        }
                    }
                    acc(*x, dx);
                }
                if nodes[values.0].requires_grad {
                    let mut dv = vec![0.0; vv.len()];
                    for i in 0..pattern.n() {
                        for (k, j, _) in pattern.row(i) {
                            dv[k] = super::dot(g.row(i), xv.row(j));
                        }
                    }
                    acc(*values, Tensor2::from_vec(vv.len(), 1, dv));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn linear_identity_and_zero_inputs() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::identity(2));
        let w = tape.variable(Tensor2::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let y = tape.matmul(x, w).unwrap();
        assert_eq!(tape.value(y), &Tensor2::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));

        let z = tape.constant(Tensor2::zeros(3, 2));
        let y = tape.matmul(z, w).unwrap();
        assert_eq!(tape.value(y), &Tensor2::zeros(3, 2));
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor2::zeros(2, 3));
        let b = tape.constant(Tensor2::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn uniform_cross_entropy_is_log_classes() {
        let mut tape = Tape::new();
        let z = tape.variable(Tensor2::zeros(4, 5));
        let loss = tape.cross_entropy(z, &[0, 1, 2, 3], &[true; 4]).unwrap();
        assert!((tape.value(loss).item() - 5f64.ln()).abs() < 1e-15);
        assert!((tape.value(loss).item() - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_rejects_empty_mask() {
        let mut tape = Tape::new();
        let z = tape.variable(Tensor2::zeros(2, 3));
        assert!(matches!(tape.cross_entropy(z, &[0, 1], &[false, false]), Err(Error::EmptyMask)));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = stream(0, Stream::Dropout);
        let mut tape = Tape::new();
        let x = tape.variable(Tensor2::filled(3, 3, 2.0));
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(matches!(tape.dropout(x, 1.0, true, &mut rng), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn dropout_zero_fraction_matches_rate() {
        let mut rng = stream(1, Stream::Dropout);
        let mut tape = Tape::new();
        let x = tape.variable(Tensor2::filled(1000, 100, 1.0));
        let y = tape.dropout(x, 0.6, true, &mut rng).unwrap();
        let values = tape.value(y).as_slice();
        let zeros = values.iter().filter(|&&v| v == 0.0).count() as f64 / values.len() as f64;
        assert!((zeros - 0.6).abs() < 0.01, "zero fraction {zeros}");
        let survivor = values.iter().find(|&&v| v != 0.0).unwrap();
        assert!((survivor - 2.5).abs() < 1e-12);
    }

    #[test]
    fn straight_through_forward_is_one_hot() {
        let mut tape = Tape::new();
        let p = tape.variable(Tensor2::from_rows(&[[0.3, 0.7], [0.5, 0.5], [0.9, 0.1]]));
        let h = tape.straight_through_argmax(p);
        assert_eq!(tape.value(h), &Tensor2::from_rows(&[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]));
    }

    #[test]
    fn gradient_of_sum_of_losses_is_sum_of_gradients() {
        let build = |tape: &mut Tape, which: u8| {
            let w = tape.variable(Tensor2::from_rows(&[[0.3, -0.2], [0.1, 0.4]]));
            let x = tape.constant(Tensor2::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]));
            let z = tape.matmul(x, w).unwrap();
            let l1 = tape.cross_entropy(z, &[0, 1], &[true, true]).unwrap();
            let l2 = tape.cross_entropy(z, &[1, 1], &[true, false]).unwrap();
            let loss = match which {
                0 => l1,
                1 => l2,
                _ => tape.add(l1, l2).unwrap(),
            };
            tape.backward(loss);
            tape.grad(w).unwrap().clone()
        };
        let g1 = build(&mut Tape::new(), 0);
        let g2 = build(&mut Tape::new(), 1);
        let g12 = build(&mut Tape::new(), 2);
        let mut sum = g1;
        sum.add_assign(&g2);
        assert!(sum.max_abs_diff(&g12) < 1e-15);
    }
}
