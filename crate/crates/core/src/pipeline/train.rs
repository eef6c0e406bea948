use std::sync::Arc;
use std::time::Instant;

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::baseline::{oracle_drop, random_drop};
use super::decision::{backmax, EdgeScope};
use super::report::{EpochCurves, PretrainMetrics, RunReport};
use super::{Mode, TrainConfig};
use crate::analysis::deletion_stats;
use crate::graph::{EdgeLabel, Graph, PropagationMatrix, SparsePattern};
use crate::models::{sgc_precompute, EdgeClassifier, NodeInput, NodeModel, NodeModelKind, Propagation};
use crate::rng::{stream, Stream};
use crate::tensor::{argmax, log_sum_exp, Adam, Tape, Tensor2};
use crate::{Error, Result};

/// Labeled edges for the edge classifier. Targets are 0 (homophilous) or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTrainingSet {
    pub train: Vec<(usize, usize)>,
    pub train_targets: Vec<usize>,
    pub val: Vec<(usize, usize)>,
    pub val_targets: Vec<usize>,
}

fn tagged(graph: &Graph, mask: &[bool]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut edges = Vec::new();
    let mut targets = Vec::new();
    for (tag, &e) in graph.label_edges(mask).into_iter().zip(graph.edges()) {
        match tag {
            EdgeLabel::Homophilous => targets.push(0),
            EdgeLabel::Heterophilious => targets.push(1),
            EdgeLabel::Unknown => continue,
        }
        edges.push(e);
    }
    (edges, targets)
}

/// Edges among training nodes and edges among validation nodes.
pub fn edge_training_set(graph: &Graph) -> EdgeTrainingSet {
    let (train, train_targets) = tagged(graph, &graph.split().train);
    let (val, val_targets) = tagged(graph, &graph.split().val);
    EdgeTrainingSet { train, train_targets, val, val_targets }
}

fn class_weights(targets: &[usize], balanced: bool) -> Vec<f64> {
    if !balanced {
        return vec![1.0; targets.len()];
    }
    let mut counts = [0usize; 2];
    for &t in targets {
        counts[t] += 1;
    }
    targets.iter().map(|&t| targets.len() as f64 / (2.0 * counts[t] as f64)).collect()
}

fn edge_accuracy(ec: &EdgeClassifier, features: &Tensor2, edges: &[(usize, usize)], targets: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = ec.bind(&mut tape);
    let x = tape.constant(features.clone());
    let z = ec.logits(&mut tape, &vars, x, edges)?;
    let hits = tape.value(z).argmax_rows().iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / targets.len() as f64)
}

/// One Adam step of the edge classifier on the training edges. Returns the
/// loss before the step.
fn edge_step(ec: &mut EdgeClassifier, features: &Tensor2, set: &EdgeTrainingSet, weights: &[f64], adam: &Adam) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = ec.bind(&mut tape);
    let x = tape.constant(features.clone());
    let z = ec.logits(&mut tape, &vars, x, &set.train)?;
    let loss = tape.weighted_cross_entropy(z, &set.train_targets, weights)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: value });
    }
    tape.backward(loss);
    ec.accumulate(&tape, &vars);
    adam.step(ec.params_mut().iter_mut());
    Ok(value)
}

/// Supervised edge classification on edges among training nodes, with early
/// stopping on validation-edge accuracy (training-edge accuracy when no
/// validation edges exist). The best parameters are kept.
pub fn pretrain_edge_classifier(
    ec: &mut EdgeClassifier,
    graph: &Graph,
    config: &TrainConfig,
) -> Result<PretrainMetrics> {
    let set = edge_training_set(graph);
    if set.train.is_empty() {
        return Err(Error::NoTrainableEdges);
    }
    let weights = class_weights(&set.train_targets, config.class_weighted);
    let adam = Adam::new(config.pretrain_lr, config.weight_decay);
    let features = graph.features();
    let monitor = |ec: &EdgeClassifier| -> Result<f64> {
        if set.val.is_empty() {
            edge_accuracy(ec, features, &set.train, &set.train_targets)
        } else {
            edge_accuracy(ec, features, &set.val, &set.val_targets)
        }
    };

    let mut loss = Vec::new();
    let mut best = (monitor(ec)?, 0usize, ec.clone());
    for epoch in 1..=config.pretrain_epochs {
        let l = edge_step(ec, features, &set, &weights, &adam)
            .map_err(|e| relabel_divergence(e, epoch))?;
        loss.push(l);
        let acc = monitor(ec)?;
        if acc > best.0 {
            best = (acc, epoch, ec.clone());
        } else if epoch - best.1 >= config.pretrain_patience {
            break;
        }
    }
    let epochs_run = loss.len();
    let best_epoch = best.1;
    *ec = best.2;
    Ok(PretrainMetrics {
        train_edges: set.train.len(),
        val_edges: set.val.len(),
        epochs_run,
        best_epoch,
        loss,
        train_edge_accuracy: edge_accuracy(ec, features, &set.train, &set.train_targets)?,
        val_edge_accuracy: if set.val.is_empty() {
            None
        } else {
            Some(edge_accuracy(ec, features, &set.val, &set.val_targets)?)
        },
    })
}

fn relabel_divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::Diverged { loss, .. } => Error::Diverged { epoch, loss },
        other => other,
    }
}

/// Fraction of masked nodes whose row argmax of `scores` equals their label.
pub fn accuracy(scores: &Tensor2, labels: &[Option<usize>], mask: &[bool]) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (r, (&m, &label)) in mask.iter().zip(labels).enumerate() {
        if !m {
            continue;
        }
        total += 1;
        if label == Some(argmax(scores.row(r))) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(hits as f64 / total as f64)
}

/// Evaluation-mode accuracy of `model` on `graph`'s structure over `mask`.
pub fn evaluate(model: &NodeModel, graph: &Graph, mask: &[bool]) -> Result<f64> {
    let s = (model.kind() != NodeModelKind::Mlp).then(|| graph.sym_normalize());
    let probs = model.predict(graph.features(), s.as_ref())?;
    accuracy(&probs, graph.labels(), mask)
}

/// A structure version and what the node model needs from it.
struct Structure {
    keep: Vec<bool>,
    prop: PropagationMatrix,
    /// `S^K X` for SGC-family models.
    propagated: Option<Tensor2>,
}

impl Structure {
    fn build(graph: &Graph, keep: Vec<bool>, model: &NodeModel) -> Result<Structure> {
        let prop = graph.apply_deletion(&keep)?.sym_normalize();
        let propagated =
            model.kind().is_sgc_family().then(|| sgc_precompute(&prop, graph.features(), model.k()));
        Ok(Structure { keep, prop, propagated })
    }

    fn input<'a>(&'a self, tape: &mut Tape, features: &Tensor2) -> NodeInput<'a> {
        match &self.propagated {
            Some(p) => NodeInput::Propagated(tape.constant(p.clone())),
            None => NodeInput::Raw { features: tape.constant(features.clone()), propagation: Propagation::Fixed(&self.prop) },
        }
    }
}

/// Node-model optimizer, dropout stream and targets.
struct NodeTrainer {
    adam: Adam,
    dropout: ChaCha8Rng,
    targets: Vec<usize>,
}

impl NodeTrainer {
    fn new(graph: &Graph, config: &TrainConfig) -> Result<NodeTrainer> {
        let split = graph.split();
        for mask in [&split.train, &split.val, &split.test] {
            if !mask.iter().any(|&m| m) {
                return Err(Error::EmptyMask);
            }
        }
        Ok(NodeTrainer {
            adam: Adam::new(config.lr, config.weight_decay),
            dropout: stream(config.seed, Stream::Dropout),
            targets: graph.labels().iter().map(|l| l.unwrap_or(0)).collect(),
        })
    }

    /// Task-loss step on a fixed structure. Returns the training-mode loss.
    fn step(&mut self, model: &mut NodeModel, graph: &Graph, structure: &Structure, epoch: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let input = structure.input(&mut tape, graph.features());
        let logits = model.forward(&mut tape, &vars, input, true, &mut self.dropout)?;
        let loss = tape.cross_entropy(logits, &self.targets, &graph.split().train)?;
        let value = finite(tape.value(loss).item(), epoch)?;
        tape.backward(loss);
        model.accumulate(&tape, &vars);
        self.adam.step(model.params_mut().iter_mut());
        Ok(value)
    }
}

fn finite(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged { epoch, loss })
    }
}

struct EvalPoint {
    val_loss: f64,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
}

fn eval_point(model: &NodeModel, graph: &Graph, structure: &Structure) -> Result<EvalPoint> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let input = structure.input(&mut tape, graph.features());
    let mut unused = stream(0, Stream::Dropout);
    let logits = model.forward(&mut tape, &vars, input, false, &mut unused)?;
    let z = tape.value(logits);
    let split = graph.split();
    let (mut val_loss, mut count) = (0.0, 0usize);
    for (r, (&m, &label)) in split.val.iter().zip(graph.labels()).enumerate() {
        if m {
            let row = z.row(r);
            val_loss += log_sum_exp(row) - row[label.unwrap_or(0)];
            count += 1;
        }
    }
    Ok(EvalPoint {
        val_loss: val_loss / count as f64,
        train_acc: accuracy(z, graph.labels(), &split.train)?,
        val_acc: accuracy(z, graph.labels(), &split.val)?,
        test_acc: accuracy(z, graph.labels(), &split.test)?,
    })
}

/// Curves plus early stopping on validation accuracy.
struct Monitor {
    curves: EpochCurves,
    patience: usize,
    best_val: f64,
    best_epoch: usize,
    test_at_best: f64,
    keep_at_best: Vec<bool>,
    last_keep: Vec<bool>,
    started: Instant,
}

impl Monitor {
    fn new(config: &TrainConfig, initial_keep: Vec<bool>) -> Monitor {
        Monitor {
            curves: EpochCurves::default(),
            patience: config.patience,
            best_val: f64::NEG_INFINITY,
            best_epoch: 0,
            test_at_best: 0.0,
            keep_at_best: initial_keep.clone(),
            last_keep: initial_keep,
            started: Instant::now(),
        }
    }

    /// Records one epoch; returns `true` when training should stop.
    fn record(&mut self, epoch: usize, train_loss: f64, point: EvalPoint, keep: &[bool]) -> bool {
        let changes = keep.iter().zip(&self.last_keep).filter(|(a, b)| a != b).count();
        self.last_keep.clear();
        self.last_keep.extend_from_slice(keep);
        self.curves.train_loss.push(train_loss);
        self.curves.val_loss.push(point.val_loss);
        self.curves.train_acc.push(point.train_acc);
        self.curves.val_acc.push(point.val_acc);
        self.curves.structure_changes.push(changes);
        if point.val_acc > self.best_val {
            self.best_val = point.val_acc;
            self.best_epoch = epoch;
            self.test_at_best = point.test_acc;
            self.keep_at_best.clear();
            self.keep_at_best.extend_from_slice(keep);
            false
        } else {
            epoch - self.best_epoch >= self.patience
        }
    }

    fn finish(self, graph: &Graph, config: &TrainConfig) -> RunReport {
        let deletion = deletion_stats(graph, &self.keep_at_best).ok();
        RunReport {
            config: config.clone(),
            epochs_run: self.curves.train_loss.len(),
            best_epoch: self.best_epoch,
            best_val_accuracy: self.best_val,
            test_accuracy: self.test_at_best,
            final_train_loss: self.curves.train_loss.last().copied().unwrap_or(f64::NAN),
            pretrain: None,
            fell_back_to_base: false,
            keep_mask: self.keep_at_best,
            deletion,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            curves: self.curves,
        }
    }
}

/// Structure schedule for [`train_base`].
#[derive(Debug, Clone, PartialEq)]
pub enum BasePlan {
    /// One structure for the whole run.
    Fixed(Vec<bool>),
    /// DropEdge: a fresh random deletion of this rate every training epoch;
    /// evaluation uses the full graph.
    RandomEachEpoch(f64),
}

/// Trains `model` on a structure that the classifier never touches.
pub fn train_base(graph: &Graph, mut model: NodeModel, config: &TrainConfig, plan: BasePlan) -> Result<RunReport> {
    let mut trainer = NodeTrainer::new(graph, config)?;
    let m = graph.edge_count();
    let (eval_structure, resample) = match plan {
        BasePlan::Fixed(keep) => (Structure::build(graph, keep, &model)?, None),
        BasePlan::RandomEachEpoch(rate) => {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidRate(rate));
            }
            (Structure::build(graph, vec![true; m], &model)?, Some(rate))
        }
    };
    let mut structure_rng = stream(config.seed, Stream::Structure);
    let mut monitor = Monitor::new(config, eval_structure.keep.clone());
    for epoch in 1..=config.epochs {
        let loss = match resample {
            None => trainer.step(&mut model, graph, &eval_structure, epoch)?,
            Some(rate) => {
                let (_, keep) = random_drop(graph, rate, &mut structure_rng)?;
                let sampled = Structure::build(graph, keep, &model)?;
                trainer.step(&mut model, graph, &sampled, epoch)?
            }
        };
        let point = eval_point(&model, graph, &eval_structure)?;
        if monitor.record(epoch, loss, point, &eval_structure.keep) {
            break;
        }
    }
    Ok(monitor.finish(graph, config))
}

/// Hard verdicts of `ec` on the scoped edges, merged with the fixed ones.
fn hard_keep(ec: &EdgeClassifier, graph: &Graph, scope: &EdgeScope) -> Result<Vec<bool>> {
    let mut keep: Vec<bool> = scope.fixed.iter().map(|f| f.unwrap_or(true)).collect();
    if scope.scoped.is_empty() {
        return Ok(keep);
    }
    let z = ec.edge_logits(graph, &scope.scoped)?;
    for (r, &e) in scope.scoped.iter().enumerate() {
        keep[e] = backmax([z.get(r, 0), z.get(r, 1)]).keep;
    }
    Ok(keep)
}

/// Separate joint training. Each epoch the edge classifier takes one step on
/// its own loss, the structure is re-derived from its hard verdicts, and the
/// node model takes one step on that structure.
pub fn train_separate(
    graph: &Graph,
    mut model: NodeModel,
    mut ec: EdgeClassifier,
    config: &TrainConfig,
) -> Result<RunReport> {
    let set = edge_training_set(graph);
    if set.train.is_empty() {
        return Err(Error::NoTrainableEdges);
    }
    let weights = class_weights(&set.train_targets, config.class_weighted);
    let edge_adam = Adam::new(config.pretrain_lr, config.weight_decay);
    let scope = EdgeScope::new(graph, config.ground_truth_policy);
    let mut trainer = NodeTrainer::new(graph, config)?;

    let mut structure = Structure::build(graph, hard_keep(&ec, graph, &scope)?, &model)?;
    let mut monitor = Monitor::new(config, structure.keep.clone());
    for epoch in 1..=config.epochs {
        edge_step(&mut ec, graph.features(), &set, &weights, &edge_adam).map_err(|e| relabel_divergence(e, epoch))?;
        let keep = hard_keep(&ec, graph, &scope)?;
        if keep != structure.keep {
            structure = Structure::build(graph, keep, &model)?;
        }
        let loss = trainer.step(&mut model, graph, &structure, epoch)?;
        let point = eval_point(&model, graph, &structure)?;
        if monitor.record(epoch, loss, point, &structure.keep) {
            break;
        }
    }
    Ok(monitor.finish(graph, config))
}

/// End-to-end joint training. Scoped edges get weight `ŷ[:, 0]` from BackMax
/// (hard 0/1 forward, softmax gradient backward), the adjacency is
/// renormalized from those weights on the tape, and the task loss updates
/// both models.
pub fn train_end_to_end(
    graph: &Graph,
    mut model: NodeModel,
    mut ec: EdgeClassifier,
    config: &TrainConfig,
) -> Result<RunReport> {
    let scope = EdgeScope::new(graph, config.ground_truth_policy);
    let mut trainer = NodeTrainer::new(graph, config)?;
    let edge_adam = Adam::new(config.pretrain_lr, config.weight_decay);
    let pattern = Arc::new(SparsePattern::new(graph.node_count(), graph.edges(), true));
    let m = graph.edge_count();
    let fixed_weights = Tensor2::from_vec(m, 1, scope.base_weights(1.0));
    let scoped_edges: Vec<(usize, usize)> = scope.scoped.iter().map(|&e| graph.edges()[e]).collect();

    let mut structure = Structure::build(graph, hard_keep(&ec, graph, &scope)?, &model)?;
    let mut monitor = Monitor::new(config, structure.keep.clone());
    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let node_vars = model.bind(&mut tape);
        let edge_vars = ec.bind(&mut tape);
        let x = tape.constant(graph.features().clone());
        let weights = if scoped_edges.is_empty() {
            tape.constant(fixed_weights.clone())
        } else {
            let z = ec.logits(&mut tape, &edge_vars, x, &scoped_edges)?;
            let pi = tape.softmax_rows(z);
            let y = tape.straight_through_argmax(pi);
            let w = tape.column(y, 0);
            tape.scatter_rows(fixed_weights.clone(), w, &scope.scoped)?
        };
        let values = tape.normalize_adjacency(weights, &pattern)?;
        let propagation = Propagation::Learned { pattern: &pattern, values };
        let logits =
            model.forward(&mut tape, &node_vars, NodeInput::Raw { features: x, propagation }, true, &mut trainer.dropout)?;
        let loss = tape.cross_entropy(logits, &trainer.targets, &graph.split().train)?;
        let value = finite(tape.value(loss).item(), epoch)?;
        tape.backward(loss);
        model.accumulate(&tape, &node_vars);
        ec.accumulate(&tape, &edge_vars);
        trainer.adam.step(model.params_mut().iter_mut());
        edge_adam.step(ec.params_mut().iter_mut());

        let keep = hard_keep(&ec, graph, &scope)?;
        if keep != structure.keep {
            structure = Structure::build(graph, keep, &model)?;
        }
        let point = eval_point(&model, graph, &structure)?;
        if monitor.record(epoch, value, point, &structure.keep) {
            break;
        }
    }
    Ok(monitor.finish(graph, config))
}

fn node_model<R: Rng>(graph: &Graph, config: &TrainConfig, rng: &mut R) -> NodeModel {
    NodeModel::new(
        config.model,
        graph.feature_dim(),
        config.hidden,
        graph.num_classes(),
        config.k,
        config.dropout,
        rng,
    )
}

/// Runs `config.mode` on `graph` with streams derived from `config.seed`.
/// Classifier modes fall back to the base model on the input graph when no
/// edge joins two training nodes.
pub fn run_experiment(graph: &Graph, config: &TrainConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let model = node_model(graph, config, &mut stream(config.seed, Stream::NodeInit));
    let all = vec![true; graph.edge_count()];
    let mut report = match config.mode {
        Mode::BaseOnly => train_base(graph, model, config, BasePlan::Fixed(all))?,
        Mode::Oracle => {
            let (_, keep) = oracle_drop(graph, config.drop_rate, &mut stream(config.seed, Stream::Structure))?;
            train_base(graph, model, config, BasePlan::Fixed(keep))?
        }
        Mode::RandomDrop => train_base(graph, model, config, BasePlan::RandomEachEpoch(config.drop_rate))?,
        Mode::EndToEnd | Mode::Separate | Mode::BaseOnFixed => {
            let mut ec = EdgeClassifier::new(
                graph.feature_dim(),
                config.edge_dim,
                config.gamma,
                &mut stream(config.seed, Stream::EdgeInit),
            );
            match pretrain_edge_classifier(&mut ec, graph, config) {
                Err(Error::NoTrainableEdges) => {
                    warn!("no edge joins two training nodes; training the base model on the input graph");
                    let mut r = train_base(graph, model, config, BasePlan::Fixed(all))?;
                    r.fell_back_to_base = true;
                    r
                }
                Err(e) => return Err(e),
                Ok(metrics) => {
                    let mut r = match config.mode {
                        Mode::EndToEnd => train_end_to_end(graph, model, ec, config)?,
                        Mode::Separate => train_separate(graph, model, ec, config)?,
                        _ => {
                            let scope = EdgeScope::new(graph, config.ground_truth_policy);
                            let keep = hard_keep(&ec, graph, &scope)?;
                            train_base(graph, model, config, BasePlan::Fixed(keep))?
                        }
                    };
                    r.pretrain = Some(metrics);
                    r
                }
            }
        }
    };
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}
