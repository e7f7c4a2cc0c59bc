//! GraphSAGE circuit classifier written against plain `Vec<f64>` storage.
//!
//! Each layer updates a node from its own state and the mean of its
//! neighbours' states:
//!
//! ```text
//! h_v' = ReLU(W_self h_v + W_neigh mean(h_u, u ∈ N(v)) + b)
//! ```
//!
//! Node embeddings of the last layer are mean-pooled and fed to a softmax
//! classifier over the eight circuit classes. Training is full-batch
//! gradient descent on cross-entropy with hand-derived gradients.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit_graph::{build_graph, CircuitGraph};
use crate::dataset::{CircuitClass, LabeledNetlist, CLASS_COUNT};

/// Per-node input width: 4-way type one-hot, scaled degree, centrality.
pub const INPUT_DIM: usize = 6;
pub const MAGIC: &str = "AITEE-GNN v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training corpus lacks classes {0:?}")]
    MissingClasses(Vec<usize>),
    #[error("not a model file (expected `{MAGIC}` header)")]
    BadMagic,
    #[error("model file dimension mismatch: {0}")]
    DimMismatch(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Glorot-uniform initialisation.
    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self · x`
    fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`
    fn t_mul_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (o, &w) in out.iter_mut().zip(self.row(r)) {
                    *o += w * yr;
                }
            }
        }
    }

    /// `self += a ⊗ b`
    fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar != 0.0 {
                let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
                for (w, &bc) in row.iter_mut().zip(b) {
                    *w += ar * bc;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub bias: Vec<f64>,
}

impl SageLayer {
    fn zeros(d_out: usize, d_in: usize) -> Self {
        SageLayer {
            w_self: Matrix::zeros(d_out, d_in),
            w_neigh: Matrix::zeros(d_out, d_in),
            bias: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_self.cols
    }

    pub fn d_out(&self) -> usize {
        self.w_self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub layers: usize,
    pub classes: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            d_in: INPUT_DIM,
            d_hidden: 32,
            layers: 2,
            classes: CLASS_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub layers: Vec<SageLayer>,
    pub classifier_w: Matrix,
    pub classifier_b: Vec<f64>,
    pub config: GnnConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5000,
            learning_rate: 0.02,
            seed: 0,
            l2: 1e-4,
        }
    }
}

/// Output of [`GnnModel::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub class_probs: Vec<f64>,
    pub pooled: Vec<f64>,
}

/// Per-layer intermediate values kept for backpropagation.
struct LayerCache {
    input: Vec<Vec<f64>>,
    neigh_mean: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

struct Trace {
    layers: Vec<LayerCache>,
    output: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

/// Input feature rows of a graph: one-hot type, degree ÷ max degree,
/// centrality.
pub fn input_features(graph: &CircuitGraph) -> Vec<Vec<f64>> {
    let max_degree = graph
        .nodes
        .iter()
        .map(|n| n.features.degree)
        .max()
        .unwrap_or(0);
    graph
        .nodes
        .iter()
        .map(|n| {
            let f = &n.features;
            let mut row = f.type_one_hot.to_vec();
            row.push(if max_degree > 0 {
                f.degree as f64 / max_degree as f64
            } else {
                0.0
            });
            row.push(f.centrality);
            row
        })
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl GnnModel {
    /// Glorot-initialised model with zero biases.
    pub fn new(config: GnnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.layers);
        let mut d_in = config.d_in;
        for _ in 0..config.layers {
            layers.push(SageLayer {
                w_self: Matrix::glorot(config.d_hidden, d_in, &mut rng),
                w_neigh: Matrix::glorot(config.d_hidden, d_in, &mut rng),
                bias: vec![0.0; config.d_hidden],
            });
            d_in = config.d_hidden;
        }
        GnnModel {
            layers,
            classifier_w: Matrix::glorot(config.classes, d_in, &mut rng),
            classifier_b: vec![0.0; config.classes],
            config,
        }
    }

    pub fn zeros(config: GnnConfig) -> Self {
        let mut layers = Vec::with_capacity(config.layers);
        let mut d_in = config.d_in;
        for _ in 0..config.layers {
            layers.push(SageLayer::zeros(config.d_hidden, d_in));
            d_in = config.d_hidden;
        }
        GnnModel {
            layers,
            classifier_w: Matrix::zeros(config.classes, d_in),
            classifier_b: vec![0.0; config.classes],
            config,
        }
    }

    fn zeros_like(&self) -> Self {
        GnnModel::zeros(self.config)
    }

    pub fn pooled_dim(&self) -> usize {
        self.layers.last().map_or(self.config.d_in, SageLayer::d_out)
    }

    /// Checks that all parameter shapes agree with `config`.
    pub fn check_shapes(&self) -> Result<(), GnnError> {
        let c = &self.config;
        if self.layers.len() != c.layers {
            return Err(GnnError::ShapeMismatch(format!(
                "{} layers, config says {}",
                self.layers.len(),
                c.layers
            )));
        }
        let mut d_in = c.d_in;
        for (i, l) in self.layers.iter().enumerate() {
            let ok = l.w_self.rows == c.d_hidden
                && l.w_self.cols == d_in
                && l.w_neigh.rows == c.d_hidden
                && l.w_neigh.cols == d_in
                && l.bias.len() == c.d_hidden
                && l.w_self.data.len() == c.d_hidden * d_in
                && l.w_neigh.data.len() == c.d_hidden * d_in;
            if !ok {
                return Err(GnnError::ShapeMismatch(format!("layer {i}")));
            }
            d_in = c.d_hidden;
        }
        if self.classifier_w.rows != c.classes
            || self.classifier_w.cols != d_in
            || self.classifier_w.data.len() != c.classes * d_in
            || self.classifier_b.len() != c.classes
        {
            return Err(GnnError::ShapeMismatch("classifier".into()));
        }
        Ok(())
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w_self"), &l.w_self.data));
            out.push((format!("layer{i}.w_neigh"), &l.w_neigh.data));
            out.push((format!("layer{i}.bias"), &l.bias));
        }
        out.push(("classifier.w".into(), &self.classifier_w.data));
        out.push(("classifier.b".into(), &self.classifier_b));
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w_self.data);
            out.push(&mut l.w_neigh.data);
            out.push(&mut l.bias);
        }
        out.push(&mut self.classifier_w.data);
        out.push(&mut self.classifier_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn param(&self, flat: usize) -> f64 {
        let mut i = flat;
        for (_, b) in self.blocks() {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }

    fn param_mut(&mut self, flat: usize) -> &mut f64 {
        let mut i = flat;
        for b in self.blocks_mut() {
            if i < b.len() {
                return &mut b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range")
    }

    /// Sum of squared weights (biases excluded).
    fn weight_sq_norm(&self) -> f64 {
        let mut s: f64 = self
            .layers
            .iter()
            .map(|l| dot(&l.w_self.data, &l.w_self.data) + dot(&l.w_neigh.data, &l.w_neigh.data))
            .sum();
        s += dot(&self.classifier_w.data, &self.classifier_w.data);
        s
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }

    pub fn forward(&self, graph: &CircuitGraph) -> Result<Forward, GnnError> {
        let trace = self.trace(graph)?;
        Ok(Forward {
            class_probs: trace.probs,
            pooled: trace.pooled,
        })
    }

    fn trace(&self, graph: &CircuitGraph) -> Result<Trace, GnnError> {
        self.check_shapes()?;
        if graph.nodes.is_empty() {
            return Err(GnnError::EmptyGraph);
        }
        let adj = graph.adjacency();
        let mut h = input_features(graph);
        if h[0].len() != self.config.d_in {
            return Err(GnnError::ShapeMismatch(format!(
                "graph features have width {}, model expects {}",
                h[0].len(),
                self.config.d_in
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let d_in = layer.d_in();
            let neigh_mean: Vec<Vec<f64>> = adj
                .iter()
                .map(|nbrs| {
                    let mut m = vec![0.0; d_in];
                    for &u in nbrs {
                        for (mi, hu) in m.iter_mut().zip(&h[u]) {
                            *mi += hu;
                        }
                    }
                    if !nbrs.is_empty() {
                        let k = nbrs.len() as f64;
                        m.iter_mut().for_each(|x| *x /= k);
                    }
                    m
                })
                .collect();
            let pre: Vec<Vec<f64>> = h
                .iter()
                .zip(&neigh_mean)
                .map(|(hv, mv)| {
                    let mut z = layer.bias.clone();
                    layer.w_self.mul_add(hv, &mut z);
                    layer.w_neigh.mul_add(mv, &mut z);
                    z
                })
                .collect();
            let next: Vec<Vec<f64>> = pre
                .iter()
                .map(|z| z.iter().map(|&x| x.max(0.0)).collect())
                .collect();
            layers.push(LayerCache {
                input: std::mem::replace(&mut h, next),
                neigh_mean,
                pre,
            });
        }
        let n = h.len() as f64;
        let mut pooled = vec![0.0; h[0].len()];
        for hv in &h {
            for (p, x) in pooled.iter_mut().zip(hv) {
                *p += x;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= n);
        let mut logits = self.classifier_b.clone();
        self.classifier_w.mul_add(&pooled, &mut logits);
        Ok(Trace {
            layers,
            output: h,
            pooled,
            probs: softmax(&logits),
        })
    }

    /// Cross-entropy loss of one graph and its gradient with respect to
    /// every parameter (no regularisation).
    pub fn loss_and_grad(
        &self,
        graph: &CircuitGraph,
        label: CircuitClass,
    ) -> Result<(f64, GnnModel), GnnError> {
        let trace = self.trace(graph)?;
        let y = label.index();
        let loss = -trace.probs[y].max(f64::MIN_POSITIVE).ln();
        let mut grad = self.zeros_like();

        let mut d_logits = trace.probs.clone();
        d_logits[y] -= 1.0;
        grad.classifier_w.outer_add(&d_logits, &trace.pooled);
        grad.classifier_b.copy_from_slice(&d_logits);
        let mut d_pooled = vec![0.0; trace.pooled.len()];
        self.classifier_w.t_mul_add(&d_logits, &mut d_pooled);

        let n = trace.output.len();
        let share: Vec<f64> = d_pooled.iter().map(|d| d / n as f64).collect();
        let mut d_h: Vec<Vec<f64>> = vec![share; n];
        let adj = graph.adjacency();

        for (k, (layer, cache)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let g = &mut grad.layers[k];
            let d_z: Vec<Vec<f64>> = d_h
                .iter()
                .zip(&cache.pre)
                .map(|(dh, z)| {
                    dh.iter()
                        .zip(z)
                        .map(|(&d, &zv)| if zv > 0.0 { d } else { 0.0 })
                        .collect()
                })
                .collect();
            let d_in = layer.d_in();
            let mut d_prev = vec![vec![0.0; d_in]; n];
            for v in 0..n {
                g.w_self.outer_add(&d_z[v], &cache.input[v]);
                g.w_neigh.outer_add(&d_z[v], &cache.neigh_mean[v]);
                for (b, d) in g.bias.iter_mut().zip(&d_z[v]) {
                    *b += d;
                }
                layer.w_self.t_mul_add(&d_z[v], &mut d_prev[v]);
                if !adj[v].is_empty() {
                    let mut d_mean = vec![0.0; d_in];
                    layer.w_neigh.t_mul_add(&d_z[v], &mut d_mean);
                    let k = adj[v].len() as f64;
                    for &u in &adj[v] {
                        for (dp, dm) in d_prev[u].iter_mut().zip(&d_mean) {
                            *dp += dm / k;
                        }
                    }
                }
            }
            d_h = d_prev;
        }
        Ok((loss, grad))
    }

    /// Most probable class and the probability vector.
    pub fn predict(&self, graph: &CircuitGraph) -> Result<(CircuitClass, Vec<f64>), GnnError> {
        let probs = self.forward(graph)?.class_probs;
        let best = probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
        Ok((CircuitClass::from_id(best + 1).unwrap(), probs))
    }
}

/// Prepared training example.
pub struct Example {
    pub graph: CircuitGraph,
    pub label: CircuitClass,
}

pub fn examples(corpus: &[LabeledNetlist]) -> Vec<Example> {
    corpus
        .iter()
        .map(|item| Example {
            graph: build_graph(&item.netlist),
            label: item.class,
        })
        .collect()
}

/// Mean cross-entropy plus `l2 / 2 · ‖W‖²`, and its gradient.
pub fn batch_loss_and_grad(
    model: &GnnModel,
    data: &[Example],
    l2: f64,
) -> Result<(f64, GnnModel), GnnError> {
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    for ex in data {
        let (l, g) = model.loss_and_grad(&ex.graph, ex.label)?;
        loss += l;
        for (t, gb) in total.blocks_mut().into_iter().zip(g.blocks()) {
            for (a, b) in t.iter_mut().zip(gb.1) {
                *a += b;
            }
        }
    }
    let scale = 1.0 / data.len() as f64;
    for b in total.blocks_mut() {
        b.iter_mut().for_each(|x| *x *= scale);
    }
    loss *= scale;
    if l2 > 0.0 {
        loss += 0.5 * l2 * model.weight_sq_norm();
        for (g, w) in total.layers.iter_mut().zip(&model.layers) {
            for (a, b) in g.w_self.data.iter_mut().zip(&w.w_self.data) {
                *a += l2 * b;
            }
            for (a, b) in g.w_neigh.data.iter_mut().zip(&w.w_neigh.data) {
                *a += l2 * b;
            }
        }
        for (a, b) in total
            .classifier_w
            .data
            .iter_mut()
            .zip(&model.classifier_w.data)
        {
            *a += l2 * b;
        }
    }
    Ok((loss, total))
}

/// Result of [`train`]: the trained model and the loss before each update.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: GnnModel,
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent.
pub fn train(
    model: &GnnModel,
    corpus: &[LabeledNetlist],
    cfg: &TrainConfig,
) -> Result<TrainReport, GnnError> {
    if corpus.is_empty() {
        return Err(GnnError::EmptyCorpus);
    }
    let missing: Vec<usize> = CircuitClass::all()
        .filter(|c| corpus.iter().all(|item| item.class != *c))
        .map(CircuitClass::id)
        .collect();
    if !missing.is_empty() {
        return Err(GnnError::MissingClasses(missing));
    }
    let data = examples(corpus);
    train_examples(model, &data, cfg)
}

pub fn train_examples(
    model: &GnnModel,
    data: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport, GnnError> {
    let mut model = model.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = batch_loss_and_grad(&model, data, cfg.l2)?;
        if !loss.is_finite() {
            return Err(GnnError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        for (w, g) in model.blocks_mut().into_iter().zip(grad.blocks()) {
            for (a, b) in w.iter_mut().zip(g.1) {
                *a -= cfg.learning_rate * b;
            }
        }
        if !model.is_finite() {
            return Err(GnnError::NonFiniteLoss { epoch });
        }
    }
    Ok(TrainReport { model, losses })
}

/// Fraction of examples whose most probable class is the label.
pub fn accuracy(model: &GnnModel, corpus: &[LabeledNetlist]) -> Result<f64, GnnError> {
    let mut hits = 0;
    for item in corpus {
        let (pred, _) = model.predict(&build_graph(&item.netlist))?;
        hits += usize::from(pred == item.class);
    }
    Ok(hits as f64 / corpus.len().max(1) as f64)
}

/// Settings for [`grad_check_with`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub sample_fraction: f64,
    pub seed: u64,
    /// Multiplier applied to analytic `w_neigh` gradients. Anything other
    /// than 1 deliberately breaks the gradient; used to test the checker.
    pub w_neigh_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            sample_fraction: 0.05,
            seed: 0,
            w_neigh_scale: 1.0,
        }
    }
}

/// Relative error with both magnitudes below 1e-12 treated as agreement.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn grad_check(
    model: &GnnModel,
    graph: &CircuitGraph,
    label: CircuitClass,
) -> Result<f64, GnnError> {
    grad_check_with(model, graph, label, &GradCheckConfig::default())
}

/// Compares analytic gradients with central differences over a random
/// sample of parameters; returns the largest relative error.
pub fn grad_check_with(
    model: &GnnModel,
    graph: &CircuitGraph,
    label: CircuitClass,
    cfg: &GradCheckConfig,
) -> Result<f64, GnnError> {
    let (_, mut grad) = model.loss_and_grad(graph, label)?;
    if cfg.w_neigh_scale != 1.0 {
        for l in &mut grad.layers {
            l.w_neigh.data.iter_mut().for_each(|g| *g *= cfg.w_neigh_scale);
        }
    }
    let total = model.param_count();
    let count = ((total as f64 * cfg.sample_fraction).ceil() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let loss_at = |m: &GnnModel| -> Result<f64, GnnError> {
        let probs = m.forward(graph)?.class_probs;
        Ok(-probs[label.index()].ln())
    };
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    let mut indices = sample(&mut rng, total, count).into_vec();
    indices.sort_unstable();
    for i in indices {
        let original = model.param(i);
        *probe.param_mut(i) = original + cfg.step;
        let up = loss_at(&probe)?;
        *probe.param_mut(i) = original - cfg.step;
        let down = loss_at(&probe)?;
        *probe.param_mut(i) = original;
        let numeric = (up - down) / (2.0 * cfg.step);
        worst = worst.max(relative_error(grad.param(i), numeric));
    }
    Ok(worst)
}

fn write_matrix(out: &mut String, header: &str, m: &Matrix) {
    let _ = writeln!(out, "{} {} {}", header, m.rows, m.cols);
    for r in 0..m.rows {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn write_vector(out: &mut String, header: &str, v: &[f64]) {
    let _ = writeln!(out, "{} {}", header, v.len());
    let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

/// Text model format:
///
/// ```text
/// AITEE-GNN v1
/// dims <d_in> <d_hidden> <layers> <classes>
/// layer <k> w_self <rows> <cols>      followed by <rows> lines
/// layer <k> w_neigh <rows> <cols>     followed by <rows> lines
/// layer <k> bias <len>                followed by 1 line
/// classifier_w <rows> <cols>          followed by <rows> lines
/// classifier_b <len>                  followed by 1 line
/// ```
///
/// Numbers are written with 17 significant digits, so loading restores the
/// exact bits.
pub fn save_model(model: &GnnModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dims {} {} {} {}", c.d_in, c.d_hidden, c.layers, c.classes);
    for (k, l) in model.layers.iter().enumerate() {
        write_matrix(&mut out, &format!("layer {k} w_self"), &l.w_self);
        write_matrix(&mut out, &format!("layer {k} w_neigh"), &l.w_neigh);
        write_vector(&mut out, &format!("layer {k} bias"), &l.bias);
    }
    write_matrix(&mut out, "classifier_w", &model.classifier_w);
    write_vector(&mut out, "classifier_b", &model.classifier_b);
    out.into_bytes()
}

/// Hex SHA-256 of the saved form.
pub fn model_hash(model: &GnnModel) -> String {
    hex::encode(Sha256::digest(save_model(model)))
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, GnnError> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| {
            GnnError::DimMismatch(format!("file ends at line {} while reading {what}", self.line_no))
        })
    }

    fn header(&mut self, expected: &str, dims: &[usize]) -> Result<(), GnnError> {
        let line = self.next(expected)?;
        let want = dims.iter().fold(expected.to_string(), |s, d| format!("{s} {d}"));
        if line.trim() != want {
            return Err(GnnError::DimMismatch(format!(
                "line {}: expected `{want}`, found `{}`",
                self.line_no,
                line.trim()
            )));
        }
        Ok(())
    }

    fn row(&mut self, len: usize, what: &str) -> Result<Vec<f64>, GnnError> {
        let line = self.next(what)?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GnnError::DimMismatch(format!("line {}: {e}", self.line_no)))?;
        if values.len() != len {
            return Err(GnnError::DimMismatch(format!(
                "line {}: {what} row has {} values, expected {len}",
                self.line_no,
                values.len()
            )));
        }
        Ok(values)
    }

    fn matrix(&mut self, header: &str, rows: usize, cols: usize) -> Result<Matrix, GnnError> {
        self.header(header, &[rows, cols])?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols, header)?);
        }
        Ok(Matrix { rows, cols, data })
    }

    fn vector(&mut self, header: &str, len: usize) -> Result<Vec<f64>, GnnError> {
        self.header(header, &[len])?;
        self.row(len, header)
    }
}

pub fn load_model(bytes: &[u8]) -> Result<GnnModel, GnnError> {
    let text = std::str::from_utf8(bytes).map_err(|_| GnnError::BadMagic)?;
    let mut r = Reader {
        lines: text.lines(),
        line_no: 0,
    };
    if r.lines.next().map(str::trim) != Some(MAGIC) {
        return Err(GnnError::BadMagic);
    }
    r.line_no = 1;
    let dims_line = r.next("dims")?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .map(|rest| rest.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    if dims.len() != 4 || dims.contains(&0) {
        return Err(GnnError::DimMismatch(format!("bad dims line `{dims_line}`")));
    }
    let config = GnnConfig {
        d_in: dims[0],
        d_hidden: dims[1],
        layers: dims[2],
        classes: dims[3],
    };
    if config.classes != CLASS_COUNT {
        return Err(GnnError::DimMismatch(format!(
            "{} classes, expected {CLASS_COUNT}",
            config.classes
        )));
    }
    let mut layers = Vec::with_capacity(config.layers);
    let mut d_in = config.d_in;
    for k in 0..config.layers {
        let w_self = r.matrix(&format!("layer {k} w_self"), config.d_hidden, d_in)?;
        let w_neigh = r.matrix(&format!("layer {k} w_neigh"), config.d_hidden, d_in)?;
        let bias = r.vector(&format!("layer {k} bias"), config.d_hidden)?;
        layers.push(SageLayer {
            w_self,
            w_neigh,
            bias,
        });
        d_in = config.d_hidden;
    }
    let classifier_w = r.matrix("classifier_w", config.classes, d_in)?;
    let classifier_b = r.vector("classifier_b", config.classes)?;
    if r.lines.any(|l| !l.trim().is_empty()) {
        return Err(GnnError::DimMismatch("trailing data after classifier_b".into()));
    }
    Ok(GnnModel {
        layers,
        classifier_w,
        classifier_b,
        config,
    })
}
