//! Dense morphological networks and the affine-ReLU baseline.
//!
//! A network is a stack of hidden layers followed by a linear output layer.
//! Morphological units hold one weight row of length `n + 1` whose first
//! entry is the bias competing inside the max (min). Every hidden layer has a
//! keep-mask; a dropped unit is invisible to the next layer, which sees the
//! identity element of its own reduction in that position.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dot, Graph, NodeId, Tensor};
use crate::container::{Decoder, Encoder, Kind};
use crate::error::{Error, Result};
use crate::optim::{Adam, Optimizer, Sgd};

pub const DEFAULT_SOFT_BETA: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayerSpec {
    Dilation(usize),
    Erosion(usize),
    /// First half dilation units, second half erosion units.
    Mixed(usize),
    SoftDilation {
        width: usize,
        beta: f64,
    },
    SoftErosion {
        width: usize,
        beta: f64,
    },
    Linear(usize),
    /// Affine map followed by ReLU.
    Relu(usize),
}

impl LayerSpec {
    pub fn width(&self) -> usize {
        match *self {
            LayerSpec::Dilation(w)
            | LayerSpec::Erosion(w)
            | LayerSpec::Mixed(w)
            | LayerSpec::Linear(w)
            | LayerSpec::Relu(w) => w,
            LayerSpec::SoftDilation { width, .. } | LayerSpec::SoftErosion { width, .. } => width,
        }
    }

    pub fn is_morphological(&self) -> bool {
        !matches!(self, LayerSpec::Linear(_) | LayerSpec::Relu(_))
    }

    fn code(&self) -> u8 {
        match self {
            LayerSpec::Dilation(_) => 1,
            LayerSpec::Erosion(_) => 2,
            LayerSpec::Mixed(_) => 3,
            LayerSpec::SoftDilation { .. } => 4,
            LayerSpec::SoftErosion { .. } => 5,
            LayerSpec::Linear(_) => 6,
            LayerSpec::Relu(_) => 7,
        }
    }

    fn from_code(code: u8, width: usize, beta: f64) -> Result<Self> {
        Ok(match code {
            1 => LayerSpec::Dilation(width),
            2 => LayerSpec::Erosion(width),
            3 => LayerSpec::Mixed(width),
            4 => LayerSpec::SoftDilation { width, beta },
            5 => LayerSpec::SoftErosion { width, beta },
            6 => LayerSpec::Linear(width),
            7 => LayerSpec::Relu(width),
            c => return Err(Error::format("checkpoint", format!("unknown layer code {c}"))),
        })
    }

    fn beta(&self) -> f64 {
        match *self {
            LayerSpec::SoftDilation { beta, .. } | LayerSpec::SoftErosion { beta, .. } => beta,
            _ => 0.0,
        }
    }

    /// Value a dropped input unit takes from this layer's point of view.
    fn neutral_inputs(&self) -> [f64; 2] {
        match self {
            LayerSpec::Dilation(_) | LayerSpec::SoftDilation { .. } => [f64::NEG_INFINITY; 2],
            LayerSpec::Erosion(_) | LayerSpec::SoftErosion { .. } => [f64::INFINITY; 2],
            LayerSpec::Mixed(_) => [f64::NEG_INFINITY, f64::INFINITY],
            LayerSpec::Linear(_) | LayerSpec::Relu(_) => [0.0; 2],
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dilation(w) => write!(f, "dilation:{w}"),
            LayerSpec::Erosion(w) => write!(f, "erosion:{w}"),
            LayerSpec::Mixed(w) => write!(f, "mixed:{w}"),
            LayerSpec::SoftDilation { width, beta } => write!(f, "soft-dilation:{width}:{beta}"),
            LayerSpec::SoftErosion { width, beta } => write!(f, "soft-erosion:{width}:{beta}"),
            LayerSpec::Linear(w) => write!(f, "linear:{w}"),
            LayerSpec::Relu(w) => write!(f, "relu:{w}"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    /// `kind:width`, with an optional `:beta` for the soft kinds.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::invalid(format!("cannot parse layer spec {s:?}"));
        let width: usize = parts.get(1).and_then(|w| w.parse().ok()).ok_or_else(bad)?;
        let beta = match parts.get(2) {
            Some(b) => b.parse::<f64>().map_err(|_| bad())?,
            None => DEFAULT_SOFT_BETA,
        };
        let soft = matches!(parts[0], "soft-dilation" | "soft-erosion");
        if parts.len() > 3 || (parts.len() == 3 && !soft) {
            return Err(bad());
        }
        Ok(match parts[0] {
            "dilation" => LayerSpec::Dilation(width),
            "erosion" => LayerSpec::Erosion(width),
            "mixed" => LayerSpec::Mixed(width),
            "soft-dilation" => LayerSpec::SoftDilation { width, beta },
            "soft-erosion" => LayerSpec::SoftErosion { width, beta },
            "linear" => LayerSpec::Linear(width),
            "relu" => LayerSpec::Relu(width),
            _ => return Err(bad()),
        })
    }
}

impl TryFrom<String> for LayerSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayerSpec> for String {
    fn from(l: LayerSpec) -> String {
        l.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam at η = 0.001, batch 128.
    pub fn adam(epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            batch_size: 128,
            epochs,
            seed,
        }
    }

    /// Plain SGD at η = 0.09, batch 128.
    pub fn sgd(epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.09,
            batch_size: 128,
            epochs,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches, sample weighted.
    pub loss: f64,
    /// Training accuracy of the mini-batch forward passes.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorphNetwork {
    input_dim: usize,
    specs: Vec<LayerSpec>,
    blocks: Vec<Vec<Tensor>>,
    masks: Vec<Vec<bool>>,
}

struct Compiled {
    graph: Graph,
    x: NodeId,
    target: NodeId,
    logits: NodeId,
    loss: NodeId,
    params: Vec<Vec<NodeId>>,
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches data")
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn block_shapes(spec: &LayerSpec, n_in: usize) -> Vec<(usize, usize)> {
    let w = spec.width();
    match spec {
        LayerSpec::Mixed(_) => vec![(w / 2, n_in + 1), (w / 2, n_in + 1)],
        LayerSpec::Linear(_) | LayerSpec::Relu(_) => vec![(w, n_in), (1, w)],
        _ => vec![(w, n_in + 1)],
    }
}

impl MorphNetwork {
    /// Morphological weights are drawn from `U(−0.01, 0.01)`, affine weights
    /// from the Glorot uniform law with zero biases.
    pub fn new(input_dim: usize, specs: &[LayerSpec], classes: usize, seed: u64) -> Result<Self> {
        Self::check_specs(input_dim, specs, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n_in = input_dim;
        let mut blocks = Vec::with_capacity(specs.len());
        for spec in specs {
            let shapes = block_shapes(spec, n_in);
            let layer = if spec.is_morphological() {
                shapes.iter().map(|&(r, c)| uniform(&mut rng, r, c, 0.01)).collect()
            } else {
                let (r, c) = shapes[0];
                vec![
                    uniform(&mut rng, r, c, glorot_limit(n_in, spec.width())),
                    Tensor::zeros(1, r),
                ]
            };
            blocks.push(layer);
            n_in = spec.width();
        }
        let masks = specs[..specs.len() - 1].iter().map(|s| vec![true; s.width()]).collect();
        Ok(Self {
            input_dim,
            specs: specs.to_vec(),
            blocks,
            masks,
        })
    }

    fn check_specs(input_dim: usize, specs: &[LayerSpec], classes: usize) -> Result<()> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let last = specs.last().ok_or(Error::EmptyInput("layer specs"))?;
        if *last != LayerSpec::Linear(classes) {
            return Err(Error::invalid(format!(
                "output layer must be linear:{classes}, found {last}"
            )));
        }
        if classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        for s in specs {
            if s.width() == 0 {
                return Err(Error::invalid(format!("layer {s} has zero width")));
            }
            if matches!(s, LayerSpec::Mixed(w) if w % 2 != 0) {
                return Err(Error::invalid(format!("mixed layer width must be even, found {s}")));
            }
            if let LayerSpec::SoftDilation { beta, .. } | LayerSpec::SoftErosion { beta, .. } = s {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::invalid(format!("layer {s} needs a positive beta")));
                }
            }
        }
        Ok(())
    }

    /// Assembles a network from stored parts, checking every shape.
    pub fn from_parts(
        input_dim: usize,
        specs: Vec<LayerSpec>,
        blocks: Vec<Vec<Tensor>>,
        masks: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let classes = specs.last().map_or(0, LayerSpec::width);
        Self::check_specs(input_dim, &specs, classes)?;
        if blocks.len() != specs.len() || masks.len() + 1 != specs.len() {
            return Err(Error::invalid("layer, block and mask counts disagree"));
        }
        let mut n_in = input_dim;
        for (spec, layer) in specs.iter().zip(&blocks) {
            let shapes = block_shapes(spec, n_in);
            if layer.len() != shapes.len() || layer.iter().zip(&shapes).any(|(t, s)| t.shape() != *s) {
                return Err(Error::invalid(format!("parameter shapes do not fit layer {spec}")));
            }
            n_in = spec.width();
        }
        for (spec, m) in specs.iter().zip(&masks) {
            if m.len() != spec.width() {
                return Err(Error::invalid(format!("mask length does not fit layer {spec}")));
            }
        }
        Ok(Self {
            input_dim,
            specs,
            blocks,
            masks,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.specs.last().map_or(0, LayerSpec::width)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Number of hidden (maskable) layers.
    pub fn hidden_layers(&self) -> usize {
        self.specs.len() - 1
    }

    /// Parameter blocks of a layer: `[W]` for single-operator morphological
    /// layers, `[W_dilation, W_erosion]` for mixed ones, `[W, b]` for affine.
    pub fn blocks(&self, layer: usize) -> &[Tensor] {
        &self.blocks[layer]
    }

    pub fn blocks_mut(&mut self, layer: usize) -> &mut [Tensor] {
        &mut self.blocks[layer]
    }

    pub fn mask(&self, layer: usize) -> &[bool] {
        &self.masks[layer]
    }

    pub fn set_mask(&mut self, layer: usize, keep: Vec<bool>) -> Result<()> {
        let m = self
            .masks
            .get_mut(layer)
            .ok_or_else(|| Error::invalid(format!("layer {layer} is not a hidden layer")))?;
        if m.len() != keep.len() {
            return Err(Error::DimensionMismatch {
                context: "mask length",
                expected: m.len(),
                found: keep.len(),
            });
        }
        *m = keep;
        Ok(())
    }

    pub fn clear_masks(&mut self) {
        for m in &mut self.masks {
            m.iter_mut().for_each(|k| *k = true);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().flatten().map(|t| t.data().len()).sum()
    }

    fn compile(&self) -> Result<Compiled> {
        let mut g = Graph::new();
        let x = g.input(self.input_dim);
        let mut prev = x;
        let mut params = Vec::with_capacity(self.specs.len());
        for (i, spec) in self.specs.iter().enumerate() {
            let ids: Vec<NodeId> = self.blocks[i].iter().map(|t| g.parameter(t.clone())).collect();
            let fills = spec.neutral_inputs();
            let input_for = |g: &mut Graph, fill: f64| -> Result<NodeId> {
                if i == 0 {
                    Ok(prev)
                } else {
                    g.mask(prev, self.masks[i - 1].clone(), fill)
                }
            };
            let out = match *spec {
                LayerSpec::Dilation(_) => {
                    let h = input_for(&mut g, fills[0])?;
                    g.dilation(h, ids[0])?
                }
                LayerSpec::Erosion(_) => {
                    let h = input_for(&mut g, fills[0])?;
                    g.erosion(h, ids[0])?
                }
                LayerSpec::SoftDilation { beta, .. } => {
                    let h = input_for(&mut g, fills[0])?;
                    g.soft_dilation(h, ids[0], beta)?
                }
                LayerSpec::SoftErosion { beta, .. } => {
                    let h = input_for(&mut g, fills[0])?;
                    g.soft_erosion(h, ids[0], beta)?
                }
                LayerSpec::Mixed(_) => {
                    let hd = input_for(&mut g, fills[0])?;
                    let he = input_for(&mut g, fills[1])?;
                    let d = g.dilation(hd, ids[0])?;
                    let e = g.erosion(he, ids[1])?;
                    g.concat(d, e)?
                }
                LayerSpec::Linear(_) => {
                    let h = input_for(&mut g, 0.0)?;
                    g.linear(h, ids[0], ids[1])?
                }
                LayerSpec::Relu(_) => {
                    let h = input_for(&mut g, 0.0)?;
                    let a = g.linear(h, ids[0], ids[1])?;
                    g.relu(a)?
                }
            };
            params.push(ids);
            prev = out;
        }
        let logits = prev;
        let target = g.input(1);
        let loss = g.softmax_cross_entropy(logits, target)?;
        Ok(Compiled {
            graph: g,
            x,
            target,
            logits,
            loss,
            params,
        })
    }

    fn batch_tensors(ds: &crate::data::Dataset, idx: &[usize]) -> (Tensor, Tensor) {
        let dim = ds.dim();
        let mut x = Vec::with_capacity(idx.len() * dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(ds.row(i));
            y.push(ds.labels()[i] as f64);
        }
        (
            Tensor::from_vec(idx.len(), dim, x).expect("batch shape"),
            Tensor::from_vec(idx.len(), 1, y).expect("batch shape"),
        )
    }

    fn check_dataset(&self, ds: &crate::data::Dataset) -> Result<()> {
        if ds.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        crate::error::ensure_dim("dataset dimension", self.input_dim, ds.dim())?;
        if let Some(&l) = ds.labels().iter().find(|&&l| l >= self.classes()) {
            return Err(Error::invalid(format!("label {l} outside 0..{}", self.classes())));
        }
        Ok(())
    }

    /// Mini-batch training on softmax cross-entropy. Returns one entry per
    /// epoch. Deterministic given the config seed.
    pub fn train(&mut self, ds: &crate::data::Dataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
        cfg.validate()?;
        self.check_dataset(ds)?;
        let mut c = self.compile()?;
        let params: Vec<NodeId> = c.params.iter().flatten().copied().collect();
        let mut opt: Box<dyn Optimizer> = match cfg.optimizer {
            OptimizerKind::Sgd => Box::new(Sgd::new(cfg.learning_rate)),
            OptimizerKind::Adam => Box::new(Adam::new(cfg.learning_rate)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total_loss = 0.0;
            let mut correct = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let (x, y) = Self::batch_tensors(ds, chunk);
                c.graph.bind(c.x, x)?;
                c.graph.bind(c.target, y)?;
                c.graph.forward_to(c.loss)?;
                let loss = c.graph.value(c.loss).item();
                if !loss.is_finite() {
                    return Err(Error::NumericFailure(format!(
                        "non-finite training loss {loss} in epoch {}",
                        epoch + 1
                    )));
                }
                total_loss += loss * chunk.len() as f64;
                let logits = c.graph.value(c.logits);
                correct += chunk
                    .iter()
                    .enumerate()
                    .filter(|&(s, &i)| argmax(logits.row(s)) == ds.labels()[i])
                    .count();
                c.graph.backward(c.loss)?;
                opt.step(&mut c.graph, &params)?;
            }
            history.push(EpochStats {
                epoch: epoch + 1,
                loss: total_loss / ds.len() as f64,
                accuracy: correct as f64 / ds.len() as f64,
            });
        }
        for (layer, ids) in self.blocks.iter_mut().zip(&c.params) {
            for (t, &id) in layer.iter_mut().zip(ids) {
                *t = c.graph.param(id)?.clone();
            }
        }
        Ok(history)
    }

    /// Logits for every sample, row-major `N × classes`.
    pub fn logits(&self, ds: &crate::data::Dataset) -> Result<Vec<f64>> {
        self.check_dataset(ds)?;
        let mut c = self.compile()?;
        let mut out = Vec::with_capacity(ds.len() * self.classes());
        let idx: Vec<usize> = (0..ds.len()).collect();
        for chunk in idx.chunks(512) {
            let (x, _) = Self::batch_tensors(ds, chunk);
            c.graph.bind(c.x, x)?;
            c.graph.forward_to(c.logits)?;
            out.extend_from_slice(c.graph.value(c.logits).data());
        }
        Ok(out)
    }

    pub fn predict(&self, ds: &crate::data::Dataset) -> Result<Vec<usize>> {
        let k = self.classes();
        Ok(self.logits(ds)?.chunks(k).map(argmax).collect())
    }

    /// Fraction of samples whose highest logit is the true class.
    pub fn evaluate(&self, ds: &crate::data::Dataset) -> Result<f64> {
        let pred = self.predict(ds)?;
        let hits = pred.iter().zip(ds.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / ds.len() as f64)
    }

    /// Output of one layer for a raw input vector. `input_keep` lists which
    /// input coordinates are live; dropped ones are skipped by the reduction.
    pub fn layer_forward(&self, layer: usize, input: &[f64], input_keep: Option<&[bool]>) -> Result<Vec<f64>> {
        let spec = self
            .specs
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("no layer {layer}")))?;
        let blocks = &self.blocks[layer];
        let n_in = if layer == 0 {
            self.input_dim
        } else {
            self.specs[layer - 1].width()
        };
        crate::error::ensure_dim("layer input", n_in, input.len())?;
        let live = |i: usize| input_keep.is_none_or(|k| k[i]);
        let morph = |w: &[f64], max: bool| -> f64 {
            let mut best = w[0];
            for (i, (&wi, &xi)) in w[1..].iter().zip(input).enumerate() {
                if live(i) && ((max && wi + xi > best) || (!max && wi + xi < best)) {
                    best = wi + xi;
                }
            }
            best
        };
        let soft = |w: &[f64], beta: f64, sign: f64| -> f64 {
            let terms: Vec<f64> = std::iter::once(w[0])
                .chain(
                    w[1..]
                        .iter()
                        .zip(input)
                        .enumerate()
                        .filter(|(i, _)| live(*i))
                        .map(|(_, (a, b))| a + b),
                )
                .map(|t| sign * t)
                .collect();
            sign * crate::tropical::soft_max_unchecked(terms.iter().copied(), beta)
        };
        let rows = |t: &Tensor| (0..t.rows()).map(|u| t.row(u).to_vec()).collect::<Vec<_>>();
        Ok(match *spec {
            LayerSpec::Dilation(_) => rows(&blocks[0]).iter().map(|w| morph(w, true)).collect(),
            LayerSpec::Erosion(_) => rows(&blocks[0]).iter().map(|w| morph(w, false)).collect(),
            LayerSpec::Mixed(_) => rows(&blocks[0])
                .iter()
                .map(|w| morph(w, true))
                .chain(rows(&blocks[1]).iter().map(|w| morph(w, false)))
                .collect(),
            LayerSpec::SoftDilation { beta, .. } => rows(&blocks[0]).iter().map(|w| soft(w, beta, 1.0)).collect(),
            LayerSpec::SoftErosion { beta, .. } => rows(&blocks[0]).iter().map(|w| soft(w, beta, -1.0)).collect(),
            LayerSpec::Linear(_) | LayerSpec::Relu(_) => {
                let masked: Vec<f64> = input
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if live(i) { v } else { 0.0 })
                    .collect();
                let (w, b) = (&blocks[0], &blocks[1]);
                (0..w.rows())
                    .map(|u| {
                        let a = dot(w.row(u), &masked) + b.data()[u];
                        if matches!(spec, LayerSpec::Relu(_)) {
                            a.max(0.0)
                        } else {
                            a
                        }
                    })
                    .collect()
            }
        })
    }

    /// Logits for one sample, computed without the graph.
    pub fn forward_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in 0..self.specs.len() {
            let keep = layer.checked_sub(1).map(|l| self.masks[l].as_slice());
            h = self.layer_forward(layer, &h, keep)?;
        }
        Ok(h)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(Kind::DenseNetwork);
        e.u32(self.input_dim);
        e.u32(self.specs.len());
        for s in &self.specs {
            e.u8(s.code());
            e.u32(s.width());
            e.f64(s.beta());
        }
        for m in &self.masks {
            e.u32(m.len());
            m.iter().for_each(|&k| e.u8(k as u8));
        }
        for layer in &self.blocks {
            e.u32(layer.len());
            layer.iter().for_each(|t| e.tensor(t));
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes, Kind::DenseNetwork)?;
        let input_dim = d.u32()?;
        let n_layers = d.list_len(13)?;
        let specs = (0..n_layers)
            .map(|_| {
                let code = d.u8()?;
                let width = d.u32()?;
                let beta = d.f64()?;
                LayerSpec::from_code(code, width, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut masks = Vec::new();
        for _ in 0..n_layers.saturating_sub(1) {
            let n = d.list_len(1)?;
            let m = (0..n)
                .map(|_| match d.u8()? {
                    0 => Ok(false),
                    1 => Ok(true),
                    b => Err(Error::format("checkpoint", format!("mask byte {b}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            masks.push(m);
        }
        let mut blocks = Vec::new();
        for _ in 0..n_layers {
            let n = d.list_len(8)?;
            blocks.push((0..n).map(|_| d.tensor()).collect::<Result<Vec<_>>>()?);
        }
        d.finish()?;
        Self::from_parts(input_dim, specs, blocks, masks)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_spec_strings() {
        for s in ["dilation:8", "mixed:128", "soft-erosion:4:2.5", "relu:64", "linear:10"] {
            let l: LayerSpec = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert_eq!(
            "soft-dilation:3".parse::<LayerSpec>().unwrap(),
            LayerSpec::SoftDilation { width: 3, beta: 5.0 }
        );
        for bad in ["", "dilation", "dilation:x", "relu:4:2", "conv:3"] {
            assert!(bad.parse::<LayerSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn build_errors() {
        use LayerSpec::*;
        assert!(MorphNetwork::new(2, &[], 2, 0).is_err());
        assert!(MorphNetwork::new(2, &[Dilation(0), Linear(2)], 2, 0).is_err());
        assert!(MorphNetwork::new(2, &[Mixed(3), Linear(2)], 2, 0).is_err());
        assert!(MorphNetwork::new(2, &[Dilation(2)], 2, 0).is_err());
        assert!(MorphNetwork::new(2, &[Dilation(2), Linear(3)], 2, 0).is_err());
        let net = MorphNetwork::new(2, &[Dilation(2), Linear(2)], 2, 0).unwrap();
        assert_eq!(net.blocks(0)[0].shape(), (2, 3));
        assert_eq!(net.blocks(1)[0].shape(), (2, 2));
    }

    #[test]
    fn checkpoint_round_trip() {
        use LayerSpec::*;
        let specs = [Mixed(4), SoftErosion { width: 3, beta: 2.0 }, Relu(2), Linear(3)];
        let mut net = MorphNetwork::new(5, &specs, 3, 9).unwrap();
        net.set_mask(0, vec![true, false, true, true]).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(MorphNetwork::from_bytes(&bytes).unwrap(), net);
        assert!(MorphNetwork::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
