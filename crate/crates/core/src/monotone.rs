//! Min-of-max monotone networks, their smooth variant, and the isotonic
//! and least-squares baselines they are compared against.
//!
//! `f(x) = min_k max_j (w_kjᵀx + b_kj)` with `w = t(z) ≥ 0` for a positive
//! transform `t`, so `f` is nondecreasing in every coordinate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{dot, Graph, NodeId, PositiveTransform, Tensor};
use crate::container::{Decoder, Encoder, Kind};
use crate::error::{ensure_dim, Error, Result};
use crate::morphonet::{glorot_limit, uniform};
use crate::optim::{Adam, Optimizer};
use crate::tropical::soft_max_unchecked;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MonotoneMode {
    Hard,
    /// Log-sum-exp reductions with the same β at both levels.
    Soft {
        beta: f64,
    },
}

impl MonotoneMode {
    fn beta(self) -> Option<f64> {
        match self {
            MonotoneMode::Hard => None,
            MonotoneMode::Soft { beta } => Some(beta),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneNet {
    inputs: usize,
    groups: usize,
    planes: usize,
    /// Raw weights, one row per hyperplane `k·J + j`.
    z: Tensor,
    b: Vec<f64>,
    transform: PositiveTransform,
    mode: MonotoneMode,
}

impl MonotoneNet {
    /// Glorot-uniform `z` and `b`. In hard mode the effective weights are
    /// magnified by `gain` (`z·√G` under the square transform, `z + ln G`
    /// under the exponential); soft mode ignores it.
    pub fn new(
        inputs: usize,
        groups: usize,
        planes: usize,
        transform: PositiveTransform,
        mode: MonotoneMode,
        gain: f64,
        seed: u64,
    ) -> Result<Self> {
        if inputs == 0 || groups == 0 || planes == 0 {
            return Err(Error::invalid("monotone network needs K, J, n ≥ 1"));
        }
        if !(gain >= 1.0 && gain.is_finite()) {
            return Err(Error::invalid(format!("gain must be at least 1, got {gain}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = groups * planes;
        let limit = glorot_limit(inputs, h);
        let g = match mode {
            MonotoneMode::Hard => gain,
            MonotoneMode::Soft { .. } => 1.0,
        };
        let mut z = uniform(&mut rng, h, inputs, limit);
        z.data_mut().iter_mut().for_each(|v| {
            *v = match transform {
                PositiveTransform::Square => *v * g.sqrt(),
                PositiveTransform::Exp => *v + g.ln(),
            }
        });
        let b = uniform(&mut rng, 1, h, limit).into_vec();
        Self::from_parts(inputs, groups, planes, z, b, transform, mode)
    }

    pub fn from_parts(
        inputs: usize,
        groups: usize,
        planes: usize,
        z: Tensor,
        b: Vec<f64>,
        transform: PositiveTransform,
        mode: MonotoneMode,
    ) -> Result<Self> {
        if inputs == 0 || groups == 0 || planes == 0 {
            return Err(Error::invalid("monotone network needs K, J, n ≥ 1"));
        }
        let h = groups
            .checked_mul(planes)
            .ok_or_else(|| Error::invalid("too many hyperplanes"))?;
        ensure_dim("weight rows", h, z.rows())?;
        ensure_dim("weight columns", inputs, z.cols())?;
        ensure_dim("biases", h, b.len())?;
        if let MonotoneMode::Soft { beta } = mode {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::invalid(format!("beta must be positive, got {beta}")));
            }
        }
        Ok(Self {
            inputs,
            groups,
            planes,
            z,
            b,
            transform,
            mode,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn raw_weights(&self) -> &Tensor {
        &self.z
    }

    pub fn raw_weights_mut(&mut self) -> &mut Tensor {
        &mut self.z
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub fn transform(&self) -> PositiveTransform {
        self.transform
    }

    pub fn mode(&self) -> MonotoneMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: MonotoneMode) -> Result<()> {
        *self = Self::from_parts(
            self.inputs,
            self.groups,
            self.planes,
            self.z.clone(),
            self.b.clone(),
            self.transform,
            mode,
        )?;
        Ok(())
    }

    /// `t(z)`, one row per hyperplane.
    pub fn effective_weights(&self) -> Tensor {
        let mut w = self.z.clone();
        w.data_mut().iter_mut().for_each(|v| *v = self.transform.apply(*v));
        w
    }

    fn planes_at(&self, w: &Tensor, x: &[f64]) -> Vec<f64> {
        (0..self.groups * self.planes)
            .map(|p| dot(w.row(p), x) + self.b[p])
            .collect()
    }

    fn reduce(&self, h: &[f64]) -> f64 {
        let j = self.planes;
        match self.mode.beta() {
            None => h
                .chunks(j)
                .map(|g| g.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min),
            Some(beta) => {
                let maxes: Vec<f64> = h
                    .chunks(j)
                    .map(|g| soft_max_unchecked(g.iter().copied(), beta))
                    .collect();
                -soft_max_unchecked(maxes.iter().map(|v| -v), beta)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        ensure_dim("monotone input", self.inputs, x.len())?;
        Ok(self.reduce(&self.planes_at(&self.effective_weights(), x)))
    }

    /// Outputs for row-major inputs of width `inputs`.
    pub fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.len() % self.inputs != 0 {
            return Err(Error::invalid("input buffer is not a whole number of rows"));
        }
        let w = self.effective_weights();
        Ok(xs
            .chunks(self.inputs)
            .map(|x| self.reduce(&self.planes_at(&w, x)))
            .collect())
    }

    /// `(k, j)` of the hyperplane that determines the hard output: the
    /// group with the smallest maximum, then its largest plane (lowest
    /// index on ties).
    pub fn active_plane(&self, x: &[f64]) -> Result<(usize, usize)> {
        ensure_dim("monotone input", self.inputs, x.len())?;
        Ok(active_of(&self.planes_at(&self.effective_weights(), x), self.planes))
    }

    /// Full-batch Adam on the mean squared error. Returns the loss before
    /// every update.
    pub fn train(&mut self, xs: &[f64], ys: &[f64], cfg: &MonotoneTrainConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if ys.is_empty() {
            return Err(Error::EmptyInput("training targets"));
        }
        ensure_dim("training inputs", ys.len() * self.inputs, xs.len())?;
        let n = ys.len();
        let mut g = Graph::new();
        let x = g.input(self.inputs);
        let target = g.input(1);
        let z = g.parameter(self.z.clone());
        let b = g.parameter(Tensor::from_vec(1, self.b.len(), self.b.clone())?);
        let w = g.transform(z, self.transform)?;
        let h = g.linear(x, w, b)?;
        let beta = self.mode.beta();
        let group_max = g.max_pool(h, self.planes, beta)?;
        let out = g.min_pool(group_max, self.groups, beta)?;
        let loss = g.mean_squared_error(out, target)?;
        g.bind(x, Tensor::from_vec(n, self.inputs, xs.to_vec())?)?;
        g.bind(target, Tensor::from_vec(n, 1, ys.to_vec())?)?;
        let mut opt = Adam::new(cfg.learning_rate);
        let params = [z, b];
        let mut trace = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            g.forward_to(loss)?;
            let l = g.value(loss).item();
            if !l.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "non-finite monotone loss {l} in epoch {}",
                    epoch + 1
                )));
            }
            trace.push(l);
            g.backward(loss)?;
            if cfg.active_set && beta.is_none() {
                self.rescale_active(&mut g, h, z, b, n)?;
            }
            opt.step(&mut g, &params)?;
        }
        self.z = g.param(z)?.clone();
        self.b = g.param(b)?.data().to_vec();
        Ok(trace)
    }

    /// Turns each hyperplane's batch-mean gradient into the mean over the
    /// patterns for which it is active.
    fn rescale_active(&self, g: &mut Graph, h: NodeId, z: NodeId, b: NodeId, n: usize) -> Result<()> {
        let mut counts = vec![0usize; self.groups * self.planes];
        let hv = g.value(h);
        for s in 0..n {
            let (k, j) = active_of(hv.row(s), self.planes);
            counts[k * self.planes + j] += 1;
        }
        let factor: Vec<f64> = counts
            .iter()
            .map(|&c| if c > 0 { n as f64 / c as f64 } else { 1.0 })
            .collect();
        let gz = g.grad_mut(z)?;
        for (p, f) in factor.iter().enumerate() {
            gz.row_mut(p).iter_mut().for_each(|v| *v *= f);
        }
        let gb = g.grad_mut(b)?;
        for (v, f) in gb.data_mut().iter_mut().zip(&factor) {
            *v *= f;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(Kind::MonotoneNetwork);
        e.u32(self.inputs);
        e.u32(self.groups);
        e.u32(self.planes);
        e.u8(match self.transform {
            PositiveTransform::Exp => 0,
            PositiveTransform::Square => 1,
        });
        match self.mode {
            MonotoneMode::Hard => e.u8(0),
            MonotoneMode::Soft { beta } => {
                e.u8(1);
                e.f64(beta);
            }
        }
        e.tensor(&self.z);
        e.f64s(&self.b);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes, Kind::MonotoneNetwork)?;
        let inputs = d.u32()?;
        let groups = d.u32()?;
        let planes = d.u32()?;
        let transform = match d.u8()? {
            0 => PositiveTransform::Exp,
            1 => PositiveTransform::Square,
            t => return Err(Error::format("checkpoint", format!("unknown transform {t}"))),
        };
        let mode = match d.u8()? {
            0 => MonotoneMode::Hard,
            1 => MonotoneMode::Soft { beta: d.f64()? },
            t => return Err(Error::format("checkpoint", format!("unknown mode {t}"))),
        };
        let z = d.tensor()?;
        let b = d.f64s()?;
        d.finish()?;
        Self::from_parts(inputs, groups, planes, z, b, transform, mode)
            .map_err(|e| Error::format("checkpoint", e.to_string()))
    }
}

fn active_of(h: &[f64], planes: usize) -> (usize, usize) {
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, g) in h.chunks(planes).enumerate() {
        let mut j = 0;
        for (i, &v) in g.iter().enumerate() {
            if v > g[j] {
                j = i;
            }
        }
        if best.is_none_or(|(_, _, m)| g[j] < m) {
            best = Some((k, j, g[j]));
        }
    }
    let (k, j, _) = best.expect("at least one group");
    (k, j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Hard mode only: average each hyperplane's gradient over the
    /// patterns where it is active instead of over the whole batch.
    pub active_set: bool,
}

impl Default for MonotoneTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.01,
            active_set: false,
        }
    }
}

impl MonotoneTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("training needs epochs ≥ 1 and a positive learning rate"));
        }
        Ok(())
    }
}

/// Outcome of a grid monotonicity check.
#[derive(Clone, Debug, PartialEq)]
pub enum Monotonicity {
    Monotone,
    /// First pair found with `lower ≤ upper` componentwise but
    /// `f(lower) > f(upper)`.
    Violation {
        lower: Vec<f64>,
        upper: Vec<f64>,
        f_lower: f64,
        f_upper: f64,
    },
}

impl Monotonicity {
    pub fn passed(&self) -> bool {
        matches!(self, Monotonicity::Monotone)
    }
}

/// Evaluates `net` on the product of the per-axis grids and compares every
/// pair of neighbours along each axis. `tolerance` absorbs round-off in
/// the soft reductions.
pub fn monotonicity_check(net: &MonotoneNet, grids: &[Vec<f64>], tolerance: f64) -> Result<Monotonicity> {
    ensure_dim("axis grids", net.inputs(), grids.len())?;
    let mut sorted = grids.to_vec();
    for g in &mut sorted {
        if g.is_empty() {
            return Err(Error::EmptyInput("axis grid"));
        }
        g.sort_by(f64::total_cmp);
    }
    let sizes: Vec<usize> = sorted.iter().map(Vec::len).collect();
    let total = sizes
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::invalid("grid product too large"))?;
    let point = |mut flat: usize| -> Vec<f64> {
        let mut x = vec![0.0; sizes.len()];
        for a in (0..sizes.len()).rev() {
            x[a] = sorted[a][flat % sizes[a]];
            flat /= sizes[a];
        }
        x
    };
    let mut xs = Vec::with_capacity(total * sizes.len());
    for i in 0..total {
        xs.extend(point(i));
    }
    let f = net.predict(&xs)?;
    let mut stride = 1;
    for a in (0..sizes.len()).rev() {
        for i in 0..total {
            if (i / stride) % sizes[a] + 1 < sizes[a] {
                let j = i + stride;
                if f[i] > f[j] + tolerance {
                    return Ok(Monotonicity::Violation {
                        lower: point(i),
                        upper: point(j),
                        f_lower: f[i],
                        f_upper: f[j],
                    });
                }
            }
        }
        stride *= sizes[a];
    }
    Ok(Monotonicity::Monotone)
}

/// Smallest `x` with `f(x) ≥ y` for a one-input network under the hard
/// operators: `max_k min_j (y − b_kj) / w_kj`.
pub fn invert_monotone(net: &MonotoneNet, y: f64) -> Result<f64> {
    if net.inputs() != 1 {
        return Err(Error::invalid("inversion needs a one-input network"));
    }
    let w = net.effective_weights();
    if w.data().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("inversion needs strictly positive weights"));
    }
    Ok(w.data()
        .chunks(net.planes())
        .zip(net.biases().chunks(net.planes()))
        .map(|(ws, bs)| {
            ws.iter()
                .zip(bs)
                .map(|(w, b)| (y - b) / w)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Weighted isotonic fit on sorted knots; predictions are piecewise
/// constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IsotonicFit {
    /// Value of the last knot at or below `x`, or of the first knot.
    pub fn predict(&self, x: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= x);
        self.values[i.saturating_sub(1)]
    }
}

/// Pool-adjacent-violators. `xs` must be nondecreasing; responses at equal
/// abscissae are merged into their weighted mean first.
pub fn pava_isotonic(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<IsotonicFit> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("isotonic regression input"));
    }
    ensure_dim("responses", xs.len(), ys.len())?;
    ensure_dim("weights", xs.len(), weights.len())?;
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("isotonic weights must be positive"));
    }
    if xs.windows(2).any(|p| !(p[0] <= p[1])) {
        return Err(Error::invalid("abscissae must be sorted"));
    }
    let mut knots: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        if knots.last() == Some(&x) {
            *sums.last_mut().expect("parallel") += w * y;
            *ws.last_mut().expect("parallel") += w;
        } else {
            knots.push(x);
            sums.push(w * y);
            ws.push(w);
        }
    }
    // Blocks as (weighted sum, weight, knot count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(knots.len());
    for (&s, &w) in sums.iter().zip(&ws) {
        blocks.push((s, w, 1));
        while blocks.len() > 1 {
            let (s2, w2, c2) = blocks[blocks.len() - 1];
            let (s1, w1, c1) = blocks[blocks.len() - 2];
            if s1 / w1 <= s2 / w2 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().expect("two blocks") = (s1 + s2, w1 + w2, c1 + c2);
        }
    }
    let values = blocks
        .iter()
        .flat_map(|&(s, w, c)| std::iter::repeat_n(s / w, c))
        .collect();
    Ok(IsotonicFit {
        knots,
        values,
        weights: ws,
    })
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    ensure_dim("responses", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::invalid("linear fit needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all abscissae are equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn raw_curve(x: f64) -> f64 {
    x * x * x + x + x.sin()
}

/// `x³ + x + sin x` on `[−4, 4]`, rescaled to map `[−1, 1]` onto `[−1, 1]`.
pub fn target_curve(u: f64) -> f64 {
    raw_curve(4.0 * u) / raw_curve(4.0)
}

/// `n` points with `u ~ U[−1, 1]` and `y = target_curve(u) + N(0, σ²)`.
pub fn synth_dataset(sigma: f64, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma >= 0.0 && sigma.is_finite()) || n == 0 {
        return Err(Error::invalid("synthetic data needs σ ≥ 0 and n ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let ys = xs
        .iter()
        .map(|&u| target_curve(u) + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 })
        .collect();
    Ok((xs, ys))
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Smooth,
    Hard,
    Isotonic,
    Linear,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smooth, Method::Hard, Method::Isotonic, Method::Linear];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Smooth => "smooth",
            Method::Hard => "hard",
            Method::Isotonic => "isotonic",
            Method::Linear => "linear",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneExperiment {
    pub samples: usize,
    pub groups: usize,
    pub planes: usize,
    pub beta: f64,
    pub gain: f64,
    pub transform: PositiveTransform,
    pub train: MonotoneTrainConfig,
    /// Size of the noiseless evaluation grid on `[−1, 1]`.
    pub grid_points: usize,
}

impl Default for MonotoneExperiment {
    fn default() -> Self {
        Self {
            samples: 100,
            groups: 5,
            planes: 5,
            beta: 5.0,
            gain: 20.0,
            transform: PositiveTransform::Square,
            train: MonotoneTrainConfig::default(),
            grid_points: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub method: Method,
    pub sigma: f64,
    pub seed: u64,
    pub rmse: f64,
}

/// Everything produced by one (σ, seed) cell.
#[derive(Clone, Debug)]
pub struct MonotoneCell {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub smooth: MonotoneNet,
    pub hard: MonotoneNet,
    pub isotonic: IsotonicFit,
    pub linear: (f64, f64),
    pub rows: Vec<RmseRow>,
}

impl MonotoneCell {
    pub fn curve(&self, method: Method, u: f64) -> f64 {
        match method {
            Method::Smooth => self.smooth.forward(&[u]).unwrap_or(f64::NAN),
            Method::Hard => self.hard.forward(&[u]).unwrap_or(f64::NAN),
            Method::Isotonic => self.isotonic.predict(u),
            Method::Linear => self.linear.0 * u + self.linear.1,
        }
    }
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / pred.len().max(1) as f64).sqrt()
}

/// Fits all four methods to one noisy sample and scores them on the
/// noiseless grid.
pub fn run_monotone_cell(cfg: &MonotoneExperiment, sigma: f64, seed: u64) -> Result<MonotoneCell> {
    if cfg.grid_points < 2 {
        return Err(Error::invalid("evaluation grid needs at least two points"));
    }
    let (xs, ys) = synth_dataset(sigma, cfg.samples, seed)?;
    let init_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut smooth = MonotoneNet::new(
        1,
        cfg.groups,
        cfg.planes,
        cfg.transform,
        MonotoneMode::Soft { beta: cfg.beta },
        cfg.gain,
        init_seed,
    )?;
    smooth.train(&xs, &ys, &cfg.train)?;
    let mut hard = MonotoneNet::new(
        1,
        cfg.groups,
        cfg.planes,
        cfg.transform,
        MonotoneMode::Hard,
        cfg.gain,
        init_seed,
    )?;
    hard.train(&xs, &ys, &cfg.train)?;

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let isotonic = pava_isotonic(&sx, &sy, &vec![1.0; sx.len()])?;
    let linear = linear_fit(&xs, &ys)?;

    let grid = linspace(-1.0, 1.0, cfg.grid_points);
    let truth: Vec<f64> = grid.iter().map(|&u| target_curve(u)).collect();
    let mut cell = MonotoneCell {
        xs,
        ys,
        smooth,
        hard,
        isotonic,
        linear,
        rows: Vec::with_capacity(4),
    };
    for method in Method::ALL {
        let pred: Vec<f64> = grid.iter().map(|&u| cell.curve(method, u)).collect();
        cell.rows.push(RmseRow {
            method,
            sigma,
            seed,
            rmse: rmse(&pred, &truth),
        });
    }
    Ok(cell)
}
