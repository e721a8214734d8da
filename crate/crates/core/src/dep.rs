//! Dilation-erosion perceptrons trained by the convex-concave procedure,
//! reduced (kernel) feature maps, bagging and multiclass reductions.
//!
//! Training minimizes a weighted hinge without margin,
//! `Σ vᵢ max(0, −yᵢ s(xᵢ))`, where `s = λ δ_w + (1 − λ) ε_m`. The dilation is
//! convex and the erosion concave in the weights, so each CCP step replaces
//! the concave side of every sample's term by its active affine piece and
//! solves the resulting convex piecewise-linear problem as a linear program.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Decoder, Encoder, Kind};
use crate::data::{BinaryDataset, Dataset};
use crate::error::{ensure_dim, Error, Result};
#[cfg(test)]
use crate::lp::{LinearProgram, Relation};
use crate::tropical::{dilation_with_index, erosion_with_index};

/// `λ δ_w(x) + (1 − λ) ε_m(x)`; `w` and `m` carry the bias first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepModel {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub lambda: f64,
}

impl DepModel {
    pub fn new(w: Vec<f64>, m: Vec<f64>, lambda: f64) -> Result<Self> {
        if w.is_empty() || w.len() != m.len() {
            return Err(Error::invalid("w and m must have equal, nonzero length"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { w, m, lambda })
    }

    pub fn dim(&self) -> usize {
        self.w.len() - 1
    }

    pub fn dilation(&self, x: &[f64]) -> f64 {
        dilation_with_index(&self.w, x).map_or(f64::NAN, |(v, _)| v)
    }

    pub fn erosion(&self, x: &[f64]) -> f64 {
        erosion_with_index(&self.m, x).map_or(f64::NAN, |(v, _)| v)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let d = if self.lambda > 0.0 {
            self.lambda * self.dilation(x)
        } else {
            0.0
        };
        let e = if self.lambda < 1.0 {
            (1.0 - self.lambda) * self.erosion(x)
        } else {
            0.0
        };
        d + e
    }

    /// `+1` for a strictly positive score, `−1` otherwise.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.score(x) > 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Weighted hinge `Σ vᵢ max(0, μ − yᵢ sᵢ)`.
pub fn weighted_hinge(scores: &[f64], labels: &[f64], weights: &[f64], margin: f64) -> f64 {
    scores
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((s, y), v)| v * (margin - y * s).max(0.0))
        .sum()
}

/// Per-pattern weights `vᵢ = λᵢ / max λ` with `λᵢ = 1/‖xᵢ − μ‖_p`, computed
/// within each class. A pattern sitting on its centroid gets weight 1.
pub fn outlier_weights(ds: &BinaryDataset, p: f64) -> Result<Vec<f64>> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("norm order must be at least 1, got {p}")));
    }
    let mut v = vec![1.0; ds.len()];
    for class in [-1.0, 1.0] {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == class).collect();
        if members.is_empty() {
            return Err(Error::EmptyInput("class in outlier weighting"));
        }
        let mut mu = vec![0.0; ds.dim()];
        for &i in &members {
            for (m, x) in mu.iter_mut().zip(ds.row(i)) {
                *m += x;
            }
        }
        mu.iter_mut().for_each(|m| *m /= members.len() as f64);
        let inv: Vec<f64> = members
            .iter()
            .map(|&i| {
                let diffs = ds.row(i).iter().zip(&mu).map(|(x, m)| (x - m).abs());
                let d = if p.is_infinite() {
                    diffs.fold(0.0, f64::max)
                } else {
                    diffs.map(|a| a.powf(p)).sum::<f64>().powf(1.0 / p)
                };
                1.0 / d
            })
            .collect();
        let top = inv.iter().copied().filter(|l| l.is_finite()).fold(0.0, f64::max);
        for (&i, &l) in members.iter().zip(&inv) {
            v[i] = if l.is_finite() && top > 0.0 { l / top } else { 1.0 };
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcpConfig {
    /// Fixed mixing weight during joint training.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once an iteration improves the objective by less than this.
    pub tolerance: f64,
    /// Hinge margin μ. At zero the constant score 0 is a global optimum
    /// of the objective, so classifiers that must separate need μ > 0.
    pub margin: f64,
}

impl Default for CcpConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_iterations: 50,
            tolerance: 1e-6,
            margin: 0.0,
        }
    }
}

impl CcpConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::invalid(
                "CCP needs at least one iteration and positive tolerances",
            ));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(format!(
                "margin must be finite and nonnegative, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcpResult {
    pub model: DepModel,
    /// True objective at the start and after every accepted iteration.
    pub trace: Vec<f64>,
}

/// Affine function `Σ coef·z + constant` over the stacked variables.
#[derive(Clone, Debug)]
struct Piece {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Piece {
    fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * z[k]).sum::<f64>()
    }
}

/// `Σᵢ vᵢ max(0, maxₚ pieceᵢₚ(z)) + Σₖ Cₖ |zₖ − rₖ|`.
#[derive(Clone, Debug)]
struct PiecewiseProblem {
    dim: usize,
    terms: Vec<(f64, Vec<Piece>)>,
    l1: Vec<(f64, f64)>,
}

impl PiecewiseProblem {
    fn term(&self, i: usize, z: &[f64]) -> f64 {
        let (v, pieces) = &self.terms[i];
        v * pieces.iter().map(|p| p.eval(z)).fold(0.0, f64::max)
    }

    #[cfg(test)]
    fn value(&self, z: &[f64]) -> f64 {
        let hinge: f64 = (0..self.terms.len()).map(|i| self.term(i, z)).sum();
        let reg: f64 = self.l1.iter().zip(z).map(|(&(c, r), &zk)| c * (zk - r).abs()).sum();
        hinge + reg
    }

    /// Epigraph LP over the terms in `subset`: variables are `z` (free),
    /// one `t ≥ 0` per term and one `u ≥ 0` per regularized coordinate.
    /// Solved with a sparse revised simplex; returns `z`.
    fn solve_restricted(&self, subset: &[usize]) -> Result<Vec<f64>> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let z: Vec<_> = (0..self.dim)
            .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        let mut row = Vec::new();
        for &i in subset {
            let (v, pieces) = &self.terms[i];
            let t = lp.add_var(*v, (0.0, f64::INFINITY));
            for p in pieces {
                row.clear();
                row.extend(p.terms.iter().map(|&(k, c)| (z[k], c)));
                row.push((t, -1.0));
                lp.add_constraint(row.as_slice(), ComparisonOp::Le, -p.constant);
            }
        }
        for (k, &(c, r)) in self.l1.iter().enumerate() {
            if c > 0.0 {
                let u = lp.add_var(c, (0.0, f64::INFINITY));
                lp.add_constraint([(z[k], 1.0), (u, -1.0)], ComparisonOp::Le, r);
                lp.add_constraint([(z[k], -1.0), (u, -1.0)], ComparisonOp::Le, -r);
            }
        }
        let lp_err = |e: microlp::Error| Error::NumericFailure(format!("restricted LP: {e}"));
        let sol = lp
            .solve()
            .map_err(lp_err)?
            .into_solution()
            .map_err(|_| Error::NumericFailure("restricted LP interrupted".into()))?;
        Ok(z.iter().map(|&v| sol.var_value(v)).collect())
    }

    #[cfg(test)]
    fn to_lp(&self, subset: &[usize]) -> LinearProgram {
        let n_t = subset.len();
        let n_u = self.l1.iter().filter(|(c, _)| *c > 0.0).count();
        let mut lp = LinearProgram::new(self.dim + n_t + n_u);
        for k in 0..self.dim {
            lp.set_free(k);
        }
        for (slot, &i) in subset.iter().enumerate() {
            let (v, pieces) = &self.terms[i];
            let t = self.dim + slot;
            lp.set_cost(t, *v);
            for p in pieces {
                let mut coeffs = p.terms.clone();
                coeffs.push((t, -1.0));
                lp.add_constraint(&coeffs, Relation::Le, -p.constant);
            }
        }
        let mut u = self.dim + n_t;
        for (k, &(c, r)) in self.l1.iter().enumerate() {
            if c > 0.0 {
                lp.set_cost(u, c);
                lp.add_constraint(&[(k, 1.0), (u, -1.0)], Relation::Le, r);
                lp.add_constraint(&[(k, -1.0), (u, -1.0)], Relation::Le, -r);
                u += 1;
            }
        }
        lp
    }

    /// Exact minimizer by row generation: solve the epigraph LP restricted
    /// to a working set of terms, then add every term that is positive at
    /// the solution until none is left out. Dropped terms only lower the
    /// restricted optimum, so the final point solves the full LP.
    fn minimize(&self, start: &[f64]) -> Result<Vec<f64>> {
        let scale = 1.0 + self.terms.iter().map(|(v, _)| v).sum::<f64>();
        let slack = 1e-9 * scale;
        let mut working: BTreeSet<usize> = (0..self.terms.len()).filter(|&i| self.term(i, start) > 0.0).collect();
        loop {
            let subset: Vec<usize> = working.iter().copied().collect();
            let z = self.solve_restricted(&subset)?;
            let missing: Vec<usize> = (0..self.terms.len())
                .filter(|i| !working.contains(i) && self.term(*i, &z) > slack)
                .collect();
            if missing.is_empty() {
                return Ok(z);
            }
            working.extend(missing);
        }
    }
}

/// Which perceptron(s) a CCP run optimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Part {
    Both(f64),
    DilationOnly,
    ErosionOnly,
}

fn check_binary(ds: &BinaryDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("binary dataset"));
    }
    Ok(())
}

/// Midpoint between the class means of the bias-free score.
fn score_midpoint(ds: &BinaryDataset, lambda: f64) -> f64 {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for i in 0..ds.len() {
        let x = ds.row(i);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let k = usize::from(ds.labels()[i] > 0.0);
        sums[k] += lambda * hi + (1.0 - lambda) * lo;
        counts[k] += 1;
    }
    let means: Vec<f64> = (0..2)
        .filter(|&k| counts[k] > 0)
        .map(|k| sums[k] / counts[k] as f64)
        .collect();
    means.iter().sum::<f64>() / means.len() as f64
}

/// Linearizes every sample's term at `(w, m)` and returns the convex
/// problem in the variables `z = [w, m]` (or just the trained half).
fn linearize(
    ds: &BinaryDataset,
    w: &[f64],
    m: &[f64],
    part: Part,
    reg: &[(f64, f64)],
    margin: f64,
) -> PiecewiseProblem {
    let n1 = ds.dim() + 1;
    let (lw, lm, off_m, dim) = match part {
        Part::Both(l) => (l, 1.0 - l, n1, 2 * n1),
        Part::DilationOnly => (1.0, 0.0, 0, n1),
        Part::ErosionOnly => (0.0, 1.0, 0, n1),
    };
    let xj = |x: &[f64], j: usize| if j == 0 { 0.0 } else { x[j - 1] };
    let mut terms = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let x = ds.row(i);
        let v = ds.weights()[i];
        let mut pieces = Vec::new();
        if ds.labels()[i] > 0.0 {
            // −λ δ linearized at its argmax a, −(1 − λ) ε kept exact.
            let mut fixed = Piece {
                terms: vec![],
                constant: 0.0,
            };
            if lw > 0.0 {
                let (_, a) = dilation_with_index(w, x).expect("dims checked");
                fixed.terms.push((a, -lw));
                fixed.constant -= lw * xj(x, a);
            }
            if lm > 0.0 {
                for j in 0..n1 {
                    let mut p = fixed.clone();
                    p.terms.push((off_m + j, -lm));
                    p.constant -= lm * xj(x, j);
                    pieces.push(p);
                }
            } else {
                pieces.push(fixed);
            }
        } else {
            // (1 − λ) ε linearized at its argmin b, λ δ kept exact.
            let mut fixed = Piece {
                terms: vec![],
                constant: 0.0,
            };
            if lm > 0.0 {
                let (_, b) = erosion_with_index(m, x).expect("dims checked");
                fixed.terms.push((off_m + b, lm));
                fixed.constant += lm * xj(x, b);
            }
            if lw > 0.0 {
                for j in 0..n1 {
                    let mut p = fixed.clone();
                    p.terms.push((j, lw));
                    p.constant += lw * xj(x, j);
                    pieces.push(p);
                }
            } else {
                pieces.push(fixed);
            }
        }
        pieces.iter_mut().for_each(|p| p.constant += margin);
        terms.push((v, pieces));
    }
    PiecewiseProblem {
        dim,
        terms,
        l1: reg.to_vec(),
    }
}

fn run_ccp(
    ds: &BinaryDataset,
    part: Part,
    reg: &[(f64, f64)],
    cfg: &CcpConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_binary(ds)?;
    let n1 = ds.dim() + 1;
    let lambda = match part {
        Part::Both(l) => l,
        Part::DilationOnly => 1.0,
        Part::ErosionOnly => 0.0,
    };
    let mid = score_midpoint(ds, lambda);
    let mut w = vec![0.0; n1];
    let mut m = vec![0.0; n1];
    w[0] = mid;
    m[0] = mid;
    let objective = |w: &[f64], m: &[f64]| -> f64 {
        let model = DepModel {
            w: w.to_vec(),
            m: m.to_vec(),
            lambda,
        };
        let scores: Vec<f64> = (0..ds.len()).map(|i| model.score(ds.row(i))).collect();
        let z: &[f64] = if matches!(part, Part::ErosionOnly) { m } else { w };
        let r: f64 = reg.iter().zip(z).map(|(&(c, r), &v)| c * (v - r).abs()).sum();
        weighted_hinge(&scores, ds.labels(), ds.weights(), cfg.margin) + r
    };
    let mut current = objective(&w, &m);
    let mut trace = vec![current];
    for _ in 0..cfg.max_iterations {
        let problem = linearize(ds, &w, &m, part, reg, cfg.margin);
        let start: Vec<f64> = match part {
            Part::Both(_) => w.iter().chain(&m).copied().collect(),
            Part::DilationOnly => w.clone(),
            Part::ErosionOnly => m.clone(),
        };
        let z = problem.minimize(&start)?;
        let (nw, nm) = match part {
            Part::Both(_) => (z[..n1].to_vec(), z[n1..].to_vec()),
            Part::DilationOnly => (z, m.clone()),
            Part::ErosionOnly => (w.clone(), z),
        };
        let next = objective(&nw, &nm);
        if !next.is_finite() {
            return Err(Error::NumericFailure("CCP objective is not finite".into()));
        }
        // The LP optimum never exceeds the current objective, so a rise can
        // only come from solver round-off; keep the better iterate.
        if next > current {
            break;
        }
        let improvement = current - next;
        w = nw;
        m = nm;
        current = next;
        trace.push(current);
        if improvement < cfg.tolerance {
            break;
        }
    }
    Ok((w, m, trace))
}

/// Joint CCP training of both perceptrons at the configured λ. Sample
/// weights come from the dataset.
pub fn ccp_train(ds: &BinaryDataset, cfg: &CcpConfig) -> Result<CcpResult> {
    cfg.validate()?;
    let (w, m, trace) = run_ccp(ds, Part::Both(cfg.lambda), &[], cfg)?;
    Ok(CcpResult {
        model: DepModel::new(w, m, cfg.lambda)?,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Weight `C` of the `C‖u − r‖₁` regularizer.
    pub c: f64,
    /// Reference vector `r` (bias first); `None` means zero.
    pub reference: Option<Vec<f64>>,
    pub ccp: CcpConfig,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            c: 0.0,
            reference: None,
            ccp: CcpConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    pub model: DepModel,
    pub dilation_trace: Vec<f64>,
    pub erosion_trace: Vec<f64>,
}

/// Trains the dilation perceptron alone, then the erosion perceptron alone
/// (each with the `C‖u − r‖₁` penalty), then picks λ by exact hinge
/// minimization. Each half is itself a DC problem (the positive-class side
/// of the dilation and the negative-class side of the erosion are concave
/// in the weights), so each is solved by the same CCP iteration.
pub fn greedy_train(ds: &BinaryDataset, cfg: &GreedyConfig) -> Result<GreedyResult> {
    cfg.ccp.validate()?;
    if !(cfg.c >= 0.0 && cfg.c.is_finite()) {
        return Err(Error::invalid("regularization weight must be finite and nonnegative"));
    }
    let n1 = ds.dim() + 1;
    let r = match &cfg.reference {
        Some(r) => {
            ensure_dim("reference vector", n1, r.len())?;
            r.clone()
        }
        None => vec![0.0; n1],
    };
    let reg: Vec<(f64, f64)> = r.iter().map(|&rk| (cfg.c, rk)).collect();
    let (w, _, dilation_trace) = run_ccp(ds, Part::DilationOnly, &reg, &cfg.ccp)?;
    let (_, m, erosion_trace) = run_ccp(ds, Part::ErosionOnly, &reg, &cfg.ccp)?;
    let probe = DepModel::new(w, m, 0.5)?;
    let d: Vec<f64> = (0..ds.len()).map(|i| probe.dilation(ds.row(i))).collect();
    let e: Vec<f64> = (0..ds.len()).map(|i| probe.erosion(ds.row(i))).collect();
    let lambda = optimal_lambda(&d, &e, ds.labels())?;
    Ok(GreedyResult {
        model: DepModel::new(probe.w, probe.m, lambda)?,
        dilation_trace,
        erosion_trace,
    })
}

/// Mean hinge of the mixed score at a given λ.
pub fn lambda_objective(d: &[f64], e: &[f64], y: &[f64], lambda: f64) -> f64 {
    d.iter()
        .zip(e)
        .zip(y)
        .map(|((d, e), y)| (-y * (lambda * d + (1.0 - lambda) * e)).max(0.0))
        .sum::<f64>()
        / d.len().max(1) as f64
}

/// Exact minimizer over `[0, 1]` of the mean hinge of `λd + (1 − λ)e`.
/// The objective is convex piecewise linear, so the minimum sits at an
/// endpoint or at a breakpoint where some sample's mixed score crosses
/// zero; the smallest minimizing λ is returned.
pub fn optimal_lambda(d: &[f64], e: &[f64], y: &[f64]) -> Result<f64> {
    ensure_dim("erosion scores", d.len(), e.len())?;
    ensure_dim("labels", d.len(), y.len())?;
    let mut candidates = vec![0.0, 1.0];
    for (&di, &ei) in d.iter().zip(e) {
        let slope = di - ei;
        if slope != 0.0 {
            let l = -ei / slope;
            if (0.0..=1.0).contains(&l) {
                candidates.push(l);
            }
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::INFINITY, 0.0);
    for &l in &candidates {
        let f = lambda_objective(d, e, y, l);
        if best.0.is_infinite() || f < best.0 - 1e-15 * (1.0 + best.0.abs()) {
            best = (f, l);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// `⟨x, y⟩`
    Linear,
    /// `(1 + ⟨x, y⟩)^d`
    Polynomial { degree: u32 },
    /// `exp(−‖x − y‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `tanh(γ⟨x, y⟩ + r)`
    Sigmoid { gamma: f64, r: f64 },
}

impl Kernel {
    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    ensure_dim("kernel arguments", x.len(), y.len())?;
    kernel.validate()?;
    Ok(kernel_eval_unchecked(kernel, x, y))
}

fn kernel_eval_unchecked(kernel: &Kernel, x: &[f64], y: &[f64]) -> f64 {
    match *kernel {
        Kernel::Linear => crate::autodiff::dot(x, y),
        Kernel::Polynomial { degree } => (1.0 + crate::autodiff::dot(x, y)).powi(degree as i32),
        Kernel::Gaussian { sigma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        Kernel::Sigmoid { gamma, r } => (gamma * crate::autodiff::dot(x, y) + r).tanh(),
    }
}

/// One coordinate of a reduced map: `sign · k(x, center)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub center: Vec<f64>,
    /// `+1` or `−1`; a negative sign reverses the coordinate's order.
    pub sign: f64,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, center: Vec<f64>) -> Self {
        Self {
            kernel,
            center,
            sign: 1.0,
        }
    }
}

/// `ρ(x) = [ρ₁(x), …, ρ_m(x)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedMap {
    specs: Vec<KernelSpec>,
}

impl ReducedMap {
    pub fn new(specs: Vec<KernelSpec>) -> Result<Self> {
        let first = specs.first().ok_or(Error::EmptyInput("reduced map kernels"))?;
        let dim = first.center.len();
        for s in &specs {
            ensure_dim("kernel center", dim, s.center.len())?;
            s.kernel.validate()?;
            if s.sign != 1.0 && s.sign != -1.0 {
                return Err(Error::invalid("kernel sign must be ±1"));
            }
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].center.len()
    }

    pub fn output_dim(&self) -> usize {
        self.specs.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("reduced map input", self.input_dim(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.specs
            .iter()
            .map(|s| s.sign * kernel_eval_unchecked(&s.kernel, x, &s.center))
            .collect()
    }

    pub fn apply_dataset(&self, ds: &BinaryDataset) -> Result<BinaryDataset> {
        ensure_dim("reduced map input", self.input_dim(), ds.dim())?;
        ds.map_features(self.output_dim(), |x| self.apply_unchecked(x))
    }
}

/// Median Euclidean distance over all pairs of rows.
pub fn median_pairwise_distance(ds: &BinaryDataset) -> f64 {
    let n = ds.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = ds.row(i).iter().zip(ds.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// How the class-centroid kernels of a bagged member are oriented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterOrientation {
    /// Every coordinate is a plain similarity.
    Plain,
    /// The negative-class similarity enters negated, so every coordinate
    /// grows toward the positive class.
    ClassSigned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggingConfig {
    pub members: usize,
    /// Bootstrap size as a fraction of the training set.
    pub fraction: f64,
    pub orientation: CenterOrientation,
    /// Kernel centers per class and member.
    pub centers: Centers,
    /// Weight patterns by `outlier_weights` with this norm order.
    pub outlier_norm: Option<f64>,
    pub greedy: GreedyConfig,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self {
            members: 5,
            fraction: 1.0,
            orientation: CenterOrientation::Plain,
            centers: Centers::ClassCentroid,
            outlier_norm: None,
            greedy: GreedyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedDep {
    pub map: ReducedMap,
    pub model: DepModel,
}

impl ReducedDep {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.model.score(&self.map.apply_unchecked(x))
    }
}

/// Members vote by averaging scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggedDep {
    pub members: Vec<ReducedDep>,
}

pub trait BinaryScorer {
    fn score(&self, x: &[f64]) -> f64;
}

impl BinaryScorer for BaggedDep {
    fn score(&self, x: &[f64]) -> f64 {
        self.members.iter().map(|m| m.score(x)).sum::<f64>() / self.members.len() as f64
    }
}

impl BinaryScorer for DepModel {
    fn score(&self, x: &[f64]) -> f64 {
        DepModel::score(self, x)
    }
}

/// Draws per class, with replacement, `max(1, round(fraction·n_c))` rows.
/// Returns the drawn row indices in draw order.
fn stratified_bootstrap(ds: &BinaryDataset, fraction: f64, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut idx = Vec::new();
    for class in [-1.0, 1.0] {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == class).collect();
        if members.is_empty() {
            return Err(Error::invalid("bagging needs both classes in the training set"));
        }
        let draws = ((fraction * members.len() as f64).round() as usize).max(1);
        idx.extend((0..draws).map(|_| members[rng.random_range(0..members.len())]));
    }
    Ok(idx)
}

fn gather(ds: &BinaryDataset, idx: &[usize], weights: Vec<f64>) -> Result<BinaryDataset> {
    let mut features = Vec::with_capacity(idx.len() * ds.dim());
    for &i in idx {
        features.extend_from_slice(ds.row(i));
    }
    let labels = idx.iter().map(|&i| ds.labels()[i]).collect();
    BinaryDataset::weighted(ds.dim(), features, labels, weights)
}

/// Median over all pairs of a multiset given as distinct rows with
/// multiplicities; pairs of copies of one row contribute distance 0.
fn median_pairwise_distance_counted(ds: &BinaryDataset, counts: &[usize]) -> f64 {
    let norms: Vec<f64> = (0..ds.len())
        .map(|i| crate::autodiff::dot(ds.row(i), ds.row(i)))
        .collect();
    let mut pairs: Vec<(f64, u64)> = Vec::with_capacity(ds.len() * (ds.len() + 1) / 2);
    for i in 0..ds.len() {
        let c = counts[i] as u64;
        if c > 1 {
            pairs.push((0.0, c * (c - 1) / 2));
        }
        for j in i + 1..ds.len() {
            let d2 = norms[i] + norms[j] - 2.0 * crate::autodiff::dot(ds.row(i), ds.row(j));
            pairs.push((d2.max(0.0).sqrt(), c * counts[j] as u64));
        }
    }
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    if total == 0 {
        return 0.0;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let at_rank = |r: u64| {
        let mut seen = 0;
        for &(d, w) in &pairs {
            seen += w;
            if seen > r {
                return d;
            }
        }
        pairs.last().map_or(0.0, |p| p.0)
    };
    if total % 2 == 1 {
        at_rank(total / 2)
    } else {
        0.5 * (at_rank(total / 2 - 1) + at_rank(total / 2))
    }
}

fn class_centroid(ds: &BinaryDataset, class: f64) -> Vec<f64> {
    let mut c = vec![0.0; ds.dim()];
    let mut n = 0usize;
    for i in (0..ds.len()).filter(|&i| ds.labels()[i] == class) {
        for (a, b) in c.iter_mut().zip(ds.row(i)) {
            *a += b;
        }
        n += 1;
    }
    c.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    c
}

/// Where each member places its Gaussian kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Centers {
    /// One kernel at each class centroid.
    ClassCentroid,
    /// `per_class` k-means prototypes within each class.
    KMeans { per_class: usize, iterations: usize },
}

fn class_rows(ds: &BinaryDataset, class: f64) -> Vec<&[f64]> {
    (0..ds.len())
        .filter(|&i| ds.labels()[i] == class)
        .map(|i| ds.row(i))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a k-means++ seeding. Empty clusters keep their
/// previous center.
pub fn kmeans(rows: &[&[f64]], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let first = rows.first().ok_or(Error::EmptyInput("k-means rows"))?;
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one center"));
    }
    let mut centers = vec![rows[rng.random_range(0..rows.len())].to_vec()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k.min(rows.len()) {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            nearest
                .iter()
                .position(|&d| {
                    t -= d;
                    t < 0.0
                })
                .unwrap_or(rows.len() - 1)
        } else {
            rng.random_range(0..rows.len())
        };
        centers.push(rows[pick].to_vec());
        let c = centers.last().expect("just pushed");
        for (n, r) in nearest.iter_mut().zip(rows) {
            *n = n.min(sq_dist(r, c));
        }
    }
    let dim = first.len();
    for _ in 0..iterations {
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for r in rows {
            let best = (0..centers.len())
                .min_by(|&a, &b| sq_dist(r, &centers[a]).total_cmp(&sq_dist(r, &centers[b])))
                .expect("nonempty");
            counts[best] += 1;
            for (s, x) in sums[best].iter_mut().zip(r.iter()) {
                *s += x;
            }
        }
        let mut moved = false;
        for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                let next: Vec<f64> = s.into_iter().map(|v| v / n as f64).collect();
                moved |= next != *c;
                *c = next;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(centers)
}

/// `members` reduced DEPs, each trained greedily on a stratified bootstrap
/// sample mapped through Gaussian kernels (at the sample's class centroids
/// by default) with σ the sample's median pairwise distance.
pub fn bagging_fit(ds: &BinaryDataset, cfg: &BaggingConfig, seed: u64) -> Result<BaggedDep> {
    if cfg.members == 0 {
        return Err(Error::invalid("bagging needs at least one member"));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "bootstrap fraction must lie in (0, 1], got {}",
            cfg.fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = Vec::with_capacity(cfg.members);
    for _ in 0..cfg.members {
        let drawn = stratified_bootstrap(ds, cfg.fraction, &mut rng)?;
        let drawn_weights = drawn.iter().map(|&i| ds.weights()[i]).collect();
        let mut sample = gather(ds, &drawn, drawn_weights)?;
        if let Some(p) = cfg.outlier_norm {
            let v = outlier_weights(&sample, p)?;
            sample.set_weights(v)?;
        }
        // Copies of a row have identical hinge terms, so training on the
        // distinct rows with summed weights gives the same objective.
        let mut distinct: Vec<usize> = drawn.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let mut counts = vec![0usize; distinct.len()];
        let mut summed = vec![0.0; distinct.len()];
        for (k, &i) in drawn.iter().enumerate() {
            let slot = distinct.binary_search(&i).expect("drawn row is listed");
            counts[slot] += 1;
            summed[slot] += sample.weights()[k];
        }
        let compact = gather(ds, &distinct, summed)?;
        let sigma = median_pairwise_distance_counted(&compact, &counts);
        let sigma = if sigma > 0.0 { sigma } else { 1.0 };
        let neg_sign = match cfg.orientation {
            CenterOrientation::Plain => 1.0,
            CenterOrientation::ClassSigned => -1.0,
        };
        let mut specs = Vec::new();
        for (class, sign) in [(-1.0, neg_sign), (1.0, 1.0)] {
            let centers = match cfg.centers {
                Centers::ClassCentroid => vec![class_centroid(&sample, class)],
                Centers::KMeans { per_class, iterations } => {
                    kmeans(&class_rows(&sample, class), per_class, iterations, &mut rng)?
                }
            };
            specs.extend(centers.into_iter().map(|center| KernelSpec {
                kernel: Kernel::Gaussian { sigma },
                center,
                sign,
            }));
        }
        let map = ReducedMap::new(specs)?;
        let mapped = map.apply_dataset(&compact)?;
        let model = greedy_train(&mapped, &cfg.greedy)?.model;
        members.push(ReducedDep { map, model });
    }
    Ok(BaggedDep { members })
}

/// One binary model per unordered class pair `(a, b)`, `a < b`, trained
/// with `a` as the negative class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvoEnsemble<M> {
    pub classes: usize,
    pub models: Vec<((usize, usize), M)>,
}

pub fn ovo_fit<M>(
    ds: &Dataset,
    mut trainer: impl FnMut(&BinaryDataset, (usize, usize)) -> Result<M>,
) -> Result<OvoEnsemble<M>> {
    let k = ds.classes();
    if k < 2 {
        return Err(Error::invalid("one-vs-one needs at least two classes"));
    }
    let mut models = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let pair = crate::data::subset_by_classes(ds, a, b)?;
            models.push(((a, b), trainer(&pair, (a, b))?));
        }
    }
    Ok(OvoEnsemble { classes: k, models })
}

impl<M: BinaryScorer> OvoEnsemble<M> {
    /// Hard majority vote; a positive score votes for the larger class of
    /// the pair. Vote ties go to the smaller class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes];
        for ((a, b), m) in &self.models {
            if m.score(x) > 0.0 {
                votes[*b] += 1;
            } else {
                votes[*a] += 1;
            }
        }
        let mut best = 0;
        for c in 1..self.classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        let hits = (0..ds.len())
            .filter(|&i| self.predict(ds.row(i)) == ds.labels()[i])
            .count();
        hits as f64 / ds.len().max(1) as f64
    }
}

/// One model per class against the rest; negatives carry weight `1/K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvrEnsemble<M> {
    pub models: Vec<M>,
}

/// The class-`k` problem: members of `k` labeled +1 with weight 1, all
/// others −1 with weight `1/K`.
pub fn one_vs_rest_problem(ds: &Dataset, k: usize) -> Result<BinaryDataset> {
    let classes = ds.classes();
    if !ds.labels().contains(&k) {
        return Err(Error::invalid(format!("class {k} absent from data")));
    }
    let labels: Vec<f64> = ds.labels().iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
    let weights = labels
        .iter()
        .map(|&y| if y > 0.0 { 1.0 } else { 1.0 / classes as f64 })
        .collect();
    BinaryDataset::weighted(ds.dim(), ds.features().to_vec(), labels, weights)
}

pub fn ovr_fit<M>(ds: &Dataset, mut trainer: impl FnMut(&BinaryDataset, usize) -> Result<M>) -> Result<OvrEnsemble<M>> {
    if ds.classes() < 2 {
        return Err(Error::invalid("one-vs-rest needs at least two classes"));
    }
    let models = (0..ds.classes())
        .map(|k| trainer(&one_vs_rest_problem(ds, k)?, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrEnsemble { models })
}

impl<M: BinaryScorer> OvrEnsemble<M> {
    /// Class with the highest score, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let scores: Vec<f64> = self.models.iter().map(|m| m.score(x)).collect();
        crate::morphonet::argmax(&scores)
    }
}

fn encode_dep(e: &mut Encoder, m: &DepModel) {
    e.f64s(&m.w);
    e.f64s(&m.m);
    e.f64(m.lambda);
}

fn decode_dep(d: &mut Decoder) -> Result<DepModel> {
    let w = d.f64s()?;
    let m = d.f64s()?;
    let lambda = d.f64()?;
    DepModel::new(w, m, lambda)
}

fn encode_kernel(e: &mut Encoder, k: &Kernel) {
    match *k {
        Kernel::Linear => e.u8(0),
        Kernel::Polynomial { degree } => {
            e.u8(1);
            e.u32(degree as usize);
        }
        Kernel::Gaussian { sigma } => {
            e.u8(2);
            e.f64(sigma);
        }
        Kernel::Sigmoid { gamma, r } => {
            e.u8(3);
            e.f64(gamma);
            e.f64(r);
        }
    }
}

fn decode_kernel(d: &mut Decoder) -> Result<Kernel> {
    Ok(match d.u8()? {
        0 => Kernel::Linear,
        1 => Kernel::Polynomial {
            degree: d.u32()? as u32,
        },
        2 => Kernel::Gaussian { sigma: d.f64()? },
        3 => Kernel::Sigmoid {
            gamma: d.f64()?,
            r: d.f64()?,
        },
        t => return Err(Error::format("checkpoint", format!("unknown kernel tag {t}"))),
    })
}

impl OvoEnsemble<BaggedDep> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(Kind::DepEnsemble);
        e.u32(self.classes);
        e.u32(self.models.len());
        for ((a, b), bag) in &self.models {
            e.u32(*a);
            e.u32(*b);
            e.u32(bag.members.len());
            for m in &bag.members {
                e.u32(m.map.specs.len());
                for s in &m.map.specs {
                    encode_kernel(&mut e, &s.kernel);
                    e.f64s(&s.center);
                    e.f64(s.sign);
                }
                encode_dep(&mut e, &m.model);
            }
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes, Kind::DepEnsemble)?;
        let classes = d.u32()?;
        let n_models = d.list_len(12)?;
        let mut models = Vec::with_capacity(n_models);
        for _ in 0..n_models {
            let a = d.u32()?;
            let b = d.u32()?;
            if a >= b || b >= classes {
                return Err(Error::format("checkpoint", format!("bad class pair ({a}, {b})")));
            }
            let n_members = d.list_len(4)?;
            let mut members = Vec::with_capacity(n_members);
            for _ in 0..n_members {
                let n_specs = d.list_len(13)?;
                let specs = (0..n_specs)
                    .map(|_| {
                        Ok(KernelSpec {
                            kernel: decode_kernel(&mut d)?,
                            center: d.f64s()?,
                            sign: d.f64()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let map = ReducedMap::new(specs)?;
                let model = decode_dep(&mut d)?;
                ensure_dim("model input", map.output_dim(), model.dim())?;
                members.push(ReducedDep { map, model });
            }
            if members.is_empty() {
                return Err(Error::format("checkpoint", "empty bag"));
            }
            models.push(((a, b), BaggedDep { members }));
        }
        d.finish()?;
        Ok(Self { classes, models })
    }
}
