//! Independent reference implementations shared by the integration tests.
//! The acceptance suite includes this file by path.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tropmorph::autodiff::{Graph, NodeId, PositiveTransform, Tensor};
use tropmorph::data::BinaryDataset;
use tropmorph::lp::{LinearProgram, Relation};

/// A random bounded LP together with the data the oracle needs.
pub struct RandomLp {
    pub lp: LinearProgram,
    pub costs: Vec<f64>,
    pub upper: Vec<f64>,
    /// `(a, relation, b)` for every general row.
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
}

/// Variables in `[0, u]`, rows built around an interior point so the
/// problem is always feasible.
pub fn random_lp(seed: u64) -> RandomLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6usize);
    let m = rng.random_range(0..=5usize);
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
    let costs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let x0: Vec<f64> = upper.iter().map(|&u| rng.random_range(0.0..u)).collect();
    let mut lp = LinearProgram::new(n);
    for j in 0..n {
        lp.set_cost(j, costs[j]);
        lp.set_bounds(j, 0.0, upper[j]);
    }
    let mut rows = Vec::new();
    let mut equalities = 0;
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ax0: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let slack = rng.random_range(0.0..1.0);
        let (rel, b) = match rng.random_range(0..5u32) {
            0 if equalities + 1 < n => {
                equalities += 1;
                (Relation::Eq, ax0)
            }
            0 => (Relation::Le, ax0 + slack),
            1 | 2 => (Relation::Le, ax0 + slack),
            _ => (Relation::Ge, ax0 - slack),
        };
        lp.add_dense_constraint(&a, rel, b);
        rows.push((a, rel, b));
    }
    RandomLp { lp, costs, upper, rows }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is (numerically) singular.
#[allow(clippy::needless_range_loop)]
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Optimal value by enumerating every basic solution: each choice of `n`
/// tight constraints (all equalities included) that yields a feasible
/// point is a vertex. The feasible set is a nonempty polytope, so the
/// minimum over vertices is the optimum.
pub fn vertex_enumeration(p: &RandomLp) -> f64 {
    let n = p.costs.len();
    // Hyperplanes: bounds first, then rows.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, p.upper[j]));
    }
    let mut eqs = Vec::new();
    for (a, rel, b) in &p.rows {
        if *rel == Relation::Eq {
            eqs.push(planes.len());
        }
        planes.push((a.clone(), *b));
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-7;
        x.iter().zip(&p.upper).all(|(&v, &u)| v >= -tol && v <= u + tol)
            && p.rows.iter().all(|(a, rel, b)| {
                let ax: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
                match rel {
                    Relation::Le => ax <= b + tol,
                    Relation::Ge => ax >= b - tol,
                    Relation::Eq => (ax - b).abs() <= tol,
                }
            })
    };
    let mut best = f64::INFINITY;
    combinations(planes.len(), n, 0, &mut Vec::new(), &mut |set| {
        if !eqs.iter().all(|e| set.contains(e)) {
            return;
        }
        let a = set.iter().map(|&i| planes[i].0.clone()).collect();
        let b = set.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = p.costs.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = best.min(v);
            }
        }
    });
    best
}

/// Weighted isotonic least squares by brute force: the optimum is constant
/// on consecutive blocks at the block means, so try every partition and
/// keep the best monotone one.
pub fn isotonic_brute_force(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for i in 0..n {
            let cut = i == n - 1 || mask & (1 << i) != 0;
            if cut {
                let w: f64 = ws[start..=i].iter().sum();
                let s: f64 = ys[start..=i].iter().zip(&ws[start..=i]).map(|(y, w)| y * w).sum();
                let mean = s / w;
                if mean < prev {
                    ok = false;
                    break;
                }
                prev = mean;
                fit.extend(std::iter::repeat_n(mean, i + 1 - start));
                start = i + 1;
            }
        }
        if ok {
            let loss: f64 = fit.iter().zip(ys).zip(ws).map(|((f, y), w)| w * (f - y).powi(2)).sum();
            if loss < best.0 {
                best = (loss, fit);
            }
        }
    }
    best.1
}

/// Two overlapping Gaussian clouds in the plane with a random offset.
pub fn random_binary_2d(seed: u64, n: usize) -> BinaryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: f64 = rng.random_range(0.5..3.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let c = 0.5 * y * shift;
        let (gx, gy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        rows.push(vec![c * angle.cos() + gx, c * angle.sin() + gy]);
        labels.push(y);
    }
    BinaryDataset::from_rows(&rows, &labels).expect("valid dataset")
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// A random smooth graph: a stack of soft morphological and linear layers
/// ending in either cross-entropy or squared error.
pub fn random_smooth_graph(seed: u64) -> (Graph, NodeId) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let batch = rng.random_range(1..5);
    let n_in = rng.random_range(1..5);
    let x = g.input(n_in);
    g.bind(x, random_tensor(&mut rng, batch, n_in, 1.0)).unwrap();
    let mut h = x;
    let mut width = n_in;
    for _ in 0..rng.random_range(1..4) {
        let units = rng.random_range(1..5);
        let beta = rng.random_range(0.5..5.0);
        h = match rng.random_range(0..4) {
            0 => {
                let w = g.parameter(random_tensor(&mut rng, units, width + 1, 1.0));
                g.soft_dilation(h, w, beta).unwrap()
            }
            1 => {
                let w = g.parameter(random_tensor(&mut rng, units, width + 1, 1.0));
                g.soft_erosion(h, w, beta).unwrap()
            }
            2 => {
                let z = g.parameter(random_tensor(&mut rng, units, width, 1.0));
                let w = g.transform(z, PositiveTransform::Exp).unwrap();
                let b = g.parameter(random_tensor(&mut rng, 1, units, 1.0));
                g.linear(h, w, b).unwrap()
            }
            _ => {
                let w = g.parameter(random_tensor(&mut rng, units, width, 1.0));
                let b = g.parameter(random_tensor(&mut rng, 1, units, 1.0));
                g.linear(h, w, b).unwrap()
            }
        };
        width = units;
    }
    let loss = if rng.random_bool(0.5) {
        let classes = width.max(2);
        if width < 2 {
            let w = g.parameter(random_tensor(&mut rng, 2, width, 1.0));
            let b = g.parameter(random_tensor(&mut rng, 1, 2, 1.0));
            h = g.linear(h, w, b).unwrap();
        }
        let t = g.input(1);
        let labels = (0..batch).map(|_| rng.random_range(0..classes) as f64).collect();
        g.bind(t, Tensor::from_vec(batch, 1, labels).unwrap()).unwrap();
        g.softmax_cross_entropy(h, t).unwrap()
    } else {
        let t = g.input(width);
        g.bind(t, random_tensor(&mut rng, batch, width, 1.0)).unwrap();
        g.mean_squared_error(h, t).unwrap()
    };
    (g, loss)
}
