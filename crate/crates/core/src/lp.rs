//! Dense two-phase simplex for small and medium linear programs.
//!
//! Problems are stated in general form: minimize `cᵀx` subject to rows
//! `aᵀx {≤,≥,=} b` and per-variable bounds `l ≤ x ≤ u` (either side may be
//! infinite). They are rewritten into standard form `Ax = b, x ≥ 0, b ≥ 0`
//! and solved on a dense tableau. Entering columns are chosen by Dantzig's
//! rule until a run of degenerate pivots, after which Bland's rule takes
//! over to rule out cycling.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program in general form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    /// `n_vars` variables with zero cost and bounds `[0, +inf)`.
    pub fn new(n_vars: usize) -> Self {
        Self {
            costs: vec![0.0; n_vars],
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_free(&mut self, var: usize) {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY);
    }

    /// Adds `Σ coeff·x[var] (relation) rhs`. Repeated indices are summed.
    pub fn add_constraint(&mut self, coeffs: &[(usize, f64)], relation: Relation, rhs: f64) {
        self.rows.push(Row {
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        });
    }

    /// Adds a row from a dense coefficient vector.
    pub fn add_dense_constraint(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) {
        let sparse: Vec<(usize, f64)> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (i, c))
            .collect();
        self.add_constraint(&sparse, relation, rhs);
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
            let viol = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::Invalid(format!("bad bounds [{l}, {u}] on variable {j}")));
            }
        }
        if self.costs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Invalid("non-finite cost".into()));
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::Invalid("non-finite right-hand side".into()));
            }
            for &(j, c) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Invalid(format!("variable index {j} out of range")));
                }
                if !c.is_finite() {
                    return Err(LpError::Invalid("non-finite coefficient".into()));
                }
            }
        }
        Ok(())
    }
}

/// How a standard-form column maps back to an original variable:
/// `x[var] += sign * y + offset` (offset applied once per variable).
#[derive(Clone, Copy)]
struct ColumnMap {
    var: usize,
    sign: f64,
}

const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

/// Solves `lp` to within `tol` (pivot and optimality tolerance).
pub fn lp_solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    lp.validate()?;
    if !(tol > 0.0) {
        return Err(LpError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = lp.n_vars();

    // Variable substitution into nonnegative columns.
    let mut cols: Vec<ColumnMap> = Vec::with_capacity(n);
    let mut offset = vec![0.0; n];
    let mut first_col = vec![0usize; n];
    // (column, upper bound) pairs that become explicit rows.
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        first_col[j] = cols.len();
        if l.is_finite() {
            offset[j] = l;
            cols.push(ColumnMap { var: j, sign: 1.0 });
            if u.is_finite() {
                upper_rows.push((cols.len() - 1, u - l));
            }
        } else if u.is_finite() {
            offset[j] = u;
            cols.push(ColumnMap { var: j, sign: -1.0 });
        } else {
            cols.push(ColumnMap { var: j, sign: 1.0 });
            cols.push(ColumnMap { var: j, sign: -1.0 });
        }
    }
    let n_struct = cols.len();

    // Rows in terms of the structural columns, rhs made nonnegative.
    struct StdRow {
        dense: Vec<f64>,
        relation: Relation,
        rhs: f64,
    }
    let mut std_rows: Vec<StdRow> = Vec::with_capacity(lp.rows.len() + upper_rows.len());
    for row in &lp.rows {
        let mut dense = vec![0.0; n_struct];
        let mut rhs = row.rhs;
        for &(j, c) in &row.coeffs {
            rhs -= c * offset[j];
            let k = first_col[j];
            dense[k] += c * cols[k].sign;
            if !lp.lower[j].is_finite() && !lp.upper[j].is_finite() {
                dense[k + 1] -= c;
            }
        }
        std_rows.push(StdRow {
            dense,
            relation: row.relation,
            rhs,
        });
    }
    for &(k, ub) in &upper_rows {
        let mut dense = vec![0.0; n_struct];
        dense[k] = 1.0;
        std_rows.push(StdRow {
            dense,
            relation: Relation::Le,
            rhs: ub,
        });
    }
    for r in &mut std_rows {
        if r.rhs < 0.0 {
            r.rhs = -r.rhs;
            r.dense.iter_mut().for_each(|v| *v = -*v);
            r.relation = match r.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = std_rows.len();
    let n_slack = std_rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = std_rows.iter().filter(|r| r.relation != Relation::Le).count();
    let n_cols = n_struct + n_slack + n_art;
    let art_start = n_struct + n_slack;

    let mut tab = Tableau::new(m, n_cols);
    let mut slack = n_struct;
    let mut art = art_start;
    for (i, r) in std_rows.iter().enumerate() {
        tab.row_mut(i)[..n_struct].copy_from_slice(&r.dense);
        tab.set_rhs(i, r.rhs);
        match r.relation {
            Relation::Le => {
                tab.row_mut(i)[slack] = 1.0;
                tab.basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                tab.row_mut(i)[slack] = -1.0;
                slack += 1;
                tab.row_mut(i)[art] = 1.0;
                tab.basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                tab.row_mut(i)[art] = 1.0;
                tab.basis[i] = art;
                art += 1;
            }
        }
    }

    let max_iter = 50 * (m + n_cols) + 1000;
    let mut iterations = 0;

    // Phase I: minimize the sum of artificials.
    if n_art > 0 {
        let mut phase1 = vec![0.0; n_cols];
        phase1[art_start..].iter_mut().for_each(|c| *c = 1.0);
        tab.load_objective(&phase1);
        iterations += tab.optimize(n_cols, tol, max_iter)?;
        let scale = 1.0 + std_rows.iter().map(|r| r.rhs).fold(0.0, f64::max);
        if -tab.objective_value() > tol.sqrt() * scale {
            return Err(LpError::Infeasible);
        }
        // Drive remaining artificials out of the basis.
        let mut redundant = Vec::new();
        for i in 0..m {
            if tab.basis[i] >= art_start {
                let row = tab.row(i);
                let pivot = (0..art_start)
                    .filter(|&j| row[j].abs() > tol)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                match pivot {
                    Some(j) => tab.pivot(i, j),
                    None => redundant.push(i),
                }
            }
        }
        tab.drop_rows(&redundant);
    }

    // Phase II on structural and slack columns only.
    let mut phase2 = vec![0.0; n_cols];
    for (k, cm) in cols.iter().enumerate() {
        phase2[k] = lp.costs[cm.var] * cm.sign;
    }
    tab.load_objective(&phase2);
    iterations += tab.optimize(art_start, tol, max_iter.saturating_sub(iterations).max(1))?;

    let mut y = vec![0.0; n_cols];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(i);
    }
    let mut x = offset;
    for (k, cm) in cols.iter().enumerate() {
        x[cm.var] += cm.sign * y[k];
    }
    let objective = lp.objective_at(&x);
    Ok(LpSolution {
        x,
        objective,
        iterations,
    })
}

/// Row-major tableau `[A | b]` plus a reduced-cost row `[d | -z]`.
struct Tableau {
    m: usize,
    n: usize,
    stride: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(m: usize, n: usize) -> Self {
        let stride = n + 1;
        Self {
            m,
            n,
            stride,
            data: vec![0.0; m * stride],
            obj: vec![0.0; stride],
            basis: vec![usize::MAX; m],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.stride + self.n]
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        self.data[i * self.stride + self.n] = v;
    }

    /// `-z` where z is the current objective.
    fn objective_value(&self) -> f64 {
        self.obj[self.n]
    }

    /// Installs cost vector `c` and prices out the basic columns.
    fn load_objective(&mut self, c: &[f64]) {
        self.obj[..self.n].copy_from_slice(c);
        self.obj[self.n] = 0.0;
        for i in 0..self.m {
            let cb = self.obj[self.basis[i]];
            if cb != 0.0 {
                let (row, obj) = (&self.data[i * self.stride..(i + 1) * self.stride], &mut self.obj);
                for (o, &a) in obj.iter_mut().zip(row) {
                    *o -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let stride = self.stride;
        let piv = self.data[r * stride + q];
        {
            let row = &mut self.data[r * stride..(r + 1) * stride];
            let inv = 1.0 / piv;
            row.iter_mut().for_each(|v| *v *= inv);
            row[q] = 1.0;
        }
        let (before, rest) = self.data.split_at_mut(r * stride);
        let (prow, after) = rest.split_at_mut(stride);
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        };
        before.chunks_exact_mut(stride).for_each(eliminate);
        after.chunks_exact_mut(stride).for_each(eliminate);
        eliminate(&mut self.obj);
        self.basis[r] = q;
    }

    /// Runs primal simplex over columns `0..active_cols`. Returns pivots done.
    fn optimize(&mut self, active_cols: usize, tol: f64, max_iter: usize) -> Result<usize, LpError> {
        let mut iters = 0;
        let mut degenerate_run = 0;
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            let entering = if bland {
                (0..active_cols).find(|&j| self.obj[j] < -tol)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..active_cols {
                    let d = self.obj[j];
                    if d < -tol && best.is_none_or(|(_, b)| d < b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(q) = entering else {
                return Ok(iters);
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.data[i * self.stride + q];
                if a > tol {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - tol || (ratio <= lr + tol && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio <= tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q);
            // Clamp tiny negative right-hand sides produced by roundoff.
            for i in 0..self.m {
                let k = i * self.stride + self.n;
                if self.data[k] < 0.0 && self.data[k] > -tol {
                    self.data[k] = 0.0;
                }
            }
            iters += 1;
            if iters >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
        }
    }

    fn drop_rows(&mut self, rows: &[usize]) {
        if rows.is_empty() {
            return;
        }
        let stride = self.stride;
        let mut data = Vec::with_capacity(self.data.len());
        let mut basis = Vec::with_capacity(self.m);
        for i in 0..self.m {
            if !rows.contains(&i) {
                data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
                basis.push(self.basis[i]);
            }
        }
        self.m = basis.len();
        self.data = data;
        self.basis = basis;
    }
}
