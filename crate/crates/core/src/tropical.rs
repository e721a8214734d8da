//! Max-plus and min-plus arithmetic.
//!
//! The two semirings replace `(+, ×)` with `(max, +)` and `(min, +)`. They are
//! isomorphic through negation, which is why every operator here comes in a
//! dilation/erosion pair. The additive identity of each semiring is an IEEE
//! infinity (`-inf` for max-plus, `+inf` for min-plus); the multiplicative
//! identity is `0`.
//!
//! Hard extremum selection always breaks ties toward the lowest index so that
//! subgradient routing downstream is deterministic.

use crate::error::{ensure_dim, Error, Result};

/// Which tropical semiring a matrix lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Semiring {
    MaxPlus,
    MinPlus,
}

impl Semiring {
    /// Additive identity (`-inf` or `+inf`).
    pub fn zero(self) -> f64 {
        match self {
            Semiring::MaxPlus => f64::NEG_INFINITY,
            Semiring::MinPlus => f64::INFINITY,
        }
    }

    /// Multiplicative identity.
    pub fn one(self) -> f64 {
        0.0
    }

    /// Tropical sum (max or min).
    #[inline]
    pub fn add(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::MaxPlus => {
                if b > a {
                    b
                } else {
                    a
                }
            }
            Semiring::MinPlus => {
                if b < a {
                    b
                } else {
                    a
                }
            }
        }
    }

    /// Tropical product (ordinary addition). The semiring zero absorbs, even
    /// against the opposite infinity, so no NaN ever leaves this function for
    /// non-NaN inputs.
    #[inline]
    pub fn mul(self, a: f64, b: f64) -> f64 {
        let z = self.zero();
        if a == z || b == z {
            z
        } else {
            a + b
        }
    }

    pub fn extremum(self) -> Extremum {
        match self {
            Semiring::MaxPlus => Extremum::Max,
            Semiring::MinPlus => Extremum::Min,
        }
    }
}

/// Direction of a (hard or soft) reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Max,
    Min,
}

/// Dense matrix over a tropical semiring, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TropicalMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    semiring: Semiring,
}

impl TropicalMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>, semiring: Semiring) -> Result<Self> {
        ensure_dim("tropical matrix entries", rows * cols, entries.len())?;
        if entries.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("tropical matrix entries must not be NaN"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            semiring,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], semiring: Semiring) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(r * c);
        for row in rows {
            ensure_dim("tropical matrix row", c, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::new(r, c, entries, semiring)
    }

    /// `0` on the diagonal and the semiring zero elsewhere.
    pub fn identity(n: usize, semiring: Semiring) -> Self {
        let mut entries = vec![semiring.zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = semiring.one();
        }
        Self {
            rows: n,
            cols: n,
            entries,
            semiring,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn semiring(&self) -> Semiring {
        self.semiring
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Elementwise negation, mapping the matrix into the dual semiring.
    pub fn negate(&self) -> Self {
        let semiring = match self.semiring {
            Semiring::MaxPlus => Semiring::MinPlus,
            Semiring::MinPlus => Semiring::MaxPlus,
        };
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| -v).collect(),
            semiring,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            entries,
            semiring: self.semiring,
        }
    }

    /// Same entries, reinterpreted in another semiring.
    pub fn with_semiring(mut self, semiring: Semiring) -> Self {
        self.semiring = semiring;
        self
    }

    /// Tropical matrix product `(A ⊞ B)_ij = ⊕_q a_iq ⊗ b_qj`.
    pub fn matmul(&self, other: &TropicalMatrix) -> Result<TropicalMatrix> {
        tropical_matmul(self, other)
    }

    /// Applies the matrix to a column vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("tropical matrix-vector product", self.cols, x.len())?;
        let s = self.semiring;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(s.zero(), |acc, (&a, &b)| s.add(acc, s.mul(a, b)))
            })
            .collect())
    }
}

pub fn tropical_matmul(a: &TropicalMatrix, b: &TropicalMatrix) -> Result<TropicalMatrix> {
    if a.semiring != b.semiring {
        return Err(Error::SemiringMismatch);
    }
    ensure_dim("tropical matmul inner dimension", a.cols, b.rows)?;
    let s = a.semiring;
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![s.zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for q in 0..k {
            let aiq = a.entries[i * k + q];
            if aiq == s.zero() {
                continue;
            }
            let brow = &b.entries[q * m..(q + 1) * m];
            for (o, &bqj) in row.iter_mut().zip(brow) {
                *o = s.add(*o, s.mul(aiq, bqj));
            }
        }
    }
    Ok(TropicalMatrix {
        rows: n,
        cols: m,
        entries: out,
        semiring: s,
    })
}

/// Index of the maximum, lowest index on ties. `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the minimum, lowest index on ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Dilation with its selected term. Index `0` is the bias `w[0]`, index
/// `i + 1` is the term `w[i + 1] + x[i]`.
pub fn dilation_with_index(w: &[f64], x: &[f64]) -> Result<(f64, usize)> {
    check_morph_args(w, x)?;
    let mut best = w[0];
    let mut idx = 0;
    for (i, (&wi, &xi)) in w[1..].iter().zip(x).enumerate() {
        let v = wi + xi;
        if v > best {
            best = v;
            idx = i + 1;
        }
    }
    Ok((best, idx))
}

/// Erosion with its selected term, indexed as in [`dilation_with_index`].
pub fn erosion_with_index(m: &[f64], x: &[f64]) -> Result<(f64, usize)> {
    check_morph_args(m, x)?;
    let mut best = m[0];
    let mut idx = 0;
    for (i, (&mi, &xi)) in m[1..].iter().zip(x).enumerate() {
        let v = mi + xi;
        if v < best {
            best = v;
            idx = i + 1;
        }
    }
    Ok((best, idx))
}

/// `δ_w(x) = w₀ ∨ ⋁ᵢ (wᵢ + xᵢ)`.
pub fn dilation(w: &[f64], x: &[f64]) -> Result<f64> {
    dilation_with_index(w, x).map(|(v, _)| v)
}

/// `ε_m(x) = m₀ ∧ ⋀ᵢ (mᵢ + xᵢ)`.
pub fn erosion(m: &[f64], x: &[f64]) -> Result<f64> {
    erosion_with_index(m, x).map(|(v, _)| v)
}

fn check_morph_args(w: &[f64], x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("morphological operator input"));
    }
    ensure_dim("morphological weights (input dim + 1)", x.len() + 1, w.len())
}

/// Log-sum-exp smoothing of max (or min) with hardness `beta`.
///
/// Max: `(1/β)·log Σ exp(β xₖ)`; Min is the dual `-(1/β)·log Σ exp(-β xₖ)`.
/// The extremum is always subtracted before exponentiating.
pub fn soft_reduce(x: &[f64], beta: f64, mode: Extremum) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput("soft_reduce input"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("hardness beta must be positive, got {beta}")));
    }
    Ok(match mode {
        Extremum::Max => soft_max_unchecked(x.iter().copied(), beta),
        Extremum::Min => -soft_max_unchecked(x.iter().map(|v| -v), beta),
    })
}

/// Shifted log-sum-exp over an iterator. Callers guarantee a non-empty
/// iterator and a positive finite `beta`.
pub(crate) fn soft_max_unchecked<I>(values: I, beta: f64) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    let sum: f64 = values.map(|v| (beta * (v - top)).exp()).sum();
    top + sum.ln() / beta
}

/// A max-plus (or min-plus) polynomial: the max (min) over affine terms
/// `aᵢᵀx + bᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TropicalPolynomial {
    slopes: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    mode: Extremum,
}

impl TropicalPolynomial {
    pub fn new(terms: Vec<(Vec<f64>, f64)>, mode: Extremum) -> Result<Self> {
        let Some(dim) = terms.first().map(|(a, _)| a.len()) else {
            return Err(Error::EmptyInput("tropical polynomial terms"));
        };
        let mut slopes = Vec::with_capacity(terms.len());
        let mut offsets = Vec::with_capacity(terms.len());
        for (a, b) in terms {
            ensure_dim("tropical polynomial slope", dim, a.len())?;
            slopes.push(a);
            offsets.push(b);
        }
        Ok(Self { slopes, offsets, mode })
    }

    pub fn dim(&self) -> usize {
        self.slopes[0].len()
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn mode(&self) -> Extremum {
        self.mode
    }

    fn term_values(&self, x: &[f64]) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b)
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure_dim("tropical polynomial input", self.dim(), x.len())?;
        let vals = self.term_values(x);
        Ok(match self.mode {
            Extremum::Max => vals.into_iter().fold(f64::NEG_INFINITY, f64::max),
            Extremum::Min => vals.into_iter().fold(f64::INFINITY, f64::min),
        })
    }

    /// Whether `term` never attains the extremum strictly on any of the sample
    /// points, i.e. removing it leaves the surface unchanged there.
    pub fn is_term_redundant_on(&self, term: usize, points: &[Vec<f64>]) -> Result<bool> {
        if term >= self.len() {
            return Err(Error::invalid(format!("term {term} out of range")));
        }
        for p in points {
            ensure_dim("tropical polynomial input", self.dim(), p.len())?;
            let vals = self.term_values(p);
            let own = vals[term];
            let others = vals.iter().enumerate().filter(|&(i, _)| i != term).map(|(_, &v)| v);
            let beaten = match self.mode {
                Extremum::Max => others.fold(f64::NEG_INFINITY, f64::max) >= own,
                Extremum::Min => others.fold(f64::INFINITY, f64::min) <= own,
            };
            if !beaten {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// A copy with `term` removed.
    pub fn without_term(&self, term: usize) -> Result<Self> {
        if self.len() <= 1 {
            return Err(Error::invalid("cannot remove the only term of a polynomial"));
        }
        let terms = self
            .slopes
            .iter()
            .cloned()
            .zip(self.offsets.iter().copied())
            .enumerate()
            .filter(|&(i, _)| i != term)
            .map(|(_, t)| t)
            .collect();
        Self::new(terms, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Direct evaluation of `⊕_q a_iq + b_qj` with no shortcuts.
    fn brute_matmul(a: &[Vec<f64>], b: &[Vec<f64>], max: bool) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; b[0].len()]; a.len()];
        for i in 0..a.len() {
            for j in 0..b[0].len() {
                let terms: Vec<f64> = (0..b.len()).map(|q| a[i][q] + b[q][j]).collect();
                out[i][j] = if max {
                    terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    terms.iter().cloned().fold(f64::INFINITY, f64::min)
                };
            }
        }
        out
    }

    #[test]
    fn identity_is_neutral() {
        let b = TropicalMatrix::from_rows(&[vec![1.5, -2.0, 3.0], vec![0.0, 7.0, -1.0]], Semiring::MaxPlus).unwrap();
        let id = TropicalMatrix::identity(2, Semiring::MaxPlus);
        assert_eq!(id.matmul(&b).unwrap(), b);
        let id = TropicalMatrix::identity(3, Semiring::MinPlus);
        let bm = b.clone().with_semiring(Semiring::MinPlus);
        assert_eq!(bm.matmul(&id).unwrap(), bm);
    }

    #[test]
    fn small_products_match_exhaustive_evaluation() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let expected_max = brute_matmul(&a, &b, true);
        let expected_min = brute_matmul(&a, &b, false);
        assert_eq!(expected_max, vec![vec![3.0, 2.0], vec![5.0, 4.0]]);
        assert_eq!(expected_min, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);

        for (semiring, expected) in [(Semiring::MaxPlus, expected_max), (Semiring::MinPlus, expected_min)] {
            let am = TropicalMatrix::from_rows(&a, semiring).unwrap();
            let bm = TropicalMatrix::from_rows(&b, semiring).unwrap();
            let got = am.matmul(&bm).unwrap();
            assert_eq!(got, TropicalMatrix::from_rows(&expected, semiring).unwrap());
        }
    }

    #[test]
    fn matmul_errors() {
        let a = TropicalMatrix::new(2, 3, vec![0.0; 6], Semiring::MaxPlus).unwrap();
        let b = TropicalMatrix::new(2, 2, vec![0.0; 4], Semiring::MaxPlus).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch { .. })));
        let c = TropicalMatrix::new(3, 1, vec![0.0; 3], Semiring::MinPlus).unwrap();
        assert!(matches!(a.matmul(&c), Err(Error::SemiringMismatch)));
        assert!(TropicalMatrix::new(2, 2, vec![0.0; 3], Semiring::MaxPlus).is_err());
    }

    #[test]
    fn identity_entries_never_produce_nan() {
        let a = TropicalMatrix::new(1, 2, vec![f64::NEG_INFINITY, f64::INFINITY], Semiring::MaxPlus).unwrap();
        let b = TropicalMatrix::new(2, 1, vec![f64::INFINITY, f64::NEG_INFINITY], Semiring::MaxPlus).unwrap();
        let c = a.matmul(&b).unwrap();
        assert!(!c.get(0, 0).is_nan());
        assert_eq!(c.get(0, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn dilation_examples() {
        assert_eq!(dilation(&[0.0, 0.0, 0.0], &[2.0, 5.0]).unwrap(), 5.0);
        assert_eq!(dilation(&[0.0, 1.0, -1.0], &[2.0, 5.0]).unwrap(), 4.0);
        assert_eq!(dilation_with_index(&[0.0, 1.0, -1.0], &[2.0, 5.0]).unwrap(), (4.0, 2));
        let c = 3.25;
        let w = [c, f64::NEG_INFINITY, f64::NEG_INFINITY];
        assert_eq!(dilation(&w, &[100.0, -4.0]).unwrap(), c);
    }

    #[test]
    fn erosion_examples() {
        assert_eq!(erosion(&[0.0, 0.0, 0.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert_eq!(erosion(&[10.0, 1.0, -1.0], &[2.0, 5.0]).unwrap(), 3.0);
    }

    #[test]
    fn morphological_errors() {
        assert!(matches!(dilation(&[0.0], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(
            erosion(&[0.0, 1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(dilation_with_index(&[1.0, 0.0, 0.0], &[1.0, 1.0]).unwrap().1, 0);
        assert_eq!(dilation_with_index(&[0.0, 2.0, 2.0], &[1.0, 1.0]).unwrap().1, 1);
        assert_eq!(erosion_with_index(&[5.0, 2.0, 2.0], &[1.0, 1.0]).unwrap().1, 1);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmin(&[2.0, 0.5, 0.5]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn dilation_is_a_tropical_matrix_product() {
        // δ_w(x) = wᵀ ⊞ [0, x], the leading 0 being the tropical unit.
        let w = vec![0.3, -1.0, 2.0, 0.5];
        let x = vec![1.0, -0.5, 0.25];
        let row = TropicalMatrix::new(1, 4, w.clone(), Semiring::MaxPlus).unwrap();
        let mut col = vec![0.0];
        col.extend_from_slice(&x);
        let xt = TropicalMatrix::new(4, 1, col, Semiring::MaxPlus).unwrap();
        assert_eq!(row.matmul(&xt).unwrap().get(0, 0), dilation(&w, &x).unwrap());
    }

    #[test]
    fn soft_reduce_examples() {
        let ln2 = 2f64.ln();
        assert_abs_diff_eq!(
            soft_reduce(&[0.0, 0.0], 1.0, Extremum::Max).unwrap(),
            ln2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            soft_reduce(&[0.0, 0.0], 1.0, Extremum::Min).unwrap(),
            -ln2,
            epsilon = 1e-15
        );
        assert!(soft_reduce(&[1.0], 0.0, Extremum::Max).is_err());
        assert!(soft_reduce(&[1.0], -1.0, Extremum::Max).is_err());
        assert!(soft_reduce(&[], 1.0, Extremum::Max).is_err());
    }

    #[test]
    fn soft_reduce_does_not_overflow() {
        let x = [800.0, 799.0, -1000.0];
        let v = soft_reduce(&x, 1000.0, Extremum::Max).unwrap();
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, 800.0, epsilon = 1e-9);
        let v = soft_reduce(&[-800.0, 0.0], 1000.0, Extremum::Min).unwrap();
        assert_abs_diff_eq!(v, -800.0, epsilon = 1e-9);
    }

    #[test]
    fn soft_reduce_handles_identity_entries() {
        let v = soft_reduce(&[f64::NEG_INFINITY, 1.0], 2.0, Extremum::Max).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        let v = soft_reduce(&[f64::NEG_INFINITY; 3], 2.0, Extremum::Max).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn polynomial_examples() {
        let p = TropicalPolynomial::new(vec![(vec![2.0, -1.0], 0.5)], Extremum::Max).unwrap();
        assert_eq!(p.eval(&[1.0, 3.0]).unwrap(), 2.0 - 3.0 + 0.5);

        let abs = TropicalPolynomial::new(vec![(vec![1.0], 0.0), (vec![-1.0], 0.0)], Extremum::Max).unwrap();
        for x in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            assert_eq!(abs.eval(&[x]).unwrap(), f64::abs(x));
        }
        assert!(abs.eval(&[1.0, 2.0]).is_err());
        assert!(TropicalPolynomial::new(vec![], Extremum::Min).is_err());
        assert!(TropicalPolynomial::new(vec![(vec![1.0], 0.0), (vec![1.0, 2.0], 0.0)], Extremum::Max).is_err());
    }

    #[test]
    fn dominated_term_has_no_bearing_on_the_surface() {
        // Three planes and a fourth that lies below their max everywhere.
        let terms = vec![
            (vec![1.0, 0.0], 0.0),
            (vec![-1.0, 0.0], 0.0),
            (vec![0.0, 1.0], 1.0),
            (vec![0.0, 0.0], -2.0),
        ];
        let p = TropicalPolynomial::new(terms, Extremum::Max).unwrap();
        let grid: Vec<Vec<f64>> = (0..41)
            .flat_map(|i| (0..41).map(move |j| vec![-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64]))
            .collect();
        assert!(p.is_term_redundant_on(3, &grid).unwrap());
        assert!(!p.is_term_redundant_on(0, &grid).unwrap());
        let reduced = p.without_term(3).unwrap();
        for pt in &grid {
            assert_eq!(p.eval(pt).unwrap(), reduced.eval(pt).unwrap());
        }
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, rows * cols)
    }

    proptest! {
        #[test]
        fn matmul_is_associative(a in matrix(3, 4), b in matrix(4, 2), c in matrix(2, 5), max in any::<bool>()) {
            let s = if max { Semiring::MaxPlus } else { Semiring::MinPlus };
            let a = TropicalMatrix::new(3, 4, a, s).unwrap();
            let b = TropicalMatrix::new(4, 2, b, s).unwrap();
            let c = TropicalMatrix::new(2, 5, c, s).unwrap();
            let left = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let right = a.matmul(&b).unwrap().matmul(&c).unwrap();
            for (l, r) in left.entries().iter().zip(right.entries()) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
        }

        #[test]
        fn dilation_erosion_adjunction(w in matrix(3, 4), x in matrix(4, 1), y in matrix(3, 1)) {
            // δ(x) = W ⊞ x, ε(y) = (−Wᵀ) ⊟ y; δ(x) ≤ y ⟺ x ≤ ε(y).
            let wm = TropicalMatrix::new(3, 4, w, Semiring::MaxPlus).unwrap();
            let dual = wm.transpose().negate();
            let dx = wm.apply(&x).unwrap();
            let ey = dual.apply(&y).unwrap();
            let lhs = dx.iter().zip(&y).all(|(d, yi)| d <= yi);
            let rhs = x.iter().zip(&ey).all(|(xi, e)| xi <= e);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn erosion_is_dual_of_dilation(m in matrix(1, 5), x in matrix(1, 4)) {
            let neg_m: Vec<f64> = m.iter().map(|v| -v).collect();
            let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert_eq!(erosion(&m, &x).unwrap(), -dilation(&neg_m, &neg_x).unwrap());
        }

        #[test]
        fn morphological_ops_are_monotone(w in matrix(1, 5), x in matrix(1, 4), i in 0usize..4, bump in 0.0..5.0f64) {
            let mut x2 = x.clone();
            x2[i] += bump;
            prop_assert!(dilation(&w, &x).unwrap() <= dilation(&w, &x2).unwrap());
            prop_assert!(erosion(&w, &x).unwrap() <= erosion(&w, &x2).unwrap());
        }

        #[test]
        fn soft_reduce_sandwich(x in prop::collection::vec(-50.0..50.0f64, 1..200), bi in 0usize..4) {
            let beta = [0.5, 1.0, 5.0, 50.0][bi];
            let n = x.len() as f64;
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = soft_reduce(&x, beta, Extremum::Max).unwrap();
            let smin = soft_reduce(&x, beta, Extremum::Min).unwrap();
            prop_assert!(hi <= smax + 1e-12 && smax <= hi + n.ln() / beta + 1e-12);
            prop_assert!(lo - n.ln() / beta - 1e-12 <= smin && smin <= lo + 1e-12);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert_eq!(smin, -soft_reduce(&neg, beta, Extremum::Max).unwrap());
        }
    }
}
