//! Small dense linear algebra: a row-major matrix, probability vectors,
//! stable softmax / log-sum-exp and an SVD-backed pseudoinverse.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Relative cutoff below which singular values are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[&[f64]]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, |v| v.len());
        if cols.iter().any(|col| col.len() != r) {
            return Err(invalid("columns of unequal length"));
        }
        let mut data = vec![0.0; r * c];
        for (j, col) in cols.iter().enumerate() {
            for (i, x) in col.iter().enumerate() {
                data[i * c + j] = *x;
            }
        }
        Matrix::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// First `n` rows as a new matrix.
    pub fn top_rows(&self, n: usize) -> Matrix {
        let n = n.min(self.rows);
        Matrix { rows: n, cols: self.cols, data: self.data[..n * self.cols].to_vec() }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v · M`.
    pub fn left_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(invalid(format!(
                "vector of length {} against {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (k, a) in v.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += a * self.get(k, j);
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `M · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(invalid(format!(
                "{}x{} matrix against vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| f(*x)).collect() }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(invalid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// Largest absolute entrywise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        max_abs_diff(&self.data, &other.data)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.max_abs_diff(&self.transpose()) <= tol
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Matrix { rows, cols, data }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// A probability vector: nonnegative entries summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if entries.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid(format!("probability entries must be finite and >= 0: {entries:?}")));
        }
        let s: f64 = entries.iter().sum();
        if (s - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {s}, not 1")));
        }
        Ok(ProbVec(entries))
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if s <= 0.0 {
            return Err(Error::DegenerateInput("weights have zero total mass".into()));
        }
        ProbVec::new(weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        ProbVec::new(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(invalid(format!("index {k} out of range {n}")));
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        ProbVec::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; the first one on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl Deref for ProbVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ProbVec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        ProbVec::new(v).map_err(serde::de::Error::custom)
    }
}

fn check_logits(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(invalid("empty logit vector"));
    }
    if logits.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(invalid("logits must be finite or -inf"));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateInput("every logit is -inf".into()));
    }
    Ok(m)
}

pub fn softmax(logits: &[f64]) -> Result<ProbVec> {
    let m = check_logits(logits)?;
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(ProbVec(e.into_iter().map(|x| x / z).collect()))
}

pub fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    let m = check_logits(logits)?;
    if logits.len() == 1 {
        return Ok(logits[0]);
    }
    let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    Ok(m + s.ln())
}

/// Moore-Penrose pseudoinverse through the SVD, truncating singular values
/// below `PINV_RCOND` times the largest one.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    if m.rows == 0 || m.cols == 0 {
        return Err(invalid("pseudoinverse of an empty matrix"));
    }
    let svd = m
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::DegenerateInput("SVD did not converge".into()))?;
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(Matrix::zeros(m.cols, m.rows));
    }
    let cutoff = PINV_RCOND * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let k = svd.singular_values.len();
    let mut out = DMatrix::<f64>::zeros(m.cols, m.rows);
    for s in 0..k {
        let sigma = svd.singular_values[s];
        if sigma <= cutoff {
            continue;
        }
        // V[:, s] * U[:, s]^T / sigma
        for i in 0..m.cols {
            let vi = vt[(s, i)] / sigma;
            if vi == 0.0 {
                continue;
            }
            for j in 0..m.rows {
                out[(i, j)] += vi * u[(j, s)];
            }
        }
    }
    Ok(Matrix::from_nalgebra(&out))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Sum that does not depend on the order of its terms: the terms are sorted
/// first, so any permutation of the input gives the same bits.
pub fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Serde helpers that write non-finite reals as the strings `"inf"`,
/// `"-inf"` and `"nan"`, which JSON cannot hold as numbers.
pub mod real {
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    pub fn label(x: f64) -> Option<&'static str> {
        if x.is_nan() {
            Some("nan")
        } else if x == f64::INFINITY {
            Some("inf")
        } else if x == f64::NEG_INFINITY {
            Some("-inf")
        } else {
            None
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        match label(*x) {
            Some(l) => s.serialize_str(l),
            None => s.serialize_f64(*x),
        }
    }

    pub fn vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        struct One(f64);
        impl serde::Serialize for One {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::real::serialize(&self.0, s)
            }
        }
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&One(*x))?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {

    #[test]
    fn non_finite_reals_become_strings() {
        #[derive(serde::Serialize)]
        struct R {
            #[serde(with = "super::real")]
            x: f64,
            #[serde(serialize_with = "super::real::vec")]
            v: Vec<f64>,
        }
        let j = serde_json::to_string(&R { x: f64::INFINITY, v: vec![1.5, f64::NEG_INFINITY] }).unwrap();
        assert_eq!(j, r#"{"x":"inf","v":[1.5,"-inf"]}"#);
    }
    use super::*;

    #[test]
    fn softmax_is_symmetric_and_shift_safe() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().as_slice(), &[0.5, 0.5]);
        let big = softmax(&[1000.0, 1000.0]).unwrap();
        assert_eq!(big.as_slice(), &[0.5, 0.5]);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_of_rounded_logits() {
        let p = softmax(&[0.0, -0.03, 0.21, 1.13, 1.31, 0.52]).unwrap();
        let want = [0.0856, 0.0831, 0.1056, 0.2651, 0.3174, 0.1432];
        // oracle: exp(l)/sum exp(l) evaluated by hand to 4 places
        let z: f64 = [0.0f64, -0.03, 0.21, 1.13, 1.31, 0.52].iter().map(|l| l.exp()).sum();
        for (i, l) in [0.0f64, -0.03, 0.21, 1.13, 1.31, 0.52].iter().enumerate() {
            assert!((p[i] - l.exp() / z).abs() < 1e-15);
            assert!((p[i] - want[i]).abs() < 2e-3, "{i}: {}", p[i]);
        }
        assert_eq!(p.argmax(), 4);
    }

    #[test]
    fn log_sum_exp_values() {
        assert_eq!(log_sum_exp(&[3.25]).unwrap(), 3.25);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let v = log_sum_exp(&[0.0, 0.0, 0.0, 0.0, 1.5, 0.0]).unwrap();
        assert!((v - (5.0 + 1.5f64.exp()).ln()).abs() < 1e-14);
        assert!((v - 2.249362472372778).abs() < 1e-12);
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn neg_infinity_logits_are_vetoes() {
        let p = softmax(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0]);
        assert!(matches!(
            softmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(softmax(&[f64::NAN]).is_err());
    }

    #[test]
    fn pinv_small_cases() {
        let i3 = Matrix::identity(3);
        assert!(pseudoinverse(&i3).unwrap().max_abs_diff(&i3) < 1e-14);
        let d = pseudoinverse(&Matrix::from_diag(&[2.0, 0.0])).unwrap();
        assert!(d.max_abs_diff(&Matrix::from_diag(&[0.5, 0.0])) < 1e-14);
        let z = pseudoinverse(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(z.shape(), (3, 2));
        assert!(z.data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn pinv_of_tall_matrix_solves_least_squares() {
        // 3x2 full column rank: pinv = (A^T A)^{-1} A^T
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let p = pseudoinverse(&a).unwrap();
        // A^T A = [[2,1],[1,5]], inverse = [[5,-1],[-1,2]]/9
        let ata_inv = Matrix::from_rows(&[vec![5.0 / 9.0, -1.0 / 9.0], vec![-1.0 / 9.0, 2.0 / 9.0]]).unwrap();
        let want = ata_inv.matmul(&a.transpose()).unwrap();
        assert!(p.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn matrix_shape_errors() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        let a = Matrix::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
        assert!(a.left_mul(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn prob_vec_validation() {
        assert!(ProbVec::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVec::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVec::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVec::new(vec![]).is_err());
    }

    #[test]
    fn sorted_sum_ignores_order() {
        let a = vec![1e16, 1.0, -1e16, 3.5, 1e-3];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(sorted_sum(a).to_bits(), sorted_sum(b).to_bits());
    }
}
