use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// `D⁻¹ M`: every non-empty row sums to one.
    #[default]
    Row,
    /// `D^-1/2 M D^-1/2` with row-sum degrees.
    Symmetric,
}

/// Compressed sparse-row matrix in canonical form: column indices strictly
/// increase within each row and no stored value is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a canonical matrix from `(row, col, value)` triplets. Repeated
    /// coordinates are summed; entries that end up zero are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::shape(
                "csr_from_triplets",
                format!("entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        // Stable sort keeps the summation order of duplicates deterministic.
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut m = CsrMatrix::zeros(rows, cols);
        let mut iter = entries.into_iter().peekable();
        for row in 0..rows {
            while let Some(&(r, c, _)) = iter.peek() {
                if r != row {
                    break;
                }
                let mut sum = 0.0;
                while let Some(&(r2, c2, v)) = iter.peek() {
                    if (r2, c2) != (r, c) {
                        break;
                    }
                    sum += v;
                    iter.next();
                }
                if sum != 0.0 {
                    m.col_idx.push(c);
                    m.values.push(sum);
                }
            }
            m.row_ptr[row + 1] = m.col_idx.len();
        }
        Ok(m)
    }

    /// Assembles a matrix from raw CSR arrays, checking canonical form.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |detail: &str| Error::invalid(format!("CSR arrays: {detail}"));
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(bad("row_ptr must have rows + 1 entries starting at 0"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("row_ptr must be non-decreasing"));
        }
        if row_ptr[rows] != col_idx.len() || col_idx.len() != values.len() {
            return Err(bad("row_ptr[rows], col_idx and values disagree on nnz"));
        }
        for r in 0..rows {
            let cs = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cs.windows(2).any(|w| w[0] >= w[1]) || cs.iter().any(|&c| c >= cols) {
                return Err(bad("column indices must be in range and strictly increasing"));
            }
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(bad("values must be finite and non-zero"));
        }
        Ok(CsrMatrix { rows, cols, row_ptr, col_idx, values })
    }

    pub fn from_dense(dense: ArrayView2<'_, f64>) -> Self {
        let (rows, cols) = dense.dim();
        let mut m = CsrMatrix::zeros(rows, cols);
        for (r, row) in dense.rows().into_iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m.col_idx.push(c);
                    m.values.push(v);
                }
            }
            m.row_ptr[r + 1] = m.col_idx.len();
        }
        m
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
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

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    /// Replaces every stored value with one.
    pub fn binarize(&self) -> Self {
        CsrMatrix {
            values: vec![1.0; self.nnz()],
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Sum of two matrices of equal shape.
    pub fn add(&self, other: &CsrMatrix) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "csr_add",
                format!("{:?} + {:?}", self.shape(), other.shape()),
            ));
        }
        CsrMatrix::from_triplets(self.rows, self.cols, self.iter().chain(other.iter()))
    }

    /// Sparse-sparse product (Gustavson's row-wise algorithm). The
    /// accumulation order within each output row is fixed, so results are
    /// reproducible bit for bit.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "spmm_sparse",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = CsrMatrix::zeros(self.rows, other.cols);
        let mut acc = vec![0.0; other.cols];
        let mut touched = vec![false; other.cols];
        let mut pattern = Vec::new();
        for r in 0..self.rows {
            let (a_cols, a_vals) = self.row(r);
            for (&k, &a) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(k);
                for (&c, &b) in b_cols.iter().zip(b_vals) {
                    if !touched[c] {
                        touched[c] = true;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                if acc[c] != 0.0 {
                    out.col_idx.push(c);
                    out.values.push(acc[c]);
                }
                acc[c] = 0.0;
                touched[c] = false;
            }
            pattern.clear();
            out.row_ptr[r + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    /// Sparse-dense product `self · x`.
    pub fn mul_dense(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if self.cols != x.nrows() {
            return Err(Error::shape(
                "spmm_dense",
                format!("{:?} x {:?}", self.shape(), x.dim()),
            ));
        }
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for (r, mut out_row) in out.rows_mut().into_iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &x.row(c));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · y` without materializing the transpose.
    pub fn transpose_mul_dense(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if self.rows != y.nrows() {
            return Err(Error::shape(
                "spmm_dense_transpose",
                format!("{:?}ᵀ x {:?}", self.shape(), y.dim()),
            ));
        }
        let mut out = Array2::zeros((self.cols, y.ncols()));
        for (r, c, v) in self.iter() {
            out.row_mut(c).scaled_add(v, &y.row(r));
        }
        Ok(out)
    }

    pub fn normalize(&self, mode: Normalization) -> Result<Self> {
        match mode {
            Normalization::None => Ok(self.clone()),
            Normalization::Row => {
                let sums = self.row_sums();
                let mut out = self.clone();
                for (r, &sum) in sums.iter().enumerate() {
                    let span = self.row_ptr[r]..self.row_ptr[r + 1];
                    if span.is_empty() {
                        continue;
                    }
                    if sum == 0.0 {
                        return Err(Error::invalid(format!(
                            "row normalization: row {r} is non-empty but sums to zero"
                        )));
                    }
                    for v in &mut out.values[span] {
                        *v /= sum;
                    }
                }
                Ok(out)
            }
            Normalization::Symmetric => {
                if self.rows != self.cols {
                    return Err(Error::shape(
                        "symmetric_normalize",
                        format!("matrix is {:?}, must be square", self.shape()),
                    ));
                }
                if self.values.iter().any(|&v| v < 0.0) {
                    return Err(Error::invalid("symmetric normalization needs non-negative values"));
                }
                let inv_sqrt: Vec<f64> = self
                    .row_sums()
                    .into_iter()
                    .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                    .collect();
                CsrMatrix::from_triplets(
                    self.rows,
                    self.cols,
                    self.iter().map(|(r, c, v)| (r, c, inv_sqrt[r] * v * inv_sqrt[c])),
                )
            }
        }
    }

    /// `row<TAB>col<TAB>value` lines, one per stored entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (r, c, v) in self.iter() {
            writeln!(out, "{r}\t{c}\t{v}").unwrap();
        }
        out
    }
}
