//! Compressed sparse row matrices.
//!
//! Every graph operator in the crate (raw adjacency, normalized adjacency)
//! is a [`SparseMatrix`]. Propagation only ever needs `A * M` for a dense
//! `M`, so the kernel surface is intentionally small.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidSparse(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidSparse("row_offsets must start at 0".into()));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidSparse(format!(
                "{} column indices but {} values",
                col_indices.len(),
                values.len()
            )));
        }
        if *row_offsets.last().unwrap() != values.len() {
            return Err(Error::InvalidSparse(
                "last row offset must equal the number of stored values".into(),
            ));
        }
        for r in 0..n_rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return Err(Error::InvalidSparse(format!("row_offsets decrease at row {r}")));
            }
            let cols = &col_indices[start..end];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(Error::InvalidSparse(format!(
                        "column {c} out of range in row {r} (n_cols = {n_cols})"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidSparse(format!(
                        "columns not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(k) = values[start..end].iter().position(|&v| v == 0.0) {
                return Err(Error::InvalidSparse(format!(
                    "explicit zero stored at ({r}, {})",
                    cols[k]
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed; entries that end up exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidSparse(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if rows.last() == Some(&r) && col_indices.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_indices.push(c);
                values.push(v);
            }
        }
        let mut kept_cols = Vec::with_capacity(col_indices.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_indices).zip(values) {
            if v != 0.0 {
                row_offsets[r + 1] += 1;
                kept_cols.push(c);
                kept_vals.push(v);
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::from_csr(n_rows, n_cols, row_offsets, kept_cols, kept_vals)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Converts a dense matrix, dropping zeros.
    pub fn from_dense(m: ArrayView2<'_, f64>) -> Self {
        let (r, c) = m.dim();
        let triplets = m
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v));
        Self::from_triplets(r, c, triplets).expect("dense conversion is always valid")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates all stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each output row comes out sorted.
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Exact structural and value symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.asymmetric_entries() == 0
    }

    /// Number of stored entries `(i, j)` whose mirror `(j, i)` is missing or
    /// holds a different value.
    pub fn asymmetric_entries(&self) -> usize {
        if !self.is_square() {
            return self.nnz();
        }
        self.iter().filter(|&(r, c, v)| self.get(c, r) != v).count()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// `self * rhs` for a dense right-hand side.
    pub fn matmul(&self, rhs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        self.matmul_into(rhs, &mut out)?;
        Ok(out)
    }

    /// `out = self * rhs`. Rows are accumulated in stored column order, so
    /// the result is bitwise reproducible.
    pub fn matmul_into(&self, rhs: &ArrayView2<'_, f64>, out: &mut Array2<f64>) -> Result<()> {
        if rhs.nrows() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        if out.dim() != (self.n_rows, rhs.ncols()) {
            return Err(Error::DimensionMismatch(format!(
                "output buffer is {:?}, expected ({}, {})",
                out.dim(),
                self.n_rows,
                rhs.ncols()
            )));
        }
        let d = rhs.ncols();
        match (rhs.as_slice(), out.as_slice_mut()) {
            (Some(src), Some(dst)) => {
                for r in 0..self.n_rows {
                    let acc = &mut dst[r * d..(r + 1) * d];
                    acc.fill(0.0);
                    let (cols, vals) = self.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        let src_row = &src[c * d..(c + 1) * d];
                        for (a, &s) in acc.iter_mut().zip(src_row) {
                            *a += v * s;
                        }
                    }
                }
            }
            _ => {
                for r in 0..self.n_rows {
                    let mut acc = out.row_mut(r);
                    acc.fill(0.0);
                    let (cols, vals) = self.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc.scaled_add(v, &rhs.row(c));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap()
    }

    #[test]
    fn triplets_sorted_and_summed() {
        let m = SparseMatrix::from_triplets(2, 3, [(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (0, 0, 0.0)]).unwrap();
        assert_eq!(m.row_offsets(), &[0, 1, 2]);
        assert_eq!(m.col_indices(), &[1, 2]);
        assert_eq!(m.values(), &[2.0, 1.5]);
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(SparseMatrix::from_csr(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(SparseMatrix::from_csr(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn matmul_matches_dense() {
        let a = path3();
        let m = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let got = a.matmul(&m.view()).unwrap();
        let want = a.to_dense().dot(&m);
        assert_eq!(got, want);
        // non-contiguous rhs goes through the generic path
        let t = m.t().to_owned();
        let got_t = a.matmul(&t.t()).unwrap();
        assert_eq!(got_t, want);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = path3();
        let m = Array2::<f64>::zeros((2, 2));
        assert!(matches!(a.matmul(&m.view()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn transpose_and_symmetry() {
        let a = SparseMatrix::from_triplets(2, 3, [(0, 2, 1.0), (1, 0, 3.0)]).unwrap();
        let t = a.transpose();
        assert_eq!(t.to_dense(), a.to_dense().t().to_owned());
        assert!(path3().is_symmetric());
        assert!(!SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap().is_symmetric());
    }
}
