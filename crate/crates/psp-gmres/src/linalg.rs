//! Dense vectors, sparse and banded matrix storage, the matrix-free
//! operator abstraction and the probe recorder.

use std::collections::VecDeque;

use crate::error::Error;

/// Inner product of two equal-length vectors.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "dot: dimension mismatch");
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a * x`, in place.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy: dimension mismatch");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Anything that can produce `y = A * x` without exposing entries of `A`.
///
/// `apply` must be deterministic and linear to floating-point roundoff.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets. Duplicate entries are summed; column indices
    /// end up strictly increasing within each row.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, Error> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Config(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Sparse matrix-vector product `y = A * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for idx in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[idx] * x[self.col_indices[idx]];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Iterate stored entries as `(row, col, value)`.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            (self.row_offsets[i]..self.row_offsets[i + 1])
                .map(move |idx| (i, self.col_indices[idx], self.values[idx]))
        })
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x).expect("operator dimension mismatch")
    }
}

/// Banded matrix with half-bandwidth `d`, stored as `2d+1` contiguous
/// diagonals per row. Entry `(i, j)` is addressable iff `|i - j| <= d`;
/// out-of-band reads are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    d: usize,
    bands: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        BandedMatrix {
            n,
            d,
            bands: vec![0.0; n * (2 * d + 1)],
        }
    }

    pub fn identity(n: usize, d: usize) -> Self {
        let mut m = Self::zeros(n, d);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.d
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (2 * self.d + 1) + (j + self.d - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n && j < self.n);
        if i.abs_diff(j) <= self.d {
            self.bands[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && i.abs_diff(j) <= self.d,
            "BandedMatrix::set out of band: ({i}, {j}) with d = {}",
            self.d
        );
        let s = self.slot(i, j);
        self.bands[s] = v;
    }

    /// Banded matrix-vector product `y_i = sum_{|i-j| <= d} n_ij x_j`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.d);
            let hi = (i + self.d).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.bands[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Expand to CSR, dropping exact zeros outside the main diagonal.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut triplets = Vec::new();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.d);
            let hi = (i + self.d).min(self.n - 1);
            for j in lo..=hi {
                let v = self.bands[self.slot(i, j)];
                if v != 0.0 || i == j {
                    triplets.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, self.n, &triplets).unwrap()
    }

    /// Extract the in-band part of a CSR matrix. Out-of-band entries of
    /// `a` are dropped.
    pub fn from_csr_band(a: &CsrMatrix, d: usize) -> Self {
        assert_eq!(a.n_rows, a.n_cols);
        let mut m = Self::zeros(a.n_rows, d);
        for (i, j, v) in a.iter_entries() {
            if i.abs_diff(j) <= d {
                m.set(i, j, v);
            }
        }
        m
    }
}

/// The paired probe columns `(x, A*x)` accumulated from matrix-vector
/// products, the regression dataset for the preconditioner estimator.
///
/// Recording through [`ProbeHistory::record_apply`] guarantees every
/// stored pair satisfies `y = A*x` by construction. With a capacity set,
/// the history behaves as a ring buffer evicting oldest pairs first.
#[derive(Debug, Clone)]
pub struct ProbeHistory {
    n: usize,
    capacity: Option<usize>,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl ProbeHistory {
    pub fn new(n: usize) -> Self {
        ProbeHistory {
            n,
            capacity: None,
            pairs: VecDeque::new(),
        }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        ProbeHistory {
            n,
            capacity: Some(capacity),
            pairs: VecDeque::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored pairs `m`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Append a pair. Returns the new pair count.
    pub fn record(&mut self, x: Vec<f64>, y: Vec<f64>) -> Result<usize, Error> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        self.pairs.push_back((x, y));
        if let Some(cap) = self.capacity {
            while self.pairs.len() > cap {
                self.pairs.pop_front();
            }
        }
        Ok(self.pairs.len())
    }

    /// Compute `y = op.apply(x)`, store the pair and return `y`.
    pub fn record_apply(&mut self, op: &dyn LinearOperator, x: &[f64]) -> Result<Vec<f64>, Error> {
        let y = op.apply(x);
        self.record(x.to_vec(), y.clone())?;
        Ok(y)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    /// Row `i` of the stacked probe inputs, one entry per stored pair.
    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.pairs.iter().map(|(x, _)| x[i]).collect()
    }

    /// Row `i` of the stacked probe outputs.
    pub fn y_row(&self, i: usize) -> Vec<f64> {
        self.pairs.iter().map(|(_, y)| y[i]).collect()
    }
}
