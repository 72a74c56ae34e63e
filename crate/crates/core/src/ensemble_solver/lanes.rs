use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};

/// A sample-dependent scalar carried as `S` lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleScalar(pub Vec<f64>);

impl EnsembleScalar {
    pub fn splat(width: usize, value: f64) -> Self {
        EnsembleScalar(vec![value; width])
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn lanes(&self) -> &[f64] {
        &self.0
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.width(), rhs.width(), "ensemble width mismatch");
        EnsembleScalar(self.0.iter().zip(&rhs.0).map(|(&a, &b)| f(a, b)).collect())
    }
}

macro_rules! lane_op {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr for &EnsembleScalar {
            type Output = EnsembleScalar;
            fn $method(self, rhs: Self) -> EnsembleScalar {
                self.zip_with(rhs, |a, b| a $op b)
            }
        }
        impl $tr for EnsembleScalar {
            type Output = EnsembleScalar;
            fn $method(self, rhs: Self) -> EnsembleScalar {
                (&self).$method(&rhs)
            }
        }
    };
}

lane_op!(Add, add, +);
lane_op!(Sub, sub, -);
lane_op!(Mul, mul, *);
lane_op!(Div, div, /);

/// A vector of `len` entries, each an `S`-lane array. Lanes of one entry are
/// contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleVector {
    len: usize,
    width: usize,
    data: Vec<f64>,
}

impl EnsembleVector {
    pub fn zeros(len: usize, width: usize) -> Self {
        EnsembleVector {
            len,
            width,
            data: vec![0.0; len * width],
        }
    }

    /// Build from one scalar vector per lane.
    pub fn from_lanes(lanes: &[Vec<f64>]) -> Result<Self> {
        let width = lanes.len();
        if width == 0 {
            return Err(Error::Domain("ensemble needs at least one lane".into()));
        }
        let len = lanes[0].len();
        if lanes.iter().any(|l| l.len() != len) {
            return Err(Error::Domain("lane vectors differ in length".into()));
        }
        let mut data = vec![0.0; len * width];
        for (s, lane) in lanes.iter().enumerate() {
            for (j, &v) in lane.iter().enumerate() {
                data[j * width + s] = v;
            }
        }
        Ok(EnsembleVector { len, width, data })
    }

    /// Every lane holds a copy of `values`.
    pub fn broadcast(values: &[f64], width: usize) -> Self {
        let mut data = Vec::with_capacity(values.len() * width);
        for &v in values {
            data.extend(std::iter::repeat_n(v, width));
        }
        EnsembleVector {
            len: values.len(),
            width,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Lanes of entry `j`.
    pub fn entry(&self, j: usize) -> &[f64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn entry_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.width..(j + 1) * self.width]
    }

    /// Copy of lane `s` as a plain vector.
    pub fn lane(&self, s: usize) -> Vec<f64> {
        assert!(s < self.width, "lane {s} out of range");
        self.data
            .iter()
            .skip(s)
            .step_by(self.width)
            .copied()
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-lane dot products; lanes are never summed together.
pub fn lane_dots(x: &EnsembleVector, y: &EnsembleVector) -> Result<EnsembleScalar> {
    if x.len != y.len || x.width != y.width {
        return Err(Error::Domain(format!(
            "vector shapes differ: {}x{} vs {}x{}",
            x.len, x.width, y.len, y.width
        )));
    }
    let mut acc = vec![0.0; x.width];
    for (xe, ye) in x
        .data
        .chunks_exact(x.width)
        .zip(y.data.chunks_exact(y.width))
    {
        for ((a, &u), &v) in acc.iter_mut().zip(xe).zip(ye) {
            *a += u * v;
        }
    }
    Ok(EnsembleScalar(acc))
}

/// Per-lane Euclidean norms.
pub fn lane_norms(x: &EnsembleVector) -> EnsembleScalar {
    let mut dots = lane_dots(x, x).expect("same vector");
    for v in &mut dots.0 {
        *v = v.sqrt();
    }
    dots
}

/// CSR matrix with one shared sparsity graph and an `S`-lane value per
/// nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCsrMatrix {
    nrows: usize,
    ncols: usize,
    width: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl EnsembleCsrMatrix {
    /// `values` holds `S` lanes per nonzero, lanes contiguous.
    pub fn new(
        nrows: usize,
        ncols: usize,
        width: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::Domain("ensemble needs at least one lane".into()));
        }
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 {
            return Err(Error::Domain(
                "row offsets must have nrows + 1 entries starting at 0".into(),
            ));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("row offsets must be non-decreasing".into()));
        }
        let nnz = row_offsets[nrows];
        if col_indices.len() != nnz || values.len() != nnz * width {
            return Err(Error::Domain(format!(
                "expected {nnz} column indices and {} values, got {} and {}",
                nnz * width,
                col_indices.len(),
                values.len()
            )));
        }
        if col_indices.iter().any(|&c| c >= ncols) {
            return Err(Error::Domain("column index out of range".into()));
        }
        Ok(EnsembleCsrMatrix {
            nrows,
            ncols,
            width,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Combine per-lane value arrays over a shared graph.
    pub fn from_lane_values(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        lane_values: &[Vec<f64>],
    ) -> Result<Self> {
        let width = lane_values.len();
        let nnz = col_indices.len();
        if lane_values.iter().any(|v| v.len() != nnz) {
            return Err(Error::Domain(
                "every lane needs one value per nonzero".into(),
            ));
        }
        let mut values = vec![0.0; nnz * width];
        for (s, lane) in lane_values.iter().enumerate() {
            for (k, &v) in lane.iter().enumerate() {
                values[k * width + s] = v;
            }
        }
        Self::new(nrows, ncols, width, row_offsets, col_indices, values)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Nonzero values of lane `s`, in graph order.
    pub fn lane_values(&self, s: usize) -> Vec<f64> {
        assert!(s < self.width, "lane {s} out of range");
        self.values
            .iter()
            .skip(s)
            .step_by(self.width)
            .copied()
            .collect()
    }

    /// Diagonal as an ensemble vector; missing diagonal entries are zero.
    pub fn diagonal(&self) -> EnsembleVector {
        let mut diag = EnsembleVector::zeros(self.nrows, self.width);
        for row in 0..self.nrows {
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                if self.col_indices[k] == row {
                    diag.entry_mut(row)
                        .copy_from_slice(&self.values[k * self.width..(k + 1) * self.width]);
                }
            }
        }
        diag
    }

    /// Largest `|A_ij - A_ji|` over lane `s`; entries absent from the graph
    /// count as zero.
    pub fn lane_asymmetry(&self, s: usize) -> f64 {
        let lane = self.lane_values(s);
        let mut worst: f64 = 0.0;
        for row in 0..self.nrows {
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                let col = self.col_indices[k];
                let mirror = self.find(col, row).map_or(0.0, |m| lane[m]);
                worst = worst.max((lane[k] - mirror).abs());
            }
        }
        worst
    }

    /// Position of `(row, col)` in the value array, if stored.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        let cols = &self.col_indices[range.clone()];
        cols.iter().position(|&c| c == col).map(|p| range.start + p)
    }

    pub(crate) fn spmv_into(&self, x: &EnsembleVector, y: &mut EnsembleVector) {
        let w = self.width;
        for row in 0..self.nrows {
            let out = &mut y.data[row * w..(row + 1) * w];
            out.fill(0.0);
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                let a = &self.values[k * w..(k + 1) * w];
                let c = self.col_indices[k];
                let xc = &x.data[c * w..(c + 1) * w];
                for ((o, &av), &xv) in out.iter_mut().zip(a).zip(xc) {
                    *o += av * xv;
                }
            }
        }
    }
}

/// Lane-wise sparse matrix-vector product.
pub fn spmv(a: &EnsembleCsrMatrix, x: &EnsembleVector) -> Result<EnsembleVector> {
    if x.len != a.ncols || x.width != a.width {
        return Err(Error::Domain(format!(
            "matrix is {}x{} with {} lanes, vector has {} entries and {} lanes",
            a.nrows, a.ncols, a.width, x.len, x.width
        )));
    }
    let mut y = EnsembleVector::zeros(a.nrows, a.width);
    a.spmv_into(x, &mut y);
    Ok(y)
}
