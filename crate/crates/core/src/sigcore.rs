//! Complex kernels shared by every other module, plus the dense-matrix
//! oracles they are tested against.
//!
//! Convention: the IDFT matrix has entries `d[i][n] = exp(+j2πin/N)/√N`;
//! the forward unitary DFT is its conjugate transpose.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

/// Dense row-major complex matrix with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn matvec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols {
            return invalid(format!("matvec: {}x{} matrix times length-{} vector", self.rows, self.cols, x.len()));
        }
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return invalid("add: dimension mismatch");
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return invalid("max_abs_diff: dimension mismatch");
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

/// `exp(j·2π·x)`.
pub fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * x)
}

/// Normalized N-point IDFT matrix.
pub fn dft_matrix(n_points: usize) -> Result<ComplexMatrix> {
    if n_points == 0 {
        return invalid("dft_matrix: n_points must be >= 1");
    }
    let s = 1.0 / (n_points as f64).sqrt();
    // Reduce the exponent modulo N to keep the phase argument small.
    Ok(ComplexMatrix::from_fn(n_points, n_points, |i, n| {
        cis(((i * n) % n_points) as f64 / n_points as f64) * s
    }))
}

/// `out_len × input_len` matrix whose product with `x` is the linear
/// convolution `taps * x` truncated or zero-extended to `out_len`.
pub fn toeplitz_conv_matrix(taps: &[C64], input_len: usize, out_len: usize) -> Result<ComplexMatrix> {
    if taps.is_empty() || input_len == 0 {
        return invalid("toeplitz_conv_matrix: empty taps or input");
    }
    if out_len < input_len || taps.len() > out_len - input_len + 1 {
        return invalid(format!(
            "toeplitz_conv_matrix: {} taps, input {input_len}, output {out_len}",
            taps.len()
        ));
    }
    Ok(ComplexMatrix::from_fn(out_len, input_len, |i, k| {
        if i >= k && i - k < taps.len() {
            taps[i - k]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn linear_convolve(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.is_empty() || b.is_empty() {
        return invalid("linear_convolve: empty input");
    }
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    Ok(out)
}

/// Circulant matrix whose first column is `first_col` zero-padded to `n`.
pub fn circulant_matrix(first_col: &[C64], n: usize) -> Result<ComplexMatrix> {
    if first_col.len() > n || n == 0 {
        return invalid("circulant_matrix: first column longer than n");
    }
    let mut col = first_col.to_vec();
    col.resize(n, C64::new(0.0, 0.0));
    Ok(ComplexMatrix::from_fn(n, n, |i, k| col[(i + n - k) % n]))
}

/// Max deviation between `Dᴴ·B̄·D` and `√n·diag(Dᴴ·h̄)` for the circulant
/// `B̄` of `first_col`. The diagonal is the frequency response
/// `H(k) = Σ_l h(l)·exp(−j2πkl/n)`.
pub fn circulant_diagonalization_check(first_col: &[C64], n: usize) -> Result<f64> {
    let b = circulant_matrix(first_col, n)?;
    let d = dft_matrix(n)?;
    let lhs = d.adjoint().matmul(&b)?.matmul(&d)?;
    let mut col = first_col.to_vec();
    col.resize(n, C64::new(0.0, 0.0));
    let spectrum = d.adjoint().matvec(&col)?;
    let root = (n as f64).sqrt();
    let rhs = ComplexMatrix::from_fn(n, n, |i, j| if i == j { spectrum[i] * root } else { C64::new(0.0, 0.0) });
    lhs.max_abs_diff(&rhs)
}

/// Cached FFT plans for the unitary forward transform.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("len", &self.len).finish()
    }
}

impl UnitaryDft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return invalid("UnitaryDft: zero length");
        }
        let mut planner = FftPlanner::new();
        Ok(Self { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place `Dᴴ·x` (forward, `exp(−j…)/√len`).
    pub fn forward(&self, buf: &mut [C64]) {
        assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
        let s = 1.0 / (self.len as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// In-place `D·x` (inverse, `exp(+j…)/√len`).
    pub fn inverse(&self, buf: &mut [C64]) {
        assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
        let s = 1.0 / (self.len as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
    }
}
