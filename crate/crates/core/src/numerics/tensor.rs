//! Row-major dense matrices over `f32`/`f64`.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

/// Element type for tensors: `f32` on the fast model paths, `f64` for
/// statistics and gradient verification. All transcendentals come from
/// `libm` (via `num_traits::Float`), keeping results platform-independent.
pub trait Scalar: Float + Send + Sync + core::fmt::Debug + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix. `data.len() == rows * cols` always holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2D<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2D<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Builds a tensor from a flat row-major buffer. Panics if the buffer
    /// length does not match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let n = rows.len();
        let m = if n == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            assert_eq!(r.len(), m, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: n, cols: m, data }
    }

    #[inline(always)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline(always)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline(always)]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline(always)]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline(always)]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor2D<U> {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2D<U> {
        self.map(|x| U::from_f64(x.to_f64()))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self @ rhs`, shapes `(m,k) x (k,n) -> (m,n)`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let (m, n) = (self.rows, rhs.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let arow = self.row(i);
            let crow = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                let brow = &rhs.data[p * n..(p + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c = *c + a * b;
                }
            }
        }
        out
    }

    /// `self @ rhs^T`, shapes `(m,k) x (n,k) -> (m,n)`. Both operands are
    /// walked along contiguous rows.
    pub fn matmul_bt(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_bt shape mismatch");
        let m = self.rows;
        let k = self.cols;
        let n = rhs.rows;
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let crow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] = dot_unrolled(arow, &rhs.data[j * k..(j + 1) * k]);
            }
        }
        out
    }

    /// `self^T @ rhs`, shapes `(k,m) x (k,n) -> (m,n)`.
    pub fn matmul_at(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "matmul_at shape mismatch");
        let (k, m, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for p in 0..k {
            let arow = &self.data[p * m..(p + 1) * m];
            let brow = &rhs.data[p * n..(p + 1) * n];
            for (j, &a) in arow.iter().enumerate() {
                let crow = &mut out.data[j * n..(j + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c = *c + a * b;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.data.iter_mut() {
            *a = *a * s;
        }
    }

    /// Adds `v` to every row.
    pub fn add_row_broadcast(&mut self, v: &[T]) {
        assert_eq!(v.len(), self.cols);
        for row in self.data.chunks_exact_mut(self.cols) {
            for (a, &b) in row.iter_mut().zip(v) {
                *a = *a + b;
            }
        }
    }

    /// Column sums as a length-`cols` vector.
    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (a, &b) in out.iter_mut().zip(row) {
                *a = *a + b;
            }
        }
        out
    }

    /// Column means computed with f64 accumulation.
    pub fn col_means_f64(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (a, &b) in out.iter_mut().zip(row) {
                *a += b.to_f64();
            }
        }
        let inv = 1.0 / self.rows as f64;
        for a in out.iter_mut() {
            *a *= inv;
        }
        out
    }

    /// Columns `[lo, hi)` as a new tensor.
    pub fn col_slice(&self, lo: usize, hi: usize) -> Self {
        assert!(lo <= hi && hi <= self.cols);
        let w = hi - lo;
        let mut data = Vec::with_capacity(self.rows * w);
        for row in self.data.chunks_exact(self.cols) {
            data.extend_from_slice(&row[lo..hi]);
        }
        Self { rows: self.rows, cols: w, data }
    }

    /// Writes `block` into columns `[lo, lo + block.cols)`.
    pub fn set_col_slice(&mut self, lo: usize, block: &Self) {
        assert_eq!(block.rows, self.rows);
        assert!(lo + block.cols <= self.cols);
        for (i, brow) in block.iter_rows().enumerate() {
            let dst = &mut self.data[i * self.cols + lo..i * self.cols + lo + block.cols];
            dst.copy_from_slice(brow);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for &x in &self.data {
            let v = x.to_f64();
            acc += v * v;
        }
        libm::sqrt(acc)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dot product in the element type, eight fixed lanes so the reduction
/// vectorizes. The lane pattern is part of the numeric contract: results
/// are identical on every platform.
#[inline]
fn dot_unrolled<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let pa = &a[c * LANES..(c + 1) * LANES];
        let pb = &b[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail = tail + a[i] * b[i];
    }
    let mut total = tail;
    for l in 0..LANES {
        total = total + acc[l];
    }
    total
}

/// Dot product with f64 accumulation.
#[inline]
pub fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x.to_f64() * y.to_f64();
    }
    acc
}

/// Euclidean norm with f64 accumulation.
#[inline]
pub fn norm_f64<T: Scalar>(a: &[T]) -> f64 {
    libm::sqrt(dot_f64(a, a))
}
