//! Dense vectors and matrices, the elementwise nonlinearities used by the
//! recursive units, and the seeded random source.
//!
//! Everything here is generic over [`Scalar`] so the same kernels run in
//! `f32` or `f64`. Shape mismatches are programming errors and panic.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Deref, DerefMut};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Floating-point element type for every tensor in the crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A dense column vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vector<T>(pub Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> T) -> Self {
        Self((0..len).map(f).collect())
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|v| *v = T::zero());
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &[T]) {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        for (a, &b) in self.0.iter_mut().zip(other) {
            *a += b;
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &[T]) {
        axpy(alpha, other, &mut self.0);
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// A dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length must be rows * cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    /// `out = self * v`
    pub fn matvec_into(&self, v: &[T], out: &mut [T]) {
        assert_eq!(self.cols, v.len(), "matvec: matrix cols != vector len");
        assert_eq!(self.rows, out.len(), "matvec: matrix rows != output len");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, v);
        }
    }

    /// `out += self * v`
    pub fn matvec_add(&self, v: &[T], out: &mut [T]) {
        assert_eq!(self.cols, v.len(), "matvec: matrix cols != vector len");
        assert_eq!(self.rows, out.len(), "matvec: matrix rows != output len");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, v);
        }
    }

    /// `out += selfᵀ * g`
    pub fn tr_matvec_add(&self, g: &[T], out: &mut [T]) {
        assert_eq!(self.rows, g.len(), "tr_matvec: matrix rows != vector len");
        assert_eq!(self.cols, out.len(), "tr_matvec: matrix cols != output len");
        for (&gi, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            if gi != T::zero() {
                axpy(gi, row, out);
            }
        }
    }

    /// `self += a bᵀ`
    pub fn add_outer(&mut self, a: &[T], b: &[T]) {
        assert_eq!(self.rows, a.len(), "outer: rows != len(a)");
        assert_eq!(self.cols, b.len(), "outer: cols != len(b)");
        let cols = self.cols;
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(cols)) {
            if ai != T::zero() {
                axpy(ai, b, row);
            }
        }
    }

    /// `out += Σ_{r ∈ rows} self[r, ·]`; multiplies a row-stored weight
    /// table by a sparse binary indicator vector.
    pub fn gather_rows_add(&self, rows: &[u32], out: &mut [T]) {
        assert_eq!(self.cols, out.len(), "gather: cols != output len");
        for &r in rows {
            let r = r as usize;
            assert!(r < self.rows, "gather: row {r} out of range ({} rows)", self.rows);
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w;
            }
        }
    }

    /// `self[r, ·] += g` for every `r` in `rows`.
    pub fn scatter_rows_add(&mut self, rows: &[u32], g: &[T]) {
        assert_eq!(self.cols, g.len(), "scatter: cols != len(g)");
        for &r in rows {
            for (w, &gi) in self.row_mut(r as usize).iter_mut().zip(g) {
                *w += gi;
            }
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    assert_eq!(x.len(), y.len(), "axpy length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn matvec<T: Scalar>(m: &Matrix<T>, v: &[T]) -> Vector<T> {
    let mut out = Vector::zeros(m.rows());
    m.matvec_into(v, &mut out);
    out
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn sigmoid<T: Scalar>(v: &[T]) -> Vector<T> {
    Vector(v.iter().map(|&x| sigmoid_scalar(x)).collect())
}

pub fn tanh_vec<T: Scalar>(v: &[T]) -> Vector<T> {
    Vector(v.iter().map(|x| x.tanh()).collect())
}

pub fn hadamard<T: Scalar>(a: &[T], b: &[T]) -> Vector<T> {
    assert_eq!(a.len(), b.len(), "hadamard length mismatch");
    Vector(a.iter().zip(b).map(|(&x, &y)| x * y).collect())
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(v: &[T]) -> Vector<T> {
    assert!(!v.is_empty(), "softmax of empty vector");
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Vector(exps.into_iter().map(|e| e / total).collect())
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Uniform Glorot initialization in `[-s, s]`, `s = sqrt(6 / (rows + cols))`.
pub fn glorot_init<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Matrix<T> {
    assert!(rows > 0 && cols > 0, "glorot_init needs positive dimensions");
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.uniform(-s, s))).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Caller-owned deterministic random source.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.gen_range(lo..=hi)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.inner.gen_bool(p)
    }

    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        items.shuffle(&mut self.inner);
    }
}

/// Mixes a base seed with a stream index so independent consumers
/// (splits, initialization, shuffling) draw from unrelated streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
