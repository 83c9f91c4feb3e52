//! Dense f64 linear algebra, activations, softmax, and a seeded RNG.
//!
//! Everything downstream (the encoders, the attention heads, the classifier)
//! computes on the `Matrix` type defined here: a row-major flat `f64` buffer
//! with explicit dimensions. Keeping the substrate this plain is what makes
//! the finite-difference gradient checks in `trainer` tight.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer. Rejects length mismatch
    /// and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at flat index {bad}",
                data[bad]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Standard matrix product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} . {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        debug_assert!(out.data.iter().all(|v| v.is_finite()));
        Ok(out)
    }

    /// `self · x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::shape(
                "matvec",
                format!("{}x{} . vec[{}]", self.rows, self.cols, x.len()),
            ));
        }
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = dot(row, x);
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.rows != x.len() {
            return Err(Error::shape(
                "matvec_t",
                format!("({}x{})ᵀ . vec[{}]", self.rows, self.cols, x.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += xr * a;
            }
        }
        Ok(out)
    }

    /// Rank-one update `self += a ⊗ b`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != self.rows || b.len() != self.cols {
            return Err(Error::shape(
                "add_outer",
                format!(
                    "{}x{} += vec[{}] ⊗ vec[{}]",
                    self.rows,
                    self.cols,
                    a.len(),
                    b.len()
                ),
            ));
        }
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &bc) in row.iter_mut().zip(b) {
                *o += ar * bc;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(
                "add_assign",
                format!(
                    "{}x{} += {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s · x`.
#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn add_assign_slice(y: &mut [f64], x: &[f64]) {
    axpy(y, 1.0, x);
}

// ---------------------------------------------------------------------------
// Activations. Backward rules are expressed in terms of the forward *output*
// so caches stay small: tanh' = 1 − y², sigmoid' = y(1 − y).
// ---------------------------------------------------------------------------

#[inline]
pub fn tanh_fwd(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn tanh_bwd(y: f64, dy: f64) -> f64 {
    dy * (1.0 - y * y)
}

#[inline]
pub fn sigmoid_fwd(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn sigmoid_bwd(y: f64, dy: f64) -> f64 {
    dy * y * (1.0 - y)
}

/// Numerically stable softmax (max-subtraction). Rejects empty input.
pub fn softmax(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::invalid("softmax of empty vector"));
    }
    if let Some(bad) = xs.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("softmax of non-finite entry {bad}")));
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Backward through softmax: given `w = softmax(s)` and `dL/dw`, returns
/// `dL/ds = w ⊙ (dw − w·dw)`.
pub fn softmax_backward(w: &[f64], dw: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), dw.len());
    let inner = dot(w, dw);
    w.iter().zip(dw).map(|(wi, dwi)| wi * (dwi - inner)).collect()
}

/// Stable log(Σ exp(x)).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Seeded RNG: xoshiro256++ with splitmix64 seeding. The algorithm is spelled
// out here (rather than pulled from a crate) so a reimplementation in any
// language can reproduce the exact same corpora and initializations:
//
//   splitmix64(z): z += 0x9E3779B97F4A7C15
//                  z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
//                  z = (z ^ z>>27) * 0x94D049BB133111EB
//                  return z ^ z>>31
//   state: four u64 words produced by iterating splitmix64 from the seed.
//   next_u64 (xoshiro256++): rotl(s0+s3, 23) + s0, then the xoshiro
//                  linear transition.
//   next_f64: (next_u64 >> 11) · 2⁻⁵³, uniform in [0, 1).
//   normal:   Marsaglia polar method on uniform pairs; the antithetic
//             partner is discarded.
// ---------------------------------------------------------------------------

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic pseudo-random generator. Identical seed gives an identical
/// stream on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    /// Independent stream `index` derived from `seed`. Used wherever work is
    /// fanned out (one stream per video, per purpose) so parallel generation
    /// never changes output.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut sm = seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN);
        Rng::new(splitmix64(&mut sm))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be nonzero. The tiny modulo bias is
    /// irrelevant at the sizes used here; determinism is what matters.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        loop {
            let u = self.uniform(-1.0, 1.0);
            let v = self.uniform(-1.0, 1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return mean + std * u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Xavier/Glorot uniform initialization: entries drawn uniformly from
/// ±√(6/(rows+cols)).
pub fn xavier_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Matrix { rows, cols, data }
}
