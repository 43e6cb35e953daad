//! Dense row-major matrices, a handful of vector helpers and the seeded
//! random source every other module draws from.
//!
//! All sums run left to right in `f64` so results are reproducible bit for
//! bit on a given machine.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
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

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Plain matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `M x`.
pub fn gemv(m: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.rows];
    gemv_into(m, x, &mut out)?;
    Ok(out)
}

/// `M x` written into `out`.
pub fn gemv_into(m: &Matrix, x: &[f64], out: &mut [f64]) -> Result<()> {
    if m.cols != x.len() || out.len() != m.rows {
        return Err(Error::Dimension(format!(
            "gemv: matrix {}x{}, vector {}, output {}",
            m.rows,
            m.cols,
            x.len(),
            out.len()
        )));
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(m.row(i), x);
    }
    Ok(())
}

/// `Mᵀ g`.
pub fn gemv_transposed(m: &Matrix, g: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.cols];
    gemv_transposed_into(m, g, &mut out)?;
    Ok(out)
}

/// `Mᵀ g` written into `out`. Each output entry is summed over rows in
/// increasing row order.
pub fn gemv_transposed_into(m: &Matrix, g: &[f64], out: &mut [f64]) -> Result<()> {
    if m.rows != g.len() || out.len() != m.cols {
        return Err(Error::Dimension(format!(
            "gemv_transposed: matrix {}x{}, vector {}, output {}",
            m.rows,
            m.cols,
            g.len(),
            out.len()
        )));
    }
    out.fill(0.0);
    for (i, &gi) in g.iter().enumerate() {
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += mij * gi;
        }
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// SplitMix64 finalizer. Used to expand seeds and to derive sub-seeds.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5EED)))
}

/// xorshift64* generator with a SplitMix64-expanded seed.
///
/// The full algorithm:
///
/// ```text
/// state0 = splitmix64(seed), or 0x9E3779B97F4A7C15 if that is zero
/// x ^= x >> 12; x ^= x << 25; x ^= x >> 27; state = x
/// output = x * 0x2545F4914F6CDD1D (wrapping)
/// uniform = (output >> 11) * 2^-53            in [0, 1)
/// normal  = Box-Muller on u1 = 1 - uniform, u2 = uniform:
///           r = sqrt(-2 ln u1); emits r cos(2 pi u2), then r sin(2 pi u2)
/// ```
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = 0x9E37_79B9_7F4A_7C15;
        }
        Self {
            state,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; `bound` must be nonzero.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "Rng::below with zero bound");
        // Lemire's multiply-shift; the bias is below 2^-64 * bound.
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Standard-normal draws from `rng`. `n` must be positive.
pub fn rng_normal(rng: &mut Rng, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("rng_normal needs n > 0".into()));
    }
    Ok(rng.normal_vec(n))
}

/// 64-bit FNV-1a over the bit patterns of a float slice.
pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}
