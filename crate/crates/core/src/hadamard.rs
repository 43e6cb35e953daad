//! Sylvester Hadamard matrices and the truncated-Hadamard classifier.
//!
//! The classifier never materializes `H`: logits come from one in-place
//! fast Walsh-Hadamard transform of the (padded) normalized feature vector,
//! truncated to the first `c` outputs. Sylvester `H` is symmetric, so the
//! adjoint is the same transform applied to the zero-padded logit gradient.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn check_pow2(n: usize, what: &str) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "{what}: size {n} is not a power of two"
        )));
    }
    Ok(())
}

/// `n x n` Sylvester Hadamard matrix built by Kronecker doubling from `[[1]]`.
pub fn sylvester(n: usize) -> Result<Matrix> {
    check_pow2(n, "sylvester")?;
    let mut h = Matrix::from_vec(1, 1, vec![1.0])?;
    while h.rows() < n {
        let m = h.rows();
        let mut next = Matrix::zeros(2 * m, 2 * m);
        for r in 0..m {
            for c in 0..m {
                let v = h.get(r, c);
                next.set(r, c, v);
                next.set(r, c + m, v);
                next.set(r + m, c, v);
                next.set(r + m, c + m, -v);
            }
        }
        h = next;
    }
    Ok(h)
}

/// Replaces `x` with `H x` (unnormalized) using `log2(n)` butterfly passes.
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    check_pow2(x.len(), "fwht")?;
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Shape of a truncated-Hadamard head: transform size `n` (a power of
/// two), `c ≤ n` classes, and per-row scale `1/√n` so every implicit
/// class direction has unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HadamardHeadGeometry {
    n: usize,
    c: usize,
    row_scale: f64,
}

impl HadamardHeadGeometry {
    pub fn new(n: usize, c: usize) -> Result<Self> {
        check_pow2(n, "hadamard head")?;
        if c == 0 || c > n {
            return Err(Error::InvalidArgument(format!(
                "hadamard head needs 1 <= c <= n, got c={c}, n={n}"
            )));
        }
        Ok(Self {
            n,
            c,
            row_scale: 1.0 / (n as f64).sqrt(),
        })
    }

    /// Smallest geometry whose transform size covers `n_features` features.
    pub fn for_features(n_features: usize, c: usize) -> Result<Self> {
        let n = n_features.max(c).max(1).next_power_of_two();
        Self::new(n, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn row_scale(&self) -> f64 {
        self.row_scale
    }

    /// The explicit `c x n` classifier `(1/√n)·Ĥ`. Only for tests and the
    /// dense side of the benchmark.
    pub fn dense_rows(&self) -> Result<Matrix> {
        let h = sylvester(self.n)?;
        let mut out = Matrix::zeros(self.c, self.n);
        for r in 0..self.c {
            for (o, &v) in out.row_mut(r).iter_mut().zip(h.row(r)) {
                *o = v * self.row_scale;
            }
        }
        Ok(out)
    }
}

/// `alpha·(1/√n)·(H x̂)[..c] + b`. Allocates one length-`n` scratch buffer.
pub fn hadamard_logits(
    geom: &HadamardHeadGeometry,
    x_hat: &[f64],
    alpha: f64,
    b: &[f64],
) -> Result<Vec<f64>> {
    let mut scratch = vec![0.0; geom.n];
    let mut out = vec![0.0; geom.c];
    hadamard_logits_into(geom, x_hat, alpha, b, &mut scratch, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`hadamard_logits`]. `scratch` must have length
/// exactly `n`, which is the only auxiliary storage the kernel touches.
pub fn hadamard_logits_into(
    geom: &HadamardHeadGeometry,
    x_hat: &[f64],
    alpha: f64,
    b: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if x_hat.len() != geom.n || b.len() != geom.c || scratch.len() != geom.n || out.len() != geom.c
    {
        return Err(Error::Dimension(format!(
            "hadamard_logits: n={}, c={}, x_hat {}, bias {}, scratch {}, out {}",
            geom.n,
            geom.c,
            x_hat.len(),
            b.len(),
            scratch.len(),
            out.len()
        )));
    }
    scratch.copy_from_slice(x_hat);
    fwht_in_place(scratch)?;
    let s = alpha * geom.row_scale;
    for ((o, &t), &bi) in out.iter_mut().zip(scratch.iter()).zip(b) {
        *o = s * t + bi;
    }
    Ok(())
}

/// Gradient with respect to `x̂` of [`hadamard_logits`] given the logit
/// gradient: `alpha·(1/√n)·Ĥᵀ g`.
pub fn hadamard_backward(
    geom: &HadamardHeadGeometry,
    g_logits: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; geom.n];
    hadamard_backward_into(geom, g_logits, alpha, &mut out)?;
    Ok(out)
}

pub fn hadamard_backward_into(
    geom: &HadamardHeadGeometry,
    g_logits: &[f64],
    alpha: f64,
    out: &mut [f64],
) -> Result<()> {
    if g_logits.len() != geom.c || out.len() != geom.n {
        return Err(Error::Dimension(format!(
            "hadamard_backward: n={}, c={}, gradient {}, out {}",
            geom.n,
            geom.c,
            g_logits.len(),
            out.len()
        )));
    }
    out[..geom.c].copy_from_slice(g_logits);
    out[geom.c..].fill(0.0);
    fwht_in_place(out)?;
    let s = alpha * geom.row_scale;
    for v in out.iter_mut() {
        *v *= s;
    }
    Ok(())
}
