//! Fixed random classifier matrices.
//!
//! `Q` is stored `N x C` (features by classes); column `i` is the direction
//! of class `i`. Strict mode gives orthonormal columns and needs `C ≤ N`.
//! Unit-columns mode draws each column independently and only normalizes
//! it, which is what remains available once `C > N`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix, Rng};

const MAGIC: &[u8; 4] = b"FIXQ";
const HEADER_LEN: usize = 16;
const BREAKDOWN_NORM: f64 = 1e-8;
const MAX_REDRAWS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ProjectionMode {
    StrictOrthonormal = 0,
    UnitRows = 1,
}

impl ProjectionMode {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(Self::StrictOrthonormal),
            1 => Some(Self::UnitRows),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedProjection {
    q: Matrix,
    mode: ProjectionMode,
    /// `None` when the projection was read back from a file.
    seed: Option<u64>,
}

impl FixedProjection {
    /// Wraps an explicit `N x C` matrix. Columns must already be unit norm,
    /// and mutually orthogonal in strict mode.
    pub fn from_matrix(q: Matrix, mode: ProjectionMode) -> Result<Self> {
        let p = Self {
            q,
            mode,
            seed: None,
        };
        p.validate(1e-10)?;
        Ok(p)
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn n_features(&self) -> usize {
        self.q.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.q.cols()
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn into_matrix(self) -> Matrix {
        self.q
    }

    /// Largest absolute entry of `QᵀQ − I` (strict) or of the column norm
    /// deviations (unit-columns).
    pub fn orthonormality_error(&self) -> f64 {
        let c = self.n_classes();
        let cols: Vec<Vec<f64>> = (0..c).map(|j| self.q.column(j)).collect();
        let mut worst = 0.0f64;
        for i in 0..c {
            worst = worst.max((dot(&cols[i], &cols[i]) - 1.0).abs());
            if self.mode == ProjectionMode::StrictOrthonormal {
                for j in 0..i {
                    worst = worst.max(dot(&cols[i], &cols[j]).abs());
                }
            }
        }
        worst
    }

    fn validate(&self, tol: f64) -> Result<()> {
        if self.mode == ProjectionMode::StrictOrthonormal && self.n_classes() > self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "strict orthonormal projection needs C <= N, got N={}, C={}",
                self.n_features(),
                self.n_classes()
            )));
        }
        let err = self.orthonormality_error();
        if !(err < tol) {
            return Err(Error::InvalidArgument(format!(
                "projection columns violate the {:?} contract by {err:e}",
                self.mode
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.q.as_slice().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_features() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.mode as u32).to_le_bytes());
        for v in self.q.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the `FIXQ` layout. `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: origin.into(),
                offset: bytes.len() as u64,
                needed: (HEADER_LEN - bytes.len()) as u64,
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: origin.into(),
                found: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
                expected: u32::from_be_bytes(*MAGIC),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let (n, c, mode) = (word(4) as usize, word(8) as usize, word(12));
        let mode = ProjectionMode::from_u32(mode).ok_or_else(|| Error::Format {
            path: origin.into(),
            offset: 12,
            reason: format!("unknown projection mode {mode}"),
        })?;
        let body = &bytes[HEADER_LEN..];
        let want = n * c * 8;
        if body.len() < want {
            return Err(Error::Truncated {
                path: origin.into(),
                offset: bytes.len() as u64,
                needed: (want - body.len()) as u64,
            });
        }
        if body.len() > want {
            return Err(Error::Format {
                path: origin.into(),
                offset: (HEADER_LEN + want) as u64,
                reason: "trailing bytes after matrix data".into(),
            });
        }
        let data = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            q: Matrix::from_vec(n, c, data)?,
            mode,
            seed: None,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn check_counts(n_features: usize, n_classes: usize) -> Result<()> {
    if n_features == 0 || n_classes == 0 {
        return Err(Error::InvalidArgument(format!(
            "projection needs positive sizes, got N={n_features}, C={n_classes}"
        )));
    }
    Ok(())
}

fn pin_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| **x != 0.0) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn assemble(n: usize, cols: &[Vec<f64>]) -> Matrix {
    let mut q = Matrix::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q.set(i, j, v);
        }
    }
    q
}

/// Orthonormal `N x C` projection from modified Gram-Schmidt over
/// standard-normal columns. Each column is orthogonalized twice against
/// the accepted ones, then normalized and sign-pinned so that its first
/// nonzero entry is positive.
pub fn random_orthonormal(
    n_features: usize,
    n_classes: usize,
    seed: u64,
) -> Result<FixedProjection> {
    check_counts(n_features, n_classes)?;
    if n_classes > n_features {
        return Err(Error::InvalidArgument(format!(
            "cannot fit {n_classes} orthonormal columns in {n_features} dimensions; \
             use unit_rows for C > N"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    for j in 0..n_classes {
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let mut v = rng.normal_vec(n_features);
            for _pass in 0..2 {
                for q in &cols {
                    let p = dot(q, &v);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= p * qi;
                    }
                }
            }
            let norm = l2_norm(&v);
            if norm >= BREAKDOWN_NORM {
                v.iter_mut().for_each(|x| *x /= norm);
                accepted = Some(v);
                break;
            }
        }
        let mut v = accepted.ok_or(Error::GramSchmidtBreakdown {
            column: j,
            retries: MAX_REDRAWS,
        })?;
        pin_sign(&mut v);
        cols.push(v);
    }
    Ok(FixedProjection {
        q: assemble(n_features, &cols),
        mode: ProjectionMode::StrictOrthonormal,
        seed: Some(seed),
    })
}

/// Message logged by [`unit_rows`] when strict mode would also have worked.
pub fn unit_rows_warning(n_features: usize, n_classes: usize) -> Option<String> {
    (n_classes <= n_features).then(|| {
        format!(
            "unit_rows with C={n_classes} <= N={n_features}: strict orthonormal mode is available"
        )
    })
}

/// `N x C` projection whose columns are independent normalized Gaussian
/// vectors. Works for any `C`, including `C > N`.
pub fn unit_rows(n_features: usize, n_classes: usize, seed: u64) -> Result<FixedProjection> {
    check_counts(n_features, n_classes)?;
    if let Some(msg) = unit_rows_warning(n_features, n_classes) {
        log::warn!("{msg}");
    }
    unit_columns(n_features, n_classes, seed)
}

/// [`unit_rows`] without the warning, for callers that want random unit
/// vectors rather than a classifier.
pub(crate) fn unit_columns(
    n_features: usize,
    n_classes: usize,
    seed: u64,
) -> Result<FixedProjection> {
    check_counts(n_features, n_classes)?;
    let mut rng = Rng::new(seed);
    let mut cols = Vec::with_capacity(n_classes);
    for j in 0..n_classes {
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let mut v = rng.normal_vec(n_features);
            let norm = l2_norm(&v);
            if norm >= BREAKDOWN_NORM {
                v.iter_mut().for_each(|x| *x /= norm);
                accepted = Some(v);
                break;
            }
        }
        cols.push(accepted.ok_or(Error::GramSchmidtBreakdown {
            column: j,
            retries: MAX_REDRAWS,
        })?);
    }
    Ok(FixedProjection {
        q: assemble(n_features, &cols),
        mode: ProjectionMode::UnitRows,
        seed: Some(seed),
    })
}
