//! Classification heads and their losses.
//!
//! * `Learned`: `y = Wᵀx + b` on the raw representation, trained end to end.
//! * `Orthonormal`: `y_i = α·q_i·x̂ + b_i` with a fixed projection `Q`.
//! * `Hadamard`: same as orthonormal, with `q_i` the `i`-th Sylvester row
//!   scaled by `1/√n`, evaluated through the fast transform.
//!
//! In the fixed modes only `α` and `b` are trainable, and `x̂ = x/‖x‖`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hadamard::{hadamard_backward_into, hadamard_logits_into, HadamardHeadGeometry};
use crate::numerics::{checksum, dot, gemv_into, gemv_transposed_into, l2_norm, Matrix};
use crate::projection::FixedProjection;

/// Norm floor used when normalizing representations.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadMode {
    Learned,
    Orthonormal,
    Hadamard,
}

impl HeadMode {
    pub fn is_fixed(self) -> bool {
        self != HeadMode::Learned
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadMode::Learned => "learned",
            HeadMode::Orthonormal => "orthonormal",
            HeadMode::Hadamard => "hadamard",
        }
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(HeadMode::Learned),
            "orthonormal" => Ok(HeadMode::Orthonormal),
            "hadamard" => Ok(HeadMode::Hadamard),
            other => Err(Error::InvalidArgument(format!(
                "unknown head mode {other:?} (expected learned|orthonormal|hadamard)"
            ))),
        }
    }
}

/// How per-class cosine terms are combined into one scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CosineReduction {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Cosine(CosineReduction),
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::Cosine(CosineReduction::Sum) => "cosine",
            LossKind::Cosine(CosineReduction::Mean) => "cosine-mean",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::CrossEntropy),
            "cosine" | "cosine-sum" => Ok(LossKind::Cosine(CosineReduction::Sum)),
            "cosine-mean" => Ok(LossKind::Cosine(CosineReduction::Mean)),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss {other:?} (expected ce|cosine|cosine-mean)"
            ))),
        }
    }
}

/// Result of projecting a vector onto the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub x_hat: Vec<f64>,
    /// `‖x‖₂` before normalization.
    pub norm: f64,
    /// True when `‖x‖ < NORM_EPS` and the floor was used instead.
    pub guard_fired: bool,
}

/// `x / max(‖x‖, 1e-12)`.
pub fn normalize(x: &[f64]) -> Normalized {
    let norm = l2_norm(x);
    let guard_fired = norm < NORM_EPS;
    let denom = norm.max(NORM_EPS);
    Normalized {
        x_hat: x.iter().map(|v| v / denom).collect(),
        norm,
        guard_fired,
    }
}

/// Numerically stable softmax.
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn logsumexp(y: &[f64]) -> f64 {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `−log softmax(y)_t`.
pub fn nll_loss(y: &[f64], t: usize) -> Result<f64> {
    if t >= y.len() {
        return Err(Error::InvalidArgument(format!(
            "target {t} out of range for {} classes",
            y.len()
        )));
    }
    Ok(logsumexp(y) - y[t])
}

#[derive(Clone, Debug, PartialEq)]
enum Classifier {
    Learned(Matrix),
    Orthonormal(FixedProjection),
    Hadamard(HadamardHeadGeometry),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradients {
    pub d_alpha: f64,
    pub d_bias: Vec<f64>,
    pub d_input: Vec<f64>,
    /// Present in learned mode only.
    pub d_weights: Option<Matrix>,
}

/// Intermediate values of one fixed-mode forward pass.
struct FixedForward {
    normalized: Normalized,
    /// `q_i · x̂` for every class.
    cosines: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    classifier: Classifier,
    alpha: f64,
    alpha_trainable: bool,
    bias: Vec<f64>,
    n_features: usize,
}

impl Head {
    /// Learned baseline with an explicit `N x C` weight matrix.
    pub fn learned(weights: Matrix) -> Self {
        let (n, c) = weights.shape();
        Self {
            classifier: Classifier::Learned(weights),
            alpha: 1.0,
            alpha_trainable: false,
            bias: vec![0.0; c],
            n_features: n,
        }
    }

    pub fn orthonormal(projection: FixedProjection) -> Self {
        let (n, c) = projection.q().shape();
        Self {
            classifier: Classifier::Orthonormal(projection),
            alpha: 1.0,
            alpha_trainable: true,
            bias: vec![0.0; c],
            n_features: n,
        }
    }

    /// Truncated Hadamard head; features are zero-padded up to the next
    /// power of two.
    pub fn hadamard(n_features: usize, n_classes: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidArgument("hadamard head needs N > 0".into()));
        }
        let geom = HadamardHeadGeometry::for_features(n_features, n_classes)?;
        Ok(Self {
            classifier: Classifier::Hadamard(geom),
            alpha: 1.0,
            alpha_trainable: true,
            bias: vec![0.0; n_classes],
            n_features,
        })
    }

    /// Fixes `α` at `value`, turning it into a softmax temperature
    /// hyperparameter.
    pub fn with_frozen_alpha(mut self, value: f64) -> Self {
        self.alpha = value;
        self.alpha_trainable = false;
        self
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.n_classes() {
            return Err(Error::Dimension(format!(
                "bias of length {} for {} classes",
                bias.len(),
                self.n_classes()
            )));
        }
        self.bias = bias;
        Ok(self)
    }

    pub fn mode(&self) -> HeadMode {
        match self.classifier {
            Classifier::Learned(_) => HeadMode::Learned,
            Classifier::Orthonormal(_) => HeadMode::Orthonormal,
            Classifier::Hadamard(_) => HeadMode::Hadamard,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn alpha_trainable(&self) -> bool {
        self.alpha_trainable
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// The `N x C` weight matrix, if the head stores one (learned and
    /// orthonormal modes).
    pub fn weights(&self) -> Option<&Matrix> {
        match &self.classifier {
            Classifier::Learned(w) => Some(w),
            Classifier::Orthonormal(p) => Some(p.q()),
            Classifier::Hadamard(_) => None,
        }
    }

    /// Mutable weights; only the learned head exposes them.
    pub fn learned_weights_mut(&mut self) -> Option<&mut Matrix> {
        match &mut self.classifier {
            Classifier::Learned(w) => Some(w),
            _ => None,
        }
    }

    pub fn projection(&self) -> Option<&FixedProjection> {
        match &self.classifier {
            Classifier::Orthonormal(p) => Some(p),
            _ => None,
        }
    }

    pub fn hadamard_geometry(&self) -> Option<&HadamardHeadGeometry> {
        match &self.classifier {
            Classifier::Hadamard(g) => Some(g),
            _ => None,
        }
    }

    /// Fingerprint of the classifier weights (not `α` or `b`).
    pub fn weights_checksum(&self) -> u64 {
        match &self.classifier {
            Classifier::Learned(w) => checksum(w.as_slice()),
            Classifier::Orthonormal(p) => checksum(p.q().as_slice()),
            Classifier::Hadamard(g) => checksum(&[g.n() as f64, g.c() as f64, g.row_scale()]),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension(format!(
                "head expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    fn check_target(&self, t: usize) -> Result<()> {
        if t >= self.n_classes() {
            return Err(Error::InvalidArgument(format!(
                "target {t} out of range for {} classes",
                self.n_classes()
            )));
        }
        Ok(())
    }

    /// `q_i · x̂` for every class, plus the normalization record.
    fn fixed_forward(&self, x: &[f64]) -> Result<FixedForward> {
        let normalized = normalize(x);
        let mut cosines = vec![0.0; self.n_classes()];
        match &self.classifier {
            Classifier::Orthonormal(p) => {
                gemv_transposed_into(p.q(), &normalized.x_hat, &mut cosines)?;
            }
            Classifier::Hadamard(g) => {
                let mut padded = vec![0.0; g.n()];
                padded[..self.n_features].copy_from_slice(&normalized.x_hat);
                let mut scratch = vec![0.0; g.n()];
                let zero = vec![0.0; g.c()];
                hadamard_logits_into(g, &padded, 1.0, &zero, &mut scratch, &mut cosines)?;
            }
            Classifier::Learned(_) => {
                return Err(Error::InvalidArgument(
                    "the learned head has no fixed class directions".into(),
                ))
            }
        }
        Ok(FixedForward {
            normalized,
            cosines,
        })
    }

    /// `Σ_i g_i q_i`, i.e. `Q g` in the representation space.
    fn fixed_adjoint(&self, g: &[f64]) -> Result<Vec<f64>> {
        match &self.classifier {
            Classifier::Orthonormal(p) => {
                let mut out = vec![0.0; self.n_features];
                gemv_into(p.q(), g, &mut out)?;
                Ok(out)
            }
            Classifier::Hadamard(geom) => {
                let mut out = vec![0.0; geom.n()];
                hadamard_backward_into(geom, g, 1.0, &mut out)?;
                out.truncate(self.n_features);
                Ok(out)
            }
            Classifier::Learned(_) => Err(Error::InvalidArgument(
                "the learned head has no fixed class directions".into(),
            )),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        match &self.classifier {
            Classifier::Learned(w) => {
                let mut y = vec![0.0; self.n_classes()];
                gemv_transposed_into(w, x, &mut y)?;
                for (yi, bi) in y.iter_mut().zip(&self.bias) {
                    *yi += bi;
                }
                Ok(y)
            }
            _ => {
                let f = self.fixed_forward(x)?;
                Ok(f.cosines
                    .iter()
                    .zip(&self.bias)
                    .map(|(s, b)| self.alpha * s + b)
                    .collect())
            }
        }
    }

    /// Softmax cross-entropy loss and its gradients.
    pub fn loss_and_grads(&self, x: &[f64], t: usize) -> Result<(f64, HeadGradients)> {
        self.check_input(x)?;
        self.check_target(t)?;
        match &self.classifier {
            Classifier::Learned(w) => {
                let y = self.logits(x)?;
                let loss = nll_loss(&y, t)?;
                let mut g = softmax(&y);
                g[t] -= 1.0;
                let (n, c) = w.shape();
                let mut d_weights = Matrix::zeros(n, c);
                for (i, &xi) in x.iter().enumerate() {
                    for (d, &gj) in d_weights.row_mut(i).iter_mut().zip(&g) {
                        *d = xi * gj;
                    }
                }
                let mut d_input = vec![0.0; n];
                gemv_into(w, &g, &mut d_input)?;
                Ok((
                    loss,
                    HeadGradients {
                        d_alpha: 0.0,
                        d_bias: g,
                        d_input,
                        d_weights: Some(d_weights),
                    },
                ))
            }
            _ => {
                let f = self.fixed_forward(x)?;
                let y: Vec<f64> = f
                    .cosines
                    .iter()
                    .zip(&self.bias)
                    .map(|(s, b)| self.alpha * s + b)
                    .collect();
                let loss = nll_loss(&y, t)?;
                let mut g = softmax(&y);
                g[t] -= 1.0;
                let d_alpha = dot(&g, &f.cosines);
                let scaled: Vec<f64> = g.iter().map(|v| self.alpha * v).collect();
                let d_x_hat = self.fixed_adjoint(&scaled)?;
                let d_input = normalization_backward(&f.normalized, &d_x_hat);
                Ok((
                    loss,
                    HeadGradients {
                        d_alpha,
                        d_bias: g,
                        d_input,
                        d_weights: None,
                    },
                ))
            }
        }
    }

    /// Softmax-free cosine loss `(1 − q_t·x̂) + Σ_{i≠t} (1 + q_i·x̂)`
    /// (divided by `C` under `Mean`) and its gradient with respect to `x`.
    pub fn cosine_loss_and_grads(
        &self,
        x: &[f64],
        t: usize,
        reduction: CosineReduction,
    ) -> Result<(f64, Vec<f64>)> {
        if !self.mode().is_fixed() {
            return Err(Error::InvalidArgument(
                "the cosine loss needs a fixed head (orthonormal or hadamard)".into(),
            ));
        }
        self.check_input(x)?;
        self.check_target(t)?;
        let f = self.fixed_forward(x)?;
        let scale = match reduction {
            CosineReduction::Sum => 1.0,
            CosineReduction::Mean => 1.0 / self.n_classes() as f64,
        };
        let mut loss = 0.0;
        let mut d_cos = vec![scale; self.n_classes()];
        for (i, &s) in f.cosines.iter().enumerate() {
            loss += if i == t { 1.0 - s } else { 1.0 + s };
        }
        d_cos[t] = -scale;
        let d_x_hat = self.fixed_adjoint(&d_cos)?;
        Ok((
            loss * scale,
            normalization_backward(&f.normalized, &d_x_hat),
        ))
    }

    /// Loss and gradients under either loss. For the cosine loss `d_alpha`
    /// and `d_bias` are zero.
    pub fn loss_and_grads_for(
        &self,
        loss: LossKind,
        x: &[f64],
        t: usize,
    ) -> Result<(f64, HeadGradients)> {
        match loss {
            LossKind::CrossEntropy => self.loss_and_grads(x, t),
            LossKind::Cosine(reduction) => {
                let (l, d_input) = self.cosine_loss_and_grads(x, t, reduction)?;
                Ok((
                    l,
                    HeadGradients {
                        d_alpha: 0.0,
                        d_bias: vec![0.0; self.n_classes()],
                        d_input,
                        d_weights: None,
                    },
                ))
            }
        }
    }
}

/// Chains `∂L/∂x̂` back through `x̂ = x / max(‖x‖, ε)`.
fn normalization_backward(n: &Normalized, d_x_hat: &[f64]) -> Vec<f64> {
    if n.guard_fired {
        return d_x_hat.iter().map(|d| d / NORM_EPS).collect();
    }
    let radial = dot(&n.x_hat, d_x_hat);
    d_x_hat
        .iter()
        .zip(&n.x_hat)
        .map(|(d, xh)| (d - radial * xh) / n.norm)
        .collect()
}
