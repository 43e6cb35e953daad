//! A small ReLU multilayer perceptron feeding a [`Head`], with manual
//! backpropagation and SGD (momentum + weight decay).
//!
//! Layer `l` maps `h_l` to `a_l = W_l h_l + b_l`. ReLU is applied between
//! layers; the output of the last dense layer is the representation `x`
//! handed to the head, without an activation.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::head::{Head, HeadMode, LossKind};
use crate::numerics::{checksum, derive_seed, gemv_into, gemv_transposed_into, Matrix, Rng};
use crate::projection::{FixedProjection, ProjectionMode};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub w: Matrix,
    pub b: Vec<f64>,
    vel_w: Matrix,
    vel_b: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: vec![0.0; output],
            vel_w: Matrix::zeros(output, input),
            vel_b: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(epoch, multiplier)`: from `epoch` on, the rate is
    /// `learning_rate * multiplier`. Entries are kept sorted by epoch.
    pub lr_schedule: Vec<(usize, f64)>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_schedule: Vec::new(),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mult = self
            .lr_schedule
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .max_by_key(|(e, _)| *e)
            .map_or(1.0, |(_, m)| *m);
        self.learning_rate * mult
    }

    /// Copy with the scheduled rate for `epoch` baked in.
    pub fn at_epoch(&self, epoch: usize) -> SgdConfig {
        SgdConfig {
            learning_rate: self.lr_at(epoch),
            ..self.clone()
        }
    }
}

/// Gradient buffers mirroring the trainable parameters of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub head_weights: Option<Matrix>,
    pub head_alpha: f64,
    pub head_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.w.rows(), l.w.cols()), vec![0.0; l.b.len()]))
                .collect(),
            head_weights: match mlp.head.mode() {
                HeadMode::Learned => {
                    Some(Matrix::zeros(mlp.head.n_features(), mlp.head.n_classes()))
                }
                _ => None,
            },
            head_alpha: 0.0,
            head_bias: vec![0.0; mlp.head.n_classes()],
        }
    }

    fn empty() -> Self {
        Self {
            layers: Vec::new(),
            head_weights: None,
            head_alpha: 0.0,
            head_bias: Vec::new(),
        }
    }

    pub fn zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.as_mut_slice().fill(0.0);
            b.fill(0.0);
        }
        if let Some(w) = &mut self.head_weights {
            w.as_mut_slice().fill(0.0);
        }
        self.head_alpha = 0.0;
        self.head_bias.fill(0.0);
    }

    /// `self += other`, entry by entry.
    pub fn add(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            add_into(w.as_mut_slice(), ow.as_slice());
            add_into(b, ob);
        }
        if let (Some(w), Some(ow)) = (&mut self.head_weights, &other.head_weights) {
            add_into(w.as_mut_slice(), ow.as_slice());
        }
        self.head_alpha += other.head_alpha;
        add_into(&mut self.head_bias, &other.head_bias);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.is_finite() && b.iter().all(|v| v.is_finite()))
            && self.head_weights.as_ref().is_none_or(Matrix::is_finite)
            && self.head_alpha.is_finite()
            && self.head_bias.iter().all(|v| v.is_finite())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the sample.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last one is `x`.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn representation(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    head: Head,
    loss: LossKind,
    grads: Gradients,
    head_vel_w: Option<Matrix>,
    head_vel_alpha: f64,
    head_vel_bias: Vec<f64>,
    cache: Option<ForwardCache>,
    guard_hits: u64,
}

impl Mlp {
    /// Network with all parameters zero. `widths` lists the output width of
    /// every dense layer; the last one must equal `head.n_features()`.
    pub fn new(input_dim: usize, widths: &[usize], head: Head, loss: LossKind) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidArgument(
                "an MLP needs at least one layer".into(),
            ));
        }
        if input_dim == 0 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive (input {input_dim}, widths {widths:?})"
            )));
        }
        let last = *widths.last().unwrap();
        if last != head.n_features() {
            return Err(Error::Dimension(format!(
                "last hidden width {last} does not match head input {}",
                head.n_features()
            )));
        }
        if matches!(loss, LossKind::Cosine(_)) && !head.mode().is_fixed() {
            return Err(Error::InvalidArgument(
                "the cosine loss needs a fixed head (orthonormal or hadamard)".into(),
            ));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &w in widths {
            layers.push(DenseLayer::zeros(fan_in, w));
            fan_in = w;
        }
        let head_vel_w = head
            .mode()
            .eq(&HeadMode::Learned)
            .then(|| Matrix::zeros(head.n_features(), head.n_classes()));
        let head_vel_bias = vec![0.0; head.n_classes()];
        let mut mlp = Self {
            layers,
            head,
            loss,
            grads: Gradients::empty(),
            head_vel_w,
            head_vel_alpha: 0.0,
            head_vel_bias,
            cache: None,
            guard_hits: 0,
        };
        mlp.grads = Gradients::zeros_like(&mlp);
        Ok(mlp)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn grads(&self) -> &Gradients {
        &self.grads
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::output_dim).collect()
    }

    /// How many times representation normalization hit the norm floor.
    pub fn guard_hits(&self) -> u64 {
        self.guard_hits
    }

    /// Whether `α` receives updates under the configured loss.
    pub fn alpha_is_trained(&self) -> bool {
        self.head.mode().is_fixed()
            && self.head.alpha_trainable()
            && self.loss == LossKind::CrossEntropy
    }

    /// He-normal dense weights, zero biases, `α = 1` (unless frozen), zero
    /// momentum. The dense layers and the head draw from separate streams,
    /// so two networks that differ only in their head start from identical
    /// hidden layers.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = Rng::new(derive_seed(seed, 0x11A7));
        for layer in &mut self.layers {
            let std = (2.0 / layer.input_dim() as f64).sqrt();
            for w in layer.w.as_mut_slice() {
                *w = std * rng.normal();
            }
            layer.b.fill(0.0);
            layer.vel_w.as_mut_slice().fill(0.0);
            layer.vel_b.fill(0.0);
        }
        let n = self.head.n_features();
        if let Some(w) = self.head.learned_weights_mut() {
            let mut rng = Rng::new(derive_seed(seed, 0x4EAD));
            let std = (2.0 / n as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = std * rng.normal();
            }
        }
        if self.head.alpha_trainable() {
            self.head.set_alpha(1.0);
        }
        self.head.bias_mut().fill(0.0);
        if let Some(v) = &mut self.head_vel_w {
            v.as_mut_slice().fill(0.0);
        }
        self.head_vel_alpha = 0.0;
        self.head_vel_bias.fill(0.0);
        self.grads.zero();
        self.cache = None;
    }

    fn run_layers(&self, z: &[f64]) -> Result<ForwardCache> {
        if z.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                z.len()
            )));
        }
        let depth = self.layers.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut h = z.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut a = vec![0.0; layer.output_dim()];
            gemv_into(&layer.w, &h, &mut a)?;
            for (ai, bi) in a.iter_mut().zip(&layer.b) {
                *ai += bi;
            }
            let next = if l + 1 < depth {
                a.iter().map(|v| v.max(0.0)).collect()
            } else {
                a.clone()
            };
            inputs.push(h);
            pre.push(a);
            h = next;
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Representation and logits for `z`, without touching the cache.
    pub fn predict(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.run_layers(z)?;
        let x = cache.representation().to_vec();
        let logits = self.head.logits(&x)?;
        Ok((x, logits))
    }

    /// Forward pass that records activations for [`Mlp::backward`].
    pub fn forward(&mut self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.run_layers(z)?;
        let x = cache.representation().to_vec();
        let logits = self.head.logits(&x)?;
        if self.head.mode().is_fixed() && crate::numerics::l2_norm(&x) < crate::head::NORM_EPS {
            self.guard_hits += 1;
        }
        self.cache = Some(cache);
        Ok((x, logits))
    }

    /// Backpropagates the loss of the last forwarded sample against target
    /// `t`, adding into the gradient buffers. Returns the sample loss.
    pub fn backward(&mut self, t: usize) -> Result<f64> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let mut grads = std::mem::replace(&mut self.grads, Gradients::empty());
        let out = self.backward_from(&cache, t, &mut grads);
        self.grads = grads;
        out
    }

    fn backward_from(&self, cache: &ForwardCache, t: usize, grads: &mut Gradients) -> Result<f64> {
        let x = cache.representation();
        let (loss, hg) = self.head.loss_and_grads_for(self.loss, x, t)?;
        if let (Some(acc), Some(d)) = (&mut grads.head_weights, &hg.d_weights) {
            add_into(acc.as_mut_slice(), d.as_slice());
        }
        grads.head_alpha += hg.d_alpha;
        add_into(&mut grads.head_bias, &hg.d_bias);

        let depth = self.layers.len();
        let mut delta = hg.d_input;
        for l in (0..depth).rev() {
            if l + 1 < depth {
                for (d, &a) in delta.iter_mut().zip(&cache.pre[l]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.inputs[l];
            let (gw, gb) = &mut grads.layers[l];
            for (r, &dr) in delta.iter().enumerate() {
                if dr != 0.0 {
                    for (g, &h) in gw.row_mut(r).iter_mut().zip(input) {
                        *g += dr * h;
                    }
                }
            }
            add_into(gb, &delta);
            if l > 0 {
                let mut prev = vec![0.0; self.layers[l].input_dim()];
                gemv_transposed_into(&self.layers[l].w, &delta, &mut prev)?;
                delta = prev;
            }
        }
        Ok(loss)
    }

    /// Forward and backward for one sample into caller-owned buffers.
    /// Returns the loss and the logits.
    pub fn forward_backward_with(
        &self,
        z: &[f64],
        t: usize,
        grads: &mut Gradients,
    ) -> Result<(f64, Vec<f64>)> {
        let cache = self.run_layers(z)?;
        let logits = self.head.logits(cache.representation())?;
        let loss = self.backward_from(&cache, t, grads)?;
        Ok((loss, logits))
    }

    pub fn zero_grad(&mut self) {
        self.grads.zero();
    }

    /// Accumulates gradients for a batch. With `threads > 1` the batch is
    /// split into contiguous chunks, one per worker, and the per-worker
    /// buffers are summed in worker order.
    ///
    /// Returns the summed loss and the number of correct argmax predictions.
    pub fn accumulate_batch(
        &mut self,
        samples: &[(&[f64], usize)],
        threads: usize,
    ) -> Result<(f64, usize)> {
        let threads = threads.max(1).min(samples.len().max(1));
        if threads == 1 {
            let mut grads = std::mem::replace(&mut self.grads, Gradients::empty());
            let res = self.chunk(samples, &mut grads);
            self.grads = grads;
            return res;
        }
        let chunk_len = samples.len().div_ceil(threads);
        let this = &*self;
        let results: Vec<Result<(f64, usize, Gradients)>> = std::thread::scope(|s| {
            let handles: Vec<_> = samples
                .chunks(chunk_len)
                .map(|chunk| {
                    s.spawn(move || {
                        let mut g = Gradients::zeros_like(this);
                        this.chunk(chunk, &mut g).map(|(l, c)| (l, c, g))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        });
        let mut loss = 0.0;
        let mut correct = 0;
        for r in results {
            let (l, c, g) = r?;
            loss += l;
            correct += c;
            self.grads.add(&g);
        }
        Ok((loss, correct))
    }

    fn chunk(&self, samples: &[(&[f64], usize)], grads: &mut Gradients) -> Result<(f64, usize)> {
        let mut loss = 0.0;
        let mut correct = 0;
        for &(z, t) in samples {
            let (l, logits) = self.forward_backward_with(z, t, grads)?;
            loss += l;
            if crate::numerics::argmax(&logits) == t {
                correct += 1;
            }
        }
        Ok((loss, correct))
    }

    /// One SGD update from the accumulated gradients, which are divided by
    /// `batch_size` first:
    ///
    /// `v ← μ·v + (g + λ·p)`, `p ← p − η·v`
    ///
    /// Applies to every dense parameter, the learned head weights, the head
    /// bias and a trainable `α`. Fixed classifier weights are never touched.
    pub fn sgd_step(&mut self, cfg: &SgdConfig, batch_size: usize) {
        let inv = 1.0 / batch_size.max(1) as f64;
        let (lr, mu, wd) = (cfg.learning_rate, cfg.momentum, cfg.weight_decay);
        let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
            for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + (gi * inv + wd * *pi);
                *pi -= lr * *vi;
            }
        };
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&self.grads.layers) {
            update(
                layer.w.as_mut_slice(),
                layer.vel_w.as_mut_slice(),
                gw.as_slice(),
            );
            update(&mut layer.b, &mut layer.vel_b, gb);
        }
        if let (Some(w), Some(v), Some(g)) = (
            self.head.learned_weights_mut(),
            &mut self.head_vel_w,
            &self.grads.head_weights,
        ) {
            update(w.as_mut_slice(), v.as_mut_slice(), g.as_slice());
        }
        update(
            self.head.bias_mut(),
            &mut self.head_vel_bias,
            &self.grads.head_bias,
        );
        if self.alpha_is_trained() {
            let mut a = [self.head.alpha()];
            let mut v = [self.head_vel_alpha];
            update(&mut a, &mut v, &[self.grads.head_alpha]);
            self.head.set_alpha(a[0]);
            self.head_vel_alpha = v[0];
        }
    }

    /// All trainable parameters flattened in declaration order: per layer
    /// `W` then `b`, then the learned head weights, `α` (when trained) and
    /// the head bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        if self.head.mode() == HeadMode::Learned {
            out.extend_from_slice(self.head.weights().unwrap().as_slice());
        }
        if self.alpha_is_trained() {
            out.push(self.head.alpha());
        }
        out.extend_from_slice(self.head.bias());
        out
    }

    /// Inverse of [`Mlp::parameters`].
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.parameters().len();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().unwrap());
        for l in &mut self.layers {
            fill(l.w.as_mut_slice());
            fill(&mut l.b);
        }
        if let Some(w) = self.head.learned_weights_mut() {
            fill(w.as_mut_slice());
        }
        if self.alpha_is_trained() {
            let mut a = [0.0];
            fill(&mut a);
            self.head.set_alpha(a[0]);
        }
        fill(self.head.bias_mut());
        Ok(())
    }

    /// Gradient buffers flattened in the same order as [`Mlp::parameters`].
    pub fn gradient_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.grads.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        if let Some(w) = &self.grads.head_weights {
            out.extend_from_slice(w.as_slice());
        }
        if self.alpha_is_trained() {
            out.push(self.grads.head_alpha);
        }
        out.extend_from_slice(&self.grads.head_bias);
        out
    }

    pub fn parameter_checksum(&self) -> u64 {
        checksum(&self.parameters())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = checkpoint::encode(self);
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        checkpoint::decode(&bytes, path)
    }
}

/// Checkpoint layout, all integers `u32` little-endian, floats `f64`
/// little-endian:
///
/// ```text
/// "FXHC" version=1 head_mode loss alpha_trainable input_dim n_layers
/// widths[n_layers] n_classes projection_mode
/// per layer: W (row-major, out x in), b
/// head weights (N x C, learned and orthonormal modes only), alpha, bias[C]
/// ```
pub mod checkpoint {
    use super::*;
    use crate::head::CosineReduction;

    pub const MAGIC: &[u8; 4] = b"FXHC";
    pub const VERSION: u32 = 1;

    fn mode_code(m: HeadMode) -> u32 {
        match m {
            HeadMode::Learned => 0,
            HeadMode::Orthonormal => 1,
            HeadMode::Hadamard => 2,
        }
    }

    fn loss_code(l: LossKind) -> u32 {
        match l {
            LossKind::CrossEntropy => 0,
            LossKind::Cosine(CosineReduction::Sum) => 1,
            LossKind::Cosine(CosineReduction::Mean) => 2,
        }
    }

    pub fn encode(mlp: &Mlp) -> Vec<u8> {
        let mut out = Vec::new();
        let word = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(MAGIC);
        word(&mut out, VERSION);
        word(&mut out, mode_code(mlp.head.mode()));
        word(&mut out, loss_code(mlp.loss));
        word(&mut out, u32::from(mlp.head.alpha_trainable()));
        word(&mut out, mlp.input_dim() as u32);
        word(&mut out, mlp.layers.len() as u32);
        for w in mlp.widths() {
            word(&mut out, w as u32);
        }
        word(&mut out, mlp.head.n_classes() as u32);
        let pmode = mlp.head.projection().map_or(0, |p| p.mode() as u32);
        word(&mut out, pmode);
        let mut float = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for l in &mlp.layers {
            l.w.as_slice().iter().for_each(|&v| float(v));
            l.b.iter().for_each(|&v| float(v));
        }
        if let Some(w) = mlp.head.weights() {
            w.as_slice().iter().for_each(|&v| float(v));
        }
        float(mlp.head.alpha());
        mlp.head.bias().iter().for_each(|&v| float(v));
        out
    }

    struct Cursor<'a> {
        bytes: &'a [u8],
        pos: usize,
        path: &'a Path,
    }

    impl Cursor<'_> {
        fn take(&mut self, n: usize) -> Result<&[u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(Error::Truncated {
                    path: self.path.into(),
                    offset: self.bytes.len() as u64,
                    needed: (self.pos + n - self.bytes.len()) as u64,
                });
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }

        fn word(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        fn float(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }

        fn floats(&mut self, dst: &mut [f64]) -> Result<()> {
            for d in dst {
                *d = self.float()?;
            }
            Ok(())
        }

        fn format_err(&self, offset: usize, reason: impl Into<String>) -> Error {
            Error::Format {
                path: self.path.into(),
                offset: offset as u64,
                reason: reason.into(),
            }
        }
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Mlp> {
        let mut c = Cursor {
            bytes,
            pos: 0,
            path,
        };
        let magic = c.take(4)?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                path: path.into(),
                found: u32::from_be_bytes(magic.try_into().unwrap()),
                expected: u32::from_be_bytes(*MAGIC),
            });
        }
        let version = c.word()?;
        if version != VERSION {
            return Err(c.format_err(4, format!("unsupported checkpoint version {version}")));
        }
        let mode = match c.word()? {
            0 => HeadMode::Learned,
            1 => HeadMode::Orthonormal,
            2 => HeadMode::Hadamard,
            m => return Err(c.format_err(8, format!("unknown head mode {m}"))),
        };
        let loss = match c.word()? {
            0 => LossKind::CrossEntropy,
            1 => LossKind::Cosine(CosineReduction::Sum),
            2 => LossKind::Cosine(CosineReduction::Mean),
            l => return Err(c.format_err(12, format!("unknown loss {l}"))),
        };
        let alpha_trainable = c.word()? != 0;
        let input_dim = c.word()? as usize;
        let n_layers = c.word()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(c.format_err(24, format!("implausible layer count {n_layers}")));
        }
        let widths = (0..n_layers)
            .map(|_| c.word().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_classes = c.word()? as usize;
        let pmode_at = c.pos;
        let pmode = c.word()?;
        let n_features = *widths.last().unwrap();

        let mut layers = Vec::with_capacity(n_layers);
        let mut fan_in = input_dim;
        for &w in &widths {
            let mut layer = DenseLayer::zeros(fan_in, w);
            c.floats(layer.w.as_mut_slice())?;
            c.floats(&mut layer.b)?;
            layers.push(layer);
            fan_in = w;
        }
        let mut head = match mode {
            HeadMode::Learned | HeadMode::Orthonormal => {
                let mut q = Matrix::zeros(n_features, n_classes);
                c.floats(q.as_mut_slice())?;
                if mode == HeadMode::Learned {
                    Head::learned(q)
                } else {
                    let pm = match pmode {
                        0 => ProjectionMode::StrictOrthonormal,
                        1 => ProjectionMode::UnitRows,
                        m => {
                            return Err(
                                c.format_err(pmode_at, format!("unknown projection mode {m}"))
                            )
                        }
                    };
                    Head::orthonormal(FixedProjection::from_matrix(q, pm)?)
                }
            }
            HeadMode::Hadamard => Head::hadamard(n_features, n_classes)?,
        };
        let alpha = c.float()?;
        head = if alpha_trainable || mode == HeadMode::Learned {
            head.set_alpha(alpha);
            head
        } else {
            head.with_frozen_alpha(alpha)
        };
        let mut bias = vec![0.0; n_classes];
        c.floats(&mut bias)?;
        let head = head.with_bias(bias)?;
        if c.pos != bytes.len() {
            return Err(c.format_err(c.pos, "trailing bytes after parameters"));
        }
        let mut mlp = Mlp::new(input_dim, &widths, head, loss)?;
        mlp.layers = layers;
        Ok(mlp)
    }
}
