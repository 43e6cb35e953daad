//! Training runs and the paired comparisons built on them: fixed vs learned
//! head, the frozen-scale sweep, and the per-epoch scale trajectory.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::data::{load_idx, make_blobs, Dataset};
use crate::error::{Error, Result};
use crate::head::{Head, HeadMode, LossKind};
use crate::net::{Mlp, SgdConfig};
use crate::numerics::{argmax, derive_seed, splitmix64, Matrix, Rng};
use crate::projection::{random_orthonormal, unit_rows};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaPolicy {
    Trainable,
    Frozen(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlobsConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub noise_sigma: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            dim: 32,
            per_class: 500,
            noise_sigma: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Blobs(BlobsConfig),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Separate validation pair; without it the last 20% of the
        /// training files (in file order) are held out.
        val_images: Option<PathBuf>,
        val_labels: Option<PathBuf>,
        limit: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub head_mode: HeadMode,
    pub alpha_policy: AlphaPolicy,
    pub loss: LossKind,
    /// Output widths of the dense layers; the last is the representation size.
    pub widths: Vec<usize>,
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub data: DataSource,
    pub seed: u64,
    /// Gradient workers per batch.
    pub threads: usize,
    /// Where to write the final checkpoint, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// The reference blobs setup: 10 classes in 32 dimensions with
    /// `σ = 0.3`, a 64-64 MLP and 30 epochs of SGD at rate 0.05, dropped
    /// tenfold for the last 10 epochs.
    fn default() -> Self {
        Self {
            head_mode: HeadMode::Orthonormal,
            alpha_policy: AlphaPolicy::Trainable,
            loss: LossKind::CrossEntropy,
            widths: vec![64, 64],
            sgd: SgdConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 2e-4,
                lr_schedule: vec![(20, 0.1)],
            },
            epochs: 30,
            batch_size: 32,
            data: DataSource::Blobs(BlobsConfig::default()),
            seed: 0,
            threads: 1,
            checkpoint: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "widths must be non-empty and positive, got {:?}",
                self.widths
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if let AlphaPolicy::Frozen(a) = self.alpha_policy {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "frozen alpha must be positive, got {a}"
                )));
            }
        }
        if matches!(self.loss, LossKind::Cosine(_)) && !self.head_mode.is_fixed() {
            return Err(Error::InvalidArgument(
                "the cosine loss needs a fixed head (orthonormal or hadamard)".into(),
            ));
        }
        Ok(())
    }

    /// Same config with a different head.
    pub fn with_head(&self, mode: HeadMode) -> Self {
        Self {
            head_mode: mode,
            ..self.clone()
        }
    }

    pub fn with_alpha(&self, policy: AlphaPolicy) -> Self {
        Self {
            alpha_policy: policy,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Loads or generates the train/validation split.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::Blobs(b) => make_blobs(
                b.n_classes,
                b.dim,
                b.per_class,
                b.noise_sigma,
                derive_seed(self.seed, 0xDA7A),
            ),
            DataSource::Idx {
                images,
                labels,
                val_images,
                val_labels,
                limit,
            } => {
                let train = load_idx(images, labels, *limit)?;
                match (val_images, val_labels) {
                    (Some(vi), Some(vl)) => {
                        let mut val = load_idx(vi, vl, None)?;
                        let k = train.n_classes.max(val.n_classes);
                        val.n_classes = k;
                        Ok((
                            Dataset {
                                n_classes: k,
                                ..train
                            },
                            val,
                        ))
                    }
                    (None, None) => {
                        let cut = train.len() * 4 / 5;
                        Ok((train.slice(0..cut), train.slice(cut..train.len())))
                    }
                    _ => Err(Error::InvalidArgument(
                        "validation images and labels must be given together".into(),
                    )),
                }
            }
        }
    }

    /// Builds and initializes the network for `input_dim` features and
    /// `n_classes` classes.
    pub fn build_model(&self, input_dim: usize, n_classes: usize) -> Result<Mlp> {
        let n = *self.widths.last().unwrap();
        let head_seed = derive_seed(self.seed, 0x0EAD);
        let head = match self.head_mode {
            HeadMode::Learned => Head::learned(Matrix::zeros(n, n_classes)),
            HeadMode::Orthonormal => {
                let p = if n_classes <= n {
                    random_orthonormal(n, n_classes, head_seed)?
                } else {
                    unit_rows(n, n_classes, head_seed)?
                };
                Head::orthonormal(p)
            }
            HeadMode::Hadamard => Head::hadamard(n, n_classes)?,
        };
        let head = match self.alpha_policy {
            AlphaPolicy::Frozen(a) if self.head_mode.is_fixed() => head.with_frozen_alpha(a),
            _ => head,
        };
        let mut mlp = Mlp::new(input_dim, &self.widths, head, self.loss)?;
        mlp.init_params(derive_seed(self.seed, 0x1417));
        Ok(mlp)
    }
}

/// One line of training history.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub train_loss: f64,
    /// Fraction of training samples misclassified while the epoch ran.
    pub train_error: f64,
    /// Fraction of validation samples misclassified after the epoch.
    pub val_error: f64,
    /// Scale at the end of the epoch; `None` for the learned head.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub metrics: Vec<MetricsRow>,
    pub initial_head_checksum: u64,
    pub final_head_checksum: u64,
    /// Fingerprint of every epoch's sample order.
    pub shuffle_checksum: u64,
    pub model: Mlp,
}

impl RunOutcome {
    pub fn final_row(&self) -> &MetricsRow {
        self.metrics.last().expect("a run has at least one epoch")
    }
}

/// Seed of the sample permutation for `epoch`.
pub fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, 0x5A0F_0000 ^ epoch as u64)
}

/// Fraction of `ds` misclassified by `mlp`.
pub fn error_rate(mlp: &Mlp, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for i in 0..ds.len() {
        let (z, t) = ds.sample(i);
        let (_, logits) = mlp.predict(z)?;
        if argmax(&logits) != t {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / ds.len() as f64)
}

/// Trains per `config` on freshly loaded data.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (train, val) = config.load_data()?;
    run_on(config, &train, &val)
}

/// Trains per `config` on the given split.
pub fn run_on(config: &ExperimentConfig, train: &Dataset, val: &Dataset) -> Result<RunOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let n_classes = train.n_classes.max(val.n_classes);
    let mut mlp = config.build_model(train.dim(), n_classes)?;
    let initial_head_checksum = mlp.head().weights_checksum();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_checksum = 0xCBF2_9CE4_8422_2325u64;
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        Rng::new(epoch_shuffle_seed(config.seed, epoch)).shuffle(&mut order);
        for &i in &order {
            shuffle_checksum = splitmix64(shuffle_checksum ^ i as u64);
        }
        let sgd = config.sgd.at_epoch(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<(&[f64], usize)> = batch.iter().map(|&i| train.sample(i)).collect();
            mlp.zero_grad();
            let (l, c) = mlp.accumulate_batch(&samples, config.threads)?;
            if !l.is_finite() || !mlp.grads().is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    reason: format!("non-finite loss or gradient (batch loss {l})"),
                });
            }
            loss_sum += l;
            correct += c;
            mlp.sgd_step(&sgd, samples.len());
            if mlp.alpha_is_trained() && !(mlp.head().alpha() > 0.0) {
                return Err(Error::NonPositiveAlpha {
                    epoch: epoch + 1,
                    alpha: mlp.head().alpha(),
                });
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                reason: "mean training loss is not finite".into(),
            });
        }
        metrics.push(MetricsRow {
            epoch: epoch + 1,
            train_loss,
            train_error: 1.0 - correct as f64 / train.len() as f64,
            val_error: error_rate(&mlp, val)?,
            alpha: mlp.head().mode().is_fixed().then(|| mlp.head().alpha()),
        });
    }

    if let Some(path) = &config.checkpoint {
        mlp.save_checkpoint(path)?;
    }
    Ok(RunOutcome {
        metrics,
        initial_head_checksum,
        final_head_checksum: mlp.head().weights_checksum(),
        shuffle_checksum,
        model: mlp,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochDelta {
    pub epoch: usize,
    /// fixed − learned.
    pub train_error: f64,
    pub val_error: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub learned: RunOutcome,
    pub fixed: RunOutcome,
    pub deltas: Vec<EpochDelta>,
}

impl Comparison {
    pub fn final_val_accuracy(&self) -> (f64, f64) {
        (
            1.0 - self.learned.final_row().val_error,
            1.0 - self.fixed.final_row().val_error,
        )
    }
}

/// Runs `base` twice, once with the learned head and once with a fixed
/// head (`base.head_mode` if it is fixed, orthonormal otherwise), on the
/// same data, hidden-layer initialization and sample order.
pub fn compare_fixed_vs_learned(base: &ExperimentConfig) -> Result<Comparison> {
    base.validate()?;
    let (train, val) = base.load_data()?;
    compare_on(base, &train, &val)
}

pub fn compare_on(base: &ExperimentConfig, train: &Dataset, val: &Dataset) -> Result<Comparison> {
    let fixed_mode = if base.head_mode.is_fixed() {
        base.head_mode
    } else {
        HeadMode::Orthonormal
    };
    let learned_cfg = ExperimentConfig {
        head_mode: HeadMode::Learned,
        loss: LossKind::CrossEntropy,
        ..base.clone()
    };
    let fixed_cfg = base.with_head(fixed_mode);
    let learned = run_on(&learned_cfg, train, val)?;
    let fixed = run_on(&fixed_cfg, train, val)?;
    let deltas = learned
        .metrics
        .iter()
        .zip(&fixed.metrics)
        .map(|(l, f)| EpochDelta {
            epoch: l.epoch,
            train_error: f.train_error - l.train_error,
            val_error: f.val_error - l.val_error,
        })
        .collect();
    Ok(Comparison {
        learned,
        fixed,
        deltas,
    })
}

#[derive(Clone, Debug)]
pub struct AlphaSweep {
    pub frozen: Vec<(f64, RunOutcome)>,
    pub trainable: RunOutcome,
}

impl AlphaSweep {
    /// `(label, final train error, final val error, final alpha)` per arm,
    /// frozen arms first.
    pub fn table(&self) -> Vec<(String, f64, f64, f64)> {
        let mut rows: Vec<_> = self
            .frozen
            .iter()
            .map(|(a, r)| {
                let f = r.final_row();
                (format!("{a}"), f.train_error, f.val_error, *a)
            })
            .collect();
        let f = self.trainable.final_row();
        rows.push((
            "train".to_string(),
            f.train_error,
            f.val_error,
            f.alpha.unwrap_or(f64::NAN),
        ));
        rows
    }
}

/// One run per frozen scale in `values`, plus one with a trainable scale.
pub fn sweep_alpha(base: &ExperimentConfig, values: &[f64]) -> Result<AlphaSweep> {
    base.validate()?;
    let (train, val) = base.load_data()?;
    sweep_alpha_on(base, values, &train, &val)
}

pub fn sweep_alpha_on(
    base: &ExperimentConfig,
    values: &[f64],
    train: &Dataset,
    val: &Dataset,
) -> Result<AlphaSweep> {
    if !base.head_mode.is_fixed() {
        return Err(Error::InvalidArgument(
            "the alpha sweep needs a fixed head (orthonormal or hadamard)".into(),
        ));
    }
    let frozen = values
        .iter()
        .map(|&a| run_on(&base.with_alpha(AlphaPolicy::Frozen(a)), train, val).map(|r| (a, r)))
        .collect::<Result<Vec<_>>>()?;
    let trainable = run_on(&base.with_alpha(AlphaPolicy::Trainable), train, val)?;
    Ok(AlphaSweep { frozen, trainable })
}

/// Increase of `alpha` over the first, middle and last third of the run,
/// starting from its value before the first epoch.
pub fn alpha_increments_by_third(initial: f64, rows: &[MetricsRow]) -> Option<[f64; 3]> {
    let alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect::<Option<_>>()?;
    if alphas.len() < 3 {
        return None;
    }
    let mut series = vec![initial];
    series.extend(alphas);
    let n = series.len() - 1;
    let cut = |k: usize| series[k * n / 3];
    Some([cut(1) - cut(0), cut(2) - cut(1), cut(3) - cut(2)])
}

/// Formats `v` with 9 significant digits, in the shortest form that
/// round-trips those digits.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("float formatting");
    format!("{rounded}")
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_error,val_error,alpha";

pub fn metrics_csv_string(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            format_sig9(r.train_loss),
            format_sig9(r.train_error),
            format_sig9(r.val_error),
            r.alpha.map(format_sig9).unwrap_or_default()
        );
    }
    out
}

/// Writes the metrics history; the alpha column is empty for the learned
/// head.
pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(metrics_csv_string(rows).as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::Format {
            path: path.into(),
            offset,
            reason,
        };
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(bad(format!("unexpected header {line:?}")));
            }
        } else {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            rows.push(MetricsRow {
                epoch: fields[0].parse().map_err(|e| bad(format!("epoch: {e}")))?,
                train_loss: num(fields[1])?,
                train_error: num(fields[2])?,
                val_error: num(fields[3])?,
                alpha: if fields[4].is_empty() {
                    None
                } else {
                    Some(num(fields[4])?)
                },
            });
        }
        offset += line.len() as u64 + 1;
    }
    Ok(rows)
}
