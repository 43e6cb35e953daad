//! Datasets: a seeded Gaussian-blobs generator and an IDX (MNIST container)
//! reader/writer.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::projection::unit_columns;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Rows `range` as a new dataset with the same class count.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let dim = self.dim();
        let data = self.features.as_slice()[range.start * dim..range.end * dim].to_vec();
        Dataset {
            features: Matrix::from_vec(range.len(), dim, data).expect("slice shape"),
            labels: self.labels[range].to_vec(),
            n_classes: self.n_classes,
        }
    }

    /// Affine map of every feature from `[lo, hi]` onto `[0, 1]`, clamping
    /// values outside the range. Used to store real-valued data as IDX.
    pub fn to_unit_range(&self, lo: f64, hi: f64) -> Dataset {
        let mut out = self.clone();
        for v in out.features.as_mut_slice() {
            *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
        out
    }

    /// Re-quantizes features in `[0, 1]` to the 256 levels IDX can hold.
    pub fn quantized(&self) -> Dataset {
        let mut out = self.clone();
        for v in out.features.as_mut_slice() {
            *v = f64::from(to_pixel(*v)) / 255.0;
        }
        out
    }
}

fn to_pixel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Gaussian blobs around `n_classes` unit-norm means in `dim` dimensions.
///
/// Every class gets exactly `per_class` samples; the pooled samples are
/// shuffled and the first 80% become the training split.
pub fn make_blobs(
    n_classes: usize,
    dim: usize,
    per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dim < 2 || n_classes < 2 || per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "blobs need dim >= 2, n_classes >= 2, per_class >= 1 (got {dim}, {n_classes}, {per_class})"
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let means = unit_columns(dim, n_classes, derive_seed(seed, 0xB10B))?;
    let mut rng = Rng::new(derive_seed(seed, 0xD47A));
    let total = n_classes * per_class;
    let mut rows = Vec::with_capacity(total);
    for class in 0..n_classes {
        let mean = means.q().column(class);
        for _ in 0..per_class {
            let row: Vec<f64> = mean
                .iter()
                .map(|m| m + noise_sigma * rng.normal())
                .collect();
            rows.push((row, class));
        }
    }
    rng.shuffle(&mut rows);
    let n_train = total * 4 / 5;
    let build = |part: &[(Vec<f64>, usize)]| -> Result<Dataset> {
        let mut data = Vec::with_capacity(part.len() * dim);
        let mut labels = Vec::with_capacity(part.len());
        for (r, l) in part {
            data.extend_from_slice(r);
            labels.push(*l);
        }
        Dataset::new(Matrix::from_vec(part.len(), dim, data)?, labels, n_classes)
    };
    Ok((build(&rows[..n_train])?, build(&rows[n_train..])?))
}

/// Parsed IDX header.
struct IdxHeader {
    dims: Vec<usize>,
    data_offset: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn parse_header(bytes: &[u8], path: &Path, expected_magic: u32) -> Result<IdxHeader> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            offset: bytes.len() as u64,
            needed: (4 - bytes.len()) as u64,
        });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if magic != expected_magic {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: expected_magic,
        });
    }
    let ndims = (magic & 0xFF) as usize;
    let data_offset = 4 + 4 * ndims;
    if bytes.len() < data_offset {
        return Err(Error::Truncated {
            path: path.into(),
            offset: bytes.len() as u64,
            needed: (data_offset - bytes.len()) as u64,
        });
    }
    let dims = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    Ok(IdxHeader { dims, data_offset })
}

fn check_body(bytes: &[u8], path: &Path, header: &IdxHeader, count: usize) -> Result<()> {
    let want = header.data_offset + count;
    if bytes.len() < want {
        return Err(Error::Truncated {
            path: path.into(),
            offset: bytes.len() as u64,
            needed: (want - bytes.len()) as u64,
        });
    }
    if bytes.len() > want {
        return Err(Error::Format {
            path: path.into(),
            offset: want as u64,
            reason: format!("{} trailing bytes", bytes.len() - want),
        });
    }
    Ok(())
}

/// Loads an IDX image/label pair. Pixels are divided by 255 and images are
/// flattened row-major; `n_classes` is one more than the largest label.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(images_path)?;
    let lab = read_file(labels_path)?;
    let ih = parse_header(&img, images_path, IDX_IMAGES_MAGIC)?;
    let lh = parse_header(&lab, labels_path, IDX_LABELS_MAGIC)?;

    let n_images = ih.dims[0];
    let dim: usize = ih.dims[1..].iter().product();
    check_body(&img, images_path, &ih, n_images * dim)?;
    let n_labels = lh.dims[0];
    check_body(&lab, labels_path, &lh, n_labels)?;
    if n_images != n_labels {
        return Err(Error::LengthMismatch {
            images: images_path.into(),
            image_count: n_images,
            labels: labels_path.into(),
            label_count: n_labels,
        });
    }

    let n = limit.map_or(n_images, |l| l.min(n_images));
    let pixels = &img[ih.data_offset..ih.data_offset + n * dim];
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = lab[lh.data_offset..lh.data_offset + n]
        .iter()
        .map(|&l| usize::from(l))
        .collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::from_vec(n, dim, features)?, labels, n_classes)
}

/// Writes `ds` as an IDX pair. Features must lie in `[0, 1]`; they are
/// quantized to `u8` and stored as `n x 1 x dim` images.
pub fn write_idx(
    ds: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    if ds.n_classes > 256 {
        return Err(Error::InvalidArgument(format!(
            "IDX labels are single bytes; {} classes do not fit",
            ds.n_classes
        )));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * ds.dim());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), 1, ds.dim()] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(ds.features.as_slice().iter().map(|&v| to_pixel(v)));

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));

    for (path, bytes) in [(images_path, img), (labels_path, lab)] {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Nearest-class-mean classifier fitted on `train`, scored on `eval`.
/// Returns the accuracy; used as a difficulty yardstick for blobs.
pub fn nearest_mean_accuracy(train: &Dataset, eval: &Dataset) -> f64 {
    let dim = train.dim();
    let mut sums = vec![vec![0.0; dim]; train.n_classes];
    let mut counts = vec![0usize; train.n_classes];
    for i in 0..train.len() {
        let (x, t) = train.sample(i);
        counts[t] += 1;
        for (s, v) in sums[t].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    let mut correct = 0;
    for i in 0..eval.len() {
        let (x, t) = eval.sample(i);
        let best = (0..train.n_classes)
            .map(|k| {
                let d: f64 = sums[k].iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
                (k, d)
            })
            .fold(
                (0, f64::INFINITY),
                |acc, kd| if kd.1 < acc.1 { kd } else { acc },
            )
            .0;
        if best == t {
            correct += 1;
        }
    }
    correct as f64 / eval.len().max(1) as f64
}
