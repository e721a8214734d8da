//! Datasets, the IDX container used by MNIST-style files, and sampling.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Affine map `x ↦ (x − offset) · scale` applied uniformly to every feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

impl Normalization {
    /// Raw bytes to `[0, 1]`.
    pub const PIXEL: Normalization = Normalization {
        offset: 0.0,
        scale: 1.0 / 255.0,
    };
}

/// Labeled samples stored row-major, labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        ensure_dim("dataset features", labels.len() * dim, features.len())?;
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            name: name.into(),
            dim,
            features,
            labels,
            classes,
            normalization: None,
        })
    }

    /// Overrides the class count (at least one more than the largest label).
    pub fn with_classes(mut self, classes: usize) -> Result<Self> {
        if classes < self.classes {
            return Err(Error::invalid(format!(
                "class count {classes} below largest label {}",
                self.classes - 1
            )));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            idx[l].push(i);
        }
        idx
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            dim: self.dim,
            features,
            labels,
            classes: self.classes,
            normalization: self.normalization,
        }
    }

    /// Applies `norm` once. Re-applying the recorded normalization is a
    /// no-op; applying a different one to normalized data is an error.
    pub fn normalize(&mut self, norm: Normalization) -> Result<()> {
        match self.normalization {
            Some(done) if done == norm => Ok(()),
            Some(_) => Err(Error::invalid("dataset already carries a different normalization")),
            None => {
                for v in &mut self.features {
                    *v = (*v - norm.offset) * norm.scale;
                }
                self.normalization = Some(norm);
                Ok(())
            }
        }
    }
}

/// Binary-labeled samples (labels ±1) with per-sample weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    weights: Vec<f64>,
}

impl BinaryDataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        Self::weighted(dim, features, labels, vec![1.0; n])
    }

    pub fn weighted(dim: usize, features: Vec<f64>, labels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        ensure_dim("binary features", labels.len() * dim, features.len())?;
        ensure_dim("binary weights", labels.len(), weights.len())?;
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("binary labels must be ±1, found {bad}")));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("sample weights must be finite and nonnegative"));
        }
        Ok(Self {
            dim,
            features,
            labels,
            weights,
        })
    }

    /// Builds from rows; convenient in tests and for small problems.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            ensure_dim("binary row", dim, r.len())?;
            features.extend_from_slice(r);
        }
        Self::new(dim, features, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        ensure_dim("binary weights", self.len(), weights.len())?;
        self.weights = weights;
        Ok(())
    }

    /// Same samples with every label negated.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|y| *y = -*y);
        out
    }

    /// Applies a feature map to every row.
    pub fn map_features(&self, dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut features = Vec::with_capacity(self.len() * dim);
        for i in 0..self.len() {
            let r = f(self.row(i));
            ensure_dim("mapped features", dim, r.len())?;
            features.extend(r);
        }
        Self::weighted(dim, features, self.labels.clone(), self.weights.clone())
    }
}

/// Decoded IDX image tensor (`count × rows × cols` unsigned bytes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn idx_header(bytes: &[u8], magic: u32, ndims: usize) -> Result<(Vec<usize>, &[u8])> {
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::format(
            "idx",
            format!("header needs {header} bytes, got {}", bytes.len()),
        ));
    }
    let found = BigEndian::read_u32(&bytes[..4]);
    if found != magic {
        return Err(Error::format(
            "idx",
            format!("bad magic {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|k| BigEndian::read_u32(&bytes[4 + 4 * k..8 + 4 * k]) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("idx", "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::format(
            "idx",
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            "idx",
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    Ok((dims, payload))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let (dims, payload) = idx_header(bytes, IDX_IMAGES_MAGIC, 3)?;
    Ok(IdxImages {
        count: dims[0],
        rows: dims[1],
        cols: dims[2],
        pixels: payload.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, payload) = idx_header(bytes, IDX_LABELS_MAGIC, 1)?;
    Ok(payload.to_vec())
}

pub fn write_idx_images<W: Write>(mut w: W, images: &IdxImages) -> Result<()> {
    ensure_dim(
        "idx pixels",
        images.count * images.rows * images.cols,
        images.pixels.len(),
    )?;
    w.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    for d in [images.count, images.rows, images.cols] {
        w.write_u32::<BigEndian>(d as u32)?;
    }
    w.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(labels.len() as u32)?;
    w.write_all(labels)?;
    Ok(())
}

/// Pairs decoded images with labels; pixels are scaled to `[0, 1]`.
pub fn dataset_from_idx(name: &str, images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::format(
            "idx",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let dim = images.rows * images.cols;
    if dim == 0 {
        return Err(Error::format("idx", "zero-sized images"));
    }
    let features = images.pixels.iter().map(|&p| f64::from(p)).collect();
    let labels = labels.iter().map(|&l| usize::from(l)).collect();
    let mut ds = Dataset::new(name, dim, features, labels)?;
    ds.normalize(Normalization::PIXEL)?;
    Ok(ds)
}

pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(image_path)?)?;
    let labels = parse_idx_labels(&fs::read(label_path)?)?;
    let name = image_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset_from_idx(&name, &images, &labels)
}

/// Standard file names inside an MNIST-layout directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let mut test = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    train.set_name("mnist-train");
    test.set_name("mnist-test");
    let classes = train.classes().max(test.classes());
    Ok((train.with_classes(classes)?, test.with_classes(classes)?))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")))
    }
}

/// Indices of a stratified bootstrap: each present class contributes
/// `max(1, round(fraction · n_c))` draws with replacement from its members.
pub fn bootstrap_indices(ds: &Dataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("bootstrap source"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, members) in ds.class_indices().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::invalid(format!("class {c} absent from bootstrap source")));
        }
        let draws = ((fraction * members.len() as f64).round() as usize).max(1);
        out.extend((0..draws).map(|_| members[rng.random_range(0..members.len())]));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn bootstrap_sample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    Ok(ds.select(&bootstrap_indices(ds, fraction, seed)?))
}

/// `total` samples without replacement, allocated to classes in
/// proportion to their counts (largest remainder), in source order.
pub fn stratified_subset(ds: &Dataset, total: usize, seed: u64) -> Result<Dataset> {
    if total == 0 || total > ds.len() {
        return Err(Error::invalid(format!("subset size {total} outside 1..={}", ds.len())));
    }
    let groups = ds.class_indices();
    let n = ds.len() as f64;
    let quotas: Vec<f64> = groups.iter().map(|g| total as f64 * g.len() as f64 / n).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - take.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if take[c] < groups[c].len() {
            take[c] += 1;
            left -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(total);
    for (g, &k) in groups.iter().zip(&take) {
        let mut g = g.clone();
        g.shuffle(&mut rng);
        chosen.extend_from_slice(&g[..k]);
    }
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}

/// Random split; the two parts partition the dataset.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * ds.len() as f64).round() as usize;
    let (test, train) = idx.split_at(n_test);
    Ok((ds.select(train), ds.select(test)))
}

/// Restricts to classes `a` and `b`; the smaller class index maps to −1.
pub fn subset_by_classes(ds: &Dataset, a: usize, b: usize) -> Result<BinaryDataset> {
    if a == b {
        return Err(Error::invalid(format!("class pair ({a}, {b}) must be distinct")));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..ds.len() {
        let l = ds.labels[i];
        if l == lo || l == hi {
            features.extend_from_slice(ds.row(i));
            labels.push(if l == lo { -1.0 } else { 1.0 });
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("class pair subset"));
    }
    BinaryDataset::new(ds.dim, features, labels)
}

/// Isotropic Gaussian blobs, `per_class` samples around each center,
/// interleaved by class.
pub fn gaussian_blobs(centers: &[Vec<f64>], std: f64, per_class: usize, seed: u64) -> Result<Dataset> {
    let dim = centers.first().map_or(0, Vec::len);
    if centers.is_empty() || per_class == 0 {
        return Err(Error::EmptyInput("blob centers"));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(centers.len() * per_class * dim);
    let mut labels = Vec::with_capacity(centers.len() * per_class);
    for _ in 0..per_class {
        for (c, center) in centers.iter().enumerate() {
            ensure_dim("blob center", dim, center.len())?;
            features.extend(center.iter().map(|m| m + normal.sample(&mut rng)));
            labels.push(c);
        }
    }
    Dataset::new("blobs", dim, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        write_idx_images(
            &mut v,
            &IdxImages {
                count: count as usize,
                rows: rows as usize,
                cols: cols as usize,
                pixels: pixels.to_vec(),
            },
        )
        .unwrap();
        v
    }

    #[test]
    fn single_pixel_fixture() {
        let imgs = parse_idx_images(&image_bytes(1, 1, 1, &[255])).unwrap();
        let mut lab = Vec::new();
        write_idx_labels(&mut lab, &[7]).unwrap();
        let ds = dataset_from_idx("t", &imgs, &parse_idx_labels(&lab).unwrap()).unwrap();
        assert_eq!(ds.features(), &[1.0]);
        assert_eq!(ds.labels(), &[7]);
    }

    #[test]
    fn header_errors() {
        let good = image_bytes(2, 1, 2, &[1, 2, 3, 4]);
        let mut bad_magic = good.clone();
        bad_magic[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad_magic), Err(Error::Format { .. })));
        assert!(parse_idx_images(&good[..good.len() - 1]).is_err());
        assert!(parse_idx_images(&good[..10]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(parse_idx_images(&long).is_err());
        let mut huge = good;
        huge[4..8].copy_from_slice(&u32::MAX.to_be_bytes());
        huge[8..12].copy_from_slice(&u32::MAX.to_be_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(parse_idx_images(&huge).is_err());
        let imgs = parse_idx_images(&image_bytes(2, 1, 1, &[0, 1])).unwrap();
        assert!(dataset_from_idx("t", &imgs, &[1]).is_err());
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut ds = Dataset::new("d", 2, vec![0.0, 255.0, 51.0, 102.0], vec![0, 1]).unwrap();
        ds.normalize(Normalization::PIXEL).unwrap();
        let once = ds.clone();
        ds.normalize(Normalization::PIXEL).unwrap();
        assert_eq!(ds, once);
        assert!(ds
            .normalize(Normalization {
                offset: 0.5,
                scale: 2.0
            })
            .is_err());
    }

    #[test]
    fn class_pair_restriction() {
        let ds = Dataset::new("d", 1, vec![0.0, 1.0, 2.0, 3.0], vec![5, 3, 1, 3]).unwrap();
        let b = subset_by_classes(&ds, 5, 3).unwrap();
        assert_eq!(b.labels(), &[1.0, -1.0, -1.0]);
        assert_eq!(b.features(), &[0.0, 1.0, 3.0]);
        assert!(subset_by_classes(&ds, 3, 3).is_err());
        assert!(subset_by_classes(&ds, 0, 2).is_err());
    }
}
