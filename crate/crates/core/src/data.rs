//! Dataset loading, splitting and streaming.
//!
//! Two on-disk feature formats are supported:
//!
//! * IDX (the MNIST distribution format): big-endian header, `u8` pixels.
//! * HCOHFEAT: `b"HCOHFEAT"`, version byte, `n` and `d` as `u32` LE, then
//!   `n * d` row-major `f32` LE. Its label file is `n` bare `u32` LE values.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io_util::{atomic_write, Reader};
use crate::learner::TrainBatch;
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const DENSE_MAGIC: &[u8; 8] = b"HCOHFEAT";
pub const DENSE_VERSION: u8 = 1;

/// Standard MNIST file names, training part then test part.
pub const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    dim: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dim: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 && !labels.is_empty() {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::dim("dataset features", dim * labels.len(), features.len()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows_at(&self, indices: &[usize]) -> Vec<&[f32]> {
        indices.iter().map(|&i| self.row(i)).collect()
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<u32> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Dataset {
            name: self.name.clone(),
            dim: self.dim,
            features,
            labels: self.labels_at(indices),
        }
    }

    /// Member count per label, in label order.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Concatenates rows of `other` after `self`.
    pub fn append(&mut self, other: Dataset) -> Result<()> {
        if !other.is_empty() && !self.is_empty() && other.dim != self.dim {
            return Err(Error::dim("appended dataset", self.dim, other.dim));
        }
        if self.is_empty() {
            self.dim = other.dim;
        }
        self.features.extend(other.features);
        self.labels.extend(other.labels);
        Ok(())
    }

    pub fn normalize(&mut self, mode: Normalization) {
        let d = self.dim;
        match mode {
            Normalization::None => {}
            Normalization::Unit255 => self.features.iter_mut().for_each(|v| *v /= 255.0),
            Normalization::L2 => {
                for row in self.features.chunks_exact_mut(d.max(1)) {
                    let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
                    }
                }
            }
            Normalization::ZScore => {
                let n = self.len();
                if n == 0 {
                    return;
                }
                let mut mean = vec![0.0f64; d];
                for row in self.features.chunks_exact(d) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v as f64;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0f64; d];
                for row in self.features.chunks_exact(d) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v as f64 - m).powi(2);
                    }
                }
                let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
                for row in self.features.chunks_exact_mut(d) {
                    for ((v, &m), &s) in row.iter_mut().zip(&mean).zip(&std) {
                        // Constant columns become 0.
                        *v = if s > 0.0 { ((*v as f64 - m) / s) as f32 } else { 0.0 };
                    }
                }
            }
        }
    }
}

/// Feature scaling applied after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Each row scaled to unit Euclidean norm.
    #[default]
    L2,
    /// Divide by 255 into `[0, 1]`.
    Unit255,
    /// Per-feature zero mean, unit variance over the loaded set.
    ZScore,
    None,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Normalization::L2),
            "unit255" => Ok(Normalization::Unit255),
            "zscore" => Ok(Normalization::ZScore),
            "none" => Ok(Normalization::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown normalization {other:?}, expected l2, unit255, zscore or none"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::L2 => "l2",
            Normalization::Unit255 => "unit255",
            Normalization::ZScore => "zscore",
            Normalization::None => "none",
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated {
            what: path.display().to_string(),
            expected: (at + 4) as u64,
            actual: bytes.len() as u64,
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: u64, path: &Path) -> Result<()> {
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            what: path.display().to_string(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Parses IDX image and label files without rescaling pixel values.
pub fn load_idx_raw(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let images = read_file(image_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC, image_path)?;
    let n = be_u32(&images, 4, image_path)? as usize;
    let rows = be_u32(&images, 8, image_path)? as usize;
    let cols = be_u32(&images, 12, image_path)? as usize;
    let dim = rows * cols;
    check_len(&images, 16 + (n * dim) as u64, image_path)?;

    let labels = read_file(label_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, label_path)?;
    let n_labels = be_u32(&labels, 4, label_path)? as usize;
    check_len(&labels, 8 + n_labels as u64, label_path)?;
    if n_labels != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let name = image_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        dim,
        images[16..].iter().map(|&p| p as f32).collect(),
        labels[8..].iter().map(|&l| l as u32).collect(),
    )
}

/// IDX images with pixels scaled into `[0, 1]`.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let mut ds = load_idx_raw(image_path, label_path)?;
    ds.normalize(Normalization::Unit255);
    Ok(ds)
}

/// The full 70K MNIST set from a directory holding the four standard files,
/// raw pixel values.
pub fn load_mnist_dir(dir: &Path) -> Result<Dataset> {
    let mut all = Dataset::new("mnist", 0, Vec::new(), Vec::new())?;
    for (images, labels) in MNIST_FILES {
        all.append(load_idx_raw(&dir.join(images), &dir.join(labels))?)?;
    }
    all.name = "mnist".into();
    Ok(all)
}

pub fn dense_to_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + ds.features.len() * 4);
    out.extend_from_slice(DENSE_MAGIC);
    out.push(DENSE_VERSION);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    for v in &ds.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn labels_to_bytes(labels: &[u32]) -> Vec<u8> {
    labels.iter().flat_map(|l| l.to_le_bytes()).collect()
}

pub fn write_dense(ds: &Dataset, feature_path: &Path, label_path: &Path) -> Result<()> {
    atomic_write(feature_path, |f| f.write_all(&dense_to_bytes(ds)))?;
    atomic_write(label_path, |f| f.write_all(&labels_to_bytes(&ds.labels)))
}

/// Parses an HCOHFEAT feature buffer; returns `(n, d, features)`.
pub fn parse_dense_features(what: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut r = Reader::new(what, bytes);
    r.expect_magic(DENSE_MAGIC)?;
    r.expect_version(DENSE_VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    r.require((n * d * 4) as u64)?;
    let features = (0..n * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok((n, d, features))
}

pub fn parse_labels(what: &str, bytes: &[u8], n: usize) -> Result<Vec<u32>> {
    if bytes.len() != n * 4 {
        return Err(Error::Truncated {
            what: what.into(),
            expected: (n * 4) as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn load_dense(feature_path: &Path, label_path: &Path) -> Result<Dataset> {
    let (n, d, features) =
        parse_dense_features(&feature_path.display().to_string(), &read_file(feature_path)?)?;
    let labels = parse_labels(&label_path.display().to_string(), &read_file(label_path)?, n)?;
    let name = feature_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, d, features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub test_per_class: usize,
    pub train_subset: usize,
    pub seed: u64,
}

/// Row indices of each part of a split. `train` is a subset of `retrieval`;
/// `test` and `retrieval` are disjoint and together cover the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub test: Vec<usize>,
    pub retrieval: Vec<usize>,
    pub train: Vec<usize>,
}

pub fn split_indices(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let counts = ds.class_counts();
    let deficient: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c < spec.test_per_class)
        .map(|(l, c)| format!("{l} ({c} < {})", spec.test_per_class))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "classes too small for {} test items each: {}",
            spec.test_per_class,
            deficient.join(", ")
        )));
    }
    let n_test = spec.test_per_class * counts.len();
    if n_test + spec.train_subset > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "split needs {n_test} test + {} train items but the dataset has {}",
            spec.train_subset,
            ds.len()
        )));
    }

    let mut rng = seed::rng(spec.seed);
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut in_test = vec![false; ds.len()];
    let mut test = Vec::with_capacity(n_test);
    for members in by_class.values_mut() {
        seed::shuffle(&mut rng, members);
        for &i in &members[..spec.test_per_class] {
            in_test[i] = true;
            test.push(i);
        }
    }
    test.sort_unstable();
    let retrieval: Vec<usize> = (0..ds.len()).filter(|&i| !in_test[i]).collect();
    let mut pool = retrieval.clone();
    seed::shuffle(&mut rng, &mut pool);
    let mut train = pool[..spec.train_subset].to_vec();
    train.sort_unstable();
    Ok(SplitIndices {
        test,
        retrieval,
        train,
    })
}

/// `(test, retrieval, train)` datasets.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(ds, spec)?;
    Ok((ds.subset(&idx.test), ds.subset(&idx.retrieval), ds.subset(&idx.train)))
}

/// One pass over selected rows of a dataset in seeded random order,
/// `batch_size` instances per batch (the last may be short).
pub struct Stream<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<'a> Stream<'a> {
    pub fn new(ds: &'a Dataset, rows: Vec<usize>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        let mut order = rows;
        seed::shuffle(&mut seed::rng(seed), &mut order);
        Ok(Stream {
            ds,
            order,
            batch_size,
            pos: 0,
        })
    }

    /// Order in which rows are emitted.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Stream<'_> {
    type Item = TrainBatch;

    fn next(&mut self) -> Option<TrainBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows = &self.order[self.pos..end];
        self.pos = end;
        let features = rows
            .iter()
            .flat_map(|&i| self.ds.row(i).iter().map(|&v| v as f64))
            .collect();
        let labels = self.ds.labels_at(rows);
        // Rows were validated finite when the dataset was built.
        Some(TrainBatch::new(self.ds.dim(), features, labels).expect("valid dataset rows"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

/// Streams every row of `train`.
pub fn stream(train: &Dataset, batch_size: usize, seed: u64) -> Result<Stream<'_>> {
    Stream::new(train, (0..train.len()).collect(), batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, classes: u32) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for k in 0..n_per_class {
                features.extend([c as f32, k as f32]);
                labels.push(c);
            }
        }
        Dataset::new("toy", 2, features, labels).unwrap()
    }

    fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend([0u8, 255, 51, 102, 1, 2, 3, 204]);
        let mut labels = Vec::new();
        labels.extend(IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend(2u32.to_be_bytes());
        labels.extend([7u8, 3]);
        (images, labels)
    }

    fn write_tmp(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn idx_fixture_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let ip = write_tmp(dir.path(), "img", &images);
        let lp = write_tmp(dir.path(), "lbl", &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.row(1), &[1.0 / 255.0, 2.0 / 255.0, 3.0 / 255.0, 0.8]);
        assert_eq!(ds.labels(), &[7, 3]);
        assert!(ds.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn idx_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let lp = write_tmp(dir.path(), "lbl", &labels);

        let mut bad = images.clone();
        bad[3] = 0x01;
        let ip = write_tmp(dir.path(), "bad", &bad);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::BadMagic { found: 0x801, .. })));

        let ip = write_tmp(dir.path(), "short", &images[..images.len() - 1]);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { expected: 24, actual: 23, .. })));

        let ip = write_tmp(dir.path(), "img", &images);
        let mut three = labels[..8].to_vec();
        three[7] = 3;
        three.extend([1u8, 2, 3]);
        let lp3 = write_tmp(dir.path(), "lbl3", &three);
        assert!(matches!(load_idx(&ip, &lp3), Err(Error::CountMismatch { images: 2, labels: 3 })));
    }

    #[test]
    fn dense_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("d", 3, vec![0.5, -1.25, 3.0, 1e-7, 2.0, -0.0], vec![4, 9]).unwrap();
        let fp = dir.path().join("f.feat");
        let lp = dir.path().join("f.lbl");
        write_dense(&ds, &fp, &lp).unwrap();
        let back = load_dense(&fp, &lp).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());

        let empty = Dataset::new("e", 5, vec![], vec![]).unwrap();
        write_dense(&empty, &fp, &lp).unwrap();
        let back = load_dense(&fp, &lp).unwrap();
        assert!(back.is_empty());

        let bytes = dense_to_bytes(&ds);
        let err = parse_dense_features("t", &bytes[..bytes.len() - 2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("41") && msg.contains("39"), "{msg}");
        let mut bad = bytes.clone();
        bad[4] = b'X';
        assert!(parse_dense_features("t", &bad).is_err());
        assert!(parse_labels("l", &[0; 7], 2).is_err());
    }

    #[test]
    fn normalizations() {
        let mut ds = Dataset::new("n", 2, vec![3.0, 4.0, 0.0, 0.0], vec![0, 1]).unwrap();
        ds.normalize(Normalization::L2);
        assert_eq!(ds.row(0), &[0.6, 0.8]);
        assert_eq!(ds.row(1), &[0.0, 0.0]);

        let mut ds = Dataset::new("z", 2, vec![1.0, 5.0, 3.0, 5.0], vec![0, 1]).unwrap();
        ds.normalize(Normalization::ZScore);
        assert_eq!(ds.features(), &[-1.0, 0.0, 1.0, 0.0]);

        for s in ["l2", "unit255", "zscore", "none"] {
            assert_eq!(s.parse::<Normalization>().unwrap().to_string(), s);
        }
        assert!("max".parse::<Normalization>().is_err());
    }

    #[test]
    fn split_properties() {
        let ds = toy(30, 4);
        let spec = SplitSpec {
            test_per_class: 5,
            train_subset: 50,
            seed: 1,
        };
        let s = split_indices(&ds, &spec).unwrap();
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.retrieval.len(), 100);
        assert_eq!(s.train.len(), 50);
        for c in 0..4 {
            assert_eq!(s.test.iter().filter(|&&i| ds.labels()[i] == c).count(), 5);
        }
        assert!(s.test.iter().all(|i| !s.retrieval.contains(i)));
        assert!(s.train.iter().all(|i| s.retrieval.contains(i)));
        assert_eq!(s, split_indices(&ds, &spec).unwrap());

        let none = split_indices(&ds, &SplitSpec { test_per_class: 0, ..spec }).unwrap();
        assert!(none.test.is_empty());
        assert_eq!(none.retrieval, (0..120).collect::<Vec<_>>());

        let (test, retrieval, train) = split(&ds, &spec).unwrap();
        assert_eq!((test.len(), retrieval.len(), train.len()), (20, 100, 50));
    }

    #[test]
    fn split_rejects_infeasible() {
        let mut ds = toy(10, 2);
        ds.append(Dataset::new("x", 2, vec![0.0, 0.0], vec![5]).unwrap()).unwrap();
        let err = split_indices(&ds, &SplitSpec { test_per_class: 3, train_subset: 1, seed: 0 }).unwrap_err();
        assert!(err.to_string().contains("5 (1 < 3)"), "{err}");
        let err = split_indices(&toy(10, 2), &SplitSpec { test_per_class: 3, train_subset: 15, seed: 0 });
        assert!(err.is_err());
    }

    #[test]
    fn stream_properties() {
        let ds = toy(7, 3);
        let batches: Vec<_> = stream(&ds, 1, 5).unwrap().collect();
        assert_eq!(batches.len(), 21);
        let batches: Vec<_> = stream(&ds, 4, 5).unwrap().collect();
        assert_eq!(batches.len(), 6);
        assert_eq!(batches.last().unwrap().len(), 1);
        let mut seen: Vec<(i64, i64)> = batches
            .iter()
            .flat_map(|b| b.features().chunks(2).map(|r| (r[0] as i64, r[1] as i64)).collect::<Vec<_>>())
            .collect();
        seen.sort_unstable();
        let mut all: Vec<(i64, i64)> = (0..21).map(|i| (ds.row(i)[0] as i64, ds.row(i)[1] as i64)).collect();
        all.sort_unstable();
        assert_eq!(seen, all);
        assert_eq!(
            stream(&ds, 1, 5).unwrap().order(),
            stream(&ds, 1, 5).unwrap().order()
        );
        assert!(stream(&ds, 0, 5).is_err());
    }
}
