//! Datasets: IDX (MNIST) files, synthetic Gaussian blobs, label corruption
//! and epoch batching.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Batch;
use crate::rng::{check_probability, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Conventional MNIST file names inside a dataset directory.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Inputs `n x d`, integer labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = inputs.dims2()?;
        if n != labels.len() {
            return Err(Error::ShapeMismatch {
                left: inputs.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(i) = labels.iter().position(|&l| l >= classes) {
            return Err(Error::domain(format!(
                "label {} at sample {i} is outside [0, {classes})",
                labels[i]
            )));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let d = self.dims();
        let inputs = Tensor::from_slice(&[n, d], &self.inputs.data()[..n * d])?;
        Self::new(inputs, self.labels[..n].to_vec(), self.classes)
    }

    /// Same inputs with replacement labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.inputs.clone(), labels, self.classes)
    }

    /// Copies the selected rows into a batch, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch<T>> {
        let d = self.dims();
        let src = self.inputs.data();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::domain(format!("sample index {i} out of range {}", self.len())));
            }
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
            labels.push(self.labels[i]);
        }
        Batch::new(Tensor::new(&[indices.len(), d], data)?, labels)
    }

    pub fn as_batch(&self) -> Batch<T> {
        Batch::new(self.inputs.clone(), self.labels.clone()).expect("dataset rows match labels")
    }
}

/// Pixel scaling applied when converting IDX bytes to floats.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    /// `pixel / 255`.
    #[default]
    Unit,
    /// `(pixel / 255 - mean) / std`.
    Standardize { mean: f64, std: f64 },
}

/// Raw IDX image file contents (`u8` pixels, magic 0x00000803).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Raw IDX label file contents (magic 0x00000801).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            expected: format!("4-byte big-endian {what}"),
            found: "end of file".into(),
        }),
    }
}

fn check_magic(bytes: &[u8], path: &Path, expected: u32) -> Result<()> {
    let magic = read_be_u32(bytes, 0, path, "magic")?;
    if magic != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            expected: format!("magic {expected:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, path: &Path) -> Result<()> {
    let found = bytes.len() - header;
    if found != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (header + found.min(expected)) as u64,
            expected: format!("{expected} payload bytes"),
            found: format!("{found} bytes"),
        });
    }
    Ok(())
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len().checked_div(self.rows * self.cols).unwrap_or(0)
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        check_magic(bytes, path, IDX_IMAGE_MAGIC)?;
        let count = read_be_u32(bytes, 4, path, "image count")? as usize;
        let rows = read_be_u32(bytes, 8, path, "row count")? as usize;
        let cols = read_be_u32(bytes, 12, path, "column count")? as usize;
        check_payload(bytes, 16, count * rows * cols, path)?;
        Ok(Self {
            rows,
            cols,
            pixels: bytes[16..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IDX_IMAGE_MAGIC, self.count() as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

impl IdxLabels {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        check_magic(bytes, path, IDX_LABEL_MAGIC)?;
        let count = read_be_u32(bytes, 4, path, "label count")? as usize;
        check_payload(bytes, 8, count, path)?;
        Ok(Self {
            labels: bytes[8..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Builds a 10-class dataset from parsed IDX contents.
pub fn dataset_from_idx<T: Scalar>(
    images: &IdxImages,
    labels: &IdxLabels,
    labels_path: &Path,
    norm: Normalization,
) -> Result<Dataset<T>> {
    const CLASSES: usize = 10;
    let n = images.count();
    if labels.labels.len() != n {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            expected: format!("label count {n} matching the image file"),
            found: labels.labels.len().to_string(),
        });
    }
    if n == 0 {
        return Err(Error::domain("IDX files contain no samples"));
    }
    if let Some(i) = labels.labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 8 + i as u64,
            expected: "label in 0..=9".into(),
            found: labels.labels[i].to_string(),
        });
    }
    let (shift, inv_std) = match norm {
        Normalization::Unit => (0.0, 1.0),
        Normalization::Standardize { mean, std } => {
            if !(std > 0.0) {
                return Err(Error::domain(format!("standardization std must be > 0, got {std}")));
            }
            (mean, 1.0 / std)
        }
    };
    let data = images
        .pixels
        .iter()
        .map(|&p| T::lit((p as f64 / 255.0 - shift) * inv_std))
        .collect();
    let inputs = Tensor::new(&[n, images.rows * images.cols], data)?;
    Dataset::new(inputs, labels.labels.iter().map(|&l| l as usize).collect(), CLASSES)
}

/// Loads an IDX image/label pair with `pixel / 255` scaling.
pub fn load_idx<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset<T>> {
    load_idx_with(images, labels, Normalization::Unit)
}

pub fn load_idx_with<T: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    norm: Normalization,
) -> Result<Dataset<T>> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let img = IdxImages::parse(&read_file(ip)?, ip)?;
    let lab = IdxLabels::parse(&read_file(lp)?, lp)?;
    dataset_from_idx(&img, &lab, lp, norm)
}

pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &IdxImages,
    labels: &IdxLabels,
) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, images.to_bytes()).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, labels.to_bytes()).map_err(|e| Error::io(lp, e))
}

/// Class means: scaled simplex vertices `e_c / sqrt(2)` when `classes <= dims`
/// (pairwise distance 1), otherwise points on a circle in the first two
/// coordinates with unit distance between neighbours.
fn blob_means(classes: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dims];
            if classes <= dims {
                m[c] = std::f64::consts::FRAC_1_SQRT_2;
            } else {
                let step = std::f64::consts::TAU / classes as f64;
                let radius = 0.5 / (step / 2.0).sin();
                m[0] = radius * (step * c as f64).cos();
                m[1] = radius * (step * c as f64).sin();
            }
            m
        })
        .collect()
}

/// Isotropic Gaussian clusters, `per_class` samples each, labels cycling
/// `0, 1, .., classes - 1`. Deterministic in `seed`.
pub fn synth_blobs<T: Scalar>(
    classes: usize,
    per_class: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes < 2 || dims < 2 || per_class == 0 {
        return Err(Error::domain(format!(
            "synthetic blobs need classes >= 2, dims >= 2, per_class >= 1; got {classes}, {dims}, {per_class}"
        )));
    }
    if !(spread >= 0.0) {
        return Err(Error::domain(format!("spread must be >= 0, got {spread}")));
    }
    let means = blob_means(classes, dims);
    let mut rng = Rng::new(seed);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &m in &means[c] {
            data.push(T::lit(m + spread * rng.standard_normal()));
        }
        labels.push(c);
    }
    Dataset::new(Tensor::new(&[n, dims], data)?, labels, classes)
}

/// Labels of a dataset after per-sample corruption, frozen for a seed.
#[derive(Debug, Clone)]
pub struct NoisyLabelView<'a, T> {
    base: &'a Dataset<T>,
    labels: Vec<usize>,
    corrupted: Vec<bool>,
    probability: f64,
    seed: u64,
}

impl<'a, T: Scalar> NoisyLabelView<'a, T> {
    pub fn base(&self) -> &'a Dataset<T> {
        self.base
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_corrupted(&self, i: usize) -> bool {
        self.corrupted[i]
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Owned dataset carrying the observed labels.
    pub fn to_dataset(&self) -> Dataset<T> {
        self.base
            .with_labels(self.labels.clone())
            .expect("corrupted labels stay in range")
    }
}

/// Flags each sample with probability `q` and moves flagged labels to a
/// class drawn uniformly from the other `classes - 1`.
pub fn corrupt_labels<T: Scalar>(dataset: &Dataset<T>, q: f64, seed: u64) -> Result<NoisyLabelView<'_, T>> {
    check_probability(q, "label corruption probability")?;
    let c = dataset.classes() as u64;
    let mut rng = Rng::new(seed);
    let mut labels = Vec::with_capacity(dataset.len());
    let mut corrupted = Vec::with_capacity(dataset.len());
    for &orig in dataset.labels() {
        let flip = rng.bernoulli(q);
        let observed = if flip {
            let draw = rng.below(c - 1) as usize;
            if draw >= orig {
                draw + 1
            } else {
                draw
            }
        } else {
            orig
        };
        labels.push(observed);
        corrupted.push(flip);
    }
    Ok(NoisyLabelView {
        base: dataset,
        labels,
        corrupted,
        probability: q,
        seed,
    })
}

/// Index batches for one epoch: a permutation of `0..n` drawn from
/// `shuffle.child(epoch)`, cut into `batch_size` chunks (the last may be short).
pub fn batches(n: usize, batch_size: usize, shuffle: &Rng, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::domain("batch size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    shuffle.child(epoch).shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn fixture() -> (IdxImages, IdxLabels) {
        (
            IdxImages {
                rows: 2,
                cols: 2,
                pixels: vec![0, 255, 255, 0, 0, 0, 255, 255],
            },
            IdxLabels { labels: vec![3, 7] },
        )
    }

    #[test]
    fn hand_built_fixture_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let (img, lab) = fixture();
        write_idx(&ip, &lp, &img, &lab).unwrap();
        let ds: Dataset<f64> = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dims(), 4);
        assert_eq!(ds.classes(), 10);
        assert_eq!(ds.inputs().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(ds.labels(), &[3, 7]);
    }

    #[test]
    fn bad_magic_names_offset() {
        let (img, _) = fixture();
        let mut bytes = img.to_bytes();
        bytes[3] = 0x01;
        match IdxImages::parse(&bytes, Path::new("x")) {
            Err(Error::Format { offset, expected, .. }) => {
                assert_eq!(offset, 0);
                assert!(expected.contains("0x00000803"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_files_rejected() {
        let (img, lab) = fixture();
        let bytes = img.to_bytes();
        assert!(matches!(
            IdxImages::parse(&bytes[..bytes.len() - 1], Path::new("x")),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            IdxImages::parse(&bytes[..10], Path::new("x")),
            Err(Error::Format { .. })
        ));
        let lb = lab.to_bytes();
        assert!(matches!(
            IdxLabels::parse(&lb[..9], Path::new("y")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let (img, _) = fixture();
        let lab = IdxLabels { labels: vec![1, 2, 3] };
        let err = dataset_from_idx::<f64>(&img, &lab, Path::new("l"), Normalization::Unit).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn standardization_applies() {
        let (img, lab) = fixture();
        let ds: Dataset<f64> = dataset_from_idx(
            &img,
            &lab,
            Path::new("l"),
            Normalization::Standardize { mean: 0.5, std: 0.5 },
        )
        .unwrap();
        assert_eq!(&ds.inputs().data()[..2], &[-1.0, 1.0]);
    }

    #[test]
    fn zero_spread_blobs_sit_on_means() {
        let ds: Dataset<f64> = synth_blobs(3, 4, 5, 0.0, 1).unwrap();
        for (row, &l) in ds.inputs().data().chunks(5).zip(ds.labels()) {
            let mut expect = [0.0; 5];
            expect[l] = std::f64::consts::FRAC_1_SQRT_2;
            assert_eq!(row, &expect[..]);
        }
    }

    #[test]
    fn blob_means_are_unit_spaced() {
        for (c, d) in [(3, 5), (5, 2), (10, 3)] {
            let m = blob_means(c, d);
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let nearest = (1..c).map(|j| dist(&m[0], &m[j])).fold(f64::INFINITY, f64::min);
            assert!((nearest - 1.0).abs() < 1e-12, "{c} {d} {nearest}");
        }
    }

    #[test]
    fn blobs_deterministic_per_seed() {
        let a: Dataset<f64> = synth_blobs(3, 10, 4, 0.3, 42).unwrap();
        let b: Dataset<f64> = synth_blobs(3, 10, 4, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let c: Dataset<f64> = synth_blobs(3, 10, 4, 0.3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_corruption_is_identity() {
        let ds: Dataset<f64> = synth_blobs(4, 50, 4, 0.1, 0).unwrap();
        let view = corrupt_labels(&ds, 0.0, 9).unwrap();
        assert_eq!(view.labels(), ds.labels());
        assert_eq!(view.corrupted_count(), 0);
    }

    #[test]
    fn binary_full_corruption_flips_all() {
        let ds: Dataset<f64> = synth_blobs(2, 50, 2, 0.1, 0).unwrap();
        let view = corrupt_labels(&ds, 1.0, 9).unwrap();
        for (o, b) in view.labels().iter().zip(ds.labels()) {
            assert_eq!(*o, 1 - b);
        }
    }

    #[test]
    fn corruption_frozen_per_seed() {
        let ds: Dataset<f64> = synth_blobs(5, 100, 5, 0.1, 0).unwrap();
        let a = corrupt_labels(&ds, 0.3, 4).unwrap();
        let b = corrupt_labels(&ds, 0.3, 4).unwrap();
        assert_eq!(a.labels(), b.labels());
        for i in 0..ds.len() {
            assert_eq!(a.is_corrupted(i), a.labels()[i] != ds.labels()[i]);
        }
    }

    #[test]
    fn corruption_count_in_binomial_interval() {
        let inputs = Tensor::<f64>::zeros(&[60_000, 1]).unwrap();
        let labels = (0..60_000).map(|i| i % 10).collect();
        let ds = Dataset::new(inputs, labels, 10).unwrap();
        let view = corrupt_labels(&ds, 0.05, 2024).unwrap();
        let k = view.corrupted_count();
        assert!((2700..=3300).contains(&k), "corrupted {k}");
    }

    #[test]
    fn batch_sizes() {
        let sizes: Vec<usize> = batches(10, 3, &Rng::new(0), 0).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        assert_eq!(batches(60_000, 128, &Rng::new(0), 0).unwrap().len(), 469);
        assert!(batches(10, 0, &Rng::new(0), 0).is_err());
    }

    #[test]
    fn batch_order_depends_on_epoch_only() {
        let r = Rng::new(5);
        assert_eq!(batches(100, 7, &r, 3).unwrap(), batches(100, 7, &r, 3).unwrap());
        assert_ne!(batches(100, 7, &r, 3).unwrap(), batches(100, 7, &r, 4).unwrap());
    }

    #[test]
    fn gather_copies_rows() {
        let ds: Dataset<f64> = synth_blobs(2, 3, 2, 0.5, 3).unwrap();
        let b = ds.gather(&[4, 1]).unwrap();
        assert_eq!(b.labels(), &[ds.labels()[4], ds.labels()[1]]);
        assert_eq!(&b.inputs().data()[..2], &ds.inputs().data()[8..10]);
        assert!(ds.gather(&[6]).is_err());
    }

    proptest! {
        #[test]
        fn idx_round_trip(count in 1usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let img = IdxImages {
                rows,
                cols,
                pixels: (0..count * rows * cols).map(|_| rng.below(256) as u8).collect(),
            };
            let lab = IdxLabels { labels: (0..count).map(|_| rng.below(10) as u8).collect() };
            let (ib, lb) = (img.to_bytes(), lab.to_bytes());
            let dir = tempfile::tempdir().unwrap();
            let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
            write_idx(&ip, &lp, &IdxImages::parse(&ib, &ip).unwrap(), &IdxLabels::parse(&lb, &lp).unwrap()).unwrap();
            prop_assert_eq!(fs::read(&ip).unwrap(), ib);
            prop_assert_eq!(fs::read(&lp).unwrap(), lb);
        }

        #[test]
        fn epoch_order_is_a_bijection(n in 1usize..300, bs in 1usize..40, seed in any::<u64>(), epoch in 0u64..50) {
            let mut seen = vec![false; n];
            for b in batches(n, bs, &Rng::new(seed), epoch).unwrap() {
                prop_assert!(b.len() <= bs);
                for i in b {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
