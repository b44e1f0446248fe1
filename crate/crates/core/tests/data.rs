use std::path::PathBuf;

use lrdrop::data::{
    corrupt_labels, load_idx, write_idx, Dataset, IdxImages, IdxLabels, MNIST_TEST_IMAGES, MNIST_TEST_LABELS,
    MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
use lrdrop::stats::binomial_interval;
use lrdrop::tensor::Tensor;

fn labelled(labels: Vec<usize>, classes: usize) -> Dataset<f64> {
    let inputs = Tensor::zeros(&[labels.len(), 1]).unwrap();
    Dataset::new(inputs, labels, classes).unwrap()
}

#[test]
fn corrupted_labels_are_uniform_over_wrong_classes() {
    // Every sample starts in class 4 and is corrupted, so each observed label
    // is one draw from the nine other classes.
    let n = 100_000;
    let data = labelled(vec![4; n], 10);
    let view = corrupt_labels(&data, 1.0, 21).unwrap();
    let mut counts = [0usize; 10];
    for &l in view.labels() {
        counts[l] += 1;
    }
    assert_eq!(counts[4], 0);
    let expected = n as f64 / 9.0;
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != 4)
        .map(|(_, &k)| (k as f64 - expected).powi(2) / expected)
        .sum();
    // Upper 0.001 quantile of chi-square with 8 degrees of freedom.
    assert!(chi2 < 26.124, "chi-square {chi2}");
}

#[test]
fn corruption_count_and_freezing() {
    let data = labelled((0..60_000).map(|i| i % 10).collect(), 10);
    let view = corrupt_labels(&data, 0.05, 3).unwrap();
    let (lo, hi) = binomial_interval(60_000, 0.05, 4.0);
    let k = view.corrupted_count() as f64;
    assert!((2700.0..=3300.0).contains(&k) && lo <= k && k <= hi, "{k}");
    for (i, (&obs, &orig)) in view.labels().iter().zip(data.labels()).enumerate() {
        assert_eq!(view.is_corrupted(i), obs != orig);
    }
    assert_eq!(corrupt_labels(&data, 0.05, 3).unwrap().labels(), view.labels());
    assert_eq!(corrupt_labels(&data, 0.0, 3).unwrap().labels(), data.labels());
    let binary = labelled(vec![0, 1, 1, 0], 2);
    assert_eq!(corrupt_labels(&binary, 1.0, 0).unwrap().labels(), &[1, 0, 0, 1]);
}

#[test]
fn idx_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    let images = IdxImages {
        rows: 2,
        cols: 3,
        pixels: vec![0, 255, 0, 255, 0, 255, 255, 255, 255, 0, 0, 0],
    };
    let labels = IdxLabels { labels: vec![7, 2] };
    write_idx(&ip, &lp, &images, &labels).unwrap();
    let ds = load_idx::<f64>(&ip, &lp).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.dims(), 6);
    assert_eq!(ds.labels(), &[7, 2]);
    assert_eq!(
        ds.inputs().data(),
        &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
    );
    assert_eq!(IdxImages::parse(&std::fs::read(&ip).unwrap(), &ip).unwrap(), images);

    let mut truncated = std::fs::read(&ip).unwrap();
    truncated.pop();
    std::fs::write(&ip, truncated).unwrap();
    let err = load_idx::<f64>(&ip, &lp).unwrap_err().to_string();
    assert!(err.contains("img"), "{err}");
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LRD_DATA_DIR")
        .map(|d| PathBuf::from(d).join("mnist"))
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join(MNIST_TRAIN_IMAGES).is_file().then_some(dir)
}

#[test]
fn mnist_files_have_the_published_shape() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let train = load_idx::<f32>(dir.join(MNIST_TRAIN_IMAGES), dir.join(MNIST_TRAIN_LABELS)).unwrap();
    let test = load_idx::<f32>(dir.join(MNIST_TEST_IMAGES), dir.join(MNIST_TEST_LABELS)).unwrap();
    assert_eq!((train.len(), train.dims(), train.classes()), (60_000, 784, 10));
    assert_eq!(test.len(), 10_000);
    assert!(train.inputs().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}
