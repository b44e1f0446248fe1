//! Classification runs on MNIST or synthetic blobs.

use std::borrow::Cow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lrdrop::data::{
    batches, corrupt_labels, load_idx_with, synth_blobs, NoisyLabelView, Normalization, MNIST_TEST_IMAGES,
    MNIST_TEST_LABELS, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
use lrdrop::network::{count_correct, Mode};
use lrdrop::optim::{LrdConfig, Optimizer};
use lrdrop::{Dataset, Mlp, Rng};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::io::{opt, write_atomic, write_csv};
use crate::spec::{Arm, ExperimentSpec, Problem};
use crate::streams;

pub const EPOCH_HEADER: &str = "epoch,train_loss,train_acc,test_acc";
pub const SUMMARY_HEADER: &str = "arm,param_value,seed,final_test_acc";
pub const DATA_DIR_ENV: &str = "LRD_DATA_DIR";

/// One learning-curve row. Epoch 0 evaluates the untrained model on the
/// training set; later rows average the training loss and accuracy over the
/// epoch's mini-batches (train mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub arm: String,
    pub param_value: Option<f64>,
    pub seed: u64,
    pub rows: Vec<EpochRow>,
    pub seconds: f64,
}

impl RunRecord {
    pub fn final_test_acc(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.test_acc)
    }

    /// Output directory name: the arm label, plus the swept value if any.
    pub fn dir_name(&self) -> String {
        run_dir_name(&self.arm, self.param_value)
    }

    pub fn csv(&self) -> String {
        let mut s = format!("{EPOCH_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_acc, r.test_acc
            ));
        }
        s
    }
}

pub(crate) fn run_dir_name(arm: &str, param_value: Option<f64>) -> String {
    match param_value {
        Some(v) => format!("{arm}@{v}"),
        None => arm.to_string(),
    }
}

pub struct ClassificationData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Default MNIST location: `$LRD_DATA_DIR/mnist`, else `data/mnist`.
pub fn default_mnist_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(|d| PathBuf::from(d).join("mnist"))
        .unwrap_or_else(|| PathBuf::from("data").join("mnist"))
}

pub fn load_data(spec: &ExperimentSpec) -> Result<ClassificationData> {
    match spec.problem {
        Problem::Synth => {
            let s = &spec.synth;
            let root = Rng::with_stream(s.seed, streams::DATA);
            let train = synth_blobs(s.classes, s.per_class, s.dims, s.spread, root.child(0).next_u64())?;
            let test = synth_blobs(s.classes, s.test_per_class, s.dims, s.spread, root.child(1).next_u64())?;
            Ok(ClassificationData { train, test })
        }
        Problem::Mnist => {
            let dir = spec.data.dir.clone().unwrap_or_else(default_mnist_dir);
            let paths = [
                MNIST_TRAIN_IMAGES,
                MNIST_TRAIN_LABELS,
                MNIST_TEST_IMAGES,
                MNIST_TEST_LABELS,
            ]
            .map(|f| dir.join(f));
            if paths.iter().any(|p| !p.is_file()) {
                return Err(HarnessError::MissingData {
                    expected: paths.to_vec(),
                });
            }
            let norm = spec
                .data
                .standardize
                .map_or(Normalization::Unit, |s| Normalization::Standardize {
                    mean: s.mean,
                    std: s.std,
                });
            let mut train = load_idx_with(&paths[0], &paths[1], norm)?;
            let mut test = load_idx_with(&paths[2], &paths[3], norm)?;
            if let Some(n) = spec.data.train_subset {
                train = train.take(n)?;
            }
            if let Some(n) = spec.data.test_subset {
                test = test.take(n)?;
            }
            Ok(ClassificationData { train, test })
        }
        Problem::Toy => Err(HarnessError::Invalid(vec![
            "problem: toy specs run through the toy runner".into(),
        ])),
    }
}

/// The label corruption a noisy-label arm trains on under `seed`.
pub fn noisy_labels(train: &Dataset, q: f64, seed: u64) -> Result<NoisyLabelView<'_, f64>> {
    let corruption_seed = Rng::with_stream(seed, streams::NOISY_LABEL).next_u64();
    Ok(corrupt_labels(train, q, corruption_seed)?)
}

/// Trains one arm under one seed. Every generator is derived from
/// `(seed, purpose)` only, so arms never share generator state and share
/// initial weights and batch order under the same seed.
pub fn train_arm(spec: &ExperimentSpec, arm: &Arm, seed: u64, data: &ClassificationData) -> Result<RunRecord> {
    train_model(spec, arm, seed, data).map(|(_, record)| record)
}

/// [`train_arm`], also returning the trained model.
pub fn train_model(spec: &ExperimentSpec, arm: &Arm, seed: u64, data: &ClassificationData) -> Result<(Mlp, RunRecord)> {
    let start = Instant::now();
    let mut sizes = vec![data.train.dims()];
    sizes.extend(spec.hidden_sizes().map_err(|e| HarnessError::Invalid(vec![e]))?);
    sizes.push(data.train.classes());

    let mut init = Rng::with_stream(seed, streams::INIT);
    let mut model = Mlp::he_uniform(&sizes, arm.standard_dropout.unwrap_or(1.0), &mut init)?;

    let train: Cow<'_, Dataset> = match arm.noisy_label {
        Some(q) => Cow::Owned(noisy_labels(&data.train, q, seed)?.to_dataset()),
        None => Cow::Borrowed(&data.train),
    };

    let unmasked = if spec.mask_biases {
        Vec::new()
    } else {
        (1..model.params().len()).step_by(2).collect()
    };
    let base_lr = spec.learning_rate();
    let config = LrdConfig {
        learning_rate: base_lr,
        keep_prob: arm.keep_prob,
        variant: arm.variant,
        noisy_gradient: arm.noisy_gradient,
        weight_decay: spec.weight_decay,
        unmasked,
    };
    let mut optimizer = Optimizer::new(spec.rule(), config, model.params())?;
    let schedule = spec.schedule();
    let shuffle = Rng::with_stream(seed, streams::SHUFFLE);
    let mut dropout = Rng::with_stream(seed, streams::DROPOUT);
    let mut masks = Rng::with_stream(seed, streams::OPTIM);

    let (loss, acc) = model.evaluate(&train)?;
    let mut rows = vec![EpochRow {
        epoch: 0,
        train_loss: loss,
        train_acc: acc,
        test_acc: model.accuracy(&data.test)?,
    }];
    let n = train.len();
    for epoch in 1..=spec.epochs {
        optimizer.set_learning_rate(schedule.rate(base_lr, epoch as u64 - 1));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for idx in batches(n, spec.batch_size, &shuffle, epoch as u64 - 1)? {
            let batch = train.gather(&idx)?;
            let out = model.loss_and_grad(&batch, Mode::Train, &mut dropout)?;
            loss_sum += out.loss * batch.len() as f64;
            correct += count_correct(&out.logits, batch.labels());
            optimizer.step(model.params_mut(), &out.grads, &mut masks)?;
        }
        rows.push(EpochRow {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            test_acc: model.accuracy(&data.test)?,
        });
    }
    let record = RunRecord {
        arm: arm.label.clone(),
        param_value: arm.param_value,
        seed,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

/// Trains every arm under every seed, reporting progress through `progress`.
pub fn run_arms(
    spec: &ExperimentSpec,
    arms: &[Arm],
    data: &ClassificationData,
    mut progress: impl FnMut(&RunRecord),
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::with_capacity(arms.len() * spec.seeds.len());
    for arm in arms {
        for &seed in &spec.seeds {
            let record = train_arm(spec, arm, seed, data)?;
            progress(&record);
            records.push(record);
        }
    }
    Ok(records)
}

/// Runs the spec's arms and writes the learning curves under `out`.
pub fn run_classification(spec: &ExperimentSpec, out: &Path) -> Result<Vec<RunRecord>> {
    let arms = spec.arms().map_err(|e| HarnessError::Invalid(vec![e]))?;
    let data = load_data(spec)?;
    let records = run_arms(spec, &arms, &data, log_record)?;
    write_records(out, &records)?;
    write_atomic(&out.join("spec.json"), spec.to_json().as_bytes())?;
    Ok(records)
}

pub(crate) fn log_record(r: &RunRecord) {
    eprintln!(
        "{} seed {}: final test acc {:.4} ({:.1} s)",
        r.dir_name(),
        r.seed,
        r.final_test_acc(),
        r.seconds
    );
}

#[derive(Serialize)]
struct Timing {
    run: String,
    seed: u64,
    seconds: f64,
}

/// Writes `<out>/<run>/seed-<s>.csv` per record, `summary.csv`, and the
/// wall-clock times to `timings.json` (kept out of the CSVs so those are
/// reproducible byte for byte).
pub fn write_records(out: &Path, records: &[RunRecord]) -> Result<()> {
    for r in records {
        write_atomic(
            &out.join(r.dir_name()).join(format!("seed-{}.csv", r.seed)),
            r.csv().as_bytes(),
        )?;
    }
    write_csv(
        &out.join("summary.csv"),
        SUMMARY_HEADER,
        records
            .iter()
            .map(|r| format!("{},{},{},{}", r.arm, opt(r.param_value), r.seed, r.final_test_acc())),
    )?;
    let timings: Vec<_> = records
        .iter()
        .map(|r| Timing {
            run: r.dir_name(),
            seed: r.seed,
            seconds: r.seconds,
        })
        .collect();
    let json = serde_json::to_string_pretty(&timings).map_err(|e| HarnessError::Other(e.to_string()))?;
    write_atomic(&out.join("timings.json"), json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec() -> ExperimentSpec {
        ExperimentSpec::from_json(
            r#"{"version": 1, "problem": "synth", "epochs": 2, "batch_size": 16, "seeds": [3],
                "model": {"hidden": [8]}, "synth": {"classes": 3, "per_class": 20, "test_per_class": 10,
                "dims": 4, "spread": 0.1, "seed": 0}}"#,
        )
        .unwrap()
    }

    #[test]
    fn record_has_one_row_per_epoch_plus_initial() {
        let spec = quick_spec();
        let data = load_data(&spec).unwrap();
        let arm = spec.parse_arm("lrd").unwrap();
        let r = train_arm(&spec, &arm, 3, &data).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(r.csv().starts_with("epoch,train_loss,train_acc,test_acc\n0,"));
    }

    #[test]
    fn zero_epochs_gives_only_the_initial_row() {
        let mut spec = quick_spec();
        spec.epochs = 0;
        let data = load_data(&spec).unwrap();
        let r = train_arm(&spec, &spec.parse_arm("base").unwrap(), 0, &data).unwrap();
        assert_eq!(r.rows.len(), 1);
    }

    #[test]
    fn missing_mnist_names_expected_files() {
        let mut spec = quick_spec();
        spec.problem = Problem::Mnist;
        spec.data.dir = Some(PathBuf::from("/nonexistent/mnist"));
        let err = load_data(&spec).err().unwrap();
        assert!(matches!(err, HarnessError::MissingData { .. }));
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent/mnist/train-images-idx3-ubyte"), "{msg}");
        assert!(msg.contains("LRD_DATA_DIR"));
    }
}
