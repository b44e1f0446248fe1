//! Fully-connected ReLU classifier with softmax cross-entropy and inverted
//! hidden-unit dropout.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{check_probability, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Rows of inputs with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        let (n, _) = inputs.dims2()?;
        if n != labels.len() {
            return Err(Error::ShapeMismatch {
                left: inputs.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named layer layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpPreset {
    /// 784-1000-1000-10.
    MnistPaper,
    /// 784-256-256-10.
    MnistReduced,
}

impl MlpPreset {
    pub fn sizes(self) -> Vec<usize> {
        match self {
            MlpPreset::MnistPaper => vec![784, 1000, 1000, 10],
            MlpPreset::MnistReduced => vec![784, 256, 256, 10],
        }
    }
}

/// Hidden activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache<T> {
    /// Output of each hidden layer after ReLU and dropout scaling.
    pub hidden: Vec<Tensor<T>>,
    /// Dropout scale factors (`0` or `1 / keep_prob`) per hidden layer, when
    /// dropout was active.
    pub masks: Option<Vec<Tensor<T>>>,
}

/// Mean loss and one gradient per parameter tensor, in [`Mlp::params`] order.
#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: f64,
    pub grads: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

/// Multilayer perceptron. Layer `i` maps `sizes[i]` to `sizes[i + 1]` with
/// weight `(sizes[i] x sizes[i + 1])` and bias `(sizes[i + 1])`; hidden layers
/// use ReLU followed by dropout with retention `keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    /// `[W0, b0, W1, b1, ..]`
    params: Vec<Tensor<T>>,
    keep_prob: f64,
}

enum MaskSource<'a, T> {
    None,
    Sample(&'a mut Rng),
    Fixed(&'a [Tensor<T>]),
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(sizes: &[usize], keep_prob: f64) -> Result<Self> {
        Self::build(sizes, keep_prob, |_, _| T::zero())
    }

    /// He-uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn he_uniform(sizes: &[usize], keep_prob: f64, rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, keep_prob, |fan_in, _| {
            let limit = (6.0 / fan_in as f64).sqrt();
            T::lit((2.0 * rng.uniform() - 1.0) * limit)
        })
    }

    fn build(sizes: &[usize], keep_prob: f64, mut init: impl FnMut(usize, usize) -> T) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::domain(format!("invalid layer sizes {sizes:?}")));
        }
        check_keep(keep_prob)?;
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let data = (0..fan_in * fan_out).map(|_| init(fan_in, fan_out)).collect();
            params.push(Tensor::new(&[fan_in, fan_out], data)?);
            params.push(Tensor::zeros(&[fan_out])?);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            keep_prob,
        })
    }

    /// Rebuilds a model from explicit parameters, checking that shapes chain.
    pub fn from_params(sizes: &[usize], params: Vec<Tensor<T>>, keep_prob: f64) -> Result<Self> {
        let mut model = Self::zeros(sizes, keep_prob)?;
        if params.len() != model.params.len() {
            return Err(Error::domain(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (slot, p) in model.params.iter_mut().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    left: slot.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn weight(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * layer + 1]
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn set_keep_prob(&mut self, keep_prob: f64) -> Result<()> {
        check_keep(keep_prob)?;
        self.keep_prob = keep_prob;
        Ok(())
    }

    /// Draws inverted-dropout scale masks for a batch of `rows` samples.
    pub fn sample_dropout_masks(&self, rows: usize, rng: &mut Rng) -> Vec<Tensor<T>> {
        let scale = T::lit(1.0 / self.keep_prob);
        self.sizes[1..self.sizes.len() - 1]
            .iter()
            .map(|&width| {
                let data = (0..rows * width)
                    .map(|_| {
                        if rng.bernoulli(self.keep_prob) {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                Tensor::new(&[rows, width], data).expect("rows >= 1")
            })
            .collect()
    }

    /// Logits `(n x d_out)`. In train mode with `keep_prob < 1`, hidden units
    /// are kept with probability `keep_prob` and survivors scaled by
    /// `1 / keep_prob`; eval mode never drops or scales.
    pub fn forward(&self, inputs: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<T>, ActivationCache<T>)> {
        let source = if mode == Mode::Train && self.keep_prob < 1.0 {
            MaskSource::Sample(rng)
        } else {
            MaskSource::None
        };
        self.forward_impl(inputs, source)
    }

    /// Forward pass with caller-supplied dropout scale masks.
    pub fn forward_with_masks(
        &self,
        inputs: &Tensor<T>,
        masks: &[Tensor<T>],
    ) -> Result<(Tensor<T>, ActivationCache<T>)> {
        self.forward_impl(inputs, MaskSource::Fixed(masks))
    }

    fn forward_impl(&self, inputs: &Tensor<T>, source: MaskSource<'_, T>) -> Result<(Tensor<T>, ActivationCache<T>)> {
        let (n, d) = inputs.dims2()?;
        if d != self.sizes[0] {
            return Err(Error::ShapeMismatch {
                left: inputs.shape().to_vec(),
                right: vec![n, self.sizes[0]],
            });
        }
        let masks = match source {
            MaskSource::None => None,
            MaskSource::Sample(rng) => Some(self.sample_dropout_masks(n, rng)),
            MaskSource::Fixed(m) => {
                if m.len() != self.layers() - 1 {
                    return Err(Error::domain(format!(
                        "expected {} dropout masks, got {}",
                        self.layers() - 1,
                        m.len()
                    )));
                }
                for (mask, &w) in m.iter().zip(&self.sizes[1..]) {
                    if mask.shape() != [n, w] {
                        return Err(Error::ShapeMismatch {
                            left: mask.shape().to_vec(),
                            right: vec![n, w],
                        });
                    }
                }
                Some(m.to_vec())
            }
        };

        let last = self.layers() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut logits = None;
        for layer in 0..self.layers() {
            let x = if layer == 0 { inputs } else { &hidden[layer - 1] };
            let mut z = self.affine(x, layer);
            if layer == last {
                logits = Some(z);
                break;
            }
            let mask = masks.as_ref().map(|m| &m[layer]);
            match mask {
                Some(mask) => {
                    for (v, &s) in z.data_mut().iter_mut().zip(mask.data()) {
                        *v = if *v > T::zero() { *v * s } else { T::zero() };
                    }
                }
                None => {
                    for v in z.data_mut() {
                        if !(*v > T::zero()) {
                            *v = T::zero();
                        }
                    }
                }
            }
            hidden.push(z);
        }
        Ok((logits.expect("at least one layer"), ActivationCache { hidden, masks }))
    }

    /// `x W + b` for one layer.
    fn affine(&self, x: &Tensor<T>, layer: usize) -> Tensor<T> {
        let (n, k) = (x.shape()[0], self.sizes[layer]);
        let m = self.sizes[layer + 1];
        let bias = self.bias(layer).data();
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(bias);
        }
        T::gemm(
            n,
            k,
            m,
            T::one(),
            x.data(),
            (k as isize, 1),
            self.weight(layer).data(),
            (m as isize, 1),
            T::one(),
            &mut out,
            (m as isize, 1),
        );
        Tensor::new(&[n, m], out).expect("n >= 1")
    }

    /// Mean softmax cross-entropy and its gradient. Dropout masks sampled in
    /// the forward pass are reused in the backward pass.
    pub fn loss_and_grad(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<LossAndGrad<T>> {
        let (logits, cache) = self.forward(batch.inputs(), mode, rng)?;
        self.backward(batch, logits, cache)
    }

    pub fn loss_and_grad_with_masks(&self, batch: &Batch<T>, masks: &[Tensor<T>]) -> Result<LossAndGrad<T>> {
        let (logits, cache) = self.forward_with_masks(batch.inputs(), masks)?;
        self.backward(batch, logits, cache)
    }

    fn backward(&self, batch: &Batch<T>, logits: Tensor<T>, cache: ActivationCache<T>) -> Result<LossAndGrad<T>> {
        let classes = *self.sizes.last().expect("non-empty sizes");
        let n = batch.len();
        let (loss, mut delta) = softmax_xent(&logits, batch.labels(), classes)?;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        for layer in (0..self.layers()).rev() {
            let x = if layer == 0 {
                batch.inputs()
            } else {
                &cache.hidden[layer - 1]
            };
            let (k, m) = (self.sizes[layer], self.sizes[layer + 1]);

            let mut gw = vec![T::zero(); k * m];
            T::gemm(
                k,
                n,
                m,
                T::one(),
                x.data(),
                (1, k as isize),
                delta.data(),
                (m as isize, 1),
                T::zero(),
                &mut gw,
                (m as isize, 1),
            );
            let mut gb = vec![T::zero(); m];
            for row in delta.data().chunks(m) {
                for (acc, &v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            grads[2 * layer] = Some(Tensor::new(&[k, m], gw)?);
            grads[2 * layer + 1] = Some(Tensor::new(&[m], gb)?);

            if layer == 0 {
                break;
            }
            let mut dx = vec![T::zero(); n * k];
            T::gemm(
                n,
                m,
                k,
                T::one(),
                delta.data(),
                (m as isize, 1),
                self.weight(layer).data(),
                (1, m as isize),
                T::zero(),
                &mut dx,
                (k as isize, 1),
            );
            // h = relu(z) * s, so dh/dz = s where h > 0 and 0 elsewhere.
            let h = cache.hidden[layer - 1].data();
            match &cache.masks {
                Some(masks) => {
                    for ((d, &hv), &s) in dx.iter_mut().zip(h).zip(masks[layer - 1].data()) {
                        *d = if hv > T::zero() { *d * s } else { T::zero() };
                    }
                }
                None => {
                    for (d, &hv) in dx.iter_mut().zip(h) {
                        if !(hv > T::zero()) {
                            *d = T::zero();
                        }
                    }
                }
            }
            delta = Tensor::new(&[n, k], dx)?;
        }
        Ok(LossAndGrad {
            loss,
            grads: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            logits,
        })
    }

    /// Eval-mode mean loss and accuracy over a dataset, in chunks.
    pub fn evaluate(&self, dataset: &Dataset<T>) -> Result<(f64, f64)> {
        if dataset.is_empty() {
            return Err(Error::domain("cannot evaluate on an empty dataset"));
        }
        const CHUNK: usize = 1000;
        let classes = *self.sizes.last().expect("non-empty sizes");
        let d = dataset.dims();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut rng = Rng::new(0);
        for start in (0..dataset.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(dataset.len());
            let rows = Tensor::from_slice(&[end - start, d], &dataset.inputs().data()[start * d..end * d])?;
            let labels = &dataset.labels()[start..end];
            let (logits, _) = self.forward(&rows, Mode::Eval, &mut rng)?;
            let (loss, _) = softmax_xent(&logits, labels, classes)?;
            loss_sum += loss * (end - start) as f64;
            correct += count_correct(&logits, labels);
        }
        let n = dataset.len() as f64;
        Ok((loss_sum / n, correct as f64 / n))
    }

    /// Fraction of samples whose arg-max logit equals the label.
    pub fn accuracy(&self, dataset: &Dataset<T>) -> Result<f64> {
        self.evaluate(dataset).map(|(_, acc)| acc)
    }
}

fn check_keep(keep_prob: f64) -> Result<()> {
    check_probability(keep_prob, "dropout keep probability")?;
    if keep_prob == 0.0 {
        return Err(Error::domain("dropout keep probability must be > 0"));
    }
    Ok(())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Number of rows of `logits` whose arg-max equals the label.
pub fn count_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks(c)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}

/// Mean cross-entropy of softmax(logits) and `d loss / d logits`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize], classes: usize) -> Result<(f64, Tensor<T>)> {
    let (n, c) = logits.dims2()?;
    if c != classes || n != labels.len() {
        return Err(Error::ShapeMismatch {
            left: logits.shape().to_vec(),
            right: vec![labels.len(), classes],
        });
    }
    if let Some(i) = labels.iter().position(|&l| l >= classes) {
        return Err(Error::domain(format!(
            "label {} at row {i} outside [0, {classes})",
            labels[i]
        )));
    }
    let inv_n = T::lit(1.0 / n as f64);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).fold(T::zero(), |a, b| a + b);
        let log_z = max + sum.ln();
        loss += (log_z - row[label]).as_f64();
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            grad.push((p - target) * inv_n);
        }
    }
    Ok((loss / n as f64, Tensor::new(&[n, c], grad)?))
}
