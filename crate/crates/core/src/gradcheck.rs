//! Central finite-difference checks of the analytic gradients.

use crate::error::Result;
use crate::network::{Batch, Mlp};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::testfn::{toy_gradient, toy_value, Domain};

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub evaluations: usize,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.evaluations += 1;
        self.max_relative_error = self.max_relative_error.max(relative_error(analytic, numeric));
    }
}

/// Compares the toy gradient with central differences of step `h` at
/// `points` uniform random points of `domain`. Each point contributes two
/// evaluations, one per partial derivative.
pub fn check_toy_gradient(domain: Domain, points: usize, h: f64, rng: &mut Rng) -> GradCheckReport {
    let mut report = GradCheckReport {
        evaluations: 0,
        max_relative_error: 0.0,
    };
    for _ in 0..points {
        let x = domain.x.0 + (domain.x.1 - domain.x.0) * rng.uniform();
        let y = domain.y.0 + (domain.y.1 - domain.y.0) * rng.uniform();
        let (dx, dy) = toy_gradient(x, y);
        let nx = (toy_value(x + h, y) - toy_value(x - h, y)) / (2.0 * h);
        let ny = (toy_value(x, y + h) - toy_value(x, y - h)) / (2.0 * h);
        report.record(dx, nx);
        report.record(dy, ny);
    }
    report
}

/// Compares every backprop gradient entry of `model` on `batch` with central
/// differences of step `h`. With `masks`, the same dropout masks are used for
/// the analytic pass and every perturbed loss; otherwise the model runs in
/// eval mode.
pub fn check_mlp_gradient(
    model: &Mlp<f64>,
    batch: &Batch<f64>,
    masks: Option<&[Tensor<f64>]>,
    h: f64,
) -> Result<GradCheckReport> {
    let loss = |m: &Mlp<f64>| -> Result<f64> {
        Ok(match masks {
            Some(masks) => m.loss_and_grad_with_masks(batch, masks)?.loss,
            None => {
                m.loss_and_grad(batch, crate::network::Mode::Eval, &mut Rng::new(0))?
                    .loss
            }
        })
    };
    let analytic = match masks {
        Some(masks) => model.loss_and_grad_with_masks(batch, masks)?,
        None => model.loss_and_grad(batch, crate::network::Mode::Eval, &mut Rng::new(0))?,
    };
    let mut report = GradCheckReport {
        evaluations: 0,
        max_relative_error: 0.0,
    };
    let mut probe = model.clone();
    for (p, grad) in analytic.grads.iter().enumerate() {
        for j in 0..grad.len() {
            let original = probe.params()[p].data()[j];
            probe.params_mut()[p].data_mut()[j] = original + h;
            let up = loss(&probe)?;
            probe.params_mut()[p].data_mut()[j] = original - h;
            let down = loss(&probe)?;
            probe.params_mut()[p].data_mut()[j] = original;
            report.record(grad.data()[j], (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Runs [`check_mlp_gradient`] on `models` random `sizes` networks, each on a
/// fresh random batch of `rows` samples, alternating between eval mode and a
/// fixed train-mode dropout mask with retention `keep_prob`.
pub fn check_random_mlps(
    sizes: &[usize],
    models: usize,
    rows: usize,
    keep_prob: f64,
    h: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let mut total = GradCheckReport {
        evaluations: 0,
        max_relative_error: 0.0,
    };
    let classes = *sizes.last().unwrap_or(&1);
    for k in 0..models {
        let mut model = Mlp::he_uniform(sizes, keep_prob, rng)?;
        for b in (1..model.params().len()).step_by(2) {
            for v in model.params_mut()[b].data_mut() {
                *v = 0.5 * rng.standard_normal();
            }
        }
        let inputs = Tensor::new(
            &[rows, sizes[0]],
            (0..rows * sizes[0]).map(|_| rng.standard_normal()).collect(),
        )?;
        let labels = (0..rows).map(|_| rng.below(classes as u64) as usize).collect();
        let batch = Batch::new(inputs, labels)?;
        let report = if k % 2 == 1 && keep_prob < 1.0 {
            let masks = model.sample_dropout_masks(rows, rng);
            check_mlp_gradient(&model, &batch, Some(&masks), h)?
        } else {
            check_mlp_gradient(&model, &batch, None, h)?
        };
        total.evaluations += report.evaluations;
        total.max_relative_error = total.max_relative_error.max(report.max_relative_error);
    }
    Ok(total)
}
