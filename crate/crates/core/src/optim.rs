//! Gradient-descent optimizers with learning-rate dropout.
//!
//! Every rule follows the same skeleton. For each parameter tensor `W` with
//! gradient `G` at step `t`:
//!
//! 1. optional coupled weight decay, `G <- G + lambda W`;
//! 2. optional gradient noise, `G <- G + n` with `n ~ N(0, sigma0 / (1 + t')^gamma)`
//!    where `t'` counts the steps already taken;
//! 3. for [`Variant::DropGradient`], `G <- D' * G` with `D' ~ Bernoulli(p)`;
//! 4. accumulate the first moment `M = beta M + eta G` and, for adaptive
//!    rules, the second moment `V`;
//! 5. form the step direction `dW` (`M` itself for SGDM, a bias-corrected
//!    `M / (sqrt(V) + eps)` form for the adaptive rules);
//! 6. for [`Variant::Lrd`], draw `D ~ Bernoulli(p)` per element, so the
//!    per-element learning rate is `alpha D`; otherwise it is `alpha`;
//! 7. `W <- W - alpha D * dW`.
//!
//! The learning-rate mask in step 6 never feeds back into `M` or `V`: a
//! dropped coordinate keeps accumulating gradient information and simply
//! does not move this step.

use crate::error::{Error, Result};
use crate::rng::{bernoulli_mask, check_probability, gaussian_sample, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Sgdm,
    RmsProp,
    Adam,
    AmsGrad,
    RAdam,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [
        RuleKind::Sgdm,
        RuleKind::RmsProp,
        RuleKind::Adam,
        RuleKind::AmsGrad,
        RuleKind::RAdam,
    ];

    /// Whether the rule keeps a second-moment accumulator.
    pub fn is_adaptive(self) -> bool {
        !matches!(self, RuleKind::Sgdm)
    }

    /// Initial learning rate used for the image-classification benchmarks.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            RuleKind::Sgdm => 0.1,
            RuleKind::RmsProp | RuleKind::Adam | RuleKind::AmsGrad => 0.001,
            RuleKind::RAdam => 0.03,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Sgdm => "sgdm",
            RuleKind::RmsProp => "rmsprop",
            RuleKind::Adam => "adam",
            RuleKind::AmsGrad => "amsgrad",
            RuleKind::RAdam => "radam",
        }
    }

    /// Display label, e.g. `Adam`.
    pub fn label(self) -> &'static str {
        match self {
            RuleKind::Sgdm => "SGDM",
            RuleKind::RmsProp => "RMSprop",
            RuleKind::Adam => "Adam",
            RuleKind::AmsGrad => "AMSGrad",
            RuleKind::RAdam => "RAdam",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            RuleKind::Sgdm => 0,
            RuleKind::RmsProp => 1,
            RuleKind::Adam => 2,
            RuleKind::AmsGrad => 3,
            RuleKind::RAdam => 4,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

/// Update rule and its hyperparameters.
///
/// `beta` and `eta` define the first moment `M = beta M + eta G`. `beta2`
/// is the second-moment decay and is unused by SGDM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerRule {
    pub kind: RuleKind,
    pub beta: f64,
    pub beta2: f64,
    pub eps: f64,
    pub eta: f64,
}

impl OptimizerRule {
    /// Heavy-ball momentum, `beta = 0.9`, `eta = 1`.
    pub fn sgdm() -> Self {
        Self {
            kind: RuleKind::Sgdm,
            beta: 0.9,
            beta2: 0.0,
            eps: 1e-8,
            eta: 1.0,
        }
    }

    /// Smoothing 0.99, no momentum, no bias correction.
    pub fn rmsprop() -> Self {
        Self {
            kind: RuleKind::RmsProp,
            beta: 0.0,
            beta2: 0.99,
            eps: 1e-8,
            eta: 1.0,
        }
    }

    pub fn adam() -> Self {
        Self::adam_like(RuleKind::Adam)
    }

    pub fn amsgrad() -> Self {
        Self::adam_like(RuleKind::AmsGrad)
    }

    pub fn radam() -> Self {
        Self::adam_like(RuleKind::RAdam)
    }

    fn adam_like(kind: RuleKind) -> Self {
        Self {
            kind,
            beta: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eta: 1.0 - 0.9,
        }
    }

    pub fn default_for(kind: RuleKind) -> Self {
        match kind {
            RuleKind::Sgdm => Self::sgdm(),
            RuleKind::RmsProp => Self::rmsprop(),
            RuleKind::Adam => Self::adam(),
            RuleKind::AmsGrad => Self::amsgrad(),
            RuleKind::RAdam => Self::radam(),
        }
    }

    /// Adam-family rule with `eta = 1 - beta1`.
    pub fn with_betas(kind: RuleKind, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut r = Self::default_for(kind);
        r.beta = beta1;
        r.beta2 = beta2;
        r.eps = eps;
        if matches!(kind, RuleKind::Adam | RuleKind::AmsGrad | RuleKind::RAdam) {
            r.eta = 1.0 - beta1;
        }
        r
    }

    pub fn is_adaptive(&self) -> bool {
        self.kind.is_adaptive()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.beta) {
            return Err(Error::domain(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.is_adaptive() && !unit(self.beta2) {
            return Err(Error::domain(format!("beta2 must lie in [0, 1), got {}", self.beta2)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::domain(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::domain(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Where the Bernoulli(p) mask is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Plain optimizer.
    #[default]
    None,
    /// Learning-rate dropout: mask the per-element learning rate.
    Lrd,
    /// Dropout on the raw gradient before accumulation.
    DropGradient,
}

/// Additive Gaussian gradient noise with variance `variance / (1 + t)^decay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyGradient {
    pub variance: f64,
    pub decay: f64,
}

impl Default for NoisyGradient {
    fn default() -> Self {
        Self {
            variance: 0.1,
            decay: 0.55,
        }
    }
}

impl NoisyGradient {
    /// Noise variance for the step taken after `steps_taken` earlier steps.
    pub fn variance_at(&self, steps_taken: u64) -> f64 {
        self.variance / (1.0 + steps_taken as f64).powf(self.decay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrdConfig {
    pub learning_rate: f64,
    /// Probability that an element's learning rate (or gradient, for
    /// [`Variant::DropGradient`]) is kept.
    pub keep_prob: f64,
    pub variant: Variant,
    pub noisy_gradient: Option<NoisyGradient>,
    pub weight_decay: f64,
    /// Parameter tensor indices exempt from masking. Empty masks everything.
    pub unmasked: Vec<usize>,
}

impl LrdConfig {
    pub fn plain(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            keep_prob: 1.0,
            variant: Variant::None,
            noisy_gradient: None,
            weight_decay: 0.0,
            unmasked: Vec::new(),
        }
    }

    pub fn lrd(learning_rate: f64, keep_prob: f64) -> Self {
        Self {
            keep_prob,
            variant: Variant::Lrd,
            ..Self::plain(learning_rate)
        }
    }

    pub fn drop_gradient(learning_rate: f64, keep_prob: f64) -> Self {
        Self {
            keep_prob,
            variant: Variant::DropGradient,
            ..Self::plain(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        check_probability(self.keep_prob, "keep probability")?;
        if !(self.weight_decay >= 0.0) {
            return Err(Error::domain(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if let Some(ng) = self.noisy_gradient {
            if !(ng.variance >= 0.0) || !(ng.decay >= 0.0) {
                return Err(Error::domain(format!("invalid gradient noise {ng:?}")));
            }
        }
        Ok(())
    }

    fn masked(&self, index: usize) -> bool {
        !self.unmasked.contains(&index)
    }
}

/// Accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Option<Tensor<T>>,
    pub v_max: Option<Tensor<T>>,
}

/// Step counter and per-tensor accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    kind: RuleKind,
    t: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zeroed accumulators shaped like `params`.
    pub fn new(kind: RuleKind, params: &[Tensor<T>]) -> Self {
        let moments = params
            .iter()
            .map(|p| Moments {
                m: p.zeros_like(),
                v: kind.is_adaptive().then(|| p.zeros_like()),
                v_max: (kind == RuleKind::AmsGrad).then(|| p.zeros_like()),
            })
            .collect();
        Self { kind, t: 0, moments }
    }

    pub(crate) fn from_parts(kind: RuleKind, t: u64, moments: Vec<Moments<T>>) -> Self {
        Self { kind, t, moments }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> &[Moments<T>] {
        &self.moments
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<T> {
        &self.moments[i].m
    }

    pub fn second_moment(&self, i: usize) -> Option<&Tensor<T>> {
        self.moments[i].v.as_ref()
    }

    pub fn max_second_moment(&self, i: usize) -> Option<&Tensor<T>> {
        self.moments[i].v_max.as_ref()
    }
}

/// Per-step scalar factors shared by every element.
struct StepFactors<T> {
    beta: T,
    eta: T,
    beta2: T,
    one_minus_beta2: T,
    eps: T,
    /// `1 - beta^t`
    bias1: T,
    /// `1 - beta2^t`
    bias2: T,
    /// RAdam rectification; `None` while the variance estimate is untrustworthy.
    rectifier: Option<T>,
}

impl<T: Scalar> StepFactors<T> {
    fn new(rule: &OptimizerRule, t: u64) -> Self {
        let ti = i32::try_from(t).unwrap_or(i32::MAX);
        let beta2_t = rule.beta2.powi(ti);
        let rectifier = (rule.kind == RuleKind::RAdam)
            .then(|| radam_rectifier(rule.beta2, t))
            .flatten();
        Self {
            beta: T::lit(rule.beta),
            eta: T::lit(rule.eta),
            beta2: T::lit(rule.beta2),
            one_minus_beta2: T::lit(1.0 - rule.beta2),
            eps: T::lit(rule.eps),
            bias1: T::lit(1.0 - rule.beta.powi(ti)),
            bias2: T::lit(1.0 - beta2_t),
            rectifier: rectifier.map(T::lit),
        }
    }
}

/// Variance rectification term `r_t` of RAdam, or `None` when the
/// approximated SMA length `rho_t` is at most 4.
pub fn radam_rectifier(beta2: f64, t: u64) -> Option<f64> {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let beta2_t = beta2.powi(i32::try_from(t).unwrap_or(i32::MAX));
    let rho_t = rho_inf - 2.0 * t as f64 * beta2_t / (1.0 - beta2_t);
    (rho_t > 4.0)
        .then(|| (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt())
}

/// Accumulates one gradient element and returns the step direction.
#[inline]
fn direction<T: Scalar>(
    kind: RuleKind,
    f: &StepFactors<T>,
    g: T,
    m: &mut T,
    v: Option<&mut T>,
    v_max: Option<&mut T>,
) -> T {
    *m = f.beta * *m + f.eta * g;
    let Some(v) = v else {
        return *m;
    };
    *v = f.beta2 * *v + f.one_minus_beta2 * g * g;
    match kind {
        RuleKind::Sgdm => unreachable!("SGDM has no second moment"),
        RuleKind::RmsProp => *m / (v.sqrt() + f.eps),
        RuleKind::Adam => (*m / f.bias1) / ((*v / f.bias2).sqrt() + f.eps),
        RuleKind::AmsGrad => {
            let vm = v_max.expect("AMSGrad keeps a running maximum");
            *vm = vm.max(*v);
            (*m / f.bias1) / ((*vm / f.bias2).sqrt() + f.eps)
        }
        RuleKind::RAdam => {
            let m_hat = *m / f.bias1;
            match f.rectifier {
                Some(r) => r * m_hat / ((*v / f.bias2).sqrt() + f.eps),
                None => m_hat,
            }
        }
    }
}

fn check_consistent<T: Scalar>(
    rule: &OptimizerRule,
    state: &OptimizerState<T>,
    params: &[Tensor<T>],
    grads: &[Tensor<T>],
) -> Result<()> {
    if state.kind != rule.kind {
        return Err(Error::domain(format!(
            "optimizer state is for {:?}, rule is {:?}",
            state.kind, rule.kind
        )));
    }
    if params.len() != grads.len() || params.len() != state.moments.len() {
        return Err(Error::domain(format!(
            "{} parameters, {} gradients, {} accumulator sets",
            params.len(),
            grads.len(),
            state.moments.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.moments[i].m.shape() {
            return Err(Error::ShapeMismatch {
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        g.check_finite(&format!("gradient {i}"))?;
    }
    Ok(())
}

/// One optimizer step over every parameter tensor.
///
/// Random draws happen per tensor in order: gradient noise, the gradient
/// mask, then the learning-rate mask. Inputs are validated before anything is
/// mutated.
pub fn step<T: Scalar>(
    rule: &OptimizerRule,
    state: &mut OptimizerState<T>,
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    cfg: &LrdConfig,
    rng: &mut Rng,
) -> Result<()> {
    rule.validate()?;
    cfg.validate()?;
    check_consistent(rule, state, params, grads)?;

    let steps_taken = state.t;
    let t = steps_taken + 1;
    let factors = StepFactors::<T>::new(rule, t);
    let alpha = T::lit(cfg.learning_rate);
    let decay = T::lit(cfg.weight_decay);

    for (i, ((w, g), acc)) in params.iter_mut().zip(grads).zip(&mut state.moments).enumerate() {
        let shape = w.shape().to_vec();
        let mut g = g.data().to_vec();

        if cfg.weight_decay > 0.0 {
            for (g, &w) in g.iter_mut().zip(w.data()) {
                *g += decay * w;
            }
        }
        if let Some(noise) = cfg.noisy_gradient {
            let std = noise.variance_at(steps_taken).sqrt();
            let n: Tensor<T> = gaussian_sample(rng, &shape, 0.0, std)?;
            for (g, &n) in g.iter_mut().zip(n.data()) {
                *g += n;
            }
        }
        let masked = cfg.masked(i);
        if cfg.variant == Variant::DropGradient && masked {
            let keep: Tensor<T> = bernoulli_mask(rng, &shape, cfg.keep_prob)?;
            for (g, &d) in g.iter_mut().zip(keep.data()) {
                *g *= d;
            }
        }

        let m = acc.m.data_mut();
        let mut v = acc.v.as_mut().map(Tensor::data_mut);
        let mut v_max = acc.v_max.as_mut().map(Tensor::data_mut);
        let delta: Vec<T> = g
            .iter()
            .enumerate()
            .map(|(j, &gj)| {
                direction(
                    rule.kind,
                    &factors,
                    gj,
                    &mut m[j],
                    v.as_deref_mut().map(|v| &mut v[j]),
                    v_max.as_deref_mut().map(|v| &mut v[j]),
                )
            })
            .collect();

        let w = w.data_mut();
        if cfg.variant == Variant::Lrd && masked {
            let keep: Tensor<T> = bernoulli_mask(rng, &shape, cfg.keep_prob)?;
            for ((w, &d), &k) in w.iter_mut().zip(&delta).zip(keep.data()) {
                if k != T::zero() {
                    *w -= alpha * d;
                }
            }
        } else {
            for (w, &d) in w.iter_mut().zip(&delta) {
                *w -= alpha * d;
            }
        }
    }
    state.t = t;
    Ok(())
}

/// A rule, its configuration and its state, driving one set of parameters.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    rule: OptimizerRule,
    config: LrdConfig,
    state: OptimizerState<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(rule: OptimizerRule, config: LrdConfig, params: &[Tensor<T>]) -> Result<Self> {
        rule.validate()?;
        config.validate()?;
        Ok(Self {
            state: OptimizerState::new(rule.kind, params),
            rule,
            config,
        })
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], rng: &mut Rng) -> Result<()> {
        step(&self.rule, &mut self.state, params, grads, &self.config, rng)
    }

    pub fn rule(&self) -> &OptimizerRule {
        &self.rule
    }

    pub fn config(&self) -> &LrdConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn state(&self) -> &OptimizerState<T> {
        &self.state
    }

    pub fn set_state(&mut self, state: OptimizerState<T>) -> Result<()> {
        if state.kind != self.rule.kind || state.moments.len() != self.state.moments.len() {
            return Err(Error::domain("optimizer state does not match this optimizer"));
        }
        self.state = state;
        Ok(())
    }
}

/// Outcome of [`expected_update_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedUpdateReport {
    pub draws: usize,
    /// Elements with `|alpha dW|` above the floor.
    pub compared: usize,
    /// Max over compared elements of `|mean(U) - p alpha dW| / |p alpha dW|`.
    pub max_relative_deviation: f64,
    /// Largest `|U|` seen in any draw.
    pub max_abs_update: f64,
    /// Kept elements whose update differed from the unmasked update.
    pub mismatched_updates: usize,
}

/// Replays one LRD step `draws` times from the same frozen state and compares
/// the sample mean of the update `U = W_{t-1} - W_t` with `p alpha dW`, the
/// unmasked update scaled by the keep probability.
pub fn expected_update_check<T: Scalar>(
    rule: &OptimizerRule,
    state: &OptimizerState<T>,
    params: &[Tensor<T>],
    grads: &[Tensor<T>],
    cfg: &LrdConfig,
    draws: usize,
    rng: &mut Rng,
) -> Result<ExpectedUpdateReport> {
    const FLOOR: f64 = 1e-12;
    if draws < 100 {
        return Err(Error::domain(format!("need at least 100 mask draws, got {draws}")));
    }
    if cfg.variant != Variant::Lrd || cfg.noisy_gradient.is_some() {
        return Err(Error::domain(
            "expected-update check needs the LRD variant without gradient noise",
        ));
    }

    let flatten =
        |ts: &[Tensor<T>]| -> Vec<f64> { ts.iter().flat_map(|t| t.data().iter().map(|v| v.as_f64())).collect() };
    let before = flatten(params);

    let mut reference = params.to_vec();
    let mut ref_state = state.clone();
    let plain = LrdConfig {
        variant: Variant::None,
        ..cfg.clone()
    };
    step(rule, &mut ref_state, &mut reference, grads, &plain, &mut Rng::new(0))?;
    let full: Vec<f64> = before.iter().zip(flatten(&reference)).map(|(b, a)| b - a).collect();

    let mut kept = vec![0usize; full.len()];
    let mut mismatched = 0;
    let mut max_abs_update: f64 = 0.0;
    for _ in 0..draws {
        let mut trial = params.to_vec();
        let mut trial_state = state.clone();
        step(rule, &mut trial_state, &mut trial, grads, cfg, rng)?;
        for (j, (b, a)) in before.iter().zip(flatten(&trial)).enumerate() {
            let u = b - a;
            max_abs_update = max_abs_update.max(u.abs());
            if u != 0.0 {
                kept[j] += 1;
                if u.to_bits() != full[j].to_bits() {
                    mismatched += 1;
                }
            }
        }
    }

    let p = cfg.keep_prob;
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for (j, &u) in full.iter().enumerate() {
        if u.abs() <= FLOOR {
            continue;
        }
        compared += 1;
        let mean = kept[j] as f64 / draws as f64 * u;
        let expected = p * u;
        worst = worst.max((mean - expected).abs() / expected.abs());
    }
    Ok(ExpectedUpdateReport {
        draws,
        compared,
        max_relative_deviation: worst,
        max_abs_update,
        mismatched_updates: mismatched,
    })
}

/// Piecewise-constant learning-rate decay: the base rate is multiplied by
/// `factor` once for every milestone at or below the current epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub milestones: Vec<u64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::constant()
    }
}

impl LrSchedule {
    pub fn constant() -> Self {
        Self {
            milestones: Vec::new(),
            factor: 0.1,
        }
    }

    /// Tenfold decay at each milestone.
    pub fn step_decay(milestones: Vec<u64>) -> Self {
        Self {
            milestones,
            factor: 0.1,
        }
    }

    pub fn rate(&self, base: f64, epoch: u64) -> f64 {
        self.milestones
            .iter()
            .filter(|&&m| epoch >= m)
            .fold(base, |lr, _| lr * self.factor)
    }
}

/// Effective learning rate at `epoch`.
pub fn lr_schedule(base: f64, epoch: u64, schedule: &LrSchedule) -> f64 {
    schedule.rate(base, epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::vector(vec![v])]
    }

    #[test]
    fn adaptive_flag_matches_kind() {
        assert!(!OptimizerRule::sgdm().is_adaptive());
        for k in [RuleKind::RmsProp, RuleKind::Adam, RuleKind::AmsGrad, RuleKind::RAdam] {
            assert!(OptimizerRule::default_for(k).is_adaptive());
        }
    }

    #[test]
    fn sgdm_two_steps() {
        let rule = OptimizerRule {
            beta: 0.9,
            eta: 1.0,
            ..OptimizerRule::sgdm()
        };
        let mut w = scalar(0.0);
        let mut state = OptimizerState::new(rule.kind, &w);
        let cfg = LrdConfig::plain(0.1);
        for _ in 0..2 {
            step(&rule, &mut state, &mut w, &scalar(1.0), &cfg, &mut Rng::new(0)).unwrap();
        }
        // M1 = 1, M2 = 1.9
        let expect: f64 = 0.0 - 0.1 * 1.0 - 0.1 * (0.9 * 1.0 + 1.0);
        assert_eq!(w[0].data()[0], expect);
        assert!((w[0].data()[0] + 0.29).abs() < 1e-15);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_names_element() {
        let rule = OptimizerRule::adam();
        let mut w = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = OptimizerState::new(rule.kind, &w);
        let g = vec![Tensor::vector(vec![1.0, f64::INFINITY])];
        let err = step(&rule, &mut state, &mut w, &g, &LrdConfig::plain(0.1), &mut Rng::new(0)).unwrap_err();
        match err {
            Error::NonFinite { tensor, index, .. } => {
                assert_eq!(tensor, "gradient 0");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(state.step_count(), 0);
        assert_eq!(w[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn keep_prob_out_of_range_rejected() {
        let rule = OptimizerRule::adam();
        let mut w = scalar(0.0);
        let mut state = OptimizerState::new(rule.kind, &w);
        for p in [-0.1, 1.1] {
            let cfg = LrdConfig::lrd(0.1, p);
            assert!(matches!(
                step(&rule, &mut state, &mut w, &scalar(1.0), &cfg, &mut Rng::new(0)),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let mut r = OptimizerRule::adam();
        r.beta2 = 1.0;
        assert!(r.validate().is_err());
        let mut r = OptimizerRule::sgdm();
        r.eps = 0.0;
        assert!(r.validate().is_err());
        assert!(LrdConfig::plain(0.0).validate().is_err());
    }

    #[test]
    fn mismatched_state_rejected() {
        let mut w = scalar(0.0);
        let mut state = OptimizerState::new(RuleKind::Sgdm, &w);
        let r = step(
            &OptimizerRule::adam(),
            &mut state,
            &mut w,
            &scalar(1.0),
            &LrdConfig::plain(0.1),
            &mut Rng::new(0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn radam_warmup_then_rectified() {
        // rho_inf = 1999 for beta2 = 0.999; rho_t ~ t - 0.001 t^2, above 4 from t = 5.
        for t in 1..=4 {
            assert!(radam_rectifier(0.999, t).is_none(), "t = {t}");
        }
        let r5 = radam_rectifier(0.999, 5).unwrap();
        assert!(r5 > 0.0 && r5 < 1.0);
        let late = radam_rectifier(0.999, 100_000).unwrap();
        assert!((late - 1.0).abs() < 1e-3);
    }

    #[test]
    fn schedule_milestones() {
        let s = LrSchedule::step_decay(vec![100, 150]);
        assert_eq!(lr_schedule(0.1, 0, &s), 0.1);
        assert_eq!(lr_schedule(0.1, 99, &s), 0.1);
        assert_eq!(lr_schedule(0.1, 120, &s), 0.1 * 0.1);
        assert!((lr_schedule(0.1, 150, &s) - 0.001).abs() < 1e-18);
        let flat = LrSchedule::constant();
        assert_eq!(lr_schedule(0.03, 10_000, &flat), 0.03);
    }

    #[test]
    fn noise_variance_decays() {
        let ng = NoisyGradient::default();
        assert_eq!(ng.variance_at(0), 0.1);
        let mut prev = f64::INFINITY;
        for t in 0..100 {
            let v = ng.variance_at(t);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn unmasked_tensors_always_move() {
        let rule = OptimizerRule::sgdm();
        let mut w = vec![Tensor::vector(vec![0.0; 8]), Tensor::vector(vec![0.0; 8])];
        let g = vec![Tensor::vector(vec![1.0; 8]), Tensor::vector(vec![1.0; 8])];
        let mut state = OptimizerState::new(rule.kind, &w);
        let mut cfg = LrdConfig::lrd(0.1, 0.0);
        cfg.unmasked = vec![1];
        step(&rule, &mut state, &mut w, &g, &cfg, &mut Rng::new(0)).unwrap();
        assert!(w[0].data().iter().all(|&v| v == 0.0));
        assert!(w[1].data().iter().all(|&v| v == -0.1));
    }

    #[test]
    fn expected_update_rejects_few_draws() {
        let rule = OptimizerRule::adam();
        let w = scalar(1.0);
        let state = OptimizerState::new(rule.kind, &w);
        let cfg = LrdConfig::lrd(0.01, 0.5);
        assert!(expected_update_check(&rule, &state, &w, &scalar(1.0), &cfg, 99, &mut Rng::new(0)).is_err());
        let plain = LrdConfig::plain(0.01);
        assert!(expected_update_check(&rule, &state, &w, &scalar(1.0), &plain, 100, &mut Rng::new(0)).is_err());
    }
}
