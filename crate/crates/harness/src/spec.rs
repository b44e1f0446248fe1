//! Versioned JSON experiment specs.
//!
//! Every field except `version` and `problem` has a default, so a minimal
//! spec is `{"version": 1, "problem": "synth"}`. Unknown fields are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use lrdrop::network::MlpPreset;
use lrdrop::optim::{LrSchedule, NoisyGradient, OptimizerRule, RuleKind, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SPEC_VERSION: u32 = 1;

/// Learning rate for toy runs when the spec does not set one. Not taken from
/// any published setting.
pub const TOY_LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Toy,
    Mnist,
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub problem: Problem,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    /// Keep probability `p` for LRD and drop-gradient arms.
    #[serde(default = "default_keep_prob")]
    pub keep_prob: f64,
    /// Arm names such as `base`, `lrd`, `dg`, `sd`, `lrd+sd`. Defaults to
    /// `base`, `lrd` and, for every configured regularizer `r`, `r` and `lrd+r`.
    #[serde(default)]
    pub arms: Option<Vec<String>>,
    #[serde(default)]
    pub regularizers: Regularizers,
    #[serde(default)]
    pub weight_decay: f64,
    /// Apply the LRD / DG mask to bias vectors too.
    #[serde(default = "default_true")]
    pub mask_biases: bool,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub lr_milestones: Vec<u64>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub synth: SynthSpec,
    #[serde(default)]
    pub toy: ToySpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `mnist-reduced` (hidden 256-256) or `mnist-paper` (hidden 1000-1000).
    #[serde(default)]
    pub preset: Option<String>,
    /// Explicit hidden widths; overrides the preset.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            preset: Some("mnist-reduced".into()),
            hidden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            rule: default_rule(),
            learning_rate: None,
            beta1: None,
            beta2: None,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizers {
    /// Hidden-unit retention `p_sd` for standard dropout.
    #[serde(default)]
    pub standard_dropout: Option<f64>,
    /// Label corruption probability `q`.
    #[serde(default)]
    pub noisy_label: Option<f64>,
    #[serde(default)]
    pub noisy_gradient: Option<NoiseSpec>,
}

pub const DEFAULT_STANDARD_DROPOUT: f64 = 0.9;
pub const DEFAULT_NOISY_LABEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "default_noise_variance")]
    pub variance: f64,
    #[serde(default = "default_noise_decay")]
    pub decay: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            variance: default_noise_variance(),
            decay: default_noise_decay(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Directory holding the four MNIST IDX files. Defaults to
    /// `$LRD_DATA_DIR/mnist`, then `data/mnist`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Use only the first `n` training samples.
    #[serde(default)]
    pub train_subset: Option<usize>,
    #[serde(default)]
    pub test_subset: Option<usize>,
    /// Standardize pixels as `(x / 255 - mean) / std` instead of `x / 255`.
    #[serde(default)]
    pub standardize: Option<Standardize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardize {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dims: usize,
    pub spread: f64,
    /// Seed of the generated train and test sets, shared by every run seed.
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 100,
            test_per_class: 100,
            dims: 16,
            spread: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub steps: usize,
    /// Initial points on a `grid x grid` cell-centered lattice over the domain.
    pub grid: usize,
    /// Explicit initial points; replaces the grid when present.
    pub inits: Option<Vec<[f64; 2]>>,
    pub success_radius: f64,
    /// Record every `n`-th step in the trajectory CSV; the last step is always
    /// recorded.
    pub record_every: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            steps: 3000,
            grid: 4,
            inits: None,
            success_radius: lrdrop::testfn::DEFAULT_SUCCESS_RADIUS,
            record_every: 1,
        }
    }
}

fn default_keep_prob() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_epochs() -> usize {
    10
}
fn default_batch_size() -> usize {
    128
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output() -> PathBuf {
    PathBuf::from("runs")
}
fn default_rule() -> String {
    "adam".into()
}
fn default_noise_variance() -> f64 {
    0.1
}
fn default_noise_decay() -> f64 {
    0.55
}

/// One configuration trained under every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub variant: Variant,
    pub keep_prob: f64,
    pub standard_dropout: Option<f64>,
    pub noisy_label: Option<f64>,
    pub noisy_gradient: Option<NoisyGradient>,
    /// Swept parameter value, for sweep arms.
    pub param_value: Option<f64>,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> std::result::Result<Self, Vec<String>> {
        let spec: Self = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
        let problems = spec.problems();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(problems)
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let spec_error = |problems| HarnessError::Spec {
            path: path.to_path_buf(),
            problems,
        };
        let text = fs::read_to_string(path).map_err(|e| spec_error(vec![e.to_string()]))?;
        Self::from_json(&text).map_err(spec_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Every validation failure, one message per offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        let unit_closed = |v: f64| (0.0..=1.0).contains(&v);

        check(
            self.version == SPEC_VERSION,
            format!("version: expected {SPEC_VERSION}, got {}", self.version),
        );
        check(
            unit_closed(self.keep_prob),
            format!("keep_prob: must lie in [0, 1], got {}", self.keep_prob),
        );
        check(
            self.weight_decay >= 0.0,
            format!("weight_decay: must be >= 0, got {}", self.weight_decay),
        );
        check(self.batch_size >= 1, "batch_size: must be >= 1".into());
        check(!self.seeds.is_empty(), "seeds: must list at least one seed".into());

        match RuleKind::from_name(&self.optimizer.rule) {
            None => check(
                false,
                format!(
                    "optimizer.rule: unknown rule {:?}, expected one of sgdm, rmsprop, adam, amsgrad, radam",
                    self.optimizer.rule
                ),
            ),
            Some(_) => {
                if let Err(e) = self.rule().validate() {
                    check(false, format!("optimizer: {e}"));
                }
            }
        }
        if let Some(lr) = self.optimizer.learning_rate {
            check(
                lr > 0.0 && lr.is_finite(),
                format!("optimizer.learning_rate: must be > 0, got {lr}"),
            );
        }

        if let Some(p_sd) = self.regularizers.standard_dropout {
            check(
                p_sd > 0.0 && p_sd <= 1.0,
                format!("regularizers.standard_dropout: must lie in (0, 1], got {p_sd}"),
            );
        }
        if let Some(q) = self.regularizers.noisy_label {
            check(
                unit_closed(q),
                format!("regularizers.noisy_label: must lie in [0, 1], got {q}"),
            );
        }
        if let Some(n) = self.regularizers.noisy_gradient {
            check(
                n.variance >= 0.0 && n.decay >= 0.0,
                "regularizers.noisy_gradient: variance and decay must be >= 0".into(),
            );
        }
        if let Err(e) = self.arms() {
            check(false, e);
        }

        if let Err(e) = self.hidden_sizes() {
            check(false, e);
        }
        match self.problem {
            Problem::Synth => {
                let s = &self.synth;
                check(s.classes >= 2, "synth.classes: must be >= 2".into());
                check(s.dims >= 2, "synth.dims: must be >= 2".into());
                check(
                    s.per_class >= 1 && s.test_per_class >= 1,
                    "synth.per_class, synth.test_per_class: must be >= 1".into(),
                );
                check(s.spread >= 0.0, format!("synth.spread: must be >= 0, got {}", s.spread));
            }
            Problem::Mnist => {
                check(
                    self.data.train_subset != Some(0),
                    "data.train_subset: must be >= 1".into(),
                );
                check(
                    self.data.test_subset != Some(0),
                    "data.test_subset: must be >= 1".into(),
                );
                if let Some(s) = self.data.standardize {
                    check(s.std > 0.0, format!("data.standardize.std: must be > 0, got {}", s.std));
                }
            }
            Problem::Toy => {
                let t = &self.toy;
                check(t.record_every >= 1, "toy.record_every: must be >= 1".into());
                check(t.grid >= 1 || t.inits.is_some(), "toy.grid: must be >= 1".into());
                check(
                    t.success_radius > 0.0,
                    format!("toy.success_radius: must be > 0, got {}", t.success_radius),
                );
                if let Some(inits) = &t.inits {
                    check(!inits.is_empty(), "toy.inits: must not be empty".into());
                }
            }
        }
        p
    }

    pub fn rule_kind(&self) -> RuleKind {
        RuleKind::from_name(&self.optimizer.rule).unwrap_or(RuleKind::Adam)
    }

    pub fn rule(&self) -> OptimizerRule {
        let kind = self.rule_kind();
        let d = OptimizerRule::default_for(kind);
        let o = &self.optimizer;
        if o.beta1.is_none() && o.beta2.is_none() && o.eps.is_none() {
            return d;
        }
        OptimizerRule::with_betas(
            kind,
            o.beta1.unwrap_or(d.beta),
            o.beta2.unwrap_or(d.beta2),
            o.eps.unwrap_or(d.eps),
        )
    }

    pub fn learning_rate(&self) -> f64 {
        self.optimizer.learning_rate.unwrap_or(match self.problem {
            Problem::Toy => TOY_LEARNING_RATE,
            _ => self.rule_kind().default_learning_rate(),
        })
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::step_decay(self.lr_milestones.clone())
    }

    pub fn hidden_sizes(&self) -> std::result::Result<Vec<usize>, String> {
        let hidden = match (&self.model.hidden, &self.model.preset) {
            (Some(h), _) => h.clone(),
            (None, Some(name)) => {
                let preset = preset_by_name(name).ok_or_else(|| {
                    format!("model.preset: unknown preset {name:?}, expected mnist-reduced or mnist-paper")
                })?;
                let sizes = preset.sizes();
                sizes[1..sizes.len() - 1].to_vec()
            }
            (None, None) => return Err("model: set preset or hidden".into()),
        };
        if hidden.contains(&0) {
            return Err("model.hidden: widths must be >= 1".into());
        }
        Ok(hidden)
    }

    /// Arms in spec order.
    pub fn arms(&self) -> std::result::Result<Vec<Arm>, String> {
        let names = match &self.arms {
            Some(names) if names.is_empty() => return Err("arms: must not be empty".into()),
            Some(names) => names.clone(),
            None => self.default_arm_names(),
        };
        let mut arms = Vec::with_capacity(names.len());
        for name in &names {
            let arm = self.parse_arm(name)?;
            if arms.iter().any(|a: &Arm| a.label == arm.label) {
                return Err(format!("arms: duplicate arm {name:?}"));
            }
            arms.push(arm);
        }
        Ok(arms)
    }

    fn default_arm_names(&self) -> Vec<String> {
        let mut names = vec!["base".to_string(), "lrd".to_string()];
        if self.problem == Problem::Toy {
            return names;
        }
        let r = &self.regularizers;
        for (token, on) in [
            ("sd", r.standard_dropout.is_some()),
            ("nl", r.noisy_label.is_some()),
            ("ng", r.noisy_gradient.is_some()),
        ] {
            if on {
                names.push(token.to_string());
                names.push(format!("lrd+{token}"));
            }
        }
        names
    }

    pub fn parse_arm(&self, name: &str) -> std::result::Result<Arm, String> {
        let mut arm = Arm {
            label: String::new(),
            variant: Variant::None,
            keep_prob: self.keep_prob,
            standard_dropout: None,
            noisy_label: None,
            noisy_gradient: None,
            param_value: None,
        };
        let r = &self.regularizers;
        for token in name.split('+').map(str::trim) {
            let bad = || format!("arms: cannot parse {name:?}");
            match token.to_ascii_lowercase().as_str() {
                "base" | "none" => {}
                "lrd" | "dg" if arm.variant != Variant::None => {
                    return Err(format!("arms: {name:?} combines lrd and dg"))
                }
                "lrd" => arm.variant = Variant::Lrd,
                "dg" => arm.variant = Variant::DropGradient,
                "sd" => arm.standard_dropout = Some(r.standard_dropout.unwrap_or(DEFAULT_STANDARD_DROPOUT)),
                "nl" => arm.noisy_label = Some(r.noisy_label.unwrap_or(DEFAULT_NOISY_LABEL)),
                "ng" => {
                    let n = r.noisy_gradient.unwrap_or_default();
                    arm.noisy_gradient = Some(NoisyGradient {
                        variance: n.variance,
                        decay: n.decay,
                    });
                }
                _ => return Err(bad()),
            }
        }
        if self.problem == Problem::Toy && (arm.standard_dropout.is_some() || arm.noisy_label.is_some()) {
            return Err(format!(
                "arms: {name:?} uses a classification-only regularizer on the toy problem"
            ));
        }
        arm.label = self.arm_label(&arm);
        Ok(arm)
    }

    /// `Adam`, `Adam_LRD`, `Adam_LRD_SD`, `Adam_DG`, ...
    pub fn arm_label(&self, arm: &Arm) -> String {
        let mut label = self.rule_kind().label().to_string();
        match arm.variant {
            Variant::None => {}
            Variant::Lrd => label.push_str("_LRD"),
            Variant::DropGradient => label.push_str("_DG"),
        }
        for (suffix, on) in [
            ("_SD", arm.standard_dropout.is_some()),
            ("_NL", arm.noisy_label.is_some()),
            ("_NG", arm.noisy_gradient.is_some()),
        ] {
            if on {
                label.push_str(suffix);
            }
        }
        label
    }
}

pub fn preset_by_name(name: &str) -> Option<MlpPreset> {
    match name {
        "mnist-reduced" => Some(MlpPreset::MnistReduced),
        "mnist-paper" => Some(MlpPreset::MnistPaper),
        _ => None,
    }
}
