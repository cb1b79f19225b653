//! Scenario configuration: a JSON document of optional overrides resolved against
//! built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use restoration_core::adversarial::{AttackConfig, AttackMethod};
use restoration_core::distributions::EllipseAnnulus;
use restoration_core::evaluation::{EvalConfig, InputDistribution, ReferenceSet};
use restoration_core::gan::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    AnalyticDemo,
    EllipseDemo,
    ZigzagSweep,
    BoundCheck,
    PosteriorCheck,
    ToyGan,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::AnalyticDemo,
        Scenario::EllipseDemo,
        Scenario::ZigzagSweep,
        Scenario::BoundCheck,
        Scenario::PosteriorCheck,
        Scenario::ToyGan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AnalyticDemo => "analytic-demo",
            Scenario::EllipseDemo => "ellipse-demo",
            Scenario::ZigzagSweep => "zigzag-sweep",
            Scenario::BoundCheck => "bound-check",
            Scenario::PosteriorCheck => "posterior-check",
            Scenario::ToyGan => "toy-gan",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| LabError::UnknownScenario(s.to_string()))
    }
}

/// Training scale for `toy-gan`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Reduced,
    Full,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackOverrides {
    pub epsilon: Option<f64>,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub adam_betas: Option<(f64, f64)>,
    pub n_seeds: Option<usize>,
    pub restarts: Option<usize>,
    pub method: Option<AttackMethod<f64>>,
}

impl AttackOverrides {
    fn apply(&self, a: &mut AttackConfig<f64>) {
        set(&mut a.epsilon, self.epsilon);
        set(&mut a.steps, self.steps);
        set(&mut a.step_size, self.step_size);
        set(&mut a.adam_betas, self.adam_betas);
        set(&mut a.n_seeds, self.n_seeds);
        set(&mut a.restarts, self.restarts);
        set(&mut a.method, self.method);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOverrides {
    pub n_eval: Option<usize>,
    pub k: Option<usize>,
    pub n_robust_inputs: Option<usize>,
    pub n_std_inputs: Option<usize>,
    pub n_std_seeds: Option<usize>,
    pub reference: Option<ReferenceSet>,
    pub inputs: Option<InputDistribution>,
    pub with_w2: Option<bool>,
}

/// The on-disk document. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    pub total_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub generator_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub adam_betas: Option<(f64, f64)>,
    pub r1_gamma: Option<f64>,
    #[serde(rename = "lambda_R")]
    pub lambda_r: Option<f64>,
    pub robust_loss_period: Option<usize>,
    pub train_size: Option<usize>,
    pub val_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub seed_dim: Option<usize>,
    /// Seed realizations of the attack inside the training loss (stochastic models).
    pub train_attack_seeds: Option<usize>,
    /// Applies to both the evaluation attack and the training-time attack.
    pub attack: Option<AttackOverrides>,
    pub eval: Option<EvalOverrides>,
    pub alphas: Option<Vec<f64>>,
    pub frequencies: Option<Vec<u32>>,
    pub n_samples: Option<usize>,
    pub n_inputs: Option<usize>,
    pub m: Option<usize>,
    pub ellipse: Option<EllipseAnnulus<f64>>,
}

/// Fully resolved settings; echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub preset: Preset,
    /// Template for the `toy-gan` grid; `lambda_R` is the robust members' weight.
    pub train: TrainConfig<f64>,
    pub eval: EvalConfig<f64>,
    pub alphas: Vec<f64>,
    pub frequencies: Vec<u32>,
    pub n_samples: usize,
    pub n_inputs: usize,
    pub m: usize,
    pub ellipse: EllipseAnnulus<f64>,
}

/// The reduced training preset used by default: the full preset shrunk to widths
/// 128 and 4000 steps. Both learning rates are raised to 10⁻³ and the robust members
/// use `lambda_R = 100` applied every third step, so the regularizer still has a
/// visible effect over the shorter schedule.
pub fn reduced_train_config() -> TrainConfig<f64> {
    let mut t = TrainConfig::reduced();
    t.generator_lr = 1e-3;
    t.critic_lr = 1e-3;
    t.lambda_r = 100.0;
    t.robust_loss_period = 3;
    t
}

impl Settings {
    pub fn defaults(preset: Preset) -> Self {
        let train = match preset {
            Preset::Reduced => reduced_train_config(),
            Preset::Full => TrainConfig {
                lambda_r: 0.1,
                ..TrainConfig::full()
            },
        };
        Self {
            preset,
            train,
            eval: EvalConfig::default(),
            alphas: vec![1.0, 50.0],
            frequencies: vec![1, 2, 4, 8, 16],
            n_samples: 2000,
            n_inputs: 100,
            m: 256,
            ellipse: EllipseAnnulus::preset(),
        }
    }

    pub fn resolve(file: &ConfigFile) -> Result<Self, String> {
        let mut s = Self::defaults(file.preset.unwrap_or_default());
        let t = &mut s.train;
        set(&mut t.total_steps, file.total_steps);
        set(&mut t.batch_size, file.batch_size);
        set(&mut t.generator_lr, file.generator_lr);
        set(&mut t.critic_lr, file.critic_lr);
        set(&mut t.adam_betas, file.adam_betas);
        set(&mut t.r1_gamma, file.r1_gamma);
        set(&mut t.lambda_r, file.lambda_r);
        set(&mut t.robust_loss_period, file.robust_loss_period);
        set(&mut t.train_size, file.train_size);
        set(&mut t.val_size, file.val_size);
        set(&mut t.hidden, file.hidden.clone());
        set(&mut t.seed_dim, file.seed_dim);
        if let Some(a) = &file.attack {
            a.apply(&mut t.attack);
            a.apply(&mut s.eval.attack);
        }
        set(&mut t.attack.n_seeds, file.train_attack_seeds);
        if let Some(e) = &file.eval {
            let ev = &mut s.eval;
            set(&mut ev.n_eval, e.n_eval);
            set(&mut ev.k, e.k);
            set(&mut ev.n_robust_inputs, e.n_robust_inputs);
            set(&mut ev.n_std_inputs, e.n_std_inputs);
            set(&mut ev.n_std_seeds, e.n_std_seeds);
            set(&mut ev.reference, e.reference);
            set(&mut ev.inputs, e.inputs);
            set(&mut ev.with_w2, e.with_w2);
        }
        set(&mut s.alphas, file.alphas.clone());
        set(&mut s.frequencies, file.frequencies.clone());
        set(&mut s.n_samples, file.n_samples);
        set(&mut s.n_inputs, file.n_inputs);
        set(&mut s.m, file.m);
        if let Some(g) = file.ellipse {
            s.ellipse = EllipseAnnulus::new(g.a_outer, g.b_outer, g.a_inner, g.b_inner)
                .map_err(|e| format!("ellipse: {e}"))?;
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), String> {
        self.train.validate().map_err(|e| format!("training: {e}"))?;
        self.eval.validate().map_err(|e| format!("eval: {e}"))?;
        if self.eval.n_eval > self.train.val_size {
            return Err("eval.n_eval exceeds val_size".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !a.is_finite()) {
            return Err("alphas must be a nonempty list of finite numbers".into());
        }
        if self.frequencies.is_empty() || self.frequencies.contains(&0) {
            return Err("frequencies must be a nonempty list of positive integers".into());
        }
        if self.n_samples < 2 || self.n_samples > restoration_core::metrics::DEFAULT_ASSIGNMENT_CAP {
            return Err("n_samples must lie in 2..=4096".into());
        }
        if self.n_inputs == 0 || self.m == 0 || self.m > restoration_core::metrics::DEFAULT_ASSIGNMENT_CAP {
            return Err("n_inputs must be positive and m must lie in 1..=4096".into());
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses a config document. Errors carry line/column or the offending key.
pub fn parse_config(text: &str) -> Result<Settings, String> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    Settings::resolve(&file)
}

/// Reads and resolves a config file; `None` gives all defaults.
pub fn load_config(path: Option<&Path>) -> Result<(Settings, String), LabError> {
    let Some(path) = path else {
        return Ok((Settings::resolve(&ConfigFile::default()).map_err(config_err(None))?, "{}".into()));
    };
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let settings = parse_config(&text).map_err(config_err(Some(path.to_path_buf())))?;
    Ok((settings, text))
}

fn config_err(path: Option<PathBuf>) -> impl Fn(String) -> LabError {
    move |message| LabError::Config {
        path: path.clone(),
        message,
    }
}
