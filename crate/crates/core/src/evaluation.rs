//! Evaluation protocol shared by analytic and learned estimators.

use serde::{Deserialize, Serialize};

use crate::adversarial::{find_attacks, AttackConfig};
use crate::distributions::{SampleSet, ToyDistribution};
use crate::estimators::Estimator;
use crate::metrics::{self, MetricsReport, DEFAULT_ASSIGNMENT_CAP};
use crate::rng;
use crate::{Error, Result, Scalar};

/// Where the reference ("real") samples for precision/recall come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSet {
    /// Fresh draws from the true distribution.
    #[default]
    Fresh,
    /// The training set the model was fit on (learned estimators only).
    Training,
}

/// How evaluation inputs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputDistribution {
    /// `y = x1` of fresh samples (the observation marginal).
    #[default]
    Marginal,
    /// Uniform over the observed coordinate's range.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig<T> {
    pub n_eval: usize,
    pub k: usize,
    pub attack: AttackConfig<T>,
    /// Inputs attacked for the robustness estimate (a prefix of the evaluation inputs).
    pub n_robust_inputs: usize,
    pub n_std_inputs: usize,
    pub n_std_seeds: usize,
    pub reference: ReferenceSet,
    pub inputs: InputDistribution,
    pub with_w2: bool,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            n_eval: 1000,
            k: 5,
            attack: AttackConfig::toy(),
            n_robust_inputs: 1000,
            n_std_inputs: 100,
            n_std_seeds: 32,
            reference: ReferenceSet::Fresh,
            inputs: InputDistribution::Marginal,
            with_w2: true,
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_eval <= self.k {
            return Err(Error::invalid("need k ≥ 1 and n_eval > k"));
        }
        if self.n_robust_inputs == 0 || self.n_robust_inputs > self.n_eval {
            return Err(Error::invalid("n_robust_inputs must lie in 1..=n_eval"));
        }
        if self.n_std_inputs == 0 || self.n_std_inputs > self.n_eval || self.n_std_seeds < 2 {
            return Err(Error::invalid("need 1..=n_eval std inputs and at least two std seeds"));
        }
        if self.with_w2 && self.n_eval > DEFAULT_ASSIGNMENT_CAP {
            return Err(Error::ResourceLimit {
                what: "exact W2 sample size",
                size: self.n_eval,
                cap: DEFAULT_ASSIGNMENT_CAP,
            });
        }
        self.attack.validate()
    }
}

/// A report together with the point sets it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub report: MetricsReport,
    pub real: SampleSet<T>,
    pub outputs: SampleSet<T>,
    pub robust_inputs: Vec<T>,
    /// Per-input attack objectives, same order as `robust_inputs`.
    pub attack_objectives: Vec<T>,
}

impl<T: Scalar> Evaluation<T> {
    /// `√R̃`, the square-rooted robustness scale.
    pub fn robustness_sqrt(&self) -> f64 {
        self.report.robustness_practical.sqrt()
    }
}

/// Draws `cfg.n_eval` inputs for `target`.
pub fn eval_inputs<T: Scalar>(
    target: &ToyDistribution<T>,
    how: InputDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<T>> {
    match how {
        InputDistribution::Marginal => target.sample_observations(n, seed),
        InputDistribution::Uniform => {
            let (lo, hi) = target.x1_range();
            let mut r = rng::stream(seed);
            Ok((0..n).map(|_| rng::uniform(&mut r, lo, hi)).collect())
        }
    }
}

/// Evaluates `est` against fresh reference samples of `target`.
pub fn evaluate_estimator<T: Scalar>(
    est: &Estimator<T>,
    target: &ToyDistribution<T>,
    cfg: &EvalConfig<T>,
    seed: u64,
) -> Result<Evaluation<T>> {
    cfg.validate()?;
    let real = target.sample(cfg.n_eval, rng::labeled(seed, "eval-real"))?;
    evaluate_against(est, target, real, cfg, seed)
}

/// Evaluates `est` with an explicit reference set (must have `cfg.n_eval` points).
///
/// Outputs use one seed per input. Robustness is the mean attacked objective over
/// the first `n_robust_inputs` inputs; per-input std is averaged over the first
/// `n_std_inputs`.
pub fn evaluate_against<T: Scalar>(
    est: &Estimator<T>,
    target: &ToyDistribution<T>,
    real: SampleSet<T>,
    cfg: &EvalConfig<T>,
    seed: u64,
) -> Result<Evaluation<T>> {
    cfg.validate()?;
    if real.len() != cfg.n_eval {
        return Err(Error::invalid(format!(
            "reference set has {} points, expected {}",
            real.len(),
            cfg.n_eval
        )));
    }
    let ys = eval_inputs(target, cfg.inputs, cfg.n_eval, rng::labeled(seed, "eval-inputs"))?;
    evaluate_on(est, target, real, ys, cfg, seed)
}

/// Evaluates `est` on explicit inputs and reference set (both of size `cfg.n_eval`).
pub fn evaluate_on<T: Scalar>(
    est: &Estimator<T>,
    target: &ToyDistribution<T>,
    real: SampleSet<T>,
    ys: Vec<T>,
    cfg: &EvalConfig<T>,
    seed: u64,
) -> Result<Evaluation<T>> {
    cfg.validate()?;
    if real.len() != cfg.n_eval || ys.len() != cfg.n_eval {
        return Err(Error::invalid("reference set and inputs must both have n_eval entries"));
    }
    let out_seed = rng::labeled(seed, "eval-outputs");
    let seeds: Vec<u64> = (0..ys.len() as u64).map(|i| rng::child(out_seed, i)).collect();
    let outputs = SampleSet::new(est.estimate_many(&ys, &seeds)?, "outputs")?;

    let (precision, recall) = metrics::precision_recall(&real, &outputs, cfg.k)?;
    let w2 = if cfg.with_w2 {
        Some(metrics::wasserstein2_exact(&real, &outputs)?.to_f64_lossy())
    } else {
        None
    };

    let robust_inputs = ys[..cfg.n_robust_inputs].to_vec();
    let attacks = find_attacks(est, &robust_inputs, &cfg.attack, rng::labeled(seed, "eval-attack"))?;
    let n_rob = T::from_count(attacks.len());
    let robustness = attacks.iter().fold(T::zero(), |a, o| a + o.objective) / n_rob;

    let (lo, hi) = target.x1_range();
    let peak = hi - lo;
    let mut psnr_sum = T::zero();
    let mut psnr_n = 0usize;
    for (&y, o) in robust_inputs.iter().zip(&attacks) {
        let v = metrics::psnr(&[y], &[y + o.delta], peak)?;
        if v.is_finite() {
            psnr_sum += v;
            psnr_n += 1;
        }
    }
    let ai_psnr = (psnr_n > 0).then(|| (psnr_sum / T::from_count(psnr_n)).to_f64_lossy());

    let std_seed = rng::labeled(seed, "eval-std");
    let mut std_sum = T::zero();
    for (i, &y) in ys[..cfg.n_std_inputs].iter().enumerate() {
        std_sum += metrics::per_input_std(est, y, cfg.n_std_seeds, rng::child(std_seed, i as u64))?;
    }
    let per_input_std = std_sum / T::from_count(cfg.n_std_inputs);

    let consistency = metrics::consistency_error(est, &ys, rng::labeled(seed, "eval-consistency"))?;

    let report = MetricsReport {
        precision: precision.to_f64_lossy(),
        recall: recall.to_f64_lossy(),
        w2,
        robustness_practical: robustness.to_f64_lossy(),
        per_input_std: per_input_std.to_f64_lossy(),
        consistency_error: consistency.to_f64_lossy(),
        ai_psnr,
    };
    report.validate()?;
    Ok(Evaluation {
        report,
        real,
        outputs,
        robust_inputs,
        attack_objectives: attacks.iter().map(|o| o.objective).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> EvalConfig<f64> {
        EvalConfig {
            n_robust_inputs: 50,
            n_std_inputs: 20,
            with_w2: false,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn posterior_reference_quality() {
        let ev = evaluate_estimator(&Estimator::disk_posterior(), &ToyDistribution::UnitDisk, &quick(), 1)
            .unwrap();
        assert!(ev.report.precision >= 0.95 && ev.report.recall >= 0.95, "{:?}", ev.report);
        assert_eq!(ev.report.consistency_error, 0.0);
        assert!(ev.report.per_input_std > 0.3);
    }

    #[test]
    fn deterministic_has_zero_std_and_is_reproducible() {
        let est = Estimator::sine(50.0);
        let a = evaluate_estimator(&est, &ToyDistribution::UnitDisk, &quick(), 4).unwrap();
        let b = evaluate_estimator(&est, &ToyDistribution::UnitDisk, &quick(), 4).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.per_input_std, 0.0);
        assert!(a.report.ai_psnr.unwrap() > 60.0);
    }

    #[test]
    fn config_checks() {
        let mut c = quick();
        c.k = 1000;
        assert!(c.validate().is_err());
        c = quick();
        c.n_robust_inputs = 0;
        assert!(c.validate().is_err());
        c = quick();
        c.n_eval = 5000;
        c.n_robust_inputs = 1;
        c.with_w2 = true;
        assert!(matches!(c.validate(), Err(Error::ResourceLimit { .. })));
        let real = ToyDistribution::<f64>::UnitDisk.sample(10, 0).unwrap();
        assert!(evaluate_against(&Estimator::sine(1.0), &ToyDistribution::UnitDisk, real, &quick(), 0).is_err());
    }
}
