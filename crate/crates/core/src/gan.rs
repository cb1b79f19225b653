//! Consistent toy restoration GANs.
//!
//! The generator maps `(y, z)` to the free coordinate; the estimate is `(y, g(y, z))`,
//! so consistency holds by construction. The critic sees 2D points only. Training
//! alternates one critic step and one generator step with the non-saturating loss
//! and an R1 penalty on real samples; robust variants add `λ_R` times the mean
//! attacked objective, with the attack's `δ*` held fixed when differentiating.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::adversarial::{neural_attack, AttackConfig};
use crate::distributions::{fmt17, Point2, SampleSet, ToyDistribution};
use crate::estimators::Estimator;
use crate::evaluation::{evaluate_on, EvalConfig, Evaluation, ReferenceSet};
use crate::nn::{AdamConfig, AdamState, MlpParams};
use crate::rng::{self, Stream};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig<T> {
    pub total_steps: usize,
    pub batch_size: usize,
    pub generator_lr: T,
    pub critic_lr: T,
    pub adam_betas: (T, T),
    pub r1_gamma: T,
    #[serde(rename = "lambda_R")]
    pub lambda_r: T,
    pub stochastic: bool,
    pub seed_dim: usize,
    /// Attack used inside the robust loss.
    pub attack: AttackConfig<T>,
    /// The robust term is added on steps divisible by this period.
    pub robust_loss_period: usize,
    pub train_size: usize,
    pub val_size: usize,
    /// Hidden widths, shared by generator and critic.
    pub hidden: Vec<usize>,
    pub target: ToyDistribution<T>,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    /// Full toy setting: four hidden layers of 512, 20000 steps.
    pub fn full() -> Self {
        Self {
            total_steps: 20_000,
            batch_size: 128,
            generator_lr: T::lit(1e-4),
            critic_lr: T::lit(1e-4),
            adam_betas: (T::zero(), T::lit(0.9)),
            r1_gamma: T::lit(10.0),
            lambda_r: T::zero(),
            stochastic: false,
            seed_dim: 1,
            attack: AttackConfig::toy(),
            robust_loss_period: 1,
            train_size: 100_000,
            val_size: 10_000,
            hidden: vec![512; 4],
            target: ToyDistribution::UnitDisk,
            seed: 0,
        }
    }

    /// Desk-scale setting: widths 128, 4000 steps. The training-time attack averages
    /// over 8 seed realizations instead of 50.
    pub fn reduced() -> Self {
        let mut c = Self::full();
        c.total_steps = 4000;
        c.hidden = vec![128; 4];
        c.attack.n_seeds = 8;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::invalid("total_steps and batch_size must be at least 1"));
        }
        if !(self.lambda_r.is_finite() && self.lambda_r >= T::zero()) {
            return Err(Error::invalid("lambda_R must be finite and non-negative"));
        }
        if !(self.r1_gamma.is_finite() && self.r1_gamma >= T::zero()) {
            return Err(Error::invalid("r1_gamma must be finite and non-negative"));
        }
        if !pos(self.generator_lr) || !pos(self.critic_lr) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        if !(b1 >= T::zero() && b1 < T::one() && b2 >= T::zero() && b2 < T::one()) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.seed_dim == 0 || self.robust_loss_period == 0 {
            return Err(Error::invalid("seed_dim and robust_loss_period must be at least 1"));
        }
        if self.train_size < self.batch_size || self.val_size == 0 {
            return Err(Error::invalid("training set must hold at least one batch"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        self.attack.validate()
    }

    pub fn generator_sizes(&self) -> Vec<usize> {
        let mut s = vec![1 + self.seed_dim];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![2];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    pub fn training_set(&self) -> Result<SampleSet<T>> {
        self.target.sample(self.train_size, rng::labeled(self.seed, "train-set"))
    }

    pub fn validation_set(&self) -> Result<SampleSet<T>> {
        self.target.sample(self.val_size, rng::labeled(self.seed, "val-set"))
    }
}

/// Per-step training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow<T> {
    pub step: usize,
    pub gen_loss: T,
    pub critic_loss: T,
    pub r1: T,
    pub robust_loss: T,
}

#[derive(Debug, Clone)]
pub struct TrainedPair<T> {
    pub generator: MlpParams<T>,
    pub critic: MlpParams<T>,
    pub stochastic: bool,
    pub seed_dim: usize,
    pub history: Vec<HistoryRow<T>>,
}

impl<T: Scalar> TrainedPair<T> {
    pub fn estimator(&self) -> Result<Estimator<T>> {
        Estimator::neural(self.generator.clone(), self.stochastic, self.seed_dim)
    }

    /// `(y, g(y, z))`; `z` is ignored (pinned to 0) for deterministic pairs.
    pub fn generate(&self, y: T, z: &[T]) -> Result<Point2<T>> {
        generate(&self.generator, y, z, self.stochastic)
    }

    /// History as CSV with header `step,gen_loss,critic_loss,r1,robust_loss`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "gen_loss", "critic_loss", "r1", "robust_loss"])?;
        for h in &self.history {
            w.write_record([
                h.step.to_string(),
                fmt17(h.gen_loss),
                fmt17(h.critic_loss),
                fmt17(h.r1),
                fmt17(h.robust_loss),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(y, g(y, z))`, with `z` replaced by zeros when `stochastic` is false.
pub fn generate<T: Scalar>(generator: &MlpParams<T>, y: T, z: &[T], stochastic: bool) -> Result<Point2<T>> {
    if z.len() + 1 != generator.input_dim() || generator.output_dim() != 1 {
        return Err(Error::invalid("generator must map (y, z) to one value"));
    }
    let mut input = vec![y];
    if stochastic {
        input.extend_from_slice(z);
    } else {
        input.extend(std::iter::repeat_n(T::zero(), z.len()));
    }
    Ok(Point2::new(y, generator.forward(&input)?.0[0]))
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn points_matrix<T: Scalar>(points: &[Point2<T>]) -> Array2<T> {
    let mut m = Array2::zeros((points.len(), 2));
    for (i, p) in points.iter().enumerate() {
        m[[i, 0]] = p.x1;
        m[[i, 1]] = p.x2;
    }
    m
}

fn check_critic<T: Scalar>(critic: &MlpParams<T>) -> Result<()> {
    if critic.input_dim() != 2 || critic.output_dim() != 1 {
        return Err(Error::invalid("critic must map 2D points to one value"));
    }
    Ok(())
}

/// Mean of `softplus(−D(fake))`.
pub fn generator_loss<T: Scalar>(critic: &MlpParams<T>, fake: &[Point2<T>]) -> Result<T> {
    check_critic(critic)?;
    if fake.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let d = critic.predict_batch(points_matrix(fake).view())?;
    Ok(d.iter().fold(T::zero(), |a, &v| a + softplus(-v)) / T::from_count(fake.len()))
}

/// Components of the critic objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss<T> {
    /// `mean softplus(−D(real)) + mean softplus(D(fake))`.
    pub adversarial: T,
    /// `(γ/2)·mean ‖∇ₓD(real)‖²`.
    pub r1: T,
}

impl<T: Scalar> CriticLoss<T> {
    pub fn total(&self) -> T {
        self.adversarial + self.r1
    }
}

/// Critic objective with R1 penalty on the real batch.
pub fn critic_loss<T: Scalar>(
    critic: &MlpParams<T>,
    real: &[Point2<T>],
    fake: &[Point2<T>],
    r1_gamma: T,
) -> Result<T> {
    Ok(critic_loss_grad(critic, points_matrix(real).view(), points_matrix(fake).view(), r1_gamma)?
        .0
        .total())
}

/// Critic objective and its parameter gradient.
pub fn critic_loss_grad<T: Scalar>(
    critic: &MlpParams<T>,
    real: ArrayView2<T>,
    fake: ArrayView2<T>,
    r1_gamma: T,
) -> Result<(CriticLoss<T>, MlpParams<T>)> {
    check_critic(critic)?;
    if real.nrows() == 0 || fake.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let nr = T::from_count(real.nrows());
    let nf = T::from_count(fake.nrows());
    let (dr, tr) = critic.forward_batch(real)?;
    let (df, tf) = critic.forward_batch(fake)?;
    let mut adv = T::zero();
    let gr = dr.mapv(|v| {
        adv += softplus(-v) / nr;
        -sigmoid(-v) / nr
    });
    let gf = df.mapv(|v| {
        adv += softplus(v) / nf;
        sigmoid(v) / nf
    });
    let (mut grads, _) = critic.backward_batch(&tr, gr.view())?;
    let (g2, _) = critic.backward_batch(&tf, gf.view())?;
    grads.add_scaled(&g2, T::one())?;
    // (γ/2)·mean‖∇‖² = (γ/n)·Σ ½‖∇‖²
    let scale = r1_gamma / nr;
    let (pen, g3, _) = critic.r1_batch(&tr, scale)?;
    grads.add_scaled(&g3, T::one())?;
    let r1 = pen.sum() * scale;
    Ok((CriticLoss { adversarial: adv, r1 }, grads))
}

/// Shuffled-epoch index stream over `n` items.
struct EpochSampler {
    n: usize,
    order: Vec<usize>,
    pos: usize,
    rng: Stream,
}

impl EpochSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed);
        let order = rng::permutation(&mut rng, n);
        Self { n, order, pos: 0, rng }
    }

    fn next_batch(&mut self, b: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.pos == self.n {
                self.order = rng::permutation(&mut self.rng, self.n);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

struct Trainer<T: Scalar> {
    cfg: TrainConfig<T>,
    generator: MlpParams<T>,
    critic: MlpParams<T>,
    gen_opt: AdamState<T>,
    critic_opt: AdamState<T>,
    train: SampleSet<T>,
    real_sampler: EpochSampler,
    y_sampler: EpochSampler,
    z_rng: Stream,
}

impl<T: Scalar> Trainer<T> {
    fn new(cfg: &TrainConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let generator = MlpParams::init_with_biases(&cfg.generator_sizes(), rng::labeled(cfg.seed, "gen-init"))?;
        let critic = MlpParams::init_with_biases(&cfg.critic_sizes(), rng::labeled(cfg.seed, "critic-init"))?;
        let (b1, b2) = cfg.adam_betas;
        let gen_opt = AdamState::new(&generator, AdamConfig::new(cfg.generator_lr, b1, b2));
        let critic_opt = AdamState::new(&critic, AdamConfig::new(cfg.critic_lr, b1, b2));
        let train = cfg.training_set()?;
        Ok(Self {
            real_sampler: EpochSampler::new(train.len(), rng::labeled(cfg.seed, "real-order")),
            y_sampler: EpochSampler::new(train.len(), rng::labeled(cfg.seed, "y-order")),
            z_rng: rng::stream(rng::labeled(cfg.seed, "z")),
            cfg: cfg.clone(),
            generator,
            critic,
            gen_opt,
            critic_opt,
            train,
        })
    }

    /// Generator input batch `[y, z]` for the next training ys.
    fn generator_batch(&mut self) -> Array2<T> {
        let b = self.cfg.batch_size;
        let idx = self.y_sampler.next_batch(b);
        let mut x = Array2::zeros((b, 1 + self.cfg.seed_dim));
        for (r, &i) in idx.iter().enumerate() {
            x[[r, 0]] = self.train.points()[i].x1;
            if self.cfg.stochastic {
                for j in 0..self.cfg.seed_dim {
                    x[[r, 1 + j]] = rng::unit(&mut self.z_rng);
                }
            }
        }
        x
    }

    fn critic_step(&mut self) -> Result<CriticLoss<T>> {
        let idx = self.real_sampler.next_batch(self.cfg.batch_size);
        let real: Vec<Point2<T>> = idx.iter().map(|&i| self.train.points()[i]).collect();
        let gx = self.generator_batch();
        let g = self.generator.predict_batch(gx.view())?;
        let mut fake = Array2::zeros((gx.nrows(), 2));
        fake.column_mut(0).assign(&gx.column(0));
        fake.column_mut(1).assign(&g.column(0));
        let (loss, grads) =
            critic_loss_grad(&self.critic, points_matrix(&real).view(), fake.view(), self.cfg.r1_gamma)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    fn generator_step(&mut self, step: usize) -> Result<(T, T)> {
        let gx = self.generator_batch();
        let b = T::from_count(gx.nrows());
        let (g, g_trace) = self.generator.forward_batch(gx.view())?;
        let mut fake = Array2::zeros((gx.nrows(), 2));
        fake.column_mut(0).assign(&gx.column(0));
        fake.column_mut(1).assign(&g.column(0));
        let (d, d_trace) = self.critic.forward_batch(fake.view())?;
        let mut loss = T::zero();
        let dd = d.mapv(|v| {
            loss += softplus(-v) / b;
            -sigmoid(-v) / b
        });
        let d_in = self.critic.input_grad_batch(&d_trace, dd.view())?;
        let out_grad = d_in.column(1).to_owned().insert_axis(ndarray::Axis(1));
        let (mut grads, _) = self.generator.backward_batch(&g_trace, out_grad.view())?;

        let mut robust = T::zero();
        let lambda = self.cfg.lambda_r;
        if lambda > T::zero() && step.is_multiple_of(self.cfg.robust_loss_period) {
            let (value, rg) = self.robust_term(&gx, step)?;
            robust = value;
            grads.add_scaled(&rg, lambda)?;
        }
        self.gen_opt.step(&mut self.generator, &grads)?;
        Ok((loss, robust))
    }

    /// Batch-mean attacked objective and its parameter gradient with `δ*` fixed.
    fn robust_term(&self, gx: &Array2<T>, step: usize) -> Result<(T, MlpParams<T>)> {
        let cfg = &self.cfg;
        let ys: Vec<T> = gx.column(0).to_vec();
        let step_seed = rng::child(rng::labeled(cfg.seed, "robust"), step as u64);
        let input_seeds: Vec<u64> = (0..ys.len() as u64).map(|i| rng::child(step_seed, i)).collect();
        let n_seeds = if cfg.stochastic { cfg.attack.n_seeds } else { 1 };
        let channels: Vec<Vec<Vec<T>>> = input_seeds
            .iter()
            .map(|&s| {
                if cfg.stochastic {
                    let base = rng::labeled(s, "attack-z");
                    (0..n_seeds as u64)
                        .map(|k| {
                            let mut r = rng::stream(rng::child(base, k));
                            (0..cfg.seed_dim).map(|_| rng::unit(&mut r)).collect()
                        })
                        .collect()
                } else {
                    vec![vec![T::zero(); cfg.seed_dim]]
                }
            })
            .collect();
        let (problem, outcomes) = neural_attack(&self.generator, &ys, &channels, &input_seeds, &cfg.attack)?;
        let deltas: Vec<T> = outcomes.iter().map(|o| o.delta).collect();
        let value = outcomes.iter().fold(T::zero(), |a, o| a + o.objective) / T::from_count(ys.len());

        let shifted = problem.shifted_input(&deltas);
        let (moved, t_moved) = self.generator.forward_batch(shifted.view())?;
        let (base, t_base) = self.generator.forward_batch(problem.base_input().view())?;
        let scale = T::lit(2.0) / T::from_count(ys.len() * problem.per_input());
        let up = (&moved - &base) * scale;
        let down = up.mapv(|v| -v);
        let (mut grads, _) = self.generator.backward_batch(&t_moved, up.view())?;
        let (g2, _) = self.generator.backward_batch(&t_base, down.view())?;
        grads.add_scaled(&g2, T::one())?;
        Ok((value, grads))
    }

    fn dump(&self, step: usize, row: &HistoryRow<T>) -> String {
        format!(
            "step {step}: gen_loss={} critic_loss={} r1={} robust_loss={}; \
             |generator|_max={} |critic|_max={} generator_finite={} critic_finite={}",
            row.gen_loss,
            row.critic_loss,
            row.r1,
            row.robust_loss,
            self.generator.max_abs(),
            self.critic.max_abs(),
            self.generator.all_finite(),
            self.critic.all_finite(),
        )
    }
}

/// Trains a generator/critic pair. Bit-reproducible from `cfg`.
///
/// Any non-finite loss or parameter aborts with [`Error::Divergence`].
pub fn train<T: Scalar>(cfg: &TrainConfig<T>) -> Result<TrainedPair<T>> {
    train_with(cfg, |_| {})
}

/// As [`train`], calling `progress` after every step.
pub fn train_with<T: Scalar>(
    cfg: &TrainConfig<T>,
    mut progress: impl FnMut(&HistoryRow<T>),
) -> Result<TrainedPair<T>> {
    let mut tr = Trainer::new(cfg)?;
    let mut history = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let c = tr.critic_step()?;
        let (gen_loss, robust_loss) = tr.generator_step(step)?;
        let row = HistoryRow {
            step,
            gen_loss,
            critic_loss: c.total(),
            r1: c.r1,
            robust_loss,
        };
        let finite = [gen_loss, row.critic_loss, row.r1, robust_loss].iter().all(|v| v.is_finite())
            && tr.generator.all_finite()
            && tr.critic.all_finite();
        if !finite {
            return Err(Error::Divergence {
                step,
                detail: tr.dump(step, &row),
            });
        }
        progress(&row);
        history.push(row);
    }
    Ok(TrainedPair {
        generator: tr.generator,
        critic: tr.critic,
        stochastic: cfg.stochastic,
        seed_dim: cfg.seed_dim,
        history,
    })
}

/// Evaluates a trained pair on `eval.n_eval` inputs drawn from the validation set.
pub fn evaluate<T: Scalar>(
    pair: &TrainedPair<T>,
    train_cfg: &TrainConfig<T>,
    eval: &EvalConfig<T>,
    data_seed: u64,
) -> Result<Evaluation<T>> {
    eval.validate()?;
    let val = train_cfg.validation_set()?;
    if val.len() < eval.n_eval {
        return Err(Error::invalid("validation set smaller than n_eval"));
    }
    let mut r = rng::stream(rng::labeled(data_seed, "val-inputs"));
    let ys: Vec<T> = rng::permutation(&mut r, val.len())[..eval.n_eval]
        .iter()
        .map(|&i| val.points()[i].x1)
        .collect();
    let real = match eval.reference {
        ReferenceSet::Fresh => train_cfg
            .target
            .sample(eval.n_eval, rng::labeled(data_seed, "eval-real"))?,
        ReferenceSet::Training => {
            let train = train_cfg.training_set()?;
            let mut r = rng::stream(rng::labeled(data_seed, "train-subset"));
            let pts = rng::permutation(&mut r, train.len())[..eval.n_eval]
                .iter()
                .map(|&i| train.points()[i])
                .collect();
            SampleSet::new(pts, "training")?
        }
    };
    evaluate_on(&pair.estimator()?, &train_cfg.target, real, ys, eval, data_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig<f64> {
        TrainConfig {
            total_steps: 30,
            batch_size: 16,
            hidden: vec![8, 8],
            train_size: 256,
            val_size: 64,
            ..TrainConfig::reduced()
        }
    }

    #[test]
    fn loss_values() {
        let zero = MlpParams::<f64>::zeros(&[2, 4, 1]).unwrap();
        let pts = vec![Point2::new(0.1, 0.2), Point2::new(-0.5, 0.3)];
        let l = generator_loss(&zero, &pts).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let c = critic_loss(&zero, &pts, &pts, 10.0).unwrap();
        assert!((c - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(-1.0f64) - 0.313_261_687_518_222_8).abs() < 1e-15);
        assert!(softplus(1000.0f64).is_finite() && softplus(-1000.0f64) >= 0.0);
    }

    #[test]
    fn generate_is_consistent() {
        let g = MlpParams::<f64>::init(&[2, 8, 1], 1).unwrap();
        let a = generate(&g, 0.3, &[0.1], false).unwrap();
        let b = generate(&g, 0.3, &[0.9], false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x1, 0.3);
        let z = MlpParams::<f64>::zeros(&[2, 8, 1]).unwrap();
        assert_eq!(generate(&z, 0.4, &[0.5], true).unwrap(), Point2::new(0.4, 0.0));
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let mut c = tiny();
        c.lambda_r = 0.1;
        c.stochastic = true;
        let a = train(&c).unwrap();
        let b = train(&c).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.critic, b.critic);
        assert_eq!(a.history.len(), 30);
        assert!(a.history.iter().all(|h| h.robust_loss > 0.0));
        let mut csv = Vec::new();
        a.write_history_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,gen_loss,critic_loss,r1,robust_loss\n"));
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.lambda_r = -1.0;
        assert!(c.validate().is_err());
        c = tiny();
        c.total_steps = 0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::<f64>::full().validate().is_ok());
        assert_eq!(TrainConfig::<f64>::full().generator_sizes(), vec![2, 512, 512, 512, 512, 1]);
    }
}
