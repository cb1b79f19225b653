//! Inner maximizations over input perturbations.
//!
//! The attacked quantity is the seed-shared output change
//! `E_Z ‖G(y, Z) − G(y + δ, Z)‖²` (or its un-squared variant for I-FGSM), maximized
//! over `|δ| ≤ ε`. Observations are scalar, so the ball is the interval `[−ε, ε]`,
//! further intersected with the estimator's domain.
//!
//! The objective has a minimum at `δ = 0`, where its gradient vanishes, so ascent
//! from zero never moves. Projected-Adam restarts therefore start on the sphere,
//! `δ₀ = ε·u` with `u` a random unit direction; the second restart uses `−u`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::estimators::{Estimator, EstimatorKind};
use crate::nn::{adam_update, AdamConfig, MlpParams};
use crate::rng;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod<T> {
    ProjectedAdam,
    Ifgsm { alpha: T },
}

/// Which norm of the output change is averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveNorm {
    Squared,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig<T> {
    pub epsilon: T,
    pub steps: usize,
    pub step_size: T,
    pub adam_betas: (T, T),
    /// Seed realizations per objective evaluation (stochastic estimators only).
    pub n_seeds: usize,
    /// Independent starts; the best final objective wins.
    pub restarts: usize,
    pub method: AttackMethod<T>,
}

impl<T: Scalar> AttackConfig<T> {
    /// Toy setting: ε = 10⁻³, four Adam steps of size 10⁻⁴ with betas (0.9, 0.999),
    /// 50 seed realizations.
    pub fn toy() -> Self {
        Self {
            epsilon: T::lit(1e-3),
            steps: 4,
            step_size: T::lit(1e-4),
            adam_betas: (T::lit(0.9), T::lit(0.999)),
            n_seeds: 50,
            restarts: 2,
            method: AttackMethod::ProjectedAdam,
        }
    }

    /// Image-scale setting (five Adam steps with learning rate 1, ten seeds, ε = 2.5
    /// for inpainting). Kept as a named preset only.
    pub fn image_inpainting() -> Self {
        Self {
            epsilon: T::lit(2.5),
            steps: 5,
            step_size: T::one(),
            adam_betas: (T::lit(0.9), T::lit(0.999)),
            n_seeds: 10,
            restarts: 1,
            method: AttackMethod::ProjectedAdam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fin_pos = |v: T| v.is_finite() && v > T::zero();
        if !(self.epsilon.is_finite() && self.epsilon >= T::zero()) {
            return Err(Error::invalid("epsilon must be finite and non-negative"));
        }
        if matches!(self.method, AttackMethod::ProjectedAdam) && !fin_pos(self.epsilon) {
            return Err(Error::invalid("projected Adam needs epsilon > 0"));
        }
        if self.steps == 0 || self.n_seeds == 0 || self.restarts == 0 {
            return Err(Error::invalid("steps, n_seeds and restarts must be at least 1"));
        }
        if !fin_pos(self.step_size) {
            return Err(Error::invalid("step size must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        let beta_ok = |b: T| b >= T::zero() && b < T::one();
        if !beta_ok(b1) || !beta_ok(b2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if let AttackMethod::Ifgsm { alpha } = self.method {
            if !(alpha.is_finite() && alpha >= T::zero()) {
                return Err(Error::invalid("I-FGSM alpha must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOutcome<T> {
    pub delta: T,
    pub objective: T,
}

/// Seeds averaged over for `est`: `n_seeds` children of `seed`, or the single zero
/// seed for deterministic estimators.
pub fn attack_seeds<T: Scalar>(est: &Estimator<T>, n_seeds: usize, seed: u64) -> Vec<u64> {
    if est.is_deterministic() {
        vec![0]
    } else {
        let base = rng::labeled(seed, "attack-z");
        (0..n_seeds as u64).map(|i| rng::child(base, i)).collect()
    }
}

/// Mean over `seeds` of `‖G(y, s) − G(y + δ, s)‖²`, the seed shared within each pair.
pub fn attack_objective<T: Scalar>(est: &Estimator<T>, y: T, delta: T, seeds: &[u64]) -> Result<T> {
    attack_objective_with(est, y, delta, seeds, ObjectiveNorm::Squared)
}

pub fn attack_objective_with<T: Scalar>(
    est: &Estimator<T>,
    y: T,
    delta: T,
    seeds: &[u64],
    norm: ObjectiveNorm,
) -> Result<T> {
    if seeds.is_empty() {
        return Err(Error::invalid("objective needs at least one seed"));
    }
    est.check_domain(y)?;
    est.check_domain(y + delta)?;
    let base = est.estimate_many(&vec![y; seeds.len()], seeds)?;
    let moved = est.estimate_many(&vec![y + delta; seeds.len()], seeds)?;
    let total = base.iter().zip(&moved).fold(T::zero(), |acc, (a, b)| {
        let d2 = a.dist_sq(b);
        acc + match norm {
            ObjectiveNorm::Squared => d2,
            ObjectiveNorm::Plain => d2.sqrt(),
        }
    });
    Ok(total / T::from_count(seeds.len()))
}

/// Per-seed objective terms at the final perturbation, for standard errors.
pub fn attack_objective_terms<T: Scalar>(
    est: &Estimator<T>,
    y: T,
    delta: T,
    seeds: &[u64],
) -> Result<Vec<T>> {
    est.check_domain(y + delta)?;
    let base = est.estimate_many(&vec![y; seeds.len()], seeds)?;
    let moved = est.estimate_many(&vec![y + delta; seeds.len()], seeds)?;
    Ok(base.iter().zip(&moved).map(|(a, b)| a.dist_sq(b)).collect())
}

/// A batch of independent one-dimensional attack problems.
trait Problem<T> {
    fn len(&self) -> usize;
    /// Feasible interval for input `i` (ball ∩ domain shifted by y).
    fn bounds(&self, i: usize) -> (T, T);
    /// Objective values and derivatives at the given perturbations.
    fn eval(&self, deltas: &[T]) -> Result<(Vec<T>, Vec<T>)>;
}

struct AnalyticProblem<'a, T> {
    est: &'a Estimator<T>,
    ys: &'a [T],
    seeds: Vec<Vec<u64>>,
    epsilon: T,
    norm: ObjectiveNorm,
}

impl<T: Scalar> AnalyticProblem<'_, T> {
    fn value(&self, i: usize, delta: T) -> Result<T> {
        attack_objective_with(self.est, self.ys[i], delta, &self.seeds[i], self.norm)
    }
}

impl<T: Scalar> Problem<T> for AnalyticProblem<'_, T> {
    fn len(&self) -> usize {
        self.ys.len()
    }

    fn bounds(&self, i: usize) -> (T, T) {
        feasible(self.est, self.ys[i], self.epsilon)
    }

    /// Central differences with step `10⁻⁷·max(1, |y+δ|)`, one-sided at the domain edge.
    fn eval(&self, deltas: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let (lo_dom, hi_dom) = self.est.domain();
        let mut vals = Vec::with_capacity(deltas.len());
        let mut grads = Vec::with_capacity(deltas.len());
        for (i, &d) in deltas.iter().enumerate() {
            let f0 = self.value(i, d)?;
            let x = self.ys[i] + d;
            let h = T::lit(1e-7) * T::one().max(x.abs());
            let up = x + h <= hi_dom;
            let down = x - h >= lo_dom;
            let g = match (up, down) {
                (true, true) => (self.value(i, d + h)? - self.value(i, d - h)?) / (h + h),
                (true, false) => (self.value(i, d + h)? - f0) / h,
                (false, true) => (f0 - self.value(i, d - h)?) / h,
                (false, false) => T::zero(),
            };
            vals.push(f0);
            grads.push(g);
        }
        Ok((vals, grads))
    }
}

/// Batched attack on a learned estimator: rows `(i, s)` of one matrix, exact input
/// gradients from the network's reverse pass.
pub(crate) struct NeuralProblem<'a, T> {
    params: &'a MlpParams<T>,
    ys: Vec<T>,
    /// Seed channels per input: `channels[i]` is `S × seed_dim`, flattened.
    base_input: Array2<T>,
    base_output: Vec<T>,
    per_input: usize,
    epsilon: T,
    norm: ObjectiveNorm,
}

impl<'a, T: Scalar> NeuralProblem<'a, T> {
    /// `channels[i][s]` are the seed-channel values of input `i`, realization `s`.
    pub(crate) fn new(
        params: &'a MlpParams<T>,
        ys: &[T],
        channels: &[Vec<Vec<T>>],
        epsilon: T,
        norm: ObjectiveNorm,
    ) -> Result<Self> {
        let per_input = channels.first().map_or(0, Vec::len);
        if per_input == 0 || channels.len() != ys.len() || channels.iter().any(|c| c.len() != per_input) {
            return Err(Error::invalid("every input needs the same nonzero number of seeds"));
        }
        let width = params.input_dim();
        let mut base_input = Array2::zeros((ys.len() * per_input, width));
        for (i, (&y, zs)) in ys.iter().zip(channels).enumerate() {
            for (s, z) in zs.iter().enumerate() {
                let r = i * per_input + s;
                base_input[[r, 0]] = y;
                for (j, &v) in z.iter().enumerate() {
                    base_input[[r, 1 + j]] = v;
                }
            }
        }
        let base_output = params.predict_batch(base_input.view())?.column(0).to_vec();
        Ok(Self {
            params,
            ys: ys.to_vec(),
            base_input,
            base_output,
            per_input,
            epsilon,
            norm,
        })
    }

    pub(crate) fn shifted_input(&self, deltas: &[T]) -> Array2<T> {
        let mut x = self.base_input.clone();
        for (r, mut row) in x.rows_mut().into_iter().enumerate() {
            row[0] += deltas[r / self.per_input];
        }
        x
    }

    pub(crate) fn base_input(&self) -> &Array2<T> {
        &self.base_input
    }

    pub(crate) fn per_input(&self) -> usize {
        self.per_input
    }
}

impl<T: Scalar> Problem<T> for NeuralProblem<'_, T> {
    fn len(&self) -> usize {
        self.ys.len()
    }

    fn bounds(&self, _i: usize) -> (T, T) {
        (-self.epsilon, self.epsilon)
    }

    fn eval(&self, deltas: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let x = self.shifted_input(deltas);
        let (out, trace) = self.params.forward_batch(x.view())?;
        let s_count = T::from_count(self.per_input);
        let rows = out.nrows();
        let mut out_grad = Array2::zeros((rows, 1));
        let mut vals = vec![T::zero(); self.ys.len()];
        // Each term is ‖(δ, Δg)‖² = δ² + Δg², or its square root.
        let mut direct = vec![T::zero(); self.ys.len()];
        for r in 0..rows {
            let i = r / self.per_input;
            let d = deltas[i];
            let diff = out[[r, 0]] - self.base_output[r];
            let sq = d * d + diff * diff;
            match self.norm {
                ObjectiveNorm::Squared => {
                    vals[i] += sq / s_count;
                    direct[i] += (d + d) / s_count;
                    out_grad[[r, 0]] = (diff + diff) / s_count;
                }
                ObjectiveNorm::Plain => {
                    let n = sq.sqrt();
                    vals[i] += n / s_count;
                    if n > T::zero() {
                        direct[i] += d / (n * s_count);
                        out_grad[[r, 0]] = diff / (n * s_count);
                    }
                }
            }
        }
        let gin = self.params.input_grad_batch(&trace, out_grad.view())?;
        let mut grads = direct;
        for r in 0..rows {
            grads[r / self.per_input] += gin[[r, 0]];
        }
        Ok((vals, grads))
    }
}

fn feasible<T: Scalar>(est: &Estimator<T>, y: T, epsilon: T) -> (T, T) {
    let (lo, hi) = est.domain();
    ((-epsilon).max(lo - y), epsilon.min(hi - y))
}

fn clamp<T: Scalar>(v: T, (lo, hi): (T, T)) -> T {
    v.max(lo).min(hi)
}

/// Runs the configured ascent on every problem; `inits[r][i]` is the starting
/// direction sign of input `i` in restart `r`.
fn solve<T: Scalar>(
    problem: &dyn Problem<T>,
    cfg: &AttackConfig<T>,
    inits: &[Vec<T>],
) -> Result<Vec<AttackOutcome<T>>> {
    let n = problem.len();
    let mut best: Vec<AttackOutcome<T>> = vec![
        AttackOutcome {
            delta: T::zero(),
            objective: T::neg_infinity(),
        };
        n
    ];
    let bounds: Vec<(T, T)> = (0..n).map(|i| problem.bounds(i)).collect();
    let mut keep_best = |deltas: &[T], vals: &[T]| {
        for i in 0..n {
            if vals[i] > best[i].objective {
                best[i] = AttackOutcome {
                    delta: deltas[i],
                    objective: vals[i],
                };
            }
        }
    };
    for signs in inits {
        let mut deltas: Vec<T> = match cfg.method {
            AttackMethod::ProjectedAdam => (0..n)
                .map(|i| clamp(signs[i] * cfg.epsilon, bounds[i]))
                .collect(),
            AttackMethod::Ifgsm { .. } => vec![T::zero(); n],
        };
        let adam = AdamConfig::new(cfg.step_size, cfg.adam_betas.0, cfg.adam_betas.1);
        let mut m = vec![T::zero(); n];
        let mut v = vec![T::zero(); n];
        for step in 0..cfg.steps {
            let (vals, grads) = problem.eval(&deltas)?;
            keep_best(&deltas, &vals);
            match cfg.method {
                AttackMethod::ProjectedAdam => {
                    let t = i32::try_from(step + 1).unwrap_or(i32::MAX);
                    for i in 0..n {
                        // ascent: descend on the negated gradient
                        adam_update(&adam, t, &mut deltas[i], -grads[i], &mut m[i], &mut v[i]);
                        deltas[i] = clamp(deltas[i], bounds[i]);
                    }
                }
                AttackMethod::Ifgsm { alpha } => {
                    for i in 0..n {
                        let dir = if grads[i] == T::zero() { signs[i] } else { grads[i].signum() };
                        deltas[i] = clamp(deltas[i] + alpha * dir, bounds[i]);
                    }
                }
            }
        }
        let (vals, _) = problem.eval(&deltas)?;
        keep_best(&deltas, &vals);
    }
    Ok(best)
}

fn restart_signs<T: Scalar>(restarts: usize, input_seeds: &[u64]) -> Vec<Vec<T>> {
    let firsts: Vec<T> = input_seeds
        .iter()
        .map(|&s| rng::sign(&mut rng::stream(rng::labeled(s, "attack-init"))))
        .collect();
    (0..restarts)
        .map(|r| match r {
            0 => firsts.clone(),
            1 => firsts.iter().map(|&s| -s).collect(),
            _ => input_seeds
                .iter()
                .map(|&s| rng::sign(&mut rng::stream(rng::child(rng::labeled(s, "attack-init"), r as u64))))
                .collect(),
        })
        .collect()
}

/// Attacks a batch of inputs of a learned estimator given explicit seed channels
/// (`channels[i][s]`); returns the problem (for reuse of its base batch) and the
/// outcomes. Restart directions derive from `input_seeds`.
pub(crate) fn neural_attack<'a, T: Scalar>(
    params: &'a MlpParams<T>,
    ys: &[T],
    channels: &[Vec<Vec<T>>],
    input_seeds: &[u64],
    cfg: &AttackConfig<T>,
) -> Result<(NeuralProblem<'a, T>, Vec<AttackOutcome<T>>)> {
    cfg.validate()?;
    let problem = NeuralProblem::new(params, ys, channels, cfg.epsilon, ObjectiveNorm::Squared)?;
    let outcomes = solve(&problem, cfg, &restart_signs(cfg.restarts, input_seeds))?;
    Ok((problem, outcomes))
}

/// Attacks every input; input `i` uses seed `rng::child(seed, i)`. Learned estimators
/// are processed in batches.
pub fn find_attacks<T: Scalar>(
    est: &Estimator<T>,
    inputs: &[T],
    cfg: &AttackConfig<T>,
    seed: u64,
) -> Result<Vec<AttackOutcome<T>>> {
    let seeds: Vec<u64> = (0..inputs.len() as u64).map(|i| rng::child(seed, i)).collect();
    find_attacks_seeded(est, inputs, &seeds, cfg)
}

fn find_attacks_seeded<T: Scalar>(
    est: &Estimator<T>,
    inputs: &[T],
    input_seeds: &[u64],
    cfg: &AttackConfig<T>,
) -> Result<Vec<AttackOutcome<T>>> {
    cfg.validate()?;
    for &y in inputs {
        est.check_domain(y)?;
    }
    if let EstimatorKind::Neural { params, .. } = &est.kind {
        // Bound the batch matrix to ~64k rows.
        let per_input = attack_seeds(est, cfg.n_seeds, 0).len();
        let chunk = (65_536 / per_input).max(1);
        let mut out = Vec::with_capacity(inputs.len());
        for (ys, ss) in inputs.chunks(chunk).zip(input_seeds.chunks(chunk)) {
            let channels: Vec<Vec<Vec<T>>> = ss
                .iter()
                .map(|&s| {
                    attack_seeds(est, cfg.n_seeds, s)
                        .into_iter()
                        .map(|z| est.seed_channels(z))
                        .collect()
                })
                .collect();
            let problem = NeuralProblem::new(params, ys, &channels, cfg.epsilon, ObjectiveNorm::Squared)?;
            out.extend(solve(&problem, cfg, &restart_signs(cfg.restarts, ss))?);
        }
        return Ok(out);
    }
    let problem = AnalyticProblem {
        est,
        ys: inputs,
        seeds: input_seeds
            .iter()
            .map(|&s| attack_seeds(est, cfg.n_seeds, s))
            .collect(),
        epsilon: cfg.epsilon,
        norm: ObjectiveNorm::Squared,
    };
    solve(&problem, cfg, &restart_signs(cfg.restarts, input_seeds))
}

/// Worst-case perturbation in the ε-interval for one input.
///
/// The returned `delta` is the best iterate visited (all iterates are feasible) and
/// `objective` is [`attack_objective`] there, with the seed list of
/// [`attack_seeds`]`(est, cfg.n_seeds, seed)`.
pub fn find_attack<T: Scalar>(
    est: &Estimator<T>,
    y: T,
    cfg: &AttackConfig<T>,
    seed: u64,
) -> Result<AttackOutcome<T>> {
    Ok(find_attacks_seeded(est, &[y], &[seed], cfg)?[0])
}

/// Mean over inputs of the attacked objective.
pub fn robustness_practical<T: Scalar>(
    est: &Estimator<T>,
    inputs: &[T],
    cfg: &AttackConfig<T>,
    seed: u64,
) -> Result<T> {
    if inputs.is_empty() {
        return Err(Error::invalid("robustness needs at least one input"));
    }
    let outcomes = find_attacks(est, inputs, cfg, seed)?;
    Ok(outcomes.iter().fold(T::zero(), |a, o| a + o.objective) / T::from_count(inputs.len()))
}

/// Iterative fast-gradient-sign attack on the un-squared objective
/// `E_Z ‖G(y, Z) − G(ỹ, Z)‖`, starting at `ỹ = y` with the seed list fixed across
/// steps. At the start the gradient vanishes; the first move then goes toward the
/// side with the larger objective (ties to `+α`). Iterates stay in the domain.
pub fn ifgsm_attack<T: Scalar>(
    est: &Estimator<T>,
    y: T,
    alpha: T,
    steps: usize,
    n_seeds: usize,
    seed: u64,
) -> Result<T> {
    if steps == 0 {
        return Err(Error::invalid("I-FGSM needs at least one step"));
    }
    if !(alpha.is_finite() && alpha >= T::zero()) {
        return Err(Error::invalid("alpha must be non-negative"));
    }
    est.check_domain(y)?;
    let seeds = attack_seeds(est, n_seeds.max(1), seed);
    let (lo, hi) = est.domain();
    let obj = |yt: T| attack_objective_with(est, y, yt - y, &seeds, ObjectiveNorm::Plain);
    let mut y_t = y;
    for _ in 0..steps {
        let g = plain_gradient(est, y, y_t, &seeds)?;
        let dir = if g != T::zero() {
            g.signum()
        } else {
            let up = if y_t + alpha <= hi { obj(y_t + alpha)? } else { T::neg_infinity() };
            let down = if y_t - alpha >= lo { obj(y_t - alpha)? } else { T::neg_infinity() };
            if down > up {
                -T::one()
            } else {
                T::one()
            }
        };
        y_t = clamp(y_t + alpha * dir, (lo, hi));
    }
    Ok(y_t)
}

fn plain_gradient<T: Scalar>(est: &Estimator<T>, y: T, y_t: T, seeds: &[u64]) -> Result<T> {
    let delta = y_t - y;
    if let EstimatorKind::Neural { params, .. } = &est.kind {
        let channels = vec![seeds.iter().map(|&s| est.seed_channels(s)).collect()];
        let p = NeuralProblem::new(params, &[y], &channels, T::infinity(), ObjectiveNorm::Plain)?;
        return Ok(p.eval(&[delta])?.1[0]);
    }
    let p = AnalyticProblem {
        est,
        ys: &[y],
        seeds: vec![seeds.to_vec()],
        epsilon: T::infinity(),
        norm: ObjectiveNorm::Plain,
    };
    if delta == T::zero() {
        // |·| has a kink at the start; report no preferred direction.
        return Ok(T::zero());
    }
    Ok(p.eval(&[delta])?.1[0])
}
