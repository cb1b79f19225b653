//! Fully-connected ReLU networks with hand-written reverse mode.
//!
//! Rows of a batch matrix are independent samples; parameter gradients of a batch
//! are the sums of the per-sample gradients (the reduction happens inside the
//! matrix products, in a fixed order, so results are deterministic).
//!
//! Besides the usual backward pass this module provides the second-order pass the
//! R1 penalty needs. For a piecewise-linear network with its ReLU pattern frozen,
//! `∂/∂θ ½‖∇ₓD‖² = ∂/∂θ ⟨v, ∇ₓD⟩` with `v = ∇ₓD` held fixed, i.e. the parameter
//! gradient of the directional derivative of `D` along `v`. That derivative is a
//! tangent-forward pass (`ż = W·ȧ`, `ȧ = mask ⊙ ż`, starting at `ȧ₀ = v`), whose
//! weight gradient is `δ_l ȧ_lᵀ` with `δ_l` the ordinary backward deltas. Biases
//! do not enter the tangent pass, so their R1 gradient is zero.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::rng;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `out × in`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Weights and biases of an MLP: affine layers with ReLU between them and none
/// after the last. The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
}

/// Pre-activations and layer inputs kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// `inputs[l]` is the input of layer `l` (`inputs[0]` is the network input).
    inputs: Vec<Array2<T>>,
    /// `pre[l]` is `inputs[l]·Wₗᵀ + bₗ`; the last entry is the network output.
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    pub fn output(&self) -> &Array2<T> {
        self.pre.last().expect("at least one layer")
    }

    /// Smallest |pre-activation| over hidden units; gradient checks stay away from kinks.
    pub fn min_abs_hidden_preactivation(&self) -> T {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden
            .iter()
            .flat_map(|z| z.iter())
            .fold(T::infinity(), |m, v| m.min(v.abs()))
    }
}

fn relu_mask<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    z.mapv(|v| if v > T::zero() { T::one() } else { T::zero() })
}

impl<T: Scalar> MlpParams<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::invalid(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::invalid(format!("layer {i}: input width does not chain")));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {i}: non-finite entry")));
            }
        }
        Ok(Self { layers })
    }

    /// Zero-filled network with the given layer sizes.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Fan-in scaled uniform weights `U(−√(6/fan_in), √(6/fan_in))` (He), zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(sizes)?;
        let mut rng = rng::stream(seed);
        for layer in &mut params.layers {
            let bound = (T::lit(6.0) / T::from_count(layer.fan_in())).sqrt();
            layer
                .weight
                .iter_mut()
                .for_each(|w| *w = rng::uniform(&mut rng, -bound, bound));
        }
        Ok(params)
    }

    /// As [`init`](Self::init), then biases drawn from the same fan-in scaled uniform
    /// (from an independent stream, so weights match `init` exactly).
    pub fn init_with_biases(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::init(sizes, seed)?;
        let mut rng = rng::stream(rng::labeled(seed, "bias"));
        for layer in &mut params.layers {
            let bound = T::one() / T::from_count(layer.fan_in()).sqrt();
            layer
                .bias
                .iter_mut()
                .for_each(|b| *b = rng::uniform(&mut rng, -bound, bound));
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].fan_in())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::fan_out).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid("parameter shapes do not match"))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.flat_iter().all(|v| v.is_finite())
    }

    /// Iterates every parameter: per layer, weights row-major then bias.
    pub fn flat_iter(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn flat_iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += alpha · other`
    pub fn add_scaled(&mut self, other: &Self, alpha: T) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(alpha, &b.weight);
            a.bias.scaled_add(alpha, &b.bias);
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        self.flat_iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn max_abs(&self) -> T {
        self.flat_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} does not match network input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardTrace<T>)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let (out, trace) = self.forward_batch(x)?;
        Ok((out.row(0).to_vec(), trace))
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardTrace<T>)> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(a.view(), layer);
            let next = if i + 1 < n {
                z.mapv(|v| v.max(T::zero()))
            } else {
                Array2::zeros((0, 0))
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        let out = pre[n - 1].clone();
        Ok((out, ForwardTrace { inputs, pre }))
    }

    /// Batched forward pass without keeping a trace.
    pub fn predict_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut a = affine(x, &self.layers[0]);
        for layer in &self.layers[1..n] {
            a.mapv_inplace(|v| v.max(T::zero()));
            a = affine(a.view(), layer);
        }
        Ok(a)
    }

    fn check_trace(&self, trace: &ForwardTrace<T>, out_grad: &ArrayView2<T>) -> Result<()> {
        let shapes_ok = trace.pre.len() == self.layers.len()
            && trace
                .pre
                .iter()
                .zip(&self.layers)
                .all(|(z, l)| z.ncols() == l.fan_out());
        if !shapes_ok {
            return Err(Error::invalid("trace does not match these parameters"));
        }
        if out_grad.dim() != trace.output().dim() {
            return Err(Error::invalid(format!(
                "output gradient shape {:?} does not match output {:?}",
                out_grad.dim(),
                trace.output().dim()
            )));
        }
        Ok(())
    }

    /// Reverse pass. Returns per-layer deltas `∂/∂zₗ` and, when asked, parameter gradients.
    fn backprop(
        &self,
        trace: &ForwardTrace<T>,
        out_grad: ArrayView2<T>,
        want_params: bool,
        keep_deltas: bool,
    ) -> Result<Backprop<T>> {
        self.check_trace(trace, &out_grad)?;
        let n = self.layers.len();
        let mut grads = want_params.then(|| self.zeros_like());
        let mut deltas = Vec::new();
        let mut delta = out_grad.to_owned();
        for l in (0..n).rev() {
            if let Some(g) = grads.as_mut() {
                g.layers[l].weight = delta.t().dot(&trace.inputs[l]);
                g.layers[l].bias = delta.sum_axis(Axis(0));
            }
            let back = delta.dot(&self.layers[l].weight);
            let next = if l > 0 {
                back * &relu_mask(&trace.pre[l - 1])
            } else {
                back
            };
            if keep_deltas {
                deltas.push(std::mem::replace(&mut delta, next));
            } else {
                delta = next;
            }
        }
        deltas.reverse();
        Ok(Backprop {
            grads,
            input_grad: delta,
            deltas,
        })
    }

    /// Single-sample reverse pass: gradients of `⟨output_grad, output⟩` with respect
    /// to the parameters and to the input. ReLU'(0) is taken as 0.
    pub fn backward(&self, trace: &ForwardTrace<T>, output_grad: &[T]) -> Result<(Self, Vec<T>)> {
        if trace.batch_size() != 1 {
            return Err(Error::invalid("single-sample backward needs a single-sample trace"));
        }
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let (grads, input_grad) = self.backward_batch(trace, g)?;
        Ok((grads, input_grad.row(0).to_vec()))
    }

    /// Batched reverse pass; parameter gradients are summed over rows.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace<T>,
        output_grad: ArrayView2<T>,
    ) -> Result<(Self, Array2<T>)> {
        let bp = self.backprop(trace, output_grad, true, false)?;
        Ok((bp.grads.expect("requested"), bp.input_grad))
    }

    /// Input gradients only (skips the weight-gradient products).
    pub fn input_grad_batch(
        &self,
        trace: &ForwardTrace<T>,
        output_grad: ArrayView2<T>,
    ) -> Result<Array2<T>> {
        Ok(self.backprop(trace, output_grad, false, false)?.input_grad)
    }

    /// R1 penalty `½‖∇ₓD(x)‖²` of a scalar-output network at one point, with its
    /// exact parameter gradient (ReLU pattern held fixed).
    pub fn r1_penalty_grad(&self, x: &[T]) -> Result<(T, Self)> {
        let xv = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
        let (_, trace) = self.forward_batch(xv)?;
        let (pen, grads, _) = self.r1_batch(&trace, T::one())?;
        Ok((pen[0], grads))
    }

    /// Per-row penalties `½‖∇ₓD(xᵢ)‖²`, the gradient of `scale · Σᵢ penaltyᵢ`, and the
    /// input gradients themselves.
    pub fn r1_batch(&self, trace: &ForwardTrace<T>, scale: T) -> Result<(Array1<T>, Self, Array2<T>)> {
        if self.output_dim() != 1 {
            return Err(Error::invalid("R1 penalty needs a scalar-output network"));
        }
        let ones = Array2::from_elem((trace.batch_size(), 1), T::one());
        let bp = self.backprop(trace, ones.view(), false, true)?;
        let half = T::lit(0.5);
        let penalties = bp
            .input_grad
            .rows()
            .into_iter()
            .map(|r| half * r.dot(&r))
            .collect::<Array1<T>>();

        let mut grads = self.zeros_like();
        let n = self.layers.len();
        let mut tangent = bp.input_grad.clone();
        for l in 0..n {
            let mut gw = bp.deltas[l].t().dot(&tangent);
            gw *= scale;
            grads.layers[l].weight = gw;
            if l + 1 < n {
                let z_dot = tangent.dot(&self.layers[l].weight.t());
                tangent = z_dot * &relu_mask(&trace.pre[l]);
            }
        }
        Ok((penalties, grads, bp.input_grad))
    }

    /// Writes the flat little-endian checkpoint: magic, version, layer count,
    /// layer sizes, then each layer's weights (row-major) and bias as `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for s in self.sizes() {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        for v in self.flat_iter() {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut input)? as usize;
        if count == 0 || count > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {count}")));
        }
        let sizes = (0..=count)
            .map(|_| read_u32(&mut input).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut params = Self::zeros(&sizes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = [0u8; 8];
        for v in params.flat_iter_mut() {
            input.read_exact(&mut buf)?;
            *v = T::lit(f64::from_le_bytes(buf));
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(params)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RLABMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

struct Backprop<T> {
    grads: Option<MlpParams<T>>,
    input_grad: Array2<T>,
    deltas: Vec<Array2<T>>,
}

fn affine<T: Scalar>(a: ArrayView2<T>, layer: &Layer<T>) -> Array2<T> {
    let mut z = a.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "layer sizes {sizes:?}: need at least two sizes, all ≥ 1"
        )));
    }
    Ok(())
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn new(lr: T, beta1: T, beta2: T) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: T::lit(1e-8),
        }
    }
}

/// One bias-corrected Adam update on a single coordinate. `t` is the step index
/// after incrementing (first step: `t = 1`).
#[inline]
pub fn adam_update<T: Scalar>(cfg: &AdamConfig<T>, t: i32, p: &mut T, g: T, m: &mut T, v: &mut T) {
    *m = cfg.beta1 * *m + (T::one() - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (T::one() - cfg.beta2) * g * g;
    let m_hat = *m / (T::one() - cfg.beta1.powi(t));
    let v_hat = *v / (T::one() - cfg.beta2.powi(t));
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    m: MlpParams<T>,
    v: MlpParams<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &MlpParams<T>, config: AdamConfig<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> &MlpParams<T> {
        &self.v
    }

    /// Applies one descent step with `grads` and increments the step counter.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &MlpParams<T>) -> Result<()> {
        params.check_same_shape(grads)?;
        params.check_same_shape(&self.m)?;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let cfg = self.config;
        let layers = params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()));
        for ((p, g), (m, v)) in layers {
            Zip::from(&mut p.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| adam_update(&cfg, t, p, g, m, v));
            Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| adam_update(&cfg, t, p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_and_determinism() {
        let p = MlpParams::<f64>::init(&[2, 512, 512, 512, 512, 1], 3).unwrap();
        assert_eq!(p.layers().len(), 5);
        assert_eq!(p.sizes(), vec![2, 512, 512, 512, 512, 1]);
        assert!(p.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = (6.0 / 512f64).sqrt();
        assert!(p.layers()[2].weight.iter().all(|w| w.abs() <= bound));
        assert_eq!(p, MlpParams::<f64>::init(&[2, 512, 512, 512, 512, 1], 3).unwrap());

        let single = MlpParams::<f64>::init(&[2, 1], 9).unwrap();
        assert_eq!(single.layers().len(), 1);
        assert_eq!(single.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn invalid_sizes() {
        assert!(MlpParams::<f64>::init(&[2], 0).is_err());
        assert!(MlpParams::<f64>::init(&[2, 0, 1], 0).is_err());
    }

    #[test]
    fn forward_basics() {
        let zero = MlpParams::<f64>::zeros(&[2, 8, 1]).unwrap();
        assert_eq!(zero.forward(&[0.3, -2.0]).unwrap().0, vec![0.0]);

        let lin = MlpParams::from_layers(vec![Layer {
            weight: array![[2.0, -1.0]],
            bias: array![0.5],
        }])
        .unwrap();
        assert_eq!(lin.forward(&[1.0, 1.0]).unwrap().0, vec![1.5]);
        assert!(lin.forward(&[1.0]).is_err());

        let p = MlpParams::<f64>::init(&[2, 8, 8, 1], 5).unwrap();
        let a = p.forward(&[0.1, 0.2]).unwrap().0;
        let b = p.forward(&[0.1, 0.2]).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn linear_backward_is_transpose() {
        let lin = MlpParams::from_layers(vec![Layer {
            weight: array![[2.0, -1.0], [0.5, 3.0]],
            bias: array![0.0, 0.0],
        }])
        .unwrap();
        let (_, tr) = lin.forward(&[0.7, -0.2]).unwrap();
        let (g, gin) = lin.backward(&tr, &[1.0, 2.0]).unwrap();
        assert_eq!(gin, vec![2.0 + 1.0, -1.0 + 6.0]);
        assert_eq!(g.layers()[0].bias, array![1.0, 2.0]);
        assert!(lin.backward(&tr, &[1.0]).is_err());
    }

    #[test]
    fn r1_linear_closed_form() {
        let lin = MlpParams::<f64>::from_layers(vec![Layer {
            weight: array![[0.6, -0.8]],
            bias: array![0.3],
        }])
        .unwrap();
        let (pen, g) = lin.r1_penalty_grad(&[1.0, 2.0]).unwrap();
        assert!((pen - 0.5).abs() < 1e-15);
        assert_eq!(g.layers()[0].weight, array![[0.6, -0.8]]);
        assert_eq!(g.layers()[0].bias, array![0.0]);

        let zero = MlpParams::<f64>::zeros(&[2, 8, 1]).unwrap();
        let (pen, g) = zero.r1_penalty_grad(&[0.4, 0.1]).unwrap();
        assert_eq!(pen, 0.0);
        assert_eq!(g.max_abs(), 0.0);

        let wide = MlpParams::<f64>::zeros(&[2, 2]).unwrap();
        assert!(wide.r1_penalty_grad(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = MlpParams::<f64>::init(&[2, 4, 1], 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::new(1e-3, 0.9, 0.999));
        let zeros = p.zeros_like();
        st.step(&mut p, &zeros).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let cfg = AdamConfig::new(1e-3, 0.0, 0.9);
        let (mut p, mut m, mut v) = (1.0f64, 0.0, 0.0);
        let g = -0.37;
        adam_update(&cfg, 1, &mut p, g, &mut m, &mut v);
        let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
        assert!(((p - 1.0) - expected).abs() < 1e-15);
        assert!(v >= 0.0);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = MlpParams::<f64>::init(&[2, 4, 1], 1).unwrap();
        let g = MlpParams::<f64>::zeros(&[2, 3, 1]).unwrap();
        let mut st = AdamState::new(&p, AdamConfig::new(1e-3, 0.9, 0.999));
        assert!(st.step(&mut p, &g).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = MlpParams::<f64>::init(&[2, 5, 3, 1], 8).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        assert_eq!(buf.len(), 8 + 4 + 4 + 4 * 4 + 8 * p.num_params());
        let q = MlpParams::<f64>::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p, q);

        buf[0] = b'X';
        assert!(matches!(
            MlpParams::<f64>::read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
