use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use restoration_core::gan::{critic_loss, critic_loss_grad};
use restoration_core::nn::MlpParams;
use restoration_core::{rng, Mlp, Point};

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn output(net: &Mlp, x: &[f64]) -> f64 {
    net.forward(x).unwrap().0[0]
}

fn perturbed(net: &Mlp, idx: usize, h: f64) -> Mlp {
    let mut p = net.clone();
    *p.flat_iter_mut().nth(idx).unwrap() += h;
    p
}

fn random_input(seed: u64, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn parameter_and_input_gradients_match_central_differences() {
    for trial in 0..20u64 {
        let net = MlpParams::<f64>::init_with_biases(&[2, 8, 8, 1], trial).unwrap();
        let x = random_input(rng::labeled(trial, "x"), 2);
        let (_, trace) = net.forward(&x).unwrap();
        let (grads, input_grad) = net.backward(&trace, &[1.0]).unwrap();

        for (idx, g) in grads.flat_iter().enumerate() {
            let fd = (output(&perturbed(&net, idx, H), &x) - output(&perturbed(&net, idx, -H), &x)) / (2.0 * H);
            assert!(rel_err(g, fd) < 1e-4, "trial {trial} param {idx}: {g} vs {fd}");
        }
        for d in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += H;
            xm[d] -= H;
            let fd = (output(&net, &xp) - output(&net, &xm)) / (2.0 * H);
            assert!(rel_err(input_grad[d], fd) < 1e-4, "trial {trial} input {d}");
        }
    }
}

fn half_sq_input_grad(net: &Mlp, x: &[f64]) -> f64 {
    let (_, trace) = net.forward(x).unwrap();
    let (_, g) = net.backward(&trace, &[1.0]).unwrap();
    0.5 * g.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn r1_double_backward_matches_differences_of_the_penalty() {
    let mut checked = 0;
    for trial in 0..40u64 {
        let net = MlpParams::<f64>::init_with_biases(&[2, 8, 1], 100 + trial).unwrap();
        let x = random_input(rng::labeled(trial, "r1"), 2);
        let (_, trace) = net.forward(&x).unwrap();
        if trace.min_abs_hidden_preactivation() < 1e-3 {
            continue;
        }
        let (pen, grads) = net.r1_penalty_grad(&x).unwrap();
        assert!(rel_err(pen, half_sq_input_grad(&net, &x)) < 1e-12);
        for (idx, g) in grads.flat_iter().enumerate() {
            let fd = (half_sq_input_grad(&perturbed(&net, idx, H), &x)
                - half_sq_input_grad(&perturbed(&net, idx, -H), &x))
                / (2.0 * H);
            assert!(rel_err(g, fd) < 1e-3, "trial {trial} param {idx}: {g} vs {fd}");
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

fn points(seed: u64, n: usize) -> Vec<Point> {
    let mut r = rng::stream(seed);
    (0..n)
        .map(|_| Point::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

fn matrix(ps: &[Point]) -> Array2<f64> {
    Array2::from_shape_fn((ps.len(), 2), |(i, j)| if j == 0 { ps[i].x1 } else { ps[i].x2 })
}

#[test]
fn critic_loss_gradient_matches_differences() {
    let critic = MlpParams::<f64>::init_with_biases(&[2, 8, 8, 1], 7).unwrap();
    let real = points(1, 6);
    let fake = points(2, 5);
    let (loss, grads) = critic_loss_grad(&critic, matrix(&real).view(), matrix(&fake).view(), 10.0).unwrap();
    assert!(rel_err(loss.total(), critic_loss(&critic, &real, &fake, 10.0).unwrap()) < 1e-12);
    for (idx, g) in grads.flat_iter().enumerate() {
        let f = |h| critic_loss(&perturbed(&critic, idx, h), &real, &fake, 10.0).unwrap();
        let fd = (f(H) - f(-H)) / (2.0 * H);
        // a kink crossing inside ±H spoils the reference; tolerate absolute slack
        assert!((g - fd).abs() < 1e-4 * fd.abs().max(1.0), "param {idx}: {g} vs {fd}");
    }
}

#[test]
fn batched_backward_sums_single_sample_gradients() {
    let net = MlpParams::<f64>::init_with_biases(&[3, 6, 2], 3).unwrap();
    let xs = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
    let og = Array2::from_shape_fn((4, 2), |(i, j)| 1.0 + i as f64 - j as f64);
    let (_, trace) = net.forward_batch(xs.view()).unwrap();
    let (batched, input_grads) = net.backward_batch(&trace, og.view()).unwrap();
    let mut summed = net.zeros_like();
    for i in 0..4 {
        let row = xs.row(i).to_vec();
        let (_, t) = net.forward(&row).unwrap();
        let (g, ig) = net.backward(&t, &og.row(i).to_vec()).unwrap();
        summed.add_scaled(&g, 1.0).unwrap();
        for d in 0..3 {
            assert!((ig[d] - input_grads[[i, d]]).abs() < 1e-12);
        }
    }
    for (a, b) in batched.flat_iter().zip(summed.flat_iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn r1_batch_penalties_match_single_points(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let net = MlpParams::<f64>::init_with_biases(&[2, 8, 1], seed).unwrap();
        let xs = Array2::from_shape_vec((2, 2), vec![a, b, b, a]).unwrap();
        let (_, trace) = net.forward_batch(xs.view()).unwrap();
        let (pens, _, _) = net.r1_batch(&trace, 1.0).unwrap();
        prop_assert!((pens[0] - half_sq_input_grad(&net, &[a, b])).abs() < 1e-12);
        prop_assert!((pens[1] - half_sq_input_grad(&net, &[b, a])).abs() < 1e-12);
    }

    #[test]
    fn forward_is_positively_homogeneous_without_biases(seed in 0u64..10_000, a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.1f64..10.0) {
        let net = MlpParams::<f64>::init(&[2, 8, 8, 1], seed).unwrap();
        let y1 = output(&net, &[a, b]);
        let y2 = output(&net, &[c * a, c * b]);
        prop_assert!((y2 - c * y1).abs() < 1e-9 * (1.0 + y2.abs()));
    }
}
