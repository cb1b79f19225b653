use proptest::prelude::*;
use rand::Rng;
use restoration_core::distributions::{disk_half_chord, posterior_sample_disk};
use restoration_core::estimators::{transport_k, zigzag_estimate};
use restoration_core::metrics::{precision_recall, psnr, sample_std, wasserstein2_exact};
use restoration_core::{rng, Point, Samples};

fn random_set(seed: u64, n: usize) -> Samples {
    let mut r = rng::stream(seed);
    let pts = (0..n)
        .map(|_| Point::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    Samples::new(pts, "s").unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_w2(a: &Samples, b: &Samples) -> f64 {
    let n = a.len();
    permutations(n)
        .into_iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| a.points()[i].dist_sq(&b.points()[j]))
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[test]
fn exact_w2_equals_brute_force() {
    for trial in 0..50u64 {
        let n = 1 + (trial % 7) as usize;
        let a = random_set(rng::child(1, trial), n);
        let b = random_set(rng::child(2, trial), n);
        let exact = wasserstein2_exact(&a, &b).unwrap();
        let brute = brute_force_w2(&a, &b);
        assert!((exact - brute).abs() < 1e-9, "trial {trial}: {exact} vs {brute}");
    }
}

#[test]
fn identical_sets_have_full_precision_and_recall() {
    let a = random_set(5, 200);
    let (p, r) = precision_recall(&a, &a, 5).unwrap();
    assert_eq!((p, r), (1.0, 1.0));
}

#[test]
fn disjoint_sets_have_zero_precision_and_recall() {
    let a = random_set(5, 100);
    let shifted: Vec<Point> = a.points().iter().map(|p| Point::new(p.x1 + 10.0, p.x2)).collect();
    let b = Samples::new(shifted, "b").unwrap();
    assert_eq!(precision_recall(&a, &b, 3).unwrap(), (0.0, 0.0));
}

#[test]
fn psnr_of_known_error() {
    // mse 0.01 at peak 1 is 20 dB
    let v: f64 = psnr(&[0.0, 0.0], &[0.1, -0.1], 1.0).unwrap();
    assert!((v - 20.0).abs() < 1e-12);
}

#[test]
fn sample_std_uses_unbiased_denominator() {
    assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn transport_identity_on_many_points() {
    let data = restoration_core::Distribution::UnitSquare.sample(10_000, 9).unwrap();
    for f in [1, 2, 4, 8, 16] {
        for p in data.points() {
            let t = transport_k(f, p.x1, p.x2).unwrap();
            let back = zigzag_estimate(f, t).unwrap();
            assert!((back.x2 - p.x2).abs() < 1e-9, "f {f} at {p:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn w2_is_a_metric(s in 0u64..100_000, n in 1usize..12) {
        let a = random_set(rng::child(s, 0), n);
        let b = random_set(rng::child(s, 1), n);
        let c = random_set(rng::child(s, 2), n);
        let ab = wasserstein2_exact(&a, &b).unwrap();
        let ba = wasserstein2_exact(&b, &a).unwrap();
        let bc = wasserstein2_exact(&b, &c).unwrap();
        let ac = wasserstein2_exact(&a, &c).unwrap();
        prop_assert!(wasserstein2_exact(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn w2_is_invariant_to_point_order(s in 0u64..100_000, n in 2usize..12) {
        let a = random_set(rng::child(s, 0), n);
        let b = random_set(rng::child(s, 1), n);
        let mut rev = b.points().to_vec();
        rev.reverse();
        let b_rev = Samples::new(rev, "r").unwrap();
        let d1 = wasserstein2_exact(&a, &b).unwrap();
        let d2 = wasserstein2_exact(&a, &b_rev).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn precision_recall_within_unit_interval(s in 0u64..100_000, k in 1usize..6) {
        let a = random_set(rng::child(s, 0), 30);
        let b = random_set(rng::child(s, 1), 25);
        let (p, r) = precision_recall(&a, &b, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }

    #[test]
    fn posterior_samples_are_consistent_and_inside_the_chord(y in -0.999f64..0.999, s in 0u64..1000) {
        let set = posterior_sample_disk(y, 64, s).unwrap();
        let h = disk_half_chord(y);
        for p in set.points() {
            prop_assert_eq!(p.x1, y);
            prop_assert!(p.x2.abs() <= h);
        }
    }
}
