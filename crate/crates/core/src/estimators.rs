//! Consistent estimators `y ↦ X̂` with `X̂.x1 = y` exactly.
//!
//! Closed-form ones: the sine family on the disk, the zigzag family on the unit
//! square together with its horizontal transport map, the exact disk posterior
//! sampler, and two continuous curves through the elliptical annulus. Learned
//! estimators wrap an MLP whose scalar output is concatenated with `y`.

use ndarray::Array2;

use crate::distributions::{self, EllipseAnnulus, Point2, ToyDistribution};
use crate::nn::MlpParams;
use crate::rng;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind<T> {
    /// `(y, √(1−y²)·sin(αy))`
    SineDeterministic { alpha: T },
    /// `(y, G_f(y))`, the triangle wave with `f` teeth per unit.
    Zigzag { frequency: u32 },
    /// `x2 ~ U(−√(1−y²), √(1−y²))`
    DiskPosterior,
    /// Midline of the upper band of the annulus; never enters the hole.
    EllipseAvoid,
    /// Upper band, then a straight descent through the hole, then the lower band.
    EllipseCross,
    /// MLP on `(y, z₁..z_k)` with scalar output; `z` is pinned to 0 when not stochastic.
    Neural {
        params: MlpParams<T>,
        stochastic: bool,
        seed_dim: usize,
    },
}

/// An estimator together with the distribution it targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator<T> {
    pub kind: EstimatorKind<T>,
    pub target: ToyDistribution<T>,
}

impl<T: Scalar> Estimator<T> {
    pub fn sine(alpha: T) -> Self {
        Self {
            kind: EstimatorKind::SineDeterministic { alpha },
            target: ToyDistribution::UnitDisk,
        }
    }

    pub fn zigzag(frequency: u32) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::invalid("zigzag frequency must be positive"));
        }
        Ok(Self {
            kind: EstimatorKind::Zigzag { frequency },
            target: ToyDistribution::UnitSquare,
        })
    }

    pub fn disk_posterior() -> Self {
        Self {
            kind: EstimatorKind::DiskPosterior,
            target: ToyDistribution::UnitDisk,
        }
    }

    pub fn ellipse_avoid(geometry: EllipseAnnulus<T>) -> Self {
        Self {
            kind: EstimatorKind::EllipseAvoid,
            target: ToyDistribution::EllipseAnnulus(geometry),
        }
    }

    pub fn ellipse_cross(geometry: EllipseAnnulus<T>) -> Self {
        Self {
            kind: EstimatorKind::EllipseCross,
            target: ToyDistribution::EllipseAnnulus(geometry),
        }
    }

    /// Learned estimator on the disk. The network must take `1 + seed_dim` inputs
    /// and produce one output.
    pub fn neural(params: MlpParams<T>, stochastic: bool, seed_dim: usize) -> Result<Self> {
        if params.input_dim() != 1 + seed_dim || params.output_dim() != 1 {
            return Err(Error::invalid(format!(
                "generator must map {} inputs to 1 output, got {:?}",
                1 + seed_dim,
                params.sizes()
            )));
        }
        Ok(Self {
            kind: EstimatorKind::Neural {
                params,
                stochastic,
                seed_dim,
            },
            target: ToyDistribution::UnitDisk,
        })
    }

    /// True when the output does not depend on the seed.
    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            EstimatorKind::DiskPosterior => false,
            EstimatorKind::Neural { stochastic, .. } => !stochastic,
            _ => true,
        }
    }

    /// Closed interval of admissible observations (infinite for learned estimators).
    pub fn domain(&self) -> (T, T) {
        match &self.kind {
            EstimatorKind::SineDeterministic { .. } | EstimatorKind::DiskPosterior => {
                (-T::one(), T::one())
            }
            EstimatorKind::Zigzag { .. } => (T::zero(), T::one()),
            EstimatorKind::EllipseAvoid | EstimatorKind::EllipseCross => self.target.x1_range(),
            EstimatorKind::Neural { .. } => (T::neg_infinity(), T::infinity()),
        }
    }

    pub fn check_domain(&self, y: T) -> Result<()> {
        let (lo, hi) = self.domain();
        if y.is_finite() && y >= lo && y <= hi {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "observation {y} outside estimator domain [{lo}, {hi}]"
            )))
        }
    }

    /// Short human-readable name.
    pub fn describe(&self) -> String {
        match &self.kind {
            EstimatorKind::SineDeterministic { alpha } => format!("sine(alpha={alpha})"),
            EstimatorKind::Zigzag { frequency } => format!("zigzag(f={frequency})"),
            EstimatorKind::DiskPosterior => "disk_posterior".into(),
            EstimatorKind::EllipseAvoid => "ellipse_avoid".into(),
            EstimatorKind::EllipseCross => "ellipse_cross".into(),
            EstimatorKind::Neural { stochastic, .. } => {
                format!("neural({})", if *stochastic { "stochastic" } else { "deterministic" })
            }
        }
    }

    /// Seed channel values for `seed`: `U(0,1)` draws for stochastic networks, zeros otherwise.
    pub fn seed_channels(&self, seed: u64) -> Vec<T> {
        match &self.kind {
            EstimatorKind::Neural {
                stochastic: true,
                seed_dim,
                ..
            } => {
                let mut r = rng::stream(seed);
                (0..*seed_dim).map(|_| rng::unit(&mut r)).collect()
            }
            EstimatorKind::Neural { seed_dim, .. } => vec![T::zero(); *seed_dim],
            _ => Vec::new(),
        }
    }

    /// One estimate at `y`. Deterministic kinds ignore `seed`; stochastic kinds are
    /// a pure function of `(y, seed)`.
    pub fn estimate(&self, y: T, seed: u64) -> Result<Point2<T>> {
        self.check_domain(y)?;
        let x2 = match &self.kind {
            EstimatorKind::SineDeterministic { alpha } => sine_x2(*alpha, y),
            EstimatorKind::Zigzag { frequency } => zigzag_wave(*frequency, y),
            EstimatorKind::DiskPosterior => {
                distributions::disk_posterior_x2(y, rng::unit(&mut rng::stream(seed)))
            }
            EstimatorKind::EllipseAvoid | EstimatorKind::EllipseCross => {
                self.ellipse_x2(y).expect("ellipse kinds target an annulus")
            }
            EstimatorKind::Neural { params, .. } => {
                let mut input = Vec::with_capacity(params.input_dim());
                input.push(y);
                input.extend(self.seed_channels(seed));
                params.forward(&input)?.0[0]
            }
        };
        Ok(Point2::new(y, x2))
    }

    /// Batched estimates; `seeds[i]` drives `ys[i]`. Learned estimators run as one batch.
    pub fn estimate_many(&self, ys: &[T], seeds: &[u64]) -> Result<Vec<Point2<T>>> {
        if ys.len() != seeds.len() {
            return Err(Error::invalid("need one seed per observation"));
        }
        if let EstimatorKind::Neural { params, .. } = &self.kind {
            for &y in ys {
                self.check_domain(y)?;
            }
            let width = params.input_dim();
            let mut x = Array2::zeros((ys.len(), width));
            for (i, (&y, &s)) in ys.iter().zip(seeds).enumerate() {
                x[[i, 0]] = y;
                for (j, z) in self.seed_channels(s).into_iter().enumerate() {
                    x[[i, 1 + j]] = z;
                }
            }
            let out = params.predict_batch(x.view())?;
            return Ok(ys
                .iter()
                .zip(out.column(0))
                .map(|(&y, &v)| Point2::new(y, v))
                .collect());
        }
        ys.iter()
            .zip(seeds)
            .map(|(&y, &s)| self.estimate(y, s))
            .collect()
    }

    fn ellipse_x2(&self, y: T) -> Option<T> {
        let ToyDistribution::EllipseAnnulus(g) = &self.target else {
            return None;
        };
        let upper = |x: T| (g.inner_half_height(x) + g.outer_half_height(x)) * T::lit(0.5);
        Some(match self.kind {
            EstimatorKind::EllipseAvoid => upper(y),
            EstimatorKind::EllipseCross => {
                let knot = g.a_inner * T::lit(0.5);
                if y < -knot {
                    upper(y)
                } else if y > knot {
                    -upper(y)
                } else {
                    let start = upper(-knot);
                    let end = -upper(knot);
                    let t = (y + knot) / (knot + knot);
                    start + (end - start) * t
                }
            }
            _ => return None,
        })
    }
}

fn sine_x2<T: Scalar>(alpha: T, y: T) -> T {
    distributions::disk_half_chord(y) * (alpha * y).sin()
}

/// `(y, √(1−y²)·sin(αy))` for `|y| ≤ 1`.
pub fn sine_estimate<T: Scalar>(alpha: T, y: T) -> Result<Point2<T>> {
    Estimator::sine(alpha).estimate(y, 0)
}

/// Triangle wave `G_f(y) = arccos(cos(2πfy))/π`, evaluated as `2·min(t, 1−t)` with
/// `t = fy mod 1`, which avoids the arccos conditioning loss near the extremes.
pub fn zigzag_wave<T: Scalar>(frequency: u32, y: T) -> T {
    let fy = T::from_u32(frequency).expect("u32 fits") * y;
    let t = fy - fy.floor();
    let two = T::lit(2.0);
    (two * t).min(two * (T::one() - t))
}

/// `(y, G_f(y))` for `y ∈ [0, 1]`.
pub fn zigzag_estimate<T: Scalar>(frequency: u32, y: T) -> Result<Point2<T>> {
    Estimator::zigzag(frequency)?.estimate(y, 0)
}

/// Horizontal transport onto the zigzag: moves `(x1, x2)` within its width-`1/(2f)`
/// bin to the abscissa where the zigzag has height `x2`.
pub fn transport_k<T: Scalar>(frequency: u32, x1: T, x2: T) -> Result<T> {
    if frequency == 0 {
        return Err(Error::invalid("zigzag frequency must be positive"));
    }
    let in_unit = |v: T| v >= T::zero() && v <= T::one();
    if !in_unit(x1) || !in_unit(x2) {
        return Err(Error::invalid("transport inputs must lie in [0, 1]"));
    }
    let bins = 2 * u64::from(frequency);
    let width = T::from_u64(bins).expect("fits");
    let raw = (width * x1).floor().to_u64().unwrap_or(0);
    // x1 = 1 lands in bin 2f; fold it into the last bin.
    let bin = raw.min(bins - 1);
    let offset = if bin % 2 == 1 { T::one() - x2 } else { x2 };
    Ok((T::from_u64(bin).expect("fits") + offset) / width)
}

/// Estimate on the annulus with one of the two handcrafted curves.
pub fn ellipse_estimate<T: Scalar>(est: &Estimator<T>, y: T) -> Result<Point2<T>> {
    match est.kind {
        EstimatorKind::EllipseAvoid | EstimatorKind::EllipseCross => est.estimate(y, 0),
        _ => Err(Error::invalid("not an ellipse estimator")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook form, used only as an oracle for the stable implementation.
    fn zigzag_arccos(f: u32, y: f64) -> f64 {
        (2.0 * std::f64::consts::PI * f as f64 * y).cos().acos() / std::f64::consts::PI
    }

    #[test]
    fn sine_values() {
        assert_eq!(sine_estimate(50.0f64, 0.0).unwrap(), Point2::new(0.0, 0.0));
        assert_eq!(sine_estimate(1.0f64, 1.0).unwrap(), Point2::new(1.0, 0.0));
        let p = sine_estimate(1.0f64, 0.5).unwrap();
        assert_eq!(p.x1, 0.5);
        assert!((p.x2 - 0.75f64.sqrt() * 0.5f64.sin()).abs() < 1e-15);
        assert!((p.x2 - 0.415_195).abs() < 1e-6);
        assert!(sine_estimate(1.0f64, 1.5).is_err());
    }

    #[test]
    fn zigzag_values() {
        for f in [1, 2, 3, 7] {
            assert_eq!(zigzag_estimate(f, 0.0f64).unwrap(), Point2::new(0.0, 0.0));
        }
        assert_eq!(zigzag_estimate(1, 0.5f64).unwrap(), Point2::new(0.5, 1.0));
        assert_eq!(zigzag_estimate(2, 0.25f64).unwrap(), Point2::new(0.25, 1.0));
        assert_eq!(zigzag_estimate(2, 0.5f64).unwrap(), Point2::new(0.5, 0.0));
        assert!(zigzag_estimate(2, 1.2f64).is_err());
        assert!(zigzag_estimate(2, -0.1f64).is_err());
        assert!(Estimator::<f64>::zigzag(0).is_err());
    }

    #[test]
    fn zigzag_matches_arccos_form() {
        for f in [1, 2, 4, 8, 16] {
            for i in 0..=1000 {
                let y = i as f64 / 1000.0;
                let a = zigzag_wave(f, y);
                let b = zigzag_arccos(f, y);
                assert!((a - b).abs() < 1e-7, "f={f} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn transport_values() {
        assert!((transport_k(1, 0.1f64, 0.3).unwrap() - 0.15).abs() < 1e-15);
        assert!((transport_k(1, 0.6f64, 0.3).unwrap() - 0.85).abs() < 1e-15);
        // x1 = 1 is folded into the last bin
        assert!((transport_k(2, 1.0f64, 0.25).unwrap() - (3.0 + 0.75) / 4.0).abs() < 1e-15);
        assert!(transport_k(1, 1.2f64, 0.3).is_err());
    }

    #[test]
    fn posterior_estimates() {
        let est = Estimator::<f64>::disk_posterior();
        for s in 0..10 {
            assert_eq!(est.estimate(1.0, s).unwrap(), Point2::new(1.0, 0.0));
        }
        let differing = (0..100u64)
            .filter(|&i| est.estimate(0.0, 2 * i).unwrap() != est.estimate(0.0, 2 * i + 1).unwrap())
            .count();
        assert_eq!(differing, 100);
        assert!(est.estimate(1.5, 0).is_err());
    }

    #[test]
    fn deterministic_kinds_ignore_seed() {
        let est = Estimator::sine(50.0f64);
        assert_eq!(est.estimate(0.3, 1).unwrap(), est.estimate(0.3, 99).unwrap());
        assert!(est.is_deterministic());
        assert!(!Estimator::<f64>::disk_posterior().is_deterministic());
    }

    #[test]
    fn ellipse_curves() {
        let g = EllipseAnnulus::<f64>::preset();
        let annulus = ToyDistribution::EllipseAnnulus(g);
        let avoid = Estimator::ellipse_avoid(g);
        let cross = Estimator::ellipse_cross(g);
        let p = ellipse_estimate(&avoid, 0.0).unwrap();
        assert!(p.x2 > 0.0 && annulus.support_contains(&p));
        assert!(!annulus.support_contains(&ellipse_estimate(&cross, 0.0).unwrap()));
        assert!(ellipse_estimate(&Estimator::sine(1.0f64), 0.0).is_err());
        assert!(ellipse_estimate(&avoid, 1.01).is_err());

        // avoid never enters the hole; cross reaches both bands
        let ys: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 / 1000.0).collect();
        assert!(ys
            .iter()
            .all(|&y| annulus.support_contains(&avoid.estimate(y, 0).unwrap())));
        let xs: Vec<f64> = ys.iter().map(|&y| cross.estimate(y, 0).unwrap().x2).collect();
        assert!(xs.iter().any(|&v| v > 0.3) && xs.iter().any(|&v| v < -0.3));
    }

    #[test]
    fn ellipse_continuity_scan() {
        let g = EllipseAnnulus::<f64>::preset();
        for est in [Estimator::ellipse_avoid(g), Estimator::ellipse_cross(g)] {
            let mut worst = 0.0f64;
            for i in 0..10_000 {
                let y0 = -1.0 + i as f64 * 1e-4;
                let a = est.estimate(y0, 0).unwrap();
                let b = est.estimate((y0 + 1e-4).min(1.0), 0).unwrap();
                worst = worst.max(a.dist(&b));
            }
            assert!(worst < 1e-2, "{}: {worst}", est.describe());
        }
    }

    #[test]
    fn neural_estimator_shapes() {
        let p = MlpParams::<f64>::init(&[2, 4, 1], 0).unwrap();
        assert!(Estimator::neural(p.clone(), true, 2).is_err());
        let det = Estimator::neural(p.clone(), false, 1).unwrap();
        assert_eq!(det.estimate(0.2, 1).unwrap(), det.estimate(0.2, 2).unwrap());
        let sto = Estimator::neural(p, true, 1).unwrap();
        assert_eq!(sto.estimate(0.2, 5).unwrap(), sto.estimate(0.2, 5).unwrap());
        let many = sto.estimate_many(&[0.2, -0.4], &[5, 6]).unwrap();
        assert_eq!(many[0], sto.estimate(0.2, 5).unwrap());
        assert!((many[1].x2 - sto.estimate(-0.4, 6).unwrap().x2).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn transport_identity(f in 1u32..=16, x1 in 0.0f64..1.0, x2 in 0.0f64..=1.0) {
            let k = transport_k(f, x1, x2).unwrap();
            prop_assert!((zigzag_wave(f, k) - x2).abs() <= 1e-9);
            prop_assert!((x1 - k).abs() <= 1.0 / (2.0 * f as f64));
        }

        #[test]
        fn every_kind_is_consistent(y in -1.0f64..=1.0, seed in any::<u64>()) {
            let g = EllipseAnnulus::<f64>::preset();
            let kinds = [
                Estimator::sine(50.0),
                Estimator::sine(1.0),
                Estimator::disk_posterior(),
                Estimator::ellipse_avoid(g),
                Estimator::ellipse_cross(g),
                Estimator::neural(MlpParams::init(&[2, 8, 1], 1).unwrap(), true, 1).unwrap(),
            ];
            for est in &kinds {
                prop_assert_eq!(est.estimate(y, seed).unwrap().x1, y);
            }
            let z = Estimator::zigzag(3).unwrap();
            prop_assert_eq!(z.estimate(y.abs(), seed).unwrap().x1, y.abs());
        }

        #[test]
        fn sine_stays_in_disk(alpha in 0.0f64..100.0, y in -1.0f64..=1.0) {
            let p = sine_estimate(alpha, y).unwrap();
            prop_assert!(p.x1 * p.x1 + p.x2 * p.x2 <= 1.0 + 1e-15);
        }
    }
}
