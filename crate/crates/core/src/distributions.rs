//! Toy source distributions, the exact disk posterior, and sample-set I/O.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::{Error, Result, Scalar};

/// A 2D sample: `x1` is the observed coordinate `Y`, `x2` the latent one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x1: T,
    pub x2: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x1: T, x2: T) -> Self {
        Self { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    #[inline]
    pub fn dist_sq(&self, other: &Self) -> T {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }

    #[inline]
    pub fn dist(&self, other: &Self) -> T {
        self.dist_sq(other).sqrt()
    }
}

/// Nonempty, ordered collection of points with a free-text label.
///
/// The point list is fixed once built; use [`SampleSet::points`] to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    points: Vec<Point2<T>>,
    label: String,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(points: Vec<Point2<T>>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("sample set must be nonempty"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            label: label.into(),
        })
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Writes the set as CSV with header `x1,x2`, 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2"])?;
        for p in &self.points {
            w.write_record([fmt17(p.x1), fmt17(p.x2)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, label: impl Into<String>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x1", "x2"] {
            return Err(Error::invalid("expected CSV header `x1,x2`"));
        }
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<T> {
                let field = rec.get(i).unwrap_or("");
                field
                    .trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::invalid(format!("bad number {field:?}: {e}")))
            };
            points.push(Point2::new(parse(0)?, parse(1)?));
        }
        Self::new(points, label)
    }
}

/// Scientific notation with 17 significant digits, enough to round-trip an f64.
pub fn fmt17<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

/// Semi-axes of the elliptical annulus (outer and inner ellipse, both centered at 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseAnnulus<T> {
    pub a_outer: T,
    pub b_outer: T,
    pub a_inner: T,
    pub b_inner: T,
}

impl<T: Scalar> EllipseAnnulus<T> {
    pub fn new(a_outer: T, b_outer: T, a_inner: T, b_inner: T) -> Result<Self> {
        let all_pos = [a_outer, b_outer, a_inner, b_inner]
            .iter()
            .all(|v| v.is_finite() && *v > T::zero());
        if !all_pos {
            return Err(Error::invalid("ellipse semi-axes must be positive and finite"));
        }
        if !(a_inner < a_outer && b_inner < b_outer) {
            return Err(Error::invalid("inner ellipse must lie strictly inside the outer one"));
        }
        Ok(Self {
            a_outer,
            b_outer,
            a_inner,
            b_inner,
        })
    }

    /// Stand-in geometry (the demonstration's ellipses are not given numerically).
    pub fn preset() -> Self {
        Self::new(T::one(), T::lit(0.5), T::lit(0.6), T::lit(0.25)).expect("valid preset")
    }

    /// Half-height of the outer ellipse at abscissa `x` (0 outside).
    pub fn outer_half_height(&self, x: T) -> T {
        half_height(self.a_outer, self.b_outer, x)
    }

    /// Half-height of the hole at abscissa `x` (0 outside the hole's x-range).
    pub fn inner_half_height(&self, x: T) -> T {
        half_height(self.a_inner, self.b_inner, x)
    }

    fn contains(&self, p: &Point2<T>) -> bool {
        let outer = sq(p.x1 / self.a_outer) + sq(p.x2 / self.b_outer);
        let inner = sq(p.x1 / self.a_inner) + sq(p.x2 / self.b_inner);
        outer <= T::one() && inner >= T::one()
    }
}

fn half_height<T: Scalar>(a: T, b: T, x: T) -> T {
    let r = T::one() - sq(x / a);
    if r > T::zero() {
        b * r.sqrt()
    } else {
        T::zero()
    }
}

#[inline]
fn sq<T: Scalar>(x: T) -> T {
    x * x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDistribution<T> {
    /// Uniform on the closed unit disk.
    UnitDisk,
    /// Uniform on `[0, 1]²`.
    UnitSquare,
    /// Uniform between two concentric ellipses.
    EllipseAnnulus(EllipseAnnulus<T>),
}

impl<T: Scalar> ToyDistribution<T> {
    /// Draws `n` i.i.d. uniform points from the support. Identical arguments give
    /// bit-identical output.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet<T>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let mut rng = rng::stream(seed);
        let points = (0..n).map(|_| self.draw(&mut rng)).collect();
        SampleSet::new(points, self.name())
    }

    pub(crate) fn draw(&self, rng: &mut Stream) -> Point2<T> {
        match self {
            Self::UnitDisk => {
                let r = rng::unit::<T>(rng).sqrt();
                let theta = T::TAU() * rng::unit::<T>(rng);
                // r ≤ 1 but cos/sin rounding can push r·cos past the boundary by an ulp.
                clamp_to_disk(Point2::new(r * theta.cos(), r * theta.sin()))
            }
            Self::UnitSquare => Point2::new(rng::unit(rng), rng::unit(rng)),
            Self::EllipseAnnulus(e) => loop {
                let p = Point2::new(
                    rng::uniform(rng, -e.a_outer, e.a_outer),
                    rng::uniform(rng, -e.b_outer, e.b_outer),
                );
                if e.contains(&p) {
                    break p;
                }
            },
        }
    }

    /// True iff `p` lies in the closed support.
    pub fn support_contains(&self, p: &Point2<T>) -> bool {
        match self {
            Self::UnitDisk => sq(p.x1) + sq(p.x2) <= T::one(),
            Self::UnitSquare => {
                let unit = |v: T| v >= T::zero() && v <= T::one();
                unit(p.x1) && unit(p.x2)
            }
            Self::EllipseAnnulus(e) => e.contains(p),
        }
    }

    /// Range of the observed coordinate over the support.
    pub fn x1_range(&self) -> (T, T) {
        match self {
            Self::UnitDisk => (-T::one(), T::one()),
            Self::UnitSquare => (T::zero(), T::one()),
            Self::EllipseAnnulus(e) => (-e.a_outer, e.a_outer),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::UnitDisk => "unit_disk",
            Self::UnitSquare => "unit_square",
            Self::EllipseAnnulus(_) => "ellipse_annulus",
        }
    }

    /// Draws `n` observations `y = x1` from the distribution's x1-marginal.
    pub fn sample_observations(&self, n: usize, seed: u64) -> Result<Vec<T>> {
        Ok(self.sample(n, seed)?.points().iter().map(|p| p.x1).collect())
    }
}

fn clamp_to_disk<T: Scalar>(p: Point2<T>) -> Point2<T> {
    let mut q = p;
    while sq(q.x1) + sq(q.x2) > T::one() {
        let r = (sq(q.x1) + sq(q.x2)).sqrt();
        q = Point2::new(q.x1 / r, q.x2 / r);
        if sq(q.x1) + sq(q.x2) > T::one() {
            // division can round up too; shrink by an ulp-scale factor
            q = Point2::new(q.x1 * (T::one() - T::epsilon()), q.x2 * (T::one() - T::epsilon()));
        }
    }
    q
}

/// Density of the disk's x1-marginal, `(2/π)·√(1 − x1²)` on `[-1, 1]`.
pub fn disk_marginal_density<T: Scalar>(x1: T) -> T {
    if x1.abs() > T::one() {
        T::zero()
    } else {
        T::lit(2.0) / T::PI() * (T::one() - x1 * x1).sqrt()
    }
}

/// Half-length of the disk's vertical chord at `y`, `√(1 − y²)`.
pub fn disk_half_chord<T: Scalar>(y: T) -> T {
    (T::one() - y * y).max(T::zero()).sqrt()
}

/// Exact posterior sampler of the disk: `x1 = y`, `x2 ~ U(−√(1−y²), √(1−y²))`.
pub fn posterior_sample_disk<T: Scalar>(y: T, n: usize, seed: u64) -> Result<SampleSet<T>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    check_disk_observation(y)?;
    let mut rng = rng::stream(seed);
    let points = (0..n)
        .map(|_| Point2::new(y, disk_posterior_x2(y, rng::unit(&mut rng))))
        .collect();
    SampleSet::new(points, "disk_posterior")
}

pub(crate) fn check_disk_observation<T: Scalar>(y: T) -> Result<()> {
    if y.is_finite() && y.abs() <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("observation {y} outside [-1, 1]")))
    }
}

/// Maps a uniform variate `u ∈ [0,1)` onto the chord at `y`.
pub(crate) fn disk_posterior_x2<T: Scalar>(y: T, u: T) -> T {
    let half = disk_half_chord(y);
    if half == T::zero() {
        T::zero()
    } else {
        (T::lit(2.0) * u - T::one()) * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
        let n = xs.clone().count() as f64;
        let m = xs.clone().sum::<f64>() / n;
        let v = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        (m, v)
    }

    #[test]
    fn zero_count_rejected() {
        assert!(matches!(
            ToyDistribution::<f64>::UnitDisk.sample(0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(posterior_sample_disk(0.0f64, 0, 1).is_err());
    }

    #[test]
    fn disk_samples_inside_support() {
        let d = ToyDistribution::<f64>::UnitDisk;
        let s = d.sample(1000, 3).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.points().iter().all(|p| p.x1 * p.x1 + p.x2 * p.x2 <= 1.0));
    }

    #[test]
    fn disk_moments() {
        // E[x1] = 0, E[x1²] = 1/4 for the uniform unit disk.
        let s = ToyDistribution::<f64>::UnitDisk.sample(10_000, 5).unwrap();
        let (m, v) = mean_var(s.points().iter().map(|p| p.x1));
        assert!(m.abs() <= 3.0 * 0.5 / 100.0, "mean {m}");
        assert!((v - 0.25).abs() <= 0.02, "var {v}");
    }

    #[test]
    fn square_moments() {
        let s = ToyDistribution::<f64>::UnitSquare.sample(10_000, 9).unwrap();
        let (m1, _) = mean_var(s.points().iter().map(|p| p.x1));
        let (m2, _) = mean_var(s.points().iter().map(|p| p.x2));
        assert!((m1 - 0.5).abs() <= 0.02 && (m2 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn support_queries() {
        let disk = ToyDistribution::<f64>::UnitDisk;
        assert!(disk.support_contains(&Point2::new(0.0, 0.0)));
        assert!(!disk.support_contains(&Point2::new(1.1, 0.0)));
        let ann = ToyDistribution::EllipseAnnulus(EllipseAnnulus::new(1.0, 0.5, 0.6, 0.3).unwrap());
        assert!(!ann.support_contains(&Point2::new(0.0, 0.0)));
        assert!(ann.support_contains(&Point2::new(0.0, 0.4)));
        assert!(ann.support_contains(&Point2::new(0.8, 0.0)));
        let sq = ToyDistribution::<f64>::UnitSquare;
        assert!(sq.support_contains(&Point2::new(1.0, 0.0)));
        assert!(!sq.support_contains(&Point2::new(-0.01, 0.5)));
    }

    #[test]
    fn bad_annulus_rejected() {
        assert!(EllipseAnnulus::new(1.0, 0.5, 1.0, 0.3).is_err());
        assert!(EllipseAnnulus::new(1.0, 0.5, 0.6, -0.3).is_err());
    }

    #[test]
    fn annulus_sampling_avoids_hole() {
        let d = ToyDistribution::EllipseAnnulus(EllipseAnnulus::<f64>::preset());
        let s = d.sample(2000, 1).unwrap();
        assert!(s.points().iter().all(|p| d.support_contains(p)));
    }

    #[test]
    fn posterior_edge_and_chord() {
        let s = posterior_sample_disk(1.0f64, 17, 4).unwrap();
        assert!(s.points().iter().all(|p| *p == Point2::new(1.0, 0.0)));

        let s = posterior_sample_disk(0.0f64, 10_000, 4).unwrap();
        let (m, _) = mean_var(s.points().iter().map(|p| p.x2));
        assert!(m.abs() <= 0.02);
        assert!(s.points().iter().all(|p| p.x2.abs() <= 1.0 && p.x1 == 0.0));

        // √(1 − 0.36) = 0.8
        let s = posterior_sample_disk(0.6f64, 1000, 4).unwrap();
        assert!(s.points().iter().all(|p| p.x2.abs() <= 0.8 && p.x1 == 0.6));

        assert!(posterior_sample_disk(1.0001f64, 3, 4).is_err());
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        let n = 200_000;
        let h = 2.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| disk_marginal_density(-1.0 + (i as f64 + 0.5) * h) * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = ToyDistribution::<f64>::UnitDisk.sample(50, 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        let back = SampleSet::<f64>::read_csv(buf.as_slice(), s.label()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn f32_sampling_works() {
        let s = ToyDistribution::<f32>::UnitDisk.sample(100, 1).unwrap();
        assert!(s.points().iter().all(|p| p.x1 * p.x1 + p.x2 * p.x2 <= 1.0));
    }
}
