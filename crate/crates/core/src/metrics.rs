//! Distribution-comparison and robustness measurements.

use serde::{Deserialize, Serialize};

use crate::distributions::{Point2, SampleSet};
use crate::estimators::Estimator;
use crate::rng;
use crate::{Error, Result, Scalar};

/// Default cap on the size of an exact W2 problem (the solver is cubic).
pub const DEFAULT_ASSIGNMENT_CAP: usize = 4096;

/// Measurements for one estimator. Optional metrics are omitted from JSON when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w2: Option<f64>,
    /// Mean attacked objective, squared output units.
    pub robustness_practical: f64,
    pub per_input_std: f64,
    pub consistency_error: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ai_psnr: Option<f64>,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.precision,
            self.recall,
            self.robustness_practical,
            self.per_input_std,
            self.consistency_error,
        ]
        .iter()
        .chain(self.w2.iter())
        .chain(self.ai_psnr.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("metrics must be finite"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.precision) || !unit(self.recall) {
            return Err(Error::invalid("precision and recall must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Minimum-cost perfect matching on a dense square cost matrix (row-major, `n × n`).
/// Returns `assignment[row] = column`.
///
/// Shortest augmenting paths with row/column potentials; `O(n³)`.
pub fn solve_assignment<T: Scalar>(cost: &[T], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    let inf = T::infinity();
    // 1-based potentials; index 0 is the virtual column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let base = (i0 - 1) * n;
            let ui0 = u[i0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[base + j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact W2 between two equal-size empirical measures with the default size cap.
pub fn wasserstein2_exact<T: Scalar>(a: &SampleSet<T>, b: &SampleSet<T>) -> Result<T> {
    wasserstein2_exact_capped(a, b, DEFAULT_ASSIGNMENT_CAP)
}

/// `√(min over bijections of the mean squared distance)`.
pub fn wasserstein2_exact_capped<T: Scalar>(
    a: &SampleSet<T>,
    b: &SampleSet<T>,
    cap: usize,
) -> Result<T> {
    Ok(wasserstein2_squared(a.points(), b.points(), cap)?.sqrt())
}

pub(crate) fn wasserstein2_squared<T: Scalar>(
    a: &[Point2<T>],
    b: &[Point2<T>],
    cap: usize,
) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "W2 needs equal sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n > cap {
        return Err(Error::ResourceLimit {
            what: "assignment size",
            size: n,
            cap,
        });
    }
    if n == 0 {
        return Err(Error::invalid("W2 of empty sets"));
    }
    let cost: Vec<T> = a
        .iter()
        .flat_map(|p| b.iter().map(move |q| p.dist_sq(q)))
        .collect();
    let assignment = solve_assignment(&cost, n);
    let total = assignment
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &j)| acc + cost[i * n + j]);
    Ok((total / T::from_count(n)).max(T::zero()))
}

/// Squared distance from each point to its `k`-th nearest neighbour within the same
/// set, the point itself excluded.
fn knn_radii_sq<T: Scalar>(set: &[Point2<T>], k: usize) -> Vec<T> {
    let mut row = Vec::with_capacity(set.len());
    set.iter()
        .enumerate()
        .map(|(i, p)| {
            row.clear();
            row.extend(
                set.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| p.dist_sq(q)),
            );
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite"));
            *kth
        })
        .collect()
}

/// Fraction of `queries` inside at least one ball `(centers[j], radius_j)`.
fn coverage<T: Scalar>(queries: &[Point2<T>], centers: &[Point2<T>], radii_sq: &[T]) -> T {
    let covered = queries
        .iter()
        .filter(|q| centers.iter().zip(radii_sq).any(|(c, &r)| q.dist_sq(c) <= r))
        .count();
    T::from_count(covered) / T::from_count(queries.len())
}

/// k-NN manifold precision and recall on raw 2D coordinates.
///
/// Precision is the fraction of fake points inside the union of real k-NN balls;
/// recall swaps the roles.
pub fn precision_recall<T: Scalar>(
    real: &SampleSet<T>,
    fake: &SampleSet<T>,
    k: usize,
) -> Result<(T, T)> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k >= real.len() || k >= fake.len() {
        return Err(Error::invalid(format!(
            "k = {k} needs more than k points in both sets ({} real, {} fake)",
            real.len(),
            fake.len()
        )));
    }
    let real_r = knn_radii_sq(real.points(), k);
    let fake_r = knn_radii_sq(fake.points(), k);
    let precision = coverage(fake.points(), real.points(), &real_r);
    let recall = coverage(real.points(), fake.points(), &fake_r);
    Ok((precision, recall))
}

/// Coverage of `fake` by `real`'s k-NN balls computed once, for re-use across fakes.
pub struct RealManifold<T> {
    points: Vec<Point2<T>>,
    radii_sq: Vec<T>,
}

impl<T: Scalar> RealManifold<T> {
    pub fn new(real: &SampleSet<T>, k: usize) -> Result<Self> {
        if k == 0 || k >= real.len() {
            return Err(Error::invalid("k must satisfy 0 < k < |real|"));
        }
        Ok(Self {
            points: real.points().to_vec(),
            radii_sq: knn_radii_sq(real.points(), k),
        })
    }

    /// Fraction of `points` covered by this manifold.
    pub fn covered_fraction(&self, points: &[Point2<T>]) -> T {
        coverage(points, &self.points, &self.radii_sq)
    }
}

/// Standard deviation (n − 1 denominator) of the free coordinate over `n_seeds`
/// estimates at `y`, seeds derived from `seed`.
pub fn per_input_std<T: Scalar>(est: &Estimator<T>, y: T, n_seeds: usize, seed: u64) -> Result<T> {
    if n_seeds < 2 {
        return Err(Error::invalid("per-input std needs at least two seeds"));
    }
    if est.is_deterministic() {
        est.check_domain(y)?;
        return Ok(T::zero());
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| rng::child(seed, i)).collect();
    let ys = vec![y; n_seeds];
    let xs: Vec<T> = est.estimate_many(&ys, &seeds)?.iter().map(|p| p.x2).collect();
    Ok(sample_std(&xs))
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std<T: Scalar>(xs: &[T]) -> T {
    let n = T::from_count(xs.len());
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
    (ss / (n - T::one())).sqrt()
}

/// `max_i |estimate(yᵢ).x1 − yᵢ|`, one seed per input.
pub fn consistency_error<T: Scalar>(est: &Estimator<T>, inputs: &[T], seed: u64) -> Result<T> {
    if inputs.is_empty() {
        return Err(Error::invalid("consistency check needs inputs"));
    }
    let seeds: Vec<u64> = (0..inputs.len() as u64).map(|i| rng::child(seed, i)).collect();
    let out = est.estimate_many(inputs, &seeds)?;
    Ok(inputs
        .iter()
        .zip(&out)
        .fold(T::zero(), |m, (&y, p)| m.max((p.x1 - y).abs())))
}

/// `10·log₁₀(peak² / MSE)`; identical inputs give `+∞`.
pub fn psnr<T: Scalar>(a: &[T], b: &[T], peak: T) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("PSNR needs two nonempty vectors of equal length"));
    }
    if peak.is_nan() || peak <= T::zero() {
        return Err(Error::invalid("peak must be positive"));
    }
    let mse = a
        .iter()
        .zip(b)
        .fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
        / T::from_count(a.len());
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (peak * peak / mse).log10())
}

/// How the two conditional sample sets draw their seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPairing {
    /// Fresh, independent seeds on each side.
    Independent,
    /// The same `m` seeds on both sides (a coupling of the two conditionals).
    Shared,
}

/// Squared exact W2 between `m` conditional outputs at `y` and at `y + delta`.
pub fn w2_conditional_sensitivity<T: Scalar>(
    est: &Estimator<T>,
    y: T,
    delta: T,
    m: usize,
    seed: u64,
    pairing: SeedPairing,
) -> Result<T> {
    est.check_domain(y)?;
    est.check_domain(y + delta)?;
    if m == 0 {
        return Err(Error::invalid("need at least one sample per side"));
    }
    if m > DEFAULT_ASSIGNMENT_CAP {
        return Err(Error::ResourceLimit {
            what: "conditional sample count",
            size: m,
            cap: DEFAULT_ASSIGNMENT_CAP,
        });
    }
    let left_seeds: Vec<u64> = (0..m as u64).map(|i| rng::child(seed, i)).collect();
    let right_seeds: Vec<u64> = match pairing {
        SeedPairing::Shared => left_seeds.clone(),
        SeedPairing::Independent => {
            let other = rng::labeled(seed, "w2-right");
            (0..m as u64).map(|i| rng::child(other, i)).collect()
        }
    };
    let left = est.estimate_many(&vec![y; m], &left_seeds)?;
    let right = est.estimate_many(&vec![y + delta; m], &right_seeds)?;
    if est.is_deterministic() {
        // Both sides are m copies of a single point.
        return Ok(left[0].dist_sq(&right[0]));
    }
    wasserstein2_squared(&left, &right, DEFAULT_ASSIGNMENT_CAP)
}
