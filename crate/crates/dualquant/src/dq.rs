//! Local dual quantization errors, random splitting, and Monte Carlo
//! distortion estimation.
//!
//! For a site xi and a finite grid, the local error is
//!
//! ```text
//! F_p(xi)^p = min { sum_i w_i ||xi - x_i||^p :
//!                   w >= 0, sum_i w_i x_i = xi, sum_i w_i = 1 },
//! ```
//!
//! finite exactly when xi lies in the convex hull of the grid. The
//! extended functional falls back to the distance to the nearest grid
//! point outside the hull, so it is finite everywhere and supports
//! distributions with unbounded support.
//!
//! The optimal weights form a probability vector on at most d+1
//! affinely independent grid points, and drawing a support point with
//! those probabilities gives the random splitting operator, whose
//! defining property is intrinsic stationarity: the conditional mean of
//! the split equals the site.
//!
//! Distortion functionals `E[F_p(X)^p]` are estimated by seeded Monte
//! Carlo with deterministic shard-wise accumulation, so a (seed,
//! sample-count) pair fully determines every reported digit. A
//! brute-force subset-enumeration solver over supports of size <= d+1
//! provides an independent oracle for the LP on small instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::core::{norm_eval, DistributionSpec, Grid, NormSpec, Point, RngStream};
use crate::error::{Error, Result};
use crate::lp::{solve_barycentric_min, BarycentricCertificate, BarycentricProblem};
use crate::stats::Welford;
use crate::structured::{local_error_1d, ProductGrid};

/// Number of samples drawn per RNG shard during Monte Carlo runs. Each
/// shard runs on its own child stream, so estimates are reproducible
/// and independent of any future parallelization of the shard loop.
pub(crate) const SHARD_SIZE: usize = 1 << 14;

/// Brute-force enumeration limits.
const BRUTE_FORCE_MAX_N: usize = 12;
const BRUTE_FORCE_MAX_D: usize = 4;

/// Which branch of the extended functional produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// The site lies in the convex hull; the value is the barycentric
    /// minimum.
    Dual,
    /// The site lies outside the hull; the value is the p-th power of
    /// the distance to the nearest grid point.
    NearestNeighbor,
}

/// Local error value together with its optimality evidence.
#[derive(Debug, Clone)]
pub struct LocalErrorResult {
    /// The p-th power error `F_p(site)^p` (or the extended fallback).
    pub value_p: f64,
    /// Which functional branch applied.
    pub branch: Branch,
    /// Optimal barycentric certificate (dual branch only).
    pub certificate: Option<BarycentricCertificate>,
    /// Index of the nearest grid point (nearest-neighbor branch only).
    pub nearest_index: Option<usize>,
}

/// Exact local error `F_p(site)^p`; sites outside the convex hull are
/// an [`Error::OutsideHull`].
pub fn local_error(site: &Point, grid: &Grid, p: f64, norm: NormSpec) -> Result<LocalErrorResult> {
    let problem = BarycentricProblem::new(site, grid, p, norm)?;
    let certificate = solve_barycentric_min(&problem)?;
    Ok(LocalErrorResult {
        value_p: certificate.value,
        branch: Branch::Dual,
        certificate: Some(certificate),
        nearest_index: None,
    })
}

/// Extended local error: the barycentric minimum inside the hull, the
/// nearest-neighbor distance (to the p-th power) outside.
pub fn local_error_extended(
    site: &Point,
    grid: &Grid,
    p: f64,
    norm: NormSpec,
) -> Result<LocalErrorResult> {
    let problem = BarycentricProblem::new(site, grid, p, norm)?;
    match solve_barycentric_min(&problem) {
        Ok(certificate) => Ok(LocalErrorResult {
            value_p: certificate.value,
            branch: Branch::Dual,
            certificate: Some(certificate),
            nearest_index: None,
        }),
        Err(Error::OutsideHull) => {
            let (index, dist) = nearest_neighbor_project(site, grid, norm)?;
            Ok(LocalErrorResult {
                value_p: dist.powf(p),
                branch: Branch::NearestNeighbor,
                certificate: None,
                nearest_index: Some(index),
            })
        }
        Err(e) => Err(e),
    }
}

/// Index and distance of the grid point nearest to the site, breaking
/// ties by lowest index.
pub fn nearest_neighbor_project(site: &Point, grid: &Grid, norm: NormSpec) -> Result<(usize, f64)> {
    if site.dim() != grid.dim() {
        return Err(Error::InvalidInput(format!(
            "site dimension {} does not match grid dimension {}",
            site.dim(),
            grid.dim()
        )));
    }
    let mut best = (0_usize, f64::INFINITY);
    for (i, x) in grid.points().iter().enumerate() {
        let d = norm_eval(&site.sub(x), norm);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// Draws one split of the site: a support point of the optimal
/// certificate, sampled with the certificate weights. The conditional
/// mean of the draw is exactly the site (intrinsic stationarity).
pub fn split_with(
    site: &Point,
    grid: &Grid,
    p: f64,
    norm: NormSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    let problem = BarycentricProblem::new(site, grid, p, norm)?;
    let certificate = solve_barycentric_min(&problem)?;
    Ok(draw_from_certificate(&certificate, grid, rng))
}

/// One-shot [`split_with`] on a fresh RNG from the stream.
pub fn split(site: &Point, grid: &Grid, p: f64, norm: NormSpec, stream: &RngStream) -> Result<Point> {
    split_with(site, grid, p, norm, &mut stream.rng())
}

/// Extended split: outside the hull the site collapses to its nearest
/// grid point with probability one.
pub fn split_extended_with(
    site: &Point,
    grid: &Grid,
    p: f64,
    norm: NormSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    let result = local_error_extended(site, grid, p, norm)?;
    match result.branch {
        Branch::Dual => {
            let certificate = result.certificate.expect("dual branch carries a certificate");
            Ok(draw_from_certificate(&certificate, grid, rng))
        }
        Branch::NearestNeighbor => {
            let index = result.nearest_index.expect("nn branch carries an index");
            Ok(grid.point(index).clone())
        }
    }
}

/// One-shot [`split_extended_with`] on a fresh RNG from the stream.
pub fn split_extended(
    site: &Point,
    grid: &Grid,
    p: f64,
    norm: NormSpec,
    stream: &RngStream,
) -> Result<Point> {
    split_extended_with(site, grid, p, norm, &mut stream.rng())
}

/// CDF walk over the certificate support in index order.
fn draw_from_certificate(
    certificate: &BarycentricCertificate,
    grid: &Grid,
    rng: &mut ChaCha8Rng,
) -> Point {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (&i, &w) in certificate.support.iter().zip(&certificate.weights) {
        cum += w;
        if u < cum {
            return grid.point(i).clone();
        }
    }
    let last = *certificate.support.last().expect("nonempty support");
    grid.point(last).clone()
}

/// Independent oracle: enumerates every support of size <= d+1 and
/// solves the affine weight system by least squares, keeping the
/// cheapest feasible combination. Exponential in `n`, hence the guards.
pub fn local_error_bruteforce(site: &Point, grid: &Grid, p: f64, norm: NormSpec) -> Result<f64> {
    let n = grid.size();
    let d = grid.dim();
    if n > BRUTE_FORCE_MAX_N || d > BRUTE_FORCE_MAX_D {
        return Err(Error::TooLarge {
            max_n: BRUTE_FORCE_MAX_N,
            max_d: BRUTE_FORCE_MAX_D,
        });
    }
    let problem = BarycentricProblem::new(site, grid, p, norm)?;
    let costs = &problem.costs;

    // Center at the site and scale, as in the LP path.
    let diffs: Vec<Vec<f64>> = grid.points().iter().map(|x| x.sub(site)).collect();
    let scale = diffs
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        // Single grid point equal to the site.
        return Ok(0.0);
    }

    let mut best: Option<f64> = None;
    for mask in 1_u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k > d + 1 {
            continue;
        }
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        // Columns (v_i / scale; 1), right-hand side e_{d+1}.
        let cols: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| {
                let mut c: Vec<f64> = diffs[i].iter().map(|x| x / scale).collect();
                c.push(1.0);
                c
            })
            .collect();
        let mut rhs = vec![0.0; d + 1];
        rhs[d] = 1.0;
        let Some(mu) = least_squares_qr(&cols, &rhs) else {
            continue; // affinely dependent subset: covered by a smaller one
        };
        // Feasibility: system solved and weights (essentially) nonnegative.
        let mut residual = rhs;
        for (j, &m) in mu.iter().enumerate() {
            for (r, &a) in residual.iter_mut().zip(&cols[j]) {
                *r -= m * a;
            }
        }
        if residual.iter().any(|r| r.abs() > 1e-8) {
            continue;
        }
        if mu.iter().any(|&m| m < -1e-10) {
            continue;
        }
        let cost: f64 = subset.iter().zip(&mu).map(|(&i, &m)| costs[i] * m.max(0.0)).sum();
        best = Some(best.map_or(cost, |b: f64| b.min(cost)));
    }
    best.ok_or(Error::OutsideHull)
}

/// Least-squares solve of `A mu = b` by modified Gram-Schmidt QR;
/// `None` when the columns are numerically rank-deficient.
fn least_squares_qr(cols: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let k = cols.len();
    let mut q: Vec<Vec<f64>> = cols.to_vec();
    let mut r = vec![vec![0.0_f64; k]; k];
    for j in 0..k {
        for i in 0..j {
            let c: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = c;
            let qi = q[i].clone();
            for (x, y) in q[j].iter_mut().zip(&qi) {
                *x -= c * y;
            }
        }
        let norm: f64 = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return None;
        }
        r[j][j] = norm;
        for x in &mut q[j] {
            *x /= norm;
        }
    }
    let mut y: Vec<f64> = (0..k)
        .map(|i| q[i].iter().zip(b).map(|(a, b)| a * b).sum())
        .collect();
    for i in (0..k).rev() {
        for j in (i + 1)..k {
            y[i] = y[i] - r[i][j] * y[j];
        }
        y[i] /= r[i][i];
    }
    Some(y)
}

/// Monte Carlo estimate of a distortion moment `E[F_p(X)^p]`.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    /// Sample mean of the p-th power local error.
    pub estimate_p: f64,
    /// Standard error of `estimate_p`.
    pub std_error_p: f64,
    /// Number of Monte Carlo samples.
    pub samples: usize,
    /// Whether the extended (everywhere-finite) functional was used.
    pub extended: bool,
    /// Fraction of samples that fell outside the hull (zero unless
    /// `extended`).
    pub nn_fraction: f64,
    /// Moment exponent.
    pub p: f64,
    /// Norm the errors were measured in.
    pub norm: NormSpec,
}

impl DistortionReport {
    /// The distortion modulus itself, `estimate_p^(1/p)`.
    pub fn root_estimate(&self) -> f64 {
        if self.estimate_p <= 0.0 {
            0.0
        } else {
            self.estimate_p.powf(1.0 / self.p)
        }
    }

    /// Delta-method standard error of [`Self::root_estimate`].
    pub fn root_std_error(&self) -> f64 {
        if self.estimate_p <= 0.0 {
            return 0.0;
        }
        self.std_error_p * self.estimate_p.powf(1.0 / self.p - 1.0) / self.p
    }
}

/// Runs the shared shard loop: draws `samples` sites and pushes
/// `f(site)` into a Welford accumulator, merging shards in index order.
pub(crate) fn monte_carlo_moment<F>(
    dist: &DistributionSpec,
    samples: usize,
    stream: &RngStream,
    mut f: F,
) -> Result<(Welford, u64)>
where
    F: FnMut(&Point) -> Result<(f64, bool)>,
{
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one Monte Carlo sample".into()));
    }
    let mut total = Welford::new();
    let mut flagged = 0_u64;
    let mut remaining = samples;
    let mut shard_index = 0_u64;
    while remaining > 0 {
        let count = remaining.min(SHARD_SIZE);
        let mut rng = stream.child(shard_index).rng();
        let mut shard = Welford::new();
        for _ in 0..count {
            let site = dist.sample_one(&mut rng);
            let (value, flag) = f(&site)?;
            shard.push(value);
            if flag {
                flagged += 1;
            }
        }
        total.merge(&shard);
        remaining -= count;
        shard_index += 1;
    }
    Ok((total, flagged))
}

/// Estimates `E[F_p(X)^p]` for `X ~ dist` against a general grid via
/// the LP solver. With `extended = false`, any sample outside the hull
/// aborts the run with [`Error::OutsideHull`].
pub fn estimate_distortion(
    dist: &DistributionSpec,
    grid: &Grid,
    p: f64,
    norm: NormSpec,
    samples: usize,
    stream: &RngStream,
    extended: bool,
) -> Result<DistortionReport> {
    if dist.dim() != grid.dim() {
        return Err(Error::InvalidInput(format!(
            "distribution dimension {} does not match grid dimension {}",
            dist.dim(),
            grid.dim()
        )));
    }
    let (welford, outside) = monte_carlo_moment(dist, samples, stream, |site| {
        if extended {
            let r = local_error_extended(site, grid, p, norm)?;
            Ok((r.value_p, r.branch == Branch::NearestNeighbor))
        } else {
            let r = local_error(site, grid, p, norm)?;
            Ok((r.value_p, false))
        }
    })?;
    Ok(DistortionReport {
        estimate_p: welford.mean(),
        std_error_p: welford.std_error(),
        samples,
        extended,
        nn_fraction: outside as f64 / welford.count() as f64,
        p,
        norm,
    })
}

/// [`estimate_distortion`] specialised to product grids under the l_p
/// norm: per-axis closed forms replace the LP, so lattices never need
/// to be materialized. Outside the bounding box the extended functional
/// is the nearest-lattice-point distance, which also decomposes
/// coordinate-wise.
pub fn estimate_distortion_product(
    dist: &DistributionSpec,
    grid: &ProductGrid,
    p: f64,
    samples: usize,
    stream: &RngStream,
    extended: bool,
) -> Result<DistortionReport> {
    if dist.dim() != grid.dim() {
        return Err(Error::InvalidInput(format!(
            "distribution dimension {} does not match grid dimension {}",
            dist.dim(),
            grid.dim()
        )));
    }
    let (welford, outside) = monte_carlo_moment(dist, samples, stream, |site| {
        product_value(site, grid, p, extended)
    })?;
    Ok(DistortionReport {
        estimate_p: welford.mean(),
        std_error_p: welford.std_error(),
        samples,
        extended,
        nn_fraction: outside as f64 / welford.count() as f64,
        p,
        norm: NormSpec::lr(p).expect("p >= 1 validated by the per-axis closed form"),
    })
}

/// Product-grid local error (p-th power) with the extended fallback.
fn product_value(site: &Point, grid: &ProductGrid, p: f64, extended: bool) -> Result<(f64, bool)> {
    if grid.contains(site) {
        let mut total = 0.0;
        for (&c, axis) in site.coords().iter().zip(grid.axes()) {
            total += local_error_1d(axis, c, p)?;
        }
        Ok((total, false))
    } else if extended {
        // Nearest lattice point under l_p: coordinates decouple.
        let mut total = 0.0;
        for (&c, axis) in site.coords().iter().zip(grid.axes()) {
            let knots = axis.knots();
            let i = knots.partition_point(|&x| x < c);
            let mut d = f64::INFINITY;
            if i < knots.len() {
                d = (knots[i] - c).abs();
            }
            if i > 0 {
                d = d.min((c - knots[i - 1]).abs());
            }
            total += d.powf(p);
        }
        Ok((total, true))
    } else {
        Err(Error::OutsideHull)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structured::{lattice_grid, OrderedGrid1D};
    use rand::SeedableRng;

    fn grid(points: &[&[f64]]) -> Grid {
        Grid::new(points.iter().map(|c| Point::new(c.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn interval_local_error_and_branches() {
        let g = grid(&[&[0.0], &[1.0]]);
        let site = Point::new(vec![0.25]).unwrap();
        let r = local_error(&site, &g, 2.0, NormSpec::L2).unwrap();
        assert!((r.value_p - 0.1875).abs() < 1e-12);
        assert_eq!(r.branch, Branch::Dual);
        let cert = r.certificate.unwrap();
        assert!((cert.weights[0] - 0.75).abs() < 1e-12);

        let outside = Point::new(vec![1.5]).unwrap();
        assert!(matches!(
            local_error(&outside, &g, 2.0, NormSpec::L2),
            Err(Error::OutsideHull)
        ));
        let ext = local_error_extended(&outside, &g, 2.0, NormSpec::L2).unwrap();
        assert_eq!(ext.branch, Branch::NearestNeighbor);
        assert_eq!(ext.nearest_index, Some(1));
        assert!((ext.value_p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nearest_neighbor_breaks_ties_by_lowest_index() {
        let g = grid(&[&[0.0], &[1.0]]);
        let site = Point::new(vec![0.5]).unwrap();
        let (i, d) = nearest_neighbor_project(&site, &g, NormSpec::L2).unwrap();
        assert_eq!(i, 0);
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn brute_force_agrees_with_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1_usize, 2, 3] {
            for n in [d + 1, d + 3, 8] {
                for _ in 0..30 {
                    let points: Vec<Point> = (0..n)
                        .map(|_| {
                            Point::new((0..d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
                        })
                        .collect();
                    let Ok(g) = Grid::new(points) else { continue };
                    let site =
                        Point::new((0..d).map(|_| rng.gen_range(-0.2..1.2)).collect()).unwrap();
                    for p in [1.0, 2.0] {
                        let lp = local_error(&site, &g, p, NormSpec::L2);
                        let bf = local_error_bruteforce(&site, &g, p, NormSpec::L2);
                        match (lp, bf) {
                            (Ok(a), Ok(b)) => assert!(
                                (a.value_p - b).abs() <= 1e-7 * (1.0 + b),
                                "d={d} n={n} p={p}: lp {} vs brute force {b}",
                                a.value_p
                            ),
                            (Err(Error::OutsideHull), Err(Error::OutsideHull)) => {}
                            (a, b) => panic!("disagreement d={d} n={n} p={p}: {a:?} vs {b:?}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn brute_force_guards_large_instances() {
        let g = grid(&[&[0.0; 5], &[1.0; 5]]);
        let site = Point::new(vec![0.5; 5]).unwrap();
        assert!(matches!(
            local_error_bruteforce(&site, &g, 2.0, NormSpec::L2),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn split_is_intrinsically_stationary() {
        let g = grid(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let site = Point::new(vec![0.3, 0.6]).unwrap();
        let stream = RngStream { seed: 11, stream_id: 0 };
        let mut rng = stream.rng();
        let n = 20_000;
        let mut mean = [0.0_f64; 2];
        for _ in 0..n {
            let y = split_with(&site, &g, 2.0, NormSpec::L2, &mut rng).unwrap();
            mean[0] += y.coords()[0];
            mean[1] += y.coords()[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        // Coordinates are Bernoulli-like with variance <= 1/4: a 5-sigma
        // band at n = 20000 is about 0.018.
        assert!((mean[0] - 0.3).abs() < 0.018, "mean {mean:?}");
        assert!((mean[1] - 0.6).abs() < 0.018, "mean {mean:?}");
    }

    #[test]
    fn split_lands_on_certificate_support() {
        let g = grid(&[&[0.0], &[0.5], &[1.0]]);
        let site = Point::new(vec![0.2]).unwrap();
        let stream = RngStream { seed: 3, stream_id: 9 };
        let mut rng = stream.rng();
        for _ in 0..200 {
            let y = split_with(&site, &g, 2.0, NormSpec::L2, &mut rng).unwrap();
            let c = y.coords()[0];
            assert!(c == 0.0 || c == 0.5, "split landed on {c}");
        }
    }

    #[test]
    fn extended_split_collapses_to_nearest_point_outside() {
        let g = grid(&[&[0.0], &[1.0]]);
        let site = Point::new(vec![1.7]).unwrap();
        let stream = RngStream { seed: 5, stream_id: 1 };
        let mut rng = stream.rng();
        for _ in 0..20 {
            let y = split_extended_with(&site, &g, 2.0, NormSpec::L2, &mut rng).unwrap();
            assert_eq!(y.coords(), &[1.0]);
        }
    }

    #[test]
    fn split_one_shot_is_reproducible() {
        let g = grid(&[&[0.0], &[1.0]]);
        let site = Point::new(vec![0.4]).unwrap();
        let stream = RngStream { seed: 42, stream_id: 7 };
        let a = split(&site, &g, 2.0, NormSpec::L2, &stream).unwrap();
        let b = split(&site, &g, 2.0, NormSpec::L2, &stream).unwrap();
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn distortion_estimate_matches_analytic_value() {
        let knots = OrderedGrid1D::uniform(0.0, 1.0, 3).unwrap();
        let dist = DistributionSpec::unit_cube(1).unwrap();
        let stream = RngStream { seed: 1234, stream_id: 0 };
        let report = estimate_distortion(
            &dist,
            &knots.to_grid(),
            2.0,
            NormSpec::L2,
            40_000,
            &stream,
            false,
        )
        .unwrap();
        let exact = 1.0 / 24.0;
        assert!(
            (report.estimate_p - exact).abs() < 4.0 * report.std_error_p,
            "estimate {} vs exact {exact} (SE {})",
            report.estimate_p,
            report.std_error_p
        );
        assert!(report.std_error_p < 1e-3);
        assert_eq!(report.samples, 40_000);
        assert_eq!(report.nn_fraction, 0.0);
        // Root form via the delta method.
        assert!((report.root_estimate() - report.estimate_p.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_extended_run_aborts_outside_hull() {
        let g = grid(&[&[-1.0], &[1.0]]);
        let dist = DistributionSpec::gaussian(1).unwrap();
        let stream = RngStream { seed: 2, stream_id: 0 };
        let err = estimate_distortion(&dist, &g, 2.0, NormSpec::L2, 1000, &stream, false);
        assert!(matches!(err, Err(Error::OutsideHull)));
        // The extended run succeeds and records the outside fraction.
        let report =
            estimate_distortion(&dist, &g, 2.0, NormSpec::L2, 1000, &stream, true).unwrap();
        assert!(report.nn_fraction > 0.1, "fraction {}", report.nn_fraction);
    }

    #[test]
    fn product_fast_path_matches_materialized_lp() {
        let lat = lattice_grid(&[0.0, 0.0], 1.0, 4).unwrap();
        let grid = lat.materialize(64).unwrap();
        let dist = DistributionSpec::unit_cube(2).unwrap();
        let stream = RngStream { seed: 77, stream_id: 0 };
        let fast =
            estimate_distortion_product(&dist, &lat, 2.0, 5_000, &stream, false).unwrap();
        let slow =
            estimate_distortion(&dist, &grid, 2.0, NormSpec::L2, 5_000, &stream, false).unwrap();
        assert!(
            (fast.estimate_p - slow.estimate_p).abs() <= 1e-9 * (1.0 + slow.estimate_p),
            "fast {} vs slow {}",
            fast.estimate_p,
            slow.estimate_p
        );
    }

    #[test]
    fn extended_product_value_uses_nearest_lattice_point() {
        let lat = lattice_grid(&[0.0, 0.0], 1.0, 1).unwrap();
        // Outside the box on one axis only: the in-range axis contributes
        // its nearest-knot distance, not the (larger) dual error.
        let site = Point::new(vec![0.25, 2.0]).unwrap();
        let (v, flagged) = product_value(&site, &lat, 2.0, true).unwrap();
        assert!(flagged);
        assert!((v - (0.0625 + 1.0)).abs() < 1e-12, "value {v}");
        let grid = lat.materialize(8).unwrap();
        let full = local_error_extended(&site, &grid, 2.0, NormSpec::L2).unwrap();
        assert!((v - full.value_p).abs() < 1e-12);
    }

    #[test]
    fn estimates_are_bitwise_reproducible() {
        let g = grid(&[&[0.0], &[0.4], &[1.0]]);
        let dist = DistributionSpec::unit_cube(1).unwrap();
        let stream = RngStream { seed: 9, stream_id: 3 };
        let a = estimate_distortion(&dist, &g, 2.0, NormSpec::L2, 3000, &stream, false).unwrap();
        let b = estimate_distortion(&dist, &g, 2.0, NormSpec::L2, 3000, &stream, false).unwrap();
        assert_eq!(a.estimate_p.to_bits(), b.estimate_p.to_bits());
        assert_eq!(a.std_error_p.to_bits(), b.std_error_p.to_bits());
    }
}
