//! One-dimensional closed forms and product (lattice) grids.
//!
//! On the real line the barycentric minimization has an explicit
//! solution: for a site xi strictly between consecutive knots
//! `a = x_i < xi < x_{i+1} = b` the optimal weights sit on the
//! bracketing pair, giving
//!
//! ```text
//! F^p(xi) = [ (b - xi) (xi - a)^p + (xi - a) (b - xi)^p ] / (b - a).
//! ```
//!
//! Integrating that expression against the uniform density over each
//! cell of width `Delta_i` yields the exact distortion
//! `sum_i 2 Delta_i^{p+1} / ((p+1)(p+2))`, which serves as a closed-form
//! oracle for the Monte Carlo machinery.
//!
//! Product grids store one ordered knot set per axis and never
//! materialize the full lattice unless explicitly asked: under the l_p
//! norm with r = p the local error of a product grid decomposes into a
//! sum of per-axis one-dimensional errors, so even lattices with
//! millions of points are evaluated in O(d log n).

use crate::core::{Grid, NormSpec, Point};
use crate::error::{Error, Result};

/// Strictly increasing knot sequence on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedGrid1D {
    knots: Vec<f64>,
}

impl OrderedGrid1D {
    /// Validates strict monotonicity and finiteness.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("a 1D grid needs at least one knot".into()));
        }
        if knots.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "knots must be strictly increasing".into(),
            ));
        }
        Ok(OrderedGrid1D { knots })
    }

    /// `n` equally spaced knots from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "a uniform grid needs at least 2 knots, got {n}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "uniform grid endpoints must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut knots: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        // Pin the last knot so the span is exact regardless of rounding.
        *knots.last_mut().expect("n >= 2") = hi;
        OrderedGrid1D::new(knots)
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn min(&self) -> f64 {
        self.knots[0]
    }

    pub fn max(&self) -> f64 {
        *self.knots.last().expect("validated nonempty")
    }

    /// The same knots as a general one-dimensional [`Grid`].
    pub fn to_grid(&self) -> Grid {
        let points = self
            .knots
            .iter()
            .map(|&x| Point::new(vec![x]).expect("finite knot"))
            .collect();
        Grid::new(points).expect("strictly increasing knots are distinct")
    }
}

/// Exact local error `F^p(site)` of an ordered 1D grid via the
/// bracketing-pair closed form. Sites at a knot return 0; sites outside
/// the knot range are rejected with [`Error::OutsideRange`].
pub fn local_error_1d(grid: &OrderedGrid1D, site: f64, p: f64) -> Result<f64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidInput(format!("exponent p must satisfy p >= 1, got {p}")));
    }
    if !site.is_finite() {
        return Err(Error::InvalidInput(format!("site must be finite, got {site}")));
    }
    let knots = grid.knots();
    let (lo, hi) = (grid.min(), grid.max());
    if site < lo || site > hi {
        return Err(Error::OutsideRange { site, lo, hi });
    }
    // First knot >= site; equality means the site is a knot.
    let i = knots.partition_point(|&x| x < site);
    if i < knots.len() && knots[i] == site {
        return Ok(0.0);
    }
    let (a, b) = (knots[i - 1], knots[i]);
    Ok(bracket_error(a, b, site, p))
}

/// Closed-form cell error for a site strictly inside `(a, b)`.
pub(crate) fn bracket_error(a: f64, b: f64, site: f64, p: f64) -> f64 {
    ((b - site) * (site - a).powf(p) + (site - a) * (b - site).powf(p)) / (b - a)
}

/// Exact distortion `E[F^p(U)]` for `U ~ Uniform[0, 1]` against a grid
/// that spans `[0, 1]`: `sum_i 2 Delta_i^{p+1} / ((p+1)(p+2))`.
pub fn analytic_distortion_uniform_1d(grid: &OrderedGrid1D, p: f64) -> Result<f64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidInput(format!("exponent p must satisfy p >= 1, got {p}")));
    }
    let (lo, hi) = (grid.min(), grid.max());
    if lo.abs() > 1e-12 || (hi - 1.0).abs() > 1e-12 {
        return Err(Error::SpanMismatch { lo, hi });
    }
    let coeff = 2.0 / ((p + 1.0) * (p + 2.0));
    Ok(grid
        .knots()
        .windows(2)
        .map(|w| coeff * (w[1] - w[0]).powf(p + 1.0))
        .sum())
}

/// Cartesian product of per-axis ordered knot sets. The lattice itself
/// is only materialized on demand.
#[derive(Debug, Clone)]
pub struct ProductGrid {
    axes: Vec<OrderedGrid1D>,
}

impl ProductGrid {
    pub fn new(axes: Vec<OrderedGrid1D>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("a product grid needs at least one axis".into()));
        }
        Ok(ProductGrid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total lattice size (saturating, since per-axis counts multiply).
    pub fn size(&self) -> usize {
        self.axes
            .iter()
            .fold(1_usize, |acc, a| acc.saturating_mul(a.len()))
    }

    pub fn axes(&self) -> &[OrderedGrid1D] {
        &self.axes
    }

    pub fn axis(&self, j: usize) -> &OrderedGrid1D {
        &self.axes[j]
    }

    /// Whether the site lies in the box `prod_j [min_j, max_j]` — the
    /// convex hull of the lattice.
    pub fn contains(&self, site: &Point) -> bool {
        site.dim() == self.dim()
            && site
                .coords()
                .iter()
                .zip(&self.axes)
                .all(|(&c, a)| c >= a.min() && c <= a.max())
    }

    /// Enumerates the full lattice (last axis fastest) as a [`Grid`],
    /// refusing to allocate more than `max_points` points.
    pub fn materialize(&self, max_points: usize) -> Result<Grid> {
        let size = self.size();
        if size > max_points {
            return Err(Error::TooLarge {
                max_n: max_points,
                max_d: self.dim(),
            });
        }
        let d = self.dim();
        let mut points = Vec::with_capacity(size);
        let mut odometer = vec![0_usize; d];
        loop {
            let coords: Vec<f64> = odometer
                .iter()
                .zip(&self.axes)
                .map(|(&i, a)| a.knots()[i])
                .collect();
            points.push(Point::new(coords).expect("finite knots"));
            // Advance the odometer, last axis fastest.
            let mut axis = d;
            loop {
                if axis == 0 {
                    return Grid::new(points);
                }
                axis -= 1;
                odometer[axis] += 1;
                if odometer[axis] < self.axes[axis].len() {
                    break;
                }
                odometer[axis] = 0;
            }
        }
    }
}

/// Uniform lattice over the cube `corner + [0, edge]^d` with `m`
/// subdivisions (hence `m + 1` knots) per axis.
pub fn lattice_grid(corner: &[f64], edge: f64, m: usize) -> Result<ProductGrid> {
    if corner.is_empty() || corner.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("lattice corner must be nonempty and finite".into()));
    }
    if !(edge.is_finite() && edge > 0.0) {
        return Err(Error::InvalidInput(format!("lattice edge must be positive, got {edge}")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("lattice needs at least 1 subdivision".into()));
    }
    let axes = corner
        .iter()
        .map(|&c| OrderedGrid1D::uniform(c, c + edge, m + 1))
        .collect::<Result<Vec<_>>>()?;
    ProductGrid::new(axes)
}

/// Local error of a product grid by per-axis decomposition:
/// `F_p^p(site) = sum_j F^p(site_j)` under the l_r norm with `r = p`.
/// Other norms do not decompose and are rejected.
pub fn product_local_error(site: &Point, grid: &ProductGrid, p: f64, norm: NormSpec) -> Result<f64> {
    if site.dim() != grid.dim() {
        return Err(Error::InvalidInput(format!(
            "site dimension {} does not match grid dimension {}",
            site.dim(),
            grid.dim()
        )));
    }
    match norm {
        NormSpec::Lr { r } if (r - p).abs() <= 1e-12 => {}
        NormSpec::Lr { r } => return Err(Error::NormMismatch { r, p }),
        NormSpec::LInf => {
            return Err(Error::NormMismatch {
                r: f64::INFINITY,
                p,
            })
        }
    }
    site.coords()
        .iter()
        .zip(grid.axes())
        .map(|(&c, axis)| local_error_1d(axis, c, p))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_barycentric_min, BarycentricProblem};

    #[test]
    fn rejects_unsorted_and_duplicate_knots() {
        assert!(OrderedGrid1D::new(vec![]).is_err());
        assert!(OrderedGrid1D::new(vec![0.0, 0.0]).is_err());
        assert!(OrderedGrid1D::new(vec![1.0, 0.5]).is_err());
        assert!(OrderedGrid1D::new(vec![0.0, f64::NAN]).is_err());
        assert!(OrderedGrid1D::new(vec![0.5]).is_ok());
    }

    #[test]
    fn uniform_grid_pins_both_endpoints() {
        let g = OrderedGrid1D::uniform(0.0, 1.0, 7).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.min(), 0.0);
        assert_eq!(g.max(), 1.0);
        let g2 = OrderedGrid1D::uniform(0.1, 0.7, 4).unwrap();
        assert_eq!(g2.max(), 0.7);
    }

    #[test]
    fn interval_local_error_closed_form() {
        let g = OrderedGrid1D::new(vec![0.0, 1.0]).unwrap();
        // (0.75)(0.25)^2 + (0.25)(0.75)^2 = 0.1875
        let v = local_error_1d(&g, 0.25, 2.0).unwrap();
        assert!((v - 0.1875).abs() < 1e-15);
        // Knots and endpoints give zero.
        assert_eq!(local_error_1d(&g, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(local_error_1d(&g, 1.0, 2.0).unwrap(), 0.0);
        // Outside the range is an error carrying the bounds.
        match local_error_1d(&g, 1.5, 2.0) {
            Err(Error::OutsideRange { site, lo, hi }) => {
                assert_eq!((site, lo, hi), (1.5, 0.0, 1.0));
            }
            other => panic!("expected OutsideRange, got {other:?}"),
        }
    }

    #[test]
    fn local_error_matches_lp_on_random_instances() {
        // Deterministic pseudo-random sweep: the LP must agree with the
        // closed form to near machine precision.
        let knots = vec![-1.0, -0.3, 0.2, 0.9, 1.7, 2.0];
        let g1 = OrderedGrid1D::new(knots.clone()).unwrap();
        let g = g1.to_grid();
        for k in 0..200 {
            let site = -1.0 + 3.0 * (k as f64 + 0.5) / 200.0;
            for p in [1.0, 2.0, 3.5] {
                let s = Point::new(vec![site]).unwrap();
                let problem = BarycentricProblem::new(&s, &g, p, NormSpec::L2).unwrap();
                let lp = solve_barycentric_min(&problem).unwrap().value;
                let cf = local_error_1d(&g1, site, p).unwrap();
                assert!(
                    (lp - cf).abs() <= 1e-11 * (1.0 + cf),
                    "site {site}, p {p}: lp {lp} vs closed form {cf}"
                );
            }
        }
    }

    #[test]
    fn uniform_distortion_golden_values() {
        let g11 = OrderedGrid1D::uniform(0.0, 1.0, 11).unwrap();
        let v = analytic_distortion_uniform_1d(&g11, 2.0).unwrap();
        assert!((v - 1.0 / 600.0).abs() < 1e-15);
        let g3 = OrderedGrid1D::uniform(0.0, 1.0, 3).unwrap();
        assert!((analytic_distortion_uniform_1d(&g3, 2.0).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        let g2 = OrderedGrid1D::uniform(0.0, 1.0, 2).unwrap();
        assert!((analytic_distortion_uniform_1d(&g2, 2.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn distortion_rejects_wrong_span() {
        let g = OrderedGrid1D::uniform(0.0, 2.0, 5).unwrap();
        assert!(matches!(
            analytic_distortion_uniform_1d(&g, 2.0),
            Err(Error::SpanMismatch { .. })
        ));
    }

    #[test]
    fn distortion_matches_numerical_integration_on_irregular_knots() {
        // Simpson's rule over each cell as an independent oracle.
        let g = OrderedGrid1D::new(vec![0.0, 0.13, 0.4, 0.75, 0.81, 1.0]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let analytic = analytic_distortion_uniform_1d(&g, p).unwrap();
            let mut quad = 0.0;
            for w in g.knots().windows(2) {
                let (a, b) = (w[0], w[1]);
                let steps = 2000;
                let h = (b - a) / steps as f64;
                for s in 0..steps {
                    let x0 = a + s as f64 * h;
                    let xm = x0 + 0.5 * h;
                    let x1 = x0 + h;
                    let f = |x: f64| local_error_1d(&g, x, p).unwrap();
                    quad += h / 6.0 * (f(x0) + 4.0 * f(xm) + f(x1));
                }
            }
            assert!(
                (analytic - quad).abs() < 1e-9,
                "p {p}: analytic {analytic} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn lattice_materialization_and_guard() {
        let lat = lattice_grid(&[0.0, 0.0], 1.0, 2).unwrap();
        assert_eq!(lat.dim(), 2);
        assert_eq!(lat.size(), 9);
        let grid = lat.materialize(16).unwrap();
        assert_eq!(grid.size(), 9);
        // Last axis fastest: the second point differs in coordinate 1.
        assert_eq!(grid.point(0).coords(), &[0.0, 0.0]);
        assert_eq!(grid.point(1).coords(), &[0.0, 0.5]);
        assert_eq!(grid.point(3).coords(), &[0.5, 0.0]);
        assert!(matches!(lat.materialize(8), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn product_error_decomposes_against_lp() {
        let lat = lattice_grid(&[0.0, 0.0], 1.0, 3).unwrap();
        let grid = lat.materialize(64).unwrap();
        for k in 0..50 {
            let t = (k as f64 + 0.5) / 50.0;
            let site = Point::new(vec![t, (0.7 * t + 0.13).fract()]).unwrap();
            let fast = product_local_error(&site, &lat, 2.0, NormSpec::L2).unwrap();
            let problem = BarycentricProblem::new(&site, &grid, 2.0, NormSpec::L2).unwrap();
            let lp = solve_barycentric_min(&problem).unwrap().value;
            assert!(
                (fast - lp).abs() <= 1e-10 * (1.0 + lp),
                "site {:?}: fast {fast} vs lp {lp}",
                site.coords()
            );
        }
    }

    #[test]
    fn product_error_requires_matching_norm() {
        let lat = lattice_grid(&[0.0], 1.0, 2).unwrap();
        let site = Point::new(vec![0.3]).unwrap();
        assert!(matches!(
            product_local_error(&site, &lat, 2.0, NormSpec::L1),
            Err(Error::NormMismatch { .. })
        ));
        assert!(matches!(
            product_local_error(&site, &lat, 2.0, NormSpec::LInf),
            Err(Error::NormMismatch { .. })
        ));
        assert!(product_local_error(&site, &lat, 1.0, NormSpec::L1).is_ok());
    }

    #[test]
    fn contains_checks_the_bounding_box() {
        let lat = lattice_grid(&[0.0, -1.0], 2.0, 4).unwrap();
        assert!(lat.contains(&Point::new(vec![1.0, 0.0]).unwrap()));
        assert!(lat.contains(&Point::new(vec![0.0, -1.0]).unwrap()));
        assert!(!lat.contains(&Point::new(vec![2.5, 0.0]).unwrap()));
        assert!(!lat.contains(&Point::new(vec![1.0]).unwrap()));
    }
}
