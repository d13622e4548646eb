//! Dense linear-programming kernel for the barycentric minimization.
//!
//! The local dual quantization error is the optimum of
//!
//! ```text
//! min  sum_i c_i w_i          c_i = ||site - x_i||^p
//! s.t. sum_i w_i x_i = site,  sum_i w_i = 1,  w >= 0,
//! ```
//!
//! a linear program with d+1 equality rows and one column per grid
//! point. Problems are tiny, so the solver is a dense two-phase tableau
//! simplex tuned for robustness and determinism rather than scale:
//!
//! * the instance is translated so the site sits at the origin and
//!   scaled by the largest point magnitude, making tolerances relative;
//! * constraints are re-expressed in an orthonormal basis of the affine
//!   hull of the grid, so degenerate grids (affine dimension < d) do
//!   not produce spurious redundant rows;
//! * phase I uses artificial variables (no big-M constants);
//! * entering variable: most negative reduced cost with lowest-index
//!   tie-break, switching to Bland's rule after a stall threshold so
//!   degenerate instances terminate;
//! * the final basic solution is polished by QR-based iterative
//!   refinement against the original data.
//!
//! Identical inputs always pivot identically, so certificates are
//! reproducible.

use serde::Serialize;

use crate::core::{norm_eval, Grid, NormSpec, Point};
use crate::error::{Error, Result};

/// Phase-I optimum below which the constraint system counts as feasible
/// (data are pre-scaled, so this is a relative tolerance; boundary sites
/// resolve to "inside").
const FEASIBILITY_TOL: f64 = 1e-9;

/// Reduced costs above this threshold count as nonnegative when testing
/// optimality: a certificate from [`solve_with_details`] is optimal up
/// to `min_reduced_cost >= -OPTIMALITY_TOL`.
pub const OPTIMALITY_TOL: f64 = 1e-9;

/// Pivot elements smaller than this are treated as zero in ratio tests.
const PIVOT_TOL: f64 = 1e-11;

/// Entering columns must beat this margin to be considered improving.
const ENTERING_TOL: f64 = 1e-10;

/// Rank threshold for the Gram-Schmidt affine-hull basis (relative to
/// the pre-scaled data).
const RANK_TOL: f64 = 1e-10;

/// Certificate weights at or below this level are dropped from the
/// support.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Relative tolerance for the exact-hit shortcut (site coincides with a
/// grid point).
const EXACT_HIT_TOL: f64 = 1e-12;

/// Consecutive non-improving pivots tolerated before switching to
/// Bland's rule.
const STALL_LIMIT: usize = 30;

/// The barycentric minimization instance for one site.
#[derive(Debug, Clone)]
pub struct BarycentricProblem<'a> {
    /// The site xi being expressed as a convex combination.
    pub site: &'a Point,
    /// The candidate grid points.
    pub grid: &'a Grid,
    /// Objective coefficients, `c_i = ||site - x_i||^p`.
    pub costs: Vec<f64>,
    /// Distances `||site - x_i||`; kept so the solver can rescale costs
    /// in the log domain when `p` is large enough to overflow `c_i`.
    dists: Vec<f64>,
    p: f64,
}

impl<'a> BarycentricProblem<'a> {
    /// Builds the instance with costs `||site - x_i||^p` under `norm`.
    pub fn new(site: &'a Point, grid: &'a Grid, p: f64, norm: NormSpec) -> Result<Self> {
        if site.dim() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "site dimension {} does not match grid dimension {}",
                site.dim(),
                grid.dim()
            )));
        }
        if !p.is_finite() || p < 1.0 {
            return Err(Error::InvalidInput(format!("exponent p must satisfy p >= 1, got {p}")));
        }
        let dists: Vec<f64> = grid
            .points()
            .iter()
            .map(|x| norm_eval(&site.sub(x), norm))
            .collect();
        let costs = dists.iter().map(|d| d.powf(p)).collect();
        Ok(BarycentricProblem { site, grid, costs, dists, p })
    }

    /// Builds the instance from caller-supplied finite nonnegative costs.
    pub fn with_costs(site: &'a Point, grid: &'a Grid, costs: Vec<f64>) -> Result<Self> {
        if site.dim() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "site dimension {} does not match grid dimension {}",
                site.dim(),
                grid.dim()
            )));
        }
        if costs.len() != grid.size() {
            return Err(Error::InvalidInput(format!(
                "need one cost per grid point: {} points, {} costs",
                grid.size(),
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput("costs must be finite and nonnegative".into()));
        }
        let dists = costs.clone();
        Ok(BarycentricProblem { site, grid, costs, dists, p: 1.0 })
    }

    /// Costs scaled so the largest is 1, together with the factor that
    /// restores the true objective. Computed from the distances in the
    /// log domain, so large `p` cannot overflow the LP data.
    fn scaled_costs(&self) -> (Vec<f64>, f64) {
        let dmax = self.dists.iter().cloned().fold(0.0_f64, f64::max);
        if dmax == 0.0 {
            return (vec![0.0; self.dists.len()], 1.0);
        }
        let scaled = self.dists.iter().map(|d| (d / dmax).powf(self.p)).collect();
        (scaled, dmax.powf(self.p))
    }
}

/// Optimal-vertex witness for the barycentric LP: positive weights on at
/// most d+1 affinely independent grid points whose weighted mean is the
/// site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarycentricCertificate {
    /// Optimal objective value (the p-th power local error).
    pub value: f64,
    /// Grid indices carrying positive weight, sorted ascending.
    pub support: Vec<usize>,
    /// Weights aligned with `support`; positive, summing to 1.
    pub weights: Vec<f64>,
}

impl BarycentricCertificate {
    /// Weighted mean of the supported grid points.
    pub fn weighted_mean(&self, grid: &Grid) -> Vec<f64> {
        let mut mean = vec![0.0; grid.dim()];
        for (&i, &w) in self.support.iter().zip(&self.weights) {
            for (m, c) in mean.iter_mut().zip(grid.point(i).coords()) {
                *m += w * c;
            }
        }
        mean
    }
}

/// Solver output plus the optimality evidence used by tests.
#[derive(Debug, Clone)]
pub struct SolveDetails {
    pub certificate: BarycentricCertificate,
    /// Smallest reduced cost over all columns at the final basis
    /// (nonnegative up to tolerance iff the vertex is optimal).
    pub min_reduced_cost: f64,
}

/// Solves the barycentric LP, returning the optimal certificate or
/// [`Error::OutsideHull`] when the site is not in the convex hull.
pub fn solve_barycentric_min(problem: &BarycentricProblem) -> Result<BarycentricCertificate> {
    solve_with_details(problem).map(|d| d.certificate)
}

/// [`solve_barycentric_min`] with the reduced-cost optimality witness.
pub fn solve_with_details(problem: &BarycentricProblem) -> Result<SolveDetails> {
    let site = problem.site;
    let grid = problem.grid;

    // Exact hit: the site coincides with a grid point.
    let site_mag = site.coords().iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    for (i, x) in grid.points().iter().enumerate() {
        let dist_inf = site
            .coords()
            .iter()
            .zip(x.coords())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if dist_inf <= EXACT_HIT_TOL * (1.0 + site_mag) {
            return Ok(SolveDetails {
                certificate: BarycentricCertificate {
                    value: problem.costs[i],
                    support: vec![i],
                    weights: vec![1.0],
                },
                min_reduced_cost: 0.0,
            });
        }
    }

    // Translate to the site and scale to unit magnitude.
    let diffs: Vec<Vec<f64>> = grid.points().iter().map(|x| x.sub(site)).collect();
    let scale = diffs
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0_f64, |m, c| m.max(c.abs()));
    debug_assert!(scale > 0.0, "exact-hit shortcut handles the zero-scale case");
    let scaled: Vec<Vec<f64>> = diffs
        .iter()
        .map(|v| v.iter().map(|c| c / scale).collect())
        .collect();

    // Orthonormal basis of the linear span of the scaled differences:
    // constraints are expressed in affine-hull coordinates so degenerate
    // grids do not create dependent rows.
    let basis = orthonormal_span(&scaled, RANK_TOL);
    let k = basis.len();

    // LP columns a_i = (Q^T v_i; 1), right-hand side e_{k+1}.
    let m = k + 1;
    let columns: Vec<Vec<f64>> = scaled
        .iter()
        .map(|v| {
            let mut col: Vec<f64> = basis.iter().map(|q| dot(q, v)).collect();
            col.push(1.0);
            col
        })
        .collect();
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = 1.0;

    let (costs, cost_scale) = problem.scaled_costs();

    let mut tableau = Tableau::new(&columns, &rhs);
    if !tableau.phase_one()? {
        return Err(Error::OutsideHull);
    }
    tableau.phase_two(&costs)?;

    // Polish the basic solution against the original reduced data.
    let basic: Vec<usize> = tableau.real_basic_columns();
    let weights = refine_basic_solution(&columns, &rhs, &basic).ok_or_else(|| {
        Error::NumericalFailure("failed to refine the final basic solution".into())
    })?;

    let mut pairs: Vec<(usize, f64)> = basic
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > WEIGHT_FLOOR)
        .map(|(&j, &w)| (j, w))
        .collect();
    pairs.sort_by_key(|(j, _)| *j);
    let support: Vec<usize> = pairs.iter().map(|(j, _)| *j).collect();
    let supp_weights: Vec<f64> = pairs.iter().map(|(_, w)| *w).collect();

    let value: f64 = pairs.iter().map(|(j, w)| problem.costs[*j] * w).sum();

    let certificate = BarycentricCertificate {
        value,
        support,
        weights: supp_weights,
    };
    validate_certificate(&certificate, problem)?;

    // Dual vector from the final basis for the optimality witness.
    let min_reduced_cost = min_reduced_cost(&columns, &costs, &basic) * cost_scale;

    Ok(SolveDetails {
        certificate,
        min_reduced_cost,
    })
}

/// Decides `site ∈ conv(grid)` by phase-I feasibility. Boundary sites
/// resolve to inside (the hull is closed).
pub fn hull_contains(site: &Point, grid: &Grid) -> bool {
    let Ok(problem) = BarycentricProblem::with_costs(site, grid, vec![0.0; grid.size()]) else {
        return false;
    };
    match solve_with_details(&problem) {
        Ok(_) => true,
        Err(Error::OutsideHull) => false,
        // Pivot breakdown on a feasibility question is not expected on
        // well-conditioned inputs; treat it as outside rather than
        // panicking in a boolean query.
        Err(_) => false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt with one reorthogonalization pass; returns an
/// orthonormal basis of the span of `vectors`.
fn orthonormal_span(vectors: &[Vec<f64>], rank_tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let dim = vectors.first().map_or(0, |v| v.len());
    for v in vectors {
        if basis.len() == dim {
            break;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > rank_tol {
            for wi in &mut w {
                *wi /= norm;
            }
            basis.push(w);
        }
    }
    basis
}

/// Solves `A_J w = rhs` for the basic columns `J` by modified
/// Gram-Schmidt QR with two steps of iterative refinement. Returns
/// `None` when the basis is numerically singular.
fn refine_basic_solution(columns: &[Vec<f64>], rhs: &[f64], basic: &[usize]) -> Option<Vec<f64>> {
    let k = basic.len();
    if k == 0 {
        return None;
    }
    let a: Vec<&[f64]> = basic.iter().map(|&j| columns[j].as_slice()).collect();

    // QR of the m x k basis matrix (columns stored separately).
    let mut q: Vec<Vec<f64>> = a.iter().map(|c| c.to_vec()).collect();
    let mut r = vec![vec![0.0_f64; k]; k];
    for j in 0..k {
        for i in 0..j {
            let c = dot(&q[i], &q[j]);
            r[i][j] += c;
            let qi = q[i].clone();
            for (x, y) in q[j].iter_mut().zip(&qi) {
                *x -= c * y;
            }
        }
        let norm = dot(&q[j], &q[j]).sqrt();
        if norm < 1e-13 {
            return None;
        }
        r[j][j] = norm;
        for x in &mut q[j] {
            *x /= norm;
        }
    }

    let solve = |b: &[f64]| -> Vec<f64> {
        // w = R^{-1} Q^T b
        let mut y: Vec<f64> = (0..k).map(|i| dot(&q[i], b)).collect();
        for i in (0..k).rev() {
            for j in (i + 1)..k {
                y[i] -= r[i][j] * y[j];
            }
            y[i] /= r[i][i];
        }
        y
    };

    let mut w = solve(rhs);
    for _ in 0..2 {
        let mut residual = rhs.to_vec();
        for (idx, &wj) in w.iter().enumerate() {
            for (ri, &aij) in residual.iter_mut().zip(a[idx]) {
                *ri -= aij * wj;
            }
        }
        let correction = solve(&residual);
        for (wj, cj) in w.iter_mut().zip(&correction) {
            *wj += cj;
        }
    }
    Some(w)
}

/// Smallest reduced cost over all columns given the final basic set.
fn min_reduced_cost(columns: &[Vec<f64>], costs: &[f64], basic: &[usize]) -> f64 {
    let m = columns.first().map_or(0, |c| c.len());
    let k = basic.len();
    if k == 0 {
        return 0.0;
    }
    // Least-norm dual: y = Q R^{-T} c_B from the QR of the basis.
    let a: Vec<&[f64]> = basic.iter().map(|&j| columns[j].as_slice()).collect();
    let mut q: Vec<Vec<f64>> = a.iter().map(|c| c.to_vec()).collect();
    let mut r = vec![vec![0.0_f64; k]; k];
    for j in 0..k {
        for i in 0..j {
            let c = dot(&q[i], &q[j]);
            r[i][j] += c;
            let qi = q[i].clone();
            for (x, y) in q[j].iter_mut().zip(&qi) {
                *x -= c * y;
            }
        }
        let norm = dot(&q[j], &q[j]).sqrt();
        if norm < 1e-13 {
            return 0.0;
        }
        r[j][j] = norm;
        for x in &mut q[j] {
            *x /= norm;
        }
    }
    // Forward-solve R^T z = c_B, then y = Q z.
    let cb: Vec<f64> = basic.iter().map(|&j| costs[j]).collect();
    let mut z = vec![0.0_f64; k];
    for i in 0..k {
        let mut s = cb[i];
        for j in 0..i {
            s -= r[j][i] * z[j];
        }
        z[i] = s / r[i][i];
    }
    let mut y = vec![0.0_f64; m];
    for (j, zj) in z.iter().enumerate() {
        for (yi, qij) in y.iter_mut().zip(&q[j]) {
            *yi += zj * qij;
        }
    }
    columns
        .iter()
        .zip(costs)
        .map(|(col, &c)| c - dot(&y, col))
        .fold(f64::INFINITY, f64::min)
}

/// Certificate sanity independent of the solve path; violations are
/// numerical failures, not silent inaccuracies.
fn validate_certificate(cert: &BarycentricCertificate, problem: &BarycentricProblem) -> Result<()> {
    let total: f64 = cert.weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NumericalFailure(format!(
            "certificate weights sum to {total}, expected 1"
        )));
    }
    if cert.weights.iter().any(|w| *w <= 0.0) {
        return Err(Error::NumericalFailure("certificate weights must be positive".into()));
    }
    let d = problem.grid.dim();
    if cert.support.len() > d + 1 {
        return Err(Error::NumericalFailure(format!(
            "certificate support size {} exceeds d + 1 = {}",
            cert.support.len(),
            d + 1
        )));
    }
    let mean = cert.weighted_mean(problem.grid);
    let geo_scale = problem
        .grid
        .points()
        .iter()
        .flat_map(|pt| pt.coords().iter())
        .chain(problem.site.coords().iter())
        .fold(1.0_f64, |mx, c| mx.max(c.abs()));
    for (m, s) in mean.iter().zip(problem.site.coords()) {
        if (m - s).abs() > 1e-9 * geo_scale {
            return Err(Error::NumericalFailure(format!(
                "certificate mean misses the site by {:.3e} (scale {geo_scale:.3e})",
                (m - s).abs()
            )));
        }
    }
    Ok(())
}

/// Dense two-phase tableau.
struct Tableau {
    /// Row-major body: n real columns, then m artificial columns.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Basis variable per row (indices >= n are artificial).
    basis: Vec<usize>,
    /// Rows found numerically redundant in phase I are deactivated.
    active: Vec<bool>,
    n: usize,
    m: usize,
}

impl Tableau {
    fn new(columns: &[Vec<f64>], rhs: &[f64]) -> Self {
        let n = columns.len();
        let m = rhs.len();
        let mut rows = vec![vec![0.0_f64; n + m]; m];
        for (j, col) in columns.iter().enumerate() {
            for i in 0..m {
                rows[i][j] = col[i];
            }
        }
        for i in 0..m {
            rows[i][n + i] = 1.0;
        }
        Tableau {
            rows,
            rhs: rhs.to_vec(),
            basis: (n..n + m).collect(),
            active: vec![true; m],
            n,
            m,
        }
    }

    /// Runs phase I; returns whether the system is feasible.
    fn phase_one(&mut self) -> Result<bool> {
        // Reduced costs for min(sum of artificials): cbar_j = -sum_i a_ij.
        let width = self.n + self.m;
        let mut cbar = vec![0.0_f64; width];
        for j in 0..self.n {
            cbar[j] = -(0..self.m).map(|i| self.rows[i][j]).sum::<f64>();
        }
        let mut objective: f64 = self.rhs.iter().sum();
        self.simplex_loop(&mut cbar, &mut objective, true)?;
        // Decide feasibility from the basis itself, not the running
        // objective tracker, to avoid accumulated pivot rounding.
        let artificial_level: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.n)
            .map(|i| self.rhs[i].max(0.0))
            .sum();
        if artificial_level > FEASIBILITY_TOL {
            return Ok(false);
        }
        self.evict_artificials();
        Ok(true)
    }

    /// Runs phase II with the given real-column costs.
    fn phase_two(&mut self, costs: &[f64]) -> Result<()> {
        let width = self.n + self.m;
        let mut cbar = vec![0.0_f64; width];
        let mut objective = 0.0;
        // Price out the current basis: cbar_j = c_j - sum_i c_{B(i)} a_ij.
        for j in 0..self.n {
            let mut v = costs[j];
            for i in 0..self.m {
                let b = self.basis[i];
                if b < self.n {
                    v -= costs[b] * self.rows[i][j];
                }
            }
            cbar[j] = v;
        }
        for i in 0..self.m {
            let b = self.basis[i];
            if b < self.n {
                objective += costs[b] * self.rhs[i];
            }
        }
        // Artificial columns are barred from entering in phase II.
        for j in self.n..width {
            cbar[j] = f64::INFINITY;
        }
        self.simplex_loop(&mut cbar, &mut objective, false)?;
        Ok(())
    }

    /// Shared pivoting loop. `allow_artificial` admits artificial
    /// entering columns (phase I only, where they can re-enter during
    /// degeneracy resolution — harmless since their costs stay priced).
    fn simplex_loop(&mut self, cbar: &mut [f64], objective: &mut f64, allow_artificial: bool) -> Result<()> {
        let width = if allow_artificial { self.n + self.m } else { self.n };
        let max_iters = 50 * (self.n + self.m) + 1000;
        let mut stall = 0usize;
        let mut bland = false;
        for _ in 0..max_iters {
            // Entering column.
            let mut enter: Option<usize> = None;
            if bland {
                for (j, &c) in cbar.iter().enumerate().take(width) {
                    if c < -ENTERING_TOL {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -ENTERING_TOL;
                for (j, &c) in cbar.iter().enumerate().take(width) {
                    if c < best {
                        best = c;
                        enter = Some(j);
                    }
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };

            // Ratio test; ties go to the row whose basis variable has the
            // lowest index (deterministic, and anti-cycling under Bland).
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let a = self.rows[i][e];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-12
                                || (ratio < best_ratio + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(l) = leave else {
                return Err(Error::NumericalFailure(
                    "unbounded pivot in a bounded barycentric program".into(),
                ));
            };

            let drop = cbar[e] * best_ratio;
            self.pivot(l, e, cbar, objective);
            if drop > -1e-15 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }
        }
        Err(Error::NumericalFailure(
            "simplex iteration limit exceeded despite Bland's rule".into(),
        ))
    }

    fn pivot(&mut self, l: usize, e: usize, cbar: &mut [f64], objective: &mut f64) {
        let width = self.n + self.m;
        let pivot = self.rows[l][e];
        for j in 0..width {
            self.rows[l][j] /= pivot;
        }
        self.rhs[l] /= pivot;
        for i in 0..self.m {
            if i == l {
                continue;
            }
            let f = self.rows[i][e];
            if f != 0.0 {
                for j in 0..width {
                    self.rows[i][j] -= f * self.rows[l][j];
                }
                self.rhs[i] -= f * self.rhs[l];
            }
        }
        let f = cbar[e];
        if f.is_finite() && f != 0.0 {
            for j in 0..width {
                if cbar[j].is_finite() {
                    cbar[j] -= f * self.rows[l][j];
                }
            }
            *objective += f * self.rhs[l];
        }
        self.basis[l] = e;
        // Clamp the tiny negative right-hand sides degeneracy produces.
        for r in self.rhs.iter_mut() {
            if *r < 0.0 && *r > -1e-12 {
                *r = 0.0;
            }
        }
    }

    /// Pivots zero-level artificial variables out of the basis after
    /// phase I; rows that admit no real pivot are numerically redundant
    /// and get deactivated.
    fn evict_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.n || !self.active[i] {
                continue;
            }
            let mut pivot_col = None;
            for j in 0..self.n {
                if self.rows[i][j].abs() > 1e-8 {
                    pivot_col = Some(j);
                    break;
                }
            }
            match pivot_col {
                Some(j) => {
                    let mut dummy_cbar = vec![f64::INFINITY; self.n + self.m];
                    let mut dummy_obj = 0.0;
                    self.pivot(i, j, &mut dummy_cbar, &mut dummy_obj);
                }
                None => {
                    self.active[i] = false;
                }
            }
        }
    }

    /// Real (non-artificial) basic column indices of active rows.
    fn real_basic_columns(&self) -> Vec<usize> {
        (0..self.m)
            .filter(|&i| self.active[i] && self.basis[i] < self.n)
            .map(|i| self.basis[i])
            .collect()
    }
}
