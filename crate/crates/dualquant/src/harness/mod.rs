//! Experiment orchestration: parsed configs in, result rows out.
//!
//! Every runner is deterministic in `(config, seed)`: each output row
//! draws from an RNG stream keyed by the row's requested grid size, so
//! row values do not depend on evaluation order and scans can be
//! re-run row by row.

pub mod config;
pub mod csvout;

use serde::{Serialize, Serializer};

use crate::core::{DistributionSpec, Grid, NormSpec, RngStream};
use crate::dq::{
    self, estimate_distortion, estimate_distortion_product, local_error, local_error_extended,
    nearest_neighbor_project, Branch, DistortionReport,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, GridSpec};
use crate::optimize::{optimize_grid, OptimizationResult};
use crate::pierce::{pierce_scan_1d, pierce_scan_product, PierceScan};
use crate::stats::Welford;
use crate::structured::{lattice_grid, ProductGrid};

/// Largest lattice the harness will expand into an explicit point list
/// for the LP evaluation path. Lattices measured under the matching
/// l_p norm never need expansion (the per-axis closed form applies at
/// any size).
const MATERIALIZE_LIMIT: usize = 4096;

/// Child-stream tags reserved per row: training and measurement draw
/// from disjoint streams so optimizing a grid never perturbs how it is
/// subsequently measured.
const TAG_OPTIMIZE: u64 = 10;
const TAG_MEASURE_OPTIMIZED: u64 = 11;

/// Where a measured grid came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSource {
    /// Deterministic uniform lattice.
    Lattice,
    /// Lattice passed through the configured optimizer first.
    Optimized,
    /// Explicit point list from a file.
    ExplicitFile,
}

impl std::fmt::Display for GridSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            GridSource::Lattice => "lattice",
            GridSource::Optimized => "optimized",
            GridSource::ExplicitFile => "explicit-file",
        };
        f.write_str(name)
    }
}

impl Serialize for GridSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

/// One row of a rate scan. `estimate` is the distortion modulus (the
/// p-th root of the estimated p-th power moment); `normalized` is
/// `n^(1/d) * estimate`, the quantity with a finite nonzero limit at
/// the optimal rate. Rows whose grid failed to cover the sampled mass
/// (a site outside the hull under the non-extended functional) carry
/// NaN in the three estimate fields.
#[derive(Debug, Clone, Serialize)]
pub struct RateScanRow {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub normalized: f64,
    pub grid_source: GridSource,
    pub seed: u64,
}

/// One row of a paired dual / extended / nearest-neighbor comparison.
/// All three columns are root-form estimates from the same sample
/// paths, so `voronoi_estimate <= min(dual, extended)` holds exactly.
/// `dual_estimate` is NaN when any sample fell outside the hull (the
/// plain dual functional is undefined there).
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub dual_estimate: f64,
    pub extended_estimate: f64,
    pub voronoi_estimate: f64,
}

/// Ordinary least squares fit of `log(estimate)` against `log(n)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Result of checking a normalized scan against the closed-form
/// coefficient bound `d^(1/r) * (2/((p+1)(p+2)))^(1/p)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QdqBoundReport {
    /// Smallest lower confidence edge among the rows:
    /// `min_rows (normalized - 3 * n^(1/d) * std_error)`.
    pub empirical_q: f64,
    /// The closed-form upper bound for `U([0,1]^d)` under `l_r`.
    pub bound: f64,
    /// Whether `empirical_q <= bound`.
    pub pass: bool,
}

/// Local-error evaluation at one site, with the optimality certificate
/// spelled out.
#[derive(Debug, Clone, Serialize)]
pub struct FpEvalReport {
    pub site: Vec<f64>,
    pub p: f64,
    pub norm: NormSpec,
    pub extended: bool,
    /// `F_p(site)^p` (NaN when the site is outside the hull and the
    /// extended functional was not requested).
    pub value_p: f64,
    /// `value_p^(1/p)`.
    pub value: f64,
    /// `dual`, `nearest-neighbor`, or `outside-hull`.
    pub branch: String,
    /// Support indices of the optimal barycentric certificate (dual
    /// branch only).
    pub support: Vec<usize>,
    /// Matching barycentric weights.
    pub weights: Vec<f64>,
    /// Certificate mean `sum w_i x_i`; equals `site` up to solver
    /// tolerance.
    pub weighted_mean: Vec<f64>,
    /// Nearest grid point (nearest-neighbor branch only).
    pub nearest_index: Option<usize>,
}

/// A grid family member before measurement.
enum FamilyMember {
    Lattice { lattice: ProductGrid },
    Optimized { lattice: ProductGrid },
    Explicit { grid: Grid },
}

impl FamilyMember {
    /// Requested size, before any optimizer deduplication; used to key
    /// the row's RNG stream.
    fn requested_n(&self) -> usize {
        match self {
            FamilyMember::Lattice { lattice } | FamilyMember::Optimized { lattice } => {
                lattice.size()
            }
            FamilyMember::Explicit { grid } => grid.size(),
        }
    }

    fn source(&self) -> GridSource {
        match self {
            FamilyMember::Lattice { .. } => GridSource::Lattice,
            FamilyMember::Optimized { .. } => GridSource::Optimized,
            FamilyMember::Explicit { .. } => GridSource::ExplicitFile,
        }
    }
}

fn require_distribution(cfg: &ExperimentConfig) -> Result<&DistributionSpec> {
    cfg.distribution
        .as_ref()
        .ok_or_else(|| Error::Config("this experiment needs a [distribution] section".into()))
}

fn build_family(cfg: &ExperimentConfig) -> Result<Vec<FamilyMember>> {
    let spec = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("this experiment needs a [grid] section".into()))?;
    match spec {
        GridSpec::Lattice { corner, edge, subdivisions } => subdivisions
            .iter()
            .map(|&m| Ok(FamilyMember::Lattice { lattice: lattice_grid(corner, *edge, m)? }))
            .collect(),
        GridSpec::Optimized { corner, edge, subdivisions } => {
            if cfg.optimize.is_none() {
                return Err(Error::Config(
                    "[grid] kind = optimized needs an [optimize] section".into(),
                ));
            }
            subdivisions
                .iter()
                .map(|&m| Ok(FamilyMember::Optimized { lattice: lattice_grid(corner, *edge, m)? }))
                .collect()
        }
        GridSpec::File { path } => {
            let points = config::read_points_file(path)?;
            Ok(vec![FamilyMember::Explicit { grid: Grid::new(points)? }])
        }
    }
}

/// Whether the per-axis closed form may replace the LP: the norm must
/// be l_r with r = p.
fn product_path_ok(norm: NormSpec, p: f64) -> bool {
    matches!(norm.exponent(), Some(r) if (r - p).abs() <= 1e-12)
}

/// `n^(1/d)`, exact for d = 1 and for perfect squares at d = 2.
fn size_root(n: usize, d: usize) -> f64 {
    match d {
        1 => n as f64,
        2 => (n as f64).sqrt(),
        _ => (n as f64).powf(1.0 / d as f64),
    }
}

/// Measures one family member, resolving the optimized source and
/// choosing between the closed-form product path and LP evaluation.
/// Returns the measured grid size (post-optimization, so possibly
/// smaller than requested) alongside the report.
fn measure_member(
    cfg: &ExperimentConfig,
    dist: &DistributionSpec,
    member: &FamilyMember,
    base: &RngStream,
) -> Result<(usize, DistortionReport)> {
    let stream = base.child(member.requested_n() as u64);
    match member {
        FamilyMember::Lattice { lattice } => {
            let report = if product_path_ok(cfg.norm, cfg.p) {
                estimate_distortion_product(dist, lattice, cfg.p, cfg.samples, &stream, cfg.extended)?
            } else {
                let grid = lattice.materialize(MATERIALIZE_LIMIT)?;
                estimate_distortion(dist, &grid, cfg.p, cfg.norm, cfg.samples, &stream, cfg.extended)?
            };
            Ok((lattice.size(), report))
        }
        FamilyMember::Optimized { lattice } => {
            let initial = lattice.materialize(MATERIALIZE_LIMIT)?;
            let mut opt_cfg = cfg.optimize.clone().expect("checked in build_family");
            opt_cfg.extended = cfg.extended;
            let result = optimize_grid(
                dist,
                &initial,
                cfg.p,
                cfg.norm,
                &opt_cfg,
                &stream.child(TAG_OPTIMIZE),
            )?;
            let report = estimate_distortion(
                dist,
                &result.grid,
                cfg.p,
                cfg.norm,
                cfg.samples,
                &stream.child(TAG_MEASURE_OPTIMIZED),
                cfg.extended,
            )?;
            Ok((result.grid.size(), report))
        }
        FamilyMember::Explicit { grid } => {
            let report =
                estimate_distortion(dist, grid, cfg.p, cfg.norm, cfg.samples, &stream, cfg.extended)?;
            Ok((grid.size(), report))
        }
    }
}

/// Runs a distortion scan over the configured grid family: one row per
/// grid, ordered by n. A row whose evaluation hits a site outside the
/// hull (non-extended functional only) is kept with NaN estimates
/// rather than aborting the scan.
pub fn run_rate_scan(cfg: &ExperimentConfig) -> Result<Vec<RateScanRow>> {
    let dist = require_distribution(cfg)?;
    let family = build_family(cfg)?;
    let base = RngStream::new(cfg.seed, 0);
    let d = dist.dim();
    let mut rows = Vec::with_capacity(family.len());
    for member in &family {
        let row = match measure_member(cfg, dist, member, &base) {
            Ok((n, report)) => {
                let estimate = report.root_estimate();
                RateScanRow {
                    n,
                    d,
                    p: cfg.p,
                    estimate,
                    std_error: report.root_std_error(),
                    normalized: size_root(n, d) * estimate,
                    grid_source: member.source(),
                    seed: cfg.seed,
                }
            }
            Err(Error::OutsideHull) => RateScanRow {
                n: member.requested_n(),
                d,
                p: cfg.p,
                estimate: f64::NAN,
                std_error: f64::NAN,
                normalized: f64::NAN,
                grid_source: member.source(),
                seed: cfg.seed,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

/// Least-squares rate fit over the finite positive rows of a scan.
pub fn fit_rate(rows: &[RateScanRow]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.estimate.is_finite() && r.estimate > 0.0)
        .map(|r| ((r.n as f64).ln(), r.estimate.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateInput(pts.len()));
    }
    let count = pts.len() as f64;
    let x_bar = pts.iter().map(|(x, _)| x).sum::<f64>() / count;
    let y_bar = pts.iter().map(|(_, y)| y).sum::<f64>() / count;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - x_bar) * (x - x_bar)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput(
            "rate fit needs at least two distinct grid sizes".into(),
        ));
    }
    let sxy: f64 = pts.iter().map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ss_res: f64 = pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - y_bar).powi(2)).sum();
    let r_squared = if ss_tot <= 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit { slope, intercept, r_squared })
}

/// Checks a `U([0,1]^d)` lattice scan against the coefficient bound
/// `d^(1/r) * (2/((p+1)(p+2)))^(1/p)` (the d = 1 constant lifted by
/// the norm-comparison factor), which requires `r <= p`.
///
/// The empirical side takes every finite row's normalized estimate
/// minus three standard errors (scaled to normalized units, i.e. by
/// `n^(1/d)`) and keeps the smallest, matching the defining infimum
/// over n. Pass l_inf as `r = infinity`; it always violates `r <= p`.
pub fn check_qdq_bound(d: usize, r: f64, p: f64, rows: &[RateScanRow]) -> Result<QdqBoundReport> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(p >= 1.0) || !(r >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "the bound needs exponents r, p >= 1, got r = {r}, p = {p}"
        )));
    }
    if !(r <= p) {
        return Err(Error::HypothesisViolation { r, p });
    }
    let mut empirical_q = f64::INFINITY;
    let mut finite_rows = 0_usize;
    for row in rows {
        if !row.normalized.is_finite() {
            continue;
        }
        if row.d != d {
            return Err(Error::InvalidInput(format!(
                "scan row at n = {} has dimension {}, expected {}",
                row.n, row.d, d
            )));
        }
        finite_rows += 1;
        let margin = 3.0 * size_root(row.n, d) * row.std_error;
        empirical_q = empirical_q.min(row.normalized - margin);
    }
    if finite_rows == 0 {
        return Err(Error::InvalidInput("no finite scan rows to check".into()));
    }
    let bound = (d as f64).powf(1.0 / r) * (2.0 / ((p + 1.0) * (p + 2.0))).powf(1.0 / p);
    Ok(QdqBoundReport { empirical_q, bound, pass: empirical_q <= bound })
}

/// Paired comparison of the dual, extended, and nearest-neighbor
/// distortions over the configured grid family. Each sample site is
/// evaluated under all three functionals, and the dual and extended
/// means are accumulated as nonnegative pathwise excesses over the
/// nearest-neighbor mean, so the ordering
/// `voronoi <= min(dual, extended)` survives into the estimates with
/// zero tolerance.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let dist = require_distribution(cfg)?;
    let family = build_family(cfg)?;
    let base = RngStream::new(cfg.seed, 0);
    let mut rows = Vec::with_capacity(family.len());
    for member in &family {
        let stream = base.child(member.requested_n() as u64);
        let grid = resolve_grid(cfg, dist, member, &stream)?;
        rows.push(comparison_row(cfg, dist, &grid, &stream)?);
    }
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

/// Materializes a family member into an explicit grid, running the
/// optimizer for the optimized source.
fn resolve_grid(
    cfg: &ExperimentConfig,
    dist: &DistributionSpec,
    member: &FamilyMember,
    stream: &RngStream,
) -> Result<Grid> {
    match member {
        FamilyMember::Lattice { lattice } => lattice.materialize(MATERIALIZE_LIMIT),
        FamilyMember::Optimized { lattice } => {
            let initial = lattice.materialize(MATERIALIZE_LIMIT)?;
            let mut opt_cfg = cfg.optimize.clone().expect("checked in build_family");
            opt_cfg.extended = cfg.extended;
            let result =
                optimize_grid(dist, &initial, cfg.p, cfg.norm, &opt_cfg, &stream.child(TAG_OPTIMIZE))?;
            Ok(result.grid)
        }
        FamilyMember::Explicit { grid } => Ok(grid.clone()),
    }
}

fn comparison_row(
    cfg: &ExperimentConfig,
    dist: &DistributionSpec,
    grid: &Grid,
    stream: &RngStream,
) -> Result<ComparisonRow> {
    if cfg.samples == 0 {
        return Err(Error::InvalidInput("need at least one Monte Carlo sample".into()));
    }
    let mut voronoi = Welford::new();
    let mut extended_excess = Welford::new();
    let mut dual_excess = Welford::new();
    let mut outside = 0_u64;
    let mut remaining = cfg.samples;
    let mut shard_index = 0_u64;
    while remaining > 0 {
        let count = remaining.min(dq::SHARD_SIZE);
        let mut rng = stream.child(shard_index).rng();
        let mut shard_vor = Welford::new();
        let mut shard_ext = Welford::new();
        let mut shard_dual = Welford::new();
        for _ in 0..count {
            let site = dist.sample_one(&mut rng);
            let ext = local_error_extended(&site, grid, cfg.p, cfg.norm)?;
            let (_, nn_dist) = nearest_neighbor_project(&site, grid, cfg.norm)?;
            let vor_p = nn_dist.powf(cfg.p);
            // The barycentric minimum averages p-th power distances, so
            // it dominates the smallest of them; clamp the float dust.
            let excess = (ext.value_p - vor_p).max(0.0);
            shard_vor.push(vor_p);
            shard_ext.push(excess);
            match ext.branch {
                Branch::Dual => shard_dual.push(excess),
                Branch::NearestNeighbor => outside += 1,
            }
        }
        voronoi.merge(&shard_vor);
        extended_excess.merge(&shard_ext);
        dual_excess.merge(&shard_dual);
        remaining -= count;
        shard_index += 1;
    }
    let root = |moment: f64| moment.powf(1.0 / cfg.p);
    let vor_mean = voronoi.mean();
    let dual_estimate = if outside == 0 { root(vor_mean + dual_excess.mean()) } else { f64::NAN };
    Ok(ComparisonRow {
        n: grid.size(),
        dual_estimate,
        extended_estimate: root(vor_mean + extended_excess.mean()),
        voronoi_estimate: root(vor_mean),
    })
}

/// Random-quantization scan, dispatching on the distribution's
/// dimension; rows come back ordered by n.
pub fn run_pierce_scan(cfg: &ExperimentConfig) -> Result<PierceScan> {
    let dist = require_distribution(cfg)?;
    let spec = cfg
        .pierce
        .as_ref()
        .ok_or_else(|| Error::Config("pierce-scan needs a [pierce] section".into()))?;
    let stream = RngStream::new(cfg.seed, 0);
    let mut scan = if dist.dim() == 1 {
        pierce_scan_1d(dist, cfg.p, spec.eta, spec.delta, &spec.n_values, cfg.samples, &stream)?
    } else {
        pierce_scan_product(dist, cfg.p, spec.eta, spec.delta, &spec.n_values, cfg.samples, &stream)?
    };
    scan.rows.sort_by_key(|r| r.n);
    Ok(scan)
}

/// A single distortion estimate; the config must name exactly one
/// grid.
pub fn run_distortion(cfg: &ExperimentConfig) -> Result<DistortionReport> {
    let dist = require_distribution(cfg)?;
    let member = single_member(cfg)?;
    let base = RngStream::new(cfg.seed, 0);
    let (_, report) = measure_member(cfg, dist, &member, &base)?;
    Ok(report)
}

fn single_member(cfg: &ExperimentConfig) -> Result<FamilyMember> {
    let mut family = build_family(cfg)?;
    if family.len() != 1 {
        return Err(Error::Config(format!(
            "this experiment needs exactly one grid, the config names {}",
            family.len()
        )));
    }
    Ok(family.remove(0))
}

/// Evaluates the local error at the configured site and spells out the
/// optimality certificate.
pub fn run_fp_eval(cfg: &ExperimentConfig) -> Result<FpEvalReport> {
    let site = cfg
        .site
        .as_ref()
        .ok_or_else(|| Error::Config("fp-eval needs a top-level 'site' entry".into()))?;
    let member = single_member(cfg)?;
    let base = RngStream::new(cfg.seed, 0);
    let stream = base.child(member.requested_n() as u64);
    // Lattice and file grids need no distribution to build; only the
    // optimized source does.
    let grid = match &member {
        FamilyMember::Lattice { lattice } => lattice.materialize(MATERIALIZE_LIMIT)?,
        FamilyMember::Explicit { grid } => grid.clone(),
        FamilyMember::Optimized { .. } => {
            let dist = require_distribution(cfg)?;
            resolve_grid(cfg, dist, &member, &stream)?
        }
    };
    let outcome = if cfg.extended {
        local_error_extended(site, &grid, cfg.p, cfg.norm)
    } else {
        local_error(site, &grid, cfg.p, cfg.norm)
    };
    let mut report = FpEvalReport {
        site: site.coords().to_vec(),
        p: cfg.p,
        norm: cfg.norm,
        extended: cfg.extended,
        value_p: f64::NAN,
        value: f64::NAN,
        branch: "outside-hull".to_string(),
        support: Vec::new(),
        weights: Vec::new(),
        weighted_mean: Vec::new(),
        nearest_index: None,
    };
    match outcome {
        Ok(result) => {
            report.value_p = result.value_p;
            report.value = result.value_p.powf(1.0 / cfg.p);
            report.nearest_index = result.nearest_index;
            report.branch = match result.branch {
                Branch::Dual => "dual".to_string(),
                Branch::NearestNeighbor => "nearest-neighbor".to_string(),
            };
            if let Some(cert) = result.certificate {
                report.weighted_mean = cert.weighted_mean(&grid);
                report.support = cert.support;
                report.weights = cert.weights;
            }
            Ok(report)
        }
        // Outside the hull the plain functional has no finite value;
        // report the branch rather than failing the run.
        Err(Error::OutsideHull) => Ok(report),
        Err(e) => Err(e),
    }
}

/// Optimizes the configured initial grid (lattice or file; `optimized`
/// would be circular) and reports the result.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<OptimizationResult> {
    let dist = require_distribution(cfg)?;
    let member = single_member(cfg)?;
    let initial = match &member {
        FamilyMember::Lattice { lattice } => lattice.materialize(MATERIALIZE_LIMIT)?,
        FamilyMember::Explicit { grid } => grid.clone(),
        FamilyMember::Optimized { .. } => {
            return Err(Error::Config(
                "the optimize experiment takes [grid] kind = lattice or file as its start".into(),
            ))
        }
    };
    let mut opt_cfg = cfg
        .optimize
        .clone()
        .ok_or_else(|| Error::Config("optimize needs an [optimize] section".into()))?;
    opt_cfg.extended = cfg.extended;
    let base = RngStream::new(cfg.seed, 0);
    optimize_grid(dist, &initial, cfg.p, cfg.norm, &opt_cfg, &base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Point;
    use crate::harness::config::parse_experiment_config;
    use std::io::Write;

    fn scan_config(text: &str) -> ExperimentConfig {
        parse_experiment_config(text).expect("test config parses")
    }

    const UNIFORM_1D_SCAN: &str = "\
p = 2
seed = 11
samples = 40000

[distribution]
kind = uniform_cube
corner = 0
edge = 1

[grid]
kind = lattice
corner = 0
edge = 1
n = 3 5 9 17
";

    #[test]
    fn rate_scan_matches_closed_form_normalization() {
        let cfg = scan_config(UNIFORM_1D_SCAN);
        let rows = run_rate_scan(&cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![3, 5, 9, 17]);
        for row in &rows {
            assert_eq!(row.d, 1);
            assert_eq!(row.p, 2.0);
            assert_eq!(row.seed, 11);
            assert_eq!(row.grid_source, GridSource::Lattice);
            // normalized -> (1/6)^(1/2) * n/(n-1) for the uniform law on
            // a unit interval with an n-knot uniform grid.
            let target = (1.0_f64 / 6.0).sqrt() * row.n as f64 / (row.n as f64 - 1.0);
            let tol = 4.0 * row.n as f64 * row.std_error;
            assert!(
                (row.normalized - target).abs() <= tol,
                "n = {}: normalized {} vs target {target} (tol {tol})",
                row.n,
                row.normalized
            );
            assert!((row.normalized / row.estimate - row.n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_scan_rows_are_reproducible_and_order_insensitive() {
        let cfg = scan_config(UNIFORM_1D_SCAN);
        let rows_a = run_rate_scan(&cfg).unwrap();
        let rows_b = run_rate_scan(&cfg).unwrap();
        for (a, b) in rows_a.iter().zip(&rows_b) {
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        }
        // The same sizes listed in another order give bitwise-identical
        // (sorted) rows: each row's stream is keyed by its size.
        let shuffled = scan_config(&UNIFORM_1D_SCAN.replace("n = 3 5 9 17", "n = 17 3 9 5"));
        let rows_c = run_rate_scan(&shuffled).unwrap();
        for (a, c) in rows_a.iter().zip(&rows_c) {
            assert_eq!(a.n, c.n);
            assert_eq!(a.estimate.to_bits(), c.estimate.to_bits());
        }
    }

    #[test]
    fn rate_scan_product_and_lp_paths_agree() {
        let cfg = scan_config(UNIFORM_1D_SCAN);
        let mut lp_cfg = cfg.clone();
        // An r within 1e-9 of p is numerically the same norm but
        // defeats the r = p product test, forcing the LP path; the two
        // paths must agree to solver tolerance, not bitwise.
        lp_cfg.norm = NormSpec::Lr { r: 2.0 + 1e-9 };
        let rows = run_rate_scan(&cfg).unwrap();
        let lp_rows = run_rate_scan(&lp_cfg).unwrap();
        for (a, b) in rows.iter().zip(&lp_rows) {
            assert!(
                (a.estimate - b.estimate).abs() < 1e-6,
                "n = {}: {} vs {}",
                a.n,
                a.estimate,
                b.estimate
            );
        }
    }

    #[test]
    fn point_mass_on_its_own_grid_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let grid_path = dir.path().join("grid.txt");
        let points_path = dir.path().join("mass.txt");
        std::fs::write(&grid_path, "0.25 0.75\n").unwrap();
        std::fs::write(&points_path, "0.25 0.75\n").unwrap();
        let text = format!(
            "samples = 64\n\n[distribution]\nkind = empirical\npoints_file = {}\n\n\
             [grid]\nkind = file\nfile = {}\n",
            points_path.display(),
            grid_path.display()
        );
        let cfg = scan_config(&text);
        let rows = run_rate_scan(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 1);
        assert_eq!(rows[0].estimate, 0.0);
        assert_eq!(rows[0].grid_source, GridSource::ExplicitFile);
    }

    #[test]
    fn uncovered_support_yields_nan_row_not_abort() {
        // Grid on [0, 0.5] under U[0, 1]: non-extended evaluation must
        // flag the row instead of crashing, and the covering row stays
        // finite.
        let text = "\
samples = 2000

[distribution]
kind = uniform_cube
corner = 0
edge = 1

[grid]
kind = lattice
corner = 0
edge = 0.5
subdivisions = 4
";
        let cfg = scan_config(text);
        let rows = run_rate_scan(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].estimate.is_nan());
        assert!(rows[0].normalized.is_nan());
        assert_eq!(rows[0].n, 5);
        let mut covered = cfg.clone();
        covered.extended = true;
        let rows = run_rate_scan(&covered).unwrap();
        assert!(rows[0].estimate.is_finite());
    }

    #[test]
    fn fit_rate_recovers_synthetic_power_laws() {
        let row = |n: usize, estimate: f64| RateScanRow {
            n,
            d: 1,
            p: 2.0,
            estimate,
            std_error: 0.0,
            normalized: n as f64 * estimate,
            grid_source: GridSource::Lattice,
            seed: 0,
        };
        let exact: Vec<RateScanRow> =
            [2_usize, 4, 8, 16, 32].iter().map(|&n| row(n, 1.0 / n as f64)).collect();
        let fit = fit_rate(&exact).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12, "slope {}", fit.slope);
        assert!(fit.r_squared > 1.0 - 1e-12);
        let constant: Vec<RateScanRow> = [2_usize, 4, 8].iter().map(|&n| row(n, 0.5)).collect();
        let fit = fit_rate(&constant).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
        // NaN rows do not count toward the three-row minimum.
        let short = vec![row(2, 0.5), row(4, 0.25), row(8, f64::NAN)];
        assert!(matches!(fit_rate(&short), Err(Error::DegenerateInput(2))));
    }

    #[test]
    fn qdq_bound_check_applies_the_margin() {
        let row = |n: usize, normalized: f64, std_error: f64| RateScanRow {
            n,
            d: 2,
            p: 2.0,
            estimate: normalized / size_root(n, 2),
            std_error,
            normalized,
            grid_source: GridSource::Lattice,
            seed: 0,
        };
        let bound = (1.0_f64 / 3.0).sqrt();
        // Normalized sits above the bound but within three (normalized)
        // standard errors of it.
        let se = 1e-3 / size_root(289, 2);
        let report = check_qdq_bound(2, 2.0, 2.0, &[row(289, bound + 2e-3, se)]).unwrap();
        assert!((report.bound - bound).abs() < 1e-15);
        assert!(report.pass, "empirical {} vs bound {}", report.empirical_q, report.bound);
        // Far above the bound: fails.
        let report = check_qdq_bound(2, 2.0, 2.0, &[row(289, bound + 0.1, se)]).unwrap();
        assert!(!report.pass);
        // Hypothesis guard.
        assert!(matches!(
            check_qdq_bound(2, 3.0, 2.0, &[row(289, 0.5, se)]),
            Err(Error::HypothesisViolation { .. })
        ));
        assert!(matches!(
            check_qdq_bound(2, f64::INFINITY, 2.0, &[row(289, 0.5, se)]),
            Err(Error::HypothesisViolation { .. })
        ));
    }

    #[test]
    fn comparison_rows_keep_the_pathwise_order() {
        let text = "\
p = 2
seed = 3
samples = 4000

[distribution]
kind = uniform_cube
corner = 0 0
edge = 1

[grid]
kind = lattice
corner = -0.25 -0.25
edge = 1.5
subdivisions = 2 3
";
        let cfg = scan_config(text);
        let rows = run_comparison(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.voronoi_estimate <= row.dual_estimate);
            assert!(row.voronoi_estimate <= row.extended_estimate);
            assert!(row.dual_estimate.is_finite());
            assert!((row.dual_estimate - row.extended_estimate).abs() < 1e-15);
        }
    }

    #[test]
    fn comparison_flags_dual_when_hull_fails_to_cover() {
        let text = "\
p = 2
seed = 3
samples = 2000

[distribution]
kind = uniform_cube
corner = 0
edge = 1

[grid]
kind = lattice
corner = 0.2
edge = 0.6
subdivisions = 3
";
        let cfg = scan_config(text);
        let rows = run_comparison(&cfg).unwrap();
        assert!(rows[0].dual_estimate.is_nan());
        assert!(rows[0].extended_estimate.is_finite());
        assert!(rows[0].voronoi_estimate <= rows[0].extended_estimate);
    }

    #[test]
    fn pierce_scan_runs_from_config() {
        let text = "\
p = 2
seed = 5
samples = 3000

[distribution]
kind = exponential
dim = 1
rate = 1

[pierce]
eta = 1
n = 32 8
";
        let cfg = scan_config(text);
        let scan = run_pierce_scan(&cfg).unwrap();
        assert_eq!(scan.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![8, 32]);
        assert!(scan.rows.iter().all(|r| r.error_p_root > 0.0));
        assert!(!scan.moment_warning);
    }

    #[test]
    fn fp_eval_reports_certificate_or_outside_branch() {
        let mut cfg = scan_config(
            "p = 2\nsite = 0.25\n\n[grid]\nkind = lattice\ncorner = 0\nedge = 1\nsubdivisions = 1\n",
        );
        let report = run_fp_eval(&cfg).unwrap();
        assert_eq!(report.branch, "dual");
        assert!((report.value_p - 0.1875).abs() < 1e-12);
        assert_eq!(report.support.len(), 2);
        let total: f64 = report.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((report.weighted_mean[0] - 0.25).abs() < 1e-10);
        // Outside the hull without the extended functional: flagged.
        cfg.site = Some(Point::scalar(1.5).unwrap());
        let report = run_fp_eval(&cfg).unwrap();
        assert_eq!(report.branch, "outside-hull");
        assert!(report.value_p.is_nan());
        // With it: nearest-neighbor fallback.
        cfg.extended = true;
        let report = run_fp_eval(&cfg).unwrap();
        assert_eq!(report.branch, "nearest-neighbor");
        assert!((report.value_p - 0.25).abs() < 1e-12);
        assert_eq!(report.nearest_index, Some(1));
    }

    #[test]
    fn optimized_source_improves_on_the_lattice() {
        // A 5-knot grid on [0, 1] against a law concentrated on
        // [0, 0.5]: the optimizer should beat the uniform lattice.
        let text = "\
p = 2
seed = 9
samples = 8000
extended = true

[distribution]
kind = uniform_cube
corner = 0
edge = 0.5

[grid]
kind = optimized
corner = 0
edge = 1
subdivisions = 4

[optimize]
method = exhaustive_1d
iterations = 40
samples_per_eval = 4096
";
        let cfg = scan_config(text);
        let optimized = run_rate_scan(&cfg).unwrap();
        let mut lattice_cfg = cfg.clone();
        lattice_cfg.grid = Some(GridSpec::Lattice {
            corner: vec![0.0],
            edge: 1.0,
            subdivisions: vec![4],
        });
        let lattice = run_rate_scan(&lattice_cfg).unwrap();
        assert_eq!(optimized[0].grid_source, GridSource::Optimized);
        assert!(
            optimized[0].estimate < 0.8 * lattice[0].estimate,
            "optimized {} vs lattice {}",
            optimized[0].estimate,
            lattice[0].estimate
        );
    }

    #[test]
    fn run_optimize_and_distortion_share_configs() {
        let dir = tempfile::tempdir().unwrap();
        let grid_path = dir.path().join("init.txt");
        let mut f = std::fs::File::create(&grid_path).unwrap();
        writeln!(f, "# initial knots\n0\n0.1\n0.9\n1").unwrap();
        drop(f);
        let text = format!(
            "p = 2\nseed = 2\nsamples = 4096\n\n[distribution]\nkind = uniform_cube\ncorner = 0\nedge = 1\n\n\
             [grid]\nkind = file\nfile = {}\n\n[optimize]\nmethod = exhaustive_1d\niterations = 30\n",
            grid_path.display()
        );
        let cfg = scan_config(&text);
        let baseline = run_distortion(&cfg).unwrap();
        let result = run_optimize(&cfg).unwrap();
        assert!(result.final_report.estimate_p < baseline.estimate_p);
        // The optimizer pins the outer knots for a bounded law.
        let knots: Vec<f64> = result.grid.points().iter().map(|q| q.coords()[0]).collect();
        assert!(knots.contains(&0.0) && knots.contains(&1.0));
    }

    #[test]
    fn missing_sections_are_config_errors() {
        let cfg = scan_config("p = 2\n");
        assert!(matches!(run_rate_scan(&cfg), Err(Error::Config(_))));
        assert!(matches!(run_pierce_scan(&cfg), Err(Error::Config(_))));
        assert!(matches!(run_fp_eval(&cfg), Err(Error::Config(_))));
        let cfg = scan_config(
            "[grid]\nkind = optimized\ncorner = 0\nedge = 1\nsubdivisions = 2\n\n\
             [distribution]\nkind = uniform_cube\ncorner = 0\nedge = 1\n",
        );
        let err = run_rate_scan(&cfg).unwrap_err();
        assert!(err.to_string().contains("[optimize]"), "{err}");
    }
}
