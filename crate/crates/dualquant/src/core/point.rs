//! Points in R^d and finite grids (the quantizers Γ).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Builds a point, rejecting empty coordinate lists and non-finite
    /// entries.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point coordinates must be finite, got {coords:?}"
            )));
        }
        Ok(Point { coords })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(x: f64) -> Result<Self> {
        Point::new(vec![x])
    }

    /// The dimension d.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinate slice.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Componentwise difference `self - other`.
    ///
    /// Panics on dimension mismatch; mixing dimensions is a programming
    /// error, not a runtime condition.
    pub fn sub(&self, other: &Point) -> Vec<f64> {
        assert_eq!(
            self.dim(),
            other.dim(),
            "dimension mismatch: {} vs {}",
            self.dim(),
            other.dim()
        );
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Relative tolerance under which two grid points count as duplicates:
/// their l_inf distance is compared against `DUPLICATE_TOL * (1 + M)`
/// where `M` is the largest coordinate magnitude of the pair.
pub(crate) const DUPLICATE_TOL: f64 = 1e-12;

/// A finite set of pairwise-distinct points of common dimension; the
/// order of the points is part of the value (certificates index into it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<Point>,
    dim: usize,
}

impl Grid {
    /// Builds a grid, checking non-emptiness, a common dimension, and
    /// pairwise distinctness within the duplicate tolerance.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidInput("grid needs at least one point".into()));
        };
        let dim = first.dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidInput("grid points must share one dimension".into()));
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points_duplicate(&points[i], &points[j]) {
                    return Err(Error::InvalidInput(format!(
                        "grid points {i} and {j} coincide within the duplicate tolerance"
                    )));
                }
            }
        }
        Ok(Grid { points, dim })
    }

    /// Builds a grid without the quadratic duplicate scan. Used by the
    /// optimizer's inner loop, where transient near-duplicates are
    /// harmless for evaluation and the scan would dominate the runtime.
    pub(crate) fn new_unchecked(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidInput("grid needs at least one point".into()));
        };
        let dim = first.dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidInput("grid points must share one dimension".into()));
        }
        Ok(Grid { points, dim })
    }

    /// Builds a grid after dropping points that duplicate an earlier one
    /// (first occurrence wins). Used to finalize optimizer output, where
    /// points may have merged during training.
    pub(crate) fn new_deduped(points: Vec<Point>) -> Result<Self> {
        let mut kept: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if !kept.iter().any(|q| points_duplicate(q, &p)) {
                kept.push(p);
            }
        }
        Grid::new(kept)
    }

    /// Number of points n = |Γ|.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All points, in insertion order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// The i-th point.
    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    /// Dimension of the affine hull of the points (0 for a single point,
    /// up to d). Computed by Gram-Schmidt on the difference vectors with
    /// a relative rank threshold.
    pub fn affine_dimension(&self) -> usize {
        let n = self.points.len();
        if n <= 1 {
            return 0;
        }
        let d = self.dim;
        let origin = &self.points[0];
        let mut scale = 0.0_f64;
        let diffs: Vec<Vec<f64>> = self.points[1..]
            .iter()
            .map(|p| {
                let v = p.sub(origin);
                for c in &v {
                    scale = scale.max(c.abs());
                }
                v
            })
            .collect();
        if scale == 0.0 {
            return 0;
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in diffs {
            let mut w: Vec<f64> = v.iter().map(|c| c / scale).collect();
            for b in &basis {
                let dot: f64 = w.iter().zip(b).map(|(a, c)| a * c).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= dot * bi;
                }
            }
            let norm: f64 = w.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-10 {
                for wi in &mut w {
                    *wi /= norm;
                }
                basis.push(w);
                if basis.len() == d {
                    break;
                }
            }
        }
        basis.len()
    }
}

/// Duplicate test used by [`Grid::new`].
pub(crate) fn points_duplicate(a: &Point, b: &Point) -> bool {
    let mut dist = 0.0_f64;
    let mut mag = 0.0_f64;
    for (x, y) in a.coords().iter().zip(b.coords()) {
        dist = dist.max((x - y).abs());
        mag = mag.max(x.abs()).max(y.abs());
    }
    dist < DUPLICATE_TOL * (1.0 + mag)
}
