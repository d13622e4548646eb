//! Norm specifications for R^d and their evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which norm is in force: a member of the l_r family (r >= 1) or l_inf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormSpec {
    /// l_r norm, `(sum |v_i|^r)^(1/r)` with r >= 1.
    Lr { r: f64 },
    /// l_inf norm, `max |v_i|`.
    LInf,
}

impl NormSpec {
    /// The l_1 norm.
    pub const L1: NormSpec = NormSpec::Lr { r: 1.0 };
    /// The Euclidean norm.
    pub const L2: NormSpec = NormSpec::Lr { r: 2.0 };

    /// Builds an l_r norm, rejecting r < 1 (the triangle inequality fails
    /// below 1).
    pub fn lr(r: f64) -> Result<Self> {
        if !r.is_finite() || r < 1.0 {
            return Err(Error::InvalidInput(format!("l_r norm requires finite r >= 1, got {r}")));
        }
        Ok(NormSpec::Lr { r })
    }

    /// The exponent r, or `None` for l_inf.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            NormSpec::Lr { r } => Some(*r),
            NormSpec::LInf => None,
        }
    }
}

impl std::fmt::Display for NormSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormSpec::Lr { r } if *r == 1.0 => write!(f, "l1"),
            NormSpec::Lr { r } if *r == 2.0 => write!(f, "l2"),
            NormSpec::Lr { r } => write!(f, "l{r}"),
            NormSpec::LInf => write!(f, "linf"),
        }
    }
}

impl std::str::FromStr for NormSpec {
    type Err = Error;

    /// Parses `l1`, `l2`, `linf`, or `l<r>` for a real r >= 1.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "l1" => Ok(NormSpec::L1),
            "l2" => Ok(NormSpec::L2),
            "linf" | "linfinity" | "l_inf" => Ok(NormSpec::LInf),
            other => {
                let r = other
                    .strip_prefix('l')
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("unknown norm '{s}': expected l1, l2, linf, or l<r>"))
                    })?;
                NormSpec::lr(r)
            }
        }
    }
}

/// Evaluates `||v||` for a difference vector `v`.
///
/// The generic l_r branch factors out the largest magnitude before
/// exponentiating so that widely scaled inputs neither overflow nor
/// underflow.
pub fn norm_eval(v: &[f64], norm: NormSpec) -> f64 {
    match norm {
        NormSpec::LInf => v.iter().fold(0.0_f64, |m, c| m.max(c.abs())),
        NormSpec::Lr { r } if r == 1.0 => v.iter().map(|c| c.abs()).sum(),
        NormSpec::Lr { r } if r == 2.0 => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
        NormSpec::Lr { r } => {
            let m = v.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let s: f64 = v.iter().map(|c| (c.abs() / m).powf(r)).sum();
            m * s.powf(1.0 / r)
        }
    }
}

/// Gradient of `v -> ||v||` at `v != 0` (a subgradient at kinks).
///
/// For l_r the m-th component is `sign(v_m) * (|v_m| / ||v||)^(r-1)`; for
/// l_inf the subgradient puts all mass on the first coordinate attaining
/// the maximum. Returns the zero vector at `v = 0`, the convention used
/// by the stochastic optimizer (a sample sitting exactly on a grid point
/// exerts no pull).
pub fn norm_gradient(v: &[f64], norm: NormSpec) -> Vec<f64> {
    let n = norm_eval(v, norm);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    match norm {
        NormSpec::LInf => {
            let mut g = vec![0.0; v.len()];
            let mut best = 0usize;
            for (i, c) in v.iter().enumerate() {
                if c.abs() > v[best].abs() {
                    best = i;
                }
            }
            g[best] = v[best].signum();
            g
        }
        NormSpec::Lr { r } if r == 1.0 => v.iter().map(|c| if *c == 0.0 { 0.0 } else { c.signum() }).collect(),
        NormSpec::Lr { r } => v
            .iter()
            .map(|c| {
                if *c == 0.0 {
                    0.0
                } else {
                    c.signum() * (c.abs() / n).powf(r - 1.0)
                }
            })
            .collect(),
    }
}
