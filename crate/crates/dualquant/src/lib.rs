//! Dual (Delaunay) quantization of probability distributions.
//!
//! Regular (Voronoi) quantization approximates a random vector by the
//! nearest point of a finite grid. *Dual* quantization instead splits the
//! vector randomly among up to d+1 surrounding grid points, with
//! barycentric weights chosen so that the conditional mean of the output
//! equals the input (intrinsic stationarity). The local error of the
//! optimal splitting,
//!
//! ```text
//! F_p(x; G)^p = min { sum_i w_i ||x - g_i||^p :
//!                     w_i >= 0, sum_i w_i g_i = x, sum_i w_i = 1 },
//! ```
//!
//! is a small linear program over the grid. This crate provides:
//!
//! * [`lp`] — a dense simplex solver for the barycentric LP, with convex
//!   hull membership as a phase-I feasibility question;
//! * [`dq`] — the local error functionals (interior and extended), the
//!   random splitting operator, a brute-force oracle, and Monte Carlo
//!   distortion estimation;
//! * [`structured`] — 1D closed forms, lattice/product grids, and the
//!   per-axis product decomposition of the local error;
//! * [`pierce`] — splitting functionals, the deterministic error
//!   envelope, and random-grid scans exhibiting the O(1/n) bound that a
//!   p+eta moment buys;
//! * [`optimize`] — stochastic and exhaustive grid optimization plus the
//!   Voronoi comparator;
//! * [`harness`] — config-driven experiments with CSV/JSON output behind
//!   the `dualquant` CLI.
//!
//! All randomness flows through [`core::RngStream`] values, so every
//! estimate in the crate is reproducible bit-for-bit from `(config,
//! seed)` regardless of worker count.

pub mod core;
pub mod dq;
pub mod error;
pub mod harness;
pub mod lp;
pub mod optimize;
pub mod pierce;
mod stats;
pub mod structured;

pub use error::{Error, Result};
