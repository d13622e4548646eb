//! Foundational types shared by every other module: points and grids in
//! R^d, norm specifications, samplable distributions, and reproducible
//! random streams.

mod distribution;
mod norm;
mod point;
mod rng;

pub(crate) use distribution::pareto_order_statistics_with;
pub use distribution::{pareto_order_statistics, DistributionSpec};
pub use norm::{norm_eval, norm_gradient, NormSpec};
pub use point::{Grid, Point};
pub use rng::RngStream;
