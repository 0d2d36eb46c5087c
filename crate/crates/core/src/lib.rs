//! Minimal graphs and prescribed-mean-curvature Dirichlet problems in
//! conformal cones `Omega x (-inf, A)` with metric `phi(r)^2 (sigma + dr^2)`.

pub mod expr;
pub mod geometry;
pub mod profiles;
pub mod banded;
pub mod discrete;
pub mod curvature;
pub mod functional;
pub mod solver;
pub mod oracles;
pub mod cli;
