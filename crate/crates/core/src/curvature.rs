//! Mean curvature of graphs in the cone, the conformal-change rule, the slab
//! boundary pieces and the curvature of the horizontal-plane foliation.
//!
//! The graph curvature here deliberately avoids the variational residual the
//! solver uses: it expands `div(Du/omega)` in nondivergence form from the
//! node-based gradient and Hessian, so agreement between the two is evidence
//! rather than tautology.

use serde::Serialize;
use thiserror::Error;

use crate::discrete::{self, Density};
use crate::geometry::{self, boundary_mean_curvature, ScalarField};
use crate::profiles::{ConformalProfile, ProfileError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("graph leaves the cone: u = {value} at node {node} is not below A = {upper}")]
    OutOfCone { node: usize, value: f64, upper: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field is not a solution: discrete residual {residual:e} exceeds {tol:e}")]
    NotASolution { residual: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Normal with positive `dr` component.
    UpwardGraph,
    /// Normal pointing out of the region bounded by the surface.
    OutwardDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub values: ScalarField,
    pub convention: Convention,
    /// Nodes evaluated with one-sided stencils.
    pub lower_accuracy: Vec<usize>,
}

impl CurvatureField {
    /// Same surface, opposite normal.
    pub fn flipped(&self, convention: Convention) -> CurvatureField {
        if convention == self.convention {
            return self.clone();
        }
        CurvatureField {
            values: self.values.map(|h| -h),
            convention,
            lower_accuracy: self.lower_accuracy.clone(),
        }
    }

    /// Max of `|H|` over nodes with full stencils.
    pub fn interior_max_abs(&self) -> f64 {
        let grid = self.values.grid();
        grid.interior()
            .iter()
            .map(|&i| self.values.values()[i].abs())
            .fold(0.0, f64::max)
    }
}

fn check_in_cone(p: &ConformalProfile, u: &[f64]) -> Result<(), CurvatureError> {
    let upper = p.upper();
    match u.iter().position(|&v| !(v < upper)) {
        Some(node) => Err(CurvatureError::OutOfCone { node, value: u[node], upper }),
        None => Ok(()),
    }
}

/// `H = (-div(Du/omega) + n phi'(u) / (phi(u) omega)) / phi(u)` for the upward normal.
pub fn graph_mean_curvature(
    p: &ConformalProfile,
    u: &ScalarField,
) -> Result<CurvatureField, CurvatureError> {
    check_in_cone(p, u.values())?;
    let grid = u.grid().clone();
    let n = grid.dim() as f64;
    let du = geometry::gradient(u);
    let hess = geometry::hessian(u);
    let mut h = Vec::with_capacity(grid.len());
    for (i, &ui) in u.values().iter().enumerate() {
        let g = du.components()[i];
        let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
        let w = w2.sqrt();
        let div = (hess.laplacian(i) - hess.quadratic(i, g) / w2) / w;
        let s = p.sample(ui)?;
        h.push((-div + n * s.log_d1() / w) / s.phi);
    }
    Ok(CurvatureField {
        values: ScalarField::new(grid.clone(), h).expect("one value per node"),
        convention: Convention::UpwardGraph,
        lower_accuracy: grid.boundary().to_vec(),
    })
}

/// Mean curvature after the conformal change `e^{2f} g` of an `m`-dimensional
/// ambient metric: `e^{-f} (H + (m - 1) df(nu))`.
pub fn conformal_mean_curvature(
    h: f64,
    df_normal: f64,
    m: usize,
    f_value: f64,
) -> Result<f64, CurvatureError> {
    if m < 2 {
        return Err(CurvatureError::InvalidArgument(format!(
            "ambient dimension must be at least 2, got {m}"
        )));
    }
    Ok((-f_value).exp() * (h + (m - 1) as f64 * df_normal))
}

/// Curvature range of one boundary piece, outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PieceCurvature {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabReport {
    /// Lower graph; `max_abs` is over interior nodes.
    pub lower_graph: PieceCurvature,
    pub lower_graph_max_abs: f64,
    pub top_slice: PieceCurvature,
    pub lateral: PieceCurvature,
    pub lateral_note: Option<String>,
}

impl SlabReport {
    pub fn min_curvature(&self) -> f64 {
        self.lower_graph.min.min(self.top_slice.min).min(self.lateral.min)
    }
}

const LATERAL_SAMPLES: usize = 65;

/// Outward curvatures of the region between the graph of `u_minus_k` and the
/// slice `r = alpha`, bounded laterally by the cylinder over the boundary.
///
/// The graph piece uses the solver's discrete curvature; `tol` bounds the
/// solver's weak residual the field must meet to count as a solution.
pub fn slab_boundary_report(
    p: &ConformalProfile,
    u_minus_k: &ScalarField,
    alpha: f64,
    tol: f64,
) -> Result<SlabReport, CurvatureError> {
    let u = u_minus_k.values();
    check_in_cone(p, u)?;
    let data_max = u_minus_k.boundary_max();
    if !(data_max <= alpha && alpha < p.upper()) {
        return Err(CurvatureError::InvalidArgument(format!(
            "top height {alpha} must satisfy max boundary value {data_max} <= alpha < A = {}",
            p.upper()
        )));
    }
    let grid = u_minus_k.grid();
    let n = grid.dim() as f64;
    let density = Density::LogProfile { profile: p, scale: n, log_ref: 0.0 };
    let weak = discrete::weak_residual(grid, u, &density.evaluate(u)?);
    let worst = grid.interior().iter().map(|&i| weak[i].abs()).fold(0.0, f64::max);
    if worst > tol {
        return Err(CurvatureError::NotASolution { residual: worst, tol });
    }
    let residual = discrete::normalized_gradient(grid, u, &density)?;
    // Outward on the lower graph is downward.
    let mut lower = PieceCurvature { min: f64::INFINITY, max: f64::NEG_INFINITY };
    let mut max_abs: f64 = 0.0;
    for &i in grid.interior() {
        let h = -residual[i] / p.phi(u[i])?;
        lower.min = lower.min.min(h);
        lower.max = lower.max.max(h);
        max_abs = max_abs.max(h.abs());
    }
    if grid.interior().is_empty() {
        lower = PieceCurvature { min: 0.0, max: 0.0 };
    }
    let s = p.sample(alpha)?;
    let top = n * s.dphi / (s.phi * s.phi);
    let bc = boundary_mean_curvature(grid.domain());
    let lo = u_minus_k.boundary_min();
    let mut lateral = PieceCurvature { min: f64::INFINITY, max: f64::NEG_INFINITY };
    for k in 0..LATERAL_SAMPLES {
        let t = lo + (alpha - lo) * k as f64 / (LATERAL_SAMPLES - 1) as f64;
        let h = bc.value / p.phi(t)?;
        lateral.min = lateral.min.min(h);
        lateral.max = lateral.max.max(h);
    }
    Ok(SlabReport {
        lower_graph: lower,
        lower_graph_max_abs: max_abs,
        top_slice: PieceCurvature { min: top, max: top },
        lateral,
        lateral_note: bc.note,
    })
}

/// Curvature of the horizontal plane `x_{n+1} = t` seen in the translating
/// cone over the upper hemisphere, normal pointing toward increasing `r`.
///
/// Each point lists the horizontal coordinates `x_1..x_n`; the radial
/// coordinate is `r = ln rho` with `rho` the Euclidean norm of `(x, t)`, and
/// `<v, d_r> = t / rho`.
pub fn foliation_mean_curvature(
    alpha: f64,
    n: usize,
    t: f64,
    points: &[Vec<f64>],
) -> Result<Vec<f64>, CurvatureError> {
    if !(t > 0.0) {
        return Err(CurvatureError::InvalidArgument(format!("plane height must be positive, got {t}")));
    }
    if n == 0 {
        return Err(CurvatureError::InvalidArgument("dimension must be at least 1".into()));
    }
    let c = (alpha - n as f64) / n as f64;
    points
        .iter()
        .map(|x| {
            if x.len() != n {
                return Err(CurvatureError::InvalidArgument(format!(
                    "point has {} coordinates, expected {n}",
                    x.len()
                )));
            }
            let rho = (x.iter().map(|v| v * v).sum::<f64>() + t * t).sqrt();
            Ok((-c * rho.ln()).exp() * c * t / rho)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn constant_graph_in_euclidean_cone_is_unit_sphere() {
        for n in [1usize, 2, 3] {
            let d = if n == 1 { Domain::interval(-1.0, 1.0).unwrap() } else { Domain::flat_disk(1.0, n).unwrap() };
            let grid = build_grid(&d, 21).unwrap();
            let u = ScalarField::constant(grid, 0.0);
            let h = graph_mean_curvature(&ConformalProfile::euclidean(), &u).unwrap();
            assert!(h.values.values().iter().all(|&v| (v - n as f64).abs() < 1e-13));
        }
    }

    #[test]
    fn straight_line_is_minimal_in_product() {
        let grid = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), 11).unwrap();
        let u = ScalarField::from_fn(grid, |c| 0.3 * c.x - 0.2);
        let h = graph_mean_curvature(&ConformalProfile::product(None), &u).unwrap();
        assert!(h.values.values().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn out_of_cone_rejected() {
        let grid = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), 5).unwrap();
        let u = ScalarField::constant(grid, 0.0);
        assert!(matches!(
            graph_mean_curvature(&ConformalProfile::hyperbolic(), &u),
            Err(CurvatureError::OutOfCone { .. })
        ));
    }

    #[test]
    fn conformal_rule_examples() {
        assert_eq!(conformal_mean_curvature(0.7, 0.0, 3, 0.0).unwrap(), 0.7);
        assert!((conformal_mean_curvature(3.0, 0.0, 4, 2f64.ln()).unwrap() - 1.5).abs() < 1e-15);
        assert!(conformal_mean_curvature(1.0, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn foliation_examples() {
        let pts = vec![vec![0.0, 0.0], vec![0.4, -1.3]];
        let h = foliation_mean_curvature(4.0, 2, 1.0, &pts).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-15);
        assert!(h[1] > 0.0);
        assert!(foliation_mean_curvature(2.0, 2, 1.0, &pts).unwrap().iter().all(|&v| v == 0.0));
        assert!(foliation_mean_curvature(2.0, 2, 0.0, &pts).is_err());
    }

    #[test]
    fn second_order_on_smooth_non_solution() {
        let p = ConformalProfile::hyperbolic();
        let f = |x: f64| -1.0 - 0.3 * (1.3 * x).cos();
        let exact = |x: f64| {
            let (d1, d2) = (0.39 * (1.3 * x).sin(), 0.507 * (1.3 * x).cos());
            let w = (1.0 + d1 * d1).sqrt();
            let s = p.sample(f(x)).unwrap();
            (-d2 / (w * w * w) + s.log_d1() / w) / s.phi
        };
        let mut errs = vec![];
        for res in [101, 201] {
            let grid = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), res).unwrap();
            let u = ScalarField::from_fn(grid.clone(), |c| f(c.x));
            let h = graph_mean_curvature(&p, &u).unwrap();
            let e = grid
                .interior()
                .iter()
                .map(|&i| (h.values.values()[i] - exact(grid.coords(i).x)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!((errs[0] / errs[1]).log2() > 1.9, "{errs:?}");
    }
}
