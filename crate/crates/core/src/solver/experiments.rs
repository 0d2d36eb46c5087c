//! Barriers, ordered-data comparison, the infinity boundary limit, cap sweeps
//! and slabs, all built on the Dirichlet solver.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    solve_dirichlet, solve_dirichlet_from, solve_translating, SolveReport, SolveStatus, SolverConfig,
    SolverError,
};
use crate::geometry::{build_grid, Domain, Grid, ScalarField};
use crate::profiles::{check_ca, check_cc, ConformalProfile, ProfileLabel};

/// Bracket `w <= u <= upper` for the solution with the same boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub lower: ScalarField,
    pub upper: f64,
    /// Slope of the translating equation solved by `lower`.
    pub beta: f64,
    pub report: SolveReport,
}

const BETA_WINDOW: f64 = 10.0;
const BETA_SAMPLES: usize = 2001;

/// Lower barrier: the translating solution with slope `beta >= n sup phi'/phi`
/// below `max psi` and constant data `min psi`. Upper barrier: `max psi`.
pub fn barrier_bounds(
    p: &ConformalProfile,
    psi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Barrier, SolverError> {
    let top = psi.boundary_max();
    let n = psi.grid().dim() as f64;
    let beta = match p.label() {
        ProfileLabel::Translating { alpha, .. } => *alpha,
        _ => {
            let mut sup = f64::NEG_INFINITY;
            for k in 0..BETA_SAMPLES {
                let r = top - BETA_WINDOW + BETA_WINDOW * k as f64 / (BETA_SAMPLES - 1) as f64;
                sup = sup.max(p.sample(r.min(top))?.log_d1());
            }
            n * sup
        }
    };
    let data = ScalarField::constant(psi.grid().clone(), psi.boundary_min());
    let (lower, report) = solve_translating(beta, &data, cfg)?;
    if !report.converged() {
        return Err(SolverError::BarrierFailed(Box::new(report)));
    }
    Ok(Barrier { lower, upper: top, beta, report })
}

/// Slack allowed in ordering comparisons.
pub const ORDER_SLACK: f64 = 1e-10;

/// Whether `u1 <= u2` nodewise, for converged solutions with ordered data.
pub fn comparison_check(
    u1: &ScalarField,
    u2: &ScalarField,
    report1: &SolveReport,
    report2: &SolveReport,
) -> Result<bool, SolverError> {
    u1.check_same_grid(u2)?;
    if !report1.converged() || !report2.converged() {
        return Err(SolverError::Precondition("both solutions must have converged".into()));
    }
    let (a, b) = (u1.values(), u2.values());
    if let Some(&i) = u1.grid().boundary().iter().find(|&&i| a[i] > b[i] + 1e-12) {
        return Err(SolverError::Precondition(format!(
            "boundary data not ordered at node {i}: {} > {}",
            a[i], b[i]
        )));
    }
    Ok(a.iter().zip(b).all(|(x, y)| *x <= *y + ORDER_SLACK))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfinityReport {
    pub schedule: Vec<f64>,
    /// Inner-half sup of `|u_{j+1} - u_j|`.
    pub gaps: Vec<f64>,
    /// Inner-half minimum of each iterate.
    pub inner_min: Vec<f64>,
    /// Most negative nodewise increment `u_{j+1} - u_j`.
    pub worst_decrease: f64,
    pub monotone: bool,
    pub final_gap: f64,
    pub tolerance: f64,
    pub cauchy_achieved: bool,
    pub member_iterations: Vec<usize>,
    pub member_max_gradient: Vec<f64>,
}

/// Solves with constant data `t_j` for an increasing schedule `t_j -> A` and
/// checks that the iterates settle on the inner half of the domain.
pub fn solve_infinity(
    p: &ConformalProfile,
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    schedule: &[f64],
    tolerance: f64,
) -> Result<(ScalarField, InfinityReport), SolverError> {
    let a = p.upper();
    if !a.is_finite() {
        return Err(SolverError::Precondition("the infinity problem needs a finite A".into()));
    }
    let domain = grid.domain();
    if !(domain.mean_convex_declared && domain.ncm_declared) {
        return Err(SolverError::Precondition(
            "domain must be declared mean convex with the NCM property".into(),
        ));
    }
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[0] < w[1])) || !(schedule[schedule.len() - 1] < a) {
        return Err(SolverError::Precondition(format!(
            "schedule must have at least two strictly increasing heights below A = {a}"
        )));
    }
    let t0 = schedule[0];
    let ca = check_ca(p, (t0 - 10.0, t0), t0, 401)?;
    let cc = check_cc(p, t0, 201, 1e6)?;
    if !ca.holds || !cc.holds {
        return Err(SolverError::Precondition(format!(
            "profile conditions fail: cA holds = {}, cC holds = {}",
            ca.holds, cc.holds
        )));
    }
    let inner = grid.inner_half();
    let mut prev: Option<ScalarField> = None;
    let mut gaps = Vec::new();
    let mut inner_min = Vec::new();
    let mut worst_decrease = f64::INFINITY;
    let mut member_iterations = Vec::new();
    let mut member_max_gradient = Vec::new();
    for (index, &t) in schedule.iter().enumerate() {
        let data = ScalarField::constant(grid.clone(), t);
        let guess = prev.as_ref().map(|u| u.map(|v| v + (t - schedule[index - 1])));
        let (u, report) = solve_dirichlet_from(p, &data, cfg, guess.as_ref())?;
        if !report.converged() {
            return Err(SolverError::MemberFailed { index, t, report: Box::new(report) });
        }
        member_iterations.push(report.newton_iterations);
        member_max_gradient.push(report.max_gradient);
        inner_min.push(inner.iter().map(|&i| u.values()[i]).fold(f64::INFINITY, f64::min));
        if let Some(q) = &prev {
            let (x, y) = (q.values(), u.values());
            gaps.push(inner.iter().map(|&i| (y[i] - x[i]).abs()).fold(0.0, f64::max));
            worst_decrease = x.iter().zip(y).map(|(a, b)| b - a).fold(worst_decrease, f64::min);
        }
        prev = Some(u);
    }
    let final_gap = *gaps.last().expect("schedule has two members");
    let report = InfinityReport {
        schedule: schedule.to_vec(),
        gaps,
        inner_min,
        worst_decrease,
        monotone: worst_decrease >= -ORDER_SLACK,
        final_gap,
        tolerance,
        cauchy_achieved: final_gap < tolerance,
        member_iterations,
        member_max_gradient,
    };
    if !report.cauchy_achieved {
        return Err(SolverError::NotCauchy(Box::new(report)));
    }
    Ok((prev.expect("schedule is non-empty"), report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    Bounded,
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub radius: f64,
    pub status: SolveStatus,
    pub max_gradient: f64,
    pub final_residual: f64,
    pub newton_iterations: usize,
    /// `u` at the pole.
    pub center_value: f64,
    pub classification: GrowthClass,
}

/// Relative gradient increase between consecutive radii counted as growth.
const GROWTH_MARGIN: f64 = 0.05;

/// Solves the translating equation with zero data on radial caps of
/// increasing radius and classifies how the gradient behaves.
pub fn detect_nonexistence_sweep(
    radii: &[f64],
    alpha: f64,
    n: usize,
    resolution: usize,
    cfg: &SolverConfig,
) -> Result<Vec<SweepRow>, SolverError> {
    if let Some(r) = radii.iter().find(|&&r| !(r > 0.0 && r < FRAC_PI_2)) {
        return Err(SolverError::Precondition(format!(
            "cap radius {r} must lie in (0, pi/2)"
        )));
    }
    cfg.validate()?;
    let rows = radii
        .par_iter()
        .map(|&radius| {
            let grid = build_grid(&Domain::spherical_cap(radius, n)?, resolution)?;
            let data = ScalarField::constant(grid, 0.0);
            let (u, report) = solve_translating(alpha, &data, cfg)?;
            Ok(SweepRow {
                radius,
                status: report.status,
                max_gradient: report.max_gradient,
                final_residual: report.final_residual,
                newton_iterations: report.newton_iterations,
                center_value: u.values()[0],
                classification: GrowthClass::Bounded,
            })
        })
        .collect::<Result<Vec<SweepRow>, SolverError>>()?;
    let mut out = rows;
    for i in 0..out.len() {
        let grew = i > 0 && out[i].max_gradient > (1.0 + GROWTH_MARGIN) * out[i - 1].max_gradient;
        if grew || out[i].status != SolveStatus::Converged {
            out[i].classification = GrowthClass::Growing;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabDescriptor {
    pub k: f64,
    pub alpha_top: f64,
    pub data_max: f64,
    /// Lowest boundary height of the lower graph.
    pub lower_boundary_min: f64,
    /// Top slice touches the highest boundary point of the lower graph.
    pub degenerate: bool,
    pub pieces: Vec<&'static str>,
    pub report: SolveReport,
}

/// Solves with data `psi - k` and describes the region between that graph and
/// the slice `r = alpha_top`.
pub fn build_slab(
    p: &ConformalProfile,
    psi: &ScalarField,
    k: f64,
    alpha_top: f64,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SlabDescriptor), SolverError> {
    let data_max = psi.boundary_max();
    if !(k >= 0.0) || !(data_max <= alpha_top && alpha_top < p.upper()) {
        return Err(SolverError::Precondition(format!(
            "need k >= 0 and max psi = {data_max} <= alpha_top = {alpha_top} < A = {}",
            p.upper()
        )));
    }
    let lowered = psi.map(|v| v - k);
    let (u, report) = solve_dirichlet(p, &lowered, cfg)?;
    if !report.converged() {
        return Err(SolverError::SolveFailed(Box::new(report)));
    }
    let descriptor = SlabDescriptor {
        k,
        alpha_top,
        data_max,
        lower_boundary_min: lowered.boundary_min(),
        degenerate: k == 0.0 && alpha_top == data_max,
        pieces: vec!["lower_graph", "top_slice", "lateral", "top_rim"],
        report,
    };
    Ok((u, descriptor))
}
