//! Dirichlet problems for minimal graphs in conformal cones.
//!
//! The discrete equation is the first variation of the cell-quadrature area
//! `sum_c omega_c sum_k w_k phi(u_k)^n` (see [`crate::discrete`]). The residual
//! is that gradient divided by `phi(u_i)^n`, i.e. `phi H` integrated against
//! the nodal dual volume. Newton steps use its exact Jacobian and a
//! backtracking line search on its Euclidean norm.
//!
//! When Newton from the harmonic extension fails, the solver follows the
//! family `u^s` whose boundary data is `c + s (psi - c)` and whose density is
//! `(phi(u) / phi(c))^{s n}`; `s = 0` is solved by the constant `c` and `s = 1`
//! is the target problem.

mod experiments;

pub use experiments::*;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::BandMatrix;
use crate::discrete::{self, Density, NodalDensity};
use crate::geometry::{GeometryError, Grid, ScalarField};
use crate::profiles::{ConformalProfile, ProfileError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("solve did not converge (status {:?}, residual {:e})", .0.status, .0.final_residual)]
    SolveFailed(Box<SolveReport>),
    #[error("barrier solve did not converge (status {:?})", .0.status)]
    BarrierFailed(Box<SolveReport>),
    #[error("member solve {index} at t = {t} did not converge (status {:?})", .report.status)]
    MemberFailed { index: usize, t: f64, report: Box<SolveReport> },
    #[error("iterates are not Cauchy: final inner gap {:e} exceeds {:e}", .0.final_gap, .0.tolerance)]
    NotCauchy(Box<InfinityReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Max-norm of the interior weak residual at convergence.
    pub residual_tol: f64,
    /// Per Newton stage.
    pub max_newton_iters: usize,
    /// Smallest line-search step before a stage is abandoned.
    pub min_step: f64,
    /// Initial number of continuation steps from `s = 0` to `s = 1`.
    pub continuation_steps: usize,
    /// Maximum number of step halvings below the initial continuation step.
    pub max_halvings: usize,
    pub blowup_gradient_threshold: f64,
    pub blowup_growth_factor: f64,
    /// Iterations over which a residual that fails to halve counts as stalled.
    pub stall_window: usize,
    /// Try Newton at `s = 1` before continuation.
    pub direct_first: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            residual_tol: 1e-10,
            max_newton_iters: 50,
            min_step: 2f64.powi(-20),
            continuation_steps: 8,
            max_halvings: 12,
            blowup_gradient_threshold: 1e3,
            blowup_growth_factor: 10.0,
            stall_window: 5,
            direct_first: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidConfig(what.to_string()));
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol must be positive");
        }
        if self.max_newton_iters == 0 || self.continuation_steps == 0 || self.stall_window == 0 {
            return bad("iteration and step counts must be positive");
        }
        if !(self.min_step > 0.0 && self.min_step < 1.0) {
            return bad("min_step must lie in (0, 1)");
        }
        if !(self.blowup_gradient_threshold > 0.0 && self.blowup_growth_factor > 0.0) {
            return bad("blow-up thresholds must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    BlowUpSuspected,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationStep {
    pub s: f64,
    pub converged: bool,
    pub newton_iterations: usize,
    pub residual: f64,
    pub max_gradient: f64,
}

/// Equality ignores `wall_time_s`.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Interior max-norm residual at every Newton iterate, across all stages.
    pub residual_history: Vec<f64>,
    /// Residual of the returned field for the stage it belongs to.
    pub final_residual: f64,
    /// Largest cell gradient of the returned field.
    pub max_gradient: f64,
    pub newton_iterations: usize,
    /// Accepted and rejected continuation stages, in order.
    pub continuation: Vec<ContinuationStep>,
    /// Trial iterates pulled back below `A`.
    pub clamped_iterates: usize,
    pub wall_time_s: f64,
}

impl PartialEq for SolveReport {
    fn eq(&self, o: &Self) -> bool {
        self.status == o.status
            && self.residual_history == o.residual_history
            && self.final_residual == o.final_residual
            && self.max_gradient == o.max_gradient
            && self.newton_iterations == o.newton_iterations
            && self.continuation == o.continuation
            && self.clamped_iterates == o.clamped_iterates
    }
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Clone, Copy)]
enum Target<'a> {
    Profile(&'a ConformalProfile),
    Translating(f64),
}

struct Problem<'a> {
    grid: &'a Arc<Grid>,
    target: Target<'a>,
    psi: &'a [f64],
    upper: f64,
    anchor: f64,
    log_phi_anchor: f64,
    data_max: f64,
}

struct Stage {
    u: Vec<f64>,
    converged: bool,
    blowup: bool,
    iterations: usize,
    residual: f64,
    max_gradient: f64,
}

fn interior_max(grid: &Grid, r: &[f64]) -> f64 {
    grid.interior().iter().map(|&i| r[i].abs()).fold(0.0, f64::max)
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl<'a> Problem<'a> {
    fn new(target: Target<'a>, psi: &'a ScalarField) -> Result<Problem<'a>, SolverError> {
        let grid = psi.grid();
        let data_max = psi.boundary_max();
        let data_min = psi.boundary_min();
        if !data_max.is_finite() || !data_min.is_finite() {
            return Err(SolverError::Precondition("boundary data must be finite".into()));
        }
        let (upper, anchor, log_phi_anchor) = match target {
            Target::Profile(p) => {
                let upper = p.upper();
                if !(data_max < upper) {
                    return Err(SolverError::Precondition(format!(
                        "boundary data reaches {data_max}, not below A = {upper}"
                    )));
                }
                let anchor = if 0.0 < upper { 0.0 } else { data_max };
                (upper, anchor, p.phi(anchor)?.ln())
            }
            Target::Translating(alpha) => {
                if !alpha.is_finite() {
                    return Err(SolverError::Precondition("alpha must be finite".into()));
                }
                (f64::INFINITY, 0.0, 0.0)
            }
        };
        Ok(Problem { grid, target, psi: psi.values(), upper, anchor, log_phi_anchor, data_max })
    }

    fn density(&self, s: f64) -> Density<'a> {
        match self.target {
            Target::Profile(p) => Density::LogProfile {
                profile: p,
                scale: s * self.grid.dim() as f64,
                log_ref: self.log_phi_anchor,
            },
            Target::Translating(alpha) => Density::Exponential { rate: s * alpha, reference: self.anchor },
        }
    }

    fn set_boundary(&self, s: f64, u: &mut [f64]) {
        for &i in self.grid.boundary() {
            u[i] = self.anchor + s * (self.psi[i] - self.anchor);
        }
    }

    /// Pulls values at or above `A` back inside; returns whether any moved.
    fn clamp(&self, s: f64, u: &mut [f64]) -> bool {
        if !self.upper.is_finite() {
            return false;
        }
        let top = self.anchor + s * (self.data_max - self.anchor);
        let level = self.upper - 1e-8 * (self.upper - top);
        let mut moved = false;
        for v in u.iter_mut() {
            if *v > level || v.is_nan() {
                *v = level;
                moved = true;
            }
        }
        moved
    }

    fn residual(&self, s: f64, u: &[f64]) -> Option<(Vec<f64>, NodalDensity)> {
        let d = self.density(s).evaluate(u).ok()?;
        let r = discrete::weak_residual(self.grid, u, &d);
        r.iter().all(|v| v.is_finite()).then_some((r, d))
    }

    fn harmonic_extension(&self) -> Result<Vec<f64>, SolverError> {
        let mut m = discrete::dirichlet_matrix(self.grid);
        let mut rhs = vec![0.0; self.grid.len()];
        for &i in self.grid.boundary() {
            m.set_identity_row(i);
            rhs[i] = self.psi[i];
        }
        m.solve(&rhs)
            .map_err(|e| SolverError::Precondition(format!("harmonic extension failed: {e}")))
    }

    fn newton(&self, s: f64, start: Vec<f64>, cfg: &SolverConfig, log: &mut Vec<f64>, clamps: &mut usize) -> Stage {
        let grid = self.grid;
        let mut u = start;
        self.set_boundary(s, &mut u);
        if self.clamp(s, &mut u) {
            *clamps += 1;
        }
        let fail = |u: Vec<f64>, iterations, residual| {
            let max_gradient = discrete::max_cell_gradient(grid, &u);
            Stage { u, converged: false, blowup: false, iterations, residual, max_gradient }
        };
        let Some((mut r, mut d)) = self.residual(s, &u) else {
            return fail(u, 0, f64::INFINITY);
        };
        let mut local = Vec::new();
        for k in 0..=cfg.max_newton_iters {
            let rinf = interior_max(grid, &r);
            log.push(rinf);
            local.push(rinf);
            let max_gradient = discrete::max_cell_gradient(grid, &u);
            if rinf <= cfg.residual_tol {
                return Stage { u, converged: true, blowup: false, iterations: k, residual: rinf, max_gradient };
            }
            if k == cfg.max_newton_iters {
                return fail(u, k, rinf);
            }
            if max_gradient > cfg.blowup_gradient_threshold && local.len() > cfg.stall_window {
                let before = local[local.len() - 1 - cfg.stall_window];
                if rinf > 0.5 * before {
                    return Stage { u, converged: false, blowup: true, iterations: k, residual: rinf, max_gradient };
                }
            }
            let bw = grid.bandwidth();
            let mut jac = BandMatrix::zeros(grid.len(), bw, bw);
            discrete::add_hessian(grid, &u, &d, &mut jac);
            let mut rhs = vec![0.0; grid.len()];
            for i in 0..grid.len() {
                if grid.is_boundary(i) {
                    jac.set_identity_row(i);
                } else {
                    jac.scale_row(i, 1.0 / d.g[i]);
                    jac.add(i, i, -d.dg[i] / d.g[i] * r[i]);
                    rhs[i] = -r[i];
                }
            }
            let Ok(mut delta) = jac.solve(&rhs) else {
                return fail(u, k, rinf);
            };
            // Pivoting can leak rounding into the identity rows; data stays exact.
            for &i in grid.boundary() {
                delta[i] = 0.0;
            }
            let base = norm2(&r);
            let mut step = 1.0;
            let accepted = loop {
                let mut trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
                if self.clamp(s, &mut trial) {
                    *clamps += 1;
                }
                if let Some((rt, dt)) = self.residual(s, &trial) {
                    if norm2(&rt) <= (1.0 - 1e-4 * step) * base || interior_max(grid, &rt) <= cfg.residual_tol {
                        break Some((trial, rt, dt));
                    }
                }
                step *= 0.5;
                if step < cfg.min_step {
                    break None;
                }
            };
            match accepted {
                Some((trial, rt, dt)) => {
                    u = trial;
                    r = rt;
                    d = dt;
                }
                None => return fail(u, k, rinf),
            }
        }
        unreachable!("loop returns at the iteration cap")
    }

    fn run(&self, cfg: &SolverConfig, guess: Option<&[f64]>) -> Result<(Vec<f64>, SolveReport), SolverError> {
        cfg.validate()?;
        let clock = Instant::now();
        let harmonic = self.harmonic_extension()?;
        let mut log = Vec::new();
        let mut clamps = 0;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let finish = |u: Vec<f64>, status, residual, log: Vec<f64>, trace, iterations, clamps| {
            let max_gradient = discrete::max_cell_gradient(self.grid, &u);
            let report = SolveReport {
                status,
                residual_history: log,
                final_residual: residual,
                max_gradient,
                newton_iterations: iterations,
                continuation: trace,
                clamped_iterates: clamps,
                wall_time_s: clock.elapsed().as_secs_f64(),
            };
            Ok((u, report))
        };
        if cfg.direct_first {
            let start = guess.map(|g| g.to_vec()).unwrap_or_else(|| harmonic.clone());
            let stage = self.newton(1.0, start, cfg, &mut log, &mut clamps);
            iterations += stage.iterations;
            // A steep answer reached without a warm start is only trusted once
            // continuation confirms it.
            let steep = stage.max_gradient > cfg.blowup_gradient_threshold && guess.is_none();
            if stage.converged && !steep {
                return finish(stage.u, SolveStatus::Converged, stage.residual, log, trace, iterations, clamps);
            }
        }
        let shift: Vec<f64> = harmonic.iter().map(|h| h - self.anchor).collect();
        let mut u = vec![self.anchor; self.grid.len()];
        let mut s = 0.0;
        let mut prev_gradient = 0.0;
        let ds0 = 1.0 / cfg.continuation_steps as f64;
        let mut depth = 0usize;
        loop {
            let ds = ds0 / 2f64.powi(depth as i32);
            let mut s_new = s + ds;
            if s_new > 1.0 - 1e-12 {
                s_new = 1.0;
            }
            let predictor: Vec<f64> = u.iter().zip(&shift).map(|(a, b)| a + (s_new - s) * b).collect();
            let stage = self.newton(s_new, predictor, cfg, &mut log, &mut clamps);
            iterations += stage.iterations;
            trace.push(ContinuationStep {
                s: s_new,
                converged: stage.converged,
                newton_iterations: stage.iterations,
                residual: stage.residual,
                max_gradient: stage.max_gradient,
            });
            if stage.converged {
                if s_new == 1.0 {
                    return finish(stage.u, SolveStatus::Converged, stage.residual, log, trace, iterations, clamps);
                }
                let grew = stage.max_gradient > cfg.blowup_gradient_threshold
                    && stage.max_gradient > cfg.blowup_growth_factor * prev_gradient;
                if grew {
                    let status = SolveStatus::BlowUpSuspected;
                    let res = self.stage_one_residual(&stage.u);
                    return finish(stage.u, status, res, log, trace, iterations, clamps);
                }
                s = s_new;
                u = stage.u;
                prev_gradient = stage.max_gradient;
                depth = depth.saturating_sub(1);
            } else if stage.blowup || depth == cfg.max_halvings {
                let status = if stage.blowup { SolveStatus::BlowUpSuspected } else { SolveStatus::MaxIter };
                let res = stage.residual.max(self.stage_one_residual(&stage.u));
                return finish(stage.u, status, res, log, trace, iterations, clamps);
            } else {
                depth += 1;
            }
        }
    }

    /// Residual of an intermediate field against the target problem; never
    /// below tolerance unless the field happens to solve it.
    fn stage_one_residual(&self, u: &[f64]) -> f64 {
        let mut v = u.to_vec();
        self.set_boundary(1.0, &mut v);
        let boundary_gap = self
            .grid
            .boundary()
            .iter()
            .map(|&i| (v[i] - u[i]).abs())
            .fold(0.0, f64::max);
        match self.residual(1.0, &v) {
            Some((r, _)) => interior_max(self.grid, &r).max(boundary_gap),
            None => f64::INFINITY,
        }
    }
}

fn into_field(grid: &Arc<Grid>, u: Vec<f64>) -> ScalarField {
    ScalarField::new(grid.clone(), u).expect("solver keeps one value per node")
}

/// Solves `div(Du/omega) = n phi'(u) / (phi(u) omega)` with `u = psi` on the boundary.
///
/// Only the boundary entries of `psi` are used.
pub fn solve_dirichlet(
    p: &ConformalProfile,
    psi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveReport), SolverError> {
    solve_dirichlet_from(p, psi, cfg, None)
}

/// As [`solve_dirichlet`], starting Newton from `guess`.
pub fn solve_dirichlet_from(
    p: &ConformalProfile,
    psi: &ScalarField,
    cfg: &SolverConfig,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, SolveReport), SolverError> {
    if let Some(g) = guess {
        psi.check_same_grid(g)?;
    }
    let problem = Problem::new(Target::Profile(p), psi)?;
    let (u, report) = problem.run(cfg, guess.map(|g| g.values()))?;
    Ok((into_field(psi.grid(), u), report))
}

/// Solves the translating equation `div(Du/omega) = alpha / omega`.
pub fn solve_translating(
    alpha: f64,
    psi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolveReport), SolverError> {
    solve_translating_from(alpha, psi, cfg, None)
}

pub fn solve_translating_from(
    alpha: f64,
    psi: &ScalarField,
    cfg: &SolverConfig,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, SolveReport), SolverError> {
    if let Some(g) = guess {
        psi.check_same_grid(g)?;
    }
    let problem = Problem::new(Target::Translating(alpha), psi)?;
    let (u, report) = problem.run(cfg, guess.map(|g| g.values()))?;
    Ok((into_field(psi.grid(), u), report))
}

/// The solver's weak residual for the profile equation, zero on the boundary.
pub fn profile_residual(p: &ConformalProfile, u: &ScalarField) -> Result<Vec<f64>, SolverError> {
    let density = Density::LogProfile { profile: p, scale: u.grid().dim() as f64, log_ref: 0.0 };
    let d = density.evaluate(u.values())?;
    Ok(discrete::weak_residual(u.grid(), u.values(), &d))
}
