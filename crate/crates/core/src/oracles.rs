//! Reference solutions independent of the finite-difference solver: the closed
//! form grim reaper and adaptive shooting for rotationally symmetric graphs.
//!
//! The radial equation `(u'/omega)' + (n-1) lambda(rho) u'/omega = f(u)/omega`
//! is integrated in angle form. With `u' = tan(theta)` it reads
//! `theta' = f(u) - (n-1) lambda(rho) tan(theta)`, which stays regular until the
//! profile turns vertical.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DomainKind, Layout, ScalarField};
use crate::profiles::ConformalProfile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grim reaper needs alpha > 0 and |alpha x| < pi/2, got alpha = {alpha}, x = {x}")]
    OutsideWindow { alpha: f64, x: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field does not match the oracle: {0}")]
    DomainMismatch(String),
    #[error("oracle has no solution: {0}")]
    NoSolution(String),
}

/// `-(1/alpha) ln cos(alpha x)`.
pub fn grim_reaper(alpha: f64, x: f64) -> Result<f64, OracleError> {
    check_window(alpha, x)?;
    Ok(-(alpha * x).cos().ln() / alpha)
}

/// `tan(alpha x)`, the slope of [`grim_reaper`].
pub fn grim_reaper_slope(alpha: f64, x: f64) -> Result<f64, OracleError> {
    check_window(alpha, x)?;
    Ok((alpha * x).tan())
}

fn check_window(alpha: f64, x: f64) -> Result<(), OracleError> {
    if alpha > 0.0 && (alpha * x).abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(OracleError::OutsideWindow { alpha, x })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    FlatDisk,
    SphericalCap,
}

impl RadialKind {
    /// Mean curvature of the distance spheres, `1/rho` or `cot rho`.
    fn lambda(self, rho: f64) -> f64 {
        match self {
            RadialKind::FlatDisk => 1.0 / rho,
            RadialKind::SphericalCap => rho.cos() / rho.sin(),
        }
    }
}

/// Right-hand side `f(u)` of the radial equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    /// `n phi'(u)/phi(u)`.
    Profile(ConformalProfile),
    /// Constant `alpha`, the translating equation.
    Translating(f64),
}

impl Forcing {
    fn upper(&self) -> f64 {
        match self {
            Forcing::Profile(p) => p.upper(),
            Forcing::Translating(_) => f64::INFINITY,
        }
    }

    fn at(&self, u: f64, n: f64) -> Option<f64> {
        match self {
            Forcing::Translating(alpha) => Some(*alpha),
            Forcing::Profile(p) => p.sample(u).ok().map(|s| n * s.log_d1()).filter(|v| v.is_finite()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    /// Relative and absolute tolerance of each integration step.
    pub tol: f64,
    /// Radius where the pole expansion hands over to the integrator.
    pub pole_radius: f64,
    /// Initial bracket is `[boundary - bracket_width, boundary]`.
    pub bracket_width: f64,
    /// The bracket width doubles at most this many times.
    pub max_expansions: u32,
    pub max_bisections: usize,
    pub max_steps: usize,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            tol: 1e-10,
            pole_radius: 1e-4,
            bracket_width: 10.0,
            max_expansions: 10,
            max_bisections: 200,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootStatus {
    Matched,
    /// No center value reaches the boundary value: evidence of non-existence.
    BracketNotFound,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest raw local error estimate over accepted steps.
    pub max_local_error: f64,
    /// Number of trajectories integrated during shooting.
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfileSolution {
    pub kind: RadialKind,
    pub n: usize,
    pub rho0: f64,
    pub boundary_value: f64,
    pub status: ShootStatus,
    pub center_value: f64,
    /// `u(rho0) - boundary_value` of the final shot.
    pub mismatch: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub stats: StepStats,
    pub note: String,
}

impl RadialProfileSolution {
    pub fn matched(&self) -> bool {
        self.status == ShootStatus::Matched
    }

    /// `u'(rho0)`.
    pub fn boundary_derivative(&self) -> f64 {
        self.du.last().copied().unwrap_or(f64::NAN)
    }

    /// Cubic Hermite interpolation of `(u, u')` between accepted steps.
    pub fn eval(&self, rho: f64) -> Option<(f64, f64)> {
        let (first, last) = (*self.rho.first()?, *self.rho.last()?);
        let slack = 1e-12 * last.max(1.0);
        if !(rho >= first - slack && rho <= last + slack) {
            return None;
        }
        let rho = rho.clamp(first, last);
        let k = self.rho.partition_point(|&r| r <= rho).clamp(1, self.rho.len() - 1);
        let (r0, r1) = (self.rho[k - 1], self.rho[k]);
        let h = r1 - r0;
        let s = (rho - r0) / h;
        let (u0, u1, d0, d1) = (self.u[k - 1], self.u[k], self.du[k - 1] * h, self.du[k] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * u0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * u1
            + (s3 - s2) * d1;
        let slope = ((6.0 * s2 - 6.0 * s) * u0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) * u1
            + (3.0 * s2 - 2.0 * s) * d1)
            / h;
        Some((value, slope))
    }
}

/// Reason an integration stopped before `rho0`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Escape {
    /// The profile turned vertical.
    Vertical,
    /// The graph left the cone `u < A` or the forcing stopped being finite.
    LeftCone,
    TooManySteps,
}

struct Trajectory {
    rho: Vec<f64>,
    u: Vec<f64>,
    theta: Vec<f64>,
    escape: Option<Escape>,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step; `None` if a stage escapes the valid region.
fn dopri_step<F>(f: &F, x: f64, y: [f64; 2], h: f64) -> Option<([f64; 2], [f64; 2])>
where
    F: Fn(f64, [f64; 2]) -> Option<[f64; 2]>,
{
    let mut k = [[0.0; 2]; 7];
    for s in 0..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            ys[0] += h * A[s][j] * kj[0];
            ys[1] += h * A[s][j] * kj[1];
        }
        k[s] = f(x + C[s] * h, ys)?;
    }
    let mut hi = y;
    let mut err = [0.0; 2];
    for (s, ks) in k.iter().enumerate() {
        for d in 0..2 {
            hi[d] += h * B5[s] * ks[d];
            err[d] += h * (B5[s] - B4[s]) * ks[d];
        }
    }
    Some((hi, err))
}

/// Adaptive integration of `y' = f(x, y)` on `[x0, x1]`, recording every
/// accepted step.
fn integrate<F>(
    f: &F,
    x0: f64,
    y0: [f64; 2],
    x1: f64,
    cfg: &ShootConfig,
    valid: impl Fn(&[f64; 2]) -> Option<Escape>,
    stats: &mut StepStats,
) -> Trajectory
where
    F: Fn(f64, [f64; 2]) -> Option<[f64; 2]>,
{
    let span = x1 - x0;
    let mut traj = Trajectory { rho: vec![x0], u: vec![y0[0]], theta: vec![y0[1]], escape: None };
    let (mut x, mut y) = (x0, y0);
    let mut h = (span * 1e-3).min(1e-3);
    let h_min = 1e-14 * x1.abs().max(1.0);
    let mut steps = 0;
    while x < x1 {
        if steps >= cfg.max_steps {
            traj.escape = Some(Escape::TooManySteps);
            break;
        }
        steps += 1;
        let last = x + h >= x1;
        let step = if last { x1 - x } else { h };
        stats.evaluations += 6;
        let trial = dopri_step(f, x, y, step);
        let accepted = trial.and_then(|(y_new, err)| {
            let mut norm = 0.0;
            for d in 0..2 {
                let scale = cfg.tol + cfg.tol * y[d].abs().max(y_new[d].abs());
                norm += (err[d] / scale).powi(2);
            }
            let norm = (norm / 2.0).sqrt();
            Some((y_new, err, norm))
        });
        match accepted {
            Some((y_new, err, norm)) if norm <= 1.0 => {
                stats.accepted += 1;
                stats.max_local_error = stats.max_local_error.max(err[0].abs().max(err[1].abs()));
                x = if last { x1 } else { x + step };
                y = y_new;
                traj.rho.push(x);
                traj.u.push(y[0]);
                traj.theta.push(y[1]);
                if let Some(e) = valid(&y) {
                    traj.escape = Some(e);
                    break;
                }
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
            }
            Some((_, _, norm)) => {
                stats.rejected += 1;
                h = step * (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
            }
            None => {
                stats.rejected += 1;
                h = step * 0.25;
            }
        }
        if h < h_min {
            traj.escape = Some(Escape::Vertical);
            break;
        }
    }
    traj
}

struct Shooter<'a> {
    kind: RadialKind,
    forcing: &'a Forcing,
    n: f64,
    rho0: f64,
    cfg: &'a ShootConfig,
}

/// Result of one shot: the boundary value, or which way the escape points.
enum Shot {
    Reached(Trajectory),
    /// Escaped upward: treated as an infinitely high boundary value.
    High,
    /// Escaped downward (the profile turned vertical going down).
    Low,
}

impl Shooter<'_> {
    fn shoot(&self, center: f64, stats: &mut StepStats) -> Shot {
        stats.shots += 1;
        let upper = self.forcing.upper();
        let Some(f0) = self.forcing.at(center, self.n) else {
            return Shot::High;
        };
        let r = self.cfg.pole_radius.min(0.5 * self.rho0);
        let c2 = f0 / (2.0 * self.n);
        let y0 = [center + c2 * r * r, (2.0 * c2 * r).atan()];
        let (kind, forcing, n) = (self.kind, self.forcing, self.n);
        let rhs = move |rho: f64, y: [f64; 2]| {
            if !(y[0] < upper) || y[1].abs() >= FRAC_PI_2 {
                return None;
            }
            let f = forcing.at(y[0], n)?;
            Some([y[1].tan(), f - (n - 1.0) * kind.lambda(rho) * y[1].tan()])
        };
        let valid = |y: &[f64; 2]| {
            if !(y[0] < upper) || !y[0].is_finite() {
                Some(Escape::LeftCone)
            } else if y[1].abs() >= FRAC_PI_2 - 1e-12 {
                Some(Escape::Vertical)
            } else {
                None
            }
        };
        let mut traj = integrate(&rhs, r, y0, self.rho0, self.cfg, valid, stats);
        traj.rho.insert(0, 0.0);
        traj.u.insert(0, center);
        traj.theta.insert(0, 0.0);
        match traj.escape {
            None => Shot::Reached(traj),
            Some(_) if traj.theta.last().copied().unwrap_or(0.0) < 0.0 => Shot::Low,
            Some(_) => Shot::High,
        }
    }
}

/// Boundary value of a shot, with escapes mapped to `+-inf`.
fn shot_value(shot: &Shot) -> f64 {
    match shot {
        Shot::Reached(t) => *t.u.last().expect("trajectory has points"),
        Shot::High => f64::INFINITY,
        Shot::Low => f64::NEG_INFINITY,
    }
}

/// Shoots on the center value `u(0)` until `u(rho0)` matches `boundary_value`.
///
/// A missing bracket is reported through [`ShootStatus::BracketNotFound`]
/// rather than an error, since it is the expected outcome when no solution
/// exists.
pub fn radial_shoot(
    kind: RadialKind,
    forcing: &Forcing,
    n: usize,
    rho0: f64,
    boundary_value: f64,
    cfg: &ShootConfig,
) -> Result<RadialProfileSolution, OracleError> {
    let limit = match kind {
        RadialKind::FlatDisk => f64::INFINITY,
        RadialKind::SphericalCap => PI,
    };
    if n == 0 || !(rho0 > 0.0 && rho0 < limit) {
        return Err(OracleError::InvalidArgument(format!(
            "need n >= 1 and 0 < rho0 < {limit}, got n = {n}, rho0 = {rho0}"
        )));
    }
    if !(cfg.tol > 0.0 && cfg.pole_radius > 0.0 && cfg.bracket_width > 0.0) {
        return Err(OracleError::InvalidArgument(format!("bad shooting config {cfg:?}")));
    }
    if !(boundary_value < forcing.upper()) {
        return Err(OracleError::InvalidArgument(format!(
            "boundary value {boundary_value} is not below A = {}",
            forcing.upper()
        )));
    }
    let shooter = Shooter { kind, forcing, n: n as f64, rho0, cfg };
    let mut stats = StepStats::default();
    let fail = |stats: StepStats, note: String| RadialProfileSolution {
        kind,
        n,
        rho0,
        boundary_value,
        status: ShootStatus::BracketNotFound,
        center_value: f64::NAN,
        mismatch: f64::NAN,
        rho: Vec::new(),
        u: Vec::new(),
        du: Vec::new(),
        stats,
        note,
    };

    // The solution lies below the boundary value, so the top of the bracket is fixed.
    let mut hi = boundary_value;
    let mut hi_shot = shooter.shoot(hi, &mut stats);
    if shot_value(&hi_shot) < boundary_value {
        return Ok(fail(stats, format!("shot from u(0) = {hi} stays below the boundary value")));
    }
    let mut lo = f64::NAN;
    let mut lo_shot = None;
    for k in 0..=cfg.max_expansions {
        let candidate = boundary_value - cfg.bracket_width * 2f64.powi(k as i32);
        let shot = shooter.shoot(candidate, &mut stats);
        if shot_value(&shot) <= boundary_value {
            lo = candidate;
            lo_shot = Some(shot);
            break;
        }
        hi = candidate;
        hi_shot = shot;
    }
    let Some(mut lo_shot) = lo_shot else {
        return Ok(fail(
            stats,
            format!("every center value down to {hi} overshoots the boundary value"),
        ));
    };

    for _ in 0..cfg.max_bisections {
        let (flo, fhi) = (shot_value(&lo_shot) - boundary_value, shot_value(&hi_shot) - boundary_value);
        if flo == 0.0 || fhi.abs() <= cfg.tol * 1e-2 || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let shot = shooter.shoot(mid, &mut stats);
        if shot_value(&shot) <= boundary_value {
            lo = mid;
            lo_shot = shot;
        } else {
            hi = mid;
            hi_shot = shot;
        }
    }
    let (center, best) = match (&lo_shot, &hi_shot) {
        (Shot::Reached(a), Shot::Reached(b)) => {
            let ea = (a.u.last().unwrap() - boundary_value).abs();
            let eb = (b.u.last().unwrap() - boundary_value).abs();
            if ea <= eb { (lo, lo_shot) } else { (hi, hi_shot) }
        }
        (Shot::Reached(_), _) => (lo, lo_shot),
        (_, Shot::Reached(_)) => (hi, hi_shot),
        _ => {
            return Ok(fail(stats, "bisection collapsed onto an escaping trajectory".into()));
        }
    };
    let Shot::Reached(traj) = best else { unreachable!("chosen shot reached the boundary") };
    let mismatch = traj.u.last().unwrap() - boundary_value;
    let du = traj.theta.iter().map(|t| t.tan()).collect();
    Ok(RadialProfileSolution {
        kind,
        n,
        rho0,
        boundary_value,
        status: ShootStatus::Matched,
        center_value: center,
        mismatch,
        rho: traj.rho,
        u: traj.u,
        du,
        stats,
        note: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    pub linf: f64,
    /// Volume-weighted root mean square error.
    pub l2: f64,
    /// Node of the largest error.
    pub worst_node: usize,
    pub nodes: usize,
}

/// Errors of a radial field against an oracle interpolated to the grid nodes.
pub fn compare_to_oracle(
    u: &ScalarField,
    oracle: &RadialProfileSolution,
) -> Result<OracleComparison, OracleError> {
    if !oracle.matched() {
        return Err(OracleError::NoSolution(oracle.note.clone()));
    }
    let grid = u.grid();
    let domain = grid.domain();
    let (kind, radius) = match domain.kind {
        DomainKind::FlatDisk { radius, .. } => (RadialKind::FlatDisk, radius),
        DomainKind::SphericalCap { radius, .. } => (RadialKind::SphericalCap, radius),
        other => return Err(OracleError::DomainMismatch(format!("{other:?} is not radial"))),
    };
    if !matches!(grid.layout(), Layout::Line { radial: true, .. }) {
        return Err(OracleError::DomainMismatch("grid is not a radial line".into()));
    }
    if kind != oracle.kind || grid.dim() != oracle.n || (radius - oracle.rho0).abs() > 1e-12 * radius {
        return Err(OracleError::DomainMismatch(format!(
            "grid is {kind:?} of radius {radius} in dimension {}, oracle is {:?} of radius {} in dimension {}",
            grid.dim(),
            oracle.kind,
            oracle.rho0,
            oracle.n
        )));
    }
    let volumes = grid.volumes();
    let (mut linf, mut worst_node, mut sum, mut weight) = (0.0f64, 0, 0.0, 0.0);
    for (i, c) in grid.all_coords().iter().enumerate() {
        let (reference, _) = oracle
            .eval(c.rho)
            .ok_or_else(|| OracleError::DomainMismatch(format!("node radius {} outside the oracle", c.rho)))?;
        let e = (u.values()[i] - reference).abs();
        if e > linf {
            linf = e;
            worst_node = i;
        }
        sum += volumes[i] * e * e;
        weight += volumes[i];
    }
    Ok(OracleComparison { linf, l2: (sum / weight).sqrt(), worst_node, nodes: grid.len() })
}

/// Samples the oracle on its own radial grid, for comparisons of oracle runs.
pub fn oracle_field(
    oracle: &RadialProfileSolution,
    grid: &std::sync::Arc<crate::geometry::Grid>,
) -> Result<ScalarField, OracleError> {
    let values = grid
        .all_coords()
        .iter()
        .map(|c| {
            oracle
                .eval(c.rho)
                .map(|v| v.0)
                .ok_or_else(|| OracleError::DomainMismatch(format!("node radius {} outside the oracle", c.rho)))
        })
        .collect::<Result<Vec<f64>, OracleError>>()?;
    ScalarField::new(grid.clone(), values).map_err(|e| OracleError::DomainMismatch(e.to_string()))
}
