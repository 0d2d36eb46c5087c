//! Command orchestration: one TOML file per run, CSV tables written with 17
//! significant digits, JSON summaries and a fixed exit-code contract.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::curvature::graph_mean_curvature;
use crate::expr::{self, Expr};
use crate::functional::{graph_area, perturbation_test, BumpSpec};
use crate::geometry::{self, build_grid, Domain, DomainKind, Grid, ScalarField};
use crate::oracles::{compare_to_oracle, radial_shoot, Forcing, RadialKind, ShootConfig};
use crate::profiles::{check_ca, check_cb, check_cc, extend_profile, ConditionReport, ConformalProfile, ProfileError};
use crate::solver::{
    barrier_bounds, detect_nonexistence_sweep, solve_dirichlet, solve_infinity, SolveStatus, SolverConfig,
    SolverError, ORDER_SLACK,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CONDITION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("condition check failed: {0}")]
    Condition(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Condition(_) => EXIT_CONDITION,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let msg = e.to_string();
        match e {
            SolverError::InvalidConfig(_) | SolverError::Geometry(_) | SolverError::Profile(_) => {
                CliError::Config(msg)
            }
            SolverError::Precondition(_) => CliError::Condition(msg),
            SolverError::SolveFailed(_)
            | SolverError::BarrierFailed(_)
            | SolverError::MemberFailed { .. }
            | SolverError::NotCauchy(_) => CliError::NotConverged(msg),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckProfile,
    Solve,
    Sweep,
    Infinity,
    Oracle,
    Functional,
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckProfile => "check-profile",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Infinity => "infinity",
            Command::Oracle => "oracle",
            Command::Functional => "functional",
            Command::Export => "export",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKindSpec {
    Interval,
    Rectangle,
    FlatDisk,
    SphericalCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKindSpec,
    /// Interval endpoints.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Rectangle sides.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub radius: Option<f64>,
    /// Base dimension of disks and caps; 2 when absent.
    pub dim: Option<usize>,
    /// Full `(rho, theta)` grid instead of the radial line.
    #[serde(default)]
    pub polar: bool,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Overrides the declared NCM flag.
    pub ncm: Option<bool>,
}

fn default_resolution() -> usize {
    129
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("domain kind {:?} needs `{name}`", self.kind)))
        };
        let dim = self.dim.unwrap_or(2);
        let domain = match (self.kind, self.polar) {
            (DomainKindSpec::Interval, _) => Domain::interval(need(self.lo, "lo")?, need(self.hi, "hi")?),
            (DomainKindSpec::Rectangle, _) => Domain::rectangle(need(self.a, "a")?, need(self.b, "b")?),
            (DomainKindSpec::FlatDisk, false) => Domain::flat_disk(need(self.radius, "radius")?, dim),
            (DomainKindSpec::FlatDisk, true) => Domain::flat_disk_polar(need(self.radius, "radius")?),
            (DomainKindSpec::SphericalCap, false) => Domain::spherical_cap(need(self.radius, "radius")?, dim),
            (DomainKindSpec::SphericalCap, true) => Domain::spherical_cap_polar(need(self.radius, "radius")?),
        }
        .map_err(config_err)?;
        Ok(match self.ncm {
            Some(flag) => domain.with_ncm(flag),
            None => domain,
        })
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        build_grid(&self.build()?, self.resolution).map_err(config_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKindSpec {
    #[default]
    Product,
    Translating,
    Euclidean,
    Hyperbolic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub label: ProfileKindSpec,
    /// Translating slope.
    pub alpha: Option<f64>,
    /// Translating dimension; the domain dimension when absent.
    pub n: Option<usize>,
    /// `phi(r)` for custom profiles.
    pub expr: Option<String>,
    /// Upper endpoint `A` for custom and product profiles.
    pub upper: Option<f64>,
    /// Replace `phi` above this height by its log-convex extension.
    pub extend_alpha0: Option<f64>,
}

impl ProfileSpec {
    pub fn build(&self, dim: usize) -> Result<ConformalProfile, CliError> {
        let p = match self.label {
            ProfileKindSpec::Product => ConformalProfile::product(self.upper),
            ProfileKindSpec::Translating => {
                let alpha = self.alpha.ok_or_else(|| CliError::Config("translating profile needs `alpha`".into()))?;
                ConformalProfile::translating(alpha, self.n.unwrap_or(dim)).map_err(config_err)?
            }
            ProfileKindSpec::Euclidean => ConformalProfile::euclidean(),
            ProfileKindSpec::Hyperbolic => ConformalProfile::hyperbolic(),
            ProfileKindSpec::Custom => {
                let text = self.expr.as_deref().ok_or_else(|| CliError::Config("custom profile needs `expr`".into()))?;
                ConformalProfile::custom(text, self.upper.unwrap_or(f64::INFINITY))
                    .map_err(|e| CliError::Config(format!("profile expression {text:?}: {e}")))?
            }
        };
        match self.extend_alpha0 {
            Some(a0) => extend_profile(&p, a0).map_err(config_err),
            None => Ok(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    pub constant: Option<f64>,
    /// Expression in `x`, `y`, `rho` and `theta`.
    pub expr: Option<String>,
    /// CSV with one row per grid node, in grid order.
    pub table: Option<PathBuf>,
    /// Column of `table` holding the data; `u` when absent.
    pub column: Option<String>,
}

const BOUNDARY_VARS: [&str; 4] = ["x", "y", "rho", "theta"];

impl BoundarySpec {
    /// Data on every node; only boundary values enter the solvers.
    pub fn field(&self, grid: &Arc<Grid>, base: &Path) -> Result<ScalarField, CliError> {
        let given = [self.constant.is_some(), self.expr.is_some(), self.table.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(CliError::Config("boundary: give only one of constant, expr, table".into()));
        }
        if let Some(text) = &self.expr {
            let e: Expr = expr::parse_with_vars(text, &BOUNDARY_VARS)
                .map_err(|e| CliError::Config(format!("boundary expression {text:?}: {e}")))?;
            let values = grid
                .all_coords()
                .iter()
                .map(|c| {
                    e.eval_with(&|v| match v {
                        "x" => Some(c.x),
                        "y" => Some(c.y),
                        "rho" => Some(c.rho),
                        "theta" => Some(c.theta),
                        _ => None,
                    })
                    .map_err(|e| CliError::Config(format!("boundary expression {text:?}: {e}")))
                })
                .collect::<Result<Vec<f64>, CliError>>()?;
            return ScalarField::new(grid.clone(), values).map_err(internal);
        }
        if let Some(path) = &self.table {
            let column = self.column.as_deref().unwrap_or("u");
            return load_field(&resolve(base, path), grid, column);
        }
        Ok(ScalarField::constant(grid.clone(), self.constant.unwrap_or(0.0)))
    }

    fn constant_value(&self) -> Option<f64> {
        match (self.expr.is_none() && self.table.is_none(), self.constant) {
            (true, c) => Some(c.unwrap_or(0.0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    /// Sample window; `[A - 6, A - 0.1]` for finite `A`, else `[-5, 5]`.
    pub window: Option<[f64; 2]>,
    /// Height bounding the cA constant; the window top when absent.
    pub a: Option<f64>,
    pub samples: usize,
    /// Check cC as well; defaults to whether `A` is finite.
    pub require_cc: Option<bool>,
    /// Start of the cC approach; `A - 6` when absent.
    pub cc_start: Option<f64>,
    pub cc_samples: usize,
    pub cc_threshold: f64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            window: None,
            a: None,
            samples: 401,
            require_cc: None,
            cc_start: None,
            cc_samples: 201,
            cc_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub radii: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
    pub resolution: usize,
    /// Also shoot the radial oracle at every radius.
    pub oracle: bool,
    /// Fail the run unless the oracle's last boundary slope exceeds this.
    pub min_oracle_slope: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            radii: vec![1.2, 1.3, 1.4, 1.5, 1.55],
            alpha: 2.0,
            n: 2,
            resolution: 1025,
            oracle: true,
            min_oracle_slope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfinitySpec {
    /// Explicit heights; `A - 2^-j` for `j = 1..=steps` when absent.
    pub schedule: Option<Vec<f64>>,
    pub steps: u32,
    pub tolerance: f64,
}

impl Default for InfinitySpec {
    fn default() -> Self {
        InfinitySpec { schedule: None, steps: 12, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub shoot: ShootConfig,
    /// Also solve on the configured grid and compare.
    pub compare: bool,
    pub max_linf: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { shoot: ShootConfig::default(), compare: true, max_linf: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSpec {
    pub trials: usize,
    pub bump: BumpSpec,
    pub max_violations: usize,
}

impl Default for FunctionalSpec {
    fn default() -> Self {
        FunctionalSpec { trials: 100, bump: BumpSpec::default(), max_violations: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative paths resolve against the config file's directory.
    pub dir: Option<PathBuf>,
    /// File stem; the command name when absent.
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Materialized as 0 when absent and always echoed in the output.
    pub seed: Option<u64>,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub infinity: InfinitySpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub functional: FunctionalSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn domain_spec(&self) -> Result<&DomainSpec, CliError> {
        self.domain.as_ref().ok_or_else(|| CliError::Config("missing [domain] section".into()))
    }
}

/// Finished run: exit code plus the JSON summary already written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

struct Ctx {
    command: Command,
    cfg: RunConfig,
    seed: u64,
    base: PathBuf,
    dir: PathBuf,
    stem: String,
    files: Vec<String>,
}

impl Ctx {
    fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.stem))
    }

    fn write_table(&mut self, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let path = self.path("csv");
        write_table(&path, header, rows)?;
        self.files.push(path.display().to_string());
        Ok(())
    }

    /// Writes the summary with the seed and file list attached.
    fn finish(&mut self, code: i32, mut summary: Value) -> Result<Outcome, CliError> {
        let path = self.path("json");
        self.files.push(path.display().to_string());
        let obj = summary.as_object_mut().expect("summaries are objects");
        obj.insert("command".into(), json!(self.command.name()));
        obj.insert("seed".into(), json!(self.seed));
        obj.insert("exit_code".into(), json!(code));
        obj.insert("files".into(), json!(self.files));
        let text = serde_json::to_string_pretty(&summary).map_err(internal)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(Outcome { code, summary })
    }
}

/// Loads the config at `path` and runs `command`.
pub fn run(command: Command, path: &Path) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_config(command, cfg, &base)
}

/// Runs `command` with relative paths resolved against `base`.
pub fn run_config(command: Command, cfg: RunConfig, base: &Path) -> Result<Outcome, CliError> {
    cfg.solver.validate()?;
    let dir = resolve(base, cfg.output.dir.as_deref().unwrap_or(Path::new(".")));
    fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("output dir {}: {e}", dir.display())))?;
    let stem = cfg.output.prefix.clone().unwrap_or_else(|| command.name().to_string());
    let seed = cfg.seed.unwrap_or(0);
    let mut ctx = Ctx { command, cfg, seed, base: base.to_path_buf(), dir, stem, files: Vec::new() };
    match command {
        Command::CheckProfile => cmd_check_profile(&mut ctx),
        Command::Solve => cmd_solve(&mut ctx),
        Command::Sweep => cmd_sweep(&mut ctx),
        Command::Infinity => cmd_infinity(&mut ctx),
        Command::Oracle => cmd_oracle(&mut ctx),
        Command::Functional => cmd_functional(&mut ctx),
        Command::Export => cmd_export(&mut ctx),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn profile_dim(cfg: &RunConfig) -> usize {
    cfg.domain.as_ref().and_then(|d| d.build().ok()).map(|d| d.dim).unwrap_or(2)
}

fn cmd_check_profile(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.profile.build(profile_dim(cfg))?;
    let a_top = p.upper();
    let [lo, hi] = cfg.check.window.unwrap_or(if a_top.is_finite() {
        [a_top - 6.0, a_top - 0.1]
    } else {
        [-5.0, 5.0]
    });
    let a = cfg.check.a.unwrap_or(hi);
    let ca = check_ca(&p, (lo, hi), a, cfg.check.samples).map_err(config_err)?;
    let cb = check_cb(&p, (lo, hi), cfg.check.samples).map_err(config_err)?;
    let mut reports = vec![ca, cb];
    if cfg.check.require_cc.unwrap_or(a_top.is_finite()) {
        let start = cfg.check.cc_start.unwrap_or(a_top - 6.0);
        let cc = match check_cc(&p, start, cfg.check.cc_samples, cfg.check.cc_threshold) {
            Ok(r) => r,
            Err(ProfileError::NotApplicable(note)) => ConditionReport {
                condition: "cC".into(),
                holds: false,
                witness: None,
                constant: None,
                samples: 0,
                note,
            },
            Err(e) => return Err(config_err(e)),
        };
        reports.push(cc);
    }
    let all_hold = reports.iter().all(|r| r.holds);
    let code = if all_hold { EXIT_OK } else { EXIT_CONDITION };
    let summary = json!({
        "profile": p.describe(),
        "upper": finite_or_null(a_top),
        "window": [lo, hi],
        "all_hold": all_hold,
        "reports": reports,
    });
    ctx.finish(code, summary)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Solved field with the columns of the solve table.
struct Solved {
    u: ScalarField,
    report: crate::solver::SolveReport,
}

fn solve_configured(ctx: &Ctx) -> Result<(ConformalProfile, ScalarField, Solved), CliError> {
    let grid = ctx.cfg.domain_spec()?.grid()?;
    let p = ctx.cfg.profile.build(grid.dim())?;
    let psi = ctx.cfg.boundary.field(&grid, &ctx.base)?;
    let (u, report) = solve_dirichlet(&p, &psi, &ctx.cfg.solver)?;
    Ok((p, psi, Solved { u, report }))
}

fn cmd_solve(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let (p, psi, Solved { u, report }) = solve_configured(ctx)?;
    let mut summary = json!({
        "profile": p.describe(),
        "status": report.status,
        "converged": report.converged(),
        "blow_up_suspected": report.status == SolveStatus::BlowUpSuspected,
        "final_residual": report.final_residual,
        "max_gradient": report.max_gradient,
        "newton_iterations": report.newton_iterations,
        "report": report,
    });
    if !report.converged() {
        return ctx.finish(EXIT_NOT_CONVERGED, summary);
    }
    let grid = u.grid().clone();
    let grad = geometry::gradient(&u).norms();
    let h = graph_mean_curvature(&p, &u).map_err(internal)?;
    let area = graph_area(&p, &u).map_err(internal)?;
    let (low, high, barrier) = match barrier_bounds(&p, &psi, &ctx.cfg.solver) {
        Ok(b) => {
            let inside = u
                .values()
                .iter()
                .zip(b.lower.values())
                .all(|(v, w)| *w <= v + ORDER_SLACK && *v <= b.upper + ORDER_SLACK);
            let low = b.lower.values().to_vec();
            let high = vec![b.upper; grid.len()];
            (low, high, json!({ "beta": b.beta, "bracketed": inside }))
        }
        Err(e) => (vec![f64::NAN; grid.len()], vec![f64::NAN; grid.len()], json!({ "error": e.to_string() })),
    };
    let rows: Vec<Vec<f64>> = grid
        .all_coords()
        .iter()
        .enumerate()
        .map(|(i, c)| vec![c.x, c.y, c.rho, c.theta, u.values()[i], grad[i], h.values.values()[i], low[i], high[i]])
        .collect();
    ctx.write_table(&SOLVE_COLUMNS, &rows)?;
    let obj = summary.as_object_mut().expect("object");
    obj.insert("graph_area".into(), json!(area));
    obj.insert("barrier".into(), barrier);
    obj.insert("interior_max_abs_curvature".into(), json!(h.interior_max_abs()));
    ctx.finish(EXIT_OK, summary)
}

/// Columns of the solve table.
pub const SOLVE_COLUMNS: [&str; 9] =
    ["x", "y", "rho", "theta", "u", "grad_norm", "mean_curvature", "barrier_low", "barrier_high"];

fn cmd_sweep(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let s = ctx.cfg.sweep.clone();
    let rows = detect_nonexistence_sweep(&s.radii, s.alpha, s.n, s.resolution, &ctx.cfg.solver)?;
    let slopes: Vec<f64> = if s.oracle {
        s.radii
            .iter()
            .map(|&r| {
                let o = radial_shoot(
                    RadialKind::SphericalCap,
                    &Forcing::Translating(s.alpha),
                    s.n,
                    r,
                    0.0,
                    &ctx.cfg.oracle.shoot,
                )
                .map_err(config_err)?;
                Ok(if o.matched() { o.boundary_derivative() } else { f64::INFINITY })
            })
            .collect::<Result<_, CliError>>()?
    } else {
        vec![f64::NAN; rows.len()]
    };
    let table: Vec<Vec<f64>> = rows
        .iter()
        .zip(&slopes)
        .map(|(r, &slope)| {
            vec![
                r.radius,
                (r.status == SolveStatus::Converged) as u8 as f64,
                r.max_gradient,
                r.final_residual,
                r.newton_iterations as f64,
                r.center_value,
                slope,
            ]
        })
        .collect();
    ctx.write_table(
        &["radius", "converged", "max_gradient", "final_residual", "newton_iterations", "center_value", "oracle_slope"],
        &table,
    )?;
    let increasing = rows.windows(2).all(|w| w[1].max_gradient > w[0].max_gradient);
    let last_slope = slopes.last().copied().unwrap_or(f64::NAN);
    let slope_ok = s.min_oracle_slope.map(|m| last_slope > m);
    let pass = increasing && slope_ok.unwrap_or(true);
    let summary = json!({
        "alpha": s.alpha,
        "n": s.n,
        "rows": rows,
        "oracle_slopes": slopes.iter().map(|&v| finite_or_null(v)).collect::<Vec<_>>(),
        "max_gradient_strictly_increasing": increasing,
        "oracle_last_slope": finite_or_null(last_slope),
        "min_oracle_slope": s.min_oracle_slope,
        "oracle_slope_pass": slope_ok,
        "pass": pass,
    });
    ctx.finish(if pass { EXIT_OK } else { EXIT_CONDITION }, summary)
}

fn cmd_infinity(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let grid = ctx.cfg.domain_spec()?.grid()?;
    let p = ctx.cfg.profile.build(grid.dim())?;
    let spec = &ctx.cfg.infinity;
    let schedule = match &spec.schedule {
        Some(s) => s.clone(),
        None => (1..=spec.steps as i32).map(|j| p.upper() - 2f64.powi(-j)).collect(),
    };
    match solve_infinity(&p, &grid, &ctx.cfg.solver, &schedule, spec.tolerance) {
        Ok((u, report)) => {
            let rows: Vec<Vec<f64>> = grid
                .all_coords()
                .iter()
                .zip(u.values())
                .map(|(c, &v)| vec![c.x, c.y, c.rho, c.theta, v])
                .collect();
            ctx.write_table(&["x", "y", "rho", "theta", "u"], &rows)?;
            let summary = json!({ "cauchy_achieved": true, "final_gap": report.final_gap, "report": report });
            ctx.finish(EXIT_OK, summary)
        }
        Err(SolverError::NotCauchy(report)) => {
            let summary = json!({ "cauchy_achieved": false, "final_gap": report.final_gap, "report": report });
            ctx.finish(EXIT_NOT_CONVERGED, summary)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_oracle(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let dspec = ctx.cfg.domain_spec()?;
    let domain = dspec.build()?;
    let (kind, radius) = match domain.kind {
        DomainKind::FlatDisk { radius, .. } => (RadialKind::FlatDisk, radius),
        DomainKind::SphericalCap { radius, .. } => (RadialKind::SphericalCap, radius),
        other => return Err(CliError::Config(format!("oracle needs a disk or cap, got {other:?}"))),
    };
    let value = ctx
        .cfg
        .boundary
        .constant_value()
        .ok_or_else(|| CliError::Config("oracle needs constant boundary data".into()))?;
    let p = ctx.cfg.profile.build(domain.dim)?;
    let forcing = match (&ctx.cfg.profile.label, ctx.cfg.profile.extend_alpha0) {
        (ProfileKindSpec::Translating, None) => Forcing::Translating(ctx.cfg.profile.alpha.unwrap_or(0.0)),
        _ => Forcing::Profile(p.clone()),
    };
    let o = radial_shoot(kind, &forcing, domain.dim, radius, value, &ctx.cfg.oracle.shoot).map_err(config_err)?;
    let rows: Vec<Vec<f64>> = (0..o.rho.len()).map(|i| vec![o.rho[i], o.u[i], o.du[i]]).collect();
    ctx.write_table(&["rho", "u", "du"], &rows)?;
    let mut summary = json!({
        "status": o.status,
        "center_value": finite_or_null(o.center_value),
        "boundary_derivative": finite_or_null(o.boundary_derivative()),
        "mismatch": finite_or_null(o.mismatch),
        "stats": o.stats,
        "note": o.note,
    });
    if !o.matched() {
        return ctx.finish(EXIT_NOT_CONVERGED, summary);
    }
    if !ctx.cfg.oracle.compare {
        return ctx.finish(EXIT_OK, summary);
    }
    let (_, _, solved) = solve_configured(ctx)?;
    let obj = summary.as_object_mut().expect("object");
    obj.insert("solve_status".into(), json!(solved.report.status));
    if !solved.report.converged() {
        return ctx.finish(EXIT_NOT_CONVERGED, summary);
    }
    let cmp = compare_to_oracle(&solved.u, &o).map_err(internal)?;
    let pass = cmp.linf <= ctx.cfg.oracle.max_linf;
    let obj = summary.as_object_mut().expect("object");
    obj.insert("comparison".into(), json!(cmp));
    obj.insert("max_linf".into(), json!(ctx.cfg.oracle.max_linf));
    obj.insert("pass".into(), json!(pass));
    ctx.finish(if pass { EXIT_OK } else { EXIT_CONDITION }, summary)
}

fn cmd_functional(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let (p, _, Solved { u, report }) = solve_configured(ctx)?;
    if !report.converged() {
        let summary = json!({ "status": report.status, "report": report });
        return ctx.finish(EXIT_NOT_CONVERGED, summary);
    }
    let spec = ctx.cfg.functional.clone();
    let r = perturbation_test(&p, &u, spec.trials, &spec.bump, ctx.seed).map_err(config_err)?;
    let rows: Vec<Vec<f64>> = r
        .bumps
        .iter()
        .map(|b| vec![b.seed as f64, b.center[0], b.center[1], b.half_width, b.amplitude, b.excess])
        .collect();
    ctx.write_table(&["seed", "center_x", "center_y", "half_width", "amplitude", "excess"], &rows)?;
    let pass = r.violations <= spec.max_violations;
    let summary = json!({
        "trials": r.trials,
        "violations": r.violations,
        "min_excess": r.min_excess,
        "max_violations": spec.max_violations,
        "pass": pass,
        "graph_area": graph_area(&p, &u).map_err(internal)?,
        "solve_status": report.status,
    });
    ctx.finish(if pass { EXIT_OK } else { EXIT_CONDITION }, summary)
}

/// Writes the grid with its boundary data and the fully resolved config.
fn cmd_export(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let grid = ctx.cfg.domain_spec()?.grid()?;
    let psi = ctx.cfg.boundary.field(&grid, &ctx.base)?;
    let volumes = grid.volumes();
    let rows: Vec<Vec<f64>> = grid
        .all_coords()
        .iter()
        .enumerate()
        .map(|(i, c)| vec![c.x, c.y, c.rho, c.theta, grid.is_boundary(i) as u8 as f64, volumes[i], psi.values()[i]])
        .collect();
    ctx.write_table(&["x", "y", "rho", "theta", "boundary", "volume", "u"], &rows)?;
    let mut resolved = ctx.cfg.clone();
    resolved.seed = Some(ctx.seed);
    let toml_text = toml::to_string_pretty(&resolved).map_err(internal)?;
    let path = ctx.path("toml");
    write_atomic(&path, toml_text.as_bytes())?;
    ctx.files.push(path.display().to_string());
    let summary = json!({ "nodes": grid.len(), "boundary_nodes": grid.boundary().len() });
    ctx.finish(EXIT_OK, summary)
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| internal(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        internal(format!("writing {}: {e}", path.display()))
    })
}

/// Formats `v` with 17 significant digits, enough to round-trip every `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a string");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_table(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

fn parse_table(text: &str) -> Result<Table, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or("empty table")?;
    let header: Vec<String> = head.split(',').map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (no, line) in lines {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("line {}: {s:?}: {e}", no + 1)))
            .collect::<Result<Vec<f64>, String>>()?;
        if row.len() != header.len() {
            return Err(format!("line {}: {} fields, header has {}", no + 1, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reads `column` of a table written for `grid`, checking the node coordinates.
pub fn load_field(path: &Path, grid: &Arc<Grid>, column: &str) -> Result<ScalarField, CliError> {
    let table = read_table(path)?;
    if table.rows.len() != grid.len() {
        return Err(CliError::Config(format!(
            "{}: {} rows for a grid of {} nodes",
            path.display(),
            table.rows.len(),
            grid.len()
        )));
    }
    let values = table
        .column(column)
        .ok_or_else(|| CliError::Config(format!("{}: no column {column:?}", path.display())))?;
    for (name, get) in [("x", (|c: &geometry::NodeCoords| c.x) as fn(&_) -> f64), ("y", |c| c.y)] {
        if let Some(col) = table.column(name) {
            if let Some(i) = col.iter().zip(grid.all_coords()).position(|(v, c)| *v != get(c)) {
                return Err(CliError::Config(format!(
                    "{}: row {i} has {name} = {} but the grid node has {}",
                    path.display(),
                    col[i],
                    get(&grid.all_coords()[i])
                )));
            }
        }
    }
    ScalarField::new(grid.clone(), values).map_err(internal)
}
