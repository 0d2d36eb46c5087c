//! Conformal factors `phi(r)` on `(-inf, A)` and sampled checks of the
//! monotonicity (cA), log-convexity (cB) and blow-up (cC) conditions.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{self, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("r = {r} is outside the profile interval (-inf, {upper})")]
    OutOfInterval { r: f64, upper: f64 },
    #[error("phi({r}) = {value} is not positive")]
    NonPositive { r: f64, value: f64 },
    #[error("{0}")]
    NotApplicable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("extension precondition failed: {0}")]
    Precondition(String),
    #[error("blend is not log-convex at r = {r}: (log phi)'' = {value}")]
    BlendFailure { r: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileLabel {
    Product,
    Translating { alpha: f64, n: usize },
    Euclidean,
    Hyperbolic,
    Custom,
    Extended { alpha0: f64, beta: f64 },
}

/// `phi`, `phi'` and `phi''` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
}

impl ProfileSample {
    /// `(log phi)'`.
    pub fn log_d1(&self) -> f64 {
        self.dphi / self.phi
    }

    /// `(log phi)''`.
    pub fn log_d2(&self) -> f64 {
        let l = self.dphi / self.phi;
        self.ddphi / self.phi - l * l
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Symbolic { phi: Expr, dphi: Expr, ddphi: Expr },
    Extended(Box<Extension>),
}

/// Log-space data of the extended profile: the base below `alpha0`, a
/// quadratic in `log phi` up to `mid`, then `exp(log_c + beta r)`.
#[derive(Debug, Clone, PartialEq)]
struct Extension {
    base: ConformalProfile,
    alpha0: f64,
    mid: f64,
    y0: f64,
    d0: f64,
    beta: f64,
    log_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalProfile {
    form: Form,
    upper: f64,
    label: ProfileLabel,
}

impl ConformalProfile {
    /// Profile from an expression in `r` with upper endpoint `upper` (may be `+inf`).
    pub fn from_expr(phi: Expr, upper: f64, label: ProfileLabel) -> Result<Self, ProfileError> {
        phi.check_bindings(&["r"])?;
        if upper.is_nan() || upper == f64::NEG_INFINITY {
            return Err(ProfileError::InvalidParameter(format!("upper endpoint {upper}")));
        }
        let dphi = phi.differentiate("r");
        let ddphi = dphi.differentiate("r");
        Ok(ConformalProfile { form: Form::Symbolic { phi, dphi, ddphi }, upper, label })
    }

    pub fn custom(text: &str, upper: f64) -> Result<Self, ProfileError> {
        Self::from_expr(expr::parse_with_vars(text, &["r"])?, upper, ProfileLabel::Custom)
    }

    /// `phi = 1`; `upper` is `+inf` unless a finite cone height is wanted.
    pub fn product(upper: Option<f64>) -> Self {
        Self::from_expr(Expr::Const(1.0), upper.unwrap_or(f64::INFINITY), ProfileLabel::Product)
            .expect("constant profile")
    }

    /// `phi = exp(alpha r / n)`.
    pub fn translating(alpha: f64, n: usize) -> Result<Self, ProfileError> {
        if n == 0 || !alpha.is_finite() {
            return Err(ProfileError::InvalidParameter(format!("alpha = {alpha}, n = {n}")));
        }
        let rate = alpha / n as f64;
        let phi = Expr::Call(
            expr::Func::Exp,
            Box::new(Expr::Binary(
                expr::BinOp::Mul,
                Box::new(Expr::Const(rate)),
                Box::new(Expr::var("r")),
            )),
        );
        Self::from_expr(phi, f64::INFINITY, ProfileLabel::Translating { alpha, n })
    }

    /// `phi = e^r`, the cone over a Euclidean ball.
    pub fn euclidean() -> Self {
        let phi = expr::parse("exp(r)").expect("literal");
        Self::from_expr(phi, f64::INFINITY, ProfileLabel::Euclidean).expect("literal")
    }

    /// `phi = 2 e^r / (1 - e^{2r})` on `(-inf, 0)`.
    pub fn hyperbolic() -> Self {
        let phi = expr::parse("2*exp(r)/(1-exp(2*r))").expect("literal");
        Self::from_expr(phi, 0.0, ProfileLabel::Hyperbolic).expect("literal")
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn label(&self) -> &ProfileLabel {
        &self.label
    }

    /// Expression for `phi`, absent for extended profiles.
    pub fn phi_expr(&self) -> Option<&Expr> {
        match &self.form {
            Form::Symbolic { phi, .. } => Some(phi),
            Form::Extended(_) => None,
        }
    }

    pub fn describe(&self) -> String {
        match &self.form {
            Form::Symbolic { phi, .. } => phi.to_string(),
            Form::Extended(e) => format!(
                "extension of [{}] at alpha0 = {}, beta = {}",
                e.base.describe(),
                e.alpha0,
                e.beta
            ),
        }
    }

    pub fn sample(&self, r: f64) -> Result<ProfileSample, ProfileError> {
        if !(r < self.upper) {
            return Err(ProfileError::OutOfInterval { r, upper: self.upper });
        }
        let s = match &self.form {
            Form::Symbolic { phi, dphi, ddphi } => ProfileSample {
                phi: phi.eval_at("r", r)?,
                dphi: dphi.eval_at("r", r)?,
                ddphi: ddphi.eval_at("r", r)?,
            },
            Form::Extended(e) => e.sample(r)?,
        };
        if !(s.phi > 0.0 && s.phi.is_finite()) {
            return Err(ProfileError::NonPositive { r, value: s.phi });
        }
        Ok(s)
    }

    pub fn phi(&self, r: f64) -> Result<f64, ProfileError> {
        Ok(self.sample(r)?.phi)
    }
}

impl Extension {
    fn sample(&self, r: f64) -> Result<ProfileSample, ProfileError> {
        if r <= self.alpha0 {
            return self.base.sample(r);
        }
        let (p, dp, ddp) = if r < self.mid {
            let t = r - self.alpha0;
            let curv = (self.beta - self.d0) / (self.mid - self.alpha0);
            (self.y0 + self.d0 * t + 0.5 * curv * t * t, self.d0 + curv * t, curv)
        } else {
            (self.log_c + self.beta * r, self.beta, 0.0)
        };
        let phi = p.exp();
        Ok(ProfileSample { phi, dphi: dp * phi, ddphi: (ddp + dp * dp) * phi })
    }
}

/// Outcome of a sampled condition check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub holds: bool,
    /// First sample violating the condition.
    pub witness: Option<f64>,
    /// Empirical constant: `mu0` for cA, `min (log phi)''` for cB, `c` for cC.
    pub constant: Option<f64>,
    pub samples: usize,
    pub note: String,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![hi];
    }
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

fn check_window(p: &ConformalProfile, lo: f64, hi: f64) -> Result<(), ProfileError> {
    if !(lo <= hi) || !(hi < p.upper) {
        return Err(ProfileError::InvalidParameter(format!(
            "window [{lo}, {hi}] must be ordered and lie below A = {}",
            p.upper
        )));
    }
    Ok(())
}

/// Condition cA: `phi' > 0` on the window and `|phi'/phi|` bounded below `a`.
pub fn check_ca(
    p: &ConformalProfile,
    window: (f64, f64),
    a: f64,
    samples: usize,
) -> Result<ConditionReport, ProfileError> {
    let (lo, hi) = window;
    check_window(p, lo, hi)?;
    if !(a < p.upper) {
        return Err(ProfileError::InvalidParameter(format!("a = {a} must lie below A")));
    }
    let mut witness = None;
    for r in linspace(lo, hi, samples) {
        if p.sample(r)?.dphi <= 0.0 {
            witness = Some(r);
            break;
        }
    }
    let mut mu0: f64 = 0.0;
    for r in linspace(lo.min(a), a.min(hi), samples) {
        mu0 = mu0.max(p.sample(r)?.log_d1().abs());
    }
    let holds = witness.is_none() && mu0.is_finite();
    Ok(ConditionReport {
        condition: "cA".into(),
        holds,
        witness,
        constant: Some(mu0),
        samples,
        note: "phi' > 0 on the window; constant is the sampled sup of |phi'/phi| below a".into(),
    })
}

/// Condition cB: `(log phi)'' >= -1e-12` at every sample.
pub fn check_cb(
    p: &ConformalProfile,
    window: (f64, f64),
    samples: usize,
) -> Result<ConditionReport, ProfileError> {
    let (lo, hi) = window;
    check_window(p, lo, hi)?;
    let mut witness = None;
    let mut min = f64::INFINITY;
    for r in linspace(lo, hi, samples) {
        let v = p.sample(r)?.log_d2();
        min = min.min(v);
        if v < -1e-12 && witness.is_none() {
            witness = Some(r);
        }
    }
    Ok(ConditionReport {
        condition: "cB".into(),
        holds: witness.is_none(),
        witness,
        constant: Some(min),
        samples,
        note: "constant is the sampled minimum of (log phi)''".into(),
    })
}

/// Condition cC: `phi` increases past `threshold` as `r -> A-` and
/// `inf (log phi)' > 0` on the approach. Samples accumulate geometrically at `A`.
pub fn check_cc(
    p: &ConformalProfile,
    lo: f64,
    samples: usize,
    threshold: f64,
) -> Result<ConditionReport, ProfileError> {
    let a = p.upper;
    if !a.is_finite() {
        return Err(ProfileError::NotApplicable(
            "cC needs a finite upper endpoint A".into(),
        ));
    }
    if !(lo < a) || samples < 2 {
        return Err(ProfileError::InvalidParameter(format!(
            "cC window start {lo} must lie below A = {a} with at least 2 samples"
        )));
    }
    let span = a - lo;
    let q = 1e-10f64.powf(1.0 / (samples - 1) as f64);
    let mut witness = None;
    let mut c = f64::INFINITY;
    let mut prev = f64::NEG_INFINITY;
    let mut last = 0.0;
    for k in 0..samples {
        let r = a - span * q.powi(k as i32);
        let s = p.sample(r)?;
        c = c.min(s.log_d1());
        if s.phi <= prev && witness.is_none() {
            witness = Some(r);
        }
        prev = s.phi;
        last = s.phi;
    }
    let holds = witness.is_none() && last >= threshold && c > 0.0;
    if witness.is_none() && !holds {
        witness = Some(a - span * q.powi(samples as i32 - 1));
    }
    Ok(ConditionReport {
        condition: "cC".into(),
        holds,
        witness,
        constant: Some(c),
        samples,
        note: format!("phi reached {last:e} (threshold {threshold:e}); constant is inf (log phi)'"),
    })
}

/// Length of the window sampled below `(A + alpha0) / 2` for the tail rate.
const BETA_WINDOW: f64 = 50.0;
const BETA_SAMPLES: usize = 4001;

/// Replaces `phi` above `alpha0` by a log-convex blend into `C e^{beta r}`.
///
/// Translating profiles are returned unchanged: their tail already has this form.
pub fn extend_profile(p: &ConformalProfile, alpha0: f64) -> Result<ConformalProfile, ProfileError> {
    if matches!(p.label, ProfileLabel::Translating { .. }) {
        return Ok(p.clone());
    }
    let a = p.upper;
    if !a.is_finite() || !(alpha0 < a) {
        return Err(ProfileError::InvalidParameter(format!(
            "extension needs a finite A above alpha0, got A = {a}, alpha0 = {alpha0}"
        )));
    }
    let lo = alpha0 - BETA_WINDOW;
    let ca = check_ca(p, (lo, alpha0), alpha0, BETA_SAMPLES)?;
    let cb = check_cb(p, (lo, alpha0), BETA_SAMPLES)?;
    if !ca.holds || !cb.holds {
        return Err(ProfileError::Precondition(format!(
            "cA holds: {}, cB holds: {} below alpha0",
            ca.holds, cb.holds
        )));
    }
    let mid = 0.5 * (a + alpha0);
    let mut beta = f64::NEG_INFINITY;
    for r in linspace(mid - BETA_WINDOW, mid, BETA_SAMPLES) {
        beta = beta.max(p.sample(r)?.log_d1());
    }
    let base = p.sample(alpha0)?;
    let (y0, d0) = (base.phi.ln(), base.log_d1());
    let log_c = y0 + 0.5 * (mid - alpha0) * (d0 + beta) - beta * mid;
    let extended = ConformalProfile {
        form: Form::Extended(Box::new(Extension {
            base: p.clone(),
            alpha0,
            mid,
            y0,
            d0,
            beta,
            log_c,
        })),
        upper: a,
        label: ProfileLabel::Extended { alpha0, beta },
    };
    for r in linspace(alpha0, mid, 257) {
        let v = extended.sample(r)?.log_d2();
        if v < -1e-8 {
            return Err(ProfileError::BlendFailure { r, value: v });
        }
    }
    Ok(extended)
}
