//! Weighted graph area `int phi(u)^n omega`, its translating special case
//! `int e^{alpha u} omega`, the boundary-jump mass and random competitor tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{self, Density};
use crate::geometry::{GeometryError, Layout, ScalarField};
use crate::profiles::{ConformalProfile, ProfileError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalValue {
    pub value: f64,
    pub interior: f64,
    pub jump: f64,
}

fn check_alpha(alpha: f64) -> Result<(), FunctionalError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(FunctionalError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

pub fn graph_area(p: &ConformalProfile, u: &ScalarField) -> Result<f64, FunctionalError> {
    let n = u.grid().dim() as f64;
    let density = Density::LogProfile { profile: p, scale: n, log_ref: 0.0 };
    Ok(discrete::value(u.grid(), u.values(), &density)?)
}

pub fn conformal_functional(u: &ScalarField, alpha: f64) -> Result<FunctionalValue, FunctionalError> {
    check_alpha(alpha)?;
    let density = Density::Exponential { rate: alpha, reference: 0.0 };
    let interior = discrete::value(u.grid(), u.values(), &density)?;
    Ok(FunctionalValue { value: interior, interior, jump: 0.0 })
}

/// Adds `(1/alpha) int_{boundary} |e^{alpha u} - e^{alpha psi}|` to the functional.
pub fn mass_with_jump(
    u: &ScalarField,
    psi: &ScalarField,
    alpha: f64,
) -> Result<FunctionalValue, FunctionalError> {
    u.check_same_grid(psi)?;
    let base = conformal_functional(u, alpha)?;
    let bw = u.grid().boundary_weights();
    let jump: f64 = u
        .grid()
        .boundary()
        .iter()
        .map(|&i| bw[i] * ((alpha * u.values()[i]).exp() - (alpha * psi.values()[i]).exp()).abs())
        .sum::<f64>()
        / alpha;
    Ok(FunctionalValue { value: base.interior + jump, interior: base.interior, jump })
}

/// Gradient of the discrete `int e^{alpha u} omega` with respect to the
/// interior nodal values; boundary entries are zero.
pub fn first_variation(u: &ScalarField, alpha: f64) -> Result<Vec<f64>, FunctionalError> {
    let density = Density::Exponential { rate: alpha, reference: 0.0 };
    let mut g = discrete::gradient(u.grid(), u.values(), &density)?;
    for &i in u.grid().boundary() {
        g[i] = 0.0;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpSpec {
    /// Amplitudes are drawn uniformly from `[-max_amplitude, max_amplitude]`.
    pub max_amplitude: f64,
    /// Half-widths as fractions of the domain inradius.
    pub min_width: f64,
    pub max_width: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        BumpSpec { max_amplitude: 0.2, min_width: 0.1, max_width: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub seed: u64,
    pub center: [f64; 2],
    pub half_width: f64,
    pub amplitude: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub trials: usize,
    pub seed: u64,
    pub min_excess: f64,
    pub violations: usize,
    pub bumps: Vec<Bump>,
}

/// Violations are excesses below this.
pub const EXCESS_SLACK: f64 = -1e-10;
const MAX_DRAWS: usize = 10_000;

fn hat(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t
    }
}

/// Adds random interior bumps to `u` and records the change in weighted area.
///
/// Each bump is a tensor product of `(1 - s^2)^2` hats, drawn from its own
/// seeded stream so the report does not depend on the thread count.
pub fn perturbation_test(
    p: &ConformalProfile,
    u: &ScalarField,
    trials: usize,
    spec: &BumpSpec,
    seed: u64,
) -> Result<PerturbationReport, FunctionalError> {
    if !(spec.max_amplitude >= 0.0 && 0.0 < spec.min_width && spec.min_width <= spec.max_width) {
        return Err(FunctionalError::InvalidArgument(format!("bad bump spec {spec:?}")));
    }
    let grid = u.grid();
    let base = graph_area(p, u)?;
    let two_d = !matches!(grid.layout(), Layout::Line { .. });
    let coords = grid.all_coords();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for (d, v) in [c.x, c.y].into_iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    let scale = grid.domain().inradius();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..trials).map(|_| master.gen()).collect();
    let bumps = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            for _ in 0..MAX_DRAWS {
                let center = [
                    rng.gen_range(lo[0]..=hi[0]),
                    if two_d { rng.gen_range(lo[1]..=hi[1]) } else { 0.0 },
                ];
                let half_width = scale * rng.gen_range(spec.min_width..=spec.max_width);
                let amplitude = if spec.max_amplitude > 0.0 {
                    rng.gen_range(-spec.max_amplitude..=spec.max_amplitude)
                } else {
                    0.0
                };
                let shape: Vec<f64> = coords
                    .iter()
                    .map(|c| {
                        let sx = hat((c.x - center[0]) / half_width);
                        if two_d { sx * hat((c.y - center[1]) / half_width) } else { sx }
                    })
                    .collect();
                let touches_boundary = grid.boundary().iter().any(|&i| shape[i] != 0.0);
                let empty = shape.iter().all(|&v| v == 0.0);
                let values: Vec<f64> =
                    u.values().iter().zip(&shape).map(|(v, b)| v + amplitude * b).collect();
                let in_cone = values.iter().all(|&v| v < p.upper());
                if touches_boundary || empty || !in_cone {
                    continue;
                }
                let moved = ScalarField::new(grid.clone(), values)?;
                let excess = graph_area(p, &moved)? - base;
                return Ok(Bump { seed: s, center, half_width, amplitude, excess });
            }
            Err(FunctionalError::InvalidArgument(
                "could not place an interior bump; widen the grid or shrink the widths".into(),
            ))
        })
        .collect::<Result<Vec<Bump>, FunctionalError>>()?;
    let min_excess = bumps.iter().map(|b| b.excess).fold(f64::INFINITY, f64::min);
    let violations = bumps.iter().filter(|b| b.excess < EXCESS_SLACK).count();
    Ok(PerturbationReport { trials, seed, min_excess, violations, bumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    fn interval(n: usize) -> std::sync::Arc<crate::geometry::Grid> {
        build_grid(&Domain::interval(-1.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn constant_graph_area() {
        let u = ScalarField::constant(interval(17), 0.0);
        let p = ConformalProfile::translating(1.0, 1).unwrap();
        assert!((graph_area(&p, &u).unwrap() - 2.0).abs() < 1e-14);
        assert!((conformal_functional(&u, 3.0).unwrap().value - 2.0).abs() < 1e-14);
        assert!(conformal_functional(&u, 0.0).is_err());
    }

    #[test]
    fn jump_of_constant_mismatch() {
        let grid = interval(9);
        let u = ScalarField::constant(grid.clone(), 1.0);
        let psi = ScalarField::constant(grid, 0.0);
        let a = mass_with_jump(&u, &psi, 1.0).unwrap();
        let b = mass_with_jump(&psi, &u, 1.0).unwrap();
        assert!((a.jump - 3.43656365691809).abs() < 1e-13);
        assert_eq!(a.jump, b.jump);
        assert_eq!(mass_with_jump(&u, &u, 1.0).unwrap().jump, 0.0);
    }

    #[test]
    fn zero_amplitude_bumps_change_nothing() {
        let u = ScalarField::from_fn(interval(33), |c| 0.1 * c.x * c.x);
        let spec = BumpSpec { max_amplitude: 0.0, ..BumpSpec::default() };
        let p = ConformalProfile::translating(1.0, 1).unwrap();
        let r = perturbation_test(&p, &u, 10, &spec, 1).unwrap();
        assert!(r.bumps.iter().all(|b| b.excess == 0.0));
    }

    #[test]
    fn non_critical_graph_has_descent_bumps() {
        // Linear data: the grim reaper lies below, so lowering the middle helps.
        let u = ScalarField::from_fn(interval(65), |c| 0.5 * c.x + 0.6);
        let p = ConformalProfile::translating(1.0, 1).unwrap();
        let r = perturbation_test(&p, &u, 100, &BumpSpec::default(), 11).unwrap();
        assert!(r.violations > 0);
        let g = first_variation(&u, 1.0).unwrap();
        assert!(g.iter().any(|v| v.abs() > 1e-3));
    }
}
