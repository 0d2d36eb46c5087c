//! The discrete weighted area `F(u) = sum_cells omega_c sum_k w_k g(u_k)`.
//!
//! `omega_c = sqrt(1 + |p_c|^2)` uses the cell's constant gradient and `g` is
//! a nodal density (`phi^n` for graph area), i.e. the trapezoid rule on the
//! solver's nodes. The normalized gradient
//! `dF/du_i / (V_i g(u_i))` discretizes `phi H`, so the same sums serve as
//! functional, solver residual (in weak form) and Newton Jacobian.

use crate::banded::BandMatrix;
use crate::geometry::Grid;
use crate::profiles::{ConformalProfile, ProfileError};

/// Nodal values of `g`, `g'` and `g''`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalDensity {
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub ddg: Vec<f64>,
}

/// Weight `g(u)` of the area functional.
#[derive(Debug, Clone, Copy)]
pub enum Density<'a> {
    /// `g = 1`: plain graph area.
    Unit,
    /// `g = exp(rate (u - reference))`.
    Exponential { rate: f64, reference: f64 },
    /// `g = exp(scale (log phi(u) - log_ref))`, i.e. `(phi / phi_ref)^scale`.
    LogProfile { profile: &'a ConformalProfile, scale: f64, log_ref: f64 },
}

impl Density<'_> {
    /// `(g, g', g'')` at one height.
    pub fn at(&self, u: f64) -> Result<[f64; 3], ProfileError> {
        let v = match *self {
            Density::Unit => [1.0, 0.0, 0.0],
            Density::Exponential { rate, reference } => {
                let g = (rate * (u - reference)).exp();
                [g, rate * g, rate * rate * g]
            }
            Density::LogProfile { profile, scale, log_ref } => {
                let s = profile.sample(u)?;
                let g = (scale * (s.phi.ln() - log_ref)).exp();
                let l1 = scale * s.log_d1();
                [g, l1 * g, (scale * s.log_d2() + l1 * l1) * g]
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ProfileError::NonPositive { r: u, value: v[0] });
        }
        Ok(v)
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<NodalDensity, ProfileError> {
        let n = u.len();
        let mut out = NodalDensity { g: vec![0.0; n], dg: vec![0.0; n], ddg: vec![0.0; n] };
        for (i, &ui) in u.iter().enumerate() {
            let [g, dg, ddg] = self.at(ui)?;
            out.g[i] = g;
            out.dg[i] = dg;
            out.ddg[i] = ddg;
        }
        Ok(out)
    }
}

pub fn value(grid: &Grid, u: &[f64], d: &Density) -> Result<f64, ProfileError> {
    let nodal = d.evaluate(u)?;
    Ok(grid
        .cells()
        .iter()
        .map(|c| {
            let p = c.gradient(u);
            let omega = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
            omega * (0..c.len).map(|k| c.weights[k] * nodal.g[c.nodes[k]]).sum::<f64>()
        })
        .sum())
}

/// `dF/du` at every node, boundary nodes included.
pub fn gradient(grid: &Grid, u: &[f64], d: &Density) -> Result<Vec<f64>, ProfileError> {
    Ok(nodal_gradient(grid, u, &d.evaluate(u)?))
}

fn nodal_gradient(grid: &Grid, u: &[f64], d: &NodalDensity) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for c in grid.cells() {
        let p = c.gradient(u);
        let omega = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
        let s: f64 = (0..c.len).map(|k| c.weights[k] * d.g[c.nodes[k]]).sum();
        for k in 0..c.len {
            let q = p[0] * c.grad[0][k] + p[1] * c.grad[1][k];
            out[c.nodes[k]] += q / omega * s + omega * c.weights[k] * d.dg[c.nodes[k]];
        }
    }
    out
}

/// `dF/du_i / g(u_i)` at interior nodes, zero on the boundary.
///
/// This weak residual is what the solver drives to zero: unlike the pointwise
/// form it is not amplified by `1 / V_i`, so its rounding floor stays near
/// `eps / h` instead of `eps |u| / h^2`.
pub fn weak_residual(grid: &Grid, u: &[f64], nodal: &NodalDensity) -> Vec<f64> {
    let mut r = nodal_gradient(grid, u, nodal);
    for (i, ri) in r.iter_mut().enumerate() {
        *ri = if grid.is_boundary(i) { 0.0 } else { *ri / nodal.g[i] };
    }
    r
}

/// `dF/du_i / (V_i g(u_i))` at interior nodes, zero on the boundary.
pub fn normalized_gradient(grid: &Grid, u: &[f64], d: &Density) -> Result<Vec<f64>, ProfileError> {
    let mut r = weak_residual(grid, u, &d.evaluate(u)?);
    for (ri, v) in r.iter_mut().zip(grid.volumes()) {
        *ri /= v;
    }
    Ok(r)
}

/// Adds `d^2F/du^2` into `h`.
pub fn add_hessian(grid: &Grid, u: &[f64], d: &NodalDensity, h: &mut BandMatrix) {
    for c in grid.cells() {
        let p = c.gradient(u);
        let omega2 = 1.0 + p[0] * p[0] + p[1] * p[1];
        let omega = omega2.sqrt();
        let s: f64 = (0..c.len).map(|k| c.weights[k] * d.g[c.nodes[k]]).sum();
        let mut q = [0.0; 3];
        let mut wdg = [0.0; 3];
        for k in 0..c.len {
            q[k] = p[0] * c.grad[0][k] + p[1] * c.grad[1][k];
            wdg[k] = c.weights[k] * d.dg[c.nodes[k]];
        }
        for k in 0..c.len {
            for l in 0..c.len {
                let cc = c.grad[0][k] * c.grad[0][l] + c.grad[1][k] * c.grad[1][l];
                let mut v = (cc / omega - q[k] * q[l] / (omega * omega2)) * s
                    + q[k] / omega * wdg[l]
                    + q[l] / omega * wdg[k];
                if k == l {
                    v += omega * c.weights[k] * d.ddg[c.nodes[k]];
                }
                h.add(c.nodes[k], c.nodes[l], v);
            }
        }
    }
}

/// Largest cell gradient norm.
pub fn max_cell_gradient(grid: &Grid, u: &[f64]) -> f64 {
    grid.cells().iter().fold(0.0, |m, c| {
        let p = c.gradient(u);
        m.max(p[0].hypot(p[1]))
    })
}

/// Stiffness matrix of the Dirichlet energy `1/2 sum_cells |p_c|^2 sum_k w_k`.
pub fn dirichlet_matrix(grid: &Grid) -> BandMatrix {
    let bw = grid.bandwidth();
    let mut m = BandMatrix::zeros(grid.len(), bw, bw);
    for c in grid.cells() {
        let w = c.weight_sum();
        for k in 0..c.len {
            for l in 0..c.len {
                let cc = c.grad[0][k] * c.grad[0][l] + c.grad[1][k] * c.grad[1][l];
                m.add(c.nodes[k], c.nodes[l], w * cc);
            }
        }
    }
    m
}
