//! Base domains, structured grids and metric-aware difference operators.
//!
//! Every grid carries two discretizations of the same geometry:
//!
//! * node-based finite differences ([`gradient`], [`divergence`]), second order
//!   in the interior and used as the independent curvature path;
//! * quadrature [`Cell`]s, each holding a constant-gradient stencil and nodal
//!   volume weights, on which the discrete area functionals and the solver
//!   residual are built.
//!
//! Node order: line grids run from the left end (or the pole) outward; tensor
//! grids use `j * nx + i`; polar grids put the pole at index 0 followed by
//! `1 + (ring - 1) * n_theta + j`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field length {got} does not match node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// How a disk or cap is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polar {
    /// Rotationally symmetric fields on `[0, R]`.
    Radial,
    /// Full `(rho, theta)` grid, two-dimensional bases only.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Interval { lo: f64, hi: f64 },
    /// Centered flat rectangle `[-a/2, a/2] x [-b/2, b/2]`.
    Rectangle { a: f64, b: f64 },
    FlatDisk { radius: f64, polar: Polar },
    /// Geodesic ball of radius `radius` about the north pole of the unit sphere.
    SphericalCap { radius: f64, polar: Polar },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub dim: usize,
    pub ncm_declared: bool,
    pub mean_convex_declared: bool,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Domain, GeometryError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GeometryError::InvalidDomain(format!(
                "interval needs finite lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Domain {
            kind: DomainKind::Interval { lo, hi },
            dim: 1,
            ncm_declared: true,
            mean_convex_declared: true,
        })
    }

    pub fn rectangle(a: f64, b: f64) -> Result<Domain, GeometryError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!(
                "rectangle sides must be positive, got {a} x {b}"
            )));
        }
        Ok(Domain {
            kind: DomainKind::Rectangle { a, b },
            dim: 2,
            ncm_declared: true,
            mean_convex_declared: true,
        })
    }

    pub fn flat_disk(radius: f64, dim: usize) -> Result<Domain, GeometryError> {
        Self::disk_like(DomainKind::FlatDisk { radius, polar: Polar::Radial }, dim)
    }

    pub fn flat_disk_polar(radius: f64) -> Result<Domain, GeometryError> {
        Self::disk_like(DomainKind::FlatDisk { radius, polar: Polar::Full }, 2)
    }

    pub fn spherical_cap(radius: f64, dim: usize) -> Result<Domain, GeometryError> {
        Self::disk_like(DomainKind::SphericalCap { radius, polar: Polar::Radial }, dim)
    }

    pub fn spherical_cap_polar(radius: f64) -> Result<Domain, GeometryError> {
        Self::disk_like(DomainKind::SphericalCap { radius, polar: Polar::Full }, 2)
    }

    fn disk_like(kind: DomainKind, dim: usize) -> Result<Domain, GeometryError> {
        if dim < 2 {
            return Err(GeometryError::InvalidDomain(
                "disks and caps need dimension at least 2".into(),
            ));
        }
        let (radius, polar, cap) = match kind {
            DomainKind::FlatDisk { radius, polar } => (radius, polar, false),
            DomainKind::SphericalCap { radius, polar } => (radius, polar, true),
            _ => unreachable!(),
        };
        if polar == Polar::Full && dim != 2 {
            return Err(GeometryError::InvalidDomain(
                "full polar grids are two-dimensional".into(),
            ));
        }
        if !(radius > 0.0 && radius.is_finite()) || (cap && radius >= PI) {
            return Err(GeometryError::InvalidDomain(format!(
                "radius {radius} outside the admissible range"
            )));
        }
        Ok(Domain {
            kind,
            dim,
            // caps reaching the equator contain a closed minimal hypersurface
            ncm_declared: !cap || radius < PI / 2.0,
            mean_convex_declared: !cap || radius <= PI / 2.0,
        })
    }

    /// Overrides the declared NCM flag. Caps with `radius >= pi/2` stay false.
    pub fn with_ncm(mut self, ncm: bool) -> Domain {
        let forbidden = matches!(self.kind, DomainKind::SphericalCap { radius, .. } if radius >= PI / 2.0);
        self.ncm_declared = ncm && !forbidden;
        self
    }

    pub fn measure(&self) -> Measure {
        match self.kind {
            DomainKind::Interval { .. } | DomainKind::Rectangle { .. } => Measure::Flat,
            DomainKind::FlatDisk { .. } => Measure::Ball,
            DomainKind::SphericalCap { .. } => Measure::Sphere,
        }
    }

    /// Radius of the largest inscribed ball.
    pub fn inradius(&self) -> f64 {
        match self.kind {
            DomainKind::Interval { lo, hi } => 0.5 * (hi - lo),
            DomainKind::Rectangle { a, b } => 0.5 * a.min(b),
            DomainKind::FlatDisk { radius, .. } | DomainKind::SphericalCap { radius, .. } => radius,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Interval { lo, hi } => hi - lo,
            DomainKind::Rectangle { a, b } => a * b,
            DomainKind::FlatDisk { radius, .. } | DomainKind::SphericalCap { radius, .. } => {
                sphere_area(self.dim - 1) * self.measure().integral(self.dim, 0.0, radius)
            }
        }
    }
}

/// Radial density of the volume form: 1, `rho^(n-1)` or `sin^(n-1) rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Flat,
    Ball,
    Sphere,
}

impl Measure {
    pub fn density(self, dim: usize, rho: f64) -> f64 {
        match self {
            Measure::Flat => 1.0,
            Measure::Ball => rho.powi(dim as i32 - 1),
            Measure::Sphere => rho.sin().powi(dim as i32 - 1),
        }
    }

    /// `J'/J`; infinite at the pole for curved measures.
    pub fn log_derivative(self, dim: usize, rho: f64) -> f64 {
        let k = (dim - 1) as f64;
        match self {
            Measure::Flat => 0.0,
            Measure::Ball => k / rho,
            Measure::Sphere => k * rho.cos() / rho.sin(),
        }
    }

    /// Exact `int_a^b J(rho) d rho`.
    pub fn integral(self, dim: usize, a: f64, b: f64) -> f64 {
        match self {
            Measure::Flat => b - a,
            Measure::Ball => (b.powi(dim as i32) - a.powi(dim as i32)) / dim as f64,
            Measure::Sphere => sin_power_integral(dim - 1, b) - sin_power_integral(dim - 1, a),
        }
    }

    /// Cross-section length `lambda(rho)` for two-dimensional polar grids.
    fn lambda(self, rho: f64) -> f64 {
        match self {
            Measure::Sphere => rho.sin(),
            _ => rho,
        }
    }
}

/// `int_0^x sin^k`.
fn sin_power_integral(k: usize, x: f64) -> f64 {
    match k {
        0 => x,
        1 => 1.0 - x.cos(),
        _ => {
            let kf = k as f64;
            -x.sin().powi(k as i32 - 1) * x.cos() / kf
                + (kf - 1.0) / kf * sin_power_integral(k - 2, x)
        }
    }
}

/// Area of the unit sphere `S^k`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Line { n: usize, h: f64, origin: f64, radial: bool },
    Tensor { nx: usize, ny: usize, hx: f64, hy: f64, x0: f64, y0: f64 },
    Polar { n_rho: usize, n_theta: usize, d_rho: f64, d_theta: f64 },
}

/// A quadrature cell with a constant discrete gradient.
///
/// `grad[d][k]` is the coefficient of `u[nodes[k]]` in gradient component `d`
/// (orthonormal frame); `weights[k]` is the volume attributed to `nodes[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub nodes: [usize; 3],
    pub len: usize,
    pub dims: usize,
    pub grad: [[f64; 3]; 2],
    pub weights: [f64; 3],
}

impl Cell {
    pub fn gradient(&self, u: &[f64]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (d, pd) in p.iter_mut().enumerate().take(self.dims) {
            for k in 0..self.len {
                *pd += self.grad[d][k] * u[self.nodes[k]];
            }
        }
        p
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights[..self.len].iter().sum()
    }
}

/// Coordinates of a node in every chart a user might reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoords {
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    layout: Layout,
    coords: Vec<NodeCoords>,
    on_boundary: Vec<bool>,
    boundary: Vec<usize>,
    interior: Vec<usize>,
    cells: Vec<Cell>,
    volumes: Vec<f64>,
    boundary_weights: Vec<f64>,
    bandwidth: usize,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.layout == other.layout
    }
}

/// Builds the grid for `domain` with `resolution` nodes per axis.
///
/// Full polar grids use `4 * (resolution - 1)` angular nodes.
pub fn build_grid(domain: &Domain, resolution: usize) -> Result<Arc<Grid>, GeometryError> {
    match domain.kind {
        DomainKind::Rectangle { .. } => build_tensor_grid(domain, resolution, resolution),
        DomainKind::FlatDisk { polar: Polar::Full, .. }
        | DomainKind::SphericalCap { polar: Polar::Full, .. } => {
            build_polar_grid(domain, resolution, 4 * resolution.saturating_sub(1))
        }
        _ => build_line_grid(domain, resolution),
    }
}

fn check_resolution(resolution: usize) -> Result<(), GeometryError> {
    if resolution < 3 {
        return Err(GeometryError::UnsupportedGrid(format!(
            "resolution {resolution} below the minimum of 3"
        )));
    }
    Ok(())
}

fn build_line_grid(domain: &Domain, n: usize) -> Result<Arc<Grid>, GeometryError> {
    check_resolution(n)?;
    let (origin, length, radial) = match domain.kind {
        DomainKind::Interval { lo, hi } => (lo, hi - lo, false),
        DomainKind::FlatDisk { radius, polar: Polar::Radial }
        | DomainKind::SphericalCap { radius, polar: Polar::Radial } => (0.0, radius, true),
        _ => {
            return Err(GeometryError::UnsupportedGrid(
                "line grids need an interval or a radial disk/cap".into(),
            ))
        }
    };
    let h = length / (n - 1) as f64;
    let pos = |i: usize| if i == n - 1 { origin + length } else { origin + i as f64 * h };
    let coords = (0..n)
        .map(|i| {
            let p = pos(i);
            NodeCoords { x: p, y: 0.0, rho: if radial { p } else { p.abs() }, theta: 0.0 }
        })
        .collect();
    let mut on_boundary = vec![false; n];
    on_boundary[n - 1] = true;
    if !radial {
        on_boundary[0] = true;
    }
    let measure = domain.measure();
    let scale = if radial { sphere_area(domain.dim - 1) } else { 1.0 };
    let cells = (0..n - 1)
        .map(|i| {
            let (a, b) = (pos(i), pos(i + 1));
            let mid = 0.5 * (a + b);
            let mut weights = [0.0; 3];
            if radial {
                weights[0] = scale * measure.integral(domain.dim, a, mid);
                weights[1] = scale * measure.integral(domain.dim, mid, b);
            } else {
                weights[0] = mid - a;
                weights[1] = b - mid;
            }
            let width = b - a;
            Cell {
                nodes: [i, i + 1, 0],
                len: 2,
                dims: 1,
                grad: [[-1.0 / width, 1.0 / width, 0.0], [0.0; 3]],
                weights,
            }
        })
        .collect();
    let layout = Layout::Line { n, h, origin, radial };
    let mut bw = vec![0.0; n];
    if radial {
        bw[n - 1] = scale * measure.density(domain.dim, length);
    } else {
        bw[0] = 1.0;
        bw[n - 1] = 1.0;
    }
    Ok(Arc::new(Grid::assemble(*domain, layout, coords, on_boundary, cells, bw)))
}

/// Tensor grid with `nx x ny` nodes on a rectangle.
pub fn build_tensor_grid(domain: &Domain, nx: usize, ny: usize) -> Result<Arc<Grid>, GeometryError> {
    check_resolution(nx)?;
    check_resolution(ny)?;
    let DomainKind::Rectangle { a, b } = domain.kind else {
        return Err(GeometryError::UnsupportedGrid("tensor grids need a rectangle".into()));
    };
    let (hx, hy) = (a / (nx - 1) as f64, b / (ny - 1) as f64);
    let (x0, y0) = (-0.5 * a, -0.5 * b);
    let idx = |i: usize, j: usize| j * nx + i;
    let mut coords = Vec::with_capacity(nx * ny);
    let mut on_boundary = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (x0 + i as f64 * hx, y0 + j as f64 * hy);
            coords.push(NodeCoords { x, y, rho: x.hypot(y), theta: y.atan2(x) });
            on_boundary.push(i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
        }
    }
    let mut cells = Vec::with_capacity(4 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            for (ci, cj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                let ox = if ci == i { i + 1 } else { i };
                let oy = if cj == j { j + 1 } else { j };
                let sx = if ox > ci { 1.0 } else { -1.0 } / hx;
                let sy = if oy > cj { 1.0 } else { -1.0 } / hy;
                cells.push(Cell {
                    nodes: [idx(ci, cj), idx(ox, cj), idx(ci, oy)],
                    len: 3,
                    dims: 2,
                    grad: [[-sx, sx, 0.0], [-sy, 0.0, sy]],
                    weights: [0.25 * hx * hy, 0.0, 0.0],
                });
            }
        }
    }
    let mut bw = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let k = idx(i, j);
            if i == 0 || i == nx - 1 {
                bw[k] += if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
            }
            if j == 0 || j == ny - 1 {
                bw[k] += if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
            }
        }
    }
    let layout = Layout::Tensor { nx, ny, hx, hy, x0, y0 };
    Ok(Arc::new(Grid::assemble(*domain, layout, coords, on_boundary, cells, bw)))
}

/// Full polar grid with `n_rho` rings (pole included) and `n_theta` angles.
pub fn build_polar_grid(
    domain: &Domain,
    n_rho: usize,
    n_theta: usize,
) -> Result<Arc<Grid>, GeometryError> {
    check_resolution(n_rho)?;
    if n_theta < 8 || n_theta % 2 != 0 {
        return Err(GeometryError::UnsupportedGrid(format!(
            "polar grids need an even number of at least 8 angular nodes, got {n_theta}"
        )));
    }
    let radius = match domain.kind {
        DomainKind::FlatDisk { radius, polar: Polar::Full }
        | DomainKind::SphericalCap { radius, polar: Polar::Full } => radius,
        _ => {
            return Err(GeometryError::UnsupportedGrid(
                "polar grids need a full-polar disk or cap".into(),
            ))
        }
    };
    let measure = domain.measure();
    let d_rho = radius / (n_rho - 1) as f64;
    let d_theta = 2.0 * PI / n_theta as f64;
    let ring_rho = |i: usize| if i == n_rho - 1 { radius } else { i as f64 * d_rho };
    let idx = |i: usize, j: usize| 1 + (i - 1) * n_theta + (j % n_theta);
    let count = 1 + (n_rho - 1) * n_theta;
    let mut coords = Vec::with_capacity(count);
    coords.push(NodeCoords { x: 0.0, y: 0.0, rho: 0.0, theta: 0.0 });
    let mut on_boundary = vec![false; count];
    for i in 1..n_rho {
        for j in 0..n_theta {
            let (rho, theta) = (ring_rho(i), j as f64 * d_theta);
            coords.push(NodeCoords { x: rho * theta.cos(), y: rho * theta.sin(), rho, theta });
            on_boundary[idx(i, j)] = i == n_rho - 1;
        }
    }
    let lam_int = |a: f64, b: f64| measure.integral(2, a, b);
    let mut cells = Vec::new();
    // The pole owns the disk of radius h/2 and ring 1 owns [h/2, h] through
    // corner cells like the bulk. A P1 hat puts twice the radial flux of its
    // weight on ring 1, so the fan carries half the pole disk; the other half
    // sits in a gradient-free cell. Ring 1 then balances for the constant and
    // first angular modes, and only the pole row keeps an O(1) source error.
    let h1 = ring_rho(1);
    let inner = 0.5 * d_theta * lam_int(0.5 * h1, h1);
    let st1 = 1.0 / (measure.lambda(h1) * d_theta);
    for j in 0..n_theta {
        let (t1, t2) = (j as f64 * d_theta, (j + 1) as f64 * d_theta);
        let (a11, a12, a21, a22) = (h1 * t1.cos(), h1 * t1.sin(), h1 * t2.cos(), h1 * t2.sin());
        let det = a11 * a22 - a12 * a21;
        // rows of M^{-1}: gradient = M^{-1} [u1 - u0, u2 - u0]
        let (m11, m12, m21, m22) = (a22 / det, -a12 / det, -a21 / det, a11 / det);
        cells.push(Cell {
            nodes: [0, idx(1, j), idx(1, j + 1)],
            len: 3,
            dims: 2,
            grad: [[-(m11 + m12), m11, m12], [-(m21 + m22), m21, m22]],
            weights: [0.5 * d_theta * lam_int(0.0, 0.5 * h1), 0.0, 0.0],
        });
        for (cj, oj, sign) in [(j, j + 1, 1.0), (j + 1, j, -1.0)] {
            cells.push(Cell {
                nodes: [idx(1, cj), 0, idx(1, oj)],
                len: 3,
                dims: 2,
                grad: [[1.0 / h1, -1.0 / h1, 0.0], [-sign * st1, 0.0, sign * st1]],
                weights: [inner, 0.0, 0.0],
            });
        }
    }
    cells.push(Cell {
        nodes: [0, 0, 0],
        len: 1,
        dims: 0,
        grad: [[0.0; 3]; 2],
        weights: [0.5 * 2.0 * PI * lam_int(0.0, 0.5 * h1), 0.0, 0.0],
    });
    for i in 1..n_rho - 1 {
        let (ra, rb) = (ring_rho(i), ring_rho(i + 1));
        let mid = 0.5 * (ra + rb);
        for j in 0..n_theta {
            for (ci, cj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                let oi = if ci == i { i + 1 } else { i };
                let oj = if cj == j { j + 1 } else { j };
                let rho_c = ring_rho(ci);
                let sr = if oi > ci { 1.0 } else { -1.0 } / (rb - ra);
                let st = if oj > cj { 1.0 } else { -1.0 } / (measure.lambda(rho_c) * d_theta);
                let w = if ci == i { lam_int(ra, mid) } else { lam_int(mid, rb) };
                cells.push(Cell {
                    nodes: [idx(ci, cj), idx(oi, cj), idx(ci, oj)],
                    len: 3,
                    dims: 2,
                    grad: [[-sr, sr, 0.0], [-st, 0.0, st]],
                    weights: [0.5 * d_theta * w, 0.0, 0.0],
                });
            }
        }
    }
    let mut bw = vec![0.0; count];
    for j in 0..n_theta {
        bw[idx(n_rho - 1, j)] = measure.lambda(radius) * d_theta;
    }
    let layout = Layout::Polar { n_rho, n_theta, d_rho, d_theta };
    Ok(Arc::new(Grid::assemble(*domain, layout, coords, on_boundary, cells, bw)))
}

impl Grid {
    fn assemble(
        domain: Domain,
        layout: Layout,
        coords: Vec<NodeCoords>,
        on_boundary: Vec<bool>,
        cells: Vec<Cell>,
        boundary_weights: Vec<f64>,
    ) -> Grid {
        let n = coords.len();
        let mut volumes = vec![0.0; n];
        let mut bandwidth = 0;
        for c in &cells {
            for k in 0..c.len {
                volumes[c.nodes[k]] += c.weights[k];
                for l in 0..c.len {
                    bandwidth = bandwidth.max(c.nodes[k].abs_diff(c.nodes[l]));
                }
            }
        }
        let boundary = (0..n).filter(|&i| on_boundary[i]).collect();
        let interior = (0..n).filter(|&i| !on_boundary[i]).collect();
        Grid {
            domain,
            layout,
            coords,
            on_boundary,
            boundary,
            interior,
            cells,
            volumes,
            boundary_weights,
            bandwidth,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self, i: usize) -> NodeCoords {
        self.coords[i]
    }

    pub fn all_coords(&self) -> &[NodeCoords] {
        &self.coords
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Dual volume of each node; sums to the domain volume.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Boundary measure attributed to each node (zero in the interior).
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Half bandwidth of any matrix coupling nodes that share a cell.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Geodesic distance from node `i` to the boundary.
    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        let c = self.coords[i];
        match self.domain.kind {
            DomainKind::Interval { lo, hi } => (c.x - lo).min(hi - c.x),
            DomainKind::Rectangle { a, b } => {
                (0.5 * a - c.x.abs()).min(0.5 * b - c.y.abs())
            }
            DomainKind::FlatDisk { radius, .. } | DomainKind::SphericalCap { radius, .. } => {
                radius - c.rho
            }
        }
    }

    /// Nodes farther than half the inradius from the boundary.
    pub fn inner_half(&self) -> Vec<usize> {
        let limit = 0.5 * self.domain.inradius();
        (0..self.len())
            .filter(|&i| self.distance_to_boundary(i) > limit + 1e-12 * limit)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid)
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<ScalarField, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> ScalarField {
        let values = vec![c; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&NodeCoords) -> f64) -> ScalarField {
        let values = grid.all_coords().iter().map(f).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<(), GeometryError> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(GeometryError::GridMismatch)
        }
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64, GeometryError> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn boundary_max(&self) -> f64 {
        self.grid.boundary().iter().map(|&i| self.values[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn boundary_min(&self) -> f64 {
        self.grid.boundary().iter().map(|&i| self.values[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Vector field in the grid's orthonormal frame. At the pole of a full polar
/// grid the components are Cartesian.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, components: Vec<[f64; 2]>) -> Result<VectorField, GeometryError> {
        if components.len() != grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: grid.len(),
                got: components.len(),
            });
        }
        Ok(VectorField { grid, components })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> &[[f64; 2]] {
        &self.components
    }

    pub fn norms(&self) -> Vec<f64> {
        self.components.iter().map(|c| c[0].hypot(c[1])).collect()
    }

    pub fn scale(&self, factors: &[f64]) -> VectorField {
        let components =
            self.components.iter().zip(factors).map(|(c, f)| [c[0] * f, c[1] * f]).collect();
        VectorField { grid: self.grid.clone(), components }
    }
}

/// One-sided derivative at `v[0]` looking along increasing index with spacing `h`.
fn one_sided(v: &[f64], h: f64) -> f64 {
    if v.len() >= 4 {
        (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h)
    } else {
        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    }
}

/// Derivative of a uniformly sampled line at index `i`.
fn line_derivative(v: &[f64], i: usize, h: f64) -> f64 {
    let n = v.len();
    let take = n.min(4);
    if i == 0 {
        one_sided(&v[..take], h)
    } else if i == n - 1 {
        let rev: Vec<f64> = v[n - take..].iter().rev().copied().collect();
        -one_sided(&rev, h)
    } else {
        (v[i + 1] - v[i - 1]) / (2.0 * h)
    }
}

/// Pole correction `J(h) / int_0^h J`, the flux-to-divergence factor.
fn pole_factor(measure: Measure, dim: usize, h: f64) -> f64 {
    measure.density(dim, h) / measure.integral(dim, 0.0, h)
}

pub fn gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid.clone();
    let v = &u.values;
    let mut out = vec![[0.0; 2]; grid.len()];
    match grid.layout {
        Layout::Line { n, h, radial, .. } => {
            for (i, o) in out.iter_mut().enumerate() {
                o[0] = if radial && i == 0 { 0.0 } else { line_derivative(v, i, h) };
            }
            debug_assert_eq!(n, v.len());
        }
        Layout::Tensor { nx, ny, hx, hy, .. } => {
            let mut row = vec![0.0; nx];
            let mut col = vec![0.0; ny];
            for j in 0..ny {
                row.copy_from_slice(&v[j * nx..(j + 1) * nx]);
                for i in 0..nx {
                    out[j * nx + i][0] = line_derivative(&row, i, hx);
                }
            }
            for i in 0..nx {
                for (j, c) in col.iter_mut().enumerate() {
                    *c = v[j * nx + i];
                }
                for j in 0..ny {
                    out[j * nx + i][1] = line_derivative(&col, j, hy);
                }
            }
        }
        Layout::Polar { n_rho, n_theta, d_rho, d_theta } => {
            out = polar_gradient(&grid, v, n_rho, n_theta, d_rho, d_theta);
        }
    }
    VectorField { grid, components: out }
}

pub fn divergence(x: &VectorField) -> ScalarField {
    let grid = x.grid.clone();
    let c = &x.components;
    let dim = grid.dim();
    let measure = grid.domain.measure();
    let mut out = vec![0.0; grid.len()];
    match grid.layout {
        Layout::Line { h, radial, .. } => {
            let xs: Vec<f64> = c.iter().map(|v| v[0]).collect();
            for (i, o) in out.iter_mut().enumerate() {
                *o = if radial && i == 0 {
                    xs[1] * pole_factor(measure, dim, grid.coords[1].rho)
                } else {
                    let rho = grid.coords[i].rho;
                    let lift = if radial { measure.log_derivative(dim, rho) * xs[i] } else { 0.0 };
                    line_derivative(&xs, i, h) + lift
                };
            }
        }
        Layout::Tensor { nx, ny, hx, hy, .. } => {
            let mut row = vec![0.0; nx];
            let mut col = vec![0.0; ny];
            for j in 0..ny {
                for (i, r) in row.iter_mut().enumerate() {
                    *r = c[j * nx + i][0];
                }
                for i in 0..nx {
                    out[j * nx + i] += line_derivative(&row, i, hx);
                }
            }
            for i in 0..nx {
                for (j, r) in col.iter_mut().enumerate() {
                    *r = c[j * nx + i][1];
                }
                for j in 0..ny {
                    out[j * nx + i] += line_derivative(&col, j, hy);
                }
            }
        }
        Layout::Polar { n_rho, n_theta, d_rho, d_theta } => {
            out = polar_divergence(&grid, c, n_rho, n_theta, d_rho, d_theta);
        }
    }
    ScalarField { grid, values: out }
}

/// Second derivative of a uniformly sampled line at index `i`.
fn line_second(v: &[f64], i: usize, h: f64) -> f64 {
    let n = v.len();
    let h2 = h * h;
    if i == 0 || i == n - 1 {
        let w: Vec<f64> = if i == 0 {
            v[..n.min(4)].to_vec()
        } else {
            v[n - n.min(4)..].iter().rev().copied().collect()
        };
        if w.len() >= 4 {
            (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / h2
        } else {
            (w[0] - 2.0 * w[1] + w[2]) / h2
        }
    } else {
        (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2
    }
}

/// Covariant Hessian in the orthonormal frame, stored as `[h11, h12, h22]`.
///
/// On radial line grids of dimension `n`, `h22` is the tangential eigenvalue,
/// of multiplicity `n - 1`. At the pole of a full polar grid the frame is
/// Cartesian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    grid: Arc<Grid>,
    entries: Vec<[f64; 3]>,
}

impl Hessian {
    pub fn entries(&self) -> &[[f64; 3]] {
        &self.entries
    }

    pub fn laplacian(&self, i: usize) -> f64 {
        let [a, _, c] = self.entries[i];
        match self.grid.layout {
            Layout::Line { radial: false, .. } => a,
            Layout::Line { radial: true, .. } => a + (self.grid.dim() - 1) as f64 * c,
            _ => a + c,
        }
    }

    /// `Hess(g, g)` for a vector `g` in the same frame.
    pub fn quadratic(&self, i: usize, g: [f64; 2]) -> f64 {
        let [a, b, c] = self.entries[i];
        a * g[0] * g[0] + 2.0 * b * g[0] * g[1] + c * g[1] * g[1]
    }
}

pub fn hessian(u: &ScalarField) -> Hessian {
    let grid = u.grid.clone();
    let v = &u.values;
    let dim = grid.dim();
    let measure = grid.domain.measure();
    let mut out = vec![[0.0; 3]; grid.len()];
    match grid.layout {
        Layout::Line { h, radial, .. } => {
            for (i, o) in out.iter_mut().enumerate() {
                if radial && i == 0 {
                    let d2 = 2.0 * (v[1] - v[0]) / (h * h);
                    *o = [d2, 0.0, d2];
                } else {
                    let d1 = line_derivative(v, i, h);
                    let tangential = if radial {
                        measure.log_derivative(dim, grid.coords[i].rho) / (dim - 1) as f64 * d1
                    } else {
                        0.0
                    };
                    *o = [line_second(v, i, h), 0.0, tangential];
                }
            }
        }
        Layout::Tensor { nx, ny, hx, hy, .. } => {
            let g = gradient(u);
            let mut line = vec![0.0; nx.max(ny)];
            for j in 0..ny {
                for i in 0..nx {
                    line[i] = v[j * nx + i];
                }
                for i in 0..nx {
                    out[j * nx + i][0] = line_second(&line[..nx], i, hx);
                }
            }
            for i in 0..nx {
                for j in 0..ny {
                    line[j] = v[j * nx + i];
                }
                for j in 0..ny {
                    out[j * nx + i][2] = line_second(&line[..ny], j, hy);
                }
                for j in 0..ny {
                    line[j] = g.components[j * nx + i][0];
                }
                for j in 0..ny {
                    out[j * nx + i][1] = line_derivative(&line[..ny], j, hy);
                }
            }
        }
        Layout::Polar { n_rho, n_theta, d_rho, d_theta } => {
            out = polar_hessian(&grid, v, n_rho, n_theta, d_rho, d_theta);
        }
    }
    Hessian { grid, entries: out }
}


/// First derivative on a uniform line at `i`, fourth order where the stencil fits.
fn d1_high(v: &[f64], i: usize, h: f64) -> f64 {
    if i >= 2 && i + 2 < v.len() {
        (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h)
    } else {
        line_derivative(v, i, h)
    }
}

/// Second derivative on a uniform line at `i`, fourth order where the stencil fits.
fn d2_high(v: &[f64], i: usize, h: f64) -> f64 {
    if i >= 2 && i + 2 < v.len() {
        (-v[i + 2] + 16.0 * v[i + 1] - 30.0 * v[i] + 16.0 * v[i - 1] - v[i - 2]) / (12.0 * h * h)
    } else {
        line_second(v, i, h)
    }
}

/// Periodic fourth-order angular derivatives `(d/dtheta, d2/dtheta2)` on ring `i`.
fn ring_derivatives(ring: &[f64], j: usize, dt: f64) -> (f64, f64) {
    let n = ring.len();
    let at = |k: isize| ring[(j as isize + k).rem_euclid(n as isize) as usize];
    let d1 = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * dt);
    let d2 = (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * dt * dt);
    (d1, d2)
}

/// Samples along the diameter through angle index `j`: position `n_rho - 1 + k`
/// holds the value at signed geodesic distance `k * d_rho`. `odd` flips the
/// sign on the far half, for radial vector components.
fn diameter(
    value: impl Fn(usize) -> f64,
    pole: f64,
    j: usize,
    n_rho: usize,
    n_theta: usize,
    odd: bool,
) -> Vec<f64> {
    let idx = |i: usize, j: usize| 1 + (i - 1) * n_theta + (j % n_theta);
    let opposite = j + n_theta / 2;
    let sign = if odd { -1.0 } else { 1.0 };
    let mut line = Vec::with_capacity(2 * n_rho - 1);
    for i in (1..n_rho).rev() {
        line.push(sign * value(idx(i, opposite)));
    }
    line.push(pole);
    for i in 1..n_rho {
        line.push(value(idx(i, j)));
    }
    line
}

fn polar_pole_modes(v: &[f64], n_theta: usize, d_theta: f64) -> [f64; 5] {
    let mut m = [0.0; 5];
    for j in 0..n_theta {
        let x = v[1 + j];
        let t = j as f64 * d_theta;
        m[0] += x;
        m[1] += x * t.cos();
        m[2] += x * t.sin();
        m[3] += x * (2.0 * t).cos();
        m[4] += x * (2.0 * t).sin();
    }
    let nt = n_theta as f64;
    [m[0] / nt, 2.0 * m[1] / nt, 2.0 * m[2] / nt, 2.0 * m[3] / nt, 2.0 * m[4] / nt]
}

fn polar_gradient(
    grid: &Grid,
    v: &[f64],
    n_rho: usize,
    n_theta: usize,
    d_rho: f64,
    d_theta: f64,
) -> Vec<[f64; 2]> {
    let measure = grid.domain.measure();
    let mut out = vec![[0.0; 2]; grid.len()];
    let modes = polar_pole_modes(v, n_theta, d_theta);
    let h1 = grid.coords[1].rho;
    out[0] = [modes[1] / h1, modes[2] / h1];
    for j in 0..n_theta {
        let line = diameter(|k| v[k], v[0], j, n_rho, n_theta, false);
        for i in 1..n_rho {
            let node = 1 + (i - 1) * n_theta + j;
            let ring = &v[1 + (i - 1) * n_theta..1 + i * n_theta];
            let (dt, _) = ring_derivatives(ring, j, d_theta);
            let lam = measure.lambda(grid.coords[node].rho);
            out[node] = [d1_high(&line, n_rho - 1 + i, d_rho), dt / lam];
        }
    }
    out
}

fn polar_divergence(
    grid: &Grid,
    c: &[[f64; 2]],
    n_rho: usize,
    n_theta: usize,
    d_rho: f64,
    d_theta: f64,
) -> Vec<f64> {
    let measure = grid.domain.measure();
    let mut out = vec![0.0; grid.len()];
    let h1 = grid.coords[1].rho;
    let mean: f64 = (0..n_theta).map(|j| c[1 + j][0]).sum::<f64>() / n_theta as f64;
    out[0] = mean * pole_factor(measure, 2, h1);
    let x_theta: Vec<f64> = c.iter().map(|x| x[1]).collect();
    for j in 0..n_theta {
        let t = j as f64 * d_theta;
        let pole = c[0][0] * t.cos() + c[0][1] * t.sin();
        let line = diameter(|k| c[k][0], pole, j, n_rho, n_theta, true);
        for i in 1..n_rho {
            let node = 1 + (i - 1) * n_theta + j;
            let rho = grid.coords[node].rho;
            let ring = &x_theta[1 + (i - 1) * n_theta..1 + i * n_theta];
            let (dt, _) = ring_derivatives(ring, j, d_theta);
            out[node] = d1_high(&line, n_rho - 1 + i, d_rho)
                + measure.log_derivative(2, rho) * c[node][0]
                + dt / measure.lambda(rho);
        }
    }
    out
}

fn polar_hessian(
    grid: &Grid,
    v: &[f64],
    n_rho: usize,
    n_theta: usize,
    d_rho: f64,
    d_theta: f64,
) -> Vec<[f64; 3]> {
    let measure = grid.domain.measure();
    let mut out = vec![[0.0; 3]; grid.len()];
    let modes = polar_pole_modes(v, n_theta, d_theta);
    let h2 = grid.coords[1].rho.powi(2);
    let trace = 4.0 * (modes[0] - v[0]) / h2;
    let diff = 4.0 * modes[3] / h2;
    out[0] = [0.5 * (trace + diff), 2.0 * modes[4] / h2, 0.5 * (trace - diff)];
    // rotational derivative, a smooth function on the whole domain
    let mut u_t = vec![0.0; grid.len()];
    let mut u_tt = vec![0.0; grid.len()];
    for i in 1..n_rho {
        let ring = &v[1 + (i - 1) * n_theta..1 + i * n_theta];
        for j in 0..n_theta {
            let (a, b) = ring_derivatives(ring, j, d_theta);
            u_t[1 + (i - 1) * n_theta + j] = a;
            u_tt[1 + (i - 1) * n_theta + j] = b;
        }
    }
    for j in 0..n_theta {
        let line = diameter(|k| v[k], v[0], j, n_rho, n_theta, false);
        let line_t = diameter(|k| u_t[k], 0.0, j, n_rho, n_theta, false);
        for i in 1..n_rho {
            let node = 1 + (i - 1) * n_theta + j;
            let rho = grid.coords[node].rho;
            let lam = measure.lambda(rho);
            let ll = measure.log_derivative(2, rho);
            let k = n_rho - 1 + i;
            let u_r = d1_high(&line, k, d_rho);
            let u_rr = d2_high(&line, k, d_rho);
            let u_rt = d1_high(&line_t, k, d_rho);
            out[node] = [
                u_rr,
                (u_rt - ll * u_t[node]) / lam,
                u_tt[node] / (lam * lam) + ll * u_r,
            ];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurvature {
    /// Mean curvature of the smooth boundary pieces, outward normal.
    pub value: f64,
    /// Set for rectangles: corners are excluded from the value.
    pub corners_excluded: bool,
    pub note: Option<String>,
}

pub fn boundary_mean_curvature(domain: &Domain) -> BoundaryCurvature {
    let k = (domain.dim - 1) as f64;
    match domain.kind {
        DomainKind::Interval { .. } => BoundaryCurvature {
            value: 0.0,
            corners_excluded: false,
            note: Some("zero-dimensional boundary; curvature not applicable".into()),
        },
        DomainKind::Rectangle { .. } => BoundaryCurvature {
            value: 0.0,
            corners_excluded: true,
            note: Some("flat faces; the four corners are not C2 and are excluded".into()),
        },
        DomainKind::FlatDisk { radius, .. } => {
            BoundaryCurvature { value: k / radius, corners_excluded: false, note: None }
        }
        DomainKind::SphericalCap { radius, .. } => BoundaryCurvature {
            value: k * radius.cos() / radius.sin(),
            corners_excluded: false,
            note: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(grid: &Arc<Grid>, f: impl Fn(&NodeCoords) -> f64) -> ScalarField {
        ScalarField::from_fn(grid.clone(), f)
    }

    #[test]
    fn interval_grid_layout() {
        let g = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), 5).unwrap();
        let xs: Vec<f64> = g.all_coords().iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.boundary(), &[0, 4]);
        assert_eq!(g.interior(), &[1, 2, 3]);
        assert!((g.volumes().iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn radial_grids() {
        let g = build_grid(&Domain::flat_disk(1.0, 2).unwrap(), 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.boundary(), &[10]);
        assert_eq!(g.coords(0).rho, 0.0);
        assert!((g.volumes().iter().sum::<f64>() - PI).abs() < 1e-13);
        let cap = build_grid(&Domain::spherical_cap(1.2, 2).unwrap(), 101).unwrap();
        assert_eq!(cap.len(), 101);
        assert_eq!(cap.coords(100).rho, 1.2);
        let area = 2.0 * PI * (1.0 - 1.2f64.cos());
        assert!((cap.volumes().iter().sum::<f64>() - area).abs() < 1e-13);
        let ball3 = build_grid(&Domain::spherical_cap(0.9, 3).unwrap(), 9).unwrap();
        assert!((ball3.volumes().iter().sum::<f64>() - Domain::spherical_cap(0.9, 3).unwrap().volume()).abs() < 1e-13);
    }

    #[test]
    fn rejects_small_resolution_and_bad_caps() {
        assert!(build_grid(&Domain::interval(0.0, 1.0).unwrap(), 2).is_err());
        assert!(Domain::spherical_cap(PI, 2).is_err());
        assert!(Domain::flat_disk_polar(1.0).is_ok());
        let hemi = Domain::spherical_cap(PI / 2.0, 2).unwrap();
        assert!(!hemi.ncm_declared);
        assert!(!hemi.with_ncm(true).ncm_declared);
        assert!(Domain::spherical_cap(1.2, 2).unwrap().ncm_declared);
    }

    #[test]
    fn polar_and_tensor_volumes() {
        let g = build_grid(&Domain::flat_disk_polar(1.0).unwrap(), 9).unwrap();
        assert_eq!(g.len(), 1 + 8 * 32);
        assert!((g.volumes().iter().sum::<f64>() - PI).abs() < 1e-12);
        assert!((g.boundary_weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        let r = build_grid(&Domain::rectangle(2.0, 1.0).unwrap(), 7).unwrap();
        assert!((r.volumes().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((r.boundary_weights().iter().sum::<f64>() - 6.0).abs() < 1e-14);
        assert_eq!(r.boundary().len(), 24);
    }

    #[test]
    fn linear_fields_are_exact() {
        let g = build_grid(&Domain::interval(-1.0, 2.0).unwrap(), 13).unwrap();
        let u = field(&g, |c| 3.0 * c.x - 1.0);
        assert!(gradient(&u).components().iter().all(|c| (c[0] - 3.0).abs() < 1e-13));
        let k = VectorField::new(g.clone(), vec![[2.5, 0.0]; g.len()]).unwrap();
        assert!(divergence(&k).values().iter().all(|v| v.abs() < 1e-13));

        let r = build_grid(&Domain::rectangle(1.0, 2.0).unwrap(), 9).unwrap();
        let u = field(&r, |c| 0.5 * c.x - 2.0 * c.y);
        for comp in gradient(&u).components() {
            assert!((comp[0] - 0.5).abs() < 1e-13 && (comp[1] + 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cap_divergence_matches_expansion() {
        let d = Domain::spherical_cap(1.2, 2).unwrap();
        let g = build_grid(&d, 801).unwrap();
        let f = |r: f64| r.sin() * r.exp() * 0.3;
        let df = |r: f64| 0.3 * r.exp() * (r.cos() + r.sin());
        let x = VectorField::new(g.clone(), g.all_coords().iter().map(|c| [f(c.rho), 0.0]).collect())
            .unwrap();
        let div = divergence(&x);
        for i in (1..g.len()).step_by(37) {
            let r = g.coords(i).rho;
            let exact = df(r) + r.cos() / r.sin() * f(r);
            assert!((div.values()[i] - exact).abs() < 1e-6, "rho={r}");
        }
    }

    fn rates(errs: &[f64]) -> Vec<f64> {
        errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }

    #[test]
    fn gradient_and_divergence_refine_at_second_order() {
        let (mut eg, mut ed) = (Vec::new(), Vec::new());
        for n in [81, 161, 321] {
            let g = build_grid(&Domain::flat_disk(1.0, 3).unwrap(), n).unwrap();
            let u = field(&g, |c| (1.3 * c.rho * c.rho).cos());
            let du = gradient(&u);
            let x = VectorField::new(
                g.clone(),
                g.all_coords().iter().map(|c| [c.rho * (0.7 * c.rho * c.rho).exp(), 0.0]).collect(),
            )
            .unwrap();
            let div = divergence(&x);
            let (mut a, mut b): (f64, f64) = (0.0, 0.0);
            for i in 0..g.len() {
                let r = g.coords(i).rho;
                a = a.max((du.components()[i][0] + 2.6 * r * (1.3 * r * r).sin()).abs());
                // (1/r^2)(r^2 X)' with the smooth field X = r e^{0.7 r^2}
                let exact = (0.7 * r * r).exp() * (3.0 + 1.4 * r * r);
                b = b.max((div.values()[i] - exact).abs());
            }
            eg.push(a);
            ed.push(b);
        }
        assert!(rates(&eg).iter().all(|&r| r >= 1.9), "{eg:?}");
        assert!(rates(&ed).iter().all(|&r| r >= 1.9), "{ed:?}");
    }

    #[test]
    fn laplacian_refines_in_the_interior() {
        let mut errs = Vec::new();
        for n in [41, 81, 161] {
            let g = build_grid(&Domain::spherical_cap(1.2, 3).unwrap(), n).unwrap();
            let u = field(&g, |c| (0.8 * c.rho * c.rho).cos());
            let hess = hessian(&u);
            let mut e: f64 = 0.0;
            for &i in g.interior() {
                let r = g.coords(i).rho;
                let (d1, d2) = if r == 0.0 {
                    (0.0, 0.0)
                } else {
                    let a = 0.8 * r * r;
                    (-1.6 * r * a.sin(), -1.6 * a.sin() - 2.56 * r * r * a.cos())
                };
                let lap = if r == 0.0 { 0.0 } else { d2 + 2.0 * r.cos() / r.sin() * d1 };
                e = e.max((hess.laplacian(i) - lap).abs());
            }
            errs.push(e);
        }
        assert!(rates(&errs).iter().all(|&r| r >= 1.9), "{errs:?}");
    }

    #[test]
    fn polar_operators_converge() {
        let (mut el, mut eq) = (Vec::new(), Vec::new());
        for n in [17, 33, 65] {
            let d = Domain::spherical_cap_polar(1.0).unwrap();
            let g = build_polar_grid(&d, n, 4 * (n - 1)).unwrap();
            let u = field(&g, |c| c.rho * c.theta.cos() + 0.5 * c.rho * c.rho);
            let du = gradient(&u);
            let div = divergence(&du);
            let hess = hessian(&u);
            let (mut a, mut b): (f64, f64) = (0.0, 0.0);
            for &i in g.interior() {
                let c = g.coords(i);
                let (r, t) = (c.rho, c.theta);
                let (lap, quad) = if r == 0.0 {
                    // normal coordinates: u = x + (x^2 + y^2)/2 near the pole
                    (2.0, 1.0)
                } else {
                    let cot = r.cos() / r.sin();
                    let (ur, ut) = (t.cos() + r, -r * t.sin());
                    let (urr, utt, urt) = (1.0, -r * t.cos(), -t.sin());
                    let h11 = urr;
                    let h12 = (urt - cot * ut) / r.sin();
                    let h22 = utt / (r.sin() * r.sin()) + cot * ur;
                    let gt = ut / r.sin();
                    (h11 + h22, h11 * ur * ur + 2.0 * h12 * ur * gt + h22 * gt * gt)
                };
                a = a.max((div.values()[i] - lap).abs()).max((hess.laplacian(i) - lap).abs());
                b = b.max((hess.quadratic(i, du.components()[i]) - quad).abs());
            }
            el.push(a);
            eq.push(b);
        }
        assert!(rates(&el).iter().all(|&r| r >= 1.8), "{el:?}");
        assert!(rates(&eq).iter().all(|&r| r >= 1.8), "{eq:?}");
    }

    #[test]
    fn boundary_curvatures() {
        assert_eq!(boundary_mean_curvature(&Domain::flat_disk(1.0, 2).unwrap()).value, 1.0);
        let hemi = boundary_mean_curvature(&Domain::spherical_cap(PI / 2.0, 2).unwrap());
        assert!(hemi.value.abs() < 1e-15);
        let c = boundary_mean_curvature(&Domain::spherical_cap(1.2, 2).unwrap());
        assert!((c.value - 0.388_779_569_368_204_96).abs() < 1e-12);
        let r = boundary_mean_curvature(&Domain::rectangle(1.0, 1.0).unwrap());
        assert!(r.corners_excluded && r.value == 0.0);
        assert!(boundary_mean_curvature(&Domain::interval(0.0, 1.0).unwrap()).note.is_some());
    }

    #[test]
    fn cell_gradients_reproduce_linear_functions() {
        for d in [
            Domain::rectangle(1.0, 2.0).unwrap(),
            Domain::flat_disk_polar(1.0).unwrap(),
        ] {
            let g = build_grid(&d, 7).unwrap();
            let u: Vec<f64> = g.all_coords().iter().map(|c| 2.0 * c.x - c.y).collect();
            for cell in g.cells().iter().filter(|c| c.dims > 0) {
                let p = cell.gradient(&u);
                assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 5f64.sqrt()).abs() < 0.3);
            }
        }
    }

    #[test]
    fn inner_half_selection() {
        let g = build_grid(&Domain::spherical_cap(1.0, 2).unwrap(), 11).unwrap();
        assert_eq!(g.inner_half(), vec![0, 1, 2, 3, 4]);
        let i = build_grid(&Domain::interval(-1.0, 1.0).unwrap(), 9).unwrap();
        assert_eq!(i.inner_half(), vec![3, 4, 5]);
    }
}
