//! Uniform-grid spatial operators on `[0, L]`.
//!
//! Fields are full node vectors of length `M` (boundary nodes included, held
//! at zero). The clamped condition `u_x = 0` enters through ghost reflection
//! `u_{-1} = u_1`, `u_M = u_{M-2}`.
//!
//! All inner products use the composite trapezoid rule. With that choice the
//! stencils below are self-adjoint (biharmonic, tension) or skew-adjoint (first
//! derivative) in the discrete inner product, and the averaging/injection pair
//! of [`VolumePartition`] are exact adjoints, so the discrete energy of the
//! closed loop mirrors the continuous one term by term.

use std::f64::consts::PI;

use crate::error::{Result, RiserError};

/// Smallest node count the 5-point biharmonic stencil supports.
pub const MIN_POINTS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: usize,
    length: f64,
    dx: f64,
}

impl Grid {
    pub fn new(points: usize, length: f64) -> Result<Self> {
        if points < MIN_POINTS {
            return Err(RiserError::Grid(format!(
                "need at least {MIN_POINTS} nodes, got {points}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(RiserError::Grid(format!("length must be > 0, got {length}")));
        }
        Ok(Self::new_unchecked(points, length))
    }

    /// Skips the stencil-support check; only for sampling on tiny grids.
    pub(crate) fn new_unchecked(points: usize, length: f64) -> Self {
        Self {
            points,
            length,
            dx: length / (points - 1) as f64,
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node coordinate; the last node is pinned to `L` exactly.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.length
        } else {
            i as f64 * self.dx
        }
    }

    /// Composite trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.points - 1
    }

    fn check(&self, field: &[f64]) -> Result<()> {
        check_len(field, self.points)
    }
}

fn check_len(field: &[f64], expected: usize) -> Result<()> {
    if field.len() != expected {
        return Err(RiserError::LengthMismatch {
            expected,
            actual: field.len(),
        });
    }
    Ok(())
}

/// `N` equal volumes `J_k = [(k−1)L/N, kL/N)` (the last one closed at `L`).
///
/// Each volume stores the exact integrals of the node hat functions over it,
/// so `ū_k = (1/h) Σ_i c_{k,i} u_i` is the exact mean of the piecewise-linear
/// interpolant. Nodes whose hat straddles a volume boundary are split
/// proportionally between the two volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumePartition {
    volumes: usize,
    length: f64,
    h: f64,
    weights: Vec<Vec<(usize, f64)>>,
}

impl VolumePartition {
    pub fn new(volumes: usize, grid: &Grid) -> Result<Self> {
        let cells = grid.points() - 1;
        if volumes == 0 {
            return Err(RiserError::InvalidScenario(
                "volume count must be positive".into(),
            ));
        }
        if volumes > cells {
            return Err(RiserError::VolumesFinerThanGrid { volumes, cells });
        }
        let length = grid.length();
        let bounds: Vec<f64> = (0..=volumes)
            .map(|k| {
                if k == volumes {
                    length
                } else {
                    k as f64 * length / volumes as f64
                }
            })
            .collect();
        let dx = grid.dx();
        let weights = bounds
            .windows(2)
            .map(|w| hat_integrals(grid, w[0], w[1], dx))
            .collect();
        Ok(Self {
            volumes,
            length,
            h: length / volumes as f64,
            weights,
        })
    }

    pub fn volumes(&self) -> usize {
        self.volumes
    }

    /// Volume width `h = L / N`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = k as f64 * self.length / self.volumes as f64;
        let hi = if k + 1 == self.volumes {
            self.length
        } else {
            (k + 1) as f64 * self.length / self.volumes as f64
        };
        (lo, hi)
    }

    /// `(node, ∫_{J_k} hat_node)` pairs for volume `k`.
    pub fn volume_weights(&self, k: usize) -> &[(usize, f64)] {
        &self.weights[k]
    }
}

fn hat_integrals(grid: &Grid, lo: f64, hi: f64, dx: f64) -> Vec<(usize, f64)> {
    let cells = grid.points() - 1;
    let first = ((lo / dx).floor() as usize).min(cells - 1);
    let last = ((hi / dx).ceil() as usize).clamp(first + 1, cells);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(last - first + 1);
    let mut push = |node: usize, w: f64| match out.last_mut() {
        Some((n, acc)) if *n == node => *acc += w,
        _ => out.push((node, w)),
    };
    for c in first..last {
        let (xl, xr) = (grid.x(c), grid.x(c + 1));
        let a = lo.max(xl);
        let b = hi.min(xr);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let span = b - a;
        let width = xr - xl;
        push(c, span * (xr - mid) / width);
        push(c + 1, span * (mid - xl) / width);
    }
    out.retain(|&(_, w)| w != 0.0);
    out
}

/// Interior 5-point fourth difference with clamped ghosts; zero at the
/// boundary nodes.
pub fn biharmonic_apply(u: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check(u)?;
    let m = grid.points();
    let inv = 1.0 / grid.dx().powi(4);
    let ghost = |j: isize| -> f64 {
        if j < 0 {
            u[(-j) as usize]
        } else if j as usize >= m {
            u[2 * (m - 1) - j as usize]
        } else {
            u[j as usize]
        }
    };
    let mut out = vec![0.0; m];
    for i in grid.interior() {
        let j = i as isize;
        out[i] = (ghost(j - 2) - 4.0 * ghost(j - 1) + 6.0 * u[i] - 4.0 * ghost(j + 1)
            + ghost(j + 2))
            * inv;
    }
    Ok(out)
}

/// Flux-form `[a u_x]_x` with `a_half[i] = a(x_{i+1/2})`; zero at the boundary nodes.
pub fn tension_apply(a_half: &[f64], u: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check(u)?;
    check_len(a_half, grid.points() - 1)?;
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut out = vec![0.0; grid.points()];
    for i in grid.interior() {
        out[i] = (a_half[i] * (u[i + 1] - u[i]) - a_half[i - 1] * (u[i] - u[i - 1])) * inv;
    }
    Ok(out)
}

/// Central difference on interior nodes; zero at the boundary nodes.
pub fn first_derivative(v: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check(v)?;
    let inv = 0.5 / grid.dx();
    let mut out = vec![0.0; grid.points()];
    for i in grid.interior() {
        out[i] = (v[i + 1] - v[i - 1]) * inv;
    }
    Ok(out)
}

/// Second difference on every node, ghosts included: `w_0 = 2u_1/dx²` at a
/// clamped end. `Σ trapezoid(w²)` equals `(biharmonic(u), u)`.
pub fn second_difference(u: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check(u)?;
    let m = grid.points();
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut out = vec![0.0; m];
    out[0] = (2.0 * u[1] - 2.0 * u[0]) * inv;
    out[m - 1] = (2.0 * u[m - 2] - 2.0 * u[m - 1]) * inv;
    for i in grid.interior() {
        out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv;
    }
    Ok(out)
}

/// Trapezoid quadrature of `f·g` over `[0, L]`.
pub fn inner_product(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    grid.check(f)?;
    grid.check(g)?;
    Ok(f.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (a, b))| grid.weight(i) * a * b)
        .sum())
}

pub fn norm_sq(f: &[f64], grid: &Grid) -> Result<f64> {
    inner_product(f, f, grid)
}

/// `∫ a u_x²` with cell-wise forward differences and the midpoint rule;
/// equals `−(tension_apply(a, u), u)` for fields vanishing at the ends.
pub fn tension_energy(a_half: &[f64], u: &[f64], grid: &Grid) -> Result<f64> {
    grid.check(u)?;
    check_len(a_half, grid.points() - 1)?;
    let dx = grid.dx();
    Ok(u.windows(2)
        .zip(a_half)
        .map(|(w, a)| {
            let d = w[1] - w[0];
            a * d * d / dx
        })
        .sum())
}

/// `‖u_x‖²` of the piecewise-linear interpolant.
pub fn gradient_norm_sq(u: &[f64], grid: &Grid) -> Result<f64> {
    grid.check(u)?;
    let dx = grid.dx();
    Ok(u.windows(2).map(|w| (w[1] - w[0]).powi(2) / dx).sum())
}

/// Volume means `ū_k = (1/h) ∫_{J_k} u`.
pub fn fv_averages(u: &[f64], part: &VolumePartition, grid: &Grid) -> Result<Vec<f64>> {
    grid.check(u)?;
    let inv_h = 1.0 / part.h();
    Ok((0..part.volumes())
        .map(|k| {
            part.volume_weights(k)
                .iter()
                .map(|&(i, c)| c * u[i])
                .sum::<f64>()
                * inv_h
        })
        .collect())
}

/// Injects volume values back onto the nodes, `Σ_k c_{k,i} ū_k / ω_i` with
/// `ω_i` the trapezoid weight. A node inside one volume receives that
/// volume's value; a node on an interior volume boundary receives the mean of
/// its neighbours. This is the adjoint of [`fv_averages`]:
/// `(fv_inject(w), u) = h Σ_k w_k ū_k`.
pub fn fv_inject(ubar: &[f64], part: &VolumePartition, grid: &Grid) -> Result<Vec<f64>> {
    check_len(ubar, part.volumes())?;
    let mut out = vec![0.0; grid.points()];
    for (k, &value) in ubar.iter().enumerate() {
        for &(i, c) in part.volume_weights(k) {
            out[i] += c * value;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= grid.weight(i);
    }
    Ok(out)
}

/// `λ₁ = (π/L)²`, the first Dirichlet eigenvalue of `−∂xx` on `(0, L)`.
pub fn first_dirichlet_eigenvalue(length: f64) -> f64 {
    (PI / length).powi(2)
}

/// Smallest eigenvalue of the Dirichlet second-difference matrix on the grid
/// interior, by inverse power iteration with a tridiagonal solve per sweep.
pub fn discrete_dirichlet_eigenvalue(grid: &Grid) -> f64 {
    let n = grid.points() - 2;
    let inv = 1.0 / (grid.dx() * grid.dx());
    let diag = 2.0 * inv;
    let off = -inv;
    let mut x = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut y = solve_symmetric_tridiagonal(diag, off, &x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        // Rayleigh quotient of the normalized iterate
        let mut num = 0.0;
        for i in 0..n {
            let mut ay = diag * y[i];
            if i > 0 {
                ay += off * y[i - 1];
            }
            if i + 1 < n {
                ay += off * y[i + 1];
            }
            num += y[i] * ay;
        }
        let converged = (num - lambda).abs() <= 1e-15 * num.abs();
        lambda = num;
        x = y;
        if converged {
            break;
        }
    }
    lambda
}

fn solve_symmetric_tridiagonal(diag: f64, off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let denom = diag - off * c[i - 1];
        c[i] = off / denom;
        d[i] = (rhs[i] - off * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
