//! Rectangular phase-space grid with spectral (FFT) calculus.
//!
//! Derivatives are Fourier derivatives, so fields must be compatible with
//! periodic extension: either decayed to numerical zero at the boundary or
//! genuinely band-limited on the grid. [`derivative`] enforces this with a
//! spectral-tail check instead of trusting the caller.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Relative spectral-tail amplitude above which a field is considered to
/// leak through the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Fraction of the upper wavenumber band inspected by the leak check.
const TAIL_BAND: f64 = 0.125;

/// Axis selector for grid operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    P,
}

/// Rectangular discretization of one classical canonical pair `(x, p)`.
///
/// Grid points are `x_i = x_min + i dx` with `dx = (x_max - x_min) / n_x`
/// (right endpoint excluded, as appropriate for periodic spectral methods),
/// and likewise for `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_x: usize,
    pub n_p: usize,
}

impl PhaseGrid {
    pub fn new(
        x_min: f64,
        x_max: f64,
        p_min: f64,
        p_max: f64,
        n_x: usize,
        n_p: usize,
    ) -> Result<Self> {
        if !(x_max > x_min && p_max > p_min) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive: x [{x_min}, {x_max}], p [{p_min}, {p_max}]"
            )));
        }
        if n_x < 16 || n_p < 16 {
            return Err(Error::InvalidGrid(format!(
                "grid sizes must be at least 16, got {n_x} x {n_p}"
            )));
        }
        let g = PhaseGrid {
            x_min,
            x_max,
            p_min,
            p_max,
            n_x,
            n_p,
        };
        let cell = g.dx() * g.dp();
        if cell > 1.0 {
            return Err(Error::InvalidGrid(format!(
                "cell area dx*dp = {cell:.3} exceeds one Planck cell; refine the grid"
            )));
        }
        Ok(g)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.n_p as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn ps(&self) -> Vec<f64> {
        (0..self.n_p).map(|j| self.p(j)).collect()
    }

    /// Index of the grid point nearest to `(x, p)`.
    pub fn nearest(&self, x: f64, p: f64) -> (usize, usize) {
        let fi = ((x - self.x_min) / self.dx()).round();
        let fj = ((p - self.p_min) / self.dp()).round();
        let i = fi.clamp(0.0, (self.n_x - 1) as f64) as usize;
        let j = fj.clamp(0.0, (self.n_p - 1) as f64) as usize;
        (i, j)
    }

    /// Angular wavenumbers in FFT order for the given axis.
    pub fn wavenumbers(&self, axis: Axis) -> Vec<f64> {
        let (n, len) = match axis {
            Axis::X => (self.n_x, self.x_max - self.x_min),
            Axis::P => (self.n_p, self.p_max - self.p_min),
        };
        let base = 2.0 * PI / len;
        (0..n)
            .map(|m| {
                if m <= n / 2 {
                    base * m as f64
                } else {
                    base * (m as f64 - n as f64)
                }
            })
            .collect()
    }
}

/// A complex scalar field over a [`PhaseGrid`]; shape is `(n_x, n_p)`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: PhaseGrid,
    pub values: Array2<C64>,
}

impl ScalarField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        ScalarField {
            grid,
            values: Array2::zeros((grid.n_x, grid.n_p)),
        }
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> C64) -> Self {
        let mut values = Array2::zeros((grid.n_x, grid.n_p));
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                values[(i, j)] = f(x, grid.p(j));
            }
        }
        ScalarField { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }
}

/// Normalized Gaussian `exp(-((x-x0)^2 + (p-p0)^2) / (2 var)) / (2 pi var)`.
///
/// Fails with [`Error::DomainTooSmall`] unless the 6-sigma disk fits inside
/// the domain.
pub fn gaussian(grid: PhaseGrid, x0: f64, p0: f64, var: f64) -> Result<ScalarField> {
    if var <= 0.0 {
        return Err(Error::InvalidGrid(format!("variance must be positive, got {var}")));
    }
    let sigma = var.sqrt();
    let margin = 6.0 * sigma;
    if x0 - margin < grid.x_min
        || x0 + margin > grid.x_max
        || p0 - margin < grid.p_min
        || p0 + margin > grid.p_max
    {
        return Err(Error::DomainTooSmall(format!(
            "gaussian at ({x0}, {p0}) with sigma {sigma} needs 6 sigma inside \
             [{}, {}] x [{}, {}]",
            grid.x_min, grid.x_max, grid.p_min, grid.p_max
        )));
    }
    let norm = 1.0 / (2.0 * PI * var);
    Ok(ScalarField::from_fn(grid, |x, p| {
        let r2 = (x - x0).powi(2) + (p - p0).powi(2);
        C64::new(norm * (-r2 / (2.0 * var)).exp(), 0.0)
    }))
}

/// Riemann-sum quadrature `dx dp * sum(values)`, with compensated summation.
pub fn integrate(f: &ScalarField) -> C64 {
    integrate_values(&f.values, f.grid.dx() * f.grid.dp())
}

pub(crate) fn integrate_values(values: &Array2<C64>, cell: f64) -> C64 {
    let (re, im) = values
        .iter()
        .fold((Kahan::new(), Kahan::new()), |(mut re, mut im), z| {
            re.add(z.re);
            im.add(z.im);
            (re, im)
        });
    C64::new(re.sum() * cell, im.sum() * cell)
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy)]
pub(crate) struct Kahan {
    s: f64,
    c: f64,
}

impl Kahan {
    pub(crate) fn new() -> Self {
        Kahan { s: 0.0, c: 0.0 }
    }

    pub(crate) fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.s + self.c
    }
}

/// Spectral derivative of `f` along `axis`, of the given order.
///
/// The field must be compatible with periodic extension; see
/// [`derivative_plane`] for the exact check.
pub fn derivative(f: &ScalarField, axis: Axis, order: usize) -> Result<ScalarField> {
    let values = derivative_plane(&f.values, f.grid, axis, order, None)?;
    Ok(ScalarField {
        grid: f.grid,
        values,
    })
}

/// Plane-level spectral derivative.
///
/// A field is accepted as periodic-compatible if either condition holds:
///
/// 1. its magnitude on the two boundary lines of the differentiated axis is
///    below [`BOUNDARY_TOL`] relative to the field scale (decayed data), or
/// 2. the top eighth of its wavenumber band is empty at the same relative
///    level (band-limited data: constants, resolved harmonics).
///
/// `reference_max` supplies the field scale for matrix-valued states whose
/// individual entry planes may be small relative to the whole state.
pub fn derivative_plane(
    values: &Array2<C64>,
    grid: PhaseGrid,
    axis: Axis,
    order: usize,
    reference_max: Option<f64>,
) -> Result<Array2<C64>> {
    assert!(order >= 1, "derivative order must be positive");
    let ks = grid.wavenumbers(axis);
    let n = ks.len();
    let (fwd, inv) = plans(n);

    // boundary magnitude along the differentiated axis
    let (n_x, n_p) = values.dim();
    let mut boundary_max = 0.0f64;
    let mut plane_max = 0.0f64;
    for i in 0..n_x {
        for j in 0..n_p {
            let a = values[(i, j)].norm();
            plane_max = plane_max.max(a);
            let on_edge = match axis {
                Axis::X => i == 0 || i == n_x - 1,
                Axis::P => j == 0 || j == n_p - 1,
            };
            if on_edge {
                boundary_max = boundary_max.max(a);
            }
        }
    }
    let ref_max = reference_max.unwrap_or(plane_max).max(plane_max);
    let decayed = boundary_max <= BOUNDARY_TOL * ref_max;

    // per-mode multiplier (i k)^order, Nyquist zeroed for odd orders
    let mut mult: Vec<C64> = ks
        .iter()
        .map(|&k| C64::new(0.0, k).powu(order as u32))
        .collect();
    if n % 2 == 0 && order % 2 == 1 {
        mult[n / 2] = C64::new(0.0, 0.0);
    }

    let lines = gather_lines(values, axis);
    // FFT layout puts the highest |k| at index n/2; the tail band is the
    // top TAIL_BAND fraction of |k|
    let tail_start = ((n / 2) as f64 * (1.0 - TAIL_BAND)).ceil() as usize;
    let results: Vec<(Vec<C64>, f64, f64)> = lines
        .into_par_iter()
        .map(|mut line| {
            fwd.process(&mut line);
            let mut total = 0.0f64;
            let mut tail = 0.0f64;
            for (m, z) in line.iter().enumerate() {
                let e = z.norm_sqr();
                total += e;
                let freq = m.min(n - m);
                if freq >= tail_start {
                    tail += e;
                }
            }
            for (z, m) in line.iter_mut().zip(mult.iter()) {
                *z *= m;
            }
            inv.process(&mut line);
            let scale = 1.0 / n as f64;
            for z in line.iter_mut() {
                *z *= scale;
            }
            (line, total, tail)
        })
        .collect();

    if !decayed {
        let total_energy: f64 = results.iter().map(|r| r.1).sum();
        let tail_energy: f64 = results.iter().map(|r| r.2).sum();
        let band_limited =
            total_energy == 0.0 || tail_energy.sqrt() <= BOUNDARY_TOL * total_energy.sqrt();
        if !band_limited {
            return Err(Error::BoundaryLeak(format!(
                "field neither decays at the {:?} boundary (relative magnitude \
                 {:.3e}) nor is band-limited (relative tail {:.3e}); limit \
                 {BOUNDARY_TOL:.0e}. Enlarge the domain or refine the grid",
                axis,
                boundary_max / ref_max.max(1e-300),
                (tail_energy / total_energy).sqrt(),
            )));
        }
    }

    Ok(scatter_lines(
        results.into_iter().map(|r| r.0).collect(),
        values.dim(),
        axis,
    ))
}

fn gather_lines(values: &Array2<C64>, axis: Axis) -> Vec<Vec<C64>> {
    let (n_x, n_p) = values.dim();
    match axis {
        Axis::P => (0..n_x)
            .map(|i| (0..n_p).map(|j| values[(i, j)]).collect())
            .collect(),
        Axis::X => (0..n_p)
            .map(|j| (0..n_x).map(|i| values[(i, j)]).collect())
            .collect(),
    }
}

fn scatter_lines(lines: Vec<Vec<C64>>, dim: (usize, usize), axis: Axis) -> Array2<C64> {
    let mut out = Array2::zeros(dim);
    match axis {
        Axis::P => {
            for (i, line) in lines.into_iter().enumerate() {
                for (j, v) in line.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
        }
        Axis::X => {
            for (j, line) in lines.into_iter().enumerate() {
                for (i, v) in line.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
        }
    }
    out
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid88() -> PhaseGrid {
        PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 128, 128).unwrap()
    }

    #[test]
    fn grid_invariants_rejected() {
        assert!(PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 8, 128).is_err());
        assert!(PhaseGrid::new(8.0, -8.0, -8.0, 8.0, 128, 128).is_err());
        // 16 points over [-40, 40]: dx*dp = 25 > 1 Planck cell
        assert!(PhaseGrid::new(-40.0, 40.0, -40.0, 40.0, 16, 16).is_err());
    }

    #[test]
    fn derivative_of_grid_harmonic_is_exact() {
        let grid = grid88();
        let k = 2.0 * PI * 3.0 / 16.0; // third harmonic of the domain
        let f = ScalarField::from_fn(grid, |x, _| C64::new((k * x).sin(), 0.0));
        let d = derivative(&f, Axis::X, 1).unwrap();
        let mut worst = 0.0f64;
        for i in 0..grid.n_x {
            let expect = k * (k * grid.x(i)).cos();
            for j in 0..grid.n_p {
                worst = worst.max((d.values[(i, j)] - C64::new(expect, 0.0)).norm());
            }
        }
        assert!(worst < 1e-10, "max error {worst}");
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let grid = grid88();
        let f = ScalarField::from_fn(grid, |_, _| C64::new(0.25, 0.0));
        let d = derivative(&f, Axis::P, 1).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn derivative_of_gaussian_matches_closed_form() {
        // d/dx exp(-(x^2+p^2)/2) = -x exp(-(x^2+p^2)/2) on [-8,8]^2, 128^2
        let grid = grid88();
        let f = ScalarField::from_fn(grid, |x, p| {
            C64::new((-(x * x + p * p) / 2.0).exp(), 0.0)
        });
        let d = derivative(&f, Axis::X, 1).unwrap();
        let mut worst = 0.0f64;
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                let p = grid.p(j);
                let expect = -x * (-(x * x + p * p) / 2.0).exp();
                worst = worst.max((d.values[(i, j)] - C64::new(expect, 0.0)).norm());
            }
        }
        assert!(worst < 1e-8, "max error {worst}");
    }

    #[test]
    fn boundary_leak_detected_for_offcenter_gaussian() {
        // centered 4 sigma from the boundary: periodization mass ~ e^{-8}
        let grid = grid88();
        let f = ScalarField::from_fn(grid, |x, p| {
            C64::new((-((x - 4.0).powi(2) + p * p) / 2.0).exp(), 0.0)
        });
        match derivative(&f, Axis::X, 1) {
            Err(Error::BoundaryLeak(_)) => {}
            other => panic!("expected BoundaryLeak, got {other:?}"),
        }
    }

    #[test]
    fn integrate_unit_gaussian() {
        let grid = grid88();
        let g = gaussian(grid, 0.0, 0.0, 1.0).unwrap();
        let total = integrate(&g);
        assert_abs_diff_eq!(total.re, 1.0, epsilon = 1e-10);
        assert!(total.im.abs() < 1e-15);
    }

    #[test]
    fn integrate_zero_field() {
        let total = integrate(&ScalarField::zeros(grid88()));
        assert_eq!(total, C64::new(0.0, 0.0));
    }

    #[test]
    fn gaussian_second_moment() {
        // int x^2 * unit gaussian = var = 1
        let grid = grid88();
        let g = gaussian(grid, 0.0, 0.0, 1.0).unwrap();
        let mut weighted = g.clone();
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                weighted.values[(i, j)] *= x * x;
            }
        }
        assert_abs_diff_eq!(integrate(&weighted).re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_mean_recovers_center() {
        let grid = PhaseGrid::new(-8.0, 14.0, -8.0, 8.0, 176, 128).unwrap();
        let g = gaussian(grid, 3.0, 0.0, 1.0).unwrap();
        let mut weighted = g.clone();
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                weighted.values[(i, j)] *= x;
            }
        }
        assert_abs_diff_eq!(integrate(&weighted).re, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_needs_six_sigma() {
        let grid = grid88();
        match gaussian(grid, 4.0, 0.0, 1.0) {
            Err(Error::DomainTooSmall(_)) => {}
            other => panic!("expected DomainTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let grid = grid88();
        let f = ScalarField::from_fn(grid, |x, p| {
            C64::new((x + 0.3 * p) * (-(x * x + p * p) / 2.0).exp(), 0.0)
        });
        let dxp = derivative(&derivative(&f, Axis::X, 1).unwrap(), Axis::P, 1).unwrap();
        let dpx = derivative(&derivative(&f, Axis::P, 1).unwrap(), Axis::X, 1).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in dxp.values.iter().zip(dpx.values.iter()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-9, "mixed partial asymmetry {worst}");
    }

    #[test]
    fn integral_of_derivative_vanishes() {
        let grid = grid88();
        let g = gaussian(grid, 0.0, 0.0, 1.0).unwrap();
        let d = derivative(&g, Axis::X, 1).unwrap();
        assert!(integrate(&d).norm() < 1e-10);
    }

    #[test]
    fn second_derivative_of_harmonic() {
        let grid = grid88();
        let k = 2.0 * PI * 2.0 / 16.0;
        let f = ScalarField::from_fn(grid, |x, _| C64::new((k * x).cos(), 0.0));
        let d2 = derivative(&f, Axis::X, 2).unwrap();
        let mut worst = 0.0f64;
        for i in 0..grid.n_x {
            let expect = -k * k * (k * grid.x(i)).cos();
            worst = worst.max((d2.values[(i, 0)] - C64::new(expect, 0.0)).norm());
        }
        assert!(worst < 1e-10);
    }
}
