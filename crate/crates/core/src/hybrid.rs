//! The hybrid state: a Hermitian-operator-valued field over the phase-space
//! grid. Pointwise trace gives the classical distribution, the phase-space
//! quadrature gives the quantum density operator, and the pointwise ratio
//! gives conditional quantum states.

use ndarray::{Array2, Array4};

use crate::error::{Error, Result};
use crate::grid::{integrate_values, Kahan, PhaseGrid, ScalarField};
use crate::linalg;
use crate::operator::{DensityOperator, HermitianOperator};
use crate::poly::PhasePoly;
use crate::C64;

/// Pointwise Hermiticity tolerance of the matrix field.
pub const FIELD_HERM_TOL: f64 = 1e-10;
/// Tolerance on `integral of trace = 1`.
pub const FIELD_NORM_TOL: f64 = 1e-8;
/// Non-negativity diagnostic tolerance (violations are reported, not fatal).
pub const FIELD_POS_TOL: f64 = 1e-8;
/// Classical densities below this cannot condition a quantum state.
pub const COND_EPS: f64 = 1e-12;

/// Phase-space-dependent density operator. Data layout is
/// `(dim, dim, n_x, n_p)`: each matrix entry is a contiguous grid plane.
#[derive(Debug, Clone)]
pub struct HybridDensity {
    grid: PhaseGrid,
    dim: usize,
    data: Array4<C64>,
}

impl HybridDensity {
    /// Validates Hermiticity per grid point and total normalization.
    pub fn new(grid: PhaseGrid, dim: usize, data: Array4<C64>) -> Result<Self> {
        let expect = (dim, dim, grid.n_x, grid.n_p);
        if data.dim() != expect {
            return Err(Error::InvalidOperator(format!(
                "hybrid density shape {:?} does not match {:?}",
                data.dim(),
                expect
            )));
        }
        let h = HybridDensity { grid, dim, data };
        let defect = h.hermiticity_defect();
        if defect > FIELD_HERM_TOL {
            return Err(Error::InvalidOperator(format!(
                "hybrid density pointwise Hermiticity defect {defect:.3e} > {FIELD_HERM_TOL:.0e}"
            )));
        }
        let norm = h.total_norm();
        if (norm - 1.0).abs() > FIELD_NORM_TOL {
            return Err(Error::Normalization(format!(
                "hybrid density integrates to {norm}, expected 1 within {FIELD_NORM_TOL:.0e}"
            )));
        }
        Ok(h)
    }

    /// No validation; for integrator internals where the invariants are
    /// monitored separately.
    pub(crate) fn new_unchecked(grid: PhaseGrid, dim: usize, data: Array4<C64>) -> Self {
        HybridDensity { grid, dim, data }
    }

    pub fn grid(&self) -> PhaseGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut Array4<C64> {
        &mut self.data
    }

    /// The matrix at one grid point.
    pub fn point_matrix(&self, i: usize, j: usize) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for u in 0..self.dim {
            for v in 0..self.dim {
                m[(u, v)] = self.data[(u, v, i, j)];
            }
        }
        m
    }

    /// `integral of trace` over phase space.
    pub fn total_norm(&self) -> f64 {
        let cell = self.grid.dx() * self.grid.dp();
        let mut acc = Kahan::new();
        for u in 0..self.dim {
            for z in self.data.slice(ndarray::s![u, u, .., ..]).iter() {
                acc.add(z.re);
            }
        }
        acc.sum() * cell
    }

    /// Largest pointwise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for u in 0..self.dim {
            for v in u..self.dim {
                let a = self.data.slice(ndarray::s![u, v, .., ..]);
                let b = self.data.slice(ndarray::s![v, u, .., ..]);
                for (za, zb) in a.iter().zip(b.iter()) {
                    worst = worst.max((za - zb.conj()).norm());
                }
            }
        }
        worst
    }

    /// Smallest eigenvalue of the matrix field over the whole grid; this is
    /// the non-negativity diagnostic, reported rather than enforced.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.grid.n_x {
            for j in 0..self.grid.n_p {
                let m = self.point_matrix(i, j);
                min = min.min(linalg::min_eigval(&m));
            }
        }
        min
    }

    /// Pointwise trace: the classical phase-space distribution.
    pub fn classical_marginal(&self) -> ScalarField {
        let mut f = ScalarField::zeros(self.grid);
        for u in 0..self.dim {
            let plane = self.data.slice(ndarray::s![u, u, .., ..]);
            for (out, z) in f.values.iter_mut().zip(plane.iter()) {
                *out += z;
            }
        }
        f
    }

    /// Phase-space quadrature: the unconditional quantum state.
    pub fn quantum_marginal(&self) -> Result<DensityOperator> {
        let cell = self.grid.dx() * self.grid.dp();
        let mut m = Array2::zeros((self.dim, self.dim));
        for u in 0..self.dim {
            for v in 0..self.dim {
                m[(u, v)] = integrate_values(
                    &self.data.slice(ndarray::s![u, v, .., ..]).to_owned(),
                    cell,
                );
            }
        }
        DensityOperator::new_hermitized(m)
    }

    /// Conditional quantum state at the grid point nearest `(x, p)`:
    /// `rho(x, p) / rho_C(x, p)`. Undefined (an error) where the classical
    /// density is below [`COND_EPS`].
    pub fn conditional_state(&self, x: f64, p: f64) -> Result<DensityOperator> {
        let (i, j) = self.grid.nearest(x, p);
        let m = self.point_matrix(i, j);
        let tr = linalg::trace(&m).re;
        if tr <= COND_EPS {
            return Err(Error::UnsupportedPoint(format!(
                "classical density {tr:.3e} at ({x}, {p}) is below {COND_EPS:.0e}; \
                 the conditional state is undefined there"
            )));
        }
        DensityOperator::new_hermitized(m.mapv(|z| z / tr))
    }

    /// `tr integral F(x,p) rho(x,p) dx dp`.
    pub fn expectation(&self, f: &HybridObservable) -> Result<f64> {
        if f.dim != self.dim || f.grid != self.grid {
            return Err(Error::InvalidOperator(
                "observable grid/dimension does not match the state".into(),
            ));
        }
        let cell = self.grid.dx() * self.grid.dp();
        let mut acc = Kahan::new();
        match &f.data {
            ObservableData::Field(field) => {
                for u in 0..self.dim {
                    for v in 0..self.dim {
                        let fp = field.slice(ndarray::s![u, v, .., ..]);
                        let rp = self.data.slice(ndarray::s![v, u, .., ..]);
                        for (a, b) in fp.iter().zip(rp.iter()) {
                            acc.add((a * b).re);
                        }
                    }
                }
            }
            ObservableData::Poly { poly, op } => {
                for i in 0..self.grid.n_x {
                    let x = self.grid.x(i);
                    for j in 0..self.grid.n_p {
                        let w = poly.eval(x, self.grid.p(j));
                        let mut tr = C64::new(0.0, 0.0);
                        for u in 0..self.dim {
                            for v in 0..self.dim {
                                tr += op[(u, v)] * self.data[(v, u, i, j)];
                            }
                        }
                        acc.add((w * tr).re);
                    }
                }
            }
        }
        Ok(acc.sum() * cell)
    }
}

/// Factorized hybrid state `rho_Q * rho_C(x, p)`.
pub fn product_state(rho_q: &DensityOperator, rho_c: &ScalarField) -> Result<HybridDensity> {
    let norm = integrate_values(&rho_c.values, rho_c.grid.dx() * rho_c.grid.dp());
    if (norm.re - 1.0).abs() > FIELD_NORM_TOL || norm.im.abs() > FIELD_NORM_TOL {
        return Err(Error::Normalization(format!(
            "classical factor integrates to {norm}, expected 1"
        )));
    }
    let mut min_val = 0.0f64;
    let mut max_imag = 0.0f64;
    for z in rho_c.values.iter() {
        min_val = min_val.min(z.re);
        max_imag = max_imag.max(z.im.abs());
    }
    if min_val < -FIELD_POS_TOL || max_imag > FIELD_HERM_TOL {
        return Err(Error::Normalization(format!(
            "classical factor must be a real non-negative density \
             (min {min_val:.3e}, max imaginary part {max_imag:.3e})"
        )));
    }
    let dim = rho_q.dim();
    let grid = rho_c.grid;
    let mut data = Array4::zeros((dim, dim, grid.n_x, grid.n_p));
    for u in 0..dim {
        for v in 0..dim {
            let w = rho_q.mat()[(u, v)];
            let mut plane = data.slice_mut(ndarray::s![u, v, .., ..]);
            for (out, z) in plane.iter_mut().zip(rho_c.values.iter()) {
                *out = w * z;
            }
        }
    }
    HybridDensity::new(grid, dim, data)
}

/// A Hermitian-operator-valued observable over the grid, either stored
/// per point or as `poly(x, p) * op` shorthand.
#[derive(Debug, Clone)]
pub struct HybridObservable {
    grid: PhaseGrid,
    dim: usize,
    data: ObservableData,
}

#[derive(Debug, Clone)]
enum ObservableData {
    Field(Array4<C64>),
    Poly { poly: PhasePoly, op: Array2<C64> },
}

impl HybridObservable {
    /// `poly(x, p) * op` with a real polynomial and Hermitian operator.
    pub fn from_poly(grid: PhaseGrid, poly: PhasePoly, op: &HermitianOperator) -> Result<Self> {
        let worst_im = poly
            .terms()
            .iter()
            .fold(0.0f64, |m, &(_, _, c)| m.max(c.im.abs()));
        if worst_im > 1e-14 * (1.0 + poly.max_coeff()) {
            return Err(Error::InvalidOperator(
                "observable polynomial must have real coefficients".into(),
            ));
        }
        Ok(HybridObservable {
            grid,
            dim: op.dim(),
            data: ObservableData::Poly {
                poly,
                op: op.mat().clone(),
            },
        })
    }

    /// Scalar observable `poly(x, p) * identity`.
    pub fn from_scalar_poly(grid: PhaseGrid, dim: usize, poly: PhasePoly) -> Result<Self> {
        Self::from_poly(grid, poly, &HermitianOperator::identity(dim))
    }

    /// Constant-in-phase-space operator observable.
    pub fn from_operator(grid: PhaseGrid, op: &HermitianOperator) -> Self {
        HybridObservable {
            grid,
            dim: op.dim(),
            data: ObservableData::Poly {
                poly: PhasePoly::constant(1.0),
                op: op.mat().clone(),
            },
        }
    }

    /// Fully general per-point matrix field; Hermiticity is validated.
    pub fn from_field(grid: PhaseGrid, dim: usize, field: Array4<C64>) -> Result<Self> {
        if field.dim() != (dim, dim, grid.n_x, grid.n_p) {
            return Err(Error::InvalidOperator("observable field shape mismatch".into()));
        }
        let mut worst = 0.0f64;
        for u in 0..dim {
            for v in u..dim {
                let a = field.slice(ndarray::s![u, v, .., ..]);
                let b = field.slice(ndarray::s![v, u, .., ..]);
                for (za, zb) in a.iter().zip(b.iter()) {
                    worst = worst.max((za - zb.conj()).norm());
                }
            }
        }
        if worst > FIELD_HERM_TOL {
            return Err(Error::InvalidOperator(format!(
                "observable field Hermiticity defect {worst:.3e}"
            )));
        }
        Ok(HybridObservable {
            grid,
            dim,
            data: ObservableData::Field(field),
        })
    }
}
