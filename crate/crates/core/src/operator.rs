//! Finite-dimensional operator types: Hermitian matrices, density operators,
//! projector sets, and coherent states on a truncated Fock space.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Hermiticity / idempotence tolerance for structural invariants.
pub const HERM_TOL: f64 = 1e-12;
/// Trace tolerance for density operators.
pub const TRACE_TOL: f64 = 1e-10;
/// Negative-eigenvalue tolerance for density operators.
pub const POS_TOL: f64 = 1e-10;
/// Maximum admissible missing norm when truncating a coherent state.
pub const COHERENT_TAIL_TOL: f64 = 1e-10;

/// A dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    dim: usize,
    mat: Array2<C64>,
}

impl HermitianOperator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        let (r, c) = mat.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidOperator(format!(
                "expected a square nonempty matrix, got {r} x {c}"
            )));
        }
        let defect = linalg::hermiticity_defect(&mat);
        if defect > HERM_TOL {
            return Err(Error::InvalidOperator(format!(
                "matrix is not Hermitian: defect {defect:.3e} > {HERM_TOL:.0e}"
            )));
        }
        Ok(HermitianOperator { dim: r, mat })
    }

    /// Hermitizes the input instead of rejecting a small defect; for values
    /// assembled from floating-point pipelines.
    pub fn new_hermitized(mat: Array2<C64>) -> Result<Self> {
        Self::new(linalg::hermitize(&mat))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut mat = Array2::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = C64::new(d, 0.0);
        }
        HermitianOperator {
            dim: diag.len(),
            mat,
        }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator {
            dim,
            mat: linalg::eye(dim),
        }
    }

    pub fn zero(dim: usize) -> Self {
        HermitianOperator {
            dim,
            mat: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> Array2<C64> {
        self.mat
    }

    pub fn scaled(&self, factor: f64) -> Self {
        HermitianOperator {
            dim: self.dim,
            mat: self.mat.mapv(|z| z * factor),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidOperator(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(HermitianOperator {
            dim: self.dim,
            mat: &self.mat + &other.mat,
        })
    }

    pub fn eigenvalues(&self) -> Array1<f64> {
        linalg::eigvalsh(&self.mat)
    }
}

/// A density operator: Hermitian, unit trace, non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        let op = HermitianOperator::new(mat)?;
        let tr = linalg::trace(op.mat());
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Normalization(format!(
                "density operator trace {tr} differs from 1 beyond {TRACE_TOL:.0e}"
            )));
        }
        let min = linalg::min_eigval(op.mat());
        if min < -POS_TOL {
            return Err(Error::InvalidOperator(format!(
                "density operator has eigenvalue {min:.3e} below -{POS_TOL:.0e}"
            )));
        }
        Ok(DensityOperator { op })
    }

    /// Hermitizes the matrix before validating.
    pub fn new_hermitized(mat: Array2<C64>) -> Result<Self> {
        Self::new(linalg::hermitize(&mat))
    }

    pub fn pure(state: &Array1<C64>) -> Result<Self> {
        let n = state.len();
        let norm2: f64 = state.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > TRACE_TOL {
            return Err(Error::Normalization(format!(
                "pure state has norm^2 {norm2}, expected 1"
            )));
        }
        let mut mat = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = state[i] * state[j].conj();
            }
        }
        Self::new(mat)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut mat = Array2::zeros((dim, dim));
        for i in 0..dim {
            mat[(i, i)] = C64::new(1.0 / dim as f64, 0.0);
        }
        DensityOperator {
            op: HermitianOperator { dim, mat },
        }
    }

    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::from_real_diag(probs).into_mat())
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn mat(&self) -> &Array2<C64> {
        self.op.mat()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigval(self.op.mat())
    }
}

/// A complete orthogonal set of Hermitian projectors with integer labels.
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    dim: usize,
    projectors: Vec<HermitianOperator>,
    labels: Vec<u32>,
}

impl ProjectorSet {
    pub fn new(projectors: Vec<HermitianOperator>, labels: Vec<u32>) -> Result<Self> {
        if projectors.is_empty() || projectors.len() != labels.len() {
            return Err(Error::InvalidOperator(
                "projector and label counts must match and be nonempty".into(),
            ));
        }
        let dim = projectors[0].dim();
        for p in &projectors {
            if p.dim() != dim {
                return Err(Error::InvalidOperator("projector dimensions differ".into()));
            }
        }
        {
            let mut sorted = labels.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != labels.len() {
                return Err(Error::InvalidOperator("projector labels must be distinct".into()));
            }
        }
        // idempotence and pairwise orthogonality
        for (i, p) in projectors.iter().enumerate() {
            let pp = p.mat().dot(p.mat());
            let defect = (&pp - p.mat())
                .iter()
                .fold(0.0f64, |m, z| m.max(z.norm()));
            if defect > HERM_TOL {
                return Err(Error::InvalidOperator(format!(
                    "projector {i} is not idempotent: defect {defect:.3e}"
                )));
            }
            for (j, q) in projectors.iter().enumerate() {
                if i == j {
                    continue;
                }
                let pq = p.mat().dot(q.mat());
                let worst = pq.iter().fold(0.0f64, |m, z| m.max(z.norm()));
                if worst > HERM_TOL {
                    return Err(Error::InvalidOperator(format!(
                        "projectors {i} and {j} are not orthogonal: defect {worst:.3e}"
                    )));
                }
            }
        }
        // completeness
        let mut sum = Array2::<C64>::zeros((dim, dim));
        for p in &projectors {
            sum = &sum + p.mat();
        }
        let eye = linalg::eye(dim);
        let worst = (&sum - &eye).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if worst > HERM_TOL {
            return Err(Error::InvalidOperator(format!(
                "projectors do not sum to the identity: defect {worst:.3e}"
            )));
        }
        Ok(ProjectorSet {
            dim,
            projectors,
            labels,
        })
    }

    /// Rank-one projectors onto the computational basis, labels `1..=dim`.
    pub fn diagonal(dim: usize) -> Self {
        let mut projectors = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut diag = vec![0.0; dim];
            diag[i] = 1.0;
            projectors.push(HermitianOperator::from_real_diag(&diag));
        }
        ProjectorSet {
            dim,
            projectors,
            labels: (1..=dim as u32).collect(),
        }
    }

    /// The set `{U P_n U^dagger}` for a unitary `u`.
    pub fn conjugated(&self, u: &Array2<C64>) -> Result<Self> {
        let ud = linalg::dagger(u);
        let projectors = self
            .projectors
            .iter()
            .map(|p| HermitianOperator::new_hermitized(u.dot(p.mat()).dot(&ud)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(projectors, self.labels.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[HermitianOperator] {
        &self.projectors
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &HermitianOperator)> {
        self.labels.iter().copied().zip(self.projectors.iter())
    }
}

/// Fock-space cutoff for the quantized-mode constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockTruncation {
    n_max: usize,
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Truncation(format!(
                "Fock cutoff must be at least 2, got {n_max}"
            )));
        }
        Ok(FockTruncation { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }
}

/// The pointer observable `g * sum_n n P_n`.
pub fn pointer_observable(ps: &ProjectorSet, g: f64) -> HermitianOperator {
    let dim = ps.dim();
    let mut mat = Array2::<C64>::zeros((dim, dim));
    for (label, p) in ps.iter() {
        let w = g * label as f64;
        mat = &mat + &p.mat().mapv(|z| z * w);
    }
    HermitianOperator { dim, mat }
}

/// Normalized coherent state centred at `(x1, p1)` in the truncated Fock
/// basis: the eigenstate of `x + i p` with eigenvalue `x1 + i p1`.
///
/// The Fock amplitudes are `c_n = e^{-|a|^2/2} a^n / sqrt(n!)` with
/// `a = (x1 + i p1) / sqrt(2)`. Fails if the mass beyond the cutoff exceeds
/// [`COHERENT_TAIL_TOL`].
pub fn coherent_state(x1: f64, p1: f64, trunc: FockTruncation) -> Result<Array1<C64>> {
    let n = trunc.n_max();
    let alpha = C64::new(x1, p1) / 2.0f64.sqrt();
    let mut c = Array1::zeros(n);
    c[0] = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 1..n {
        c[k] = c[k - 1] * alpha / (k as f64).sqrt();
    }
    let captured: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let tail = 1.0 - captured;
    if tail > COHERENT_TAIL_TOL {
        return Err(Error::Truncation(format!(
            "coherent state at ({x1}, {p1}) keeps mass {tail:.3e} above the \
             cutoff {n}; enlarge n_max"
        )));
    }
    let norm = captured.sqrt();
    Ok(c.mapv(|z| z / norm))
}
