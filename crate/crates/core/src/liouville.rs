//! Compiler and integrator for the canonical hybrid equation of motion.
//!
//! For a polynomial hybrid Hamiltonian `H(x, p) = sum_ab F_ab x^a p^b` (with
//! Hermitian operator coefficients `F_ab`), the equation of motion is
//!
//! ```text
//! d rho / dt = -i :H(x + (Dx + i Dp)/2, p + (Dp - i Dx)/2): rho + H.c.
//! ```
//!
//! where `Dx, Dp` are partial derivatives acting on `rho` only and the
//! colons mean every derivative is taken before any multiplicative factor is
//! applied. [`compile`] expands the substituted arguments binomially; since
//! derivatives and multiplicative factors separate under that rule, each
//! resulting term is
//!
//! ```text
//! poly(x, p) * F * (d^m/dx^m d^n/dp^n rho)   + Hermitian conjugate
//! ```
//!
//! which is exactly what [`LiouvillianTerm`] stores. Terms whose operator
//! coefficient is proportional to the identity fold the conjugate pair into
//! one real coefficient polynomial; pairs that cancel exactly (for the
//! harmonic oscillator all second-derivative terms do) are pruned, so the
//! compiled list for a scalar Hamiltonian exposes its net transport
//! structure directly.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array2, Array4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{derivative_plane, Axis, PhaseGrid};
use crate::hybrid::HybridDensity;
use crate::linalg;
use crate::operator::HermitianOperator;
use crate::poly::PhasePoly;
use crate::C64;

/// Maximum total degree of a hybrid polynomial Hamiltonian.
pub const D_MAX: u32 = 4;
/// Normalization drift budget per unit evolved time.
pub const DRIFT_PER_TIME: f64 = 1e-6;
/// Stability constant: `dt <= C_STAB / lambda` with `lambda` the spectral
/// bound of the compiled generator; equals `dt <= 0.5 min(dx,dp) / v` for a
/// pure transport term with speed `v`.
pub const C_STAB: f64 = std::f64::consts::FRAC_PI_2;

/// One monomial of the hybrid Hamiltonian: `coeff * x^x_pow * p^p_pow`.
#[derive(Debug, Clone)]
pub struct HamiltonianTerm {
    pub x_pow: u32,
    pub p_pow: u32,
    pub coeff: HermitianOperator,
}

/// Polynomial hybrid Hamiltonian with Hermitian operator coefficients.
#[derive(Debug, Clone)]
pub struct HybridPolynomialHamiltonian {
    dim: usize,
    terms: Vec<HamiltonianTerm>,
}

impl HybridPolynomialHamiltonian {
    pub fn new(dim: usize, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        for t in &terms {
            if t.coeff.dim() != dim {
                return Err(Error::InvalidOperator(format!(
                    "Hamiltonian coefficient dimension {} does not match {dim}",
                    t.coeff.dim()
                )));
            }
            if t.x_pow + t.p_pow > D_MAX {
                return Err(Error::Degree(format!(
                    "monomial x^{} p^{} exceeds the degree bound {D_MAX}",
                    t.x_pow, t.p_pow
                )));
            }
        }
        Ok(HybridPolynomialHamiltonian { dim, terms })
    }

    /// Scalar Hamiltonian `poly(x, p) * identity` acting on a `dim`-level
    /// quantum part.
    pub fn scalar(dim: usize, poly: &PhasePoly) -> Result<Self> {
        let terms = poly
            .terms()
            .iter()
            .map(|&(a, b, c)| {
                if c.im.abs() > 1e-14 * (1.0 + c.norm()) {
                    return Err(Error::InvalidOperator(
                        "scalar Hamiltonian coefficients must be real".into(),
                    ));
                }
                Ok(HamiltonianTerm {
                    x_pow: a,
                    p_pow: b,
                    coeff: HermitianOperator::identity(dim).scaled(c.re),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, terms)
    }

    /// Constant-in-phase-space quantum Hamiltonian.
    pub fn constant_operator(op: &HermitianOperator) -> Self {
        HybridPolynomialHamiltonian {
            dim: op.dim(),
            terms: vec![HamiltonianTerm {
                x_pow: 0,
                p_pow: 0,
                coeff: op.clone(),
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }
}

/// Operator part of a compiled term.
#[derive(Debug, Clone)]
pub enum TermOperator {
    /// Identity-proportional coefficient; the Hermitian-conjugate partner is
    /// already folded in, so the polynomial is real and applied one-sided.
    Scalar,
    /// General Hermitian left factor; applied as
    /// `poly * L * drho + conj(poly) * drho * L`.
    Left(Array2<C64>),
}

/// One compiled term of the hybrid generator.
#[derive(Debug, Clone)]
pub struct LiouvillianTerm {
    /// Derivative multi-index `(m, n)`: `d^m/dx^m d^n/dp^n`.
    pub deriv: (u32, u32),
    pub operator: TermOperator,
    pub poly: PhasePoly,
}

/// The compiled generator: a list of terms closed under Hermitian
/// conjugation (scalar terms carry their conjugate partner folded into the
/// real polynomial; left-operator terms apply both sides explicitly).
#[derive(Debug, Clone)]
pub struct LiouvillianTermList {
    dim: usize,
    terms: Vec<LiouvillianTerm>,
}

impl LiouvillianTermList {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[LiouvillianTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Human-readable term dump, one line per term.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if self.terms.is_empty() {
            out.push_str("(empty generator)\n");
            return out;
        }
        let mut ops: Vec<&Array2<C64>> = Vec::new();
        for t in &self.terms {
            let op_label = match &t.operator {
                TermOperator::Scalar => "scalar".to_string(),
                TermOperator::Left(l) => {
                    let idx = ops
                        .iter()
                        .position(|m| *m == l)
                        .unwrap_or_else(|| {
                            ops.push(l);
                            ops.len() - 1
                        });
                    format!("left[{idx}] (+ h.c.)")
                }
            };
            let _ = writeln!(
                out,
                "d({},{}) {} poly = {}",
                t.deriv.0, t.deriv.1, op_label, t.poly
            );
        }
        for (idx, m) in ops.iter().enumerate() {
            let _ = writeln!(out, "left[{idx}] =");
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:+.6}{:+.6}i", m[(i, j)].re, m[(i, j)].im))
                    .collect();
                let _ = writeln!(out, "  [{}]", row.join(", "));
            }
        }
        out
    }

    /// A conservative bound on the spectral radius of the generator on this
    /// grid, used for the integrator stability limit.
    pub fn spectral_bound(&self, grid: &PhaseGrid) -> f64 {
        let kx = std::f64::consts::PI / grid.dx();
        let kp = std::f64::consts::PI / grid.dp();
        self.terms
            .iter()
            .map(|t| {
                let opf = match &t.operator {
                    TermOperator::Scalar => 1.0,
                    TermOperator::Left(l) => {
                        2.0 * linalg::spectral_norm_hermitian(&linalg::hermitize(l))
                    }
                };
                t.poly.sup_bound(grid)
                    * opf
                    * kx.powi(t.deriv.0 as i32)
                    * kp.powi(t.deriv.1 as i32)
            })
            .sum()
    }

    /// Largest stable RK4 step on this grid.
    pub fn stable_dt(&self, grid: &PhaseGrid) -> f64 {
        let lambda = self.spectral_bound(grid);
        if lambda <= 0.0 {
            f64::INFINITY
        } else {
            C_STAB / lambda
        }
    }
}

fn binom(n: u32, k: u32) -> f64 {
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// `i^r`, exact.
fn i_pow(r: u32) -> C64 {
    match r % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Detects an identity-proportional Hermitian matrix; returns the scalar.
fn scalar_part(m: &Array2<C64>) -> Option<f64> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let tol = 1e-14 * (1.0 + scale);
    let f = m[(0, 0)].re;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { C64::new(f, 0.0) } else { C64::new(0.0, 0.0) };
            if (m[(i, j)] - expect).norm() > tol {
                return None;
            }
        }
    }
    Some(f)
}

/// Expands the hybrid equation of motion for `h` into a term list.
///
/// Substitutes `x -> x + (Dx + i Dp)/2`, `p -> p + (Dp - i Dx)/2`, expands
/// each monomial binomially (multiplicative factors commute with the
/// derivative operators under the differentiate-first rule), multiplies by
/// `-i`, and closes under Hermitian conjugation. Identity-proportional
/// coefficients are folded; exactly cancelling monomials are pruned.
pub fn compile(h: &HybridPolynomialHamiltonian) -> LiouvillianTermList {
    // raw accumulation keyed by derivative index, separated into the scalar
    // channel and one channel per distinct left operator
    let mut scalar_ch: HashMap<(u32, u32), PhasePoly> = HashMap::new();
    let mut left_ch: Vec<((u32, u32), Array2<C64>, PhasePoly)> = Vec::new();
    let mut scale = 0.0f64;

    for term in &h.terms {
        let (a, b) = (term.x_pow, term.p_pow);
        let fmat = term.coeff.mat();
        let fscalar = scalar_part(fmat);
        for j in 0..=a {
            for k in 0..=b {
                let mono_factor = binom(a, j) * binom(b, k) * 2.0f64.powi(-((j + k) as i32));
                for r in 0..=j {
                    for s in 0..=k {
                        // D_x^j D_p^k expanded: i^r from (i Dp)^r inside D_x,
                        // (-i)^s from (-i Dx)^s inside D_p
                        let deriv = ((j - r) + s, r + (k - s));
                        let phase = i_pow(r) * i_pow(3 * s % 4); // (-i)^s = i^{3s}
                        let c = C64::new(0.0, -1.0)
                            * phase
                            * (mono_factor * binom(j, r) * binom(k, s));
                        let mono = PhasePoly::monomial(a - j, b - k, c);
                        scale = scale.max(c.norm() * fscalar.map_or(1.0, f64::abs));
                        match fscalar {
                            Some(f) => {
                                scalar_ch
                                    .entry(deriv)
                                    .or_insert_with(PhasePoly::zero)
                                    .add_assign(&mono.scaled(C64::new(f, 0.0)));
                            }
                            None => {
                                if let Some(entry) = left_ch
                                    .iter_mut()
                                    .find(|(d, m, _)| *d == deriv && m == fmat)
                                {
                                    entry.2.add_assign(&mono);
                                } else {
                                    left_ch.push((deriv, fmat.clone(), mono));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let prune = 1e-14 * scale.max(1e-300);
    let mut terms = Vec::new();
    let mut scalar_keys: Vec<(u32, u32)> = scalar_ch.keys().copied().collect();
    scalar_keys.sort_unstable();
    for deriv in scalar_keys {
        // fold the Hermitian conjugate: net coefficient is poly + conj(poly)
        let folded = scalar_ch[&deriv].two_re().pruned(prune);
        if !folded.is_zero() {
            terms.push(LiouvillianTerm {
                deriv,
                operator: TermOperator::Scalar,
                poly: folded,
            });
        }
    }
    for (deriv, mat, poly) in left_ch {
        let poly = poly.pruned(prune);
        let op_scale = mat.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if !poly.is_zero() && op_scale > 0.0 {
            terms.push(LiouvillianTerm {
                deriv,
                operator: TermOperator::Left(mat),
                poly,
            });
        }
    }
    terms.sort_by_key(|t| t.deriv);
    LiouvillianTermList { dim: h.dim, terms }
}

/// Applies the compiled generator to a hybrid state, returning the rate
/// field `d rho / dt` with layout `(dim, dim, n_x, n_p)`.
///
/// The rate is exactly Hermitian per point by construction: only the upper
/// triangle of matrix entries is computed and the lower triangle is its
/// conjugate mirror.
pub fn apply(tl: &LiouvillianTermList, h: &HybridDensity) -> Result<Array4<C64>> {
    if tl.dim != h.dim() {
        return Err(Error::InvalidOperator(format!(
            "generator dimension {} does not match state dimension {}",
            tl.dim,
            h.dim()
        )));
    }
    apply_raw(tl, h.grid(), h.dim(), h.data())
}

pub(crate) fn apply_raw(
    tl: &LiouvillianTermList,
    grid: PhaseGrid,
    dim: usize,
    data: &Array4<C64>,
) -> Result<Array4<C64>> {
    let (n_x, n_p) = (grid.n_x, grid.n_p);
    let npts = n_x * n_p;

    // distinct derivative indices actually needed
    let mut derivs: Vec<(u32, u32)> = tl.terms.iter().map(|t| t.deriv).collect();
    derivs.sort_unstable();
    derivs.dedup();

    // derivative fields, computed for the upper triangle of matrix entries
    // and mirrored (the input is Hermitian per point, derivatives are
    // real-linear)
    let mut derived: HashMap<(u32, u32), Array4<C64>> = HashMap::new();
    for &dv in &derivs {
        if dv == (0, 0) {
            continue;
        }
        let global_max = data.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let mut out = Array4::zeros((dim, dim, n_x, n_p));
        let pairs: Vec<(usize, usize)> = (0..dim)
            .flat_map(|u| (u..dim).map(move |v| (u, v)))
            .collect();
        let planes: Vec<((usize, usize), Array2<C64>)> = pairs
            .par_iter()
            .map(|&(u, v)| {
                let mut plane = data.slice(ndarray::s![u, v, .., ..]).to_owned();
                if dv.0 > 0 {
                    plane =
                        derivative_plane(&plane, grid, Axis::X, dv.0 as usize, Some(global_max))?;
                }
                if dv.1 > 0 {
                    plane =
                        derivative_plane(&plane, grid, Axis::P, dv.1 as usize, Some(global_max))?;
                }
                Ok(((u, v), plane))
            })
            .collect::<Result<Vec<_>>>()?;
        for ((u, v), plane) in planes {
            for i in 0..n_x {
                for j in 0..n_p {
                    out[(u, v, i, j)] = plane[(i, j)];
                    if u != v {
                        out[(v, u, i, j)] = plane[(i, j)].conj();
                    }
                }
            }
        }
        derived.insert(dv, out);
    }

    // coefficient polynomials evaluated on the grid, one per term
    let poly_grids: Vec<Vec<C64>> = tl
        .terms
        .iter()
        .map(|t| {
            let mut g = Vec::with_capacity(npts);
            for i in 0..n_x {
                let x = grid.x(i);
                for j in 0..n_p {
                    g.push(t.poly.eval(x, grid.p(j)));
                }
            }
            g
        })
        .collect();

    // accumulate the upper triangle of output planes in parallel
    let pairs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|u| (u..dim).map(move |v| (u, v)))
        .collect();
    let out_planes: Vec<((usize, usize), Vec<C64>)> = pairs
        .par_iter()
        .map(|&(u, v)| {
            let mut acc = vec![C64::new(0.0, 0.0); npts];
            let mut scr1 = vec![C64::new(0.0, 0.0); npts];
            let mut scr2 = vec![C64::new(0.0, 0.0); npts];
            for (t, poly_grid) in tl.terms.iter().zip(poly_grids.iter()) {
                let field = if t.deriv == (0, 0) {
                    data
                } else {
                    &derived[&t.deriv]
                };
                match &t.operator {
                    TermOperator::Scalar => {
                        let plane = field.slice(ndarray::s![u, v, .., ..]);
                        for ((a, w), z) in
                            acc.iter_mut().zip(poly_grid.iter()).zip(plane.iter())
                        {
                            *a += w * z;
                        }
                    }
                    TermOperator::Left(l) => {
                        scr1.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                        scr2.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                        for w in 0..dim {
                            let luw = l[(u, w)];
                            if luw != C64::new(0.0, 0.0) {
                                let plane = field.slice(ndarray::s![w, v, .., ..]);
                                for (s, z) in scr1.iter_mut().zip(plane.iter()) {
                                    *s += luw * z;
                                }
                            }
                            let lvw = l[(v, w)].conj();
                            if lvw != C64::new(0.0, 0.0) {
                                let plane = field.slice(ndarray::s![u, w, .., ..]);
                                for (s, z) in scr2.iter_mut().zip(plane.iter()) {
                                    *s += lvw * z;
                                }
                            }
                        }
                        for (((a, wc), s1), s2) in acc
                            .iter_mut()
                            .zip(poly_grid.iter())
                            .zip(scr1.iter())
                            .zip(scr2.iter())
                        {
                            *a += wc * s1 + wc.conj() * s2;
                        }
                    }
                }
            }
            ((u, v), acc)
        })
        .collect();

    let mut out = Array4::zeros((dim, dim, n_x, n_p));
    for ((u, v), plane) in out_planes {
        for i in 0..n_x {
            for j in 0..n_p {
                let z = plane[i * n_p + j];
                out[(u, v, i, j)] = z;
                if u != v {
                    out[(v, u, i, j)] = z.conj();
                }
            }
        }
    }
    Ok(out)
}

/// RK4 evolution of a hybrid state to `t_final` with fixed step `dt`.
///
/// `dt` must satisfy the stability bound of the compiled generator on the
/// state's grid. Total normalization is monitored every step against a
/// budget of [`DRIFT_PER_TIME`] per unit time; Hermiticity is exact by
/// construction of [`apply`].
pub fn evolve(
    h0: &HybridDensity,
    tl: &LiouvillianTermList,
    t_final: f64,
    dt: f64,
) -> Result<HybridDensity> {
    if t_final < 0.0 {
        return Err(Error::Stability(format!("t_final must be >= 0, got {t_final}")));
    }
    if t_final == 0.0 || tl.is_empty() {
        return Ok(h0.clone());
    }
    if !(dt > 0.0) {
        return Err(Error::Stability(format!("dt must be positive, got {dt}")));
    }
    let grid = h0.grid();
    let dim = h0.dim();
    let limit = tl.stable_dt(&grid);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "dt = {dt:.3e} exceeds the stability bound {limit:.3e} for this \
             generator and grid"
        )));
    }
    let n_steps = (t_final / dt).ceil().max(1.0) as usize;
    let step = t_final / n_steps as f64;

    let mut state = h0.data().clone();
    for s in 0..n_steps {
        let k1 = apply_raw(tl, grid, dim, &state)?;
        let y2 = &state + &k1.mapv(|z| z * (step / 2.0));
        let k2 = apply_raw(tl, grid, dim, &y2)?;
        let y3 = &state + &k2.mapv(|z| z * (step / 2.0));
        let k3 = apply_raw(tl, grid, dim, &y3)?;
        let y4 = &state + &k3.mapv(|z| z * step);
        let k4 = apply_raw(tl, grid, dim, &y4)?;
        ndarray::Zip::from(&mut state)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .for_each(|s, &a, &b, &c, &d| {
                *s += (a + b * 2.0 + c * 2.0 + d) * (step / 6.0);
            });

        let elapsed = step * (s + 1) as f64;
        let drift = (trace_norm(grid, dim, &state) - 1.0).abs();
        if drift > DRIFT_PER_TIME * (1.0 + elapsed) {
            return Err(Error::Stability(format!(
                "normalization drift {drift:.3e} after t = {elapsed:.3e} exceeds \
                 the budget; reduce dt or enlarge the domain"
            )));
        }
    }
    HybridDensity::new(grid, dim, state)
}

/// `integral of trace` of a raw state array.
fn trace_norm(grid: PhaseGrid, dim: usize, data: &Array4<C64>) -> f64 {
    let cell = grid.dx() * grid.dp();
    let mut acc = crate::grid::Kahan::new();
    for u in 0..dim {
        for z in data.slice(ndarray::s![u, u, .., ..]).iter() {
            acc.add(z.re);
        }
    }
    acc.sum() * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gaussian;
    use crate::hybrid::product_state;
    use crate::operator::{pointer_observable, DensityOperator, ProjectorSet};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn scalar_h(poly: &[(u32, u32, f64)]) -> HybridPolynomialHamiltonian {
        HybridPolynomialHamiltonian::scalar(1, &PhasePoly::from_real_terms(poly)).unwrap()
    }

    /// Superoperator of each (derivative, monomial) channel of a compiled
    /// list, with vec(L rho R) = (L kron R^T) vec(rho), row-major.
    fn superop_map(
        tl: &LiouvillianTermList,
    ) -> BTreeMap<((u32, u32), (u32, u32)), Array2<C64>> {
        let d = tl.dim();
        let eye = linalg::eye(d);
        let mut map: BTreeMap<((u32, u32), (u32, u32)), Array2<C64>> = BTreeMap::new();
        for t in tl.terms() {
            for &(a, b, c) in t.poly.terms() {
                let s = match &t.operator {
                    TermOperator::Scalar => linalg::kron(&eye, &eye).mapv(|z| z * c),
                    TermOperator::Left(l) => {
                        let lt = l.mapv(|z| z.conj()); // (L^dag)^T for Hermitian L
                        let left = linalg::kron(l, &eye).mapv(|z| z * c);
                        let right = linalg::kron(&eye, &lt).mapv(|z| z * c.conj());
                        left + right
                    }
                };
                map.entry((t.deriv, (a, b)))
                    .and_modify(|m| *m = &*m + &s)
                    .or_insert(s);
            }
        }
        map
    }

    fn assert_superop_eq(
        got: &BTreeMap<((u32, u32), (u32, u32)), Array2<C64>>,
        expect: &BTreeMap<((u32, u32), (u32, u32)), Array2<C64>>,
        tol: f64,
    ) {
        for (k, m) in expect {
            let g = got.get(k).unwrap_or_else(|| panic!("missing channel {k:?}"));
            let worst = (g - m).iter().fold(0.0f64, |w, z| w.max(z.norm()));
            assert!(worst < tol, "channel {k:?} defect {worst:.3e}");
        }
        for (k, m) in got {
            if !expect.contains_key(k) {
                let worst = m.iter().fold(0.0f64, |w, z| w.max(z.norm()));
                assert!(worst < tol, "unexpected channel {k:?} with norm {worst:.3e}");
            }
        }
    }

    #[test]
    fn free_particle_compiles_to_single_transport_term() {
        let tl = compile(&scalar_h(&[(0, 1, 1.0)]));
        assert_eq!(tl.terms().len(), 1);
        let t = &tl.terms()[0];
        assert_eq!(t.deriv, (1, 0));
        assert!(matches!(t.operator, TermOperator::Scalar));
        assert_eq!(t.poly.terms(), &[(0, 0, C64::new(-1.0, 0.0))]);
    }

    #[test]
    fn harmonic_compiles_to_poisson_flow_with_cancelled_diffusion() {
        // H = (x^2 + p^2)/2 -> rate = x d_p rho - p d_x rho, second-derivative
        // terms cancel exactly
        let tl = compile(&scalar_h(&[(2, 0, 0.5), (0, 2, 0.5)]));
        assert_eq!(tl.terms().len(), 2, "dump:\n{}", tl.dump());
        let dx_term = tl.terms().iter().find(|t| t.deriv == (1, 0)).unwrap();
        assert_eq!(dx_term.poly.terms(), &[(0, 1, C64::new(-1.0, 0.0))]);
        let dp_term = tl.terms().iter().find(|t| t.deriv == (0, 1)).unwrap();
        assert_eq!(dp_term.poly.terms(), &[(1, 0, C64::new(1.0, 0.0))]);
    }

    #[test]
    fn kick_hamiltonian_compiles_to_three_term_generator() {
        // H = p g A: expect  -i g p [A, .]  - (g/2) [A, d_x .]_+  - (i g/2) [A, d_p .]
        let g = 8.0;
        for ps in [
            ProjectorSet::diagonal(3),
            {
                let h = ndarray::arr2(&[
                    [C64::new(0.1, 0.0), C64::new(0.4, 0.1), C64::new(0.0, -0.3)],
                    [C64::new(0.4, -0.1), C64::new(-0.2, 0.0), C64::new(0.2, 0.0)],
                    [C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(0.3, 0.0)],
                ]);
                let u = linalg::exp_minus_i_ht(&h, 1.0);
                ProjectorSet::diagonal(3).conjugated(&u).unwrap()
            },
        ] {
            let a = pointer_observable(&ps, g);
            let ham = HybridPolynomialHamiltonian::new(
                3,
                vec![HamiltonianTerm {
                    x_pow: 0,
                    p_pow: 1,
                    coeff: a.clone(),
                }],
            )
            .unwrap();
            let tl = compile(&ham);
            assert_eq!(tl.terms().len(), 3, "dump:\n{}", tl.dump());

            let eye = linalg::eye(3);
            let at = a.mat().mapv(|z| z.conj());
            let comm = linalg::kron(a.mat(), &eye) - linalg::kron(&eye, &at);
            let anti = linalg::kron(a.mat(), &eye) + linalg::kron(&eye, &at);
            let mut expect = BTreeMap::new();
            expect.insert(
                ((0, 0), (0, 1)),
                comm.mapv(|z| z * C64::new(0.0, -1.0)),
            );
            expect.insert(((1, 0), (0, 0)), anti.mapv(|z| z * (-0.5)));
            expect.insert(
                ((0, 1), (0, 0)),
                comm.mapv(|z| z * C64::new(0.0, -0.5)),
            );
            assert_superop_eq(&superop_map(&tl), &expect, 1e-12);
        }
    }

    #[test]
    fn scalar_monomials_reduce_to_poisson_bracket_at_first_order() {
        // the first-derivative channels of the compiled generator equal the
        // Poisson bracket dH/dx d_p - dH/dp d_x for every monomial; the
        // multiplicative channel vanishes identically
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                if a + b == 0 {
                    continue;
                }
                let tl = compile(&scalar_h(&[(a, b, 1.0)]));
                for t in tl.terms() {
                    assert_ne!(t.deriv, (0, 0), "x^{a} p^{b} left a multiplicative term");
                }
                let dp = tl
                    .terms()
                    .iter()
                    .find(|t| t.deriv == (0, 1))
                    .map(|t| t.poly.clone())
                    .unwrap_or_else(PhasePoly::zero);
                let dx = tl
                    .terms()
                    .iter()
                    .find(|t| t.deriv == (1, 0))
                    .map(|t| t.poly.clone())
                    .unwrap_or_else(PhasePoly::zero);
                // oracle: symbolic Poisson bracket
                let mut expect_dp = PhasePoly::zero();
                if a > 0 {
                    expect_dp = PhasePoly::monomial(a - 1, b, C64::new(a as f64, 0.0));
                }
                let mut expect_dx = PhasePoly::zero();
                if b > 0 {
                    expect_dx = PhasePoly::monomial(a, b - 1, C64::new(-(b as f64), 0.0));
                }
                assert_eq!(dp, expect_dp, "d_p channel of x^{a} p^{b}");
                assert_eq!(dx, expect_dx, "d_x channel of x^{a} p^{b}");
            }
        }
    }

    #[test]
    fn constant_operator_hamiltonian_compiles_to_commutator() {
        let mut m = Array2::zeros((2, 2));
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        m[(0, 1)] = C64::new(0.3, 0.2);
        m[(1, 0)] = C64::new(0.3, -0.2);
        let hq = HermitianOperator::new(m).unwrap();
        let tl = compile(&HybridPolynomialHamiltonian::constant_operator(&hq));
        assert_eq!(tl.terms().len(), 1);
        let t = &tl.terms()[0];
        assert_eq!(t.deriv, (0, 0));
        assert_eq!(t.poly.terms(), &[(0, 0, C64::new(0.0, -1.0))]);
        assert!(matches!(t.operator, TermOperator::Left(_)));
    }

    #[test]
    fn apply_constant_hamiltonian_is_pointwise_commutator() {
        let grid = PhaseGrid::new(-10.0, 10.0, -10.0, 10.0, 64, 64).unwrap();
        let rho_c = gaussian(grid, 0.0, 0.0, 1.0).unwrap();
        let mut m = Array2::zeros((2, 2));
        m[(0, 0)] = C64::new(0.6, 0.0);
        m[(1, 1)] = C64::new(0.4, 0.0);
        m[(0, 1)] = C64::new(0.1, -0.2);
        m[(1, 0)] = C64::new(0.1, 0.2);
        let rho_q = DensityOperator::new(m).unwrap();
        let h = product_state(&rho_q, &rho_c).unwrap();

        let mut hm = Array2::zeros((2, 2));
        hm[(0, 0)] = C64::new(0.5, 0.0);
        hm[(0, 1)] = C64::new(0.2, 0.7);
        hm[(1, 0)] = C64::new(0.2, -0.7);
        hm[(1, 1)] = C64::new(-0.5, 0.0);
        let hq = HermitianOperator::new(hm.clone()).unwrap();
        let tl = compile(&HybridPolynomialHamiltonian::constant_operator(&hq));
        let rate = apply(&tl, &h).unwrap();

        // oracle: -i [H, rho] evaluated with plain matrix algebra
        for (i, j) in [(32usize, 32usize), (20, 40), (45, 30)] {
            let pt = h.point_matrix(i, j);
            let comm = hm.dot(&pt) - pt.dot(&hm);
            for u in 0..2 {
                for v in 0..2 {
                    let expect = comm[(u, v)] * C64::new(0.0, -1.0);
                    let got = rate[(u, v, i, j)];
                    assert!(
                        (got - expect).norm() < 1e-12,
                        "rate mismatch at ({i},{j},{u},{v})"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_hamiltonian_compiles_empty_and_evolves_identically() {
        let tl = compile(&scalar_h(&[]));
        assert!(tl.is_empty());
        let grid = PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 32, 32).unwrap();
        let h = product_state(
            &DensityOperator::maximally_mixed(2),
            &gaussian(grid, 0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let out = evolve(&h, &tl, 1.0, 0.1).unwrap();
        assert_eq!(out.data(), h.data());
    }

    #[test]
    fn rotationally_symmetric_state_is_stationary_under_harmonic_flow() {
        let grid = PhaseGrid::new(-10.0, 10.0, -10.0, 10.0, 128, 128).unwrap();
        let h = product_state(
            &DensityOperator::maximally_mixed(1),
            &gaussian(grid, 0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let tl = compile(&scalar_h(&[(2, 0, 0.5), (0, 2, 0.5)]));
        let rate = apply(&tl, &h).unwrap();
        let worst = rate.iter().fold(0.0f64, |w, z| w.max(z.norm()));
        assert!(worst < 1e-8, "stationary rate has L_inf {worst:.3e}");
    }

    #[test]
    fn classical_harmonic_rotation_matches_characteristics() {
        // quarter period rotates a Gaussian at (2, 0) to (0, -2)
        let grid = PhaseGrid::new(-10.0, 10.0, -10.0, 10.0, 96, 96).unwrap();
        let h0 = product_state(
            &DensityOperator::maximally_mixed(1),
            &gaussian(grid, 2.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let tl = compile(&scalar_h(&[(2, 0, 0.5), (0, 2, 0.5)]));
        let t = std::f64::consts::FRAC_PI_2;
        let dt = tl.stable_dt(&grid);
        let out = evolve(&h0, &tl, t, dt).unwrap();
        let marg = out.classical_marginal();
        // characteristics oracle: rho(t, x, p) = rho_0(x cos t - p sin t, ...)
        // at t = pi/2 this is rho_0(-p, x)
        let mut worst = 0.0f64;
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                let p = grid.p(j);
                let expect = (-(((-p) - 2.0).powi(2) + x * x) / 2.0).exp()
                    / (2.0 * std::f64::consts::PI);
                worst = worst.max((marg.values[(i, j)].re - expect).abs());
            }
        }
        assert!(worst < 1e-3, "rotation L_inf error {worst:.3e}");
        assert_abs_diff_eq!(out.total_norm(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quantum_evolution_matches_matrix_exponential() {
        let grid = PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 32, 32).unwrap();
        let mut m = Array2::zeros((2, 2));
        m[(0, 0)] = C64::new(0.7, 0.0);
        m[(1, 1)] = C64::new(0.3, 0.0);
        m[(0, 1)] = C64::new(0.15, 0.1);
        m[(1, 0)] = C64::new(0.15, -0.1);
        let rho_q = DensityOperator::new(m).unwrap();
        let h0 = product_state(&rho_q, &gaussian(grid, 0.0, 0.0, 1.0).unwrap()).unwrap();

        let mut hm = Array2::zeros((2, 2));
        hm[(0, 0)] = C64::new(0.8, 0.0);
        hm[(0, 1)] = C64::new(0.3, 0.2);
        hm[(1, 0)] = C64::new(0.3, -0.2);
        hm[(1, 1)] = C64::new(-0.8, 0.0);
        let hq = HermitianOperator::new(hm.clone()).unwrap();
        let tl = compile(&HybridPolynomialHamiltonian::constant_operator(&hq));
        let out = evolve(&h0, &tl, 1.0, 0.01).unwrap();

        // oracle: exp(-iHt) rho exp(+iHt)
        let u = linalg::exp_minus_i_ht(&hm, 1.0);
        let expect = u.dot(rho_q.mat()).dot(&linalg::dagger(&u));
        for (x, p) in [(0.0, 0.0), (1.0, -1.0)] {
            let cond = out.conditional_state(x, p).unwrap();
            let dist = linalg::trace_distance(cond.mat(), &expect);
            assert!(dist < 1e-6, "conditional trace distance {dist:.3e}");
        }
    }

    #[test]
    fn zero_time_returns_input_exactly() {
        let grid = PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 32, 32).unwrap();
        let h = product_state(
            &DensityOperator::maximally_mixed(2),
            &gaussian(grid, 0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let tl = compile(&scalar_h(&[(0, 1, 1.0)]));
        let out = evolve(&h, &tl, 0.0, 0.1).unwrap();
        assert_eq!(out.data(), h.data());
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        // free transport of a Gaussian: exact solution is a coordinate shift
        let grid = PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 128, 128).unwrap();
        let h0 = product_state(
            &DensityOperator::maximally_mixed(1),
            &gaussian(grid, 0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let tl = compile(&scalar_h(&[(0, 1, 1.0)]));
        let t = 0.4;
        let err = |dt: f64| -> f64 {
            let out = evolve(&h0, &tl, t, dt).unwrap();
            let marg = out.classical_marginal();
            let mut worst = 0.0f64;
            for i in 0..grid.n_x {
                let x = grid.x(i);
                for j in 0..grid.n_p {
                    let p = grid.p(j);
                    let expect = (-((x - t).powi(2) + p * p) / 2.0).exp()
                        / (2.0 * std::f64::consts::PI);
                    worst = worst.max((marg.values[(i, j)].re - expect).abs());
                }
            }
            worst
        };
        let dt0 = tl.stable_dt(&grid); // t/dt0 = 0.4/0.0625 = 6.4 -> 7 steps
        let e1 = err(t / 8.0);
        let e2 = err(t / 16.0);
        let ratio = e1 / e2;
        assert!(
            (8.0..32.0).contains(&ratio),
            "convergence ratio {ratio:.2} (errors {e1:.3e}, {e2:.3e}, dt0 {dt0:.3e})"
        );
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = PhaseGrid::new(-8.0, 8.0, -8.0, 8.0, 32, 32).unwrap();
        let h = product_state(
            &DensityOperator::maximally_mixed(1),
            &gaussian(grid, 0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let tl = compile(&scalar_h(&[(0, 1, 1.0)]));
        let dt = tl.stable_dt(&grid) * 4.0;
        match evolve(&h, &tl, 1.0, dt) {
            Err(Error::Stability(_)) => {}
            other => panic!("expected Stability error, got {other:?}"),
        }
    }

    #[test]
    fn degree_bound_enforced() {
        let err = HybridPolynomialHamiltonian::scalar(
            1,
            &PhasePoly::from_real_terms(&[(3, 2, 1.0)]),
        );
        assert!(matches!(err, Err(Error::Degree(_))));
    }

    #[test]
    fn hermiticity_of_rate_is_exact() {
        let grid = PhaseGrid::new(-10.0, 10.0, -10.0, 10.0, 64, 64).unwrap();
        let mut m = Array2::zeros((2, 2));
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.2, 0.3);
        m[(1, 0)] = C64::new(0.2, -0.3);
        let rho_q = DensityOperator::new(m).unwrap();
        let h = product_state(&rho_q, &gaussian(grid, 1.0, 0.5, 1.0).unwrap()).unwrap();
        // mixed scalar + operator Hamiltonian
        let a = pointer_observable(&ProjectorSet::diagonal(2), 2.0);
        let ham = HybridPolynomialHamiltonian::new(
            2,
            vec![
                HamiltonianTerm {
                    x_pow: 2,
                    p_pow: 0,
                    coeff: HermitianOperator::identity(2).scaled(0.5),
                },
                HamiltonianTerm {
                    x_pow: 0,
                    p_pow: 2,
                    coeff: HermitianOperator::identity(2).scaled(0.5),
                },
                HamiltonianTerm {
                    x_pow: 0,
                    p_pow: 1,
                    coeff: a,
                },
            ],
        )
        .unwrap();
        let rate = apply(&compile(&ham), &h).unwrap();
        let mut worst = 0.0f64;
        for u in 0..2 {
            for v in 0..2 {
                for i in (0..64).step_by(7) {
                    for j in (0..64).step_by(7) {
                        worst = worst
                            .max((rate[(u, v, i, j)] - rate[(v, u, i, j)].conj()).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-12, "rate Hermiticity defect {worst:.3e}");
    }
}
