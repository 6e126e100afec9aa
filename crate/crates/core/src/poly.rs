//! Polynomials in the two classical variables `(x, p)` with complex
//! coefficients. These carry both observables (real coefficients) and the
//! coefficient polynomials of compiled evolution terms.

use std::fmt;

use crate::grid::PhaseGrid;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoly {
    /// `(x power, p power, coefficient)`, sorted by `(a, b)`, duplicates merged.
    terms: Vec<(u32, u32, C64)>,
}

impl PhasePoly {
    pub fn zero() -> Self {
        PhasePoly { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(vec![(0, 0, C64::new(c, 0.0))])
    }

    pub fn monomial(x_pow: u32, p_pow: u32, coeff: C64) -> Self {
        Self::from_terms(vec![(x_pow, p_pow, coeff)])
    }

    pub fn from_terms(terms: Vec<(u32, u32, C64)>) -> Self {
        let mut p = PhasePoly { terms };
        p.consolidate(0.0);
        p
    }

    /// Monomials of a real polynomial given as `(x_pow, p_pow, real coeff)`.
    pub fn from_real_terms(terms: &[(u32, u32, f64)]) -> Self {
        Self::from_terms(
            terms
                .iter()
                .map(|&(a, b, c)| (a, b, C64::new(c, 0.0)))
                .collect(),
        )
    }

    pub fn terms(&self) -> &[(u32, u32, C64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|&(a, b, _)| a + b).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_assign(&mut self, other: &PhasePoly) {
        self.terms.extend_from_slice(&other.terms);
        self.consolidate(0.0);
    }

    pub fn scaled(&self, factor: C64) -> Self {
        PhasePoly {
            terms: self
                .terms
                .iter()
                .map(|&(a, b, c)| (a, b, c * factor))
                .collect(),
        }
    }

    pub fn conj_coeffs(&self) -> Self {
        PhasePoly {
            terms: self
                .terms
                .iter()
                .map(|&(a, b, c)| (a, b, c.conj()))
                .collect(),
        }
    }

    /// `2 Re` of the coefficients: the net scalar polynomial of a term plus
    /// its Hermitian conjugate when the operator factor is the identity.
    pub fn two_re(&self) -> Self {
        let mut p = PhasePoly {
            terms: self
                .terms
                .iter()
                .map(|&(a, b, c)| (a, b, C64::new(2.0 * c.re, 0.0)))
                .collect(),
        };
        p.consolidate(0.0);
        p
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0f64, |m, &(_, _, c)| m.max(c.norm()))
    }

    /// Drops monomials with `|coeff| <= tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.consolidate(tol);
        self
    }

    pub fn eval(&self, x: f64, p: f64) -> C64 {
        self.terms
            .iter()
            .map(|&(a, b, c)| c * x.powi(a as i32) * p.powi(b as i32))
            .sum()
    }

    /// Upper bound of `|poly|` over the grid domain.
    pub fn sup_bound(&self, grid: &PhaseGrid) -> f64 {
        let xm = grid.x_min.abs().max(grid.x_max.abs());
        let pm = grid.p_min.abs().max(grid.p_max.abs());
        self.terms
            .iter()
            .map(|&(a, b, c)| c.norm() * xm.powi(a as i32) * pm.powi(b as i32))
            .sum()
    }

    /// `d^2/dx^2 + d^2/dp^2`, used by the ordering-transform identities.
    pub fn laplacian(&self) -> Self {
        let mut terms = Vec::new();
        for &(a, b, c) in &self.terms {
            if a >= 2 {
                terms.push((a - 2, b, c * (a * (a - 1)) as f64));
            }
            if b >= 2 {
                terms.push((a, b - 2, c * (b * (b - 1)) as f64));
            }
        }
        Self::from_terms(terms)
    }

    fn consolidate(&mut self, tol: f64) {
        self.terms.sort_by_key(|&(a, b, _)| (a, b));
        let mut merged: Vec<(u32, u32, C64)> = Vec::with_capacity(self.terms.len());
        for &(a, b, c) in &self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += c,
                _ => merged.push((a, b, c)),
            }
        }
        merged.retain(|&(_, _, c)| c.norm() > tol);
        self.terms = merged;
    }
}

impl fmt::Display for PhasePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, &(a, b, c)) in self.terms.iter().enumerate() {
            if idx > 0 {
                write!(f, " + ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else if c.re == 0.0 {
                write!(f, "{}i", c.im)?;
            } else {
                write!(f, "({}{:+}i)", c.re, c.im)?;
            }
            if a > 0 {
                write!(f, "*x^{a}")?;
            }
            if b > 0 {
                write!(f, "*p^{b}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consolidation_merges_and_prunes() {
        let p = PhasePoly::from_terms(vec![
            (1, 0, C64::new(0.25, 0.0)),
            (1, 0, C64::new(-0.25, 0.0)),
            (0, 1, C64::new(1.0, 0.0)),
        ]);
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0], (0, 1, C64::new(1.0, 0.0)));
    }

    #[test]
    fn eval_and_laplacian() {
        // x^2 p: laplacian = 2p
        let p = PhasePoly::from_real_terms(&[(2, 1, 1.0)]);
        assert_eq!(p.eval(2.0, 3.0), C64::new(12.0, 0.0));
        let l = p.laplacian();
        assert_eq!(l.terms(), &[(0, 1, C64::new(2.0, 0.0))]);
    }

    #[test]
    fn two_re_folds_hermitian_pair() {
        let p = PhasePoly::from_terms(vec![(0, 1, C64::new(0.0, -1.0)), (1, 0, C64::new(-0.5, 0.0))]);
        let r = p.two_re();
        // imaginary coefficient cancels against its conjugate, real doubles
        assert_eq!(r.terms(), &[(1, 0, C64::new(-1.0, 0.0))]);
    }
}
