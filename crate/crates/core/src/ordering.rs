//! Ordering transforms on the truncated Fock space: normal, Wigner-Weyl,
//! and anti-normal quantization of real phase-space polynomials.
//!
//! Conventions (recorded once, used everywhere): `hbar = 1`, `[x, p] = i`,
//! the mode operator is `a = (x + i p) / sqrt(2)`, so `x = (a + a^dag)/sqrt(2)`
//! and `p = -i (a - a^dag)/sqrt(2)`.
//!
//! Each transform expands a monomial `x^a p^b` multinomially with `a, a^dag`
//! treated as commuting (that is the meaning of an ordering prescription) and
//! then materializes every `a^dag^m a^k` word in the requested order:
//! creation factors left (normal), lowering factors left (anti-normal), or
//! the average over all distinct arrangements of the `x`, `p` factors (Weyl).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::operator::{FockTruncation, HermitianOperator};
use crate::poly::PhasePoly;
use crate::C64;

/// Lowering operator `a` on the truncated space: `a[n-1, n] = sqrt(n)`.
pub fn lowering_matrix(trunc: FockTruncation) -> Array2<C64> {
    let n = trunc.n_max();
    let mut m = Array2::zeros((n, n));
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    m
}

/// Raising operator `a^dag`.
pub fn raising_matrix(trunc: FockTruncation) -> Array2<C64> {
    crate::linalg::dagger(&lowering_matrix(trunc))
}

/// `x = (a + a^dag) / sqrt(2)`.
pub fn position_matrix(trunc: FockTruncation) -> HermitianOperator {
    let a = lowering_matrix(trunc);
    let ad = raising_matrix(trunc);
    let m = (&a + &ad).mapv(|z| z / 2.0f64.sqrt());
    HermitianOperator::new(m).expect("x is Hermitian by construction")
}

/// `p = -i (a - a^dag) / sqrt(2)`.
pub fn momentum_matrix(trunc: FockTruncation) -> HermitianOperator {
    let a = lowering_matrix(trunc);
    let ad = raising_matrix(trunc);
    let m = (&a - &ad).mapv(|z| z * C64::new(0.0, -1.0) / 2.0f64.sqrt());
    HermitianOperator::new(m).expect("p is Hermitian by construction")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Order {
    Normal,
    AntiNormal,
}

/// Normal-ordered quantization: every `a^dag` to the left of every `a`.
pub fn order_normal(poly: &PhasePoly, trunc: FockTruncation) -> Result<HermitianOperator> {
    ordered(poly, trunc, Order::Normal)
}

/// Anti-normal-ordered quantization: every `a` to the left of every `a^dag`.
pub fn order_antinormal(poly: &PhasePoly, trunc: FockTruncation) -> Result<HermitianOperator> {
    ordered(poly, trunc, Order::AntiNormal)
}

fn check_degree(poly: &PhasePoly, trunc: FockTruncation) -> Result<()> {
    let deg = poly.degree() as usize;
    if deg >= trunc.n_max() {
        return Err(Error::Truncation(format!(
            "polynomial degree {deg} does not fit a Fock cutoff of {}",
            trunc.n_max()
        )));
    }
    Ok(())
}

fn check_real(poly: &PhasePoly) -> Result<()> {
    let worst = poly
        .terms()
        .iter()
        .fold(0.0f64, |m, &(_, _, c)| m.max(c.im.abs()));
    if worst > 1e-14 * (1.0 + poly.max_coeff()) {
        return Err(Error::InvalidOperator(format!(
            "ordering transforms take real polynomials; imaginary part {worst:.3e}"
        )));
    }
    Ok(())
}

fn ordered(poly: &PhasePoly, trunc: FockTruncation, order: Order) -> Result<HermitianOperator> {
    check_degree(poly, trunc)?;
    check_real(poly)?;
    let n = trunc.n_max();
    let a = lowering_matrix(trunc);
    let ad = raising_matrix(trunc);
    // powers of a and a^dag up to the degree
    let deg = poly.degree() as usize;
    let mut a_pow = vec![crate::linalg::eye(n)];
    let mut ad_pow = vec![crate::linalg::eye(n)];
    for k in 1..=deg {
        a_pow.push(a_pow[k - 1].dot(&a));
        ad_pow.push(ad_pow[k - 1].dot(&ad));
    }

    let mut out = Array2::<C64>::zeros((n, n));
    for &(xa, pb, coeff) in poly.terms() {
        let (xa, pb) = (xa as usize, pb as usize);
        // x^a p^b = 2^{-(a+b)/2} (-i)^b (a + ad)^a (a - ad)^b  with commuting
        // symbols; collect words a^{r+s} ad^{(a-r)+(b-s)}
        let base = coeff
            * C64::new(0.0, -1.0).powu(pb as u32)
            * C64::new(2.0f64.powi(-((xa + pb) as i32) / 2), 0.0)
            * if (xa + pb) % 2 == 1 {
                C64::new(1.0 / 2.0f64.sqrt(), 0.0)
            } else {
                C64::new(1.0, 0.0)
            };
        for r in 0..=xa {
            for s in 0..=pb {
                let sign = if (pb - s) % 2 == 1 { -1.0 } else { 1.0 };
                let w = base * binom(xa, r) * binom(pb, s) * sign;
                let low = r + s;
                let high = (xa - r) + (pb - s);
                let word = match order {
                    Order::Normal => ad_pow[high].dot(&a_pow[low]),
                    Order::AntiNormal => a_pow[low].dot(&ad_pow[high]),
                };
                out = &out + &word.mapv(|z| z * w);
            }
        }
    }
    HermitianOperator::new_hermitized(out)
}

/// Wigner-Weyl quantization: each monomial `x^a p^b` becomes the average of
/// the operator products over all distinct arrangements of `a` copies of `x`
/// and `b` copies of `p`.
pub fn order_weyl(poly: &PhasePoly, trunc: FockTruncation) -> Result<HermitianOperator> {
    check_degree(poly, trunc)?;
    check_real(poly)?;
    let n = trunc.n_max();
    let x = position_matrix(trunc).into_mat();
    let p = momentum_matrix(trunc).into_mat();
    let mut out = Array2::<C64>::zeros((n, n));
    for &(xa, pb, coeff) in poly.terms() {
        let arrangements = multiset_arrangements(xa as usize, pb as usize);
        let weight = coeff / arrangements.len() as f64;
        for word in &arrangements {
            let mut prod = crate::linalg::eye(n);
            for &is_p in word {
                prod = prod.dot(if is_p { &p } else { &x });
            }
            out = &out + &prod.mapv(|z| z * weight);
        }
    }
    HermitianOperator::new_hermitized(out)
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// All distinct orderings of `nx` copies of `x` (false) and `np` copies of
/// `p` (true), in lexicographic order.
fn multiset_arrangements(nx: usize, np: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(nx + np);
    fn rec(nx: usize, np: usize, word: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if nx == 0 && np == 0 {
            out.push(word.clone());
            return;
        }
        if nx > 0 {
            word.push(false);
            rec(nx - 1, np, word, out);
            word.pop();
        }
        if np > 0 {
            word.push(true);
            rec(nx, np - 1, word, out);
            word.pop();
        }
    }
    rec(nx, np, &mut word, &mut out);
    out
}
