//! Dense complex linear algebra for small operator matrices.
//!
//! Everything here targets Hilbert dimensions of at most a few dozen
//! (operator coefficients, truncated Fock spaces), so a cyclic Jacobi
//! eigensolver and Householder QR are plenty and keep results bit-for-bit
//! deterministic.

use ndarray::{Array1, Array2};

use crate::C64;

/// `n x n` identity.
pub fn eye(n: usize) -> Array2<C64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = C64::new(1.0, 0.0);
    }
    m
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    let (r, c) = a.dim();
    let mut out = Array2::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[(j, i)] = a[(i, j)].conj();
        }
    }
    out
}

/// `(a + a^dagger) / 2`.
pub fn hermitize(a: &Array2<C64>) -> Array2<C64> {
    let ad = dagger(a);
    (a + &ad).mapv(|z| z * 0.5)
}

/// Largest `|a_ij - conj(a_ji)|`; zero for an exactly Hermitian matrix.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn trace(a: &Array2<C64>) -> C64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

pub fn frobenius_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product; index layout is `(i*db + k, j*db + l) = a[i,j] b[k,l]`,
/// i.e. the first factor is the major index.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns eigenvalues in ascending order and the matching
/// unitary of column eigenvectors.
pub fn eigh(a: &Array2<C64>) -> (Array1<f64>, Array2<C64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh: square matrix required");
    let mut m = hermitize(a);
    let mut v = eye(n);
    if n <= 1 {
        let w = Array1::from_elem(n, if n == 1 { m[(0, 0)].re } else { 0.0 });
        return (w, v);
    }

    let scale = frobenius_norm(&m).max(1e-300);
    let tol = 1e-15 * scale;
    for _sweep in 0..120 {
        let mut off = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let b = m[(p, q)].norm();
                if b <= 1e-300 {
                    continue;
                }
                let phase = m[(p, q)] / b;
                let alpha = m[(p, p)].re;
                let gamma = m[(q, q)].re;
                // zeroing (p, q) needs t^2 - 2 tau t - 1 = 0; take the
                // small-magnitude root for a well-conditioned rotation
                let tau = (gamma - alpha) / (2.0 * b);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sigma = phase * s; // U = [[c, -sigma], [conj(sigma), c]]

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c + mkq * sigma.conj();
                    m[(k, q)] = -mkp * sigma + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c + mqk * sigma;
                    m[(q, k)] = -mpk * sigma.conj() + mqk * c;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * sigma.conj();
                    v[(k, q)] = -vkp * sigma + vkq * c;
                }
            }
        }
    }

    let mut w: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
    w.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut vs = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vs[(k, new_col)] = v[(k, old_col)];
        }
    }
    (Array1::from_vec(w), vs)
}

/// Eigenvalues only.
pub fn eigvalsh(a: &Array2<C64>) -> Array1<f64> {
    eigh(a).0
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigval(a: &Array2<C64>) -> f64 {
    eigvalsh(a)[0]
}

/// Spectral norm (largest |eigenvalue|) of a Hermitian matrix.
pub fn spectral_norm_hermitian(a: &Array2<C64>) -> f64 {
    let w = eigvalsh(a);
    w.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Trace distance `(1/2) tr |a - b|` between Hermitian matrices.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let d = a - b;
    let w = eigvalsh(&hermitize(&d));
    0.5 * w.iter().map(|x| x.abs()).sum::<f64>()
}

/// `exp(-i t h)` for Hermitian `h`, via the eigendecomposition.
pub fn exp_minus_i_ht(h: &Array2<C64>, t: f64) -> Array2<C64> {
    let n = h.nrows();
    let (w, v) = eigh(h);
    let mut phased = v.clone();
    for j in 0..n {
        let ph = C64::from_polar(1.0, -w[j] * t);
        for i in 0..n {
            phased[(i, j)] *= ph;
        }
    }
    phased.dot(&dagger(&v))
}

/// Householder QR of a real tall matrix, reusable against many complex
/// right-hand sides. Columns whose pivot falls below `rank_tol` relative to
/// the leading pivot are treated as absent (their solution entry is zero);
/// the inversion of the coherent-state overlap map relies on this guard.
pub struct QrLstsq {
    qr: Array2<f64>,
    beta: Vec<f64>,
    rank_tol: f64,
    m: usize,
    n: usize,
}

impl QrLstsq {
    pub fn new(a: Array2<f64>, rank_tol: f64) -> Self {
        let (m, n) = a.dim();
        assert!(m >= n, "QrLstsq: need at least as many rows as columns");
        let mut qr = a;
        let mut beta = vec![0.0; n];
        for k in 0..n {
            let mut norm2 = 0.0;
            for i in k..m {
                norm2 += qr[(i, k)] * qr[(i, k)];
            }
            let norm = norm2.sqrt();
            if norm <= 1e-300 {
                beta[k] = 0.0;
                continue;
            }
            let alpha = if qr[(k, k)] >= 0.0 { -norm } else { norm };
            let v0 = qr[(k, k)] - alpha;
            qr[(k, k)] = alpha;
            // store the reflector below the diagonal, normalized to v0 = 1
            for i in k + 1..m {
                qr[(i, k)] /= v0;
            }
            beta[k] = -v0 / alpha;
            for j in k + 1..n {
                let mut dot = qr[(k, j)];
                for i in k + 1..m {
                    dot += qr[(i, k)] * qr[(i, j)];
                }
                dot *= beta[k];
                qr[(k, j)] -= dot;
                for i in k + 1..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= dot * vik;
                }
            }
        }
        QrLstsq {
            qr,
            beta,
            rank_tol,
            m,
            n,
        }
    }

    /// Least-squares solution for one complex right-hand side.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.m);
        let mut y = b.to_vec();
        for k in 0..self.n {
            if self.beta[k] == 0.0 {
                continue;
            }
            let mut dot = y[k];
            for i in k + 1..self.m {
                dot += y[i] * self.qr[(i, k)];
            }
            dot *= self.beta[k];
            y[k] -= dot;
            for i in k + 1..self.m {
                let vik = self.qr[(i, k)];
                y[i] -= dot * vik;
            }
        }
        let pivot0 = self.qr[(0, 0)].abs().max(1e-300);
        let mut x = vec![C64::new(0.0, 0.0); self.n];
        for k in (0..self.n).rev() {
            let rkk = self.qr[(k, k)];
            if rkk.abs() < self.rank_tol * pivot0 {
                x[k] = C64::new(0.0, 0.0);
                continue;
            }
            let mut acc = y[k];
            for j in k + 1..self.n {
                acc -= x[j] * self.qr[(k, j)];
            }
            x[k] = acc / rkk;
        }
        x
    }
}
