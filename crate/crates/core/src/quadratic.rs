//! Complex quadratic forms `q(y) = 1/2 y^T Q y + l^T y + c` on `C^{2n}`, with
//! `y = [x; xi]`, and their Hamilton matrices.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::symbol::{SymbolExpr, Term};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub n: usize,
    /// Symmetric `2n x 2n`, row-major.
    pub q: Vec<C64>,
    pub l: Vec<C64>,
    pub c: C64,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl QuadraticForm {
    pub fn from_symbol(s: &SymbolExpr) -> Result<Self> {
        match s.degree() {
            Some(d) if d <= 2 => {}
            _ => return Err(Error::NotQuadratic),
        }
        let n = s.dim();
        let m = 2 * n;
        let mut q = vec![zero(); m * m];
        let mut l = vec![zero(); m];
        let mut c = zero();
        for t in s.terms() {
            let vars: Vec<(usize, u32)> = t
                .xpow
                .iter()
                .chain(&t.xipow)
                .copied()
                .enumerate()
                .filter(|&(_, p)| p > 0)
                .collect();
            match vars.as_slice() {
                [] => c += t.coeff,
                [(v, 1)] => l[*v] += t.coeff,
                [(v, 2)] => q[v * m + v] += 2.0 * t.coeff,
                [(a, 1), (b, 1)] => {
                    q[a * m + b] += t.coeff;
                    q[b * m + a] += t.coeff;
                }
                _ => return Err(Error::NotQuadratic),
            }
        }
        Ok(Self { n, q, l, c })
    }

    pub fn to_symbol(&self) -> SymbolExpr {
        let n = self.n;
        let m = 2 * n;
        let unit = |v: usize, p: u32| {
            let mut xpow = vec![0; n];
            let mut xipow = vec![0; n];
            if v < n {
                xpow[v] += p;
            } else {
                xipow[v - n] += p;
            }
            (xpow, xipow)
        };
        let mut terms = vec![Term::constant(self.c, n)];
        for v in 0..m {
            let (xp, xip) = unit(v, 1);
            terms.push(Term::monomial(self.l[v], xp, xip));
            let (xp, xip) = unit(v, 2);
            terms.push(Term::monomial(0.5 * self.q[v * m + v], xp, xip));
            for w in v + 1..m {
                let (mut xp, mut xip) = unit(v, 1);
                if w < n {
                    xp[w] += 1;
                } else {
                    xip[w - n] += 1;
                }
                terms.push(Term::monomial(self.q[v * m + w], xp, xip));
            }
        }
        SymbolExpr::new(n, terms, SymbolExpr::DEFAULT_TUBE).expect("valid quadratic symbol")
    }

    pub fn is_homogeneous(&self) -> bool {
        self.l.iter().all(|v| v.norm() == 0.0) && self.c.norm() == 0.0
    }

    /// `q(A y + b)` for a `2n x 2n` matrix `A` (row-major) and shift `b`.
    pub fn compose_affine(&self, a: &[C64], b: &[C64]) -> Self {
        let m = 2 * self.n;
        let qa = matmul(&self.q, a, m);
        let q2 = matmul(&transpose(a, m), &qa, m);
        // symmetrize away rounding asymmetry
        let mut q_new = vec![zero(); m * m];
        for i in 0..m {
            for j in 0..m {
                q_new[i * m + j] = 0.5 * (q2[i * m + j] + q2[j * m + i]);
            }
        }
        let qb = matvec(&self.q, b, m);
        let lin: Vec<C64> = (0..m).map(|i| qb[i] + self.l[i]).collect();
        let l_new = matvec(&transpose(a, m), &lin, m);
        let c_new = self.c
            + 0.5 * b.iter().zip(&qb).map(|(x, y)| x * y).sum::<C64>()
            + self.l.iter().zip(b).map(|(x, y)| x * y).sum::<C64>();
        Self { n: self.n, q: q_new, l: l_new, c: c_new }
    }

    /// Hamilton matrix `F` with `H_q y = F y + (linear part)`, using the
    /// convention `H_q = q_xi d/dx - q_x d/dxi`: `F = [[Q_xi,x, Q_xi,xi], [-Q_x,x, -Q_x,xi]]`.
    pub fn hamilton_matrix(&self) -> Vec<C64> {
        let n = self.n;
        let m = 2 * n;
        let mut f = vec![zero(); m * m];
        for i in 0..n {
            for j in 0..m {
                f[i * m + j] = self.q[(n + i) * m + j];
                f[(n + i) * m + j] = -self.q[i * m + j];
            }
        }
        f
    }
}

pub(crate) fn matmul(a: &[C64], b: &[C64], m: usize) -> Vec<C64> {
    let mut out = vec![zero(); m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

pub(crate) fn matvec(a: &[C64], v: &[C64], m: usize) -> Vec<C64> {
    (0..m).map(|i| (0..m).map(|k| a[i * m + k] * v[k]).sum()).collect()
}

pub(crate) fn transpose(a: &[C64], m: usize) -> Vec<C64> {
    let mut out = vec![zero(); m * m];
    for i in 0..m {
        for j in 0..m {
            out[j * m + i] = a[i * m + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::symbol::PhasePoint;

    #[test]
    fn roundtrip_through_symbol() {
        let p = catalog::cho(0.7, C64::new(0.2, -0.1)).try_add(&catalog::x1x2()).unwrap();
        let q = QuadraticForm::from_symbol(&p).unwrap();
        let back = q.to_symbol();
        let rho = PhasePoint::real(&[0.3, -1.2], &[0.8, 0.4]).unwrap();
        assert!((back.eval(&rho).unwrap() - p.eval(&rho).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn rejects_higher_degree_and_trig() {
        let x = catalog::x1x2();
        assert!(QuadraticForm::from_symbol(&(&x * &x)).is_err());
        assert!(QuadraticForm::from_symbol(&catalog::sin_x1_cos_xi2()).is_err());
    }

    #[test]
    fn oscillator_hamilton_matrix_is_rotation() {
        let q = QuadraticForm::from_symbol(&catalog::oscillator(1)).unwrap();
        let f = q.hamilton_matrix();
        assert_eq!(f, vec![zero(), C64::new(1.0, 0.0), C64::new(-1.0, 0.0), zero()]);
    }
}
