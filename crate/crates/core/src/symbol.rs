//! Closed-form analytic symbols on complexified phase space `C^n_x x C^n_xi`.
//!
//! A [`SymbolExpr`] is a finite sum of terms
//!
//! ```text
//!     c * x^m * xi^k * exp(i (a.x + b.xi))
//! ```
//!
//! with complex `c`, integer exponent vectors `m, k` and real frequency vectors
//! `a, b`. The class is closed under differentiation, products, Poisson
//! brackets and the holomorphic conjugation `p -> conj(p(conj(rho)))`, so all
//! of the bracket calculus stays exact.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Threshold on imaginary parts below which a point counts as real.
pub const REAL_POINT_TOL: f64 = 1e-14;

/// A point `(x, xi)` of complexified phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<C64>,
    pub xi: Vec<C64>,
}

impl PhasePoint {
    pub fn new(x: Vec<C64>, xi: Vec<C64>) -> Result<Self> {
        if x.len() != xi.len() {
            return Err(Error::Dimension { expected: x.len(), got: xi.len() });
        }
        if x.iter().chain(&xi).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { x, xi })
    }

    pub fn real(x: &[f64], xi: &[f64]) -> Result<Self> {
        Self::new(
            x.iter().map(|&v| C64::new(v, 0.0)).collect(),
            xi.iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
    }

    pub fn zeros(n: usize) -> Self {
        Self { x: vec![C64::new(0.0, 0.0); n], xi: vec![C64::new(0.0, 0.0); n] }
    }

    /// Builds a point from the stacked coordinate vector `[x; xi]`.
    pub fn from_stacked(v: &[C64]) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::InvalidParameter(format!("odd stacked length {}", v.len())));
        }
        let n = v.len() / 2;
        Self::new(v[..n].to_vec(), v[n..].to_vec())
    }

    pub fn stacked(&self) -> Vec<C64> {
        self.x.iter().chain(&self.xi).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_real(&self) -> bool {
        self.max_imag() <= REAL_POINT_TOL
    }

    pub fn max_imag(&self) -> f64 {
        self.x.iter().chain(&self.xi).map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn conj(&self) -> Self {
        Self {
            x: self.x.iter().map(|c| c.conj()).collect(),
            xi: self.xi.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.stacked()
            .iter()
            .zip(other.stacked())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Phase-space coordinate selector used for differentiation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X(usize),
    Xi(usize),
}

/// One term `c * x^xpow * xi^xipow * exp(i (xfreq.x + xifreq.xi))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: C64,
    pub xpow: Vec<u32>,
    pub xipow: Vec<u32>,
    pub xfreq: Vec<f64>,
    pub xifreq: Vec<f64>,
}

impl Term {
    pub fn monomial(coeff: C64, xpow: Vec<u32>, xipow: Vec<u32>) -> Self {
        let n = xpow.len();
        Self { coeff, xpow, xipow, xfreq: vec![0.0; n], xifreq: vec![0.0; n] }
    }

    pub fn constant(coeff: C64, n: usize) -> Self {
        Self::monomial(coeff, vec![0; n], vec![0; n])
    }

    fn has_freq(&self) -> bool {
        self.xfreq.iter().chain(&self.xifreq).any(|&f| f != 0.0)
    }

    fn degree(&self) -> u32 {
        self.xpow.iter().chain(&self.xipow).sum()
    }

    fn key(&self) -> TermKey {
        // -0.0 and 0.0 must collide
        let bits = |v: &[f64]| v.iter().map(|f| (f + 0.0).to_bits()).collect::<Vec<_>>();
        TermKey {
            xpow: self.xpow.clone(),
            xipow: self.xipow.clone(),
            xfreq: bits(&self.xfreq),
            xifreq: bits(&self.xifreq),
        }
    }

    fn value(&self, x: &[C64], xi: &[C64]) -> C64 {
        let mut v = self.coeff;
        for (c, &m) in x.iter().zip(&self.xpow) {
            if m > 0 {
                v *= c.powu(m);
            }
        }
        for (c, &m) in xi.iter().zip(&self.xipow) {
            if m > 0 {
                v *= c.powu(m);
            }
        }
        if self.has_freq() {
            v *= self.phase(x, xi);
        }
        v
    }

    fn phase(&self, x: &[C64], xi: &[C64]) -> C64 {
        let mut arg = C64::new(0.0, 0.0);
        for (c, &a) in x.iter().zip(&self.xfreq) {
            arg += c * a;
        }
        for (c, &b) in xi.iter().zip(&self.xifreq) {
            arg += c * b;
        }
        (I * arg).exp()
    }

    /// Accumulates this term's gradient into `gx`, `gxi`.
    fn add_gradient(&self, x: &[C64], xi: &[C64], gx: &mut [C64], gxi: &mut [C64]) {
        let n = x.len();
        // variables stacked as [x; xi]
        let var = |v: usize| if v < n { x[v] } else { xi[v - n] };
        let pow = |v: usize| if v < n { self.xpow[v] } else { self.xipow[v - n] };
        let freq = |v: usize| if v < n { self.xfreq[v] } else { self.xifreq[v - n] };
        let e = if self.has_freq() { self.phase(x, xi) } else { C64::new(1.0, 0.0) };

        let m = 2 * n;
        let pw: Vec<C64> = (0..m).map(|v| var(v).powu(pow(v))).collect();
        // prefix/suffix products avoid dividing by a vanishing coordinate
        let mut prefix = vec![C64::new(1.0, 0.0); m + 1];
        for v in 0..m {
            prefix[v + 1] = prefix[v] * pw[v];
        }
        let mut suffix = vec![C64::new(1.0, 0.0); m + 1];
        for v in (0..m).rev() {
            suffix[v] = suffix[v + 1] * pw[v];
        }
        let full = self.coeff * prefix[m] * e;
        for v in 0..m {
            let mut d = I * freq(v) * full;
            let p = pow(v);
            if p > 0 {
                let dpow = var(v).powu(p - 1) * p as f64;
                d += self.coeff * e * prefix[v] * suffix[v + 1] * dpow;
            }
            if v < n {
                gx[v] += d;
            } else {
                gxi[v - n] += d;
            }
        }
    }

    fn derivative(&self, var: Var) -> Vec<Term> {
        let (pow, freq) = match var {
            Var::X(j) => (self.xpow[j], self.xfreq[j]),
            Var::Xi(j) => (self.xipow[j], self.xifreq[j]),
        };
        let mut out = Vec::with_capacity(2);
        if pow > 0 {
            let mut t = self.clone();
            t.coeff *= pow as f64;
            match var {
                Var::X(j) => t.xpow[j] -= 1,
                Var::Xi(j) => t.xipow[j] -= 1,
            }
            out.push(t);
        }
        if freq != 0.0 {
            let mut t = self.clone();
            t.coeff *= I * freq;
            out.push(t);
        }
        out
    }

    fn product(&self, other: &Term) -> Term {
        let add_u = |a: &[u32], b: &[u32]| a.iter().zip(b).map(|(p, q)| p + q).collect();
        let add_f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p + q).collect();
        Term {
            coeff: self.coeff * other.coeff,
            xpow: add_u(&self.xpow, &other.xpow),
            xipow: add_u(&self.xipow, &other.xipow),
            xfreq: add_f(&self.xfreq, &other.xfreq),
            xifreq: add_f(&self.xifreq, &other.xifreq),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct TermKey {
    xpow: Vec<u32>,
    xipow: Vec<u32>,
    xfreq: Vec<u64>,
    xifreq: Vec<u64>,
}

/// An analytic symbol with exact derivative rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolExpr {
    n: usize,
    terms: Vec<Term>,
    tube_radius: f64,
}

impl SymbolExpr {
    /// Default declared tube radius for built-in symbols.
    pub const DEFAULT_TUBE: f64 = 1.0;

    pub fn new(n: usize, terms: Vec<Term>, tube_radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSymbol("dimension must be positive".into()));
        }
        if !(tube_radius > 0.0) || !tube_radius.is_finite() {
            return Err(Error::InvalidSymbol(format!("tube radius must be positive, got {tube_radius}")));
        }
        for t in &terms {
            if t.xpow.len() != n || t.xipow.len() != n || t.xfreq.len() != n || t.xifreq.len() != n {
                return Err(Error::InvalidSymbol(format!("term vectors must all have length {n}")));
            }
            if !t.coeff.re.is_finite() || !t.coeff.im.is_finite() {
                return Err(Error::InvalidSymbol("non-finite coefficient".into()));
            }
            if t.xfreq.iter().chain(&t.xifreq).any(|f| !f.is_finite()) {
                return Err(Error::InvalidSymbol("non-finite frequency".into()));
            }
        }
        Ok(Self { n, terms, tube_radius }.simplified())
    }

    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new(), tube_radius: Self::DEFAULT_TUBE }
    }

    pub fn constant(n: usize, c: C64) -> Self {
        Self { n, terms: vec![Term::constant(c, n)], tube_radius: Self::DEFAULT_TUBE }.simplified()
    }

    /// The coordinate function `x_j` or `xi_j`.
    pub fn coordinate(n: usize, var: Var) -> Self {
        let mut t = Term::constant(C64::new(1.0, 0.0), n);
        match var {
            Var::X(j) => t.xpow[j] = 1,
            Var::Xi(j) => t.xipow[j] = 1,
        }
        Self { n, terms: vec![t], tube_radius: Self::DEFAULT_TUBE }
    }

    /// `c * exp(i (a.x + b.xi))`.
    pub fn exponential(n: usize, c: C64, xfreq: Vec<f64>, xifreq: Vec<f64>) -> Result<Self> {
        let t = Term { coeff: c, xpow: vec![0; n], xipow: vec![0; n], xfreq, xifreq };
        Self::new(n, vec![t], Self::DEFAULT_TUBE)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn with_tube_radius(mut self, tau: f64) -> Self {
        self.tube_radius = tau;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_polynomial(&self) -> bool {
        !self.terms.iter().any(Term::has_freq)
    }

    /// Total polynomial degree, `None` if any trigonometric factor is present.
    pub fn degree(&self) -> Option<u32> {
        if !self.is_polynomial() {
            return None;
        }
        Some(self.terms.iter().map(Term::degree).max().unwrap_or(0))
    }

    /// True if the symbol depends on some `x_j`.
    pub fn depends_on_x(&self) -> bool {
        self.terms
            .iter()
            .any(|t| t.xpow.iter().any(|&m| m > 0) || t.xfreq.iter().any(|&f| f != 0.0))
    }

    /// Collects like terms and drops coefficients that cancelled to rounding level.
    pub fn simplified(self) -> Self {
        let mut index: HashMap<TermKey, usize> = HashMap::new();
        let mut acc: Vec<(Term, f64)> = Vec::new();
        for t in self.terms {
            let key = t.key();
            let mag = t.coeff.norm();
            match index.get(&key) {
                Some(&k) => {
                    acc[k].0.coeff += t.coeff;
                    acc[k].1 += mag;
                }
                None => {
                    index.insert(key, acc.len());
                    acc.push((t, mag));
                }
            }
        }
        let terms = acc
            .into_iter()
            .filter(|(t, mag)| {
                let c = t.coeff.norm();
                c != 0.0 && c > 8.0 * f64::EPSILON * mag
            })
            .map(|(t, _)| t)
            .collect();
        Self { n: self.n, terms, tube_radius: self.tube_radius }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::Dimension { expected: self.n, got: n });
        }
        Ok(())
    }

    /// Evaluates at `rho`. Points outside the declared tube are evaluated but logged.
    pub fn eval(&self, rho: &PhasePoint) -> Result<C64> {
        self.check_dim(rho.dim())?;
        if rho.max_imag() > self.tube_radius {
            log::warn!(
                "evaluating outside the declared tube: max |Im| = {} > {}",
                rho.max_imag(),
                self.tube_radius
            );
        }
        Ok(self.value(&rho.x, &rho.xi))
    }

    /// Unchecked evaluation on coordinate slices.
    pub fn value(&self, x: &[C64], xi: &[C64]) -> C64 {
        debug_assert_eq!(x.len(), self.n);
        self.terms.iter().map(|t| t.value(x, xi)).sum()
    }

    /// Evaluation at a real point.
    pub fn value_real(&self, x: &[f64], xi: &[f64]) -> C64 {
        let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let xic: Vec<C64> = xi.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.value(&xc, &xic)
    }

    /// Holomorphic gradient `(dp/dx, dp/dxi)` at `rho`.
    pub fn gradient(&self, rho: &PhasePoint) -> Result<(Vec<C64>, Vec<C64>)> {
        self.check_dim(rho.dim())?;
        Ok(self.gradient_at(&rho.x, &rho.xi))
    }

    pub fn gradient_at(&self, x: &[C64], xi: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let mut gx = vec![C64::new(0.0, 0.0); self.n];
        let mut gxi = vec![C64::new(0.0, 0.0); self.n];
        for t in &self.terms {
            t.add_gradient(x, xi, &mut gx, &mut gxi);
        }
        (gx, gxi)
    }

    /// Exact partial derivative as a new symbol.
    pub fn derivative(&self, var: Var) -> Self {
        let terms = self.terms.iter().flat_map(|t| t.derivative(var)).collect();
        Self { n: self.n, terms, tube_radius: self.tube_radius }.simplified()
    }

    /// `p -> conj(p(conj(rho)))`, the holomorphic extension of `conj(p)` from real points.
    pub fn conj(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.conj(),
                xpow: t.xpow.clone(),
                xipow: t.xipow.clone(),
                xfreq: t.xfreq.iter().map(|f| -f).collect(),
                xifreq: t.xifreq.iter().map(|f| -f).collect(),
            })
            .collect();
        Self { n: self.n, terms, tube_radius: self.tube_radius }.simplified()
    }

    pub fn scale(&self, c: C64) -> Self {
        let terms = self.terms.iter().map(|t| Term { coeff: t.coeff * c, ..t.clone() }).collect();
        Self { n: self.n, terms, tube_radius: self.tube_radius }.simplified()
    }

    /// Real part as a symbol: `(p + conj p) / 2`.
    pub fn real_part(&self) -> Self {
        (self + &self.conj()).scale(C64::new(0.5, 0.0))
    }

    /// Imaginary part as a symbol: `(p - conj p) / 2i`.
    pub fn imag_part(&self) -> Self {
        (self - &self.conj()).scale(C64::new(0.0, -0.5))
    }

    /// True if the symbol is real on real points (exactly, at the AST level).
    pub fn is_real_on_reals(&self) -> bool {
        (self - &self.conj()).is_zero()
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        self.check_dim(other.n)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|t| Term { coeff: t.coeff * sign, ..t.clone() }));
        let tube = self.tube_radius.min(other.tube_radius);
        Ok(Self { n: self.n, terms, tube_radius: tube }.simplified())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.n)?;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.product(b));
            }
        }
        let tube = self.tube_radius.min(other.tube_radius);
        Ok(Self { n: self.n, terms, tube_radius: tube }.simplified())
    }
}

impl Add for &SymbolExpr {
    type Output = SymbolExpr;
    fn add(self, rhs: Self) -> SymbolExpr {
        self.try_add(rhs).expect("symbol dimension mismatch")
    }
}

impl Sub for &SymbolExpr {
    type Output = SymbolExpr;
    fn sub(self, rhs: Self) -> SymbolExpr {
        self.try_sub(rhs).expect("symbol dimension mismatch")
    }
}

impl Mul for &SymbolExpr {
    type Output = SymbolExpr;
    fn mul(self, rhs: Self) -> SymbolExpr {
        self.try_mul(rhs).expect("symbol dimension mismatch")
    }
}

impl Neg for &SymbolExpr {
    type Output = SymbolExpr;
    fn neg(self) -> SymbolExpr {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Poisson bracket `{f, g} = sum_j f_xi_j g_x_j - f_x_j g_xi_j`.
pub fn poisson_bracket(f: &SymbolExpr, g: &SymbolExpr) -> Result<SymbolExpr> {
    f.check_dim(g.n)?;
    let n = f.n;
    let mut acc = SymbolExpr::zero(n).with_tube_radius(f.tube_radius.min(g.tube_radius));
    for j in 0..n {
        let a = f.derivative(Var::Xi(j)).try_mul(&g.derivative(Var::X(j)))?;
        let b = f.derivative(Var::X(j)).try_mul(&g.derivative(Var::Xi(j)))?;
        acc = acc.try_add(&a)?.try_sub(&b)?;
    }
    Ok(acc)
}

/// `{Re p, Im p}` written as `(i/2) {p, conj p}`; real-valued on real points.
pub fn real_bracket(p: &SymbolExpr) -> SymbolExpr {
    poisson_bracket(p, &p.conj())
        .expect("same dimension")
        .scale(C64::new(0.0, 0.5))
}

/// `{Re p, Im p}` at a real point from the holomorphic gradient alone:
/// `(i/2)(p_xi . conj(p_x) - p_x . conj(p_xi)) = -Im(p_xi . conj(p_x))`.
pub fn real_bracket_from_gradient(gx: &[C64], gxi: &[C64]) -> f64 {
    -gxi.iter().zip(gx).map(|(a, b)| a * b.conj()).sum::<C64>().im
}

/// Anything that can be evaluated and differentiated on phase space: closed-form
/// symbols, flow-deformed symbols.
pub trait PhaseFunction: Sync {
    fn dim(&self) -> usize;

    fn value_at(&self, x: &[C64], xi: &[C64]) -> Result<C64>;

    fn gradient_at_point(&self, x: &[C64], xi: &[C64]) -> Result<(Vec<C64>, Vec<C64>)>;

    /// The closed form, if this function has one.
    fn closed_form(&self) -> Option<&SymbolExpr> {
        None
    }

    fn value_real(&self, x: &[f64], xi: &[f64]) -> Result<C64> {
        let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let xic: Vec<C64> = xi.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.value_at(&xc, &xic)
    }
}

impl PhaseFunction for SymbolExpr {
    fn dim(&self) -> usize {
        self.n
    }

    fn value_at(&self, x: &[C64], xi: &[C64]) -> Result<C64> {
        self.check_dim(x.len())?;
        Ok(self.value(x, xi))
    }

    fn gradient_at_point(&self, x: &[C64], xi: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        self.check_dim(x.len())?;
        Ok(self.gradient_at(x, xi))
    }

    fn closed_form(&self) -> Option<&SymbolExpr> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn cho_values() {
        let p = catalog::cho(1.0, c(0.0, 0.0));
        let rho = PhasePoint::real(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(p.eval(&rho).unwrap(), c(0.5, 0.5));
        assert_eq!(p.eval(&PhasePoint::zeros(2)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = catalog::cho(1.0, c(0.0, 0.0));
        let rho = PhasePoint::real(&[1.0], &[0.0]).unwrap();
        assert!(matches!(p.eval(&rho), Err(Error::Dimension { .. })));
        assert!(PhasePoint::new(vec![c(0.0, 0.0)], vec![]).is_err());
        assert!(matches!(
            PhasePoint::real(&[f64::NAN], &[0.0]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn product_rule_gradient() {
        let p = &SymbolExpr::coordinate(2, Var::X(0)) * &SymbolExpr::coordinate(2, Var::Xi(0));
        let rho = PhasePoint::real(&[2.0, 0.0], &[3.0, 0.0]).unwrap();
        let (gx, gxi) = p.gradient(&rho).unwrap();
        assert_eq!(gx, vec![c(3.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(gxi, vec![c(2.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let p = SymbolExpr::constant(2, c(1.5, -2.0));
        let rho = PhasePoint::real(&[0.3, -0.1], &[0.7, 2.0]).unwrap();
        let (gx, gxi) = p.gradient(&rho).unwrap();
        assert!(gx.iter().chain(&gxi).all(|v| v.norm() == 0.0));
        assert!(p.derivative(Var::X(1)).is_zero());
    }

    #[test]
    fn canonical_pair_bracket() {
        let xi1 = SymbolExpr::coordinate(2, Var::Xi(0));
        let x1 = SymbolExpr::coordinate(2, Var::X(0));
        let b = poisson_bracket(&xi1, &x1).unwrap();
        assert_eq!(b, SymbolExpr::constant(2, c(1.0, 0.0)));
    }

    #[test]
    fn separated_oscillator_is_integrable() {
        let p = catalog::cho(1.0, c(0.5, 0.5));
        assert!(real_bracket(&p).is_zero());
        let p = catalog::cho(2.5, c(0.0, 0.0));
        assert!(real_bracket(&p).is_zero());
    }

    #[test]
    fn real_bracket_of_xi_plus_ix() {
        let p = &SymbolExpr::coordinate(1, Var::Xi(0))
            + &SymbolExpr::coordinate(1, Var::X(0)).scale(c(0.0, 1.0));
        assert_eq!(real_bracket(&p), SymbolExpr::constant(1, c(1.0, 0.0)));
        let v = real_bracket_from_gradient(&[c(0.0, 1.0)], &[c(1.0, 0.0)]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn torus_symbol_is_integrable() {
        assert!(real_bracket(&catalog::torus_coupled(0.3)).is_zero());
        assert!(!catalog::torus_coupled(0.3).depends_on_x());
    }

    #[test]
    fn real_and_imaginary_parts_recombine() {
        let p = catalog::sin_x1_cos_xi2().try_add(&catalog::cho(1.0, c(0.2, 0.1))).unwrap();
        let back = &p.real_part() + &p.imag_part().scale(c(0.0, 1.0));
        let rho = PhasePoint::new(vec![c(0.3, 0.1), c(-0.2, 0.05)], vec![c(0.7, -0.2), c(0.1, 0.0)]).unwrap();
        assert!((back.eval(&rho).unwrap() - p.eval(&rho).unwrap()).norm() < 1e-14);
        assert!(catalog::sin_x1_cos_xi2().is_real_on_reals());
        assert!(!catalog::cho(1.0, c(0.0, 0.0)).is_real_on_reals());
    }

    #[test]
    fn simplification_cancels() {
        let p = catalog::cho(1.0, c(0.3, 0.0));
        assert!((&p - &p).is_zero());
        assert_eq!(p.degree(), Some(2));
        assert_eq!(catalog::sin_x1_cos_xi2().degree(), None);
    }
}
