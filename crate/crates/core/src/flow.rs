//! Complex canonical flows generated by holomorphic `G_t` and the deformed
//! symbols `p_t = p o kappa_t`.
//!
//! `kappa_t` is defined by `d/dt kappa_t(rho) = d kappa_t(rho) . V_t(rho)`, `kappa_0 = id`,
//! where `V_t = i H_{G_t}` acts through its real realification `V + conj(V)`.
//! With this right-composition convention `d/dt p_t = i H_{G_t} p_t`. The
//! inverse of `kappa_t` is the ordinary flow of `-V_s`, so a point is mapped by
//! integrating `dy/du = V_{t-u}(y)` from `u = 0` to `u = t` starting at `rho`.
//! For `t`-independent `G` this is the usual Hamilton flow of `i G`.
//!
//! Integration is done on the complex coordinates directly, which is the same
//! Runge-Kutta scheme as on the real `4n`-dimensional system
//! `(Re x, Im x, Re xi, Im xi)`; the error norm is taken over real and imaginary
//! parts separately.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, SymbolJson};
use crate::error::{Error, Result};
use crate::quadratic::QuadraticForm;
use crate::symbol::{PhaseFunction, PhasePoint, SymbolExpr, Var};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Derivative symbols of one generator coefficient, variables stacked `[x; xi]`.
#[derive(Clone, Debug)]
struct GeneratorDerivs {
    first: Vec<SymbolExpr>,
    second: Vec<SymbolExpr>,
}

impl GeneratorDerivs {
    fn new(g: &SymbolExpr) -> Self {
        let n = g.dim();
        let vars: Vec<Var> = (0..n).map(Var::X).chain((0..n).map(Var::Xi)).collect();
        let first: Vec<SymbolExpr> = vars.iter().map(|&v| g.derivative(v)).collect();
        let second = first
            .iter()
            .flat_map(|d| vars.iter().map(move |&v| d.derivative(v)))
            .collect();
        Self { first, second }
    }
}

/// A generator family `G_t = sum_k t^k G_k` plus integrator settings.
#[derive(Clone, Debug)]
pub struct Deformation {
    generators: Vec<SymbolExpr>,
    derivs: Vec<GeneratorDerivs>,
    pub t_max: f64,
    pub tol: f64,
    pub step_hint: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 200_000;

impl Deformation {
    /// A `t`-independent generator.
    pub fn new(g: SymbolExpr) -> Self {
        Self::polynomial(vec![g]).expect("single generator")
    }

    /// `G_t = sum_k t^k coeffs[k]`.
    pub fn polynomial(coeffs: Vec<SymbolExpr>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::InvalidParameter("deformation needs at least one generator".into()));
        };
        let n = first.dim();
        if let Some(bad) = coeffs.iter().find(|g| g.dim() != n) {
            return Err(Error::Dimension { expected: n, got: bad.dim() });
        }
        let derivs = coeffs.iter().map(GeneratorDerivs::new).collect();
        Ok(Self { generators: coeffs, derivs, t_max: 1.0, tol: DEFAULT_TOL, step_hint: 0.0 })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn generators(&self) -> &[SymbolExpr] {
        &self.generators
    }

    pub fn is_time_independent(&self) -> bool {
        self.generators.iter().skip(1).all(SymbolExpr::is_zero)
    }

    /// `G_s` as a single symbol.
    pub fn generator_at(&self, s: f64) -> SymbolExpr {
        let mut acc = SymbolExpr::zero(self.dim()).with_tube_radius(self.tube_radius());
        let mut pw = 1.0;
        for g in &self.generators {
            acc = &acc + &g.scale(C64::new(pw, 0.0));
            pw *= s;
        }
        acc
    }

    pub fn tube_radius(&self) -> f64 {
        self.generators.iter().map(SymbolExpr::tube_radius).fold(f64::INFINITY, f64::min)
    }

    /// True if every generator is a polynomial of degree <= 2, so flows are affine.
    pub fn is_quadratic(&self) -> bool {
        self.generators.iter().all(|g| matches!(g.degree(), Some(d) if d <= 2))
    }

    fn field(&self, s: f64, y: &[C64], with_jacobian: bool, out: &mut [C64]) {
        let n = self.dim();
        let m = 2 * n;
        let (x, xi) = y[..m].split_at(n);
        let mut pw = 1.0;
        let mut a = if with_jacobian { vec![C64::new(0.0, 0.0); m * m] } else { Vec::new() };
        out[..m].iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for d in &self.derivs {
            if pw != 0.0 {
                for i in 0..n {
                    out[i] += I * pw * d.first[n + i].value(x, xi);
                    out[n + i] -= I * pw * d.first[i].value(x, xi);
                }
                if with_jacobian {
                    for i in 0..n {
                        for w in 0..m {
                            a[i * m + w] += I * pw * d.second[(n + i) * m + w].value(x, xi);
                            a[(n + i) * m + w] -= I * pw * d.second[i * m + w].value(x, xi);
                        }
                    }
                }
            }
            pw *= s;
        }
        if with_jacobian {
            let j = &y[m..];
            let dj = &mut out[m..];
            for r in 0..m {
                for c in 0..m {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..m {
                        acc += a[r * m + k] * j[k * m + c];
                    }
                    dj[r * m + c] = acc;
                }
            }
        }
    }
}

/// Endpoint and derivative of `kappa_t` at one point.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub endpoint: PhasePoint,
    /// `2n x 2n` holomorphic Jacobian `d kappa_t / d rho`, row-major; empty if not requested.
    pub jacobian: Vec<C64>,
    /// `|| J^T Omega J - Omega ||_2`; NaN if the Jacobian was not requested.
    pub canonical_defect: f64,
    /// Largest `|Im|` of any coordinate along the trajectory.
    pub max_excursion: f64,
    /// False if the trajectory left the generator's declared tube.
    pub certified: bool,
    pub steps: usize,
}

impl FlowResult {
    pub fn jacobian_mat(&self) -> Mat<C64> {
        let m = 2 * self.endpoint.dim();
        Mat::from_fn(m, m, |i, j| self.jacobian[i * m + j])
    }
}

/// Standard complex symplectic matrix `[[0, I], [-I, 0]]`.
pub fn omega(n: usize) -> Vec<C64> {
    let m = 2 * n;
    let mut o = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..n {
        o[i * m + n + i] = C64::new(1.0, 0.0);
        o[(n + i) * m + i] = C64::new(-1.0, 0.0);
    }
    o
}

/// Spectral norm of `J^T Omega J - Omega`.
pub fn canonical_defect(jac: &[C64], n: usize) -> f64 {
    let m = 2 * n;
    let o = omega(n);
    let d = Mat::from_fn(m, m, |r, c| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..m {
            for l in 0..m {
                acc += jac[k * m + r] * o[k * m + l] * jac[l * m + c];
            }
        }
        acc - o[r * m + c]
    });
    match d.singular_values() {
        Ok(sv) => sv.into_iter().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

// Dormand-Prince 5(4)
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lin(y: &[C64], terms: &[(f64, &[C64])], h: f64, out: &mut [C64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            if *c != 0.0 {
                acc += *c * k[i];
            }
        }
        *o = y[i] + h * acc;
    }
}

/// Integrates `kappa_t(rho)`, optionally with its Jacobian.
pub fn integrate_flow(d: &Deformation, t: f64, rho: &PhasePoint) -> Result<FlowResult> {
    integrate(d, t, rho, true)
}

pub(crate) fn integrate(
    d: &Deformation,
    t: f64,
    rho: &PhasePoint,
    with_jacobian: bool,
) -> Result<FlowResult> {
    let n = d.dim();
    if rho.dim() != n {
        return Err(Error::Dimension { expected: n, got: rho.dim() });
    }
    if t.abs() > d.t_max {
        return Err(Error::TimeOutOfRange { t, t_max: d.t_max });
    }
    let m = 2 * n;
    let len = if with_jacobian { m + m * m } else { m };
    let mut y = vec![C64::new(0.0, 0.0); len];
    y[..m].copy_from_slice(&rho.stacked());
    if with_jacobian {
        for i in 0..m {
            y[m + i * m + i] = C64::new(1.0, 0.0);
        }
    }
    let tube = d.tube_radius();
    let mut max_exc = rho.max_imag();
    let mut steps = 0;

    if t != 0.0 && !d.generators.iter().all(SymbolExpr::is_zero) {
        let dir = t.signum();
        let span = t.abs();
        let tol = d.tol;
        let mut h = if d.step_hint > 0.0 { d.step_hint.min(span) } else { (0.05 * span).min(0.01) };
        let mut u = 0.0;
        let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); len]; 7];
        let mut tmp = vec![C64::new(0.0, 0.0); len];
        let mut ynew = vec![C64::new(0.0, 0.0); len];
        // generator time at integration time u is t - u
        let s_of = |u: f64| t - dir * u;
        d.field(s_of(0.0), &y, with_jacobian, &mut k[0]);
        while u < span {
            if steps >= MAX_STEPS {
                return Err(Error::TooManySteps { max_steps: MAX_STEPS });
            }
            if u + h > span {
                h = span - u;
            }
            let hs = dir * h;
            let (k0, rest) = k.split_at_mut(1);
            lin(&y, &[(A21, &k0[0])], hs, &mut tmp);
            d.field(s_of(u + C2 * h), &tmp, with_jacobian, &mut rest[0]);
            lin(&y, &[(A31, &k0[0]), (A32, &rest[0])], hs, &mut tmp);
            d.field(s_of(u + C3 * h), &tmp, with_jacobian, &mut rest[1]);
            lin(&y, &[(A41, &k0[0]), (A42, &rest[0]), (A43, &rest[1])], hs, &mut tmp);
            d.field(s_of(u + C4 * h), &tmp, with_jacobian, &mut rest[2]);
            lin(
                &y,
                &[(A51, &k0[0]), (A52, &rest[0]), (A53, &rest[1]), (A54, &rest[2])],
                hs,
                &mut tmp,
            );
            d.field(s_of(u + C5 * h), &tmp, with_jacobian, &mut rest[3]);
            lin(
                &y,
                &[(A61, &k0[0]), (A62, &rest[0]), (A63, &rest[1]), (A64, &rest[2]), (A65, &rest[3])],
                hs,
                &mut tmp,
            );
            d.field(s_of(u + h), &tmp, with_jacobian, &mut rest[4]);
            lin(
                &y,
                &[(B1, &k0[0]), (B3, &rest[1]), (B4, &rest[2]), (B5, &rest[3]), (B6, &rest[4])],
                hs,
                &mut ynew,
            );
            d.field(s_of(u + h), &ynew, with_jacobian, &mut rest[5]);

            let mut err2 = 0.0;
            for i in 0..len {
                let e = hs
                    * (E1 * k0[0][i]
                        + E3 * rest[1][i]
                        + E4 * rest[2][i]
                        + E5 * rest[3][i]
                        + E6 * rest[4][i]
                        + E7 * rest[5][i]);
                let sre = tol + tol * y[i].re.abs().max(ynew[i].re.abs());
                let sim = tol + tol * y[i].im.abs().max(ynew[i].im.abs());
                err2 += (e.re / sre).powi(2) + (e.im / sim).powi(2);
            }
            let err = (err2 / (2 * len) as f64).sqrt();
            if !err.is_finite() {
                h *= 0.2;
            } else if err <= 1.0 {
                u += h;
                steps += 1;
                std::mem::swap(&mut y, &mut ynew);
                let (k0, rest) = k.split_at_mut(1);
                std::mem::swap(&mut k0[0], &mut rest[5]);
                max_exc = y[..m].iter().map(|c| c.im.abs()).fold(max_exc, f64::max);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= fac;
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
            if h < 1e-14 * span.max(1.0) && u < span {
                return Err(Error::StepUnderflow { t: dir * u });
            }
        }
    }

    let certified = max_exc <= tube;
    if !certified {
        log::warn!("flow left the declared tube: max |Im| = {max_exc} > {tube}");
    }
    let endpoint = PhasePoint::from_stacked(&y[..m])?;
    let (jacobian, defect) = if with_jacobian {
        let j = y[m..].to_vec();
        let def = canonical_defect(&j, n);
        (j, def)
    } else {
        (Vec::new(), f64::NAN)
    };
    Ok(FlowResult { endpoint, jacobian, canonical_defect: defect, max_excursion: max_exc, certified, steps })
}

/// `p_t = p o kappa_t`.
#[derive(Clone, Debug)]
pub struct DeformedSymbol {
    pub base: SymbolExpr,
    pub deformation: Deformation,
    pub t: f64,
    closed: Option<SymbolExpr>,
}

impl DeformedSymbol {
    pub fn new(base: SymbolExpr, deformation: Deformation, t: f64) -> Result<Self> {
        if base.dim() != deformation.dim() {
            return Err(Error::Dimension { expected: base.dim(), got: deformation.dim() });
        }
        if t.abs() > deformation.t_max {
            return Err(Error::TimeOutOfRange { t, t_max: deformation.t_max });
        }
        let mut out = Self { base, deformation, t, closed: None };
        if out.deformation.is_quadratic() && QuadraticForm::from_symbol(&out.base).is_ok() {
            out.closed = Some(out.deformed_quadratic()?);
        }
        Ok(out)
    }

    pub fn at(&self, t: f64) -> Result<Self> {
        Self::new(self.base.clone(), self.deformation.clone(), t)
    }

    /// `p_t(rho)` by integrating the flow.
    pub fn deformed_eval(&self, rho: &PhasePoint) -> Result<C64> {
        let r = integrate(&self.deformation, self.t, rho, false)?;
        self.base.eval(&r.endpoint)
    }

    /// Closed form of `p_t` when the base and every generator are polynomials of
    /// degree <= 2; the flow is then affine, `kappa_t(rho) = A rho + b`.
    pub fn deformed_quadratic(&self) -> Result<SymbolExpr> {
        let q = QuadraticForm::from_symbol(&self.base)?;
        if !self.deformation.is_quadratic() {
            return Err(Error::NotQuadratic);
        }
        if self.t == 0.0 || self.deformation.generators.iter().all(SymbolExpr::is_zero) {
            return Ok(self.base.clone());
        }
        let n = self.base.dim();
        let mut d = self.deformation.clone();
        d.tol = d.tol.min(1e-13);
        let r = integrate(&d, self.t, &PhasePoint::zeros(n), true)?;
        let b = r.endpoint.stacked();
        let out = q.compose_affine(&r.jacobian, &b).to_symbol();
        Ok(out.with_tube_radius(self.base.tube_radius()))
    }

}

impl PhaseFunction for DeformedSymbol {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value_at(&self, x: &[C64], xi: &[C64]) -> Result<C64> {
        let rho = PhasePoint::new(x.to_vec(), xi.to_vec())?;
        let r = integrate(&self.deformation, self.t, &rho, false)?;
        Ok(self.base.value(&r.endpoint.x, &r.endpoint.xi))
    }

    /// Chain rule through the flow Jacobian: `grad p_t = J^T grad p (kappa_t rho)`.
    fn gradient_at_point(&self, x: &[C64], xi: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let n = self.base.dim();
        let m = 2 * n;
        let rho = PhasePoint::new(x.to_vec(), xi.to_vec())?;
        let r = integrate(&self.deformation, self.t, &rho, true)?;
        let (gx, gxi) = self.base.gradient_at(&r.endpoint.x, &r.endpoint.xi);
        let g: Vec<C64> = gx.into_iter().chain(gxi).collect();
        let out: Vec<C64> = (0..m)
            .map(|c| (0..m).map(|k| r.jacobian[k * m + c] * g[k]).sum())
            .collect();
        Ok((out[..n].to_vec(), out[n..].to_vec()))
    }

    /// Available when the base and generator are quadratic.
    fn closed_form(&self) -> Option<&SymbolExpr> {
        self.closed.as_ref()
    }
}

/// A symbol given by name/JSON, or a list of them for `G_t = sum t^k G_k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolRef {
    Name(String),
    Inline(SymbolJson),
}

impl SymbolRef {
    pub fn resolve(&self) -> Result<SymbolExpr> {
        match self {
            SymbolRef::Name(s) => catalog::parse_symbol(s),
            SymbolRef::Inline(j) => j.clone().into_symbol(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorRef {
    Single(SymbolRef),
    Family(Vec<SymbolRef>),
}

/// Deformation JSON: `{ "G": <symbol or [symbols]>, "t_poly_degree": int, "tol": float }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationJson {
    #[serde(rename = "G")]
    pub g: GeneratorRef,
    #[serde(default)]
    pub t_poly_degree: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub t_max: Option<f64>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl DeformationJson {
    pub fn into_deformation(self) -> Result<Deformation> {
        let coeffs = match &self.g {
            GeneratorRef::Single(s) => vec![s.resolve()?],
            GeneratorRef::Family(v) => v.iter().map(SymbolRef::resolve).collect::<Result<_>>()?,
        };
        if coeffs.len() != self.t_poly_degree + 1 {
            return Err(Error::InvalidParameter(format!(
                "t_poly_degree = {} but {} generator coefficient(s) given",
                self.t_poly_degree,
                coeffs.len()
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        let mut d = Deformation::polynomial(coeffs)?.with_tol(self.tol);
        if let Some(tm) = self.t_max {
            d = d.with_t_max(tm);
        }
        Ok(d)
    }
}
