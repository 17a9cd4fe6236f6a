//! Moments `M(t) = iint f(p_t) dx dxi` and the first and second variation
//! identities of the Weyl density under complex canonical deformation.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{boundary_margin, ComplexWindow};
use crate::error::{Error, Result};
use crate::flow::DeformedSymbol;
use crate::quadrature::{TensorRule, MIN_ORDER};
use crate::symbol::{poisson_bracket, real_bracket, real_bracket_from_gradient, PhaseFunction, SymbolExpr};

pub const DEFAULT_ORDER: usize = 48;
pub const FIRST_ORDER_STEP: f64 = 1e-2;
pub const SECOND_ORDER_STEP: f64 = 2e-2;
pub const DISCREPANCY_FLOOR: f64 = 1e-12;
const SUPPORT_FACE_SAMPLES: usize = 1024;

fn phi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let s = 1.0 - u * u;
        s * s * s
    } else {
        0.0
    }
}

fn dphi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let s = 1.0 - u * u;
        -6.0 * u * s * s
    } else {
        0.0
    }
}

fn d2phi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (1.0 - u * u) * (30.0 * u * u - 6.0)
    } else {
        0.0
    }
}

/// Tensor bump `f(z) = phi((Re z - a)/r) phi((Im z - b)/r)`, `phi(u) = (1 - u^2)^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub center: C64,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(center: C64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter("test function radius must be positive".into()));
        }
        if !(center.re.is_finite() && center.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { center, radius })
    }

    fn uv(&self, z: C64) -> (f64, f64) {
        ((z.re - self.center.re) / self.radius, (z.im - self.center.im) / self.radius)
    }

    pub fn value(&self, z: C64) -> f64 {
        let (u, v) = self.uv(z);
        phi(u) * phi(v)
    }

    pub fn laplacian(&self, z: C64) -> f64 {
        let (u, v) = self.uv(z);
        (d2phi(u) * phi(v) + phi(u) * d2phi(v)) / (self.radius * self.radius)
    }

    /// `df/dz = (f_Re - i f_Im) / 2`.
    pub fn dz(&self, z: C64) -> C64 {
        let (u, v) = self.uv(z);
        let fx = dphi(u) * phi(v) / self.radius;
        let fy = phi(u) * dphi(v) / self.radius;
        C64::new(0.5 * fx, -0.5 * fy)
    }

    /// The support as a window.
    pub fn support(&self) -> ComplexWindow {
        ComplexWindow { center: self.center, half_widths: (self.radius, self.radius), resolution: (2, 2) }
    }

    /// True if the support lies inside `win`.
    pub fn supported_in(&self, win: &ComplexWindow) -> bool {
        let (a, b) = (win.re_bounds(), win.im_bounds());
        let r = self.radius;
        self.center.re - r >= a.0
            && self.center.re + r <= a.1
            && self.center.im - r >= b.0
            && self.center.im + r <= b.1
    }
}

/// A quadrature value with an error estimate `|Q_n - Q_{3n/4}|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn check_order(order: usize) -> Result<()> {
    if order < MIN_ORDER {
        return Err(Error::InvalidParameter(format!(
            "quadrature order {order} is below the minimum {MIN_ORDER}"
        )));
    }
    Ok(())
}

/// Fails unless `f o p` vanishes on the boundary of the box.
pub fn check_support_in_box(f: &TestFunction, p: &dyn PhaseFunction, box_radius: f64) -> Result<()> {
    let per_face = if p.closed_form().is_some() { SUPPORT_FACE_SAMPLES } else { SUPPORT_FACE_SAMPLES / 8 };
    let margin = boundary_margin(p, &f.support(), box_radius, per_face, false)?;
    if margin <= 0.0 {
        return Err(Error::SupportLeaksBox { value: margin });
    }
    Ok(())
}

const FIT_LADDER: [f64; 7] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const FIT_PROBES: usize = 20_000;

/// Smallest radius `r` on a fixed ladder of fractions of `box_radius` such that
/// `f o p` vanishes on the boundary of `[-r, r]^{2n}` and a seeded probe of the
/// full box finds no point of `supp f o p` outside it. Falls back to `box_radius`.
pub fn fitted_box_radius(f: &TestFunction, p: &dyn PhaseFunction, box_radius: f64) -> Result<f64> {
    check_support_in_box(f, p, box_radius)?;
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut outer: f64 = 0.0;
    let mut y = vec![0.0; 2 * n];
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut xi = vec![C64::new(0.0, 0.0); n];
    for _ in 0..FIT_PROBES {
        for v in y.iter_mut() {
            *v = box_radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        for j in 0..n {
            x[j] = C64::new(y[j], 0.0);
            xi[j] = C64::new(y[n + j], 0.0);
        }
        let z = match p.closed_form() {
            Some(s) => s.value(&x, &xi),
            None => p.value_at(&x, &xi)?,
        };
        if f.value(z) > 0.0 {
            outer = outer.max(y.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        }
    }
    for frac in FIT_LADDER {
        let r = frac * box_radius;
        if r > outer && check_support_in_box(f, p, r).is_ok() {
            return Ok(r);
        }
    }
    Ok(box_radius)
}

/// Integrates `g(p value, gradient or None, y)` on the real box `[-R, R]^{2n}`.
fn integrate_on_box<F>(p: &dyn PhaseFunction, box_radius: f64, order: usize, need_grad: bool, g: F) -> Result<f64>
where
    F: Fn(C64, Option<(&[C64], &[C64])>, &[f64]) -> f64 + Sync,
{
    check_order(order)?;
    let n = p.dim();
    let rule = TensorRule::cube(2 * n, box_radius, order)?;
    let closed = p.closed_form();
    let err = std::sync::Mutex::new(None::<Error>);
    let v = rule.integrate(|y| {
        let x: Vec<C64> = y[..n].iter().map(|&v| C64::new(v, 0.0)).collect();
        let xi: Vec<C64> = y[n..].iter().map(|&v| C64::new(v, 0.0)).collect();
        let res = (|| -> Result<f64> {
            let val = match closed {
                Some(s) => s.value(&x, &xi),
                None => p.value_at(&x, &xi)?,
            };
            if !need_grad {
                return Ok(g(val, None, y));
            }
            let (gx, gxi) = match closed {
                Some(s) => s.gradient_at(&x, &xi),
                None => p.gradient_at_point(&x, &xi)?,
            };
            Ok(g(val, Some((&gx, &gxi)), y))
        })();
        match res {
            Ok(v) => v,
            Err(e) => {
                err.lock().unwrap().get_or_insert(e);
                0.0
            }
        }
    });
    match err.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn with_error<F: Fn(usize) -> Result<f64>>(order: usize, q: F) -> Result<Estimate> {
    let value = q(order)?;
    let coarse = q((3 * order / 4).max(MIN_ORDER))?;
    Ok(Estimate { value, error: (value - coarse).abs() })
}

/// `M = iint f(p) dx dxi` over the box.
pub fn moment(f: &TestFunction, p: &dyn PhaseFunction, box_radius: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    check_support_in_box(f, p, box_radius)?;
    integrate_on_box(p, box_radius, order, false, |z, _, _| f.value(z))
}

fn real_at(g: &SymbolExpr, y: &[f64]) -> f64 {
    let n = g.dim();
    g.value_real(&y[..n], &y[n..]).re
}

/// `iint (Delta f)(p_t) {Re p_t, Im p_t} Re G_t dx dxi`. Exactly zero when `p` has a
/// closed form whose bracket symbol vanishes.
pub fn first_variation_rhs(
    f: &TestFunction,
    p: &dyn PhaseFunction,
    g: &SymbolExpr,
    box_radius: f64,
    order: usize,
) -> Result<f64> {
    first_variation_rhs_estimate(f, p, g, box_radius, order, false).map(|e| e.value)
}

pub fn first_variation_rhs_estimate(
    f: &TestFunction,
    p: &dyn PhaseFunction,
    g: &SymbolExpr,
    box_radius: f64,
    order: usize,
    with_err: bool,
) -> Result<Estimate> {
    check_order(order)?;
    if g.dim() != p.dim() {
        return Err(Error::Dimension { expected: p.dim(), got: g.dim() });
    }
    if let Some(s) = p.closed_form() {
        if real_bracket(s).is_zero() {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
    }
    if g.real_part().is_zero() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    check_support_in_box(f, p, box_radius)?;
    let q = |ord: usize| {
        integrate_on_box(p, box_radius, ord, true, |z, grad, y| {
            let lap = f.laplacian(z);
            if lap == 0.0 {
                return 0.0;
            }
            let (gx, gxi) = grad.expect("gradient requested");
            lap * real_bracket_from_gradient(gx, gxi) * real_at(g, y)
        })
    };
    if with_err {
        with_error(order, q)
    } else {
        Ok(Estimate { value: q(order)?, error: 0.0 })
    }
}

/// `iint (Delta f)(p) |H_p G|^2 dx dxi` for integrable `p` and `G` real on the reals.
pub fn second_variation_rhs(
    f: &TestFunction,
    p: &SymbolExpr,
    g: &SymbolExpr,
    box_radius: f64,
    order: usize,
) -> Result<f64> {
    second_variation_rhs_estimate(f, p, g, box_radius, order, false).map(|e| e.value)
}

pub fn second_variation_rhs_estimate(
    f: &TestFunction,
    p: &SymbolExpr,
    g: &SymbolExpr,
    box_radius: f64,
    order: usize,
    with_err: bool,
) -> Result<Estimate> {
    check_order(order)?;
    if !real_bracket(p).is_zero() {
        return Err(Error::NotIntegrable);
    }
    if !g.is_real_on_reals() {
        return Err(Error::GeneratorNotReal);
    }
    let hpg = poisson_bracket(p, g)?;
    if hpg.is_zero() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    check_support_in_box(f, p, box_radius)?;
    let n = p.dim();
    let q = |ord: usize| {
        integrate_on_box(p, box_radius, ord, false, |z, _, y| {
            let lap = f.laplacian(z);
            if lap == 0.0 {
                return 0.0;
            }
            lap * hpg.value_real(&y[..n], &y[n..]).norm_sqr()
        })
    };
    if with_err {
        with_error(order, q)
    } else {
        Ok(Estimate { value: q(order)?, error: 0.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationOrder {
    First,
    Second,
}

/// Finite-difference left side against the quadrature right side.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariationReport {
    pub order: VariationOrder,
    pub t: f64,
    pub lhs: f64,
    pub lhs_error: f64,
    pub rhs: f64,
    pub rhs_error: f64,
    pub discrepancy: f64,
    pub step: f64,
    pub quadrature_order: usize,
    pub test_function: TestFunction,
}

fn discrepancy(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / rhs.abs().max(DISCREPANCY_FLOOR)
}

/// `d/dt M(t)` by central differences with one Richardson level.
pub fn first_variation_lhs(
    f: &TestFunction,
    ps: &DeformedSymbol,
    box_radius: f64,
    order: usize,
    step: f64,
) -> Result<Estimate> {
    let m = |t: f64| -> Result<f64> { moment(f, &ps.at(t)?, box_radius, order) };
    let t = ps.t;
    let d = |h: f64| -> Result<f64> { Ok((m(t + h)? - m(t - h)?) / (2.0 * h)) };
    let coarse = d(step)?;
    let fine = d(0.5 * step)?;
    let rich = (4.0 * fine - coarse) / 3.0;
    Ok(Estimate { value: rich, error: (rich - fine).abs() })
}

/// `d^2/dt^2 M(t)` by second central differences with one Richardson level.
pub fn second_variation_lhs(
    f: &TestFunction,
    ps: &DeformedSymbol,
    box_radius: f64,
    order: usize,
    step: f64,
) -> Result<Estimate> {
    let m = |t: f64| -> Result<f64> { moment(f, &ps.at(t)?, box_radius, order) };
    let t = ps.t;
    let m0 = m(t)?;
    let d = |h: f64| -> Result<f64> { Ok((m(t + h)? - 2.0 * m0 + m(t - h)?) / (h * h)) };
    let coarse = d(step)?;
    let fine = d(0.5 * step)?;
    let rich = (4.0 * fine - coarse) / 3.0;
    Ok(Estimate { value: rich, error: (rich - fine).abs() })
}

/// Checks `M'(t)` against the first-variation integral for `p_t`.
pub fn first_variation_report(
    f: &TestFunction,
    ps: &DeformedSymbol,
    box_radius: f64,
    order: usize,
) -> Result<VariationReport> {
    let lhs = first_variation_lhs(f, ps, box_radius, order, FIRST_ORDER_STEP)?;
    let g = ps.deformation.generator_at(ps.t);
    let rhs = first_variation_rhs_estimate(f, ps, &g, box_radius, order, true)?;
    Ok(VariationReport {
        order: VariationOrder::First,
        t: ps.t,
        lhs: lhs.value,
        lhs_error: lhs.error,
        rhs: rhs.value,
        rhs_error: rhs.error,
        discrepancy: discrepancy(lhs.value, rhs.value),
        step: FIRST_ORDER_STEP,
        quadrature_order: order,
        test_function: *f,
    })
}

/// Checks `M''(0)` against `iint (Delta f)(p) |H_p G|^2` for integrable `p`
/// and `t`-independent `G`.
pub fn second_variation_report(
    f: &TestFunction,
    ps: &DeformedSymbol,
    box_radius: f64,
    order: usize,
) -> Result<VariationReport> {
    if !ps.deformation.is_time_independent() {
        return Err(Error::InvalidParameter("second variation needs a t-independent generator".into()));
    }
    let ps0 = ps.at(0.0)?;
    let g = ps.deformation.generator_at(0.0);
    let rhs = second_variation_rhs_estimate(f, &ps.base, &g, box_radius, order, true)?;
    let lhs = second_variation_lhs(f, &ps0, box_radius, order, SECOND_ORDER_STEP)?;
    Ok(VariationReport {
        order: VariationOrder::Second,
        t: 0.0,
        lhs: lhs.value,
        lhs_error: lhs.error,
        rhs: rhs.value,
        rhs_error: rhs.error,
        discrepancy: discrepancy(lhs.value, rhs.value),
        step: SECOND_ORDER_STEP,
        quadrature_order: order,
        test_function: *f,
    })
}

/// Result of a witness search for `d^2/dt^2 w_t != 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    /// `None` when no candidate cleared the bar; inconclusive, not a disproof.
    pub witness: Option<TestFunction>,
    pub value: f64,
    pub error: f64,
    pub candidates: usize,
}

const CONFIRMED: usize = 3;

/// Search grid and quadrature settings for [`nonequality_certificate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSearch {
    /// Candidate centers per axis of the window.
    pub centers_per_axis: usize,
    /// Candidate radii as fractions of the smaller window half-width.
    pub radius_fractions: Vec<f64>,
    pub box_radius: f64,
    pub search_order: usize,
    pub confirm_order: usize,
}

impl Default for CertificateSearch {
    fn default() -> Self {
        Self {
            centers_per_axis: 5,
            radius_fractions: vec![0.25, 0.5],
            box_radius: 2.0,
            search_order: 24,
            confirm_order: DEFAULT_ORDER,
        }
    }
}

/// Searches bumps inside `win` for a second-variation integral that is nonzero
/// by more than 5 times its quadrature error.
pub fn nonequality_certificate(
    p: &SymbolExpr,
    g: &SymbolExpr,
    win: &ComplexWindow,
    search: &CertificateSearch,
) -> Result<Certificate> {
    if !real_bracket(p).is_zero() {
        return Err(Error::NotIntegrable);
    }
    if !g.is_real_on_reals() {
        return Err(Error::GeneratorNotReal);
    }
    let none = |candidates| Certificate { witness: None, value: 0.0, error: 0.0, candidates };
    if poisson_bracket(p, g)?.is_zero() {
        return Ok(none(0));
    }
    let (re, im) = (win.re_bounds(), win.im_bounds());
    let half = win.half_widths.0.min(win.half_widths.1);
    let k = search.centers_per_axis.max(1);
    let mut ranked: Vec<(f64, TestFunction, f64)> = Vec::new();
    let mut candidates = 0;
    for &frac in &search.radius_fractions {
        let r = frac * half;
        if !(r > 0.0) {
            continue;
        }
        let lo = (re.0 + r, im.0 + r);
        let hi = (re.1 - r, im.1 - r);
        if lo.0 > hi.0 || lo.1 > hi.1 {
            continue;
        }
        for a in 0..k {
            for b in 0..k {
                let s = |i: usize, l: f64, h: f64| if k == 1 { 0.5 * (l + h) } else { l + (h - l) * i as f64 / (k - 1) as f64 };
                let f = TestFunction::new(C64::new(s(a, lo.0, hi.0), s(b, lo.1, hi.1)), r)?;
                candidates += 1;
                let r_box = match fitted_box_radius(&f, p, search.box_radius) {
                    Ok(r) => r,
                    Err(Error::SupportLeaksBox { .. }) => continue,
                    Err(e) => return Err(e),
                };
                match second_variation_rhs_estimate(&f, p, g, r_box, search.search_order, true) {
                    // rank by how far the value clears the bar, not by size alone
                    Ok(v) => ranked.push((v.value.abs() - 5.0 * v.error, f, r_box)),
                    Err(Error::SupportLeaksBox { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (_, f, r_box) in ranked.iter().take(CONFIRMED) {
        let est = second_variation_rhs_estimate(f, p, g, *r_box, search.confirm_order, true)?;
        if est.value.abs() > 5.0 * est.error {
            return Ok(Certificate { witness: Some(*f), value: est.value, error: est.error, candidates });
        }
    }
    Ok(none(candidates))
}
