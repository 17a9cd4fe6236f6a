use bsweyl_core::catalog;
use bsweyl_core::flow::{Deformation, DeformedSymbol};
use bsweyl_core::quadrature::TensorRule;
use bsweyl_core::symbol::{poisson_bracket, SymbolExpr};
use bsweyl_core::variation::{
    first_variation_lhs, first_variation_rhs, moment, second_variation_rhs, TestFunction, FIRST_ORDER_STEP,
};
use bsweyl_core::C64;
use std::f64::consts::TAU;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `iint f(z) L(dz)` of the tensor bump: `(32/35)^2 r^2`.
fn bump_mass(r: f64) -> f64 {
    (32.0 / 35.0 * r).powi(2)
}

#[test]
fn moment_of_oscillator_matches_polar_oracle() {
    // Weyl density of cho(1, s) is (2 pi)^2 on the image quadrant
    let p = catalog::cho(1.0, c(0.5, 0.5));
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let m = moment(&f, &p, 1.7, 48).unwrap();
    let exact = TAU * TAU * bump_mass(0.3);
    assert!((m - exact).abs() <= 1e-4 * exact, "{m} vs {exact}");
}

#[test]
fn moment_at_zero_time_is_base_moment() {
    let base = catalog::cho(1.0, c(0.5, 0.5));
    let ps = DeformedSymbol::new(base.clone(), Deformation::new(catalog::x1x2()), 0.0).unwrap();
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let a = moment(&f, &ps, 1.7, 24).unwrap();
    let b = moment(&f, &base, 1.7, 24).unwrap();
    assert!((a - b).abs() <= 1e-12 * b.abs());
}

#[test]
fn vanishing_generators_give_zero() {
    let ps = DeformedSymbol::new(catalog::cho(1.0, c(0.0, 0.0)), Deformation::new(catalog::x1x2()), 0.2).unwrap();
    let closed = ps.deformed_quadratic().unwrap();
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let imaginary = catalog::x1x2().scale(c(0.0, 1.0));
    assert_eq!(first_variation_rhs(&f, &closed, &imaginary, 1.6, 24).unwrap(), 0.0);

    // a constant generator leaves p fixed, so M is constant in t
    let constant = SymbolExpr::constant(2, c(1.0, 0.0));
    let still = DeformedSymbol::new(catalog::cho(1.0, c(0.0, 0.0)), Deformation::new(constant), 0.2).unwrap();
    let d = first_variation_lhs(&f, &still, 1.6, 24, FIRST_ORDER_STEP).unwrap();
    assert!(d.value.abs() <= 1e-10, "{}", d.value);
}

#[test]
fn integrable_symbol_has_zero_first_variation_integral() {
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let v = first_variation_rhs(&f, &catalog::cho(1.0, c(0.0, 0.0)), &catalog::x1x2(), 1.6, 24).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn second_variation_integral_rejects_bad_inputs() {
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let ps = DeformedSymbol::new(catalog::cho(1.0, c(0.0, 0.0)), Deformation::new(catalog::x1x2()), 0.2).unwrap();
    let closed = ps.deformed_quadratic().unwrap();
    assert!(second_variation_rhs(&f, &closed, &catalog::x1x2(), 1.6, 24).is_err());
    let complex_g = catalog::x1x2().scale(c(1.0, 1.0));
    assert!(second_variation_rhs(&f, &catalog::cho(1.0, c(0.0, 0.0)), &complex_g, 1.6, 24).is_err());
}

#[test]
fn integration_by_parts_identity() {
    // iint f_z(p) {p, G} = -iint (Delta f / 4)(p) {p, conj p} G = (i/2) iint (Delta f)(p) {Re p, Im p} G
    let ps = DeformedSymbol::new(catalog::cho(1.0, c(0.0, 0.0)), Deformation::new(catalog::x1x2()), 0.2).unwrap();
    let p = ps.deformed_quadratic().unwrap();
    let g = catalog::x1x2();
    let pg = poisson_bracket(&p, &g).unwrap();
    let f = TestFunction::new(c(0.5, 0.0), 0.3).unwrap();
    let (r, order) = (1.6, 48);
    let rule = TensorRule::cube(4, r, order).unwrap();
    let parts = rule.integrate_many(2, |y, out| {
        let z = p.value_real(&y[..2], &y[2..]);
        let v = f.dz(z) * pg.value_real(&y[..2], &y[2..]);
        out[0] = v.re;
        out[1] = v.im;
    });
    let rhs = first_variation_rhs(&f, &p, &g, r, order).unwrap();
    assert!(rhs.abs() > 1.0);
    // both sides carry the order-48 quadrature error of the bump, about 1e-4
    assert!(parts[0].abs() <= 5e-4 * rhs.abs(), "Re {}", parts[0]);
    assert!((parts[1] - 0.5 * rhs).abs() <= 5e-4 * rhs.abs(), "{} vs {}", parts[1], 0.5 * rhs);

    // G = 1 has {p, G} = 0, so the bracket-weighted Laplacian integrates to zero
    let one = SymbolExpr::constant(2, c(1.0, 0.0));
    let zero = first_variation_rhs(&f, &p, &one, r, order).unwrap();
    assert!(zero.abs() <= 1e-10 * rhs.abs(), "{zero}");
}
