use bsweyl_core::catalog;
use bsweyl_core::density::{action_map_integrable, ComplexWindow};
use bsweyl_core::flow::{Deformation, DeformedSymbol};
use bsweyl_core::quantize::{
    bs_predict, hausdorff, perturb, perturbed_spectrum, quadratic_exact_spectrum, quantize_quadratic,
    quantize_torus, random_matrix, sort_lex, spectrum, spectrum_with_cap, BSLattice, BasisSpec, OperatorMatrix,
    SafeRegion,
};
use bsweyl_core::symbol::{SymbolExpr, Term};
use bsweyl_core::{Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn nearest(z: C64, set: &[C64]) -> f64 {
    set.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min)
}

/// Random real quadratic polynomial in two degrees of freedom.
fn random_real_quadratic(seed: u64) -> SymbolExpr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for a in 0..3u32 {
        for b in 0..3u32 {
            for d in 0..3u32 {
                for e in 0..3u32 {
                    if a + b + d + e <= 2 {
                        let v = rng.random_range(-1.0..1.0);
                        terms.push(Term::monomial(c(v, 0.0), vec![a, b], vec![d, e]));
                    }
                }
            }
        }
    }
    SymbolExpr::new(2, terms, 1.0).unwrap()
}

fn deformed_cho(t: f64) -> SymbolExpr {
    DeformedSymbol::new(catalog::cho(1.0, c(0.5, 0.5)), Deformation::new(catalog::x1x2()), t)
        .unwrap()
        .deformed_quadratic()
        .unwrap()
}

#[test]
fn oscillator_truncation_is_exact() {
    let q = catalog::cho(1.0, c(0.5, 0.5));
    let b = BasisSpec::hermite(10, 2, 0.1).unwrap();
    let s = spectrum(&quantize_quadratic(&q, &b).unwrap()).unwrap();
    let exact = quadratic_exact_spectrum(&q, 0.1, 10).unwrap();
    assert_eq!(s.eigenvalues.len(), exact.len());
    for (a, e) in s.eigenvalues.iter().zip(&exact) {
        assert!((a - e).norm() <= 1e-12, "{a} vs {e}");
    }
    // h (k1 + 1/2) + i h (k2 + 1/2) - (1 + i)/2 by hand
    for k1 in 0..10 {
        for k2 in 0..10 {
            let z = c(0.1 * (k1 as f64 + 0.5) - 0.5, 0.1 * (k2 as f64 + 0.5) - 0.5);
            assert!(nearest(z, &s.eigenvalues) <= 1e-12);
        }
    }
}

#[test]
fn deformed_oscillator_keeps_its_safe_spectrum() {
    let q = deformed_cho(0.2);
    let b = BasisSpec::hermite(20, 2, 0.05).unwrap();
    let s = spectrum(&quantize_quadratic(&q, &b).unwrap()).unwrap();
    let safe = SafeRegion::new(&q, &b).unwrap();
    let exact = quadratic_exact_spectrum(&q, 0.05, 20).unwrap();
    let inside: Vec<C64> = exact.iter().copied().filter(|z| safe.contains(*z)).collect();
    assert!(inside.len() > 50);
    for z in &inside {
        assert!(nearest(*z, &s.eigenvalues) <= 1e-6, "{z}");
    }
}

#[test]
fn constant_symbol_is_scalar() {
    let k = c(0.3, -1.2);
    let b = BasisSpec::hermite(5, 2, 0.1).unwrap();
    let m = quantize_quadratic(&SymbolExpr::constant(2, k), &b).unwrap();
    for i in 0..m.dim {
        for j in 0..m.dim {
            assert_eq!(m.get(i, j), if i == j { k } else { c(0.0, 0.0) });
        }
    }
}

#[test]
fn real_symbols_quantize_to_hermitian_matrices() {
    for seed in 0..5 {
        let q = random_real_quadratic(seed);
        let b = BasisSpec::hermite(12, 2, 0.1).unwrap();
        let m = quantize_quadratic(&q, &b).unwrap();
        assert!(m.hermitian_defect() <= 1e-14);
        let s = spectrum(&m).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.im.abs() <= 1e-10));
    }
}

#[test]
fn torus_matrix_is_diagonal_lattice() {
    let p = catalog::torus_coupled(0.3);
    let b = BasisSpec::torus(6, 2, 0.1).unwrap();
    let m = quantize_torus(&p, &b).unwrap();
    let mut diag = Vec::new();
    for i in 0..m.dim {
        for j in 0..m.dim {
            if i != j {
                assert_eq!(m.get(i, j), c(0.0, 0.0));
            }
        }
        diag.push(m.get(i, i));
    }
    for k1 in -6..=6 {
        for k2 in -6..=6 {
            let (e1, e2) = (0.1 * k1 as f64, 0.1 * k2 as f64);
            assert!(nearest(c(e1 + 0.3 * e1 * e2, e2), &diag) <= 1e-15);
        }
    }
}

fn bs_lattice(h: f64, re: (f64, f64), im: (f64, f64)) -> BSLattice {
    BSLattice {
        action_map: action_map_integrable(&catalog::torus_coupled(0.3), [0.0, 0.0]).unwrap(),
        theta: vec![[0.0, 0.0]],
        h,
        window: ComplexWindow::from_bounds(re, im, (2, 2)).unwrap(),
    }
}

#[test]
fn torus_eigenvalues_are_bohr_sommerfeld_points() {
    let (re, im) = ((0.15, 0.45), (0.15, 0.45));
    let h = 0.05;
    let pred = bs_predict(&bs_lattice(h, re, im)).unwrap();
    assert!(pred.unresolved.is_empty());
    let m = quantize_torus(&catalog::torus_coupled(0.3), &BasisSpec::torus(20, 2, h).unwrap()).unwrap();
    let s = spectrum(&m).unwrap();
    let inside: Vec<C64> =
        pred.points.iter().copied().filter(|z| z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1).collect();
    assert_eq!(inside.len(), s.count_in(re, im));
    for z in &inside {
        assert!(nearest(*z, &s.eigenvalues) <= 1e-10);
    }
}

#[test]
fn halving_h_quadruples_the_count() {
    let (re, im) = ((0.2, 0.8), (0.2, 0.8));
    let coarse = bs_predict(&bs_lattice(0.05, re, im)).unwrap();
    let fine = bs_predict(&bs_lattice(0.025, re, im)).unwrap();
    let count = |p: &bsweyl_core::quantize::BSPrediction| {
        p.points.iter().filter(|z| z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1).count()
    };
    let ratio = count(&fine) as f64 / count(&coarse) as f64;
    assert!((ratio - 4.0).abs() <= 0.4, "{ratio}");
}

#[test]
fn counts_grow_as_h_shrinks() {
    let q = catalog::cho(1.0, c(0.5, 0.5));
    let (re, im) = ((0.0, 0.5), (0.0, 0.5));
    let mut last = 0;
    for h in [0.1, 0.07, 0.05] {
        let s = spectrum(&quantize_quadratic(&q, &BasisSpec::hermite(30, 2, h).unwrap()).unwrap()).unwrap();
        let n = s.count_in(re, im);
        // Weyl: (2 pi h)^-2 (2 pi)^2 area
        let weyl = 0.25 / (h * h);
        assert!(n > last);
        assert!((n as f64 - weyl).abs() <= 0.3 * weyl, "h={h}: {n} vs {weyl}");
        last = n;
    }
}

#[test]
fn exact_spectrum_is_symplectically_invariant() {
    let q = catalog::cho(1.0, c(0.5, 0.5));
    let base = quadratic_exact_spectrum(&q, 0.1, 6).unwrap();
    // -i G gives the real Hamiltonian flow of G, i G a complex canonical map
    let g = random_real_quadratic(9);
    for coeff in [c(0.0, -1.0), c(1.0, 0.0)] {
        let moved = DeformedSymbol::new(q.clone(), Deformation::new(g.scale(coeff)), 0.15)
            .unwrap()
            .deformed_quadratic()
            .unwrap();
        let s = quadratic_exact_spectrum(&moved, 0.1, 6).unwrap();
        for z in &base {
            assert!(nearest(*z, &s) <= 1e-10, "{coeff}: {z}");
        }
    }
}

#[test]
fn exact_spectrum_is_homogeneous() {
    let q = catalog::cho(1.0, c(0.0, 0.0));
    let a = quadratic_exact_spectrum(&q, 0.1, 8).unwrap();
    let b = quadratic_exact_spectrum(&q, 0.2, 8).unwrap();
    let mut scaled: Vec<C64> = a.iter().map(|z| 2.0 * z).collect();
    sort_lex(&mut scaled);
    for (x, y) in scaled.iter().zip(&b) {
        assert!((x - y).norm() <= 1e-12);
    }
    let c3 = quadratic_exact_spectrum(&q.scale(c(3.0, 0.0)), 0.1, 8).unwrap();
    for z in &a {
        assert!(nearest(3.0 * z, &c3) <= 1e-12);
    }
}

#[test]
fn random_matrix_is_seeded_and_normalised() {
    assert_eq!(random_matrix(50, 7), random_matrix(50, 7));
    assert_ne!(random_matrix(50, 7), random_matrix(50, 8));
    let dim = 400;
    for seed in 0..10 {
        let q = random_matrix(dim, seed);
        // iid entries of variance 1/dim
        let f = q.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((f / (dim as f64).sqrt() - 1.0).abs() <= 0.05, "seed {seed}: {f}");
    }
}

#[test]
fn jordan_block_splits_like_square_root() {
    let basis = BasisSpec::hermite(2, 1, 0.1).unwrap();
    let j = OperatorMatrix {
        dim: 2,
        data: vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        basis,
        provenance: "jordan".into(),
    };
    for delta in [1e-6, 1e-8, 1e-10] {
        let s = perturbed_spectrum(&j, delta, 1).unwrap();
        let r = s.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(r > 100.0 * delta);
        let ratio = r / delta.sqrt();
        assert!((0.01..10.0).contains(&ratio), "delta {delta}: {ratio}");
    }
}

#[test]
fn tiny_perturbations_move_normal_spectra_by_at_most_the_bound() {
    let delta = 1e-12;
    for q in [catalog::cho(1.0, c(0.5, 0.5)), random_real_quadratic(2)] {
        let m = quantize_quadratic(&q, &BasisSpec::hermite(10, 2, 0.1).unwrap()).unwrap();
        let a = spectrum(&m).unwrap();
        let b = perturbed_spectrum(&m, delta, 3).unwrap();
        let qf = perturb(&m, 1.0, 3).unwrap();
        let qnorm = qf.data.iter().zip(&m.data).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let bound = a.residual_bound + b.residual_bound + delta * qnorm;
        assert!(hausdorff(&a.eigenvalues, &b.eigenvalues) <= bound);
    }
}

#[test]
fn dimension_cap_is_enforced() {
    let m = quantize_quadratic(&catalog::cho(1.0, c(0.0, 0.0)), &BasisSpec::hermite(8, 2, 0.1).unwrap()).unwrap();
    assert!(matches!(spectrum_with_cap(&m, 50), Err(Error::MatrixTooLarge { dim: 64, cap: 50 })));
    let big = BasisSpec::hermite(70, 2, 0.1).unwrap();
    assert!(matches!(
        quantize_quadratic(&catalog::cho(1.0, c(0.0, 0.0)), &big),
        Err(Error::MatrixTooLarge { dim: 4900, .. })
    ));
}
