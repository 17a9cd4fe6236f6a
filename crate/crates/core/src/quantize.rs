//! Matrix quantization of model symbols, dense spectra, random perturbations,
//! Bohr-Sommerfeld lattice predictions and eigenvalue counts.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{ActionMap, ComplexWindow};
use crate::error::{Error, Result};
use crate::quadratic::QuadraticForm;
use crate::symbol::SymbolExpr;

pub const DEFAULT_DIM_CAP: usize = 4096;
/// Quantum-number budget of the truncation-safe region, as a fraction of `N`.
pub const SAFE_FRACTION: f64 = 0.6;
/// Absolute slack on the quantum-number budget, so lattice points on the
/// boundary are classified the same way from either side.
const SAFE_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    HermiteTensor,
    TorusFourier,
}

/// Truncated basis: `N` Hermite functions per axis, or Fourier modes `|k_j| <= K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// `N` for Hermite, `K` for Fourier.
    pub size: usize,
    pub n: usize,
    pub h: f64,
}

impl BasisSpec {
    pub fn hermite(size: usize, n: usize, h: f64) -> Result<Self> {
        let b = Self { kind: BasisKind::HermiteTensor, size, n, h };
        b.validate()?;
        Ok(b)
    }

    pub fn torus(k: usize, n: usize, h: f64) -> Result<Self> {
        let b = Self { kind: BasisKind::TorusFourier, size: k, n, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 1 || self.n < 1 {
            return Err(Error::InvalidParameter("basis size and dimension must be at least 1".into()));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::InvalidParameter(format!("h = {} must lie in (0, 1]", self.h)));
        }
        Ok(())
    }

    pub fn axis_len(&self) -> usize {
        match self.kind {
            BasisKind::HermiteTensor => self.size,
            BasisKind::TorusFourier => 2 * self.size + 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.axis_len().pow(self.n as u32)
    }
}

/// A dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub dim: usize,
    pub data: Vec<C64>,
    pub basis: BasisSpec,
    pub provenance: String,
}

impl OperatorMatrix {
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    fn is_upper_triangular(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == C64::new(0.0, 0.0)))
    }

    fn is_lower_triangular(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.get(i, j) == C64::new(0.0, 0.0)))
    }
}

type Dense = Vec<C64>;

fn zeros(m: usize) -> Dense {
    vec![C64::new(0.0, 0.0); m * m]
}

/// Exact `N x N` compressions of the one-axis Weyl operators built from
/// `X = sqrt(h/2)(a + a*)`, `Xi = i sqrt(h/2)(a* - a)`.
struct AxisOps {
    x: Dense,
    xi: Dense,
    x2: Dense,
    xi2: Dense,
    /// `(X Xi + Xi X) / 2`.
    sym: Dense,
}

fn axis_ops(n: usize, h: f64) -> AxisOps {
    let s = (h / 2.0).sqrt();
    let mut x = zeros(n);
    let mut xi = zeros(n);
    let mut x2 = zeros(n);
    let mut xi2 = zeros(n);
    let mut sym = zeros(n);
    for k in 0..n {
        let kf = k as f64;
        x2[k * n + k] = C64::new(h / 2.0 * (2.0 * kf + 1.0), 0.0);
        xi2[k * n + k] = C64::new(h / 2.0 * (2.0 * kf + 1.0), 0.0);
        if k + 1 < n {
            let r = (kf + 1.0).sqrt();
            // <k|a|k+1> = <k+1|a*|k> = sqrt(k+1)
            x[k * n + k + 1] = C64::new(s * r, 0.0);
            x[(k + 1) * n + k] = C64::new(s * r, 0.0);
            xi[k * n + k + 1] = C64::new(0.0, -s * r);
            xi[(k + 1) * n + k] = C64::new(0.0, s * r);
        }
        if k + 2 < n {
            let r = ((kf + 1.0) * (kf + 2.0)).sqrt();
            // a^2 above the diagonal, a*^2 below
            x2[k * n + k + 2] = C64::new(h / 2.0 * r, 0.0);
            x2[(k + 2) * n + k] = C64::new(h / 2.0 * r, 0.0);
            xi2[k * n + k + 2] = C64::new(-h / 2.0 * r, 0.0);
            xi2[(k + 2) * n + k] = C64::new(-h / 2.0 * r, 0.0);
            sym[k * n + k + 2] = C64::new(0.0, -h / 2.0 * r);
            sym[(k + 2) * n + k] = C64::new(0.0, h / 2.0 * r);
        }
    }
    AxisOps { x, xi, x2, xi2, sym }
}

fn nonzeros(a: &[C64], m: usize) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let v = a[i * m + j];
            if v != C64::new(0.0, 0.0) {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// `out += coeff * (f_0 (x) f_1 (x) ... )`, identity on axes with `None`,
/// touching only structurally nonzero entries.
fn add_tensor(out: &mut [C64], coeff: C64, factors: &[Option<&Dense>], axis: usize) {
    if coeff == C64::new(0.0, 0.0) {
        return;
    }
    let dim = axis.pow(factors.len() as u32);
    let lists: Vec<Vec<(usize, usize, C64)>> = factors
        .iter()
        .map(|f| match f {
            Some(a) => nonzeros(a, axis),
            None => (0..axis).map(|i| (i, i, C64::new(1.0, 0.0))).collect(),
        })
        .collect();
    let mut entries = vec![(0usize, 0usize, coeff)];
    for l in &lists {
        entries = entries
            .iter()
            .flat_map(|&(r, c, v)| l.iter().map(move |&(i, j, w)| (r * axis + i, c * axis + j, v * w)))
            .collect();
    }
    for (r, c, v) in entries {
        out[r * dim + c] += v;
    }
}

fn check_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::MatrixTooLarge { dim, cap });
    }
    Ok(())
}

/// Weyl quantization of a polynomial of degree <= 2 in the Hermite tensor basis.
pub fn quantize_quadratic(q: &SymbolExpr, basis: &BasisSpec) -> Result<OperatorMatrix> {
    basis.validate()?;
    if basis.kind != BasisKind::HermiteTensor {
        return Err(Error::InvalidParameter("quadratic symbols need a hermite-tensor basis".into()));
    }
    if q.dim() != basis.n {
        return Err(Error::Dimension { expected: basis.n, got: q.dim() });
    }
    let form = QuadraticForm::from_symbol(q)?;
    let n = basis.n;
    let ax = basis.size;
    let dim = basis.dim();
    check_cap(dim, DEFAULT_DIM_CAP)?;
    let ops = axis_ops(ax, basis.h);
    let m = 2 * n;
    // variable v < n is x_v, v >= n is xi_{v-n}
    let single = |v: usize| if v < n { &ops.x } else { &ops.xi };
    let axis_of = |v: usize| v % n;
    let mut out = zeros(dim);
    let mut add = |coeff: C64, pairs: &[(usize, &Dense)]| {
        let mut f: Vec<Option<&Dense>> = vec![None; n];
        for &(a, d) in pairs {
            f[a] = Some(d);
        }
        add_tensor(&mut out, coeff, &f, ax);
    };
    add(form.c, &[]);
    for v in 0..m {
        add(form.l[v], &[(axis_of(v), single(v))]);
        let diag = if v < n { &ops.x2 } else { &ops.xi2 };
        add(0.5 * form.q[v * m + v], &[(axis_of(v), diag)]);
        for w in v + 1..m {
            let c = form.q[v * m + w];
            if axis_of(v) == axis_of(w) {
                // v = x_j, w = xi_j
                add(c, &[(axis_of(v), &ops.sym)]);
            } else {
                add(c, &[(axis_of(v), single(v)), (axis_of(w), single(w))]);
            }
        }
    }
    Ok(OperatorMatrix { dim, data: out, basis: *basis, provenance: "quantize_quadratic".into() })
}

/// Lattice `k in [-K, K]^n` in basis order.
fn torus_modes(basis: &BasisSpec) -> Vec<Vec<i64>> {
    let k = basis.size as i64;
    let mut out = vec![vec![]];
    for _ in 0..basis.n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-k..=k).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    out
}

/// Diagonal matrix `p~(h k)` for an action-only symbol in the Fourier basis.
pub fn quantize_torus(ptilde: &SymbolExpr, basis: &BasisSpec) -> Result<OperatorMatrix> {
    basis.validate()?;
    if basis.kind != BasisKind::TorusFourier {
        return Err(Error::InvalidParameter("torus symbols need a torus-fourier basis".into()));
    }
    if ptilde.depends_on_x() {
        return Err(Error::NotActionOnly);
    }
    if ptilde.dim() != basis.n {
        return Err(Error::Dimension { expected: basis.n, got: ptilde.dim() });
    }
    let dim = basis.dim();
    check_cap(dim, DEFAULT_DIM_CAP)?;
    let mut data = zeros(dim);
    let x = vec![C64::new(0.0, 0.0); basis.n];
    for (i, k) in torus_modes(basis).into_iter().enumerate() {
        let eta: Vec<C64> = k.iter().map(|&j| C64::new(basis.h * j as f64, 0.0)).collect();
        data[i * dim + i] = ptilde.value(&x, &eta);
    }
    Ok(OperatorMatrix { dim, data, basis: *basis, provenance: "quantize_torus".into() })
}

/// `dim x dim` matrix of iid standard complex Gaussians `(g1 + i g2)/sqrt 2`, scaled by `1/sqrt(dim)`.
pub fn random_matrix(dim: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (2.0 * dim as f64).sqrt();
    (0..dim * dim)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            C64::new(a * s, b * s)
        })
        .collect()
}

/// `P + delta Q` with `Q` from [`random_matrix`].
pub fn perturb(p: &OperatorMatrix, delta: f64, seed: u64) -> Result<OperatorMatrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter("delta must be finite and nonnegative".into()));
    }
    if delta == 0.0 {
        return Ok(p.clone());
    }
    let q = random_matrix(p.dim, seed);
    let data = p.data.iter().zip(&q).map(|(a, b)| a + delta * b).collect();
    Ok(OperatorMatrix {
        dim: p.dim,
        data,
        basis: p.basis,
        provenance: format!("{} + {delta:e} Q(seed {seed})", p.provenance),
    })
}

/// Eigenvalues of a (possibly perturbed) operator matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<C64>,
    /// Backward-error bound `||E||_F` such that the eigenvalues are exact for `A + E`.
    pub residual_bound: f64,
    pub delta: f64,
    pub seed: Option<u64>,
    pub basis: BasisSpec,
}

impl SpectrumResult {
    pub fn count_in(&self, re: (f64, f64), im: (f64, f64)) -> usize {
        self.eigenvalues
            .iter()
            .filter(|z| z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im\n");
        for z in &self.eigenvalues {
            s.push_str(&format!("{:.16e},{:.16e}\n", z.re, z.im));
        }
        s
    }
}

/// Lexicographic order on `(Re, Im)`.
pub fn sort_lex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Backward-error constant for the dense QR eigensolver.
const BACKWARD_ERROR_CONSTANT: f64 = 10.0;

/// All eigenvalues, sorted; triangular matrices are read off the diagonal.
pub fn spectrum(p: &OperatorMatrix) -> Result<SpectrumResult> {
    spectrum_with_cap(p, DEFAULT_DIM_CAP)
}

pub fn spectrum_with_cap(p: &OperatorMatrix, cap: usize) -> Result<SpectrumResult> {
    check_cap(p.dim, cap)?;
    if p.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (mut ev, residual) = if p.is_upper_triangular() || p.is_lower_triangular() {
        ((0..p.dim).map(|i| p.get(i, i)).collect::<Vec<_>>(), 0.0)
    } else {
        let ev = p.to_faer().eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        if ev.len() != p.dim {
            return Err(Error::Eigen(format!("solver returned {} of {} eigenvalues", ev.len(), p.dim)));
        }
        let r = BACKWARD_ERROR_CONSTANT * p.dim as f64 * f64::EPSILON * p.frobenius_norm();
        (ev, r)
    };
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    sort_lex(&mut ev);
    Ok(SpectrumResult { eigenvalues: ev, residual_bound: residual, delta: 0.0, seed: None, basis: p.basis })
}

/// Spectrum of `P + delta Q(seed)`.
pub fn perturbed_spectrum(p: &OperatorMatrix, delta: f64, seed: u64) -> Result<SpectrumResult> {
    let pd = perturb(p, delta, seed)?;
    let mut s = spectrum(&pd)?;
    s.delta = delta;
    s.seed = Some(seed);
    Ok(s)
}

/// Hausdorff distance between two finite sets.
pub fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    let one = |a: &[C64], b: &[C64]| {
        a.iter()
            .map(|z| b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

/// Normal-form data of an elliptic quadratic symbol: `spec = { c0 + h sum (k_j + 1/2) mu_j }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticNormalForm {
    pub mu: Vec<C64>,
    /// Critical value `q(y*)`.
    pub offset: C64,
    /// Rotation `theta` with `Re(e^{i theta} Q)` positive definite.
    pub theta: f64,
}

const THETA_GRID: usize = 720;

/// Finds the Hamilton-matrix frequencies of an elliptic quadratic symbol.
pub fn quadratic_normal_form(q: &SymbolExpr) -> Result<QuadraticNormalForm> {
    let form = QuadraticForm::from_symbol(q)?;
    let n = form.n;
    let m = 2 * n;
    // ellipticity: best rotation
    let mut best = (f64::NEG_INFINITY, 0.0);
    for s in 0..THETA_GRID {
        let theta = 2.0 * PI * s as f64 / THETA_GRID as f64;
        let e = C64::from_polar(1.0, theta);
        let re = Mat::<f64>::from_fn(m, m, |i, j| {
            0.5 * ((e * form.q[i * m + j]).re + (e * form.q[j * m + i]).re)
        });
        let ev = re.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let lo = ev.into_iter().fold(f64::INFINITY, f64::min);
        if lo > best.0 {
            best = (lo, theta);
        }
    }
    if !(best.0 > 0.0) {
        return Err(Error::NotElliptic);
    }
    let theta = best.1;
    let rot = C64::from_polar(1.0, theta);
    let f = form.hamilton_matrix();
    let fm = Mat::<C64>::from_fn(m, m, |i, j| f[i * m + j]);
    let lambdas = fm.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let mut mu: Vec<C64> = lambdas
        .into_iter()
        .map(|l| l / C64::new(0.0, 1.0))
        .filter(|mu| (rot * mu).re > 0.0)
        .collect();
    if mu.len() != n {
        return Err(Error::NotElliptic);
    }
    sort_lex(&mut mu);
    // critical point y* solves Q y = -l
    let qm = Mat::<C64>::from_fn(m, m, |i, j| form.q[i * m + j]);
    let rhs = Mat::<C64>::from_fn(m, 1, |i, _| -form.l[i]);
    let y = qm.partial_piv_lu().solve(&rhs);
    let ys: Vec<C64> = (0..m).map(|i| y[(i, 0)]).collect();
    if ys.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NotElliptic);
    }
    let offset = form.c + 0.5 * form.l.iter().zip(&ys).map(|(a, b)| a * b).sum::<C64>();
    Ok(QuadraticNormalForm { mu, offset, theta })
}

/// `{ c0 + h sum_j (k_j + 1/2) mu_j : 0 <= k_j < kmax }`, sorted.
pub fn quadratic_exact_spectrum(q: &SymbolExpr, h: f64, kmax: usize) -> Result<Vec<C64>> {
    let nf = quadratic_normal_form(q)?;
    let n = nf.mu.len();
    let mut out = Vec::with_capacity(kmax.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let mut z = nf.offset;
        for j in 0..n {
            z += h * (idx[j] as f64 + 0.5) * nf.mu[j];
        }
        out.push(z);
        let mut a = 0;
        loop {
            if a == n {
                sort_lex(&mut out);
                return Ok(out);
            }
            idx[a] += 1;
            if idx[a] < kmax {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Eigenvalues whose quantum numbers satisfy `sum_j max(k_j, 0) <= 0.6 N` are
/// trusted in an `N`-per-axis Hermite truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SafeRegion {
    pub normal_form: QuadraticNormalForm,
    pub h: f64,
    pub budget: f64,
}

impl SafeRegion {
    pub fn new(q: &SymbolExpr, basis: &BasisSpec) -> Result<Self> {
        Self::with_fraction(q, basis, SAFE_FRACTION)
    }

    pub fn with_fraction(q: &SymbolExpr, basis: &BasisSpec, fraction: f64) -> Result<Self> {
        let normal_form = quadratic_normal_form(q)?;
        if normal_form.mu.len() > 2 {
            return Err(Error::InvalidParameter("safe region supports n <= 2".into()));
        }
        Ok(Self { normal_form, h: basis.h, budget: fraction * basis.size as f64 })
    }

    /// Real quantum numbers `k` with `z = c0 + h sum (k_j + 1/2) mu_j`.
    pub fn quantum_numbers(&self, z: C64) -> Option<Vec<f64>> {
        let mu = &self.normal_form.mu;
        let w = (z - self.normal_form.offset) / self.h;
        match mu.len() {
            1 => {
                // real k closest in the least-squares sense
                let s = (w * mu[0].conj()).re / mu[0].norm_sqr();
                Some(vec![s - 0.5])
            }
            2 => {
                let (a, b, c, d) = (mu[0].re, mu[1].re, mu[0].im, mu[1].im);
                let det = a * d - b * c;
                if det.abs() < 1e-14 {
                    return None;
                }
                let s1 = (d * w.re - b * w.im) / det;
                let s2 = (-c * w.re + a * w.im) / det;
                Some(vec![s1 - 0.5, s2 - 0.5])
            }
            _ => None,
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        match self.quantum_numbers(z) {
            Some(k) => k.iter().map(|v| v.max(0.0)).sum::<f64>() <= self.budget + SAFE_SLACK,
            None => false,
        }
    }

    /// The safe region is convex, so a rectangle is safe iff its corners are.
    pub fn contains_rect(&self, re: (f64, f64), im: (f64, f64)) -> bool {
        [(re.0, im.0), (re.0, im.1), (re.1, im.0), (re.1, im.1)]
            .iter()
            .all(|&(a, b)| self.contains(C64::new(a, b)))
    }
}

/// `I(z) / (2 pi h) = k - theta(h)` with `theta(h) = sum_j theta_j h^j`.
#[derive(Clone, Debug)]
pub struct BSLattice {
    pub action_map: ActionMap,
    /// `[theta_0, theta_1, ...]`; `theta_0` defaults to `(1/2, 1/2)`.
    pub theta: Vec<[f64; 2]>,
    pub h: f64,
    pub window: ComplexWindow,
}

impl BSLattice {
    pub fn theta_at(&self) -> [f64; 2] {
        let mut t = [0.0, 0.0];
        let mut pw = 1.0;
        for th in &self.theta {
            t[0] += th[0] * pw;
            t[1] += th[1] * pw;
            pw *= self.h;
        }
        t
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BSPrediction {
    pub points: Vec<C64>,
    pub quantum_numbers: Vec<[i64; 2]>,
    pub unresolved: Vec<[i64; 2]>,
}

pub const BS_TOL: f64 = 1e-10;

/// Solves the Bohr-Sommerfeld conditions for every lattice point whose target
/// actions fall in the image of the window.
pub fn bs_predict(l: &BSLattice) -> Result<BSPrediction> {
    if !(l.h > 0.0) {
        return Err(Error::InvalidParameter("h must be positive".into()));
    }
    let am = &l.action_map;
    let th = l.theta_at();
    let two_pi_h = 2.0 * PI * l.h;
    // action range over the window boundary; the action map is a diffeomorphism
    let (re, im) = (l.window.re_bounds(), l.window.im_bounds());
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let steps = 256;
    let mut start = am.guess;
    for e in 0..4 {
        for s in 0..=steps {
            let u = s as f64 / steps as f64;
            let z = match e {
                0 => C64::new(re.0 + u * (re.1 - re.0), im.0),
                1 => C64::new(re.1, im.0 + u * (im.1 - im.0)),
                2 => C64::new(re.1 - u * (re.1 - re.0), im.1),
                _ => C64::new(re.0, im.1 - u * (im.1 - im.0)),
            };
            let eta = am.invert_from(z, start).or_else(|_| am.invert(z))?;
            start = eta;
            for k in 0..2 {
                let i = 2.0 * PI * eta[k] + am.i0[k];
                lo[k] = lo[k].min(i);
                hi[k] = hi[k].max(i);
            }
        }
    }
    let kmin = |k: usize| (lo[k] / two_pi_h + th[k]).floor() as i64 - 1;
    let kmax = |k: usize| (hi[k] / two_pi_h + th[k]).ceil() as i64 + 1;
    let mut out = BSPrediction { points: vec![], quantum_numbers: vec![], unresolved: vec![] };
    for k1 in kmin(0)..=kmax(0) {
        for k2 in kmin(1)..=kmax(1) {
            let target = [two_pi_h * (k1 as f64 - th[0]), two_pi_h * (k2 as f64 - th[1])];
            let eta = [(target[0] - am.i0[0]) / (2.0 * PI), (target[1] - am.i0[1]) / (2.0 * PI)];
            if !am.in_domain(eta) {
                continue;
            }
            let (z, _) = am.forward(eta);
            if !l.window.contains(z) {
                continue;
            }
            // the forward value must satisfy the quantization condition through the inverse
            match am.invert_from(z, eta) {
                Ok(e) => {
                    let a = [2.0 * PI * e[0] + am.i0[0], 2.0 * PI * e[1] + am.i0[1]];
                    let ok = (0..2).all(|j| ((a[j] / two_pi_h + th[j]) - [k1, k2][j] as f64).abs() <= BS_TOL);
                    if ok {
                        out.points.push(z);
                        out.quantum_numbers.push([k1, k2]);
                    } else {
                        out.unresolved.push([k1, k2]);
                    }
                }
                Err(_) => out.unresolved.push([k1, k2]),
            }
        }
    }
    let mut order: Vec<usize> = (0..out.points.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (out.points[a], out.points[b]);
        x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
    });
    out.points = order.iter().map(|&i| out.points[i]).collect();
    out.quantum_numbers = order.iter().map(|&i| out.quantum_numbers[i]).collect();
    Ok(out)
}

/// Eigenvalue count in a rectangle against the action and Weyl predictions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub h: f64,
    pub delta: f64,
    pub seed: Option<u64>,
    pub count: usize,
    /// `(2 pi h)^{-n} integral_W omega`.
    pub omega_prediction: f64,
    /// `(2 pi h)^{-n} vol(p^{-1}(W))`.
    pub weyl_prediction: f64,
    pub weyl_prediction_stderr: f64,
    /// `(count - prediction) / sqrt(max(prediction, 1))`.
    pub omega_deviation: f64,
    pub weyl_deviation: f64,
    /// Set when the rectangle leaves the truncation-safe region.
    pub unsafe_window: bool,
}

/// Builds a [`ComparisonReport`] from precomputed `integral_W omega` and `vol(p^{-1}(W))`.
pub fn count_and_compare(
    s: &SpectrumResult,
    re: (f64, f64),
    im: (f64, f64),
    omega_integral: f64,
    preimage_volume: (f64, f64),
    safe: Option<&SafeRegion>,
) -> ComparisonReport {
    let h = s.basis.h;
    let scale = (2.0 * PI * h).powi(s.basis.n as i32);
    let count = s.count_in(re, im);
    let om = omega_integral / scale;
    let we = preimage_volume.0 / scale;
    let dev = |p: f64| (count as f64 - p) / p.max(1.0).sqrt();
    let unsafe_window = safe.map(|r| !r.contains_rect(re, im)).unwrap_or(false);
    if unsafe_window {
        log::warn!("count window leaves the truncation-safe region");
    }
    ComparisonReport {
        re,
        im,
        h,
        delta: s.delta,
        seed: s.seed,
        count,
        omega_prediction: om,
        weyl_prediction: we,
        weyl_prediction_stderr: preimage_volume.1 / scale,
        omega_deviation: dev(om),
        weyl_deviation: dev(we),
        unsafe_window,
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
    fn one_axis_oscillator_is_diagonal() {
        let b = BasisSpec::hermite(12, 1, 0.1).unwrap();
        let p = quantize_quadratic(&catalog::oscillator(1), &b).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 0.1 * (i as f64 + 0.5) } else { 0.0 };
                assert!((p.get(i, j) - c(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_ordering_of_x_xi() {
        let h = 0.2;
        let b = BasisSpec::hermite(10, 1, h).unwrap();
        let s = SymbolExpr::new(1, vec![crate::symbol::Term::monomial(c(1.0, 0.0), vec![1], vec![1])], 1.0).unwrap();
        let p = quantize_quadratic(&s, &b).unwrap();
        // average of X Xi and Xi X computed in a larger basis, then compressed
        let big = 12;
        let o = axis_ops(big, h);
        let xx = crate::quadratic::matmul(&o.x, &o.xi, big);
        let yy = crate::quadratic::matmul(&o.xi, &o.x, big);
        for i in 0..10 {
            for j in 0..10 {
                let avg = 0.5 * (xx[i * big + j] + yy[i * big + j]);
                assert!((p.get(i, j) - avg).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn torus_quantization_is_diagonal() {
        let b = BasisSpec::torus(3, 2, 0.1).unwrap();
        let p = quantize_torus(&catalog::torus_linear(), &b).unwrap();
        let s = spectrum(&p).unwrap();
        assert_eq!(s.eigenvalues.len(), 49);
        assert_eq!(s.residual_bound, 0.0);
        for z in &s.eigenvalues {
            let (k1, k2) = (z.re / 0.1, z.im / 0.1);
            assert!((k1 - k1.round()).abs() < 1e-12 && (k2 - k2.round()).abs() < 1e-12);
        }
        let konst = SymbolExpr::constant(2, c(0.3, -0.2));
        let p = quantize_torus(&konst, &b).unwrap();
        assert!(spectrum(&p).unwrap().eigenvalues.iter().all(|z| *z == c(0.3, -0.2)));
        assert!(matches!(quantize_torus(&catalog::x1x2(), &b), Err(Error::NotActionOnly)));
    }

    #[test]
    fn perturbation_determinism() {
        let b = BasisSpec::hermite(6, 1, 0.1).unwrap();
        let p = quantize_quadratic(&catalog::oscillator(1), &b).unwrap();
        assert_eq!(perturb(&p, 0.0, 3).unwrap(), p);
        assert_eq!(perturb(&p, 1e-3, 3).unwrap().data, perturb(&p, 1e-3, 3).unwrap().data);
        assert_ne!(perturb(&p, 1e-3, 3).unwrap().data, perturb(&p, 1e-3, 4).unwrap().data);
    }

    #[test]
    fn cho_normal_form() {
        let nf = quadratic_normal_form(&catalog::cho(1.0, c(0.0, 0.0))).unwrap();
        assert!((nf.mu[0] - c(0.0, 1.0)).norm() < 1e-12 || (nf.mu[0] - c(1.0, 0.0)).norm() < 1e-12);
        let mut mu = nf.mu.clone();
        sort_lex(&mut mu);
        assert!((mu[0] - c(0.0, 1.0)).norm() < 1e-12);
        assert!((mu[1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(nf.offset.norm() < 1e-15);
        let shifted = quadratic_normal_form(&catalog::cho(1.0, c(0.5, 0.5))).unwrap();
        assert!((shifted.offset - c(-0.5, -0.5)).norm() < 1e-14);
    }

    #[test]
    fn non_elliptic_rejected() {
        assert!(matches!(quadratic_normal_form(&catalog::x1x2()), Err(Error::NotElliptic)));
    }

    #[test]
    fn safe_region_quantum_numbers() {
        let b = BasisSpec::hermite(10, 2, 0.1).unwrap();
        let r = SafeRegion::new(&catalog::cho(1.0, c(0.0, 0.0)), &b).unwrap();
        let k = r.quantum_numbers(c(0.25, 0.45)).unwrap();
        // mu is sorted as (i, 1)
        assert!((k[0] - 4.0).abs() < 1e-12 && (k[1] - 2.0).abs() < 1e-12);
        assert!(r.contains(c(0.15, 0.35)));
        assert!(!r.contains(c(0.45, 0.35)));
    }
}
