//! Weyl (pushforward) densities, action densities from integrable normal forms,
//! and preimage volumes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::TensorRule;
use crate::symbol::{PhaseFunction, SymbolExpr};

/// Number of independent sampling shards; fixed so results do not depend on
/// the thread count.
pub const SHARDS: u64 = 64;

const TWO_PI: f64 = 2.0 * PI;

/// A rectangle in the spectral plane with a cell grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexWindow {
    pub center: C64,
    pub half_widths: (f64, f64),
    pub resolution: (usize, usize),
}

impl ComplexWindow {
    pub fn new(center: C64, half_widths: (f64, f64), resolution: (usize, usize)) -> Result<Self> {
        let w = Self { center, half_widths, resolution };
        w.validate()?;
        Ok(w)
    }

    /// From `[re_lo, re_hi] x [im_lo, im_hi]`.
    pub fn from_bounds(re: (f64, f64), im: (f64, f64), resolution: (usize, usize)) -> Result<Self> {
        Self::new(
            C64::new(0.5 * (re.0 + re.1), 0.5 * (im.0 + im.1)),
            (0.5 * (re.1 - re.0), 0.5 * (im.1 - im.0)),
            resolution,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.half_widths;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter("window half-widths must be positive".into()));
        }
        if !(self.center.re.is_finite() && self.center.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::InvalidParameter("window resolution must be at least 2 per axis".into()));
        }
        Ok(())
    }

    pub fn re_bounds(&self) -> (f64, f64) {
        (self.center.re - self.half_widths.0, self.center.re + self.half_widths.0)
    }

    pub fn im_bounds(&self) -> (f64, f64) {
        (self.center.im - self.half_widths.1, self.center.im + self.half_widths.1)
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            2.0 * self.half_widths.0 / self.resolution.0 as f64,
            2.0 * self.half_widths.1 / self.resolution.1 as f64,
        )
    }

    pub fn cell_area(&self) -> f64 {
        let (dx, dy) = self.cell_size();
        dx * dy
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_widths.0 * self.half_widths.1
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.half_widths.0.hypot(self.half_widths.1)
    }

    pub fn num_cells(&self) -> usize {
        self.resolution.0 * self.resolution.1
    }

    pub fn contains(&self, z: C64) -> bool {
        (z.re - self.center.re).abs() <= self.half_widths.0
            && (z.im - self.center.im).abs() <= self.half_widths.1
    }

    /// Flat index `i * ny + j` of the cell containing `z` (`i` along `Re z`).
    pub fn cell_index(&self, z: C64) -> Option<usize> {
        let (lo_re, _) = self.re_bounds();
        let (lo_im, _) = self.im_bounds();
        let (dx, dy) = self.cell_size();
        let u = (z.re - lo_re) / dx;
        let v = (z.im - lo_im) / dy;
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (nx, ny) = self.resolution;
        let (i, j) = (u as usize, v as usize);
        // the closed upper edge belongs to the last cell
        let i = if i == nx && u <= nx as f64 { nx - 1 } else { i };
        let j = if j == ny && v <= ny as f64 { ny - 1 } else { j };
        (i < nx && j < ny).then_some(i * ny + j)
    }

    pub fn cell_center(&self, idx: usize) -> C64 {
        let ny = self.resolution.1;
        let (i, j) = (idx / ny, idx % ny);
        let (dx, dy) = self.cell_size();
        C64::new(
            self.re_bounds().0 + (i as f64 + 0.5) * dx,
            self.im_bounds().0 + (j as f64 + 0.5) * dy,
        )
    }

    /// Distance from `z` to the closed rectangle.
    pub fn distance(&self, z: C64) -> f64 {
        let dx = ((z.re - self.center.re).abs() - self.half_widths.0).max(0.0);
        let dy = ((z.im - self.center.im).abs() - self.half_widths.1).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MonteCarlo,
    TensorQuadrature,
    JacobianFormula,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MonteCarlo => "monte-carlo",
            Method::TensorQuadrature => "tensor-quadrature",
            Method::JacobianFormula => "jacobian-formula",
        }
    }
}

/// Density values per unit `d Re z d Im z` on the cells of a window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityGrid {
    pub window: ComplexWindow,
    /// Row-major, index `i * ny + j` with `i` along `Re z`.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: Method,
    pub samples: u64,
    pub seed: Option<u64>,
    pub box_radius: Option<f64>,
    /// True when no sample landed in the window.
    pub empty: bool,
}

impl DensityGrid {
    pub fn value_at(&self, z: C64) -> Option<f64> {
        self.window.cell_index(z).map(|i| self.values[i])
    }

    /// `sum_cells value * area`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.window.cell_area()
    }

    /// Standard error of [`Self::mass`] (cells treated as independent, which is
    /// conservative for multinomial counts).
    pub fn mass_stderr(&self) -> f64 {
        self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt() * self.window.cell_area()
    }

    /// `sum_cells f(center) * value * area`.
    pub fn integrate<F: Fn(C64) -> f64>(&self, f: F) -> f64 {
        let a = self.window.cell_area();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| f(self.window.cell_center(i)) * v * a)
            .sum()
    }

    /// Mass of the cells whose centers lie in `[re] x [im]`.
    pub fn integrate_over(&self, re: (f64, f64), im: (f64, f64)) -> f64 {
        self.integrate(|z| {
            if z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1 {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `self - other` cellwise, errors combined in quadrature.
    pub fn difference(&self, other: &DensityGrid) -> Result<DensityGrid> {
        if self.window != other.window {
            return Err(Error::InvalidParameter("density grids live on different windows".into()));
        }
        Ok(DensityGrid {
            window: self.window,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            stderr: self.stderr.iter().zip(&other.stderr).map(|(a, b)| a.hypot(*b)).collect(),
            method: self.method,
            samples: self.samples,
            seed: self.seed,
            box_radius: self.box_radius,
            empty: self.empty && other.empty,
        })
    }

    /// Largest `|self - other| / combined stderr` over cells.
    pub fn max_sigma_deviation(&self, other: &DensityGrid) -> Result<f64> {
        let d = self.difference(other)?;
        Ok(d.values
            .iter()
            .zip(&d.stderr)
            .map(|(v, s)| if *s > 0.0 { v.abs() / s } else if *v != 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max))
    }

    /// CSV with columns `z_re,z_im,value,stderr`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z_re,z_im,value,stderr\n");
        for (i, (v, s)) in self.values.iter().zip(&self.stderr).enumerate() {
            let z = self.window.cell_center(i);
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", z.re, z.im, v, s);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fast path for closed forms; general phase functions otherwise.
enum Evaluator<'a> {
    Closed(&'a SymbolExpr),
    General(&'a dyn PhaseFunction),
}

impl<'a> Evaluator<'a> {
    fn of(p: &'a dyn PhaseFunction) -> Self {
        match p.closed_form() {
            Some(s) => Evaluator::Closed(s),
            None => Evaluator::General(p),
        }
    }
}

struct Buffers {
    x: Vec<C64>,
    xi: Vec<C64>,
}

impl Buffers {
    fn new(n: usize) -> Self {
        Self { x: vec![C64::new(0.0, 0.0); n], xi: vec![C64::new(0.0, 0.0); n] }
    }

    /// `y = [x; xi]` (phase space) or `y = eta` (actions, `x = 0`).
    fn eval(&mut self, e: &Evaluator, y: &[f64], actions_only: bool) -> Result<C64> {
        let n = self.x.len();
        if actions_only {
            for j in 0..n {
                self.xi[j] = C64::new(y[j], 0.0);
            }
        } else {
            for j in 0..n {
                self.x[j] = C64::new(y[j], 0.0);
                self.xi[j] = C64::new(y[n + j], 0.0);
            }
        }
        match e {
            Evaluator::Closed(s) => Ok(s.value(&self.x, &self.xi)),
            Evaluator::General(p) => p.value_at(&self.x, &self.xi),
        }
    }
}

/// Golden-ratio generalization for the Kronecker low-discrepancy sequence.
fn kronecker_alphas(d: usize) -> Vec<f64> {
    // unique positive root of x^(d+1) = x + 1
    let mut phi: f64 = 2.0;
    for _ in 0..100 {
        let f = phi.powi(d as i32 + 1) - phi - 1.0;
        let df = (d as f64 + 1.0) * phi.powi(d as i32) - 1.0;
        phi -= f / df;
    }
    (1..=d).map(|k| phi.powi(-(k as i32)).fract()).collect()
}

/// Point sampler over a box: seeded uniform (Monte Carlo) or a randomly shifted
/// Kronecker sequence (quasi-random).
struct Sampler {
    method: Method,
    lo: Vec<f64>,
    width: Vec<f64>,
    seed: u64,
    alphas: Vec<f64>,
    shift: Vec<f64>,
}

impl Sampler {
    fn new(method: Method, lo: Vec<f64>, hi: &[f64], seed: u64) -> Result<Self> {
        if method == Method::JacobianFormula {
            return Err(Error::InvalidParameter("sampling method must be monte-carlo or tensor-quadrature".into()));
        }
        let d = lo.len();
        let width = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let shift = (0..d).map(|_| rng.random::<f64>()).collect();
        Ok(Self { method, lo, width, seed, alphas: kronecker_alphas(d), shift })
    }

    fn volume(&self) -> f64 {
        self.width.iter().product()
    }

    fn shard_range(total: u64, shard: u64) -> (u64, u64) {
        let base = total / SHARDS;
        let rem = total % SHARDS;
        let start = shard * base + shard.min(rem);
        let len = base + u64::from(shard < rem);
        (start, start + len)
    }

    /// Calls `visit` for every sample of one shard.
    fn for_each_in_shard<F: FnMut(&[f64]) -> Result<()>>(
        &self,
        total: u64,
        shard: u64,
        mut visit: F,
    ) -> Result<()> {
        let (start, end) = Self::shard_range(total, shard);
        let d = self.lo.len();
        let mut y = vec![0.0; d];
        match self.method {
            Method::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(shard);
                for _ in start..end {
                    for k in 0..d {
                        y[k] = self.lo[k] + self.width[k] * rng.random::<f64>();
                    }
                    visit(&y)?;
                }
            }
            _ => {
                for s in start..end {
                    let sf = (s + 1) as f64;
                    for k in 0..d {
                        let u = (self.shift[k] + sf * self.alphas[k]).fract();
                        y[k] = self.lo[k] + self.width[k] * u;
                    }
                    visit(&y)?;
                }
            }
        }
        Ok(())
    }
}

/// Counts the samples whose image lands in each cell.
fn histogram(
    p: &dyn PhaseFunction,
    win: &ComplexWindow,
    sampler: &Sampler,
    samples: u64,
    actions_only: bool,
) -> Result<Vec<u64>> {
    let e = Evaluator::of(p);
    let n = p.dim();
    let cells = win.num_cells();
    let shards: Vec<Result<Vec<u64>>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut counts = vec![0u64; cells];
            let mut buf = Buffers::new(n);
            sampler.for_each_in_shard(samples, shard, |y| {
                let z = buf.eval(&e, y, actions_only)?;
                if let Some(i) = win.cell_index(z) {
                    counts[i] += 1;
                }
                Ok(())
            })?;
            Ok(counts)
        })
        .collect();
    let mut total = vec![0u64; cells];
    for s in shards {
        for (t, c) in total.iter_mut().zip(s?) {
            *t += c;
        }
    }
    Ok(total)
}

fn grid_from_counts(
    win: &ComplexWindow,
    counts: &[u64],
    samples: u64,
    mass: f64,
    method: Method,
    seed: u64,
    box_radius: f64,
) -> DensityGrid {
    let a = win.cell_area();
    let nf = samples as f64;
    let mut values = Vec::with_capacity(counts.len());
    let mut stderr = Vec::with_capacity(counts.len());
    for &c in counts {
        let q = c as f64 / nf;
        values.push(mass * q / a);
        stderr.push(mass * (q * (1.0 - q) / nf).sqrt() / a);
    }
    let empty = counts.iter().all(|&c| c == 0);
    if empty {
        log::warn!("no samples landed in the window");
    }
    DensityGrid { window: *win, values, stderr, method, samples, seed: Some(seed), box_radius: Some(box_radius), empty }
}

/// Smallest distance from `p(boundary of the box)` to the window, sampled on
/// every face of `[-r, r]^d` (or of `[-r, r]^n` in action variables).
pub fn boundary_margin(
    p: &dyn PhaseFunction,
    win: &ComplexWindow,
    box_radius: f64,
    per_face: usize,
    actions_only: bool,
) -> Result<f64> {
    let n = p.dim();
    let d = if actions_only { n } else { 2 * n };
    let e = Evaluator::of(p);
    let alphas = kronecker_alphas(d.max(2) - 1);
    let faces: Vec<(usize, f64)> = (0..d).flat_map(|k| [(k, -box_radius), (k, box_radius)]).collect();
    let per: Vec<Result<f64>> = faces
        .par_iter()
        .map(|&(k, side)| {
            let mut buf = Buffers::new(n);
            let mut y = vec![0.0; d];
            let mut best = f64::INFINITY;
            for s in 0..per_face {
                let mut a = 0;
                for (kk, yk) in y.iter_mut().enumerate() {
                    if kk == k {
                        *yk = side;
                    } else {
                        let u = if d == 1 { 0.5 } else { (0.5 + (s as f64) * alphas[a]).fract() };
                        *yk = box_radius * (2.0 * u - 1.0);
                        a += 1;
                    }
                }
                let z = buf.eval(&e, &y, actions_only)?;
                best = best.min(win.distance(z));
            }
            Ok(best)
        })
        .collect();
    per.into_iter().try_fold(f64::INFINITY, |m, r| Ok(m.min(r?)))
}

/// Required gap between `p(boundary)` and the window, relative to its diameter.
pub const BOX_MARGIN_FRACTION: f64 = 0.2;
const FACE_SAMPLES: usize = 2048;

fn check_margin(p: &dyn PhaseFunction, win: &ComplexWindow, r: f64, actions_only: bool) -> Result<()> {
    let per_face = if p.closed_form().is_some() { FACE_SAMPLES } else { FACE_SAMPLES / 8 };
    let margin = boundary_margin(p, win, r, per_face, actions_only)?;
    let required = BOX_MARGIN_FRACTION * win.diameter();
    if margin < required {
        return Err(Error::BoxMargin { margin, required });
    }
    Ok(())
}

fn check_samples(samples: u64, box_radius: f64) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    if !(box_radius > 0.0 && box_radius.is_finite()) {
        return Err(Error::InvalidParameter("box radius must be positive".into()));
    }
    Ok(())
}

/// Histogram estimate of the pushforward of `dx dxi` on `[-R, R]^{2n}` under `p`.
pub fn weyl_density(
    p: &dyn PhaseFunction,
    win: &ComplexWindow,
    box_radius: f64,
    samples: u64,
    seed: u64,
    method: Method,
) -> Result<DensityGrid> {
    win.validate()?;
    check_samples(samples, box_radius)?;
    check_margin(p, win, box_radius, false)?;
    let d = 2 * p.dim();
    let sampler = Sampler::new(method, vec![-box_radius; d], &vec![box_radius; d], seed)?;
    let counts = histogram(p, win, &sampler, samples, false)?;
    Ok(grid_from_counts(win, &counts, samples, sampler.volume(), method, seed, box_radius))
}

/// Pushforward of `(2 pi)^n d eta` under an action-only symbol `eta -> p~(eta)`
/// (actions carried in the `xi` slots), over `eta in [-R, R]^n`.
pub fn weyl_density_torus(
    ptilde: &SymbolExpr,
    win: &ComplexWindow,
    eta_box: f64,
    samples: u64,
    seed: u64,
    method: Method,
) -> Result<DensityGrid> {
    if ptilde.depends_on_x() {
        return Err(Error::NotActionOnly);
    }
    win.validate()?;
    check_samples(samples, eta_box)?;
    check_margin(ptilde, win, eta_box, true)?;
    let n = ptilde.dim();
    let sampler = Sampler::new(method, vec![-eta_box; n], &vec![eta_box; n], seed)?;
    let counts = histogram(ptilde, win, &sampler, samples, true)?;
    let mass = sampler.volume() * TWO_PI.powi(n as i32);
    Ok(grid_from_counts(win, &counts, samples, mass, method, seed, eta_box))
}

/// `vol(p^{-1}(W)) = integral of 1_{p in W} dx dxi` over the box, with its standard error.
pub fn preimage_volume(
    p: &dyn PhaseFunction,
    re: (f64, f64),
    im: (f64, f64),
    box_radius: f64,
    samples: u64,
    seed: u64,
    method: Method,
) -> Result<(f64, f64)> {
    check_samples(samples, box_radius)?;
    let win = ComplexWindow::from_bounds(re, im, (2, 2))?;
    check_margin(p, &win, box_radius, false)?;
    let d = 2 * p.dim();
    let sampler = Sampler::new(method, vec![-box_radius; d], &vec![box_radius; d], seed)?;
    let counts = histogram(p, &win, &sampler, samples, false)?;
    let hits: u64 = counts.iter().sum();
    let q = hits as f64 / samples as f64;
    let v = sampler.volume();
    Ok((v * q, v * (q * (1.0 - q) / samples as f64).sqrt()))
}

/// Reference implementation of the sample stream, for tests: the sum over all
/// samples of `f(p(rho))` times the box volume over the sample count.
pub fn pushforward_average<F>(
    p: &dyn PhaseFunction,
    f: F,
    box_radius: f64,
    samples: u64,
    seed: u64,
    method: Method,
) -> Result<(f64, f64)>
where
    F: Fn(C64) -> f64 + Sync,
{
    check_samples(samples, box_radius)?;
    let d = 2 * p.dim();
    let sampler = Sampler::new(method, vec![-box_radius; d], &vec![box_radius; d], seed)?;
    let e = Evaluator::of(p);
    let n = p.dim();
    let parts: Vec<Result<(f64, f64)>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut buf = Buffers::new(n);
            let (mut s1, mut s2) = (0.0, 0.0);
            sampler.for_each_in_shard(samples, shard, |y| {
                let v = f(buf.eval(&e, y, false)?);
                s1 += v;
                s2 += v * v;
                Ok(())
            })?;
            Ok((s1, s2))
        })
        .collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for r in parts {
        let (a, b) = r?;
        s1 += a;
        s2 += b;
    }
    let nf = samples as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    let vol = sampler.volume();
    Ok((vol * mean, vol * (var / nf).sqrt()))
}

/// `z -> I(z) = 2 pi eta(z) + I0` for an integrable normal form `p~(eta)`, with
/// `eta(z)` the Newton inverse of `p~` restricted to real actions.
#[derive(Clone, Debug)]
pub struct ActionMap {
    ptilde: SymbolExpr,
    pub i0: [f64; 2],
    /// Admissible actions `[(lo1, hi1), (lo2, hi2)]`; `z` whose preimage falls
    /// outside is not in the image and carries zero density.
    pub eta_domain: Option<[(f64, f64); 2]>,
    /// Newton starting point.
    pub guess: [f64; 2],
}

/// Actions and their derivative with respect to `(Re z, Im z)`.
#[derive(Clone, Copy, Debug)]
pub struct ActionValue {
    pub eta: [f64; 2],
    pub actions: [f64; 2],
    /// `d(I1, I2) / d(Re z, Im z)`.
    pub jacobian: [[f64; 2]; 2],
    pub in_domain: bool,
}

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

/// Builds the action map of an action-only symbol in `n = 2`.
pub fn action_map_integrable(ptilde: &SymbolExpr, i0: [f64; 2]) -> Result<ActionMap> {
    if ptilde.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: ptilde.dim() });
    }
    if ptilde.depends_on_x() {
        return Err(Error::NotActionOnly);
    }
    Ok(ActionMap { ptilde: ptilde.clone(), i0, eta_domain: None, guess: [0.0, 0.0] })
}

impl ActionMap {
    pub fn with_domain(mut self, domain: [(f64, f64); 2]) -> Self {
        self.eta_domain = Some(domain);
        self
    }

    pub fn with_guess(mut self, guess: [f64; 2]) -> Self {
        self.guess = guess;
        self
    }

    pub fn symbol(&self) -> &SymbolExpr {
        &self.ptilde
    }

    /// `p~(eta)` and its real Jacobian `d(Re p~, Im p~)/d(eta1, eta2)`.
    pub fn forward(&self, eta: [f64; 2]) -> (C64, [[f64; 2]; 2]) {
        let x = [C64::new(0.0, 0.0); 2];
        let xi = [C64::new(eta[0], 0.0), C64::new(eta[1], 0.0)];
        let v = self.ptilde.value(&x, &xi);
        let (_, g) = self.ptilde.gradient_at(&x, &xi);
        (v, [[g[0].re, g[1].re], [g[0].im, g[1].im]])
    }

    pub fn in_domain(&self, eta: [f64; 2]) -> bool {
        match self.eta_domain {
            None => true,
            Some(d) => (0..2).all(|k| eta[k] >= d[k].0 && eta[k] <= d[k].1),
        }
    }

    /// Solves `p~(eta) = z` for real `eta` by damped Newton.
    pub fn invert(&self, z: C64) -> Result<[f64; 2]> {
        self.invert_from(z, self.guess)
    }

    pub fn invert_from(&self, z: C64, start: [f64; 2]) -> Result<[f64; 2]> {
        let fail = || Error::SingularMap { re: z.re, im: z.im };
        let mut eta = start;
        let (mut v, mut j) = self.forward(eta);
        let mut res = (v - z).norm();
        for _ in 0..NEWTON_MAX_ITER {
            if res <= NEWTON_TOL * (1.0 + z.norm()) {
                return Ok(eta);
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                return Err(fail());
            }
            let r = [v.re - z.re, v.im - z.im];
            let step = [
                (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            ];
            let mut lambda = 1.0;
            loop {
                let trial = [eta[0] - lambda * step[0], eta[1] - lambda * step[1]];
                let (tv, tj) = self.forward(trial);
                let tres = (tv - z).norm();
                if tres < res || lambda < 1e-4 {
                    eta = trial;
                    v = tv;
                    j = tj;
                    res = tres;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res <= NEWTON_TOL * (1.0 + z.norm()) {
            Ok(eta)
        } else {
            Err(fail())
        }
    }

    /// `I(z)` and `dI/d(Re z, Im z) = 2 pi (D p~)^{-1}`.
    pub fn eval(&self, z: C64) -> Result<ActionValue> {
        let eta = self.invert(z)?;
        self.eval_at_eta(z, eta)
    }

    fn eval_at_eta(&self, z: C64, eta: [f64; 2]) -> Result<ActionValue> {
        let (_, j) = self.forward(eta);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularMap { re: z.re, im: z.im });
        }
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        Ok(ActionValue {
            eta,
            actions: [TWO_PI * eta[0] + self.i0[0], TWO_PI * eta[1] + self.i0[1]],
            jacobian: [
                [TWO_PI * inv[0][0], TWO_PI * inv[0][1]],
                [TWO_PI * inv[1][0], TWO_PI * inv[1][1]],
            ],
            in_domain: self.in_domain(eta),
        })
    }

    /// `omega(z) = |det dI(z)|`, zero outside the image of the action domain.
    pub fn omega(&self, z: C64) -> Result<f64> {
        let a = self.eval(z)?;
        if !a.in_domain {
            return Ok(0.0);
        }
        let j = a.jacobian;
        Ok((j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs())
    }

    /// `integral_W omega L(dz)` by tensor Gauss-Legendre on the rectangle.
    pub fn omega_integral(&self, re: (f64, f64), im: (f64, f64), order: usize) -> Result<f64> {
        let rule = TensorRule::new(&[re.0, im.0], &[re.1, im.1], order)?;
        let err = std::sync::Mutex::new(None);
        let v = rule.integrate(|y| match self.omega(C64::new(y[0], y[1])) {
            Ok(w) => w,
            Err(e) => {
                err.lock().unwrap().get_or_insert(e);
                0.0
            }
        });
        match err.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// Fraction of singular cells above which [`omega_density`] fails.
pub const SINGULAR_CELL_FRACTION: f64 = 0.01;

/// `omega` at the cell centers of a window. Singular cells are NaN.
pub fn omega_density(am: &ActionMap, win: &ComplexWindow) -> Result<DensityGrid> {
    win.validate()?;
    let cells = win.num_cells();
    let values: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|i| am.omega(win.cell_center(i)).unwrap_or(f64::NAN))
        .collect();
    let bad = values.iter().filter(|v| v.is_nan()).count();
    if bad as f64 > SINGULAR_CELL_FRACTION * cells as f64 {
        return Err(Error::SingularJacobian { bad, total: cells });
    }
    if bad > 0 {
        log::warn!("action map singular on {bad} of {cells} cells");
    }
    let empty = values.iter().all(|v| *v == 0.0);
    Ok(DensityGrid {
        window: *win,
        values,
        stderr: vec![0.0; cells],
        method: Method::JacobianFormula,
        samples: 0,
        seed: None,
        box_radius: None,
        empty,
    })
}

/// Sup-cell relative deviation check `|w - omega| <= max(k * se, rel * omega)`.
/// Returns the largest ratio of deviation to its allowance (pass iff <= 1).
pub fn equality_ratio(w: &DensityGrid, omega: &DensityGrid, k_sigma: f64, rel: f64) -> Result<f64> {
    if w.window != omega.window {
        return Err(Error::InvalidParameter("density grids live on different windows".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 0..w.values.len() {
        let (a, b) = (w.values[i], omega.values[i]);
        if b.is_nan() {
            continue;
        }
        let allow = (k_sigma * w.stderr[i].hypot(omega.stderr[i])).max(rel * b.abs());
        let dev = (a - b).abs();
        let r = if allow > 0.0 { dev / allow } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(r);
    }
    Ok(worst)
}
