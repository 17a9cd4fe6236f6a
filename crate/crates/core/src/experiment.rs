//! Named end-to-end experiments. Each returns its checks, a JSON summary and
//! plot-ready artifacts; it passes iff every check passes.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{audit, AuditConfig, Flag};
use crate::catalog;
use crate::density::{
    action_map_integrable, equality_ratio, omega_density, preimage_volume, weyl_density, weyl_density_torus,
    ComplexWindow, Method,
};
use crate::error::{Error, Result};
use crate::flow::{DeformationJson, DeformedSymbol, GeneratorRef, SymbolRef};
use crate::quantize::{
    bs_predict, count_and_compare, hausdorff, perturbed_spectrum, quadratic_exact_spectrum, quantize_quadratic,
    spectrum, BSLattice, BasisSpec, SafeRegion,
};
use crate::symbol::{real_bracket, SymbolExpr};
use crate::variation::{
    first_variation_report, first_variation_rhs, nonequality_certificate, second_variation_report,
    CertificateSearch, TestFunction, DEFAULT_ORDER,
};

pub const EXPERIMENTS: [&str; 6] = [
    "audit",
    "integrable-equality",
    "deformation-splits",
    "spectrum-invariance",
    "bs-exactness",
    "random-weyl-migration",
];

/// Closed rectangle `[re.0, re.1] x [im.0, im.1]` in the spectral plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Rect {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        let r = Self { re, im };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.re.0 < self.re.1 && self.im.0 < self.im.1) {
            return Err(Error::InvalidParameter("rectangle bounds must be increasing".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.re.1 - self.re.0) * (self.im.1 - self.im.0)
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re.0 && z.re <= self.re.1 && z.im >= self.im.0 && z.im <= self.im.1
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value >= threshold, value, threshold, detail: detail.into() }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        let v = if passed { 1.0 } else { 0.0 };
        Self { name: name.into(), passed, value: v, threshold: 1.0, detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub file: String,
    pub contents: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub experiment: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: Value,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn new(experiment: &str, checks: Vec<Check>, results: Value, artifacts: Vec<Artifact>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { experiment: experiment.into(), passed, checks, results, artifacts }
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub fn artifact(file: &str, contents: String) -> Artifact {
    Artifact { file: file.into(), contents }
}

fn name(s: &str) -> SymbolRef {
    SymbolRef::Name(s.into())
}

fn x1x2_deformation() -> DeformationJson {
    DeformationJson { g: GeneratorRef::Single(name("x1x2")), t_poly_degree: 0, tol: 1e-10, t_max: None }
}

fn deformed(symbol: &SymbolRef, d: &DeformationJson, t: f64) -> Result<DeformedSymbol> {
    DeformedSymbol::new(symbol.resolve()?, d.clone().into_deformation()?, t)
}

fn closed_form(ps: &DeformedSymbol) -> Result<SymbolExpr> {
    ps.deformed_quadratic()
}

fn points_csv(points: &[C64]) -> String {
    let mut s = String::from("re,im\n");
    for z in points {
        s.push_str(&format!("{:.16e},{:.16e}\n", z.re, z.im));
    }
    s
}

/// Audit of a single symbol.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditExperiment {
    pub symbol: SymbolRef,
    pub audit: AuditConfig,
}

impl Default for AuditExperiment {
    fn default() -> Self {
        Self { symbol: name("cho(1,(1+i)/2)"), audit: AuditConfig::default() }
    }
}

pub fn run_audit(cfg: &AuditExperiment) -> Result<Outcome> {
    let p = cfg.symbol.resolve()?;
    let r = audit(&p, &cfg.audit, None)?;
    let checks = vec![
        Check::flag("ellipticity", r.ellipticity == Flag::Pass, format!("min |p| on shell = {}", r.ellipticity_min_abs)),
        Check::flag(
            "independence",
            r.independence != Flag::Fail,
            format!("{} zero points, min measure {:?}", r.zero_points, r.independence_min),
        ),
    ];
    let results = serde_json::to_value(&r)?;
    Ok(Outcome::new("audit", checks, results.clone(), vec![artifact("audit.json", serde_json::to_string_pretty(&results)?)]))
}

/// `w = omega` for an integrable torus symbol.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrableEqualityConfig {
    pub symbol: SymbolRef,
    pub i0: [f64; 2],
    pub window: ComplexWindow,
    pub eta_box: f64,
    pub samples: u64,
    pub seed: u64,
    pub method: Method,
    pub k_sigma: f64,
    pub rel_tol: f64,
}

impl Default for IntegrableEqualityConfig {
    fn default() -> Self {
        Self {
            symbol: name("torus-coupled(0.3)"),
            i0: [0.0, 0.0],
            window: ComplexWindow { center: C64::new(0.0, 0.0), half_widths: (0.4, 0.4), resolution: (64, 64) },
            eta_box: 0.9,
            samples: 10_000_000,
            seed: 0,
            method: Method::TensorQuadrature,
            k_sigma: 3.0,
            rel_tol: 0.03,
        }
    }
}

pub fn run_integrable_equality(cfg: &IntegrableEqualityConfig) -> Result<Outcome> {
    let p = cfg.symbol.resolve()?;
    let am = action_map_integrable(&p, cfg.i0)?;
    let w = weyl_density_torus(&p, &cfg.window, cfg.eta_box, cfg.samples, cfg.seed, cfg.method)?;
    let om = omega_density(&am, &cfg.window)?;
    let ratio = equality_ratio(&w, &om, cfg.k_sigma, cfg.rel_tol)?;
    let omega_min = om.values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::at_most(
            "sup-cell deviation",
            ratio,
            1.0,
            format!("|w - omega| / max({} stderr, {} omega), worst cell", cfg.k_sigma, cfg.rel_tol),
        ),
        Check::at_least("omega positive", omega_min, f64::MIN_POSITIVE, "minimum of omega over the window"),
    ];
    let results = json!({
        "deviation_ratio": ratio,
        "omega_min": omega_min,
        "w_mass": w.mass(),
        "w_mass_stderr": w.mass_stderr(),
        "omega_mass": om.mass(),
    });
    let artifacts = vec![
        artifact("weyl_density.csv", w.to_csv()),
        artifact("omega_density.csv", om.to_csv()),
        artifact("weyl_density.json", w.to_json()?),
        artifact("omega_density.json", om.to_json()?),
    ];
    Ok(Outcome::new("integrable-equality", checks, results, artifacts))
}

/// First and second variation identities and a non-equality witness.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformationSplitsConfig {
    pub symbol: SymbolRef,
    pub deformation: DeformationJson,
    pub t: f64,
    pub test_function: TestFunction,
    pub box_radius: f64,
    pub order: usize,
    pub first_tol: f64,
    pub second_tol: f64,
    pub certificate_window: ComplexWindow,
    pub certificate: CertificateSearch,
}

impl Default for DeformationSplitsConfig {
    fn default() -> Self {
        Self {
            symbol: name("cho(1,0)"),
            deformation: x1x2_deformation(),
            t: 0.2,
            test_function: TestFunction { center: C64::new(0.5, 0.0), radius: 0.3 },
            box_radius: 1.6,
            order: DEFAULT_ORDER,
            first_tol: 0.02,
            second_tol: 0.03,
            certificate_window: ComplexWindow {
                center: C64::new(0.4, 0.4),
                half_widths: (0.6, 0.6),
                resolution: (2, 2),
            },
            certificate: CertificateSearch::default(),
        }
    }
}

pub fn run_deformation_splits(cfg: &DeformationSplitsConfig) -> Result<Outcome> {
    let ps = deformed(&cfg.symbol, &cfg.deformation, cfg.t)?;
    let f = TestFunction::new(cfg.test_function.center, cfg.test_function.radius)?;
    let first = first_variation_report(&f, &ps, cfg.box_radius, cfg.order)?;
    let second = second_variation_report(&f, &ps, cfg.box_radius, cfg.order)?;
    let g = ps.deformation.generator_at(0.0);
    let base_integrable = real_bracket(&ps.base).is_zero();
    let vanishing = if base_integrable {
        Some(first_variation_rhs(&f, &ps.at(0.0)?, &g, cfg.box_radius, cfg.order)?)
    } else {
        None
    };
    let cert = nonequality_certificate(&ps.base, &g, &cfg.certificate_window, &cfg.certificate)?;
    let mut checks = vec![
        Check::at_most("first variation", first.discrepancy, cfg.first_tol, format!("lhs {} rhs {}", first.lhs, first.rhs)),
        Check::at_most(
            "second variation",
            second.discrepancy,
            cfg.second_tol,
            format!("lhs {} rhs {}", second.lhs, second.rhs),
        ),
    ];
    if let Some(v) = vanishing {
        checks.push(Check::at_most("integrable branch vanishes", v.abs(), 0.0, "first-variation rhs at t = 0"));
    }
    checks.push(Check::flag(
        "non-equality certificate",
        cert.witness.is_some(),
        format!("value {} error {} over {} candidates", cert.value, cert.error, cert.candidates),
    ));
    let results = json!({
        "first": first,
        "second": second,
        "integrable_branch_rhs": vanishing,
        "certificate": cert,
    });
    let artifacts = vec![artifact("variation.json", serde_json::to_string_pretty(&results)?)];
    Ok(Outcome::new("deformation-splits", checks, results, artifacts))
}

/// Spectrum of the quantized `p_t` against the exact spectrum of `p`, and the
/// change of the Weyl density.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumInvarianceConfig {
    pub symbol: SymbolRef,
    pub deformation: DeformationJson,
    pub t: f64,
    pub h: f64,
    pub size: usize,
    pub match_tol: f64,
    pub window: ComplexWindow,
    pub box_radius: f64,
    pub samples: u64,
    pub seed: u64,
    pub method: Method,
    pub k_sigma: f64,
}

impl Default for SpectrumInvarianceConfig {
    fn default() -> Self {
        Self {
            symbol: name("cho(1,0)"),
            deformation: x1x2_deformation(),
            t: 0.2,
            h: 0.05,
            size: 30,
            match_tol: 1e-6,
            window: ComplexWindow { center: C64::new(0.1, 0.1), half_widths: (0.2, 0.2), resolution: (16, 16) },
            box_radius: 2.0,
            samples: 4_000_000,
            seed: 0,
            method: Method::MonteCarlo,
            k_sigma: 5.0,
        }
    }
}

pub fn run_spectrum_invariance(cfg: &SpectrumInvarianceConfig) -> Result<Outcome> {
    let ps = deformed(&cfg.symbol, &cfg.deformation, cfg.t)?;
    let pt = closed_form(&ps)?;
    let basis = BasisSpec::hermite(cfg.size, ps.base.dim(), cfg.h)?;
    let safe = SafeRegion::new(&pt, &basis)?;
    let s = spectrum(&quantize_quadratic(&pt, &basis)?)?;
    let exact = quadratic_exact_spectrum(&ps.base, cfg.h, cfg.size)?;
    let computed: Vec<C64> = s.eigenvalues.iter().copied().filter(|z| safe.contains(*z)).collect();
    let expected: Vec<C64> = exact.iter().copied().filter(|z| safe.contains(*z)).collect();
    let err = if computed.len() == expected.len() && !computed.is_empty() {
        hausdorff(&computed, &expected)
    } else {
        f64::INFINITY
    };
    let w0 = weyl_density(&ps.at(0.0)?, &cfg.window, cfg.box_radius, cfg.samples, cfg.seed, cfg.method)?;
    let wt = weyl_density(&ps, &cfg.window, cfg.box_radius, cfg.samples, cfg.seed, cfg.method)?;
    let sigma = wt.max_sigma_deviation(&w0)?;
    let checks = vec![
        Check::at_most(
            "safe-region eigenvalues match",
            err,
            cfg.match_tol,
            format!("{} computed vs {} exact in the safe region", computed.len(), expected.len()),
        ),
        Check::at_least("weyl density changes", sigma, cfg.k_sigma, "largest per-cell difference in standard errors"),
    ];
    let results = json!({
        "safe_eigenvalues": computed.len(),
        "max_eigenvalue_error": err,
        "residual_bound": s.residual_bound,
        "max_sigma_deviation": sigma,
    });
    let diff = wt.difference(&w0)?;
    let artifacts = vec![
        artifact("spectrum_pt.csv", s.to_csv()),
        artifact("exact_spectrum.csv", points_csv(&expected)),
        artifact("weyl_density_p.csv", w0.to_csv()),
        artifact("weyl_density_pt.csv", wt.to_csv()),
        artifact("weyl_density_difference.csv", diff.to_csv()),
    ];
    Ok(Outcome::new("spectrum-invariance", checks, results, artifacts))
}

/// Bohr-Sommerfeld exactness for `cho(alpha, 0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsExactnessConfig {
    pub alpha: f64,
    pub h: f64,
    pub size: usize,
    pub rect: Rect,
    pub theta: Vec<[f64; 2]>,
    pub match_tol: f64,
    pub bs_tol: f64,
}

impl Default for BsExactnessConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            h: 0.05,
            size: 60,
            rect: Rect { re: (0.2, 0.6), im: (0.2, 0.6) },
            theta: vec![[0.5, 0.5]],
            match_tol: 1e-6,
            bs_tol: 1e-10,
        }
    }
}

pub fn run_bs_exactness(cfg: &BsExactnessConfig) -> Result<Outcome> {
    cfg.rect.validate()?;
    let zero = C64::new(0.0, 0.0);
    let q = catalog::cho(cfg.alpha, zero);
    let basis = BasisSpec::hermite(cfg.size, 2, cfg.h)?;
    let safe = SafeRegion::new(&q, &basis)?;
    let s = spectrum(&quantize_quadratic(&q, &basis)?)?;
    let exact = quadratic_exact_spectrum(&q, cfg.h, cfg.size)?;
    let computed: Vec<C64> = s.eigenvalues.iter().copied().filter(|z| safe.contains(*z)).collect();
    let expected: Vec<C64> = exact.iter().copied().filter(|z| safe.contains(*z)).collect();
    let spec_err = if computed.len() == expected.len() { hausdorff(&computed, &expected) } else { f64::INFINITY };

    let am = action_map_integrable(&catalog::cho_torus(cfg.alpha, zero), [0.0, 0.0])?
        .with_domain([(0.0, f64::INFINITY), (0.0, f64::INFINITY)])
        .with_guess([cfg.rect.re.1, cfg.rect.im.1 / cfg.alpha.abs().max(1e-12)]);
    let window = ComplexWindow::from_bounds(cfg.rect.re, cfg.rect.im, (2, 2))?;
    let lattice = BSLattice { action_map: am.clone(), theta: cfg.theta.clone(), h: cfg.h, window };
    let bs = bs_predict(&lattice)?;
    let in_rect: Vec<C64> = expected.iter().copied().filter(|z| cfg.rect.contains(*z)).collect();
    let bs_err = if bs.points.len() == in_rect.len() && bs.unresolved.is_empty() {
        hausdorff(&bs.points, &in_rect)
    } else {
        f64::INFINITY
    };

    let omega_int = am.omega_integral(cfg.rect.re, cfg.rect.im, DEFAULT_ORDER)?;
    let report = count_and_compare(&s, cfg.rect.re, cfg.rect.im, omega_int, (omega_int, 0.0), Some(&safe));
    let rounded = report.omega_prediction.round();
    let checks = vec![
        Check::at_most(
            "computed spectrum matches lattice",
            spec_err,
            cfg.match_tol,
            format!("{} vs {} eigenvalues in the safe region", computed.len(), expected.len()),
        ),
        Check::at_most(
            "bohr-sommerfeld prediction",
            bs_err,
            cfg.bs_tol,
            format!("{} predicted, {} unresolved, {} exact", bs.points.len(), bs.unresolved.len(), in_rect.len()),
        ),
        Check::at_most(
            "count equals omega integral",
            (report.count as f64 - rounded).abs(),
            0.0,
            format!("count {} vs omega prediction {}", report.count, report.omega_prediction),
        ),
        Check::flag("rectangle inside safe region", !report.unsafe_window, "corner check"),
    ];
    let results = json!({
        "spectrum_error": spec_err,
        "bs_error": bs_err,
        "bs_points": bs.points.len(),
        "count": report,
    });
    let artifacts = vec![
        artifact("spectrum.csv", s.to_csv()),
        artifact("bs_prediction.csv", points_csv(&bs.points)),
        artifact("count.json", serde_json::to_string_pretty(&report)?),
    ];
    Ok(Outcome::new("bs-exactness", checks, results, artifacts))
}

/// Counts of `P` and `P + delta Q` in a window against `vol(p_t^{-1}(W))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomWeylMigrationConfig {
    pub symbol: SymbolRef,
    pub deformation: DeformationJson,
    pub t: f64,
    pub h: f64,
    pub size: usize,
    pub delta: f64,
    pub seeds: usize,
    pub first_seed: u64,
    pub rect: Rect,
    pub box_radius: f64,
    pub samples: u64,
    pub volume_seed: u64,
    pub method: Method,
    pub required: usize,
}

impl Default for RandomWeylMigrationConfig {
    fn default() -> Self {
        Self {
            symbol: name("cho(1,0)"),
            deformation: x1x2_deformation(),
            t: 0.2,
            h: 0.05,
            size: 30,
            delta: 1e-4,
            seeds: 5,
            first_seed: 0,
            rect: Rect { re: (0.3, 0.9), im: (-0.05, 0.05) },
            box_radius: 2.0,
            samples: 4_000_000,
            volume_seed: 0,
            method: Method::MonteCarlo,
            required: 4,
        }
    }
}

pub fn run_random_weyl_migration(cfg: &RandomWeylMigrationConfig) -> Result<Outcome> {
    cfg.rect.validate()?;
    if cfg.seeds == 0 {
        return Err(Error::InvalidParameter("seeds must be positive".into()));
    }
    let ps = deformed(&cfg.symbol, &cfg.deformation, cfg.t)?;
    let pt = closed_form(&ps)?;
    let basis = BasisSpec::hermite(cfg.size, ps.base.dim(), cfg.h)?;
    let safe = SafeRegion::new(&pt, &basis)?;
    let p = quantize_quadratic(&pt, &basis)?;
    let vol = preimage_volume(&ps, cfg.rect.re, cfg.rect.im, cfg.box_radius, cfg.samples, cfg.volume_seed, cfg.method)?;
    // omega_t = omega of the base, here (2 pi)^2 on the image quadrant of cho
    let base_nf = crate::quantize::quadratic_normal_form(&ps.base)?;
    let omega_int = omega_integral_oscillator(&base_nf.mu, base_nf.offset, cfg.rect);
    let s0 = spectrum(&p)?;
    let unperturbed = count_and_compare(&s0, cfg.rect.re, cfg.rect.im, omega_int, vol, Some(&safe));
    let target = unperturbed.weyl_prediction;
    let d0 = (unperturbed.count as f64 - target).abs();
    let mut rows = Vec::new();
    let mut closer = 0;
    let mut csv = String::from("seed,count,weyl_prediction,unperturbed_count\n");
    for k in 0..cfg.seeds as u64 {
        let seed = cfg.first_seed + k;
        let s = perturbed_spectrum(&p, cfg.delta, seed)?;
        let r = count_and_compare(&s, cfg.rect.re, cfg.rect.im, omega_int, vol, Some(&safe));
        if ((r.count as f64) - target).abs() < d0 {
            closer += 1;
        }
        csv.push_str(&format!("{seed},{},{:.16e},{}\n", r.count, target, unperturbed.count));
        rows.push(r);
    }
    let checks = vec![
        Check::at_least(
            "perturbed counts closer to weyl prediction",
            closer as f64,
            cfg.required as f64,
            format!("unperturbed count {} vs weyl prediction {:.3}", unperturbed.count, target),
        ),
        Check::flag("window inside safe region", !unperturbed.unsafe_window, "corner check"),
    ];
    let results = json!({
        "unperturbed": unperturbed,
        "perturbed": rows,
        "closer": closer,
    });
    let artifacts = vec![
        artifact("counts.csv", csv),
        artifact("spectrum_unperturbed.csv", s0.to_csv()),
        artifact("comparison.json", serde_json::to_string_pretty(&results)?),
    ];
    Ok(Outcome::new("random-weyl-migration", checks, results, artifacts))
}

/// `integral_W omega` for a two-axis oscillator normal form `z = c0 + sum eta_j mu_j`,
/// `eta_j >= 0`: `(2 pi)^2 |W cap image| / |det(mu)|`, integrated on a fine grid.
pub fn omega_integral_oscillator(mu: &[C64], offset: C64, rect: Rect) -> f64 {
    if mu.len() != 2 {
        return f64::NAN;
    }
    let (a, b, c, d) = (mu[0].re, mu[1].re, mu[0].im, mu[1].im);
    let det = a * d - b * c;
    if det.abs() < 1e-14 {
        return f64::NAN;
    }
    let m = 2000;
    let (dx, dy) = ((rect.re.1 - rect.re.0) / m as f64, (rect.im.1 - rect.im.0) / m as f64);
    let mut hits = 0u64;
    for i in 0..m {
        for j in 0..m {
            let w = C64::new(rect.re.0 + (i as f64 + 0.5) * dx, rect.im.0 + (j as f64 + 0.5) * dy) - offset;
            let e1 = (d * w.re - b * w.im) / det;
            let e2 = (-c * w.re + a * w.im) / det;
            if e1 >= 0.0 && e2 >= 0.0 {
                hits += 1;
            }
        }
    }
    (2.0 * PI).powi(2) * hits as f64 * dx * dy / det.abs()
}

fn parse<T: serde::de::DeserializeOwned + Default>(v: Value) -> Result<T> {
    if v.is_null() {
        Ok(T::default())
    } else {
        Ok(serde_json::from_value(v)?)
    }
}

fn unknown(name: &str) -> Error {
    Error::InvalidParameter(format!("unknown experiment `{name}`; expected one of {}", EXPERIMENTS.join(", ")))
}

/// The config a run would use: defaults filled in, every field explicit.
pub fn resolved_config(name: &str, config: Value) -> Result<Value> {
    fn full<T: serde::de::DeserializeOwned + Default + Serialize>(v: Value) -> Result<Value> {
        Ok(serde_json::to_value(parse::<T>(v)?)?)
    }
    match name {
        "audit" => full::<AuditExperiment>(config),
        "integrable-equality" => full::<IntegrableEqualityConfig>(config),
        "deformation-splits" => full::<DeformationSplitsConfig>(config),
        "spectrum-invariance" => full::<SpectrumInvarianceConfig>(config),
        "bs-exactness" => full::<BsExactnessConfig>(config),
        "random-weyl-migration" => full::<RandomWeylMigrationConfig>(config),
        _ => Err(unknown(name)),
    }
}

/// Runs a named experiment from its JSON config (`null` for defaults).
pub fn run_named(name: &str, config: Value) -> Result<Outcome> {
    match name {
        "audit" => run_audit(&parse(config)?),
        "integrable-equality" => run_integrable_equality(&parse(config)?),
        "deformation-splits" => run_deformation_splits(&parse(config)?),
        "spectrum-invariance" => run_spectrum_invariance(&parse(config)?),
        "bs-exactness" => run_bs_exactness(&parse(config)?),
        "random-weyl-migration" => run_random_weyl_migration(&parse(config)?),
        _ => Err(unknown(name)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_rejected() {
        let err = run_named("bs-exactness", json!({"h": 0.05, "bogus": 1})).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn unknown_experiment() {
        assert!(run_named("nope", Value::Null).is_err());
    }

    #[test]
    fn oscillator_omega_integral() {
        let mu = [C64::new(0.0, 1.0), C64::new(1.0, 0.0)];
        let v = omega_integral_oscillator(&mu, C64::new(0.0, 0.0), Rect { re: (0.3, 0.9), im: (-0.05, 0.05) });
        let want = (2.0 * PI).powi(2) * 0.6 * 0.05;
        assert!((v - want).abs() < 1e-9 * want);
    }

    #[test]
    fn small_bs_exactness() {
        let cfg = BsExactnessConfig { size: 20, rect: Rect { re: (0.1, 0.3), im: (0.1, 0.3) }, ..Default::default() };
        let o = run_bs_exactness(&cfg).unwrap();
        assert!(o.passed, "{:?}", o.checks);
    }
}
