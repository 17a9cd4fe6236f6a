//! Single-purpose subcommands. Each argument struct doubles as the JSON config
//! recorded in the run manifest.

use std::str::FromStr;

use bsweyl_core::catalog;
use bsweyl_core::density::{weyl_density, ComplexWindow, Method};
use bsweyl_core::experiment::{artifact, omega_integral_oscillator, Check, Outcome, Rect};
use bsweyl_core::flow::{Deformation, DeformedSymbol};
use bsweyl_core::quantize::{
    bs_predict, count_and_compare, perturbed_spectrum, quadratic_normal_form, quantize_quadratic, quantize_torus,
    BSLattice, BasisSpec, SafeRegion,
};
use bsweyl_core::density::{action_map_integrable, preimage_volume};
use bsweyl_core::symbol::{PhaseFunction, SymbolExpr};
use bsweyl_core::variation::{first_variation_report, second_variation_report, TestFunction};
use bsweyl_core::{Error, Result, C64};
use clap::{Args, Parser};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const COMMANDS: [&str; 7] = ["audit", "density", "deform-density", "variation", "spectrum", "bs", "count"];

/// Rectangle `RE0,RE1,IM0,IM1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl FromStr for Bounds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}` in `{s}`")))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() != 4 {
            return Err(format!("expected RE0,RE1,IM0,IM1, got `{s}`"));
        }
        if !(v[0] < v[1] && v[2] < v[3]) {
            return Err(format!("bounds must be increasing in `{s}`"));
        }
        Ok(Self { re: (v[0], v[1]), im: (v[2], v[3]) })
    }
}

/// Grid resolution `NXxNY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution(pub usize, pub usize);

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once('x').ok_or_else(|| format!("expected NXxNY, got `{s}`"))?;
        let p = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad count `{t}` in `{s}`"));
        Ok(Self(p(a)?, p(b)?))
    }
}

/// A pair of reals `A,B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair(pub f64, pub f64);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got `{s}`"))?;
        let p = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}` in `{s}`"));
        Ok(Self(p(a)?, p(b)?))
    }
}

pub fn parse_method(s: &str) -> std::result::Result<Method, String> {
    serde_json::from_value(json!(s)).map_err(|_| {
        format!("unknown method `{s}`; expected monte-carlo, tensor-quadrature or jacobian-formula")
    })
}

fn parse_c64(s: &str) -> std::result::Result<C64, String> {
    catalog::parse_complex(s).map_err(|e| e.to_string())
}

/// Built-in name, inline JSON, or `@file.json`.
pub fn resolve_symbol(spec: &str) -> Result<SymbolExpr> {
    match spec.strip_prefix('@') {
        Some(path) => catalog::parse_symbol(&std::fs::read_to_string(path)?),
        None => catalog::parse_symbol(spec),
    }
}

/// Defaults of an argument struct, as clap would fill them in.
pub fn defaults<T: Args>() -> T {
    #[derive(Parser)]
    struct Wrap<T: Args> {
        #[command(flatten)]
        inner: T,
    }
    Wrap::<T>::parse_from(["bsweyl"]).inner
}

macro_rules! default_via_clap {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                defaults::<$t>()
            }
        }
    )*};
}

default_via_clap!(AuditArgs, DensityArgs, DeformDensityArgs, VariationArgs, SpectrumArgs, BsArgs, CountArgs);

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditArgs {
    /// Symbol: built-in name or inline JSON.
    #[arg(long, default_value = "cho(1,(1+i)/2)")]
    pub symbol: String,
    #[arg(long, default_value_t = 6000)]
    pub sample_budget: usize,
    #[arg(long, default_value_t = 4.0)]
    pub ball_radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// The audit experiment config these flags describe.
pub fn audit_config(a: &AuditArgs) -> serde_json::Value {
    json!({
        "symbol": a.symbol,
        "audit": { "sample_budget": a.sample_budget, "ball_radius": a.ball_radius, "seed": a.seed },
    })
}

/// The symbol `p`, or `p_t` when a generator is given.
enum Phase {
    Plain(SymbolExpr),
    Deformed(Box<DeformedSymbol>),
}

impl Phase {
    fn new(symbol: &str, g: Option<&str>, t: f64) -> Result<Self> {
        let p = resolve_symbol(symbol)?;
        match g {
            None if t != 0.0 => Err(Error::InvalidParameter("--t needs a generator --G".into())),
            None => Ok(Phase::Plain(p)),
            Some(g) => {
                let d = Deformation::new(resolve_symbol(g)?);
                Ok(Phase::Deformed(Box::new(DeformedSymbol::new(p, d, t)?)))
            }
        }
    }

    fn as_dyn(&self) -> &dyn PhaseFunction {
        match self {
            Phase::Plain(p) => p,
            Phase::Deformed(d) => d.as_ref(),
        }
    }

    /// Closed form, needed by the matrix and audit paths.
    fn symbol(&self) -> Result<SymbolExpr> {
        match self {
            Phase::Plain(p) => Ok(p.clone()),
            Phase::Deformed(d) => d.deformed_quadratic(),
        }
    }

    fn base(&self) -> &SymbolExpr {
        match self {
            Phase::Plain(p) => p,
            Phase::Deformed(d) => &d.base,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityArgs {
    #[arg(long, default_value = "cho(1,(1+i)/2)")]
    pub symbol: String,
    /// Deformation generator; `p` itself when absent.
    #[arg(long = "G")]
    #[serde(rename = "G")]
    pub g: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    /// Window `RE0,RE1,IM0,IM1`.
    #[arg(long, default_value = "-0.4,0.4,-0.4,0.4", allow_hyphen_values = true)]
    pub window: Bounds,
    #[arg(long, default_value = "64x64", allow_hyphen_values = true)]
    pub res: Resolution,
    #[arg(long, default_value_t = 4.0)]
    pub box_radius: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "monte-carlo", value_parser = parse_method)]
    pub method: Method,
}

fn window(b: Bounds, r: Resolution) -> Result<ComplexWindow> {
    ComplexWindow::from_bounds(b.re, b.im, (r.0, r.1))
}

pub fn density(a: &DensityArgs) -> Result<Outcome> {
    let p = Phase::new(&a.symbol, a.g.as_deref(), a.t)?;
    let win = window(a.window, a.res)?;
    let w = weyl_density(p.as_dyn(), &win, a.box_radius, a.samples, a.seed, a.method)?;
    let checks = vec![Check::flag("samples in window", !w.empty, "at least one sample landed in the window")];
    let results = json!({
        "mass": w.mass(),
        "mass_stderr": w.mass_stderr(),
        "method": w.method,
        "samples": w.samples,
        "seed": w.seed,
        "box_radius": w.box_radius,
    });
    let artifacts = vec![artifact("weyl_density.csv", w.to_csv()), artifact("weyl_density.json", w.to_json()?)];
    Ok(Outcome::new("density", checks, results, artifacts))
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformDensityArgs {
    #[arg(long, default_value = "cho(1,0)")]
    pub symbol: String,
    #[arg(long = "G", default_value = "x1x2")]
    #[serde(rename = "G")]
    pub g: String,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value = "-0.1,0.3,-0.1,0.3", allow_hyphen_values = true)]
    pub window: Bounds,
    #[arg(long, default_value = "16x16", allow_hyphen_values = true)]
    pub res: Resolution,
    #[arg(long, default_value_t = 2.0)]
    pub box_radius: f64,
    #[arg(long, default_value_t = 4_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "monte-carlo", value_parser = parse_method)]
    pub method: Method,
    /// Required separation of the two grids, in standard errors.
    #[arg(long, default_value_t = 5.0)]
    pub k_sigma: f64,
}

pub fn deform_density(a: &DeformDensityArgs) -> Result<Outcome> {
    let pt = Phase::new(&a.symbol, Some(&a.g), a.t)?;
    let win = window(a.window, a.res)?;
    let wt = weyl_density(pt.as_dyn(), &win, a.box_radius, a.samples, a.seed, a.method)?;
    let w0 = weyl_density(pt.base(), &win, a.box_radius, a.samples, a.seed, a.method)?;
    let diff = wt.difference(&w0)?;
    let sigma = wt.max_sigma_deviation(&w0)?;
    let checks = vec![Check::at_least(
        "weyl density changes",
        sigma,
        a.k_sigma,
        "largest |w_t - w_0| over its standard error",
    )];
    let results = json!({
        "max_sigma_deviation": sigma,
        "mass_t": wt.mass(),
        "mass_0": w0.mass(),
        "mass_stderr": wt.mass_stderr(),
    });
    let artifacts = vec![
        artifact("weyl_density_t.csv", wt.to_csv()),
        artifact("weyl_density_0.csv", w0.to_csv()),
        artifact("difference.csv", diff.to_csv()),
    ];
    Ok(Outcome::new("deform-density", checks, results, artifacts))
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationArgs {
    /// 1 for d/dt at t, 2 for d^2/dt^2 at 0.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    #[arg(long, default_value = "cho(1,0)")]
    pub symbol: String,
    #[arg(long = "G", default_value = "x1x2")]
    #[serde(rename = "G")]
    pub g: String,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value = "0.5", value_parser = parse_c64)]
    pub f_center: C64,
    #[arg(long, default_value_t = 0.3)]
    pub f_radius: f64,
    #[arg(long, default_value_t = 1.6)]
    pub box_radius: f64,
    /// Gauss-Legendre points per axis.
    #[arg(long, default_value_t = 48)]
    pub quad_order: usize,
    /// Allowed relative discrepancy; 0.02 for order 1 and 0.03 for order 2 when absent.
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn variation(a: &VariationArgs) -> Result<Outcome> {
    let ps = DeformedSymbol::new(resolve_symbol(&a.symbol)?, Deformation::new(resolve_symbol(&a.g)?), a.t)?;
    let f = TestFunction::new(a.f_center, a.f_radius)?;
    let (report, tol) = match a.order {
        1 => (first_variation_report(&f, &ps, a.box_radius, a.quad_order)?, a.tol.unwrap_or(0.02)),
        2 => (second_variation_report(&f, &ps, a.box_radius, a.quad_order)?, a.tol.unwrap_or(0.03)),
        o => return Err(Error::InvalidParameter(format!("order must be 1 or 2, got {o}"))),
    };
    let checks = vec![Check::at_most(
        "variational identity",
        report.discrepancy,
        tol,
        format!("|lhs - rhs| / |rhs|, lhs = {} rhs = {}", report.lhs, report.rhs),
    )];
    let results = serde_json::to_value(&report)?;
    let artifacts = vec![artifact("variation.json", serde_json::to_string_pretty(&report)?)];
    Ok(Outcome::new("variation", checks, results, artifacts))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    Hermite,
    Torus,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumArgs {
    #[arg(long, default_value = "cho(1,0)")]
    pub symbol: String,
    #[arg(long = "G")]
    #[serde(rename = "G")]
    pub g: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    /// Hermite functions per axis, or the Fourier cutoff K.
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "hermite")]
    pub basis: BasisChoice,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn spectrum(a: &SpectrumArgs) -> Result<Outcome> {
    let p = Phase::new(&a.symbol, a.g.as_deref(), a.t)?;
    let q = p.symbol()?;
    let n = q.dim();
    let (matrix, safe) = match a.basis {
        BasisChoice::Hermite => {
            let b = BasisSpec::hermite(a.size, n, a.h)?;
            (quantize_quadratic(&q, &b)?, SafeRegion::new(&q, &b).ok())
        }
        BasisChoice::Torus => (quantize_torus(&q, &BasisSpec::torus(a.size, n, a.h)?)?, None),
    };
    let s = perturbed_spectrum(&matrix, a.delta, a.seed)?;
    let safe_count = safe.as_ref().map(|r| s.eigenvalues.iter().filter(|z| r.contains(**z)).count());
    let meta = json!({
        "h": a.h,
        "size": a.size,
        "dim": matrix.dim,
        "delta": a.delta,
        "seed": a.seed,
        "residual_bound": s.residual_bound,
        "safe_count": safe_count,
    });
    let artifacts = vec![artifact("spectrum.csv", s.to_csv()), artifact("spectrum.json", serde_json::to_string_pretty(&meta)?)];
    Ok(Outcome::new("spectrum", Vec::new(), meta, artifacts))
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsArgs {
    /// Action-only normal form, actions in the xi slots.
    #[arg(long, default_value = "torus-linear")]
    pub symbol: String,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long, default_value = "0.05,0.55,0.05,0.55", allow_hyphen_values = true)]
    pub window: Bounds,
    /// Phase `theta_0`; repeat for `theta_1, theta_2, ...`.
    #[arg(long, default_values = ["0.5,0.5"], allow_hyphen_values = true)]
    pub theta: Vec<Pair>,
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub i0: Pair,
}

pub fn bs(a: &BsArgs) -> Result<Outcome> {
    let p = resolve_symbol(&a.symbol)?;
    let lattice = BSLattice {
        action_map: action_map_integrable(&p, [a.i0.0, a.i0.1])?,
        theta: a.theta.iter().map(|t| [t.0, t.1]).collect(),
        h: a.h,
        window: ComplexWindow::from_bounds(a.window.re, a.window.im, (2, 2))?,
    };
    let pred = bs_predict(&lattice)?;
    let mut csv = String::from("re,im,k1,k2\n");
    for (z, k) in pred.points.iter().zip(&pred.quantum_numbers) {
        csv.push_str(&format!("{:.16e},{:.16e},{},{}\n", z.re, z.im, k[0], k[1]));
    }
    let checks = vec![Check::at_most(
        "all lattice points resolved",
        pred.unresolved.len() as f64,
        0.0,
        "quantum numbers whose Newton solve failed",
    )];
    let results = json!({ "count": pred.points.len(), "unresolved": pred.unresolved });
    Ok(Outcome::new("bs", checks, results, vec![artifact("bs.csv", csv)]))
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountArgs {
    /// Elliptic quadratic symbol.
    #[arg(long, default_value = "cho(1,0)")]
    pub symbol: String,
    #[arg(long = "G")]
    #[serde(rename = "G")]
    pub g: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "0.3,0.9,-0.05,0.05", allow_hyphen_values = true)]
    pub rect: Bounds,
    #[arg(long, default_value_t = 2.0)]
    pub box_radius: f64,
    #[arg(long, default_value_t = 4_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub volume_seed: u64,
    #[arg(long, default_value = "monte-carlo", value_parser = parse_method)]
    pub method: Method,
}

pub fn count(a: &CountArgs) -> Result<Outcome> {
    let p = Phase::new(&a.symbol, a.g.as_deref(), a.t)?;
    let q = p.symbol()?;
    let b = BasisSpec::hermite(a.size, q.dim(), a.h)?;
    let s = perturbed_spectrum(&quantize_quadratic(&q, &b)?, a.delta, a.seed)?;
    let safe = SafeRegion::new(&q, &b)?;
    // omega is invariant under the deformation; take it from the base normal form
    let nf = quadratic_normal_form(p.base())?;
    let rect = Rect::new(a.rect.re, a.rect.im)?;
    let omega = omega_integral_oscillator(&nf.mu, nf.offset, rect);
    let vol = preimage_volume(p.as_dyn(), rect.re, rect.im, a.box_radius, a.samples, a.volume_seed, a.method)?;
    let report = count_and_compare(&s, rect.re, rect.im, omega, vol, Some(&safe));
    let checks = vec![Check::flag("window inside safe region", !report.unsafe_window, "all rectangle corners are trusted")];
    let results = serde_json::to_value(&report)?;
    let artifacts = vec![
        artifact("spectrum.csv", s.to_csv()),
        artifact("comparison.json", serde_json::to_string_pretty(&report)?),
    ];
    Ok(Outcome::new("count", checks, results, artifacts))
}
