//! Built-in model symbols and the JSON symbol schema.
//!
//! Symbols are referenced either by a built-in name such as `cho(1,(1+i)/2)`,
//! `torus-coupled(0.3)` or `x1x2`, or by an inline JSON object
//!
//! ```json
//! { "n": 2, "terms": [ { "re": 0.5, "im": 0.0, "xpow": [2, 0], "xipow": [0, 0],
//!                        "xfreq": [0, 0], "xifreq": [0, 0] } ], "tube_radius": 1.0 }
//! ```
//!
//! `xfreq`/`xifreq` may be omitted for polynomial terms.

use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{SymbolExpr, Term, Var};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub re: f64,
    pub im: f64,
    pub xpow: Vec<u32>,
    pub xipow: Vec<u32>,
    #[serde(default)]
    pub xfreq: Option<Vec<f64>>,
    #[serde(default)]
    pub xifreq: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolJson {
    pub n: usize,
    pub terms: Vec<TermJson>,
    #[serde(default = "default_tube")]
    pub tube_radius: f64,
}

fn default_tube() -> f64 {
    SymbolExpr::DEFAULT_TUBE
}

impl SymbolJson {
    pub fn into_symbol(self) -> Result<SymbolExpr> {
        let n = self.n;
        let terms = self
            .terms
            .into_iter()
            .map(|t| Term {
                coeff: C64::new(t.re, t.im),
                xpow: t.xpow,
                xipow: t.xipow,
                xfreq: t.xfreq.unwrap_or_else(|| vec![0.0; n]),
                xifreq: t.xifreq.unwrap_or_else(|| vec![0.0; n]),
            })
            .collect();
        SymbolExpr::new(n, terms, self.tube_radius)
    }

    pub fn from_symbol(s: &SymbolExpr) -> Self {
        Self {
            n: s.dim(),
            tube_radius: s.tube_radius(),
            terms: s
                .terms()
                .iter()
                .map(|t| TermJson {
                    re: t.coeff.re,
                    im: t.coeff.im,
                    xpow: t.xpow.clone(),
                    xipow: t.xipow.clone(),
                    xfreq: Some(t.xfreq.clone()),
                    xifreq: Some(t.xifreq.clone()),
                })
                .collect(),
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn mono(coeff: C64, xpow: &[u32], xipow: &[u32]) -> Term {
    Term::monomial(coeff, xpow.to_vec(), xipow.to_vec())
}

fn build(n: usize, terms: Vec<Term>) -> SymbolExpr {
    SymbolExpr::new(n, terms, SymbolExpr::DEFAULT_TUBE).expect("built-in symbol is valid")
}

/// `1/2 ((x1^2 + xi1^2) + i alpha (x2^2 + xi2^2)) - shift`.
pub fn cho(alpha: f64, shift: C64) -> SymbolExpr {
    build(
        2,
        vec![
            mono(c(0.5, 0.0), &[2, 0], &[0, 0]),
            mono(c(0.5, 0.0), &[0, 0], &[2, 0]),
            mono(c(0.0, 0.5 * alpha), &[0, 2], &[0, 0]),
            mono(c(0.0, 0.5 * alpha), &[0, 0], &[0, 2]),
            Term::constant(-shift, 2),
        ],
    )
}

/// Action-variable normal form of [`cho`]: `eta1 + i alpha eta2 - shift`, with
/// `eta_j = (x_j^2 + xi_j^2)/2` carried in the `xi` slots.
pub fn cho_torus(alpha: f64, shift: C64) -> SymbolExpr {
    build(
        2,
        vec![
            mono(c(1.0, 0.0), &[0, 0], &[1, 0]),
            mono(c(0.0, alpha), &[0, 0], &[0, 1]),
            Term::constant(-shift, 2),
        ],
    )
}

/// `eta1 + i eta2` on `T*T^2` (actions in the `xi` slots).
pub fn torus_linear() -> SymbolExpr {
    torus_coupled(0.0)
}

/// `eta1 + i eta2 + c eta1 eta2`.
pub fn torus_coupled(coupling: f64) -> SymbolExpr {
    build(
        2,
        vec![
            mono(c(1.0, 0.0), &[0, 0], &[1, 0]),
            mono(c(0.0, 1.0), &[0, 0], &[0, 1]),
            mono(c(coupling, 0.0), &[0, 0], &[1, 1]),
        ],
    )
}

/// The generator `G = x1 x2`.
pub fn x1x2() -> SymbolExpr {
    build(2, vec![mono(c(1.0, 0.0), &[1, 1], &[0, 0])])
}

/// `G = sin(x1) cos(xi2)` written with exponentials.
pub fn sin_x1_cos_xi2() -> SymbolExpr {
    // sin a cos b = (e^{i(a+b)} + e^{i(a-b)} - e^{-i(a-b)} - e^{-i(a+b)}) / 4i
    let q = c(0.0, -0.25);
    let t = |coeff: C64, a: f64, b: f64| Term {
        coeff,
        xpow: vec![0, 0],
        xipow: vec![0, 0],
        xfreq: vec![a, 0.0],
        xifreq: vec![0.0, b],
    };
    build(
        2,
        vec![t(q, 1.0, 1.0), t(q, 1.0, -1.0), t(-q, -1.0, 1.0), t(-q, -1.0, -1.0)],
    )
}

/// `G = a . x` for a real vector `a`.
pub fn linear_x(a: &[f64]) -> SymbolExpr {
    let n = a.len();
    let terms = a
        .iter()
        .enumerate()
        .map(|(j, &aj)| {
            let mut xpow = vec![0; n];
            xpow[j] = 1;
            Term::monomial(c(aj, 0.0), xpow, vec![0; n])
        })
        .collect();
    build(n, terms)
}

/// One-dimensional model `xi + i x` with `{Re p, Im p} = 1`.
pub fn xi_plus_ix() -> SymbolExpr {
    build(
        1,
        vec![mono(c(1.0, 0.0), &[0], &[1]), mono(c(0.0, 1.0), &[1], &[0])],
    )
}

/// `1/2 sum_j (x_j^2 + xi_j^2)` in dimension `n`.
pub fn oscillator(n: usize) -> SymbolExpr {
    let mut terms = Vec::new();
    for j in 0..n {
        let x = SymbolExpr::coordinate(n, Var::X(j));
        let xi = SymbolExpr::coordinate(n, Var::Xi(j));
        terms.extend((&x * &x).terms().iter().map(|t| Term { coeff: t.coeff * 0.5, ..t.clone() }));
        terms.extend((&xi * &xi).terms().iter().map(|t| Term { coeff: t.coeff * 0.5, ..t.clone() }));
    }
    build(n, terms)
}

/// Parses a complex literal: `0.5`, `1-2i`, `i`, `(1+i)/2`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let s = s.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse complex number `{s}`"));
    if let Some(rest) = s.strip_prefix('(') {
        let close = rest.rfind(')').ok_or_else(bad)?;
        let inner = parse_complex(&rest[..close])?;
        let tail = rest[close + 1..].trim();
        if tail.is_empty() {
            return Ok(inner);
        }
        let den = tail.strip_prefix('/').ok_or_else(bad)?;
        let d: f64 = den.trim().parse().map_err(|_| bad())?;
        return Ok(inner / d);
    }
    if let Ok(v) = f64::from_str(s) {
        return Ok(c(v, 0.0));
    }
    // normalise bare `i` so the num-complex parser accepts it
    let norm = s
        .replace("+i", "+1i")
        .replace("-i", "-1i");
    let norm = if norm == "i" { "1i".to_string() } else { norm };
    C64::from_str(&norm).map_err(|_| bad())
}

fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (k, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..k].trim());
                start = k + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        out.push(last);
    }
    out
}

fn real_arg(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("expected a real number, got `{s}`")))
}

/// Resolves a symbol reference: a built-in name or inline JSON.
pub fn parse_symbol(spec: &str) -> Result<SymbolExpr> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        let j: SymbolJson = serde_json::from_str(spec)?;
        return j.into_symbol();
    }
    let (name, args) = match spec.find('(') {
        Some(k) if spec.ends_with(')') => (&spec[..k], split_args(&spec[k + 1..spec.len() - 1])),
        Some(_) => return Err(Error::InvalidSymbol(format!("unbalanced arguments in `{spec}`"))),
        None => (spec, Vec::new()),
    };
    let arity = |k: usize| -> Result<()> {
        if args.len() != k {
            return Err(Error::InvalidSymbol(format!(
                "`{name}` takes {k} argument(s), got {}",
                args.len()
            )));
        }
        Ok(())
    };
    match name {
        "cho" | "cho-torus" => {
            let (alpha, shift) = match args.len() {
                0 => (1.0, c(0.0, 0.0)),
                2 => (real_arg(args[0])?, parse_complex(args[1])?),
                _ => return Err(Error::InvalidSymbol(format!("`{name}` takes (alpha, shift)"))),
            };
            Ok(if name == "cho" { cho(alpha, shift) } else { cho_torus(alpha, shift) })
        }
        "torus-linear" => {
            arity(0)?;
            Ok(torus_linear())
        }
        "torus-coupled" => {
            arity(1)?;
            Ok(torus_coupled(real_arg(args[0])?))
        }
        "x1x2" => {
            arity(0)?;
            Ok(x1x2())
        }
        "sin-x1-cos-xi2" => {
            arity(0)?;
            Ok(sin_x1_cos_xi2())
        }
        "linear-x" => {
            let a = args.iter().map(|s| real_arg(s)).collect::<Result<Vec<_>>>()?;
            if a.is_empty() {
                return Err(Error::InvalidSymbol("`linear-x` needs at least one coefficient".into()));
            }
            Ok(linear_x(&a))
        }
        "xi-plus-ix" => {
            arity(0)?;
            Ok(xi_plus_ix())
        }
        "oscillator" => {
            arity(1)?;
            let n: usize = args[0]
                .parse()
                .map_err(|_| Error::InvalidSymbol(format!("bad dimension `{}`", args[0])))?;
            if n == 0 {
                return Err(Error::InvalidSymbol("dimension must be positive".into()));
            }
            Ok(oscillator(n))
        }
        "zero" => {
            let n = if args.is_empty() { 2 } else { real_arg(args[0])? as usize };
            Ok(SymbolExpr::zero(n.max(1)))
        }
        "const" => {
            arity(1)?;
            Ok(SymbolExpr::constant(2, parse_complex(args[0])?))
        }
        _ => Err(Error::InvalidSymbol(format!("unknown symbol `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::PhasePoint;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("0.5").unwrap(), c(0.5, 0.0));
        assert_eq!(parse_complex("(1+i)/2").unwrap(), c(0.5, 0.5));
        assert_eq!(parse_complex("1-2i").unwrap(), c(1.0, -2.0));
        assert_eq!(parse_complex("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert!(parse_complex("1+").is_err());
    }

    #[test]
    fn named_symbols() {
        let p = parse_symbol("cho(1,(1+i)/2)").unwrap();
        assert_eq!(p, cho(1.0, c(0.5, 0.5)));
        assert_eq!(parse_symbol("torus-coupled(0.3)").unwrap(), torus_coupled(0.3));
        assert_eq!(parse_symbol("x1x2").unwrap(), x1x2());
        assert!(parse_symbol("nope").is_err());
        assert!(parse_symbol("torus-coupled()").is_err());
    }

    #[test]
    fn json_schema_roundtrip() {
        let p = sin_x1_cos_xi2().try_add(&cho(2.0, c(0.1, 0.0))).unwrap();
        let s = serde_json::to_string(&SymbolJson::from_symbol(&p)).unwrap();
        let q = parse_symbol(&s).unwrap();
        let rho = PhasePoint::real(&[0.3, -0.4], &[1.1, 0.2]).unwrap();
        assert_eq!(p.eval(&rho).unwrap(), q.eval(&rho).unwrap());
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let bad = r#"{"n":1,"terms":[],"tube_radius":1.0,"extra":3}"#;
        assert!(parse_symbol(bad).is_err());
        let bad_len = r#"{"n":2,"terms":[{"re":1,"im":0,"xpow":[1],"xipow":[0,0]}],"tube_radius":1.0}"#;
        assert!(parse_symbol(bad_len).is_err());
    }

    #[test]
    fn trig_generator_is_sin_cos() {
        let g = sin_x1_cos_xi2();
        let v = g.value_real(&[0.7, 0.0], &[0.0, -1.3]);
        assert!((v.re - 0.7f64.sin() * 1.3f64.cos()).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
    }
}
