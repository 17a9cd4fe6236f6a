//! Measured stand-ins for the standing assumptions on `p`: ellipticity at
//! infinity, independence of `d Re p, d Im p` and smallness of
//! `{Re p, Im p}` on the real zero set, connectivity of the zero set, and
//! conditioning of the action map. Nothing here is a proof.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{ActionMap, ComplexWindow};
use crate::error::{Error, Result};
use crate::symbol::{real_bracket_from_gradient, PhaseFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    Pass,
    Fail,
    NotChecked,
}

impl Flag {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Flag::Pass
        } else {
            Flag::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Number of Newton starts for zero-set sampling, and of shell samples.
    pub sample_budget: usize,
    /// `C`: ellipticity is checked as `|p| >= 1/C` on `C <= |rho|_inf <= 3C`,
    /// and Newton starts are drawn from `[-C, C]^{2n}`.
    pub ball_radius: f64,
    pub seed: u64,
    /// Advisory threshold on `max |{Re p, Im p}|` over the zero set.
    pub bracket_threshold: f64,
    pub linkage_radius: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            sample_budget: 6000,
            ball_radius: 4.0,
            seed: 0,
            bracket_threshold: 0.1,
            linkage_radius: 0.2,
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub ellipticity_min_abs: f64,
    pub ellipticity: Flag,
    pub zero_points: usize,
    /// Minimum over zero points of `|d Re p ^ d Im p|`.
    pub independence_min: Option<f64>,
    pub independence: Flag,
    /// Maximum over zero points of `|{Re p, Im p}|`.
    pub bracket_max: Option<f64>,
    /// Advisory only.
    pub bracket_small: Flag,
    pub clusters: Option<usize>,
    /// Heuristic: one cluster under single linkage.
    pub connected: Flag,
    pub action_jacobian_condition: Option<f64>,
    pub action_map: Flag,
}

/// Real gradients of `Re p`, `Im p` at a real point `y = [x; xi]`.
fn real_gradients(p: &dyn PhaseFunction, y: &[f64]) -> Result<(C64, Vec<f64>, Vec<f64>, f64)> {
    let n = p.dim();
    let x: Vec<C64> = y[..n].iter().map(|&v| C64::new(v, 0.0)).collect();
    let xi: Vec<C64> = y[n..].iter().map(|&v| C64::new(v, 0.0)).collect();
    let v = p.value_at(&x, &xi)?;
    let (gx, gxi) = p.gradient_at_point(&x, &xi)?;
    let g: Vec<C64> = gx.iter().chain(&gxi).copied().collect();
    let bracket = real_bracket_from_gradient(&gx, &gxi);
    Ok((v, g.iter().map(|c| c.re).collect(), g.iter().map(|c| c.im).collect(), bracket))
}

/// `sqrt(|a|^2 |b|^2 - (a.b)^2)`, the area spanned by `a` and `b`.
pub fn independence_measure(a: &[f64], b: &[f64]) -> f64 {
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let bb: f64 = b.iter().map(|v| v * v).sum();
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (aa * bb - ab * ab).max(0.0).sqrt()
}

/// Minimum-norm Newton iteration for the two real equations `p(y) = 0`.
pub fn newton_zero(p: &dyn PhaseFunction, start: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let mut y = start.to_vec();
    for _ in 0..=max_iter {
        let (v, a, b, _) = real_gradients(p, &y).ok()?;
        if v.norm() <= tol {
            return Some(y);
        }
        // J = [a; b] (2 x d); step = -J^T (J J^T)^{-1} F
        let aa: f64 = a.iter().map(|t| t * t).sum();
        let bb: f64 = b.iter().map(|t| t * t).sum();
        let ab: f64 = a.iter().zip(&b).map(|(s, t)| s * t).sum();
        let det = aa * bb - ab * ab;
        if !(det > 1e-300) {
            return None;
        }
        let c1 = (bb * v.re - ab * v.im) / det;
        let c2 = (-ab * v.re + aa * v.im) / det;
        for k in 0..y.len() {
            y[k] -= c1 * a[k] + c2 * b[k];
        }
        if y.iter().any(|t| !t.is_finite()) {
            return None;
        }
    }
    None
}

/// Number of clusters under single linkage at radius `r`.
pub fn single_linkage_clusters(points: &[Vec<f64>], r: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let r2 = r * r;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Samples the real zero set of `p` by Newton from seeded starts in `[-C, C]^{2n}`.
pub fn sample_zero_set(p: &dyn PhaseFunction, cfg: &AuditConfig) -> Vec<Vec<f64>> {
    let d = 2 * p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.ball_radius;
    let mut out = Vec::new();
    for _ in 0..cfg.sample_budget {
        let start: Vec<f64> = (0..d).map(|_| c * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if let Some(z) = newton_zero(p, &start, cfg.newton_tol, cfg.newton_max_iter) {
            if z.iter().all(|v| v.abs() <= 3.0 * c) {
                out.push(z);
            }
        }
    }
    out
}

fn min_on_shell(p: &dyn PhaseFunction, cfg: &AuditConfig) -> Result<f64> {
    let n = p.dim();
    let d = 2 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let c = cfg.ball_radius;
    let mut best = f64::INFINITY;
    let mut y = vec![0.0; d];
    for s in 0..cfg.sample_budget {
        // a point with |y|_inf = radius, radius in [C, 3C]
        let radius = c * (1.0 + 2.0 * rng.random::<f64>());
        for v in y.iter_mut() {
            *v = radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        let k = s % d;
        y[k] = if rng.random::<bool>() { radius } else { -radius };
        best = best.min(p.value_real(&y[..n], &y[n..])?.norm());
    }
    Ok(best)
}

/// Runs every check; the action map check only when one is given.
pub fn audit(
    p: &dyn PhaseFunction,
    cfg: &AuditConfig,
    action: Option<(&ActionMap, &ComplexWindow)>,
) -> Result<AuditReport> {
    if cfg.sample_budget == 0 || !(cfg.ball_radius > 0.0) {
        return Err(Error::InvalidParameter("audit needs a positive budget and ball radius".into()));
    }
    let min_abs = min_on_shell(p, cfg)?;
    let zeros = sample_zero_set(p, cfg);
    let mut indep = f64::INFINITY;
    let mut bracket: f64 = 0.0;
    for z in &zeros {
        let (_, a, b, br) = real_gradients(p, z)?;
        indep = indep.min(independence_measure(&a, &b));
        bracket = bracket.max(br.abs());
    }
    let have = !zeros.is_empty();
    let clusters = have.then(|| single_linkage_clusters(&zeros, cfg.linkage_radius));
    let (cond, action_flag) = match action {
        None => (None, Flag::NotChecked),
        Some((am, win)) => {
            let mut worst: f64 = 0.0;
            let mut sign = 0.0;
            let mut consistent = true;
            for i in 0..win.num_cells() {
                let a = am.eval(win.cell_center(i))?;
                if !a.in_domain {
                    continue;
                }
                let j = a.jacobian;
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if sign == 0.0 {
                    sign = det.signum();
                } else if det.signum() != sign {
                    consistent = false;
                }
                worst = worst.max(cond2(j));
            }
            (Some(worst), Flag::from_bool(consistent && worst.is_finite()))
        }
    };
    Ok(AuditReport {
        ellipticity_min_abs: min_abs,
        ellipticity: Flag::from_bool(min_abs >= 1.0 / cfg.ball_radius),
        zero_points: zeros.len(),
        independence_min: have.then_some(indep),
        independence: if have { Flag::from_bool(indep > 0.0) } else { Flag::NotChecked },
        bracket_max: have.then_some(bracket),
        bracket_small: if have { Flag::from_bool(bracket <= cfg.bracket_threshold) } else { Flag::NotChecked },
        clusters,
        connected: match clusters {
            None => Flag::NotChecked,
            Some(c) => Flag::from_bool(c == 1),
        },
        action_jacobian_condition: cond,
        action_map: action_flag,
    })
}

/// Spectral condition number of a real 2x2 matrix.
fn cond2(j: [[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (j[0][0], j[0][1], j[1][0], j[1][1]);
    let fro2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // s1^2 + s2^2 = fro2, s1 s2 = det
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::density::action_map_integrable;

    #[test]
    fn shifted_oscillator_audit() {
        let p = catalog::cho(1.0, C64::new(0.5, 0.5));
        let cfg = AuditConfig { sample_budget: 6000, ..AuditConfig::default() };
        let r = audit(&p, &cfg, None).unwrap();
        assert_eq!(r.ellipticity, Flag::Pass);
        assert!(r.zero_points > 1000);
        assert!(r.independence_min.unwrap() > 0.0);
        assert!(r.bracket_max.unwrap() < 1e-9);
        assert_eq!(r.bracket_small, Flag::Pass);
        assert_eq!(r.connected, Flag::Pass);
        assert_eq!(r.action_map, Flag::NotChecked);
    }

    #[test]
    fn one_dimensional_model_bracket_is_one() {
        let p = catalog::xi_plus_ix();
        let r = audit(&p, &AuditConfig { sample_budget: 50, ..AuditConfig::default() }, None).unwrap();
        assert!(r.zero_points > 0);
        assert!((r.bracket_max.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.bracket_small, Flag::Fail);
        assert_eq!(r.clusters, Some(1));
    }

    #[test]
    fn no_zeros_means_not_checked() {
        let p = crate::symbol::SymbolExpr::constant(2, C64::new(1.0, 0.0));
        let r = audit(&p, &AuditConfig { sample_budget: 20, ..AuditConfig::default() }, None).unwrap();
        assert_eq!(r.zero_points, 0);
        assert_eq!(r.connected, Flag::NotChecked);
        assert_eq!(r.independence, Flag::NotChecked);
    }

    #[test]
    fn action_map_condition() {
        let am = action_map_integrable(&catalog::torus_coupled(0.3), [0.0, 0.0]).unwrap();
        let win = ComplexWindow::from_bounds((-0.4, 0.4), (-0.4, 0.4), (8, 8)).unwrap();
        let p = catalog::cho(1.0, C64::new(0.5, 0.5));
        let r = audit(&p, &AuditConfig { sample_budget: 10, ..AuditConfig::default() }, Some((&am, &win))).unwrap();
        assert_eq!(r.action_map, Flag::Pass);
        let c = r.action_jacobian_condition.unwrap();
        assert!(c >= 1.0 && c < 2.0);
    }

    #[test]
    fn cond_of_rotation_is_one() {
        assert!((cond2([[0.0, -1.0], [1.0, 0.0]]) - 1.0).abs() < 1e-14);
        assert!((cond2([[2.0, 0.0], [0.0, 0.5]]) - 4.0).abs() < 1e-12);
    }
}
