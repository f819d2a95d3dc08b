//! Convexly coercive functionals: growth diagnostics, lower-contour sets and
//! attainment of the infimum over bounded convex sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::functional::FunctionalSpec;
use crate::geom::ConvexSetRep;
use crate::measure::{weighted_dist, RandVar};

/// Exponents of the probe grid x = 2^k used by the growth surrogate.
pub const PROBE_EXPONENTS: std::ops::RangeInclusive<i32> = 4..=24;
pub const GROWTH_FLOOR: f64 = 1e-9;
const DECAY_SLACK: f64 = 1e-3;
pub const MAX_ITER: usize = 100_000;
const NET_SEED: u64 = 0xc0e7_c1e5;
const NET_MIXES: usize = 64;

/// Finite-probe surrogate of liminf phi(x)/x > 0: the ratio stays above
/// the floor on the grid and is not still decaying geometrically at its top.
pub fn check_growth(phi: &Expr) -> Result<bool> {
    grows(|x| phi.eval(x))
}

fn grows(f: impl Fn(f64) -> Result<f64>) -> Result<bool> {
    let ratios = probe_ratios(f)?;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = ratios.len();
    Ok(lo > GROWTH_FLOOR && ratios[n - 1] >= (1.0 - DECAY_SLACK) * ratios[n - 2])
}

fn probe_ratios(f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    PROBE_EXPONENTS
        .map(|k| {
            let x = 2f64.powi(k);
            Ok(f(x)? / x)
        })
        .collect()
}

/// The lower-contour set L_G(lambda) = {f >= 0 : G(f) <= lambda}.
#[derive(Debug, Clone)]
pub struct ContourSet {
    pub base: ConvexSetRep,
    pub lambda: f64,
}

impl ContourSet {
    pub fn new(g: &FunctionalSpec, lambda: f64) -> Result<Self> {
        Ok(ContourSet { base: ConvexSetRep::sublevel(g.clone(), lambda)?, lambda })
    }

    pub fn contains(&self, f: &RandVar, tol: f64) -> Result<bool> {
        self.base.contains(f, tol)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub lambda0: f64,
    /// Growth verdict on the probe grid.
    pub weak_coercivity: bool,
    /// Slope delta and intercept D with phi(x) >= D + delta x for all x >= 0.
    pub delta: Option<f64>,
    pub intercept: Option<f64>,
    /// E[f] <= (lambda0 - D) / delta on the contour set at lambda0.
    pub mean_bound: Option<f64>,
    pub convexity_sampled: bool,
    pub continuity_sampled: bool,
    pub evidence: &'static str,
}

pub fn coercivity_report(g: &FunctionalSpec, probe: &RandVar) -> Result<CoercivityReport> {
    let lambda0 = g.eval(probe)?;
    let convexity_sampled = g.spot_check_convexity().is_ok();
    let continuity_sampled = sampled_continuity(g);
    let (delta, intercept) = match affine_minorant(g) {
        Some((d, c)) if d > GROWTH_FLOOR => (Some(d), Some(c)),
        _ => (None, None),
    };
    let mean_bound = match (delta, intercept) {
        (Some(d), Some(c)) => Some((lambda0 - c) / d),
        _ => None,
    };
    Ok(CoercivityReport {
        lambda0,
        weak_coercivity: delta.is_some(),
        delta,
        intercept,
        mean_bound,
        convexity_sampled,
        continuity_sampled,
        evidence: "probe-grid evidence",
    })
}

/// delta = min(1, probe slope) and D = inf_{x >= 0} sum_i p_i (g_i(x) - delta x),
/// so that G(f) >= D + delta E[f] for every f >= 0. Only separable kinds.
fn affine_minorant(g: &FunctionalSpec) -> Option<(f64, f64)> {
    if !g.is_separable() {
        return None;
    }
    let p = g.space.probs();
    let mut delta = 1.0f64;
    for i in 0..p.len() {
        let at = |x: f64| g.atom_dual(i, x).map(|(v, _)| v);
        if !grows(at).ok()? {
            return None;
        }
        // secant slopes from 0 underestimate the asymptotic slope of a convex g_i
        let base = at(0.0).ok();
        let slope = probe_ratios(|x| Ok(at(x)? - base.unwrap_or(0.0))).ok()?;
        delta = slope.into_iter().fold(delta, f64::min);
    }
    if !(delta > GROWTH_FLOOR) {
        return None;
    }
    let mut total = g.constant();
    for (i, pi) in p.iter().enumerate() {
        let h = |x: f64| g.atom_dual(i, x).map(|(v, _)| v - delta * x).unwrap_or(f64::INFINITY);
        let top = 2f64.powi(*PROBE_EXPONENTS.end());
        let x = golden_min(&h, 0.0, top);
        let m = h(x).min(h(0.0)).min(h(top));
        if !m.is_finite() {
            return None;
        }
        total += pi * m;
    }
    Some((delta, total - 1e-9 * (1.0 + total.abs())))
}

fn sampled_continuity(g: &FunctionalSpec) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(NET_SEED);
    let n = g.space.len();
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0 + 1e-3).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 1e-9).collect();
        match (g.eval_slice(&x), g.eval_slice(&y)) {
            (Ok(a), Ok(b)) if (a - b).abs() <= 1e-5 * (1.0 + a.abs()) => {}
            (Err(_), _) | (_, Err(_)) => {}
            _ => return false,
        }
    }
    true
}

/// Minimizer of a convex function on [a, b] by golden-section search.
fn golden_min(h: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..300 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - r * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + r * (b - a);
            hd = h(d);
        }
    }
    let mid = 0.5 * (a + b);
    [a, b, mid].into_iter().fold(mid, |best, x| if h(x) < h(best) { x } else { best })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeCertificate {
    /// Frank-Wolfe gap at f_star when a linear oracle over C exists.
    pub fw_gap: Option<f64>,
    /// Smallest value of G over the certificate net.
    pub net_min: f64,
    pub net_size: usize,
    /// Decreasing objective values along the run: nested contour levels.
    pub levels: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub f_star: RandVar,
    pub value: f64,
    pub certificate: MinimizeCertificate,
}

fn value_or_inf(g: &FunctionalSpec, x: &[f64]) -> f64 {
    g.eval_slice(x).unwrap_or(f64::INFINITY)
}

/// Minimum of G over a bounded convex set.
pub fn minimize(g: &FunctionalSpec, c: &ConvexSetRep, tol: f64) -> Result<Minimum> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    if !crate::measure::same_space(&g.space, c.space()) {
        return Err(Error::SpaceMismatch);
    }
    g.spot_check_convexity()?;
    if !c.is_bounded() {
        return Err(Error::InvalidInput("minimize needs a bounded set".into()));
    }
    let (x, levels, iterations) = match c {
        ConvexSetRep::Box { lower, upper } if g.is_separable() => {
            let x = separable_box(g, lower.values(), upper.values());
            let v = value_or_inf(g, &x);
            (x, vec![v], 0)
        }
        _ => fista(g, c, tol)?,
    };
    let value = g.eval_slice(&x)?;
    let fw_gap = frank_wolfe_gap(g, c, &x)?;
    let net = certificate_net(c);
    let net_min = net.iter().map(|v| value_or_inf(g, v)).fold(f64::INFINITY, f64::min);
    if value > net_min + tol {
        return Err(Error::NonConvergent(format!(
            "solver value {value} exceeds certificate net value {net_min} by more than {tol}"
        )));
    }
    let f_star = RandVar::new(g.space.clone(), x)?;
    Ok(Minimum {
        f_star,
        value,
        certificate: MinimizeCertificate { fw_gap, net_min, net_size: net.len(), levels, iterations },
    })
}

fn separable_box(g: &FunctionalSpec, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..lo.len())
        .map(|i| {
            if lo[i] == hi[i] {
                return lo[i];
            }
            let h = |x: f64| g.atom_dual(i, x).map(|(v, _)| v).unwrap_or(f64::INFINITY);
            golden_min(&h, lo[i], hi[i])
        })
        .collect()
}

/// Linear-oracle duality gap max_{v in C} <grad G(x), x - v> for polytopes
/// and boxes.
fn frank_wolfe_gap(g: &FunctionalSpec, c: &ConvexSetRep, x: &[f64]) -> Result<Option<f64>> {
    let p = g.space.probs();
    let Ok((_, grad)) = g.value_grad(x) else { return Ok(None) };
    let lin = |v: &[f64]| -> f64 { (0..x.len()).map(|i| p[i] * grad[i] * (x[i] - v[i])).sum() };
    Ok(match c {
        ConvexSetRep::Polytope { generators } => {
            Some(generators.iter().map(|v| lin(v.values())).fold(f64::NEG_INFINITY, f64::max).max(0.0))
        }
        ConvexSetRep::Box { lower, upper } => {
            let v: Vec<f64> = (0..x.len())
                .map(|i| if grad[i] > 0.0 { lower.values()[i] } else { upper.values()[i] })
                .collect();
            Some(lin(&v).max(0.0))
        }
        _ => None,
    })
}

/// Vertices of C when known, their pairwise midpoints and seeded random
/// mixtures; otherwise projections of seeded random points.
fn certificate_net(c: &ConvexSetRep) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(NET_SEED);
    if let Some(verts) = c.vertex_net() {
        let vs: Vec<&[f64]> = verts.iter().map(|v| v.values()).collect();
        let mut out: Vec<Vec<f64>> = vs.iter().map(|v| v.to_vec()).collect();
        if vs.len() <= 64 {
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    out.push(vs[a].iter().zip(vs[b]).map(|(x, y)| 0.5 * (x + y)).collect());
                }
            }
        }
        for _ in 0..NET_MIXES {
            let w: Vec<f64> = (0..vs.len()).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            let total: f64 = w.iter().sum();
            let mut x = vec![0.0; vs[0].len()];
            for (wk, v) in w.iter().zip(&vs) {
                for (xi, vi) in x.iter_mut().zip(v.iter()) {
                    *xi += wk / total * vi;
                }
            }
            out.push(x);
        }
        return out;
    }
    let Some((lo, hi)) = c.bounding_box() else { return vec![] };
    let mut out = Vec::new();
    for _ in 0..NET_MIXES {
        let y: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + rng.gen::<f64>() * (h - l)).collect();
        if let Ok(x) = c.project_slice(&y, 1e-10) {
            if c.contains_slice(&x, 1e-8).unwrap_or(false) {
                out.push(x);
            }
        }
    }
    out
}

/// Accelerated projected gradient with backtracking and adaptive restart,
/// in the E[uv] geometry.
fn fista(g: &FunctionalSpec, c: &ConvexSetRep, tol: f64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let p = g.space.probs().to_vec();
    let inner = 1e-3 * tol;
    let mut x = c.any_point(inner)?.values().to_vec();
    let mut fx = value_or_inf(g, &x);
    if !fx.is_finite() {
        // move into the domain of G along the set
        let net = certificate_net(c);
        if let Some(best) = net.into_iter().min_by(|a, b| value_or_inf(g, a).total_cmp(&value_or_inf(g, b))) {
            fx = value_or_inf(g, &best);
            x = best;
        }
        if !fx.is_finite() {
            return Err(Error::Domain("objective is undefined on every probed point of the set".into()));
        }
    }
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut levels = vec![fx];
    let mut best_gap = f64::INFINITY;
    let mut next_record = 1;
    for k in 1..=MAX_ITER {
        let (fy, grad) = match g.value_grad(&y) {
            Ok(v) => v,
            Err(_) => {
                y = x.clone();
                t = 1.0;
                g.value_grad(&y)?
            }
        };
        let mut x_new;
        let mut f_new;
        loop {
            let z: Vec<f64> = y.iter().zip(&grad).map(|(a, b)| a - b / lip).collect();
            x_new = c.project_slice(&z, inner)?;
            f_new = value_or_inf(g, &x_new);
            let d: Vec<f64> = x_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let lin: f64 = (0..d.len()).map(|i| p[i] * grad[i] * d[i]).sum();
            let quad: f64 = (0..d.len()).map(|i| p[i] * d[i] * d[i]).sum();
            if f_new <= fy + lin + 0.5 * lip * quad + 1e-15 * fy.abs() || lip >= 1e12 {
                break;
            }
            lip *= 2.0;
        }
        let mapping = lip * weighted_dist(&p, &x_new, &y);
        if f_new > fx {
            // adaptive restart
            let at_x = y == x;
            t = 1.0;
            y = x.clone();
            if !at_x {
                lip = (lip / 1.5).max(1e-8);
                continue;
            }
            // no descent from x itself: stationary up to projection error
            let gap = frank_wolfe_gap(g, c, &x)?;
            if let Some(gp) = gap {
                best_gap = best_gap.min(gp);
            }
            if gap.is_none_or(|gp| gp <= 0.5 * tol) {
                return Ok((x, levels, k));
            }
            lip *= 2.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;
        lip = (lip / 1.2).max(1e-8);
        if fx < *levels.last().expect("nonempty") && k >= next_record {
            levels.push(fx);
            next_record *= 2;
        }
        if k % 25 == 0 || mapping <= inner {
            let gap = frank_wolfe_gap(g, c, &x)?;
            if let Some(gp) = gap {
                best_gap = best_gap.min(gp);
            }
            let done = match gap {
                Some(gp) => gp <= 0.5 * tol,
                None => mapping <= inner,
            };
            if done {
                if fx < *levels.last().expect("nonempty") {
                    levels.push(fx);
                }
                return Ok((x, levels, k));
            }
        }
    }
    Err(Error::BudgetExhausted { best_gap })
}

/// Decreasing levels a_k; every contour set L_G(a_k) meets C, so the nested
/// family has the finite intersection property.
pub fn contour_levels_nested(levels: &[f64]) -> bool {
    levels.windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_functional;
    use crate::measure::ProbSpace;
    use std::sync::Arc;

    fn rv(s: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(s.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn growth_examples() {
        assert!(check_growth(&parse_functional("x^2").unwrap()).unwrap());
        assert!(!check_growth(&parse_functional("sqrt(x)").unwrap()).unwrap());
        assert!(check_growth(&parse_functional("max(0, x - 1)").unwrap()).unwrap());
        assert!(!check_growth(&parse_functional("1 - exp(-x)").unwrap()).unwrap());
        assert!(check_growth(&parse_functional("log(x - 100)").unwrap()).is_err());
    }

    #[test]
    fn jensen_equality_case() {
        // {0 <= f <= 2, E[f] = 1} on 4 atoms as the hull of its vertices
        let s = ProbSpace::uniform(4);
        let mut verts = vec![];
        for a in 0..4 {
            for b in a + 1..4 {
                let mut v = [0.0; 4];
                v[a] = 2.0;
                v[b] = 2.0;
                verts.push(rv(&s, &v));
            }
        }
        let c = ConvexSetRep::polytope(verts).unwrap();
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let m = minimize(&g, &c, 1e-8).unwrap();
        assert!((m.value - 1.0).abs() < 1e-7, "{}", m.value);
        assert!(m.f_star.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
        assert!(contour_levels_nested(&m.certificate.levels));
    }

    #[test]
    fn linear_over_segment_picks_vertex() {
        let s = ProbSpace::uniform(2);
        let c = ConvexSetRep::polytope(vec![rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])]).unwrap();
        let g = FunctionalSpec::linear(rv(&s, &[1.0, 2.0]));
        let m = minimize(&g, &c, 1e-9).unwrap();
        assert!((m.value - 0.5).abs() < 1e-9);
        assert!((m.f_star.values()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_objective_on_box() {
        let s = ProbSpace::uniform(3);
        let c = ConvexSetRep::boxed(RandVar::zeros(&s), RandVar::constant(&s, 1.0)).unwrap();
        let g = FunctionalSpec::pointwise(&s, parse_functional("x").unwrap());
        let m = minimize(&g, &c, 1e-9).unwrap();
        assert_eq!(m.value, 0.0);
        assert!(m.f_star.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn intersection_set_is_supported() {
        let s = ProbSpace::uniform(2);
        let bx = ConvexSetRep::boxed(RandVar::zeros(&s), RandVar::constant(&s, 2.0)).unwrap();
        let floor = ConvexSetRep::sublevel(FunctionalSpec::linear(RandVar::constant(&s, -1.0)), -1.0).unwrap();
        let c = ConvexSetRep::intersection(vec![bx, floor]).unwrap();
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let m = minimize(&g, &c, 1e-6).unwrap();
        assert!((m.value - 1.0).abs() < 1e-5, "{}", m.value);
    }

    #[test]
    fn report_examples() {
        let s = ProbSpace::uniform(2);
        let one = RandVar::constant(&s, 1.0);
        let lin = FunctionalSpec::pointwise(&s, parse_functional("x").unwrap());
        let r = coercivity_report(&lin, &one).unwrap();
        assert_eq!(r.lambda0, 1.0);
        assert!((r.mean_bound.unwrap() - 1.0).abs() < 1e-8);
        let sq = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let r = coercivity_report(&sq, &one).unwrap();
        assert!((r.intercept.unwrap() + 0.25).abs() < 1e-8);
        assert!((r.mean_bound.unwrap() - 1.25).abs() < 1e-8);
        let bounded = FunctionalSpec::pointwise(&s, parse_functional("1 - exp(-x)").unwrap());
        let r = coercivity_report(&bounded, &one).unwrap();
        assert!(!r.weak_coercivity && r.mean_bound.is_none());
        assert_eq!(r.evidence, "probe-grid evidence");
    }

    #[test]
    fn contour_sets_nest() {
        let s = ProbSpace::uniform(2);
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let small = ContourSet::new(&g, 1.0).unwrap();
        let big = ContourSet::new(&g, 2.0).unwrap();
        let f = rv(&s, &[1.0, 0.5]);
        assert!(small.contains(&f, 0.0).unwrap() && big.contains(&f, 0.0).unwrap());
    }
}
