//! Projection onto {g >= 0 : G(g) <= level} by bisection on the Lagrange
//! multiplier of the level constraint.

use crate::error::{Error, Result};
use crate::functional::{FunctionalKind, FunctionalSpec};

const MU_MAX: f64 = 1e12;
const OUTER_STEPS: usize = 200;

pub(crate) fn project(g: &FunctionalSpec, level: f64, f: &[f64], tol: f64) -> Result<Vec<f64>> {
    let clipped: Vec<f64> = f.iter().map(|v| v.max(0.0)).collect();
    if f.iter().all(|v| *v >= 0.0) {
        if let Ok(v) = g.eval_slice(f) {
            if v <= level {
                return Ok(f.to_vec());
            }
        }
    }
    let value = |x: &[f64]| g.eval_slice(x).unwrap_or(f64::INFINITY);
    let prox = |mu: f64| -> Result<Vec<f64>> {
        match &g.kind {
            FunctionalKind::Quadratic { a, b } => Ok(prox_quadratic(a, b.values(), g.space.probs(), f, mu)),
            _ => (0..f.len()).map(|i| prox_atom(g, i, f[i], mu)).collect(),
        }
    };
    if value(&clipped) <= level {
        return Ok(clipped);
    }
    let mut hi = 1.0;
    let mut x_hi = prox(hi)?;
    while value(&x_hi) > level {
        hi *= 2.0;
        if hi > MU_MAX {
            return Err(Error::EmptySet(format!(
                "no nonnegative point reaches level {level}; smallest value found {}",
                value(&x_hi)
            )));
        }
        x_hi = prox(hi)?;
    }
    let mut lo = 0.0;
    let mut x_lo = clipped;
    for _ in 0..OUTER_STEPS {
        let gap = x_lo.iter().zip(&x_hi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mid = 0.5 * (lo + hi);
        if gap <= 1e-3 * tol || mid <= lo || mid >= hi {
            break;
        }
        let x = prox(mid)?;
        if value(&x) <= level {
            hi = mid;
            x_hi = x;
        } else {
            lo = mid;
            x_lo = x;
        }
    }
    Ok(x_hi)
}

/// argmin_{x >= 0} 1/2 (x - y)^2 + mu g_i(x); the atom weight cancels.
fn prox_atom(g: &FunctionalSpec, i: usize, y: f64, mu: f64) -> Result<f64> {
    if let Some(c) = g.atom_is_linear(i) {
        return Ok((y - mu * c).max(0.0));
    }
    // h is nondecreasing; points outside the domain count as too small
    let h = |x: f64| match g.atom_dual(i, x) {
        Ok((_, d)) if d.is_finite() => x - y + mu * d,
        Ok((_, d)) if d > 0.0 => f64::INFINITY,
        _ => f64::NEG_INFINITY,
    };
    if h(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let mut hi = y.max(0.0) + 1.0;
    let mut guard = 0;
    while h(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NonConvergent(format!("proximal step diverged at atom {i}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Coordinate descent for argmin_{x >= 0} 1/2 ||x - y||_p^2 + mu G(x) with
/// G(x) = 1/2 x^T A x + sum p_i b_i x_i.
fn prox_quadratic(a: &[Vec<f64>], b: &[f64], p: &[f64], y: &[f64], mu: f64) -> Vec<f64> {
    let n = y.len();
    let mut x: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let off: f64 = (0..n).filter(|j| *j != i).map(|j| a[i][j] * x[j]).sum();
            let next = ((p[i] * y[i] - mu * (off + p[i] * b[i])) / (p[i] + mu * a[i][i])).max(0.0);
            change = change.max((next - x[i]).abs());
            x[i] = next;
        }
        if change <= 1e-15 * scale {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_functional;
    use crate::measure::{ProbSpace, RandVar};

    #[test]
    fn linear_budget_projection() {
        // {x >= 0 : E[x] <= 1} on uniform 2-atom; project (3, 1) -> (2, 0)
        let s = ProbSpace::uniform(2);
        let g = FunctionalSpec::linear(RandVar::constant(&s, 1.0));
        let x = project(&g, 1.0, &[3.0, 1.0], 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && x[1].abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn ball_projection_scales_radially() {
        let s = ProbSpace::uniform(2);
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let x = project(&g, 1.0, &[3.0, 4.0], 1e-12).unwrap();
        // E[x^2] = 12.5 -> shrink by sqrt(12.5)
        let r = 12.5f64.sqrt();
        assert!((x[0] - 3.0 / r).abs() < 1e-9 && (x[1] - 4.0 / r).abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn quadratic_matches_pointwise_square() {
        let s = ProbSpace::uniform(2);
        let q = FunctionalSpec::quadratic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], RandVar::zeros(&s)).unwrap();
        // G(x) = 1/2 |x|^2 = E[x^2]
        let x = project(&q, 1.0, &[3.0, 4.0], 1e-12).unwrap();
        let r = 12.5f64.sqrt();
        assert!((x[0] - 3.0 / r).abs() < 1e-8 && (x[1] - 4.0 / r).abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn unreachable_level_is_empty() {
        let s = ProbSpace::uniform(1);
        let g = FunctionalSpec::pointwise(&s, parse_functional("x + 1").unwrap());
        assert!(matches!(project(&g, 0.5, &[2.0], 1e-9), Err(Error::EmptySet(_))));
    }
}
