//! Convex functionals G: L0+ -> R over a finite space.
//!
//! All kinds except `Quadratic` are separable: G(f) = sum_i p_i g_i(f_i)
//! for per-atom scalar functions g_i. Gradients are taken with respect to
//! the probability-weighted inner product E[uv], so for separable kinds the
//! gradient at atom i is simply g_i'(f_i).

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measure::{ProbSpace, RandVar};

/// Seed for the sampled midpoint-convexity checks.
pub const CONVEXITY_SEED: u64 = 0x5eed_c0de;
pub const CONVEXITY_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// G(f) = E[phi(f)].
    Pointwise { expr: Expr },
    /// G(f) = E[c f].
    Linear { c: RandVar },
    /// G(f) = 1/2 f^T A f + E[b f] with A symmetric, indexed by atoms.
    Quadratic { a: Vec<Vec<f64>>, b: RandVar },
    /// G(f) = sum_i p_i (phi_i(f_i) + c_i f_i) + constant, with an optional
    /// expression per atom.
    Separable { terms: Vec<Option<Expr>>, c: Vec<f64>, constant: f64 },
}

#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub space: Arc<ProbSpace>,
    pub kind: FunctionalKind,
    pub declared_convex: bool,
}

impl FunctionalSpec {
    pub fn pointwise(space: &Arc<ProbSpace>, expr: Expr) -> Self {
        FunctionalSpec { space: space.clone(), kind: FunctionalKind::Pointwise { expr }, declared_convex: true }
    }

    pub fn linear(c: RandVar) -> Self {
        FunctionalSpec { space: c.space().clone(), kind: FunctionalKind::Linear { c }, declared_convex: true }
    }

    pub fn quadratic(a: Vec<Vec<f64>>, b: RandVar) -> Result<Self> {
        let n = b.len();
        if a.len() != n || a.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!("quadratic matrix must be {n}x{n}")));
        }
        for i in 0..n {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                    return Err(Error::InvalidInput("quadratic matrix must be symmetric".into()));
                }
            }
        }
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("quadratic matrix entries must be finite".into()));
        }
        Ok(FunctionalSpec { space: b.space().clone(), kind: FunctionalKind::Quadratic { a, b }, declared_convex: true })
    }

    pub fn separable(space: &Arc<ProbSpace>, terms: Vec<Option<Expr>>, c: Vec<f64>, constant: f64) -> Result<Self> {
        let n = space.len();
        if terms.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: terms.len() });
        }
        if c.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: c.len() });
        }
        Ok(FunctionalSpec {
            space: space.clone(),
            kind: FunctionalKind::Separable { terms, c, constant },
            declared_convex: true,
        })
    }

    pub fn with_declared_convex(mut self, convex: bool) -> Self {
        self.declared_convex = convex;
        self
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self.kind, FunctionalKind::Quadratic { .. })
    }

    /// Per-atom scalar value and derivative for separable kinds.
    pub(crate) fn atom_dual(&self, i: usize, x: f64) -> Result<(f64, f64)> {
        match &self.kind {
            FunctionalKind::Pointwise { expr } => {
                let d = expr.eval_dual(x)?;
                Ok((d.v, d.d))
            }
            FunctionalKind::Linear { c } => Ok((c.values()[i] * x, c.values()[i])),
            FunctionalKind::Separable { terms, c, .. } => {
                let (v, d) = match &terms[i] {
                    Some(e) => {
                        let d = e.eval_dual(x)?;
                        (d.v, d.d)
                    }
                    None => (0.0, 0.0),
                };
                Ok((v + c[i] * x, d + c[i]))
            }
            FunctionalKind::Quadratic { .. } => unreachable!("quadratic functional is not separable"),
        }
    }

    /// True when atom `i` carries only a linear term.
    pub(crate) fn atom_is_linear(&self, i: usize) -> Option<f64> {
        match &self.kind {
            FunctionalKind::Linear { c } => Some(c.values()[i]),
            FunctionalKind::Separable { terms, c, .. } if terms[i].is_none() => Some(c[i]),
            _ => None,
        }
    }

    pub(crate) fn constant(&self) -> f64 {
        match &self.kind {
            FunctionalKind::Separable { constant, .. } => *constant,
            _ => 0.0,
        }
    }

    fn check_space(&self, f: &RandVar) -> Result<()> {
        if crate::measure::same_space(&self.space, f.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    pub fn eval(&self, f: &RandVar) -> Result<f64> {
        self.check_space(f)?;
        self.eval_slice(f.values())
    }

    pub(crate) fn eval_slice(&self, x: &[f64]) -> Result<f64> {
        let p = self.space.probs();
        match &self.kind {
            FunctionalKind::Quadratic { a, b } => {
                let mut v = 0.0;
                for i in 0..x.len() {
                    let ax: f64 = a[i].iter().zip(x).map(|(aij, xj)| aij * xj).sum();
                    v += 0.5 * x[i] * ax + p[i] * b.values()[i] * x[i];
                }
                Ok(v)
            }
            _ => {
                let mut v = self.constant();
                for (i, xi) in x.iter().enumerate() {
                    v += p[i] * self.atom_dual(i, *xi)?.0;
                }
                if !v.is_finite() {
                    return Err(Error::Domain("functional value is not finite".into()));
                }
                Ok(v)
            }
        }
    }

    /// Value and gradient in the E[uv] geometry.
    pub(crate) fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.space.probs();
        match &self.kind {
            FunctionalKind::Quadratic { a, b } => {
                let mut v = 0.0;
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len() {
                    let ax: f64 = a[i].iter().zip(x).map(|(aij, xj)| aij * xj).sum();
                    v += 0.5 * x[i] * ax + p[i] * b.values()[i] * x[i];
                    g[i] = ax / p[i] + b.values()[i];
                }
                Ok((v, g))
            }
            _ => {
                let mut v = self.constant();
                let mut g = Vec::with_capacity(x.len());
                for (i, xi) in x.iter().enumerate() {
                    let (vi, di) = self.atom_dual(i, *xi)?;
                    v += p[i] * vi;
                    g.push(if di.is_finite() { di } else { di.signum() * 1e12 });
                }
                Ok((v, g))
            }
        }
    }

    /// Sampled midpoint test G((f+g)/2) <= (G(f)+G(g))/2 on random
    /// nonnegative pairs at two scales. Pairs where G is undefined are
    /// skipped.
    pub fn spot_check_convexity(&self) -> Result<()> {
        if !self.declared_convex {
            return Err(Error::ConvexityViolation("functional is not declared convex".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(CONVEXITY_SEED);
        let n = self.space.len();
        for k in 0..CONVEXITY_SAMPLES {
            let scale = if k % 2 == 0 { 1.0 } else { 10.0 };
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * scale).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * scale).collect();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (Ok(ga), Ok(gb), Ok(gm)) = (self.eval_slice(&a), self.eval_slice(&b), self.eval_slice(&m)) else {
                continue;
            };
            let rhs = 0.5 * (ga + gb);
            if gm > rhs + 1e-9 * (1.0 + rhs.abs()) {
                return Err(Error::ConvexityViolation(format!(
                    "midpoint value {gm} exceeds chord value {rhs} between {a:?} and {b:?}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_functional;

    #[test]
    fn pointwise_value_and_gradient() {
        let s = ProbSpace::uniform(2);
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let f = RandVar::new(s.clone(), vec![1.0, 3.0]).unwrap();
        assert_eq!(g.eval(&f).unwrap(), 5.0);
        let (v, grad) = g.value_grad(f.values()).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(grad, vec![2.0, 6.0]);
    }

    #[test]
    fn quadratic_gradient_matches_differences() {
        let s = ProbSpace::from_masses(vec!["a".into(), "b".into()], &[1.0, 3.0]).unwrap();
        let b = RandVar::new(s.clone(), vec![0.5, -1.0]).unwrap();
        let q = FunctionalSpec::quadratic(vec![vec![2.0, 0.5], vec![0.5, 1.0]], b).unwrap();
        let x = [0.7, 1.3];
        let (_, g) = q.value_grad(&x).unwrap();
        // directional derivative along e_i equals p_i * g_i in the weighted geometry
        for i in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (q.eval_slice(&xp).unwrap() - q.eval_slice(&xm).unwrap()) / (2.0 * h);
            assert!((fd - s.probs()[i] * g[i]).abs() < 1e-8);
        }
        assert!(FunctionalSpec::quadratic(vec![vec![1.0, 2.0], vec![0.0, 1.0]], RandVar::zeros(&s)).is_err());
    }

    #[test]
    fn convexity_spot_check() {
        let s = ProbSpace::uniform(3);
        let ok = FunctionalSpec::pointwise(&s, parse_functional("exp(x) + max(0, x - 1)").unwrap());
        assert!(ok.spot_check_convexity().is_ok());
        let bad = FunctionalSpec::pointwise(&s, parse_functional("sqrt(x)").unwrap());
        assert!(matches!(bad.spot_check_convexity(), Err(Error::ConvexityViolation(_))));
        let undeclared = ok.clone().with_declared_convex(false);
        assert!(undeclared.spot_check_convexity().is_err());
    }
}
