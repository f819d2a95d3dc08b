//! Closed convex subsets of L0+ on a finite space: membership, projection
//! and convex combinations in the E[uv] geometry.

mod sublevel;
pub mod wolfe;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::FunctionalSpec;
use crate::measure::{weighted_dist, ProbSpace, RandVar, METRIC_TOL};

const DYKSTRA_MAX_CYCLES: usize = 10_000;
const BOX_CORNER_LIMIT: usize = 12;

#[derive(Debug, Clone)]
pub enum ConvexSetRep {
    Polytope { generators: Vec<RandVar> },
    Sublevel { functional: FunctionalSpec, level: f64 },
    Box { lower: RandVar, upper: RandVar },
    Intersection { parts: Vec<ConvexSetRep> },
}

/// Convex combination coefficients: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {w} is not a nonnegative real")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput("weights must be nonnegative with positive sum".into()));
        }
        Ok(WeightVector(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn unit(len: usize, index: usize) -> Self {
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        WeightVector(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn convex_combine(points: &[RandVar], w: &WeightVector) -> Result<RandVar> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidInput("no points to combine".into()));
    };
    if points.len() != w.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: w.len() });
    }
    let mut out = vec![0.0; first.len()];
    for (p, wk) in points.iter().zip(w.weights()) {
        first.check_same_space(p)?;
        if *wk != 0.0 {
            for (o, v) in out.iter_mut().zip(p.values()) {
                *o += wk * v;
            }
        }
    }
    Ok(first.with_values(out))
}

impl ConvexSetRep {
    pub fn polytope(generators: Vec<RandVar>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::InvalidInput("polytope needs at least one generator".into()));
        };
        for g in &generators {
            first.check_same_space(g)?;
            g.assert_nonneg()?;
        }
        Ok(ConvexSetRep::Polytope { generators })
    }

    pub fn boxed(lower: RandVar, upper: RandVar) -> Result<Self> {
        lower.check_same_space(&upper)?;
        lower.assert_nonneg()?;
        for (l, u) in lower.values().iter().zip(upper.values()) {
            if !(l <= u) || !u.is_finite() {
                return Err(Error::InvalidInput(format!("box bounds out of order: {l} > {u}")));
            }
        }
        Ok(ConvexSetRep::Box { lower, upper })
    }

    /// Sublevel set {f >= 0 : G(f) <= level}; rejects functionals that are
    /// not declared convex or fail the sampled midpoint test.
    pub fn sublevel(functional: FunctionalSpec, level: f64) -> Result<Self> {
        if !level.is_finite() {
            return Err(Error::InvalidInput("sublevel level must be finite".into()));
        }
        functional.spot_check_convexity()?;
        Ok(ConvexSetRep::Sublevel { functional, level })
    }

    pub fn intersection(parts: Vec<ConvexSetRep>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidInput("intersection needs at least one part".into()));
        };
        for p in &parts {
            if !crate::measure::same_space(first.space(), p.space()) {
                return Err(Error::SpaceMismatch);
            }
        }
        Ok(ConvexSetRep::Intersection { parts })
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        match self {
            ConvexSetRep::Polytope { generators } => generators[0].space(),
            ConvexSetRep::Sublevel { functional, .. } => &functional.space,
            ConvexSetRep::Box { lower, .. } => lower.space(),
            ConvexSetRep::Intersection { parts } => parts[0].space(),
        }
    }

    fn check_space(&self, f: &RandVar) -> Result<()> {
        if crate::measure::same_space(self.space(), f.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    pub fn contains(&self, f: &RandVar, tol: f64) -> Result<bool> {
        self.check_space(f)?;
        self.contains_slice(f.values(), tol)
    }

    pub(crate) fn contains_slice(&self, x: &[f64], tol: f64) -> Result<bool> {
        let p = self.space().probs();
        let slack = tol + METRIC_TOL;
        match self {
            ConvexSetRep::Polytope { generators } => {
                let r = nearest_in_polytope(generators, x, p, tol)?;
                Ok(r.dist2.sqrt() <= slack)
            }
            ConvexSetRep::Box { lower, upper } => {
                let clamped = clamp(x, lower.values(), upper.values());
                Ok(weighted_dist(p, x, &clamped) <= slack)
            }
            ConvexSetRep::Sublevel { functional, level } => {
                let mut neg = 0.0;
                for (pi, xi) in p.iter().zip(x) {
                    if *xi < 0.0 {
                        neg += pi * xi * xi;
                    }
                }
                if neg.sqrt() > slack {
                    return Ok(false);
                }
                let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                match functional.eval_slice(&clipped) {
                    Ok(v) if v <= level + tol + METRIC_TOL * (1.0 + level.abs()) => Ok(true),
                    Ok(_) | Err(Error::Domain(_)) => {
                        if tol == 0.0 {
                            return Ok(false);
                        }
                        let proj = sublevel::project(functional, *level, &clipped, tol)?;
                        Ok(weighted_dist(p, x, &proj) <= slack)
                    }
                    Err(e) => Err(e),
                }
            }
            ConvexSetRep::Intersection { parts } => {
                for part in parts {
                    if !part.contains_slice(x, tol)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Nearest point of the set to f in the E[uv] norm.
    pub fn project(&self, f: &RandVar, tol: f64) -> Result<RandVar> {
        self.check_space(f)?;
        Ok(f.with_values(self.project_slice(f.values(), tol)?))
    }

    pub(crate) fn project_slice(&self, x: &[f64], tol: f64) -> Result<Vec<f64>> {
        let p = self.space().probs();
        match self {
            ConvexSetRep::Polytope { generators } => Ok(nearest_in_polytope(generators, x, p, tol)?.point),
            ConvexSetRep::Box { lower, upper } => Ok(clamp(x, lower.values(), upper.values())),
            ConvexSetRep::Sublevel { functional, level } => sublevel::project(functional, *level, x, tol),
            ConvexSetRep::Intersection { parts } => {
                if parts.len() == 1 {
                    return parts[0].project_slice(x, tol);
                }
                dykstra(parts, x, p, tol)
            }
        }
    }

    pub fn distance(&self, f: &RandVar, tol: f64) -> Result<f64> {
        let g = self.project(f, tol)?;
        f.dist(&g)
    }

    /// Polytope projection together with the convex weights realizing it.
    pub fn project_with_weights(&self, f: &RandVar, tol: f64) -> Result<(RandVar, WeightVector)> {
        self.check_space(f)?;
        match self {
            ConvexSetRep::Polytope { generators } => {
                let r = nearest_in_polytope(generators, f.values(), self.space().probs(), tol)?;
                Ok((f.with_values(r.point), WeightVector::normalized(r.weights)?))
            }
            _ => Err(Error::InvalidInput("weights are only available for polytopes".into())),
        }
    }

    /// Finite point set whose hull is the set, when one is cheaply known.
    pub fn vertex_net(&self) -> Option<Vec<RandVar>> {
        match self {
            ConvexSetRep::Polytope { generators } => Some(generators.clone()),
            ConvexSetRep::Box { lower, upper } => {
                let n = lower.len();
                let free: Vec<usize> = (0..n).filter(|i| lower.values()[*i] < upper.values()[*i]).collect();
                if free.len() > BOX_CORNER_LIMIT {
                    return None;
                }
                let mut out = Vec::with_capacity(1 << free.len());
                for mask in 0..(1usize << free.len()) {
                    let mut v = lower.values().to_vec();
                    for (bit, i) in free.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            v[*i] = upper.values()[*i];
                        }
                    }
                    out.push(lower.with_values(v));
                }
                Some(out)
            }
            ConvexSetRep::Intersection { parts } if parts.len() == 1 => parts[0].vertex_net(),
            _ => None,
        }
    }

    /// Atomwise bounds [lo, hi] containing the set, when it is bounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            ConvexSetRep::Polytope { generators } => {
                let n = generators[0].len();
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                for g in generators {
                    for (i, v) in g.values().iter().enumerate() {
                        lo[i] = lo[i].min(*v);
                        hi[i] = hi[i].max(*v);
                    }
                }
                Some((lo, hi))
            }
            ConvexSetRep::Box { lower, upper } => Some((lower.values().to_vec(), upper.values().to_vec())),
            ConvexSetRep::Sublevel { .. } => None,
            ConvexSetRep::Intersection { parts } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for (lo, hi) in parts.iter().filter_map(|p| p.bounding_box()) {
                    acc = Some(match acc {
                        None => (lo, hi),
                        Some((a, b)) => (
                            a.iter().zip(&lo).map(|(x, y)| x.max(*y)).collect(),
                            b.iter().zip(&hi).map(|(x, y)| x.min(*y)).collect(),
                        ),
                    });
                }
                acc
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bounding_box().is_some()
    }

    /// Some point of the set.
    pub fn any_point(&self, tol: f64) -> Result<RandVar> {
        let origin = RandVar::zeros(self.space());
        match self {
            ConvexSetRep::Polytope { generators } => Ok(generators[0].clone()),
            ConvexSetRep::Box { lower, .. } => Ok(lower.clone()),
            _ => self.project(&origin, tol),
        }
    }
}

fn clamp(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter().zip(lo).zip(hi).map(|((v, l), h)| v.max(*l).min(*h)).collect()
}

fn nearest_in_polytope(generators: &[RandVar], x: &[f64], p: &[f64], tol: f64) -> Result<wolfe::NearestPoint> {
    let refs: Vec<&[f64]> = generators.iter().map(|g| g.values()).collect();
    let eps = (1e-3 * tol).powi(2);
    wolfe::nearest_point(&refs, x, p, eps)
}

/// Dykstra's alternating projections onto the parts of an intersection.
fn dykstra(parts: &[ConvexSetRep], x0: &[f64], p: &[f64], tol: f64) -> Result<Vec<f64>> {
    let inner = 1e-3 * tol;
    let mut x = x0.to_vec();
    let mut incr = vec![vec![0.0; x0.len()]; parts.len()];
    for cycle in 0..DYKSTRA_MAX_CYCLES {
        let start = x.clone();
        for (k, part) in parts.iter().enumerate() {
            let z: Vec<f64> = x.iter().zip(&incr[k]).map(|(a, b)| a + b).collect();
            let next = part.project_slice(&z, inner)?;
            incr[k] = z.iter().zip(&next).map(|(a, b)| a - b).collect();
            x = next;
        }
        let moved = weighted_dist(p, &start, &x);
        if moved <= inner || (cycle % 16 == 15 && moved <= tol) {
            let mut ok = true;
            for part in parts {
                if !part.contains_slice(&x, tol)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(x);
            }
        }
    }
    Err(Error::NonConvergent(format!(
        "alternating projections did not settle within {DYKSTRA_MAX_CYCLES} cycles; the intersection may be empty"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_functional;

    fn rv(s: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(s.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn polytope_membership() {
        let s = ProbSpace::uniform(2);
        let set = ConvexSetRep::polytope(vec![rv(&s, &[0.0, 0.0]), rv(&s, &[1.0, 1.0])]).unwrap();
        assert!(set.contains(&rv(&s, &[0.5, 0.5]), 0.0).unwrap());
        assert!(!set.contains(&rv(&s, &[1.0, 0.0]), 0.0).unwrap());
        assert!(!set.contains(&rv(&s, &[1.0, 0.0]), 0.1).unwrap());
    }

    #[test]
    fn box_boundary_is_included() {
        let s = ProbSpace::uniform(2);
        let set = ConvexSetRep::boxed(rv(&s, &[0.0, 0.0]), rv(&s, &[2.0, 2.0])).unwrap();
        assert!(set.contains(&rv(&s, &[2.0, 2.0]), 0.0).unwrap());
        assert!(!set.contains(&rv(&s, &[2.1, 2.0]), 0.0).unwrap());
    }

    #[test]
    fn combine_examples() {
        let s = ProbSpace::uniform(2);
        let a = rv(&s, &[1.0, 0.0]);
        let one = convex_combine(std::slice::from_ref(&a), &WeightVector::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(one.values(), a.values());
        let mid = convex_combine(&[a, rv(&s, &[0.0, 1.0])], &WeightVector::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(mid.values(), &[0.5, 0.5]);
        let pts = [rv(&s, &[2.0, 0.0]), rv(&s, &[0.0, 2.0]), rv(&s, &[1.0, 1.0])];
        let c = convex_combine(&pts, &WeightVector::new(vec![0.25, 0.25, 0.5]).unwrap()).unwrap();
        assert_eq!(c.values(), &[1.0, 1.0]);
        assert!(matches!(
            convex_combine(&pts, &WeightVector::new(vec![0.5, 0.5]).unwrap()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn projection_examples() {
        let s = ProbSpace::uniform(2);
        let bx = ConvexSetRep::boxed(rv(&s, &[0.0, 0.0]), rv(&s, &[1.0, 1.0])).unwrap();
        assert_eq!(bx.project(&rv(&s, &[2.0, -1.0]), 1e-9).unwrap().values(), &[1.0, 0.0]);
        let inside = rv(&s, &[0.3, 0.4]);
        assert_eq!(bx.project(&inside, 1e-9).unwrap().values(), inside.values());
        let seg = ConvexSetRep::polytope(vec![rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])]).unwrap();
        let pr = seg.project(&rv(&s, &[1.0, 1.0]), 1e-12).unwrap();
        assert!((pr.values()[0] - 0.5).abs() < 1e-12 && (pr.values()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_sets_are_rejected() {
        let s = ProbSpace::uniform(2);
        assert!(ConvexSetRep::polytope(vec![]).is_err());
        assert!(ConvexSetRep::polytope(vec![rv(&s, &[-1.0, 0.0])]).is_err());
        assert!(ConvexSetRep::boxed(rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])).is_err());
        let concave = FunctionalSpec::pointwise(&s, parse_functional("sqrt(x)").unwrap());
        assert!(matches!(ConvexSetRep::sublevel(concave, 1.0), Err(Error::ConvexityViolation(_))));
        let other = ProbSpace::uniform(3);
        let a = ConvexSetRep::polytope(vec![rv(&s, &[1.0, 0.0])]).unwrap();
        let b = ConvexSetRep::polytope(vec![rv(&other, &[1.0, 0.0, 0.0])]).unwrap();
        assert!(matches!(ConvexSetRep::intersection(vec![a, b]), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn sublevel_membership_and_projection() {
        let s = ProbSpace::uniform(2);
        let g = FunctionalSpec::pointwise(&s, parse_functional("x^2").unwrap());
        let ball = ConvexSetRep::sublevel(g, 1.0).unwrap();
        assert!(ball.contains(&rv(&s, &[1.0, 1.0]), 0.0).unwrap());
        assert!(!ball.contains(&rv(&s, &[1.0, -0.5]), 0.0).unwrap());
        let pr = ball.project(&rv(&s, &[2.0, 2.0]), 1e-10).unwrap();
        assert!((pr.values()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn intersection_projection() {
        // box [0,1]^2 cut by the budget E[x] <= 0.5
        let s = ProbSpace::uniform(2);
        let bx = ConvexSetRep::boxed(rv(&s, &[0.0, 0.0]), rv(&s, &[1.0, 1.0])).unwrap();
        let budget = ConvexSetRep::sublevel(FunctionalSpec::linear(RandVar::constant(&s, 1.0)), 0.5).unwrap();
        let set = ConvexSetRep::intersection(vec![bx, budget]).unwrap();
        let pr = set.project(&rv(&s, &[2.0, 0.0]), 1e-9).unwrap();
        assert!((pr.values()[0] - 1.0).abs() < 1e-6 && pr.values()[1].abs() < 1e-6, "{pr:?}");
        assert!(set.contains(&pr, 2e-9).unwrap());
    }

    #[test]
    fn box_vertex_net_and_bounds() {
        let s = ProbSpace::uniform(2);
        let bx = ConvexSetRep::boxed(rv(&s, &[0.0, 1.0]), rv(&s, &[2.0, 1.0])).unwrap();
        assert_eq!(bx.vertex_net().unwrap().len(), 2);
        assert!(bx.is_bounded());
        let g = FunctionalSpec::pointwise(&s, parse_functional("x").unwrap());
        assert!(!ConvexSetRep::sublevel(g, 1.0).unwrap().is_bounded());
    }
}
