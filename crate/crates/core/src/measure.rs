//! Finite probability spaces and random variables on them.
//!
//! Every expectation and probability is an exact finite sum. Random
//! variables hold a shared handle to their space; two variables are
//! compatible when their spaces are the same handle or structurally equal.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance used for metric-level comparisons.
pub const METRIC_TOL: f64 = 1e-12;

/// A finite probability space with ordered, strictly positive atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSpace {
    atom_ids: Vec<String>,
    probs: Vec<f64>,
}

impl ProbSpace {
    pub fn new(atom_ids: Vec<String>, probs: Vec<f64>) -> Result<Arc<Self>> {
        if atom_ids.is_empty() {
            return Err(Error::InvalidInput("a probability space needs at least one atom".into()));
        }
        if atom_ids.len() != probs.len() {
            return Err(Error::LengthMismatch { expected: atom_ids.len(), got: probs.len() });
        }
        for (i, id) in atom_ids.iter().enumerate() {
            if atom_ids[..i].contains(id) {
                return Err(Error::InvalidInput(format!("duplicate atom id {id:?}")));
            }
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidInput(format!("atom probability {p} outside (0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > METRIC_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Arc::new(ProbSpace { atom_ids, probs }))
    }

    /// Builds a space from unnormalized positive masses, rescaling so the
    /// total is 1.
    pub fn from_masses(atom_ids: Vec<String>, masses: &[f64]) -> Result<Arc<Self>> {
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidInput("masses must be finite and positive".into()));
        }
        let total: f64 = masses.iter().sum();
        ProbSpace::new(atom_ids, masses.iter().map(|m| m / total).collect())
    }

    /// Uniform space on `n` atoms named `w0, w1, ...`.
    pub fn uniform(n: usize) -> Arc<Self> {
        assert!(n > 0, "uniform space needs at least one atom");
        let ids = (0..n).map(|i| format!("w{i}")).collect();
        Arc::new(ProbSpace { atom_ids: ids, probs: vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atom_ids(&self) -> &[String] {
        &self.atom_ids
    }
}

pub(crate) fn same_space(a: &Arc<ProbSpace>, b: &Arc<ProbSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A real random variable: one finite value per atom.
#[derive(Clone, PartialEq)]
pub struct RandVar {
    space: Arc<ProbSpace>,
    values: Vec<f64>,
}

impl fmt::Debug for RandVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("RandVar").field(&self.values).finish()
    }
}

impl RandVar {
    pub fn new(space: Arc<ProbSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("random variable value {v} is not finite")));
        }
        Ok(RandVar { space, values })
    }

    pub fn constant(space: &Arc<ProbSpace>, c: f64) -> Self {
        RandVar { space: space.clone(), values: vec![c; space.len()] }
    }

    pub fn zeros(space: &Arc<ProbSpace>) -> Self {
        Self::constant(space, 0.0)
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same space, new values. Values are assumed finite.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        RandVar { space: self.space.clone(), values }
    }

    pub(crate) fn check_same_space(&self, other: &RandVar) -> Result<()> {
        if same_space(&self.space, &other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Errors unless every value is nonnegative (membership in L0+).
    pub fn assert_nonneg(&self) -> Result<()> {
        match self.values.iter().find(|v| **v < 0.0) {
            Some(v) => Err(Error::NegativeInput(*v)),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn add(&self, other: &RandVar) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &RandVar) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Probability-weighted inner product E[fg].
    pub fn inner(&self, other: &RandVar) -> Result<f64> {
        self.check_same_space(other)?;
        Ok(weighted_dot(self.space.probs(), &self.values, &other.values))
    }

    /// Norm induced by E[fg].
    pub fn norm(&self) -> f64 {
        weighted_dot(self.space.probs(), &self.values, &self.values).sqrt()
    }

    pub fn dist(&self, other: &RandVar) -> Result<f64> {
        self.check_same_space(other)?;
        Ok(weighted_dist(self.space.probs(), &self.values, &other.values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub(crate) fn weighted_dist(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a)
        .zip(b)
        .map(|((w, a), b)| w * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn expectation(f: &RandVar) -> f64 {
    f.space.probs().iter().zip(&f.values).map(|(p, v)| p * v).sum()
}

/// P[|f| >= m].
pub fn prob_at_least(f: &RandVar, m: f64) -> f64 {
    let mass: f64 = f
        .space
        .probs()
        .iter()
        .zip(&f.values)
        .filter(|(_, v)| v.abs() >= m)
        .map(|(p, _)| p)
        .sum();
    mass.min(1.0)
}

/// The convergence-in-probability metric d(f, g) = E[min(1, |f - g|)].
pub fn metric_d(f: &RandVar, g: &RandVar) -> Result<f64> {
    f.check_same_space(g)?;
    Ok(f.space
        .probs()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(p, (a, b))| p * (a - b).abs().min(1.0))
        .sum::<f64>()
        .min(1.0))
}

/// phi(x) = 1 - exp(-x) on [0, inf).
pub fn phi(x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeInput(x));
    }
    Ok(phi_unchecked(x))
}

#[inline]
pub(crate) fn phi_unchecked(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// The exact infimum of the midpoint concavity gap of `phi`,
/// phi((x1+x2)/2) - (phi(x1)+phi(x2))/2, over pairs with
/// |x1 - x2| >= 1/m and min(x1, x2) <= m.
///
/// For a pair (a, a + t) the gap equals exp(-a) (1 - exp(-t/2))^2 / 2,
/// which decreases in `a` and increases in `t`; the infimum sits at the
/// corner a = m, t = 1/m.
pub fn epsilon_of_m(m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon_of_m needs m > 0, got {m}")));
    }
    let s = (-1.0 / (2.0 * m)).exp_m1();
    Ok((-m).exp() * s * s / 2.0)
}

/// Two copies of a space glued side by side, each copy carrying half the
/// mass. Atom (i, w) is named `"{i}:{w}"` for i in {1, 2}.
#[derive(Debug, Clone)]
pub struct DirectSumSpace {
    pub source: Arc<ProbSpace>,
    pub result: Arc<ProbSpace>,
}

impl DirectSumSpace {
    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    /// Splits a variable on the summed space back into its two halves.
    pub fn split(&self, h: &RandVar) -> Result<(RandVar, RandVar)> {
        if !same_space(h.space(), &self.result) {
            return Err(Error::SpaceMismatch);
        }
        let n = self.source.len();
        let f = RandVar { space: self.source.clone(), values: h.values[..n].to_vec() };
        let g = RandVar { space: self.source.clone(), values: h.values[n..].to_vec() };
        Ok((f, g))
    }
}

pub fn direct_sum(space: &Arc<ProbSpace>) -> DirectSumSpace {
    let mut ids = Vec::with_capacity(2 * space.len());
    let mut probs = Vec::with_capacity(2 * space.len());
    for tag in 1..=2 {
        for (id, p) in space.atom_ids().iter().zip(space.probs()) {
            ids.push(format!("{tag}:{id}"));
            probs.push(p / 2.0);
        }
    }
    DirectSumSpace {
        source: space.clone(),
        result: Arc::new(ProbSpace { atom_ids: ids, probs }),
    }
}

/// The variable f (+) g on the direct sum: f on the first copy, g on the
/// second.
pub fn oplus(f: &RandVar, g: &RandVar, sum: &DirectSumSpace) -> Result<RandVar> {
    if !same_space(f.space(), &sum.source) || !same_space(g.space(), &sum.source) {
        return Err(Error::SpaceMismatch);
    }
    let mut values = f.values.clone();
    values.extend_from_slice(&g.values);
    Ok(RandVar { space: sum.result.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(space: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(space.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn expectation_examples() {
        let s2 = ProbSpace::uniform(2);
        assert_eq!(expectation(&RandVar::zeros(&s2)), 0.0);
        assert_eq!(expectation(&rv(&s2, &[1.0, 3.0])), 2.0);
        let s3 = ProbSpace::from_masses(vec!["a".into(), "b".into(), "c".into()], &[1.0, 2.0, 5.0])
            .unwrap();
        assert!((expectation(&RandVar::constant(&s3, 4.5)) - 4.5).abs() < 1e-15);
    }

    #[test]
    fn prob_at_least_examples() {
        let s2 = ProbSpace::uniform(2);
        assert_eq!(prob_at_least(&RandVar::zeros(&s2), 1.0), 0.0);
        assert_eq!(prob_at_least(&rv(&s2, &[0.4, 3.0]), 1.0), 0.5);
        assert_eq!(prob_at_least(&rv(&s2, &[-2.0, 0.0]), -1.0), 1.0);
    }

    #[test]
    fn metric_examples() {
        let s2 = ProbSpace::uniform(2);
        let f = rv(&s2, &[0.0, 0.0]);
        let g = rv(&s2, &[0.4, 3.0]);
        assert_eq!(metric_d(&f, &f).unwrap(), 0.0);
        assert!((metric_d(&f, &g).unwrap() - 0.7).abs() < 1e-15);
        let s1 = ProbSpace::uniform(1);
        assert_eq!(metric_d(&rv(&s1, &[0.0]), &rv(&s1, &[2.0])).unwrap(), 1.0);
        assert!(matches!(metric_d(&f, &rv(&s1, &[0.0])), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0).unwrap(), 0.0);
        assert!((phi(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!(phi(30.0).unwrap() < 1.0 && phi(30.0).unwrap() > phi(20.0).unwrap());
        assert!(matches!(phi(-0.1), Err(Error::NegativeInput(_))));
    }

    #[test]
    fn epsilon_closed_form() {
        assert!((epsilon_of_m(1.0).unwrap() - 0.028_478).abs() < 1e-6);
        assert!(epsilon_of_m(0.0).is_err());
        assert!(epsilon_of_m(-1.0).is_err());
        let mut prev = f64::INFINITY;
        for m in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let e = epsilon_of_m(m).unwrap();
            assert!(e > 0.0 && e < prev);
            prev = e;
        }
    }

    #[test]
    fn direct_sum_examples() {
        let s1 = ProbSpace::uniform(1);
        let ds = direct_sum(&s1);
        assert_eq!(ds.result.probs(), &[0.5, 0.5]);
        let s2 = ProbSpace::uniform(2);
        let ds2 = direct_sum(&s2);
        assert_eq!(ds2.result.probs(), &[0.25; 4]);
        assert_eq!(ds2.result.atom_ids()[3], "2:w1");

        let f = rv(&s1, &[1.0]);
        let g = rv(&s1, &[3.0]);
        let h = oplus(&f, &g, &ds).unwrap();
        assert_eq!(expectation(&h), 2.0);
        let z = oplus(&RandVar::zeros(&s1), &RandVar::zeros(&s1), &ds).unwrap();
        assert_eq!(z.values(), &[0.0, 0.0]);
        let (a, b) = ds.split(&h).unwrap();
        assert_eq!((a.values()[0], b.values()[0]), (1.0, 3.0));
        assert!(oplus(&f, &rv(&s2, &[0.0, 0.0]), &ds).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(ProbSpace::new(vec![], vec![]).is_err());
        assert!(ProbSpace::new(vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
        assert!(ProbSpace::new(vec!["a".into(), "b".into()], vec![0.5, 0.6]).is_err());
        assert!(ProbSpace::new(vec!["a".into(), "b".into()], vec![1.0, 0.0]).is_err());
        let s = ProbSpace::uniform(2);
        assert!(RandVar::new(s.clone(), vec![1.0]).is_err());
        assert!(RandVar::new(s, vec![1.0, f64::NAN]).is_err());
    }
}
