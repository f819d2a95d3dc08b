//! Convergent convex combinations from sequences bounded in probability.
//!
//! For tails T_D = {f_n : D <= n <= H} the iterate g_D maximizes
//! E[phi(g)] over conv(T_D) up to a duality gap below 1/D. Since the tails
//! are nested, u_D (the certified upper bound on that supremum) is
//! nonincreasing, and the midpoint gap of phi turns the convergence of u_D
//! into convergence of g_D in probability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::wolfe::nearest_point;
use crate::geom::{convex_combine, ConvexSetRep, WeightVector};
use crate::measure::{epsilon_of_m, metric_d, phi_unchecked, prob_at_least, ProbSpace, RandVar};

use std::sync::Arc;

const NEWTON_MAX_ITER: usize = 200;
const GAP_FLOOR: f64 = 1e-14;
const MIN_WINDOW: usize = 16;

/// Terms f_1..f_H of a nonnegative sequence.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    space: Arc<ProbSpace>,
    terms: Vec<RandVar>,
}

impl SequenceSpec {
    pub fn new(space: &Arc<ProbSpace>, terms: Vec<RandVar>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("sequence needs at least one term".into()));
        }
        for t in &terms {
            if !crate::measure::same_space(space, t.space()) {
                return Err(Error::SpaceMismatch);
            }
            t.assert_nonneg()?;
        }
        Ok(SequenceSpec { space: space.clone(), terms })
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.terms.len()
    }

    /// The term with 1-based index n.
    pub fn term(&self, n: usize) -> &RandVar {
        &self.terms[n - 1]
    }

    pub fn terms(&self) -> &[RandVar] {
        &self.terms
    }

    /// The sequence with `head` placed before the current first term.
    pub fn prepend(&self, head: Vec<RandVar>) -> Result<Self> {
        let mut terms = head;
        terms.extend(self.terms.iter().cloned());
        SequenceSpec::new(&self.space, terms)
    }
}

#[derive(Debug, Clone)]
pub struct ExtractState {
    /// First index of the tail.
    pub d: usize,
    /// Last index of the tail (the horizon).
    pub end: usize,
    /// Upper bound on sup E[phi(g)] over the tail hull.
    pub u: f64,
    /// E[phi(g)] at the iterate.
    pub gamma: f64,
    /// Frank-Wolfe duality gap at the iterate.
    pub gap: f64,
    pub g: RandVar,
    /// Weights over the tail terms f_d..f_end.
    pub w: WeightVector,
    /// metric_d to the previous iterate.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeCertificate {
    pub eps: f64,
    /// Indices n with P[f_n >= n] > eps.
    pub indices: Vec<usize>,
    /// Threshold used for the combination bound (the smallest index).
    pub threshold: f64,
    /// P[g >= threshold * eps / 2] for the equal-weight combination g of
    /// the listed terms.
    pub combo_mass: f64,
    /// Whether combo_mass >= eps / 2.
    pub combo_bound: bool,
}

impl EscapeCertificate {
    /// Recomputes every inequality in the certificate against the sequence.
    pub fn verify(&self, seq: &SequenceSpec) -> bool {
        if !(self.eps > 0.0 && self.eps < 1.0) || self.indices.is_empty() {
            return false;
        }
        let ok = self
            .indices
            .iter()
            .all(|n| *n >= 1 && *n <= seq.horizon() && prob_at_least(seq.term(*n), *n as f64) > self.eps);
        if !ok {
            return false;
        }
        let points: Vec<RandVar> = self.indices.iter().map(|n| seq.term(*n).clone()).collect();
        let w = WeightVector::normalized(vec![1.0; points.len()]).expect("positive weights");
        matches!(combo_mass_bound(&points, &w, self.threshold, self.eps), Ok(true)) == self.combo_bound
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundedReport {
    /// (M, sup_n P[f_n >= M]) for each grid value.
    pub sups: Vec<(f64, f64)>,
    /// True when the sup at the largest M is still at least 0.5.
    pub escaping: bool,
}

pub fn check_bounded_prefix(seq: &SequenceSpec, m_grid: &[f64]) -> Result<BoundedReport> {
    validate_grid(m_grid)?;
    let sups: Vec<(f64, f64)> = m_grid
        .iter()
        .map(|m| (*m, seq.terms.iter().map(|t| prob_at_least(t, *m)).fold(0.0, f64::max)))
        .collect();
    let escaping = sups.last().map(|(_, s)| *s >= 0.5).unwrap_or(false);
    Ok(BoundedReport { sups, escaping })
}

fn validate_grid(m_grid: &[f64]) -> Result<()> {
    if m_grid.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    if m_grid.iter().any(|m| !(*m > 0.0) || !m.is_finite()) || m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("threshold grid must be positive and increasing".into()));
    }
    Ok(())
}

/// P[g >= n eps / 2] >= eps / 2 for g = sum w_k points_k, where every point
/// has P[point >= n] > eps.
pub fn combo_mass_bound(points: &[RandVar], w: &WeightVector, n: f64, eps: f64) -> Result<bool> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0,1), got {eps}")));
    }
    for (k, pt) in points.iter().enumerate() {
        let mass = prob_at_least(pt, n);
        if !(mass > eps) {
            return Err(Error::Hypothesis {
                message: format!("point {k} has P[f >= {n}] = {mass}, not above {eps}"),
                witness: pt.values().to_vec(),
            });
        }
    }
    let g = convex_combine(points, w)?;
    Ok(prob_at_least(&g, n * eps / 2.0) >= eps / 2.0)
}

/// Escape evidence in the sequence itself: the smallest P[f_n >= n] over the
/// second half of the horizon. A positive value means mass keeps escaping
/// past every threshold the horizon can show.
pub fn escape_certificate(seq: &SequenceSpec) -> Option<EscapeCertificate> {
    let h = seq.horizon();
    if h < 2 {
        return None;
    }
    let lo = h.div_ceil(2);
    let masses: Vec<f64> = (lo..=h).map(|n| prob_at_least(seq.term(n), n as f64)).collect();
    let eps_hat = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(eps_hat > 0.0) {
        return None;
    }
    let eps = eps_hat * (1.0 - 1e-9);
    let indices: Vec<usize> = (lo..=h).collect();
    let points: Vec<RandVar> = indices.iter().map(|n| seq.term(*n).clone()).collect();
    let w = WeightVector::normalized(vec![1.0; points.len()]).expect("positive weights");
    let threshold = lo as f64;
    let g = convex_combine(&points, &w).expect("terms share a space");
    let combo_mass = prob_at_least(&g, threshold * eps / 2.0);
    let combo_bound = combo_mass_bound(&points, &w, threshold, eps).unwrap_or(false);
    Some(EscapeCertificate { eps, indices, threshold, combo_mass, combo_bound })
}

/// Certificate that the latest iterate keeps mass at least `delta` above
/// every threshold in the grid.
pub fn detect_escape(trace: &[ExtractState], m_grid: &[f64], delta: f64) -> Option<EscapeCertificate> {
    if validate_grid(m_grid).is_err() || !(delta > 0.0 && delta < 1.0) {
        return None;
    }
    let last = trace.last()?;
    let masses: Vec<f64> = m_grid.iter().map(|m| prob_at_least(&last.g, *m)).collect();
    let eps = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    if eps < delta {
        return None;
    }
    let top = *m_grid.last().expect("nonempty grid");
    let eps = eps.min(1.0 - 1e-9) * (1.0 - 1e-9);
    let escaping: Vec<&ExtractState> = trace.iter().filter(|s| prob_at_least(&s.g, top) > eps).collect();
    let indices: Vec<usize> = escaping.iter().map(|s| s.d).collect();
    let points: Vec<RandVar> = escaping.iter().map(|s| s.g.clone()).collect();
    let w = WeightVector::normalized(vec![1.0; points.len()]).ok()?;
    let g = convex_combine(&points, &w).ok()?;
    let combo_mass = prob_at_least(&g, top * eps / 2.0);
    let combo_bound = combo_mass_bound(&points, &w, top, eps).unwrap_or(false);
    Some(EscapeCertificate { eps, indices, threshold: top, combo_mass, combo_bound })
}

struct Inner {
    weights: Vec<f64>,
    g: Vec<f64>,
    value: f64,
    gap: f64,
}

fn phi_mean(p: &[f64], g: &[f64]) -> f64 {
    p.iter().zip(g).map(|(pi, gi)| pi * phi_unchecked(*gi)).sum()
}

fn fw_gap(p: &[f64], g: &[f64], points: &[&[f64]]) -> f64 {
    let grad: Vec<f64> = p.iter().zip(g).map(|(pi, gi)| pi * (-gi).exp()).collect();
    let base: f64 = grad.iter().zip(g).map(|(a, b)| a * b).sum();
    points
        .iter()
        .map(|f| grad.iter().zip(f.iter()).map(|(a, b)| a * b).sum::<f64>() - base)
        .fold(0.0, f64::max)
}

/// Maximizes E[phi(g)] over conv(points) by projected Newton steps. The
/// Newton model at g is maximized by the projection of g + 1 onto the hull
/// in the metric p_i exp(-g_i).
fn maximize_phi(points: &[&[f64]], p: &[f64], target_gap: f64) -> Result<Inner> {
    let m = points.len();
    let mut start = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, f) in points.iter().enumerate() {
        let v = phi_mean(p, f);
        if v > best {
            best = v;
            start = k;
        }
    }
    let mut weights = vec![0.0; m];
    weights[start] = 1.0;
    let mut g = points[start].to_vec();
    let mut value = best;
    let mut gap = fw_gap(p, &g, points);
    for _ in 0..NEWTON_MAX_ITER {
        if gap <= GAP_FLOOR {
            break;
        }
        let metric: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi * (-gi).exp()).collect();
        let target: Vec<f64> = g.iter().map(|v| v + 1.0).collect();
        let h = nearest_point(points, &target, &metric, 0.0)?;
        let d: Vec<f64> = h.point.iter().zip(&g).map(|(a, b)| a - b).collect();
        let slope: f64 = metric.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = g.iter().zip(&d).map(|(a, b)| (a + t * b).max(0.0)).collect();
            let v = phi_mean(p, &trial);
            if v >= value + 1e-4 * t * slope {
                accepted = Some((trial, v));
                break;
            }
            t *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        for (w, wh) in weights.iter_mut().zip(&h.weights) {
            *w = (1.0 - t) * *w + t * wh;
        }
        g = next;
        value = v;
        gap = fw_gap(p, &g, points);
    }
    if gap > target_gap {
        return Err(Error::NonConvergent(format!(
            "inner maximization stalled with duality gap {gap:e} above {target_gap:e}"
        )));
    }
    Ok(Inner { weights, g, value, gap })
}

/// Tail starts 1, 17, 34, 68, ...: each step advances by max(16, D).
pub fn tail_schedule(horizon: usize) -> Vec<usize> {
    let mut out = vec![];
    let mut d = 1;
    while d <= horizon {
        out.push(d);
        d += MIN_WINDOW.max(d);
    }
    out
}

fn tail_state(seq: &SequenceSpec, d: usize, tol: f64, prev: Option<&ExtractState>) -> Result<ExtractState> {
    let points: Vec<&[f64]> = seq.terms[d - 1..].iter().map(|t| t.values()).collect();
    let inner = maximize_phi(&points, seq.space.probs(), (1.0 / d as f64).min(tol / 4.0))?;
    let g = seq.terms[0].with_values(inner.g);
    let w = WeightVector::normalized(inner.weights)?;
    let mut u = (inner.value + inner.gap).min(1.0);
    let mut step = None;
    u = u.max(inner.value);
    if let Some(prev) = prev {
        // nested tails: gamma can only exceed prev.u by rounding
        u = u.min(prev.u);
        step = Some(metric_d(&g, &prev.g)?);
    }
    Ok(ExtractState {
        d,
        end: seq.horizon(),
        u,
        gamma: inner.value,
        gap: inner.gap,
        g,
        w,
        step,
    })
}

/// Near-maximizers of E[phi] over every scheduled tail hull, without the
/// escape check or any convergence requirement.
pub fn tail_trace(seq: &SequenceSpec, tol: f64) -> Result<Vec<ExtractState>> {
    let mut trace: Vec<ExtractState> = Vec::new();
    for d in tail_schedule(seq.horizon()) {
        let st = tail_state(seq, d, tol, trace.last())?;
        trace.push(st);
    }
    Ok(trace)
}

/// Limit of near-maximizing tail combinations, with the trace of iterates.
pub fn extract(seq: &SequenceSpec, set: &ConvexSetRep, tol: f64) -> Result<(RandVar, Vec<ExtractState>)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    for (k, t) in seq.terms.iter().enumerate() {
        if !set.contains(t, tol)? {
            return Err(Error::InvalidInput(format!("term {} lies outside the set", k + 1)));
        }
    }
    if let Some(cert) = escape_certificate(seq) {
        return Err(Error::Unbounded(Box::new(cert)));
    }
    let h = seq.horizon();
    let mut trace: Vec<ExtractState> = Vec::new();
    for d in tail_schedule(h) {
        let st = tail_state(seq, d, tol, trace.last())?;
        let done = st.step.is_some_and(|s| s <= tol);
        trace.push(st);
        if done {
            let limit = trace.last().expect("nonempty").g.clone();
            return Ok((limit, trace));
        }
    }
    let last = trace.last().and_then(|s| s.step);
    Err(Error::NonConvergent(match last {
        Some(s) => format!("last tail step {s:e} exceeds tol {tol:e} at horizon {h}; extend the horizon"),
        None => format!("horizon {h} is too short for a second tail"),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyPair {
    pub d1: usize,
    pub d2: usize,
    /// P[|g_d1 - g_d2| >= kappa].
    pub mass: f64,
    /// eta / eps(M) + sup-mass above M, which bounds `mass`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyReport {
    pub kappa: f64,
    pub m: f64,
    pub eps_m: f64,
    /// max over iterates of P[g_D >= M].
    pub sup_mass: f64,
    /// First tail start from which slack and u-gaps stay below
    /// eps(M) kappa / 4, when sup_mass < kappa / 2.
    pub d_kappa: Option<usize>,
    pub pairs: Vec<CauchyPair>,
}

/// Quantitative Cauchy estimate for every pair of trace iterates.
///
/// For g1, g2 in the hull of the tail from D = min(D1, D2) the midpoint lies
/// there too, so eps(M) P[|g1 - g2| >= 1/M, min(g1, g2) <= M] is at most
/// eta = u_D - (gamma_1 + gamma_2) / 2.
pub fn cauchy_report(trace: &[ExtractState], kappa: f64) -> Result<CauchyReport> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidInput(format!("kappa must lie in (0,1), got {kappa}")));
    }
    // smallest power of two above 1/kappa and the (1 - kappa/2) quantile bound
    let top = trace.iter().map(|s| s.g.max_abs()).fold(0.0, f64::max);
    let mut m = 1.0f64;
    while m <= 1.0 / kappa {
        m *= 2.0;
    }
    while trace.iter().map(|s| prob_at_least(&s.g, m)).fold(0.0, f64::max) >= kappa / 2.0 && m <= top {
        m *= 2.0;
    }
    let sup_mass = trace.iter().map(|s| prob_at_least(&s.g, m)).fold(0.0, f64::max);
    let eps_m = epsilon_of_m(m)?;
    let mut pairs = Vec::new();
    for i in 0..trace.len() {
        for j in i + 1..trace.len() {
            let (a, b) = (&trace[i], &trace[j]);
            let eta = (a.u - 0.5 * (a.gamma + b.gamma)).max(0.0);
            let diff = a.g.sub(&b.g)?;
            pairs.push(CauchyPair { d1: a.d, d2: b.d, mass: prob_at_least(&diff, kappa), bound: eta / eps_m + sup_mass });
        }
    }
    let limit = eps_m * kappa / 4.0;
    let d_kappa = if sup_mass < kappa / 2.0 {
        let mut found = None;
        for k in (0..trace.len()).rev() {
            let s = &trace[k];
            let u_gap = s.u - trace.last().expect("nonempty").u;
            if s.u - s.gamma <= limit && u_gap <= limit {
                found = Some(s.d);
            } else {
                break;
            }
        }
        found
    } else {
        None
    };
    Ok(CauchyReport { kappa, m, eps_m, sup_mass, d_kappa, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(s: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(s.clone(), v.to_vec()).unwrap()
    }

    fn alternating(h: usize) -> (Arc<ProbSpace>, SequenceSpec) {
        let s = ProbSpace::uniform(2);
        let terms = (0..h).map(|k| if k % 2 == 0 { rv(&s, &[1.0, 0.0]) } else { rv(&s, &[0.0, 1.0]) }).collect();
        let seq = SequenceSpec::new(&s, terms).unwrap();
        (s, seq)
    }

    #[test]
    fn bounded_prefix_examples() {
        let s = ProbSpace::uniform(1);
        let ones = SequenceSpec::new(&s, vec![rv(&s, &[1.0]); 5]).unwrap();
        assert_eq!(check_bounded_prefix(&ones, &[2.0]).unwrap().sups, vec![(2.0, 0.0)]);
        let grow = SequenceSpec::new(&s, (1..=8).map(|n| rv(&s, &[n as f64])).collect()).unwrap();
        let r = check_bounded_prefix(&grow, &[2.0, 4.0, 8.0]).unwrap();
        assert!(r.sups.iter().all(|(_, v)| *v == 1.0) && r.escaping);
        let (_, alt) = alternating(6);
        assert_eq!(check_bounded_prefix(&alt, &[2.0]).unwrap().sups[0].1, 0.0);
        assert!(check_bounded_prefix(&alt, &[]).is_err());
    }

    #[test]
    fn alternating_limit_is_midpoint() {
        let (s, seq) = alternating(64);
        let set = ConvexSetRep::polytope(vec![rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])]).unwrap();
        let (g, trace) = extract(&seq, &set, 1e-8).unwrap();
        assert!((g.values()[0] - 0.5).abs() < 1e-8 && (g.values()[1] - 0.5).abs() < 1e-8, "{g:?}");
        for st in &trace {
            assert!(st.gamma >= st.u - 1.0 / st.d as f64);
        }
    }

    #[test]
    fn constant_sequence_is_its_own_limit() {
        let s = ProbSpace::uniform(3);
        let f = rv(&s, &[0.2, 1.0, 3.0]);
        let seq = SequenceSpec::new(&s, vec![f.clone(); 40]).unwrap();
        let set = ConvexSetRep::polytope(vec![f.clone()]).unwrap();
        let (g, trace) = extract(&seq, &set, 1e-9).unwrap();
        assert_eq!(g.values(), f.values());
        assert!(trace.iter().all(|st| st.w.weights()[0] == 1.0));
    }

    #[test]
    fn escaping_constants_are_unbounded() {
        let s = ProbSpace::uniform(1);
        let seq = SequenceSpec::new(&s, (1..=32).map(|n| rv(&s, &[n as f64])).collect()).unwrap();
        let bx = ConvexSetRep::boxed(rv(&s, &[0.0]), rv(&s, &[100.0])).unwrap();
        match extract(&seq, &bx, 1e-6) {
            Err(Error::Unbounded(cert)) => {
                assert!(cert.eps > 0.99 && cert.eps < 1.0);
                assert!(cert.combo_bound);
                assert!(cert.verify(&seq));
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
        let trace = tail_trace(&seq, 1e-6).unwrap();
        let cert = detect_escape(&trace, &[2.0, 4.0, 8.0, 16.0], 0.9).unwrap();
        assert!(cert.eps > 0.99);
    }

    #[test]
    fn mixed_escape_keeps_half_the_mass() {
        let s = ProbSpace::uniform(2);
        let seq = SequenceSpec::new(&s, (1..=64).map(|n| rv(&s, &[n as f64, 1.0])).collect()).unwrap();
        let trace = tail_trace(&seq, 1e-6).unwrap();
        let cert = detect_escape(&trace, &[2.0, 4.0, 8.0, 16.0, 32.0], 0.25).unwrap();
        assert!((cert.eps - 0.5).abs() < 1e-6);
        let (_, alt) = alternating(64);
        assert!(detect_escape(&tail_trace(&alt, 1e-6).unwrap(), &[2.0, 4.0], 0.25).is_none());
    }

    #[test]
    fn combo_bound_examples() {
        let s = ProbSpace::uniform(4);
        let a = rv(&s, &[12.0, 0.0, 0.0, 0.0]);
        let w1 = WeightVector::new(vec![1.0]).unwrap();
        assert!(combo_mass_bound(std::slice::from_ref(&a), &w1, 10.0, 0.2).unwrap());
        // P[f >= 10] = 0.25 for each point; eps = 0.2
        let b = rv(&s, &[0.0, 0.0, 0.0, 11.0]);
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!(combo_mass_bound(&[a.clone(), b], &w, 10.0, 0.2).unwrap());
        assert!(matches!(combo_mass_bound(&[a], &w1, 10.0, 0.3), Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn short_horizon_is_reported() {
        let (s, seq) = alternating(8);
        let set = ConvexSetRep::polytope(vec![rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])]).unwrap();
        assert!(matches!(extract(&seq, &set, 1e-6), Err(Error::NonConvergent(_))));
    }

    #[test]
    fn schedule() {
        assert_eq!(tail_schedule(100), vec![1, 17, 34, 68]);
    }
}
