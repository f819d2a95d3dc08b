//! Saddle points of Phi(f, g) = sum_ij p_i p_j f_i K_ij g_j + E[a(f)] + E[b(g)]
//! over bounded C x D, with a concave and b convex.

use std::sync::Arc;

use serde::Serialize;

use crate::coercive::minimize;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::functional::FunctionalSpec;
use crate::geom::ConvexSetRep;
use crate::measure::{direct_sum, oplus, DirectSumSpace, ProbSpace, RandVar};

pub const MAX_ITER: usize = 400_000;
const FIRST_EPOCH: usize = 64;
const MAX_EPOCH: usize = 8192;

#[derive(Debug, Clone)]
pub struct SaddleInstance {
    pub c: ConvexSetRep,
    pub d: ConvexSetRep,
    /// Atom-indexed kernel, row i for f, column j for g.
    pub kernel: Vec<Vec<f64>>,
    /// Concave pointwise term a in f.
    pub f_term: Option<Expr>,
    /// Convex pointwise term b in g.
    pub g_term: Option<Expr>,
}

impl SaddleInstance {
    pub fn new(
        c: ConvexSetRep,
        d: ConvexSetRep,
        kernel: Vec<Vec<f64>>,
        f_term: Option<Expr>,
        g_term: Option<Expr>,
    ) -> Result<Self> {
        if !crate::measure::same_space(c.space(), d.space()) {
            return Err(Error::SpaceMismatch);
        }
        let n = c.space().len();
        if kernel.len() != n || kernel.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("kernel must be {n}x{n}")));
        }
        if kernel.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kernel entries must be finite".into()));
        }
        for (name, set) in [("C", &c), ("D", &d)] {
            if set.vertex_net().is_none() {
                return Err(Error::InvalidInput(format!("{name} must be a polytope or a small box")));
            }
        }
        let inst = SaddleInstance { c, d, kernel, f_term, g_term };
        inst.check_curvature()?;
        Ok(inst)
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        self.c.space()
    }

    fn check_curvature(&self) -> Result<()> {
        let s = self.space();
        if let Some(a) = &self.f_term {
            FunctionalSpec::pointwise(s, a.clone().scaled(-1.0))
                .spot_check_convexity()
                .map_err(|e| Error::ConvexityViolation(format!("f-term is not concave: {e}")))?;
        }
        if let Some(b) = &self.g_term {
            FunctionalSpec::pointwise(s, b.clone())
                .spot_check_convexity()
                .map_err(|e| Error::ConvexityViolation(format!("g-term is not convex: {e}")))?;
        }
        Ok(())
    }

    /// (K (p g))_i: Phi is E[f * this] plus the curved terms.
    fn pull_g(&self, g: &[f64]) -> Vec<f64> {
        let p = self.space().probs();
        self.kernel.iter().map(|row| (0..g.len()).map(|j| row[j] * p[j] * g[j]).sum()).collect()
    }

    /// (K^T (p f))_j.
    fn pull_f(&self, f: &[f64]) -> Vec<f64> {
        let p = self.space().probs();
        let n = f.len();
        (0..n).map(|j| (0..n).map(|i| self.kernel[i][j] * p[i] * f[i]).sum()).collect()
    }

    fn term_mean(&self, term: &Option<Expr>, x: &[f64]) -> Result<f64> {
        let Some(e) = term else { return Ok(0.0) };
        let p = self.space().probs();
        let mut s = 0.0;
        for (pi, xi) in p.iter().zip(x) {
            s += pi * e.eval(*xi)?;
        }
        Ok(s)
    }

    fn value_slice(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let p = self.space().probs();
        let kg = self.pull_g(g);
        let bil: f64 = (0..f.len()).map(|i| p[i] * f[i] * kg[i]).sum();
        Ok(bil + self.term_mean(&self.f_term, f)? + self.term_mean(&self.g_term, g)?)
    }

    pub fn value(&self, f: &RandVar, g: &RandVar) -> Result<f64> {
        self.c.contains(f, f64::INFINITY)?;
        self.d.contains(g, f64::INFINITY)?;
        self.value_slice(f.values(), g.values())
    }

    /// Phi evaluated on f (+) g through the direct-sum space.
    pub fn value_on_sum(&self, h: &RandVar, sum: &DirectSumSpace) -> Result<f64> {
        let (f, g) = sum.split(h)?;
        self.value_slice(f.values(), g.values())
    }

    fn term_derivs(&self, term: &Option<Expr>, x: &[f64]) -> Result<Vec<f64>> {
        match term {
            None => Ok(vec![0.0; x.len()]),
            Some(e) => x.iter().map(|v| Ok(e.eval_dual(*v)?.d)).collect(),
        }
    }

    /// Weighted gradients (ascent direction in f, descent direction in g).
    fn grads(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut gf = self.pull_g(g);
        for (a, b) in gf.iter_mut().zip(self.term_derivs(&self.f_term, f)?) {
            *a += b;
        }
        let mut gg = self.pull_f(f);
        for (a, b) in gg.iter_mut().zip(self.term_derivs(&self.g_term, g)?) {
            *a += b;
        }
        Ok((gf, gg))
    }

    /// Lipschitz estimate of the monotone operator in the E[uv] geometry.
    fn lipschitz(&self) -> Result<f64> {
        let p = self.space().probs();
        let n = p.len();
        let m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p[i].sqrt() * self.kernel[i][j] * p[j].sqrt()).collect()).collect();
        // power iteration on M^T M
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut sigma2 = 0.0;
        for _ in 0..500 {
            let mv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * v[j]).sum()).collect();
            let w: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m[i][j] * mv[i]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            sigma2 = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        // power iteration approaches from below; pad it
        let mut lip = 1.05 * sigma2.sqrt();
        for (term, set) in [(&self.f_term, &self.c), (&self.g_term, &self.d)] {
            let (Some(e), Some((lo, hi))) = (term, set.bounding_box()) else { continue };
            let a = lo.iter().cloned().fold(f64::INFINITY, f64::min);
            let b = hi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut curv = 0.0f64;
            for k in 0..=64 {
                let x = a + (b - a) * k as f64 / 64.0;
                if let Ok(c2) = e.second_derivative(x) {
                    curv = curv.max(c2.abs());
                }
            }
            lip += curv;
        }
        Ok(lip)
    }
}

fn barycenter(set: &ConvexSetRep) -> Vec<f64> {
    let net = set.vertex_net().expect("checked at construction");
    let n = net[0].len();
    let mut x = vec![0.0; n];
    for v in &net {
        for (xi, vi) in x.iter_mut().zip(v.values()) {
            *xi += vi / net.len() as f64;
        }
    }
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleCertificate {
    pub f0: Vec<f64>,
    pub g0: Vec<f64>,
    /// Upper bound on sup_f Phi(f, g0) minus lower bound on inf_g Phi(f0, g).
    pub gap: f64,
    /// inf_g Phi(f0, g): a lower bound for sup inf.
    pub supinf: f64,
    /// sup_f Phi(f, g0): an upper bound for inf sup.
    pub infsup: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Certified upper bound on sup_{f in C} Phi(f, g) and its maximizer.
fn best_f(inst: &SaddleInstance, g: &[f64], tol: f64) -> Result<(f64, Vec<f64>)> {
    let s = inst.space();
    let kg = inst.pull_g(g);
    let offset = inst.term_mean(&inst.g_term, g)?;
    match &inst.f_term {
        None => {
            let p = s.probs();
            let mut best = (f64::NEG_INFINITY, vec![]);
            for v in inst.c.vertex_net().expect("vertex net") {
                let val: f64 = (0..p.len()).map(|i| p[i] * v.values()[i] * kg[i]).sum();
                if val > best.0 {
                    best = (val, v.values().to_vec());
                }
            }
            Ok((best.0 + offset, best.1))
        }
        Some(a) => {
            let n = s.len();
            let neg: Vec<f64> = kg.iter().map(|v| -v).collect();
            let obj = FunctionalSpec::separable(s, vec![Some(a.clone().scaled(-1.0)); n], neg, 0.0)?;
            let m = minimize(&obj, &inst.c, tol)?;
            let slack = m.certificate.fw_gap.unwrap_or(0.0);
            Ok((-m.value + slack + offset, m.f_star.values().to_vec()))
        }
    }
}

/// Certified lower bound on inf_{g in D} Phi(f, g) and its minimizer.
fn best_g(inst: &SaddleInstance, f: &[f64], tol: f64) -> Result<(f64, Vec<f64>)> {
    let s = inst.space();
    let kf = inst.pull_f(f);
    let offset = inst.term_mean(&inst.f_term, f)?;
    match &inst.g_term {
        None => {
            let p = s.probs();
            let mut best = (f64::INFINITY, vec![]);
            for v in inst.d.vertex_net().expect("vertex net") {
                let val: f64 = (0..p.len()).map(|j| p[j] * v.values()[j] * kf[j]).sum();
                if val < best.0 {
                    best = (val, v.values().to_vec());
                }
            }
            Ok((best.0 + offset, best.1))
        }
        Some(b) => {
            let n = s.len();
            let obj = FunctionalSpec::separable(s, vec![Some(b.clone()); n], kf, 0.0)?;
            let m = minimize(&obj, &inst.d, tol)?;
            let slack = m.certificate.fw_gap.unwrap_or(0.0);
            Ok((m.value - slack + offset, m.f_star.values().to_vec()))
        }
    }
}

fn certify(inst: &SaddleInstance, f: &[f64], g: &[f64], tol: f64, iterations: usize) -> Result<SaddleCertificate> {
    let inner = 0.1 * tol;
    let (hi, _) = best_f(inst, g, inner)?;
    let (lo, _) = best_g(inst, f, inner)?;
    Ok(SaddleCertificate {
        f0: f.to_vec(),
        g0: g.to_vec(),
        gap: hi - lo,
        supinf: lo,
        infsup: hi,
        value: inst.value_slice(f, g)?,
        iterations,
    })
}

/// Restarted extragradient with averaging over the final half of each
/// epoch; stops once the certified gap is at most tol.
pub fn solve_saddle(inst: &SaddleInstance, tol: f64) -> Result<SaddleCertificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let inner = 1e-3 * tol;
    let lip = inst.lipschitz()?;
    let eta = if lip > 0.0 { 0.9 / lip } else { 1.0 };
    let mut f = inst.c.project_slice(&barycenter(&inst.c), inner)?;
    let mut g = inst.d.project_slice(&barycenter(&inst.d), inner)?;
    let mut best = certify(inst, &f, &g, tol, 0)?;
    let mut total = 0;
    let mut epoch = FIRST_EPOCH;
    while best.gap > tol {
        if total >= MAX_ITER {
            return Err(Error::BudgetExhausted { best_gap: best.gap });
        }
        let half = epoch / 2;
        let mut fa = vec![0.0; f.len()];
        let mut ga = vec![0.0; g.len()];
        for k in 0..epoch {
            let (gf, gg) = inst.grads(&f, &g)?;
            let fh: Vec<f64> = f.iter().zip(&gf).map(|(x, d)| x + eta * d).collect();
            let gh: Vec<f64> = g.iter().zip(&gg).map(|(x, d)| x - eta * d).collect();
            let fh = inst.c.project_slice(&fh, inner)?;
            let gh = inst.d.project_slice(&gh, inner)?;
            let (gf, gg) = inst.grads(&fh, &gh)?;
            let fn_: Vec<f64> = f.iter().zip(&gf).map(|(x, d)| x + eta * d).collect();
            let gn: Vec<f64> = g.iter().zip(&gg).map(|(x, d)| x - eta * d).collect();
            f = inst.c.project_slice(&fn_, inner)?;
            g = inst.d.project_slice(&gn, inner)?;
            if k >= half {
                for (a, v) in fa.iter_mut().zip(&f) {
                    *a += v / (epoch - half) as f64;
                }
                for (a, v) in ga.iter_mut().zip(&g) {
                    *a += v / (epoch - half) as f64;
                }
            }
        }
        total += epoch;
        let fa = inst.c.project_slice(&fa, inner)?;
        let ga = inst.d.project_slice(&ga, inner)?;
        let last = certify(inst, &f, &g, tol, total)?;
        let avg = certify(inst, &fa, &ga, tol, total)?;
        let cand = if avg.gap <= last.gap { avg } else { last };
        if cand.gap < best.gap {
            best = cand;
        } else {
            best.iterations = total;
        }
        f = best.f0.clone();
        g = best.g0.clone();
        epoch = (epoch * 2).min(MAX_EPOCH);
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleVerdict {
    pub ok: bool,
    /// Largest violation of either saddle inequality on the nets.
    pub violation: f64,
    /// "f" when some f beats f0 against g0, "g" when some g undercuts g0.
    pub side: Option<&'static str>,
    pub witness: Option<Vec<f64>>,
}

fn net_points(set: &ConvexSetRep) -> Vec<Vec<f64>> {
    let verts: Vec<Vec<f64>> = set.vertex_net().expect("vertex net").iter().map(|v| v.values().to_vec()).collect();
    let mut out = verts.clone();
    for a in 0..verts.len().min(64) {
        for b in a + 1..verts.len().min(64) {
            for t in [0.25, 0.5, 0.75] {
                out.push(verts[a].iter().zip(&verts[b]).map(|(x, y)| (1.0 - t) * x + t * y).collect());
            }
        }
    }
    out
}

/// Checks Phi(f, g0) <= Phi(f0, g0) <= Phi(f0, g) within tol on certificate
/// nets: vertices for the bilinear part, plus segment grids and best
/// responses when curved terms are present.
pub fn verify_saddle(inst: &SaddleInstance, f0: &RandVar, g0: &RandVar, tol: f64) -> Result<SaddleVerdict> {
    let mut verdict = SaddleVerdict { ok: true, violation: 0.0, side: None, witness: None };
    if !inst.c.contains(f0, tol)? {
        return Ok(SaddleVerdict { ok: false, violation: f64::INFINITY, side: Some("f"), witness: Some(f0.values().to_vec()) });
    }
    if !inst.d.contains(g0, tol)? {
        return Ok(SaddleVerdict { ok: false, violation: f64::INFINITY, side: Some("g"), witness: Some(g0.values().to_vec()) });
    }
    let (f0, g0) = (f0.values(), g0.values());
    let v0 = inst.value_slice(f0, g0)?;
    let mut fs = if inst.f_term.is_some() { net_points(&inst.c) } else { vec![] };
    let mut gs = if inst.g_term.is_some() { net_points(&inst.d) } else { vec![] };
    fs.push(best_f(inst, g0, 0.1 * tol)?.1);
    gs.push(best_g(inst, f0, 0.1 * tol)?.1);
    for f in inst.c.vertex_net().expect("vertex net").iter().map(|v| v.values().to_vec()).chain(fs) {
        let excess = inst.value_slice(&f, g0)? - v0;
        if excess > verdict.violation {
            verdict = SaddleVerdict { ok: excess <= tol, violation: excess, side: Some("f"), witness: Some(f) };
        }
    }
    for g in inst.d.vertex_net().expect("vertex net").iter().map(|v| v.values().to_vec()).chain(gs) {
        let excess = v0 - inst.value_slice(f0, &g)?;
        if excess > verdict.violation {
            verdict = SaddleVerdict { ok: excess <= tol, violation: excess, side: Some("g"), witness: Some(g) };
        }
    }
    verdict.ok = verdict.violation <= tol;
    Ok(verdict)
}

/// C (+) D on the direct-sum space.
pub fn product_set(inst: &SaddleInstance, sum: &DirectSumSpace) -> Result<ConvexSetRep> {
    match (&inst.c, &inst.d) {
        (ConvexSetRep::Box { lower: l1, upper: u1 }, ConvexSetRep::Box { lower: l2, upper: u2 }) => {
            ConvexSetRep::boxed(oplus(l1, l2, sum)?, oplus(u1, u2, sum)?)
        }
        _ => {
            let cv = inst.c.vertex_net().expect("vertex net");
            let dv = inst.d.vertex_net().expect("vertex net");
            let mut gens = Vec::with_capacity(cv.len() * dv.len());
            for a in &cv {
                for b in &dv {
                    gens.push(oplus(a, b, sum)?);
                }
            }
            ConvexSetRep::polytope(gens)
        }
    }
}

/// For each pair (f, g), the set {f' (+) g' in C (+) D : Phi(f, g') - Phi(f', g) <= 0}.
pub fn build_g_family(inst: &SaddleInstance, pairs: &[(RandVar, RandVar)]) -> Result<(DirectSumSpace, Vec<ConvexSetRep>)> {
    let sum = direct_sum(inst.space());
    let n = inst.space().len();
    let product = product_set(inst, &sum)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (f, g) in pairs {
        let (f, g) = (f.values(), g.values());
        let kf = inst.pull_f(f);
        let kg = inst.pull_g(g);
        // atom weights on the sum space are halved, so coefficients double
        let mut terms = Vec::with_capacity(2 * n);
        let mut coef = Vec::with_capacity(2 * n);
        for v in &kg {
            terms.push(inst.f_term.clone().map(|a| a.scaled(-2.0)));
            coef.push(-2.0 * v);
        }
        for v in &kf {
            terms.push(inst.g_term.clone().map(|b| b.scaled(2.0)));
            coef.push(2.0 * v);
        }
        let constant = inst.term_mean(&inst.f_term, f)? - inst.term_mean(&inst.g_term, g)?;
        let spec = FunctionalSpec::separable(&sum.result, terms, coef, constant)?;
        let sub = ConvexSetRep::sublevel(spec, 0.0)?;
        out.push(ConvexSetRep::intersection(vec![product.clone(), sub])?);
    }
    Ok((sum, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkm::{sperner_solve, KkmInstance};

    fn rv(s: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(s.clone(), v.to_vec()).unwrap()
    }

    fn simplex(s: &Arc<ProbSpace>) -> ConvexSetRep {
        ConvexSetRep::polytope(vec![rv(s, &[1.0, 0.0]), rv(s, &[0.0, 1.0])]).unwrap()
    }

    fn pennies() -> SaddleInstance {
        let s = ProbSpace::uniform(2);
        SaddleInstance::new(simplex(&s), simplex(&s), vec![vec![1.0, -1.0], vec![-1.0, 1.0]], None, None).unwrap()
    }

    #[test]
    fn matching_pennies() {
        let inst = pennies();
        let cert = solve_saddle(&inst, 1e-8).unwrap();
        assert!(cert.gap <= 1e-8 && cert.gap >= -1e-12);
        assert!((cert.f0[0] - 0.5).abs() < 1e-6 && (cert.g0[0] - 0.5).abs() < 1e-6, "{cert:?}");
        assert!(cert.value.abs() < 1e-8);
        let s = inst.space().clone();
        assert!(verify_saddle(&inst, &rv(&s, &cert.f0), &rv(&s, &cert.g0), 1e-8).unwrap().ok);
        let v = verify_saddle(&inst, &rv(&s, &[0.7, 0.3]), &rv(&s, &cert.g0), 1e-8).unwrap();
        assert!(!v.ok && v.side == Some("g"));
    }

    #[test]
    fn one_atom_product_game() {
        let s = ProbSpace::uniform(1);
        let bx = ConvexSetRep::boxed(rv(&s, &[0.0]), rv(&s, &[1.0])).unwrap();
        let inst = SaddleInstance::new(bx.clone(), bx, vec![vec![1.0]], None, None).unwrap();
        let cert = solve_saddle(&inst, 1e-9).unwrap();
        assert!(cert.g0[0].abs() < 1e-9 && cert.gap.abs() <= 1e-9 && cert.value.abs() < 1e-9);
    }

    #[test]
    fn zero_payoff() {
        let s = ProbSpace::uniform(2);
        let inst = SaddleInstance::new(simplex(&s), simplex(&s), vec![vec![0.0; 2]; 2], None, None).unwrap();
        let cert = solve_saddle(&inst, 1e-9).unwrap();
        assert_eq!(cert.gap, 0.0);
        assert!(verify_saddle(&inst, &rv(&s, &[1.0, 0.0]), &rv(&s, &[0.0, 1.0]), 0.0).unwrap().ok);
        let (_, fam) = build_g_family(&inst, &[(rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0]))]).unwrap();
        let sum = direct_sum(&s);
        let h = oplus(&rv(&s, &[0.3, 0.7]), &rv(&s, &[0.6, 0.4]), &sum).unwrap();
        assert!(fam[0].contains(&h, 1e-12).unwrap());
    }

    #[test]
    fn curved_terms() {
        // Phi = E[f g] - E[f^2] + E[g^2] on [0,1]: unique saddle at 0
        let s = ProbSpace::uniform(2);
        let bx = ConvexSetRep::boxed(RandVar::zeros(&s), RandVar::constant(&s, 1.0)).unwrap();
        let k = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        let inst = SaddleInstance::new(
            bx.clone(),
            bx,
            k,
            Some(Expr::parse("-x^2").unwrap()),
            Some(Expr::parse("x^2").unwrap()),
        )
        .unwrap();
        let cert = solve_saddle(&inst, 1e-7).unwrap();
        assert!(cert.gap <= 1e-7 && cert.gap >= -1e-12);
        let bad = SaddleInstance::new(
            inst.c.clone(),
            inst.d.clone(),
            inst.kernel.clone(),
            Some(Expr::parse("x^2").unwrap()),
            None,
        );
        assert!(matches!(bad, Err(Error::ConvexityViolation(_))));
    }

    #[test]
    fn direct_sum_fidelity() {
        let inst = pennies();
        let s = inst.space().clone();
        let sum = direct_sum(&s);
        let (f, g) = (rv(&s, &[0.2, 0.8]), rv(&s, &[0.9, 0.1]));
        let h = oplus(&f, &g, &sum).unwrap();
        assert_eq!(inst.value_on_sum(&h, &sum).unwrap(), inst.value(&f, &g).unwrap());
    }

    #[test]
    fn kkm_route_agrees() {
        let inst = pennies();
        let s = inst.space().clone();
        let verts = [rv(&s, &[1.0, 0.0]), rv(&s, &[0.0, 1.0])];
        let mut pairs = vec![];
        for a in &verts {
            for b in &verts {
                pairs.push((a.clone(), b.clone()));
            }
        }
        let (sum, fam) = build_g_family(&inst, &pairs).unwrap();
        let vertices = pairs.iter().map(|(a, b)| oplus(a, b, &sum).unwrap()).collect();
        let kkm = KkmInstance::from_convex(vertices, fam).unwrap();
        let sol = sperner_solve(&kkm, 1e-7).unwrap();
        let h = RandVar::new(sum.result.clone(), sol.point).unwrap();
        let (f, g) = sum.split(&h).unwrap();
        assert!(verify_saddle(&inst, &f, &g, 1e-5).unwrap().ok);
    }
}
