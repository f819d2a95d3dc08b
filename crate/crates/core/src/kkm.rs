//! Finite KKM: Sperner labelings on the simplex spanned by x_1..x_d, the
//! sampled KKM-property check, and intersections with a bounded anchor.
//!
//! Lattice points of mesh N are stored in reversed cumulative coordinates
//! z_i = k_{i+1} + ... + k_d (i = 1..d-1), so N >= z_1 >= ... >= z_{d-1} >= 0
//! and the face conv{x_1..x_k} is {z_k = ... = z_{d-1} = 0}. Cells are Kuhn
//! simplices (base b, permutation pi). The solver follows the door path
//! that starts at x_1 and climbs through the faces conv{x_1..x_k}, which
//! ends in a completely labeled cell of the whole simplex.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::ConvexSetRep;
use crate::measure::{weighted_dist, ProbSpace, RandVar};

pub const MAX_PIVOTS: usize = 10_000_000;
const MAX_ROUNDS: usize = 400;
const LOCAL_MESH: i64 = 32;
const LOCAL_SCALE: f64 = 8.0;

/// A closed set queried through a membership oracle.
pub trait KkmSet: Send + Sync {
    fn member(&self, x: &[f64]) -> Result<bool>;
    /// Nonnegative violation, zero on the set.
    fn violation(&self, x: &[f64]) -> Result<f64>;
}

impl KkmSet for ConvexSetRep {
    fn member(&self, x: &[f64]) -> Result<bool> {
        self.contains_slice(x, 0.0)
    }

    fn violation(&self, x: &[f64]) -> Result<f64> {
        if self.contains_slice(x, 0.0)? {
            return Ok(0.0);
        }
        let y = self.project_slice(x, 1e-12)?;
        Ok(weighted_dist(self.space().probs(), x, &y))
    }
}

pub struct KkmInstance {
    space: Arc<ProbSpace>,
    vertices: Vec<RandVar>,
    sets: Vec<Box<dyn KkmSet>>,
}

impl std::fmt::Debug for KkmInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KkmInstance").field("vertices", &self.vertices).finish_non_exhaustive()
    }
}

impl KkmInstance {
    pub fn new(vertices: Vec<RandVar>, sets: Vec<Box<dyn KkmSet>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidInput("KKM instance needs at least one vertex".into()));
        };
        if sets.len() != vertices.len() {
            return Err(Error::LengthMismatch { expected: vertices.len(), got: sets.len() });
        }
        for v in &vertices {
            first.check_same_space(v)?;
        }
        Ok(KkmInstance { space: first.space().clone(), vertices, sets })
    }

    pub fn from_convex(vertices: Vec<RandVar>, sets: Vec<ConvexSetRep>) -> Result<Self> {
        if let Some(v) = vertices.first() {
            if sets.iter().any(|s| !crate::measure::same_space(s.space(), v.space())) {
                return Err(Error::SpaceMismatch);
            }
        }
        let boxed = sets.into_iter().map(|s| Box::new(s) as Box<dyn KkmSet>).collect();
        KkmInstance::new(vertices, boxed)
    }

    /// Unit vectors e_1..e_d of a d-atom space as vertices.
    pub fn canonical(space: &Arc<ProbSpace>, sets: Vec<ConvexSetRep>) -> Result<Self> {
        let d = space.len();
        let vertices = (0..d)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                RandVar::new(space.clone(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        KkmInstance::from_convex(vertices, sets)
    }

    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn vertices(&self) -> &[RandVar] {
        &self.vertices
    }

    /// sum_i lambda_i x_i.
    pub fn point(&self, lambda: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.space.len()];
        for (l, v) in lambda.iter().zip(&self.vertices) {
            if *l != 0.0 {
                for (xi, vi) in x.iter_mut().zip(v.values()) {
                    *xi += l * vi;
                }
            }
        }
        x
    }

    pub fn violations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.sets.iter().map(|s| s.violation(x)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KkmVerdict {
    pub passed: bool,
    /// A point of conv{x_i : i in subset} outside every F(x_i), i in subset.
    pub witness: Option<Vec<f64>>,
    pub subset: Vec<usize>,
    pub samples: usize,
}

/// Samples convex combinations over random vertex subsets and checks that
/// each lies in the union of the corresponding sets.
pub fn check_kkm_property(inst: &KkmInstance, samples: usize, seed: u64) -> Result<KkmVerdict> {
    let d = inst.dim();
    let fail = |x: Vec<f64>, subset: Vec<usize>| KkmVerdict { passed: false, witness: Some(x), subset, samples };
    for i in 0..d {
        let x = inst.vertices[i].values().to_vec();
        if !inst.sets[i].member(&x)? {
            return Ok(fail(x, vec![i]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut subset: Vec<usize> = (0..d).filter(|_| rng.gen::<bool>()).collect();
        if subset.is_empty() {
            subset.push(rng.gen_range(0..d));
        }
        let w: Vec<f64> = subset.iter().map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut lambda = vec![0.0; d];
        for (i, wi) in subset.iter().zip(&w) {
            lambda[*i] = wi / total;
        }
        let x = inst.point(&lambda);
        let mut covered = false;
        for i in &subset {
            if inst.sets[*i].member(&x)? {
                covered = true;
                break;
            }
        }
        if !covered {
            return Ok(fail(x, subset));
        }
    }
    Ok(KkmVerdict { passed: true, witness: None, subset: vec![], samples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    idx: usize,
    genuine: bool,
}

/// Lattice of mesh n on the sub-simplex with vertices base + scale e_i.
struct Frame<'a> {
    inst: &'a KkmInstance,
    base: Vec<f64>,
    scale: f64,
    n: i64,
    cache: HashMap<Vec<i64>, Label>,
    pivots: &'a mut usize,
    log: Option<&'a mut Vec<LabelStep>>,
}

impl Frame<'_> {
    fn local_counts(&self, z: &[i64]) -> Vec<i64> {
        let d = self.inst.dim();
        let mut k = vec![0i64; d];
        if d == 1 {
            k[0] = self.n;
            return k;
        }
        k[0] = self.n - z[0];
        for j in 1..d - 1 {
            k[j] = z[j - 1] - z[j];
        }
        k[d - 1] = z[d - 2];
        k
    }

    fn global_lambda(&self, z: &[i64]) -> Vec<f64> {
        let k = self.local_counts(z);
        k.iter()
            .zip(&self.base)
            .map(|(ki, bi)| bi + self.scale * (*ki as f64 / self.n as f64))
            .collect()
    }

    fn label(&mut self, z: &[i64]) -> Result<Label> {
        if let Some(l) = self.cache.get(z) {
            return Ok(*l);
        }
        let k = self.local_counts(z);
        let x = self.inst.point(&self.global_lambda(z));
        let support: Vec<usize> = (0..k.len()).filter(|i| k[*i] > 0).collect();
        let mut found = None;
        for i in &support {
            if self.inst.sets[*i].member(&x)? {
                found = Some(Label { idx: *i, genuine: true });
                break;
            }
        }
        let label = match found {
            Some(l) => l,
            None if self.scale >= 1.0 => return Err(Error::KkmViolation { witness: x }),
            // boundary of a local sub-simplex: any admissible label keeps
            // the Sperner condition
            None => Label { idx: support[0], genuine: false },
        };
        if self.log.is_some() {
            let step = LabelStep { lambda: self.global_lambda(z), face: support, label: label.idx, genuine: label.genuine };
            self.log.as_deref_mut().expect("checked").push(step);
        }
        self.cache.insert(z.to_vec(), label);
        Ok(label)
    }

    fn vertex(&self, b: &[i64], perm: &[usize], j: usize) -> Vec<i64> {
        let d = self.inst.dim();
        let mut z = vec![0i64; d.saturating_sub(1)];
        z[..b.len()].copy_from_slice(b);
        for c in &perm[..j] {
            z[*c] += 1;
        }
        z
    }

    fn in_region(&self, b: &[i64], perm: &[usize]) -> bool {
        let m = b.len();
        if m == 0 {
            return true;
        }
        if b[0] > self.n - 1 || b[m - 1] < 0 {
            return false;
        }
        let mut pos = vec![0; m];
        for (p, c) in perm.iter().enumerate() {
            pos[*c] = p;
        }
        for i in 0..m - 1 {
            if b[i] < b[i + 1] || (b[i] == b[i + 1] && pos[i] > pos[i + 1]) {
                return false;
            }
        }
        true
    }

    fn tick(&mut self) -> Result<()> {
        *self.pivots += 1;
        if *self.pivots > MAX_PIVOTS {
            return Err(Error::ResourceExhausted(format!("more than {MAX_PIVOTS} Sperner cells visited")));
        }
        Ok(())
    }

    /// Completely labeled cell reached by door-following from x_1.
    fn completely_labeled(&mut self) -> Result<(Vec<Vec<i64>>, Vec<Label>)> {
        let d = self.inst.dim();
        let mut b: Vec<i64> = vec![];
        let mut perm: Vec<usize> = vec![];
        let mut labs = vec![self.label(&vec![0; d - 1])?];
        let mut enter = 0;
        let mut came_down = false;
        loop {
            self.tick()?;
            let k = labs.len();
            let m = k - 1;
            let complete = {
                let mut seen = vec![false; k];
                labs.iter().all(|l| l.idx < k && !std::mem::replace(&mut seen[l.idx], true))
            };
            let drop = if came_down {
                came_down = false;
                labs.iter().position(|l| l.idx == k - 1).expect("complete cell")
            } else if complete {
                if k == d {
                    let verts = (0..k).map(|j| self.vertex(&b, &perm, j)).collect();
                    return Ok((verts, labs));
                }
                let mut z = self.vertex(&b, &perm, m);
                z[m] += 1;
                b.push(0);
                perm.push(m);
                labs.push(self.label(&z)?);
                enter = k;
                continue;
            } else {
                let target = labs[enter].idx;
                match (0..k).find(|j| *j != enter && labs[*j].idx == target) {
                    Some(j) => j,
                    None => {
                        return Err(Error::NonConvergent("Sperner path lost its door label".into()));
                    }
                }
            };
            if drop == m && m >= 1 && perm[m - 1] == m - 1 && b[m - 1] == 0 {
                b.pop();
                perm.pop();
                labs.pop();
                came_down = true;
                continue;
            }
            if drop == 0 {
                b[perm[0]] += 1;
                perm.rotate_left(1);
                labs.remove(0);
                let z = self.vertex(&b, &perm, m);
                labs.push(self.label(&z)?);
                enter = m;
            } else if drop == m {
                b[perm[m - 1]] -= 1;
                perm.rotate_right(1);
                labs.pop();
                let z = self.vertex(&b, &perm, 0);
                labs.insert(0, self.label(&z)?);
                enter = 0;
            } else {
                perm.swap(drop - 1, drop);
                let z = self.vertex(&b, &perm, drop);
                labs[drop] = self.label(&z)?;
                enter = drop;
            }
            if !self.in_region(&b, &perm) {
                return Err(Error::NonConvergent("Sperner path left the simplex; labeling is not admissible".into()));
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KkmSolution {
    pub point: Vec<f64>,
    /// Barycentric coordinates with respect to x_1..x_d.
    pub lambda: Vec<f64>,
    /// Violation of each F(x_i) at the point.
    pub violations: Vec<f64>,
    /// Lattice spacing, in barycentric units, of each accepted round.
    pub mesh_history: Vec<f64>,
    pub rounds: usize,
    pub pivots: usize,
}

/// One vertex labeling made by the solver.
#[derive(Debug, Clone, Serialize)]
pub struct LabelStep {
    pub lambda: Vec<f64>,
    /// Indices of the face of the current lattice the vertex lies on.
    pub face: Vec<usize>,
    pub label: usize,
    /// False for boundary labels of a local window, which assert no membership.
    pub genuine: bool,
}

/// A point within tol of every F(x_i).
pub fn sperner_solve(inst: &KkmInstance, tol: f64) -> Result<KkmSolution> {
    solve(inst, tol, None)
}

/// sperner_solve together with every labeling it made.
pub fn sperner_solve_logged(inst: &KkmInstance, tol: f64) -> Result<(KkmSolution, Vec<LabelStep>)> {
    let mut log = Vec::new();
    let sol = solve(inst, tol, Some(&mut log))?;
    Ok((sol, log))
}

/// Corner sub-simplex {lambda >= base} covering every lambda within w of
/// center coordinatewise. Reaches the faces the center is close to.
fn window(center: &[f64], w: f64) -> (Vec<f64>, f64) {
    if w >= 1.0 {
        return (vec![0.0; center.len()], 1.0);
    }
    let base: Vec<f64> = center.iter().map(|c| (c - w).max(0.0)).collect();
    let scale = 1.0 - base.iter().sum::<f64>();
    (base, scale)
}

fn solve(inst: &KkmInstance, tol: f64, mut log: Option<&mut Vec<LabelStep>>) -> Result<KkmSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let d = inst.dim();
    let bary = vec![1.0 / d as f64; d];
    let x = inst.point(&bary);
    let viol = inst.violations(&x)?;
    let mut pivots = 0;
    if viol.iter().all(|v| *v <= tol) {
        return Ok(KkmSolution { point: x, lambda: bary, violations: viol, mesh_history: vec![], rounds: 0, pivots });
    }
    if d == 1 {
        return Err(Error::KkmViolation { witness: x });
    }
    let mut n_global = 8 * d as i64;
    let mut center = bary;
    let mut w = 1.0f64;
    let mut n = n_global;
    let mut mesh_history = vec![];
    for _ in 0..MAX_ROUNDS {
        let (base, scale) = window(&center, w);
        let mut frame = Frame { inst, base, scale, n, cache: HashMap::new(), pivots: &mut pivots, log: log.as_deref_mut() };
        let (verts, labs) = frame.completely_labeled()?;
        if labs.iter().any(|l| !l.genuine) {
            // the local window missed the intersection; widen it
            if w * LOCAL_SCALE >= 1.0 {
                n_global *= 2;
                w = 1.0;
                n = n_global;
            } else {
                w *= LOCAL_SCALE;
            }
            continue;
        }
        let lambdas: Vec<Vec<f64>> = verts.iter().map(|z| frame.global_lambda(z)).collect();
        let lambda: Vec<f64> = (0..d).map(|i| lambdas.iter().map(|l| l[i]).sum::<f64>() / d as f64).collect();
        let x = inst.point(&lambda);
        let viol = inst.violations(&x)?;
        mesh_history.push(scale / n as f64);
        if viol.iter().all(|v| *v <= tol) {
            let rounds = mesh_history.len();
            return Ok(KkmSolution { point: x, lambda, violations: viol, mesh_history, rounds, pivots });
        }
        center = lambda;
        w = (LOCAL_SCALE * scale / (n * d as i64) as f64).min(1.0);
        n = LOCAL_MESH;
    }
    Err(Error::ResourceExhausted(format!("no point within {tol:e} after {MAX_ROUNDS} refinement rounds")))
}

/// Point of anchor ∩ F_1 ∩ ... ∩ F_m, or the smallest failing subfamily found
/// (singletons, then pairs, then the shortest failing prefix).
pub fn intersect_with_compact(family: &[ConvexSetRep], anchor: &ConvexSetRep, tol: f64) -> Result<RandVar> {
    if !anchor.is_bounded() {
        return Err(Error::InvalidInput("anchor set must be bounded".into()));
    }
    for f in family {
        if !crate::measure::same_space(f.space(), anchor.space()) {
            return Err(Error::SpaceMismatch);
        }
    }
    let start = anchor.any_point(tol)?;
    let attempt = |idx: &[usize]| -> Result<std::result::Result<Vec<f64>, f64>> {
        let mut parts = vec![anchor.clone()];
        parts.extend(idx.iter().map(|i| family[*i].clone()));
        let set = ConvexSetRep::intersection(parts.clone())?;
        match set.project_slice(start.values(), tol) {
            Ok(x) => Ok(Ok(x)),
            Err(Error::NonConvergent(_)) | Err(Error::EmptySet(_)) => Ok(Err(separation(&parts, start.values(), tol))),
            Err(e) => Err(e),
        }
    };
    let m = family.len();
    for i in 0..m {
        if let Err(sep) = attempt(&[i])? {
            return Err(Error::EmptyIntersection { indices: vec![i], separation: sep });
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            if let Err(sep) = attempt(&[i, j])? {
                return Err(Error::EmptyIntersection { indices: vec![i, j], separation: sep });
            }
        }
    }
    let all: Vec<usize> = (0..m).collect();
    match attempt(&all)? {
        Ok(x) => Ok(start.with_values(x)),
        Err(sep_all) => {
            for k in 3..m {
                if let Err(sep) = attempt(&all[..k])? {
                    return Err(Error::EmptyIntersection { indices: all[..k].to_vec(), separation: sep });
                }
            }
            Err(Error::EmptyIntersection { indices: all, separation: sep_all })
        }
    }
}

/// Largest distance from the cyclic-projection limit point to any part.
fn separation(parts: &[ConvexSetRep], start: &[f64], tol: f64) -> f64 {
    let mut x = start.to_vec();
    for _ in 0..2000 {
        for p in parts {
            if let Ok(y) = p.project_slice(&x, tol) {
                x = y;
            }
        }
    }
    parts
        .iter()
        .filter_map(|p| p.project_slice(&x, tol).ok().map(|y| weighted_dist(p.space().probs(), &x, &y)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::FunctionalSpec;

    fn rv(s: &Arc<ProbSpace>, v: &[f64]) -> RandVar {
        RandVar::new(s.clone(), v.to_vec()).unwrap()
    }

    fn intervals(hi1: f64, lo2: f64) -> KkmInstance {
        let s = ProbSpace::uniform(1);
        let a = ConvexSetRep::boxed(rv(&s, &[0.0]), rv(&s, &[hi1])).unwrap();
        let b = ConvexSetRep::boxed(rv(&s, &[lo2]), rv(&s, &[1.0])).unwrap();
        KkmInstance::from_convex(vec![rv(&s, &[0.0]), rv(&s, &[1.0])], vec![a, b]).unwrap()
    }

    #[test]
    fn interval_cover_passes_and_gap_fails() {
        assert!(check_kkm_property(&intervals(0.6, 0.4), 1000, 7).unwrap().passed);
        let v = check_kkm_property(&intervals(0.6, 0.7), 1000, 7).unwrap();
        assert!(!v.passed);
        let w = v.witness.unwrap()[0];
        assert!(w > 0.6 && w < 0.7, "{w}");
    }

    #[test]
    fn singleton_instance() {
        let s = ProbSpace::uniform(1);
        let ok = KkmInstance::from_convex(
            vec![rv(&s, &[1.0])],
            vec![ConvexSetRep::boxed(rv(&s, &[0.0]), rv(&s, &[2.0])).unwrap()],
        )
        .unwrap();
        assert!(check_kkm_property(&ok, 10, 1).unwrap().passed);
        assert_eq!(sperner_solve(&ok, 1e-9).unwrap().point, vec![1.0]);
        let bad = KkmInstance::from_convex(
            vec![rv(&s, &[3.0])],
            vec![ConvexSetRep::boxed(rv(&s, &[0.0]), rv(&s, &[2.0])).unwrap()],
        )
        .unwrap();
        assert!(!check_kkm_property(&bad, 10, 1).unwrap().passed);
    }

    #[test]
    fn interval_intersection() {
        let inst = intervals(0.6, 0.4);
        let sol = sperner_solve(&inst, 1e-9).unwrap();
        assert!(sol.point[0] >= 0.4 - 1e-9 && sol.point[0] <= 0.6 + 1e-9);
    }

    #[test]
    fn narrow_interval_intersection_needs_refinement() {
        let inst = intervals(0.3001, 0.3);
        let sol = sperner_solve(&inst, 1e-10).unwrap();
        assert!(sol.point[0] >= 0.3 - 1e-10 && sol.point[0] <= 0.3001 + 1e-10, "{:?}", sol.point);
        assert!(sol.rounds >= 2);
    }

    #[test]
    fn triangle_quarter_sets() {
        let s = ProbSpace::uniform(3);
        let sets = (0..3)
            .map(|i| {
                let mut c = vec![0.0; 3];
                c[i] = -3.0;
                ConvexSetRep::sublevel(FunctionalSpec::linear(rv(&s, &c)), -0.25).unwrap()
            })
            .collect();
        let inst = KkmInstance::canonical(&s, sets).unwrap();
        assert!(check_kkm_property(&inst, 2000, 3).unwrap().passed);
        let sol = sperner_solve(&inst, 1e-9).unwrap();
        assert!(sol.violations.iter().all(|v| *v <= 1e-9));
    }

    #[test]
    fn off_center_corner_sets() {
        // F_i = {p : p_i >= q_i} with sum q = 1 meets only at p = q
        let s = ProbSpace::uniform(4);
        let q = [0.1, 0.2, 0.3, 0.4];
        let sets = (0..4)
            .map(|i| {
                let mut c = vec![0.0; 4];
                c[i] = -4.0;
                ConvexSetRep::sublevel(FunctionalSpec::linear(rv(&s, &c)), -q[i]).unwrap()
            })
            .collect();
        let inst = KkmInstance::canonical(&s, sets).unwrap();
        let sol = sperner_solve(&inst, 1e-8).unwrap();
        for i in 0..4 {
            assert!((sol.point[i] - q[i]).abs() < 1e-6, "{:?}", sol.point);
        }
        let h = &sol.mesh_history;
        for k in 1..h.len() {
            assert!(h[k] <= h[0] * (4.0f64 / 5.0).powi(k as i32));
        }
    }

    #[test]
    fn uncovered_vertex_is_a_violation() {
        let inst = intervals(0.6, 0.7);
        match sperner_solve(&inst, 1e-9) {
            Err(Error::KkmViolation { witness }) => assert!(witness[0] > 0.6 && witness[0] < 0.7),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn compact_intersections() {
        let s = ProbSpace::uniform(2);
        let anchor = ConvexSetRep::boxed(rv(&s, &[0.0, 0.0]), rv(&s, &[1.0, 1.0])).unwrap();
        let lo = ConvexSetRep::sublevel(FunctionalSpec::linear(RandVar::constant(&s, -1.0)), -0.4).unwrap();
        let hi = ConvexSetRep::sublevel(FunctionalSpec::linear(RandVar::constant(&s, 1.0)), 0.6).unwrap();
        let p = intersect_with_compact(&[lo, hi], &anchor, 1e-8).unwrap();
        let m = crate::measure::expectation(&p);
        assert!((0.4 - 1e-8..=0.6 + 1e-8).contains(&m));

        let a = ConvexSetRep::boxed(rv(&s, &[0.0, 0.0]), rv(&s, &[0.2, 0.2])).unwrap();
        let b = ConvexSetRep::boxed(rv(&s, &[0.5, 0.5]), rv(&s, &[0.9, 0.9])).unwrap();
        match intersect_with_compact(&[a.clone(), b], &anchor, 1e-8) {
            Err(Error::EmptyIntersection { indices, separation }) => {
                assert_eq!(indices, vec![0, 1]);
                assert!(separation > 0.1);
            }
            other => panic!("expected empty intersection, got {other:?}"),
        }

        let inner = ConvexSetRep::boxed(rv(&s, &[0.1, 0.1]), rv(&s, &[0.15, 0.2])).unwrap();
        let p = intersect_with_compact(&[a, inner.clone()], &anchor, 1e-9).unwrap();
        assert!(inner.contains(&p, 1e-9).unwrap());
    }
}
