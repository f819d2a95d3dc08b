//! Excess-demand equilibria: find x0 in C with F(x0, y) <= 0 for all y in D,
//! where F(x, y) = E[Delta(x) y] on the space of goods.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::ConvexSetRep;
use crate::kkm::{sperner_solve, KkmInstance, KkmSet};
use crate::measure::{weighted_dot, ProbSpace, RandVar};

/// Lower bound on every price in the truncated simplex.
pub const DEFAULT_ETA: f64 = 1e-6;
pub const WALRAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub endowment: Vec<f64>,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobbDouglasEconomy {
    pub goods: usize,
    pub agents: Vec<Agent>,
}

impl CobbDouglasEconomy {
    pub fn new(goods: usize, agents: Vec<Agent>) -> Result<Self> {
        let econ = CobbDouglasEconomy { goods, agents };
        econ.validate()?;
        Ok(econ)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.goods;
        if d == 0 || self.agents.is_empty() {
            return Err(Error::InvalidInput("economy needs goods and agents".into()));
        }
        let mut total = vec![0.0; d];
        for (k, a) in self.agents.iter().enumerate() {
            for v in [&a.endowment, &a.exponents] {
                if v.len() != d {
                    return Err(Error::LengthMismatch { expected: d, got: v.len() });
                }
                if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                    return Err(Error::NegativeInput(*x));
                }
            }
            let s: f64 = a.exponents.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("agent {k} exponents sum to {s}, not 1")));
            }
            for (t, e) in total.iter_mut().zip(&a.endowment) {
                *t += e;
            }
        }
        if let Some(j) = total.iter().position(|t| *t <= 0.0) {
            return Err(Error::InvalidInput(format!("aggregate endowment of good {j} is zero")));
        }
        Ok(())
    }

    fn totals(&self) -> Vec<f64> {
        (0..self.goods).map(|j| self.agents.iter().map(|a| a.endowment[j]).sum()).collect()
    }

    fn incomes(&self, p: &[f64]) -> Vec<f64> {
        self.agents.iter().map(|a| a.endowment.iter().zip(p).map(|(e, q)| e * q).sum()).collect()
    }

    /// p_j Delta_j(p), which stays finite on the boundary of the simplex.
    fn expenditure_gap(&self, p: &[f64]) -> Vec<f64> {
        let inc = self.incomes(p);
        let tot = self.totals();
        (0..self.goods)
            .map(|j| {
                let spend: f64 = self.agents.iter().zip(&inc).map(|(a, m)| a.exponents[j] * m).sum();
                spend - p[j] * tot[j]
            })
            .collect()
    }
}

/// Delta_j(p) = sum_i alpha_ij (p . e_i) / p_j - sum_i e_ij.
pub fn excess_demand(econ: &CobbDouglasEconomy, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != econ.goods {
        return Err(Error::LengthMismatch { expected: econ.goods, got: p.len() });
    }
    if let Some(q) = p.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
        return Err(Error::Domain(format!("price {q} is not strictly positive")));
    }
    Ok(econ.expenditure_gap(p).iter().zip(p).map(|(g, q)| g / q).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExcessDemand {
    CobbDouglas(CobbDouglasEconomy),
    /// Delta(x) = K x + a.
    Affine { k: Vec<Vec<f64>>, a: Vec<f64> },
}

impl ExcessDemand {
    pub fn goods(&self) -> usize {
        match self {
            ExcessDemand::CobbDouglas(e) => e.goods,
            ExcessDemand::Affine { a, .. } => a.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            ExcessDemand::CobbDouglas(e) => excess_demand(e, x),
            ExcessDemand::Affine { k, a } => {
                if x.len() != a.len() {
                    return Err(Error::LengthMismatch { expected: a.len(), got: x.len() });
                }
                Ok(k.iter().zip(a).map(|(row, c)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() + c).collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExcessDemandInstance {
    pub c: ConvexSetRep,
    pub d: ConvexSetRep,
    pub delta: ExcessDemand,
    /// Truncation of the price simplex, when C and D were built from it.
    pub eta: Option<f64>,
}

/// conv{eta + (1 - d eta) e_j}, the price simplex with every price at least eta.
pub fn truncated_simplex(space: &Arc<ProbSpace>, eta: f64) -> Result<ConvexSetRep> {
    let d = space.len();
    if !(eta >= 0.0) || eta * d as f64 >= 1.0 {
        return Err(Error::InvalidInput(format!("truncation {eta} leaves an empty simplex")));
    }
    let gens = (0..d)
        .map(|j| {
            let mut v = vec![eta; d];
            v[j] = 1.0 - (d - 1) as f64 * eta;
            RandVar::new(space.clone(), v)
        })
        .collect::<Result<Vec<_>>>()?;
    ConvexSetRep::polytope(gens)
}

impl ExcessDemandInstance {
    pub fn new(c: ConvexSetRep, d: ConvexSetRep, delta: ExcessDemand) -> Result<Self> {
        if !crate::measure::same_space(c.space(), d.space()) {
            return Err(Error::SpaceMismatch);
        }
        if delta.goods() != c.space().len() {
            return Err(Error::LengthMismatch { expected: c.space().len(), got: delta.goods() });
        }
        if let ExcessDemand::Affine { k, .. } = &delta {
            if k.len() != delta.goods() || k.iter().any(|r| r.len() != delta.goods()) {
                return Err(Error::InvalidInput("kernel must be square in the number of goods".into()));
            }
        }
        let Some(net) = d.vertex_net() else {
            return Err(Error::InvalidInput("D must be a polytope or a small box".into()));
        };
        for v in &net {
            if !c.contains(v, 1e-9)? {
                return Err(Error::Hypothesis { message: "D is not contained in C".into(), witness: v.values().to_vec() });
            }
        }
        Ok(ExcessDemandInstance { c, d, delta, eta: None })
    }

    /// C = D = truncated price simplex over goods weighted uniformly.
    pub fn on_price_simplex(delta: ExcessDemand, eta: f64) -> Result<Self> {
        let space = ProbSpace::uniform(delta.goods());
        let s = truncated_simplex(&space, eta)?;
        let mut inst = ExcessDemandInstance::new(s.clone(), s, delta)?;
        inst.eta = Some(eta);
        Ok(inst)
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        self.c.space()
    }

    /// F(x, y) = E[Delta(x) y].
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(weighted_dot(self.space().probs(), &self.delta.eval(x)?, y))
    }

    /// F(y, y), with p_j Delta_j(p) continued to zero prices.
    fn diagonal(&self, y: &[f64]) -> Result<f64> {
        match &self.delta {
            ExcessDemand::CobbDouglas(e) if y.len() == e.goods && y.iter().all(|v| *v >= 0.0) => {
                Ok(self.space().probs().iter().zip(e.expenditure_gap(y)).map(|(w, g)| w * g).sum())
            }
            _ => self.value(y, y),
        }
    }

    /// Samples D for a point with F(y, y) > WALRAS_TOL.
    pub fn check_hypotheses(&self, samples: usize, seed: u64) -> Result<()> {
        let net = self.d.vertex_net().expect("checked at construction");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.space().len();
        for s in 0..samples + net.len() {
            let y: Vec<f64> = if s < net.len() {
                net[s].values().to_vec()
            } else {
                let w: Vec<f64> = (0..net.len()).map(|_| -rng.gen::<f64>().ln()).collect();
                let tot: f64 = w.iter().sum();
                (0..n).map(|i| net.iter().zip(&w).map(|(v, wk)| wk / tot * v.values()[i]).sum()).collect()
            };
            let verdict = walras_check(self, &y)?;
            if !verdict.holds {
                return Err(Error::Hypothesis { message: format!("F(y,y) = {:e} > 0", verdict.value), witness: y });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WalrasVerdict {
    pub holds: bool,
    pub value: f64,
    /// y had a zero price and the boundary continuation was used.
    pub boundary: bool,
    pub witness: Option<Vec<f64>>,
}

pub fn walras_check(inst: &ExcessDemandInstance, y: &[f64]) -> Result<WalrasVerdict> {
    let value = inst.diagonal(y)?;
    let holds = value <= WALRAS_TOL;
    Ok(WalrasVerdict {
        holds,
        value,
        boundary: y.iter().any(|v| *v == 0.0),
        witness: (!holds).then(|| y.to_vec()),
    })
}

/// F_y = {x : F(x, y) <= 0}.
struct LowerSet {
    inst: ExcessDemandInstance,
    y: Vec<f64>,
}

impl KkmSet for LowerSet {
    fn member(&self, x: &[f64]) -> Result<bool> {
        let z = self.inst.delta.eval(x)?;
        let p = self.inst.space().probs();
        let scale: f64 = (0..z.len()).map(|j| p[j] * (z[j] * self.y[j]).abs()).sum();
        // F(y, y) = 0 exactly in theory, so allow rounding at the vertices
        Ok(weighted_dot(p, &z, &self.y) <= 1e-12 * (1.0 + scale))
    }

    fn violation(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inst.value(x, &self.y)?.max(0.0))
    }
}

/// The family {F_y : y a vertex of D}, indexed by the vertices themselves.
pub fn kkm_instance(inst: &ExcessDemandInstance) -> Result<KkmInstance> {
    let net = inst.d.vertex_net().expect("checked at construction");
    let sets = net
        .iter()
        .map(|y| Box::new(LowerSet { inst: inst.clone(), y: y.values().to_vec() }) as Box<dyn KkmSet>)
        .collect();
    KkmInstance::new(net, sets)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub x0: Vec<f64>,
    /// max over the vertices y of D of F(x0, y).
    pub max_violation: f64,
    pub eta: Option<f64>,
    pub net_size: usize,
    pub kkm_rounds: usize,
    pub kkm_pivots: usize,
    pub mesh: Option<f64>,
}

pub fn solve_excess_demand(inst: &ExcessDemandInstance, tol: f64) -> Result<(RandVar, EquilibriumReport)> {
    inst.check_hypotheses(64, 0x5eed)?;
    let kkm = kkm_instance(inst)?;
    let sol = sperner_solve(&kkm, tol)?;
    let x0 = RandVar::new(inst.space().clone(), sol.point)?;
    if !inst.c.contains(&x0, tol)? {
        return Err(Error::Hypothesis { message: "KKM point left C".into(), witness: x0.values().to_vec() });
    }
    let mut max_violation = f64::NEG_INFINITY;
    for y in kkm.vertices() {
        max_violation = max_violation.max(inst.value(x0.values(), y.values())?);
    }
    let report = EquilibriumReport {
        x0: x0.values().to_vec(),
        max_violation,
        eta: inst.eta,
        net_size: kkm.dim(),
        kkm_rounds: sol.rounds,
        kkm_pivots: sol.pivots,
        mesh: sol.mesh_history.last().copied(),
    };
    Ok((x0, report))
}

/// Random economy with positive endowments and exponents.
pub fn random_economy<R: Rng>(rng: &mut R, goods: usize, agents: usize) -> CobbDouglasEconomy {
    let agents = (0..agents)
        .map(|_| {
            let endowment = (0..goods).map(|_| rng.gen_range(0.1..2.0)).collect();
            let raw: Vec<f64> = (0..goods).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut exponents: Vec<f64> = raw.iter().map(|r| r / s).collect();
            let head: f64 = exponents[..goods - 1].iter().sum();
            exponents[goods - 1] = 1.0 - head;
            Agent { endowment, exponents }
        })
        .collect();
    CobbDouglasEconomy { goods, agents }
}
