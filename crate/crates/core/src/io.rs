//! JSON encodings for spaces, random variables, sets, functionals and the
//! per-command instance files.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::equilibrium::{CobbDouglasEconomy, ExcessDemand, ExcessDemandInstance, DEFAULT_ETA};
use crate::error::{Error, Result};
use crate::expr::{parse_functional, Expr};
use crate::functional::FunctionalSpec;
use crate::geom::ConvexSetRep;
use crate::kkm::KkmInstance;
use crate::komlos::{ExtractState, SequenceSpec};
use crate::measure::{metric_d, ProbSpace, RandVar, METRIC_TOL};
use crate::saddle::SaddleInstance;

pub const SCHEMA: u32 = 1;
const PROB_SUM_TOL: f64 = 1e-9;

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| bad(format!("missing field {key:?}")))
}

/// A real given either as a JSON number or a decimal string.
pub fn parse_real(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad(format!("{n} is not a real"))),
        Value::String(s) => s.trim().parse::<f64>().map_err(|_| bad(format!("{s:?} is not a decimal"))),
        _ => Err(bad(format!("expected a number, got {v}"))),
    }
}

fn parse_reals(v: &Value) -> Result<Vec<f64>> {
    v.as_array().ok_or_else(|| bad("expected an array of numbers"))?.iter().map(parse_real).collect()
}

fn parse_matrix(v: &Value) -> Result<Vec<Vec<f64>>> {
    v.as_array().ok_or_else(|| bad("expected a matrix"))?.iter().map(parse_reals).collect()
}

/// `{"atoms": [...], "probs": [...]}`; the probabilities are renormalized to
/// sum to exactly 1 once they pass validation.
pub fn parse_space(v: &Value) -> Result<Arc<ProbSpace>> {
    let atoms = field(v, "atoms")?
        .as_array()
        .ok_or_else(|| bad("atoms must be an array"))?
        .iter()
        .map(|a| match a {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(bad("atom ids must be strings")),
        })
        .collect::<Result<Vec<_>>>()?;
    let probs = parse_reals(field(v, "probs")?)?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(bad(format!("probabilities sum to {total}, not 1")));
    }
    if probs.len() != atoms.len() {
        return Err(Error::LengthMismatch { expected: atoms.len(), got: probs.len() });
    }
    if (total - 1.0).abs() <= METRIC_TOL {
        return ProbSpace::new(atoms, probs);
    }
    ProbSpace::from_masses(atoms, &probs)
}

pub fn space_json(s: &ProbSpace) -> Value {
    json!({ "atoms": s.atom_ids(), "probs": s.probs().iter().map(|p| p.to_string()).collect::<Vec<_>>() })
}

/// An array in atom order, `{"values": ...}`, or an object keyed by atom id.
pub fn parse_randvar(space: &Arc<ProbSpace>, v: &Value) -> Result<RandVar> {
    let v = v.get("values").unwrap_or(v);
    let values = match v {
        Value::Array(_) => parse_reals(v)?,
        Value::Object(m) => {
            if let Some(k) = m.keys().find(|k| !space.atom_ids().contains(k)) {
                return Err(bad(format!("unknown atom {k:?}")));
            }
            space
                .atom_ids()
                .iter()
                .map(|id| m.get(id).map(parse_real).unwrap_or_else(|| Err(bad(format!("no value for atom {id:?}")))))
                .collect::<Result<Vec<_>>>()?
        }
        _ => return Err(bad("expected a random variable")),
    };
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(bad(format!("value {x} is not finite")));
    }
    RandVar::new(space.clone(), values)
}

fn parse_randvars(space: &Arc<ProbSpace>, v: &Value) -> Result<Vec<RandVar>> {
    v.as_array().ok_or_else(|| bad("expected an array of random variables"))?.iter().map(|x| parse_randvar(space, x)).collect()
}

fn parse_expr(v: &Value) -> Result<Expr> {
    v.as_str().ok_or_else(|| bad("expression must be a string")).and_then(parse_functional)
}

/// A string is a pointwise functional E[phi(f)]; objects name the other kinds.
pub fn parse_functional_spec(space: &Arc<ProbSpace>, v: &Value) -> Result<FunctionalSpec> {
    if let Value::String(_) = v {
        return Ok(FunctionalSpec::pointwise(space, parse_expr(v)?));
    }
    let (kind, body) = single_key(v)?;
    match kind {
        "pointwise" => Ok(FunctionalSpec::pointwise(space, parse_expr(body)?)),
        "linear" => Ok(FunctionalSpec::linear(parse_randvar(space, body)?)),
        "quadratic" => FunctionalSpec::quadratic(parse_matrix(field(body, "a")?)?, parse_randvar(space, field(body, "b")?)?),
        "separable" => {
            let terms = field(body, "terms")?
                .as_array()
                .ok_or_else(|| bad("terms must be an array"))?
                .iter()
                .map(|t| if t.is_null() { Ok(None) } else { parse_expr(t).map(Some) })
                .collect::<Result<Vec<_>>>()?;
            let c = match body.get("c") {
                Some(c) => parse_reals(c)?,
                None => vec![0.0; space.len()],
            };
            let constant = body.get("constant").map(parse_real).transpose()?.unwrap_or(0.0);
            FunctionalSpec::separable(space, terms, c, constant)
        }
        other => Err(bad(format!("unknown functional kind {other:?}"))),
    }
}

fn single_key(v: &Value) -> Result<(&str, &Value)> {
    match v.as_object() {
        Some(m) if m.len() == 1 => {
            let (k, b) = m.iter().next().expect("one key");
            Ok((k.as_str(), b))
        }
        _ => Err(bad(format!("expected an object with a single kind key, got {v}"))),
    }
}

pub fn parse_set(space: &Arc<ProbSpace>, v: &Value) -> Result<ConvexSetRep> {
    let (kind, body) = single_key(v)?;
    match kind {
        "polytope" => ConvexSetRep::polytope(parse_randvars(space, field(body, "generators")?)?),
        "box" => ConvexSetRep::boxed(parse_randvar(space, field(body, "lower")?)?, parse_randvar(space, field(body, "upper")?)?),
        "sublevel" => ConvexSetRep::sublevel(
            parse_functional_spec(space, field(body, "functional")?)?,
            parse_real(field(body, "level")?)?,
        ),
        "intersection" => {
            let parts = body.get("parts").unwrap_or(body);
            let parts = parts.as_array().ok_or_else(|| bad("intersection needs an array of parts"))?;
            ConvexSetRep::intersection(parts.iter().map(|p| parse_set(space, p)).collect::<Result<_>>()?)
        }
        other => Err(bad(format!("unknown set kind {other:?}"))),
    }
}

/// `{"space", "terms": [...], "set"?}`; without a set the hull of the terms is used.
pub fn parse_sequence(v: &Value, horizon: Option<usize>) -> Result<(SequenceSpec, ConvexSetRep)> {
    let space = parse_space(field(v, "space")?)?;
    let mut terms = parse_randvars(&space, field(v, "terms")?)?;
    if let Some(h) = horizon {
        if h < terms.len() {
            terms.truncate(h);
        }
    }
    let set = match v.get("set") {
        Some(s) => parse_set(&space, s)?,
        None => ConvexSetRep::polytope(terms.clone())?,
    };
    Ok((SequenceSpec::new(&space, terms)?, set))
}

/// `{"space", "functional", "set"}`.
pub fn parse_minimize(v: &Value) -> Result<(FunctionalSpec, ConvexSetRep)> {
    let space = parse_space(field(v, "space")?)?;
    Ok((parse_functional_spec(&space, field(v, "functional")?)?, parse_set(&space, field(v, "set")?)?))
}

/// `{"space", "vertices", "sets"}`; vertices default to the unit vectors.
pub fn parse_kkm(v: &Value) -> Result<KkmInstance> {
    let space = parse_space(field(v, "space")?)?;
    let sets = field(v, "sets")?
        .as_array()
        .ok_or_else(|| bad("sets must be an array"))?
        .iter()
        .map(|s| parse_set(&space, s))
        .collect::<Result<Vec<_>>>()?;
    match v.get("vertices") {
        Some(vs) => KkmInstance::from_convex(parse_randvars(&space, vs)?, sets),
        None => KkmInstance::canonical(&space, sets),
    }
}

/// `{"space", "c", "d", "kernel", "f_term"?, "g_term"?}`.
pub fn parse_saddle(v: &Value) -> Result<SaddleInstance> {
    let space = parse_space(field(v, "space")?)?;
    let term = |k: &str| v.get(k).filter(|t| !t.is_null()).map(parse_expr).transpose();
    SaddleInstance::new(
        parse_set(&space, field(v, "c")?)?,
        parse_set(&space, field(v, "d")?)?,
        parse_matrix(field(v, "kernel")?)?,
        term("f_term")?,
        term("g_term")?,
    )
}

#[derive(Debug, Deserialize)]
struct EconomyFile {
    economy: CobbDouglasEconomy,
}

/// A Cobb-Douglas `{"economy": {"goods", "agents"}}` or an affine
/// `{"kernel", "offset"}`, on the truncated price simplex unless `c` and `d`
/// are given together with a `space`.
pub fn parse_equilibrium(v: &Value) -> Result<ExcessDemandInstance> {
    let delta = if v.get("economy").is_some() {
        let f: EconomyFile = serde_json::from_value(v.clone()).map_err(|e| bad(format!("economy: {e}")))?;
        f.economy.validate()?;
        ExcessDemand::CobbDouglas(f.economy)
    } else {
        let k = parse_matrix(field(v, "kernel")?)?;
        let a = match v.get("offset") {
            Some(a) => parse_reals(a)?,
            None => vec![0.0; k.len()],
        };
        ExcessDemand::Affine { k, a }
    };
    match (v.get("space"), v.get("c"), v.get("d")) {
        (Some(s), Some(c), Some(d)) => {
            let space = parse_space(s)?;
            ExcessDemandInstance::new(parse_set(&space, c)?, parse_set(&space, d)?, delta)
        }
        (None, None, None) => {
            let eta = v.get("eta").map(parse_real).transpose()?.unwrap_or(DEFAULT_ETA);
            ExcessDemandInstance::on_price_simplex(delta, eta)
        }
        _ => Err(bad("give all of space, c and d, or none of them")),
    }
}

#[derive(Debug, Serialize)]
pub struct TraceLine {
    #[serde(rename = "D")]
    pub d: usize,
    pub end: usize,
    pub u: f64,
    pub gamma: f64,
    pub gap: f64,
    pub weights: Vec<f64>,
    pub metric_d_prev: Option<f64>,
}

/// One JSON line per trace state.
pub fn trace_lines(trace: &[ExtractState]) -> Result<String> {
    let mut out = String::new();
    for (k, st) in trace.iter().enumerate() {
        let prev = if k > 0 { Some(metric_d(&st.g, &trace[k - 1].g)?) } else { None };
        let line = TraceLine {
            d: st.d,
            end: st.end,
            u: st.u,
            gamma: st.gamma,
            gap: st.gap,
            weights: st.w.weights().to_vec(),
            metric_d_prev: prev,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Machine-readable error object.
pub fn error_json(e: &Error) -> Value {
    let mut m = Map::new();
    m.insert("kind".into(), json!(e.kind()));
    m.insert("message".into(), json!(e.to_string()));
    match e {
        Error::Unbounded(cert) => {
            m.insert("certificate".into(), serde_json::to_value(cert.as_ref()).unwrap_or(Value::Null));
        }
        Error::KkmViolation { witness } | Error::Hypothesis { witness, .. } => {
            m.insert("witness".into(), json!(witness));
        }
        Error::EmptyIntersection { indices, separation } => {
            m.insert("indices".into(), json!(indices));
            m.insert("separation".into(), json!(separation));
        }
        Error::BudgetExhausted { best_gap } => {
            m.insert("best_gap".into(), json!(best_gap));
        }
        Error::Parse { offset, .. } => {
            m.insert("offset".into(), json!(offset));
        }
        _ => {}
    }
    json!({ "schema": SCHEMA, "error": Value::Object(m) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_from_decimal_strings() {
        let s = parse_space(&json!({"atoms": ["a", "b", "c"], "probs": ["0.1", "0.2", "0.7"]})).unwrap();
        assert_eq!(s.probs().iter().sum::<f64>(), 1.0);
        assert!(parse_space(&json!({"atoms": ["a"], "probs": ["0.5"]})).is_err());
        assert!(parse_space(&json!({"atoms": ["a", "a"], "probs": [0.5, 0.5]})).is_err());
    }

    #[test]
    fn randvar_forms() {
        let s = parse_space(&json!({"atoms": ["a", "b"], "probs": [0.5, 0.5]})).unwrap();
        let x = parse_randvar(&s, &json!({"b": 2.0, "a": "1"})).unwrap();
        assert_eq!(x.values(), &[1.0, 2.0]);
        let y = parse_randvar(&s, &json!({"values": [1, 2]})).unwrap();
        assert_eq!(x, y);
        assert!(parse_randvar(&s, &json!({"z": 1.0, "a": 1.0, "b": 1.0})).is_err());
        assert!(parse_randvar(&s, &json!([1.0])).is_err());
    }

    #[test]
    fn set_forms() {
        let s = ProbSpace::uniform(2);
        let p = parse_set(&s, &json!({"polytope": {"generators": [[1, 0], [0, 1]]}})).unwrap();
        let half = RandVar::new(s.clone(), vec![0.5, 0.5]).unwrap();
        assert!(p.contains(&half, 1e-12).unwrap());
        let sub = parse_set(&s, &json!({"sublevel": {"functional": "x^2", "level": 1}})).unwrap();
        assert!(sub.contains(&half, 0.0).unwrap());
        let i = parse_set(&s, &json!({"intersection": [{"box": {"lower": [0, 0], "upper": [1, 1]}}, {"sublevel": {"functional": {"linear": [1, 1]}, "level": 0.5}}]}))
            .unwrap();
        assert!(i.contains(&half, 1e-9).unwrap());
        assert!(parse_set(&s, &json!({"sublevel": {"functional": "sqrt(x)", "level": 1}})).is_err());
        assert!(parse_set(&s, &json!({"ball": {}})).is_err());
    }

    #[test]
    fn error_objects_carry_kind() {
        let e = parse_functional("x +").unwrap_err();
        let j = error_json(&e);
        assert_eq!(j["error"]["kind"], "parse");
        assert_eq!(j["schema"], 1);
    }
}
