//! Command dispatch and certificate emission for the `cckit` binary.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::coercive::{coercivity_report, minimize};
use crate::equilibrium::{solve_excess_demand, walras_check};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::io::{self, SCHEMA};
use crate::kkm::{check_kkm_property, sperner_solve};
use crate::komlos::{check_bounded_prefix, escape_certificate, extract};
use crate::measure::{epsilon_of_m, metric_d, phi, ProbSpace, RandVar};
use crate::saddle::{solve_saddle, verify_saddle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Extract,
    Minimize,
    Saddle,
    Kkm,
    Equilibrium,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Metric,
    Expr,
    All,
}

#[derive(Debug, Parser)]
#[command(name = "cckit", version, about = "Convex-compactness solvers with checkable certificates")]
pub struct Args {
    pub command: Command,
    /// Instance JSON file.
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for sampled property checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Truncate a sequence instance to its first N terms.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Write the extraction trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Self-test suite for `check`.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Record wall time in the certificate (breaks byte-identical reruns).
    #[arg(long)]
    pub timing: bool,
}

/// Exit code and the JSON document written for a run.
pub fn execute(args: &Args) -> (i32, Value) {
    let start = Instant::now();
    match run(args) {
        Ok(mut cert) => {
            if args.timing {
                cert["wall_time_s"] = json!(start.elapsed().as_secs_f64());
            }
            (0, cert)
        }
        Err(e) => {
            log::info!("{} failed: {e}", command_name(args.command));
            (if e.is_solver_error() { 2 } else { 1 }, io::error_json(&e))
        }
    }
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Extract => "extract",
        Command::Minimize => "minimize",
        Command::Saddle => "saddle",
        Command::Kkm => "kkm",
        Command::Equilibrium => "equilibrium",
        Command::Check => "check",
    }
}

fn read_instance(args: &Args) -> Result<(Value, String)> {
    let Some(path) = &args.instance else {
        return Err(Error::InvalidInput(format!("{} needs an instance file", command_name(args.command))));
    };
    let bytes = std::fs::read(path)?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok((v, io::digest(&bytes)))
}

fn certificate(args: &Args, digest: Option<String>, result: Value, verdicts: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command_name(args.command),
        "instance_digest": digest,
        "tol": args.tol,
        "result": result,
        "verdicts": verdicts,
    })
}

pub fn run(args: &Args) -> Result<Value> {
    if !(args.tol > 0.0) || !args.tol.is_finite() {
        return Err(Error::InvalidInput(format!("--tol must be positive, got {}", args.tol)));
    }
    if args.command == Command::Check && args.instance.is_none() {
        let suite = args.suite.unwrap_or(Suite::All);
        let result = run_suite(suite, args.seed)?;
        return Ok(certificate(args, None, result, json!({ "passed": true })));
    }
    let (v, digest) = read_instance(args)?;
    log::info!("{} on instance {digest}", command_name(args.command));
    let (result, verdicts) = match args.command {
        Command::Extract => run_extract(args, &v)?,
        Command::Minimize => {
            let (g, c) = io::parse_minimize(&v)?;
            let m = minimize(&g, &c, args.tol)?;
            let inside = c.contains(&m.f_star, args.tol)?;
            (
                json!({ "f_star": m.f_star.values(), "value": m.value, "certificate": m.certificate }),
                json!({ "f_star_in_set": inside }),
            )
        }
        Command::Saddle => {
            let inst = io::parse_saddle(&v)?;
            let cert = solve_saddle(&inst, args.tol)?;
            let s = inst.space().clone();
            let verdict = verify_saddle(&inst, &RandVar::new(s.clone(), cert.f0.clone())?, &RandVar::new(s, cert.g0.clone())?, args.tol)?;
            (serde_json::to_value(&cert)?, serde_json::to_value(&verdict)?)
        }
        Command::Kkm => {
            let inst = io::parse_kkm(&v)?;
            let sol = sperner_solve(&inst, args.tol)?;
            let ok = sol.violations.iter().all(|d| *d <= args.tol);
            (serde_json::to_value(&sol)?, json!({ "within_tol_of_every_set": ok }))
        }
        Command::Equilibrium => {
            let inst = io::parse_equilibrium(&v)?;
            let (x0, report) = solve_excess_demand(&inst, args.tol)?;
            let walras = walras_check(&inst, x0.values())?;
            (serde_json::to_value(&report)?, json!({ "walras": walras, "no_excess_demand": report.max_violation <= args.tol }))
        }
        Command::Check => (json!({ "instance": detect_kind(&v) }), check_instance(args, &v)?),
    };
    Ok(certificate(args, Some(digest), result, verdicts))
}

fn run_extract(args: &Args, v: &Value) -> Result<(Value, Value)> {
    let (seq, set) = io::parse_sequence(v, args.horizon)?;
    let (limit, trace) = extract(&seq, &set, args.tol)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, io::trace_lines(&trace)?)?;
    }
    let monotone = trace.windows(2).all(|w| w[1].u <= w[0].u);
    let inside = set.contains(&limit, 2.0 * args.tol)?;
    let last = trace.last().expect("extract returns a nonempty trace");
    Ok((
        json!({
            "limit": limit.values(),
            "tails": trace.iter().map(|s| s.d).collect::<Vec<_>>(),
            "u": trace.iter().map(|s| s.u).collect::<Vec<_>>(),
            "final_support": last.w.weights().iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(k, w)| (last.d + k, *w)).collect::<Vec<_>>(),
            "final_step": last.step,
            "horizon": seq.horizon(),
        }),
        json!({ "u_nonincreasing": monotone, "limit_in_set": inside }),
    ))
}

fn detect_kind(v: &Value) -> &'static str {
    if let Some(k) = v.get("kind").and_then(Value::as_str) {
        return match k {
            "extract" => "extract",
            "minimize" => "minimize",
            "kkm" => "kkm",
            "saddle" => "saddle",
            _ => "equilibrium",
        };
    }
    if v.get("terms").is_some() {
        "extract"
    } else if v.get("sets").is_some() {
        "kkm"
    } else if v.get("functional").is_some() {
        "minimize"
    } else if v.get("economy").is_some() || v.get("offset").is_some() || v.get("eta").is_some() {
        "equilibrium"
    } else if v.get("c").is_some() && v.get("d").is_some() && v.get("space").is_some() {
        "saddle"
    } else {
        "equilibrium"
    }
}

/// Hypothesis checks for an instance without running its solver.
fn check_instance(args: &Args, v: &Value) -> Result<Value> {
    match detect_kind(v) {
        "extract" => {
            let (seq, _) = io::parse_sequence(v, args.horizon)?;
            let grid: Vec<f64> = (0..=20).map(|k| 2f64.powi(k)).collect();
            let report = check_bounded_prefix(&seq, &grid)?;
            if let Some(cert) = escape_certificate(&seq) {
                return Err(Error::Unbounded(Box::new(cert)));
            }
            Ok(json!({ "bounded_prefix": report }))
        }
        "minimize" => {
            let (g, c) = io::parse_minimize(v)?;
            g.spot_check_convexity()?;
            let probe = c.any_point(args.tol)?;
            Ok(json!({ "convexity_sampled": true, "coercivity": coercivity_report(&g, &probe)? }))
        }
        "kkm" => {
            let inst = io::parse_kkm(v)?;
            let verdict = check_kkm_property(&inst, 2000, args.seed)?;
            if !verdict.passed {
                return Err(Error::KkmViolation { witness: verdict.witness.unwrap_or_default() });
            }
            Ok(serde_json::to_value(verdict)?)
        }
        "saddle" => {
            io::parse_saddle(v)?;
            Ok(json!({ "curvature_sampled": true }))
        }
        _ => {
            let inst = io::parse_equilibrium(v)?;
            inst.check_hypotheses(1000, args.seed)?;
            Ok(json!({ "walras_sampled": 1000, "d_in_c": true }))
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Value> {
    let mut out = serde_json::Map::new();
    if matches!(suite, Suite::Metric | Suite::All) {
        out.insert("metric".into(), metric_suite(seed, 2000)?);
    }
    if matches!(suite, Suite::Expr | Suite::All) {
        out.insert("expr".into(), expr_suite(seed, 2000)?);
    }
    Ok(Value::Object(out))
}

fn fail(message: String, witness: Vec<f64>) -> Error {
    Error::Hypothesis { message, witness }
}

/// Metric axioms for d(f, g) = E[min(|f - g|, 1)] and the phi-gap inequality.
pub fn metric_suite(seed: u64, samples: usize) -> Result<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let n = rng.gen_range(1..=8);
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s = ProbSpace::from_masses((0..n).map(|i| format!("a{i}")).collect(), &masses)?;
        let mut draw = || RandVar::new(s.clone(), (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let (f, g, h) = (draw()?, draw()?, draw()?);
        let (fg, gh, fh) = (metric_d(&f, &g)?, metric_d(&g, &h)?, metric_d(&f, &h)?);
        if metric_d(&f, &f)? != 0.0 || fg != metric_d(&g, &f)? || !(0.0..=1.0 + 1e-12).contains(&fg) {
            return Err(fail("metric_d is not a bounded symmetric semimetric".into(), f.values().to_vec()));
        }
        if fh > fg + gh + 1e-12 {
            return Err(fail(format!("triangle inequality fails: {fh} > {fg} + {gh}"), f.values().to_vec()));
        }
    }
    let mut worst = f64::INFINITY;
    for m in [1.0, 2.0, 5.0, 10.0] {
        let eps = epsilon_of_m(m)?;
        for _ in 0..samples {
            let a = rng.gen_range(0.0..=m);
            let b = a + rng.gen_range(1.0 / m..1.0 / m + 4.0);
            let gap = phi((a + b) / 2.0)? - (phi(a)? + phi(b)?) / 2.0;
            worst = worst.min(gap - eps);
            if gap < eps - 1e-12 {
                return Err(fail(format!("phi gap {gap:e} below epsilon({m}) = {eps:e}"), vec![a, b]));
            }
        }
    }
    Ok(json!({ "samples": samples, "min_phi_gap_slack": worst }))
}

/// Parser totality on random byte strings and print/parse round trips.
pub fn expr_suite(seed: u64, samples: usize) -> Result<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ALPHABET: &[u8] = b"x0123456789.+-*/^() explogsqrtmaxin,e";
    let mut parsed = 0;
    for _ in 0..samples {
        let len = rng.gen_range(0..24);
        let bytes: Vec<u8> = (0..len).map(|_| if rng.gen_bool(0.9) { ALPHABET[rng.gen_range(0..ALPHABET.len())] } else { rng.gen() }).collect();
        let src = String::from_utf8_lossy(&bytes);
        if let Ok(e) = Expr::parse(&src) {
            parsed += 1;
            let again = Expr::parse(&e.to_string())?;
            if again != e {
                return Err(fail(format!("round trip changed {src:?}"), vec![]));
            }
        }
    }
    Ok(json!({ "samples": samples, "parsed": parsed }))
}

/// Parses argv, runs, and writes the certificate; returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (code, doc) = execute(&args);
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n";
    match (&args.out, code) {
        (Some(path), 0) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("{}", serde_json::to_string(&io::error_json(&Error::Io(e))).expect("json"));
                return 1;
            }
        }
        _ => print!("{text}"),
    }
    if code != 0 {
        eprintln!("cckit: {}", doc["error"]["message"].as_str().unwrap_or("error"));
    }
    code
}
