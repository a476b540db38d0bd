//! Subcommand implementations. Each renders its stdout into a string so the
//! caller can digest it before printing.

use std::io::Read;

use amvp_core::asymptotics::{self, QuadraticModel};
use amvp_core::ballquad::{self, Estimate, QuadratureSpec};
use amvp_core::group::parse_matrix;
use amvp_core::median::{self, MedianConfig};
use amvp_core::solver::{self, GridDomain, Initial, SolverConfig};
use amvp_core::{special, GroupModel, GroupPoint};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    ConstantsArgs, GroupArgs, MedianArgs, Method, OracleArgs, SolveArgs, SweepArgs, TableFormat, Target,
};
use crate::failure::Failure;

pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, exit_code: 0 }
    }
}

/// Parses an exponent; "inf" is spelled literally. `p = 1` is admitted only
/// where the caller allows it.
pub fn parse_p(text: &str, allow_one: bool) -> Result<f64, Failure> {
    let t = text.trim();
    let p = match t.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => f64::INFINITY,
        _ => t
            .parse::<f64>()
            .map_err(|_| Failure::Usage(format!("bad value for --p: '{t}'")))?,
    };
    if p.is_nan() || p < 1.0 || (p == 1.0 && !allow_one) {
        let range = if allow_one { "[1, inf]" } else { "(1, inf]" };
        return Err(Failure::Domain(format!("p must lie in {range}, got {t}")));
    }
    Ok(p)
}

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            let s = s.trim().replace('\u{2212}', "-");
            s.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad number in --{flag}: '{s}'")))
        })
        .collect()
}

/// A scalar broadcast to `dim` entries, or exactly `dim` entries.
fn parse_per_coord(flag: &str, text: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let v = parse_list(flag, text)?;
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(Failure::Usage(format!("--{flag} needs 1 or {dim} values, got {n}"))),
    }
}

fn exact_len(flag: &str, v: Vec<f64>, want: usize) -> Result<Vec<f64>, Failure> {
    if v.len() != want {
        return Err(Failure::Usage(format!("--{flag} needs {want} values, got {}", v.len())));
    }
    Ok(v)
}

pub fn build_group(a: &GroupArgs) -> Result<GroupModel, Failure> {
    let text = if a.group.contains('=') {
        a.group.clone()
    } else {
        let mut t = format!("group={}", a.group);
        if let Some(n) = a.n {
            t.push_str(&format!(" n={n}"));
        }
        if let Some(k) = a.k {
            t.push_str(&format!(" k={k}"));
        }
        for (i, b) in a.b.iter().enumerate() {
            t.push_str(&format!(" B{}={}", i + 1, b.replace(' ', "")));
        }
        if let Some(l) = &a.layers {
            t.push_str(&format!(" layers={l}"));
        }
        if a.n.is_none() && matches!(a.group.as_str(), "heisenberg" | "euclidean") {
            t.push_str(" n=1");
        }
        t
    };
    Ok(text.parse::<GroupModel>()?)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// JSON cannot carry infinities; they become null.
fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Rounds to 15 significant digits and prints the shortest decimal that
/// round-trips the rounded value.
pub fn sig15(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.14e}").parse().unwrap_or(x);
    format!("{rounded}")
}

pub fn info() -> Result<Outcome, Failure> {
    let v = json!({
        "name": "amvp",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommands": ["info", "constants", "median", "oracle", "sweep", "solve"],
        "groups": ["euclidean", "heisenberg", "step2", "graded"],
        "oracle_targets": ["dirichlet", "momentI", "gamma0", "volume"],
        "boundary_data": ["saddle", "linear", "constant:<c>"],
    });
    Ok(Outcome::ok(to_json(&v)?))
}

pub fn constants(a: &ConstantsArgs) -> Result<Outcome, Failure> {
    let g = build_group(&a.group)?;
    let p = parse_p(&a.p, false)?;
    let report = special::c_constant(p, g.stratification())?;
    let mut v = serde_json::to_value(&report)?;
    v["group"] = json!(g.to_string());
    Ok(Outcome::ok(to_json(&v)?))
}

fn read_samples(input: &str) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let cleaned = input.replace('\u{2212}', "-");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(cleaned.as_bytes());
    let (mut values, mut weights) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if line == 0 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("value")) {
            continue;
        }
        if rec.len() > 2 {
            return Err(Failure::Usage(format!(
                "line {}: expected value or value,weight",
                line + 1
            )));
        }
        let num = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("line {}: bad number '{f}'", line + 1)))
        };
        values.push(num(&rec[0])?);
        weights.push(if rec.len() == 2 { num(&rec[1])? } else { 1.0 });
    }
    Ok((values, weights))
}

pub fn median(a: &MedianArgs, stdin: &mut dyn Read) -> Result<Outcome, Failure> {
    let p = parse_p(&a.p, true)?;
    let mut input = String::new();
    stdin.read_to_string(&mut input)?;
    let (values, weights) = read_samples(&input)?;
    let cfg = MedianConfig::new(p).with_tol(a.tol);
    let mu = median::mu_p_samples(&values, &weights, &cfg)?;
    Ok(Outcome::ok(format!("{}\n", sig15(mu))))
}

pub fn oracle(a: &OracleArgs, seed: u64) -> Result<Outcome, Failure> {
    let mut spec = QuadratureSpec::new(a.samples, seed);
    if a.method == Method::Qmc {
        spec = spec.low_discrepancy();
    }
    let (est, closed): (Estimate, f64) = match a.target {
        Target::Dirichlet => {
            let text = a
                .alphas
                .as_deref()
                .ok_or_else(|| Failure::Usage("--alphas is required".into()))?;
            let alphas = parse_list("alphas", text)?;
            (
                ballquad::dirichlet_oracle(&alphas, &spec)?,
                special::dirichlet_integral(&alphas)?,
            )
        }
        Target::MomentI => {
            let g = build_group(&a.group)?;
            let p = parse_p(&a.p, false)?;
            let strat = g.stratification();
            (
                ballquad::moment_i_numeric(strat, p, &spec)?,
                special::moment_i_closed(p, strat)?,
            )
        }
        Target::Gamma0 => {
            let g = build_group(&a.group)?;
            let p = parse_p(&a.p, false)?;
            let strat = g.stratification();
            let v1 = strat.layer_dim(1);
            let v2 = if strat.step() >= 2 { strat.layer_dim(2) } else { 0 };
            let c = match &a.c {
                Some(t) => parse_matrix(t)?,
                None => DMatrix::identity(v1, v1),
            };
            let eta = match &a.eta {
                Some(t) => exact_len("eta", parse_list("eta", t)?, v2)?,
                None => vec![0.0; v2],
            };
            (
                ballquad::gamma0_numeric(strat, p, &c, &eta, &spec)?,
                special::gamma0_closed(p, &c, strat)?,
            )
        }
        Target::Volume => {
            let g = build_group(&a.group)?;
            let strat = g.stratification();
            let closed = special::moment_i_closed(2.0, strat)? * a.radius.powi(strat.hom_dim() as i32);
            (ballquad::ball_volume_direct(strat, a.radius, &spec)?, closed)
        }
    };
    let v = json!({
        "target": a.target,
        "value": est.value,
        "std_error": est.std_error,
        "n": est.n,
        "closed_form": closed,
        "z_score": finite(est.z_score(closed)),
        "seed": seed,
    });
    Ok(Outcome::ok(to_json(&v)?))
}

pub fn sweep(a: &SweepArgs, seed: u64) -> Result<Outcome, Failure> {
    let g = build_group(&a.group)?;
    let p = parse_p(&a.p, false)?;
    let strat = g.stratification();
    let v1 = strat.layer_dim(1);
    let v2 = if strat.step() >= 2 { strat.layer_dim(2) } else { 0 };
    let xi = match &a.xi {
        Some(t) => exact_len("xi", parse_list("xi", t)?, v1)?,
        None => vec![0.0; v1],
    };
    let eta = match &a.eta {
        Some(t) => exact_len("eta", parse_list("eta", t)?, v2)?,
        None => vec![0.0; v2],
    };
    let hess = match &a.a {
        Some(t) => parse_matrix(t)?,
        None => DMatrix::zeros(v1, v1),
    };
    let base = match &a.x {
        Some(t) => GroupPoint::new(exact_len("x", parse_list("x", t)?, g.dim())?)?,
        None => GroupPoint::zero(g.dim()),
    };
    let model = QuadraticModel::new(&g, a.q0, xi, eta, hess, base)?;
    let spec = QuadratureSpec::new(a.samples, seed);
    let report = asymptotics::expansion_sweep(&g, &model, p, a.eps0, a.levels, &spec, &MedianConfig::new(p))?;

    let stdout = match a.out {
        TableFormat::Json => {
            let mut v = serde_json::to_value(&report)?;
            v["group"] = json!(g.to_string());
            v["seed"] = json!(seed);
            v["samples"] = json!(a.samples);
            to_json(&v)?
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["eps", "mu", "mu_minus_q0", "predicted", "fitted", "rel_error"])?;
            for (&eps, &mu) in report.eps_list.iter().zip(&report.mu_values) {
                let e2 = eps * eps;
                let fitted = report.fitted_coeff * e2 + report.fitted_cubic * e2 * eps;
                w.serialize((
                    eps,
                    mu,
                    mu - report.q0,
                    report.predicted_coeff * e2,
                    fitted,
                    report.rel_error,
                ))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Failure::Io(e.to_string()))?)
                .map_err(|e| Failure::Io(e.to_string()))?
        }
    };
    Ok(Outcome::ok(stdout))
}

type BoundaryData = Box<dyn Fn(&[f64]) -> f64 + Sync>;

fn boundary_data(bc: &str) -> Result<BoundaryData, Failure> {
    match bc {
        "saddle" => Ok(Box::new(|y: &[f64]| y[0] * y[0] - y.get(1).map_or(0.0, |v| v * v))),
        "linear" => Ok(Box::new(|y: &[f64]| y[0])),
        _ => {
            let c = bc
                .strip_prefix("constant:")
                .and_then(|c| c.replace('\u{2212}', "-").parse::<f64>().ok())
                .ok_or_else(|| Failure::Usage(format!("unknown --bc '{bc}'; use saddle, linear or constant:<c>")))?;
            Ok(Box::new(move |_: &[f64]| c))
        }
    }
}

pub fn solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let g = build_group(&a.group)?;
    let p = parse_p(&a.p, false)?;
    let m = g.dim();
    let lower = parse_per_coord("lower", &a.lower, m)?;
    let upper = parse_per_coord("upper", &a.upper, m)?;
    let h = parse_per_coord("h", &a.h, m)?;
    let bc = boundary_data(&a.bc)?;
    let group_text = g.to_string();
    let dom = GridDomain::new(g, lower, upper, h)?;
    let cfg = SolverConfig {
        p,
        eps: a.eps,
        tol_sup: a.tol,
        max_iters: a.max_iters,
        damping: a.damping,
    };
    let stencils = solver::build_stencils(&dom, &cfg)?;
    let report = solver::solve(&dom, &stencils, &bc, Initial::Midrange, &cfg)?;

    let mut header = serde_json::to_value(&report)?;
    header["group"] = json!(group_text);
    header["p"] = if p.is_infinite() { json!("inf") } else { json!(p) };
    header["eps"] = json!(a.eps);
    header["bc"] = json!(a.bc);
    let mut out = format!("# {}\n", serde_json::to_string(&header)?);

    let interior = stencils.is_interior();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut cols: Vec<String> = (1..=m).map(|i| format!("y{i}")).collect();
    cols.extend(["value".into(), "interior".into()]);
    w.write_record(&cols)?;
    for (idx, &u) in report.values.iter().enumerate() {
        let mut row: Vec<String> = dom.node(idx).iter().map(|c| c.to_string()).collect();
        row.push(u.to_string());
        row.push((interior[idx] as u8).to_string());
        w.write_record(&row)?;
    }
    out.push_str(std::str::from_utf8(&w.into_inner().map_err(|e| Failure::Io(e.to_string()))?).unwrap_or(""));
    Ok(Outcome {
        stdout: out,
        exit_code: if report.converged { 0 } else { 4 },
    })
}
