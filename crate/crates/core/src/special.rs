//! Special functions and the closed-form constants of the mean-value
//! expansion.
//!
//! Every Gamma and Beta factor is assembled in log space; the Beta
//! arguments involve `2k!` and overflow quickly otherwise.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::group::Stratification;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Stirling coefficients `B_{2k} / (2k(2k−1))`, k = 1..7.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// Below this argument the recurrence shifts upward before the asymptotic
/// series is applied.
const STIRLING_MIN: f64 = 15.0;

/// `ln Γ(t)` for `t > 0`.
pub fn log_gamma(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("log_gamma needs t > 0, got {t}")));
    }
    let mut z = t;
    let mut prod = 1.0;
    while z < STIRLING_MIN {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for coeff in STIRLING.iter().rev() {
        series = series * inv2 + coeff;
    }
    series *= inv;
    Ok((z - 0.5) * z.ln() - z + HALF_LN_2PI + series - prod.ln())
}

pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("beta needs positive arguments, got ({a}, {b})")));
    }
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}

pub fn beta(a: f64, b: f64) -> Result<f64> {
    log_beta(a, b).map(f64::exp)
}

/// `∫_{T_n} x₁^{α₁}⋯x_n^{α_n} dx` over the positive-orthant part of the
/// Euclidean unit ball, `2^{−n} ∏Γ((α_i+1)/2) / Γ((n+2+Σα_i)/2)`.
pub fn dirichlet_integral(alphas: &[f64]) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::domain("dirichlet_integral needs at least one exponent"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > -1.0) || !a.is_finite()) {
        return Err(Error::domain(format!("exponents must exceed -1, got {a}")));
    }
    let n = alphas.len() as f64;
    let mut log = -n * std::f64::consts::LN_2;
    for a in alphas {
        log += log_gamma((a + 1.0) / 2.0)?;
    }
    log -= log_gamma((n + 2.0 + alphas.iter().sum::<f64>()) / 2.0)?;
    Ok(log.exp())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || p.is_nan() {
        return Err(Error::domain(format!("p must exceed 1, got {p}")));
    }
    Ok(())
}

fn check_finite_p(p: f64) -> Result<()> {
    check_p(p)?;
    if p.is_infinite() {
        return Err(Error::domain("p must be finite here"));
    }
    Ok(())
}

/// `θ_2, …, θ_k` from the recursion `θ_2 = v₁+p−2`,
/// `θ_{j+1} = v_j + (j−1)/j·θ_j`. Empty for step 1.
pub fn theta_sequence(p: f64, strat: &Stratification) -> Result<Vec<f64>> {
    check_finite_p(p)?;
    let k = strat.step();
    let mut out = Vec::with_capacity(k.saturating_sub(1));
    if k < 2 {
        return Ok(out);
    }
    let mut theta = strat.layer_dim(1) as f64 + p - 2.0;
    out.push(theta);
    for j in 2..k {
        theta = strat.layer_dim(j) as f64 + (j as f64 - 1.0) / j as f64 * theta;
        out.push(theta);
    }
    Ok(out)
}

/// `θ_j = (p − 2 + Σ_{i<j} i·v_i)/(j − 1)` for `2 ≤ j ≤ k`.
pub fn theta_closed_form(p: f64, strat: &Stratification, j: usize) -> f64 {
    let weighted: usize = (1..j).map(|i| i * strat.layer_dim(i)).sum();
    (p - 2.0 + weighted as f64) / (j as f64 - 1.0)
}

/// `θ′_j = (p + Σ_{i<j} i·v_i)/(j − 1)`, i.e. `θ_j` evaluated at `p + 2`.
pub fn theta_prime_sequence(p: f64, strat: &Stratification) -> Result<Vec<f64>> {
    check_finite_p(p)?;
    theta_sequence(p + 2.0, strat)
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Sum over layers `j = 2..k` of `ln B(j v_j/(2k!), (j−1)θ_j/(2k!) + 1)`.
fn layer_log_betas(strat: &Stratification, thetas: &[f64]) -> Result<f64> {
    let n = strat.gauge_exponent();
    let mut total = 0.0;
    for (idx, theta) in thetas.iter().enumerate() {
        let j = idx + 2;
        let jf = j as f64;
        let a = jf * strat.layer_dim(j) as f64 / n;
        let b = (jf - 1.0) * theta / n + 1.0;
        total += log_beta(a, b)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaBranch {
    EuclideanClosedForm,
    GeneralBetaProduct,
    PInfinity,
}

pub(crate) fn serialize_exponent<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

/// The mean-value constant with the ingredients that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantReport {
    #[serde(serialize_with = "serialize_exponent")]
    pub p: f64,
    #[serde(rename = "layers")]
    pub stratification: Stratification,
    #[serde(rename = "c")]
    pub c_value: f64,
    pub theta: Vec<f64>,
    pub theta_prime: Vec<f64>,
    #[serde(rename = "branch")]
    pub formula_branch: FormulaBranch,
}

/// The constant `c(p, v₁, …, v_k)`:
///
/// ```text
/// c = 1/(2(p+v₁)) · ∏_{j=2}^{k} B(j v_j/(2k!), (j−1)θ′_j/(2k!)+1)
///                              / B(j v_j/(2k!), (j−1)θ_j /(2k!)+1)
/// ```
///
/// Step 1 gives `1/(2(p+N))`. For `p = ∞` the report carries `c = 1/2`,
/// the factor in front of `⟨Aξ,ξ⟩/|ξ|²`, and no θ lists.
pub fn c_constant(p: f64, strat: &Stratification) -> Result<ConstantReport> {
    check_p(p)?;
    let report = |c_value, theta, theta_prime, formula_branch| ConstantReport {
        p,
        stratification: strat.clone(),
        c_value,
        theta,
        theta_prime,
        formula_branch,
    };
    if p.is_infinite() {
        return Ok(report(0.5, Vec::new(), Vec::new(), FormulaBranch::PInfinity));
    }
    let v1 = strat.layer_dim(1) as f64;
    if strat.step() == 1 {
        return Ok(report(
            1.0 / (2.0 * (p + v1)),
            Vec::new(),
            Vec::new(),
            FormulaBranch::EuclideanClosedForm,
        ));
    }
    let theta = theta_sequence(p, strat)?;
    let theta_prime = theta_prime_sequence(p, strat)?;
    let log_ratio = layer_log_betas(strat, &theta_prime)? - layer_log_betas(strat, &theta)?;
    let c = log_ratio.exp() / (2.0 * (p + v1));
    Ok(report(c, theta, theta_prime, FormulaBranch::GeneralBetaProduct))
}

/// `c(p) = 2/((p+2)(p+4)) · (Γ((p+6)/4)/Γ((p+4)/4))²` for `H₁`.
pub fn c_heisenberg1(p: f64) -> Result<f64> {
    check_finite_p(p)?;
    let ratio = log_gamma((p + 6.0) / 4.0)? - log_gamma((p + 4.0) / 4.0)?;
    Ok(2.0 / ((p + 2.0) * (p + 4.0)) * (2.0 * ratio).exp())
}

/// `c(p,n,k) = 1/(2(n+p)) · B(k/2, (n+p+4)/4) / B(k/2, (n+p+2)/4)` for a
/// step-2 group with layers `(n, k)`.
pub fn c_step2(p: f64, n: usize, k: usize) -> Result<f64> {
    check_finite_p(p)?;
    if n == 0 || k == 0 {
        return Err(Error::domain("layer dimensions must be positive"));
    }
    let (n, k) = (n as f64, k as f64);
    let log_ratio = log_beta(k / 2.0, (n + p + 4.0) / 4.0)? - log_beta(k / 2.0, (n + p + 2.0) / 4.0)?;
    Ok(log_ratio.exp() / (2.0 * (n + p)))
}

/// `I = ∫_B |y₁|^{p−2} dy` over the unit pseudoball.
///
/// The innermost horizontal integral is a Dirichlet integral; each outer
/// layer `j` contributes `π^{v_j/2}/Γ(v_j/2) · j/k! · B(j v_j/(2k!), (j−1)θ_j/(2k!)+1)`.
pub fn moment_i_closed(p: f64, strat: &Stratification) -> Result<f64> {
    check_finite_p(p)?;
    let k = strat.step();
    let v1 = strat.layer_dim(1) as f64;
    let mut log = log_gamma((p - 1.0) / 2.0)? + (v1 - 1.0) * 0.5 * LN_PI - log_gamma((v1 + p) / 2.0)?;
    if k >= 2 {
        let ln_kfact = ln_factorial(k);
        for j in 2..=k {
            let vj = strat.layer_dim(j) as f64;
            log += 0.5 * vj * LN_PI - log_gamma(vj / 2.0)? + (j as f64).ln() - ln_kfact;
        }
        log += layer_log_betas(strat, &theta_sequence(p, strat)?)?;
    }
    Ok(log.exp())
}

fn check_symmetric(a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.nrows().max(a.ncols()),
        });
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::domain("matrix must be symmetric"));
    }
    Ok(())
}

/// `(tr A, ⟨Aξ,ξ⟩/|ξ|²)` after validating shapes.
pub(crate) fn trace_and_rayleigh(a: &DMatrix<f64>, xi: &[f64]) -> Result<(f64, f64)> {
    check_symmetric(a, xi.len())?;
    let norm2: f64 = xi.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let mut quad = 0.0;
    for i in 0..xi.len() {
        for j in 0..xi.len() {
            quad += a[(i, j)] * xi[i] * xi[j];
        }
    }
    Ok((a.trace(), quad / norm2))
}

/// Coefficient of `ε²` in `μ_p(ε, q)(x) − q(x)`:
/// `c·(tr A + (p−2)⟨Aξ,ξ⟩/|ξ|²)`, or `½⟨Aξ,ξ⟩/|ξ|²` for `p = ∞`.
pub fn expansion_coefficient(p: f64, a: &DMatrix<f64>, xi: &[f64], strat: &Stratification) -> Result<f64> {
    check_p(p)?;
    if xi.len() != strat.layer_dim(1) {
        return Err(Error::DimensionMismatch {
            expected: strat.layer_dim(1),
            got: xi.len(),
        });
    }
    let (trace, rayleigh) = trace_and_rayleigh(a, xi)?;
    if p.is_infinite() {
        return Ok(0.5 * rayleigh);
    }
    let c = c_constant(p, strat)?.c_value;
    Ok(c * (trace + (p - 2.0) * rayleigh))
}

/// Closed form of the weighted mean
/// `γ₀ = ∫_B |y₁|^{p−2}(½⟨C y⁽¹⁾, y⁽¹⁾⟩ + ⟨η, y⁽²⁾⟩) / ∫_B |y₁|^{p−2}`,
/// which equals `c·(tr C + (p−2)C₁₁)`; `η` integrates to zero.
pub fn gamma0_closed(p: f64, c_matrix: &DMatrix<f64>, strat: &Stratification) -> Result<f64> {
    let mut e1 = vec![0.0; strat.layer_dim(1)];
    e1[0] = 1.0;
    check_finite_p(p)?;
    expansion_coefficient(p, c_matrix, &e1, strat)
}

/// Volume of the Euclidean unit ball in `ℝ^n`.
pub fn euclidean_ball_volume(n: usize) -> f64 {
    let n = n as f64;
    (0.5 * n * PI.ln() - log_gamma(0.5 * n + 1.0).expect("positive")).exp()
}
