//! The quadratic test model, the normalized p-Laplacian and the
//! expansion sweep that checks `μ_p(ε, u)(x) = u(x) + c·Δᴺ_p u(x)·ε² + o(ε²)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::ballquad::{self, QuadratureSpec, SampleCloud};
use crate::error::{Error, Result};
use crate::group::{GroupModel, GroupPoint};
use crate::median::{self, MedianConfig};
use crate::special::{self, serialize_exponent};

/// `q(y) = q₀ + ⟨ξ, z⁽¹⁾⟩ + ⟨η, z⁽²⁾⟩ + ½⟨A z⁽¹⁾, z⁽¹⁾⟩` with `z = x⁻¹·y`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticModel {
    pub q0: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub a: DMatrix<f64>,
    pub base: GroupPoint,
}

impl QuadraticModel {
    pub fn new(
        g: &GroupModel,
        q0: f64,
        xi: Vec<f64>,
        eta: Vec<f64>,
        a: DMatrix<f64>,
        base: GroupPoint,
    ) -> Result<Self> {
        let strat = g.stratification();
        let v1 = strat.layer_dim(1);
        let v2 = if strat.step() >= 2 { strat.layer_dim(2) } else { 0 };
        if xi.len() != v1 || a.nrows() != v1 || a.ncols() != v1 {
            return Err(Error::DimensionMismatch {
                expected: v1,
                got: if xi.len() != v1 {
                    xi.len()
                } else {
                    a.nrows().max(a.ncols())
                },
            });
        }
        if eta.len() != v2 {
            return Err(Error::DimensionMismatch {
                expected: v2,
                got: eta.len(),
            });
        }
        if base.dim() != g.dim() {
            return Err(Error::DimensionMismatch {
                expected: g.dim(),
                got: base.dim(),
            });
        }
        let finite = q0.is_finite() && xi.iter().chain(&eta).chain(a.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("model coefficients must be finite"));
        }
        if (&a - a.transpose()).amax() > 1e-14 * a.amax().max(1.0) {
            return Err(Error::domain("A must be symmetric"));
        }
        Ok(Self { q0, xi, eta, a, base })
    }
}

/// Evaluates the model at `y`.
pub fn eval_quadratic(m: &QuadraticModel, g: &GroupModel, y: &GroupPoint) -> Result<f64> {
    let z = g.multiply(&g.inverse(&m.base)?, y)?;
    Ok(eval_local(m, z.coords()))
}

/// The model in local coordinates `z = x⁻¹·y`.
fn eval_local(m: &QuadraticModel, z: &[f64]) -> f64 {
    let v1 = m.xi.len();
    let (z1, rest) = z.split_at(v1);
    let mut val = m.q0;
    for i in 0..v1 {
        val += m.xi[i] * z1[i];
        let az: f64 = z1.iter().enumerate().map(|(j, zj)| m.a[(i, j)] * zj).sum();
        val += 0.5 * az * z1[i];
    }
    val + m.eta.iter().zip(rest).map(|(e, t)| e * t).sum::<f64>()
}

/// Default finite-difference step `ε_mach^{1/3}·max(1, |x|)`.
pub fn default_step(g: &GroupModel, x: &GroupPoint) -> f64 {
    f64::EPSILON.cbrt() * g.stratification().gauge(x.coords()).max(1.0)
}

/// Extracts the quadratic model of `u` at `x` by finite differences along
/// the group directions.
///
/// Moving along `X_i` means right multiplication by `t·e_i`. The mixed
/// second difference on `x·h(±e_i ± e_j)` gives the symmetrized product
/// `½(X_iX_j + X_jX_i)u`. `η` is twice the vertical gradient.
pub fn quadratic_from_function<F>(g: &GroupModel, u: F, x: &GroupPoint, h: Option<f64>) -> Result<QuadraticModel>
where
    F: Fn(&[f64]) -> f64,
{
    if !g.has_group_law() {
        return Err(Error::Unsupported("finite differences need the group law".into()));
    }
    if x.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.dim(),
        });
    }
    let h = h.unwrap_or_else(|| default_step(g, x));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let strat = g.stratification();
    let m = g.dim();
    let v1 = strat.layer_dim(1);
    let v2 = if strat.step() >= 2 { strat.layer_dim(2) } else { 0 };
    let mut y = vec![0.0; m];
    let mut at = |offsets: &[(usize, f64)]| {
        let mut z = vec![0.0; m];
        for (i, t) in offsets {
            z[*i] += t;
        }
        g.multiply_into(x.coords(), &z, &mut y);
        u(&y)
    };
    let q0 = at(&[]);
    let xi: Vec<f64> = (0..v1).map(|i| (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h)).collect();
    let eta: Vec<f64> = (v1..v1 + v2)
        .map(|i| 2.0 * (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h))
        .collect();
    let mut a = DMatrix::zeros(v1, v1);
    for i in 0..v1 {
        a[(i, i)] = (at(&[(i, h)]) - 2.0 * q0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let mixed = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            a[(i, j)] = mixed;
            a[(j, i)] = mixed;
        }
    }
    if !(q0.is_finite() && xi.iter().chain(&eta).chain(a.iter()).all(|v| v.is_finite())) {
        return Err(Error::domain("u is not finite near x"));
    }
    QuadraticModel::new(g, q0, xi, eta, a, x.clone())
}

/// `tr A + (p−2)⟨Aξ,ξ⟩/|ξ|²`, or `⟨Aξ,ξ⟩/|ξ|²` for `p = ∞`.
pub fn normalized_p_laplacian(m: &QuadraticModel, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("p must exceed 1, got {p}")));
    }
    let (trace, rayleigh) = special::trace_and_rayleigh(&m.a, &m.xi)?;
    if p.is_infinite() {
        Ok(rayleigh)
    } else {
        Ok(trace + (p - 2.0) * rayleigh)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    #[serde(serialize_with = "serialize_exponent")]
    pub p: f64,
    pub q0: f64,
    pub eps_list: Vec<f64>,
    pub mu_values: Vec<f64>,
    /// Coefficient `a` of `ε²` in the fit `μ − q₀ ≈ aε² + bε³`.
    pub fitted_coeff: f64,
    pub fitted_cubic: f64,
    pub predicted_coeff: f64,
    /// Relative error of the fit; absolute when the prediction is zero.
    pub rel_error: f64,
    /// Root-mean-square residual of `(μ − q₀)/ε²` against `a + bε`.
    pub fit_residual: f64,
    pub n_points: usize,
}

impl SweepReport {
    pub fn within(&self, tol: f64) -> bool {
        self.rel_error <= tol
    }
}

/// Least squares of `r_i = (μ_i − q₀)/ε_i²` against `a + bε_i`; equivalent
/// to fitting `aε² + bε³` with weights `ε⁻⁴`, which keeps the small levels
/// from being swamped by the largest one.
fn fit(eps: &[f64], mu: &[f64], q0: f64) -> (f64, f64, f64) {
    let r: Vec<f64> = eps.iter().zip(mu).map(|(e, m)| (m - q0) / (e * e)).collect();
    let n = eps.len() as f64;
    let me = eps.iter().sum::<f64>() / n;
    let mr = r.iter().sum::<f64>() / n;
    let sxx: f64 = eps.iter().map(|e| (e - me).powi(2)).sum();
    let sxy: f64 = eps.iter().zip(&r).map(|(e, v)| (e - me) * (v - mr)).sum();
    let b = sxy / sxx;
    let a = mr - b * me;
    let rms = (eps.iter().zip(&r).map(|(e, v)| (v - a - b * e).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

fn check_sweep_args(eps0: f64, levels: usize) -> Result<()> {
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::domain(format!("eps0 must be positive, got {eps0}")));
    }
    if levels < 2 {
        return Err(Error::domain("a sweep needs at least two levels"));
    }
    Ok(())
}

/// Points of the unit sphere `{|z| = 1}` obtained by dilating cloud nodes
/// radially; extremes of a function with nonzero gradient sit there.
fn sphere_points(cloud: &SampleCloud) -> Vec<Vec<f64>> {
    let strat = cloud.stratification();
    cloud
        .points()
        .filter_map(|z| {
            let r = strat.gauge(z);
            (r > 0.0).then(|| {
                let mut s = z.to_vec();
                strat.dilate_in_place(1.0 / r, &mut s);
                s
            })
        })
        .collect()
}

struct Sweep<'a> {
    g: &'a GroupModel,
    base: &'a GroupPoint,
    unit: SampleCloud,
    sphere: Vec<Vec<f64>>,
    cfg: MedianConfig,
}

impl<'a> Sweep<'a> {
    fn new(g: &'a GroupModel, base: &'a GroupPoint, p: f64, spec: &QuadratureSpec, cfg: &MedianConfig) -> Result<Self> {
        let unit = ballquad::sample_unit_ball(g.stratification(), spec)?.symmetrized()?;
        let sphere = if p.is_infinite() {
            sphere_points(&unit)
        } else {
            Vec::new()
        };
        let cfg = MedianConfig { p, ..*cfg };
        cfg.validate()?;
        Ok(Self {
            g,
            base,
            unit,
            sphere,
            cfg,
        })
    }

    fn mu<F>(&self, f: &F, eps: f64) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let strat = self.g.stratification();
        let eval = |z: &[f64]| {
            let mut s = z.to_vec();
            strat.dilate_in_place(eps, &mut s);
            let mut y = vec![0.0; s.len()];
            self.g.multiply_into(self.base.coords(), &s, &mut y);
            f(&y)
        };
        let nodes: Vec<&[f64]> = self.unit.points().collect();
        let values: Vec<f64> = nodes.par_iter().map(|z| eval(z)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("function is not finite on the ball"));
        }
        if self.cfg.p.is_finite() {
            return median::mu_p_samples(&values, self.unit.weights(), &self.cfg);
        }
        let boundary: Vec<f64> = self.sphere.par_iter().map(|z| eval(z)).collect();
        let (lo, hi) = values
            .iter()
            .chain(&boundary)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
        Ok(0.5 * (lo + hi))
    }

    fn run<F>(&self, f: F, q0: f64, predicted: f64, eps0: f64, levels: usize) -> Result<SweepReport>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let eps_list: Vec<f64> = (0..levels).map(|i| eps0 / 2f64.powi(i as i32)).collect();
        let mu_values = eps_list
            .par_iter()
            .map(|eps| self.mu(&f, *eps))
            .collect::<Result<Vec<f64>>>()?;
        let (a, b, rms) = fit(&eps_list, &mu_values, q0);
        let rel_error = if predicted.abs() > 1e-14 {
            (a - predicted).abs() / predicted.abs()
        } else {
            (a - predicted).abs()
        };
        Ok(SweepReport {
            p: self.cfg.p,
            q0,
            eps_list,
            mu_values,
            fitted_coeff: a,
            fitted_cubic: b,
            predicted_coeff: predicted,
            rel_error,
            fit_residual: rms,
            n_points: self.unit.len(),
        })
    }
}

/// Runs `μ_p(ε_i, q)(x)` for `ε_i = eps0/2^i` on one shared cloud and fits
/// the `ε²` coefficient.
pub fn expansion_sweep(
    g: &GroupModel,
    m: &QuadraticModel,
    p: f64,
    eps0: f64,
    levels: usize,
    spec: &QuadratureSpec,
    cfg: &MedianConfig,
) -> Result<SweepReport> {
    check_sweep_args(eps0, levels)?;
    let predicted = special::expansion_coefficient(p, &m.a, &m.xi, g.stratification())?;
    let sweep = Sweep::new(g, &m.base, p, spec, cfg)?;
    let base_inv: Vec<f64> = m.base.coords().iter().map(|c| -c).collect();
    sweep.run(
        |y| {
            let mut z = vec![0.0; y.len()];
            g.multiply_into(&base_inv, y, &mut z);
            eval_local(m, &z)
        },
        m.q0,
        predicted,
        eps0,
        levels,
    )
}

/// Like [`expansion_sweep`] for a smooth `u`, with the prediction taken
/// from its finite-difference quadratic model at `x`.
#[allow(clippy::too_many_arguments)]
pub fn check_amvp<F>(
    g: &GroupModel,
    u: F,
    x: &GroupPoint,
    p: f64,
    eps0: f64,
    levels: usize,
    spec: &QuadratureSpec,
    cfg: &MedianConfig,
) -> Result<SweepReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_sweep_args(eps0, levels)?;
    let model = quadratic_from_function(g, &u, x, None)?;
    let predicted = special::expansion_coefficient(p, &model.a, &model.xi, g.stratification())?;
    let sweep = Sweep::new(g, x, p, spec, cfg)?;
    sweep.run(u, model.q0, predicted, eps0, levels)
}
