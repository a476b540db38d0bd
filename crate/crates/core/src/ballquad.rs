//! Sampling and quadrature over pseudoballs.
//!
//! Every estimator draws proposals uniformly from a box containing the ball
//! and rejects those outside. On the unit ball each layer term of the gauge
//! is at most one, so `[−1, 1]^m` contains it. Proposals are produced in
//! batches; batch `b` uses ChaCha8 stream `b` under the run seed, and batch
//! results are reduced in index order, so estimates do not depend on the
//! number of worker threads.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupModel, GroupPoint, Stratification};
use crate::median::CompensatedSum;

/// Proposals at or beyond which a tiny acceptance ratio is reported as an error.
pub const FEASIBILITY_PROPOSALS: u64 = 10_000_000;
pub const FEASIBILITY_RATIO: f64 = 1e-6;
/// Independent randomizations of the low-discrepancy sequence.
pub const QMC_REPLICATES: usize = 16;
/// `|y₁|` below which the weight `|y₁|^{p−2}` is set to zero for `p < 2`.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    PseudorandomRejection,
    LowDiscrepancyRejection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Number of box proposals.
    pub n_samples: u64,
    pub seed: u64,
    pub method: SamplingMethod,
    /// Proposals per parallel batch.
    pub batch: u64,
}

impl QuadratureSpec {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            method: SamplingMethod::PseudorandomRejection,
            batch: 1 << 16,
        }
    }

    pub fn low_discrepancy(mut self) -> Self {
        self.method = SamplingMethod::LowDiscrepancyRejection;
        self
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::domain("n_samples must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::domain("batch must be at least 1"));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// Proposals behind the estimate.
    pub n: u64,
}

impl Estimate {
    /// `(value − truth)/std_error`. A zero error means the estimator was
    /// exact; it scores zero when it matches to rounding and infinity otherwise.
    pub fn z_score(&self, truth: f64) -> f64 {
        let diff = self.value - truth;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 64.0 * f64::EPSILON * truth.abs().max(f64::MIN_POSITIVE) {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }

    pub fn agrees_with(&self, truth: f64, n_sigma: f64) -> bool {
        self.z_score(truth).abs() <= n_sigma
    }
}

trait Merge: Send {
    fn merge(&mut self, other: Self);
}

#[derive(Default)]
struct Points(Vec<f64>);

impl Merge for Points {
    fn merge(&mut self, other: Self) {
        self.0.extend(other.0);
    }
}

/// Compensated sums of per-proposal pairs `(a, b)`; rejected proposals
/// contribute zeros.
#[derive(Clone, Copy, Default, Debug)]
struct Moments {
    accepted: u64,
    sa: CompensatedSum,
    sb: CompensatedSum,
    saa: CompensatedSum,
    sbb: CompensatedSum,
    sab: CompensatedSum,
}

impl Moments {
    fn push(&mut self, a: f64, b: f64) {
        self.accepted += 1;
        self.sa.add(a);
        self.sb.add(b);
        self.saa.add(a * a);
        self.sbb.add(b * b);
        self.sab.add(a * b);
    }

    /// Mean of `a` over `n` proposals and its standard error.
    fn mean(&self, n: u64) -> (f64, f64) {
        let nf = n as f64;
        let mean = self.sa.value() / nf;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = ((self.saa.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (mean, (var / nf).sqrt())
    }

    /// Ratio `Σa/Σb` with its delta-method standard error.
    fn ratio(&self, n: u64) -> (f64, f64) {
        let (sa, sb) = (self.sa.value(), self.sb.value());
        let r = sa / sb;
        let nf = n as f64;
        let resid = (self.saa.value() - 2.0 * r * self.sab.value() + r * r * self.sbb.value()).max(0.0);
        let se = if n < 2 {
            0.0
        } else {
            (resid * nf / (nf - 1.0)).sqrt() / sb.abs()
        };
        (r, se)
    }
}

impl Merge for Moments {
    fn merge(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.sa.merge(o.sa);
        self.sb.merge(o.sb);
        self.saa.merge(o.saa);
        self.sbb.merge(o.sbb);
        self.sab.merge(o.sab);
    }
}

struct Block<A> {
    acc: A,
    proposals: u64,
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= c).all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Runs `visit` on `n_samples` uniform points of `[0,1)^m` and returns one
/// block per independent replicate (a single block for pseudorandom runs).
fn run_blocks<A, I, F>(spec: &QuadratureSpec, m: usize, init: I, visit: F) -> Result<Vec<Block<A>>>
where
    A: Merge,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[f64]) + Sync,
{
    spec.validate()?;
    let blocks = match spec.method {
        SamplingMethod::PseudorandomRejection => {
            let n = spec.n_samples;
            let n_batches = n.div_ceil(spec.batch);
            let parts: Vec<A> = (0..n_batches)
                .into_par_iter()
                .map(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(b);
                    let count = spec.batch.min(n - b * spec.batch);
                    let mut acc = init();
                    let mut u = vec![0.0; m];
                    for _ in 0..count {
                        u.iter_mut().for_each(|x| *x = rng.random::<f64>());
                        visit(&mut acc, &u);
                    }
                    acc
                })
                .collect();
            let mut acc = init();
            for part in parts {
                acc.merge(part);
            }
            vec![Block { acc, proposals: n }]
        }
        SamplingMethod::LowDiscrepancyRejection => {
            let per = (spec.n_samples / QMC_REPLICATES as u64).max(1);
            let bases = primes(m);
            (0..QMC_REPLICATES)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(u64::MAX - r as u64);
                    let shift: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                    let n_batches = per.div_ceil(spec.batch);
                    let parts: Vec<A> = (0..n_batches)
                        .into_par_iter()
                        .map(|b| {
                            let start = b * spec.batch;
                            let end = (start + spec.batch).min(per);
                            let mut acc = init();
                            let mut u = vec![0.0; m];
                            for i in start..end {
                                for (d, x) in u.iter_mut().enumerate() {
                                    *x = (radical_inverse(i + 1, bases[d]) + shift[d]).fract();
                                }
                                visit(&mut acc, &u);
                            }
                            acc
                        })
                        .collect();
                    let mut acc = init();
                    for part in parts {
                        acc.merge(part);
                    }
                    Block { acc, proposals: per }
                })
                .collect()
        }
    };
    Ok(blocks)
}

fn check_feasible(accepted: u64, proposals: u64) -> Result<()> {
    let ratio = accepted as f64 / proposals as f64;
    if proposals >= FEASIBILITY_PROPOSALS && ratio < FEASIBILITY_RATIO {
        return Err(Error::Feasibility { ratio, proposals });
    }
    Ok(())
}

fn estimate_from_blocks(blocks: &[Block<Moments>], ratio: bool) -> Estimate {
    let n: u64 = blocks.iter().map(|b| b.proposals).sum();
    if blocks.len() == 1 {
        let b = &blocks[0];
        let (value, std_error) = if ratio {
            b.acc.ratio(b.proposals)
        } else {
            b.acc.mean(b.proposals)
        };
        return Estimate { value, std_error, n };
    }
    let vals: Vec<f64> = blocks
        .iter()
        .map(|b| {
            if ratio {
                b.acc.ratio(b.proposals).0
            } else {
                b.acc.mean(b.proposals).0
            }
        })
        .collect();
    let (value, std_error) = spread(&vals);
    Estimate { value, std_error, n }
}

/// Mean of replicate estimates and the standard error of that mean.
fn spread(vals: &[f64]) -> (f64, f64) {
    let r = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / r;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Quadrature nodes over a pseudoball.
///
/// Points are stored flat, `dim` coordinates each. Within each replicate
/// block every accepted proposal carries the same weight, so the weights sum
/// to the estimated ball volume.
#[derive(Clone, Debug)]
pub struct SampleCloud {
    strat: Stratification,
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    center: Vec<f64>,
    radius: f64,
    blocks: Vec<(Range<usize>, u64)>,
    /// Proposal volume per block times the ball scaling.
    box_volume: f64,
    antithetic: bool,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stratification(&self) -> &Stratification {
        &self.strat
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim.max(1))
    }

    pub fn group_point(&self, i: usize) -> GroupPoint {
        GroupPoint::new(self.point(i).to_vec()).expect("finite")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_proposals(&self) -> u64 {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn volume_estimate(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Evaluates `f` at every node and stores the results as the cloud's values.
    pub fn fill_values<F>(&mut self, f: F)
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let dim = self.dim.max(1);
        self.values = self.points.par_chunks(dim).map(f).collect();
    }

    /// Appends the point reflection `y ↦ −y` of every node and halves the
    /// weights. The unit ball is invariant under the reflection, so this is
    /// an antithetic variance reduction; it requires a centered cloud.
    pub fn symmetrized(&self) -> Result<SampleCloud> {
        if self.center.iter().any(|c| *c != 0.0) || self.antithetic {
            return Err(Error::domain("only centered, unsymmetrized clouds can be reflected"));
        }
        let mut out = self.clone();
        out.points.extend(self.points.iter().map(|c| -c));
        out.weights.iter_mut().for_each(|w| *w *= 0.5);
        let half = out.weights.clone();
        out.weights.extend(half);
        out.values.clear();
        out.antithetic = true;
        Ok(out)
    }

    /// Pushes the unit-ball nodes forward under `z ↦ x·δ_ε(z)`.
    fn translate_dilate(&self, g: &GroupModel, x: &GroupPoint, eps: f64) -> SampleCloud {
        let strat = g.stratification();
        let dim = self.dim;
        let mut points = vec![0.0; self.points.len()];
        points
            .par_chunks_mut(dim)
            .zip(self.points.par_chunks(dim))
            .for_each(|(out, z)| {
                let mut scaled = z.to_vec();
                strat.dilate_in_place(eps, &mut scaled);
                g.multiply_into(x.coords(), &scaled, out);
            });
        let scale = eps.powi(strat.hom_dim() as i32);
        SampleCloud {
            strat: strat.clone(),
            dim,
            points,
            weights: self.weights.iter().map(|w| w * scale).collect(),
            values: Vec::new(),
            center: x.coords().to_vec(),
            radius: eps,
            blocks: self.blocks.clone(),
            box_volume: self.box_volume * scale,
            antithetic: self.antithetic,
        }
    }
}

/// Rejection-samples the unit pseudoball `{|y| ≤ 1}` from `[−1, 1]^m`.
pub fn sample_unit_ball(strat: &Stratification, spec: &QuadratureSpec) -> Result<SampleCloud> {
    let m = strat.total_dim();
    let blocks = run_blocks(spec, m, Points::default, |acc, u| {
        let start = acc.0.len();
        acc.0.extend(u.iter().map(|x| 2.0 * x - 1.0));
        if strat.gauge(&acc.0[start..]) > 1.0 {
            acc.0.truncate(start);
        }
    })?;
    let box_volume = 2f64.powi(m as i32);
    let replicates = blocks.len() as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut ranges = Vec::with_capacity(blocks.len());
    for block in blocks {
        let start = weights.len();
        let count = block.acc.0.len() / m;
        check_feasible(count as u64, block.proposals)?;
        let w = box_volume / block.proposals as f64 / replicates;
        weights.extend(std::iter::repeat_n(w, count));
        points.extend(block.acc.0);
        ranges.push((start..weights.len(), block.proposals));
    }
    Ok(SampleCloud {
        strat: strat.clone(),
        dim: m,
        points,
        weights,
        values: Vec::new(),
        center: vec![0.0; m],
        radius: 1.0,
        blocks: ranges,
        box_volume,
        antithetic: false,
    })
}

/// Nodes of `B(x, ε)` as `x·δ_ε(z)` for unit-ball nodes `z`; weights scale by `ε^Q`.
pub fn sample_ball(g: &GroupModel, x: &GroupPoint, eps: f64, spec: &QuadratureSpec) -> Result<SampleCloud> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("ball radius must be positive, got {eps}")));
    }
    if x.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.dim(),
        });
    }
    if !g.has_group_law() {
        return Err(Error::Unsupported("balls off the identity need the group law".into()));
    }
    let unit = sample_unit_ball(g.stratification(), spec)?;
    Ok(unit.translate_dilate(g, x, eps))
}

/// Estimates `∫_ball f` from node values aligned with `cloud`.
///
/// The standard error is taken over all proposals, rejected ones counting
/// as zero, so it includes the acceptance-ratio noise.
pub fn integrate(cloud: &SampleCloud, values: &[f64]) -> Result<Estimate> {
    if values.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("integrand values must be finite"));
    }
    let half = cloud.len() / 2;
    let per_block: Vec<Estimate> = cloud
        .blocks
        .iter()
        .map(|(range, proposals)| {
            let mut m = Moments::default();
            let scale = cloud.box_volume;
            for i in range.clone() {
                let v = if cloud.antithetic {
                    0.5 * (values[i] + values[i + half])
                } else {
                    values[i]
                };
                m.push(scale * v, 0.0);
            }
            let (value, std_error) = m.mean(*proposals);
            Estimate {
                value,
                std_error,
                n: *proposals,
            }
        })
        .collect();
    if per_block.len() == 1 {
        return Ok(per_block[0]);
    }
    let vals: Vec<f64> = per_block.iter().map(|e| e.value).collect();
    let (value, std_error) = spread(&vals);
    Ok(Estimate {
        value,
        std_error,
        n: cloud.n_proposals(),
    })
}

/// `|y₁|^{p−2}` with the hard zero below [`SINGULAR_CUTOFF`] for `p < 2`.
pub fn horizontal_weight(y1: f64, p: f64) -> f64 {
    if p < 2.0 && y1.abs() < SINGULAR_CUTOFF {
        0.0
    } else {
        y1.abs().powf(p - 2.0)
    }
}

/// `∫_B |y₁|^{p−2} dy` over the unit ball by direct weighting of a cloud.
pub fn moment_i_numeric(strat: &Stratification, p: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("p must be a finite number above 1, got {p}")));
    }
    let mut cloud = sample_unit_ball(strat, spec)?;
    cloud.fill_values(|y| horizontal_weight(y[0], p));
    let values = std::mem::take(&mut cloud.values);
    integrate(&cloud, &values)
}

/// Volume of `B(0, R)` sampled directly from `∏[−R^{σ_j}, R^{σ_j}]`,
/// without using the dilation structure.
pub fn ball_volume_direct(strat: &Stratification, radius: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::domain(format!("ball radius must be positive, got {radius}")));
    }
    let half: Vec<f64> = strat.homogeneity().iter().map(|s| radius.powi(*s as i32)).collect();
    let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();
    let m = strat.total_dim();
    let blocks = run_blocks(spec, m, Moments::default, |acc, u| {
        let y: Vec<f64> = u.iter().zip(&half).map(|(x, h)| (2.0 * x - 1.0) * h).collect();
        if strat.gauge(&y) <= radius {
            acc.push(box_volume, 1.0);
        }
    })?;
    for b in &blocks {
        check_feasible(b.acc.accepted, b.proposals)?;
    }
    Ok(estimate_from_blocks(&blocks, false))
}

fn check_square(c: &DMatrix<f64>, n: usize) -> Result<()> {
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.nrows().max(c.ncols()),
        });
    }
    Ok(())
}

/// Monte-Carlo value of
/// `γ₀ = ∫_B |y₁|^{p−2}(½⟨C y⁽¹⁾, y⁽¹⁾⟩ + ⟨η, y⁽²⁾⟩) dy / ∫_B |y₁|^{p−2} dy`.
///
/// The first coordinate is drawn as `y₁ = sign(s)|s|^{1/(p−1)}` with `s`
/// uniform on `[−1, 1]`, which turns `|y₁|^{p−2} dy₁` into a constant times
/// `ds`; γ₀ is then the plain mean of the bracket over accepted proposals.
pub fn gamma0_numeric(
    strat: &Stratification,
    p: f64,
    c_matrix: &DMatrix<f64>,
    eta: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("p must be a finite number above 1, got {p}")));
    }
    let v1 = strat.layer_dim(1);
    check_square(c_matrix, v1)?;
    let v2 = if strat.step() >= 2 { strat.layer_dim(2) } else { 0 };
    if eta.len() != v2 {
        return Err(Error::DimensionMismatch {
            expected: v2,
            got: eta.len(),
        });
    }
    let m = strat.total_dim();
    let power = 1.0 / (p - 1.0);
    let blocks = run_blocks(spec, m, Moments::default, |acc, u| {
        let mut y: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
        y[0] = y[0].signum() * y[0].abs().powf(power);
        if strat.gauge(&y) > 1.0 {
            return;
        }
        let mut quad = 0.0;
        for i in 0..v1 {
            for j in 0..v1 {
                quad += c_matrix[(i, j)] * y[i] * y[j];
            }
        }
        let vertical: f64 = eta.iter().zip(&y[v1..v1 + v2]).map(|(e, z)| e * z).sum();
        acc.push(0.5 * quad + vertical, 1.0);
    })?;
    for b in &blocks {
        check_feasible(b.acc.accepted, b.proposals)?;
        if b.acc.accepted == 0 {
            return Err(Error::Feasibility {
                ratio: 0.0,
                proposals: b.proposals,
            });
        }
    }
    Ok(estimate_from_blocks(&blocks, true))
}

/// Monte-Carlo value of `∫_{T_n} x₁^{α₁}⋯x_n^{α_n} dx` over the
/// positive-orthant unit ball.
///
/// Coordinates are drawn as `x_i = u_i^{1/(α_i+1)}`, so the integrand
/// becomes the constant `∏ 1/(α_i+1)` on the accepted region.
pub fn dirichlet_oracle(alphas: &[f64], spec: &QuadratureSpec) -> Result<Estimate> {
    if alphas.is_empty() {
        return Err(Error::domain("need at least one exponent"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > -1.0) || !a.is_finite()) {
        return Err(Error::domain(format!("exponents must exceed -1, got {a}")));
    }
    let powers: Vec<f64> = alphas.iter().map(|a| 1.0 / (a + 1.0)).collect();
    let jacobian: f64 = powers.iter().product();
    let blocks = run_blocks(spec, alphas.len(), Moments::default, |acc, u| {
        let r2: f64 = u.iter().zip(&powers).map(|(x, e)| x.powf(*e).powi(2)).sum();
        if r2 <= 1.0 {
            acc.push(jacobian, 1.0);
        }
    })?;
    Ok(estimate_from_blocks(&blocks, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special;
    use std::f64::consts::PI;

    fn strat(v: &[usize]) -> Stratification {
        Stratification::new(v.to_vec()).unwrap()
    }

    #[test]
    fn disk_in_square() {
        let cloud = sample_unit_ball(&strat(&[2]), &QuadratureSpec::new(400_000, 7)).unwrap();
        let ones = vec![1.0; cloud.len()];
        let est = integrate(&cloud, &ones).unwrap();
        assert!(est.agrees_with(PI, 3.0), "{est:?}");
        assert!((est.value - cloud.volume_estimate()).abs() < 1e-9);
        let ratio = cloud.len() as f64 / cloud.n_proposals() as f64;
        assert!((ratio - PI / 4.0).abs() < 3.0 * est.std_error / 4.0);
    }

    #[test]
    fn h1_volume_matches_closed_form() {
        let cloud = sample_unit_ball(&strat(&[2, 1]), &QuadratureSpec::new(400_000, 3)).unwrap();
        let est = integrate(&cloud, &vec![1.0; cloud.len()]).unwrap();
        let closed = special::moment_i_closed(2.0, &strat(&[2, 1])).unwrap();
        assert!(est.agrees_with(closed, 3.0), "{est:?} vs {closed}");
        assert!(cloud.points().all(|y| strat(&[2, 1]).gauge(y) <= 1.0));
    }

    #[test]
    fn single_proposal_is_reproducible() {
        let spec = QuadratureSpec::new(1, 42);
        let a = sample_unit_ball(&strat(&[2, 1]), &spec).unwrap();
        let b = sample_unit_ball(&strat(&[2, 1]), &spec).unwrap();
        assert_eq!(a.n_proposals(), 1);
        assert!(a.len() <= 1);
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn reproducible_and_batch_layout_independent_of_threads() {
        let spec = QuadratureSpec::new(50_000, 11).with_batch(1000);
        let a = sample_unit_ball(&strat(&[2, 1]), &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_unit_ball(&strat(&[2, 1]), &spec).unwrap());
        assert_eq!(a.points, b.points);
        assert_eq!(a.weights, b.weights);
        let c = sample_unit_ball(&strat(&[2, 1]), &QuadratureSpec::new(50_000, 12).with_batch(1000)).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_unit_ball(&strat(&[2]), &QuadratureSpec::new(0, 1)).is_err());
        assert!(sample_unit_ball(&strat(&[2]), &QuadratureSpec::new(10, 1).with_batch(0)).is_err());
    }

    #[test]
    fn sample_ball_identity_case() {
        let g = GroupModel::heisenberg(1).unwrap();
        let spec = QuadratureSpec::new(20_000, 5);
        let unit = sample_unit_ball(g.stratification(), &spec).unwrap();
        let ball = sample_ball(&g, &GroupPoint::zero(3), 1.0, &spec).unwrap();
        assert_eq!(unit.points, ball.points);
        assert_eq!(unit.weights, ball.weights);
        assert!(sample_ball(&g, &GroupPoint::zero(3), 0.0, &spec).is_err());
    }

    #[test]
    fn sample_ball_scaling_and_translation() {
        let g = GroupModel::heisenberg(1).unwrap();
        let spec = QuadratureSpec::new(400_000, 9);
        let unit_vol = special::moment_i_closed(2.0, g.stratification()).unwrap();
        let x = GroupPoint::new(vec![0.7, -1.1, 2.0]).unwrap();
        let ball = sample_ball(&g, &x, 0.5, &spec).unwrap();
        for i in (0..ball.len()).step_by(97) {
            assert!(g.distance(&ball.group_point(i), &x).unwrap() <= 0.5 * (1.0 + 1e-12));
        }
        let est = integrate(&ball, &vec![1.0; ball.len()]).unwrap();
        assert!(est.agrees_with(0.5f64.powi(4) * unit_vol, 3.0), "{est:?}");
        // the same volume at the identity, from an independent seed
        let other = sample_ball(&g, &GroupPoint::zero(3), 0.5, &QuadratureSpec::new(400_000, 10)).unwrap();
        let est0 = integrate(&other, &vec![1.0; other.len()]).unwrap();
        let diff = (est.value - est0.value).abs();
        assert!(diff <= 3.0 * (est.std_error.powi(2) + est0.std_error.powi(2)).sqrt());
    }

    #[test]
    fn odd_integrands_vanish() {
        let cloud = sample_unit_ball(&strat(&[2, 1]), &QuadratureSpec::new(400_000, 21)).unwrap();
        let values: Vec<f64> = cloud.points().map(|y| y[0] + y[1] * y[1] * y[0]).collect();
        let est = integrate(&cloud, &values).unwrap();
        assert!(est.agrees_with(0.0, 3.0));
        let values: Vec<f64> = cloud.points().map(|y| y[2] * (1.0 + y[0] * y[0])).collect();
        assert!(integrate(&cloud, &values).unwrap().agrees_with(0.0, 3.0));
    }

    #[test]
    fn moment_i_against_closed_form() {
        let s = strat(&[2, 1]);
        for (p, seed) in [(3.0, 1u64), (4.0, 2)] {
            let est = moment_i_numeric(&s, p, &QuadratureSpec::new(400_000, seed)).unwrap();
            let closed = special::moment_i_closed(p, &s).unwrap();
            assert!(est.agrees_with(closed, 3.0), "p={p}: {est:?} vs {closed}");
        }
        let s3 = strat(&[2, 1, 1]);
        let est = moment_i_numeric(&s3, 2.5, &QuadratureSpec::new(400_000, 3)).unwrap();
        let closed = special::moment_i_closed(2.5, &s3).unwrap();
        assert!(est.agrees_with(closed, 3.0), "{est:?} vs {closed}");
    }

    #[test]
    fn scaling_law_of_weighted_moment() {
        // ∫_{B(0,λ)} |y1|^{p-2} = λ^{Q+p-2} ∫_{B(0,1)} |y1|^{p-2}
        let g = GroupModel::heisenberg(1).unwrap();
        let p = 3.0;
        let mut est = Vec::new();
        for (r, seed) in [(1.0, 31u64), (0.5, 32)] {
            let mut cloud = sample_ball(&g, &GroupPoint::zero(3), r, &QuadratureSpec::new(300_000, seed)).unwrap();
            cloud.fill_values(|y| horizontal_weight(y[0], p));
            let v = cloud.values().to_vec();
            est.push(integrate(&cloud, &v).unwrap());
        }
        let scale = 0.5f64.powf(4.0 + p - 2.0);
        let diff = est[1].value - scale * est[0].value;
        let se = (est[1].std_error.powi(2) + (scale * est[0].std_error).powi(2)).sqrt();
        assert!(diff.abs() <= 3.0 * se);
    }

    #[test]
    fn gamma0_examples() {
        let s = strat(&[2, 1]);
        let spec = QuadratureSpec::new(400_000, 17);
        let zero = DMatrix::zeros(2, 2);
        assert!(gamma0_numeric(&s, 3.0, &zero, &[1.5], &spec)
            .unwrap()
            .agrees_with(0.0, 3.0));
        let id = DMatrix::identity(2, 2);
        let est = gamma0_numeric(&s, 2.0, &id, &[0.0], &spec).unwrap();
        assert!(est.agrees_with(2.0 / (3.0 * PI), 3.0), "{est:?}");
        let est = gamma0_numeric(&s, 3.0, &id, &[0.4], &spec).unwrap();
        let c3 = special::c_heisenberg1(3.0).unwrap();
        assert!(est.agrees_with(3.0 * c3, 3.0), "{est:?}");
        assert!(gamma0_numeric(&s, 3.0, &id, &[], &spec).is_err());
        assert!(gamma0_numeric(&s, 1.0, &id, &[0.0], &spec).is_err());
    }

    #[test]
    fn gamma0_step3_against_constant() {
        let s = strat(&[1, 1, 1]);
        let c = DMatrix::from_element(1, 1, 1.0);
        for (p, seed) in [(2.0, 4u64), (3.0, 5)] {
            let est = gamma0_numeric(&s, p, &c, &[0.0], &QuadratureSpec::new(400_000, seed)).unwrap();
            let closed = special::gamma0_closed(p, &c, &s).unwrap();
            assert!(est.agrees_with(closed, 3.0), "p={p}: {est:?} vs {closed}");
        }
    }

    #[test]
    fn dirichlet_examples() {
        let spec = QuadratureSpec::new(400_000, 8);
        assert!(dirichlet_oracle(&[0.0, 0.0], &spec).unwrap().agrees_with(PI / 4.0, 3.0));
        assert!(dirichlet_oracle(&[2.0, 0.0, 0.0], &spec)
            .unwrap()
            .agrees_with(PI / 30.0, 3.0));
        assert!(dirichlet_oracle(&[-0.5], &spec).unwrap().agrees_with(2.0, 3.0));
        assert!(dirichlet_oracle(&[-1.0], &spec).is_err());
    }

    #[test]
    fn low_discrepancy_mode() {
        let spec = QuadratureSpec::new(160_000, 2).low_discrepancy();
        let est = dirichlet_oracle(&[0.0, 0.0], &spec).unwrap();
        assert!(est.agrees_with(PI / 4.0, 3.0), "{est:?}");
        assert!(est.std_error > 0.0 && est.std_error < 1e-3);
        let cloud = sample_unit_ball(&strat(&[2, 1]), &spec).unwrap();
        let vol = integrate(&cloud, &vec![1.0; cloud.len()]).unwrap();
        assert!(vol.agrees_with(PI * PI / 2.0, 3.0), "{vol:?}");
        let again = dirichlet_oracle(&[0.0, 0.0], &spec).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn direct_volume_scaling() {
        let s = strat(&[2, 1]);
        let v1 = ball_volume_direct(&s, 1.0, &QuadratureSpec::new(400_000, 1)).unwrap();
        let v2 = ball_volume_direct(&s, 2.0, &QuadratureSpec::new(400_000, 2)).unwrap();
        let diff = v2.value / 16.0 - v1.value;
        let se = ((v2.std_error / 16.0).powi(2) + v1.std_error.powi(2)).sqrt();
        assert!(diff.abs() <= 3.0 * se);
    }

    #[test]
    fn symmetrized_cloud() {
        let cloud = sample_unit_ball(&strat(&[2, 1]), &QuadratureSpec::new(100_000, 1)).unwrap();
        let sym = cloud.symmetrized().unwrap();
        assert_eq!(sym.len(), 2 * cloud.len());
        assert!((sym.volume_estimate() - cloud.volume_estimate()).abs() < 1e-9);
        let odd: Vec<f64> = sym.points().map(|y| y[0] * y[0] * y[0] + y[2]).collect();
        assert!(integrate(&sym, &odd).unwrap().value.abs() < 1e-12);
        assert!(sym.symmetrized().is_err());
    }
}
