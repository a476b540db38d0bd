//! Dirichlet problems for the normalized p-Laplacian, solved by iterating
//! the discrete mean-value operator `u ← μ_p(ε, u)` on a lattice.
//!
//! Each interior node averages, in the `μ_p` sense and with equal weights,
//! the lattice nodes of its `ε`-pseudoball. Updates are Jacobi sweeps, so
//! the result does not depend on node order or thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupModel, GroupPoint};
use crate::median::{self, MedianConfig};

/// Relative slack on the stencil radius, so lattice points exactly on the
/// sphere are kept despite rounding.
const RADIUS_SLACK: f64 = 1e-12;
const MIN_STENCIL: usize = 3;

/// A box-shaped lattice in exponential coordinates.
#[derive(Clone, Debug)]
pub struct GridDomain {
    model: GroupModel,
    lower: Vec<f64>,
    upper: Vec<f64>,
    h: Vec<f64>,
    shape: Vec<usize>,
}

impl GridDomain {
    pub fn new(model: GroupModel, lower: Vec<f64>, upper: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let m = model.dim();
        for (name, v) in [("lower", &lower), ("upper", &upper), ("h", &h)] {
            if v.len() != m {
                return Err(Error::domain(format!(
                    "{name} has {} coordinates, expected {m}",
                    v.len()
                )));
            }
        }
        if !model.has_group_law() {
            return Err(Error::Unsupported("the solver needs the group law".into()));
        }
        let mut shape = Vec::with_capacity(m);
        for c in 0..m {
            if !(lower[c].is_finite() && upper[c].is_finite() && lower[c] < upper[c]) {
                return Err(Error::domain(format!("empty box in coordinate {c}")));
            }
            if !(h[c] > 0.0 && h[c].is_finite()) {
                return Err(Error::domain(format!("grid spacing must be positive, got {}", h[c])));
            }
            shape.push(((upper[c] - lower[c]) / h[c] + 1e-9).floor() as usize + 1);
        }
        Ok(Self {
            model,
            lower,
            upper,
            h,
            shape,
        })
    }

    /// Same box `[lo, hi]` and spacing in every coordinate.
    pub fn uniform(model: GroupModel, lo: f64, hi: f64, h: f64) -> Result<Self> {
        let m = model.dim();
        Self::new(model, vec![lo; m], vec![hi; m], vec![h; m])
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for c in (0..self.shape.len()).rev() {
            out[c] = idx % self.shape[c];
            idx /= self.shape[c];
        }
        out
    }

    fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    /// Coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(c, i)| self.lower[c] + *i as f64 * self.h[c])
            .collect()
    }

    /// Half-widths of the coordinate box containing `B(x, ε)`.
    fn ball_extent(&self, x: &[f64], eps: f64) -> Vec<f64> {
        let strat = self.model.stratification();
        let v1 = strat.layer_dim(1);
        let mut ext = vec![eps; x.len()];
        for (s, b) in self.model.tensors().iter().enumerate() {
            let bx = (0..v1)
                .map(|i| (0..v1).map(|j| b[(i, j)] * x[j]).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            ext[v1 + s] = eps * eps + eps * bx;
        }
        for (c, e) in ext.iter_mut().enumerate().skip(v1 + self.model.tensors().len()) {
            *e = eps.powi(strat.homogeneity()[c] as i32);
        }
        ext
    }

    /// True if the whole `ε`-ball around `x` stays in the box.
    pub fn is_interior(&self, x: &[f64], eps: f64) -> bool {
        let ext = self.ball_extent(x, eps);
        (0..x.len()).all(|c| x[c] - ext[c] >= self.lower[c] - 1e-12 && x[c] + ext[c] <= self.upper[c] + 1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub p: f64,
    pub eps: f64,
    pub tol_sup: f64,
    pub max_iters: u64,
    pub damping: f64,
}

impl SolverConfig {
    pub fn new(p: f64, eps: f64) -> Self {
        Self {
            p,
            eps,
            tol_sup: 1e-8,
            max_iters: 100_000,
            damping: 1.0,
        }
    }

    fn validate(&self, h: f64) -> Result<()> {
        if !(self.tol_sup > 0.0) {
            return Err(Error::domain("tol_sup must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::domain(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::domain(format!("eps must be positive, got {}", self.eps)));
        }
        if self.eps < 2.0 * h {
            return Err(Error::UnderResolved { eps: self.eps, h });
        }
        MedianConfig::new(self.p).validate()
    }

    fn median(&self) -> MedianConfig {
        MedianConfig::new(self.p)
    }
}

/// Interior nodes and their ball neighbourhoods in compressed rows.
#[derive(Clone, Debug)]
pub struct Stencils {
    interior: Vec<usize>,
    offsets: Vec<usize>,
    members: Vec<usize>,
    n_nodes: usize,
}

impl Stencils {
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn stencil(&self, k: usize) -> &[usize] {
        &self.members[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn is_interior(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes];
        self.interior.iter().for_each(|i| mask[*i] = true);
        mask
    }
}

/// Lists, for every interior node `x`, the lattice nodes `y` with
/// `d(y, x) ≤ ε`, including `x` itself.
pub fn build_stencils(dom: &GridDomain, cfg: &SolverConfig) -> Result<Stencils> {
    let strat = dom.model.stratification();
    let v1 = strat.layer_dim(1);
    let h_horizontal = dom.h[..v1].iter().cloned().fold(0.0, f64::max);
    cfg.validate(h_horizontal)?;
    let eps = cfg.eps;
    let rows: Vec<Option<Vec<usize>>> = (0..dom.len())
        .into_par_iter()
        .map(|idx| {
            let x = dom.node(idx);
            if !dom.is_interior(&x, eps) {
                return None;
            }
            let ext = dom.ball_extent(&x, eps);
            let center = dom.multi_index(idx);
            let ranges: Vec<(usize, usize)> = (0..x.len())
                .map(|c| {
                    let k = (ext[c] / dom.h[c] + 1e-9).floor() as usize;
                    (center[c].saturating_sub(k), (center[c] + k).min(dom.shape[c] - 1))
                })
                .collect();
            let xp = GroupPoint::new(x).expect("finite node");
            let mut members = Vec::new();
            let mut cursor: Vec<usize> = ranges.iter().map(|r| r.0).collect();
            loop {
                let j = dom.flat_index(&cursor);
                let y = GroupPoint::new(dom.node(j)).expect("finite node");
                if dom.model.distance(&y, &xp).expect("same dimension") <= eps * (1.0 + RADIUS_SLACK) {
                    members.push(j);
                }
                let mut c = cursor.len();
                loop {
                    if c == 0 {
                        return Some(members);
                    }
                    c -= 1;
                    if cursor[c] < ranges[c].1 {
                        cursor[c] += 1;
                        break;
                    }
                    cursor[c] = ranges[c].0;
                }
            }
        })
        .collect();
    let mut interior = Vec::new();
    let mut offsets = vec![0];
    let mut members = Vec::new();
    for (idx, row) in rows.into_iter().enumerate() {
        if let Some(row) = row {
            if row.len() < MIN_STENCIL {
                return Err(Error::domain(format!(
                    "stencil at node {idx} has {} nodes; refine the grid or enlarge eps",
                    row.len()
                )));
            }
            interior.push(idx);
            members.extend(row);
            offsets.push(members.len());
        }
    }
    if interior.is_empty() {
        return Err(Error::domain("no interior nodes: eps is too large for the box"));
    }
    if interior.len() == dom.len() {
        return Err(Error::domain("empty boundary collar"));
    }
    Ok(Stencils {
        interior,
        offsets,
        members,
        n_nodes: dom.len(),
    })
}

fn update_at(field: &[f64], stencil: &[usize], ones: &[f64], cfg: &MedianConfig) -> Result<f64> {
    let values: Vec<f64> = stencil.iter().map(|j| field[*j]).collect();
    median::mu_p_samples(&values, &ones[..values.len()], cfg)
}

/// One Jacobi sweep `u ← (1−θ)u + θ·μ_p(ε, u)` on interior nodes; returns
/// the new field and the sup-norm change.
pub fn relax_once(field: &[f64], stencils: &Stencils, cfg: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    if field.len() != stencils.n_nodes {
        return Err(Error::DimensionMismatch {
            expected: stencils.n_nodes,
            got: field.len(),
        });
    }
    let mcfg = cfg.median();
    let longest = (0..stencils.interior.len())
        .map(|k| stencils.stencil(k).len())
        .max()
        .unwrap_or(0);
    let ones = vec![1.0; longest];
    let updates = (0..stencils.interior.len())
        .into_par_iter()
        .map(|k| update_at(field, stencils.stencil(k), &ones, &mcfg))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = field.to_vec();
    let mut change = 0.0f64;
    for (k, mu) in updates.into_iter().enumerate() {
        let i = stencils.interior[k];
        let new = (1.0 - cfg.damping) * field[i] + cfg.damping * mu;
        change = change.max((new - field[i]).abs());
        out[i] = new;
    }
    Ok((out, change))
}

/// Starting values on interior nodes.
pub enum Initial<'a> {
    Constant(f64),
    /// Midpoint of the boundary data range.
    Midrange,
    Function(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub values: Vec<f64>,
    pub iterations: u64,
    pub sup_change: f64,
    /// `max |u − μ_p(ε, u)|` over interior nodes.
    pub residual: f64,
    pub converged: bool,
    pub data_min: f64,
    pub data_max: f64,
    pub n_nodes: usize,
    pub n_interior: usize,
}

/// Iterates the mean-value operator to a fixed point with `boundary`
/// imposed on the collar. Hitting `max_iters` yields a report with
/// `converged = false`, not an error.
pub fn solve<B>(
    dom: &GridDomain,
    stencils: &Stencils,
    boundary: B,
    initial: Initial<'_>,
    cfg: &SolverConfig,
) -> Result<SolveReport>
where
    B: Fn(&[f64]) -> f64 + Sync,
{
    if stencils.n_nodes != dom.len() {
        return Err(Error::DimensionMismatch {
            expected: dom.len(),
            got: stencils.n_nodes,
        });
    }
    let mask = stencils.is_interior();
    let mut field: Vec<f64> = (0..dom.len())
        .into_par_iter()
        .map(|i| if mask[i] { f64::NAN } else { boundary(&dom.node(i)) })
        .collect();
    let (data_min, data_max) = field
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if !(data_min.is_finite() && data_max.is_finite()) {
        return Err(Error::domain("boundary data must be finite on the collar"));
    }
    for &i in &stencils.interior {
        field[i] = match &initial {
            Initial::Constant(c) => *c,
            Initial::Midrange => 0.5 * (data_min + data_max),
            Initial::Function(f) => f(&dom.node(i)),
        };
        if !field[i].is_finite() {
            return Err(Error::domain("initial values must be finite"));
        }
    }
    let mut iterations = 0;
    let mut sup_change = f64::INFINITY;
    while iterations < cfg.max_iters {
        let (next, change) = relax_once(&field, stencils, cfg)?;
        field = next;
        sup_change = change;
        iterations += 1;
        if change <= cfg.tol_sup {
            break;
        }
    }
    let undamped = SolverConfig { damping: 1.0, ..*cfg };
    let (_, residual) = relax_once(&field, stencils, &undamped)?;
    Ok(SolveReport {
        values: field,
        iterations,
        sup_change,
        residual,
        converged: sup_change <= cfg.tol_sup,
        data_min,
        data_max,
        n_nodes: dom.len(),
        n_interior: stencils.interior.len(),
    })
}
