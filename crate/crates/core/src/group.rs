//! Carnot group arithmetic in exponential coordinates.
//!
//! A point of a step-`k` group is a vector of `ℝ^m` split into layers
//! `x⁽¹⁾, …, x⁽ᵏ⁾` of dimensions `v₁, …, v_k`. Dilations scale layer `j` by
//! `λʲ` and the homogeneous gauge is
//!
//! ```text
//! |x| = ( Σ_j ‖x⁽ʲ⁾‖^(2k!/j) )^(1/(2k!))
//! ```
//!
//! Group multiplication is provided for step ≤ 2 (Euclidean, Heisenberg and
//! generic step-2 laws with skew-symmetric second-layer tensors). Everything
//! that depends only on the stratification works for any step.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer dimensions `(v₁, …, v_k)` of a graded Lie algebra.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Stratification {
    layer_dims: Vec<usize>,
    /// Cumulative layer ends `h_1, …, h_k`.
    ends: Vec<usize>,
}

impl Stratification {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.is_empty() {
            return Err(Error::domain("a stratification needs at least one layer"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::domain("layer dimensions must be positive"));
        }
        let ends = layer_dims
            .iter()
            .scan(0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        Ok(Self { layer_dims, ends })
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.ends.last().expect("nonempty")
    }

    /// Dimension of layer `j` (1-based).
    pub fn layer_dim(&self, j: usize) -> usize {
        self.layer_dims[j - 1]
    }

    /// Coordinate range of layer `j` (1-based).
    pub fn layer_range(&self, j: usize) -> Range<usize> {
        let start = if j == 1 { 0 } else { self.ends[j - 2] };
        start..self.ends[j - 1]
    }

    /// Per-coordinate homogeneity `σ_j`.
    pub fn homogeneity(&self) -> Vec<u32> {
        self.layer_dims
            .iter()
            .enumerate()
            .flat_map(|(i, &v)| std::iter::repeat_n(i as u32 + 1, v))
            .collect()
    }

    /// Homogeneous dimension `Q = Σ i·v_i`.
    pub fn hom_dim(&self) -> usize {
        self.layer_dims.iter().enumerate().map(|(i, v)| (i + 1) * v).sum()
    }

    /// The gauge exponent `2k!`.
    pub fn gauge_exponent(&self) -> f64 {
        2.0 * (1..=self.step()).map(|i| i as f64).product::<f64>()
    }

    /// Homogeneous gauge of a raw coordinate vector.
    ///
    /// Evaluated as `M·(Σ (r_j/M)^(2k!))^(1/(2k!))` with `r_j = ‖x⁽ʲ⁾‖^(1/j)`
    /// and `M = max r_j`, which is exact and cannot overflow for large `k!`.
    pub fn gauge(&self, coords: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.total_dim());
        let radii: Vec<f64> = (1..=self.step())
            .map(|j| {
                let sq: f64 = coords[self.layer_range(j)].iter().map(|c| c * c).sum();
                sq.sqrt().powf(1.0 / j as f64)
            })
            .collect();
        let max = radii.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let n = self.gauge_exponent();
        let sum: f64 = radii.iter().map(|r| (r / max).powf(n)).sum();
        max * sum.powf(1.0 / n)
    }

    /// Dilation `δ_λ` applied to raw coordinates in place.
    pub fn dilate_in_place(&self, lambda: f64, coords: &mut [f64]) {
        let mut scale = 1.0;
        for j in 1..=self.step() {
            scale *= lambda;
            for c in &mut coords[self.layer_range(j)] {
                *c *= scale;
            }
        }
    }
}

impl TryFrom<Vec<usize>> for Stratification {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Stratification> for Vec<usize> {
    fn from(s: Stratification) -> Self {
        s.layer_dims
    }
}

impl fmt::Display for Stratification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.layer_dims.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", dims.join(","))
    }
}

/// A point of `ℝ^m` read in exponential coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupPoint(Vec<f64>);

impl GroupPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("point coordinates must be finite"));
        }
        Ok(Self(coords))
    }

    pub fn zero(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The `j`-th layer `x⁽ʲ⁾` (1-based).
    pub fn layer<'a>(&'a self, strat: &Stratification, j: usize) -> &'a [f64] {
        &self.0[strat.layer_range(j)]
    }
}

impl From<GroupPoint> for Vec<f64> {
    fn from(p: GroupPoint) -> Self {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Euclidean,
    Heisenberg,
    Step2,
    /// Stratification only: dilations and gauge, no group law beyond step 1.
    Graded,
}

/// A concrete group: its stratification and, for step 2, the skew tensors
/// `B_s` of the law `z⁽²⁾_s = x⁽²⁾_s + y⁽²⁾_s + ⟨B_s x⁽¹⁾, y⁽¹⁾⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupModel {
    kind: ModelKind,
    strat: Stratification,
    tensors: Vec<DMatrix<f64>>,
}

const SKEW_TOL: f64 = 1e-14;

impl GroupModel {
    pub fn euclidean(n: usize) -> Result<Self> {
        Ok(Self {
            kind: ModelKind::Euclidean,
            strat: Stratification::euclidean(n)?,
            tensors: Vec::new(),
        })
    }

    /// `H_n` in coordinates `(x_1..x_n, y_1..y_n, t)` with
    /// `t = t₁ + t₂ + 2 Σ (y_i x'_i − x_i y'_i)`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("Heisenberg group needs n >= 1"));
        }
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            b[(i, n + i)] = 2.0;
            b[(n + i, i)] = -2.0;
        }
        Ok(Self {
            kind: ModelKind::Heisenberg,
            strat: Stratification::new(vec![2 * n, 1])?,
            tensors: vec![b],
        })
    }

    pub fn step2(n: usize, tensors: Vec<DMatrix<f64>>) -> Result<Self> {
        if n == 0 || tensors.is_empty() {
            return Err(Error::domain("step-2 group needs n >= 1 and at least one tensor"));
        }
        for (s, b) in tensors.iter().enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::domain(format!("B{} must be {n}x{n}", s + 1)));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("B{} has non-finite entries", s + 1)));
            }
            let scale = b.amax().max(1.0);
            if (b + b.transpose()).amax() > SKEW_TOL * scale {
                return Err(Error::domain(format!("B{} must be skew-symmetric", s + 1)));
            }
        }
        Ok(Self {
            kind: ModelKind::Step2,
            strat: Stratification::new(vec![n, tensors.len()])?,
            tensors,
        })
    }

    /// A model carrying only its stratification. Step 1 behaves as Euclidean.
    pub fn graded(strat: Stratification) -> Self {
        Self {
            kind: ModelKind::Graded,
            strat,
            tensors: Vec::new(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn stratification(&self) -> &Stratification {
        &self.strat
    }

    pub fn tensors(&self) -> &[DMatrix<f64>] {
        &self.tensors
    }

    pub fn dim(&self) -> usize {
        self.strat.total_dim()
    }

    /// True if the group law is available.
    pub fn has_group_law(&self) -> bool {
        self.kind != ModelKind::Graded || self.strat.step() == 1
    }

    fn check(&self, x: &GroupPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn require_law(&self) -> Result<()> {
        if self.has_group_law() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "group arithmetic is implemented for step <= 2, got step {}",
                self.strat.step()
            )))
        }
    }

    /// Group product on raw coordinate slices; `out` must not alias.
    pub(crate) fn multiply_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
            *o = a + b;
        }
        if self.tensors.is_empty() {
            return;
        }
        let v1 = self.strat.layer_dim(1);
        let (x1, y1) = (&x[..v1], &y[..v1]);
        for (s, b) in self.tensors.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..v1 {
                let mut bx = 0.0;
                for j in 0..v1 {
                    bx += b[(i, j)] * x1[j];
                }
                acc += bx * y1[i];
            }
            out[v1 + s] += acc;
        }
    }

    pub fn multiply(&self, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
        self.check(x)?;
        self.check(y)?;
        self.require_law()?;
        let mut out = vec![0.0; self.dim()];
        self.multiply_into(x.coords(), y.coords(), &mut out);
        Ok(GroupPoint(out))
    }

    /// `x⁻¹ = −x`, valid because the second-layer tensors are skew.
    pub fn inverse(&self, x: &GroupPoint) -> Result<GroupPoint> {
        self.check(x)?;
        self.require_law()?;
        Ok(GroupPoint(x.0.iter().map(|c| -c).collect()))
    }

    pub fn dilate(&self, lambda: f64, x: &GroupPoint) -> Result<GroupPoint> {
        self.check(x)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("dilation factor must be positive, got {lambda}")));
        }
        let mut out = x.0.clone();
        self.strat.dilate_in_place(lambda, &mut out);
        Ok(GroupPoint(out))
    }

    pub fn pseudonorm(&self, x: &GroupPoint) -> Result<f64> {
        self.check(x)?;
        Ok(self.strat.gauge(x.coords()))
    }

    /// `d(x, y) = |y⁻¹·x|`.
    pub fn distance(&self, x: &GroupPoint, y: &GroupPoint) -> Result<f64> {
        let yinv = self.inverse(y)?;
        let z = self.multiply(&yinv, x)?;
        Ok(self.strat.gauge(z.coords()))
    }

    /// Left-invariant horizontal fields `X_1, …, X_{v₁}` at `x`, each as the
    /// coefficient vector over `∂_1, …, ∂_m`.
    pub fn horizontal_frame(&self, x: &GroupPoint) -> Result<Vec<Vec<f64>>> {
        self.check(x)?;
        self.require_law()?;
        let v1 = self.strat.layer_dim(1);
        let x1 = x.layer(&self.strat, 1);
        let frame = (0..v1)
            .map(|i| {
                let mut field = vec![0.0; self.dim()];
                field[i] = 1.0;
                // d/ds of ⟨B_s x1, s e_i⟩ is (B_s x1)_i
                for (s, b) in self.tensors.iter().enumerate() {
                    field[v1 + s] = (0..v1).map(|j| b[(i, j)] * x1[j]).sum();
                }
                field
            })
            .collect();
        Ok(frame)
    }
}

impl fmt::Display for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Euclidean => write!(f, "group=euclidean n={}", self.dim()),
            ModelKind::Heisenberg => write!(f, "group=heisenberg n={}", self.strat.layer_dim(1) / 2),
            ModelKind::Step2 => {
                write!(f, "group=step2 n={} k={}", self.strat.layer_dim(1), self.tensors.len())?;
                for (s, b) in self.tensors.iter().enumerate() {
                    let rows: Vec<String> = b
                        .row_iter()
                        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                        .collect();
                    write!(f, " B{}={}", s + 1, rows.join(";"))?;
                }
                Ok(())
            }
            ModelKind::Graded => {
                let dims: Vec<String> = self.strat.layer_dims().iter().map(|v| v.to_string()).collect();
                write!(f, "group=graded layers={}", dims.join(","))
            }
        }
    }
}

/// Parses a row-major matrix written as `a,b;c,d`.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad matrix entry '{v}'")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("ragged or empty matrix '{text}'")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parses the group specification text, e.g.
/// `group=euclidean n=3`, `group=heisenberg n=1`,
/// `group=step2 n=2 k=1 B1=0,1;-1,0` or `group=graded layers=3,2,1`.
impl FromStr for GroupModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut name = None;
        let mut n = None;
        let mut k = None;
        let mut layers = None;
        let mut tensors: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for tok in s.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{tok}'")))?;
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad integer for {key}: '{v}'")))
            };
            match key {
                "group" => name = Some(value.to_ascii_lowercase()),
                "n" => n = Some(parse_usize(value)?),
                "k" => k = Some(parse_usize(value)?),
                "layers" => layers = Some(value.split(',').map(parse_usize).collect::<Result<Vec<_>>>()?),
                _ if key.starts_with('B') || key.starts_with('b') => {
                    let idx = parse_usize(&key[1..])?;
                    tensors.push((idx, parse_matrix(value)?));
                }
                _ => return Err(Error::Parse(format!("unknown key '{key}'"))),
            }
        }
        let need_n = || n.ok_or_else(|| Error::Parse("missing n=".into()));
        match name.as_deref() {
            Some("euclidean") => GroupModel::euclidean(need_n()?),
            Some("heisenberg") => GroupModel::heisenberg(need_n()?),
            Some("step2") => {
                let n = need_n()?;
                tensors.sort_by_key(|(i, _)| *i);
                let k = k.unwrap_or(tensors.len());
                if tensors.len() != k || tensors.iter().enumerate().any(|(i, (idx, _))| *idx != i + 1) {
                    return Err(Error::Parse(format!("step2 with k={k} needs tensors B1..B{k}")));
                }
                GroupModel::step2(n, tensors.into_iter().map(|(_, b)| b).collect())
            }
            Some("graded") => {
                let dims = layers.ok_or_else(|| Error::Parse("missing layers=".into()))?;
                Ok(GroupModel::graded(Stratification::new(dims)?))
            }
            Some(other) => Err(Error::Parse(format!("unknown group '{other}'"))),
            None => Err(Error::Parse("missing group=".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> GroupPoint {
        GroupPoint::new(v.to_vec()).unwrap()
    }

    fn h1() -> GroupModel {
        GroupModel::heisenberg(1).unwrap()
    }

    #[test]
    fn stratification_invariants() {
        let s = Stratification::new(vec![3, 2, 1]).unwrap();
        assert_eq!(s.step(), 3);
        assert_eq!(s.total_dim(), 6);
        assert_eq!(s.homogeneity(), vec![1, 1, 1, 2, 2, 3]);
        assert_eq!(s.hom_dim(), 3 + 4 + 3);
        assert_eq!(s.gauge_exponent(), 12.0);
        assert_eq!(s.layer_range(2), 3..5);
        assert_eq!(Stratification::euclidean(4).unwrap().hom_dim(), 4);
        assert!(Stratification::new(vec![]).is_err());
        assert!(Stratification::new(vec![2, 0]).is_err());
    }

    #[test]
    fn heisenberg_product_matches_complex_law() {
        let g = h1();
        let z = g.multiply(&pt(&[1.0, 0.0, 0.0]), &pt(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(z.coords(), &[1.0, 1.0, -2.0]);
        // t = t1 + t2 + 2 Im(z1 conj(z2)) on a generic pair
        let (a, b) = ([0.3, -1.2, 0.7], [2.0, 0.5, -0.1]);
        let im = a[1] * b[0] - a[0] * b[1];
        let z = g.multiply(&pt(&a), &pt(&b)).unwrap();
        assert!((z.coords()[2] - (a[2] + b[2] + 2.0 * im)).abs() < 1e-15);
    }

    #[test]
    fn identity_and_abelian_cases() {
        let e = GroupModel::euclidean(2).unwrap();
        assert_eq!(
            e.multiply(&pt(&[1.0, 2.0]), &pt(&[3.0, 4.0])).unwrap().coords(),
            &[4.0, 6.0]
        );
        let x = pt(&[0.4, -0.3, 1.1]);
        assert_eq!(h1().multiply(&x, &GroupPoint::zero(3)).unwrap(), x);
        assert_eq!(
            h1().inverse(&pt(&[1.0, 1.0, -2.0])).unwrap().coords(),
            &[-1.0, -1.0, 2.0]
        );
        assert_eq!(e.inverse(&pt(&[3.0, 4.0])).unwrap().coords(), &[-3.0, -4.0]);
    }

    #[test]
    fn dilation_examples() {
        let g = h1();
        assert_eq!(g.dilate(2.0, &pt(&[1.0, 1.0, 1.0])).unwrap().coords(), &[2.0, 2.0, 4.0]);
        let x = pt(&[0.2, 0.3, -0.4]);
        assert_eq!(g.dilate(1.0, &x).unwrap(), x);
        let e = GroupModel::euclidean(3).unwrap();
        assert_eq!(e.dilate(3.0, &pt(&[1.0, 0.0, 2.0])).unwrap().coords(), &[3.0, 0.0, 6.0]);
        assert!(matches!(g.dilate(0.0, &x), Err(Error::Domain(_))));
        assert!(matches!(g.dilate(-1.0, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn pseudonorm_examples() {
        let g = h1();
        assert_eq!(g.pseudonorm(&pt(&[1.0, 0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(g.pseudonorm(&pt(&[0.0, 0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(g.pseudonorm(&GroupPoint::zero(3)).unwrap(), 0.0);
        for lambda in [0.5, 2.0, 10.0] {
            let d = g.dilate(lambda, &pt(&[1.0, 0.0, 1.0])).unwrap();
            let expect = lambda * 2f64.powf(0.25);
            assert!((g.pseudonorm(&d).unwrap() - expect).abs() <= 1e-14 * expect);
        }
        // (|z|^4 + t^2)^(1/4)
        let x = pt(&[0.3, 0.4, 0.2]);
        let expect = (0.25f64.powi(2) + 0.04).powf(0.25);
        assert!((g.pseudonorm(&x).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn gauge_is_stable_for_high_step() {
        let s = Stratification::new(vec![1, 1, 1, 1, 1]).unwrap();
        let x = [0.0, 0.0, 0.0, 0.0, 1e-30];
        let r = s.gauge(&x);
        assert!((r - 1e-6).abs() < 1e-18);
        let x = [3.0, 0.0, 0.0, 0.0, 0.0];
        assert!((s.gauge(&x) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn distance_examples() {
        let g = h1();
        let x = pt(&[0.3, -0.2, 0.5]);
        assert_eq!(g.distance(&x, &x).unwrap(), 0.0);
        assert_eq!(g.distance(&pt(&[1.0, 0.0, 0.0]), &GroupPoint::zero(3)).unwrap(), 1.0);
        let e = GroupModel::euclidean(2).unwrap();
        assert!((e.distance(&pt(&[1.0, 2.0]), &pt(&[4.0, 6.0])).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn frame_examples() {
        let g = h1();
        let f0 = g.horizontal_frame(&GroupPoint::zero(3)).unwrap();
        assert_eq!(f0, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let (x, y) = (0.7, -1.3);
        let f = g.horizontal_frame(&pt(&[x, y, 5.0])).unwrap();
        assert_eq!(f[0], vec![1.0, 0.0, 2.0 * y]);
        assert_eq!(f[1], vec![0.0, 1.0, -2.0 * x]);
        let e = GroupModel::euclidean(2).unwrap();
        assert_eq!(
            e.horizontal_frame(&pt(&[3.0, 1.0])).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let graded = GroupModel::graded(Stratification::new(vec![2, 1, 1]).unwrap());
        assert!(matches!(
            graded.horizontal_frame(&GroupPoint::zero(4)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn frame_is_derivative_of_right_translation() {
        let g = GroupModel::step2(
            3,
            vec![
                parse_matrix("0,1,-2;-1,0,0.5;2,-0.5,0").unwrap(),
                parse_matrix("0,0.3,0;-0.3,0,1;0,-1,0").unwrap(),
            ],
        )
        .unwrap();
        let x = pt(&[0.2, -0.4, 0.9, 0.1, -0.3]);
        let frame = g.horizontal_frame(&x).unwrap();
        let h = 1e-6;
        for (i, field) in frame.iter().enumerate() {
            let mut e = vec![0.0; 5];
            e[i] = h;
            let plus = g.multiply(&x, &pt(&e)).unwrap();
            let fd: Vec<f64> = plus.coords().iter().zip(x.coords()).map(|(a, b)| (a - b) / h).collect();
            for (a, b) in fd.iter().zip(field) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dimension_mismatch_and_parse_errors() {
        let g = h1();
        assert!(matches!(
            g.multiply(&pt(&[1.0, 2.0]), &GroupPoint::zero(3)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(GroupPoint::new(vec![f64::NAN]).is_err());
        assert!("group=step2 n=2 k=1 B1=0,1;1,0".parse::<GroupModel>().is_err());
        assert!("group=step2 n=2 k=2 B1=0,1;-1,0".parse::<GroupModel>().is_err());
        assert!("group=foo n=2".parse::<GroupModel>().is_err());
        assert!("group=heisenberg".parse::<GroupModel>().is_err());
    }

    #[test]
    fn parse_group_text() {
        let e: GroupModel = "group=euclidean n=3".parse().unwrap();
        assert_eq!(e, GroupModel::euclidean(3).unwrap());
        let h: GroupModel = "group=heisenberg n=1".parse().unwrap();
        assert_eq!(h, h1());
        let s: GroupModel = "group=step2 n=2 k=1 B1=0,1;-1,0".parse().unwrap();
        assert_eq!(s.stratification().layer_dims(), &[2, 1]);
        let round: GroupModel = s.to_string().parse().unwrap();
        assert_eq!(round, s);
        // Heisenberg(1) is the step-2 law with B = [[0,2],[-2,0]]
        let as_step2: GroupModel = "group=step2 n=2 k=1 B1=0,2;-2,0".parse().unwrap();
        let (a, b) = (pt(&[0.3, -0.7, 0.2]), pt(&[1.1, 0.4, -0.5]));
        assert_eq!(as_step2.multiply(&a, &b).unwrap(), h.multiply(&a, &b).unwrap());
        let graded: GroupModel = "group=graded layers=3,2,1".parse().unwrap();
        assert_eq!(graded.stratification().hom_dim(), 10);
    }

    fn arb_point(m: usize) -> impl Strategy<Value = GroupPoint> {
        proptest::collection::vec(-3.0..3.0f64, m).prop_map(GroupPoint)
    }

    proptest! {
        #[test]
        fn inverse_cancels(x in arb_point(5)) {
            let g = GroupModel::step2(3, vec![
                parse_matrix("0,1,-2;-1,0,0.5;2,-0.5,0").unwrap(),
                parse_matrix("0,0.3,0;-0.3,0,1;0,-1,0").unwrap(),
            ]).unwrap();
            let z = g.multiply(&x, &g.inverse(&x).unwrap()).unwrap();
            prop_assert!(z.coords().iter().all(|c| c.abs() < 1e-12));
        }

        #[test]
        fn inverse_preserves_norm(x in arb_point(3)) {
            let g = h1();
            prop_assert_eq!(g.pseudonorm(&x).unwrap(), g.pseudonorm(&g.inverse(&x).unwrap()).unwrap());
        }
    }
}
