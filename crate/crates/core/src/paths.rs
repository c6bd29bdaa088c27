//! Points, discretized paths, norms, Lipschitz functionals, and finite-dimensional
//! subspaces with L2 projections.
//!
//! Paths live on a fixed [`Grid`] of `G` points in `[0, 1]`. Integral norms use
//! the trapezoid rule on that grid, which is exact for piecewise-linear
//! integrands. For paths with `m > 1` components the pointwise magnitude is the
//! Euclidean norm of `x(t) ∈ R^m`, so `L1 ≤ Sup` and `L2 ≤ Sup` hold for every
//! path.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::label_tag;

const GRID_TOL: f64 = 1e-12;

/// Strictly increasing discretization of `[0, 1]` with exact endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Arc<Grid>> {
        if points.len() < 2 {
            return config("grid needs at least 2 points");
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return config("grid must start at exactly 0 and end at exactly 1");
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return config("grid points must be strictly increasing");
        }
        let g = points.len();
        let mut weights = vec![0.0; g];
        for j in 0..g - 1 {
            let h = points[j + 1] - points[j];
            weights[j] += 0.5 * h;
            weights[j + 1] += 0.5 * h;
        }
        let h0 = 1.0 / (g - 1) as f64;
        let uniform = points
            .iter()
            .enumerate()
            .all(|(j, &t)| (t - j as f64 * h0).abs() <= GRID_TOL);
        Ok(Arc::new(Grid {
            points,
            weights,
            uniform,
        }))
    }

    /// `g` equispaced points `j/(g-1)`.
    pub fn uniform(g: usize) -> Result<Arc<Grid>> {
        if g < 2 {
            return config(format!("grid size must be >= 2, got {g}"));
        }
        let n = (g - 1) as f64;
        let mut points: Vec<f64> = (0..g).map(|j| j as f64 / n).collect();
        points[g - 1] = 1.0;
        Grid::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoid quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Index of the grid point equal to `t` (within 1e-12), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = self.points.partition_point(|&p| p < t - GRID_TOL);
        (pos < self.points.len() && (self.points[pos] - t).abs() <= GRID_TOL).then_some(pos)
    }

    /// Interval `[j, j+1]` containing `t`, and the interpolation weight of `j+1`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, 1.0);
        let g = self.points.len();
        let j = self.points.partition_point(|&p| p <= t).clamp(1, g - 1) - 1;
        let (a, b) = (self.points[j], self.points[j + 1]);
        (j, ((t - a) / (b - a)).clamp(0.0, 1.0))
    }

    pub(crate) fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.points == other.points
    }
}

/// Membership tag of a point that was produced inside a known finite-dimensional
/// subspace `X_0`: `id` identifies the subspace, `dim` is its dimension (the
/// per-call oracle cost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub id: u64,
    pub dim: usize,
}

/// A function `[0,1] → R^m` sampled on a grid; values are row-major `G × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Arc<Grid>,
    dim: usize,
    values: Vec<f64>,
    span: Option<Span>,
}

impl Path {
    pub fn new(grid: Arc<Grid>, dim: usize, values: Vec<f64>) -> Result<Path> {
        if dim == 0 {
            return config("path dimension m must be >= 1");
        }
        if values.len() != grid.len() * dim {
            return config(format!(
                "path has {} values, expected {} x {}",
                values.len(),
                grid.len(),
                dim
            ));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return config(format!("path value {j} is not finite"));
        }
        Ok(Path {
            grid,
            dim,
            values,
            span: None,
        })
    }

    /// Scalar path `t ↦ f(t)` on the grid.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Path> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Path::new(grid, 1, values)
    }

    pub fn zeros(grid: Arc<Grid>, dim: usize) -> Path {
        let values = vec![0.0; grid.len() * dim];
        Path {
            grid,
            dim,
            values,
            span: None,
        }
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, dim: usize, values: Vec<f64>, span: Option<Span>) -> Path {
        debug_assert_eq!(values.len(), grid.len() * dim);
        Path {
            grid,
            dim,
            values,
            span,
        }
    }

    pub fn with_span(mut self, span: Span) -> Path {
        self.span = Some(span);
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn span(&self) -> Option<Span> {
        self.span
    }

    pub fn value(&self, j: usize, c: usize) -> f64 {
        self.values[j * self.dim + c]
    }

    /// Component `c` as a strided iterator over the grid.
    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.dim).copied()
    }

    /// Linear interpolation of component `c` at time `t`.
    pub fn at(&self, t: f64, c: usize) -> f64 {
        if let Some(j) = self.grid.index_of(t) {
            return self.value(j, c);
        }
        let (j, w) = self.grid.locate(t);
        (1.0 - w) * self.value(j, c) + w * self.value(j + 1, c)
    }
}

/// Element of the ambient space: a vector in `R^d` or a discretized path.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Vector(Vec<f64>),
    Path(Path),
}

impl Point {
    pub fn scalar(x: f64) -> Point {
        Point::Vector(vec![x])
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Point::Vector(v) => Some(v),
            Point::Path(_) => None,
        }
    }

    pub fn as_path(&self) -> Option<&Path> {
        match self {
            Point::Path(p) => Some(p),
            Point::Vector(_) => None,
        }
    }

    pub fn raw(&self) -> &[f64] {
        match self {
            Point::Vector(v) => v,
            Point::Path(p) => &p.values,
        }
    }

    /// Dimension of the smallest known subspace containing this point: the
    /// span tag when present, otherwise the full discretized dimension.
    pub fn oracle_dim(&self) -> usize {
        match self {
            Point::Vector(v) => v.len(),
            Point::Path(p) => p.span.map_or(p.grid.len() * p.dim, |s| s.dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.raw().iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_compatible(&self, other: &Point) -> Result<()> {
        match (self, other) {
            (Point::Vector(a), Point::Vector(b)) if a.len() == b.len() => Ok(()),
            (Point::Vector(a), Point::Vector(b)) => {
                config(format!("dimension mismatch: {} vs {}", a.len(), b.len()))
            }
            (Point::Path(a), Point::Path(b)) => {
                if a.dim != b.dim {
                    config(format!("path dimension mismatch: {} vs {}", a.dim, b.dim))
                } else if !a.grid.same_as(&b.grid) {
                    config("grid mismatch")
                } else {
                    Ok(())
                }
            }
            _ => config("cannot combine a vector with a path"),
        }
    }

    /// Same shape with values `f(self_i, other_i)`; no span.
    pub fn zip_map(&self, other: &Point, f: impl Fn(f64, f64) -> f64) -> Result<Point> {
        self.check_compatible(other)?;
        let vals: Vec<f64> = self
            .raw()
            .iter()
            .zip(other.raw())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(match self {
            Point::Vector(_) => Point::Vector(vals),
            Point::Path(p) => Point::Path(Path::from_raw(p.grid.clone(), p.dim, vals, None)),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Point {
        match self {
            Point::Vector(v) => Point::Vector(v.iter().map(|&a| f(a)).collect()),
            Point::Path(p) => Point::Path(Path::from_raw(
                p.grid.clone(),
                p.dim,
                p.values.iter().map(|&a| f(a)).collect(),
                None,
            )),
        }
    }
}

impl From<Path> for Point {
    fn from(p: Path) -> Self {
        Point::Path(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Sup,
    L1,
    L2,
    Euclidean,
}

impl NormKind {
    /// Natural norm for a point: Euclidean for vectors, sup for paths.
    pub fn default_for(p: &Point) -> NormKind {
        match p {
            Point::Vector(_) => NormKind::Euclidean,
            Point::Path(_) => NormKind::Sup,
        }
    }

    pub fn check(self, p: &Point) -> Result<()> {
        match (self, p) {
            (NormKind::Euclidean, Point::Vector(_)) => Ok(()),
            (NormKind::Euclidean, Point::Path(_)) => {
                config("euclidean norm applies to finite-dimensional points only")
            }
            (_, Point::Vector(_)) => config(format!("{self} norm applies to paths only")),
            (_, Point::Path(_)) => Ok(()),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Sup => "sup",
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::Euclidean => "euclidean",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sup" | "max" | "linf" => Ok(NormKind::Sup),
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "euclidean" | "euclid" => Ok(NormKind::Euclidean),
            other => config(format!("unknown norm '{other}'")),
        }
    }
}

/// Norm of the elementwise difference `a - b` for raw value slices whose shape
/// has already been validated.
pub(crate) fn raw_distance(a: &[f64], b: &[f64], kind: NormKind, grid: Option<&Grid>, m: usize) -> f64 {
    match kind {
        NormKind::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        _ => {
            let w = grid.expect("path norm requires a grid").weights();
            let pointwise = |j: usize| -> f64 {
                if m == 1 {
                    (a[j] - b[j]).abs()
                } else {
                    let s: f64 = (0..m)
                        .map(|c| {
                            let d = a[j * m + c] - b[j * m + c];
                            d * d
                        })
                        .sum();
                    s.sqrt()
                }
            };
            match kind {
                NormKind::Sup => (0..w.len()).map(pointwise).fold(0.0, f64::max),
                NormKind::L1 => (0..w.len()).map(|j| w[j] * pointwise(j)).sum(),
                NormKind::L2 => (0..w.len())
                    .map(|j| {
                        let e = pointwise(j);
                        w[j] * e * e
                    })
                    .sum::<f64>()
                    .sqrt(),
                NormKind::Euclidean => unreachable!(),
            }
        }
    }
}

pub fn norm(x: &Point, kind: NormKind) -> Result<f64> {
    kind.check(x)?;
    let zeros = vec![0.0; x.raw().len()];
    Ok(match x {
        Point::Vector(v) => raw_distance(v, &zeros, kind, None, 1),
        Point::Path(p) => raw_distance(&p.values, &zeros, kind, Some(&p.grid), p.dim),
    })
}

pub fn distance(x: &Point, y: &Point, kind: NormKind) -> Result<f64> {
    kind.check(x)?;
    x.check_compatible(y)?;
    Ok(distance_unchecked(x, y, kind))
}

/// `distance` without shape validation; callers guarantee compatibility.
pub(crate) fn distance_unchecked(x: &Point, y: &Point, kind: NormKind) -> f64 {
    match x {
        Point::Vector(v) => raw_distance(v, y.raw(), kind, None, 1),
        Point::Path(p) => raw_distance(&p.values, y.raw(), kind, Some(&p.grid), p.dim),
    }
}

pub type EvalFn = dyn Fn(&Point) -> Result<f64> + Send + Sync;

/// Evaluation oracle for an integrand `f`, with its claimed Lipschitz constant
/// and, optionally, the dimension of the only subspace it may be queried on.
#[derive(Clone)]
pub struct Functional {
    name: String,
    eval: Arc<EvalFn>,
    lip_claim: f64,
    oracle_dim: Option<usize>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("lip_claim", &self.lip_claim)
            .field("oracle_dim", &self.oracle_dim)
            .finish()
    }
}

impl Functional {
    pub fn new(
        name: impl Into<String>,
        lip_claim: f64,
        eval: impl Fn(&Point) -> Result<f64> + Send + Sync + 'static,
    ) -> Functional {
        assert!(lip_claim >= 0.0, "Lipschitz claim must be non-negative");
        Functional {
            name: name.into(),
            eval: Arc::new(eval),
            lip_claim,
            oracle_dim: None,
        }
    }

    pub fn with_oracle_dim(mut self, dim: usize) -> Functional {
        self.oracle_dim = Some(dim);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lip_claim(&self) -> f64 {
        self.lip_claim
    }

    pub fn oracle_dim(&self) -> Option<usize> {
        self.oracle_dim
    }

    /// Raw evaluation, ignoring the oracle-dimension restriction.
    pub fn eval(&self, x: &Point) -> Result<f64> {
        (self.eval)(x)
    }

    /// Evaluation as an algorithm performs it: refused when the point lies
    /// outside every subspace of the declared oracle dimension.
    pub fn call(&self, x: &Point) -> Result<f64> {
        if let Some(d) = self.oracle_dim {
            let have = x.oracle_dim();
            if have > d {
                return config(format!(
                    "functional '{}' is restricted to an oracle of dimension {d}, point lives in dimension {have}",
                    self.name
                ));
            }
        }
        let v = (self.eval)(x)?;
        if !v.is_finite() {
            return Err(Error::Numeric {
                step: 0,
                msg: format!("functional '{}' returned {v}", self.name),
            });
        }
        Ok(v)
    }
}

/// Eigenvalue `λ_ℓ = ((ℓ - 1/2)π)^{-2}` of the Brownian covariance operator.
pub fn kl_eigenvalue(l: usize) -> f64 {
    let w = (l as f64 - 0.5) * std::f64::consts::PI;
    1.0 / (w * w)
}

/// Eigenfunction `e_ℓ(t) = √2 sin((ℓ - 1/2)πt)`.
pub fn kl_eigenfunction(l: usize, t: f64) -> f64 {
    std::f64::consts::SQRT_2 * ((l as f64 - 0.5) * std::f64::consts::PI * t).sin()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceKind {
    PiecewiseLinear { breakpoints: Vec<f64> },
    KarhunenLoeve { terms: usize },
}

impl fmt::Display for SubspaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubspaceKind::PiecewiseLinear { .. } => f.write_str("pl"),
            SubspaceKind::KarhunenLoeve { .. } => f.write_str("kl"),
        }
    }
}

/// A `k`-dimensional subspace of scalar grid functions with a basis that is
/// orthonormal in the trapezoid L2 inner product. Paths with several
/// components are projected componentwise.
#[derive(Debug, Clone)]
pub struct Subspace {
    id: u64,
    kind: SubspaceKind,
    grid: Arc<Grid>,
    basis: Vec<Vec<f64>>,
}

fn inner(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Modified Gram–Schmidt, applied twice for stability.
fn orthonormalize(w: &[f64], raw: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for (i, mut v) in raw.into_iter().enumerate() {
        let n0 = inner(w, &v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = inner(w, &v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = inner(w, &v, &v).sqrt();
        if !(n > 1e-10 * n0.max(1e-300)) {
            return config(format!("basis element {i} is linearly dependent on the previous ones"));
        }
        v.iter_mut().for_each(|a| *a /= n);
        out.push(v);
    }
    Ok(out)
}

impl Subspace {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> &SubspaceKind {
        &self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Span tag for `m`-component paths built in this subspace.
    pub fn span(&self, m: usize) -> Span {
        Span {
            id: self.id,
            dim: self.dim() * m,
        }
    }

    /// Gram matrix of the stored basis in the trapezoid inner product.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let w = self.grid.weights();
        self.basis
            .iter()
            .map(|a| self.basis.iter().map(|b| inner(w, a, b)).collect())
            .collect()
    }

    /// Scalar path `Σ c_ℓ · basis_ℓ`, tagged as a member of this subspace.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Path> {
        if coeffs.len() != self.dim() {
            return config(format!("expected {} coefficients, got {}", self.dim(), coeffs.len()));
        }
        let mut values = vec![0.0; self.grid.len()];
        for (c, b) in coeffs.iter().zip(&self.basis) {
            values.iter_mut().zip(b).for_each(|(v, e)| *v += c * e);
        }
        Ok(Path::from_raw(self.grid.clone(), 1, values, Some(self.span(1))))
    }

    /// L2 coefficients of component `c` of `x`.
    pub fn coefficients(&self, x: &Path, c: usize) -> Vec<f64> {
        let w = self.grid.weights();
        self.basis
            .iter()
            .map(|b| {
                x.component(c)
                    .zip(b)
                    .zip(w)
                    .map(|((v, e), w)| w * v * e)
                    .sum()
            })
            .collect()
    }

    fn check_grid(&self, x: &Path) -> Result<()> {
        if !self.grid.same_as(x.grid()) {
            return config("path grid does not match subspace grid");
        }
        Ok(())
    }
}

/// Piecewise-linear functions with the given breakpoints, which must include 0
/// and 1 and lie on the grid.
pub fn make_pl_subspace(grid: &Arc<Grid>, breakpoints: &[f64]) -> Result<Subspace> {
    if breakpoints.len() < 2 {
        return config("need at least the breakpoints 0 and 1");
    }
    if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
        return config("breakpoints must include 0 and 1");
    }
    if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return config("breakpoints must be strictly increasing");
    }
    let idx: Vec<usize> = breakpoints
        .iter()
        .map(|&b| {
            grid.index_of(b)
                .ok_or_else(|| Error::Config(format!("breakpoint {b} is not a grid point")))
        })
        .collect::<Result<_>>()?;
    let t = grid.points();
    let hats: Vec<Vec<f64>> = (0..idx.len())
        .map(|i| {
            let mut h = vec![0.0; grid.len()];
            h[idx[i]] = 1.0;
            if i > 0 {
                let (a, b) = (idx[i - 1], idx[i]);
                for j in a + 1..b {
                    h[j] = (t[j] - t[a]) / (t[b] - t[a]);
                }
            }
            if i + 1 < idx.len() {
                let (a, b) = (idx[i], idx[i + 1]);
                for j in a + 1..b {
                    h[j] = (t[b] - t[j]) / (t[b] - t[a]);
                }
            }
            h
        })
        .collect();
    let basis = orthonormalize(grid.weights(), hats)?;
    let kind = SubspaceKind::PiecewiseLinear {
        breakpoints: breakpoints.to_vec(),
    };
    let id = label_tag(&format!("pl:{breakpoints:?}"));
    Ok(Subspace {
        id,
        kind,
        grid: grid.clone(),
        basis,
    })
}

/// Equispaced breakpoints `ℓ/(k-1)`, `ℓ = 0..k-1`.
pub fn equispaced_breakpoints(k: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..k).map(|l| l as f64 / (k - 1) as f64).collect();
    if let Some(last) = b.last_mut() {
        *last = 1.0;
    }
    b
}

/// Span of the first `k` Karhunen–Loève eigenfunctions of Brownian motion.
pub fn make_kl_subspace(grid: &Arc<Grid>, k: usize) -> Result<Subspace> {
    if k == 0 {
        return config("KL subspace dimension must be >= 1");
    }
    if k >= grid.len() {
        return config(format!(
            "KL subspace of dimension {k} is not representable on a grid of {} points",
            grid.len()
        ));
    }
    let raw = (1..=k)
        .map(|l| grid.points().iter().map(|&t| kl_eigenfunction(l, t)).collect())
        .collect();
    let basis = orthonormalize(grid.weights(), raw)?;
    Ok(Subspace {
        id: label_tag(&format!("kl:{k}")),
        kind: SubspaceKind::KarhunenLoeve { terms: k },
        grid: grid.clone(),
        basis,
    })
}

/// Norms of the projection residual `x - Px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub sup: f64,
    pub l1: f64,
    /// Exactly the L2 distance from `x` to the subspace.
    pub l2: f64,
}

impl ResidualNorms {
    pub fn get(&self, kind: NormKind) -> Result<f64> {
        match kind {
            NormKind::Sup => Ok(self.sup),
            NormKind::L1 => Ok(self.l1),
            NormKind::L2 => Ok(self.l2),
            NormKind::Euclidean => config("euclidean norm applies to finite-dimensional points only"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub projection: Path,
    /// Sup and L1 entries are upper bounds for the respective distances to the
    /// subspace; the L2 entry is the distance itself.
    pub residual: ResidualNorms,
}

/// L2-orthogonal projection onto `sub`.
pub fn project(x: &Path, sub: &Subspace) -> Result<Projection> {
    sub.check_grid(x)?;
    let m = x.dim();
    let g = x.grid().len();
    let mut proj = vec![0.0; g * m];
    for c in 0..m {
        let coeffs = sub.coefficients(x, c);
        for (a, b) in coeffs.iter().zip(&sub.basis) {
            for j in 0..g {
                proj[j * m + c] += a * b[j];
            }
        }
    }
    let grid = Some(x.grid().as_ref());
    let residual = ResidualNorms {
        sup: raw_distance(x.values(), &proj, NormKind::Sup, grid, m),
        l1: raw_distance(x.values(), &proj, NormKind::L1, grid, m),
        l2: raw_distance(x.values(), &proj, NormKind::L2, grid, m),
    };
    Ok(Projection {
        projection: Path::from_raw(x.grid().clone(), m, proj, Some(sub.span(m))),
        residual,
    })
}

/// L2 distance from `x` to `sub` without materializing the projection.
pub fn l2_residual(x: &Path, sub: &Subspace) -> f64 {
    let m = x.dim();
    let g = x.grid().len();
    let w = x.grid().weights();
    let mut total = 0.0;
    let mut r = vec![0.0; g];
    for c in 0..m {
        r.iter_mut().zip(x.component(c)).for_each(|(r, v)| *r = v);
        for b in &sub.basis {
            let a = inner(w, &r, b);
            r.iter_mut().zip(b).for_each(|(r, e)| *r -= a * e);
        }
        total += inner(w, &r, &r);
    }
    total.max(0.0).sqrt()
}
