//! Codebooks, Voronoi cells and their weights, distortion (quantization error)
//! estimation, and codebook search.
//!
//! Codebook search is Lloyd's algorithm on a fixed sample pool, so every
//! iteration is exact on that empirical measure and the pool distortion never
//! increases. One-dimensional Euclidean codebooks use a sorted-pool fast path
//! with compensated prefix sums; the scalar Gaussian quantizers behind the
//! Brownian product quantizer run Lloyd's iteration against the exact normal
//! density instead of a pool.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{config, Result};
use crate::measures::MeasureSpec;
use crate::paths::{distance_unchecked, kl_eigenvalue, make_kl_subspace, Grid, NormKind, Path, Point, Subspace};
use crate::rng::SeedSpec;
use crate::stats::{mean_var, normal_cdf, normal_pdf};

/// Per-coordinate layout of a product codebook in an orthonormal basis.
#[derive(Debug)]
struct ProductStructure {
    sub: Subspace,
    /// Sorted scaled levels per coordinate.
    levels: Vec<Vec<f64>>,
}

impl ProductStructure {
    /// Nearest codebook index and L2 distance via coordinatewise search.
    fn nearest(&self, x: &Path) -> (usize, f64) {
        let w = x.grid().weights();
        let norm2: f64 = x.values().iter().zip(w).map(|(v, w)| w * v * v).sum();
        if self.levels.is_empty() {
            return (0, norm2.max(0.0).sqrt());
        }
        let coeffs = self.sub.coefficients(x, 0);
        let mut resid2 = norm2 - coeffs.iter().map(|c| c * c).sum::<f64>();
        let mut index = 0;
        let mut stride = 1;
        for (c, lv) in coeffs.iter().zip(&self.levels) {
            let (j, d) = nearest_sorted(lv, *c);
            resid2 += d * d;
            index += j * stride;
            stride *= lv.len();
        }
        (index, resid2.max(0.0).sqrt())
    }
}

/// Index and distance of the nearest entry of a sorted slice (ties to lower).
fn nearest_sorted(levels: &[f64], x: f64) -> (usize, f64) {
    let p = levels.partition_point(|&c| c < x);
    let mut best = (usize::MAX, f64::INFINITY);
    for j in [p.wrapping_sub(1), p] {
        if let Some(&c) = levels.get(j) {
            let d = (x - c).abs();
            if d < best.1 || (d == best.1 && j < best.0) {
                best = (j, d);
            }
        }
    }
    best
}

/// Points `x_1..x_n` with optional Voronoi weights `μ(V_i)`.
#[derive(Debug, Clone)]
pub struct Codebook {
    points: Vec<Point>,
    weights: Option<Vec<f64>>,
    order_r: f64,
    norm: NormKind,
    measure_tag: String,
    product: Option<Arc<ProductStructure>>,
}

impl Codebook {
    pub fn new(points: Vec<Point>, order_r: f64, norm: NormKind, measure_tag: impl Into<String>) -> Result<Codebook> {
        if points.is_empty() {
            return config("codebook needs at least one point");
        }
        if !(order_r > 0.0 && order_r.is_finite()) {
            return config(format!("quantization order must be > 0, got {order_r}"));
        }
        norm.check(&points[0])?;
        for p in &points[1..] {
            points[0].check_compatible(p)?;
        }
        if let Some((i, j)) = find_duplicate(&points) {
            return config(format!("codebook points {i} and {j} coincide"));
        }
        Ok(Codebook {
            points,
            weights: None,
            order_r,
            norm,
            measure_tag: measure_tag.into(),
            product: None,
        })
    }

    /// Scalar codebook on the real line (Euclidean norm).
    pub fn scalar(values: &[f64], order_r: f64, measure_tag: impl Into<String>) -> Result<Codebook> {
        Codebook::new(
            values.iter().map(|&v| Point::scalar(v)).collect(),
            order_r,
            NormKind::Euclidean,
            measure_tag,
        )
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Codebook> {
        self.set_weights(weights)?;
        Ok(self)
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.points.len() {
            return config(format!("{} weights for {} points", weights.len(), self.points.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return config("weights must be non-negative");
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return config(format!("weights sum to {s}, expected 1"));
        }
        self.weights = Some(weights);
        Ok(())
    }

    pub fn clear_weights(&mut self) {
        self.weights = None;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn order_r(&self) -> f64 {
        self.order_r
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn measure_tag(&self) -> &str {
        &self.measure_tag
    }

    /// Same points under a different norm (product fast path kept only for L2).
    pub fn with_norm(mut self, norm: NormKind) -> Result<Codebook> {
        norm.check(&self.points[0])?;
        if norm != self.norm {
            self.norm = norm;
            self.weights = None;
            if norm != NormKind::L2 {
                self.product = None;
            }
        }
        Ok(self)
    }

    /// First `m` points (weights dropped).
    pub fn prefix(&self, m: usize) -> Result<Codebook> {
        if m == 0 || m > self.len() {
            return config(format!("prefix length {m} out of range 1..={}", self.len()));
        }
        Ok(Codebook {
            points: self.points[..m].to_vec(),
            weights: None,
            order_r: self.order_r,
            norm: self.norm,
            measure_tag: self.measure_tag.clone(),
            product: None,
        })
    }

    /// Sup-norm of coordinate differences to another codebook (same order).
    pub fn max_abs_diff(&self, other: &Codebook) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .flat_map(|(a, b)| a.raw().iter().zip(b.raw()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        self.points[0].check_compatible(x)
    }
}

fn find_duplicate(points: &[Point]) -> Option<(usize, usize)> {
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let h = p.raw().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(5)
        });
        let bucket = seen.entry(h).or_default();
        if let Some(&j) = bucket.iter().find(|&&j| points[j].raw() == p.raw()) {
            return Some((j, i));
        }
        bucket.push(i);
    }
    None
}

/// Index of the nearest codebook point (lowest index on ties) and its distance.
pub fn nearest(codebook: &Codebook, x: &Point) -> Result<(usize, f64)> {
    codebook.check_point(x)?;
    Ok(nearest_unchecked(codebook, x))
}

pub(crate) fn nearest_unchecked(codebook: &Codebook, x: &Point) -> (usize, f64) {
    if let (Some(prod), Point::Path(p)) = (&codebook.product, x) {
        return prod.nearest(p);
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in codebook.points.iter().enumerate() {
        let d = distance_unchecked(x, c, codebook.norm);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Estimate of `q^{(r)}(x_1..x_n) = (∫ min_i ||x - x_i||^r dμ)^{1/r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionEstimate {
    pub value: f64,
    /// Delta-method standard error of the `1/r` root.
    pub stderr: f64,
    pub sample_count: usize,
    pub order: f64,
}

impl DistortionEstimate {
    fn from_powers(powers: &[f64], r: f64) -> DistortionEstimate {
        let (mean, var) = mean_var(powers);
        let se_mean = (var / powers.len() as f64).sqrt();
        let value = mean.powf(1.0 / r);
        let stderr = if mean > 0.0 {
            se_mean * mean.powf(1.0 / r - 1.0) / r
        } else {
            0.0
        };
        DistortionEstimate {
            value,
            stderr,
            sample_count: powers.len(),
            order: r,
        }
    }

    /// `E min dist^r`, the r-th power of `value`.
    pub fn power_mean(&self) -> f64 {
        self.value.powf(self.order)
    }
}

pub fn distortion(codebook: &Codebook, measure: &MeasureSpec, r: f64, m: usize, seed: SeedSpec) -> Result<DistortionEstimate> {
    if m < 100 {
        return config(format!("distortion needs at least 100 samples, got {m}"));
    }
    if !(r > 0.0) {
        return config("order r must be > 0");
    }
    let powers = measure.map_draws(seed, 0..m, |_, x| {
        codebook.check_point(&x)?;
        Ok(nearest_unchecked(codebook, &x).1.powf(r))
    })?;
    Ok(DistortionEstimate::from_powers(&powers, r))
}

/// Distortion of `codebook` on a fixed pool (the empirical measure).
pub fn distortion_on_pool(codebook: &Codebook, pool: &[Point], r: f64) -> Result<DistortionEstimate> {
    if pool.is_empty() {
        return config("empty pool");
    }
    codebook.check_point(&pool[0])?;
    let powers: Vec<f64> = pool
        .par_iter()
        .with_min_len(32)
        .map(|x| nearest_unchecked(codebook, x).1.powf(r))
        .collect();
    Ok(DistortionEstimate::from_powers(&powers, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub weights: Vec<f64>,
    /// Binomial standard error of each weight.
    pub stderr: Vec<f64>,
    pub empty_cells: Vec<usize>,
    pub sample_count: usize,
}

/// Monte Carlo Voronoi weights; stored into the codebook. The weights sum to
/// exactly one.
pub fn voronoi_weights(codebook: &mut Codebook, measure: &MeasureSpec, m: usize, seed: SeedSpec) -> Result<WeightReport> {
    if m < 100 {
        return config(format!("voronoi_weights needs at least 100 samples, got {m}"));
    }
    let cells = measure.map_draws(seed, 0..m, |_, x| {
        codebook.check_point(&x)?;
        Ok(nearest_unchecked(codebook, &x).0)
    })?;
    let mut counts = vec![0usize; codebook.len()];
    for c in cells {
        counts[c] += 1;
    }
    let report = weights_from_counts(&counts);
    codebook.weights = Some(report.weights.clone());
    Ok(report)
}

fn weights_from_counts(counts: &[usize]) -> WeightReport {
    let total: usize = counts.iter().sum();
    let mut weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    // put the rounding remainder on the last non-empty cell so the
    // left-to-right sum is exactly 1
    if let Some(last) = counts.iter().rposition(|&c| c > 0) {
        let before: f64 = weights[..last].iter().sum();
        weights[last] = 1.0 - before;
    }
    let stderr = weights
        .iter()
        .map(|p| (p * (1.0 - p) / total as f64).max(0.0).sqrt())
        .collect();
    let empty_cells = counts.iter().enumerate().filter(|(_, &c)| c == 0).map(|(i, _)| i).collect();
    WeightReport {
        weights,
        stderr,
        empty_cells,
        sample_count: total,
    }
}

/// Cell masses of a sorted set of scalar levels under a 1-D law with CDF `cdf`.
fn interval_masses(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = sorted.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (sorted[i - 1] + sorted[i]) };
            let hi = if i + 1 == n { f64::INFINITY } else { 0.5 * (sorted[i] + sorted[i + 1]) };
            (cdf(hi) - cdf(lo)).max(0.0)
        })
        .collect()
}

fn gaussian_interval(lo: f64, hi: f64) -> f64 {
    // use the upper tail when both ends are positive to avoid cancellation
    if lo > 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}

/// Closed-form Voronoi weights where they exist: scalar or tensor-grid
/// codebooks (Euclidean) under the uniform cube or standard normal, and
/// Brownian product quantizers (L2) under the truncated KL law.
pub fn exact_voronoi_weights(codebook: &Codebook, measure: &MeasureSpec) -> Result<Vec<f64>> {
    if let (Some(prod), MeasureSpec::BrownianKl(b)) = (&codebook.product, measure) {
        if codebook.norm == NormKind::L2 && b.k_terms() >= prod.levels.len() && b.grid().same_as(prod.sub.grid()) {
            let per_coord: Vec<Vec<f64>> = prod
                .levels
                .iter()
                .enumerate()
                .map(|(l, lv)| {
                    let s = kl_eigenvalue(l + 1).sqrt();
                    let unit: Vec<f64> = lv.iter().map(|v| v / s).collect();
                    gaussian_masses(&unit)
                })
                .collect();
            let mut weights = Vec::with_capacity(codebook.len());
            for idx in 0..codebook.len() {
                let mut rem = idx;
                let mut w = 1.0;
                for masses in &per_coord {
                    w *= masses[rem % masses.len()];
                    rem /= masses.len();
                }
                weights.push(w);
            }
            return Ok(normalize(weights));
        }
    }
    let one_d_cdf: fn(f64) -> f64 = match measure {
        MeasureSpec::UniformCube { .. } => |x| x.clamp(0.0, 1.0),
        MeasureSpec::StdNormal { .. } => normal_cdf,
        _ => return config("no closed-form Voronoi weights for this measure; estimate them instead"),
    };
    let d = match (measure, &codebook.points[0]) {
        (MeasureSpec::UniformCube { d } | MeasureSpec::StdNormal { d }, Point::Vector(v)) if v.len() == *d => *d,
        _ => return config("codebook does not live in the measure's space"),
    };
    if codebook.norm != NormKind::Euclidean {
        return config("closed-form weights need the Euclidean norm");
    }
    // tensor grid: per-axis value sets whose product has exactly n elements
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut vals: Vec<f64> = codebook.points.iter().map(|p| p.raw()[c]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals
        })
        .collect();
    let count: usize = axes.iter().map(Vec::len).product();
    if count != codebook.len() {
        return config("codebook is not a tensor grid; closed-form weights unavailable");
    }
    let masses: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| {
            if matches!(measure, MeasureSpec::StdNormal { .. }) {
                gaussian_masses(a)
            } else {
                interval_masses(a, one_d_cdf)
            }
        })
        .collect();
    let weights = codebook
        .points
        .iter()
        .map(|p| {
            p.raw()
                .iter()
                .zip(axes.iter().zip(&masses))
                .map(|(v, (axis, mass))| mass[axis.partition_point(|a| a < v)])
                .product()
        })
        .collect();
    Ok(normalize(weights))
}

fn gaussian_masses(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (sorted[i - 1] + sorted[i]) };
            let hi = if i + 1 == n { f64::INFINITY } else { 0.5 * (sorted[i] + sorted[i + 1]) };
            gaussian_interval(lo, hi)
        })
        .collect()
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    if let Some(last) = w.iter().rposition(|&v| v > 0.0) {
        let before: f64 = w[..last].iter().sum();
        w[last] = 1.0 - before;
    }
    w
}

/// Evenly spaced tensor grid `((2i-1)/(2 n_c))` on `[0,1]^d`, with `n_c` points
/// along axis `c`; the optimal codebook of the uniform law for `d = 1`.
pub fn uniform_grid_codebook(per_axis: &[usize], order_r: f64) -> Result<Codebook> {
    if per_axis.is_empty() || per_axis.contains(&0) {
        return config("grid needs at least one point per axis");
    }
    let d = per_axis.len();
    let total: usize = per_axis.iter().product();
    let points = (0..total)
        .map(|mut idx| {
            let v = per_axis
                .iter()
                .map(|&n| {
                    let i = idx % n;
                    idx /= n;
                    (2 * i + 1) as f64 / (2 * n) as f64
                })
                .collect();
            Point::Vector(v)
        })
        .collect();
    let cb = Codebook::new(points, order_r, NormKind::Euclidean, format!("uniform_cube:{d}"))?;
    let w = vec![1.0 / total as f64; total];
    cb.with_weights(normalize(w))
}

/// Balanced factorization of `n` into `d` axis counts (largest first).
pub fn balanced_axes(n: usize, d: usize) -> Vec<usize> {
    let mut axes = vec![1usize; d];
    let mut rem = n;
    let mut p = 2;
    let mut factors = Vec::new();
    while rem > 1 {
        while rem % p == 0 {
            factors.push(p);
            rem /= p;
        }
        p += 1;
    }
    factors.sort_unstable_by(|a, b| b.cmp(a));
    for f in factors {
        let i = (0..d).min_by_key(|&i| axes[i]).unwrap();
        axes[i] *= f;
    }
    axes.sort_unstable_by(|a, b| b.cmp(a));
    axes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub iters: usize,
    /// Stop when the relative decrease of the pool distortion falls below this.
    pub tol: f64,
    pub restarts: usize,
    /// Pool size; `None` picks 10^5 for vectors and 2·10^4 for paths.
    pub pool: Option<usize>,
    /// `None` picks Euclidean for vectors and L2 for paths.
    pub norm: Option<NormKind>,
}

impl Default for LloydOptions {
    fn default() -> Self {
        LloydOptions {
            iters: 200,
            tol: 1e-10,
            restarts: 8,
            pool: None,
            norm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LloydReport {
    pub codebook: Codebook,
    /// Pool mean of `min dist^r` after each accepted iteration of the winning
    /// restart; non-increasing.
    pub history: Vec<f64>,
    /// Final pool objective of every restart.
    pub restart_objectives: Vec<f64>,
    pub pool_size: usize,
}

pub fn lloyd(measure: &MeasureSpec, n: usize, r: f64, opts: &LloydOptions, seed: SeedSpec) -> Result<Codebook> {
    Ok(lloyd_with_report(measure, n, r, opts, seed)?.codebook)
}

pub fn lloyd_with_report(
    measure: &MeasureSpec,
    n: usize,
    r: f64,
    opts: &LloydOptions,
    seed: SeedSpec,
) -> Result<LloydReport> {
    if n == 0 {
        return config("codebook size n must be >= 1");
    }
    if r != 1.0 && r != 2.0 {
        return config(format!("lloyd supports r = 1 or r = 2, got {r}"));
    }
    if opts.restarts == 0 {
        return config("restarts must be >= 1");
    }
    let m = opts.pool.unwrap_or(if measure.is_path_measure() { 20_000 } else { 100_000 });
    if m < n.max(2) {
        return config(format!("pool of {m} samples is too small for {n} points"));
    }
    let pool = crate::measures::sample(measure, seed.derive_label("lloyd-pool"), m)?;
    let norm = opts.norm.unwrap_or_else(|| match pool[0] {
        Point::Vector(_) => NormKind::Euclidean,
        Point::Path(_) => NormKind::L2,
    });
    norm.check(&pool[0])?;
    let init_seed = seed.derive_label("lloyd-init");
    let scalar = matches!(&pool[0], Point::Vector(v) if v.len() == 1);

    let runs: Vec<(Vec<Point>, Vec<f64>)> = if scalar {
        let mut xs: Vec<f64> = pool.iter().map(|p| p.raw()[0]).collect();
        xs.sort_by(f64::total_cmp);
        let sorted = SortedPool::new(xs);
        (0..opts.restarts)
            .into_par_iter()
            .map(|rs| {
                let init = init_indices(init_seed, rs, m, n);
                let mut c: Vec<f64> = init.iter().map(|&i| pool[i].raw()[0]).collect();
                c.sort_by(f64::total_cmp);
                let (c, hist) = sorted.run(c, r, opts);
                (c.into_iter().map(Point::scalar).collect(), hist)
            })
            .collect()
    } else {
        (0..opts.restarts)
            .into_par_iter()
            .map(|rs| {
                let init = init_indices(init_seed, rs, m, n);
                let centers = init.iter().map(|&i| pool[i].clone()).collect();
                general_lloyd(&pool, centers, r, norm, opts)
            })
            .collect()
    };
    let restart_objectives: Vec<f64> = runs.iter().map(|(_, h)| *h.last().unwrap()).collect();
    let best = restart_objectives
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < restart_objectives[b] { i } else { b });
    let (points, history) = runs.into_iter().nth(best).unwrap();
    let codebook = Codebook::new(points, r, norm, measure.tag())?;
    Ok(LloydReport {
        codebook,
        history,
        restart_objectives,
        pool_size: m,
    })
}

fn init_indices(seed: SeedSpec, restart: usize, m: usize, n: usize) -> Vec<usize> {
    let mut rng = seed.rng(restart as u64);
    rand::seq::index::sample(&mut rng, m, n).into_vec()
}

fn assign(pool: &[Point], centers: &[Point], norm: NormKind, r: f64) -> (Vec<usize>, Vec<f64>, f64) {
    let res: Vec<(usize, f64)> = pool
        .par_iter()
        .with_min_len(64)
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centers.iter().enumerate() {
                let d = distance_unchecked(x, c, norm);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best
        })
        .collect();
    let obj = res.iter().map(|(_, d)| d.powf(r)).sum::<f64>() / pool.len() as f64;
    let (labels, dists) = res.into_iter().unzip();
    (labels, dists, obj)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn general_lloyd(pool: &[Point], mut centers: Vec<Point>, r: f64, norm: NormKind, opts: &LloydOptions) -> (Vec<Point>, Vec<f64>) {
    let n = centers.len();
    let (mut labels, mut dists, mut obj) = assign(pool, &centers, norm, r);
    let mut history = vec![obj];
    for _ in 0..opts.iters {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, &l) in labels.iter().enumerate() {
            members[l].push(s);
        }
        let mut next: Vec<Option<Point>> = members
            .iter()
            .map(|idx| {
                if idx.is_empty() {
                    return None;
                }
                let len = pool[idx[0]].raw().len();
                let vals: Vec<f64> = (0..len)
                    .map(|c| {
                        if r == 2.0 {
                            idx.iter().map(|&s| pool[s].raw()[c]).sum::<f64>() / idx.len() as f64
                        } else {
                            let mut col: Vec<f64> = idx.iter().map(|&s| pool[s].raw()[c]).collect();
                            median_in_place(&mut col)
                        }
                    })
                    .collect();
                Some(rebuild(&pool[idx[0]], vals))
            })
            .collect();
        // reseed empty cells at the pool sample farthest from the codebook
        if next.iter().any(Option::is_none) {
            let placed: Vec<&Point> = next.iter().flatten().collect();
            let mut far: Vec<f64> = pool
                .iter()
                .map(|x| placed.iter().map(|c| distance_unchecked(x, c, norm)).fold(f64::INFINITY, f64::min))
                .collect();
            for slot in next.iter_mut().filter(|s| s.is_none()) {
                let s = far.iter().enumerate().fold(0, |b, (i, &v)| if v > far[b] { i } else { b });
                let c = pool[s].clone();
                for (x, f) in pool.iter().zip(far.iter_mut()) {
                    *f = f.min(distance_unchecked(x, &c, norm));
                }
                *slot = Some(c);
            }
        }
        let cand: Vec<Point> = next.into_iter().map(Option::unwrap).collect();
        let (l2, d2, obj2) = assign(pool, &cand, norm, r);
        if obj2 > obj {
            break;
        }
        let rel = (obj - obj2) / obj.max(f64::MIN_POSITIVE);
        centers = cand;
        labels = l2;
        dists = d2;
        obj = obj2;
        history.push(obj);
        if rel <= opts.tol {
            break;
        }
    }
    let _ = dists;
    (centers, history)
}

fn rebuild(template: &Point, vals: Vec<f64>) -> Point {
    match template {
        Point::Vector(_) => Point::Vector(vals),
        Point::Path(p) => Point::Path(Path::from_raw(p.grid().clone(), p.dim(), vals, None)),
    }
}

/// Sorted scalar pool with compensated prefix sums of `x` and `x²`.
struct SortedPool {
    xs: Vec<f64>,
    s1: Vec<(f64, f64)>,
    s2: Vec<(f64, f64)>,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn compensated_prefix(vals: impl Iterator<Item = f64>) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    let (mut hi, mut lo) = (0.0, 0.0);
    for v in vals {
        let (s, e) = two_sum(hi, v);
        hi = s;
        lo += e;
        out.push((hi, lo));
    }
    out
}

impl SortedPool {
    fn new(xs: Vec<f64>) -> SortedPool {
        let s1 = compensated_prefix(xs.iter().copied());
        let s2 = compensated_prefix(xs.iter().map(|x| x * x));
        SortedPool { xs, s1, s2 }
    }

    fn range_sum(p: &[(f64, f64)], a: usize, b: usize) -> f64 {
        (p[b].0 - p[a].0) + (p[b].1 - p[a].1)
    }

    /// Cell boundaries as pool indices: cell `i` is `ends[i-1]..ends[i]`.
    /// A sample equidistant from two centers goes to the lower one.
    fn cells(&self, c: &[f64]) -> Vec<usize> {
        let n = c.len();
        let mut ends = Vec::with_capacity(n);
        for i in 0..n - 1 {
            let (a, b) = (c[i], c[i + 1]);
            ends.push(self.xs.partition_point(|&x| (x - a).abs() <= (b - x).abs()));
        }
        ends.push(self.xs.len());
        // boundaries are monotone for sorted centers; guard against rounding
        for i in 1..n {
            ends[i] = ends[i].max(ends[i - 1]);
        }
        ends
    }

    fn objective(&self, c: &[f64], ends: &[usize], r: f64) -> f64 {
        let mut total = 0.0;
        let mut start = 0;
        for (i, &end) in ends.iter().enumerate() {
            if end > start {
                let cnt = (end - start) as f64;
                let s1 = Self::range_sum(&self.s1, start, end);
                if r == 2.0 {
                    let s2 = Self::range_sum(&self.s2, start, end);
                    total += (s2 - 2.0 * c[i] * s1 + cnt * c[i] * c[i]).max(0.0);
                } else {
                    let split = start + self.xs[start..end].partition_point(|&x| x < c[i]);
                    let lo = Self::range_sum(&self.s1, start, split);
                    let hi = s1 - lo;
                    total += (c[i] * (split - start) as f64 - lo + hi - c[i] * (end - split) as f64).max(0.0);
                }
            }
            start = end;
        }
        total / self.xs.len() as f64
    }

    fn run(&self, mut c: Vec<f64>, r: f64, opts: &LloydOptions) -> (Vec<f64>, Vec<f64>) {
        let n = c.len();
        let mut ends = self.cells(&c);
        let mut obj = self.objective(&c, &ends, r);
        let mut history = vec![obj];
        for _ in 0..opts.iters {
            let mut next: Vec<Option<f64>> = Vec::with_capacity(n);
            let mut start = 0;
            for &end in &ends {
                next.push((end > start).then(|| {
                    if r == 2.0 {
                        Self::range_sum(&self.s1, start, end) / (end - start) as f64
                    } else {
                        let len = end - start;
                        if len % 2 == 1 {
                            self.xs[start + len / 2]
                        } else {
                            0.5 * (self.xs[start + len / 2 - 1] + self.xs[start + len / 2])
                        }
                    }
                }));
                start = end;
            }
            if next.iter().any(Option::is_none) {
                let mut placed: Vec<f64> = next.iter().flatten().copied().collect();
                placed.sort_by(f64::total_cmp);
                for slot in next.iter_mut().filter(|s| s.is_none()) {
                    let far = self.farthest(&placed);
                    let pos = placed.partition_point(|&v| v < far);
                    placed.insert(pos, far);
                    *slot = Some(far);
                }
            }
            let mut cand: Vec<f64> = next.into_iter().map(Option::unwrap).collect();
            cand.sort_by(f64::total_cmp);
            let cand_ends = self.cells(&cand);
            let obj2 = self.objective(&cand, &cand_ends, r);
            if obj2 > obj {
                break;
            }
            let rel = (obj - obj2) / obj.max(f64::MIN_POSITIVE);
            c = cand;
            ends = cand_ends;
            obj = obj2;
            history.push(obj);
            if rel <= opts.tol {
                break;
            }
        }
        (c, history)
    }

    /// Pool sample farthest from the sorted set `placed` (lowest index on ties).
    fn farthest(&self, placed: &[f64]) -> f64 {
        let mut best = (0usize, -1.0f64);
        for (i, &x) in self.xs.iter().enumerate() {
            let d = nearest_sorted(placed, x).1;
            if d > best.1 {
                best = (i, d);
            }
        }
        self.xs[best.0]
    }
}

/// Optimal `n`-level quantizer of `N(0,1)` for squared error.
#[derive(Debug, Clone)]
pub struct ScalarGaussianQuantizer {
    pub levels: Vec<f64>,
    /// Cell probabilities.
    pub masses: Vec<f64>,
    /// `E min_j (Z - c_j)^2`.
    pub mse: f64,
}

fn gaussian_mse(levels: &[f64]) -> f64 {
    let n = levels.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (levels[i - 1] + levels[i]) };
        let b = if i + 1 == n { f64::INFINITY } else { 0.5 * (levels[i] + levels[i + 1]) };
        let c = levels[i];
        let p = gaussian_interval(a, b);
        let (pa, pb) = (normal_pdf(a), normal_pdf(b));
        let za = if a.is_finite() { a * pa } else { 0.0 };
        let zb = if b.is_finite() { b * pb } else { 0.0 };
        // ∫_a^b z²φ = P + aφ(a) - bφ(b), ∫_a^b zφ = φ(a) - φ(b)
        total += p * (1.0 + c * c) + za - zb - 2.0 * c * (pa - pb);
    }
    total
}

fn solve_scalar_gaussian(n: usize) -> ScalarGaussianQuantizer {
    let normal = Normal::standard();
    let mut c: Vec<f64> = (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect();
    for _ in 0..1_000_000 {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let a = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (c[i - 1] + c[i]) };
            let b = if i + 1 == n { f64::INFINITY } else { 0.5 * (c[i] + c[i + 1]) };
            next.push((normal_pdf(a) - normal_pdf(b)) / gaussian_interval(a, b));
        }
        let delta = c.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        c = next;
        if delta < 1e-15 {
            break;
        }
    }
    let masses = gaussian_masses(&c);
    let mse = gaussian_mse(&c);
    ScalarGaussianQuantizer { levels: c, masses, mse }
}

/// Cached optimal scalar Gaussian quantizer, obtained by Lloyd's iteration
/// against the exact normal density from quantile initialization.
pub fn scalar_gaussian_levels(n: usize) -> Result<Arc<ScalarGaussianQuantizer>> {
    if n == 0 {
        return config("number of levels must be >= 1");
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ScalarGaussianQuantizer>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(q) = cache.lock().unwrap().get(&n) {
        return Ok(q.clone());
    }
    let q = Arc::new(solve_scalar_gaussian(n));
    cache.lock().unwrap().insert(n, q.clone());
    Ok(q)
}

/// Optimal scalar `N(0,1)` codebook with exact weights.
pub fn scalar_gaussian_quantizer(levels: usize) -> Result<Codebook> {
    let q = scalar_gaussian_levels(levels)?;
    Codebook::scalar(&q.levels, 2.0, "std_normal:1")?.with_weights(normalize(q.masses.clone()))
}

/// Greedy level allocation over KL coordinates under `Π n_ℓ ≤ budget`.
pub fn allocate_levels(n_budget: usize, k_terms: usize) -> Result<Vec<usize>> {
    if n_budget == 0 {
        return config("codebook budget must be >= 1");
    }
    if k_terms == 0 {
        return config("k_terms must be >= 1");
    }
    let mut levels = vec![1usize; k_terms];
    let mut product = 1usize;
    loop {
        let mut best: Option<(usize, f64)> = None;
        let mut seen_unit = false;
        for l in 0..k_terms {
            let nl = levels[l];
            if nl == 1 {
                // all later unit coordinates have smaller eigenvalues
                if seen_unit {
                    continue;
                }
                seen_unit = true;
            }
            let next_product = product / nl * (nl + 1);
            if next_product > n_budget {
                continue;
            }
            let gain = kl_eigenvalue(l + 1) * (scalar_gaussian_levels(nl)?.mse - scalar_gaussian_levels(nl + 1)?.mse);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((l, gain));
            }
        }
        match best {
            Some((l, _)) => {
                product = product / levels[l] * (levels[l] + 1);
                levels[l] += 1;
            }
            None => break,
        }
    }
    Ok(levels)
}

/// Product quantizer for Brownian motion in KL coordinates: coordinate `ℓ`
/// is quantized by the optimal `n_ℓ`-level Gaussian quantizer scaled by
/// `√λ_ℓ`; the codebook is every combination. Weights are the exact cell
/// masses under the truncated KL law (L2 norm).
pub fn product_quantizer_bm(n_budget: usize, k_terms: usize, grid: &Arc<Grid>) -> Result<Codebook> {
    let levels = allocate_levels(n_budget, k_terms)?;
    let active = levels.iter().take_while(|&&n| n > 1).count();
    let sub = make_kl_subspace(grid, active.max(1))?;
    let scaled: Vec<Vec<f64>> = levels[..active]
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let s = kl_eigenvalue(l + 1).sqrt();
            Ok(scalar_gaussian_levels(n)?.levels.iter().map(|c| s * c).collect())
        })
        .collect::<Result<_>>()?;
    let total: usize = levels[..active].iter().product();
    let g = grid.len();
    let points = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut vals = vec![0.0; g];
            for (lv, b) in scaled.iter().zip(sub.basis()) {
                let c = lv[rem % lv.len()];
                rem /= lv.len();
                vals.iter_mut().zip(b).for_each(|(v, e)| *v += c * e);
            }
            Point::Path(Path::from_raw(grid.clone(), 1, vals, Some(sub.span(1))))
        })
        .collect();
    let tag = format!("brownian_kl:{k_terms}:{g}");
    let mut cb = Codebook::new(points, 2.0, NormKind::L2, tag)?;
    cb.product = Some(Arc::new(ProductStructure { sub, levels: scaled }));
    let weights = exact_voronoi_weights(&cb, &MeasureSpec::brownian_kl(k_terms.max(active), grid.clone())?)?;
    cb.set_weights(weights)?;
    Ok(cb)
}

/// Per-coordinate level counts of a product codebook, if it has one.
pub fn product_levels(codebook: &Codebook) -> Option<Vec<usize>> {
    codebook.product.as_ref().map(|p| p.levels.iter().map(Vec::len).collect())
}
