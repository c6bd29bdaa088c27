//! Sampleable probability measures: uniform cube, standard normal, Brownian
//! motion via truncated Karhunen–Loève expansion, and diffusions via the strong
//! Euler scheme.
//!
//! Draw `i` of a measure under seed `s` always uses the generator
//! `s.rng(i)`, so samples are bitwise reproducible regardless of how many
//! rayon workers produce them.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{config, Error, Result};
use crate::paths::{equispaced_breakpoints, kl_eigenfunction, kl_eigenvalue, Functional, Grid, Path, Point, Span};
use crate::rng::{label_tag, SeedSpec, StreamRng};
use crate::stats::{estimate, Estimate};

pub const DEFAULT_GRID: usize = 257;
pub const DEFAULT_KL_TERMS: usize = 200;

pub type CustomCoefficient = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Drift or diffusion coefficient. Built-in families act componentwise
/// (the diffusion matrix is diagonal); `Custom` receives `x ∈ R^m` and writes
/// `m` drift values or an `m × m` row-major diffusion matrix.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `c · x`
    Linear(f64),
    /// `c0 + c1 · x`
    Affine(f64, f64),
    Custom(CustomCoefficient),
}

impl Coefficient {
    fn scalar(&self, x: f64) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Linear(c) => c * x,
            Coefficient::Affine(c0, c1) => c0 + c1 * x,
            Coefficient::Custom(_) => unreachable!(),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) | Coefficient::Linear(c) if *c == 0.0)
            || matches!(self, Coefficient::Affine(a, b) if *a == 0.0 && *b == 0.0)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "constant:{c}"),
            Coefficient::Linear(c) => write!(f, "linear:{c}"),
            Coefficient::Affine(a, b) => write!(f, "affine:{a}:{b}"),
            Coefficient::Custom(_) => f.write_str("custom"),
        }
    }
}

/// `dX_t = a(X_t) dt + b(X_t) dW_t`, `X_0 = u0`, with `m = u0.len()`.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub u0: Vec<f64>,
}

impl DiffusionSpec {
    pub fn new(drift: Coefficient, diffusion: Coefficient, u0: Vec<f64>) -> Result<DiffusionSpec> {
        if u0.is_empty() {
            return config("diffusion dimension m must be >= 1");
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return config("initial value must be finite");
        }
        Ok(DiffusionSpec { drift, diffusion, u0 })
    }

    /// Geometric Brownian motion `dX = a X dt + b X dW` started at `u0`.
    pub fn gbm(a: f64, b: f64, u0: f64) -> DiffusionSpec {
        DiffusionSpec {
            drift: Coefficient::Linear(a),
            diffusion: Coefficient::Linear(b),
            u0: vec![u0],
        }
    }

    /// Standard Brownian motion: zero drift, unit diffusion, started at 0.
    pub fn brownian() -> DiffusionSpec {
        DiffusionSpec {
            drift: Coefficient::Constant(0.0),
            diffusion: Coefficient::Constant(1.0),
            u0: vec![0.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Coefficient::Custom(f) => f(x, out),
            c => out.iter_mut().zip(x).for_each(|(o, &v)| *o = c.scalar(v)),
        }
    }

    /// Applies `b(x) · z` into `out`.
    fn noise_into(&self, x: &[f64], z: &[f64], bmat: &mut [f64], out: &mut [f64]) {
        let m = x.len();
        match &self.diffusion {
            Coefficient::Custom(f) => {
                f(x, bmat);
                for i in 0..m {
                    out[i] = (0..m).map(|j| bmat[i * m + j] * z[j]).sum();
                }
            }
            c => {
                for i in 0..m {
                    out[i] = c.scalar(x[i]) * z[i];
                }
            }
        }
    }
}

/// Brownian motion on `[0,1]` truncated to `k_terms` Karhunen–Loève modes.
#[derive(Debug, Clone)]
pub struct BrownianKl {
    k_terms: usize,
    grid: Arc<Grid>,
    /// Row `ℓ` holds `√λ_ℓ e_ℓ(t_j)`.
    table: Arc<Vec<f64>>,
    span: Span,
}

impl BrownianKl {
    pub fn new(k_terms: usize, grid: Arc<Grid>) -> Result<BrownianKl> {
        if k_terms == 0 {
            return config("k_terms must be >= 1");
        }
        let g = grid.len();
        let mut table = Vec::with_capacity(k_terms * g);
        for l in 1..=k_terms {
            let s = kl_eigenvalue(l).sqrt();
            table.extend(grid.points().iter().map(|&t| s * kl_eigenfunction(l, t)));
        }
        Ok(BrownianKl {
            k_terms,
            grid,
            table: Arc::new(table),
            span: Span {
                id: label_tag(&format!("kl:{k_terms}")),
                dim: k_terms,
            },
        })
    }

    pub fn k_terms(&self) -> usize {
        self.k_terms
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn draw(&self, rng: &mut StreamRng) -> Path {
        let g = self.grid.len();
        let mut values = vec![0.0; g];
        for row in self.table.chunks_exact(g) {
            let z: f64 = rng.sample(StandardNormal);
            values.iter_mut().zip(row).for_each(|(v, e)| *v += z * e);
        }
        // sin(0) = 0, but keep the start exact for non-default grids too
        values[0] = 0.0;
        Path::from_raw(self.grid.clone(), 1, values, Some(self.span))
    }
}

/// Diffusion law approximated by the Euler scheme with `k_steps` breakpoints.
#[derive(Debug, Clone)]
pub struct EulerLaw {
    spec: DiffusionSpec,
    k_steps: usize,
    grid: Arc<Grid>,
    span: Span,
}

impl EulerLaw {
    pub fn new(spec: DiffusionSpec, k_steps: usize, grid: Arc<Grid>) -> Result<EulerLaw> {
        if k_steps < 2 {
            return config(format!("Euler scheme needs k >= 2 breakpoints, got {k_steps}"));
        }
        let span = Span {
            id: pl_span_id(k_steps),
            dim: k_steps * spec.dim(),
        };
        Ok(EulerLaw {
            spec,
            k_steps,
            grid,
            span,
        })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn k_steps(&self) -> usize {
        self.k_steps
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Euler recursion with step `1/(k-1)`, interpolated piecewise linearly at
    /// the grid points. The state is accumulated with compensated summation.
    fn draw(&self, rng: &mut StreamRng) -> Result<Path> {
        let spec = &self.spec;
        let m = spec.dim();
        let k = self.k_steps;
        let h = 1.0 / (k - 1) as f64;
        let sh = h.sqrt();
        let mut states = Vec::with_capacity(k * m);
        states.extend_from_slice(&spec.u0);
        let mut x = spec.u0.clone();
        let mut comp = vec![0.0; m];
        let mut a = vec![0.0; m];
        let mut z = vec![0.0; m];
        let mut noise = vec![0.0; m];
        let mut bmat = vec![0.0; m * m];
        let diffusion_zero = spec.diffusion.is_zero();
        for step in 0..k - 1 {
            spec.drift_into(&x, &mut a);
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            if diffusion_zero {
                noise.iter_mut().for_each(|v| *v = 0.0);
            } else {
                spec.noise_into(&x, &z, &mut bmat, &mut noise);
            }
            for i in 0..m {
                let inc = h * a[i] + sh * noise[i];
                if !inc.is_finite() {
                    return Err(Error::Numeric {
                        step,
                        msg: format!("non-finite drift/diffusion output at state {:?}", x),
                    });
                }
                // Neumaier summation
                let t = x[i] + inc;
                if x[i].abs() >= inc.abs() {
                    comp[i] += (x[i] - t) + inc;
                } else {
                    comp[i] += (inc - t) + x[i];
                }
                x[i] = t;
            }
            for i in 0..m {
                let v = x[i] + comp[i];
                if !v.is_finite() {
                    return Err(Error::Numeric {
                        step,
                        msg: "Euler state overflowed".into(),
                    });
                }
                states.push(v);
            }
        }
        Ok(interpolate_breakpoints(&states, k, m, &self.grid, self.span))
    }
}

fn pl_span_id(k: usize) -> u64 {
    label_tag(&format!("pl:{:?}", equispaced_breakpoints(k)))
}

/// Piecewise-linear interpolant of values at `ℓ/(k-1)` evaluated on the grid.
fn interpolate_breakpoints(states: &[f64], k: usize, m: usize, grid: &Arc<Grid>, span: Span) -> Path {
    let g = grid.len();
    let mut values = Vec::with_capacity(g * m);
    let segs = k - 1;
    for (j, &t) in grid.points().iter().enumerate() {
        // exact integer arithmetic on uniform grids
        let (idx, frac) = if grid.is_uniform() {
            let num = j * segs;
            let den = g - 1;
            (num / den, (num % den) as f64 / den as f64)
        } else {
            let pos = t * segs as f64;
            let idx = (pos.floor() as usize).min(segs);
            (idx, pos - idx as f64)
        };
        for c in 0..m {
            let lo = states[idx * m + c];
            let v = if frac == 0.0 || idx >= segs {
                lo
            } else {
                let hi = states[(idx + 1) * m + c];
                lo + frac * (hi - lo)
            };
            values.push(v);
        }
    }
    Path::from_raw(grid.clone(), m, values, Some(span))
}

#[derive(Debug, Clone)]
pub enum MeasureSpec {
    UniformCube { d: usize },
    StdNormal { d: usize },
    BrownianKl(BrownianKl),
    Diffusion(EulerLaw),
}

impl MeasureSpec {
    pub fn uniform_cube(d: usize) -> Result<MeasureSpec> {
        if d == 0 {
            return config("dimension d must be >= 1");
        }
        Ok(MeasureSpec::UniformCube { d })
    }

    pub fn std_normal(d: usize) -> Result<MeasureSpec> {
        if d == 0 {
            return config("dimension d must be >= 1");
        }
        Ok(MeasureSpec::StdNormal { d })
    }

    pub fn brownian_kl(k_terms: usize, grid: Arc<Grid>) -> Result<MeasureSpec> {
        Ok(MeasureSpec::BrownianKl(BrownianKl::new(k_terms, grid)?))
    }

    pub fn diffusion(spec: DiffusionSpec, k_steps: usize, grid: Arc<Grid>) -> Result<MeasureSpec> {
        Ok(MeasureSpec::Diffusion(EulerLaw::new(spec, k_steps, grid)?))
    }

    /// Brownian motion exact at the grid points: Euler with one step per grid
    /// interval of zero drift and unit diffusion. Requires a uniform grid.
    pub fn brownian_grid(grid: Arc<Grid>) -> Result<MeasureSpec> {
        if !grid.is_uniform() {
            return config("grid Brownian motion needs a uniform grid");
        }
        let k = grid.len();
        MeasureSpec::diffusion(DiffusionSpec::brownian(), k, grid)
    }

    /// Short identifier written into codebook files and reports.
    pub fn tag(&self) -> String {
        match self {
            MeasureSpec::UniformCube { d } => format!("uniform_cube:{d}"),
            MeasureSpec::StdNormal { d } => format!("std_normal:{d}"),
            MeasureSpec::BrownianKl(b) => format!("brownian_kl:{}:{}", b.k_terms, b.grid.len()),
            MeasureSpec::Diffusion(e) => format!(
                "diffusion:{}:{}:{:?}:{}:{}",
                e.spec.drift,
                e.spec.diffusion,
                e.spec.u0,
                e.k_steps,
                e.grid.len()
            ),
        }
    }

    pub fn grid(&self) -> Option<&Arc<Grid>> {
        match self {
            MeasureSpec::BrownianKl(b) => Some(&b.grid),
            MeasureSpec::Diffusion(e) => Some(&e.grid),
            _ => None,
        }
    }

    pub fn is_path_measure(&self) -> bool {
        self.grid().is_some()
    }

    /// Dimension `k` of the subspace in which every sample lies (oracle cost).
    pub fn sample_dim(&self) -> usize {
        match self {
            MeasureSpec::UniformCube { d } | MeasureSpec::StdNormal { d } => *d,
            MeasureSpec::BrownianKl(b) => b.k_terms,
            MeasureSpec::Diffusion(e) => e.span.dim,
        }
    }

    /// Random variates consumed per draw.
    pub fn variates_per_draw(&self) -> usize {
        match self {
            MeasureSpec::UniformCube { d } | MeasureSpec::StdNormal { d } => *d,
            MeasureSpec::BrownianKl(b) => b.k_terms,
            MeasureSpec::Diffusion(e) => (e.k_steps - 1) * e.spec.dim(),
        }
    }

    pub(crate) fn draw(&self, rng: &mut StreamRng) -> Result<Point> {
        Ok(match self {
            MeasureSpec::UniformCube { d } => Point::Vector((0..*d).map(|_| rng.random::<f64>()).collect()),
            MeasureSpec::StdNormal { d } => {
                Point::Vector((0..*d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            }
            MeasureSpec::BrownianKl(b) => Point::Path(b.draw(rng)),
            MeasureSpec::Diffusion(e) => Point::Path(e.draw(rng)?),
        })
    }

    /// Draws indices `range` and maps each through `f` without keeping the
    /// samples; output order follows the indices.
    pub fn map_draws<T, F>(&self, seed: SeedSpec, range: std::ops::Range<usize>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, Point) -> Result<T> + Send + Sync,
    {
        range
            .into_par_iter()
            .with_min_len(32)
            .map(|i| {
                let x = self.draw(&mut seed.rng(i as u64)).map_err(|e| e.at_sample(i))?;
                f(i, x)
            })
            .collect()
    }
}

/// `n` independent draws, deterministic given `seed`.
pub fn sample(measure: &MeasureSpec, seed: SeedSpec, n: usize) -> Result<Vec<Point>> {
    if n == 0 {
        return config("sample count must be >= 1");
    }
    measure.map_draws(seed, 0..n, |_, x| Ok(x))
}

/// One truncated Karhunen–Loève Brownian path.
pub fn sample_brownian_kl(k_terms: usize, grid: &Arc<Grid>, seed: SeedSpec) -> Result<Path> {
    let b = BrownianKl::new(k_terms, grid.clone())?;
    Ok(b.draw(&mut seed.rng(0)))
}

/// One Euler path with `k` breakpoints, interpolated onto `grid`.
pub fn euler_strong_path(spec: &DiffusionSpec, k: usize, grid: &Arc<Grid>, seed: SeedSpec) -> Result<Path> {
    EulerLaw::new(spec.clone(), k, grid.clone())?.draw(&mut seed.rng(0))
}

/// Draw number `index` of the stream `seed`.
pub fn sample_one(measure: &MeasureSpec, seed: SeedSpec, index: usize) -> Result<Point> {
    measure.draw(&mut seed.rng(index as u64)).map_err(|e| e.at_sample(index))
}

/// Plain Monte Carlo estimate of `∫ f dμ`, used as a ground-truth oracle.
pub fn reference_value(f: &Functional, measure: &MeasureSpec, budget: usize, seed: SeedSpec) -> Result<Estimate> {
    if budget < 100 {
        return config(format!("reference budget must be >= 100, got {budget}"));
    }
    let vals = measure.map_draws(seed, 0..budget, |i, x| f.call(&x).map_err(|e| e.at_sample(i)))?;
    Ok(estimate(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_var;

    fn grid() -> Arc<Grid> {
        Grid::uniform(DEFAULT_GRID).unwrap()
    }

    #[test]
    fn invalid_dimensions() {
        assert!(MeasureSpec::uniform_cube(0).is_err());
        assert!(MeasureSpec::std_normal(0).is_err());
        assert!(MeasureSpec::brownian_kl(0, grid()).is_err());
        assert!(MeasureSpec::diffusion(DiffusionSpec::brownian(), 1, grid()).is_err());
        assert!(sample(&MeasureSpec::uniform_cube(1).unwrap(), SeedSpec::new(1), 0).is_err());
    }

    #[test]
    fn shape_and_determinism() {
        let mu = MeasureSpec::std_normal(2).unwrap();
        let x = sample(&mu, SeedSpec::new(3), 1).unwrap();
        let v = x[0].as_vector().unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|a| a.is_finite()));
        let u = MeasureSpec::uniform_cube(1).unwrap();
        let a = sample(&u, SeedSpec::new(9), 5).unwrap();
        let b = sample(&u, SeedSpec::new(9), 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..1.0).contains(&p.raw()[0])));
    }

    #[test]
    fn uniform_mean() {
        let u = MeasureSpec::uniform_cube(1).unwrap();
        let xs: Vec<f64> = u.map_draws(SeedSpec::new(11), 0..1_000_000, |_, x| Ok(x.raw()[0])).unwrap();
        let (m, _) = mean_var(&xs);
        assert!((m - 0.5).abs() <= 3.0 * (1.0 / 12f64).sqrt() / 1e3);
    }

    #[test]
    fn kl_path_starts_at_zero() {
        for k in [1, 7, 200] {
            let p = sample_brownian_kl(k, &grid(), SeedSpec::new(k as u64)).unwrap();
            assert_eq!(p.value(0, 0), 0.0);
        }
        assert!(sample_brownian_kl(0, &grid(), SeedSpec::new(0)).is_err());
    }

    #[test]
    fn kl_one_term_variance_at_one() {
        let mu = MeasureSpec::brownian_kl(1, grid()).unwrap();
        let n = 100_000;
        let xs = mu.map_draws(SeedSpec::new(5), 0..n, |_, x| Ok(x.as_path().unwrap().value(256, 0))).unwrap();
        let (_, var) = mean_var(&xs);
        let target = 8.0 / (std::f64::consts::PI * std::f64::consts::PI);
        // Var of a sample variance of Gaussians is 2σ⁴/(n-1)
        let se = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() <= 3.0 * se, "{var} vs {target}");
    }

    #[test]
    fn kl_covariance_matches_min() {
        let g = grid();
        let b = BrownianKl::new(200, g.clone()).unwrap();
        let gl = g.len();
        let idx = [64usize, 128, 256];
        let exact_cov = |i: usize, j: usize| -> f64 {
            b.table.chunks_exact(gl).map(|row| row[i] * row[j]).sum()
        };
        for &i in &idx {
            for &j in &idx {
                let target = g.points()[i].min(g.points()[j]);
                assert!((exact_cov(i, j) - target).abs() <= 0.02 * target);
            }
        }
        let mu = MeasureSpec::BrownianKl(b.clone());
        let n = 40_000;
        let rows = mu
            .map_draws(SeedSpec::new(21), 0..n, |_, x| {
                let p = x.as_path().unwrap();
                Ok(idx.map(|j| p.value(j, 0)))
            })
            .unwrap();
        for a in 0..3 {
            for c in a..3 {
                let prods: Vec<f64> = rows.iter().map(|r| r[a] * r[c]).collect();
                let (cov, var) = mean_var(&prods);
                let se = (var / n as f64).sqrt();
                assert!((cov - exact_cov(idx[a], idx[c])).abs() <= 3.5 * se, "cov({a},{c}) = {cov}");
            }
        }
    }

    #[test]
    fn euler_constant_drift_is_exact() {
        let spec = DiffusionSpec::new(Coefficient::Constant(1.0), Coefficient::Constant(0.0), vec![0.0]).unwrap();
        for k in [2, 3, 11, 83, 1000] {
            let p = euler_strong_path(&spec, k, &grid(), SeedSpec::new(1)).unwrap();
            assert_eq!(p.value(256, 0), 1.0, "k = {k}");
            assert_eq!(p.value(0, 0), 0.0);
        }
    }

    #[test]
    fn euler_deterministic_linear_recursion() {
        let spec = DiffusionSpec::gbm(0.1, 0.0, 1.0);
        let p = euler_strong_path(&spec, 11, &grid(), SeedSpec::new(2)).unwrap();
        let mut x = 1.0f64;
        for _ in 0..10 {
            x += 0.01 * x;
        }
        assert!((p.value(256, 0) - x).abs() < 1e-14);
        assert!((x - 1.104_622_125_411_204_5).abs() < 1e-12);
    }

    #[test]
    fn euler_stream_alignment_independent_of_coefficients() {
        let g = grid();
        let noisy = euler_strong_path(&DiffusionSpec::brownian(), 5, &g, SeedSpec::new(4)).unwrap();
        let shifted = DiffusionSpec::new(Coefficient::Constant(1.0), Coefficient::Constant(1.0), vec![0.0]).unwrap();
        let other = euler_strong_path(&shifted, 5, &g, SeedSpec::new(4)).unwrap();
        // same increments, plus the drift t
        for (j, &t) in g.points().iter().enumerate() {
            assert!((other.value(j, 0) - noisy.value(j, 0) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_reports_failing_step() {
        let spec = DiffusionSpec::new(
            Coefficient::Custom(Arc::new(|x: &[f64], out: &mut [f64]| {
                out[0] = if x[0] > 2.5 { f64::INFINITY } else { 10.0 }
            })),
            Coefficient::Constant(0.0),
            vec![0.0],
        )
        .unwrap();
        match euler_strong_path(&spec, 11, &grid(), SeedSpec::new(0)) {
            Err(Error::Numeric { step, .. }) => assert_eq!(step, 3),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn multidimensional_custom_diffusion() {
        let spec = DiffusionSpec::new(
            Coefficient::Affine(1.0, 0.0),
            Coefficient::Custom(Arc::new(|_x: &[f64], b: &mut [f64]| {
                b.copy_from_slice(&[0.0, 0.0, 0.0, 0.0]);
            })),
            vec![0.0, 1.0],
        )
        .unwrap();
        let p = euler_strong_path(&spec, 5, &grid(), SeedSpec::new(0)).unwrap();
        assert_eq!(p.dim(), 2);
        assert!((p.value(256, 0) - 1.0).abs() < 1e-15);
        assert!((p.value(256, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn reference_values() {
        let u = MeasureSpec::uniform_cube(1).unwrap();
        let f = Functional::new("x", 1.0, |x| Ok(x.raw()[0]));
        let e = reference_value(&f, &u, 100_000, SeedSpec::new(1)).unwrap();
        assert!(e.within(0.5, 3.0, 0.0));
        assert!(reference_value(&f, &u, 99, SeedSpec::new(1)).is_err());

        let bm = MeasureSpec::brownian_kl(200, grid()).unwrap();
        let end = Functional::new("x(1)", 1.0, |x| Ok(x.as_path().unwrap().at(1.0, 0)));
        let e = reference_value(&end, &bm, 20_000, SeedSpec::new(2)).unwrap();
        assert!(e.within(0.0, 3.0, 0.0));

        let failing = Functional::new("bad", 1.0, |x| {
            if x.raw()[0] > 0.99 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(0.0)
            }
        });
        assert!(matches!(
            reference_value(&failing, &u, 10_000, SeedSpec::new(1)),
            Err(Error::Eval { .. })
        ));
    }
}
