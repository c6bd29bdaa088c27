//! Quadrature algorithms for `S(f) = ∫ f dμ` with cardinality and cost
//! accounting, and the cost-balanced `(n, k)` schedules.
//!
//! Cost model: an oracle call at a point of a `k`-dimensional subspace costs
//! `k`. `arithmetic_proxy` counts loop-level operations only.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::measures::{DiffusionSpec, MeasureSpec};
use crate::paths::{Functional, Grid, Subspace, SubspaceKind};
use crate::quantize::{nearest, Codebook};
use crate::rng::SeedSpec;
use crate::stats::estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    /// `k` times `oracle_calls`.
    pub oracle_cost: u64,
    pub oracle_calls: u64,
    /// Scalar random variates consumed.
    pub rng_calls: u64,
    pub arithmetic_proxy: u64,
}

impl CostLedger {
    fn new(k: usize, oracle_calls: usize, rng_calls: usize, arithmetic_proxy: usize) -> CostLedger {
        CostLedger {
            oracle_cost: (k as u64) * oracle_calls as u64,
            oracle_calls: oracle_calls as u64,
            rng_calls: rng_calls as u64,
            arithmetic_proxy: arithmetic_proxy as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub estimate: f64,
    /// Zero for deterministic formulas.
    pub stderr: f64,
    /// Number of functional evaluations.
    pub n: usize,
    /// Dimension of the subspace the evaluation points lie in.
    pub k: usize,
    pub cost: CostLedger,
}

/// Small-ball exponent profile `φ(ε) ≍ ε^{-α} (ln 1/ε)^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallProfile {
    pub alpha: f64,
    pub beta: f64,
}

impl SmallBallProfile {
    pub fn new(alpha: f64, beta: f64) -> Result<SmallBallProfile> {
        if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return config(format!("small-ball profile needs alpha > 0 and finite beta, got ({alpha}, {beta})"));
        }
        Ok(SmallBallProfile { alpha, beta })
    }

    /// Brownian motion in the sup or L_p norms.
    pub fn brownian() -> SmallBallProfile {
        SmallBallProfile { alpha: 2.0, beta: 0.0 }
    }
}

fn point_dim(cb: &Codebook) -> usize {
    cb.points()[0].oracle_dim()
}

/// `Σ μ(V_i) f(x_i)`.
pub fn voronoi_quadrature(codebook: &Codebook, f: &Functional) -> Result<QuadratureResult> {
    let w = codebook
        .weights()
        .ok_or_else(|| crate::error::Error::Config("codebook has no weights".into()))?;
    let mut total = 0.0;
    for (i, (p, wi)) in codebook.points().iter().zip(w).enumerate() {
        total += wi * f.call(p).map_err(|e| e.at_sample(i))?;
    }
    let n = codebook.len();
    let k = codebook.points().iter().map(|p| p.oracle_dim()).max().unwrap_or(0);
    Ok(QuadratureResult {
        estimate: total,
        stderr: 0.0,
        n,
        k,
        cost: CostLedger::new(k, n, 0, 2 * n),
    })
}

fn mc_over(measure: &MeasureSpec, f: &Functional, n: usize, seed: SeedSpec) -> Result<QuadratureResult> {
    if n < 2 {
        return config(format!("Monte Carlo needs n >= 2, got {n}"));
    }
    let vals = measure.map_draws(seed, 0..n, |i, x| f.call(&x).map_err(|e| e.at_sample(i)))?;
    let e = estimate(&vals);
    let k = measure.sample_dim();
    Ok(QuadratureResult {
        estimate: e.value,
        stderr: e.stderr,
        n,
        k,
        cost: CostLedger::new(k, n, n * measure.variates_per_draw(), 3 * n),
    })
}

/// Mean of `f` over `n` independent draws.
pub fn classical_mc(measure: &MeasureSpec, f: &Functional, n: usize, seed: SeedSpec) -> Result<QuadratureResult> {
    mc_over(measure, f, n, seed)
}

/// Quantization control variate: `S(J f) + (1/n) Σ (f - J f)(X_i)` with
/// `J f (x) = f(x_nearest)`.
pub fn vr_mc(codebook: &Codebook, measure: &MeasureSpec, f: &Functional, n: usize, seed: SeedSpec) -> Result<QuadratureResult> {
    if n < 2 {
        return config(format!("Monte Carlo needs n >= 2, got {n}"));
    }
    let w = codebook
        .weights()
        .ok_or_else(|| crate::error::Error::Config("codebook has no weights".into()))?;
    let fx: Vec<f64> = codebook
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| f.call(p).map_err(|e| e.at_sample(i)))
        .collect::<Result<_>>()?;
    let sjf: f64 = w.iter().zip(&fx).map(|(a, b)| a * b).sum();
    let resid = measure.map_draws(seed, 0..n, |i, x| {
        let (j, _) = nearest(codebook, &x)?;
        Ok(f.call(&x).map_err(|e| e.at_sample(i))? - fx[j])
    })?;
    let e = estimate(&resid);
    let m = codebook.len();
    let k = measure.sample_dim().max(point_dim(codebook));
    Ok(QuadratureResult {
        estimate: sjf + e.value,
        stderr: e.stderr,
        n: n + m,
        k,
        cost: CostLedger::new(k, n + m, n * measure.variates_per_draw(), n * (m + 3) + 2 * m),
    })
}

/// Euler Monte Carlo with `k` breakpoints (`k - 1` steps), paths interpolated
/// onto `grid`.
pub fn euler_mc(spec: &DiffusionSpec, f: &Functional, k: usize, n: usize, grid: &Arc<Grid>, seed: SeedSpec) -> Result<QuadratureResult> {
    if k < 2 {
        return config(format!("Euler needs k >= 2, got {k}"));
    }
    let mu = MeasureSpec::diffusion(spec.clone(), k, grid.clone())?;
    let mut r = mc_over(&mu, f, n, seed)?;
    // oracle cost k per call, per component
    r.k = k * spec.dim();
    r.cost.oracle_cost = r.k as u64 * r.cost.oracle_calls;
    r.cost.arithmetic_proxy += (n * (k - 1) * spec.dim() * 6) as u64;
    Ok(r)
}

/// Truncated KL Monte Carlo in the subspace `sub` (a KL subspace).
pub fn gaussian_subspace_mc(sub: &Subspace, f: &Functional, n: usize, seed: SeedSpec) -> Result<QuadratureResult> {
    if !matches!(sub.kind(), SubspaceKind::KarhunenLoeve { .. }) {
        return config("gaussian_subspace_mc needs a Karhunen-Loeve subspace");
    }
    let mu = MeasureSpec::brownian_kl(sub.dim(), sub.grid().clone())?;
    mc_over(&mu, f, n, seed)
}

pub fn cost_of(result: &QuadratureResult) -> CostLedger {
    result.cost
}

fn schedule_at(big_n: u64, n_of: &dyn Fn(f64, f64) -> f64, k_of: &dyn Fn(f64, f64) -> f64) -> Option<(usize, usize)> {
    let nf = big_n as f64;
    let ln = nf.ln();
    if !(ln > 1.0) {
        return None;
    }
    let n = n_of(nf, ln).floor();
    let mut k = k_of(nf, ln).floor();
    if !(n >= 2.0 && k >= 2.0) {
        return None;
    }
    // guard against rounding in the last ulp
    while k * n > nf {
        k -= 1.0;
    }
    (k >= 2.0).then_some((n as usize, k as usize))
}

fn schedule(
    big_n: u64,
    label: &str,
    n_of: &dyn Fn(f64, f64) -> f64,
    k_of: &dyn Fn(f64, f64) -> f64,
) -> Result<(usize, usize)> {
    if let Some(nk) = schedule_at(big_n, n_of, k_of) {
        return Ok(nk);
    }
    let min = (3..=100_000_000u64).find(|&m| schedule_at(m, n_of, k_of).is_some());
    match min {
        Some(m) => config(format!("{label} budget N={big_n} too small: n and k must both be >= 2 (minimum feasible N is {m})")),
        None => config(format!("{label} budget N={big_n} too small and no feasible N below 1e8")),
    }
}

/// `n = ⌊√N / √ln N⌋`, `k = ⌊√N · √ln N⌋`.
pub fn t8_schedule(big_n: u64) -> Result<(usize, usize)> {
    schedule(
        big_n,
        "Euler",
        &|n, ln| n.sqrt() / ln.sqrt(),
        &|n, ln| n.sqrt() * ln.sqrt(),
    )
}

/// `n = ⌊N^{2/(2+α)} (ln N)^{-2(α+β)/(2+α)}⌋`,
/// `k = ⌊N^{α/(2+α)} (ln N)^{2(α+β)/(2+α)}⌋`.
pub fn galg_schedule(big_n: u64, profile: SmallBallProfile) -> Result<(usize, usize)> {
    let SmallBallProfile { alpha, beta } = profile;
    let e = 2.0 * (alpha + beta) / (2.0 + alpha);
    schedule(
        big_n,
        "Gaussian-subspace",
        &|n, ln| n.powf(2.0 / (2.0 + alpha)) * ln.powf(-e),
        &|n, ln| n.powf(alpha / (2.0 + alpha)) * ln.powf(e),
    )
}
