//! Empirical rate checks: RMSE ladders, widths, quantization rates and
//! least-squares slope fits on log scales.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::measures::{reference_value, sample, DiffusionSpec, MeasureSpec};
use crate::paths::{project, Functional, Grid, NormKind, Point, Subspace};
use crate::quadrature::{classical_mc, euler_mc, galg_schedule, gaussian_subspace_mc, t8_schedule, vr_mc, SmallBallProfile};
use crate::quantize::{
    balanced_axes, distortion_on_pool, exact_voronoi_weights, lloyd, product_quantizer_bm, uniform_grid_codebook,
    voronoi_weights, Codebook, LloydOptions,
};
use crate::rng::SeedSpec;
use crate::stats::{mean_var, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub size: f64,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `ln error` against `ln size`.
    LogLog,
    /// `ln error` against `ln ln size`.
    LogLogInLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub transform: Transform,
    pub points_used: usize,
}

pub fn rate_fit(points: &[RatePoint], transform: Transform) -> Result<RateFit> {
    let mut xy = Vec::with_capacity(points.len());
    for p in points {
        if !(p.size > 0.0) {
            return config(format!("rate point size must be > 0, got {}", p.size));
        }
        if p.error == 0.0 {
            log::warn!("dropping zero error at size {}", p.size);
            continue;
        }
        if !(p.error > 0.0 && p.error.is_finite()) {
            return config(format!("rate point error must be positive, got {}", p.error));
        }
        let x = match transform {
            Transform::LogLog => p.size.ln(),
            Transform::LogLogInLog => {
                if p.size <= std::f64::consts::E {
                    return config(format!("size {} too small for a log-log-in-log fit", p.size));
                }
                p.size.ln().ln()
            }
        };
        xy.push((x, p.error.ln()));
    }
    if xy.len() < 4 {
        return config(format!("a rate fit needs at least 4 usable points, got {}", xy.len()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return config("all sizes coincide");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        transform,
        points_used: xy.len(),
    })
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 30.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// `(Σ_{ℓ>k} λ_ℓ)^{1/2}`, the L2 error of KL truncation of Brownian motion.
pub fn kl_tail_width(k: usize) -> f64 {
    // Σ_{ℓ>k} ((ℓ - 1/2)π)^{-2} = ψ'(k + 1/2) / π²
    (trigamma(k as f64 + 0.5) / (std::f64::consts::PI * std::f64::consts::PI)).sqrt()
}

/// `(E dist^p(X, sub))^{1/p}` with distances from the L2 projection, measured
/// in `norm`. `size` is the subspace dimension.
pub fn width_estimate(measure: &MeasureSpec, sub: &Subspace, norm: NormKind, p: f64, m: usize, seed: SeedSpec) -> Result<RatePoint> {
    if m < 1000 {
        return config(format!("width_estimate needs M >= 1000, got {m}"));
    }
    if !(p > 0.0) {
        return config("p must be > 0");
    }
    let powers = measure.map_draws(seed, 0..m, |_, x| {
        let path = x
            .as_path()
            .ok_or_else(|| Error::Config("widths need a path measure".into()))?;
        Ok(project(path, sub)?.residual.get(norm)?.powf(p))
    })?;
    let (mean, var) = mean_var(&powers);
    let se = (var / m as f64).sqrt();
    let error = mean.powf(1.0 / p);
    let stderr = if mean > 0.0 { se * mean.powf(1.0 / p - 1.0) / p } else { 0.0 };
    Ok(RatePoint {
        size: sub.dim() as f64,
        error,
        stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookSource {
    /// Balanced tensor grid on the unit cube (optimal for d = 1).
    UniformGrid,
    Lloyd,
}

#[derive(Debug, Clone)]
pub enum Algorithm {
    Mc,
    VrMc { source: CodebookSource, lloyd: LloydOptions, weight_samples: usize },
    /// Euler with the `(n, k)` cost schedule; ladder entries are budgets `N`.
    Euler { spec: DiffusionSpec, grid: Arc<Grid> },
    /// Truncated KL sampling with the small-ball schedule; ladder entries are budgets.
    GaussSub { profile: SmallBallProfile, grid: Arc<Grid> },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Mc => "mc",
            Algorithm::VrMc { .. } => "vrmc",
            Algorithm::Euler { .. } => "euler",
            Algorithm::GaussSub { .. } => "gauss-sub",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Reference {
    Exact(f64),
    /// Plain Monte Carlo of the functional under `measure` with `budget` draws.
    MonteCarlo { measure: MeasureSpec, budget: usize },
}

#[derive(Debug, Clone)]
pub struct RateExperiment {
    pub name: String,
    /// Sampling law for `mc` and `vrmc`; ignored by the schedule-driven algorithms.
    pub measure: Option<MeasureSpec>,
    pub functional: Functional,
    pub algorithm: Algorithm,
    pub ladder: Vec<u64>,
    pub replications: usize,
    pub reference: Reference,
    pub transform: Transform,
    pub bracket: Option<(f64, f64)>,
    pub require_decreasing: bool,
    pub seed: SeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub size: u64,
    pub n: usize,
    pub k: usize,
    pub rmse: f64,
    pub stderr: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub name: String,
    pub algorithm: String,
    pub reference: Estimate,
    pub rows: Vec<LadderRow>,
    pub fit: RateFit,
    pub decreasing: bool,
    pub bracket: Option<(f64, f64)>,
    pub pass: bool,
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RateReport {
    pub fn points(&self) -> Vec<RatePoint> {
        self.rows
            .iter()
            .map(|r| RatePoint {
                size: r.size as f64,
                error: r.rmse,
                stderr: r.stderr,
            })
            .collect()
    }

    /// `size,rmse,stderr,slope,pass` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,n,k,rmse,stderr,slope,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.size, r.n, r.k, r.rmse, r.stderr, self.fit.slope, self.pass
            ));
        }
        out
    }
}

/// Codebook of size `n` with weights, as used by `vrmc`.
pub fn vr_codebook(measure: &MeasureSpec, n: usize, source: CodebookSource, opts: &LloydOptions, weight_samples: usize, seed: SeedSpec) -> Result<Codebook> {
    let mut cb = match source {
        CodebookSource::UniformGrid => {
            let d = match measure {
                MeasureSpec::UniformCube { d } => *d,
                _ => return config("grid codebooks are only defined for the uniform cube"),
            };
            uniform_grid_codebook(&balanced_axes(n, d), 2.0)?
        }
        CodebookSource::Lloyd => lloyd(measure, n, 2.0, opts, seed.derive_label("codebook"))?,
    };
    match exact_voronoi_weights(&cb, measure) {
        Ok(w) => cb.set_weights(w)?,
        Err(_) => {
            voronoi_weights(&mut cb, measure, weight_samples, seed.derive_label("weights"))?;
        }
    }
    Ok(cb)
}

pub fn run_rate_experiment(exp: &RateExperiment) -> Result<RateReport> {
    if exp.ladder.len() < 4 {
        return config("the ladder needs at least 4 sizes");
    }
    if exp.replications < 2 {
        return config("need at least 2 replications");
    }
    let reference = match &exp.reference {
        Reference::Exact(v) => Estimate::exact(*v),
        Reference::MonteCarlo { measure, budget } => {
            reference_value(&exp.functional, measure, *budget, exp.seed.derive_label("reference"))?
        }
    };
    let mut rows = Vec::with_capacity(exp.ladder.len());
    for (li, &size) in exp.ladder.iter().enumerate() {
        let ladder_seed = exp.seed.derive_label("ladder").derive(li as u64);
        let (n, k, runner): (usize, usize, Box<dyn Fn(SeedSpec) -> Result<f64> + Sync>) = match &exp.algorithm {
            Algorithm::Mc => {
                let mu = exp.measure.clone().ok_or_else(|| Error::Config("mc needs a measure".into()))?;
                let f = exp.functional.clone();
                let n = size as usize;
                (n, mu.sample_dim(), Box::new(move |s| Ok(classical_mc(&mu, &f, n, s)?.estimate)))
            }
            Algorithm::VrMc { source, lloyd, weight_samples } => {
                let mu = exp.measure.clone().ok_or_else(|| Error::Config("vrmc needs a measure".into()))?;
                let n = size as usize;
                let cb = vr_codebook(&mu, n, *source, lloyd, *weight_samples, ladder_seed)?;
                let f = exp.functional.clone();
                (n, mu.sample_dim(), Box::new(move |s| Ok(vr_mc(&cb, &mu, &f, n, s)?.estimate)))
            }
            Algorithm::Euler { spec, grid } => {
                let (n, k) = t8_schedule(size)?;
                let (spec, grid, f) = (spec.clone(), grid.clone(), exp.functional.clone());
                (n, k, Box::new(move |s| Ok(euler_mc(&spec, &f, k, n, &grid, s)?.estimate)))
            }
            Algorithm::GaussSub { profile, grid } => {
                let (n, k) = galg_schedule(size, *profile)?;
                let sub = crate::paths::make_kl_subspace(grid, k.min(grid.len() - 1))?;
                let f = exp.functional.clone();
                (n, k, Box::new(move |s| Ok(gaussian_subspace_mc(&sub, &f, n, s)?.estimate)))
            }
        };
        let rep_seed = ladder_seed.derive_label("replication");
        let estimates: Vec<f64> = (0..exp.replications)
            .into_par_iter()
            .map(|r| runner(rep_seed.derive(r as u64)))
            .collect::<Result<_>>()?;
        let sq: Vec<f64> = estimates.iter().map(|e| (e - reference.value).powi(2)).collect();
        let (mse, var_sq) = mean_var(&sq);
        let rmse = mse.sqrt();
        let se_rmse = if rmse > 0.0 {
            (var_sq / sq.len() as f64).sqrt() / (2.0 * rmse)
        } else {
            0.0
        };
        rows.push(LadderRow {
            size,
            n,
            k,
            rmse,
            stderr: (se_rmse.powi(2) + reference.stderr.powi(2)).sqrt(),
            mean_estimate: estimates.iter().sum::<f64>() / estimates.len() as f64,
        });
    }
    let smallest = rows.iter().map(|r| r.rmse).fold(f64::INFINITY, f64::min);
    if reference.stderr > 0.1 * smallest {
        return config(format!(
            "reference too noisy: stderr {} exceeds 10% of the smallest RMSE {}",
            reference.stderr, smallest
        ));
    }
    let points: Vec<RatePoint> = rows
        .iter()
        .map(|r| RatePoint {
            size: r.size as f64,
            error: r.rmse,
            stderr: r.stderr,
        })
        .collect();
    let fit = rate_fit(&points, exp.transform)?;
    let decreasing = rows.windows(2).all(|w| w[1].rmse < w[0].rmse);
    let in_bracket = exp.bracket.is_none_or(|(lo, hi)| (lo..=hi).contains(&fit.slope));
    Ok(RateReport {
        name: exp.name.clone(),
        algorithm: exp.algorithm.name().into(),
        reference,
        rows,
        fit,
        decreasing,
        bracket: exp.bracket,
        pass: in_bracket && (decreasing || !exp.require_decreasing),
        master_seed: exp.seed.master_seed,
        stream_index: exp.seed.stream_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationRateReport {
    pub budgets: Vec<usize>,
    /// Actual codebook sizes `Π n_ℓ`.
    pub sizes: Vec<usize>,
    pub distortions: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub fit: RateFit,
}

/// L2 (r = 2) distortion of the Brownian product quantizer at each budget,
/// measured on one shared pool from the `k_terms`-term KL law, fitted
/// against `ln ln n`.
pub fn quantization_rate(budgets: &[usize], k_terms: usize, grid: &Arc<Grid>, pool_size: usize, seed: SeedSpec) -> Result<QuantizationRateReport> {
    let mu = MeasureSpec::brownian_kl(k_terms, grid.clone())?;
    let pool: Vec<Point> = sample(&mu, seed.derive_label("quantization-pool"), pool_size)?;
    let mut sizes = Vec::new();
    let mut distortions = Vec::new();
    let mut stderrs = Vec::new();
    for &b in budgets {
        let cb = product_quantizer_bm(b, k_terms, grid)?;
        let d = distortion_on_pool(&cb, &pool, 2.0)?;
        sizes.push(cb.len());
        distortions.push(d.value);
        stderrs.push(d.stderr);
    }
    let points: Vec<RatePoint> = budgets
        .iter()
        .zip(distortions.iter().zip(&stderrs))
        .map(|(&b, (&e, &s))| RatePoint {
            size: b as f64,
            error: e,
            stderr: s,
        })
        .collect();
    let fit = rate_fit(&points, Transform::LogLogInLog)?;
    Ok(QuantizationRateReport {
        budgets: budgets.to_vec(),
        sizes,
        distortions,
        stderrs,
        fit,
    })
}
