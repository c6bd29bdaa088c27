//! Lower-bound constructions as executable functionals: fooling families with
//! disjoint supports, Brownian increment-sign functionals and their events,
//! the subspace-blind functional, and a Bakhvalov-type certificate.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::measures::MeasureSpec;
use crate::paths::{distance_unchecked, l2_residual, Functional, Grid, NormKind, Path, Point, Subspace};
use crate::quantize::Codebook;
use crate::rng::SeedSpec;
use crate::stats::{estimate, normal_cdf, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Built from the points of a codebook.
    Voronoi { m: usize, norm: NormKind },
    Increment(IncrementFamilySpec),
}

/// 1-Lipschitz functionals with pairwise disjoint supports.
#[derive(Debug, Clone)]
pub struct FoolingFamily {
    pub functionals: Vec<Functional>,
    pub kind: FamilyKind,
}

/// `f_i(x) = ½ max(0, min_{j≠i} ||x - x_j|| - ||x - x_i||)` for each point.
pub fn fooling_family(codebook: &Codebook, norm: NormKind) -> Result<FoolingFamily> {
    let m = codebook.len();
    if m < 2 {
        return config("a fooling family needs at least two points");
    }
    norm.check(&codebook.points()[0])?;
    let points: Arc<Vec<Point>> = Arc::new(codebook.points().to_vec());
    let functionals = (0..m)
        .map(|i| {
            let pts = points.clone();
            Functional::new(format!("fool[{i}]"), 1.0, move |x| {
                pts[0].check_compatible(x)?;
                Ok(fooling_value(&pts, i, x, norm))
            })
        })
        .collect();
    Ok(FoolingFamily {
        functionals,
        kind: FamilyKind::Voronoi { m, norm },
    })
}

fn fooling_value(points: &[Point], i: usize, x: &Point, norm: NormKind) -> f64 {
    let own = distance_unchecked(x, &points[i], norm);
    let other = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, p)| distance_unchecked(x, p, norm))
        .fold(f64::INFINITY, f64::min);
    0.5 * (other - own).max(0.0)
}

/// `Σ δ_i f_i` for signs `δ_i ∈ {-1, +1}`.
pub fn signed_combination(family: &FoolingFamily, signs: &[i8]) -> Result<Functional> {
    if signs.len() != family.functionals.len() || signs.iter().any(|s| s.abs() != 1) {
        return config("need one sign in {-1, +1} per family member");
    }
    let members: Vec<(f64, Functional)> = signs
        .iter()
        .map(|&s| s as f64)
        .zip(family.functionals.iter().cloned())
        .collect();
    Ok(Functional::new("signed_combination", 1.0, move |x| {
        members.iter().try_fold(0.0, |acc, (s, f)| Ok(acc + s * f.eval(x)?))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// Largest number of members positive at one sample.
    pub max_overlap: usize,
    pub samples: usize,
}

pub fn disjoint_support_check(family: &FoolingFamily, measure: &MeasureSpec, m: usize, seed: SeedSpec) -> Result<SupportReport> {
    let counts = measure.map_draws(seed, 0..m, |i, x| {
        family.functionals.iter().try_fold(0usize, |c, f| {
            Ok(c + (f.eval(&x).map_err(|e| e.at_sample(i))? > 0.0) as usize)
        })
    })?;
    Ok(SupportReport {
        max_overlap: counts.into_iter().max().unwrap_or(0),
        samples: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `S(f_m)` for the last point's fooling functional.
    pub lhs: Estimate,
    /// `½ (q(x_1..x_{m-1}) - q(x_1..x_m))`, first-order distortions.
    pub rhs: Estimate,
    pub difference: f64,
    pub combined_stderr: f64,
    pub pass: bool,
}

/// Both sides of `S(f_m) = ½ (q(x_1..x_{m-1}) - q(x_1..x_m))` on one sample pool.
pub fn gap_identity_check(codebook: &Codebook, measure: &MeasureSpec, m_samples: usize, seed: SeedSpec) -> Result<GapReport> {
    let m = codebook.len();
    if m < 2 {
        return config("gap identity needs at least two points");
    }
    if m_samples < 100 {
        return config("gap identity needs at least 100 samples");
    }
    let norm = codebook.norm();
    let pts = codebook.points();
    let rows = measure.map_draws(seed, 0..m_samples, |_, x| {
        pts[0].check_compatible(&x)?;
        let d: Vec<f64> = pts.iter().map(|p| distance_unchecked(&x, p, norm)).collect();
        let q_short = d[..m - 1].iter().copied().fold(f64::INFINITY, f64::min);
        let q_full = q_short.min(d[m - 1]);
        Ok((fooling_value(pts, m - 1, &x, norm), q_short, q_full))
    })?;
    let lhs = estimate(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let short = estimate(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let full = estimate(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    // the half-difference of means; its stderr comes from the paired samples
    let paired = estimate(&rows.iter().map(|r| 0.5 * (r.1 - r.2)).collect::<Vec<_>>());
    let rhs = Estimate {
        value: 0.5 * (short.value - full.value),
        stderr: paired.stderr,
        count: m_samples,
    };
    let difference = lhs.value - rhs.value;
    let combined_stderr = (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt();
    Ok(GapReport {
        lhs,
        rhs,
        difference,
        combined_stderr,
        pass: difference.abs() <= 3.0 * combined_stderr + 1e-12,
    })
}

/// Increment-sign set on the dyadic-like grid `s_i = i ε / ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementFamilySpec {
    pub ell: usize,
    pub eps: f64,
    /// Slack subtracted from each signed increment.
    pub theta: f64,
    /// `true` asks for a negative increment.
    pub alpha: Vec<bool>,
}

impl IncrementFamilySpec {
    pub fn new(ell: usize, eps: f64, theta: f64, alpha: Vec<bool>) -> Result<IncrementFamilySpec> {
        if ell == 0 {
            return config("ell must be >= 1");
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return config(format!("eps must lie in (0, 1], got {eps}"));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return config(format!("theta must be >= 0, got {theta}"));
        }
        if alpha.len() != ell {
            return config(format!("sign vector has length {}, expected {ell}", alpha.len()));
        }
        Ok(IncrementFamilySpec { ell, eps, theta, alpha })
    }

    /// All-positive signs with zero slack.
    pub fn positive(ell: usize, eps: f64) -> Result<IncrementFamilySpec> {
        IncrementFamilySpec::new(ell, eps, 0.0, vec![false; ell])
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        (0..=self.ell).map(|i| i as f64 * self.eps / self.ell as f64).collect()
    }

    fn signs(&self) -> Vec<f64> {
        self.alpha.iter().map(|&a| if a { -1.0 } else { 1.0 }).collect()
    }
}

/// `½ min_i max(0, σ_i (x(s_i) - x(s_{i-1})) - θ)`: the sup-norm distance to
/// the complement of the increment-sign set (1-Lipschitz, sup norm).
pub fn increment_functional(spec: &IncrementFamilySpec, grid: &Arc<Grid>) -> Result<Functional> {
    let idx: Vec<usize> = spec
        .breakpoints()
        .iter()
        .map(|&s| {
            grid.index_of(s)
                .ok_or_else(|| Error::Config(format!("increment point {s} is not on the path grid")))
        })
        .collect::<Result<_>>()?;
    let signs = spec.signs();
    let theta = spec.theta;
    let grid = grid.clone();
    let name = format!("increment(ell={}, eps={}, theta={})", spec.ell, spec.eps, theta);
    Ok(Functional::new(name, 1.0, move |x| {
        let p = x
            .as_path()
            .filter(|p| p.grid().same_as(&grid))
            .ok_or_else(|| Error::Config("increment functional needs a path on its grid".into()))?;
        let slack = idx
            .windows(2)
            .zip(&signs)
            .map(|(w, s)| (s * (p.value(w[1], 0) - p.value(w[0], 0)) - theta).max(0.0))
            .fold(f64::INFINITY, f64::min);
        Ok(0.5 * slack)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub estimate: Estimate,
    /// `p^ℓ` with `p = 1 - Φ(1/ℓ)`.
    pub analytic: f64,
    /// `2^{-ℓ}`.
    pub cap: f64,
    /// `analytic · 2^ℓ`, the constant realised at this `ℓ`.
    pub c0: f64,
    pub pass: bool,
}

/// Probability that every Brownian increment over `[s_{i-1}, s_i]` has the
/// prescribed sign with margin `ε^{1/2} / ℓ^{3/2}`. Increments are sampled
/// from their exact law `N(0, ε/ℓ)`.
pub fn event_probability(ell: usize, eps: f64, m: usize, seed: SeedSpec) -> Result<EventReport> {
    let spec = IncrementFamilySpec::positive(ell, eps)?;
    if m < 10_000 {
        return config(format!("event probability needs M >= 10^4, got {m}"));
    }
    let sd = (eps / ell as f64).sqrt();
    let threshold = eps.sqrt() / (ell as f64).powf(1.5);
    let signs = spec.signs();
    let hits: Vec<f64> = (0..m)
        .map(|i| {
            let mut rng = seed.rng(i as u64);
            let mut ok = true;
            for s in &signs {
                // always consume ℓ normals so draw i is fixed across ℓ-prefixes
                let z: f64 = rng.sample(StandardNormal);
                ok &= s * sd * z >= threshold;
            }
            ok as u8 as f64
        })
        .collect();
    let est = estimate(&hits);
    let p = 1.0 - normal_cdf(1.0 / ell as f64);
    let analytic = p.powi(ell as i32);
    let cap = 0.5f64.powi(ell as i32);
    Ok(EventReport {
        estimate: est,
        analytic,
        cap,
        c0: analytic / cap,
        pass: (est.value - analytic).abs() <= 3.0 * est.stderr && est.value <= cap + 3.0 * est.stderr,
    })
}

/// `¼ √n min_i (S_i - 3 se_i)`, clamped at 0; needs `m ≥ 4n` members.
pub fn bakhvalov_lower_bound(n: usize, family_means: &[Estimate]) -> Result<f64> {
    if n == 0 {
        return config("n must be >= 1");
    }
    if family_means.len() < 4 * n {
        return config(format!(
            "the bound requires m >= 4n family members (m = {}, n = {n})",
            family_means.len()
        ));
    }
    let worst = family_means
        .iter()
        .map(|e| e.value - 3.0 * e.stderr)
        .fold(f64::INFINITY, f64::min);
    Ok(0.25 * (n as f64).sqrt() * worst.max(0.0))
}

/// L2 distance to `sub`; exactly zero at points known to lie in `sub`.
pub fn subspace_blind_functional(sub: &Subspace) -> Functional {
    let sub = Arc::new(sub.clone());
    Functional::new(format!("blind({})", sub.kind()), 1.0, move |x| {
        let p = x
            .as_path()
            .ok_or_else(|| Error::Config("subspace-blind functional needs a path".into()))?;
        if !p.grid().same_as(sub.grid()) {
            return config("path grid does not match subspace grid");
        }
        if p.span().is_some_and(|s| s.id == sub.id()) {
            return Ok(0.0);
        }
        Ok(l2_residual(p, &sub))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub pairs_checked: usize,
    pub flagged: bool,
}

/// Largest `|f(x) - f(y)| / ||x - y||` over independent pairs and over pairs
/// `(x, x + small bump)`.
pub fn lipschitz_check(f: &Functional, measure: &MeasureSpec, norm: NormKind, pairs: usize, seed: SeedSpec) -> Result<LipschitzReport> {
    if pairs < 100 {
        return config(format!("lipschitz_check needs at least 100 pairs, got {pairs}"));
    }
    let a = seed.derive_label("lip-a");
    let b = seed.derive_label("lip-b");
    let bump = seed.derive_label("lip-bump");
    let ratios = measure.map_draws(a, 0..pairs, |i, x| {
        let y = crate::measures::sample_one(measure, b, i)?;
        let z = perturb(&x, &mut bump.rng(i as u64));
        let fx = f.eval(&x)?;
        let mut best = 0.0f64;
        let mut checked = 0;
        for other in [y, z] {
            let d = crate::paths::distance(&x, &other, norm)?;
            if d > 0.0 {
                best = best.max((fx - f.eval(&other)?).abs() / d);
                checked += 1;
            }
        }
        Ok((best, checked))
    })?;
    let max_ratio = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    Ok(LipschitzReport {
        max_ratio,
        pairs_checked: ratios.iter().map(|r| r.1).sum(),
        flagged: max_ratio > f.lip_claim() * (1.0 + 1e-9),
    })
}

fn perturb(x: &Point, rng: &mut impl Rng) -> Point {
    let scale = 10f64.powf(rng.random_range(-4.0..-1.0));
    match x {
        Point::Vector(v) => Point::Vector(v.iter().map(|a| a + scale * rng.sample::<f64, _>(StandardNormal)).collect()),
        Point::Path(p) => {
            // a tent bump of random center, width, height and sign
            let c: f64 = rng.random();
            let w: f64 = rng.random_range(0.01..0.5);
            let h = scale * rng.sample::<f64, _>(StandardNormal);
            let g = p.grid();
            let m = p.dim();
            let mut vals = p.values().to_vec();
            for (j, &t) in g.points().iter().enumerate() {
                let tent = (1.0 - (t - c).abs() / w).max(0.0);
                for k in 0..m {
                    vals[j * m + k] += h * tent;
                }
            }
            Point::Path(Path::from_raw(g.clone(), m, vals, None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{make_kl_subspace, project};

    fn grid() -> Arc<Grid> {
        Grid::uniform(257).unwrap()
    }

    #[test]
    fn fooling_values() {
        let cb = Codebook::scalar(&[0.0, 1.0], 1.0, "u").unwrap();
        let fam = fooling_family(&cb, NormKind::Euclidean).unwrap();
        assert_eq!(fam.functionals[0].eval(&Point::scalar(0.0)).unwrap(), 0.5);
        assert_eq!(fam.functionals[0].eval(&Point::scalar(0.5)).unwrap(), 0.0);
        let u = MeasureSpec::uniform_cube(1).unwrap();
        let rep = disjoint_support_check(&fam, &u, 10_000, SeedSpec::new(1)).unwrap();
        assert!(rep.max_overlap <= 1);
        assert!(fooling_family(&Codebook::scalar(&[0.5], 1.0, "u").unwrap(), NormKind::Euclidean).is_err());
    }

    #[test]
    fn gap_identity_uniform_two_point() {
        let cb = Codebook::scalar(&[0.25, 0.75], 1.0, "u").unwrap();
        let rep = gap_identity_check(&cb, &MeasureSpec::uniform_cube(1).unwrap(), 100_000, SeedSpec::new(2)).unwrap();
        assert!(rep.pass);
        assert!((rep.lhs.value - 3.0 / 32.0).abs() <= 3.0 * rep.lhs.stderr);
        assert!((rep.rhs.value - 3.0 / 32.0).abs() <= 3.0 * rep.rhs.stderr);
        let tiny = Codebook::scalar(&[0.4, 0.4 + 1e-12], 1.0, "u").unwrap();
        let rep = gap_identity_check(&tiny, &MeasureSpec::uniform_cube(1).unwrap(), 1000, SeedSpec::new(3)).unwrap();
        assert!(rep.pass && rep.lhs.value < 1e-11 && rep.rhs.value.abs() < 1e-11);
    }

    #[test]
    fn increment_examples() {
        let g = Grid::uniform(5).unwrap();
        let spec = IncrementFamilySpec::positive(2, 1.0).unwrap();
        let f = increment_functional(&spec, &g).unwrap();
        let line = Point::Path(Path::from_fn(g.clone(), |t| t).unwrap());
        assert_eq!(f.eval(&line).unwrap(), 0.25);
        let vee = Point::Path(Path::from_fn(g.clone(), |t| (t - 0.5).abs()).unwrap());
        assert_eq!(f.eval(&vee).unwrap(), 0.0);
        let neg = IncrementFamilySpec::new(2, 1.0, 0.0, vec![true, false]).unwrap();
        assert_eq!(increment_functional(&neg, &g).unwrap().eval(&vee).unwrap(), 0.25);
        let bad = IncrementFamilySpec::positive(3, 1.0).unwrap();
        assert!(increment_functional(&bad, &g).is_err());
        assert!(IncrementFamilySpec::new(2, 1.0, 0.0, vec![false]).is_err());
        assert!(IncrementFamilySpec::positive(2, 0.0).is_err());
    }

    #[test]
    fn increment_lipschitz_sup() {
        let spec = IncrementFamilySpec::new(4, 1.0, 0.01, vec![false, true, false, true]).unwrap();
        let f = increment_functional(&spec, &grid()).unwrap();
        let bm = MeasureSpec::brownian_grid(grid()).unwrap();
        let rep = lipschitz_check(&f, &bm, NormKind::Sup, 2000, SeedSpec::new(4)).unwrap();
        assert!(!rep.flagged, "{rep:?}");
    }

    #[test]
    fn events() {
        for (ell, p) in [(1usize, 0.158_655_253_931_457), (2, 0.095_195_5)] {
            let rep = event_probability(ell, 1.0, 100_000, SeedSpec::new(5)).unwrap();
            assert!((rep.analytic - p).abs() < 1e-6, "{rep:?}");
            assert!(rep.pass, "{rep:?}");
            assert!(rep.analytic <= rep.cap);
        }
        assert!(event_probability(1, 1.0, 100, SeedSpec::new(0)).is_err());
    }

    #[test]
    fn bakhvalov() {
        let exact = |v| Estimate::exact(v);
        let means = vec![exact(3.0 / 32.0); 4];
        assert!((bakhvalov_lower_bound(1, &means).unwrap() - 3.0 / 128.0).abs() < 1e-15);
        let means8 = vec![exact(3.0 / 32.0); 8];
        let r = bakhvalov_lower_bound(2, &means8).unwrap() / bakhvalov_lower_bound(1, &means8).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let err = bakhvalov_lower_bound(2, &means).unwrap_err().to_string();
        assert!(err.contains("m >= 4n"));
        let noisy = vec![Estimate { value: 0.01, stderr: 0.01, count: 10 }; 4];
        assert_eq!(bakhvalov_lower_bound(1, &noisy).unwrap(), 0.0);
    }

    #[test]
    fn blind_functional() {
        let sub = make_kl_subspace(&grid(), 3).unwrap();
        let f0 = subspace_blind_functional(&sub);
        let inside = sub.synthesize(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(f0.eval(&Point::Path(inside.clone())).unwrap(), 0.0);
        // the same values without the membership tag
        let untagged = Path::from_raw(grid(), 1, inside.values().to_vec(), None);
        assert!(f0.eval(&Point::Path(untagged)).unwrap() < 1e-10);
        let x = Path::from_fn(grid(), |t| t * t).unwrap();
        let r = f0.eval(&Point::Path(x.clone())).unwrap();
        assert!((r - project(&x, &sub).unwrap().residual.l2).abs() < 1e-12);
        let one = make_kl_subspace(&grid(), 1).unwrap();
        let bm = MeasureSpec::brownian_kl(200, grid()).unwrap();
        let est = crate::measures::reference_value(&subspace_blind_functional(&one), &bm, 20_000, SeedSpec::new(6)).unwrap();
        assert!(est.value > 0.0 && est.value <= 0.3078, "{est:?}");
    }

    #[test]
    fn lipschitz_flags_planted_violation() {
        let g = grid();
        let bm = MeasureSpec::brownian_grid(g).unwrap();
        let twice = Functional::new("2x(1)", 1.0, |x| Ok(2.0 * x.as_path().unwrap().at(1.0, 0)));
        let rep = lipschitz_check(&twice, &bm, NormKind::Sup, 500, SeedSpec::new(7)).unwrap();
        assert!(rep.flagged && rep.max_ratio > 1.5, "{rep:?}");
        let sup = crate::functionals::sup_norm();
        assert!(!lipschitz_check(&sup, &bm, NormKind::Sup, 500, SeedSpec::new(8)).unwrap().flagged);
    }
}
